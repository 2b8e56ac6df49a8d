//! wasm-bindgen surface for the static demo page in `www/`. Every export
//! returns a JSON (or DOT) string; errors become JS exceptions.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;
use wavediag::density::DiagramContext;
use wavediag::evaluate::{shipped_quotients, McOptions};
use wavediag::export::{cycle_dot, feynman_dot, sweep_rows};
use wavediag::model::DensityModel;
use wavediag::spectral::{classify_generic_rank, decompose_and_rank, spectral_check};
use wavediag::sweep::{dyadic_grid, scaling_sweep, SweepTarget};
use wavediag::wick::{feynman_set, phase_constant};

const MAX_ORDER: usize = 5;

type Out = Result<String, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn js(r: Out) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

fn context(m: usize, n: usize, id: &str) -> Result<DiagramContext, String> {
    if m + n > MAX_ORDER {
        return Err(err(format!("m + n is capped at {MAX_ORDER} in the browser")));
    }
    let fd = feynman_set(m, n)
        .into_iter()
        .find(|f| f.id() == id)
        .ok_or_else(|| err(format!("no Feynman diagram {id} in ({m}, {n})")))?;
    DiagramContext::new(fd).map_err(err)
}

fn enumerate_json(m: usize, n: usize) -> Out {
    if m + n > MAX_ORDER {
        return Err(err(format!("m + n is capped at {MAX_ORDER} in the browser")));
    }
    let mut rows = Vec::new();
    for fd in feynman_set(m, n) {
        let ctx = DiagramContext::new(fd).map_err(err)?;
        let g = classify_generic_rank(&ctx.phase.alpha);
        rows.push(json!({ "id": ctx.id(), "true": ctx.is_true(), "rank": g.k, "f2": g.f2_index.is_some() }));
    }
    Ok(Value::Array(rows).to_string())
}

fn alpha_json(m: usize, n: usize, id: &str, d: usize) -> Out {
    let ctx = context(m, n, id)?;
    let c = phase_constant(&ctx.fd);
    let xi: Vec<String> = (0..ctx.phase.xi.coeffs.len()).map(|j| ctx.phase.xi.describe(j)).collect();
    Ok(json!({
        "id": ctx.id(),
        "alpha": ctx.phase.alpha.rows(),
        "ranks": decompose_and_rank(&ctx.phase.alpha, d.max(1)),
        "xi": xi,
        "c": [c.re, c.im],
        "true": ctx.is_true(),
    })
    .to_string())
}

fn dot_json(m: usize, n: usize, id: &str, kind: &str) -> Out {
    let ctx = context(m, n, id)?;
    match kind {
        "feynman" => Ok(feynman_dot(&ctx.fd)),
        "cycle" => Ok(cycle_dot(&ctx.fd, &ctx.cycle)),
        other => Err(err(format!("unknown kind {other}"))),
    }
}

fn spectrum_json(m: usize, n: usize, id: &str, l: Vec<f64>) -> Out {
    let ctx = context(m, n, id)?;
    let want = ctx.phase.alpha.n;
    if l.len() != want {
        return Err(err(format!("l needs {want} entries, got {}", l.len())));
    }
    serde_json::to_string(&spectral_check(&ctx.phase.alpha, &l)).map_err(err)
}

/// Feynman diagrams of `(m, n)`: id, truth and generic rank.
#[wasm_bindgen]
pub fn enumerate(m: usize, n: usize) -> Result<String, JsError> {
    js(enumerate_json(m, n))
}

/// α, the exponent prediction, the ξ table and the phase constant.
#[wasm_bindgen]
pub fn alpha(m: usize, n: usize, id: &str, d: usize) -> Result<String, JsError> {
    js(alpha_json(m, n, id, d))
}

/// Graphviz source; `kind` is `feynman` or `cycle`.
#[wasm_bindgen]
pub fn dot(m: usize, n: usize, id: &str, kind: &str) -> Result<String, JsError> {
    js(dot_json(m, n, id, kind))
}

/// Eigenvalues of `Q(l)` with `𝒦(l)` and the trace-identity residual.
#[wasm_bindgen]
pub fn spectrum(m: usize, n: usize, id: &str, l: Vec<f64>) -> Result<String, JsError> {
    js(spectrum_json(m, n, id, l))
}

/// ν-sweep of a shipped quotient on `2^-from … 2^-to` with its fit.
#[wasm_bindgen]
pub fn quotient_curve(name: &str, from: i32, to: i32, samples: u32, seed: u32) -> Result<String, JsError> {
    js(quotient_curve_json(name, from, to, samples, seed))
}

/// Names of the shipped quotient problems.
#[wasm_bindgen]
pub fn quotient_names() -> String {
    let names: Vec<&str> = shipped_quotients().iter().map(|(k, _)| *k).collect();
    json!(names).to_string()
}

fn quotient_curve_json(name: &str, from: i32, to: i32, samples: u32, seed: u32) -> Out {
    let (_, problem) = shipped_quotients()
        .into_iter()
        .find(|(k, _)| *k == name)
        .ok_or_else(|| err(format!("unknown quotient {name}")))?;
    let opts = McOptions {
        samples: u64::from(samples),
        seed: u64::from(seed),
        ..Default::default()
    };
    let grid = dyadic_grid(from, to);
    let r = scaling_sweep(&SweepTarget::Quotient(&problem), &DensityModel::default(), &[], &grid, &opts).map_err(err)?;
    Ok(json!({
        "rows": sweep_rows(&r),
        "fit": r.fit,
        "predicted": r.predicted,
        "rank": problem.rank(),
    })
    .to_string())
}
