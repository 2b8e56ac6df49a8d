//! Worked (m, n) = (2, 2) example: one true Feynman diagram with its cycle,
//! α, ξ table, ω forms, density edges, six admissible orderings and the
//! D/Γ tables of the time kernel. `regress` recomputes everything from the
//! diagram and compares entry by entry.

use crate::cycle::{hamilton_cycle, validate_cycle, HamiltonCycle};
use crate::density::DiagramContext;
use crate::diagram::build;
use crate::error::Result;
use crate::phase::{alpha_matrix, xi_map};
use crate::wick::{EdgeKind, FeynmanDiagram};
use serde::Serialize;
use std::sync::Arc;

/// Degree compositions: `c_0 → (1,0,0)`, then `c_1 → (0,0,0)`; the mirrored
/// component is the same shape hanging from `c̄_0`.
pub const SHAPE: [[u32; 3]; 2] = [[1, 0, 0], [0, 0, 0]];

/// `(conjugated leaf, non-conjugated leaf)`.
pub const PAIRING: [(usize, usize); 5] = [(1, 7), (3, 2), (6, 4), (7, 5), (8, 3)];

pub const CYCLE: [usize; 9] = [0, 6, 4, 1, 7, 5, 8, 3, 2];

pub const ALPHA: [[i8; 4]; 4] = [[0, 1, 1, 0], [-1, 0, -1, 0], [-1, 1, 0, -1], [0, 0, 1, 0]];

/// `ξ_j = s + Σ_i XI[j][i] z_i`.
pub const XI: [[i8; 4]; 9] = [
    [0, 0, 0, 0],
    [0, 1, 1, 0],
    [-1, 0, 0, 0],
    [-1, 1, 0, 0],
    [0, 0, 1, 0],
    [-1, 1, 1, -1],
    [0, 0, 0, 0],
    [-1, 1, 1, 0],
    [-1, 1, 0, -1],
];

/// `ω_j = 2 z_j · Σ_i OMEGA[j][i] z_i`.
pub const OMEGA: [[i8; 4]; 4] = [[0, 1, 1, 0], [-1, 0, -1, 0], [-1, 1, 0, -1], [0, 0, 1, 0]];

/// Density edges as `(ξ index, diagram edge?, slot, slot)`; diagram edges
/// list the real end first. Slots: 0 = τ₁, 1 = τ₂, k + 1 = l_k.
pub const EDGES: [(usize, bool, usize, usize); 9] = [
    (0, true, 0, 2),
    (1, true, 2, 3),
    (6, true, 1, 4),
    (8, true, 4, 5),
    (2, false, 2, 3),
    (3, false, 3, 5),
    (4, false, 3, 4),
    (5, false, 4, 5),
    (7, false, 2, 5),
];

pub const ORDERS: [[usize; 4]; 6] = [[1, 2, 3, 4], [1, 3, 2, 4], [1, 3, 4, 2], [3, 1, 2, 4], [3, 1, 4, 2], [3, 4, 1, 2]];

/// Sign of `±γ_s(τ₁ − τ₂)` attached to each ordering when `τ₁ ≠ τ₂`.
pub const ROOT_SIGN: [i8; 6] = [1, 1, 1, -1, -1, -1];

/// `D[j][i]`: ω coefficients of the i-th listed factor of ordering j; the
/// listed factors run from the last gap backwards (i = 0 is the factor
/// with only `ω_{q(N)}`). Equal to ours modulo `Σ_j ω_j = 0`.
pub const D_TABLE: [[[i8; 4]; 3]; 6] = [
    [[0, 0, 0, 1], [0, 0, 1, 1], [-1, 0, 0, 0]],
    [[0, 0, 0, 1], [0, 1, 0, 1], [-1, 0, 0, 0]],
    [[0, 1, 0, 0], [0, 1, 0, 1], [-1, 0, 0, 0]],
    [[0, 0, 0, 1], [0, 1, 0, 1], [0, 0, -1, 0]],
    [[0, 1, 0, 0], [0, 1, 0, 1], [0, 0, -1, 0]],
    [[0, 1, 0, 0], [1, 1, 0, 0], [0, 0, -1, 0]],
];

/// `Γ[j][i]`: ξ indices of the summed γ's, `0` standing for `γ_s`.
pub const GAMMA_TABLE: [[&[usize]; 3]; 6] = [
    [&[3, 5, 7, 8], &[0, 3, 4, 7], &[0, 1, 2, 7]],
    [&[3, 5, 7, 8], &[1, 2, 4, 5, 7, 8], &[0, 1, 2, 7]],
    [&[1, 2, 3, 4], &[1, 2, 4, 5, 7, 8], &[0, 1, 2, 7]],
    [&[3, 5, 7, 8], &[1, 2, 4, 5, 7, 8], &[0, 4, 5, 8]],
    [&[1, 2, 3, 4], &[1, 2, 4, 5, 7, 8], &[0, 4, 5, 8]],
    [&[1, 2, 3, 4], &[0, 3, 4, 7], &[0, 4, 5, 8]],
];

pub fn reference_diagram() -> Result<FeynmanDiagram> {
    let base = Arc::new(build(2, 2, &SHAPE, &SHAPE));
    FeynmanDiagram::new(base, PAIRING.to_vec())
}

pub fn reference_context() -> Result<DiagramContext> {
    let fd = reference_diagram()?;
    let cycle = HamiltonCycle::from_reduced(&fd, &CYCLE)?;
    DiagramContext::with_cycle(fd, cycle)
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Regression {
    pub checks: Vec<Check>,
}

impl Regression {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

fn check(name: &str, ok: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        ok,
        detail,
    }
}

/// Integer vectors equal modulo the all-ones vector.
fn equal_mod_ones(a: &[i8], b: &[i8]) -> bool {
    let diff: Vec<i32> = a.iter().zip(b).map(|(&x, &y)| i32::from(x) - i32::from(y)).collect();
    diff.iter().all(|&v| v == diff[0])
}

pub fn regress() -> Result<Regression> {
    let fd = reference_diagram()?;
    let mut checks = Vec::new();

    let canonical = hamilton_cycle(&fd)?;
    let paper = HamiltonCycle::from_reduced(&fd, &CYCLE)?;
    let violations = validate_cycle(&fd, &paper);
    checks.push(check("cycle valid", violations.is_empty(), format!("{violations:?}")));
    checks.push(check(
        "canonical cycle",
        canonical.reduced() == CYCLE,
        format!("{:?}", canonical.reduced()),
    ));

    let alpha = alpha_matrix(&fd, &paper);
    let rows: Vec<Vec<i8>> = ALPHA.iter().map(|r| r.to_vec()).collect();
    checks.push(check("alpha", alpha.rows() == rows, format!("{:?}", alpha.rows())));

    let xi = xi_map(&fd, &paper);
    let table: Vec<Vec<i8>> = XI.iter().map(|r| r.to_vec()).collect();
    checks.push(check("xi table", xi.coeffs == table, format!("{:?}", xi.coeffs)));

    let omega_ok = (0..4).all(|j| alpha.row(j) == OMEGA[j]);
    checks.push(check("omega forms", omega_ok, format!("{:?}", alpha.rows())));

    let ctx = DiagramContext::with_cycle(fd, paper)?;
    let mut ours: Vec<(usize, bool, usize, usize)> = ctx
        .edges
        .iter()
        .map(|e| {
            let diag = e.kind == EdgeKind::Diagram;
            let (a, b) = if diag {
                e.real_virtual_slots()
            } else {
                (e.bar_slot.min(e.plain_slot), e.bar_slot.max(e.plain_slot))
            };
            (e.plain, diag, a, b)
        })
        .collect();
    ours.sort_unstable();
    let mut expected = EDGES.to_vec();
    expected.sort_unstable();
    checks.push(check("density edges", ours == expected, format!("{ours:?}")));

    let orders: Vec<Vec<usize>> = ORDERS.iter().map(|q| q.to_vec()).collect();
    checks.push(check("admissible orders", ctx.orders == orders, format!("{:?}", ctx.orders)));

    let n = ctx.order();
    let mut d_ok = ctx.tables.len() == 6;
    let mut g_ok = d_ok;
    let mut detail = String::new();
    for (j, table) in ctx.tables.iter().enumerate().take(6) {
        for i in 0..3 {
            let f = &table[n - 1 - i];
            let mut v = [0i8; 4];
            for &b in &f.omega_blocks {
                v[b - 1] += 1;
            }
            if !equal_mod_ones(&v, &D_TABLE[j][i]) {
                d_ok = false;
                detail.push_str(&format!("D[{j}][{i}] = {v:?}; "));
            }
            let mut g: Vec<usize> = f
                .gamma_xi
                .iter()
                .map(|&x| if ctx.phase.xi.coeffs[x].iter().all(|&c| c == 0) { 0 } else { x })
                .collect();
            g.sort_unstable();
            if g != GAMMA_TABLE[j][i] {
                g_ok = false;
                detail.push_str(&format!("Gamma[{j}][{i}] = {g:?}; "));
            }
        }
    }
    checks.push(check("kernel D table", d_ok, detail.clone()));
    checks.push(check("kernel Gamma table", g_ok, detail));
    Ok(Regression { checks })
}
