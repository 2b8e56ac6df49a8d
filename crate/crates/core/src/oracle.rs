//! Stochastic oracle: exact OU sampling of `a^{(0)}` on a small lattice,
//! the Duhamel recursion for `a^{(1)}, a^{(2)}, …` by the composite
//! trapezoid rule, and replicate averages of `a^{(m)}(τ₁) ā^{(n)}(τ₂)`.
//!
//! This shares no code with the diagram side apart from the model profiles.

use crate::error::{Error, Result};
use crate::mc::{derive_seed, run_chunks_multi, Accum};
use crate::model::{DensityModel, ThetaKind};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::collections::HashMap;

/// Lattice modes `s = k / L` with `|s| ≤ cutoff`, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeSet {
    pub d: usize,
    pub period: f64,
    pub cutoff: f64,
    pub modes: Vec<Vec<i64>>,
}

impl ModeSet {
    pub fn new(d: usize, period: f64, cutoff: f64) -> Self {
        let r = (cutoff * period + 1e-9).floor() as i64;
        let r2 = (cutoff * period) * (cutoff * period) + 1e-9;
        let mut modes = Vec::new();
        let mut k = vec![-r; d];
        'outer: loop {
            if k.iter().map(|&x| (x * x) as f64).sum::<f64>() <= r2 {
                modes.push(k.clone());
            }
            for c in (0..d).rev() {
                if k[c] < r {
                    k[c] += 1;
                    continue 'outer;
                }
                k[c] = -r;
            }
            break;
        }
        ModeSet { d, period, cutoff, modes }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `|s|²` of mode `i`.
    pub fn norm_sq(&self, i: usize) -> f64 {
        self.modes[i].iter().map(|&x| (x * x) as f64).sum::<f64>() / (self.period * self.period)
    }

    pub fn index_of(&self, s: &[f64]) -> Option<usize> {
        let k: Vec<i64> = s.iter().map(|&x| (x * self.period).round() as i64).collect();
        let on_lattice = s.iter().zip(&k).all(|(&x, &ki)| (x * self.period - ki as f64).abs() < 1e-9);
        if !on_lattice {
            return None;
        }
        self.modes.iter().position(|m| *m == k)
    }
}

/// One interaction term of `𝒴_s`: `a_{s₁} a_{s₂} ā_{s₃}` with phase
/// frequency `ω = |s₁|² + |s₂|² − |s₃|² − |s|²`.
#[derive(Clone, Copy, Debug)]
struct Triple {
    i1: usize,
    i2: usize,
    i3: usize,
    omega: usize,
}

/// Interaction table on a mode set.
#[derive(Clone, Debug)]
struct Interactions {
    per_mode: Vec<Vec<Triple>>,
    /// Distinct ω values.
    omegas: Vec<f64>,
}

impl Interactions {
    fn new(set: &ModeSet) -> Self {
        let index: HashMap<&[i64], usize> = set.modes.iter().enumerate().map(|(i, m)| (m.as_slice(), i)).collect();
        let l2 = set.period * set.period;
        let mut omega_ids: HashMap<i64, usize> = HashMap::new();
        let mut omegas = Vec::new();
        let mut per_mode = vec![Vec::new(); set.len()];
        let sq = |k: &[i64]| k.iter().map(|x| x * x).sum::<i64>();
        for (is, s) in set.modes.iter().enumerate() {
            for (i1, s1) in set.modes.iter().enumerate() {
                // {s₁, s₂} ≠ {s₃, s} reduces to s₁ ∉ {s₃, s}
                if s1 == s {
                    continue;
                }
                for (i2, s2) in set.modes.iter().enumerate() {
                    let s3: Vec<i64> = (0..set.d).map(|a| s1[a] + s2[a] - s[a]).collect();
                    if s3 == *s1 {
                        continue;
                    }
                    let Some(&i3) = index.get(s3.as_slice()) else { continue };
                    let w = sq(s1) + sq(s2) - sq(&s3) - sq(s);
                    let next = omegas.len();
                    let omega = *omega_ids.entry(w).or_insert_with(|| {
                        omegas.push(w as f64 / l2);
                        next
                    });
                    per_mode[is].push(Triple { i1, i2, i3, omega });
                }
            }
        }
        Interactions { per_mode, omegas }
    }
}

/// A sampled path on a uniform time grid over `[−T, τ_max]`.
#[derive(Clone, Debug)]
pub struct OraclePath {
    pub modes: ModeSet,
    pub times: Vec<f64>,
    /// `values[j][mode][node]` holds `a^{(j)}`; orders not yet filled are absent.
    pub values: Vec<Vec<Vec<Complex64>>>,
    /// Unit complex normals driving each OU step, `[mode][step]`.
    pub innovations: Vec<Vec<Complex64>>,
}

/// Uniform grid of `nodes` points on `[−T, τ_max]`.
pub fn time_grid(horizon: f64, tau_max: f64, nodes: usize) -> Vec<f64> {
    let h = (tau_max + horizon) / (nodes - 1) as f64;
    (0..nodes).map(|k| -horizon + h * k as f64).collect()
}

fn check_oracle_model(model: &DensityModel) -> Result<()> {
    model.validate()?;
    if !model.horizon.is_finite() {
        return Err(Error::Precondition("the oracle needs a finite horizon T".into()));
    }
    if model.theta != ThetaKind::Exp {
        return Err(Error::Precondition("the oracle supports θ = exp only".into()));
    }
    Ok(())
}

/// Exact OU sampling: `a(t + h) = e^{−γh} a(t) + sqrt(B (1 − e^{−2γh})) ζ`
/// with `B = b²/γ` and `𝔼|ζ|² = 1`, starting from `a(−T) = 0`.
pub fn sample_a0(model: &DensityModel, modes: &ModeSet, times: &[f64], seed: u64) -> Result<OraclePath> {
    check_oracle_model(model)?;
    if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("the time grid must be increasing with at least 2 nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_a0_with(model, modes, times, &mut rng))
}

fn sample_a0_with<R: Rng + ?Sized>(model: &DensityModel, modes: &ModeSet, times: &[f64], rng: &mut R) -> OraclePath {
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut a0 = Vec::with_capacity(modes.len());
    let mut innovations = Vec::with_capacity(modes.len());
    for i in 0..modes.len() {
        let s2 = modes.norm_sq(i);
        let g = model.gamma_sq(s2);
        let big_b = model.big_b_sq(s2);
        let mut path = Vec::with_capacity(times.len());
        let mut noise = Vec::with_capacity(times.len() - 1);
        let mut a = Complex64::new(0.0, 0.0);
        let mut t = -model.horizon;
        for &tk in times {
            let h = tk - t;
            if h > 0.0 {
                let zeta = Complex64::new(
                    rng.sample::<f64, _>(StandardNormal) * half,
                    rng.sample::<f64, _>(StandardNormal) * half,
                );
                a = a * (-g * h).exp() + zeta * (big_b * (-(-2.0 * g * h).exp_m1())).sqrt();
                noise.push(zeta);
            }
            path.push(a);
            t = tk;
        }
        a0.push(path);
        innovations.push(noise);
    }
    OraclePath {
        modes: modes.clone(),
        times: times.to_vec(),
        values: vec![a0],
        innovations,
    }
}

impl OraclePath {
    /// Every other node (the grid must have an odd node count).
    pub fn coarsen(&self) -> Result<OraclePath> {
        if self.times.len().is_multiple_of(2) {
            return Err(Error::Precondition("coarsening needs an odd number of nodes".into()));
        }
        let pick = |v: &Vec<Complex64>| v.iter().step_by(2).copied().collect::<Vec<_>>();
        Ok(OraclePath {
            modes: self.modes.clone(),
            times: self.times.iter().step_by(2).copied().collect(),
            values: vec![self.values[0].iter().map(pick).collect()],
            innovations: Vec::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.values.len() - 1
    }
}

/// Fill `a^{(m)}` from the lower orders by the trapezoid recursion
/// `A_{k+1} = e^{−γh} A_k + i (h/2) (e^{−γh} Y_k + Y_{k+1})`, which is the
/// composite trapezoid rule of the Duhamel integral at every node.
pub fn duhamel_order(path: &mut OraclePath, model: &DensityModel, m: usize) -> Result<()> {
    check_oracle_model(model)?;
    if m == 0 || path.values.len() != m {
        return Err(Error::Precondition(format!(
            "order {m} needs orders 0..{} filled",
            m.saturating_sub(1)
        )));
    }
    let inter = Interactions::new(&path.modes);
    let all: Vec<usize> = (0..path.modes.len()).collect();
    let phases = phase_table(&inter, &path.times, model.nu);
    fill_order(path, model, &inter, &phases, m, &all);
    Ok(())
}

fn phase_table(inter: &Interactions, times: &[f64], nu: f64) -> Vec<Vec<Complex64>> {
    inter
        .omegas
        .iter()
        .map(|&w| times.iter().map(|&t| Complex64::from_polar(1.0, w * t / nu)).collect())
        .collect()
}

/// Ordered compositions `m₁ + m₂ + m₃ = total`.
fn compositions(total: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..=total {
        for b in 0..=total - a {
            out.push([a, b, total - a - b]);
        }
    }
    out
}

fn fill_order(path: &mut OraclePath, model: &DensityModel, inter: &Interactions, phases: &[Vec<Complex64>], m: usize, targets: &[usize]) {
    let nodes = path.times.len();
    let h = path.times[1] - path.times[0];
    let norm = path.modes.period.powi(-(path.modes.d as i32));
    let comps = compositions(m - 1);
    let mut out = vec![Vec::new(); path.modes.len()];
    for &is in targets {
        let g = model.gamma_sq(path.modes.norm_sq(is));
        let decay = (-g * h).exp();
        let v = &path.values;
        let y = |k: usize| -> Complex64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in &inter.per_mode[is] {
                let mut prod = Complex64::new(0.0, 0.0);
                for c in &comps {
                    prod += v[c[0]][t.i1][k] * v[c[1]][t.i2][k] * v[c[2]][t.i3][k].conj();
                }
                acc += prod * phases[t.omega][k];
            }
            acc * norm
        };
        let mut col = Vec::with_capacity(nodes);
        let mut a = Complex64::new(0.0, 0.0);
        let mut y_prev = y(0);
        col.push(a);
        for k in 1..nodes {
            let y_k = y(k);
            a = a * decay + Complex64::new(0.0, 0.5 * h) * (y_prev * decay + y_k);
            col.push(a);
            y_prev = y_k;
        }
        out[is] = col;
    }
    path.values.push(out);
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OracleOptions {
    pub replicates: u64,
    pub seed: u64,
    /// Nodes of the fine grid (odd; the coarse grid takes every other node).
    pub nodes: usize,
    pub cutoff: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            replicates: 20_000,
            seed: 1,
            nodes: 65,
            cutoff: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleEstimate {
    /// Richardson combination `(4 A_h − A_{2h}) / 3` per replicate.
    pub value: Complex64,
    pub stderr: [f64; 2],
    /// Plain trapezoid estimate on the fine grid.
    pub fine: Complex64,
    /// `A_h − A_{2h}` averaged over replicates.
    pub refinement_delta: Complex64,
    /// `𝔼 a^{(m)} a^{(n)}` without conjugation (should vanish).
    pub unconjugated: Complex64,
    pub unconjugated_stderr: [f64; 2],
    pub samples: u64,
    pub nodes: usize,
    pub cutoff: f64,
    pub modes: usize,
}

impl OracleEstimate {
    pub fn stderr_norm(&self) -> f64 {
        self.stderr[0].hypot(self.stderr[1])
    }
}

/// `𝔼 a_s^{(m)}(τ₁) ā_s^{(n)}(τ₂)` by replicates.
pub fn mc_correlation(m: usize, n: usize, model: &DensityModel, s: &[f64], opts: &OracleOptions) -> Result<OracleEstimate> {
    mc_correlation_sum(&[(m, n)], model, s, opts)
}

/// `Σ_k 𝔼 a_s^{(m_k)}(τ₁) ā_s^{(n_k)}(τ₂)` on the same replicates.
pub fn mc_correlation_sum(pairs: &[(usize, usize)], model: &DensityModel, s: &[f64], opts: &OracleOptions) -> Result<OracleEstimate> {
    check_oracle_model(model)?;
    if s.len() != model.d {
        return Err(Error::Dimension {
            expected: model.d,
            got: s.len(),
        });
    }
    if opts.nodes < 5 || opts.nodes.is_multiple_of(2) {
        return Err(Error::Precondition("the oracle grid needs an odd node count ≥ 5".into()));
    }
    let modes = ModeSet::new(model.d, model.period, opts.cutoff);
    let target = modes
        .index_of(s)
        .ok_or_else(|| Error::Precondition(format!("s = {s:?} is not a lattice mode within the cutoff")))?;
    let tau_max = model.tau1.max(model.tau2);
    let times = time_grid(model.horizon, tau_max, opts.nodes);
    let node_of = |tau: f64, stride: usize| -> Result<usize> {
        let h = times[1] - times[0];
        let k = ((tau + model.horizon) / h).round();
        if ((tau + model.horizon) / h - k).abs() > 1e-9 || !(k as usize).is_multiple_of(stride) {
            return Err(Error::Precondition(format!("τ = {tau} is not a node of the coarse grid")));
        }
        Ok(k as usize / stride)
    };
    let (k1, k2) = (node_of(model.tau1, 2)?, node_of(model.tau2, 2)?);
    let top = pairs.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0);
    let inter = Interactions::new(&modes);
    let fine_phases = phase_table(&inter, &times, model.nu);
    let coarse_times: Vec<f64> = times.iter().step_by(2).copied().collect();
    let coarse_phases = phase_table(&inter, &coarse_times, model.nu);
    let all: Vec<usize> = (0..modes.len()).collect();
    let estimate = |path: &mut OraclePath, phases: &[Vec<Complex64>], stride: usize| -> (Complex64, Complex64) {
        for j in 1..=top {
            let targets = if j == top { std::slice::from_ref(&target) } else { &all[..] };
            fill_order(path, model, &inter, phases, j, targets);
        }
        let (a1, a2) = (k1 * 2 / stride, k2 * 2 / stride);
        let mut conj = Complex64::new(0.0, 0.0);
        let mut plain = Complex64::new(0.0, 0.0);
        for &(a, b) in pairs {
            let x = path.values[a][target][a1];
            let y = path.values[b][target][a2];
            conj += x * y.conj();
            plain += x * y;
        }
        (conj, plain)
    };
    let acc = run_chunks_multi(opts.replicates, opts.seed, 4, |rng, count| {
        let mut out = vec![Accum::default(); 4];
        for _ in 0..count {
            let mut fine = sample_a0_with(model, &modes, &times, rng);
            let mut coarse = fine.coarsen()?;
            let (f, fp) = estimate(&mut fine, &fine_phases, 1);
            let (c, _) = estimate(&mut coarse, &coarse_phases, 2);
            out[0].push((f * 4.0 - c) / 3.0);
            out[1].push(f);
            out[2].push(f - c);
            out[3].push(fp);
        }
        Ok(out)
    })?;
    Ok(OracleEstimate {
        value: acc[0].mean(),
        stderr: acc[0].stderr(),
        fine: acc[1].mean(),
        refinement_delta: acc[2].mean(),
        unconjugated: acc[3].mean(),
        unconjugated_stderr: acc[3].stderr(),
        samples: acc[0].n,
        nodes: opts.nodes,
        cutoff: opts.cutoff,
        modes: modes.len(),
    })
}

/// One replicate's path with orders `0..=m` filled, for inspection.
pub fn sample_path(model: &DensityModel, opts: &OracleOptions, m: usize, replicate: u64) -> Result<OraclePath> {
    let modes = ModeSet::new(model.d, model.period, opts.cutoff);
    let times = time_grid(model.horizon, model.tau1.max(model.tau2), opts.nodes);
    let mut path = sample_a0(model, &modes, &times, derive_seed(opts.seed, replicate))?;
    for j in 1..=m {
        duhamel_order(&mut path, model, j)?;
    }
    Ok(path)
}
