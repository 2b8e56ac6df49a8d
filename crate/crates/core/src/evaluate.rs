//! Lattice sums `J_s(𝔉)`, continuum integrals `J̃_s(𝔉)`, correlations,
//! spectrum orders and quotient integrals with quadratic forms.

use crate::density::{kernel_sum_filled, time_integral_nested, DiagramContext, Scratch};
use crate::error::{Error, Result};
use crate::mc::{derive_seed, run_chunks, Accum, IntegralEstimate, Method};
use crate::model::{DensityModel, ThetaKind};
use crate::quad::Tolerance;
use crate::spectral::{exact_rank, quotient_exponent, Exponent};
use crate::wick::{feynman_set, phase_constant, EdgeKind};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug)]
pub struct McOptions {
    pub samples: u64,
    pub seed: u64,
    /// Time quadrature tolerance, used off the kernel route.
    pub tol: Tolerance,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: 1_000_000,
            seed: 1,
            tol: Tolerance {
                abs: 1e-13,
                rel: 1e-7,
                max_panels: 4000,
            },
        }
    }
}

fn check_model(model: &DensityModel, s: &[f64]) -> Result<()> {
    model.validate()?;
    if s.len() != model.d {
        return Err(Error::Dimension {
            expected: model.d,
            got: s.len(),
        });
    }
    Ok(())
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Gaussian importance proposal matched to `∏_{E_L} e^{−2r|ξ_ψ(z)|²}`:
/// per spatial component, precision `P = 4r Σ c_ψ c_ψᵀ` over the ξ
/// coefficient rows of the leaf edges.
#[derive(Clone, Debug)]
pub struct Proposal {
    n: usize,
    d: usize,
    leaf_xi: Vec<usize>,
    rate: f64,
    mean: Vec<f64>,
    /// `L^{-T}` for `P = L Lᵀ`.
    factor: DMatrix<f64>,
    /// `ln ∫ ∏ e^{−2r|ξ_ψ|²} dz`.
    pub log_norm: f64,
}

impl Proposal {
    pub fn new(ctx: &DiagramContext, model: &DensityModel, s: &[f64]) -> Result<Self> {
        let n = ctx.order();
        let d = model.d;
        let rate = model.b.rate;
        let leaf_xi: Vec<usize> = ctx.edges.iter().filter(|e| e.kind == EdgeKind::Leaf).map(|e| e.plain).collect();
        let mut p = DMatrix::<f64>::zeros(n, n);
        let mut csum = DVector::<f64>::zeros(n);
        for &j in &leaf_xi {
            let c = &ctx.phase.xi.coeffs[j];
            for a in 0..n {
                csum[a] += f64::from(c[a]);
                for b in 0..n {
                    p[(a, b)] += 4.0 * rate * f64::from(c[a]) * f64::from(c[b]);
                }
            }
        }
        let chol = p
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("leaf weights of {} do not confine z", ctx.id())))?;
        let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let unit = chol.solve(&(csum * (-4.0 * rate)));
        let quad_unit = unit.dot(&(&p * &unit));
        let factor = chol
            .l()
            .transpose()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular proposal factor".into()))?;
        let mut mean = vec![0.0; n * d];
        let mut log_norm = 0.0;
        for (a, &sa) in s.iter().enumerate() {
            for i in 0..n {
                mean[i * d + a] = sa * unit[i];
            }
            log_norm +=
                0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * ln_det + 0.5 * sa * sa * quad_unit - 2.0 * rate * sa * sa * leaf_xi.len() as f64;
        }
        Ok(Proposal {
            n,
            d,
            leaf_xi,
            rate,
            mean,
            factor,
            log_norm,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, eps: &mut [f64], z: &mut [f64]) {
        for a in 0..self.d {
            for e in eps.iter_mut() {
                *e = rng.sample(StandardNormal);
            }
            for i in 0..self.n {
                let mut v = self.mean[i * self.d + a];
                for (j, e) in eps[..self.n].iter().enumerate().skip(i) {
                    v += self.factor[(i, j)] * e;
                }
                z[i * self.d + a] = v;
            }
        }
    }

    /// `Σ_{E_L} −2r|ξ_ψ|²`.
    pub fn log_weight(&self, xi: &[f64]) -> f64 {
        let d = self.d;
        -2.0 * self.rate * self.leaf_xi.iter().map(|&j| sq(&xi[j * d..(j + 1) * d])).sum::<f64>()
    }

    /// Marginal standard deviation of `z_i` (any component).
    pub fn sigma(&self, i: usize) -> f64 {
        (i..self.n).map(|j| self.factor[(i, j)].powi(2)).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn inv_gamma(&self, sc: &Scratch) -> f64 {
        self.leaf_xi.iter().map(|&j| 1.0 / sc.gamma[j]).product()
    }
}

/// `ln A^{2(N+1)}` of the leaf weights.
fn amplitude_log(model: &DensityModel, n: usize) -> f64 {
    2.0 * (n + 1) as f64 * model.b.amplitude.ln()
}

/// Integrand of `J̃` divided by the proposal density at `z` (the caller
/// has already filled `sc`).
fn weighted_sample(
    ctx: &DiagramContext,
    model: &DensityModel,
    prop: &Proposal,
    sc: &Scratch,
    log_scale: f64,
    tol: Tolerance,
) -> Result<Complex64> {
    if model.kernel_route() {
        Ok(kernel_sum_filled(ctx, sc, model.nu) * (prop.inv_gamma(sc) * log_scale.exp()))
    } else {
        let t = time_integral_nested(ctx, model, sc, tol)?;
        Ok(t * (prop.log_norm - prop.log_weight(&sc.xi)).exp())
    }
}

/// Monte Carlo estimate of `J̃_s(𝔉) = ∫ dz ∏_{E_L} B(ξ_ψ) Σ_q I_s^q(𝔉; z)`
/// (kernel route) or of the full `(l, z)` integral with nested time
/// quadrature per sample otherwise.
pub fn continuum_j(ctx: &DiagramContext, model: &DensityModel, s: &[f64], opts: &McOptions) -> Result<IntegralEstimate> {
    check_model(model, s)?;
    if model.theta == ThetaKind::Indicator {
        return Err(Error::Precondition(
            "the resonance indicator has no continuum integral; use lattice mode".into(),
        ));
    }
    if !ctx.is_true() {
        return Ok(IntegralEstimate::zero("alpha has a zero row: the admissible z-set is empty"));
    }
    let n = ctx.order();
    let prop = Proposal::new(ctx, model, s)?;
    let log_scale = prop.log_norm + amplitude_log(model, n);
    let acc = run_chunks(opts.samples, opts.seed, |rng, count| {
        let mut sc = Scratch::default();
        let mut z = vec![0.0; n * model.d];
        let mut eps = vec![0.0; n];
        let mut acc = Accum::default();
        for _ in 0..count {
            prop.sample(rng, &mut eps, &mut z);
            sc.fill(ctx, model, s, &z);
            acc.push(weighted_sample(ctx, model, &prop, &sc, log_scale, opts.tol)?);
        }
        Ok(acc)
    })?;
    Ok(IntegralEstimate {
        value: acc.mean(),
        stderr: acc.stderr(),
        samples: acc.n,
        seed: opts.seed,
        method: if model.kernel_route() {
            Method::KernelMc
        } else {
            Method::TimeQuadratureMc
        },
        truncation_bound: 0.0,
        note: None,
    })
}

/// Estimate a sum `Σ_k w_k J̃_s(𝔉_k)` from one shared stream of `z` draws
/// per diagram: sample `i` uses the same normal deviates for every diagram,
/// which correlates the terms and shrinks the error of a cancelling sum.
pub fn continuum_sum_common(
    terms: &[(Complex64, &DiagramContext)],
    model: &DensityModel,
    s: &[f64],
    opts: &McOptions,
) -> Result<IntegralEstimate> {
    check_model(model, s)?;
    if !model.kernel_route() {
        return Err(Error::Precondition("common-sample sums need T = inf and tau1 = tau2".into()));
    }
    let mut live = Vec::new();
    for &(w, ctx) in terms {
        if ctx.is_true() {
            let prop = Proposal::new(ctx, model, s)?;
            let log_scale = prop.log_norm + amplitude_log(model, ctx.order());
            live.push((w, ctx, prop, log_scale));
        }
    }
    let n = live.first().map_or(0, |t| t.1.order());
    if live.iter().any(|t| t.1.order() != n) {
        return Err(Error::Precondition("common-sample sums need diagrams of one order".into()));
    }
    let acc = run_chunks(opts.samples, opts.seed, |rng, count| {
        let mut sc = Scratch::default();
        let mut z = vec![0.0; n * model.d];
        let mut eps = vec![0.0; n * model.d];
        let mut acc = Accum::default();
        for _ in 0..count {
            for e in eps.iter_mut() {
                *e = rng.sample(StandardNormal);
            }
            let mut total = Complex64::new(0.0, 0.0);
            for (w, ctx, prop, log_scale) in &live {
                prop.sample_from(&eps, &mut z);
                sc.fill(ctx, model, s, &z);
                total += *w * weighted_sample(ctx, model, prop, &sc, *log_scale, opts.tol)?;
            }
            acc.push(total);
        }
        Ok(acc)
    })?;
    Ok(IntegralEstimate {
        value: acc.mean(),
        stderr: acc.stderr(),
        samples: acc.n,
        seed: opts.seed,
        method: Method::KernelMc,
        truncation_bound: 0.0,
        note: Some(format!("{} diagrams on common draws", live.len())),
    })
}

impl Proposal {
    fn sample_from(&self, normals: &[f64], z: &mut [f64]) {
        for a in 0..self.d {
            for i in 0..self.n {
                let mut v = self.mean[i * self.d + a];
                for j in i..self.n {
                    v += self.factor[(i, j)] * normals[a * self.n + j];
                }
                z[i * self.d + a] = v;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LatticeOptions {
    /// Keep only `z` with every `|ξ_j(z)| ≤ cutoff` (a finite mode set).
    pub mode_cutoff: Option<f64>,
    /// Requested tail bound relative to the a-priori bound of the integral.
    pub tail_tol: f64,
    /// Largest admissible box half-width in `z` units.
    pub max_radius: f64,
    pub tol: Tolerance,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        LatticeOptions {
            mode_cutoff: None,
            tail_tol: 1e-8,
            max_radius: 12.0,
            tol: Tolerance {
                abs: 1e-14,
                rel: 1e-8,
                max_panels: 4000,
            },
        }
    }
}

/// One pass over the lattice box: the sum with the excluded hyperplanes
/// removed, the full trapezoid sum, and the excluded part on its own.
#[derive(Clone, Debug, Serialize)]
pub struct LatticeSums {
    pub lattice: IntegralEstimate,
    pub trapezoid: IntegralEstimate,
    pub excluded: Complex64,
    pub half_width: i64,
}

/// Upper bound of `P(|X| > x)` for a standard normal (Mills ratio).
fn normal_two_sided_tail(x: f64) -> f64 {
    if x <= 0.5 {
        1.0
    } else {
        (2.0 * (-0.5 * x * x).exp() / (x * (2.0 * PI).sqrt())).min(1.0)
    }
}

fn lattice_mode(s: &[f64], period: f64) -> Result<Vec<i64>> {
    s.iter()
        .map(|&x| {
            let k = (x * period).round();
            if (x * period - k).abs() > 1e-9 {
                Err(Error::Precondition(format!("s = {x} is not on the lattice Z/{period}")))
            } else {
                Ok(k as i64)
            }
        })
        .collect()
}

/// Half-width (in lattice units) of a box containing every `z` whose ξ's
/// stay within the cutoff, via the pseudo-inverse of the ξ coefficients.
fn cutoff_half_width(ctx: &DiagramContext, s: &[f64], cutoff: f64, period: f64) -> Result<i64> {
    let n = ctx.order();
    let rows = &ctx.phase.xi.coeffs;
    let c = DMatrix::from_fn(rows.len(), n, |j, i| f64::from(rows[j][i]));
    let ctc = c.transpose() * &c;
    let pinv = ctc
        .cholesky()
        .ok_or_else(|| Error::Numerical("ξ coefficients are rank deficient".into()))?
        .solve(&c.transpose());
    let smax = s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let w = (0..n).map(|i| pinv.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    Ok((period * w * (cutoff + smax) + 1e-9).ceil() as i64)
}

/// Lattice sum (5.18 style): `L^{−dN} Σ_{z ∈ 𝒵 ∩ Z_L^{dN}}` of the time
/// integral, with the exclusions `z_j ≠ 0`, `Σ_i α_ji z_i ≠ 0` tested in
/// integer arithmetic. The trapezoid sum keeps the excluded points.
pub fn lattice_sums(ctx: &DiagramContext, model: &DensityModel, s: &[f64], opts: &LatticeOptions) -> Result<LatticeSums> {
    check_model(model, s)?;
    let period = model.period;
    let smode = lattice_mode(s, period)?;
    let n = ctx.order();
    let d = model.d;
    if !ctx.is_true() {
        let z = IntegralEstimate::zero("alpha has a zero row: the admissible z-set is empty");
        return Ok(LatticeSums {
            lattice: z.clone(),
            trapezoid: z,
            excluded: Complex64::new(0.0, 0.0),
            half_width: 0,
        });
    }
    let prop = Proposal::new(ctx, model, s)?;
    let gamma_s = model.gamma_sq(sq(s));
    let bound = (prop.log_norm + amplitude_log(model, n)).exp() * ctx.orders.len() as f64 / (2.0 * gamma_s);
    let tail_at = |k: i64| -> f64 {
        let r = (k - 1) as f64 / period;
        let mut t = 0.0;
        for i in 0..n {
            for a in 0..d {
                t += normal_two_sided_tail((r - prop.mean()[i * d + a].abs()) / prop.sigma(i));
            }
        }
        bound * t.min(1.0)
    };
    let (half_width, tail) = match opts.mode_cutoff {
        Some(c) => (cutoff_half_width(ctx, s, c, period)?, 0.0),
        None => {
            let mut k = 1i64;
            loop {
                if tail_at(k) <= opts.tail_tol * bound {
                    break (k, tail_at(k));
                }
                k += 1;
                if k as f64 / period > opts.max_radius {
                    return Err(Error::Numerical(format!(
                        "lattice cutoff {} cannot meet the tail bound {:.1e}",
                        opts.max_radius, opts.tail_tol
                    )));
                }
            }
        }
    };
    let cut2 = opts.mode_cutoff.map(|c| {
        let r = c * period;
        r * r + 1e-9
    });
    let dim = n * d;
    let xi_rows = &ctx.phase.xi.coeffs;
    let alpha = &ctx.phase.alpha;
    let mut k = vec![-half_width; dim];
    let mut z = vec![0.0; dim];
    let mut kxi = vec![0i64; d];
    let mut sc = Scratch::default();
    let mut kept = Complex64::new(0.0, 0.0);
    let mut excluded = Complex64::new(0.0, 0.0);
    let mut points = 0u64;
    'outer: loop {
        let in_modes = match cut2 {
            None => true,
            Some(c2) => xi_rows.iter().all(|row| {
                kxi.copy_from_slice(&smode);
                for (i, &ci) in row.iter().enumerate() {
                    if ci != 0 {
                        for a in 0..d {
                            kxi[a] += i64::from(ci) * k[i * d + a];
                        }
                    }
                }
                (kxi.iter().map(|&x| (x * x) as f64).sum::<f64>()) <= c2
            }),
        };
        let resonant = model.theta == ThetaKind::Exp
            || (0..n).all(|j| {
                let mut w = 0i64;
                for i in 0..n {
                    let a = i64::from(alpha.get(j, i));
                    if a != 0 {
                        w += a * (0..d).map(|c| k[j * d + c] * k[i * d + c]).sum::<i64>();
                    }
                }
                w == 0
            });
        if in_modes && resonant {
            let hits_plane = (0..n).any(|j| {
                let zero_z = (0..d).all(|a| k[j * d + a] == 0);
                let zero_az = (0..d).all(|a| (0..n).map(|i| i64::from(alpha.get(j, i)) * k[i * d + a]).sum::<i64>() == 0);
                zero_z || zero_az
            });
            for (zi, &ki) in z.iter_mut().zip(&k) {
                *zi = ki as f64 / period;
            }
            sc.fill(ctx, model, s, &z);
            if model.theta == ThetaKind::Indicator {
                sc.omega.iter_mut().for_each(|w| *w = 0.0);
            }
            let v = if model.kernel_route() {
                let w: f64 = (prop.log_weight(&sc.xi) + amplitude_log(model, n)).exp() * prop.inv_gamma(&sc);
                kernel_sum_filled(ctx, &sc, model.nu) * w
            } else {
                time_integral_nested(ctx, model, &sc, opts.tol)?
            };
            if hits_plane {
                excluded += v;
            } else {
                kept += v;
            }
            points += 1;
        }
        for c in (0..dim).rev() {
            if k[c] < half_width {
                k[c] += 1;
                continue 'outer;
            }
            k[c] = -half_width;
        }
        break;
    }
    let norm = period.powi(-((d * n) as i32));
    let make = |v: Complex64, method| IntegralEstimate {
        value: v * norm,
        stderr: [0.0, 0.0],
        samples: points,
        seed: 0,
        method,
        truncation_bound: tail,
        note: Some(format!("box half-width {half_width}/{period}")),
    };
    Ok(LatticeSums {
        lattice: make(kept, Method::Lattice),
        trapezoid: make(kept + excluded, Method::Trapezoid),
        excluded: excluded * norm,
        half_width,
    })
}

pub fn lattice_j(ctx: &DiagramContext, model: &DensityModel, s: &[f64], opts: &LatticeOptions) -> Result<IntegralEstimate> {
    Ok(lattice_sums(ctx, model, s, opts)?.lattice)
}

#[derive(Clone, Copy, Debug)]
pub enum Mode {
    Lattice(LatticeOptions),
    Continuum(McOptions),
}

#[derive(Clone, Debug, Serialize)]
pub struct Term {
    pub id: String,
    pub c: Complex64,
    pub estimate: IntegralEstimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct Correlation {
    pub m: usize,
    pub n: usize,
    pub total: IntegralEstimate,
    pub terms: Vec<Term>,
}

/// Contexts of the true diagrams of `𝔉_{m,n}`.
pub fn true_contexts(m: usize, n: usize) -> Result<Vec<DiagramContext>> {
    let mut out = Vec::new();
    for fd in feynman_set(m, n) {
        let ctx = DiagramContext::new(fd)?;
        if ctx.is_true() {
            out.push(ctx);
        }
    }
    Ok(out)
}

/// `𝔼 a_s^{(0)}(τ₁) ā_s^{(0)}(τ₂)`.
pub fn zeroth_correlation(model: &DensityModel, s: &[f64]) -> f64 {
    let s2 = sq(s);
    let g = model.gamma_sq(s2);
    let mut w = (-g * (model.tau1 - model.tau2).abs()).exp();
    if model.horizon.is_finite() {
        w -= (-g * (model.tau1 + model.tau2 + 2.0 * model.horizon)).exp();
    }
    model.big_b_sq(s2) * w
}

/// `𝔼 a_s^{(m)}(τ₁) ā_s^{(n)}(τ₂) = Σ_{𝔉 true} c_𝔉 J_s(𝔉)`.
pub fn correlation(m: usize, n: usize, model: &DensityModel, s: &[f64], mode: &Mode) -> Result<Correlation> {
    check_model(model, s)?;
    if m + n == 0 {
        let total = IntegralEstimate::exact(Complex64::new(zeroth_correlation(model, s), 0.0), Some("closed form".into()));
        return Ok(Correlation {
            m,
            n,
            total,
            terms: Vec::new(),
        });
    }
    if m + n == 1 {
        let total = IntegralEstimate::zero("the Feynman set is empty when m + n = 1");
        return Ok(Correlation {
            m,
            n,
            total,
            terms: Vec::new(),
        });
    }
    let mut terms = Vec::new();
    for (i, ctx) in true_contexts(m, n)?.iter().enumerate() {
        let estimate = match mode {
            Mode::Lattice(o) => lattice_j(ctx, model, s, o)?,
            Mode::Continuum(o) => continuum_j(
                ctx,
                model,
                s,
                &McOptions {
                    seed: derive_seed(o.seed, i as u64),
                    ..*o
                },
            )?,
        };
        terms.push(Term {
            id: ctx.id(),
            c: phase_constant(&ctx.fd),
            estimate,
        });
    }
    let (method, seed) = match mode {
        Mode::Lattice(_) => (Method::Lattice, 0),
        Mode::Continuum(o) => (
            if model.kernel_route() {
                Method::KernelMc
            } else {
                Method::TimeQuadratureMc
            },
            o.seed,
        ),
    };
    let scaled: Vec<IntegralEstimate> = terms.iter().map(|t| t.estimate.scaled(t.c)).collect();
    let mut total = IntegralEstimate::sum(&scaled, method, seed);
    total.note = Some(format!("{} true diagrams", terms.len()));
    Ok(Correlation { m, n, total, terms })
}

/// `n_s^k(τ) = Σ_{k₁+k₂=k} 𝔼 a_s^{(k₁)}(τ) ā_s^{(k₂)}(τ)` at `τ = τ₁`.
pub fn spectrum_order(k: usize, model: &DensityModel, s: &[f64], mode: &Mode) -> Result<IntegralEstimate> {
    let mut at = model.clone();
    at.tau2 = at.tau1;
    let parts: Vec<IntegralEstimate> = (0..=k)
        .map(|k1| correlation(k1, k - k1, &at, s, mode).map(|c| c.total))
        .collect::<Result<_>>()?;
    let method = parts
        .iter()
        .map(|p| p.method)
        .find(|&m| m != Method::Exact)
        .unwrap_or(Method::Exact);
    let seed = match mode {
        Mode::Continuum(o) => o.seed,
        Mode::Lattice(_) => 0,
    };
    Ok(IntegralEstimate::sum(&parts, method, seed))
}

/// `Γ_k(z) = c0 + c1 |z|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFn {
    pub c0: f64,
    #[serde(default)]
    pub c1: f64,
}

impl GammaFn {
    pub fn constant(c0: f64) -> Self {
        GammaFn { c0, c1: 0.0 }
    }
}

/// `∫_{R^{dM}} G(z) / ∏_k (iν⁻¹ Q_k(z) + Γ_k(z)) dz` with
/// `Q_k(z) = Σ_ij A_k[i][j] z_i·z_j` and `G(z) = amplitude · e^{−|z|²/2σ²}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientProblem {
    pub m: usize,
    pub d: usize,
    pub forms: Vec<Vec<Vec<i64>>>,
    pub gammas: Vec<GammaFn>,
    pub amplitude: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuotientEstimate {
    pub estimate: IntegralEstimate,
    /// Exact rank of the span of the forms.
    pub rank: usize,
    pub predicted: Exponent,
    /// `∫ G / ∏ Γ_k`, an upper bound of `|J^ν|`.
    pub modulus_bound: f64,
}

impl QuotientProblem {
    pub fn validate(&self) -> Result<()> {
        if self.forms.is_empty() || self.forms.len() != self.gammas.len() {
            return Err(Error::Precondition("need one Γ per form and at least one form".into()));
        }
        for (k, a) in self.forms.iter().enumerate() {
            if a.len() != self.m || a.iter().any(|r| r.len() != self.m) {
                return Err(Error::Dimension {
                    expected: self.m,
                    got: a.len(),
                });
            }
            if (0..self.m).any(|i| (0..i).any(|j| a[i][j] != a[j][i])) {
                return Err(Error::Precondition(format!("form {k} is not symmetric")));
            }
            let tr: i64 = (0..self.m).map(|i| a[i][i]).sum();
            if tr != 0 {
                return Err(Error::Precondition(format!("form {k} has trace {tr}; forms must be traceless")));
            }
        }
        if self.gammas.iter().any(|g| !(g.c0 > 0.0 && g.c1 >= 0.0)) {
            return Err(Error::Precondition("each Γ_k must be bounded below by a positive constant".into()));
        }
        if !(self.sigma > 0.0 && self.amplitude >= 0.0) || self.d == 0 || self.m == 0 {
            return Err(Error::Precondition("weight needs σ > 0, amplitude ≥ 0, d, M ≥ 1".into()));
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        let rows: Vec<Vec<i128>> = self
            .forms
            .iter()
            .map(|a| a.iter().flatten().map(|&x| i128::from(x)).collect())
            .collect();
        exact_rank(&rows)
    }

    fn log_weight_mass(&self) -> f64 {
        self.amplitude.ln() + 0.5 * (self.m * self.d) as f64 * (2.0 * PI * self.sigma * self.sigma).ln()
    }
}

pub fn quotient_integral(problem: &QuotientProblem, nu: f64, opts: &McOptions) -> Result<QuotientEstimate> {
    problem.validate()?;
    if nu.is_nan() || nu <= 0.0 {
        return Err(Error::Precondition(format!("ν = {nu} must be positive")));
    }
    let rank = problem.rank();
    let predicted = quotient_exponent(rank, problem.d);
    if problem.amplitude == 0.0 {
        return Ok(QuotientEstimate {
            estimate: IntegralEstimate::zero("G vanishes identically"),
            rank,
            predicted,
            modulus_bound: 0.0,
        });
    }
    let (m, d) = (problem.m, problem.d);
    let mass = problem.log_weight_mass().exp();
    let modulus_bound = mass / problem.gammas.iter().map(|g| g.c0).product::<f64>();
    let acc = run_chunks(opts.samples, opts.seed, |rng, count| {
        let mut z = vec![0.0; m * d];
        let mut acc = Accum::default();
        for _ in 0..count {
            for v in z.iter_mut() {
                *v = problem.sigma * rng.sample::<f64, _>(StandardNormal);
            }
            let z2 = sq(&z);
            let mut f = Complex64::new(mass, 0.0);
            for (a, g) in problem.forms.iter().zip(&problem.gammas) {
                let mut q = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        if a[i][j] != 0 {
                            q += a[i][j] as f64 * (0..d).map(|c| z[i * d + c] * z[j * d + c]).sum::<f64>();
                        }
                    }
                }
                f /= Complex64::new(g.c0 + g.c1 * z2, q / nu);
            }
            acc.push(f);
        }
        Ok(acc)
    })?;
    Ok(QuotientEstimate {
        estimate: IntegralEstimate {
            value: acc.mean(),
            stderr: acc.stderr(),
            samples: acc.n,
            seed: opts.seed,
            method: Method::QuotientMc,
            truncation_bound: 0.0,
            note: None,
        },
        rank,
        predicted,
        modulus_bound,
    })
}

/// The shipped quotient test problems: `(name, problem)`.
pub fn shipped_quotients() -> Vec<(&'static str, QuotientProblem)> {
    let anti = vec![vec![0, 1], vec![1, 0]];
    let gauss = |m, d, forms: Vec<Vec<Vec<i64>>>| QuotientProblem {
        m,
        d,
        gammas: vec![GammaFn::constant(1.0); forms.len()],
        forms,
        amplitude: 1.0,
        sigma: 1.0,
    };
    vec![
        ("antidiag-d1", gauss(2, 1, vec![anti.clone()])),
        ("antidiag-d2", gauss(2, 2, vec![anti])),
        (
            "pair-d1",
            gauss(
                3,
                1,
                vec![
                    vec![vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 0]],
                    vec![vec![0, 0, 1], vec![0, 0, 0], vec![1, 0, 0]],
                ],
            ),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::kernel_sum;
    use crate::wick::feynman_set;

    fn ctx11(i: usize) -> DiagramContext {
        DiagramContext::new(feynman_set(1, 1).swap_remove(i)).unwrap()
    }

    #[test]
    fn proposal_normalizes_leaf_weight() {
        // Compare log_norm with a brute-force grid integral in d = 1.
        let c = ctx11(0);
        let model = DensityModel::default();
        let s = [0.3];
        let prop = Proposal::new(&c, &model, &s).unwrap();
        let h = 0.02;
        let mut total = 0.0;
        for a in -300..=300 {
            for b in -300..=300 {
                let z = [a as f64 * h, b as f64 * h];
                let xi = c.phase.xi.eval(&s, &z);
                total += prop.log_weight(&xi).exp() * h * h;
            }
        }
        assert!((total.ln() - prop.log_norm).abs() < 1e-8, "{} {}", total.ln(), prop.log_norm);
    }

    #[test]
    fn continuum_matches_grid_quadrature() {
        let c = ctx11(1);
        let model = DensityModel::default().with_nu(0.5);
        let s = [0.2];
        let est = continuum_j(
            &c,
            &model,
            &s,
            &McOptions {
                samples: 200_000,
                ..Default::default()
            },
        )
        .unwrap();
        let h = 0.03;
        let mut grid = Complex64::new(0.0, 0.0);
        for a in -200..=200 {
            for b in -200..=200 {
                let z = [a as f64 * h, b as f64 * h];
                let w = crate::density::leaf_weight(&c.edges, &model, &c.phase.xi.eval(&s, &z));
                grid += kernel_sum(&c, &model, &s, &z).unwrap() * w * h * h;
            }
        }
        let err = (est.value - grid).norm();
        assert!(
            err < 4.0 * est.stderr_norm() + 1e-12,
            "{} vs {grid} ± {}",
            est.value,
            est.stderr_norm()
        );
    }

    #[test]
    fn zero_row_gives_exact_zero() {
        for fd in feynman_set(3, 0) {
            let c = DiagramContext::new(fd).unwrap();
            if !c.is_true() {
                let e = continuum_j(&c, &DensityModel::default(), &[0.0], &McOptions::default()).unwrap();
                assert_eq!(e.value, Complex64::new(0.0, 0.0));
                assert_eq!(e.method, Method::Exact);
                return;
            }
        }
        panic!("(3,0) has no non-true diagram");
    }

    #[test]
    fn correlation_of_order_one_is_zero() {
        let c = correlation(1, 0, &DensityModel::default(), &[0.0], &Mode::Continuum(McOptions::default())).unwrap();
        assert_eq!(c.total.value, Complex64::new(0.0, 0.0));
        assert!(c.terms.is_empty());
    }

    #[test]
    fn spectrum_order_zero_is_closed_form() {
        let model = DensityModel {
            horizon: 2.0,
            tau1: 0.5,
            ..Default::default()
        };
        let s = [0.5];
        let e = spectrum_order(0, &model, &s, &Mode::Lattice(LatticeOptions::default())).unwrap();
        let g = model.gamma_sq(0.25);
        let expect = model.big_b_sq(0.25) * (1.0 - (-2.0 * g * 2.5).exp());
        assert!((e.value.re - expect).abs() < 1e-15);
    }

    #[test]
    fn indicator_without_resonances_is_zero() {
        // Off-lattice-resonant parameters: (1,1) at L = 2 with a cutoff that
        // admits no z with every ω_j = 0 apart from excluded points.
        let model = DensityModel {
            theta: ThetaKind::Indicator,
            ..Default::default()
        };
        let c = ctx11(0);
        let opts = LatticeOptions {
            mode_cutoff: Some(0.5),
            ..Default::default()
        };
        let e = lattice_j(&c, &model, &[0.0], &opts).unwrap();
        assert_eq!(e.value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn lattice_requires_lattice_mode() {
        let c = ctx11(0);
        let r = lattice_j(&c, &DensityModel::default(), &[0.3], &LatticeOptions::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn quotient_rejects_trace() {
        let mut p = shipped_quotients()[0].1.clone();
        p.forms[0][0][0] = 1;
        assert!(matches!(
            quotient_integral(&p, 0.1, &McOptions::default()),
            Err(Error::Precondition(_))
        ));
        let mut z = shipped_quotients()[0].1.clone();
        z.amplitude = 0.0;
        let e = quotient_integral(&z, 0.1, &McOptions::default()).unwrap();
        assert_eq!(e.estimate.value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn shipped_quotient_ranks() {
        let r: Vec<usize> = shipped_quotients().iter().map(|(_, p)| p.rank()).collect();
        assert_eq!(r, vec![1, 1, 2]);
    }
}
