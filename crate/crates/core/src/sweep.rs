//! ν-sweeps and weighted fits of `|J| ≈ a ν^p (ln 1/ν)^q`.

use crate::density::DiagramContext;
use crate::error::{Error, Result};
use crate::evaluate::{continuum_j, continuum_sum_common, correlation, quotient_integral, McOptions, Mode, QuotientProblem};
use crate::gauss_time::{constant_gamma, continuum_j_gaussian, family_sum_gaussian};
use crate::mc::IntegralEstimate;
use crate::model::{DensityModel, ThetaKind};
use crate::spectral::{chi_log, decompose_and_rank, Exponent};
use num_complex::Complex64;
use serde::Serialize;

/// Relative errors below this are treated as this (exact or lattice points).
const REL_FLOOR: f64 = 1e-4;
/// A point whose relative error exceeds this makes the fit unstable.
const REL_CEILING: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerFit {
    pub q: u8,
    pub p: f64,
    pub p_err: f64,
    pub log_a: f64,
    pub chi2: f64,
    /// `χ² + 2k` with `k = 2` fitted parameters.
    pub aic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub preferred: PowerFit,
    pub fits: [PowerFit; 2],
    /// `sqrt(χ²/(n − 2))` of the preferred fit.
    pub residual: f64,
}

impl FitReport {
    pub fn fit(&self, q: u8) -> &PowerFit {
        &self.fits[usize::from(q)]
    }
}

fn wls(x: &[f64], y: &[f64], sig: &[f64], q: u8) -> PowerFit {
    let w: Vec<f64> = sig.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let p = sxy / sxx;
    let log_a = my - p * mx;
    let chi2: f64 = x.iter().zip(y).zip(&w).map(|((a, c), b)| b * (c - log_a - p * a).powi(2)).sum();
    let dof = (x.len() - 2).max(1) as f64;
    let inflate = (chi2 / dof).max(1.0).sqrt();
    PowerFit {
        q,
        p,
        p_err: inflate / sxx.sqrt(),
        log_a,
        chi2,
        aic: chi2 + 4.0,
    }
}

/// Fit `ln|J| = ln a + p ln ν + q ln ln(1/ν)` for `q = 0, 1` by weighted
/// least squares; the smaller AIC wins.
pub fn fit_power_law(nus: &[f64], values: &[f64], errors: &[f64]) -> Result<FitReport> {
    if nus.len() < 3 || nus.len() != values.len() || nus.len() != errors.len() {
        return Err(Error::Precondition("fit needs at least 3 matching points".into()));
    }
    let mut x = Vec::new();
    let mut sig = Vec::new();
    let mut ly = Vec::new();
    let mut ll = Vec::new();
    for ((&nu, &v), &e) in nus.iter().zip(values).zip(errors) {
        if !(nu > 0.0 && nu < 1.0) {
            return Err(Error::Precondition(format!("ν = {nu} outside (0, 1)")));
        }
        let rel = e / v.abs();
        if v == 0.0 || !rel.is_finite() || rel > REL_CEILING {
            return Err(Error::Numerical(format!(
                "MC noise too large for a stable fit at ν = {nu}: |J| = {v:.3e} ± {e:.3e}"
            )));
        }
        x.push(nu.ln());
        ly.push(v.abs().ln());
        ll.push((1.0 / nu).ln().ln());
        sig.push(rel.max(REL_FLOOR));
    }
    let y1: Vec<f64> = ly.iter().zip(&ll).map(|(a, b)| a - b).collect();
    let fits = [wls(&x, &ly, &sig, 0), wls(&x, &y1, &sig, 1)];
    let preferred = if fits[1].aic < fits[0].aic { fits[1] } else { fits[0] };
    let residual = (preferred.chi2 / (x.len() - 2).max(1) as f64).sqrt();
    Ok(FitReport { preferred, fits, residual })
}

pub enum SweepTarget<'a> {
    Diagram(&'a DiagramContext),
    Correlation {
        m: usize,
        n: usize,
    },
    /// `Σ w_k J̃(𝔉_k)` evaluated on common draws (shared time gaps when `γ⁰`
    /// is constant, shared `z` otherwise).
    Sum(Vec<(Complex64, &'a DiagramContext)>),
    Quotient(&'a QuotientProblem),
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub grid: Vec<f64>,
    pub estimates: Vec<IntegralEstimate>,
    pub fit: FitReport,
    pub predicted: Option<Exponent>,
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 5 {
        return Err(Error::Precondition("a sweep needs at least 5 ν values".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("the ν grid must be strictly decreasing".into()));
    }
    if grid.iter().any(|&v| !(v > 0.0 && v <= 0.5)) {
        return Err(Error::Precondition("ν values must lie in (0, 1/2]".into()));
    }
    Ok(())
}

/// `2^{-from}, …, 2^{-to}`.
pub fn dyadic_grid(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

/// Diagram and family targets integrate `z` exactly when the model allows.
fn closed_form_z(model: &DensityModel) -> bool {
    constant_gamma(model).is_some() && model.kernel_route() && model.theta == ThetaKind::Exp
}

/// Evaluate the target along the grid (the same seed at every ν, so the
/// points share their random draws) and fit the decay.
pub fn scaling_sweep(target: &SweepTarget<'_>, model: &DensityModel, s: &[f64], grid: &[f64], opts: &McOptions) -> Result<SweepResult> {
    validate_grid(grid)?;
    let mut estimates = Vec::with_capacity(grid.len());
    for &nu in grid {
        let m = model.clone().with_nu(nu);
        let e = match target {
            SweepTarget::Diagram(ctx) if closed_form_z(&m) => continuum_j_gaussian(ctx, &m, s, opts)?,
            SweepTarget::Diagram(ctx) => continuum_j(ctx, &m, s, opts)?,
            SweepTarget::Correlation { m: a, n: b } => correlation(*a, *b, &m, s, &Mode::Continuum(*opts))?.total,
            SweepTarget::Sum(terms) if closed_form_z(&m) => family_sum_gaussian(terms, &m, s, opts)?,
            SweepTarget::Sum(terms) => continuum_sum_common(terms, &m, s, opts)?,
            SweepTarget::Quotient(p) => quotient_integral(p, nu, opts)?.estimate,
        };
        estimates.push(e);
    }
    let values: Vec<f64> = estimates.iter().map(|e| e.value.norm()).collect();
    let errors: Vec<f64> = estimates.iter().map(IntegralEstimate::stderr_norm).collect();
    let fit = fit_power_law(grid, &values, &errors)?;
    let predicted = match target {
        SweepTarget::Diagram(ctx) => Some(decompose_and_rank(&ctx.phase.alpha, model.d).predicted),
        SweepTarget::Correlation { m, n } => {
            let big_n = m + n;
            Some(Exponent {
                p: big_n.div_ceil(2).min(model.d),
                log_count: usize::from(chi_log(big_n, model.d)),
            })
        }
        SweepTarget::Sum(_) => None,
        SweepTarget::Quotient(p) => Some(crate::spectral::quotient_exponent(p.rank(), p.d)),
    };
    Ok(SweepResult {
        grid: grid.to_vec(),
        estimates,
        fit,
        predicted,
    })
}
