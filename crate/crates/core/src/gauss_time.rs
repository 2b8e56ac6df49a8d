//! `J̃_s(𝔉)` with the `z`-integral done in closed form.
//!
//! When `γ⁰` is constant the density is Gaussian in `z`, and for fixed
//! times the phase `Ω(l, z) = Σ_a z_aᵀ Q(l) z_a` is a quadratic form, so
//! `∫ dz` is an explicit determinant. What remains is an integral over the
//! gaps of each admissible ordering, whose exponential weight `e^{−γ n_k g_k}`
//! (n_k edges crossing gap k) is sampled exactly.

use crate::density::DiagramContext;
use crate::error::{Error, Result};
use crate::evaluate::McOptions;
use crate::mc::{run_chunks, Accum, IntegralEstimate, Method};
use crate::model::{DensityModel, ThetaKind};
use crate::spectral::{f2_index, q_matrix};
use crate::wick::EdgeKind;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::Exp1;
use std::f64::consts::PI;

/// Per-diagram data of the closed-form `z`-integral.
#[derive(Clone, Debug)]
pub struct GaussianTime {
    n: usize,
    d: usize,
    nu: f64,
    /// `L⁻¹` for `P = L Lᵀ`, `P = 4r Σ_{E_L} c_ψ c_ψᵀ`.
    l_inv: DMatrix<f64>,
    /// `L⁻¹ h_a` per component.
    white_h: Vec<DVector<f64>>,
    /// Per admissible order: edge counts `n_k` of gaps `k = 1..N`.
    counts: Vec<Vec<f64>>,
    orders: Vec<Vec<usize>>,
    gamma: f64,
    log_scale: f64,
    /// Row q when α is supported on row/column q: then `Q = e_q vᵀ + v e_qᵀ`.
    f2: Option<usize>,
}

/// `γ⁰` as a constant, if it is one.
pub fn constant_gamma(model: &DensityModel) -> Option<f64> {
    let c = &model.gamma0.coefficients;
    (c.iter().skip(1).all(|&x| x == 0.0)).then(|| c.first().copied().unwrap_or(0.0))
}

impl GaussianTime {
    pub fn new(ctx: &DiagramContext, model: &DensityModel, s: &[f64]) -> Result<Self> {
        model.validate()?;
        if s.len() != model.d {
            return Err(Error::Dimension {
                expected: model.d,
                got: s.len(),
            });
        }
        let gamma = constant_gamma(model).ok_or_else(|| Error::Precondition("closed-form z-integration needs a constant gamma0".into()))?;
        if !model.kernel_route() || model.theta != ThetaKind::Exp {
            return Err(Error::Precondition(
                "closed-form z-integration needs T = inf, tau1 = tau2 and exponential θ".into(),
            ));
        }
        if !ctx.is_true() {
            return Err(Error::Precondition(format!("{} is not a true diagram", ctx.id())));
        }
        let n = ctx.order();
        let d = model.d;
        let rate = model.b.rate;
        let leaves: Vec<usize> = ctx.edges.iter().filter(|e| e.kind == EdgeKind::Leaf).map(|e| e.plain).collect();
        let mut p = DMatrix::<f64>::zeros(n, n);
        let mut csum = DVector::<f64>::zeros(n);
        for &j in &leaves {
            let c = &ctx.phase.xi.coeffs[j];
            for a in 0..n {
                csum[a] += f64::from(c[a]);
                for b in 0..n {
                    p[(a, b)] += 4.0 * rate * f64::from(c[a]) * f64::from(c[b]);
                }
            }
        }
        let chol = p
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("leaf weights of {} do not confine z", ctx.id())))?;
        let l_inv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular leaf precision".into()))?;
        let ln_det_p: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let white_h: Vec<DVector<f64>> = s.iter().map(|&sa| &l_inv * (&csum * (-4.0 * rate * sa))).collect();
        let kappa: f64 = s.iter().map(|&sa| 2.0 * rate * sa * sa * leaves.len() as f64).sum();
        let amp = 2.0 * (n + 1) as f64 * model.b.amplitude.ln() - (n + 1) as f64 * gamma.ln();
        let log_scale = amp + d as f64 * (0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * ln_det_p) - kappa;
        let counts = ctx
            .tables
            .iter()
            .map(|t| t.iter().map(|f| f.gamma_xi.len() as f64).collect())
            .collect();
        Ok(GaussianTime {
            n,
            d,
            nu: model.nu,
            l_inv,
            white_h,
            counts,
            orders: ctx.orders.clone(),
            gamma,
            log_scale,
            f2: f2_index(&ctx.phase.alpha),
        })
    }

    /// `Σ_q w_q Z(l_q(E))` for standard exponential draws `e`, where gap k
    /// of order q is `e_k / (γ n_k)` and `w_q = ∏ 1/(γ n_k)`.
    pub fn sample(&self, alpha: &crate::phase::AlphaMatrix, e: &[f64], l: &mut [f64]) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for (q, counts) in self.orders.iter().zip(&self.counts) {
            let mut acc = 0.0;
            let mut w = 1.0;
            for (k, &b) in q.iter().enumerate() {
                let rate = self.gamma * counts[k];
                acc -= e[k] / rate;
                w /= rate;
                l[b - 1] = acc;
            }
            total += self.z_integral(alpha, l) * w;
        }
        total * self.log_scale.exp()
    }

    /// `∏_a ∫ dz_a e^{−½ zᵀPz + hᵀz + i zᵀQz/ν}` divided by its `Q = 0` value
    /// at `h = 0`.
    fn z_integral(&self, alpha: &crate::phase::AlphaMatrix, l: &[f64]) -> Complex64 {
        let centered = self.white_h.iter().all(|h| h.iter().all(|&x| x == 0.0));
        if let (Some(qi), true) = (self.f2, centered) {
            // L⁻¹QL⁻ᵀ = a bᵀ + b aᵀ has eigenvalues a·b ± |a||b| and zeros.
            let v = DVector::from_fn(self.n, |j, _| f64::from(alpha.get(qi, j)) * (l[qi] - l[j]));
            let b = &self.l_inv * v;
            let a = self.l_inv.column(qi);
            let (ab, na, nb) = (a.dot(&b), a.norm(), b.norm());
            let det_part = [ab + na * nb, ab - na * nb].iter().fold(Complex64::new(1.0, 0.0), |acc, &mu| {
                acc / Complex64::new(1.0, -2.0 * mu / self.nu).sqrt()
            });
            return det_part.powu(self.d as u32);
        }
        let q = q_matrix(alpha, l);
        let m = &self.l_inv * q * self.l_inv.transpose();
        if centered {
            let mut det_part = Complex64::new(1.0, 0.0);
            for &mu in m.symmetric_eigenvalues().iter() {
                det_part /= Complex64::new(1.0, -2.0 * mu / self.nu).sqrt();
            }
            return det_part.powu(self.d as u32);
        }
        let eig = SymmetricEigen::new(m);
        let mut det_part = Complex64::new(1.0, 0.0);
        let denoms: Vec<Complex64> = eig.eigenvalues.iter().map(|&mu| Complex64::new(1.0, -2.0 * mu / self.nu)).collect();
        for z in &denoms {
            det_part /= z.sqrt();
        }
        let mut out = Complex64::new(1.0, 0.0);
        for _ in 0..self.d {
            out *= det_part;
        }
        for h in &self.white_h {
            let w = eig.eigenvectors.transpose() * h;
            let expo: Complex64 = w.iter().zip(&denoms).map(|(x, z)| x * x / z).sum::<Complex64>() * 0.5;
            out *= expo.exp();
        }
        out
    }

    pub fn order(&self) -> usize {
        self.n
    }

    fn key(&self, alpha: &crate::phase::AlphaMatrix) -> String {
        let mut per_order: Vec<String> = self.orders.iter().zip(&self.counts).map(|(q, c)| format!("{q:?}{c:?}")).collect();
        per_order.sort();
        format!(
            "{:?}|{:?}|{:?}|{}",
            alpha.rows(),
            self.l_inv.as_slice(),
            self.white_h,
            per_order.join(";")
        )
    }
}

/// Monte Carlo over the time gaps with `z` integrated exactly.
pub fn continuum_j_gaussian(ctx: &DiagramContext, model: &DensityModel, s: &[f64], opts: &McOptions) -> Result<IntegralEstimate> {
    family_sum_gaussian(&[(Complex64::new(1.0, 0.0), ctx)], model, s, opts)
}

/// `Σ_k w_k J̃_s(𝔉_k)` on shared exponential draws: sample `i` uses the same
/// `E ∈ R_+^N` for every diagram and ordering.
pub fn family_sum_gaussian(
    terms: &[(Complex64, &DiagramContext)],
    model: &DensityModel,
    s: &[f64],
    opts: &McOptions,
) -> Result<IntegralEstimate> {
    // Diagrams with the same α, leaf precision and gap counts have the same
    // integrand; their weights are merged and cancelled classes dropped.
    let mut prepared: Vec<(Complex64, &DiagramContext, GaussianTime)> = Vec::new();
    let mut keys: Vec<String> = Vec::new();
    for &(w, c) in terms {
        let g = GaussianTime::new(c, model, s)?;
        let key = g.key(&c.phase.alpha);
        match keys.iter().position(|k| *k == key) {
            Some(i) => prepared[i].0 += w,
            None => {
                keys.push(key);
                prepared.push((w, c, g));
            }
        }
    }
    prepared.retain(|t| t.0.norm() > 1e-12);
    let n = prepared.first().map_or(0, |t| t.2.order());
    if prepared.iter().any(|t| t.2.order() != n) {
        return Err(Error::Precondition("shared draws need diagrams of one order".into()));
    }
    let acc = run_chunks(opts.samples, opts.seed, |rng, count| {
        let mut e = vec![0.0; n];
        let mut l = vec![0.0; n];
        let mut acc = Accum::default();
        for _ in 0..count {
            for x in e.iter_mut() {
                *x = rng.sample(Exp1);
            }
            let mut v = Complex64::new(0.0, 0.0);
            for (w, ctx, g) in &prepared {
                v += *w * g.sample(&ctx.phase.alpha, &e, &mut l);
            }
            acc.push(v);
        }
        Ok(acc)
    })?;
    Ok(IntegralEstimate {
        value: acc.mean(),
        stderr: acc.stderr(),
        samples: acc.n,
        seed: opts.seed,
        method: Method::GaussianTimeMc,
        truncation_bound: 0.0,
        note: (terms.len() > 1).then(|| format!("{} diagrams on shared draws, {} distinct integrands", terms.len(), prepared.len())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::continuum_j;
    use crate::wick::feynman_set;

    fn flat(d: usize, nu: f64) -> DensityModel {
        let mut m = DensityModel::default().with_d(d).with_nu(nu);
        m.gamma0.coefficients = vec![1.0];
        m.b.rate = 0.5;
        m
    }

    #[test]
    fn agrees_with_z_sampling() {
        for (mm, nn, i, d, s) in [(1, 1, 0, 1, vec![0.3]), (2, 1, 4, 2, vec![0.2, -0.1]), (2, 2, 17, 1, vec![0.0])] {
            let ctx = DiagramContext::new(feynman_set(mm, nn).swap_remove(i)).unwrap();
            if !ctx.is_true() {
                continue;
            }
            let model = flat(d, 0.2);
            let opts = McOptions {
                samples: 200_000,
                seed: 3,
                ..Default::default()
            };
            let a = continuum_j(&ctx, &model, &s, &opts).unwrap();
            let b = continuum_j_gaussian(&ctx, &model, &s, &opts).unwrap();
            let err = (a.stderr_norm().powi(2) + b.stderr_norm().powi(2)).sqrt();
            assert!(
                (a.value - b.value).norm() < 4.0 * err,
                "{}: {} vs {} ± {err}",
                ctx.id(),
                a.value,
                b.value
            );
        }
    }

    #[test]
    fn rank_two_shortcut_matches_eigensolver() {
        use crate::spectral::f2_index;
        let ctx = crate::evaluate::true_contexts(2, 2)
            .unwrap()
            .into_iter()
            .find(|c| f2_index(&c.phase.alpha).is_some())
            .unwrap();
        let model = flat(1, 0.1);
        let fast = GaussianTime::new(&ctx, &model, &[0.0]).unwrap();
        assert!(fast.f2.is_some());
        let slow = GaussianTime { f2: None, ..fast.clone() };
        for l in [[-0.3, -1.2, -0.7, -2.0], [-1.0, -0.1, -0.4, -0.9]] {
            let a = fast.z_integral(&ctx.phase.alpha, &l);
            let b = slow.z_integral(&ctx.phase.alpha, &l);
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_varying_gamma() {
        let ctx = DiagramContext::new(feynman_set(1, 1).swap_remove(0)).unwrap();
        let r = GaussianTime::new(&ctx, &DensityModel::default(), &[0.0]);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
