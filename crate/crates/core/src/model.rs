//! Physical parameters: dimension, dissipation scale, torus period, time
//! horizon, root times, the dissipation profile γ⁰ and the forcing profile b.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// `γ⁰(y) = Σ_k c_k y^k`; the default `1 + y` gives `γ_s = 1 + |s|²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gamma0 {
    pub coefficients: Vec<f64>,
}

impl Default for Gamma0 {
    fn default() -> Self {
        Gamma0 {
            coefficients: vec![1.0, 1.0],
        }
    }
}

impl Gamma0 {
    pub fn eval(&self, y: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * y + c)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.coefficients.first().is_some_and(|&c| c >= 1.0) && self.coefficients.iter().all(|&c| c >= 0.0 && c.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "gamma0 needs a constant term ≥ 1 and non-negative coefficients".into(),
            ))
        }
    }
}

/// `b(s) = amplitude · exp(−rate |s|²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Forcing {
    pub amplitude: f64,
    pub rate: f64,
}

impl Default for Forcing {
    fn default() -> Self {
        Forcing { amplitude: 1.0, rate: 1.0 }
    }
}

impl Forcing {
    pub fn eval_sq(&self, s2: f64) -> f64 {
        self.amplitude * (-self.rate * s2).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThetaKind {
    /// `θ(x, t) = e^{itx}`.
    #[default]
    Exp,
    /// `θ(x, t) = 1{x = 0}`.
    Indicator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityModel {
    pub d: usize,
    pub nu: f64,
    #[serde(rename = "L")]
    pub period: f64,
    /// Horizon; `f64::INFINITY` (written `inf` in config files) for T = ∞.
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub gamma0: Gamma0,
    pub b: Forcing,
    pub theta: ThetaKind,
}

impl Default for DensityModel {
    fn default() -> Self {
        DensityModel {
            d: 1,
            nu: 0.5,
            period: 2.0,
            horizon: f64::INFINITY,
            tau1: 0.0,
            tau2: 0.0,
            gamma0: Gamma0::default(),
            b: Forcing::default(),
            theta: ThetaKind::Exp,
        }
    }
}

impl DensityModel {
    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.horizon = t;
        self
    }

    pub fn with_period(mut self, l: f64) -> Self {
        self.period = l;
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: DensityModel = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if !(self.nu > 0.0 && self.nu <= 0.5) {
            return Err(Error::Config(format!("nu = {} outside (0, 1/2]", self.nu)));
        }
        if !(self.period >= 1.0 && self.period.is_finite()) {
            return Err(Error::Config(format!("L = {} must be a finite value ≥ 1", self.period)));
        }
        if self.horizon.is_nan() || self.horizon <= 0.0 {
            return Err(Error::Config("T must be positive (or inf)".into()));
        }
        if self.tau1 < -self.horizon || self.tau2 < -self.horizon {
            return Err(Error::Config("root times must satisfy τ ≥ −T".into()));
        }
        if !(self.b.amplitude > 0.0 && self.b.rate > 0.0) {
            return Err(Error::Config("b needs positive amplitude and rate".into()));
        }
        self.gamma0.validate()
    }

    pub fn gamma_sq(&self, s2: f64) -> f64 {
        self.gamma0.eval(s2)
    }

    /// `B(s) = b(s)² / γ_s` from `|s|²`.
    pub fn big_b_sq(&self, s2: f64) -> f64 {
        let b = self.b.eval_sq(s2);
        b * b / self.gamma_sq(s2)
    }

    pub fn kernel_route(&self) -> bool {
        self.horizon.is_infinite() && self.tau1 == self.tau2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profiles() {
        let m = DensityModel::default();
        assert_eq!(m.gamma_sq(2.0), 3.0);
        assert!((m.big_b_sq(1.0) - (-2.0f64).exp() / 2.0).abs() < 1e-15);
        m.validate().unwrap();
    }

    #[test]
    fn parses_config() {
        let m =
            DensityModel::from_toml("d = 2\nnu = 0.25\nL = 4.0\nT = inf\ngamma0 = [1.0, 0.5]\ntheta = \"indicator\"\n[b]\nrate = 2.0\n")
                .unwrap();
        assert_eq!(m.d, 2);
        assert!(m.horizon.is_infinite());
        assert_eq!(m.theta, ThetaKind::Indicator);
        assert_eq!(m.b.rate, 2.0);
        assert_eq!(m.b.amplitude, 1.0);
    }

    #[test]
    fn rejects_bad_nu() {
        assert!(DensityModel::from_toml("nu = 0.9").is_err());
        assert!(DensityModel::from_toml("gamma0 = [0.5]").is_err());
    }
}
