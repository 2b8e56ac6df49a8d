//! Deterministic chunked Monte Carlo and the estimate record shared by all
//! evaluators.
//!
//! Chunk `c` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `c`;
//! chunk sums are merged in chunk order, so results are bit-identical for
//! any number of workers.

use crate::error::Result;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Closed form or structurally zero.
    Exact,
    /// Lattice sum over `Z_L^{dN}` with the excluded hyperplanes removed.
    Lattice,
    /// Lattice sum without exclusions, used as a spectrally accurate
    /// quadrature of the continuum integral.
    Trapezoid,
    KernelMc,
    /// `z` integrated in closed form (constant γ⁰), Monte Carlo over the
    /// time gaps.
    GaussianTimeMc,
    TimeQuadratureMc,
    QuotientMc,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegralEstimate {
    pub value: Complex64,
    /// Standard errors of the real and imaginary parts.
    pub stderr: [f64; 2],
    pub samples: u64,
    pub seed: u64,
    pub method: Method,
    pub truncation_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl IntegralEstimate {
    pub fn exact(value: Complex64, note: impl Into<Option<String>>) -> Self {
        IntegralEstimate {
            value,
            stderr: [0.0, 0.0],
            samples: 0,
            seed: 0,
            method: Method::Exact,
            truncation_bound: 0.0,
            note: note.into(),
        }
    }

    pub fn zero(note: &str) -> Self {
        Self::exact(Complex64::new(0.0, 0.0), Some(note.to_string()))
    }

    /// Combined standard error `|σ|` of the complex value.
    pub fn stderr_norm(&self) -> f64 {
        self.stderr[0].hypot(self.stderr[1])
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.value = self.value * c;
        let (a, b) = (self.stderr[0], self.stderr[1]);
        // errors of Re/Im after multiplying by c (independent parts)
        out.stderr = [(c.re * a).hypot(c.im * b), (c.im * a).hypot(c.re * b)];
        out.truncation_bound *= c.norm();
        out
    }

    /// Sum of independent estimates; errors add in quadrature.
    pub fn sum<'a>(parts: impl IntoIterator<Item = &'a IntegralEstimate>, method: Method, seed: u64) -> Self {
        let mut out = IntegralEstimate::exact(Complex64::new(0.0, 0.0), None);
        out.method = method;
        out.seed = seed;
        let (mut vr, mut vi) = (0.0, 0.0);
        for p in parts {
            out.value += p.value;
            vr += p.stderr[0] * p.stderr[0];
            vi += p.stderr[1] * p.stderr[1];
            out.samples += p.samples;
            out.truncation_bound += p.truncation_bound;
        }
        out.stderr = [vr.sqrt(), vi.sqrt()];
        out
    }
}

/// Running sums for a complex sample mean.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accum {
    pub n: u64,
    pub sum: Complex64,
    pub sq_re: f64,
    pub sq_im: f64,
}

impl Accum {
    pub fn push(&mut self, v: Complex64) {
        self.n += 1;
        self.sum += v;
        self.sq_re += v.re * v.re;
        self.sq_im += v.im * v.im;
    }

    pub fn merge(&mut self, o: &Accum) {
        self.n += o.n;
        self.sum += o.sum;
        self.sq_re += o.sq_re;
        self.sq_im += o.sq_im;
    }

    pub fn mean(&self) -> Complex64 {
        self.sum / self.n.max(1) as f64
    }

    /// Standard errors of the mean (real, imaginary).
    pub fn stderr(&self) -> [f64; 2] {
        if self.n < 2 {
            return [f64::INFINITY, f64::INFINITY];
        }
        let n = self.n as f64;
        let m = self.mean();
        let var_re = ((self.sq_re - n * m.re * m.re) / (n - 1.0)).max(0.0);
        let var_im = ((self.sq_im - n * m.im * m.im) / (n - 1.0)).max(0.0);
        [(var_re / n).sqrt(), (var_im / n).sqrt()]
    }
}

pub const CHUNK: u64 = 1 << 14;

pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Run `samples` draws in fixed-size chunks. `work(rng, count)` returns the
/// accumulator of one chunk; the first failing chunk (in chunk order) wins.
pub fn run_chunks<W>(samples: u64, seed: u64, work: W) -> Result<Accum>
where
    W: Fn(&mut ChaCha8Rng, u64) -> Result<Accum> + Sync,
{
    let parts = run_chunks_multi(samples, seed, 1, |rng, count| Ok(vec![work(rng, count)?]))?;
    Ok(parts[0])
}

/// As [`run_chunks`] with `k` accumulators filled from the same draws.
pub fn run_chunks_multi<W>(samples: u64, seed: u64, k: usize, work: W) -> Result<Vec<Accum>>
where
    W: Fn(&mut ChaCha8Rng, u64) -> Result<Vec<Accum>> + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let one = |c: u64| {
        let count = CHUNK.min(samples - c * CHUNK);
        work(&mut chunk_rng(seed, c), count)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<Vec<Accum>>> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<Vec<Accum>>> = (0..chunks).map(one).collect();
    let mut total = vec![Accum::default(); k];
    for p in parts {
        for (t, a) in total.iter_mut().zip(&p?) {
            t.merge(a);
        }
    }
    Ok(total)
}

/// Derive an independent seed for item `i` of a batch (SplitMix64 step).
pub fn derive_seed(seed: u64, i: u64) -> u64 {
    let mut x = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn chunking_is_deterministic() {
        let f = |rng: &mut ChaCha8Rng, n: u64| {
            let mut a = Accum::default();
            for _ in 0..n {
                a.push(Complex64::new(rng.random::<f64>(), 0.0));
            }
            Ok(a)
        };
        let a = run_chunks(50_000, 7, f).unwrap();
        let b = run_chunks(50_000, 7, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n, 50_000);
        assert!((a.mean().re - 0.5).abs() < 4.0 * a.stderr()[0]);
    }

    #[test]
    fn scaling_by_i_swaps_errors() {
        let mut e = IntegralEstimate::exact(Complex64::new(1.0, 2.0), None);
        e.stderr = [0.1, 0.3];
        let s = e.scaled(Complex64::new(0.0, 1.0));
        assert_eq!(s.value, Complex64::new(-2.0, 1.0));
        assert!((s.stderr[0] - 0.3).abs() < 1e-15 && (s.stderr[1] - 0.1).abs() < 1e-15);
    }
}
