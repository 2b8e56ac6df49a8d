//! The phase matrix α, the affine map z ↦ ξ and the resonance forms ω.
//!
//! Vectors `z ∈ R^{dN}` are stored block-major: component `a` of `z_i`
//! (block `i = 1..N`) lives at `z[(i - 1) * d + a]`.

use crate::cycle::{pi_permutation, HamiltonCycle};
use crate::error::{Error, Result};
use crate::wick::FeynmanDiagram;
use serde::Serialize;

/// Skew-symmetric `N × N` matrix with entries in {−1, 0, 1}; indices are
/// 0-based (`get(0, 1)` is α₁₂).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct AlphaMatrix {
    pub n: usize,
    pub data: Vec<i8>,
}

impl AlphaMatrix {
    pub fn zeros(n: usize) -> Self {
        AlphaMatrix { n, data: vec![0; n * n] }
    }

    pub fn from_rows(rows: &[&[i8]]) -> Self {
        let n = rows.len();
        let mut a = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "alpha must be square");
            a.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        a
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: i8) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<i8>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_skew(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == -self.get(j, i)))
    }
}

/// Position of each vertex along the reduced cycle.
fn positions(order: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; order.len()];
    for (p, &v) in order.iter().enumerate() {
        pos[v] = p;
    }
    pos
}

/// Whether `x` lies on the arc from `a` to `b` (inclusive) along the cycle.
fn on_arc(pos: &[usize], a: usize, b: usize, x: usize) -> bool {
    let len = pos.len();
    let dx = (pos[x] + len - pos[a]) % len;
    let db = (pos[b] + len - pos[a]) % len;
    dx <= db
}

pub fn alpha_matrix(fd: &FeynmanDiagram, c: &HamiltonCycle) -> AlphaMatrix {
    alpha_from_order(fd.order(), &c.reduced())
}

/// α from the reduced cyclic order alone.
pub fn alpha_from_order(n: usize, order: &[usize]) -> AlphaMatrix {
    let pos = positions(order);
    let mut a = AlphaMatrix::zeros(n);
    for i in 1..=n {
        for j in 1..=n {
            let first = on_arc(&pos, 2 * i - 1, 2 * i, 2 * j - 1);
            let second = on_arc(&pos, 2 * i - 1, 2 * i, 2 * j);
            let v = match (first, second) {
                (true, false) => 1,
                (false, true) => -1,
                _ => 0,
            };
            a.set(i - 1, j - 1, v);
        }
    }
    a
}

/// `ξ_j(z) = s + Σ_i coeffs[j][i] z_i` for `j = 0..=2N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct XiMap {
    pub n: usize,
    pub coeffs: Vec<Vec<i8>>,
}

impl XiMap {
    /// Evaluate all `2N + 1` vectors ξ_j into `out` (length `(2N+1)·d`).
    pub fn eval_into(&self, s: &[f64], z: &[f64], out: &mut [f64]) {
        let d = s.len();
        for (j, c) in self.coeffs.iter().enumerate() {
            let o = &mut out[j * d..(j + 1) * d];
            o.copy_from_slice(s);
            for (i, &ci) in c.iter().enumerate() {
                if ci != 0 {
                    let zi = &z[i * d..(i + 1) * d];
                    let w = f64::from(ci);
                    for a in 0..d {
                        o[a] += w * zi[a];
                    }
                }
            }
        }
    }

    pub fn eval(&self, s: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.coeffs.len() * s.len()];
        self.eval_into(s, z, &mut out);
        out
    }

    /// Human-readable `s + z2 - z1` form.
    pub fn describe(&self, j: usize) -> String {
        let mut t = String::from("s");
        for (i, &c) in self.coeffs[j].iter().enumerate() {
            match c {
                1 => t.push_str(&format!(" + z{}", i + 1)),
                -1 => t.push_str(&format!(" - z{}", i + 1)),
                _ => {}
            }
        }
        t
    }
}

pub fn xi_map(fd: &FeynmanDiagram, c: &HamiltonCycle) -> XiMap {
    xi_from_order(fd.order(), &c.reduced())
}

/// ξ_j collects `(-1)^{i+1} z_{⌈i/2⌉}` over the arc `[c_j, c_0)`.
pub fn xi_from_order(n: usize, order: &[usize]) -> XiMap {
    let pos = positions(order);
    let width = order.len();
    let mut coeffs = vec![vec![0i8; n]; width];
    for (j, row) in coeffs.iter_mut().enumerate() {
        if j == 0 {
            continue;
        }
        for &i in &order[pos[j]..] {
            let sign: i8 = if i % 2 == 1 { 1 } else { -1 };
            row[i.div_ceil(2) - 1] += sign;
        }
    }
    XiMap { n, coeffs }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ω_j = 2 z_j · Σ_i α_{ji} z_i`.
pub fn omega_from_alpha_into(alpha: &AlphaMatrix, z: &[f64], d: usize, out: &mut [f64]) {
    let n = alpha.n;
    for j in 0..n {
        let zj = &z[j * d..(j + 1) * d];
        let mut acc = 0.0;
        for i in 0..n {
            let a = alpha.get(j, i);
            if a != 0 {
                acc += f64::from(a) * dot(zj, &z[i * d..(i + 1) * d]);
            }
        }
        out[j] = 2.0 * acc;
    }
}

/// `ω_j = |ξ_{2j-1}|² + |ξ_{2j}|² − |σ_{2j-1}|² − |σ_{2j}|²` with σ = ξ∘f.
pub fn omega_from_xi_into(f: &[usize], xi: &[f64], d: usize, out: &mut [f64]) {
    let sq = |j: usize| {
        let v = &xi[j * d..(j + 1) * d];
        dot(v, v)
    };
    for (b, o) in out.iter_mut().enumerate() {
        let (p, q) = (2 * b + 1, 2 * b + 2);
        *o = sq(p) + sq(q) - sq(f[p]) - sq(f[q]);
    }
}

pub enum OmegaSource<'a> {
    Alpha(&'a AlphaMatrix),
    Xi { map: &'a XiMap, f: &'a [usize], s: &'a [f64] },
}

pub fn omega_vector(source: OmegaSource<'_>, z: &[f64], d: usize) -> Result<Vec<f64>> {
    match source {
        OmegaSource::Alpha(a) => {
            check_len(a.n * d, z.len())?;
            let mut out = vec![0.0; a.n];
            omega_from_alpha_into(a, z, d, &mut out);
            Ok(out)
        }
        OmegaSource::Xi { map, f, s } => {
            check_len(map.n * d, z.len())?;
            check_len(d, s.len())?;
            let xi = map.eval(s, z);
            let mut out = vec![0.0; map.n];
            omega_from_xi_into(f, &xi, d, &mut out);
            Ok(out)
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

/// `Ω(l, z) = Σ_{ij} α_{ij} (l_i − l_j) z_i · z_j`.
pub fn phase_value(alpha: &AlphaMatrix, l: &[f64], z: &[f64], d: usize) -> Result<f64> {
    check_len(alpha.n, l.len())?;
    check_len(alpha.n * d, z.len())?;
    let mut acc = 0.0;
    for i in 0..alpha.n {
        for j in 0..alpha.n {
            let a = alpha.get(i, j);
            if a != 0 {
                acc += f64::from(a) * (l[i] - l[j]) * dot(&z[i * d..(i + 1) * d], &z[j * d..(j + 1) * d]);
            }
        }
    }
    Ok(acc)
}

/// True diagrams are exactly those whose α has no zero row.
pub fn is_true_diagram(alpha: &AlphaMatrix) -> bool {
    (0..alpha.n).all(|i| alpha.row(i).iter().any(|&v| v != 0))
}

/// Exact check of `ξ_{2k-1} + ξ_{2k} = σ_{2k-1} + σ_{2k}` as integer
/// coefficient identities (the `s` coefficients are 1 on both sides).
pub fn resonance_identity_holds(xi: &XiMap, f: &[usize]) -> bool {
    (1..=xi.n).all(|k| {
        let (p, q) = (2 * k - 1, 2 * k);
        (0..xi.n).all(|i| {
            i32::from(xi.coeffs[p][i]) + i32::from(xi.coeffs[q][i]) == i32::from(xi.coeffs[f[p]][i]) + i32::from(xi.coeffs[f[q]][i])
        })
    })
}

/// Everything the later stages need about one Feynman diagram.
#[derive(Clone, Debug)]
pub struct PhaseData {
    pub alpha: AlphaMatrix,
    pub xi: XiMap,
    pub pi: Vec<usize>,
}

impl PhaseData {
    pub fn new(fd: &FeynmanDiagram, c: &HamiltonCycle) -> Self {
        PhaseData {
            alpha: alpha_matrix(fd, c),
            xi: xi_map(fd, c),
            pi: pi_permutation(c),
        }
    }
}
