//! Block decomposition of α, exact ranks, and the spectral diagnostics of
//! `Q(l) = (α_ij (l_i − l_j))`.

use crate::phase::AlphaMatrix;
use nalgebra::{DMatrix, SymmetricEigen};
use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Rank of an integer matrix by fraction-free elimination (rows are reduced
/// by their gcd after every update, so no rounding is ever involved).
pub fn exact_rank(rows: &[Vec<i128>]) -> usize {
    let mut rows: Vec<Vec<i128>> = rows.to_vec();
    let ncols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..ncols {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][col] != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for row in rows.iter_mut().skip(rank + 1) {
            if row[col] == 0 {
                continue;
            }
            let g = pivot[col].gcd(&row[col]);
            let (ma, mb) = (pivot[col] / g, row[col] / g);
            for c in col..ncols {
                row[c] = row[c]
                    .checked_mul(ma)
                    .and_then(|x| x.checked_sub(pivot[c].checked_mul(mb)?))
                    .expect("exact elimination overflowed i128");
            }
            let g = row.iter().fold(0i128, |acc, &x| acc.gcd(&x));
            if g > 1 {
                row.iter_mut().for_each(|x| *x /= g);
            }
        }
        rank += 1;
    }
    rank
}

/// Exponent `ν^p` with an optional `ln(1/ν)` factor (or `log_count` of them).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Exponent {
    pub p: usize,
    pub log_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RankProfile {
    /// Irreducible components (0-based block indices), ordered by first member.
    pub components: Vec<Vec<usize>>,
    /// Exact rank of `{α_ij (e_i − e_j)}` restricted to each component.
    pub ranks: Vec<usize>,
    pub total_rank: usize,
    /// `min(⌈N/2⌉, d)` with the χ log flag.
    pub predicted: Exponent,
    /// `Σ min(N_i − 1, d)` with one log per component where `N_i − 1 = d`.
    pub block_product: Exponent,
    /// Every component has rank `N_k − 1`.
    pub lemma_ranks_hold: bool,
    /// `R ≥ ⌈N/2⌉`; flagged, never enforced.
    pub rank_bound_holds: bool,
}

/// Connected components of the support graph of α.
pub fn components(alpha: &AlphaMatrix) -> Vec<Vec<usize>> {
    let n = alpha.n;
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        label[start] = id;
        while let Some(i) = stack.pop() {
            members.push(i);
            for (j, lj) in label.iter_mut().enumerate() {
                if *lj == usize::MAX && (alpha.get(i, j) != 0 || alpha.get(j, i) != 0) {
                    *lj = id;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

fn r_vectors(alpha: &AlphaMatrix, members: &[usize]) -> Vec<Vec<i128>> {
    let mut out = Vec::new();
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            let v = i128::from(alpha.get(i, j));
            if v != 0 {
                let mut r = vec![0i128; alpha.n];
                r[i] = v;
                r[j] = -v;
                out.push(r);
            }
        }
    }
    out
}

pub fn chi_log(n: usize, d: usize) -> bool {
    matches!((n, d), (3, 2) | (2, 1))
}

/// Log flag of the quotient bound: a `ln(1/ν)` factor exactly when `r = d`.
pub fn psi_log(r: usize, d: usize) -> bool {
    r == d
}

/// `ν^{min(r, d)}` with the ψ log flag.
pub fn quotient_exponent(r: usize, d: usize) -> Exponent {
    Exponent {
        p: r.min(d),
        log_count: usize::from(psi_log(r, d)),
    }
}

pub fn decompose_and_rank(alpha: &AlphaMatrix, d: usize) -> RankProfile {
    let n = alpha.n;
    let comps = components(alpha);
    let ranks: Vec<usize> = comps.iter().map(|c| exact_rank(&r_vectors(alpha, c))).collect();
    let all: Vec<usize> = (0..n).collect();
    let total_rank = exact_rank(&r_vectors(alpha, &all));
    let lemma_ranks_hold = comps.iter().zip(&ranks).all(|(c, &r)| r + 1 == c.len());
    let predicted = Exponent {
        p: n.div_ceil(2).min(d),
        log_count: usize::from(chi_log(n, d)),
    };
    let block_product = Exponent {
        p: comps.iter().map(|c| (c.len() - 1).min(d)).sum(),
        log_count: comps.iter().filter(|c| c.len() - 1 == d).count(),
    };
    RankProfile {
        components: comps,
        ranks,
        total_rank,
        predicted,
        block_product,
        lemma_ranks_hold,
        rank_bound_holds: total_rank >= n.div_ceil(2),
    }
}

/// `Q(l)_ij = α_ij (l_i − l_j)`.
pub fn q_matrix(alpha: &AlphaMatrix, l: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(alpha.n, alpha.n, |i, j| f64::from(alpha.get(i, j)) * (l[i] - l[j]))
}

#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    /// Eigenvalues of `Q(l)` by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
    /// `𝒦(l) = ½ Σ_ij (α_ij (l_i − l_j))²`.
    pub kappa: f64,
    /// `|𝒦 + Σ_{i<j} λ_i λ_j|`, relative to `max(𝒦, 1)`.
    pub residual: f64,
}

fn sorted_eigen(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    ev
}

fn pair_sum(ev: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..ev.len() {
        for j in i + 1..ev.len() {
            acc += ev[i] * ev[j];
        }
    }
    acc
}

pub fn spectral_check(alpha: &AlphaMatrix, l: &[f64]) -> Spectrum {
    let q = q_matrix(alpha, l);
    let kappa = 0.5 * q.iter().map(|x| x * x).sum::<f64>();
    let eigenvalues = sorted_eigen(&q);
    let residual = (kappa + pair_sum(&eigenvalues)).abs() / kappa.max(1.0);
    Spectrum {
        eigenvalues,
        kappa,
        residual,
    }
}

/// Relative residual of `Σ a_ij² = −2 Σ_{i<j} λ_i λ_j` for a traceless
/// symmetric matrix.
pub fn traceless_identity_residual(a: &DMatrix<f64>) -> f64 {
    let hs: f64 = a.iter().map(|x| x * x).sum();
    let ev = sorted_eigen(a);
    (hs + 2.0 * pair_sum(&ev)).abs() / hs.max(f64::MIN_POSITIVE)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GenericRank {
    /// Maximum exact rank of `Q(l)` over the sampled integer `l`.
    pub k: usize,
    /// Index `q` when all nonzero entries sit in row/column `q`.
    pub f2_index: Option<usize>,
}

pub const GENERIC_RANK_SEED: u64 = 0x0A1F_A5EE_D000_0003;

/// Index q such that every nonzero α_ij has `i == q` or `j == q`.
pub fn f2_index(alpha: &AlphaMatrix) -> Option<usize> {
    if alpha.data.iter().all(|&v| v == 0) {
        return None;
    }
    (0..alpha.n).find(|&q| (0..alpha.n).all(|i| (0..alpha.n).all(|j| alpha.get(i, j) == 0 || i == q || j == q)))
}

pub fn classify_generic_rank(alpha: &AlphaMatrix) -> GenericRank {
    let mut rng = ChaCha8Rng::seed_from_u64(GENERIC_RANK_SEED);
    let n = alpha.n;
    let mut k = 0;
    for _ in 0..3 {
        let l: Vec<i128> = (0..n).map(|_| i128::from(rng.random_range(-1000i64..=1000))).collect();
        let rows: Vec<Vec<i128>> = (0..n)
            .map(|i| (0..n).map(|j| i128::from(alpha.get(i, j)) * (l[i] - l[j])).collect())
            .collect();
        k = k.max(exact_rank(&rows));
    }
    GenericRank {
        k,
        f2_index: f2_index(alpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_small_systems() {
        assert_eq!(exact_rank(&[vec![1, -1, 0], vec![0, 1, -1], vec![1, 0, -1]]), 2);
        assert_eq!(exact_rank(&[vec![0, 0], vec![0, 0]]), 0);
        assert_eq!(exact_rank(&[vec![2, 4], vec![3, 7]]), 2);
    }

    #[test]
    fn two_by_two_block() {
        let a = AlphaMatrix::from_rows(&[&[0, 1], &[-1, 0]]);
        let p = decompose_and_rank(&a, 2);
        assert_eq!(p.components.len(), 1);
        assert_eq!(p.total_rank, 1);
        assert_eq!(classify_generic_rank(&a).k, 2);
    }

    #[test]
    fn block_diagonal_pair() {
        let a = AlphaMatrix::from_rows(&[&[0, 1, 0, 0], &[-1, 0, 0, 0], &[0, 0, 0, -1], &[0, 0, 1, 0]]);
        let p = decompose_and_rank(&a, 2);
        assert_eq!(p.components, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(p.ranks, vec![1, 1]);
        assert_eq!(p.total_rank, 2);
    }

    #[test]
    fn antidiagonal_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(traceless_identity_residual(&a) < 1e-14);
        assert_eq!(spectral_check(&AlphaMatrix::zeros(3), &[1.0, 2.0, 3.0]).kappa, 0.0);
    }
}
