//! Wick pairings of leaves and the resulting Feynman diagrams.

use crate::diagram::{product_set, Diagram, VertexId};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EdgeKind {
    /// Generator–virtual edge of the underlying diagram.
    Diagram,
    /// Wick pairing of two leaves.
    Leaf,
}

/// An edge of a Feynman diagram, read as `c̄_bar ~ c_plain`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub bar: usize,
    pub plain: usize,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, Serialize)]
pub struct FeynmanDiagram {
    pub base: Arc<Diagram>,
    pub base_id: usize,
    pub pairing_id: usize,
    /// `(conjugated leaf index, non-conjugated leaf index)`, sorted.
    pub pairing: Vec<(usize, usize)>,
    /// `f[j] = i` iff `c̄_j ~ c_i`.
    pub f: Vec<usize>,
    pub e_d: Vec<(VertexId, VertexId)>,
    /// Leaf edges oriented conjugated → non-conjugated.
    pub e_l: Vec<(VertexId, VertexId)>,
}

impl FeynmanDiagram {
    pub fn new(base: Arc<Diagram>, pairing: Vec<(usize, usize)>) -> Result<Self> {
        let width = 2 * base.order() + 1;
        let bar_leaves: Vec<usize> = base.leaves(true).iter().map(|v| v.index).collect();
        let plain_leaves: Vec<usize> = base.leaves(false).iter().map(|v| v.index).collect();
        let mut pairing = pairing;
        pairing.sort_unstable();
        let mut seen_bar: Vec<usize> = pairing.iter().map(|p| p.0).collect();
        let mut seen_plain: Vec<usize> = pairing.iter().map(|p| p.1).collect();
        seen_bar.sort_unstable();
        seen_plain.sort_unstable();
        if seen_bar != bar_leaves || seen_plain != plain_leaves {
            return Err(Error::Precondition("pairing is not a bijection between leaf sets".into()));
        }
        for &(j, i) in &pairing {
            let (bj, bi) = (VertexId::bar(j).block(), VertexId::plain(i).block());
            if bj == bi && bj != 0 {
                return Err(Error::Precondition(format!("pairing couples c̄{j} and c{i} inside block {bj}")));
            }
        }
        let mut f = vec![usize::MAX; width];
        for &(r, w) in &base.edges {
            let (bar, plain) = if r.conjugated { (r, w) } else { (w, r) };
            f[bar.index] = plain.index;
        }
        for &(j, i) in &pairing {
            f[j] = i;
        }
        debug_assert!(f.iter().all(|&x| x < width));
        let e_l = pairing.iter().map(|&(j, i)| (VertexId::bar(j), VertexId::plain(i))).collect();
        Ok(FeynmanDiagram {
            e_d: base.edges.clone(),
            base,
            base_id: 0,
            pairing_id: 0,
            pairing,
            f,
            e_l,
        })
    }

    pub fn order(&self) -> usize {
        self.base.order()
    }

    pub fn id(&self) -> String {
        format!("{}-{}:{}.{}", self.base.m, self.base.n, self.base_id, self.pairing_id)
    }

    /// All `2N + 1` edges, indexed by the conjugated end.
    pub fn edges(&self) -> Vec<Edge> {
        self.f
            .iter()
            .enumerate()
            .map(|(j, &i)| {
                let virt = self.base.vertex(VertexId::bar(j)).is_virtual || self.base.vertex(VertexId::plain(i)).is_virtual;
                Edge {
                    bar: j,
                    plain: i,
                    kind: if virt { EdgeKind::Diagram } else { EdgeKind::Leaf },
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "id": self.id(),
            "m": self.base.m,
            "n": self.base.n,
            "diagram": self.base.to_json(),
            "pairing": self.pairing.iter().map(|&(j, i)| serde_json::json!({"bar": j, "plain": i})).collect::<Vec<_>>(),
            "f": self.f,
        })
    }
}

/// All same-block-avoiding bijections from conjugated to non-conjugated
/// leaves, lexicographic in (conjugated id, non-conjugated id).
pub fn pairings(d: &Diagram) -> Vec<Vec<(usize, usize)>> {
    let bar: Vec<usize> = d.leaves(true).iter().map(|v| v.index).collect();
    let plain: Vec<usize> = d.leaves(false).iter().map(|v| v.index).collect();
    let mut out = Vec::new();
    let mut used = vec![false; plain.len()];
    let mut cur = Vec::with_capacity(bar.len());
    fn rec(k: usize, bar: &[usize], plain: &[usize], used: &mut [bool], cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if k == bar.len() {
            out.push(cur.clone());
            return;
        }
        let bj = VertexId::bar(bar[k]).block();
        for (t, &i) in plain.iter().enumerate() {
            if used[t] || (bj != 0 && VertexId::plain(i).block() == bj) {
                continue;
            }
            used[t] = true;
            cur.push((bar[k], i));
            rec(k + 1, bar, plain, used, cur, out);
            cur.pop();
            used[t] = false;
        }
    }
    rec(0, &bar, &plain, &mut used, &mut cur, &mut out);
    out
}

pub fn enumerate_feynman(d: &Arc<Diagram>) -> Vec<FeynmanDiagram> {
    pairings(d)
        .into_iter()
        .enumerate()
        .map(|(p, pairing)| {
            let mut fd = FeynmanDiagram::new(Arc::clone(d), pairing).expect("enumerated pairing is valid");
            fd.pairing_id = p;
            fd
        })
        .collect()
}

/// The union of Feynman diagrams over D_m × D̄_n.
pub fn feynman_set(m: usize, n: usize) -> Vec<FeynmanDiagram> {
    let mut out = Vec::new();
    for (id, d) in product_set(m, n).into_iter().enumerate() {
        let d = Arc::new(d);
        for mut fd in enumerate_feynman(&d) {
            fd.base_id = id;
            out.push(fd);
        }
    }
    out
}

/// `c_F = (-1)^{#w} i^N`.
pub fn phase_constant(fd: &FeynmanDiagram) -> Complex64 {
    let w = fd.base.plain_virtual_count();
    let i_pow = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ][fd.order() % 4];
    if w % 2 == 1 {
        -i_pow
    } else {
        i_pow
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_one_has_two_pairings() {
        let set = feynman_set(1, 1);
        assert_eq!(set.len(), 2);
        for fd in &set {
            assert_eq!(phase_constant(fd), Complex64::new(1.0, 0.0));
            assert_eq!(fd.e_d.len(), 2);
            assert_eq!(fd.e_l.len(), 3);
        }
    }

    #[test]
    fn empty_when_order_one() {
        assert!(feynman_set(1, 0).is_empty());
        assert!(feynman_set(0, 1).is_empty());
    }

    #[test]
    fn root_pairing_when_trivial() {
        let set = feynman_set(0, 0);
        assert_eq!(set.len(), 1);
        assert_eq!(set[0].f, vec![0]);
    }

    #[test]
    fn one_zero_constant_is_i() {
        let d = Arc::new(product_set(1, 0).remove(0));
        // build the (invalid) pairing by hand to read off c_D only
        let fd = FeynmanDiagram {
            base: Arc::clone(&d),
            base_id: 0,
            pairing_id: 0,
            pairing: vec![],
            f: vec![],
            e_d: d.edges.clone(),
            e_l: vec![],
        };
        assert_eq!(phase_constant(&fd), Complex64::new(0.0, 1.0));
    }

    #[test]
    fn rejects_same_block_pairing() {
        let d = Arc::new(product_set(1, 0).remove(0));
        let err = FeynmanDiagram::new(d, vec![(0, 1), (1, 2)]);
        assert!(err.is_err());
    }

    #[test]
    fn f_table_by_hand() {
        // D_1 × D̄_1: B̄_1 = {c1, c2, c̄1, w̄2}, B_2 = {c3, w4, c̄3, c̄4}
        let set = feynman_set(1, 1);
        let fd = &set[0];
        assert_eq!(fd.pairing, vec![(1, 3), (3, 1), (4, 2)]);
        assert_eq!(fd.f, vec![4, 3, 0, 1, 2]);
    }
}
