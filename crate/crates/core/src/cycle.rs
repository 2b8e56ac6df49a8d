//! Alternating Hamilton cycles in the augmented graph of a Feynman diagram.
//!
//! Solid edges are the `2N + 1` edges of the Feynman diagram; dashed edges
//! join the non-conjugated and conjugated members of a block (four per block)
//! plus the two roots. A Hamilton cycle keeps two dashed edges per block,
//! either straight `(c_{2k-1}, c̄_{2k-1}), (c_{2k}, c̄_{2k})` or crossed.
//! Traversed with dashed edges pointing from non-conjugated to conjugated
//! vertices it induces the cyclic permutation `π(j) = f(d(j))`, where `d`
//! is the dashed partner.

use crate::diagram::VertexId;
use crate::error::{Error, Result};
use crate::wick::FeynmanDiagram;
use serde::Serialize;
use thiserror::Error as ThisError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HamiltonCycle {
    /// Starts at `c_0`, alternates dashed (c → c̄) and solid (c̄ → c) steps.
    pub sequence: Vec<VertexId>,
    /// Per block `k = 1..N` (stored at `k - 1`): crossed dashed pair kept.
    pub crossed: Vec<bool>,
    /// Cycles of the initial straight matching.
    pub initial_cycles: usize,
    /// Splice steps performed by the merge.
    pub splices: usize,
}

fn dashed_partner(j: usize, crossed: &[bool]) -> usize {
    if j == 0 {
        return 0;
    }
    let k = j.div_ceil(2);
    if crossed[k - 1] {
        if j % 2 == 1 {
            j + 1
        } else {
            j - 1
        }
    } else {
        j
    }
}

fn pi_from(f: &[usize], crossed: &[bool]) -> Vec<usize> {
    (0..f.len()).map(|j| f[dashed_partner(j, crossed)]).collect()
}

/// Cycle label of every element of a permutation, and the cycle count.
fn cycle_labels(p: &[usize]) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; p.len()];
    let mut count = 0;
    for start in 0..p.len() {
        if label[start] != usize::MAX {
            continue;
        }
        let mut j = start;
        while label[j] == usize::MAX {
            label[j] = count;
            j = p[j];
        }
        count += 1;
    }
    (label, count)
}

impl HamiltonCycle {
    /// Cycle determined by a choice of straight/crossed dashed pairs.
    pub fn from_crossed(fd: &FeynmanDiagram, crossed: Vec<bool>) -> Result<Self> {
        if crossed.len() != fd.order() {
            return Err(Error::Dimension {
                expected: fd.order(),
                got: crossed.len(),
            });
        }
        let pi = pi_from(&fd.f, &crossed);
        let (_, count) = cycle_labels(&pi);
        if count != 1 {
            return Err(Error::Precondition(format!("dashed choice yields {count} cycles")));
        }
        let mut sequence = Vec::with_capacity(2 * pi.len());
        let mut j = 0;
        for _ in 0..pi.len() {
            sequence.push(VertexId::plain(j));
            sequence.push(VertexId::bar(dashed_partner(j, &crossed)));
            j = pi[j];
        }
        Ok(HamiltonCycle {
            sequence,
            crossed,
            initial_cycles: 1,
            splices: 0,
        })
    }

    /// Cycle from a reduced cyclic order of non-conjugated vertices starting at 0.
    pub fn from_reduced(fd: &FeynmanDiagram, order: &[usize]) -> Result<Self> {
        let width = fd.f.len();
        if order.len() != width || order.first() != Some(&0) {
            return Err(Error::Precondition(
                "reduced cycle must list every c_j once, starting at c_0".into(),
            ));
        }
        let mut crossed = vec![false; fd.order()];
        let mut seen = vec![false; width];
        for (p, &a) in order.iter().enumerate() {
            if a >= width || seen[a] {
                return Err(Error::Precondition(format!("vertex c{a} repeated or out of range")));
            }
            seen[a] = true;
            let b = order[(p + 1) % width];
            let x = if a == 0 {
                (fd.f[0] == b).then_some(0)
            } else {
                let k = a.div_ceil(2);
                [2 * k - 1, 2 * k].into_iter().find(|&x| fd.f[x] == b)
            };
            let Some(x) = x else {
                return Err(Error::Precondition(format!("no dashed-solid path c{a} → c{b}")));
            };
            if a != 0 && x != a {
                crossed[a.div_ceil(2) - 1] = true;
            }
        }
        let c = Self::from_crossed(fd, crossed)?;
        if c.reduced() != order {
            return Err(Error::Precondition("reduced order is inconsistent with one dashed matching".into()));
        }
        Ok(c)
    }

    /// Cyclic order of the non-conjugated vertices, starting at `c_0`.
    pub fn reduced(&self) -> Vec<usize> {
        self.sequence.iter().filter(|v| !v.conjugated).map(|v| v.index).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sequence": self.sequence.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "reduced": self.reduced(),
            "pi": pi_permutation(self),
            "crossed": self.crossed,
            "initial_cycles": self.initial_cycles,
            "splices": self.splices,
        })
    }
}

/// Canonical cycle: start from straight pairs everywhere and splice the
/// lowest-index block that straddles two cycles until one cycle remains.
pub fn hamilton_cycle(fd: &FeynmanDiagram) -> Result<HamiltonCycle> {
    let n = fd.order();
    let mut crossed = vec![false; n];
    let (_, initial) = cycle_labels(&pi_from(&fd.f, &crossed));
    let mut splices = 0;
    loop {
        let (label, count) = cycle_labels(&pi_from(&fd.f, &crossed));
        if count == 1 {
            break;
        }
        let k = (1..=n)
            .find(|&k| label[2 * k - 1] != label[2 * k])
            .ok_or_else(|| Error::Invariant(format!("{count} cycles but no block straddles two of them")))?;
        crossed[k - 1] = !crossed[k - 1];
        splices += 1;
    }
    let mut c = HamiltonCycle::from_crossed(fd, crossed)?;
    c.initial_cycles = initial;
    c.splices = splices;
    Ok(c)
}

/// Every alternating Hamilton cycle, by crossed/straight choice per block
/// (lexicographic in the choice vector, straight first).
pub fn all_hamilton_cycles(fd: &FeynmanDiagram) -> Vec<HamiltonCycle> {
    let n = fd.order();
    (0u64..1 << n)
        .filter_map(|mask| {
            let crossed: Vec<bool> = (0..n).map(|k| mask >> (n - 1 - k) & 1 == 1).collect();
            HamiltonCycle::from_crossed(fd, crossed).ok()
        })
        .collect()
}

/// `π(j) = i` iff the reduced cycle steps from `c_j` to `c_i`.
pub fn pi_permutation(c: &HamiltonCycle) -> Vec<usize> {
    let r = c.reduced();
    let mut pi = vec![0; r.len()];
    for p in 0..r.len() {
        pi[r[p]] = r[(p + 1) % r.len()];
    }
    pi
}

#[derive(Clone, Debug, PartialEq, Eq, ThisError, Serialize)]
pub enum CycleViolation {
    #[error("sequence does not visit each of the {expected} vertices exactly once")]
    NotHamiltonian { expected: usize },
    #[error("step {from} → {to} is neither a solid nor a dashed edge")]
    NonEdge { from: VertexId, to: VertexId },
    #[error("solid and dashed edges do not alternate at {at}")]
    NotAlternating { at: VertexId },
    #[error("solid edge c̄{bar} ~ c{plain} missing")]
    MissingSolid { bar: usize, plain: usize },
    #[error("block {block} keeps {count} dashed edges")]
    DashedCount { block: usize, count: usize },
    #[error("root–root dashed edge missing")]
    MissingRootEdge,
    #[error("reduced permutation is not a single cycle")]
    NotCyclic,
    #[error("block {block}: {{π(2k-1), π(2k)}} differs from {{f(2k-1), f(2k)}}")]
    Consistency { block: usize },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Step {
    Solid,
    Dashed,
}

fn classify(fd: &FeynmanDiagram, a: VertexId, b: VertexId) -> Option<Step> {
    if a.conjugated == b.conjugated {
        return None;
    }
    let (bar, plain) = if a.conjugated { (a, b) } else { (b, a) };
    if fd.f.get(bar.index) == Some(&plain.index) {
        return Some(Step::Solid);
    }
    let same_block = bar.block() == plain.block() && (bar.index == 0) == (plain.index == 0);
    same_block.then_some(Step::Dashed)
}

/// Check a candidate cycle against every requirement on alternating
/// Hamilton cycles, including the block consistency of the reduced cycle.
pub fn validate_cycle(fd: &FeynmanDiagram, c: &HamiltonCycle) -> Vec<CycleViolation> {
    let mut out = Vec::new();
    let width = fd.f.len();
    let seq = &c.sequence;
    let mut seen = vec![[false; 2]; width];
    let mut ok = seq.len() == 2 * width;
    for v in seq {
        if v.index >= width || seen[v.index][usize::from(v.conjugated)] {
            ok = false;
            break;
        }
        seen[v.index][usize::from(v.conjugated)] = true;
    }
    if !ok {
        out.push(CycleViolation::NotHamiltonian { expected: 2 * width });
        return out;
    }
    let len = seq.len();
    let steps: Vec<Option<Step>> = (0..len)
        .map(|p| {
            let (a, b) = (seq[p], seq[(p + 1) % len]);
            let s = classify(fd, a, b);
            if s.is_none() {
                out.push(CycleViolation::NonEdge { from: a, to: b });
            }
            s
        })
        .collect();
    let mut alternating = true;
    for p in 0..len {
        if let (Some(x), Some(y)) = (steps[p], steps[(p + 1) % len]) {
            if x == y {
                out.push(CycleViolation::NotAlternating { at: seq[(p + 1) % len] });
                alternating = false;
            }
        }
    }
    let mut solid = vec![false; width];
    let mut dashed = vec![0usize; fd.order() + 1];
    for p in 0..len {
        let (a, b) = (seq[p], seq[(p + 1) % len]);
        let bar = if a.conjugated { a } else { b };
        match steps[p] {
            Some(Step::Solid) => solid[bar.index] = true,
            Some(Step::Dashed) => dashed[bar.block()] += 1,
            None => {}
        }
    }
    for (j, present) in solid.iter().enumerate() {
        if !present {
            out.push(CycleViolation::MissingSolid { bar: j, plain: fd.f[j] });
        }
    }
    if dashed[0] != 1 {
        out.push(CycleViolation::MissingRootEdge);
    }
    for (k, &count) in dashed.iter().enumerate().skip(1) {
        if count != 2 {
            out.push(CycleViolation::DashedCount { block: k, count });
        }
    }
    if !alternating || !out.is_empty() {
        return out;
    }
    // π(j): follow the dashed step out of c_j, then the solid step.
    let mut pi = vec![0; width];
    for p in 0..len {
        let v = seq[p];
        if v.conjugated {
            continue;
        }
        let (next, prev) = (seq[(p + 1) % len], seq[(p + len - 1) % len]);
        let (partner, after) = if steps[p] == Some(Step::Dashed) {
            (next, seq[(p + 2) % len])
        } else {
            (prev, seq[(p + len - 2) % len])
        };
        debug_assert!(partner.conjugated);
        pi[v.index] = after.index;
    }
    let (_, count) = cycle_labels(&pi);
    if count != 1 {
        out.push(CycleViolation::NotCyclic);
    }
    for k in 1..=fd.order() {
        let mut a = [pi[2 * k - 1], pi[2 * k]];
        let mut b = [fd.f[2 * k - 1], fd.f[2 * k]];
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            out.push(CycleViolation::Consistency { block: k });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wick::feynman_set;

    #[test]
    fn one_one_cycles() {
        for fd in feynman_set(1, 1) {
            let c = hamilton_cycle(&fd).unwrap();
            assert_eq!(c.reduced().len(), 5);
            assert!(validate_cycle(&fd, &c).is_empty());
            assert_eq!(c.splices + 1, c.initial_cycles);
        }
    }

    #[test]
    fn detects_extra_dashed_edge() {
        let fd = &feynman_set(1, 1)[0];
        let c = hamilton_cycle(fd).unwrap();
        let mut bad = c.clone();
        // c1 → c̄1 → c2 → c̄2 walks three dashed edges of block 1
        let tail: Vec<VertexId> = bad.sequence.iter().copied().filter(|v| v.block() != 1).collect();
        bad.sequence = vec![VertexId::plain(1), VertexId::bar(1), VertexId::plain(2), VertexId::bar(2)];
        bad.sequence.extend(tail);
        let v = validate_cycle(fd, &bad);
        assert!(v.iter().any(|x| matches!(x, CycleViolation::DashedCount { block: 1, .. })));
    }

    #[test]
    fn reduced_round_trip() {
        for fd in feynman_set(2, 1) {
            let c = hamilton_cycle(&fd).unwrap();
            let again = HamiltonCycle::from_reduced(&fd, &c.reduced()).unwrap();
            assert_eq!(again.sequence, c.sequence);
        }
    }
}
