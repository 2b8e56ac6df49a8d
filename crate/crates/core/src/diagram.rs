//! Rooted block diagrams of the sets D_m, D̄_n and their products.
//!
//! A diagram on `N = m + n` blocks has non-conjugated vertices `c_0..c_{2N}`
//! and conjugated vertices `c̄_0..c̄_{2N}`. Block `k` holds
//! `c_{2k-1}, c_{2k}, c̄_{2k-1}, c̄_{2k}`; exactly one of the even-indexed
//! pair is virtual. A non-conjugated generator spawns a conjugated block
//! (virtual `w̄_{2k}`), a conjugated generator spawns a non-conjugated block
//! (virtual `w_{2k}`).

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::fmt;
use thiserror::Error;

/// Degrees chosen for the three real vertices of a block, in the order of
/// the Duhamel factors `a^{(m1)} a^{(m2)} ā^{(m3)}` (or their conjugates).
pub type Composition = [u32; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId {
    pub conjugated: bool,
    pub index: usize,
}

impl VertexId {
    pub const fn plain(index: usize) -> Self {
        VertexId { conjugated: false, index }
    }

    pub const fn bar(index: usize) -> Self {
        VertexId { conjugated: true, index }
    }

    /// Block holding this vertex; roots live in block 0.
    pub fn block(&self) -> usize {
        self.index.div_ceil(2)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conjugated {
            write!(f, "cb{}", self.index)
        } else {
            write!(f, "c{}", self.index)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Root `c_0` is non-conjugated (the set D_m).
    Normal,
    /// Root `c̄_0` is conjugated (the set D̄_m).
    Mirrored,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    #[serde(rename = "virtual")]
    pub is_virtual: bool,
    pub degree: u32,
    pub block: usize,
    /// 0 for `τ₁`, 1 for `τ₂`, `k + 1` for the block time `l_k`.
    pub time_slot: usize,
}

impl Vertex {
    pub fn is_leaf(&self) -> bool {
        !self.is_virtual && self.degree == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub index: usize,
    /// `true` for B̄_k (virtual vertex `w̄_{2k}`), `false` for B_k.
    pub conjugated: bool,
    pub members: [VertexId; 4],
    pub parent: VertexId,
}

impl Block {
    pub fn virtual_vertex(&self) -> VertexId {
        if self.conjugated {
            VertexId::bar(2 * self.index)
        } else {
            VertexId::plain(2 * self.index)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagram {
    pub m: usize,
    pub n: usize,
    /// Non-conjugated vertices `0..=2N` followed by conjugated ones.
    pub vertices: Vec<Vertex>,
    pub blocks: Vec<Block>,
    /// Edges `(generator, virtual vertex of the generated block)`.
    pub edges: Vec<(VertexId, VertexId)>,
    /// Breadth-first composition sequences of the two components.
    pub shape: [Vec<Composition>; 2],
}

impl Diagram {
    pub fn order(&self) -> usize {
        self.m + self.n
    }

    fn slot(&self, id: VertexId) -> usize {
        let width = 2 * self.order() + 1;
        id.index + if id.conjugated { width } else { 0 }
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[self.slot(id)]
    }

    pub fn vertex_mut(&mut self, id: VertexId) -> &mut Vertex {
        let k = self.slot(id);
        &mut self.vertices[k]
    }

    pub fn leaves(&self, conjugated: bool) -> Vec<VertexId> {
        self.vertices
            .iter()
            .filter(|v| v.id.conjugated == conjugated && v.is_leaf())
            .map(|v| v.id)
            .collect()
    }

    /// Number of non-conjugated virtual vertices.
    pub fn plain_virtual_count(&self) -> usize {
        self.vertices.iter().filter(|v| !v.id.conjugated && v.is_virtual).count()
    }

    /// Block time slot of a block index (0 means the roots).
    pub fn block_parent(&self, k: usize) -> Option<usize> {
        self.blocks.get(k.checked_sub(1)?).map(|b| b.parent.block())
    }

    /// Swap the two components: D_m × D̄_n becomes D_n × D̄_m with every
    /// vertex conjugated. An involution on product sets.
    pub fn mirror(&self) -> Diagram {
        let first = reserialize(&self.shape[1], Orientation::Mirrored, Orientation::Normal);
        let second = reserialize(&self.shape[0], Orientation::Normal, Orientation::Mirrored);
        build(self.n, self.m, &first, &second)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("diagram serializes")
    }
}

/// Children of a generator, in the listed order `c_{2k-1}, c_{2k}, c̄_{2k-1}, c̄_{2k}`.
/// Each entry is (conjugated, composition slot).
fn listed_children(generator_conjugated: bool) -> [(bool, usize); 3] {
    if generator_conjugated {
        // block B_k: c_{2k-1} ~ a^{(m3)}, c̄_{2k-1} ~ ā^{(m1)}, c̄_{2k} ~ ā^{(m2)}
        [(false, 2), (true, 0), (true, 1)]
    } else {
        // block B̄_k: c_{2k-1} ~ a^{(m1)}, c_{2k} ~ a^{(m2)}, c̄_{2k-1} ~ ā^{(m3)}
        [(false, 0), (false, 1), (true, 2)]
    }
}

fn root_conjugated(o: Orientation) -> bool {
    matches!(o, Orientation::Mirrored)
}

/// Compositions of `total` into three non-negative parts, lexicographic.
fn compositions(total: u32) -> impl Iterator<Item = Composition> {
    (0..=total).flat_map(move |a| (0..=total - a).map(move |b| [a, b, total - a - b]))
}

/// All breadth-first composition sequences of one component of degree `m`.
pub fn enumerate_shapes(m: usize, orientation: Orientation) -> Vec<Vec<Composition>> {
    fn rec(queue: &mut VecDeque<(bool, u32)>, seq: &mut Vec<Composition>, out: &mut Vec<Vec<Composition>>) {
        let Some((conj, deg)) = queue.pop_front() else {
            out.push(seq.clone());
            return;
        };
        for comp in compositions(deg - 1) {
            let mut pushed = 0;
            for (c, slot) in listed_children(conj) {
                if comp[slot] > 0 {
                    queue.push_back((c, comp[slot]));
                    pushed += 1;
                }
            }
            seq.push(comp);
            rec(queue, seq, out);
            seq.pop();
            for _ in 0..pushed {
                queue.pop_back();
            }
        }
        queue.push_front((conj, deg));
    }
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    if m > 0 {
        queue.push_back((root_conjugated(orientation), m as u32));
    }
    rec(&mut queue, &mut Vec::new(), &mut out);
    out
}

/// Tree form of a shape: per block its composition and the child block hung
/// under each composition slot.
struct Tree {
    comps: Vec<Composition>,
    children: Vec<[Option<usize>; 3]>,
}

fn parse(seq: &[Composition], orientation: Orientation) -> Tree {
    let mut children = vec![[None; 3]; seq.len()];
    // queue of (conjugated, owner block, slot); owner None is the root
    let mut queue: VecDeque<(bool, Option<usize>, usize)> = VecDeque::new();
    if !seq.is_empty() {
        queue.push_back((root_conjugated(orientation), None, 0));
    }
    for (b, comp) in seq.iter().enumerate() {
        let (conj, owner, slot) = queue.pop_front().expect("shape consistent");
        if let Some(o) = owner {
            children[o][slot] = Some(b);
        }
        for (c, s) in listed_children(conj) {
            if comp[s] > 0 {
                queue.push_back((c, Some(b), s));
            }
        }
    }
    Tree {
        comps: seq.to_vec(),
        children,
    }
}

fn serialize(tree: &Tree, orientation: Orientation) -> Vec<Composition> {
    let mut out = Vec::with_capacity(tree.comps.len());
    let mut queue: VecDeque<(bool, usize)> = VecDeque::new();
    if !tree.comps.is_empty() {
        queue.push_back((root_conjugated(orientation), 0));
    }
    while let Some((conj, b)) = queue.pop_front() {
        out.push(tree.comps[b]);
        for (c, s) in listed_children(conj) {
            if let Some(child) = tree.children[b][s] {
                queue.push_back((c, child));
            }
        }
    }
    out
}

fn reserialize(seq: &[Composition], from: Orientation, to: Orientation) -> Vec<Composition> {
    serialize(&parse(seq, from), to)
}

/// Assemble the product diagram from the shapes of its two components.
pub fn build(m: usize, n: usize, first: &[Composition], second: &[Composition]) -> Diagram {
    assert_eq!(first.len(), m, "first component must have m blocks");
    assert_eq!(second.len(), n, "second component must have n blocks");
    let big_n = m + n;
    let width = 2 * big_n + 1;
    let mut vertices = Vec::with_capacity(2 * width);
    for conj in [false, true] {
        for j in 0..width {
            let id = VertexId {
                conjugated: conj,
                index: j,
            };
            let block = id.block();
            vertices.push(Vertex {
                id,
                is_virtual: false,
                degree: 0,
                block,
                time_slot: if j == 0 { usize::from(conj) } else { block + 1 },
            });
        }
    }
    let mut d = Diagram {
        m,
        n,
        vertices,
        blocks: Vec::with_capacity(big_n),
        edges: Vec::with_capacity(big_n),
        shape: [first.to_vec(), second.to_vec()],
    };
    d.vertex_mut(VertexId::plain(0)).degree = m as u32;
    d.vertex_mut(VertexId::bar(0)).degree = n as u32;

    for (seq, root, offset) in [(first, VertexId::plain(0), 0usize), (second, VertexId::bar(0), m)] {
        let mut queue: VecDeque<VertexId> = VecDeque::new();
        if !seq.is_empty() {
            queue.push_back(root);
        }
        for (b, comp) in seq.iter().enumerate() {
            let k = b + 1 + offset;
            let parent = queue.pop_front().expect("shape consistent");
            let conj_block = !parent.conjugated;
            let members = [
                VertexId::plain(2 * k - 1),
                VertexId::plain(2 * k),
                VertexId::bar(2 * k - 1),
                VertexId::bar(2 * k),
            ];
            let (real, virt) = if conj_block {
                ([members[0], members[1], members[2]], members[3])
            } else {
                ([members[2], members[3], members[0]], members[1])
            };
            for (v, &deg) in real.iter().zip(comp.iter()) {
                d.vertex_mut(*v).degree = deg;
            }
            d.vertex_mut(virt).is_virtual = true;
            for (c, slot) in listed_children(parent.conjugated) {
                if comp[slot] > 0 {
                    queue.push_back(real[slot]);
                    debug_assert_eq!(real[slot].conjugated, c);
                }
            }
            d.blocks.push(Block {
                index: k,
                conjugated: conj_block,
                members,
                parent,
            });
            d.edges.push((parent, virt));
        }
    }
    d
}

/// The set D_m (normal) or D̄_m (mirrored), each as a product with the trivial
/// diagram of the other orientation.
pub fn enumerate_diagrams(m: usize, orientation: Orientation) -> Vec<Diagram> {
    enumerate_shapes(m, orientation)
        .iter()
        .map(|s| match orientation {
            Orientation::Normal => build(m, 0, s, &[]),
            Orientation::Mirrored => build(0, m, &[], s),
        })
        .collect()
}

/// D_m × D̄_n in canonical order (first component outer).
pub fn product_set(m: usize, n: usize) -> Vec<Diagram> {
    let a = enumerate_shapes(m, Orientation::Normal);
    let b = enumerate_shapes(n, Orientation::Mirrored);
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in &a {
        for y in &b {
            out.push(build(m, n, x, y));
        }
    }
    out
}

/// Independent count via `D(m) = Σ_{m1+m2+m3=m-1} D(m1) D(m2) D(m3)`.
pub fn diagram_count(m: usize) -> u128 {
    let mut table: Vec<u128> = vec![1];
    for k in 1..=m {
        let mut total = 0u128;
        for a in 0..k {
            for b in 0..k - a {
                let c = k - 1 - a - b;
                total += table[a] * table[b] * table[c];
            }
        }
        table.push(total);
    }
    table[m]
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
pub enum Violation {
    #[error("expected {expected} vertices, found {got}")]
    VertexCount { expected: usize, got: usize },
    #[error("vertex list is not laid out as c_0..c_2N, c̄_0..c̄_2N")]
    VertexLayout,
    #[error("expected {expected} blocks, found {got}")]
    BlockCount { expected: usize, got: usize },
    #[error("block {block} has wrong member ids or block labels")]
    BlockMembers { block: usize },
    #[error("block {block} has {count} virtual vertices")]
    VirtualCount { block: usize, count: usize },
    #[error("block {block}: virtual vertex position does not match block conjugation")]
    VirtualPosition { block: usize },
    #[error("virtual vertex {vertex} has nonzero degree")]
    VirtualDegree { vertex: VertexId },
    #[error("block {block}: member degrees sum to {sum}, parent degree is {parent}")]
    BlockDegree { block: usize, sum: u32, parent: u32 },
    #[error("root {vertex} has degree {got}, expected {expected}")]
    RootDegree { vertex: VertexId, expected: u32, got: u32 },
    #[error("expected {expected} edges, found {got}")]
    EdgeCount { expected: usize, got: usize },
    #[error("edge {edge} is not a (generator, virtual) pair across conjugation classes")]
    EdgeShape { edge: usize },
    #[error("{side} leaves: expected {expected}, found {got}")]
    LeafCount { side: &'static str, expected: usize, got: usize },
    #[error("vertex {vertex} is adjacent to a leaf")]
    LeafAdjacent { vertex: VertexId },
    #[error("time slot of {vertex} is {got}, expected {expected}")]
    TimeSlot { vertex: VertexId, expected: usize, got: usize },
}

/// Check every structural invariant of a product diagram.
pub fn validate_structure(d: &Diagram) -> Vec<Violation> {
    let mut out = Vec::new();
    let big_n = d.order();
    let width = 2 * big_n + 1;
    if d.vertices.len() != 2 * width {
        out.push(Violation::VertexCount {
            expected: 2 * width,
            got: d.vertices.len(),
        });
        return out;
    }
    let laid_out = d
        .vertices
        .iter()
        .enumerate()
        .all(|(k, v)| v.id.conjugated == (k >= width) && v.id.index == k % width);
    if !laid_out {
        out.push(Violation::VertexLayout);
        return out;
    }
    for v in &d.vertices {
        let expected = if v.id.index == 0 {
            usize::from(v.id.conjugated)
        } else {
            v.id.block() + 1
        };
        if v.time_slot != expected {
            out.push(Violation::TimeSlot {
                vertex: v.id,
                expected,
                got: v.time_slot,
            });
        }
        if v.is_virtual && v.degree != 0 {
            out.push(Violation::VirtualDegree { vertex: v.id });
        }
    }
    for (id, expected) in [(VertexId::plain(0), d.m as u32), (VertexId::bar(0), d.n as u32)] {
        let got = d.vertex(id).degree;
        if got != expected || d.vertex(id).is_virtual {
            out.push(Violation::RootDegree { vertex: id, expected, got });
        }
    }
    if d.blocks.len() != big_n {
        out.push(Violation::BlockCount {
            expected: big_n,
            got: d.blocks.len(),
        });
    }
    for (b, blk) in d.blocks.iter().enumerate() {
        let k = b + 1;
        let expected = [
            VertexId::plain(2 * k - 1),
            VertexId::plain(2 * k),
            VertexId::bar(2 * k - 1),
            VertexId::bar(2 * k),
        ];
        if blk.index != k || blk.members != expected || expected.iter().any(|v| v.index >= width || d.vertex(*v).block != k) {
            out.push(Violation::BlockMembers { block: k });
            continue;
        }
        let count = expected.iter().filter(|v| d.vertex(**v).is_virtual).count();
        if count != 1 {
            out.push(Violation::VirtualCount { block: k, count });
        } else if !d.vertex(blk.virtual_vertex()).is_virtual {
            out.push(Violation::VirtualPosition { block: k });
        }
        if blk.parent.index >= width {
            out.push(Violation::BlockMembers { block: k });
            continue;
        }
        let sum: u32 = expected.iter().map(|v| d.vertex(*v).degree).sum();
        let parent = d.vertex(blk.parent).degree;
        if parent == 0 || sum + 1 != parent || blk.parent.conjugated == blk.conjugated {
            out.push(Violation::BlockDegree { block: k, sum, parent });
        }
    }
    if d.edges.len() != big_n {
        out.push(Violation::EdgeCount {
            expected: big_n,
            got: d.edges.len(),
        });
    }
    for (e, &(r, w)) in d.edges.iter().enumerate() {
        let ok = r.index < width
            && w.index < width
            && r.conjugated != w.conjugated
            && d.vertex(w).is_virtual
            && !d.vertex(r).is_virtual
            && d.vertex(r).degree >= 1;
        if !ok {
            out.push(Violation::EdgeShape { edge: e });
            continue;
        }
        for v in [r, w] {
            if d.vertex(v).is_leaf() {
                out.push(Violation::LeafAdjacent {
                    vertex: if v == r { w } else { r },
                });
            }
        }
    }
    // every virtual vertex hangs off exactly one edge, every generator has deg - ... edges
    let mut virt_use: HashMap<VertexId, usize> = HashMap::new();
    for &(_, w) in &d.edges {
        *virt_use.entry(w).or_default() += 1;
    }
    for blk in &d.blocks {
        let w = blk.virtual_vertex();
        if w.index < width && d.vertex(w).is_virtual && virt_use.get(&w) != Some(&1) {
            out.push(Violation::EdgeShape { edge: blk.index - 1 });
        }
    }
    for (side, conj) in [("conjugated", true), ("non-conjugated", false)] {
        let got = d.leaves(conj).len();
        if got != big_n + 1 {
            out.push(Violation::LeafCount {
                side,
                expected: big_n + 1,
                got,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_counts() {
        assert_eq!(enumerate_diagrams(0, Orientation::Normal).len(), 1);
        assert_eq!(enumerate_diagrams(2, Orientation::Normal).len(), 3);
        assert_eq!(enumerate_diagrams(3, Orientation::Mirrored).len(), 12);
        assert_eq!(product_set(2, 2).len(), 9);
        assert_eq!(product_set(0, 0)[0].blocks.len(), 0);
    }

    #[test]
    fn unique_diagram_one_zero() {
        let d = &product_set(1, 0)[0];
        assert!(validate_structure(d).is_empty());
        assert_eq!(d.edges, vec![(VertexId::plain(0), VertexId::bar(2))]);
        assert_eq!(d.leaves(false), vec![VertexId::plain(1), VertexId::plain(2)]);
        assert_eq!(d.leaves(true), vec![VertexId::bar(0), VertexId::bar(1)]);
    }

    #[test]
    fn counts_follow_recurrence() {
        for m in 0..=6 {
            assert_eq!(enumerate_diagrams(m, Orientation::Normal).len() as u128, diagram_count(m));
        }
    }

    #[test]
    fn second_component_renumbered() {
        let d = &product_set(1, 2)[0];
        assert_eq!(d.blocks[0].parent, VertexId::plain(0));
        assert_eq!(d.blocks[1].parent, VertexId::bar(0));
        assert!(!d.blocks[1].conjugated);
        assert!(d.vertex(VertexId::plain(4)).is_virtual);
        assert_eq!(d.vertex(VertexId::plain(3)).time_slot, 3);
    }

    #[test]
    fn mirror_is_involution() {
        for (m, n) in [(2, 1), (3, 0), (1, 3)] {
            for d in product_set(m, n) {
                let back = d.mirror().mirror();
                assert_eq!(back, d);
                assert!(validate_structure(&d.mirror()).is_empty());
            }
        }
    }
}
