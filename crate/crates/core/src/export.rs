//! DOT renderings of diagrams, Feynman diagrams and cycle graphs, and CSV
//! row types for tables and sweeps.

use crate::cycle::HamiltonCycle;
use crate::density::DiagramContext;
use crate::diagram::{Diagram, VertexId};
use crate::error::{Error, Result};
use crate::spectral::{classify_generic_rank, decompose_and_rank};
use crate::sweep::SweepResult;
use crate::wick::{EdgeKind, FeynmanDiagram};
use serde::Serialize;
use std::fmt::Write;

fn node_name(v: VertexId) -> String {
    v.to_string()
}

fn node_label(v: VertexId) -> String {
    if v.conjugated {
        format!("c̄{}", v.index)
    } else {
        format!("c{}", v.index)
    }
}

fn vertices_and_blocks(out: &mut String, d: &Diagram) {
    let _ = writeln!(out, "  subgraph cluster_roots {{ label=\"roots\"; style=rounded;");
    for v in [VertexId::plain(0), VertexId::bar(0)] {
        let _ = writeln!(out, "    {} [label=\"{}\"];", node_name(v), node_label(v));
    }
    let _ = writeln!(out, "  }}");
    for b in &d.blocks {
        let _ = writeln!(
            out,
            "  subgraph cluster_b{} {{ label=\"block {}\"; style=rounded;",
            b.index, b.index
        );
        for &v in &b.members {
            let vx = d.vertex(v);
            let style = if vx.is_virtual { ", style=dashed" } else { "" };
            let _ = writeln!(out, "    {} [label=\"{}\"{}];", node_name(v), node_label(v), style);
        }
        let _ = writeln!(out, "  }}");
    }
}

/// Blocks as boxes, virtual vertices dashed, generator edges solid.
pub fn diagram_dot(d: &Diagram) -> String {
    let mut out = format!("graph \"D{}x{}\" {{\n  node [shape=circle];\n", d.m, d.n);
    vertices_and_blocks(&mut out, d);
    for &(g, v) in &d.edges {
        let _ = writeln!(out, "  {} -- {};", node_name(g), node_name(v));
    }
    out.push_str("}\n");
    out
}

/// Diagram edges thick, Wick pairings thin.
pub fn feynman_dot(fd: &FeynmanDiagram) -> String {
    let mut out = format!("graph \"{}\" {{\n  node [shape=circle];\n", fd.id());
    vertices_and_blocks(&mut out, &fd.base);
    for e in fd.edges() {
        let width = if e.kind == EdgeKind::Diagram { 2.5 } else { 0.8 };
        let _ = writeln!(
            out,
            "  {} -- {} [penwidth={width}];",
            node_name(VertexId::plain(e.plain)),
            node_name(VertexId::bar(e.bar))
        );
    }
    out.push_str("}\n");
    out
}

/// The graph of solid (Feynman) and dashed (block) edges; the edges of the
/// cycle carry arrows in traversal order, unused dashed edges are grey.
pub fn cycle_dot(fd: &FeynmanDiagram, c: &HamiltonCycle) -> String {
    let mut out = format!("digraph \"{}-cycle\" {{\n  node [shape=circle];\n", fd.id());
    vertices_and_blocks(&mut out, &fd.base);
    let seq = &c.sequence;
    let mut used = Vec::new();
    for (i, &a) in seq.iter().enumerate() {
        let b = seq[(i + 1) % seq.len()];
        let style = if a.conjugated { "solid" } else { "dashed" };
        let _ = writeln!(out, "  {} -> {} [style={style}];", node_name(a), node_name(b));
        used.push((a.min(b), a.max(b)));
    }
    let mut dashed = vec![(VertexId::plain(0), VertexId::bar(0))];
    for k in 1..=fd.order() {
        let (o, e) = (2 * k - 1, 2 * k);
        for (p, q) in [(o, o), (e, e), (o, e), (e, o)] {
            dashed.push((VertexId::plain(p), VertexId::bar(q)));
        }
    }
    for (a, b) in dashed {
        if !used.contains(&(a.min(b), a.max(b))) {
            let _ = writeln!(out, "  {} -> {} [style=dashed, color=grey, dir=none];", node_name(a), node_name(b));
        }
    }
    out.push_str("}\n");
    out
}

/// One row of the rank table.
#[derive(Clone, Debug, Serialize)]
pub struct RankRow {
    pub id: String,
    pub order: usize,
    /// Number of irreducible blocks of α.
    pub components: usize,
    /// Block sizes, `;`-separated.
    pub block_sizes: String,
    pub block_ranks: String,
    pub predicted_p: usize,
    pub log_flag: bool,
    pub generic_rank: usize,
    pub f2: bool,
    pub true_diagram: bool,
}

pub fn rank_row(ctx: &DiagramContext, d: usize) -> RankRow {
    let prof = decompose_and_rank(&ctx.phase.alpha, d);
    let generic = classify_generic_rank(&ctx.phase.alpha);
    let join = |v: Vec<usize>| v.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
    RankRow {
        id: ctx.id(),
        order: ctx.order(),
        components: prof.components.len(),
        block_sizes: join(prof.components.iter().map(Vec::len).collect()),
        block_ranks: join(prof.ranks.clone()),
        predicted_p: prof.predicted.p,
        log_flag: prof.predicted.log_count > 0,
        generic_rank: generic.k,
        f2: generic.f2_index.is_some(),
        true_diagram: ctx.is_true(),
    }
}

/// One factor of one admissible ordering.
#[derive(Clone, Debug, Serialize)]
pub struct KernelRow {
    pub ordering: usize,
    pub q: String,
    pub k: usize,
    pub omega_blocks: String,
    pub gamma_xi: String,
}

pub fn kernel_rows(ctx: &DiagramContext) -> Vec<KernelRow> {
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
    let mut rows = Vec::new();
    for (i, (q, table)) in ctx.orders.iter().zip(&ctx.tables).enumerate() {
        for f in table {
            rows.push(KernelRow {
                ordering: i,
                q: join(q),
                k: f.k,
                omega_blocks: join(&f.omega_blocks),
                gamma_xi: join(&f.gamma_xi),
            });
        }
    }
    rows
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub nu: f64,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
    pub stderr: f64,
    pub samples: u64,
    pub method: String,
}

pub fn sweep_rows(r: &SweepResult) -> Vec<SweepRow> {
    r.grid
        .iter()
        .zip(&r.estimates)
        .map(|(&nu, e)| SweepRow {
            nu,
            re: e.value.re,
            im: e.value.im,
            abs: e.value.norm(),
            stderr: e.stderr_norm(),
            samples: e.samples,
            method: serde_json::to_value(e.method)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
        })
        .collect()
}

/// Serialize rows with a header line.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Numerical(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(format!("csv: {e}")))
}
