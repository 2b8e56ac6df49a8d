//! Densities of Feynman diagrams, admissible time orderings and the
//! closed-form time kernel for `T = ∞`, `τ₁ = τ₂`.
//!
//! Orderings `q` are stored as block lists: `q[0]` is the latest block
//! (closest to the root time) and `q[N-1]` the earliest.

use crate::cycle::{hamilton_cycle, validate_cycle, HamiltonCycle};
use crate::diagram::VertexId;
use crate::error::{Error, Result};
use crate::model::DensityModel;
use crate::phase::{is_true_diagram, omega_from_alpha_into, PhaseData};
use crate::quad::{integrate, integrate_half_line, integrate_to, Tolerance};
use crate::wick::{EdgeKind, FeynmanDiagram};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::cell::RefCell;

/// Edge `c̄_bar ~ c_plain` with the blocks and time slots of both ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TimedEdge {
    pub bar: usize,
    pub plain: usize,
    pub kind: EdgeKind,
    pub bar_block: usize,
    pub plain_block: usize,
    pub bar_slot: usize,
    pub plain_slot: usize,
    /// For diagram edges: the real end is the conjugated vertex.
    pub real_is_bar: bool,
}

impl TimedEdge {
    /// (real slot, virtual slot) of a diagram edge.
    pub fn real_virtual_slots(&self) -> (usize, usize) {
        if self.real_is_bar {
            (self.bar_slot, self.plain_slot)
        } else {
            (self.plain_slot, self.bar_slot)
        }
    }

    pub fn real_virtual_blocks(&self) -> (usize, usize) {
        if self.real_is_bar {
            (self.bar_block, self.plain_block)
        } else {
            (self.plain_block, self.bar_block)
        }
    }
}

pub fn timed_edges(fd: &FeynmanDiagram) -> Vec<TimedEdge> {
    fd.edges()
        .into_iter()
        .map(|e| {
            let vb = fd.base.vertex(VertexId::bar(e.bar));
            let vp = fd.base.vertex(VertexId::plain(e.plain));
            TimedEdge {
                bar: e.bar,
                plain: e.plain,
                kind: e.kind,
                bar_block: vb.block,
                plain_block: vp.block,
                bar_slot: vb.time_slot,
                plain_slot: vp.time_slot,
                real_is_bar: !vb.is_virtual,
            }
        })
        .collect()
}

fn slot_time(slot: usize, model: &DensityModel, l: &[f64]) -> f64 {
    match slot {
        0 => model.tau1,
        1 => model.tau2,
        k => l[k - 2],
    }
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `F^𝔉(τ, l, ξ)` for evaluated `ξ` (length `(2N+1)·d`).
pub fn density_from_xi(edges: &[TimedEdge], model: &DensityModel, xi: &[f64], l: &[f64]) -> f64 {
    let d = model.d;
    let t = model.horizon;
    let mut value = 1.0;
    for e in edges {
        let s2 = sq(&xi[e.plain * d..(e.plain + 1) * d]);
        let g = model.gamma_sq(s2);
        match e.kind {
            EdgeKind::Diagram => {
                let (r, w) = e.real_virtual_slots();
                let (lr, lw) = (slot_time(r, model, l), slot_time(w, model, l));
                if !(lw <= lr && lw >= -t) {
                    return 0.0;
                }
                value *= (-g * (lr - lw)).exp();
            }
            EdgeKind::Leaf => {
                let (a, b) = (slot_time(e.bar_slot, model, l), slot_time(e.plain_slot, model, l));
                let mut w = (-g * (a - b).abs()).exp();
                if t.is_finite() {
                    w -= (-g * (a + b + 2.0 * t)).exp();
                }
                value *= w * model.big_b_sq(s2);
            }
        }
    }
    value
}

/// `∏_{E_L} B(ξ_ψ)`, the weight that stays under the z-integral.
pub fn leaf_weight(edges: &[TimedEdge], model: &DensityModel, xi: &[f64]) -> f64 {
    let d = model.d;
    edges
        .iter()
        .filter(|e| e.kind == EdgeKind::Leaf)
        .map(|e| model.big_b_sq(sq(&xi[e.plain * d..(e.plain + 1) * d])))
        .product()
}

/// Whether the chain `l_{q(N)} ≤ … ≤ l_{q(1)} ≤ t` forces every diagram edge
/// constraint: each block must come after the block of its generator.
pub fn is_admissible(edges: &[TimedEdge], q: &[usize]) -> bool {
    let n = q.len();
    let mut pos = vec![usize::MAX; n + 1];
    pos[0] = 0;
    for (k, &b) in q.iter().enumerate() {
        if b == 0 || b > n || pos[b] != usize::MAX {
            return false;
        }
        pos[b] = k + 1;
    }
    edges.iter().filter(|e| e.kind == EdgeKind::Diagram).all(|e| {
        let (r, w) = e.real_virtual_blocks();
        pos[w] > pos[r]
    })
}

/// Admissible orderings in lexicographic order.
pub fn admissible_orders(fd: &FeynmanDiagram) -> Vec<Vec<usize>> {
    let n = fd.order();
    let parent: Vec<usize> = (1..=n).map(|k| fd.base.block_parent(k).unwrap_or(0)).collect();
    let mut out = Vec::new();
    let mut placed = vec![false; n + 1];
    placed[0] = true;
    let mut cur = Vec::with_capacity(n);
    fn rec(n: usize, parent: &[usize], placed: &mut [bool], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for b in 1..=n {
            if !placed[b] && placed[parent[b - 1]] {
                placed[b] = true;
                cur.push(b);
                rec(n, parent, placed, cur, out);
                cur.pop();
                placed[b] = false;
            }
        }
    }
    rec(n, &parent, &mut placed, &mut cur, &mut out);
    out
}

/// The ω- and γ-combinations of one factor `k` of the kernel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KernelFactor {
    pub k: usize,
    /// Blocks `q(j)`, `j ≥ k`, whose ω's are summed.
    pub omega_blocks: Vec<usize>,
    /// Edges (by conjugated end) coupling `{q(r): r < k}` with `{q(j): j ≥ k}`,
    /// the roots counting as `q(0) = 0`.
    pub gamma_edges: Vec<usize>,
    /// `ξ` indices whose `γ` enter the sum, one per edge, ascending.
    pub gamma_xi: Vec<usize>,
}

pub fn kernel_table(edges: &[TimedEdge], q: &[usize]) -> Vec<KernelFactor> {
    let n = q.len();
    let mut pos = vec![0usize; n + 1];
    for (k, &b) in q.iter().enumerate() {
        pos[b] = k + 1;
    }
    (1..=n)
        .map(|k| {
            let mut gamma_edges = Vec::new();
            let mut gamma_xi = Vec::new();
            for e in edges {
                let (a, b) = (pos[e.bar_block], pos[e.plain_block]);
                if a.min(b) < k && k <= a.max(b) {
                    gamma_edges.push(e.bar);
                    gamma_xi.push(e.plain);
                }
            }
            gamma_xi.sort_unstable();
            KernelFactor {
                k,
                omega_blocks: q[k - 1..].to_vec(),
                gamma_edges,
                gamma_xi,
            }
        })
        .collect()
}

/// `γ^𝔉_{ij}` for blocks `0..=N` (0 = roots), symmetric, from per-index γ values.
pub fn block_couplings(edges: &[TimedEdge], gamma: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut g = vec![vec![0.0; n + 1]; n + 1];
    for e in edges {
        let (a, b) = (e.bar_block, e.plain_block);
        if a != b {
            g[a][b] += gamma[e.plain];
            g[b][a] += gamma[e.plain];
        }
    }
    g
}

/// A Feynman diagram with its cycle, phase data, edge timing and kernel
/// tables, ready for evaluation.
#[derive(Clone, Debug)]
pub struct DiagramContext {
    pub fd: FeynmanDiagram,
    pub cycle: HamiltonCycle,
    pub phase: PhaseData,
    pub edges: Vec<TimedEdge>,
    pub orders: Vec<Vec<usize>>,
    pub tables: Vec<Vec<KernelFactor>>,
}

impl DiagramContext {
    pub fn new(fd: FeynmanDiagram) -> Result<Self> {
        let cycle = hamilton_cycle(&fd)?;
        Self::with_cycle(fd, cycle)
    }

    /// Use a caller-supplied cycle; it must pass `validate_cycle`.
    pub fn with_cycle(fd: FeynmanDiagram, cycle: HamiltonCycle) -> Result<Self> {
        let violations = validate_cycle(&fd, &cycle);
        if let Some(v) = violations.first() {
            return Err(Error::Invariant(format!("invalid Hamilton cycle for {}: {v}", fd.id())));
        }
        let phase = PhaseData::new(&fd, &cycle);
        let edges = timed_edges(&fd);
        let orders = admissible_orders(&fd);
        let tables = orders.iter().map(|q| kernel_table(&edges, q)).collect();
        Ok(DiagramContext {
            fd,
            cycle,
            phase,
            edges,
            orders,
            tables,
        })
    }

    pub fn order(&self) -> usize {
        self.fd.order()
    }

    pub fn is_true(&self) -> bool {
        is_true_diagram(&self.phase.alpha)
    }

    pub fn id(&self) -> String {
        self.fd.id()
    }
}

/// Reusable buffers for evaluating one diagram at many `z`.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    pub xi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub omega: Vec<f64>,
}

impl Scratch {
    pub fn fill(&mut self, ctx: &DiagramContext, model: &DensityModel, s: &[f64], z: &[f64]) {
        let d = model.d;
        let n = ctx.order();
        self.xi.resize((2 * n + 1) * d, 0.0);
        self.gamma.resize(2 * n + 1, 0.0);
        self.omega.resize(n, 0.0);
        ctx.phase.xi.eval_into(s, z, &mut self.xi);
        for j in 0..=2 * n {
            self.gamma[j] = model.gamma_sq(sq(&self.xi[j * d..(j + 1) * d]));
        }
        omega_from_alpha_into(&ctx.phase.alpha, z, d, &mut self.omega);
    }
}

fn check_dims(ctx: &DiagramContext, model: &DensityModel, s: &[f64], z: &[f64]) -> Result<()> {
    if s.len() != model.d {
        return Err(Error::Dimension {
            expected: model.d,
            got: s.len(),
        });
    }
    if z.len() != ctx.order() * model.d {
        return Err(Error::Dimension {
            expected: ctx.order() * model.d,
            got: z.len(),
        });
    }
    Ok(())
}

/// `F_s^𝔉(τ, l, z)`.
pub fn density_value(ctx: &DiagramContext, model: &DensityModel, s: &[f64], l: &[f64], z: &[f64]) -> Result<f64> {
    check_dims(ctx, model, s, z)?;
    if l.len() != ctx.order() {
        return Err(Error::Dimension {
            expected: ctx.order(),
            got: l.len(),
        });
    }
    let xi = ctx.phase.xi.eval(s, z);
    Ok(density_from_xi(&ctx.edges, model, &xi, l))
}

fn require_kernel_route(model: &DensityModel) -> Result<()> {
    if model.kernel_route() {
        Ok(())
    } else {
        Err(Error::Precondition(
            "the closed-form time kernel needs T = inf and tau1 = tau2".into(),
        ))
    }
}

/// One factor `(iν⁻¹ D_k + G_k)⁻¹`.
fn factor(f: &KernelFactor, sc: &Scratch, nu: f64) -> Complex64 {
    let dsum: f64 = f.omega_blocks.iter().map(|&b| sc.omega[b - 1]).sum();
    let gsum: f64 = f.gamma_xi.iter().map(|&i| sc.gamma[i]).sum();
    Complex64::new(gsum, dsum / nu).inv()
}

/// `Σ_q I_s^q(𝔉; z)` with scratch already filled.
pub fn kernel_sum_filled(ctx: &DiagramContext, sc: &Scratch, nu: f64) -> Complex64 {
    let lead = 0.5 / sc.gamma[0];
    let mut total = Complex64::new(0.0, 0.0);
    for table in &ctx.tables {
        let mut p = Complex64::new(lead, 0.0);
        for f in &table[1..] {
            p *= factor(f, sc, nu);
        }
        total += p;
    }
    total
}

/// `I_s^q(𝔉; z)`; zero for inadmissible `q`.
pub fn time_kernel(ctx: &DiagramContext, model: &DensityModel, s: &[f64], z: &[f64], q: &[usize]) -> Result<Complex64> {
    require_kernel_route(model)?;
    check_dims(ctx, model, s, z)?;
    if q.len() != ctx.order() {
        return Err(Error::Dimension {
            expected: ctx.order(),
            got: q.len(),
        });
    }
    if !is_admissible(&ctx.edges, q) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut sc = Scratch::default();
    sc.fill(ctx, model, s, z);
    let table = kernel_table(&ctx.edges, q);
    let mut p = Complex64::new(0.5 / sc.gamma[0], 0.0);
    for f in &table[1..] {
        p *= factor(f, &sc, model.nu);
    }
    Ok(p)
}

pub fn kernel_sum(ctx: &DiagramContext, model: &DensityModel, s: &[f64], z: &[f64]) -> Result<Complex64> {
    require_kernel_route(model)?;
    check_dims(ctx, model, s, z)?;
    let mut sc = Scratch::default();
    sc.fill(ctx, model, s, z);
    Ok(kernel_sum_filled(ctx, &sc, model.nu))
}

/// All permutations of `1..=n` in lexicographic order.
pub fn all_orders(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (1..=n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("pivot has a successor");
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

/// Integrand of the time integral: `F^𝔉(τ, l, ξ(z)) e^{iν⁻¹ Σ_j ω_j l_j}`.
fn time_integrand(ctx: &DiagramContext, model: &DensityModel, sc: &Scratch, l: &[f64]) -> Complex64 {
    let f = density_from_xi(&ctx.edges, model, &sc.xi, l);
    if f == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let phase: f64 = sc.omega.iter().zip(l).map(|(w, t)| w * t).sum::<f64>() / model.nu;
    Complex64::from_polar(f, phase)
}

/// Direct quadrature of the time integral over the simplex of `q` when
/// `T = ∞` and `τ₁ = τ₂`, in gap coordinates `l_{q(k)} = t − Σ_{i≤k} g_i`.
///
/// The integrand is checked numerically to be a product of one-gap factors
/// at random points; each factor is then integrated adaptively.
pub fn simplex_quadrature(ctx: &DiagramContext, model: &DensityModel, sc: &Scratch, q: &[usize], tol: Tolerance) -> Result<Complex64> {
    require_kernel_route(model)?;
    let n = q.len();
    let t = model.tau1;
    let to_l = |g: &[f64]| {
        let mut l = vec![0.0; n];
        let mut acc = t;
        for (k, &b) in q.iter().enumerate() {
            acc -= g[k];
            l[b - 1] = acc;
        }
        l
    };
    let h = |g: &[f64]| time_integrand(ctx, model, sc, &to_l(g));
    let star = vec![1.0; n];
    let h_star = h(&star);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e9a_4ab1e);
    let probes: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random_range(0.05..3.0)).collect()).collect();
    if h_star == Complex64::new(0.0, 0.0) {
        if probes.iter().any(|g| h(g).norm() != 0.0) {
            return Err(Error::Invariant("indicator is not constant on a time simplex".into()));
        }
        return Ok(h_star);
    }
    // h/h* through a real scale and a unit phasor: the naive complex
    // quotient forms h·conj(h*), which underflows when |h*| is small
    let scale = h_star.norm().recip();
    let unit = (h_star * scale).conj();
    let ratio = |g: &[f64]| h(g) * scale * unit;
    let factor_at = |k: usize, x: f64| {
        let mut g = star.clone();
        g[k] = x;
        ratio(&g)
    };
    for g in &probes {
        if h(g).norm() < 1e-280 {
            continue;
        }
        let direct = ratio(g);
        let product: Complex64 = (0..n).map(|k| factor_at(k, g[k])).product();
        if (direct - product).norm() > 1e-9 * direct.norm() {
            return Err(Error::Invariant(format!(
                "time integrand of {} is not separable in gap coordinates ({direct} vs {product} at {g:?})",
                ctx.id()
            )));
        }
    }
    let mut value = h_star;
    for k in 0..n {
        value *= integrate_half_line(|x| factor_at(k, x), tol)?.value;
    }
    Ok(value)
}

/// Sum of `simplex_quadrature` over every permutation of the blocks.
pub fn time_integral_factorized(ctx: &DiagramContext, model: &DensityModel, s: &[f64], z: &[f64], tol: Tolerance) -> Result<Complex64> {
    check_dims(ctx, model, s, z)?;
    let mut sc = Scratch::default();
    sc.fill(ctx, model, s, z);
    let mut total = Complex64::new(0.0, 0.0);
    for q in all_orders(ctx.order()) {
        total += simplex_quadrature(ctx, model, &sc, &q, tol)?;
    }
    Ok(total)
}

/// Nested adaptive quadrature of the time integral over `l`, valid for
/// finite `T` and unequal root times. Each simplex is integrated variable
/// by variable with break points at the root times. Cost grows like
/// `(panels)^N`; meant for `N ≤ 3`.
pub fn time_integral_nested(ctx: &DiagramContext, model: &DensityModel, sc: &Scratch, tol: Tolerance) -> Result<Complex64> {
    let n = ctx.order();
    let top = model.tau1.max(model.tau2);
    let mut breaks = vec![model.tau1.min(model.tau2)];
    breaks.retain(|&b| b < top);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    struct Walk<'a> {
        ctx: &'a DiagramContext,
        model: &'a DensityModel,
        sc: &'a Scratch,
        tol: Tolerance,
        breaks: &'a [f64],
        failure: &'a RefCell<Option<Error>>,
    }
    impl Walk<'_> {
        fn level(&self, q: &[usize], k: usize, upper: f64, l: &mut [f64]) -> Complex64 {
            if k == q.len() {
                return time_integrand(self.ctx, self.model, self.sc, l);
            }
            let lower = -self.model.horizon;
            let mut cuts: Vec<f64> = self.breaks.iter().copied().filter(|&b| b > lower && b < upper).collect();
            cuts.push(upper);
            let mut total = Complex64::new(0.0, 0.0);
            let mut a = lower;
            let mut buf = l.to_vec();
            for b in cuts {
                let piece = {
                    let mut f = |x: f64| {
                        buf[q[k] - 1] = x;
                        let mut inner = buf.clone();
                        self.level(q, k + 1, x, &mut inner)
                    };
                    if a.is_infinite() {
                        integrate_to(&mut f, b, self.tol)
                    } else {
                        integrate(&mut f, a, b, self.tol)
                    }
                };
                match piece {
                    Ok(r) => total += r.value,
                    Err(e) => {
                        self.failure.borrow_mut().get_or_insert(e);
                    }
                }
                a = b;
            }
            total
        }
    }
    let walk = Walk {
        ctx,
        model,
        sc,
        tol,
        breaks: &breaks,
        failure: &failure,
    };
    let mut total = Complex64::new(0.0, 0.0);
    let mut l = vec![0.0; n];
    for q in all_orders(n) {
        total += walk.level(&q, 0, top, &mut l);
    }
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(total),
    }
}
