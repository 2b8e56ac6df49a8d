use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use wavediag::cycle::{all_hamilton_cycles, hamilton_cycle, validate_cycle, HamiltonCycle};
use wavediag::density::DiagramContext;
use wavediag::diagram::{diagram_count, enumerate_diagrams, product_set, validate_structure, Orientation};
use wavediag::evaluate::{
    continuum_j, correlation, lattice_sums, shipped_quotients, true_contexts, LatticeOptions, McOptions, Mode, QuotientProblem,
};
use wavediag::export::{cycle_dot, diagram_dot, feynman_dot, kernel_rows, rank_row, sweep_rows, to_csv};
use wavediag::model::{DensityModel, ThetaKind};
use wavediag::oracle::{mc_correlation_sum, OracleOptions};
use wavediag::phase::resonance_identity_holds;
use wavediag::spectral::{classify_generic_rank, decompose_and_rank, f2_index};
use wavediag::sweep::{dyadic_grid, scaling_sweep, SweepTarget};
use wavediag::wick::{feynman_set, phase_constant, FeynmanDiagram};
use wavediag::Error;

/// A command-line mistake: unknown diagram id, bad grid, missing input.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Parser)]
#[command(
    name = "wavediag",
    version,
    about = "Diagram expansion and oscillatory-integral evaluation for NLS correlations"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for Monte Carlo chunks.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the artifact here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
enum ModeKind {
    Lattice,
    #[default]
    Continuum,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Theta {
    Exp,
    Indicator,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    /// Every true diagram (the full correlation).
    All,
    /// Diagrams whose α lives on one row and column.
    F2,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DotKind {
    Diagram,
    Feynman,
    Cycle,
}

#[derive(Args, Clone, Debug, Default)]
struct ModelFlags {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    /// Torus period.
    #[arg(long = "L")]
    period: Option<f64>,
    /// Horizon; `inf` for T = ∞.
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau2: Option<f64>,
    #[arg(long, value_enum)]
    theta: Option<Theta>,
    /// Coefficients of γ⁰(y) = c0 + c1 y + …
    #[arg(long, value_delimiter = ',')]
    gamma0: Option<Vec<f64>>,
    #[arg(long)]
    b_amplitude: Option<f64>,
    #[arg(long)]
    b_rate: Option<f64>,
    /// Mode s, comma-separated components.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    s: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Args, Clone, Debug)]
struct Select {
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    n: usize,
    /// Feynman diagram id, as printed by `pairings`.
    #[arg(long)]
    id: Option<String>,
    /// Reduced cycle `0,j1,j2,…` replacing the canonical one.
    #[arg(long, value_delimiter = ',')]
    cycle: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Count and list the diagrams of D_m, or of D_m × D̄_n with --n.
    Enumerate {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Feynman diagrams with their pairing maps.
    Pairings(Select),
    /// Hamilton cycles (canonical, or every valid one with --all).
    Cycle {
        #[command(flatten)]
        sel: Select,
        #[arg(long)]
        all: bool,
    },
    /// α matrices with rank data; --table gives the rank CSV.
    Alpha {
        #[command(flatten)]
        sel: Select,
        #[arg(long)]
        table: bool,
        #[arg(long, default_value_t = 1)]
        d: usize,
    },
    /// ξ table and resonance forms; --kernels gives the kernel CSV.
    Xi {
        #[command(flatten)]
        sel: Select,
        #[arg(long)]
        kernels: bool,
    },
    /// One diagram integral (with --id) or the full correlation.
    Evaluate {
        #[command(flatten)]
        sel: Select,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long, value_enum)]
        mode: Option<ModeKind>,
        /// Lattice mode cutoff |ξ| ≤ cutoff.
        #[arg(long)]
        cutoff: Option<f64>,
    },
    /// ν-sweep on 2^-from … 2^-to with a power-law fit.
    Sweep {
        #[command(flatten)]
        sel: Select,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long, value_enum)]
        family: Option<Family>,
        #[arg(long, default_value_t = 3)]
        from: i32,
        #[arg(long, default_value_t = 9)]
        to: i32,
    },
    /// ν-sweep of a quotient integral with quadratic forms.
    Quotient {
        /// Shipped problem name.
        #[arg(long)]
        name: Option<String>,
        /// TOML file with m, d, forms, gammas, amplitude, sigma.
        #[arg(long)]
        forms: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        from: i32,
        #[arg(long, default_value_t = 9)]
        to: i32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Stochastic simulation of the correlation against the lattice sum.
    Oracle {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        /// Add the mirrored pair (n, m) on the same replicates.
        #[arg(long)]
        symmetrize: bool,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        replicates: Option<u64>,
        #[arg(long)]
        grid_nodes: Option<usize>,
        #[arg(long)]
        cutoff: Option<f64>,
        /// Exit with the invariant code when the two sides disagree by > 3σ.
        #[arg(long)]
        check: bool,
    },
    /// Golden regression of the worked (2,0) example.
    Regress84,
    /// Graphviz rendering of a diagram, Feynman diagram or cycle graph.
    ExportDot {
        #[command(flatten)]
        sel: Select,
        #[arg(long, value_enum, default_value = "feynman")]
        kind: DotKind,
    },
}

/// Everything a run depends on; echoed into every artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: DensityModel,
    s: Option<Vec<f64>>,
    seed: u64,
    samples: u64,
    replicates: u64,
    grid_nodes: usize,
    cutoff: Option<f64>,
    mode: ModeKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: DensityModel::default(),
            s: None,
            seed: 1,
            samples: McOptions::default().samples,
            replicates: OracleOptions::default().replicates,
            grid_nodes: OracleOptions::default().nodes,
            cutoff: None,
            mode: ModeKind::Continuum,
        }
    }
}

impl RunConfig {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
    }

    fn apply(&mut self, f: &ModelFlags) {
        let m = &mut self.model;
        if let Some(v) = f.d {
            m.d = v;
        }
        if let Some(v) = f.nu {
            m.nu = v;
        }
        if let Some(v) = f.period {
            m.period = v;
        }
        if let Some(v) = f.horizon {
            m.horizon = v;
        }
        if let Some(v) = f.tau1 {
            m.tau1 = v;
        }
        if let Some(v) = f.tau2 {
            m.tau2 = v;
        }
        if let Some(t) = f.theta {
            m.theta = match t {
                Theta::Exp => ThetaKind::Exp,
                Theta::Indicator => ThetaKind::Indicator,
            };
        }
        if let Some(v) = &f.gamma0 {
            m.gamma0.coefficients = v.clone();
        }
        if let Some(v) = f.b_amplitude {
            m.b.amplitude = v;
        }
        if let Some(v) = f.b_rate {
            m.b.rate = v;
        }
        if let Some(v) = &f.s {
            self.s = Some(v.clone());
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if let Some(v) = f.samples {
            self.samples = v;
        }
    }

    fn mode_vector(&self) -> anyhow::Result<Vec<f64>> {
        let s = self.s.clone().unwrap_or_else(|| vec![0.0; self.model.d]);
        if s.len() != self.model.d {
            return Err(Error::Dimension {
                expected: self.model.d,
                got: s.len(),
            }
            .into());
        }
        Ok(s)
    }

    fn mc(&self) -> McOptions {
        McOptions {
            samples: self.samples,
            seed: self.seed,
            ..Default::default()
        }
    }

    fn validated(mut self, flags: &ModelFlags) -> anyhow::Result<Self> {
        self.apply(flags);
        self.model.validate()?;
        Ok(self)
    }
}

fn write_artifact(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// JSON artifact: the effective configuration and the result, no timestamps.
fn write_json(out: Option<&Path>, config: &Value, result: Value) -> anyhow::Result<()> {
    let doc = json!({ "config": config, "result": result });
    write_artifact(out, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

/// CSV artifact plus metadata: beside the file as `<out>.meta.json`, or on
/// stderr when writing to stdout.
fn write_csv(out: Option<&Path>, csv: &str, config: &Value, summary: Value) -> anyhow::Result<()> {
    write_artifact(out, csv)?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({ "config": config, "summary": summary, "generated_unix": stamp });
    match out {
        Some(p) => {
            let mut name = p.as_os_str().to_owned();
            name.push(".meta.json");
            std::fs::write(PathBuf::from(name), serde_json::to_string_pretty(&meta)? + "\n")?;
        }
        None => eprintln!("{}", serde_json::to_string(&meta)?),
    }
    Ok(())
}

fn select(sel: &Select) -> anyhow::Result<Vec<FeynmanDiagram>> {
    let all = feynman_set(sel.m, sel.n);
    match &sel.id {
        None => Ok(all),
        Some(id) => {
            let fd = all
                .into_iter()
                .find(|f| f.id() == *id)
                .ok_or_else(|| usage(format!("no Feynman diagram {id} in ({}, {})", sel.m, sel.n)))?;
            Ok(vec![fd])
        }
    }
}

fn context(fd: FeynmanDiagram, sel: &Select) -> anyhow::Result<DiagramContext> {
    Ok(match &sel.cycle {
        Some(order) => {
            let c = HamiltonCycle::from_reduced(&fd, order)?;
            DiagramContext::with_cycle(fd, c)?
        }
        None => DiagramContext::new(fd)?,
    })
}

fn selection_json(sel: &Select) -> Value {
    json!({ "m": sel.m, "n": sel.n, "id": sel.id, "cycle": sel.cycle })
}

fn cmd_enumerate(m: usize, n: Option<usize>, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = String::new();
    let mut violations = Vec::new();
    match n {
        None => {
            let ds = enumerate_diagrams(m, Orientation::Normal);
            if ds.len() as u128 != diagram_count(m) {
                violations.push(format!("{} diagrams enumerated, recurrence gives {}", ds.len(), diagram_count(m)));
            }
            text.push_str(&format!("{}\n", ds.len()));
            for (i, d) in ds.iter().enumerate() {
                for v in validate_structure(d) {
                    violations.push(format!("{m}:{i}: {v}"));
                }
                text.push_str(&format!("{m}:{i} {:?}\n", d.shape[0]));
            }
        }
        Some(n) => {
            let ds = product_set(m, n);
            let fds = feynman_set(m, n);
            let trues = true_contexts(m, n)?.len();
            text.push_str(&format!("diagrams {}\nfeynman {}\ntrue {}\n", ds.len(), fds.len(), trues));
            for d in &ds {
                for v in validate_structure(d) {
                    violations.push(format!("{m}-{n}: {v}"));
                }
            }
            for fd in &fds {
                text.push_str(&format!("{}\n", fd.id()));
            }
        }
    }
    write_artifact(out, &text)?;
    if !violations.is_empty() {
        return Err(Error::Invariant(violations.join("; ")).into());
    }
    Ok(())
}

fn cmd_pairings(sel: &Select, out: Option<&Path>) -> anyhow::Result<()> {
    let fds = select(sel)?;
    let rows: Vec<Value> = fds.iter().map(FeynmanDiagram::to_json).collect();
    write_json(out, &selection_json(sel), json!(rows))
}

fn cmd_cycle(sel: &Select, all: bool, out: Option<&Path>) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for fd in select(sel)? {
        let cycles = if all {
            all_hamilton_cycles(&fd)
        } else if let Some(order) = &sel.cycle {
            vec![HamiltonCycle::from_reduced(&fd, order)?]
        } else {
            vec![hamilton_cycle(&fd)?]
        };
        for c in &cycles {
            for v in validate_cycle(&fd, c) {
                violations.push(format!("{}: {v}", fd.id()));
            }
        }
        rows.push(json!({ "id": fd.id(), "cycles": cycles.iter().map(HamiltonCycle::to_json).collect::<Vec<_>>() }));
    }
    write_json(out, &selection_json(sel), json!(rows))?;
    if !violations.is_empty() {
        return Err(Error::Invariant(violations.join("; ")).into());
    }
    Ok(())
}

fn cmd_alpha(sel: &Select, table: bool, d: usize, out: Option<&Path>) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    let mut table_rows = Vec::new();
    let mut violations = Vec::new();
    for fd in select(sel)? {
        let ctx = context(fd, sel)?;
        let a = &ctx.phase.alpha;
        if !a.is_skew() || a.rows().iter().flatten().any(|v| v.abs() > 1) {
            violations.push(format!("{}: α is not skew with entries in {{0, ±1}}", ctx.id()));
        }
        if !resonance_identity_holds(&ctx.phase.xi, &ctx.fd.f) {
            violations.push(format!("{}: resonance identity fails", ctx.id()));
        }
        if table {
            table_rows.push(rank_row(&ctx, d));
        } else {
            let prof = decompose_and_rank(a, d);
            rows.push(json!({
                "id": ctx.id(),
                "alpha": a.rows(),
                "true": ctx.is_true(),
                "c": [phase_constant(&ctx.fd).re, phase_constant(&ctx.fd).im],
                "ranks": prof,
                "generic_rank": classify_generic_rank(a),
            }));
        }
    }
    if table {
        write_csv(
            out,
            &to_csv(&table_rows)?,
            &selection_json(sel),
            json!({ "d": d, "rows": table_rows.len() }),
        )?;
    } else {
        write_json(out, &selection_json(sel), json!(rows))?;
    }
    if !violations.is_empty() {
        return Err(Error::Invariant(violations.join("; ")).into());
    }
    Ok(())
}

fn cmd_xi(sel: &Select, kernels: bool, out: Option<&Path>) -> anyhow::Result<()> {
    let fds = select(sel)?;
    if kernels {
        if fds.len() != 1 {
            return Err(usage("--kernels needs a single diagram (--id)"));
        }
        let ctx = context(fds.into_iter().next().expect("one diagram"), sel)?;
        let rows = kernel_rows(&ctx);
        return write_csv(
            out,
            &to_csv(&rows)?,
            &selection_json(sel),
            json!({ "id": ctx.id(), "orderings": ctx.orders.len() }),
        );
    }
    let mut rows = Vec::new();
    for fd in fds {
        let ctx = context(fd, sel)?;
        let xi: Vec<String> = (0..ctx.phase.xi.coeffs.len()).map(|j| ctx.phase.xi.describe(j)).collect();
        rows.push(json!({
            "id": ctx.id(),
            "xi": xi,
            "xi_coefficients": ctx.phase.xi.coeffs,
            "omega_alpha_rows": ctx.phase.alpha.rows(),
            "orderings": ctx.orders,
        }));
    }
    write_json(out, &selection_json(sel), json!(rows))
}

fn cmd_evaluate(sel: &Select, cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let s = cfg.mode_vector()?;
    let config = json!({ "run": cfg, "selection": selection_json(sel) });
    let lattice = LatticeOptions {
        mode_cutoff: cfg.cutoff,
        ..Default::default()
    };
    let result = match &sel.id {
        Some(_) => {
            let fd = select(sel)?.into_iter().next().expect("one diagram");
            let c = phase_constant(&fd);
            let ctx = context(fd, sel)?;
            let estimate = match cfg.mode {
                ModeKind::Lattice => serde_json::to_value(lattice_sums(&ctx, &cfg.model, &s, &lattice)?)?,
                ModeKind::Continuum => serde_json::to_value(continuum_j(&ctx, &cfg.model, &s, &cfg.mc())?)?,
            };
            json!({ "id": ctx.id(), "c": [c.re, c.im], "estimate": estimate })
        }
        None => {
            let mode = match cfg.mode {
                ModeKind::Lattice => Mode::Lattice(lattice),
                ModeKind::Continuum => Mode::Continuum(cfg.mc()),
            };
            serde_json::to_value(correlation(sel.m, sel.n, &cfg.model, &s, &mode)?)?
        }
    };
    write_json(out, &config, result)
}

fn cmd_sweep(sel: &Select, cfg: &RunConfig, family: Option<Family>, from: i32, to: i32, out: Option<&Path>) -> anyhow::Result<()> {
    if from >= to {
        return Err(usage("--from must be smaller than --to"));
    }
    let s = cfg.mode_vector()?;
    let grid = dyadic_grid(from, to);
    let contexts: Vec<DiagramContext> = match (&sel.id, family) {
        (Some(_), Some(_)) => return Err(usage("--id and --family are exclusive")),
        (Some(_), None) => vec![context(select(sel)?.into_iter().next().expect("one diagram"), sel)?],
        (None, Some(Family::F2)) => {
            let v: Vec<DiagramContext> = true_contexts(sel.m, sel.n)?
                .into_iter()
                .filter(|c| f2_index(&c.phase.alpha).is_some())
                .collect();
            if v.is_empty() {
                return Err(usage(format!("({}, {}) has no diagrams of the one-row family", sel.m, sel.n)));
            }
            v
        }
        _ => Vec::new(),
    };
    let target = match (&sel.id, family) {
        (Some(_), _) => SweepTarget::Diagram(&contexts[0]),
        (None, Some(Family::F2)) => SweepTarget::Sum(contexts.iter().map(|c| (phase_constant(&c.fd), c)).collect()),
        _ => SweepTarget::Correlation { m: sel.m, n: sel.n },
    };
    let r = scaling_sweep(&target, &cfg.model, &s, &grid, &cfg.mc())?;
    let config = json!({ "run": cfg, "selection": selection_json(sel), "family": family.map(|f| format!("{f:?}")), "grid": grid });
    let summary = json!({ "fit": r.fit, "predicted": r.predicted, "terms": contexts.len() });
    write_csv(out, &to_csv(&sweep_rows(&r))?, &config, summary)
}

fn cmd_quotient(name: Option<&str>, forms: Option<&Path>, from: i32, to: i32, cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let problem: QuotientProblem = match (name, forms) {
        (Some(n), None) => shipped_quotients()
            .into_iter()
            .find(|(k, _)| *k == n)
            .map(|(_, p)| p)
            .ok_or_else(|| {
                let names: Vec<&str> = shipped_quotients().iter().map(|(k, _)| *k).collect();
                usage(format!("unknown quotient {n}; shipped: {}", names.join(", ")))
            })?,
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        _ => return Err(usage("give exactly one of --name and --forms")),
    };
    if from >= to {
        return Err(usage("--from must be smaller than --to"));
    }
    let grid = dyadic_grid(from, to);
    let r = scaling_sweep(&SweepTarget::Quotient(&problem), &cfg.model, &[], &grid, &cfg.mc())?;
    let config = json!({ "problem": problem, "seed": cfg.seed, "samples": cfg.samples, "grid": grid });
    let summary = json!({ "rank": problem.rank(), "fit": r.fit, "predicted": r.predicted });
    write_csv(out, &to_csv(&sweep_rows(&r))?, &config, summary)
}

#[derive(Serialize)]
struct OracleRow {
    m: usize,
    n: usize,
    symmetrized: bool,
    oracle_re: f64,
    oracle_im: f64,
    oracle_stderr: f64,
    fine_re: f64,
    fine_im: f64,
    refinement_delta: f64,
    unconjugated_abs: f64,
    lattice_re: f64,
    lattice_im: f64,
    z_score: f64,
    replicates: u64,
    nodes: usize,
    cutoff: f64,
    modes: usize,
}

fn cmd_oracle(m: usize, n: usize, symmetrize: bool, check: bool, cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let s = cfg.mode_vector()?;
    let cutoff = cfg.cutoff.unwrap_or(OracleOptions::default().cutoff);
    let opts = OracleOptions {
        replicates: cfg.replicates,
        seed: cfg.seed,
        nodes: cfg.grid_nodes,
        cutoff,
    };
    let mut pairs = vec![(m, n)];
    if symmetrize && m != n {
        pairs.push((n, m));
    }
    let o = mc_correlation_sum(&pairs, &cfg.model, &s, &opts)?;
    let lat = LatticeOptions {
        mode_cutoff: Some(cutoff),
        ..Default::default()
    };
    let mut lattice = Complex64::new(0.0, 0.0);
    for &(a, b) in &pairs {
        lattice += correlation(a, b, &cfg.model, &s, &Mode::Lattice(lat))?.total.value;
    }
    let z = (o.value - lattice).norm() / o.stderr_norm();
    let row = OracleRow {
        m,
        n,
        symmetrized: pairs.len() > 1,
        oracle_re: o.value.re,
        oracle_im: o.value.im,
        oracle_stderr: o.stderr_norm(),
        fine_re: o.fine.re,
        fine_im: o.fine.im,
        refinement_delta: o.refinement_delta.norm(),
        unconjugated_abs: o.unconjugated.norm(),
        lattice_re: lattice.re,
        lattice_im: lattice.im,
        z_score: z,
        replicates: o.samples,
        nodes: o.nodes,
        cutoff,
        modes: o.modes,
    };
    let config = json!({ "run": cfg, "pairs": pairs });
    write_csv(out, &to_csv(&[row])?, &config, json!({ "agree_3sigma": z <= 3.0 }))?;
    if check && z > 3.0 {
        return Err(Error::Invariant(format!("oracle and lattice sum differ by {z:.2} standard errors")).into());
    }
    Ok(())
}

fn cmd_regress(out: Option<&Path>) -> anyhow::Result<()> {
    let r = wavediag::reference::regress()?;
    let mut text = String::new();
    for c in &r.checks {
        text.push_str(&format!("{} {}\n", if c.ok { "ok  " } else { "FAIL" }, c.name));
        if !c.ok {
            text.push_str(&format!("     {}\n", c.detail));
        }
    }
    write_artifact(out, &text)?;
    if !r.passed() {
        bail!(Error::Invariant("golden regression failed".into()));
    }
    Ok(())
}

fn cmd_dot(sel: &Select, kind: DotKind, out: Option<&Path>) -> anyhow::Result<()> {
    if sel.id.is_none() {
        return Err(usage("export-dot needs --id"));
    }
    let fd = select(sel)?.into_iter().next().expect("one diagram");
    let text = match kind {
        DotKind::Diagram => diagram_dot(&fd.base),
        DotKind::Feynman => feynman_dot(&fd),
        DotKind::Cycle => {
            let ctx = context(fd, sel)?;
            cycle_dot(&ctx.fd, &ctx.cycle)
        }
    };
    write_artifact(out, &text)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("setting up worker threads")?;
    }
    let base = RunConfig::load(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match cli.cmd {
        Cmd::Enumerate { m, n } => cmd_enumerate(m, n, out),
        Cmd::Pairings(sel) => cmd_pairings(&sel, out),
        Cmd::Cycle { sel, all } => cmd_cycle(&sel, all, out),
        Cmd::Alpha { sel, table, d } => cmd_alpha(&sel, table, d, out),
        Cmd::Xi { sel, kernels } => cmd_xi(&sel, kernels, out),
        Cmd::Evaluate { sel, model, mode, cutoff } => {
            let mut cfg = base.validated(&model)?;
            if let Some(mo) = mode {
                cfg.mode = mo;
            }
            if cutoff.is_some() {
                cfg.cutoff = cutoff;
            }
            cmd_evaluate(&sel, &cfg, out)
        }
        Cmd::Sweep {
            sel,
            model,
            family,
            from,
            to,
        } => cmd_sweep(&sel, &base.validated(&model)?, family, from, to, out),
        Cmd::Quotient {
            name,
            forms,
            from,
            to,
            seed,
            samples,
        } => {
            let flags = ModelFlags {
                seed,
                samples,
                ..Default::default()
            };
            let cfg = base.validated(&flags)?;
            cmd_quotient(name.as_deref(), forms.as_deref(), from, to, &cfg, out)
        }
        Cmd::Oracle {
            m,
            n,
            symmetrize,
            model,
            replicates,
            grid_nodes,
            cutoff,
            check,
        } => {
            let mut cfg = base;
            if cli.config.is_none() && model.horizon.is_none() {
                cfg.model.horizon = 2.0;
            }
            let mut cfg = cfg.validated(&model)?;
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(g) = grid_nodes {
                cfg.grid_nodes = g;
            }
            if cutoff.is_some() {
                cfg.cutoff = cutoff;
            }
            cmd_oracle(m, n, symmetrize, check, &cfg, out)
        }
        Cmd::Regress84 => cmd_regress(out),
        Cmd::ExportDot { sel, kind } => cmd_dot(&sel, kind, out),
    }
}

/// Exit codes: 2 usage/config, 3 precondition, 4 numerical, 5 invariant
/// violation, 1 anything else (I/O).
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::Precondition(_) | Error::Dimension { .. }) => 3,
        Some(Error::Numerical(_)) => 4,
        Some(Error::Invariant(_)) => 5,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
