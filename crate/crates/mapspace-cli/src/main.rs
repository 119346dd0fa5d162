//! Command-line front end for the mapping tools.
//!
//! Operators come from a workload file, machines from an accelerator file or
//! a named preset, and hand-written mappings from a mapping file. Reports go
//! to stdout (or `--output`) as a human summary, JSON, or plot-ready CSV.
//!
//! Exit codes: 0 on success, 2 for malformed input or usage, 3 when a search
//! or verification is infeasible (non-conformable operator, empty candidate
//! set, nothing fits, or a model/executor mismatch).

use clap::{Args, Parser, Subcommand, ValueEnum};
use mapspace::conformability::ConformabilityReport;
use mapspace::explorer::{BaselineStyle, SearchGoal, SearchResult};
use mapspace::mapping::{sample_valid_mapping, MappingViolation};
use mapspace::mdc::render_mdc;
use mapspace::offchip::{DbMode, DbOptions};
use mapspace::onchip::analyze_mapping_with;
use mapspace::oracle::simulate_mdc_reference;
use mapspace::{
    check_conformable, constrained_baseline, decoupled_optimize, roofline_peak, space_size,
    transform_to_mdc, AcceleratorConfig, CostReport, LoopNest, Mapping, PruningFlags, SpaceStats,
};
use mapspace_cli::{parse_accel_file, parse_mapping_file, parse_workload_file};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mapspace", version, about = "Mapping tools for spatial DNN accelerators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Report conformability of each operator in a workload file
    Check(CheckArgs),
    /// Transform a tiled mapping into its directive program
    Transform(TransformArgs),
    /// Price one mapping on one accelerator
    Cost(CostArgs),
    /// Search the mapping space with the decoupled strategy
    Optimize(OptimizeArgs),
    /// Search under a fixed mapping-style constraint
    Baseline(BaselineArgs),
    /// Report the roofline peak per operator
    Roofline(RooflineArgs),
    /// Cross-check the cost model against the reference executor
    Verify(VerifyArgs),
    /// Report mapping-space cardinalities and the decoupling reduction
    SpaceSize(SpaceSizeArgs),
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    workload: WorkloadArg,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    workload: WorkloadArg,
    /// Mapping file (TOML, or JSON with a .json extension)
    #[arg(long)]
    mapping: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[command(flatten)]
    workload: WorkloadArg,
    #[command(flatten)]
    accel: AccelArg,
    /// Mapping file (TOML, or JSON with a .json extension)
    #[arg(long)]
    mapping: PathBuf,
    #[command(flatten)]
    prune: PruneArgs,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    workload: WorkloadArg,
    #[command(flatten)]
    accel: AccelArg,
    /// Goals to optimize, comma separated
    #[arg(long, value_delimiter = ',', default_value = "runtime,energy,edp")]
    goals: Vec<SearchGoal>,
    /// Worker threads for candidate scoring (results are identical for any
    /// count)
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    prune: PruneArgs,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    workload: WorkloadArg,
    #[command(flatten)]
    accel: AccelArg,
    /// Mapping style the search is constrained to
    #[arg(long)]
    style: BaselineStyle,
    #[arg(long, value_delimiter = ',', default_value = "runtime,energy,edp")]
    goals: Vec<SearchGoal>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    prune: PruneArgs,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RooflineArgs {
    #[command(flatten)]
    workload: WorkloadArg,
    #[command(flatten)]
    accel: AccelArg,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    workload: WorkloadArg,
    #[command(flatten)]
    accel: AccelArg,
    /// Spot-check this mapping file
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Check this many random valid mappings instead
    #[arg(long, conflicts_with = "mapping")]
    samples: Option<u64>,
    /// Seed for `--samples`
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    prune: PruneArgs,
}

#[derive(Args)]
struct SpaceSizeArgs {
    #[command(flatten)]
    workload: WorkloadArg,
    #[command(flatten)]
    accel: AccelArg,
    #[command(flatten)]
    prune: PruneArgs,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WorkloadArg {
    /// Workload file: TOML with one [[operator]] per entry
    #[arg(long)]
    workload: PathBuf,
    /// Operator name, when the file defines several
    #[arg(long)]
    op: Option<String>,
}

#[derive(Args)]
struct AccelArg {
    /// Accelerator file (TOML), or a preset name: p1, p2
    #[arg(long)]
    accel: String,
}

#[derive(Args, Clone)]
struct PruneArgs {
    /// Allow tile sizes that do not divide the loop bounds evenly
    #[arg(long)]
    no_factor_tiles: bool,
    /// Drop level-2 points below this PE utilization; 0 disables the bound
    #[arg(long, default_value_t = 0.1)]
    utilization_bound: f64,
    /// Maximum number of simultaneously parallel loops
    #[arg(long, default_value_t = 3)]
    max_parallel: usize,
    /// Distinct-block extent model: the formula as printed, or the index
    /// span that matches enumeration
    #[arg(long, value_enum, default_value_t = DbModeArg::Exact)]
    db_mode: DbModeArg,
    /// Drop the tile-size factor for loops absent from a reference
    #[arg(long)]
    no_absent_factor: bool,
}

impl PruneArgs {
    fn flags(&self) -> PruningFlags {
        PruningFlags {
            factor_tiles: !self.no_factor_tiles,
            utilization_bound: (self.utilization_bound > 0.0).then_some(self.utilization_bound),
            max_parallel_loops: self.max_parallel,
        }
    }

    fn db_options(&self) -> DbOptions {
        DbOptions {
            mode: match self.db_mode {
                DbModeArg::Paper => DbMode::SumOfTiles,
                DbModeArg::Exact => DbMode::Span,
            },
            absent_factor: !self.no_absent_factor,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DbModeArg {
    Paper,
    Exact,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Human,
    Json,
    Csv,
}

/// Failure that terminates the run: `code` is the process exit status.
struct Failure {
    code: u8,
    msg: String,
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

fn infeasible(msg: impl Into<String>) -> Failure {
    Failure { code: 3, msg: msg.into() }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Check(a) => cmd_check(a),
        Cmd::Transform(a) => cmd_transform(a),
        Cmd::Cost(a) => cmd_cost(a),
        Cmd::Optimize(a) => cmd_optimize(a),
        Cmd::Baseline(a) => cmd_baseline(a),
        Cmd::Roofline(a) => cmd_roofline(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::SpaceSize(a) => cmd_space_size(a),
    }
}

// ---------------------------------------------------------------- input files

fn load_accel(spec: &str) -> Result<AcceleratorConfig, Failure> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string());
        parse_accel_file(&text, &stem).map_err(|e| config_err(format!("{}: {e}", path.display())))
    } else {
        AcceleratorConfig::preset(spec)
            .ok_or_else(|| config_err(format!("`{spec}` is neither a file nor a preset (p1|p2)")))
    }
}

fn load_workload(arg: &WorkloadArg) -> Result<Vec<LoopNest>, Failure> {
    let text = std::fs::read_to_string(&arg.workload)
        .map_err(|e| config_err(format!("{}: {e}", arg.workload.display())))?;
    let mut nests = parse_workload_file(&text)
        .map_err(|e| config_err(format!("{}: {e}", arg.workload.display())))?;
    if let Some(want) = &arg.op {
        nests.retain(|n| &n.name == want);
        if nests.is_empty() {
            return Err(config_err(format!("no operator named `{want}` in the file")));
        }
    }
    Ok(nests)
}

/// The selected operator for commands that take exactly one.
fn single(nests: Vec<LoopNest>) -> Result<LoopNest, Failure> {
    if nests.len() > 1 {
        let names: Vec<&str> = nests.iter().map(|n| n.name.as_str()).collect();
        return Err(config_err(format!(
            "the file defines several operators; pick one with --op ({})",
            names.join(", ")
        )));
    }
    Ok(nests.into_iter().next().unwrap())
}

fn load_mapping(path: &Path, nest: &LoopNest) -> Result<Mapping, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e == "json");
    parse_mapping_file(&text, json, nest)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))
}

// ------------------------------------------------------------------- output

fn emit(text: String, output: &Option<PathBuf>) -> Result<(), Failure> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| config_err(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

fn fmt_tiles(v: &[u64]) -> String {
    let inner: Vec<String> = v.iter().map(|t| t.to_string()).collect();
    format!("[{}]", inner.join(","))
}

// ------------------------------------------------------------------ commands

#[derive(Serialize)]
struct CheckRow {
    operator: String,
    conformable: bool,
    r1: bool,
    r2: bool,
    r3: bool,
    r4: bool,
    violations: Vec<String>,
    independent_dims: Vec<IndependentRow>,
}

#[derive(Serialize)]
struct IndependentRow {
    dim_var: String,
    iterators: Vec<String>,
}

fn check_row(report: &ConformabilityReport) -> CheckRow {
    CheckRow {
        operator: report.operator.clone(),
        conformable: report.conformable(),
        r1: report.r1,
        r2: report.r2,
        r3: report.r3,
        r4: report.r4,
        violations: report.violations.clone(),
        independent_dims: report
            .independent_dims
            .iter()
            .map(|d| IndependentRow {
                dim_var: d.dim_var.clone(),
                iterators: d.iterators.clone(),
            })
            .collect(),
    }
}

fn cmd_check(a: CheckArgs) -> Result<(), Failure> {
    let nests = load_workload(&a.workload)?;
    let rows: Vec<CheckRow> = nests.iter().map(|n| check_row(&check_conformable(n))).collect();
    let text = match a.format {
        Format::Json => to_json(&rows),
        Format::Csv => return Err(config_err("check has no CSV form; use human or json")),
        Format::Human => {
            let mut s = String::new();
            for row in &rows {
                let verdict = if row.conformable { "conformable" } else { "NOT conformable" };
                let _ = writeln!(s, "operator {}: {verdict}", row.operator);
                let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
                let _ = writeln!(
                    s,
                    "  r1 {}; r2 {}; r3 {}; r4 {}",
                    mark(row.r1),
                    mark(row.r2),
                    mark(row.r3),
                    mark(row.r4)
                );
                for v in &row.violations {
                    let _ = writeln!(s, "  - {v}");
                }
                for d in &row.independent_dims {
                    let _ = writeln!(s, "  independent {} <- {}", d.dim_var, d.iterators.join("+"));
                }
            }
            s
        }
    };
    emit(text, &a.output)
}

/// Conformability gate shared by the mapping-consuming commands.
fn require_conformable(nest: &LoopNest) -> Result<ConformabilityReport, Failure> {
    let report = check_conformable(nest);
    if !report.conformable() {
        let mut msg = format!("operator `{}` is not conformable:", nest.name);
        for v in &report.violations {
            let _ = write!(msg, "\n  - {v}");
        }
        return Err(infeasible(msg));
    }
    Ok(report)
}

#[derive(Serialize)]
struct TransformOut {
    operator: String,
    text: String,
    mdc: mapspace::MdcMapping,
}

fn cmd_transform(a: TransformArgs) -> Result<(), Failure> {
    let nest = single(load_workload(&a.workload)?)?;
    let mapping = load_mapping(&a.mapping, &nest)?;
    let report = require_conformable(&nest)?;
    let mdc = transform_to_mdc(&mapping, &nest, &report.ddg)
        .map_err(|e| config_err(format!("mapping does not fit `{}`: {e}", nest.name)))?;
    let text = match a.format {
        Format::Human => render_mdc(&mdc),
        Format::Json => to_json(&TransformOut {
            operator: nest.name.clone(),
            text: render_mdc(&mdc),
            mdc,
        }),
        Format::Csv => return Err(config_err("transform has no CSV form; use human or json")),
    };
    emit(text, &a.output)
}

#[derive(Serialize)]
struct CostOut {
    operator: String,
    mapping: Mapping,
    report: CostReport,
    mdc_text: String,
}

fn cmd_cost(a: CostArgs) -> Result<(), Failure> {
    let nest = single(load_workload(&a.workload)?)?;
    let hw = load_accel(&a.accel.accel)?;
    let mapping = load_mapping(&a.mapping, &nest)?;
    let report = require_conformable(&nest)?;

    // Feasibility only: capacity and PE bounds, not search heuristics.
    let violations =
        mapspace::validate_mapping(&nest, &hw, &mapping, &PruningFlags::none());
    let (shape, capacity): (Vec<_>, Vec<_>) = violations.iter().partition(|v| {
        matches!(
            v,
            MappingViolation::Shape { .. } | MappingViolation::LayoutInvalid { .. }
        )
    });
    if let Some(v) = shape.first() {
        return Err(config_err(format!("mapping file: {v:?}")));
    }
    if !capacity.is_empty() {
        let mut msg = format!("mapping is infeasible on `{}`:", hw.name);
        for v in &capacity {
            let _ = write!(msg, "\n  - {v:?}");
        }
        return Err(infeasible(msg));
    }

    let mdc = transform_to_mdc(&mapping, &nest, &report.ddg)
        .map_err(|e| config_err(format!("mapping does not fit `{}`: {e}", nest.name)))?;
    let cost = analyze_mapping_with(
        &mdc,
        &nest,
        &hw,
        &hw.energy_profile,
        &mapping.layout,
        &a.prune.db_options(),
    )
    .map_err(|e| config_err(format!("analysis: {e}")))?;

    let text = match a.format {
        Format::Json => to_json(&CostOut {
            operator: nest.name.clone(),
            mapping,
            report: cost,
            mdc_text: render_mdc(&mdc),
        }),
        Format::Csv => {
            let mut s = String::from(
                "operator,runtime_seconds,latency_cycles,energy,edp,pe_utilization,steps,units,exact\n",
            );
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                nest.name,
                cost.runtime_seconds,
                cost.latency_cycles,
                cost.energy,
                cost.edp,
                cost.pe_utilization,
                cost.steps,
                cost.units,
                cost.exact
            );
            s
        }
        Format::Human => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "operator {} on {}: runtime {:.6e} s, {} cycles, energy {:.6e}, edp {:.6e}",
                nest.name, hw.name, cost.runtime_seconds, cost.latency_cycles, cost.energy, cost.edp
            );
            let _ = writeln!(
                s,
                "  {} PEs over {} steps, utilization {:.3}, L1 {} B, L2 {} B, {}",
                cost.units,
                cost.steps,
                cost.pe_utilization,
                cost.l1_required_bytes,
                cost.l2_required_bytes,
                if cost.exact { "exact" } else { "approximate" }
            );
            for (t, tr) in &cost.traffic {
                let _ = writeln!(
                    s,
                    "  {t}: l1_new {}, l2 {}, forwarded {}, writeback {}, dram r/w {}/{} blocks",
                    tr.l1_new,
                    tr.l2_unique,
                    tr.forwarded,
                    tr.writeback,
                    tr.dram_read_blocks,
                    tr.dram_write_blocks
                );
            }
            s
        }
    };
    emit(text, &a.output)
}

#[derive(Serialize)]
struct SearchRow {
    operator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    style: Option<String>,
    plan: mapspace::OffchipPlan,
    stats: SpaceStats,
    reduction: f64,
    evaluated: u64,
    goals: Vec<GoalRow>,
}

#[derive(Serialize)]
struct GoalRow {
    goal: String,
    mapping: Mapping,
    report: CostReport,
    mdc_text: String,
}

fn search_row(operator: &str, style: Option<BaselineStyle>, r: SearchResult) -> SearchRow {
    SearchRow {
        operator: operator.to_string(),
        style: style.map(|s| s.as_str().to_string()),
        reduction: r.stats.reduction(),
        goals: r
            .goals
            .into_iter()
            .map(|g| GoalRow {
                goal: g.goal.as_str().to_string(),
                mdc_text: render_mdc(&g.mdc),
                mapping: g.mapping,
                report: g.report,
            })
            .collect(),
        plan: r.plan,
        stats: r.stats,
        evaluated: r.evaluated,
    }
}

fn render_search(rows: &[SearchRow], format: Format) -> Result<String, Failure> {
    Ok(match format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = String::from(
                "operator,style,goal,runtime_seconds,latency_cycles,energy,edp,pe_utilization,evaluated\n",
            );
            for row in rows {
                for g in &row.goals {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{}",
                        row.operator,
                        row.style.as_deref().unwrap_or(""),
                        g.goal,
                        g.report.runtime_seconds,
                        g.report.latency_cycles,
                        g.report.energy,
                        g.report.edp,
                        g.report.pe_utilization,
                        row.evaluated
                    );
                }
            }
            s
        }
        Format::Human => {
            let mut s = String::new();
            for row in rows {
                let style = row
                    .style
                    .as_deref()
                    .map(|st| format!(" [{st}]"))
                    .unwrap_or_default();
                let _ = writeln!(
                    s,
                    "operator {}{style}: t3 {}, dmc {:.4}, {} candidates, space reduction {:.3e}",
                    row.operator,
                    fmt_tiles(&row.plan.t3),
                    row.plan.dmc,
                    row.evaluated,
                    row.reduction
                );
                for g in &row.goals {
                    let _ = writeln!(
                        s,
                        "  {:<7} runtime {:.6e} s | energy {:.6e} | edp {:.6e} | util {:.3} | t2 {} t1 {}",
                        g.goal,
                        g.report.runtime_seconds,
                        g.report.energy,
                        g.report.edp,
                        g.report.pe_utilization,
                        fmt_tiles(&g.mapping.t2),
                        fmt_tiles(&g.mapping.t1)
                    );
                }
            }
            s
        }
    })
}

fn cmd_optimize(a: OptimizeArgs) -> Result<(), Failure> {
    let nests = load_workload(&a.workload)?;
    let hw = load_accel(&a.accel.accel)?;
    let flags = a.prune.flags();
    let opts = a.prune.db_options();
    let mut rows = Vec::new();
    for nest in &nests {
        let r = decoupled_optimize(nest, &hw, &a.goals, &flags, &opts, a.workers)
            .map_err(|e| infeasible(format!("operator `{}`: {e}", nest.name)))?;
        rows.push(search_row(&nest.name, None, r));
    }
    emit(render_search(&rows, a.format)?, &a.output)
}

fn cmd_baseline(a: BaselineArgs) -> Result<(), Failure> {
    let nests = load_workload(&a.workload)?;
    let hw = load_accel(&a.accel.accel)?;
    let flags = a.prune.flags();
    let opts = a.prune.db_options();
    let mut rows = Vec::new();
    for nest in &nests {
        let r = constrained_baseline(nest, &hw, a.style, &a.goals, &flags, &opts, a.workers)
            .map_err(|e| infeasible(format!("operator `{}`: {e}", nest.name)))?;
        rows.push(search_row(&nest.name, Some(a.style), r));
    }
    emit(render_search(&rows, a.format)?, &a.output)
}

#[derive(Serialize)]
struct RooflineRow {
    operator: String,
    gops: f64,
    bound: mapspace::explorer::BoundKind,
    seconds: f64,
    compute_seconds: f64,
    bandwidth_seconds: f64,
}

fn cmd_roofline(a: RooflineArgs) -> Result<(), Failure> {
    let nests = load_workload(&a.workload)?;
    let hw = load_accel(&a.accel.accel)?;
    let rows: Vec<RooflineRow> = nests
        .iter()
        .map(|nest| {
            let p = roofline_peak(nest, &hw);
            RooflineRow {
                operator: nest.name.clone(),
                gops: p.gops,
                bound: p.bound,
                seconds: p.seconds,
                compute_seconds: p.compute_seconds,
                bandwidth_seconds: p.bandwidth_seconds,
            }
        })
        .collect();
    let text = match a.format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s =
                String::from("operator,gops,bound,seconds,compute_seconds,bandwidth_seconds\n");
            for r in &rows {
                let bound = match r.bound {
                    mapspace::explorer::BoundKind::Compute => "compute",
                    mapspace::explorer::BoundKind::Bandwidth => "bandwidth",
                };
                let _ = writeln!(
                    s,
                    "{},{},{bound},{},{},{}",
                    r.operator, r.gops, r.seconds, r.compute_seconds, r.bandwidth_seconds
                );
            }
            s
        }
        Format::Human => {
            let mut s = String::new();
            for r in &rows {
                let bound = match r.bound {
                    mapspace::explorer::BoundKind::Compute => "compute",
                    mapspace::explorer::BoundKind::Bandwidth => "bandwidth",
                };
                let _ = writeln!(
                    s,
                    "operator {}: peak {} GOPS, {bound}-bound at {:.6e} s (compute {:.6e}, bandwidth {:.6e})",
                    r.operator, r.gops, r.seconds, r.compute_seconds, r.bandwidth_seconds
                );
            }
            s
        }
    };
    emit(text, &a.output)
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    let nest = single(load_workload(&a.workload)?)?;
    let hw = load_accel(&a.accel.accel)?;
    let report = require_conformable(&nest)?;
    let opts = a.prune.db_options();

    let mappings: Vec<Mapping> = if let Some(path) = &a.mapping {
        vec![load_mapping(path, &nest)?]
    } else if let Some(samples) = a.samples {
        // Sampling keeps the factor and parallel-loop structure but not the
        // utilization heuristic; verification wants coverage, not quality.
        // The PE budget is capped at what the reference executor accepts.
        let flags = PruningFlags {
            utilization_bound: None,
            ..a.prune.flags()
        };
        let mut sample_hw = hw.clone();
        sample_hw.num_pes = hw.num_pes.min(mapspace::oracle::MAX_SIM_PES);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
        let mut rb = |n: u64| rng.gen_range(0..n);
        let mut out = Vec::new();
        for i in 0..samples {
            match sample_valid_mapping(&nest, &sample_hw, &flags, 256, &mut rb) {
                Some(m) => out.push(m),
                None => {
                    return Err(infeasible(format!(
                        "no valid mapping found for sample {i}; relax the pruning flags"
                    )))
                }
            }
        }
        out
    } else {
        return Err(config_err("provide --mapping FILE or --samples N"));
    };

    let mut checked = 0u64;
    let mut skipped = 0u64;
    for (i, m) in mappings.iter().enumerate() {
        let mdc = transform_to_mdc(m, &nest, &report.ddg)
            .map_err(|e| config_err(format!("mapping {i}: {e}")))?;
        let cost = analyze_mapping_with(&mdc, &nest, &hw, &hw.energy_profile, &m.layout, &opts)
            .map_err(|e| config_err(format!("mapping {i}: analysis: {e}")))?;
        if !cost.exact {
            skipped += 1;
            continue;
        }
        // Idle PEs change no movement count, so the executor runs with
        // exactly the engaged PEs; that also keeps it inside its budget on
        // large arrays.
        let mut sim_hw = hw.clone();
        sim_hw.num_pes = m.t2.iter().product();
        let trace = simulate_mdc_reference(&mdc, &nest, &sim_hw)
            .map_err(|e| config_err(format!("mapping {i}: reference executor: {e}")))?;
        let mut mismatches: Vec<String> = Vec::new();
        if cost.steps != trace.steps as u128 {
            mismatches.push(format!("steps: model {} executor {}", cost.steps, trace.steps));
        }
        if cost.units != trace.units {
            mismatches.push(format!("units: model {} executor {}", cost.units, trace.units));
        }
        if cost.total_macs != trace.total_macs {
            mismatches.push(format!(
                "total_macs: model {} executor {}",
                cost.total_macs, trace.total_macs
            ));
        }
        for (tensor, tr) in &cost.traffic {
            let sim = |map: &BTreeMap<String, u128>| map.get(tensor).copied().unwrap_or(0);
            let lanes = [
                ("l1_new", tr.l1_new, sim(&trace.l1_new)),
                ("l2", tr.l2_unique, sim(&trace.l2_fetches)),
                ("forwarded", tr.forwarded, sim(&trace.forwarded)),
                ("writeback", tr.writeback, sim(&trace.writebacks)),
            ];
            for (lane, model, executor) in lanes {
                if model != executor {
                    mismatches.push(format!(
                        "{tensor} {lane}: model {model} executor {executor}"
                    ));
                }
            }
        }
        if !mismatches.is_empty() {
            let mut msg = format!(
                "mapping {i} disagrees with the reference executor (t3 {}, t2 {}, t1 {}):",
                fmt_tiles(&m.t3),
                fmt_tiles(&m.t2),
                fmt_tiles(&m.t1)
            );
            for d in &mismatches {
                let _ = write!(msg, "\n  - {d}");
            }
            return Err(infeasible(msg));
        }
        checked += 1;
    }
    println!(
        "verified {checked} mapping(s) on `{}`: model and executor agree{}",
        nest.name,
        if skipped > 0 {
            format!(" ({skipped} approximate mapping(s) skipped)")
        } else {
            String::new()
        }
    );
    Ok(())
}

#[derive(Serialize)]
struct SpaceRow {
    operator: String,
    original: u128,
    offchip: u128,
    onchip: u128,
    reduction: f64,
}

fn cmd_space_size(a: SpaceSizeArgs) -> Result<(), Failure> {
    let nests = load_workload(&a.workload)?;
    let hw = load_accel(&a.accel.accel)?;
    let flags = a.prune.flags();
    let rows: Vec<SpaceRow> = nests
        .iter()
        .map(|nest| {
            let stats = space_size(nest, &hw, &flags);
            SpaceRow {
                operator: nest.name.clone(),
                original: stats.original,
                offchip: stats.offchip,
                onchip: stats.onchip,
                reduction: stats.reduction(),
            }
        })
        .collect();
    let text = match a.format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = String::from("operator,original,offchip,onchip,reduction\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.operator, r.original, r.offchip, r.onchip, r.reduction
                );
            }
            s
        }
        Format::Human => {
            let mut s = String::new();
            for r in &rows {
                let _ = writeln!(
                    s,
                    "operator {}: original {:.3e}, decoupled {} + {}, reduction {:.3e}",
                    r.operator,
                    r.original as f64,
                    r.offchip,
                    r.onchip,
                    r.reduction
                );
            }
            s
        }
    };
    emit(text, &a.output)
}
