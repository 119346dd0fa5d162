//! Decoupled mapping-space search.
//!
//! The driver fixes the off-chip schedule first: one exhaustive pass over
//! DRAM layouts and level-3 tiles picks the plan with the cheapest block
//! traffic, and the level-3 loop order follows from the cost slopes. The
//! on-chip subspace at that fixed outer tile is then scored exhaustively:
//! each candidate is rewritten into a directive program and costed by the
//! closed-form analyzer, and the minima for every optimization goal are
//! tracked in a single pass.
//!
//! Scoring covers the whole subspace but does not call the analyzer once
//! per candidate. For a fixed (t2, t1), a level-2 loop whose inter-tile
//! directive has one trip and no parallel degree is inert: wherever the
//! level-2 order places it, the transform emits the same spatial regions
//! (parallel loops keep their relative order) and a directive whose window
//! equals its parent, so the analyzer sees identical step classes and
//! returns an identical report. Candidates are therefore grouped by the
//! arrangement of their non-inert loops, each group is analyzed once, and
//! the group's lexicographically least member stands in for the tie-break,
//! which is exactly the member a candidate-by-candidate scan would keep.
//!
//! The per-goal reduction is a strict total order (goal value, then
//! runtime, then the mapping encoding), so results are identical for any
//! worker count. Baseline searches reuse the same pipeline with the
//! candidate stream filtered down to a mapping style's parallel dimensions
//! or loop-order constraint.

use crate::conformability::check_conformable;
use crate::hw::AcceleratorConfig;
use crate::loopnest::{AccessDirection, LoopNest};
use crate::mapping::{
    divisors, space_size, validate_mapping, FootprintModel, Mapping, PruningFlags, SpaceStats,
};
use crate::mdc::{transform_to_mdc, MdcMapping};
use crate::offchip::{optimize_offchip, DbOptions, OffchipError, OffchipPlan};
use crate::onchip::{analyze_mapping_with, CostReport};
use crate::par;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExplorerError {
    #[error(transparent)]
    Offchip(#[from] OffchipError),
    #[error("nest `{nest}` is not conformable")]
    NotConformable { nest: String },
    #[error("style not applicable: {0}")]
    Style(String),
    #[error("every on-chip candidate was pruned; relax the pruning flags")]
    NoCandidates,
}

/// What the search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchGoal {
    Runtime,
    Energy,
    Edp,
}

impl SearchGoal {
    pub const ALL: [SearchGoal; 3] = [SearchGoal::Runtime, SearchGoal::Energy, SearchGoal::Edp];

    fn slot(self) -> usize {
        match self {
            SearchGoal::Runtime => 0,
            SearchGoal::Energy => 1,
            SearchGoal::Edp => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SearchGoal::Runtime => "runtime",
            SearchGoal::Energy => "energy",
            SearchGoal::Edp => "edp",
        }
    }
}

impl std::str::FromStr for SearchGoal {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "runtime" => Ok(SearchGoal::Runtime),
            "energy" => Ok(SearchGoal::Energy),
            "edp" => Ok(SearchGoal::Edp),
            other => Err(format!("unknown goal `{other}` (runtime|energy|edp)")),
        }
    }
}

/// Fixed-dataflow mapping styles used as search baselines. Each restricts
/// which dimensions may be parallel or where loops sit in the level-2 order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineStyle {
    /// Filter rows and output rows spread across the array.
    RowStationary,
    /// Weight-indexing iterators pinned innermost so each PE reuses its
    /// resident weights.
    WeightStationary,
    /// Each PE owns output pixels: only the two output spatial dims go
    /// parallel.
    OutputStationary,
    /// Input and output channels go parallel.
    InterstellarLike,
    /// Only output channels go parallel.
    DmazeLike,
}

impl BaselineStyle {
    pub const ALL: [BaselineStyle; 5] = [
        BaselineStyle::RowStationary,
        BaselineStyle::WeightStationary,
        BaselineStyle::OutputStationary,
        BaselineStyle::InterstellarLike,
        BaselineStyle::DmazeLike,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineStyle::RowStationary => "row_stationary",
            BaselineStyle::WeightStationary => "weight_stationary",
            BaselineStyle::OutputStationary => "output_stationary",
            BaselineStyle::InterstellarLike => "interstellar_like",
            BaselineStyle::DmazeLike => "dmaze_like",
        }
    }
}

impl std::str::FromStr for BaselineStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaselineStyle::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown style `{s}` ({})",
                    BaselineStyle::ALL.map(|b| b.as_str()).join("|")
                )
            })
    }
}

/// Best mapping under one goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalOutcome {
    pub goal: SearchGoal,
    pub mapping: Mapping,
    pub mdc: MdcMapping,
    pub report: CostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub plan: OffchipPlan,
    /// One entry per requested goal, in request order.
    pub goals: Vec<GoalOutcome>,
    pub stats: SpaceStats,
    /// On-chip candidates scored.
    pub evaluated: u64,
    /// Wall-clock time of the search; excluded from serialized output so
    /// reports are byte-identical across runs and worker counts.
    #[serde(skip)]
    pub search_seconds: f64,
}

/// Runtime lower bound from peak compute and minimal DRAM traffic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflinePeak {
    /// The binding bound in seconds.
    pub seconds: f64,
    pub bound: BoundKind,
    pub compute_seconds: f64,
    pub bandwidth_seconds: f64,
    /// Advertised peak throughput, ops per nanosecond.
    pub gops: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Compute,
    Bandwidth,
}

/// Lower bound on runtime: every MAC must pass through a PE, and every
/// tensor must cross the memory interface at least once.
pub fn roofline_peak(nest: &LoopNest, hw: &AcceleratorConfig) -> RooflinePeak {
    let macs = nest.macs() as f64;
    let compute_seconds = 2.0 * macs / (hw.num_pes as f64 * 2.0 * hw.clock_hz());
    let mut seen = std::collections::BTreeSet::new();
    let mut bytes = 0.0;
    for r in &nest.refs {
        if seen.insert(r.tensor.as_str()) {
            bytes += r.size() as f64 * nest.bytes_per_element as f64;
        }
    }
    let bandwidth_seconds = bytes / (hw.noc_bandwidth_gbps * 1e9);
    let (seconds, bound) = if compute_seconds >= bandwidth_seconds {
        (compute_seconds, BoundKind::Compute)
    } else {
        (bandwidth_seconds, BoundKind::Bandwidth)
    };
    RooflinePeak {
        seconds,
        bound,
        compute_seconds,
        bandwidth_seconds,
        gops: hw.peak_gops(),
    }
}

/// One scored candidate, with everything the tie-break needs.
#[derive(Debug, Clone)]
struct Cand {
    /// Goal values indexed by [`SearchGoal::slot`].
    vals: [f64; 3],
    enc: Vec<u64>,
    order2: Vec<usize>,
    t2: Vec<u64>,
    t1: Vec<u64>,
}

fn better_for(goal: usize, a: &Cand, b: &Cand) -> bool {
    if a.vals[goal] != b.vals[goal] {
        return a.vals[goal] < b.vals[goal];
    }
    if a.vals[0] != b.vals[0] {
        return a.vals[0] < b.vals[0];
    }
    a.enc < b.enc
}

type Multi = [Option<Cand>; 3];

fn merge_multi(mut a: Multi, b: Multi) -> Multi {
    for (g, (sa, sb)) in a.iter_mut().zip(b).enumerate() {
        *sa = match (sa.take(), sb) {
            (Some(x), Some(y)) => Some(if better_for(g, &y, &x) { y } else { x }),
            (x, None) => x,
            (None, y) => y,
        };
    }
    a
}

/// Searches the full decoupled space and returns the best mapping per goal.
///
/// The off-chip stage runs once; the on-chip subspace at its tile is
/// enumerated, transformed, and scored in one pass. Results are
/// deterministic for any `workers` value.
pub fn decoupled_optimize(
    nest: &LoopNest,
    hw: &AcceleratorConfig,
    goals: &[SearchGoal],
    flags: &PruningFlags,
    opts: &DbOptions,
    workers: usize,
) -> Result<SearchResult, ExplorerError> {
    search(nest, hw, goals, flags, opts, workers, None)
}

/// Same pipeline as [`decoupled_optimize`] restricted to one mapping
/// style's subspace.
pub fn constrained_baseline(
    nest: &LoopNest,
    hw: &AcceleratorConfig,
    style: BaselineStyle,
    goals: &[SearchGoal],
    flags: &PruningFlags,
    opts: &DbOptions,
    workers: usize,
) -> Result<SearchResult, ExplorerError> {
    let filter = style_filter(nest, style)?;
    search(nest, hw, goals, flags, opts, workers, Some(filter))
}

/// The representative candidate of one equivalence class of level-2 orders
/// with identical cost; the class population is tallied before it is queued.
struct ClassWork {
    order2: Vec<usize>,
    t2: Vec<u64>,
    t1: Vec<u64>,
}

/// Lexicographically least interleaving of `fixed` (order kept) with `free`
/// (sorted ascending, placed anywhere).
fn lexmin_merge(fixed: &[usize], free: &[usize], out: &mut Vec<usize>) {
    let (mut i, mut j) = (0, 0);
    while i < fixed.len() || j < free.len() {
        if j >= free.len() || (i < fixed.len() && fixed[i] < free[j]) {
            out.push(fixed[i]);
            i += 1;
        } else {
            out.push(free[j]);
            j += 1;
        }
    }
}

/// Advance to the next lexicographic permutation in place; false at the last.
fn next_perm(p: &mut [usize]) -> bool {
    let n = p.len();
    let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).unwrap();
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Mixed-radix increment over per-position candidate counts; false on wrap.
fn bump(idx: &mut [usize], len: impl Fn(usize) -> usize) -> bool {
    for i in 0..idx.len() {
        idx[i] += 1;
        if idx[i] < len(i) {
            return true;
        }
        idx[i] = 0;
    }
    false
}

fn no_candidates(styled: bool) -> ExplorerError {
    if styled {
        ExplorerError::Style("no on-chip candidate satisfies the style constraints".into())
    } else {
        ExplorerError::NoCandidates
    }
}

fn search(
    nest: &LoopNest,
    hw: &AcceleratorConfig,
    goals: &[SearchGoal],
    flags: &PruningFlags,
    opts: &DbOptions,
    workers: usize,
    filter: Option<StyleFilter>,
) -> Result<SearchResult, ExplorerError> {
    let t0 = Instant::now();
    let conf = check_conformable(nest);
    if !conf.conformable() {
        return Err(ExplorerError::NotConformable {
            nest: nest.name.clone(),
        });
    }
    let plan = optimize_offchip(nest, hw, flags, opts, workers)?;

    let n = nest.iterators.len();
    let (par_allowed, suffix): (Option<&[usize]>, Option<&[usize]>) = match &filter {
        Some(StyleFilter::Parallel(a)) => (Some(a), None),
        Some(StyleFilter::Suffix(s)) => (None, Some(s)),
        None => (None, None),
    };
    let fact: Vec<u64> = {
        let mut f = vec![1u64; n + 1];
        for i in 1..=n {
            f[i] = f[i - 1] * i as u64;
        }
        f
    };

    // Same candidate chains as `enumerate_onchip`, iterated tiles-outermost
    // so each (t2, t1) partitions its orders into classes exactly once.
    let t2_cands: Vec<Vec<u64>> = plan
        .t3
        .iter()
        .map(|&t| {
            if flags.factor_tiles {
                divisors(t).into_iter().filter(|&d| d <= hw.num_pes).collect()
            } else {
                (1..=t.min(hw.num_pes)).collect()
            }
        })
        .collect();
    if t2_cands.iter().any(|c| c.is_empty()) {
        return Err(no_candidates(filter.is_some()));
    }
    let fp = FootprintModel::new(nest);
    let extents = nest.extents();

    let t2_ok = |t2: &[u64]| -> bool {
        let degree: u128 = t2.iter().map(|&d| d as u128).product();
        if degree > hw.num_pes as u128 {
            return false;
        }
        if let Some(bound) = flags.utilization_bound {
            if (degree as f64 / hw.num_pes as f64) < bound {
                return false;
            }
        }
        if t2.iter().filter(|&&d| d > 1).count() > flags.max_parallel_loops {
            return false;
        }
        par_allowed.map_or(true, |a| {
            t2.iter().enumerate().all(|(i, &d)| d == 1 || a.contains(&i))
        })
    };

    let score_class = |cw: &ClassWork| -> Multi {
        let m = Mapping {
            t1: cw.t1.clone(),
            t2: cw.t2.clone(),
            order2: cw.order2.clone(),
            t3: plan.t3.clone(),
            order3: plan.order3.clone(),
            layout: plan.layout.clone(),
        };
        debug_assert!(validate_mapping(nest, hw, &m, flags).is_empty());
        let mdc = transform_to_mdc(&m, nest, &conf.ddg).expect("enumerated candidate transforms");
        let rep = analyze_mapping_with(&mdc, nest, hw, &hw.energy_profile, &plan.layout, opts)
            .expect("enumerated candidate analyzes");
        let cand = Cand {
            vals: [rep.runtime_seconds, rep.energy, rep.edp],
            enc: m.encoding(),
            order2: m.order2,
            t2: m.t2,
            t1: m.t1,
        };
        [Some(cand.clone()), Some(cand.clone()), Some(cand)]
    };

    const CHUNK: usize = 4096;
    let mut buffer: Vec<ClassWork> = Vec::with_capacity(CHUNK);
    let mut best: Option<Multi> = None;
    let mut evaluated: u64 = 0;
    let flush = |buffer: &mut Vec<ClassWork>, best: &mut Option<Multi>| {
        if buffer.is_empty() {
            return;
        }
        let part = par::map_merge(
            std::mem::take(buffer),
            workers.max(1),
            |cw| score_class(&cw),
            merge_multi,
        )
        .expect("nonempty chunk");
        *best = Some(match best.take() {
            Some(b) => merge_multi(b, part),
            None => part,
        });
    };

    let mut sigma: Vec<usize> = Vec::with_capacity(n);
    let mut order2: Vec<usize> = Vec::with_capacity(n);
    let mut t2_idx = vec![0usize; n];
    'outer: loop {
        let t2: Vec<u64> = (0..n).map(|i| t2_cands[i][t2_idx[i]]).collect();
        if t2_ok(&t2) {
            let t1_cands: Vec<Vec<u64>> = (0..n)
                .map(|i| {
                    let quot = plan.t3[i] / t2[i];
                    if flags.factor_tiles {
                        divisors(quot)
                    } else {
                        (1..=quot).collect()
                    }
                })
                .collect();
            let mut t1_idx = vec![0usize; n];
            loop {
                let t1: Vec<u64> = (0..n).map(|i| t1_cands[i][t1_idx[i]]).collect();
                let need = 2 * fp.total_elems(&t1) * nest.bytes_per_element as u128;
                if need <= hw.l1_bytes as u128 {
                    // Non-inert loops: parallel, or more than one level-2
                    // inter-tile step within the level-3 window.
                    let active: Vec<usize> = (0..n)
                        .filter(|&i| {
                            t2[i] > 1
                                || crate::onchip::num_time_steps(
                                    t1[i] * t2[i],
                                    t1[i] * t2[i],
                                    plan.t3[i].min(extents[i]),
                                ) > 1
                        })
                        .collect();
                    let k = active.len();
                    let inert: Vec<usize> = (0..n).filter(|i| !active.contains(i)).collect();
                    let mut perm: Vec<usize> = (0..k).collect();
                    loop {
                        sigma.clear();
                        sigma.extend(perm.iter().map(|&j| active[j]));
                        order2.clear();
                        let covered = match suffix {
                            None => {
                                lexmin_merge(&sigma, &inert, &mut order2);
                                Some(fact[n] / fact[k])
                            }
                            Some(w) => {
                                // Orders whose last |w| slots hold exactly
                                // the suffix set: the non-inert dims of the
                                // set must already trail in sigma.
                                let in_w = |i: &usize| w.contains(i);
                                let sw = sigma.iter().filter(|i| in_w(i)).count();
                                if sigma[k - sw..].iter().all(in_w) {
                                    let (pre, suf) = sigma.split_at(k - sw);
                                    let free_pre: Vec<usize> =
                                        inert.iter().copied().filter(|i| !in_w(i)).collect();
                                    let free_suf: Vec<usize> =
                                        inert.iter().copied().filter(in_w).collect();
                                    lexmin_merge(pre, &free_pre, &mut order2);
                                    lexmin_merge(suf, &free_suf, &mut order2);
                                    Some(
                                        fact[n - w.len()] / fact[pre.len()] * fact[w.len()]
                                            / fact[suf.len()],
                                    )
                                } else {
                                    None
                                }
                            }
                        };
                        if let Some(covered) = covered {
                            evaluated += covered;
                            buffer.push(ClassWork {
                                order2: order2.clone(),
                                t2: t2.clone(),
                                t1: t1.clone(),
                                covered,
                            });
                            if buffer.len() >= CHUNK {
                                flush(&mut buffer, &mut best);
                            }
                        }
                        if !next_perm(&mut perm) {
                            break;
                        }
                    }
                }
                if !bump(&mut t1_idx, |i| t1_cands[i].len()) {
                    break;
                }
            }
        }
        if !bump(&mut t2_idx, |i| t2_cands[i].len()) {
            break 'outer;
        }
    }
    flush(&mut buffer, &mut best);

    let Some(best) = best else {
        return Err(no_candidates(filter.is_some()));
    };

    let goals_out = goals
        .iter()
        .map(|&g| {
            let cand = best[g.slot()].as_ref().expect("per-goal best tracked");
            let mapping = Mapping {
                t1: cand.t1.clone(),
                t2: cand.t2.clone(),
                order2: cand.order2.clone(),
                t3: plan.t3.clone(),
                order3: plan.order3.clone(),
                layout: plan.layout.clone(),
            };
            let mdc =
                transform_to_mdc(&mapping, nest, &conf.ddg).expect("best candidate transforms");
            let report = analyze_mapping_with(&mdc, nest, hw, &hw.energy_profile, &plan.layout, opts)
                .expect("best candidate analyzes");
            GoalOutcome {
                goal: g,
                mapping,
                mdc,
                report,
            }
        })
        .collect();

    Ok(SearchResult {
        plan,
        goals: goals_out,
        stats: space_size(nest, hw, flags),
        evaluated,
        search_seconds: t0.elapsed().as_secs_f64(),
    })
}

// ---- baseline style constraints ----

/// Iterator roles of the nest's convolution-equivalent form. Matrix
/// multiplies read as pointwise convolutions (N output channels, K input
/// channels, M output pixels); recurrent chains read their feature dim as
/// channels and the cell chain as space.
struct ConvRoles {
    out_channel: Option<usize>,
    in_channel: Option<usize>,
    /// Output spatial iterators, y before x.
    spatial: Vec<usize>,
    /// Filter spatial iterators, y before x.
    filter: Vec<usize>,
}

fn conv_roles(nest: &LoopNest) -> ConvRoles {
    let it = |n: &str| nest.iterator_index(n);
    let has = |n: &str| it(n).is_some();
    if has("m") && has("n") && has("k") && !has("p") {
        ConvRoles {
            out_channel: it("n"),
            in_channel: it("k"),
            spatial: it("m").into_iter().collect(),
            filter: vec![],
        }
    } else if has("i") && has("c") && !has("k") {
        ConvRoles {
            out_channel: it("i"),
            in_channel: None,
            spatial: it("c").into_iter().collect(),
            filter: vec![],
        }
    } else {
        ConvRoles {
            out_channel: it("k"),
            in_channel: it("c"),
            spatial: ["p", "q"].iter().filter_map(|n| it(n)).collect(),
            filter: ["r", "s"].iter().filter_map(|n| it(n)).collect(),
        }
    }
}

/// The stationary operand for weight-pinned styles: the tensor named `W`
/// when the nest has one, else `B`, else the first read-only tensor.
fn weight_iters(nest: &LoopNest) -> Option<Vec<usize>> {
    let reads: Vec<_> = nest
        .refs
        .iter()
        .filter(|r| r.direction == AccessDirection::Read)
        .collect();
    let w = reads
        .iter()
        .find(|r| r.tensor == "W")
        .or_else(|| reads.iter().find(|r| r.tensor == "B"))
        .or_else(|| reads.first())?;
    let mut iters: Vec<usize> = nest
        .iterators
        .iter()
        .enumerate()
        .filter(|(_, it)| w.uses(&it.name))
        .map(|(i, _)| i)
        .collect();
    iters.sort_unstable();
    Some(iters)
}

enum StyleFilter {
    /// Iterators allowed to carry a parallel degree > 1.
    Parallel(Vec<usize>),
    /// Iterators that must occupy the innermost level-2 positions.
    Suffix(Vec<usize>),
}

impl StyleFilter {
    fn admits(&self, order2: &[usize], t2: &[u64]) -> bool {
        match self {
            StyleFilter::Parallel(allowed) => t2
                .iter()
                .enumerate()
                .all(|(i, &d)| d == 1 || allowed.contains(&i)),
            StyleFilter::Suffix(inner) => {
                let n = order2.len();
                order2[n - inner.len()..].iter().all(|i| inner.contains(i))
            }
        }
    }
}

fn style_filter(nest: &LoopNest, style: BaselineStyle) -> Result<StyleFilter, ExplorerError> {
    let roles = conv_roles(nest);
    let err = |msg: &str| ExplorerError::Style(format!("{}: {msg}", style.as_str()));
    match style {
        BaselineStyle::DmazeLike => {
            let k = roles
                .out_channel
                .ok_or_else(|| err("nest has no output-channel iterator"))?;
            Ok(StyleFilter::Parallel(vec![k]))
        }
        BaselineStyle::InterstellarLike => {
            let dims: Vec<usize> = [roles.in_channel, roles.out_channel]
                .into_iter()
                .flatten()
                .collect();
            if dims.is_empty() {
                return Err(err("nest has no channel iterators"));
            }
            Ok(StyleFilter::Parallel(dims))
        }
        BaselineStyle::OutputStationary => {
            if roles.spatial.len() < 2 {
                return Err(err("nest lacks two output spatial iterators"));
            }
            Ok(StyleFilter::Parallel(roles.spatial))
        }
        BaselineStyle::RowStationary => {
            let (Some(&fy), Some(&sy)) = (roles.filter.first(), roles.spatial.first()) else {
                return Err(err("nest lacks filter and output row iterators"));
            };
            Ok(StyleFilter::Parallel(vec![fy, sy]))
        }
        BaselineStyle::WeightStationary => {
            let iters =
                weight_iters(nest).ok_or_else(|| err("nest has no read-only operand"))?;
            Ok(StyleFilter::Suffix(iters))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::{make_conv1d, make_conv2d, make_gemm, Conv2dParams, GemmParams};

    fn small_conv() -> LoopNest {
        // r = s = 1 keeps the order-2 permutation count test-sized.
        make_conv2d(&Conv2dParams::new("l", 4, 4, 4, 1, 1)).unwrap()
    }

    fn small_hw() -> AcceleratorConfig {
        let mut hw = AcceleratorConfig::preset("p1").unwrap();
        hw.num_pes = 8;
        hw
    }

    #[test]
    fn roofline_presets_match_advertised_gops() {
        let nest = make_gemm(&GemmParams::new("g", 8, 8, 8)).unwrap();
        let p1 = roofline_peak(&nest, &AcceleratorConfig::preset("p1").unwrap());
        let p2 = roofline_peak(&nest, &AcceleratorConfig::preset("p2").unwrap());
        assert!((p1.gops - 67.2).abs() < 1e-9);
        assert!((p2.gops - 409.6).abs() < 1e-9);
        assert!(p1.seconds >= p1.compute_seconds && p1.seconds >= p1.bandwidth_seconds);
    }

    #[test]
    fn degenerate_space_returns_same_mapping_for_all_goals() {
        let nest = make_conv1d("c", 2, 1).unwrap();
        let mut hw = small_hw();
        hw.num_pes = 1;
        let r = decoupled_optimize(
            &nest,
            &hw,
            &SearchGoal::ALL,
            &PruningFlags::none(),
            &DbOptions::default(),
            1,
        )
        .unwrap();
        assert_eq!(r.goals.len(), 3);
        for g in &r.goals[1..] {
            assert_eq!(g.mapping, r.goals[0].mapping);
        }
    }

    #[test]
    fn search_result_beats_roofline_and_is_deterministic() {
        let nest = small_conv();
        let hw = small_hw();
        let flags = PruningFlags::default();
        let opts = DbOptions::default();
        let a = decoupled_optimize(&nest, &hw, &[SearchGoal::Runtime], &flags, &opts, 1).unwrap();
        let b = decoupled_optimize(&nest, &hw, &[SearchGoal::Runtime], &flags, &opts, 4).unwrap();
        assert_eq!(a.goals, b.goals);
        assert_eq!(a.plan, b.plan);
        let peak = roofline_peak(&nest, &hw);
        assert!(a.goals[0].report.runtime_seconds >= peak.seconds * (1.0 - 1e-9));
    }

    #[test]
    fn baselines_never_beat_the_unconstrained_search() {
        let nest = small_conv();
        let hw = small_hw();
        let flags = PruningFlags::default();
        let opts = DbOptions::default();
        let goals = [SearchGoal::Runtime, SearchGoal::Energy];
        let free = decoupled_optimize(&nest, &hw, &goals, &flags, &opts, 1).unwrap();
        let mut applicable = 0;
        for style in BaselineStyle::ALL {
            let base = match constrained_baseline(&nest, &hw, style, &goals, &flags, &opts, 1) {
                Ok(r) => r,
                Err(ExplorerError::Style(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            applicable += 1;
            assert!(
                base.goals[0].report.runtime_seconds
                    >= free.goals[0].report.runtime_seconds * (1.0 - 1e-12),
                "{style:?} runtime"
            );
            assert!(
                base.goals[1].report.energy >= free.goals[1].report.energy * (1.0 - 1e-12),
                "{style:?} energy"
            );
            assert!(base.evaluated <= free.evaluated, "{style:?} space");
        }
        assert!(applicable >= 3);
    }

    #[test]
    fn row_stationary_requires_filter_rows() {
        let nest = make_gemm(&GemmParams::new("g", 8, 8, 8)).unwrap();
        let hw = small_hw();
        let e = constrained_baseline(
            &nest,
            &hw,
            BaselineStyle::RowStationary,
            &[SearchGoal::Runtime],
            &PruningFlags::default(),
            &DbOptions::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(e, ExplorerError::Style(_)));
        let e = constrained_baseline(
            &nest,
            &hw,
            BaselineStyle::OutputStationary,
            &[SearchGoal::Runtime],
            &PruningFlags::default(),
            &DbOptions::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(e, ExplorerError::Style(_)));
    }

    #[test]
    fn gemm_baselines_follow_conv_equivalent_roles() {
        let nest = make_gemm(&GemmParams::new("g", 8, 8, 8)).unwrap();
        let hw = small_hw();
        let flags = PruningFlags::default();
        let opts = DbOptions::default();
        // Output channels of the matrix multiply are its `n` dimension.
        let r = constrained_baseline(
            &nest,
            &hw,
            BaselineStyle::DmazeLike,
            &[SearchGoal::Runtime],
            &flags,
            &opts,
            1,
        )
        .unwrap();
        let n_idx = nest.iterator_index("n").unwrap();
        for (i, &d) in r.goals[0].mapping.t2.iter().enumerate() {
            assert!(d == 1 || i == n_idx);
        }
        // The stationary operand is B, indexed by k and n.
        let r = constrained_baseline(
            &nest,
            &hw,
            BaselineStyle::WeightStationary,
            &[SearchGoal::Runtime],
            &flags,
            &opts,
            1,
        )
        .unwrap();
        let inner: Vec<usize> = r.goals[0].mapping.order2[1..].to_vec();
        let k_idx = nest.iterator_index("k").unwrap();
        assert!(inner.contains(&k_idx) && inner.contains(&n_idx));
    }

    #[test]
    fn wide_array_forces_multiple_parallel_dims() {
        // No single 32-extent dim can reach 10% of 1024 PEs on its own.
        let nest = make_gemm(&GemmParams::new("g", 32, 32, 32)).unwrap();
        let hw = AcceleratorConfig::preset("p2").unwrap();
        let r = decoupled_optimize(
            &nest,
            &hw,
            &[SearchGoal::Runtime],
            &PruningFlags::default(),
            &DbOptions::default(),
            1,
        )
        .unwrap();
        let parallel = r.goals[0].mapping.parallel_iters().len();
        assert!(parallel >= 2, "got {parallel} parallel dims");
    }

    #[test]
    fn infeasible_l2_propagates() {
        let nest = small_conv();
        let mut hw = small_hw();
        hw.l2_bytes = 1;
        let e = decoupled_optimize(
            &nest,
            &hw,
            &[SearchGoal::Runtime],
            &PruningFlags::default(),
            &DbOptions::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(e, ExplorerError::Offchip(_)));
    }
}
