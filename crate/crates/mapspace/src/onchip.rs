//! Closed-form cost analysis of directive programs.
//!
//! The semantics are those of the step-level reference executor: directives
//! in flat order form an odometer over time, spatial maps deal chunks across
//! PEs, and every (PE, step) pair owns a box of tensor elements given by its
//! per-dimension index windows. Instead of walking steps one by one, the
//! analyzer groups them into classes by which axis advanced: all steps in a
//! class see the same window deltas relative to the step before, so each
//! class is costed once at a representative position and scaled by its
//! population. Per-PE differences are pure translations of that
//! representative box, which collapses the PE dimension the same way.
//!
//! Costs are exact (`CostReport::exact`) whenever window chains tile their
//! parents without truncation, spatial maps do not fold, and subscripts use
//! unit coefficients. That covers every mapping produced by
//! [`crate::mdc::transform_to_mdc`] from a validated [`crate::Mapping`].
//! Outside that envelope the representative-position counts are still
//! returned but are approximations, and the flag says so.
//!
//! Latency assumes double buffering: the network prefetches the next step's
//! working set while the current step computes, so each step costs
//! `max(compute, transfer)` cycles, plus an initial fill and a final drain.
//! One statement execution takes one cycle. Forwarding between PEs reaches
//! one hop along one spatial level of the grid; forwarded and level-2 bytes
//! share the network. DRAM traffic is block-granular and comes from the
//! off-chip model applied to the outermost tile schedule.

use crate::hw::{AcceleratorConfig, EnergyProfile};
use crate::loopnest::{AccessDirection, LoopNest};
use crate::mdc::{Directive, MdcMapping};
use crate::offchip::{self, DbOptions, Layout};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("directive program is not analyzable: {0}")]
    BadProgram(String),
}

/// Time steps a map directive needs to sweep an extent:
/// `1 + ceil(max(0, extent - size) / offset)`.
pub fn num_time_steps(size: u64, offset: u64, extent: u64) -> u64 {
    if size >= extent {
        1
    } else {
        1 + (extent - size).div_ceil(offset.max(1))
    }
}

/// Element and block traffic of one tensor, whole-execution totals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorTraffic {
    /// Elements newly arriving in a PE, any source.
    pub l1_new: u128,
    /// Elements served by the level-2 buffer (one per multicast group when
    /// the machine multicasts).
    pub l2_unique: u128,
    /// Elements served by a neighboring PE.
    pub forwarded: u128,
    /// Output elements leaving PEs, including the final drain.
    pub writeback: u128,
    /// DRAM blocks read across the outermost tile schedule.
    pub dram_read_blocks: u128,
    /// DRAM blocks written across the outermost tile schedule.
    pub dram_write_blocks: u128,
}

/// Full cost breakdown of one directive program on one machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub steps: u128,
    /// PEs engaged by the spatial maps.
    pub units: u64,
    pub total_macs: u128,
    /// Statement executions per engaged PE (uniform when `exact`).
    pub macs_per_pe: u128,
    pub latency_cycles: u128,
    pub runtime_seconds: f64,
    /// Time-averaged active PEs over all provisioned PEs, in (0, 1].
    pub pe_utilization: f64,
    /// Total energy in profile units.
    pub energy: f64,
    /// Energy-delay product: energy times runtime in seconds.
    pub edp: f64,
    pub traffic: BTreeMap<String, TensorTraffic>,
    /// Double-buffered per-PE working set.
    pub l1_required_bytes: u128,
    /// Double-buffered outermost-tile footprint.
    pub l2_required_bytes: u128,
    /// True when the movement counts equal the reference executor's.
    pub exact: bool,
}

struct Lv {
    iter: usize,
    spatial: bool,
    size: u64,
    offset: u64,
    trips: u64,
    /// Parallel degree (1 for temporal levels).
    deg: u64,
    /// Time-axis length: trips, or fold count for spatial levels.
    axis: u64,
}

struct Prog {
    levels: Vec<Lv>,
    units: u64,
    steps: u128,
    exact: bool,
}

fn parse_program(
    mdc: &MdcMapping,
    nest: &LoopNest,
    hw: &AcceleratorConfig,
) -> Result<Prog, AnalysisError> {
    if hw.num_pes == 0 {
        return Err(AnalysisError::BadProgram("machine has no PEs".into()));
    }
    let n = nest.iterators.len();
    // Bind each directive dimension to its iterator: a usable dimension
    // carries a single unit-coefficient, zero-constant subscript.
    let mut bound: Vec<Option<String>> = vec![None; n];
    let iter_of = |name: &str, bound: &mut Vec<Option<String>>| -> Result<usize, AnalysisError> {
        if let Some(i) = bound.iter().position(|b| b.as_deref() == Some(name)) {
            return Ok(i);
        }
        let sub = nest
            .refs
            .iter()
            .flat_map(|r| r.dims.iter())
            .find(|(d, _)| d == name)
            .map(|(_, s)| s)
            .ok_or_else(|| AnalysisError::BadProgram(format!("unknown dimension `{name}`")))?;
        let idx = match sub.terms.as_slice() {
            [(it, 1)] if sub.constant == 0 => nest
                .iterator_index(it)
                .ok_or_else(|| AnalysisError::BadProgram(format!("unknown iterator `{it}`")))?,
            _ => {
                return Err(AnalysisError::BadProgram(format!(
                    "dimension `{name}` is not a unit map of one iterator"
                )))
            }
        };
        if let Some(other) = &bound[idx] {
            return Err(AnalysisError::BadProgram(format!(
                "iterator mapped through two dimensions (`{other}` and `{name}`)"
            )));
        }
        bound[idx] = Some(name.to_string());
        Ok(idx)
    };

    let mut levels: Vec<Lv> = Vec::new();
    let mut parent: Vec<u64> = nest.iterators.iter().map(|it| it.extent).collect();
    let mut deg_product: u64 = 1;
    let mut exact = true;
    for region in &mdc.regions {
        for d in &region.directives {
            let (spatial, size, offset, dim_name) = match d {
                Directive::TemporalMap { size, offset, dim } => (false, *size, *offset, dim),
                Directive::SpatialMap { size, offset, dim } => (true, *size, *offset, dim),
                Directive::Cluster { .. } => continue,
            };
            if size == 0 || offset == 0 {
                return Err(AnalysisError::BadProgram(format!(
                    "map over `{dim_name}` needs size and offset >= 1"
                )));
            }
            let i = iter_of(dim_name, &mut bound)?;
            let p = parent[i];
            let trips = num_time_steps(size, offset, p);
            if size < p && (trips - 1) * offset + size > p {
                exact = false; // last window truncates
            }
            let (deg, axis) = if spatial {
                let avail = hw.num_pes / deg_product;
                if avail == 0 {
                    return Err(AnalysisError::BadProgram(
                        "spatial maps exceed the PE budget".into(),
                    ));
                }
                let deg = trips.min(avail);
                deg_product *= deg;
                (deg, trips.div_ceil(deg))
            } else {
                (1, trips)
            };
            if axis > 1 && spatial {
                exact = false; // folding idles PEs and refetches
            }
            levels.push(Lv {
                iter: i,
                spatial,
                size,
                offset,
                trips,
                deg,
                axis,
            });
            parent[i] = size.min(p);
        }
    }
    for (idx, it) in nest.iterators.iter().enumerate() {
        if it.extent > 1 && bound[idx].is_none() {
            return Err(AnalysisError::BadProgram(format!(
                "iterator `{}` has no directive",
                it.name
            )));
        }
    }
    let mut steps: u128 = 1;
    for lv in &levels {
        steps = steps
            .checked_mul(lv.axis as u128)
            .ok_or_else(|| AnalysisError::BadProgram("step-count overflow".into()))?;
    }
    for r in &nest.refs {
        for (_, s) in &r.dims {
            if s.terms.iter().any(|&(_, c)| c.unsigned_abs() != 1) {
                exact = false; // strided subscripts are spanned, not imaged
            }
        }
    }
    Ok(Prog {
        levels,
        units: deg_product,
        steps,
        exact,
    })
}

/// Window length groups of one level's position line under a given parent
/// window: `(child length, positions with it)`, idle slots included.
fn groups(lv: &Lv, parent: u64) -> Vec<(u64, u64)> {
    let slots = if lv.spatial { lv.axis * lv.deg } else { lv.axis };
    let cap = lv.trips.min(slots);
    let mut g: Vec<(u64, u64)> = Vec::new();
    let mut k = 0u64;
    while k < cap {
        let off = k * lv.offset;
        if off >= parent {
            break;
        }
        let len = lv.size.min(parent - off);
        if len == lv.size {
            // Run of full windows.
            let last = (parent - lv.size) / lv.offset;
            let run = (last + 1).min(cap) - k;
            g.push((lv.size, run));
            k += run;
        } else {
            g.push((len, 1));
            k += 1;
        }
    }
    if slots > k {
        g.push((0, slots - k));
    }
    g
}

/// Sum of window lengths, count of nonempty windows, and slot count over one
/// iterator's full (time x unit) grid.
fn chain_stats(
    levels: &[Lv],
    idxs: &[usize],
    parent: u64,
    memo: &mut HashMap<(usize, u64), (u128, u128, u128)>,
) -> (u128, u128, u128) {
    let Some((&l0, rest)) = idxs.split_first() else {
        return (parent as u128, (parent > 0) as u128, 1);
    };
    if let Some(&hit) = memo.get(&(idxs.len(), parent)) {
        return hit;
    }
    let mut sum = 0u128;
    let mut nz = 0u128;
    let mut slots = 0u128;
    for (len, count) in groups(&levels[l0], parent) {
        let (s, z, c) = chain_stats(levels, rest, len, memo);
        sum += count as u128 * s;
        nz += count as u128 * z;
        slots += count as u128 * c;
    }
    memo.insert((idxs.len(), parent), (sum, nz, slots));
    (sum, nz, slots)
}

/// Per-iterator half-open windows at one odometer position, PE coordinate 0.
fn windows_at(levels: &[Lv], extents: &[u64], pos: &[u64]) -> Vec<(u64, u64)> {
    let mut w: Vec<(u64, u64)> = extents.iter().map(|&e| (0, e)).collect();
    for (l, lv) in levels.iter().enumerate() {
        let (start, len) = w[lv.iter];
        let k = if lv.spatial { pos[l] * lv.deg } else { pos[l] };
        let off = k * lv.offset;
        if k >= lv.trips || off >= len {
            w[lv.iter] = (start, 0);
            continue;
        }
        w[lv.iter] = (start + off, lv.size.min(len - off));
    }
    w
}

struct StepClass {
    count: u128,
    cur: Vec<(u64, u64)>,
    prev: Option<Vec<(u64, u64)>>,
}

/// The initial step plus one class per multi-position axis: the class of
/// steps where that axis is the outermost one that advanced. Populations sum
/// to the step count.
fn step_classes(levels: &[Lv], extents: &[u64]) -> Vec<StepClass> {
    let mut out = Vec::new();
    let zero = vec![0u64; levels.len()];
    out.push(StepClass {
        count: 1,
        cur: windows_at(levels, extents, &zero),
        prev: None,
    });
    for k in 0..levels.len() {
        if levels[k].axis < 2 {
            continue;
        }
        let mut count: u128 = levels[k].axis as u128 - 1;
        for lv in &levels[..k] {
            count *= lv.axis as u128;
        }
        let mut cur_pos = zero.clone();
        cur_pos[k] = 1;
        let mut prev_pos = zero.clone();
        for (j, lv) in levels.iter().enumerate().skip(k + 1) {
            prev_pos[j] = lv.axis - 1;
        }
        out.push(StepClass {
            count,
            cur: windows_at(levels, extents, &cur_pos),
            prev: Some(windows_at(levels, extents, &prev_pos)),
        });
    }
    out
}

// ---- interval-set and box arithmetic ----
//
// A set of tensor elements is a box: per dimension, a sorted disjoint list
// of inclusive index intervals, the box being their product.

type Iv = (i128, i128);
type BoxIv = Vec<Vec<Iv>>;

fn merge_ivs(mut v: Vec<Iv>) -> Vec<Iv> {
    v.retain(|&(a, b)| a <= b);
    v.sort_unstable();
    let mut out: Vec<Iv> = Vec::with_capacity(v.len());
    for (a, b) in v {
        if let Some(last) = out.last_mut() {
            if a <= last.1 + 1 {
                last.1 = last.1.max(b);
                continue;
            }
        }
        out.push((a, b));
    }
    out
}

fn ivs_len(v: &[Iv]) -> u128 {
    v.iter().map(|&(a, b)| (b - a + 1) as u128).sum()
}

fn ivs_inter(x: &[Iv], y: &[Iv]) -> Vec<Iv> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < x.len() && j < y.len() {
        let lo = x[i].0.max(y[j].0);
        let hi = x[i].1.min(y[j].1);
        if lo <= hi {
            out.push((lo, hi));
        }
        if x[i].1 < y[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn ivs_sub(x: &[Iv], y: &[Iv]) -> Vec<Iv> {
    let mut out = Vec::new();
    for &(lo, hi) in x {
        let mut a = lo;
        for &(c, d) in y {
            if d < a || c > hi {
                continue;
            }
            if c > a {
                out.push((a, c - 1));
            }
            a = a.max(d + 1);
            if a > hi {
                break;
            }
        }
        if a <= hi {
            out.push((a, hi));
        }
    }
    out
}

fn ivs_shift(x: &[Iv], d: i128) -> Vec<Iv> {
    x.iter().map(|&(a, b)| (a + d, b + d)).collect()
}

fn box_measure(b: &BoxIv) -> u128 {
    b.iter().map(|d| ivs_len(d)).product()
}

/// Measure of the intersection of several boxes.
fn inter_measure(bs: &[&BoxIv]) -> u128 {
    let rank = bs[0].len();
    let mut m: u128 = 1;
    for d in 0..rank {
        let mut cur = bs[0][d].clone();
        for b in &bs[1..] {
            cur = ivs_inter(&cur, &b[d]);
            if cur.is_empty() {
                return 0;
            }
        }
        m *= ivs_len(&cur);
    }
    m
}

fn box_shift(b: &BoxIv, delta: &[i128]) -> BoxIv {
    b.iter()
        .zip(delta)
        .map(|(ivs, &d)| if d == 0 { ivs.clone() } else { ivs_shift(ivs, d) })
        .collect()
}

/// `a \ b` as disjoint boxes (slab decomposition along each dimension).
fn box_diff(a: &BoxIv, b: &BoxIv) -> Vec<BoxIv> {
    let rank = a.len();
    let mut out = Vec::new();
    for i in 0..rank {
        let di = ivs_sub(&a[i], &b[i]);
        if di.is_empty() {
            continue;
        }
        let mut bx = Vec::with_capacity(rank);
        let mut empty = false;
        for (j, aj) in a.iter().enumerate() {
            let side = match j.cmp(&i) {
                std::cmp::Ordering::Less => ivs_inter(aj, &b[j]),
                std::cmp::Ordering::Equal => di.clone(),
                std::cmp::Ordering::Greater => aj.clone(),
            };
            if side.is_empty() {
                empty = true;
                break;
            }
            bx.push(side);
        }
        if !empty {
            out.push(bx);
        }
    }
    out
}

fn boxes_subtract(list: Vec<BoxIv>, s: &BoxIv) -> Vec<BoxIv> {
    list.into_iter().flat_map(|b| box_diff(&b, s)).collect()
}

/// Measure of a union of boxes. Fast path for families identical on all but
/// one dimension; otherwise a sweep along the first dimension.
fn union_measure(mut boxes: Vec<BoxIv>) -> u128 {
    boxes.retain(|b| box_measure(b) > 0);
    match boxes.len() {
        0 => return 0,
        1 => return box_measure(&boxes[0]),
        _ => {}
    }
    let rank = boxes[0].len();
    if rank == 0 {
        return 1;
    }
    'vary: for vary in 0..rank {
        for d in 0..rank {
            if d != vary && !boxes.iter().all(|b| b[d] == boxes[0][d]) {
                continue 'vary;
            }
        }
        let merged = merge_ivs(boxes.iter().flat_map(|b| b[vary].iter().copied()).collect());
        let rest: u128 = (0..rank)
            .filter(|&d| d != vary)
            .map(|d| ivs_len(&boxes[0][d]))
            .product();
        return rest * ivs_len(&merged);
    }
    // Sweep: split the first dimension at every interval boundary; within a
    // segment membership is constant, so recurse on the remaining rank.
    let mut cuts: Vec<i128> = Vec::new();
    for b in &boxes {
        for &(lo, hi) in &b[0] {
            cuts.push(lo);
            cuts.push(hi + 1);
        }
    }
    cuts.sort_unstable();
    cuts.dedup();
    let mut total: u128 = 0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let active: Vec<BoxIv> = boxes
            .iter()
            .filter(|bx| bx[0].iter().any(|&(lo, hi)| lo <= a && a <= hi))
            .map(|bx| bx[1..].to_vec())
            .collect();
        if !active.is_empty() {
            total += (b - a) as u128 * union_measure(active);
        }
    }
    total
}

// ---- tensor streams ----

struct StreamDim {
    terms: Vec<(usize, i64)>,
    consts: Vec<i64>,
}

struct Stream {
    tensor: String,
    write_refs: u128,
    dims: Vec<StreamDim>,
}

impl Stream {
    /// Element box under per-iterator windows; `None` when empty.
    fn image(&self, w: &[(u64, u64)]) -> Option<BoxIv> {
        if w.iter().any(|&(_, l)| l == 0) {
            return None; // an empty window idles the whole PE
        }
        let mut dims = Vec::with_capacity(self.dims.len());
        for d in &self.dims {
            let mut lo = 0i128;
            let mut hi = 0i128;
            for &(it, c) in &d.terms {
                let (s, l) = w[it];
                let (a, b) = (s as i128, (s + l - 1) as i128);
                if c >= 0 {
                    lo += c as i128 * a;
                    hi += c as i128 * b;
                } else {
                    lo += c as i128 * b;
                    hi += c as i128 * a;
                }
            }
            dims.push(merge_ivs(
                d.consts
                    .iter()
                    .map(|&c0| (lo + c0 as i128, hi + c0 as i128))
                    .collect(),
            ));
        }
        Some(dims)
    }
}

/// Groups a nest's references into streams: one per tensor when all its
/// references share subscript terms per dimension (constants may differ and
/// are united exactly), one per reference otherwise.
fn build_streams(nest: &LoopNest, exact: &mut bool) -> Vec<Stream> {
    let mut streams: Vec<Stream> = Vec::new();
    for name in nest.tensor_names() {
        let refs: Vec<_> = nest.refs.iter().filter(|r| r.tensor == name).collect();
        let sig = |r: &crate::loopnest::TensorRef| -> Vec<Vec<(usize, i64)>> {
            r.dims
                .iter()
                .map(|(_, s)| {
                    s.terms
                        .iter()
                        .map(|(n, c)| (nest.iterator_index(n).expect("ref iterator in nest"), *c))
                        .collect()
                })
                .collect()
        };
        let uniform = refs.windows(2).all(|w| sig(w[0]) == sig(w[1]));
        let groups: Vec<Vec<_>> = if uniform {
            vec![refs]
        } else {
            *exact = false; // streams overcount elements shared across shapes
            refs.into_iter().map(|r| vec![r]).collect()
        };
        for g in groups {
            let terms = sig(g[0]);
            let dims = terms
                .into_iter()
                .enumerate()
                .map(|(d, t)| {
                    let mut consts: Vec<i64> =
                        g.iter().map(|r| r.dims[d].1.constant).collect();
                    consts.sort_unstable();
                    consts.dedup();
                    StreamDim { terms: t, consts }
                })
                .collect();
            streams.push(Stream {
                tensor: name.to_string(),
                write_refs: g
                    .iter()
                    .filter(|r| r.direction != AccessDirection::Read)
                    .count() as u128,
                dims,
            });
        }
    }
    streams
}

/// A spatial level that moves this stream's box between neighboring PEs.
struct Trans {
    deg: u64,
    /// Per-dimension image shift of a +1 coordinate move.
    shifts: Vec<i128>,
}

fn translations(stream: &Stream, levels: &[Lv]) -> Vec<Trans> {
    levels
        .iter()
        .filter(|lv| lv.spatial && lv.deg > 1)
        .filter_map(|lv| {
            let shifts: Vec<i128> = stream
                .dims
                .iter()
                .map(|d| {
                    d.terms
                        .iter()
                        .filter(|&&(it, _)| it == lv.iter)
                        .map(|&(_, c)| c as i128 * lv.offset as i128)
                        .sum()
                })
                .collect();
            shifts.iter().any(|&s| s != 0).then_some(Trans {
                deg: lv.deg,
                shifts,
            })
        })
        .collect()
}

/// Boundary variants of one translating level's coordinate line:
/// `(has left neighbor, has right neighbor, coordinate range)`.
fn level_variants(deg: u64) -> Vec<(bool, bool, std::ops::Range<u64>)> {
    if deg == 2 {
        vec![(false, true, 0..1), (true, false, 1..2)]
    } else {
        vec![
            (false, true, 0..1),
            (true, true, 1..deg - 1),
            (true, false, deg - 1..deg),
        ]
    }
}

/// Expands a PE-frame box into the union over a coordinate range of one
/// translating level, merging along shifted dimensions.
fn expand_level(list: Vec<BoxIv>, t: &Trans, range: &std::ops::Range<u64>) -> Vec<BoxIv> {
    if range.is_empty() {
        return Vec::new();
    }
    let nz: Vec<usize> = (0..t.shifts.len()).filter(|&d| t.shifts[d] != 0).collect();
    let mut out = Vec::new();
    for b in list {
        if nz.len() == 1 {
            let d = nz[0];
            let tau = t.shifts[d];
            let mut merged: Vec<Iv> = Vec::new();
            for &(lo, hi) in &b[d] {
                let len = hi - lo + 1;
                let (c0, c1) = (range.start as i128, range.end as i128 - 1);
                if tau.abs() <= len {
                    // Contiguous drag: the translated copies overlap or touch.
                    let (a1, b1) = (lo + tau * c0, hi + tau * c0);
                    let (a2, b2) = (lo + tau * c1, hi + tau * c1);
                    merged.push((a1.min(a2), b1.max(b2)));
                } else {
                    for c in range.clone() {
                        merged.push((lo + tau * c as i128, hi + tau * c as i128));
                    }
                }
            }
            let mut nb = b.clone();
            nb[d] = merge_ivs(merged);
            out.push(nb);
        } else {
            // A level shifting several dimensions at once moves the box
            // diagonally; enumerate its coordinates.
            for c in range.clone() {
                let delta: Vec<i128> = t.shifts.iter().map(|&s| s * c as i128).collect();
                out.push(box_shift(&b, &delta));
            }
        }
    }
    out
}

/// Per-step movement of one stream in one step class.
struct ClassCounts {
    new1: u128,
    leave1: u128,
    fwd_step: u128,
    l2_step: u128,
}

fn class_counts(
    stream: &Stream,
    class: &StepClass,
    trans: &[Trans],
    units: u64,
    multicast: bool,
) -> ClassCounts {
    let zero = ClassCounts {
        new1: 0,
        leave1: 0,
        fwd_step: 0,
        l2_step: 0,
    };
    let cur = stream.image(&class.cur);
    let prev = class.prev.as_ref().and_then(|p| stream.image(p));
    let (m_cur, m_prev, m_int) = match (&cur, &prev) {
        (None, None) => return zero,
        (Some(c), None) => (box_measure(c), 0, 0),
        (None, Some(p)) => (0, box_measure(p), 0),
        (Some(c), Some(p)) => (box_measure(c), box_measure(p), inter_measure(&[c, p])),
    };
    let new1 = m_cur - m_int;
    let leave1 = m_prev - m_int;
    if new1 == 0 {
        return ClassCounts {
            new1,
            leave1,
            fwd_step: 0,
            l2_step: 0,
        };
    }
    let cur = cur.expect("new elements require a current box");

    if trans.is_empty() {
        // Every PE holds the same box: neighbors never have anything fresh,
        // and a multicast serves them all at once.
        let l2_step = if multicast {
            new1
        } else {
            units as u128 * new1
        };
        return ClassCounts {
            new1,
            leave1,
            fwd_step: 0,
            l2_step,
        };
    }

    let trans_units: u128 = trans.iter().map(|t| t.deg as u128).product();
    let mult = units as u128 / trans_units;

    let Some(prev) = prev else {
        // Initial fill: nothing to forward; the union over the whole PE grid
        // is served once when multicasting.
        let l2_step = if multicast {
            let mut boxes = vec![cur.clone()];
            for t in trans {
                boxes = expand_level(boxes, t, &(0..t.deg));
            }
            union_measure(boxes)
        } else {
            units as u128 * new1
        };
        return ClassCounts {
            new1,
            leave1,
            fwd_step: 0,
            l2_step,
        };
    };

    // Boundary variants over the translating levels' coordinate lines.
    let per_level: Vec<Vec<(bool, bool, std::ops::Range<u64>)>> =
        trans.iter().map(|t| level_variants(t.deg)).collect();
    let mut combo = vec![0usize; trans.len()];
    let mut fwd_step: u128 = 0;
    let mut union_boxes: Vec<BoxIv> = Vec::new();
    loop {
        // Neighbor residency, shifted into this PE's frame.
        let mut subs: Vec<BoxIv> = Vec::new();
        let mut cells: u128 = 1;
        for (li, t) in trans.iter().enumerate() {
            let (has_l, has_r, ref range) = per_level[li][combo[li]];
            cells *= range.end as u128 - range.start as u128;
            if has_l {
                let delta: Vec<i128> = t.shifts.iter().map(|&s| -s).collect();
                subs.push(box_shift(&prev, &delta));
            }
            if has_r {
                subs.push(box_shift(&prev, &t.shifts));
            }
        }
        if cells > 0 {
            // |new ∩ (s1 ∪ .. ∪ sk)| by inclusion-exclusion, each term via
            // |(C \ P) ∩ X| = |C ∩ X| - |C ∩ P ∩ X|.
            let mut fwd_v: i128 = 0;
            for mask in 1u32..(1 << subs.len()) {
                let mut parts: Vec<&BoxIv> = vec![&cur];
                for (i, s) in subs.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        parts.push(s);
                    }
                }
                let t1 = inter_measure(&parts);
                parts.push(&prev);
                let t2 = inter_measure(&parts);
                let term = (t1 - t2) as i128;
                if mask.count_ones() % 2 == 1 {
                    fwd_v += term;
                } else {
                    fwd_v -= term;
                }
            }
            debug_assert!(fwd_v >= 0);
            fwd_step += cells * mult * fwd_v.max(0) as u128;
            if multicast {
                let mut residual = box_diff(&cur, &prev);
                for s in &subs {
                    residual = boxes_subtract(residual, s);
                }
                for (li, t) in trans.iter().enumerate() {
                    let range = per_level[li][combo[li]].2.clone();
                    residual = expand_level(residual, t, &range);
                }
                union_boxes.extend(residual);
            }
        }
        // Next variant combination.
        let mut li = 0;
        loop {
            if li == trans.len() {
                let l2_step = if multicast {
                    union_measure(union_boxes)
                } else {
                    units as u128 * new1 - fwd_step
                };
                return ClassCounts {
                    new1,
                    leave1,
                    fwd_step,
                    l2_step,
                };
            }
            combo[li] += 1;
            if combo[li] < per_level[li].len() {
                break;
            }
            combo[li] = 0;
            li += 1;
        }
    }
}

/// Analyzes a directive program with the declared-order layout and default
/// off-chip options for its DRAM counts.
pub fn analyze_mapping(
    mdc: &MdcMapping,
    nest: &LoopNest,
    hw: &AcceleratorConfig,
    e: &EnergyProfile,
) -> Result<CostReport, AnalysisError> {
    analyze_mapping_with(
        mdc,
        nest,
        hw,
        e,
        &Layout::innermost_default(nest),
        &DbOptions::default(),
    )
}

/// Analyzes a directive program with an explicit DRAM layout and block-count
/// options, as the search driver does after the off-chip stage fixed them.
pub fn analyze_mapping_with(
    mdc: &MdcMapping,
    nest: &LoopNest,
    hw: &AcceleratorConfig,
    e: &EnergyProfile,
    layout: &Layout,
    opts: &DbOptions,
) -> Result<CostReport, AnalysisError> {
    let mut prog = parse_program(mdc, nest, hw)?;
    let n = nest.iterators.len();
    let extents: Vec<u64> = nest.extents();
    let bpe = nest.bytes_per_element as u128;
    let bpc = hw.noc_bytes_per_cycle();
    if !(bpc > 0.0) {
        return Err(AnalysisError::BadProgram(
            "NoC bandwidth must be positive".into(),
        ));
    }

    // Exact statement counts and PE activity from per-iterator chains.
    let mut total_macs: u128 = 1;
    let mut active: u128 = 1;
    let mut slots_check: u128 = 1;
    for i in 0..n {
        let idxs: Vec<usize> = (0..prog.levels.len())
            .filter(|&l| prog.levels[l].iter == i)
            .collect();
        let mut memo = HashMap::new();
        let (sum, nz, slots) = chain_stats(&prog.levels, &idxs, extents[i], &mut memo);
        total_macs = total_macs.saturating_mul(sum);
        active = active.saturating_mul(nz);
        slots_check = slots_check.saturating_mul(slots);
    }
    debug_assert_eq!(slots_check, prog.steps * prog.units as u128);

    let streams = build_streams(nest, &mut prog.exact);
    let classes = step_classes(&prog.levels, &extents);
    let units = prog.units;

    let mut traffic: BTreeMap<String, TensorTraffic> = BTreeMap::new();
    // Per-class NoC element loads, aligned with `classes`.
    let mut noc_elems: Vec<u128> = vec![0; classes.len()];
    let mut drain_elems: u128 = 0;
    let mut l1_req: u128 = 0;
    let mut l2_req: u128 = 0;

    let t3_windows: Vec<(u64, u64)> = (0..n)
        .map(|i| {
            let first = prog.levels.iter().find(|lv| lv.iter == i);
            (0, first.map_or(extents[i], |lv| lv.size.min(extents[i])))
        })
        .collect();

    for stream in &streams {
        let trans = translations(stream, &prog.levels);
        let t = traffic.entry(stream.tensor.clone()).or_default();
        let point = stream
            .image(&classes[0].cur)
            .map_or(0, |b| box_measure(&b));
        l1_req += 2 * point * bpe;
        l2_req += 2 * stream.image(&t3_windows).map_or(0, |b| box_measure(&b)) * bpe;
        for (ci, class) in classes.iter().enumerate() {
            let c = class_counts(stream, class, &trans, units, hw.multicast);
            t.l1_new += class.count * units as u128 * c.new1;
            t.forwarded += class.count * c.fwd_step;
            t.l2_unique += class.count * c.l2_step;
            let leave = units as u128 * c.leave1 * stream.write_refs;
            t.writeback += class.count * leave;
            noc_elems[ci] += c.l2_step + c.fwd_step + leave;
        }
        // Final drain of resident outputs.
        let drain = units as u128 * point * stream.write_refs;
        t.writeback += drain;
        drain_elems += drain;
    }

    // DRAM blocks for the outermost tile schedule.
    let t3_vec: Vec<u64> = t3_windows.iter().map(|&(_, l)| l).collect();
    let l3_steps: u128 = (0..n)
        .map(|i| {
            prog.levels
                .iter()
                .find(|lv| lv.iter == i)
                .map_or(1, |lv| lv.trips) as u128
        })
        .product();
    let b = offchip::block_elems(hw, nest);
    for r in &nest.refs {
        let db = offchip::distinct_blocks(nest, r, &t3_vec, layout, b, opts);
        let t = traffic.entry(r.tensor.clone()).or_default();
        if r.direction != AccessDirection::Write {
            t.dram_read_blocks += db * l3_steps;
        }
        if r.direction != AccessDirection::Read {
            t.dram_write_blocks += db * l3_steps;
        }
    }

    // Latency: fill, pipelined steps, drain.
    let comp: u128 = {
        let w = &classes[0].cur;
        w.iter().map(|&(_, l)| l as u128).product()
    };
    let tc = |elems: u128| -> u128 { ((elems * bpe) as f64 / bpc).ceil() as u128 };
    let mut latency: u128 = tc(noc_elems[0]);
    for (ci, class) in classes.iter().enumerate().skip(1) {
        latency += class.count * comp.max(tc(noc_elems[ci]));
    }
    latency += comp.max(tc(drain_elems));

    let runtime_seconds = latency as f64 / hw.clock_hz();
    let pe_utilization = active as f64 / (prog.steps as f64 * hw.num_pes as f64);

    // Energy: statement work, buffer events, block DRAM traffic, NoC bytes.
    let read_refs = nest
        .refs
        .iter()
        .filter(|r| r.direction != AccessDirection::Write)
        .count() as u128;
    let write_refs = nest
        .refs
        .iter()
        .filter(|r| r.direction != AccessDirection::Read)
        .count() as u128;
    let sum_traffic = |f: fn(&TensorTraffic) -> u128| -> u128 { traffic.values().map(f).sum() };
    let l1_new_total = sum_traffic(|t| t.l1_new);
    let l2_total = sum_traffic(|t| t.l2_unique);
    let fwd_total = sum_traffic(|t| t.forwarded);
    let wb_total = sum_traffic(|t| t.writeback);
    let dram_rd = sum_traffic(|t| t.dram_read_blocks);
    let dram_wr = sum_traffic(|t| t.dram_write_blocks);
    let energy = total_macs as f64 * e.mac
        + (total_macs * read_refs) as f64 * e.l1_read
        + (total_macs * write_refs + l1_new_total) as f64 * e.l1_write
        + l2_total as f64 * e.l2_read
        + wb_total as f64 * e.l2_write
        + (dram_rd * hw.dram_block_bytes as u128) as f64 * e.dram_read
        + (dram_wr * hw.dram_block_bytes as u128) as f64 * e.dram_write
        + ((l2_total + fwd_total + wb_total) * bpe) as f64 * e.noc_per_byte_per_hop;

    Ok(CostReport {
        steps: prog.steps,
        units,
        total_macs,
        macs_per_pe: total_macs / units as u128,
        latency_cycles: latency,
        runtime_seconds,
        pe_utilization,
        energy,
        edp: energy * runtime_seconds,
        traffic,
        l1_required_bytes: l1_req,
        l2_required_bytes: l2_req,
        exact: prog.exact,
    })
}
