//! Reference implementations that establish ground truth by enumeration.
//!
//! Everything here trades time for certainty: tiles are walked point by
//! point, directive programs are executed element by element. The analytical
//! models in `offchip` and `onchip` are validated against these functions but
//! share no computation with them.
//!
//! Scale guards are hard errors. A reference that silently truncates would
//! validate nothing.

use crate::hw::AcceleratorConfig;
use crate::loopnest::{AccessDirection, LoopNest, TensorRef};
use crate::mdc::{Directive, MdcMapping};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

/// Iteration-point budget for [`exact_distinct_blocks`].
pub const MAX_TILE_POINTS: u128 = 10_000_000;
/// Statement-execution budget for [`simulate_mdc_reference`].
pub const MAX_SIM_MACS: u128 = 1_000_000;
/// PE budget for [`simulate_mdc_reference`].
pub const MAX_SIM_PES: u64 = 64;
/// Time-step budget for [`simulate_mdc_reference`].
pub const MAX_SIM_STEPS: u128 = 10_000_000;
/// Per-step window records kept in [`SimTrace::head_windows`].
pub const HEAD_STEPS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{what} {size} exceeds the exact-reference budget {limit}")]
    TooLarge {
        what: &'static str,
        size: u128,
        limit: u128,
    },
    #[error("subscript of `{tensor}` dim {dim} evaluates to {value}, outside [0, {extent})")]
    IndexRange {
        tensor: String,
        dim: usize,
        value: i64,
        extent: u64,
    },
    #[error("directive program is not executable: {0}")]
    BadProgram(String),
}

/// Counts the distinct memory blocks touched by one tensor reference when
/// each iterator `i` ranges over `origin[i] .. origin[i] + t3[i]`.
///
/// The tensor is laid out with dimension `innermost` contiguous and the
/// remaining dimensions as enclosing rows; a block holds `b` consecutive
/// elements of the innermost dimension, rows are block-aligned (a row never
/// shares a block with its neighbor). Iterators absent from `origin` start
/// at zero. The full tile `prod(t3)` is enumerated; tiles beyond
/// [`MAX_TILE_POINTS`] are rejected rather than approximated.
pub fn exact_distinct_blocks(
    r: &TensorRef,
    t3: &BTreeMap<&str, u64>,
    innermost: usize,
    b: u64,
    origin: &BTreeMap<&str, u64>,
) -> Result<u64, OracleError> {
    if b == 0 {
        return Err(OracleError::BadProgram("block size must be >= 1".into()));
    }
    if innermost >= r.rank() {
        return Err(OracleError::BadProgram(format!(
            "layout dimension {innermost} out of range for rank {}",
            r.rank()
        )));
    }
    let tile_points: u128 = t3.values().map(|&t| t as u128).product();
    if tile_points > MAX_TILE_POINTS {
        return Err(OracleError::TooLarge {
            what: "tile point count",
            size: tile_points,
            limit: MAX_TILE_POINTS,
        });
    }

    // Only iterators the reference reads can change its coordinates.
    let used: Vec<&str> = {
        let mut names: Vec<&str> = Vec::new();
        for (_, s) in &r.dims {
            for n in s.iterators() {
                if !names.contains(&n) {
                    names.push(n);
                }
            }
        }
        names
    };
    let sizes: Vec<u64> = used
        .iter()
        .map(|n| {
            t3.get(n).copied().ok_or_else(|| {
                OracleError::BadProgram(format!("no tile size for iterator `{n}`"))
            })
        })
        .collect::<Result<_, _>>()?;
    let starts: Vec<u64> = used
        .iter()
        .map(|n| origin.get(n).copied().unwrap_or(0))
        .collect();

    // Mixed-radix block id: innermost dimension in block units, the rest in
    // element units.
    let radix: Vec<u128> = r
        .dim_extents
        .iter()
        .enumerate()
        .map(|(d, &e)| {
            if d == innermost {
                e.div_ceil(b) as u128
            } else {
                e as u128
            }
        })
        .collect();

    let mut blocks: HashSet<u128> = HashSet::new();
    let mut point = vec![0u64; used.len()];
    loop {
        let mut id: u128 = 0;
        for (d, (_, s)) in r.dims.iter().enumerate() {
            let mut v = s.constant;
            for (n, c) in &s.terms {
                let k = used.iter().position(|u| u == n).expect("used covers terms");
                v += c * (starts[k] + point[k]) as i64;
            }
            if v < 0 || v as u64 >= r.dim_extents[d] {
                return Err(OracleError::IndexRange {
                    tensor: r.tensor.clone(),
                    dim: d,
                    value: v,
                    extent: r.dim_extents[d],
                });
            }
            let coord = if d == innermost { v as u64 / b } else { v as u64 };
            id = id * radix[d] + coord as u128;
        }
        blocks.insert(id);

        let mut k = used.len();
        loop {
            if k == 0 {
                return Ok(blocks.len() as u64);
            }
            k -= 1;
            point[k] += 1;
            if point[k] < sizes[k] {
                break;
            }
            point[k] = 0;
        }
    }
}

/// One directive turned into an execution level.
struct Level {
    dim: usize,
    spatial: bool,
    size: u64,
    offset: u64,
    /// Temporal trip count, or spatial chunk count.
    trips: u64,
    /// Parallel degree (1 for temporal levels).
    deg: u64,
    /// Time-axis length: trips, or fold count for spatial levels.
    axis: u64,
    /// Unit-index stride of this spatial level (1 for temporal).
    unit_stride: u64,
}

/// Everything a directive-program execution produced.
///
/// Element movement is counted under three rules, applied in order at every
/// PE and step: data already resident in the PE from the previous step is
/// free; data resident in a grid-adjacent PE (one spatial level's coordinate
/// one away, every other coordinate equal) in the previous step arrives over
/// the NoC and lands in `forwarded`; the rest is fetched from the level-2
/// buffer, deduplicated across PEs within the step when the machine
/// multicasts. `writebacks` counts output elements leaving a PE, including
/// the final drain.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub steps: u64,
    /// PEs engaged by the spatial maps (product of parallel degrees).
    pub units: u64,
    pub total_macs: u128,
    /// Statement executions per engaged PE.
    pub pe_macs: Vec<u128>,
    /// Directive dimensions in first-appearance order; indexes the innermost
    /// axis of `head_windows`.
    pub dims: Vec<String>,
    /// Per-dimension half-open index windows, `[step][unit][dim]`, recorded
    /// for the first [`HEAD_STEPS`] steps.
    pub head_windows: Vec<Vec<Vec<(u64, u64)>>>,
    /// Iteration points executed exactly once.
    pub covered_points: u64,
    /// Iteration points executed more than once (0 for a partitioning
    /// program).
    pub duplicated_points: u64,
    /// Per tensor: elements newly arriving in a PE, any source.
    pub l1_new: BTreeMap<String, u128>,
    /// Per tensor: elements served by the level-2 buffer.
    pub l2_fetches: BTreeMap<String, u128>,
    /// Per tensor: elements served by a neighboring PE.
    pub forwarded: BTreeMap<String, u128>,
    /// Per output tensor: elements drained from PEs.
    pub writebacks: BTreeMap<String, u128>,
}

/// Executes a directive program element by element.
///
/// Directives are interpreted in flat order, earlier directives forming
/// outer loops. Each temporal map advances its dimension's window inside the
/// window established by the directives above it; each spatial map splits
/// its window into chunks dealt out across PEs, folding over time when
/// chunks outnumber the PEs available at that level. Windows truncate at
/// their parent window, so edge tiles shrink rather than read out of
/// bounds. Cluster sizes are not consulted; grouping structure comes from
/// the spatial maps themselves.
pub fn simulate_mdc_reference(
    mdc: &MdcMapping,
    nest: &LoopNest,
    hw: &AcceleratorConfig,
) -> Result<SimTrace, OracleError> {
    let macs = nest.macs();
    if macs > MAX_SIM_MACS {
        return Err(OracleError::TooLarge {
            what: "statement count",
            size: macs,
            limit: MAX_SIM_MACS,
        });
    }
    if hw.num_pes > MAX_SIM_PES {
        return Err(OracleError::TooLarge {
            what: "PE count",
            size: hw.num_pes as u128,
            limit: MAX_SIM_PES as u128,
        });
    }

    // Bind each directive dimension to its loop iterator. A usable dimension
    // carries a single unit-coefficient, zero-constant subscript.
    let mut dims: Vec<(String, usize, u64)> = Vec::new(); // (dim, iterator, extent)
    let dim_index = |name: &str, dims: &mut Vec<(String, usize, u64)>| -> Result<usize, OracleError> {
        if let Some(i) = dims.iter().position(|(d, _, _)| d == name) {
            return Ok(i);
        }
        let sub = nest
            .refs
            .iter()
            .flat_map(|r| r.dims.iter())
            .find(|(d, _)| d == name)
            .map(|(_, s)| s)
            .ok_or_else(|| OracleError::BadProgram(format!("unknown dimension `{name}`")))?;
        let (it, extent) = match sub.terms.as_slice() {
            [(it, 1)] if sub.constant == 0 => {
                let idx = nest
                    .iterator_index(it)
                    .ok_or_else(|| OracleError::BadProgram(format!("unknown iterator `{it}`")))?;
                (idx, nest.iterators[idx].extent)
            }
            _ => {
                return Err(OracleError::BadProgram(format!(
                    "dimension `{name}` is not a unit map of one iterator"
                )))
            }
        };
        if let Some((other, _, _)) = dims.iter().find(|(_, i, _)| *i == it) {
            return Err(OracleError::BadProgram(format!(
                "iterator mapped through two dimensions (`{other}` and `{name}`)"
            )));
        }
        dims.push((name.to_string(), it, extent));
        Ok(dims.len() - 1)
    };

    let mut levels: Vec<Level> = Vec::new();
    let mut win: Vec<u64> = Vec::new(); // narrowing window length per dim
    let mut deg_product: u64 = 1;
    for region in &mdc.regions {
        for d in &region.directives {
            let (spatial, size, offset, dim_name) = match d {
                Directive::TemporalMap { size, offset, dim } => (false, *size, *offset, dim),
                Directive::SpatialMap { size, offset, dim } => (true, *size, *offset, dim),
                Directive::Cluster { .. } => continue,
            };
            if size == 0 || offset == 0 {
                return Err(OracleError::BadProgram(format!(
                    "map over `{dim_name}` needs size and offset >= 1"
                )));
            }
            let di = dim_index(dim_name, &mut dims)?;
            if win.len() < dims.len() {
                win.resize(dims.len(), 0);
                win[di] = dims[di].2;
            }
            let parent = win[di];
            let trips = if size >= parent {
                1
            } else {
                1 + (parent - size).div_ceil(offset)
            };
            let (deg, axis) = if spatial {
                let avail = hw.num_pes / deg_product;
                if avail == 0 {
                    return Err(OracleError::BadProgram(
                        "spatial maps exceed the PE budget".into(),
                    ));
                }
                let deg = trips.min(avail);
                deg_product *= deg;
                (deg, trips.div_ceil(deg))
            } else {
                (1, trips)
            };
            levels.push(Level {
                dim: di,
                spatial,
                size,
                offset,
                trips,
                deg,
                axis,
                unit_stride: 1,
            });
            win[di] = size.min(parent);
        }
    }
    // Unit index: earlier spatial level = more significant digit.
    let mut stride = 1u64;
    for lv in levels.iter_mut().rev() {
        if lv.spatial {
            lv.unit_stride = stride;
            stride *= lv.deg;
        }
    }
    let units = stride;

    // Every multi-trip iterator must be driven by some directive.
    for (idx, it) in nest.iterators.iter().enumerate() {
        if it.extent > 1 && !dims.iter().any(|&(_, i, _)| i == idx) {
            return Err(OracleError::BadProgram(format!(
                "iterator `{}` has no directive",
                it.name
            )));
        }
    }

    let steps: u128 = levels.iter().map(|l| l.axis as u128).product();
    if steps > MAX_SIM_STEPS {
        return Err(OracleError::TooLarge {
            what: "time-step count",
            size: steps,
            limit: MAX_SIM_STEPS,
        });
    }
    let steps = steps as u64;

    // chain for each iterator: the dim driving it, if any.
    let dim_of_iter: Vec<Option<usize>> = (0..nest.iterators.len())
        .map(|i| dims.iter().position(|&(_, it, _)| it == i))
        .collect();

    // Per-reference fast evaluators: (dim radix, constant, terms over
    // iterator indices).
    struct RefEval<'a> {
        r: &'a TensorRef,
        tensor_idx: usize,
        used_iters: Vec<usize>,
        terms: Vec<(Vec<(usize, i64)>, i64)>, // per dim
    }
    let tensor_names: Vec<&str> = nest.tensor_names();
    let refs: Vec<RefEval> = nest
        .refs
        .iter()
        .map(|r| {
            let mut used: Vec<usize> = Vec::new();
            let mut terms = Vec::with_capacity(r.rank());
            for (_, s) in &r.dims {
                let mut t = Vec::with_capacity(s.terms.len());
                for (n, c) in &s.terms {
                    let idx = nest.iterator_index(n).expect("ref iterator in nest");
                    if !used.contains(&idx) {
                        used.push(idx);
                    }
                    t.push((idx, *c));
                }
                terms.push((t, s.constant));
            }
            RefEval {
                r,
                tensor_idx: tensor_names.iter().position(|&t| t == r.tensor).unwrap(),
                used_iters: used,
                terms,
            }
        })
        .collect();

    // Forwarding reaches one hop along one spatial level of the PE grid.
    let neighbors: Vec<Vec<usize>> = (0..units as usize)
        .map(|u| {
            let mut v = Vec::new();
            for lv in levels.iter().filter(|l| l.spatial && l.deg > 1) {
                let stride = lv.unit_stride as usize;
                let coord = (u / stride) % lv.deg as usize;
                if coord > 0 {
                    v.push(u - stride);
                }
                if coord + 1 < lv.deg as usize {
                    v.push(u + stride);
                }
            }
            v
        })
        .collect();

    let n_tensors = tensor_names.len();
    let mut prev: Vec<Vec<HashSet<u128>>> = vec![vec![HashSet::new(); n_tensors]; units as usize];
    let mut pe_macs = vec![0u128; units as usize];
    let mut total_macs: u128 = 0;
    let mut coverage: HashSet<u128> = HashSet::new();
    let mut duplicated: u64 = 0;
    let mut l1_new: Vec<u128> = vec![0; n_tensors];
    let mut l2_fetches: Vec<u128> = vec![0; n_tensors];
    let mut forwarded: Vec<u128> = vec![0; n_tensors];
    let mut writebacks: Vec<u128> = vec![0; n_tensors];
    let mut head_windows: Vec<Vec<Vec<(u64, u64)>>> = Vec::new();

    let cover_radix: Vec<u128> = nest.iterators.iter().map(|it| it.extent as u128).collect();

    let mut pos = vec![0u64; levels.len()];
    for step in 0..steps {
        let mut s = step;
        for (l, lv) in levels.iter().enumerate().rev() {
            pos[l] = s % lv.axis;
            s /= lv.axis;
        }

        let mut cur_all: Vec<Vec<HashSet<u128>>> = Vec::with_capacity(units as usize);
        let mut step_head: Vec<Vec<(u64, u64)>> = Vec::new();
        for u in 0..units {
            // Resolve each dimension's window by walking its directives.
            let mut w: Vec<(u64, u64)> = dims.iter().map(|&(_, _, e)| (0, e)).collect();
            for (l, lv) in levels.iter().enumerate() {
                let (start, len) = w[lv.dim];
                let k = if lv.spatial {
                    let coord = (u / lv.unit_stride) % lv.deg;
                    pos[l] * lv.deg + coord
                } else {
                    pos[l]
                };
                if k >= lv.trips {
                    w[lv.dim] = (start, 0);
                    continue;
                }
                let off = k * lv.offset;
                if off >= len {
                    w[lv.dim] = (start, 0);
                    continue;
                }
                w[lv.dim] = (start + off, lv.size.min(len - off));
            }
            if (step as usize) < HEAD_STEPS {
                step_head.push(w.clone());
            }

            let iter_win: Vec<(u64, u64)> = dim_of_iter
                .iter()
                .map(|d| d.map(|di| w[di]).unwrap_or((0, 1)))
                .collect();

            let work: u128 = iter_win.iter().map(|&(_, l)| l as u128).product();
            pe_macs[u as usize] += work;
            total_macs += work;
            if work > 0 {
                // Coverage: every executed iteration point, once.
                let all: Vec<usize> = (0..nest.iterators.len()).collect();
                for_each_point(&all, &iter_win, &mut |vals| {
                    let mut id: u128 = 0;
                    for (i, &v) in vals.iter().enumerate() {
                        id = id * cover_radix[i] + v as u128;
                    }
                    if !coverage.insert(id) {
                        duplicated += 1;
                    }
                });
            }

            let mut cur: Vec<HashSet<u128>> = vec![HashSet::new(); n_tensors];
            if work > 0 {
                for re in &refs {
                    let set = &mut cur[re.tensor_idx];
                    for_each_point(&re.used_iters, &iter_win, &mut |vals| {
                        let mut id: u128 = 0;
                        for (d, (terms, c0)) in re.terms.iter().enumerate() {
                            let mut v = *c0;
                            for &(it, c) in terms {
                                v += c * vals[it] as i64;
                            }
                            debug_assert!(
                                v >= 0 && (v as u64) < re.r.dim_extents[d],
                                "subscript outside declared extent"
                            );
                            id = id * re.r.dim_extents[d] as u128 + v as u128;
                        }
                        set.insert(id);
                    });
                }
            }
            cur_all.push(cur);
        }
        if (step as usize) < HEAD_STEPS {
            head_windows.push(step_head);
        }

        // Movement accounting against last step's residency.
        for t in 0..n_tensors {
            let mut step_union: HashSet<u128> = HashSet::new();
            let mut step_sum: u128 = 0;
            for u in 0..units as usize {
                let cur = &cur_all[u][t];
                let mut new_cnt: u128 = 0;
                for &x in cur {
                    if prev[u][t].contains(&x) {
                        continue;
                    }
                    new_cnt += 1;
                    if neighbors[u].iter().any(|&v| prev[v][t].contains(&x)) {
                        forwarded[t] += 1;
                    } else if hw.multicast {
                        step_union.insert(x);
                    } else {
                        step_sum += 1;
                    }
                }
                l1_new[t] += new_cnt;
            }
            l2_fetches[t] += if hw.multicast {
                step_union.len() as u128
            } else {
                step_sum
            };
        }
        for re in &refs {
            if re.r.direction == AccessDirection::Read {
                continue;
            }
            let t = re.tensor_idx;
            for u in 0..units as usize {
                writebacks[t] += prev[u][t]
                    .iter()
                    .filter(|x| !cur_all[u][t].contains(x))
                    .count() as u128;
            }
        }
        for (p, c) in prev.iter_mut().zip(cur_all) {
            *p = c;
        }
    }
    // Drain what is still resident.
    for re in &refs {
        if re.r.direction == AccessDirection::Read {
            continue;
        }
        for u in 0..units as usize {
            writebacks[re.tensor_idx] += prev[u][re.tensor_idx].len() as u128;
        }
    }

    let named = |v: Vec<u128>| -> BTreeMap<String, u128> {
        tensor_names
            .iter()
            .map(|t| t.to_string())
            .zip(v)
            .collect()
    };
    Ok(SimTrace {
        steps,
        units,
        total_macs,
        pe_macs,
        dims: dims.into_iter().map(|(d, _, _)| d).collect(),
        head_windows,
        covered_points: coverage.len() as u64,
        duplicated_points: duplicated,
        l1_new: named(l1_new),
        l2_fetches: named(l2_fetches),
        forwarded: named(forwarded),
        writebacks: named(writebacks),
    })
}

/// Calls `f` with iterator values for every point of the selected windows.
///
/// `vals` is indexed by iterator position; unselected iterators hold their
/// window start (their window must then have length 1 or be unused).
fn for_each_point(select: &[usize], windows: &[(u64, u64)], f: &mut impl FnMut(&[u64])) {
    let mut vals: Vec<u64> = windows.iter().map(|&(s, _)| s).collect();
    if select.iter().any(|&i| windows[i].1 == 0) {
        return;
    }
    loop {
        f(&vals);
        let mut k = select.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            let i = select[k];
            vals[i] += 1;
            if vals[i] < windows[i].0 + windows[i].1 {
                break;
            }
            vals[i] = windows[i].0;
        }
    }
}
