//! Three-level tiled mappings and their search space.
//!
//! A mapping fixes six aspects: level-1 (PE-private) tile sizes, level-2
//! parallel degrees, the level-2 inter-tile loop order, level-3 (shared
//! buffer) tile sizes, the level-3 inter-tile loop order, and a per-tensor
//! data layout. Validation enforces the nesting inequalities, buffer
//! capacities under double buffering, PE-count and utilization bounds, a cap
//! on simultaneously parallel loops, and (optionally) that tile sizes divide
//! evenly.

use crate::hw::AcceleratorConfig;
use crate::loopnest::LoopNest;
use crate::offchip::Layout;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Search-space pruning switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningFlags {
    /// Restrict tile sizes to chains `t1 | t1*t2 | t3 | extent`.
    pub factor_tiles: bool,
    /// Discard level-2 points whose PE utilization falls below this bound.
    pub utilization_bound: Option<f64>,
    /// Maximum number of loops parallelized at once.
    pub max_parallel_loops: usize,
}

impl Default for PruningFlags {
    fn default() -> Self {
        PruningFlags {
            factor_tiles: true,
            utilization_bound: Some(0.1),
            max_parallel_loops: 3,
        }
    }
}

impl PruningFlags {
    /// No pruning at all: the decoupled-but-unpruned space.
    pub fn none() -> Self {
        PruningFlags {
            factor_tiles: false,
            utilization_bound: None,
            max_parallel_loops: usize::MAX,
        }
    }
}

/// A fully specified mapping. Tile vectors are indexed in nest order;
/// `order2`/`order3` list iterator indices outermost first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mapping {
    pub t1: Vec<u64>,
    pub t2: Vec<u64>,
    pub order2: Vec<usize>,
    pub t3: Vec<u64>,
    pub order3: Vec<usize>,
    pub layout: Layout,
}

impl Mapping {
    /// Level-2 block extent per iterator: `t1[i] * t2[i]`.
    pub fn block2(&self, i: usize) -> u64 {
        self.t1[i] * self.t2[i]
    }

    /// Indices of spatially distributed iterators, outer loop first in the
    /// level-2 loop order.
    pub fn parallel_iters(&self) -> Vec<usize> {
        self.order2
            .iter()
            .copied()
            .filter(|&i| self.t2[i] > 1)
            .collect()
    }

    /// Stable total order used to break exact cost ties.
    pub fn encoding(&self) -> Vec<u64> {
        let mut v: Vec<u64> = Vec::new();
        v.extend(self.order3.iter().map(|&x| x as u64));
        v.extend(self.t3.iter().copied());
        v.extend(self.order2.iter().map(|&x| x as u64));
        v.extend(self.t2.iter().copied());
        v.extend(self.t1.iter().copied());
        for (_, &pos) in self.layout.innermost.iter() {
            v.push(pos as u64);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MappingViolation {
    /// `1 <= t1 <= t1*t2 <= t3 <= extent` broken for an iterator.
    TileOrder { iterator: String },
    /// Tile vectors or orders have the wrong arity or are not permutations.
    Shape { detail: String },
    /// Layout names an unknown tensor or dimension.
    LayoutInvalid { detail: String },
    L2Capacity { need_bytes: u128, have_bytes: u64 },
    L1Capacity { need_bytes: u128, have_bytes: u64 },
    PeCount { degree: u128, have: u64 },
    Utilization { utilization: f64, bound: f64 },
    ParallelLoops { count: usize, max: usize },
    /// Tile sizes do not divide evenly along an iterator.
    NotFactors { iterator: String },
}

/// Precomputed per-nest footprint evaluator.
///
/// Same-tensor references with identical subscript terms in a dimension are
/// merged by exact interval union; the result always equals
/// [`crate::loopnest::tensor_footprint`].
#[derive(Debug, Clone)]
pub struct FootprintModel {
    /// Per tensor: per dimension: (terms as `(iter index, |coeff|)`, sorted
    /// distinct constant offsets).
    tensors: Vec<(String, Vec<(Vec<(usize, u64)>, Vec<i64>)>)>,
}

impl FootprintModel {
    pub fn new(nest: &LoopNest) -> FootprintModel {
        let mut tensors: Vec<(String, Vec<(Vec<(usize, u64)>, Vec<i64>)>)> = Vec::new();
        for r in &nest.refs {
            if tensors.iter().any(|(t, _)| t == &r.tensor) {
                continue;
            }
            let group: Vec<_> = nest.refs.iter().filter(|x| x.tensor == r.tensor).collect();
            let mut dims = Vec::with_capacity(r.dims.len());
            for d in 0..r.dims.len() {
                let terms: Vec<(usize, u64)> = group[0].dims[d]
                    .1
                    .terms
                    .iter()
                    .map(|(n, c)| (nest.iterator_index(n).unwrap(), c.unsigned_abs()))
                    .collect();
                let mut consts: Vec<i64> =
                    group.iter().map(|g| g.dims[d].1.constant).collect();
                consts.sort();
                consts.dedup();
                // Identical terms across the group let constants merge by
                // union; generated nests always satisfy this.
                debug_assert!(group
                    .iter()
                    .all(|g| g.dims[d].1.terms == group[0].dims[d].1.terms));
                dims.push((terms, consts));
            }
            tensors.push((r.tensor.clone(), dims));
        }
        FootprintModel { tensors }
    }

    /// Footprint in elements of one tensor under `tile`.
    pub fn tensor_elems(&self, tensor_idx: usize, tile: &[u64]) -> u128 {
        let mut total: u128 = 1;
        for (terms, consts) in &self.tensors[tensor_idx].1 {
            let span: u128 = 1 + terms
                .iter()
                .map(|&(i, c)| c as u128 * (tile[i] as u128 - 1))
                .sum::<u128>();
            let mut len = span;
            for w in consts.windows(2) {
                len += span.min((w[1] - w[0]) as u128);
            }
            total *= len;
        }
        total
    }

    /// Footprint in elements summed over all tensors.
    pub fn total_elems(&self, tile: &[u64]) -> u128 {
        (0..self.tensors.len())
            .map(|t| self.tensor_elems(t, tile))
            .sum()
    }

    pub fn tensor_names(&self) -> Vec<&str> {
        self.tensors.iter().map(|(t, _)| t.as_str()).collect()
    }
}

/// Checks a mapping against a nest and an accelerator; an empty vector means
/// valid.
pub fn validate_mapping(
    nest: &LoopNest,
    hw: &AcceleratorConfig,
    m: &Mapping,
    flags: &PruningFlags,
) -> Vec<MappingViolation> {
    let n = nest.iterators.len();
    let mut out = Vec::new();
    if m.t1.len() != n || m.t2.len() != n || m.t3.len() != n {
        out.push(MappingViolation::Shape {
            detail: format!("tile vectors must have {n} entries"),
        });
        return out;
    }
    for (name, order) in [("order2", &m.order2), ("order3", &m.order3)] {
        let mut seen = vec![false; n];
        let ok = order.len() == n
            && order.iter().all(|&i| {
                if i < n && !seen[i] {
                    seen[i] = true;
                    true
                } else {
                    false
                }
            });
        if !ok {
            out.push(MappingViolation::Shape {
                detail: format!("{name} is not a permutation of 0..{n}"),
            });
            return out;
        }
    }

    for (i, it) in nest.iterators.iter().enumerate() {
        let (t1, b2, t3) = (m.t1[i], m.block2(i), m.t3[i]);
        if !(1 <= t1 && t1 <= b2 && b2 <= t3 && t3 <= it.extent) {
            out.push(MappingViolation::TileOrder {
                iterator: it.name.clone(),
            });
        } else if flags.factor_tiles
            && !(b2 % t1 == 0 && t3 % b2 == 0 && it.extent % t3 == 0)
        {
            out.push(MappingViolation::NotFactors {
                iterator: it.name.clone(),
            });
        }
    }
    if !out.is_empty() {
        return out;
    }

    for (tensor, pos) in m.layout.innermost.iter() {
        let r = nest.refs.iter().find(|r| &r.tensor == tensor);
        match r {
            Some(r) if *pos < r.rank() => {}
            Some(_) => out.push(MappingViolation::LayoutInvalid {
                detail: format!("tensor `{tensor}` has no dimension {pos}"),
            }),
            None => out.push(MappingViolation::LayoutInvalid {
                detail: format!("unknown tensor `{tensor}`"),
            }),
        }
    }
    for name in nest.tensor_names() {
        if !m.layout.innermost.contains_key(name) {
            out.push(MappingViolation::LayoutInvalid {
                detail: format!("tensor `{name}` has no layout entry"),
            });
        }
    }

    let fp = FootprintModel::new(nest);
    let l2_need = 2 * fp.total_elems(&m.t3) * nest.bytes_per_element as u128;
    if l2_need > hw.l2_bytes as u128 {
        out.push(MappingViolation::L2Capacity {
            need_bytes: l2_need,
            have_bytes: hw.l2_bytes,
        });
    }
    let l1_need = 2 * fp.total_elems(&m.t1) * nest.bytes_per_element as u128;
    if l1_need > hw.l1_bytes as u128 {
        out.push(MappingViolation::L1Capacity {
            need_bytes: l1_need,
            have_bytes: hw.l1_bytes,
        });
    }

    let degree: u128 = m.t2.iter().map(|&d| d as u128).product();
    if degree > hw.num_pes as u128 {
        out.push(MappingViolation::PeCount {
            degree,
            have: hw.num_pes,
        });
    } else if let Some(bound) = flags.utilization_bound {
        let utilization = degree as f64 / hw.num_pes as f64;
        if utilization < bound {
            out.push(MappingViolation::Utilization { utilization, bound });
        }
    }
    let parallel = m.parallel_iters().len();
    if parallel > flags.max_parallel_loops {
        out.push(MappingViolation::ParallelLoops {
            count: parallel,
            max: flags.max_parallel_loops,
        });
    }
    out
}

/// Draws a random valid mapping by rejection sampling, or `None` when
/// `attempts` consecutive draws all fail validation.
///
/// `rand_below(n)` must return a uniform draw from `[0, n)`; keeping the
/// entropy source a closure leaves the crate free of an RNG dependency while
/// letting callers seed whatever generator they like. Tile sizes are drawn
/// from divisor chains (valid whether or not factor pruning is on), parallel
/// degrees respect the PE budget and the parallel-loop cap, and each tensor
/// gets a random innermost layout dimension.
pub fn sample_valid_mapping(
    nest: &LoopNest,
    hw: &AcceleratorConfig,
    flags: &PruningFlags,
    attempts: usize,
    rand_below: &mut dyn FnMut(u64) -> u64,
) -> Option<Mapping> {
    let n = nest.iterators.len();
    let extents = nest.extents();
    fn pick(set: &[u64], rb: &mut dyn FnMut(u64) -> u64) -> u64 {
        set[rb(set.len() as u64) as usize]
    }
    fn shuffle(v: &mut [usize], rb: &mut dyn FnMut(u64) -> u64) {
        for i in (1..v.len()).rev() {
            v.swap(i, rb(i as u64 + 1) as usize);
        }
    }
    for _ in 0..attempts {
        let t3: Vec<u64> = extents
            .iter()
            .map(|&e| pick(&divisors(e), rand_below))
            .collect();
        let mut idx: Vec<usize> = (0..n).collect();
        shuffle(&mut idx, rand_below);
        let mut t2 = vec![1u64; n];
        let mut budget = hw.num_pes;
        let mut parallel = 0usize;
        for &i in &idx {
            if parallel >= flags.max_parallel_loops {
                break;
            }
            let fits: Vec<u64> = divisors(t3[i]).into_iter().filter(|&d| d <= budget).collect();
            let d = pick(&fits, rand_below);
            if d > 1 {
                parallel += 1;
                budget /= d;
            }
            t2[i] = d;
        }
        let t1: Vec<u64> = (0..n)
            .map(|i| pick(&divisors(t3[i] / t2[i]), rand_below))
            .collect();
        let mut order2: Vec<usize> = (0..n).collect();
        shuffle(&mut order2, rand_below);
        let mut order3: Vec<usize> = (0..n).collect();
        shuffle(&mut order3, rand_below);
        let mut innermost = BTreeMap::new();
        for r in &nest.refs {
            innermost
                .entry(r.tensor.clone())
                .or_insert_with(|| rand_below(r.rank() as u64) as usize);
        }
        let m = Mapping {
            t1,
            t2,
            order2,
            t3,
            order3,
            layout: Layout { innermost },
        };
        if validate_mapping(nest, hw, &m, flags).is_empty() {
            return Some(m);
        }
    }
    None
}

/// Sorted divisors of `n`.
pub(crate) fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    large.reverse();
    small.extend(large);
    small
}

fn lex_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut perms = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        perms.push(cur.clone());
        // next_permutation in lexicographic order
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    perms
}

/// One on-chip candidate: a level-2 loop order, parallel degrees, and
/// level-1 tile sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnchipPoint {
    pub order2: Vec<usize>,
    pub t2: Vec<u64>,
    pub t1: Vec<u64>,
}

/// Streams all valid `(order2, t2, t1)` candidates for a fixed level-3 tile,
/// in deterministic order: loop orders lexicographic, then tile vectors
/// ascending with the last iterator varying fastest.
pub fn enumerate_onchip<'a>(
    nest: &'a LoopNest,
    hw: &'a AcceleratorConfig,
    t3: &[u64],
    flags: &PruningFlags,
) -> OnchipIter<'a> {
    let n = nest.iterators.len();
    assert_eq!(t3.len(), n, "t3 arity");
    let fp = FootprintModel::new(nest);
    let t2_cands: Vec<Vec<u64>> = t3
        .iter()
        .map(|&t| {
            if flags.factor_tiles {
                divisors(t).into_iter().filter(|&d| d <= hw.num_pes).collect()
            } else {
                (1..=t.min(hw.num_pes)).collect()
            }
        })
        .collect();
    OnchipIter {
        nest,
        hw,
        flags: flags.clone(),
        fp,
        t3: t3.to_vec(),
        perms: lex_permutations(n),
        perm_idx: 0,
        t2_cands,
        t2_idx: None,
        t1_cands: Vec::new(),
        t1_idx: None,
    }
}

pub struct OnchipIter<'a> {
    nest: &'a LoopNest,
    hw: &'a AcceleratorConfig,
    flags: PruningFlags,
    fp: FootprintModel,
    t3: Vec<u64>,
    perms: Vec<Vec<usize>>,
    perm_idx: usize,
    t2_cands: Vec<Vec<u64>>,
    /// Candidate indices of the current t2 vector; `None` before the first.
    t2_idx: Option<Vec<usize>>,
    t1_cands: Vec<Vec<u64>>,
    t1_idx: Option<Vec<usize>>,
}

impl<'a> OnchipIter<'a> {
    fn t2_vector(&self) -> Vec<u64> {
        self.t2_idx
            .as_ref()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, &c)| self.t2_cands[i][c])
            .collect()
    }

    fn t1_vector(&self) -> Vec<u64> {
        self.t1_idx
            .as_ref()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, &c)| self.t1_cands[i][c])
            .collect()
    }

    /// Advances an odometer (last digit fastest); returns false on wrap.
    fn bump(idx: &mut Vec<usize>, lens: impl Fn(usize) -> usize) -> bool {
        let n = idx.len();
        let mut k = n;
        while k > 0 {
            k -= 1;
            idx[k] += 1;
            if idx[k] < lens(k) {
                return true;
            }
            idx[k] = 0;
        }
        false
    }

    fn t2_acceptable(&self, t2: &[u64]) -> bool {
        let degree: u128 = t2.iter().map(|&d| d as u128).product();
        if degree > self.hw.num_pes as u128 {
            return false;
        }
        if let Some(bound) = self.flags.utilization_bound {
            if (degree as f64 / self.hw.num_pes as f64) < bound {
                return false;
            }
        }
        t2.iter().filter(|&&d| d > 1).count() <= self.flags.max_parallel_loops
    }

    fn load_t1_cands(&mut self, t2: &[u64]) {
        self.t1_cands = (0..self.t3.len())
            .map(|i| {
                let quot = self.t3[i] / t2[i];
                if self.flags.factor_tiles {
                    divisors(quot)
                } else {
                    (1..=quot).collect()
                }
            })
            .collect();
        self.t1_idx = Some(vec![0; self.t3.len()]);
    }

    fn t1_acceptable(&self, t1: &[u64]) -> bool {
        let need = 2 * self.fp.total_elems(t1) * self.nest.bytes_per_element as u128;
        need <= self.hw.l1_bytes as u128
    }

    /// Moves to the next t2 vector that passes the level-2 checks; false
    /// when the current permutation is exhausted.
    fn advance_t2(&mut self) -> bool {
        loop {
            match &mut self.t2_idx {
                None => {
                    if self.t2_cands.iter().any(|c| c.is_empty()) {
                        return false;
                    }
                    self.t2_idx = Some(vec![0; self.t2_cands.len()]);
                }
                Some(idx) => {
                    let lens: Vec<usize> = self.t2_cands.iter().map(|c| c.len()).collect();
                    if !Self::bump(idx, |i| lens[i]) {
                        self.t2_idx = None;
                        return false;
                    }
                }
            }
            let t2 = self.t2_vector();
            if self.t2_acceptable(&t2) {
                self.load_t1_cands(&t2);
                return true;
            }
        }
    }
}

impl<'a> Iterator for OnchipIter<'a> {
    type Item = OnchipPoint;

    fn next(&mut self) -> Option<OnchipPoint> {
        while self.perm_idx < self.perms.len() {
            if self.t2_idx.is_none() && !self.advance_t2() {
                self.perm_idx += 1;
                continue;
            }
            loop {
                if self.t1_idx.is_none() {
                    break;
                }
                let lens: Vec<usize> = self.t1_cands.iter().map(|c| c.len()).collect();
                let candidate = {
                    let t1 = self.t1_vector();
                    self.t1_acceptable(&t1).then(|| OnchipPoint {
                        order2: self.perms[self.perm_idx].clone(),
                        t2: self.t2_vector(),
                        t1,
                    })
                };
                let more = Self::bump(self.t1_idx.as_mut().unwrap(), |i| lens[i]);
                if !more {
                    self.t1_idx = None;
                    if !self.advance_t2() {
                        self.perm_idx += 1;
                        if let Some(c) = candidate {
                            return Some(c);
                        }
                        break;
                    }
                }
                if let Some(c) = candidate {
                    return Some(c);
                }
            }
        }
        None
    }
}

/// Closed-form and enumerated sizes of the mapping space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceStats {
    /// Undecoupled cross product of all six aspects.
    pub original: u128,
    /// Off-chip subspace (layouts x level-3 tiles) under the flags.
    pub offchip: u128,
    /// On-chip subspace (orders x degrees x level-1 tiles) under the flags.
    pub onchip: u128,
}

impl SpaceStats {
    /// Search-space reduction factor won by decoupling.
    pub fn reduction(&self) -> f64 {
        let denom = (self.offchip + self.onchip) as f64;
        if denom == 0.0 {
            return f64::INFINITY;
        }
        self.original as f64 / denom
    }
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Divisor chains `t1 | t2 | t3 | e` (three nested choices).
fn chains3(e: u64) -> u128 {
    // Multiplicative: a prime power p^k contributes C(k+3, 3).
    let mut total: u128 = 1;
    for (_, k) in prime_powers(e) {
        let k = k as u128;
        total *= (k + 1) * (k + 2) * (k + 3) / 6;
    }
    total
}

/// Unconstrained chains `1 <= a <= b <= c <= e`.
fn chains3_free(e: u64) -> u128 {
    let e = e as u128;
    e * (e + 1) * (e + 2) / 6
}

fn chains2_free(e: u64) -> u128 {
    let e = e as u128;
    e * (e + 1) / 2
}

fn prime_powers(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            let mut k = 0;
            while n % p == 0 {
                n /= p;
                k += 1;
            }
            out.push((p, k));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

fn sat_mul(a: u128, b: u128) -> u128 {
    a.checked_mul(b).unwrap_or(u128::MAX)
}

/// Counts mapping-space sizes for a nest on an accelerator.
///
/// The original count multiplies, per iterator, the number of three-level
/// tile chains, by both loop-order spaces, by the full per-tensor layout
/// permutation count. With factor pruning active the decoupled subspaces are
/// enumerated exactly (off-chip under the double-buffered L2 bound, on-chip
/// under the PE, utilization, parallel-loop, and L1 bounds, both against
/// level-3 tiles equal to the full extents); without it they are closed-form
/// upper bounds that ignore the capacity constraints.
pub fn space_size(nest: &LoopNest, hw: &AcceleratorConfig, flags: &PruningFlags) -> SpaceStats {
    let n = nest.iterators.len();
    let extents = nest.extents();
    let orders = factorial(n);
    let layouts: u128 = nest
        .refs
        .iter()
        .map(|r| (r.tensor.as_str(), r.rank()))
        .collect::<BTreeMap<_, _>>()
        .values()
        .map(|&rank| factorial(rank))
        .product();

    let mut original: u128 = sat_mul(sat_mul(orders, orders), layouts);
    for &e in &extents {
        let c = if flags.factor_tiles {
            chains3(e)
        } else {
            chains3_free(e)
        };
        original = sat_mul(original, c);
    }

    let fp = FootprintModel::new(nest);
    let (offchip, onchip);
    if flags.factor_tiles {
        let t3_count = count_tiles_under(&fp, nest, &extents, |elems| {
            2 * elems * nest.bytes_per_element as u128 <= hw.l2_bytes as u128
        });
        offchip = sat_mul(t3_count, layouts);

        let t1_vectors = collect_tiles_under(&fp, nest, &extents, |elems| {
            2 * elems * nest.bytes_per_element as u128 <= hw.l1_bytes as u128
        });
        let mut pairs: u128 = 0;
        let t2_cands: Vec<Vec<u64>> = extents
            .iter()
            .map(|&e| divisors(e).into_iter().filter(|&d| d <= hw.num_pes).collect())
            .collect();
        let mut t2 = vec![1u64; n];
        count_t2(
            hw,
            flags,
            &t2_cands,
            &mut t2,
            0,
            1,
            0,
            &mut |t2: &[u64]| {
                pairs += t1_vectors
                    .iter()
                    .filter(|t1| {
                        t1.iter()
                            .zip(t2)
                            .zip(&extents)
                            .all(|((&a, &d), &e)| (e / d) % a == 0)
                    })
                    .count() as u128;
            },
        );
        onchip = sat_mul(orders, pairs);
    } else {
        let mut t3_count: u128 = 1;
        let mut pairs: u128 = 1;
        for &e in &extents {
            t3_count = sat_mul(t3_count, e as u128);
            pairs = sat_mul(pairs, chains2_free(e));
        }
        offchip = sat_mul(t3_count, layouts);
        onchip = sat_mul(orders, pairs);
    }
    SpaceStats {
        original,
        offchip,
        onchip,
    }
}

/// DFS over divisor tile vectors with a monotone capacity predicate.
fn count_tiles_under(
    fp: &FootprintModel,
    nest: &LoopNest,
    extents: &[u64],
    ok: impl Fn(u128) -> bool + Copy,
) -> u128 {
    let mut tile = vec![1u64; extents.len()];
    let mut count = 0u128;
    tiles_dfs(fp, nest, extents, &mut tile, 0, ok, &mut |_| count += 1);
    count
}

fn collect_tiles_under(
    fp: &FootprintModel,
    nest: &LoopNest,
    extents: &[u64],
    ok: impl Fn(u128) -> bool + Copy,
) -> Vec<Vec<u64>> {
    let mut tile = vec![1u64; extents.len()];
    let mut out = Vec::new();
    tiles_dfs(fp, nest, extents, &mut tile, 0, ok, &mut |t| {
        out.push(t.to_vec())
    });
    out
}

fn tiles_dfs(
    fp: &FootprintModel,
    nest: &LoopNest,
    extents: &[u64],
    tile: &mut Vec<u64>,
    dim: usize,
    ok: impl Fn(u128) -> bool + Copy,
    emit: &mut impl FnMut(&[u64]),
) {
    if dim == extents.len() {
        emit(tile);
        return;
    }
    for d in divisors(extents[dim]) {
        tile[dim] = d;
        // Remaining dims are at 1, so the current footprint is the minimum
        // reachable from this prefix; prune monotonically.
        if !ok(fp.total_elems(tile)) {
            break;
        }
        tiles_dfs(fp, nest, extents, tile, dim + 1, ok, emit);
    }
    tile[dim] = 1;
}

fn count_t2(
    hw: &AcceleratorConfig,
    flags: &PruningFlags,
    cands: &[Vec<u64>],
    t2: &mut Vec<u64>,
    dim: usize,
    degree: u128,
    parallel: usize,
    emit: &mut impl FnMut(&[u64]),
) {
    if dim == cands.len() {
        if let Some(bound) = flags.utilization_bound {
            if (degree as f64 / hw.num_pes as f64) < bound {
                return;
            }
        }
        emit(t2);
        return;
    }
    for &d in &cands[dim] {
        let new_degree = degree * d as u128;
        if new_degree > hw.num_pes as u128 {
            break;
        }
        let new_parallel = parallel + usize::from(d > 1);
        if new_parallel > flags.max_parallel_loops {
            continue;
        }
        t2[dim] = d;
        count_t2(hw, flags, cands, t2, dim + 1, new_degree, new_parallel, emit);
    }
    t2[dim] = 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offchip::Layout;
    use crate::workloads::{make_conv1d, make_gemm, GemmParams};

    fn small_hw() -> AcceleratorConfig {
        AcceleratorConfig {
            name: "t".into(),
            num_pes: 4,
            clock_mhz: 200.0,
            noc_bandwidth_gbps: 2.4,
            l1_bytes: 64,
            l2_bytes: 4096,
            dram_block_bytes: 8,
            multicast: true,
            energy_profile: Default::default(),
        }
    }

    fn layout_for(nest: &LoopNest) -> Layout {
        Layout::innermost_default(nest)
    }

    #[test]
    fn validate_catches_each_violation() {
        let nest = make_gemm(&GemmParams::new("g", 8, 8, 8)).unwrap();
        let hw = small_hw();
        let flags = PruningFlags::default();
        let good = Mapping {
            t1: vec![1, 2, 1],
            t2: vec![2, 1, 2],
            order2: vec![0, 1, 2],
            t3: vec![4, 4, 4],
            order3: vec![0, 1, 2],
            layout: layout_for(&nest),
        };
        assert!(validate_mapping(&nest, &hw, &good, &flags).is_empty());

        let mut bad = good.clone();
        bad.t3[0] = 16;
        assert!(matches!(
            validate_mapping(&nest, &hw, &bad, &flags)[0],
            MappingViolation::TileOrder { .. }
        ));

        let mut bad = good.clone();
        bad.t3 = vec![5, 4, 4];
        assert!(validate_mapping(&nest, &hw, &bad, &flags)
            .iter()
            .any(|v| matches!(v, MappingViolation::NotFactors { .. })));

        let mut bad = good.clone();
        bad.t2 = vec![4, 2, 2];
        assert!(validate_mapping(&nest, &hw, &bad, &flags)
            .iter()
            .any(|v| matches!(v, MappingViolation::PeCount { .. })));

        // One active PE out of four is 25%, under a 50% bound.
        let strict = PruningFlags {
            utilization_bound: Some(0.5),
            ..flags.clone()
        };
        let mut bad = good.clone();
        bad.t2 = vec![1, 1, 1];
        assert!(validate_mapping(&nest, &hw, &bad, &strict)
            .iter()
            .any(|v| matches!(v, MappingViolation::Utilization { .. })));

        let mut bad = good.clone();
        bad.order2 = vec![0, 0, 2];
        assert!(matches!(
            validate_mapping(&nest, &hw, &bad, &flags)[0],
            MappingViolation::Shape { .. }
        ));
    }

    #[test]
    fn utilization_bound_example() {
        // 16 of 168 PEs is 9.5%, below the default 10% bound.
        let nest = make_gemm(&GemmParams::new("g", 64, 64, 64)).unwrap();
        let hw = AcceleratorConfig::preset("p1").unwrap();
        let m = Mapping {
            t1: vec![1, 1, 1],
            t2: vec![4, 4, 1],
            order2: vec![0, 1, 2],
            t3: vec![4, 4, 4],
            order3: vec![0, 1, 2],
            layout: layout_for(&nest),
        };
        let vs = validate_mapping(&nest, &hw, &m, &PruningFlags::default());
        assert!(vs
            .iter()
            .any(|v| matches!(v, MappingViolation::Utilization { utilization, .. }
                if (*utilization - 16.0 / 168.0).abs() < 1e-12)));
    }

    #[test]
    fn enumerate_matches_brute_force_filter() {
        let nest = make_conv1d("c", 8, 4).unwrap();
        let hw = small_hw();
        let flags = PruningFlags {
            factor_tiles: true,
            utilization_bound: Some(0.25),
            max_parallel_loops: 2,
        };
        let t3 = vec![8, 4];
        let stream: Vec<OnchipPoint> = enumerate_onchip(&nest, &hw, &t3, &flags).collect();

        let mut brute = Vec::new();
        for perm in lex_permutations(2) {
            for a in 1..=8u64 {
                for b in 1..=4u64 {
                    for c in 1..=8u64 {
                        for d in 1..=4u64 {
                            let m = Mapping {
                                t1: vec![c, d],
                                t2: vec![a, b],
                                order2: perm.clone(),
                                t3: t3.clone(),
                                order3: vec![0, 1],
                                layout: layout_for(&nest),
                            };
                            if validate_mapping(&nest, &hw, &m, &flags).is_empty() {
                                brute.push(OnchipPoint {
                                    order2: perm.clone(),
                                    t2: vec![a, b],
                                    t1: vec![c, d],
                                });
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(stream.len(), brute.len());
        assert_eq!(stream, brute);
    }

    #[test]
    fn every_enumerated_point_validates() {
        let nest = make_gemm(&GemmParams::new("g", 8, 8, 8)).unwrap();
        let hw = small_hw();
        let flags = PruningFlags::default();
        let t3 = vec![8, 4, 4];
        let mut count = 0;
        for p in enumerate_onchip(&nest, &hw, &t3, &flags) {
            let m = Mapping {
                t1: p.t1,
                t2: p.t2,
                order2: p.order2,
                t3: t3.clone(),
                order3: vec![0, 1, 2],
                layout: layout_for(&nest),
            };
            assert!(validate_mapping(&nest, &hw, &m, &flags).is_empty());
            count += 1;
        }
        assert!(count > 0);
    }

    #[test]
    fn space_counts_shrink_under_pruning() {
        let nest = make_gemm(&GemmParams::new("g", 16, 16, 16)).unwrap();
        let hw = small_hw();
        let pruned = space_size(&nest, &hw, &PruningFlags::default());
        let free = space_size(&nest, &hw, &PruningFlags::none());
        assert!(pruned.original < free.original);
        assert!(pruned.offchip < free.offchip);
        assert!(pruned.onchip < free.onchip);
        assert!(pruned.reduction() > 1.0);
    }

    #[test]
    fn onchip_count_matches_enumeration() {
        let nest = make_conv1d("c", 8, 4).unwrap();
        let hw = small_hw();
        let flags = PruningFlags {
            factor_tiles: true,
            utilization_bound: Some(0.25),
            max_parallel_loops: 2,
        };
        let stats = space_size(&nest, &hw, &flags);
        let stream_len = enumerate_onchip(&nest, &hw, &nest.extents(), &flags).count();
        assert_eq!(stats.onchip, stream_len as u128);
    }

    #[test]
    fn divisor_chain_counts() {
        assert_eq!(chains3(1), 1);
        assert_eq!(chains3(2), 4);
        assert_eq!(chains3(6), 16);
        assert_eq!(chains3_free(3), 10);
    }

    #[test]
    fn sampled_mappings_validate() {
        use rand::{Rng, SeedableRng};
        let nest = make_conv1d("c", 16, 4).unwrap();
        let hw = small_hw();
        let flags = PruningFlags {
            utilization_bound: None,
            ..PruningFlags::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut rb = |n: u64| rng.gen_range(0..n);
        for _ in 0..50 {
            let m = sample_valid_mapping(&nest, &hw, &flags, 64, &mut rb).unwrap();
            assert!(validate_mapping(&nest, &hw, &m, &flags).is_empty());
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn enumerated_points_always_validate(
            out_pick in 0usize..4,
            filter_pick in 0usize..3,
            l1 in 16u64..256,
            pes in 1u64..12,
            max_par in 1usize..=2,
            ub in proptest::option::of(0.05f64..0.9),
        ) {
            let out = [4u64, 6, 8, 12][out_pick];
            let filter = [2u64, 3, 4][filter_pick];
            let nest = make_conv1d("c", out, filter).unwrap();
            let hw = AcceleratorConfig {
                num_pes: pes,
                l1_bytes: l1,
                ..small_hw()
            };
            let flags = PruningFlags {
                factor_tiles: true,
                utilization_bound: ub,
                max_parallel_loops: max_par,
            };
            let t3 = nest.extents();
            for p in enumerate_onchip(&nest, &hw, &t3, &flags) {
                let m = Mapping {
                    t1: p.t1,
                    t2: p.t2,
                    order2: p.order2,
                    t3: t3.clone(),
                    order3: vec![0, 1],
                    layout: layout_for(&nest),
                };
                let violations = validate_mapping(&nest, &hw, &m, &flags);
                proptest::prop_assert!(violations.is_empty(), "{:?}", violations);
            }
        }
    }
}
