//! Loop-nest intermediate representation for single-statement operators.
//!
//! An operator is a perfect nest of counted loops around one MAC-like
//! statement. Tensor accesses are affine subscripts over the loop iterators;
//! everything downstream (dependence analysis, tiling, cost models) works on
//! this form.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IrError {
    #[error("loop `{0}` has a non-affine bound")]
    NonAffineBound(String),
    #[error("loop `{0}` has non-constant step")]
    NonConstantStep(String),
    #[error("loop `{0}` has an empty iteration domain")]
    EmptyDomain(String),
    #[error("subscript references unknown iterator `{0}`")]
    UnknownIterator(String),
    #[error("tile vector has {got} entries, nest has {want} iterators")]
    TileArity { got: usize, want: usize },
    #[error("tensor `{0}` is referenced with inconsistent rank")]
    RankMismatch(String),
}

/// One normalized loop: zero-based, unit-stride, `extent` iterations.
///
/// `bound_dependency` lists iterators the original (pre-normalization) bound
/// referred to, e.g. the row iterator of a triangular domain. The extent is
/// then the maximal trip count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopIterator {
    pub name: String,
    pub extent: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bound_dependency: Vec<String>,
}

impl LoopIterator {
    pub fn new(name: impl Into<String>, extent: u64) -> Self {
        LoopIterator {
            name: name.into(),
            extent,
            bound_dependency: Vec::new(),
        }
    }
}

/// Affine index expression `sum(coeff * iterator) + constant`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subscript {
    /// `(iterator name, coefficient)`, kept sorted by iterator name with
    /// zero coefficients dropped.
    pub terms: Vec<(String, i64)>,
    pub constant: i64,
}

/// Shape of a subscript: how many distinct iterators it involves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubscriptClass {
    /// No iterator (constant index).
    Ziv,
    /// Single iterator.
    Siv,
    /// Two or more iterators.
    Miv,
}

impl Subscript {
    pub fn new(terms: impl IntoIterator<Item = (impl Into<String>, i64)>, constant: i64) -> Self {
        let mut terms: Vec<(String, i64)> = terms
            .into_iter()
            .map(|(n, c)| (n.into(), c))
            .filter(|&(_, c)| c != 0)
            .collect();
        terms.sort();
        Subscript { terms, constant }
    }

    /// Single-iterator unit-coefficient subscript `i`.
    pub fn iter(name: impl Into<String>) -> Self {
        Subscript::new([(name.into(), 1i64)], 0)
    }

    pub fn class(&self) -> SubscriptClass {
        match self.terms.len() {
            0 => SubscriptClass::Ziv,
            1 => SubscriptClass::Siv,
            _ => SubscriptClass::Miv,
        }
    }

    pub fn uses(&self, iterator: &str) -> bool {
        self.terms.iter().any(|(n, _)| n == iterator)
    }

    /// Iterator names appearing with nonzero coefficient, sorted.
    pub fn iterators(&self) -> Vec<&str> {
        self.terms.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn coeff(&self, iterator: &str) -> i64 {
        self.terms
            .iter()
            .find(|(n, _)| n == iterator)
            .map(|&(_, c)| c)
            .unwrap_or(0)
    }

    /// Evaluates the subscript at a point given by iterator values.
    pub fn eval(&self, values: &BTreeMap<&str, u64>) -> i64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|(n, c)| c * values[n.as_str()] as i64)
                .sum::<i64>()
    }

    /// Index interval `[lo, hi]` spanned when each iterator `i` ranges over
    /// `0..tile[i]`.
    pub fn span(&self, tile: &BTreeMap<&str, u64>) -> (i64, i64) {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for (n, c) in &self.terms {
            let reach = c * (tile[n.as_str()] as i64 - 1);
            if reach >= 0 {
                hi += reach;
            } else {
                lo += reach;
            }
        }
        (lo, hi)
    }
}

/// Classifies a subscript as ZIV, SIV, or MIV.
pub fn classify_subscript(s: &Subscript) -> SubscriptClass {
    s.class()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessDirection {
    Read,
    Write,
    /// Read-modify-write, e.g. an accumulation target.
    ReadWrite,
}

/// One tensor access in the statement body.
///
/// `dims` pairs each dimension-variable name with its subscript, outermost
/// dimension first; `dim_extents` gives the full tensor shape in elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRef {
    pub tensor: String,
    pub direction: AccessDirection,
    pub dims: Vec<(String, Subscript)>,
    pub dim_extents: Vec<u64>,
}

impl TensorRef {
    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn uses(&self, iterator: &str) -> bool {
        self.dims.iter().any(|(_, s)| s.uses(iterator))
    }

    /// Total element count of the tensor.
    pub fn size(&self) -> u128 {
        self.dim_extents.iter().map(|&e| e as u128).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReduceOp {
    Sum,
    Max,
    Min,
}

/// The single statement inside the nest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatementKind {
    /// Plain assignment of an expression over the read operands.
    Assign,
    /// Accumulation into the output with an associative, commutative op.
    Reduce(ReduceOp),
}

/// A perfectly nested, normalized operator loop nest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopNest {
    pub name: String,
    /// Outermost loop first.
    pub iterators: Vec<LoopIterator>,
    pub refs: Vec<TensorRef>,
    pub statement: StatementKind,
    pub bytes_per_element: u64,
}

impl LoopNest {
    pub fn iterator_index(&self, name: &str) -> Option<usize> {
        self.iterators.iter().position(|it| it.name == name)
    }

    pub fn extents(&self) -> Vec<u64> {
        self.iterators.iter().map(|it| it.extent).collect()
    }

    /// Total MAC (statement-execution) count.
    pub fn macs(&self) -> u128 {
        self.iterators.iter().map(|it| it.extent as u128).product()
    }

    pub fn output_refs(&self) -> impl Iterator<Item = &TensorRef> {
        self.refs
            .iter()
            .filter(|r| matches!(r.direction, AccessDirection::Write | AccessDirection::ReadWrite))
    }

    pub fn tensor_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.refs {
            if !names.contains(&r.tensor.as_str()) {
                names.push(&r.tensor);
            }
        }
        names
    }

    fn check_tile(&self, tile: &[u64]) -> Result<(), IrError> {
        if tile.len() != self.iterators.len() {
            return Err(IrError::TileArity {
                got: tile.len(),
                want: self.iterators.len(),
            });
        }
        Ok(())
    }
}

/// Raw loop before normalization: `for name in lower..upper step step`.
///
/// The upper bound may be affine in outer iterators; the step and lower
/// bound must be constants.
#[derive(Debug, Clone)]
pub struct RawLoop {
    pub name: String,
    pub lower: i64,
    pub upper_constant: i64,
    /// Affine terms of the upper bound over outer iterators.
    pub upper_terms: Vec<(String, i64)>,
    pub step: i64,
}

impl RawLoop {
    pub fn counted(name: impl Into<String>, extent: u64) -> Self {
        RawLoop {
            name: name.into(),
            lower: 0,
            upper_constant: extent as i64,
            upper_terms: Vec::new(),
            step: 1,
        }
    }

    pub fn strided(name: impl Into<String>, lower: i64, upper: i64, step: i64) -> Self {
        RawLoop {
            name: name.into(),
            lower,
            upper_constant: upper,
            upper_terms: Vec::new(),
            step,
        }
    }
}

/// Rewrites a raw nest into zero-based unit-stride form.
///
/// A loop `for i in lo..hi step s` becomes an iterator with extent
/// `ceil((hi-lo)/s)`; each subscript term `c*i` is rewritten to `c*s*i'`
/// with `c*lo` folded into the constant. Affine upper bounds over outer
/// iterators are recorded as `bound_dependency` and the extent is the
/// maximal trip count over the outer domain.
pub fn normalize(
    name: impl Into<String>,
    raw: &[RawLoop],
    refs: &[TensorRef],
    statement: StatementKind,
    bytes_per_element: u64,
) -> Result<LoopNest, IrError> {
    let mut iterators = Vec::with_capacity(raw.len());
    let mut max_extent: BTreeMap<String, u64> = BTreeMap::new();
    for l in raw {
        if l.step <= 0 {
            return Err(IrError::NonConstantStep(l.name.clone()));
        }
        let mut upper_max = l.upper_constant;
        let mut deps = Vec::new();
        for (dep, c) in &l.upper_terms {
            let Some(&outer) = max_extent.get(dep) else {
                return Err(IrError::NonAffineBound(l.name.clone()));
            };
            // Maximal bound over the outer domain: positive coefficients at
            // the outer maximum, negative ones at zero.
            if *c > 0 {
                upper_max += c * (outer as i64 - 1);
            }
            deps.push(dep.clone());
        }
        if upper_max <= l.lower {
            return Err(IrError::EmptyDomain(l.name.clone()));
        }
        let extent = ((upper_max - l.lower) as u64).div_ceil(l.step as u64);
        max_extent.insert(l.name.clone(), extent);
        iterators.push(LoopIterator {
            name: l.name.clone(),
            extent,
            bound_dependency: deps,
        });
    }

    let mut out_refs = Vec::with_capacity(refs.len());
    for r in refs {
        if r.dims.len() != r.dim_extents.len() {
            return Err(IrError::RankMismatch(r.tensor.clone()));
        }
        let mut dims = Vec::with_capacity(r.dims.len());
        for (dv, s) in &r.dims {
            let mut constant = s.constant;
            let mut terms = Vec::new();
            for (it, c) in &s.terms {
                let Some(l) = raw.iter().find(|l| &l.name == it) else {
                    return Err(IrError::UnknownIterator(it.clone()));
                };
                constant += c * l.lower;
                terms.push((it.clone(), c * l.step));
            }
            dims.push((dv.clone(), Subscript::new(terms, constant)));
        }
        out_refs.push(TensorRef {
            tensor: r.tensor.clone(),
            direction: r.direction,
            dims,
            dim_extents: r.dim_extents.clone(),
        });
    }

    Ok(LoopNest {
        name: name.into(),
        iterators,
        refs: out_refs,
        statement,
        bytes_per_element,
    })
}

/// Per-tensor element counts touched when each iterator `i` ranges over
/// `0..tile[i]` (indexed in nest order).
///
/// Each dimension contributes the union length of the index intervals
/// spanned by the tensor's references; dimensions multiply. For unit
/// coefficients this is the exact touched-element count whenever same-tensor
/// references differ in at most one dimension; strided subscripts are
/// counted by span.
pub fn tensor_footprint(nest: &LoopNest, tile: &[u64]) -> Result<BTreeMap<String, u128>, IrError> {
    nest.check_tile(tile)?;
    let by_name: BTreeMap<&str, u64> = nest
        .iterators
        .iter()
        .zip(tile)
        .map(|(it, &t)| (it.name.as_str(), t))
        .collect();

    let mut out: BTreeMap<String, u128> = BTreeMap::new();
    let mut per_tensor: BTreeMap<&str, Vec<&TensorRef>> = BTreeMap::new();
    for r in &nest.refs {
        let group = per_tensor.entry(&r.tensor).or_default();
        if let Some(first) = group.first() {
            if first.rank() != r.rank() {
                return Err(IrError::RankMismatch(r.tensor.clone()));
            }
        }
        group.push(r);
    }

    for (tensor, refs) in per_tensor {
        let rank = refs[0].rank();
        let mut elems: u128 = 1;
        for d in 0..rank {
            let mut intervals: Vec<(i64, i64)> = refs
                .iter()
                .map(|r| r.dims[d].1.span(&by_name))
                .collect();
            intervals.sort();
            let mut len: u128 = 0;
            let mut cur = intervals[0];
            for iv in intervals.into_iter().skip(1) {
                if iv.0 <= cur.1 + 1 {
                    cur.1 = cur.1.max(iv.1);
                } else {
                    len += (cur.1 - cur.0 + 1) as u128;
                    cur = iv;
                }
            }
            len += (cur.1 - cur.0 + 1) as u128;
            elems *= len;
        }
        out.insert(tensor.to_string(), elems);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn conv1d(out: u64, wt: u64) -> LoopNest {
        let raw = [RawLoop::counted("i0", out), RawLoop::counted("i1", wt)];
        let refs = [
            TensorRef {
                tensor: "O".into(),
                direction: AccessDirection::ReadWrite,
                dims: vec![("d_O".into(), Subscript::iter("i0"))],
                dim_extents: vec![out],
            },
            TensorRef {
                tensor: "W".into(),
                direction: AccessDirection::Read,
                dims: vec![("d_W".into(), Subscript::iter("i1"))],
                dim_extents: vec![wt],
            },
            TensorRef {
                tensor: "I".into(),
                direction: AccessDirection::Read,
                dims: vec![(
                    "d_I".into(),
                    Subscript::new([("i0", 1i64), ("i1", 1i64)], 0),
                )],
                dim_extents: vec![out + wt - 1],
            },
        ];
        normalize("conv1d", &raw, &refs, StatementKind::Reduce(ReduceOp::Sum), 1).unwrap()
    }

    #[test]
    fn classification() {
        assert_eq!(Subscript::new([("i", 0i64)], 3).class(), SubscriptClass::Ziv);
        assert_eq!(Subscript::iter("i").class(), SubscriptClass::Siv);
        assert_eq!(
            Subscript::new([("i", 1i64), ("j", 2i64)], 0).class(),
            SubscriptClass::Miv
        );
    }

    #[test]
    fn strided_loop_normalizes_to_coefficient() {
        let raw = [RawLoop::strided("i", 2, 10, 2)];
        let refs = [TensorRef {
            tensor: "A".into(),
            direction: AccessDirection::Read,
            dims: vec![("d_A".into(), Subscript::iter("i"))],
            dim_extents: vec![10],
        }];
        let nest = normalize("s", &raw, &refs, StatementKind::Assign, 1).unwrap();
        assert_eq!(nest.iterators[0].extent, 4);
        let s = &nest.refs[0].dims[0].1;
        assert_eq!(s.terms, vec![("i".to_string(), 2)]);
        assert_eq!(s.constant, 2);
    }

    #[test]
    fn triangular_bound_records_dependency() {
        let raw = [
            RawLoop::counted("i", 8),
            RawLoop {
                name: "j".into(),
                lower: 0,
                upper_constant: 1,
                upper_terms: vec![("i".into(), 1)],
                step: 1,
            },
        ];
        let nest = normalize("tri", &raw, &[], StatementKind::Assign, 1).unwrap();
        assert_eq!(nest.iterators[1].extent, 8);
        assert_eq!(nest.iterators[1].bound_dependency, vec!["i".to_string()]);
    }

    #[test]
    fn empty_domain_rejected() {
        let raw = [RawLoop::strided("i", 5, 5, 1)];
        assert_eq!(
            normalize("e", &raw, &[], StatementKind::Assign, 1).unwrap_err(),
            IrError::EmptyDomain("i".into())
        );
    }

    #[test]
    fn conv1d_footprints() {
        let nest = conv1d(16, 8);
        let fp = tensor_footprint(&nest, &[2, 3]).unwrap();
        assert_eq!(fp["O"], 2);
        assert_eq!(fp["W"], 3);
        assert_eq!(fp["I"], 4);
    }

    #[test]
    fn strided_window_footprint() {
        // 3-wide window at stride 2: input extent 2*(tp-1)+3 per tile.
        let raw = [RawLoop::counted("p", 8), RawLoop::counted("r", 3)];
        let refs = [TensorRef {
            tensor: "I".into(),
            direction: AccessDirection::Read,
            dims: vec![(
                "d_X".into(),
                Subscript::new([("p", 2i64), ("r", 1i64)], 0),
            )],
            dim_extents: vec![17],
        }];
        let nest = normalize("st", &raw, &refs, StatementKind::Assign, 1).unwrap();
        let fp = tensor_footprint(&nest, &[4, 3]).unwrap();
        assert_eq!(fp["I"], 2 * (4 - 1) + 3);
    }

    #[test]
    fn miv_span_footprint() {
        // 2*i0 + i1 with tiles (3,3) spans 7 indices.
        let raw = [RawLoop::counted("i0", 4), RawLoop::counted("i1", 4)];
        let refs = [TensorRef {
            tensor: "I".into(),
            direction: AccessDirection::Read,
            dims: vec![(
                "d_I".into(),
                Subscript::new([("i0", 2i64), ("i1", 1i64)], 0),
            )],
            dim_extents: vec![16],
        }];
        let nest = normalize("m", &raw, &refs, StatementKind::Assign, 1).unwrap();
        assert_eq!(tensor_footprint(&nest, &[3, 3]).unwrap()["I"], 7);
    }

    #[test]
    fn stencil_union_counts_once() {
        let raw = [RawLoop::counted("i0", 8)];
        let mk = |c: i64| TensorRef {
            tensor: "I".into(),
            direction: AccessDirection::Read,
            dims: vec![("d_I".into(), Subscript::new([("i0", 1i64)], c))],
            dim_extents: vec![10],
        };
        let nest = normalize("st", &raw, &[mk(0), mk(1), mk(2)], StatementKind::Assign, 1).unwrap();
        assert_eq!(tensor_footprint(&nest, &[4]).unwrap()["I"], 6);
    }

    /// Brute-force footprint: enumerate the tile, collect unique indices.
    fn enumerate_footprint(nest: &LoopNest, tile: &[u64]) -> BTreeMap<String, usize> {
        let mut sets: BTreeMap<String, BTreeSet<Vec<i64>>> = BTreeMap::new();
        let n = tile.len();
        let mut point = vec![0u64; n];
        loop {
            let values: BTreeMap<&str, u64> = nest
                .iterators
                .iter()
                .zip(&point)
                .map(|(it, &v)| (it.name.as_str(), v))
                .collect();
            for r in &nest.refs {
                let idx: Vec<i64> = r.dims.iter().map(|(_, s)| s.eval(&values)).collect();
                sets.entry(r.tensor.clone()).or_default().insert(idx);
            }
            let mut k = n;
            loop {
                if k == 0 {
                    return sets.into_iter().map(|(t, s)| (t, s.len())).collect();
                }
                k -= 1;
                point[k] += 1;
                if point[k] < tile[k] {
                    break;
                }
                point[k] = 0;
            }
        }
    }

    #[test]
    fn footprint_matches_enumeration_on_conv1d_grid() {
        let nest = conv1d(16, 8);
        for to in 1..=6u64 {
            for tw in 1..=6u64 {
                let fp = tensor_footprint(&nest, &[to, tw]).unwrap();
                let brute = enumerate_footprint(&nest, &[to, tw]);
                for (t, n) in brute {
                    assert_eq!(fp[&t], n as u128, "tensor {t} tile ({to},{tw})");
                }
            }
        }
    }
}
