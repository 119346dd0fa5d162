//! Data-mapping directive programs and the loop-nest-to-directive transform.
//!
//! A directive program lists regions of `TemporalMap`/`SpatialMap` directives
//! over independent tensor dimensions, separated by `Cluster` directives.
//! Earlier directives are outer: all indices of a later directive are explored
//! before the earlier one advances. A mapping of an n-parallel-loop nest
//! always produces `n + 3` regions, outermost first:
//!
//! 1. level-3 inter-tile region: `TemporalMap(t3, t3)` per dimension in the
//!    level-3 loop order;
//! 2. level-2 inter-tile region: `TemporalMap(t1*t2, t1*t2)` per dimension in
//!    the level-2 loop order (the stride of a level-2 inter-tile loop is the
//!    extent of the block the PE array owns per step);
//! 3. one region per parallel loop, outer loop first, holding a
//!    `SpatialMap(t1, t1)` over that loop's dimension plus trip-count-one
//!    temporal maps for the rest; every such region except the last ends with
//!    a `Cluster` sized by the loop's parallel degree;
//! 4. point region: `TemporalMap(t1, t1)` per dimension in nest order.
//!
//! All other region boundaries are `Cluster(1)`. Because the level-2 region
//! narrows a parallel dimension to its `t1*t2` block before the spatial map
//! distributes it, a spatial map's chunk count inside its window equals the
//! parallel degree; when a machine offers fewer PEs the mapping folds over
//! time. Cost models derive grouping from the spatial maps themselves and
//! treat cluster sizes as source-text labels.

use crate::conformability::DimensionDependenceGraph;
use crate::loopnest::{AccessDirection, LoopNest, ReduceOp, StatementKind, Subscript};
use crate::mapping::Mapping;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Directive {
    TemporalMap { size: u64, offset: u64, dim: String },
    SpatialMap { size: u64, offset: u64, dim: String },
    Cluster { size: u64 },
}

impl Directive {
    pub fn dim(&self) -> Option<&str> {
        match self {
            Directive::TemporalMap { dim, .. } | Directive::SpatialMap { dim, .. } => Some(dim),
            Directive::Cluster { .. } => None,
        }
    }

    pub fn size(&self) -> u64 {
        match self {
            Directive::TemporalMap { size, .. }
            | Directive::SpatialMap { size, .. }
            | Directive::Cluster { size } => *size,
        }
    }
}

/// A maximal run of map directives with one data-movement behavior.
/// Labels count from the innermost region up, so the point region is `R1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub label: String,
    pub directives: Vec<Directive>,
}

impl Region {
    pub fn spatial(&self) -> Option<&Directive> {
        self.directives
            .iter()
            .find(|d| matches!(d, Directive::SpatialMap { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorDecl {
    pub name: String,
    /// `output` for written tensors, `input` otherwise.
    pub role: String,
    pub dims: Vec<(String, u64)>,
}

/// A complete directive program: the computation header plus regions
/// separated by clusters (`clusters[i]` follows `regions[i]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdcMapping {
    pub operator: String,
    pub statement: String,
    pub tensors: Vec<TensorDecl>,
    pub regions: Vec<Region>,
    pub clusters: Vec<u64>,
}

impl MdcMapping {
    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    /// Regions outermost first interleaved with their trailing clusters.
    pub fn flat_directives(&self) -> Vec<Directive> {
        let mut out = Vec::new();
        for (i, r) in self.regions.iter().enumerate() {
            out.extend(r.directives.iter().cloned());
            if i < self.clusters.len() {
                out.push(Directive::Cluster {
                    size: self.clusters[i],
                });
            }
        }
        out
    }

    /// Map-directive size per dimension in the point region.
    pub fn point_sizes(&self) -> BTreeMap<&str, u64> {
        self.regions
            .last()
            .map(|r| {
                r.directives
                    .iter()
                    .filter_map(|d| d.dim().map(|n| (n, d.size())))
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("operator is not conformable: no independent dimension covers iterator `{0}`")]
    UnmappedIterator(String),
    #[error("independent dimension `{0}` merges several iterators and cannot be tiled per iterator")]
    MergedDimension(String),
    #[error("mapping has wrong arity for the nest")]
    Arity,
}

fn label(total: usize, index: usize) -> String {
    format!("R{}", total - index)
}

/// Extent of a dependent dimension under per-iterator mapped sizes:
/// `sum(c_k * (size_k - 1)) + 1`.
pub fn dependent_extent(subscript: &Subscript, mapped_sizes: &BTreeMap<&str, u64>) -> u64 {
    1 + subscript
        .terms
        .iter()
        .map(|(it, c)| c.unsigned_abs() * (mapped_sizes[it.as_str()] - 1))
        .sum::<u64>()
}

/// Translates a tiled mapping into a directive program.
///
/// Every iterator must own exactly one independent dimension (a zero
/// in-degree node over that single iterator).
pub fn transform_to_mdc(
    m: &Mapping,
    nest: &LoopNest,
    ddg: &DimensionDependenceGraph,
) -> Result<MdcMapping, TransformError> {
    let n = nest.iterators.len();
    if m.t1.len() != n || m.t2.len() != n || m.order2.len() != n || m.order3.len() != n {
        return Err(TransformError::Arity);
    }
    // dim_of[i] = independent dimension variable owned by iterator i.
    let mut dim_of: Vec<Option<&str>> = vec![None; n];
    for &ni in &ddg.zero_in_degree() {
        let node = &ddg.nodes[ni];
        let iters = node.subscript.iterators();
        match iters.as_slice() {
            // Constant-indexed dimensions (dropped unit loops) need no
            // directive.
            [] => {}
            [it] => {
                let idx = nest
                    .iterator_index(it)
                    .expect("ddg node names a nest iterator");
                dim_of[idx].get_or_insert(node.dim_var.as_str());
            }
            _ => return Err(TransformError::MergedDimension(node.dim_var.clone())),
        }
    }
    let dim_of: Vec<&str> = dim_of
        .into_iter()
        .enumerate()
        .map(|(i, d)| d.ok_or_else(|| TransformError::UnmappedIterator(nest.iterators[i].name.clone())))
        .collect::<Result<_, _>>()?;

    let parallel: Vec<usize> = m.parallel_iters();
    let total = parallel.len() + 3;
    let mut regions = Vec::with_capacity(total);
    let mut clusters = Vec::with_capacity(total - 1);

    let tmap = |size: u64, dim: &str| Directive::TemporalMap {
        size,
        offset: size,
        dim: dim.to_string(),
    };

    regions.push(Region {
        label: label(total, 0),
        directives: m.order3.iter().map(|&i| tmap(m.t3[i], dim_of[i])).collect(),
    });
    clusters.push(1);

    let block2: Vec<u64> = (0..n).map(|i| m.block2(i)).collect();
    regions.push(Region {
        label: label(total, 1),
        directives: m
            .order2
            .iter()
            .map(|&i| tmap(block2[i], dim_of[i]))
            .collect(),
    });
    clusters.push(1);

    for (j, &p) in parallel.iter().enumerate() {
        let mut directives = vec![Directive::SpatialMap {
            size: m.t1[p],
            offset: m.t1[p],
            dim: dim_of[p].to_string(),
        }];
        for q in 0..n {
            if q == p {
                continue;
            }
            // Trip-count-one window: the block the dimension currently owns.
            // Parallel dimensions distributed further in still hold their
            // whole level-2 block.
            let visible = if parallel.iter().position(|&x| x == q) > Some(j) {
                block2[q]
            } else {
                m.t1[q]
            };
            directives.push(tmap(visible, dim_of[q]));
        }
        regions.push(Region {
            label: label(total, 2 + j),
            directives,
        });
        clusters.push(if j + 1 < parallel.len() { m.t2[p] } else { 1 });
    }

    regions.push(Region {
        label: label(total, total - 1),
        directives: (0..n).map(|i| tmap(m.t1[i], dim_of[i])).collect(),
    });

    debug_assert_eq!(clusters.len(), regions.len() - 1);
    Ok(MdcMapping {
        operator: nest.name.clone(),
        statement: render_statement(nest),
        tensors: tensor_decls(nest),
        regions,
        clusters,
    })
}

fn render_statement(nest: &LoopNest) -> String {
    let fmt_ref = |r: &crate::loopnest::TensorRef| {
        let mut s = r.tensor.clone();
        for (d, _) in &r.dims {
            let _ = write!(s, "[{d}]");
        }
        s
    };
    let out = nest
        .output_refs()
        .next()
        .expect("nest has an output reference");
    let op = match nest.statement {
        StatementKind::Assign => "=",
        StatementKind::Reduce(ReduceOp::Sum) => "+=",
        StatementKind::Reduce(ReduceOp::Max) => "max=",
        StatementKind::Reduce(ReduceOp::Min) => "min=",
    };
    let inputs: Vec<String> = nest
        .refs
        .iter()
        .filter(|r| r.direction == AccessDirection::Read)
        .map(fmt_ref)
        .collect();
    let rhs = if inputs.is_empty() {
        fmt_ref(out)
    } else {
        inputs.join(" * ")
    };
    format!("{} {} {}", fmt_ref(out), op, rhs)
}

fn tensor_decls(nest: &LoopNest) -> Vec<TensorDecl> {
    let mut out: Vec<TensorDecl> = Vec::new();
    for r in &nest.refs {
        if out.iter().any(|t| t.name == r.tensor) {
            continue;
        }
        let role = if r.direction == AccessDirection::Read {
            "input"
        } else {
            "output"
        };
        out.push(TensorDecl {
            name: r.tensor.clone(),
            role: role.to_string(),
            dims: r
                .dims
                .iter()
                .zip(&r.dim_extents)
                .map(|((d, _), &e)| (d.clone(), e))
                .collect(),
        });
    }
    out
}

/// Per-tensor data volume owned by one PE in one time step, derived from the
/// point-region directives plus `dependent_extent` for dependent dimensions.
pub fn directive_volumes(
    mdc: &MdcMapping,
    nest: &LoopNest,
    ddg: &DimensionDependenceGraph,
) -> BTreeMap<String, u128> {
    let point = mdc.point_sizes();
    // Iterator sizes follow from the independent dimensions they own.
    let mut iter_sizes: BTreeMap<&str, u64> = BTreeMap::new();
    for &ni in &ddg.zero_in_degree() {
        let node = &ddg.nodes[ni];
        let iters = node.subscript.iterators();
        if iters.len() == 1 {
            if let Some(&size) = point.get(node.dim_var.as_str()) {
                iter_sizes.insert(iters[0], size);
            }
        }
    }
    let mut out = BTreeMap::new();
    for decl in &mdc.tensors {
        let r = nest
            .refs
            .iter()
            .find(|r| r.tensor == decl.name)
            .expect("declared tensor appears in the nest");
        let mut vol: u128 = 1;
        for (d, sub) in &r.dims {
            let extent = match point.get(d.as_str()) {
                Some(&s) => s,
                None => dependent_extent(sub, &iter_sizes),
            };
            vol *= extent as u128;
        }
        out.insert(decl.name.clone(), vol);
    }
    out
}

#[derive(Debug, Error, PartialEq)]
#[error("parse error at line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

/// Renders the textual form; `parse_mdc` inverts it byte-identically.
pub fn render_mdc(mdc: &MdcMapping) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Operator: {}", mdc.operator);
    let _ = writeln!(s, "Statement: {}", mdc.statement);
    for t in &mdc.tensors {
        let _ = write!(s, "Tensor: {} {} ", t.name, t.role);
        for (d, e) in &t.dims {
            let _ = write!(s, "[{d}:{e}]");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "Mapping:");
    for d in mdc.flat_directives() {
        match d {
            Directive::TemporalMap { size, offset, dim } => {
                let _ = writeln!(s, "TemporalMap({size},{offset}) {dim}");
            }
            Directive::SpatialMap { size, offset, dim } => {
                let _ = writeln!(s, "SpatialMap({size},{offset}) {dim}");
            }
            Directive::Cluster { size } => {
                let _ = writeln!(s, "Cluster({size})");
            }
        }
    }
    s
}

pub fn parse_mdc(text: &str) -> Result<MdcMapping, ParseError> {
    let err = |line: usize, col: usize, msg: &str| ParseError {
        line,
        col,
        msg: msg.to_string(),
    };
    let mut operator = None;
    let mut statement = None;
    let mut tensors = Vec::new();
    let mut directives: Vec<Directive> = Vec::new();
    let mut in_mapping = false;

    for (ln, raw) in text.lines().enumerate() {
        let ln1 = ln + 1;
        if raw.is_empty() {
            continue;
        }
        if !in_mapping {
            if let Some(rest) = raw.strip_prefix("Operator: ") {
                operator = Some(rest.to_string());
            } else if let Some(rest) = raw.strip_prefix("Statement: ") {
                statement = Some(rest.to_string());
            } else if let Some(rest) = raw.strip_prefix("Tensor: ") {
                tensors.push(parse_tensor(rest, ln1)?);
            } else if raw == "Mapping:" {
                in_mapping = true;
            } else {
                return Err(err(ln1, 1, "expected a header line or `Mapping:`"));
            }
            continue;
        }
        directives.push(parse_directive(raw, ln1)?);
    }

    let operator = operator.ok_or_else(|| err(1, 1, "missing `Operator:` header"))?;
    let statement = statement.ok_or_else(|| err(1, 1, "missing `Statement:` header"))?;
    if !in_mapping {
        return Err(err(1, 1, "missing `Mapping:` section"));
    }

    // Split the flat list back into regions at cluster boundaries.
    let mut bodies: Vec<Vec<Directive>> = vec![Vec::new()];
    let mut clusters = Vec::new();
    for d in directives {
        match d {
            Directive::Cluster { size } => {
                clusters.push(size);
                bodies.push(Vec::new());
            }
            other => bodies.last_mut().unwrap().push(other),
        }
    }
    let total = bodies.len();
    let regions = bodies
        .into_iter()
        .enumerate()
        .map(|(i, directives)| Region {
            label: label(total, i),
            directives,
        })
        .collect();
    Ok(MdcMapping {
        operator,
        statement,
        tensors,
        regions,
        clusters,
    })
}

fn parse_tensor(rest: &str, line: usize) -> Result<TensorDecl, ParseError> {
    let err = |msg: &str| ParseError {
        line,
        col: 1,
        msg: msg.to_string(),
    };
    let (head, dims_text) = rest
        .split_once(" [")
        .ok_or_else(|| err("expected `<name> <role> [dim:extent]...`"))?;
    let (name, role) = head
        .split_once(' ')
        .ok_or_else(|| err("expected `<name> <role>`"))?;
    if role != "input" && role != "output" {
        return Err(err("role must be `input` or `output`"));
    }
    let mut dims = Vec::new();
    for part in format!("[{dims_text}").split_inclusive(']') {
        let body = part
            .strip_prefix('[')
            .and_then(|p| p.strip_suffix(']'))
            .ok_or_else(|| err("malformed dimension list"))?;
        let (d, e) = body
            .split_once(':')
            .ok_or_else(|| err("expected `dim:extent`"))?;
        let e: u64 = e.parse().map_err(|_| err("bad extent"))?;
        dims.push((d.to_string(), e));
    }
    Ok(TensorDecl {
        name: name.to_string(),
        role: role.to_string(),
        dims,
    })
}

fn parse_directive(line_text: &str, line: usize) -> Result<Directive, ParseError> {
    let err = |col: usize, msg: &str| ParseError {
        line,
        col,
        msg: msg.to_string(),
    };
    if let Some(rest) = line_text.strip_prefix("Cluster(") {
        let size_text = rest
            .strip_suffix(')')
            .ok_or_else(|| err(line_text.len(), "expected `)`"))?;
        let size: u64 = size_text
            .parse()
            .map_err(|_| err(9, "cluster size must be a positive integer"))?;
        if size == 0 {
            return Err(err(9, "cluster size must be >= 1"));
        }
        return Ok(Directive::Cluster { size });
    }
    let (kind, rest) = if let Some(r) = line_text.strip_prefix("TemporalMap(") {
        ("t", r)
    } else if let Some(r) = line_text.strip_prefix("SpatialMap(") {
        ("s", r)
    } else {
        return Err(err(1, "expected TemporalMap, SpatialMap, or Cluster"));
    };
    let (args, dim) = rest
        .split_once(") ")
        .ok_or_else(|| err(line_text.len(), "expected `) <dim>`"))?;
    let (size_text, offset_text) = args
        .split_once(',')
        .ok_or_else(|| err(line_text.len(), "expected `size,offset`"))?;
    let size: u64 = size_text.parse().map_err(|_| err(1, "bad size"))?;
    let offset: u64 = offset_text.parse().map_err(|_| err(1, "bad offset"))?;
    if size == 0 || offset == 0 || dim.is_empty() {
        return Err(err(1, "size and offset must be >= 1 and dim nonempty"));
    }
    Ok(if kind == "t" {
        Directive::TemporalMap {
            size,
            offset,
            dim: dim.to_string(),
        }
    } else {
        Directive::SpatialMap {
            size,
            offset,
            dim: dim.to_string(),
        }
    })
}
