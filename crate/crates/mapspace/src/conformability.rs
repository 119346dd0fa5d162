//! Decides whether an operator nest can be described with data-centric
//! mapping directives.
//!
//! The check builds a dimension dependence graph (DDG) over tensor-dimension
//! references and evaluates four rules: perfect single-statement nest (r1),
//! no loop-carried dependences other than reduction (r2), acyclic dimension
//! dependences with uniquely identifiable independent dimensions (r3), and
//! unit-coefficient constant-free subscripts on the independent dimensions
//! (r4). Mapping directives are only ever written over the independent
//! dimensions; dependent ones are inferred from them.

use crate::loopnest::{
    AccessDirection, LoopNest, StatementKind, Subscript, SubscriptClass,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// One tensor-dimension reference: a dimension variable together with the
/// subscript it is accessed through.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DdgNode {
    pub tensor: String,
    pub dim_pos: usize,
    pub dim_var: String,
    pub subscript: Subscript,
}

impl DdgNode {
    fn sort_key(&self) -> (&str, usize, &Subscript) {
        (&self.tensor, self.dim_pos, &self.subscript)
    }
}

/// Dimension dependence graph. Edges point from a dimension toward
/// dimensions whose index sets depend on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionDependenceGraph {
    pub nodes: Vec<DdgNode>,
    /// Directed edges as `(from, to)` node indices, deduplicated and sorted.
    pub edges: Vec<(usize, usize)>,
    /// Node indices in topological order; `None` when the graph is cyclic.
    pub topological: Option<Vec<usize>>,
}

impl DimensionDependenceGraph {
    pub fn in_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|&&(_, to)| to == node).count()
    }

    /// Node indices with no incoming edge, in node order.
    pub fn zero_in_degree(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.nodes.len()];
        for &(_, to) in &self.edges {
            deg[to] += 1;
        }
        (0..self.nodes.len()).filter(|&i| deg[i] == 0).collect()
    }
}

/// Builds the DDG for a nest.
///
/// Edge rules:
/// 1. any SIV/MIV node -> each MIV node sharing a loop iterator;
/// 2. within each group of SIV nodes on the same iterator, the node with the
///    lowest constant (ties: tensor name, then dimension position) -> the
///    rest of the group;
/// 3. when iterator `i`'s loop bound depends on iterator `j`, every node
///    using `i` -> every node using `j`.
pub fn build_ddg(nest: &LoopNest) -> DimensionDependenceGraph {
    let mut nodes: Vec<DdgNode> = Vec::new();
    for r in &nest.refs {
        for (pos, (dv, sub)) in r.dims.iter().enumerate() {
            let node = DdgNode {
                tensor: r.tensor.clone(),
                dim_pos: pos,
                dim_var: dv.clone(),
                subscript: sub.clone(),
            };
            if !nodes.contains(&node) {
                nodes.push(node);
            }
        }
    }
    nodes.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let share = |a: &DdgNode, b: &DdgNode| {
        a.subscript
            .terms
            .iter()
            .any(|(it, _)| b.subscript.uses(it))
    };

    for (ai, a) in nodes.iter().enumerate() {
        for (bi, b) in nodes.iter().enumerate() {
            if ai != bi
                && b.subscript.class() == SubscriptClass::Miv
                && a.subscript.class() != SubscriptClass::Ziv
                && share(a, b)
            {
                edges.insert((ai, bi));
            }
        }
    }

    let mut siv_groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if n.subscript.class() == SubscriptClass::Siv {
            siv_groups
                .entry(n.subscript.terms[0].0.as_str())
                .or_default()
                .push(i);
        }
    }
    for group in siv_groups.values() {
        let &src = group
            .iter()
            .min_by_key(|&&i| {
                (
                    nodes[i].subscript.constant,
                    &nodes[i].tensor,
                    nodes[i].dim_pos,
                )
            })
            .unwrap();
        for &other in group {
            if other != src {
                edges.insert((src, other));
            }
        }
    }

    for it in &nest.iterators {
        for dep in &it.bound_dependency {
            for (ai, a) in nodes.iter().enumerate() {
                if !a.subscript.uses(&it.name) {
                    continue;
                }
                for (bi, b) in nodes.iter().enumerate() {
                    if ai != bi && b.subscript.uses(dep) {
                        edges.insert((ai, bi));
                    }
                }
            }
        }
    }

    let topological = topo_order(nodes.len(), &edges);
    DimensionDependenceGraph {
        nodes,
        edges: edges.into_iter().collect(),
        topological,
    }
}

/// Kahn's algorithm with the ready set kept sorted, so the order is unique.
fn topo_order(n: usize, edges: &BTreeSet<(usize, usize)>) -> Option<Vec<usize>> {
    let mut deg = vec![0usize; n];
    for &(_, to) in edges {
        deg[to] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| deg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&i) = ready.iter().next() {
        ready.remove(&i);
        order.push(i);
        for &(from, to) in edges {
            if from == i {
                deg[to] -= 1;
                if deg[to] == 0 {
                    ready.insert(to);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// An independent dimension variable and the loop iterators it stands for.
///
/// SIV subscripts carry exactly one iterator; an MIV subscript over
/// otherwise-unused iterators is treated as their merged loop and carries
/// all of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndependentDim {
    pub dim_var: String,
    pub iterators: Vec<String>,
    /// Index of the witnessing zero-in-degree node in the DDG.
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformabilityReport {
    pub operator: String,
    pub r1: bool,
    pub r2: bool,
    pub r3: bool,
    pub r4: bool,
    /// Human-readable reasons for each failed rule.
    pub violations: Vec<String>,
    /// Independent dimensions in topological order; populated whenever the
    /// graph is acyclic, even if a later rule fails.
    pub independent_dims: Vec<IndependentDim>,
    pub ddg: DimensionDependenceGraph,
}

impl ConformabilityReport {
    pub fn conformable(&self) -> bool {
        self.r1 && self.r2 && self.r3 && self.r4
    }

    /// The iterator a dimension variable stands for, when unique.
    pub fn iterator_of(&self, dim_var: &str) -> Option<&str> {
        self.independent_dims
            .iter()
            .find(|d| d.dim_var == dim_var)
            .and_then(|d| (d.iterators.len() == 1).then(|| d.iterators[0].as_str()))
    }

    /// The independent dimension variable standing for an iterator, when the
    /// association is one-to-one.
    pub fn dim_var_of(&self, iterator: &str) -> Option<&str> {
        self.independent_dims
            .iter()
            .find(|d| d.iterators.len() == 1 && d.iterators[0] == iterator)
            .map(|d| d.dim_var.as_str())
    }
}

pub fn check_conformable(nest: &LoopNest) -> ConformabilityReport {
    let ddg = build_ddg(nest);
    let mut violations = Vec::new();

    // r1: the IR only expresses perfect single-statement nests.
    let r1 = true;

    let r2 = check_r2(nest, &mut violations);
    let (r3, independent_dims) = check_r3(nest, &ddg, &mut violations);
    let r4 = check_r4(nest, &ddg, &independent_dims, r3, &mut violations);

    ConformabilityReport {
        operator: nest.name.clone(),
        r1,
        r2,
        r3,
        r4,
        violations,
        independent_dims,
        ddg,
    }
}

fn check_r2(nest: &LoopNest, violations: &mut Vec<String>) -> bool {
    let mut ok = true;
    let mut tensors: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for r in &nest.refs {
        let e = tensors.entry(&r.tensor).or_insert((false, false));
        match r.direction {
            AccessDirection::Read => e.0 = true,
            AccessDirection::Write => e.1 = true,
            AccessDirection::ReadWrite => {
                e.0 = true;
                e.1 = true;
            }
        }
    }
    for (tensor, (read, write)) in tensors {
        if !(read && write) {
            continue;
        }
        if !matches!(nest.statement, StatementKind::Reduce(_)) {
            ok = false;
            violations.push(format!(
                "r2: tensor `{tensor}` is read and written without a reduction operator"
            ));
            continue;
        }
        let subs: BTreeSet<&Vec<(String, Subscript)>> = nest
            .refs
            .iter()
            .filter(|r| r.tensor == tensor)
            .map(|r| &r.dims)
            .collect();
        if subs.len() > 1 {
            ok = false;
            violations.push(format!(
                "r2: tensor `{tensor}` carries a flow dependence across iterations \
                 (read and written at different subscripts)"
            ));
        }
    }
    ok
}

fn check_r3(
    nest: &LoopNest,
    ddg: &DimensionDependenceGraph,
    violations: &mut Vec<String>,
) -> (bool, Vec<IndependentDim>) {
    let mut ok = true;
    if ddg.topological.is_none() {
        ok = false;
        violations.push(
            "r3: dimension dependence graph has no topological ordering \
             (mutually dependent dimensions)"
                .to_string(),
        );
    }

    let zero = ddg.zero_in_degree();
    // Constant subscripts pin their dimension to a single coordinate; they
    // take no directive and cannot make the independent set ambiguous.
    let pinned = |i: usize| ddg.nodes[i].subscript.class() == SubscriptClass::Ziv;
    let mut per_var: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &zero {
        if pinned(i) {
            continue;
        }
        per_var
            .entry(ddg.nodes[i].dim_var.as_str())
            .or_default()
            .push(i);
    }
    for (var, nodes) in &per_var {
        if nodes.len() > 1 {
            ok = false;
            violations.push(format!(
                "r3: dimension variable `{var}` has {} zero-in-degree references",
                nodes.len()
            ));
        }
    }

    // Dependent dimensions must have affine subscripts; the IR is affine by
    // construction, so this holds structurally.

    let order: Vec<usize> = match &ddg.topological {
        Some(t) => t.clone(),
        None => zero.clone(),
    };
    let mut independent = Vec::new();
    for i in order {
        if !zero.contains(&i) || pinned(i) {
            continue;
        }
        let node = &ddg.nodes[i];
        if independent
            .iter()
            .any(|d: &IndependentDim| d.dim_var == node.dim_var)
        {
            continue;
        }
        let iterators = node
            .subscript
            .terms
            .iter()
            .map(|(n, _)| n.clone())
            .collect();
        independent.push(IndependentDim {
            dim_var: node.dim_var.clone(),
            iterators,
            node: i,
        });
    }
    let _ = nest;
    (ok, independent)
}

fn check_r4(
    nest: &LoopNest,
    ddg: &DimensionDependenceGraph,
    independent: &[IndependentDim],
    r3: bool,
    violations: &mut Vec<String>,
) -> bool {
    if !r3 {
        // Without a valid independent set the rule has nothing to constrain.
        return independent.iter().all(|d| unit_subscript(nest, ddg, d, &mut Vec::new()));
    }
    let mut ok = true;
    for d in independent {
        if !unit_subscript(nest, ddg, d, violations) {
            ok = false;
        }
    }
    ok
}

/// An independent dimension's subscript must be a bare iterator (coefficient
/// one, no constant). An MIV subscript qualifies only when all its iterators
/// have unit coefficients, appear in no other subscript, and so merge into a
/// single loop.
fn unit_subscript(
    nest: &LoopNest,
    ddg: &DimensionDependenceGraph,
    dim: &IndependentDim,
    violations: &mut Vec<String>,
) -> bool {
    let sub = &ddg.nodes[dim.node].subscript;
    let fail = |violations: &mut Vec<String>, why: &str| {
        violations.push(format!(
            "r4: independent dimension `{}` has subscript that {}",
            dim.dim_var, why
        ));
        false
    };
    if sub.constant != 0 {
        return fail(violations, "carries a constant offset");
    }
    if sub.terms.is_empty() {
        return fail(violations, "uses no loop iterator");
    }
    if sub.terms.iter().any(|&(_, c)| c != 1) {
        return fail(violations, "has a non-unit coefficient");
    }
    if sub.terms.len() == 1 {
        return true;
    }
    // MIV over free iterators: none of them may appear elsewhere.
    for (it, _) in &sub.terms {
        let elsewhere = ddg.nodes.iter().enumerate().any(|(i, n)| {
            i != dim.node && n.subscript.uses(it)
        });
        if elsewhere {
            return fail(
                violations,
                "couples iterators that also index other dimensions",
            );
        }
    }
    let _ = nest;
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loopnest::{
        normalize, AccessDirection, RawLoop, ReduceOp, StatementKind, Subscript, TensorRef,
    };

    fn rref(tensor: &str, dims: Vec<(&str, Subscript)>, extents: Vec<u64>) -> TensorRef {
        TensorRef {
            tensor: tensor.into(),
            direction: AccessDirection::Read,
            dims: dims.into_iter().map(|(d, s)| (d.into(), s)).collect(),
            dim_extents: extents,
        }
    }

    fn wref(tensor: &str, dims: Vec<(&str, Subscript)>, extents: Vec<u64>) -> TensorRef {
        TensorRef {
            direction: AccessDirection::ReadWrite,
            ..rref(tensor, dims, extents)
        }
    }

    fn conv1d() -> crate::loopnest::LoopNest {
        let raw = [RawLoop::counted("i0", 6), RawLoop::counted("i1", 4)];
        let refs = [
            wref("O", vec![("d_O", Subscript::iter("i0"))], vec![6]),
            rref("W", vec![("d_W", Subscript::iter("i1"))], vec![4]),
            rref(
                "I",
                vec![("d_I", Subscript::new([("i0", 1i64), ("i1", 1i64)], 0))],
                vec![9],
            ),
        ];
        normalize("conv1d", &raw, &refs, StatementKind::Reduce(ReduceOp::Sum), 1).unwrap()
    }

    #[test]
    fn conv1d_ddg_and_independents() {
        let nest = conv1d();
        let report = check_conformable(&nest);
        assert!(report.conformable(), "{:?}", report.violations);
        let vars: Vec<&str> = report
            .independent_dims
            .iter()
            .map(|d| d.dim_var.as_str())
            .collect();
        assert_eq!(vars, vec!["d_O", "d_W"]);
        assert_eq!(report.iterator_of("d_O"), Some("i0"));
        assert_eq!(report.iterator_of("d_W"), Some("i1"));
        // d_I depends on both independents.
        let di = report
            .ddg
            .nodes
            .iter()
            .position(|n| n.dim_var == "d_I")
            .unwrap();
        assert_eq!(report.ddg.in_degree(di), 2);
    }

    #[test]
    fn stencil_group_edges_leave_one_source() {
        let raw = [RawLoop::counted("i0", 6)];
        let mk = |c: i64| rref("I", vec![("d_I", Subscript::new([("i0", 1i64)], c))], vec![8]);
        let refs = [
            TensorRef {
                direction: AccessDirection::Write,
                ..rref("O", vec![("d_O", Subscript::iter("i0"))], vec![6])
            },
            mk(0),
            mk(1),
            mk(2),
        ];
        let nest = normalize("stencil", &raw, &refs, StatementKind::Assign, 1).unwrap();
        let report = check_conformable(&nest);
        assert!(report.conformable(), "{:?}", report.violations);
        // The lowest-constant I reference seeds the i0 group; everything
        // else, including d_O, hangs off it.
        assert_eq!(report.independent_dims.len(), 1);
        assert_eq!(report.independent_dims[0].dim_var, "d_I");
        assert_eq!(report.iterator_of("d_I"), Some("i0"));
    }

    #[test]
    fn cyclic_miv_coupling_fails_r3() {
        let raw = [
            RawLoop::counted("i0", 4),
            RawLoop::counted("i1", 4),
            RawLoop::counted("i2", 4),
        ];
        let refs = [
            TensorRef {
                direction: AccessDirection::Write,
                ..rref(
                    "O",
                    vec![("d_O", Subscript::new([("i0", 1i64), ("i1", 1i64)], 0))],
                    vec![7],
                )
            },
            rref(
                "I",
                vec![("d_I", Subscript::new([("i1", 1i64), ("i2", 1i64)], 0))],
                vec![7],
            ),
            rref(
                "W",
                vec![("d_W", Subscript::new([("i2", 1i64), ("i0", 1i64)], 0))],
                vec![7],
            ),
        ];
        let nest = normalize("cyc", &raw, &refs, StatementKind::Reduce(ReduceOp::Sum), 1).unwrap();
        let report = check_conformable(&nest);
        assert!(!report.r3);
        assert!(report.ddg.topological.is_none());
        assert!(!report.conformable());
    }

    #[test]
    fn downsampling_subscript_fails_r4() {
        let raw = [RawLoop::counted("i0", 4)];
        let refs = [
            TensorRef {
                direction: AccessDirection::Write,
                ..rref("O", vec![("d_O", Subscript::iter("i0"))], vec![4])
            },
            rref("I", vec![("d_I", Subscript::new([("i0", 2i64)], 0))], vec![8]),
        ];
        let nest = normalize("down", &raw, &refs, StatementKind::Assign, 1).unwrap();
        let report = check_conformable(&nest);
        assert!(report.r3);
        assert!(!report.r4, "{:?}", report);
        assert!(!report.conformable());
    }

    #[test]
    fn flow_dependence_fails_r2() {
        // Recurrent cell update: H[c+1][i] written, H[c][i] read.
        let raw = [RawLoop::counted("c", 4), RawLoop::counted("i", 8)];
        let refs = [
            TensorRef {
                direction: AccessDirection::Write,
                ..rref(
                    "H",
                    vec![
                        ("d_Hc", Subscript::new([("c", 1i64)], 1)),
                        ("d_Hf", Subscript::iter("i")),
                    ],
                    vec![5, 8],
                )
            },
            rref(
                "H",
                vec![
                    ("d_Hc", Subscript::iter("c")),
                    ("d_Hf", Subscript::iter("i")),
                ],
                vec![5, 8],
            ),
            rref("W", vec![("d_Wf", Subscript::iter("i"))], vec![8]),
        ];
        let nest = normalize("cells", &raw, &refs, StatementKind::Assign, 1).unwrap();
        let report = check_conformable(&nest);
        assert!(report.r1);
        assert!(!report.r2);
        assert!(report.r3, "{:?}", report.violations);
        assert!(report.r4, "{:?}", report.violations);
    }

    #[test]
    fn merged_free_miv_passes_r4() {
        let raw = [RawLoop::counted("i0", 4), RawLoop::counted("i1", 4)];
        let refs = [
            TensorRef {
                direction: AccessDirection::ReadWrite,
                ..rref(
                    "O",
                    vec![("d_O", Subscript::new([("i0", 1i64), ("i1", 1i64)], 0))],
                    vec![7],
                )
            },
        ];
        let nest = normalize("merge", &raw, &refs, StatementKind::Reduce(ReduceOp::Sum), 1).unwrap();
        let report = check_conformable(&nest);
        assert!(report.r4, "{:?}", report.violations);
        assert_eq!(report.independent_dims[0].iterators.len(), 2);
    }

    #[test]
    fn triangular_bound_adds_dependence_edges() {
        // C[m,n] += A[m,k]*B[k,n] with k bounded by m.
        let raw = [
            RawLoop::counted("m", 8),
            RawLoop::counted("n", 8),
            RawLoop {
                name: "k".into(),
                lower: 0,
                upper_constant: 1,
                upper_terms: vec![("m".into(), 1)],
                step: 1,
            },
        ];
        let refs = [
            wref(
                "C",
                vec![("d_M", Subscript::iter("m")), ("d_N", Subscript::iter("n"))],
                vec![8, 8],
            ),
            rref(
                "A",
                vec![("d_M", Subscript::iter("m")), ("d_K", Subscript::iter("k"))],
                vec![8, 8],
            ),
            rref(
                "B",
                vec![("d_K", Subscript::iter("k")), ("d_N", Subscript::iter("n"))],
                vec![8, 8],
            ),
        ];
        let nest = normalize("tri", &raw, &refs, StatementKind::Reduce(ReduceOp::Sum), 1).unwrap();
        let report = check_conformable(&nest);
        assert!(report.conformable(), "{:?}", report.violations);
        // m's dimensions depend on k's, so only k and n remain independent.
        let vars: Vec<&str> = report
            .independent_dims
            .iter()
            .map(|d| d.dim_var.as_str())
            .collect();
        assert!(vars.contains(&"d_K") && vars.contains(&"d_N") && !vars.contains(&"d_M"));
    }
}
