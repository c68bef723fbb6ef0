//! Cluster hierarchy over variable indices.
//!
//! A tree is a nested family of variable sets: the root holds all variables,
//! every internal node is the disjoint union of its children, and leaves are
//! singletons. Trees are immutable once built; all read paths are cheap.
//!
//! Variables are 0-based internally. The Newick interface (see [`newick`])
//! labels leaves with 1-based variable indices.

pub mod newick;

use crate::matrix::{Matrix, MatrixError};
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("node id {0} does not exist")]
    InvalidNode(NodeId),
    #[error("need at least two variables, got {0}")]
    TooFewVariables(usize),
    #[error("column {0} has zero variance; correlation undefined")]
    ConstantColumn(usize),
    #[error("operation requires a binary hierarchy")]
    NotBinary,
    #[error("invalid tree: {0}")]
    Invalid(String),
    #[error("newick parse error at byte {at}: {msg}")]
    Newick { at: usize, msg: String },
}

impl From<MatrixError> for TreeError {
    fn from(e: MatrixError) -> Self {
        match e {
            MatrixError::ConstantColumn(j) => TreeError::ConstantColumn(j),
            other => TreeError::Invalid(other.to_string()),
        }
    }
}

/// One cluster: a sorted set of variable indices plus tree links and the
/// dissimilarity at which it was created (0 for leaves).
#[derive(Debug, Clone)]
pub struct ClusterNode {
    pub id: NodeId,
    pub variables: Vec<usize>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub height: f64,
}

#[derive(Debug, Clone)]
pub struct ClusterTree {
    nodes: Vec<ClusterNode>,
    root: NodeId,
    n_vars: usize,
}

impl ClusterTree {
    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&ClusterNode, TreeError> {
        self.nodes.get(id).ok_or(TreeError::InvalidNode(id))
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parent(&self, id: NodeId) -> Result<Option<NodeId>, TreeError> {
        Ok(self.node(id)?.parent)
    }

    pub fn children(&self, id: NodeId) -> Result<&[NodeId], TreeError> {
        Ok(&self.node(id)?.children)
    }

    /// The other children of the parent (empty for the root).
    pub fn siblings(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        match self.node(id)?.parent {
            None => Ok(vec![]),
            Some(p) => Ok(self.nodes[p]
                .children
                .iter()
                .copied()
                .filter(|&c| c != id)
                .collect()),
        }
    }

    /// Strict ancestors ordered root first.
    pub fn ancestors(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        self.node(id)?;
        let mut up = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            up.push(p);
            cur = p;
        }
        up.reverse();
        Ok(up)
    }

    /// Parent, children, sibling set and root-first ancestor list in one call.
    #[allow(clippy::type_complexity)]
    pub fn navigate(
        &self,
        id: NodeId,
    ) -> Result<(Option<NodeId>, Vec<NodeId>, Vec<NodeId>, Vec<NodeId>), TreeError> {
        let node = self.node(id)?;
        Ok((
            node.parent,
            node.children.clone(),
            self.siblings(id)?,
            self.ancestors(id)?,
        ))
    }

    /// Every internal node has exactly two children.
    pub fn is_binary(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.children.is_empty() || n.children.len() == 2)
    }

    /// Node ids in an order where every parent precedes its children.
    pub fn top_down_order(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            order.push(id);
            stack.extend_from_slice(&self.nodes[id].children);
        }
        order
    }

    /// |variables(id) ∩ s|, with `s` sorted ascending.
    pub fn intersection_size(&self, id: NodeId, s: &[usize]) -> usize {
        intersect_count(&self.nodes[id].variables, s)
    }

    /// Effective cluster size of `c` restricted to the screened set `s_hat`
    /// (sorted): equals |C ∩ Ŝ| when some child of the sibling of C meets Ŝ,
    /// and |C ∩ Ŝ| + |si(C) ∩ Ŝ| otherwise. Only defined on binary trees.
    pub fn effective_cluster_size(&self, c: NodeId, s_hat: &[usize]) -> Result<usize, TreeError> {
        if !self.is_binary() {
            return Err(TreeError::NotBinary);
        }
        let node = self.node(c)?;
        let own = intersect_count(&node.variables, s_hat);
        let Some(parent) = node.parent else {
            return Ok(own);
        };
        let sib = self.nodes[parent]
            .children
            .iter()
            .copied()
            .find(|&x| x != c)
            .expect("binary internal node has two children");
        let sibling_grandchild_meets = self.nodes[sib]
            .children
            .iter()
            .any(|&e| intersect_count(&self.nodes[e].variables, s_hat) > 0);
        if sibling_grandchild_meets {
            Ok(own)
        } else {
            Ok(own + intersect_count(&self.nodes[sib].variables, s_hat))
        }
    }

    /// Structural invariants; used on every imported tree.
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.nodes.is_empty() {
            return Err(TreeError::Invalid("empty tree".into()));
        }
        let root = self.node(self.root)?;
        if root.parent.is_some() {
            return Err(TreeError::Invalid("root has a parent".into()));
        }
        let all: Vec<usize> = (0..self.n_vars).collect();
        if root.variables != all {
            return Err(TreeError::Invalid(
                "root must contain every variable exactly once".into(),
            ));
        }
        for node in &self.nodes {
            if node.variables.is_empty() {
                return Err(TreeError::Invalid(format!("node {} is empty", node.id)));
            }
            if node.variables.windows(2).any(|w| w[0] >= w[1]) {
                return Err(TreeError::Invalid(format!(
                    "node {} variables not sorted/unique",
                    node.id
                )));
            }
            if node.children.len() == 1 {
                return Err(TreeError::Invalid(format!(
                    "node {} has a single child",
                    node.id
                )));
            }
            if node.children.is_empty() {
                if node.variables.len() != 1 {
                    return Err(TreeError::Invalid(format!(
                        "leaf {} must be a singleton",
                        node.id
                    )));
                }
            } else {
                let mut merged: Vec<usize> = Vec::new();
                for &c in &node.children {
                    let child = self.node(c)?;
                    if child.parent != Some(node.id) {
                        return Err(TreeError::Invalid(format!(
                            "child {c} does not point back to {}",
                            node.id
                        )));
                    }
                    merged.extend_from_slice(&child.variables);
                }
                merged.sort_unstable();
                if merged.windows(2).any(|w| w[0] == w[1]) {
                    return Err(TreeError::Invalid(format!(
                        "children of node {} overlap",
                        node.id
                    )));
                }
                if merged != node.variables {
                    return Err(TreeError::Invalid(format!(
                        "node {} is not the disjoint union of its children",
                        node.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Degenerate hierarchy with only the root and the p singleton leaves;
    /// this is the tree of the single-variable baseline method.
    pub fn flat(p: usize) -> Result<Self, TreeError> {
        if p < 2 {
            return Err(TreeError::TooFewVariables(p));
        }
        let mut nodes: Vec<ClusterNode> = (0..p)
            .map(|j| ClusterNode {
                id: j,
                variables: vec![j],
                parent: Some(p),
                children: vec![],
                height: 0.0,
            })
            .collect();
        nodes.push(ClusterNode {
            id: p,
            variables: (0..p).collect(),
            parent: None,
            children: (0..p).collect(),
            height: 1.0,
        });
        Ok(Self { nodes, root: p, n_vars: p })
    }

    pub(crate) fn from_parts(
        nodes: Vec<ClusterNode>,
        root: NodeId,
        n_vars: usize,
    ) -> Result<Self, TreeError> {
        let tree = Self { nodes, root, n_vars };
        tree.validate()?;
        Ok(tree)
    }
}

/// Size of the intersection of two sorted index slices.
pub fn intersect_count(a: &[usize], b: &[usize]) -> usize {
    let mut i = 0;
    let mut j = 0;
    let mut n = 0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Sorted intersection of two sorted index slices.
pub fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0;
    let mut j = 0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Agglomerative clustering of columns with dissimilarity 1 − |cor| and
/// complete linkage. Deterministic: dissimilarity ties are broken towards
/// the pair whose two cluster-minimum variable indices are lexicographically
/// smallest.
pub fn build_correlation_tree(x: &Matrix) -> Result<ClusterTree, TreeError> {
    let p = x.cols();
    if p < 2 {
        return Err(TreeError::TooFewVariables(p));
    }
    let d0 = correlation_dissimilarity(x)?;

    let mut nodes: Vec<ClusterNode> = (0..p)
        .map(|j| ClusterNode {
            id: j,
            variables: vec![j],
            parent: None,
            children: vec![],
            height: 0.0,
        })
        .collect();

    // active[i] = (node id, smallest variable in the cluster)
    let mut active: Vec<(NodeId, usize)> = (0..p).map(|j| (j, j)).collect();
    let mut dist: Vec<Vec<f64>> = d0;

    while active.len() > 1 {
        let mut bi = 0;
        let mut bj = 1;
        let mut best = f64::INFINITY;
        let mut best_key = (usize::MAX, usize::MAX);
        for i in 0..active.len() {
            for j in (i + 1)..active.len() {
                let d = dist[i][j];
                let (ma, mb) = (active[i].1, active[j].1);
                let key = (ma.min(mb), ma.max(mb));
                if d < best || (d == best && key < best_key) {
                    best = d;
                    best_key = key;
                    bi = i;
                    bj = j;
                }
            }
        }

        let (ida, min_a) = active[bi];
        let (idb, min_b) = active[bj];
        let new_id = nodes.len();
        let mut variables: Vec<usize> = nodes[ida]
            .variables
            .iter()
            .chain(nodes[idb].variables.iter())
            .copied()
            .collect();
        variables.sort_unstable();
        // child order: cluster with the smaller minimum variable first
        let children = if min_a <= min_b { vec![ida, idb] } else { vec![idb, ida] };
        nodes[ida].parent = Some(new_id);
        nodes[idb].parent = Some(new_id);
        nodes.push(ClusterNode {
            id: new_id,
            variables,
            parent: None,
            children,
            height: best,
        });

        // complete linkage: d(new, c) = max(d(a, c), d(b, c))
        for k in 0..active.len() {
            if k != bi && k != bj {
                let m = dist[bi][k].max(dist[bj][k]);
                dist[bi][k] = m;
                dist[k][bi] = m;
            }
        }
        active[bi] = (new_id, min_a.min(min_b));
        active.swap_remove(bj);
        dist.swap_remove(bj);
        for row in &mut dist {
            row.swap_remove(bj);
        }
    }

    let root = active[0].0;
    ClusterTree::from_parts(nodes, root, p)
}

/// Pairwise 1 − |cor(X_j, X_k)|; errors on constant columns.
fn correlation_dissimilarity(x: &Matrix) -> Result<Vec<Vec<f64>>, TreeError> {
    let p = x.cols();
    let n = x.rows();
    let means = x.column_means();
    let mut centered: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut norms = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|i| x.get(i, j) - means[j]).collect();
        let norm = crate::matrix::sq_norm(&col).sqrt();
        if norm <= 0.0 {
            return Err(TreeError::ConstantColumn(j));
        }
        centered.push(col);
        norms.push(norm);
    }
    let mut d = vec![vec![0.0; p]; p];
    for j in 0..p {
        for k in (j + 1)..p {
            let cor = crate::matrix::dot(&centered[j], &centered[k]) / (norms[j] * norms[k]);
            let dis = 1.0 - cor.abs();
            d[j][k] = dis;
            d[k][j] = dis;
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(seed: u64, n: usize, p: usize) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * p)
            .map(|_| rand_distr::StandardNormal.sample(&mut rng))
            .collect();
        Matrix::new(n, p, data).unwrap()
    }

    /// Naive complete-linkage oracle: recompute every inter-cluster maximum
    /// pairwise dissimilarity at each step, same tie rule.
    fn naive_complete_linkage(d0: &[Vec<f64>]) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
        let p = d0.len();
        let mut clusters: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
        let mut merges = Vec::new();
        while clusters.len() > 1 {
            let mut best = f64::INFINITY;
            let mut best_key = (usize::MAX, usize::MAX);
            let mut pair = (0, 1);
            for i in 0..clusters.len() {
                for j in (i + 1)..clusters.len() {
                    let mut dmax = 0.0f64;
                    for &a in &clusters[i] {
                        for &b in &clusters[j] {
                            dmax = dmax.max(d0[a][b]);
                        }
                    }
                    let ma = *clusters[i].iter().min().unwrap();
                    let mb = *clusters[j].iter().min().unwrap();
                    let key = (ma.min(mb), ma.max(mb));
                    if dmax < best || (dmax == best && key < best_key) {
                        best = dmax;
                        best_key = key;
                        pair = (i, j);
                    }
                }
            }
            let b = clusters.remove(pair.1);
            let a = clusters.remove(pair.0);
            merges.push((a.clone(), b.clone(), best));
            let mut merged = a;
            merged.extend(b);
            merged.sort_unstable();
            clusters.push(merged);
        }
        merges
    }

    #[test]
    fn two_columns_make_one_merge() {
        let x = random_matrix(1, 30, 2);
        let tree = build_correlation_tree(&x).unwrap();
        assert_eq!(tree.len(), 3);
        let root = tree.node(tree.root()).unwrap();
        assert_eq!(root.variables, vec![0, 1]);
        let d = correlation_dissimilarity(&x).unwrap();
        assert!((root.height - d[0][1]).abs() < 1e-15);
    }

    #[test]
    fn duplicate_columns_merge_first_at_height_zero() {
        let base = random_matrix(2, 25, 3);
        let mut rows = Vec::new();
        for i in 0..25 {
            let r = base.row(i);
            rows.push(vec![r[0], r[1], r[2], r[1]]); // col 3 duplicates col 1
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let tree = build_correlation_tree(&x).unwrap();
        let first_internal = tree.node(4).unwrap();
        assert_eq!(first_internal.variables, vec![1, 3]);
        assert!(first_internal.height.abs() < 1e-12);
    }

    #[test]
    fn matches_naive_agglomeration_oracle() {
        for seed in [3u64, 4, 5] {
            let x = random_matrix(seed, 40, 6);
            let d0 = correlation_dissimilarity(&x).unwrap();
            let expected = naive_complete_linkage(&d0);
            let tree = build_correlation_tree(&x).unwrap();
            for (step, (ea, eb, eh)) in expected.iter().enumerate() {
                let node = tree.node(6 + step).unwrap();
                let mut union: Vec<usize> = ea.iter().chain(eb.iter()).copied().collect();
                union.sort_unstable();
                assert_eq!(node.variables, union, "merge {step} of seed {seed}");
                assert_eq!(node.height, *eh, "height at merge {step} of seed {seed}");
            }
        }
    }

    #[test]
    fn sign_flips_leave_tree_unchanged() {
        let x = random_matrix(7, 35, 8);
        let mut flipped_rows = Vec::new();
        for i in 0..35 {
            let r = x.row(i);
            flipped_rows.push(
                r.iter()
                    .enumerate()
                    .map(|(j, v)| if j % 2 == 0 { -v } else { *v })
                    .collect::<Vec<f64>>(),
            );
        }
        let xf = Matrix::from_rows(&flipped_rows).unwrap();
        let t1 = build_correlation_tree(&x).unwrap();
        let t2 = build_correlation_tree(&xf).unwrap();
        for (a, b) in t1.nodes().iter().zip(t2.nodes()) {
            assert_eq!(a.variables, b.variables);
            assert!((a.height - b.height).abs() < 1e-12);
        }
    }

    /// Fixed four-leaf binary tree: leaves {0},{1},{2},{3}, internals {0,1},
    /// {2,3}, root. Ids: 0..3 leaves, 4 = {0,1}, 5 = {2,3}, 6 = root.
    fn four_leaf_tree() -> ClusterTree {
        let mk = |id, vars: Vec<usize>, parent, children: Vec<usize>, h| ClusterNode {
            id,
            variables: vars,
            parent,
            children,
            height: h,
        };
        ClusterTree::from_parts(
            vec![
                mk(0, vec![0], Some(4), vec![], 0.0),
                mk(1, vec![1], Some(4), vec![], 0.0),
                mk(2, vec![2], Some(5), vec![], 0.0),
                mk(3, vec![3], Some(5), vec![], 0.0),
                mk(4, vec![0, 1], Some(6), vec![0, 1], 0.4),
                mk(5, vec![2, 3], Some(6), vec![2, 3], 0.5),
                mk(6, vec![0, 1, 2, 3], None, vec![4, 5], 0.9),
            ],
            6,
            4,
        )
        .unwrap()
    }

    #[test]
    fn effective_size_cases() {
        let tree = four_leaf_tree();
        // C = {0,1}, S = {0,2}: sibling {2,3} has child {2} meeting S
        assert_eq!(tree.effective_cluster_size(4, &[0, 2]).unwrap(), 1);
        // C = {0,1}, S = {0,1}: no child of the sibling meets S
        assert_eq!(tree.effective_cluster_size(4, &[0, 1]).unwrap(), 2);
        // C = {0} with leaf sibling {1}: sibling has no children
        assert_eq!(tree.effective_cluster_size(0, &[0, 1]).unwrap(), 2);
        // root has no sibling
        assert_eq!(tree.effective_cluster_size(6, &[0, 3]).unwrap(), 2);
    }

    #[test]
    fn effective_size_never_below_intersection() {
        let x = random_matrix(13, 30, 7);
        let tree = build_correlation_tree(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let s_hat: Vec<usize> = (0..7).filter(|_| rng.gen_bool(0.5)).collect();
            for node in tree.nodes() {
                let eff = tree.effective_cluster_size(node.id, &s_hat).unwrap();
                assert!(eff >= intersect_count(&node.variables, &s_hat));
            }
        }
    }

    #[test]
    fn shaffer_budget_on_maximal_null_families() {
        // Enumerate every (S0, S_hat) pair on small binary trees: the counted
        // effective sizes over the maximal null antichain never exceed |S_hat|.
        for seed in [21u64, 22] {
            let p = 8;
            let x = random_matrix(seed, 20, p);
            let tree = build_correlation_tree(&x).unwrap();
            for s0_mask in 0u32..(1 << p) {
                let s0: Vec<usize> = (0..p).filter(|j| s0_mask >> j & 1 == 1).collect();
                // maximal nodes whose variable set misses S0 entirely
                let nulls: Vec<NodeId> = tree
                    .nodes()
                    .iter()
                    .filter(|n| intersect_count(&n.variables, &s0) == 0)
                    .map(|n| n.id)
                    .collect();
                let maximal: Vec<NodeId> = nulls
                    .iter()
                    .copied()
                    .filter(|&c| {
                        tree.ancestors(c)
                            .unwrap()
                            .iter()
                            .all(|a| !nulls.contains(a))
                    })
                    .collect();
                for shat_mask in (0u32..(1 << p)).step_by(3) {
                    let s_hat: Vec<usize> =
                        (0..p).filter(|j| shat_mask >> j & 1 == 1).collect();
                    let total: usize = maximal
                        .iter()
                        .filter(|&&c| tree.intersection_size(c, &s_hat) > 0)
                        .map(|&c| tree.effective_cluster_size(c, &s_hat).unwrap())
                        .sum();
                    assert!(
                        total <= s_hat.len(),
                        "budget violated: {total} > {} (seed {seed})",
                        s_hat.len()
                    );
                }
            }
        }
    }

    #[test]
    fn navigation_relations() {
        let tree = four_leaf_tree();
        let (parent, _, sibs, anc) = tree.navigate(6).unwrap();
        assert!(parent.is_none());
        assert!(anc.is_empty());
        assert!(sibs.is_empty());

        let (parent, children, sibs, anc) = tree.navigate(4).unwrap();
        assert_eq!(parent, Some(6));
        assert_eq!(children, vec![0, 1]);
        assert_eq!(sibs, vec![5]);
        assert_eq!(anc, vec![6]);

        // every ancestor strictly contains the node
        for node in tree.nodes() {
            for &a in &tree.ancestors(node.id).unwrap() {
                let av = &tree.node(a).unwrap().variables;
                assert!(node.variables.iter().all(|v| av.contains(v)));
                assert!(av.len() > node.variables.len());
            }
        }
    }

    #[test]
    fn two_leaf_navigation() {
        let x = random_matrix(4, 10, 2);
        let tree = build_correlation_tree(&x).unwrap();
        let (parent, _, sibs, _) = tree.navigate(0).unwrap();
        assert_eq!(parent, Some(tree.root()));
        assert_eq!(sibs, vec![1]);
    }

    #[test]
    fn sibling_union_gives_parent() {
        let x = random_matrix(8, 30, 9);
        let tree = build_correlation_tree(&x).unwrap();
        for node in tree.nodes() {
            let Some(p) = node.parent else { continue };
            let sibs = tree.siblings(node.id).unwrap();
            assert_eq!(sibs.len(), 1);
            let mut union: Vec<usize> = node
                .variables
                .iter()
                .chain(tree.node(sibs[0]).unwrap().variables.iter())
                .copied()
                .collect();
            union.sort_unstable();
            assert_eq!(union, tree.node(p).unwrap().variables);
        }
    }

    #[test]
    fn flat_tree_shape_and_shaffer_refusal() {
        let tree = ClusterTree::flat(5).unwrap();
        assert_eq!(tree.len(), 6);
        assert_eq!(tree.children(tree.root()).unwrap().len(), 5);
        tree.validate().unwrap();
        assert!(matches!(
            tree.effective_cluster_size(0, &[0]),
            Err(TreeError::NotBinary)
        ));
    }

    #[test]
    fn heights_are_monotone_under_complete_linkage() {
        let x = random_matrix(15, 40, 12);
        let tree = build_correlation_tree(&x).unwrap();
        for node in tree.nodes() {
            for &c in &node.children {
                assert!(tree.node(c).unwrap().height <= node.height + 1e-15);
            }
        }
    }
}
