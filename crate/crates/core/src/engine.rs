//! The hierarchical multi-split testing pipeline.
//!
//! For each of B random half-splits, variables are screened on the in-half
//! and every cluster with screened members receives a partial F-test
//! p-value on the out-half (clusters missing the screened set get 1). The
//! per-split values are multiplicity-adjusted by |Ŝ|/|C ∩ Ŝ| — or by
//! |Ŝ|/effective-cluster-size when the Shaffer improvement is on — then
//! aggregated across splits through clamped empirical γ-quantiles, freed of
//! γ by the (1 − log γ_min)·inf correction, and finally made monotone along
//! the hierarchy by taking the maximum over ancestors.
//!
//! The alternative bottom-up variant replaces the per-split adjustment by
//! 2|Ŝ| times the minimum raw p-value over descendants, which is already
//! monotone and needs no final max pass.

use crate::linalg::{self, LeastSquaresFit};
use crate::matrix::{sq_norm, Matrix};
use crate::screening;
use crate::seed;
use crate::tree::{intersect, ClusterTree, NodeId, TreeError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("need at least 4 observations, got {0}")]
    TooFewObservations(usize),
    #[error("need at least 2 variables, got {0}")]
    TooFewVariables(usize),
    #[error("design matrix has {x_rows} rows but response has length {y_len}")]
    DimensionMismatch { x_rows: usize, y_len: usize },
    #[error("tree covers {tree_vars} variables but the matrix has {x_cols} columns")]
    TreeMismatch { tree_vars: usize, x_cols: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Direction of the hierarchical adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TopDown,
    BottomUp,
}

/// Pipeline parameters. Defaults follow the standard choices: 50 splits,
/// γ grid from 0.05 to 1 in steps of 0.025, level 5%, Shaffer on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    #[serde(rename = "B")]
    pub b: usize,
    pub gamma_min: f64,
    pub gamma_step: f64,
    pub alpha: f64,
    pub shaffer: bool,
    pub mode: Mode,
    pub seed: u64,
    /// Re-center the out-half columns and response before testing instead
    /// of relying on the global centering done at load.
    pub center_per_split: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            b: 50,
            gamma_min: 0.05,
            gamma_step: 0.025,
            alpha: 0.05,
            shaffer: true,
            mode: Mode::TopDown,
            seed: 0,
            center_per_split: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.b < 1 {
            return Err(EngineError::BadConfig("B must be at least 1".into()));
        }
        if !(self.gamma_min > 0.0 && self.gamma_min < 1.0) {
            return Err(EngineError::BadConfig(format!(
                "gamma_min must lie in (0, 1), got {}",
                self.gamma_min
            )));
        }
        if !(self.gamma_step > 0.0) {
            return Err(EngineError::BadConfig(format!(
                "gamma_step must be positive, got {}",
                self.gamma_step
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(EngineError::BadConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// The closed γ grid {γ_min, γ_min + step, …, 1}.
    pub fn gamma_grid(&self) -> Vec<f64> {
        let mut grid = Vec::new();
        let mut i = 0usize;
        loop {
            let g = self.gamma_min + i as f64 * self.gamma_step;
            if g > 1.0 + 1e-9 {
                break;
            }
            grid.push(if (g - 1.0).abs() <= 1e-9 { 1.0 } else { g });
            i += 1;
        }
        grid
    }
}

/// One half-split; both index lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub n_in: Vec<usize>,
    pub n_out: Vec<usize>,
}

/// The B planned splits for a run.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    pub splits: Vec<Split>,
    pub seed: u64,
}

/// B uniformly random partitions into an in-half of ⌊n/2⌋ rows and an
/// out-half of the remaining ⌈n/2⌉; reproducible per split index.
pub fn make_splits(n: usize, b: usize, seed: u64) -> Result<SplitPlan, EngineError> {
    if n < 4 {
        return Err(EngineError::TooFewObservations(n));
    }
    let n_in_size = n / 2;
    let splits = (0..b)
        .map(|idx| {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(seed::derive(seed, idx as u64));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut n_in: Vec<usize> = order[..n_in_size].to_vec();
            let mut n_out: Vec<usize> = order[n_in_size..].to_vec();
            n_in.sort_unstable();
            n_out.sort_unstable();
            Split { n_in, n_out }
        })
        .collect();
    Ok(SplitPlan { splits, seed })
}

/// Per-split p-values for every tree node: `raw` from the partial F-test
/// (1 where the cluster misses the screened set) and `adjusted` after the
/// multiplicity correction (or the bottom-up variant's per-split value).
#[derive(Debug, Clone)]
pub struct SplitPValues {
    pub split_index: usize,
    pub s_hat: Vec<usize>,
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
}

/// A split with its screening outcome and the cached out-half regression
/// context shared by every tree evaluated against it.
pub struct ScreenedSplit {
    pub index: usize,
    pub split: Split,
    pub s_hat: Vec<usize>,
    /// Out-half rows restricted to the screened columns (in `s_hat` order).
    x_out: Matrix,
    y_out: Vec<f64>,
    y_out_sq: f64,
    full_fit: Option<LeastSquaresFit>,
    degenerate: bool,
    /// Raw p-values keyed by drop set (global indices); shared across trees.
    memo: Mutex<HashMap<Vec<usize>, f64>>,
}

impl ScreenedSplit {
    /// Raw partial F-test p-value for dropping `drop` (global indices,
    /// sorted, nonempty subset of `s_hat`) from the full screened model.
    fn raw_pvalue(&self, drop: &[usize]) -> f64 {
        if let Some(p) = self.memo.lock().unwrap().get(drop) {
            return *p;
        }
        let p = self.compute_raw_pvalue(drop);
        self.memo.lock().unwrap().insert(drop.to_vec(), p);
        p
    }

    fn compute_raw_pvalue(&self, drop: &[usize]) -> f64 {
        let Some(full_fit) = &self.full_fit else {
            return 1.0;
        };
        let keep_local: Vec<usize> = self
            .s_hat
            .iter()
            .enumerate()
            .filter(|(_, j)| !drop.contains(j))
            .map(|(local, _)| local)
            .collect();
        let sub = if keep_local.is_empty() {
            Ok(LeastSquaresFit {
                coefficients: vec![],
                rss: self.y_out_sq,
                df_resid: self.y_out.len(),
                rank: 0,
                kept_columns: vec![],
            })
        } else {
            linalg::ols_fit(&self.x_out.select_cols(&keep_local), &self.y_out)
        };
        match sub {
            Ok(sub_fit) => linalg::f_test_pvalue(
                sub_fit.rss,
                sub_fit.rank,
                full_fit.rss,
                full_fit.rank,
                self.y_out.len(),
                self.y_out_sq,
            ),
            Err(e) => {
                log::warn!("split {}: sub-model fit failed ({e}); p set to 1", self.index);
                1.0
            }
        }
    }
}

fn validate_inputs(
    tree: &ClusterTree,
    x: &Matrix,
    y: &[f64],
    config: &EngineConfig,
) -> Result<(), EngineError> {
    config.validate()?;
    if x.rows() != y.len() {
        return Err(EngineError::DimensionMismatch { x_rows: x.rows(), y_len: y.len() });
    }
    if x.rows() < 4 {
        return Err(EngineError::TooFewObservations(x.rows()));
    }
    if x.cols() < 2 {
        return Err(EngineError::TooFewVariables(x.cols()));
    }
    if tree.n_vars() != x.cols() {
        return Err(EngineError::TreeMismatch { tree_vars: tree.n_vars(), x_cols: x.cols() });
    }
    if config.shaffer && !tree.is_binary() {
        return Err(EngineError::BadConfig(
            "the Shaffer adjustment requires a binary hierarchy; \
             rerun with shaffer = false"
                .into(),
        ));
    }
    Ok(())
}

/// Draws the split plan and screens every split. The result depends only on
/// (x, y, config.b, config.seed), never on a tree, so several hierarchies
/// can be evaluated against the same screenings.
pub fn screen_splits(
    x: &Matrix,
    y: &[f64],
    config: &EngineConfig,
) -> Result<Vec<ScreenedSplit>, EngineError> {
    if x.rows() != y.len() {
        return Err(EngineError::DimensionMismatch { x_rows: x.rows(), y_len: y.len() });
    }
    let n = x.rows();
    let plan = make_splits(n, config.b, config.seed)?;
    let cap = n / 2 - 1;
    let screened: Vec<ScreenedSplit> = plan
        .splits
        .into_par_iter()
        .enumerate()
        .map(|(index, split)| {
            let x_in = x.select_rows(&split.n_in);
            let y_in: Vec<f64> = split.n_in.iter().map(|&i| y[i]).collect();
            let screen_seed = seed::derive2(config.seed, index as u64, 1);
            let s_hat = screening::screen(&x_in, &y_in, screen_seed, cap);

            let degenerate = s_hat.len() >= split.n_out.len();
            if degenerate {
                log::warn!(
                    "split {index}: screened set of size {} is not smaller than the \
                     out-half ({}); contributing p = 1 everywhere",
                    s_hat.len(),
                    split.n_out.len()
                );
            }
            let mut x_out = x.select(&split.n_out, &s_hat);
            let mut y_out: Vec<f64> = split.n_out.iter().map(|&i| y[i]).collect();
            if config.center_per_split {
                x_out.center_columns();
                crate::matrix::center(&mut y_out);
            }
            let y_out_sq = sq_norm(&y_out);
            let full_fit = if s_hat.is_empty() || degenerate {
                None
            } else {
                match linalg::ols_fit(&x_out, &y_out) {
                    Ok(fit) => Some(fit),
                    Err(e) => {
                        log::warn!("split {index}: full-model fit failed ({e})");
                        None
                    }
                }
            };
            ScreenedSplit {
                index,
                split,
                s_hat,
                x_out,
                y_out,
                y_out_sq,
                full_fit,
                degenerate,
                memo: Mutex::new(HashMap::new()),
            }
        })
        .collect();
    Ok(screened)
}

/// Raw and adjusted p-values of every node for one screened split.
pub fn split_pvalues(
    tree: &ClusterTree,
    x: &Matrix,
    y: &[f64],
    split: &Split,
    config: &EngineConfig,
    split_index: usize,
) -> Result<SplitPValues, EngineError> {
    validate_inputs(tree, x, y, config)?;
    let n = x.rows();
    let cap = n / 2 - 1;
    let x_in = x.select_rows(&split.n_in);
    let y_in: Vec<f64> = split.n_in.iter().map(|&i| y[i]).collect();
    let screen_seed = seed::derive2(config.seed, split_index as u64, 1);
    let s_hat = screening::screen(&x_in, &y_in, screen_seed, cap);
    let mut x_out = x.select(&split.n_out, &s_hat);
    let mut y_out: Vec<f64> = split.n_out.iter().map(|&i| y[i]).collect();
    if config.center_per_split {
        x_out.center_columns();
        crate::matrix::center(&mut y_out);
    }
    let y_out_sq = sq_norm(&y_out);
    let degenerate = s_hat.len() >= split.n_out.len();
    let full_fit = if s_hat.is_empty() || degenerate {
        None
    } else {
        linalg::ols_fit(&x_out, &y_out).ok()
    };
    let screened = ScreenedSplit {
        index: split_index,
        split: split.clone(),
        s_hat,
        x_out,
        y_out,
        y_out_sq,
        full_fit,
        degenerate,
        memo: Mutex::new(HashMap::new()),
    };
    Ok(pvalues_for_tree(tree, &screened, config))
}

/// Applies the per-split testing and multiplicity adjustment of one
/// screened split to every node of `tree`.
fn pvalues_for_tree(
    tree: &ClusterTree,
    split: &ScreenedSplit,
    config: &EngineConfig,
) -> SplitPValues {
    let n_nodes = tree.len();
    let s_hat = &split.s_hat;
    let mut raw = vec![1.0; n_nodes];
    let mut adjusted = vec![1.0; n_nodes];
    if s_hat.is_empty() || split.degenerate || split.full_fit.is_none() {
        return SplitPValues {
            split_index: split.index,
            s_hat: s_hat.clone(),
            raw,
            adjusted,
        };
    }
    for node in tree.nodes() {
        let inter = intersect(&node.variables, s_hat);
        if inter.is_empty() {
            continue;
        }
        let p = split.raw_pvalue(&inter);
        let denom = if config.shaffer {
            tree.effective_cluster_size(node.id, s_hat)
                .expect("binary tree checked at validation")
        } else {
            inter.len()
        };
        raw[node.id] = p;
        adjusted[node.id] = (p * s_hat.len() as f64 / denom as f64).min(1.0);
    }
    SplitPValues { split_index: split.index, s_hat: s_hat.clone(), raw, adjusted }
}

/// Bottom-up per-split values: 2|Ŝ| times the minimum raw p-value over
/// descendants-or-self, clamped to 1. A split with an empty screened set is
/// vacuous and contributes 1 everywhere.
fn bottom_up_values(tree: &ClusterTree, pv: &SplitPValues) -> Vec<f64> {
    let n_nodes = tree.len();
    if pv.s_hat.is_empty() {
        return vec![1.0; n_nodes];
    }
    let mut min_raw = pv.raw.clone();
    // children before parents: reverse of a parents-first order
    for &id in tree.top_down_order().iter().rev() {
        for &c in tree.nodes()[id].children.iter() {
            if min_raw[c] < min_raw[id] {
                min_raw[id] = min_raw[c];
            }
        }
    }
    let factor = 2.0 * pv.s_hat.len() as f64;
    min_raw.iter().map(|&m| (factor * m).min(1.0)).collect()
}

/// Clamped empirical γ-quantile of {values_b / γ}: the ⌈γB⌉-th smallest of
/// the rescaled values, capped at 1.
pub fn aggregate_q(values: &[f64], gamma: f64) -> f64 {
    assert!(!values.is_empty(), "need at least one per-split value");
    assert!(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
    let b = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // tolerance keeps ⌈γB⌉ exact when γB is an integer up to rounding
    let k = ((gamma * b as f64 - 1e-9).ceil() as usize).clamp(1, b);
    (sorted[k - 1] / gamma).min(1.0)
}

/// (1 − log γ_min) times the infimum of Q over the γ grid, clamped to 1.
pub fn gamma_eliminate(q_values: &[f64], gamma_min: f64) -> f64 {
    assert!(!q_values.is_empty(), "gamma grid must be nonempty");
    let inf = q_values.iter().copied().fold(f64::INFINITY, f64::min);
    ((1.0 - gamma_min.ln()) * inf).min(1.0)
}

/// Monotone hierarchical adjustment: each node becomes the maximum of the
/// input values over its ancestors and itself, in one parents-first pass.
pub fn hierarchical_adjust(values: &[f64], tree: &ClusterTree) -> Vec<f64> {
    assert_eq!(values.len(), tree.len(), "one value per node");
    let mut out = vec![0.0; values.len()];
    for id in tree.top_down_order() {
        out[id] = match tree.nodes()[id].parent {
            None => values[id],
            Some(p) => values[id].max(out[p]),
        };
    }
    out
}

/// Full pipeline output: per-(node, γ) aggregated values, γ-free per-node
/// values `p_c`, and their hierarchically adjusted versions `p_h`.
#[derive(Debug, Clone)]
pub struct HierTestResult {
    pub tree: ClusterTree,
    pub gamma_grid: Vec<f64>,
    /// q_grid[node][gamma index] = Q^C(γ).
    pub q_grid: Vec<Vec<f64>>,
    pub p_c: Vec<f64>,
    pub p_h: Vec<f64>,
    pub splits: Vec<SplitPValues>,
    pub config: EngineConfig,
}

/// Evaluates a hierarchy against precomputed screenings. Deterministic and
/// independent of thread scheduling: every split is a pure function of the
/// seed and the reduction is ordered by split index.
pub fn evaluate_with_screenings(
    tree: &ClusterTree,
    x: &Matrix,
    y: &[f64],
    config: &EngineConfig,
    screenings: &[ScreenedSplit],
) -> Result<HierTestResult, EngineError> {
    validate_inputs(tree, x, y, config)?;
    let mut splits: Vec<SplitPValues> = screenings
        .par_iter()
        .map(|s| {
            let mut pv = pvalues_for_tree(tree, s, config);
            if config.mode == Mode::BottomUp {
                pv.adjusted = bottom_up_values(tree, &pv);
            }
            pv
        })
        .collect();
    splits.sort_by_key(|pv| pv.split_index);

    let gamma_grid = config.gamma_grid();
    let n_nodes = tree.len();
    let mut q_grid = vec![vec![0.0; gamma_grid.len()]; n_nodes];
    let mut p_c = vec![0.0; n_nodes];
    let mut per_node = vec![0.0; config.b];
    for id in 0..n_nodes {
        for (b, pv) in splits.iter().enumerate() {
            per_node[b] = pv.adjusted[id];
        }
        for (g, &gamma) in gamma_grid.iter().enumerate() {
            q_grid[id][g] = aggregate_q(&per_node, gamma);
        }
        p_c[id] = gamma_eliminate(&q_grid[id], config.gamma_min);
    }
    // already monotone in bottom-up mode, where this pass is an identity
    let p_h = hierarchical_adjust(&p_c, tree);
    Ok(HierTestResult {
        tree: tree.clone(),
        gamma_grid,
        q_grid,
        p_c,
        p_h,
        splits,
        config: config.clone(),
    })
}

/// Runs the complete pipeline in the direction given by `config.mode`.
pub fn run(
    tree: &ClusterTree,
    x: &Matrix,
    y: &[f64],
    config: &EngineConfig,
) -> Result<HierTestResult, EngineError> {
    validate_inputs(tree, x, y, config)?;
    let screenings = screen_splits(x, y, config)?;
    evaluate_with_screenings(tree, x, y, config, &screenings)
}

/// The bottom-up variant regardless of `config.mode`.
pub fn bottom_up_run(
    tree: &ClusterTree,
    x: &Matrix,
    y: &[f64],
    config: &EngineConfig,
) -> Result<HierTestResult, EngineError> {
    let mut config = config.clone();
    config.mode = Mode::BottomUp;
    run(tree, x, y, &config)
}

/// A minimal detection: a rejected cluster none of whose descendants is
/// rejected, labeled true when a truth set is available and the cluster
/// contains an active variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimalDetection {
    pub node: NodeId,
    pub is_true: Option<bool>,
}

/// All rejected clusters (p_h ≤ α) together with the minimal detections.
pub fn significant_clusters(
    result: &HierTestResult,
    alpha: f64,
    s0: Option<&[usize]>,
) -> (Vec<NodeId>, Vec<MinimalDetection>) {
    let tree = &result.tree;
    let rejected_mask: Vec<bool> = result.p_h.iter().map(|&p| p <= alpha).collect();
    let mut subtree_rejected = rejected_mask.clone();
    for &id in tree.top_down_order().iter().rev() {
        for &c in tree.nodes()[id].children.iter() {
            if subtree_rejected[c] {
                subtree_rejected[id] = true;
            }
        }
    }
    let rejected: Vec<NodeId> =
        (0..tree.len()).filter(|&id| rejected_mask[id]).collect();
    let minimal = rejected
        .iter()
        .copied()
        .filter(|&id| {
            tree.nodes()[id]
                .children
                .iter()
                .all(|&c| !subtree_rejected[c])
        })
        .map(|node| MinimalDetection {
            node,
            is_true: s0.map(|s| tree.intersection_size(node, s) > 0),
        })
        .collect();
    (rejected, minimal)
}
