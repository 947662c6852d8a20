//! Isolation Forest novelty detector.
//!
//! Trees are grown on random subsamples drawn without replacement. A row's
//! anomaly score is `2^(-E[h]/c(psi))`, where `h` is the isolation depth
//! plus the `c(size)` correction at the reached leaf.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::ingest::{DayKey, DayLabel};
use crate::rng::child_rng;

const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Average path length of an unsuccessful search in a binary search tree of
/// `n` points; `c(0) = c(1) = 0`.
pub fn avg_path_length_c(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let n = n as f64;
    2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
}

/// `ceil(log2(n))` for `n >= 1`.
pub fn depth_limit(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        feature: usize,
        split: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        size: usize,
    },
}

impl TreeNode {
    /// Edges to the reached leaf plus `c(leaf size)`.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = self;
        let mut depth = 0.0;
        loop {
            match node {
                TreeNode::Internal {
                    feature,
                    split,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *split { left } else { right };
                    depth += 1.0;
                }
                TreeNode::Leaf { size } => return depth + avg_path_length_c(*size),
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    pub fn leaf_total(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => left.leaf_total() + right.leaf_total(),
            TreeNode::Leaf { size } => *size,
        }
    }

    /// Checks every split lies strictly inside the node subset's range of
    /// its feature.
    pub fn splits_within(&self, data: &[Vec<f64>], rows: &[usize]) -> bool {
        match self {
            TreeNode::Leaf { .. } => true,
            TreeNode::Internal {
                feature,
                split,
                left,
                right,
            } => {
                let (lo, hi) = range(data, rows, *feature);
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data[i][*feature] < *split);
                lo < *split && *split < hi && left.splits_within(data, &l) && right.splits_within(data, &r)
            }
        }
    }
}

fn range(data: &[Vec<f64>], rows: &[usize], f: usize) -> (f64, f64) {
    rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        let v = data[i][f];
        (lo.min(v), hi.max(v))
    })
}

fn grow(data: &[Vec<f64>], rows: &mut [usize], depth: usize, limit: usize, rng: &mut ChaCha8Rng) -> TreeNode {
    if depth >= limit || rows.len() <= 1 {
        return TreeNode::Leaf { size: rows.len() };
    }
    let n_cols = data[rows[0]].len();
    let candidates: Vec<(usize, f64, f64)> = (0..n_cols)
        .filter_map(|f| {
            let (lo, hi) = range(data, rows, f);
            (lo < hi).then_some((f, lo, hi))
        })
        .collect();
    if candidates.is_empty() {
        return TreeNode::Leaf { size: rows.len() };
    }
    let (feature, lo, hi) = candidates[rng.random_range(0..candidates.len())];
    let split = loop {
        let s = rng.random_range(lo..hi);
        if s > lo {
            break s;
        }
    };
    // Partition in place: left gets values below the split.
    let mut mid = 0;
    for i in 0..rows.len() {
        if data[rows[i]][feature] < split {
            rows.swap(i, mid);
            mid += 1;
        }
    }
    let (l, r) = rows.split_at_mut(mid);
    TreeNode::Internal {
        feature,
        split,
        left: Box::new(grow(data, l, depth + 1, limit, rng)),
        right: Box::new(grow(data, r, depth + 1, limit, rng)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub psi: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            psi: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestMeta {
    pub n_trees: usize,
    pub psi: usize,
    pub seed: u64,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub meta: ForestMeta,
    pub trees: Vec<TreeNode>,
}

impl ForestModel {
    /// Effective subsample size: `min(psi, N)` at fit time.
    pub fn subsample_size(&self) -> usize {
        self.trees.first().map_or(0, TreeNode::leaf_total)
    }

    fn normalizer(&self) -> f64 {
        avg_path_length_c(self.subsample_size())
    }

    pub fn expected_path_length(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.meta.columns.len() {
            return Err(Error::Dimension {
                expected: self.meta.columns.len(),
                got: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// Anomaly score in (0, 1]; higher is more anomalous.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let h = self.expected_path_length(x)?;
        Ok(score_from_path(h, self.normalizer()))
    }

    pub fn score_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.par_iter().map(|r| self.score(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<ForestModel> {
        let m: ForestModel = serde_json::from_str(text)?;
        if m.trees.is_empty() || m.trees.len() != m.meta.n_trees {
            return Err(Error::malformed("model", "tree count does not match meta.n_trees"));
        }
        Ok(m)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<ForestModel> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        ForestModel::from_json(&text)
    }
}

/// `2^(-h / c)`; a zero normalizer (subsample of one row) scores 1 only for
/// zero depth, matching the limit of the formula.
pub fn score_from_path(h: f64, c: f64) -> f64 {
    if c <= 0.0 {
        return if h <= 0.0 { 1.0 } else { 0.5 };
    }
    2f64.powf(-h / c)
}

/// Fits a forest on raw row vectors.
pub fn fit_rows(data: &[Vec<f64>], columns: Vec<String>, params: ForestParams) -> Result<ForestModel> {
    if params.n_trees == 0 {
        return Err(Error::Config("n_trees must be at least 1".into()));
    }
    if params.psi < 2 {
        return Err(Error::Config("psi must be at least 2".into()));
    }
    if data.len() < 2 {
        return Err(Error::Contract(format!("need at least 2 training rows, got {}", data.len())));
    }
    if let Some(bad) = data.iter().find(|r| r.len() != columns.len()) {
        return Err(Error::Dimension {
            expected: columns.len(),
            got: bad.len(),
        });
    }
    let n = data.len();
    let psi_eff = params.psi.min(n);
    let limit = depth_limit(psi_eff);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(params.seed, i as u64);
            let mut rows = sample(&mut rng, n, psi_eff).into_vec();
            grow(data, &mut rows, 0, limit, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        meta: ForestMeta {
            n_trees: params.n_trees,
            psi: params.psi,
            seed: params.seed,
            columns,
        },
        trees,
    })
}

/// Fits on the train-split rows of `train`, which must all be labeled
/// normal.
pub fn fit(train: &FeatureMatrix, params: ForestParams) -> Result<ForestModel> {
    let rows: Vec<Vec<f64>> = train.train_rows().map(|r| r.values.clone()).collect();
    if let Some(r) = train.train_rows().find(|r| r.label == DayLabel::Relapse) {
        return Err(Error::Contract(format!(
            "training row from relapse day {}/{}",
            r.subject_id, r.date
        )));
    }
    fit_rows(&rows, train.column_names.clone(), params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayPooling {
    #[default]
    Mean,
    Max,
}

/// Row scores for every row of `m`, in row order.
pub fn score_matrix(model: &ForestModel, m: &FeatureMatrix) -> Result<Vec<f64>> {
    if m.column_names != model.meta.columns {
        return Err(Error::Dimension {
            expected: model.meta.columns.len(),
            got: m.n_cols(),
        });
    }
    m.rows.par_iter().map(|r| model.score(&r.values)).collect()
}

/// Pools row scores into one score per day.
pub fn pool_days(m: &FeatureMatrix, row_scores: &[f64], pooling: DayPooling) -> BTreeMap<DayKey, f64> {
    let mut acc: BTreeMap<DayKey, (f64, usize)> = BTreeMap::new();
    for (r, &s) in m.rows.iter().zip(row_scores) {
        let e = acc.entry(r.day_key()).or_insert((
            match pooling {
                DayPooling::Mean => 0.0,
                DayPooling::Max => f64::NEG_INFINITY,
            },
            0,
        ));
        match pooling {
            DayPooling::Mean => e.0 += s,
            DayPooling::Max => e.0 = e.0.max(s),
        }
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (v, n))| {
            let v = match pooling {
                DayPooling::Mean => v / n as f64,
                DayPooling::Max => v,
            };
            (k, v)
        })
        .collect()
}

/// Day scores for all days having at least one row. Days absent from the
/// result are unscoreable.
pub fn score_days(model: &ForestModel, m: &FeatureMatrix, pooling: DayPooling) -> Result<BTreeMap<DayKey, f64>> {
    let scores = score_matrix(model, m)?;
    Ok(pool_days(m, &scores, pooling))
}
