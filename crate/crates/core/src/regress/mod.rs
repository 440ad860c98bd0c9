//! Vital-sign regression on feature tables: linear and random-forest models,
//! k-fold cross-validation and the raw temporal-FFT baseline.

mod baseline;
mod cv;
mod forest;
mod ols;
mod persist;

pub use baseline::temporal_fft_baseline;
pub use cv::{evaluate, fold_assignment, kfold_mae, EvalReport, FoldStrategy, ModelReport};
pub use forest::{fit_rf, Forest, ForestParams, Node, Tree};
pub use ols::{fit_ols, LinearModel};
pub use persist::{load_model, read_model, save_model, write_model};

use crate::error::{Error, Result};
use crate::features::FeatureTable;

/// Labelled design matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Optional grouping tag per row (e.g. record or subject).
    pub groups: Vec<usize>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let groups = vec![0; y.len()];
        Self::with_groups(feature_names, x, y, groups)
    }

    pub fn with_groups(
        feature_names: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        groups: Vec<usize>,
    ) -> Result<Self> {
        if x.len() != y.len() || groups.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows", y.len()),
                found: format!("{} feature rows, {} group tags", x.len(), groups.len()),
            });
        }
        let d = feature_names.len();
        for (i, row) in x.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: format!("{d} features"),
                    found: format!("{} in row {i}", row.len()),
                });
            }
            if row.iter().any(|v| !v.is_finite()) || !y[i].is_finite() {
                return Err(Error::Format(format!("row {i} has a non-finite value")));
            }
        }
        Ok(Dataset {
            feature_names,
            x,
            y,
            groups,
        })
    }

    /// Stacks feature tables; the group tag of each row is its table index.
    pub fn from_tables(tables: &[FeatureTable]) -> Result<Self> {
        let first = tables
            .first()
            .ok_or_else(|| Error::InvalidParameter("no feature tables given".into()))?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut groups = Vec::new();
        for (g, t) in tables.iter().enumerate() {
            if t.names != first.names {
                return Err(Error::DimensionMismatch {
                    expected: first.names.join(","),
                    found: t.names.join(","),
                });
            }
            for row in &t.rows {
                let label = row.label_bpm.ok_or_else(|| {
                    Error::Format(format!(
                        "table {g}: window at {} s has no label",
                        row.window_start_s
                    ))
                })?;
                x.push(row.features.clone());
                y.push(label);
                groups.push(g);
            }
        }
        Self::with_groups(first.names.clone(), x, y, groups)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            groups: rows.iter().map(|&i| self.groups[i]).collect(),
        }
    }

    /// Keeps only the named feature columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Dataset> {
        let cols: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown feature `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            feature_names: names.to_vec(),
            x: self
                .x
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect(),
            y: self.y.clone(),
            groups: self.groups.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Linear { ridge: f64 },
    Forest(ForestParams),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Linear { .. } => "linear",
            ModelSpec::Forest(_) => "random_forest",
        }
    }

    pub fn fit(&self, data: &Dataset, seed: u64) -> Result<Model> {
        Ok(match self {
            ModelSpec::Linear { ridge } => Model::Linear(fit_ols(data, *ridge)?),
            ModelSpec::Forest(p) => Model::Forest(fit_rf(data, p, seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Forest(Forest),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::Forest(f) => f.predict(x),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Linear(m) => m.weights.len(),
            Model::Forest(f) => f.n_features,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::Forest(_) => "random_forest",
        }
    }
}

/// A fitted model together with the feature columns it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub feature_names: Vec<String>,
    pub model: Model,
}

pub fn mean_abs_error(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / truth.len() as f64
}
