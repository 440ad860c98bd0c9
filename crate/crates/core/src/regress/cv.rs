use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{mean_abs_error, Dataset, ModelSpec, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FoldStrategy {
    /// Rows shuffled once, then cut into near-equal folds.
    #[default]
    Shuffled,
    /// Whole groups are kept inside one fold.
    Grouped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub model: String,
    pub fold_mae: Vec<f64>,
    pub mean_mae: f64,
    /// Out-of-fold MAE per group tag, when more than one group is present.
    pub group_mae: Vec<(usize, f64)>,
    pub seed: u64,
    /// Out-of-fold prediction for every row.
    pub predictions: Vec<f64>,
}

/// Fold index of every row.
pub fn fold_assignment(data: &Dataset, k: usize, seed: u64, strategy: FoldStrategy) -> Result<Vec<usize>> {
    let n = data.len();
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::TooFewRows { rows: n, folds: k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; n];
    match strategy {
        FoldStrategy::Shuffled => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let (base, extra) = (n / k, n % k);
            let mut pos = 0;
            for f in 0..k {
                let size = base + usize::from(f < extra);
                for &i in &order[pos..pos + size] {
                    fold[i] = f;
                }
                pos += size;
            }
        }
        FoldStrategy::Grouped => {
            let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &g) in data.groups.iter().enumerate() {
                members.entry(g).or_default().push(i);
            }
            if members.len() < k {
                return Err(Error::TooFewRows {
                    rows: members.len(),
                    folds: k,
                });
            }
            let mut groups: Vec<Vec<usize>> = members.into_values().collect();
            groups.shuffle(&mut rng);
            let mut sizes = vec![0usize; k];
            for rows in groups {
                let f = (0..k).min_by_key(|&f| (sizes[f], f)).unwrap_or(0);
                sizes[f] += rows.len();
                for i in rows {
                    fold[i] = f;
                }
            }
        }
    }
    Ok(fold)
}

/// k-fold cross-validated mean absolute error. The model for fold `f` is
/// trained with seed `seed + f`.
pub fn kfold_mae(
    data: &Dataset,
    k: usize,
    spec: &ModelSpec,
    seed: u64,
    strategy: FoldStrategy,
) -> Result<ModelReport> {
    let fold = fold_assignment(data, k, seed, strategy)?;
    let mut predictions = vec![f64::NAN; data.len()];
    let mut fold_mae = Vec::with_capacity(k);
    for f in 0..k {
        let train: Vec<usize> = (0..data.len()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..data.len()).filter(|&i| fold[i] == f).collect();
        let model = spec.fit(&data.subset(&train), seed.wrapping_add(f as u64))?;
        let mut err = 0.0;
        for &i in &test {
            let p = model.predict(&data.x[i]);
            predictions[i] = p;
            err += (p - data.y[i]).abs();
        }
        fold_mae.push(err / test.len() as f64);
    }
    let mean_mae = fold_mae.iter().sum::<f64>() / k as f64;
    Ok(ModelReport {
        model: spec.name().to_string(),
        fold_mae,
        mean_mae,
        group_mae: group_errors(data, &predictions),
        seed,
        predictions,
    })
}

fn group_errors(data: &Dataset, predictions: &[f64]) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for ((&g, p), y) in data.groups.iter().zip(predictions).zip(&data.y) {
        let e = acc.entry(g).or_default();
        e.0 += (p - y).abs();
        e.1 += 1;
    }
    if acc.len() < 2 {
        return Vec::new();
    }
    acc.into_iter().map(|(g, (s, c))| (g, s / c as f64)).collect()
}

impl ModelReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "model,fold,mae_bpm")?;
        for (f, m) in self.fold_mae.iter().enumerate() {
            writeln!(w, "{},{f},{m:?}", self.model)?;
        }
        writeln!(w, "{},mean,{:?}", self.model, self.mean_mae)?;
        for (g, m) in &self.group_mae {
            writeln!(w, "{},group_{g},{m:?}", self.model)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {}", self.model);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "folds: {}", self.fold_mae.len());
        for (f, m) in self.fold_mae.iter().enumerate() {
            let _ = writeln!(s, "  fold {f:>2}: MAE {m:.4} bpm");
        }
        let _ = writeln!(s, "mean MAE: {:.4} bpm", self.mean_mae);
        for (g, m) in &self.group_mae {
            let _ = writeln!(s, "  group {g}: MAE {m:.4} bpm");
        }
        s
    }
}

/// Held-out evaluation of a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub n_rows: usize,
    pub mae: f64,
    pub predictions: Vec<f64>,
    /// MAE of the temporal-FFT baseline on the same rows, when available.
    pub baseline_mae: Option<f64>,
}

pub fn evaluate(model: &TrainedModel, data: &Dataset) -> Result<EvalReport> {
    if model.feature_names != data.feature_names {
        return Err(Error::DimensionMismatch {
            expected: model.feature_names.join(","),
            found: data.feature_names.join(","),
        });
    }
    if data.is_empty() {
        return Err(Error::TooFewRows { rows: 0, folds: 1 });
    }
    let predictions: Vec<f64> = data.x.iter().map(|r| model.model.predict(r)).collect();
    Ok(EvalReport {
        model: model.model.kind().to_string(),
        n_rows: data.len(),
        mae: mean_abs_error(&predictions, &data.y),
        predictions,
        baseline_mae: None,
    })
}

impl EvalReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "model,rows,mae_bpm,baseline_mae_bpm")?;
        writeln!(
            w,
            "{},{},{:?},{}",
            self.model,
            self.n_rows,
            self.mae,
            self.baseline_mae.map_or_else(String::new, |m| format!("{m:?}"))
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "model: {}\nrows: {}\nMAE: {:.4} bpm\n",
            self.model, self.n_rows, self.mae
        );
        if let Some(b) = self.baseline_mae {
            let _ = writeln!(s, "temporal FFT baseline MAE: {b:.4} bpm");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::ForestParams;

    fn linear_data(n: usize) -> Dataset {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, ((i * 13) % 7) as f64]).collect();
        let y = x.iter().map(|r| 0.5 * r[0] + r[1] - 3.0).collect();
        let groups = (0..n).map(|i| i % 5).collect();
        Dataset::with_groups(vec!["a".into(), "b".into()], x, y, groups).unwrap()
    }

    #[test]
    fn folds_partition_rows() {
        let data = linear_data(23);
        let fold = fold_assignment(&data, 10, 1, FoldStrategy::Shuffled).unwrap();
        let mut sizes = [0; 10];
        fold.iter().for_each(|&f| sizes[f] += 1);
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
        assert_eq!(sizes.iter().sum::<usize>(), 23);
    }

    #[test]
    fn grouped_folds_keep_groups_together() {
        let data = linear_data(40);
        let fold = fold_assignment(&data, 5, 2, FoldStrategy::Grouped).unwrap();
        for g in 0..5 {
            let fs: Vec<usize> = (0..40)
                .filter(|&i| data.groups[i] == g)
                .map(|i| fold[i])
                .collect();
            assert!(fs.iter().all(|&f| f == fs[0]));
        }
        assert!(fold_assignment(&data, 6, 2, FoldStrategy::Grouped).is_err());
    }

    #[test]
    fn exact_linear_cv() {
        let data = linear_data(50);
        let r = kfold_mae(
            &data,
            10,
            &ModelSpec::Linear { ridge: 0.0 },
            0,
            FoldStrategy::Shuffled,
        )
        .unwrap();
        assert!(r.mean_mae <= 1e-6);
        assert_eq!(r.fold_mae.len(), 10);
        assert!((r.mean_mae - r.fold_mae.iter().sum::<f64>() / 10.0).abs() < 1e-15);
        assert_eq!(r.group_mae.len(), 5);
    }

    #[test]
    fn too_many_folds() {
        let data = linear_data(5);
        assert!(matches!(
            kfold_mae(
                &data,
                10,
                &ModelSpec::Linear { ridge: 0.0 },
                0,
                FoldStrategy::Shuffled
            ),
            Err(Error::TooFewRows { rows: 5, folds: 10 })
        ));
    }

    #[test]
    fn repeatable() {
        let data = linear_data(40);
        let spec = ModelSpec::Forest(ForestParams {
            n_trees: 10,
            ..Default::default()
        });
        let a = kfold_mae(&data, 4, &spec, 9, FoldStrategy::Shuffled).unwrap();
        let b = kfold_mae(&data, 4, &spec, 9, FoldStrategy::Shuffled).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shuffled_labels_near_mean_predictor() {
        let mut data = linear_data(100);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        data.y.shuffle(&mut rng);
        let spec = ModelSpec::Forest(ForestParams {
            n_trees: 30,
            ..Default::default()
        });
        let r = kfold_mae(&data, 10, &spec, 0, FoldStrategy::Shuffled).unwrap();
        let m = data.y.iter().sum::<f64>() / 100.0;
        let mean_mae = data.y.iter().map(|y| (y - m).abs()).sum::<f64>() / 100.0;
        assert!(
            r.mean_mae > 0.8 * mean_mae && r.mean_mae < 1.5 * mean_mae,
            "{} vs {mean_mae}",
            r.mean_mae
        );
    }
}
