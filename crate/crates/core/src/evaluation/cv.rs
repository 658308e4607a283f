use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{f1_binary, f1_weighted, mae, EvalError};
use crate::featurize::Targets;
use crate::models::{ForestConfig, GprConfig, GprModel, RandomForest};
use crate::{seeding, stats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    RandomForest(ForestConfig),
    Gpr(GprConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    F1Weighted,
    F1Binary(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvOptions {
    /// Deal rows into folds class by class (classification only).
    pub stratified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Repeat-major: `scores[r * folds + f]`.
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl CvResult {
    pub fn repeat_scores(&self, r: usize) -> &[f64] {
        &self.scores[r * self.folds..(r + 1) * self.folds]
    }
}

/// Test folds for one repeat. The first `n % k` folds hold one extra row.
pub fn fold_partition(n: usize, k: usize, seed: u64, labels: Option<&[String]>) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeding::rng(seed));
    if let Some(labels) = labels {
        let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &i in &order {
            by_class.entry(labels[i].as_str()).or_default().push(i);
        }
        order = by_class.into_values().flatten().collect();
        let mut folds = vec![Vec::new(); k];
        for (j, &i) in order.iter().enumerate() {
            folds[j % k].push(i);
        }
        return folds;
    }
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    folds
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn score(metric: &Metric, pred: &Targets, truth: &Targets) -> Result<f64, EvalError> {
    match (metric, pred, truth) {
        (Metric::Mae, Targets::Values(p), Targets::Values(t)) => mae(p, t),
        (Metric::F1Weighted, Targets::Labels(p), Targets::Labels(t)) => f1_weighted(p, t),
        (Metric::F1Binary(pos), Targets::Labels(p), Targets::Labels(t)) => f1_binary(p, t, pos),
        _ => Err(EvalError::Incompatible(format!(
            "metric {metric:?} does not fit the target type"
        ))),
    }
}

fn fit_predict(
    spec: &ModelSpec,
    x_train: &DMatrix<f64>,
    y_train: &Targets,
    x_test: &DMatrix<f64>,
    seed: u64,
) -> Result<Targets, EvalError> {
    match spec {
        ModelSpec::RandomForest(cfg) => Ok(RandomForest::fit(x_train, y_train, cfg, seed)?.predict(x_test)?),
        ModelSpec::Gpr(cfg) => {
            let Targets::Values(y) = y_train else {
                return Err(EvalError::Incompatible("GPR needs numeric targets".into()));
            };
            let mut cfg = *cfg;
            if let crate::models::KernelChoice::Auto(tune) = &mut cfg.kernel {
                tune.seed = seed;
            }
            let (mean, _) = GprModel::fit(x_train, y, &cfg)?.predict(x_test)?;
            Ok(Targets::Values(mean))
        }
    }
}

/// Repeated k-fold CV. Repeat `r` shuffles with seed `seed + r`; every fold
/// is fitted with its own derived seed, so scores do not depend on the
/// thread schedule.
#[allow(clippy::too_many_arguments)]
pub fn kfold_cv(
    x: &DMatrix<f64>,
    targets: &Targets,
    model: &ModelSpec,
    k: usize,
    repeats: usize,
    metric: &Metric,
    seed: u64,
    options: CvOptions,
) -> Result<CvResult, EvalError> {
    let n = x.nrows();
    if targets.len() != n {
        return Err(EvalError::LengthMismatch(n, targets.len()));
    }
    if k < 2 {
        return Err(EvalError::InvalidFolds(k));
    }
    if repeats == 0 {
        return Err(EvalError::InvalidRepeats);
    }
    if n < k {
        return Err(EvalError::TooFewRows { rows: n, folds: k });
    }
    let labels = match (options.stratified, targets) {
        (true, Targets::Labels(l)) => Some(l.as_slice()),
        _ => None,
    };
    let jobs: Vec<(usize, usize, Vec<usize>, Vec<usize>)> = (0..repeats)
        .flat_map(|r| {
            let folds = fold_partition(n, k, seed.wrapping_add(r as u64), labels);
            (0..k)
                .map(|f| {
                    let train: Vec<usize> = folds
                        .iter()
                        .enumerate()
                        .filter(|(g, _)| *g != f)
                        .flat_map(|(_, rows)| rows.iter().copied())
                        .collect();
                    (r, f, train, folds[f].clone())
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let scores = jobs
        .par_iter()
        .map(|(r, f, train, test)| {
            let fit_seed = seeding::derive(seed.wrapping_add(*r as u64), *f as u64);
            let pred = fit_predict(
                model,
                &select_rows(x, train),
                &targets.select(train),
                &select_rows(x, test),
                fit_seed,
            )?;
            score(metric, &pred, &targets.select(test))
        })
        .collect::<Result<Vec<f64>, EvalError>>()?;
    Ok(CvResult {
        folds: k,
        repeats,
        seed,
        mean: stats::mean(&scores),
        std: stats::std_dev(&scores),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes_balanced() {
        let folds = fold_partition(25, 10, 1, None);
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 2, 2, 2, 3, 3, 3, 3, 3]);
        let mut all: Vec<usize> = folds.into_iter().flatten().collect();
        all.sort();
        assert_eq!(all, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_folds_partition_and_balance() {
        let labels: Vec<String> = (0..23)
            .map(|i| if i % 3 == 0 { "a" } else { "b" }.to_string())
            .collect();
        let folds = fold_partition(23, 5, 4, Some(&labels));
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = folds.into_iter().flatten().collect();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    fn line_data(n: usize) -> (DMatrix<f64>, Targets) {
        let x = DMatrix::from_fn(n, 2, |i, j| (i as f64 / n as f64) * if j == 0 { 1.0 } else { 0.5 });
        let y = (0..n).map(|i| x[(i, 0)]).collect();
        (x, Targets::Values(y))
    }

    #[test]
    fn rf_cv_is_deterministic_and_accurate() {
        let (x, y) = line_data(60);
        let spec = ModelSpec::RandomForest(ForestConfig {
            n_trees: 20,
            ..Default::default()
        });
        let a = kfold_cv(&x, &y, &spec, 5, 2, &Metric::Mae, 9, CvOptions::default()).unwrap();
        let b = kfold_cv(&x, &y, &spec, 5, 2, &Metric::Mae, 9, CvOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scores.len(), 10);
        assert!(a.mean < 1.0 / 10.0 / 3.0);
        assert_eq!(a.mean, stats::mean(&a.scores));
    }

    #[test]
    fn argument_errors() {
        let (x, y) = line_data(4);
        let spec = ModelSpec::RandomForest(ForestConfig::default());
        let o = CvOptions::default();
        assert_eq!(
            kfold_cv(&x, &y, &spec, 1, 1, &Metric::Mae, 0, o),
            Err(EvalError::InvalidFolds(1))
        );
        assert_eq!(
            kfold_cv(&x, &y, &spec, 5, 1, &Metric::Mae, 0, o),
            Err(EvalError::TooFewRows { rows: 4, folds: 5 })
        );
        assert!(matches!(
            kfold_cv(&x, &y, &spec, 2, 1, &Metric::F1Weighted, 0, o),
            Err(EvalError::Incompatible(_))
        ));
    }

    #[test]
    fn gpr_cv_runs() {
        let (x, y) = line_data(20);
        let spec = ModelSpec::Gpr(GprConfig::default());
        let r = kfold_cv(&x, &y, &spec, 4, 1, &Metric::Mae, 3, CvOptions::default()).unwrap();
        assert!(r.mean < 0.05, "{}", r.mean);
    }
}
