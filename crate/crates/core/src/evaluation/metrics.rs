use std::collections::BTreeMap;

use super::EvalError;

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / pred.len() as f64)
}

/// One-vs-rest counts for every label seen in either vector, in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationCounts {
    pub classes: Vec<String>,
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ClassificationCounts {
    pub fn tally<S: AsRef<str>>(pred: &[S], truth: &[S]) -> Result<Self, EvalError> {
        if pred.len() != truth.len() {
            return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
        }
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for l in pred.iter().chain(truth) {
            index.entry(l.as_ref()).or_insert(0);
        }
        for (i, v) in index.values_mut().enumerate() {
            *v = i;
        }
        let k = index.len();
        let (mut tp, mut fp, mut fn_) = (vec![0; k], vec![0; k], vec![0; k]);
        for (p, t) in pred.iter().zip(truth) {
            let (pi, ti) = (index[p.as_ref()], index[t.as_ref()]);
            if pi == ti {
                tp[pi] += 1;
            } else {
                fp[pi] += 1;
                fn_[ti] += 1;
            }
        }
        Ok(Self {
            classes: index.keys().map(|s| s.to_string()).collect(),
            tp,
            fp,
            fn_,
        })
    }

    pub fn support(&self, i: usize) -> u64 {
        self.tp[i] + self.fn_[i]
    }

    pub fn f1(&self, i: usize) -> f64 {
        f1_from_counts(self.tp[i], self.fp[i], self.fn_[i])
    }
}

/// `2PR / (P + R)`; an undefined precision or recall gives 0.
fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    if tp + fp == 0 || tp + fn_ == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    if p + r == 0.0 {
        return 0.0;
    }
    2.0 * (p * r) / (p + r)
}

pub fn f1_binary<S: AsRef<str>>(pred: &[S], truth: &[S], positive: &str) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, t) in pred.iter().zip(truth) {
        match (p.as_ref() == positive, t.as_ref() == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(f1_from_counts(tp, fp, fn_))
}

/// Support-weighted mean of one-vs-rest F1 over the true classes.
pub fn f1_weighted<S: AsRef<str>>(pred: &[S], truth: &[S]) -> Result<f64, EvalError> {
    let counts = ClassificationCounts::tally(pred, truth)?;
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = truth.len() as f64;
    Ok((0..counts.classes.len())
        .map(|i| counts.support(i) as f64 / n * counts.f1(i))
        .sum())
}
