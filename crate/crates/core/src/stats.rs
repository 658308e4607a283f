//! Small descriptive statistics shared by the CV harness, BO summaries and
//! the report command.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation percentile, `q` in [0, 100].
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Welch's unequal-variance t-test of `a` against `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t_statistic: f64,
    pub dof: f64,
    /// One-sided p-value for mean(a) > mean(b).
    pub p_greater: f64,
    pub p_two_sided: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> WelchTest {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (std_dev(a).powi(2) / na, std_dev(b).powi(2) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let t = if diff > 0.0 {
            f64::INFINITY
        } else if diff < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        let p = if diff > 0.0 {
            0.0
        } else if diff < 0.0 {
            1.0
        } else {
            0.5
        };
        return WelchTest {
            t_statistic: t,
            dof: na + nb - 2.0,
            p_greater: p,
            p_two_sided: if diff == 0.0 { 1.0 } else { 0.0 },
        };
    }
    let t = diff / se2.sqrt();
    let dof = se2 * se2 / (va * va / (na - 1.0).max(1.0) + vb * vb / (nb - 1.0).max(1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
    let p_greater = 1.0 - dist.cdf(t);
    WelchTest {
        t_statistic: t,
        dof,
        p_greater,
        p_two_sided: 2.0 * (1.0 - dist.cdf(t.abs())),
    }
}
