//! Gaussian-process regression with an isotropic squared-exponential kernel.
//!
//! Inputs and targets are standardized with training statistics (unless
//! disabled) and the prior mean is zero in standardized space. The kernel
//! matrix is factored once by Cholesky; if that fails, a diagonal jitter
//! starting at 1e-10 is grown tenfold up to 1e-4 before giving up.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::seeding;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `k(x, x') = s^2 exp(-|x - x'|^2 / (2 l^2))` plus `noise_variance` on the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            length_scale: 1.0,
            noise_variance: 1e-2,
        }
    }
}

impl KernelConfig {
    pub fn new(signal_variance: f64, length_scale: f64, noise_variance: f64) -> Self {
        Self {
            signal_variance,
            length_scale,
            noise_variance,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.signal_variance.is_finite()
            && self.signal_variance > 0.0
            && self.length_scale.is_finite()
            && self.length_scale > 0.0
            && self.noise_variance.is_finite()
            && self.noise_variance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(format!("{self:?}")))
        }
    }

    #[inline]
    pub fn covariance(&self, sq_dist: f64) -> f64 {
        self.signal_variance * (-0.5 * sq_dist / (self.length_scale * self.length_scale)).exp()
    }

    fn to_log(self) -> [f64; 3] {
        [
            self.signal_variance.ln(),
            self.length_scale.ln(),
            self.noise_variance.max(1e-300).ln(),
        ]
    }

    fn from_log(p: [f64; 3]) -> Self {
        Self::new(p[0].exp(), p[1].exp(), p[2].exp())
    }
}

/// Log-space search box for automatic hyperparameters.
const LOG_BOUNDS: [(f64, f64); 3] = [
    (-4.605_170_185_988_091, 4.605_170_185_988_091),    // s^2 in [1e-2, 1e2]
    (-4.605_170_185_988_091, 4.605_170_185_988_091),    // l in [1e-2, 1e2]
    (-18.420_680_743_952_367, std::f64::consts::LN_10), // noise in [1e-8, 10]
];

/// Multi-start coordinate search on the log marginal likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoTune {
    pub starts: usize,
    pub max_evals: usize,
    pub tol: f64,
    pub seed: u64,
    /// First start; the result never has a lower likelihood than this point.
    pub initial: KernelConfig,
}

impl Default for AutoTune {
    fn default() -> Self {
        Self {
            starts: 5,
            max_evals: 200,
            tol: 1e-6,
            seed: 0,
            initial: KernelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Fixed(KernelConfig),
    Auto(AutoTune),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprConfig {
    pub kernel: KernelChoice,
    pub standardize: bool,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            kernel: KernelChoice::Auto(AutoTune::default()),
            standardize: true,
        }
    }
}

impl GprConfig {
    pub fn fixed(kernel: KernelConfig) -> Self {
        Self {
            kernel: KernelChoice::Fixed(kernel),
            standardize: true,
        }
    }

    pub fn raw(kernel: KernelConfig) -> Self {
        Self {
            kernel: KernelChoice::Fixed(kernel),
            standardize: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GprModel {
    /// Standardized training inputs, row-major `n x d`.
    x: Vec<f64>,
    n: usize,
    d: usize,
    kernel: KernelConfig,
    jitter: f64,
    /// Lower Cholesky factor of `K + (noise + jitter) I`, row-major.
    chol: Vec<f64>,
    alpha: Vec<f64>,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    log_marginal_likelihood: f64,
}

struct Factor {
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
    lml: f64,
}

fn pairwise_sq_dists(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let s: f64 = (0..d).map(|k| (x[i * d + k] - x[j * d + k]).powi(2)).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}

fn factor(sq: &[f64], n: usize, y: &[f64], k: &KernelConfig) -> Option<Factor> {
    let base = DMatrix::from_fn(n, n, |i, j| {
        let v = k.covariance(sq[i * n + j]);
        if i == j {
            v + k.noise_variance
        } else {
            v
        }
    });
    let mut jitter = 0.0;
    loop {
        let mut m = base.clone();
        if jitter > 0.0 {
            for i in 0..n {
                m[(i, i)] += jitter;
            }
        }
        if let Some(ch) = m.cholesky() {
            let l = ch.l();
            let diag_ok = (0..n).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite());
            let alpha = ch.solve(&DVector::from_column_slice(y));
            if diag_ok && alpha.iter().all(|v| v.is_finite()) {
                let quad: f64 = alpha.iter().zip(y).map(|(a, b)| a * b).sum();
                let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
                let lml = -0.5 * quad - logdet - 0.5 * n as f64 * LN_2PI;
                let mut chol = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..=i {
                        chol[i * n + j] = l[(i, j)];
                    }
                }
                return Some(Factor {
                    chol,
                    alpha: alpha.as_slice().to_vec(),
                    jitter,
                    lml,
                });
            }
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return None;
        }
    }
}

fn column_stats(x: &DMatrix<f64>, standardize: bool) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = x.shape();
    if !standardize {
        return (vec![0.0; d], vec![1.0; d]);
    }
    (0..d)
        .map(|j| {
            let col = x.column(j);
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            (m, if sd > 1e-12 { sd } else { 1.0 })
        })
        .unzip()
}

fn target_stats(y: &[f64], standardize: bool) -> (f64, f64) {
    if !standardize {
        return (0.0, 1.0);
    }
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    (m, if sd > 1e-12 { sd } else { 1.0 })
}

/// Coordinate search over `(ln s^2, ln l, ln noise)`; returns the best
/// kernel found and its log marginal likelihood.
fn tune(sq: &[f64], n: usize, y: &[f64], auto: &AutoTune) -> Result<(KernelConfig, f64), ModelError> {
    let objective = |p: [f64; 3]| factor(sq, n, y, &KernelConfig::from_log(p)).map_or(f64::NEG_INFINITY, |f| f.lml);
    let mut rng = seeding::rng(auto.seed);
    let mut best: Option<([f64; 3], f64)> = None;
    for start in 0..auto.starts.max(1) {
        let mut p = if start == 0 {
            let mut p = auto.initial.to_log();
            for (v, (lo, hi)) in p.iter_mut().zip(LOG_BOUNDS) {
                *v = v.clamp(lo, hi);
            }
            p
        } else {
            let mut p = [0.0; 3];
            for (v, (lo, hi)) in p.iter_mut().zip(LOG_BOUNDS) {
                *v = rng.random_range(lo..hi);
            }
            p
        };
        let mut f = objective(p);
        let mut evals = 1;
        let mut step = 1.0;
        while evals < auto.max_evals && step > auto.tol {
            let mut improved = false;
            'coords: for i in 0..3 {
                for dir in [1.0, -1.0] {
                    let mut q = p;
                    q[i] = (p[i] + dir * step).clamp(LOG_BOUNDS[i].0, LOG_BOUNDS[i].1);
                    if q[i] == p[i] {
                        continue;
                    }
                    let fq = objective(q);
                    evals += 1;
                    if fq > f {
                        p = q;
                        f = fq;
                        improved = true;
                        break 'coords;
                    }
                    if evals >= auto.max_evals {
                        break 'coords;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best.is_none_or(|(_, bf)| f > bf) {
            best = Some((p, f));
        }
    }
    match best {
        Some((p, f)) if f.is_finite() => Ok((KernelConfig::from_log(p), f)),
        _ => Err(ModelError::NotPositiveDefinite { max_jitter: JITTER_MAX }),
    }
}

impl GprModel {
    pub fn fit(x: &DMatrix<f64>, y: &[f64], config: &GprConfig) -> Result<Self, ModelError> {
        let (n, d) = x.shape();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        if y.len() != n {
            return Err(ModelError::LengthMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let (x_mean, x_scale) = column_stats(x, config.standardize);
        let (y_mean, y_scale) = target_stats(y, config.standardize);
        let mut xs = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                xs[i * d + j] = (x[(i, j)] - x_mean[j]) / x_scale[j];
            }
        }
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
        let sq = pairwise_sq_dists(&xs, n, d);

        let kernel = match &config.kernel {
            KernelChoice::Fixed(k) => {
                k.validate()?;
                *k
            }
            KernelChoice::Auto(auto) => tune(&sq, n, &ys, auto)?.0,
        };
        let f = factor(&sq, n, &ys, &kernel).ok_or(ModelError::NotPositiveDefinite { max_jitter: JITTER_MAX })?;
        Ok(Self {
            x: xs,
            n,
            d,
            kernel,
            jitter: f.jitter,
            chol: f.chol,
            alpha: f.alpha,
            x_mean,
            x_scale,
            y_mean,
            y_scale,
            log_marginal_likelihood: f.lml,
        })
    }

    /// A model with no observations: constant mean `target_mean`, constant
    /// standard deviation `sqrt(s^2) * target_scale`.
    pub fn prior(dim: usize, kernel: KernelConfig, target_mean: f64, target_scale: f64) -> Self {
        Self {
            x: Vec::new(),
            n: 0,
            d: dim,
            kernel,
            jitter: 0.0,
            chol: Vec::new(),
            alpha: Vec::new(),
            x_mean: vec![0.0; dim],
            x_scale: vec![1.0; dim],
            y_mean: target_mean,
            y_scale: target_scale,
            log_marginal_likelihood: 0.0,
        }
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    /// Diagonal jitter that was needed for the factorization (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n_train(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    /// In standardized target units.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.chol)
    }

    /// Posterior mean and standard deviation of the latent function at one
    /// query point, in target units. `x.len()` must equal `n_features()`.
    pub fn predict_point(&self, x: &[f64]) -> (f64, f64) {
        debug_assert_eq!(x.len(), self.d);
        let n = self.n;
        let d = self.d;
        let z: Vec<f64> = x
            .iter()
            .zip(self.x_mean.iter().zip(&self.x_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                let row = &self.x[i * d..(i + 1) * d];
                let s: f64 = row.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                self.kernel.covariance(s)
            })
            .collect();
        let mean: f64 = v.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        // forward substitution L w = k*
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let acc: f64 = row.iter().zip(&v[..i]).map(|(l, w)| l * w).sum();
            v[i] = (v[i] - acc) / self.chol[i * n + i];
        }
        let reduction: f64 = v.iter().map(|w| w * w).sum();
        let var = (self.kernel.signal_variance - reduction).max(0.0);
        (mean * self.y_scale + self.y_mean, var.sqrt() * self.y_scale)
    }

    pub fn predict(&self, xq: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        if xq.ncols() != self.d {
            return Err(ModelError::ShapeMismatch {
                expected: self.d,
                found: xq.ncols(),
            });
        }
        let mut row = vec![0.0; self.d];
        Ok((0..xq.nrows())
            .map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = xq[(i, j)];
                }
                self.predict_point(&row)
            })
            .unzip())
    }
}

pub fn gpr_fit(x: &DMatrix<f64>, y: &[f64], config: &GprConfig) -> Result<GprModel, ModelError> {
    GprModel::fit(x, y, config)
}

pub fn gpr_predict(model: &GprModel, xq: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    model.predict(xq)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense Gauss-Jordan solve of `a z = b`, independent of the Cholesky path.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
        (0..n).map(|i| b[i] / a[i][i]).collect()
    }

    fn rbf(s2: f64, l: f64, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        s2 * (-d2 / (2.0 * l * l)).exp()
    }

    #[test]
    fn single_point_interpolates() {
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        let m = gpr_fit(&x, &[5.0], &GprConfig::fixed(KernelConfig::new(1.0, 1.0, 0.0))).unwrap();
        let (mu, sd) = m.predict_point(&[0.0]);
        assert!((mu - 5.0).abs() < 1e-8);
        assert!(sd.abs() < 1e-8);
    }

    #[test]
    fn duplicate_rows_get_jitter_not_nan() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        match gpr_fit(&x, &[1.0, 1.0, 2.0], &GprConfig::raw(KernelConfig::new(1.0, 1.0, 0.0))) {
            Ok(m) => {
                assert!(m.jitter() > 0.0);
                let (mu, sd) = m.predict_point(&[0.5]);
                assert!(mu.is_finite() && sd.is_finite());
            }
            Err(e) => assert!(matches!(e, ModelError::NotPositiveDefinite { .. })),
        }
    }

    #[test]
    fn two_point_midpoint_matches_hand_solve() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = [1.0, -1.0];
        let m = gpr_fit(&x, &y, &GprConfig::raw(KernelConfig::new(1.0, 1.0, 0.0))).unwrap();
        let k01 = (-0.5f64).exp();
        let det = 1.0 - k01 * k01;
        let inv = [[1.0 / det, -k01 / det], [-k01 / det, 1.0 / det]];
        let ks = (-0.125f64).exp();
        let w = [ks * inv[0][0] + ks * inv[1][0], ks * inv[0][1] + ks * inv[1][1]];
        let mean = w[0] * y[0] + w[1] * y[1];
        let var = 1.0 - (w[0] * ks + w[1] * ks);
        let (mu, sd) = m.predict_point(&[0.5]);
        assert!((mu - mean).abs() < 1e-12);
        assert!((sd * sd - var).abs() < 1e-12);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.3, 0.7, 1.0]);
        let y = [3.0, 5.0, 4.0, 8.0];
        let k = KernelConfig::new(2.0, 0.5, 1e-6);
        let m = gpr_fit(&x, &y, &GprConfig::fixed(k)).unwrap();
        let ymean = 5.0;
        let yscale = (y.iter().map(|v| (v - ymean) * (v - ymean)).sum::<f64>() / 4.0).sqrt();
        let (mu, sd) = m.predict_point(&[1e3]);
        assert!((mu - ymean).abs() < 1e-3);
        assert!((sd - 2.0f64.sqrt() * yscale).abs() < 1e-3);
    }

    #[test]
    fn noise_free_model_reproduces_targets() {
        let x = DMatrix::from_row_slice(5, 2, &[0.0, 0.1, 0.4, 0.9, 0.5, 0.2, 1.0, 1.0, 0.3, 0.6]);
        let y = [1.0, -2.0, 0.5, 3.0, 0.0];
        let m = gpr_fit(&x, &y, &GprConfig::fixed(KernelConfig::new(1.0, 0.7, 0.0))).unwrap();
        let (mu, _) = m.predict(&x).unwrap();
        for (a, b) in mu.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn five_points_match_dense_solve() {
        let pts = [[0.1, 0.2], [0.5, 0.9], [0.8, 0.1], [0.3, 0.4], [1.0, 0.7]];
        let y = [0.3, -1.2, 2.0, 0.7, 1.1];
        let (s2, l, sn) = (1.5, 0.6, 0.05);
        let x = DMatrix::from_fn(5, 2, |i, j| pts[i][j]);
        let m = gpr_fit(&x, &y, &GprConfig::raw(KernelConfig::new(s2, l, sn))).unwrap();
        let a: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..5)
                    .map(|j| rbf(s2, l, &pts[i], &pts[j]) + if i == j { sn } else { 0.0 })
                    .collect()
            })
            .collect();
        let alpha = dense_solve(a.clone(), y.to_vec());
        for q in [[0.0, 0.0], [0.45, 0.5], [0.9, 0.95]] {
            let ks: Vec<f64> = pts.iter().map(|p| rbf(s2, l, p, &q)).collect();
            let mean: f64 = ks.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            let z = dense_solve(a.clone(), ks.clone());
            let var = s2 - ks.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
            let (mu, sd) = m.predict_point(&q);
            assert!((mu - mean).abs() < 1e-8);
            assert!((sd * sd - var).abs() < 1e-8);
        }
    }

    #[test]
    fn auto_never_worse_than_start() {
        let x = DMatrix::from_fn(12, 1, |i, _| i as f64 / 11.0);
        let y: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let auto = AutoTune::default();
        let fixed = gpr_fit(&x, &y, &GprConfig::fixed(auto.initial)).unwrap();
        let tuned = gpr_fit(
            &x,
            &y,
            &GprConfig {
                kernel: KernelChoice::Auto(auto),
                standardize: true,
            },
        )
        .unwrap();
        assert!(tuned.log_marginal_likelihood() >= fixed.log_marginal_likelihood());
    }

    #[test]
    fn column_mismatch_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let m = gpr_fit(&x, &[0.0, 1.0], &GprConfig::default()).unwrap();
        assert!(matches!(
            m.predict(&DMatrix::zeros(1, 2)),
            Err(ModelError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            gpr_fit(&DMatrix::zeros(0, 1), &[], &GprConfig::default()),
            Err(ModelError::Empty)
        ));
    }

    #[test]
    fn cholesky_factor_is_lower_with_positive_diagonal() {
        let x = DMatrix::from_fn(6, 2, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let y: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let m = gpr_fit(&x, &y, &GprConfig::default()).unwrap();
        let l = m.cholesky_factor();
        for i in 0..6 {
            assert!(l[(i, i)] > 0.0);
            for j in i + 1..6 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn prior_model_is_flat() {
        let m = GprModel::prior(3, KernelConfig::new(4.0, 1.0, 0.0), 2.0, 1.0);
        assert_eq!(m.predict_point(&[0.1, 0.2, 0.3]), (2.0, 2.0));
        assert_eq!(m.predict_point(&[9.0, 0.0, -1.0]), (2.0, 2.0));
    }
}
