//! Expected improvement and its maximization over a bounded simplex.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{BoConfig, BoError};
use crate::composition::{Composition, CompositionSpace};
use crate::element_data::EmbeddingTable;
use crate::featurize::{FeatureSubset, Featurizer};
use crate::models::GprModel;
use crate::seeding;

/// Below this standard deviation the posterior is treated as exact.
pub const EI_EPSILON: f64 = 1e-12;
/// Minimum L1 distance between a proposal and any evaluated composition.
pub const DUPLICATE_L1: f64 = 1e-6;

const INITIAL_STEP: f64 = 0.05;
const GRADIENT_STEP: f64 = 1e-6;
const MIN_STEP: f64 = 1e-12;
/// Local candidates are spread around this many of the best observations.
const LOCAL_CENTERS: usize = 5;
/// Log-uniform range of the per-coordinate perturbation scale.
const LOCAL_SCALE: (f64, f64) = (0.005, 0.1);

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `(mu - f*) Phi(z) + sigma phi(z)` with `z = (mu - f*) / sigma`; for
/// `sigma <= EI_EPSILON` the improvement is deterministic.
pub fn expected_improvement(mu: f64, sigma: f64, f_best: f64) -> f64 {
    let d = mu - f_best;
    if sigma <= EI_EPSILON {
        return d.max(0.0);
    }
    let z = d / sigma;
    let ei = d * normal_cdf(z) + sigma * normal_pdf(z);
    ei.max(d).max(0.0)
}

struct Objective<'a> {
    model: &'a GprModel,
    featurizer: Featurizer,
    f_best: f64,
}

impl Objective<'_> {
    fn eval(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        self.featurizer
            .featurize_into(x, buf)
            .expect("featurizer accepts every space element");
        let (mu, sd) = self.model.predict_point(buf);
        expected_improvement(mu, sd, self.f_best)
    }
}

/// Projected gradient ascent from `x` using central differences; a step is
/// halved whenever it fails to improve.
fn refine(obj: &Objective, space: &CompositionSpace, mut x: Vec<f64>, mut fx: f64, steps: usize) -> (Vec<f64>, f64) {
    let d = x.len();
    let mut buf = vec![0.0; obj.featurizer.width()];
    let mut step = INITIAL_STEP;
    let mut grad = vec![0.0; d];
    let mut probe = vec![0.0; d];
    for _ in 0..steps {
        for i in 0..d {
            probe.copy_from_slice(&x);
            probe[i] += GRADIENT_STEP;
            let up = obj.eval(&probe, &mut buf);
            probe[i] = x[i] - GRADIENT_STEP;
            let down = obj.eval(&probe, &mut buf);
            grad[i] = (up - down) / (2.0 * GRADIENT_STEP);
        }
        let mean = grad.iter().sum::<f64>() / d as f64;
        grad.iter_mut().for_each(|g| *g -= mean);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        loop {
            probe
                .iter_mut()
                .zip(x.iter().zip(&grad))
                .for_each(|(p, (xi, g))| *p = xi + step * g / norm);
            space.project(&mut probe);
            let fp = obj.eval(&probe, &mut buf);
            if fp > fx {
                x.copy_from_slice(&probe);
                fx = fp;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                return (x, fx);
            }
        }
    }
    (x, fx)
}

/// Perturbations of the best observed compositions, projected back onto
/// the space. Uniform draws rarely land close to the incumbent in more
/// than a few dimensions, which is where EI peaks once a basin is found.
fn local_candidates<R: Rng>(
    space: &CompositionSpace,
    evaluated: &[Composition],
    observed: &[f64],
    n: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let mut ranked: Vec<usize> = (0..evaluated.len().min(observed.len())).collect();
    ranked.sort_by(|&a, &b| observed[b].total_cmp(&observed[a]).then(a.cmp(&b)));
    ranked.truncate(LOCAL_CENTERS);
    if ranked.is_empty() {
        return Vec::new();
    }
    let span = (LOCAL_SCALE.1 / LOCAL_SCALE.0).ln();
    (0..n)
        .map(|i| {
            let center = evaluated[ranked[i % ranked.len()]].fractions();
            let scale = LOCAL_SCALE.0 * (span * rng.random::<f64>()).exp();
            let mut x: Vec<f64> = center
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut *rng);
                    v + scale * z
                })
                .collect();
            space.project(&mut x);
            x
        })
        .collect()
}

/// Composition in `space` with the highest expected improvement among a
/// seeded candidate pool and locally refined copies of its best members.
/// The pool mixes uniform draws with perturbations of the best
/// observations (`observed` is aligned with `already_evaluated`).
/// Candidates within `DUPLICATE_L1` of an evaluated composition are skipped.
#[allow(clippy::too_many_arguments)]
pub fn maximize_acquisition(
    model: &GprModel,
    space: &CompositionSpace,
    table: &EmbeddingTable,
    subset: &FeatureSubset,
    f_best: f64,
    cfg: &BoConfig,
    seed: u64,
    already_evaluated: &[Composition],
    observed: &[f64],
) -> Result<(Composition, f64), BoError> {
    let featurizer = Featurizer::new(space.elements(), table, Some(subset))?;
    if featurizer.width() != model.n_features() {
        return Err(BoError::Config(format!(
            "model expects {} features, subset gives {}",
            model.n_features(),
            featurizer.width()
        )));
    }
    let obj = Objective {
        model,
        featurizer,
        f_best,
    };
    let mut rng = seeding::rng(seed);
    let n_pool = cfg.pool_size.max(1);
    let n_local = if observed.is_empty() {
        0
    } else {
        (cfg.local_fraction * n_pool as f64).round() as usize
    };
    let mut pool: Vec<Vec<f64>> = (0..n_pool - n_local.min(n_pool))
        .map(|_| space.sample_fractions(&mut rng))
        .collect();
    pool.extend(local_candidates(
        space,
        already_evaluated,
        observed,
        n_local.min(n_pool),
        &mut rng,
    ));
    let scores: Vec<f64> = pool
        .par_iter()
        .map_init(|| vec![0.0; obj.featurizer.width()], |buf, x| obj.eval(x, buf))
        .collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let refined: Vec<(Vec<f64>, f64)> = order
        .iter()
        .take(cfg.refine_starts)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&i| refine(&obj, space, pool[i].clone(), scores[i], cfg.refine_steps))
        .collect();
    let mut candidates: Vec<(Vec<f64>, f64)> = refined;
    candidates.extend(order.iter().map(|&i| (pool[i].clone(), scores[i])));
    // stable: refined points win ties against pool points
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    let is_new = |x: &[f64]| {
        already_evaluated
            .iter()
            .all(|c| c.fractions().iter().zip(x).map(|(a, b)| (a - b).abs()).sum::<f64>() >= DUPLICATE_L1)
    };
    let (x, ei) = candidates
        .into_iter()
        .find(|(x, _)| is_new(x))
        .ok_or_else(|| BoError::Config("every candidate duplicates an evaluated composition".into()))?;
    Ok((space.composition_unchecked(x), ei))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::KernelConfig;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ei_examples() {
        assert!((expected_improvement(0.0, 1.0, 0.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(expected_improvement(3.0, 0.0, 1.0), 2.0);
        assert_eq!(expected_improvement(3.0, 1e-13, 1.0), 2.0);
        assert_eq!(expected_improvement(0.0, 0.0, 1.0), 0.0);
        let exact = normal_cdf(1.0) + normal_pdf(1.0);
        assert!((expected_improvement(1.0, 1.0, 0.0) - exact).abs() < 1e-15);
    }

    #[test]
    fn ei_monte_carlo() {
        let mut rng = seeding::rng(1);
        let n = 1_000_000;
        let mc: f64 = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (1.0 + z).max(0.0)
            })
            .sum::<f64>()
            / n as f64;
        assert!((expected_improvement(1.0, 1.0, 0.0) - mc).abs() < 3e-3);
    }

    #[test]
    fn cdf_reference_values() {
        assert!(
            (normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14,
            "{:e}",
            normal_cdf(1.0) - 0.841_344_746_068_542_9
        );
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_5).abs() < 1e-16);
    }

    fn setup(elements: &[&str]) -> (CompositionSpace, EmbeddingTable, FeatureSubset) {
        let space = CompositionSpace::unbounded(elements.iter().map(|s| s.to_string()).collect()).unwrap();
        let table = EmbeddingTable::random(elements, 4, 2, "t").unwrap();
        (space, table, FeatureSubset::new(vec![0, 2]).unwrap())
    }

    #[test]
    fn flat_prior_gives_constant_ei() {
        let (space, table, subset) = setup(&["Fe", "Ni", "Co"]);
        let model = GprModel::prior(2, KernelConfig::new(1.0, 1.0, 0.0), 0.0, 1.0);
        let cfg = BoConfig {
            pool_size: 64,
            ..BoConfig::default()
        };
        let (c, ei) = maximize_acquisition(&model, &space, &table, &subset, 0.0, &cfg, 3, &[], &[]).unwrap();
        assert!(space.contains(&c));
        assert!((ei - normal_pdf(0.0)).abs() < 1e-9);
    }

    fn fitted(
        space: &CompositionSpace,
        table: &EmbeddingTable,
        subset: &FeatureSubset,
    ) -> (GprModel, Vec<Composition>) {
        let comps = crate::composition::sample_random_compositions(space, 6, 5).unwrap();
        let f = Featurizer::new(space.elements(), table, Some(subset)).unwrap();
        let x = f.featurize_matrix(comps.iter().map(|c| c.fractions())).unwrap();
        let y: Vec<f64> = comps.iter().map(|c| (4.0 * c.fractions()[0]).sin()).collect();
        let model = GprModel::fit(
            &x,
            &y,
            &crate::models::GprConfig::fixed(KernelConfig::new(1.0, 0.5, 1e-6)),
        )
        .unwrap();
        (model, comps)
    }

    #[test]
    fn saturated_incumbent_still_returns_valid_point() {
        let (space, table, subset) = setup(&["Fe", "Ni", "Co"]);
        let (model, comps) = fitted(&space, &table, &subset);
        let cfg = BoConfig {
            pool_size: 128,
            ..BoConfig::default()
        };
        let (c, ei) = maximize_acquisition(&model, &space, &table, &subset, 1e9, &cfg, 1, &comps, &[]).unwrap();
        assert!(space.contains(&c));
        assert!(ei.abs() < 1e-12);
    }

    #[test]
    fn beats_pool_and_avoids_duplicates() {
        let (space, table, subset) = setup(&["Fe", "Ni", "Co"]);
        let (model, comps) = fitted(&space, &table, &subset);
        let cfg = BoConfig {
            pool_size: 256,
            ..BoConfig::default()
        };
        let (c, ei) = maximize_acquisition(&model, &space, &table, &subset, 0.5, &cfg, 9, &comps, &[]).unwrap();
        let f = Featurizer::new(space.elements(), &table, Some(&subset)).unwrap();
        let mut rng = seeding::rng(9);
        for _ in 0..256 {
            let x = space.sample_fractions(&mut rng);
            let (m, s) = model.predict_point(&f.featurize(&x).unwrap());
            assert!(ei >= expected_improvement(m, s, 0.5));
        }
        assert!(comps.iter().all(|p| p.l1_distance(&c) >= DUPLICATE_L1));
    }
}
