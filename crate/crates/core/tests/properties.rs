use alloyembed::analysis::{cosine_similarity_matrix, pearson_matrix, LabeledMatrix};
use alloyembed::bo_engine::expected_improvement;
use alloyembed::composition::{Composition, CompositionSpace};
use alloyembed::element_data::EmbeddingTable;
use alloyembed::evaluation::{f1_binary, f1_weighted, fold_partition, mae};
use alloyembed::featurize::{FeatureSubset, Featurizer, Targets};
use alloyembed::ga_select::{run_ga, FitnessEvaluator, GaConfig};
use alloyembed::models::{ForestConfig, GprConfig, GprModel, KernelConfig, RandomForest};
use alloyembed::seeding;
use nalgebra::DMatrix;
use proptest::prelude::*;

const SYMBOLS: [&str; 6] = ["Fe", "Ni", "Co", "Cr", "Mn", "Al"];

fn elements(d: usize) -> Vec<String> {
    SYMBOLS[..d].iter().map(|s| s.to_string()).collect()
}

/// Feasible box bounds: lower bounds sum below 1, upper bounds above it.
fn bounded_space() -> impl Strategy<Value = CompositionSpace> {
    (2usize..=6).prop_flat_map(|d| {
        (
            prop::collection::vec(0.0..0.5 / d as f64, d),
            prop::collection::vec(1.0 / d as f64..1.0, d),
        )
            .prop_map(move |(lo, room)| {
                let hi: Vec<f64> = lo.iter().zip(&room).map(|(l, r)| (l + r).min(1.0)).collect();
                CompositionSpace::new(elements(d), lo, hi).unwrap()
            })
    })
}

fn labels(max_len: usize) -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
    (1..=max_len).prop_flat_map(|n| {
        let class = prop::sample::select(vec!["a".to_string(), "b".into(), "c".into(), "d".into()]);
        (prop::collection::vec(class.clone(), n), prop::collection::vec(class, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sampled_fractions_stay_in_space(space in bounded_space(), seed in any::<u64>()) {
        let mut rng = seeding::rng(seed);
        for _ in 0..20 {
            let x = space.sample_fractions(&mut rng);
            prop_assert!(space.contains_fractions(&x), "{x:?}");
        }
    }

    #[test]
    fn projection_lands_in_space(space in bounded_space(), raw in prop::collection::vec(-2.0f64..3.0, 6)) {
        let mut x = raw[..space.dim()].to_vec();
        space.project(&mut x);
        prop_assert!(space.contains_fractions(&x), "{x:?}");
        let mut again = x.clone();
        space.project(&mut again);
        for (a, b) in x.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn featurization_is_linear(seed in any::<u64>(), alpha in 0.0f64..=1.0, d in 2usize..=6) {
        let els = elements(d);
        let refs: Vec<&str> = els.iter().map(String::as_str).collect();
        let table = EmbeddingTable::random(&refs, 7, seed, "t").unwrap();
        let space = CompositionSpace::unbounded(els.clone()).unwrap();
        let f = Featurizer::new(&els, &table, None).unwrap();
        let mut rng = seeding::rng(seed ^ 1);
        let c1 = Composition::new(space.element_list().clone(), space.sample_fractions(&mut rng)).unwrap();
        let c2 = Composition::new(space.element_list().clone(), space.sample_fractions(&mut rng)).unwrap();
        let mixed = f.featurize(c1.blend(&c2, alpha).unwrap().fractions()).unwrap();
        let v1 = f.featurize(c1.fractions()).unwrap();
        let v2 = f.featurize(c2.fractions()).unwrap();
        for j in 0..mixed.len() {
            prop_assert!((mixed[j] - (alpha * v1[j] + (1.0 - alpha) * v2[j])).abs() <= 1e-12);
        }
    }

    #[test]
    fn subset_featurization_selects_columns(seed in any::<u64>(), cols in prop::collection::btree_set(0usize..9, 1..9)) {
        let els = elements(4);
        let refs: Vec<&str> = els.iter().map(String::as_str).collect();
        let table = EmbeddingTable::random(&refs, 9, seed, "t").unwrap();
        let subset = FeatureSubset::new(cols.iter().copied().collect()).unwrap();
        let full = Featurizer::new(&els, &table, None).unwrap();
        let part = Featurizer::new(&els, &table, Some(&subset)).unwrap();
        let x = CompositionSpace::unbounded(els.clone()).unwrap().sample_fractions(&mut seeding::rng(seed));
        let (vf, vp) = (full.featurize(&x).unwrap(), part.featurize(&x).unwrap());
        let picked: Vec<f64> = subset.columns().iter().map(|&j| vf[j]).collect();
        prop_assert_eq!(picked, vp);
    }

    #[test]
    fn folds_partition_rows(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = fold_partition(n, k, seed, None);
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(folds, fold_partition(n, k, seed, None));
    }

    #[test]
    fn f1_is_bounded_and_symmetric((pred, truth) in labels(12)) {
        let w = f1_weighted(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&w));
        for class in ["a", "b", "c", "d"] {
            let f = f1_binary(&pred, &truth, class).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            // swapping predictions and truth swaps precision and recall
            prop_assert!((f - f1_binary(&truth, &pred, class).unwrap()).abs() <= 1e-15);
        }
        prop_assert!((f1_weighted(&truth, &truth).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn mae_is_symmetric_and_scales(
        pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40),
        a in -10.0f64..10.0,
    ) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = mae(&p, &t).unwrap();
        prop_assert_eq!(m, mae(&t, &p).unwrap());
        let ps: Vec<f64> = p.iter().map(|v| a * v).collect();
        let ts: Vec<f64> = t.iter().map(|v| a * v).collect();
        prop_assert!((mae(&ps, &ts).unwrap() - a.abs() * m).abs() <= 1e-9 * (1.0 + a.abs() * m));
        prop_assert_eq!(mae(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn ei_bounds_and_invariances(
        mu in -5.0f64..5.0,
        f in -5.0f64..5.0,
        log_sigma in -6.0f64..1.0,
        shift in -3.0f64..3.0,
        scale in 0.1f64..10.0,
    ) {
        let sigma = 10f64.powf(log_sigma);
        let ei = expected_improvement(mu, sigma, f);
        prop_assert!(ei >= (mu - f).max(0.0));
        prop_assert!(expected_improvement(mu, sigma * 1.5, f) >= ei - 1e-12 * (1.0 + ei));
        let shifted = expected_improvement(mu + shift, sigma, f + shift);
        prop_assert!((shifted - ei).abs() <= 1e-9 * (1.0 + ei));
        let scaled = expected_improvement(scale * mu, scale * sigma, scale * f);
        prop_assert!((scaled - scale * ei).abs() <= 1e-9 * (1.0 + scale * ei));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gpr_variance_never_exceeds_prior(seed in any::<u64>(), n in 1usize..15, d in 1usize..4) {
        use rand::Rng;
        let mut rng = seeding::rng(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kernel = KernelConfig::new(1.3, 0.4, 1e-3);
        let model = GprModel::fit(&x, &y, &GprConfig::raw(kernel)).unwrap();
        let q = DMatrix::from_fn(10, d, |_, _| rng.random_range(-0.5..1.5));
        let (_, sd) = model.predict(&q).unwrap();
        for s in sd {
            prop_assert!(s >= 0.0 && s * s <= 1.3 + 1e-12);
        }
    }

    #[test]
    fn forest_predictions_stay_in_target_range(seed in any::<u64>(), n in 2usize..40) {
        use rand::Rng;
        let mut rng = seeding::rng(seed);
        let x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let cfg = ForestConfig { n_trees: 10, ..ForestConfig::default() };
        let forest = RandomForest::fit(&x, &Targets::Values(y), &cfg, seed).unwrap();
        let q = DMatrix::from_fn(20, 3, |_, _| rng.random_range(-1.0..2.0));
        let Targets::Values(p) = forest.predict(&q).unwrap() else { panic!("expected values") };
        for v in p {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn pearson_ignores_affine_maps(
        seed in any::<u64>(),
        a in prop::sample::select(vec![-3.0, -0.5, 0.25, 2.0, 7.0]),
        b in -5.0f64..5.0,
    ) {
        use rand::Rng;
        let mut rng = seeding::rng(seed);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let mapped: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| a * v + b).collect()).collect();
        let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let m = LabeledMatrix::new(names("E", 6), names("x", 3), rows).unwrap();
        let mm = LabeledMatrix::new(names("E", 6), names("y", 3), mapped).unwrap();
        let (base, other) = (pearson_matrix(&m, &m).unwrap(), pearson_matrix(&m, &mm).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((other.values[i][j] - a.signum() * base.values[i][j]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn cosine_ignores_row_scaling(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let els = elements(5);
        let refs: Vec<&str> = els.iter().map(String::as_str).collect();
        let table = EmbeddingTable::random(&refs, 6, seed, "t").unwrap();
        let mut rows: Vec<Vec<f64>> = (0..5).map(|i| table.row(i).to_vec()).collect();
        rows[2].iter_mut().for_each(|v| *v *= scale);
        let scaled = EmbeddingTable::new(els.clone(), rows, "t").unwrap();
        let (m1, m2) = (cosine_similarity_matrix(&table), cosine_similarity_matrix(&scaled));
        for i in 0..5 {
            for j in 0..5 {
                prop_assert!((m1.values[i][j] - m2.values[i][j]).abs() <= 1e-12);
                prop_assert!(m1.values[i][j] == m1.values[j][i]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ga_returns_valid_chromosomes(seed in any::<u64>(), dim in 3usize..9, k in 1usize..4) {
        use rand::Rng;
        prop_assume!(k <= dim);
        let mut rng = seeding::rng(seed);
        let x = DMatrix::from_fn(24, dim, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..24).map(|i| x[(i, 0)] + rng.random_range(-0.1..0.1)).collect();
        let cfg = GaConfig {
            population_size: 8,
            max_generations: 3,
            fitness_rounds: 1,
            cv_folds: 3,
            forest: ForestConfig { n_trees: 5, ..ForestConfig::default() },
            ..GaConfig::with_subset_size(k)
        };
        let mut eval = FitnessEvaluator::from_matrix(x, Targets::Values(y), &cfg, seed);
        let report = run_ga(&mut eval, &cfg, seed).unwrap();
        let cols = &report.best.columns;
        prop_assert_eq!(cols.len(), k);
        prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(cols.iter().all(|&c| c < dim));
        prop_assert!(report.curve.windows(2).all(|w| w[1].best >= w[0].best));
    }
}
