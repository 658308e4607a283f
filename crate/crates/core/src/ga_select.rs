//! Genetic-algorithm search for the fixed-size descriptor subset with the
//! best cross-validated random-forest score.
//!
//! Chromosomes are sorted column-index lists of exactly `subset_size`
//! entries. Fitness is `-MAE` for numeric targets and weighted F1 for class
//! labels, averaged over `fitness_rounds` repeats of `cv_folds`-fold CV.
//! Fitness values are memoized per subset and evaluated one generation at a
//! time, so the report does not depend on thread scheduling.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::element_data::{Dataset, EmbeddingTable};
use crate::evaluation::{kfold_cv, CvOptions, Metric, ModelSpec};
use crate::featurize::{featurize_dataset, FeatureSubset, Target, Targets};
use crate::models::ForestConfig;
use crate::{seeding, stats, Error};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub max_generations: usize,
    pub subset_size: usize,
    pub fitness_rounds: usize,
    pub cv_folds: usize,
    pub tournament_size: usize,
    pub elitism_count: usize,
    pub stagnation_limit: usize,
    pub forest: ForestConfig,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 192,
            crossover_rate: 0.8,
            mutation_rate: 0.1,
            max_generations: 100,
            subset_size: 4,
            fitness_rounds: 4,
            cv_folds: 10,
            tournament_size: 3,
            elitism_count: 2,
            stagnation_limit: 20,
            forest: ForestConfig::default(),
        }
    }
}

impl GaConfig {
    pub fn with_subset_size(subset_size: usize) -> Self {
        Self {
            subset_size,
            ..Self::default()
        }
    }

    /// Population 64 and 40 generations.
    pub fn desk(subset_size: usize) -> Self {
        Self {
            population_size: 64,
            max_generations: 40,
            subset_size,
            ..Self::default()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("crossover and mutation rates must lie in [0, 1]".into());
        }
        if self.population_size < 2 {
            return bad("population_size must be >= 2".into());
        }
        if self.subset_size == 0 {
            return bad("subset_size must be >= 1".into());
        }
        if self.subset_size > dim {
            return bad(format!(
                "subset_size {} exceeds the {dim} available descriptor columns",
                self.subset_size
            ));
        }
        if self.fitness_rounds == 0 || self.cv_folds < 2 || self.tournament_size == 0 {
            return bad("fitness_rounds >= 1, cv_folds >= 2 and tournament_size >= 1 required".into());
        }
        if self.elitism_count > self.population_size {
            return bad("elitism_count exceeds population_size".into());
        }
        Ok(())
    }
}

/// Memoized subset fitness over a fixed dataset and descriptor table.
///
/// The full table is featurized once; a subset's matrix is a column
/// selection of it, which equals featurizing with the subset directly.
pub struct FitnessEvaluator {
    x: DMatrix<f64>,
    targets: Targets,
    metric: Metric,
    model: ModelSpec,
    folds: usize,
    rounds: usize,
    seed: u64,
    memo: HashMap<Vec<usize>, f64>,
    evaluations: usize,
}

impl FitnessEvaluator {
    pub fn new(
        ds: &Dataset,
        table: &EmbeddingTable,
        target: &Target,
        cfg: &GaConfig,
        seed: u64,
    ) -> Result<Self, Error> {
        let (x, targets) = featurize_dataset(ds, table, None, target)?;
        Ok(Self::from_matrix(x, targets, cfg, seed))
    }

    pub fn from_matrix(x: DMatrix<f64>, targets: Targets, cfg: &GaConfig, seed: u64) -> Self {
        let metric = match targets {
            Targets::Values(_) => Metric::Mae,
            Targets::Labels(_) => Metric::F1Weighted,
        };
        Self {
            x,
            targets,
            metric,
            model: ModelSpec::RandomForest(cfg.forest),
            folds: cfg.cv_folds,
            rounds: cfg.fitness_rounds,
            seed,
            memo: HashMap::new(),
            evaluations: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Number of distinct subsets scored so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    fn compute(&self, columns: &[usize]) -> Result<f64, Error> {
        let x = self.x.select_columns(columns);
        let cv = kfold_cv(
            &x,
            &self.targets,
            &self.model,
            self.folds,
            self.rounds,
            &self.metric,
            seeding::hash_indices(self.seed, columns),
            CvOptions::default(),
        )?;
        Ok(match self.metric {
            Metric::Mae => -cv.mean,
            _ => cv.mean,
        })
    }

    pub fn fitness(&mut self, subset: &FeatureSubset) -> Result<f64, Error> {
        Ok(self.fitness_many(&[subset.columns().to_vec()])?[0])
    }

    /// Scores a batch; unseen subsets are evaluated in parallel, each once.
    pub fn fitness_many(&mut self, subsets: &[Vec<usize>]) -> Result<Vec<f64>, Error> {
        for s in subsets {
            FeatureSubset::for_dim(s.clone(), self.dim())?;
        }
        let fresh: Vec<&Vec<usize>> = subsets
            .iter()
            .filter(|s| !self.memo.contains_key(*s))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let scored = fresh
            .par_iter()
            .map(|s| self.compute(s))
            .collect::<Result<Vec<f64>, Error>>()?;
        self.evaluations += fresh.len();
        for (s, v) in fresh.into_iter().zip(scored) {
            self.memo.insert(s.clone(), v);
        }
        Ok(subsets.iter().map(|s| self.memo[s]).collect())
    }
}

/// `Q(S)` for one subset.
pub fn fitness(
    subset: &FeatureSubset,
    ds: &Dataset,
    table: &EmbeddingTable,
    target: &Target,
    cfg: &GaConfig,
    seed: u64,
) -> Result<f64, Error> {
    subset.check_dim(table.dim())?;
    FitnessEvaluator::new(ds, table, target, cfg, seed)?.fitness(subset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSubset {
    pub columns: Vec<usize>,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub gen: usize,
    /// Best fitness seen up to and including this generation.
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaReport {
    pub best: BestSubset,
    pub curve: Vec<GenerationStats>,
    pub evaluations: usize,
    pub seed: u64,
}

impl GaReport {
    pub fn subset(&self) -> FeatureSubset {
        FeatureSubset::new(self.best.columns.clone()).expect("report holds a valid subset")
    }
}

fn random_chromosome<R: Rng>(rng: &mut R, dim: usize, k: usize) -> Vec<usize> {
    let mut c = index::sample(rng, dim, k).into_vec();
    c.sort_unstable();
    c
}

/// Uniform crossover over the union of the parents, repaired to `k` genes.
fn crossover<R: Rng>(rng: &mut R, a: &[usize], b: &[usize], k: usize, dim: usize) -> Vec<usize> {
    let union: BTreeSet<usize> = a.iter().chain(b).copied().collect();
    let mut child: Vec<usize> = Vec::with_capacity(k);
    let mut rest: Vec<usize> = Vec::new();
    for &g in &union {
        let shared = a.contains(&g) && b.contains(&g);
        if shared || rng.random::<bool>() {
            child.push(g);
        } else {
            rest.push(g);
        }
    }
    if child.len() > k {
        child.shuffle(rng);
        child.truncate(k);
    }
    rest.shuffle(rng);
    while child.len() < k {
        match rest.pop() {
            Some(g) => child.push(g),
            None => {
                let g = rng.random_range(0..dim);
                if !child.contains(&g) {
                    child.push(g);
                }
            }
        }
    }
    child.sort_unstable();
    child
}

fn mutate<R: Rng>(rng: &mut R, c: &mut [usize], rate: f64, dim: usize) {
    if c.len() == dim {
        return;
    }
    for i in 0..c.len() {
        if rng.random::<f64>() < rate {
            loop {
                let g = rng.random_range(0..dim);
                if !c.contains(&g) {
                    c[i] = g;
                    break;
                }
            }
        }
    }
    c.sort_unstable();
}

fn tournament<R: Rng>(rng: &mut R, fit: &[f64], size: usize) -> usize {
    let mut best = rng.random_range(0..fit.len());
    for _ in 1..size {
        let i = rng.random_range(0..fit.len());
        if fit[i] > fit[best] || (fit[i] == fit[best] && i < best) {
            best = i;
        }
    }
    best
}

/// Runs the GA on a prepared evaluator.
pub fn run_ga(eval: &mut FitnessEvaluator, cfg: &GaConfig, seed: u64) -> Result<GaReport, Error> {
    let dim = eval.dim();
    cfg.validate(dim)?;
    let k = cfg.subset_size;
    if dim == k {
        let all: Vec<usize> = (0..dim).collect();
        let f = eval.fitness_many(std::slice::from_ref(&all))?[0];
        return Ok(GaReport {
            best: BestSubset {
                columns: all,
                fitness: f,
            },
            curve: vec![GenerationStats {
                gen: 0,
                best: f,
                mean: f,
            }],
            evaluations: eval.evaluations(),
            seed,
        });
    }
    let mut rng = seeding::rng(seeding::derive(seed, 0x6a));
    let mut pop: Vec<Vec<usize>> = (0..cfg.population_size)
        .map(|_| random_chromosome(&mut rng, dim, k))
        .collect();
    let mut fit = eval.fitness_many(&pop)?;
    let mut best = BestSubset {
        columns: Vec::new(),
        fitness: f64::NEG_INFINITY,
    };
    let mut curve = Vec::new();
    let mut stagnant = 0;
    for gen in 0..=cfg.max_generations {
        if gen > 0 {
            let mut order: Vec<usize> = (0..pop.len()).collect();
            order.sort_by(|&i, &j| fit[j].total_cmp(&fit[i]).then_with(|| pop[i].cmp(&pop[j])));
            let mut next: Vec<Vec<usize>> = order[..cfg.elitism_count].iter().map(|&i| pop[i].clone()).collect();
            while next.len() < cfg.population_size {
                let a = &pop[tournament(&mut rng, &fit, cfg.tournament_size)];
                let b = &pop[tournament(&mut rng, &fit, cfg.tournament_size)];
                let mut child = if rng.random::<f64>() < cfg.crossover_rate {
                    crossover(&mut rng, a, b, k, dim)
                } else {
                    a.clone()
                };
                mutate(&mut rng, &mut child, cfg.mutation_rate, dim);
                next.push(child);
            }
            pop = next;
            fit = eval.fitness_many(&pop)?;
        }
        let mut improved = false;
        for (c, &f) in pop.iter().zip(&fit) {
            if f > best.fitness || (f == best.fitness && *c < best.columns) {
                improved |= f > best.fitness;
                best = BestSubset {
                    columns: c.clone(),
                    fitness: f,
                };
            }
        }
        curve.push(GenerationStats {
            gen,
            best: best.fitness,
            mean: stats::mean(&fit),
        });
        if gen > 0 {
            stagnant = if improved { 0 } else { stagnant + 1 };
            if stagnant >= cfg.stagnation_limit {
                break;
            }
        }
    }
    Ok(GaReport {
        best,
        curve,
        evaluations: eval.evaluations(),
        seed,
    })
}

pub fn ga_select(
    ds: &Dataset,
    table: &EmbeddingTable,
    target: &Target,
    cfg: &GaConfig,
    seed: u64,
) -> Result<GaReport, Error> {
    cfg.validate(table.dim())?;
    let mut eval = FitnessEvaluator::new(ds, table, target, cfg, seed)?;
    run_ga(&mut eval, cfg, seed)
}
