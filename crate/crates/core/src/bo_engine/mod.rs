//! Expected-improvement Bayesian optimization against a synthetic ground
//! truth, with a GA-selected descriptor subset fixed per trajectory.

pub mod acquisition;
pub mod fom;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use acquisition::{expected_improvement, maximize_acquisition, normal_cdf, normal_pdf, DUPLICATE_L1, EI_EPSILON};
pub use fom::{default_fom, fom, FomConfig, SmaThirdTerm};

use crate::composition::{
    ground_truth, sample_random_compositions, Composition, CompositionError, PropertyMap, SyntheticEnvironment,
};
use crate::element_data::{Dataset, EmbeddingTable, Sample};
use crate::featurize::{FeatureSubset, FeaturizeError, Featurizer, Target};
use crate::ga_select::{run_ga, FitnessEvaluator, GaConfig, GaReport};
use crate::models::{GprConfig, GprModel, KernelChoice, ModelError};
use crate::{seeding, stats};

#[derive(Debug, Error)]
pub enum BoError {
    #[error("invalid BO configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Property(String),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("feature selection failed: {0}")]
    Selection(String),
}

/// Reference value `f*` handed to expected improvement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Incumbent {
    /// Highest observed FOM.
    Observed,
    /// Highest posterior mean over the evaluated compositions. Equals
    /// `Observed` for an interpolating model; differs once the fitted
    /// noise absorbs part of the signal.
    PosteriorMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub n_initial: usize,
    pub n_iterations: usize,
    pub n_trajectories: usize,
    pub pool_size: usize,
    pub refine_starts: usize,
    pub refine_steps: usize,
    /// Share of the acquisition pool drawn around the best observations.
    pub local_fraction: f64,
    pub incumbent: Incumbent,
    /// Re-tune kernel hyperparameters at every iteration; otherwise tune
    /// once at the first iteration and keep them.
    pub refit_hyperparameters: bool,
    pub gpr: GprConfig,
    /// Use 2 rounds of 5-fold CV in the GA phase when `n_initial < 50`.
    pub reduce_small_sample_cv: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            n_initial: 40,
            n_iterations: 60,
            n_trajectories: 16,
            pool_size: 4096,
            refine_starts: 8,
            refine_steps: 100,
            local_fraction: 0.5,
            incumbent: Incumbent::PosteriorMean,
            refit_hyperparameters: true,
            gpr: GprConfig::default(),
            reduce_small_sample_cv: true,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<(), BoError> {
        if self.n_initial < 2 {
            return Err(BoError::Config("n_initial must be >= 2".into()));
        }
        if self.n_trajectories == 0 {
            return Err(BoError::Config("n_trajectories must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.local_fraction) {
            return Err(BoError::Config("local_fraction must be in [0, 1]".into()));
        }
        if self.pool_size == 0 {
            return Err(BoError::Config("pool_size must be >= 1".into()));
        }
        Ok(())
    }

    /// GA settings actually used on the initial design.
    pub fn ga_for_initial(&self, ga: &GaConfig) -> GaConfig {
        let mut ga = ga.clone();
        if self.reduce_small_sample_cv && self.n_initial < 50 {
            ga.fitness_rounds = 2;
            ga.cv_folds = 5;
        }
        ga.cv_folds = ga.cv_folds.min(self.n_initial);
        ga
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Bo,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Bo => "bo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub fractions: Vec<f64>,
    pub properties: PropertyMap,
    pub fom: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrajectory {
    pub seed: u64,
    pub elements: Vec<String>,
    pub subset: FeatureSubset,
    pub ga: GaReport,
    pub records: Vec<BoRecord>,
}

impl BoTrajectory {
    pub fn best_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_so_far).collect()
    }

    pub fn final_best(&self) -> f64 {
        self.records.last().map_or(f64::NEG_INFINITY, |r| r.best_so_far)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoSummary {
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub mean_best: Vec<f64>,
    pub std_best: Vec<f64>,
    pub final_best: Vec<f64>,
    pub trajectories: Vec<BoTrajectory>,
}

/// Final best-so-far distribution, the JSON companion of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalDistribution {
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub final_best: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl BoSummary {
    pub fn from_trajectories(base_seed: u64, trajectories: Vec<BoTrajectory>) -> Self {
        let curves: Vec<Vec<f64>> = trajectories.iter().map(BoTrajectory::best_curve).collect();
        let len = curves.iter().map(Vec::len).min().unwrap_or(0);
        let column = |t: usize| curves.iter().map(|c| c[t]).collect::<Vec<f64>>();
        Self {
            base_seed,
            seeds: trajectories.iter().map(|t| t.seed).collect(),
            mean_best: (0..len).map(|t| stats::mean(&column(t))).collect(),
            std_best: (0..len).map(|t| stats::std_dev(&column(t))).collect(),
            final_best: trajectories.iter().map(BoTrajectory::final_best).collect(),
            trajectories,
        }
    }

    pub fn final_distribution(&self) -> FinalDistribution {
        FinalDistribution {
            base_seed: self.base_seed,
            seeds: self.seeds.clone(),
            final_best: self.final_best.clone(),
            mean: stats::mean(&self.final_best),
            std: stats::std_dev(&self.final_best),
            n: self.final_best.len(),
        }
    }
}

fn evaluate(env: &SyntheticEnvironment, fom_cfg: &FomConfig, c: &Composition) -> Result<(PropertyMap, f64), BoError> {
    let props = ground_truth(env, c)?;
    let f = fom(fom_cfg, &props)?;
    Ok((props, f))
}

fn push_record(records: &mut Vec<BoRecord>, phase: Phase, c: &Composition, props: PropertyMap, f: f64) {
    let prev = records.last().map_or(f64::NEG_INFINITY, |r| r.best_so_far);
    records.push(BoRecord {
        iteration: records.len(),
        phase,
        fractions: c.fractions().to_vec(),
        properties: props,
        fom: f,
        best_so_far: prev.max(f),
    });
}

/// One trajectory: random initial design, GA subset selection on it, then
/// `n_iterations` rounds of GPR fit and EI maximization.
pub fn run_bo(
    env: &SyntheticEnvironment,
    table: &EmbeddingTable,
    fom_cfg: &FomConfig,
    bo_cfg: &BoConfig,
    ga_cfg: &GaConfig,
    seed: u64,
) -> Result<BoTrajectory, BoError> {
    bo_cfg.validate()?;
    fom_cfg.validate()?;
    let space = &env.space;
    let mut evaluated = sample_random_compositions(space, bo_cfg.n_initial, seeding::derive(seed, 1))?;
    let mut records = Vec::with_capacity(bo_cfg.n_initial + bo_cfg.n_iterations);
    for c in &evaluated {
        let (props, f) = evaluate(env, fom_cfg, c)?;
        push_record(&mut records, Phase::Init, c, props, f);
    }

    let ga_cfg = bo_cfg.ga_for_initial(ga_cfg);
    let design = Dataset::new(
        space.elements().to_vec(),
        vec!["fom".to_string()],
        records
            .iter()
            .map(|r| Sample {
                fractions: r.fractions.clone(),
                properties: vec![r.fom],
                label: None,
            })
            .collect(),
    )
    .map_err(|e| BoError::Selection(e.to_string()))?;
    let ga_seed = seeding::derive(seed, 2);
    let ga = FitnessEvaluator::new(&design, table, &Target::Property("fom".into()), &ga_cfg, ga_seed)
        .and_then(|mut ev| run_ga(&mut ev, &ga_cfg, ga_seed))
        .map_err(|e| BoError::Selection(e.to_string()))?;
    let subset = ga.subset();

    let featurizer = Featurizer::new(space.elements(), table, Some(&subset))?;
    let mut rows: Vec<Vec<f64>> = evaluated
        .iter()
        .map(|c| featurizer.featurize(c.fractions()))
        .collect::<Result<_, _>>()?;
    let mut gpr = bo_cfg.gpr;
    for t in 0..bo_cfg.n_iterations {
        if let KernelChoice::Auto(tune) = &mut gpr.kernel {
            tune.seed = seeding::derive(seed, 0x100 + t as u64);
        }
        let x = DMatrix::from_fn(rows.len(), featurizer.width(), |i, j| rows[i][j]);
        let y: Vec<f64> = records.iter().map(|r| r.fom).collect();
        let model = GprModel::fit(&x, &y, &gpr)?;
        if !bo_cfg.refit_hyperparameters {
            gpr.kernel = KernelChoice::Fixed(*model.kernel());
        }
        let f_best = match bo_cfg.incumbent {
            Incumbent::Observed => records.last().map_or(f64::NEG_INFINITY, |r| r.best_so_far),
            Incumbent::PosteriorMean => model.predict(&x)?.0.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        let (c, _) = maximize_acquisition(
            &model,
            space,
            table,
            &subset,
            f_best,
            bo_cfg,
            seeding::derive(seed, 0x1000 + t as u64),
            &evaluated,
            &y,
        )?;
        let (props, f) = evaluate(env, fom_cfg, &c)?;
        push_record(&mut records, Phase::Bo, &c, props, f);
        rows.push(featurizer.featurize(c.fractions())?);
        evaluated.push(c);
    }
    Ok(BoTrajectory {
        seed,
        elements: space.elements().to_vec(),
        subset,
        ga,
        records,
    })
}

/// Trajectory `i` runs with seed `base_seed + i`.
pub fn run_parallel_bo(
    env: &SyntheticEnvironment,
    table: &EmbeddingTable,
    fom_cfg: &FomConfig,
    bo_cfg: &BoConfig,
    ga_cfg: &GaConfig,
    base_seed: u64,
) -> Result<BoSummary, BoError> {
    bo_cfg.validate()?;
    let trajectories = (0..bo_cfg.n_trajectories as u64)
        .into_par_iter()
        .map(|i| run_bo(env, table, fom_cfg, bo_cfg, ga_cfg, base_seed.wrapping_add(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BoSummary::from_trajectories(base_seed, trajectories))
}

/// Best-so-far curve of `n_evals` uniformly sampled compositions.
pub fn random_search(
    env: &SyntheticEnvironment,
    fom_cfg: &FomConfig,
    n_evals: usize,
    seed: u64,
) -> Result<Vec<f64>, BoError> {
    let comps = sample_random_compositions(&env.space, n_evals, seeding::derive(seed, 0x7a))?;
    let mut best = f64::NEG_INFINITY;
    comps
        .iter()
        .map(|c| {
            best = best.max(evaluate(env, fom_cfg, c)?.1);
            Ok(best)
        })
        .collect()
}

/// `trajectory,iteration,phase,fom,best_so_far,<elements...>`
pub fn trajectories_csv(trajectories: &[BoTrajectory]) -> String {
    let mut out = String::from("trajectory,iteration,phase,fom,best_so_far");
    if let Some(t) = trajectories.first() {
        for e in &t.elements {
            out.push(',');
            out.push_str(e);
        }
    }
    out.push('\n');
    for (i, t) in trajectories.iter().enumerate() {
        for r in &t.records {
            write!(
                out,
                "{i},{},{},{},{}",
                r.iteration,
                r.phase.as_str(),
                r.fom,
                r.best_so_far
            )
            .unwrap();
            for f in &r.fractions {
                write!(out, ",{f}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// `iteration,mean_best,std_best`
pub fn summary_csv(summary: &BoSummary) -> String {
    let mut out = String::from("iteration,mean_best,std_best\n");
    for (t, (m, s)) in summary.mean_best.iter().zip(&summary.std_best).enumerate() {
        writeln!(out, "{t},{m},{s}").unwrap();
    }
    out
}
