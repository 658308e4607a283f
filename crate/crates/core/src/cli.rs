//! Command-line front end. Every output file is written to a temporary file
//! in the target directory and renamed into place.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{cosine_similarity_matrix, pearson_matrix, LabeledMatrix};
use crate::bo_engine::{
    default_fom, fom, run_parallel_bo, summary_csv, trajectories_csv, BoConfig, FinalDistribution, FomConfig,
    SmaThirdTerm,
};
use crate::composition::{generate_synthetic_dataset, EnvKind, SyntheticEnvironment};
use crate::element_data::{load_dataset, load_embedding_table, Dataset, EmbeddingTable, Sample};
use crate::evaluation::{kfold_cv, CvOptions, CvResult, Metric, ModelSpec};
use crate::featurize::{featurize_dataset, FeatureSubset, SubsetDocument, Target, Targets};
use crate::ga_select::{run_ga, FitnessEvaluator, GaConfig, GaReport};
use crate::models::GprConfig;
use crate::{elements, stats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    #[default]
    Rf,
    Gpr,
}

/// JSON run configuration. Command-line flags override its values, which
/// override built-in defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: Option<EnvKind>,
    pub env_seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub target: Option<String>,
    pub subset_size: Option<usize>,
    pub model: Option<ModelChoice>,
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub ga: Option<GaConfig>,
    pub bo: Option<BoConfig>,
    pub fom: Option<FomConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Referenced input files must exist.
    pub fn validate(&self) -> Result<()> {
        for p in [&self.data, &self.embeddings].into_iter().flatten() {
            if !p.exists() {
                bail!("config references missing file {}", p.display());
            }
        }
        if let Some(f) = &self.fom {
            f.validate()?;
        }
        if let Some(b) = &self.bo {
            b.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn resolve_out(&self, p: &Path) -> PathBuf {
        match &self.output_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "alloyembed",
    version,
    about = "Descriptor featurization, GA feature selection and Bayesian optimization for alloy compositions"
)]
pub struct Cli {
    /// JSON run configuration; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores). Outputs do not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic dataset with ground-truth properties and FOM.
    GenSynthetic(GenSyntheticArgs),
    /// Write a seeded random embedding table.
    GenTable(GenTableArgs),
    /// Mole-average descriptor columns for every dataset row.
    Featurize(FeaturizeArgs),
    /// Select a descriptor subset with the genetic algorithm.
    Select(SelectArgs),
    /// Feature-count sweep: GA selection then repeated k-fold CV per size.
    Cv(CvArgs),
    /// Parallel Bayesian-optimization trajectories on a synthetic environment.
    Bo(BoArgs),
    /// Pearson or cosine similarity matrices of embedding tables.
    Analyze(AnalyzeArgs),
    /// Summaries, Welch t-tests and feature frequencies from earlier outputs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct EnvArgs {
    #[arg(long)]
    pub env: Option<EnvKind>,
    /// Seed of the synthetic environment itself.
    #[arg(long)]
    pub env_seed: Option<u64>,
}

impl EnvArgs {
    fn build(&self, rc: &RunConfig) -> Result<SyntheticEnvironment> {
        let kind = self.env.or(rc.env).context("--env is required")?;
        Ok(SyntheticEnvironment::new(
            kind,
            self.env_seed.or(rc.env_seed).unwrap_or(0),
        ))
    }
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Absolute noise standard deviation added to every property.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Add a `class` column: `high` when FOM is at or above the median, else `low`.
    #[arg(long)]
    pub with_class: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the environment definition as JSON.
    #[arg(long)]
    pub env_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenTableArgs {
    /// Comma-separated element symbols; defaults to the environment's elements.
    #[arg(long, value_delimiter = ',')]
    pub elements: Vec<String>,
    #[arg(long)]
    pub env: Option<EnvKind>,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Subset JSON as written by `select`; all columns when omitted.
    #[arg(long)]
    pub subset: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GaArgs {
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub generations: Option<usize>,
    /// Trees per random forest in the fitness function.
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub fitness_rounds: Option<usize>,
    #[arg(long)]
    pub cv_folds: Option<usize>,
}

impl GaArgs {
    fn build(&self, rc: &RunConfig, k: Option<usize>) -> GaConfig {
        let mut ga = rc.ga.clone().unwrap_or_default();
        if let Some(k) = k.or(rc.subset_size) {
            ga.subset_size = k;
        }
        if let Some(v) = self.population {
            ga.population_size = v;
        }
        if let Some(v) = self.generations {
            ga.max_generations = v;
        }
        if let Some(v) = self.trees {
            ga.forest.n_trees = v;
        }
        if let Some(v) = self.fitness_rounds {
            ga.fitness_rounds = v;
        }
        if let Some(v) = self.cv_folds {
            ga.cv_folds = v;
        }
        ga
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Property name, or `class` for the label column.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub ga: GaArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Full GA report (best subset, fitness curve, evaluation count).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    #[arg(long, default_value_t = 8)]
    pub k_max: usize,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub stratified: bool,
    #[command(flatten)]
    pub ga: GaArgs,
    /// CSV `k,columns,mean,std,folds,repeats`.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-size GA reports and CV results as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub init: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Candidate pool size for acquisition maximization.
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Descriptor subset size chosen by the GA phase.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub sma_mode: Option<SmaModeArg>,
    #[command(flatten)]
    pub ga: GaArgs,
    /// CSV `iteration,mean_best,std_best`.
    #[arg(long)]
    pub out_curve: PathBuf,
    /// CSV with one row per evaluation of every trajectory.
    #[arg(long)]
    pub out_trajectories: Option<PathBuf>,
    /// JSON final best-so-far distribution.
    #[arg(long)]
    pub out_final: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SmaModeArg {
    OneMinusDeviation,
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AnalyzeMode {
    Pearson,
    Cosine,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub mode: AnalyzeMode,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Second table for Pearson; rows are matched by element symbol.
    #[arg(long)]
    pub other: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Final-distribution JSON files written by `bo --out-final`.
    #[arg(long = "bo")]
    pub bo: Vec<PathBuf>,
    /// GA report JSON files written by `select --report`.
    #[arg(long = "ga")]
    pub ga: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Writes `contents` to a temporary sibling of `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn require<'a>(flag: &'a Option<PathBuf>, cfg: &'a Option<PathBuf>, name: &str) -> Result<&'a PathBuf> {
    flag.as_ref()
        .or(cfg.as_ref())
        .with_context(|| format!("--{name} is required"))
}

fn load_inputs(
    data: &Option<PathBuf>,
    embeddings: &Option<PathBuf>,
    rc: &RunConfig,
) -> Result<(Dataset, EmbeddingTable)> {
    let dp = require(data, &rc.data, "data")?;
    let ep = require(embeddings, &rc.embeddings, "embeddings")?;
    let ds = load_dataset(dp, None).with_context(|| format!("loading {}", dp.display()))?;
    let table = load_embedding_table(ep).with_context(|| format!("loading {}", ep.display()))?;
    Ok((ds, table))
}

fn target_of(flag: &Option<String>, rc: &RunConfig) -> Result<Target> {
    let t = flag.as_ref().or(rc.target.as_ref()).context("--target is required")?;
    Ok(t.parse().expect("target parsing is infallible"))
}

fn gen_synthetic(a: &GenSyntheticArgs, rc: &RunConfig) -> Result<()> {
    let env = a.env.build(rc)?;
    let seed = a.seed.or(rc.seed).unwrap_or(0);
    let ds = generate_synthetic_dataset(&env, a.samples, a.noise, seed)?;
    let fom_cfg = match &rc.fom {
        Some(f) => f.clone(),
        None => default_fom(&env)?,
    };
    let names = ds.property_names().to_vec();
    let foms: Vec<f64> = ds
        .samples()
        .iter()
        .map(|s| {
            let props = names.iter().cloned().zip(s.properties.iter().copied()).collect();
            fom(&fom_cfg, &props)
        })
        .collect::<Result<_, _>>()?;
    let median = stats::percentile(&foms, 50.0);
    let samples: Vec<Sample> = ds
        .samples()
        .iter()
        .zip(&foms)
        .map(|(s, f)| {
            let mut properties = s.properties.clone();
            properties.push(*f);
            Sample {
                fractions: s.fractions.clone(),
                properties,
                label: a
                    .with_class
                    .then(|| if *f >= median { "high" } else { "low" }.to_string()),
            }
        })
        .collect();
    let mut props = names;
    props.push("fom".into());
    let out = Dataset::new(ds.elements().to_vec(), props, samples)?;
    write_atomic(&rc.resolve_out(&a.out), out.to_csv().as_bytes())?;
    if let Some(p) = &a.env_out {
        write_atomic(&rc.resolve_out(p), env.to_json().as_bytes())?;
    }
    Ok(())
}

fn gen_table(a: &GenTableArgs, rc: &RunConfig) -> Result<()> {
    let symbols: Vec<String> = if !a.elements.is_empty() {
        a.elements.clone()
    } else if let Some(kind) = a.env.or(rc.env) {
        kind.default_elements()
    } else {
        elements::SYMBOLS.iter().map(|s| s.to_string()).collect()
    };
    let refs: Vec<&str> = symbols.iter().map(String::as_str).collect();
    let stem = a
        .out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let table = EmbeddingTable::random(&refs, a.dim, a.seed, &stem)?;
    write_atomic(&rc.resolve_out(&a.out), table.to_csv().as_bytes())
}

fn load_subset(path: &Path) -> Result<FeatureSubset> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: SubsetDocument = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(doc.columns)
}

fn featurize_cmd(a: &FeaturizeArgs, rc: &RunConfig) -> Result<()> {
    let (ds, table) = load_inputs(&a.data, &a.embeddings, rc)?;
    let subset = a.subset.as_deref().map(load_subset).transpose()?;
    let target = ds
        .property_names()
        .first()
        .map(|p| Target::Property(p.clone()))
        .unwrap_or(Target::Class);
    let (x, _) = featurize_dataset(&ds, &table, subset.as_ref(), &target)?;
    let columns: Vec<usize> = match &subset {
        Some(s) => s.columns().to_vec(),
        None => (0..table.dim()).collect(),
    };
    let mut out = String::new();
    let header: Vec<String> = columns
        .iter()
        .map(|j| format!("c{j}"))
        .chain(ds.property_names().iter().cloned())
        .chain(ds.has_class().then(|| "class".to_string()))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, s) in ds.samples().iter().enumerate() {
        let cells: Vec<String> = x
            .row(i)
            .iter()
            .chain(&s.properties)
            .map(|v| v.to_string())
            .chain(s.label.clone().or_else(|| ds.has_class().then(String::new)))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_atomic(&rc.resolve_out(&a.out), out.as_bytes())
}

fn select_cmd(a: &SelectArgs, rc: &RunConfig) -> Result<()> {
    let (ds, table) = load_inputs(&a.data, &a.embeddings, rc)?;
    let target = target_of(&a.target, rc)?;
    let ga = a.ga.build(rc, a.k);
    let seed = a.seed.or(rc.seed).unwrap_or(0);
    let report = crate::ga_select::ga_select(&ds, &table, &target, &ga, seed)?;
    let doc = SubsetDocument {
        columns: report.subset(),
        source_label: table.source_label().to_string(),
    };
    write_json(&rc.resolve_out(&a.out), &doc)?;
    if let Some(p) = &a.report {
        write_json(&rc.resolve_out(p), &report)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CvSweepEntry {
    k: usize,
    ga: GaReport,
    cv: CvResult,
}

fn cv_cmd(a: &CvArgs, rc: &RunConfig) -> Result<()> {
    let (ds, table) = load_inputs(&a.data, &a.embeddings, rc)?;
    let target = target_of(&a.target, rc)?;
    let seed = a.seed.or(rc.seed).unwrap_or(0);
    let folds = a.folds.or(rc.folds).unwrap_or(10);
    let repeats = a.repeats.or(rc.repeats).unwrap_or(64);
    if a.k_min == 0 || a.k_min > a.k_max {
        bail!("need 1 <= --k-min <= --k-max");
    }
    let base = a.ga.build(rc, None);
    let model = match a.model.or(rc.model).unwrap_or_default() {
        ModelChoice::Rf => ModelSpec::RandomForest(base.forest),
        ModelChoice::Gpr => ModelSpec::Gpr(GprConfig::default()),
    };
    let (x, targets) = featurize_dataset(&ds, &table, None, &target)?;
    let metric = match targets {
        Targets::Values(_) => Metric::Mae,
        Targets::Labels(_) => Metric::F1Weighted,
    };
    let mut evaluator = FitnessEvaluator::from_matrix(x.clone(), targets.clone(), &base, seed);
    let mut csv = String::from("k,columns,mean,std,folds,repeats\n");
    let mut entries = Vec::new();
    for k in a.k_min..=a.k_max.min(table.dim()) {
        let ga = GaConfig {
            subset_size: k,
            ..base.clone()
        };
        let report = run_ga(&mut evaluator, &ga, seed)?;
        let xs = x.select_columns(&report.best.columns);
        let cv = kfold_cv(
            &xs,
            &targets,
            &model,
            folds,
            repeats,
            &metric,
            seed,
            CvOptions {
                stratified: a.stratified,
            },
        )?;
        let cols: Vec<String> = report.best.columns.iter().map(|c| c.to_string()).collect();
        writeln!(csv, "{k},{},{},{},{folds},{repeats}", cols.join(";"), cv.mean, cv.std)?;
        entries.push(CvSweepEntry { k, ga: report, cv });
    }
    write_atomic(&rc.resolve_out(&a.out), csv.as_bytes())?;
    if let Some(p) = &a.json {
        write_json(&rc.resolve_out(p), &entries)?;
    }
    Ok(())
}

fn bo_cmd(a: &BoArgs, rc: &RunConfig) -> Result<()> {
    let env = a.env.build(rc)?;
    let ep = require(&a.embeddings, &rc.embeddings, "embeddings")?;
    let table = load_embedding_table(ep).with_context(|| format!("loading {}", ep.display()))?;
    let mut bo = rc.bo.clone().unwrap_or_default();
    if let Some(v) = a.init {
        bo.n_initial = v;
    }
    if let Some(v) = a.iters {
        bo.n_iterations = v;
    }
    if let Some(v) = a.trajectories {
        bo.n_trajectories = v;
    }
    if let Some(v) = a.pool {
        bo.pool_size = v;
    }
    let mut fom_cfg = match &rc.fom {
        Some(f) => f.clone(),
        None => default_fom(&env)?,
    };
    if fom_cfg.env != env.name {
        bail!("FOM configuration is for {}, environment is {}", fom_cfg.env, env.name);
    }
    match a.sma_mode {
        Some(SmaModeArg::OneMinusDeviation) => fom_cfg.sma_mode = SmaThirdTerm::OneMinusDeviation,
        Some(SmaModeArg::PaperLiteral) => fom_cfg.sma_mode = SmaThirdTerm::PaperLiteral,
        None => {}
    }
    let ga = a.ga.build(rc, a.k);
    let seed = a.seed.or(rc.seed).unwrap_or(0);
    let summary = run_parallel_bo(&env, &table, &fom_cfg, &bo, &ga, seed)?;
    write_atomic(&rc.resolve_out(&a.out_curve), summary_csv(&summary).as_bytes())?;
    if let Some(p) = &a.out_trajectories {
        write_atomic(&rc.resolve_out(p), trajectories_csv(&summary.trajectories).as_bytes())?;
    }
    if let Some(p) = &a.out_final {
        write_json(&rc.resolve_out(p), &summary.final_distribution())?;
    }
    Ok(())
}

fn analyze_cmd(a: &AnalyzeArgs, rc: &RunConfig) -> Result<()> {
    let ep = require(&a.embeddings, &rc.embeddings, "embeddings")?;
    let left = load_embedding_table(ep)?;
    let matrix = match a.mode {
        AnalyzeMode::Cosine => cosine_similarity_matrix(&left),
        AnalyzeMode::Pearson => {
            let right = match &a.other {
                Some(p) => load_embedding_table(p)?,
                None => left.clone(),
            };
            let shared: Vec<&String> = left.elements().iter().filter(|e| right.index_of(e).is_some()).collect();
            if shared.len() < 2 {
                bail!("tables share fewer than two elements");
            }
            let pick = |t: &EmbeddingTable, prefix: &str| {
                LabeledMatrix::new(
                    shared.iter().map(|e| e.to_string()).collect(),
                    (0..t.dim()).map(|j| format!("{prefix}{j}")).collect(),
                    shared
                        .iter()
                        .map(|e| t.get(e).expect("shared element").to_vec())
                        .collect(),
                )
            };
            let (pl, pr) = if a.other.is_some() { ("a", "b") } else { ("c", "c") };
            pearson_matrix(&pick(&left, pl)?, &pick(&right, pr)?)?
        }
    };
    for w in &matrix.warnings {
        eprintln!("warning: {w}");
    }
    write_atomic(&rc.resolve_out(&a.out), matrix.to_csv().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub mean: [f64; 2],
    pub std: [f64; 2],
    pub n: [usize; 2],
    pub t_statistic: f64,
    pub dof: f64,
    /// One-sided p-value for mean(a) > mean(b).
    pub p_greater: f64,
    pub p_two_sided: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub distributions: Vec<DistributionSummary>,
    pub comparisons: Vec<Comparison>,
    /// Column index to the number of GA reports that selected it.
    pub feature_frequency: BTreeMap<usize, usize>,
}

fn report_cmd(a: &ReportArgs, rc: &RunConfig) -> Result<()> {
    if a.bo.is_empty() && a.ga.is_empty() {
        bail!("report needs at least one --bo or --ga input");
    }
    let mut dists = Vec::new();
    for p in &a.bo {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let d: FinalDistribution = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        dists.push((p.display().to_string(), d.final_best));
    }
    let distributions = dists
        .iter()
        .map(|(name, v)| DistributionSummary {
            name: name.clone(),
            mean: stats::mean(v),
            std: stats::std_dev(v),
            n: v.len(),
        })
        .collect();
    let mut comparisons = Vec::new();
    for i in 0..dists.len() {
        for j in i + 1..dists.len() {
            let (a_, b_) = (&dists[i].1, &dists[j].1);
            let w = stats::welch_t_test(a_, b_);
            comparisons.push(Comparison {
                a: dists[i].0.clone(),
                b: dists[j].0.clone(),
                mean: [stats::mean(a_), stats::mean(b_)],
                std: [stats::std_dev(a_), stats::std_dev(b_)],
                n: [a_.len(), b_.len()],
                t_statistic: w.t_statistic,
                dof: w.dof,
                p_greater: w.p_greater,
                p_two_sided: w.p_two_sided,
            });
        }
    }
    let mut feature_frequency = BTreeMap::new();
    for p in &a.ga {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r: GaReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        for c in r.best.columns {
            *feature_frequency.entry(c).or_insert(0) += 1;
        }
    }
    write_json(
        &rc.resolve_out(&a.out),
        &Report {
            distributions,
            comparisons,
            feature_frequency,
        },
    )
}

fn dispatch(cli: &Cli) -> Result<()> {
    let rc = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::GenSynthetic(a) => gen_synthetic(a, &rc),
        Command::GenTable(a) => gen_table(a, &rc),
        Command::Featurize(a) => featurize_cmd(a, &rc),
        Command::Select(a) => select_cmd(a, &rc),
        Command::Cv(a) => cv_cmd(a, &rc),
        Command::Bo(a) => bo_cmd(a, &rc),
        Command::Analyze(a) => analyze_cmd(a, &rc),
        Command::Report(a) => report_cmd(a, &rc),
    }
}

/// Runs one command line and returns the process exit code: 0 on success,
/// 2 on a usage error, 1 on a runtime error.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_round_trips() {
        let rc = RunConfig {
            env: Some(EnvKind::Hea),
            seed: Some(7),
            ga: Some(GaConfig::desk(3)),
            bo: Some(BoConfig::default()),
            fom: Some(FomConfig::new(EnvKind::Sma, [1.0, 2.0, 3.0], Some(300.0))),
            model: Some(ModelChoice::Gpr),
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&rc.to_json()).unwrap();
        assert_eq!(back, rc);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_cli(["alloyembed", "frobnicate"]), 2);
        assert_eq!(
            run_cli([
                "alloyembed",
                "gen-synthetic",
                "--env",
                "nope",
                "--samples",
                "3",
                "--out",
                "x"
            ]),
            2
        );
        assert_eq!(run_cli(["alloyembed", "--help"]), 0);
    }

    #[test]
    fn runtime_errors_exit_1() {
        assert_eq!(
            run_cli([
                "alloyembed",
                "select",
                "--data",
                "/nonexistent.csv",
                "--embeddings",
                "/x.csv",
                "--target",
                "y",
                "--out",
                "/tmp/s.json"
            ]),
            1
        );
    }
}
