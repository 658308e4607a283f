//! Figures of merit combining normalized properties of each environment.

use serde::{Deserialize, Serialize};

use super::BoError;
use crate::composition::{sample_random_compositions, working_temperature, EnvKind, PropertyMap, SyntheticEnvironment};
use crate::{seeding, stats};

/// Samples used to derive default normalizers.
pub const NORMALIZER_SAMPLES: usize = 10_000;
pub const NORMALIZER_PERCENTILE: f64 = 90.0;

/// How the working-temperature term of the SMA figure of merit is computed
/// from `dev = |T_w - T_target|`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmaThirdTerm {
    /// `1 - dev / T_wN`
    #[default]
    OneMinusDeviation,
    /// `T_wN - dev / T_wN`
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomConfig {
    pub env: EnvKind,
    /// sma: `[dH_N, dT_N, T_wN]`; ti: `[sigma_y_N, sigma_u_N, hardness_N]`;
    /// hea: `[sigma_y_N, sigma_u_N, elongation_N]`.
    pub normalizers: [f64; 3],
    /// Target working temperature in kelvin (sma only).
    #[serde(default)]
    pub target_temperature: Option<f64>,
    #[serde(default)]
    pub sma_mode: SmaThirdTerm,
    /// Per-term multipliers; a negative weight flips a term.
    #[serde(default = "unit_weights")]
    pub weights: [f64; 3],
}

fn unit_weights() -> [f64; 3] {
    [1.0; 3]
}

fn positive_or_one(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v
    } else {
        1.0
    }
}

impl FomConfig {
    pub fn new(env: EnvKind, normalizers: [f64; 3], target_temperature: Option<f64>) -> Self {
        Self {
            env,
            normalizers,
            target_temperature,
            sma_mode: SmaThirdTerm::default(),
            weights: unit_weights(),
        }
    }

    /// Normalizers at the 90th percentile of 10^4 seeded ground-truth
    /// samples. For sma the target temperature is the 90th percentile of
    /// `T_w` and `T_wN` the 90th percentile of `|T_w - T_target|`.
    /// A non-positive percentile falls back to 1.
    pub fn default_for(env: &SyntheticEnvironment, seed: u64) -> Result<Self, BoError> {
        let comps = sample_random_compositions(&env.space, NORMALIZER_SAMPLES, seed)?;
        let values: Vec<Vec<f64>> = comps.iter().map(|c| env.eval_fractions(c.fractions())).collect();
        let column = |j: usize| values.iter().map(|v| v[j]).collect::<Vec<f64>>();
        let p = |xs: &[f64]| stats::percentile(xs, NORMALIZER_PERCENTILE);
        match env.name {
            EnvKind::Sma => {
                let tw: Vec<f64> = values.iter().map(|v| working_temperature(v[2], v[3])).collect();
                let target = p(&tw);
                let dev: Vec<f64> = tw.iter().map(|t| (t - target).abs()).collect();
                Ok(Self::new(
                    EnvKind::Sma,
                    [
                        positive_or_one(p(&column(0))),
                        positive_or_one(p(&column(1))),
                        positive_or_one(p(&dev)),
                    ],
                    Some(target),
                ))
            }
            kind => Ok(Self::new(
                kind,
                [
                    positive_or_one(p(&column(0))),
                    positive_or_one(p(&column(1))),
                    positive_or_one(p(&column(2))),
                ],
                None,
            )),
        }
    }

    pub fn validate(&self) -> Result<(), BoError> {
        if self.normalizers.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(BoError::Config(format!(
                "normalizers must be finite and positive, got {:?}",
                self.normalizers
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(BoError::Config("weights must be finite".into()));
        }
        if self.env == EnvKind::Sma && !self.target_temperature.is_some_and(f64::is_finite) {
            return Err(BoError::Config("sma needs a finite target_temperature".into()));
        }
        Ok(())
    }
}

fn lookup(props: &PropertyMap, name: &str) -> Result<f64, BoError> {
    match props.get(name) {
        Some(v) if v.is_finite() => Ok(*v),
        Some(v) => Err(BoError::Property(format!("property {name} is not finite ({v})"))),
        None => Err(BoError::Property(format!("missing property {name}"))),
    }
}

pub fn fom(cfg: &FomConfig, props: &PropertyMap) -> Result<f64, BoError> {
    cfg.validate()?;
    let [n0, n1, n2] = cfg.normalizers;
    let [w0, w1, w2] = cfg.weights;
    let names = cfg.env.property_names();
    let terms = match cfg.env {
        EnvKind::Sma => {
            let dh = lookup(props, &names[0])?;
            let dt = lookup(props, &names[1])?;
            let tw = working_temperature(lookup(props, &names[2])?, lookup(props, &names[3])?);
            let dev = (tw - cfg.target_temperature.unwrap_or_default()).abs();
            let third = match cfg.sma_mode {
                SmaThirdTerm::OneMinusDeviation => 1.0 - dev / n2,
                SmaThirdTerm::PaperLiteral => n2 - dev / n2,
            };
            [dh / n0, dt / n1, third]
        }
        _ => [
            lookup(props, &names[0])? / n0,
            lookup(props, &names[1])? / n1,
            lookup(props, &names[2])? / n2,
        ],
    };
    Ok((w0 * terms[0] + w1 * terms[1] + w2 * terms[2]) / 3.0)
}

/// Seeded normalizers for `env`, derived from its own seed.
pub fn default_fom(env: &SyntheticEnvironment) -> Result<FomConfig, BoError> {
    FomConfig::default_for(env, seeding::derive(env.seed, 0xf0))
}
