//! Seeded closed-form benchmark surfaces for the SMA, Ti and HEA design
//! problems.
//!
//! Each property is `baseline + sum_g amplitude_g * exp(-|c - center_g|^2 / (2 width_g^2))`
//! with the bump centers drawn inside the composition space.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{sample_random_compositions, Composition, CompositionError, CompositionSpace};
use crate::element_data::{Dataset, Sample};
use crate::seeding;

pub const DEFAULT_BUMPS: usize = 5;
const WIDTH_RANGE: (f64, f64) = (0.15, 0.35);
const AMPLITUDE_RANGE: (f64, f64) = (-0.3, 1.0);

pub type PropertyMap = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Sma,
    Ti,
    Hea,
}

/// (name, baseline, amplitude scale) per property.
type PropertySpec = (&'static str, f64, f64);

const SMA_PROPERTIES: [PropertySpec; 4] = [
    ("delta_h", 10.0, 10.0),
    ("delta_t", 15.0, 15.0),
    ("m_p", 280.0, 80.0),
    ("a_p", 300.0, 80.0),
];
const TI_PROPERTIES: [PropertySpec; 3] = [
    ("sigma_y", 700.0, 300.0),
    ("sigma_u", 850.0, 300.0),
    ("hardness", 280.0, 100.0),
];
const HEA_PROPERTIES: [PropertySpec; 3] = [
    ("sigma_y", 400.0, 400.0),
    ("sigma_u", 700.0, 400.0),
    ("elongation", 20.0, 20.0),
];

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Sma, EnvKind::Ti, EnvKind::Hea];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Sma => "sma",
            EnvKind::Ti => "ti",
            EnvKind::Hea => "hea",
        }
    }

    fn property_specs(self) -> &'static [PropertySpec] {
        match self {
            EnvKind::Sma => &SMA_PROPERTIES,
            EnvKind::Ti => &TI_PROPERTIES,
            EnvKind::Hea => &HEA_PROPERTIES,
        }
    }

    pub fn property_names(self) -> Vec<String> {
        self.property_specs().iter().map(|p| p.0.to_string()).collect()
    }

    /// Ten elements for SMA and HEA, eleven for Ti alloys.
    pub fn default_elements(self) -> Vec<String> {
        let list: &[&str] = match self {
            EnvKind::Sma => &["Ni", "Ti", "Cu", "Fe", "Pd", "Hf", "Zr", "Nb", "Co", "Cr"],
            EnvKind::Ti => &["Ti", "Al", "V", "Mo", "Nb", "Zr", "Sn", "Fe", "Cr", "Ta", "Si"],
            EnvKind::Hea => &["Co", "Cr", "Fe", "Ni", "Mn", "Al", "Cu", "Ti", "V", "Mo"],
        };
        list.iter().map(|s| s.to_string()).collect()
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sma" => Ok(EnvKind::Sma),
            "ti" => Ok(EnvKind::Ti),
            "hea" => Ok(EnvKind::Hea),
            other => Err(format!("unknown environment `{other}` (expected sma, ti or hea)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySurface {
    pub baseline: f64,
    pub bumps: Vec<Bump>,
}

impl PropertySurface {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.baseline
            + self
                .bumps
                .iter()
                .map(|b| {
                    let d2: f64 = x.iter().zip(&b.center).map(|(a, c)| (a - c) * (a - c)).sum();
                    b.amplitude * (-d2 / (2.0 * b.width * b.width)).exp()
                })
                .sum::<f64>()
    }
}

/// A deterministic stand-in for the experiment: `(name, seed)` fixes the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEnvironment {
    pub name: EnvKind,
    pub space: CompositionSpace,
    pub property_names: Vec<String>,
    pub seed: u64,
    /// Aligned with `property_names`.
    pub surfaces: Vec<PropertySurface>,
}

impl SyntheticEnvironment {
    /// Default elements, unit bounds, [`DEFAULT_BUMPS`] bumps per property.
    pub fn new(kind: EnvKind, seed: u64) -> Self {
        let space = CompositionSpace::unbounded(kind.default_elements()).expect("default space is feasible");
        Self::generate(kind, space, seed, DEFAULT_BUMPS)
    }

    pub fn generate(kind: EnvKind, space: CompositionSpace, seed: u64, bumps_per_property: usize) -> Self {
        let specs = kind.property_specs();
        let surfaces = specs
            .iter()
            .enumerate()
            .map(|(p, &(_, baseline, scale))| {
                let stream = seeding::derive(seed, p as u64);
                let centers = sample_random_compositions(&space, bumps_per_property, stream)
                    .expect("space validated at construction");
                let mut rng = seeding::rng(seeding::derive(stream, 0xB0B));
                let bumps = centers
                    .into_iter()
                    .map(|c| Bump {
                        center: c.fractions().to_vec(),
                        width: rng.random_range(WIDTH_RANGE.0..WIDTH_RANGE.1),
                        amplitude: scale * rng.random_range(AMPLITUDE_RANGE.0..AMPLITUDE_RANGE.1),
                    })
                    .collect();
                PropertySurface { baseline, bumps }
            })
            .collect();
        Self {
            name: kind,
            space,
            property_names: kind.property_names(),
            seed,
            surfaces,
        }
    }

    /// Same surface with every amplitude set to zero.
    pub fn flattened(mut self) -> Self {
        for s in &mut self.surfaces {
            for b in &mut s.bumps {
                b.amplitude = 0.0;
            }
        }
        self
    }

    pub fn baselines(&self) -> Vec<f64> {
        self.surfaces.iter().map(|s| s.baseline).collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.property_names != self.name.property_names() {
            return Err(format!(
                "{} environment needs properties {:?}, found {:?}",
                self.name,
                self.name.property_names(),
                self.property_names
            ));
        }
        if self.surfaces.len() != self.property_names.len() {
            return Err("one surface per property required".into());
        }
        for e in self.space.elements() {
            if !crate::elements::is_known(e) {
                return Err(format!("`{e}` is not an element symbol"));
            }
        }
        for s in &self.surfaces {
            if !s.baseline.is_finite() {
                return Err("non-finite baseline".into());
            }
            for b in &s.bumps {
                if b.center.len() != self.space.dim() {
                    return Err("bump center length differs from element count".into());
                }
                if !(b.width > 0.0 && b.width.is_finite()) || !b.amplitude.is_finite() {
                    return Err("bump widths must be positive and amplitudes finite".into());
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let env: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        env.validate()?;
        Ok(env)
    }

    /// Property values at raw fractions assumed to lie in the space.
    pub fn eval_fractions(&self, x: &[f64]) -> Vec<f64> {
        self.surfaces.iter().map(|s| s.eval(x)).collect()
    }
}

/// Working temperature: mean of the martensite and austenite peak temperatures.
pub fn working_temperature(m_p: f64, a_p: f64) -> f64 {
    0.5 * (m_p + a_p)
}

pub fn ground_truth(env: &SyntheticEnvironment, c: &Composition) -> Result<PropertyMap, CompositionError> {
    env.space.check(c)?;
    Ok(env
        .property_names
        .iter()
        .cloned()
        .zip(env.eval_fractions(c.fractions()))
        .collect())
}

/// `n` sampled compositions with ground-truth properties plus Gaussian noise
/// of standard deviation `noise_std` (absolute, in each property's units).
pub fn generate_synthetic_dataset(
    env: &SyntheticEnvironment,
    n: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset, crate::Error> {
    if n == 0 {
        return Err(crate::Error::Config("synthetic dataset needs n >= 1".into()));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(crate::Error::Config(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let comps = sample_random_compositions(&env.space, n, seeding::derive(seed, 0))?;
    let mut rng = seeding::rng(seeding::derive(seed, 1));
    let noise = Normal::new(0.0, noise_std).map_err(|e| crate::Error::Config(e.to_string()))?;
    let samples = comps
        .into_iter()
        .map(|c| {
            let mut properties = env.eval_fractions(c.fractions());
            if noise_std > 0.0 {
                for v in &mut properties {
                    *v += noise.sample(&mut rng);
                }
            }
            Sample {
                fractions: c.fractions().to_vec(),
                properties,
                label: None,
            }
        })
        .collect();
    Ok(Dataset::new(
        env.space.elements().to_vec(),
        env.property_names.clone(),
        samples,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn property_names_per_environment() {
        assert_eq!(EnvKind::Sma.property_names(), ["delta_h", "delta_t", "m_p", "a_p"]);
        assert_eq!(EnvKind::Ti.property_names(), ["sigma_y", "sigma_u", "hardness"]);
        assert_eq!(EnvKind::Hea.property_names(), ["sigma_y", "sigma_u", "elongation"]);
        assert_eq!(EnvKind::Ti.default_elements().len(), 11);
        assert_eq!("HEA".parse::<EnvKind>().unwrap(), EnvKind::Hea);
        assert!("steel".parse::<EnvKind>().is_err());
    }

    #[test]
    fn same_name_and_seed_same_surface() {
        assert_eq!(
            SyntheticEnvironment::new(EnvKind::Ti, 4),
            SyntheticEnvironment::new(EnvKind::Ti, 4)
        );
        assert_ne!(
            SyntheticEnvironment::new(EnvKind::Ti, 4),
            SyntheticEnvironment::new(EnvKind::Ti, 5)
        );
    }

    #[test]
    fn ground_truth_is_deterministic() {
        let env = SyntheticEnvironment::new(EnvKind::Sma, 1);
        let c = sample_random_compositions(&env.space, 1, 9).unwrap().remove(0);
        let a = ground_truth(&env, &c).unwrap();
        assert_eq!(a, ground_truth(&env, &c).unwrap());
        assert_eq!(a.len(), 4);
        assert!(a.values().all(|v| v.is_finite()));
    }

    #[test]
    fn flat_environment_returns_baselines() {
        let env = SyntheticEnvironment::new(EnvKind::Hea, 2).flattened();
        for c in sample_random_compositions(&env.space, 20, 3).unwrap() {
            let gt = ground_truth(&env, &c).unwrap();
            for (name, base) in env.property_names.iter().zip(env.baselines()) {
                assert_eq!(gt[name], base);
            }
        }
    }

    #[test]
    fn value_at_bump_center_matches_closed_form() {
        // Single bump: value at its center is exactly baseline + amplitude.
        let space = CompositionSpace::unbounded(EnvKind::Ti.default_elements()).unwrap();
        let env = SyntheticEnvironment::generate(EnvKind::Ti, space, 11, 1);
        for (p, surf) in env.surfaces.iter().enumerate() {
            let b = &surf.bumps[0];
            let c = Composition::new(env.space.element_list().clone(), b.center.clone()).unwrap();
            let gt = ground_truth(&env, &c).unwrap();
            let expected = surf.baseline + b.amplitude;
            assert!((gt[&env.property_names[p]] - expected).abs() < 1e-9 * expected.abs());
        }
        // Multi-bump: direct re-evaluation of the documented sum.
        let env = SyntheticEnvironment::new(EnvKind::Sma, 5);
        let c = sample_random_compositions(&env.space, 1, 1).unwrap().remove(0);
        let gt = ground_truth(&env, &c).unwrap();
        for (name, surf) in env.property_names.iter().zip(&env.surfaces) {
            let mut v = surf.baseline;
            for b in &surf.bumps {
                let mut d2 = 0.0;
                for i in 0..c.fractions().len() {
                    d2 += (c.fractions()[i] - b.center[i]).powi(2);
                }
                v += b.amplitude * (-d2 / (2.0 * b.width.powi(2))).exp();
            }
            assert!((gt[name] - v).abs() < 1e-9);
        }
    }

    #[test]
    fn outside_space_rejected() {
        let env = SyntheticEnvironment::new(EnvKind::Hea, 1);
        let c = Composition::new(vec!["Ni".to_string()].into(), vec![1.0]).unwrap();
        assert!(matches!(ground_truth(&env, &c), Err(CompositionError::OutsideSpace(_))));
    }

    #[test]
    fn ground_truth_is_continuous() {
        let env = SyntheticEnvironment::new(EnvKind::Hea, 8);
        let base = sample_random_compositions(&env.space, 1, 2).unwrap().remove(0);
        let x0 = base.fractions().to_vec();
        let f0 = env.eval_fractions(&x0);
        let mut prev = f64::INFINITY;
        for k in 1..8 {
            let eps = 10f64.powi(-k);
            let mut x = x0.clone();
            // move mass between the two largest components
            x[0] += eps * x0[1];
            x[1] -= eps * x0[1];
            let f = env.eval_fractions(&x);
            let diff = f.iter().zip(&f0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff <= prev + 1e-12);
            prev = diff;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn json_round_trip() {
        let env = SyntheticEnvironment::new(EnvKind::Sma, 3);
        let back = SyntheticEnvironment::from_json(&env.to_json()).unwrap();
        assert_eq!(back, env);
        let mut bad = env.clone();
        bad.property_names.pop();
        assert!(SyntheticEnvironment::from_json(&bad.to_json()).is_err());
    }

    #[test]
    fn zero_noise_dataset_is_exact() {
        let env = SyntheticEnvironment::new(EnvKind::Ti, 1);
        let ds = generate_synthetic_dataset(&env, 30, 0.0, 4).unwrap();
        for i in 0..ds.len() {
            let gt = ground_truth(&env, &ds.composition(i)).unwrap();
            for (j, name) in ds.property_names().iter().enumerate() {
                assert_eq!(ds.samples()[i].properties[j], gt[name]);
            }
        }
        assert_eq!(ds, generate_synthetic_dataset(&env, 30, 0.0, 4).unwrap());
    }

    #[test]
    fn seeded_dataset_is_reproducible() {
        let env = SyntheticEnvironment::new(EnvKind::Hea, 1);
        let a = generate_synthetic_dataset(&env, 100, 2.0, 9).unwrap();
        assert_eq!(a, generate_synthetic_dataset(&env, 100, 2.0, 9).unwrap());
    }

    #[test]
    fn noise_has_requested_std() {
        let env = SyntheticEnvironment::new(EnvKind::Hea, 1);
        let noise_std = 3.0;
        let ds = generate_synthetic_dataset(&env, 10_000, noise_std, 12).unwrap();
        let mut resid = Vec::new();
        for i in 0..ds.len() {
            let truth = env.eval_fractions(&ds.samples()[i].fractions);
            resid.push(ds.samples()[i].properties[0] - truth[0]);
        }
        let n = resid.len() as f64;
        let m = resid.iter().sum::<f64>() / n;
        let sd = (resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - noise_std).abs() / noise_std < 0.05, "{sd}");
    }
}
