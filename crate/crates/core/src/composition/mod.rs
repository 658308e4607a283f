//! Compositions on the mole-fraction simplex, box-bounded design spaces and
//! seeded sampling.

mod synthetic;

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding;

pub use synthetic::{
    generate_synthetic_dataset, ground_truth, working_temperature, Bump, EnvKind, PropertyMap, PropertySurface,
    SyntheticEnvironment, DEFAULT_BUMPS,
};

/// Sum tolerance for a valid composition.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Bound/sum tolerance accepted by the sampler's projection.
pub const PROJECTION_TOLERANCE: f64 = 1e-12;
const PROJECTION_PASSES: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum CompositionError {
    #[error("{elements} elements but {fractions} fractions")]
    LengthMismatch { elements: usize, fractions: usize },
    #[error("fraction {value} for {element} is negative or not finite")]
    NegativeFraction { element: String, value: f64 },
    #[error("fractions sum to {sum}, not 1")]
    SumViolation { sum: f64 },
    #[error("infeasible space: {0}")]
    Infeasible(String),
    #[error("composition is outside the design space: {0}")]
    OutsideSpace(String),
}

/// Mole fractions over an ordered element list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    elements: Arc<[String]>,
    fractions: Vec<f64>,
}

impl Composition {
    /// Trusted constructor for callers that have already validated the row.
    pub(crate) fn from_validated(elements: Arc<[String]>, fractions: Vec<f64>) -> Self {
        debug_assert_eq!(elements.len(), fractions.len());
        Self { elements, fractions }
    }

    pub fn new(elements: Arc<[String]>, fractions: Vec<f64>) -> Result<Self, CompositionError> {
        validate(&elements, &fractions, false).map(|f| Self { elements, fractions: f })
    }

    /// Like [`Composition::new`] but rescales any positive total to one first.
    pub fn normalized(elements: Arc<[String]>, fractions: Vec<f64>) -> Result<Self, CompositionError> {
        validate(&elements, &fractions, true).map(|f| Self { elements, fractions: f })
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn element_list(&self) -> &Arc<[String]> {
        &self.elements
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn fraction_of(&self, symbol: &str) -> Option<f64> {
        self.elements
            .iter()
            .position(|e| e == symbol)
            .map(|i| self.fractions[i])
    }

    pub fn l1_distance(&self, other: &Composition) -> f64 {
        l1(&self.fractions, &other.fractions)
    }

    /// `alpha * self + (1 - alpha) * other`.
    pub fn blend(&self, other: &Composition, alpha: f64) -> Result<Composition, CompositionError> {
        if self.elements != other.elements {
            return Err(CompositionError::LengthMismatch {
                elements: self.elements.len(),
                fractions: other.elements.len(),
            });
        }
        let f = self
            .fractions
            .iter()
            .zip(&other.fractions)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        Composition::new(Arc::clone(&self.elements), f)
    }
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn validate(elements: &[String], fractions: &[f64], normalize: bool) -> Result<Vec<f64>, CompositionError> {
    if elements.len() != fractions.len() {
        return Err(CompositionError::LengthMismatch {
            elements: elements.len(),
            fractions: fractions.len(),
        });
    }
    for (e, &v) in elements.iter().zip(fractions) {
        if !v.is_finite() || v < 0.0 {
            return Err(CompositionError::NegativeFraction {
                element: e.clone(),
                value: v,
            });
        }
    }
    let mut out = fractions.to_vec();
    let mut sum: f64 = out.iter().sum();
    if normalize && sum > 0.0 {
        out.iter_mut().for_each(|v| *v /= sum);
        sum = out.iter().sum();
    }
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(CompositionError::SumViolation { sum });
    }
    if (sum - 1.0).abs() > PROJECTION_TOLERANCE {
        out.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

/// Validated composition from an element list and fractions.
pub fn make_composition(elements: &[String], fractions: &[f64]) -> Result<Composition, CompositionError> {
    Composition::new(elements.into(), fractions.to_vec())
}

/// Per-element bounds on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionSpace {
    elements: Arc<[String]>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl CompositionSpace {
    pub fn new(elements: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, CompositionError> {
        let n = elements.len();
        if n == 0 || lower.len() != n || upper.len() != n {
            return Err(CompositionError::Infeasible(format!(
                "{n} elements, {} lower and {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for i in 0..n {
            if !(0.0 <= lower[i] && lower[i] <= upper[i] && upper[i] <= 1.0) {
                return Err(CompositionError::Infeasible(format!(
                    "bounds for {} are [{}, {}]",
                    elements[i], lower[i], upper[i]
                )));
            }
        }
        let (sl, su): (f64, f64) = (lower.iter().sum(), upper.iter().sum());
        if sl > 1.0 + PROJECTION_TOLERANCE || su < 1.0 - PROJECTION_TOLERANCE {
            return Err(CompositionError::Infeasible(format!(
                "lower bounds sum to {sl}, upper bounds to {su}"
            )));
        }
        Ok(Self {
            elements: elements.into(),
            lower,
            upper,
        })
    }

    /// Every element free in [0, 1].
    pub fn unbounded(elements: Vec<String>) -> Result<Self, CompositionError> {
        let n = elements.len();
        Self::new(elements, vec![0.0; n], vec![1.0; n])
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn element_list(&self) -> &Arc<[String]> {
        &self.elements
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn contains(&self, c: &Composition) -> bool {
        c.elements() == self.elements() && self.contains_fractions(c.fractions())
    }

    pub fn contains_fractions(&self, f: &[f64]) -> bool {
        f.len() == self.dim()
            && f.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= lo - SUM_TOLERANCE && *v <= hi + SUM_TOLERANCE)
            && (f.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE
    }

    pub fn check(&self, c: &Composition) -> Result<(), CompositionError> {
        if c.elements() != self.elements() {
            return Err(CompositionError::OutsideSpace(format!(
                "elements {:?} differ from {:?}",
                c.elements(),
                self.elements()
            )));
        }
        if !self.contains_fractions(c.fractions()) {
            return Err(CompositionError::OutsideSpace(format!("{:?}", c.fractions())));
        }
        Ok(())
    }

    /// Moves `x` onto the bounded simplex: clip to the box, then shift the
    /// excess (or deficit) onto coordinates that still have room, in
    /// proportion to that room. Repeats until bounds and the unit sum hold
    /// within [`PROJECTION_TOLERANCE`].
    pub fn project(&self, x: &mut [f64]) {
        for _ in 0..PROJECTION_PASSES {
            for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
                *v = if v.is_nan() { *lo } else { v.clamp(*lo, *hi) };
            }
            let sum: f64 = x.iter().sum();
            let gap = sum - 1.0;
            if gap.abs() <= PROJECTION_TOLERANCE {
                return;
            }
            if gap > 0.0 {
                let room: f64 = x.iter().zip(&self.lower).map(|(v, lo)| v - lo).sum();
                if room <= 0.0 {
                    x.copy_from_slice(&self.lower);
                    return;
                }
                let keep = 1.0 - gap / room;
                for (v, lo) in x.iter_mut().zip(&self.lower) {
                    *v = lo + (*v - lo) * keep;
                }
            } else {
                let room: f64 = x.iter().zip(&self.upper).map(|(v, hi)| hi - v).sum();
                if room <= 0.0 {
                    x.copy_from_slice(&self.upper);
                    return;
                }
                let take = -gap / room;
                for (v, hi) in x.iter_mut().zip(&self.upper) {
                    *v += (hi - *v) * take;
                }
            }
        }
    }

    /// One point: Dirichlet(1, ..., 1) draw projected onto the bounds.
    pub fn sample_fractions<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.dim()).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= s);
        self.project(&mut x);
        x
    }

    pub(crate) fn composition_unchecked(&self, fractions: Vec<f64>) -> Composition {
        Composition::from_validated(Arc::clone(&self.elements), fractions)
    }
}

/// `n` seeded compositions inside `space`.
pub fn sample_random_compositions(
    space: &CompositionSpace,
    n: usize,
    seed: u64,
) -> Result<Vec<Composition>, CompositionError> {
    let mut rng = seeding::rng(seed);
    (0..n)
        .map(|_| {
            let f = space.sample_fractions(&mut rng);
            if space.contains_fractions(&f) {
                Ok(space.composition_unchecked(f))
            } else {
                Err(CompositionError::Infeasible(format!(
                    "projection did not converge: {f:?}"
                )))
            }
        })
        .collect()
}
