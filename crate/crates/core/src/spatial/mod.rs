//! Spatial concept model: a mixture that ties place words, detected object
//! labels and 2D position regions together through a latent concept index.
//!
//! Generative structure (per observation session `t`):
//!
//! ```text
//! C_t ~ Cat(pi)
//! i_t ~ Cat(phi[C_t])          region index
//! x_t ~ N(mu[i_t], Sigma[i_t]) position
//! w   ~ Cat(W[C_t])            each place word
//! o   ~ Cat(xi[C_t])           each object label
//! ```
//!
//! The two cross-modal queries sum the concept index out:
//! [`SpatialConceptModel::word_posterior`] gives `P(w | i)` and
//! [`SpatialConceptModel::object_location_posterior`] gives `P(i | o)`.

mod gaussian;
mod learn;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gaussian::{gaussian_log_density, Mat2, Vec2};
pub use learn::{learn_fixed_lag, learn_fixed_lag_with_vocab};

/// Tolerance used when validating categorical parameters.
pub const CATEGORICAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("region index {index} out of range (model has {len} regions)")]
    RegionOutOfRange { index: usize, len: usize },
    #[error("unknown object label `{0}`")]
    UnknownObject(String),
    #[error("unknown place word `{0}`")]
    UnknownWord(String),
    #[error("no usable sessions to learn from")]
    NoSessions,
    #[error("sessions contain no {0}; the corresponding vocabulary would be empty")]
    EmptyVocabulary(&'static str),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model json: {0}")]
    Json(String),
}

/// Priors and filter settings for [`learn_fixed_lag`].
///
/// Concentrations are per-component (symmetric Dirichlet). `v0` is the
/// inverse-Wishart scale matrix of the region covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub chi: f64,
    pub m0: Vec2,
    pub kappa: f64,
    pub v0: Mat2,
    pub nu0: f64,
    /// Stored for completeness; the fixed-K learner does not read it.
    pub lambda_aux: f64,
    pub num_particles: usize,
    pub lag_window: usize,
    pub num_concepts: usize,
    pub num_regions: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            gamma: 0.5,
            beta: 0.1,
            chi: 0.1,
            m0: [0.0, 0.0],
            kappa: 1.0,
            v0: [[2.0, 0.0], [0.0, 2.0]],
            nu0: 3.0,
            lambda_aux: 0.1,
            num_particles: 30,
            lag_window: 10,
            num_concepts: 5,
            num_regions: 5,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), SpatialError> {
        let bad = |msg: &str| Err(SpatialError::InvalidHyperparameters(msg.to_string()));
        for (name, v) in [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("chi", self.chi),
            ("kappa", self.kappa),
            ("lambda_aux", self.lambda_aux),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SpatialError::InvalidHyperparameters(format!(
                    "{name} must be a positive finite number, got {v}"
                )));
            }
        }
        if !(self.nu0 > 1.0) {
            return bad("nu0 must exceed 1");
        }
        if !gaussian::is_spd(&self.v0) {
            return bad("v0 must be symmetric positive-definite");
        }
        if !(self.m0[0].is_finite() && self.m0[1].is_finite()) {
            return bad("m0 must be finite");
        }
        if self.num_particles == 0 {
            return bad("num_particles must be at least 1");
        }
        if self.lag_window == 0 {
            return bad("lag_window must be at least 1");
        }
        if self.num_concepts == 0 || self.num_regions == 0 {
            return bad("num_concepts and num_regions must be at least 1");
        }
        Ok(())
    }
}

/// One observation session: where the robot stood, what it detected and
/// what it heard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub position: Vec2,
    #[serde(default)]
    pub object_labels: Vec<String>,
    #[serde(default)]
    pub place_words: Vec<String>,
    /// Ground-truth room, for evaluation only. The learner ignores it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub word_dist: Vec<f64>,
    pub object_dist: Vec<f64>,
    pub region_dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub mean: Vec2,
    pub covariance: Mat2,
    /// Number of sessions assigned to this region during learning.
    #[serde(default)]
    pub observations: usize,
}

/// A normalized distribution plus a flag raised when the evidence summed to
/// zero and a uniform fallback was returned.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub probs: Vec<f64>,
    pub zero_evidence: bool,
}

impl Posterior {
    fn from_unnormalized(mut joint: Vec<f64>) -> Self {
        let total: f64 = joint.iter().sum();
        if total > 0.0 && total.is_finite() {
            for p in &mut joint {
                *p /= total;
            }
            Posterior { probs: joint, zero_evidence: false }
        } else {
            let n = joint.len();
            Posterior { probs: vec![1.0 / n as f64; n], zero_evidence: true }
        }
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn is_categorical(p: &[f64], tol: f64) -> bool {
    !p.is_empty()
        && p.iter().all(|v| *v >= 0.0 && v.is_finite())
        && (p.iter().sum::<f64>() - 1.0).abs() <= tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialConceptModel {
    pub vocab_places: Vec<String>,
    pub vocab_objects: Vec<String>,
    pub pi: Vec<f64>,
    pub concepts: Vec<Concept>,
    pub regions: Vec<Region>,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl SpatialConceptModel {
    /// Checks every structural invariant: shapes agree with the vocabularies,
    /// every categorical sums to one and every covariance is SPD.
    pub fn validate(&self) -> Result<(), SpatialError> {
        let bad = |msg: String| Err(SpatialError::InvalidModel(msg));
        let k = self.concepts.len();
        let r = self.regions.len();
        if k == 0 || r == 0 {
            return bad("model needs at least one concept and one region".into());
        }
        if self.pi.len() != k || !is_categorical(&self.pi, CATEGORICAL_TOL) {
            return bad("pi must be a categorical over concepts".into());
        }
        for (l, c) in self.concepts.iter().enumerate() {
            if c.word_dist.len() != self.vocab_places.len()
                || !is_categorical(&c.word_dist, CATEGORICAL_TOL)
            {
                return bad(format!("concept {l}: word_dist is not a categorical over place words"));
            }
            if c.object_dist.len() != self.vocab_objects.len()
                || !is_categorical(&c.object_dist, CATEGORICAL_TOL)
            {
                return bad(format!("concept {l}: object_dist is not a categorical over objects"));
            }
            if c.region_dist.len() != r || !is_categorical(&c.region_dist, CATEGORICAL_TOL) {
                return bad(format!("concept {l}: region_dist is not a categorical over regions"));
            }
        }
        for (i, reg) in self.regions.iter().enumerate() {
            if !gaussian::is_spd(&reg.covariance) {
                return bad(format!("region {i}: covariance is not symmetric positive-definite"));
            }
            if !(reg.mean[0].is_finite() && reg.mean[1].is_finite()) {
                return bad(format!("region {i}: mean is not finite"));
            }
        }
        Ok(())
    }

    pub fn num_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn object_index(&self, label: &str) -> Result<usize, SpatialError> {
        self.vocab_objects
            .iter()
            .position(|o| o == label)
            .ok_or_else(|| SpatialError::UnknownObject(label.to_string()))
    }

    pub fn word_index(&self, word: &str) -> Result<usize, SpatialError> {
        self.vocab_places
            .iter()
            .position(|w| w == word)
            .ok_or_else(|| SpatialError::UnknownWord(word.to_string()))
    }

    /// `P(w | i) ∝ Σ_C W_C(w) φ_C(i) π_C`, over the place vocabulary.
    pub fn word_posterior(&self, region: usize) -> Result<Posterior, SpatialError> {
        if region >= self.regions.len() {
            return Err(SpatialError::RegionOutOfRange { index: region, len: self.regions.len() });
        }
        let mut joint = vec![0.0; self.vocab_places.len()];
        for (c, concept) in self.concepts.iter().enumerate() {
            let weight = concept.region_dist[region] * self.pi[c];
            if weight == 0.0 {
                continue;
            }
            for (j, w) in concept.word_dist.iter().enumerate() {
                joint[j] += w * weight;
            }
        }
        Ok(Posterior::from_unnormalized(joint))
    }

    /// `P(i | o) ∝ Σ_C φ_C(i) ξ_C(o) π_C`, over region indices.
    pub fn object_location_posterior(&self, object: &str) -> Result<Posterior, SpatialError> {
        let o = self.object_index(object)?;
        let mut joint = vec![0.0; self.regions.len()];
        for (c, concept) in self.concepts.iter().enumerate() {
            let weight = concept.object_dist[o] * self.pi[c];
            if weight == 0.0 {
                continue;
            }
            for (i, phi) in concept.region_dist.iter().enumerate() {
                joint[i] += phi * weight;
            }
        }
        Ok(Posterior::from_unnormalized(joint))
    }

    /// Region whose Gaussian density at `position` is largest.
    pub fn assign_region(&self, position: Vec2) -> usize {
        let mut best = 0;
        let mut best_ll = f64::NEG_INFINITY;
        for (i, reg) in self.regions.iter().enumerate() {
            let ll = gaussian_log_density(position, reg.mean, &reg.covariance);
            if ll > best_ll {
                best_ll = ll;
                best = i;
            }
        }
        best
    }

    /// Majority room hint among `sessions` falling in each region. Regions
    /// that no hinted session maps to get `None`.
    pub fn region_labels(&self, sessions: &[Session]) -> Vec<Option<String>> {
        let mut votes: Vec<indexmap::IndexMap<&str, usize>> =
            vec![Default::default(); self.regions.len()];
        for s in sessions {
            if let Some(room) = s.room_hint.as_deref() {
                *votes[self.assign_region(s.position)].entry(room).or_default() += 1;
            }
        }
        votes
            .into_iter()
            .map(|v| {
                let mut best: Option<(&str, usize)> = None;
                for (room, n) in v {
                    if best.is_none_or(|(_, m)| n > m) {
                        best = Some((room, n));
                    }
                }
                best.map(|(room, _)| room.to_string())
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, SpatialError> {
        serde_json::to_string_pretty(self).map_err(|e| SpatialError::Json(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, SpatialError> {
        let model: Self =
            serde_json::from_str(text).map_err(|e| SpatialError::Json(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}
