//! Interaction prediction: candidate next interactions with probabilities
//! and durations.
//!
//! A [`Predictor`] maps (scene text, past interactions, assumed future so
//! far) to a list of [`InteractionCandidate`]s. Three implementations:
//!
//! * [`FixturePredictor`] — deterministic lookup table keyed on a canonical
//!   hash of the query; used for tests and offline runs.
//! * [`WireClient`] — generic chat-completion client speaking JSON over
//!   HTTP; the model is configuration.
//! * [`SequencePredictor`] — scripted oracle returning a fixed interaction
//!   sequence with probability 1 (ground-truth evaluation modes).
//!
//! Semantic-class candidates are grounded to object instances with
//! [`ground_semantic`], which splits each candidate's probability mass over
//! the closest instances by inverse distance.

mod fixture;
mod prompt;
mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixture::{fixture_key, FixturePredictor};
pub use prompt::{build_prompt, parse_response, PROMPT_VERSION};
pub use wire::{WireClient, WireConfig};

use crate::scene::{DistanceMetric, Granularity, NodeId, SceneGraph};

/// Distances below this are clamped before inverse-distance weighting,
/// which is otherwise undefined when the agent stands at the object.
pub const MIN_INSTANCE_DISTANCE_M: f64 = 0.5;

/// An observed interaction of the person with an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PastInteraction {
    pub object: NodeId,
    pub action: String,
    pub duration_s: f64,
}

impl PastInteraction {
    pub fn new(object: impl Into<NodeId>, action: &str, duration_s: f64) -> Self {
        PastInteraction {
            object: object.into(),
            action: action.to_string(),
            duration_s,
        }
    }
}

/// What a candidate interaction refers to, depending on granularity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    /// A semantic class, to be resolved to instances by proximity.
    Class(String),
    /// A concrete object instance.
    Instance(NodeId),
}

impl Target {
    pub fn as_str(&self) -> &str {
        match self {
            Target::Class(s) => s,
            Target::Instance(id) => id.as_str(),
        }
    }
}

/// A predicted next interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionCandidate {
    pub target: Target,
    pub action: String,
    /// Likelihood of this interaction happening next, in (0, 1]. Candidates
    /// of one prediction need not sum to 1; normalization happens when the
    /// interaction tree branches.
    pub probability: f64,
    /// Estimated duration of the interaction, seconds, > 0.
    pub duration_s: f64,
    pub reasoning: String,
}

/// Predictor-facing configuration. Wire transport settings live in
/// [`WireConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub granularity: Granularity,
    /// Maximum number of candidates per prediction (branching width).
    pub width: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            granularity: Granularity::Semantic,
            width: 6,
        }
    }
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("predictor transport failed after {attempts} attempt(s): {detail}")]
    Transport { detail: String, attempts: u32 },
    #[error("prediction output invalid: {detail}")]
    Format { detail: String, raw: String },
    #[error("fixture has no entry for key {key}")]
    FixtureMiss { key: String },
    #[error("invalid predictor argument: {0}")]
    Argument(String),
}

/// Produces candidate next interactions. Implementations must be safe for
/// concurrent calls: tree expansion issues sibling-branch queries in
/// parallel.
pub trait Predictor: Send + Sync {
    fn predict_next(
        &self,
        scene_text: &str,
        past: &[PastInteraction],
        assumed_future: &[InteractionCandidate],
        config: &PredictorConfig,
    ) -> Result<Vec<InteractionCandidate>, PredictError>;
}

/// Serialized candidate, as it appears on the wire and in fixture files:
/// `{"object": ..., "action": ..., "probability": ..., "duration_s": ...,
/// "reasoning": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub object: String,
    pub action: String,
    pub probability: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub reasoning: String,
}

impl CandidateRecord {
    pub fn into_candidate(self, granularity: Granularity) -> InteractionCandidate {
        let target = match granularity {
            Granularity::Semantic => Target::Class(self.object),
            Granularity::Instance => Target::Instance(NodeId(self.object)),
        };
        InteractionCandidate {
            target,
            action: self.action,
            probability: self.probability,
            duration_s: self.duration_s,
            reasoning: self.reasoning,
        }
    }

    pub fn from_candidate(c: &InteractionCandidate) -> CandidateRecord {
        CandidateRecord {
            object: c.target.as_str().to_string(),
            action: c.action.clone(),
            probability: c.probability,
            duration_s: c.duration_s,
            reasoning: c.reasoning.clone(),
        }
    }
}

/// Reject candidates outside the contract: probability in (0, 1], positive
/// finite duration, non-empty target and action.
pub(crate) fn validate_candidates(
    candidates: &[InteractionCandidate],
    raw: &str,
) -> Result<(), PredictError> {
    for c in candidates {
        let fail = |detail: String| PredictError::Format {
            detail,
            raw: raw.to_string(),
        };
        if !(c.probability > 0.0 && c.probability <= 1.0) || !c.probability.is_finite() {
            return Err(fail(format!(
                "probability {} of '{}' outside (0, 1]",
                c.probability,
                c.target.as_str()
            )));
        }
        if !(c.duration_s > 0.0) || !c.duration_s.is_finite() {
            return Err(fail(format!(
                "duration {} of '{}' must be positive",
                c.duration_s,
                c.target.as_str()
            )));
        }
        if c.target.as_str().is_empty() || c.action.is_empty() {
            return Err(fail("empty object or action".to_string()));
        }
    }
    Ok(())
}

/// Validate, order by descending probability, and truncate to the
/// configured width. Over-generation keeps the most likely candidates.
pub(crate) fn finish_candidates(
    mut candidates: Vec<InteractionCandidate>,
    width: usize,
    raw: &str,
) -> Result<Vec<InteractionCandidate>, PredictError> {
    validate_candidates(&candidates, raw)?;
    if candidates.is_empty() {
        return Err(PredictError::Format {
            detail: "prediction contained no candidates".to_string(),
            raw: raw.to_string(),
        });
    }
    candidates.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    candidates.truncate(width.max(1));
    Ok(candidates)
}

/// Result of grounding semantic candidates to instances.
#[derive(Debug, Clone, Default)]
pub struct Grounding {
    pub candidates: Vec<InteractionCandidate>,
    /// One entry per dropped candidate (class absent from the scene).
    pub warnings: Vec<String>,
}

/// Expand semantic-class candidates to object instances.
///
/// Each candidate of class `s` with likelihood `p` becomes up to `n_s`
/// instance candidates over the closest instances of `s`, weighted by
/// inverse distance: `w_j = p * (1/d_j) / sum_k (1/d_k)` with distances
/// clamped below at [`MIN_INSTANCE_DISTANCE_M`]. Action, duration, and
/// reasoning are copied. Candidates whose class is absent are dropped with
/// a warning. The per-candidate probability mass is preserved.
pub fn ground_semantic(
    candidates: &[InteractionCandidate],
    graph: &SceneGraph,
    from: &NodeId,
    n_s: usize,
    metric: DistanceMetric,
) -> Result<Grounding, PredictError> {
    if n_s == 0 {
        return Err(PredictError::Argument("n_s must be at least 1".into()));
    }
    let mut out = Grounding::default();
    for candidate in candidates {
        let class = match &candidate.target {
            Target::Class(s) => s,
            Target::Instance(id) => {
                return Err(PredictError::Argument(format!(
                    "ground_semantic expects semantic candidates, got instance '{id}'"
                )));
            }
        };
        let instances = graph
            .k_nearest_instances(class, from, n_s, metric)
            .map_err(|e| PredictError::Argument(e.to_string()))?;
        if instances.is_empty() {
            out.warnings
                .push(format!("class '{class}' absent from scene; candidate dropped"));
            continue;
        }
        let inverse: Vec<f64> = instances
            .iter()
            .map(|(_, d)| 1.0 / d.max(MIN_INSTANCE_DISTANCE_M))
            .collect();
        let denominator: f64 = inverse.iter().sum();
        for ((object, _), inv) in instances.into_iter().zip(inverse) {
            out.candidates.push(InteractionCandidate {
                target: Target::Instance(object),
                action: candidate.action.clone(),
                probability: candidate.probability * (inv / denominator),
                duration_s: candidate.duration_s,
                reasoning: candidate.reasoning.clone(),
            });
        }
    }
    Ok(out)
}

/// Scripted predictor: plays back a fixed interaction sequence, one step
/// per call, each with probability 1. Backs the ground-truth oracle
/// evaluation modes.
#[derive(Debug, Clone)]
pub struct SequencePredictor {
    script: Vec<InteractionCandidate>,
}

impl SequencePredictor {
    pub fn new(script: Vec<InteractionCandidate>) -> Self {
        SequencePredictor { script }
    }
}

impl Predictor for SequencePredictor {
    fn predict_next(
        &self,
        _scene_text: &str,
        _past: &[PastInteraction],
        assumed_future: &[InteractionCandidate],
        config: &PredictorConfig,
    ) -> Result<Vec<InteractionCandidate>, PredictError> {
        let step = assumed_future.len();
        match self.script.get(step) {
            Some(candidate) => finish_candidates(vec![candidate.clone()], config.width, ""),
            None => Err(PredictError::FixtureMiss {
                key: format!("sequence step {step} (script has {})", self.script.len()),
            }),
        }
    }
}

#[cfg(test)]
mod tests;
