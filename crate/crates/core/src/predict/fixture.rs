//! Deterministic fixture predictor.
//!
//! A fixture file is a JSON map from canonical query key to a candidate
//! list in the wire schema:
//!
//! ```json
//! {"<hex key>": [{"object": "sink", "action": "wash hands",
//!                 "probability": 0.6, "duration_s": 12.0, "reasoning": "..."}]}
//! ```
//!
//! Keys are a hash of (scene-text version, past interactions, assumed
//! future) in a canonical form that ignores formatting, probabilities and
//! reasoning — see [`fixture_key`] — so fixtures stay valid when upstream
//! probability mass is rescaled by instance grounding.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{
    finish_candidates, CandidateRecord, InteractionCandidate, PastInteraction, PredictError,
    Predictor, PredictorConfig,
};
use crate::scene::SCENE_TEXT_VERSION;

/// Canonical key of a predictor query.
///
/// Covers the scene-text template version and the identity of every past
/// and assumed interaction (target, action, duration to 0.1 s). Candidate
/// probabilities and reasoning are deliberately excluded.
pub fn fixture_key(
    scene_text_version: &str,
    past: &[PastInteraction],
    assumed_future: &[InteractionCandidate],
) -> String {
    let mut canon = String::new();
    canon.push_str(scene_text_version);
    canon.push('\n');
    for p in past {
        canon.push_str(&format!("p|{}|{}|{:.1}\n", p.object, p.action, p.duration_s));
    }
    for c in assumed_future {
        canon.push_str(&format!(
            "f|{}|{}|{:.1}\n",
            c.target.as_str(),
            c.action,
            c.duration_s
        ));
    }
    let digest = Sha256::digest(canon.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Lookup-table predictor; referentially transparent and read-only after
/// load.
#[derive(Debug, Clone, Default)]
pub struct FixturePredictor {
    entries: HashMap<String, Vec<CandidateRecord>>,
}

impl FixturePredictor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: HashMap<String, Vec<CandidateRecord>>) -> Self {
        FixturePredictor { entries }
    }

    pub fn load(document: &str) -> Result<Self, PredictError> {
        let entries = serde_json::from_str(document).map_err(|e| PredictError::Format {
            detail: format!("fixture file is not a key -> candidate-list map: {e}"),
            raw: String::new(),
        })?;
        Ok(FixturePredictor { entries })
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self, PredictError> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| PredictError::Format {
                detail: format!("cannot read fixture file: {e}"),
                raw: String::new(),
            })?;
        Self::load(&text)
    }

    /// Register the response for one query (keyed under the current
    /// scene-text version).
    pub fn insert(
        &mut self,
        past: &[PastInteraction],
        assumed_future: &[InteractionCandidate],
        response: Vec<CandidateRecord>,
    ) {
        let key = fixture_key(SCENE_TEXT_VERSION, past, assumed_future);
        self.entries.insert(key, response);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("fixture serializes")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Predictor for FixturePredictor {
    fn predict_next(
        &self,
        _scene_text: &str,
        past: &[PastInteraction],
        assumed_future: &[InteractionCandidate],
        config: &PredictorConfig,
    ) -> Result<Vec<InteractionCandidate>, PredictError> {
        let key = fixture_key(SCENE_TEXT_VERSION, past, assumed_future);
        let records = self
            .entries
            .get(&key)
            .ok_or(PredictError::FixtureMiss { key })?;
        let candidates = records
            .iter()
            .cloned()
            .map(|r| r.into_candidate(config.granularity))
            .collect();
        finish_candidates(candidates, config.width, "<fixture>")
    }
}
