//! Trajectory records and the past/future split.
//!
//! A record file is a JSON document:
//!
//! ```json
//! {
//!   "scene": "home",
//!   "rate_hz": 10.0,
//!   "positions": [[0.0, 0.0], [0.1, 0.0]],
//!   "interactions": [
//!     {"object": "sink_1", "action": "wash hands", "t_start": 4.0, "t_end": 16.0}
//!   ]
//! }
//! ```
//!
//! Positions are sampled at the fixed rate starting at t = 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::Point2;
use crate::predict::PastInteraction;
use crate::scene::{Layer, NodeId, SceneGraph};

/// Observation horizon reserved at the end of a record when it has fewer
/// than two interactions ("60 s before the end").
const RESERVED_FUTURE_S: f64 = 60.0;

/// An annotated interaction interval within a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpan {
    pub object: NodeId,
    pub action: String,
    pub t_start: f64,
    pub t_end: f64,
}

impl InteractionSpan {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// A recorded trajectory with interaction annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Identifier used in reports; the loader fills it from the file stem.
    #[serde(default)]
    pub name: String,
    pub scene: String,
    pub rate_hz: f64,
    pub positions: Vec<[f64; 2]>,
    #[serde(default)]
    pub interactions: Vec<InteractionSpan>,
}

impl TrajectoryRecord {
    pub fn load(document: &str) -> Result<TrajectoryRecord, EvalError> {
        let record: TrajectoryRecord = serde_json::from_str(document)
            .map_err(|e| EvalError::Data(format!("record is not valid JSON: {e}")))?;
        record.validate()?;
        Ok(record)
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<TrajectoryRecord, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Data(format!("cannot read record {}: {e}", path.display())))?;
        let mut record = Self::load(&text)?;
        if record.name.is_empty() {
            record.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_default();
        }
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let fail = |msg: String| Err(EvalError::Data(msg));
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return fail(format!("rate_hz must be positive, got {}", self.rate_hz));
        }
        if self.positions.len() < 2 {
            return fail("record needs at least two positions".into());
        }
        if self
            .positions
            .iter()
            .any(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return fail("record has non-finite positions".into());
        }
        let duration = self.duration();
        let mut previous_end = f64::NEG_INFINITY;
        for span in &self.interactions {
            if !(span.t_start >= 0.0 && span.t_end > span.t_start && span.t_end <= duration + 1e-9)
            {
                return fail(format!(
                    "interaction '{}' has invalid interval [{}, {}] in a {duration:.1} s record",
                    span.object, span.t_start, span.t_end
                ));
            }
            if span.t_start < previous_end {
                return fail(format!(
                    "interaction '{}' overlaps the previous one",
                    span.object
                ));
            }
            previous_end = span.t_end;
        }
        Ok(())
    }

    /// Check all interaction objects exist in the scene.
    pub fn validate_against(&self, graph: &SceneGraph) -> Result<(), EvalError> {
        for span in &self.interactions {
            match graph.node(&span.object) {
                Some(node) if node.layer == Layer::Object => {}
                _ => {
                    return Err(EvalError::Data(format!(
                        "record '{}': interaction object '{}' is not in scene '{}'",
                        self.name, span.object, self.scene
                    )))
                }
            }
        }
        Ok(())
    }

    /// Total time span (positions are sampled at `rate_hz` from t = 0).
    pub fn duration(&self) -> f64 {
        (self.positions.len() - 1) as f64 / self.rate_hz
    }

    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.rate_hz
    }

    /// Linearly interpolated position at time `t` (clamped to the span).
    pub fn position_at(&self, t: f64) -> Point2 {
        let clamped = t.clamp(0.0, self.duration());
        let x = clamped * self.rate_hz;
        let idx = (x.floor() as usize).min(self.positions.len() - 1);
        let frac = x - idx as f64;
        let p0 = Point2::from(self.positions[idx]);
        if frac <= 0.0 || idx + 1 >= self.positions.len() {
            return p0;
        }
        p0.lerp(Point2::from(self.positions[idx + 1]), frac)
    }

    /// Split time: after the second interaction or `60 s` before the end,
    /// whichever comes first, clamped to the start of the record.
    pub fn split_time(&self) -> Result<f64, EvalError> {
        let duration = self.duration();
        let reserve = duration - RESERVED_FUTURE_S;
        let second_end = self.interactions.get(1).map(|s| s.t_end);
        let t_split = match second_end {
            Some(end) => end.min(reserve),
            None => {
                if reserve < 0.0 {
                    return Err(EvalError::Split(format!(
                        "record '{}' has {} interactions and only {duration:.1} s of data",
                        self.name,
                        self.interactions.len()
                    )));
                }
                reserve
            }
        };
        Ok(t_split.max(0.0))
    }

    /// Partition the record at the split time.
    pub fn split(&self) -> Result<Split, EvalError> {
        let t_split = self.split_time()?;
        let mut past_positions = Vec::new();
        let mut future_positions = Vec::new();
        for (i, p) in self.positions.iter().enumerate() {
            let t = self.time_of(i);
            if t <= t_split {
                past_positions.push((t, Point2::from(*p)));
            } else {
                future_positions.push((t - t_split, Point2::from(*p)));
            }
        }
        let mut past_interactions = Vec::new();
        let mut future_interactions = Vec::new();
        for span in &self.interactions {
            if span.t_start < t_split {
                // Started in the past; duration truncated at the split.
                let duration = (span.t_end.min(t_split) - span.t_start).max(1e-6);
                past_interactions.push(PastInteraction {
                    object: span.object.clone(),
                    action: span.action.clone(),
                    duration_s: duration,
                });
            } else {
                let mut shifted = span.clone();
                shifted.t_start -= t_split;
                shifted.t_end -= t_split;
                future_interactions.push(shifted);
            }
        }
        Ok(Split {
            t_split,
            start_position: self.position_at(t_split),
            past_positions,
            future_positions,
            past_interactions,
            future_interactions,
        })
    }

    /// Whether the split instant falls inside an interaction interval.
    pub fn interacting_at_split(&self) -> Result<bool, EvalError> {
        let t_split = self.split_time()?;
        Ok(self
            .interactions
            .iter()
            .any(|s| s.t_start <= t_split && t_split < s.t_end))
    }

    /// Length of the walked polyline between two times.
    pub fn traveled_distance(&self, from_t: f64, to_t: f64) -> f64 {
        let mut total = 0.0;
        let mut previous = self.position_at(from_t);
        let first = (from_t * self.rate_hz).ceil() as usize;
        let last = ((to_t * self.rate_hz).floor() as usize).min(self.positions.len() - 1);
        for i in first..=last {
            let p = Point2::from(self.positions[i]);
            total += previous.distance(p);
            previous = p;
        }
        total + previous.distance(self.position_at(to_t))
    }
}

/// Result of splitting a record at `t_split`.
#[derive(Debug, Clone)]
pub struct Split {
    pub t_split: f64,
    /// Agent position at the split instant (prediction start).
    pub start_position: Point2,
    /// `(t, position)` with absolute times `<= t_split`.
    pub past_positions: Vec<(f64, Point2)>,
    /// `(t, position)` with times relative to the split (`t > 0`).
    pub future_positions: Vec<(f64, Point2)>,
    pub past_interactions: Vec<PastInteraction>,
    /// Future interactions with times shifted so the split is t = 0.
    pub future_interactions: Vec<InteractionSpan>,
}

/// A set of records together with the scenes they refer to.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub scenes: BTreeMap<String, SceneGraph>,
    pub records: Vec<TrajectoryRecord>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scene(&mut self, graph: SceneGraph) {
        self.scenes.insert(graph.name().to_string(), graph);
    }

    pub fn add_record(&mut self, record: TrajectoryRecord) -> Result<(), EvalError> {
        record.validate()?;
        let graph = self.scenes.get(&record.scene).ok_or_else(|| {
            EvalError::Data(format!(
                "record '{}' references unknown scene '{}'",
                record.name, record.scene
            ))
        })?;
        record.validate_against(graph)?;
        self.records.push(record);
        Ok(())
    }

    /// Load one scene file plus every `*.json` record in a directory
    /// (sorted by file name for reproducible ordering).
    pub fn load(
        scene_path: impl AsRef<std::path::Path>,
        records_dir: impl AsRef<std::path::Path>,
    ) -> Result<Dataset, EvalError> {
        let mut dataset = Dataset::new();
        dataset.add_scene(SceneGraph::load_path(scene_path)?);
        let mut paths: Vec<_> = std::fs::read_dir(records_dir.as_ref())
            .map_err(|e| EvalError::Data(format!("cannot read records directory: {e}")))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        for path in paths {
            dataset.add_record(TrajectoryRecord::load_path(&path)?)?;
        }
        Ok(dataset)
    }

    pub fn scene_for(&self, record: &TrajectoryRecord) -> &SceneGraph {
        &self.scenes[&record.scene]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
