//! Per-record evaluation pipeline and aggregation across a dataset.

use rayon::prelude::*;
use serde::Serialize;

use super::baselines::{baseline_constant_velocity, baseline_random_goal, baseline_random_walk};
use super::metrics::{
    bon_ade, interaction_top10_accuracy, nll_kde, nll_mixture, AccuracyHits, AdeTable, NllCurve,
    Window,
};
use super::record::{Dataset, TrajectoryRecord};
use super::EvalError;
use crate::ctmc::{build_generator_with, DwellMode};
use crate::predict::{InteractionCandidate, Predictor, SequencePredictor, Target};
use crate::scene::Granularity;
use crate::spatial::{top_trajectories, SpatioTemporalDistribution, TrajectoryMode, TrajectoryParams};
use crate::tree::{build_tree, ground_paths, TreeParams};

/// Method row labels used in reports.
pub const METHOD_CTMC: &str = "ctmc";
pub const METHOD_DETERMINISTIC: &str = "deterministic_walk";
pub const METHOD_CONST_VELOCITY: &str = "constant_velocity";
pub const METHOD_RANDOM_WALK: &str = "random_walk";
pub const METHOD_RANDOM_GOAL: &str = "random_goal";

/// Who produces interaction candidates during evaluation.
#[derive(Clone, Copy)]
pub enum PredictorChoice<'a> {
    /// A fixture or wire predictor shared across records.
    External(&'a dyn Predictor),
    /// Oracle that plays back the record's true future interactions
    /// (instance granularity) with probability 1.
    GtInstance,
    /// Oracle that reveals only the true semantic classes; instances are
    /// resolved spatially like ordinary semantic predictions.
    GtSemantic,
}

/// Evaluation configuration; all values are recorded in the run manifest.
#[derive(Debug, Clone, Serialize)]
pub struct EvalConfig {
    pub tree: TreeParams,
    pub v_walk: f64,
    pub sigma: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Trajectories extracted per record (the largest Best-of-N).
    pub trajectory_count: usize,
    /// Best-of-N rows to report.
    pub bo_ns: Vec<usize>,
    pub seed: u64,
    /// `Ignored` disables interaction dwell everywhere (ablation).
    #[serde(serialize_with = "serialize_dwell")]
    pub dwell: DwellMode,
    /// Evaluate the engine by KDE over its expected-walk trajectories
    /// instead of the chain mixture (ablation).
    pub deterministic_walk: bool,
    /// Average squared displacements in ADE instead of plain meters.
    pub squared_ade: bool,
    pub with_constant_velocity: bool,
    pub with_random_walk: bool,
    pub with_random_goal: bool,
    pub steady_threshold: f64,
    pub steady_t_max: f64,
    pub steady_dt: f64,
    /// Worker threads for record-level parallelism; 0 = default.
    pub jobs: usize,
}

fn serialize_dwell<S: serde::Serializer>(d: &DwellMode, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match d {
        DwellMode::Predicted => "predicted",
        DwellMode::Ignored => "ignored",
    })
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tree: TreeParams::default(),
            v_walk: 1.4,
            sigma: 0.5,
            dt: 1.0,
            horizon: 60.0,
            trajectory_count: 20,
            bo_ns: vec![5, 20],
            seed: 7,
            dwell: DwellMode::Predicted,
            deterministic_walk: false,
            squared_ade: false,
            with_constant_velocity: true,
            with_random_walk: true,
            with_random_goal: true,
            steady_threshold: 0.5,
            steady_t_max: 300.0,
            steady_dt: 1.0,
            jobs: 0,
        }
    }
}

/// Metrics of one method on one record.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: &'static str,
    pub nll: NllCurve,
    pub ades: Vec<AdeTable>,
}

/// Everything measured on one record.
#[derive(Debug, Clone)]
pub struct RecordEvaluation {
    pub record: String,
    pub outcomes: Vec<MethodOutcome>,
    pub accuracy: AccuracyHits,
    pub steady_horizon: Option<f64>,
    pub warnings: Vec<String>,
}

/// Dataset-level results plus per-record detail.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub evaluations: Vec<RecordEvaluation>,
    /// Records that could not be evaluated, with the reason.
    pub failures: Vec<(String, String)>,
    pub windows: Vec<Window>,
    pub config: EvalConfig,
    pub subset: Option<String>,
}

/// Evaluate every record of a dataset (in parallel up to `config.jobs`).
/// Per-record failures are collected, not fatal.
pub fn evaluate_dataset(
    dataset: &Dataset,
    choice: PredictorChoice<'_>,
    config: &EvalConfig,
    windows: &[Window],
    subset: Option<String>,
) -> MetricsReport {
    let run = |records: &[TrajectoryRecord]| -> Vec<(String, Result<RecordEvaluation, EvalError>)> {
        records
            .par_iter()
            .map(|r| {
                (
                    r.name.clone(),
                    evaluate_record(dataset, r, choice, config, windows),
                )
            })
            .collect()
    };
    let results = if config.jobs > 0 {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
        {
            Ok(pool) => pool.install(|| run(&dataset.records)),
            Err(_) => run(&dataset.records),
        }
    } else {
        run(&dataset.records)
    };

    let mut evaluations = Vec::new();
    let mut failures = Vec::new();
    for (name, result) in results {
        match result {
            Ok(evaluation) => evaluations.push(evaluation),
            Err(e) => failures.push((name, e.to_string())),
        }
    }
    MetricsReport {
        evaluations,
        failures,
        windows: windows.to_vec(),
        config: config.clone(),
        subset,
    }
}

/// Run the full pipeline and all metrics on one record.
pub fn evaluate_record(
    dataset: &Dataset,
    record: &TrajectoryRecord,
    choice: PredictorChoice<'_>,
    config: &EvalConfig,
    windows: &[Window],
) -> Result<RecordEvaluation, EvalError> {
    let graph = dataset.scene_for(record);
    let split = record.split()?;
    if split.future_positions.is_empty() {
        return Err(EvalError::Data(format!(
            "record '{}' has no future samples after the split",
            record.name
        )));
    }
    let gt = &split.future_positions;

    // Oracle predictors replay the record's own future; their depth is
    // capped by how many future interactions exist.
    let mut params = config.tree.clone();
    let oracle: Option<SequencePredictor> = match choice {
        PredictorChoice::External(_) => None,
        PredictorChoice::GtInstance | PredictorChoice::GtSemantic => {
            let semantic = matches!(choice, PredictorChoice::GtSemantic);
            params.granularity = if semantic {
                Granularity::Semantic
            } else {
                Granularity::Instance
            };
            let script: Vec<InteractionCandidate> = split
                .future_interactions
                .iter()
                .map(|span| {
                    let target = if semantic {
                        Target::Class(
                            graph
                                .node(&span.object)
                                .and_then(|n| n.semantic_class.clone())
                                .unwrap_or_default(),
                        )
                    } else {
                        Target::Instance(span.object.clone())
                    };
                    InteractionCandidate {
                        target,
                        action: span.action.clone(),
                        probability: 1.0,
                        duration_s: span.duration().max(1e-3),
                        reasoning: String::new(),
                    }
                })
                .collect();
            if script.is_empty() {
                return Err(EvalError::Data(format!(
                    "record '{}' has no future interactions for the oracle",
                    record.name
                )));
            }
            params.depth = params.depth.min(script.len());
            Some(SequencePredictor::new(script))
        }
    };
    let predictor: &dyn Predictor = match (&oracle, choice) {
        (Some(o), _) => o,
        (None, PredictorChoice::External(p)) => p,
        _ => unreachable!(),
    };

    let tree = build_tree(
        graph,
        predictor,
        split.start_position,
        &split.past_interactions,
        &params,
    )?;
    let mut warnings: Vec<String> = tree.warnings().to_vec();
    let accuracy = interaction_top10_accuracy(&tree, graph, &split.future_interactions);
    let grounded = ground_paths(tree, graph, params.max_segment_len)?;
    let ctmc = build_generator_with(&grounded, config.v_walk, config.dwell)?;
    let steady_horizon =
        ctmc.horizon_of_meaning(config.steady_threshold, config.steady_t_max, config.steady_dt)?;

    let count = config
        .trajectory_count
        .max(config.bo_ns.iter().copied().max().unwrap_or(1));
    let trajectories = top_trajectories(
        &grounded,
        &ctmc,
        &TrajectoryParams {
            count,
            dt: config.dt,
            horizon: config.horizon,
            mode: TrajectoryMode::Expected,
            dwell: config.dwell,
        },
    )?;

    let mut outcomes = Vec::new();
    let engine_nll = if config.deterministic_walk {
        nll_kde(&trajectories, gt, config.dt, config.horizon, windows)?
    } else {
        let distribution = SpatioTemporalDistribution::new(ctmc.clone(), &grounded, config.sigma)?;
        nll_mixture(&distribution, gt, config.dt, config.horizon, windows)?
    };
    let engine_ades = config
        .bo_ns
        .iter()
        .map(|&n| bon_ade(&trajectories, gt, n, windows, config.squared_ade))
        .collect::<Result<Vec<AdeTable>, EvalError>>()?;
    outcomes.push(MethodOutcome {
        method: if config.deterministic_walk {
            METHOD_DETERMINISTIC
        } else {
            METHOD_CTMC
        },
        nll: engine_nll,
        ades: engine_ades,
    });

    let record_seed = config.seed ^ fnv1a(record.name.as_bytes());
    if config.with_constant_velocity {
        let past_relative: Vec<(f64, crate::geometry::Point2)> = split
            .past_positions
            .iter()
            .map(|&(t, p)| (t - split.t_split, p))
            .collect();
        let trajectory = baseline_constant_velocity(&past_relative, config.horizon, config.dt)?;
        outcomes.push(method_outcome(
            METHOD_CONST_VELOCITY,
            std::slice::from_ref(&trajectory),
            gt,
            config,
            windows,
        )?);
    }
    if config.with_random_walk {
        let walks = baseline_random_walk(
            graph,
            split.start_position,
            config.horizon,
            config.dt,
            count,
            config.v_walk,
            record_seed,
        )?;
        outcomes.push(method_outcome(METHOD_RANDOM_WALK, &walks, gt, config, windows)?);
    }
    if config.with_random_goal {
        let walks = baseline_random_goal(
            graph,
            split.start_position,
            config.horizon,
            config.dt,
            count,
            config.v_walk,
            record_seed.wrapping_add(1),
        )?;
        outcomes.push(method_outcome(METHOD_RANDOM_GOAL, &walks, gt, config, windows)?);
    }

    if !grounded.warnings().is_empty() {
        warnings.extend(grounded.warnings().iter().cloned());
    }
    Ok(RecordEvaluation {
        record: record.name.clone(),
        outcomes,
        accuracy,
        steady_horizon,
        warnings,
    })
}

fn method_outcome(
    method: &'static str,
    trajectories: &[crate::spatial::DiscreteTrajectory],
    gt: &[(f64, crate::geometry::Point2)],
    config: &EvalConfig,
    windows: &[Window],
) -> Result<MethodOutcome, EvalError> {
    let nll = nll_kde(trajectories, gt, config.dt, config.horizon, windows)?;
    let ades = config
        .bo_ns
        .iter()
        .map(|&n| bon_ade(trajectories, gt, n, windows, config.squared_ade))
        .collect::<Result<Vec<AdeTable>, EvalError>>()?;
    Ok(MethodOutcome {
        method,
        nll,
        ades,
    })
}

/// Stable 64-bit FNV-1a hash (record-level seed derivation must not depend
/// on the standard library's hasher, which may change between releases).
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl MetricsReport {
    /// Methods present, in first-seen order.
    pub fn methods(&self) -> Vec<&'static str> {
        let mut methods = Vec::new();
        for evaluation in &self.evaluations {
            for outcome in &evaluation.outcomes {
                if !methods.contains(&outcome.method) {
                    methods.push(outcome.method);
                }
            }
        }
        methods
    }

    /// Mean/std/count of the NLL per evaluation time for one method.
    pub fn nll_curve(&self, method: &str) -> Vec<(f64, f64, f64, usize)> {
        let mut by_step: std::collections::BTreeMap<i64, Vec<f64>> = Default::default();
        for evaluation in &self.evaluations {
            for outcome in evaluation.outcomes.iter().filter(|o| o.method == method) {
                for (t, v) in outcome.nll.times.iter().zip(&outcome.nll.values) {
                    by_step
                        .entry((t / self.config.dt).round() as i64)
                        .or_default()
                        .push(*v);
                }
            }
        }
        by_step
            .into_iter()
            .map(|(step, values)| {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                (
                    step as f64 * self.config.dt,
                    mean,
                    var.sqrt(),
                    values.len(),
                )
            })
            .collect()
    }

    /// Mean windowed NLL rows: (method, window, mean, records).
    pub fn windowed_nll(&self) -> Vec<(String, Window, f64, usize)> {
        let mut rows = Vec::new();
        for method in self.methods() {
            for (w_idx, window) in self.windows.iter().enumerate() {
                let values: Vec<f64> = self
                    .evaluations
                    .iter()
                    .flat_map(|e| e.outcomes.iter().filter(|o| o.method == method))
                    .filter_map(|o| o.nll.windowed.get(w_idx).and_then(|(_, v)| *v))
                    .collect();
                if !values.is_empty() {
                    rows.push((
                        method.to_string(),
                        *window,
                        values.iter().sum::<f64>() / values.len() as f64,
                        values.len(),
                    ));
                }
            }
        }
        rows
    }

    /// Mean ADE rows: (method, n, window, mean, records).
    pub fn ade_rows(&self) -> Vec<(String, usize, Window, f64, usize)> {
        let mut rows = Vec::new();
        for method in self.methods() {
            for &n in &self.config.bo_ns {
                for (w_idx, window) in self.windows.iter().enumerate() {
                    let values: Vec<f64> = self
                        .evaluations
                        .iter()
                        .flat_map(|e| e.outcomes.iter().filter(|o| o.method == method))
                        .flat_map(|o| o.ades.iter().filter(|a| a.n == n))
                        .filter_map(|a| a.windows.get(w_idx).and_then(|(_, v)| *v))
                        .collect();
                    if !values.is_empty() {
                        rows.push((
                            method.to_string(),
                            n,
                            *window,
                            values.iter().sum::<f64>() / values.len() as f64,
                            values.len(),
                        ));
                    }
                }
            }
        }
        rows
    }

    /// Accuracy ratios: (interaction slot, granularity, hits, total).
    pub fn accuracy_rows(&self) -> Vec<(&'static str, &'static str, usize, usize)> {
        let pick = |f: fn(&AccuracyHits) -> Option<bool>| {
            let outcomes: Vec<bool> = self
                .evaluations
                .iter()
                .filter_map(|e| f(&e.accuracy))
                .collect();
            (
                outcomes.iter().filter(|&&hit| hit).count(),
                outcomes.len(),
            )
        };
        let (h1i, t1i) = pick(|a| a.first_instance);
        let (h1s, t1s) = pick(|a| a.first_semantic);
        let (h2i, t2i) = pick(|a| a.second_instance);
        let (h2s, t2s) = pick(|a| a.second_semantic);
        vec![
            ("first", "instance", h1i, t1i),
            ("first", "semantic", h1s, t1s),
            ("second", "instance", h2i, t2i),
            ("second", "semantic", h2s, t2s),
        ]
    }

    /// Steady-state horizons: per-record values and their mean.
    pub fn horizon_rows(&self) -> (Vec<(String, Option<f64>)>, Option<f64>) {
        let rows: Vec<(String, Option<f64>)> = self
            .evaluations
            .iter()
            .map(|e| (e.record.clone(), e.steady_horizon))
            .collect();
        let reached: Vec<f64> = rows.iter().filter_map(|(_, h)| *h).collect();
        let mean = if reached.is_empty() {
            None
        } else {
            Some(reached.iter().sum::<f64>() / reached.len() as f64)
        };
        (rows, mean)
    }
}
