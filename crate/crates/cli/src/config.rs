//! Run configuration: defaults, TOML file, command-line overrides.
//!
//! Precedence is CLI > file > defaults. The file is plain TOML with the
//! same keys as the override flags.

use clap::Args;
use serde::{Deserialize, Serialize};

use trajcast::ctmc::DwellMode;
use trajcast::eval::EvalConfig;
use trajcast::predict::WireConfig;
use trajcast::scene::{DistanceMetric, Granularity};
use trajcast::tree::TreeParams;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Fixture,
    Wire,
}

/// All tunables of a run. Serialized into the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: Option<String>,
    pub predictor: PredictorKind,
    pub fixture: Option<String>,
    pub endpoint: String,
    pub model: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,

    pub granularity: Granularity,
    pub width: usize,
    pub depth: usize,
    pub instances_per_class: usize,
    pub max_segment_len: f64,
    pub euclidean_distance: bool,

    pub v_walk: f64,
    pub sigma: f64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub trajectory_count: usize,
    pub bo_ns: Vec<usize>,

    pub no_interaction_times: bool,
    pub deterministic_walk: bool,
    pub gt_semantic: bool,
    pub gt_instance: bool,
    pub squared_ade: bool,

    pub with_constant_velocity: bool,
    pub with_random_walk: bool,
    pub with_random_goal: bool,

    pub steady_threshold: f64,
    pub steady_t_max: f64,
    pub steady_dt: f64,

    pub jobs: usize,

    pub grid_step: f64,
    pub grid_time_step: f64,
    pub grid_margin: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: None,
            predictor: PredictorKind::Fixture,
            fixture: None,
            endpoint: String::new(),
            model: String::new(),
            timeout_s: 60.0,
            max_retries: 2,
            max_in_flight: 4,
            granularity: Granularity::Semantic,
            width: 6,
            depth: 2,
            instances_per_class: 3,
            max_segment_len: 1.0,
            euclidean_distance: false,
            v_walk: 1.4,
            sigma: 0.5,
            dt: 1.0,
            horizon: 60.0,
            seed: 7,
            trajectory_count: 20,
            bo_ns: vec![5, 20],
            no_interaction_times: false,
            deterministic_walk: false,
            gt_semantic: false,
            gt_instance: false,
            squared_ade: false,
            with_constant_velocity: true,
            with_random_walk: true,
            with_random_goal: true,
            steady_threshold: 0.5,
            steady_t_max: 300.0,
            steady_dt: 1.0,
            jobs: 0,
            grid_step: 0.5,
            grid_time_step: 10.0,
            grid_margin: 3.0,
        }
    }
}

impl RunConfig {
    pub fn load_file(path: &str) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file '{path}': {e}")))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config file '{path}' is invalid: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("v_walk", self.v_walk),
            ("sigma", self.sigma),
            ("dt", self.dt),
            ("horizon", self.horizon),
            ("max_segment_len", self.max_segment_len),
            ("timeout_s", self.timeout_s),
            ("steady_t_max", self.steady_t_max),
            ("steady_dt", self.steady_dt),
            ("grid_step", self.grid_step),
            ("grid_time_step", self.grid_time_step),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(CliError::Config(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.width == 0 || self.depth == 0 || self.instances_per_class == 0 {
            return Err(CliError::Config(
                "width, depth and instances_per_class must be at least 1".into(),
            ));
        }
        if self.trajectory_count == 0 || self.bo_ns.is_empty() || self.bo_ns.contains(&0) {
            return Err(CliError::Config(
                "trajectory_count and bo_ns entries must be at least 1".into(),
            ));
        }
        if self.gt_semantic && self.gt_instance {
            return Err(CliError::Config(
                "gt_semantic and gt_instance are mutually exclusive".into(),
            ));
        }
        if !(self.steady_threshold > 0.0 && self.steady_threshold < 1.0) {
            return Err(CliError::Config(
                "steady_threshold must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            width: self.width,
            depth: self.depth,
            instances_per_class: self.instances_per_class,
            granularity: self.granularity,
            max_segment_len: self.max_segment_len,
            distance_metric: if self.euclidean_distance {
                DistanceMetric::Euclidean
            } else {
                DistanceMetric::Geodesic
            },
        }
    }

    pub fn dwell_mode(&self) -> DwellMode {
        if self.no_interaction_times {
            DwellMode::Ignored
        } else {
            DwellMode::Predicted
        }
    }

    pub fn wire_config(&self) -> WireConfig {
        WireConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            timeout_s: self.timeout_s,
            max_retries: self.max_retries,
            max_in_flight: self.max_in_flight,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            tree: self.tree_params(),
            v_walk: self.v_walk,
            sigma: self.sigma,
            dt: self.dt,
            horizon: self.horizon,
            trajectory_count: self.trajectory_count,
            bo_ns: self.bo_ns.clone(),
            seed: self.seed,
            dwell: self.dwell_mode(),
            deterministic_walk: self.deterministic_walk,
            squared_ade: self.squared_ade,
            with_constant_velocity: self.with_constant_velocity,
            with_random_walk: self.with_random_walk,
            with_random_goal: self.with_random_goal,
            steady_threshold: self.steady_threshold,
            steady_t_max: self.steady_t_max,
            steady_dt: self.steady_dt,
            jobs: self.jobs,
        }
    }
}

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Scene-graph file.
    #[arg(long, global = true)]
    pub scene: Option<String>,
    /// Predictor backend: fixture or wire.
    #[arg(long, global = true, value_parser = parse_predictor)]
    pub predictor: Option<PredictorKind>,
    /// Fixture file for the fixture predictor.
    #[arg(long, global = true)]
    pub fixture: Option<String>,
    /// Chat-completion endpoint URL (wire predictor).
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Model name (wire predictor).
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Object reference granularity: semantic or instance.
    #[arg(long, global = true, value_parser = parse_granularity)]
    pub granularity: Option<Granularity>,
    /// Candidates kept per prediction.
    #[arg(long, global = true)]
    pub width: Option<usize>,
    /// Interaction depth of the tree.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Instances expanded per semantic class.
    #[arg(long, global = true)]
    pub instances_per_class: Option<usize>,
    /// Maximum path-segment length in meters.
    #[arg(long, global = true)]
    pub max_segment_len: Option<f64>,
    /// Rank instances by straight-line instead of geodesic distance.
    #[arg(long, global = true)]
    pub euclidean_distance: bool,
    /// Walking speed in m/s.
    #[arg(long, global = true)]
    pub v_walk: Option<f64>,
    /// Gaussian kernel width in meters.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Sampling step in seconds.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Prediction horizon in seconds.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Master random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trajectories extracted per record.
    #[arg(long, global = true)]
    pub trajectory_count: Option<usize>,
    /// Best-of-N values to report (repeatable).
    #[arg(long = "bo-n", global = true)]
    pub bo_n: Vec<usize>,
    /// Ablation: ignore interaction durations.
    #[arg(long, global = true)]
    pub no_interaction_times: bool,
    /// Ablation: evaluate by KDE over deterministic walks.
    #[arg(long, global = true)]
    pub deterministic_walk: bool,
    /// Oracle: reveal true future semantic classes.
    #[arg(long, global = true)]
    pub gt_semantic: bool,
    /// Oracle: reveal true future object instances.
    #[arg(long, global = true)]
    pub gt_instance: bool,
    /// Report mean squared displacement instead of mean displacement.
    #[arg(long, global = true)]
    pub squared_ade: bool,
    /// Skip all reference baselines.
    #[arg(long, global = true)]
    pub no_baselines: bool,
    /// Parallel worker threads (0 = automatic).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Density-grid cell size in meters.
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    /// Seconds between density-grid time slices.
    #[arg(long, global = true)]
    pub grid_time_step: Option<f64>,
}

fn parse_predictor(s: &str) -> Result<PredictorKind, String> {
    match s {
        "fixture" => Ok(PredictorKind::Fixture),
        "wire" => Ok(PredictorKind::Wire),
        other => Err(format!("unknown predictor '{other}' (fixture|wire)")),
    }
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    match s {
        "semantic" => Ok(Granularity::Semantic),
        "instance" => Ok(Granularity::Instance),
        other => Err(format!("unknown granularity '{other}' (semantic|instance)")),
    }
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { config.$field = v.clone(); })*
            };
        }
        set!(predictor, fixture, endpoint, model, granularity, width, depth);
        set!(instances_per_class, max_segment_len, v_walk, sigma, dt, horizon);
        set!(seed, trajectory_count, jobs, grid_step, grid_time_step);
        if let Some(scene) = &self.scene {
            config.scene = Some(scene.clone());
        }
        if !self.bo_n.is_empty() {
            config.bo_ns = self.bo_n.clone();
        }
        if self.euclidean_distance {
            config.euclidean_distance = true;
        }
        if self.no_interaction_times {
            config.no_interaction_times = true;
        }
        if self.deterministic_walk {
            config.deterministic_walk = true;
        }
        if self.gt_semantic {
            config.gt_semantic = true;
        }
        if self.gt_instance {
            config.gt_instance = true;
        }
        if self.squared_ade {
            config.squared_ade = true;
        }
        if self.no_baselines {
            config.with_constant_velocity = false;
            config.with_random_walk = false;
            config.with_random_goal = false;
        }
    }
}
