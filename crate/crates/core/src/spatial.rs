//! Continuous spatial densities and discrete representative trajectories.
//!
//! The evolved chain distribution turns into a density over the floor
//! plane as a mixture of isotropic Gaussians, one per state, weighted by
//! `P(x(t))`. Discrete trajectories walk the tree either deterministically
//! (expected traversal and dwell times, used for Best-of-N evaluation) or
//! by sampling the underlying stochastic process.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ctmc::{Ctmc, CtmcError, DwellMode};
use crate::geometry::Point2;
use crate::tree::{InteractionTree, TreeNodeId, TreeNodeKind};

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("invalid spatial argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Ctmc(#[from] CtmcError),
}

/// Gaussian-mixture density over space, evolving in time with the chain.
#[derive(Debug, Clone)]
pub struct SpatioTemporalDistribution {
    ctmc: Ctmc,
    /// Kernel center per state, aligned with the chain's state order.
    positions: Vec<Point2>,
    /// Kernel width (standard deviation), meters.
    sigma: f64,
}

impl SpatioTemporalDistribution {
    pub fn new(
        ctmc: Ctmc,
        tree: &InteractionTree,
        sigma: f64,
    ) -> Result<SpatioTemporalDistribution, SpatialError> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(SpatialError::Argument(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        let positions: Vec<Point2> = ctmc
            .state_nodes()
            .iter()
            .map(|&id| tree.node(id).position)
            .collect();
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(SpatialError::Argument(
                "state positions must be finite".into(),
            ));
        }
        Ok(SpatioTemporalDistribution {
            ctmc,
            positions,
            sigma,
        })
    }

    pub fn ctmc(&self) -> &Ctmc {
        &self.ctmc
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn positions(&self) -> &[Point2] {
        &self.positions
    }

    /// Probability density (1/m^2) at `xy` and time `t`. Mixture weights
    /// are exactly the evolved chain distribution at `t`.
    pub fn density(&self, xy: Point2, t: f64) -> Result<f64, SpatialError> {
        let weights = self.ctmc.distribution_at(t)?;
        Ok(self.density_with_weights(&weights.p, xy))
    }

    /// Chain distribution used as mixture weights at time `t`.
    pub fn weights_at(&self, t: f64) -> Result<Vec<f64>, SpatialError> {
        Ok(self.ctmc.distribution_at(t)?.p)
    }

    /// Evaluate the mixture for externally supplied weights (one pass over
    /// a precomputed time slice).
    pub fn density_with_weights(&self, weights: &[f64], xy: Point2) -> f64 {
        let norm = 1.0 / (2.0 * std::f64::consts::PI * self.sigma * self.sigma);
        let inv_two_sigma_sq = 1.0 / (2.0 * self.sigma * self.sigma);
        weights
            .iter()
            .zip(&self.positions)
            .map(|(&w, center)| {
                if w == 0.0 {
                    return 0.0;
                }
                let dx = xy.x - center.x;
                let dy = xy.y - center.y;
                w * norm * (-(dx * dx + dy * dy) * inv_two_sigma_sq).exp()
            })
            .sum()
    }

    /// Write a density grid as CSV (`x,y,t,density` header, row-major:
    /// time slice, then y rows, then x columns).
    pub fn export_density_grid<W: Write>(
        &self,
        writer: &mut W,
        grid: &GridSpec,
    ) -> Result<(), SpatialError> {
        if !(grid.step > 0.0) {
            return Err(SpatialError::Argument("grid step must be positive".into()));
        }
        writeln!(writer, "x,y,t,density").map_err(io_error)?;
        let nx = ((grid.x_max - grid.x_min) / grid.step).floor() as usize + 1;
        let ny = ((grid.y_max - grid.y_min) / grid.step).floor() as usize + 1;
        for &t in &grid.times {
            let weights = self.weights_at(t)?;
            for iy in 0..ny {
                let y = grid.y_min + iy as f64 * grid.step;
                for ix in 0..nx {
                    let x = grid.x_min + ix as f64 * grid.step;
                    let d = self.density_with_weights(&weights, Point2::new(x, y));
                    writeln!(writer, "{x},{y},{t},{d:e}").map_err(io_error)?;
                }
            }
        }
        Ok(())
    }
}

fn io_error(e: std::io::Error) -> SpatialError {
    SpatialError::Argument(format!("grid export failed: {e}"))
}

/// Rectangular evaluation grid and time slices for density export.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub step: f64,
    pub times: Vec<f64>,
}

impl GridSpec {
    /// Grid covering all mixture positions with a margin on every side.
    pub fn covering(dist: &SpatioTemporalDistribution, margin: f64, step: f64, times: Vec<f64>) -> GridSpec {
        let xs = dist.positions.iter().map(|p| p.x);
        let ys = dist.positions.iter().map(|p| p.y);
        let x_min = xs.clone().fold(f64::INFINITY, f64::min) - margin;
        let x_max = xs.fold(f64::NEG_INFINITY, f64::max) + margin;
        let y_min = ys.clone().fold(f64::INFINITY, f64::min) - margin;
        let y_max = ys.fold(f64::NEG_INFINITY, f64::max) + margin;
        GridSpec {
            x_min,
            x_max,
            y_min,
            y_max,
            step,
            times,
        }
    }
}

/// A trajectory sampled on a fixed time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrajectory {
    /// `(t, position)` pairs at constant spacing `dt`, starting at t = 0.
    pub samples: Vec<(f64, Point2)>,
    pub dt: f64,
    /// Probability of the underlying interaction sequence (or 1/n for
    /// sampled trajectories).
    pub weight: f64,
}

impl DiscreteTrajectory {
    /// Position at time `t` (nearest sample at or before `t`, linear
    /// interpolation between samples, final position beyond the end).
    pub fn position_at(&self, t: f64) -> Option<Point2> {
        if self.samples.is_empty() || t < 0.0 {
            return None;
        }
        let idx = (t / self.dt).floor() as usize;
        if idx + 1 >= self.samples.len() {
            return self.samples.last().map(|&(_, p)| p);
        }
        let (t0, p0) = self.samples[idx];
        let (t1, p1) = self.samples[idx + 1];
        Some(p0.lerp(p1, (t - t0) / (t1 - t0)))
    }
}

/// How representative trajectories are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryMode {
    /// The n most likely leaf sequences, walked at expected speeds and
    /// dwell times.
    Expected,
    /// n sequences drawn by branch probability with exponential traversal
    /// and sojourn times.
    Sampled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryParams {
    pub count: usize,
    pub dt: f64,
    pub horizon: f64,
    pub mode: TrajectoryMode,
    pub dwell: DwellMode,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        TrajectoryParams {
            count: 20,
            dt: 1.0,
            horizon: 60.0,
            mode: TrajectoryMode::Expected,
            dwell: DwellMode::Predicted,
        }
    }
}

/// Extract representative trajectories from a grounded tree.
///
/// Expected mode ranks leaf sequences by joint probability and walks each
/// at `v_walk`, dwelling exactly the predicted duration at every
/// interaction; if fewer than `count` sequences exist all are returned.
/// Sampled mode draws sequences and exponential times from a seeded
/// generator and is bit-reproducible for a fixed seed.
pub fn top_trajectories(
    tree: &InteractionTree,
    ctmc: &Ctmc,
    params: &TrajectoryParams,
) -> Result<Vec<DiscreteTrajectory>, SpatialError> {
    if params.count == 0 {
        return Err(SpatialError::Argument("count must be at least 1".into()));
    }
    if !(params.dt > 0.0) || !(params.horizon >= 0.0) {
        return Err(SpatialError::Argument(
            "dt must be positive and horizon non-negative".into(),
        ));
    }
    match params.mode {
        TrajectoryMode::Expected => {
            let sequences = tree.enumerate_sequences();
            Ok(sequences
                .iter()
                .take(params.count)
                .map(|seq| {
                    let timeline = expected_timeline(tree, seq.interactions.last(), ctmc.v_walk(), params.dwell);
                    DiscreteTrajectory {
                        samples: sample_timeline(&timeline, params.dt, params.horizon),
                        dt: params.dt,
                        weight: seq.probability,
                    }
                })
                .collect())
        }
        TrajectoryMode::Sampled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weight = 1.0 / params.count as f64;
            Ok((0..params.count)
                .map(|_| {
                    let timeline = sampled_timeline(tree, ctmc.v_walk(), params.dwell, &mut rng);
                    DiscreteTrajectory {
                        samples: sample_timeline(&timeline, params.dt, params.horizon),
                        dt: params.dt,
                        weight,
                    }
                })
                .collect())
        }
    }
}

/// The non-probabilistic ablation arm: identical trajectories to expected
/// mode; likelihoods over them are evaluated with a per-timestep KDE
/// instead of the chain mixture.
pub fn deterministic_walk_distribution(
    tree: &InteractionTree,
    ctmc: &Ctmc,
    count: usize,
    dt: f64,
    horizon: f64,
    dwell: DwellMode,
) -> Result<Vec<DiscreteTrajectory>, SpatialError> {
    top_trajectories(
        tree,
        ctmc,
        &TrajectoryParams {
            count,
            dt,
            horizon,
            mode: TrajectoryMode::Expected,
            dwell,
        },
    )
}

/// Piecewise-linear motion: breakpoints of (time, position). Repeated
/// positions encode dwells.
type Timeline = Vec<(f64, Point2)>;

/// Timeline of the branch ending at `leaf`, with deterministic times.
fn expected_timeline(
    tree: &InteractionTree,
    leaf: Option<&TreeNodeId>,
    v_walk: f64,
    dwell: DwellMode,
) -> Timeline {
    let path = match leaf {
        Some(&leaf) => root_path(tree, leaf),
        None => vec![tree.root()],
    };
    build_timeline(tree, &path, |mean| mean, v_walk, dwell)
}

/// Timeline of one random walk down the tree.
fn sampled_timeline(
    tree: &InteractionTree,
    v_walk: f64,
    dwell: DwellMode,
    rng: &mut ChaCha8Rng,
) -> Timeline {
    let mut path = vec![tree.root()];
    let mut cursor = tree.root();
    loop {
        let children = &tree.node(cursor).children;
        if children.is_empty() {
            break;
        }
        let pick = if children.len() == 1 {
            children[0]
        } else {
            let mut draw: f64 = rng.gen();
            let mut chosen = *children.last().unwrap();
            for &c in children {
                let q = tree.branch_probability(c);
                if draw < q {
                    chosen = c;
                    break;
                }
                draw -= q;
            }
            chosen
        };
        path.push(pick);
        cursor = pick;
    }
    let exponential = |mean: f64, rng: &mut ChaCha8Rng| -> f64 {
        let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        -u.ln() * mean
    };
    build_timeline(tree, &path, |mean| exponential(mean, rng), v_walk, dwell)
}

fn root_path(tree: &InteractionTree, leaf: TreeNodeId) -> Vec<TreeNodeId> {
    let mut path = Vec::new();
    let mut cur = Some(leaf);
    while let Some(c) = cur {
        path.push(c);
        cur = tree.node(c).parent;
    }
    path.reverse();
    path
}

/// Walk a root-to-leaf node path, turning segment traversals and dwells
/// into timeline breakpoints. `draw` maps a mean duration to the realized
/// duration (identity for expected mode, exponential for sampling).
fn build_timeline(
    tree: &InteractionTree,
    path: &[TreeNodeId],
    mut draw: impl FnMut(f64) -> f64,
    v_walk: f64,
    dwell: DwellMode,
) -> Timeline {
    let mut timeline = vec![(0.0, tree.node(path[0]).position)];
    let mut clock = 0.0;
    for window in path.windows(2) {
        let (from, to) = (tree.node(window[0]), tree.node(window[1]));
        let distance = from.position.distance(to.position);
        if distance > 0.0 {
            clock += draw(distance / v_walk);
            timeline.push((clock, to.position));
        }
        let is_leaf = to.children.is_empty();
        if let TreeNodeKind::Interaction(data) = &to.kind {
            if matches!(dwell, DwellMode::Predicted) && !is_leaf {
                clock += draw(data.duration_s);
                timeline.push((clock, to.position));
            }
        }
    }
    timeline
}

/// Sample a timeline every `dt` from 0 through `horizon`, holding the
/// final position once the timeline ends.
fn sample_timeline(timeline: &Timeline, dt: f64, horizon: f64) -> Vec<(f64, Point2)> {
    let steps = (horizon / dt).floor() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut segment = 0usize;
    for k in 0..=steps {
        let t = k as f64 * dt;
        while segment + 1 < timeline.len() && timeline[segment + 1].0 <= t {
            segment += 1;
        }
        let position = if segment + 1 >= timeline.len() {
            timeline[segment].1
        } else {
            let (t0, p0) = timeline[segment];
            let (t1, p1) = timeline[segment + 1];
            if t1 > t0 {
                p0.lerp(p1, (t - t0) / (t1 - t0))
            } else {
                p1
            }
        };
        samples.push((t, position));
    }
    samples
}
