//! Metrics: negative log-likelihood, Best-of-N displacement error, and
//! top-10 interaction accuracy.

use std::collections::BTreeMap;

use super::EvalError;
use crate::geometry::Point2;
use crate::scene::SceneGraph;
use crate::spatial::{DiscreteTrajectory, SpatioTemporalDistribution};
use crate::tree::InteractionTree;

use super::record::InteractionSpan;

/// Densities are floored here before taking logs; zero-support predictions
/// would otherwise dominate every average. Reported in run manifests.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Lower bound of the per-timestep KDE bandwidth, meters.
pub const KDE_BANDWIDTH_FLOOR_M: f64 = 0.2;

/// How many ranked predictions count as a hit.
pub const TOP_K: usize = 10;

/// Evaluation time window (lo, hi], seconds after the split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn contains(&self, t: f64) -> bool {
        t > self.lo && t <= self.hi
    }

    pub fn label(&self) -> String {
        format!("{:.0}-{:.0}", self.lo, self.hi)
    }
}

/// The reporting windows: 0-10, 10-30, 30-60 seconds.
pub fn standard_windows() -> Vec<Window> {
    vec![
        Window { lo: 0.0, hi: 10.0 },
        Window { lo: 10.0, hi: 30.0 },
        Window { lo: 30.0, hi: 60.0 },
    ]
}

/// Per-timestep negative log-likelihood plus windowed means.
#[derive(Debug, Clone)]
pub struct NllCurve {
    /// Evaluation times, seconds after the split.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Mean per window; `None` when no timestep falls in the window.
    pub windowed: Vec<(Window, Option<f64>)>,
}

impl NllCurve {
    fn from_samples(times: Vec<f64>, values: Vec<f64>, windows: &[Window]) -> NllCurve {
        let windowed = windows
            .iter()
            .map(|w| {
                let in_window: Vec<f64> = times
                    .iter()
                    .zip(&values)
                    .filter(|(t, _)| w.contains(**t))
                    .map(|(_, v)| *v)
                    .collect();
                let mean = if in_window.is_empty() {
                    None
                } else {
                    Some(in_window.iter().sum::<f64>() / in_window.len() as f64)
                };
                (*w, mean)
            })
            .collect();
        NllCurve {
            times,
            values,
            windowed,
        }
    }
}

/// Ground truth resampled onto the evaluation grid: `t_k = k dt` for
/// `k >= 1` while covered by both the horizon and the ground truth.
fn evaluation_grid(gt: &[(f64, Point2)], dt: f64, horizon: f64) -> Vec<(f64, Point2)> {
    let end = gt.last().map(|&(t, _)| t).unwrap_or(0.0).min(horizon);
    let steps = (end / dt).floor() as usize;
    (1..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            (t, interpolate(gt, t))
        })
        .collect()
}

/// Linear interpolation over timestamped samples (clamped at the ends).
pub fn interpolate(samples: &[(f64, Point2)], t: f64) -> Point2 {
    match samples.iter().position(|&(st, _)| st >= t) {
        Some(0) => samples[0].1,
        Some(i) => {
            let (t0, p0) = samples[i - 1];
            let (t1, p1) = samples[i];
            p0.lerp(p1, (t - t0) / (t1 - t0))
        }
        None => samples.last().expect("non-empty samples").1,
    }
}

/// NLL of the ground truth under the chain-mixture density.
pub fn nll_mixture(
    prediction: &SpatioTemporalDistribution,
    gt_future: &[(f64, Point2)],
    dt: f64,
    horizon: f64,
    windows: &[Window],
) -> Result<NllCurve, EvalError> {
    if gt_future.is_empty() {
        return Err(EvalError::Argument("ground truth future is empty".into()));
    }
    let grid = evaluation_grid(gt_future, dt, horizon);
    let mut times = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(grid.len());
    for (t, gt) in grid {
        let density = prediction.density(gt, t)?;
        times.push(t);
        values.push(-density.max(DENSITY_FLOOR).ln());
    }
    Ok(NllCurve::from_samples(times, values, windows))
}

/// NLL of the ground truth under a per-timestep Gaussian KDE over sampled
/// trajectories (the deterministic-walk arm and all baselines).
///
/// Bandwidth per timestep: Silverman's rule for two dimensions,
/// `h = sigma_hat * n^(-1/6)`, floored at [`KDE_BANDWIDTH_FLOOR_M`].
pub fn nll_kde(
    trajectories: &[DiscreteTrajectory],
    gt_future: &[(f64, Point2)],
    dt: f64,
    horizon: f64,
    windows: &[Window],
) -> Result<NllCurve, EvalError> {
    if gt_future.is_empty() {
        return Err(EvalError::Argument("ground truth future is empty".into()));
    }
    let grid = evaluation_grid(gt_future, dt, horizon);
    let total_weight: f64 = trajectories.iter().map(|t| t.weight).sum();
    let mut times = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(grid.len());
    for (t, gt) in grid {
        let points: Vec<(Point2, f64)> = trajectories
            .iter()
            .filter_map(|tr| tr.position_at(t).map(|p| (p, tr.weight / total_weight)))
            .collect();
        let density = if points.is_empty() {
            0.0
        } else {
            kde_density(&points, gt)
        };
        times.push(t);
        values.push(-density.max(DENSITY_FLOOR).ln());
    }
    Ok(NllCurve::from_samples(times, values, windows))
}

/// Weighted isotropic Gaussian KDE evaluated at one point.
fn kde_density(points: &[(Point2, f64)], at: Point2) -> f64 {
    let h = silverman_bandwidth(points);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * h * h);
    points
        .iter()
        .map(|(p, w)| {
            let dx = at.x - p.x;
            let dy = at.y - p.y;
            w * norm * (-(dx * dx + dy * dy) / (2.0 * h * h)).exp()
        })
        .sum()
}

fn silverman_bandwidth(points: &[(Point2, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|(p, _)| p.x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(p, _)| p.y).sum::<f64>() / n;
    let var = points
        .iter()
        .map(|(p, _)| (p.x - mean_x).powi(2) + (p.y - mean_y).powi(2))
        .sum::<f64>()
        / (2.0 * n);
    (var.sqrt() * n.powf(-1.0 / 6.0)).max(KDE_BANDWIDTH_FLOOR_M)
}

/// Best-of-N average displacement error per window.
#[derive(Debug, Clone)]
pub struct AdeTable {
    pub n: usize,
    /// Mean displacement (meters; squared meters with `squared`) of the
    /// best candidate per window; `None` when the window has no timesteps.
    pub windows: Vec<(Window, Option<f64>)>,
}

/// Lowest mean displacement between the top `n` trajectories and the
/// ground truth, per window. Ground truth is resampled to the trajectory
/// grid by linear interpolation. `squared` averages squared displacements
/// instead (the flagged alternative reading of the metric).
pub fn bon_ade(
    predicted: &[DiscreteTrajectory],
    gt_future: &[(f64, Point2)],
    n: usize,
    windows: &[Window],
    squared: bool,
) -> Result<AdeTable, EvalError> {
    if predicted.is_empty() {
        return Err(EvalError::Argument("no predicted trajectories".into()));
    }
    if n == 0 {
        return Err(EvalError::Argument("n must be at least 1".into()));
    }
    if gt_future.is_empty() {
        return Err(EvalError::Argument("ground truth future is empty".into()));
    }
    let mut ranked: Vec<&DiscreteTrajectory> = predicted.iter().collect();
    ranked.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    ranked.truncate(n);

    let dt = ranked[0].dt;
    let gt_end = gt_future.last().map(|&(t, _)| t).unwrap_or(0.0);
    let result = windows
        .iter()
        .map(|w| {
            let steps: Vec<f64> = {
                let first = (w.lo / dt).floor() as usize + 1;
                let last = (w.hi.min(gt_end) / dt).floor() as usize;
                (first..=last)
                    .map(|k| k as f64 * dt)
                    .filter(|&t| w.contains(t))
                    .collect()
            };
            if steps.is_empty() {
                return (*w, None);
            }
            let best = ranked
                .iter()
                .map(|tr| {
                    let total: f64 = steps
                        .iter()
                        .map(|&t| {
                            let gt = interpolate(gt_future, t);
                            let p = tr.position_at(t).unwrap_or(gt);
                            let d = p.distance(gt);
                            if squared {
                                d * d
                            } else {
                                d
                            }
                        })
                        .sum();
                    total / steps.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            (*w, Some(best))
        })
        .collect();
    Ok(AdeTable {
        n,
        windows: result,
    })
}

/// Hit/miss of the true first and second interactions among the top-10
/// ranked predictions, at both granularities. `None` where the ground
/// truth or the tree lacks that depth.
#[derive(Debug, Clone, Copy, Default)]
pub struct AccuracyHits {
    pub first_instance: Option<bool>,
    pub first_semantic: Option<bool>,
    pub second_instance: Option<bool>,
    pub second_semantic: Option<bool>,
}

/// Rank depth-1 (resp. depth-2) interactions by marginal probability and
/// test whether the true object (instance) or its class (semantic) is in
/// the top 10.
pub fn interaction_top10_accuracy(
    tree: &InteractionTree,
    graph: &SceneGraph,
    gt_future: &[InteractionSpan],
) -> AccuracyHits {
    let mut hits = AccuracyHits::default();
    for (depth, slot) in [(1usize, 0usize), (2, 1)] {
        let gt = match gt_future.get(slot) {
            Some(span) => span,
            None => continue,
        };
        let mut by_instance: BTreeMap<String, f64> = BTreeMap::new();
        let mut by_class: BTreeMap<String, f64> = BTreeMap::new();
        for node in tree.nodes().filter(|n| n.is_interaction()) {
            if tree.interaction_depth(node.id) != depth {
                continue;
            }
            let data = node.interaction().expect("interaction node");
            // Marginal probability of reaching this node.
            let mut joint = 1.0;
            let mut cursor = Some(node.id);
            while let Some(c) = cursor {
                if let Some(d) = tree.node(c).interaction() {
                    joint *= d.branch_probability;
                }
                cursor = tree.node(c).parent;
            }
            *by_instance.entry(data.object.0.clone()).or_insert(0.0) += joint;
            let class = graph
                .node(&data.object)
                .and_then(|n| n.semantic_class.clone())
                .unwrap_or_default();
            *by_class.entry(class).or_insert(0.0) += joint;
        }
        if by_instance.is_empty() {
            continue;
        }
        let gt_class = graph
            .node(&gt.object)
            .and_then(|n| n.semantic_class.clone())
            .unwrap_or_default();
        let instance_hit = top_k_contains(&by_instance, gt.object.as_str());
        let class_hit = top_k_contains(&by_class, &gt_class);
        if depth == 1 {
            hits.first_instance = Some(instance_hit);
            hits.first_semantic = Some(class_hit);
        } else {
            hits.second_instance = Some(instance_hit);
            hits.second_semantic = Some(class_hit);
        }
    }
    hits
}

fn top_k_contains(scores: &BTreeMap<String, f64>, key: &str) -> bool {
    let mut ranked: Vec<(&String, &f64)> = scores.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
    ranked.iter().take(TOP_K).any(|(k, _)| k.as_str() == key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::build_generator;
    use crate::predict::{InteractionCandidate, Target};
    use crate::spatial::SpatioTemporalDistribution;
    use crate::tree::InteractionTree;

    fn stationary_trajectory(at: Point2, dt: f64, horizon: f64, weight: f64) -> DiscreteTrajectory {
        let steps = (horizon / dt) as usize;
        DiscreteTrajectory {
            samples: (0..=steps).map(|k| (k as f64 * dt, at)).collect(),
            dt,
            weight,
        }
    }

    fn gt_line(horizon: f64, mover: impl Fn(f64) -> Point2) -> Vec<(f64, Point2)> {
        (0..=(horizon as usize))
            .map(|k| (k as f64, mover(k as f64)))
            .collect()
    }

    #[test]
    fn kde_single_sample_matches_closed_form() {
        let gt = gt_line(10.0, |_| Point2::ORIGIN);
        let prediction = vec![stationary_trajectory(Point2::ORIGIN, 1.0, 10.0, 1.0)];
        let curve = nll_kde(&prediction, &gt, 1.0, 10.0, &standard_windows()).unwrap();
        let h = KDE_BANDWIDTH_FLOOR_M;
        let expected = -(1.0 / (2.0 * std::f64::consts::PI * h * h)).ln();
        for v in &curve.values {
            assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
        }
    }

    #[test]
    fn mixture_nll_at_root_matches_peak_density() {
        let mut tree = InteractionTree::new(Point2::ORIGIN);
        tree.add_interaction(
            0,
            Point2::new(50.0, 0.0),
            InteractionCandidate {
                target: Target::Instance("a".into()),
                action: "use".into(),
                probability: 1.0,
                duration_s: 10.0,
                reasoning: String::new(),
            },
        )
        .unwrap();
        tree.normalize_branches();
        tree.set_grounded();
        let ctmc = build_generator(&tree, 1.4).unwrap();
        let dist = SpatioTemporalDistribution::new(ctmc, &tree, 0.5).unwrap();
        // Ground truth pinned at the root; at small t nearly all mass is
        // still there.
        let gt = vec![(0.001, Point2::ORIGIN), (60.0, Point2::ORIGIN)];
        let curve = nll_mixture(&dist, &gt, 0.001, 0.001, &standard_windows()).unwrap();
        let expected = -(1.0f64 / (2.0 * std::f64::consts::PI * 0.25)).ln();
        assert!((curve.values[0] - expected).abs() < 1e-3);
    }

    #[test]
    fn far_prediction_hits_density_floor() {
        let prediction = vec![stationary_trajectory(Point2::new(500.0, 0.0), 1.0, 10.0, 1.0)];
        let gt = gt_line(10.0, |_| Point2::ORIGIN);
        let curve = nll_kde(&prediction, &gt, 1.0, 10.0, &standard_windows()).unwrap();
        let ceiling = -DENSITY_FLOOR.ln();
        for v in &curve.values {
            assert!((v - ceiling).abs() < 1e-9);
        }
    }

    #[test]
    fn ade_zero_for_identical_prediction() {
        let gt = gt_line(60.0, |t| Point2::new(t * 0.5, 0.0));
        let prediction = vec![DiscreteTrajectory {
            samples: gt.clone(),
            dt: 1.0,
            weight: 1.0,
        }];
        let table = bon_ade(&prediction, &gt, 1, &standard_windows(), false).unwrap();
        for (_, v) in &table.windows {
            assert_eq!(v.unwrap(), 0.0);
        }
    }

    #[test]
    fn ade_constant_offset_is_the_offset() {
        let gt = gt_line(60.0, |t| Point2::new(t * 0.5, 0.0));
        let prediction = vec![DiscreteTrajectory {
            samples: gt.iter().map(|&(t, p)| (t, Point2::new(p.x, p.y + 1.0))).collect(),
            dt: 1.0,
            weight: 1.0,
        }];
        let table = bon_ade(&prediction, &gt, 1, &standard_windows(), false).unwrap();
        for (_, v) in &table.windows {
            assert!((v.unwrap() - 1.0).abs() < 1e-12);
        }
        let squared = bon_ade(&prediction, &gt, 1, &standard_windows(), true).unwrap();
        for (_, v) in &squared.windows {
            assert!((v.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ade_monotone_in_n() {
        let gt = gt_line(60.0, |t| Point2::new(t, 0.0));
        let offsets = [4.0, 2.0, 0.5];
        let predicted: Vec<DiscreteTrajectory> = offsets
            .iter()
            .enumerate()
            .map(|(i, &off)| DiscreteTrajectory {
                samples: gt.iter().map(|&(t, p)| (t, Point2::new(p.x, off))).collect(),
                dt: 1.0,
                weight: 1.0 - i as f64 * 0.1,
            })
            .collect();
        let mut last = f64::INFINITY;
        for n in 1..=3 {
            let table = bon_ade(&predicted, &gt, n, &standard_windows(), false).unwrap();
            let v = table.windows[0].1.unwrap();
            assert!(v <= last + 1e-12);
            last = v;
        }
    }

    #[test]
    fn window_beyond_horizon_is_absent() {
        let gt = gt_line(20.0, |t| Point2::new(t, 0.0));
        let prediction = vec![stationary_trajectory(Point2::ORIGIN, 1.0, 20.0, 1.0)];
        let table = bon_ade(&prediction, &gt, 1, &standard_windows(), false).unwrap();
        assert!(table.windows[0].1.is_some());
        assert!(table.windows[1].1.is_some());
        assert!(table.windows[2].1.is_none(), "gt ends at 20 s");
    }
}
