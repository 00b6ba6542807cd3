//! Reference predictors: constant velocity, random walk, random goal.
//!
//! All stochastic baselines draw from a seeded generator and are
//! bit-reproducible for a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::geometry::Point2;
use crate::scene::{Layer, NodeId, SceneGraph};
use crate::spatial::DiscreteTrajectory;

/// Span of past trajectory used for the velocity fit, seconds.
const FIT_WINDOW_S: f64 = 2.0;

/// Linear extrapolation of the current velocity.
///
/// The velocity is a least-squares linear fit over the last two seconds of
/// the past trajectory; a degenerate past (single sample or no spread)
/// yields a stationary forecast. Past times are relative to the split
/// (non-positive), and the forecast starts at the last past position.
pub fn baseline_constant_velocity(
    past: &[(f64, Point2)],
    horizon: f64,
    dt: f64,
) -> Result<DiscreteTrajectory, EvalError> {
    let &(t_last, last) = past
        .last()
        .ok_or_else(|| EvalError::Argument("constant velocity needs past samples".into()))?;
    let window: Vec<(f64, Point2)> = past
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t_last - FIT_WINDOW_S)
        .collect();
    let velocity = fit_velocity(&window);
    let steps = (horizon / dt).floor() as usize;
    let samples = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            (
                t,
                Point2::new(last.x + velocity.x * t, last.y + velocity.y * t),
            )
        })
        .collect();
    Ok(DiscreteTrajectory {
        samples,
        dt,
        weight: 1.0,
    })
}

/// Per-axis least-squares slope of position over time.
fn fit_velocity(samples: &[(f64, Point2)]) -> Point2 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return Point2::ORIGIN;
    }
    let mean_t = samples.iter().map(|&(t, _)| t).sum::<f64>() / n;
    let var_t = samples
        .iter()
        .map(|&(t, _)| (t - mean_t) * (t - mean_t))
        .sum::<f64>();
    if var_t == 0.0 {
        return Point2::ORIGIN;
    }
    let mean_x = samples.iter().map(|&(_, p)| p.x).sum::<f64>() / n;
    let mean_y = samples.iter().map(|&(_, p)| p.y).sum::<f64>() / n;
    let cov_x = samples
        .iter()
        .map(|&(t, p)| (t - mean_t) * (p.x - mean_x))
        .sum::<f64>();
    let cov_y = samples
        .iter()
        .map(|&(t, p)| (t - mean_t) * (p.y - mean_y))
        .sum::<f64>();
    Point2::new(cov_x / var_t, cov_y / var_t)
}

/// Uniform random walk over the places layer at walking speed.
pub fn baseline_random_walk(
    graph: &SceneGraph,
    start: Point2,
    horizon: f64,
    dt: f64,
    n: usize,
    v_walk: f64,
    seed: u64,
) -> Result<Vec<DiscreteTrajectory>, EvalError> {
    check_walk_args(horizon, dt, n, v_walk)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut timeline = vec![(0.0, start)];
        let mut clock = 0.0;
        let mut here = graph.nearest_place(start);
        let here_pos = graph.position_of(&here).expect("place exists");
        if start.distance(here_pos) > 0.0 {
            clock += start.distance(here_pos) / v_walk;
            timeline.push((clock, here_pos));
        }
        while clock < horizon {
            let neighbors = graph.place_neighbors(&here)?;
            if neighbors.is_empty() {
                break;
            }
            let (next, length) = neighbors[rng.gen_range(0..neighbors.len())].clone();
            let to = graph.position_of(&next).expect("place exists");
            clock += length / v_walk;
            timeline.push((clock, to));
            here = next;
        }
        out.push(sample_walk(&timeline, dt, horizon, weight));
    }
    Ok(out)
}

/// Shortest-path motion towards a uniformly random goal place, then rest.
pub fn baseline_random_goal(
    graph: &SceneGraph,
    start: Point2,
    horizon: f64,
    dt: f64,
    n: usize,
    v_walk: f64,
    seed: u64,
) -> Result<Vec<DiscreteTrajectory>, EvalError> {
    check_walk_args(horizon, dt, n, v_walk)?;
    let places: Vec<NodeId> = graph
        .layer_nodes(Layer::Place)
        .map(|p| p.id.clone())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = 1.0 / n as f64;
    let origin = graph.nearest_place(start);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let goal = &places[rng.gen_range(0..places.len())];
        let path = graph.shortest_path(&origin, goal)?;
        let mut timeline = vec![(0.0, start)];
        let mut clock = 0.0;
        let mut here = start;
        for wp in &path.waypoints {
            let to = graph.position_of(wp).expect("place exists");
            let d = here.distance(to);
            if d > 0.0 {
                clock += d / v_walk;
                timeline.push((clock, to));
                here = to;
            }
        }
        out.push(sample_walk(&timeline, dt, horizon, weight));
    }
    Ok(out)
}

fn check_walk_args(horizon: f64, dt: f64, n: usize, v_walk: f64) -> Result<(), EvalError> {
    if !(dt > 0.0) || !(horizon >= 0.0) || !(v_walk > 0.0) || n == 0 {
        return Err(EvalError::Argument(
            "baselines need positive dt, v_walk, n and non-negative horizon".into(),
        ));
    }
    Ok(())
}

/// Sample a piecewise-linear timeline every `dt`, holding the final point.
fn sample_walk(timeline: &[(f64, Point2)], dt: f64, horizon: f64, weight: f64) -> DiscreteTrajectory {
    let steps = (horizon / dt).floor() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut seg = 0usize;
    for k in 0..=steps {
        let t = k as f64 * dt;
        while seg + 1 < timeline.len() && timeline[seg + 1].0 <= t {
            seg += 1;
        }
        let p = if seg + 1 >= timeline.len() {
            timeline[seg].1
        } else {
            let (t0, p0) = timeline[seg];
            let (t1, p1) = timeline[seg + 1];
            p0.lerp(p1, (t - t0) / (t1 - t0))
        };
        samples.push((t, p));
    }
    DiscreteTrajectory {
        samples,
        dt,
        weight,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn line_graph(n: usize) -> SceneGraph {
        let mut nodes = vec![json!({"id": "r1", "layer": "room", "class": "hall", "pos": [0, 3]})];
        let mut edges = vec![];
        for i in 0..n {
            nodes.push(json!({"id": format!("p{i}"), "layer": "place", "pos": [i as f64, 0.0]}));
            if i > 0 {
                edges.push(json!([format!("p{}", i - 1), format!("p{i}")]));
            }
        }
        SceneGraph::load(&json!({"name": "line", "nodes": nodes, "edges": edges}).to_string())
            .unwrap()
    }

    #[test]
    fn constant_velocity_extrapolates_straight() {
        let past: Vec<(f64, Point2)> = (0..=20)
            .map(|i| {
                let t = -2.0 + i as f64 * 0.1;
                (t, Point2::new(5.0 + t, 0.0))
            })
            .collect();
        let tr = baseline_constant_velocity(&past, 10.0, 1.0).unwrap();
        // Moving +x at 1 m/s from (5, 0).
        for (t, p) in &tr.samples {
            assert!((p.x - (5.0 + t)).abs() < 1e-9, "t={t}");
            assert!(p.y.abs() < 1e-9);
        }
    }

    #[test]
    fn constant_velocity_stationary_for_degenerate_past() {
        let past = vec![(-1.0, Point2::new(2.0, 2.0)), (0.0, Point2::new(2.0, 2.0))];
        let tr = baseline_constant_velocity(&past, 5.0, 1.0).unwrap();
        for (_, p) in &tr.samples {
            assert_eq!(*p, Point2::new(2.0, 2.0));
        }
    }

    #[test]
    fn random_walk_single_place_is_stationary() {
        let graph = line_graph(1);
        let start = Point2::new(0.0, 0.0);
        let walks = baseline_random_walk(&graph, start, 10.0, 1.0, 3, 1.4, 7).unwrap();
        for w in &walks {
            for (_, p) in &w.samples {
                assert_eq!(*p, start);
            }
        }
    }

    #[test]
    fn random_walk_line_first_step_is_deterministic() {
        let graph = line_graph(3);
        // Starting at the end p0: the only neighbor is p1.
        let walks = baseline_random_walk(&graph, Point2::new(0.0, 0.0), 1.0, 0.5, 2, 1.0, 3).unwrap();
        for w in &walks {
            // After 1 s at 1 m/s the walker is 1 m along towards p1.
            let (_, p) = w.samples.last().unwrap();
            assert!((p.x - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn random_walk_is_seed_reproducible() {
        let graph = line_graph(5);
        let a = baseline_random_walk(&graph, Point2::new(2.0, 0.0), 30.0, 1.0, 5, 1.4, 99).unwrap();
        let b = baseline_random_walk(&graph, Point2::new(2.0, 0.0), 30.0, 1.0, 5, 1.4, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_walk_steps_follow_edges() {
        let graph = line_graph(5);
        let walks = baseline_random_walk(&graph, Point2::new(2.0, 0.0), 200.0, 0.25, 4, 1.0, 11).unwrap();
        // Walking 1 m edges at 1 m/s sampled at 4 Hz: consecutive samples
        // move exactly 0.25 m until the walk ends.
        for w in &walks {
            for pair in w.samples.windows(2) {
                let step = pair[0].1.distance(pair[1].1);
                assert!(step <= 0.25 + 1e-9);
            }
        }
    }

    #[test]
    fn random_goal_reaches_and_stays() {
        let graph = line_graph(15);
        // From p0; goals are uniform over places.
        let walks = baseline_random_goal(&graph, Point2::new(0.0, 0.0), 30.0, 1.0, 8, 1.4, 5).unwrap();
        for w in &walks {
            let (_, end) = w.samples.last().unwrap();
            // Ends resting at a place position.
            assert!((end.y).abs() < 1e-9);
            let (_, before) = w.samples[w.samples.len() - 2];
            // Once arrived, stays.
            if before.distance(*end) == 0.0 {
                assert_eq!(before, *end);
            }
        }
    }

    #[test]
    fn random_goal_positions_lie_on_shortest_path() {
        let graph = line_graph(15);
        let walks = baseline_random_goal(&graph, Point2::new(3.0, 0.0), 30.0, 0.5, 6, 1.4, 42).unwrap();
        for w in &walks {
            for (_, p) in &w.samples {
                // The line graph's paths stay on the x axis.
                assert!(p.y.abs() < 1e-9);
                assert!(p.x >= -1e-9 && p.x <= 14.0 + 1e-9);
            }
        }
    }
}
