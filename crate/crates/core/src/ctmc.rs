//! Continuous-time Markov chain over a grounded interaction tree.
//!
//! States are the tree nodes in topological (root-first) order, so the
//! generator is lower triangular: probability mass only flows from the
//! root towards the leaves. Transition rates follow two cases:
//!
//! * movement (root and path nodes): traversing a segment of length `d`
//!   is exponential with rate `v_walk / d`;
//! * interactions: leaving an interaction of mean duration `tau` is
//!   exponential with total rate `1 / tau`, split over the child branches
//!   by their normalized probabilities.
//!
//! Leaf interactions are absorbing. The generator uses the column
//! convention `dP/dt = Q * P`: `Q[i][j]` is the rate from state `j` to
//! state `i`, columns sum to zero.
//!
//! Transient distributions are computed by uniformization — a Poisson-
//! weighted series over the scaled jump matrix — which only ever adds
//! non-negative terms and is robust to the repeated diagonal entries tree
//! generators routinely have.

use std::collections::HashMap;

use thiserror::Error;

use crate::tree::{InteractionTree, TreeNodeId, TreeNodeKind};

/// Truncation tolerance of the uniformization series.
pub const TRUNCATION_TOL: f64 = 1e-10;

/// Largest Poisson mean evaluated in one uniformization pass; longer
/// horizons are split into steps of at most this mean.
const MAX_POISSON_MEAN: f64 = 64.0;

/// Floor on the distance used for movement rates, so that interactions
/// colocated with their predecessor get a fast finite hop instead of an
/// infinite rate.
pub const MIN_TRAVERSAL_DISTANCE_M: f64 = 0.01;

/// Whether interaction sojourn times enter the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DwellMode {
    /// Interactions hold the agent for their predicted duration.
    #[default]
    Predicted,
    /// Interactions are instantaneous: non-leaf interaction nodes become
    /// movement nodes (the no-interaction-times ablation).
    Ignored,
}

#[derive(Debug, Error)]
pub enum CtmcError {
    #[error("invalid CTMC argument: {0}")]
    Argument(String),
    #[error("state dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Distribution over chain states at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    pub t: f64,
    pub p: Vec<f64>,
}

/// Sparse generator of the chain, plus the state ordering.
#[derive(Debug, Clone)]
pub struct Ctmc {
    /// Tree node of each state; index 0 is the root (initial state).
    states: Vec<TreeNodeId>,
    state_of_node: HashMap<TreeNodeId, usize>,
    /// Outgoing rates per state: (destination state, rate).
    transitions: Vec<Vec<(usize, f64)>>,
    /// Total exit rate per state (sum of outgoing rates).
    exit_rates: Vec<f64>,
    /// Which states are absorbing.
    absorbing: Vec<bool>,
    v_walk: f64,
}

/// Build the generator for a grounded tree.
pub fn build_generator(tree: &InteractionTree, v_walk: f64) -> Result<Ctmc, CtmcError> {
    build_generator_with(tree, v_walk, DwellMode::Predicted)
}

/// Build the generator, optionally ignoring interaction durations.
pub fn build_generator_with(
    tree: &InteractionTree,
    v_walk: f64,
    dwell: DwellMode,
) -> Result<Ctmc, CtmcError> {
    if !tree.is_grounded() {
        return Err(CtmcError::Argument(
            "tree must be grounded before building the generator".into(),
        ));
    }
    if !(v_walk > 0.0) || !v_walk.is_finite() {
        return Err(CtmcError::Argument(format!(
            "v_walk must be positive, got {v_walk}"
        )));
    }

    // Depth-first preorder: parents precede children, so the state order
    // is topological and the generator lower triangular.
    let mut states = Vec::with_capacity(tree.len());
    let mut stack = vec![tree.root()];
    while let Some(id) = stack.pop() {
        states.push(id);
        for &c in tree.node(id).children.iter().rev() {
            stack.push(c);
        }
    }
    let state_of_node: HashMap<TreeNodeId, usize> =
        states.iter().enumerate().map(|(i, &n)| (n, i)).collect();

    let mut transitions = vec![Vec::new(); states.len()];
    let mut exit_rates = vec![0.0; states.len()];
    let mut absorbing = vec![false; states.len()];

    for (state, &node_id) in states.iter().enumerate() {
        let node = tree.node(node_id);
        if node.children.is_empty() {
            absorbing[state] = true;
            continue;
        }
        let dwells = matches!(dwell, DwellMode::Predicted)
            && matches!(node.kind, TreeNodeKind::Interaction(_));
        let rates: Vec<(usize, f64)> = if dwells {
            let duration = node.interaction().expect("interaction node").duration_s;
            if !(duration > 0.0) {
                return Err(CtmcError::Argument(format!(
                    "interaction node {node_id} has non-positive duration {duration}"
                )));
            }
            node.children
                .iter()
                .map(|&c| (state_of_node[&c], tree.branch_probability(c) / duration))
                .collect()
        } else {
            // Movement node: expected segment time is the probability-
            // weighted mean segment length over v_walk; splitting the exit
            // rate by branch probability keeps the jump chain exact.
            let segments: Vec<(usize, f64, f64)> = node
                .children
                .iter()
                .map(|&c| {
                    let child = tree.node(c);
                    let length = match child.kind {
                        TreeNodeKind::Path { segment_length } => {
                            if !(segment_length > 0.0) {
                                return Err(CtmcError::Argument(format!(
                                    "zero-length path segment at node {c}"
                                )));
                            }
                            segment_length
                        }
                        _ => node
                            .position
                            .distance(child.position)
                            .max(MIN_TRAVERSAL_DISTANCE_M),
                    };
                    Ok((state_of_node[&c], tree.branch_probability(c), length))
                })
                .collect::<Result<_, CtmcError>>()?;
            let mean_length: f64 = segments.iter().map(|(_, q, d)| q * d).sum();
            let total_rate = v_walk / mean_length;
            segments
                .into_iter()
                .map(|(dest, q, _)| (dest, q * total_rate))
                .collect()
        };
        exit_rates[state] = rates.iter().map(|(_, r)| r).sum();
        transitions[state] = rates;
    }

    Ok(Ctmc {
        states,
        state_of_node,
        transitions,
        exit_rates,
        absorbing,
        v_walk,
    })
}

impl Ctmc {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Tree nodes in state order (root first).
    pub fn state_nodes(&self) -> &[TreeNodeId] {
        &self.states
    }

    pub fn state_of_node(&self, node: TreeNodeId) -> Option<usize> {
        self.state_of_node.get(&node).copied()
    }

    pub fn initial_state(&self) -> usize {
        0
    }

    pub fn v_walk(&self) -> f64 {
        self.v_walk
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        self.absorbing[state]
    }

    pub fn exit_rate(&self, state: usize) -> f64 {
        self.exit_rates[state]
    }

    pub fn transitions_from(&self, state: usize) -> &[(usize, f64)] {
        &self.transitions[state]
    }

    /// Non-zero generator entries `(row, col, value)` in column-major
    /// order, diagonals included; the debugging dump.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut entries = Vec::new();
        for col in 0..self.len() {
            if self.exit_rates[col] != 0.0 {
                entries.push((col, col, -self.exit_rates[col]));
            }
            let mut outgoing: Vec<(usize, usize, f64)> = self.transitions[col]
                .iter()
                .map(|&(row, rate)| (row, col, rate))
                .collect();
            outgoing.sort_by_key(|e| e.0);
            entries.extend(outgoing);
        }
        entries
    }

    /// Distribution after evolving the initial unit mass for `t` seconds.
    pub fn distribution_at(&self, t: f64) -> Result<StateDistribution, CtmcError> {
        let mut p0 = vec![0.0; self.len()];
        p0[self.initial_state()] = 1.0;
        let p = self.evolve(&p0, t)?;
        Ok(StateDistribution { t, p })
    }

    /// Action of `exp(Q t)` on an arbitrary distribution, by uniformization
    /// with truncation tolerance [`TRUNCATION_TOL`].
    pub fn evolve(&self, p0: &[f64], t: f64) -> Result<Vec<f64>, CtmcError> {
        if p0.len() != self.len() {
            return Err(CtmcError::DimensionMismatch {
                left: p0.len(),
                right: self.len(),
            });
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(CtmcError::Argument(format!(
                "time must be non-negative and finite, got {t}"
            )));
        }
        let lambda = self
            .exit_rates
            .iter()
            .fold(0.0f64, |acc, &r| acc.max(r));
        if lambda * t == 0.0 {
            return Ok(p0.to_vec());
        }
        let steps = ((lambda * t) / MAX_POISSON_MEAN).ceil().max(1.0) as usize;
        let mean = lambda * (t / steps as f64);
        let step_tol = TRUNCATION_TOL / steps as f64;
        let mut p = p0.to_vec();
        for _ in 0..steps {
            p = self.uniformization_step(&p, lambda, mean, step_tol);
        }
        Ok(p)
    }

    /// One Poisson-weighted series evaluation of `exp(Q tau) p` where
    /// `mean = lambda * tau`.
    fn uniformization_step(&self, p: &[f64], lambda: f64, mean: f64, tol: f64) -> Vec<f64> {
        let mut term = p.to_vec();
        let mut acc = vec![0.0; p.len()];
        let mut weight = (-mean).exp();
        let mut cumulative = 0.0;
        let cutoff = (mean + 40.0 * mean.sqrt() + 64.0) as usize;
        for k in 0..=cutoff {
            for (a, v) in acc.iter_mut().zip(&term) {
                *a += weight * v;
            }
            cumulative += weight;
            if 1.0 - cumulative <= tol {
                break;
            }
            term = self.jump_apply(&term, lambda);
            weight *= mean / (k + 1) as f64;
        }
        acc
    }

    /// Apply the uniformized jump matrix `P = I + Q / lambda` (column
    /// stochastic, non-negative).
    fn jump_apply(&self, v: &[f64], lambda: f64) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (state, &mass) in v.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            out[state] += mass * (1.0 - self.exit_rates[state] / lambda);
            for &(dest, rate) in &self.transitions[state] {
                out[dest] += mass * (rate / lambda);
            }
        }
        out
    }

    /// The absorption distribution: all mass on absorbing leaves, each
    /// leaf's mass the product of the normalized branch probabilities along
    /// its root path. Satisfies `Q * p = 0` exactly.
    pub fn steady_state(&self) -> StateDistribution {
        let mut mass = vec![0.0; self.len()];
        mass[self.initial_state()] = 1.0;
        // Topological order: push each state's mass to its successors.
        for state in 0..self.len() {
            if self.absorbing[state] || mass[state] == 0.0 {
                continue;
            }
            let exit = self.exit_rates[state];
            let outgoing = mass[state];
            mass[state] = 0.0;
            for &(dest, rate) in &self.transitions[state] {
                mass[dest] += outgoing * (rate / exit);
            }
        }
        StateDistribution {
            t: f64::INFINITY,
            p: mass,
        }
    }

    /// Total probability currently in absorbing states.
    pub fn absorbed_mass(&self, distribution: &StateDistribution) -> f64 {
        distribution
            .p
            .iter()
            .zip(&self.absorbing)
            .filter(|(_, &a)| a)
            .map(|(m, _)| m)
            .sum()
    }

    /// First time the evolved distribution comes within `threshold` total
    /// variation of the steady state: scanned on the grid `{0, dt, ...,
    /// t_max}`, then refined by bisection to +-0.05 s. `None` if the chain
    /// stays farther than `threshold` through `t_max`.
    pub fn horizon_of_meaning(
        &self,
        threshold: f64,
        t_max: f64,
        dt: f64,
    ) -> Result<Option<f64>, CtmcError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(CtmcError::Argument(format!(
                "threshold must be in (0, 1), got {threshold}"
            )));
        }
        if !(dt > 0.0) || !(t_max >= 0.0) {
            return Err(CtmcError::Argument("dt and t_max must be positive".into()));
        }
        let steady = self.steady_state();
        let below = |t: f64| -> Result<bool, CtmcError> {
            let d = self.distribution_at(t)?;
            Ok(tv_distance(&d, &steady)? < threshold)
        };
        let mut previous = 0.0;
        let mut t = 0.0;
        loop {
            if below(t)? {
                if t == 0.0 {
                    return Ok(Some(0.0));
                }
                // TV to the steady state decays monotonically (absorbed
                // mass only grows), so bisection between the last two grid
                // points pins the crossing.
                let (mut lo, mut hi) = (previous, t);
                while hi - lo > 0.1 {
                    let mid = 0.5 * (lo + hi);
                    if below(mid)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Ok(Some(0.5 * (lo + hi)));
            }
            if t >= t_max {
                return Ok(None);
            }
            previous = t;
            t = (t + dt).min(t_max);
        }
    }
}

/// Total variation distance between two distributions on the same states.
pub fn tv_distance(p: &StateDistribution, q: &StateDistribution) -> Result<f64, CtmcError> {
    if p.p.len() != q.p.len() {
        return Err(CtmcError::DimensionMismatch {
            left: p.p.len(),
            right: q.p.len(),
        });
    }
    Ok(0.5 * p.p.iter().zip(&q.p).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::predict::{InteractionCandidate, Target};
    use crate::tree::InteractionTree;

    fn candidate(object: &str, probability: f64, duration_s: f64) -> InteractionCandidate {
        InteractionCandidate {
            target: Target::Instance(object.into()),
            action: "use".into(),
            probability,
            duration_s,
            reasoning: String::new(),
        }
    }

    /// root --(7 m direct)--> absorbing interaction.
    fn single_segment_chain() -> InteractionTree {
        let mut tree = InteractionTree::new(Point2::new(0.0, 0.0));
        tree.add_interaction(0, Point2::new(7.0, 0.0), candidate("a", 1.0, 10.0))
            .unwrap();
        tree.normalize_branches();
        ground_for_test(tree)
    }

    /// Mark a hand-built tree as grounded (test trees already carry their
    /// path nodes explicitly).
    fn ground_for_test(mut tree: InteractionTree) -> InteractionTree {
        tree.set_grounded();
        tree
    }

    #[test]
    fn path_segment_rate_is_speed_over_distance() {
        let mut tree = InteractionTree::new(Point2::new(0.0, 0.0));
        let path = tree.add_path_node(0, Point2::new(7.0, 0.0), 7.0).unwrap();
        tree.add_interaction(path, Point2::new(7.5, 0.0), candidate("a", 1.0, 10.0))
            .unwrap();
        tree.normalize_branches();
        let ctmc = build_generator(&ground_for_test(tree), 1.4).unwrap();
        assert!((ctmc.exit_rate(0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn interaction_rates_split_by_branch_probability() {
        let mut tree = InteractionTree::new(Point2::new(0.0, 0.0));
        let first = tree
            .add_interaction(0, Point2::new(1.0, 0.0), candidate("a", 1.0, 10.0))
            .unwrap();
        tree.add_interaction(first, Point2::new(2.0, 0.0), candidate("b", 0.5, 5.0))
            .unwrap();
        tree.add_interaction(first, Point2::new(0.0, 1.0), candidate("c", 0.5, 5.0))
            .unwrap();
        tree.normalize_branches();
        let ctmc = build_generator(&ground_for_test(tree), 1.4).unwrap();
        let state = ctmc.state_of_node(first).unwrap();
        let rates: Vec<f64> = ctmc
            .transitions_from(state)
            .iter()
            .map(|&(_, r)| r)
            .collect();
        assert_eq!(rates.len(), 2);
        assert!((rates[0] - 0.05).abs() < 1e-12);
        assert!((rates[1] - 0.05).abs() < 1e-12);
        assert!((ctmc.exit_rate(state) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn leaves_are_absorbing() {
        let ctmc = build_generator(&single_segment_chain(), 1.4).unwrap();
        let leaf = 1;
        assert!(ctmc.is_absorbing(leaf));
        assert!(ctmc.transitions_from(leaf).is_empty());
        assert_eq!(ctmc.exit_rate(leaf), 0.0);
    }

    #[test]
    fn ungrounded_tree_is_rejected() {
        let mut tree = InteractionTree::new(Point2::ORIGIN);
        tree.add_interaction(0, Point2::new(1.0, 0.0), candidate("a", 1.0, 1.0))
            .unwrap();
        assert!(matches!(
            build_generator(&tree, 1.4),
            Err(CtmcError::Argument(_))
        ));
    }

    #[test]
    fn distribution_at_zero_is_unit_mass() {
        let ctmc = build_generator(&single_segment_chain(), 1.4).unwrap();
        let d = ctmc.distribution_at(0.0).unwrap();
        assert_eq!(d.p[0], 1.0);
        assert_eq!(d.p[1], 0.0);
    }

    #[test]
    fn survival_matches_closed_form() {
        let ctmc = build_generator(&single_segment_chain(), 1.4).unwrap();
        for t in [1.0, 5.0, 10.0] {
            let d = ctmc.distribution_at(t).unwrap();
            let expected = (-0.2 * t).exp();
            assert!(
                (d.p[0] - expected).abs() < 1e-9,
                "t={t}: {} vs {expected}",
                d.p[0]
            );
            assert!((d.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn long_horizon_reaches_steady_state() {
        let ctmc = build_generator(&single_segment_chain(), 1.4).unwrap();
        let late = ctmc.distribution_at(3600.0).unwrap();
        let steady = ctmc.steady_state();
        assert!(tv_distance(&late, &steady).unwrap() < 1e-6);
    }

    #[test]
    fn steady_state_splits_by_branch_products() {
        let mut tree = InteractionTree::new(Point2::ORIGIN);
        let first = tree
            .add_interaction(0, Point2::new(1.0, 0.0), candidate("a", 1.0, 10.0))
            .unwrap();
        tree.add_interaction(first, Point2::new(2.0, 0.0), candidate("b", 0.7, 5.0))
            .unwrap();
        tree.add_interaction(first, Point2::new(0.0, 1.0), candidate("c", 0.3, 5.0))
            .unwrap();
        tree.normalize_branches();
        let tree = ground_for_test(tree);
        let ctmc = build_generator(&tree, 1.4).unwrap();
        let steady = ctmc.steady_state();
        let sequences = tree.enumerate_sequences();
        for seq in sequences {
            let leaf = *seq.interactions.last().unwrap();
            let state = ctmc.state_of_node(leaf).unwrap();
            assert!((steady.p[state] - seq.probability).abs() < 1e-12);
        }
        // Q * p == 0: steady mass sits only on zero-columns.
        for (state, &m) in steady.p.iter().enumerate() {
            if m > 0.0 {
                assert!(ctmc.is_absorbing(state));
            }
        }
    }

    #[test]
    fn tv_distance_basics() {
        let p = StateDistribution {
            t: 0.0,
            p: vec![0.6, 0.4],
        };
        let q = StateDistribution {
            t: 0.0,
            p: vec![0.5, 0.5],
        };
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert!((tv_distance(&p, &q).unwrap() - 0.1).abs() < 1e-12);
        let disjoint = StateDistribution {
            t: 0.0,
            p: vec![1.0, 0.0],
        };
        let other = StateDistribution {
            t: 0.0,
            p: vec![0.0, 1.0],
        };
        assert_eq!(tv_distance(&disjoint, &other).unwrap(), 1.0);
        let short = StateDistribution {
            t: 0.0,
            p: vec![1.0],
        };
        assert!(tv_distance(&p, &short).is_err());
    }

    #[test]
    fn horizon_matches_half_life() {
        let ctmc = build_generator(&single_segment_chain(), 1.4).unwrap();
        let horizon = ctmc.horizon_of_meaning(0.5, 60.0, 0.5).unwrap().unwrap();
        let expected = (2.0f64).ln() / 0.2;
        assert!((horizon - expected).abs() <= 0.05, "{horizon} vs {expected}");
    }

    #[test]
    fn horizon_is_zero_for_absorbed_start() {
        let mut tree = InteractionTree::new(Point2::ORIGIN);
        tree.set_grounded();
        let ctmc = build_generator(&tree, 1.4).unwrap();
        assert_eq!(ctmc.horizon_of_meaning(0.5, 10.0, 1.0).unwrap(), Some(0.0));
    }

    #[test]
    fn dwell_mode_ignored_turns_interactions_into_movement() {
        let mut tree = InteractionTree::new(Point2::ORIGIN);
        let first = tree
            .add_interaction(0, Point2::new(1.0, 0.0), candidate("a", 1.0, 100.0))
            .unwrap();
        tree.add_interaction(first, Point2::new(3.0, 0.0), candidate("b", 1.0, 5.0))
            .unwrap();
        tree.normalize_branches();
        let tree = ground_for_test(tree);
        let with_dwell = build_generator_with(&tree, 1.0, DwellMode::Predicted).unwrap();
        let without = build_generator_with(&tree, 1.0, DwellMode::Ignored).unwrap();
        let state = with_dwell.state_of_node(first).unwrap();
        assert!((with_dwell.exit_rate(state) - 0.01).abs() < 1e-12); // 1/100 s
        assert!((without.exit_rate(state) - 0.5).abs() < 1e-12); // v/d = 1/2
    }

    #[test]
    fn generator_dump_is_column_sorted() {
        let ctmc = build_generator(&single_segment_chain(), 1.4).unwrap();
        let entries = ctmc.entries();
        assert_eq!(entries.len(), 2); // diagonal + one off-diagonal
        assert_eq!((entries[0].0, entries[0].1), (0, 0));
        assert!((entries[0].2 + 0.2).abs() < 1e-12);
        assert_eq!((entries[1].0, entries[1].1), (1, 0));
        assert!((entries[1].2 - 0.2).abs() < 1e-12);
    }
}
