//! Tree construction: auto-regressive expansion and spatial grounding.

use rayon::prelude::*;

use super::{InteractionTree, TreeError, TreeNodeId, TreeNodeKind, TreeParams};
use crate::geometry::Point2;
use crate::predict::{
    ground_semantic, InteractionCandidate, PastInteraction, PredictError, Predictor,
    PredictorConfig, Target,
};
use crate::scene::{Granularity, NodeId, SceneGraph};

/// Expand the interaction tree to the configured depth.
///
/// Every surviving branch has interaction depth exactly `params.depth`.
/// The predictor is queried once per leaf per level (sibling leaves in
/// parallel); with semantic granularity each prediction is grounded to
/// instances before insertion. A failure on the root expansion is a hard
/// error; deeper failures prune the branch (recorded as a warning) and the
/// remaining siblings are renormalized.
pub fn build_tree(
    graph: &SceneGraph,
    predictor: &dyn Predictor,
    start: Point2,
    past: &[PastInteraction],
    params: &TreeParams,
) -> Result<InteractionTree, TreeError> {
    if params.depth == 0 {
        return Err(TreeError::Argument("depth must be at least 1".into()));
    }
    if params.width == 0 || params.instances_per_class == 0 {
        return Err(TreeError::Argument(
            "width and instances_per_class must be at least 1".into(),
        ));
    }
    if !start.is_finite() {
        return Err(TreeError::Argument("start position must be finite".into()));
    }
    let scene_text = graph.describe(params.granularity);
    let config = PredictorConfig {
        granularity: params.granularity,
        width: params.width,
    };

    let mut tree = InteractionTree::new(start);
    let mut frontier: Vec<TreeNodeId> = vec![tree.root()];
    let mut dead = vec![false];
    let mut pruned_any = false;

    for level in 1..=params.depth {
        // Sibling branches are independent; query them in parallel and
        // insert sequentially in frontier order so ids are reproducible.
        let expansions: Vec<Result<Vec<(Point2, InteractionCandidate)>, PredictError>> = frontier
            .par_iter()
            .map(|&leaf| expand_leaf(&tree, leaf, graph, predictor, &scene_text, past, &config, params))
            .collect();

        let mut next_frontier = Vec::new();
        for (&leaf, expansion) in frontier.iter().zip(expansions) {
            match expansion {
                Ok(children) => {
                    for (position, candidate) in children {
                        let id = tree.add_interaction(leaf, position, candidate)?;
                        dead.push(false);
                        next_frontier.push(id);
                    }
                }
                Err(error) => {
                    if level == 1 {
                        return Err(TreeError::Root(error));
                    }
                    pruned_any = true;
                    tree.push_warning(format!(
                        "pruned branch at node {leaf} (level {level}): {error}"
                    ));
                    tree.prune_upwards(leaf, &mut dead);
                }
            }
        }
        frontier = next_frontier;
    }

    if pruned_any {
        if !tree.compact(&dead) {
            return Err(TreeError::AllBranchesPruned);
        }
    }
    tree.normalize_branches();
    tree.set_depth(params.depth);
    Ok(tree)
}

/// One predictor query for a leaf, grounded to instance candidates with
/// resolved positions.
#[allow(clippy::too_many_arguments)]
fn expand_leaf(
    tree: &InteractionTree,
    leaf: TreeNodeId,
    graph: &SceneGraph,
    predictor: &dyn Predictor,
    scene_text: &str,
    past: &[PastInteraction],
    config: &PredictorConfig,
    params: &TreeParams,
) -> Result<Vec<(Point2, InteractionCandidate)>, PredictError> {
    let assumed = tree.candidate_chain(leaf);
    let from_place = match &tree.node(leaf).kind {
        TreeNodeKind::Root => graph.nearest_place(tree.node(leaf).position),
        TreeNodeKind::Interaction(data) => graph
            .anchor_of(&data.object)
            .cloned()
            .ok_or_else(|| PredictError::Argument(format!("object '{}' has no anchor", data.object)))?,
        TreeNodeKind::Path { .. } => {
            return Err(PredictError::Argument(
                "cannot expand from a path node".into(),
            ))
        }
    };
    let raw = predictor.predict_next(scene_text, past, &assumed, config)?;

    let mut grounded: Vec<InteractionCandidate> = match config.granularity {
        Granularity::Semantic => {
            ground_semantic(
                &raw,
                graph,
                &from_place,
                params.instances_per_class,
                params.distance_metric,
            )?
            .candidates
        }
        Granularity::Instance => raw
            .into_iter()
            .filter_map(|c| resolve_instance(c, graph))
            .collect(),
    };
    if grounded.is_empty() {
        return Err(PredictError::Format {
            detail: "no candidate could be grounded in the scene".into(),
            raw: String::new(),
        });
    }
    // Deterministic insertion order: by probability, then target, action.
    grounded.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.target.cmp(&b.target))
            .then_with(|| a.action.cmp(&b.action))
    });
    grounded
        .into_iter()
        .map(|c| {
            let object = match &c.target {
                Target::Instance(id) => id.clone(),
                Target::Class(_) => unreachable!("grounded candidates are instances"),
            };
            let position = graph
                .position_of(&object)
                .ok_or_else(|| PredictError::Argument(format!("object '{object}' not in scene")))?;
            Ok((position, c))
        })
        .collect()
}

/// Map an instance-granularity candidate onto a scene object, accepting
/// either the node id or the instance label. Unresolvable targets drop.
fn resolve_instance(
    mut candidate: InteractionCandidate,
    graph: &SceneGraph,
) -> Option<InteractionCandidate> {
    let raw = candidate.target.as_str().to_string();
    let id = NodeId(raw.clone());
    let resolved = match graph.node(&id) {
        Some(node) if node.layer == crate::scene::Layer::Object => Some(id),
        _ => graph.object_by_label(&raw).map(|n| n.id.clone()),
    };
    resolved.map(|object| {
        candidate.target = Target::Instance(object);
        candidate
    })
}

/// Insert shortest-path waypoint nodes between consecutive interactions.
///
/// Between each parent (root or interaction) and each child interaction, a
/// chain of path nodes traces: parent position, parent anchor place, the
/// shortest place-to-place route, child anchor place, child position —
/// subdivided so no segment exceeds `max_segment_len`. When both ends are
/// anchored at the same place the connection is a straight line. Branch
/// probabilities and interaction nodes are preserved.
pub fn ground_paths(
    mut tree: InteractionTree,
    graph: &SceneGraph,
    max_segment_len: f64,
) -> Result<InteractionTree, TreeError> {
    if !(max_segment_len > 0.0) {
        return Err(TreeError::Argument(
            "max_segment_len must be positive".into(),
        ));
    }
    if tree.is_grounded() {
        return Err(TreeError::Argument("tree is already grounded".into()));
    }
    let ids: Vec<TreeNodeId> = (0..tree.len()).collect();
    for id in ids {
        if matches!(tree.node(id).kind, TreeNodeKind::Path { .. }) {
            continue;
        }
        let children: Vec<TreeNodeId> = tree.node(id).children.clone();
        for child in children {
            if !tree.node(child).is_interaction() {
                return Err(TreeError::Argument(format!(
                    "node {child} is not an interaction node; ground_paths expects an ungrounded tree"
                )));
            }
            let polyline = route_polyline(&tree, graph, id, child)?;
            insert_chain(&mut tree, id, child, &polyline, max_segment_len)?;
        }
    }
    tree.set_grounded();
    debug_assert!(tree.validate().is_ok());
    Ok(tree)
}

/// Waypoint positions from node `from` to interaction `to`, deduplicated.
fn route_polyline(
    tree: &InteractionTree,
    graph: &SceneGraph,
    from: TreeNodeId,
    to: TreeNodeId,
) -> Result<Vec<Point2>, TreeError> {
    let anchor = |id: TreeNodeId| -> Result<NodeId, TreeError> {
        match &tree.node(id).kind {
            TreeNodeKind::Root => Ok(graph.nearest_place(tree.node(id).position)),
            TreeNodeKind::Interaction(data) => graph
                .anchor_of(&data.object)
                .cloned()
                .ok_or_else(|| TreeError::UnknownObject(data.object.clone())),
            TreeNodeKind::Path { .. } => unreachable!("callers pass root/interaction nodes"),
        }
    };
    let from_place = anchor(from)?;
    let to_place = anchor(to)?;
    let mut points = vec![tree.node(from).position];
    if from_place != to_place {
        let path = graph.shortest_path(&from_place, &to_place)?;
        for wp in &path.waypoints {
            points.push(graph.position_of(wp).expect("path waypoints exist"));
        }
    }
    points.push(tree.node(to).position);
    points.dedup_by(|a, b| a.distance(*b) == 0.0);
    Ok(points)
}

/// Re-wire `child` behind a chain of path nodes along `polyline`.
fn insert_chain(
    tree: &mut InteractionTree,
    parent: TreeNodeId,
    child: TreeNodeId,
    polyline: &[Point2],
    max_segment_len: f64,
) -> Result<(), TreeError> {
    // Subdivide each polyline piece into equal segments <= max_segment_len.
    let mut stops: Vec<(Point2, f64)> = Vec::new();
    for pair in polyline.windows(2) {
        let length = pair[0].distance(pair[1]);
        let pieces = (length / max_segment_len).ceil().max(1.0) as usize;
        for i in 1..=pieces {
            let s = i as f64 / pieces as f64;
            stops.push((pair[0].lerp(pair[1], s), length / pieces as f64));
        }
    }
    if stops.len() <= 1 {
        // Zero-length route or a single short hop: direct edge.
        return Ok(());
    }
    // All stops but the last become path nodes; the final stop is the
    // interaction node itself.
    tree.detach_child(parent, child);
    let mut cursor = parent;
    for &(position, segment) in &stops[..stops.len() - 1] {
        cursor = tree.add_path_node(cursor, position, segment)?;
    }
    tree.attach_child(cursor, child);
    Ok(())
}
