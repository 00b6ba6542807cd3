//! Scene-graph file schema and validation.
//!
//! A scene is a single UTF-8 JSON document:
//!
//! ```json
//! {
//!   "name": "home",
//!   "nodes": [
//!     {"id": "r1", "layer": "room",   "class": "kitchen", "label": "kitchen", "pos": [2.0, 3.0]},
//!     {"id": "p1", "layer": "place",  "pos": [2.0, 2.5]},
//!     {"id": "o1", "layer": "object", "class": "sink", "label": "sink_1", "pos": [2.2, 2.9]}
//!   ],
//!   "edges": [["r1", "p1"], ["o1", "r1"]]
//! }
//! ```
//!
//! `label` defaults to the node id; `pos` accepts `[x, y]` or `[x, y, z]`
//! (the z coordinate is dropped — the engine works on the floor plane).
//! Accepted edge kinds: place-place, room-room, object-room, place-room.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Deserialize;

use super::{Layer, NodeId, SceneError, SceneGraph, SceneNode};
use crate::geometry::Point2;

#[derive(Debug, Deserialize)]
struct SceneFile {
    name: String,
    nodes: Vec<NodeSpec>,
    #[serde(default)]
    edges: Vec<(String, String)>,
}

#[derive(Debug, Deserialize)]
struct NodeSpec {
    id: String,
    layer: String,
    #[serde(default)]
    class: Option<String>,
    #[serde(default)]
    label: Option<String>,
    pos: Vec<f64>,
}

pub(super) fn parse(document: &str) -> Result<SceneGraph, SceneError> {
    let file: SceneFile = serde_json::from_str(document)?;

    let mut nodes: BTreeMap<NodeId, SceneNode> = BTreeMap::new();
    let mut labels: HashMap<String, NodeId> = HashMap::new();
    for spec in file.nodes {
        let id = NodeId(spec.id.clone());
        if nodes.contains_key(&id) {
            return Err(SceneError::Schema(format!("duplicate node id '{id}'")));
        }
        let layer = match spec.layer.as_str() {
            "object" => Layer::Object,
            "place" => Layer::Place,
            "room" => Layer::Room,
            other => {
                return Err(SceneError::Schema(format!(
                    "node '{id}': unknown layer '{other}'"
                )))
            }
        };
        let position = match spec.pos.len() {
            2 | 3 => Point2::new(spec.pos[0], spec.pos[1]),
            n => {
                return Err(SceneError::Schema(format!(
                    "node '{id}': pos must have 2 or 3 entries, got {n}"
                )))
            }
        };
        if !position.is_finite() {
            return Err(SceneError::Validation(format!(
                "node '{id}': position is not finite"
            )));
        }
        if matches!(layer, Layer::Object | Layer::Room)
            && spec.class.as_deref().map_or(true, str::is_empty)
        {
            return Err(SceneError::Validation(format!(
                "node '{id}': {} nodes require a non-empty class",
                spec.layer
            )));
        }
        let label = spec.label.unwrap_or_else(|| spec.id.clone());
        if let Some(holder) = labels.insert(label.clone(), id.clone()) {
            return Err(SceneError::Validation(format!(
                "label '{label}' used by both '{holder}' and '{id}'"
            )));
        }
        let node = SceneNode {
            id: id.clone(),
            layer,
            semantic_class: spec.class,
            instance_label: label,
            position,
        };
        nodes.insert(id, node);
    }

    let place_order: Vec<NodeId> = nodes
        .values()
        .filter(|n| n.layer == Layer::Place)
        .map(|n| n.id.clone())
        .collect();
    if place_order.is_empty() {
        return Err(SceneError::Validation(
            "scene has no place nodes; the places layer must be non-empty".into(),
        ));
    }
    if !nodes.values().any(|n| n.layer == Layer::Room) {
        return Err(SceneError::Validation("scene has no room nodes".into()));
    }
    let place_index: HashMap<NodeId, usize> = place_order
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();

    let mut place_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); place_order.len()];
    let mut room_connections: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut object_room: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut seen_edges: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();

    for (raw_a, raw_b) in &file.edges {
        let a = NodeId(raw_a.clone());
        let b = NodeId(raw_b.clone());
        let edge_name = format!("[{a}, {b}]");
        if a == b {
            return Err(SceneError::Schema(format!(
                "edge {edge_name}: self-loops are not allowed"
            )));
        }
        let (na, nb) = match (nodes.get(&a), nodes.get(&b)) {
            (Some(na), Some(nb)) => (na, nb),
            _ => {
                return Err(SceneError::Schema(format!(
                    "edge {edge_name}: references an unknown node"
                )))
            }
        };
        let key = if a < b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        if !seen_edges.insert(key.clone()) {
            continue; // duplicate of an already-recorded undirected edge
        }
        match (na.layer, nb.layer) {
            (Layer::Place, Layer::Place) => {
                let len = na.position.distance(nb.position);
                if len <= 0.0 {
                    return Err(SceneError::Validation(format!(
                        "edge {edge_name}: place edge has zero length"
                    )));
                }
                let ia = place_index[&a];
                let ib = place_index[&b];
                place_adj[ia].push((ib, len));
                place_adj[ib].push((ia, len));
            }
            (Layer::Room, Layer::Room) => {
                room_connections.insert(key);
            }
            (Layer::Object, Layer::Room) | (Layer::Room, Layer::Object) => {
                let (obj, room) = if na.layer == Layer::Object {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                };
                if let Some(prior) = object_room.insert(obj.clone(), room) {
                    return Err(SceneError::Validation(format!(
                        "object '{obj}' is linked to more than one room ('{prior}' and another)"
                    )));
                }
            }
            (Layer::Place, Layer::Room) | (Layer::Room, Layer::Place) => {
                // Room-place containment edges are accepted but the engine
                // derives everything it needs from positions.
            }
            _ => {
                return Err(SceneError::Schema(format!(
                    "edge {edge_name}: unsupported edge between {} and {} layers",
                    layer_name(na.layer),
                    layer_name(nb.layer)
                )));
            }
        }
    }

    for adj in &mut place_adj {
        adj.sort_by(|x, y| x.0.cmp(&y.0));
    }

    for n in nodes.values().filter(|n| n.layer == Layer::Object) {
        if !object_room.contains_key(&n.id) {
            return Err(SceneError::Validation(format!(
                "object '{}' has no edge to a room",
                n.id
            )));
        }
    }

    let components = place_components(&place_order, &place_adj);
    if components.len() > 1 {
        return Err(SceneError::DisconnectedPlaces { components });
    }

    let mut objects_by_class: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
    for n in nodes.values().filter(|n| n.layer == Layer::Object) {
        objects_by_class
            .entry(n.semantic_class.clone().unwrap_or_default())
            .or_default()
            .push(n.id.clone());
    }

    let mut graph = SceneGraph {
        name: file.name,
        nodes,
        place_order,
        place_index,
        place_adj,
        room_connections,
        object_room,
        object_anchor: BTreeMap::new(),
        objects_by_class,
    };

    // Anchor every object to its nearest place, once, at load time.
    let anchors: BTreeMap<NodeId, NodeId> = graph
        .layer_nodes(Layer::Object)
        .map(|n| (n.id.clone(), graph.nearest_place(n.position)))
        .collect();
    graph.object_anchor = anchors;

    Ok(graph)
}

fn layer_name(layer: Layer) -> &'static str {
    match layer {
        Layer::Object => "object",
        Layer::Place => "place",
        Layer::Room => "room",
    }
}

/// Connected components of the places subgraph, each sorted by id.
fn place_components(order: &[NodeId], adj: &[Vec<(usize, f64)>]) -> Vec<Vec<NodeId>> {
    let mut seen = vec![false; order.len()];
    let mut components = Vec::new();
    for start in 0..order.len() {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen[start] = true;
        while let Some(u) = stack.pop() {
            comp.push(order[u].clone());
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        comp.sort();
        components.push(comp);
    }
    components
}
