//! Hierarchical scene graphs: objects, places, and rooms.
//!
//! A scene is a layered graph. Object and room nodes carry semantics; place
//! nodes and their intra-layer edges describe the traversable free space.
//! All spatial reasoning (shortest paths, nearest-place anchoring, proximity
//! ranking of object instances) happens over the places layer.
//!
//! Graphs are immutable after [`SceneGraph::load`]; every query is read-only.

mod describe;
mod schema;

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

pub use describe::SCENE_TEXT_VERSION;

/// Identifier of a scene-graph node, unique within a scene.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// Layer a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Object,
    Place,
    Room,
}

/// One node of the scene graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub id: NodeId,
    pub layer: Layer,
    /// Semantic class, set for object and room nodes.
    pub semantic_class: Option<String>,
    /// Human-readable label, unique across the scene.
    pub instance_label: String,
    /// Position on the floor plane (room nodes: centroid), meters.
    pub position: Point2,
}

/// How distances to object instances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    /// Shortest-path distance over the places layer (respects walls).
    #[default]
    Geodesic,
    /// Straight-line distance, offered for ablation.
    Euclidean,
}

/// Result of a shortest-path query over the places layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    /// Ordered place ids, starting at `from` and ending at `to`.
    pub waypoints: Vec<NodeId>,
    /// Total length in meters; sum of consecutive waypoint distances.
    pub length: f64,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scene schema violation: {0}")]
    Schema(String),
    #[error("scene validation failed: {0}")]
    Validation(String),
    #[error("places layer is disconnected: {} components, e.g. starting at {}", components.len(), components.iter().map(|c| c[0].as_str()).collect::<Vec<_>>().join(", "))]
    DisconnectedPlaces { components: Vec<Vec<NodeId>> },
    #[error("node '{0}' is not a place node")]
    NotAPlace(NodeId),
    #[error("unknown node id '{0}'")]
    UnknownNode(NodeId),
    #[error("internal scene-graph error: {0}")]
    Internal(String),
}

/// Immutable, validated scene graph.
///
/// Invariants established at load time:
/// * every node belongs to exactly one layer;
/// * every object has exactly one edge to a room and an anchor place;
/// * the places layer is non-empty and connected;
/// * all positions are finite, all place-edge lengths strictly positive;
/// * instance labels are unique across the scene.
#[derive(Debug, Clone)]
pub struct SceneGraph {
    name: String,
    nodes: BTreeMap<NodeId, SceneNode>,
    /// Place ids in sorted order; index into this is the place index.
    place_order: Vec<NodeId>,
    place_index: HashMap<NodeId, usize>,
    /// Adjacency over places, by place index, neighbors sorted by index.
    place_adj: Vec<Vec<(usize, f64)>>,
    /// Normalized (min id, max id) room-room connections.
    room_connections: BTreeSet<(NodeId, NodeId)>,
    /// Object id -> containing room id.
    object_room: BTreeMap<NodeId, NodeId>,
    /// Object id -> nearest place id, precomputed.
    object_anchor: BTreeMap<NodeId, NodeId>,
    /// Semantic class -> object ids of that class, sorted.
    objects_by_class: BTreeMap<String, Vec<NodeId>>,
}

impl SceneGraph {
    /// Parse and validate a scene document (see the file schema in
    /// [`schema`]). Rejects anything violating the graph invariants.
    pub fn load(document: &str) -> Result<SceneGraph, SceneError> {
        schema::parse(document)
    }

    /// Load from a file path.
    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<SceneGraph, SceneError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| SceneError::Schema(format!("cannot read scene file: {e}")))?;
        Self::load(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node(&self, id: &NodeId) -> Option<&SceneNode> {
        self.nodes.get(id)
    }

    pub fn position_of(&self, id: &NodeId) -> Option<Point2> {
        self.nodes.get(id).map(|n| n.position)
    }

    /// Nodes of one layer, in id order.
    pub fn layer_nodes(&self, layer: Layer) -> impl Iterator<Item = &SceneNode> {
        self.nodes.values().filter(move |n| n.layer == layer)
    }

    pub fn room_of(&self, object: &NodeId) -> Option<&NodeId> {
        self.object_room.get(object)
    }

    /// The place an object is anchored to (nearest place to its position).
    pub fn anchor_of(&self, object: &NodeId) -> Option<&NodeId> {
        self.object_anchor.get(object)
    }

    /// Look up an object node by its instance label.
    pub fn object_by_label(&self, label: &str) -> Option<&SceneNode> {
        self.nodes
            .values()
            .find(|n| n.layer == Layer::Object && n.instance_label == label)
    }

    pub fn objects_of_class(&self, class: &str) -> &[NodeId] {
        self.objects_by_class
            .get(class)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn room_connections(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.room_connections.iter()
    }

    /// Shortest path between two place nodes over the places layer.
    ///
    /// Dijkstra with Euclidean edge weights; ties broken by place id so the
    /// returned waypoint list is deterministic.
    pub fn shortest_path(&self, from: &NodeId, to: &NodeId) -> Result<PathResult, SceneError> {
        let src = self.place_idx(from)?;
        let dst = self.place_idx(to)?;
        if src == dst {
            return Ok(PathResult {
                waypoints: vec![from.clone()],
                length: 0.0,
            });
        }
        let (dist, prev) = self.dijkstra(src, Some(dst));
        if !dist[dst].is_finite() {
            return Err(SceneError::Internal(format!(
                "place '{to}' unreachable from '{from}'"
            )));
        }
        let mut waypoints = Vec::new();
        let mut cur = dst;
        loop {
            waypoints.push(self.place_order[cur].clone());
            if cur == src {
                break;
            }
            cur = prev[cur];
        }
        waypoints.reverse();
        Ok(PathResult {
            waypoints,
            length: dist[dst],
        })
    }

    /// Geodesic distances from one place to every place, by place index.
    pub(crate) fn geodesic_from(&self, from: &NodeId) -> Result<Vec<f64>, SceneError> {
        let src = self.place_idx(from)?;
        Ok(self.dijkstra(src, None).0)
    }

    /// Adjacent places of a place with edge lengths, ordered by id.
    pub fn place_neighbors(&self, place: &NodeId) -> Result<Vec<(NodeId, f64)>, SceneError> {
        let idx = self.place_idx(place)?;
        Ok(self.place_adj[idx]
            .iter()
            .map(|&(v, w)| (self.place_order[v].clone(), w))
            .collect())
    }

    /// The place node closest to `position`; ties go to the smaller id.
    pub fn nearest_place(&self, position: Point2) -> NodeId {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, id) in self.place_order.iter().enumerate() {
            let d = self.nodes[id].position.distance(position);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        self.place_order[best].clone()
    }

    /// Up to `k` objects of `semantic_class`, closest first.
    ///
    /// Distance is measured from the place `from` to each object's anchor
    /// place over the places layer (or straight-line to the object with
    /// [`DistanceMetric::Euclidean`]). An absent class yields an empty list.
    pub fn k_nearest_instances(
        &self,
        semantic_class: &str,
        from: &NodeId,
        k: usize,
        metric: DistanceMetric,
    ) -> Result<Vec<(NodeId, f64)>, SceneError> {
        let objects = self.objects_of_class(semantic_class);
        let mut ranked: Vec<(NodeId, f64)> = match metric {
            DistanceMetric::Geodesic => {
                let dist = self.geodesic_from(from)?;
                objects
                    .iter()
                    .map(|id| {
                        let anchor = &self.object_anchor[id];
                        (id.clone(), dist[self.place_index[anchor]])
                    })
                    .collect()
            }
            DistanceMetric::Euclidean => {
                let origin = self
                    .position_of(from)
                    .ok_or_else(|| SceneError::UnknownNode(from.clone()))?;
                objects
                    .iter()
                    .map(|id| (id.clone(), self.nodes[id].position.distance(origin)))
                    .collect()
            }
        };
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked)
    }

    /// Full-sentence hierarchical description of the scene (template `v1`).
    pub fn describe(&self, granularity: Granularity) -> String {
        describe::describe(self, granularity)
    }

    fn place_idx(&self, id: &NodeId) -> Result<usize, SceneError> {
        match self.place_index.get(id) {
            Some(&i) => Ok(i),
            None => {
                if self.nodes.contains_key(id) {
                    Err(SceneError::NotAPlace(id.clone()))
                } else {
                    Err(SceneError::UnknownNode(id.clone()))
                }
            }
        }
    }

    /// Dijkstra over place indices. Returns (distances, predecessors).
    fn dijkstra(&self, src: usize, stop_at: Option<usize>) -> (Vec<f64>, Vec<usize>) {
        let n = self.place_order.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: src,
        });
        while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if stop_at == Some(u) {
                break;
            }
            for &(v, w) in &self.place_adj[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                    heap.push(HeapEntry { dist: nd, node: v });
                }
            }
        }
        (dist, prev)
    }
}

/// Granularity of object references in scene text and predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Refer to objects by semantic class, condensed per room.
    #[default]
    Semantic,
    /// Refer to each object instance by its unique label.
    Instance,
}

/// Min-heap entry for Dijkstra; ties broken by node index so traversal
/// order (and therefore returned paths) is deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests;
