//! Interaction-sequence trees.
//!
//! The tree is rooted at the agent's current position. Interaction nodes
//! are predicted human-object interactions; after grounding, path nodes
//! trace the shortest traversable route between consecutive interactions.
//! Branch probabilities are normalized per sibling group so progression
//! through the tree is a proper stochastic process.

mod build;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::Point2;
use crate::predict::{InteractionCandidate, PredictError};
use crate::scene::{DistanceMetric, Granularity, NodeId, SceneError};

pub use build::{build_tree, ground_paths};

/// Index of a node within its tree.
pub type TreeNodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNodeKind {
    /// The agent's position at prediction time.
    Root,
    Interaction(InteractionData),
    /// Waypoint on the route between two interactions.
    Path {
        /// Distance from the parent node, meters.
        segment_length: f64,
    },
}

/// Payload of an interaction node.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionData {
    pub object: NodeId,
    pub action: String,
    /// Mean duration of the interaction, seconds.
    pub duration_s: f64,
    /// Probability of choosing this interaction among its siblings,
    /// normalized to sum to 1 per branch group.
    pub branch_probability: f64,
    /// Originating candidate, with the raw (un-normalized) probability.
    pub candidate: InteractionCandidate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: TreeNodeId,
    pub parent: Option<TreeNodeId>,
    pub children: Vec<TreeNodeId>,
    pub position: Point2,
    pub kind: TreeNodeKind,
}

impl TreeNode {
    pub fn is_interaction(&self) -> bool {
        matches!(self.kind, TreeNodeKind::Interaction(_))
    }

    pub fn interaction(&self) -> Option<&InteractionData> {
        match &self.kind {
            TreeNodeKind::Interaction(data) => Some(data),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("root expansion failed: {0}")]
    Root(#[source] PredictError),
    #[error("every branch of the tree was pruned")]
    AllBranchesPruned,
    #[error("invalid tree argument: {0}")]
    Argument(String),
    #[error("object '{0}' is not part of the scene")]
    UnknownObject(NodeId),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// One enumerated root-to-leaf interaction sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEntry {
    /// Interaction node ids along the branch, root side first.
    pub interactions: Vec<TreeNodeId>,
    /// Product of branch probabilities along the branch.
    pub probability: f64,
}

/// Tree of predicted interactions, optionally grounded with path nodes.
#[derive(Debug, Clone)]
pub struct InteractionTree {
    nodes: Vec<TreeNode>,
    /// Interaction depth the tree was expanded to.
    depth: usize,
    grounded: bool,
    /// Pruned branches and grounding drop notes, for run manifests.
    warnings: Vec<String>,
}

impl InteractionTree {
    /// A fresh tree containing only the root at the agent position.
    pub fn new(root_position: Point2) -> Self {
        InteractionTree {
            nodes: vec![TreeNode {
                id: 0,
                parent: None,
                children: Vec::new(),
                position: root_position,
                kind: TreeNodeKind::Root,
            }],
            depth: 0,
            grounded: false,
            warnings: Vec::new(),
        }
    }

    pub fn root(&self) -> TreeNodeId {
        0
    }

    pub fn node(&self, id: TreeNodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_grounded(&self) -> bool {
        self.grounded
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn interaction_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_interaction()).count()
    }

    /// Append an interaction node under `parent`. The candidate target must
    /// be instance-granularity; its probability seeds the branch
    /// probability until [`normalize_branches`](Self::normalize_branches).
    pub fn add_interaction(
        &mut self,
        parent: TreeNodeId,
        position: Point2,
        candidate: InteractionCandidate,
    ) -> Result<TreeNodeId, TreeError> {
        let object = match &candidate.target {
            crate::predict::Target::Instance(id) => id.clone(),
            crate::predict::Target::Class(class) => {
                return Err(TreeError::Argument(format!(
                    "interaction nodes require instance targets; got class '{class}'"
                )));
            }
        };
        self.check_parent(parent)?;
        if matches!(self.nodes[parent].kind, TreeNodeKind::Path { .. })
            && !self.nodes[parent].children.is_empty()
        {
            return Err(TreeError::Argument(
                "path nodes have exactly one child".into(),
            ));
        }
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            id,
            parent: Some(parent),
            children: Vec::new(),
            position,
            kind: TreeNodeKind::Interaction(InteractionData {
                object,
                action: candidate.action.clone(),
                duration_s: candidate.duration_s,
                branch_probability: candidate.probability,
                candidate,
            }),
        });
        self.nodes[parent].children.push(id);
        Ok(id)
    }

    /// Append a path (waypoint) node under `parent`.
    pub fn add_path_node(
        &mut self,
        parent: TreeNodeId,
        position: Point2,
        segment_length: f64,
    ) -> Result<TreeNodeId, TreeError> {
        self.check_parent(parent)?;
        if !(segment_length > 0.0) || !segment_length.is_finite() {
            return Err(TreeError::Argument(format!(
                "path segment length must be positive, got {segment_length}"
            )));
        }
        if matches!(self.nodes[parent].kind, TreeNodeKind::Path { .. })
            && !self.nodes[parent].children.is_empty()
        {
            return Err(TreeError::Argument(
                "path nodes have exactly one child".into(),
            ));
        }
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            id,
            parent: Some(parent),
            children: Vec::new(),
            position,
            kind: TreeNodeKind::Path { segment_length },
        });
        self.nodes[parent].children.push(id);
        Ok(id)
    }

    fn check_parent(&self, parent: TreeNodeId) -> Result<(), TreeError> {
        if parent >= self.nodes.len() {
            return Err(TreeError::Argument(format!("no node with id {parent}")));
        }
        Ok(())
    }

    /// The interaction node a branch-entry child leads to: the child itself
    /// or the first interaction at the end of its path chain.
    pub fn downstream_interaction(&self, mut id: TreeNodeId) -> Option<TreeNodeId> {
        loop {
            match &self.nodes[id].kind {
                TreeNodeKind::Interaction(_) => return Some(id),
                TreeNodeKind::Path { .. } => {
                    id = *self.nodes[id].children.first()?;
                }
                TreeNodeKind::Root => return None,
            }
        }
    }

    /// Interaction children of a node, looking through path chains.
    pub fn interaction_children(&self, id: TreeNodeId) -> Vec<TreeNodeId> {
        self.nodes[id]
            .children
            .iter()
            .filter_map(|&c| self.downstream_interaction(c))
            .collect()
    }

    /// Normalized probability of entering the branch that starts at `id`
    /// (1 for the root).
    pub fn branch_probability(&self, id: TreeNodeId) -> f64 {
        match self.downstream_interaction(id) {
            Some(i) => match &self.nodes[i].kind {
                TreeNodeKind::Interaction(data) => data.branch_probability,
                _ => unreachable!(),
            },
            None => 1.0,
        }
    }

    /// Re-derive all sibling branch probabilities from the raw candidate
    /// probabilities so each branch group sums to 1.
    pub fn normalize_branches(&mut self) {
        for id in 0..self.nodes.len() {
            if matches!(self.nodes[id].kind, TreeNodeKind::Path { .. }) {
                continue;
            }
            let group = self.interaction_children(id);
            if group.is_empty() {
                continue;
            }
            let total: f64 = group
                .iter()
                .map(|&c| match &self.nodes[c].kind {
                    TreeNodeKind::Interaction(d) => d.candidate.probability,
                    _ => unreachable!(),
                })
                .sum();
            for &c in &group {
                if let TreeNodeKind::Interaction(d) = &mut self.nodes[c].kind {
                    d.branch_probability = d.candidate.probability / total;
                }
            }
        }
    }

    /// Interaction depth of a node (number of interaction nodes on the
    /// root path, including itself).
    pub fn interaction_depth(&self, id: TreeNodeId) -> usize {
        let mut depth = 0;
        let mut cur = Some(id);
        while let Some(c) = cur {
            if self.nodes[c].is_interaction() {
                depth += 1;
            }
            cur = self.nodes[c].parent;
        }
        depth
    }

    /// All root-to-leaf interaction sequences with joint probabilities,
    /// sorted most likely first. Probabilities over all leaves sum to 1.
    pub fn enumerate_sequences(&self) -> Vec<SequenceEntry> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root(), Vec::new(), 1.0f64)];
        while let Some((id, seq, prob)) = stack.pop() {
            let node = &self.nodes[id];
            let (seq, prob) = match &node.kind {
                TreeNodeKind::Interaction(data) => {
                    let mut seq = seq;
                    seq.push(id);
                    (seq, prob * data.branch_probability)
                }
                _ => (seq, prob),
            };
            if node.children.is_empty() {
                out.push(SequenceEntry {
                    interactions: seq,
                    probability: prob,
                });
            } else {
                for &c in node.children.iter().rev() {
                    stack.push((c, seq.clone(), prob));
                }
            }
        }
        out.sort_by(|a, b| {
            b.probability
                .total_cmp(&a.probability)
                .then_with(|| a.interactions.cmp(&b.interactions))
        });
        out
    }

    /// Check the structural invariants; used by tests and debug builds.
    pub fn validate(&self) -> Result<(), TreeError> {
        let fail = |msg: String| Err(TreeError::Argument(msg));
        if self.nodes.is_empty() || !matches!(self.nodes[0].kind, TreeNodeKind::Root) {
            return fail("node 0 must be the root".into());
        }
        for node in &self.nodes {
            match node.kind {
                TreeNodeKind::Root => {
                    if node.parent.is_some() || node.id != 0 {
                        return fail("exactly one root without parent".into());
                    }
                }
                TreeNodeKind::Path { segment_length } => {
                    if node.children.len() != 1 {
                        return fail(format!("path node {} must have one child", node.id));
                    }
                    if !(segment_length > 0.0) {
                        return fail(format!("path node {} has zero segment", node.id));
                    }
                }
                TreeNodeKind::Interaction(_) => {}
            }
            if let Some(p) = node.parent {
                let listed = self.nodes[p].children.iter().filter(|&&c| c == node.id);
                if listed.count() != 1 {
                    return fail(format!("node {} not linked from its parent", node.id));
                }
            }
            for &c in &node.children {
                if self.nodes[c].parent != Some(node.id) {
                    return fail(format!("child {c} does not point back to {}", node.id));
                }
            }
        }
        for id in 0..self.nodes.len() {
            let group = self.interaction_children(id);
            if matches!(self.nodes[id].kind, TreeNodeKind::Path { .. }) || group.is_empty() {
                continue;
            }
            let sum: f64 = group.iter().map(|&c| self.branch_probability(c)).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return fail(format!(
                    "branch probabilities under node {id} sum to {sum}, not 1"
                ));
            }
        }
        Ok(())
    }

    /// Stable JSON export of the tree for debugging and golden tests.
    pub fn export_json(&self) -> String {
        #[derive(Serialize)]
        struct NodeExport<'a> {
            id: TreeNodeId,
            kind: &'static str,
            #[serde(skip_serializing_if = "Option::is_none")]
            parent: Option<TreeNodeId>,
            children: &'a [TreeNodeId],
            position: [f64; 2],
            #[serde(skip_serializing_if = "Option::is_none")]
            object: Option<&'a str>,
            #[serde(skip_serializing_if = "Option::is_none")]
            action: Option<&'a str>,
            #[serde(skip_serializing_if = "Option::is_none")]
            duration_s: Option<f64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            branch_probability: Option<f64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            raw_probability: Option<f64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            segment_length: Option<f64>,
        }
        #[derive(Serialize)]
        struct TreeExport<'a> {
            depth: usize,
            grounded: bool,
            nodes: Vec<NodeExport<'a>>,
            warnings: &'a [String],
        }
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let data = n.interaction();
                NodeExport {
                    id: n.id,
                    kind: match n.kind {
                        TreeNodeKind::Root => "root",
                        TreeNodeKind::Interaction(_) => "interaction",
                        TreeNodeKind::Path { .. } => "path",
                    },
                    parent: n.parent,
                    children: &n.children,
                    position: [n.position.x, n.position.y],
                    object: data.map(|d| d.object.as_str()),
                    action: data.map(|d| d.action.as_str()),
                    duration_s: data.map(|d| d.duration_s),
                    branch_probability: data.map(|d| d.branch_probability),
                    raw_probability: data.map(|d| d.candidate.probability),
                    segment_length: match n.kind {
                        TreeNodeKind::Path { segment_length } => Some(segment_length),
                        _ => None,
                    },
                }
            })
            .collect();
        let export = TreeExport {
            depth: self.depth,
            grounded: self.grounded,
            nodes,
            warnings: &self.warnings,
        };
        serde_json::to_string_pretty(&export).expect("tree export serializes")
    }

    pub(crate) fn push_warning(&mut self, warning: String) {
        self.warnings.push(warning);
    }

    pub(crate) fn set_depth(&mut self, depth: usize) {
        self.depth = depth;
    }

    pub(crate) fn set_grounded(&mut self) {
        self.grounded = true;
    }

    /// Candidate chain from the root to `id` (provenance of a branch).
    pub(crate) fn candidate_chain(&self, id: TreeNodeId) -> Vec<InteractionCandidate> {
        let mut chain = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            if let TreeNodeKind::Interaction(data) = &self.nodes[c].kind {
                chain.push(data.candidate.clone());
            }
            cur = self.nodes[c].parent;
        }
        chain.reverse();
        chain
    }

    /// Unlink `child` from `parent` (the node itself stays allocated until
    /// re-attached).
    pub(crate) fn detach_child(&mut self, parent: TreeNodeId, child: TreeNodeId) {
        self.nodes[parent].children.retain(|&c| c != child);
        self.nodes[child].parent = None;
    }

    /// Attach an existing node under a new parent.
    pub(crate) fn attach_child(&mut self, parent: TreeNodeId, child: TreeNodeId) {
        self.nodes[parent].children.push(child);
        self.nodes[child].parent = Some(parent);
    }

    /// Tombstone a childless node and every ancestor that becomes
    /// childless; call [`compact`](Self::compact) afterwards.
    pub(crate) fn prune_upwards(&self, id: TreeNodeId, dead: &mut [bool]) {
        let mut cur = id;
        while !self.nodes[cur].children.iter().any(|&c| !dead[c]) {
            dead[cur] = true;
            match self.nodes[cur].parent {
                Some(p) => cur = p,
                None => break,
            }
        }
    }

    /// Rebuild the node vector without tombstoned nodes, remapping ids
    /// (pre-order preserving). Returns false if the root itself died.
    pub(crate) fn compact(&mut self, dead: &[bool]) -> bool {
        if dead[0] {
            return false;
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut kept = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            if !dead[node.id] {
                remap[i] = kept;
                kept += 1;
            }
        }
        let mut nodes = Vec::with_capacity(kept);
        for node in self.nodes.drain(..) {
            if dead[node.id] {
                continue;
            }
            let mut node = node;
            node.id = remap[node.id];
            node.parent = node.parent.map(|p| remap[p]);
            node.children = node
                .children
                .iter()
                .filter(|&&c| remap[c] != usize::MAX)
                .map(|&c| remap[c])
                .collect();
            nodes.push(node);
        }
        self.nodes = nodes;
        true
    }
}

/// Parameters of tree construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeParams {
    /// Branching width per prediction (candidates kept per call).
    pub width: usize,
    /// Interaction depth to expand to.
    pub depth: usize,
    /// Instances expanded per semantic class.
    pub instances_per_class: usize,
    pub granularity: Granularity,
    /// Path nodes are subdivided so no segment exceeds this, meters.
    pub max_segment_len: f64,
    /// Distance used to rank instances when grounding semantic classes.
    pub distance_metric: DistanceMetric,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            width: 6,
            depth: 2,
            instances_per_class: 3,
            granularity: Granularity::Semantic,
            max_segment_len: 1.0,
            distance_metric: DistanceMetric::Geodesic,
        }
    }
}
