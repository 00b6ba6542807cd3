//! Natural-language scene serialization.
//!
//! The templates are versioned so that predictor fixtures keyed on the
//! template version stay stable. Output is a pure function of the graph:
//! rooms, connections, and objects are rendered in id order.

use std::collections::BTreeMap;

use super::{Granularity, Layer, NodeId, SceneGraph};

/// Version tag of the sentence templates below.
pub const SCENE_TEXT_VERSION: &str = "v1";

pub(super) fn describe(graph: &SceneGraph, granularity: Granularity) -> String {
    let rooms: Vec<_> = graph.layer_nodes(Layer::Room).collect();
    let room_label = |id: &NodeId| graph.node(id).expect("validated").instance_label.clone();

    let mut out = String::new();
    let names: Vec<&str> = rooms.iter().map(|r| r.instance_label.as_str()).collect();
    out.push_str(&format!(
        "In the environment, there are the rooms: {}.",
        names.join(", ")
    ));

    let connections: Vec<String> = graph
        .room_connections()
        .map(|(a, b)| format!("{} - {}", room_label(a), room_label(b)))
        .collect();
    if connections.is_empty() {
        out.push_str(" room connections: none.");
    } else {
        out.push_str(&format!(" room connections: {}.", connections.join(", ")));
    }

    out.push_str(" These objects are in the environment:");
    for room in &rooms {
        match granularity {
            Granularity::Semantic => {
                // One count-phrase per (room, class): "there are 4 chairs".
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for obj in graph.layer_nodes(Layer::Object) {
                    if graph.room_of(&obj.id) == Some(&room.id) {
                        let class = obj.semantic_class.as_deref().unwrap_or_default();
                        *counts.entry(class).or_insert(0) += 1;
                    }
                }
                for (class, count) in counts {
                    if count == 1 {
                        out.push_str(&format!(
                            " In the {}, there is 1 {}.",
                            room.instance_label, class
                        ));
                    } else {
                        out.push_str(&format!(
                            " In the {}, there are {} {}s.",
                            room.instance_label, count, class
                        ));
                    }
                }
            }
            Granularity::Instance => {
                for obj in graph.layer_nodes(Layer::Object) {
                    if graph.room_of(&obj.id) == Some(&room.id) {
                        out.push_str(&format!(
                            " In the {}, there is {} ({}).",
                            room.instance_label,
                            obj.instance_label,
                            obj.semantic_class.as_deref().unwrap_or_default()
                        ));
                    }
                }
            }
        }
    }
    out
}
