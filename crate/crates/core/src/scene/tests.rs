use serde_json::json;

use super::*;

fn minimal_scene() -> String {
    json!({
        "name": "mini",
        "nodes": [
            {"id": "r1", "layer": "room", "class": "kitchen", "label": "kitchen", "pos": [0.0, 0.0]},
            {"id": "p1", "layer": "place", "pos": [0.5, 0.0]},
            {"id": "o1", "layer": "object", "class": "sink", "label": "sink_1", "pos": [0.6, 0.2]}
        ],
        "edges": [["r1", "p1"], ["o1", "r1"]]
    })
    .to_string()
}

/// Line of places 1 m apart: p0 - p1 - ... - p{n-1}, all in one room.
fn line_scene(n: usize) -> String {
    let mut nodes = vec![json!({"id": "r1", "layer": "room", "class": "hall", "label": "hall", "pos": [0.0, 1.0]})];
    let mut edges = vec![];
    for i in 0..n {
        nodes.push(json!({"id": format!("p{i}"), "layer": "place", "pos": [i as f64, 0.0]}));
        if i > 0 {
            edges.push(json!([format!("p{}", i - 1), format!("p{i}")]));
        }
    }
    json!({"name": "line", "nodes": nodes, "edges": edges}).to_string()
}

#[test]
fn loads_minimal_scene() {
    let g = SceneGraph::load(&minimal_scene()).unwrap();
    assert_eq!(g.nodes.len(), 3);
    assert_eq!(g.anchor_of(&"o1".into()), Some(&"p1".into()));
    assert_eq!(g.room_of(&"o1".into()), Some(&"r1".into()));
}

#[test]
fn rejects_disconnected_places() {
    let doc = json!({
        "name": "split",
        "nodes": [
            {"id": "r1", "layer": "room", "class": "a", "pos": [0, 0]},
            {"id": "p1", "layer": "place", "pos": [0, 0]},
            {"id": "p2", "layer": "place", "pos": [1, 0]},
            {"id": "p3", "layer": "place", "pos": [5, 0]},
            {"id": "p4", "layer": "place", "pos": [6, 0]}
        ],
        "edges": [["p1", "p2"], ["p3", "p4"]]
    })
    .to_string();
    match SceneGraph::load(&doc) {
        Err(SceneError::DisconnectedPlaces { components }) => {
            assert_eq!(components.len(), 2);
        }
        other => panic!("expected disconnected-places error, got {other:?}"),
    }
}

#[test]
fn rejects_schema_violations() {
    let bad_edge = json!({
        "name": "x",
        "nodes": [
            {"id": "r1", "layer": "room", "class": "a", "pos": [0, 0]},
            {"id": "p1", "layer": "place", "pos": [0, 0]}
        ],
        "edges": [["p1", "ghost"]]
    })
    .to_string();
    let err = SceneGraph::load(&bad_edge).unwrap_err();
    assert!(matches!(err, SceneError::Schema(_)), "{err}");
    assert!(err.to_string().contains("ghost"));

    let no_room_link = json!({
        "name": "x",
        "nodes": [
            {"id": "r1", "layer": "room", "class": "a", "pos": [0, 0]},
            {"id": "p1", "layer": "place", "pos": [0, 0]},
            {"id": "o1", "layer": "object", "class": "sink", "pos": [0, 0]}
        ],
        "edges": []
    })
    .to_string();
    let err = SceneGraph::load(&no_room_link).unwrap_err();
    assert!(err.to_string().contains("o1"));

    let zero_edge = json!({
        "name": "x",
        "nodes": [
            {"id": "r1", "layer": "room", "class": "a", "pos": [0, 0]},
            {"id": "p1", "layer": "place", "pos": [1, 1]},
            {"id": "p2", "layer": "place", "pos": [1, 1]}
        ],
        "edges": [["p1", "p2"]]
    })
    .to_string();
    assert!(SceneGraph::load(&zero_edge).is_err());
}

#[test]
fn drops_z_coordinate() {
    let doc = json!({
        "name": "x",
        "nodes": [
            {"id": "r1", "layer": "room", "class": "a", "pos": [0, 0, 3.1]},
            {"id": "p1", "layer": "place", "pos": [2, 5, 0.2]}
        ],
        "edges": []
    })
    .to_string();
    let g = SceneGraph::load(&doc).unwrap();
    assert_eq!(g.position_of(&"p1".into()), Some(Point2::new(2.0, 5.0)));
}

#[test]
fn office_scale_counts() {
    // 13 rooms, 107 objects spread over a place grid.
    let mut nodes = vec![];
    let mut edges = vec![];
    for r in 0..13 {
        nodes.push(json!({
            "id": format!("room_{r:02}"), "layer": "room",
            "class": "office", "label": format!("office_{r}"), "pos": [r as f64 * 4.0, 10.0]
        }));
    }
    for p in 0..30 {
        nodes.push(json!({"id": format!("p{p:02}"), "layer": "place", "pos": [p as f64, 0.0]}));
        if p > 0 {
            edges.push(json!([format!("p{:02}", p - 1), format!("p{p:02}")]));
        }
    }
    for o in 0..107 {
        nodes.push(json!({
            "id": format!("obj_{o:03}"), "layer": "object",
            "class": format!("class_{}", o % 9), "label": format!("obj_{o:03}"),
            "pos": [(o % 30) as f64, 1.0]
        }));
        edges.push(json!([format!("obj_{o:03}"), format!("room_{:02}", o % 13)]));
    }
    let doc = json!({"name": "office", "nodes": nodes, "edges": edges}).to_string();
    let g = SceneGraph::load(&doc).unwrap();
    assert_eq!(g.layer_nodes(Layer::Room).count(), 13);
    assert_eq!(g.layer_nodes(Layer::Object).count(), 107);
}

#[test]
fn shortest_path_identity_and_line() {
    let g = SceneGraph::load(&line_scene(3)).unwrap();
    let same = g.shortest_path(&"p1".into(), &"p1".into()).unwrap();
    assert_eq!(same.length, 0.0);
    assert_eq!(same.waypoints, vec![NodeId::from("p1")]);

    let path = g.shortest_path(&"p0".into(), &"p2".into()).unwrap();
    assert_eq!(path.length, 2.0);
    assert_eq!(
        path.waypoints,
        vec![NodeId::from("p0"), NodeId::from("p1"), NodeId::from("p2")]
    );
}

#[test]
fn shortest_path_rejects_non_places() {
    let g = SceneGraph::load(&minimal_scene()).unwrap();
    assert!(matches!(
        g.shortest_path(&"o1".into(), &"p1".into()),
        Err(SceneError::NotAPlace(_))
    ));
}

#[test]
fn nearest_place_tie_breaks_lexicographically() {
    let g = SceneGraph::load(&line_scene(3)).unwrap();
    assert_eq!(g.nearest_place(Point2::new(1.0, 0.0)), "p1".into());
    // Exactly between p0 and p1.
    assert_eq!(g.nearest_place(Point2::new(0.5, 0.0)), "p0".into());
}

#[test]
fn k_nearest_truncates_and_ranks() {
    // 4 chairs along the line, query from the far end.
    let mut nodes = vec![json!({"id": "r1", "layer": "room", "class": "kitchen", "label": "kitchen", "pos": [0, 5]})];
    let mut edges = vec![];
    for i in 0..5 {
        nodes.push(json!({"id": format!("p{i}"), "layer": "place", "pos": [i as f64, 0.0]}));
        if i > 0 {
            edges.push(json!([format!("p{}", i - 1), format!("p{i}")]));
        }
    }
    for (i, x) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
        nodes.push(json!({"id": format!("chair{i}"), "layer": "object", "class": "chair", "pos": [x, 0.1]}));
        edges.push(json!([format!("chair{i}"), "r1"]));
    }
    let doc = json!({"name": "chairs", "nodes": nodes, "edges": edges}).to_string();
    let g = SceneGraph::load(&doc).unwrap();

    let top = g
        .k_nearest_instances("chair", &"p0".into(), 3, DistanceMetric::Geodesic)
        .unwrap();
    assert_eq!(top.len(), 3);
    assert_eq!(top[0], ("chair0".into(), 1.0));
    assert_eq!(top[1], ("chair1".into(), 2.0));
    assert_eq!(top[2], ("chair2".into(), 3.0));

    let single = g
        .k_nearest_instances("missing", &"p0".into(), 3, DistanceMetric::Geodesic)
        .unwrap();
    assert!(single.is_empty());

    let one = g
        .k_nearest_instances("chair", &"p4".into(), 1, DistanceMetric::Geodesic)
        .unwrap();
    assert_eq!(one[0].0, NodeId::from("chair3"));
}

#[test]
fn describe_semantic_minimal() {
    let g = SceneGraph::load(&minimal_scene()).unwrap();
    let text = g.describe(Granularity::Semantic);
    assert!(text.contains("In the environment, there are the rooms: kitchen."));
    assert!(text.contains("there is 1 sink."));
}

#[test]
fn describe_connection_appears_once() {
    let doc = json!({
        "name": "two-rooms",
        "nodes": [
            {"id": "r1", "layer": "room", "class": "kitchen", "label": "kitchen", "pos": [0, 0]},
            {"id": "r2", "layer": "room", "class": "hall", "label": "hall", "pos": [4, 0]},
            {"id": "p1", "layer": "place", "pos": [1, 0]}
        ],
        "edges": [["r1", "r2"], ["r2", "r1"]]
    })
    .to_string();
    let g = SceneGraph::load(&doc).unwrap();
    let text = g.describe(Granularity::Semantic);
    assert_eq!(text.matches("kitchen - hall").count(), 1);
}

#[test]
fn describe_instance_lists_labels() {
    let g = SceneGraph::load(&minimal_scene()).unwrap();
    let text = g.describe(Granularity::Instance);
    assert!(text.contains("there is sink_1 (sink)."));
}

#[test]
fn describe_is_deterministic() {
    let g = SceneGraph::load(&minimal_scene()).unwrap();
    assert_eq!(
        g.describe(Granularity::Semantic),
        g.describe(Granularity::Semantic)
    );
}
