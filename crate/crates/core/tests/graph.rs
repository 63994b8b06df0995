mod common;

use std::path::Path;

use serde_json::{json, Value};

use neurodeploy_core::fixtures::{psnn_graph, qsnn_graph, PSNN_SEED};
use neurodeploy_core::graph::{from_json_str, to_json_string, Lif, SaveOptions, Shape};
use neurodeploy_core::{load_graph, save_graph, GraphBuilder, GraphError, Node};

use common::{linear_node, pool_node};

fn tiny() -> Value {
    json!({
        "format": "snngraph",
        "version": 1,
        "metadata": {},
        "nodes": {
            "in": {"type": "input", "shape": 3},
            "w": {"type": "linear", "weights": [[1.0, 0.5, -1.0], [0.0, 2.0, 0.25]]},
            "l": {"type": "lif", "tau": 10.0, "r": 10.0, "v_leak": 0.0, "threshold": 1.0},
            "out": {"type": "output", "shape": 2}
        },
        "edges": [["in", "w"], ["w", "l"], ["l", "out"]]
    })
}

fn parse(v: &Value) -> Result<neurodeploy_core::Graph, GraphError> {
    from_json_str(&v.to_string(), Path::new("."))
}

#[test]
fn inline_document_parses() {
    let g = parse(&tiny()).unwrap();
    assert_eq!(g.topological(), &["in", "w", "l", "out"]);
    assert_eq!(g.shape("l"), Some(Shape::Flat(2)));
    assert_eq!(g.count_parameters(), 6);
    assert_eq!(g.node("w").unwrap().weights().unwrap().data(), &[1.0, 0.5, -1.0, 0.0, 2.0, 0.25]);
    let again = from_json_str(&to_json_string(&g).unwrap(), Path::new(".")).unwrap();
    assert_eq!(again, g);
}

#[test]
fn fixtures_round_trip_inline_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    for (name, g) in [("psnn", psnn_graph(PSNN_SEED)), ("qsnn", qsnn_graph(PSNN_SEED))] {
        let inline = dir.path().join(format!("{name}.inline.snngraph.json"));
        save_graph(&g, &inline, &SaveOptions::default()).unwrap();
        assert_eq!(load_graph(&inline).unwrap(), g);

        let json = dir.path().join(format!("{name}.snngraph.json"));
        let opts = SaveOptions {
            sidecar: Some(dir.path().join(format!("{name}.weights.bin"))),
        };
        save_graph(&g, &json, &opts).unwrap();
        assert_eq!(load_graph(&json).unwrap(), g);
        // byte-identical on a second save
        let first = std::fs::read(&json).unwrap();
        save_graph(&load_graph(&json).unwrap(), &json, &opts).unwrap();
        assert_eq!(std::fs::read(&json).unwrap(), first);
    }
}

#[test]
fn psnn_shapes_and_size() {
    let g = psnn_graph(PSNN_SEED);
    assert_eq!(g.nodes().len(), 15);
    let s = |id: &str| g.shape(id).unwrap();
    assert_eq!(s("1"), Shape::chw(16, 15, 15));
    assert_eq!(s("3"), Shape::chw(16, 15, 15));
    assert_eq!(s("4"), Shape::chw(16, 7, 7));
    assert_eq!(s("6"), Shape::chw(8, 7, 7));
    assert_eq!(s("7"), Shape::chw(8, 3, 3));
    assert_eq!(s("8"), Shape::Flat(72));
    assert_eq!(s("10"), Shape::Flat(256));
    assert_eq!(s("12"), Shape::Flat(11));
    assert_eq!(g.count_parameters(), 25504);
    assert_eq!(g.model_size_bytes(false).unwrap(), 102016);
    assert!(matches!(g.model_size_bytes(true), Err(GraphError::MissingIntWeights { .. })));
    assert_eq!(qsnn_graph(PSNN_SEED).model_size_bytes(true).unwrap(), 25504);
}

#[test]
fn document_errors() {
    let mut v = tiny();
    v["format"] = json!("nir");
    assert!(matches!(parse(&v), Err(GraphError::Parse(_))));

    let mut v = tiny();
    v["version"] = json!(2);
    assert!(matches!(parse(&v), Err(GraphError::Parse(_))));

    let mut v = tiny();
    v["edges"].as_array_mut().unwrap().push(json!(["l", "w"]));
    assert!(matches!(parse(&v), Err(GraphError::Validation { .. })));

    let mut v = tiny();
    v["edges"].as_array_mut().unwrap().push(json!(["in", "ghost"]));
    assert!(matches!(parse(&v), Err(GraphError::Validation { .. })));

    let mut v = tiny();
    v["nodes"]["in"]["shape"] = json!(4);
    assert!(matches!(parse(&v), Err(GraphError::ShapeMismatch { .. })));

    let mut v = tiny();
    v["nodes"]["l"]["tau"] = json!(0.0);
    assert!(matches!(parse(&v), Err(GraphError::Validation { .. })));

    let mut v = tiny();
    v["nodes"]["w"]["weights"] = json!({"sidecar": "missing.bin", "offset": 0});
    assert!(matches!(parse(&v), Err(GraphError::Io { .. })));

    let mut v = tiny();
    v["nodes"]["w"]["type"] = json!("recurrent");
    assert!(matches!(parse(&v), Err(GraphError::Parse(_))));
}

#[test]
fn pooling_below_one_pixel_is_rejected() {
    let g = GraphBuilder::new()
        .then("in", Node::Input { shape: Shape::chw(1, 1, 1) })
        .then("p", pool_node(2, 2))
        .then("f", Node::Flatten)
        .then("w", linear_node(vec![1.0], 1, 1))
        .then("l", Node::Lif(Lif::from_decay(0.9, 1.0)))
        .then("out", Node::Output { size: 1 })
        .build();
    assert!(matches!(g, Err(GraphError::InvalidDimension { .. })));
}
