//! The committed fixture files must match their generators. Set
//! `NEURODEPLOY_REGEN_FIXTURES=1` to rewrite them.

use std::path::{Path, PathBuf};

use neurodeploy_core::events::{events_to_csv, load_events, EventFormat, SensorSize};
use neurodeploy_core::fixtures::{psnn_graph, qsnn_graph, synthetic_events, PSNN_SEED};
use neurodeploy_core::graph::SaveOptions;
use neurodeploy_core::{load_graph, save_graph, Graph};

pub const EVENTS_SEED: u64 = 7;
pub const EVENTS_MS: u64 = 300;

fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn regen() -> bool {
    std::env::var_os("NEURODEPLOY_REGEN_FIXTURES").is_some()
}

fn check_graph(name: &str, g: &Graph) {
    let json = dir().join(format!("{name}.snngraph.json"));
    if regen() {
        let opts = SaveOptions {
            sidecar: Some(dir().join(format!("{name}.weights.bin"))),
        };
        save_graph(g, &json, &opts).unwrap();
    }
    let loaded = load_graph(&json).unwrap();
    assert_eq!(&loaded, g, "{name} fixture is stale");
}

#[test]
fn psnn_fixture_matches_generator() {
    check_graph("psnn", &psnn_graph(PSNN_SEED));
}

#[test]
fn qsnn_fixture_matches_generator() {
    check_graph("qsnn", &qsnn_graph(PSNN_SEED));
}

#[test]
fn event_fixture_matches_generator() {
    let path = dir().join("gesture_events.csv");
    let events = synthetic_events(EVENTS_SEED, EVENTS_MS, SensorSize::DVS128);
    if regen() {
        std::fs::write(&path, events_to_csv(&events)).unwrap();
    }
    let loaded = load_events(&path, EventFormat::Csv, SensorSize::DVS128).unwrap();
    assert_eq!(loaded, events);
}
