//! Deterministic fixture generators: the P-SNN gesture topology with
//! untrained weights, its quantization-aware counterpart, synthetic DVS
//! recordings and small random networks.
//!
//! All real weights are representable in f32, so fixtures survive a trip
//! through an f32 sidecar unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::events::{Event, SensorSize};
use crate::graph::{
    Conv2d, Graph, GraphBuilder, Lif, Linear, Node, QuantRecord, Shape, SumPool2d,
    META_TIMESTEP_MS,
};
use crate::partitioner::PartitionOverrides;
use crate::quantizer::quantize_tensor;
use crate::tensor::Tensor;

pub const PSNN_SEED: u64 = 2024;
/// Membrane decay per timestep of every fixture LIF layer.
pub const PSNN_BETA: f64 = 0.93;
pub const PSNN_THRESHOLD: f64 = 1.0;
pub const GESTURE_CLASSES: usize = 11;

fn f32_uniform(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    rng.gen_range(-bound..bound) as f32 as f64
}

fn weights(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize, gain: f64) -> Tensor<f64> {
    let bound = gain / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| f32_uniform(rng, bound)).collect()).unwrap()
}

fn conv(w: Tensor<f64>, stride: usize) -> Node {
    Node::Conv2d(Conv2d {
        weights: w,
        stride: [stride, stride],
        padding: [1, 1],
        dilation: [1, 1],
        quant: None,
    })
}

fn pool() -> Node {
    Node::SumPool2d(SumPool2d {
        kernel: [2, 2],
        stride: [2, 2],
        padding: [0, 0],
    })
}

fn lif() -> Node {
    Node::Lif(Lif::from_decay(PSNN_BETA, PSNN_THRESHOLD))
}

/// Full-precision P-SNN: 2x32x32 event frames to 11 gesture classes.
pub fn psnn_graph(seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain = 3.0;
    let w0 = weights(&mut rng, vec![16, 2, 5, 5], 50, gain);
    let w2 = weights(&mut rng, vec![16, 16, 3, 3], 144, gain);
    let w5 = weights(&mut rng, vec![8, 16, 3, 3], 144, gain);
    let w9 = weights(&mut rng, vec![256, 72], 72, gain);
    let w11 = weights(&mut rng, vec![11, 256], 256, gain);
    GraphBuilder::new()
        .then("input", Node::Input { shape: Shape::chw(2, 32, 32) })
        .then("0", conv(w0, 2))
        .then("1", lif())
        .then("2", conv(w2, 1))
        .then("3", lif())
        .then("4", pool())
        .then("5", conv(w5, 1))
        .then("6", lif())
        .then("7", pool())
        .then("8", Node::Flatten)
        .then("9", Node::Linear(Linear { weights: w9, quant: None }))
        .then("10", lif())
        .then("11", Node::Linear(Linear { weights: w11, quant: None }))
        .then("12", lif())
        .then("output", Node::Output { size: GESTURE_CLASSES })
        .meta(META_TIMESTEP_MS, "1")
        .build()
        .expect("P-SNN fixture is valid")
}

/// P-SNN topology as a quantization-aware-trained graph: every weight node
/// carries a power-of-two step `S >= max|W| / 127` and integer weights, and
/// the real weights equal `int * S` exactly. Thresholds are not yet rescaled.
pub fn qsnn_graph(seed: u64) -> Graph {
    let g = psnn_graph(seed);
    let (mut nodes, edges, metadata) = g.into_parts();
    for node in nodes.values_mut() {
        let Some(w) = node.weights().cloned() else {
            continue;
        };
        let max = w.data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scale = (max / 127.0).log2().ceil().exp2();
        let ints = quantize_tensor(&w, 1.0 / scale);
        let real = ints.map(|&i| i as f64 * scale);
        match node {
            Node::Conv2d(c) => c.weights = real,
            Node::Linear(l) => l.weights = real,
            _ => unreachable!(),
        }
        *node.quant_mut().unwrap() = Some(QuantRecord::new(scale, Some(ints)));
    }
    Graph::new(nodes, edges, metadata).expect("Q-SNN fixture is valid")
}

/// Per-PE neuron limits that fit the P-SNN into SRAM.
pub fn psnn_overrides() -> PartitionOverrides {
    PartitionOverrides::new()
        .with("1", 900)
        .with("3", 900)
        .with("6", 980)
        .with("10", 16)
        .with("input", 17)
}

/// Synthetic DVS recording: a bright blob orbiting the sensor centre,
/// emitting ON events at its leading edge and OFF events at its trailing
/// edge, plus uniform background noise.
pub fn synthetic_events(seed: u64, duration_ms: u64, sensor: SensorSize) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (sensor.width as f64, sensor.height as f64);
    let radius = 0.3 * w.min(h);
    let period_us = 300_000.0;
    let mut events = Vec::new();
    for t in (0..duration_ms * 1000).step_by(100) {
        let phase = 2.0 * std::f64::consts::PI * t as f64 / period_us;
        let cx = w / 2.0 + radius * phase.cos();
        let cy = h / 2.0 + radius * phase.sin();
        for _ in 0..3 {
            let ang: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let r: f64 = rng.gen_range(0.0..6.0);
            let (dx, dy) = (r * ang.cos(), r * ang.sin());
            // moving direction is the tangent (-sin, cos)
            let ahead = -dx * phase.sin() + dy * phase.cos() > 0.0;
            let (x, y) = (cx + dx, cy + dy);
            if x >= 0.0 && y >= 0.0 && x < w && y < h {
                events.push(Event::new(t, x as u16, y as u16, u8::from(ahead)));
            }
        }
        if rng.gen_bool(0.05) {
            events.push(Event::new(
                t,
                rng.gen_range(0..sensor.width) as u16,
                rng.gen_range(0..sensor.height) as u16,
                rng.gen_range(0..2),
            ));
        }
    }
    events
}

/// Fully connected LIF chain `sizes[0] -> sizes[1] -> ...` with uniform
/// weights in `±weight_bound` and the given decay and threshold.
pub fn random_dense_chain(
    seed: u64,
    sizes: &[usize],
    weight_bound: f64,
    beta: f64,
    threshold: f64,
) -> Graph {
    assert!(sizes.len() >= 2, "a chain needs an input and one layer");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new().then("input", Node::Input { shape: Shape::Flat(sizes[0]) });
    for (i, pair) in sizes.windows(2).enumerate() {
        let n = pair[0] * pair[1];
        let w = Tensor::new(
            vec![pair[1], pair[0]],
            (0..n).map(|_| f32_uniform(&mut rng, weight_bound)).collect(),
        )
        .unwrap();
        b = b
            .then(format!("fc{i}"), Node::Linear(Linear { weights: w, quant: None }))
            .then(format!("lif{i}"), Node::Lif(Lif::from_decay(beta, threshold)));
    }
    b.then("output", Node::Output { size: *sizes.last().unwrap() })
        .meta(META_TIMESTEP_MS, "1")
        .build()
        .expect("random chain is valid")
}

/// Bernoulli input spikes with firing probability `rate` per step.
pub fn random_spikes(seed: u64, size: usize, length: usize, rate: f64) -> crate::events::SpikeTrain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = crate::events::SpikeTrain::empty(size, length);
    for t in 0..length {
        for n in 0..size {
            if rng.gen_bool(rate) {
                train.push(n, t as u32);
            }
        }
    }
    train
}
