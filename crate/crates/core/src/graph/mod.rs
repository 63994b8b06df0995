//! Graph IR for feed-forward spiking networks.
//!
//! A [`Graph`] is a DAG of typed layer nodes (input, convolution, linear,
//! sum-pooling, flatten, LIF, output). Construction always validates, so a
//! `Graph` value in hand satisfies the structural invariants and carries its
//! inferred activation shapes.

mod io;
mod node;
mod shape;

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

pub use io::{from_json_str, load_graph, save_graph, to_json_string, SaveOptions};
pub use node::{
    Conv2d, Lif, Linear, Node, ParamVec, QuantRecord, SumPool2d, INT8_MAX, INT8_MIN,
    QUANT_BITWIDTH,
};
pub use shape::{window_output, Shape};

use crate::tensor::TensorError;

/// Metadata key for the simulation timestep length in milliseconds.
pub const META_TIMESTEP_MS: &str = "timestep_ms";
/// Metadata key recording which quantization pass produced the graph.
pub const META_QUANTIZATION: &str = "quantization";
/// Metadata key set once LIF thresholds are expressed in integer-weight units.
pub const META_THRESHOLDS_SCALED: &str = "thresholds_scaled";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("tensor error in {context}: {source}")]
    Tensor {
        context: String,
        #[source]
        source: TensorError,
    },
    #[error("invalid graph at {location}: {message}")]
    Validation { location: String, message: String },
    #[error("shape mismatch on edge {from} -> {to}: expected {expected}, found {found}")]
    ShapeMismatch {
        from: String,
        to: String,
        expected: Shape,
        found: Shape,
    },
    #[error("node {node}: non-positive output dimension ({detail})")]
    InvalidDimension { node: String, detail: String },
    #[error("node {node} has no integer weights")]
    MissingIntWeights { node: String },
}

impl GraphError {
    fn at(location: impl Into<String>, message: impl Into<String>) -> Self {
        GraphError::Validation {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Nodes, edges and metadata of a graph, as accepted by [`Graph::new`].
pub type GraphParts = (
    BTreeMap<String, Node>,
    Vec<(String, String)>,
    BTreeMap<String, String>,
);

/// Validated network graph.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: BTreeMap<String, Node>,
    edges: Vec<(String, String)>,
    metadata: BTreeMap<String, String>,
    order: Vec<String>,
    shapes: BTreeMap<String, Shape>,
    preds: BTreeMap<String, Vec<String>>,
    succs: BTreeMap<String, Vec<String>>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges && self.metadata == other.metadata
    }
}

impl Graph {
    /// Builds and validates a graph.
    pub fn new(
        nodes: BTreeMap<String, Node>,
        edges: Vec<(String, String)>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut preds: BTreeMap<String, Vec<String>> =
            nodes.keys().map(|k| (k.clone(), Vec::new())).collect();
        let mut succs = preds.clone();
        for (i, (from, to)) in edges.iter().enumerate() {
            let loc = format!("edge #{i} {from} -> {to}");
            if !nodes.contains_key(from) {
                return Err(GraphError::at(loc, format!("unknown source node '{from}'")));
            }
            if !nodes.contains_key(to) {
                return Err(GraphError::at(loc, format!("unknown target node '{to}'")));
            }
            if from == to {
                return Err(GraphError::at(loc, "self loop"));
            }
            if succs[from].contains(to) {
                return Err(GraphError::at(loc, "duplicate edge"));
            }
            succs.get_mut(from).unwrap().push(to.clone());
            preds.get_mut(to).unwrap().push(from.clone());
        }

        let mut graph = Graph {
            nodes,
            edges,
            metadata,
            order: Vec::new(),
            shapes: BTreeMap::new(),
            preds,
            succs,
        };
        graph.check_structure()?;
        graph.order = graph.topological_order()?;
        graph.check_parameters()?;
        graph.shapes = graph.compute_shapes()?;
        Ok(graph)
    }

    pub fn nodes(&self) -> &BTreeMap<String, Node> {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// Node ids in topological order (ties broken by id).
    pub fn topological(&self) -> &[String] {
        &self.order
    }

    pub fn predecessors(&self, id: &str) -> &[String] {
        self.preds.get(id).map_or(&[], Vec::as_slice)
    }

    pub fn successors(&self, id: &str) -> &[String] {
        self.succs.get(id).map_or(&[], Vec::as_slice)
    }

    /// Output shape of every node.
    pub fn shapes(&self) -> &BTreeMap<String, Shape> {
        &self.shapes
    }

    pub fn shape(&self, id: &str) -> Option<Shape> {
        self.shapes.get(id).copied()
    }

    /// Input shape of a node: the output shape of its (single) predecessor.
    pub fn input_shape(&self, id: &str) -> Option<Shape> {
        self.predecessors(id)
            .first()
            .and_then(|p| self.shapes.get(p).copied())
    }

    pub fn input_id(&self) -> &str {
        self.order
            .iter()
            .find(|id| matches!(self.nodes[*id], Node::Input { .. }))
            .expect("validated graph has an input")
    }

    pub fn output_id(&self) -> &str {
        self.order
            .iter()
            .find(|id| matches!(self.nodes[*id], Node::Output { .. }))
            .expect("validated graph has an output")
    }

    pub fn timestep_ms(&self) -> f64 {
        self.meta(META_TIMESTEP_MS)
            .and_then(|s| s.parse().ok())
            .unwrap_or(1.0)
    }

    pub fn thresholds_scaled(&self) -> bool {
        self.meta(META_THRESHOLDS_SCALED) == Some("true")
    }

    pub fn into_parts(self) -> GraphParts {
        (self.nodes, self.edges, self.metadata)
    }

    /// Sum of weight-tensor element counts over convolution and linear nodes.
    pub fn count_parameters(&self) -> usize {
        self.nodes.values().map(Node::param_count).sum()
    }

    /// Raw weight storage: 4 bytes per parameter at full precision, 1 byte
    /// per parameter when quantized.
    pub fn model_size_bytes(&self, quantized: bool) -> Result<usize> {
        if !quantized {
            return Ok(self.count_parameters() * 4);
        }
        let mut total = 0;
        for (id, node) in &self.nodes {
            if !node.is_weighted() {
                continue;
            }
            let ints = node
                .quant()
                .and_then(|q| q.int_weights.as_ref())
                .ok_or_else(|| GraphError::MissingIntWeights { node: id.clone() })?;
            total += ints.len();
        }
        Ok(total)
    }

    /// Nearest upstream weight node of `id`, looking through weightless
    /// pooling/flatten nodes. `None` when an input or LIF is reached first.
    pub fn upstream_weight_node(&self, id: &str) -> Option<&str> {
        let mut cur = self.predecessors(id).first()?;
        loop {
            match &self.nodes[cur] {
                Node::Conv2d(_) | Node::Linear(_) => return Some(cur),
                Node::SumPool2d(_) | Node::Flatten => {
                    cur = self.predecessors(cur).first()?;
                }
                _ => return None,
            }
        }
    }

    fn check_structure(&self) -> Result<()> {
        let count = |pred: fn(&Node) -> bool| self.nodes.values().filter(|n| pred(n)).count();
        let inputs = count(|n| matches!(n, Node::Input { .. }));
        let outputs = count(|n| matches!(n, Node::Output { .. }));
        if inputs != 1 {
            return Err(GraphError::at(
                "graph",
                format!("expected exactly one input node, found {inputs}"),
            ));
        }
        if outputs != 1 {
            return Err(GraphError::at(
                "graph",
                format!("expected exactly one output node, found {outputs}"),
            ));
        }
        for (id, node) in &self.nodes {
            let np = self.preds[id].len();
            let ns = self.succs[id].len();
            let loc = format!("node '{id}' ({})", node.kind());
            match node {
                Node::Input { .. } => {
                    if np != 0 {
                        return Err(GraphError::at(loc, "input node has a predecessor"));
                    }
                    if ns == 0 {
                        return Err(GraphError::at(loc, "input node has no successor"));
                    }
                }
                Node::Output { .. } => {
                    if ns != 0 {
                        return Err(GraphError::at(loc, "output node has a successor"));
                    }
                    if np != 1 {
                        return Err(GraphError::at(
                            loc,
                            format!("output node needs exactly one predecessor, has {np}"),
                        ));
                    }
                }
                Node::Conv2d(_) | Node::Linear(_) | Node::SumPool2d(_) | Node::Flatten => {
                    if np != 1 || ns != 1 {
                        return Err(GraphError::at(
                            loc,
                            format!("needs one predecessor and one successor, has {np} and {ns}"),
                        ));
                    }
                }
                Node::Lif(_) => {
                    if np != 1 {
                        return Err(GraphError::at(
                            loc,
                            format!("LIF node needs exactly one predecessor, has {np}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn topological_order(&self) -> Result<Vec<String>> {
        let mut indegree: BTreeMap<&str, usize> = self
            .preds
            .iter()
            .map(|(k, v)| (k.as_str(), v.len()))
            .collect();
        let mut ready: VecDeque<&str> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&k, _)| k)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.pop_front() {
            order.push(id.to_string());
            for s in &self.succs[id] {
                let d = indegree.get_mut(s.as_str()).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push_back(s);
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = indegree
                .iter()
                .find(|(_, &d)| d > 0)
                .map(|(k, _)| k.to_string())
                .unwrap_or_default();
            return Err(GraphError::at(
                format!("node '{stuck}'"),
                "edges contain a cycle",
            ));
        }
        Ok(order)
    }

    fn check_parameters(&self) -> Result<()> {
        for (id, node) in &self.nodes {
            let loc = || format!("node '{id}' ({})", node.kind());
            match node {
                Node::Input { shape } => {
                    if shape.numel() == 0 {
                        return Err(GraphError::at(loc(), "input shape has a zero dimension"));
                    }
                }
                Node::Output { size } => {
                    if *size == 0 {
                        return Err(GraphError::at(loc(), "output size is zero"));
                    }
                }
                Node::Conv2d(c) => {
                    if c.weights.shape().len() != 4 {
                        return Err(GraphError::at(loc(), "conv weights must be rank 4"));
                    }
                    if c.stride.contains(&0) || c.dilation.contains(&0) {
                        return Err(GraphError::at(loc(), "stride and dilation must be >= 1"));
                    }
                    if c.weights.shape().contains(&0) {
                        return Err(GraphError::at(loc(), "conv weights have a zero dimension"));
                    }
                    check_weights(&loc(), &c.weights, c.quant.as_ref())?;
                }
                Node::Linear(l) => {
                    if l.weights.shape().len() != 2 {
                        return Err(GraphError::at(loc(), "linear weights must be rank 2"));
                    }
                    if l.weights.shape().contains(&0) {
                        return Err(GraphError::at(loc(), "linear weights have a zero dimension"));
                    }
                    check_weights(&loc(), &l.weights, l.quant.as_ref())?;
                }
                Node::SumPool2d(p) => {
                    if p.kernel.contains(&0) || p.stride.contains(&0) {
                        return Err(GraphError::at(loc(), "pool kernel and stride must be >= 1"));
                    }
                }
                Node::Flatten => {}
                Node::Lif(lif) => {
                    for (name, p) in [
                        ("tau", &lif.tau),
                        ("r", &lif.r),
                        ("v_leak", &lif.v_leak),
                        ("threshold", &lif.threshold),
                    ] {
                        if p.is_empty() {
                            return Err(GraphError::at(loc(), format!("{name} is empty")));
                        }
                        if p.values().iter().any(|v| !v.is_finite()) {
                            return Err(GraphError::at(loc(), format!("{name} is not finite")));
                        }
                    }
                    if lif.tau.values().iter().any(|&t| t <= 0.0) {
                        return Err(GraphError::at(loc(), "tau must be > 0"));
                    }
                    if lif.threshold.values().iter().any(|&t| t <= 0.0) {
                        return Err(GraphError::at(loc(), "threshold must be > 0"));
                    }
                }
            }
        }
        Ok(())
    }

    fn compute_shapes(&self) -> Result<BTreeMap<String, Shape>> {
        let mut shapes: BTreeMap<String, Shape> = BTreeMap::new();
        for id in &self.order {
            let node = &self.nodes[id];
            let pred = self.preds[id].first();
            let input: Option<Shape> = pred.map(|p| shapes[p]);
            let mismatch = |expected: Shape, found: Shape| GraphError::ShapeMismatch {
                from: pred.cloned().unwrap_or_default(),
                to: id.clone(),
                expected,
                found,
            };
            let out = match node {
                Node::Input { shape } => *shape,
                Node::Conv2d(c) => {
                    let found = input.unwrap();
                    let Some([ch, h, w]) = found.as_chw() else {
                        return Err(mismatch(Shape::chw(c.in_channels(), 0, 0), found));
                    };
                    if ch != c.in_channels() {
                        return Err(mismatch(Shape::chw(c.in_channels(), h, w), found));
                    }
                    let [oh, ow] = c.output_hw(h, w).ok_or_else(|| GraphError::InvalidDimension {
                        node: id.clone(),
                        detail: format!("conv kernel {:?} on {h}x{w}", c.kernel()),
                    })?;
                    Shape::chw(c.out_channels(), oh, ow)
                }
                Node::SumPool2d(p) => {
                    let found = input.unwrap();
                    let Some([ch, h, w]) = found.as_chw() else {
                        return Err(GraphError::at(
                            format!("node '{id}' (sum_pool2d)"),
                            format!("needs a CxHxW input, got {found}"),
                        ));
                    };
                    let [oh, ow] = p.output_hw(h, w).ok_or_else(|| GraphError::InvalidDimension {
                        node: id.clone(),
                        detail: format!("pool kernel {:?} on {h}x{w}", p.kernel),
                    })?;
                    Shape::chw(ch, oh, ow)
                }
                Node::Flatten => Shape::Flat(input.unwrap().numel()),
                Node::Linear(l) => {
                    let found = input.unwrap();
                    let expected = Shape::Flat(l.in_features());
                    if found != expected {
                        return Err(mismatch(expected, found));
                    }
                    Shape::Flat(l.out_features())
                }
                Node::Lif(lif) => {
                    let found = input.unwrap();
                    if let Some(declared) = lif.shape {
                        if declared != found {
                            return Err(mismatch(declared, found));
                        }
                    }
                    let n = found.numel();
                    for (name, p) in [
                        ("tau", &lif.tau),
                        ("r", &lif.r),
                        ("v_leak", &lif.v_leak),
                        ("threshold", &lif.threshold),
                    ] {
                        if p.len() != 1 && p.len() != n {
                            return Err(GraphError::at(
                                format!("node '{id}' (lif)"),
                                format!("{name} has {} entries, expected 1 or {n}", p.len()),
                            ));
                        }
                    }
                    found
                }
                Node::Output { size } => {
                    let found = input.unwrap();
                    if found.numel() != *size {
                        return Err(mismatch(Shape::Flat(*size), found));
                    }
                    Shape::Flat(*size)
                }
            };
            shapes.insert(id.clone(), out);
        }
        Ok(shapes)
    }
}

fn check_weights(
    loc: &str,
    weights: &crate::tensor::Tensor<f64>,
    quant: Option<&QuantRecord>,
) -> Result<()> {
    if weights.data().iter().any(|w| !w.is_finite()) {
        return Err(GraphError::at(loc, "weights contain non-finite values"));
    }
    let Some(q) = quant else { return Ok(()) };
    if !(q.scale.is_finite() && q.scale > 0.0) {
        return Err(GraphError::at(loc, format!("quant scale {} must be > 0", q.scale)));
    }
    if q.bitwidth != QUANT_BITWIDTH {
        return Err(GraphError::at(
            loc,
            format!("unsupported bitwidth {}, only 8 is supported", q.bitwidth),
        ));
    }
    let Some(ints) = &q.int_weights else { return Ok(()) };
    if ints.shape() != weights.shape() {
        return Err(GraphError::at(
            loc,
            format!(
                "int weights shape {:?} differs from weights shape {:?}",
                ints.shape(),
                weights.shape()
            ),
        ));
    }
    // Entries strictly inside the range must be the rounded grid value;
    // saturated entries only need the real value to lie beyond the boundary.
    const SLACK: f64 = 1e-6;
    for (i, (&w, &q_int)) in weights.data().iter().zip(ints.data()).enumerate() {
        let grid = w / q.scale;
        let q_int = q_int as f64;
        let ok = if q_int == INT8_MAX as f64 {
            grid >= q_int - 0.5 - SLACK
        } else if q_int == INT8_MIN as f64 {
            grid <= q_int + 0.5 + SLACK
        } else {
            (grid - q_int).abs() <= 0.5 + SLACK
        };
        if !ok {
            return Err(GraphError::at(
                loc,
                format!(
                    "int weight #{i} = {q_int} is not round({w} / {}) = round({grid})",
                    q.scale
                ),
            ));
        }
    }
    Ok(())
}

/// Incremental construction helper for graphs.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    nodes: BTreeMap<String, Node>,
    edges: Vec<(String, String)>,
    metadata: BTreeMap<String, String>,
    last: Option<String>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, id: impl Into<String>, node: Node) -> Self {
        let id = id.into();
        self.nodes.insert(id.clone(), node);
        self.last = Some(id);
        self
    }

    /// Adds `node` and an edge from the previously added node.
    pub fn then(mut self, id: impl Into<String>, node: Node) -> Self {
        let id = id.into();
        if let Some(prev) = self.last.take() {
            self.edges.push((prev, id.clone()));
        }
        self.nodes.insert(id.clone(), node);
        self.last = Some(id);
        self
    }

    pub fn edge(mut self, from: impl Into<String>, to: impl Into<String>) -> Self {
        self.edges.push((from.into(), to.into()));
        self
    }

    pub fn meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn build(self) -> Result<Graph> {
        Graph::new(self.nodes, self.edges, self.metadata)
    }
}

/// Output shape of every node (cached on the validated graph).
pub fn infer_shapes(g: &Graph) -> BTreeMap<String, Shape> {
    g.shapes().clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn conv(out: usize, inp: usize, k: usize, stride: usize, pad: usize) -> Node {
        Node::Conv2d(Conv2d {
            weights: Tensor::filled(vec![out, inp, k, k], 0.1),
            stride: [stride, stride],
            padding: [pad, pad],
            dilation: [1, 1],
            quant: None,
        })
    }

    fn lif() -> Node {
        Node::Lif(Lif::from_decay(0.93, 1.0))
    }

    #[test]
    fn input_only_graph_is_rejected() {
        let err = GraphBuilder::new()
            .node("in", Node::Input { shape: Shape::chw(1, 2, 2) })
            .build()
            .unwrap_err();
        assert!(matches!(err, GraphError::Validation { .. }), "{err}");
    }

    #[test]
    fn declared_lif_shape_mismatch_names_both_shapes() {
        let mut l = Lif::from_decay(0.93, 1.0);
        l.shape = Some(Shape::chw(16, 14, 14));
        let err = GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::chw(2, 32, 32) })
            .then("0", conv(16, 2, 5, 2, 1))
            .then("1", Node::Lif(l))
            .then("out", Node::Output { size: 16 * 14 * 14 })
            .build()
            .unwrap_err();
        match err {
            GraphError::ShapeMismatch { expected, found, .. } => {
                assert_eq!(expected, Shape::chw(16, 14, 14));
                assert_eq!(found, Shape::chw(16, 15, 15));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn cycle_is_rejected() {
        let err = GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::Flat(2) })
            .then("l", lif())
            .then("out", Node::Output { size: 2 })
            .node("a", Node::Flatten)
            .node("b", Node::Flatten)
            .edge("a", "b")
            .edge("b", "a")
            .build()
            .unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn zero_sized_conv_output_is_an_error() {
        let err = GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::chw(1, 2, 2) })
            .then("0", conv(1, 1, 5, 1, 0))
            .then("1", lif())
            .then("out", Node::Output { size: 1 })
            .build()
            .unwrap_err();
        assert!(matches!(err, GraphError::InvalidDimension { .. }), "{err}");
    }

    #[test]
    fn negative_threshold_rejected() {
        let err = GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::Flat(3) })
            .then("1", Node::Lif(Lif::uniform(2.0, 2.0, 0.0, -1.0)))
            .then("out", Node::Output { size: 3 })
            .build()
            .unwrap_err();
        assert!(err.to_string().contains("threshold"), "{err}");
    }

    #[test]
    fn param_vector_length_checked() {
        let mut l = Lif::from_decay(0.9, 1.0);
        l.threshold = ParamVec::per_neuron(vec![1.0, 1.0]);
        let err = GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::Flat(3) })
            .then("1", Node::Lif(l))
            .then("out", Node::Output { size: 3 })
            .build()
            .unwrap_err();
        assert!(err.to_string().contains("expected 1 or 3"), "{err}");
    }

    #[test]
    fn linear_rejects_unflattened_input() {
        let err = GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::chw(1, 2, 2) })
            .then(
                "0",
                Node::Linear(Linear {
                    weights: Tensor::filled(vec![3, 4], 0.5),
                    quant: None,
                }),
            )
            .then("1", lif())
            .then("out", Node::Output { size: 3 })
            .build()
            .unwrap_err();
        assert!(matches!(err, GraphError::ShapeMismatch { .. }), "{err}");
    }

    #[test]
    fn int_weights_off_grid_rejected() {
        let weights = Tensor::new(vec![1, 2], vec![0.5, -0.25]).unwrap();
        let ints = Tensor::new(vec![1, 2], vec![50i8, -25]).unwrap();
        let err = GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::Flat(2) })
            .then(
                "0",
                Node::Linear(Linear {
                    weights,
                    quant: Some(QuantRecord::new(0.5 / 127.0, Some(ints))),
                }),
            )
            .then("1", lif())
            .then("out", Node::Output { size: 1 })
            .build()
            .unwrap_err();
        assert!(err.to_string().contains("int weight"), "{err}");
    }

    #[test]
    fn model_size_requires_int_weights_when_quantized() {
        let g = GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::Flat(72) })
            .then(
                "9",
                Node::Linear(Linear {
                    weights: Tensor::filled(vec![256, 72], 0.0),
                    quant: None,
                }),
            )
            .then("10", lif())
            .then("out", Node::Output { size: 256 })
            .build()
            .unwrap();
        assert_eq!(g.count_parameters(), 18432);
        assert_eq!(g.model_size_bytes(false).unwrap(), 18432 * 4);
        assert!(matches!(
            g.model_size_bytes(true),
            Err(GraphError::MissingIntWeights { .. })
        ));
    }

    #[test]
    fn weightless_graph_has_no_parameters() {
        let g = GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::chw(1, 4, 4) })
            .then(
                "p",
                Node::SumPool2d(SumPool2d {
                    kernel: [2, 2],
                    stride: [2, 2],
                    padding: [0, 0],
                }),
            )
            .then("f", Node::Flatten)
            .then("out", Node::Output { size: 4 })
            .build()
            .unwrap();
        assert_eq!(g.count_parameters(), 0);
        assert_eq!(g.model_size_bytes(true).unwrap(), 0);
        assert_eq!(g.shape("f"), Some(Shape::Flat(4)));
    }
}
