//! `.snngraph.json` reading and writing.
//!
//! Schema (version 1):
//!
//! ```json
//! {
//!   "format": "snngraph",
//!   "version": 1,
//!   "metadata": { "timestep_ms": "1" },
//!   "nodes": {
//!     "input": { "type": "input", "shape": [2, 32, 32] },
//!     "0": { "type": "conv2d", "weights": [[[[0.1, ...]]]],
//!            "stride": [2, 2], "padding": [1, 1], "dilation": [1, 1],
//!            "quant": { "scale": 0.0078, "bitwidth": 8, "int_weights": ... } },
//!     "1": { "type": "lif", "tau": 14.28, "r": 14.28, "v_leak": 0.0, "threshold": 1.0 },
//!     "4": { "type": "sum_pool2d", "kernel": [2, 2], "stride": [2, 2], "padding": [0, 0] },
//!     "8": { "type": "flatten" },
//!     "9": { "type": "linear", "weights": [[...]] },
//!     "output": { "type": "output", "shape": 11 }
//!   },
//!   "edges": [["input", "0"], ["0", "1"]]
//! }
//! ```
//!
//! A tensor is either a nested JSON array in row-major order or a reference
//! `{"sidecar": "<file>", "offset": <byte>}` into a binary sidecar file
//! (see [`crate::tensor`]) resolved relative to the JSON file. Real weights
//! are stored as float32 in sidecars, integer weights as int8.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::node::{Conv2d, Lif, Linear, Node, ParamVec, QuantRecord, SumPool2d};
use super::shape::Shape;
use super::{Graph, GraphError, Result};
use crate::fsutil;
use crate::tensor::{self, SidecarElement, Tensor};

const FORMAT: &str = "snngraph";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    format: String,
    version: u32,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    nodes: BTreeMap<String, RawNode>,
    edges: Vec<(String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RawNode {
    Input {
        shape: Shape,
    },
    Conv2d {
        weights: RawTensor,
        stride: [usize; 2],
        padding: [usize; 2],
        #[serde(default = "unit_pair")]
        dilation: [usize; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quant: Option<RawQuant>,
    },
    Linear {
        weights: RawTensor,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quant: Option<RawQuant>,
    },
    SumPool2d {
        kernel: [usize; 2],
        stride: [usize; 2],
        #[serde(default)]
        padding: [usize; 2],
    },
    Flatten,
    Lif {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<Shape>,
        tau: ParamVec,
        r: ParamVec,
        v_leak: ParamVec,
        threshold: ParamVec,
    },
    Output {
        shape: usize,
    },
}

fn unit_pair() -> [usize; 2] {
    [1, 1]
}

#[derive(Debug, Serialize, Deserialize)]
struct RawQuant {
    scale: f64,
    bitwidth: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    int_weights: Option<RawTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawTensor {
    Sidecar { sidecar: String, offset: usize },
    Nested(Value),
}

/// Where weights go when saving.
#[derive(Debug, Clone, Default)]
pub struct SaveOptions {
    /// Write tensors into this sidecar file instead of inline JSON arrays.
    pub sidecar: Option<PathBuf>,
}

/// Reads and validates a graph file.
pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    from_json_str(&text, base)
}

/// Parses a graph document; sidecar references resolve against `base_dir`.
pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Graph> {
    let raw: RawGraph = serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    if raw.format != FORMAT {
        return Err(GraphError::Parse(format!(
            "format is '{}', expected '{FORMAT}'",
            raw.format
        )));
    }
    if raw.version != VERSION {
        return Err(GraphError::Parse(format!(
            "unsupported version {}",
            raw.version
        )));
    }
    let mut sidecars = SidecarCache::new(base_dir);
    let mut nodes = BTreeMap::new();
    for (id, raw_node) in raw.nodes {
        let node = decode_node(&id, raw_node, &mut sidecars)?;
        nodes.insert(id, node);
    }
    Graph::new(nodes, raw.edges, raw.metadata)
}

/// Writes `g` to `path`. With a sidecar configured, the sidecar is written
/// first and referenced by file name.
pub fn save_graph(g: &Graph, path: impl AsRef<Path>, opts: &SaveOptions) -> Result<()> {
    let path = path.as_ref();
    let io_err = |p: &Path| {
        let p = p.display().to_string();
        move |source| GraphError::Io { path: p, source }
    };
    let mut blob = opts.sidecar.as_ref().map(|p| (p.clone(), Vec::new()));
    let raw = encode_graph(g, blob.as_mut())?;
    if let Some((sidecar_path, bytes)) = blob {
        fsutil::write_atomic(&sidecar_path, &bytes).map_err(io_err(&sidecar_path))?;
    }
    let mut text = serde_json::to_string_pretty(&raw).map_err(|e| GraphError::Parse(e.to_string()))?;
    text.push('\n');
    fsutil::write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

/// Inline-JSON serialization of `g`.
pub fn to_json_string(g: &Graph) -> Result<String> {
    let raw = encode_graph(g, None)?;
    serde_json::to_string_pretty(&raw).map_err(|e| GraphError::Parse(e.to_string()))
}

fn encode_graph(g: &Graph, mut blob: Option<&mut (PathBuf, Vec<u8>)>) -> Result<RawGraph> {
    let mut nodes = BTreeMap::new();
    for (id, node) in g.nodes() {
        let raw = match node {
            Node::Input { shape } => RawNode::Input { shape: *shape },
            Node::Output { size } => RawNode::Output { shape: *size },
            Node::Flatten => RawNode::Flatten,
            Node::SumPool2d(p) => RawNode::SumPool2d {
                kernel: p.kernel,
                stride: p.stride,
                padding: p.padding,
            },
            Node::Lif(l) => RawNode::Lif {
                shape: l.shape,
                tau: l.tau.clone(),
                r: l.r.clone(),
                v_leak: l.v_leak.clone(),
                threshold: l.threshold.clone(),
            },
            Node::Conv2d(c) => RawNode::Conv2d {
                weights: encode_real(id, &c.weights, blob.as_deref_mut())?,
                stride: c.stride,
                padding: c.padding,
                dilation: c.dilation,
                quant: encode_quant(id, c.quant.as_ref(), blob.as_deref_mut())?,
            },
            Node::Linear(l) => RawNode::Linear {
                weights: encode_real(id, &l.weights, blob.as_deref_mut())?,
                quant: encode_quant(id, l.quant.as_ref(), blob.as_deref_mut())?,
            },
        };
        nodes.insert(id.clone(), raw);
    }
    Ok(RawGraph {
        format: FORMAT.to_string(),
        version: VERSION,
        metadata: g.metadata().clone(),
        nodes,
        edges: g.edges().to_vec(),
    })
}

fn encode_real(
    id: &str,
    t: &Tensor<f64>,
    blob: Option<&mut (PathBuf, Vec<u8>)>,
) -> Result<RawTensor> {
    match blob {
        Some(blob) => append_sidecar(id, &t.map(|&x| x as f32), blob),
        None => Ok(RawTensor::Nested(nest(t.shape(), t.data(), |&x| Value::from(x)))),
    }
}

fn encode_quant(
    id: &str,
    q: Option<&QuantRecord>,
    blob: Option<&mut (PathBuf, Vec<u8>)>,
) -> Result<Option<RawQuant>> {
    let Some(q) = q else { return Ok(None) };
    let int_weights = match (&q.int_weights, blob) {
        (None, _) => None,
        (Some(t), Some(blob)) => Some(append_sidecar(id, t, blob)?),
        (Some(t), None) => Some(RawTensor::Nested(nest(t.shape(), t.data(), |&x| {
            Value::from(x)
        }))),
    };
    Ok(Some(RawQuant {
        scale: q.scale,
        bitwidth: q.bitwidth,
        int_weights,
    }))
}

fn append_sidecar<T: SidecarElement>(
    id: &str,
    t: &Tensor<T>,
    (path, bytes): &mut (PathBuf, Vec<u8>),
) -> Result<RawTensor> {
    let offset = bytes.len();
    tensor::encode_record(t, bytes).map_err(|source| GraphError::Tensor {
        context: format!("node '{id}'"),
        source,
    })?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(RawTensor::Sidecar {
        sidecar: name,
        offset,
    })
}

fn nest<T>(shape: &[usize], data: &[T], leaf: impl Fn(&T) -> Value + Copy) -> Value {
    match shape {
        [] => leaf(&data[0]),
        [_] => Value::Array(data.iter().map(leaf).collect()),
        [n, rest @ ..] => {
            let stride = rest.iter().product::<usize>();
            Value::Array(
                (0..*n)
                    .map(|i| nest(rest, &data[i * stride..(i + 1) * stride], leaf))
                    .collect(),
            )
        }
    }
}

/// Flattens a nested array, returning its rectangular shape.
fn unnest(value: &Value, ctx: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut shape = Vec::new();
    let mut probe = value;
    while let Value::Array(items) = probe {
        shape.push(items.len());
        match items.first() {
            Some(first) => probe = first,
            None => break,
        }
    }
    if shape.is_empty() {
        return Err(GraphError::Parse(format!("{ctx}: tensor must be an array")));
    }
    let mut data = Vec::with_capacity(shape.iter().product());
    collect_leaves(value, &shape, &mut data, ctx)?;
    Ok((shape, data))
}

fn collect_leaves(value: &Value, shape: &[usize], out: &mut Vec<f64>, ctx: &str) -> Result<()> {
    match (shape, value) {
        ([], Value::Number(n)) => {
            out.push(n.as_f64().ok_or_else(|| {
                GraphError::Parse(format!("{ctx}: number {n} out of range"))
            })?);
            Ok(())
        }
        ([n, rest @ ..], Value::Array(items)) if items.len() == *n => {
            for item in items {
                collect_leaves(item, rest, out, ctx)?;
            }
            Ok(())
        }
        _ => Err(GraphError::Parse(format!(
            "{ctx}: ragged or non-numeric tensor"
        ))),
    }
}

struct SidecarCache<'a> {
    base: &'a Path,
    files: BTreeMap<String, Vec<u8>>,
}

impl<'a> SidecarCache<'a> {
    fn new(base: &'a Path) -> Self {
        Self {
            base,
            files: BTreeMap::new(),
        }
    }

    fn record<T: SidecarElement>(&mut self, name: &str, offset: usize, ctx: &str) -> Result<Tensor<T>> {
        if !self.files.contains_key(name) {
            let path = self.base.join(name);
            let bytes = fs::read(&path).map_err(|source| GraphError::Io {
                path: path.display().to_string(),
                source,
            })?;
            self.files.insert(name.to_string(), bytes);
        }
        tensor::decode_record_at(&self.files[name], offset).map_err(|source| GraphError::Tensor {
            context: ctx.to_string(),
            source,
        })
    }

    fn real(&mut self, raw: RawTensor, ctx: &str) -> Result<Tensor<f64>> {
        match raw {
            RawTensor::Sidecar { sidecar, offset } => {
                let t: Tensor<f32> = self.record(&sidecar, offset, ctx)?;
                Ok(t.map(|&x| x as f64))
            }
            RawTensor::Nested(v) => {
                let (shape, data) = unnest(&v, ctx)?;
                Tensor::new(shape, data).map_err(|source| GraphError::Tensor {
                    context: ctx.to_string(),
                    source,
                })
            }
        }
    }

    fn int(&mut self, raw: RawTensor, ctx: &str) -> Result<Tensor<i8>> {
        match raw {
            RawTensor::Sidecar { sidecar, offset } => self.record(&sidecar, offset, ctx),
            RawTensor::Nested(v) => {
                let (shape, data) = unnest(&v, ctx)?;
                let ints = data
                    .iter()
                    .map(|&x| {
                        if x.fract() == 0.0 && (-128.0..=127.0).contains(&x) {
                            Ok(x as i8)
                        } else {
                            Err(GraphError::Parse(format!(
                                "{ctx}: int weight {x} is not an 8-bit integer"
                            )))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Tensor::new(shape, ints).map_err(|source| GraphError::Tensor {
                    context: ctx.to_string(),
                    source,
                })
            }
        }
    }

    fn quant(&mut self, raw: Option<RawQuant>, ctx: &str) -> Result<Option<QuantRecord>> {
        let Some(raw) = raw else { return Ok(None) };
        let int_weights = raw
            .int_weights
            .map(|t| self.int(t, &format!("{ctx} int_weights")))
            .transpose()?;
        Ok(Some(QuantRecord {
            scale: raw.scale,
            int_weights,
            bitwidth: raw.bitwidth,
        }))
    }
}

fn decode_node(id: &str, raw: RawNode, sidecars: &mut SidecarCache<'_>) -> Result<Node> {
    let ctx = format!("node '{id}'");
    Ok(match raw {
        RawNode::Input { shape } => Node::Input { shape },
        RawNode::Output { shape } => Node::Output { size: shape },
        RawNode::Flatten => Node::Flatten,
        RawNode::SumPool2d {
            kernel,
            stride,
            padding,
        } => Node::SumPool2d(SumPool2d {
            kernel,
            stride,
            padding,
        }),
        RawNode::Lif {
            shape,
            tau,
            r,
            v_leak,
            threshold,
        } => Node::Lif(Lif {
            shape,
            tau,
            r,
            v_leak,
            threshold,
        }),
        RawNode::Conv2d {
            weights,
            stride,
            padding,
            dilation,
            quant,
        } => Node::Conv2d(Conv2d {
            weights: sidecars.real(weights, &ctx)?,
            stride,
            padding,
            dilation,
            quant: sidecars.quant(quant, &ctx)?,
        }),
        RawNode::Linear { weights, quant } => Node::Linear(Linear {
            weights: sidecars.real(weights, &ctx)?,
            quant: sidecars.quant(quant, &ctx)?,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    fn small_graph() -> Graph {
        let w = Tensor::new(vec![2, 3], vec![0.5, -0.25, 0.125, 1.0, 0.0, -1.0]).unwrap();
        let ints = Tensor::new(vec![2, 3], vec![64i8, -32, 16, 127, 0, -127]).unwrap();
        GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::Flat(3) })
            .then(
                "0",
                Node::Linear(Linear {
                    weights: w,
                    quant: Some(QuantRecord::new(1.0 / 127.0, Some(ints))),
                }),
            )
            .then("1", Node::Lif(Lif::from_decay(0.93, 1.0)))
            .then("out", Node::Output { size: 2 })
            .meta("timestep_ms", "1")
            .build()
            .unwrap()
    }

    #[test]
    fn inline_round_trip() {
        let g = small_graph();
        let text = to_json_string(&g).unwrap();
        let back = from_json_str(&text, Path::new(".")).unwrap();
        assert_eq!(back, g);
        assert_eq!(to_json_string(&back).unwrap(), text);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = small_graph();
        let json = dir.path().join("g.snngraph.json");
        let opts = SaveOptions {
            sidecar: Some(dir.path().join("g.weights.bin")),
        };
        save_graph(&g, &json, &opts).unwrap();
        let text = fs::read_to_string(&json).unwrap();
        assert!(text.contains("\"sidecar\": \"g.weights.bin\""));
        assert_eq!(load_graph(&json).unwrap(), g);
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let err = from_json_str("{\"format\": ", Path::new(".")).unwrap_err();
        assert!(matches!(err, GraphError::Parse(_)));
    }

    #[test]
    fn ragged_tensor_rejected() {
        let text = r#"{"format":"snngraph","version":1,
            "nodes":{"in":{"type":"input","shape":2},
                     "0":{"type":"linear","weights":[[1.0,2.0],[3.0]]},
                     "1":{"type":"lif","tau":2,"r":2,"v_leak":0,"threshold":1},
                     "out":{"type":"output","shape":2}},
            "edges":[["in","0"],["0","1"],["1","out"]]}"#;
        let err = from_json_str(text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("ragged"), "{err}");
    }
}
