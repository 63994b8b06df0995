//! Lowering of a validated graph into populations and synapse-list
//! projections.
//!
//! Every LIF node becomes a population, plus one spike-list population for
//! the graph input. The nodes between a population and the next LIF (at
//! most one weight node, any number of sum-pool/flatten nodes) are composed
//! into a single linear map whose nonzero entries become the synapses of one
//! projection. Flatten is the identity on row-major `(C, H, W)` indices.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Conv2d, Graph, GraphError, Linear, Node, ParamVec, Shape, SumPool2d, INT8_MAX, INT8_MIN};
use crate::simulator::{derive_decay, DecayError};
use crate::sparse::SparseMap;
use crate::tensor::Tensor;

/// Axonal delay of every synapse, in timesteps.
pub const SYNAPSE_DELAY: u8 = 1;

#[derive(Debug, Error)]
pub enum LowerError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("LIF node {lif} has no upstream weight node")]
    NoUpstreamWeights { lif: String },
    #[error("unsupported segment {segment:?}: {reason}")]
    UnsupportedSegment { segment: Vec<String>, reason: String },
    #[error("graph contains no LIF node")]
    NoLif,
    #[error("node {node} has no integer weights but the graph thresholds are scaled")]
    MissingIntWeights { node: String },
    #[error("LIF node {lif}: {source}")]
    Decay {
        lif: String,
        #[source]
        source: DecayError,
    },
    #[error("max_timesteps must be positive")]
    ZeroTimesteps,
    #[error("network file: {0}")]
    Format(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = LowerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationKind {
    SpikeListInput,
    LifConv2d,
    LifNeuron,
}

impl PopulationKind {
    pub fn name(self) -> &'static str {
        match self {
            PopulationKind::SpikeListInput => "spike_list_input",
            PopulationKind::LifConv2d => "lif_conv2d",
            PopulationKind::LifNeuron => "lif_neuron",
        }
    }
}

/// Discrete-time LIF parameters (subtract reset):
/// `v <- alpha*v + input_scale*I + leak`, spike when `v >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub alpha: ParamVec,
    pub threshold: ParamVec,
    pub input_scale: ParamVec,
    pub leak: ParamVec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub id: String,
    pub kind: PopulationKind,
    pub size: usize,
    pub shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lif: Option<LifParams>,
    pub record_spikes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Int8,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synapse {
    pub pre: u32,
    pub post: u32,
    pub weight: f64,
    pub delay: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub pre: String,
    pub post: String,
    pub weight_kind: WeightKind,
    /// Sorted by `(pre, post)`, no duplicate pairs, no zero weights.
    pub synapses: Vec<Synapse>,
    /// Element count of the shared kernel when the projection is a
    /// convolution (possibly composed with pooling).
    pub kernel_params: Option<usize>,
    /// Graph node ids the projection was composed from, in data-flow order.
    pub segment: Vec<String>,
}

impl Projection {
    /// Dense `post x pre` matrix of the projection.
    pub fn to_dense(&self, pre_size: usize, post_size: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; pre_size]; post_size];
        for s in &self.synapses {
            m[s.post as usize][s.pre as usize] = s.weight;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub populations: Vec<Population>,
    pub projections: Vec<Projection>,
    pub timestep_ms: f64,
    pub max_timesteps: usize,
    /// Population whose spikes feed the graph output (the classifier layer).
    pub output: Option<String>,
    pub warnings: Vec<String>,
}

impl Network {
    pub fn population_index(&self, id: &str) -> Option<usize> {
        self.populations.iter().position(|p| p.id == id)
    }

    pub fn population(&self, id: &str) -> Option<&Population> {
        self.populations.iter().find(|p| p.id == id)
    }

    pub fn input(&self) -> &Population {
        self.populations
            .iter()
            .find(|p| p.kind == PopulationKind::SpikeListInput)
            .expect("lowered network has an input population")
    }

    pub fn output_population(&self) -> Option<&Population> {
        self.output.as_deref().and_then(|id| self.population(id))
    }

    pub fn incoming(&self, id: &str) -> impl Iterator<Item = (usize, &Projection)> {
        let id = id.to_string();
        self.projections
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.post == id)
    }

    pub fn outgoing(&self, id: &str) -> impl Iterator<Item = (usize, &Projection)> {
        let id = id.to_string();
        self.projections
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.pre == id)
    }

    pub fn total_synapses(&self) -> usize {
        self.projections.iter().map(|p| p.synapses.len()).sum()
    }

    /// Marks populations for spike recording; `None` records everything.
    pub fn set_recording(&mut self, ids: Option<&[String]>) {
        for p in &mut self.populations {
            p.record_spikes = ids.is_none_or(|ids| ids.contains(&p.id));
        }
    }
}

/// Which weights of a quantized graph to lower.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightSource {
    /// Integer weights when the graph thresholds are scaled, real otherwise.
    #[default]
    Auto,
    Real,
    Integer,
}

#[derive(Debug, Clone, Default)]
pub struct LowerOptions {
    pub weights: WeightSource,
}

pub fn lower(g: &Graph, max_timesteps: usize) -> Result<Network> {
    lower_with(g, max_timesteps, &LowerOptions::default())
}

pub fn lower_with(g: &Graph, max_timesteps: usize, opts: &LowerOptions) -> Result<Network> {
    if max_timesteps == 0 {
        return Err(LowerError::ZeroTimesteps);
    }
    if !g.nodes().values().any(|n| matches!(n, Node::Lif(_))) {
        return Err(LowerError::NoLif);
    }
    let use_ints = match opts.weights {
        WeightSource::Auto => g.thresholds_scaled(),
        WeightSource::Real => false,
        WeightSource::Integer => true,
    };

    let input_id = g.input_id().to_string();
    let input_shape = g.shape(&input_id).unwrap();
    let mut populations = vec![Population {
        id: input_id.clone(),
        kind: PopulationKind::SpikeListInput,
        size: input_shape.numel(),
        shape: input_shape,
        lif: None,
        record_spikes: true,
    }];
    let mut projections = Vec::new();
    let mut warnings = Vec::new();
    let mut output = None;

    // Sources are the input and every LIF, visited in topological order.
    for src in g.topological() {
        let is_source = matches!(g.node(src), Some(Node::Input { .. } | Node::Lif(_)));
        if !is_source {
            continue;
        }
        for first in g.successors(src) {
            let mut segment = Vec::new();
            let mut cur = first.as_str();
            loop {
                match g.node(cur).unwrap() {
                    Node::Lif(_) | Node::Output { .. } => break,
                    _ => {
                        segment.push(cur.to_string());
                        cur = g.successors(cur)[0].as_str();
                    }
                }
            }
            match g.node(cur).unwrap() {
                Node::Output { .. } => {
                    if !segment.is_empty() || src == &input_id {
                        return Err(LowerError::UnsupportedSegment {
                            segment,
                            reason: "the output node must directly follow a LIF node".into(),
                        });
                    }
                    output = Some(src.clone());
                }
                Node::Lif(lif) => {
                    let post_shape = g.shape(cur).unwrap();
                    let (projection, kind, saturated) =
                        lower_segment(g, src, cur, &segment, use_ints)?;
                    if saturated > 0 {
                        let msg = format!(
                            "projection {src} -> {cur}: {saturated} merged weights saturated to int8"
                        );
                        warn!("{msg}");
                        warnings.push(msg);
                    }
                    let params = derive_decay(lif, 1.0).map_err(|source| LowerError::Decay {
                        lif: cur.to_string(),
                        source,
                    })?;
                    populations.push(Population {
                        id: cur.to_string(),
                        kind,
                        size: post_shape.numel(),
                        shape: post_shape,
                        lif: Some(params),
                        record_spikes: false,
                    });
                    projections.push(projection);
                }
                _ => unreachable!(),
            }
        }
    }
    if let Some(out) = &output {
        if let Some(p) = populations.iter_mut().find(|p| &p.id == out) {
            p.record_spikes = true;
        }
    }
    Ok(Network {
        populations,
        projections,
        timestep_ms: g.timestep_ms(),
        max_timesteps,
        output,
        warnings,
    })
}

fn lower_segment(
    g: &Graph,
    pre: &str,
    post: &str,
    segment: &[String],
    use_ints: bool,
) -> Result<(Projection, PopulationKind, usize)> {
    let weight_nodes: Vec<&String> = segment
        .iter()
        .filter(|id| g.node(id).unwrap().is_weighted())
        .collect();
    match weight_nodes.len() {
        0 => {
            return Err(LowerError::NoUpstreamWeights {
                lif: post.to_string(),
            })
        }
        1 => {}
        _ => {
            return Err(LowerError::UnsupportedSegment {
                segment: segment.to_vec(),
                reason: "more than one weight node between consecutive LIF layers".into(),
            })
        }
    }

    let mut map: Option<SparseMap> = None;
    let mut kind = PopulationKind::LifNeuron;
    let mut kernel_params = None;
    for id in segment {
        let node = g.node(id).unwrap();
        let in_shape = g.input_shape(id).unwrap();
        let step = match node {
            Node::Flatten => continue,
            Node::SumPool2d(p) => sumpool_matrix(p, in_shape),
            Node::Conv2d(c) => {
                kind = PopulationKind::LifConv2d;
                kernel_params = Some(c.weights.len());
                conv_matrix(c, &weight_values(id, node, use_ints)?, in_shape)
            }
            Node::Linear(l) => linear_matrix(l, &weight_values(id, node, use_ints)?),
            other => unreachable!("{} inside a segment", other.kind()),
        };
        map = Some(match map {
            None => step,
            Some(prev) => step.after(&prev),
        });
    }
    let map = map.expect("segment has a weight node");

    let mut synapses = Vec::with_capacity(map.nnz());
    let mut saturated = 0;
    for (post_idx, row) in map.rows().iter().enumerate() {
        for &(pre_idx, w) in row {
            let weight = if use_ints {
                let clamped = w.clamp(INT8_MIN as f64, INT8_MAX as f64);
                if clamped != w {
                    saturated += 1;
                }
                clamped
            } else {
                w
            };
            synapses.push(Synapse {
                pre: pre_idx,
                post: post_idx as u32,
                weight,
                delay: SYNAPSE_DELAY,
            });
        }
    }
    synapses.sort_by_key(|s| (s.pre, s.post));
    Ok((
        Projection {
            pre: pre.to_string(),
            post: post.to_string(),
            weight_kind: if use_ints {
                WeightKind::Int8
            } else {
                WeightKind::Real
            },
            synapses,
            kernel_params,
            segment: segment.to_vec(),
        },
        kind,
        saturated,
    ))
}

fn weight_values(id: &str, node: &Node, use_ints: bool) -> Result<Tensor<f64>> {
    if !use_ints {
        return Ok(node.weights().unwrap().clone());
    }
    node.quant()
        .and_then(|q| q.int_weights.as_ref())
        .map(|t| t.map(|&x| x as f64))
        .ok_or_else(|| LowerError::MissingIntWeights {
            node: id.to_string(),
        })
}

/// Linear map of a convolution over row-major `(C, H, W)` activations,
/// one entry per in-bounds receptive-field tap, using `weights` (real or
/// integer-valued) in place of the node's own.
pub fn conv_matrix(conv: &Conv2d, weights: &Tensor<f64>, in_shape: Shape) -> SparseMap {
    let [cin, h, w] = in_shape.as_chw().expect("conv input is CxHxW");
    let [oh, ow] = conv.output_hw(h, w).expect("validated conv shape");
    let cout = conv.out_channels();
    let [kh, kw] = conv.kernel();
    let [sy, sx] = conv.stride;
    let [py, px] = conv.padding;
    let [dy, dx] = conv.dilation;
    let wd = weights.data();
    let mut rows = Vec::with_capacity(cout * oh * ow);
    for co in 0..cout {
        for yo in 0..oh {
            for xo in 0..ow {
                let mut row = Vec::new();
                for ci in 0..cin {
                    for ky in 0..kh {
                        let yi = (yo * sy + ky * dy) as i64 - py as i64;
                        if yi < 0 || yi >= h as i64 {
                            continue;
                        }
                        for kx in 0..kw {
                            let xi = (xo * sx + kx * dx) as i64 - px as i64;
                            if xi < 0 || xi >= w as i64 {
                                continue;
                            }
                            let col = ci * h * w + yi as usize * w + xi as usize;
                            let wv = wd[((co * cin + ci) * kh + ky) * kw + kx];
                            row.push((col as u32, wv));
                        }
                    }
                }
                rows.push(row);
            }
        }
    }
    SparseMap::from_sorted_rows(cin * h * w, rows)
}

/// Synapses of a standalone convolution projection.
pub fn conv_to_synapses(conv: &Conv2d, in_shape: Shape, out_shape: Shape) -> Vec<Synapse> {
    let map = conv_matrix(conv, &conv.weights, in_shape);
    debug_assert_eq!(map.n_rows(), out_shape.numel());
    let mut out: Vec<Synapse> = map
        .rows()
        .iter()
        .enumerate()
        .flat_map(|(post, row)| {
            row.iter().map(move |&(pre, weight)| Synapse {
                pre,
                post: post as u32,
                weight,
                delay: SYNAPSE_DELAY,
            })
        })
        .collect();
    out.sort_by_key(|s| (s.pre, s.post));
    out
}

/// 0/1 map summing each pooling window (no averaging).
pub fn sumpool_matrix(pool: &SumPool2d, in_shape: Shape) -> SparseMap {
    let [c, h, w] = in_shape.as_chw().expect("pool input is CxHxW");
    let [oh, ow] = pool.output_hw(h, w).expect("validated pool shape");
    let [kh, kw] = pool.kernel;
    let [sy, sx] = pool.stride;
    let [py, px] = pool.padding;
    let mut rows = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for yo in 0..oh {
            for xo in 0..ow {
                let mut row = Vec::with_capacity(kh * kw);
                for ky in 0..kh {
                    let yi = (yo * sy + ky) as i64 - py as i64;
                    if yi < 0 || yi >= h as i64 {
                        continue;
                    }
                    for kx in 0..kw {
                        let xi = (xo * sx + kx) as i64 - px as i64;
                        if xi < 0 || xi >= w as i64 {
                            continue;
                        }
                        row.push(((ch * h * w + yi as usize * w + xi as usize) as u32, 1.0));
                    }
                }
                rows.push(row);
            }
        }
    }
    SparseMap::from_sorted_rows(c * h * w, rows)
}

pub fn linear_matrix(linear: &Linear, weights: &Tensor<f64>) -> SparseMap {
    let (out, inp) = (linear.out_features(), linear.in_features());
    let wd = weights.data();
    let rows = (0..out)
        .map(|o| {
            (0..inp)
                .map(|i| (i as u32, wd[o * inp + i]))
                .collect::<Vec<_>>()
        })
        .collect();
    SparseMap::from_sorted_rows(inp, rows)
}

// ---------------------------------------------------------------------------
// Network files: JSON description plus a binary synapse table.

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    format: String,
    version: u32,
    timestep_ms: f64,
    max_timesteps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<String>,
    populations: Vec<Population>,
    projections: Vec<ProjectionEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectionEntry {
    pre: String,
    post: String,
    weight_kind: WeightKind,
    synapse_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel_params: Option<usize>,
    segment: Vec<String>,
    table: String,
    offset: usize,
}

const NETWORK_FORMAT: &str = "snnnetwork";

fn record_len(kind: WeightKind) -> usize {
    match kind {
        WeightKind::Int8 => 4 + 4 + 1 + 1,
        WeightKind::Real => 4 + 4 + 4 + 1,
    }
}

/// Writes the network JSON and its synapse table. Table records are
/// `pre u32, post u32, weight (i8 | f32), delay u8`, little-endian; real
/// weights are narrowed to f32.
pub fn save_network(net: &Network, json_path: &Path, table_path: &Path) -> Result<()> {
    let table_name = table_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut table = Vec::new();
    let mut entries = Vec::new();
    for p in &net.projections {
        let offset = table.len();
        for s in &p.synapses {
            table.extend_from_slice(&s.pre.to_le_bytes());
            table.extend_from_slice(&s.post.to_le_bytes());
            match p.weight_kind {
                WeightKind::Int8 => table.push(s.weight as i8 as u8),
                WeightKind::Real => table.extend_from_slice(&(s.weight as f32).to_le_bytes()),
            }
            table.push(s.delay);
        }
        entries.push(ProjectionEntry {
            pre: p.pre.clone(),
            post: p.post.clone(),
            weight_kind: p.weight_kind,
            synapse_count: p.synapses.len(),
            kernel_params: p.kernel_params,
            segment: p.segment.clone(),
            table: table_name.clone(),
            offset,
        });
    }
    let file = NetworkFile {
        format: NETWORK_FORMAT.into(),
        version: 1,
        timestep_ms: net.timestep_ms,
        max_timesteps: net.max_timesteps,
        output: net.output.clone(),
        populations: net.populations.clone(),
        projections: entries,
        warnings: net.warnings.clone(),
    };
    let mut text =
        serde_json::to_string_pretty(&file).map_err(|e| LowerError::Format(e.to_string()))?;
    text.push('\n');
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| LowerError::Io { path, source }
    };
    crate::fsutil::write_atomic(table_path, &table).map_err(io(table_path))?;
    crate::fsutil::write_atomic(json_path, text.as_bytes()).map_err(io(json_path))
}

pub fn load_network(json_path: &Path) -> Result<Network> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| LowerError::Io { path, source }
    };
    let text = fs::read_to_string(json_path).map_err(io(json_path))?;
    let file: NetworkFile =
        serde_json::from_str(&text).map_err(|e| LowerError::Format(e.to_string()))?;
    if file.format != NETWORK_FORMAT {
        return Err(LowerError::Format(format!("unexpected format '{}'", file.format)));
    }
    let base = json_path.parent().unwrap_or(Path::new("."));
    let mut tables: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut projections = Vec::new();
    for e in file.projections {
        if !tables.contains_key(&e.table) {
            let p = base.join(&e.table);
            tables.insert(e.table.clone(), fs::read(&p).map_err(io(&p))?);
        }
        let bytes = &tables[&e.table];
        let len = record_len(e.weight_kind);
        let end = e.offset + e.synapse_count * len;
        let chunk = bytes.get(e.offset..end).ok_or_else(|| {
            LowerError::Format(format!("synapse table too short for {} -> {}", e.pre, e.post))
        })?;
        let synapses = chunk
            .chunks_exact(len)
            .map(|r| {
                let pre = u32::from_le_bytes([r[0], r[1], r[2], r[3]]);
                let post = u32::from_le_bytes([r[4], r[5], r[6], r[7]]);
                let (weight, delay) = match e.weight_kind {
                    WeightKind::Int8 => (r[8] as i8 as f64, r[9]),
                    WeightKind::Real => (
                        f32::from_le_bytes([r[8], r[9], r[10], r[11]]) as f64,
                        r[12],
                    ),
                };
                Synapse {
                    pre,
                    post,
                    weight,
                    delay,
                }
            })
            .collect();
        projections.push(Projection {
            pre: e.pre,
            post: e.post,
            weight_kind: e.weight_kind,
            synapses,
            kernel_params: e.kernel_params,
            segment: e.segment,
        });
    }
    let net = Network {
        populations: file.populations,
        projections,
        timestep_ms: file.timestep_ms,
        max_timesteps: file.max_timesteps,
        output: file.output,
        warnings: file.warnings,
    };
    check_network(&net)?;
    Ok(net)
}

/// Structural checks applied to networks read from disk.
pub fn check_network(net: &Network) -> Result<()> {
    let bad = |m: String| Err(LowerError::Format(m));
    let inputs = net
        .populations
        .iter()
        .filter(|p| p.kind == PopulationKind::SpikeListInput)
        .count();
    if inputs != 1 {
        return bad(format!("expected one input population, found {inputs}"));
    }
    for p in &net.populations {
        if p.size == 0 {
            return bad(format!("population {} is empty", p.id));
        }
        if (p.kind == PopulationKind::SpikeListInput) != p.lif.is_none() {
            return bad(format!("population {} has inconsistent neuron parameters", p.id));
        }
    }
    for proj in &net.projections {
        let (Some(pre), Some(post)) = (net.population(&proj.pre), net.population(&proj.post))
        else {
            return bad(format!("projection {} -> {} names an unknown population", proj.pre, proj.post));
        };
        let mut last = None;
        for s in &proj.synapses {
            if s.pre as usize >= pre.size || s.post as usize >= post.size {
                return bad(format!("synapse ({}, {}) out of range in {} -> {}", s.pre, s.post, proj.pre, proj.post));
            }
            if s.delay != SYNAPSE_DELAY {
                return bad(format!("synapse delay {} is not supported", s.delay));
            }
            let key = (s.pre, s.post);
            if last.is_some_and(|l| l >= key) {
                return bad(format!("synapses of {} -> {} not sorted or duplicated", proj.pre, proj.post));
            }
            last = Some(key);
        }
    }
    Ok(())
}

/// Writes only the synapses of one projection as `pre,post,weight` CSV.
pub fn write_synapse_csv(proj: &Projection, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "pre,post,weight,delay")?;
    for s in &proj.synapses {
        writeln!(out, "{},{},{},{}", s.pre, s.post, s.weight, s.delay)?;
    }
    Ok(())
}
