//! Weight quantization with LIF threshold co-scaling.
//!
//! Both pipelines end in the same place: every weight node carries int8
//! weights and a per-tensor step `S`, and every LIF threshold downstream of
//! a weight node is divided by that node's `S`, so that integer synaptic
//! input and scaled thresholds reproduce the real-valued dynamics.
//!
//! * PTQ derives `S = 1 / λ_s` with `λ_s = 127 / P(|W|, p)` from a percentile
//!   of the absolute weights and rounds `λ_s · w` half away from zero,
//!   saturating to `[-128, 127]`.
//! * QAT graphs already carry `S` and the trained integer weights; only the
//!   thresholds are rescaled.

mod sweep;

use log::warn;
use thiserror::Error;

pub use sweep::{
    percentile_sweep, spike_agreement, write_sweep_csv, Sample, SweepError, SweepMetric, SweepOptions,
    SweepPoint,
};

use crate::graph::{
    Graph, GraphError, Node, QuantRecord, INT8_MAX, INT8_MIN, META_QUANTIZATION,
    META_THRESHOLDS_SCALED,
};
use crate::tensor::Tensor;

/// Largest magnitude the percentile value is mapped to.
pub const QUANT_TARGET: f64 = 127.0;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("percentile of an empty weight list")]
    EmptyWeights,
    #[error("percentile {0} outside (0, 100]")]
    InvalidPercentile(f64),
    #[error("node {node}: weight percentile is zero, scale factor undefined")]
    ZeroScale { node: String },
    #[error("node {node} already carries a quantization record")]
    AlreadyQuantized { node: String },
    #[error("graph thresholds are already scaled")]
    AlreadyFinalized,
    #[error("LIF node {lif} has no upstream weight node")]
    NoUpstreamWeights { lif: String },
    #[error("node {node} has no quantization record")]
    MissingQuantRecord { node: String },
    #[error("node {node} has no integer weights")]
    MissingIntWeights { node: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T, E = QuantError> = std::result::Result<T, E>;

/// Post-training quantization settings. Clamping to `[-128, 127]` and
/// round-half-away-from-zero are fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtqConfig {
    pub percentile: f64,
}

impl PtqConfig {
    pub fn new(percentile: f64) -> Result<Self> {
        if !(percentile > 0.0 && percentile <= 100.0) {
            return Err(QuantError::InvalidPercentile(percentile));
        }
        Ok(Self { percentile })
    }
}

impl Default for PtqConfig {
    fn default() -> Self {
        Self { percentile: 100.0 }
    }
}

/// `p`-th percentile with linear interpolation between order statistics
/// (rank `p/100 * (n-1)`); `p = 100` is the maximum.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(QuantError::EmptyWeights);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(QuantError::InvalidPercentile(p));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// `clamp(round(multiplier * w), -128, 127)` with ties rounded away from zero.
pub fn quantize_value(w: f64, multiplier: f64) -> i8 {
    (multiplier * w).round().clamp(INT8_MIN as f64, INT8_MAX as f64) as i8
}

pub fn quantize_tensor(w: &Tensor<f64>, multiplier: f64) -> Tensor<i8> {
    w.map(|&x| quantize_value(x, multiplier))
}

/// Threshold (or leak) expressed in integer-weight units.
pub fn scale_threshold(gamma: f64, scale: f64) -> f64 {
    gamma / scale
}

/// Quantizes one weight tensor; returns the int8 weights and `λ_s`.
pub fn ptq_scale_layer(w: &Tensor<f64>, cfg: &PtqConfig) -> Result<(Tensor<i8>, f64)> {
    let lambda = ptq_multiplier(w, cfg, "<tensor>")?;
    Ok((quantize_tensor(w, lambda), lambda))
}

fn ptq_multiplier(w: &Tensor<f64>, cfg: &PtqConfig, node: &str) -> Result<f64> {
    let abs: Vec<f64> = w.data().iter().map(|x| x.abs()).collect();
    let p = percentile(&abs, cfg.percentile)?;
    if p == 0.0 {
        return Err(QuantError::ZeroScale {
            node: node.to_string(),
        });
    }
    Ok(QUANT_TARGET / p)
}

/// Percentile PTQ of every weight node plus threshold co-scaling of every
/// LIF by the scale of its nearest upstream weight node.
pub fn ptq_quantize_graph(g: &Graph, cfg: &PtqConfig) -> Result<Graph> {
    PtqConfig::new(cfg.percentile)?;
    if g.thresholds_scaled() {
        return Err(QuantError::AlreadyFinalized);
    }
    let (mut nodes, edges, mut metadata) = g.clone().into_parts();
    for (id, node) in nodes.iter_mut() {
        if !node.is_weighted() {
            continue;
        }
        if node.quant().is_some() {
            return Err(QuantError::AlreadyQuantized { node: id.clone() });
        }
        let weights = node.weights().unwrap();
        let lambda = ptq_multiplier(weights, cfg, id)?;
        let ints = quantize_tensor(weights, lambda);
        *node.quant_mut().unwrap() = Some(QuantRecord::new(1.0 / lambda, Some(ints)));
    }
    rescale_lifs(g, &mut nodes)?;
    metadata.insert(META_QUANTIZATION.into(), "ptq".into());
    metadata.insert("percentile".into(), cfg.percentile.to_string());
    metadata.insert(META_THRESHOLDS_SCALED.into(), "true".into());
    Ok(Graph::new(nodes, edges, metadata)?)
}

/// Adaptive threshold scaling for a quantization-aware-trained graph:
/// each LIF threshold following a quantized layer with step `S` becomes
/// `Γ / S`; the stored integer weights are used unchanged.
pub fn qat_finalize_graph(g: &Graph) -> Result<Graph> {
    if g.thresholds_scaled() {
        return Err(QuantError::AlreadyFinalized);
    }
    for (id, node) in g.nodes() {
        if !node.is_weighted() {
            continue;
        }
        let q = node.quant().ok_or_else(|| QuantError::MissingQuantRecord {
            node: id.clone(),
        })?;
        if q.int_weights.is_none() {
            return Err(QuantError::MissingIntWeights { node: id.clone() });
        }
    }
    let (mut nodes, edges, mut metadata) = g.clone().into_parts();
    rescale_lifs(g, &mut nodes)?;
    metadata.insert(META_QUANTIZATION.into(), "qat".into());
    metadata.insert(META_THRESHOLDS_SCALED.into(), "true".into());
    Ok(Graph::new(nodes, edges, metadata)?)
}

/// Divides thresholds (and any nonzero leak potential) of every LIF by the
/// step of its governing weight node, as recorded in `nodes`.
fn rescale_lifs(
    g: &Graph,
    nodes: &mut std::collections::BTreeMap<String, Node>,
) -> Result<()> {
    for id in g.topological() {
        if !matches!(g.node(id), Some(Node::Lif(_))) {
            continue;
        }
        let upstream = g
            .upstream_weight_node(id)
            .ok_or_else(|| QuantError::NoUpstreamWeights { lif: id.clone() })?;
        let scale = nodes[upstream]
            .quant()
            .map(|q| q.scale)
            .ok_or_else(|| QuantError::MissingQuantRecord {
                node: upstream.to_string(),
            })?;
        let Some(Node::Lif(lif)) = nodes.get_mut(id) else {
            unreachable!()
        };
        lif.threshold = lif.threshold.map(|t| scale_threshold(t, scale));
        if lif.v_leak.any_nonzero() {
            warn!("LIF {id}: nonzero v_leak rescaled by the weight scale of node {upstream}");
            lif.v_leak = lif.v_leak.map(|v| scale_threshold(v, scale));
        }
    }
    Ok(())
}

/// Thresholds of every LIF that follows a weight node, in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledThresholds {
    pub layers: Vec<(String, Vec<f64>)>,
}

pub fn scaled_thresholds(g: &Graph) -> ScaledThresholds {
    let layers = g
        .topological()
        .iter()
        .filter_map(|id| match g.node(id) {
            Some(Node::Lif(lif)) if g.upstream_weight_node(id).is_some() => {
                Some((id.clone(), lif.threshold.values().to_vec()))
            }
            _ => None,
        })
        .collect();
    ScaledThresholds { layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, Lif, Linear, Shape};

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn percentile_max_and_midpoint() {
        assert_eq!(percentile(&[0.1, 0.2, 0.3, 0.4], 100.0).unwrap(), 0.4);
        assert_eq!(percentile(&[0.0, 1.0], 50.0).unwrap(), 0.5);
        assert!(matches!(percentile(&[], 50.0), Err(QuantError::EmptyWeights)));
        assert!(matches!(
            percentile(&[1.0], 0.0),
            Err(QuantError::InvalidPercentile(_))
        ));
    }

    #[test]
    fn scale_layer_hand_example() {
        let (q, lambda) = ptq_scale_layer(&t(vec![3], vec![-1.0, 0.5, 1.0]), &PtqConfig::new(100.0).unwrap()).unwrap();
        assert_eq!(lambda, 127.0);
        // 63.5 rounds away from zero
        assert_eq!(q.data(), &[-127, 64, 127]);
    }

    #[test]
    fn values_above_percentile_saturate() {
        let (q, _) = ptq_scale_layer(&t(vec![2], vec![0.01, 10.0]), &PtqConfig::new(50.0).unwrap()).unwrap();
        assert_eq!(q.data()[1], 127);
        let (q, _) = ptq_scale_layer(&t(vec![2], vec![0.01, -10.0]), &PtqConfig::new(50.0).unwrap()).unwrap();
        assert_eq!(q.data()[1], -128);
    }

    #[test]
    fn all_zero_layer_is_an_error() {
        let err = ptq_scale_layer(&t(vec![2], vec![0.0, 0.0]), &PtqConfig::default()).unwrap_err();
        assert!(matches!(err, QuantError::ZeroScale { .. }));
    }

    #[test]
    fn negative_ties_round_away_from_zero() {
        assert_eq!(quantize_value(-0.5, 1.0), -1);
        assert_eq!(quantize_value(0.5, 1.0), 1);
        assert_eq!(quantize_value(2.5, 1.0), 3);
    }

    fn chain_without_lif() -> Graph {
        GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::Flat(2) })
            .then(
                "0",
                Node::Linear(Linear {
                    weights: t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]),
                    quant: None,
                }),
            )
            .then("out", Node::Output { size: 2 })
            .build()
            .unwrap()
    }

    #[test]
    fn identity_graph_without_lif() {
        let q = ptq_quantize_graph(&chain_without_lif(), &PtqConfig::default()).unwrap();
        let rec = q.node("0").unwrap().quant().unwrap();
        assert_eq!(rec.int_weights.as_ref().unwrap().data(), &[127, 0, 0, 127]);
        assert!(scaled_thresholds(&q).layers.is_empty());
    }

    #[test]
    fn lif_without_weights_is_an_error() {
        let g = GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::Flat(2) })
            .then("1", Node::Lif(Lif::from_decay(0.9, 1.0)))
            .then("out", Node::Output { size: 2 })
            .build()
            .unwrap();
        assert!(matches!(
            ptq_quantize_graph(&g, &PtqConfig::default()),
            Err(QuantError::NoUpstreamWeights { .. })
        ));
    }

    #[test]
    fn double_quantization_rejected() {
        let q = ptq_quantize_graph(&chain_without_lif(), &PtqConfig::default()).unwrap();
        assert!(ptq_quantize_graph(&q, &PtqConfig::default()).is_err());
        assert!(matches!(qat_finalize_graph(&q), Err(QuantError::AlreadyFinalized)));
    }

    #[test]
    fn qat_requires_records() {
        let err = qat_finalize_graph(&chain_without_lif()).unwrap_err();
        assert!(matches!(err, QuantError::MissingQuantRecord { .. }));
    }

    fn qat_graph(scale: f64, gamma: f64) -> Graph {
        let w = t(vec![1, 1], vec![scale * 3.0]);
        let ints = Tensor::new(vec![1, 1], vec![3i8]).unwrap();
        GraphBuilder::new()
            .then("in", Node::Input { shape: Shape::Flat(1) })
            .then(
                "0",
                Node::Linear(Linear {
                    weights: w,
                    quant: Some(QuantRecord::new(scale, Some(ints))),
                }),
            )
            .then("1", Node::Lif(Lif::from_decay(0.93, gamma)))
            .then("out", Node::Output { size: 1 })
            .build()
            .unwrap()
    }

    #[test]
    fn qat_threshold_division() {
        let g = qat_finalize_graph(&qat_graph(1.0 / 127.0, 1.0)).unwrap();
        let th = &scaled_thresholds(&g).layers[0].1;
        assert!((th[0] - 127.0).abs() < 1e-12 * 127.0);

        let g = qat_finalize_graph(&qat_graph(1.0, 1.0)).unwrap();
        assert_eq!(scaled_thresholds(&g).layers[0].1, vec![1.0]);
        assert!(g.thresholds_scaled());
    }
}
