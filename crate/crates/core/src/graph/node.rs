use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::shape::{window_output, Shape};
use crate::tensor::Tensor;

/// Bit width of every quantized weight tensor.
pub const QUANT_BITWIDTH: u8 = 8;
pub const INT8_MIN: i32 = -128;
pub const INT8_MAX: i32 = 127;

/// A per-neuron parameter that is either a single broadcast value or one
/// value per neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec(Vec<f64>);

impl ParamVec {
    pub fn scalar(v: f64) -> Self {
        ParamVec(vec![v])
    }

    pub fn per_neuron(values: Vec<f64>) -> Self {
        ParamVec(values)
    }

    pub fn is_scalar(&self) -> bool {
        self.0.len() == 1
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Broadcasting accessor.
    pub fn get(&self, i: usize) -> f64 {
        if self.0.len() == 1 {
            self.0[0]
        } else {
            self.0[i]
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ParamVec {
        ParamVec(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn expand(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.get(i)).collect()
    }

    pub fn any_nonzero(&self) -> bool {
        self.0.iter().any(|&v| v != 0.0)
    }
}

impl Serialize for ParamVec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.len() == 1 {
            self.0[0].serialize(s)
        } else {
            self.0.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for ParamVec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Scalar(f64),
            Vector(Vec<f64>),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Scalar(v) => ParamVec(vec![v]),
            Repr::Vector(v) => ParamVec(v),
        })
    }
}

/// Per-tensor quantization metadata attached to a weight node.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantRecord {
    /// Step size `S` of the integer grid: `real ≈ int * scale`.
    pub scale: f64,
    pub int_weights: Option<Tensor<i8>>,
    pub bitwidth: u8,
}

impl QuantRecord {
    pub fn new(scale: f64, int_weights: Option<Tensor<i8>>) -> Self {
        Self {
            scale,
            int_weights,
            bitwidth: QUANT_BITWIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `(out_ch, in_ch, kh, kw)`
    pub weights: Tensor<f64>,
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub dilation: [usize; 2],
    pub quant: Option<QuantRecord>,
}

impl Conv2d {
    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> [usize; 2] {
        [self.weights.shape()[2], self.weights.shape()[3]]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<[usize; 2]> {
        let [kh, kw] = self.kernel();
        Some([
            window_output(h, kh, self.stride[0], self.padding[0], self.dilation[0])?,
            window_output(w, kw, self.stride[1], self.padding[1], self.dilation[1])?,
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `(out, in)`
    pub weights: Tensor<f64>,
    pub quant: Option<QuantRecord>,
}

impl Linear {
    pub fn out_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SumPool2d {
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub padding: [usize; 2],
}

impl SumPool2d {
    pub fn output_hw(&self, h: usize, w: usize) -> Option<[usize; 2]> {
        Some([
            window_output(h, self.kernel[0], self.stride[0], self.padding[0], 1)?,
            window_output(w, self.kernel[1], self.stride[1], self.padding[1], 1)?,
        ])
    }
}

/// Leaky integrate-and-fire layer in continuous-time parameterization:
/// `tau * dv/dt = v_leak - v + r * I`, spike when `v >= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lif {
    /// Optional declared shape; checked against the producer when present.
    pub shape: Option<Shape>,
    pub tau: ParamVec,
    pub r: ParamVec,
    pub v_leak: ParamVec,
    pub threshold: ParamVec,
}

impl Lif {
    /// LIF layer with broadcast parameters.
    pub fn uniform(tau: f64, r: f64, v_leak: f64, threshold: f64) -> Self {
        Self {
            shape: None,
            tau: ParamVec::scalar(tau),
            r: ParamVec::scalar(r),
            v_leak: ParamVec::scalar(v_leak),
            threshold: ParamVec::scalar(threshold),
        }
    }

    /// Parameters for a discrete decay `beta` with unit input coupling:
    /// `tau = 1 / (1 - beta)`, `r = tau`.
    pub fn from_decay(beta: f64, threshold: f64) -> Self {
        let tau = 1.0 / (1.0 - beta);
        Self::uniform(tau, tau, 0.0, threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Input { shape: Shape },
    Conv2d(Conv2d),
    Linear(Linear),
    SumPool2d(SumPool2d),
    Flatten,
    Lif(Lif),
    Output { size: usize },
}

impl Node {
    pub fn kind(&self) -> &'static str {
        match self {
            Node::Input { .. } => "input",
            Node::Conv2d(_) => "conv2d",
            Node::Linear(_) => "linear",
            Node::SumPool2d(_) => "sum_pool2d",
            Node::Flatten => "flatten",
            Node::Lif(_) => "lif",
            Node::Output { .. } => "output",
        }
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self, Node::Conv2d(_) | Node::Linear(_))
    }

    pub fn weights(&self) -> Option<&Tensor<f64>> {
        match self {
            Node::Conv2d(c) => Some(&c.weights),
            Node::Linear(l) => Some(&l.weights),
            _ => None,
        }
    }

    pub fn quant(&self) -> Option<&QuantRecord> {
        match self {
            Node::Conv2d(c) => c.quant.as_ref(),
            Node::Linear(l) => l.quant.as_ref(),
            _ => None,
        }
    }

    pub fn quant_mut(&mut self) -> Option<&mut Option<QuantRecord>> {
        match self {
            Node::Conv2d(c) => Some(&mut c.quant),
            Node::Linear(l) => Some(&mut l.quant),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights().map_or(0, |w| w.len())
    }
}
