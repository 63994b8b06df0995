//! Brute-force oracles and random graph builders shared by the integration
//! tests. Nothing here calls the library code it is used to check.

#![allow(dead_code)]

use neurodeploy_core::events::Event;
use neurodeploy_core::graph::{Conv2d, GraphBuilder, Lif, Linear, Node, Shape, SumPool2d};
use neurodeploy_core::tensor::Tensor;
use neurodeploy_core::Graph;
use rand::Rng;

/// Direct-definition 2-D convolution over a `(C, H, W)` input.
pub fn dense_conv(
    x: &[f64],
    [c, h, w]: [usize; 3],
    weights: &[f64],
    [co, kh, kw]: [usize; 3],
    stride: usize,
    pad: usize,
    dil: usize,
) -> (Vec<f64>, [usize; 3]) {
    let oh = (h + 2 * pad - dil * (kh - 1) - 1) / stride + 1;
    let ow = (w + 2 * pad - dil * (kw - 1) - 1) / stride + 1;
    let mut y = vec![0.0; co * oh * ow];
    for o in 0..co {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = 0.0;
                for ci in 0..c {
                    for a in 0..kh {
                        for b in 0..kw {
                            let yi = (i * stride + a * dil) as isize - pad as isize;
                            let xi = (j * stride + b * dil) as isize - pad as isize;
                            if yi < 0 || xi < 0 || yi >= h as isize || xi >= w as isize {
                                continue;
                            }
                            s += weights[((o * c + ci) * kh + a) * kw + b]
                                * x[(ci * h + yi as usize) * w + xi as usize];
                        }
                    }
                }
                y[(o * oh + i) * ow + j] = s;
            }
        }
    }
    (y, [co, oh, ow])
}

/// Sum pooling without padding.
pub fn dense_sumpool(x: &[f64], [c, h, w]: [usize; 3], k: usize, stride: usize) -> (Vec<f64>, [usize; 3]) {
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let mut y = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        s += x[(ch * h + i * stride + a) * w + j * stride + b];
                    }
                }
                y[(ch * oh + i) * ow + j] = s;
            }
        }
    }
    (y, [c, oh, ow])
}

pub fn dense_linear(x: &[f64], weights: &[f64], out: usize) -> Vec<f64> {
    let inp = x.len();
    (0..out)
        .map(|o| (0..inp).map(|i| weights[o * inp + i] * x[i]).sum())
        .collect()
}

/// Matrix of a linear operator, built column by column from basis vectors.
pub fn matrix_of(n_in: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    let cols: Vec<Vec<f64>> = (0..n_in)
        .map(|j| {
            let mut e = vec![0.0; n_in];
            e[j] = 1.0;
            f(&e)
        })
        .collect();
    let n_out = cols.first().map_or(0, Vec::len);
    (0..n_out)
        .map(|r| cols.iter().map(|c| c[r]).collect())
        .collect()
}

/// O(n^2) denoise: keep an event iff another event is within `px`
/// (Chebyshev) and `window` microseconds.
pub fn brute_denoise(events: &[Event], px: u32, window: u64) -> Vec<Event> {
    events
        .iter()
        .enumerate()
        .filter(|(i, e)| {
            events.iter().enumerate().any(|(j, o)| {
                j != *i
                    && (e.x as i64 - o.x as i64).unsigned_abs() <= px as u64
                    && (e.y as i64 - o.y as i64).unsigned_abs() <= px as u64
                    && e.t.abs_diff(o.t) <= window
            })
        })
        .map(|(_, e)| *e)
        .collect()
}

/// Sums `factor x factor` pixel blocks of `(T, C, H, W)` frames, padding
/// the lower/right border with zeros.
pub fn blocksum(data: &[u32], [t, c, h, w]: [usize; 4], factor: usize) -> (Vec<u32>, [usize; 4]) {
    let (oh, ow) = (h.div_ceil(factor), w.div_ceil(factor));
    let mut out = vec![0u32; t * c * oh * ow];
    for k in 0..t {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out[((k * c + ch) * oh + y / factor) * ow + x / factor] +=
                        data[((k * c + ch) * h + y) * w + x];
                }
            }
        }
    }
    (out, [t, c, oh, ow])
}

/// Time-sorted random events on a `w x h` sensor within `t_max` us.
pub fn random_events(rng: &mut impl Rng, n: usize, w: u16, h: u16, t_max: u64) -> Vec<Event> {
    let mut ev: Vec<Event> = (0..n)
        .map(|_| {
            Event::new(
                rng.gen_range(0..t_max),
                rng.gen_range(0..w),
                rng.gen_range(0..h),
                rng.gen_range(0..2),
            )
        })
        .collect();
    ev.sort_by_key(|e| e.t);
    ev
}

pub fn conv_node(weights: Vec<f64>, shape: [usize; 4], stride: usize, pad: usize, dil: usize) -> Node {
    Node::Conv2d(Conv2d {
        weights: Tensor::new(shape.to_vec(), weights).unwrap(),
        stride: [stride, stride],
        padding: [pad, pad],
        dilation: [dil, dil],
        quant: None,
    })
}

pub fn pool_node(k: usize, stride: usize) -> Node {
    Node::SumPool2d(SumPool2d {
        kernel: [k, k],
        stride: [stride, stride],
        padding: [0, 0],
    })
}

pub fn linear_node(weights: Vec<f64>, out: usize, inp: usize) -> Node {
    Node::Linear(Linear {
        weights: Tensor::new(vec![out, inp], weights).unwrap(),
        quant: None,
    })
}

/// Random fully connected chain with per-layer thresholds; layer sizes are
/// drawn from `sizes` and weights from `weight`.
pub fn random_chain(
    rng: &mut impl Rng,
    sizes: &[usize],
    beta: f64,
    mut weight: impl FnMut(&mut dyn rand::RngCore) -> f64,
    mut threshold: impl FnMut(&mut dyn rand::RngCore) -> f64,
) -> Graph {
    let mut b = GraphBuilder::new().then("in", Node::Input { shape: Shape::Flat(sizes[0]) });
    for (i, pair) in sizes.windows(2).enumerate() {
        let w = (0..pair[0] * pair[1]).map(|_| weight(rng)).collect();
        b = b
            .then(format!("w{i}"), linear_node(w, pair[1], pair[0]))
            .then(format!("l{i}"), Node::Lif(Lif::from_decay(beta, threshold(rng))));
    }
    b.then("out", Node::Output { size: *sizes.last().unwrap() })
        .build()
        .unwrap()
}
