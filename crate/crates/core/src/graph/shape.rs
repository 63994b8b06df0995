use std::fmt;

use serde::{Deserialize, Serialize};

/// Activation shape flowing along an edge: either a `(C, H, W)` feature map
/// or a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shape {
    Chw([usize; 3]),
    Flat(usize),
}

impl Shape {
    pub fn chw(c: usize, h: usize, w: usize) -> Self {
        Shape::Chw([c, h, w])
    }

    pub fn numel(&self) -> usize {
        match *self {
            Shape::Chw([c, h, w]) => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn as_chw(&self) -> Option<[usize; 3]> {
        match *self {
            Shape::Chw(d) => Some(d),
            Shape::Flat(_) => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Chw([c, h, w]) => write!(f, "{c}x{h}x{w}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

/// Output extent of a strided window operation, `None` when it would be < 1.
///
/// `floor((input + 2*pad - dilation*(kernel-1) - 1) / stride) + 1`
pub fn window_output(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    dilation: usize,
) -> Option<usize> {
    let span = dilation as i64 * (kernel as i64 - 1) + 1;
    let numer = input as i64 + 2 * pad as i64 - span;
    if numer < 0 || stride == 0 {
        return None;
    }
    Some((numer / stride as i64) as usize + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_and_pool_extents() {
        // 32 -> 15 for k=5, s=2, p=1, d=1
        assert_eq!(window_output(32, 5, 2, 1, 1), Some(15));
        assert_eq!(window_output(15, 3, 1, 1, 1), Some(15));
        // sum-pool has no dilation term: floor((15 - 2)/2) + 1 = 7
        assert_eq!(window_output(15, 2, 2, 0, 1), Some(7));
        assert_eq!(window_output(7, 2, 2, 0, 1), Some(3));
        assert_eq!(window_output(2, 5, 1, 0, 1), None);
    }

    #[test]
    fn json_forms() {
        let s: Shape = serde_json::from_str("[2,32,32]").unwrap();
        assert_eq!(s, Shape::chw(2, 32, 32));
        let f: Shape = serde_json::from_str("72").unwrap();
        assert_eq!(f, Shape::Flat(72));
        assert_eq!(Shape::chw(16, 7, 7).to_string(), "16x7x7");
    }
}
