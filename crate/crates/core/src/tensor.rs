//! Dense row-major tensors and the packed binary sidecar format.
//!
//! A sidecar record is a 16-byte header followed by little-endian payload:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"SNNB"`                         |
//! | 4      | 1    | dtype code (0 = f32, 1 = i8, 2 = u32)   |
//! | 5      | 1    | rank (1..=4)                            |
//! | 6      | 2    | reserved, zero                          |
//! | 8      | 8    | four u16 dims, unused trailing dims = 0 |
//!
//! Records can be concatenated; a reader addresses them by byte offset.

use std::io::{Read, Write};

use thiserror::Error;

pub const SIDECAR_MAGIC: [u8; 4] = *b"SNNB";
pub const SIDECAR_HEADER_LEN: usize = 16;
pub const MAX_RANK: usize = 4;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but {found} were given")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("bad sidecar magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unknown sidecar dtype code {0}")]
    UnknownDtype(u8),
    #[error("sidecar dtype is {found:?}, expected {expected:?}")]
    DtypeMismatch { expected: Dtype, found: Dtype },
    #[error("sidecar rank {0} outside 1..=4")]
    BadRank(u8),
    #[error("dimension {0} does not fit the 16-bit sidecar header")]
    DimTooLarge(usize),
    #[error("sidecar truncated: {0}")]
    Truncated(#[source] std::io::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    I8,
    U32,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::I8 => 1,
            Dtype::U32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, TensorError> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::I8),
            2 => Ok(Dtype::U32),
            other => Err(TensorError::UnknownDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 | Dtype::U32 => 4,
            Dtype::I8 => 1,
        }
    }
}

/// Row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        let expected = shape.iter().product::<usize>();
        if expected != data.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                expected,
                found: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Flat offset of a multi-index. Panics on rank mismatch.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }
}

impl<T: Clone> Tensor<T> {
    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }
}

impl<T: Copy> Tensor<T> {
    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }
}

/// Element types that can be stored in a sidecar record.
pub trait SidecarElement: Copy + Sized {
    const DTYPE: Dtype;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl SidecarElement for f32 {
    const DTYPE: Dtype = Dtype::F32;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl SidecarElement for i8 {
    const DTYPE: Dtype = Dtype::I8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self as u8);
    }
    fn read_le(bytes: &[u8]) -> Self {
        bytes[0] as i8
    }
}

impl SidecarElement for u32 {
    const DTYPE: Dtype = Dtype::U32;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

/// Appends one sidecar record to `out`.
pub fn encode_record<T: SidecarElement>(
    tensor: &Tensor<T>,
    out: &mut Vec<u8>,
) -> Result<(), TensorError> {
    let rank = tensor.shape.len();
    if rank == 0 || rank > MAX_RANK {
        return Err(TensorError::BadRank(rank as u8));
    }
    out.extend_from_slice(&SIDECAR_MAGIC);
    out.push(T::DTYPE.code());
    out.push(rank as u8);
    out.extend_from_slice(&[0, 0]);
    for i in 0..MAX_RANK {
        let d = tensor.shape.get(i).copied().unwrap_or(0);
        let d16 = u16::try_from(d).map_err(|_| TensorError::DimTooLarge(d))?;
        out.extend_from_slice(&d16.to_le_bytes());
    }
    out.reserve(tensor.data.len() * T::DTYPE.size());
    for &x in &tensor.data {
        x.write_le(out);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordHeader {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

impl RecordHeader {
    pub fn parse(bytes: &[u8; SIDECAR_HEADER_LEN]) -> Result<Self, TensorError> {
        let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
        if magic != SIDECAR_MAGIC {
            return Err(TensorError::BadMagic(magic));
        }
        let dtype = Dtype::from_code(bytes[4])?;
        let rank = bytes[5];
        if rank == 0 || rank as usize > MAX_RANK {
            return Err(TensorError::BadRank(rank));
        }
        let shape = (0..rank as usize)
            .map(|i| u16::from_le_bytes([bytes[8 + 2 * i], bytes[9 + 2 * i]]) as usize)
            .collect();
        Ok(Self { dtype, shape })
    }

    pub fn payload_len(&self) -> usize {
        self.shape.iter().product::<usize>() * self.dtype.size()
    }
}

/// Reads one record of element type `T` from a reader positioned at a header.
pub fn read_record<T: SidecarElement, R: Read>(reader: &mut R) -> Result<Tensor<T>, TensorError> {
    let mut header = [0u8; SIDECAR_HEADER_LEN];
    reader
        .read_exact(&mut header)
        .map_err(TensorError::Truncated)?;
    let header = RecordHeader::parse(&header)?;
    if header.dtype != T::DTYPE {
        return Err(TensorError::DtypeMismatch {
            expected: T::DTYPE,
            found: header.dtype,
        });
    }
    let mut payload = vec![0u8; header.payload_len()];
    reader
        .read_exact(&mut payload)
        .map_err(TensorError::Truncated)?;
    let size = T::DTYPE.size();
    let data = payload.chunks_exact(size).map(T::read_le).collect();
    Tensor::new(header.shape, data)
}

/// Decodes the record starting at `offset` within an in-memory sidecar blob.
pub fn decode_record_at<T: SidecarElement>(
    blob: &[u8],
    offset: usize,
) -> Result<Tensor<T>, TensorError> {
    let mut slice = blob.get(offset..).unwrap_or(&[]);
    read_record(&mut slice)
}

pub fn write_record<T: SidecarElement, W: Write>(
    tensor: &Tensor<T>,
    writer: &mut W,
) -> Result<(), TensorError> {
    let mut buf = Vec::new();
    encode_record(tensor, &mut buf)?;
    writer.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_sixteen_bytes() {
        let t = Tensor::new(vec![2, 3], vec![1i8, -2, 3, -4, 5, -128]).unwrap();
        let mut buf = Vec::new();
        encode_record(&t, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SNNB");
        assert_eq!(buf[4], 1);
        assert_eq!(buf[5], 2);
        assert_eq!(&buf[8..12], &[2, 0, 3, 0]);
        assert_eq!(&buf[12..16], &[0, 0, 0, 0]);
        assert_eq!(buf.len(), 16 + 6);
        assert_eq!(buf[16 + 5], 0x80);
    }

    #[test]
    fn concatenated_records_decode_by_offset() {
        let a = Tensor::new(vec![3], vec![1.5f32, -2.0, 0.25]).unwrap();
        let b = Tensor::new(vec![1, 1, 2], vec![7u32, 9]).unwrap();
        let mut buf = Vec::new();
        encode_record(&a, &mut buf).unwrap();
        let off = buf.len();
        encode_record(&b, &mut buf).unwrap();
        assert_eq!(decode_record_at::<f32>(&buf, 0).unwrap(), a);
        assert_eq!(decode_record_at::<u32>(&buf, off).unwrap(), b);
    }

    #[test]
    fn dtype_mismatch_is_reported() {
        let a = Tensor::new(vec![1], vec![1.0f32]).unwrap();
        let mut buf = Vec::new();
        encode_record(&a, &mut buf).unwrap();
        assert!(matches!(
            decode_record_at::<i8>(&buf, 0),
            Err(TensorError::DtypeMismatch { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let a = Tensor::new(vec![4], vec![1u32, 2, 3, 4]).unwrap();
        let mut buf = Vec::new();
        encode_record(&a, &mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(matches!(
            decode_record_at::<u32>(&buf, 0),
            Err(TensorError::Truncated(_))
        ));
    }

    #[test]
    fn oversized_dim_rejected() {
        let t = Tensor::filled(vec![70_000], 0i8);
        let mut buf = Vec::new();
        assert!(matches!(
            encode_record(&t, &mut buf),
            Err(TensorError::DimTooLarge(70_000))
        ));
    }
}
