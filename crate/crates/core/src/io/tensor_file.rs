//! The `CCT1` tensor interchange format.
//!
//! ```text
//! magic   4 bytes   "CCT1"
//! dtype   u8        1 = little-endian f32
//! rank    u8
//! dims    rank × u32 little-endian
//! payload ∏dims × f32 little-endian, row-major
//! ```
//!
//! Values are narrowed to `f32` on save and widened back on load.

use std::fs;
use std::path::Path;

use crate::cam::SaliencyMap;
use crate::error::{Error, Result};
use crate::input::InputImage;
use crate::tensor::Matrix;

pub const MAGIC: [u8; 4] = *b"CCT1";
pub const DTYPE_F32: u8 = 1;

/// An n-dimensional tensor in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::dims(format!(
                "tensor of shape {dims:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::dims(format!("shape {dims:?} is not representable")));
        }
        Ok(Tensor { dims, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            dims: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(values: &[f64]) -> Self {
        Tensor {
            dims: vec![values.len()],
            data: values.to_vec(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Interprets a rank-2 tensor as a matrix.
    pub fn into_matrix(self) -> Result<Matrix> {
        match self.dims[..] {
            [r, c] => Matrix::new(r, c, self.data),
            _ => Err(Error::dims(format!("expected a rank-2 tensor, got shape {:?}", self.dims))),
        }
    }

    /// Interprets a rank-1 tensor as a vector.
    pub fn into_vector(self) -> Result<Vec<f64>> {
        match self.dims[..] {
            [_] => Ok(self.data),
            _ => Err(Error::dims(format!("expected a rank-1 tensor, got shape {:?}", self.dims))),
        }
    }

    /// Interprets an `H×W×3` tensor as an image.
    pub fn into_image(self) -> Result<InputImage> {
        match self.dims[..] {
            [h, w, 3] => InputImage::new(h, w, self.data),
            _ => Err(Error::dims(format!("expected an HxWx3 tensor, got shape {:?}", self.dims))),
        }
    }
}

impl From<&Matrix> for Tensor {
    fn from(m: &Matrix) -> Self {
        Tensor {
            dims: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }
}

impl From<&SaliencyMap> for Tensor {
    fn from(s: &SaliencyMap) -> Self {
        Tensor::from(s.grid())
    }
}

impl From<&InputImage> for Tensor {
    fn from(img: &InputImage) -> Self {
        Tensor {
            dims: vec![img.height(), img.width(), InputImage::CHANNELS],
            data: img.as_slice().to_vec(),
        }
    }
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(&MAGIC);
    out.push(DTYPE_F32);
    out.push(t.dims.len() as u8);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &t.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let truncated = |expected: usize| Error::Truncated {
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(6));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("four bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    if bytes.len() < 6 {
        return Err(truncated(6));
    }
    if bytes[4] != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(bytes[4]));
    }
    let rank = bytes[5] as usize;
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("four bytes")) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::dims(format!("shape {dims:?} overflows")))?;
    let expected = count
        .checked_mul(4)
        .and_then(|p| p.checked_add(header))
        .ok_or_else(|| Error::dims(format!("shape {dims:?} overflows")))?;
    if bytes.len() != expected {
        return Err(truncated(expected));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("four bytes"))))
        .collect();
    Ok(Tensor { dims, data })
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

/// Hex SHA-256 of the encoded tensor.
pub fn tensor_checksum(t: &Tensor) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(encode_tensor(t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ramp_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ramp.cct");
        let t = Tensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap();
        save_tensor(&path, &t).unwrap();
        assert_eq!(load_tensor(&path).unwrap(), t);
    }

    #[test]
    fn header_layout_is_exact() {
        let bytes = encode_tensor(&Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap());
        assert_eq!(
            bytes,
            [
                b'C', b'C', b'T', b'1', 1, 2, 1, 0, 0, 0, 2, 0, 0, 0, //
                0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0
            ]
        );
    }

    #[test]
    fn scalar_round_trips() {
        let t = Tensor::scalar(7.0);
        let back = decode_tensor(&encode_tensor(&t)).unwrap();
        assert_eq!(back.rank(), 0);
        assert_eq!(back.data(), &[7.0]);
    }

    #[test]
    fn bad_magic_is_distinct() {
        let mut bytes = encode_tensor(&Tensor::scalar(1.0));
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_tensor(&bytes),
            Err(Error::BadMagic { found }) if &found == b"XXXX"
        ));
    }

    #[test]
    fn truncation_and_dtype_are_distinct() {
        let bytes = encode_tensor(&Tensor::vector(&[1.0, 2.0, 3.0]));
        assert!(matches!(
            decode_tensor(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(decode_tensor(&bytes[..7]), Err(Error::Truncated { .. })));
        let mut wrong = bytes.clone();
        wrong[4] = 2;
        assert!(matches!(decode_tensor(&wrong), Err(Error::UnsupportedDtype(2))));
    }

    #[test]
    fn narrowing_to_f32_is_documented_behaviour() {
        let t = Tensor::vector(&[0.1]);
        let back = decode_tensor(&encode_tensor(&t)).unwrap();
        assert_eq!(back.data()[0], f64::from(0.1f32));
    }

    proptest! {
        #[test]
        fn finite_f32_values_round_trip_bit_exactly(
            values in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 0..64),
        ) {
            let mut values = values;
            values.push(-0.0);
            let t = Tensor::vector(&values.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
            let back = decode_tensor(&encode_tensor(&t)).unwrap();
            let bits: Vec<u32> = back.data().iter().map(|&v| (v as f32).to_bits()).collect();
            let want: Vec<u32> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, want);
        }
    }
}
