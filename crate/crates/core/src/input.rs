use crate::cam::SaliencyMap;
use crate::error::{Error, Result};

/// An `H×W×3` image with interleaved color planes and values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl InputImage {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dims("image must be at least 1x1"));
        }
        if data.len() != height * width * Self::CHANNELS {
            return Err(Error::dims(format!(
                "{height}x{width}x3 image needs {} values, got {}",
                height * width * Self::CHANNELS,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(InputImage {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * Self::CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..Self::CHANNELS {
                    data.push(f(y, x, c));
                }
            }
        }
        InputImage::new(height, width, data)
    }

    pub fn black(height: usize, width: usize) -> Self {
        InputImage {
            height,
            width,
            data: vec![0.0; height * width * Self::CHANNELS],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * Self::CHANNELS + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Hadamard product with a saliency mask, the same mask applied to all
    /// three color planes.
    pub fn masked(&self, mask: &SaliencyMap) -> Result<InputImage> {
        if (mask.height(), mask.width()) != self.dims() {
            return Err(Error::dims(format!(
                "mask is {}x{}, image is {}x{}",
                mask.height(),
                mask.width(),
                self.height,
                self.width
            )));
        }
        let data = self
            .data
            .chunks_exact(Self::CHANNELS)
            .zip(mask.as_slice())
            .flat_map(|(px, &s)| px.iter().map(move |v| v * s))
            .collect();
        Ok(InputImage {
            height: self.height,
            width: self.width,
            data,
        })
    }
}
