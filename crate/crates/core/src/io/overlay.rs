use std::path::Path;

use image::RgbImage;

use crate::cam::SaliencyMap;
use crate::error::{Error, Result};
use crate::input::InputImage;

const RED: [f64; 3] = [1.0, 0.0, 0.0];

/// Blends the image toward pure red by the saliency value at each pixel:
/// `round(255·((1 − s)·p + s·red))`, rounding half away from zero.
pub fn render_overlay(image: &InputImage, saliency: &SaliencyMap) -> Result<RgbImage> {
    let (h, w) = image.dims();
    if (saliency.height(), saliency.width()) != (h, w) {
        return Err(Error::dims(format!(
            "saliency is {}x{}, image is {h}x{w}",
            saliency.height(),
            saliency.width()
        )));
    }
    let mut out = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let s = saliency.get(y, x);
            let px = std::array::from_fn(|c| quantize((1.0 - s) * image.get(y, x, c) + s * RED[c]));
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    Ok(out)
}

/// Maps `[0, 1]` to `0..=255`. The scaled value is first snapped to 1e-9 so
/// that inputs stored as `k/255` land on their exact half-steps.
fn quantize(v: f64) -> u8 {
    let scaled = (v * 255.0 * 1e9).round() / 1e9;
    scaled.round().clamp(0.0, 255.0) as u8
}

pub fn save_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    img.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

/// Hex SHA-256 of the raw RGB8 pixel buffer.
pub fn overlay_checksum(img: &RgbImage) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(img.as_raw()))
}

/// Reads an 8-bit image file into `[0, 1]` RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<InputImage> {
    let rgb = image::open(path.as_ref())?.to_rgb8();
    let (w, h) = rgb.dimensions();
    InputImage::new(
        h as usize,
        w as usize,
        rgb.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    fn gray(v: f64) -> InputImage {
        InputImage::from_fn(1, 1, |_, _, _| v).unwrap()
    }

    fn sal(v: f64) -> SaliencyMap {
        SaliencyMap::new(Matrix::from_rows(&[[v]]).unwrap()).unwrap()
    }

    #[test]
    fn zero_saliency_quantizes_original() {
        let img = InputImage::from_fn(2, 2, |y, x, c| ((y * 2 + x) * 3 + c) as f64 / 11.0).unwrap();
        let out = render_overlay(&img, &SaliencyMap::zeros(2, 2)).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                for c in 0..3 {
                    let want = (img.get(y, x, c) * 255.0).round() as u8;
                    assert_eq!(out.get_pixel(x as u32, y as u32)[c], want);
                }
            }
        }
    }

    #[test]
    fn full_saliency_is_pure_red() {
        let out = render_overlay(&gray(0.3), &sal(1.0)).unwrap();
        assert_eq!(out.get_pixel(0, 0).0, [255, 0, 0]);
    }

    #[test]
    fn half_blend_rounds_half_up() {
        let out = render_overlay(&gray(100.0 / 255.0), &sal(0.5)).unwrap();
        assert_eq!(out.get_pixel(0, 0).0, [178, 50, 50]);
    }

    #[test]
    fn overlay_is_monotone_toward_red() {
        let img = gray(0.4);
        let mut last = [0u8, 255, 255];
        for i in 0..=20 {
            let px = render_overlay(&img, &sal(i as f64 / 20.0)).unwrap().get_pixel(0, 0).0;
            if i > 0 {
                assert!(px[0] >= last[0] && px[1] <= last[1] && px[2] <= last[2]);
            }
            last = px;
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(render_overlay(&gray(0.5), &SaliencyMap::zeros(2, 1)).is_err());
    }
}
