//! RGB images with values in `[0, 1]`.

use std::path::Path;

use crate::error::{invalid, Result};
use crate::nn::{Scalar, Tensor};

/// Interleaved RGB image, row-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Image {
    /// Builds an image from interleaved RGB values, validating range and size.
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid!("image dimensions must be positive, got {height}x{width}"));
        }
        if pixels.len() != height * width * 3 {
            return Err(invalid!("expected {} values for a {height}x{width} RGB image, got {}", height * width * 3, pixels.len()));
        }
        if let Some(v) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(invalid!("pixel value {v} outside [0, 1]"));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width * 3])
    }

    /// Evaluates `f(row, col)` for every pixel; values are clamped to `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend(f(y, x).iter().map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Rec. 601 luma, row-major.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    /// Rectangular sub-image.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(invalid!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{} image",
                self.height,
                self.width
            ));
        }
        let mut pixels = Vec::with_capacity(height * width * 3);
        for y in top..top + height {
            let start = (y * self.width + left) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + width * 3]);
        }
        Ok(Self { height, width, pixels })
    }

    /// `1 x 3 x H x W` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let plane = self.height * self.width;
        let mut data = vec![T::zero(); 3 * plane];
        for (i, p) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = T::from_f64(p[c] as f64);
            }
        }
        Tensor::from_vec([1, 3, self.height, self.width], data)
    }

    /// Reads sample `n` of an `N x 3 x H x W` tensor, clamping into `[0, 1]`.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, n: usize) -> Result<Self> {
        let [_, c, h, w] = t.shape();
        if c != 3 {
            return Err(invalid!("expected a 3-channel tensor, got {c} channels"));
        }
        let s = t.sample(n);
        let plane = h * w;
        let mut pixels = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for ch in 0..3 {
                let v = s[ch * plane + i].as_f64() as f32;
                pixels.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self::new(h, w, pixels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let rgb = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = rgb.dimensions();
        let pixels = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Self::new(h as usize, w as usize, pixels)
    }

    /// Writes an 8-bit PNG (or any format inferred from the extension).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let raw: Vec<u8> = self.pixels.iter().map(|v| (v * 255.0).round() as u8).collect();
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer size matches dimensions");
        buf.save(path.as_ref())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_empty() {
        assert!(Image::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(Image::new(0, 4, vec![]).is_err());
        assert!(Image::new(1, 1, vec![f32::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let img = Image::from_fn(3, 4, |y, x| [y as f32 / 3.0, x as f32 / 4.0, 0.5]).unwrap();
        let t = img.to_tensor::<f32>();
        assert_eq!(t.shape(), [1, 3, 3, 4]);
        assert_eq!(Image::from_tensor(&t, 0).unwrap(), img);
    }

    #[test]
    fn png_round_trip_is_exact_for_8bit_values() {
        let img = Image::from_fn(5, 7, |y, x| [(y * 7 + x) as f32 / 255.0, 1.0, 0.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        img.save(&path).unwrap();
        assert_eq!(Image::load(&path).unwrap(), img);
    }
}
