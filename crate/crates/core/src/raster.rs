//! Depth images and binary masks, plus their on-disk formats.
//!
//! Depth is stored in meters with `0.0` meaning "no measurement". Two
//! persistent encodings are supported:
//!
//! * 16-bit grayscale PNG in millimeters (lossless below 65.535 m at 1 mm
//!   resolution),
//! * raw little-endian `f32` meters, row-major, no header (dimensions travel
//!   separately).

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "{} depth values for a {width}x{height} image",
                data.len()
            )));
        }
        if data.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("depth values must be finite and nonnegative"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: f32) {
        self.data[v * self.width + u] = d;
    }

    pub fn valid_mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&d| d > 0.0).collect(),
        }
    }

    pub fn write_png_mm(&self, path: &Path) -> Result<()> {
        let pixels: Vec<u16> = self
            .data
            .iter()
            .map(|&d| (d as f64 * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16)
            .collect();
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, pixels)
                .expect("buffer size matches dimensions");
        img.save(path)?;
        Ok(())
    }

    pub fn read_png_mm(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_luma16();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|mm| mm as f32 / 1000.0).collect();
        Self::from_vec(w as usize, h as usize, data)
    }

    pub fn write_raw_f32(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for d in &self.data {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read_raw_f32(path: &Path, width: usize, height: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != width * height * 4 {
            return Err(Error::Format {
                what: "raw depth",
                detail: format!(
                    "{}: {} bytes, expected {}",
                    path.display(),
                    bytes.len(),
                    width * height * 4
                ),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_vec(width, height, data)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, on: bool) {
        self.data[v * self.width + u] = on;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Tight bounding box `(u_min, v_min, u_max, v_max)`, inclusive.
    pub fn bbox(&self) -> Option<[usize; 4]> {
        let mut bb: Option<[usize; 4]> = None;
        for v in 0..self.height {
            for u in 0..self.width {
                if self.get(u, v) {
                    bb = Some(match bb {
                        None => [u, v, u, v],
                        Some([a, b, c, d]) => [a.min(u), b.min(v), c.max(u), d.max(v)],
                    });
                }
            }
        }
        bb
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let px = self.data.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, px)
            .expect("buffer size matches dimensions")
            .save(path)?;
        Ok(())
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = img.dimensions();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            data: img.into_raw().into_iter().map(|p| p >= 128).collect(),
        })
    }
}
