//! Silhouette probability maps: tree versus blue background.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SegmentationError {
    #[error("cannot read image {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write image {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: expected a single-channel 8- or 16-bit grayscale image")]
    NotGrayscale { path: PathBuf },
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("softness must be positive, got {0}")]
    BadSoftness(f32),
    #[error("pixel buffer has {found} entries, expected {expected}")]
    BufferSize { expected: usize, found: usize },
}

/// Per-pixel probability that the pixel images the tree (1) rather than the
/// background (0). Row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl SilhouetteMap {
    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        assert!(width > 0 && height > 0, "silhouette dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width as usize * height as usize],
        }
    }

    /// Wraps a row-major buffer; values are clamped into `[0, 1]`.
    pub fn from_vec(width: u32, height: u32, mut data: Vec<f32>) -> Result<Self, SegmentationError> {
        if width == 0 || height == 0 {
            return Err(SegmentationError::EmptyImage);
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(SegmentationError::BufferSize {
                expected,
                found: data.len(),
            });
        }
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: f32) {
        self.data[y as usize * self.width as usize + x as usize] = value.clamp(0.0, 1.0);
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Number of pixels at or above `threshold`.
    pub fn count_at_least(&self, threshold: f32) -> usize {
        self.data.iter().filter(|&&p| p >= threshold).count()
    }

    pub fn to_gray8(&self) -> GrayImage {
        let bytes = self.data.iter().map(|&p| (p * 255.0).round() as u8).collect();
        ImageBuffer::from_raw(self.width, self.height, bytes).expect("buffer matches dimensions")
    }
}

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: u32,
    height: u32,
    data: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![rgb; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        self.data[y as usize * self.width as usize + x as usize] = rgb;
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }

    pub fn load(path: &Path) -> Result<Self, SegmentationError> {
        let img = image::open(path).map_err(|source| SegmentationError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        if rgb.width() == 0 || rgb.height() == 0 {
            return Err(SegmentationError::EmptyImage);
        }
        Ok(Self {
            width: rgb.width(),
            height: rgb.height(),
            data: rgb.pixels().map(|p| p.0).collect(),
        })
    }

    /// Format follows the extension (`.png`, `.ppm`).
    pub fn save(&self, path: &Path) -> Result<(), SegmentationError> {
        let mut img = RgbImage::new(self.width, self.height);
        for (p, v) in img.pixels_mut().zip(&self.data) {
            *p = Rgb(*v);
        }
        img.save(path).map_err(|source| SegmentationError::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Parameters of the chroma-distance background model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChromaParams {
    pub background_rgb: [u8; 3],
    /// chroma distance at which the probability crosses 0.5
    pub threshold: f32,
    pub softness: f32,
}

impl Default for ChromaParams {
    fn default() -> Self {
        Self {
            background_rgb: [0, 0, 255],
            threshold: 0.25,
            softness: 0.05,
        }
    }
}

impl ChromaParams {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        if !(self.softness > 0.0) {
            return Err(SegmentationError::BadSoftness(self.softness));
        }
        Ok(())
    }
}

/// RGB divided by its L1 norm. Black maps to the neutral point.
#[inline]
pub fn chromaticity(rgb: [u8; 3]) -> [f32; 3] {
    let sum = rgb[0] as f32 + rgb[1] as f32 + rgb[2] as f32;
    if sum == 0.0 {
        return [1.0 / 3.0; 3];
    }
    [rgb[0] as f32 / sum, rgb[1] as f32 / sum, rgb[2] as f32 / sum]
}

#[inline]
pub fn chroma_distance(a: [u8; 3], b: [u8; 3]) -> f32 {
    let ca = chromaticity(a);
    let cb = chromaticity(b);
    ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2) + (ca[2] - cb[2]).powi(2)).sqrt()
}

#[inline]
fn logistic(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Probability map from chroma distance to the background color, passed
/// through a logistic of width `softness` centered at `threshold`.
pub fn segment_chroma(image: &ColorImage, params: &ChromaParams) -> Result<SilhouetteMap, SegmentationError> {
    params.validate()?;
    let bg = params.background_rgb;
    let w = image.width as usize;
    let mut data = vec![0f32; image.data.len()];
    data.par_chunks_mut(w)
        .zip(image.data.par_chunks(w))
        .for_each(|(out, row)| {
            for (o, &px) in out.iter_mut().zip(row) {
                let d = chroma_distance(px, bg);
                *o = logistic((d - params.threshold) / params.softness).clamp(0.0, 1.0);
            }
        });
    Ok(SilhouetteMap {
        width: image.width,
        height: image.height,
        data,
    })
}

/// Loads a single-channel 8- or 16-bit grayscale image as a probability map
/// (value / max value).
pub fn load_silhouette(path: &Path) -> Result<SilhouetteMap, SegmentationError> {
    let img = image::open(path).map_err(|source| SegmentationError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let (width, height, data) = match img {
        DynamicImage::ImageLuma8(g) => (
            g.width(),
            g.height(),
            g.pixels().map(|p| p.0[0] as f32 / 255.0).collect::<Vec<_>>(),
        ),
        DynamicImage::ImageLuma16(g) => (
            g.width(),
            g.height(),
            g.pixels().map(|p| p.0[0] as f32 / 65535.0).collect::<Vec<_>>(),
        ),
        _ => {
            return Err(SegmentationError::NotGrayscale {
                path: path.to_path_buf(),
            })
        }
    };
    SilhouetteMap::from_vec(width, height, data)
}

/// Writes an 8-bit map; the format follows the extension (`.pgm` or `.png`).
pub fn save_silhouette(map: &SilhouetteMap, path: &Path) -> Result<(), SegmentationError> {
    let img: ImageBuffer<Luma<u8>, Vec<u8>> = map.to_gray8();
    img.save(path).map_err(|source| SegmentationError::Write {
        path: path.to_path_buf(),
        source,
    })
}
