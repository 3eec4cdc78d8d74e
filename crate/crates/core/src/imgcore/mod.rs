//! Low-level image operations on 8-bit grayscale rasters and binary masks.
//!
//! Binary images use 1 for foreground (text, the dark class) and 0 for
//! background. Every operation is a pure function of its inputs.

mod components;
mod geometry;
mod morph;
mod threshold;

use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

pub use components::{connected_components, Connectivity};
pub use geometry::{
    hough_peaks, hough_skew_angle, hough_skew_angle_with, rotate, rotate_binary, rotate_field,
    rotated_size, HoughConfig,
};
pub use morph::{dilate, dilate_disk, erode, morphological_close};
pub use threshold::{binarize, mode_filter, otsu_threshold, to_grayscale, LUMA};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Packed RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Row-major mask with values in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(CoreError::Dimension(format!(
            "image must be nonempty, got {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(CoreError::Dimension(format!(
            "{width}x{height} image needs {} values, got {len}",
            width * height
        )));
    }
    Ok(())
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.data[row * self.width + col] = v;
    }

    /// Sub-image covering `bbox`; errors if the box leaves the image.
    pub fn crop(&self, bbox: BBox) -> Result<Self> {
        let (w, h) = (bbox.width(), bbox.height());
        if bbox.bottom >= self.height || bbox.right >= self.width {
            return Err(CoreError::Dimension(format!(
                "crop {bbox:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for r in bbox.top..=bbox.bottom {
            data.extend_from_slice(&self.data[r * self.width + bbox.left..][..w]);
        }
        Self::new(w, h, data)
    }

    /// Decode PNG or PGM/PPM bytes; color input goes through [`to_grayscale`].
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let reader = image::ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| CoreError::Decode(e.to_string()))?;
        let img = reader
            .decode()
            .map_err(|e| CoreError::Decode(e.to_string()))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return Err(CoreError::Decode("zero-sized image".into()));
        }
        if img.color().has_color() {
            let rgb = img.to_rgb8();
            to_grayscale(&RgbImage {
                width: w,
                height: h,
                data: rgb.into_raw(),
            })
        } else {
            Self::new(w, h, img.to_luma8().into_raw())
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let encoder = image::codecs::png::PngEncoder::new(&mut out);
        image::ImageEncoder::write_image(
            encoder,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .expect("in-memory PNG encoding cannot fail");
        out
    }

    /// Binary PGM (P5).
    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Writes PGM for a `.pgm` extension, PNG otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => self.encode_pgm(),
            _ => self.encode_png(),
        };
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(CoreError::Param(format!("binary pixel value {v}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    /// Mask from a predicate over (row, col).
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height, width * height)?;
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c) as u8);
            }
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.width + col] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryImage) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    pub fn or(&self, other: &BinaryImage) -> Result<BinaryImage> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(CoreError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(BinaryImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect(),
        })
    }

    pub fn crop(&self, bbox: BBox) -> Result<Self> {
        if bbox.bottom >= self.height || bbox.right >= self.width {
            return Err(CoreError::Dimension(format!(
                "crop {bbox:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        let w = bbox.width();
        let mut data = Vec::with_capacity(w * bbox.height());
        for r in bbox.top..=bbox.bottom {
            data.extend_from_slice(&self.data[r * self.width + bbox.left..][..w]);
        }
        Self::new(w, bbox.height(), data)
    }

    /// Dark-on-white rendering: foreground 0, background 255.
    pub fn to_raster(&self) -> RasterImage {
        RasterImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| if v == 1 { 0 } else { 255 }).collect(),
        }
    }

    /// Foreground as 1.0, background as 0.0.
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    /// Threshold a `[0, 1]` field at 0.5 (values ≥ 0.5 become foreground).
    pub fn from_f32(width: usize, height: usize, field: &[f32]) -> Result<Self> {
        check_dims(width, height, field.len())?;
        Ok(Self {
            width,
            height,
            data: field.iter().map(|&v| (v >= 0.5) as u8).collect(),
        })
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BBox {
    pub fn point(row: usize, col: usize) -> Self {
        Self {
            top: row,
            left: col,
            bottom: row,
            right: col,
        }
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn include(&mut self, row: usize, col: usize) {
        self.top = self.top.min(row);
        self.bottom = self.bottom.max(row);
        self.left = self.left.min(col);
        self.right = self.right.max(col);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            top: self.top.min(other.top),
            left: self.left.min(other.left),
            bottom: self.bottom.max(other.bottom),
            right: self.right.max(other.right),
        }
    }

    /// Shared columns; negative when the boxes are horizontally apart.
    pub fn horizontal_overlap(&self, other: &BBox) -> i64 {
        self.right.min(other.right) as i64 - self.left.max(other.left) as i64 + 1
    }

    /// Shared rows; negative when the boxes are vertically apart.
    pub fn vertical_overlap(&self, other: &BBox) -> i64 {
        self.bottom.min(other.bottom) as i64 - self.top.max(other.top) as i64 + 1
    }

    /// Empty rows between the boxes (≤ 0 when they overlap vertically).
    pub fn vertical_gap(&self, other: &BBox) -> i64 {
        -self.vertical_overlap(other)
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.horizontal_overlap(other) > 0 && self.vertical_overlap(other) > 0
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.top <= other.top
            && self.left <= other.left
            && self.bottom >= other.bottom
            && self.right >= other.right
    }

    pub fn contains_point(&self, row: usize, col: usize) -> bool {
        (self.top..=self.bottom).contains(&row) && (self.left..=self.right).contains(&col)
    }

    /// Box grown by `margin` on every side, clipped to `width`×`height`.
    pub fn expand(&self, margin: usize, width: usize, height: usize) -> BBox {
        BBox {
            top: self.top.saturating_sub(margin),
            left: self.left.saturating_sub(margin),
            bottom: (self.bottom + margin).min(height - 1),
            right: (self.right + margin).min(width - 1),
        }
    }

    pub fn translate(&self, dr: usize, dc: usize) -> BBox {
        BBox {
            top: self.top + dr,
            left: self.left + dc,
            bottom: self.bottom + dr,
            right: self.right + dc,
        }
    }
}

/// Binary structuring element with its origin at the center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl StructuringElement {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if width % 2 == 0 || height % 2 == 0 {
            return Err(CoreError::Param(format!(
                "structuring element must have odd sides, got {width}x{height}"
            )));
        }
        if mask.len() != width * height {
            return Err(CoreError::Dimension(format!(
                "{width}x{height} structuring element needs {} cells, got {}",
                width * height,
                mask.len()
            )));
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn rect(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width * height])
    }

    /// The default 3×3 box.
    pub fn box3() -> Self {
        Self::rect(3, 3).unwrap()
    }

    /// Digital disk: offsets with `dr² + dc² ≤ r²`.
    pub fn disk(radius: usize) -> Self {
        let n = 2 * radius + 1;
        let r = radius as isize;
        let mask = (0..n * n)
            .map(|i| {
                let (dr, dc) = ((i / n) as isize - r, (i % n) as isize - r);
                dr * dr + dc * dc <= r * r
            })
            .collect();
        Self::new(n, n, mask).unwrap()
    }

    /// Single-row bar `1 × width`.
    pub fn horizontal(width: usize) -> Result<Self> {
        Self::rect(width, 1)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Active offsets `(dr, dc)` relative to the origin.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let (ry, rx) = ((self.height / 2) as isize, (self.width / 2) as isize);
        let mut out = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.mask[r * self.width + c] {
                    out.push((r as isize - ry, c as isize - rx));
                }
            }
        }
        out
    }
}

/// Connected set of foreground pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: usize,
    /// `(row, col)` in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BBox,
    pub area: usize,
}

impl Component {
    pub fn from_pixels(id: usize, pixels: Vec<(usize, usize)>) -> Self {
        let (r0, c0) = pixels[0];
        let mut bbox = BBox::point(r0, c0);
        for &(r, c) in &pixels {
            bbox.include(r, c);
        }
        Self {
            id,
            area: pixels.len(),
            pixels,
            bbox,
        }
    }
}
