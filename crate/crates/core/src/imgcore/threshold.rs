use super::morph::morphological_close;
use super::{BinaryImage, RasterImage, RgbImage, StructuringElement};
use crate::{CoreError, Result};

/// ITU-R BT.601 luma weights for R, G, B.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub fn to_grayscale(img: &RgbImage) -> Result<RasterImage> {
    if img.width == 0 || img.height == 0 {
        return Err(CoreError::Dimension("empty RGB image".into()));
    }
    if img.data.len() != img.width * img.height * 3 {
        return Err(CoreError::Dimension(format!(
            "{}x{} RGB image needs {} bytes, got {}",
            img.width,
            img.height,
            img.width * img.height * 3,
            img.data.len()
        )));
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| {
            let y = LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    RasterImage::new(img.width, img.height, data)
}

/// 128×128 → 256-bit product as (high, low).
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a0, a1) = (a & MASK, a >> 64);
    let (b0, b1) = (b & MASK, b >> 64);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & MASK) + (p10 & MASK);
    let lo = (p00 & MASK) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

/// Between-class variance up to a positive constant, as `num / den`.
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn greater_than(&self, other: &Score) -> bool {
        mul_wide(self.num, other.den) > mul_wide(other.num, self.den)
    }
}

/// Global Otsu threshold `t`: pixels with value `< t` are foreground.
///
/// Candidates are `t ∈ [0, 255]`; the comparison is exact integer
/// arithmetic, so the smallest maximizer wins deterministically. A constant
/// image yields its own value and an all-background mask.
pub fn otsu_threshold(img: &RasterImage) -> (u8, BinaryImage) {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let n = img.data().len() as u128;
    let total: u128 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as u128 * c as u128)
        .sum();

    let first = img.data()[0];
    let threshold = if img.data().iter().all(|&v| v == first) {
        first
    } else {
        let mut best_t = 0u8;
        let mut best = Score { num: 0, den: 1 };
        let (mut n0, mut s0) = (0u128, 0u128);
        for t in 0..=255usize {
            // class 0 = values < t
            if t > 0 {
                n0 += hist[t - 1] as u128;
                s0 += (t as u128 - 1) * hist[t - 1] as u128;
            }
            let n1 = n - n0;
            if n0 == 0 || n1 == 0 {
                continue;
            }
            let s1 = total - s0;
            let diff = (s0 * n1).abs_diff(s1 * n0);
            let score = Score {
                num: diff * diff,
                den: n0 * n1,
            };
            if score.greater_than(&best) {
                best = score;
                best_t = t as u8;
            }
        }
        best_t
    };
    let data = img.data().iter().map(|&v| (v < threshold) as u8).collect();
    let out = BinaryImage::new(img.width(), img.height(), data).expect("same dimensions");
    (threshold, out)
}

/// Majority filter over a `window`×`window` neighborhood, padding with
/// background. Exact ties keep the original pixel.
pub fn mode_filter(img: &BinaryImage, window: usize) -> Result<BinaryImage> {
    if window < 3 || window % 2 == 0 {
        return Err(CoreError::Param(format!(
            "mode filter window must be odd and at least 3, got {window}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let r = window / 2;
    // summed-area table with a zero border row/column
    let sw = w + 1;
    let mut sat = vec![0u32; sw * (h + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += img.data()[y * w + x] as u32;
            sat[(y + 1) * sw + x + 1] = sat[y * sw + x + 1] + row;
        }
    }
    let cells = (window * window) as u32;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let ones = sat[y1 * sw + x1] + sat[y0 * sw + x0] - sat[y0 * sw + x1] - sat[y1 * sw + x0];
            let v = match (2 * ones).cmp(&cells) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => img.data()[y * w + x],
            };
            out.push(v);
        }
    }
    BinaryImage::new(w, h, out)
}

/// Otsu, then closing of the Otsu mask, OR with the raw mask, then a 3×3
/// mode filter.
pub fn binarize(img: &RasterImage) -> Result<BinaryImage> {
    let (_, raw) = otsu_threshold(img);
    let denoised = morphological_close(&raw, &StructuringElement::box3())?;
    let merged = denoised.or(&raw)?;
    mode_filter(&merged, 3)
}
