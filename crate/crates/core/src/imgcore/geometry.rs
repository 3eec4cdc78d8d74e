use super::{BinaryImage, RasterImage};
use crate::{CoreError, Result};

/// Angle folded into `(-180, 180]`.
fn fold_angle(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Quarter turns when `angle` is an exact multiple of 90°.
fn quarter_turns(angle: f64) -> Option<u8> {
    let a = fold_angle(angle);
    let q = a / 90.0;
    (q == q.round()).then(|| (q.round() as i32).rem_euclid(4) as u8)
}

/// Canvas that contains the input rotated by `angle`.
///
/// Each side is the smallest size at least the rotated extent with the same
/// parity as the corresponding input side, so input and output centers fall
/// on the same sub-pixel phase and crops back to the original are exact.
pub fn rotated_size(width: usize, height: usize, angle: f64) -> (usize, usize) {
    if let Some(q) = quarter_turns(angle) {
        return if q % 2 == 0 {
            (width, height)
        } else {
            (height, width)
        };
    }
    let t = angle.to_radians();
    let (c, s) = (t.cos().abs(), t.sin().abs());
    let (w, h) = (width as f64, height as f64);
    let fit = |extent: f64, parity_of: usize| {
        let mut n = (extent - 1e-9).ceil().max(1.0) as usize;
        if n % 2 != parity_of % 2 {
            n += 1;
        }
        n
    };
    (fit(w * c + h * s, width), fit(w * s + h * c, height))
}

/// Rotates a float field about its center into an `out_w`×`out_h` canvas
/// with the same center, bilinear sampling, `fill` outside the source.
///
/// Positive angles turn content clockwise on screen (rows grow downward):
/// a point right of center moves below it.
pub fn rotate_field(
    src: &[f32],
    width: usize,
    height: usize,
    angle: f64,
    fill: f32,
    out_w: usize,
    out_h: usize,
) -> Vec<f32> {
    assert_eq!(src.len(), width * height);
    let t = angle.to_radians();
    let (cos, sin) = (t.cos(), t.sin());
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let (ocx, ocy) = (out_w as f64 / 2.0, out_h as f64 / 2.0);
    let sample = |x: isize, y: isize| -> f32 {
        if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
            fill
        } else {
            src[y as usize * width + x as usize]
        }
    };
    let mut out = Vec::with_capacity(out_w * out_h);
    for r in 0..out_h {
        let v = r as f64 + 0.5 - ocy;
        for c in 0..out_w {
            let u = c as f64 + 0.5 - ocx;
            // inverse rotation back into the source frame
            let x = cos * u + sin * v + cx - 0.5;
            let y = -sin * u + cos * v + cy - 0.5;
            if x <= -1.0 || y <= -1.0 || x >= width as f64 || y >= height as f64 {
                out.push(fill);
                continue;
            }
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let top = sample(x0, y0) * (1.0 - fx) + sample(x0 + 1, y0) * fx;
            let bottom = sample(x0, y0 + 1) * (1.0 - fx) + sample(x0 + 1, y0 + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Lossless index remapping for quarter turns.
fn quarter_turn<T: Copy>(src: &[T], w: usize, h: usize, q: u8) -> (usize, usize, Vec<T>) {
    match q {
        0 => (w, h, src.to_vec()),
        1 => {
            // out[c][h-1-r] = in[r][c]
            let mut out = vec![src[0]; w * h];
            for r in 0..h {
                for c in 0..w {
                    out[c * h + (h - 1 - r)] = src[r * w + c];
                }
            }
            (h, w, out)
        }
        2 => {
            let mut out = src.to_vec();
            out.reverse();
            (w, h, out)
        }
        _ => {
            let mut out = vec![src[0]; w * h];
            for r in 0..h {
                for c in 0..w {
                    out[(w - 1 - c) * h + r] = src[r * w + c];
                }
            }
            (h, w, out)
        }
    }
}

/// Bilinear rotation about the center onto an enlarged canvas filled with
/// white (255). Multiples of 90° are exact.
pub fn rotate(img: &RasterImage, angle: f64) -> RasterImage {
    let (w, h) = (img.width(), img.height());
    if let Some(q) = quarter_turns(angle) {
        let (ow, oh, data) = quarter_turn(img.data(), w, h, q);
        return RasterImage::new(ow, oh, data).expect("same pixel count");
    }
    let (ow, oh) = rotated_size(w, h, angle);
    let src: Vec<f32> = img.data().iter().map(|&v| v as f32).collect();
    let out = rotate_field(&src, w, h, angle, 255.0, ow, oh);
    let data = out.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    RasterImage::new(ow, oh, data).expect("nonempty canvas")
}

/// Rotation of a mask through its {0, 1} embedding, re-thresholded at 0.5.
pub fn rotate_binary(img: &BinaryImage, angle: f64) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    if let Some(q) = quarter_turns(angle) {
        let (ow, oh, data) = quarter_turn(img.data(), w, h, q);
        return BinaryImage::new(ow, oh, data).expect("same pixel count");
    }
    let (ow, oh) = rotated_size(w, h, angle);
    let out = rotate_field(&img.to_f32(), w, h, angle, 0.0, ow, oh);
    BinaryImage::from_f32(ow, oh, &out).expect("nonempty canvas")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughConfig {
    /// Angular resolution in degrees; must divide 180.
    pub angle_step: f64,
    /// Distance resolution in pixels.
    pub rho_step: f64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            angle_step: 0.5,
            rho_step: 1.0,
        }
    }
}

struct Accumulator {
    thetas: Vec<f64>,
    rho_bins: usize,
    votes: Vec<u32>,
}

fn accumulate(img: &BinaryImage, config: &HoughConfig) -> Result<Accumulator> {
    if !(config.angle_step > 0.0) || !(config.rho_step > 0.0) {
        return Err(CoreError::Param(format!("invalid Hough resolution {config:?}")));
    }
    let n_theta = (180.0 / config.angle_step).round() as usize;
    if n_theta == 0 || ((n_theta as f64) * config.angle_step - 180.0).abs() > 1e-9 {
        return Err(CoreError::Param(format!(
            "angle step {} must divide 180",
            config.angle_step
        )));
    }
    if img.is_empty() {
        return Err(CoreError::NoContent("no foreground pixels for skew estimation".into()));
    }
    // θ in (-90, 90]
    let thetas: Vec<f64> = (1..=n_theta)
        .map(|k| -90.0 + k as f64 * config.angle_step)
        .collect();
    let trig: Vec<(f64, f64)> = thetas
        .iter()
        .map(|t| {
            let r = t.to_radians();
            (r.cos() / config.rho_step, r.sin() / config.rho_step)
        })
        .collect();
    let (w, h) = (img.width(), img.height());
    let reach = ((w * w + h * h) as f64).sqrt() / config.rho_step;
    let offset = reach.ceil() as isize + 1;
    let rho_bins = 2 * offset as usize + 1;
    let mut votes = vec![0u32; n_theta * rho_bins];
    for y in 0..h {
        for x in 0..w {
            if !img.get(y, x) {
                continue;
            }
            let (xf, yf) = (x as f64, y as f64);
            for (k, &(c, s)) in trig.iter().enumerate() {
                let rho = (xf * c + yf * s).round() as isize + offset;
                votes[k * rho_bins + rho as usize] += 1;
            }
        }
    }
    Ok(Accumulator {
        thetas,
        rho_bins,
        votes,
    })
}

/// Line-normal angle θ converted to baseline skew in `(-90, 90]`.
fn skew_of(theta: f64) -> f64 {
    let s = theta - 90.0;
    if s <= -90.0 {
        s + 180.0
    } else {
        s
    }
}

/// Local maxima of the accumulator after 3×3 non-maximum suppression, as
/// `(baseline skew in degrees, votes)`, strongest first. θ wraps around.
pub fn hough_peaks(img: &BinaryImage, config: &HoughConfig, limit: usize) -> Result<Vec<(f64, u32)>> {
    let acc = accumulate(img, config)?;
    let n = acc.thetas.len();
    let at = |k: usize, r: usize| acc.votes[k * acc.rho_bins + r];
    let mut peaks = Vec::new();
    for k in 0..n {
        for r in 0..acc.rho_bins {
            let v = at(k, r);
            if v == 0 {
                continue;
            }
            let mut is_max = true;
            'n: for dk in [n - 1, 0, 1] {
                for dr in [-1isize, 0, 1] {
                    if dk == 0 && dr == 0 {
                        continue;
                    }
                    let kk = (k + dk) % n;
                    // wrapping θ by 180° mirrors ρ
                    let wraps = (dk == 1 && kk == 0) || (dk == n - 1 && k == 0);
                    let rr = if wraps {
                        acc.rho_bins as isize - 1 - r as isize + dr
                    } else {
                        r as isize + dr
                    };
                    if rr < 0 || rr >= acc.rho_bins as isize {
                        continue;
                    }
                    if at(kk, rr as usize) > v {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                peaks.push((skew_of(acc.thetas[k]), v));
            }
        }
    }
    // strongest first; among equals, the one closest to level
    peaks.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.0.abs().total_cmp(&b.0.abs()))
            .then(a.0.total_cmp(&b.0))
    });
    peaks.truncate(limit);
    Ok(peaks)
}

/// Dominant baseline skew in degrees, `(-90, 90]`, from the global
/// accumulator peak. Rotating the page by the negated result levels it.
pub fn hough_skew_angle_with(img: &BinaryImage, config: &HoughConfig) -> Result<f64> {
    let acc = accumulate(img, config)?;
    let mut best: Option<(u32, f64)> = None;
    for (k, &theta) in acc.thetas.iter().enumerate() {
        let row = &acc.votes[k * acc.rho_bins..][..acc.rho_bins];
        let v = *row.iter().max().unwrap();
        let skew = skew_of(theta);
        let better = match best {
            None => true,
            Some((bv, bs)) => v > bv || (v == bv && skew.abs() < bs.abs()),
        };
        if better {
            best = Some((v, skew));
        }
    }
    Ok(best.unwrap().1)
}

pub fn hough_skew_angle(img: &BinaryImage) -> Result<f64> {
    hough_skew_angle_with(img, &HoughConfig::default())
}
