//! The augmentation recipe: small rotations, additive Gaussian noise,
//! random crops and elastic deformation, on 32×32 ink-coverage patches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{derive_seed, GlyphSample};
use crate::imgcore::{rotate_field, BinaryImage};
use crate::segment::GLYPH_SIDE;
use crate::{CoreError, Result};

const N: usize = GLYPH_SIDE;

/// Ink coverage in `[0, 1]` (1 = ink), row-major 32×32.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    data: Vec<f32>,
}

impl Patch {
    pub fn new(data: Vec<f32>) -> Result<Self> {
        if data.len() != N * N {
            return Err(CoreError::Dimension(format!(
                "patch needs {} values, got {}",
                N * N,
                data.len()
            )));
        }
        Ok(Self { data })
    }

    pub fn from_binary(img: &BinaryImage) -> Result<Self> {
        if (img.width(), img.height()) != (N, N) {
            return Err(CoreError::Dimension(format!(
                "patch must be {N}x{N}, got {}x{}",
                img.width(),
                img.height()
            )));
        }
        Self::new(img.to_f32())
    }

    /// Re-threshold at 0.5.
    pub fn to_binary(&self) -> BinaryImage {
        BinaryImage::from_f32(N, N, &self.data).expect("32x32")
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * N + col]
    }
}

/// Rotation angles of the recipe, in degrees.
pub const ROTATIONS: [f64; 4] = [-6.0, -2.0, 2.0, 6.0];

/// Noise variance of level `j` on the formula's own scale:
/// `0.5 + (j / 10) · (2 / 3)`.
pub fn noise_variance(j: u8) -> Result<f64> {
    if j > 5 {
        return Err(CoreError::Param(format!("noise level J must be in 0..=5, got {j}")));
    }
    Ok(0.5 + (j as f64 / 10.0) * (2.0 / 3.0))
}

/// The zero-mean Gaussian residuals `add_noise` adds, before clamping.
pub fn noise_residuals(len: usize, j: u8, noise_scale: f64, seed: u64) -> Result<Vec<f64>> {
    if !(noise_scale >= 0.0) {
        return Err(CoreError::Param(format!("noise_scale must be >= 0, got {noise_scale}")));
    }
    let sd = (noise_variance(j)? * noise_scale).sqrt();
    let normal = Normal::new(0.0, sd).map_err(|e| CoreError::Param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len).map(|_| normal.sample(&mut rng)).collect())
}

/// Adds noise of variance `noise_variance(j) · noise_scale`, clamped to
/// `[0, 1]`.
pub fn add_noise(patch: &Patch, j: u8, noise_scale: f64, seed: u64) -> Result<Patch> {
    let noise = noise_residuals(patch.data.len(), j, noise_scale, seed)?;
    let data = patch
        .data
        .iter()
        .zip(noise)
        .map(|(&v, n)| (v as f64 + n).clamp(0.0, 1.0) as f32)
        .collect();
    Patch::new(data)
}

/// Rotation about the patch center on the same canvas, blank fill.
pub fn rotate_aug(patch: &Patch, angle: f64) -> Result<Patch> {
    if !ROTATIONS.contains(&angle) {
        return Err(CoreError::Param(format!(
            "rotation must be one of {ROTATIONS:?}, got {angle}"
        )));
    }
    Patch::new(rotate_field(&patch.data, N, N, angle, 0.0, N, N))
}

fn bilinear(src: &[f32], side: usize, y: f64, x: f64) -> f32 {
    let at = |yy: isize, xx: isize| -> f32 {
        if yy < 0 || xx < 0 || yy >= side as isize || xx >= side as isize {
            0.0
        } else {
            src[yy as usize * side + xx as usize]
        }
    };
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = ((y - y0) as f32, (x - x0) as f32);
    let (y0, x0) = (y0 as isize, x0 as isize);
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
    let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Largest crop shift the recipe allows.
pub const MAX_CROP_SHIFT: usize = 4;

/// A `(32 − s)²` window at a random offset, `s ≤ max_shift`, scaled back up
/// to 32×32. Returns the patch with `(s, top, left)`.
pub fn random_crop_with_window(
    patch: &Patch,
    max_shift: usize,
    seed: u64,
) -> Result<(Patch, (usize, usize, usize))> {
    if max_shift > MAX_CROP_SHIFT {
        return Err(CoreError::Param(format!(
            "crop shift must be at most {MAX_CROP_SHIFT}, got {max_shift}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.gen_range(0..=max_shift);
    let (top, left) = (rng.gen_range(0..=s), rng.gen_range(0..=s));
    if s == 0 {
        return Ok((patch.clone(), (0, 0, 0)));
    }
    let side = N - s;
    let scale = side as f64 / N as f64;
    let mut out = Vec::with_capacity(N * N);
    for dy in 0..N {
        let y = (dy as f64 + 0.5) * scale - 0.5 + top as f64;
        for dx in 0..N {
            let x = (dx as f64 + 0.5) * scale - 0.5 + left as f64;
            out.push(bilinear(&patch.data, N, y, x));
        }
    }
    Ok((Patch::new(out)?, (s, top, left)))
}

pub fn random_crop(patch: &Patch, max_shift: usize, seed: u64) -> Result<Patch> {
    Ok(random_crop_with_window(patch, max_shift, seed)?.0)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with zero padding.
fn smooth(field: &[f64], kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; N * N];
        for y in 0..N as isize {
            for x in 0..N as isize {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let d = k as isize - r;
                    let (yy, xx) = if horizontal { (y, x + d) } else { (y + d, x) };
                    if (0..N as isize).contains(&yy) && (0..N as isize).contains(&xx) {
                        acc += w * src[yy as usize * N + xx as usize];
                    }
                }
                out[y as usize * N + x as usize] = acc;
            }
        }
        out
    };
    pass(&pass(field, true), false)
}

/// Smoothed random displacement fields `(dy, dy)` whose largest vector has
/// length `alpha`.
pub fn displacement_field(alpha: f64, sigma: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(sigma > 0.0) {
        return Err(CoreError::Param(format!("elastic sigma must be > 0, got {sigma}")));
    }
    if !(alpha >= 0.0) {
        return Err(CoreError::Param(format!("elastic alpha must be >= 0, got {alpha}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw_y: Vec<f64> = (0..N * N).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let raw_x: Vec<f64> = (0..N * N).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let kernel = gaussian_kernel(sigma);
    let (mut dy, mut dx) = (smooth(&raw_y, &kernel), smooth(&raw_x, &kernel));
    let peak = dy
        .iter()
        .zip(&dx)
        .map(|(a, b)| a.hypot(*b))
        .fold(0.0f64, f64::max);
    let k = if peak > 0.0 { alpha / peak } else { 0.0 };
    dy.iter_mut().chain(dx.iter_mut()).for_each(|v| *v *= k);
    Ok((dy, dx))
}

/// Bilinear warp by a smoothed random displacement field.
pub fn elastic_deform(patch: &Patch, alpha: f64, sigma: f64, seed: u64) -> Result<Patch> {
    let (dy, dx) = displacement_field(alpha, sigma, seed)?;
    if alpha == 0.0 {
        return Ok(patch.clone());
    }
    let mut out = Vec::with_capacity(N * N);
    for y in 0..N {
        for x in 0..N {
            let i = y * N + x;
            out.push(bilinear(&patch.data, N, y as f64 + dy[i], x as f64 + dx[i]));
        }
    }
    Patch::new(out)
}

/// One recorded augmentation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugStep {
    Rotate { angle: f64 },
    Noise { j: u8, noise_scale: f64, seed: u64 },
    Crop { max_shift: usize, shift: usize, top: usize, left: usize, seed: u64 },
    Elastic { alpha: f64, sigma: f64, seed: u64 },
}

/// Which variants `augment` emits for every input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPlan {
    /// Each rotation is combined with each noise level.
    pub rotations: Vec<f64>,
    pub noise_levels: Vec<u8>,
    pub noise_scale: f64,
    pub elastic_variants: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub crop_variants: usize,
    pub max_shift: usize,
}

impl Default for AugmentPlan {
    /// 4 rotations × 6 noise levels + 4 elastic + 4 crops = 32 variants.
    fn default() -> Self {
        Self {
            rotations: ROTATIONS.to_vec(),
            noise_levels: (0..=5).collect(),
            noise_scale: 0.08,
            elastic_variants: 4,
            alpha: 3.0,
            sigma: 4.0,
            crop_variants: 4,
            max_shift: 2,
        }
    }
}

impl AugmentPlan {
    pub fn empty() -> Self {
        Self {
            rotations: vec![],
            noise_levels: vec![],
            elastic_variants: 0,
            crop_variants: 0,
            ..Self::default()
        }
    }

    pub fn variant_count(&self) -> usize {
        self.rotations.len() * self.noise_levels.len() + self.elastic_variants + self.crop_variants
    }

    pub fn is_empty(&self) -> bool {
        self.variant_count() == 0
    }
}

/// Variants of `sample` per `plan`; an empty plan returns the sample itself.
/// Variant `k` draws from `derive_seed(seed, k)`, so the output does not
/// depend on how calls are scheduled.
pub fn augment(sample: &GlyphSample, plan: &AugmentPlan, seed: u64) -> Result<Vec<GlyphSample>> {
    if plan.is_empty() {
        return Ok(vec![sample.clone()]);
    }
    let base = Patch::from_binary(&sample.patch)?;
    let mut out = Vec::with_capacity(plan.variant_count());
    let mut emit = |patch: Patch, steps: Vec<AugStep>, k: u64| {
        let mut s = sample.clone();
        s.patch = patch.to_binary();
        s.provenance.augmentation.extend(steps);
        s.provenance.seed = derive_seed(seed, k);
        out.push(s);
    };
    let mut k = 0u64;
    for &angle in &plan.rotations {
        let rotated = rotate_aug(&base, angle)?;
        for &j in &plan.noise_levels {
            let s = derive_seed(seed, k);
            let noisy = add_noise(&rotated, j, plan.noise_scale, s)?;
            emit(
                noisy,
                vec![
                    AugStep::Rotate { angle },
                    AugStep::Noise { j, noise_scale: plan.noise_scale, seed: s },
                ],
                k,
            );
            k += 1;
        }
    }
    for _ in 0..plan.elastic_variants {
        let s = derive_seed(seed, k);
        let warped = elastic_deform(&base, plan.alpha, plan.sigma, s)?;
        emit(warped, vec![AugStep::Elastic { alpha: plan.alpha, sigma: plan.sigma, seed: s }], k);
        k += 1;
    }
    for _ in 0..plan.crop_variants {
        let s = derive_seed(seed, k);
        let (cropped, (shift, top, left)) = random_crop_with_window(&base, plan.max_shift, s)?;
        emit(
            cropped,
            vec![AugStep::Crop { max_shift: plan.max_shift, shift, top, left, seed: s }],
            k,
        );
        k += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(radius: f64) -> Patch {
        let data = (0..N * N)
            .map(|i| {
                let (y, x) = ((i / N) as f64 + 0.5 - 16.0, (i % N) as f64 + 0.5 - 16.0);
                (y.hypot(x) <= radius) as u8 as f32
            })
            .collect();
        Patch::new(data).unwrap()
    }

    #[test]
    fn variance_schedule_values() {
        assert_eq!(noise_variance(0).unwrap(), 0.5);
        assert!((noise_variance(3).unwrap() - 0.7).abs() < 1e-12);
        let all: Vec<f64> = (0..=5).map(|j| noise_variance(j).unwrap()).collect();
        for (v, want) in all.iter().zip([0.5, 0.5667, 0.6333, 0.7, 0.7667, 0.8333]) {
            assert!((v - want).abs() < 5e-5);
        }
        assert!(noise_variance(6).is_err());
    }

    #[test]
    fn noise_is_clamped_and_seeded() {
        let p = disk(8.0);
        let a = add_noise(&p, 2, 0.08, 5).unwrap();
        assert_eq!(a, add_noise(&p, 2, 0.08, 5).unwrap());
        assert_ne!(a, add_noise(&p, 2, 0.08, 6).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rotation_set_is_enforced() {
        let p = disk(8.0);
        assert!(rotate_aug(&p, 3.0).is_err());
        for a in ROTATIONS {
            let r = rotate_aug(&p, a).unwrap().to_binary();
            let diff = r
                .data()
                .iter()
                .zip(p.to_binary().data())
                .filter(|(x, y)| x != y)
                .count();
            // symmetric shape: only boundary pixels may change
            assert!(diff <= 8, "angle {a}: {diff}");
        }
    }

    #[test]
    fn zero_shift_crop_and_zero_alpha_are_identity() {
        let p = disk(10.0);
        assert_eq!(random_crop(&p, 0, 9).unwrap(), p);
        assert_eq!(elastic_deform(&p, 0.0, 4.0, 9).unwrap(), p);
        assert!(random_crop(&p, 5, 1).is_err());
        assert!(elastic_deform(&p, 3.0, 0.0, 1).is_err());
    }

    #[test]
    fn displacement_is_bounded_by_alpha() {
        for seed in 0..10 {
            let (dy, dx) = displacement_field(3.0, 4.0, seed).unwrap();
            let peak = dy.iter().zip(&dx).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
            assert!(peak <= 3.0 + 1e-9);
            assert!(peak > 2.99);
        }
    }

    #[test]
    fn crop_keeps_block_area() {
        let mut data = vec![0f32; N * N];
        for y in 8..24 {
            for x in 8..24 {
                data[y * N + x] = 1.0;
            }
        }
        let p = Patch::new(data).unwrap();
        for seed in 0..20 {
            let out = random_crop(&p, 2, seed).unwrap().to_binary();
            let area = out.count() as f64;
            assert!((area - 256.0).abs() <= 0.2 * 256.0, "seed {seed}: {area}");
        }
    }
}
