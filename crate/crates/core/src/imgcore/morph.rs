use super::{BinaryImage, StructuringElement};
use crate::Result;

/// `dst |= src shifted by (dr, dc)`, i.e. `dst[p] |= src[p - (dr, dc)]`;
/// with `and`, `dst &= ...` and out-of-image source pixels read as `outside`.
fn shift_combine(
    dst: &mut [u8],
    src: &[u8],
    w: usize,
    h: usize,
    (dr, dc): (isize, isize),
    and: bool,
    outside: u8,
) {
    for y in 0..h {
        let sy = y as isize - dr;
        let drow = &mut dst[y * w..][..w];
        if sy < 0 || sy >= h as isize {
            if and && outside == 0 {
                drow.fill(0);
            } else if !and && outside == 1 {
                drow.fill(1);
            }
            continue;
        }
        let srow = &src[sy as usize * w..][..w];
        // valid destination columns: 0 <= x - dc < w
        let x0 = dc.max(0) as usize;
        let x1 = (w as isize + dc).min(w as isize).max(0) as usize;
        for x in 0..w {
            let v = if x >= x0 && x < x1 {
                srow[(x as isize - dc) as usize]
            } else {
                outside
            };
            if and {
                drow[x] &= v;
            } else {
                drow[x] |= v;
            }
        }
    }
}

/// Binary dilation `A ⊕ B = { a + b }`; pixels outside the image are background.
pub fn dilate(img: &BinaryImage, se: &StructuringElement) -> Result<BinaryImage> {
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0u8; w * h];
    for off in se.offsets() {
        shift_combine(&mut out, img.data(), w, h, off, false, 0);
    }
    BinaryImage::new(w, h, out)
}

/// Binary erosion `A ⊖ B = { p : p + b ∈ A ∀ b }`; outside is background.
pub fn erode(img: &BinaryImage, se: &StructuringElement) -> Result<BinaryImage> {
    let (w, h) = (img.width(), img.height());
    let mut out = vec![1u8; w * h];
    for (dr, dc) in se.offsets() {
        shift_combine(&mut out, img.data(), w, h, (-dr, -dc), true, 0);
    }
    BinaryImage::new(w, h, out)
}

/// Closing (dilation then erosion) of the image embedded in an infinite
/// background plane, cropped back to the input frame. Working on a padded
/// canvas keeps foreground that touches the border instead of eroding it.
pub fn morphological_close(img: &BinaryImage, se: &StructuringElement) -> Result<BinaryImage> {
    let (w, h) = (img.width(), img.height());
    let (py, px) = (se.height() / 2, se.width() / 2);
    let (pw, ph) = (w + 2 * px, h + 2 * py);
    let mut padded = vec![0u8; pw * ph];
    for y in 0..h {
        padded[(y + py) * pw + px..][..w].copy_from_slice(&img.data()[y * w..][..w]);
    }
    let padded = BinaryImage::new(pw, ph, padded)?;
    let closed = erode(&dilate(&padded, se)?, se)?;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        out.extend_from_slice(&closed.data()[(y + py) * pw + px..][..w]);
    }
    BinaryImage::new(w, h, out)
}

/// 1-D squared distance transform of a sampled function (lower envelope of
/// parabolas). `f` holds squared distances, `f64::INFINITY` for "no site".
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    let Some(q0) = f.iter().position(|x| x.is_finite()) else {
        out.fill(f64::INFINITY);
        return;
    };
    v[0] = q0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in q0 + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut j = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let d = q as f64 - v[j] as f64;
        *o = d * d + f[v[j]];
    }
}

/// Dilation by [`StructuringElement::disk`] in time independent of the
/// radius, via the exact squared Euclidean distance to the nearest
/// foreground pixel.
pub fn dilate_disk(img: &BinaryImage, radius: usize) -> Result<BinaryImage> {
    let (w, h) = (img.width(), img.height());
    let n = w.max(h);
    let (mut f, mut g) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    let mut dist = vec![0.0f64; w * h];
    for x in 0..w {
        for (y, v) in f[..h].iter_mut().enumerate() {
            *v = if img.data()[y * w + x] == 1 { 0.0 } else { f64::INFINITY };
        }
        edt_1d(&f[..h], &mut g[..h], &mut v, &mut z);
        for y in 0..h {
            dist[y * w + x] = g[y];
        }
    }
    let r2 = (radius * radius) as f64;
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        f[..w].copy_from_slice(&dist[y * w..][..w]);
        edt_1d(&f[..w], &mut g[..w], &mut v, &mut z);
        for x in 0..w {
            out[y * w + x] = u8::from(g[x] <= r2);
        }
    }
    BinaryImage::new(w, h, out)
}
