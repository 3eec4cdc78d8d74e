//! Forward and backward passes over a [`NetworkSpec`].
//!
//! Activations are batch-major and row-major within a sample (`c, h, w`).
//! Convolutions use im2col over chunks of images followed by one GEMM per
//! chunk; everything runs on the calling thread in a fixed order, so results
//! are bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::ParamSet;
use crate::spec::{pool_geometry, LayerSpec, NetworkSpec, Shape};
use crate::tensor::{Real, Tensor};
use crate::{NnError, Result};

/// Images per im2col chunk.
const CONV_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from a generator seeded with `seed`.
    Train { seed: u64 },
    Eval,
}

/// Saved state from a training forward pass.
struct Tape<T> {
    /// `acts[i]` is the input of layer `i`; the last entry is the network output.
    acts: Vec<Vec<T>>,
    pool_argmax: Vec<Option<Vec<u32>>>,
    dropout_masks: Vec<Option<Vec<T>>>,
}

fn batch_size(spec: &NetworkSpec, batch: &Tensor<impl Real>) -> Result<usize> {
    let (c, h, w) = spec.input;
    let shape = batch.shape();
    let ok = match shape {
        [_, cc, hh, ww] => (*cc, *hh, *ww) == (c, h, w),
        [_, flat] => *flat == c * h * w,
        _ => false,
    };
    if !ok || shape[0] == 0 {
        return Err(NnError::Shape(format!(
            "batch shape {shape:?} does not match input {c}x{h}x{w}"
        )));
    }
    Ok(shape[0])
}

fn spatial(shape: Shape) -> (usize, usize, usize) {
    match shape {
        Shape::Spatial { c, h, w } => (c, h, w),
        Shape::Flat(n) => (n, 1, 1),
    }
}

/// Destination and source column ranges for a horizontal kernel offset.
#[inline]
fn shifted_range(w: usize, kx: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    match kx {
        0 => (1..w, 0..w - 1),
        1 => (0..w, 0..w),
        _ => (0..w - 1, 1..w),
    }
}

fn im2col<T: Real>(x: &[T], images: usize, c: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    let cols = images * hw;
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let (dst_cols, src_cols) = shifted_range(w, kx);
                let row = &mut col[((ci * 9) + ky * 3 + kx) * cols..][..cols];
                for j in 0..images {
                    let src = &x[(j * c + ci) * hw..][..hw];
                    let dst = &mut row[j * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        let drow = &mut dst[y * w..][..w];
                        if sy < 0 || sy >= h as isize {
                            drow.fill(T::zero());
                            continue;
                        }
                        let srow = &src[sy as usize * w..][..w];
                        if kx == 0 {
                            drow[0] = T::zero();
                        } else if kx == 2 {
                            drow[w - 1] = T::zero();
                        }
                        drow[dst_cols.clone()].copy_from_slice(&srow[src_cols.clone()]);
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(col: &[T], images: usize, c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    let cols = images * hw;
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                // im2col read dx[sy][src_cols] into col[y][dst_cols]; scatter back
                let (col_cols, img_cols) = shifted_range(w, kx);
                let row = &col[((ci * 9) + ky * 3 + kx) * cols..][..cols];
                for j in 0..images {
                    let src = &row[j * hw..][..hw];
                    let dst = &mut dx[(j * c + ci) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let s = &src[y * w..][..w][col_cols.clone()];
                        let d = &mut dst[sy as usize * w..][..w][img_cols.clone()];
                        for (d, &s) in d.iter_mut().zip(s) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Real>(
    x: &[T],
    n: usize,
    (c, h, w): (usize, usize, usize),
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Vec<T> {
    let oc = weight.shape()[0];
    let k = c * 9;
    let hw = h * w;
    let mut out = vec![T::zero(); n * oc * hw];
    let mut col = vec![T::zero(); k * CONV_CHUNK.min(n) * hw];
    let mut res = vec![T::zero(); oc * CONV_CHUNK.min(n) * hw];
    for start in (0..n).step_by(CONV_CHUNK) {
        let m = CONV_CHUNK.min(n - start);
        let cols = m * hw;
        im2col(&x[start * c * hw..], m, c, h, w, &mut col[..k * cols]);
        T::gemm(
            oc,
            k,
            cols,
            weight.data(),
            (k as isize, 1),
            &col[..k * cols],
            (cols as isize, 1),
            T::zero(),
            &mut res[..oc * cols],
        );
        for j in 0..m {
            for o in 0..oc {
                let b = bias.data()[o];
                let src = &res[o * cols + j * hw..][..hw];
                let dst = &mut out[((start + j) * oc + o) * hw..][..hw];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = *s + b;
                }
            }
        }
    }
    out
}

/// Returns `(dw, db, dx)`; `dx` only when requested.
fn conv_backward<T: Real>(
    x: &[T],
    dy: &[T],
    n: usize,
    (c, h, w): (usize, usize, usize),
    weight: &Tensor<T>,
    need_dx: bool,
) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
    let oc = weight.shape()[0];
    let k = c * 9;
    let hw = h * w;
    let mut dw = vec![T::zero(); oc * k];
    let mut db = vec![0.0f64; oc];
    let mut dx = need_dx.then(|| vec![T::zero(); n * c * hw]);
    let chunk = CONV_CHUNK.min(n);
    let mut col = vec![T::zero(); k * chunk * hw];
    let mut dyc = vec![T::zero(); oc * chunk * hw];
    let mut dcol = if need_dx {
        vec![T::zero(); k * chunk * hw]
    } else {
        Vec::new()
    };
    for start in (0..n).step_by(CONV_CHUNK) {
        let m = CONV_CHUNK.min(n - start);
        let cols = m * hw;
        im2col(&x[start * c * hw..], m, c, h, w, &mut col[..k * cols]);
        for j in 0..m {
            for o in 0..oc {
                let src = &dy[((start + j) * oc + o) * hw..][..hw];
                dyc[o * cols + j * hw..][..hw].copy_from_slice(src);
                db[o] += src.iter().map(|v| v.as_f64()).sum::<f64>();
            }
        }
        // dw += dy_chunk * col^T
        T::gemm(
            oc,
            cols,
            k,
            &dyc[..oc * cols],
            (cols as isize, 1),
            &col[..k * cols],
            (1, cols as isize),
            T::one(),
            &mut dw,
        );
        if let Some(dx) = dx.as_mut() {
            // dcol = W^T * dy_chunk
            T::gemm(
                k,
                oc,
                cols,
                weight.data(),
                (1, k as isize),
                &dyc[..oc * cols],
                (cols as isize, 1),
                T::zero(),
                &mut dcol[..k * cols],
            );
            col2im_add(&dcol[..k * cols], m, c, h, w, &mut dx[start * c * hw..]);
        }
    }
    (dw, db.into_iter().map(T::of_f64).collect(), dx)
}

fn dense_forward<T: Real>(x: &[T], n: usize, weight: &Tensor<T>, bias: &Tensor<T>) -> Vec<T> {
    let (units, fan_in) = (weight.shape()[0], weight.shape()[1]);
    let mut out = vec![T::zero(); n * units];
    for row in out.chunks_mut(units) {
        row.copy_from_slice(bias.data());
    }
    T::gemm(
        n,
        fan_in,
        units,
        x,
        (fan_in as isize, 1),
        weight.data(),
        (1, fan_in as isize),
        T::one(),
        &mut out,
    );
    out
}

fn dense_backward<T: Real>(
    x: &[T],
    dy: &[T],
    n: usize,
    weight: &Tensor<T>,
    need_dx: bool,
) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
    let (units, fan_in) = (weight.shape()[0], weight.shape()[1]);
    let mut dw = vec![T::zero(); units * fan_in];
    T::gemm(
        units,
        n,
        fan_in,
        dy,
        (1, units as isize),
        x,
        (fan_in as isize, 1),
        T::zero(),
        &mut dw,
    );
    let mut db = vec![0.0f64; units];
    for row in dy.chunks(units) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += v.as_f64();
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); n * fan_in];
        T::gemm(
            n,
            units,
            fan_in,
            dy,
            (units as isize, 1),
            weight.data(),
            (fan_in as isize, 1),
            T::zero(),
            &mut dx,
        );
        dx
    });
    (dw, db.into_iter().map(T::of_f64).collect(), dx)
}

fn pool_forward<T: Real>(
    x: &[T],
    n: usize,
    (c, h, w): (usize, usize, usize),
    (oh, ow): (usize, usize),
    (window, stride, pad): (usize, usize, usize),
) -> (Vec<T>, Vec<u32>) {
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = T::neg_infinity();
                let mut best_at = 0usize;
                for ky in 0..window {
                    let y = (oy * stride + ky) as isize - pad as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kx in 0..window {
                        let xx = (ox * stride + kx) as isize - pad as isize;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let idx = base + y as usize * w + xx as usize;
                        if x[idx] > best {
                            best = x[idx];
                            best_at = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_at as u32);
            }
        }
    }
    (out, arg)
}

fn softmax_rows<T: Real>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(classes) {
        let max = row
            .iter()
            .map(|v| v.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| T::of_f64(e / sum)));
    }
    out
}

fn run<T: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<T>,
    batch: &Tensor<T>,
    mode: Mode,
    keep_tape: bool,
) -> Result<(Vec<T>, Option<Tape<T>>)> {
    let n = batch_size(spec, batch)?;
    let shapes = spec.shapes()?;
    params.check(spec)?;
    if !batch.all_finite() {
        return Err(NnError::Numeric("non-finite input batch".into()));
    }
    let mut rng = match mode {
        Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Mode::Eval => None,
    };
    let mut tape = keep_tape.then(|| Tape {
        acts: Vec::with_capacity(spec.layers.len() + 1),
        pool_argmax: vec![None; spec.layers.len()],
        dropout_masks: vec![None; spec.layers.len()],
    });
    let mut cur: Vec<T> = batch.data().to_vec();
    for (i, layer) in spec.layers.iter().enumerate() {
        let input_shape = shapes[i];
        let next = match *layer {
            LayerSpec::Conv3x3 { .. } => {
                let p = params.for_layer(i).expect("checked");
                conv_forward(&cur, n, spatial(input_shape), &p.weight, &p.bias)
            }
            LayerSpec::Dense { .. } => {
                let p = params.for_layer(i).expect("checked");
                dense_forward(&cur, n, &p.weight, &p.bias)
            }
            LayerSpec::Relu => cur
                .iter()
                .map(|&v| if v < T::zero() { T::zero() } else { v })
                .collect(),
            LayerSpec::MaxPool2 | LayerSpec::MaxPool3 => {
                let (_, oh, ow) = spatial(shapes[i + 1]);
                let (out, arg) = pool_forward(
                    &cur,
                    n,
                    spatial(input_shape),
                    (oh, ow),
                    pool_geometry(layer).expect("pool"),
                );
                if let Some(t) = tape.as_mut() {
                    t.pool_argmax[i] = Some(arg);
                }
                out
            }
            LayerSpec::Dropout { rate } => match rng.as_mut() {
                Some(rng) if rate > 0.0 => {
                    let keep = 1.0 - rate as f64;
                    let scale = T::of_f64(1.0 / keep);
                    let mask: Vec<T> = (0..cur.len())
                        .map(|_| {
                            if rng.gen::<f64>() < keep {
                                scale
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    let out = cur.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    if let Some(t) = tape.as_mut() {
                        t.dropout_masks[i] = Some(mask);
                    }
                    out
                }
                _ => cur.clone(),
            },
            LayerSpec::Softmax => {
                if !cur.iter().all(|v| v.is_finite()) {
                    return Err(NnError::Numeric(format!(
                        "non-finite logits in {}",
                        spec.name
                    )));
                }
                softmax_rows(&cur, spec.classes)
            }
        };
        if let Some(t) = tape.as_mut() {
            t.acts.push(cur);
        }
        cur = next;
    }
    if let Some(t) = tape.as_mut() {
        t.acts.push(cur.clone());
    }
    Ok((cur, tape))
}

/// Class probabilities, `B x classes`.
pub fn forward<T: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<T>,
    batch: &Tensor<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    let (probs, _) = run(spec, params, batch, mode, false)?;
    let n = probs.len() / spec.classes;
    Tensor::from_vec(&[n, spec.classes], probs)
}

fn check_labels(spec: &NetworkSpec, labels: &[usize], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(NnError::Shape(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= spec.classes) {
        return Err(NnError::Shape(format!(
            "label {bad} out of range for {} classes",
            spec.classes
        )));
    }
    Ok(())
}

/// Mean softmax cross-entropy computed from the pre-softmax logits.
fn cross_entropy<T: Real>(logits: &[T], labels: &[usize], classes: usize) -> f64 {
    let mut total = 0.0f64;
    for (row, &label) in logits.chunks(classes).zip(labels) {
        let max = row
            .iter()
            .map(|v| v.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln() + max;
        total += lse - row[label].as_f64();
    }
    total / labels.len() as f64
}

/// Training-mode loss only; dropout masks depend on `seed` exactly as in
/// [`loss_and_grad`].
pub fn loss<T: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    seed: u64,
) -> Result<f64> {
    let (_, tape) = run(spec, params, batch, Mode::Train { seed }, true)?;
    let tape = tape.expect("tape requested");
    check_labels(spec, labels, batch.shape()[0])?;
    let logits = &tape.acts[spec.layers.len() - 1];
    let l = cross_entropy(logits, labels, spec.classes);
    if !l.is_finite() {
        return Err(NnError::Numeric("non-finite loss".into()));
    }
    Ok(l)
}

/// The linear region a training-mode forward pass falls in: the sign of
/// every ReLU input and the argmax of every pooling window.
///
/// Two parameter settings with equal regimes lie on the same linear piece of
/// every ReLU and pool, so finite differences between them are smooth.
pub fn regime<T: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<T>,
    batch: &Tensor<T>,
    seed: u64,
) -> Result<Vec<u32>> {
    let (_, tape) = run(spec, params, batch, Mode::Train { seed }, true)?;
    let tape = tape.expect("tape requested");
    let mut out = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Relu => out.extend(tape.acts[i].iter().map(|&v| (v > T::zero()) as u32)),
            LayerSpec::MaxPool2 | LayerSpec::MaxPool3 => {
                out.extend(tape.pool_argmax[i].as_ref().expect("pool argmax"))
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Mean cross-entropy and its exact gradient with respect to every parameter.
pub fn loss_and_grad<T: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    seed: u64,
) -> Result<(f64, ParamSet<T>)> {
    let (loss, grads, _) = backprop(spec, params, batch, labels, seed)?;
    Ok((loss, grads))
}

/// Like [`loss_and_grad`], also returning the training-mode probabilities.
pub(crate) fn backprop<T: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    seed: u64,
) -> Result<(f64, ParamSet<T>, Vec<T>)> {
    let n = batch_size(spec, batch)?;
    check_labels(spec, labels, n)?;
    let shapes = spec.shapes()?;
    let (probs, tape) = run(spec, params, batch, Mode::Train { seed }, true)?;
    let tape = tape.expect("tape requested");
    let last = spec.layers.len() - 1;
    let loss = cross_entropy(&tape.acts[last], labels, spec.classes);
    if !loss.is_finite() {
        return Err(NnError::Numeric("non-finite loss".into()));
    }

    let inv_n = 1.0 / n as f64;
    let mut grad: Vec<T> = probs
        .chunks(spec.classes)
        .zip(labels)
        .flat_map(|(row, &label)| {
            row.iter().enumerate().map(move |(k, &p)| {
                let target = if k == label { 1.0 } else { 0.0 };
                T::of_f64((p.as_f64() - target) * inv_n)
            })
        })
        .collect();

    let mut grads = params.zeros_like();
    let first_param_layer = params.layers.first().map(|p| p.layer).unwrap_or(0);
    for i in (0..last).rev() {
        let x = &tape.acts[i];
        let y = &tape.acts[i + 1];
        // Gradients below the first parameterized layer are never used.
        let need_dx = i > first_param_layer;
        grad = match spec.layers[i] {
            LayerSpec::Conv3x3 { .. } => {
                let p = params.for_layer(i).expect("checked");
                let (dw, db, dx) =
                    conv_backward(x, &grad, n, spatial(shapes[i]), &p.weight, need_dx);
                store(&mut grads, i, dw, db);
                dx.unwrap_or_default()
            }
            LayerSpec::Dense { .. } => {
                let p = params.for_layer(i).expect("checked");
                let (dw, db, dx) = dense_backward(x, &grad, n, &p.weight, need_dx);
                store(&mut grads, i, dw, db);
                dx.unwrap_or_default()
            }
            LayerSpec::Relu => grad
                .iter()
                .zip(y.iter())
                .map(|(&g, &out)| if out > T::zero() { g } else { T::zero() })
                .collect(),
            LayerSpec::MaxPool2 | LayerSpec::MaxPool3 => {
                let arg = tape.pool_argmax[i].as_ref().expect("pool argmax");
                let mut dx = vec![T::zero(); x.len()];
                for (&g, &at) in grad.iter().zip(arg) {
                    dx[at as usize] = dx[at as usize] + g;
                }
                dx
            }
            LayerSpec::Dropout { .. } => match &tape.dropout_masks[i] {
                Some(mask) => grad.iter().zip(mask).map(|(&g, &m)| g * m).collect(),
                None => grad,
            },
            LayerSpec::Softmax => unreachable!("softmax is the final layer"),
        };
        if !need_dx && spec.layers[i].has_params() {
            break;
        }
    }
    Ok((loss, grads, probs))
}

fn store<T: Real>(grads: &mut ParamSet<T>, layer: usize, dw: Vec<T>, db: Vec<T>) {
    let p = grads
        .layers
        .iter_mut()
        .find(|p| p.layer == layer)
        .expect("layer present");
    p.weight.data_mut().copy_from_slice(&dw);
    p.bias.data_mut().copy_from_slice(&db);
}
