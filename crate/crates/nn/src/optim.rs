use serde::{Deserialize, Serialize};

use crate::params::ParamSet;
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn sgd_default() -> Self {
        OptimizerKind::SgdMomentum {
            lr: 1e-2,
            momentum: 0.9,
        }
    }

    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Velocity buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState<T> {
    pub velocity: ParamSet<T>,
}

impl<T: Real> SgdState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self {
            velocity: params.zeros_like(),
        }
    }
}

/// `v <- momentum * v + g; p <- p - lr * v`
pub fn sgd_momentum_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut SgdState<T>,
    lr: f64,
    momentum: f64,
) {
    let (lr, mu) = (T::of_f64(lr), T::of_f64(momentum));
    for ((p, g), v) in params
        .tensors_mut()
        .zip(grads.tensors())
        .zip(state.velocity.tensors_mut())
    {
        for ((p, &g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *v = mu * *v + g;
            *p = *p - lr * *v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    /// Number of completed steps.
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// Bias-corrected Adam update for step `t` (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut AdamState<T>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
) {
    assert!(t >= 1, "adam step index is 1-based");
    state.t = t;
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for (((p, g), m), v) in params
        .tensors_mut()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let g = g.as_f64();
            let mf = beta1 * m.as_f64() + (1.0 - beta1) * g;
            let vf = beta2 * v.as_f64() + (1.0 - beta2) * g * g;
            *m = T::of_f64(mf);
            *v = T::of_f64(vf);
            let update = lr * (mf / c1) / ((vf / c2).sqrt() + eps);
            *p = T::of_f64(p.as_f64() - update);
        }
    }
}

/// Optimizer with its state, as driven by the training loop.
#[derive(Debug, Clone)]
pub enum Optimizer<T> {
    Sgd {
        lr: f64,
        momentum: f64,
        state: SgdState<T>,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        state: AdamState<T>,
    },
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, params: &ParamSet<T>) -> Self {
        match kind {
            OptimizerKind::SgdMomentum { lr, momentum } => Optimizer::Sgd {
                lr,
                momentum,
                state: SgdState::new(params),
            },
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                state: AdamState::new(params),
            },
        }
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) {
        match self {
            Optimizer::Sgd {
                lr,
                momentum,
                state,
            } => sgd_momentum_step(params, grads, state, *lr, *momentum),
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                state,
            } => {
                let t = state.t + 1;
                adam_step(params, grads, state, *lr, *beta1, *beta2, *eps, t)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Init, LayerParams};
    use crate::tensor::Tensor;

    fn scalar(v: f64) -> ParamSet<f64> {
        ParamSet {
            layers: vec![LayerParams {
                layer: 0,
                weight: Tensor::from_vec(&[1, 1], vec![v]).unwrap(),
                bias: Tensor::from_vec(&[1], vec![0.0]).unwrap(),
            }],
            init: Init::Zeros,
            seed: 0,
        }
    }

    fn value(p: &ParamSet<f64>) -> f64 {
        p.layers[0].weight.data()[0]
    }

    #[test]
    fn sgd_without_momentum_is_plain_descent() {
        let mut p = scalar(1.0);
        let mut s = SgdState::new(&p);
        sgd_momentum_step(&mut p, &scalar(0.5), &mut s, 0.1, 0.0);
        assert!((value(&p) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_two_constant_steps_closed_form() {
        let (lr, m, g) = (0.1, 0.9, 0.7);
        let mut p = scalar(0.0);
        let mut s = SgdState::new(&p);
        for _ in 0..2 {
            sgd_momentum_step(&mut p, &scalar(g), &mut s, lr, m);
        }
        assert!((value(&p) + lr * g * (2.0 + m)).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_decays_velocity() {
        let mut p = scalar(1.0);
        let mut s = SgdState::new(&p);
        s.velocity.layers[0].weight.data_mut()[0] = 0.0;
        sgd_momentum_step(&mut p, &scalar(0.0), &mut s, 0.1, 0.9);
        assert_eq!(value(&p), 1.0);
        s.velocity.layers[0].weight.data_mut()[0] = 2.0;
        let mut q = scalar(1.0);
        sgd_momentum_step(&mut q, &scalar(0.0), &mut s, 0.1, 0.9);
        assert!((value(&s.velocity) - 1.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        for g in [3.0, -0.02, 1e-3] {
            let mut p = scalar(0.0);
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &scalar(g), &mut s, 1e-3, 0.9, 0.999, 1e-8, 1);
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!((value(&p) - expected).abs() < 1e-15);
            assert!((value(&p) + 1e-3 * g.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn adam_zero_gradient_never_moves() {
        let mut p = scalar(0.25);
        let mut s = AdamState::new(&p);
        for t in 1..=50 {
            adam_step(&mut p, &scalar(0.0), &mut s, 1e-2, 0.9, 0.999, 1e-8, t);
        }
        assert_eq!(value(&p), 0.25);
    }

    #[test]
    fn adam_minimizes_scalar_quadratic() {
        // loss x^2 / 2, gradient x
        let mut p = scalar(1.0);
        let mut s = AdamState::new(&p);
        for t in 1..=200 {
            let g = scalar(value(&p));
            adam_step(&mut p, &g, &mut s, 0.1, 0.9, 0.999, 1e-8, t);
        }
        assert!(value(&p).abs() < 0.05, "x = {}", value(&p));
    }
}
