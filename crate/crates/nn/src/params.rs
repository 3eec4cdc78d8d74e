use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::spec::NetworkSpec;
use crate::tensor::{Real, Tensor};
use crate::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`, zero biases.
    HeUniform,
    Zeros,
}

/// Weight and bias of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    /// Index into `NetworkSpec::layers`.
    pub layer: usize,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub layers: Vec<LayerParams<T>>,
    pub init: Init,
    pub seed: u64,
}

impl<T: Real> ParamSet<T> {
    pub fn init(spec: &NetworkSpec, init: Init, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for (layer, wshape, bshape) in spec.param_shapes()? {
            let mut weight = Tensor::zeros(&wshape);
            if init == Init::HeUniform {
                let fan_in = wshape[1] as f64;
                let limit = (6.0 / fan_in).sqrt();
                for w in weight.data_mut() {
                    *w = T::of_f64(rng.gen_range(-limit..limit));
                }
            }
            layers.push(LayerParams {
                layer,
                weight,
                bias: Tensor::zeros(&bshape),
            });
        }
        Ok(Self { layers, init, seed })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|p| LayerParams {
                    layer: p.layer,
                    weight: Tensor::zeros(p.weight.shape()),
                    bias: Tensor::zeros(p.bias.shape()),
                })
                .collect(),
            init: self.init,
            seed: self.seed,
        }
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            layers: self
                .layers
                .iter()
                .map(|p| LayerParams {
                    layer: p.layer,
                    weight: p.weight.cast(),
                    bias: p.bias.cast(),
                })
                .collect(),
            init: self.init,
            seed: self.seed,
        }
    }

    pub fn count(&self) -> usize {
        self.layers
            .iter()
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }

    /// Flat views over every tensor: weight then bias for each layer.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|p| [&mut p.weight, &mut p.bias])
    }

    pub fn for_layer(&self, layer: usize) -> Option<&LayerParams<T>> {
        self.layers.iter().find(|p| p.layer == layer)
    }

    /// Check tensor shapes against the network description.
    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = spec.param_shapes()?;
        if expected.len() != self.layers.len() {
            return Err(NnError::Shape(format!(
                "expected {} parameterized layers, found {}",
                expected.len(),
                self.layers.len()
            )));
        }
        for ((layer, w, b), p) in expected.iter().zip(&self.layers) {
            if *layer != p.layer || w.as_slice() != p.weight.shape() || b.as_slice() != p.bias.shape()
            {
                return Err(NnError::Shape(format!(
                    "layer {layer}: expected weight {w:?} bias {b:?}, found layer {} weight {:?} bias {:?}",
                    p.layer,
                    p.weight.shape(),
                    p.bias.shape()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_arch;

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = parse_arch("CRP4-D8", 3).unwrap();
        let a = ParamSet::<f32>::init(&spec, Init::HeUniform, 9).unwrap();
        let b = ParamSet::<f32>::init(&spec, Init::HeUniform, 9).unwrap();
        let c = ParamSet::<f32>::init(&spec, Init::HeUniform, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.check(&spec).unwrap();
        let conv = &a.layers[0];
        let limit = (6.0f32 / 9.0).sqrt();
        assert!(conv.weight.data().iter().all(|w| w.abs() <= limit));
        assert!(conv.bias.data().iter().all(|&b| b == 0.0));
        assert_eq!(a.count(), spec.param_count().unwrap());
    }
}
