//! Network descriptions and the architecture-string grammar.
//!
//! An architecture string is a dash-separated list of blocks:
//!
//! | token    | expands to                                   |
//! |----------|----------------------------------------------|
//! | `CRP n`  | 3x3 conv (n filters), ReLU, 2x2 max-pool     |
//! | `CRPC n` | 3x3 conv (n filters), ReLU, 3x3 max-pool     |
//! | `CRPL n` | same layers as `CRP n` (Lenet-style naming)  |
//! | `D n`    | dense (n units), ReLU                        |
//! | `DD n`   | dropout, dense (n units), ReLU               |
//!
//! A `Dense(classes)` + `Softmax` head is always appended.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{NnError, Result};

pub const DEFAULT_DROPOUT: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Same-padded 3x3 convolution, stride 1.
    Conv3x3 { filters: usize },
    Relu,
    /// 2x2 window, stride 2, no padding.
    MaxPool2,
    /// 3x3 window, stride 2, padding 1.
    MaxPool3,
    Dense { units: usize },
    Dropout { rate: f32 },
    Softmax,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv3x3 { .. } => "conv3x3",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2 => "maxpool2",
            LayerSpec::MaxPool3 => "maxpool3",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv3x3 { .. } | LayerSpec::Dense { .. })
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Spatial { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Spatial { c, h, w } => write!(f, "{c}x{h}x{w}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

pub(crate) fn pool_geometry(layer: &LayerSpec) -> Option<(usize, usize, usize)> {
    // (window, stride, padding)
    match layer {
        LayerSpec::MaxPool2 => Some((2, 2, 0)),
        LayerSpec::MaxPool3 => Some((3, 2, 1)),
        _ => None,
    }
}

fn pooled(len: usize, window: usize, stride: usize, pad: usize) -> usize {
    if len + 2 * pad < window {
        0
    } else {
        (len + 2 * pad - window) / stride + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// Channels, height, width of one input sample.
    pub input: (usize, usize, usize),
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Validate and return the activation shape after every layer.
    ///
    /// `shapes()[0]` is the input shape; `shapes()[i + 1]` is the output of
    /// layer `i`.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(NnError::Spec("input dimensions must be positive".into()));
        }
        let mut shapes = vec![Shape::Spatial { c, h, w }];
        let mut cur = shapes[0];
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur) {
                (LayerSpec::Conv3x3 { filters }, Shape::Spatial { h, w, .. }) => {
                    if filters == 0 {
                        return Err(NnError::Spec(format!("layer {i}: zero filters")));
                    }
                    Shape::Spatial { c: filters, h, w }
                }
                (LayerSpec::Conv3x3 { .. }, Shape::Flat(_)) => {
                    return Err(NnError::Spec(format!(
                        "layer {i}: convolution after a dense layer"
                    )))
                }
                (LayerSpec::MaxPool2 | LayerSpec::MaxPool3, Shape::Spatial { c, h, w }) => {
                    let (k, s, p) = pool_geometry(layer).expect("pool layer");
                    let (oh, ow) = (pooled(h, k, s, p), pooled(w, k, s, p));
                    if oh == 0 || ow == 0 {
                        return Err(NnError::Spec(format!(
                            "layer {i}: {} collapses {h}x{w} below 1x1",
                            layer.name()
                        )));
                    }
                    Shape::Spatial { c, h: oh, w: ow }
                }
                (LayerSpec::MaxPool2 | LayerSpec::MaxPool3, Shape::Flat(_)) => {
                    return Err(NnError::Spec(format!("layer {i}: pooling a flat vector")))
                }
                (LayerSpec::Dense { units }, _) => {
                    if units == 0 {
                        return Err(NnError::Spec(format!("layer {i}: zero units")));
                    }
                    Shape::Flat(units)
                }
                (LayerSpec::Dropout { rate }, s) => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(NnError::Spec(format!(
                            "layer {i}: dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    s
                }
                (LayerSpec::Relu, s) => s,
                (LayerSpec::Softmax, s) => {
                    if i + 1 != self.layers.len() {
                        return Err(NnError::Spec("softmax must be the final layer".into()));
                    }
                    s
                }
            };
            shapes.push(cur);
        }
        match self.layers.as_slice() {
            [.., LayerSpec::Dense { units }, LayerSpec::Softmax] if *units == self.classes => {}
            _ => {
                return Err(NnError::Spec(format!(
                    "network must end with dense({}) + softmax",
                    self.classes
                )))
            }
        }
        Ok(shapes)
    }

    /// Weight and bias shapes of every parameterized layer, in layer order.
    pub fn param_shapes(&self) -> Result<Vec<(usize, Vec<usize>, Vec<usize>)>> {
        let shapes = self.shapes()?;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let fan_in = shapes[i].size();
            match *layer {
                LayerSpec::Conv3x3 { filters } => {
                    let c = match shapes[i] {
                        Shape::Spatial { c, .. } => c,
                        Shape::Flat(_) => unreachable!("validated"),
                    };
                    out.push((i, vec![filters, c * 9], vec![filters]));
                }
                LayerSpec::Dense { units } => out.push((i, vec![units, fan_in], vec![units])),
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|(_, w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .sum())
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Named architectures from the reference tables.
pub const PRESETS: &[(&str, &str)] = &[
    ("MC-Cifar", "CRPC32-CRPC32-CRPC64-D360"),
    ("MC-Lenet", "CRPL20-CRPL50-D500"),
    ("TCCNN-S", "CRP25-CRP20-DD256"),
    ("TCCNN-L", "CRP20-CRP50-CRP100-DD500"),
    ("MV-Cifar", "CRPC32-CRPC32-CRPC64-D500"),
    ("MV-Lenet", "CRPL20-CRPL50-D500"),
    ("TVCNN-S", "CRP25-CRP20-DD256"),
    ("TVCNN-L", "CRP20-CRP50-CRP100-DD1000"),
];

/// Resolve a preset name (case-insensitive) to its architecture string.
pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, a)| *a)
}

pub fn parse_arch(arch: &str, classes: usize) -> Result<NetworkSpec> {
    parse_arch_with(arch, classes, (1, 32, 32), DEFAULT_DROPOUT)
}

/// Parse an architecture string, or a preset name, into a [`NetworkSpec`].
pub fn parse_arch_with(
    arch: &str,
    classes: usize,
    input: (usize, usize, usize),
    dropout: f32,
) -> Result<NetworkSpec> {
    let (name, body) = match preset(arch.trim()) {
        Some(body) => (arch.trim().to_string(), body),
        None => (arch.trim().to_string(), arch.trim()),
    };
    if classes == 0 {
        return Err(NnError::Parse("class count must be positive".into()));
    }
    if body.is_empty() {
        return Err(NnError::Parse("empty architecture string".into()));
    }
    let mut layers = Vec::new();
    for token in body.split('-') {
        let token = token.trim();
        let split = token
            .find(|c: char| !c.is_ascii_alphabetic())
            .unwrap_or(token.len());
        let (kind, count) = token.split_at(split);
        let count = count.trim().trim_start_matches('(').trim_end_matches(')');
        let n: usize = count
            .parse()
            .map_err(|_| NnError::Parse(format!("bad count in token {token:?}")))?;
        if n == 0 {
            return Err(NnError::Parse(format!("non-positive count in token {token:?}")));
        }
        match kind {
            "CRP" | "CRPL" => layers.extend([
                LayerSpec::Conv3x3 { filters: n },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
            ]),
            "CRPC" => layers.extend([
                LayerSpec::Conv3x3 { filters: n },
                LayerSpec::Relu,
                LayerSpec::MaxPool3,
            ]),
            "D" => layers.extend([LayerSpec::Dense { units: n }, LayerSpec::Relu]),
            "DD" => layers.extend([
                LayerSpec::Dropout { rate: dropout },
                LayerSpec::Dense { units: n },
                LayerSpec::Relu,
            ]),
            _ => return Err(NnError::Parse(format!("unknown token {token:?}"))),
        }
    }
    layers.extend([LayerSpec::Dense { units: classes }, LayerSpec::Softmax]);
    let spec = NetworkSpec {
        name,
        input,
        classes,
        layers,
    };
    spec.shapes().map_err(|e| NnError::Parse(e.to_string()))?;
    Ok(spec)
}
