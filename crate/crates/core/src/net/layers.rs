//! Layer kinds with forward and backward passes over `channels x time x freq`
//! tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `[channels, time, freq]`.
pub type Shape = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `channels x time x freq` kernel, valid padding, unit stride.
    Conv { channels: usize, time: usize, freq: usize },
    /// Flattens its input into `inputs` values.
    Dense { inputs: usize, outputs: usize },
    Elu,
    Sigmoid,
    /// Non-overlapping average pooling.
    Pool { time: usize, freq: usize },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Elu => "elu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Pool { .. } => "pool",
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }

    /// Weight and bias element counts given the number of input channels.
    pub fn param_shape(&self, in_channels: usize) -> (usize, usize) {
        match *self {
            LayerSpec::Conv { channels, time, freq } => (channels * in_channels * time * freq, channels),
            LayerSpec::Dense { inputs, outputs } => (inputs * outputs, outputs),
            _ => (0, 0),
        }
    }

    pub fn param_count(&self, in_channels: usize) -> usize {
        let (w, b) = self.param_shape(in_channels);
        w + b
    }

    /// Output shape for an input of shape `input`, or a description of why
    /// the layer cannot accept it.
    pub fn output_shape(&self, input: Shape) -> std::result::Result<Shape, String> {
        let [c, t, f] = input;
        match *self {
            LayerSpec::Conv { channels, time, freq } => {
                if channels == 0 || time == 0 || freq == 0 {
                    return Err("conv extents must be >= 1".into());
                }
                if time > t || freq > f {
                    return Err(format!("kernel {time}x{freq} does not fit input {t}x{f}"));
                }
                Ok([channels, t - time + 1, f - freq + 1])
            }
            LayerSpec::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return Err("dense dims must be >= 1".into());
                }
                if inputs != c * t * f {
                    return Err(format!("expects {inputs} inputs, previous layer yields {c}x{t}x{f} = {}", c * t * f));
                }
                Ok([outputs, 1, 1])
            }
            LayerSpec::Elu | LayerSpec::Sigmoid => Ok(input),
            LayerSpec::Pool { time, freq } => {
                if time == 0 || freq == 0 || time > t || freq > f {
                    return Err(format!("pool {time}x{freq} does not fit input {t}x{f}"));
                }
                Ok([c, t / time, f / freq])
            }
        }
    }
}

/// A layer with its parameters. Non-trainable layers carry empty vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients of one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(spec: LayerSpec, input: Shape, index: usize) -> Result<Self> {
        let output = spec.output_shape(input).map_err(|detail| Error::LayerShape {
            layer: index,
            kind: spec.kind(),
            detail,
        })?;
        let (nw, nb) = spec.param_shape(input[0]);
        Ok(Layer {
            spec,
            input,
            output,
            weights: vec![0.0; nw],
            bias: vec![0.0; nb],
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn zero_grad(&self) -> LayerGrad {
        LayerGrad {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    /// Fan-in used for weight initialization.
    pub fn fan_in(&self) -> usize {
        match self.spec {
            LayerSpec::Conv { time, freq, .. } => self.input[0] * time * freq,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(x.shape, self.input);
        match self.spec {
            LayerSpec::Conv { time, freq, .. } => conv_forward(self, x, time, freq),
            LayerSpec::Dense { inputs, outputs } => {
                let mut out = self.bias.clone();
                for (o, acc) in out.iter_mut().enumerate() {
                    *acc += dot(&self.weights[o * inputs..(o + 1) * inputs], &x.data);
                }
                debug_assert_eq!(out.len(), outputs);
                Tensor::from_vec(self.output, out)
            }
            LayerSpec::Elu => Tensor::from_vec(x.shape, x.data.iter().map(|&v| elu(v)).collect()),
            LayerSpec::Sigmoid => Tensor::from_vec(x.shape, x.data.iter().map(|&v| sigmoid(v)).collect()),
            LayerSpec::Pool { time, freq } => pool_forward(self, x, time, freq),
        }
    }

    /// Backpropagates `grad_out` through the layer given its forward input
    /// `x` (and output `y`). Parameter gradients are accumulated into
    /// `grad`; the input gradient is returned when `want_input` is set.
    pub fn backward(
        &self,
        x: &Tensor,
        y: &Tensor,
        grad_out: &Tensor,
        grad: &mut LayerGrad,
        want_input: bool,
    ) -> Option<Tensor> {
        match self.spec {
            LayerSpec::Conv { time, freq, .. } => conv_backward(self, x, grad_out, grad, want_input, time, freq),
            LayerSpec::Dense { inputs, .. } => {
                for (o, &g) in grad_out.data.iter().enumerate() {
                    grad.bias[o] += g;
                    axpy(g, &x.data, &mut grad.weights[o * inputs..(o + 1) * inputs]);
                }
                want_input.then(|| {
                    let mut gx = vec![0.0; inputs];
                    for (o, &g) in grad_out.data.iter().enumerate() {
                        axpy(g, &self.weights[o * inputs..(o + 1) * inputs], &mut gx);
                    }
                    Tensor::from_vec(self.input, gx)
                })
            }
            LayerSpec::Elu => want_input.then(|| {
                let data = x
                    .data
                    .iter()
                    .zip(&y.data)
                    .zip(&grad_out.data)
                    .map(|((&xi, &yi), &g)| if xi > 0.0 { g } else { g * (yi + 1.0) })
                    .collect();
                Tensor::from_vec(self.input, data)
            }),
            LayerSpec::Sigmoid => want_input.then(|| {
                let data = y.data.iter().zip(&grad_out.data).map(|(&yi, &g)| g * yi * (1.0 - yi)).collect();
                Tensor::from_vec(self.input, data)
            }),
            LayerSpec::Pool { time, freq } => want_input.then(|| pool_backward(self, grad_out, time, freq)),
        }
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn conv_forward(layer: &Layer, x: &Tensor, kt: usize, kf: usize) -> Tensor {
    let [cin, _, fin] = layer.input;
    let [cout, tout, fout] = layer.output;
    let mut out = Tensor::zeros(layer.output);
    for co in 0..cout {
        let plane = &mut out.data[co * tout * fout..(co + 1) * tout * fout];
        plane.fill(layer.bias[co]);
        for ci in 0..cin {
            let src = &x.data[ci * x.shape[1] * fin..(ci + 1) * x.shape[1] * fin];
            for dt in 0..kt {
                for df in 0..kf {
                    let w = layer.weights[((co * cin + ci) * kt + dt) * kf + df];
                    for t in 0..tout {
                        let row = &src[(t + dt) * fin + df..(t + dt) * fin + df + fout];
                        axpy(w, row, &mut plane[t * fout..(t + 1) * fout]);
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    layer: &Layer,
    x: &Tensor,
    grad_out: &Tensor,
    grad: &mut LayerGrad,
    want_input: bool,
    kt: usize,
    kf: usize,
) -> Option<Tensor> {
    let [cin, tin, fin] = layer.input;
    let [cout, tout, fout] = layer.output;
    let mut gx = want_input.then(|| Tensor::zeros(layer.input));
    for co in 0..cout {
        let gplane = &grad_out.data[co * tout * fout..(co + 1) * tout * fout];
        grad.bias[co] += gplane.iter().sum::<f64>();
        for ci in 0..cin {
            let src = &x.data[ci * tin * fin..(ci + 1) * tin * fin];
            for dt in 0..kt {
                for df in 0..kf {
                    let widx = ((co * cin + ci) * kt + dt) * kf + df;
                    let mut acc = 0.0;
                    for t in 0..tout {
                        let row = &src[(t + dt) * fin + df..(t + dt) * fin + df + fout];
                        acc += dot(row, &gplane[t * fout..(t + 1) * fout]);
                    }
                    grad.weights[widx] += acc;
                    if let Some(gx) = gx.as_mut() {
                        let w = layer.weights[widx];
                        let dst = &mut gx.data[ci * tin * fin..(ci + 1) * tin * fin];
                        for t in 0..tout {
                            let start = (t + dt) * fin + df;
                            axpy(w, &gplane[t * fout..(t + 1) * fout], &mut dst[start..start + fout]);
                        }
                    }
                }
            }
        }
    }
    gx
}

fn pool_forward(layer: &Layer, x: &Tensor, pt: usize, pf: usize) -> Tensor {
    let [c, tin, fin] = layer.input;
    let [_, tout, fout] = layer.output;
    let scale = 1.0 / (pt * pf) as f64;
    let mut out = Tensor::zeros(layer.output);
    for ch in 0..c {
        for t in 0..tout {
            for f in 0..fout {
                let mut acc = 0.0;
                for dt in 0..pt {
                    for df in 0..pf {
                        acc += x.data[(ch * tin + t * pt + dt) * fin + f * pf + df];
                    }
                }
                out.data[(ch * tout + t) * fout + f] = acc * scale;
            }
        }
    }
    out
}

fn pool_backward(layer: &Layer, grad_out: &Tensor, pt: usize, pf: usize) -> Tensor {
    let [c, tin, fin] = layer.input;
    let [_, tout, fout] = layer.output;
    let scale = 1.0 / (pt * pf) as f64;
    let mut gx = Tensor::zeros(layer.input);
    for ch in 0..c {
        for t in 0..tout {
            for f in 0..fout {
                let g = grad_out.data[(ch * tout + t) * fout + f] * scale;
                for dt in 0..pt {
                    for df in 0..pf {
                        gx.data[(ch * tin + t * pt + dt) * fin + f * pf + df] = g;
                    }
                }
            }
        }
    }
    gx
}
