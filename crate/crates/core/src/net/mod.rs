//! Shared-trunk convolutional network with onset, intermediate and offset
//! heads.

mod gradcheck;
mod layers;
mod noise;
mod weights;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationMatrix, Stream};
use crate::error::{Error, Result};
use crate::frontend::{ContextWindow, FilteredSpectrogram};
use crate::notes::NUM_KEYS;

pub use gradcheck::{gradient_check, layer_gradient_check, GradCheckReport, LayerCheck};
pub use layers::{elu, sigmoid, Layer, LayerGrad, LayerSpec, Shape, Tensor};
pub use noise::{NoiseConfig, NoiseSampler};
pub use weights::{load_weights, read_weights, save_weights, write_weights};

/// Outputs per frame: 88 keys x 3 streams, key-major.
pub const OUTPUTS: usize = NUM_KEYS * 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heads {
    pub onset: Vec<LayerSpec>,
    pub intermediate: Vec<LayerSpec>,
    pub offset: Vec<LayerSpec>,
}

/// Layer manifest of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// `[1, context_frames, num_bins]`.
    pub input: Shape,
    pub trunk: Vec<LayerSpec>,
    pub heads: Heads,
}

impl Architecture {
    /// Two shared conv layers and 1x2 frequency pooling, then three
    /// conv + dense branches. The onset and offset branches use
    /// time-elongated kernels, the intermediate branch a
    /// frequency-elongated one.
    pub fn reference(context: usize, bins: usize) -> Self {
        let head = |time, freq, flat| {
            vec![
                LayerSpec::Conv { channels: 6, time, freq },
                LayerSpec::Elu,
                LayerSpec::Dense { inputs: flat, outputs: NUM_KEYS },
                LayerSpec::Sigmoid,
            ]
        };
        let trunk = vec![
            LayerSpec::Conv { channels: 16, time: 3, freq: 7 },
            LayerSpec::Elu,
            LayerSpec::Conv { channels: 16, time: 3, freq: 5 },
            LayerSpec::Elu,
            LayerSpec::Pool { time: 1, freq: 2 },
        ];
        // trunk output: 16 x (context - 4) x ((bins - 10) / 2)
        let t = context.saturating_sub(4);
        let f = bins.saturating_sub(10) / 2;
        let flat = |kt: usize, kf: usize| 6 * t.saturating_sub(kt - 1) * f.saturating_sub(kf - 1);
        Architecture {
            input: [1, context, bins],
            trunk,
            heads: Heads {
                onset: head(5, 3, flat(5, 3)),
                intermediate: head(3, 7, flat(3, 7)),
                offset: head(5, 3, flat(5, 3)),
            },
        }
    }

    /// Every head feeds straight from its input into a dense layer.
    pub fn dense_only(context: usize, bins: usize) -> Self {
        let head = || {
            vec![
                LayerSpec::Dense { inputs: context * bins, outputs: NUM_KEYS },
                LayerSpec::Sigmoid,
            ]
        };
        Architecture {
            input: [1, context, bins],
            trunk: Vec::new(),
            heads: Heads {
                onset: head(),
                intermediate: head(),
                offset: head(),
            },
        }
    }

    fn head(&self, stream: Stream) -> &[LayerSpec] {
        match stream {
            Stream::Onset => &self.heads.onset,
            Stream::Intermediate => &self.heads.intermediate,
            Stream::Offset => &self.heads.offset,
        }
    }
}

/// A network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    trunk: Vec<Layer>,
    heads: [Vec<Layer>; 3],
}

/// Parameter gradients, in [`NetworkParams::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<LayerGrad>,
}

/// One training pair: an input window and its 88 x 3 target row.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub window: ContextWindow,
    pub target: Vec<f64>,
}

impl NetworkParams {
    /// All parameters zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let mut index = 0;
        let build = |specs: &[LayerSpec], input: Shape, index: &mut usize| -> Result<(Vec<Layer>, Shape)> {
            let mut shape = input;
            let mut out = Vec::with_capacity(specs.len());
            for &spec in specs {
                let layer = Layer::new(spec, shape, *index)?;
                shape = layer.output;
                out.push(layer);
                *index += 1;
            }
            Ok((out, shape))
        };
        let (trunk, trunk_out) = build(&arch.trunk, arch.input, &mut index)?;
        let mut heads: [Vec<Layer>; 3] = Default::default();
        for stream in Stream::ALL {
            let specs = arch.head(stream);
            let start = index;
            let (layers, out) = build(specs, trunk_out, &mut index)?;
            let tail_ok = specs.len() >= 2
                && matches!(specs[specs.len() - 1], LayerSpec::Sigmoid)
                && matches!(specs[specs.len() - 2], LayerSpec::Dense { .. })
                && out == [NUM_KEYS, 1, 1];
            if !tail_ok {
                return Err(Error::LayerShape {
                    layer: start + specs.len().saturating_sub(1),
                    kind: specs.last().map_or("head", |s| s.kind()),
                    detail: format!("{stream:?} head must end in a dense layer of {NUM_KEYS} units followed by a sigmoid"),
                });
            }
            heads[stream.index()] = layers;
        }
        Ok(NetworkParams { arch, trunk, heads })
    }

    /// He-normal weights, zero biases, deterministic in `seed`.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in params.layers_mut() {
            if layer.spec.is_trainable() {
                let std = (2.0 / layer.fan_in() as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("finite std");
                for w in layer.weights.iter_mut() {
                    *w = normal.sample(&mut rng);
                }
            }
        }
        Ok(params)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_shape(&self) -> Shape {
        self.arch.input
    }

    /// All layers: trunk, then onset, intermediate and offset heads.
    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk.iter().chain(self.heads.iter().flatten())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunk.iter_mut().chain(self.heads.iter_mut().flatten())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Layer::param_count).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            layers: self.layers().map(Layer::zero_grad).collect(),
        }
    }

    fn input_tensor(&self, window: &ContextWindow) -> Result<Tensor> {
        let [_, rows, cols] = self.arch.input;
        if window.rows != rows || window.cols != cols {
            let first = self.layers().next().expect("a network has layers");
            return Err(Error::LayerShape {
                layer: 0,
                kind: first.spec.kind(),
                detail: format!("expected a {rows}x{cols} input window, got {}x{}", window.rows, window.cols),
            });
        }
        Ok(Tensor::from_vec(
            self.arch.input,
            window.values.iter().map(|&v| f64::from(v)).collect(),
        ))
    }

    /// Noise-free output logits, key-major `[key * 3 + stream]`.
    pub fn logits(&self, window: &ContextWindow) -> Result<Vec<f64>> {
        let x = self.input_tensor(window)?;
        let shared = run::<ChaCha8Rng>(&self.trunk, x, None).output;
        let mut out = vec![0.0; OUTPUTS];
        for (s, head) in self.heads.iter().enumerate() {
            let z = run::<ChaCha8Rng>(&head[..head.len() - 1], shared.clone(), None).output;
            for (k, &v) in z.data.iter().enumerate() {
                out[k * 3 + s] = v;
            }
        }
        Ok(out)
    }

    /// Pseudo-probabilities, key-major `[key * 3 + stream]`.
    pub fn forward(&self, window: &ContextWindow) -> Result<Vec<f64>> {
        Ok(self.logits(window)?.into_iter().map(sigmoid).collect())
    }

    /// Mean binary cross-entropy over all outputs and examples, without noise.
    pub fn loss(&self, batch: &[Example]) -> Result<f64> {
        let mut total = 0.0;
        for ex in batch {
            let z = self.logits(&ex.window)?;
            check_target(&ex.target)?;
            total += z.iter().zip(&ex.target).map(|(&z, &y)| bce_with_logits(z, y)).sum::<f64>();
        }
        Ok(total / (batch.len() * OUTPUTS) as f64)
    }

    /// Noise-free loss together with the sign of every ELU input, so that
    /// callers can tell when a perturbation moved an input across zero.
    pub(crate) fn loss_and_elu_signs(&self, batch: &[Example]) -> Result<(f64, Vec<bool>)> {
        let mut total = 0.0;
        let mut signs = Vec::new();
        let mut record = |layers: &[Layer], pass: &Pass| {
            for (layer, input) in layers.iter().zip(&pass.inputs) {
                if matches!(layer.spec, LayerSpec::Elu) {
                    signs.extend(input.data.iter().map(|&v| v > 0.0));
                }
            }
        };
        for ex in batch {
            check_target(&ex.target)?;
            let x = self.input_tensor(&ex.window)?;
            let shared = run::<ChaCha8Rng>(&self.trunk, x, None);
            record(&self.trunk, &shared);
            for (s, head) in self.heads.iter().enumerate() {
                let body = &head[..head.len() - 1];
                let pass = run::<ChaCha8Rng>(body, shared.output.clone(), None);
                record(body, &pass);
                for (k, &z) in pass.output.data.iter().enumerate() {
                    total += bce_with_logits(z, ex.target[k * 3 + s]);
                }
            }
        }
        Ok((total / (batch.len() * OUTPUTS) as f64, signs))
    }

    /// Loss and parameter gradients over a batch. Noise is injected after
    /// every ELU when a sampler is given.
    pub fn loss_and_grads<R: Rng>(
        &self,
        batch: &[Example],
        mut noise: Option<(&NoiseSampler, &mut R)>,
    ) -> Result<(f64, Grads)> {
        if batch.is_empty() {
            return Err(Error::dimension("empty batch"));
        }
        let mut grads = self.zero_grads();
        let scale = 1.0 / (batch.len() * OUTPUTS) as f64;
        let trunk_len = self.trunk.len();
        let mut total = 0.0;
        for (b, ex) in batch.iter().enumerate() {
            check_target(&ex.target)?;
            let x = self.input_tensor(&ex.window)?;
            let trunk_pass = run(&self.trunk, x, noise.as_mut().map(|(s, r)| (*s, &mut **r)));
            let mut shared_grad = Tensor::zeros(trunk_pass.output.shape);
            let mut example_loss = 0.0;
            let mut offset = trunk_len;
            for (s, head) in self.heads.iter().enumerate() {
                let body = &head[..head.len() - 1];
                let pass = run(body, trunk_pass.output.clone(), noise.as_mut().map(|(s, r)| (*s, &mut **r)));
                let z = &pass.output;
                let mut gz = Tensor::zeros(z.shape);
                for (k, &zk) in z.data.iter().enumerate() {
                    let y = ex.target[k * 3 + s];
                    example_loss += bce_with_logits(zk, y);
                    gz.data[k] = (sigmoid(zk) - y) * scale;
                }
                let g = pass.backward(body, gz, &mut grads.layers[offset..offset + body.len()], true);
                for (acc, v) in shared_grad.data.iter_mut().zip(&g.expect("requested").data) {
                    *acc += v;
                }
                offset += head.len();
            }
            if !example_loss.is_finite() {
                return Err(Error::NonFiniteLoss { batch: b });
            }
            total += example_loss;
            trunk_pass.backward(&self.trunk, shared_grad, &mut grads.layers[..trunk_len], false);
        }
        Ok((total * scale, grads))
    }

    /// `params -= learning_rate * grads`.
    pub fn apply_grads(&mut self, grads: &Grads, learning_rate: f64) {
        for (layer, g) in self.layers_mut().zip(&grads.layers) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= learning_rate * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= learning_rate * gb;
            }
        }
    }

    /// One SGD step on `batch`; returns the (noisy) loss before the update.
    pub fn train_step(&mut self, batch: &[Example], learning_rate: f64, noise: NoiseConfig, seed: u64) -> Result<f64> {
        let (loss, grads) = if noise.is_disabled() {
            self.loss_and_grads::<ChaCha8Rng>(batch, None)?
        } else {
            let sampler = noise.samplers()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            self.loss_and_grads(batch, Some((&sampler, &mut rng)))?
        };
        if learning_rate != 0.0 {
            self.apply_grads(&grads, learning_rate);
        }
        Ok(loss)
    }

    /// Runs the network on the context window of every frame.
    pub fn infer_piece(&self, spec: &FilteredSpectrogram) -> Result<ActivationMatrix> {
        let context = self.arch.input[1];
        let rows: Vec<Vec<f64>> = (0..spec.num_frames())
            .into_par_iter()
            .map(|t| self.forward(&spec.context_window(t, context)?))
            .collect::<Result<_>>()?;
        let values = rows.into_iter().flatten().map(|v| v as f32).collect();
        ActivationMatrix::from_values(spec.num_frames(), spec.frame_rate(), values)
    }
}

fn check_target(target: &[f64]) -> Result<()> {
    if target.len() != OUTPUTS {
        return Err(Error::dimension(format!(
            "target row has {} values, expected {OUTPUTS}",
            target.len()
        )));
    }
    Ok(())
}

pub(crate) fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Forward pass through a layer chain, keeping what backward needs.
struct Pass {
    /// Input of each layer.
    inputs: Vec<Tensor>,
    /// Raw output of each layer, before noise.
    raw: Vec<Tensor>,
    /// Multiplicative noise applied after each layer, if any.
    masks: Vec<Option<Vec<f64>>>,
    output: Tensor,
}

fn run<R: Rng + ?Sized>(layers: &[Layer], x: Tensor, mut noise: Option<(&NoiseSampler, &mut R)>) -> Pass {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut raw = Vec::with_capacity(layers.len());
    let mut masks = Vec::with_capacity(layers.len());
    let mut cur = x;
    for layer in layers {
        let y = layer.forward(&cur);
        let (next, mask) = match (&layer.spec, noise.as_mut()) {
            (LayerSpec::Elu, Some((sampler, rng))) => {
                let mask: Vec<f64> = (0..y.data.len()).map(|_| sampler.multiplicative(&mut **rng)).collect();
                let data = y
                    .data
                    .iter()
                    .zip(&mask)
                    .map(|(&v, &m)| v * m + sampler.additive(&mut **rng))
                    .collect();
                (Tensor::from_vec(y.shape, data), Some(mask))
            }
            _ => (y.clone(), None),
        };
        inputs.push(cur);
        raw.push(y);
        masks.push(mask);
        cur = next;
    }
    Pass {
        inputs,
        raw,
        masks,
        output: cur,
    }
}

impl Pass {
    fn backward(&self, layers: &[Layer], grad_out: Tensor, grads: &mut [LayerGrad], want_input: bool) -> Option<Tensor> {
        let mut g = grad_out;
        for i in (0..layers.len()).rev() {
            if let Some(mask) = &self.masks[i] {
                for (gi, m) in g.data.iter_mut().zip(mask) {
                    *gi *= m;
                }
            }
            let need = want_input || i > 0;
            match layers[i].backward(&self.inputs[i], &self.raw[i], &g, &mut grads[i], need) {
                Some(next) => g = next,
                None => return None,
            }
        }
        Some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(rows: usize, cols: usize, seed: u64) -> ContextWindow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ContextWindow {
            rows,
            cols,
            center_frame: 0,
            values: (0..rows * cols).map(|_| rng.random_range(0.0..4.0)).collect(),
        }
    }

    #[test]
    fn reference_param_count() {
        let net = NetworkParams::zeros(Architecture::reference(11, 144)).unwrap();
        assert_eq!(net.param_count(), 376_346);
        assert!(net.param_count() < 400_000);
    }

    #[test]
    fn zero_network_outputs_half() {
        let net = NetworkParams::zeros(Architecture::reference(11, 144)).unwrap();
        let out = net.forward(&window(11, 144, 1)).unwrap();
        assert_eq!(out.len(), OUTPUTS);
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn random_network_outputs_in_open_interval_and_repeat() {
        let net = NetworkParams::init(Architecture::reference(11, 144), 3).unwrap();
        let w = window(11, 144, 2);
        let a = net.forward(&w).unwrap();
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
        let again = NetworkParams::init(Architecture::reference(11, 144), 3).unwrap();
        let b = again.forward(&w).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let net = NetworkParams::zeros(Architecture::reference(11, 144)).unwrap();
        match net.forward(&window(9, 144, 0)) {
            Err(Error::LayerShape { layer: 0, kind: "conv", .. }) => {}
            other => panic!("{other:?}"),
        }
        let mut arch = Architecture::reference(11, 144);
        arch.heads.offset[2] = LayerSpec::Dense { inputs: 10, outputs: 88 };
        match NetworkParams::zeros(arch) {
            Err(Error::LayerShape { layer: 15, kind: "dense", .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn static_shapes_match_forward() {
        let net = NetworkParams::init(Architecture::reference(11, 144), 0).unwrap();
        let x = net.input_tensor(&window(11, 144, 5)).unwrap();
        let pass = run::<ChaCha8Rng>(&net.trunk, x, None);
        for (layer, y) in net.trunk.iter().zip(&pass.raw) {
            assert_eq!(layer.output, y.shape);
        }
        assert_eq!(pass.output.shape, [16, 7, 67]);
    }

    fn tiny_batch() -> Vec<Example> {
        (0..2)
            .map(|i| {
                let mut target = vec![0.0; OUTPUTS];
                target[i * 7] = 1.0;
                target[40 * 3 + 1] = 1.0;
                Example {
                    window: window(5, 12, 10 + i as u64),
                    target,
                }
            })
            .collect()
    }

    fn small_arch() -> Architecture {
        Architecture {
            input: [1, 5, 12],
            trunk: vec![
                LayerSpec::Conv { channels: 3, time: 3, freq: 3 },
                LayerSpec::Elu,
                LayerSpec::Pool { time: 1, freq: 2 },
            ],
            heads: Heads {
                onset: vec![LayerSpec::Dense { inputs: 45, outputs: 88 }, LayerSpec::Sigmoid],
                intermediate: vec![LayerSpec::Dense { inputs: 45, outputs: 88 }, LayerSpec::Sigmoid],
                offset: vec![LayerSpec::Dense { inputs: 45, outputs: 88 }, LayerSpec::Sigmoid],
            },
        }
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let mut net = NetworkParams::init(small_arch(), 1).unwrap();
        let before = net.clone();
        let loss = net.train_step(&tiny_batch(), 0.0, NoiseConfig::default(), 4).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn training_loss_decreases_on_fixed_batch() {
        let mut net = NetworkParams::init(small_arch(), 1).unwrap();
        let batch = tiny_batch();
        let mut losses = Vec::new();
        for step in 0..50 {
            losses.push(net.train_step(&batch, 0.5, NoiseConfig::DISABLED, step).unwrap());
        }
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{losses:?}");
        }
        assert!(losses[49] < 0.5 * losses[0]);
    }

    #[test]
    fn noise_free_training_is_deterministic() {
        let batch = tiny_batch();
        let mut a = NetworkParams::init(small_arch(), 1).unwrap();
        let mut b = a.clone();
        a.train_step(&batch, 0.1, NoiseConfig::DISABLED, 1).unwrap();
        b.train_step(&batch, 0.1, NoiseConfig::DISABLED, 999).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_training_is_seeded() {
        let batch = tiny_batch();
        let noise = NoiseConfig { p_m: 0.2, p_a: 0.05 };
        let mut a = NetworkParams::init(small_arch(), 1).unwrap();
        let mut b = a.clone();
        let mut c = a.clone();
        let la = a.train_step(&batch, 0.1, noise, 5).unwrap();
        let lb = b.train_step(&batch, 0.1, noise, 5).unwrap();
        let lc = c.train_step(&batch, 0.1, noise, 6).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
        assert_ne!(la, lc);
    }

    #[test]
    fn non_finite_loss_reports_index() {
        let net = NetworkParams::init(small_arch(), 1).unwrap();
        let mut batch = tiny_batch();
        batch[1].target[0] = f64::NAN;
        match net.loss_and_grads::<ChaCha8Rng>(&batch, None) {
            Err(Error::NonFiniteLoss { batch: 1 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut net = NetworkParams::init(small_arch(), 1).unwrap();
        assert!(net.train_step(&[], 0.1, NoiseConfig::DISABLED, 0).is_err());
    }
}
