use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::batchnorm::{self, BatchNormParams, BnBatchStats, BnCache, BnMode};
use super::conv::{self, ConvParams};
use super::dense::{self, DenseParams};
use super::dropout::bernoulli_mask;
use super::gru::{self, GruCache, GruParams};
use super::pool;
use super::spec::Stage;
use super::{Activation, LayerSpec, NetworkSpec};
use crate::rng::{self, Rng};
use crate::train::bce_loss;
use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and dropout.
    Train,
    /// Running statistics, no dropout.
    Inference,
}

impl Mode {
    fn bn(self) -> BnMode {
        match self {
            Mode::Train => BnMode::Train,
            Mode::Inference => BnMode::Inference,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layer<T> {
    Conv {
        conv: ConvParams<T>,
        bn: BatchNormParams<T>,
        pool: usize,
    },
    Gru {
        gru: GruParams<T>,
        recurrent_dropout: f64,
    },
    Dense {
        dense: DenseParams<T>,
        activation: Activation,
    },
    BatchNorm(BatchNormParams<T>),
    Dropout(f64),
    TemporalMaxPool,
}

/// Activation flowing between layers. Maps are `[B, M, F, T]`, frames `[B, T, D]`.
#[derive(Debug, Clone)]
pub(crate) enum Act<T> {
    Maps {
        maps: usize,
        bands: usize,
        frames: usize,
        data: Vec<T>,
    },
    Frames {
        frames: usize,
        dim: usize,
        data: Vec<T>,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum Entry<T> {
    Stack {
        maps: usize,
        bands: usize,
        frames: usize,
    },
    Conv {
        input: Vec<T>,
        bands: usize,
        frames: usize,
        bn: BnCache<T>,
        bn_out: Vec<T>,
        arg: Vec<u8>,
    },
    Dropout {
        mask: Vec<T>,
    },
    Gru {
        input: Vec<T>,
        frames: usize,
        cache: GruCache<T>,
    },
    Dense {
        input: Vec<T>,
        output: Vec<T>,
        rows: usize,
    },
    BatchNorm {
        cache: BnCache<T>,
        rows: usize,
    },
    TimePool {
        arg: Vec<u32>,
        frames: usize,
        dim: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Forward<T> {
    pub batch: usize,
    pub act: Act<T>,
    pub tape: Vec<(usize, Entry<T>)>,
    pub bn_stats: Vec<(usize, BnBatchStats<T>)>,
}

#[derive(Debug, Clone)]
struct Tape<T> {
    forward: Forward<T>,
    output: Vec<T>,
    out_frames: usize,
}

/// Per-parameter gradients, ordered like [`Network::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    /// Adds another gradient set (e.g. from a second mini-batch shard).
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }
}

/// A named parameter or state tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub trainable: bool,
}

/// Instantiated network: parameters, batch-norm running statistics and the
/// cached forward pass needed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetworkSpec,
    pub(crate) layers: Vec<Layer<T>>,
    tape: Option<Tape<T>>,
}

impl<T: Real> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers
    }
}

fn he_normal<T: Real>(len: usize, fan_in: usize, seed: u64, layer: usize, tensor: u64) -> Vec<T> {
    let mut rng = rng::stream(seed, &[0x1417, layer as u64, tensor]);
    let std = libm::sqrt(2.0 / fan_in.max(1) as f64);
    (0..len)
        .map(|_| T::of(rng::gaussian(&mut rng) * std))
        .collect()
}

impl<T: Real> Network<T> {
    /// He-initialized weights, zero biases, unit batch-norm scale.
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        let stages = spec.stages()?;
        let layers = spec
            .layers
            .iter()
            .zip(&stages)
            .enumerate()
            .map(|(i, (ls, stage))| {
                let dim = match *stage {
                    Stage::Maps { maps, bands } => maps * bands,
                    Stage::Frames { dim } => dim,
                };
                match *ls {
                    LayerSpec::Conv {
                        maps,
                        kernel,
                        freq_pool,
                    } => {
                        let in_maps = match *stage {
                            Stage::Maps { maps, .. } => maps,
                            Stage::Frames { .. } => unreachable!("validated"),
                        };
                        let mut conv = ConvParams::zeros(maps, in_maps, kernel);
                        conv.weight = he_normal(conv.weight.len(), conv.fan_in(), spec.seed, i, 0);
                        Layer::Conv {
                            conv,
                            bn: BatchNormParams::new(maps),
                            pool: freq_pool,
                        }
                    }
                    LayerSpec::Recurrent {
                        units,
                        recurrent_dropout,
                    } => {
                        let mut gru = GruParams::zeros(dim, units);
                        gru.w = he_normal(gru.w.len(), dim, spec.seed, i, 0);
                        gru.u = he_normal(gru.u.len(), units, spec.seed, i, 1);
                        Layer::Gru {
                            gru,
                            recurrent_dropout,
                        }
                    }
                    LayerSpec::Dense { units, activation } => {
                        let mut dense = DenseParams::zeros(dim, units);
                        dense.w = he_normal(dense.w.len(), dim, spec.seed, i, 0);
                        Layer::Dense { dense, activation }
                    }
                    LayerSpec::BatchNorm => Layer::BatchNorm(BatchNormParams::new(dim)),
                    LayerSpec::Dropout { rate } => Layer::Dropout(rate),
                    LayerSpec::TemporalMaxPool => Layer::TemporalMaxPool,
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
            tape: None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Copy of the parameters and running statistics without any cached pass.
    pub fn snapshot(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            tape: None,
        }
    }

    /// Element-type conversion (e.g. to `f64` for gradient checks).
    pub fn cast<U: Real>(&self) -> Network<U> {
        let mut out = Network::<U>::new(&self.spec).expect("spec already validated");
        for (dst, src) in out.tensors_mut().into_iter().zip(self.named_tensors()) {
            *dst.1 = src.data.iter().map(|v| U::of(v.f64())).collect();
        }
        out
    }

    fn tensor_refs(&self) -> Vec<(String, Vec<usize>, &Vec<T>, bool)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv { conv, bn, .. } => {
                    let (kf, kt) = conv.kernel;
                    out.push((
                        format!("{i}.conv.weight"),
                        vec![conv.out_maps, conv.in_maps, kf, kt],
                        &conv.weight,
                        true,
                    ));
                    out.push((
                        format!("{i}.conv.bias"),
                        vec![conv.out_maps],
                        &conv.bias,
                        true,
                    ));
                    push_bn(&mut out, i, bn);
                }
                Layer::Gru { gru, .. } => {
                    out.push((
                        format!("{i}.gru.w"),
                        vec![3 * gru.units, gru.input],
                        &gru.w,
                        true,
                    ));
                    out.push((
                        format!("{i}.gru.u"),
                        vec![3 * gru.units, gru.units],
                        &gru.u,
                        true,
                    ));
                    out.push((format!("{i}.gru.b"), vec![3 * gru.units], &gru.b, true));
                }
                Layer::Dense { dense, .. } => {
                    out.push((
                        format!("{i}.dense.w"),
                        vec![dense.units, dense.input],
                        &dense.w,
                        true,
                    ));
                    out.push((format!("{i}.dense.b"), vec![dense.units], &dense.b, true));
                }
                Layer::BatchNorm(bn) => push_bn(&mut out, i, bn),
                Layer::Dropout(_) | Layer::TemporalMaxPool => {}
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(bool, &mut Vec<T>)> {
        let mut out: Vec<(bool, &mut Vec<T>)> = Vec::new();
        for layer in self.layers.iter_mut() {
            match layer {
                Layer::Conv { conv, bn, .. } => {
                    out.push((true, &mut conv.weight));
                    out.push((true, &mut conv.bias));
                    out.push((true, &mut bn.gamma));
                    out.push((true, &mut bn.beta));
                    out.push((false, &mut bn.running_mean));
                    out.push((false, &mut bn.running_var));
                }
                Layer::Gru { gru, .. } => {
                    out.push((true, &mut gru.w));
                    out.push((true, &mut gru.u));
                    out.push((true, &mut gru.b));
                }
                Layer::Dense { dense, .. } => {
                    out.push((true, &mut dense.w));
                    out.push((true, &mut dense.b));
                }
                Layer::BatchNorm(bn) => {
                    out.push((true, &mut bn.gamma));
                    out.push((true, &mut bn.beta));
                    out.push((false, &mut bn.running_mean));
                    out.push((false, &mut bn.running_var));
                }
                Layer::Dropout(_) | Layer::TemporalMaxPool => {}
            }
        }
        out
    }

    /// Every parameter and running statistic, in a stable order.
    pub fn named_tensors(&self) -> Vec<NamedTensor<T>> {
        self.tensor_refs()
            .into_iter()
            .map(|(name, shape, data, trainable)| NamedTensor {
                name,
                shape,
                data: data.clone(),
                trainable,
            })
            .collect()
    }

    /// Replaces all tensors by name; every tensor must be present with the right length.
    pub fn load_named_tensors(&mut self, tensors: &[NamedTensor<T>]) -> Result<()> {
        let names: Vec<(String, usize)> = self
            .tensor_refs()
            .into_iter()
            .map(|(n, _, d, _)| (n, d.len()))
            .collect();
        let mut updates = Vec::with_capacity(names.len());
        for (name, len) in &names {
            let t = tensors
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| Error::Shape(format!("missing tensor '{name}'")))?;
            if t.data.len() != *len {
                return Err(Error::Shape(format!(
                    "tensor '{name}' has {} values, expected {len}",
                    t.data.len()
                )));
            }
            updates.push(t.data.clone());
        }
        for ((_, dst), src) in self.tensors_mut().into_iter().zip(updates) {
            *dst = src;
        }
        self.tape = None;
        Ok(())
    }

    /// Trainable parameters as `(name, values)`.
    pub fn parameters(&self) -> Vec<(String, &[T])> {
        self.tensor_refs()
            .into_iter()
            .filter(|t| t.3)
            .map(|(n, _, d, _)| (n, d.as_slice()))
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.tensors_mut()
            .into_iter()
            .filter(|t| t.0)
            .map(|t| t.1)
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.1.len()).sum()
    }

    /// Inference-mode forward pass over `[B, F, T]`, returning `[B, K, T]`
    /// (or `[B, K, 1]` for tagging specs). Read-only.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let fwd = self.run(x, Mode::Inference, None, None)?;
        let (batch, out_frames, data) = Self::output_of(fwd)?;
        self.output_tensor(batch, out_frames, &data)
    }

    /// Training-mode forward pass; caches intermediates for [`Network::backward`]
    /// and updates batch-norm running statistics.
    pub fn forward_train(&mut self, x: &Tensor<T>, rng: &mut Rng) -> Result<Tensor<T>> {
        let mut fwd = self.run(x, Mode::Train, Some(rng), None)?;
        for (i, stats) in core::mem::take(&mut fwd.bn_stats) {
            match &mut self.layers[i] {
                Layer::Conv { bn, .. } | Layer::BatchNorm(bn) => {
                    batchnorm::update_running(bn, &stats)
                }
                _ => unreachable!("batch statistics only come from normalizing layers"),
            }
        }
        let (out_frames, output) = match &fwd.act {
            Act::Frames { frames, data, .. } => (*frames, data.clone()),
            Act::Maps { .. } => return Err(Error::State("network ended on feature maps".into())),
        };
        let batch = fwd.batch;
        let out = self.output_tensor(batch, out_frames, &output)?;
        self.tape = Some(Tape {
            forward: fwd,
            output,
            out_frames,
        });
        Ok(out)
    }

    /// Masked binary cross-entropy and its exact gradients for the last
    /// [`Network::forward_train`] call.
    ///
    /// `targets` is `[B, K, T']`; `mask` has one entry per `(batch, frame)`.
    pub fn backward(&mut self, targets: &Tensor<T>, mask: &[u8]) -> Result<(Gradients<T>, T)> {
        let tape = self
            .tape
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let (batch, out_frames, k) = (tape.forward.batch, tape.out_frames, self.spec.classes);
        if targets.shape() != [batch, k, out_frames] || mask.len() != batch * out_frames {
            return Err(Error::Shape(format!(
                "targets {:?} / mask {} do not match output [{batch}, {k}, {out_frames}]",
                targets.shape(),
                mask.len()
            )));
        }
        let probs = self.output_tensor(batch, out_frames, &tape.output)?;
        let full_mask: Vec<u8> = (0..batch * k * out_frames)
            .map(|i| {
                let (b, t) = (i / (k * out_frames), i % out_frames);
                mask[b * out_frames + t]
            })
            .collect();
        let (loss, grad) = bce_loss(probs.data(), targets.data(), &full_mask);
        let d_out = Tensor::from_vec(&[batch, k, out_frames], grad)?;
        let (grads, _) = self.backward_from_output(&d_out, false)?;
        Ok((grads, loss))
    }

    /// Backpropagates an arbitrary upstream gradient on the `[B, K, T']`
    /// output of the cached pass. Returns parameter gradients and, if
    /// requested, the gradient with respect to the `[B, F, T]` input.
    pub fn backward_from_output(
        &mut self,
        d_output: &Tensor<T>,
        need_input_grad: bool,
    ) -> Result<(Gradients<T>, Option<Tensor<T>>)> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let (batch, out_frames, k) = (tape.forward.batch, tape.out_frames, self.spec.classes);
        if d_output.shape() != [batch, k, out_frames] {
            return Err(Error::Shape(format!(
                "output gradient {:?}",
                d_output.shape()
            )));
        }
        let mut g = vec![T::zero(); d_output.len()];
        for b in 0..batch {
            for c in 0..k {
                for t in 0..out_frames {
                    g[(b * out_frames + t) * k + c] = d_output.data()[(b * k + c) * out_frames + t];
                }
            }
        }
        let (grads, dx) = self.backprop(tape.forward.tape, g, batch, need_input_grad);
        let dx = match dx {
            Some(d) => {
                let bands = self.spec.input_bands;
                let frames = d.len() / (batch * bands);
                Some(Tensor::from_vec(&[batch, bands, frames], d)?)
            }
            None => None,
        };
        Ok((grads, dx))
    }

    fn output_of(fwd: Forward<T>) -> Result<(usize, usize, Vec<T>)> {
        match fwd.act {
            Act::Frames { frames, data, .. } => Ok((fwd.batch, frames, data)),
            Act::Maps { .. } => Err(Error::State("network ended on feature maps".into())),
        }
    }

    /// `[B, T, K]` frame layout to the public `[B, K, T]`.
    fn output_tensor(&self, batch: usize, frames: usize, data: &[T]) -> Result<Tensor<T>> {
        let k = self.spec.classes;
        let mut out = vec![T::zero(); data.len()];
        for b in 0..batch {
            for t in 0..frames {
                for c in 0..k {
                    out[(b * k + c) * frames + t] = data[(b * frames + t) * k + c];
                }
            }
        }
        Tensor::from_vec(&[batch, k, frames], out)
    }

    /// Runs layers `0..stop` (all layers when `stop` is `None`) and records a tape.
    pub(crate) fn run(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
        stop: Option<usize>,
    ) -> Result<Forward<T>> {
        let s = x.shape();
        if s.len() != 3 || s[1] != self.spec.input_bands || s[0] == 0 || s[2] == 0 {
            return Err(Error::Shape(format!(
                "network expects [B, {}, T] with B, T >= 1, got {s:?}",
                self.spec.input_bands
            )));
        }
        let batch = s[0];
        let mut fwd = Forward {
            batch,
            act: Act::Maps {
                maps: 1,
                bands: s[1],
                frames: s[2],
                data: x.data().to_vec(),
            },
            tape: Vec::new(),
            bn_stats: Vec::new(),
        };
        let stop = stop.unwrap_or(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().take(stop) {
            self.step(i, layer, &mut fwd, mode, &mut rng)
                .map_err(|e| e.in_layer(i))?;
        }
        Ok(fwd)
    }

    fn step(
        &self,
        i: usize,
        layer: &Layer<T>,
        fwd: &mut Forward<T>,
        mode: Mode,
        rng: &mut Option<&mut Rng>,
    ) -> Result<()> {
        let batch = fwd.batch;
        let act = core::mem::replace(
            &mut fwd.act,
            Act::Frames {
                frames: 0,
                dim: 0,
                data: Vec::new(),
            },
        );
        // Non-conv layers consume frame-major features.
        let act = match (layer, act) {
            (Layer::Conv { .. } | Layer::Dropout(_), a) => a,
            (
                _,
                Act::Maps {
                    maps,
                    bands,
                    frames,
                    data,
                },
            ) => {
                fwd.tape.push((
                    i,
                    Entry::Stack {
                        maps,
                        bands,
                        frames,
                    },
                ));
                Act::Frames {
                    frames,
                    dim: maps * bands,
                    data: pool::stack_batch(&data, batch, maps, bands, frames),
                }
            }
            (_, a) => a,
        };
        let need_rng = |rng: &mut Option<&mut Rng>| -> Result<()> {
            if rng.is_none() {
                return Err(Error::State(
                    "training-mode forward needs a random generator".into(),
                ));
            }
            Ok(())
        };
        fwd.act = match (layer, act) {
            (
                Layer::Conv { conv, bn, pool },
                Act::Maps {
                    maps,
                    bands,
                    frames,
                    data,
                },
            ) => {
                if maps != conv.in_maps {
                    return Err(Error::Shape(format!(
                        "conv expects {} maps, got {maps}",
                        conv.in_maps
                    )));
                }
                let y = conv::forward_batch(&data, batch, bands, frames, conv);
                let (mut z, cache, stats) = batchnorm::forward_raw(
                    &y,
                    batch,
                    conv.out_maps,
                    bands * frames,
                    bn,
                    mode.bn(),
                )?;
                if let Some(stats) = stats {
                    fwd.bn_stats.push((i, stats));
                }
                let bn_out = z.clone();
                for v in z.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
                let (pooled, arg) =
                    pool::freq_pool_batch(&z, batch * conv.out_maps, bands, frames, *pool);
                fwd.tape.push((
                    i,
                    Entry::Conv {
                        input: data,
                        bands,
                        frames,
                        bn: cache,
                        bn_out,
                        arg,
                    },
                ));
                Act::Maps {
                    maps: conv.out_maps,
                    bands: bands / pool,
                    frames,
                    data: pooled,
                }
            }
            (Layer::Dropout(rate), mut a) => {
                if mode == Mode::Train && *rate > 0.0 {
                    need_rng(rng)?;
                    let data = match &mut a {
                        Act::Maps { data, .. } | Act::Frames { data, .. } => data,
                    };
                    let mask: Vec<T> = bernoulli_mask(data.len(), *rate, rng.as_mut().unwrap());
                    for (v, &m) in data.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    fwd.tape.push((i, Entry::Dropout { mask }));
                }
                a
            }
            (
                Layer::Gru {
                    gru,
                    recurrent_dropout,
                },
                Act::Frames { frames, dim, data },
            ) => {
                if dim != gru.input {
                    return Err(Error::Shape(format!(
                        "GRU expects {} features, got {dim}",
                        gru.input
                    )));
                }
                let mask: Vec<T> = if mode == Mode::Train && *recurrent_dropout > 0.0 {
                    need_rng(rng)?;
                    bernoulli_mask(batch * gru.units, *recurrent_dropout, rng.as_mut().unwrap())
                } else {
                    Vec::new()
                };
                let cache = gru::forward_batch(&data, batch, frames, gru, None, &mask);
                let out = cache.h.clone();
                fwd.tape.push((
                    i,
                    Entry::Gru {
                        input: data,
                        frames,
                        cache,
                    },
                ));
                Act::Frames {
                    frames,
                    dim: gru.units,
                    data: out,
                }
            }
            (Layer::Dense { dense, activation }, Act::Frames { frames, dim, data }) => {
                if dim != dense.input {
                    return Err(Error::Shape(format!(
                        "dense expects {} features, got {dim}",
                        dense.input
                    )));
                }
                let rows = batch * frames;
                let y = dense::forward_rows(&data, rows, dense, *activation);
                fwd.tape.push((
                    i,
                    Entry::Dense {
                        input: data,
                        output: y.clone(),
                        rows,
                    },
                ));
                Act::Frames {
                    frames,
                    dim: dense.units,
                    data: y,
                }
            }
            (Layer::BatchNorm(bn), Act::Frames { frames, dim, data }) => {
                let rows = batch * frames;
                let (y, cache, stats) = batchnorm::forward_raw(&data, rows, dim, 1, bn, mode.bn())?;
                if let Some(stats) = stats {
                    fwd.bn_stats.push((i, stats));
                }
                fwd.tape.push((i, Entry::BatchNorm { cache, rows }));
                Act::Frames {
                    frames,
                    dim,
                    data: y,
                }
            }
            (Layer::TemporalMaxPool, Act::Frames { frames, dim, data }) => {
                let (y, arg) = pool::time_pool_batch(&data, batch, frames, dim);
                fwd.tape.push((i, Entry::TimePool { arg, frames, dim }));
                Act::Frames {
                    frames: 1,
                    dim,
                    data: y,
                }
            }
            _ => {
                return Err(Error::State(
                    "layer received an activation of the wrong kind".into(),
                ))
            }
        };
        Ok(())
    }

    /// Inference-mode batch-normalized (pre-ReLU) output of conv layer `layer`,
    /// map `map`, at the centre band and frame, with its gradient with respect
    /// to a single `[F, T]` input.
    pub(crate) fn conv_unit_gradient(
        &self,
        x: &Tensor<T>,
        layer: usize,
        map: usize,
    ) -> Result<(T, Vec<T>)> {
        let out_maps = match self.layers.get(layer) {
            Some(Layer::Conv { conv, .. }) => conv.out_maps,
            _ => {
                return Err(Error::Config(format!(
                    "layer {layer} is not a convolutional layer"
                )))
            }
        };
        if map >= out_maps {
            return Err(Error::Config(format!(
                "layer {layer} has {out_maps} maps, unit {map} requested"
            )));
        }
        let s = x.shape();
        if s.len() != 2 {
            return Err(Error::Shape(format!("expected an [F, T] input, got {s:?}")));
        }
        let x = x.clone().reshape(&[1, s[0], s[1]])?;
        let mut fwd = self.run(&x, Mode::Inference, None, Some(layer + 1))?;
        let (_, entry) = fwd.tape.pop().expect("conv layer leaves a tape entry");
        let (input, bands, frames, cache, bn_out) = match entry {
            Entry::Conv {
                input,
                bands,
                frames,
                bn,
                bn_out,
                ..
            } => (input, bands, frames, bn, bn_out),
            _ => unreachable!("conv layer records a conv entry"),
        };
        let (conv, bn) = match &self.layers[layer] {
            Layer::Conv { conv, bn, .. } => (conv, bn),
            _ => unreachable!(),
        };
        let at = (map * bands + bands / 2) * frames + frames / 2;
        let mut d = vec![T::zero(); bn_out.len()];
        d[at] = T::one();
        let (dconv, _, _) = batchnorm::backward_raw(&d, 1, out_maps, bands * frames, bn, &cache);
        let (dx, _, _) = conv::backward_batch(&input, &dconv, 1, bands, frames, conv, true);
        let (_, dx) = self.backprop(fwd.tape, dx.expect("input gradient requested"), 1, true);
        Ok((bn_out[at], dx.expect("input gradient requested")))
    }

    /// Offsets of each layer's first trainable tensor in the gradient list.
    fn grad_slots(&self) -> Vec<usize> {
        let mut slots = Vec::with_capacity(self.layers.len());
        let mut n = 0;
        for layer in &self.layers {
            slots.push(n);
            n += match layer {
                Layer::Conv { .. } => 4,
                Layer::Gru { .. } => 3,
                Layer::Dense { .. } | Layer::BatchNorm(_) => 2,
                Layer::Dropout(_) | Layer::TemporalMaxPool => 0,
            };
        }
        slots.push(n);
        slots
    }

    /// Walks a tape backwards from gradient `g` on its final activation.
    pub(crate) fn backprop(
        &self,
        tape: Vec<(usize, Entry<T>)>,
        mut g: Vec<T>,
        batch: usize,
        need_input_grad: bool,
    ) -> (Gradients<T>, Option<Vec<T>>) {
        let slots = self.grad_slots();
        let mut tensors: Vec<Vec<T>> = self
            .parameters()
            .iter()
            .map(|(_, p)| vec![T::zero(); p.len()])
            .collect();
        let entries = tape.len();
        for (pos, (i, entry)) in tape.into_iter().enumerate().rev() {
            // Input gradient of the very first entry is only needed on request.
            let need_dx = pos > 0 || need_input_grad;
            let slot = slots[i];
            match (entry, &self.layers[i]) {
                (
                    Entry::Stack {
                        maps,
                        bands,
                        frames,
                    },
                    _,
                ) => {
                    g = pool::unstack_batch(&g, batch, maps, bands, frames);
                }
                (
                    Entry::Conv {
                        input,
                        bands,
                        frames,
                        bn: cache,
                        bn_out,
                        arg,
                    },
                    Layer::Conv { conv, bn, pool: p },
                ) => {
                    let mut d = pool::freq_pool_backward(
                        &g,
                        &arg,
                        batch * conv.out_maps,
                        bands,
                        frames,
                        *p,
                    );
                    for (dv, &z) in d.iter_mut().zip(&bn_out) {
                        if z <= T::zero() {
                            *dv = T::zero();
                        }
                    }
                    let (dconv, dgamma, dbeta) = batchnorm::backward_raw(
                        &d,
                        batch,
                        conv.out_maps,
                        bands * frames,
                        bn,
                        &cache,
                    );
                    let (dx, dw, db) =
                        conv::backward_batch(&input, &dconv, batch, bands, frames, conv, need_dx);
                    tensors[slot] = dw;
                    tensors[slot + 1] = db;
                    tensors[slot + 2] = dgamma;
                    tensors[slot + 3] = dbeta;
                    g = dx.unwrap_or_default();
                }
                (Entry::Dropout { mask }, _) => {
                    for (v, m) in g.iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                (
                    Entry::Gru {
                        input,
                        frames,
                        cache,
                    },
                    Layer::Gru { gru, .. },
                ) => {
                    let (dx, dw, du, db) =
                        gru::backward_batch(&input, &g, batch, frames, gru, &cache, need_dx);
                    tensors[slot] = dw;
                    tensors[slot + 1] = du;
                    tensors[slot + 2] = db;
                    g = dx.unwrap_or_default();
                }
                (
                    Entry::Dense {
                        input,
                        output,
                        rows,
                    },
                    Layer::Dense { dense, activation },
                ) => {
                    let (dx, dw, db) = dense::backward_rows(
                        &input,
                        &output,
                        &g,
                        rows,
                        dense,
                        *activation,
                        need_dx,
                    );
                    tensors[slot] = dw;
                    tensors[slot + 1] = db;
                    g = dx.unwrap_or_default();
                }
                (Entry::BatchNorm { cache, rows }, Layer::BatchNorm(bn)) => {
                    let (dx, dgamma, dbeta) =
                        batchnorm::backward_raw(&g, rows, bn.channels(), 1, bn, &cache);
                    tensors[slot] = dgamma;
                    tensors[slot + 1] = dbeta;
                    g = dx;
                }
                (Entry::TimePool { arg, frames, dim }, _) => {
                    g = pool::time_pool_backward(&g, &arg, batch, frames, dim);
                }
                _ => unreachable!("tape entries mirror their layers"),
            }
        }
        let dx = (need_input_grad || entries == 0).then_some(g);
        (Gradients { tensors }, dx)
    }
}

fn push_bn<'a, T>(
    out: &mut Vec<(String, Vec<usize>, &'a Vec<T>, bool)>,
    i: usize,
    bn: &'a BatchNormParams<T>,
) {
    let c = bn.gamma.len();
    out.push((format!("{i}.bn.gamma"), vec![c], &bn.gamma, true));
    out.push((format!("{i}.bn.beta"), vec![c], &bn.beta, true));
    out.push((
        format!("{i}.bn.running_mean"),
        vec![c],
        &bn.running_mean,
        false,
    ));
    out.push((
        format!("{i}.bn.running_var"),
        vec![c],
        &bn.running_var,
        false,
    ));
}
