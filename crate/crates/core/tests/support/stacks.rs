//! Reference CNN and RNN stacks composed from the public single-layer functions.

use sed_forge_core::nn::{
    batch_norm_forward, conv2d_same_forward, dense_forward, freq_max_pool, gru_forward, stack_maps,
    BatchNormParams, BnMode, ConvParams, DenseParams, GruParams, LayerSpec, NamedTensor, Network,
};
use sed_forge_core::Tensor;

fn take(tensors: &[NamedTensor<f32>], name: &str) -> Vec<f32> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .unwrap_or_else(|| panic!("{name}"))
        .data
        .clone()
}

fn bn(tensors: &[NamedTensor<f32>], i: usize) -> BatchNormParams<f32> {
    BatchNormParams {
        gamma: take(tensors, &format!("{i}.bn.gamma")),
        beta: take(tensors, &format!("{i}.bn.beta")),
        running_mean: take(tensors, &format!("{i}.bn.running_mean")),
        running_var: take(tensors, &format!("{i}.bn.running_var")),
    }
}

/// Inference of one `[F, T]` input through the layers of `net`'s spec, built
/// from standalone layer functions with `net`'s weights.
pub fn reference_forward(net: &Network<f32>, x: &Tensor<f32>) -> Tensor<f32> {
    let tensors = net.named_tensors();
    let s = x.shape();
    let mut maps = Some(x.clone().reshape(&[1, s[0], s[1]]).unwrap());
    let mut frames: Option<Tensor<f32>> = None;
    let mut in_maps = 1;
    for (i, layer) in net.spec().layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv {
                maps: m,
                kernel,
                freq_pool,
            } => {
                let mut p = ConvParams::zeros(*m, in_maps, *kernel);
                p.weight = take(&tensors, &format!("{i}.conv.weight"));
                p.bias = take(&tensors, &format!("{i}.conv.bias"));
                let y = conv2d_same_forward(maps.as_ref().unwrap(), &p).unwrap();
                let mut b = bn(&tensors, i);
                let mut y = batch_norm_forward(&y, 0, &mut b, BnMode::Inference).unwrap();
                y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                maps = Some(freq_max_pool(&y, *freq_pool).unwrap());
                in_maps = *m;
            }
            LayerSpec::Dropout { .. } => {}
            other => {
                if let Some(m) = maps.take() {
                    frames = Some(stack_maps(&m).unwrap());
                }
                let f = frames.take().unwrap();
                let d = f.shape()[0];
                frames = Some(match other {
                    LayerSpec::Recurrent { units, .. } => {
                        let mut p = GruParams::zeros(d, *units);
                        p.w = take(&tensors, &format!("{i}.gru.w"));
                        p.u = take(&tensors, &format!("{i}.gru.u"));
                        p.b = take(&tensors, &format!("{i}.gru.b"));
                        gru_forward(&f, &p, &vec![0.0; *units], None).unwrap()
                    }
                    LayerSpec::Dense { units, activation } => {
                        let mut p = DenseParams::zeros(d, *units);
                        p.w = take(&tensors, &format!("{i}.dense.w"));
                        p.b = take(&tensors, &format!("{i}.dense.b"));
                        dense_forward(&f, &p, *activation).unwrap()
                    }
                    LayerSpec::BatchNorm => {
                        let mut b = bn(&tensors, i);
                        batch_norm_forward(&f, 0, &mut b, BnMode::Inference).unwrap()
                    }
                    LayerSpec::TemporalMaxPool => {
                        sed_forge_core::nn::temporal_max_pool(&f).unwrap()
                    }
                    _ => unreachable!(),
                });
            }
        }
    }
    frames.unwrap()
}
