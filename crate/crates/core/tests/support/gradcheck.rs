//! Central finite differences against the analytic backward pass.

use sed_forge_core::nn::{Network, NetworkSpec};
use sed_forge_core::rng::{self, gaussian};
use sed_forge_core::Tensor;

pub const FD_STEP: f64 = 1e-6;
/// Denominator floor of the relative error, so exact zeros compare sanely.
pub const REL_FLOOR: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

pub struct Instance {
    pub x: Tensor<f64>,
    pub targets: Tensor<f64>,
    pub mask: Vec<u8>,
    pub dropout_seed: u64,
}

pub fn random_instance(spec: &NetworkSpec, batch: usize, frames: usize, seed: u64) -> Instance {
    let mut r = rng::stream(seed, &[77]);
    let f = spec.input_bands;
    let out_frames = if spec.is_tagging() { 1 } else { frames };
    let x: Vec<f64> = (0..batch * f * frames).map(|_| gaussian(&mut r)).collect();
    let y: Vec<f64> = (0..batch * spec.classes * out_frames)
        .map(|_| (gaussian(&mut r) > 0.0) as u8 as f64)
        .collect();
    let mut mask: Vec<u8> = (0..batch * out_frames)
        .map(|_| (gaussian(&mut r) > -1.0) as u8)
        .collect();
    mask[0] = 1;
    Instance {
        x: Tensor::from_vec(&[batch, f, frames], x).unwrap(),
        targets: Tensor::from_vec(&[batch, spec.classes, out_frames], y).unwrap(),
        mask,
        dropout_seed: seed ^ 0x5eed,
    }
}

fn loss(net: &Network<f64>, inst: &Instance) -> f64 {
    let mut n = net.snapshot();
    n.forward_train(&inst.x, &mut rng::stream(inst.dropout_seed, &[]))
        .unwrap();
    n.backward(&inst.targets, &inst.mask).unwrap().1
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Largest relative error over every parameter, with the parameter's name.
pub fn max_param_error(net: &Network<f64>, inst: &Instance) -> (f64, String) {
    let mut n = net.snapshot();
    n.forward_train(&inst.x, &mut rng::stream(inst.dropout_seed, &[]))
        .unwrap();
    let (grads, _) = n.backward(&inst.targets, &inst.mask).unwrap();
    let names: Vec<String> = net.parameters().into_iter().map(|p| p.0).collect();
    let mut worst = (0.0, String::new());
    for (ti, g) in grads.tensors.iter().enumerate() {
        for j in 0..g.len() {
            let mut plus = net.snapshot();
            plus.parameters_mut()[ti][j] += FD_STEP;
            let mut minus = net.snapshot();
            minus.parameters_mut()[ti][j] -= FD_STEP;
            let fd = (loss(&plus, inst) - loss(&minus, inst)) / (2.0 * FD_STEP);
            let e = rel_err(g[j], fd);
            if e > worst.0 {
                worst = (
                    e,
                    format!("{}[{j}]: analytic {} numeric {fd}", names[ti], g[j]),
                );
            }
        }
    }
    worst
}

/// Largest relative error of the input gradient of `sum(w * output)`.
pub fn max_input_error(net: &Network<f64>, inst: &Instance) -> f64 {
    let objective = |n: &mut Network<f64>, x: &Tensor<f64>, w: &[f64]| -> f64 {
        let y = n
            .forward_train(x, &mut rng::stream(inst.dropout_seed, &[]))
            .unwrap();
        y.data().iter().zip(w).map(|(a, b)| a * b).sum()
    };
    let mut n = net.snapshot();
    let y = n
        .forward_train(&inst.x, &mut rng::stream(inst.dropout_seed, &[]))
        .unwrap();
    let mut r = rng::stream(inst.dropout_seed, &[3]);
    let w: Vec<f64> = (0..y.len()).map(|_| gaussian(&mut r)).collect();
    let (_, dx) = n
        .backward_from_output(&Tensor::from_vec(y.shape(), w.clone()).unwrap(), true)
        .unwrap();
    let dx = dx.unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..inst.x.len() {
        let mut xp = inst.x.clone();
        xp.data_mut()[j] += FD_STEP;
        let mut xm = inst.x.clone();
        xm.data_mut()[j] -= FD_STEP;
        let fd = (objective(&mut net.snapshot(), &xp, &w)
            - objective(&mut net.snapshot(), &xm, &w))
            / (2.0 * FD_STEP);
        worst = worst.max(rel_err(dx.data()[j], fd));
    }
    worst
}
