mod support;

use sed_forge_core::nn::{Activation, LayerSpec, Network, NetworkSpec};
use sed_forge_core::rng::{self, gaussian};
use sed_forge_core::Tensor;
use support::stacks::reference_forward;

const GRID: [&[usize]; 8] = [
    &[4],
    &[2, 2],
    &[4, 2],
    &[8, 5],
    &[2, 2, 2],
    &[5, 4, 2],
    &[2, 2, 2, 1],
    &[5, 2, 2, 2],
];

fn crnn(pools: &[usize], bands: usize, classes: usize, seed: u64) -> NetworkSpec {
    let mut layers = Vec::new();
    for &p in pools {
        layers.push(LayerSpec::Conv {
            maps: 4,
            kernel: (5, 5),
            freq_pool: p,
        });
        layers.push(LayerSpec::Dropout { rate: 0.25 });
    }
    layers.push(LayerSpec::Recurrent {
        units: 6,
        recurrent_dropout: 0.25,
    });
    layers.push(LayerSpec::Dropout { rate: 0.25 });
    layers.push(LayerSpec::Dense {
        units: classes,
        activation: Activation::Sigmoid,
    });
    NetworkSpec {
        input_bands: bands,
        classes,
        layers,
        seed,
    }
}

fn noise(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut r = rng::stream(seed, &[]);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| gaussian(&mut r) as f32).collect()).unwrap()
}

/// Band count after each pooling stage.
fn bands_after(pools: &[usize], bands: usize) -> Vec<usize> {
    pools
        .iter()
        .scan(bands, |b, &p| {
            *b /= p;
            Some(*b)
        })
        .collect()
}

#[test]
fn five_four_two_maps_forty_bands_to_one() {
    assert_eq!(bands_after(&[5, 4, 2], 40), vec![8, 2, 1]);
}

#[test]
fn search_grid_validates_and_forwards() {
    for pools in GRID {
        let spec = crnn(pools, 40, 3, 1);
        spec.validate().unwrap_or_else(|e| panic!("{pools:?}: {e}"));
        let net = Network::<f32>::new(&spec).unwrap();
        for t in [1, 9] {
            let y = net.predict(&noise(&[2, 40, t], 3)).unwrap();
            assert_eq!(y.shape(), &[2, 3, t], "{pools:?}");
            assert!(y.data().iter().all(|&p| p > 0.0 && p < 1.0));
        }
        let last = *bands_after(pools, 40).last().unwrap();
        let gru_in = net
            .named_tensors()
            .into_iter()
            .find(|t| t.name.ends_with("gru.w"))
            .unwrap();
        assert_eq!(gru_in.shape[1], 4 * last, "{pools:?}");
    }
}

#[test]
fn tagging_spec_outputs_one_column() {
    let mut spec = crnn(&[5, 4, 2], 40, 3, 2);
    let n = spec.layers.len();
    spec.layers.insert(n - 1, LayerSpec::TemporalMaxPool);
    let net = Network::<f32>::new(&spec).unwrap();
    assert_eq!(
        net.predict(&noise(&[2, 40, 17], 4)).unwrap().shape(),
        &[2, 3, 1]
    );
}

#[test]
fn degenerate_specs_match_independent_stacks() {
    for seed in 0..3 {
        let full = crnn(&[5, 4, 2], 40, 3, seed);
        let cnn = full.without_recurrent();
        let rnn = full.without_conv();
        assert_eq!((cnn.recurrent_layers(), rnn.conv_layers()), (0, 0));
        for spec in [cnn, rnn, full] {
            let mut net = Network::<f32>::new(&spec).unwrap();
            // Move running statistics and affine terms away from identity.
            let mut tensors = net.named_tensors();
            let mut r = rng::stream(seed, &[1]);
            for t in tensors.iter_mut() {
                for v in t.data.iter_mut() {
                    let d = 0.2 * gaussian(&mut r) as f32;
                    *v = if t.name.ends_with("running_var") {
                        v.abs() + d.abs()
                    } else {
                        *v + d
                    };
                }
            }
            net.load_named_tensors(&tensors).unwrap();
            let x = noise(&[1, 40, 23], seed + 10);
            let ours = net.predict(&x).unwrap();
            let reference = reference_forward(&net, &x.clone().reshape(&[40, 23]).unwrap());
            assert_eq!(ours.data(), reference.data(), "spec {:?}", spec.layers);
        }
    }
}

#[test]
fn invalid_specs_list_every_violation() {
    let mut spec = crnn(&[3], 40, 2, 0);
    spec.layers.push(LayerSpec::Dropout { rate: 2.0 });
    match spec.validate() {
        Err(sed_forge_core::Error::InvalidSpec(v)) => assert!(v.len() >= 3, "{v:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn layer_errors_carry_their_index() {
    let spec = NetworkSpec {
        input_bands: 8,
        classes: 2,
        layers: vec![
            LayerSpec::Dense {
                units: 3,
                activation: Activation::Relu,
            },
            LayerSpec::BatchNorm,
            LayerSpec::Dense {
                units: 2,
                activation: Activation::Sigmoid,
            },
        ],
        seed: 0,
    };
    let mut net = Network::<f32>::new(&spec).unwrap();
    // Training-mode batch norm with a single value per unit.
    match net.forward_train(&noise(&[1, 8, 1], 0), &mut rng::stream(0, &[])) {
        Err(sed_forge_core::Error::Layer { index, .. }) => assert_eq!(index, 1),
        other => panic!("{other:?}"),
    }
}
