use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::Activation;
use crate::{Error, Result};

/// One entry of a network description.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Same convolution, batch norm, ReLU, then max pooling over `freq_pool` bands.
    Conv {
        maps: usize,
        kernel: (usize, usize),
        freq_pool: usize,
    },
    /// GRU layer; `recurrent_dropout` is applied to the state with a per-sequence mask.
    Recurrent {
        units: usize,
        recurrent_dropout: f64,
    },
    /// Frame-wise fully connected layer.
    Dense {
        units: usize,
        activation: Activation,
    },
    /// Batch norm over frame features.
    BatchNorm,
    Dropout {
        rate: f64,
    },
    /// Max over time; turns frame outputs into one output per window.
    TemporalMaxPool,
}

impl LayerSpec {
    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. })
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, LayerSpec::Recurrent { .. })
    }
}

/// Declarative network: input bands, output classes and an ordered layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_bands: usize,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

/// Resolved sizes of a layer's input, as seen during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stage {
    Maps { maps: usize, bands: usize },
    Frames { dim: usize },
}

impl NetworkSpec {
    /// True when the network ends with one prediction per window.
    pub fn is_tagging(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::TemporalMaxPool))
    }

    pub fn conv_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.is_conv()).count()
    }

    pub fn recurrent_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.is_recurrent()).count()
    }

    /// Same spec without the convolutional layers and the dropouts following them.
    pub fn without_conv(&self) -> Self {
        let mut layers = Vec::new();
        let mut after_conv = false;
        for l in &self.layers {
            match l {
                LayerSpec::Conv { .. } => after_conv = true,
                LayerSpec::Dropout { .. } if after_conv => {}
                other => {
                    after_conv = false;
                    layers.push(other.clone());
                }
            }
        }
        Self {
            layers,
            ..self.clone()
        }
    }

    /// Same spec without the recurrent layers and the dropouts following them.
    pub fn without_recurrent(&self) -> Self {
        let mut layers = Vec::new();
        let mut after_rec = false;
        for l in &self.layers {
            match l {
                LayerSpec::Recurrent { .. } => after_rec = true,
                LayerSpec::Dropout { .. } if after_rec => {}
                other => {
                    after_rec = false;
                    layers.push(other.clone());
                }
            }
        }
        Self {
            layers,
            ..self.clone()
        }
    }

    /// Checks every constraint and returns the input stage of each layer.
    pub(crate) fn stages(&self) -> Result<Vec<Stage>> {
        let mut errs: Vec<String> = Vec::new();
        if self.input_bands == 0 {
            errs.push("input_bands must be positive".into());
        }
        if self.classes == 0 {
            errs.push("classes must be positive".into());
        }
        match self.layers.last() {
            Some(LayerSpec::Dense {
                units,
                activation: Activation::Sigmoid,
            }) if *units == self.classes => {}
            _ => errs.push(format!(
                "the last layer must be a sigmoid dense layer with {} units",
                self.classes
            )),
        }
        let last = self.layers.len().saturating_sub(1);
        let mut stage = Stage::Maps {
            maps: 1,
            bands: self.input_bands.max(1),
        };
        let mut stages = Vec::with_capacity(self.layers.len());
        let mut pooled_time = false;
        let to_frames = |s: Stage| match s {
            Stage::Maps { maps, bands } => Stage::Frames { dim: maps * bands },
            f => f,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            stages.push(stage);
            match *layer {
                LayerSpec::Conv {
                    maps,
                    kernel,
                    freq_pool,
                } => match stage {
                    Stage::Maps { bands, .. } => {
                        if maps == 0 {
                            errs.push(format!("layer {i}: conv needs at least one feature map"));
                        }
                        if kernel.0 == 0 || kernel.1 == 0 {
                            errs.push(format!("layer {i}: kernel {kernel:?} has a zero dimension"));
                        }
                        if freq_pool == 0 || bands % freq_pool != 0 || freq_pool > u8::MAX as usize
                        {
                            errs.push(format!(
                                "layer {i}: pool {freq_pool} does not divide {bands} bands"
                            ));
                            stage = Stage::Maps {
                                maps: maps.max(1),
                                bands,
                            };
                        } else {
                            stage = Stage::Maps {
                                maps: maps.max(1),
                                bands: bands / freq_pool,
                            };
                        }
                    }
                    Stage::Frames { .. } => {
                        errs.push(format!(
                            "layer {i}: convolutional layers must precede all other layer kinds"
                        ));
                    }
                },
                LayerSpec::Recurrent {
                    units,
                    recurrent_dropout,
                } => {
                    if units == 0 {
                        errs.push(format!("layer {i}: recurrent layer needs units"));
                    }
                    if !(0.0..1.0).contains(&recurrent_dropout) {
                        errs.push(format!(
                            "layer {i}: recurrent dropout {recurrent_dropout} outside [0, 1)"
                        ));
                    }
                    if pooled_time {
                        errs.push(format!("layer {i}: recurrent layer after temporal pooling"));
                    }
                    stage = Stage::Frames { dim: units.max(1) };
                }
                LayerSpec::Dense { units, activation } => {
                    if units == 0 {
                        errs.push(format!("layer {i}: dense layer needs units"));
                    }
                    if i != last && activation == Activation::Sigmoid {
                        errs.push(format!(
                            "layer {i}: only the output layer may use a sigmoid"
                        ));
                    }
                    stage = Stage::Frames { dim: units.max(1) };
                }
                LayerSpec::BatchNorm => stage = to_frames(stage),
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        errs.push(format!("layer {i}: dropout rate {rate} outside [0, 1)"));
                    }
                }
                LayerSpec::TemporalMaxPool => {
                    if pooled_time {
                        errs.push(format!("layer {i}: temporal pooling applied twice"));
                    }
                    pooled_time = true;
                    stage = to_frames(stage);
                }
            }
        }
        if errs.is_empty() {
            Ok(stages)
        } else {
            Err(Error::InvalidSpec(errs))
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stages().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crnn(pools: &[usize]) -> NetworkSpec {
        let mut layers: Vec<LayerSpec> = pools
            .iter()
            .map(|&p| LayerSpec::Conv {
                maps: 4,
                kernel: (5, 5),
                freq_pool: p,
            })
            .collect();
        layers.push(LayerSpec::Recurrent {
            units: 8,
            recurrent_dropout: 0.25,
        });
        layers.push(LayerSpec::Dense {
            units: 3,
            activation: Activation::Sigmoid,
        });
        NetworkSpec {
            input_bands: 40,
            classes: 3,
            layers,
            seed: 0,
        }
    }

    #[test]
    fn valid_spec_passes() {
        assert!(crnn(&[5, 4, 2]).validate().is_ok());
    }

    #[test]
    fn all_violations_are_listed() {
        let mut s = crnn(&[3]);
        s.layers.push(LayerSpec::Dropout { rate: 1.5 });
        s.layers.insert(
            0,
            LayerSpec::Dense {
                units: 2,
                activation: Activation::Relu,
            },
        );
        match s.validate() {
            Err(Error::InvalidSpec(v)) => {
                assert!(v.iter().any(|m| m.contains("precede")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("last layer")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("outside [0, 1)")), "{v:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_dividing_pool_rejected() {
        assert!(crnn(&[3]).validate().is_err());
        assert!(crnn(&[5, 4, 4]).validate().is_err());
    }

    #[test]
    fn degenerate_variants() {
        let s = crnn(&[5, 4, 2]);
        let cnn = s.without_recurrent();
        let rnn = s.without_conv();
        assert_eq!((cnn.conv_layers(), cnn.recurrent_layers()), (3, 0));
        assert_eq!((rnn.conv_layers(), rnn.recurrent_layers()), (0, 1));
        assert!(cnn.validate().is_ok() && rnn.validate().is_ok());
        assert_eq!(rnn.layers.len(), 2);
    }
}
