//! Unsupervised autoencoder pretraining.
//!
//! The autoencoder is symmetric, `input → hidden1 → code → hidden1 → input`,
//! with ReLU on the three hidden layers and a linear reconstruction layer.
//! It is trained to reproduce its input under mean squared error.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_layer, supervised_step, train, Activation, Network, Target, TrainConfig};
use crate::tensor::Matrix;

/// Layers `[0, ENCODER_DEPTH)` form the encoder.
pub const ENCODER_DEPTH: usize = 2;
pub const AUTOENCODER_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub input_dim: usize,
    pub hidden1: usize,
    pub code_dim: usize,
    pub train: TrainConfig,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 112 * 112,
            hidden1: 800,
            code_dim: 300,
            train: TrainConfig::autoencoder(),
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.code_dim && self.code_dim < self.hidden1 && self.hidden1 < self.input_dim) {
            return Err(Error::Config(format!(
                "autoencoder needs code_dim < hidden1 < input_dim, got {} / {} / {}",
                self.code_dim, self.hidden1, self.input_dim
            )));
        }
        self.train.validate()
    }
}

pub fn build_autoencoder<R: Rng + ?Sized>(cfg: &AutoencoderConfig, rng: &mut R) -> Result<Network> {
    cfg.validate()?;
    let dims = [cfg.input_dim, cfg.hidden1, cfg.code_dim, cfg.hidden1, cfg.input_dim];
    let acts = [
        Activation::Relu,
        Activation::Relu,
        Activation::Relu,
        Activation::Linear,
    ];
    let layers = dims
        .windows(2)
        .zip(acts)
        .map(|(d, act)| init_layer(d[0], d[1], act, rng))
        .collect::<Result<Vec<_>>>()?;
    Network::new(cfg.input_dim, layers)
}

/// Checks the symmetric four-layer shape and returns `(hidden1, code_dim)`.
pub fn autoencoder_dims(net: &Network) -> Result<(usize, usize)> {
    let w = net.widths();
    let ok = w.len() == AUTOENCODER_DEPTH
        && w[0] == w[2]
        && w[3] == net.input_dim()
        && w[1] < w[0]
        && w[0] < net.input_dim();
    if !ok {
        return Err(Error::shape(
            "autoencoder layout",
            (net.input_dim(), w.len()),
            (net.input_dim(), AUTOENCODER_DEPTH),
        ));
    }
    Ok((w[0], w[1]))
}

/// Trains `net` to reconstruct the rows of `data`.
///
/// Returns the trained network and the mean batch MSE of each epoch.
pub fn pretrain(mut net: Network, data: &Matrix, cfg: &TrainConfig) -> Result<(Network, Vec<f64>)> {
    autoencoder_dims(&net)?;
    if data.cols() != net.input_dim() {
        return Err(Error::shape("pretrain data", data.shape(), (data.rows(), net.input_dim())));
    }
    if data.rows() < cfg.batch_size {
        return Err(Error::Data(format!(
            "{} samples do not fill one batch of {}",
            data.rows(),
            cfg.batch_size
        )));
    }
    let report = train(&mut net, cfg, data.rows(), |net, idx| {
        let batch = data.select_rows(idx)?;
        supervised_step(net, &batch, Target::Regression(&batch))
    })?;
    Ok((net, report.loss_history))
}

/// Bottleneck activations (output of the second layer).
pub fn encode(net: &Network, batch: &Matrix) -> Result<Matrix> {
    autoencoder_dims(net)?;
    net.forward_prefix(batch, ENCODER_DEPTH)
}

/// Runs codes through the decoder half (layers 3 and 4).
pub fn decode(net: &Network, codes: &Matrix) -> Result<Matrix> {
    let (_, code_dim) = autoencoder_dims(net)?;
    if codes.cols() != code_dim {
        return Err(Error::shape("decode", codes.shape(), (codes.rows(), code_dim)));
    }
    let mut x = codes.clone();
    for layer in &net.layers()[ENCODER_DEPTH..] {
        x = layer.activation().apply(&layer.pre_activation(&x)?)?;
    }
    Ok(x)
}

pub fn reconstruct(net: &Network, batch: &Matrix) -> Result<Matrix> {
    autoencoder_dims(net)?;
    net.predict(batch)
}

pub fn reconstruction_mse(net: &Network, data: &Matrix) -> Result<f64> {
    let out = reconstruct(net, data)?;
    Ok(crate::nn::mse_loss(&out, data)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LrSchedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_cfg() -> AutoencoderConfig {
        AutoencoderConfig {
            input_dim: 6,
            hidden1: 4,
            code_dim: 2,
            train: TrainConfig {
                max_epochs: 200,
                batch_size: 4,
                lr_schedule: LrSchedule::Constant { lr: 0.05 },
                momentum: 0.9,
                patience: 200,
                min_delta: 1e-5,
                seed: 3,
            },
        }
    }

    #[test]
    fn default_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = build_autoencoder(&AutoencoderConfig::default(), &mut rng).unwrap();
        let shapes: Vec<_> = net.layers().iter().map(|l| l.weights().shape()).collect();
        assert_eq!(shapes, vec![(800, 12544), (300, 800), (800, 300), (12544, 800)]);
        let acts: Vec<_> = net.layers().iter().map(|l| l.activation()).collect();
        assert_eq!(
            acts,
            vec![Activation::Relu, Activation::Relu, Activation::Relu, Activation::Linear]
        );
    }

    #[test]
    fn toy_shapes_and_determinism() {
        let cfg = toy_cfg();
        let a = build_autoencoder(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = build_autoencoder(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let shapes: Vec<_> = a.layers().iter().map(|l| l.weights().shape()).collect();
        assert_eq!(shapes, vec![(4, 6), (2, 4), (4, 2), (6, 4)]);
    }

    #[test]
    fn non_bottleneck_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (h, c) in [(6, 2), (4, 4), (2, 3)] {
            let cfg = AutoencoderConfig {
                hidden1: h,
                code_dim: c,
                ..toy_cfg()
            };
            assert!(matches!(build_autoencoder(&cfg, &mut rng), Err(Error::Config(_))));
        }
    }

    #[test]
    fn overfits_a_single_repeated_sample() {
        let cfg = toy_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = build_autoencoder(&cfg, &mut rng).unwrap();
        let row = [0.2, 0.9, 0.4, 0.7, 0.1, 0.5];
        let data = Matrix::from_rows(&[row; 8]).unwrap();
        let (trained, history) = pretrain(net, &data, &cfg.train).unwrap();
        assert!(history.len() <= cfg.train.max_epochs);
        let mse = reconstruction_mse(&trained, &data).unwrap();
        assert!(mse < 1e-3, "{mse}");
    }

    #[test]
    fn synthetic_faces_reconstruct_well() {
        use crate::dataio::{samples_to_matrix, synth_dataset, SynthSpec};
        let spec = SynthSpec {
            num_classes: 5,
            per_class: 20,
            ..SynthSpec::default()
        };
        let x = samples_to_matrix(&synth_dataset(&spec).unwrap().samples, 784).unwrap();
        let cfg = AutoencoderConfig {
            input_dim: 784,
            hidden1: 128,
            code_dim: 32,
            train: TrainConfig {
                max_epochs: 100,
                batch_size: 32,
                lr_schedule: LrSchedule::LogDecay { start: 0.5, end: 0.05 },
                momentum: 0.9,
                patience: 10,
                min_delta: 1e-5,
                seed: 1,
            },
        };
        let net = build_autoencoder(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let before = reconstruction_mse(&net, &x).unwrap();
        let (trained, history) = pretrain(net, &x, &cfg.train).unwrap();
        let last = *history.last().unwrap();
        assert!(last < 0.1 * history[0], "{} -> {last}", history[0]);
        assert!(reconstruction_mse(&trained, &x).unwrap() < before);
        let argmin = history
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, &l)| if l < b.1 { (i, l) } else { b })
            .0;
        assert!(history.len() - 1 - argmin <= cfg.train.patience);
    }

    #[test]
    fn early_stop_with_zero_learning_rate() {
        let mut cfg = toy_cfg();
        cfg.train.lr_schedule = LrSchedule::Constant { lr: 0.0 };
        cfg.train.patience = 3;
        let net = build_autoencoder(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let data = Matrix::from_rows(&[[0.2, 0.9, 0.4, 0.7, 0.1, 0.5]; 8]).unwrap();
        let (_, history) = pretrain(net, &data, &cfg.train).unwrap();
        assert_eq!(history.len(), 4);
    }

    #[test]
    fn encode_decode_compose_to_reconstruct() {
        let cfg = toy_cfg();
        let net = build_autoencoder(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], [0.9, 0.1, 0.5, 0.0, 1.0, 0.3]])
            .unwrap();
        let codes = encode(&net, &x).unwrap();
        assert_eq!(codes.shape(), (2, 2));
        assert!(codes.data().iter().all(|&c| c >= 0.0));
        assert_eq!(codes, net.forward_prefix(&x, 2).unwrap());
        let rec = reconstruct(&net, &x).unwrap();
        assert_eq!(rec.shape(), x.shape());
        assert_eq!(decode(&net, &codes).unwrap(), rec);
    }

    #[test]
    fn rejects_non_autoencoder_and_bad_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::new(6, vec![init_layer(6, 6, Activation::Linear, &mut rng).unwrap()]).unwrap();
        assert!(matches!(encode(&net, &Matrix::zeros(1, 6)), Err(Error::Shape { .. })));

        let ae = build_autoencoder(&toy_cfg(), &mut rng).unwrap();
        assert!(matches!(
            reconstruct(&ae, &Matrix::zeros(1, 5)),
            Err(Error::Shape { .. })
        ));
        let too_few = Matrix::zeros(2, 6);
        assert!(matches!(
            pretrain(ae, &too_few, &toy_cfg().train),
            Err(Error::Data(_))
        ));
    }
}
