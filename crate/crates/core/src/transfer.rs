//! Supervised classifier initialized from a pretrained autoencoder.
//!
//! Two new layers are appended to (part of) the autoencoder: a dense
//! embedding layer and a softmax classification layer. After fine-tuning,
//! the embedding layer's output is the face descriptor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_layer, supervised_step, train, Activation, DenseLayer, Network, Target, TrainConfig};
use crate::pretrain::{autoencoder_dims, AUTOENCODER_DEPTH, ENCODER_DEPTH};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Encoder layers only, head attached at the bottleneck.
    EncoderOnly,
    /// The whole autoencoder, head attached after the reconstruction layer.
    FullAutoencoder,
    /// Same topology as `FullAutoencoder`, every layer freshly initialized.
    RandomBaseline,
}

impl InitMode {
    fn body_depth(self) -> usize {
        match self {
            InitMode::EncoderOnly => ENCODER_DEPTH,
            InitMode::FullAutoencoder | InitMode::RandomBaseline => AUTOENCODER_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub embed_dim: usize,
    pub num_classes: usize,
    pub init_mode: InitMode,
    pub new_layer_activation: Activation,
    /// Switch every hidden layer, transferred ones included, to sigmoid.
    pub force_sigmoid_all: bool,
    pub train: TrainConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            embed_dim: 400,
            num_classes: 1000,
            init_mode: InitMode::FullAutoencoder,
            new_layer_activation: Activation::Sigmoid,
            force_sigmoid_all: false,
            train: TrainConfig::classifier(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_classes < 2 {
            return Err(Error::Config(format!(
                "classifier needs embed_dim >= 1 and num_classes >= 2, got {} / {}",
                self.embed_dim, self.num_classes
            )));
        }
        if self.new_layer_activation == Activation::Softmax {
            return Err(Error::Config(
                "the embedding layer cannot use softmax".to_owned(),
            ));
        }
        self.train.validate()
    }
}

/// Builds the classifier. The source autoencoder is not modified.
///
/// The two new head layers are drawn from `rng` before any body layer, so
/// `FullAutoencoder` and `RandomBaseline` built from the same seed share
/// identical heads.
pub fn build_classifier<R: Rng + ?Sized>(ae: &Network, cfg: &ClassifierConfig, rng: &mut R) -> Result<Network> {
    cfg.validate()?;
    autoencoder_dims(ae).map_err(|e| Error::Config(format!("source is not an autoencoder: {e}")))?;
    let depth = cfg.init_mode.body_depth();
    let body_src = &ae.layers()[..depth];
    let body_out = body_src[depth - 1].out_dim();

    let embed = init_layer(body_out, cfg.embed_dim, cfg.new_layer_activation, rng)?;
    let classify = init_layer(cfg.embed_dim, cfg.num_classes, Activation::Softmax, rng)?;

    let mut body: Vec<DenseLayer> = match cfg.init_mode {
        InitMode::EncoderOnly | InitMode::FullAutoencoder => body_src.to_vec(),
        InitMode::RandomBaseline => body_src
            .iter()
            .map(|l| init_layer(l.in_dim(), l.out_dim(), l.activation(), rng))
            .collect::<Result<_>>()?,
    };
    if cfg.force_sigmoid_all {
        for layer in &mut body {
            layer.activation = Activation::Sigmoid;
        }
    }
    body.push(embed);
    body.push(classify);
    Network::new(ae.input_dim(), body)
}

/// Cross-entropy fine-tuning of every layer.
pub fn finetune(
    mut net: Network,
    samples: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>)> {
    check_classifier(&net)?;
    if samples.rows() != labels.len() {
        return Err(Error::Data(format!(
            "{} samples but {} labels",
            samples.rows(),
            labels.len()
        )));
    }
    if samples.cols() != net.input_dim() {
        return Err(Error::shape("finetune data", samples.shape(), (samples.rows(), net.input_dim())));
    }
    let classes = net.output_dim();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Data(format!("label {bad} out of range for {classes} classes")));
    }
    let report = train(&mut net, cfg, samples.rows(), |net, idx| {
        let batch = samples.select_rows(idx)?;
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        supervised_step(net, &batch, Target::Classes(&batch_labels))
    })?;
    Ok((net, report.loss_history))
}

fn check_classifier(net: &Network) -> Result<()> {
    let layers = net.layers();
    if layers.len() < 2 || layers.last().map(DenseLayer::activation) != Some(Activation::Softmax) {
        return Err(Error::shape(
            "classifier layout",
            (net.input_dim(), layers.len()),
            (net.input_dim(), 2),
        ));
    }
    Ok(())
}

/// Output of the embedding layer (the layer before the softmax).
pub fn extract_embeddings(net: &Network, batch: &Matrix) -> Result<Matrix> {
    check_classifier(net)?;
    net.forward_prefix(batch, net.layers().len() - 1)
}

pub fn embed_dim(net: &Network) -> Result<usize> {
    check_classifier(net)?;
    Ok(net.layers()[net.layers().len() - 2].out_dim())
}

/// Fraction of rows whose arg-max class equals the label.
pub fn classification_accuracy(net: &Network, samples: &Matrix, labels: &[usize]) -> Result<f64> {
    let probs = net.predict(samples)?;
    if probs.rows() != labels.len() {
        return Err(Error::Data("label count does not match sample count".to_owned()));
    }
    let correct = probs
        .iter_rows()
        .zip(labels)
        .filter(|(row, &label)| {
            let argmax = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                .0;
            argmax == label
        })
        .count();
    Ok(correct as f64 / labels.len() as f64)
}
