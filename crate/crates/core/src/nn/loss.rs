use super::{Activation, Network};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Gradient flowing into the backward pass.
#[derive(Debug, Clone)]
pub enum OutputGrad {
    /// `∂L/∂a` for the final layer's activation output.
    Activations(Matrix),
    /// `∂L/∂z` for the final layer's pre-activation (logits). Used for the
    /// fused softmax + cross-entropy gradient.
    Logits(Matrix),
}

impl OutputGrad {
    pub fn matrix(&self) -> &Matrix {
        match self {
            OutputGrad::Activations(m) | OutputGrad::Logits(m) => m,
        }
    }
}

/// Mean squared error over every entry: `Σ(pred − target)² / (N·D)`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss", pred.shape(), target.shape()));
    }
    let count = pred.data().len() as f64;
    let diff = pred.sub(target)?;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / count;
    let grad = diff.scale(2.0 / count)?;
    Ok((loss, grad))
}

/// Mean negative log-likelihood of `labels` under row-stochastic `probs`.
///
/// The returned gradient is with respect to the logits that produced
/// `probs` through a softmax: `(probs − onehot) / N`.
pub fn cross_entropy_loss(probs: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != probs.rows() {
        return Err(Error::shape(
            "cross_entropy_loss",
            probs.shape(),
            (labels.len(), 1),
        ));
    }
    let classes = probs.cols();
    let n = probs.rows() as f64;
    let mut loss = 0.0;
    let mut grad = probs.data().to_vec();
    for (i, (row, &label)) in probs.iter_rows().zip(labels).enumerate() {
        if label >= classes {
            return Err(Error::Data(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "probability row {i} sums to {sum}, not 1"
            )));
        }
        loss -= row[label].max(f64::MIN_POSITIVE).ln();
        grad[i * classes + label] -= 1.0;
    }
    for g in &mut grad {
        *g /= n;
    }
    let grad = Matrix::new(probs.rows(), classes, grad)?;
    Ok((loss / n, grad))
}

/// Supervision for a batch: regression targets or class labels.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Regression(&'a Matrix),
    Classes(&'a [usize]),
}

impl Target<'_> {
    /// Loss and the matching [`OutputGrad`] for the network's output.
    ///
    /// Class targets require a softmax output layer; the gradient is then
    /// returned w.r.t. the logits.
    pub fn evaluate(&self, net: &Network, output: &Matrix) -> Result<(f64, OutputGrad)> {
        match *self {
            Target::Regression(target) => {
                let (loss, grad) = mse_loss(output, target)?;
                Ok((loss, OutputGrad::Activations(grad)))
            }
            Target::Classes(labels) => {
                let last = net.layers().last().map(|l| l.activation());
                if last != Some(Activation::Softmax) {
                    return Err(Error::Config(
                        "cross-entropy needs a softmax output layer".to_owned(),
                    ));
                }
                let (loss, grad) = cross_entropy_loss(output, labels)?;
                Ok((loss, OutputGrad::Logits(grad)))
            }
        }
    }

    pub fn loss(&self, net: &Network, batch: &Matrix) -> Result<f64> {
        let output = net.predict(batch)?;
        Ok(self.evaluate(net, &output)?.0)
    }
}
