use rand::distr::{Distribution, Uniform};
use rand::Rng;

use super::Activation;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Fully connected layer computing `activation(x · Wᵀ + b)` for a batch `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out_dim × in_dim`.
    pub(crate) weights: Matrix,
    pub(crate) bias: Vec<f64>,
    pub(crate) activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape(
                "dense layer bias",
                weights.shape(),
                (1, bias.len()),
            ));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("layer bias".to_owned()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "layer dimensions must be positive, got {in_dim} -> {out_dim}"
            )));
        }
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit)
            .map_err(|e| Error::Config(format!("glorot bound: {e}")))?;
        let weights = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Ok(Self {
            weights: Matrix::from_parts(out_dim, in_dim, weights),
            bias: vec![0.0; out_dim],
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    #[inline]
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }

    /// Affine part only: `x · Wᵀ + b`.
    pub fn pre_activation(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim() {
            return Err(Error::shape(
                "dense layer input",
                input.shape(),
                self.weights.shape(),
            ));
        }
        input.matmul_nt(&self.weights)?.add_row(&self.bias)
    }
}

/// Convenience wrapper matching the usual `init_layer(in, out, act, rng)` call.
pub fn init_layer<R: Rng + ?Sized>(
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    rng: &mut R,
) -> Result<DenseLayer> {
    DenseLayer::glorot(in_dim, out_dim, activation, rng)
}
