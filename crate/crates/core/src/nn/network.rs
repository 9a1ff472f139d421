use super::{Activation, DenseLayer};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// A feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

/// Everything a backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Matrix,
    /// Pre-activation of each layer.
    pub pre: Vec<Matrix>,
    /// Post-activation of each layer.
    pub post: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.post.last().unwrap_or(&self.input)
    }

    /// Input to layer `i`.
    pub fn layer_input(&self, i: usize) -> &Matrix {
        if i == 0 {
            &self.input
        } else {
            &self.post[i - 1]
        }
    }
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".to_owned()));
        }
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".to_owned()));
        }
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() != width {
                return Err(Error::Config(format!(
                    "layer {i} expects {} inputs but receives {width}",
                    layer.in_dim()
                )));
            }
            if layer.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(Error::Config(format!(
                    "softmax is only allowed on the final layer (found on layer {i})"
                )));
            }
            width = layer.out_dim();
        }
        Ok(Self { input_dim, layers })
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, DenseLayer::out_dim)
    }

    #[inline]
    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable layer access for optimizers. Dimensions must not change.
    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Output widths of every layer, in order.
    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(DenseLayer::out_dim).collect()
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().unwrap_or(batch);
            let z = layer.pre_activation(x)?;
            let a = layer.activation.apply(&z)?;
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardTrace {
            input: batch.clone(),
            pre,
            post,
        })
    }

    /// Output of the first `depth` layers without keeping intermediates.
    pub fn forward_prefix(&self, batch: &Matrix, depth: usize) -> Result<Matrix> {
        if depth == 0 || depth > self.layers.len() {
            return Err(Error::Config(format!(
                "prefix depth {depth} outside 1..={}",
                self.layers.len()
            )));
        }
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers[..depth] {
            x = layer.activation.apply(&layer.pre_activation(&x)?)?;
        }
        Ok(x)
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.forward_prefix(batch, self.layers.len())
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim {
            return Err(Error::shape(
                "network input",
                batch.shape(),
                (batch.rows(), self.input_dim),
            ));
        }
        Ok(())
    }
}
