use super::{Activation, DerivativeFn, ForwardTrace, Network, OutputGrad};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Per-layer parameter gradients, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    /// All gradient entries in parameter order: per layer, weights
    /// row-major then bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.data().iter().chain(&g.bias).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|g| {
            g.weights.data().iter().all(|v| v.is_finite()) && g.bias.iter().all(|v| v.is_finite())
        })
    }
}

pub fn backward(net: &Network, trace: &ForwardTrace, output_grad: &OutputGrad) -> Result<Gradients> {
    backward_with(net, trace, output_grad, Activation::backprop)
}

/// Backpropagation with a caller-supplied activation derivative. Used by
/// the gradient-check harness to verify that a broken derivative is caught.
pub fn backward_with(
    net: &Network,
    trace: &ForwardTrace,
    output_grad: &OutputGrad,
    derivative: DerivativeFn,
) -> Result<Gradients> {
    let layers = net.layers();
    if trace.post.len() != layers.len() || trace.pre.len() != layers.len() {
        return Err(Error::Config(format!(
            "trace has {} layers, network has {}",
            trace.post.len(),
            layers.len()
        )));
    }
    let out_shape = trace.output().shape();
    if output_grad.matrix().shape() != out_shape {
        return Err(Error::shape(
            "backward output gradient",
            output_grad.matrix().shape(),
            out_shape,
        ));
    }

    let last = layers.len() - 1;
    let mut grads = Vec::with_capacity(layers.len());
    let mut upstream = output_grad.matrix().clone();
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        let dz = match output_grad {
            OutputGrad::Logits(_) if i == last => upstream,
            _ => derivative(layer.activation(), &trace.pre[i], &trace.post[i], &upstream)?,
        };
        let input = trace.layer_input(i);
        let weights = dz.matmul_tn(input)?;
        let bias = dz.column_sums();
        if i > 0 {
            upstream = dz.matmul(layer.weights())?;
        } else {
            upstream = dz;
        }
        grads.push(LayerGrad { weights, bias });
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_layer, DenseLayer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::new(
            4,
            vec![
                init_layer(4, 3, Activation::Sigmoid, &mut rng).unwrap(),
                init_layer(3, 2, Activation::Linear, &mut rng).unwrap(),
            ],
        )
        .unwrap();
        let x = Matrix::filled(5, 4, 0.2);
        let trace = net.forward(&x).unwrap();
        let g = backward(&net, &trace, &OutputGrad::Activations(Matrix::zeros(5, 2))).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_grad_is_closed_form() {
        let w = Matrix::from_rows(&[[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]]).unwrap();
        let layer = DenseLayer::new(w, vec![0.1, -0.3], Activation::Linear).unwrap();
        let net = Network::new(3, vec![layer]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.0, 4.0], [0.5, 0.5, 0.5], [2.0, -2.0, 1.0]])
            .unwrap();
        let g_out = Matrix::from_rows(&[[1.0, -1.0], [0.5, 2.0], [-3.0, 0.0], [0.25, 1.0]]).unwrap();
        let trace = net.forward(&x).unwrap();
        let g = backward(&net, &trace, &OutputGrad::Activations(g_out.clone())).unwrap();
        let expected = g_out.transpose().matmul(&x).unwrap();
        assert!(g.layers[0].weights.max_abs_diff(&expected).unwrap() < 1e-14);
        assert_eq!(g.layers[0].bias, g_out.column_sums());
    }

    #[test]
    fn mismatched_output_grad_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::new(2, vec![init_layer(2, 2, Activation::Linear, &mut rng).unwrap()])
            .unwrap();
        let trace = net.forward(&Matrix::zeros(3, 2)).unwrap();
        assert!(matches!(
            backward(&net, &trace, &OutputGrad::Activations(Matrix::zeros(2, 2))),
            Err(Error::Shape { .. })
        ));
    }
}
