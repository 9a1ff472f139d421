use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    /// Row-wise softmax. Only valid on the last layer of a network.
    Softmax,
}

/// Signature of an activation backward rule: given the activation, the
/// layer's pre-activation `z`, its output `a = f(z)` and `∂L/∂a`, return
/// `∂L/∂z`.
pub type DerivativeFn = fn(Activation, &Matrix, &Matrix, &Matrix) -> Result<Matrix>;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// Code used by the model file format.
    pub fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
            Activation::Softmax => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Linear,
            1 => Activation::Relu,
            2 => Activation::Sigmoid,
            3 => Activation::Softmax,
            _ => return None,
        })
    }

    pub fn apply(self, pre: &Matrix) -> Result<Matrix> {
        match self {
            Activation::Linear => Ok(pre.clone()),
            Activation::Relu => pre.map(|x| x.max(0.0)),
            Activation::Sigmoid => pre.map(sigmoid),
            Activation::Softmax => softmax_rows(pre),
        }
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the activation output)
    /// through this activation.
    pub fn backprop(self, pre: &Matrix, post: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
        if grad_out.shape() != post.shape() {
            return Err(Error::shape("activation backprop", post.shape(), grad_out.shape()));
        }
        match self {
            Activation::Linear => Ok(grad_out.clone()),
            Activation::Relu => {
                // Derivative at exactly zero is taken as zero.
                let data = pre
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
                    .collect();
                Matrix::new(pre.rows(), pre.cols(), data)
            }
            Activation::Sigmoid => {
                let data = post
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&a, &g)| g * a * (1.0 - a))
                    .collect();
                Matrix::new(pre.rows(), pre.cols(), data)
            }
            Activation::Softmax => {
                // Jacobian-vector product: dz = a ⊙ (g − ⟨g, a⟩) per row.
                let mut data = Vec::with_capacity(post.data().len());
                for (a, g) in post.iter_rows().zip(grad_out.iter_rows()) {
                    let inner: f64 = a.iter().zip(g).map(|(x, y)| x * y).sum();
                    data.extend(a.iter().zip(g).map(|(&ai, &gi)| ai * (gi - inner)));
                }
                Matrix::new(pre.rows(), pre.cols(), data)
            }
        }
    }
}

/// Per-row `exp`-normalization with max subtraction.
pub fn softmax_rows(pre: &Matrix) -> Result<Matrix> {
    let mut data = Vec::with_capacity(pre.data().len());
    for row in pre.iter_rows() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = data.len();
        let mut sum = 0.0;
        for &x in row {
            let e = (x - max).exp();
            sum += e;
            data.push(e);
        }
        for v in &mut data[start..] {
            *v /= sum;
        }
    }
    Matrix::new(pre.rows(), pre.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(values: &[f64]) -> Matrix {
        Matrix::row_vector(values.to_vec()).unwrap()
    }

    #[test]
    fn relu_clips_negatives() {
        let out = Activation::Relu.apply(&row(&[-1.0, 0.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let out = Activation::Softmax.apply(&row(&[5.0; 4])).unwrap();
        assert_eq!(out.data(), &[0.25; 4]);
    }

    #[test]
    fn sigmoid_scalar() {
        // 1 / (1 + e^-0.5), evaluated independently of the implementation.
        let expected = 1.0 / (1.0 + (-0.5f64).exp());
        let out = Activation::Sigmoid.apply(&row(&[0.5])).unwrap();
        assert!((out.data()[0] - expected).abs() < 1e-15);
        assert!((out.data()[0] - 0.622_459_331_201_854_6).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        let out = Activation::Sigmoid.apply(&row(&[-800.0, 800.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0]);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let pre = row(&[0.0, 1.0]);
        let post = Activation::Relu.apply(&pre).unwrap();
        let g = Activation::Relu.backprop(&pre, &post, &row(&[1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0]);
    }

    #[test]
    fn codes_round_trip() {
        for act in [
            Activation::Linear,
            Activation::Relu,
            Activation::Sigmoid,
            Activation::Softmax,
        ] {
            assert_eq!(Activation::from_code(act.code()), Some(act));
        }
        assert_eq!(Activation::from_code(4), None);
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(values in prop::collection::vec(-15.0f64..15.0, 1..12)) {
            let out = Activation::Softmax.apply(&row(&values)).unwrap();
            let sum: f64 = out.data().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(out.data().iter().all(|&p| p > 0.0 && p < 1.0 || values.len() == 1));
        }
    }
}
