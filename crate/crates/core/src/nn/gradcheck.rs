//! Central finite-difference gradient checking.
//!
//! Every parameter is perturbed by `±eps` and the loss difference is
//! compared with the analytic gradient produced by backpropagation. The
//! relative error per parameter is `|a − n| / max(|a|, |n|, 1e-8)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward_with, init_layer, Activation, DerivativeFn, Network, Target};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_EPS: f64 = 1e-5;
/// Largest network the checker will perturb exhaustively.
pub const MAX_PARAMS: usize = 10_000;
/// Tolerance used by the standard suite.
pub const SUITE_TOLERANCE: f64 = 1e-4;
/// Minimum distance of every ReLU pre-activation from the kink at zero.
pub const KINK_MARGIN: f64 = 1e-3;

pub fn gradient_check(net: &Network, target: Target<'_>, batch: &Matrix, eps: f64) -> Result<f64> {
    gradient_check_with(net, target, batch, eps, Activation::backprop)
}

/// Like [`gradient_check`], with a custom activation backward rule.
pub fn gradient_check_with(
    net: &Network,
    target: Target<'_>,
    batch: &Matrix,
    eps: f64,
    derivative: DerivativeFn,
) -> Result<f64> {
    if net.param_count() > MAX_PARAMS {
        return Err(Error::Config(format!(
            "gradient check limited to {MAX_PARAMS} parameters, network has {}",
            net.param_count()
        )));
    }
    let trace = net.forward(batch)?;
    let (_, out_grad) = target.evaluate(net, trace.output())?;
    let analytic = backward_with(net, &trace, &out_grad, derivative)?.flatten();

    let mut probe = net.clone();
    let mut max_rel: f64 = 0.0;
    let mut flat = 0usize;
    for li in 0..net.layers().len() {
        let n_w = net.layers()[li].weights().data().len();
        let n_b = net.layers()[li].bias().len();
        for pi in 0..n_w + n_b {
            let numeric = {
                let original = read_param(&probe, li, pi, n_w);
                write_param(&mut probe, li, pi, n_w, original + eps);
                let hi = target.loss(&probe, batch)?;
                write_param(&mut probe, li, pi, n_w, original - eps);
                let lo = target.loss(&probe, batch)?;
                write_param(&mut probe, li, pi, n_w, original);
                (hi - lo) / (2.0 * eps)
            };
            let a = analytic[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
            flat += 1;
        }
    }
    Ok(max_rel)
}

fn read_param(net: &Network, layer: usize, index: usize, n_w: usize) -> f64 {
    let l = &net.layers()[layer];
    if index < n_w {
        l.weights().data()[index]
    } else {
        l.bias()[index - n_w]
    }
}

fn write_param(net: &mut Network, layer: usize, index: usize, n_w: usize, value: f64) {
    let l = &mut net.layers_mut()[layer];
    if index < n_w {
        l.weights.data_mut()[index] = value;
    } else {
        l.bias[index - n_w] = value;
    }
}

/// Smallest `|z|` over all ReLU pre-activations for `batch`, or infinity if
/// the network has no ReLU layer.
pub fn relu_margin(net: &Network, batch: &Matrix) -> Result<f64> {
    let trace = net.forward(batch)?;
    Ok(net
        .layers()
        .iter()
        .zip(&trace.pre)
        .filter(|(l, _)| l.activation() == Activation::Relu)
        .flat_map(|(_, z)| z.data().iter().map(|v| v.abs()))
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

/// One architecture of the standard suite.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: &'static str,
    pub dims: &'static [usize],
    pub activations: &'static [Activation],
    pub loss: LossKind,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub params: usize,
    pub max_relative_error: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error < SUITE_TOLERANCE
    }
}

/// Five small architectures covering every activation and both losses.
pub fn suite_cases() -> Vec<SuiteCase> {
    use Activation::*;
    vec![
        SuiteCase {
            name: "linear-linear/mse",
            dims: &[4, 3, 2],
            activations: &[Linear, Linear],
            loss: LossKind::Mse,
        },
        SuiteCase {
            name: "relu-linear/mse",
            dims: &[5, 6, 3],
            activations: &[Relu, Linear],
            loss: LossKind::Mse,
        },
        SuiteCase {
            name: "sigmoid-softmax/xent",
            dims: &[4, 5, 3],
            activations: &[Sigmoid, Softmax],
            loss: LossKind::CrossEntropy,
        },
        SuiteCase {
            name: "relu-sigmoid-linear/mse",
            dims: &[6, 5, 4, 3],
            activations: &[Relu, Sigmoid, Linear],
            loss: LossKind::Mse,
        },
        SuiteCase {
            name: "autoencoder+head/xent",
            dims: &[6, 4, 2, 4, 6, 5, 3],
            activations: &[Relu, Relu, Relu, Linear, Sigmoid, Softmax],
            loss: LossKind::CrossEntropy,
        },
    ]
}

const SUITE_BATCH: usize = 4;

/// Runs every case of [`suite_cases`] with a seeded network and a batch
/// chosen so that no ReLU sits within [`KINK_MARGIN`] of its kink.
pub fn run_suite(seed: u64, derivative: DerivativeFn) -> Result<Vec<SuiteResult>> {
    suite_cases()
        .iter()
        .enumerate()
        .map(|(i, case)| run_case(case, seed.wrapping_add(i as u64), derivative))
        .collect()
}

fn run_case(case: &SuiteCase, seed: u64, derivative: DerivativeFn) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = case
        .dims
        .windows(2)
        .zip(case.activations)
        .map(|(d, &act)| init_layer(d[0], d[1], act, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut net = Network::new(case.dims[0], layers)?;
    // Nonzero biases so bias gradients are exercised away from symmetric points.
    for layer in net.layers_mut() {
        for b in &mut layer.bias {
            *b = rng.random_range(-0.1..0.1);
        }
    }

    let in_dim = case.dims[0];
    let out_dim = *case.dims.last().unwrap_or(&1);
    let mut batch = None;
    for _ in 0..1000 {
        let data = (0..SUITE_BATCH * in_dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let candidate = Matrix::new(SUITE_BATCH, in_dim, data)?;
        if relu_margin(&net, &candidate)? >= KINK_MARGIN {
            batch = Some(candidate);
            break;
        }
    }
    let batch = batch.ok_or_else(|| {
        Error::Config(format!("{}: no kink-free batch found", case.name))
    })?;

    let max_relative_error = match case.loss {
        LossKind::Mse => {
            let data = (0..SUITE_BATCH * out_dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let targets = Matrix::new(SUITE_BATCH, out_dim, data)?;
            gradient_check_with(&net, Target::Regression(&targets), &batch, DEFAULT_EPS, derivative)?
        }
        LossKind::CrossEntropy => {
            let labels: Vec<usize> = (0..SUITE_BATCH).map(|_| rng.random_range(0..out_dim)).collect();
            gradient_check_with(&net, Target::Classes(&labels), &batch, DEFAULT_EPS, derivative)?
        }
    };
    Ok(SuiteResult {
        name: case.name,
        params: net.param_count(),
        max_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseLayer;

    fn random_net(dims: &[usize], acts: &[Activation], seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(d, &a)| init_layer(d[0], d[1], a, &mut rng).unwrap())
            .collect();
        Network::new(dims[0], layers).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn linear_mse_is_nearly_exact() {
        let net = random_net(&[4, 3], &[Activation::Linear], 1);
        let x = random_matrix(5, 4, 2);
        let y = random_matrix(5, 3, 3);
        let err = gradient_check(&net, Target::Regression(&y), &x, DEFAULT_EPS).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn three_layer_mixed_net() {
        let net = random_net(
            &[5, 4, 4, 2],
            &[Activation::Relu, Activation::Sigmoid, Activation::Linear],
            7,
        );
        let mut seed = 100;
        let x = loop {
            let x = random_matrix(3, 5, seed);
            if relu_margin(&net, &x).unwrap() >= KINK_MARGIN {
                break x;
            }
            seed += 1;
        };
        let y = random_matrix(3, 2, 8);
        let err = gradient_check(&net, Target::Regression(&y), &x, DEFAULT_EPS).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    fn doubled(act: Activation, pre: &Matrix, post: &Matrix, g: &Matrix) -> Result<Matrix> {
        act.backprop(pre, post, g)?.scale(2.0)
    }

    #[test]
    fn doubled_gradient_is_detected() {
        // Single layer: every analytic entry is exactly 2g, so the error is
        // |2g − g| / max(|2g|, |g|) = 1/2.
        let net = random_net(&[3, 2], &[Activation::Linear], 4);
        let x = random_matrix(4, 3, 5);
        let y = random_matrix(4, 2, 6);
        let err = gradient_check_with(&net, Target::Regression(&y), &x, DEFAULT_EPS, doubled).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "{err}");
    }

    #[test]
    fn oversized_network_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = DenseLayer::glorot(200, 60, Activation::Linear, &mut rng).unwrap();
        let net = Network::new(200, vec![layer]).unwrap();
        let x = Matrix::zeros(1, 200);
        let y = Matrix::zeros(1, 60);
        assert!(matches!(
            gradient_check(&net, Target::Regression(&y), &x, DEFAULT_EPS),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn standard_suite_passes() {
        let results = run_suite(0, Activation::backprop).unwrap();
        assert_eq!(results.len(), 5);
        for r in &results {
            assert!(r.passed(), "{}: {}", r.name, r.max_relative_error);
        }
    }
}
