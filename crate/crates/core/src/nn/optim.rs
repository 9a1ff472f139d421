use super::{Gradients, Network};
use crate::error::{Error, Result};

/// Classical (heavy-ball) momentum SGD:
/// `v ← μ·v − lr·g`, `θ ← θ + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    momentum: f64,
    /// Flat velocity per layer: weights row-major, then bias.
    velocities: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(net: &Network, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        let velocities = net
            .layers()
            .iter()
            .map(|l| vec![0.0; l.param_count()])
            .collect();
        Ok(Self {
            momentum,
            velocities,
        })
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn velocities(&self) -> &[Vec<f64>] {
        &self.velocities
    }

    /// Applies one update in place. The network is left untouched if the
    /// gradient contains a non-finite value or if the update would produce
    /// one.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != self.velocities.len() || grads.layers.len() != net.layers().len() {
            return Err(Error::Config(format!(
                "gradient has {} layers, optimizer tracks {}",
                grads.layers.len(),
                self.velocities.len()
            )));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".to_owned()));
        }
        for ((layer, g), v) in net.layers().iter().zip(&grads.layers).zip(&self.velocities) {
            if g.weights.shape() != layer.weights().shape() || g.bias.len() != layer.bias().len() {
                return Err(Error::shape(
                    "optimizer step",
                    layer.weights().shape(),
                    g.weights.shape(),
                ));
            }
            debug_assert_eq!(v.len(), layer.param_count());
        }

        let mu = self.momentum;
        let mut new_velocities = self.velocities.clone();
        let mut updated: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(grads.layers.len());
        for ((layer, g), v) in net.layers().iter().zip(&grads.layers).zip(&mut new_velocities) {
            let n_w = layer.weights().data().len();
            let grad = g.weights.data().iter().chain(&g.bias);
            for (vi, &gi) in v.iter_mut().zip(grad) {
                *vi = mu * *vi - lr * gi;
            }
            let weights: Vec<f64> = layer
                .weights()
                .data()
                .iter()
                .zip(&v[..n_w])
                .map(|(p, dv)| p + dv)
                .collect();
            let bias: Vec<f64> = layer.bias().iter().zip(&v[n_w..]).map(|(p, dv)| p + dv).collect();
            if v.iter().chain(&weights).chain(&bias).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("parameter update".to_owned()));
            }
            updated.push((weights, bias));
        }

        for (layer, (weights, bias)) in net.layers_mut().iter_mut().zip(updated) {
            layer.weights.data_mut().copy_from_slice(&weights);
            layer.bias = bias;
        }
        self.velocities = new_velocities;
        Ok(())
    }
}

/// Functional form: returns the updated network and optimizer state.
pub fn sgd_momentum_step(
    net: &Network,
    grads: &Gradients,
    state: &OptimizerState,
    lr: f64,
) -> Result<(Network, OptimizerState)> {
    let mut net = net.clone();
    let mut state = state.clone();
    state.step(&mut net, grads, lr)?;
    Ok((net, state))
}
