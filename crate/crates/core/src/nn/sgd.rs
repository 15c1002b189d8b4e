use super::{Network, Param};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 0.004,
        }
    }
}

/// Momentum SGD with L2 weight decay on weights (not biases):
///
/// ```text
/// v ← momentum·v − lr·(grad + weight_decay·param)
/// param ← param + v
/// ```
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub config: SgdConfig,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(config: SgdConfig, net: &Network<T>) -> Self {
        let velocity = net
            .params()
            .into_iter()
            .map(|(_, p, _)| Tensor::zeros(p.shape()))
            .collect();
        Sgd { config, velocity }
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    pub fn step(&mut self, net: &mut Network<T>) -> Result<()> {
        self.step_params(net.params_mut())
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step_params(&mut self, mut params: Vec<Param<'_, T>>) -> Result<()> {
        if params.len() != self.velocity.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.velocity.len(),
                params.len()
            )));
        }
        for (p, v) in params.iter().zip(&self.velocity) {
            if p.grad.shape() != p.value.shape() || v.shape() != p.value.shape() {
                return Err(Error::Shape(format!(
                    "{}: gradient {:?} / velocity {:?} vs parameter {:?}",
                    p.name,
                    p.grad.shape(),
                    v.shape(),
                    p.value.shape()
                )));
            }
            if let Some(pos) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {} at element {pos} is {}",
                    p.name,
                    p.grad.data()[pos]
                )));
            }
        }
        let lr = T::from_f64_lossy(self.config.learning_rate);
        let mu = T::from_f64_lossy(self.config.momentum);
        let wd = T::from_f64_lossy(self.config.weight_decay);
        for (p, v) in params.iter_mut().zip(self.velocity.iter_mut()) {
            let decay = if p.decays { wd } else { T::zero() };
            for ((x, &g), vel) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(v.data_mut())
            {
                *vel = mu * *vel - lr * (g + decay * *x);
                *x += *vel;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, LayerSpec};

    fn tiny() -> Network<f64> {
        let mut net = Network::new(&[2], &[LayerSpec::FullyConnected { outputs: 1 }]).unwrap();
        if let Layer::Linear(l) = &mut net.layers_mut()[0] {
            l.weight = Tensor::from_vec(&[1, 2], vec![0.5, -1.0]).unwrap();
            l.bias = Tensor::from_vec(&[1], vec![0.25]).unwrap();
        }
        net
    }

    fn set_grads(net: &mut Network<f64>, w: [f64; 2], b: f64) {
        if let Layer::Linear(l) = &mut net.layers_mut()[0] {
            l.weight_grad = Tensor::from_vec(&[1, 2], w.to_vec()).unwrap();
            l.bias_grad = Tensor::from_vec(&[1], vec![b]).unwrap();
        }
    }

    fn values(net: &Network<f64>) -> Vec<f64> {
        net.params().iter().flat_map(|(_, p, _)| p.data().to_vec()).collect()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = tiny();
        let before = values(&net);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
        };
        let mut sgd = Sgd::new(cfg, &net);
        sgd.step(&mut net).unwrap();
        assert_eq!(values(&net), before);
    }

    #[test]
    fn plain_sgd_subtracts_lr_times_grad() {
        let mut net = tiny();
        set_grads(&mut net, [1.0, -2.0], 4.0);
        let cfg = SgdConfig {
            learning_rate: 0.125,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        let mut sgd = Sgd::new(cfg, &net);
        sgd.step(&mut net).unwrap();
        assert_eq!(values(&net), vec![0.5 - 0.125, -1.0 + 0.25, 0.25 - 0.5]);
    }

    #[test]
    fn two_momentum_steps_follow_hand_recurrence() {
        let mut net = tiny();
        let (lr, mu, wd) = (0.01, 0.9, 0.004);
        let mut sgd = Sgd::new(
            SgdConfig {
                learning_rate: lr,
                momentum: mu,
                weight_decay: wd,
            },
            &net,
        );
        set_grads(&mut net, [1.0, -2.0], 4.0);
        sgd.step(&mut net).unwrap();
        set_grads(&mut net, [0.5, 0.5], -1.0);
        sgd.step(&mut net).unwrap();

        // hand-unrolled for w0 (decayed) and the bias (not decayed)
        let w0 = 0.5;
        let v1 = -lr * (1.0 + wd * w0);
        let w1 = w0 + v1;
        let v2 = mu * v1 - lr * (0.5 + wd * w1);
        let w2 = w1 + v2;
        let b0 = 0.25;
        let u1 = -lr * 4.0;
        let b1 = b0 + u1;
        let u2 = mu * u1 - lr * -1.0;
        let b2 = b1 + u2;
        let got = values(&net);
        assert!((got[0] - w2).abs() < 1e-15);
        assert!((got[2] - b2).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut net = tiny();
        set_grads(&mut net, [f64::NAN, 0.0], 0.0);
        let before = values(&net);
        let mut sgd = Sgd::new(SgdConfig::default(), &net);
        let err = sgd.step(&mut net).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert!(err.to_string().contains("fc1.weight"));
        assert_eq!(values(&net), before);
    }
}
