//! Small hand-written neural classifiers: a 1-D convolutional network and
//! an LSTM, both reading the ordered factor vector as a one-channel
//! sequence. Forward passes can emit full activation traces for
//! reference-based attribution.
//!
//! Everything is deliberately desk-scale: explicit loops, flat `Vec<f64>`
//! parameter vectors (so finite-difference checks can sweep every single
//! weight), and plain momentum SGD.

pub mod cnn;
pub mod lstm;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cnn::{train_cnn, CnnConfig, CnnModel, CnnTrace};
pub use lstm::{train_lstm, LstmConfig, LstmModel, LstmTrace};

/// Hidden-layer nonlinearity. `Identity` exists for linear toy models used
/// in diagnostics and tests; the search grids only use `Relu` and `Tanh`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    /// Exponential linear unit with α = 1.
    Elu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through pre- and post-activation values (the
    /// post value is enough for tanh/elu; the pre value settles relu).
    #[inline]
    pub fn derivative(&self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
            Activation::Elu => {
                if pre > 0.0 {
                    1.0
                } else {
                    post + 1.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Output head: the probability-producing sigmoid, or raw identity for
/// linear diagnostic stacks (trained with squared error instead of
/// cross-entropy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

/// Layer-by-layer record of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationTrace {
    Cnn(CnnTrace),
    Lstm(LstmTrace),
}

impl ActivationTrace {
    pub fn score(&self) -> f64 {
        match self {
            ActivationTrace::Cnn(t) => t.score,
            ActivationTrace::Lstm(t) => t.score,
        }
    }

    pub fn input(&self) -> &[f64] {
        match self {
            ActivationTrace::Cnn(t) => &t.input,
            ActivationTrace::Lstm(t) => &t.input,
        }
    }
}

/// Uniform Glorot draw: ±√(6/(fan_in+fan_out)).
pub(crate) fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, count: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Shared training-loop contract implemented by both networks.
/// Flat-parameter view of a network: enough to train it with [`sgd_train`]
/// and to verify its analytic gradients against finite differences.
pub trait NeuralNet {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    /// Length of the dropout mask vector (the layer dropout acts on).
    fn mask_len(&self) -> usize;
    /// Mean loss over the batch and its gradient w.r.t. every parameter.
    /// `masks`, when present, holds one multiplier vector per sample.
    fn loss_and_grad(&self, xs: &[&[f64]], ys: &[f64], masks: Option<&[Vec<f64>]>)
        -> (f64, Vec<f64>);
}

/// Momentum minibatch SGD. Returns the mean training loss after each epoch
/// (computed without dropout). Deterministic for a given starting RNG.
pub(crate) fn sgd_train<N: NeuralNet>(
    net: &mut N,
    xs: &[Vec<f64>],
    ys: &[f64],
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    momentum: f64,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if !(learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::InvalidArgument(format!(
            "dropout must lie in [0, 1), got {dropout}"
        )));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be ≥ 1".into()));
    }
    let n = xs.len();
    let mut params = net.params();
    let mut velocity = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let keep = 1.0 - dropout;
    let mut epoch_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
        for chunk in order.chunks(batch_size) {
            let bx: Vec<&[f64]> = chunk.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<f64> = chunk.iter().map(|&i| ys[i]).collect();
            let masks = if dropout > 0.0 {
                // Inverted dropout: surviving units are scaled up so the
                // inference pass needs no correction.
                Some(
                    (0..bx.len())
                        .map(|_| {
                            (0..net.mask_len())
                                .map(|_| {
                                    if rng.gen_range(0.0..1.0) < dropout {
                                        0.0
                                    } else {
                                        1.0 / keep
                                    }
                                })
                                .collect::<Vec<f64>>()
                        })
                        .collect::<Vec<_>>(),
                )
            } else {
                None
            };
            let (_, grad) = net.loss_and_grad(&bx, &by, masks.as_deref());
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = momentum * *v - learning_rate * g;
                *p += *v;
            }
            net.set_params(&params)?;
        }
        let all: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let (loss, _) = net.loss_and_grad(&all, ys, None);
        if !loss.is_finite() {
            return Err(Error::InvalidArgument(
                "training diverged to a non-finite loss; lower the learning rate".into(),
            ));
        }
        epoch_losses.push(loss);
    }
    Ok(epoch_losses)
}

/// Head loss and its derivative w.r.t. the pre-head value, per sample:
/// cross-entropy through a sigmoid head, squared error through identity.
#[inline]
pub(crate) fn head_loss_and_delta(output: OutputActivation, z: f64, y: f64) -> (f64, f64, f64) {
    match output {
        OutputActivation::Sigmoid => {
            let p = crate::learners::logistic::sigmoid(z);
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            (p, softplus - y * z, p - y)
        }
        OutputActivation::Identity => (z, 0.5 * (z - y) * (z - y), z - y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations_and_derivatives_agree_with_finite_differences() {
        let h = 1e-6;
        for act in [
            Activation::Relu,
            Activation::Tanh,
            Activation::Elu,
            Activation::Identity,
        ] {
            for z in [-1.7, -0.3, 0.4, 2.1] {
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                let an = act.derivative(z, act.apply(z));
                assert!(
                    (fd - an).abs() < 1e-6,
                    "{act:?} at {z}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn elu_is_continuous_at_zero() {
        assert_eq!(Activation::Elu.apply(0.0), 0.0);
        assert!((Activation::Elu.apply(-1e-12) - (-1e-12)).abs() < 1e-20);
        assert_eq!(Activation::Elu.apply(-30.0), (-30.0_f64).exp_m1());
    }

    #[test]
    fn glorot_draws_respect_the_limit() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = glorot(&mut rng, 10, 14, 1000);
        let limit = (6.0 / 24.0_f64).sqrt();
        assert!(draws.iter().all(|w| w.abs() < limit));
        // Not degenerate.
        let spread = draws.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
        assert!(spread > 0.5 * limit);
    }

    #[test]
    fn head_loss_matches_definitions() {
        // Sigmoid head at z=0: p=0.5, loss=ln 2, delta=0.5−y.
        let (p, loss, delta) = head_loss_and_delta(OutputActivation::Sigmoid, 0.0, 1.0);
        assert_eq!(p, 0.5);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(delta, -0.5);
        // Identity head: squared error.
        let (p, loss, delta) = head_loss_and_delta(OutputActivation::Identity, 2.0, 0.5);
        assert_eq!(p, 2.0);
        assert_eq!(loss, 0.5 * 1.5 * 1.5);
        assert_eq!(delta, 1.5);
    }
}
