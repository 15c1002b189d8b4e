//! Alternating optimization of network weights and shadow codes.
//!
//! Each outer iteration runs mini-batch back-propagation with the shadow
//! codes `U` held fixed, then replaces `U` by the sign of the network's
//! outputs over the whole training set, which is the exact minimizer of
//! `‖U − B‖²_F` over `{±1}`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{LabeledImageSet, SimilarityOracle};
use crate::error::{Error, Result};
use crate::losses::{cauchy_loss_and_gradient, dsh_loss_and_gradient, srh_loss_and_gradient, PairLabels, SrhLoss, SrhParams};
use crate::nn::{xavier_init, Network, Sgd, SgdConfig};
use crate::tensor::{Scalar, Tensor};

/// Sign with `sign(0) = +1`, shared by shadow updates and code packing.
#[inline]
pub fn sign(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

/// `N×k` matrix with entries exactly ±1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShadowCodes {
    codes: Array2<i8>,
}

impl ShadowCodes {
    pub fn new(codes: Array2<i8>) -> Result<Self> {
        if let Some(((i, j), v)) = codes.indexed_iter().find(|(_, &v)| v != 1 && v != -1) {
            return Err(Error::Contract(format!("shadow code u[{i},{j}] = {v} is not ±1")));
        }
        Ok(ShadowCodes { codes })
    }

    pub fn view(&self) -> ArrayView2<'_, i8> {
        self.codes.view()
    }

    pub fn len(&self) -> usize {
        self.codes.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.nrows() == 0
    }

    pub fn bits(&self) -> usize {
        self.codes.ncols()
    }

    pub fn rows(&self, ids: &[usize]) -> Array2<i8> {
        self.codes.select(ndarray::Axis(0), ids)
    }

    pub fn into_inner(self) -> Array2<i8> {
        self.codes
    }
}

/// `U = sign(B)` elementwise.
pub fn shadow_update(b: ArrayView2<f64>) -> ShadowCodes {
    ShadowCodes {
        codes: b.mapv(sign),
    }
}

/// Pairwise objective driving the network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// Contrastive pairs + shadow term + norm term.
    Srh { alpha: f64, beta: f64, margin: f64 },
    /// Contrastive pairs + L1 magnitude regularizer.
    Dsh { alpha: f64, margin: f64 },
    /// Cauchy pairwise likelihood.
    Cauchy { gamma: f64 },
}

impl Objective {
    pub fn srh(bits: usize, alpha: f64, beta: f64) -> Self {
        Objective::Srh {
            alpha,
            beta,
            margin: 2.0 * bits as f64,
        }
    }

    /// Loss terms and the gradient used for back-propagation.
    ///
    /// The gradient is normalized per batch: pair terms are divided by the
    /// number of pairs and per-image terms by the number of images.
    pub fn evaluate(
        &self,
        b: ArrayView2<f64>,
        u: ArrayView2<i8>,
        labels: &PairLabels,
    ) -> Result<(SrhLoss, Array2<f64>)> {
        let m = b.nrows().max(1) as f64;
        let pairs = labels.pair_count().max(1) as f64;
        match *self {
            Objective::Srh { alpha, beta, margin } => {
                let p = SrhParams::new(b.ncols(), alpha, beta)?.with_margin(margin);
                let (loss, _) = srh_loss_and_gradient(b, u, labels, &p)?;
                // same gradient with unary weights rescaled by pairs/M, then /pairs
                let scaled = SrhParams {
                    alpha: alpha * pairs / m,
                    beta: beta * pairs / m,
                    ..p
                };
                let (_, mut grad) = srh_loss_and_gradient(b, u, labels, &scaled)?;
                grad /= pairs;
                Ok((loss, grad))
            }
            Objective::Dsh { alpha, margin } => {
                let (loss, mut grad) = dsh_loss_and_gradient(b, labels, margin, alpha)?;
                grad /= pairs;
                Ok((
                    SrhLoss {
                        pair: loss,
                        ..SrhLoss::default()
                    },
                    grad,
                ))
            }
            Objective::Cauchy { gamma } => {
                let (loss, mut grad) = cauchy_loss_and_gradient(b, labels, gamma, None)?;
                grad /= pairs;
                Ok((
                    SrhLoss {
                        pair: loss.value,
                        ..SrhLoss::default()
                    },
                    grad,
                ))
            }
        }
    }
}

/// Step decay of the learning rate: multiply by `factor` every `every` epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecay {
    pub every: usize,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub bits: usize,
    /// Outer iterations `T`.
    pub epochs: usize,
    /// Mini-batch size `M`; the last batch of an epoch may be shorter.
    pub batch_size: usize,
    pub objective: Objective,
    pub sgd: SgdConfig,
    pub lr_decay: Option<StepDecay>,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults: 150 epochs, batch 160, lr 1e-3, momentum 0.9, decay 0.004, m = 2k.
    pub fn srh(bits: usize, alpha: f64, beta: f64) -> Self {
        TrainConfig {
            bits,
            epochs: 150,
            batch_size: 160,
            objective: Objective::srh(bits, alpha, beta),
            sgd: SgdConfig::default(),
            lr_decay: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 {
            return Err(Error::Config("code length k must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epoch count T must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2 to form pairs".into()));
        }
        if !(self.sgd.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if let Some(d) = self.lr_decay {
            if d.every == 0 || !(d.factor > 0.0) {
                return Err(Error::Config("learning-rate decay needs every ≥ 1 and factor > 0".into()));
            }
        }
        match self.objective {
            Objective::Srh { alpha, beta, margin } if alpha < 0.0 || beta < 0.0 || margin <= 0.0 => {
                Err(Error::Config("SRH needs alpha, beta ≥ 0 and margin > 0".into()))
            }
            Objective::Dsh { alpha, margin } if alpha < 0.0 || margin <= 0.0 => {
                Err(Error::Config("DSH needs alpha ≥ 0 and margin > 0".into()))
            }
            Objective::Cauchy { gamma } if gamma <= 0.0 => Err(Error::Config("Cauchy gamma must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Mean per-batch loss terms for one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub pair: f64,
    pub shadow: f64,
    pub norm: f64,
}

pub struct TrainOutcome {
    pub network: Network<f32>,
    /// Shadow codes after the final update, one row per training image.
    pub shadow: ShadowCodes,
    pub trace: Vec<EpochStats>,
}

/// Real-valued network outputs for `ids`, evaluated in batches of `batch`.
pub fn encode_outputs<T: Scalar>(
    net: &Network<T>,
    images: &LabeledImageSet,
    ids: &[usize],
    batch: usize,
) -> Result<Array2<f64>> {
    let k = net.output_dim();
    let mut out = Array2::zeros((ids.len(), k));
    for (c, chunk) in ids.chunks(batch.max(1)).enumerate() {
        let y = net.infer(&images.batch::<T>(chunk))?;
        for (r, row) in y.data().chunks_exact(k).enumerate() {
            for (t, &v) in row.iter().enumerate() {
                out[[c * batch + r, t]] = v.as_f64();
            }
        }
    }
    Ok(out)
}

fn to_tensor(g: &Array2<f64>) -> Tensor<f32> {
    Tensor::from_vec(&[g.nrows(), g.ncols()], g.iter().map(|&v| v as f32).collect())
        .expect("gradient extents match")
}

/// Trains the canonical network on `images` (all ids are training
/// images) with similarity from `oracle`, which must index the same ids.
pub fn train(images: &LabeledImageSet, oracle: &SimilarityOracle, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(images, oracle, cfg, |_| {})
}

/// [`train`] with a callback after each epoch.
pub fn train_with(
    images: &LabeledImageSet,
    oracle: &SimilarityOracle,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if oracle.len() != images.len() {
        return Err(Error::Shape(format!(
            "{} images but similarity for {} ids",
            images.len(),
            oracle.len()
        )));
    }
    let n = images.len();
    let all: Vec<usize> = (0..n).collect();
    let mut net = Network::<f32>::canonical(cfg.bits)?;
    xavier_init(&mut net, cfg.seed);
    let mut sgd = Sgd::new(cfg.sgd, &net);
    let mut shadow = shadow_update(encode_outputs(&net, images, &all, cfg.batch_size)?.view());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order = all.clone();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        if let Some(d) = cfg.lr_decay {
            sgd.config.learning_rate = cfg.sgd.learning_rate * d.factor.powi(((epoch - 1) / d.every) as i32);
        }
        order.shuffle(&mut rng);
        let mut sums = SrhLoss::default();
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let out = net.forward(&images.batch::<f32>(chunk))?;
            let b = Array2::from_shape_vec(
                (chunk.len(), cfg.bits),
                out.data().iter().map(|&v| f64::from(v)).collect(),
            )
            .expect("output extents match");
            let labels = oracle.pair_labels(chunk);
            let u = shadow.rows(chunk);
            let (loss, grad) = cfg.objective.evaluate(b.view(), u.view(), &labels)?;
            if !loss.total().is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "loss {} at epoch {epoch}, batch {bi}",
                    loss.total()
                )));
            }
            net.backward(&to_tensor(&grad))?;
            sgd.step(&mut net)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {bi}: {e}")))?;
            sums.pair += loss.pair;
            sums.shadow += loss.shadow;
            sums.norm += loss.norm;
            batches += 1;
        }
        let outputs = encode_outputs(&net, images, &all, cfg.batch_size)?;
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("network outputs diverged after epoch {epoch}")));
        }
        shadow = shadow_update(outputs.view());
        let d = batches.max(1) as f64;
        let stats = EpochStats {
            epoch,
            mean_loss: sums.total() / d,
            pair: sums.pair / d,
            shadow: sums.shadow / d,
            norm: sums.norm / d,
        };
        log::debug!("epoch {epoch}: loss {:.6}", stats.mean_loss);
        on_epoch(&stats);
        trace.push(stats);
    }
    let violations = smoothed_increases(&trace, 5);
    if violations > 0 {
        log::warn!("smoothed training loss increased in {violations} window(s)");
    }
    Ok(TrainOutcome {
        network: net,
        shadow,
        trace,
    })
}

/// Number of consecutive non-overlapping `window`-epoch means that increase.
pub fn smoothed_increases(trace: &[EpochStats], window: usize) -> usize {
    let means: Vec<f64> = trace
        .chunks(window.max(1))
        .filter(|c| c.len() == window.max(1))
        .map(|c| c.iter().map(|s| s.mean_loss).sum::<f64>() / c.len() as f64)
        .collect();
    means.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Tab-separated `epoch, mean_loss, pair_term, shadow_term, norm_term` lines.
pub fn format_trace(trace: &[EpochStats]) -> String {
    let mut s = String::new();
    for e in trace {
        writeln!(
            s,
            "{}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}",
            e.epoch, e.mean_loss, e.pair, e.shadow, e.norm
        )
        .expect("writing to a String");
    }
    s
}

pub fn write_trace(path: impl AsRef<Path>, trace: &[EpochStats]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_trace(trace)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sign_convention() {
        let u = shadow_update(array![[0.3, -2.0, 0.0]].view());
        assert_eq!(u.view(), array![[1i8, -1, 1]]);
    }

    #[test]
    fn shadow_codes_reject_zero() {
        assert!(ShadowCodes::new(array![[1i8, 0]]).is_err());
    }

    #[test]
    fn zero_epochs_is_a_config_error() {
        let mut cfg = TrainConfig::srh(4, 0.01, 0.01);
        cfg.epochs = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = TrainConfig::srh(0, 0.01, 0.01);
        cfg.epochs = 1;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn trace_lines_have_five_fields() {
        let t = [EpochStats {
            epoch: 1,
            mean_loss: 3.0,
            pair: 2.0,
            shadow: 0.5,
            norm: 0.5,
        }];
        let s = format_trace(&t);
        assert_eq!(s.lines().count(), 1);
        assert_eq!(s.trim_end().split('\t').count(), 5);
    }
}
