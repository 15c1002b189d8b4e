//! Pairwise hashing objectives over all unordered pairs of a mini-batch.
//!
//! Pair labels follow the contrastive convention: `y = 0` similar,
//! `y = 1` dissimilar. Pairs are visited in lexicographic `(i, j)` order,
//! `i < j`, so sums are reproducible.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Symmetric 0/1 pair-label matrix (`0` similar, `1` dissimilar).
#[derive(Clone, Debug, PartialEq)]
pub struct PairLabels {
    y: Array2<u8>,
}

impl PairLabels {
    pub fn new(y: Array2<u8>) -> Result<Self> {
        if y.nrows() != y.ncols() {
            return Err(Error::Shape(format!("pair labels must be square, got {:?}", y.dim())));
        }
        for ((i, j), &v) in y.indexed_iter() {
            if v > 1 {
                return Err(Error::Contract(format!("pair label y[{i},{j}] = {v} is not 0/1")));
            }
            if y[[j, i]] != v {
                return Err(Error::Contract(format!("pair labels not symmetric at ({i},{j})")));
            }
        }
        Ok(PairLabels { y })
    }

    /// Pairs sharing a class are similar.
    pub fn from_classes<L: PartialEq>(classes: &[L]) -> Self {
        let n = classes.len();
        PairLabels {
            y: Array2::from_shape_fn((n, n), |(i, j)| u8::from(classes[i] != classes[j])),
        }
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }

    pub fn dissimilar(&self, i: usize, j: usize) -> bool {
        self.y[[i, j]] == 1
    }

    pub fn matrix(&self) -> &Array2<u8> {
        &self.y
    }

    /// Number of unordered pairs, `M(M−1)/2`.
    pub fn pair_count(&self) -> usize {
        let m = self.len();
        m * m.saturating_sub(1) / 2
    }

    /// Unordered pairs `(i, j)` with `i < j` in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let m = self.len();
        (0..m).flat_map(move |i| (i + 1..m).map(move |j| (i, j)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrhParams {
    pub bits: usize,
    /// Squared-distance margin for dissimilar pairs; `2·bits` by default.
    pub margin: f64,
    /// Weight of the shadow term.
    pub alpha: f64,
    /// Weight of the norm term.
    pub beta: f64,
}

impl SrhParams {
    pub fn new(bits: usize, alpha: f64, beta: f64) -> Result<Self> {
        if bits == 0 {
            return Err(Error::Config("code length k must be positive".into()));
        }
        if !(alpha >= 0.0 && beta >= 0.0) {
            return Err(Error::Parameter(format!(
                "alpha and beta must be non-negative, got {alpha}, {beta}"
            )));
        }
        Ok(SrhParams {
            bits,
            margin: 2.0 * bits as f64,
            alpha,
            beta,
        })
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }
}

/// The three terms of the shadow-regularized loss.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SrhLoss {
    pub pair: f64,
    pub shadow: f64,
    pub norm: f64,
}

impl SrhLoss {
    pub fn total(&self) -> f64 {
        self.pair + self.shadow + self.norm
    }
}

fn check_batch(b: &ArrayView2<f64>, labels: &PairLabels) -> Result<()> {
    if labels.len() != b.nrows() {
        return Err(Error::Shape(format!(
            "{} codes but pair labels for {} items",
            b.nrows(),
            labels.len()
        )));
    }
    Ok(())
}

fn check_srh(b: &ArrayView2<f64>, u: &ArrayView2<i8>, labels: &PairLabels, p: &SrhParams) -> Result<()> {
    check_batch(b, labels)?;
    if b.ncols() != p.bits {
        return Err(Error::Shape(format!("codes have {} bits, expected {}", b.ncols(), p.bits)));
    }
    if u.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "shadow codes {:?} do not match outputs {:?}",
            u.dim(),
            b.dim()
        )));
    }
    if let Some(((i, j), v)) = u.indexed_iter().find(|(_, &v)| v != 1 && v != -1) {
        return Err(Error::Contract(format!("shadow code u[{i},{j}] = {v} is not ±1")));
    }
    Ok(())
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Loss and `∂L/∂B` in one pass.
///
/// ```text
/// L = Σ_{i<j} ½(1−y)‖bᵢ−bⱼ‖² + ½y·max(m−‖bᵢ−bⱼ‖², 0)
///   + (α/2)Σ‖bᵢ−uᵢ‖² + (β/2)Σ(‖bᵢ‖²−k)²
/// ```
///
/// The hinge is inactive at `‖bᵢ−bⱼ‖² = m`.
pub fn srh_loss_and_gradient(
    b: ArrayView2<f64>,
    u: ArrayView2<i8>,
    labels: &PairLabels,
    p: &SrhParams,
) -> Result<(SrhLoss, Array2<f64>)> {
    check_srh(&b, &u, labels, p)?;
    let mut grad = Array2::zeros(b.dim());
    let mut loss = SrhLoss::default();
    for (i, j) in labels.pairs() {
        let (bi, bj) = (b.row(i), b.row(j));
        let d = sq_dist(bi, bj);
        let sign = if !labels.dissimilar(i, j) {
            loss.pair += 0.5 * d;
            1.0
        } else if d < p.margin {
            loss.pair += 0.5 * (p.margin - d);
            -1.0
        } else {
            continue;
        };
        for t in 0..p.bits {
            let diff = sign * (bi[t] - bj[t]);
            grad[[i, t]] += diff;
            grad[[j, t]] -= diff;
        }
    }
    let k = p.bits as f64;
    for (i, (bi, ui)) in b.outer_iter().zip(u.outer_iter()).enumerate() {
        let norm2: f64 = bi.iter().map(|x| x * x).sum();
        let excess = norm2 - k;
        loss.norm += 0.5 * p.beta * excess * excess;
        let mut row = grad.row_mut(i);
        for t in 0..p.bits {
            let r = bi[t] - f64::from(ui[t]);
            loss.shadow += 0.5 * p.alpha * r * r;
            row[t] += p.alpha * r + 2.0 * p.beta * excess * bi[t];
        }
    }
    Ok((loss, grad))
}

pub fn srh_loss(b: ArrayView2<f64>, u: ArrayView2<i8>, labels: &PairLabels, p: &SrhParams) -> Result<SrhLoss> {
    srh_loss_and_gradient(b, u, labels, p).map(|(l, _)| l)
}

pub fn srh_gradient(
    b: ArrayView2<f64>,
    u: ArrayView2<i8>,
    labels: &PairLabels,
    p: &SrhParams,
) -> Result<Array2<f64>> {
    srh_loss_and_gradient(b, u, labels, p).map(|(_, g)| g)
}

/// Contrastive pair term plus the L1 magnitude regularizer
/// `α(‖|b₁|−1‖₁ + ‖|b₂|−1‖₁)`, charged once per pair.
pub fn dsh_loss(b: ArrayView2<f64>, labels: &PairLabels, margin: f64, alpha: f64) -> Result<f64> {
    dsh_loss_and_gradient(b, labels, margin, alpha).map(|(l, _)| l)
}

/// [`dsh_loss`] with a subgradient (zero at the kinks `|b| = 1` and `b = 0`).
pub fn dsh_loss_and_gradient(
    b: ArrayView2<f64>,
    labels: &PairLabels,
    margin: f64,
    alpha: f64,
) -> Result<(f64, Array2<f64>)> {
    check_batch(&b, labels)?;
    let k = b.ncols();
    let mut grad = Array2::zeros(b.dim());
    let mut loss = 0.0;
    let reg: Vec<f64> = b
        .outer_iter()
        .map(|row| row.iter().map(|x| (x.abs() - 1.0).abs()).sum())
        .collect();
    for (i, j) in labels.pairs() {
        let (bi, bj) = (b.row(i), b.row(j));
        let d = sq_dist(bi, bj);
        let sign = if !labels.dissimilar(i, j) {
            loss += 0.5 * d;
            1.0
        } else if d < margin {
            loss += 0.5 * (margin - d);
            -1.0
        } else {
            0.0
        };
        loss += alpha * (reg[i] + reg[j]);
        if sign != 0.0 {
            for t in 0..k {
                let diff = sign * (bi[t] - bj[t]);
                grad[[i, t]] += diff;
                grad[[j, t]] -= diff;
            }
        }
    }
    let partners = b.nrows().saturating_sub(1) as f64;
    Zip::from(&mut grad).and(&b).for_each(|g, &x| {
        *g += alpha * partners * signum0(x.abs() - 1.0) * signum0(x);
    });
    Ok((loss, grad))
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Probabilities are clamped from below at this value inside logarithms.
pub const CAUCHY_CLAMP: f64 = 1e-12;

/// Cauchy similarity probability `γ / (γ + d)`.
pub fn cauchy_probability(d: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Parameter(format!("gamma must be positive, got {gamma}")));
    }
    if !(d >= 0.0) {
        return Err(Error::Parameter(format!("distance must be non-negative, got {d}")));
    }
    Ok(gamma / (gamma + d))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CauchyLoss {
    pub value: f64,
    /// Pairs whose probability hit the clamp.
    pub clamped_pairs: usize,
}

/// Weighted negative log-likelihood of the pair labels under the Cauchy
/// probability of the distance surrogate `d = ¼‖bᵢ−bⱼ‖²` (equal to the
/// Hamming distance for ±1 codes). `weights` defaults to all ones.
pub fn cauchy_pairwise_loss(
    b: ArrayView2<f64>,
    labels: &PairLabels,
    gamma: f64,
    weights: Option<ArrayView2<f64>>,
) -> Result<CauchyLoss> {
    cauchy_loss_and_gradient(b, labels, gamma, weights).map(|(l, _)| l)
}

/// [`cauchy_pairwise_loss`] and its gradient. Clamped pairs contribute a
/// constant and therefore no gradient.
pub fn cauchy_loss_and_gradient(
    b: ArrayView2<f64>,
    labels: &PairLabels,
    gamma: f64,
    weights: Option<ArrayView2<f64>>,
) -> Result<(CauchyLoss, Array2<f64>)> {
    check_batch(&b, labels)?;
    cauchy_probability(0.0, gamma)?;
    if let Some(w) = &weights {
        if w.dim() != (b.nrows(), b.nrows()) {
            return Err(Error::Shape(format!("pair weights {:?} for {} codes", w.dim(), b.nrows())));
        }
    }
    let k = b.ncols();
    let mut grad = Array2::zeros(b.dim());
    let mut out = CauchyLoss::default();
    for (i, j) in labels.pairs() {
        let w = weights.as_ref().map_or(1.0, |w| w[[i, j]]);
        let (bi, bj) = (b.row(i), b.row(j));
        let d = 0.25 * sq_dist(bi, bj);
        let sigma = gamma / (gamma + d);
        let similar = !labels.dissimilar(i, j);
        let (p, dp_dsigma_sign) = if similar { (sigma, 1.0) } else { (1.0 - sigma, -1.0) };
        let clamped = p.max(CAUCHY_CLAMP);
        out.value += -w * clamped.ln();
        if clamped != p {
            out.clamped_pairs += 1;
            continue;
        }
        // dσ/dd = −γ/(γ+d)²; d(−ln p)/dd = −(1/p)·dp/dσ·dσ/dd
        let dsigma_dd = -gamma / ((gamma + d) * (gamma + d));
        let dl_dd = -w * dp_dsigma_sign * dsigma_dd / p;
        for t in 0..k {
            let g = dl_dd * 0.5 * (bi[t] - bj[t]);
            grad[[i, t]] += g;
            grad[[j, t]] -= g;
        }
    }
    Ok((out, grad))
}
