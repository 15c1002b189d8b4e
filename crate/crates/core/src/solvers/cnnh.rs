//! Approximate factorization `S ≈ (1/q)·HHᵀ` of a ±1 similarity matrix by
//! cyclic single-entry exact minimization with `H` confined to `[−1, 1]`.
//!
//! With every other entry fixed, the objective as a function of
//! `x = H_ij` is the quartic
//!
//! ```text
//! f(x) = 2 Σ_{l≠i} (r_l − x·H_lj/q)² + (e − x²/q)²
//! r_l = S_il − Σ_{t≠j} H_it·H_lt / q,   e = S_ii − Σ_{t≠j} H_it² / q
//! ```
//!
//! whose stationary points solve the depressed cubic
//! `x³ + p·x + c₀ = 0` with `p = Σ_{l≠i} H_lj² − q·e` and
//! `c₀ = −q·Σ_{l≠i} H_lj·r_l`. The update takes the best of the real roots
//! inside `[−1, 1]`, the two bounds and the current value, so the
//! objective never increases.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Symmetric ±1 similarity with a +1 diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SignSimilarity {
    s: Array2<f64>,
}

impl SignSimilarity {
    pub fn new(s: Array2<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() {
            return Err(Error::Shape(format!("similarity must be square, got {:?}", s.dim())));
        }
        for ((i, j), &v) in s.indexed_iter() {
            if v != 1.0 && v != -1.0 {
                return Err(Error::Contract(format!("S[{i},{j}] = {v} is not ±1")));
            }
            if s[[j, i]] != v {
                return Err(Error::Contract(format!("S not symmetric at ({i},{j})")));
            }
            if i == j && v != 1.0 {
                return Err(Error::Contract(format!("S[{i},{i}] must be +1")));
            }
        }
        Ok(SignSimilarity { s })
    }

    pub fn from_classes(labels: &[u8]) -> Self {
        let n = labels.len();
        SignSimilarity {
            s: Array2::from_shape_fn((n, n), |(i, j)| if labels[i] == labels[j] { 1.0 } else { -1.0 }),
        }
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.s.view()
    }

    pub fn len(&self) -> usize {
        self.s.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.s.nrows() == 0
    }
}

/// `‖S − (1/q)·HHᵀ‖²_F` with `q = H.ncols()`.
pub fn reconstruction_error(s: ArrayView2<f64>, h: ArrayView2<f64>) -> f64 {
    let q = h.ncols() as f64;
    let p = h.dot(&h.t());
    s.iter().zip(p.iter()).map(|(a, b)| (a - b / q).powi(2)).sum()
}

/// Factorizes `s` into `q` columns with `sweeps` full passes, starting
/// from a uniform random `H` drawn with `seed`.
pub fn cnnh_factorize(s: &SignSimilarity, q: usize, sweeps: usize, seed: u64) -> Result<Array2<f64>> {
    cnnh_factorize_with(s, q, sweeps, seed, |_| {})
}

/// [`cnnh_factorize`] calling `observe` with `H` after every entry update.
pub fn cnnh_factorize_with(
    s: &SignSimilarity,
    q: usize,
    sweeps: usize,
    seed: u64,
    mut observe: impl FnMut(&Array2<f64>),
) -> Result<Array2<f64>> {
    if q == 0 {
        return Err(Error::Config("code length q must be positive".into()));
    }
    let n = s.len();
    let s = s.view();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = Array2::from_shape_fn((n, q), |_| rng.gen_range(-1.0..=1.0));
    let mut p = h.dot(&h.t());
    let qf = q as f64;
    let mut r = vec![0.0; n];
    for _ in 0..sweeps {
        for i in 0..n {
            for j in 0..q {
                let x0 = h[[i, j]];
                let mut hh = 0.0;
                let mut hr = 0.0;
                for l in (0..n).filter(|&l| l != i) {
                    let hl = h[[l, j]];
                    r[l] = s[[i, l]] - (p[[i, l]] - x0 * hl) / qf;
                    hh += hl * hl;
                    hr += hl * r[l];
                }
                let e = s[[i, i]] - (p[[i, i]] - x0 * x0) / qf;
                let f = |x: f64| {
                    let mut acc = 0.0;
                    for l in (0..n).filter(|&l| l != i) {
                        let t = r[l] - x * h[[l, j]] / qf;
                        acc += t * t;
                    }
                    2.0 * acc + (e - x * x / qf).powi(2)
                };
                let mut best = (f(x0), x0);
                let candidates = depressed_cubic_roots(hh - qf * e, -qf * hr)
                    .into_iter()
                    .filter(|x| (-1.0..=1.0).contains(x))
                    .chain([-1.0, 1.0]);
                for x in candidates {
                    let v = f(x);
                    if v < best.0 {
                        best = (v, x);
                    }
                }
                let x1 = best.1;
                if x1 != x0 {
                    let dx = x1 - x0;
                    for l in (0..n).filter(|&l| l != i) {
                        let delta = dx * h[[l, j]];
                        p[[i, l]] += delta;
                        p[[l, i]] += delta;
                    }
                    p[[i, i]] += x1 * x1 - x0 * x0;
                    h[[i, j]] = x1;
                }
                observe(&h);
            }
        }
    }
    Ok(h)
}

/// Real roots of `x³ + p·x + c = 0`.
fn depressed_cubic_roots(p: f64, c: f64) -> Vec<f64> {
    if p == 0.0 {
        return vec![(-c).cbrt()];
    }
    let disc = -(4.0 * p * p * p + 27.0 * c * c);
    if disc > 0.0 {
        // three real roots; p < 0 here
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * c) / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect()
    } else {
        let d = (c * c / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        vec![(-c / 2.0 + d).cbrt() + (-c / 2.0 - d).cbrt()]
    }
}
