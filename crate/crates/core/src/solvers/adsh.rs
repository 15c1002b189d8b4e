//! Asymmetric hashing: a tanh-headed network encodes the `m` query points
//! while the `n` database codes `V` are solved column by column in closed
//! form.
//!
//! ```text
//! L(V) = Σᵢ Σⱼ (ũᵢᵀvⱼ − c·Sᵢⱼ)² + γ Σᵢ ‖v_{Ω(i)} − ũᵢ‖²
//! ```
//!
//! where `Ω(i)` is the database row of query `i`. Expanding in `V` gives
//! `tr(V ŨᵀŨ Vᵀ) + tr(Vᵀ Q) + const` with `Q = −2c·SᵀŨ − 2γ·Ū` (`Ū` is `Ũ`
//! scattered onto the query rows of an `n×c` zero matrix), so with every
//! other column fixed, column `k` is minimized by
//! `V_{*k} = −sign(2·Ṽ_k·Ũ_kᵀ·Ũ_{*k} + Q_{*k})`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{LabeledImageSet, SimilarityOracle};
use crate::error::{Error, Result};
use crate::nn::{xavier_init, Network, Sgd, SgdConfig};
use crate::shadow::{encode_outputs, sign};
use crate::tensor::Tensor;

/// One V-step problem instance.
#[derive(Clone, Copy, Debug)]
pub struct AdshProblem<'a> {
    /// `m×c`, entries in `(−1, 1)`.
    pub utilde: ArrayView2<'a, f64>,
    /// `m×n` sign similarity between queries and database points.
    pub s: ArrayView2<'a, f64>,
    /// Database row of each query.
    pub query_index: &'a [usize],
    pub gamma: f64,
}

impl AdshProblem<'_> {
    fn code_len(&self) -> usize {
        self.utilde.ncols()
    }

    fn check(&self, v: &ArrayView2<i8>) -> Result<()> {
        let (m, c) = self.utilde.dim();
        let n = v.nrows();
        if self.s.dim() != (m, n) {
            return Err(Error::Shape(format!(
                "similarity is {:?}, expected ({m}, {n}) for {m} queries and {n} database codes",
                self.s.dim()
            )));
        }
        if v.ncols() != c {
            return Err(Error::Shape(format!("V has {} bits, Ũ has {c}", v.ncols())));
        }
        if self.query_index.len() != m {
            return Err(Error::Shape(format!(
                "{} query indices for {m} queries",
                self.query_index.len()
            )));
        }
        if let Some(&bad) = self.query_index.iter().find(|&&i| i >= n) {
            return Err(Error::Shape(format!("query index {bad} outside database of {n}")));
        }
        if let Some(((i, j), x)) = v.indexed_iter().find(|(_, &x)| x != 1 && x != -1) {
            return Err(Error::Contract(format!("V[{i},{j}] = {x} is not ±1")));
        }
        Ok(())
    }

    /// `Q = −2c·SᵀŨ − 2γ·Ū`, `n×c`.
    fn q_matrix(&self) -> Array2<f64> {
        let c = self.code_len() as f64;
        let mut q = self.s.t().dot(&self.utilde) * (-2.0 * c);
        for (i, &row) in self.query_index.iter().enumerate() {
            let mut qr = q.row_mut(row);
            qr.scaled_add(-2.0 * self.gamma, &self.utilde.row(i));
        }
        q
    }
}

pub fn adsh_objective(p: &AdshProblem<'_>, v: ArrayView2<i8>) -> Result<f64> {
    p.check(&v)?;
    let c = p.code_len() as f64;
    let vf = v.mapv(f64::from);
    let inner = p.utilde.dot(&vf.t());
    let fit: f64 = inner
        .iter()
        .zip(p.s.iter())
        .map(|(x, s)| (x - c * s).powi(2))
        .sum();
    let mut reg = 0.0;
    for (i, &row) in p.query_index.iter().enumerate() {
        reg += vf
            .row(row)
            .iter()
            .zip(p.utilde.row(i))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
    }
    Ok(fit + p.gamma * reg)
}

/// Replaces column `k` of `v` by its exact conditional minimizer.
pub fn adsh_update_column(p: &AdshProblem<'_>, v: &mut Array2<i8>, k: usize) -> Result<()> {
    p.check(&v.view())?;
    let gram = p.utilde.t().dot(&p.utilde);
    let q = p.q_matrix();
    update_column(v, &gram, &q, k);
    Ok(())
}

fn update_column(v: &mut Array2<i8>, gram: &Array2<f64>, q: &Array2<f64>, k: usize) {
    let c = gram.nrows();
    let mut x: Array1<f64> = q.column(k).to_owned();
    for a in (0..c).filter(|&a| a != k) {
        let g = 2.0 * gram[[a, k]];
        for (xj, &vj) in x.iter_mut().zip(v.column(a)) {
            *xj += g * f64::from(vj);
        }
    }
    for (vj, &xj) in v.column_mut(k).iter_mut().zip(&x) {
        *vj = sign(-xj);
    }
}

/// One sweep over all columns, starting from `v_init`.
pub fn adsh_update_v(p: &AdshProblem<'_>, v_init: &Array2<i8>) -> Result<Array2<i8>> {
    p.check(&v_init.view())?;
    let gram = p.utilde.t().dot(&p.utilde);
    let q = p.q_matrix();
    let mut v = v_init.clone();
    for k in 0..p.code_len() {
        update_column(&mut v, &gram, &q, k);
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdshConfig {
    pub bits: usize,
    pub gamma: f64,
    /// Alternations between the network step and the V step.
    pub outer_iterations: usize,
    /// Passes over the queries per network step.
    pub epochs_per_iteration: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub seed: u64,
}

impl AdshConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 {
            return Err(Error::Config("code length c must be positive".into()));
        }
        if self.outer_iterations == 0 || self.epochs_per_iteration == 0 || self.batch_size == 0 {
            return Err(Error::Config("iteration counts and batch size must be positive".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        Ok(())
    }
}

pub struct AdshOutcome {
    pub network: Network<f32>,
    /// Database codes, one row per database image.
    pub v: Array2<i8>,
    /// Objective after each V step.
    pub trace: Vec<f64>,
}

/// Alternates back-propagation on the query network (V fixed) with a
/// column sweep over V (network fixed). `query_index` selects the query
/// points among the database images.
pub fn adsh_train(
    database: &LabeledImageSet,
    oracle: &SimilarityOracle,
    query_index: &[usize],
    cfg: &AdshConfig,
) -> Result<AdshOutcome> {
    cfg.validate()?;
    let n = database.len();
    if query_index.is_empty() || n == 0 {
        return Err(Error::Config("ADSH needs a non-empty database and query set".into()));
    }
    if oracle.len() != n {
        return Err(Error::Shape(format!("{n} images but similarity for {} ids", oracle.len())));
    }
    if let Some(&bad) = query_index.iter().find(|&&i| i >= n) {
        return Err(Error::Config(format!("query index {bad} outside database of {n}")));
    }
    let c = cfg.bits;
    let all: Vec<usize> = (0..n).collect();
    let s_full = oracle.sign_similarity(query_index, &all);
    let mut net = Network::<f32>::canonical_tanh(c)?;
    xavier_init(&mut net, cfg.seed);
    let mut sgd = Sgd::new(cfg.sgd, &net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0xad5));
    let mut v = Array2::from_shape_fn((n, c), |_| if rng.gen_bool(0.5) { 1i8 } else { -1 });
    let mut order: Vec<usize> = (0..query_index.len()).collect();
    let mut trace = Vec::with_capacity(cfg.outer_iterations);
    let cf = c as f64;

    for it in 1..=cfg.outer_iterations {
        let vf = v.mapv(f64::from);
        for _ in 0..cfg.epochs_per_iteration {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let ids: Vec<usize> = chunk.iter().map(|&i| query_index[i]).collect();
                let out = net.forward(&database.batch::<f32>(&ids))?;
                let u = Array2::from_shape_vec((chunk.len(), c), out.data().iter().map(|&x| f64::from(x)).collect())
                    .expect("output extents match");
                let s = s_full.select(Axis(0), chunk);
                // ∂L/∂ũᵢ = 2Σⱼ(ũᵢᵀvⱼ − cSᵢⱼ)vⱼ + 2γ(ũᵢ − v_{Ω(i)})
                let resid = u.dot(&vf.t()) - &(s * cf);
                let mut grad = resid.dot(&vf) * 2.0;
                for (r, &db_row) in ids.iter().enumerate() {
                    let diff = &u.row(r) - &vf.row(db_row);
                    grad.row_mut(r).scaled_add(2.0 * cfg.gamma, &diff);
                }
                grad /= (chunk.len() * n) as f64;
                if grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite(format!("ADSH gradient at iteration {it}")));
                }
                let g = Tensor::from_vec(&[chunk.len(), c], grad.iter().map(|&x| x as f32).collect())?;
                net.backward(&g)?;
                sgd.step(&mut net)?;
            }
        }
        let utilde = encode_outputs(&net, database, query_index, cfg.batch_size)?;
        let problem = AdshProblem {
            utilde: utilde.view(),
            s: s_full.view(),
            query_index,
            gamma: cfg.gamma,
        };
        v = adsh_update_v(&problem, &v)?;
        let obj = adsh_objective(&problem, v.view())?;
        log::debug!("adsh iteration {it}: objective {obj:.6}");
        trace.push(obj);
    }
    Ok(AdshOutcome {
        network: net,
        v,
        trace,
    })
}
