//! Independent oracles shared by the integration and acceptance tests:
//! finite differences, brute-force minimizers and direct re-evaluations.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shadowhash::losses::{srh_loss, srh_loss_and_gradient, PairLabels, SrhParams};
use shadowhash::nn::{LayerSpec, Network};
use shadowhash::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

// ---------------------------------------------------------------- SRH

pub struct SrhCase {
    pub b: Array2<f64>,
    pub u: Array2<i8>,
    pub labels: PairLabels,
    pub params: SrhParams,
}

/// Random SRH instance with `M ≤ 8`, `k ≤ 8`, resampled until no
/// dissimilar pair sits within `1e-3` of the hinge.
pub fn random_srh_case(r: &mut ChaCha8Rng) -> SrhCase {
    loop {
        let m = r.gen_range(2..=8);
        let k = r.gen_range(1..=8);
        let b: Array2<f64> = Array2::from_shape_fn((m, k), |_| r.gen_range(-2.0..2.0));
        let u = Array2::from_shape_fn((m, k), |_| if r.gen_bool(0.5) { 1i8 } else { -1 });
        let classes: Vec<u8> = (0..m).map(|_| r.gen_range(0..3)).collect();
        let labels = PairLabels::from_classes(&classes);
        let margin = r.gen_range(0.5..4.0 * k as f64);
        let params = SrhParams::new(k, r.gen_range(0.0..2.0), r.gen_range(0.0..2.0))
            .unwrap()
            .with_margin(margin);
        let near_kink = labels.pairs().any(|(i, j)| {
            let d: f64 = (0..k).map(|c| (b[[i, c]] - b[[j, c]]).powi(2)).sum();
            labels.dissimilar(i, j) && (d - margin).abs() < 1e-3
        });
        if !near_kink {
            return SrhCase { b, u, labels, params };
        }
    }
}

/// Relative error between the analytic SRH gradient and central differences.
pub fn srh_fd_error(case: &SrhCase) -> f64 {
    let (_, g) = srh_loss_and_gradient(case.b.view(), case.u.view(), &case.labels, &case.params).unwrap();
    let h = 1e-6;
    let mut fd = Vec::with_capacity(g.len());
    let mut b = case.b.clone();
    for idx in 0..b.len() {
        let (i, c) = (idx / b.ncols(), idx % b.ncols());
        let x0 = b[[i, c]];
        b[[i, c]] = x0 + h;
        let lp = srh_loss(b.view(), case.u.view(), &case.labels, &case.params).unwrap().total();
        b[[i, c]] = x0 - h;
        let lm = srh_loss(b.view(), case.u.view(), &case.labels, &case.params).unwrap().total();
        b[[i, c]] = x0;
        fd.push((lp - lm) / (2.0 * h));
    }
    rel_err(g.as_slice().unwrap(), &fd)
}

// ---------------------------------------------------------------- layers

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    MaxPool,
    FullyConnected,
    Relu,
    Tanh,
}

#[derive(Debug)]
pub struct LayerCase {
    pub input: [usize; 3],
    pub batch: usize,
    pub spec: LayerSpec,
}

pub fn random_layer_case(kind: LayerKind, r: &mut ChaCha8Rng) -> LayerCase {
    loop {
        let input = [r.gen_range(1..=3), r.gen_range(2..=8), r.gen_range(2..=8)];
        let batch = r.gen_range(1..=3);
        let spec = match kind {
            LayerKind::Conv => LayerSpec::Conv {
                filters: r.gen_range(1..=4),
                kernel: [1, 2, 3, 5][r.gen_range(0..4)],
                stride: r.gen_range(1..=2),
                pad: r.gen_range(0..=2),
            },
            LayerKind::MaxPool => LayerSpec::MaxPool {
                window: r.gen_range(2..=3),
                stride: r.gen_range(1..=2),
            },
            LayerKind::FullyConnected => LayerSpec::FullyConnected {
                outputs: r.gen_range(1..=6),
            },
            LayerKind::Relu => LayerSpec::Relu,
            LayerKind::Tanh => LayerSpec::Tanh,
        };
        if Network::<f64>::new(&input, &[spec]).is_ok() {
            return LayerCase { input, batch, spec };
        }
    }
}

/// Input values for `kind`: pairwise-distinct for pooling (spacing well
/// above the step) and bounded away from zero for ReLU, so that central
/// differences never straddle a kink.
fn layer_input(kind: LayerKind, len: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    match kind {
        LayerKind::MaxPool => {
            let mut v: Vec<f64> = (0..len).map(|i| i as f64 * 0.01).collect();
            for i in (1..len).rev() {
                v.swap(i, r.gen_range(0..=i));
            }
            v
        }
        LayerKind::Relu => (0..len)
            .map(|_| {
                let x = r.gen_range(0.01..1.5);
                if r.gen_bool(0.5) {
                    x
                } else {
                    -x
                }
            })
            .collect(),
        _ => (0..len).map(|_| r.gen_range(-1.5..1.5)).collect(),
    }
}

/// Worst relative error over the input gradient and every parameter
/// gradient of a single layer, against central differences of
/// `L = Σ w ⊙ layer(x)` with random `w`.
pub fn layer_fd_error(kind: LayerKind, case: &LayerCase, r: &mut ChaCha8Rng) -> f64 {
    let mut net = Network::<f64>::new(&case.input, &[case.spec]).unwrap();
    for p in net.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    }
    let mut shape = vec![case.batch];
    shape.extend_from_slice(&case.input);
    let len = shape.iter().product();
    let x = Tensor::from_vec(&shape, layer_input(kind, len, r)).unwrap();
    let k = net.output_dim();
    let w = Tensor::from_vec(
        &[case.batch, k],
        (0..case.batch * k).map(|_| r.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let objective = |net: &Network<f64>, x: &Tensor<f64>| -> f64 {
        let y = net.infer(x).unwrap();
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };
    net.forward(&x).unwrap();
    let dx = net.backward(&w).unwrap();
    let h = 1e-6;

    let mut fd = Vec::with_capacity(len);
    let mut xp = x.clone();
    for i in 0..len {
        let x0 = xp.data()[i];
        xp.data_mut()[i] = x0 + h;
        let lp = objective(&net, &xp);
        xp.data_mut()[i] = x0 - h;
        let lm = objective(&net, &xp);
        xp.data_mut()[i] = x0;
        fd.push((lp - lm) / (2.0 * h));
    }
    let mut worst = rel_err(dx.data(), &fd);

    let analytic: Vec<Vec<f64>> = net.params().iter().map(|(_, _, g)| g.data().to_vec()).collect();
    for (pi, grad) in analytic.iter().enumerate() {
        let mut fd = Vec::with_capacity(grad.len());
        for j in 0..grad.len() {
            let x0 = net.params()[pi].1.data()[j];
            net.params_mut()[pi].value.data_mut()[j] = x0 + h;
            let lp = objective(&net, &x);
            net.params_mut()[pi].value.data_mut()[j] = x0 - h;
            let lm = objective(&net, &x);
            net.params_mut()[pi].value.data_mut()[j] = x0;
            fd.push((lp - lm) / (2.0 * h));
        }
        worst = worst.max(rel_err(grad, &fd));
    }
    worst
}

// ---------------------------------------------------------------- retrieval

/// Average precision straight from the definition: for a 0/1 relevance
/// list in rank order, `AP = (1/R) Σ_{r: rel_r} precision@r`, where `R`
/// counts relevant items in the list. `None` when `R = 0`.
pub fn direct_average_precision(relevance: &[bool]) -> Option<f64> {
    let total = relevance.iter().filter(|&&x| x).count();
    if total == 0 {
        return None;
    }
    let mut sum = 0.0;
    for r in 0..relevance.len() {
        if relevance[r] {
            let hits = relevance[..=r].iter().filter(|&&x| x).count();
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// Bit-by-bit Hamming distance between two ±1 rows.
pub fn naive_hamming(a: &[i8], b: &[i8]) -> u32 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u32
}

// ---------------------------------------------------------------- brute force

/// Every ±1 vector of length `n`, in binary counting order.
pub fn all_sign_vectors(n: usize) -> impl Iterator<Item = Vec<i8>> {
    (0u64..1 << n).map(move |mask| (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect())
}

/// `argmin_U ‖U − B‖²` by enumeration; the first minimizer in counting
/// order with ties resolved toward +1 entries.
pub fn brute_force_shadow(b: ArrayView2<f64>) -> Array2<i8> {
    let (m, k) = b.dim();
    let mut best: Option<(f64, usize, Vec<i8>)> = None;
    for cand in all_sign_vectors(m * k) {
        let cost: f64 = cand.iter().zip(b.iter()).map(|(&u, &x)| (u as f64 - x).powi(2)).sum();
        let positives = cand.iter().filter(|&&u| u > 0).count();
        let better = match &best {
            None => true,
            Some((c, p, _)) => cost < *c || (cost == *c && positives > *p),
        };
        if better {
            best = Some((cost, positives, cand));
        }
    }
    Array2::from_shape_vec((m, k), best.unwrap().2).unwrap()
}

// ---------------------------------------------------------------- solvers

use shadowhash::solvers::{
    adsh_objective, adsh_update_column, cnnh_factorize_with, reconstruction_error, AdshProblem, SignSimilarity,
};

/// Random ADSH V-step instances (`n ≤ 6`, `c ≤ 3`): every single-column
/// update must reach the enumerated conditional minimum over all `2^n`
/// columns, agree with the unique enumerated minimizer when there is one,
/// and never raise the objective. Returns the number of column updates
/// checked, or a description of the first failure.
pub fn adsh_column_oracle(instances: usize, seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    let mut checked = 0;
    for inst in 0..instances {
        let n = r.gen_range(1..=6);
        let c = r.gen_range(1..=3);
        let m = r.gen_range(1..=n);
        let utilde = Array2::from_shape_fn((m, c), |_| r.gen_range(-0.99..0.99));
        let classes: Vec<u8> = (0..n).map(|_| r.gen_range(0..2)).collect();
        let mut query_index: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            query_index.swap(i, r.gen_range(0..=i));
        }
        query_index.truncate(m);
        let s = Array2::from_shape_fn((m, n), |(i, j)| {
            if classes[query_index[i]] == classes[j] {
                1.0
            } else {
                -1.0
            }
        });
        let gamma = r.gen_range(0.0..3.0);
        let p = AdshProblem {
            utilde: utilde.view(),
            s: s.view(),
            query_index: &query_index,
            gamma,
        };
        let mut v = Array2::from_shape_fn((n, c), |_| if r.gen_bool(0.5) { 1i8 } else { -1 });
        for _sweep in 0..2 {
            for k in 0..c {
                let before = adsh_objective(&p, v.view()).unwrap();
                let mut scores = Vec::new();
                for col in all_sign_vectors(n) {
                    let mut cand = v.clone();
                    cand.column_mut(k).iter_mut().zip(&col).for_each(|(a, &b)| *a = b);
                    scores.push((adsh_objective(&p, cand.view()).unwrap(), col));
                }
                let best = scores.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
                let tol = 1e-9 * (1.0 + best.abs());
                let minimizers: Vec<&Vec<i8>> = scores.iter().filter(|s| s.0 <= best + tol).map(|s| &s.1).collect();
                adsh_update_column(&p, &mut v, k).unwrap();
                let after = adsh_objective(&p, v.view()).unwrap();
                if after > best + tol {
                    return Err(format!("instance {inst} column {k}: {after} above enumerated minimum {best}"));
                }
                if minimizers.len() == 1 && v.column(k).to_vec() != *minimizers[0] {
                    return Err(format!("instance {inst} column {k}: differs from the unique minimizer"));
                }
                if after > before + tol {
                    return Err(format!("instance {inst} column {k}: objective rose {before} -> {after}"));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// `min ‖S − (1/q)HHᵀ‖²` over all `H ∈ {±1}^{n×q}`.
pub fn cnnh_exhaustive_optimum(s: ArrayView2<f64>, q: usize) -> f64 {
    let n = s.nrows();
    all_sign_vectors(n * q)
        .map(|h| {
            let h = Array2::from_shape_vec((n, q), h.into_iter().map(f64::from).collect()).unwrap();
            reconstruction_error(s, h.view())
        })
        .fold(f64::INFINITY, f64::min)
}

pub struct CnnhCheck {
    pub instances: usize,
    pub entry_updates: usize,
    /// Largest increase of the relaxed error across one entry update.
    pub worst_increase: f64,
    /// Largest `binarized / optimum − 1` (or absolute gap when the optimum is 0).
    pub worst_gap: f64,
}

/// Two-class block similarities with `n ≤ 6`, `q ≤ 2`: tracks the relaxed
/// error after every entry update and compares the binarized result with
/// the exhaustive binary optimum.
pub fn cnnh_block_oracle(sweeps: usize, seed: u64) -> CnnhCheck {
    let mut r = rng(seed);
    let mut out = CnnhCheck {
        instances: 0,
        entry_updates: 0,
        worst_increase: 0.0,
        worst_gap: 0.0,
    };
    for n in 2..=6 {
        for q in 1..=2 {
            for _ in 0..4 {
                let split = r.gen_range(1..n);
                let labels: Vec<u8> = (0..n).map(|i| u8::from(i >= split)).collect();
                let s = SignSimilarity::from_classes(&labels);
                let mut prev: Option<f64> = None;
                let h = cnnh_factorize_with(&s, q, sweeps, r.gen(), |h| {
                    let e = reconstruction_error(s.view(), h.view());
                    if let Some(p) = prev {
                        out.worst_increase = out.worst_increase.max(e - p);
                    }
                    prev = Some(e);
                    out.entry_updates += 1;
                })
                .unwrap();
                let hb = h.mapv(|x| if x >= 0.0 { 1.0 } else { -1.0 });
                let got = reconstruction_error(s.view(), hb.view());
                let best = cnnh_exhaustive_optimum(s.view(), q);
                let gap = if best > 0.0 { got / best - 1.0 } else { got };
                out.worst_gap = out.worst_gap.max(gap);
                out.instances += 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------- retrieval oracles

use shadowhash::retrieval::{hamming, mean_average_precision, rank_all, LabelRelevance, PackedCodes};

pub fn random_signs(r: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<i8> {
    Array2::from_shape_fn((n, k), |_| if r.gen_bool(0.5) { 1 } else { -1 })
}

/// Packed distance vs a bit loop on `pairs` random pairs of random length
/// (1..=200 bits, so multi-word codes and padding are covered). Returns the
/// number of disagreements.
pub fn hamming_mismatches(pairs: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..pairs {
        let k = r.gen_range(1..=200);
        let s = random_signs(&mut r, 2, k);
        let p = PackedCodes::from_signs(s.view());
        let fast = hamming(p.code(0), p.code(1)).unwrap();
        let slow = naive_hamming(s.row(0).as_slice().unwrap(), s.row(1).as_slice().unwrap());
        bad += usize::from(fast != slow);
    }
    bad
}

/// mAP through the library vs ranking by a plain stable sort on
/// `(distance, id)` followed by the textbook AP formula. Returns the
/// largest absolute difference over `instances` random problems, or an
/// error when the excluded-query sets disagree.
pub fn map_oracle_max_diff(instances: usize, seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let k = r.gen_range(1..=16);
        let nq = r.gen_range(1..=8);
        let nd = r.gen_range(1..=40);
        let classes = r.gen_range(1..=5);
        let qs = random_signs(&mut r, nq, k);
        let ds = random_signs(&mut r, nd, k);
        let ql: Vec<u8> = (0..nq).map(|_| r.gen_range(0..classes)).collect();
        let dl: Vec<u8> = (0..nd).map(|_| r.gen_range(0..classes)).collect();
        let at = if r.gen_bool(0.5) { None } else { Some(r.gen_range(1..=nd + 3)) };
        let q = PackedCodes::from_signs(qs.view());
        let d = PackedCodes::from_signs(ds.view());
        let rel = LabelRelevance {
            query_labels: &ql,
            db_labels: &dl,
        };
        let report = mean_average_precision(&rank_all(&q, &d, None).unwrap(), &rel, at).unwrap();

        let mut aps = Vec::new();
        let mut excluded = Vec::new();
        for i in 0..nq {
            let mut order: Vec<(u32, usize)> = (0..nd)
                .map(|j| (naive_hamming(qs.row(i).as_slice().unwrap(), ds.row(j).as_slice().unwrap()), j))
                .collect();
            order.sort();
            let depth = at.unwrap_or(nd).min(nd);
            let relevance: Vec<bool> = order[..depth].iter().map(|&(_, j)| dl[j] == ql[i]).collect();
            match direct_average_precision(&relevance) {
                Some(ap) => aps.push(ap),
                None => excluded.push(i),
            }
        }
        if excluded != report.excluded {
            return Err(format!("instance {inst}: excluded {:?} vs {:?}", report.excluded, excluded));
        }
        let direct = if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 };
        worst = worst.max((direct - report.map).abs());
    }
    Ok(worst)
}

/// mAP of uniformly random `bits`-bit codes over balanced classes.
pub fn random_code_map(n_query: usize, n_db: usize, bits: usize, classes: u8, seed: u64) -> f64 {
    let mut r = rng(seed);
    let q = PackedCodes::from_signs(random_signs(&mut r, n_query, bits).view());
    let d = PackedCodes::from_signs(random_signs(&mut r, n_db, bits).view());
    let ql: Vec<u8> = (0..n_query).map(|i| (i % classes as usize) as u8).collect();
    let dl: Vec<u8> = (0..n_db).map(|i| (i % classes as usize) as u8).collect();
    let rel = LabelRelevance {
        query_labels: &ql,
        db_labels: &dl,
    };
    mean_average_precision(&rank_all(&q, &d, None).unwrap(), &rel, None).unwrap().map
}
