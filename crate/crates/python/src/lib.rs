//! Python bindings: packed codes and Hamming ranking, mAP, the pairwise
//! losses, the shadow update, network encoding and training, and the
//! similarity-factorization solver. Matrices cross the boundary as lists
//! of rows.

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use shadowhash::data::{synthetic, LabeledImageSet, SimilarityOracle, IMAGE_BYTES};
use shadowhash::losses::{srh_loss_and_gradient, PairLabels, SrhParams};
use shadowhash::nn::{xavier_init, Checkpoint, Network};
use shadowhash::retrieval::{self, LabelRelevance};
use shadowhash::shadow::{self, TrainConfig};
use shadowhash::solvers::{cnnh_factorize, reconstruction_error, SignSimilarity};
use shadowhash::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix<T: Copy>(rows: &[Vec<T>]) -> PyResult<Array2<T>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(Array2::from_shape_vec((n, k), rows.concat()).expect("extents checked"))
}

fn rows<T: Copy>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn signs(rows: &[Vec<i8>]) -> PyResult<Array2<i8>> {
    let m = matrix(rows)?;
    if m.iter().any(|&x| x != 1 && x != -1) {
        return Err(PyValueError::new_err("codes must be ±1"));
    }
    Ok(m)
}

/// Bit-packed ±1 codes.
#[pyclass(name = "PackedCodes", module = "shadowhash")]
struct PyPackedCodes {
    inner: retrieval::PackedCodes,
}

#[pymethods]
impl PyPackedCodes {
    /// Packs a list of ±1 rows.
    #[staticmethod]
    fn from_signs(codes: Vec<Vec<i8>>) -> PyResult<Self> {
        Ok(Self {
            inner: retrieval::PackedCodes::from_signs(signs(&codes)?.view()),
        })
    }

    /// Packs the signs of real-valued rows (0 maps to +1).
    #[staticmethod]
    fn binarize(values: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = retrieval::binarize_and_pack(matrix(&values)?.view()).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: retrieval::PackedCodes::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn bits(&self) -> usize {
        self.inner.bits()
    }

    fn unpack(&self) -> Vec<Vec<i8>> {
        rows(&self.inner.unpack())
    }

    /// Hamming distance between codes `i` and `j`.
    fn hamming(&self, i: usize, j: usize) -> PyResult<u32> {
        if i >= self.inner.len() || j >= self.inner.len() {
            return Err(PyValueError::new_err("code index out of range"));
        }
        retrieval::hamming(self.inner.code(i), self.inner.code(j)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("PackedCodes(n={}, bits={})", self.inner.len(), self.inner.bits())
    }
}

/// Ranks `db` for query `index` of `queries`: `[(id, distance), ...]`
/// by ascending distance, ties by ascending id.
#[pyfunction]
#[pyo3(signature = (queries, index, db, top=None))]
fn rank(queries: &PyPackedCodes, index: usize, db: &PyPackedCodes, top: Option<usize>) -> PyResult<Vec<(usize, u32)>> {
    if index >= queries.inner.len() {
        return Err(PyValueError::new_err("query index out of range"));
    }
    let r = retrieval::rank_database(index, queries.inner.code(index), &db.inner, top).map_err(py_err)?;
    Ok(r.hits.iter().map(|h| (h.id, h.distance)).collect())
}

/// mAP with class-equality relevance; `at` limits the ranking depth.
#[pyfunction]
#[pyo3(signature = (queries, db, query_labels, db_labels, at=None))]
fn mean_average_precision(
    queries: &PyPackedCodes,
    db: &PyPackedCodes,
    query_labels: Vec<u8>,
    db_labels: Vec<u8>,
    at: Option<usize>,
) -> PyResult<f64> {
    if query_labels.len() < queries.inner.len() || db_labels.len() < db.inner.len() {
        return Err(PyValueError::new_err("labels do not cover every code"));
    }
    let rankings = retrieval::rank_all(&queries.inner, &db.inner, None).map_err(py_err)?;
    let rel = LabelRelevance {
        query_labels: &query_labels,
        db_labels: &db_labels,
    };
    Ok(retrieval::mean_average_precision(&rankings, &rel, at).map_err(py_err)?.map)
}

/// SRH objective: returns `(pair, shadow, norm, gradient)`.
#[pyfunction]
#[pyo3(signature = (b, u, classes, alpha, beta, margin=None))]
fn srh_loss(
    b: Vec<Vec<f64>>,
    u: Vec<Vec<i8>>,
    classes: Vec<i64>,
    alpha: f64,
    beta: f64,
    margin: Option<f64>,
) -> PyResult<(f64, f64, f64, Vec<Vec<f64>>)> {
    let b = matrix(&b)?;
    let u = signs(&u)?;
    let mut p = SrhParams::new(b.ncols(), alpha, beta).map_err(py_err)?;
    if let Some(m) = margin {
        p = p.with_margin(m);
    }
    let labels = PairLabels::from_classes(&classes);
    let (loss, grad) = srh_loss_and_gradient(b.view(), u.view(), &labels, &p).map_err(py_err)?;
    Ok((loss.pair, loss.shadow, loss.norm, rows(&grad)))
}

/// `sign(B)` with `sign(0) = +1`.
#[pyfunction]
fn shadow_update(b: Vec<Vec<f64>>) -> PyResult<Vec<Vec<i8>>> {
    Ok(rows(&shadow::shadow_update(matrix(&b)?.view()).into_inner()))
}

fn image_set(pixels: &[u8], labels: Option<Vec<u8>>) -> PyResult<LabeledImageSet> {
    if pixels.len() % IMAGE_BYTES != 0 {
        return Err(PyValueError::new_err(format!("pixel buffer is not a multiple of {IMAGE_BYTES} bytes")));
    }
    let n = pixels.len() / IMAGE_BYTES;
    let labels = labels.unwrap_or_else(|| vec![0; n]);
    LabeledImageSet::new(pixels.to_vec(), labels).map_err(py_err)
}

/// The hashing network: conv/pool stack plus two fully-connected layers.
#[pyclass(name = "Network", module = "shadowhash")]
struct PyNetwork {
    inner: Network<f32>,
}

#[pymethods]
impl PyNetwork {
    /// Fresh network with `bits` outputs and Xavier weights drawn from `seed`.
    #[new]
    #[pyo3(signature = (bits, seed=0))]
    fn new(bits: usize, seed: u64) -> PyResult<Self> {
        let mut inner = Network::canonical(bits).map_err(py_err)?;
        xavier_init(&mut inner, seed);
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = Checkpoint::load(path)
            .and_then(|c| c.to_canonical())
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        Checkpoint::from_network(&self.inner).save(path).map_err(py_err)
    }

    #[getter]
    fn bits(&self) -> usize {
        self.inner.output_dim()
    }

    /// Real-valued outputs for images given as raw CIFAR-layout bytes
    /// (3072 per image: R, G, B planes of 32×32).
    fn forward(&self, pixels: &[u8]) -> PyResult<Vec<Vec<f64>>> {
        let set = image_set(pixels, None)?;
        let ids: Vec<usize> = (0..set.len()).collect();
        Ok(rows(&shadow::encode_outputs(&self.inner, &set, &ids, 160).map_err(py_err)?))
    }

    /// Packed sign codes for the same input as `forward`.
    fn encode(&self, pixels: &[u8]) -> PyResult<PyPackedCodes> {
        let set = image_set(pixels, None)?;
        let ids: Vec<usize> = (0..set.len()).collect();
        let inner = shadowhash::pipeline::encode_codes(&self.inner, &set, &ids, 160).map_err(py_err)?;
        Ok(PyPackedCodes { inner })
    }

    fn __repr__(&self) -> String {
        self.inner.to_string()
    }
}

/// Trains with the shadow-code objective. Returns `(network, shadow codes,
/// per-epoch mean losses)`.
#[pyfunction]
#[pyo3(signature = (pixels, labels, bits, alpha, beta, epochs=150, batch_size=160, learning_rate=1e-3, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    pixels: &[u8],
    labels: Vec<u8>,
    bits: usize,
    alpha: f64,
    beta: f64,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
) -> PyResult<(PyNetwork, Vec<Vec<i8>>, Vec<f64>)> {
    let set = image_set(pixels, Some(labels))?;
    let oracle = SimilarityOracle::new(set.labels().to_vec());
    let mut cfg = TrainConfig::srh(bits, alpha, beta);
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.sgd.learning_rate = learning_rate;
    cfg.seed = seed;
    let out = py
        .detach(|| shadow::train(&set, &oracle, &cfg))
        .map_err(py_err)?;
    let trace = out.trace.iter().map(|e| e.mean_loss).collect();
    Ok((PyNetwork { inner: out.network }, rows(&out.shadow.into_inner()), trace))
}

/// Procedural texture classes: `(pixels, labels)` in CIFAR byte layout.
#[pyfunction]
#[pyo3(signature = (classes, per_class, noise=0.3, seed=7))]
fn synthetic_images(classes: usize, per_class: usize, noise: f64, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let set = synthetic::textured(classes, per_class, noise, seed);
    let records = set.to_records();
    let pixels = records
        .chunks_exact(IMAGE_BYTES + 1)
        .flat_map(|r| r[1..].iter().copied())
        .collect();
    (pixels, set.labels().to_vec())
}

/// Factorizes the class similarity of `labels` into `q` columns:
/// returns `(H, relaxed error, binarized error)`.
#[pyfunction]
#[pyo3(signature = (labels, q, sweeps=20, seed=0))]
fn cnnh_factorize_labels(labels: Vec<u8>, q: usize, sweeps: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, f64, f64)> {
    let s = SignSimilarity::from_classes(&labels);
    let h = cnnh_factorize(&s, q, sweeps, seed).map_err(py_err)?;
    let hb = h.mapv(|x| if x >= 0.0 { 1.0 } else { -1.0 });
    Ok((
        rows(&h),
        reconstruction_error(s.view(), h.view()),
        reconstruction_error(s.view(), hb.view()),
    ))
}

#[pymodule]
#[pyo3(name = "shadowhash")]
fn shadowhash_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPackedCodes>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(mean_average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(srh_loss, m)?)?;
    m.add_function(wrap_pyfunction!(shadow_update, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_images, m)?)?;
    m.add_function(wrap_pyfunction!(cnnh_factorize_labels, m)?)?;
    Ok(())
}
