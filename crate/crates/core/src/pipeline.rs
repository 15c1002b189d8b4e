//! End-to-end runs: train on a split, encode queries and database, score.

use ndarray::Array2;

use std::fmt::Write as _;
use std::path::Path;

use crate::config::DataSource;
use crate::data::{load_cifar10, synthetic, CifarPart, LabeledImageSet, SimilarityOracle, Split};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::retrieval::{binarize_and_pack, mean_average_precision, rank_all, LabelRelevance, MapReport, PackedCodes};
use crate::solvers::{adsh_train, AdshConfig, AdshOutcome};
use crate::shadow::{encode_outputs, train_with, EpochStats, TrainConfig, TrainOutcome};
use crate::tensor::Scalar;

/// Seed of the synthetic generator; fixed so that every run sees the same images.
pub const SYNTHETIC_SEED: u64 = 7;

/// Loads the image pool: CIFAR-10 train then test part, or synthetic textures.
pub fn load_dataset(source: &DataSource) -> Result<LabeledImageSet> {
    match source {
        DataSource::Cifar(dir) => {
            let mut set = load_cifar10(dir, CifarPart::Train)?;
            set.extend(&load_cifar10(dir, CifarPart::Test)?);
            Ok(set)
        }
        DataSource::Synthetic { per_class, noise } => {
            Ok(synthetic::textured(10, *per_class, *noise, SYNTHETIC_SEED))
        }
    }
}

/// One label per line.
pub fn write_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(labels.len() * 2);
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::Format(format!("{}: line {}: bad label {l:?}", path.display(), n + 1)))
        })
        .collect()
}

/// Sign codes of the network outputs for `ids`.
pub fn encode_codes<T: Scalar>(
    net: &Network<T>,
    images: &LabeledImageSet,
    ids: &[usize],
    batch: usize,
) -> Result<PackedCodes> {
    if ids.is_empty() {
        return Ok(PackedCodes::new(net.output_dim()));
    }
    binarize_and_pack(encode_outputs(net, images, ids, batch)?.view())
}

/// mAP of `queries` against `database` with class-equality relevance.
pub fn evaluate_codes(
    queries: &PackedCodes,
    database: &PackedCodes,
    query_labels: &[u8],
    db_labels: &[u8],
    map_at: Option<usize>,
) -> Result<MapReport> {
    let missing = |codes: usize, labels: usize| (labels..codes).collect::<Vec<usize>>();
    if query_labels.len() < queries.len() {
        return Err(Error::MissingIds(missing(queries.len(), query_labels.len())));
    }
    if db_labels.len() < database.len() {
        return Err(Error::MissingIds(missing(database.len(), db_labels.len())));
    }
    let rankings = rank_all(queries, database, None)?;
    let rel = LabelRelevance {
        query_labels,
        db_labels,
    };
    mean_average_precision(&rankings, &rel, map_at)
}

pub struct SplitRun {
    pub outcome: TrainOutcome,
    pub query_codes: PackedCodes,
    pub db_codes: PackedCodes,
    pub query_labels: Vec<u8>,
    pub db_labels: Vec<u8>,
    pub map: MapReport,
}

/// Trains on `split.train`, encodes `split.query` by sign of a forward
/// pass, and builds database codes from the final shadow codes for
/// training images and sign of a forward pass for the rest.
pub fn train_and_evaluate(
    images: &LabeledImageSet,
    split: &Split,
    cfg: &TrainConfig,
    map_at: Option<usize>,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<SplitRun> {
    let train_set = images.subset(&split.train);
    let oracle = SimilarityOracle::new(train_set.labels().to_vec());
    let outcome = train_with(&train_set, &oracle, cfg, on_epoch)?;
    let net = &outcome.network;
    let query_codes = encode_codes(net, images, &split.query, cfg.batch_size)?;
    let outputs = encode_outputs(net, images, &split.database, cfg.batch_size)?;
    let shadow = outcome.shadow.view();
    let mut db = Array2::<i8>::zeros(outputs.dim());
    let mut t = 0;
    for (r, &id) in split.database.iter().enumerate() {
        // split.train is an ascending subsequence of split.database
        if t < split.train.len() && split.train[t] == id {
            db.row_mut(r).assign(&shadow.row(t));
            t += 1;
        } else {
            db.row_mut(r).assign(&outputs.row(r).mapv(crate::shadow::sign));
        }
    }
    let db_codes = PackedCodes::from_signs(db.view());
    let labels = images.labels();
    let query_labels: Vec<u8> = split.query.iter().map(|&i| labels[i]).collect();
    let db_labels: Vec<u8> = split.database.iter().map(|&i| labels[i]).collect();
    let map = evaluate_codes(&query_codes, &db_codes, &query_labels, &db_labels, map_at)?;
    Ok(SplitRun {
        outcome,
        query_codes,
        db_codes,
        query_labels,
        db_labels,
        map,
    })
}

pub struct AdshRun {
    pub outcome: AdshOutcome,
    pub query_codes: PackedCodes,
    pub db_codes: PackedCodes,
    pub query_labels: Vec<u8>,
    pub db_labels: Vec<u8>,
    pub map: MapReport,
}

/// Asymmetric variant: the training images act as sampled queries inside
/// the database, database codes are solved directly, and the held-out
/// queries are encoded by the network.
pub fn adsh_train_and_evaluate(
    images: &LabeledImageSet,
    split: &Split,
    cfg: &AdshConfig,
    map_at: Option<usize>,
) -> Result<AdshRun> {
    let database = images.subset(&split.database);
    let oracle = SimilarityOracle::new(database.labels().to_vec());
    let query_index: Vec<usize> = split
        .train
        .iter()
        .map(|id| {
            split
                .database
                .binary_search(id)
                .map_err(|_| Error::Contract(format!("training id {id} is not in the database")))
        })
        .collect::<Result<_>>()?;
    let outcome = adsh_train(&database, &oracle, &query_index, cfg)?;
    let query_codes = encode_codes(&outcome.network, images, &split.query, cfg.batch_size)?;
    let db_codes = PackedCodes::from_signs(outcome.v.view());
    let labels = images.labels();
    let query_labels: Vec<u8> = split.query.iter().map(|&i| labels[i]).collect();
    let db_labels = database.labels().to_vec();
    let map = evaluate_codes(&query_codes, &db_codes, &query_labels, &db_labels, map_at)?;
    Ok(AdshRun {
        outcome,
        query_codes,
        db_codes,
        query_labels,
        db_labels,
        map,
    })
}
