//! Command-line front end. Exit codes: 0 success, 1 usage or
//! configuration, 2 data, 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{DataSource, Method, RunConfig};
use crate::data::{load_cifar_file, make_split, write_manifest, Split};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::pipeline::{
    adsh_train_and_evaluate, encode_codes, load_dataset, read_labels, train_and_evaluate, write_labels,
};
use crate::retrieval::{
    precision_at, radius_metrics, rank_all, rank_database, LabelRelevance, MapReport, PackedCodes,
};
use crate::shadow::write_trace;
use crate::solvers::{cnnh_factorize, reconstruction_error, SignSimilarity};

/// Environment variable consulted when no dataset is configured.
pub const DATASET_ENV: &str = "SHADOWHASH_CIFAR_DIR";

#[derive(Parser, Debug)]
#[command(name = "shadowhash", version, about = "Supervised hashing with shadow codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a hashing network (srh, dsh or cauchy) and write its artifacts.
    Train(RunArgs),
    /// Encode a CIFAR-format image file with a checkpoint.
    Encode(EncodeArgs),
    /// Score query codes against database codes.
    Eval(EvalArgs),
    /// Rank a database for a single query.
    Query(QueryArgs),
    /// Factorize a class similarity matrix into target codes.
    FactorizeCnnh(CnnhArgs),
    /// Asymmetric training: network for queries, database codes solved directly.
    SolveAdsh(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// key = value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long)]
    method: Option<String>,
    /// Code length.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, conflicts_with = "alpha_over_beta")]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Sets alpha to this multiple of beta.
    #[arg(long)]
    alpha_over_beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// CIFAR-10 binary directory, or `synthetic[:per_class[:noise]]`.
    #[arg(long)]
    dataset: Option<String>,
    /// Split sizes: full or desk.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n_query: Option<usize>,
    #[arg(long)]
    n_database: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    /// mAP cutoff (default: full ranking).
    #[arg(long)]
    map_at: Option<usize>,
    /// Network epochs per alternation (ADSH).
    #[arg(long)]
    inner_epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// CIFAR-format record file.
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Expected code length; must match the checkpoint.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 160)]
    batch: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    query_codes: PathBuf,
    #[arg(long)]
    db_codes: PathBuf,
    /// One label per line, aligned with the query codes.
    #[arg(long)]
    query_labels: PathBuf,
    #[arg(long)]
    db_labels: PathBuf,
    #[arg(long)]
    map_at: Option<usize>,
    /// Also report precision over the top N.
    #[arg(long)]
    precision_at: Option<usize>,
    /// Also report Hamming-ball precision and recall at this radius.
    #[arg(long)]
    radius: Option<usize>,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    db_codes: PathBuf,
    /// Query code as a string of 0/1 characters, bit 0 first (1 = +1).
    #[arg(long, conflicts_with_all = ["image", "checkpoint"])]
    code: Option<String>,
    /// CIFAR-format record file holding the query image.
    #[arg(long, requires = "checkpoint")]
    image: Option<PathBuf>,
    #[arg(long, requires = "image")]
    checkpoint: Option<PathBuf>,
    /// Record within --image.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args, Debug)]
struct CnnhArgs {
    /// One class label per line.
    #[arg(long)]
    labels: PathBuf,
    /// Code length.
    #[arg(long)]
    q: usize,
    #[arg(long, default_value_t = 20)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the binarized target codes.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Output goes to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut impl Write) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(&a, out),
        Command::SolveAdsh(a) => cmd_solve_adsh(&a, out),
        Command::Encode(a) => cmd_encode(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Query(a) => cmd_query(&a, out),
        Command::FactorizeCnnh(a) => cmd_factorize(&a, out),
    }
}

fn emit(out: &mut impl Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

/// Config file, then flags, then the dataset fallback from the environment.
fn resolve_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides: [(&str, Option<String>); 17] = [
        ("method", a.method.clone()),
        ("k", a.k.map(|v| v.to_string())),
        ("alpha", a.alpha.map(|v| v.to_string())),
        ("beta", a.beta.map(|v| v.to_string())),
        ("gamma", a.gamma.map(|v| v.to_string())),
        ("margin", a.margin.map(|v| v.to_string())),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("batch", a.batch.map(|v| v.to_string())),
        ("lr", a.lr.map(|v| v.to_string())),
        ("momentum", a.momentum.map(|v| v.to_string())),
        ("weight_decay", a.weight_decay.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("dataset", a.dataset.clone()),
        ("preset", a.preset.clone()),
        ("n_query", a.n_query.map(|v| v.to_string())),
        ("n_database", a.n_database.map(|v| v.to_string())),
        ("n_train", a.n_train.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if let Some(v) = a.map_at {
        cfg.map_at = Some(v);
    }
    if let Some(v) = a.inner_epochs {
        cfg.inner_epochs = v;
    }
    if let Some(r) = a.alpha_over_beta {
        cfg.alpha = r * cfg.beta;
    }
    if cfg.dataset.is_none() {
        if let Some(dir) = std::env::var_os(DATASET_ENV) {
            cfg.dataset = Some(DataSource::Cifar(dir.into()));
        }
    }
    Ok(cfg)
}

fn prepare(cfg: &RunConfig, out_dir: &Path) -> Result<(crate::data::LabeledImageSet, Split)> {
    let source = cfg.dataset.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "no dataset: pass --dataset <cifar dir | synthetic> or set {DATASET_ENV}"
        ))
    })?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let config_path = out_dir.join("config.txt");
    fs::write(&config_path, cfg.dump()).map_err(|e| Error::io(&config_path, e))?;
    let images = load_dataset(source)?;
    let split = make_split(images.labels(), cfg.split_spec(), cfg.seed)?;
    write_manifest(out_dir.join("split_query.txt"), &split.query)?;
    write_manifest(out_dir.join("split_database.txt"), &split.database)?;
    write_manifest(out_dir.join("split_train.txt"), &split.train)?;
    Ok((images, split))
}

fn report_map(out: &mut impl Write, map: &MapReport) -> Result<()> {
    emit(out, format_args!("map={:.4}", map.map))?;
    emit(out, format_args!("queries={}", map.evaluated))?;
    emit(out, format_args!("excluded={}", map.excluded.len()))
}

fn cmd_train(a: &RunArgs, out: &mut impl Write) -> Result<()> {
    let cfg = resolve_config(a)?;
    if matches!(cfg.method, Method::Adsh | Method::Cnnh) {
        return Err(Error::Config(format!(
            "method {} has its own subcommand (solve-adsh, factorize-cnnh)",
            cfg.method.as_str()
        )));
    }
    let train_cfg = cfg.train_config()?;
    let (images, split) = prepare(&cfg, &a.out)?;
    let mut lines = Vec::new();
    let run = train_and_evaluate(&images, &split, &train_cfg, cfg.map_at, |e| {
        let line = format!(
            "epoch={} loss={:.4} pair={:.4} shadow={:.4} norm={:.4}",
            e.epoch, e.mean_loss, e.pair, e.shadow, e.norm
        );
        log::info!("{line}");
        lines.push(line);
    })?;
    for line in &lines {
        emit(out, format_args!("{line}"))?;
    }
    let dir = &a.out;
    Checkpoint::from_network(&run.outcome.network).save(dir.join("checkpoint.hlck"))?;
    PackedCodes::from_signs(run.outcome.shadow.view()).save(dir.join("shadow_codes.hlpc"))?;
    run.db_codes.save(dir.join("db_codes.hlpc"))?;
    run.query_codes.save(dir.join("query_codes.hlpc"))?;
    write_labels(dir.join("query_labels.txt"), &run.query_labels)?;
    write_labels(dir.join("db_labels.txt"), &run.db_labels)?;
    write_trace(dir.join("loss_trace.tsv"), &run.outcome.trace)?;
    report_map(out, &run.map)
}

fn cmd_solve_adsh(a: &RunArgs, out: &mut impl Write) -> Result<()> {
    let mut cfg = resolve_config(a)?;
    cfg.method = Method::Adsh;
    let adsh_cfg = cfg.adsh_config()?;
    let (images, split) = prepare(&cfg, &a.out)?;
    let run = adsh_train_and_evaluate(&images, &split, &adsh_cfg, cfg.map_at)?;
    let dir = &a.out;
    let mut trace = String::new();
    for (i, obj) in run.outcome.trace.iter().enumerate() {
        emit(out, format_args!("iteration={} objective={obj:.4}", i + 1))?;
        trace.push_str(&format!("{}\t{obj:.9e}\n", i + 1));
    }
    let trace_path = dir.join("adsh_trace.tsv");
    fs::write(&trace_path, trace).map_err(|e| Error::io(&trace_path, e))?;
    Checkpoint::from_network(&run.outcome.network).save(dir.join("checkpoint.hlck"))?;
    run.db_codes.save(dir.join("db_codes.hlpc"))?;
    run.query_codes.save(dir.join("query_codes.hlpc"))?;
    write_labels(dir.join("query_labels.txt"), &run.query_labels)?;
    write_labels(dir.join("db_labels.txt"), &run.db_labels)?;
    report_map(out, &run.map)
}

fn cmd_encode(a: &EncodeArgs, out: &mut impl Write) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let bits = ckpt
        .bits()
        .ok_or_else(|| Error::Format(format!("{}: no output layer", a.checkpoint.display())))?;
    if let Some(k) = a.k {
        if k != bits {
            return Err(Error::Config(format!("requested k={k} but the checkpoint produces {bits} bits")));
        }
    }
    let net = ckpt.to_canonical::<f32>()?;
    let images = load_cifar_file(&a.images)?;
    let ids: Vec<usize> = (0..images.len()).collect();
    let codes = encode_codes(&net, &images, &ids, a.batch.max(1))?;
    codes.save(&a.out)?;
    emit(out, format_args!("encoded={} bits={bits}", codes.len()))
}

fn cmd_eval(a: &EvalArgs, out: &mut impl Write) -> Result<()> {
    let queries = PackedCodes::load(&a.query_codes)?;
    let db = PackedCodes::load(&a.db_codes)?;
    let query_labels = read_labels(&a.query_labels)?;
    let db_labels = read_labels(&a.db_labels)?;
    let missing_q: Vec<usize> = (query_labels.len()..queries.len()).collect();
    if !missing_q.is_empty() {
        return Err(Error::MissingIds(missing_q));
    }
    let missing_db: Vec<usize> = (db_labels.len()..db.len()).collect();
    if !missing_db.is_empty() {
        return Err(Error::MissingIds(missing_db));
    }
    let rankings = rank_all(&queries, &db, None)?;
    let rel = LabelRelevance {
        query_labels: &query_labels,
        db_labels: &db_labels,
    };
    let map = crate::retrieval::mean_average_precision(&rankings, &rel, a.map_at)?;
    report_map(out, &map)?;
    if let Some(n) = a.precision_at {
        let p = precision_at(&rankings, &rel, n)?;
        emit(out, format_args!("precision_at_{n}={p:.4}"))?;
    }
    if let Some(r) = a.radius {
        let rep = radius_metrics(&rankings, &rel, r)?;
        emit(out, format_args!("radius={r} radius_precision={:.4} radius_recall={:.4}", rep.precision, rep.recall))?;
    }
    Ok(())
}

fn parse_code(s: &str) -> Result<PackedCodes> {
    let bits = s
        .chars()
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            _ => Err(Error::Config(format!("query code must be 0/1 characters, got {c:?}"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    let mut codes = PackedCodes::new(bits.len());
    codes.push_bits(bits);
    Ok(codes)
}

fn cmd_query(a: &QueryArgs, out: &mut impl Write) -> Result<()> {
    let db = PackedCodes::load(&a.db_codes)?;
    let query = match (&a.code, &a.image, &a.checkpoint) {
        (Some(code), _, _) => parse_code(code)?,
        (None, Some(image), Some(ckpt)) => {
            let net = Checkpoint::load(ckpt)?.to_canonical::<f32>()?;
            let images = load_cifar_file(image)?;
            if a.index >= images.len() {
                return Err(Error::MissingIds(vec![a.index]));
            }
            encode_codes(&net, &images, &[a.index], 1)?
        }
        _ => return Err(Error::Config("pass --code, or --image with --checkpoint".into())),
    };
    let ranked = rank_database(0, query.code(0), &db, Some(a.top))?;
    for hit in ranked.hits {
        emit(out, format_args!("{}\t{}", hit.id, hit.distance))?;
    }
    Ok(())
}

fn cmd_factorize(a: &CnnhArgs, out: &mut impl Write) -> Result<()> {
    let labels = read_labels(&a.labels)?;
    let s = SignSimilarity::from_classes(&labels);
    let h = cnnh_factorize(&s, a.q, a.sweeps, a.seed)?;
    let hb = h.mapv(|x| if x >= 0.0 { 1.0 } else { -1.0 });
    emit(out, format_args!("relaxed_error={:.4}", reconstruction_error(s.view(), h.view())))?;
    emit(out, format_args!("binary_error={:.4}", reconstruction_error(s.view(), hb.view())))?;
    if let Some(path) = &a.out {
        crate::retrieval::binarize_and_pack(h.view())?.save(path)?;
    }
    Ok(())
}
