//! The `genresig` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use genresig_core::analysis::{find_genre_equations, genre_neighbors, recommend_tracks, Metric, PcaModel};
use genresig_core::diagnostics::gradcheck_suite;
use genresig_core::model::{ModelConfig, ModelParams};
use genresig_core::signatures::{attention_report, genre_encodings, track_signature, SignatureSource};
use genresig_core::spectral::SpectrogramConfig;
use genresig_core::training::{
    evaluate, stratified_kfold, train_all, train_fold, ConfusionMatrix, FoldPlan, SampleSource, TrainConfig,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::dataset::{prepare, CachedSource};
use crate::error::{io_err, json_err, Error, Result};
use crate::report;
use crate::synth::{synth_dataset, SyntheticSpec};

#[derive(Parser, Debug)]
#[command(name = "genresig", version, about = "Attention-pooled spectrogram genre classifier and embedding analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Write a synthetic GTZAN-layout WAV corpus to --out
    Synth,
    /// Build the spectrogram cache (--cache) from a WAV tree (--data)
    Prepare,
    /// Cross-validate on a cache, writing checkpoints and reports to --out
    Train,
    /// Re-evaluate the fold checkpoints of --run (or one --model)
    Evaluate,
    /// Track signatures and genre encodings from a training run
    Signatures,
    /// PCA coordinates of genre encodings (or, with --per-track, signatures)
    Pca,
    /// Rank genre equations a − b + c ≈ d
    Equations,
    /// Nearest genres of each genre
    Neighbors,
    /// Tracks most similar to --track
    Recommend,
    /// Ranked token attention for sampled tracks of every genre
    Attention,
    /// Finite-difference check of every differentiable op and the model
    Gradcheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Prepare => "prepare",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Signatures => "signatures",
            Command::Pca => "pca",
            Command::Equations => "equations",
            Command::Neighbors => "neighbors",
            Command::Recommend => "recommend",
            Command::Attention => "attention",
            Command::Gradcheck => "gradcheck",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricArg {
    Cosine,
    Euclidean,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::Cosine => Metric::Cosine,
            MetricArg::Euclidean => Metric::Euclidean,
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// WAV dataset root (synth/prepare) or spectrogram cache (other commands)
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output directory of a previous `train`
    #[arg(long, global = true)]
    pub run: Option<PathBuf>,
    /// A single checkpoint to use instead of the fold models
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Directory holding signatures.csv and genre_encodings.csv
    #[arg(long, global = true)]
    pub signatures: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    /// Train (or use) one extra model fitted on every track
    #[arg(long, global = true)]
    pub refit: bool,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Weight attention outputs instead of CNN token embeddings
    #[arg(long, global = true)]
    pub attended: bool,
    #[arg(long, global = true, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, global = true)]
    pub components: Option<usize>,
    #[arg(long, global = true)]
    pub per_track: bool,
    /// Search equations in the first N principal components
    #[arg(long, global = true)]
    pub in_pca: Option<usize>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub max: Option<usize>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub track: Option<String>,
    /// Tracks sampled per genre for `attention`
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Tracks per class for `synth`
    #[arg(long, global = true)]
    pub tracks: Option<usize>,
    /// Random points per op for `gradcheck`
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Worker threads (0 = all cores); results do not depend on it
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub deterministic: bool,
}

/// Defaults, then the `--config` file, then explicit flags.
pub fn merge_config(command: Command, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.command = command.name().to_string();
    macro_rules! take {
        ($($field:ident => $target:ident),* $(,)?) => {
            $(if let Some(v) = flags.$field.clone() { cfg.$target = v; })*
        };
    }
    macro_rules! take_opt {
        ($($field:ident),* $(,)?) => {
            $(if let Some(v) = flags.$field.clone() { cfg.$field = Some(v.into()); })*
        };
    }
    take!(seed => seed, folds => folds, epochs => epochs, batch => batch, lr => lr, patience => patience,
        temperature => temperature, components => components, max => max, samples => samples,
        tracks => tracks_per_class, points => points, jobs => jobs);
    take_opt!(data, cache, out, run, model, signatures, metric, in_pca, threshold, k, track);
    cfg.refit |= flags.refit;
    cfg.attended |= flags.attended;
    cfg.per_track |= flags.per_track;
    cfg.deterministic |= flags.deterministic;
    Ok(cfg)
}

fn usage(command: Command) -> String {
    let mut cmd = Cli::command();
    cmd.find_subcommand_mut(command.name()).map(|c| c.render_usage().to_string()).unwrap_or_default()
}

fn require<'a, T>(value: &'a Option<T>, flag: &str, command: Command) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| Error::Invalid(format!("missing required flag {flag}\n\n{}", usage(command))))
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 for invalid input, 2 for I/O failures.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = merge_config(cli.command, &cli.flags)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Synth => cmd_synth(cfg),
        Command::Prepare => cmd_prepare(cfg),
        Command::Train => cmd_train(cfg),
        Command::Evaluate => cmd_evaluate(cfg),
        Command::Signatures => cmd_signatures(cfg),
        Command::Pca => cmd_pca(cfg),
        Command::Equations => cmd_equations(cfg),
        Command::Neighbors => cmd_neighbors(cfg),
        Command::Recommend => cmd_recommend(cfg),
        Command::Attention => cmd_attention(cfg),
        Command::Gradcheck => cmd_gradcheck(cfg),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let out = require(&cfg.out, "--out", Command::Synth)?;
    let spec = SyntheticSpec::gtzan_like(cfg.tracks_per_class, cfg.seed);
    let tracks = synth_dataset(&spec, out)?;
    cfg.echo(out)?;
    println!("wrote {} tracks in {} genres to {}", tracks.len(), spec.classes.len(), out.display());
    Ok(())
}

fn cmd_prepare(cfg: &RunConfig) -> Result<()> {
    let data = require(&cfg.data, "--data", Command::Prepare)?;
    let cache = require(&cfg.cache, "--cache", Command::Prepare)?;
    create_dir(cache)?;
    let manifest = prepare(data, cache, &SpectrogramConfig::default())?;
    cfg.echo(cache)?;
    println!(
        "cached {} tracks in {} genres to {}",
        manifest.index.entries.len(),
        manifest.index.genre_names.len(),
        cache.display()
    );
    Ok(())
}

fn cache_dir(cfg: &RunConfig, command: Command) -> Result<&Path> {
    cfg.cache
        .as_deref()
        .or(cfg.data.as_deref())
        .ok_or_else(|| Error::Invalid(format!("missing required flag --cache (or --data)\n\n{}", usage(command))))
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch,
        learning_rate: cfg.lr,
        seed: cfg.seed,
        patience: cfg.patience,
    }
}

fn model_config(cfg: &RunConfig, classes: usize) -> ModelConfig {
    ModelConfig { class_count: classes, score_temperature: cfg.temperature, ..ModelConfig::default() }
}

pub const FOLDS_FILE: &str = "folds.json";
pub const REFIT_FILE: &str = "refit.tsig";

pub fn fold_checkpoint(run: &Path, fold: usize) -> PathBuf {
    run.join(format!("fold{fold}.tsig"))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    tracks: usize,
    genres: &'a [String],
    accuracy: f64,
    fold_accuracies: Vec<f64>,
    best_epochs: Vec<usize>,
    refit_epochs: Option<usize>,
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let cache = cache_dir(cfg, Command::Train)?;
    let out = require(&cfg.out, "--out", Command::Train)?;
    let source = CachedSource::open(cache)?;
    let genres = source.genre_names().to_vec();
    let model = model_config(cfg, genres.len());
    let tcfg = train_config(cfg);
    tcfg.validate()?;
    let plan = stratified_kfold(&source.index().labels(), genres.len(), cfg.folds, cfg.seed)?;
    create_dir(out)?;
    cfg.echo(out)?;
    report::write_json(&out.join(FOLDS_FILE), &plan)?;
    let mut log = report::JsonLines::create(&out.join("train_log.jsonl"))?;
    let mut confusion = ConfusionMatrix::new(genres.len());
    let mut fold_accuracies = Vec::new();
    let mut best_epochs = Vec::new();
    for fold in 0..plan.k() {
        let mut log_error = None;
        let outcome = train_fold(&source, &plan, fold, &model, &tcfg, |entry| {
            log::info!(
                "fold {} epoch {}: train loss {:.4}, val loss {:.4}, val acc {:.3}",
                entry.fold,
                entry.epoch,
                entry.train_loss,
                entry.val_loss,
                entry.val_accuracy
            );
            if let Err(e) = log.push(entry) {
                log_error.get_or_insert(e);
            }
        })?;
        if let Some(e) = log_error {
            return Err(e);
        }
        save_checkpoint(&fold_checkpoint(out, fold), &outcome.params, &genres)?;
        confusion.merge(&outcome.validation.confusion);
        fold_accuracies.push(outcome.validation.confusion.accuracy());
        best_epochs.push(outcome.best_epoch);
    }
    report::write_confusion(&out.join("confusion.csv"), &confusion, &genres)?;
    let refit_epochs = if cfg.refit {
        let mean = best_epochs.iter().sum::<usize>() as f64 / best_epochs.len() as f64;
        let epochs = (mean.round() as usize).max(1);
        let params = train_all(&source, &model, &tcfg, epochs, |epoch, loss| {
            log::info!("refit epoch {epoch}: train loss {loss:.4}");
        })?;
        save_checkpoint(&out.join(REFIT_FILE), &params, &genres)?;
        Some(epochs)
    } else {
        None
    };
    let summary = TrainSummary {
        tracks: source.len(),
        genres: &genres,
        accuracy: confusion.accuracy(),
        fold_accuracies,
        best_epochs,
        refit_epochs,
    };
    report::write_json(&out.join("summary.json"), &summary)?;
    println!("cross-validated accuracy {:.4} over {} tracks", summary.accuracy, summary.tracks);
    Ok(())
}

/// The models of a training run and which one scores each cache entry.
struct RunModels {
    models: Vec<ModelParams>,
    model_of: Vec<usize>,
}

impl RunModels {
    fn for_entry(&self, i: usize) -> &ModelParams {
        &self.models[self.model_of[i]]
    }
}

fn check_genres(path: &Path, found: &[String], expected: &[String]) -> Result<()> {
    if found != expected {
        return Err(Error::Invalid(format!(
            "{} was trained on genres {found:?}, the cache has {expected:?}",
            path.display()
        )));
    }
    Ok(())
}

fn read_plan(run: &Path) -> Result<FoldPlan> {
    let path = run.join(FOLDS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(json_err(&path))
}

/// `--model` if given, else the refit model with `--refit`, else each
/// track's held-out fold model.
fn load_run_models(cfg: &RunConfig, source: &CachedSource, command: Command) -> Result<RunModels> {
    let single = match (&cfg.model, cfg.refit) {
        (Some(path), _) => Some(path.clone()),
        (None, true) => Some(require(&cfg.run, "--run", command)?.join(REFIT_FILE)),
        (None, false) => None,
    };
    if let Some(path) = single {
        let ck = load_checkpoint(&path)?;
        check_genres(&path, &ck.genres, source.genre_names())?;
        return Ok(RunModels { models: vec![ck.params], model_of: vec![0; source.len()] });
    }
    let run = require(&cfg.run, "--run", command)?;
    let plan = read_plan(run)?;
    let mut model_of = vec![usize::MAX; source.len()];
    for (fold, members) in plan.folds.iter().enumerate() {
        for &i in members {
            if i >= source.len() {
                return Err(Error::Invalid(format!("{} does not match the cache", run.join(FOLDS_FILE).display())));
            }
            model_of[i] = fold;
        }
    }
    if model_of.contains(&usize::MAX) {
        return Err(Error::Invalid(format!("{} does not cover the cache", run.join(FOLDS_FILE).display())));
    }
    let models = (0..plan.k())
        .map(|fold| {
            let path = fold_checkpoint(run, fold);
            let ck = load_checkpoint(&path)?;
            check_genres(&path, &ck.genres, source.genre_names())?;
            Ok(ck.params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunModels { models, model_of })
}

fn output_dir(cfg: &RunConfig, command: Command) -> Result<PathBuf> {
    let dir = match (&cfg.out, &cfg.run) {
        (Some(out), _) => out.clone(),
        (None, Some(run)) => run.join(command.name()),
        (None, None) => {
            return Err(Error::Invalid(format!("missing required flag --out or --run\n\n{}", usage(command))))
        }
    };
    create_dir(&dir)?;
    cfg.echo(&dir)?;
    Ok(dir)
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let source = CachedSource::open(cache_dir(cfg, Command::Evaluate)?)?;
    let genres = source.genre_names().to_vec();
    let models = load_run_models(cfg, &source, Command::Evaluate)?;
    let out = output_dir(cfg, Command::Evaluate)?;
    let mut confusion = ConfusionMatrix::new(genres.len());
    for m in 0..models.models.len() {
        let members: Vec<usize> = (0..source.len()).filter(|&i| models.model_of[i] == m).collect();
        if !members.is_empty() {
            confusion.merge(&evaluate(&models.models[m], &source, &members)?.confusion);
        }
    }
    report::write_confusion(&out.join("confusion.csv"), &confusion, &genres)?;
    println!("accuracy {:.4} over {} tracks", confusion.accuracy(), confusion.total());
    Ok(())
}

fn signature_source(cfg: &RunConfig) -> SignatureSource {
    if cfg.attended {
        SignatureSource::Attended
    } else {
        SignatureSource::TokenEmbeddings
    }
}

fn cmd_signatures(cfg: &RunConfig) -> Result<()> {
    let source = CachedSource::open(cache_dir(cfg, Command::Signatures)?)?;
    let genres = source.genre_names().to_vec();
    let models = load_run_models(cfg, &source, Command::Signatures)?;
    let out = output_dir(cfg, Command::Signatures)?;
    let kind = signature_source(cfg);
    let signatures = (0..source.len())
        .into_par_iter()
        .map(|i| -> Result<_> {
            let tokens = source.tokens(i)?;
            let forward = models.for_entry(i).forward(&tokens)?;
            Ok(track_signature(
                source.track_id(i),
                source.label(i),
                &forward,
                tokens.intervals(),
                cfg.temperature,
                kind,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let encodings = genre_encodings(&signatures, genres.len())?;
    report::write_signatures(&out.join("signatures.csv"), &signatures, &genres)?;
    report::write_encodings(&out.join("genre_encodings.csv"), &encodings, &genres)?;
    println!("wrote {} signatures and {} genre encodings to {}", signatures.len(), encodings.len(), out.display());
    Ok(())
}

fn signatures_dir(cfg: &RunConfig, command: Command) -> Result<PathBuf> {
    match (&cfg.signatures, &cfg.run) {
        (Some(dir), _) => Ok(dir.clone()),
        (None, Some(run)) => Ok(run.join("signatures")),
        (None, None) => {
            Err(Error::Invalid(format!("missing required flag --signatures or --run\n\n{}", usage(command))))
        }
    }
}

fn cmd_pca(cfg: &RunConfig) -> Result<()> {
    let dir = signatures_dir(cfg, Command::Pca)?;
    let rows: Vec<(String, Vec<f64>)> = if cfg.per_track {
        let (_, sigs) = report::read_signatures(&dir.join("signatures.csv"))?;
        sigs.into_iter().map(|s| (s.track_id, s.vector)).collect()
    } else {
        let (genres, encs) = report::read_encodings(&dir.join("genre_encodings.csv"))?;
        genres.into_iter().zip(encs).map(|(g, e)| (g, e.vector)).collect()
    };
    let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
    let pca = PcaModel::fit(&vectors, cfg.components)?;
    let projected = rows.iter().map(|(label, v)| Ok((label.clone(), pca.project(v)?))).collect::<Result<Vec<_>>>()?;
    let out = output_dir(cfg, Command::Pca)?;
    report::write_pca(&out.join("pca.csv"), &pca.explained_ratio, &projected)?;
    let ratios: Vec<String> = pca.explained_ratio.iter().map(|r| format!("{r:.4}")).collect();
    println!("explained variance ratio {}", ratios.join(", "));
    Ok(())
}

fn cmd_equations(cfg: &RunConfig) -> Result<()> {
    let dir = signatures_dir(cfg, Command::Equations)?;
    let (genres, encs) = report::read_encodings(&dir.join("genre_encodings.csv"))?;
    let mut vectors: Vec<Vec<f64>> = encs.into_iter().map(|e| e.vector).collect();
    if let Some(c) = cfg.in_pca {
        let pca = PcaModel::fit(&vectors, c)?;
        vectors = vectors.iter().map(|v| pca.project(v)).collect::<genresig_core::Result<_>>()?;
    }
    let equations = find_genre_equations(&vectors, cfg.max, cfg.threshold);
    let out = output_dir(cfg, Command::Equations)?;
    report::write_equations(&out.join("equations.csv"), &equations, &genres)?;
    for e in &equations {
        println!("{} - {} + {} = {}  (residual {:.4})", genres[e.a], genres[e.b], genres[e.c], genres[e.d], e.residual);
    }
    Ok(())
}

fn cmd_neighbors(cfg: &RunConfig) -> Result<()> {
    let dir = signatures_dir(cfg, Command::Neighbors)?;
    let (genres, encs) = report::read_encodings(&dir.join("genre_encodings.csv"))?;
    let vectors: Vec<Vec<f64>> = encs.into_iter().map(|e| e.vector).collect();
    let metric = cfg.metric.unwrap_or(Metric::Euclidean);
    let neighbors = genre_neighbors(&vectors, cfg.k.unwrap_or(2), metric)?;
    let out = output_dir(cfg, Command::Neighbors)?;
    report::write_neighbors(&out.join("neighbors.csv"), &neighbors, &genres)?;
    for (g, list) in neighbors.iter().enumerate() {
        let names: Vec<&str> = list.iter().map(|(n, _)| genres[*n].as_str()).collect();
        println!("{}: {}", genres[g], names.join(", "));
    }
    Ok(())
}

fn cmd_recommend(cfg: &RunConfig) -> Result<()> {
    let track = require(&cfg.track, "--track", Command::Recommend)?;
    let dir = signatures_dir(cfg, Command::Recommend)?;
    let (genres, sigs) = report::read_signatures(&dir.join("signatures.csv"))?;
    let query = sigs
        .iter()
        .find(|s| &s.track_id == track)
        .ok_or_else(|| Error::Invalid(format!("track {track} is not in {}", dir.join("signatures.csv").display())))?;
    let recs = recommend_tracks(query, &sigs, cfg.k.unwrap_or(5), cfg.metric.unwrap_or(Metric::Cosine))?;
    let csv = report::recommendations_csv(track, &recs, &genres);
    let out = output_dir(cfg, Command::Recommend)?;
    let path = out.join("recommendations.csv");
    fs::write(&path, &csv).map_err(io_err(&path))?;
    print!("{csv}");
    Ok(())
}

fn cmd_attention(cfg: &RunConfig) -> Result<()> {
    let source = CachedSource::open(cache_dir(cfg, Command::Attention)?)?;
    let genres = source.genre_names().to_vec();
    let models = load_run_models(cfg, &source, Command::Attention)?;
    let out = output_dir(cfg, Command::Attention)?;
    let report =
        attention_report(&source, genres.len(), |i| models.for_entry(i), cfg.samples, cfg.temperature, cfg.seed)?;
    report::write_attention(&out.join("attention.json"), &report, &genres)?;
    println!("ranked tokens of {} tracks written to {}", report.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct CheckRow {
    op: &'static str,
    max_relative_error: f64,
    threshold: f64,
    points: usize,
    passed: bool,
}

fn cmd_gradcheck(cfg: &RunConfig) -> Result<()> {
    let checks = gradcheck_suite(cfg.seed, cfg.points)?;
    let rows: Vec<CheckRow> = checks
        .iter()
        .map(|c| CheckRow {
            op: c.name,
            max_relative_error: c.max_relative_error,
            threshold: c.threshold,
            points: c.points,
            passed: c.passed(),
        })
        .collect();
    for r in &rows {
        println!(
            "{:<26} max rel err {:.3e}  bound {:.0e}  points {:>3}  {}",
            r.op,
            r.max_relative_error,
            r.threshold,
            r.points,
            if r.passed { "ok" } else { "FAILED" }
        );
    }
    if let Some(out) = &cfg.out {
        cfg.echo(out)?;
        report::write_json(&out.join("gradcheck.json"), &rows)?;
    }
    if rows.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Error::Invalid("gradient check failed".into()))
    }
}
