//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any gating criterion fails.
//!
//! Criterion 7 needs a GTZAN-layout directory in `GENRESIG_GTZAN_DIR`. It
//! trains with the CLI defaults unless `GENRESIG_GTZAN_RUN` names an existing
//! `train` output (with `GENRESIG_GTZAN_CACHE` as its cache) to reuse.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use genresig::checkpoint::{decode_checkpoint, encode_checkpoint};
use genresig::dataset::CachedSource;
use genresig::report::{read_confusion, read_encodings};
use genresig::synth::{synth_track, SyntheticSpec};
use genresig_core::analysis::{find_genre_equations, genre_neighbors, recommend_tracks, Metric, PcaModel};
use genresig_core::audio::AudioClip;
use genresig_core::diagnostics::{gradcheck_suite, COMPOSITE_TOLERANCE, SIMPLE_OP_TOLERANCE};
use genresig_core::signatures::{token_weights, TrackSignature};
use genresig_core::spectral::{compute_spectrogram, SpectrogramConfig};
use genresig_core::tokens::{tokenize, TokenSequence};
use genresig_core::training::{evaluate, ConfusionMatrix, SampleSource, TrainConfig, Trainer};
use genresig_core::{ModelConfig, ModelParams, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRADCHECK_POINTS: usize = 10;
const GRADCHECK_BUDGET: Duration = Duration::from_secs(120);
const NORMALIZATION_DRAWS: usize = 100;
const NORMALIZATION_TOLERANCE: f64 = 1e-9;
const SYNTH_TRACKS_PER_CLASS: usize = 20;
const SYNTH_SEED: u64 = 7;
const CV_FOLDS: usize = 6;
const CV_EPOCHS: usize = 5;
const CV_TARGET: f64 = 0.90;
const SUBSET_PER_CLASS: usize = 2;
const SUBSET_MAX_EPOCHS: usize = 200;
const LEARNABILITY_BUDGET: Duration = Duration::from_secs(30 * 60);
const CHECKPOINT_LOGIT_TOLERANCE: f64 = 1e-4;
const ORACLE_INSTANCES: usize = 50;
const EQUATION_CANDIDATES: usize = 1260;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn genresig(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_genresig"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("genresig {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let checks = match gradcheck_suite(1, GRADCHECK_POINTS) {
        Ok(c) => c,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let worst = |composite: bool| {
        checks
            .iter()
            .filter(|c| (c.threshold == COMPOSITE_TOLERANCE) == composite)
            .map(|c| c.max_relative_error)
            .fold(0.0, f64::max)
    };
    let failed: Vec<&str> =
        checks.iter().filter(|c| !c.passed() || c.points < GRADCHECK_POINTS).map(|c| c.name).collect();
    let passed = failed.is_empty() && elapsed < GRADCHECK_BUDGET;
    outcome(
        passed,
        format!(
            "{} checks x {} points, worst simple {:.2e} (< {:.0e}), worst composite {:.2e} (< {:.0e}), {:.0}s (< {}s){}",
            checks.len(),
            GRADCHECK_POINTS,
            worst(false),
            SIMPLE_OP_TOLERANCE,
            worst(true),
            COMPOSITE_TOLERANCE,
            elapsed.as_secs_f64(),
            GRADCHECK_BUDGET.as_secs(),
            if failed.is_empty() { String::new() } else { format!(", failed: {}", failed.join(" ")) }
        ),
    )
}

fn geometry() -> Result<Outcome, String> {
    let spec = SyntheticSpec::gtzan_like(1, 1);
    let samples = synth_track(&spec.classes[0], 30.0, 22050, 1);
    let clip = AudioClip::new(samples, 22050, "geometry").map_err(|e| e.to_string())?;
    let image = compute_spectrogram(&clip, &SpectrogramConfig::default()).map_err(|e| e.to_string())?;
    let seq = tokenize(&image).map_err(|e| e.to_string())?;
    let shapes_ok = seq.tokens.iter().all(|t| t.shape() == [217, 45]);
    let frame = image.frame_duration;
    let stride_ok = seq.start_times.windows(2).all(|w| ((w[1] - w[0]) / frame - 33.0).abs() < 1e-9);
    let overlap_ok =
        (0..seq.len() - 1).all(|i| (0..217).all(|b| seq.tokens[i].row(b)[33..45] == seq.tokens[i + 1].row(b)[..12]));
    let passed = seq.len() == 10 && shapes_ok && stride_ok && overlap_ok && seq.layout.overlap_frames() == 12;
    Ok(outcome(
        passed,
        format!(
            "{} frames -> {} tokens of {:?}, stride 33 {}, 12-frame overlap {}",
            image.frames,
            seq.len(),
            seq.tokens[0].shape(),
            if stride_ok { "ok" } else { "wrong" },
            if overlap_ok { "ok" } else { "wrong" }
        ),
    ))
}

fn normalization() -> Result<Outcome, String> {
    let cfg = ModelConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for draw in 0..NORMALIZATION_DRAWS {
        let params = ModelParams::init(&cfg, draw as u64).map_err(|e| e.to_string())?;
        let scale = rng.random_range(0.1..4.0);
        let tokens = (0..cfg.token_count)
            .map(|_| {
                let data = (0..217 * 45).map(|_| scale * rng.random_range(0.0..1.0)).collect();
                Tensor::new(&[217, 45], data).unwrap()
            })
            .collect();
        let seq = TokenSequence {
            tokens,
            layout: Default::default(),
            start_times: (0..10).map(|i| i as f64).collect(),
            frame_duration: 1.0,
        };
        let out = params.forward(&seq).map_err(|e| e.to_string())?;
        for row in out.attention.data().chunks(cfg.token_count) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        worst = worst.max((out.token_scores.sum() - 1.0).abs());
        let weights = token_weights(out.token_scores.data(), cfg.score_temperature);
        worst = worst.max((weights.iter().sum::<f64>() - 1.0).abs());
    }
    Ok(outcome(
        worst < NORMALIZATION_TOLERANCE,
        format!("{NORMALIZATION_DRAWS} draws, worst |sum - 1| = {worst:.2e} (< {NORMALIZATION_TOLERANCE:.0e})"),
    ))
}

fn macro_accuracy(cm: &ConfusionMatrix) -> f64 {
    let rows = cm.row_sums();
    (0..cm.classes()).map(|g| cm.get(g, g) as f64 / rows[g].max(1) as f64).sum::<f64>() / cm.classes() as f64
}

struct Corpus {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn synthetic_corpus() -> Result<Corpus, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().to_path_buf();
    let tracks = SYNTH_TRACKS_PER_CLASS.to_string();
    let seed = SYNTH_SEED.to_string();
    genresig(&["synth", "--out", "wav", "--tracks", &tracks, "--seed", &seed], &root)?;
    genresig(&["prepare", "--data", "wav", "--cache", "cache"], &root)?;
    Ok(Corpus { _dir: dir, root })
}

/// Trains on a 20-track subset until it fits its own training set.
fn fit_subset(source: &CachedSource) -> Result<(ModelParams, Vec<usize>, Option<usize>), String> {
    let mut subset = Vec::new();
    for g in 0..source.genre_names().len() {
        subset.extend((0..source.len()).filter(|&i| source.label(i) == g).take(SUBSET_PER_CLASS));
    }
    let cfg = TrainConfig { epochs: SUBSET_MAX_EPOCHS, ..TrainConfig::default() };
    let model = ModelConfig { class_count: source.genre_names().len(), ..ModelConfig::default() };
    let mut trainer = Trainer::new(ModelParams::init(&model, 11).map_err(|e| e.to_string())?, &cfg, 12);
    for epoch in 1..=SUBSET_MAX_EPOCHS {
        trainer.train_epoch(source, &subset).map_err(|e| e.to_string())?;
        let eval = evaluate(trainer.params(), source, &subset).map_err(|e| e.to_string())?;
        if eval.confusion.accuracy() == 1.0 {
            return Ok((trainer.into_params(), subset, Some(epoch)));
        }
    }
    Ok((trainer.into_params(), subset, None))
}

fn learnability(corpus: &Corpus, subset_model: &mut Option<(ModelParams, Vec<usize>)>) -> Result<Outcome, String> {
    let start = Instant::now();
    let (folds, epochs) = (CV_FOLDS.to_string(), CV_EPOCHS.to_string());
    genresig(
        &["train", "--data", "cache", "--out", "cv", "--folds", &folds, "--epochs", &epochs, "--patience", &epochs],
        &corpus.root,
    )?;
    let (_, cm) = read_confusion(&corpus.root.join("cv/confusion.csv")).map_err(|e| e.to_string())?;
    let macro_acc = macro_accuracy(&cm);
    let source = CachedSource::open(&corpus.root.join("cache")).map_err(|e| e.to_string())?;
    let (params, subset, fitted_at) = fit_subset(&source)?;
    *subset_model = Some((params, subset));
    let elapsed = start.elapsed();
    let passed = macro_acc >= CV_TARGET && fitted_at.is_some() && elapsed < LEARNABILITY_BUDGET;
    Ok(outcome(
        passed,
        format!(
            "{}-fold CV macro accuracy {:.3} (>= {CV_TARGET}) over {} tracks, {} epochs; 20-track subset {}; {:.0}s (< {}s)",
            CV_FOLDS,
            macro_acc,
            cm.total(),
            CV_EPOCHS,
            match fitted_at {
                Some(e) => format!("fits at epoch {e} (<= {SUBSET_MAX_EPOCHS})"),
                None => format!("not fitted in {SUBSET_MAX_EPOCHS} epochs"),
            },
            elapsed.as_secs_f64(),
            LEARNABILITY_BUDGET.as_secs()
        ),
    ))
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn oracle_equivalence() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let err = |e: genresig_core::Error| e.to_string();
    let mut mismatches = 0;
    for instance in 0..ORACLE_INSTANCES {
        // integer grid coordinates so distance ties exercise the tie-break
        let corpus: Vec<TrackSignature> = (0..40)
            .map(|i| TrackSignature {
                track_id: format!("t{:02}", (i * 7 + instance) % 40),
                label: i % 10,
                vector: (0..4).map(|_| rng.random_range(-2i32..=2) as f64).collect(),
                weights: vec![],
                intervals: vec![],
            })
            .collect();
        let query = &corpus[instance % 40];
        for metric in [Metric::Cosine, Metric::Euclidean] {
            let got: Vec<String> =
                recommend_tracks(query, &corpus, 5, metric).map_err(err)?.into_iter().map(|r| r.track_id).collect();
            let mut all: Vec<(f64, &str)> = corpus
                .iter()
                .filter(|s| s.track_id != query.track_id)
                .map(|s| (metric.distance(&query.vector, &s.vector), s.track_id.as_str()))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
            mismatches += usize::from(got.iter().map(String::as_str).ne(all[..5].iter().map(|a| a.1)));
        }
        let enc = random_vectors(&mut rng, 10, 6);
        let neighbors = genre_neighbors(&enc, 2, Metric::Cosine).map_err(err)?;
        for (g, list) in neighbors.iter().enumerate() {
            let mut all: Vec<(f64, usize)> =
                (0..10).filter(|&o| o != g).map(|o| (Metric::Cosine.distance(&enc[g], &enc[o]), o)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            mismatches += usize::from(list.iter().map(|n| n.0).ne(all[..2].iter().map(|a| a.1)));
        }
    }

    let mut orthonormality: f64 = 0.0;
    let mut reconstruction: f64 = 0.0;
    for _ in 0..ORACLE_INSTANCES {
        let basis = random_vectors(&mut rng, 2, 8);
        let points: Vec<Vec<f64>> = (0..15)
            .map(|_| {
                let (s, t) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                (0..8).map(|i| 0.5 + s * basis[0][i] + t * basis[1][i]).collect()
            })
            .collect();
        let pca = PcaModel::fit(&points, 2).map_err(err)?;
        for i in 0..2 {
            for j in 0..2 {
                let dot: f64 = pca.components[i].iter().zip(&pca.components[j]).map(|(a, b)| a * b).sum();
                orthonormality = orthonormality.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        for p in &points {
            let back = pca.reconstruct(&pca.project(p).map_err(err)?);
            let r = back.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            reconstruction = reconstruction.max(r);
        }
    }

    let mut enc = random_vectors(&mut rng, 10, 16);
    enc[9] = (0..16).map(|i| enc[1][i] - enc[6][i] + enc[3][i]).collect();
    let all = find_genre_equations(&enc, usize::MAX, None);
    let planted = all.first().map_or(f64::INFINITY, |e| e.residual);
    let planted_ok = all.first().is_some_and(|e| (e.a, e.b, e.c, e.d) == (1, 6, 3, 9)) && planted < 1e-12;

    let passed = mismatches == 0
        && orthonormality < 1e-8
        && reconstruction < 1e-8
        && planted_ok
        && all.len() == EQUATION_CANDIDATES;
    Ok(outcome(
        passed,
        format!(
            "{ORACLE_INSTANCES} instances, {mismatches} ranking mismatches vs brute force; PCA orthonormality {orthonormality:.1e}, \
             rank-2 reconstruction {reconstruction:.1e} (< 1e-8); planted equation residual {planted:.1e} (< 1e-12); \
             {} candidates (= {EQUATION_CANDIDATES})",
            all.len()
        ),
    ))
}

fn determinism(corpus: &Corpus, subset_model: &Option<(ModelParams, Vec<usize>)>) -> Result<Outcome, String> {
    let folds = CV_FOLDS.to_string();
    for (run, jobs) in [("det_a", "1"), ("det_b", "2")] {
        genresig(
            &["train", "--data", "cache", "--out", run, "--folds", &folds, "--epochs", "1", "--jobs", jobs],
            &corpus.root,
        )?;
    }
    let read = |p: &str| fs::read(corpus.root.join(p)).map_err(|e| e.to_string());
    let confusion_same = read("det_a/confusion.csv")? == read("det_b/confusion.csv")?;
    let checkpoints_same = read("det_a/fold0.tsig")? == read("det_b/fold0.tsig")?;

    let (params, subset) = subset_model.as_ref().ok_or("no subset model from learnability")?;
    let source = CachedSource::open(&corpus.root.join("cache")).map_err(|e| e.to_string())?;
    let reloaded = decode_checkpoint(&encode_checkpoint(params, source.genre_names())).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for &i in subset {
        let tokens = source.tokens(i).map_err(|e| e.to_string())?;
        let a = params.forward(&tokens).map_err(|e| e.to_string())?;
        let b = reloaded.params.forward(&tokens).map_err(|e| e.to_string())?;
        worst = worst.max(a.logits.max_abs_diff(&b.logits));
    }
    Ok(outcome(
        confusion_same && checkpoints_same && worst < CHECKPOINT_LOGIT_TOLERANCE,
        format!(
            "repeat train (--jobs 1 vs 2): confusion {}, fold0 checkpoint {}; checkpoint round trip max logit change {:.2e} (< {:.0e})",
            if confusion_same { "identical" } else { "DIFFERS" },
            if checkpoints_same { "identical" } else { "DIFFERS" },
            worst,
            CHECKPOINT_LOGIT_TOLERANCE
        ),
    ))
}

fn gtzan_report(root: &Path) -> Result<Vec<String>, String> {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (cache, run) = match (env::var_os("GENRESIG_GTZAN_RUN"), env::var_os("GENRESIG_GTZAN_CACHE")) {
        (Some(run), Some(cache)) => (PathBuf::from(cache), PathBuf::from(run)),
        _ => {
            let (cache, run) = (work.path().join("cache"), work.path().join("run"));
            let root = root.to_string_lossy().into_owned();
            let c = cache.to_string_lossy().into_owned();
            let r = run.to_string_lossy().into_owned();
            genresig(&["prepare", "--data", &root, "--cache", &c], work.path())?;
            genresig(&["train", "--data", &c, "--out", &r], work.path())?;
            (cache, run)
        }
    };
    let (c, r) = (cache.to_string_lossy().into_owned(), run.to_string_lossy().into_owned());
    genresig(&["signatures", "--data", &c, "--run", &r, "--out", "sigs"], work.path())?;
    let (genres, cm) = read_confusion(&run.join("confusion.csv")).map_err(|e| e.to_string())?;
    let (enc_genres, encodings) =
        read_encodings(&work.path().join("sigs/genre_encodings.csv")).map_err(|e| e.to_string())?;
    let at = |names: &[String], g: &str| names.iter().position(|n| n == g).ok_or(format!("genre {g} missing"));
    let (blues, country, classical) = (at(&genres, "blues")?, at(&genres, "country")?, at(&genres, "classical")?);
    let pair = |a: usize, b: usize| cm.get(a, b) + cm.get(b, a);
    let mut lines = vec![format!(
        "blues<->country confusion {} vs blues<->classical {}: {}",
        pair(blues, country),
        pair(blues, classical),
        if pair(blues, country) > pair(blues, classical) { "as described" } else { "not observed" }
    )];
    let vectors: Vec<Vec<f64>> = encodings.into_iter().map(|e| e.vector).collect();
    let neighbors = genre_neighbors(&vectors, 2, Metric::Cosine).map_err(|e| e.to_string())?;
    let b = at(&enc_genres, "blues")?;
    let near: Vec<&str> = neighbors[b].iter().map(|(g, _)| enc_genres[*g].as_str()).collect();
    lines.push(format!(
        "blues 2-NN {:?}: {}",
        near,
        if near.iter().any(|n| *n == "country" || *n == "reggae") {
            "intersects {country, reggae}"
        } else {
            "disjoint"
        }
    ));
    let wanted = ["blues", "country", "disco", "rock"];
    let top = find_genre_equations(&vectors, 10, None);
    let hit = top.iter().find(|e| {
        let mut names: Vec<&str> = [e.a, e.b, e.c, e.d].iter().map(|&g| enc_genres[g].as_str()).collect();
        names.sort_unstable();
        names == wanted
    });
    lines.push(match hit {
        Some(e) => format!(
            "top-10 equations include {} - {} + {} = {} (residual {:.3})",
            enc_genres[e.a], enc_genres[e.b], enc_genres[e.c], enc_genres[e.d], e.residual
        ),
        None => "no top-10 equation over {blues, country, disco, rock}".to_string(),
    });
    Ok(lines)
}

fn report(n: usize, name: &str, result: Result<Outcome, String>) -> bool {
    let o = result.unwrap_or_else(|e| outcome(false, e));
    println!("criterion {n} {name}: {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    o.passed
}

fn main() {
    if env::args().any(|a| a == "--list") {
        return;
    }
    let mut passed = Vec::new();
    passed.push(report(1, "gradient integrity", Ok(gradient_integrity())));
    passed.push(report(2, "geometry contract", geometry()));
    passed.push(report(3, "normalization invariants", normalization()));
    let corpus = synthetic_corpus();
    let mut subset_model = None;
    match &corpus {
        Ok(c) => {
            passed.push(report(4, "learnability", learnability(c, &mut subset_model)));
            passed.push(report(5, "oracle equivalence", oracle_equivalence()));
            passed.push(report(6, "determinism", determinism(c, &subset_model)));
        }
        Err(e) => {
            passed.push(report(4, "learnability", Err(e.clone())));
            passed.push(report(5, "oracle equivalence", oracle_equivalence()));
            passed.push(report(6, "determinism", Err(e.clone())));
        }
    }
    match env::var_os("GENRESIG_GTZAN_DIR") {
        None => println!("criterion 7 GTZAN qualitative checks: SKIPPED (non-gating; set GENRESIG_GTZAN_DIR)"),
        Some(dir) => match gtzan_report(Path::new(&dir)) {
            Ok(lines) => {
                for l in lines {
                    println!("criterion 7 GTZAN qualitative checks: REPORTED (non-gating) {l}");
                }
            }
            Err(e) => println!("criterion 7 GTZAN qualitative checks: REPORTED (non-gating) could not run: {e}"),
        },
    }
    let failed = passed.iter().filter(|p| !**p).count();
    println!("acceptance: {} of {} gating criteria passed", passed.len() - failed, passed.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
