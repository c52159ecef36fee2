use genresig_core::model::ForwardOutput;
use genresig_core::signatures::{
    genre_encoding, genre_encodings, rank_tokens, signature_vector, token_weights, SignatureSource, TrackSignature,
};
use genresig_core::tokens::{TokenLayout, TokenSequence};
use genresig_core::training::{
    cross_validate, evaluate, stratified_kfold, ConfusionMatrix, InMemorySource, TrainConfig,
};
use genresig_core::{ModelConfig, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn output(scores: Vec<f64>, embeddings: Tensor) -> ForwardOutput {
    let t = scores.len();
    ForwardOutput {
        logits: Tensor::zeros(&[4]),
        attended: embeddings.map(|v| -v),
        token_embeddings: embeddings,
        attention: Tensor::full(&[1, t, t], 1.0 / t as f64),
        token_scores: Tensor::vector(scores),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(&[rows, cols], (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn confusion_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth: Vec<usize> = (0..500).map(|_| rng.random_range(0..7)).collect();
    let predicted: Vec<usize> = (0..500).map(|_| rng.random_range(0..7)).collect();
    let mut cm = ConfusionMatrix::new(7);
    for (&t, &p) in truth.iter().zip(&predicted) {
        cm.record(t, p);
    }
    assert_eq!(cm.total(), 500);
    let correct = truth.iter().zip(&predicted).filter(|(t, p)| t == p).count();
    assert_eq!(cm.trace(), correct as u64);
    assert_eq!(cm.accuracy(), correct as f64 / 500.0);
    for g in 0..7 {
        assert_eq!(cm.row_sums()[g], truth.iter().filter(|&&t| t == g).count() as u64);
    }
    let column_total: u64 = (0..7).map(|t| cm.get(t, 3)).sum();
    assert_eq!(column_total, predicted.iter().filter(|&&p| p == 3).count() as u64);

    let mut constant = ConfusionMatrix::new(7);
    for &t in &truth {
        constant.record(t, 2);
    }
    let share = truth.iter().filter(|&&t| t == 2).count() as f64 / 500.0;
    assert_eq!(constant.accuracy(), share);
    assert!(ConfusionMatrix::from_counts(3, vec![1; 8]).is_err());
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        token_count: 3,
        token_bins: 8,
        token_frames: 8,
        conv_channels: vec![2],
        embed_dim: 4,
        heads: 2,
        class_count: 2,
        score_temperature: 10.0,
    }
}

/// Class 0 lights the top half of every token, class 1 the bottom half.
fn separable_source(per_class: usize, seed: u64) -> InMemorySource {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = TokenLayout { bins: 8, count: 3, width_frames: 8, stride_frames: 8 };
    let samples = (0..2 * per_class)
        .map(|i| {
            let label = i % 2;
            let tokens = (0..3)
                .map(|_| {
                    let data = (0..64)
                        .map(|j| {
                            let lit = (j / 8 < 4) == (label == 0);
                            (if lit { 0.8 } else { 0.1 }) + rng.random_range(0.0..0.1)
                        })
                        .collect();
                    Tensor::new(&[8, 8], data).unwrap()
                })
                .collect();
            let seq = TokenSequence { tokens, layout, start_times: vec![0.0, 1.0, 2.0], frame_duration: 0.125 };
            (format!("track{i:03}"), label, seq)
        })
        .collect();
    InMemorySource { samples }
}

#[test]
fn cross_validation_learns_a_separable_task() {
    let source = separable_source(12, 2);
    let labels: Vec<usize> = source.samples.iter().map(|s| s.1).collect();
    let plan = stratified_kfold(&labels, 2, 3, 7).unwrap();
    let cfg = TrainConfig { epochs: 40, batch_size: 4, learning_rate: 1e-2, seed: 3, patience: 40 };
    let mut epochs_seen = 0;
    let cv = cross_validate(&source, &plan, &tiny_config(), &cfg, |_| epochs_seen += 1).unwrap();
    assert_eq!(cv.confusion.total(), 24, "every track is held out exactly once");
    assert_eq!(epochs_seen, cv.log.len());
    assert!(cv.accuracy() >= 0.9, "accuracy {}", cv.accuracy());
    let first = cv.log.first().unwrap().train_loss;
    let last = cv.log.iter().filter(|l| l.fold == 0).last().unwrap().train_loss;
    assert!(last < first);

    let again = cross_validate(&source, &plan, &tiny_config(), &cfg, |_| {}).unwrap();
    assert_eq!(again.fold_params, cv.fold_params, "training is deterministic");
    let eval = evaluate(&cv.fold_params[0], &source, plan.validation(0)).unwrap();
    assert_eq!(eval.confusion, {
        let mut cm = ConfusionMatrix::new(2);
        for &i in plan.validation(0) {
            let tokens = &source.samples[i].2;
            cm.record(source.samples[i].1, cv.fold_params[0].forward(tokens).unwrap().predicted());
        }
        cm
    });
}

#[test]
fn early_stopping_respects_patience() {
    let source = separable_source(6, 4);
    let labels: Vec<usize> = source.samples.iter().map(|s| s.1).collect();
    let plan = stratified_kfold(&labels, 2, 2, 1).unwrap();
    let cfg = TrainConfig { epochs: 50, batch_size: 2, learning_rate: 5e-2, seed: 9, patience: 2 };
    let cv = cross_validate(&source, &plan, &tiny_config(), &cfg, |_| {}).unwrap();
    for fold in 0..2 {
        let runs = cv.log.iter().filter(|l| l.fold == fold).count();
        assert!(runs <= cv.best_epochs[fold] + 2, "fold {fold} ran {runs} epochs past best {}", cv.best_epochs[fold]);
        let best = cv.log.iter().filter(|l| l.fold == fold).map(|l| l.val_loss).fold(f64::INFINITY, f64::min);
        let at_best = cv.log.iter().find(|l| l.fold == fold && l.epoch == cv.best_epochs[fold]).unwrap();
        assert_eq!(at_best.val_loss, best);
    }
}

#[test]
fn invalid_training_settings_fail() {
    let source = separable_source(4, 0);
    let labels: Vec<usize> = source.samples.iter().map(|s| s.1).collect();
    let plan = stratified_kfold(&labels, 2, 2, 0).unwrap();
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    assert!(cross_validate(&source, &plan, &tiny_config(), &cfg, |_| {}).is_err());
    assert!(stratified_kfold(&labels, 2, 1, 0).is_err());
    assert!(stratified_kfold(&[0, 3], 2, 2, 0).is_err());
}

#[test]
fn signature_weights_follow_scores() {
    let w = token_weights(&[0.1, 0.3, 0.2, 0.4], 10.0);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(w[3] > w[1] && w[1] > w[2] && w[2] > w[0]);
    let e = |x: f64| (10.0 * x).exp();
    assert!((w[3] - e(0.4) / (e(0.1) + e(0.3) + e(0.2) + e(0.4))).abs() < 1e-15);
    let uniform = token_weights(&[0.25; 4], 10.0);
    assert!(uniform.iter().all(|&x| (x - 0.25).abs() < 1e-15));
}

#[test]
fn ranked_tokens_sort_by_weight_then_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let out = output(vec![0.2, 0.4, 0.2, 0.2], random_matrix(&mut rng, 4, 3));
    let intervals = [(0.0, 4.0), (3.0, 7.0), (6.0, 10.0), (9.0, 13.0)];
    let ranked = rank_tokens(&out, &intervals, 10.0);
    assert_eq!(ranked.iter().map(|r| r.token).collect::<Vec<_>>(), vec![1, 0, 2, 3]);
    assert_eq!((ranked[0].start, ranked[0].end), (3.0, 7.0));
}

#[test]
fn encodings_are_loop_means_and_order_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut sigs: Vec<TrackSignature> = (0..40)
        .map(|i| TrackSignature {
            track_id: format!("t{i}"),
            label: i % 4,
            vector: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
            weights: vec![],
            intervals: vec![],
        })
        .collect();
    let before = genre_encodings(&sigs, 4).unwrap();
    for g in 0..4 {
        let mut oracle = [0.0; 5];
        let mut n = 0;
        for s in sigs.iter().filter(|s| s.label == g) {
            for (o, v) in oracle.iter_mut().zip(&s.vector) {
                *o += v;
            }
            n += 1;
        }
        assert_eq!(before[g].members, n);
        for (a, o) in before[g].vector.iter().zip(&oracle) {
            assert!((a - o / n as f64).abs() < 1e-12);
        }
    }
    sigs.shuffle(&mut rng);
    let after = genre_encodings(&sigs, 4).unwrap();
    for (a, b) in before.iter().zip(&after) {
        for (x, y) in a.vector.iter().zip(&b.vector) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    assert!(genre_encoding(&sigs, 4).is_err(), "empty genre");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition_and_balance(
        counts in prop::collection::vec(6usize..30, 2..8),
        k in 2usize..7,
        seed in any::<u64>(),
    ) {
        let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(g, &n)| vec![g; n]).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let classes = counts.len();
        let plan = stratified_kfold(&labels, classes, k, seed).unwrap();
        prop_assert_eq!(plan.k(), k);
        let mut all: Vec<usize> = plan.folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for g in 0..classes {
            let per: Vec<usize> = plan.folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == g).count()).collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        for f in 0..k {
            let train = plan.training(f);
            prop_assert!(train.iter().all(|i| !plan.validation(f).contains(i)));
            prop_assert_eq!(train.len() + plan.validation(f).len(), labels.len());
        }
        prop_assert_eq!(plan, stratified_kfold(&labels, classes, k, seed).unwrap());
    }

    #[test]
    fn signature_lies_in_convex_hull_of_tokens(seed in any::<u64>(), t in 2usize..12, temp in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..1.0)).collect();
        let out = output(scores.clone(), random_matrix(&mut rng, t, 6));
        for source in [SignatureSource::TokenEmbeddings, SignatureSource::Attended] {
            let rows = if source == SignatureSource::Attended { &out.attended } else { &out.token_embeddings };
            let (v, w) = signature_vector(&out, temp, source);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..6 {
                let column: Vec<f64> = (0..t).map(|i| rows.row(i)[j]).collect();
                let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v[j] >= lo - 1e-12 && v[j] <= hi + 1e-12);
            }
        }
        // weights are monotone in scores
        let w = token_weights(&scores, temp);
        for a in 0..t {
            for b in 0..t {
                if scores[a] > scores[b] {
                    prop_assert!(w[a] >= w[b]);
                }
            }
        }
    }
}
