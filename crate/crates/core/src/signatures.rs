//! Attention-weighted track signatures, per-genre encodings and attention
//! reports.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ForwardOutput, ModelParams};
use crate::tensor::softmax_slice;
use crate::training::SampleSource;
use crate::{Error, Result};

/// Which per-token vectors a signature averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SignatureSource {
    /// CNN token embeddings before attention.
    #[default]
    TokenEmbeddings,
    /// Rows of the attention layer output.
    Attended,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSignature {
    pub track_id: String,
    pub label: usize,
    pub vector: Vec<f64>,
    pub weights: Vec<f64>,
    /// `(start, end)` seconds of each token.
    pub intervals: Vec<(f64, f64)>,
}

/// `softmax(temperature · scores)`.
pub fn token_weights(scores: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = scores.iter().map(|s| s * temperature).collect();
    let mut w = alloc::vec![0.0; scaled.len()];
    softmax_slice(&scaled, &mut w);
    w
}

/// Weights the token vectors of one forward pass by
/// `softmax(temperature · token_scores)` and sums them.
pub fn signature_vector(out: &ForwardOutput, temperature: f64, source: SignatureSource) -> (Vec<f64>, Vec<f64>) {
    let weights = token_weights(out.token_scores.data(), temperature);
    let rows = match source {
        SignatureSource::TokenEmbeddings => &out.token_embeddings,
        SignatureSource::Attended => &out.attended,
    };
    let d = rows.shape()[1];
    let mut vector = alloc::vec![0.0; d];
    for (i, &w) in weights.iter().enumerate() {
        for (v, r) in vector.iter_mut().zip(rows.row(i)) {
            *v += w * r;
        }
    }
    (vector, weights)
}

pub fn track_signature(
    track_id: impl Into<String>,
    label: usize,
    out: &ForwardOutput,
    intervals: Vec<(f64, f64)>,
    temperature: f64,
    source: SignatureSource,
) -> TrackSignature {
    let (vector, weights) = signature_vector(out, temperature, source);
    TrackSignature { track_id: track_id.into(), label, vector, weights, intervals }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenreEncoding {
    pub genre: usize,
    pub vector: Vec<f64>,
    pub members: usize,
}

/// Unweighted mean of the signatures labelled `genre`.
pub fn genre_encoding(signatures: &[TrackSignature], genre: usize) -> Result<GenreEncoding> {
    let mut members = signatures.iter().filter(|s| s.label == genre).peekable();
    let d = members.peek().ok_or(Error::EmptyGenre(genre))?.vector.len();
    let mut vector = alloc::vec![0.0; d];
    let mut count = 0;
    for s in members {
        for (v, x) in vector.iter_mut().zip(&s.vector) {
            *v += x;
        }
        count += 1;
    }
    for v in &mut vector {
        *v /= count as f64;
    }
    Ok(GenreEncoding { genre, vector, members: count })
}

/// Encodings for genres `0..genre_count`, in label order.
pub fn genre_encodings(signatures: &[TrackSignature], genre_count: usize) -> Result<Vec<GenreEncoding>> {
    (0..genre_count).map(|g| genre_encoding(signatures, g)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedToken {
    pub token: usize,
    pub start: f64,
    pub end: f64,
    pub score: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackAttention {
    pub track_id: String,
    pub genre: usize,
    pub predicted: usize,
    /// Tokens by descending weight, ties by token index.
    pub tokens: Vec<RankedToken>,
}

pub type AttentionReport = Vec<TrackAttention>;

pub fn rank_tokens(out: &ForwardOutput, intervals: &[(f64, f64)], temperature: f64) -> Vec<RankedToken> {
    let scores = out.token_scores.data();
    let weights = token_weights(scores, temperature);
    let mut ranked: Vec<RankedToken> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| RankedToken {
            token: i,
            start: intervals[i].0,
            end: intervals[i].1,
            score: scores[i],
            weight: w,
        })
        .collect();
    ranked.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.token.cmp(&b.token)));
    ranked
}

/// Samples `per_genre` tracks of each genre with a seeded generator and
/// ranks their tokens by signature weight. `model_for` picks the model
/// that scores a given entry.
pub fn attention_report<'m, S, F>(
    source: &S,
    genre_count: usize,
    model_for: F,
    per_genre: usize,
    temperature: f64,
    seed: u64,
) -> Result<AttentionReport>
where
    S: SampleSource,
    F: Fn(usize) -> &'m ModelParams,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Vec::with_capacity(genre_count * per_genre);
    for genre in 0..genre_count {
        let mut members: Vec<usize> = (0..source.len()).filter(|&i| source.label(i) == genre).collect();
        if members.len() < per_genre {
            return Err(Error::GenreTooSmall { genre, count: members.len(), required: per_genre });
        }
        members.shuffle(&mut rng);
        let mut chosen = members[..per_genre].to_vec();
        chosen.sort_unstable();
        for i in chosen {
            let tokens = source.tokens(i)?;
            let out = model_for(i).forward(&tokens)?;
            report.push(TrackAttention {
                track_id: source.track_id(i),
                genre,
                predicted: out.predicted(),
                tokens: rank_tokens(&out, &tokens.intervals(), temperature),
            });
        }
    }
    Ok(report)
}
