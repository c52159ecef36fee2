use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::signatures::TrackSignature;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => euclidean_distance(a, b),
            Metric::Cosine => cosine_distance(a, b),
        }
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `1 − a·b / (‖a‖‖b‖)`; a zero vector is at distance 1 from everything.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (libm::sqrt(na) * libm::sqrt(nb))
}

/// For each genre, its `k` nearest other genres as `(genre, distance)`,
/// nearest first; equal distances keep genre order.
pub type NeighborList = Vec<Vec<(usize, f64)>>;

pub fn genre_neighbors(encodings: &[Vec<f64>], k: usize, metric: Metric) -> Result<NeighborList> {
    if encodings.len() < k + 1 {
        return Err(Error::TooFewGenres { found: encodings.len(), required: k + 1 });
    }
    Ok((0..encodings.len())
        .map(|g| {
            let mut others: Vec<(usize, f64)> = (0..encodings.len())
                .filter(|&o| o != g)
                .map(|o| (o, metric.distance(&encodings[g], &encodings[o])))
                .collect();
            others.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
            others.truncate(k);
            others
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub track_id: String,
    pub label: usize,
    pub distance: f64,
}

/// The `k` corpus tracks closest to `query`, excluding the query's own id.
/// Ties resolve by track id.
pub fn recommend_tracks(
    query: &TrackSignature,
    corpus: &[TrackSignature],
    k: usize,
    metric: Metric,
) -> Result<Vec<Recommendation>> {
    let candidates: Vec<&TrackSignature> = corpus.iter().filter(|s| s.track_id != query.track_id).collect();
    if candidates.len() < k {
        return Err(Error::CorpusTooSmall { found: corpus.len(), k });
    }
    let mut scored: Vec<Recommendation> = candidates
        .into_iter()
        .map(|s| Recommendation {
            track_id: s.track_id.clone(),
            label: s.label,
            distance: metric.distance(&query.vector, &s.vector),
        })
        .collect();
    scored.sort_by(|x, y| x.distance.total_cmp(&y.distance).then_with(|| x.track_id.cmp(&y.track_id)));
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sig(id: &str, v: Vec<f64>) -> TrackSignature {
        TrackSignature { track_id: id.into(), label: 0, vector: v, weights: vec![], intervals: vec![] }
    }

    #[test]
    fn orthogonal_and_zero_vectors() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[0.0, 1.0]), 1.0);
        assert!(cosine_distance(&[2.0, 1.0], &[4.0, 2.0]).abs() < 1e-15);
    }

    #[test]
    fn duplicate_ranks_first() {
        let q = sig("q", vec![0.3, 0.7]);
        let corpus = vec![q.clone(), sig("b", vec![1.0, 0.0]), sig("a", vec![0.3, 0.7]), sig("c", vec![0.0, 1.0])];
        let recs = recommend_tracks(&q, &corpus, 2, Metric::Cosine).unwrap();
        assert_eq!(recs[0].track_id, "a");
        assert_eq!(recs[0].distance, 0.0);
        assert!(recommend_tracks(&q, &corpus, 4, Metric::Cosine).is_err());
    }

    #[test]
    fn line_neighbors() {
        // blues, classical, country, disco, ..., reggae at index 8
        let mut enc: Vec<Vec<f64>> = (0..10).map(|i| vec![10.0 + 5.0 * i as f64]).collect();
        enc[0] = vec![0.0];
        enc[2] = vec![1.0];
        enc[8] = vec![2.0];
        let nb = genre_neighbors(&enc, 2, Metric::Euclidean).unwrap();
        assert_eq!(nb[0], vec![(2, 1.0), (8, 2.0)]);
        assert!(genre_neighbors(&enc[..2], 2, Metric::Euclidean).is_err());
    }
}
