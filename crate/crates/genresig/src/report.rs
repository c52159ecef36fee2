//! CSV and JSON artifacts written by the commands, and readers for the ones
//! later commands consume.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use genresig_core::analysis::{GenreEquation, NeighborList, Recommendation};
use genresig_core::signatures::{AttentionReport, GenreEncoding, TrackSignature};
use genresig_core::training::ConfusionMatrix;
use serde::Serialize;

use crate::error::{csv_err, io_err, json_err, Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(csv_err(path))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(io_err(path))
}

fn name(genres: &[String], label: usize) -> &str {
    genres.get(label).map_or("?", String::as_str)
}

/// Header `true_genre,<genre>…`, then one row of counts per true genre.
pub fn write_confusion(path: &Path, cm: &ConfusionMatrix, genres: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["true_genre".to_string()];
    header.extend(genres.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for t in 0..cm.classes() {
        let mut row = vec![name(genres, t).to_string()];
        row.extend(cm.row(t).iter().map(u64::to_string));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    finish(w, path)
}

pub fn read_confusion(path: &Path) -> Result<(Vec<String>, ConfusionMatrix)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let genres: Vec<String> = r.headers().map_err(csv_err(path))?.iter().skip(1).map(String::from).collect();
    let mut counts = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        for cell in rec.iter().skip(1) {
            counts.push(cell.parse::<u64>().map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?);
        }
    }
    Ok((genres.clone(), ConfusionMatrix::from_counts(genres.len(), counts)?))
}

/// Appends JSON values one per line.
pub struct JsonLines {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(JsonLines { out: BufWriter::new(file), path: path.to_path_buf() })
    }

    pub fn push<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value).map_err(json_err(&self.path))?;
        self.out.write_all(b"\n").map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// `track_id,genre,w_0..w_{T-1},v_0..v_{d-1}`.
pub fn write_signatures(path: &Path, signatures: &[TrackSignature], genres: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    let (t, d) = signatures.first().map_or((0, 0), |s| (s.weights.len(), s.vector.len()));
    let mut header = vec!["track_id".to_string(), "genre".to_string()];
    header.extend((0..t).map(|i| format!("w_{i}")));
    header.extend((0..d).map(|i| format!("v_{i}")));
    w.write_record(&header).map_err(csv_err(path))?;
    for s in signatures {
        let mut row = vec![s.track_id.clone(), name(genres, s.label).to_string()];
        row.extend(s.weights.iter().chain(&s.vector).map(f64::to_string));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    finish(w, path)
}

fn parse_floats<'r>(path: &Path, cells: impl Iterator<Item = &'r str>) -> Result<Vec<f64>> {
    cells.map(|c| c.parse::<f64>().map_err(|e| Error::Invalid(format!("{}: {e} in {c:?}", path.display())))).collect()
}

/// Reads a signatures file. Labels index the sorted set of genre names that
/// appear in it, which is returned alongside.
pub fn read_signatures(path: &Path) -> Result<(Vec<String>, Vec<TrackSignature>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let t = r.headers().map_err(csv_err(path))?.iter().filter(|h| h.starts_with("w_")).count();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let values = parse_floats(path, rec.iter().skip(2))?;
        if values.len() < t {
            return Err(Error::Invalid(format!("{}: short row", path.display())));
        }
        rows.push((rec[0].to_string(), rec[1].to_string(), values));
    }
    let mut genres: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
    genres.sort();
    genres.dedup();
    let signatures = rows
        .into_iter()
        .map(|(track_id, genre, mut values)| {
            let vector = values.split_off(t);
            TrackSignature {
                track_id,
                label: genres.binary_search(&genre).unwrap(),
                vector,
                weights: values,
                intervals: Vec::new(),
            }
        })
        .collect();
    Ok((genres, signatures))
}

/// `genre,members,v_0..v_{d-1}`.
pub fn write_encodings(path: &Path, encodings: &[GenreEncoding], genres: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    let d = encodings.first().map_or(0, |e| e.vector.len());
    let mut header = vec!["genre".to_string(), "members".to_string()];
    header.extend((0..d).map(|i| format!("v_{i}")));
    w.write_record(&header).map_err(csv_err(path))?;
    for e in encodings {
        let mut row = vec![name(genres, e.genre).to_string(), e.members.to_string()];
        row.extend(e.vector.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    finish(w, path)
}

pub fn read_encodings(path: &Path) -> Result<(Vec<String>, Vec<GenreEncoding>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut genres = Vec::new();
    let mut encodings = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let members = rec[1].parse().map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        encodings.push(GenreEncoding { genre: genres.len(), vector: parse_floats(path, rec.iter().skip(2))?, members });
        genres.push(rec[0].to_string());
    }
    Ok((genres, encodings))
}

/// `# explained_variance_ratio: …` comment, then `label,pc1,pc2[,…]`.
pub fn write_pca(path: &Path, ratios: &[f64], rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let joined: Vec<String> = ratios.iter().map(f64::to_string).collect();
    writeln!(file, "# explained_variance_ratio: {}", joined.join(",")).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["label".to_string()];
    header.extend((1..=ratios.len()).map(|i| format!("pc{i}")));
    w.write_record(&header).map_err(csv_err(path))?;
    for (label, coords) in rows {
        let mut row = vec![label.clone()];
        row.extend(coords.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_equations(path: &Path, equations: &[GenreEquation], genres: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["a", "b", "c", "d", "residual"]).map_err(csv_err(path))?;
    for e in equations {
        w.write_record([
            name(genres, e.a),
            name(genres, e.b),
            name(genres, e.c),
            name(genres, e.d),
            &e.residual.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    finish(w, path)
}

/// `genre,neighbor1,dist1,…,neighbork,distk`.
pub fn write_neighbors(path: &Path, neighbors: &NeighborList, genres: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    let k = neighbors.first().map_or(0, Vec::len);
    let mut header = vec!["genre".to_string()];
    for i in 1..=k {
        header.push(format!("neighbor{i}"));
        header.push(format!("dist{i}"));
    }
    w.write_record(&header).map_err(csv_err(path))?;
    for (g, list) in neighbors.iter().enumerate() {
        let mut row = vec![name(genres, g).to_string()];
        for (n, dist) in list {
            row.push(name(genres, *n).to_string());
            row.push(dist.to_string());
        }
        w.write_record(&row).map_err(csv_err(path))?;
    }
    finish(w, path)
}

pub fn recommendations_csv(query: &str, recs: &[Recommendation], genres: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["query_id", "rank", "track_id", "genre", "distance"]);
    for (i, r) in recs.iter().enumerate() {
        let _ =
            w.write_record([query, &(i + 1).to_string(), &r.track_id, name(genres, r.label), &r.distance.to_string()]);
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is UTF-8")
}

#[derive(Serialize)]
struct TokenJson {
    token: usize,
    start: f64,
    end: f64,
    score: f64,
    weight: f64,
}

#[derive(Serialize)]
struct TrackJson<'a> {
    track_id: &'a str,
    genre: &'a str,
    predicted: &'a str,
    tokens: Vec<TokenJson>,
}

fn millis(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// JSON array of tracks with their ranked tokens; times to 3 decimals.
pub fn write_attention(path: &Path, report: &AttentionReport, genres: &[String]) -> Result<()> {
    let tracks: Vec<TrackJson> = report
        .iter()
        .map(|t| TrackJson {
            track_id: &t.track_id,
            genre: name(genres, t.genre),
            predicted: name(genres, t.predicted),
            tokens: t
                .tokens
                .iter()
                .map(|r| TokenJson {
                    token: r.token,
                    start: millis(r.start),
                    end: millis(r.end),
                    score: r.score,
                    weight: r.weight,
                })
                .collect(),
        })
        .collect();
    write_json(path, &tracks)
}
