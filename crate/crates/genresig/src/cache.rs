//! Per-track spectrogram cache files and the cache manifest.
//!
//! A cache file is `"SPEC"`, a u32 version, u32 bins, u32 frames, then
//! `bins·frames` f32 values stored column-major by frame (all bins of frame
//! 0, then frame 1, …). Integers and floats are little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use genresig_core::spectral::{SpectrogramConfig, SpectrogramImage};
use genresig_core::training::DatasetIndex;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, json_err, Error, Result};

pub const SPEC_MAGIC: &[u8; 4] = b"SPEC";
pub const SPEC_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "index.json";
const HEADER_LEN: usize = 16;

pub fn encode_spectrogram(image: &SpectrogramImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * image.values.len());
    out.extend_from_slice(SPEC_MAGIC);
    out.extend_from_slice(&SPEC_VERSION.to_le_bytes());
    out.extend_from_slice(&(image.bins as u32).to_le_bytes());
    out.extend_from_slice(&(image.frames as u32).to_le_bytes());
    for f in 0..image.frames {
        for b in 0..image.bins {
            out.extend_from_slice(&(image.get(b, f) as f32).to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode_spectrogram`]. The frame duration is not stored and
/// comes from the spectrogram settings the cache was built with.
pub fn decode_spectrogram(bytes: &[u8], frame_duration: f64) -> Result<SpectrogramImage> {
    if bytes.len() < 4 || &bytes[..4] != SPEC_MAGIC {
        return Err(Error::BadMagic { expected: "SPEC" });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile("spectrogram header".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != SPEC_VERSION {
        return Err(Error::UnsupportedVersion { found: version, supported: SPEC_VERSION });
    }
    let (bins, frames) = (word(8) as usize, word(12) as usize);
    let body = &bytes[HEADER_LEN..];
    if body.len() < 4 * bins * frames {
        return Err(Error::TruncatedFile(format!("spectrogram body for {bins}x{frames}")));
    }
    let mut values = vec![0.0; bins * frames];
    for (i, chunk) in body.chunks_exact(4).take(bins * frames).enumerate() {
        let (f, b) = (i / bins, i % bins);
        values[b * frames + f] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    Ok(SpectrogramImage::new(bins, frames, values, frame_duration)?)
}

pub fn write_spectrogram(path: &Path, image: &SpectrogramImage) -> Result<()> {
    fs::write(path, encode_spectrogram(image)).map_err(io_err(path))
}

pub fn read_spectrogram(path: &Path, frame_duration: f64) -> Result<SpectrogramImage> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Core(genresig_core::Error::MissingCache(path.display().to_string()))
        } else {
            Error::Io { path: path.to_path_buf(), source: e }
        }
    })?;
    decode_spectrogram(&bytes, frame_duration)
}

/// `index.json` at the cache root. Entry cache paths are relative to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub spectrogram: SpectrogramConfig,
    pub index: DatasetIndex,
}

impl CacheManifest {
    pub fn load(cache_dir: &Path) -> Result<Self> {
        let path = cache_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::Core(genresig_core::Error::MissingCache(format!("{} (run `prepare` first)", path.display())))
            } else {
                Error::Io { path: path.clone(), source: e }
            }
        })?;
        let manifest: CacheManifest = serde_json::from_str(&text).map_err(json_err(&path))?;
        manifest.index.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, cache_dir: &Path) -> Result<()> {
        let path = cache_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(json_err(&path))?;
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn entry_path(&self, cache_dir: &Path, entry: usize) -> PathBuf {
        cache_dir.join(&self.index.entries[entry].cache_path)
    }
}
