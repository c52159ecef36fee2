//! GTZAN-layout discovery, spectrogram cache preparation and a cache-backed
//! sample source for training.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use genresig_core::audio::resample;
use genresig_core::spectral::{compute_spectrogram, SpectrogramConfig, SpectrogramImage};
use genresig_core::tokens::{tokenize, TokenSequence};
use genresig_core::training::{DatasetEntry, DatasetIndex, SampleSource};
use rayon::prelude::*;

use crate::cache::{read_spectrogram, write_spectrogram, CacheManifest};
use crate::error::{io_err, Error, Result};
use crate::wav::load_wav;

/// One audio file found under a dataset root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioTrack {
    pub track_id: String,
    pub label: usize,
    pub path: PathBuf,
}

fn sorted_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(path).map_err(io_err(path))? {
        out.push(entry.map_err(io_err(path))?.path());
    }
    out.sort();
    Ok(out)
}

/// Lists `<root>/<genre>/<track>.wav`. Genres are the subdirectory names in
/// lexicographic order and labels index into them; track ids are file stems.
pub fn discover(root: &Path) -> Result<(Vec<String>, Vec<AudioTrack>)> {
    let genre_dirs: Vec<PathBuf> = sorted_dir(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if genre_dirs.is_empty() {
        return Err(Error::Invalid(format!("{}: no genre directories", root.display())));
    }
    let mut genres = Vec::with_capacity(genre_dirs.len());
    let mut tracks = Vec::new();
    for (label, dir) in genre_dirs.iter().enumerate() {
        genres.push(dir.file_name().unwrap().to_string_lossy().into_owned());
        for file in sorted_dir(dir)? {
            let is_wav = file.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if is_wav && file.is_file() {
                let track_id = file.file_stem().unwrap().to_string_lossy().into_owned();
                tracks.push(AudioTrack { track_id, label, path: file });
            }
        }
    }
    Ok((genres, tracks))
}

/// Decodes, resamples and transforms one file.
pub fn spectrogram_of(path: &Path, cfg: &SpectrogramConfig) -> Result<SpectrogramImage> {
    let clip = load_wav(path)?;
    let clip = resample(&clip, cfg.target_rate)?;
    Ok(compute_spectrogram(&clip, cfg)?)
}

/// Builds the spectrogram cache for every track under `data_root`, in
/// parallel over tracks, and writes the manifest.
pub fn prepare(data_root: &Path, cache_dir: &Path, cfg: &SpectrogramConfig) -> Result<CacheManifest> {
    cfg.validate()?;
    let (genres, tracks) = discover(data_root)?;
    for g in &genres {
        let dir = cache_dir.join(g);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let entries = tracks
        .par_iter()
        .map(|t| -> Result<DatasetEntry> {
            let image = spectrogram_of(&t.path, cfg)?;
            let rel = format!("{}/{}.spec", genres[t.label], t.track_id);
            write_spectrogram(&cache_dir.join(&rel), &image)?;
            log::debug!("cached {}", t.track_id);
            Ok(DatasetEntry { track_id: t.track_id.clone(), label: t.label, cache_path: rel })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = CacheManifest { spectrogram: *cfg, index: DatasetIndex { entries, genre_names: genres } };
    manifest.index.validate()?;
    manifest.save(cache_dir)?;
    Ok(manifest)
}

/// Tracks read from a spectrogram cache. Images are loaded on first use and
/// kept in memory.
pub struct CachedSource {
    pub root: PathBuf,
    pub manifest: CacheManifest,
    images: Vec<OnceLock<SpectrogramImage>>,
}

impl CachedSource {
    pub fn open(cache_dir: &Path) -> Result<Self> {
        let manifest = CacheManifest::load(cache_dir)?;
        let images = (0..manifest.index.entries.len()).map(|_| OnceLock::new()).collect();
        Ok(CachedSource { root: cache_dir.to_path_buf(), manifest, images })
    }

    pub fn index(&self) -> &DatasetIndex {
        &self.manifest.index
    }

    pub fn genre_names(&self) -> &[String] {
        &self.manifest.index.genre_names
    }

    pub fn image(&self, i: usize) -> Result<&SpectrogramImage> {
        if let Some(img) = self.images[i].get() {
            return Ok(img);
        }
        let path = self.manifest.entry_path(&self.root, i);
        let img = read_spectrogram(&path, self.manifest.spectrogram.frame_duration())?;
        Ok(self.images[i].get_or_init(|| img))
    }
}

impl SampleSource for CachedSource {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn label(&self, index: usize) -> usize {
        self.manifest.index.entries[index].label
    }

    fn track_id(&self, index: usize) -> String {
        self.manifest.index.entries[index].track_id.clone()
    }

    fn tokens(&self, index: usize) -> genresig_core::Result<TokenSequence> {
        let img = self.image(index).map_err(|e| match e {
            Error::Core(core) => core,
            other => genresig_core::Error::MissingCache(other.to_string()),
        })?;
        tokenize(img)
    }
}
