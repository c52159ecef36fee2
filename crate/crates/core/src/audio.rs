//! In-memory audio clips and rate conversion.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_path: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_path: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("clip has no samples".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || libm::fabs(**s) > 1.0) {
            return Err(Error::InvalidArgument(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(AudioClip { samples, sample_rate, source_path: source_path.into() })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Linear-interpolation resampling to `target_rate`.
///
/// The output holds `round(len · target / source)` samples; output sample
/// `j` reads the input at position `j · source / target`, clamped to the
/// last input sample. No anti-alias filter is applied.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = &clip.samples;
    let ratio = clip.sample_rate as f64 / target_rate as f64;
    let out_len = libm::round(src.len() as f64 * target_rate as f64 / clip.sample_rate as f64) as usize;
    let last = src.len() - 1;
    let samples = (0..out_len.max(1))
        .map(|j| {
            let pos = j as f64 * ratio;
            let i = libm::floor(pos) as usize;
            if i >= last {
                return src[last];
            }
            let frac = pos - i as f64;
            src[i] + (src[i + 1] - src[i]) * frac
        })
        .collect();
    Ok(AudioClip { samples, sample_rate: target_rate, source_path: clip.source_path.clone() })
}
