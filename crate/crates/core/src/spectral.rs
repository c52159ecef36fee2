//! Short-time Fourier analysis and per-track grayscale spectrograms.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    /// `e^{iθ}`
    pub fn expi(theta: f64) -> Self {
        Complex { re: libm::cos(theta), im: libm::sin(theta) }
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.re, self.im)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

/// Mixed-radix decimation-in-time FFT for any length.
///
/// The length is split into prime factors; each stage runs a generic
/// radix-`p` butterfly, so lengths with large prime factors degrade toward
/// an `O(n·p)` DFT rather than failing.
#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    factors: Vec<usize>,
    twiddles: Vec<Complex>,
}

impl Fft {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let mut factors = Vec::new();
        let mut rest = len;
        let mut p = 2;
        while rest > 1 {
            while rest % p == 0 {
                factors.push(p);
                rest /= p;
            }
            p += if p == 2 { 1 } else { 2 };
            if p * p > rest && rest > 1 {
                factors.push(rest);
                break;
            }
        }
        let twiddles = (0..len).map(|k| Complex::expi(-2.0 * PI * k as f64 / len as f64)).collect();
        Fft { len, factors, twiddles }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Forward transform `X[k] = Σ x[n]·e^{−2πikn/N}`.
    pub fn forward(&self, input: &[Complex]) -> Vec<Complex> {
        assert_eq!(input.len(), self.len, "FFT input length");
        let mut out = vec![Complex::ZERO; self.len];
        self.stage(&mut out, input, 1, &self.factors, 1);
        out
    }

    fn stage(&self, out: &mut [Complex], input: &[Complex], stride: usize, factors: &[usize], tw_stride: usize) {
        let n = out.len();
        let Some((&p, rest)) = factors.split_first() else {
            out[0] = input[0];
            return;
        };
        let m = n / p;
        if m == 1 {
            for (j, o) in out.iter_mut().enumerate() {
                *o = input[j * stride];
            }
        } else {
            for j in 0..p {
                self.stage(&mut out[j * m..(j + 1) * m], &input[j * stride..], stride * p, rest, tw_stride * p);
            }
        }
        // X[k + q·m] = Σ_j W_N^{jk} · W_p^{jq} · Y_j[k]
        let mut scratch = vec![Complex::ZERO; p];
        for k in 0..m {
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = out[j * m + k] * self.twiddles[(j * k * tw_stride) % self.len];
            }
            for q in 0..p {
                let mut acc = Complex::ZERO;
                for (j, &s) in scratch.iter().enumerate() {
                    acc = acc + s * self.twiddles[(j * q * m * tw_stride) % self.len];
                }
                out[q * m + k] = acc;
            }
        }
    }
}

/// STFT settings. Defaults give 217 frequency bins and 45 frames per four
/// seconds of 22050 Hz audio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub target_rate: u32,
    pub db_floor: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        SpectrogramConfig { fft_size: 432, hop: 1994, target_rate: 22050, db_floor: -80.0 }
    }
}

impl SpectrogramConfig {
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frame_duration(&self) -> f64 {
        self.hop as f64 / self.target_rate as f64
    }

    /// `floor((len − fft_size) / hop) + 1`, or zero for clips shorter than a window.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return Err(Error::InvalidArgument("fft_size must be even and >= 2".into()));
        }
        if self.hop == 0 || self.target_rate == 0 {
            return Err(Error::InvalidArgument("hop and target_rate must be positive".into()));
        }
        if !(self.db_floor < 0.0) {
            return Err(Error::InvalidArgument("db_floor must be negative".into()));
        }
        Ok(())
    }
}

/// Grayscale time-frequency image, `bins × frames`, values in `[0, 1]`.
///
/// Stored row-major by frequency bin: `values[bin * frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramImage {
    pub bins: usize,
    pub frames: usize,
    pub values: Vec<f64>,
    pub frame_duration: f64,
}

impl SpectrogramImage {
    pub fn new(bins: usize, frames: usize, values: Vec<f64>, frame_duration: f64) -> Result<Self> {
        if values.len() != bins * frames {
            return Err(Error::shape(
                "spectrogram",
                alloc::format!("{bins}x{frames} image with {} values", values.len()),
            ));
        }
        Ok(SpectrogramImage { bins, frames, values, frame_duration })
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.frames + frame]
    }

    /// All bin values of one frame, lowest frequency first.
    pub fn column(&self, frame: usize) -> Vec<f64> {
        (0..self.bins).map(|b| self.get(b, frame)).collect()
    }
}

pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64)).collect()
}

/// Raw STFT magnitudes, `bins × frames`, row-major by bin.
pub fn stft_magnitudes(samples: &[f64], cfg: &SpectrogramConfig) -> Result<(usize, Vec<f64>)> {
    cfg.validate()?;
    if samples.len() < cfg.fft_size {
        return Err(Error::ClipTooShort { len: samples.len(), fft_size: cfg.fft_size });
    }
    let frames = cfg.frame_count(samples.len());
    let bins = cfg.bins();
    let window = hann(cfg.fft_size);
    let fft = Fft::new(cfg.fft_size);
    let mut mags = vec![0.0; bins * frames];
    let mut buf = vec![Complex::ZERO; cfg.fft_size];
    for f in 0..frames {
        let start = f * cfg.hop;
        for (b, (&s, &w)) in buf.iter_mut().zip(samples[start..start + cfg.fft_size].iter().zip(&window)) {
            *b = Complex::new(s * w, 0.0);
        }
        let spectrum = fft.forward(&buf);
        for (k, c) in spectrum.iter().take(bins).enumerate() {
            mags[k * frames + f] = c.norm();
        }
    }
    Ok((frames, mags))
}

/// Hann-windowed log-magnitude spectrogram, clamped to `db_floor` below the
/// track maximum and min-max normalized over the whole track.
///
/// The clip must already be at `cfg.target_rate`. A constant image (for
/// example digital silence) normalizes to all zeros.
pub fn compute_spectrogram(clip: &AudioClip, cfg: &SpectrogramConfig) -> Result<SpectrogramImage> {
    if clip.sample_rate != cfg.target_rate {
        return Err(Error::InvalidArgument(alloc::format!(
            "clip at {} Hz, spectrogram expects {} Hz",
            clip.sample_rate,
            cfg.target_rate
        )));
    }
    let (frames, mags) = stft_magnitudes(&clip.samples, cfg)?;
    let mut db: Vec<f64> = mags.iter().map(|m| 20.0 * libm::log10(m + 1e-10)).collect();
    let top = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = top + cfg.db_floor;
    for v in &mut db {
        *v = v.clamp(floor, top);
    }
    let low = db.iter().copied().fold(f64::INFINITY, f64::min);
    let range = top - low;
    if range > 0.0 {
        for v in &mut db {
            *v = (*v - low) / range;
        }
    } else {
        db.fill(0.0);
    }
    SpectrogramImage::new(cfg.bins(), frames, db, cfg.frame_duration())
}
