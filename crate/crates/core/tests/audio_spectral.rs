use std::f64::consts::PI;

use genresig_core::audio::{resample, AudioClip};
use genresig_core::spectral::{compute_spectrogram, stft_magnitudes, Complex, Fft, SpectrogramConfig};
use genresig_core::tokens::{tokenize, TokenLayout};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sine(freq: f64, rate: u32, secs: f64, amp: f64) -> Vec<f64> {
    let n = (secs * rate as f64) as usize;
    (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn naive_dft(x: &[Complex]) -> Vec<Complex> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold(Complex::ZERO, |acc, (t, v)| {
                let w = Complex::expi(-2.0 * PI * (k * t % n) as f64 / n as f64);
                Complex::new(acc.re + v.re * w.re - v.im * w.im, acc.im + v.re * w.im + v.im * w.re)
            })
        })
        .collect()
}

#[test]
fn resampled_tone_keeps_its_pitch() {
    let clip = AudioClip::new(sine(440.0, 44100, 2.0, 0.8), 44100, "a440").unwrap();
    let down = resample(&clip, 22050).unwrap();
    assert_eq!(down.sample_rate, 22050);
    assert_eq!(down.samples.len(), 44100);
    // one-second window at 22050 Hz puts bins 1 Hz apart
    let window: Vec<Complex> = down.samples[..22050].iter().map(|&s| Complex::new(s, 0.0)).collect();
    let spectrum = Fft::new(22050).forward(&window);
    let mags: Vec<f64> = spectrum[..11026].iter().map(|c| c.norm()).collect();
    assert_eq!(argmax(&mags), 440);
}

#[test]
fn resample_identity_and_rejections() {
    let clip = AudioClip::new(vec![0.1, -0.2, 0.3], 22050, "x").unwrap();
    assert_eq!(resample(&clip, 22050).unwrap(), clip);
    assert!(resample(&clip, 0).is_err());
    assert!(AudioClip::new(vec![], 22050, "empty").is_err());
    assert!(AudioClip::new(vec![1.5], 22050, "loud").is_err());
    assert!(AudioClip::new(vec![0.0], 0, "rate").is_err());
}

#[test]
fn tone_at_bin_center_peaks_at_that_bin() {
    let cfg = SpectrogramConfig::default();
    for k in [5, 40, 100, 200] {
        let freq = k as f64 * cfg.target_rate as f64 / cfg.fft_size as f64;
        let samples = sine(freq, cfg.target_rate, 2.0, 0.5);
        let (frames, mags) = stft_magnitudes(&samples, &cfg).unwrap();
        for f in 0..frames {
            let column: Vec<f64> = (0..cfg.bins()).map(|b| mags[b * frames + f]).collect();
            assert_eq!(argmax(&column), k, "frame {f}");
        }
    }
}

#[test]
fn thirty_seconds_gives_332_frames() {
    let cfg = SpectrogramConfig::default();
    assert_eq!(cfg.bins(), 217);
    assert_eq!(cfg.frame_count(30 * 22050), 332);
    let clip = AudioClip::new(sine(1000.0, 22050, 30.0, 0.5), 22050, "t").unwrap();
    let image = compute_spectrogram(&clip, &cfg).unwrap();
    assert_eq!((image.bins, image.frames), (217, 332));
    assert!(image.values.iter().all(|v| (0.0..=1.0).contains(v)));
    let tokens = tokenize(&image).unwrap();
    assert_eq!(tokens.len(), 10);
    assert_eq!(tokens.tokens[9].shape(), &[217, 45]);
    // the last token runs from frame 297 to 342, so its final 10 columns are padding
    for b in 0..217 {
        assert!(tokens.tokens[9].row(b)[35..].iter().all(|&v| v == 0.0));
    }
    assert!((tokens.start_times[1] - 33.0 * 1994.0 / 22050.0).abs() < 1e-12);
}

#[test]
fn silence_normalizes_to_zero() {
    let cfg = SpectrogramConfig::default();
    let clip = AudioClip::new(vec![0.0; 22050], 22050, "silence").unwrap();
    let image = compute_spectrogram(&clip, &cfg).unwrap();
    assert!(image.values.iter().all(|&v| v == 0.0));
}

#[test]
fn rate_mismatch_and_short_clips_fail() {
    let cfg = SpectrogramConfig::default();
    let clip = AudioClip::new(vec![0.1; 1000], 44100, "x").unwrap();
    assert!(compute_spectrogram(&clip, &cfg).is_err());
    assert!(stft_magnitudes(&[0.0; 431], &cfg).is_err());
}

#[test]
fn neighboring_tokens_share_twelve_frames() {
    let cfg = SpectrogramConfig::default();
    let samples: Vec<f64> =
        (0..30 * 22050).map(|i| 0.5 * ((i as f64) * 0.001).sin() * ((i as f64) * 0.3).sin()).collect();
    let image = compute_spectrogram(&AudioClip::new(samples, 22050, "t").unwrap(), &cfg).unwrap();
    let tokens = tokenize(&image).unwrap();
    assert_eq!(TokenLayout::default().overlap_frames(), 12);
    for i in 0..9 {
        for b in 0..217 {
            assert_eq!(&tokens.tokens[i].row(b)[33..45], &tokens.tokens[i + 1].row(b)[..12]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fft_matches_naive_dft(x in (1usize..64).prop_flat_map(|n| prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n))) {
        let input: Vec<Complex> = x.iter().map(|&(re, im)| Complex::new(re, im)).collect();
        let fast = Fft::new(input.len()).forward(&input);
        let slow = naive_dft(&input);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a.re - b.re).abs() < 1e-9 && (a.im - b.im).abs() < 1e-9);
        }
    }

    #[test]
    fn frame_count_matches_formula(len in 432usize..60000) {
        let cfg = SpectrogramConfig::default();
        let samples: Vec<f64> = (0..len).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect();
        let (frames, mags) = stft_magnitudes(&samples, &cfg).unwrap();
        prop_assert_eq!(frames, (len - 432) / 1994 + 1);
        prop_assert_eq!(mags.len(), 217 * frames);
    }

    #[test]
    // invariant up to the 1e-10 magnitude guard inside the log
    fn spectrogram_ignores_gain(gain in 0.01f64..1.0, seed in 0u64..1000) {
        let cfg = SpectrogramConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<f64> = (0..3 * 22050).map(|_| rng.random_range(-0.5..0.5)).collect();
        let a = compute_spectrogram(&AudioClip::new(samples.clone(), 22050, "a").unwrap(), &cfg).unwrap();
        let scaled = samples.iter().map(|s| s * gain).collect();
        let b = compute_spectrogram(&AudioClip::new(scaled, 22050, "b").unwrap(), &cfg).unwrap();
        let worst = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-6, "max difference {worst}");
    }
}
