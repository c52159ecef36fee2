//! RIFF/WAVE decoding (16-bit PCM and 32-bit float, mono or stereo) and a
//! 16-bit PCM writer.

use std::fs;
use std::path::Path;

use genresig_core::audio::AudioClip;

use crate::error::{io_err, Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

impl SampleFormat {
    fn bytes(self) -> usize {
        match self {
            SampleFormat::Pcm16 => 2,
            SampleFormat::Float32 => 4,
        }
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

struct Format {
    sample: SampleFormat,
    channels: usize,
    rate: u32,
}

fn parse_fmt(body: &[u8]) -> Result<Format> {
    if body.len() < 16 {
        return Err(Error::MalformedHeader(format!("fmt chunk of {} bytes", body.len())));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2) as usize;
    let rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        // the subformat GUID starts with the plain format tag
        if body.len() < 26 {
            return Err(Error::MalformedHeader("extensible fmt chunk without subformat".into()));
        }
        tag = u16_at(body, 24);
    }
    let sample = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleFormat::Pcm16,
        (FORMAT_FLOAT, 32) => SampleFormat::Float32,
        (FORMAT_PCM | FORMAT_FLOAT, b) => return Err(Error::UnsupportedEncoding(format!("{b}-bit samples"))),
        (t, _) => return Err(Error::UnsupportedEncoding(format!("format tag {t:#06x}"))),
    };
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedEncoding(format!("{channels} channels")));
    }
    if rate == 0 {
        return Err(Error::MalformedHeader("zero sample rate".into()));
    }
    Ok(Format { sample, channels, rate })
}

/// Decodes a WAV image. Stereo is averaged to mono; 16-bit samples are
/// scaled by 1/32768 and float samples clamped to `[-1, 1]`.
pub fn decode_wav(bytes: &[u8], source: &str) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedHeader(format!("{source}: not a RIFF/WAVE file")));
    }
    let mut at = 12;
    let mut format = None;
    let mut data = None;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32_at(bytes, at + 4) as usize;
        let body_start = at + 8;
        let available = bytes.len() - body_start;
        match id {
            b"fmt " => {
                if size > available {
                    return Err(Error::TruncatedFile(format!("{source}: fmt chunk")));
                }
                format = Some(parse_fmt(&bytes[body_start..body_start + size])?);
            }
            b"data" => {
                if size > available {
                    return Err(Error::TruncatedFile(format!(
                        "{source}: data chunk claims {size} bytes, {available} present"
                    )));
                }
                data = Some(&bytes[body_start..body_start + size]);
                break;
            }
            _ => {}
        }
        at = body_start + size + (size & 1);
    }
    let format = format.ok_or_else(|| Error::MalformedHeader(format!("{source}: no fmt chunk")))?;
    let data = data.ok_or_else(|| Error::MalformedHeader(format!("{source}: no data chunk")))?;
    let frame = format.sample.bytes() * format.channels;
    if data.len() % frame != 0 {
        return Err(Error::TruncatedFile(format!("{source}: partial sample frame")));
    }
    let value = |off: usize| -> f64 {
        match format.sample {
            SampleFormat::Pcm16 => i16::from_le_bytes([data[off], data[off + 1]]) as f64 / 32768.0,
            SampleFormat::Float32 => {
                let v = f32::from_le_bytes(data[off..off + 4].try_into().unwrap()) as f64;
                if v.is_nan() {
                    0.0
                } else {
                    v.clamp(-1.0, 1.0)
                }
            }
        }
    };
    let width = format.sample.bytes();
    let samples: Vec<f64> = (0..data.len() / frame)
        .map(|i| {
            let base = i * frame;
            let sum: f64 = (0..format.channels).map(|c| value(base + c * width)).sum();
            sum / format.channels as f64
        })
        .collect();
    Ok(AudioClip::new(samples, format.rate, source)?)
}

pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_wav(&bytes, &path.display().to_string())
}

/// Encodes interleaved samples. 16-bit values are `round(x·32768)` clamped
/// to the i16 range.
pub fn encode_wav(interleaved: &[f64], channels: u16, rate: u32, sample: SampleFormat) -> Vec<u8> {
    let width = sample.bytes();
    let data_len = interleaved.len() * width;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    let tag = match sample {
        SampleFormat::Pcm16 => FORMAT_PCM,
        SampleFormat::Float32 => FORMAT_FLOAT,
    };
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    let block = channels as u32 * width as u32;
    out.extend_from_slice(&(rate * block).to_le_bytes());
    out.extend_from_slice(&(block as u16).to_le_bytes());
    out.extend_from_slice(&(8 * width as u16).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &x in interleaved {
        match sample {
            SampleFormat::Pcm16 => {
                let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            SampleFormat::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
        }
    }
    out
}

/// Writes mono 16-bit PCM.
pub fn write_wav(path: &Path, samples: &[f64], rate: u32) -> Result<()> {
    fs::write(path, encode_wav(samples, 1, rate, SampleFormat::Pcm16)).map_err(io_err(path))
}
