//! Slicing a spectrogram into the fixed-size overlapping tokens the model reads.

use alloc::format;
use alloc::vec::Vec;

use crate::spectral::SpectrogramImage;
use crate::{Error, Result, Tensor};

/// Token geometry along the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenLayout {
    pub bins: usize,
    pub count: usize,
    pub width_frames: usize,
    pub stride_frames: usize,
}

impl Default for TokenLayout {
    /// Ten 217×45 tokens, 33 frames apart (12 frames shared by neighbors).
    fn default() -> Self {
        TokenLayout { bins: 217, count: 10, width_frames: 45, stride_frames: 33 }
    }
}

impl TokenLayout {
    /// Frames needed so the last token fits: `(count − 1)·stride + width`.
    pub fn span_frames(&self) -> usize {
        (self.count - 1) * self.stride_frames + self.width_frames
    }

    pub fn overlap_frames(&self) -> usize {
        self.width_frames.saturating_sub(self.stride_frames)
    }
}

/// A track as `count` tokens of `bins × width_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<Tensor>,
    pub layout: TokenLayout,
    pub start_times: Vec<f64>,
    pub frame_duration: f64,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_duration(&self) -> f64 {
        self.layout.width_frames as f64 * self.frame_duration
    }

    /// `(start, end)` seconds of each token.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        let d = self.token_duration();
        self.start_times.iter().map(|&s| (s, s + d)).collect()
    }

    /// Reorders tokens (and their times) so that position `i` holds the old
    /// token `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        TokenSequence {
            tokens: order.iter().map(|&i| self.tokens[i].clone()).collect(),
            layout: self.layout,
            start_times: order.iter().map(|&i| self.start_times[i]).collect(),
            frame_duration: self.frame_duration,
        }
    }
}

/// Cuts `spec` along time into the default ten-token layout.
pub fn tokenize(spec: &SpectrogramImage) -> Result<TokenSequence> {
    tokenize_with(spec, TokenLayout::default())
}

/// Token `i` covers frames `[i·stride, i·stride + width)`. The image is
/// zero-padded on the right when it is shorter than the layout span;
/// frames beyond the span are ignored.
pub fn tokenize_with(spec: &SpectrogramImage, layout: TokenLayout) -> Result<TokenSequence> {
    if spec.bins != layout.bins {
        return Err(Error::WrongBinCount { found: spec.bins, expected: layout.bins });
    }
    if layout.count == 0 || layout.width_frames == 0 || layout.stride_frames == 0 {
        return Err(Error::InvalidArgument(format!("degenerate token layout {layout:?}")));
    }
    let width = layout.width_frames;
    let mut tokens = Vec::with_capacity(layout.count);
    for i in 0..layout.count {
        let start = i * layout.stride_frames;
        let mut data = alloc::vec![0.0; layout.bins * width];
        let avail = spec.frames.saturating_sub(start).min(width);
        for b in 0..layout.bins {
            let src = &spec.values[b * spec.frames + start..b * spec.frames + start + avail];
            data[b * width..b * width + avail].copy_from_slice(src);
        }
        tokens.push(Tensor::new(&[layout.bins, width], data)?);
    }
    let start_times = (0..layout.count).map(|i| (i * layout.stride_frames) as f64 * spec.frame_duration).collect();
    Ok(TokenSequence { tokens, layout, start_times, frame_duration: spec.frame_duration })
}
