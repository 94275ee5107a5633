//! Frame-level feature matrices and time-span slicing.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{data_err, Result};

/// A `frames × dim` row-major matrix of encoder features for one utterance.
///
/// Values are stored as `f32` (the on-disk precision); every computation
/// widens to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    utterance_id: String,
    frames: usize,
    dim: usize,
    frame_rate: f64,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(
        utterance_id: impl Into<String>,
        dim: usize,
        frame_rate: f64,
        data: Vec<f32>,
    ) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if utterance_id.is_empty() {
            return Err(data_err!("empty utterance id"));
        }
        if dim == 0 {
            return Err(data_err!("{utterance_id}: dim must be at least 1"));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(data_err!(
                "{utterance_id}: frame rate must be positive, got {frame_rate}"
            ));
        }
        if data.is_empty() {
            return Err(data_err!("{utterance_id}: no frames"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(data_err!(
                "{utterance_id}: {} values do not form whole frames of dim {dim}",
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(data_err!(
                "{utterance_id}: non-finite value at frame {}, column {}",
                pos / dim,
                pos % dim
            ));
        }
        Ok(Self {
            frames: data.len() / dim,
            utterance_id,
            dim,
            frame_rate,
            data,
        })
    }

    /// Builds a matrix from `f64` values, narrowing to storage precision.
    pub fn from_f64(
        utterance_id: impl Into<String>,
        dim: usize,
        frame_rate: f64,
        data: &[f64],
    ) -> Result<Self> {
        Self::new(
            utterance_id,
            dim,
            frame_rate,
            data.iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Widened copy of the whole matrix, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Frame index range `[start, end)` covered by the time span.
    ///
    /// Both endpoints use round-half-up of `time × frame_rate`, then clip
    /// to `[0, frames]`.
    pub fn frame_span(&self, onset: f64, offset: f64) -> Result<(usize, usize)> {
        if !(onset.is_finite() && offset.is_finite()) || onset < 0.0 || onset >= offset {
            return Err(data_err!(
                "{}: invalid span [{onset}, {offset}); need 0 <= onset < offset",
                self.utterance_id
            ));
        }
        let start = time_to_frame(onset, self.frame_rate).min(self.frames);
        let end = time_to_frame(offset, self.frame_rate).min(self.frames);
        if end <= start {
            return Err(data_err!(
                "{}: empty token for span [{onset}, {offset})",
                self.utterance_id
            ));
        }
        Ok((start, end))
    }

    /// Frames covering `[onset, offset)` seconds.
    pub fn slice(&self, onset: f64, offset: f64) -> Result<FeatureMatrix> {
        let (start, end) = self.frame_span(onset, offset)?;
        Ok(FeatureMatrix {
            utterance_id: self.utterance_id.clone(),
            frames: end - start,
            dim: self.dim,
            frame_rate: self.frame_rate,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        })
    }

    /// Same data scaled by `factor`, re-validated.
    pub fn scaled(&self, factor: f32) -> Result<FeatureMatrix> {
        Self::new(
            self.utterance_id.clone(),
            self.dim,
            self.frame_rate,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }
}

fn time_to_frame(t: f64, frame_rate: f64) -> usize {
    let f = libm::floor(t * frame_rate + 0.5);
    if f <= 0.0 {
        0
    } else {
        f as usize
    }
}
