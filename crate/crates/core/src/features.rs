//! Three-channel network input: vocal magnitude, backing magnitude and the
//! bitwise disagreement of their mean-thresholded binarizations.

use crate::cqt::{binarize_mean_threshold, disagreement, BinaryMatrix, CqtSpectrogram};
use crate::error::{Error, Result};
use crate::pitch::NoteSegment;

pub const CHANNELS: usize = 3;

/// `[3][bins][frames]` row-major, covering one note.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub data: Vec<f32>,
    pub bins: usize,
    pub frames: usize,
    pub note_span: (usize, usize),
}

impl ModelInput {
    #[inline]
    pub fn get(&self, channel: usize, bin: usize, frame: usize) -> f32 {
        self.data[(channel * self.bins + bin) * self.frames + frame]
    }

    pub fn channel(&self, channel: usize) -> &[f32] {
        let n = self.bins * self.frames;
        &self.data[channel * n..(channel + 1) * n]
    }
}

/// Whole-performance channels, from which per-note inputs are sliced.
///
/// Binarization thresholds and max-normalization use the full performance,
/// so every note slice of one performance shares the same statistics.
#[derive(Debug, Clone)]
pub struct PerformanceFeatures {
    vocal: Vec<f32>,
    backing: Vec<f32>,
    disagreement: BinaryMatrix,
    bins: usize,
    frames: usize,
}

impl PerformanceFeatures {
    pub fn new(vocal: &CqtSpectrogram, backing: &CqtSpectrogram) -> Result<Self> {
        if vocal.bins != backing.bins || vocal.frames != backing.frames {
            return Err(Error::Shape(format!(
                "vocal {}x{} vs backing {}x{}",
                vocal.bins, vocal.frames, backing.bins, backing.frames
            )));
        }
        if vocal.bins != vocal.params.truncated_bins() {
            return Err(Error::Shape(format!(
                "model input needs {} bins, got {}",
                vocal.params.truncated_bins(),
                vocal.bins
            )));
        }
        let disagreement = disagreement(
            &binarize_mean_threshold(vocal),
            &binarize_mean_threshold(backing),
        )?;
        Ok(Self {
            vocal: max_normalized(&vocal.mag),
            backing: max_normalized(&backing.mag),
            disagreement,
            bins: vocal.bins,
            frames: vocal.frames,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn disagreement(&self) -> &BinaryMatrix {
        &self.disagreement
    }

    pub fn note_input(&self, note: &NoteSegment) -> Result<ModelInput> {
        let (start, end) = (note.start_frame, note.end_frame);
        if start >= end {
            return Err(Error::Range(format!("empty note span [{start}, {end})")));
        }
        if end > self.frames {
            return Err(Error::Range(format!(
                "note span [{start}, {end}) beyond {} frames",
                self.frames
            )));
        }
        let width = end - start;
        let mut data = Vec::with_capacity(CHANNELS * self.bins * width);
        for src in [&self.vocal, &self.backing] {
            for b in 0..self.bins {
                let row = b * self.frames;
                data.extend_from_slice(&src[row + start..row + end]);
            }
        }
        for b in 0..self.bins {
            let row = b * self.frames;
            data.extend(
                self.disagreement.bits[row + start..row + end]
                    .iter()
                    .map(|&v| v as f32),
            );
        }
        Ok(ModelInput {
            data,
            bins: self.bins,
            frames: width,
            note_span: (start, end),
        })
    }
}

fn max_normalized(mag: &[f32]) -> Vec<f32> {
    let max = mag.iter().fold(0.0f32, |m, &v| m.max(v));
    if max > 0.0 {
        mag.iter().map(|&v| v / max).collect()
    } else {
        mag.to_vec()
    }
}

/// Builds the input for a single note. Prefer [`PerformanceFeatures`] when
/// slicing many notes from the same performance.
pub fn build_model_input(
    vocal: &CqtSpectrogram,
    backing: &CqtSpectrogram,
    note: &NoteSegment,
) -> Result<ModelInput> {
    PerformanceFeatures::new(vocal, backing)?.note_input(note)
}
