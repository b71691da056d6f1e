//! Spectrogram PNG export: one pixel per (bin, frame), highest bin on top.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::cqt::CqtSpectrogram;
use crate::error::{Error, Result};

/// Dynamic range mapped onto the gray ramp.
const DISPLAY_RANGE_DB: f32 = 60.0;

pub fn render_spectrogram_png(
    spec: &CqtSpectrogram,
    path: impl AsRef<Path>,
    bin_range: Option<(usize, usize)>,
) -> Result<()> {
    let path = path.as_ref();
    if spec.bins == 0 || spec.frames == 0 {
        return Err(Error::Shape("cannot render an empty spectrogram".into()));
    }
    let (lo, hi) = bin_range.unwrap_or((0, spec.bins));
    if lo >= hi || hi > spec.bins {
        return Err(Error::Range(format!(
            "bin range ({lo}, {hi}) outside 0..{}",
            spec.bins
        )));
    }
    let max = (lo..hi)
        .flat_map(|b| (0..spec.frames).map(move |t| (b, t)))
        .fold(0.0f32, |m, (b, t)| m.max(spec.get(b, t)));
    let mut pixels = Vec::with_capacity((hi - lo) * spec.frames);
    for b in (lo..hi).rev() {
        for t in 0..spec.frames {
            let v = spec.get(b, t);
            let level = if max > 0.0 && v > 0.0 {
                let db = 20.0 * (v / max).log10();
                ((db + DISPLAY_RANGE_DB) / DISPLAY_RANGE_DB).clamp(0.0, 1.0)
            } else {
                0.0
            };
            pixels.push((level * 255.0).round() as u8);
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), spec.frames as u32, (hi - lo) as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(other.to_string()),
    };
    let mut writer = encoder.write_header().map_err(to_err)?;
    writer.write_image_data(&pixels).map_err(to_err)?;
    writer.finish().map_err(to_err)
}
