//! 2-D cross-correlation over `(channels, freq, time)` volumes, computed as
//! im2col + GEMM in blocks of output time steps so memory stays bounded for
//! long notes. Volumes are stored time-major so unfolding copies run along
//! the long frequency axis.

use serde::{Deserialize, Serialize};

use super::real::Real;
use crate::error::{Error, Result};

/// Columns of the unfolded input processed per GEMM call are capped so the
/// unfolded block holds at most this many scalars.
const MAX_COL_BLOCK: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// (freq, time)
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvSpec {
    pub const fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    /// Output `(freq, time)` extent, or `None` if the kernel does not fit.
    pub fn output_dims(&self, freq: usize, time: usize) -> Option<(usize, usize)> {
        let f = (freq + 2 * self.padding.0).checked_sub(self.kernel.0)? / self.stride.0 + 1;
        let t = (time + 2 * self.padding.1).checked_sub(self.kernel.1)? / self.stride.1 + 1;
        Some((f, t))
    }
}

/// Activation with logical shape `(channels, freq, time)`, stored as
/// `[channels][time][freq]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    pub data: Vec<T>,
    pub channels: usize,
    pub freq: usize,
    pub time: usize,
}

impl<T: Real> Volume<T> {
    pub fn new(data: Vec<T>, channels: usize, freq: usize, time: usize) -> Result<Self> {
        if data.len() != channels * freq * time {
            return Err(Error::Shape(format!(
                "{} values for a {channels}x{freq}x{time} volume",
                data.len()
            )));
        }
        Ok(Self {
            data,
            channels,
            freq,
            time,
        })
    }

    pub fn zeros(channels: usize, freq: usize, time: usize) -> Self {
        Self {
            data: vec![T::zero(); channels * freq * time],
            channels,
            freq,
            time,
        }
    }

    /// Builds a volume from `[channels][freq][time]` data.
    pub fn from_freq_major(data: &[T], channels: usize, freq: usize, time: usize) -> Result<Self> {
        let mut v = Self::new(data.to_vec(), channels, freq, time)?;
        for c in 0..channels {
            for f in 0..freq {
                for t in 0..time {
                    let idx = v.index(c, f, t);
                    v.data[idx] = data[(c * freq + f) * time + t];
                }
            }
        }
        Ok(v)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.freq, self.time)
    }

    pub fn index(&self, c: usize, f: usize, t: usize) -> usize {
        (c * self.time + t) * self.freq + f
    }

    pub fn get(&self, c: usize, f: usize, t: usize) -> T {
        self.data[self.index(c, f, t)]
    }
}

/// Output indices `[lo, hi)` whose input coordinate `o * stride + tap - pad`
/// lands in `[0, len)`.
fn valid_range(
    tap: usize,
    pad: usize,
    stride: usize,
    len: usize,
    out_len: usize,
) -> (usize, usize) {
    let lo = if pad > tap {
        (pad - tap).div_ceil(stride)
    } else {
        0
    };
    let hi = if len + pad > tap {
        ((len + pad - tap - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo.min(hi), hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub spec: ConvSpec,
    /// `[out][in][kf][kt]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub struct ConvGrads<T> {
    pub input: Option<Volume<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(spec: ConvSpec) -> Self {
        Self {
            spec,
            weight: vec![T::zero(); spec.out_channels * spec.fan_in()],
            bias: vec![T::zero(); spec.out_channels],
        }
    }

    fn out_dims(&self, x: &Volume<T>) -> Result<(usize, usize)> {
        if x.channels != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.spec.in_channels, x.channels
            )));
        }
        self.spec.output_dims(x.freq, x.time).ok_or_else(|| {
            Error::Shape(format!(
                "kernel {:?} does not fit a {}x{} input",
                self.spec.kernel, x.freq, x.time
            ))
        })
    }

    /// Output time steps unfolded per GEMM call.
    fn steps_per_block(&self, out_f: usize) -> usize {
        (MAX_COL_BLOCK / (self.spec.fan_in() * out_f).max(1)).max(1)
    }

    /// Unfolds output time steps `steps` into `cols[fan_in][steps.len() * out_f]`.
    fn im2col(&self, x: &Volume<T>, steps: std::ops::Range<usize>, out_f: usize, cols: &mut [T]) {
        let s = &self.spec;
        let (kf, kt) = s.kernel;
        let width = steps.len() * out_f;
        for c in 0..s.in_channels {
            let plane = &x.data[c * x.freq * x.time..(c + 1) * x.freq * x.time];
            for i in 0..kf {
                let (lo, hi) = valid_range(i, s.padding.0, s.stride.0, x.freq, out_f);
                for j in 0..kt {
                    let dst_row = &mut cols[((c * kf + i) * kt + j) * width..][..width];
                    for (ot, dst) in steps.clone().zip(dst_row.chunks_exact_mut(out_f)) {
                        let t = (ot * s.stride.1 + j) as isize - s.padding.1 as isize;
                        if t < 0 || t as usize >= x.time {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[t as usize * x.freq..][..x.freq];
                        dst[..lo].fill(T::zero());
                        dst[hi..].fill(T::zero());
                        if hi == lo {
                            continue;
                        }
                        if s.stride.0 == 1 {
                            let f0 = lo + i - s.padding.0;
                            dst[lo..hi].copy_from_slice(&src[f0..f0 + hi - lo]);
                        } else {
                            for (of, d) in dst.iter_mut().enumerate().take(hi).skip(lo) {
                                *d = src[of * s.stride.0 + i - s.padding.0];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(
        &self,
        grad_x: &mut Volume<T>,
        steps: std::ops::Range<usize>,
        out_f: usize,
        cols: &[T],
    ) {
        let s = &self.spec;
        let (kf, kt) = s.kernel;
        let width = steps.len() * out_f;
        let (freq, time) = (grad_x.freq, grad_x.time);
        for c in 0..s.in_channels {
            let plane = &mut grad_x.data[c * freq * time..(c + 1) * freq * time];
            for i in 0..kf {
                let (lo, hi) = valid_range(i, s.padding.0, s.stride.0, freq, out_f);
                if hi == lo {
                    continue;
                }
                for j in 0..kt {
                    let src_row = &cols[((c * kf + i) * kt + j) * width..][..width];
                    for (ot, src) in steps.clone().zip(src_row.chunks_exact(out_f)) {
                        let t = (ot * s.stride.1 + j) as isize - s.padding.1 as isize;
                        if t < 0 || t as usize >= time {
                            continue;
                        }
                        let dst = &mut plane[t as usize * freq..][..freq];
                        if s.stride.0 == 1 {
                            let f0 = lo + i - s.padding.0;
                            for (d, &v) in dst[f0..f0 + hi - lo].iter_mut().zip(&src[lo..hi]) {
                                *d += v;
                            }
                        } else {
                            for (of, &v) in src.iter().enumerate().take(hi).skip(lo) {
                                dst[of * s.stride.0 + i - s.padding.0] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Volume<T>) -> Result<Volume<T>> {
        let (out_f, out_t) = self.out_dims(x)?;
        let positions = out_f * out_t;
        let k = self.spec.fan_in();
        let m = self.spec.out_channels;
        let mut out = Volume::zeros(m, out_f, out_t);
        for (o, b) in self.bias.iter().enumerate() {
            out.data[o * positions..(o + 1) * positions].fill(*b);
        }
        let block = self.steps_per_block(out_f);
        let mut cols = vec![T::zero(); k * block.min(out_t) * out_f];
        for t0 in (0..out_t).step_by(block) {
            let steps = t0..(t0 + block).min(out_t);
            let (n0, width) = (t0 * out_f, steps.len() * out_f);
            self.im2col(x, steps, out_f, &mut cols[..k * width]);
            T::gemm(
                false,
                false,
                m,
                width,
                k,
                T::one(),
                &self.weight,
                &cols[..k * width],
                T::one(),
                &mut out.data[n0..],
                positions,
            );
        }
        Ok(out)
    }

    /// Gradients given the layer input and the gradient of its output.
    pub fn backward(
        &self,
        x: &Volume<T>,
        grad_out: &Volume<T>,
        want_input: bool,
    ) -> Result<ConvGrads<T>> {
        let (out_f, out_t) = self.out_dims(x)?;
        if grad_out.shape() != (self.spec.out_channels, out_f, out_t) {
            return Err(Error::Shape(format!(
                "grad_out {:?} does not match conv output {:?}",
                grad_out.shape(),
                (self.spec.out_channels, out_f, out_t)
            )));
        }
        let positions = out_f * out_t;
        let k = self.spec.fan_in();
        let m = self.spec.out_channels;
        let bias = (0..m)
            .map(|o| {
                grad_out.data[o * positions..(o + 1) * positions]
                    .iter()
                    .copied()
                    .sum()
            })
            .collect();
        let mut weight = vec![T::zero(); m * k];
        let mut grad_x = want_input.then(|| Volume::zeros(x.channels, x.freq, x.time));
        let block = self.steps_per_block(out_f);
        let max_width = block.min(out_t) * out_f;
        let mut cols = vec![T::zero(); k * max_width];
        let mut gblock = vec![T::zero(); m * max_width];
        for t0 in (0..out_t).step_by(block) {
            let steps = t0..(t0 + block).min(out_t);
            let (n0, width) = (t0 * out_f, steps.len() * out_f);
            for o in 0..m {
                gblock[o * width..(o + 1) * width].copy_from_slice(
                    &grad_out.data[o * positions + n0..o * positions + n0 + width],
                );
            }
            let g = &gblock[..m * width];
            self.im2col(x, steps.clone(), out_f, &mut cols[..k * width]);
            // dW += G * cols^T
            T::gemm(
                false,
                true,
                m,
                k,
                width,
                T::one(),
                g,
                &cols[..k * width],
                T::one(),
                &mut weight,
                k,
            );
            if let Some(gx) = grad_x.as_mut() {
                // dcols = W^T * G
                T::gemm(
                    true,
                    false,
                    k,
                    width,
                    m,
                    T::one(),
                    &self.weight,
                    g,
                    T::zero(),
                    &mut cols[..k * width],
                    width,
                );
                self.col2im(gx, steps, out_f, &cols[..k * width]);
            }
        }
        Ok(ConvGrads {
            input: grad_x,
            weight,
            bias,
        })
    }
}
