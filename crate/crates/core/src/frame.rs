//! Image frames, per-pixel flow maps, and backward warping.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exposure::ExposureModel;

/// A grayscale (1-channel) or RGB (3-channel) intensity grid.
///
/// Pixel data is stored row-major with interleaved channels. Values are
/// finite; pipeline frames stay in `[0, 1]` but intermediate frames (warped
/// flows, residuals) may leave that range.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    /// Metadata timestamp in seconds (mid-row time for RS frames).
    pub timestamp: f64,
    /// Exposure description when the frame came from a shutter model.
    pub exposure: Option<ExposureModel>,
}

impl Frame {
    /// All-zero frame.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
            timestamp: 0.0,
            exposure: None,
        }
    }

    /// Build a frame from raw row-major data, validating shape and finiteness.
    pub fn from_data(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "frame data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("frame data".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            timestamp: 0.0,
            exposure: None,
        })
    }

    /// Grayscale frame filled by `f(y, x)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            channels: 1,
            data,
            timestamp: 0.0,
            exposure: None,
        }
    }

    pub fn with_timestamp(mut self, t: f64) -> Self {
        self.timestamp = t;
        self
    }

    pub fn with_exposure(mut self, exposure: ExposureModel) -> Self {
        self.exposure = Some(exposure);
        self
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
    }

    /// Luminance plane: identity for grayscale, Rec.601 weights for RGB.
    pub fn luminance(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = Frame::zeros(self.height, self.width, 1);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = 0.299 * self.at(y, x, 0) + 0.587 * self.at(y, x, 1)
                    + 0.114 * self.at(y, x, 2);
                out.set(y, x, 0, v);
            }
        }
        out.timestamp = self.timestamp;
        out
    }

    /// Border-clamped bilinear sample of all channels at (x, y) into `out`.
    ///
    /// Coordinates are clamped to `[0, W-1] x [0, H-1]` (replicate padding);
    /// callers track out-of-bounds samples through a [`ValidityMask`].
    #[inline]
    pub(crate) fn sample_clamped(&self, x: f64, y: f64, out: &mut [f64]) {
        let (x0, x1, fx) = clamp_axis(x, self.width);
        let (y0, y1, fy) = clamp_axis(y, self.height);
        let c = self.channels;
        let r0 = (y0 * self.width + x0) * c;
        let r1 = (y0 * self.width + x1) * c;
        let r2 = (y1 * self.width + x0) * c;
        let r3 = (y1 * self.width + x1) * c;
        for ch in 0..c {
            let top = (1.0 - fx) * self.data[r0 + ch] + fx * self.data[r1 + ch];
            let bot = (1.0 - fx) * self.data[r2 + ch] + fx * self.data[r3 + ch];
            out[ch] = (1.0 - fy) * top + fy * bot;
        }
    }
}

/// Resolve one axis of a bilinear lookup: cell corners plus fraction.
#[inline]
pub(crate) fn clamp_axis(v: f64, len: usize) -> (usize, usize, f64) {
    debug_assert!(len >= 1);
    let max = (len - 1) as f64;
    let vc = v.clamp(0.0, max);
    let mut i0 = vc.floor() as usize;
    if i0 >= len - 1 {
        i0 = len.saturating_sub(2);
    }
    let i1 = (i0 + 1).min(len - 1);
    let f = vc - i0 as f64;
    (i0, i1, f)
}

/// Bilinear interpolation of the four neighbors of (x, y).
///
/// Out-of-range coordinates are clamped to the border; flag such samples
/// through the caller's mask. Returns one intensity per channel.
pub fn bilinear_sample(img: &Frame, x: f64, y: f64) -> Result<Vec<f64>> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite(format!("sample coordinates ({x}, {y})")));
    }
    let mut out = vec![0.0; img.channels()];
    img.sample_clamped(x, y, &mut out);
    Ok(out)
}

/// Dense per-pixel displacement in pixels; `x` is the column axis, `y` the
/// row axis. Stored as two planes.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    height: usize,
    width: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl FlowMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            dx: vec![0.0; height * width],
            dy: vec![0.0; height * width],
        }
    }

    pub fn from_planes(height: usize, width: usize, dx: Vec<f64>, dy: Vec<f64>) -> Result<Self> {
        if dx.len() != height * width || dy.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "flow planes {}/{} != {height}x{width}",
                dx.len(),
                dy.len()
            )));
        }
        if !dx.iter().chain(dy.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("flow data".into()));
        }
        Ok(Self {
            height,
            width,
            dx,
            dy,
        })
    }

    pub fn constant(height: usize, width: usize, dx: f64, dy: f64) -> Self {
        Self {
            height,
            width,
            dx: vec![dx; height * width],
            dy: vec![dy; height * width],
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, dx: f64, dy: f64) {
        let i = y * self.width + x;
        self.dx[i] = dx;
        self.dy[i] = dy;
    }

    #[inline]
    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    #[inline]
    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    /// Border-clamped bilinear sample of the flow vector at real coordinates.
    pub fn sample_clamped(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1, fx) = clamp_axis(x, self.width);
        let (y0, y1, fy) = clamp_axis(y, self.height);
        let idx = |yy: usize, xx: usize| yy * self.width + xx;
        let lerp = |p: &[f64]| {
            let top = (1.0 - fx) * p[idx(y0, x0)] + fx * p[idx(y0, x1)];
            let bot = (1.0 - fx) * p[idx(y1, x0)] + fx * p[idx(y1, x1)];
            (1.0 - fy) * top + fy * bot
        };
        (lerp(&self.dx), lerp(&self.dy))
    }
}

/// Per-pixel {0,1} flag marking whether a warp sampled inside the source
/// bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ValidityMask {
    pub fn filled(height: usize, width: usize, valid: bool) -> Self {
        Self {
            height,
            width,
            data: vec![u8::from(valid); height * width],
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, valid: bool) {
        self.data[y * self.width + x] = u8::from(valid);
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn count_valid(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn and(&self, other: &ValidityMask) -> ValidityMask {
        assert_eq!(self.data.len(), other.data.len());
        ValidityMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    pub fn or(&self, other: &ValidityMask) -> ValidityMask {
        assert_eq!(self.data.len(), other.data.len());
        ValidityMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }
}

/// Backward warp: `out(p) = src(p + flow(p))` with border-clamped bilinear
/// sampling. The mask is 1 iff the sampled point lies inside image bounds
/// before clamping.
pub fn warp_backward(src: &Frame, flow: &FlowMap) -> Result<(Frame, ValidityMask)> {
    if src.height() != flow.height() || src.width() != flow.width() {
        return Err(Error::DimensionMismatch(format!(
            "warp: frame {}x{} vs flow {}x{}",
            src.height(),
            src.width(),
            flow.height(),
            flow.width()
        )));
    }
    let (h, w, c) = (src.height(), src.width(), src.channels());
    let mut out = Frame::zeros(h, w, c);
    out.timestamp = src.timestamp;
    let mut mask = ValidityMask::filled(h, w, false);

    let xmax = (w - 1) as f64;
    let ymax = (h - 1) as f64;
    let mask_rows: Vec<&mut [u8]> = mask.data.chunks_mut(w).collect();
    out.data
        .par_chunks_mut(w * c)
        .zip(mask_rows)
        .enumerate()
        .for_each(|(y, (row, mrow))| {
            let mut px = vec![0.0; c];
            for x in 0..w {
                let (fx, fy) = flow.at(y, x);
                let sx = x as f64 + fx;
                let sy = y as f64 + fy;
                mrow[x] = u8::from(sx >= 0.0 && sx <= xmax && sy >= 0.0 && sy <= ymax);
                src.sample_clamped(sx, sy, &mut px);
                row[x * c..x * c + c].copy_from_slice(&px);
            }
        });
    Ok((out, mask))
}
