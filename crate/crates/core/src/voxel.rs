//! Temporally binned voxel-grid representation of an event stream.

use crate::error::{Error, Result};
use crate::event::EventStream;
use crate::exposure::TimeBins;
use crate::frame::Frame;

/// `(T+1) x N x H x W` signed polarity accumulation.
///
/// The `T+1` event bins are centered on the boundaries of the `T`
/// displacement bins (half-bin extensions at both window ends), so each
/// event-image slice sits at a displacement-bin boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub bins: TimeBins,
    event_bins: usize,
    sub_bins: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl VoxelGrid {
    pub fn event_bins(&self) -> usize {
        self.event_bins
    }

    pub fn sub_bins(&self) -> usize {
        self.sub_bins
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, bin: usize, sub: usize, y: usize, x: usize) -> f64 {
        self.data[((bin * self.sub_bins + sub) * self.height + y) * self.width + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Bin an event stream into a `(T+1) x N x H x W` voxel grid.
///
/// Each event deposits its polarity into the two temporally adjacent
/// sub-voxels of its bin with linear weights; mass at the bin's edge
/// sub-voxels is not spilled across bins.
pub fn voxelize(stream: &EventStream, bins: &TimeBins, sub_bins: usize) -> Result<VoxelGrid> {
    if sub_bins < 1 {
        return Err(Error::InvalidArgument("sub_bins must be >= 1".into()));
    }
    let delta = bins.delta();
    let tol = 1e-9 * (bins.t1 - bins.t0).abs();
    let event_bins = bins.count + 1;
    let (h, w) = (stream.height, stream.width);
    let mut data = vec![0.0; event_bins * sub_bins * h * w];
    let sub_w = delta / sub_bins as f64;

    for e in stream.events() {
        if e.t < bins.t0 - tol || e.t > bins.t1 + tol {
            return Err(Error::Inconsistent(format!(
                "event at t={} outside window [{}, {}]",
                e.t, bins.t0, bins.t1
            )));
        }
        // Bin k is centered at boundary tau_k and spans tau_k +- delta/2.
        let k = (((e.t - bins.t0) / delta + 0.5).floor() as i64).clamp(0, bins.count as i64) as usize;
        let bin_start = bins.boundary(k) - 0.5 * delta;
        // Fractional sub-voxel position relative to sub-voxel centers.
        let u = (e.t - bin_start) / sub_w - 0.5;
        let base = (k * sub_bins * h + e.y as usize) * w + e.x as usize;
        let plane = h * w;
        let p = f64::from(e.p);
        if u <= 0.0 {
            data[base] += p;
        } else if u >= (sub_bins - 1) as f64 {
            data[base + (sub_bins - 1) * plane] += p;
        } else {
            let n0 = u.floor() as usize;
            let w1 = u - n0 as f64;
            data[base + n0 * plane] += p * (1.0 - w1);
            data[base + (n0 + 1) * plane] += p * w1;
        }
    }
    Ok(VoxelGrid {
        bins: *bins,
        event_bins,
        sub_bins,
        height: h,
        width: w,
        data,
    })
}

/// Collapse the N sub-bins of every event bin by summation, yielding `T+1`
/// signed event images.
pub fn bin_event_images(grid: &VoxelGrid) -> Vec<Frame> {
    let (h, w) = (grid.height, grid.width);
    let plane = h * w;
    (0..grid.event_bins)
        .map(|k| {
            let mut img = Frame::zeros(h, w, 1);
            for n in 0..grid.sub_bins {
                let off = (k * grid.sub_bins + n) * plane;
                for (dst, src) in img.data_mut().iter_mut().zip(&grid.data[off..off + plane]) {
                    *dst += src;
                }
            }
            img.timestamp = grid.bins.boundary(k);
            img
        })
        .collect()
}
