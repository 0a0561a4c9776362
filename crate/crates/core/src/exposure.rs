//! Exposure-plane models and temporal weight maps.
//!
//! A rolling-shutter frame is a tilted plane in (row, time) space: row `h`
//! exposes at `t_start + h * dt` with `dt = (t_end - t_start) / (H - 1)`. A
//! global-shutter frame is the constant-time plane `t = t_g`. A weight map
//! selects, per displacement bin and row, the signed fraction of the bin
//! crossed when moving from the destination plane's time to the source
//! plane's time; contracting the displacement field with it yields the flow
//! between the two frames.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shutter geometry of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShutterKind {
    RollingShutter { t_start: f64, t_end: f64 },
    GlobalShutter { t_g: f64 },
}

/// Exposure-plane description of an RS or GS frame of `height` rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureModel {
    #[serde(flatten)]
    pub kind: ShutterKind,
    pub height: usize,
}

impl ExposureModel {
    pub fn rolling(t_start: f64, t_end: f64, height: usize) -> Result<Self> {
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rolling shutter needs t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        if height < 2 {
            return Err(Error::InvalidArgument(format!(
                "rolling shutter needs at least 2 rows, got {height}"
            )));
        }
        Ok(Self {
            kind: ShutterKind::RollingShutter { t_start, t_end },
            height,
        })
    }

    pub fn global(t_g: f64, height: usize) -> Result<Self> {
        if !t_g.is_finite() {
            return Err(Error::NonFinite("global shutter time".into()));
        }
        if height < 1 {
            return Err(Error::InvalidArgument("height must be >= 1".into()));
        }
        Ok(Self {
            kind: ShutterKind::GlobalShutter { t_g },
            height,
        })
    }

    /// Exposure time of integer row `h`.
    pub fn row_time(&self, h: usize) -> Result<f64> {
        if h >= self.height {
            return Err(Error::InvalidArgument(format!(
                "row {h} out of range for height {}",
                self.height
            )));
        }
        Ok(self.row_time_f(h as f64))
    }

    /// Exposure time extended linearly to fractional row coordinates.
    #[inline]
    pub fn row_time_f(&self, h: f64) -> f64 {
        match self.kind {
            ShutterKind::RollingShutter { t_start, t_end } => {
                let dt = (t_end - t_start) / (self.height - 1) as f64;
                t_start + h * dt
            }
            ShutterKind::GlobalShutter { t_g } => t_g,
        }
    }

    /// Earliest and latest row exposure times.
    pub fn time_range(&self) -> (f64, f64) {
        match self.kind {
            ShutterKind::RollingShutter { t_start, t_end } => (t_start, t_end),
            ShutterKind::GlobalShutter { t_g } => (t_g, t_g),
        }
    }

    /// Exposure time of the (possibly fractional) middle row.
    pub fn mid_time(&self) -> f64 {
        match self.kind {
            ShutterKind::RollingShutter { t_start, t_end } => 0.5 * (t_start + t_end),
            ShutterKind::GlobalShutter { t_g } => t_g,
        }
    }
}

/// RS frame rate when every image row consumes one high-speed GS frame.
pub fn rs_effective_frame_rate(gs_fps: f64, height: usize) -> Result<f64> {
    if !(gs_fps > 0.0) || height < 1 {
        return Err(Error::InvalidArgument(format!(
            "need gs_fps > 0 and height >= 1, got {gs_fps}, {height}"
        )));
    }
    Ok(gs_fps / height as f64)
}

/// Uniform partition of `[t0, t1]` into `count` bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBins {
    pub t0: f64,
    pub t1: f64,
    pub count: usize,
}

impl TimeBins {
    pub fn new(t0: f64, t1: f64, count: usize) -> Result<Self> {
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time bins need t1 > t0, got [{t0}, {t1}]"
            )));
        }
        if count < 1 {
            return Err(Error::InvalidArgument("need at least one bin".into()));
        }
        Ok(Self { t0, t1, count })
    }

    /// Bin width.
    #[inline]
    pub fn delta(&self) -> f64 {
        (self.t1 - self.t0) / self.count as f64
    }

    /// Boundary `tau_i = t0 + i * delta`, `i in 0..=count`.
    #[inline]
    pub fn boundary(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.delta()
    }

    fn check_covers(&self, model: &ExposureModel) -> Result<()> {
        let tol = 1e-9 * (self.t1 - self.t0).abs();
        let (lo, hi) = model.time_range();
        if lo < self.t0 - tol || hi > self.t1 + tol {
            return Err(Error::Inconsistent(format!(
                "exposure plane [{lo}, {hi}] outside bin window [{}, {}]",
                self.t0, self.t1
            )));
        }
        Ok(())
    }
}

/// Signed temporal-selection weights for one frame-to-frame transformation.
///
/// `T x H x W` with values in `[-1, 1]`, constant along the column axis.
/// Element `(i, h)` is positive where the source plane's time at row `h`
/// lies after the destination plane's time, so that contracting with a
/// displacement field integrates motion from the destination frame's time
/// toward the source frame's time.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    bins: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    pub src: ExposureModel,
    pub dst: ExposureModel,
}

impl WeightMap {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, bin: usize, row: usize, col: usize) -> f64 {
        self.data[(bin * self.height + row) * self.width + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Elementwise negation; equals the map of the reversed transformation.
    pub fn negate(&self) -> WeightMap {
        WeightMap {
            bins: self.bins,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| -v).collect(),
            src: self.dst,
            dst: self.src,
        }
    }

    /// Assemble a map from fully validated parts (deserialization path).
    pub(crate) fn from_raw(
        bins: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
        src: ExposureModel,
        dst: ExposureModel,
    ) -> WeightMap {
        debug_assert_eq!(data.len(), bins * height * width);
        WeightMap {
            bins,
            height,
            width,
            data,
            src,
            dst,
        }
    }

    fn from_rows(
        src: &ExposureModel,
        dst: &ExposureModel,
        bins: &TimeBins,
        width: usize,
        rows: Vec<f64>, // bins.count * height values, constant along W
    ) -> WeightMap {
        let height = src.height;
        let mut data = vec![0.0; bins.count * height * width];
        data.par_chunks_mut(width)
            .zip(rows.par_iter())
            .for_each(|(chunk, &v)| chunk.fill(v));
        WeightMap {
            bins: bins.count,
            height,
            width,
            data,
            src: *src,
            dst: *dst,
        }
    }
}

fn check_pair(src: &ExposureModel, dst: &ExposureModel, bins: &TimeBins) -> Result<()> {
    if src.height != dst.height {
        return Err(Error::DimensionMismatch(format!(
            "exposure heights differ: {} vs {}",
            src.height, dst.height
        )));
    }
    bins.check_covers(src)?;
    bins.check_covers(dst)?;
    Ok(())
}

/// Exact weight map: element `(i, h)` is the signed fractional overlap of
/// bin `i` with the oriented interval from the destination row time to the
/// source row time, divided by the bin width.
pub fn weight_map_analytic(
    src: &ExposureModel,
    dst: &ExposureModel,
    bins: &TimeBins,
    width: usize,
) -> Result<WeightMap> {
    check_pair(src, dst, bins)?;
    let height = src.height;
    let delta = bins.delta();
    let mut rows = vec![0.0; bins.count * height];
    for h in 0..height {
        let a = dst.row_time_f(h as f64);
        let b = src.row_time_f(h as f64);
        if a == b {
            continue;
        }
        let sign = if b > a { 1.0 } else { -1.0 };
        let (lo, hi) = if b > a { (a, b) } else { (b, a) };
        for i in 0..bins.count {
            let ov = (hi.min(bins.boundary(i + 1)) - lo.max(bins.boundary(i))).max(0.0);
            if ov > 0.0 {
                rows[i * height + h] = (sign * ov / delta).clamp(-1.0, 1.0);
            }
        }
    }
    Ok(WeightMap::from_rows(src, dst, bins, width, rows))
}

/// Sampled weight map: element `(i, h)` is estimated from a deterministic
/// `s_h x s_t` grid of cell-center sample points spanning the row's unit
/// cell and the bin's width. A sample at sub-row `h'` counts +1 when its
/// time lies strictly inside the oriented interval from the destination to
/// the source plane in forward order, -1 in reverse order.
pub fn weight_map_sampled(
    src: &ExposureModel,
    dst: &ExposureModel,
    bins: &TimeBins,
    width: usize,
    s_h: usize,
    s_t: usize,
) -> Result<WeightMap> {
    check_pair(src, dst, bins)?;
    if s_h < 1 || s_t < 1 {
        return Err(Error::InvalidArgument(format!(
            "sample counts must be >= 1, got {s_h}, {s_t}"
        )));
    }
    let height = src.height;
    let delta = bins.delta();
    let sub_dt = delta / s_t as f64;
    let norm = 1.0 / (s_h as f64 * s_t as f64);
    let mut rows = vec![0.0; bins.count * height];
    rows.par_chunks_mut(height).enumerate().for_each(|(i, out)| {
        let tau = bins.boundary(i);
        for (h, slot) in out.iter_mut().enumerate() {
            let mut acc: i64 = 0;
            for k in 0..s_h {
                let hf = h as f64 - 0.5 + (k as f64 + 0.5) / s_h as f64;
                let a = dst.row_time_f(hf);
                let b = src.row_time_f(hf);
                if a == b {
                    continue;
                }
                for j in 0..s_t {
                    let t = tau + (j as f64 + 0.5) * sub_dt;
                    if a < t && t < b {
                        acc += 1;
                    } else if b < t && t < a {
                        acc -= 1;
                    }
                }
            }
            *slot = acc as f64 * norm;
        }
    });
    Ok(WeightMap::from_rows(src, dst, bins, width, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rs(t0: f64, t1: f64, h: usize) -> ExposureModel {
        ExposureModel::rolling(t0, t1, h).unwrap()
    }

    fn gs(t: f64, h: usize) -> ExposureModel {
        ExposureModel::global(t, h).unwrap()
    }

    #[test]
    fn row_time_values() {
        let m = rs(0.0, 1.0, 3);
        assert_eq!(m.row_time(0).unwrap(), 0.0);
        assert_eq!(m.row_time(1).unwrap(), 0.5);
        assert_eq!(m.row_time(2).unwrap(), 1.0);
        assert!(m.row_time(3).is_err());
        let g = gs(0.25, 5);
        for h in 0..5 {
            assert_eq!(g.row_time(h).unwrap(), 0.25);
        }
    }

    #[test]
    fn effective_frame_rate() {
        let r = rs_effective_frame_rate(120.0, 260).unwrap();
        assert!((r - 120.0 / 260.0).abs() < 1e-12);
        assert!((r - 0.4615).abs() < 1e-4);
        assert_eq!(rs_effective_frame_rate(7.0, 7).unwrap(), 1.0);
        assert_eq!(rs_effective_frame_rate(2400.0, 480).unwrap(), 5.0);
        assert!(rs_effective_frame_rate(0.0, 10).is_err());
    }

    #[test]
    fn analytic_rs_to_gs_hand_case() {
        // RS(0,1,H=3) -> GS(0.5), T=2 over [0,1]: rows times 0, 0.5, 1.
        let bins = TimeBins::new(0.0, 1.0, 2).unwrap();
        let m = weight_map_analytic(&rs(0.0, 1.0, 3), &gs(0.5, 3), &bins, 4).unwrap();
        for w in 0..4 {
            assert_eq!(m.at(0, 0, w), -1.0);
            assert_eq!(m.at(1, 0, w), 0.0);
            assert_eq!(m.at(0, 1, w), 0.0);
            assert_eq!(m.at(1, 1, w), 0.0);
            assert_eq!(m.at(0, 2, w), 0.0);
            assert_eq!(m.at(1, 2, w), 1.0);
        }
    }

    #[test]
    fn analytic_same_plane_is_zero() {
        let bins = TimeBins::new(0.0, 1.0, 4).unwrap();
        let a = rs(0.1, 0.9, 5);
        let m = weight_map_analytic(&a, &a, &bins, 3).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn analytic_row_sums_match_oriented_gap() {
        // src exposes one second before dst at every row: sums to -1.
        let bins = TimeBins::new(0.0, 2.0, 8).unwrap();
        let src = rs(0.0, 1.0, 3);
        let dst = rs(1.0, 2.0, 3);
        let m = weight_map_analytic(&src, &dst, &bins, 1).unwrap();
        let delta = bins.delta();
        for h in 0..3 {
            let sum: f64 = (0..8).map(|i| m.at(i, h, 0) * delta).sum();
            let gap = src.row_time(h).unwrap() - dst.row_time(h).unwrap();
            assert!((sum - gap).abs() < 1e-12, "row {h}: {sum} vs {gap}");
            assert!((sum + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_outside_window_errors() {
        let bins = TimeBins::new(0.0, 1.0, 2).unwrap();
        assert!(weight_map_analytic(&rs(-0.5, 0.5, 3), &gs(0.5, 3), &bins, 1).is_err());
    }

    #[test]
    fn sampled_matches_analytic_at_defaults() {
        let bins = TimeBins::new(0.0, 1.0, 6).unwrap();
        let src = rs(0.2, 0.8, 32);
        let dst = gs(0.5, 32);
        let a = weight_map_analytic(&src, &dst, &bins, 1).unwrap();
        let s = weight_map_sampled(&src, &dst, &bins, 1, 50, 100).unwrap();
        let max = a
            .data()
            .iter()
            .zip(s.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max <= 0.03, "max deviation {max}");
    }

    #[test]
    fn sampled_same_plane_is_zero() {
        let bins = TimeBins::new(0.0, 1.0, 3).unwrap();
        let a = gs(0.4, 6);
        let m = weight_map_sampled(&a, &a, &bins, 2, 7, 9).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampled_full_bin_coverage() {
        // GS pair spanning exactly bin 1 of [0,1] with T=4.
        let bins = TimeBins::new(0.0, 1.0, 4).unwrap();
        let m = weight_map_sampled(&gs(0.5, 3), &gs(0.25, 3), &bins, 1, 11, 13).unwrap();
        for h in 0..3 {
            assert_eq!(m.at(0, h, 0), 0.0);
            assert_eq!(m.at(1, h, 0), 1.0);
            assert_eq!(m.at(2, h, 0), 0.0);
            assert_eq!(m.at(3, h, 0), 0.0);
        }
    }

    #[test]
    fn negate_is_involution_and_matches_swap() {
        let bins = TimeBins::new(0.0, 2.0, 5).unwrap();
        let src = rs(0.0, 1.0, 9);
        let dst = rs(0.9, 1.9, 9);
        let m = weight_map_sampled(&src, &dst, &bins, 3, 10, 12).unwrap();
        let back = m.negate().negate();
        assert_eq!(m.data(), back.data());
        let swapped = weight_map_sampled(&dst, &src, &bins, 3, 10, 12).unwrap();
        assert_eq!(m.negate().data(), swapped.data());
        let an = weight_map_analytic(&src, &dst, &bins, 3).unwrap();
        let an_swapped = weight_map_analytic(&dst, &src, &bins, 3).unwrap();
        assert_eq!(an.negate().data(), an_swapped.data());
    }

    #[test]
    fn negated_hand_case_row_zero() {
        let bins = TimeBins::new(0.0, 1.0, 2).unwrap();
        let m = weight_map_analytic(&rs(0.0, 1.0, 3), &gs(0.5, 3), &bins, 1).unwrap();
        let n = m.negate();
        assert_eq!(n.at(0, 0, 0), 1.0);
        assert_eq!(n.at(1, 0, 0), 0.0);
    }

    fn arb_model(h: usize) -> impl Strategy<Value = ExposureModel> {
        prop_oneof![
            (0.0..0.45f64, 0.55..1.0f64).prop_map(move |(a, b)| rs(a, b, h)),
            (0.0..1.0f64).prop_map(move |t| gs(t, h)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn antisymmetry_analytic(
            a in arb_model(7),
            b in arb_model(7),
            t in prop_oneof![Just(2usize), Just(6), Just(12)],
        ) {
            let bins = TimeBins::new(0.0, 1.0, t).unwrap();
            let mab = weight_map_analytic(&a, &b, &bins, 2).unwrap();
            let mba = weight_map_analytic(&b, &a, &bins, 2).unwrap();
            let neg = mab.negate();
            prop_assert_eq!(neg.data(), mba.data());
        }

        #[test]
        fn antisymmetry_sampled(
            a in arb_model(5),
            b in arb_model(5),
        ) {
            let bins = TimeBins::new(0.0, 1.0, 4).unwrap();
            let mab = weight_map_sampled(&a, &b, &bins, 2, 9, 11).unwrap();
            let mba = weight_map_sampled(&b, &a, &bins, 2, 9, 11).unwrap();
            let neg = mab.negate();
            prop_assert_eq!(neg.data(), mba.data());
        }

        #[test]
        fn row_sum_equals_gap(
            a in arb_model(6),
            b in arb_model(6),
            t in 1usize..10,
        ) {
            let bins = TimeBins::new(0.0, 1.0, t).unwrap();
            let m = weight_map_analytic(&a, &b, &bins, 1).unwrap();
            let delta = bins.delta();
            for h in 0..6 {
                let sum: f64 = (0..t).map(|i| m.at(i, h, 0) * delta).sum();
                let gap = a.row_time(h).unwrap() - b.row_time(h).unwrap();
                prop_assert!((sum - gap).abs() < 1e-12);
            }
        }

        #[test]
        fn weights_bounded_and_column_invariant(
            a in arb_model(4),
            b in arb_model(4),
        ) {
            let bins = TimeBins::new(0.0, 1.0, 3).unwrap();
            let m = weight_map_analytic(&a, &b, &bins, 5).unwrap();
            for i in 0..3 {
                for h in 0..4 {
                    let v = m.at(i, h, 0);
                    prop_assert!(v.abs() <= 1.0);
                    for w in 1..5 {
                        prop_assert_eq!(v, m.at(i, h, w));
                    }
                }
            }
        }
    }
}
