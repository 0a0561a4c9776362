//! Dense displacement fields over a partitioned time window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::TimeBins;

/// `2 x T x H x W` per-bin motion vectors: `at(c, i, h, w)` is the estimated
/// motion of content at pixel `(h, w)` from `tau_i` to `tau_{i+1}`, component
/// 0 along columns (x) and 1 along rows (y).
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub bins: TimeBins,
    height: usize,
    width: usize,
    data: Vec<f64>, // [component][bin][row][col]
}

impl DisplacementField {
    pub fn zeros(bins: TimeBins, height: usize, width: usize) -> Self {
        Self {
            bins,
            height,
            width,
            data: vec![0.0; 2 * bins.count * height * width],
        }
    }

    pub fn from_data(
        bins: TimeBins,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != 2 * bins.count * height * width {
            return Err(Error::DimensionMismatch(format!(
                "field data length {} != 2x{}x{height}x{width}",
                data.len(),
                bins.count
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("displacement field".into()));
        }
        Ok(Self {
            bins,
            height,
            width,
            data,
        })
    }

    pub fn time_bins(&self) -> usize {
        self.bins.count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn index(&self, c: usize, bin: usize, y: usize, x: usize) -> usize {
        ((c * self.bins.count + bin) * self.height + y) * self.width + x
    }

    #[inline]
    pub fn at(&self, c: usize, bin: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, bin, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, bin: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, bin, y, x);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Border-clamped bilinear sample of one bin's vector at real coords.
    pub fn sample_bin(&self, bin: usize, x: f64, y: f64) -> (f64, f64) {
        use crate::frame::clamp_axis;
        let (x0, x1, fx) = clamp_axis(x, self.width);
        let (y0, y1, fy) = clamp_axis(y, self.height);
        let get = |c: usize, yy: usize, xx: usize| self.at(c, bin, yy, xx);
        let lerp = |c: usize| {
            let top = (1.0 - fx) * get(c, y0, x0) + fx * get(c, y0, x1);
            let bot = (1.0 - fx) * get(c, y1, x0) + fx * get(c, y1, x1);
            (1.0 - fy) * top + fy * bot
        };
        (lerp(0), lerp(1))
    }
}

/// Piecewise-linear trajectory endpoint: `p0` plus the sum of per-bin
/// displacements sampled at the fixed starting location.
pub fn compose_trajectory(
    field: &DisplacementField,
    p0: (f64, f64),
    first_bin: usize,
    n_bins: usize,
) -> Result<(f64, f64)> {
    if first_bin + n_bins > field.time_bins() {
        return Err(Error::InvalidArgument(format!(
            "bins [{first_bin}, {}) out of range 0..{}",
            first_bin + n_bins,
            field.time_bins()
        )));
    }
    let (mut x, mut y) = p0;
    for i in first_bin..first_bin + n_bins {
        let (dx, dy) = field.sample_bin(i, p0.0, p0.1);
        x += dx;
        y += dy;
    }
    Ok((x, y))
}

/// Spatial smoothness penalty: per bin, the sum of squared forward
/// differences of both components over both axes, normalized by the pixel
/// count, then averaged over bins.
pub fn smoothness_loss(field: &DisplacementField) -> f64 {
    let (h, w, t) = (field.height(), field.width(), field.time_bins());
    if h < 2 && w < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for bin in 0..t {
        let mut s = 0.0;
        for c in 0..2 {
            for y in 0..h {
                for x in 0..w {
                    let v = field.at(c, bin, y, x);
                    if x + 1 < w {
                        let d = field.at(c, bin, y, x + 1) - v;
                        s += d * d;
                    }
                    if y + 1 < h {
                        let d = field.at(c, bin, y + 1, x) - v;
                        s += d * d;
                    }
                }
            }
        }
        total += s / (h * w) as f64;
    }
    total / t as f64
}

/// Gradient of [`smoothness_loss`] with respect to every field element,
/// written into `grad` (same layout as the field data).
pub(crate) fn smoothness_grad(field: &DisplacementField, weight: f64, grad: &mut [f64]) {
    let (h, w, t) = (field.height(), field.width(), field.time_bins());
    let norm = weight / (t as f64 * (h * w) as f64);
    for c in 0..2 {
        for bin in 0..t {
            for y in 0..h {
                for x in 0..w {
                    let v = field.at(c, bin, y, x);
                    let i = field.index(c, bin, y, x);
                    if x + 1 < w {
                        let d = field.at(c, bin, y, x + 1) - v;
                        grad[i] -= 2.0 * norm * d;
                        grad[field.index(c, bin, y, x + 1)] += 2.0 * norm * d;
                    }
                    if y + 1 < h {
                        let d = field.at(c, bin, y + 1, x) - v;
                        grad[i] -= 2.0 * norm * d;
                        grad[field.index(c, bin, y + 1, x)] += 2.0 * norm * d;
                    }
                }
            }
        }
    }
}

/// Ground-truth motion source for the simulator and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionModel {
    /// Constant velocity in pixels per second.
    Translation { vx: f64, vy: f64 },
    /// Velocity field `v(p) = A p + b` per second, row-major `a = [a00,
    /// a01, a10, a11]`.
    Affine { a: [f64; 4], b: [f64; 2] },
    /// Per-bin displacement table over `[t0, t1]`, spatially uniform.
    Scripted {
        t0: f64,
        t1: f64,
        displacements: Vec<(f64, f64)>,
    },
}

impl MotionModel {
    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            MotionModel::Translation { vx, vy } => vx.is_finite() && vy.is_finite(),
            MotionModel::Affine { a, b } => {
                a.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite())
            }
            MotionModel::Scripted {
                t0,
                t1,
                displacements,
            } => {
                t0.is_finite()
                    && t1.is_finite()
                    && *t1 > *t0
                    && !displacements.is_empty()
                    && displacements
                        .iter()
                        .all(|(x, y)| x.is_finite() && y.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidArgument("motion model parameters".into()))
        }
    }

    /// Displacement of the content located at `p` at time `ta`, moved to
    /// time `tb` (which may precede `ta`).
    pub fn displacement(&self, p: (f64, f64), ta: f64, tb: f64) -> (f64, f64) {
        match self {
            MotionModel::Translation { vx, vy } => {
                let dt = tb - ta;
                (vx * dt, vy * dt)
            }
            MotionModel::Affine { a, b } => {
                // Autonomous linear ODE; the augmented 3x3 exponential gives
                // the exact affine update.
                let dt = tb - ta;
                let m = [
                    [a[0] * dt, a[1] * dt, b[0] * dt],
                    [a[2] * dt, a[3] * dt, b[1] * dt],
                    [0.0, 0.0, 0.0],
                ];
                let e = expm3(m);
                let x = e[0][0] * p.0 + e[0][1] * p.1 + e[0][2];
                let y = e[1][0] * p.0 + e[1][1] * p.1 + e[1][2];
                (x - p.0, y - p.1)
            }
            MotionModel::Scripted {
                t0,
                t1,
                displacements,
            } => {
                // Piecewise-constant velocity from the per-bin table,
                // integrated over the oriented interval [ta, tb].
                let n = displacements.len();
                let delta = (t1 - t0) / n as f64;
                let (lo, hi, sign) = if tb >= ta { (ta, tb, 1.0) } else { (tb, ta, -1.0) };
                let mut dx = 0.0;
                let mut dy = 0.0;
                for (i, (sx, sy)) in displacements.iter().enumerate() {
                    let b0 = t0 + i as f64 * delta;
                    let b1 = t0 + (i + 1) as f64 * delta;
                    let ov = (hi.min(b1) - lo.max(b0)).max(0.0);
                    if ov > 0.0 {
                        dx += sx * ov / delta;
                        dy += sy * ov / delta;
                    }
                }
                (sign * dx, sign * dy)
            }
        }
    }
}

/// 3x3 matrix exponential by scaling-and-squaring with a Taylor series.
fn expm3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let norm: f64 = m
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(s as i32);
    let a = map3(m, |v| v * scale);

    let mut result = ident3();
    let mut term = ident3();
    for k in 1..=18 {
        term = mul3(term, a);
        term = map3(term, |v| v / k as f64);
        result = add3(result, term);
    }
    for _ in 0..s {
        result = mul3(result, result);
    }
    result
}

fn ident3() -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn map3(m: [[f64; 3]; 3], f: impl Fn(f64) -> f64) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = f(m[i][j]);
        }
    }
    out
}

fn add3(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

fn mul3(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for (k, bk) in b.iter().enumerate() {
                acc += a[i][k] * bk[j];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Exact per-bin displacement field for a motion model.
pub fn oracle_field(
    model: &MotionModel,
    bins: &TimeBins,
    height: usize,
    width: usize,
) -> Result<DisplacementField> {
    model.validate()?;
    let mut field = DisplacementField::zeros(*bins, height, width);
    let t = bins.count;
    let plane = height * width;
    let (dxs, dys) = field.data_mut().split_at_mut(t * plane);
    dxs.par_chunks_mut(plane)
        .zip(dys.par_chunks_mut(plane))
        .enumerate()
        .for_each(|(bin, (dx, dy))| {
            let ta = bins.boundary(bin);
            let tb = bins.boundary(bin + 1);
            for y in 0..height {
                for x in 0..width {
                    let (mx, my) = model.displacement((x as f64, y as f64), ta, tb);
                    dx[y * width + x] = mx;
                    dy[y * width + x] = my;
                }
            }
        });
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bins01(t: usize) -> TimeBins {
        TimeBins::new(0.0, 1.0, t).unwrap()
    }

    #[test]
    fn compose_empty_sum_is_identity() {
        let f = DisplacementField::zeros(bins01(4), 3, 3);
        let p = compose_trajectory(&f, (1.5, 2.0), 2, 0).unwrap();
        assert_eq!(p, (1.5, 2.0));
    }

    #[test]
    fn compose_direct_summation() {
        let mut f = DisplacementField::zeros(bins01(2), 5, 6);
        for y in 0..5 {
            for x in 0..6 {
                f.set(0, 0, y, x, 1.0);
                f.set(1, 0, y, x, 0.0);
                f.set(0, 1, y, x, 2.0);
                f.set(1, 1, y, x, -1.0);
            }
        }
        let p = compose_trajectory(&f, (2.0, 3.0), 0, 2).unwrap();
        assert_eq!(p, (5.0, 2.0));
    }

    #[test]
    fn compose_translation_matches_continuous_motion() {
        let model = MotionModel::Translation { vx: 4.0, vy: 0.0 };
        let f = oracle_field(&model, &bins01(4), 8, 8).unwrap();
        let p = compose_trajectory(&f, (1.0, 1.0), 0, 4).unwrap();
        assert!((p.0 - 5.0).abs() < 1e-12);
        assert!((p.1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compose_out_of_range_errors() {
        let f = DisplacementField::zeros(bins01(3), 2, 2);
        assert!(compose_trajectory(&f, (0.0, 0.0), 2, 2).is_err());
    }

    #[test]
    fn smoothness_zero_for_constant_field() {
        let mut f = DisplacementField::zeros(bins01(3), 6, 7);
        for bin in 0..3 {
            for y in 0..6 {
                for x in 0..7 {
                    f.set(0, bin, y, x, 2.5);
                    f.set(1, bin, y, x, -1.0);
                }
            }
        }
        assert_eq!(smoothness_loss(&f), 0.0);
    }

    #[test]
    fn smoothness_unit_step_counts_edges() {
        // x-component steps from 0 to 1 across one column boundary: one
        // forward difference of magnitude 1 per row.
        let (h, w) = (4, 6);
        let mut f = DisplacementField::zeros(bins01(1), h, w);
        for y in 0..h {
            for x in 3..w {
                f.set(0, 0, y, x, 1.0);
            }
        }
        let loss = smoothness_loss(&f);
        let expect = h as f64 / (h * w) as f64;
        assert!((loss - expect).abs() < 1e-15, "{loss} vs {expect}");
    }

    #[test]
    fn smoothness_quadratic_homogeneity() {
        let mut f = DisplacementField::zeros(bins01(2), 5, 5);
        for (i, v) in f.data_mut().iter_mut().enumerate() {
            *v = ((i * 37) % 11) as f64 / 7.0;
        }
        let base = smoothness_loss(&f);
        let mut g = f.clone();
        for v in g.data_mut() {
            *v *= 3.0;
        }
        assert!((smoothness_loss(&g) - 9.0 * base).abs() < 1e-9 * base.max(1.0));
    }

    #[test]
    fn smoothness_invariant_under_constant_offset() {
        let mut f = DisplacementField::zeros(bins01(2), 4, 4);
        for (i, v) in f.data_mut().iter_mut().enumerate() {
            *v = ((i * 13) % 7) as f64 / 5.0;
        }
        let base = smoothness_loss(&f);
        let mut g = f.clone();
        for v in g.data_mut() {
            *v += 42.0;
        }
        assert!((smoothness_loss(&g) - base).abs() < 1e-9);
    }

    #[test]
    fn oracle_zero_translation() {
        let f = oracle_field(&MotionModel::Translation { vx: 0.0, vy: 0.0 }, &bins01(4), 4, 4)
            .unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_translation_per_bin() {
        let f = oracle_field(&MotionModel::Translation { vx: 4.0, vy: 0.0 }, &bins01(4), 3, 3)
            .unwrap();
        for bin in 0..4 {
            for y in 0..3 {
                for x in 0..3 {
                    assert!((f.at(0, bin, y, x) - 1.0).abs() < 1e-12);
                    assert_eq!(f.at(1, bin, y, x), 0.0);
                }
            }
        }
    }

    #[test]
    fn oracle_affine_scaling_about_center() {
        // v(p) = s*(p - c): trajectory p(t) = c + (p0 - c) e^{s t}, so the
        // displacement over one bin is (p0 - c) (e^{s d} - 1).
        let s = 0.3;
        let c = (3.0, 2.0);
        let model = MotionModel::Affine {
            a: [s, 0.0, 0.0, s],
            b: [-s * c.0, -s * c.1],
        };
        let bins = bins01(4);
        let f = oracle_field(&model, &bins, 6, 8).unwrap();
        let d = bins.delta();
        let k = (s * d).exp() - 1.0;
        for (x, y) in [(0usize, 0usize), (5, 1), (7, 4)] {
            let ex = (x as f64 - c.0) * k;
            let ey = (y as f64 - c.1) * k;
            assert!((f.at(0, 0, y, x) - ex).abs() < 1e-12, "x at ({x},{y})");
            assert!((f.at(1, 0, y, x) - ey).abs() < 1e-12, "y at ({x},{y})");
        }
    }

    #[test]
    fn scripted_model_integrates_table() {
        let model = MotionModel::Scripted {
            t0: 0.0,
            t1: 1.0,
            displacements: vec![(1.0, 0.0), (0.0, 2.0)],
        };
        // Whole window forward, then a partial reversed interval.
        assert_eq!(model.displacement((0.0, 0.0), 0.0, 1.0), (1.0, 2.0));
        let (dx, dy) = model.displacement((0.0, 0.0), 0.75, 0.25);
        assert!((dx + 0.5).abs() < 1e-12);
        assert!((dy + 1.0).abs() < 1e-12);
    }

    #[test]
    fn expm3_matches_scalar_exponential() {
        let m = [[0.7, 0.0, 0.0], [0.0, -0.3, 0.0], [0.0, 0.0, 0.0]];
        let e = expm3(m);
        assert!((e[0][0] - 0.7f64.exp()).abs() < 1e-14);
        assert!((e[1][1] - (-0.3f64).exp()).abs() < 1e-14);
        assert!((e[2][2] - 1.0).abs() < 1e-14);
    }
}
