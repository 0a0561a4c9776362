//! Latent GS frame generation from RS frame pairs and the displacement
//! field, plus the reciprocal GS-to-RS and RS-to-RS warps.

use crate::error::{Error, Result};
use crate::exposure::{weight_map_analytic, weight_map_sampled, ExposureModel, TimeBins, WeightMap};
use crate::field::DisplacementField;
use crate::frame::{warp_backward, FlowMap, Frame, ValidityMask};

/// Which weight-map construction the pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMapMode {
    /// Exact interval-overlap weights (default).
    Analytic,
    /// Paper-style uniform sampling with `s_h x s_t` points per element.
    Sampled { s_h: usize, s_t: usize },
}

impl Default for WeightMapMode {
    fn default() -> Self {
        WeightMapMode::Analytic
    }
}

/// Build the weight map for `src -> dst` under the selected mode.
pub fn build_weight_map(
    src: &ExposureModel,
    dst: &ExposureModel,
    bins: &TimeBins,
    width: usize,
    mode: WeightMapMode,
) -> Result<WeightMap> {
    match mode {
        WeightMapMode::Analytic => weight_map_analytic(src, dst, bins, width),
        WeightMapMode::Sampled { s_h, s_t } => weight_map_sampled(src, dst, bins, width, s_h, s_t),
    }
}

/// Two consecutive RS frames with a displacement field spanning both
/// exposures.
#[derive(Debug, Clone)]
pub struct FramePairContext {
    pub r0: Frame,
    pub r1: Frame,
    pub field: DisplacementField,
    pub weight_mode: WeightMapMode,
}

impl FramePairContext {
    pub fn new(r0: Frame, r1: Frame, field: DisplacementField) -> Result<Self> {
        if !r0.same_dims(&r1) {
            return Err(Error::DimensionMismatch("RS frame pair".into()));
        }
        let m0 = rs_model(&r0)?;
        let m1 = rs_model(&r1)?;
        if field.height() != r0.height() || field.width() != r0.width() {
            return Err(Error::DimensionMismatch(format!(
                "field {}x{} vs frames {}x{}",
                field.height(),
                field.width(),
                r0.height(),
                r0.width()
            )));
        }
        let bins = field.bins;
        let tol = 1e-9 * (bins.t1 - bins.t0).abs();
        for m in [&m0, &m1] {
            let (lo, hi) = m.time_range();
            if lo < bins.t0 - tol || hi > bins.t1 + tol {
                return Err(Error::Inconsistent(format!(
                    "exposure [{lo}, {hi}] outside field window [{}, {}]",
                    bins.t0, bins.t1
                )));
            }
        }
        Ok(Self {
            r0,
            r1,
            field,
            weight_mode: WeightMapMode::Analytic,
        })
    }

    pub fn with_weight_mode(mut self, mode: WeightMapMode) -> Self {
        self.weight_mode = mode;
        self
    }

    pub fn model0(&self) -> ExposureModel {
        self.r0.exposure.expect("validated at construction")
    }

    pub fn model1(&self) -> ExposureModel {
        self.r1.exposure.expect("validated at construction")
    }

    pub fn bins(&self) -> TimeBins {
        self.field.bins
    }

    pub(crate) fn check_time_in_window(&self, t: f64) -> Result<()> {
        let bins = self.bins();
        let tol = 1e-9 * (bins.t1 - bins.t0).abs();
        if t < bins.t0 - tol || t > bins.t1 + tol {
            return Err(Error::Inconsistent(format!(
                "target time {t} outside field window [{}, {}]",
                bins.t0, bins.t1
            )));
        }
        Ok(())
    }

    fn gs_model(&self, t_g: f64) -> Result<ExposureModel> {
        ExposureModel::global(t_g, self.r0.height())
    }
}

fn rs_model(frame: &Frame) -> Result<ExposureModel> {
    match frame.exposure {
        Some(m) if matches!(m.kind, crate::exposure::ShutterKind::RollingShutter { .. }) => {
            if m.height != frame.height() {
                return Err(Error::DimensionMismatch(format!(
                    "exposure height {} vs frame height {}",
                    m.height,
                    frame.height()
                )));
            }
            Ok(m)
        }
        _ => Err(Error::InvalidArgument(
            "context frames need rolling-shutter exposure models".into(),
        )),
    }
}

/// Contract the displacement field with a weight map along the temporal
/// axis: `F(h, w) = sum_i D[:, i, h, w] * M[i, h, w]`.
pub fn contract_flow(field: &DisplacementField, map: &WeightMap) -> Result<FlowMap> {
    let (h, w, t) = (field.height(), field.width(), field.time_bins());
    if map.bins() != t || map.height() != h || map.width() != w {
        return Err(Error::DimensionMismatch(format!(
            "field 2x{t}x{h}x{w} vs map {}x{}x{}",
            map.bins(),
            map.height(),
            map.width()
        )));
    }
    let mut dx = vec![0.0; h * w];
    let mut dy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut ax = 0.0;
            let mut ay = 0.0;
            for i in 0..t {
                let m = map.at(i, y, x);
                ax += field.at(0, i, y, x) * m;
                ay += field.at(1, i, y, x) * m;
            }
            let j = y * w + x;
            dx[j] = ax;
            dy[j] = ay;
        }
    }
    FlowMap::from_planes(h, w, dx, dy)
}

/// Both RS-to-GS warp candidates for one latent GS time.
#[derive(Debug, Clone)]
pub struct RsToGs {
    pub cand0: Frame,
    pub cand1: Frame,
    pub mask0: ValidityMask,
    pub mask1: ValidityMask,
    pub flow0: FlowMap,
    pub flow1: FlowMap,
}

/// Warp both RS frames onto the GS grid at `t_g` (Eq. flow contraction +
/// backward warp).
pub fn rs_to_gs(ctx: &FramePairContext, t_g: f64) -> Result<RsToGs> {
    ctx.check_time_in_window(t_g)?;
    let gs = ctx.gs_model(t_g)?;
    let bins = ctx.bins();
    let m0 = build_weight_map(&ctx.model0(), &gs, &bins, ctx.r0.width(), ctx.weight_mode)?;
    let m1 = build_weight_map(&ctx.model1(), &gs, &bins, ctx.r0.width(), ctx.weight_mode)?;
    rs_to_gs_with_maps(ctx, t_g, &m0, &m1)
}

pub(crate) fn rs_to_gs_with_maps(
    ctx: &FramePairContext,
    t_g: f64,
    m0: &WeightMap,
    m1: &WeightMap,
) -> Result<RsToGs> {
    let flow0 = contract_flow(&ctx.field, m0)?;
    let flow1 = contract_flow(&ctx.field, m1)?;
    let (mut cand0, mask0) = warp_backward(&ctx.r0, &flow0)?;
    let (mut cand1, mask1) = warp_backward(&ctx.r1, &flow1)?;
    let gs = ctx.gs_model(t_g)?;
    cand0.timestamp = t_g;
    cand0.exposure = Some(gs);
    cand1.timestamp = t_g;
    cand1.exposure = Some(gs);
    Ok(RsToGs {
        cand0,
        cand1,
        mask0,
        mask1,
        flow0,
        flow1,
    })
}

/// Per-pixel convex weight of the r0-derived candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl OcclusionMap {
    pub fn uniform(height: usize, width: usize, v: f64) -> Self {
        Self {
            height,
            width,
            data: vec![v; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

const OCCLUSION_SIGMA: f64 = 1.0;
const OCCLUSION_EPS: f64 = 1e-6;

/// Occlusion weighting from forward-backward flow consistency.
///
/// `c_i(p) = || F_gri(p) + F_rig(p + F_gri(p)) ||`; candidates with lower
/// inconsistency get exponentially more weight. Pixels invalid in both
/// candidates fall back to 0.5.
pub fn estimate_occlusion(
    f_g_r0: &FlowMap,
    f_r0_g: &FlowMap,
    f_g_r1: &FlowMap,
    f_r1_g: &FlowMap,
    mask0: &ValidityMask,
    mask1: &ValidityMask,
) -> Result<OcclusionMap> {
    let (h, w) = (f_g_r0.height(), f_g_r0.width());
    for f in [f_r0_g, f_g_r1, f_r1_g] {
        if f.height() != h || f.width() != w {
            return Err(Error::DimensionMismatch("occlusion flows".into()));
        }
    }
    if mask0.height() != h || mask0.width() != w || mask1.height() != h || mask1.width() != w {
        return Err(Error::DimensionMismatch("occlusion masks".into()));
    }
    let mut data = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let c = |fg: &FlowMap, fr: &FlowMap| {
                let (gx, gy) = fg.at(y, x);
                let (rx, ry) = fr.sample_clamped(x as f64 + gx, y as f64 + gy);
                ((gx + rx) * (gx + rx) + (gy + ry) * (gy + ry)).sqrt()
            };
            let m0 = f64::from(u8::from(mask0.get(y, x)));
            let m1 = f64::from(u8::from(mask1.get(y, x)));
            data[y * w + x] = if m0 == 0.0 && m1 == 0.0 {
                0.5
            } else {
                let w0 = m0 * (-c(f_g_r0, f_r0_g) / OCCLUSION_SIGMA).exp();
                let w1 = m1 * (-c(f_g_r1, f_r1_g) / OCCLUSION_SIGMA).exp();
                w0 / (w0 + w1 + OCCLUSION_EPS)
            };
        }
    }
    Ok(OcclusionMap {
        height: h,
        width: w,
        data,
    })
}

/// Pixelwise convex combination `O * cand0 + (1 - O) * cand1`.
pub fn fuse_gs(cand0: &Frame, cand1: &Frame, occlusion: &OcclusionMap) -> Result<Frame> {
    if !cand0.same_dims(cand1)
        || cand0.height() != occlusion.height()
        || cand0.width() != occlusion.width()
    {
        return Err(Error::DimensionMismatch("fusion inputs".into()));
    }
    let mut out = cand0.clone();
    let c = out.channels();
    for y in 0..out.height() {
        for x in 0..out.width() {
            let o = occlusion.at(y, x);
            for ch in 0..c {
                let a = cand0.at(y, x, ch);
                let b = cand1.at(y, x, ch);
                // b + o*(a-b) keeps equal candidates bit-exact; the o == 1
                // endpoint is handled separately for the same reason.
                let v = if o == 1.0 { a } else { b + o * (a - b) };
                out.set(y, x, ch, v);
            }
        }
    }
    Ok(out)
}

/// A fused latent GS frame with its supporting products.
#[derive(Debug, Clone)]
pub struct LatentGs {
    pub frame: Frame,
    /// Union of the two candidates' warp validity.
    pub validity: ValidityMask,
    pub occlusion: OcclusionMap,
    pub parts: RsToGs,
}

/// Full latent-frame generation at `t_g`: both candidates, occlusion from
/// flow consistency, convex fusion.
pub fn latent_gs(ctx: &FramePairContext, t_g: f64) -> Result<LatentGs> {
    let parts = rs_to_gs(ctx, t_g)?;
    latent_from_parts(parts)
}

pub(crate) fn latent_from_parts(parts: RsToGs) -> Result<LatentGs> {
    let neg = |f: &FlowMap| {
        FlowMap::from_planes(
            f.height(),
            f.width(),
            f.dx().iter().map(|v| -v).collect(),
            f.dy().iter().map(|v| -v).collect(),
        )
        .expect("negation preserves validity")
    };
    let g_r0 = neg(&parts.flow0);
    let g_r1 = neg(&parts.flow1);
    let occlusion = estimate_occlusion(
        &g_r0,
        &parts.flow0,
        &g_r1,
        &parts.flow1,
        &parts.mask0,
        &parts.mask1,
    )?;
    let frame = fuse_gs(&parts.cand0, &parts.cand1, &occlusion)?;
    let validity = parts.mask0.or(&parts.mask1);
    Ok(LatentGs {
        frame,
        validity,
        occlusion,
        parts,
    })
}

/// Which RS frame a GS-to-RS (or RS-to-RS) warp targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsTarget {
    R0,
    R1,
}

/// Warp a latent GS frame (timestamped at its exposure time) back onto one
/// of the RS grids using the negated weight map.
pub fn gs_to_rs(
    i_g: &Frame,
    ctx: &FramePairContext,
    target: RsTarget,
) -> Result<(Frame, ValidityMask)> {
    let t_g = i_g.timestamp;
    ctx.check_time_in_window(t_g)?;
    let gs = ctx.gs_model(t_g)?;
    let rs = match target {
        RsTarget::R0 => ctx.model0(),
        RsTarget::R1 => ctx.model1(),
    };
    let m_r_g = build_weight_map(&rs, &gs, &ctx.bins(), i_g.width(), ctx.weight_mode)?;
    let flow = contract_flow(&ctx.field, &m_r_g.negate())?;
    let (mut out, mask) = warp_backward(i_g, &flow)?;
    out.timestamp = rs.mid_time();
    out.exposure = Some(rs);
    Ok((out, mask))
}

/// Direction of an RS-to-RS warp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsDirection {
    R1ToR0,
    R0ToR1,
}

/// Warp one input RS frame onto the other's grid through the field.
pub fn rs_to_rs(ctx: &FramePairContext, direction: RsDirection) -> Result<(Frame, ValidityMask)> {
    // M_{r1->r0} is built once; the reverse map is its negation.
    let m10 = build_weight_map(
        &ctx.model1(),
        &ctx.model0(),
        &ctx.bins(),
        ctx.r0.width(),
        ctx.weight_mode,
    )?;
    let (src, map, dst_model) = match direction {
        RsDirection::R1ToR0 => (&ctx.r1, m10, ctx.model0()),
        RsDirection::R0ToR1 => (&ctx.r0, m10.negate(), ctx.model1()),
    };
    let flow = contract_flow(&ctx.field, &map)?;
    let (mut out, mask) = warp_backward(src, &flow)?;
    out.timestamp = dst_model.mid_time();
    out.exposure = Some(dst_model);
    Ok((out, mask))
}

/// Latent GS timestamps for a K-times interpolation: evenly spaced from the
/// mid-row time of r0 to the mid-row time of r1.
pub fn interpolation_times(ctx: &FramePairContext, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "interpolation factor must be >= 2, got {k}"
        )));
    }
    let a = ctx.model0().mid_time();
    let b = ctx.model1().mid_time();
    Ok((0..k)
        .map(|j| a + j as f64 * (b - a) / (k - 1) as f64)
        .collect())
}

/// Generate K latent GS frames spanning the two RS mid-row times.
pub fn interpolate_sequence(ctx: &FramePairContext, k: usize) -> Result<Vec<LatentGs>> {
    interpolation_times(ctx, k)?
        .into_iter()
        .map(|t| latent_gs(ctx, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::weight_map_analytic;
    use crate::field::{oracle_field, MotionModel};

    fn rs_pair_static(h: usize, w: usize) -> (Frame, Frame) {
        let img = Frame::from_fn(h, w, |y, x| ((y * 13 + x * 7) % 17) as f64 / 17.0);
        let m0 = ExposureModel::rolling(0.0, 1.0, h).unwrap();
        let m1 = ExposureModel::rolling(1.2, 2.2, h).unwrap();
        (
            img.clone().with_timestamp(0.5).with_exposure(m0),
            img.with_timestamp(1.7).with_exposure(m1),
        )
    }

    fn zero_ctx(h: usize, w: usize) -> FramePairContext {
        let (r0, r1) = rs_pair_static(h, w);
        let bins = TimeBins::new(0.0, 2.2, 4).unwrap();
        let field = DisplacementField::zeros(bins, h, w);
        FramePairContext::new(r0, r1, field).unwrap()
    }

    #[test]
    fn contract_zero_map_gives_zero_flow() {
        let ctx = zero_ctx(6, 6);
        let gs = ExposureModel::global(0.5, 6).unwrap();
        let src = ctx.model0();
        // src == dst times nowhere, but a zero field contracts to zero anyway.
        let m = weight_map_analytic(&src, &gs, &ctx.bins(), 6).unwrap();
        let f = contract_flow(&ctx.field, &m).unwrap();
        assert!(f.dx().iter().chain(f.dy()).all(|&v| v == 0.0));
    }

    #[test]
    fn contract_hand_case() {
        // D constant (1, 0); weights on row 0 are (-1, 0) over T=2 bins.
        let bins = TimeBins::new(0.0, 1.0, 2).unwrap();
        let mut field = DisplacementField::zeros(bins, 3, 4);
        for bin in 0..2 {
            for y in 0..3 {
                for x in 0..4 {
                    field.set(0, bin, y, x, 1.0);
                }
            }
        }
        let src = ExposureModel::rolling(0.0, 1.0, 3).unwrap();
        let dst = ExposureModel::global(0.5, 3).unwrap();
        let m = weight_map_analytic(&src, &dst, &bins, 4).unwrap();
        let f = contract_flow(&field, &m).unwrap();
        for x in 0..4 {
            assert_eq!(f.at(0, x), (-1.0, 0.0));
            assert_eq!(f.at(1, x), (0.0, 0.0));
            assert_eq!(f.at(2, x), (1.0, 0.0));
        }
    }

    #[test]
    fn contract_linear_in_field() {
        let bins = TimeBins::new(0.0, 1.0, 3).unwrap();
        let mut f1 = DisplacementField::zeros(bins, 4, 4);
        let mut f2 = DisplacementField::zeros(bins, 4, 4);
        for (i, v) in f1.data_mut().iter_mut().enumerate() {
            *v = ((i * 7) % 5) as f64 / 3.0;
        }
        for (i, v) in f2.data_mut().iter_mut().enumerate() {
            *v = ((i * 11) % 13) as f64 / 9.0;
        }
        let mut sum = f1.clone();
        for (a, b) in sum.data_mut().iter_mut().zip(f2.data()) {
            *a += b;
        }
        let src = ExposureModel::rolling(0.1, 0.9, 4).unwrap();
        let dst = ExposureModel::global(0.5, 4).unwrap();
        let m = weight_map_analytic(&src, &dst, &bins, 4).unwrap();
        let c1 = contract_flow(&f1, &m).unwrap();
        let c2 = contract_flow(&f2, &m).unwrap();
        let cs = contract_flow(&sum, &m).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let (a, b) = (c1.at(y, x), c2.at(y, x));
                let s = cs.at(y, x);
                assert!((s.0 - (a.0 + b.0)).abs() < 1e-12);
                assert!((s.1 - (a.1 + b.1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rs_to_gs_zero_field_identity() {
        let ctx = zero_ctx(5, 7);
        let out = rs_to_gs(&ctx, 1.0).unwrap();
        assert_eq!(out.cand0.data(), ctx.r0.data());
        assert_eq!(out.cand1.data(), ctx.r1.data());
        assert_eq!(out.mask0.count_valid(), 35);
    }

    #[test]
    fn rs_to_gs_row_anchor_is_bit_exact() {
        // Random field, but t_g equals row 2's exposure time of r0: that
        // row's weights vanish, so candidate row 2 == source row 2 exactly.
        let (r0, r1) = rs_pair_static(6, 5);
        let bins = TimeBins::new(0.0, 2.2, 5).unwrap();
        let mut field = DisplacementField::zeros(bins, 6, 5);
        for (i, v) in field.data_mut().iter_mut().enumerate() {
            *v = (((i * 29) % 23) as f64 - 11.0) / 7.0;
        }
        let ctx = FramePairContext::new(r0, r1, field).unwrap();
        let h_row = 2;
        let t_g = ctx.model0().row_time(h_row).unwrap();
        let out = rs_to_gs(&ctx, t_g).unwrap();
        for x in 0..5 {
            assert_eq!(out.cand0.at(h_row, x, 0), ctx.r0.at(h_row, x, 0));
        }
    }

    #[test]
    fn rs_to_gs_out_of_window_errors() {
        let ctx = zero_ctx(4, 4);
        assert!(rs_to_gs(&ctx, 5.0).is_err());
        assert!(rs_to_gs(&ctx, -1.0).is_err());
    }

    #[test]
    fn occlusion_symmetric_case_is_half() {
        let z = FlowMap::zeros(4, 4);
        let all = ValidityMask::filled(4, 4, true);
        let o = estimate_occlusion(&z, &z, &z, &z, &all, &all).unwrap();
        for v in o.data() {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn occlusion_invalid_candidate_excluded() {
        let z = FlowMap::zeros(3, 3);
        let none = ValidityMask::filled(3, 3, false);
        let all = ValidityMask::filled(3, 3, true);
        let o = estimate_occlusion(&z, &z, &z, &z, &none, &all).unwrap();
        for v in o.data() {
            assert!(*v < 1e-5, "O should collapse to the valid candidate");
        }
        // Both invalid: neutral 0.5.
        let o2 = estimate_occlusion(&z, &z, &z, &z, &none, &none).unwrap();
        for v in o2.data() {
            assert_eq!(*v, 0.5);
        }
    }

    #[test]
    fn occlusion_softmin_value() {
        // c0 = 0, c1 = 2*sigma: O = 1 / (1 + e^{-2}) ~ 0.8808.
        let z = FlowMap::zeros(2, 2);
        let g1 = FlowMap::constant(2, 2, 2.0, 0.0);
        // F_r1g == 0 everywhere, so c1 = |F_g_r1 + 0| = 2.
        let all = ValidityMask::filled(2, 2, true);
        let o = estimate_occlusion(&z, &z, &g1, &z, &all, &all).unwrap();
        let expect = 1.0 / (1.0 + (-2.0f64).exp());
        for v in o.data() {
            assert!((v - expect).abs() < 1e-5, "{v} vs {expect}");
        }
        assert!((expect - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn fuse_examples() {
        let a = Frame::from_fn(3, 3, |y, x| (y + x) as f64 / 4.0);
        let same = fuse_gs(&a, &a, &OcclusionMap::uniform(3, 3, 0.3)).unwrap();
        assert_eq!(same.data(), a.data());

        let b = Frame::zeros(3, 3, 1);
        let all_a = fuse_gs(&a, &b, &OcclusionMap::uniform(3, 3, 1.0)).unwrap();
        assert_eq!(all_a.data(), a.data());

        let mut ones = Frame::zeros(3, 3, 1);
        ones.data_mut().fill(1.0);
        let mixed = fuse_gs(&b, &ones, &OcclusionMap::uniform(3, 3, 0.25)).unwrap();
        for v in mixed.data() {
            assert!((v - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn fusion_stays_within_candidate_envelope() {
        let a = Frame::from_fn(4, 4, |y, x| ((y * 5 + x) % 7) as f64 / 7.0);
        let b = Frame::from_fn(4, 4, |y, x| ((y + x * 3) % 5) as f64 / 5.0);
        let o = OcclusionMap::uniform(4, 4, 0.37);
        let f = fuse_gs(&a, &b, &o).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let (lo, hi) = (
                    a.at(y, x, 0).min(b.at(y, x, 0)),
                    a.at(y, x, 0).max(b.at(y, x, 0)),
                );
                let v = f.at(y, x, 0);
                assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn gs_to_rs_zero_field_identity() {
        let ctx = zero_ctx(5, 5);
        let g = latent_gs(&ctx, 1.1).unwrap();
        let (back, mask) = gs_to_rs(&g.frame, &ctx, RsTarget::R0).unwrap();
        assert_eq!(back.data(), g.frame.data());
        assert_eq!(mask.count_valid(), 25);
    }

    #[test]
    fn rs_to_rs_static_identity() {
        let ctx = zero_ctx(4, 6);
        let (to_r0, _) = rs_to_rs(&ctx, RsDirection::R1ToR0).unwrap();
        assert_eq!(to_r0.data(), ctx.r1.data());
        let (to_r1, _) = rs_to_rs(&ctx, RsDirection::R0ToR1).unwrap();
        assert_eq!(to_r1.data(), ctx.r0.data());
    }

    #[test]
    fn interpolation_times_span_mid_rows() {
        let ctx = zero_ctx(4, 4);
        let ts = interpolation_times(&ctx, 2).unwrap();
        assert!((ts[0] - 0.5).abs() < 1e-12 && (ts[1] - 1.7).abs() < 1e-12);
        let ts4 = interpolation_times(&ctx, 4).unwrap();
        assert_eq!(ts4.len(), 4);
        assert!((ts4[0] - 0.5).abs() < 1e-12);
        assert!((ts4[3] - 1.7).abs() < 1e-12);
        assert!(interpolation_times(&ctx, 1).is_err());
    }

    #[test]
    fn interpolate_static_scene_reproduces_frame() {
        let ctx = zero_ctx(5, 5);
        let frames = interpolate_sequence(&ctx, 3).unwrap();
        for f in &frames {
            assert_eq!(f.frame.data(), ctx.r0.data());
        }
    }

    #[test]
    fn round_trip_with_oracle_translation_field() {
        // Physically consistent moving scene; the 35 dB quantitative gate
        // lives in the integration suite at full size.
        let h = 24;
        let w = 24;
        let scene = crate::synth::Scene::new(
            crate::synth::smooth_texture(h, w, 42),
            0.0,
            MotionModel::Translation { vx: 1.5, vy: 0.0 },
        );
        let m0 = ExposureModel::rolling(0.0, 1.0, h).unwrap();
        let m1 = ExposureModel::rolling(1.0, 2.0, h).unwrap();
        let bins = TimeBins::new(0.0, 2.0, 4).unwrap();
        let field = oracle_field(&scene.motion, &bins, h, w).unwrap();
        let r0 = scene.render_rs(&m0).unwrap();
        let r1 = scene.render_rs(&m1).unwrap();
        let ctx = FramePairContext::new(r0, r1, field).unwrap();
        let g = latent_gs(&ctx, 1.0).unwrap();
        let (back, mask) = gs_to_rs(&g.frame, &ctx, RsTarget::R0).unwrap();
        let ok = crate::metrics::psnr_masked(&back, &ctx.r0, &mask.and(&g.validity)).unwrap();
        assert!(ok > 30.0, "round trip PSNR {ok}");
    }
}
