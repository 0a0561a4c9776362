//! Self-supervision losses over the displacement field and their analytic
//! gradient.
//!
//! The photometric terms treat the occlusion maps (and warp validity) as
//! fixed inputs: callers compute an [`OcclusionSet`] from some field state
//! and pass it in, so the differentiated landscape is exactly the evaluated
//! one. The optimizer refreshes the set once per run from its init field.

use crate::error::{Error, Result};
use crate::exposure::WeightMap;
use crate::field::{smoothness_grad, smoothness_loss, DisplacementField};
use crate::frame::{FlowMap, Frame, ValidityMask};
use crate::reconstruct::{
    build_weight_map, contract_flow, estimate_occlusion, rs_to_gs_with_maps, FramePairContext,
    OcclusionMap,
};

/// Charbonnier epsilon used by every photometric term.
pub const CHARBONNIER_EPS: f64 = 1e-3;

/// Loss-term weights of the total objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_gs: f64,
    pub lambda_rs: f64,
    pub lambda_f: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_gs: 1.0,
            lambda_rs: 1.0,
            lambda_f: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_gs < 0.0 || self.lambda_rs < 0.0 || self.lambda_f < 0.0 {
            return Err(Error::InvalidArgument("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Raw per-term values plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub field: f64,
    pub rs2rs: f64,
    pub gs2rs: f64,
}

/// Frozen occlusion maps for a set of latent GS times.
#[derive(Debug, Clone)]
pub struct OcclusionSet {
    pub times: Vec<f64>,
    pub maps: Vec<OcclusionMap>,
}

/// Weight maps reused across loss and gradient evaluations; they depend on
/// exposure geometry only, never on the field.
pub(crate) struct PipelineMaps {
    /// Per latent time: (t_g, M_{r0->g}, M_{r1->g}).
    latent: Vec<(f64, WeightMap, WeightMap)>,
    /// M_{r1->r0}; the reverse map is its negation.
    m_r1_r0: WeightMap,
}

pub(crate) fn build_pipeline_maps(
    ctx: &FramePairContext,
    latent_times: &[f64],
) -> Result<PipelineMaps> {
    if latent_times.is_empty() {
        return Err(Error::InvalidArgument("empty latent time set".into()));
    }
    let bins = ctx.bins();
    let w = ctx.r0.width();
    let mut latent = Vec::with_capacity(latent_times.len());
    for &t in latent_times {
        ctx.check_time_in_window(t)?;
        let gs = crate::exposure::ExposureModel::global(t, ctx.r0.height())?;
        let m0 = build_weight_map(&ctx.model0(), &gs, &bins, w, ctx.weight_mode)?;
        let m1 = build_weight_map(&ctx.model1(), &gs, &bins, w, ctx.weight_mode)?;
        latent.push((t, m0, m1));
    }
    let m_r1_r0 = build_weight_map(&ctx.model1(), &ctx.model0(), &bins, w, ctx.weight_mode)?;
    Ok(PipelineMaps { latent, m_r1_r0 })
}

/// Occlusion maps derived from the context's current field at the given
/// latent times.
pub fn compute_occlusions(ctx: &FramePairContext, latent_times: &[f64]) -> Result<OcclusionSet> {
    let maps_geo = build_pipeline_maps(ctx, latent_times)?;
    let mut maps = Vec::with_capacity(latent_times.len());
    for (t, m0, m1) in &maps_geo.latent {
        let parts = rs_to_gs_with_maps(ctx, *t, m0, m1)?;
        let neg = |f: &FlowMap| {
            FlowMap::from_planes(
                f.height(),
                f.width(),
                f.dx().iter().map(|v| -v).collect(),
                f.dy().iter().map(|v| -v).collect(),
            )
            .expect("negation stays finite")
        };
        maps.push(estimate_occlusion(
            &neg(&parts.flow0),
            &parts.flow0,
            &neg(&parts.flow1),
            &parts.flow1,
            &parts.mask0,
            &parts.mask1,
        )?);
    }
    Ok(OcclusionSet {
        times: latent_times.to_vec(),
        maps,
    })
}

#[inline]
fn rho(r: f64) -> f64 {
    (r * r + CHARBONNIER_EPS * CHARBONNIER_EPS).sqrt()
}

#[inline]
fn rho_prime(r: f64) -> f64 {
    r / (r * r + CHARBONNIER_EPS * CHARBONNIER_EPS).sqrt()
}

/// One bilinear-lookup axis: cell corners, fraction, and the derivative
/// scale (zero when the coordinate was clamped to the border).
#[inline]
fn axis_with_grad(v: f64, len: usize) -> (usize, usize, f64, f64) {
    let max = (len - 1) as f64;
    let dscale = if v < 0.0 || v > max { 0.0 } else { 1.0 };
    let vc = v.clamp(0.0, max);
    let mut i0 = vc.floor() as usize;
    if i0 >= len - 1 {
        i0 = len.saturating_sub(2);
    }
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, vc - i0 as f64, dscale)
}

/// Bilinear sample of all channels with spatial derivatives.
#[inline]
fn sample_with_grad(
    src: &Frame,
    x: f64,
    y: f64,
    val: &mut [f64],
    ddx: &mut [f64],
    ddy: &mut [f64],
) {
    let (x0, x1, fx, sx) = axis_with_grad(x, src.width());
    let (y0, y1, fy, sy) = axis_with_grad(y, src.height());
    let c = src.channels();
    let w = src.width();
    let d = src.data();
    let r00 = (y0 * w + x0) * c;
    let r01 = (y0 * w + x1) * c;
    let r10 = (y1 * w + x0) * c;
    let r11 = (y1 * w + x1) * c;
    for ch in 0..c {
        let v00 = d[r00 + ch];
        let v01 = d[r01 + ch];
        let v10 = d[r10 + ch];
        let v11 = d[r11 + ch];
        let top = (1.0 - fx) * v00 + fx * v01;
        let bot = (1.0 - fx) * v10 + fx * v11;
        val[ch] = (1.0 - fy) * top + fy * bot;
        ddx[ch] = ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10)) * sx;
        ddy[ch] = ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01)) * sy;
    }
}

/// Scatter helper when backpropagating a flow adjoint into the field
/// through a weight map: `grad[c, k, y, x] += g_c(y, x) * sign * M[k, y]`.
#[inline]
fn scatter_flow_adjoint(
    grad: &mut [f64],
    field: &DisplacementField,
    map: &WeightMap,
    sign: f64,
    y: usize,
    x: usize,
    gx: f64,
    gy: f64,
) {
    for k in 0..field.time_bins() {
        let m = sign * map.at(k, y, x);
        if m != 0.0 {
            grad[field.index(0, k, y, x)] += gx * m;
            grad[field.index(1, k, y, x)] += gy * m;
        }
    }
}

/// Masked Charbonnier of a single backward warp `src(q + sign*(D (x) M))`
/// against `target`, with optional gradient accumulation.
fn direct_warp_term(
    ctx: &FramePairContext,
    src: &Frame,
    target: &Frame,
    map: &WeightMap,
    sign: f64,
    grad_weight: f64,
    grad: &mut Option<&mut Vec<f64>>,
) -> Result<f64> {
    let field = &ctx.field;
    let flow = contract_flow(field, map)?;
    let (h, w, c) = (src.height(), src.width(), src.channels());
    let xmax = (w - 1) as f64;
    let ymax = (h - 1) as f64;

    // First pass: count valid pixels so the mean's scale is known.
    let mut valid = vec![false; h * w];
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = flow.at(y, x);
            let (sx, sy) = (x as f64 + sign * fx, y as f64 + sign * fy);
            if sx >= 0.0 && sx <= xmax && sy >= 0.0 && sy <= ymax {
                valid[y * w + x] = true;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok(CHARBONNIER_EPS);
    }
    let n_samples = (count * c) as f64;

    let mut val = vec![0.0; c];
    let mut ddx = vec![0.0; c];
    let mut ddy = vec![0.0; c];
    let mut loss = 0.0;
    for y in 0..h {
        for x in 0..w {
            if !valid[y * w + x] {
                continue;
            }
            let (fx, fy) = flow.at(y, x);
            let (sx, sy) = (x as f64 + sign * fx, y as f64 + sign * fy);
            sample_with_grad(src, sx, sy, &mut val, &mut ddx, &mut ddy);
            let mut gx = 0.0;
            let mut gy = 0.0;
            for ch in 0..c {
                let r = val[ch] - target.at(y, x, ch);
                loss += rho(r);
                if grad.is_some() {
                    let a = rho_prime(r) * grad_weight / n_samples;
                    gx += a * ddx[ch];
                    gy += a * ddy[ch];
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                // Sample position moves by `sign` per unit of flow.
                scatter_flow_adjoint(g, field, map, sign, y, x, gx, gy);
            }
        }
    }
    Ok(loss / n_samples)
}

/// Candidate warp with kept derivative planes, for the composed GS-to-RS
/// term.
struct CandWarp {
    value: Frame,
    ddx: Frame,
    ddy: Frame,
    mask: ValidityMask,
}

fn warp_with_grad(src: &Frame, flow: &FlowMap) -> CandWarp {
    let (h, w, c) = (src.height(), src.width(), src.channels());
    let mut value = Frame::zeros(h, w, c);
    let mut ddx = Frame::zeros(h, w, c);
    let mut ddy = Frame::zeros(h, w, c);
    let mut mask = ValidityMask::filled(h, w, false);
    let xmax = (w - 1) as f64;
    let ymax = (h - 1) as f64;
    let mut v = vec![0.0; c];
    let mut gx = vec![0.0; c];
    let mut gy = vec![0.0; c];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = flow.at(y, x);
            let (sx, sy) = (x as f64 + fx, y as f64 + fy);
            mask.set(y, x, sx >= 0.0 && sx <= xmax && sy >= 0.0 && sy <= ymax);
            sample_with_grad(src, sx, sy, &mut v, &mut gx, &mut gy);
            for ch in 0..c {
                value.set(y, x, ch, v[ch]);
                ddx.set(y, x, ch, gx[ch]);
                ddy.set(y, x, ch, gy[ch]);
            }
        }
    }
    CandWarp {
        value,
        ddx,
        ddy,
        mask,
    }
}

/// Both GS-to-RS Charbonnier terms for one latent time (unweighted sum),
/// with optional gradient accumulation. The occlusion map is a fixed input.
fn gs2rs_latent_terms(
    ctx: &FramePairContext,
    m0: &WeightMap,
    m1: &WeightMap,
    occ: &OcclusionMap,
    grad_weight: f64,
    grad: &mut Option<&mut Vec<f64>>,
) -> Result<f64> {
    let field = &ctx.field;
    let (h, w, c) = (ctx.r0.height(), ctx.r0.width(), ctx.r0.channels());
    if occ.height() != h || occ.width() != w {
        return Err(Error::DimensionMismatch("occlusion map".into()));
    }
    let f0 = contract_flow(field, m0)?;
    let f1 = contract_flow(field, m1)?;
    let c0 = warp_with_grad(&ctx.r0, &f0);
    let c1 = warp_with_grad(&ctx.r1, &f1);

    // Fused latent frame and its validity as a samplable plane.
    let mut latent = Frame::zeros(h, w, c);
    let mut vplane = Frame::zeros(h, w, 1);
    for y in 0..h {
        for x in 0..w {
            let o = occ.at(y, x);
            for ch in 0..c {
                let a = c0.value.at(y, x, ch);
                let b = c1.value.at(y, x, ch);
                // Same algebraic form as fuse_gs so the floors stay exact.
                latent.set(y, x, ch, if o == 1.0 { a } else { b + o * (a - b) });
            }
            vplane.set(
                y,
                x,
                0,
                f64::from(u8::from(c0.mask.get(y, x) || c1.mask.get(y, x))),
            );
        }
    }

    let xmax = (w - 1) as f64;
    let ymax = (h - 1) as f64;
    let mut g_latent = vec![0.0; h * w * c];
    let mut total = 0.0;

    for (target, flow_a, map_a) in [(&ctx.r0, &f0, m0), (&ctx.r1, &f1, m1)] {
        // Second hop warps the latent frame back by the negated flow.
        let mut valid = vec![false; h * w];
        let mut count = 0usize;
        let mut vv = [0.0];
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = flow_a.at(y, x);
                let (sx, sy) = (x as f64 - fx, y as f64 - fy);
                if sx >= 0.0 && sx <= xmax && sy >= 0.0 && sy <= ymax {
                    vplane.sample_clamped(sx, sy, &mut vv);
                    if vv[0] > 1.0 - 1e-9 {
                        valid[y * w + x] = true;
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            total += CHARBONNIER_EPS;
            continue;
        }
        let n_samples = (count * c) as f64;
        let mut val = vec![0.0; c];
        let mut ddx = vec![0.0; c];
        let mut ddy = vec![0.0; c];
        let mut loss = 0.0;
        for y in 0..h {
            for x in 0..w {
                if !valid[y * w + x] {
                    continue;
                }
                let (fx, fy) = flow_a.at(y, x);
                let (sx, sy) = (x as f64 - fx, y as f64 - fy);
                sample_with_grad(&latent, sx, sy, &mut val, &mut ddx, &mut ddy);
                let mut gx = 0.0;
                let mut gy = 0.0;
                let mut adjoints = [0.0; 3];
                for ch in 0..c {
                    let r = val[ch] - target.at(y, x, ch);
                    loss += rho(r);
                    if grad.is_some() {
                        let a = rho_prime(r) * grad_weight / n_samples;
                        adjoints[ch] = a;
                        gx += a * ddx[ch];
                        gy += a * ddy[ch];
                    }
                }
                if grad.is_some() {
                    // Position adjoint: s = q - flow_a(q).
                    if let Some(g) = grad.as_deref_mut() {
                        scatter_flow_adjoint(g, field, map_a, -1.0, y, x, gx, gy);
                    }
                    // Value adjoint into the latent frame's corners.
                    let (x0, x1, fx_s, _) = axis_with_grad(sx, w);
                    let (y0, y1, fy_s, _) = axis_with_grad(sy, h);
                    let corners = [
                        (y0, x0, (1.0 - fx_s) * (1.0 - fy_s)),
                        (y0, x1, fx_s * (1.0 - fy_s)),
                        (y1, x0, (1.0 - fx_s) * fy_s),
                        (y1, x1, fx_s * fy_s),
                    ];
                    for (cy, cx, cw) in corners {
                        if cw != 0.0 {
                            for ch in 0..c {
                                g_latent[(cy * w + cx) * c + ch] += adjoints[ch] * cw;
                            }
                        }
                    }
                }
            }
        }
        total += loss / n_samples;
    }

    // Backpropagate the latent-frame adjoint through fusion and both
    // candidate warps.
    if let Some(g) = grad.as_deref_mut() {
        for y in 0..h {
            for x in 0..w {
                let o = occ.at(y, x);
                let mut g0x = 0.0;
                let mut g0y = 0.0;
                let mut g1x = 0.0;
                let mut g1y = 0.0;
                for ch in 0..c {
                    let gl = g_latent[(y * w + x) * c + ch];
                    if gl == 0.0 {
                        continue;
                    }
                    g0x += gl * o * c0.ddx.at(y, x, ch);
                    g0y += gl * o * c0.ddy.at(y, x, ch);
                    g1x += gl * (1.0 - o) * c1.ddx.at(y, x, ch);
                    g1y += gl * (1.0 - o) * c1.ddy.at(y, x, ch);
                }
                if g0x != 0.0 || g0y != 0.0 {
                    scatter_flow_adjoint(g, field, m0, 1.0, y, x, g0x, g0y);
                }
                if g1x != 0.0 || g1y != 0.0 {
                    scatter_flow_adjoint(g, field, m1, 1.0, y, x, g1x, g1y);
                }
            }
        }
    }
    Ok(total)
}

fn check_occ(latent_times: &[f64], occ: &OcclusionSet) -> Result<()> {
    if occ.maps.len() != latent_times.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} occlusion maps for {} latent times",
            occ.maps.len(),
            latent_times.len()
        )));
    }
    for (a, b) in occ.times.iter().zip(latent_times) {
        if a != b {
            return Err(Error::Inconsistent(format!(
                "occlusion set was built for t={a}, loss evaluated at t={b}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn evaluate_with_maps(
    ctx: &FramePairContext,
    weights: &LossWeights,
    maps: &PipelineMaps,
    occ: &OcclusionSet,
    mut grad: Option<&mut Vec<f64>>,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let n = maps.latent.len() as f64;

    let field_term = smoothness_loss(&ctx.field);
    if let Some(g) = grad.as_deref_mut() {
        smoothness_grad(&ctx.field, weights.lambda_f, g);
    }

    let rs_a = direct_warp_term(
        ctx,
        &ctx.r1,
        &ctx.r0,
        &maps.m_r1_r0,
        1.0,
        weights.lambda_rs,
        &mut grad,
    )?;
    let rs_b = direct_warp_term(
        ctx,
        &ctx.r0,
        &ctx.r1,
        &maps.m_r1_r0,
        -1.0,
        weights.lambda_rs,
        &mut grad,
    )?;
    let rs2rs = rs_a + rs_b;

    let mut gs_sum = 0.0;
    for (i, (_, m0, m1)) in maps.latent.iter().enumerate() {
        gs_sum += gs2rs_latent_terms(
            ctx,
            m0,
            m1,
            &occ.maps[i],
            weights.lambda_gs / (2.0 * n),
            &mut grad,
        )?;
    }
    let gs2rs = gs_sum / (2.0 * n);

    let total = weights.lambda_f * field_term + weights.lambda_rs * rs2rs + weights.lambda_gs * gs2rs;
    Ok(LossBreakdown {
        total,
        field: field_term,
        rs2rs,
        gs2rs,
    })
}

/// GS-to-RS reciprocal loss: latent frames are generated with the supplied
/// occlusion maps, warped back to both RS grids, and compared with the
/// inputs under a masked Charbonnier mean.
pub fn loss_gs2rs(
    ctx: &FramePairContext,
    latent_times: &[f64],
    occ: &OcclusionSet,
) -> Result<f64> {
    check_occ(latent_times, occ)?;
    let maps = build_pipeline_maps(ctx, latent_times)?;
    let mut sum = 0.0;
    for (i, (_, m0, m1)) in maps.latent.iter().enumerate() {
        sum += gs2rs_latent_terms(ctx, m0, m1, &occ.maps[i], 0.0, &mut None)?;
    }
    Ok(sum / (2.0 * latent_times.len() as f64))
}

/// RS-to-RS loss: both directional warps, masked Charbonnier, summed.
pub fn loss_rs2rs(ctx: &FramePairContext) -> Result<f64> {
    let m10 = build_weight_map(
        &ctx.model1(),
        &ctx.model0(),
        &ctx.bins(),
        ctx.r0.width(),
        ctx.weight_mode,
    )?;
    let a = direct_warp_term(ctx, &ctx.r1, &ctx.r0, &m10, 1.0, 0.0, &mut None)?;
    let b = direct_warp_term(ctx, &ctx.r0, &ctx.r1, &m10, -1.0, 0.0, &mut None)?;
    Ok(a + b)
}

/// Weighted total objective with per-term breakdown. Occlusion maps are a
/// fixed input (see [`compute_occlusions`]).
pub fn total_loss(
    ctx: &FramePairContext,
    weights: &LossWeights,
    latent_times: &[f64],
    occ: &OcclusionSet,
) -> Result<LossBreakdown> {
    check_occ(latent_times, occ)?;
    let maps = build_pipeline_maps(ctx, latent_times)?;
    evaluate_with_maps(ctx, weights, &maps, occ, None)
}

/// Analytic gradient of [`total_loss`] with respect to every field element,
/// returned in the field's own data layout together with the breakdown.
pub fn grad_total_loss(
    ctx: &FramePairContext,
    weights: &LossWeights,
    latent_times: &[f64],
    occ: &OcclusionSet,
) -> Result<(LossBreakdown, Vec<f64>)> {
    check_occ(latent_times, occ)?;
    let maps = build_pipeline_maps(ctx, latent_times)?;
    let mut grad = vec![0.0; ctx.field.data().len()];
    let breakdown = evaluate_with_maps(ctx, weights, &maps, occ, Some(&mut grad))?;
    Ok((breakdown, grad))
}

/// Pixels whose warp sample coordinates lie within `margin` of a bilinear
/// cell boundary (integer grid lines, including the image border) in any
/// warp of the objective. Gradient checks exclude field elements at these
/// pixels: the loss is only piecewise differentiable there.
pub fn near_cell_boundary_pixels(
    ctx: &FramePairContext,
    latent_times: &[f64],
    margin: f64,
) -> Result<Vec<bool>> {
    let maps = build_pipeline_maps(ctx, latent_times)?;
    let (h, w) = (ctx.r0.height(), ctx.r0.width());
    let mut flagged = vec![false; h * w];
    let mut mark = |flow: &FlowMap, sign: f64| {
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = flow.at(y, x);
                let sx = x as f64 + sign * fx;
                let sy = y as f64 + sign * fy;
                let near = |v: f64| (v - v.round()).abs() < margin;
                if near(sx) || near(sy) {
                    flagged[y * w + x] = true;
                }
            }
        }
    };
    for (_, m0, m1) in &maps.latent {
        let f0 = contract_flow(&ctx.field, m0)?;
        let f1 = contract_flow(&ctx.field, m1)?;
        mark(&f0, 1.0);
        mark(&f0, -1.0);
        mark(&f1, 1.0);
        mark(&f1, -1.0);
    }
    let f10 = contract_flow(&ctx.field, &maps.m_r1_r0)?;
    mark(&f10, 1.0);
    mark(&f10, -1.0);
    Ok(flagged)
}
