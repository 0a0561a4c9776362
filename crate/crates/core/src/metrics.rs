//! Pixel-space losses and image quality metrics.

use crate::error::{Error, Result};
use crate::frame::{Frame, ValidityMask};

/// PSNR reported for a zero-MSE (or numerically indistinguishable) pair.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Robust penalty `sqrt(r^2 + eps^2)` averaged over all samples.
///
/// Symmetric in its arguments and bounded below by `eps`.
pub fn charbonnier(a: &Frame, b: &Frame, eps: f64) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch("charbonnier frames".into()));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("charbonnier eps {eps}")));
    }
    let mut sum = 0.0;
    for (va, vb) in a.data().iter().zip(b.data()) {
        let r = va - vb;
        sum += (r * r + eps * eps).sqrt();
    }
    Ok(sum / a.data().len() as f64)
}

/// Charbonnier restricted to pixels marked valid. Invalid pixels are excluded
/// from the mean; an empty mask yields the `eps` floor.
pub fn charbonnier_masked(a: &Frame, b: &Frame, mask: &ValidityMask, eps: f64) -> Result<f64> {
    if !a.same_dims(b) || a.height() != mask.height() || a.width() != mask.width() {
        return Err(Error::DimensionMismatch("charbonnier_masked inputs".into()));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("charbonnier eps {eps}")));
    }
    let c = a.channels();
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if !mask.get(y, x) {
                continue;
            }
            for ch in 0..c {
                let r = a.at(y, x, ch) - b.at(y, x, ch);
                sum += (r * r + eps * eps).sqrt();
            }
            count += c;
        }
    }
    if count == 0 {
        return Ok(eps);
    }
    Ok(sum / count as f64)
}

fn mse_luminance(a: &Frame, b: &Frame) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::DimensionMismatch("metric frames".into()));
    }
    let (la, lb) = (a.luminance(), b.luminance());
    let mut sum = 0.0;
    for (va, vb) in la.data().iter().zip(lb.data()) {
        let r = va - vb;
        sum += r * r;
    }
    Ok(sum / la.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB with peak 1, on luminance, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let mse = mse_luminance(a, b)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP_DB))
}

/// PSNR restricted to pixels marked valid in `mask`.
pub fn psnr_masked(a: &Frame, b: &Frame, mask: &ValidityMask) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::DimensionMismatch("metric frames".into()));
    }
    let (la, lb) = (a.luminance(), b.luminance());
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in 0..la.height() {
        for x in 0..la.width() {
            if !mask.get(y, x) {
                continue;
            }
            let r = la.at(y, x, 0) - lb.at(y, x, 0);
            sum += r * r;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("psnr_masked: empty mask".into()));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP_DB))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-mode Gaussian filter; output is (h-10) x (w-10).
fn gauss_valid(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let k = gaussian_kernel();
    let wu = w - SSIM_WINDOW + 1;
    // Horizontal pass.
    let mut tmp = vec![0.0; h * wu];
    for y in 0..h {
        for x in 0..wu {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * plane[y * w + x + i];
            }
            tmp[y * wu + x] = acc;
        }
    }
    let hu = h - SSIM_WINDOW + 1;
    let mut out = vec![0.0; hu * wu];
    for y in 0..hu {
        for x in 0..wu {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * wu + x];
            }
            out[y * wu + x] = acc;
        }
    }
    (out, hu, wu)
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// K1=0.01, K2=0.03, dynamic range 1, computed on luminance.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::DimensionMismatch("ssim frames".into()));
    }
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let la = a.luminance();
    let lb = b.luminance();
    let pa = la.data();
    let pb = lb.data();
    let sq = |p: &[f64]| p.iter().map(|v| v * v).collect::<Vec<_>>();
    let prod: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();

    let (mu_a, hu, wu) = gauss_valid(pa, h, w);
    let (mu_b, _, _) = gauss_valid(pb, h, w);
    let (m_aa, _, _) = gauss_valid(&sq(pa), h, w);
    let (m_bb, _, _) = gauss_valid(&sq(pb), h, w);
    let (m_ab, _, _) = gauss_valid(&prod, h, w);

    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut sum = 0.0;
    for i in 0..hu * wu {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = m_aa[i] - ma * ma;
        let var_b = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        sum += s;
    }
    Ok(sum / (hu * wu) as f64)
}
