//! Classical displacement-field estimation from event images via dense
//! pyramidal Lucas-Kanade.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::DisplacementField;
use crate::frame::{FlowMap, Frame};
use crate::voxel::{bin_event_images, VoxelGrid};

const PYRAMID_LEVELS: usize = 3;
const WINDOW_RADIUS: usize = 3; // 7x7 window
const ITERS_PER_LEVEL: usize = 5;
const MIN_EIGENVALUE: f64 = 1e-6;

/// 3x3 box smoothing with border clamping.
fn box3(img: &Frame) -> Frame {
    let (h, w) = (img.height(), img.width());
    let mut out = Frame::zeros(h, w, 1);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    acc += img.at(yy, xx, 0);
                }
            }
            out.set(y, x, 0, acc / 9.0);
        }
    }
    out
}

/// 2x2 average downsampling (floor semantics on odd sizes).
fn downsample2(img: &Frame) -> Frame {
    let (h, w) = (img.height() / 2, img.width() / 2);
    let mut out = Frame::zeros(h, w, 1);
    for y in 0..h {
        for x in 0..w {
            let v = (img.at(2 * y, 2 * x, 0)
                + img.at(2 * y, 2 * x + 1, 0)
                + img.at(2 * y + 1, 2 * x, 0)
                + img.at(2 * y + 1, 2 * x + 1, 0))
                / 4.0;
            out.set(y, x, 0, v);
        }
    }
    out
}

fn pyramid(img: &Frame) -> Vec<Frame> {
    let mut levels = vec![img.clone()];
    while levels.len() < PYRAMID_LEVELS {
        let last = levels.last().unwrap();
        if last.height() / 2 < 2 * WINDOW_RADIUS + 1 || last.width() / 2 < 2 * WINDOW_RADIUS + 1 {
            break;
        }
        levels.push(downsample2(last));
    }
    levels
}

/// Central-difference spatial gradients with clamped borders.
fn gradients(img: &Frame) -> (Frame, Frame) {
    let (h, w) = (img.height(), img.width());
    let mut gx = Frame::zeros(h, w, 1);
    let mut gy = Frame::zeros(h, w, 1);
    for y in 0..h {
        for x in 0..w {
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            let yu = y.saturating_sub(1);
            let yd = (y + 1).min(h - 1);
            gx.set(y, x, 0, 0.5 * (img.at(y, xr, 0) - img.at(y, xl, 0)));
            gy.set(y, x, 0, 0.5 * (img.at(yd, x, 0) - img.at(yu, x, 0)));
        }
    }
    (gx, gy)
}

struct LevelTensor {
    gxx: Vec<f64>,
    gxy: Vec<f64>,
    gyy: Vec<f64>,
    min_eig: Vec<f64>,
}

fn structure_tensor(gx: &Frame, gy: &Frame) -> LevelTensor {
    let (h, w) = (gx.height(), gx.width());
    let r = WINDOW_RADIUS as i64;
    let mut t = LevelTensor {
        gxx: vec![0.0; h * w],
        gxy: vec![0.0; h * w],
        gyy: vec![0.0; h * w],
        min_eig: vec![0.0; h * w],
    };
    for y in 0..h {
        for x in 0..w {
            let mut xx = 0.0;
            let mut xy = 0.0;
            let mut yy = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let yv = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let xv = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let a = gx.at(yv, xv, 0);
                    let b = gy.at(yv, xv, 0);
                    xx += a * a;
                    xy += a * b;
                    yy += b * b;
                }
            }
            let i = y * w + x;
            t.gxx[i] = xx;
            t.gxy[i] = xy;
            t.gyy[i] = yy;
            let tr = xx + yy;
            let d = ((xx - yy) * (xx - yy) + 4.0 * xy * xy).sqrt();
            t.min_eig[i] = 0.5 * (tr - d);
        }
    }
    t
}

/// Dense pyramidal Lucas-Kanade flow from `i0` to `i1`: `i1(p + d(p)) ~
/// i0(p)`. Pixels whose finest-level structure tensor is degenerate get
/// exactly zero flow.
pub fn dense_lk_flow(i0: &Frame, i1: &Frame) -> Result<FlowMap> {
    if i0.height() != i1.height() || i0.width() != i1.width() {
        return Err(Error::DimensionMismatch("lk image pair".into()));
    }
    let p0 = pyramid(i0);
    let p1 = pyramid(i1);
    let levels = p0.len();

    let mut flow = FlowMap::zeros(1, 1);
    for level in (0..levels).rev() {
        let im0 = &p0[level];
        let im1 = &p1[level];
        let (h, w) = (im0.height(), im0.width());
        // Propagate the coarser estimate onto this level's grid.
        let mut cur = FlowMap::zeros(h, w);
        if level < levels - 1 {
            for y in 0..h {
                for x in 0..w {
                    let (dx, dy) = flow.sample_clamped(x as f64 / 2.0, y as f64 / 2.0);
                    cur.set(y, x, 2.0 * dx, 2.0 * dy);
                }
            }
        }
        let (gx, gy) = gradients(im0);
        let tensor = structure_tensor(&gx, &gy);
        let r = WINDOW_RADIUS as i64;

        // Solutions beyond this are unobservable within the level and are
        // treated like degenerate pixels.
        let flow_cap = 0.25 * w.min(h) as f64;

        let mut dx_out = vec![0.0; h * w];
        let mut dy_out = vec![0.0; h * w];
        dx_out
            .par_chunks_mut(w)
            .zip(dy_out.par_chunks_mut(w))
            .enumerate()
            .for_each(|(y, (row_dx, row_dy))| {
                let mut px = [0.0];
                for x in 0..w {
                    let i = y * w + x;
                    let (init_dx, init_dy) = cur.at(y, x);
                    let (mut dx, mut dy) = (init_dx, init_dy);
                    if tensor.min_eig[i] >= MIN_EIGENVALUE {
                        let det = tensor.gxx[i] * tensor.gyy[i] - tensor.gxy[i] * tensor.gxy[i];
                        if det.abs() > f64::MIN_POSITIVE {
                            for _ in 0..ITERS_PER_LEVEL {
                                let mut bx = 0.0;
                                let mut by = 0.0;
                                for wy in -r..=r {
                                    for wx in -r..=r {
                                        let yv = (y as i64 + wy).clamp(0, h as i64 - 1) as usize;
                                        let xv = (x as i64 + wx).clamp(0, w as i64 - 1) as usize;
                                        im1.sample_clamped(
                                            xv as f64 + dx,
                                            yv as f64 + dy,
                                            &mut px,
                                        );
                                        let resid = im0.at(yv, xv, 0) - px[0];
                                        bx += gx.at(yv, xv, 0) * resid;
                                        by += gy.at(yv, xv, 0) * resid;
                                    }
                                }
                                dx += (tensor.gyy[i] * bx - tensor.gxy[i] * by) / det;
                                dy += (tensor.gxx[i] * by - tensor.gxy[i] * bx) / det;
                            }
                        }
                    }
                    if dx.hypot(dy) > flow_cap {
                        dx = init_dx;
                        dy = init_dy;
                        if dx.hypot(dy) > flow_cap {
                            dx = 0.0;
                            dy = 0.0;
                        }
                    }
                    row_dx[x] = dx;
                    row_dy[x] = dy;
                }
            });
        if level == 0 {
            for i in 0..h * w {
                if tensor.min_eig[i] < MIN_EIGENVALUE {
                    dx_out[i] = 0.0;
                    dy_out[i] = 0.0;
                }
            }
        }
        flow = FlowMap::from_planes(h, w, dx_out, dy_out)?;
    }
    Ok(flow)
}

/// Estimate the displacement field from a voxel grid: collapse sub-bins to
/// `T+1` event images (absolute value, 3x3 box smoothed), then run dense
/// pyramidal LK between each adjacent pair of images.
pub fn estimate_field_classical(grid: &VoxelGrid) -> Result<DisplacementField> {
    let t = grid.bins.count;
    let images: Vec<Frame> = bin_event_images(grid)
        .into_iter()
        .map(|mut img| {
            for v in img.data_mut() {
                *v = v.abs();
            }
            box3(&img)
        })
        .collect();

    let flows: Vec<FlowMap> = (0..t)
        .into_par_iter()
        .map(|k| dense_lk_flow(&images[k], &images[k + 1]))
        .collect::<Result<_>>()?;

    let (h, w) = (grid.height(), grid.width());
    let mut field = DisplacementField::zeros(grid.bins, h, w);
    for (k, f) in flows.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = f.at(y, x);
                field.set(0, k, y, x, dx);
                field.set(1, k, y, x, dy);
            }
        }
    }
    Ok(field)
}
