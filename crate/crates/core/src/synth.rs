//! Procedural scenes: seeded smooth textures moved by a motion model and
//! rendered as GS frames. Ground-truth source for tests and demo data.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::exposure::ExposureModel;
use crate::event::{simulate_events, synthesize_rs, EventStream};
use crate::field::MotionModel;
use crate::frame::Frame;

/// Band-limited random texture in [0.1, 0.9]: seeded white noise smoothed
/// by repeated box filtering. Smooth enough that bilinear warping is nearly
/// exact, textured enough that photometric losses are informative.
pub fn smooth_texture(height: usize, width: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Frame::from_fn(height, width, |_, _| rng.random::<f64>());
    img = box_blur(&img, 1);
    img = box_blur(&img, 1);
    // Renormalize to a fixed range to keep contrast comparable across seeds.
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in img.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-9);
    for v in img.data_mut() {
        *v = 0.05 + 0.9 * (*v - lo) / span;
    }
    img
}

fn box_blur(img: &Frame, radius: i64) -> Frame {
    let (h, w) = (img.height(), img.width());
    let norm = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    Frame::from_fn(h, w, |y, x| {
        let mut acc = 0.0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                acc += img.at(yy, xx, 0);
            }
        }
        acc / norm
    })
}

/// A textured plane moving under a motion model; `base` is the scene at
/// `t_ref`.
#[derive(Debug, Clone)]
pub struct Scene {
    pub base: Frame,
    pub t_ref: f64,
    pub motion: MotionModel,
}

impl Scene {
    pub fn new(base: Frame, t_ref: f64, motion: MotionModel) -> Self {
        Self {
            base,
            t_ref,
            motion,
        }
    }

    /// Render the GS frame at time `t`: content at pixel `p` came from
    /// `p + displacement(p, t, t_ref)` in the base image.
    pub fn render_gs(&self, t: f64) -> Frame {
        let (h, w) = (self.base.height(), self.base.width());
        let mut out = Frame::zeros(h, w, self.base.channels());
        let c = self.base.channels();
        let mut px = vec![0.0; c];
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = self.motion.displacement((x as f64, y as f64), t, self.t_ref);
                self.base
                    .sample_clamped(x as f64 + dx, y as f64 + dy, &mut px);
                for ch in 0..c {
                    out.set(y, x, ch, px[ch]);
                }
            }
        }
        out.timestamp = t;
        out
    }

    /// Render a dense GS stack at evenly spaced times over `[t0, t1]`.
    pub fn render_sequence(&self, t0: f64, t1: f64, count: usize) -> Vec<Frame> {
        (0..count)
            .map(|i| {
                let t = t0 + (t1 - t0) * i as f64 / (count - 1).max(1) as f64;
                self.render_gs(t)
            })
            .collect()
    }

    /// Compose an RS frame directly from the scene at the model's row
    /// times (dense-stack limit of row selection).
    pub fn render_rs(&self, model: &ExposureModel) -> Result<Frame> {
        let (h, w) = (self.base.height(), self.base.width());
        let mut out = Frame::zeros(h, w, self.base.channels());
        let c = self.base.channels();
        for row in 0..h {
            let t = model.row_time(row)?;
            let gs = self.render_gs(t);
            for x in 0..w {
                for ch in 0..c {
                    out.set(row, x, ch, gs.at(row, x, ch));
                }
            }
        }
        out.timestamp = model.mid_time();
        out.exposure = Some(*model);
        Ok(out)
    }
}

/// A complete synthetic RS + events capture of a scene over two adjacent
/// exposures.
#[derive(Debug, Clone)]
pub struct SyntheticCapture {
    pub scene: Scene,
    pub r0: Frame,
    pub r1: Frame,
    pub events: EventStream,
    pub gs_stack: Vec<Frame>,
}

/// Simulate two consecutive RS frames plus events from a moving texture.
///
/// The RS exposures are `[t0, t0+span]` and `[t0+span+gap, ...]`; `gs_fps`
/// controls the density of the underlying GS stack used for both the RS
/// composition and the event simulation.
pub fn capture_pair(
    scene: &Scene,
    t0: f64,
    span: f64,
    gap: f64,
    gs_fps: f64,
    threshold_c: f64,
) -> Result<(SyntheticCapture, ExposureModel, ExposureModel)> {
    let h = scene.base.height();
    let m0 = ExposureModel::rolling(t0, t0 + span, h)?;
    let m1 = ExposureModel::rolling(t0 + span + gap, t0 + 2.0 * span + gap, h)?;
    let t_end = t0 + 2.0 * span + gap;
    let count = ((t_end - t0) * gs_fps).ceil() as usize + 1;
    let stack = scene.render_sequence(t0, t_end, count.max(2));
    let r0 = synthesize_rs(&stack, &m0)?;
    let r1 = synthesize_rs(&stack, &m1)?;
    let events = simulate_events(&stack, threshold_c, 1e-3)?;
    Ok((
        SyntheticCapture {
            scene: scene.clone(),
            r0,
            r1,
            events,
            gs_stack: stack,
        },
        m0,
        m1,
    ))
}
