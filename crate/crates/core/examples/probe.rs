//! Diagnostic probe for pipeline tuning (not part of the test suite).

use rsevi_core::exposure::TimeBins;
use rsevi_core::field::{oracle_field, MotionModel};
use rsevi_core::lk::estimate_field_classical;
use rsevi_core::loss::LossWeights;
use rsevi_core::metrics::psnr_masked;
use rsevi_core::optim::{optimize_field, OptimizerConfig};
use rsevi_core::reconstruct::{interpolate_sequence, FramePairContext};
use rsevi_core::synth::{capture_pair, smooth_texture, Scene};
use rsevi_core::voxel::voxelize;

const SIZE: usize = 64;

fn mean_psnr(ctx: &FramePairContext, scene: &Scene, k: usize) -> f64 {
    let latents = interpolate_sequence(ctx, k).unwrap();
    latents
        .iter()
        .map(|l| {
            psnr_masked(&l.frame, &scene.render_gs(l.frame.timestamp), &l.validity).unwrap()
        })
        .sum::<f64>()
        / k as f64
}

fn field_err(est: &rsevi_core::field::DisplacementField, oracle: &rsevi_core::field::DisplacementField) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (a, b) in est.data().iter().zip(oracle.data()) {
        let e = (a - b).abs();
        sum += e;
        max = max.max(e);
    }
    (sum / est.data().len() as f64, max)
}

fn main() {
    let scene = Scene::new(
        smooth_texture(SIZE, SIZE, 31),
        0.0,
        MotionModel::Translation { vx: 2.5, vy: 1.5 },
    );
    let (cap, m0, _m1) =
        capture_pair(&scene, 0.0, 1.0, 1.0 / SIZE as f64, SIZE as f64, 0.3).unwrap();
    println!("events: {}", cap.events.len());
    let window_end = cap.r1.exposure.unwrap().time_range().1;
    let bins = TimeBins::new(m0.time_range().0, window_end, 6).unwrap();
    let oracle = oracle_field(&scene.motion, &bins, SIZE, SIZE).unwrap();
    let grid = voxelize(&cap.events, &bins, 5).unwrap();
    let init = estimate_field_classical(&grid).unwrap();
    let (mean_e, max_e) = field_err(&init, &oracle);
    println!("LK init field err: mean {mean_e:.3} px, max {max_e:.3} px (per bin)");

    let ctx = FramePairContext::new(cap.r0.clone(), cap.r1.clone(), oracle.clone()).unwrap();
    let mut c_init = ctx.clone();
    c_init.field = init.clone();
    println!("PSNR with oracle field: {:.2}", mean_psnr(&ctx, &scene, 4));
    println!("PSNR with LK init:      {:.2}", mean_psnr(&c_init, &scene, 4));

    for (iters, step, tol) in [(120usize, 0.5, 1e-6), (400, 2.0, 1e-9), (1000, 4.0, 1e-10)] {
        let cfg = OptimizerConfig {
            max_iters: iters,
            step_size: step,
            convergence_tol: tol,
            ..OptimizerConfig::default()
        };
        let t0 = std::time::Instant::now();
        let (opt, trace) = optimize_field(&ctx, &init, &LossWeights::default(), &cfg).unwrap();
        let mut c = ctx.clone();
        c.field = opt.clone();
        let (me, mx) = field_err(&opt, &oracle);
        println!(
            "iters {iters} step {step} tol {tol:e}: {} accepted, loss {:.6} -> {:.6}, field err mean {me:.3} max {mx:.3}, PSNR {:.2}, {:.1}s",
            trace.len() - 1,
            trace[0].total,
            trace.last().unwrap().total,
            mean_psnr(&c, &scene, 4),
            t0.elapsed().as_secs_f64(),
        );
    }
}
