//! Internal probe: watch one recovery fit converge.

use glottkit::adles::{estimate_params, fit_loss, sample_model_flow, OptConfig, SimConfig};
use glottkit::fold::OneMassParams;

fn main() {
    let fs = 16_000.0;
    let f0 = 120.0;
    let sim = SimConfig {
        f0_override: Some(f0),
        ..SimConfig::default()
    };
    let p_star = OneMassParams::new(0.6, 0.32, 0.3);
    let n = (6.0 * fs / f0).round() as usize;
    let t0 = std::time::Instant::now();
    let target = sample_model_flow(&p_star, f0, fs, n, &sim).unwrap();
    eprintln!("target built in {:?}", t0.elapsed());

    let init = OneMassParams::new(0.5, 0.25, 0.0);
    let l_init = fit_loss(&init, &target, &sim).unwrap();
    eprintln!("loss at init: {l_init:.3e} ({:?})", t0.elapsed());

    let opt = OptConfig {
        sim,
        ..OptConfig::default()
    };
    let t1 = std::time::Instant::now();
    let fit = estimate_params(&target, init, &opt).unwrap();
    eprintln!(
        "fit in {:?}: alpha={:.4} beta={:.4} delta={:.4} loss={:.3e} iters={} converged={} grad={:.2e}",
        t1.elapsed(),
        fit.params.alpha,
        fit.params.beta,
        fit.params.delta,
        fit.loss_curve.last().unwrap(),
        fit.iterations,
        fit.converged,
        fit.grad_norm_final,
    );
    eprintln!("curve len {} first {:.3e} mid {:.3e}", fit.loss_curve.len(),
        fit.loss_curve[0], fit.loss_curve[fit.loss_curve.len()/2]);
}
