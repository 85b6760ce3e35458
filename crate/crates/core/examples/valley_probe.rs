//! Internal probe: loss along the segment stuck-point -> true params.

use glottkit::adles::{fit_loss, sample_model_flow, SimConfig};
use glottkit::fold::OneMassParams;

fn main() {
    let fs = 16_000.0;
    let f0 = 120.0;
    let sim = SimConfig {
        f0_override: Some(f0),
        ..SimConfig::default()
    };
    let n = (6.0 * fs / f0).round() as usize;
    let target = sample_model_flow(&OneMassParams::new(0.6, 0.32, 0.3), f0, fs, n, &sim).unwrap();

    let a = (0.6032, 0.3546, 0.2570);
    let b = (0.6, 0.32, 0.3);
    for i in 0..=30 {
        let t = i as f64 / 30.0;
        let p = OneMassParams::new(
            a.0 + t * (b.0 - a.0),
            a.1 + t * (b.1 - a.1),
            a.2 + t * (b.2 - a.2),
        );
        let l = fit_loss(&p, &target, &sim).unwrap();
        println!("t={t:.3}: L={l:.6e}");
    }
}
