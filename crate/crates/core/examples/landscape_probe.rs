//! Internal probe: delta identifiability of the flow-shape loss.

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

    // lock check: cycle-to-cycle rms variation of the sampled flow at p*
    for delta in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8] {
        let p = OneMassParams::new(0.6, 0.32, delta);
        let flow = sample_model_flow(&p, f0, fs, n, &sim).unwrap();
        let period = (fs / f0).round() as usize;
        let n_cyc = flow.len() / period - 1;
        let mut dev = 0.0;
        let mut count = 0;
        for c in 0..n_cyc {
            for k in 0..period {
                let a = flow.flow[c * period + k];
                let b = flow.flow[(c + 1) * period + k];
                dev += (a - b) * (a - b);
                count += 1;
            }
        }
        let rms = (dev / count as f64).sqrt();
        println!("delta={delta:.1}: cycle-to-cycle rms {rms:.3e}");
    }

    // loss profile along delta at true (alpha, beta), target delta* = 0.3
    let target = sample_model_flow(&OneMassParams::new(0.6, 0.32, 0.3), f0, fs, n, &sim).unwrap();
    println!("\nloss along delta at (0.6, 0.32, d), target d*=0.3:");
    for d in [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.28, 0.3, 0.32, 0.35, 0.4, 0.5] {
        let p = OneMassParams::new(0.6, 0.32, d);
        let l = fit_loss(&p, &target, &sim).unwrap();
        println!("  d={d:.2}: L={l:.4e}");
    }

    // loss profile along beta at (0.6, b, 0.3)
    println!("\nloss along beta at (0.6, b, 0.3):");
    for b in [0.26, 0.29, 0.31, 0.32, 0.33, 0.35, 0.38, 0.44] {
        let p = OneMassParams::new(0.6, b, 0.3);
        let l = fit_loss(&p, &target, &sim).unwrap();
        println!("  b={b:.2}: L={l:.4e}");
    }
}
