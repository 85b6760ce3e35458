//! Autocorrelation linear prediction: Levinson-Durbin and inverse filtering.

use crate::error::{Error, Result};

/// All-pole predictor in the convention x_hat[n] = sum_k a_k x[n-k].
#[derive(Debug, Clone, PartialEq)]
pub struct LpcModel {
    /// Prediction coefficients a_1..a_p.
    pub coeffs: Vec<f64>,
    /// Square root of the final prediction-error power.
    pub gain: f64,
    pub order: usize,
    /// Reflection coefficients from the recursion, all in (-1, 1) for a
    /// positive-definite autocorrelation.
    pub reflection: Vec<f64>,
}

/// Biased autocorrelation r[k] = sum_n x[n] x[n+k] for k = 0..=max_lag.
pub fn autocorrelation(frame: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag >= frame.len() {
        return Err(Error::LagTooLarge {
            lag: max_lag,
            len: frame.len(),
        });
    }
    let mut r = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut acc = 0.0;
        for n in 0..frame.len() - k {
            acc += frame[n] * frame[n + k];
        }
        r.push(acc);
    }
    Ok(r)
}

/// Solve the Toeplitz normal equations by the Levinson-Durbin recursion.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcModel> {
    if order >= r.len() {
        return Err(Error::LagTooLarge {
            lag: order,
            len: r.len(),
        });
    }
    if !(r[0] > 0.0) {
        return Err(Error::SingularAutocorrelation { order: 0 });
    }

    let mut a = vec![0.0; order + 1]; // a[0] unused, predictor convention
    let mut reflection = Vec::with_capacity(order);
    let mut err = r[0];
    for m in 1..=order {
        let mut acc = r[m];
        for k in 1..m {
            acc -= a[k] * r[m - k];
        }
        let k_m = acc / err;
        reflection.push(k_m);

        let prev = a.clone();
        a[m] = k_m;
        for k in 1..m {
            a[k] = prev[k] - k_m * prev[m - k];
        }
        err *= 1.0 - k_m * k_m;
        if !(err > 0.0) {
            return Err(Error::SingularAutocorrelation { order: m });
        }
    }

    Ok(LpcModel {
        coeffs: a[1..].to_vec(),
        gain: err.sqrt(),
        order,
        reflection,
    })
}

/// Prediction residual e[n] = x[n] - sum_k a_k x[n-k] with zero initial
/// history.
pub fn inverse_filter(frame: &[f64], model: &LpcModel) -> Vec<f64> {
    let mut out = Vec::with_capacity(frame.len());
    for n in 0..frame.len() {
        let mut e = frame[n];
        for (k, &a) in model.coeffs.iter().enumerate() {
            if n > k {
                e -= a * frame[n - k - 1];
            }
        }
        out.push(e);
    }
    out
}

/// Run a signal through the all-pole synthesis filter of `model`:
/// y[n] = x[n] + sum_k a_k y[n-k]. Inverse of [`inverse_filter`].
pub fn synthesis_filter(input: &[f64], model: &LpcModel) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(input.len());
    for n in 0..input.len() {
        let mut y = input[n];
        for (k, &a) in model.coeffs.iter().enumerate() {
            if n > k {
                y += a * out[n - k - 1];
            }
        }
        out.push(y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn autocorrelation_direct_sum() {
        let r = autocorrelation(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(r, vec![4.0, 3.0, 2.0]);
    }

    #[test]
    fn autocorrelation_r0_dominates() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
        let r = autocorrelation(&x, 10).unwrap();
        for k in 1..r.len() {
            assert!(r[0] >= r[k].abs());
        }
    }

    #[test]
    fn autocorrelation_white_noise_decorrelated() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = autocorrelation(&x, 1).unwrap();
        assert!((r[1] / r[0]).abs() < 0.1);
    }

    #[test]
    fn lag_too_large() {
        assert!(matches!(
            autocorrelation(&[1.0, 2.0], 2),
            Err(Error::LagTooLarge { .. })
        ));
    }

    #[test]
    fn white_spectrum_gives_zero_coeffs() {
        let model = levinson_durbin(&[1.0, 0.0, 0.0, 0.0], 3).unwrap();
        assert!(model.coeffs.iter().all(|&a| a == 0.0));
        assert_eq!(model.gain, 1.0);
    }

    #[test]
    fn ar1_recovery() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut x = vec![0.0f64; 100_000];
        for n in 1..x.len() {
            x[n] = 0.9 * x[n - 1] + rng.gen_range(-1.0..1.0);
        }
        let r = autocorrelation(&x, 1).unwrap();
        let model = levinson_durbin(&r, 1).unwrap();
        assert!(
            (model.coeffs[0] - 0.9).abs() < 0.02,
            "coeff {}",
            model.coeffs[0]
        );
    }

    #[test]
    fn ar2_pole_recovery() {
        // poles at 0.95 exp(+-j 0.3 pi)
        let radius = 0.95;
        let theta = 0.3 * std::f64::consts::PI;
        let a1 = 2.0 * radius * theta.cos();
        let a2 = -radius * radius;

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut x = vec![0.0f64; 100_000];
        for n in 2..x.len() {
            x[n] = a1 * x[n - 1] + a2 * x[n - 2] + rng.gen_range(-1.0..1.0);
        }
        let r = autocorrelation(&x, 2).unwrap();
        let model = levinson_durbin(&r, 2).unwrap();

        // roots of z^2 - c1 z - c2
        let (c1, c2) = (model.coeffs[0], model.coeffs[1]);
        let disc = c1 * c1 / 4.0 + c2;
        assert!(disc < 0.0, "expected complex poles");
        let re = c1 / 2.0;
        let im = (-disc).sqrt();
        let true_re = radius * theta.cos();
        let true_im = radius * theta.sin();
        let dist = ((re - true_re).powi(2) + (im - true_im).powi(2)).sqrt();
        assert!(dist < 0.02, "pole distance {dist}");
    }

    #[test]
    fn reflection_coeffs_bounded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = autocorrelation(&x, 12).unwrap();
            let model = levinson_durbin(&r, 12).unwrap();
            for &k in &model.reflection {
                assert!(k.abs() < 1.0);
            }
        }
    }

    #[test]
    fn singular_autocorrelation_detected() {
        assert!(matches!(
            levinson_durbin(&[0.0, 0.0], 1),
            Err(Error::SingularAutocorrelation { .. })
        ));
        // perfectly predictable: r of a pure cosine reaches zero error by order 2
        let n = 1024;
        let x: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).cos()).collect();
        let r = autocorrelation(&x, 8).unwrap();
        // may or may not hit exact zero with rounding; accept either model or error
        let _ = levinson_durbin(&r, 8);
    }

    #[test]
    fn inverse_filter_identity_for_zero_order() {
        let x = vec![0.3, -0.1, 0.7];
        let model = LpcModel {
            coeffs: vec![],
            gain: 1.0,
            order: 0,
            reflection: vec![],
        };
        assert_eq!(inverse_filter(&x, &model), x);
    }

    #[test]
    fn inverse_filter_recovers_excitation() {
        // known AR(10) filter driven by seeded noise
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let coeffs: Vec<f64> = vec![0.6, -0.3, 0.15, -0.05, 0.02, 0.1, -0.08, 0.03, 0.01, -0.02];
        let model = LpcModel {
            coeffs: coeffs.clone(),
            gain: 1.0,
            order: 10,
            reflection: vec![],
        };
        let excitation: Vec<f64> = (0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let signal = synthesis_filter(&excitation, &model);
        let residual = inverse_filter(&signal, &model);

        let mut num = 0.0;
        let mut den = 0.0;
        for n in 10..excitation.len() {
            num += (residual[n] - excitation[n]).powi(2);
            den += excitation[n].powi(2);
        }
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn inverse_filter_zero_in_zero_out() {
        let model = LpcModel {
            coeffs: vec![0.5, 0.2],
            gain: 1.0,
            order: 2,
            reflection: vec![],
        };
        let out = inverse_filter(&[0.0; 16], &model);
        assert!(out.iter().all(|&v| v == 0.0));
    }
}
