//! Two-pass iterative adaptive inverse filtering.
//!
//! Pass 1 removes the coarse glottal spectral tilt with an order-1 LPC;
//! pass 2 estimates the vocal tract on the tilt-removed signal and inverse
//! filters the original frame with it. The residual (glottal flow
//! derivative, lip radiation included) is turned back into flow by a leaky
//! integrator, then shifted to a zero baseline and peak-scaled to 1.

use crate::error::{Error, Result};

use super::lpc::{autocorrelation, inverse_filter, levinson_durbin};
use super::GlottalFlowSignal;

#[derive(Debug, Clone, Copy)]
pub struct IaifConfig {
    /// Vocal tract LPC order; 0 selects the 2 + rate/1000 default.
    pub tract_order: usize,
    /// Lowest fundamental the frame-length precondition is checked against.
    pub min_f0: f64,
    /// Leaky integrator pole cancelling lip radiation.
    pub rho: f64,
}

impl Default for IaifConfig {
    fn default() -> Self {
        Self {
            tract_order: 0,
            min_f0: 60.0,
            rho: 0.99,
        }
    }
}

impl IaifConfig {
    pub fn effective_order(&self, sample_rate: f64) -> usize {
        if self.tract_order > 0 {
            self.tract_order
        } else {
            2 + (sample_rate / 1000.0).round() as usize
        }
    }
}

fn hann_windowed(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    frame
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
            x * w
        })
        .collect()
}

fn lpc_of(signal: &[f64], order: usize) -> Result<super::LpcModel> {
    let windowed = hann_windowed(signal);
    let r = autocorrelation(&windowed, order)?;
    levinson_durbin(&r, order)
}

/// Recover normalized glottal flow from a speech frame.
pub fn iaif(frame: &[f64], sample_rate: f64, cfg: &IaifConfig) -> Result<GlottalFlowSignal> {
    let min_len = (3.0 * sample_rate / cfg.min_f0).ceil() as usize;
    if frame.len() < min_len {
        return Err(Error::FrameTooShort {
            len: frame.len(),
            min: min_len,
        });
    }

    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let centered: Vec<f64> = frame.iter().map(|&x| x - mean).collect();

    // pass 1: coarse glottal tilt
    let tilt = lpc_of(&centered, 1)?;
    let detilted = inverse_filter(&centered, &tilt);

    // pass 2: vocal tract on the tilt-removed signal, applied to the frame
    let order = cfg.effective_order(sample_rate);
    let tract = lpc_of(&detilted, order)?;
    let residual = inverse_filter(&centered, &tract);

    // lip radiation cancelled by leaky integration
    let mut flow = Vec::with_capacity(residual.len());
    let mut y = 0.0;
    for &e in &residual {
        y = e + cfg.rho * y;
        flow.push(y);
    }

    // zero baseline (closed phase at 0), peak at 1
    let min = flow.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = flow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max - min > 0.0) {
        return Err(Error::NonNormalizable);
    }
    for v in &mut flow {
        *v = (*v - min) / (max - min);
    }

    Ok(GlottalFlowSignal::from_flow(flow, sample_rate, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_is_rejected() {
        let frame = vec![0.0; 1600];
        let err = iaif(&frame, 16_000.0, &IaifConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::SingularAutocorrelation { .. } | Error::NonNormalizable
        ));
    }

    #[test]
    fn short_frame_rejected() {
        let frame = vec![0.1; 100];
        let err = iaif(&frame, 16_000.0, &IaifConfig::default()).unwrap_err();
        assert!(matches!(err, Error::FrameTooShort { .. }));
    }

    #[test]
    fn output_is_normalized() {
        // crude voiced-ish excitation: rectified sine through a resonant filter
        let n = 1600;
        let signal: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                let cycle = (2.0 * std::f64::consts::PI * 120.0 * t).sin().max(0.0);
                cycle + 0.3 * (2.0 * std::f64::consts::PI * 730.0 * t).sin() * cycle
            })
            .collect();
        let flow = iaif(&signal, 16_000.0, &IaifConfig::default()).unwrap();
        assert!(flow.normalized);
        let max = flow.flow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = flow.flow.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((max - 1.0).abs() < 1e-12);
        assert!(min.abs() < 1e-12);
    }
}
