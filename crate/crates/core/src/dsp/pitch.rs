//! Fundamental frequency estimation and the low-frequency tremor index.

use crate::audio::{frame, AudioBuffer};
use crate::error::{Error, Result};

/// Normalized-autocorrelation peak below which a frame is called unvoiced.
pub const VOICED_THRESHOLD: f64 = 0.3;

/// Outcome of pitch analysis on a single frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum F0Estimate {
    Voiced(f64),
    Unvoiced,
}

impl F0Estimate {
    pub fn hz(&self) -> Option<f64> {
        match self {
            F0Estimate::Voiced(f) => Some(*f),
            F0Estimate::Unvoiced => None,
        }
    }
}

/// Autocorrelation pitch estimate with parabolic peak interpolation.
///
/// The frame is Hann-windowed and its autocorrelation divided by the
/// window's own autocorrelation, which removes the taper bias that skews
/// short-frame peaks. The search band is [rate/fmax, rate/fmin] in lag.
/// Among local maxima the smallest lag within 10% of the global peak wins,
/// which avoids sub-octave errors on strongly periodic frames.
pub fn estimate_f0(frame: &[f64], sample_rate: f64, fmin: f64, fmax: f64) -> F0Estimate {
    assert!(
        fmin < fmax && fmax < sample_rate / 2.0,
        "need fmin < fmax < rate/2"
    );
    let n = frame.len();
    let lag_min = ((sample_rate / fmax).floor().max(2.0) as usize).max(2);
    let lag_max = (sample_rate / fmin).ceil() as usize;
    // beyond 3/4 of the frame the window autocorrelation amplifies noise
    if lag_max + 2 >= n || lag_max * 4 > n * 3 {
        return F0Estimate::Unvoiced;
    }

    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect();
    // subtract the frame mean so DC (e.g. in glottal flow targets) cannot
    // masquerade as periodicity
    let mean = frame.iter().sum::<f64>() / n as f64;
    let xw: Vec<f64> = frame
        .iter()
        .zip(&window)
        .map(|(&x, &w)| (x - mean) * w)
        .collect();
    let a0: f64 = xw.iter().map(|&v| v * v).sum();
    if a0 <= 0.0 {
        return F0Estimate::Unvoiced;
    }
    let w0: f64 = window.iter().map(|&v| v * v).sum();
    let corr = |lag: usize| -> f64 {
        let mut ax = 0.0;
        let mut aw = 0.0;
        for i in 0..n - lag {
            ax += xw[i] * xw[i + lag];
            aw += window[i] * window[i + lag];
        }
        (ax / a0) / (aw / w0)
    };

    let values: Vec<f64> = (lag_min..=lag_max).map(corr).collect();
    let mut peaks: Vec<(usize, f64)> = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        if values[i] >= values[i - 1] && values[i] > values[i + 1] {
            peaks.push((lag_min + i, values[i]));
        }
    }
    let best = peaks.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    if best < VOICED_THRESHOLD {
        return F0Estimate::Unvoiced;
    }
    let (lag, _) = *peaks
        .iter()
        .find(|p| p.1 >= 0.9 * best)
        .expect("nonempty peaks");

    // parabolic refinement around the integer peak
    let (ym, y0, yp) = (corr(lag - 1), corr(lag), corr(lag + 1));
    let denom = ym - 2.0 * y0 + yp;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    F0Estimate::Voiced(sample_rate / (lag as f64 + shift))
}

/// Tremor index configuration: contour framing and the analysis bands.
#[derive(Debug, Clone, Copy)]
pub struct TremorConfig {
    pub frame_secs: f64,
    pub hop_secs: f64,
    pub fmin: f64,
    pub fmax: f64,
    /// Minimum fraction of voiced frames.
    pub min_voiced: f64,
}

impl Default for TremorConfig {
    fn default() -> Self {
        Self {
            frame_secs: 0.025,
            hop_secs: 0.010,
            fmin: 60.0,
            fmax: 500.0,
            min_voiced: 0.5,
        }
    }
}

/// Frame-wise f0 contour of a recording (None = unvoiced frame).
pub fn f0_contour(buf: &AudioBuffer, cfg: &TremorConfig) -> Vec<Option<f64>> {
    let flen = (cfg.frame_secs * buf.sample_rate as f64).round() as usize;
    let hop = (cfg.hop_secs * buf.sample_rate as f64).round() as usize;
    if flen == 0 || hop == 0 {
        return Vec::new();
    }
    let frames = frame(buf, flen, hop);
    (0..frames.n_frames())
        .map(|i| {
            estimate_f0(
                frames.frames.row(i),
                buf.sample_rate as f64,
                cfg.fmin,
                cfg.fmax,
            )
            .hz()
        })
        .collect()
}

fn interpolate_gaps(contour: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = contour.iter().position(Option::is_some)?;
    let last = contour.iter().rposition(Option::is_some)?;
    let mut out: Vec<f64> = Vec::with_capacity(contour.len());
    for (i, v) in contour.iter().enumerate() {
        if let Some(f) = v {
            out.push(*f);
        } else if i < first {
            out.push(contour[first].unwrap());
        } else if i > last {
            out.push(contour[last].unwrap());
        } else {
            // linear interpolation between surrounding voiced frames
            let prev = contour[..i].iter().rposition(Option::is_some).unwrap();
            let next = i + contour[i..].iter().position(Option::is_some).unwrap();
            let (a, b) = (contour[prev].unwrap(), contour[next].unwrap());
            let t = (i - prev) as f64 / (next - prev) as f64;
            out.push(a + t * (b - a));
        }
    }
    Some(out)
}

const TREMOR_BAND_LO: f64 = 0.5;
const TREMOR_BAND_MID: f64 = 4.0;
const TREMOR_BAND_HI: f64 = 12.0;

/// Fraction of f0-contour modulation energy below 4 Hz:
/// band energy in [0.5, 4) Hz over band energy in [0.5, 12] Hz.
/// Returns 0 for an unmodulated contour.
pub fn tremor_index(buf: &AudioBuffer, cfg: &TremorConfig) -> Result<f64> {
    let contour = f0_contour(buf, cfg);
    let voiced = contour.iter().filter(|v| v.is_some()).count();
    if contour.is_empty() || (voiced as f64) < cfg.min_voiced * contour.len() as f64 {
        return Err(Error::InsufficientVoicing {
            voiced,
            total: contour.len(),
        });
    }
    let filled = interpolate_gaps(&contour).ok_or(Error::InsufficientVoicing {
        voiced,
        total: contour.len(),
    })?;

    let mean = filled.iter().sum::<f64>() / filled.len() as f64;
    let centered: Vec<f64> = filled.iter().map(|f| f - mean).collect();

    // zero-modulation convention: estimator jitter on a steady vowel is well
    // below 0.1% of the mean, genuine tremor is orders of magnitude above
    let rms = (centered.iter().map(|x| x * x).sum::<f64>() / centered.len() as f64).sqrt();
    if rms < 1e-3 * mean.abs().max(1.0) {
        return Ok(0.0);
    }
    let contour_rate = 1.0 / cfg.hop_secs;

    // zero-pad for at least 0.25 Hz bin spacing
    let min_len = (contour_rate / 0.25).ceil() as usize;
    let n = centered.len().max(min_len).next_power_of_two();
    let bin_hz = contour_rate / n as f64;

    let mut e_low = 0.0;
    let mut e_total = 0.0;
    for k in 1..n / 2 + 1 {
        let f = k as f64 * bin_hz;
        if !(TREMOR_BAND_LO..=TREMOR_BAND_HI).contains(&f) {
            continue;
        }
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &x) in centered.iter().enumerate() {
            let ph = 2.0 * std::f64::consts::PI * k as f64 * i as f64 / n as f64;
            re += x * ph.cos();
            im -= x * ph.sin();
        }
        let p = re * re + im * im;
        e_total += p;
        if f < TREMOR_BAND_MID {
            e_low += p;
        }
    }

    if e_total < 1e-9 {
        return Ok(0.0); // unmodulated contour
    }
    Ok(e_low / e_total)
}
