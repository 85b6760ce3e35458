//! Magnitude spectrograms, multi-resolution stacks and mel cepstra.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Window length / hop / FFT size of one stack layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerDescriptor {
    pub window_len: usize,
    pub hop: usize,
    pub nfft: usize,
}

/// Aligned stack of magnitude spectrograms at different resolutions.
#[derive(Debug, Clone)]
pub struct RepresentationStack {
    pub layers: Vec<Matrix>,
    pub descriptors: Vec<LayerDescriptor>,
}

impl RepresentationStack {
    pub fn n_frames(&self) -> usize {
        self.layers.first().map_or(0, Matrix::rows)
    }

    /// Total bins across layers (one frame, all layers concatenated).
    pub fn frame_dim(&self) -> usize {
        self.layers.iter().map(Matrix::cols).sum()
    }
}

// symmetric Hann, so magnitude spectra are invariant to frame reversal
fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn magnitude_frames(
    samples: &[f64],
    window_len: usize,
    hop: usize,
    nfft: usize,
) -> Result<Matrix> {
    if nfft < window_len {
        return Err(Error::InvalidArgument(
            "nfft must be >= window_len".into(),
        ));
    }
    if hop > window_len {
        return Err(Error::BadWindow { hop, window_len });
    }
    if hop == 0 || window_len == 0 {
        return Err(Error::InvalidArgument("window_len and hop must be >= 1".into()));
    }

    let n_frames = if samples.len() >= window_len {
        (samples.len() - window_len) / hop + 1
    } else {
        0
    };
    let n_bins = nfft / 2 + 1;
    let window = hann(window_len);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut out = Matrix::zeros(n_frames, n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for f in 0..n_frames {
        for v in buf.iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        for i in 0..window_len {
            buf[i] = Complex::new(samples[f * hop + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        let row = out.row_mut(f);
        for (b, slot) in row.iter_mut().enumerate() {
            *slot = buf[b].norm();
        }
    }
    Ok(out)
}

/// One-sided Hann magnitude spectrogram, n_frames x (nfft/2 + 1).
pub fn spectrogram(
    buf: &AudioBuffer,
    window_len: usize,
    hop: usize,
    nfft: usize,
) -> Result<Matrix> {
    magnitude_frames(&buf.samples, window_len, hop, nfft)
}

/// Compute spectrograms at several resolutions and truncate all layers to a
/// common frame count.
pub fn build_stack(
    buf: &AudioBuffer,
    resolutions: &[LayerDescriptor],
) -> Result<RepresentationStack> {
    if resolutions.is_empty() {
        return Err(Error::InvalidArgument("need at least one resolution".into()));
    }
    let mut layers = Vec::with_capacity(resolutions.len());
    for d in resolutions {
        layers.push(magnitude_frames(&buf.samples, d.window_len, d.hop, d.nfft)?);
    }
    let min_frames = layers.iter().map(Matrix::rows).min().unwrap_or(0);
    let layers = layers
        .into_iter()
        .map(|m| {
            if m.rows() == min_frames {
                m
            } else {
                let mut t = Matrix::zeros(min_frames, m.cols());
                for i in 0..min_frames {
                    t.row_mut(i).copy_from_slice(m.row(i));
                }
                t
            }
        })
        .collect();
    Ok(RepresentationStack {
        layers,
        descriptors: resolutions.to_vec(),
    })
}

/// Default three-resolution stack used by the extraction pipeline.
pub fn default_resolutions() -> Vec<LayerDescriptor> {
    [128, 256, 512]
        .iter()
        .map(|&window_len| LayerDescriptor {
            window_len,
            hop: 80,
            nfft: 512,
        })
        .collect()
}

const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Log-mel cepstral coefficients of one frame: `n_mel` triangular filters
/// over 0..rate/2, log with a 1e-10 floor, DCT-II, first `n_cep` terms.
pub fn cepstral_features(
    frame: &[f64],
    sample_rate: f64,
    n_mel: usize,
    n_cep: usize,
) -> Vec<f64> {
    assert!(n_cep <= n_mel, "n_cep must be <= n_mel");
    let nfft = frame.len().next_power_of_two().max(16);
    let n_bins = nfft / 2 + 1;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let window = hann(frame.len());
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for (i, &x) in frame.iter().enumerate() {
        buf[i] = Complex::new(x * window[i], 0.0);
    }
    fft.process(&mut buf);
    let power: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm_sqr()).collect();

    // triangular filters equally spaced in mel
    let mel_max = hz_to_mel(sample_rate / 2.0);
    let centers: Vec<f64> = (0..n_mel + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mel + 1) as f64))
        .collect();
    let bin_hz = sample_rate / nfft as f64;
    let mut logs = Vec::with_capacity(n_mel);
    for m in 0..n_mel {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        let mut acc = 0.0;
        for (b, &p) in power.iter().enumerate() {
            let f = b as f64 * bin_hz;
            let w = if f >= lo && f <= mid && mid > lo {
                (f - lo) / (mid - lo)
            } else if f > mid && f <= hi && hi > mid {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            acc += w * p;
        }
        logs.push(acc.max(LOG_FLOOR).ln());
    }

    // orthonormal DCT-II
    let mut cep = Vec::with_capacity(n_cep);
    for k in 0..n_cep {
        let scale = if k == 0 {
            (1.0 / n_mel as f64).sqrt()
        } else {
            (2.0 / n_mel as f64).sqrt()
        };
        let mut acc = 0.0;
        for (j, &v) in logs.iter().enumerate() {
            acc += v
                * (std::f64::consts::PI * k as f64 * (2.0 * j as f64 + 1.0)
                    / (2.0 * n_mel as f64))
                    .cos();
        }
        cep.push(scale * acc);
    }
    cep
}
