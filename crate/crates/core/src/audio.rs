//! Audio loading, validation, resampling, pre-emphasis and framing.
//!
//! Only mono 16-bit integer or 32-bit float PCM WAV files are accepted;
//! anything else is rejected rather than converted so the decode path stays
//! auditable. The extraction pipeline runs at a canonical 16 kHz.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Canonical internal sample rate of the extraction pipeline.
pub const CANONICAL_RATE: u32 = 16_000;

/// Mono sample sequence with its sample rate. Samples are clamped to
/// [-1, 1] on load.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample_rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Frames cut from a buffer: `n_frames x frame_len`, no tail padding.
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub frames: Matrix,
    pub hop: usize,
    pub frame_len: usize,
    pub sample_rate: u32,
}

impl FrameSet {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }
}

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

fn read_u16(bytes: &[u8], at: usize) -> Result<u16> {
    let b: [u8; 2] = bytes
        .get(at..at + 2)
        .ok_or_else(|| Error::CorruptHeader("truncated chunk".into()))?
        .try_into()
        .unwrap();
    Ok(u16::from_le_bytes(b))
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let b: [u8; 4] = bytes
        .get(at..at + 4)
        .ok_or_else(|| Error::CorruptHeader("truncated chunk".into()))?
        .try_into()
        .unwrap();
    Ok(u32::from_le_bytes(b))
}

/// Read a mono PCM16 or float32 WAV file. Integer samples are scaled by
/// 1/32768; float samples pass through. Both are clamped to [-1, 1].
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    match std::fs::File::open(path) {
        Ok(mut f) => {
            f.read_to_end(&mut bytes)?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingFile(path.display().to_string()));
        }
        Err(e) => return Err(e.into()),
    }
    decode_wav(&bytes)
}

fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::CorruptHeader("missing RIFF/WAVE magic".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4)? as usize;
        let body_start = pos + 8;
        let body_end = body_start + size;
        if body_end > bytes.len() {
            return Err(Error::CorruptHeader("chunk overruns file".into()));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::CorruptHeader("fmt chunk too small".into()));
                }
                fmt = Some((
                    read_u16(body, 0)?,
                    read_u16(body, 2)?,
                    read_u32(body, 4)?,
                    read_u16(body, 14)?,
                ));
            }
            b"data" => data = Some(body),
            _ => {} // skip LIST, fact, etc.
        }
        // chunks are word-aligned
        pos = body_end + (size & 1);
    }

    let (format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::CorruptHeader("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::CorruptHeader("missing data chunk".into()))?;

    if channels != 1 {
        return Err(Error::UnsupportedEncoding(format!("{channels} channels")));
    }
    if sample_rate == 0 {
        return Err(Error::CorruptHeader("zero sample rate".into()));
    }

    let samples = match (format, bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
                v.clamp(-1.0, 1.0)
            })
            .collect(),
        (f, b) => {
            return Err(Error::UnsupportedEncoding(format!(
                "format tag {f}, {b}-bit"
            )));
        }
    };

    Ok(AudioBuffer::new(samples, sample_rate))
}

/// WAV sample encoding accepted by [`write_wav_bytes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Encode a buffer as a RIFF/WAVE byte stream. Samples must lie in [-1, 1].
pub fn write_wav_bytes(buf: &AudioBuffer, encoding: WavEncoding) -> Result<Vec<u8>> {
    for (i, &s) in buf.samples.iter().enumerate() {
        if !(-1.0..=1.0).contains(&s) {
            return Err(Error::ClippedSamples { index: i, value: s });
        }
    }

    let (format, bits): (u16, u16) = match encoding {
        WavEncoding::Pcm16 => (FORMAT_PCM, 16),
        WavEncoding::Float32 => (FORMAT_IEEE_FLOAT, 32),
    };
    let bytes_per_sample = (bits / 8) as u32;
    let data_len = buf.samples.len() as u32 * bytes_per_sample;

    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate * bytes_per_sample).to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    match encoding {
        WavEncoding::Pcm16 => {
            for &s in &buf.samples {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
        WavEncoding::Float32 => {
            for &s in &buf.samples {
                out.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

const RESAMPLE_HALF_TAPS: i64 = 32;
const KAISER_BETA: f64 = 8.0;

/// Zeroth-order modified Bessel function, by power series.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=30 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}

fn kaiser(x: f64, half_width: f64) -> f64 {
    let t = x / half_width;
    if t.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(KAISER_BETA * (1.0 - t * t).sqrt()) / bessel_i0(KAISER_BETA)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Band-limited resampling with a 64-tap Kaiser-windowed sinc kernel
/// (beta = 8, cutoff 0.45 * min of the two rates). Duration is preserved
/// within one sample period.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target_rate must be > 0".into()));
    }
    if target_rate == buf.sample_rate {
        return Ok(buf.clone());
    }

    let src = buf.sample_rate as f64;
    let tgt = target_rate as f64;
    let cutoff = 0.45 * src.min(tgt); // Hz
    let fc = cutoff / src; // cycles per input sample
    let ratio = src / tgt;

    let n_out = (buf.samples.len() as f64 * tgt / src).round() as usize;
    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let center = j as f64 * ratio;
        let first = center.ceil() as i64 - RESAMPLE_HALF_TAPS;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for i in first..first + 2 * RESAMPLE_HALF_TAPS {
            let x = i as f64 - center;
            let w = 2.0 * fc * sinc(2.0 * fc * x) * kaiser(x, RESAMPLE_HALF_TAPS as f64);
            norm += w;
            if i >= 0 && (i as usize) < buf.samples.len() {
                acc += w * buf.samples[i as usize];
            }
        }
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    Ok(AudioBuffer::new(out, target_rate))
}

/// First-order pre-emphasis: y[n] = x[n] - coeff * x[n-1], y[0] = x[0].
pub fn preemphasis(buf: &AudioBuffer, coeff: f64) -> AudioBuffer {
    let mut out = Vec::with_capacity(buf.samples.len());
    let mut prev = 0.0;
    for (i, &x) in buf.samples.iter().enumerate() {
        out.push(if i == 0 { x } else { x - coeff * prev });
        prev = x;
    }
    AudioBuffer::new(out, buf.sample_rate)
}

/// Cut a buffer into overlapping frames. Short input yields zero frames;
/// the tail is never padded.
pub fn frame(buf: &AudioBuffer, frame_len: usize, hop: usize) -> FrameSet {
    assert!(frame_len >= 1 && hop >= 1, "frame_len and hop must be >= 1");
    let len = buf.samples.len();
    let n_frames = if len >= frame_len {
        (len - frame_len) / hop + 1
    } else {
        0
    };
    let mut frames = Matrix::zeros(n_frames, frame_len);
    for i in 0..n_frames {
        frames
            .row_mut(i)
            .copy_from_slice(&buf.samples[i * hop..i * hop + frame_len]);
    }
    FrameSet {
        frames,
        hop,
        frame_len,
        sample_rate: buf.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_pcm16(rate: u32, samples: &[i16], channels: u16) -> Vec<u8> {
        let data_len = (samples.len() * 2) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn pcm16_scaling() {
        let buf = decode_wav(&wav_pcm16(16_000, &[0, 16384, -16384], 1)).unwrap();
        assert_eq!(buf.sample_rate, 16_000);
        assert_eq!(buf.samples, vec![0.0, 0.5, -0.5]);
    }

    #[test]
    fn stereo_rejected() {
        let err = decode_wav(&wav_pcm16(16_000, &[0, 0], 2)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedEncoding(_)));
    }

    #[test]
    fn float32_passthrough() {
        let buf = AudioBuffer::new(vec![0.25, -0.25], 8000);
        let bytes = write_wav_bytes(&buf, WavEncoding::Float32).unwrap();
        let back = decode_wav(&bytes).unwrap();
        assert_eq!(back.samples, vec![0.25, -0.25]);
        assert_eq!(back.sample_rate, 8000);
    }

    #[test]
    fn bad_magic_rejected() {
        let err = decode_wav(b"RIFFxxxxWAVX").unwrap_err();
        assert!(matches!(err, Error::CorruptHeader(_)));
    }

    #[test]
    fn missing_file() {
        let err = read_wav("/nonexistent/file.wav").unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }

    #[test]
    fn pcm24_rejected() {
        let mut bytes = wav_pcm16(16_000, &[0], 1);
        // patch bits-per-sample to 24
        bytes[34] = 24;
        let err = decode_wav(&bytes).unwrap_err();
        assert!(matches!(err, Error::UnsupportedEncoding(_)));
    }

    #[test]
    fn resample_identity() {
        let buf = AudioBuffer::new(vec![0.1, -0.2, 0.3], 16_000);
        let out = resample(&buf, 16_000).unwrap();
        assert_eq!(out.samples, buf.samples);
    }

    #[test]
    fn resample_length() {
        let buf = AudioBuffer::new(vec![0.0; 48_000], 48_000);
        let out = resample(&buf, 16_000).unwrap();
        assert!((out.samples.len() as i64 - 16_000).abs() <= 1);
    }

    #[test]
    fn resample_sine_peak() {
        // 100 Hz sine at 48 kHz down to 16 kHz: FFT peak within 1 Hz.
        let n = 48_000;
        let samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 100.0 * i as f64 / 48_000.0).sin() * 0.5)
            .collect();
        let out = resample(&AudioBuffer::new(samples, 48_000), 16_000).unwrap();

        let m = out.samples.len();
        let bin_hz = 16_000.0 / m as f64;
        let mut best = (0usize, 0.0f64);
        for k in 1..m / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            let f = k as f64 * bin_hz;
            if !(90.0..=110.0).contains(&f) {
                continue;
            }
            for (i, &s) in out.samples.iter().enumerate() {
                let ph = 2.0 * std::f64::consts::PI * k as f64 * i as f64 / m as f64;
                re += s * ph.cos();
                im -= s * ph.sin();
            }
            let mag = (re * re + im * im).sqrt();
            if mag > best.1 {
                best = (k, mag);
            }
        }
        let peak_hz = best.0 as f64 * bin_hz;
        assert!((peak_hz - 100.0).abs() <= 1.0, "peak at {peak_hz} Hz");
    }

    #[test]
    fn resample_round_trip_snr() {
        let n = 16_000;
        let sine: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16_000.0).sin() * 0.5)
            .collect();
        let buf = AudioBuffer::new(sine.clone(), 16_000);
        let up = resample(&buf, 48_000).unwrap();
        let back = resample(&up, 16_000).unwrap();

        // compare interior, away from kernel edges
        let lo = 256;
        let hi = n.min(back.samples.len()) - 256;
        let mut sig = 0.0;
        let mut err = 0.0;
        for i in lo..hi {
            sig += sine[i] * sine[i];
            err += (sine[i] - back.samples[i]).powi(2);
        }
        let snr_db = 10.0 * (sig / err).log10();
        assert!(snr_db >= 30.0, "round-trip SNR {snr_db:.1} dB");
    }

    #[test]
    fn preemphasis_examples() {
        let buf = AudioBuffer::new(vec![1.0, 1.0, 1.0], 16_000);
        assert_eq!(preemphasis(&buf, 0.0).samples, vec![1.0, 1.0, 1.0]);
        let y = preemphasis(&buf, 0.97);
        assert!((y.samples[0] - 1.0).abs() < 1e-15);
        assert!((y.samples[1] - 0.03).abs() < 1e-12);
        assert!((y.samples[2] - 0.03).abs() < 1e-12);
        let dc = preemphasis(&AudioBuffer::new(vec![0.5; 8], 16_000), 1.0);
        assert_eq!(dc.samples[0], 0.5);
        assert!(dc.samples[1..].iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn frame_counts() {
        let buf = AudioBuffer::new(vec![0.0; 100], 16_000);
        assert_eq!(frame(&buf, 40, 20).n_frames(), 4);
        let short = AudioBuffer::new(vec![0.0; 39], 16_000);
        assert_eq!(frame(&short, 40, 20).n_frames(), 0);
        let exact = AudioBuffer::new((0..40).map(|i| i as f64).collect(), 16_000);
        let fs = frame(&exact, 40, 1);
        assert_eq!(fs.n_frames(), 1);
        assert_eq!(fs.frames.row(0), exact.samples.as_slice());
    }

    #[test]
    fn wav_pcm16_round_trip_error_bound() {
        let samples: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.31).sin() * 0.99).collect();
        let buf = AudioBuffer::new(samples.clone(), 16_000);
        let bytes = write_wav_bytes(&buf, WavEncoding::Pcm16).unwrap();
        let back = decode_wav(&bytes).unwrap();
        for (a, b) in samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn wav_write_rejects_out_of_range() {
        let buf = AudioBuffer::new(vec![0.0, 1.5], 16_000);
        let err = write_wav_bytes(&buf, WavEncoding::Pcm16).unwrap_err();
        assert!(matches!(err, Error::ClippedSamples { index: 1, .. }));
    }
}
