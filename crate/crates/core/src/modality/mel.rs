use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numkit::Tensor;

pub const SAMPLE_RATE_HZ: usize = 16_000;
pub const N_FFT: usize = 400;
pub const HOP_SAMPLES: usize = 160;
pub const N_MELS: usize = 128;
/// 30 s window.
pub const N_SAMPLES: usize = 30 * SAMPLE_RATE_HZ;
pub const N_FRAMES: usize = N_SAMPLES / HOP_SAMPLES;
const F_MAX_HZ: f64 = 8_000.0;
const LOG_FLOOR: f64 = 1e-10;
const DYNAMIC_RANGE: f64 = 8.0;

/// Normalized log-mel features of a 30 s window, `[frames x 128]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpec {
    pub frames: usize,
    pub bins: usize,
    pub data: Tensor,
    pub sample_rate_hz: usize,
    pub window_samples: usize,
    pub hop_samples: usize,
}

impl MelSpec {
    /// Wraps an existing `[frames x bins]` feature grid.
    pub fn from_tensor(data: Tensor) -> Result<Self> {
        let (frames, bins) = data.dims2("MelSpec")?;
        Ok(Self {
            frames,
            bins,
            data,
            sample_rate_hz: SAMPLE_RATE_HZ,
            window_samples: N_FFT,
            hop_samples: HOP_SAMPLES,
        })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.data.row(t)
    }

    /// Value every bin takes for an all-zero input.
    pub fn silence_level() -> f64 {
        (LOG_FLOOR.log10() + 4.0) / 4.0
    }
}

// Slaney mel scale: linear below 1 kHz, logarithmic above.
const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn logstep() -> f64 {
    6.4f64.ln() / 27.0
}

pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / logstep()
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * (logstep() * (mel - MIN_LOG_MEL)).exp()
    } else {
        F_SP * mel
    }
}

/// Area-normalized triangular filters, `[128 x (N_FFT/2 + 1)]`, spanning 0-8 kHz.
pub fn mel_filters() -> Tensor {
    let n_freqs = N_FFT / 2 + 1;
    let fft_freqs: Vec<f64> = (0..n_freqs)
        .map(|k| k as f64 * SAMPLE_RATE_HZ as f64 / N_FFT as f64)
        .collect();
    let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(F_MAX_HZ));
    let mel_f: Vec<f64> = (0..N_MELS + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (N_MELS + 1) as f64))
        .collect();
    Tensor::from_fn(&[N_MELS, n_freqs], |idx| {
        let (m, k) = (idx / n_freqs, idx % n_freqs);
        let lower = (fft_freqs[k] - mel_f[m]) / (mel_f[m + 1] - mel_f[m]);
        let upper = (mel_f[m + 2] - fft_freqs[k]) / (mel_f[m + 2] - mel_f[m + 1]);
        let enorm = 2.0 / (mel_f[m + 2] - mel_f[m]);
        lower.min(upper).max(0.0) * enorm
    })
}

fn hann_periodic() -> Vec<f64> {
    (0..N_FFT)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / N_FFT as f64).cos())
        .collect()
}

/// Pads with zeros or trims to exactly 30 s.
fn fit_window(waveform: &[f64]) -> Vec<f64> {
    let mut x = waveform[..waveform.len().min(N_SAMPLES)].to_vec();
    x.resize(N_SAMPLES, 0.0);
    x
}

/// Centers frames by reflect-padding `N_FFT / 2` samples on both sides.
fn reflect_pad(x: &[f64]) -> Vec<f64> {
    let pad = N_FFT / 2;
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((1..=pad).map(|i| x[n - 1 - i]));
    out
}

pub fn melspec(waveform: &[f64]) -> Result<MelSpec> {
    melspec_with(Exec::default(), waveform)
}

/// Whisper-style 128-bin log-mel features of a 16 kHz waveform.
///
/// The waveform is zero-padded or trimmed to 30 s, framed with a 400-sample
/// periodic Hann window every 160 samples, and the power spectrum of each
/// frame is projected onto the mel filterbank. Values are `log10`-compressed,
/// clamped to 8 decades below the clip maximum, and mapped by `(v + 4) / 4`.
pub fn melspec_with(exec: Exec, waveform: &[f64]) -> Result<MelSpec> {
    if waveform.is_empty() {
        return Err(Error::contract("melspec: empty waveform"));
    }
    if let Some(i) = waveform.iter().position(|v| !v.is_finite()) {
        return Err(Error::contract(format!("melspec: non-finite sample at index {i}")));
    }
    let padded = reflect_pad(&fit_window(waveform));
    let window = hann_periodic();
    let filters = mel_filters();
    let n_freqs = N_FFT / 2 + 1;
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(N_FFT);

    let rows = exec.map(N_FRAMES, |t| {
        let start = t * HOP_SAMPLES;
        let mut buf: Vec<Complex<f64>> = padded[start..start + N_FFT]
            .iter()
            .zip(&window)
            .map(|(&s, &w)| Complex::new(s * w, 0.0))
            .collect();
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_freqs].iter().map(|c| c.norm_sqr()).collect();
        (0..N_MELS)
            .map(|m| {
                let mel: f64 = filters.row(m).iter().zip(&power).map(|(f, p)| f * p).sum();
                mel.max(LOG_FLOOR).log10()
            })
            .collect::<Vec<f64>>()
    });

    let mut data = rows.concat();
    let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for v in &mut data {
        *v = (v.max(max - DYNAMIC_RANGE) + 4.0) / 4.0;
    }
    MelSpec::from_tensor(Tensor::new(vec![N_FRAMES, N_MELS], data)?)
}
