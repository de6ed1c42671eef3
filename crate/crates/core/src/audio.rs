//! Audio half of the representation.
//!
//! Clips are level-normalized and cut to 300 ms around the strike onset, then
//! described by MFCCs (Hann window, |DFT|², HTK mel filterbank, natural log,
//! orthonormal DCT-II). Mel-cepstral distortion over c1..c12 is the audio-space
//! distance; c0 carries level and is excluded.

use std::f64::consts::{LN_10, PI};
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{Waveform, DEFAULT_SAMPLE_RATE};

/// Scale factor of mel-cepstral distortion, 10 / ln 10.
pub const MCD_SCALE: f64 = 10.0 / LN_10;
pub const CHROMA_BINS: usize = 12;

/// DSP constants. The defaults are the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub sample_rate_hz: u32,
    pub clip_ms: f64,
    pub pre_onset_ms: f64,
    /// Onset is the first sample above this fraction of the peak.
    pub onset_fraction: f64,
    /// Peaks at or below this are treated as silence.
    pub silence_floor: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub mel_factor: f64,
    pub mel_break_hz: f64,
    pub log_floor: f64,
    pub chroma_min_hz: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            clip_ms: 300.0,
            pre_onset_ms: 30.0,
            onset_fraction: 0.1,
            silence_floor: 1e-6,
            frame_ms: 25.0,
            hop_ms: 10.0,
            n_fft: 512,
            n_mels: 26,
            n_mfcc: 13,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            mel_factor: 2595.0,
            mel_break_hz: 700.0,
            log_floor: 1e-10,
            chroma_min_hz: 30.0,
        }
    }
}

impl DspConfig {
    fn samples(&self, ms: f64) -> usize {
        (ms * 1e-3 * self.sample_rate_hz as f64).round() as usize
    }

    pub fn clip_len(&self) -> usize {
        self.samples(self.clip_ms)
    }

    pub fn pre_onset_len(&self) -> usize {
        self.samples(self.pre_onset_ms)
    }

    pub fn frame_len(&self) -> usize {
        self.samples(self.frame_ms)
    }

    pub fn hop_len(&self) -> usize {
        self.samples(self.hop_ms)
    }

    pub fn frame_count(&self, len: usize) -> usize {
        let frame = self.frame_len();
        if len < frame {
            0
        } else {
            1 + (len - frame) / self.hop_len()
        }
    }

    pub fn hz_to_mel(&self, hz: f64) -> f64 {
        self.mel_factor * (1.0 + hz / self.mel_break_hz).log10()
    }

    pub fn mel_to_hz(&self, mel: f64) -> f64 {
        self.mel_break_hz * (10f64.powf(mel / self.mel_factor) - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("dsp.sample_rate_hz", self.sample_rate_hz > 0),
            ("dsp.n_fft", self.n_fft >= self.frame_len() && self.frame_len() > 0),
            ("dsp.hop_ms", self.hop_len() > 0),
            ("dsp.n_mels", self.n_mels >= 1),
            ("dsp.n_mfcc", self.n_mfcc >= 2 && self.n_mfcc <= self.n_mels),
            ("dsp.fmax_hz", self.fmax_hz > self.fmin_hz && self.fmax_hz <= self.sample_rate_hz as f64 / 2.0),
            ("dsp.clip_ms", self.clip_len() >= self.frame_len() && self.pre_onset_len() < self.clip_len()),
            ("dsp.log_floor", self.log_floor > 0.0),
            ("dsp.onset_fraction", self.onset_fraction > 0.0 && self.onset_fraction < 1.0),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((field, _)) => Err(Error::validation(*field, "out of range")),
            None => Ok(()),
        }
    }
}

/// Frames × coefficients, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccMatrix {
    pub frames: usize,
    pub coeffs: usize,
    pub data: Vec<f64>,
    pub frame_len: usize,
    pub hop_len: usize,
}

impl MfccMatrix {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.coeffs..(t + 1) * self.coeffs]
    }

    pub fn from_rows(rows: &[Vec<f64>], frame_len: usize, hop_len: usize) -> Self {
        let coeffs = rows.first().map_or(0, Vec::len);
        MfccMatrix {
            frames: rows.len(),
            coeffs,
            data: rows.iter().flatten().copied().collect(),
            frame_len,
            hop_len,
        }
    }

    /// Per-coefficient mean and (population) standard deviation over frames.
    pub fn frame_stats(&self) -> (Vec<f64>, Vec<f64>) {
        column_stats(&self.data, self.frames, self.coeffs)
    }
}

fn column_stats(data: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.max(1) as f64;
    let mut mean = vec![0.0; cols];
    for r in data.chunks_exact(cols) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; cols];
    for r in data.chunks_exact(cols) {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    (mean, var.into_iter().map(|s| (s / n).sqrt()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioFeature {
    pub mfcc: MfccMatrix,
    /// Frame-averaged pitch-class energy, L1-normalized; index 0 is A.
    pub chroma: Vec<f64>,
    /// Per-band log-mel mean followed by per-band standard deviation.
    pub mel_stats: Vec<f64>,
}

impl AudioFeature {
    /// Fixed-length summary: MFCC frame mean, MFCC frame std, chroma, mel stats.
    pub fn summary(&self) -> Vec<f64> {
        let (mean, std) = self.mfcc.frame_stats();
        let mut out = mean;
        out.extend(std);
        out.extend_from_slice(&self.chroma);
        out.extend_from_slice(&self.mel_stats);
        out
    }
}

/// Precomputed window, filterbank and FFT plan for one [`DspConfig`].
pub struct AudioFrontend {
    config: DspConfig,
    window: Vec<f64>,
    /// `n_mels` rows over `n_fft / 2 + 1` bins.
    filterbank: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AudioFrontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AudioFrontend").field("config", &self.config).finish()
    }
}

impl AudioFrontend {
    pub fn new(config: DspConfig) -> Result<Self> {
        config.validate()?;
        let frame = config.frame_len();
        let window = (0..frame)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / frame as f64).cos())
            .collect();
        let filterbank = mel_filterbank(&config);
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(AudioFrontend {
            config,
            window,
            filterbank,
            fft,
        })
    }

    /// Shared frontend with the reference configuration.
    pub fn reference() -> &'static AudioFrontend {
        static FRONTEND: OnceLock<AudioFrontend> = OnceLock::new();
        FRONTEND.get_or_init(|| AudioFrontend::new(DspConfig::default()).expect("default config is valid"))
    }

    pub fn config(&self) -> &DspConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &[Vec<f64>] {
        &self.filterbank
    }

    /// Locates the onset, cuts `[onset - pre, onset - pre + clip)` with zero
    /// padding and scales the clip to unit peak.
    pub fn normalize_and_clip(&self, w: &Waveform) -> Result<Waveform> {
        let peak = w.peak();
        if peak.is_nan() || peak <= self.config.silence_floor {
            return Err(Error::NoImpact {
                peak,
                floor: self.config.silence_floor,
            });
        }
        let threshold = self.config.onset_fraction * peak;
        let onset = w
            .samples
            .iter()
            .position(|s| s.abs() > threshold)
            .expect("peak exceeds threshold");
        let start = onset as isize - self.config.pre_onset_len() as isize;
        let clip: Vec<f64> = (0..self.config.clip_len())
            .map(|j| {
                let i = start + j as isize;
                if i >= 0 {
                    w.samples.get(i as usize).copied().unwrap_or(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        let clip_peak = clip.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        Ok(Waveform::new(
            clip.into_iter().map(|s| s / clip_peak).collect(),
            w.sample_rate_hz,
        ))
    }

    /// Power spectrum (bins 0..=n_fft/2) of every frame.
    pub fn power_frames(&self, w: &Waveform) -> Vec<Vec<f64>> {
        let frame = self.config.frame_len();
        let hop = self.config.hop_len();
        let n_fft = self.config.n_fft;
        let frames = self.config.frame_count(w.len());
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        (0..frames)
            .map(|t| {
                let seg = &w.samples[t * hop..t * hop + frame];
                for (i, c) in buf.iter_mut().enumerate() {
                    let v = if i < frame { seg[i] * self.window[i] } else { 0.0 };
                    *c = Complex::new(v, 0.0);
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                buf[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect()
            })
            .collect()
    }

    fn log_mel_rows(&self, power: &[Vec<f64>]) -> Vec<Vec<f64>> {
        power
            .iter()
            .map(|p| {
                self.filterbank
                    .iter()
                    .map(|filt| {
                        let e: f64 = filt.iter().zip(p).map(|(a, b)| a * b).sum();
                        e.max(self.config.log_floor).ln()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn log_mel(&self, w: &Waveform) -> Vec<Vec<f64>> {
        self.log_mel_rows(&self.power_frames(w))
    }

    fn mfcc_from_log_mel(&self, log_mel: &[Vec<f64>]) -> MfccMatrix {
        let rows: Vec<Vec<f64>> = log_mel
            .iter()
            .map(|row| dct2_ortho(row, self.config.n_mfcc))
            .collect();
        MfccMatrix::from_rows(&rows, self.config.frame_len(), self.config.hop_len())
    }

    pub fn compute_mfcc(&self, w: &Waveform) -> MfccMatrix {
        self.mfcc_from_log_mel(&self.log_mel(w))
    }

    fn chroma_from_power(&self, power: &[Vec<f64>]) -> Vec<f64> {
        let mut acc = [0.0; CHROMA_BINS];
        let bin_hz = self.config.sample_rate_hz as f64 / self.config.n_fft as f64;
        for p in power {
            for (k, v) in p.iter().enumerate() {
                let f = k as f64 * bin_hz;
                if f < self.config.chroma_min_hz {
                    continue;
                }
                acc[pitch_class(f)] += v;
            }
        }
        let frames = power.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= frames);
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            acc.iter().map(|a| a / total).collect()
        } else {
            vec![1.0 / CHROMA_BINS as f64; CHROMA_BINS]
        }
    }

    pub fn compute_chroma(&self, w: &Waveform) -> Vec<f64> {
        self.chroma_from_power(&self.power_frames(w))
    }

    pub fn compute_mel_stats(&self, w: &Waveform) -> Vec<f64> {
        mel_stats_from_rows(&self.log_mel(w), self.config.n_mels)
    }

    /// All audio descriptors of an already clipped clip, sharing one STFT.
    pub fn features(&self, clip: &Waveform) -> AudioFeature {
        let power = self.power_frames(clip);
        let log_mel = self.log_mel_rows(&power);
        AudioFeature {
            mfcc: self.mfcc_from_log_mel(&log_mel),
            chroma: self.chroma_from_power(&power),
            mel_stats: mel_stats_from_rows(&log_mel, self.config.n_mels),
        }
    }

    /// Normalizes and clips a raw recording, then describes it.
    pub fn process(&self, raw: &Waveform) -> Result<(Waveform, AudioFeature)> {
        let clip = self.normalize_and_clip(raw)?;
        let feature = self.features(&clip);
        Ok((clip, feature))
    }
}

fn mel_stats_from_rows(rows: &[Vec<f64>], n_mels: usize) -> Vec<f64> {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let (mean, std) = column_stats(&flat, rows.len(), n_mels);
    mean.into_iter().chain(std).collect()
}

/// Pitch class of `hz`, with A = 0.
pub fn pitch_class(hz: f64) -> usize {
    let semis = (12.0 * (hz / 440.0).log2()).round() as i64;
    semis.rem_euclid(CHROMA_BINS as i64) as usize
}

/// Triangular filters between `n_mels + 2` mel-spaced edges, evaluated at
/// each bin's center frequency.
fn mel_filterbank(cfg: &DspConfig) -> Vec<Vec<f64>> {
    let bins = cfg.n_fft / 2 + 1;
    let lo = cfg.hz_to_mel(cfg.fmin_hz);
    let hi = cfg.hz_to_mel(cfg.fmax_hz);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| cfg.mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate_hz as f64 / cfg.n_fft as f64;
    (0..cfg.n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f >= l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f <= r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II, first `keep` coefficients.
fn dct2_ortho(x: &[f64], keep: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..keep)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .sum();
            let norm = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * norm
        })
        .collect()
}

pub fn normalize_and_clip(w: &Waveform) -> Result<Waveform> {
    AudioFrontend::reference().normalize_and_clip(w)
}

pub fn compute_mfcc(w: &Waveform) -> MfccMatrix {
    AudioFrontend::reference().compute_mfcc(w)
}

pub fn compute_chroma(w: &Waveform) -> Vec<f64> {
    AudioFrontend::reference().compute_chroma(w)
}

pub fn compute_mel_stats(w: &Waveform) -> Vec<f64> {
    AudioFrontend::reference().compute_mel_stats(w)
}

/// Frame-averaged mel-cepstral distortion over coefficients 1.. (c0 excluded),
/// across the first `min(frames_a, frames_b)` frames.
pub fn mcd(a: &MfccMatrix, b: &MfccMatrix) -> Result<f64> {
    if a.coeffs != b.coeffs {
        return Err(Error::DimensionMismatch {
            component: "mfcc",
            left: a.coeffs,
            right: b.coeffs,
        });
    }
    let frames = a.frames.min(b.frames);
    if frames == 0 {
        return Err(Error::NoOverlap);
    }
    let total: f64 = (0..frames)
        .map(|t| {
            let sq: f64 = a.row(t)[1..]
                .iter()
                .zip(&b.row(t)[1..])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            MCD_SCALE * (2.0 * sq).sqrt()
        })
        .sum();
    Ok(total / frames as f64)
}
