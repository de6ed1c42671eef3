//! Self-check of the audio front end against a slow, literal reimplementation.
//!
//! The reference here spells out every constant of the reference
//! configuration and uses a direct DFT, so a front end built from a modified
//! [`DspConfig`] fails the comparison.

use std::f64::consts::{LN_10, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{mcd, AudioFrontend, DspConfig, MfccMatrix};
use crate::oracle::Waveform;
use crate::rng;

pub const CHECK_CLIPS: usize = 20;
pub const MFCC_TOLERANCE: f64 = 1e-6;
pub const MCD_TOLERANCE: f64 = 1e-9;

const RATE: f64 = 16_000.0;
const CLIP: usize = 4800;
const FRAME: usize = 400;
const HOP: usize = 160;
const NFFT: usize = 512;
const MELS: usize = 26;
const COEFFS: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: &str, max_error: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: max_error <= tolerance,
            max_error,
            tolerance,
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// MFCCs of a 4800-sample clip at 16 kHz, computed the slow way.
pub fn reference_mfcc(samples: &[f64]) -> Vec<Vec<f64>> {
    let window: Vec<f64> = (0..FRAME).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / FRAME as f64).cos()).collect();
    let mel_hi = hz_to_mel(8000.0);
    let edges: Vec<f64> = (0..MELS + 2).map(|i| mel_to_hz(mel_hi * i as f64 / (MELS + 1) as f64)).collect();
    let frames = (samples.len() - FRAME) / HOP + 1;
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let x: Vec<f64> = (0..FRAME).map(|n| samples[t * HOP + n] * window[n]).collect();
        let power: Vec<f64> = (0..=NFFT / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, v) in x.iter().enumerate() {
                    let phase = -2.0 * PI * (k * n) as f64 / NFFT as f64;
                    re += v * phase.cos();
                    im += v * phase.sin();
                }
                re * re + im * im
            })
            .collect();
        let log_mel: Vec<f64> = (0..MELS)
            .map(|m| {
                let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut e = 0.0;
                for (k, p) in power.iter().enumerate() {
                    let f = k as f64 * RATE / NFFT as f64;
                    let weight = if l <= f && f <= c {
                        (f - l) / (c - l)
                    } else if c < f && f <= r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    };
                    e += weight * p;
                }
                e.max(1e-10).ln()
            })
            .collect();
        let cep: Vec<f64> = (0..COEFFS)
            .map(|q| {
                let mut s = 0.0;
                for (m, v) in log_mel.iter().enumerate() {
                    s += v * (PI * q as f64 * (m as f64 + 0.5) / MELS as f64).cos();
                }
                let norm = if q == 0 { 1.0 / MELS as f64 } else { 2.0 / MELS as f64 };
                s * norm.sqrt()
            })
            .collect();
        out.push(cep);
    }
    out
}

/// Decaying partials over a noise bed; never silent in any mel band.
pub fn check_clip(seed: u64, index: usize) -> Waveform {
    let mut r = rng::stream(seed, "dsp-check-clip", &[index as u64]);
    let partials: Vec<(f64, f64, f64)> = (0..r.random_range(1..=4))
        .map(|_| (r.random_range(80.0..7500.0), r.random_range(5.0..200.0), r.random_range(0.2..1.0)))
        .collect();
    let noise = Normal::new(0.0, 0.01).expect("valid std");
    let samples = (0..CLIP)
        .map(|n| {
            let t = n as f64 / RATE;
            let tone: f64 = partials
                .iter()
                .map(|(f, d, g)| g * (-d * t).exp() * (2.0 * PI * f * t).sin())
                .sum();
            tone + noise.sample(&mut r)
        })
        .collect();
    Waveform::new(samples, RATE as u32)
}

fn max_abs_diff(a: &MfccMatrix, b: &[Vec<f64>]) -> f64 {
    if a.frames != b.len() || b.iter().any(|row| row.len() != a.coeffs) {
        return f64::INFINITY;
    }
    (0..a.frames)
        .flat_map(|t| a.row(t).iter().zip(&b[t]).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Runs every check against a front end built from `config`.
pub fn validate_dsp(config: &DspConfig) -> Vec<CheckResult> {
    let frontend = match AudioFrontend::new(config.clone()) {
        Ok(f) => f,
        Err(_) => return vec![CheckResult::new("config", f64::INFINITY, 0.0)],
    };
    let clips: Vec<Waveform> = (0..CHECK_CLIPS).map(|i| check_clip(7, i)).collect();
    let mut results = Vec::new();

    let mut worst = 0.0f64;
    for clip in &clips {
        let got = frontend.compute_mfcc(clip);
        worst = worst.max(max_abs_diff(&got, &reference_mfcc(&clip.samples)));
    }
    results.push(CheckResult::new("mfcc-vs-reference", worst, MFCC_TOLERANCE));

    let zeros = MfccMatrix::from_rows(&[vec![0.0; COEFFS]], FRAME, HOP);
    let mut ones = vec![1.0; COEFFS];
    ones[0] = 42.0;
    let ones = MfccMatrix::from_rows(&[ones], FRAME, HOP);
    let expected = 10.0 / LN_10 * 24f64.sqrt();
    let err = mcd(&zeros, &ones).map_or(f64::INFINITY, |d| (d - expected).abs());
    results.push(CheckResult::new("mcd-closed-form", err, MCD_TOLERANCE));

    let mut worst = 0.0f64;
    for clip in &clips {
        let m = frontend.compute_mfcc(clip);
        worst = worst.max(mcd(&m, &m).unwrap_or(f64::INFINITY));
    }
    results.push(CheckResult::new("mcd-identity", worst, 0.0));

    let mut normalized = 0.0f64;
    let mut bypassed = 0.0f64;
    for clip in &clips {
        let base = frontend.process(clip).map(|(_, f)| f.mfcc);
        let raw = frontend.compute_mfcc(clip);
        for s in [0.25, 0.5, 2.0] {
            let scaled = clip.scaled(s);
            let d = match (&base, frontend.process(&scaled)) {
                (Ok(a), Ok((_, b))) => mcd(a, &b.mfcc).unwrap_or(f64::INFINITY),
                _ => f64::INFINITY,
            };
            normalized = normalized.max(d);
            let d = mcd(&raw, &frontend.compute_mfcc(&scaled)).unwrap_or(f64::INFINITY);
            bypassed = bypassed.max(d);
        }
    }
    results.push(CheckResult::new("amplitude-normalized", normalized, MCD_TOLERANCE));
    results.push(CheckResult::new("amplitude-unnormalized", bypassed, MCD_TOLERANCE));
    results
}
