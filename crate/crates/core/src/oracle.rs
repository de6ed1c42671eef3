//! Ground-truth impact synthesis.
//!
//! Stands in for the impact tool and microphone: a strike on a part is a sum
//! of exponentially damped sinusoids whose gains depend on where the part is
//! hit, plus a short broadband click and optional white background noise.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scene::{InteractionPoint, MaterialClass, World};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
/// Upper bound on the number of modes in a profile.
pub const MAX_MODES: usize = 32;

/// Length of a raw synthesized strike.
pub const STRIKE_SECONDS: f64 = 0.5;
/// Silence before the strike onset in a raw strike.
pub const PRE_ROLL_SECONDS: f64 = 0.05;
pub const CLICK_SECONDS: f64 = 0.005;
pub const CLICK_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub frequency_hz: f64,
    pub damping_per_s: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalProfile {
    pub modes: Vec<Mode>,
}

impl ModalProfile {
    pub fn new(mut modes: Vec<Mode>) -> Result<Self> {
        if modes.is_empty() || modes.len() > MAX_MODES {
            return Err(Error::validation(
                "modes",
                format!("expected 1..={MAX_MODES} modes, got {}", modes.len()),
            ));
        }
        for (i, m) in modes.iter().enumerate() {
            let ok = m.frequency_hz > 0.0
                && m.damping_per_s > 0.0
                && m.gain >= 0.0
                && m.frequency_hz.is_finite()
                && m.damping_per_s.is_finite()
                && m.gain.is_finite();
            if !ok {
                return Err(Error::validation(
                    format!("modes[{i}]"),
                    format!("frequency and damping must be positive, gain non-negative: {m:?}"),
                ));
            }
        }
        modes.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
        Ok(ModalProfile { modes })
    }

    /// Draws a profile from the material's template. `pitch_scale` multiplies
    /// every drawn frequency.
    pub fn from_template(material: MaterialClass, pitch_scale: f64, rng: &mut StreamRng) -> Self {
        let t = MaterialTemplate::for_material(material);
        let count = rng.random_range(t.mode_count.0..=t.mode_count.1);
        let modes = (0..count)
            .map(|_| Mode {
                frequency_hz: rng.random_range(t.frequency_hz.0..t.frequency_hz.1) * pitch_scale,
                damping_per_s: rng.random_range(t.damping_per_s.0..t.damping_per_s.1),
                gain: rng.random_range(0.2..1.0),
            })
            .collect();
        ModalProfile::new(modes).expect("template ranges are valid")
    }

    pub fn scaled(&self, pitch_scale: f64) -> Self {
        ModalProfile {
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    frequency_hz: m.frequency_hz * pitch_scale,
                    ..*m
                })
                .collect(),
        }
    }
}

/// Base modal ranges per material.
#[derive(Debug, Clone, Copy)]
pub struct MaterialTemplate {
    pub frequency_hz: (f64, f64),
    pub damping_per_s: (f64, f64),
    pub mode_count: (usize, usize),
}

impl MaterialTemplate {
    pub fn for_material(material: MaterialClass) -> Self {
        use MaterialClass::*;
        let (f, d, n) = match material {
            Metal => ((2000.0, 6000.0), (5.0, 20.0), (4, 8)),
            Glass => ((3000.0, 7000.0), (8.0, 30.0), (2, 3)),
            Ceramic => ((2000.0, 5000.0), (20.0, 60.0), (3, 6)),
            Wood => ((300.0, 1500.0), (40.0, 120.0), (3, 6)),
            Plastic => ((500.0, 2000.0), (60.0, 150.0), (3, 6)),
            Rubber => ((100.0, 500.0), (150.0, 400.0), (2, 5)),
        };
        MaterialTemplate {
            frequency_hz: f,
            damping_per_s: d,
            mode_count: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Waveform {
            samples,
            sample_rate_hz,
        }
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Self {
        Waveform::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |acc, s| acc.max(s.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Waveform::new(
            self.samples.iter().map(|s| s * factor).collect(),
            self.sample_rate_hz,
        )
    }

    /// Writes the clip as 16-bit PCM mono. Samples are clamped to [-1, 1].
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate_hz,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer =
            hound::WavWriter::create(path, spec).map_err(|e| Error::Format(e.to_string()))?;
        for s in &self.samples {
            let v = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
            writer
                .write_sample(v)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        writer.finalize().map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrikeParams {
    pub energy: f64,
    pub noise_level: f64,
}

impl Default for StrikeParams {
    fn default() -> Self {
        StrikeParams {
            energy: 1.0,
            noise_level: 0.0,
        }
    }
}

impl StrikeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.energy > 0.0 && self.energy.is_finite()) {
            return Err(Error::validation("energy", "must be positive"));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::validation("noise_level", "must be non-negative"));
        }
        Ok(())
    }
}

/// Synthesizes the raw (unnormalized) strike recorded when `point` is hit.
pub fn synthesize_impact(
    point: &InteractionPoint,
    world: &World,
    strike: StrikeParams,
    seed: u64,
) -> Result<Waveform> {
    let (object, part) = world.resolve(point)?;
    synthesize_modes(
        &part.modal_profile,
        object.size_scale,
        point.u,
        strike,
        world.sample_rate_hz,
        seed,
    )
}

/// Modal synthesis on an explicit profile; the core of [`synthesize_impact`].
pub fn synthesize_modes(
    profile: &ModalProfile,
    size_scale: f64,
    u: f64,
    strike: StrikeParams,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<Waveform> {
    strike.validate()?;
    let rate = sample_rate_hz as f64;
    let nyquist = rate / 2.0;
    for (i, m) in profile.modes.iter().enumerate() {
        let f = m.frequency_hz * size_scale;
        if f >= nyquist {
            return Err(Error::Synthesis {
                mode: i,
                reason: format!("{f:.1} Hz is at or above Nyquist ({nyquist:.1} Hz)"),
            });
        }
    }

    let len = (STRIKE_SECONDS * rate).round() as usize;
    let onset = (PRE_ROLL_SECONDS * rate).round() as usize;
    let click_len = (CLICK_SECONDS * rate).round() as usize;

    // (angular frequency, damping, spatial gain); mode numbering starts at 1
    let terms: Vec<(f64, f64, f64)> = profile
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let spatial = (PI * (i + 1) as f64 * u).sin().abs();
            (
                2.0 * PI * m.frequency_hz * size_scale,
                m.damping_per_s,
                m.gain * spatial,
            )
        })
        .collect();

    let mut click_rng = rng::stream(seed, "click", &[]);
    let click: Vec<f64> = (0..click_len)
        .map(|_| click_rng.random_range(-1.0..1.0) * CLICK_AMPLITUDE)
        .collect();

    let mut samples = vec![0.0; len];
    for (n, sample) in samples.iter_mut().enumerate().skip(onset) {
        let k = n - onset;
        let t = k as f64 / rate;
        let mut s: f64 = terms
            .iter()
            .map(|&(w, d, g)| g * (-d * t).exp() * (w * t).sin())
            .sum();
        if k < click_len {
            s += click[k];
        }
        *sample = strike.energy * s;
    }

    if strike.noise_level > 0.0 {
        let mut noise_rng = rng::stream(seed, "background-noise", &[]);
        let normal = Normal::new(0.0, strike.noise_level).expect("finite std");
        for s in samples.iter_mut() {
            *s += normal.sample(&mut noise_rng);
        }
    }

    Ok(Waveform::new(samples, sample_rate_hz))
}

/// Sample-wise sum of two clips, renormalized to unit peak.
///
/// The shorter clip is treated as zero-padded. A silent sum is returned as is.
pub fn superimpose(a: &Waveform, b: &Waveform) -> Result<Waveform> {
    if a.sample_rate_hz != b.sample_rate_hz {
        return Err(Error::SampleRateMismatch(a.sample_rate_hz, b.sample_rate_hz));
    }
    let len = a.len().max(b.len());
    let at = |w: &Waveform, i: usize| w.samples.get(i).copied().unwrap_or(0.0);
    let sum: Vec<f64> = (0..len).map(|i| at(a, i) + at(b, i)).collect();
    let out = Waveform::new(sum, a.sample_rate_hz);
    let peak = out.peak();
    if peak > 0.0 {
        Ok(out.scaled(1.0 / peak))
    } else {
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::tests::single_part_world;

    fn dft_peak_bin(x: &[f64]) -> usize {
        // independent O(n^2) magnitude scan
        let n = x.len();
        let mut best = (0, 0.0);
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let ph = -2.0 * PI * (k * i) as f64 / n as f64;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            let mag = re * re + im * im;
            if mag > best.1 {
                best = (k, mag);
            }
        }
        best.0
    }

    fn single(freq: f64) -> ModalProfile {
        ModalProfile::new(vec![Mode {
            frequency_hz: freq,
            damping_per_s: 10.0,
            gain: 1.0,
        }])
        .unwrap()
    }

    #[test]
    fn single_mode_peaks_at_its_frequency() {
        let w = synthesize_modes(&single(440.0), 1.0, 0.5, StrikeParams::default(), 16_000, 3)
            .unwrap();
        // 2000-sample window after onset: bin width 8 Hz
        let onset = 800;
        let window = &w.samples[onset..onset + 2000];
        let bin = dft_peak_bin(window);
        let hz = bin as f64 * 16_000.0 / 2000.0;
        assert!((hz - 440.0).abs() <= 8.0, "peak at {hz} Hz");
    }

    #[test]
    fn energy_is_linear() {
        let p = single(1000.0);
        let one = synthesize_modes(&p, 1.0, 0.3, StrikeParams::default(), 16_000, 5).unwrap();
        let two = synthesize_modes(
            &p,
            1.0,
            0.3,
            StrikeParams {
                energy: 2.0,
                noise_level: 0.0,
            },
            16_000,
            5,
        )
        .unwrap();
        for (a, b) in one.samples.iter().zip(&two.samples) {
            assert_eq!(*b, 2.0 * a);
        }
    }

    #[test]
    fn u_zero_leaves_only_the_click() {
        let w = synthesize_modes(&single(700.0), 1.0, 0.0, StrikeParams::default(), 16_000, 9)
            .unwrap();
        let onset = 800;
        let click_end = onset + 80;
        assert!(w.samples[onset..click_end].iter().any(|s| *s != 0.0));
        assert!(w.samples[click_end..].iter().all(|s| *s == 0.0));
        assert!(w.samples[..onset].iter().all(|s| *s == 0.0));
    }

    #[test]
    fn nyquist_violation_names_the_mode() {
        let p = ModalProfile::new(vec![
            Mode {
                frequency_hz: 1000.0,
                damping_per_s: 5.0,
                gain: 1.0,
            },
            Mode {
                frequency_hz: 7000.0,
                damping_per_s: 5.0,
                gain: 1.0,
            },
        ])
        .unwrap();
        let err = synthesize_modes(&p, 1.2, 0.5, StrikeParams::default(), 16_000, 1).unwrap_err();
        assert!(matches!(err, Error::Synthesis { mode: 1, .. }), "{err}");
    }

    #[test]
    fn profile_bounds() {
        assert!(ModalProfile::new(vec![]).is_err());
        let many = vec![
            Mode {
                frequency_hz: 100.0,
                damping_per_s: 1.0,
                gain: 1.0
            };
            33
        ];
        assert!(ModalProfile::new(many).is_err());
    }

    #[test]
    fn deterministic_synthesis_from_world() {
        let world = single_part_world(MaterialClass::Metal, 11);
        let point = world.scenes[0].point(0, 0, 0.4);
        let strike = StrikeParams {
            energy: 1.0,
            noise_level: 0.01,
        };
        let a = synthesize_impact(&point, &world, strike, 42).unwrap();
        let b = synthesize_impact(&point, &world, strike, 42).unwrap();
        assert_eq!(a, b);
        let c = synthesize_impact(&point, &world, strike, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn superimpose_with_silence_is_identity_up_to_scale() {
        let x = synthesize_modes(&single(900.0), 1.0, 0.5, StrikeParams::default(), 16_000, 2)
            .unwrap();
        let s = Waveform::silence(x.len(), 16_000);
        let y = superimpose(&x, &s).unwrap();
        let peak = x.peak();
        for (a, b) in x.samples.iter().zip(&y.samples) {
            assert!((a / peak - b).abs() < 1e-12);
        }
    }

    #[test]
    fn superimpose_self_removes_scale() {
        let x = synthesize_modes(&single(900.0), 1.0, 0.5, StrikeParams::default(), 16_000, 2)
            .unwrap();
        let y = superimpose(&x, &x).unwrap();
        let z = superimpose(&x, &Waveform::silence(0, 16_000)).unwrap();
        for (a, b) in y.samples.iter().zip(&z.samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn superimpose_keeps_both_bands() {
        let a = synthesize_modes(&single(500.0), 1.0, 0.5, StrikeParams::default(), 16_000, 2)
            .unwrap();
        let b = synthesize_modes(&single(3000.0), 1.0, 0.5, StrikeParams::default(), 16_000, 3)
            .unwrap();
        let mix = superimpose(&a, &b).unwrap();
        let window = &mix.samples[800..2800];
        // magnitude at each expected bin vs a far-away bin
        let mag = |hz: f64| {
            let k = (hz / 8.0).round() as usize;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in window.iter().enumerate() {
                let ph = -2.0 * PI * (k * i) as f64 / 2000.0;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            (re * re + im * im).sqrt()
        };
        let floor = mag(6000.0);
        assert!(mag(500.0) > 50.0 * floor);
        assert!(mag(3000.0) > 50.0 * floor);
    }

    #[test]
    fn superimpose_rejects_rate_mismatch() {
        let a = Waveform::silence(10, 16_000);
        let b = Waveform::silence(10, 8_000);
        assert!(matches!(
            superimpose(&a, &b),
            Err(Error::SampleRateMismatch(16_000, 8_000))
        ));
    }
}
