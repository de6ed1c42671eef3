//! The audiovisual store: an append-only set of strikes, each holding the
//! interaction point, its visual embedding and the recorded audio, queried by
//! nearest neighbour in either modality.
//!
//! Visual distance is a weighted sum of per-component L2 norms. The weights
//! are fitted by least squares so that the visual distance of a pair predicts
//! the MCD of their sounds.

use std::io::{Read, Write};

use bincode::Options;
use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{mcd, AudioFeature, AudioFrontend, MfccMatrix};
use crate::error::{Error, Result};
use crate::oracle::{synthesize_impact, StrikeParams, Waveform};
use crate::rng;
use crate::scene::{draw_on_object, generate_world, InteractionPoint, ProceduralParams, ScenarioSpec, World};
use crate::visual::{extract_visual, FeatureKind, VisualFeature};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    /// Per-component weights in [`FeatureKind::ALL`] order.
    pub weights: [f64; 5],
    /// Regression intercept. Never part of the distance.
    pub intercept: f64,
}

impl WeightVector {
    pub fn uniform() -> Self {
        WeightVector {
            weights: [1.0; 5],
            intercept: 0.0,
        }
    }

    pub fn only(kind: FeatureKind, w: f64) -> Self {
        let mut weights = [0.0; 5];
        weights[kind as usize] = w;
        WeightVector {
            weights,
            intercept: 0.0,
        }
    }

    pub fn get(&self, kind: FeatureKind) -> f64 {
        self.weights[kind as usize]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WeightVector {
            weights: self.weights.map(|w| w * factor),
            intercept: self.intercept * factor,
        }
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-component L2 distances between two embeddings.
pub fn component_distances(a: &VisualFeature, b: &VisualFeature) -> Result<[f64; 5]> {
    let mut out = [0.0; 5];
    for (i, kind) in FeatureKind::ALL.iter().enumerate() {
        let (x, y) = (a.component(*kind), b.component(*kind));
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                component: kind.name(),
                left: x.len(),
                right: y.len(),
            });
        }
        out[i] = l2(x, y);
    }
    Ok(out)
}

/// Σ_k w_k ‖a_k − b_k‖₂.
pub fn visual_distance(a: &VisualFeature, b: &VisualFeature, w: &WeightVector) -> Result<f64> {
    Ok(component_distances(a, b)?
        .iter()
        .zip(&w.weights)
        .map(|(d, w)| d * w)
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    pub weights: WeightVector,
    /// Coefficient of determination of the unclamped fit on the training pairs.
    pub r_squared: f64,
    /// Components whose fitted weight was negative and clamped to zero.
    pub clamped: Vec<FeatureKind>,
}

/// Minimum number of pairs: five weights plus the intercept.
pub const MIN_FIT_PAIRS: usize = 6;

/// Ordinary least squares of MCD on the five component distances plus an
/// intercept. Negative weights are clamped to zero.
pub fn fit_weights(pairs: &[(VisualFeature, VisualFeature, f64)]) -> Result<WeightFit> {
    let rows: Vec<([f64; 5], f64)> = pairs
        .iter()
        .map(|(a, b, y)| Ok((component_distances(a, b)?, *y)))
        .collect::<Result<_>>()?;
    fit_distances(&rows)
}

/// [`fit_weights`] on precomputed component distances.
pub fn fit_distances(rows: &[([f64; 5], f64)]) -> Result<WeightFit> {
    if rows.len() < MIN_FIT_PAIRS {
        return Err(Error::validation(
            "pairs",
            format!("need at least {MIN_FIT_PAIRS} pairs, got {}", rows.len()),
        ));
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, 6, |i, j| if j < 5 { rows[i].0[j] } else { 1.0 });
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.1));

    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * n.max(6) as f64 * f64::EPSILON * 16.0;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    if rank < 6 {
        return Err(Error::RankDeficient { rank, cols: 6 });
    }
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| Error::Format(format!("least squares: {e}")))?;

    let fitted = &x * &beta;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let mut weights = [0.0; 5];
    let mut clamped = Vec::new();
    for (i, kind) in FeatureKind::ALL.iter().enumerate() {
        let w = beta[i];
        if w < 0.0 {
            warn!("fitted weight for {} is negative ({w:.4}); clamping to 0", kind.name());
            clamped.push(*kind);
            weights[i] = 0.0;
        } else {
            weights[i] = w;
        }
    }
    Ok(WeightFit {
        weights: WeightVector {
            weights,
            intercept: beta[5],
        },
        r_squared,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AVRecord {
    pub point: InteractionPoint,
    pub visual: VisualFeature,
    pub audio: AudioFeature,
    /// The normalized 300 ms clip.
    pub clip: Waveform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Insertion index of the record.
    pub index: usize,
    pub distance: f64,
}

/// Below this size distances are computed on the calling thread.
const PARALLEL_SCAN_MIN: usize = 512;

fn ranked(distances: Vec<f64>, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = distances
        .into_iter()
        .enumerate()
        .map(|(index, distance)| Neighbor { index, distance })
        .collect();
    let by = |a: &Neighbor, b: &Neighbor| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index));
    let k = k.min(all.len());
    if k > 0 && k < all.len() {
        all.select_nth_unstable_by(k - 1, by);
        all.truncate(k);
    }
    all.sort_by(by);
    all
}

/// Read-only view over the first records of a store.
#[derive(Debug, Clone, Copy)]
pub struct StoreView<'a> {
    records: &'a [AVRecord],
}

impl<'a> StoreView<'a> {
    pub fn new(records: &'a [AVRecord]) -> Self {
        StoreView { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &'a [AVRecord] {
        self.records
    }

    fn scan<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&AVRecord) -> Result<f64> + Sync,
    {
        if self.records.len() >= PARALLEL_SCAN_MIN {
            self.records.par_iter().map(&f).collect()
        } else {
            self.records.iter().map(f).collect()
        }
    }

    /// Exact k nearest records under the weighted visual distance; ties go to
    /// the earlier insertion.
    pub fn nearest_by_vision(&self, query: &VisualFeature, w: &WeightVector, k: usize) -> Result<Vec<Neighbor>> {
        if self.records.is_empty() {
            return Err(Error::EmptyStore);
        }
        let d = self.scan(|r| visual_distance(query, &r.visual, w))?;
        Ok(ranked(d, k))
    }

    /// Exact k nearest records under MCD.
    pub fn nearest_by_audio(&self, query: &MfccMatrix, k: usize) -> Result<Vec<Neighbor>> {
        if self.records.is_empty() {
            return Err(Error::EmptyStore);
        }
        let d = self.scan(|r| mcd(query, &r.audio.mfcc))?;
        Ok(ranked(d, k))
    }

    /// Audio exemplar of the visually nearest record.
    pub fn predict_audio(&self, query: &VisualFeature, w: &WeightVector) -> Result<&'a AVRecord> {
        let nn = self.nearest_by_vision(query, w, 1)?;
        Ok(&self.records[nn[0].index])
    }

    /// min over stored records of the visual distance; +∞ when empty.
    pub fn novelty(&self, candidate: &VisualFeature, w: &WeightVector) -> Result<f64> {
        self.records.iter().try_fold(f64::INFINITY, |acc, r| {
            Ok(acc.min(visual_distance(candidate, &r.visual, w)?))
        })
    }
}

pub const STORE_MAGIC: [u8; 8] = *b"CURIOAVS";
pub const STORE_VERSION: u32 = 1;

/// On-disk layout of a saved store; see the README for the field list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreFile {
    pub magic: [u8; 8],
    pub version: u32,
    pub config_hash: String,
    pub weights: WeightVector,
    pub records: Vec<AVRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AvStore {
    records: Vec<AVRecord>,
}

impl AvStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<AVRecord>) -> Self {
        AvStore { records }
    }

    /// Appends a record and returns the new size. Duplicates are kept.
    pub fn insert(&mut self, record: AVRecord) -> usize {
        if self.records.iter().any(|r| r.point == record.point) {
            debug!("duplicate interaction point inserted: {:?}", record.point);
        }
        self.records.push(record);
        self.records.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AVRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<AVRecord> {
        self.records
    }

    pub fn view(&self) -> StoreView<'_> {
        StoreView::new(&self.records)
    }

    /// The store as it was after the first `n` insertions.
    pub fn prefix(&self, n: usize) -> StoreView<'_> {
        StoreView::new(&self.records[..n.min(self.records.len())])
    }

    pub fn nearest_by_vision(&self, query: &VisualFeature, w: &WeightVector, k: usize) -> Result<Vec<Neighbor>> {
        self.view().nearest_by_vision(query, w, k)
    }

    pub fn nearest_by_audio(&self, query: &MfccMatrix, k: usize) -> Result<Vec<Neighbor>> {
        self.view().nearest_by_audio(query, k)
    }

    pub fn predict_audio(&self, query: &VisualFeature, w: &WeightVector) -> Result<&AVRecord> {
        self.view().predict_audio(query, w)
    }

    pub fn write_to<W: Write>(&self, writer: W, weights: &WeightVector, config_hash: &str) -> Result<()> {
        let file = StoreFile {
            magic: STORE_MAGIC,
            version: STORE_VERSION,
            config_hash: config_hash.to_string(),
            weights: *weights,
            records: self.records.clone(),
        };
        bincode::serialize_into(writer, &file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn read_from<R: Read>(mut reader: R) -> Result<StoreFile> {
        let mut buf = Vec::new();
        reader.read_to_end(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
        if buf.len() < 12 || buf[..8] != STORE_MAGIC {
            return Err(Error::Format("not a store file (bad magic)".into()));
        }
        let version = u32::from_le_bytes([buf[8], buf[9], buf[10], buf[11]]);
        if version != STORE_VERSION {
            return Err(Error::Format(format!(
                "unsupported store version {version} (expected {STORE_VERSION})"
            )));
        }
        // the limit keeps corrupt length prefixes from allocating
        bincode::options()
            .with_fixint_encoding()
            .allow_trailing_bytes()
            .with_limit(buf.len() as u64)
            .deserialize(&buf)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

/// Number of pretraining pairs used when none is configured.
pub const DEFAULT_PRETRAIN_PAIRS: usize = 300;

/// One strike observed for pretraining or evaluation.
pub struct Observation {
    pub point: InteractionPoint,
    pub visual: VisualFeature,
    pub clip: Waveform,
    pub audio: AudioFeature,
}

/// Strikes `point` and observes both modalities.
pub fn observe(
    world: &World,
    frontend: &AudioFrontend,
    point: InteractionPoint,
    strike: StrikeParams,
    visual_seed: u64,
    audio_seed: u64,
) -> Result<Observation> {
    let visual = extract_visual(&point, world, visual_seed)?;
    let raw = synthesize_impact(&point, world, strike, audio_seed)?;
    let (clip, audio) = frontend.process(&raw)?;
    Ok(Observation {
        point,
        visual,
        clip,
        audio,
    })
}

/// Pairs of strikes in a held-out pretraining world, with the MCD of their
/// sounds. A third of the pairs share a part, a third share an object and the
/// rest are arbitrary.
pub fn pretraining_pairs(
    world: &World,
    frontend: &AudioFrontend,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<([f64; 5], f64)>> {
    let mut rng = rng::stream(seed, "pretrain-pairs", &[]);
    let mut plan = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let s = rng.random_range(0..world.scenes.len());
        let scene = &world.scenes[s];
        let o = rng.random_range(0..scene.objects.len());
        let a = draw_on_object(scene, o, &mut rng);
        let b = match i % 3 {
            0 => InteractionPoint {
                u: crate::scene::training_u(rng.random()),
                ..a
            },
            1 => draw_on_object(scene, o, &mut rng),
            _ => {
                let s2 = &world.scenes[rng.random_range(0..world.scenes.len())];
                let o2 = rng.random_range(0..s2.objects.len());
                draw_on_object(s2, o2, &mut rng)
            }
        };
        plan.push((a, b));
    }
    plan.par_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let i = i as u64;
            let oa = observe(
                world,
                frontend,
                *a,
                StrikeParams::default(),
                rng::derive_seed(seed, "pretrain-visual", &[i, 0]),
                rng::derive_seed(seed, "pretrain-audio", &[i, 0]),
            )?;
            let ob = observe(
                world,
                frontend,
                *b,
                StrikeParams::default(),
                rng::derive_seed(seed, "pretrain-visual", &[i, 1]),
                rng::derive_seed(seed, "pretrain-audio", &[i, 1]),
            )?;
            Ok((
                component_distances(&oa.visual, &ob.visual)?,
                mcd(&oa.audio.mfcc, &ob.audio.mfcc)?,
            ))
        })
        .collect()
}

/// Learns weights on a fresh procedural world derived from `seed`, disjoint
/// from any experiment world.
pub fn pretrain_weights(seed: u64, frontend: &AudioFrontend, n_pairs: usize) -> Result<WeightFit> {
    let world_seed = rng::derive_seed(seed, "pretrain-world", &[]);
    let world = generate_world(&ScenarioSpec::procedural("pretrain", world_seed, ProceduralParams::default()))?;
    let rows = pretraining_pairs(&world, frontend, n_pairs, seed)?;
    let fit = fit_distances(&rows)?;
    debug!("pretrained weights {:?} (R² {:.3})", fit.weights.weights, fit.r_squared);
    Ok(fit)
}
