//! Audio prediction error as the store grows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TestSet;
use crate::audio::mcd;
use crate::error::Result;
use crate::store::{AvStore, StoreView, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub samples: usize,
    /// Scene of the most recent strike in the snapshot.
    pub scene: u32,
    pub active_entries: usize,
    /// Mean MCD over active test entries; +∞ for an empty snapshot.
    pub mean_mcd: f64,
}

/// MCD between each active entry's ground truth and the clip retrieved for
/// its visual feature.
pub fn entry_errors(store: StoreView<'_>, test: &TestSet, active_scene: u32, w: &WeightVector) -> Result<Vec<f64>> {
    test.entries
        .par_iter()
        .filter(|e| e.point.scene_id <= active_scene)
        .map(|e| {
            let rec = store.predict_audio(&e.visual, w)?;
            mcd(&rec.audio.mfcc, &e.audio.mfcc)
        })
        .collect()
}

/// Evaluates prefixes of an exploration store every `interval` strikes (and
/// at the end). Test entries of a scene are active once that scene has
/// started, i.e. once the store holds a strike from it.
pub fn eval_audio_prediction(store: &AvStore, test: &TestSet, w: &WeightVector, interval: usize) -> Result<Vec<CurvePoint>> {
    let records = store.records();
    let total = records.len();
    let interval = interval.max(1);
    let mut sizes: Vec<usize> = (0..=total).step_by(interval).collect();
    if sizes.last() != Some(&total) {
        sizes.push(total);
    }
    sizes
        .into_iter()
        .map(|n| {
            if n == 0 {
                let scene = records.first().map_or(0, |r| r.point.scene_id);
                let active = test.entries.iter().filter(|e| e.point.scene_id <= scene).count();
                return Ok(CurvePoint {
                    samples: 0,
                    scene,
                    active_entries: active,
                    mean_mcd: f64::INFINITY,
                });
            }
            let scene = records[n - 1].point.scene_id;
            let errors = entry_errors(store.prefix(n), test, scene, w)?;
            let mean = if errors.is_empty() {
                f64::INFINITY
            } else {
                errors.iter().sum::<f64>() / errors.len() as f64
            };
            Ok(CurvePoint {
                samples: n,
                scene,
                active_entries: errors.len(),
                mean_mcd: mean,
            })
        })
        .collect()
}

/// Trapezoidal area under the finite part of a curve.
pub fn area_under_curve(curve: &[CurvePoint]) -> f64 {
    let finite: Vec<&CurvePoint> = curve.iter().filter(|c| c.mean_mcd.is_finite()).collect();
    finite
        .windows(2)
        .map(|w| (w[1].samples - w[0].samples) as f64 * 0.5 * (w[0].mean_mcd + w[1].mean_mcd))
        .sum()
}
