//! Material classification heads over visual, audio or joint features.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TestSet;
use crate::audio::AudioFeature;
use crate::error::{Error, Result};
use crate::mlp::{Mlp, Standardizer, TrainParams};
use crate::rng;
use crate::scene::{MaterialClass, World};
use crate::store::AVRecord;
use crate::visual::VisualFeature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadVariant {
    VisionOnly,
    AudioOnly,
    Audiovisual,
}

impl HeadVariant {
    pub const ALL: [HeadVariant; 3] = [HeadVariant::VisionOnly, HeadVariant::AudioOnly, HeadVariant::Audiovisual];

    pub fn name(self) -> &'static str {
        match self {
            HeadVariant::VisionOnly => "vision_only",
            HeadVariant::AudioOnly => "audio_only",
            HeadVariant::Audiovisual => "audiovisual",
        }
    }

    /// Input vector of this head for one strike.
    pub fn input(self, visual: &VisualFeature, audio: &AudioFeature) -> Vec<f64> {
        match self {
            HeadVariant::VisionOnly => visual.concatenated(),
            HeadVariant::AudioOnly => audio.summary(),
            HeadVariant::Audiovisual => {
                let mut v = visual.concatenated();
                v.extend(audio.summary());
                v
            }
        }
    }
}

impl fmt::Display for HeadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown {
                kind: "head variant",
                id: s.to_string(),
            })
    }
}

/// A strike with its material label.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub visual: &'a VisualFeature,
    pub audio: &'a AudioFeature,
    pub material: MaterialClass,
}

/// Labels stored records with the material of the part they struck.
pub fn label_records<'a>(world: &World, records: &'a [AVRecord]) -> Result<Vec<Labeled<'a>>> {
    records
        .iter()
        .map(|r| {
            Ok(Labeled {
                visual: &r.visual,
                audio: &r.audio,
                material: world.material_of(&r.point)?,
            })
        })
        .collect()
}

pub fn label_test_set(test: &TestSet) -> Vec<Labeled<'_>> {
    test.entries
        .iter()
        .map(|e| Labeled {
            visual: &e.visual,
            audio: &e.audio,
            material: e.material,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub variant: HeadVariant,
    pub standardizer: Standardizer,
    pub net: Mlp,
}

impl ClassifierHead {
    /// Probabilities over [`MaterialClass::ALL`].
    pub fn predict_proba(&self, sample: &Labeled<'_>) -> Vec<f64> {
        let x = self.standardizer.apply(&self.variant.input(sample.visual, sample.audio));
        self.net.predict_proba(&x)
    }

    pub fn predict(&self, sample: &Labeled<'_>) -> MaterialClass {
        let x = self.standardizer.apply(&self.variant.input(sample.visual, sample.audio));
        MaterialClass::from_index(self.net.predict(&x)).expect("six output classes")
    }
}

/// Trains one head. Fails unless at least two materials are present.
pub fn train_head(variant: HeadVariant, samples: &[Labeled<'_>], params: &TrainParams) -> Result<ClassifierHead> {
    let first = samples.first().map(|s| s.material);
    if samples.iter().all(|s| Some(s.material) == first) {
        return Err(Error::validation(
            "samples",
            "training a head needs at least two materials",
        ));
    }
    let raw: Vec<Vec<f64>> = samples.iter().map(|s| variant.input(s.visual, s.audio)).collect();
    let standardizer = Standardizer::fit(&raw);
    let xs: Vec<Vec<f64>> = raw.iter().map(|x| standardizer.apply(x)).collect();
    let ys: Vec<usize> = samples.iter().map(|s| s.material.index()).collect();
    let mut net = Mlp::new(xs[0].len(), params.hidden, MaterialClass::COUNT, params.seed);
    net.train(&xs, &ys, params);
    Ok(ClassifierHead {
        variant,
        standardizer,
        net,
    })
}

/// Mean per-class recall over the classes present in `truth`.
pub fn balanced_accuracy(predicted: &[MaterialClass], truth: &[MaterialClass]) -> f64 {
    let mut hits = [0usize; MaterialClass::COUNT];
    let mut totals = [0usize; MaterialClass::COUNT];
    for (p, t) in predicted.iter().zip(truth) {
        totals[t.index()] += 1;
        if p == t {
            hits[t.index()] += 1;
        }
    }
    let present: Vec<f64> = (0..MaterialClass::COUNT)
        .filter(|&c| totals[c] > 0)
        .map(|c| hits[c] as f64 / totals[c] as f64)
        .collect();
    if present.is_empty() {
        return 0.0;
    }
    present.iter().sum::<f64>() / present.len() as f64
}

/// Balanced accuracy of `head` on `test`.
pub fn evaluate_head(head: &ClassifierHead, test: &[Labeled<'_>]) -> f64 {
    let predicted: Vec<MaterialClass> = test.iter().map(|s| head.predict(s)).collect();
    let truth: Vec<MaterialClass> = test.iter().map(|s| s.material).collect();
    balanced_accuracy(&predicted, &truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialPoint {
    pub run: usize,
    pub variant: HeadVariant,
    pub samples: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialEvalConfig {
    pub runs: usize,
    pub train: TrainParams,
}

impl Default for MaterialEvalConfig {
    fn default() -> Self {
        MaterialEvalConfig {
            runs: 20,
            train: TrainParams::default(),
        }
    }
}

/// Trains every head on growing prefixes of the training strikes, with the
/// order reshuffled in each run, and scores it on `test`. A prefix holding a
/// single material is scored as a constant predictor of that material.
pub fn eval_material(
    train: &[Labeled<'_>],
    test: &[Labeled<'_>],
    checkpoints: &[usize],
    config: &MaterialEvalConfig,
    seed: u64,
) -> Result<Vec<MaterialPoint>> {
    let truth: Vec<MaterialClass> = test.iter().map(|s| s.material).collect();
    let mut jobs = Vec::new();
    for run in 0..config.runs {
        for &n in checkpoints {
            for variant in HeadVariant::ALL {
                jobs.push((run, n.min(train.len()), variant));
            }
        }
    }
    jobs.par_iter()
        .map(|&(run, n, variant)| {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng::stream(seed, "material-order", &[run as u64]));
            let subset: Vec<Labeled<'_>> = order[..n].iter().map(|&i| train[i]).collect();
            let accuracy = if subset.is_empty() {
                0.0
            } else if subset.iter().all(|s| s.material == subset[0].material) {
                balanced_accuracy(&vec![subset[0].material; truth.len()], &truth)
            } else {
                let params = TrainParams {
                    seed: rng::derive_seed(seed, "material-head", &[run as u64, n as u64, variant as u64]),
                    ..config.train
                };
                evaluate_head(&train_head(variant, &subset, &params)?, test)
            };
            Ok(MaterialPoint {
                run,
                variant,
                samples: n,
                accuracy,
            })
        })
        .collect()
}
