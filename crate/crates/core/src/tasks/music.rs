//! Imitating a demonstrated note by finding the strike whose predicted sound
//! is closest to it.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{mcd, AudioFrontend, MfccMatrix};
use crate::error::{Error, Result};
use crate::oracle::{synthesize_impact, StrikeParams, Waveform};
use crate::rng;
use crate::scene::{training_u, InteractionPoint, World};
use crate::store::{StoreView, WeightVector};
use crate::visual::extract_visual;

/// How human demonstrations differ from the tool's strikes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoParams {
    pub energy: (f64, f64),
    pub noise_level: f64,
    pub u: (f64, f64),
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            energy: (0.5, 2.0),
            noise_level: 0.01,
            u: (0.1, 0.9),
        }
    }
}

impl DemoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.energy.0 > 0.0 && self.energy.0 <= self.energy.1 && self.energy.1.is_finite()) {
            return Err(Error::validation("demo.energy", "must be a finite positive range"));
        }
        if !(0.0..=0.02).contains(&self.noise_level) {
            return Err(Error::validation("demo.noise_level", "must lie in [0, 0.02]"));
        }
        if !(0.0 <= self.u.0 && self.u.0 <= self.u.1 && self.u.1 <= 1.0) {
            return Err(Error::validation("demo.u", "must be a sub-range of [0, 1]"));
        }
        Ok(())
    }

    /// Draws the strike of one demonstration.
    pub fn draw(&self, rng: &mut impl Rng) -> (f64, StrikeParams) {
        let u = rng.random_range(self.u.0..=self.u.1);
        let energy = rng.random_range(self.energy.0..=self.energy.1);
        (
            u,
            StrikeParams {
                energy,
                noise_level: self.noise_level,
            },
        )
    }
}

/// A human strike on a known part, recorded raw.
#[derive(Debug, Clone, PartialEq)]
pub struct Demo {
    pub point: InteractionPoint,
    pub strike: StrikeParams,
    pub waveform: Waveform,
}

/// Demonstration on a uniformly chosen part of scene `scene_id`.
pub fn note_demo(world: &World, scene_id: u32, params: &DemoParams, seed: u64, trial: usize) -> Result<Demo> {
    params.validate()?;
    let scene = world.scene(scene_id)?;
    let parts: Vec<(usize, usize)> = scene
        .objects
        .iter()
        .enumerate()
        .flat_map(|(oi, o)| (0..o.parts.len()).map(move |pi| (oi, pi)))
        .collect();
    let mut r = rng::stream(seed, "note-demo", &[scene_id as u64, trial as u64]);
    let (oi, pi) = parts[r.random_range(0..parts.len())];
    let (u, strike) = params.draw(&mut r);
    let point = scene.point(oi, pi, u);
    let waveform = synthesize_impact(&point, world, strike, r.random())?;
    Ok(Demo { point, strike, waveform })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImitationConfig {
    pub candidates_per_part: usize,
    pub seed: u64,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        ImitationConfig {
            candidates_per_part: 32,
            seed: 0,
        }
    }
}

/// Candidate strikes on every part of a scene with their visual features.
pub struct Candidates {
    pub points: Vec<InteractionPoint>,
    pub features: Vec<crate::visual::VisualFeature>,
}

impl Candidates {
    pub fn sample(world: &World, scene_id: u32, config: &ImitationConfig) -> Result<Self> {
        let scene = world.scene(scene_id)?;
        let mut points = Vec::new();
        for (oi, obj) in scene.objects.iter().enumerate() {
            for (pi, part) in obj.parts.iter().enumerate() {
                let mut r = rng::stream(
                    config.seed,
                    "imitation-candidates",
                    &[scene_id as u64, obj.object_id as u64, part.part_id as u64],
                );
                for _ in 0..config.candidates_per_part {
                    points.push(scene.point(oi, pi, training_u(r.random())));
                }
            }
        }
        let features = points
            .par_iter()
            .enumerate()
            .map(|(i, p)| extract_visual(p, world, rng::derive_seed(config.seed, "imitation-visual", &[i as u64])))
            .collect::<Result<_>>()?;
        Ok(Candidates { points, features })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Imitation {
    pub point: InteractionPoint,
    /// Index of the stored record whose clip was predicted for `point`.
    pub record: usize,
    pub mcd: f64,
}

/// Picks the candidate whose predicted sound is closest to the demo MFCCs.
/// Ties go to the earlier candidate. Candidates predicting the same record
/// share one MCD evaluation.
pub fn imitate_from_mfcc(demo: &MfccMatrix, store: StoreView<'_>, candidates: &Candidates, w: &WeightVector) -> Result<Imitation> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let predicted: Vec<usize> = candidates
        .features
        .par_iter()
        .map(|f| store.nearest_by_vision(f, w, 1).map(|n| n[0].index))
        .collect::<Result<_>>()?;
    let mut cache: HashMap<usize, f64> = HashMap::new();
    let mut best: Option<Imitation> = None;
    for (point, &rec) in candidates.points.iter().zip(&predicted) {
        let d = match cache.get(&rec) {
            Some(d) => *d,
            None => {
                let d = mcd(&store.records()[rec].audio.mfcc, demo)?;
                cache.insert(rec, d);
                d
            }
        };
        if best.is_none_or(|b| d < b.mcd) {
            best = Some(Imitation {
                point: *point,
                record: rec,
                mcd: d,
            });
        }
    }
    best.ok_or_else(|| Error::validation("candidates", "must not be empty"))
}

/// Processes a raw demo and imitates it.
pub fn imitate_note(
    demo: &Waveform,
    frontend: &AudioFrontend,
    store: StoreView<'_>,
    candidates: &Candidates,
    w: &WeightVector,
) -> Result<Imitation> {
    let (_, feature) = frontend.process(demo)?;
    imitate_from_mfcc(&feature.mfcc, store, candidates, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImitationTrial {
    pub trial: usize,
    pub target_object: u32,
    pub target_part: u32,
    pub chosen_object: u32,
    pub chosen_part: u32,
    pub mcd: f64,
    pub correct: bool,
}

/// Runs `trials` demonstrations on scene `scene_id`. A trial is correct when
/// the imitation strikes the demonstrated part.
#[allow(clippy::too_many_arguments)]
pub fn eval_imitation(
    world: &World,
    scene_id: u32,
    frontend: &AudioFrontend,
    store: StoreView<'_>,
    w: &WeightVector,
    demo: &DemoParams,
    config: &ImitationConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<ImitationTrial>> {
    let candidates = Candidates::sample(world, scene_id, config)?;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let d = note_demo(world, scene_id, demo, seed, t)?;
            let im = imitate_note(&d.waveform, frontend, store, &candidates, w)?;
            Ok(ImitationTrial {
                trial: t,
                target_object: d.point.object_id,
                target_part: d.point.part_id,
                chosen_object: im.point.object_id,
                chosen_part: im.point.part_id,
                mcd: im.mcd,
                correct: (d.point.object_id, d.point.part_id) == (im.point.object_id, im.point.part_id),
            })
        })
        .collect()
}

pub fn accuracy<T>(trials: &[T], correct: impl Fn(&T) -> bool) -> f64 {
    if trials.is_empty() {
        return 0.0;
    }
    trials.iter().filter(|t| correct(t)).count() as f64 / trials.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::{run_exploration, ExploreConfig, PolicyKind, Trajectory};
    use crate::scene::{generate_world, ScenarioSpec};
    use crate::store::AvStore;

    fn explored_xylophone() -> (World, Trajectory) {
        let world = generate_world(&ScenarioSpec::xylophone(3)).unwrap();
        let traj = run_exploration(
            &world,
            AudioFrontend::reference(),
            PolicyKind::Curiosity,
            WeightVector::uniform(),
            24,
            &ExploreConfig::default(),
            1,
        )
        .unwrap();
        (world, traj)
    }

    #[test]
    fn stored_clip_is_imitated_on_its_own_bar() {
        let (world, traj) = explored_xylophone();
        let cands = Candidates::sample(&world, 0, &ImitationConfig::default()).unwrap();
        let rec = &traj.store.records()[5];
        let im = imitate_from_mfcc(&rec.audio.mfcc, traj.store.view(), &cands, &WeightVector::uniform()).unwrap();
        assert_eq!(im.mcd, 0.0);
        assert_eq!(im.point.part_id, traj.store.records()[im.record].point.part_id);
        assert_eq!(traj.store.records()[im.record].audio.mfcc, rec.audio.mfcc);
    }

    #[test]
    fn demo_amplitude_does_not_change_the_choice() {
        let (world, traj) = explored_xylophone();
        let cands = Candidates::sample(&world, 0, &ImitationConfig::default()).unwrap();
        let fe = AudioFrontend::reference();
        let d = note_demo(&world, 0, &DemoParams { noise_level: 0.0, ..Default::default() }, 4, 0).unwrap();
        let base = imitate_note(&d.waveform, fe, traj.store.view(), &cands, &WeightVector::uniform()).unwrap();
        let loud = imitate_note(&d.waveform.scaled(1.7), fe, traj.store.view(), &cands, &WeightVector::uniform()).unwrap();
        assert_eq!(base.point, loud.point);
        assert!((base.mcd - loud.mcd).abs() < 1e-9);
    }

    #[test]
    fn empty_store_is_an_error() {
        let world = generate_world(&ScenarioSpec::drums(1)).unwrap();
        let cands = Candidates::sample(&world, 0, &ImitationConfig { candidates_per_part: 2, seed: 0 }).unwrap();
        assert_eq!(cands.points.len(), 6);
        let store = AvStore::new();
        let m = MfccMatrix::from_rows(&[vec![0.0; 13]], 400, 160);
        assert!(matches!(imitate_from_mfcc(&m, store.view(), &cands, &WeightVector::uniform()), Err(Error::EmptyStore)));
    }

    #[test]
    fn demo_params_are_validated() {
        assert!(DemoParams::default().validate().is_ok());
        let bad = DemoParams { noise_level: 0.05, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Validation { field, .. }) if field == "demo.noise_level"));
    }
}
