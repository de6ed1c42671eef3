//! Recognizing which object was picked up from the sound of putting it down
//! on a known placement object.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use super::music::DemoParams;
use crate::audio::{mcd, AudioFrontend, MfccMatrix};
use crate::error::{Error, Result};
use crate::oracle::{superimpose, synthesize_impact, Waveform};
use crate::rng;
use crate::scene::{InteractionPoint, Scene, World};
use crate::store::{StoreView, WeightVector};
use crate::visual::extract_visual;

/// MCD of each candidate's synthesized pick-and-place sound to the demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityInference {
    pub object_id: u32,
    pub scores: Vec<(u32, f64)>,
}

/// Superimposes each candidate clip with the placement clip and returns the
/// candidate whose combined sound is closest to the demo. Ties go to the
/// earlier candidate.
pub fn infer_from_clips(
    demo: &MfccMatrix,
    candidates: &[(u32, &Waveform)],
    placement: &Waveform,
    frontend: &AudioFrontend,
) -> Result<ActivityInference> {
    let scores: Vec<(u32, f64)> = candidates
        .par_iter()
        .map(|(id, clip)| {
            let combined = superimpose(clip, placement)?;
            let (_, feature) = frontend.process(&combined)?;
            Ok((*id, mcd(&feature.mfcc, demo)?))
        })
        .collect::<Result<_>>()?;
    let best = scores
        .iter()
        .fold(None::<(u32, f64)>, |b, &(id, d)| match b {
            Some((_, bd)) if bd <= d => b,
            _ => Some((id, d)),
        })
        .ok_or_else(|| Error::validation("candidates", "must not be empty"))?;
    Ok(ActivityInference {
        object_id: best.0,
        scores,
    })
}

/// Point used to query the store for an object's sound: its first part at
/// the middle of the surface.
fn query_point(scene: &Scene, object_id: u32) -> Result<InteractionPoint> {
    let idx = scene
        .objects
        .iter()
        .position(|o| o.object_id == object_id)
        .ok_or_else(|| Error::Unknown {
            kind: "object",
            id: object_id.to_string(),
        })?;
    Ok(scene.point(idx, 0, 0.5))
}

/// Predicts the sound of every picked candidate and of the placement object
/// from vision, then infers which candidate was picked. Every object must
/// have been struck at least once.
#[allow(clippy::too_many_arguments)]
pub fn infer_picked_object(
    demo: &Waveform,
    picked: &[u32],
    placement: u32,
    world: &World,
    scene_id: u32,
    store: StoreView<'_>,
    w: &WeightVector,
    frontend: &AudioFrontend,
    seed: u64,
) -> Result<ActivityInference> {
    let uncovered: Vec<u32> = picked
        .iter()
        .chain(std::iter::once(&placement))
        .copied()
        .filter(|id| !store.records().iter().any(|r| r.point.object_id == *id))
        .collect();
    if !uncovered.is_empty() {
        return Err(Error::Uncovered(uncovered));
    }
    let scene = world.scene(scene_id)?;
    let predict = |id: u32| -> Result<&Waveform> {
        let p = query_point(scene, id)?;
        let f = extract_visual(&p, world, rng::derive_seed(seed, "activity-query", &[id as u64]))?;
        Ok(&store.predict_audio(&f, w)?.clip)
    };
    let placement_clip = predict(placement)?;
    let clips: Vec<(u32, &Waveform)> = picked.iter().map(|&id| Ok((id, predict(id)?))).collect::<Result<_>>()?;
    let (_, feature) = frontend.process(demo)?;
    infer_from_clips(&feature.mfcc, &clips, placement_clip, frontend)
}

/// Demonstration of putting `picked` down on `placement`: a strike on each,
/// with independent energies, summed.
pub fn activity_demo(
    world: &World,
    scene_id: u32,
    picked: u32,
    placement: u32,
    params: &DemoParams,
    seed: u64,
    trial: usize,
) -> Result<Waveform> {
    params.validate()?;
    let scene = world.scene(scene_id)?;
    let mut r = rng::stream(seed, "activity-demo", &[trial as u64]);
    let strike_on = |id: u32, r: &mut rng::StreamRng| -> Result<Waveform> {
        let idx = scene.objects.iter().position(|o| o.object_id == id).ok_or_else(|| Error::Unknown {
            kind: "object",
            id: id.to_string(),
        })?;
        let part = r.random_range(0..scene.objects[idx].parts.len());
        let (u, strike) = params.draw(r);
        synthesize_impact(&scene.point(idx, part, u), world, strike, r.random())
    };
    let a = strike_on(picked, &mut r)?;
    let b = strike_on(placement, &mut r)?;
    superimpose(&a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityTrial {
    pub trial: usize,
    pub picked: u32,
    pub inferred: u32,
    pub correct: bool,
}

/// Runs `trials` demos, each picking a uniformly chosen candidate.
#[allow(clippy::too_many_arguments)]
pub fn eval_activity(
    world: &World,
    scene_id: u32,
    picked: &[u32],
    placement: u32,
    store: StoreView<'_>,
    w: &WeightVector,
    frontend: &AudioFrontend,
    demo: &DemoParams,
    trials: usize,
    seed: u64,
) -> Result<Vec<ActivityTrial>> {
    if picked.is_empty() {
        return Err(Error::validation("picked", "must not be empty"));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let target = picked[rng::stream(seed, "activity-target", &[t as u64]).random_range(0..picked.len())];
            let wave = activity_demo(world, scene_id, target, placement, demo, seed, t)?;
            let inf = infer_picked_object(&wave, picked, placement, world, scene_id, store, w, frontend, seed)?;
            Ok(ActivityTrial {
                trial: t,
                picked: target,
                inferred: inf.object_id,
                correct: inf.object_id == target,
            })
        })
        .collect()
}

/// One-sided binomial p-value of at least `successes` in `trials` at rate `p`.
pub fn binomial_p_value(successes: u64, trials: u64, p: f64) -> f64 {
    if successes == 0 {
        return 1.0;
    }
    let dist = Binomial::new(p, trials).expect("p in [0, 1]");
    dist.sf(successes - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::{run_exploration, ExploreConfig, PolicyKind};
    use crate::scene::{generate_world, ScenarioSpec};
    use crate::store::AvStore;

    #[test]
    fn binomial_tail_matches_direct_sum() {
        // P(X >= 3), n = 4, p = 0.5: (4 + 1) / 16
        assert!((binomial_p_value(3, 4, 0.5) - 5.0 / 16.0).abs() < 1e-12);
        assert_eq!(binomial_p_value(0, 10, 0.2), 1.0);
        let direct: f64 = (30..=100u64)
            .map(|k| {
                let lnc: f64 = (1..=k).map(|i| ((100 - k + i) as f64 / i as f64).ln()).sum();
                (lnc + k as f64 * (1.0f64 / 6.0).ln() + (100 - k) as f64 * (5.0f64 / 6.0).ln()).exp()
            })
            .sum();
        assert!((binomial_p_value(30, 100, 1.0 / 6.0) - direct).abs() < 1e-10);
    }

    fn explored_table() -> (World, AvStore) {
        let world = generate_world(&ScenarioSpec::pick_and_place(2)).unwrap();
        let traj = run_exploration(
            &world,
            AudioFrontend::reference(),
            PolicyKind::Curiosity,
            WeightVector::uniform(),
            21,
            &ExploreConfig::default(),
            1,
        )
        .unwrap();
        (world, traj.store)
    }

    #[test]
    fn constructed_demos_recover_the_candidate_exactly() {
        let (_, store) = explored_table();
        let fe = AudioFrontend::reference();
        // one stored clip per object
        let mut by_object: Vec<(u32, &Waveform)> = Vec::new();
        for r in store.records() {
            if !by_object.iter().any(|(id, _)| *id == r.point.object_id) {
                by_object.push((r.point.object_id, &r.clip));
            }
        }
        let (placement, rest) = by_object.split_last().unwrap();
        for (id, clip) in rest {
            let demo = superimpose(clip, placement.1).unwrap();
            let (_, f) = fe.process(&demo).unwrap();
            let inf = infer_from_clips(&f.mfcc, rest, placement.1, fe).unwrap();
            assert_eq!(inf.object_id, *id);
            assert_eq!(inf.scores.iter().find(|s| s.0 == *id).unwrap().1, 0.0);
        }
    }

    #[test]
    fn silent_placement_reduces_to_audio_retrieval() {
        let (_, store) = explored_table();
        let fe = AudioFrontend::reference();
        let silence = Waveform::silence(store.records()[0].clip.len(), 16_000);
        let clips: Vec<(u32, &Waveform)> = store.records().iter().enumerate().map(|(i, r)| (i as u32, &r.clip)).collect();
        for q in [0usize, 7, 13] {
            let query = &store.records()[q].audio.mfcc;
            let inf = infer_from_clips(query, &clips, &silence, fe).unwrap();
            let nn = store.nearest_by_audio(query, 1).unwrap();
            assert_eq!(inf.object_id as usize, nn[0].index);
        }
    }

    #[test]
    fn uncovered_objects_are_listed() {
        let world = generate_world(&ScenarioSpec::pick_and_place(2)).unwrap();
        let store = AvStore::new();
        let fe = AudioFrontend::reference();
        let demo = activity_demo(&world, 0, 0, 6, &DemoParams::default(), 1, 0).unwrap();
        let err = infer_picked_object(&demo, &[0, 1], 6, &world, 0, store.view(), &WeightVector::uniform(), fe, 0).unwrap_err();
        assert!(matches!(err, Error::Uncovered(ids) if ids == vec![0, 1, 6]));
    }
}
