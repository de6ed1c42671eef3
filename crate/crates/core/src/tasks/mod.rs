//! Downstream evaluations built on the store.

pub mod activity;
pub mod audio_prediction;
pub mod material;
pub mod music;

use rand::Rng;
use rayon::prelude::*;

use crate::audio::{AudioFeature, AudioFrontend};
use crate::error::Result;
use crate::oracle::{StrikeParams, Waveform};
use crate::rng;
use crate::scene::{InteractionPoint, MaterialClass, World, TEST_U_BAND};
use crate::store::observe;
use crate::visual::VisualFeature;

#[derive(Debug, Clone, PartialEq)]
pub struct TestEntry {
    pub point: InteractionPoint,
    pub material: MaterialClass,
    pub visual: VisualFeature,
    pub clip: Waveform,
    pub audio: AudioFeature,
}

/// Held-out strikes: one per part per scene, with `u` drawn from the reserved
/// test band so no exploration strike can coincide with one.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub entries: Vec<TestEntry>,
}

impl TestSet {
    pub fn build(world: &World, frontend: &AudioFrontend, strike: StrikeParams, seed: u64) -> Result<Self> {
        let mut plan = Vec::new();
        for scene in &world.scenes {
            for (oi, obj) in scene.objects.iter().enumerate() {
                for (pi, part) in obj.parts.iter().enumerate() {
                    let ids = [scene.scene_id as u64, obj.object_id as u64, part.part_id as u64];
                    let mut r = rng::stream(seed, "test-u", &ids);
                    let u = r.random_range(TEST_U_BAND.0..TEST_U_BAND.1);
                    plan.push((scene.point(oi, pi, u), part.material, ids));
                }
            }
        }
        let entries = plan
            .par_iter()
            .map(|(point, material, ids)| {
                let obs = observe(
                    world,
                    frontend,
                    *point,
                    strike,
                    rng::derive_seed(seed, "test-visual", ids),
                    rng::derive_seed(seed, "test-strike", ids),
                )?;
                Ok(TestEntry {
                    point: *point,
                    material: *material,
                    visual: obs.visual,
                    clip: obs.clip,
                    audio: obs.audio,
                })
            })
            .collect::<Result<_>>()?;
        Ok(TestSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_world, ProceduralParams, ScenarioSpec};

    #[test]
    fn one_entry_per_part_per_scene_inside_the_band() {
        let world = generate_world(&ScenarioSpec::procedural("t", 4, ProceduralParams { scenes: 2, ..Default::default() })).unwrap();
        let test = TestSet::build(&world, AudioFrontend::reference(), StrikeParams::default(), 1).unwrap();
        let expected: usize = world.scenes.iter().map(|s| s.part_count()).sum();
        assert_eq!(test.len(), expected);
        for e in &test.entries {
            assert!((TEST_U_BAND.0..TEST_U_BAND.1).contains(&e.point.u));
            assert!(!crate::scene::is_training_u(e.point.u));
            assert_eq!(world.material_of(&e.point).unwrap(), e.material);
        }
    }
}
