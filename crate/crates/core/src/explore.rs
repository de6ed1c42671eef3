//! Choosing where to strike next.
//!
//! Curiosity scores each candidate by its novelty, the weighted visual
//! distance to the closest stored strike, and takes the farthest one among
//! the objects struck least often in the current scene. Cycling applies the
//! same per-object constraint but picks at random; Random ignores objects.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioFrontend;
use crate::error::{Error, Result};
use crate::oracle::StrikeParams;
use crate::rng::{self, StreamRng};
use crate::scene::{sample_candidates, sample_candidates_on, InteractionPoint, World};
use crate::store::{observe, AVRecord, AvStore, StoreView, WeightVector};
use crate::visual::{extract_visual, VisualFeature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Random,
    Cycling,
    Curiosity,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Random, PolicyKind::Cycling, PolicyKind::Curiosity];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Cycling => "cycling",
            PolicyKind::Curiosity => "curiosity",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown {
                kind: "policy",
                id: s.to_string(),
            })
    }
}

/// Novelty of a candidate: distance to the nearest stored strike, +∞ when
/// nothing is stored yet.
pub fn novelty(candidate: &VisualFeature, store: StoreView<'_>, w: &WeightVector) -> Result<f64> {
    store.novelty(candidate, w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    /// Index into the candidate list.
    pub index: usize,
    pub novelty: f64,
}

/// Candidate indices on the least-visited objects among those present.
pub fn least_visited(candidates: &[InteractionPoint], visits: &BTreeMap<u32, usize>) -> Vec<usize> {
    let count = |p: &InteractionPoint| visits.get(&p.object_id).copied().unwrap_or(0);
    let Some(min) = candidates.iter().map(count).min() else {
        return Vec::new();
    };
    (0..candidates.len()).filter(|&i| count(&candidates[i]) == min).collect()
}

/// Picks the next candidate under `policy`.
///
/// Curiosity ties go to the lowest candidate index; when every eligible
/// candidate is infinitely novel (empty store) one is drawn uniformly.
pub fn select_next(
    policy: PolicyKind,
    store: StoreView<'_>,
    w: &WeightVector,
    visits: &BTreeMap<u32, usize>,
    candidates: &[InteractionPoint],
    features: &[VisualFeature],
    rng: &mut StreamRng,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::validation("candidates", "must be non-empty"));
    }
    if candidates.len() != features.len() {
        return Err(Error::validation(
            "features",
            format!("{} features for {} candidates", features.len(), candidates.len()),
        ));
    }
    let index = match policy {
        PolicyKind::Random => rng.random_range(0..candidates.len()),
        PolicyKind::Cycling => {
            let eligible = least_visited(candidates, visits);
            eligible[rng.random_range(0..eligible.len())]
        }
        PolicyKind::Curiosity => {
            let eligible = least_visited(candidates, visits);
            let scores: Vec<f64> = eligible
                .par_iter()
                .map(|&i| store.novelty(&features[i], w))
                .collect::<Result<_>>()?;
            let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if best == f64::INFINITY {
                let inf: Vec<usize> = eligible
                    .iter()
                    .zip(&scores)
                    .filter(|(_, s)| **s == f64::INFINITY)
                    .map(|(i, _)| *i)
                    .collect();
                inf[rng.random_range(0..inf.len())]
            } else {
                let pos = scores.iter().position(|s| *s == best).expect("max is attained");
                eligible[pos]
            }
        }
    };
    Ok(Selection {
        index,
        novelty: store.novelty(&features[index], w)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExploreConfig {
    pub candidates_per_step: usize,
    /// Strike used for every robot interaction.
    pub strike: StrikeParams,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            candidates_per_step: 64,
            strike: StrikeParams::default(),
        }
    }
}

/// One row of the per-step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub scene: u32,
    pub object: u32,
    pub part: u32,
    pub u: f64,
    pub policy: PolicyKind,
    /// Novelty of the chosen point before it was struck.
    pub novelty: f64,
    pub store_size: usize,
}

/// Mutable state of one exploration run.
pub struct ExplorationState {
    pub store: AvStore,
    pub policy: PolicyKind,
    pub weights: WeightVector,
    visits: BTreeMap<u32, usize>,
    rng: StreamRng,
}

impl ExplorationState {
    pub fn new(policy: PolicyKind, weights: WeightVector, seed: u64) -> Self {
        ExplorationState {
            store: AvStore::new(),
            policy,
            weights,
            visits: BTreeMap::new(),
            rng: rng::stream(seed, "policy", &[policy as u64]),
        }
    }

    /// Visit counters of the current scene.
    pub fn visits(&self) -> &BTreeMap<u32, usize> {
        &self.visits
    }

    pub fn enter_scene(&mut self) {
        self.visits.clear();
    }

    pub fn select_next(&mut self, candidates: &[InteractionPoint], features: &[VisualFeature]) -> Result<Selection> {
        select_next(
            self.policy,
            self.store.view(),
            &self.weights,
            &self.visits,
            candidates,
            features,
            &mut self.rng,
        )
    }

    /// Stores a strike and counts the visit to its object.
    pub fn record(&mut self, record: AVRecord) -> usize {
        *self.visits.entry(record.point.object_id).or_default() += 1;
        self.store.insert(record)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub store: AvStore,
    pub logs: Vec<StepLog>,
}

impl Trajectory {
    /// Store size at the start of each scene.
    pub fn scene_starts(&self) -> Vec<(u32, usize)> {
        let mut out: Vec<(u32, usize)> = Vec::new();
        for log in &self.logs {
            if out.last().map(|(s, _)| *s) != Some(log.scene) {
                out.push((log.scene, log.step));
            }
        }
        out
    }
}

/// Candidate set for one step: `n` uniform draws, topped up with one point on
/// every scene object that drew none.
pub fn step_candidates(world: &World, scene_idx: usize, n: usize, seed: u64, step: usize) -> Result<Vec<InteractionPoint>> {
    let scene = &world.scenes[scene_idx];
    let mut cands = sample_candidates(scene, n, rng::derive_seed(seed, "step-candidates", &[step as u64]))?;
    for obj in &scene.objects {
        if !cands.iter().any(|c| c.object_id == obj.object_id) {
            let extra = sample_candidates_on(
                scene,
                obj.object_id,
                1,
                rng::derive_seed(seed, "step-topup", &[step as u64, obj.object_id as u64]),
            )?;
            cands.extend(extra);
        }
    }
    Ok(cands)
}

/// Runs `policy` over every scene of `world` in order, `budget_per_scene`
/// strikes per scene.
pub fn run_exploration(
    world: &World,
    frontend: &AudioFrontend,
    policy: PolicyKind,
    weights: WeightVector,
    budget_per_scene: usize,
    config: &ExploreConfig,
    seed: u64,
) -> Result<Trajectory> {
    if budget_per_scene == 0 {
        return Err(Error::validation("budget_per_scene", "must be at least 1"));
    }
    let mut state = ExplorationState::new(policy, weights, seed);
    let mut logs = Vec::with_capacity(budget_per_scene * world.scenes.len());
    let mut step = 0usize;
    for (scene_idx, scene) in world.scenes.iter().enumerate() {
        state.enter_scene();
        for _ in 0..budget_per_scene {
            let cands = step_candidates(world, scene_idx, config.candidates_per_step, seed, step)?;
            let features: Vec<VisualFeature> = cands
                .iter()
                .enumerate()
                .map(|(i, p)| extract_visual(p, world, rng::derive_seed(seed, "step-visual", &[step as u64, i as u64])))
                .collect::<Result<_>>()?;
            let sel = state.select_next(&cands, &features)?;
            let point = cands[sel.index];
            let obs = observe(
                world,
                frontend,
                point,
                config.strike,
                rng::derive_seed(seed, "step-visual", &[step as u64, sel.index as u64]),
                rng::derive_seed(seed, "step-strike", &[step as u64]),
            )?;
            debug_assert_eq!(obs.visual, features[sel.index]);
            let size = state.record(AVRecord {
                point,
                visual: obs.visual,
                audio: obs.audio,
                clip: obs.clip,
            });
            logs.push(StepLog {
                step,
                scene: scene.scene_id,
                object: point.object_id,
                part: point.part_id,
                u: point.u,
                policy,
                novelty: sel.novelty,
                store_size: size,
            });
            step += 1;
        }
    }
    Ok(Trajectory {
        store: state.store,
        logs,
    })
}
