//! Simulated world: environments, scenes, objects, parts and interaction points.
//!
//! Geometry is reduced to a normalized coordinate `u ∈ [0, 1]` on each part.
//! Segmentation is exact: every candidate point knows its object and part.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{ModalProfile, Mode, DEFAULT_SAMPLE_RATE};
use crate::rng::{self, StreamRng};
use crate::visual::{VisualConfig, VisualExtractor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialClass {
    Ceramic,
    Glass,
    Metal,
    Plastic,
    Rubber,
    Wood,
}

impl MaterialClass {
    pub const ALL: [MaterialClass; 6] = [
        MaterialClass::Ceramic,
        MaterialClass::Glass,
        MaterialClass::Metal,
        MaterialClass::Plastic,
        MaterialClass::Rubber,
        MaterialClass::Wood,
    ];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MaterialClass::Ceramic => "ceramic",
            MaterialClass::Glass => "glass",
            MaterialClass::Metal => "metal",
            MaterialClass::Plastic => "plastic",
            MaterialClass::Rubber => "rubber",
            MaterialClass::Wood => "wood",
        }
    }
}

impl fmt::Display for MaterialClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaterialClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "material",
                id: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub part_id: u32,
    pub material: MaterialClass,
    pub latent_appearance: Vec<f64>,
    pub modal_profile: ModalProfile,
    pub extent: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub object_id: u32,
    pub name: String,
    pub latent_appearance: Vec<f64>,
    /// Dimensionless multiplier on every modal frequency of the object.
    pub size_scale: f64,
    pub parts: Vec<PartSpec>,
}

impl ObjectSpec {
    pub fn part(&self, part_id: u32) -> Option<&PartSpec> {
        self.parts.iter().find(|p| p.part_id == part_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionPoint {
    pub scene_id: u32,
    pub object_id: u32,
    pub part_id: u32,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: u32,
    pub objects: Vec<ObjectSpec>,
    pub candidate_sampler_seed: u64,
}

impl Scene {
    pub fn object(&self, object_id: u32) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    /// Point on the `part`-th part of the `object`-th object (positional indices).
    pub fn point(&self, object: usize, part: usize, u: f64) -> InteractionPoint {
        let o = &self.objects[object];
        InteractionPoint {
            scene_id: self.scene_id,
            object_id: o.object_id,
            part_id: o.parts[part].part_id,
            u,
        }
    }

    pub fn part_count(&self) -> usize {
        self.objects.iter().map(|o| o.parts.len()).sum()
    }
}

/// Reserved band of `u` used only by held-out test strikes.
pub const TEST_U_BAND: (f64, f64) = (0.45, 0.55);
/// Candidate strikes stay this far from the part boundaries.
pub const EDGE_MARGIN: f64 = 0.05;

/// Maps a uniform draw in [0, 1) onto the training range
/// `[EDGE_MARGIN, 1 - EDGE_MARGIN]` minus [`TEST_U_BAND`].
pub fn training_u(unit: f64) -> f64 {
    let left = TEST_U_BAND.0 - EDGE_MARGIN;
    let right = (1.0 - EDGE_MARGIN) - TEST_U_BAND.1;
    let v = unit * (left + right);
    if v < left {
        EDGE_MARGIN + v
    } else {
        TEST_U_BAND.1 + (v - left)
    }
}

pub fn is_training_u(u: f64) -> bool {
    (EDGE_MARGIN..=1.0 - EDGE_MARGIN).contains(&u) && !(TEST_U_BAND.0..=TEST_U_BAND.1).contains(&u)
}

/// Draws `n` candidate points: object uniformly, then part uniformly within
/// the object, then `u` uniformly over the training range.
pub fn sample_candidates(scene: &Scene, n: usize, seed: u64) -> Result<Vec<InteractionPoint>> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let mut rng = rng::stream(seed, "candidates", &[scene.scene_id as u64]);
    Ok((0..n)
        .map(|_| {
            let o = rng.random_range(0..scene.objects.len());
            draw_on_object(scene, o, &mut rng)
        })
        .collect())
}

/// Draws `n` candidate points restricted to one object.
pub fn sample_candidates_on(
    scene: &Scene,
    object_id: u32,
    n: usize,
    seed: u64,
) -> Result<Vec<InteractionPoint>> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let o = scene
        .objects
        .iter()
        .position(|o| o.object_id == object_id)
        .ok_or_else(|| Error::Unknown {
            kind: "object",
            id: object_id.to_string(),
        })?;
    let mut rng = rng::stream(seed, "candidates-on", &[scene.scene_id as u64, object_id as u64]);
    Ok((0..n).map(|_| draw_on_object(scene, o, &mut rng)).collect())
}

pub(crate) fn draw_on_object(scene: &Scene, object: usize, rng: &mut StreamRng) -> InteractionPoint {
    let obj = &scene.objects[object];
    let p = rng.random_range(0..obj.parts.len());
    let u = training_u(rng.random::<f64>());
    scene.point(object, p, u)
}

/// A generated environment: an ordered list of scenes plus the fixed visual
/// feature maps of this world.
#[derive(Debug, Clone)]
pub struct World {
    pub environment_name: String,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub scenes: Vec<Scene>,
    pub extractor: VisualExtractor,
}

impl World {
    pub fn scene(&self, scene_id: u32) -> Result<&Scene> {
        self.scenes
            .iter()
            .find(|s| s.scene_id == scene_id)
            .ok_or_else(|| Error::Unknown {
                kind: "scene",
                id: scene_id.to_string(),
            })
    }

    pub fn resolve(&self, point: &InteractionPoint) -> Result<(&ObjectSpec, &PartSpec)> {
        if !(0.0..=1.0).contains(&point.u) {
            return Err(Error::validation("u", format!("{} outside [0, 1]", point.u)));
        }
        let scene = self.scene(point.scene_id)?;
        let object = scene.object(point.object_id).ok_or_else(|| Error::Unknown {
            kind: "object",
            id: format!("{} in scene {}", point.object_id, point.scene_id),
        })?;
        let part = object.part(point.part_id).ok_or_else(|| Error::Unknown {
            kind: "part",
            id: format!("{} of object {}", point.part_id, point.object_id),
        })?;
        Ok((object, part))
    }

    pub fn material_of(&self, point: &InteractionPoint) -> Result<MaterialClass> {
        Ok(self.resolve(point)?.1.material)
    }

    /// Distinct object instances across all scenes, in first-appearance order.
    pub fn unique_objects(&self) -> Vec<&ObjectSpec> {
        let mut seen = BTreeSet::new();
        self.scenes
            .iter()
            .flat_map(|s| s.objects.iter())
            .filter(|o| seen.insert(o.object_id))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

fn default_latent_dim() -> usize {
    16
}

fn default_true() -> bool {
    true
}

fn default_sample_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

/// Declarative description of one environment. Parsed from TOML; see the
/// README for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub environment_name: String,
    pub seed: u64,
    #[serde(default)]
    pub ambiguity: f64,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: u32,
    #[serde(default)]
    pub visual: VisualConfig,
    pub objects: Vec<ObjectTemplate>,
    pub scenes: Vec<SceneTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTemplate {
    pub name: String,
    /// A recurring object is the same instance in every scene that lists it;
    /// otherwise each listing creates a fresh instance.
    #[serde(default = "default_true")]
    pub recurring: bool,
    #[serde(default)]
    pub size_scale: Option<f64>,
    /// All parts share one modal draw, differing only by `pitch_scale`.
    #[serde(default)]
    pub shared_modes: bool,
    pub parts: Vec<PartTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartTemplate {
    pub material: MaterialClass,
    #[serde(default)]
    pub pitch_scale: Option<f64>,
    #[serde(default)]
    pub modes: Option<Vec<Mode>>,
}

impl PartTemplate {
    pub fn of(material: MaterialClass) -> Self {
        PartTemplate {
            material,
            pitch_scale: None,
            modes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneTemplate {
    pub objects: Vec<String>,
}

/// Knobs for [`ScenarioSpec::procedural`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProceduralParams {
    pub scenes: usize,
    pub objects_per_scene: (usize, usize),
    pub parts_per_object: (usize, usize),
    /// Probability that a scene slot reuses an object from an earlier scene.
    pub recurrence: f64,
    pub ambiguity: f64,
}

impl Default for ProceduralParams {
    fn default() -> Self {
        ProceduralParams {
            scenes: 5,
            objects_per_scene: (4, 8),
            parts_per_object: (1, 4),
            recurrence: 0.4,
            ambiguity: 0.0,
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() {
            return Err(Error::validation("scenes", "at least one scene is required"));
        }
        if !(0.0..=1.0).contains(&self.ambiguity) {
            return Err(Error::validation(
                "ambiguity",
                format!("{} outside [0, 1]", self.ambiguity),
            ));
        }
        if self.latent_dim == 0 {
            return Err(Error::validation("latent_dim", "must be at least 1"));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::validation("sample_rate_hz", "must be positive"));
        }
        self.visual.validate()?;
        let mut names = BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if !names.insert(o.name.as_str()) {
                return Err(Error::validation(
                    format!("objects[{i}].name"),
                    format!("duplicate object `{}`", o.name),
                ));
            }
            if o.parts.is_empty() {
                return Err(Error::validation(format!("objects[{i}].parts"), "must be non-empty"));
            }
            if let Some(s) = o.size_scale {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::validation(format!("objects[{i}].size_scale"), "must be positive"));
                }
            }
            for (j, p) in o.parts.iter().enumerate() {
                if let Some(s) = p.pitch_scale {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::validation(
                            format!("objects[{i}].parts[{j}].pitch_scale"),
                            "must be positive",
                        ));
                    }
                }
                if let Some(modes) = &p.modes {
                    ModalProfile::new(modes.clone()).map_err(|e| {
                        Error::validation(format!("objects[{i}].parts[{j}].modes"), e.to_string())
                    })?;
                }
            }
        }
        for (i, s) in self.scenes.iter().enumerate() {
            if s.objects.is_empty() {
                return Err(Error::validation(format!("scenes[{i}].objects"), "must be non-empty"));
            }
            let mut in_scene = BTreeSet::new();
            for name in &s.objects {
                if !names.contains(name.as_str()) {
                    return Err(Error::validation(
                        format!("scenes[{i}].objects"),
                        format!("unknown object `{name}`"),
                    ));
                }
                if !in_scene.insert(name.as_str()) {
                    return Err(Error::validation(
                        format!("scenes[{i}].objects"),
                        format!("object `{name}` listed twice"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Random environment in the default protocol shape (five scenes of 4-8
    /// objects with 1-4 parts each, some objects recurring).
    pub fn procedural(environment_name: &str, seed: u64, params: ProceduralParams) -> Self {
        let mut rng = rng::stream(seed, "procedural-scenario", &[]);
        let mut objects: Vec<ObjectTemplate> = Vec::new();
        let mut scenes = Vec::with_capacity(params.scenes);
        for _ in 0..params.scenes {
            let count = rng.random_range(params.objects_per_scene.0..=params.objects_per_scene.1);
            let mut chosen: Vec<String> = Vec::with_capacity(count);
            while chosen.len() < count {
                let reusable: Vec<&ObjectTemplate> = objects
                    .iter()
                    .filter(|o| !chosen.contains(&o.name))
                    .collect();
                if !reusable.is_empty() && rng.random::<f64>() < params.recurrence {
                    let pick = reusable[rng.random_range(0..reusable.len())].name.clone();
                    chosen.push(pick);
                    continue;
                }
                let n_parts =
                    rng.random_range(params.parts_per_object.0..=params.parts_per_object.1);
                let parts = (0..n_parts)
                    .map(|_| PartTemplate::of(MaterialClass::ALL[rng.random_range(0..6)]))
                    .collect();
                let name = format!("obj{:02}", objects.len());
                objects.push(ObjectTemplate {
                    name: name.clone(),
                    recurring: true,
                    size_scale: None,
                    shared_modes: false,
                    parts,
                });
                chosen.push(name);
            }
            scenes.push(SceneTemplate { objects: chosen });
        }
        ScenarioSpec {
            environment_name: environment_name.to_string(),
            seed,
            ambiguity: params.ambiguity,
            latent_dim: default_latent_dim(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            visual: VisualConfig::default(),
            objects,
            scenes,
        }
    }

    /// One scene holding an 8-bar wooden xylophone. Bars share one modal draw
    /// and step up in whole tones.
    pub fn xylophone(seed: u64) -> Self {
        let parts = (0..8)
            .map(|i| PartTemplate {
                material: MaterialClass::Wood,
                pitch_scale: Some(2f64.powf(2.0 * i as f64 / 12.0)),
                modes: None,
            })
            .collect();
        ScenarioSpec {
            environment_name: "xylophone".into(),
            seed,
            ambiguity: 0.0,
            latent_dim: default_latent_dim(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            visual: VisualConfig::default(),
            objects: vec![ObjectTemplate {
                name: "xylophone".into(),
                recurring: true,
                size_scale: Some(1.0),
                shared_modes: true,
                parts,
            }],
            scenes: vec![SceneTemplate {
                objects: vec!["xylophone".into()],
            }],
        }
    }

    /// One scene with three single-part drums.
    pub fn drums(seed: u64) -> Self {
        let kit = [
            ("kick", MaterialClass::Wood, 0.9),
            ("tom", MaterialClass::Plastic, 1.0),
            ("cymbal", MaterialClass::Metal, 1.05),
        ];
        Self::single_part_scene("drums", seed, &kit)
    }

    /// Pick-and-place table: six single-part objects, one per material, plus
    /// a ceramic plate named `plate`.
    pub fn pick_and_place(seed: u64) -> Self {
        let table = [
            ("cup", MaterialClass::Ceramic, 1.0),
            ("jar", MaterialClass::Glass, 1.0),
            ("can", MaterialClass::Metal, 1.0),
            ("bottle", MaterialClass::Plastic, 1.0),
            ("ball", MaterialClass::Rubber, 1.0),
            ("block", MaterialClass::Wood, 1.0),
            ("plate", MaterialClass::Ceramic, 0.9),
        ];
        Self::single_part_scene("pick-and-place", seed, &table)
    }

    fn single_part_scene(name: &str, seed: u64, items: &[(&str, MaterialClass, f64)]) -> Self {
        ScenarioSpec {
            environment_name: name.into(),
            seed,
            ambiguity: 0.0,
            latent_dim: default_latent_dim(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            visual: VisualConfig::default(),
            objects: items
                .iter()
                .map(|(n, m, s)| ObjectTemplate {
                    name: n.to_string(),
                    recurring: true,
                    size_scale: Some(*s),
                    shared_modes: false,
                    parts: vec![PartTemplate::of(*m)],
                })
                .collect(),
            scenes: vec![SceneTemplate {
                objects: items.iter().map(|(n, _, _)| n.to_string()).collect(),
            }],
        }
    }
}

/// Spread of an individual part's latent around its material prototype.
const PART_LATENT_SPREAD: f64 = 0.5;
const SIZE_SCALE_RANGE: (f64, f64) = (0.85, 1.1);

fn gaussian_vec(rng: &mut StreamRng, dim: usize, std: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect()
}

/// Generates the world described by `spec`. Pure in `spec` (which carries the seed).
pub fn generate_world(spec: &ScenarioSpec) -> Result<World> {
    spec.validate()?;
    let seed = spec.seed;
    let dim = spec.latent_dim;
    let prototypes: Vec<Vec<f64>> = MaterialClass::ALL
        .iter()
        .map(|m| gaussian_vec(&mut rng::stream(seed, "material-prototype", &[m.index() as u64]), dim, 1.0))
        .collect();
    let templates: HashMap<&str, &ObjectTemplate> =
        spec.objects.iter().map(|o| (o.name.as_str(), o)).collect();

    let mut recurring: HashMap<&str, ObjectSpec> = HashMap::new();
    // (material, latent) of every part generated so far, in generation order
    let mut generated: Vec<(MaterialClass, Vec<f64>)> = Vec::new();
    let mut next_object_id = 0u32;
    let mut scenes = Vec::with_capacity(spec.scenes.len());

    for (scene_idx, st) in spec.scenes.iter().enumerate() {
        let mut objects = Vec::with_capacity(st.objects.len());
        for name in &st.objects {
            let template = templates[name.as_str()];
            if template.recurring {
                if let Some(obj) = recurring.get(name.as_str()) {
                    objects.push(obj.clone());
                    continue;
                }
            }
            let obj = instantiate(
                template,
                next_object_id,
                seed,
                dim,
                spec.ambiguity,
                &prototypes,
                &mut generated,
            )?;
            next_object_id += 1;
            if template.recurring {
                recurring.insert(name.as_str(), obj.clone());
            }
            objects.push(obj);
        }
        scenes.push(Scene {
            scene_id: scene_idx as u32,
            objects,
            candidate_sampler_seed: rng::derive_seed(seed, "scene-candidates", &[scene_idx as u64]),
        });
    }

    let extractor = VisualExtractor::new(spec.visual.clone(), dim, rng::derive_seed(seed, "visual-maps", &[]));
    Ok(World {
        environment_name: spec.environment_name.clone(),
        seed,
        sample_rate_hz: spec.sample_rate_hz,
        scenes,
        extractor,
    })
}

fn instantiate(
    template: &ObjectTemplate,
    object_id: u32,
    seed: u64,
    dim: usize,
    ambiguity: f64,
    prototypes: &[Vec<f64>],
    generated: &mut Vec<(MaterialClass, Vec<f64>)>,
) -> Result<ObjectSpec> {
    let mut rng = rng::stream(seed, "object", &[object_id as u64]);
    let latent = gaussian_vec(&mut rng, dim, 1.0);
    let size_scale = template
        .size_scale
        .unwrap_or_else(|| rng.random_range(SIZE_SCALE_RANGE.0..SIZE_SCALE_RANGE.1));
    let n = template.parts.len();
    let mut parts = Vec::with_capacity(n);
    for (j, pt) in template.parts.iter().enumerate() {
        let pitch = pt.pitch_scale.unwrap_or(1.0);
        let modal_profile = match (&pt.modes, template.shared_modes) {
            (Some(modes), _) => ModalProfile::new(modes.clone())?.scaled(pitch),
            (None, true) => {
                let mut shared = rng::stream(seed, "object-modes", &[object_id as u64]);
                ModalProfile::from_template(pt.material, pitch, &mut shared)
            }
            (None, false) => {
                let mut own = rng::stream(seed, "part-modes", &[object_id as u64, j as u64]);
                ModalProfile::from_template(pt.material, pitch, &mut own)
            }
        };
        let mut latent_rng = rng::stream(seed, "part-latent", &[object_id as u64, j as u64]);
        let mut part_latent: Vec<f64> = prototypes[pt.material.index()]
            .iter()
            .zip(gaussian_vec(&mut latent_rng, dim, PART_LATENT_SPREAD))
            .map(|(p, d)| p + d)
            .collect();

        let mut amb = rng::stream(seed, "ambiguity", &[object_id as u64, j as u64]);
        if amb.random::<f64>() < ambiguity {
            let donors: Vec<&Vec<f64>> = generated
                .iter()
                .filter(|(m, _)| *m != pt.material)
                .map(|(_, l)| l)
                .collect();
            if !donors.is_empty() {
                part_latent = donors[amb.random_range(0..donors.len())].clone();
            }
        }
        generated.push((pt.material, part_latent.clone()));

        parts.push(PartSpec {
            part_id: j as u32,
            material: pt.material,
            latent_appearance: part_latent,
            modal_profile,
            extent: (j as f64 / n as f64, (j + 1) as f64 / n as f64),
        });
    }
    Ok(ObjectSpec {
        object_id,
        name: template.name.clone(),
        latent_appearance: latent,
        size_scale,
        parts,
    })
}
