//! Five-component visual embedding of an interaction point.
//!
//! Replaces the segmentation-mask and CNN extractors with fixed random linear
//! maps of the simulator's appearance latents:
//!
//! | component  | input                         | noise |
//! |------------|-------------------------------|-------|
//! | `sam_obj`  | object latent                 | no    |
//! | `sam_part` | part latent                   | no    |
//! | `rn_obj`   | object latent                 | σ_v   |
//! | `rn_part`  | part latent                   | σ_v   |
//! | `rn_patch` | part latent ⊕ (sin 2πu, cos 2πu, u) | no |

use std::f64::consts::PI;

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scene::{InteractionPoint, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    SamObj,
    SamPart,
    RnObj,
    RnPart,
    RnPatch,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::SamObj,
        FeatureKind::SamPart,
        FeatureKind::RnObj,
        FeatureKind::RnPart,
        FeatureKind::RnPatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::SamObj => "sam_obj",
            FeatureKind::SamPart => "sam_part",
            FeatureKind::RnObj => "rn_obj",
            FeatureKind::RnPart => "rn_part",
            FeatureKind::RnPatch => "rn_patch",
        }
    }
}

const PATCH_ENCODING_DIM: usize = 3;

fn default_dims() -> [usize; 5] {
    [32, 32, 16, 16, 8]
}

fn default_sigma() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualConfig {
    /// Output dimension per component, in [`FeatureKind::ALL`] order.
    #[serde(default = "default_dims")]
    pub dims: [usize; 5],
    /// Observation noise on the object and part appearance components.
    #[serde(default = "default_sigma")]
    pub sigma_v: f64,
}

impl Default for VisualConfig {
    fn default() -> Self {
        VisualConfig {
            dims: default_dims(),
            sigma_v: default_sigma(),
        }
    }
}

impl VisualConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::validation("visual.dims", "every component needs at least one dimension"));
        }
        if !(self.sigma_v >= 0.0 && self.sigma_v.is_finite()) {
            return Err(Error::validation("visual.sigma_v", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualFeature {
    pub components: [Vec<f64>; 5],
}

impl VisualFeature {
    pub fn component(&self, kind: FeatureKind) -> &[f64] {
        &self.components[kind as usize]
    }

    pub fn concatenated(&self) -> Vec<f64> {
        self.components.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|v| v.is_finite())
    }
}

/// Row-major dense matrix used for the fixed projection maps.
#[derive(Debug, Clone, PartialEq)]
struct Projection {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Projection {
    fn random(rows: usize, cols: usize, seed: u64, which: FeatureKind) -> Self {
        let mut rng = rng::stream(seed, "projection", &[which as u64]);
        let scale = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Projection { rows, cols, data }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// The fixed feature maps of one world.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualExtractor {
    pub config: VisualConfig,
    latent_dim: usize,
    maps: [Projection; 5],
}

impl VisualExtractor {
    pub fn new(config: VisualConfig, latent_dim: usize, seed: u64) -> Self {
        let d = config.dims;
        let maps = [
            Projection::random(d[0], latent_dim, seed, FeatureKind::SamObj),
            Projection::random(d[1], latent_dim, seed, FeatureKind::SamPart),
            Projection::random(d[2], latent_dim, seed, FeatureKind::RnObj),
            Projection::random(d[3], latent_dim, seed, FeatureKind::RnPart),
            Projection::random(d[4], latent_dim + PATCH_ENCODING_DIM, seed, FeatureKind::RnPatch),
        ];
        VisualExtractor {
            config,
            latent_dim,
            maps,
        }
    }

    pub fn with_sigma(&self, sigma_v: f64) -> Self {
        let mut out = self.clone();
        out.config.sigma_v = sigma_v;
        out
    }

    pub fn total_dim(&self) -> usize {
        self.config.dims.iter().sum()
    }

    /// Features from raw latents; `noise_seed` drives the observation noise.
    pub fn features(&self, object_latent: &[f64], part_latent: &[f64], u: f64, noise_seed: u64) -> VisualFeature {
        let mut patch_in = part_latent.to_vec();
        patch_in.extend_from_slice(&[(2.0 * PI * u).sin(), (2.0 * PI * u).cos(), u]);
        let mut rn_obj = self.maps[2].apply(object_latent);
        let mut rn_part = self.maps[3].apply(part_latent);
        if self.config.sigma_v > 0.0 {
            let mut rng = rng::stream(noise_seed, "visual-noise", &[]);
            let normal = Normal::new(0.0, self.config.sigma_v).expect("finite sigma");
            for v in rn_obj.iter_mut().chain(rn_part.iter_mut()) {
                *v += normal.sample(&mut rng);
            }
        }
        VisualFeature {
            components: [
                self.maps[0].apply(object_latent),
                self.maps[1].apply(part_latent),
                rn_obj,
                rn_part,
                self.maps[4].apply(&patch_in),
            ],
        }
    }
}

/// Visual embedding of `point` as observed in `world`.
pub fn extract_visual(point: &InteractionPoint, world: &World, seed: u64) -> Result<VisualFeature> {
    let (object, part) = world.resolve(point)?;
    let ex = &world.extractor;
    if object.latent_appearance.len() != ex.latent_dim || part.latent_appearance.len() != ex.latent_dim {
        return Err(Error::DimensionMismatch {
            component: "latent_appearance",
            left: object.latent_appearance.len(),
            right: ex.latent_dim,
        });
    }
    Ok(ex.features(&object.latent_appearance, &part.latent_appearance, point.u, seed))
}
