//! Experiment configuration (TOML). See the README for every key.

use std::path::{Path, PathBuf};

use curio_core::audio::DspConfig;
use curio_core::explore::PolicyKind;
use curio_core::scene::{ProceduralParams, ScenarioSpec};
use curio_core::store::DEFAULT_PRETRAIN_PAIRS;
use curio_core::visual::VisualConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Environment variable that overrides the output root of the config file.
pub const OUT_ENV: &str = "CURIO_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scenario TOML path, relative to the config file, or `builtin:<name>`
    /// for `xylophone`, `drums`, `pick-and-place` or `procedural:<seed>`.
    pub scenario: String,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    pub budget_per_scene: usize,
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_candidates")]
    pub candidates_per_step: usize,
    /// Background noise on the tool's recordings.
    #[serde(default)]
    pub strike_noise: f64,
    #[serde(default = "default_pretrain_pairs")]
    pub pretrain_pairs: usize,
    #[serde(default)]
    pub tasks: TaskToggles,
    #[serde(default)]
    pub dsp: DspConfig,
    /// Replaces the scenario's `visual` table when present.
    #[serde(default)]
    pub visual: Option<VisualConfig>,
    #[serde(default)]
    pub material: MaterialSection,
    #[serde(default)]
    pub music: MusicSection,
    #[serde(default)]
    pub activity: ActivitySection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskToggles {
    pub audio_pred: bool,
    pub material: bool,
    pub music: bool,
    pub activity: bool,
}

impl Default for TaskToggles {
    fn default() -> Self {
        TaskToggles {
            audio_pred: true,
            material: false,
            music: false,
            activity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    pub runs: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    /// Training-set sizes to evaluate; empty means the end of every scene.
    pub checkpoints: Vec<usize>,
}

impl Default for MaterialSection {
    fn default() -> Self {
        MaterialSection {
            runs: 20,
            epochs: 200,
            hidden: 64,
            learning_rate: 0.05,
            checkpoints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MusicSection {
    pub scene: u32,
    pub demos: usize,
    pub candidates_per_part: usize,
    pub demo_energy: (f64, f64),
    pub demo_noise: f64,
}

impl Default for MusicSection {
    fn default() -> Self {
        MusicSection {
            scene: 0,
            demos: 50,
            candidates_per_part: 32,
            demo_energy: (0.5, 2.0),
            demo_noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivitySection {
    pub scene: u32,
    /// Name of the known placement object.
    pub placement: String,
    /// Names of the objects that may be picked; empty means every other
    /// object of the scene.
    pub picked: Vec<String>,
    pub demos: usize,
    pub demo_energy: (f64, f64),
    pub demo_noise: f64,
}

impl Default for ActivitySection {
    fn default() -> Self {
        ActivitySection {
            scene: 0,
            placement: "plate".into(),
            picked: Vec::new(),
            demos: 100,
            demo_energy: (0.5, 2.0),
            demo_noise: 0.01,
        }
    }
}

fn default_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

fn default_snapshot_interval() -> usize {
    5
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_candidates() -> usize {
    64
}

fn default_pretrain_pairs() -> usize {
    DEFAULT_PRETRAIN_PAIRS
}

fn invalid(field: &str, reason: &str) -> CliError {
    CliError::Validation(format!("invalid {field}: {reason}"))
}

/// A config together with the scenario it names, loaded and checked.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scenario: ScenarioSpec,
}

impl Experiment {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_config(config, base)
    }

    /// Resolves the scenario relative to `base` and validates everything.
    pub fn from_config(config: ExperimentConfig, base: &Path) -> CliResult<Self> {
        let mut scenario = match config.scenario.strip_prefix("builtin:") {
            Some("xylophone") => ScenarioSpec::xylophone(0),
            Some("drums") => ScenarioSpec::drums(0),
            Some("pick-and-place") => ScenarioSpec::pick_and_place(0),
            Some(p) if p.starts_with("procedural:") => {
                let seed: u64 = p["procedural:".len()..]
                    .parse()
                    .map_err(|_| invalid("scenario", "procedural seed must be an integer"))?;
                ScenarioSpec::procedural(&format!("procedural-{seed}"), seed, ProceduralParams::default())
            }
            Some(other) => return Err(invalid("scenario", &format!("unknown builtin `{other}`"))),
            None => {
                let p = base.join(&config.scenario);
                if !p.is_file() {
                    return Err(invalid("scenario", &format!("file {} does not exist", p.display())));
                }
                ScenarioSpec::from_file(&p)?
            }
        };
        if let Some(v) = &config.visual {
            scenario.visual = v.clone();
        }
        let exp = Experiment { config, scenario };
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> CliResult<()> {
        let c = &self.config;
        if c.seeds.is_empty() {
            return Err(invalid("seeds", "must not be empty"));
        }
        if c.policies.is_empty() {
            return Err(invalid("policies", "must not be empty"));
        }
        if c.budget_per_scene == 0 {
            return Err(invalid("budget_per_scene", "must be at least 1"));
        }
        if c.snapshot_interval == 0 {
            return Err(invalid("snapshot_interval", "must be at least 1"));
        }
        if c.candidates_per_step == 0 {
            return Err(invalid("candidates_per_step", "must be at least 1"));
        }
        if !(c.strike_noise >= 0.0 && c.strike_noise.is_finite()) {
            return Err(invalid("strike_noise", "must be non-negative"));
        }
        if c.tasks.material && (c.material.runs == 0 || c.material.hidden == 0) {
            return Err(invalid("material", "runs and hidden must be at least 1"));
        }
        c.dsp.validate()?;
        self.scenario.validate()?;
        if c.tasks.music && self.scenario.scenes.len() <= c.music.scene as usize {
            return Err(invalid("music.scene", "no such scene"));
        }
        if c.tasks.activity {
            let Some(scene) = self.scenario.scenes.get(c.activity.scene as usize) else {
                return Err(invalid("activity.scene", "no such scene"));
            };
            for name in std::iter::once(&c.activity.placement).chain(&c.activity.picked) {
                if !scene.objects.contains(name) {
                    return Err(invalid("activity", &format!("object `{name}` is not in the scene")));
                }
            }
        }
        Ok(())
    }

    /// Output root: the `--out` flag, then `CURIO_OUT`, then the config.
    pub fn out_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.config.out_dir.clone(),
        }
    }

    /// SHA-256 over the experiment parameters and the resolved scenario.
    /// Run selection (seeds, policies) and the output location are left out,
    /// so runs of one experiment share a hash.
    pub fn config_hash(&self) -> String {
        let mut c = self.config.clone();
        c.seeds.clear();
        c.policies.clear();
        c.out_dir = PathBuf::new();
        let payload = serde_json::json!({ "config": c, "scenario": self.scenario });
        hex::encode(Sha256::digest(payload.to_string().as_bytes()))
    }

    pub fn environment(&self) -> &str {
        &self.scenario.environment_name
    }
}
