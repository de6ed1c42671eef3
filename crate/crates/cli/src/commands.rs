use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use curio_core::audio::AudioFrontend;
use curio_core::dsp_check::{validate_dsp, CheckResult};
use curio_core::explore::{run_exploration, ExploreConfig, PolicyKind, StepLog};
use curio_core::mlp::TrainParams;
use curio_core::oracle::StrikeParams;
use curio_core::rng::derive_seed;
use curio_core::scene::{generate_world, World};
use curio_core::store::{pretrain_weights, AvStore, StoreFile, WeightVector};
use curio_core::tasks::activity::{binomial_p_value, eval_activity};
use curio_core::tasks::audio_prediction::{area_under_curve, eval_audio_prediction};
use curio_core::tasks::material::{eval_material, label_records, label_test_set, MaterialEvalConfig};
use curio_core::tasks::music::{accuracy, eval_imitation, DemoParams, ImitationConfig};
use curio_core::tasks::TestSet;
use log::info;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Experiment;
use crate::error::{CliError, CliResult};
use crate::output::{eval_dir, run_dir, write_atomic, write_csv, write_json};

pub const STEPS_FILE: &str = "steps.csv";
pub const STORE_FILE: &str = "store.bin";

fn runs(exp: &Experiment) -> Vec<(PolicyKind, u64)> {
    exp.config
        .policies
        .iter()
        .flat_map(|p| exp.config.seeds.iter().map(move |s| (*p, *s)))
        .collect()
}

fn frontend(exp: &Experiment) -> CliResult<AudioFrontend> {
    Ok(AudioFrontend::new(exp.config.dsp.clone())?)
}

fn tool_strike(exp: &Experiment) -> StrikeParams {
    StrikeParams {
        energy: 1.0,
        noise_level: exp.config.strike_noise,
    }
}

/// Runs every (policy, seed) pair and writes `steps.csv` and `store.bin`
/// into its run directory. Returns the run directories.
pub fn cmd_explore(exp: &Experiment, root: &Path) -> CliResult<Vec<PathBuf>> {
    let fe = frontend(exp)?;
    let world = generate_world(&exp.scenario)?;
    let hash = exp.config_hash();
    let weights: BTreeMap<u64, WeightVector> = exp
        .config
        .seeds
        .par_iter()
        .map(|&s| {
            let fit = pretrain_weights(derive_seed(s, "pretrain", &[]), &fe, exp.config.pretrain_pairs)?;
            info!("seed {s}: weights {:?}, R² {:.3}", fit.weights.weights, fit.r_squared);
            Ok((s, fit.weights))
        })
        .collect::<CliResult<_>>()?;
    let cfg = ExploreConfig {
        candidates_per_step: exp.config.candidates_per_step,
        strike: tool_strike(exp),
    };
    runs(exp)
        .par_iter()
        .map(|&(policy, seed)| {
            let w = weights[&seed];
            let traj = run_exploration(&world, &fe, policy, w, exp.config.budget_per_scene, &cfg, seed)?;
            let dir = run_dir(root, exp.environment(), policy.name(), seed);
            write_csv(&dir.join(STEPS_FILE), &hash, &traj.logs)?;
            let mut bytes = Vec::new();
            traj.store.write_to(&mut bytes, &w, &hash)?;
            write_atomic(&dir.join(STORE_FILE), &bytes)?;
            info!("{} {policy} seed {seed}: {} strikes -> {}", exp.environment(), traj.store.len(), dir.display());
            Ok(dir)
        })
        .collect()
}

pub fn read_steps(path: &Path) -> CliResult<Vec<StepLog>> {
    let text = std::fs::read_to_string(path)?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn load_stores(exp: &Experiment, root: &Path) -> CliResult<BTreeMap<(PolicyKind, u64), StoreFile>> {
    let keys = runs(exp);
    let missing: Vec<String> = keys
        .iter()
        .map(|(p, s)| run_dir(root, exp.environment(), p.name(), *s).join(STORE_FILE))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Validation(format!(
            "missing exploration artifacts (run `curio explore` first):\n  {}",
            missing.join("\n  ")
        )));
    }
    let hash = exp.config_hash();
    keys.into_par_iter()
        .map(|(p, s)| {
            let path = run_dir(root, exp.environment(), p.name(), s).join(STORE_FILE);
            let file = AvStore::read_from(std::io::BufReader::new(std::fs::File::open(&path)?))?;
            if file.config_hash != hash {
                return Err(CliError::Validation(format!(
                    "{} was produced by a different config (hash {}, expected {hash})",
                    path.display(),
                    file.config_hash
                )));
            }
            Ok(((p, s), file))
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct AudioPredRow {
    pub policy: PolicyKind,
    pub seed: u64,
    pub samples: usize,
    pub scene: u32,
    pub active_entries: usize,
    pub mean_mcd: f64,
}

#[derive(Debug, Serialize)]
pub struct SceneBoundaryRow {
    pub policy: PolicyKind,
    pub seed: u64,
    pub scene: u32,
    pub start_sample: usize,
}

#[derive(Debug, Serialize)]
pub struct MaterialRow {
    pub policy: PolicyKind,
    pub seed: u64,
    pub run: usize,
    pub variant: String,
    pub samples: usize,
    pub accuracy: f64,
}

#[derive(Debug, Serialize)]
pub struct MusicRow {
    pub policy: PolicyKind,
    pub seed: u64,
    pub trial: usize,
    pub target_object: u32,
    pub target_part: u32,
    pub chosen_object: u32,
    pub chosen_part: u32,
    pub mcd: f64,
    pub correct: bool,
}

#[derive(Debug, Serialize)]
pub struct ActivityRow {
    pub policy: PolicyKind,
    pub seed: u64,
    pub trial: usize,
    pub picked: String,
    pub inferred: String,
    pub correct: bool,
}

#[derive(Default)]
struct RunOutput {
    audio: Vec<AudioPredRow>,
    boundaries: Vec<SceneBoundaryRow>,
    material: Vec<MaterialRow>,
    music: Vec<MusicRow>,
    activity: Vec<ActivityRow>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

fn object_name(world: &World, id: u32) -> String {
    world
        .unique_objects()
        .into_iter()
        .find(|o| o.object_id == id)
        .map_or_else(|| id.to_string(), |o| o.name.clone())
}

fn object_id(world: &World, scene: u32, name: &str) -> CliResult<u32> {
    world
        .scene(scene)?
        .objects
        .iter()
        .find(|o| o.name == name)
        .map(|o| o.object_id)
        .ok_or_else(|| CliError::Validation(format!("object `{name}` is not in scene {scene}")))
}

fn evaluate_run(
    exp: &Experiment,
    world: &World,
    fe: &AudioFrontend,
    tests: &BTreeMap<u64, TestSet>,
    (policy, seed): (PolicyKind, u64),
    file: &StoreFile,
) -> CliResult<RunOutput> {
    let c = &exp.config;
    let store = AvStore::from_records(file.records.clone());
    let w = file.weights;
    let mut out = RunOutput::default();
    if c.tasks.audio_pred {
        for p in eval_audio_prediction(&store, &tests[&seed], &w, c.snapshot_interval)? {
            out.audio.push(AudioPredRow {
                policy,
                seed,
                samples: p.samples,
                scene: p.scene,
                active_entries: p.active_entries,
                mean_mcd: p.mean_mcd,
            });
        }
        let mut last = None;
        for (i, r) in store.records().iter().enumerate() {
            if last != Some(r.point.scene_id) {
                out.boundaries.push(SceneBoundaryRow {
                    policy,
                    seed,
                    scene: r.point.scene_id,
                    start_sample: i,
                });
                last = Some(r.point.scene_id);
            }
        }
    }
    if c.tasks.material {
        let train = label_records(world, store.records())?;
        let test = label_test_set(&tests[&seed]);
        let checkpoints: Vec<usize> = if c.material.checkpoints.is_empty() {
            (1..=world.scenes.len()).map(|k| k * c.budget_per_scene).collect()
        } else {
            c.material.checkpoints.clone()
        };
        let cfg = MaterialEvalConfig {
            runs: c.material.runs,
            train: TrainParams {
                hidden: c.material.hidden,
                epochs: c.material.epochs,
                learning_rate: c.material.learning_rate,
                ..Default::default()
            },
        };
        for p in eval_material(&train, &test, &checkpoints, &cfg, derive_seed(seed, "material", &[]))? {
            out.material.push(MaterialRow {
                policy,
                seed,
                run: p.run,
                variant: p.variant.name().to_string(),
                samples: p.samples,
                accuracy: p.accuracy,
            });
        }
    }
    if c.tasks.music {
        let demo = DemoParams {
            energy: c.music.demo_energy,
            noise_level: c.music.demo_noise,
            ..Default::default()
        };
        let im = ImitationConfig {
            candidates_per_part: c.music.candidates_per_part,
            seed: derive_seed(seed, "imitation", &[]),
        };
        let trials = eval_imitation(
            world,
            c.music.scene,
            fe,
            store.view(),
            &w,
            &demo,
            &im,
            c.music.demos,
            derive_seed(seed, "music-demos", &[]),
        )?;
        for t in trials {
            out.music.push(MusicRow {
                policy,
                seed,
                trial: t.trial,
                target_object: t.target_object,
                target_part: t.target_part,
                chosen_object: t.chosen_object,
                chosen_part: t.chosen_part,
                mcd: t.mcd,
                correct: t.correct,
            });
        }
    }
    if c.tasks.activity {
        let a = &c.activity;
        let placement = object_id(world, a.scene, &a.placement)?;
        let picked: Vec<u32> = if a.picked.is_empty() {
            world.scene(a.scene)?.objects.iter().map(|o| o.object_id).filter(|id| *id != placement).collect()
        } else {
            a.picked.iter().map(|n| object_id(world, a.scene, n)).collect::<CliResult<_>>()?
        };
        let demo = DemoParams {
            energy: a.demo_energy,
            noise_level: a.demo_noise,
            ..Default::default()
        };
        let trials = eval_activity(
            world,
            a.scene,
            &picked,
            placement,
            store.view(),
            &w,
            fe,
            &demo,
            a.demos,
            derive_seed(seed, "activity", &[]),
        )?;
        for t in trials {
            out.activity.push(ActivityRow {
                policy,
                seed,
                trial: t.trial,
                picked: object_name(world, t.picked),
                inferred: object_name(world, t.inferred),
                correct: t.correct,
            });
        }
    }
    Ok(out)
}

/// Scores every explored run on the enabled tasks and writes the CSVs and
/// `summary.json` under `<root>/evaluate/<env>/`. Returns the summary.
pub fn cmd_evaluate(exp: &Experiment, root: &Path) -> CliResult<Value> {
    let c = &exp.config;
    let stores = load_stores(exp, root)?;
    let fe = frontend(exp)?;
    let world = generate_world(&exp.scenario)?;
    let hash = exp.config_hash();
    let tests: BTreeMap<u64, TestSet> = if c.tasks.audio_pred || c.tasks.material {
        c.seeds
            .par_iter()
            .map(|&s| Ok((s, TestSet::build(&world, &fe, tool_strike(exp), derive_seed(s, "test-set", &[]))?)))
            .collect::<CliResult<_>>()?
    } else {
        BTreeMap::new()
    };
    let outputs: Vec<RunOutput> = stores
        .par_iter()
        .map(|(key, file)| evaluate_run(exp, &world, &fe, &tests, *key, file))
        .collect::<CliResult<_>>()?;

    let dir = eval_dir(root, exp.environment());
    let mut summary = serde_json::Map::new();
    summary.insert("config_hash".into(), json!(hash));
    summary.insert("environment".into(), json!(exp.environment()));
    let policies = &c.policies;
    let per_policy = |f: &dyn Fn(PolicyKind) -> Value| -> Value {
        Value::Object(policies.iter().map(|p| (p.name().to_string(), f(*p))).collect())
    };

    if c.tasks.audio_pred {
        let rows: Vec<&AudioPredRow> = outputs.iter().flat_map(|o| &o.audio).collect();
        write_csv(&dir.join("audio_pred.csv"), &hash, &rows)?;
        let b: Vec<&SceneBoundaryRow> = outputs.iter().flat_map(|o| &o.boundaries).collect();
        write_csv(&dir.join("scene_boundaries.csv"), &hash, &b)?;
        summary.insert(
            "audio_pred".into(),
            per_policy(&|p| {
                let mut aucs = Vec::new();
                let mut finals = Vec::new();
                for s in &c.seeds {
                    let curve: Vec<curio_core::tasks::audio_prediction::CurvePoint> = rows
                        .iter()
                        .filter(|r| r.policy == p && r.seed == *s)
                        .map(|r| curio_core::tasks::audio_prediction::CurvePoint {
                            samples: r.samples,
                            scene: r.scene,
                            active_entries: r.active_entries,
                            mean_mcd: r.mean_mcd,
                        })
                        .collect();
                    aucs.push(area_under_curve(&curve));
                    finals.push(curve.last().map_or(f64::NAN, |c| c.mean_mcd));
                }
                let (m, sd) = mean_std(&aucs);
                json!({ "auc": aucs, "auc_mean": m, "auc_std": sd, "final_mcd_mean": mean_std(&finals).0 })
            }),
        );
    }
    if c.tasks.material {
        let rows: Vec<&MaterialRow> = outputs.iter().flat_map(|o| &o.material).collect();
        write_csv(&dir.join("material.csv"), &hash, &rows)?;
        let last = rows.iter().map(|r| r.samples).max().unwrap_or(0);
        summary.insert(
            "material".into(),
            per_policy(&|p| {
                let variants: BTreeMap<String, Value> = ["vision_only", "audio_only", "audiovisual"]
                    .iter()
                    .map(|v| {
                        let accs: Vec<f64> = rows
                            .iter()
                            .filter(|r| r.policy == p && r.variant == *v && r.samples == last)
                            .map(|r| r.accuracy)
                            .collect();
                        let (m, sd) = mean_std(&accs);
                        (v.to_string(), json!({ "final_mean": m, "final_std": sd }))
                    })
                    .collect();
                json!(variants)
            }),
        );
    }
    if c.tasks.music {
        let rows: Vec<&MusicRow> = outputs.iter().flat_map(|o| &o.music).collect();
        write_csv(&dir.join("music.csv"), &hash, &rows)?;
        summary.insert(
            "music".into(),
            per_policy(&|p| {
                let per_seed: Vec<f64> = c
                    .seeds
                    .iter()
                    .map(|s| {
                        let t: Vec<&&MusicRow> = rows.iter().filter(|r| r.policy == p && r.seed == *s).collect();
                        accuracy(&t, |r| r.correct)
                    })
                    .collect();
                json!({ "accuracy": per_seed, "accuracy_mean": mean_std(&per_seed).0 })
            }),
        );
    }
    if c.tasks.activity {
        let rows: Vec<&ActivityRow> = outputs.iter().flat_map(|o| &o.activity).collect();
        write_csv(&dir.join("activity.csv"), &hash, &rows)?;
        let a = &c.activity;
        let n_picked = if a.picked.is_empty() {
            world.scene(a.scene)?.objects.len() - 1
        } else {
            a.picked.len()
        };
        summary.insert(
            "activity".into(),
            per_policy(&|p| {
                let mut accs = Vec::new();
                let mut pvals = Vec::new();
                for s in &c.seeds {
                    let t: Vec<&&ActivityRow> = rows.iter().filter(|r| r.policy == p && r.seed == *s).collect();
                    let k = t.iter().filter(|r| r.correct).count() as u64;
                    accs.push(accuracy(&t, |r| r.correct));
                    pvals.push(binomial_p_value(k, t.len() as u64, 1.0 / n_picked as f64));
                }
                json!({ "accuracy": accs, "accuracy_mean": mean_std(&accs).0, "chance": 1.0 / n_picked as f64, "p_value": pvals })
            }),
        );
    }
    let summary = Value::Object(summary);
    write_json(&dir.join("summary.json"), &summary)?;
    info!("evaluation written to {}", dir.display());
    Ok(summary)
}

/// Runs the DSP self-check, printing one line per check.
pub fn cmd_validate_dsp(exp: Option<&Experiment>) -> CliResult<Vec<CheckResult>> {
    let cfg = exp.map(|e| e.config.dsp.clone()).unwrap_or_default();
    let results = validate_dsp(&cfg);
    for r in &results {
        println!(
            "{} {:<24} max_error {:.3e} (tolerance {:.0e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.max_error,
            r.tolerance
        );
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(results)
    } else {
        Err(CliError::Runtime(format!("DSP checks failed: {}", failed.join(", "))))
    }
}

/// Writes every stored clip as 16-bit WAV under
/// `<root>/wav/<env>/<policy>/seed_<seed>/`.
pub fn cmd_export_wav(exp: &Experiment, root: &Path) -> CliResult<usize> {
    let stores = load_stores(exp, root)?;
    let counts: Vec<usize> = stores
        .par_iter()
        .map(|((p, s), file)| {
            let dir = root.join("wav").join(exp.environment()).join(p.name()).join(format!("seed_{s}"));
            std::fs::create_dir_all(&dir)?;
            for (i, r) in file.records.iter().enumerate() {
                let name = format!("{i:04}_s{}_o{}_p{}.wav", r.point.scene_id, r.point.object_id, r.point.part_id);
                let tmp = dir.join(format!(".{name}.tmp"));
                r.clip.write_wav(&tmp)?;
                std::fs::rename(&tmp, dir.join(&name))?;
            }
            Ok(file.records.len())
        })
        .collect::<CliResult<_>>()?;
    Ok(counts.iter().sum())
}
