//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p curio-cli --test acceptance`; exits nonzero
//! when any check fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use curio_cli::commands::{cmd_evaluate, cmd_explore};
use curio_cli::config::{Experiment, ExperimentConfig};
use curio_core::audio::{AudioFrontend, DspConfig};
use curio_core::dsp_check::validate_dsp;
use curio_core::explore::{run_exploration, step_candidates, ExplorationState, ExploreConfig, PolicyKind};
use curio_core::mlp::Mlp;
use curio_core::oracle::{superimpose, synthesize_impact, StrikeParams, Waveform};
use curio_core::rng::{derive_seed, stream};
use curio_core::scene::{generate_world, ProceduralParams, ScenarioSpec};
use curio_core::store::{fit_weights, observe, pretrain_weights, AVRecord, WeightVector, DEFAULT_PRETRAIN_PAIRS};
use curio_core::tasks::activity::infer_from_clips;
use curio_core::tasks::music::{imitate_note, note_demo, Candidates, DemoParams, ImitationConfig};
use curio_core::visual::{extract_visual, VisualFeature};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn experiment(toml_text: &str, base: &Path) -> Experiment {
    let config: ExperimentConfig = toml::from_str(toml_text).unwrap();
    Experiment::from_config(config, base).unwrap()
}

fn explore_and_evaluate(exp: &Experiment, root: &Path) -> Value {
    cmd_explore(exp, root).unwrap();
    cmd_evaluate(exp, root).unwrap()
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn dsp_exactness() -> Outcome {
    let t = Instant::now();
    let results = validate_dsp(&DspConfig::default());
    let elapsed = t.elapsed();
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    let detail = results
        .iter()
        .map(|r| format!("{} {:.1e}", r.name, r.max_error))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(failed.is_empty() && results.len() >= 5 && within(elapsed, 10.0), format!("{detail}; {elapsed:.1?} (limit 10 s)"))
}

fn amplitude_invariance() -> Outcome {
    let fe = AudioFrontend::reference();
    let world = generate_world(&ScenarioSpec::xylophone(0)).unwrap();
    let w = pretrain_weights(derive_seed(0, "pretrain", &[]), fe, DEFAULT_PRETRAIN_PAIRS).unwrap().weights;
    let cfg = ExploreConfig { strike: StrikeParams { energy: 1.0, noise_level: 0.01 }, ..Default::default() };
    let traj = run_exploration(&world, fe, PolicyKind::Curiosity, w, 80, &cfg, 0).unwrap();
    let cands = Candidates::sample(&world, 0, &ImitationConfig::default()).unwrap();
    let mut worst = 0.0f64;
    let mut moved = 0;
    for trial in 0..50 {
        let demo = note_demo(&world, 0, &DemoParams::default(), 1, trial).unwrap();
        let base = imitate_note(&demo.waveform, fe, traj.store.view(), &cands, &w).unwrap();
        for scale in [0.25, 0.5, 2.0] {
            let got = imitate_note(&demo.waveform.scaled(scale), fe, traj.store.view(), &cands, &w).unwrap();
            if got.point != base.point || got.record != base.record {
                moved += 1;
            }
            worst = worst.max((got.mcd - base.mcd).abs());
        }
    }
    outcome(moved == 0 && worst < 1e-9, format!("150 scaled demos, {moved} changed argmin, max |dMCD| {worst:.1e} (limit 1e-9)"))
}

fn random_pair(r: &mut impl Rng) -> (VisualFeature, VisualFeature) {
    let dims = [8, 8, 4, 4, 2];
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for d in dims {
        let spread = r.random_range(0.0..2.0);
        let x: Vec<f64> = (0..d).map(|_| normal.sample(r)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + spread * normal.sample(r)).collect();
        a.push(x);
        b.push(y);
    }
    let to = |v: Vec<Vec<f64>>| VisualFeature { components: v.try_into().unwrap() };
    (to(a), to(b))
}

fn weight_recovery() -> Outcome {
    let t = Instant::now();
    let target = [0.0, 3.0, 0.0, 0.0, 0.0];
    let sam_part = |a: &VisualFeature, b: &VisualFeature| {
        a.components[1].iter().zip(&b.components[1]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    let mut r = stream(1, "acceptance-weights", &[]);
    let exact: Vec<_> = (0..100)
        .map(|_| {
            let (a, b) = random_pair(&mut r);
            let y = 3.0 * sam_part(&a, &b);
            (a, b, y)
        })
        .collect();
    let fit = fit_weights(&exact).unwrap().weights;
    let exact_err = fit.weights.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(fit.intercept.abs(), f64::max);

    let noise = Normal::new(0.0, 0.1).unwrap();
    let noisy: Vec<_> = (0..500)
        .map(|_| {
            let (a, b) = random_pair(&mut r);
            let y = 3.0 * sam_part(&a, &b) + noise.sample(&mut r);
            (a, b, y)
        })
        .collect();
    let fit = fit_weights(&noisy).unwrap().weights;
    let noisy_err = fit.weights.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let elapsed = t.elapsed();
    outcome(
        exact_err < 1e-6 && noisy_err <= 0.1 && within(elapsed, 5.0),
        format!("exact max err {exact_err:.1e} (limit 1e-6), noisy max err {noisy_err:.3} (limit 0.1), {elapsed:.1?}"),
    )
}

fn brute_novelty(f: &VisualFeature, stored: &[AVRecord], w: &WeightVector) -> f64 {
    stored
        .iter()
        .map(|r| {
            (0..5)
                .map(|k| {
                    let sq: f64 = f.components[k].iter().zip(&r.visual.components[k]).map(|(x, y)| (x - y).powi(2)).sum();
                    w.weights[k] * sq.sqrt()
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

fn farthest_first() -> Outcome {
    let fe = AudioFrontend::reference();
    let world = generate_world(&ScenarioSpec::procedural("ff", 3, ProceduralParams::default())).unwrap();
    let w = pretrain_weights(5, fe, DEFAULT_PRETRAIN_PAIRS).unwrap().weights;
    let mut state = ExplorationState::new(PolicyKind::Curiosity, w, 5);
    let mut agree = 0;
    let steps = 100;
    for step in 0..steps {
        let scene_idx = step / 20;
        if step % 20 == 0 {
            state.enter_scene();
        }
        let cands = step_candidates(&world, scene_idx, 64, 5, step).unwrap();
        let feats: Vec<VisualFeature> = cands
            .iter()
            .enumerate()
            .map(|(i, p)| extract_visual(p, &world, derive_seed(5, "ff-visual", &[step as u64, i as u64])).unwrap())
            .collect();
        let count = |i: usize| state.visits().get(&cands[i].object_id).copied().unwrap_or(0);
        let fewest = (0..cands.len()).map(count).min().unwrap();
        let eligible: Vec<usize> = (0..cands.len()).filter(|&i| count(i) == fewest).collect();
        let scores: Vec<f64> = eligible.iter().map(|&i| brute_novelty(&feats[i], state.store.records(), &w)).collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sel = state.select_next(&cands, &feats).unwrap();
        let ok = if best.is_infinite() {
            eligible.contains(&sel.index) && sel.novelty.is_infinite()
        } else {
            let oracle = eligible[scores.iter().position(|s| *s == best).unwrap()];
            sel.index == oracle && (sel.novelty - best).abs() <= 1e-12 * best
        };
        agree += ok as usize;
        let point = cands[sel.index];
        let o = observe(&world, fe, point, StrikeParams::default(), 0, derive_seed(5, "ff-audio", &[step as u64])).unwrap();
        state.record(AVRecord { point, visual: feats[sel.index].clone(), audio: o.audio, clip: o.clip });
    }
    outcome(agree == steps, format!("{agree}/{steps} steps match the brute-force oracle"))
}

fn exploration_efficiency() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut auc: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for env in [1, 2] {
        let exp = experiment(
            &format!(
                "scenario = \"builtin:procedural:{env}\"\nbudget_per_scene = 40\nseeds = [0,1,2,3,4,5,6,7,8,9]\n"
            ),
            dir.path(),
        );
        assert_eq!(exp.scenario.scenes.len(), 5);
        let summary = explore_and_evaluate(&exp, dir.path());
        for p in ["random", "cycling", "curiosity"] {
            let per_seed: Vec<f64> = summary["audio_pred"][p]["auc"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_f64().unwrap())
                .collect();
            let acc = auc.entry(p).or_insert_with(|| vec![0.0; per_seed.len()]);
            for (a, v) in acc.iter_mut().zip(per_seed) {
                *a += v;
            }
        }
    }
    let wins = (0..10)
        .filter(|&s| auc["curiosity"][s] < auc["random"][s] && auc["curiosity"][s] < auc["cycling"][s])
        .count();
    let mean = |p: &str| auc[p].iter().sum::<f64>() / 10.0;
    let elapsed = t.elapsed();
    outcome(
        wins >= 8 && within(elapsed, 300.0),
        format!(
            "curiosity lowest AUC in {wins}/10 seeds (need 8); mean AUC random {:.0}, cycling {:.0}, curiosity {:.0}; {elapsed:.1?}",
            mean("random"),
            mean("cycling"),
            mean("curiosity")
        ),
    )
}

fn read_material(path: &Path) -> Vec<(usize, String, usize, f64)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[2].parse().unwrap(), r[3].to_string(), r[4].parse().unwrap(), r[5].parse().unwrap())
        })
        .collect()
}

fn final_by_run(rows: &[(usize, String, usize, f64)]) -> BTreeMap<usize, BTreeMap<String, f64>> {
    let last = rows.iter().map(|r| r.2).max().unwrap();
    let mut out: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();
    for (run, variant, samples, acc) in rows {
        if *samples == last {
            out.entry(*run).or_default().insert(variant.clone(), *acc);
        }
    }
    out
}

fn gradient_error() -> f64 {
    let net = Mlp::new(7, 5, 6, 3);
    let mut r = stream(3, "acceptance-grad", &[]);
    let xs: Vec<Vec<f64>> = (0..12).map(|_| (0..7).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let ys: Vec<usize> = (0..12).map(|i| i % 6).collect();
    let g = net.gradient(&xs, &ys);
    let h = 1e-6;
    let fd: Vec<f64> = (0..net.params.len())
        .map(|i| {
            let mut up = net.clone();
            up.params[i] += h;
            let mut down = net.clone();
            down.params[i] -= h;
            (up.loss(&xs, &ys) - down.loss(&xs, &ys)) / (2.0 * h)
        })
        .collect();
    let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
    diff / norm
}

fn material_classification() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = ScenarioSpec::procedural("ambiguous", 4, ProceduralParams { ambiguity: 0.5, ..Default::default() });
    std::fs::write(dir.path().join("ambiguous.toml"), spec.to_toml_string()).unwrap();
    let base = "scenario = \"ambiguous.toml\"\npolicies = [\"curiosity\"]\nbudget_per_scene = 40\nseeds = [0]\n\
                [tasks]\naudio_pred = false\nmaterial = true\n[material]\nruns = 20\n";

    let exp = experiment(base, dir.path());
    explore_and_evaluate(&exp, &dir.path().join("noisy"));
    let finals = final_by_run(&read_material(&dir.path().join("noisy/evaluate/ambiguous/material.csv")));
    let wins = finals
        .values()
        .filter(|v| v["audiovisual"] >= v["vision_only"].max(v["audio_only"]))
        .count();

    let exp = experiment(&format!("{base}[visual]\nsigma_v = 0.0\n"), dir.path());
    explore_and_evaluate(&exp, &dir.path().join("clean"));
    let clean = final_by_run(&read_material(&dir.path().join("clean/evaluate/ambiguous/material.csv")));
    let av_clean = clean.values().map(|v| v["audiovisual"]).sum::<f64>() / clean.len() as f64;

    let grad = gradient_error();
    outcome(
        finals.len() == 20 && wins >= 15 && av_clean >= 0.75 && grad <= 1e-4,
        format!(
            "audiovisual >= both single-modality heads in {wins}/20 runs (need 15); noiseless audiovisual {av_clean:.3} (need 0.75); gradient rel err {grad:.1e} (limit 1e-4)"
        ),
    )
}

fn music_imitation() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut accs = Vec::new();
    for name in ["xylophone", "drums"] {
        let exp = Experiment::load(&configs_dir().join(format!("{name}.toml"))).unwrap();
        assert_eq!(exp.config.music.demos, 50);
        let summary = explore_and_evaluate(&exp, dir.path());
        accs.push((name, summary["music"]["curiosity"]["accuracy_mean"].as_f64().unwrap()));
    }
    let elapsed = t.elapsed();
    let pass = accs.iter().all(|(_, a)| *a >= 0.9) && within(elapsed, 120.0);
    let detail = accs.iter().map(|(n, a)| format!("{n} {a:.2}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("note accuracy {detail} (need 0.9 each); {elapsed:.1?} (limit 120 s)"))
}

fn activity_recognition() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::load(&configs_dir().join("pick-and-place.toml")).unwrap();
    let summary = explore_and_evaluate(&exp, dir.path());
    let s = &summary["activity"]["curiosity"];
    let acc = s["accuracy"][0].as_f64().unwrap();
    let p = s["p_value"][0].as_f64().unwrap();
    let chance = s["chance"].as_f64().unwrap();

    let fe = AudioFrontend::reference();
    let world = generate_world(&ScenarioSpec::pick_and_place(0)).unwrap();
    let scene = &world.scenes[0];
    let clean = StrikeParams { energy: 1.0, noise_level: 0.0 };
    let clips: Vec<(u32, Waveform)> = scene
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let raw = synthesize_impact(&scene.point(i, 0, 0.5), &world, clean, 9).unwrap();
            (o.object_id, fe.normalize_and_clip(&raw).unwrap())
        })
        .collect();
    let (plate, others) = clips.split_last().unwrap();
    let cands: Vec<(u32, &Waveform)> = others.iter().map(|(id, c)| (*id, c)).collect();
    let mut exact = 0;
    for (id, clip) in others {
        let (_, demo) = fe.process(&superimpose(clip, &plate.1).unwrap()).unwrap();
        let inf = infer_from_clips(&demo.mfcc, &cands, &plate.1, fe).unwrap();
        let score = inf.scores.iter().find(|(c, _)| c == id).unwrap().1;
        exact += (inf.object_id == *id && score == 0.0) as usize;
    }
    outcome(
        cands.len() == 6 && acc > chance && p < 0.05 && exact == cands.len(),
        format!(
            "accuracy {acc:.2} vs chance {chance:.3}, binomial p {p:.1e} (limit 0.05); constructed demos recovered {exact}/{}",
            cands.len()
        ),
    )
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::load(&configs_dir().join("kitchen-experiment.toml")).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_explore(&exp, &a).unwrap();
    cmd_explore(&exp, &b).unwrap();
    let (fa, fb) = (files_under(&a), files_under(&b));
    let csvs = fa.keys().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
    outcome(
        csvs > 0 && fa == fb,
        format!("{csvs} CSVs and {} stores compared byte for byte", fa.len() - csvs),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 9] = [
        ("dsp-exactness", dsp_exactness),
        ("amplitude-invariance", amplitude_invariance),
        ("weight-recovery", weight_recovery),
        ("farthest-first", farthest_first),
        ("exploration-efficiency", exploration_efficiency),
        ("material-classification", material_classification),
        ("music-imitation", music_imitation),
        ("activity-recognition", activity_recognition),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += !o.pass as usize;
        println!("{} {name}: {} [{:.1?}]", if o.pass { "PASS" } else { "FAIL" }, o.detail, t.elapsed());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
