//! `render`, `attack`, `eval` and `report`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use advtex_core::assets::{self, Image};
use advtex_core::attack::{
    evaluate_texture, run_attack, AttackConfig, AttackError, AttackReport, AttackScene, RunOptions, RunOutput, Task,
};
use advtex_core::renderer::render;
use advtex_core::victim::{self, fit_classifier, fit_detector, Victim, VictimError};
use serde::{Deserialize, Serialize};

use crate::error::{io, CliError};
use crate::verify;
use crate::workdir::{asset_err, write, Workdir};

/// Renders every frame with the texture its XML references, or with `texture`.
pub fn cmd_render(wd: &Workdir, texture: Option<&Path>, out: &Path) -> Result<usize, CliError> {
    let mesh = wd.mesh()?;
    for fs in &wd.frames {
        let mut tex = match texture {
            Some(p) => assets::load_texture(p).map_err(asset_err)?,
            None => wd.texture(&fs.object.texture_path)?,
        };
        tex.wrap = fs.object.wrap;
        let image = render(fs, &mesh, &tex)
            .map_err(|e| CliError::Render(format!("frame {}: {e}", fs.frame)))?
            .image;
        let path = out.join(format!("frame_{:04}.ppm", fs.frame));
        write(&path, [])?;
        assets::save_image(&image, &path).map_err(asset_err)?;
    }
    Ok(wd.frames.len())
}

pub fn model_path(root: &Path, task: Task) -> PathBuf {
    root.join("models").join(format!("{}.advm", task.as_str()))
}

fn victim_err(e: VictimError) -> CliError {
    CliError::Invariant(format!("victim: {e}"))
}

/// Fits the task's victim on benign renders of every frame and saves it.
///
/// The classifier's second class is trained on object-free background
/// images. The detector must reach an average precision of 1 on the benign
/// frames.
pub fn fit_victim(wd: &Workdir, task: Task) -> Result<Victim, CliError> {
    let mesh = wd.mesh()?;
    let initial = wd.initial_texture()?;
    let cfg = &wd.config;
    let renderings = wd
        .frames
        .iter()
        .map(|fs| render(fs, &mesh, &initial).map_err(|e| CliError::Render(format!("frame {}: {e}", fs.frame))))
        .collect::<Result<Vec<_>, _>>()?;
    let victim = match task {
        Task::Classification => {
            let true_label = cfg.attack.true_label;
            if true_label >= 2 {
                return Err(CliError::Invariant(format!("true_label {true_label} must be 0 or 1")));
            }
            let mut images: Vec<Image> = renderings.iter().map(|r| r.image.clone()).collect();
            let mut labels = vec![true_label; images.len()];
            let (w, h) = (images[0].width, images[0].height);
            images.extend((0..wd.frames.len()).map(|_| Image::filled(w, h, cfg.background)));
            labels.resize(images.len(), 1 - true_label);
            Victim::Classifier(fit_classifier(&images, &labels, &cfg.classifier, cfg.victim_seed).map_err(victim_err)?)
        }
        Task::Detection => {
            let images: Vec<Image> = renderings.iter().map(|r| r.image.clone()).collect();
            let masks: Vec<Vec<bool>> = renderings.iter().map(|r| r.hit_mask()).collect();
            let model = fit_detector(&images, &masks, cfg.background, &cfg.detector, cfg.victim_seed)
                .map_err(victim_err)?;
            let dets = images.iter().map(|i| model.detect(i)).collect::<Result<Vec<_>, _>>().map_err(victim_err)?;
            let gts = renderings
                .iter()
                .zip(&wd.frames)
                .map(|(r, fs)| {
                    r.object_box()
                        .ok_or_else(|| CliError::Invariant(format!("object not visible in frame {}", fs.frame)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let ap = victim::average_precision(&dets, &gts, model.iou_threshold).map_err(victim_err)?;
            if ap < 1.0 {
                return Err(CliError::Invariant(format!(
                    "detector reaches benign AP {ap:.3}, not 1; simplify the scene or retune the detector"
                )));
            }
            Victim::Detector(model)
        }
    };
    let path = model_path(&wd.root, task);
    write(&path, victim.to_bytes())?;
    Ok(victim)
}

pub fn load_victim(wd: &Workdir, task: Task) -> Result<Victim, CliError> {
    let path = model_path(&wd.root, task);
    let bytes = fs::read(&path)
        .map_err(|e| CliError::Invariant(format!("{}: {e}; run attack first", path.display())))?;
    Victim::from_bytes(&bytes).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn attack_err(e: AttackError) -> CliError {
    match e {
        AttackError::Config(m) => CliError::Invariant(m),
        AttackError::Render { .. } => CliError::Render(e.to_string()),
        other => CliError::Attack(other.to_string()),
    }
}

/// Run directory for one sweep entry, relative to the workdir.
pub fn run_dir_name(cfg: &AttackConfig) -> String {
    format!("runs/{}_{}_eps{}", cfg.algorithm.as_str(), cfg.task.as_str(), cfg.budget)
}

/// Runs the configured attack once per sweep budget.
pub fn cmd_attack(wd: &Workdir, jobs: usize) -> Result<Vec<(String, AttackReport)>, CliError> {
    if !wd.config.skip_verify && !verify::passed(wd) {
        return Err(CliError::Invariant(
            "verify-white has not passed in this workdir; run verify-white or set skip_verify=true".into(),
        ));
    }
    let task = wd.config.attack.task;
    let victim = fit_victim(wd, task)?;
    let mesh = wd.mesh()?;
    let initial = wd.initial_texture()?;
    let scene = AttackScene {
        frames: &wd.frames,
        mesh: &mesh,
        victim: &victim,
        gimbal_locked_frames: wd.gimbal_locked_frames(),
    };
    let mut out = Vec::new();
    for &budget in &wd.config.budgets {
        let cfg = wd.config.attack_for(budget);
        let run_dir = run_dir_name(&cfg);
        let resolved = {
            let mut c = wd.config.clone();
            c.entries.insert("budgets".into(), budget.to_string());
            c.to_text()
        };
        write(&wd.root.join(&run_dir).join("config.resolved"), resolved)?;
        let options = RunOptions {
            jobs,
            output: Some(RunOutput {
                root: wd.root.clone(),
                run_dir: PathBuf::from(&run_dir),
                save_renders: wd.config.save_renders,
            }),
        };
        let outcome = run_attack(&scene, initial.clone(), &cfg, &options).map_err(attack_err)?;
        out.push((run_dir, outcome.report));
    }
    Ok(out)
}

fn read_report(dir: &Path) -> Result<AttackReport, CliError> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Run directories under `runs/`, sorted by name.
pub fn run_dirs(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let runs = root.join("runs");
    if !runs.is_dir() {
        return Ok(Vec::new());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(&runs)
        .map_err(|e| io(&runs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("report.json").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub run: String,
    pub algorithm: String,
    pub task: String,
    pub budget: f64,
    pub metric: String,
    pub benign: f64,
    pub adversarial: f64,
    pub benign_loss: f64,
    pub adversarial_loss: f64,
    pub max_deviation: f64,
}

/// Re-scores every complete run's final texture against the saved victim.
///
/// Writes `eval.json` into each run directory and a combined `eval.json` at the root.
pub fn cmd_eval(wd: &Workdir, jobs: usize) -> Result<Vec<EvalEntry>, CliError> {
    let mesh = wd.mesh()?;
    let initial = wd.initial_texture()?;
    let mut entries = Vec::new();
    for dir in run_dirs(&wd.root)? {
        let report = read_report(&dir)?;
        let Some(final_rel) = report.final_texture.as_deref().filter(|_| report.complete) else {
            eprintln!("skipping incomplete run {}", dir.display());
            continue;
        };
        let victim = load_victim(wd, report.task)?;
        let scene = AttackScene {
            frames: &wd.frames,
            mesh: &mesh,
            victim: &victim,
            gimbal_locked_frames: Vec::new(),
        };
        let cfg = AttackConfig {
            task: report.task,
            target: report.target,
            budget: report.budget,
            ..wd.config.attack.clone()
        };
        let adv_texture = wd.texture(final_rel)?;
        let benign = evaluate_texture(&scene, &initial, &cfg, jobs).map_err(attack_err)?;
        let adversarial = evaluate_texture(&scene, &adv_texture, &cfg, jobs).map_err(attack_err)?;
        let entry = EvalEntry {
            run: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            algorithm: report.algorithm.as_str().into(),
            task: report.task.as_str().into(),
            budget: report.budget,
            metric: report.metric.clone(),
            benign: benign.metric,
            adversarial: adversarial.metric,
            benign_loss: -benign.objective,
            adversarial_loss: -adversarial.objective,
            max_deviation: advtex_core::attack::max_deviation(&adv_texture, &initial),
        };
        write(&dir.join("eval.json"), serde_json::to_string_pretty(&entry).expect("serializes") + "\n")?;
        entries.push(entry);
    }
    write(
        &wd.root.join("eval.json"),
        serde_json::to_string_pretty(&entries).expect("serializes") + "\n",
    )?;
    Ok(entries)
}

fn percent(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Table of every run plus `loss_curves.csv` at the workdir root.
///
/// Runs whose report is not marked complete show the last logged metric and
/// are flagged `incomplete`.
pub fn cmd_report(root: &Path) -> Result<String, CliError> {
    let mut table = format!(
        "{:<10} {:<26} {:>7} {:>8} {:>12}  {}\n",
        "Attack", "Task", "Budget", "Benign", "Adversarial", "Status"
    );
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["run", "algorithm", "task", "budget", "iteration", "loss", "metric", "step_size", "max_deviation"])
        .map_err(|e| CliError::Invariant(e.to_string()))?;
    let dirs = run_dirs(root)?;
    if dirs.is_empty() {
        return Err(CliError::Invariant(format!(
            "no runs under {}: run attack first",
            root.join("runs").display()
        )));
    }
    for dir in dirs {
        let report = read_report(&dir)?;
        let run = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let (adv, status) = match (report.complete, report.adversarial) {
            (true, Some(a)) => (percent(a), "complete"),
            _ => (
                report.log.last().map_or_else(|| "-".to_string(), |l| percent(l.metric)),
                "incomplete",
            ),
        };
        let _ = writeln!(
            table,
            "{:<10} {:<26} {:>7} {:>8} {:>12}  {}",
            report.algorithm.as_str(),
            format!("{} ({})", report.task.as_str(), report.metric),
            report.budget,
            percent(report.benign),
            adv,
            status
        );
        for l in &report.log {
            csv.write_record([
                run.clone(),
                report.algorithm.as_str().into(),
                report.task.as_str().into(),
                report.budget.to_string(),
                l.iteration.to_string(),
                l.loss.to_string(),
                l.metric.to_string(),
                l.step_size.to_string(),
                l.max_deviation.to_string(),
            ])
            .map_err(|e| CliError::Invariant(e.to_string()))?;
        }
    }
    let bytes = csv.into_inner().map_err(|e| CliError::Invariant(e.to_string()))?;
    write(&root.join("loss_curves.csv"), bytes)?;
    Ok(table)
}
