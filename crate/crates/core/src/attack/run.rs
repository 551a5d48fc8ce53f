use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::step::{auto_pgd_step, checkpoints, pgd_step};
use super::{max_deviation, Algorithm, AttackConfig, AttackError, AttackReport, AttackState, IterationLog, Task};
use crate::assets::{self, Image, Mesh, Texture};
use crate::renderer::{render, PixelBox, Rendering, TexGradient};
use crate::scene_io::{emit_xml, frame_file_name, FrameScene};
use crate::victim::{self, argmax, Detection, Victim};

/// Everything the attack needs besides the texture.
#[derive(Debug, Clone)]
pub struct AttackScene<'a> {
    pub frames: &'a [FrameScene],
    pub mesh: &'a Mesh,
    pub victim: &'a Victim,
    pub gimbal_locked_frames: Vec<u32>,
}

/// Where per-iteration artifacts go. Paths written into frame XML are
/// relative to `root`, the scene root that holds the meshes.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub root: PathBuf,
    /// Run directory relative to `root`.
    pub run_dir: PathBuf,
    pub save_renders: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for per-frame work; 0 uses the rayon default.
    pub jobs: usize,
    pub output: Option<RunOutput>,
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub state: AttackState,
    pub report: AttackReport,
    /// Per-texel flag: covered by some frame's bilinear footprint.
    pub sampled: Vec<bool>,
}

enum Prediction {
    Class(usize),
    Detection(Option<Detection>),
}

struct FrameResult {
    objective: f64,
    gradient: TexGradient,
    prediction: Prediction,
    rendering: Rendering,
}

/// Objective, prediction and texture gradient for one frame.
fn frame_result(
    scene: &AttackScene,
    index: usize,
    texture: &Texture,
    ground_truth: Option<&PixelBox>,
    config: &AttackConfig,
) -> Result<FrameResult, AttackError> {
    let fs = &scene.frames[index];
    let wrap_err = |source| AttackError::Render { frame: fs.frame, source };
    let victim_err = |source| AttackError::Victim { frame: fs.frame, source };
    let rendering = render(fs, scene.mesh, texture).map_err(wrap_err)?;
    let image = &rendering.image;
    let (objective, d_image, prediction) = match (scene.victim, config.task) {
        (Victim::Classifier(model), Task::Classification) => {
            let pred = argmax(&model.logits(image).map_err(victim_err)?);
            match config.target {
                None => {
                    let (ce, g) = model.cross_entropy_grad(image, config.true_label).map_err(victim_err)?;
                    (ce, g, Prediction::Class(pred))
                }
                Some(t) => {
                    let (ce, g) = model.cross_entropy_grad(image, t).map_err(victim_err)?;
                    (-ce, negate(g), Prediction::Class(pred))
                }
            }
        }
        (Victim::Detector(model), Task::Detection) => {
            let cells = ground_truth.map(|b| model.cells_overlapping(b)).unwrap_or_default();
            let (score, g) = model.objectness_grad(image, &cells).map_err(victim_err)?;
            let det = model.detect(image).map_err(victim_err)?;
            (-score, negate(g), Prediction::Detection(det))
        }
        _ => {
            return Err(AttackError::Config(format!(
                "victim model does not match the {} task",
                config.task.as_str()
            )))
        }
    };
    let gradient = rendering
        .backward(&d_image, (texture.width, texture.height))
        .map_err(wrap_err)?;
    Ok(FrameResult {
        objective,
        gradient,
        prediction,
        rendering,
    })
}

fn negate(mut g: Vec<[f64; 3]>) -> Vec<[f64; 3]> {
    for v in &mut g {
        *v = v.map(|c| -c);
    }
    g
}

/// Per-frame results over a set of frames, aggregated in frame order.
pub struct Evaluation {
    pub objective: f64,
    pub gradient: TexGradient,
    pub metric: f64,
    pub images: Vec<Image>,
    pub renderings: Vec<Rendering>,
}

fn evaluate(
    scene: &AttackScene,
    indices: &[usize],
    texture: &Texture,
    ground_truth: &[Option<PixelBox>],
    config: &AttackConfig,
    pool: &rayon::ThreadPool,
    iteration: usize,
) -> Result<Evaluation, AttackError> {
    let results: Vec<Result<FrameResult, AttackError>> = pool.install(|| {
        indices
            .par_iter()
            .map(|&i| frame_result(scene, i, texture, ground_truth[i].as_ref(), config))
            .collect()
    });
    let mut objective = 0.0;
    let mut gradient = TexGradient::zeros(texture.width, texture.height);
    let mut predictions = Vec::with_capacity(indices.len());
    let mut renderings = Vec::with_capacity(indices.len());
    for (&i, r) in indices.iter().zip(results) {
        let r = r?;
        let bad = r.gradient.values.iter().flatten().filter(|v| !v.is_finite()).count();
        if bad > 0 || !r.objective.is_finite() {
            return Err(AttackError::NonFinite {
                iteration,
                frame: scene.frames[i].frame,
                count: bad,
            });
        }
        objective += r.objective;
        gradient
            .add_assign(&r.gradient)
            .map_err(|source| AttackError::Render { frame: scene.frames[i].frame, source })?;
        predictions.push(r.prediction);
        renderings.push(r.rendering);
    }
    let metric = match config.task {
        Task::Classification => {
            let preds: Vec<usize> = predictions
                .iter()
                .map(|p| match p {
                    Prediction::Class(c) => *c,
                    Prediction::Detection(_) => usize::MAX,
                })
                .collect();
            victim::accuracy(&preds, &vec![config.true_label; preds.len()])
                .map_err(|source| AttackError::Victim { frame: 0, source })?
        }
        Task::Detection => {
            let dets: Vec<Option<Detection>> = predictions
                .iter()
                .map(|p| match p {
                    Prediction::Detection(d) => *d,
                    Prediction::Class(_) => None,
                })
                .collect();
            let gts: Vec<PixelBox> = indices
                .iter()
                .map(|&i| ground_truth[i].expect("detection frames carry a ground-truth box"))
                .collect();
            let iou = match scene.victim {
                Victim::Detector(m) => m.iou_threshold,
                Victim::Classifier(_) => 0.5,
            };
            victim::average_precision(&dets, &gts, iou).map_err(|source| AttackError::Victim { frame: 0, source })?
        }
    };
    Ok(Evaluation {
        objective,
        gradient,
        metric,
        images: renderings.iter().map(|r| r.image.clone()).collect(),
        renderings,
    })
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, AttackError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AttackError::Config(format!("thread pool: {e}")))
}

/// Object boxes from the hit masks of a render of every frame.
fn ground_truth_boxes(scene: &AttackScene, texture: &Texture) -> Result<Vec<Option<PixelBox>>, AttackError> {
    scene
        .frames
        .iter()
        .map(|fs| {
            let r = render(fs, scene.mesh, texture).map_err(|source| AttackError::Render { frame: fs.frame, source })?;
            Ok(r.object_box())
        })
        .collect()
}

/// Metric and negated objective of a texture over all frames.
pub fn evaluate_texture(
    scene: &AttackScene,
    texture: &Texture,
    config: &AttackConfig,
    jobs: usize,
) -> Result<Evaluation, AttackError> {
    let gts = ground_truth_boxes(scene, texture)?;
    let all: Vec<usize> = (0..scene.frames.len()).collect();
    evaluate(scene, &all, texture, &gts, config, &thread_pool(jobs)?, 0)
}

/// Texels that carry weight in at least one frame's bilinear footprint.
pub fn sampled_texels(renderings: &[Rendering], texel_count: usize) -> Vec<bool> {
    let mut out = vec![false; texel_count];
    for r in renderings {
        for rec in &r.records {
            for (&k, &w) in rec.footprint.texels.iter().zip(&rec.footprint.weights) {
                if w != 0.0 {
                    out[k] = true;
                }
            }
        }
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AttackError + '_ {
    move |source| AttackError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Writer<'a> {
    out: &'a RunOutput,
}

impl Writer<'_> {
    fn abs(&self, rel: &Path) -> PathBuf {
        self.out.root.join(rel)
    }

    fn prepare(&self) -> Result<(), AttackError> {
        let run = self.abs(&self.out.run_dir);
        for sub in ["frames", "textures", "renders"] {
            let dir = run.join(sub);
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
            }
        }
        for sub in ["frames", "textures"] {
            let dir = run.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(())
    }

    /// Saves the texture and points every frame at it.
    fn texture(&self, name: &str, texture: &Texture, frames: &[FrameScene]) -> Result<String, AttackError> {
        let rel = self.out.run_dir.join("textures").join(name);
        assets::save_texture(texture, &self.abs(&rel))?;
        let rel_str = rel.to_string_lossy().replace('\\', "/");
        for fs in frames {
            let mut scene = fs.clone();
            scene.object.texture_path = rel_str.clone();
            let path = self.abs(&self.out.run_dir.join("frames").join(frame_file_name(fs.frame)));
            fs::write(&path, emit_xml(&scene)).map_err(io_err(&path))?;
        }
        Ok(rel_str)
    }

    fn renders(&self, iteration: usize, frames: &[u32], images: &[Image]) -> Result<(), AttackError> {
        if !self.out.save_renders {
            return Ok(());
        }
        let dir = self.abs(&self.out.run_dir.join("renders").join(format!("iter_{iteration:04}")));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (f, img) in frames.iter().zip(images) {
            assets::save_image(img, &dir.join(format!("frame_{f:04}.ppm")))?;
        }
        Ok(())
    }

    fn report(&self, report: &AttackReport) -> Result<(), AttackError> {
        let path = self.abs(&self.out.run_dir.join("report.json"));
        let text = serde_json::to_string_pretty(report).expect("report serializes");
        fs::write(&path, text + "\n").map_err(io_err(&path))
    }
}

fn batch_order(n: usize, config: &AttackConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if config.batch != 0 && config.batch < n {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    }
    order
}

fn batch_for(order: &[usize], iteration: usize, batch: usize) -> Vec<usize> {
    let n = order.len();
    if batch == 0 || batch >= n {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..batch).map(|k| order[(iteration * batch + k) % n]).collect();
    idx.sort_unstable();
    idx
}

/// Runs the attack loop from `initial` and returns the final state and report.
///
/// The returned `state.best` (lowest loss over all evaluated textures) is the
/// adversarial texture; it is saved as `textures/final.pfm` and every frame
/// XML references it once the run completes.
pub fn run_attack(
    scene: &AttackScene,
    initial: Texture,
    config: &AttackConfig,
    options: &RunOptions,
) -> Result<AttackOutcome, AttackError> {
    config.validate()?;
    if scene.frames.is_empty() {
        return Err(AttackError::Config("no frames to attack".into()));
    }
    initial.validate()?;
    let pool = thread_pool(options.jobs)?;
    let writer = options.output.as_ref().map(|out| Writer { out });

    let ground_truth = ground_truth_boxes(scene, &initial)?;
    if let Some(i) = ground_truth.iter().position(Option::is_none) {
        return Err(AttackError::Config(format!(
            "object is not visible in frame {}",
            scene.frames[i].frame
        )));
    }
    let all: Vec<usize> = (0..scene.frames.len()).collect();
    let benign = evaluate(scene, &all, &initial, &ground_truth, config, &pool, 0)?;
    let sampled = sampled_texels(&benign.renderings, initial.texels.len());

    let mut state = AttackState::new(initial.clone(), config);
    let mut report = AttackReport {
        complete: false,
        algorithm: config.algorithm,
        task: config.task,
        budget: config.budget,
        step_size: config.step_size,
        iterations: config.iterations,
        target: config.target,
        frames: scene.frames.iter().map(|f| f.frame).collect(),
        gimbal_locked_frames: scene.gimbal_locked_frames.clone(),
        metric: config.task.metric_name().to_string(),
        benign: benign.metric,
        adversarial: None,
        benign_loss: -benign.objective,
        best_loss: None,
        budget_ok: true,
        locality_ok: None,
        final_texture: None,
        log: Vec::new(),
    };
    if let Some(w) = &writer {
        w.prepare()?;
        w.texture("iter_0000.pfm", &state.current, scene.frames)?;
        w.report(&report)?;
    }

    let order = batch_order(scene.frames.len(), config);
    let schedule = match config.algorithm {
        Algorithm::AutoPgd => {
            let p = &config.auto_pgd;
            checkpoints(config.iterations, p.first_checkpoint, p.checkpoint_decay, p.min_checkpoint_gap)
        }
        Algorithm::Pgd => Vec::new(),
    };
    let mut best_gradient = TexGradient::zeros(initial.width, initial.height);
    let mut last_loss: Option<f64> = None;
    let mut improved: Vec<bool> = Vec::with_capacity(config.iterations);
    let (mut last_checkpoint, mut step_at_checkpoint, mut best_at_checkpoint) = (0usize, state.step_size, f64::INFINITY);

    for k in 0..config.iterations {
        let batch = batch_for(&order, k, config.batch);
        let eval = evaluate(scene, &batch, &state.current, &ground_truth, config, &pool, k)?;
        if let Some(w) = &writer {
            let ids: Vec<u32> = batch.iter().map(|&i| scene.frames[i].frame).collect();
            w.renders(k, &ids, &eval.images)?;
        }
        let loss = -eval.objective;
        improved.push(last_loss.is_some_and(|l| loss < l));
        last_loss = Some(loss);
        let current = state.current.clone();
        if state.record(loss, &current) {
            best_gradient = eval.gradient.clone();
        }
        let mut gradient = eval.gradient;

        let mut halved = false;
        if schedule.contains(&k) {
            let window = k - last_checkpoint;
            let count = improved[last_checkpoint + 1..=k].iter().filter(|&&b| b).count();
            let too_few = (count as f64) < config.auto_pgd.improvement_ratio * window as f64;
            let stalled = step_at_checkpoint == state.step_size && best_at_checkpoint == state.best_loss;
            if too_few || stalled {
                state.step_size /= 2.0;
                state.current = state.best.clone();
                state.previous = None;
                gradient = best_gradient.clone();
                last_loss = Some(state.best_loss);
                halved = true;
            }
            last_checkpoint = k;
            step_at_checkpoint = state.step_size;
            best_at_checkpoint = state.best_loss;
        }

        let next = match config.algorithm {
            Algorithm::Pgd => pgd_step(&state, &gradient, config)?,
            Algorithm::AutoPgd => auto_pgd_step(&state, &gradient, config)?,
        };
        state.previous = Some(std::mem::replace(&mut state.current, next));
        state.iteration = k + 1;

        let deviation = state.max_deviation();
        let entry = IterationLog {
            iteration: k,
            loss,
            metric: eval.metric,
            step_size: state.step_size,
            max_deviation: deviation,
            within_budget: deviation <= config.budget + 1e-9,
            halved,
        };
        report.budget_ok &= entry.within_budget;
        state.log.push(entry.clone());
        report.log.push(entry);
        report.best_loss = Some(state.best_loss);
        if let Some(w) = &writer {
            w.texture(&format!("iter_{:04}.pfm", k + 1), &state.current, scene.frames)?;
            w.report(&report)?;
        }
    }

    // the last step's texture has not been scored yet
    let last = evaluate(scene, &all, &state.current, &ground_truth, config, &pool, config.iterations)?;
    let current = state.current.clone();
    state.record(-last.objective, &current);
    let adversarial = if state.best == state.current {
        last.metric
    } else {
        evaluate(scene, &all, &state.best, &ground_truth, config, &pool, config.iterations)?.metric
    };
    report.adversarial = Some(adversarial);
    report.best_loss = Some(state.best_loss);
    report.locality_ok = Some(
        state
            .best
            .texels
            .iter()
            .zip(&initial.texels)
            .zip(&sampled)
            .all(|((a, b), &s)| s || a.map(f32::to_bits) == b.map(f32::to_bits)),
    );
    report.budget_ok &= max_deviation(&state.best, &initial) <= config.budget + 1e-9;
    report.complete = true;
    if let Some(w) = &writer {
        report.final_texture = Some(w.texture("final.pfm", &state.best, scene.frames)?);
        w.report(&report)?;
    }
    Ok(AttackOutcome { state, report, sampled })
}
