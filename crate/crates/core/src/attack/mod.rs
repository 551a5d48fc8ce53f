//! The attack loop: render every batch frame with the current texture, query
//! the victim, pull its image gradient back through the renderer into texture
//! space, sum over frames in a fixed order and apply a PGD or Auto-PGD step.
//!
//! The objective is always maximized: cross-entropy of the true class
//! (untargeted), negative cross-entropy toward the target class (targeted), or
//! negative summed objectness over the cells overlapping the object's box
//! (detection). Reported losses are the negated objective, so lower is a
//! stronger attack.

mod run;
mod step;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{AssetError, Texture};
use crate::renderer::RenderError;
use crate::scene_io::SceneIoError;
use crate::victim::VictimError;

pub use run::{evaluate_texture, run_attack, sampled_texels, AttackOutcome, AttackScene, Evaluation, RunOptions, RunOutput};
pub use step::{auto_pgd_step, checkpoints, pgd_step, project};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack configuration: {0}")]
    Config(String),
    #[error("texture is {texture:?} but gradient is {gradient:?}")]
    DimensionMismatch { texture: (usize, usize), gradient: (usize, usize) },
    #[error("frame {frame}: render failed: {source}")]
    Render { frame: u32, source: RenderError },
    #[error("frame {frame}: victim failed: {source}")]
    Victim { frame: u32, source: VictimError },
    #[error("iteration {iteration}: non-finite gradient from frame {frame} ({count} entries)")]
    NonFinite { iteration: usize, frame: u32, count: usize },
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Scene(#[from] SceneIoError),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pgd,
    AutoPgd,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Pgd => "pgd",
            Algorithm::AutoPgd => "auto_pgd",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "pgd" => Some(Algorithm::Pgd),
            "auto_pgd" | "apgd" => Some(Algorithm::AutoPgd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Detection,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Detection => "detection",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "classification" | "cls" => Some(Task::Classification),
            "detection" | "det" => Some(Task::Detection),
            _ => None,
        }
    }

    pub fn metric_name(&self) -> &'static str {
        match self {
            Task::Classification => "accuracy",
            Task::Detection => "ap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoPgdParams {
    pub momentum: f64,
    pub first_checkpoint: f64,
    pub checkpoint_decay: f64,
    pub min_checkpoint_gap: f64,
    /// Halve the step when fewer than this fraction of steps since the last checkpoint improved the loss.
    pub improvement_ratio: f64,
}

impl Default for AutoPgdParams {
    fn default() -> Self {
        AutoPgdParams {
            momentum: 0.75,
            first_checkpoint: 0.22,
            checkpoint_decay: 0.03,
            min_checkpoint_gap: 0.06,
            improvement_ratio: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub algorithm: Algorithm,
    pub task: Task,
    pub iterations: usize,
    pub step_size: f64,
    /// L∞ budget on [0, 1] texel values.
    pub budget: f64,
    /// Attacker-chosen class; `None` runs an untargeted attack.
    pub target: Option<usize>,
    /// Class of every frame that shows the object.
    pub true_label: usize,
    /// Frames rendered per iteration; 0 renders all frames.
    pub batch: usize,
    /// Orders the frames when batches are smaller than the sequence.
    pub seed: u64,
    pub auto_pgd: AutoPgdParams,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            algorithm: Algorithm::Pgd,
            task: Task::Classification,
            iterations: 100,
            step_size: 0.02,
            budget: 1.0,
            target: None,
            true_label: 1,
            batch: 0,
            seed: 0,
            auto_pgd: AutoPgdParams::default(),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: String| Err(AttackError::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.budget > 0.0 && self.budget <= 1.0) {
            return bad(format!("budget {} must lie in (0, 1]", self.budget));
        }
        if !(self.step_size > 0.0 && self.step_size <= self.budget) {
            return bad(format!("step size {} must lie in (0, budget]", self.step_size));
        }
        let p = &self.auto_pgd;
        if !(p.momentum > 0.0 && p.momentum <= 1.0) {
            return bad("auto_pgd momentum must lie in (0, 1]".into());
        }
        if !(p.first_checkpoint > 0.0 && p.first_checkpoint < 1.0 && p.min_checkpoint_gap > 0.0) {
            return bad("auto_pgd checkpoint fractions must be positive and below 1".into());
        }
        if !(0.0..=1.0).contains(&p.improvement_ratio) {
            return bad("auto_pgd improvement ratio must lie in [0, 1]".into());
        }
        if self.task == Task::Detection && self.target.is_some() {
            return bad("targeted attacks apply to classification only".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// Negated objective over the batch, evaluated before this iteration's step.
    pub loss: f64,
    /// Accuracy or AP over the batch frames.
    pub metric: f64,
    pub step_size: f64,
    /// `max |T - T_i|` after this iteration's step.
    pub max_deviation: f64,
    pub within_budget: bool,
    /// Whether the step size was halved at this iteration.
    pub halved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackState {
    pub current: Texture,
    pub initial: Texture,
    /// Texture before the last step; `None` when there is no momentum history.
    pub previous: Option<Texture>,
    pub iteration: usize,
    pub step_size: f64,
    pub best_loss: f64,
    pub best: Texture,
    pub log: Vec<IterationLog>,
}

impl AttackState {
    pub fn new(initial: Texture, config: &AttackConfig) -> Self {
        AttackState {
            current: initial.clone(),
            best: initial.clone(),
            initial,
            previous: None,
            iteration: 0,
            step_size: config.step_size,
            best_loss: f64::INFINITY,
            log: Vec::new(),
        }
    }

    /// Records `texture` as best only if `loss` is strictly lower.
    pub fn record(&mut self, loss: f64, texture: &Texture) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best = texture.clone();
            true
        } else {
            false
        }
    }

    pub fn max_deviation(&self) -> f64 {
        max_deviation(&self.current, &self.initial)
    }
}

pub fn max_deviation(a: &Texture, b: &Texture) -> f64 {
    a.texels
        .iter()
        .zip(&b.texels)
        .flat_map(|(x, y)| (0..3).map(move |c| (f64::from(x[c]) - f64::from(y[c])).abs()))
        .fold(0.0, f64::max)
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub complete: bool,
    pub algorithm: Algorithm,
    pub task: Task,
    pub budget: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub target: Option<usize>,
    pub frames: Vec<u32>,
    pub gimbal_locked_frames: Vec<u32>,
    pub metric: String,
    pub benign: f64,
    pub adversarial: Option<f64>,
    pub benign_loss: f64,
    pub best_loss: Option<f64>,
    /// Every logged iteration satisfied the budget.
    pub budget_ok: bool,
    /// Texels outside every frame's footprints are bit-identical to the initial texture.
    pub locality_ok: Option<bool>,
    pub final_texture: Option<String>,
    pub log: Vec<IterationLog>,
}
