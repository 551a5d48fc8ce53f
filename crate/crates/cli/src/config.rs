//! Flat run configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! line    = blank | comment | entry
//! comment = "#" any*
//! entry   = key ws* "=" ws* value [ws* comment]
//! key     = [a-z0-9_]+
//! ```
//!
//! Vectors are whitespace-separated numbers; `budgets` is a sweep list.
//! Every key can be overridden on the command line with `--set key=value`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use advtex_core::assets::WrapMode;
use advtex_core::attack::{Algorithm, AttackConfig, AutoPgdParams, Task};
use advtex_core::scene_model::LightSpec;
use advtex_core::victim::{ClassifierConfig, DetectorConfig};

use crate::error::CliError;

/// Every accepted key with its default (`None` marks a required key).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("sequence", None),
    ("texture", None),
    ("unit_scale", Some("100")),
    ("light_direction", Some("0 0 -1")),
    ("light_intensity", Some("0.7 0.7 0.7")),
    ("light_ambient", Some("0.3 0.3 0.3")),
    ("background", Some("0.5 0.5 0.5")),
    ("uv_tiling", Some("1")),
    ("wrap", Some("repeat")),
    ("task", Some("classification")),
    ("algorithm", Some("pgd")),
    ("iterations", Some("100")),
    ("step_size", Some("0.02")),
    ("budgets", Some("1.0")),
    ("target", Some("none")),
    ("true_label", Some("1")),
    ("batch", Some("0")),
    ("seed", Some("0")),
    ("apgd_momentum", Some("0.75")),
    ("apgd_first_checkpoint", Some("0.22")),
    ("apgd_checkpoint_decay", Some("0.03")),
    ("apgd_min_checkpoint_gap", Some("0.06")),
    ("apgd_improvement_ratio", Some("0.75")),
    ("classifier_downsample", Some("8")),
    ("classifier_iterations", Some("2000")),
    ("classifier_learning_rate", Some("0.5")),
    ("detector_grid", Some("7")),
    ("detector_threshold", Some("0.5")),
    ("detector_iou", Some("0.5")),
    ("detector_coverage", Some("0.5")),
    ("detector_iterations", Some("3000")),
    ("detector_learning_rate", Some("2.0")),
    ("victim_seed", Some("0")),
    ("jobs", Some("0")),
    ("save_renders", Some("false")),
    ("skip_verify", Some("false")),
];

/// Parses config text into raw entries, rejecting unknown and repeated keys.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(CliError::Parse(format!("config line {line}: expected `key = value`")));
        };
        let key = key.trim();
        check_key(key).map_err(|m| CliError::Parse(format!("config line {line}: {m}")))?;
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(CliError::Parse(format!("config line {line}: duplicate key `{key}`")));
        }
    }
    Ok(out)
}

fn check_key(key: &str) -> Result<(), String> {
    if KEYS.iter().any(|(k, _)| *k == key) || key == "budget" {
        Ok(())
    } else {
        Err(format!("unknown key `{key}`"))
    }
}

/// Applies `key=value` overrides.
pub fn apply_overrides(entries: &mut BTreeMap<String, String>, overrides: &[String]) -> Result<(), CliError> {
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            return Err(CliError::Parse(format!("override `{o}` must be key=value")));
        };
        let k = k.trim();
        check_key(k).map_err(CliError::Parse)?;
        entries.insert(k.to_string(), v.trim().to_string());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
    pub sequence: PathBuf,
    pub texture: PathBuf,
    pub unit_scale: f64,
    pub light: LightSpec,
    pub background: [f64; 3],
    pub uv_tiling: f64,
    pub wrap: WrapMode,
    /// Attack settings; `budget` is replaced per sweep entry.
    pub attack: AttackConfig,
    pub budgets: Vec<f64>,
    pub classifier: ClassifierConfig,
    pub detector: DetectorConfig,
    pub victim_seed: u64,
    pub jobs: usize,
    pub save_renders: bool,
    pub skip_verify: bool,
    /// Fully resolved entries, defaults included.
    pub entries: BTreeMap<String, String>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Parse(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_vec3(key: &str, value: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = value
        .split_whitespace()
        .map(|p| parse_num(key, p))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|_| CliError::Parse(format!("`{key}` needs three numbers")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Parse(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

impl Config {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invariant(format!("cannot read config {}: {e}", path.display())))?;
        let mut entries = parse_entries(&text)?;
        apply_overrides(&mut entries, overrides)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::from_entries(entries, &base)
    }

    pub fn from_entries(mut entries: BTreeMap<String, String>, base_dir: &Path) -> Result<Self, CliError> {
        if let Some(b) = entries.remove("budget") {
            entries.insert("budgets".into(), b);
        }
        for (key, default) in KEYS {
            if !entries.contains_key(*key) {
                match default {
                    Some(d) => {
                        entries.insert(key.to_string(), d.to_string());
                    }
                    None => return Err(CliError::Parse(format!("missing required key `{key}`"))),
                }
            }
        }
        let get = |k: &str| entries[k].as_str();
        let direction = parse_vec3("light_direction", get("light_direction"))?;
        let norm = direction.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(CliError::Invariant("light_direction must be nonzero".into()));
        }
        let light = LightSpec::new(
            direction.map(|c| c / norm),
            parse_vec3("light_intensity", get("light_intensity"))?,
            parse_vec3("light_ambient", get("light_ambient"))?,
        )
        .map_err(|e| CliError::Invariant(e.to_string()))?;
        let wrap = WrapMode::parse(get("wrap"))
            .ok_or_else(|| CliError::Parse(format!("`wrap`: expected repeat or clamp, got `{}`", get("wrap"))))?;
        let algorithm = Algorithm::parse(get("algorithm"))
            .ok_or_else(|| CliError::Parse(format!("`algorithm`: unknown `{}`", get("algorithm"))))?;
        let task = Task::parse(get("task"))
            .ok_or_else(|| CliError::Parse(format!("`task`: unknown `{}`", get("task"))))?;
        let target = match get("target") {
            "none" | "" => None,
            t => Some(parse_num("target", t)?),
        };
        let budgets: Vec<f64> = get("budgets")
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|b| parse_num("budgets", b))
            .collect::<Result<_, _>>()?;
        if budgets.is_empty() {
            return Err(CliError::Parse("`budgets` needs at least one value".into()));
        }
        let attack = AttackConfig {
            algorithm,
            task,
            iterations: parse_num("iterations", get("iterations"))?,
            step_size: parse_num("step_size", get("step_size"))?,
            budget: budgets[0],
            target,
            true_label: parse_num("true_label", get("true_label"))?,
            batch: parse_num("batch", get("batch"))?,
            seed: parse_num("seed", get("seed"))?,
            auto_pgd: AutoPgdParams {
                momentum: parse_num("apgd_momentum", get("apgd_momentum"))?,
                first_checkpoint: parse_num("apgd_first_checkpoint", get("apgd_first_checkpoint"))?,
                checkpoint_decay: parse_num("apgd_checkpoint_decay", get("apgd_checkpoint_decay"))?,
                min_checkpoint_gap: parse_num("apgd_min_checkpoint_gap", get("apgd_min_checkpoint_gap"))?,
                improvement_ratio: parse_num("apgd_improvement_ratio", get("apgd_improvement_ratio"))?,
            },
        };
        for &b in &budgets {
            AttackConfig { budget: b, ..attack.clone() }
                .validate()
                .map_err(|e| CliError::Invariant(e.to_string()))?;
        }
        let unit_scale: f64 = parse_num("unit_scale", get("unit_scale"))?;
        let uv_tiling: f64 = parse_num("uv_tiling", get("uv_tiling"))?;
        if !(uv_tiling >= 1.0 && uv_tiling.is_finite()) {
            return Err(CliError::Invariant("uv_tiling must be at least 1".into()));
        }
        let config = Config {
            base_dir: base_dir.to_path_buf(),
            sequence: base_dir.join(get("sequence")),
            texture: base_dir.join(get("texture")),
            unit_scale,
            light,
            background: parse_vec3("background", get("background"))?,
            uv_tiling,
            wrap,
            attack,
            budgets,
            classifier: ClassifierConfig {
                downsample: parse_num("classifier_downsample", get("classifier_downsample"))?,
                classes: 2,
                iterations: parse_num("classifier_iterations", get("classifier_iterations"))?,
                learning_rate: parse_num("classifier_learning_rate", get("classifier_learning_rate"))?,
            },
            detector: DetectorConfig {
                grid: parse_num("detector_grid", get("detector_grid"))?,
                threshold: parse_num("detector_threshold", get("detector_threshold"))?,
                iou_threshold: parse_num("detector_iou", get("detector_iou"))?,
                coverage: parse_num("detector_coverage", get("detector_coverage"))?,
                iterations: parse_num("detector_iterations", get("detector_iterations"))?,
                learning_rate: parse_num("detector_learning_rate", get("detector_learning_rate"))?,
            },
            victim_seed: parse_num("victim_seed", get("victim_seed"))?,
            jobs: parse_num("jobs", get("jobs"))?,
            save_renders: parse_bool("save_renders", get("save_renders"))?,
            skip_verify: parse_bool("skip_verify", get("skip_verify"))?,
            entries: BTreeMap::new(),
        };
        Ok(Config { entries, ..config })
    }

    /// Attack settings for one sweep budget.
    pub fn attack_for(&self, budget: f64) -> AttackConfig {
        AttackConfig {
            budget,
            ..self.attack.clone()
        }
    }

    /// Resolved entries in config syntax, sorted by key.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
