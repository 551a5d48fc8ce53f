//! Workdir layout and `init`.
//!
//! ```text
//! <workdir>/
//!   manifest.json          inputs, hashes, resolved config (the only timestamp)
//!   config.resolved        resolved config pointing at the copies below
//!   sequence.seq           copy of the sequence, mesh reference rewritten
//!   meshes/<name>.obj      adversarial mesh
//!   textures/initial.pfm   benign texture T_i
//!   textures/white.pfm     plain white texture of the same size
//!   frames/frame_%04d.xml  per-frame scenes
//!   verify/                verify-white renders and report.json
//!   models/<task>.advm     fitted victims
//!   runs/<algo>_<task>_eps<budget>/   one attack run per sweep budget
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use advtex_core::assets::{self, parse_obj, Mesh, Texture};
use advtex_core::scene_io::{build_frames, emit_xml, frame_file_name, gimbal_report, parse_xml, BuildOptions, FrameScene};
use advtex_core::scene_model::{parse_sequence, serialize_sequence, ActorKind, SceneSequence};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{io, CliError};

pub const WORKDIR_ENV: &str = "ADVTEX_WORKDIR";
pub const RESOLVED_CONFIG: &str = "config.resolved";
pub const MANIFEST: &str = "manifest.json";
pub const SEQUENCE: &str = "sequence.seq";
pub const INITIAL_TEXTURE: &str = "textures/initial.pfm";

/// Keys fixed by `init`; changing them needs a fresh `init`.
pub const SCENE_KEYS: &[&str] = &[
    "sequence",
    "texture",
    "unit_scale",
    "light_direction",
    "light_intensity",
    "light_ambient",
    "background",
    "uv_tiling",
    "wrap",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_path: String,
    pub workdir: String,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<InputHash>,
    /// Seconds since the Unix epoch when `init` ran.
    pub created_unix: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| io(path, e))
}

pub(crate) fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io(path, e))
}

pub(crate) fn asset_err(e: assets::AssetError) -> CliError {
    CliError::Invariant(e.to_string())
}

pub struct InitSummary {
    pub frames: usize,
    pub warnings: Vec<String>,
}

/// Transpiles the configured sequence into `workdir`.
pub fn init(config_path: &Path, overrides: &[String], workdir: &Path) -> Result<InitSummary, CliError> {
    let config = Config::load(config_path, overrides)?;
    let seq_bytes = read(&config.sequence)?;
    let seq_text = String::from_utf8(seq_bytes.clone())
        .map_err(|_| CliError::Parse(format!("{}: not UTF-8", config.sequence.display())))?;
    let mut seq = parse_sequence(&seq_text).map_err(|e| CliError::Parse(format!("{}: {e}", config.sequence.display())))?;
    let seq_dir = config.sequence.parent().map(Path::to_path_buf).unwrap_or_default();

    for track in seq.tracks.iter().filter(|t| t.kind == ActorKind::MeshObject) {
        let missing = match &track.asset_ref {
            None => true,
            Some(r) => !seq_dir.join(r).is_file(),
        };
        if missing {
            return Err(CliError::Invariant(format!(
                "mesh for actor `{}` not found: {}",
                track.name,
                track.asset_ref.as_deref().unwrap_or("<no path>")
            )));
        }
    }
    let object = seq.adversarial_object().clone();
    let mesh_src = seq_dir.join(object.asset_ref.as_deref().unwrap_or_default());
    let mesh_bytes = read(&mesh_src)?;
    let mesh_text = String::from_utf8(mesh_bytes.clone())
        .map_err(|_| CliError::Parse(format!("{}: not UTF-8", mesh_src.display())))?;
    parse_obj(&mesh_text).map_err(|e| CliError::Parse(format!("{}: {e}", mesh_src.display())))?;
    let mesh_name = mesh_src
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mesh.obj".into());
    let mesh_rel = format!("meshes/{mesh_name}");

    let texture_bytes = read(&config.texture)?;
    let texture = assets::load_texture(&config.texture).map_err(|e| match e {
        assets::AssetError::Io { .. } => asset_err(e),
        other => CliError::Parse(format!("{}: {other}", config.texture.display())),
    })?;

    for track in seq.tracks.iter_mut() {
        if track.name == object.name && track.kind == ActorKind::MeshObject {
            track.asset_ref = Some(mesh_rel.clone());
        }
    }
    let mut options = BuildOptions::new(config.unit_scale, config.light, INITIAL_TEXTURE);
    options.uv_tiling = config.uv_tiling;
    options.wrap = config.wrap;
    options.background = config.background;
    let frames = build_frames(&seq, &options).map_err(|e| CliError::Invariant(e.to_string()))?;

    let frames_dir = workdir.join("frames");
    if frames_dir.exists() {
        fs::remove_dir_all(&frames_dir).map_err(|e| io(&frames_dir, e))?;
    }
    write(&workdir.join(SEQUENCE), serialize_sequence(&seq))?;
    write(&workdir.join(&mesh_rel), &mesh_bytes)?;
    let tex_path = workdir.join(INITIAL_TEXTURE);
    write(&tex_path, [])?;
    assets::save_texture(&texture, &tex_path).map_err(asset_err)?;
    let white = Texture::filled(texture.width, texture.height, [1.0; 3]);
    assets::save_texture(&white, &workdir.join(advtex_core::scene_io::WHITE_TEXTURE)).map_err(asset_err)?;
    for fs in &frames {
        write(&frames_dir.join(frame_file_name(fs.frame)), emit_xml(fs))?;
    }

    let mut resolved = config.entries.clone();
    resolved.insert("sequence".into(), SEQUENCE.into());
    resolved.insert("texture".into(), INITIAL_TEXTURE.into());
    let workdir_config = Config::from_entries(resolved, workdir)?;
    write(&workdir.join(RESOLVED_CONFIG), workdir_config.to_text())?;

    let manifest = RunManifest {
        tool: "advtex".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_path: config_path.display().to_string(),
        workdir: workdir.display().to_string(),
        config: config.entries.clone(),
        inputs: vec![
            InputHash {
                role: "sequence".into(),
                path: config.sequence.display().to_string(),
                sha256: sha256_hex(&seq_bytes),
            },
            InputHash {
                role: "mesh".into(),
                path: mesh_src.display().to_string(),
                sha256: sha256_hex(&mesh_bytes),
            },
            InputHash {
                role: "texture".into(),
                path: config.texture.display().to_string(),
                sha256: sha256_hex(&texture_bytes),
            },
        ],
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write(
        &workdir.join(MANIFEST),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;

    let warnings = gimbal_report(&seq).iter().map(ToString::to_string).collect();
    Ok(InitSummary {
        frames: frames.len(),
        warnings,
    })
}

/// An initialized workdir with its scene loaded.
pub struct Workdir {
    pub root: PathBuf,
    pub config: Config,
    pub sequence: SceneSequence,
    pub frames: Vec<FrameScene>,
}

impl Workdir {
    /// Opens `root`, applying `overrides` to the resolved config.
    pub fn open(root: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let config_path = root.join(RESOLVED_CONFIG);
        if !config_path.is_file() || !root.join("frames").is_dir() {
            return Err(CliError::Invariant(format!(
                "{} is not an initialized workdir: run init first",
                root.display()
            )));
        }
        for o in overrides {
            let key = o.split_once('=').map_or(o.as_str(), |(k, _)| k.trim());
            if SCENE_KEYS.contains(&key) {
                return Err(CliError::Invariant(format!(
                    "`{key}` is fixed by init; rerun init to change it"
                )));
            }
        }
        let config = Config::load(&config_path, overrides)?;
        let text = fs::read_to_string(&config.sequence).map_err(|e| io(&config.sequence, e))?;
        let sequence = parse_sequence(&text).map_err(|e| CliError::Parse(format!("{}: {e}", config.sequence.display())))?;
        let frames = load_frames(&root.join("frames"))?;
        if frames.is_empty() {
            return Err(CliError::Invariant(format!(
                "{} has no frames: run init first",
                root.display()
            )));
        }
        Ok(Workdir {
            root: root.to_path_buf(),
            config,
            sequence,
            frames,
        })
    }

    pub fn mesh(&self) -> Result<Mesh, CliError> {
        let path = self.root.join(&self.frames[0].object.mesh_path);
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        parse_obj(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn texture(&self, rel: &str) -> Result<Texture, CliError> {
        let mut texture = assets::load_texture(&self.root.join(rel)).map_err(asset_err)?;
        texture.wrap = self.config.wrap;
        Ok(texture)
    }

    pub fn initial_texture(&self) -> Result<Texture, CliError> {
        self.texture(INITIAL_TEXTURE)
    }

    pub fn gimbal_locked_frames(&self) -> Vec<u32> {
        let mut frames: Vec<u32> = gimbal_report(&self.sequence).iter().map(|g| g.frame).collect();
        frames.dedup();
        frames
    }
}

/// Parses every `frame_*.xml` in `dir`, sorted by frame number.
pub fn load_frames(dir: &Path) -> Result<Vec<FrameScene>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".xml"))
        })
        .collect();
    paths.sort();
    let mut frames = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| io(p, e))?;
            parse_xml(&text).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    frames.sort_by_key(|f| f.frame);
    Ok(frames)
}
