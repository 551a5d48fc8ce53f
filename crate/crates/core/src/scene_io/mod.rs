//! Per-frame scene descriptions in renderer convention and their XML form.

mod xml;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::WrapMode;
use crate::scene_model::{ActorKind, LightSpec, SceneSequence, SequenceError};
use crate::transform::{detect_gimbal_lock, GimbalLock, SourceFrame, TransformError, WorldMatrix};

pub use xml::{emit_xml, parse_xml, XML_VERSION};

/// Scene-root relative path of the generated all-ones texture.
pub const WHITE_TEXTURE: &str = "textures/white.pfm";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneIoError {
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("scene schema violation: {0}")]
    Schema(String),
    #[error("invalid frame scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraDesc {
    pub to_world: WorldMatrix,
    /// Horizontal field of view.
    pub fov_deg: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDesc {
    pub mesh_path: String,
    pub to_world: WorldMatrix,
    /// Uniform scale applied to mesh vertices before `to_world` (source units to target units).
    pub scale: f64,
    pub texture_path: String,
    pub uv_tiling: f64,
    pub wrap: WrapMode,
}

/// Fully resolved frame: everything the renderer needs besides the asset bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScene {
    pub frame: u32,
    pub camera: CameraDesc,
    pub object: ObjectDesc,
    pub light: LightSpec,
    pub background: [f64; 3],
}

impl FrameScene {
    pub fn validate(&self) -> Result<(), SceneIoError> {
        let bad = |m: &str| Err(SceneIoError::Invalid(m.to_string()));
        if !(self.camera.fov_deg > 0.0 && self.camera.fov_deg < 180.0) {
            return bad("camera fov must lie in (0, 180)");
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            return bad("resolution must be positive");
        }
        if !(self.object.uv_tiling >= 1.0 && self.object.uv_tiling.is_finite()) {
            return bad("uv_tiling must be at least 1");
        }
        if !(self.object.scale > 0.0 && self.object.scale.is_finite()) {
            return bad("object scale must be positive");
        }
        if self.object.mesh_path.is_empty() || self.object.texture_path.is_empty() {
            return bad("asset paths must be non-empty");
        }
        if !self.background.iter().all(|c| c.is_finite() && *c >= 0.0) {
            return bad("background must be non-negative");
        }
        self.light.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub unit_scale: f64,
    pub light: LightSpec,
    pub texture_path: String,
    /// Overrides the adversarial track's mesh reference.
    pub mesh_path: Option<String>,
    pub uv_tiling: f64,
    pub wrap: WrapMode,
    pub background: [f64; 3],
}

impl BuildOptions {
    pub fn new(unit_scale: f64, light: LightSpec, texture_path: impl Into<String>) -> Self {
        BuildOptions {
            unit_scale,
            light,
            texture_path: texture_path.into(),
            mesh_path: None,
            uv_tiling: 1.0,
            wrap: WrapMode::Repeat,
            background: [0.5; 3],
        }
    }
}

/// One [`FrameScene`] per frame of the sequence.
///
/// Tracks hold their first/last keyframe outside their keyframe span.
/// When the sequence carries a light track, its orientation sets the light
/// direction per frame; otherwise `options.light.direction` is used as is.
pub fn build_frames(seq: &SceneSequence, options: &BuildOptions) -> Result<Vec<FrameScene>, SceneIoError> {
    seq.validate()?;
    let source = SourceFrame::new(&seq.source_convention)?;
    let camera = seq.camera();
    let object = seq.adversarial_object();
    let light_track = seq.lights().next();
    let mesh_path = options
        .mesh_path
        .clone()
        .or_else(|| object.asset_ref.clone())
        .unwrap_or_default();
    seq.frames()
        .map(|frame| {
            let cam_pose = camera.sample(frame);
            let obj_pose = object.sample(frame);
            let mut light = options.light;
            if let Some(track) = light_track {
                light.direction = source.light_direction(&track.sample(frame));
            }
            let scene = FrameScene {
                frame,
                camera: CameraDesc {
                    to_world: source.camera_to_world(&cam_pose, options.unit_scale)?,
                    fov_deg: seq.camera_fov_deg,
                    width: seq.resolution.0,
                    height: seq.resolution.1,
                },
                object: ObjectDesc {
                    mesh_path: mesh_path.clone(),
                    to_world: source.convert_pose(&obj_pose, options.unit_scale, ActorKind::MeshObject)?,
                    scale: options.unit_scale,
                    texture_path: options.texture_path.clone(),
                    uv_tiling: options.uv_tiling,
                    wrap: options.wrap,
                },
                light,
                background: options.background,
            };
            scene.validate()?;
            Ok(scene)
        })
        .collect()
}

/// Every (actor, frame) whose interpolated pitch sits on ±90 degrees.
pub fn gimbal_report(seq: &SceneSequence) -> Vec<GimbalLock> {
    let mut out = Vec::new();
    for frame in seq.frames() {
        for track in &seq.tracks {
            if let Some(lock) = detect_gimbal_lock(&track.name, frame, &track.sample(frame)) {
                out.push(lock);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TextureSource {
    White,
    Path(String),
}

/// Points the object at another texture; `White` selects [`WHITE_TEXTURE`].
pub fn swap_texture(scene: &FrameScene, source: &TextureSource) -> FrameScene {
    let mut out = scene.clone();
    out.object.texture_path = match source {
        TextureSource::White => WHITE_TEXTURE.to_string(),
        TextureSource::Path(p) => p.clone(),
    };
    out
}

pub fn frame_file_name(frame: u32) -> String {
    format!("frame_{frame:04}.xml")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_model::parse_sequence;

    pub(crate) const MOVING: &str = "\
advtex-sequence 1
frames 0 20
fov 60
resolution 32 32
adversarial box
track camera cam
key 0 0 -6 0 0 0 0
track mesh_object box box.obj
key 0 -1 0 0 0 0 0
key 20 1 0 0 0 0 0
";

    fn options() -> BuildOptions {
        BuildOptions::new(100.0, LightSpec::default(), "textures/init.pfm")
    }

    #[test]
    fn one_scene_per_frame() {
        let seq = parse_sequence(MOVING).unwrap();
        let frames = build_frames(&seq, &options()).unwrap();
        assert_eq!(frames.len(), 21);
        assert_eq!(frames.iter().map(|f| f.frame).collect::<Vec<_>>(), (0..=20).collect::<Vec<_>>());
        assert_eq!(frames[0].object.mesh_path, "box.obj");
    }

    #[test]
    fn static_scene_gives_identical_matrices() {
        let text = MOVING.replace("key 20 1 0 0 0 0 0\n", "");
        let seq = parse_sequence(&text.replace("frames 0 20", "frames 0 0")).unwrap();
        let seq = SceneSequence {
            frame_end: 20,
            tracks: seq
                .tracks
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    let mut last = t.keyframes[0];
                    last.frame = 20;
                    t.keyframes.push(last);
                    t
                })
                .collect(),
            ..seq
        };
        let frames = build_frames(&seq, &options()).unwrap();
        assert_eq!(frames.len(), 21);
        assert!(frames.iter().all(|f| f.camera.to_world == frames[0].camera.to_world
            && f.object.to_world == frames[0].object.to_world));
    }

    #[test]
    fn moving_object_projects_monotonically() {
        let seq = parse_sequence(MOVING).unwrap();
        let frames = build_frames(&seq, &options()).unwrap();
        let source = SourceFrame::default();
        let cam = seq.camera().interpolate(0).unwrap();
        // +X in the source frame is image-left for a camera facing +Y
        let mut last = f64::INFINITY;
        for f in &frames {
            // renderer side: camera-local coordinates of the object origin
            let local = f.camera.to_world.inverse_transform_point(f.object.to_world.translation);
            let focal = 16.0 / (30.0f64).to_radians().tan();
            let x = 16.0 - focal * local[0] / local[2];
            let pos = seq.adversarial_object().interpolate(f.frame).unwrap().position;
            let analytic = source.project(&cam, 60.0, (32, 32), pos).unwrap();
            assert!((x - analytic[0]).abs() < 1e-9);
            assert!(x < last);
            last = x;
        }
    }

    #[test]
    fn light_track_sets_direction() {
        let text = format!("{MOVING}track light sun\nkey 0 0 0 0 0 0 90\n");
        let seq = parse_sequence(&text).unwrap();
        let frames = build_frames(&seq, &options()).unwrap();
        // yaw 90 turns the +Y forward axis onto -X; the light direction is -forward
        let d = frames[0].light.direction;
        assert!((d[0] - 1.0).abs() < 1e-12 && d[1].abs() < 1e-12 && d[2].abs() < 1e-12, "{d:?}");
    }

    #[test]
    fn gimbal_frames_reported() {
        let text = MOVING.replace("key 0 0 -6 0 0 0 0", "key 0 0 -6 0 0 90 0\nkey 20 0 -6 0 0 0 0");
        let seq = parse_sequence(&text).unwrap();
        let report = gimbal_report(&seq);
        assert_eq!(report.len(), 1);
        assert_eq!((report[0].actor.as_str(), report[0].frame), ("cam", 0));
    }

    #[test]
    fn swap_texture_modes() {
        let seq = parse_sequence(MOVING).unwrap();
        let scene = build_frames(&seq, &options()).unwrap().remove(0);
        let white = swap_texture(&scene, &TextureSource::White);
        assert_eq!(white.object.texture_path, WHITE_TEXTURE);
        assert_eq!(swap_texture(&white, &TextureSource::White), white);
        let p = swap_texture(&scene, &TextureSource::Path("textures/iter_0003.pfm".into()));
        assert!(emit_xml(&p).contains("value=\"textures/iter_0003.pfm\""));
        assert_eq!(parse_xml(&emit_xml(&p)).unwrap().object.texture_path, "textures/iter_0003.pfm");
    }

    #[test]
    fn frame_names() {
        assert_eq!(frame_file_name(7), "frame_0007.xml");
    }
}
