//! Keyframed scene sequences in the source (simulation) convention.
//!
//! A [`SceneSequence`] holds one camera track, one designated adversarial mesh
//! object and any number of light tracks. Poses between keyframes are obtained
//! with [`ActorTrack::interpolate`]: positions are linear, Euler angles are
//! interpolated per component along the shortest arc.

mod format;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::Vec3;

pub use format::{parse_sequence, serialize_sequence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SequenceError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invariant violated for `{actor}`: {invariant}")]
    Invariant { actor: String, invariant: String },
    #[error("duplicate camera track `{0}`")]
    DuplicateCamera(String),
    #[error("frame {frame} is outside the keyframe span [{first}, {last}] of `{actor}`")]
    OutsideSpan {
        actor: String,
        frame: u32,
        first: u32,
        last: u32,
    },
}

impl SequenceError {
    fn invariant(actor: impl Into<String>, invariant: impl Into<String>) -> Self {
        SequenceError::Invariant {
            actor: actor.into(),
            invariant: invariant.into(),
        }
    }
}

/// Maps an angle in degrees onto `[-180, 180)`.
pub fn normalize_degrees(angle: f64) -> f64 {
    let wrapped = angle - 360.0 * ((angle + 180.0) / 360.0).floor();
    // floating point can land exactly on the open end
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Euler triple in degrees: roll about X, pitch about Y, yaw about Z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Euler {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Euler {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Euler { roll, pitch, yaw }
    }

    fn normalized(self) -> Self {
        Euler {
            roll: normalize_degrees(self.roll),
            pitch: normalize_degrees(self.pitch),
            yaw: normalize_degrees(self.yaw),
        }
    }

    fn is_finite(&self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite() && self.yaw.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: Euler,
}

impl Pose {
    /// Validates finiteness and normalizes the angles onto `[-180, 180)`.
    pub fn new(position: Vec3, rotation: Euler) -> Result<Self, SequenceError> {
        if !position.iter().all(|v| v.is_finite()) || !rotation.is_finite() {
            return Err(SequenceError::invariant(
                "<pose>",
                "all pose components must be finite",
            ));
        }
        Ok(Pose {
            position,
            rotation: rotation.normalized(),
        })
    }

    pub fn at(position: Vec3) -> Self {
        Pose {
            position,
            rotation: Euler::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keyframe {
    pub frame: u32,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Camera,
    MeshObject,
    Light,
}

impl ActorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActorKind::Camera => "camera",
            ActorKind::MeshObject => "mesh_object",
            ActorKind::Light => "light",
        }
    }
}

impl fmt::Display for ActorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorTrack {
    pub name: String,
    pub kind: ActorKind,
    pub keyframes: Vec<Keyframe>,
    pub asset_ref: Option<String>,
}

impl ActorTrack {
    pub fn new(
        name: impl Into<String>,
        kind: ActorKind,
        keyframes: Vec<Keyframe>,
        asset_ref: Option<String>,
    ) -> Result<Self, SequenceError> {
        let track = ActorTrack {
            name: name.into(),
            kind,
            keyframes,
            asset_ref,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        if self.keyframes.is_empty() {
            return Err(SequenceError::invariant(
                &self.name,
                "track needs at least one keyframe",
            ));
        }
        if self
            .keyframes
            .windows(2)
            .any(|w| w[1].frame <= w[0].frame)
        {
            return Err(SequenceError::invariant(
                &self.name,
                "keyframe indices must be strictly increasing",
            ));
        }
        if self.kind == ActorKind::MeshObject && self.asset_ref.is_none() {
            return Err(SequenceError::invariant(
                &self.name,
                "mesh_object track requires a mesh path",
            ));
        }
        Ok(())
    }

    pub fn first_frame(&self) -> u32 {
        self.keyframes[0].frame
    }

    pub fn last_frame(&self) -> u32 {
        self.keyframes[self.keyframes.len() - 1].frame
    }

    /// Pose at `frame`; exact at keyframes, linear in between.
    pub fn interpolate(&self, frame: u32) -> Result<Pose, SequenceError> {
        let (first, last) = (self.first_frame(), self.last_frame());
        if frame < first || frame > last {
            return Err(SequenceError::OutsideSpan {
                actor: self.name.clone(),
                frame,
                first,
                last,
            });
        }
        let idx = match self.keyframes.binary_search_by_key(&frame, |k| k.frame) {
            Ok(i) => return Ok(self.keyframes[i].pose),
            Err(i) => i,
        };
        let (a, b) = (&self.keyframes[idx - 1], &self.keyframes[idx]);
        let t = f64::from(frame - a.frame) / f64::from(b.frame - a.frame);
        Ok(lerp_pose(&a.pose, &b.pose, t))
    }

    /// Like [`ActorTrack::interpolate`], but holds the first/last keyframe outside the span.
    pub fn sample(&self, frame: u32) -> Pose {
        let clamped = frame.clamp(self.first_frame(), self.last_frame());
        self.interpolate(clamped).expect("clamped frame lies within the span")
    }
}

/// Linear interpolation of positions and shortest-arc interpolation of each Euler angle.
pub fn lerp_pose(a: &Pose, b: &Pose, t: f64) -> Pose {
    let lerp = |x: f64, y: f64| x + t * (y - x);
    let arc = |x: f64, y: f64| normalize_degrees(x + t * normalize_degrees(y - x));
    Pose {
        position: [
            lerp(a.position[0], b.position[0]),
            lerp(a.position[1], b.position[1]),
            lerp(a.position[2], b.position[2]),
        ],
        rotation: Euler {
            roll: arc(a.rotation.roll, b.rotation.roll),
            pitch: arc(a.rotation.pitch, b.rotation.pitch),
            yaw: arc(a.rotation.yaw, b.rotation.yaw),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Handedness {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A coordinate axis with a sign, written `+y`, `-x`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedAxis {
    pub axis: Axis,
    pub negative: bool,
}

impl SignedAxis {
    pub const fn positive(axis: Axis) -> Self {
        SignedAxis {
            axis,
            negative: false,
        }
    }

    pub fn unit(&self) -> Vec3 {
        let s = if self.negative { -1.0 } else { 1.0 };
        match self.axis {
            Axis::X => [s, 0.0, 0.0],
            Axis::Y => [0.0, s, 0.0],
            Axis::Z => [0.0, 0.0, s],
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        let (negative, rest) = match text.as_bytes().first()? {
            b'+' => (false, &text[1..]),
            b'-' => (true, &text[1..]),
            _ => (false, text),
        };
        let axis = match rest {
            "x" | "X" => Axis::X,
            "y" | "Y" => Axis::Y,
            "z" | "Z" => Axis::Z,
            _ => return None,
        };
        Some(SignedAxis { axis, negative })
    }
}

impl fmt::Display for SignedAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.negative { '-' } else { '+' };
        let axis = match self.axis {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        };
        write!(f, "{sign}{axis}")
    }
}

/// Declares how positions and rotations of a sequence are to be read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConvention {
    pub handedness: Handedness,
    pub up: SignedAxis,
    pub camera_forward: SignedAxis,
    pub unit: String,
}

impl Default for FrameConvention {
    /// Left-handed, Z up, cameras facing +Y, meters.
    fn default() -> Self {
        FrameConvention {
            handedness: Handedness::Left,
            up: SignedAxis::positive(Axis::Z),
            camera_forward: SignedAxis::positive(Axis::Y),
            unit: "m".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSequence {
    pub frame_start: u32,
    pub frame_end: u32,
    pub tracks: Vec<ActorTrack>,
    /// Name of the track whose texture is optimized.
    pub adversarial: String,
    pub camera_fov_deg: f64,
    pub resolution: (u32, u32),
    pub source_convention: FrameConvention,
}

impl SceneSequence {
    pub fn validate(&self) -> Result<(), SequenceError> {
        const SEQ: &str = "<sequence>";
        if self.frame_start > self.frame_end {
            return Err(SequenceError::invariant(SEQ, "frame_start must not exceed frame_end"));
        }
        if !(self.camera_fov_deg > 0.0 && self.camera_fov_deg < 180.0) {
            return Err(SequenceError::invariant(SEQ, "camera fov must lie in (0, 180) degrees"));
        }
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            return Err(SequenceError::invariant(SEQ, "resolution must be positive"));
        }
        for (i, track) in self.tracks.iter().enumerate() {
            track.validate()?;
            if self.tracks[..i].iter().any(|t| t.name == track.name) {
                return Err(SequenceError::invariant(&track.name, "duplicate track name"));
            }
        }
        let mut cameras = self.tracks.iter().filter(|t| t.kind == ActorKind::Camera);
        if cameras.next().is_none() {
            return Err(SequenceError::invariant(SEQ, "exactly one camera track is required"));
        }
        if let Some(dup) = cameras.next() {
            return Err(SequenceError::DuplicateCamera(dup.name.clone()));
        }
        match self.tracks.iter().find(|t| t.name == self.adversarial) {
            Some(t) if t.kind == ActorKind::MeshObject => {}
            Some(t) => {
                return Err(SequenceError::invariant(
                    &t.name,
                    "the adversarial object must be a mesh_object track",
                ))
            }
            None => {
                return Err(SequenceError::invariant(
                    &self.adversarial,
                    "adversarial object names no track",
                ))
            }
        }
        Ok(())
    }

    pub fn camera(&self) -> &ActorTrack {
        self.tracks
            .iter()
            .find(|t| t.kind == ActorKind::Camera)
            .expect("validated sequence has a camera")
    }

    pub fn adversarial_object(&self) -> &ActorTrack {
        self.tracks
            .iter()
            .find(|t| t.name == self.adversarial)
            .expect("validated sequence has an adversarial object")
    }

    pub fn lights(&self) -> impl Iterator<Item = &ActorTrack> {
        self.tracks.iter().filter(|t| t.kind == ActorKind::Light)
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<u32> {
        self.frame_start..=self.frame_end
    }

    pub fn frame_count(&self) -> usize {
        (self.frame_end - self.frame_start) as usize + 1
    }
}

/// Directional light with an ambient term. `direction` points toward the light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightSpec {
    pub direction: Vec3,
    pub intensity: Vec3,
    pub ambient: Vec3,
}

impl LightSpec {
    pub fn new(direction: Vec3, intensity: Vec3, ambient: Vec3) -> Result<Self, SequenceError> {
        let light = LightSpec {
            direction,
            intensity,
            ambient,
        };
        light.validate()?;
        Ok(light)
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        let len = crate::math::norm(self.direction);
        if !((len - 1.0).abs() <= 1e-9) {
            return Err(SequenceError::invariant("<light>", "direction must be a unit vector"));
        }
        let non_negative = |c: &Vec3| c.iter().all(|v| v.is_finite() && *v >= 0.0);
        if !non_negative(&self.intensity) || !non_negative(&self.ambient) {
            return Err(SequenceError::invariant(
                "<light>",
                "intensity and ambient must be non-negative",
            ));
        }
        Ok(())
    }
}

impl Default for LightSpec {
    fn default() -> Self {
        LightSpec {
            direction: [0.0, 0.0, -1.0],
            intensity: [0.7; 3],
            ambient: [0.3; 3],
        }
    }
}
