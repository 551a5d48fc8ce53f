//! Transpiles keyframed scenes into per-frame renderer scenes, renders them with
//! a small ray tracer that has an exact texture adjoint, and optimizes an
//! adversarial texture against in-repo victim models.
//!
//! The pipeline, module by module:
//!
//! * [`scene_model`]: keyframed sequences in the source convention
//! * [`transform`]: source to renderer coordinate conversion
//! * [`assets`]: OBJ meshes, PPM/PFM images and textures
//! * [`scene_io`]: per-frame scenes and their XML form
//! * [`renderer`]: forward rendering and the texture adjoint
//! * [`victim`]: differentiable classifier and grid detector, metrics
//! * [`attack`]: PGD and Auto-PGD over rendered frames

pub mod assets;
pub mod attack;
pub mod math;
pub mod renderer;
pub mod scene_io;
pub mod scene_model;
pub mod transform;
pub mod victim;

pub use assets::{Image, Mesh, Texture, WrapMode};
pub use scene_io::FrameScene;
pub use scene_model::{LightSpec, Pose, SceneSequence};
pub use transform::{RotationMatrix, WorldMatrix};
