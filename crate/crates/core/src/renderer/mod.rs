//! Differentiable texture-to-pixel renderer.
//!
//! One primary ray per pixel, geometric face normals, Lambert plus ambient
//! shading. The only differentiable input is the object texture: the forward
//! pass keeps, per object pixel, the bilinear footprint and the shading factor,
//! and [`Rendering::backward`] transposes that linear map.

mod intersect;
mod sample;

use std::path::Path;

use thiserror::Error;

use crate::assets::{self, AssetError, Image, Mesh, PfmData, Texture};
use crate::math::{self, Vec3};
use crate::scene_io::{CameraDesc, FrameScene, SceneIoError};
use crate::transform::WorldMatrix;

pub use intersect::{intersect, intersect_triangle, HitRecord, PlacedMesh, Ray};
pub use sample::{footprint, sample_texture, sample_texture_with, Footprint};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("resolution must be positive, got {width}x{height}")]
    ZeroResolution { width: u32, height: u32 },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Scene(#[from] SceneIoError),
}

/// Pinhole camera in renderer convention: looks down local +Z, local +Y is up
/// and local +X maps to the left of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub to_world: WorldMatrix,
    pub width: usize,
    pub height: usize,
    tan_half: f64,
}

impl Camera {
    pub fn new(desc: &CameraDesc) -> Result<Self, RenderError> {
        if desc.width == 0 || desc.height == 0 {
            return Err(RenderError::ZeroResolution {
                width: desc.width,
                height: desc.height,
            });
        }
        Ok(Camera {
            to_world: desc.to_world,
            width: desc.width as usize,
            height: desc.height as usize,
            tan_half: (desc.fov_deg.to_radians() / 2.0).tan(),
        })
    }

    /// Focal length in pixels; the field of view is horizontal.
    pub fn focal(&self) -> f64 {
        self.width as f64 / 2.0 / self.tan_half
    }

    /// Ray through the center of pixel `(x, y)`, row 0 at the top.
    pub fn ray(&self, x: usize, y: usize) -> Ray {
        let (w, h) = (self.width as f64, self.height as f64);
        let ndc_x = 2.0 * (x as f64 + 0.5) / w - 1.0;
        let ndc_y = 1.0 - 2.0 * (y as f64 + 0.5) / h;
        let local = [-ndc_x * self.tan_half, ndc_y * self.tan_half * h / w, 1.0];
        Ray {
            origin: self.to_world.translation,
            direction: math::normalize(self.to_world.transform_vector(local)),
        }
    }

    /// Continuous pixel coordinates of a world point, `None` behind the camera.
    pub fn project(&self, world: Vec3) -> Option<[f64; 2]> {
        let local = self.to_world.inverse_transform_point(world);
        if local[2] <= 0.0 {
            return None;
        }
        let f = self.focal();
        Some([
            self.width as f64 / 2.0 - f * local[0] / local[2],
            self.height as f64 / 2.0 - f * local[1] / local[2],
        ])
    }
}

/// What the adjoint needs to know about one object pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingRecord {
    /// Row-major pixel index.
    pub pixel: usize,
    pub footprint: Footprint,
    /// `ambient + intensity · max(0, n·l)` per channel.
    pub shading: [f64; 3],
    /// `albedo ⊙ shading` before clamping.
    pub pre_clamp: [f64; 3],
}

/// Axis-aligned pixel box; `x1`/`y1` are exclusive edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelBox {
    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn iou(&self, other: &PixelBox) -> f64 {
        let inter = PixelBox {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        }
        .area();
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    pub fn intersects(&self, other: &PixelBox) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub image: Image,
    /// One record per object pixel, in increasing pixel order.
    pub records: Vec<ShadingRecord>,
}

impl Rendering {
    pub fn hit_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.image.width * self.image.height];
        for r in &self.records {
            mask[r.pixel] = true;
        }
        mask
    }

    /// Tight box around the object pixels, `None` if the object is not visible.
    pub fn object_box(&self) -> Option<PixelBox> {
        let w = self.image.width;
        let mut it = self.records.iter().map(|r| (r.pixel % w, r.pixel / w));
        let (x, y) = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
        for (x, y) in it {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Some(PixelBox {
            x0: x0 as f64,
            y0: y0 as f64,
            x1: x1 as f64 + 1.0,
            y1: y1 as f64 + 1.0,
        })
    }

    /// Texture-space gradient of a loss given its gradient w.r.t. the image.
    pub fn backward(&self, d_image: &[[f64; 3]], texture_dims: (usize, usize)) -> Result<TexGradient, RenderError> {
        let n = self.image.width * self.image.height;
        if d_image.len() != n {
            return Err(RenderError::DimensionMismatch {
                expected: (self.image.width, self.image.height),
                got: (d_image.len(), 1),
            });
        }
        let mut grad = TexGradient::zeros(texture_dims.0, texture_dims.1);
        for r in &self.records {
            if r.footprint.texels.iter().any(|&k| k >= grad.values.len()) {
                return Err(RenderError::DimensionMismatch {
                    expected: texture_dims,
                    got: (grad.values.len(), 1),
                });
            }
            let g = d_image[r.pixel];
            let mut local = [0.0; 3];
            for c in 0..3 {
                let v = r.pre_clamp[c];
                if (0.0..=1.0).contains(&v) {
                    local[c] = r.shading[c] * g[c];
                }
            }
            for (&k, &w) in r.footprint.texels.iter().zip(&r.footprint.weights) {
                for c in 0..3 {
                    grad.values[k][c] += w * local[c];
                }
            }
        }
        Ok(grad)
    }
}

/// Per-texel RGB gradient, laid out like [`Texture::texels`].
#[derive(Debug, Clone, PartialEq)]
pub struct TexGradient {
    pub width: usize,
    pub height: usize,
    pub values: Vec<[f64; 3]>,
}

impl TexGradient {
    pub fn zeros(width: usize, height: usize) -> Self {
        TexGradient {
            width,
            height,
            values: vec![[0.0; 3]; width * height],
        }
    }

    pub fn add_assign(&mut self, other: &TexGradient) -> Result<(), RenderError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(RenderError::DimensionMismatch {
                expected: (self.width, self.height),
                got: (other.width, other.height),
            });
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for c in 0..3 {
                a[c] += b[c];
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_pfm(&self) -> PfmData {
        PfmData {
            width: self.width,
            height: self.height,
            rgb: self.values.iter().map(|v| v.map(|c| c as f32)).collect(),
        }
    }
}

/// Renders a frame with already loaded assets.
pub fn render(scene: &FrameScene, mesh: &Mesh, texture: &Texture) -> Result<Rendering, RenderError> {
    let camera = Camera::new(&scene.camera)?;
    let placed = PlacedMesh::new(mesh, &scene.object.to_world, scene.object.scale);
    let light = &scene.light;
    let (w, h) = (camera.width, camera.height);
    let mut pixels = vec![scene.background; w * h];
    let mut records = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let ray = camera.ray(x, y);
            let Some(hit) = placed.intersect(&ray) else {
                continue;
            };
            let (albedo, fp) = sample_texture_with(texture, hit.uv, scene.object.uv_tiling, scene.object.wrap);
            let n = placed.facing_normal(hit.face, ray.direction);
            let cos = math::dot(n, light.direction).max(0.0);
            let shading: [f64; 3] = [0, 1, 2].map(|c| light.ambient[c] + light.intensity[c] * cos);
            let pre_clamp: [f64; 3] = [0, 1, 2].map(|c| albedo[c] * shading[c]);
            let pixel = y * w + x;
            pixels[pixel] = pre_clamp.map(|v| v.clamp(0.0, 1.0));
            records.push(ShadingRecord {
                pixel,
                footprint: fp,
                shading,
                pre_clamp,
            });
        }
    }
    Ok(Rendering {
        image: Image {
            width: w,
            height: h,
            pixels,
        },
        records,
    })
}

/// Loads the mesh and texture a frame refers to, relative to `root`.
///
/// The texture's wrap mode is overridden by the frame's.
pub fn load_assets(root: &Path, scene: &FrameScene) -> Result<(Mesh, Texture), RenderError> {
    let mesh_path = root.join(&scene.object.mesh_path);
    let text = std::fs::read_to_string(&mesh_path).map_err(|source| AssetError::Io {
        path: mesh_path.clone(),
        source,
    })?;
    let mesh = assets::parse_obj(&text)?;
    let mut texture = assets::load_texture(&root.join(&scene.object.texture_path))?;
    texture.wrap = scene.object.wrap;
    Ok((mesh, texture))
}
