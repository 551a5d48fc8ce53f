//! White-texture alignment check.
//!
//! Each frame is rendered with a plain white texture. The rendered object
//! center is the centroid of the pixel centers whose rays hit the mesh. The
//! analytic center is the centroid of the pixel centers covered by the mesh
//! triangles projected straight from the source-frame poses with a pinhole
//! model, bypassing every matrix written to the frame XML. A frame passes
//! when the two centers are within one pixel.

use advtex_core::assets::Mesh;
use advtex_core::renderer::render;
use advtex_core::scene_io::{swap_texture, TextureSource, WHITE_TEXTURE};
use advtex_core::scene_model::SceneSequence;
use advtex_core::transform::SourceFrame;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::workdir::{asset_err, Workdir};

pub const TOLERANCE_PX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCheck {
    pub frame: u32,
    pub rendered_center: Option<[f64; 2]>,
    pub analytic_center: Option<[f64; 2]>,
    pub deviation: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub tolerance_px: f64,
    pub failed_frames: Vec<u32>,
    pub frames: Vec<FrameCheck>,
}

fn centroid(points: impl Iterator<Item = [f64; 2]>) -> Option<[f64; 2]> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for [x, y] in points {
        sx += x;
        sy += y;
        n += 1;
    }
    (n > 0).then(|| [sx / n as f64, sy / n as f64])
}

fn inside(p: [f64; 2], t: &[[f64; 2]; 3]) -> bool {
    let edge = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let d = [edge(t[0], t[1]), edge(t[1], t[2]), edge(t[2], t[0])];
    d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0)
}

/// Analytic silhouette centroid of the object at `frame`, in pixels.
///
/// `None` when a vertex lies behind the camera or no pixel center is covered.
pub fn analytic_center(seq: &SceneSequence, mesh: &Mesh, frame: u32) -> Result<Option<[f64; 2]>, CliError> {
    let source = SourceFrame::new(&seq.source_convention).map_err(|e| CliError::Invariant(e.to_string()))?;
    let camera = seq.camera().sample(frame);
    let object = seq.adversarial_object().sample(frame);
    let (w, h) = seq.resolution;
    let mut triangles = Vec::with_capacity(mesh.faces.len());
    for face in 0..mesh.faces.len() {
        let mut tri = [[0.0; 2]; 3];
        for (slot, v) in tri.iter_mut().zip(mesh.triangle(face)) {
            let p = source.object_point(&object, v);
            match source.project(&camera, seq.camera_fov_deg, seq.resolution, p) {
                Some(px) => *slot = px,
                None => return Ok(None),
            }
        }
        triangles.push(tri);
    }
    let pixels = (0..h as usize).flat_map(|y| (0..w as usize).map(move |x| [x as f64 + 0.5, y as f64 + 0.5]));
    Ok(centroid(pixels.filter(|&p| triangles.iter().any(|t| inside(p, t)))))
}

/// Renders every frame with the white texture and compares centers.
///
/// Writes `verify/frame_%04d.ppm` and `verify/report.json`.
pub fn verify_white(wd: &Workdir) -> Result<VerifyReport, CliError> {
    let mesh = wd.mesh()?;
    let mut white = wd.texture(WHITE_TEXTURE)?;
    let dir = wd.root.join("verify");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| crate::error::io(&dir, e))?;
    }
    let mut checks = Vec::with_capacity(wd.frames.len());
    for fs in &wd.frames {
        let scene = swap_texture(fs, &TextureSource::White);
        white.wrap = scene.object.wrap;
        let rendering =
            render(&scene, &mesh, &white).map_err(|e| CliError::Render(format!("frame {}: {e}", fs.frame)))?;
        let path = dir.join(format!("frame_{:04}.ppm", fs.frame));
        crate::workdir::write(&path, [])?;
        advtex_core::assets::save_image(&rendering.image, &path).map_err(asset_err)?;

        let width = rendering.image.width;
        let rendered = centroid(
            rendering
                .hit_mask()
                .iter()
                .enumerate()
                .filter(|(_, &hit)| hit)
                .map(|(i, _)| [(i % width) as f64 + 0.5, (i / width) as f64 + 0.5]),
        );
        let analytic = analytic_center(&wd.sequence, &mesh, fs.frame)?;
        let deviation = match (rendered, analytic) {
            (Some(a), Some(b)) => Some((a[0] - b[0]).hypot(a[1] - b[1])),
            _ => None,
        };
        checks.push(FrameCheck {
            frame: fs.frame,
            rendered_center: rendered,
            analytic_center: analytic,
            deviation,
            pass: deviation.is_some_and(|d| d <= TOLERANCE_PX),
        });
    }
    let failed_frames: Vec<u32> = checks.iter().filter(|c| !c.pass).map(|c| c.frame).collect();
    let report = VerifyReport {
        passed: failed_frames.is_empty(),
        tolerance_px: TOLERANCE_PX,
        failed_frames,
        frames: checks,
    };
    crate::workdir::write(
        &dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    Ok(report)
}

/// Whether a previous `verify-white` run passed.
pub fn passed(wd: &Workdir) -> bool {
    std::fs::read_to_string(wd.root.join("verify/report.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<VerifyReport>(&t).ok())
        .is_some_and(|r| r.passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_in_triangle_either_winding() {
        let t = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
        let r = [t[0], t[2], t[1]];
        for tri in [t, r] {
            assert!(inside([1.0, 1.0], &tri));
            assert!(!inside([3.0, 3.0], &tri));
        }
    }

    #[test]
    fn centroid_of_nothing_is_none() {
        assert_eq!(centroid(std::iter::empty()), None);
        assert_eq!(centroid([[1.0, 2.0], [3.0, 4.0]].into_iter()), Some([2.0, 3.0]));
    }
}
