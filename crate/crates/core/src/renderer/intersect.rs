use crate::assets::Mesh;
use crate::math::{self, Vec3};
use crate::transform::WorldMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

/// Nearest intersection along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitRecord {
    pub face: usize,
    /// Weights of the face's three corners; non-negative, summing to 1.
    pub barycentric: [f64; 3],
    pub t: f64,
    /// Interpolated mesh uv, before tiling and wrapping.
    pub uv: [f64; 2],
}

/// Mesh with vertices already in world space.
#[derive(Debug, Clone)]
pub struct PlacedMesh {
    pub triangles: Vec<[Vec3; 3]>,
    pub uvs: Vec<[[f64; 2]; 3]>,
}

impl PlacedMesh {
    /// World vertex = `to_world · (scale · v)`.
    pub fn new(mesh: &Mesh, to_world: &WorldMatrix, scale: f64) -> Self {
        let triangles = (0..mesh.faces.len())
            .map(|f| mesh.triangle(f).map(|v| to_world.transform_point(math::scale(v, scale))))
            .collect();
        let uvs = (0..mesh.faces.len()).map(|f| mesh.face_uvs(f)).collect();
        PlacedMesh { triangles, uvs }
    }

    pub fn intersect(&self, ray: &Ray) -> Option<HitRecord> {
        let mut best: Option<HitRecord> = None;
        for (face, tri) in self.triangles.iter().enumerate() {
            let Some((t, b)) = intersect_triangle(ray, tri) else {
                continue;
            };
            // strict comparison keeps the lowest face index on exact ties
            if best.is_none_or(|h| t < h.t) {
                let uv = self.uvs[face];
                best = Some(HitRecord {
                    face,
                    barycentric: b,
                    t,
                    uv: [
                        b[0] * uv[0][0] + b[1] * uv[1][0] + b[2] * uv[2][0],
                        b[0] * uv[0][1] + b[1] * uv[1][1] + b[2] * uv[2][1],
                    ],
                });
            }
        }
        best
    }

    /// Unit geometric normal of a face, flipped to face against `direction`.
    pub fn facing_normal(&self, face: usize, direction: Vec3) -> Vec3 {
        let [a, b, c] = self.triangles[face];
        let n = math::normalize(math::cross(math::sub(b, a), math::sub(c, a)));
        if math::dot(n, direction) > 0.0 {
            math::scale(n, -1.0)
        } else {
            n
        }
    }
}

/// Möller–Trumbore. Returns `(t, barycentrics)` for hits with `t > 0`.
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3]) -> Option<(f64, [f64; 3])> {
    let e1 = math::sub(tri[1], tri[0]);
    let e2 = math::sub(tri[2], tri[0]);
    let p = math::cross(ray.direction, e2);
    let det = math::dot(e1, p);
    let size = math::norm(e1) * math::norm(e2) * math::norm(ray.direction);
    if det.abs() <= 1e-12 * size {
        return None;
    }
    let inv = 1.0 / det;
    let s = math::sub(ray.origin, tri[0]);
    let u = math::dot(s, p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = math::cross(s, e1);
    let v = math::dot(ray.direction, q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = math::dot(e2, q) * inv;
    if !(t > 0.0) {
        return None;
    }
    Some((t, [1.0 - u - v, u, v]))
}

/// Nearest hit of a ray against a mesh placed by `to_world`.
pub fn intersect(origin: Vec3, direction: Vec3, mesh: &Mesh, to_world: &WorldMatrix) -> Option<HitRecord> {
    PlacedMesh::new(mesh, to_world, 1.0).intersect(&Ray { origin, direction })
}
