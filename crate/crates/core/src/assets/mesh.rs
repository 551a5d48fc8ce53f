use std::fmt::Write as _;

use super::AssetError;
use crate::math::{self, Vec3};

/// A triangle; every corner carries both a position and a uv index (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub positions: [u32; 3],
    pub uvs: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub uvs: Vec<[f64; 2]>,
    pub faces: Vec<Face>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ObjStats {
    /// Lines with directives other than `v`, `vt`, `vn`, `f`.
    pub ignored_directives: usize,
    pub dropped_degenerate: usize,
}

impl Mesh {
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        self.faces[face].positions.map(|i| self.vertices[i as usize])
    }

    pub fn face_uvs(&self, face: usize) -> [[f64; 2]; 3] {
        self.faces[face].uvs.map(|i| self.uvs[i as usize])
    }

    /// Midpoint of the axis-aligned bounding box of the vertices.
    pub fn bounds_center(&self) -> Vec3 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        [0, 1, 2].map(|k| 0.5 * (lo[k] + hi[k]))
    }

    /// Vertices actually referenced by faces.
    pub fn used_vertices(&self) -> Vec<Vec3> {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &p in &f.positions {
                used[p as usize] = true;
            }
        }
        self.vertices
            .iter()
            .zip(used)
            .filter_map(|(v, u)| u.then_some(*v))
            .collect()
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
        }
        for t in &self.uvs {
            let _ = writeln!(out, "vt {} {}", t[0], t[1]);
        }
        for f in &self.faces {
            let _ = writeln!(
                out,
                "f {}/{} {}/{} {}/{}",
                f.positions[0] + 1,
                f.uvs[0] + 1,
                f.positions[1] + 1,
                f.uvs[1] + 1,
                f.positions[2] + 1,
                f.uvs[2] + 1
            );
        }
        out
    }
}

fn resolve_index(raw: &str, count: usize, line: usize) -> Result<u32, AssetError> {
    let index: i64 = raw.parse().map_err(|_| AssetError::Obj {
        line,
        message: format!("invalid index `{raw}`"),
    })?;
    // OBJ indices are 1-based; negatives count back from the latest element
    let resolved = if index > 0 {
        index - 1
    } else if index < 0 {
        count as i64 + index
    } else {
        -1
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(AssetError::IndexOutOfRange { line, index });
    }
    Ok(resolved as u32)
}

fn parse_floats<const N: usize>(parts: &[&str], line: usize, directive: &str) -> Result<[f64; N], AssetError> {
    if parts.len() < N {
        return Err(AssetError::Obj {
            line,
            message: format!("`{directive}` needs {N} components"),
        });
    }
    let mut out = [0.0f64; N];
    for (slot, raw) in out.iter_mut().zip(parts) {
        *slot = raw.parse().map_err(|_| AssetError::Obj {
            line,
            message: format!("invalid number `{raw}`"),
        })?;
        if !slot.is_finite() {
            return Err(AssetError::Obj {
                line,
                message: "non-finite coordinate".into(),
            });
        }
    }
    Ok(out)
}

pub fn parse_obj(text: &str) -> Result<Mesh, AssetError> {
    parse_obj_with_stats(text).map(|(mesh, _)| mesh)
}

/// Parses OBJ text, fan-triangulating polygons and dropping zero-area faces.
pub fn parse_obj_with_stats(text: &str) -> Result<(Mesh, ObjStats), AssetError> {
    let mut mesh = Mesh::default();
    let mut stats = ObjStats::default();
    let mut corners: Vec<(u32, u32)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut parts = content.split_whitespace();
        let Some(directive) = parts.next() else {
            continue;
        };
        let rest: Vec<&str> = parts.collect();
        match directive {
            "v" => mesh.vertices.push(parse_floats::<3>(&rest, line, "v")?),
            "vt" => mesh.uvs.push(parse_floats::<2>(&rest, line, "vt")?),
            // shading uses geometric normals
            "vn" => {}
            "f" => {
                if rest.len() < 3 {
                    return Err(AssetError::Obj {
                        line,
                        message: "face needs at least 3 vertices".into(),
                    });
                }
                corners.clear();
                for corner in &rest {
                    let mut refs = corner.split('/');
                    let p = refs.next().unwrap_or("");
                    let t = refs.next().unwrap_or("");
                    if t.is_empty() {
                        return Err(AssetError::MissingUv { line });
                    }
                    corners.push((
                        resolve_index(p, mesh.vertices.len(), line)?,
                        resolve_index(t, mesh.uvs.len(), line)?,
                    ));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    let [a, b, c] = tri.map(|(p, _)| mesh.vertices[p as usize]);
                    if math::norm(math::cross(math::sub(b, a), math::sub(c, a))) == 0.0 {
                        stats.dropped_degenerate += 1;
                        continue;
                    }
                    mesh.faces.push(Face {
                        positions: tri.map(|(p, _)| p),
                        uvs: tri.map(|(_, t)| t),
                    });
                }
            }
            _ => stats.ignored_directives += 1,
        }
    }
    if mesh.faces.is_empty() {
        return Err(AssetError::EmptyMesh);
    }
    Ok((mesh, stats))
}
