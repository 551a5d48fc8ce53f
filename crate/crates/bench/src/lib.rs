//! Shared scene setup for the benchmarks.

use advtex_core::assets::{parse_obj, Mesh, Texture, WrapMode};
use advtex_core::scene_io::{CameraDesc, FrameScene, ObjectDesc};
use advtex_core::scene_model::LightSpec;
use advtex_core::transform::WorldMatrix;

/// A `n`×`n` grid of quads at depth 3 filling most of the view, two triangles per quad.
pub fn grid_mesh(n: usize) -> Mesh {
    let mut obj = String::new();
    for j in 0..=n {
        for i in 0..=n {
            let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
            obj += &format!("v {} {} 3\nvt {u} {v}\n", 1.0 - 2.0 * u, 2.0 * v - 1.0);
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i + 1;
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            obj += &format!("f {a}/{a} {b}/{b} {c}/{c}\nf {a}/{a} {c}/{c} {d}/{d}\n");
        }
    }
    parse_obj(&obj).expect("grid mesh is valid")
}

pub fn scene(size: u32) -> FrameScene {
    FrameScene {
        frame: 0,
        camera: CameraDesc {
            to_world: WorldMatrix::IDENTITY,
            fov_deg: 45.0,
            width: size,
            height: size,
        },
        object: ObjectDesc {
            mesh_path: "grid.obj".into(),
            to_world: WorldMatrix::IDENTITY,
            scale: 1.0,
            texture_path: "t.pfm".into(),
            uv_tiling: 2.0,
            wrap: WrapMode::Repeat,
        },
        light: LightSpec::default(),
        background: [0.5; 3],
    }
}

pub fn texture(size: usize) -> Texture {
    let texels = (0..size * size)
        .map(|k| {
            let v = ((k * 37) % 101) as f32 / 100.0;
            [v, 1.0 - v, 0.5]
        })
        .collect();
    Texture::new(size, size, texels, WrapMode::Repeat).expect("texture is valid")
}
