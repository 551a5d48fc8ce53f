use advtex_core::assets::{parse_obj, Mesh, Texture, WrapMode};
use advtex_core::renderer::{render, Rendering};
use advtex_core::scene_io::{CameraDesc, FrameScene, ObjectDesc};
use advtex_core::scene_model::{Euler, LightSpec};
use advtex_core::transform::{euler_to_matrix, WorldMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frame(width: u32, height: u32, fov: f64, object: WorldMatrix, light: LightSpec) -> FrameScene {
    FrameScene {
        frame: 0,
        camera: CameraDesc {
            to_world: WorldMatrix::IDENTITY,
            fov_deg: fov,
            width,
            height,
        },
        object: ObjectDesc {
            mesh_path: "m.obj".into(),
            to_world: object,
            scale: 1.0,
            texture_path: "t.pfm".into(),
            uv_tiling: 1.0,
            wrap: WrapMode::Repeat,
        },
        light,
        background: [0.5; 3],
    }
}

/// Square `[-h, h]²` at depth `z` with arbitrary corner uvs.
fn quad_obj(h: f64, z: f64, uvs: [[f64; 2]; 4]) -> String {
    let mut s = format!("v {h} {} {z}\nv {} {} {z}\nv {} {h} {z}\nv {h} {h} {z}\n", -h, -h, -h, -h);
    for uv in uvs {
        s += &format!("vt {} {}\n", uv[0], uv[1]);
    }
    s + "f 1/1 2/2 3/3 4/4\n"
}

const UNIT_UVS: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

/// Independent bilinear lookup with clamped edges.
fn bilinear_clamp(tex: &Texture, u: f64, v: f64) -> [f64; 3] {
    let x = u.clamp(0.0, 1.0) * tex.width as f64 - 0.5;
    let y = v.clamp(0.0, 1.0) * tex.height as f64 - 0.5;
    let fetch = |i: f64, j: f64| {
        let i = i.clamp(0.0, tex.width as f64 - 1.0) as usize;
        let j = j.clamp(0.0, tex.height as f64 - 1.0) as usize;
        tex.texels[j * tex.width + i].map(f64::from)
    };
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (a, b, c, d) = (fetch(x0, y0), fetch(x0 + 1.0, y0), fetch(x0, y0 + 1.0), fetch(x0 + 1.0, y0 + 1.0));
    [0, 1, 2].map(|k| {
        (1.0 - fx) * (1.0 - fy) * a[k] + fx * (1.0 - fy) * b[k] + (1.0 - fx) * fy * c[k] + fx * fy * d[k]
    })
}

fn checkerboard(n: usize, dark: f32, light: f32) -> Texture {
    let texels = (0..n * n)
        .map(|k| if (k % n + k / n).is_multiple_of(2) { [dark; 3] } else { [light; 3] })
        .collect();
    Texture::new(n, n, texels, WrapMode::Clamp).unwrap()
}

#[test]
fn checkerboard_plane_matches_rasterization_oracle() {
    let (w, h, fov, depth) = (32usize, 24usize, 60.0f64, 1.6f64);
    let light = LightSpec::new([0.0, 0.0, -1.0], [0.6; 3], [0.2; 3]).unwrap();
    let mut fs = frame(w as u32, h as u32, fov, WorldMatrix::IDENTITY, light);
    fs.object.wrap = WrapMode::Clamp;
    let mesh = parse_obj(&quad_obj(1.0, depth, UNIT_UVS)).unwrap();
    let tex = checkerboard(4, 0.1, 0.9);
    let r = render(&fs, &mesh, &tex).unwrap();
    assert_eq!(r.records.len(), w * h, "quad must fill the view");

    // plane z = depth seen from the origin: closed-form hit point per pixel
    let tan = (fov.to_radians() / 2.0).tan();
    let (mut dark, mut bright) = (0, 0);
    for y in 0..h {
        for x in 0..w {
            let ndc_x = 2.0 * (x as f64 + 0.5) / w as f64 - 1.0;
            let ndc_y = 1.0 - 2.0 * (y as f64 + 0.5) / h as f64;
            let px = -ndc_x * tan * depth;
            let py = ndc_y * tan * (h as f64 / w as f64) * depth;
            let (u, v) = ((1.0 - px) / 2.0, (py + 1.0) / 2.0);
            let expected = bilinear_clamp(&tex, u, v).map(|c| 0.8 * c);
            let got = r.image.get(x, y);
            for c in 0..3 {
                assert!((got[c] - expected[c]).abs() < 1e-9, "pixel ({x},{y}): {got:?} vs {expected:?}");
            }
            if got[0] < 0.15 {
                dark += 1;
            }
            if got[0] > 0.65 {
                bright += 1;
            }
        }
    }
    assert!(dark > 0 && bright > 0, "both checker colors must appear");
}

struct RandomScene {
    fs: FrameScene,
    mesh: Mesh,
    tex: Texture,
}

fn random_scene(seed: u64, wrap: WrapMode, tiling: f64) -> RandomScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uvs = [[0.0; 2]; 4];
    for uv in &mut uvs {
        *uv = [rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)];
    }
    let mesh = parse_obj(&quad_obj(1.0, 0.0, uvs)).unwrap();
    let rotation = euler_to_matrix(&Euler {
        roll: rng.random_range(-40.0..40.0),
        pitch: rng.random_range(-40.0..40.0),
        yaw: rng.random_range(-40.0..40.0),
    });
    let object = WorldMatrix {
        rotation,
        translation: [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 3.0],
    };
    let dir: [f64; 3] = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), -1.0];
    let n = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
    let light = LightSpec::new(dir.map(|c| c / n), [0.5; 3], [0.2; 3]).unwrap();
    let mut fs = frame(8, 8, 60.0, object, light);
    fs.object.wrap = wrap;
    fs.object.uv_tiling = tiling;
    let texels = (0..16 * 16)
        .map(|_| [0, 1, 2].map(|_| rng.random_range(0.2f32..0.8)))
        .collect();
    let tex = Texture::new(16, 16, texels, wrap).unwrap();
    RandomScene { fs, mesh, tex }
}

/// Central differences of the sum-of-pixels loss for one texel channel.
///
/// Pixel differences are summed individually so the oracle does not lose
/// precision to cancellation in the full sum.
fn finite_difference(s: &RandomScene, texel: usize, channel: usize, step: f32) -> f64 {
    let mut plus = s.tex.clone();
    let mut minus = s.tex.clone();
    plus.texels[texel][channel] += step;
    minus.texels[texel][channel] -= step;
    let delta = f64::from(plus.texels[texel][channel]) - f64::from(minus.texels[texel][channel]);
    let a = render(&s.fs, &s.mesh, &plus).unwrap().image;
    let b = render(&s.fs, &s.mesh, &minus).unwrap().image;
    let diff: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| p[channel] - q[channel])
        .sum();
    diff / delta
}

fn check_gradient(seed: u64, wrap: WrapMode, tiling: f64) {
    let s = random_scene(seed, wrap, tiling);
    let r = render(&s.fs, &s.mesh, &s.tex).unwrap();
    assert!(r.records.iter().all(|rec| rec.pre_clamp.iter().all(|&v| v > 0.0 && v < 1.0)));
    let g = r.backward(&vec![[1.0; 3]; 64], (16, 16)).unwrap();
    let mut touched = 0;
    for k in 0..256 {
        for c in 0..3 {
            let fd = finite_difference(&s, k, c, 1e-3);
            let an = g.values[k][c];
            if an == 0.0 {
                assert_eq!(fd, 0.0, "untouched texel {k} moved the loss");
                continue;
            }
            touched += 1;
            let rel = (fd - an).abs() / an.abs();
            assert!(rel < 1e-4, "seed {seed} texel {k} channel {c}: fd {fd} vs {an}");
        }
    }
    assert!(touched > 0 || r.records.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn backward_matches_finite_differences(
        seed in any::<u64>(),
        clamp in any::<bool>(),
        tiled in any::<bool>(),
    ) {
        let wrap = if clamp { WrapMode::Clamp } else { WrapMode::Repeat };
        check_gradient(seed, wrap, if tiled { 2.5 } else { 1.0 });
    }
}

#[test]
fn gradient_oracle_covers_every_wrap_mode_and_tiling() {
    for (i, wrap) in [WrapMode::Repeat, WrapMode::Clamp].into_iter().enumerate() {
        for (j, tiling) in [1.0, 3.0].into_iter().enumerate() {
            check_gradient(100 + 10 * i as u64 + j as u64, wrap, tiling);
        }
    }
}

#[test]
fn nearer_quad_occludes_farther_one() {
    // near quad samples texel 0 only, far quad texel 1 only
    let near = quad_obj(0.5, 2.0, [[0.25, 0.5]; 4]);
    let far = quad_obj(2.0, 4.0, [[0.75, 0.5]; 4]).replace("f 1/1 2/2 3/3 4/4", "f 5/5 6/6 7/7 8/8");
    let mesh = parse_obj(&format!("{near}{far}")).unwrap();
    let tex = Texture::new(2, 1, vec![[0.2; 3], [0.7; 3]], WrapMode::Clamp).unwrap();
    let light = LightSpec::new([0.0, 0.0, -1.0], [0.0; 3], [1.0; 3]).unwrap();
    let (w, h, fov) = (24usize, 24usize, 70.0f64);
    let fs = frame(w as u32, h as u32, fov, WorldMatrix::IDENTITY, light);
    let r = render(&fs, &mesh, &tex).unwrap();
    let g = r.backward(&vec![[1.0; 3]; w * h], (2, 1)).unwrap();

    let tan = (fov.to_radians() / 2.0).tan();
    let (mut n_near, mut n_far) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let dx = -(2.0 * (x as f64 + 0.5) / w as f64 - 1.0) * tan;
            let dy = (1.0 - 2.0 * (y as f64 + 0.5) / h as f64) * tan;
            let hits_near = (dx * 2.0).abs() <= 0.5 && (dy * 2.0).abs() <= 0.5;
            let hits_far = (dx * 4.0).abs() <= 2.0 && (dy * 4.0).abs() <= 2.0;
            let expected = if hits_near {
                n_near += 1.0;
                0.2
            } else if hits_far {
                n_far += 1.0;
                0.7
            } else {
                0.5
            };
            assert!((r.image.get(x, y)[0] - expected).abs() < 1e-6, "pixel ({x},{y})");
        }
    }
    assert!(n_near > 0.0 && n_far > 0.0);
    assert!((g.values[0][0] - n_near).abs() < 1e-9);
    assert!((g.values[1][0] - n_far).abs() < 1e-9);
}

fn scaled(fs: &FrameScene, k: f64) -> FrameScene {
    let mut out = fs.clone();
    out.camera.to_world.translation = fs.camera.to_world.translation.map(|c| c * k);
    out.object.to_world.translation = fs.object.to_world.translation.map(|c| c * k);
    out.object.scale = fs.object.scale * k;
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn uniform_scale_leaves_image_unchanged(seed in any::<u64>(), k in 0.01f64..500.0) {
        let s = random_scene(seed, WrapMode::Repeat, 1.0);
        let mut fs = s.fs.clone();
        fs.camera.to_world.translation = [0.1, -0.2, 0.3];
        let base = render(&fs, &s.mesh, &s.tex).unwrap();
        let other = render(&scaled(&fs, k), &s.mesh, &s.tex).unwrap();
        prop_assert!(base.image.max_abs_diff(&other.image) <= 1e-9);
    }
}

#[test]
fn scaling_mesh_vertices_matches_scale_field() {
    let s = random_scene(7, WrapMode::Clamp, 1.0);
    let k = 100.0;
    let mut mesh = s.mesh.clone();
    for v in &mut mesh.vertices {
        *v = v.map(|c| c * k);
    }
    let mut fs = scaled(&s.fs, k);
    fs.object.scale = 1.0;
    let a = render(&s.fs, &s.mesh, &s.tex).unwrap();
    let b = render(&fs, &mesh, &s.tex).unwrap();
    assert!(a.image.max_abs_diff(&b.image) <= 1e-9);
}

#[test]
fn rendering_is_bit_deterministic() {
    let s = random_scene(42, WrapMode::Repeat, 2.0);
    let a: Rendering = render(&s.fs, &s.mesh, &s.tex).unwrap();
    let b = render(&s.fs, &s.mesh, &s.tex).unwrap();
    assert_eq!(a, b);
    let up: Vec<[f64; 3]> = (0..64).map(|i| [i as f64, -1.0, 0.5]).collect();
    assert_eq!(a.backward(&up, (16, 16)).unwrap(), b.backward(&up, (16, 16)).unwrap());
}
