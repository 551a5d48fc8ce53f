use crate::assets::{Texture, WrapMode};

/// Bilinear sampling footprint: four texel indices and their weights.
///
/// Indices may repeat (clamped or wrapped edges); weights are non-negative and
/// sum to one. This is exactly the linear map the adjoint transposes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub texels: [usize; 4],
    pub weights: [f64; 4],
}

impl Footprint {
    pub fn apply(&self, texture: &Texture) -> [f64; 3] {
        let mut rgb = [0.0; 3];
        for (&k, &w) in self.texels.iter().zip(&self.weights) {
            let t = texture.texels[k];
            for c in 0..3 {
                rgb[c] += w * f64::from(t[c]);
            }
        }
        rgb
    }
}

fn wrap_coord(u: f64, mode: WrapMode) -> f64 {
    match mode {
        WrapMode::Repeat => u - u.floor(),
        WrapMode::Clamp => u.clamp(0.0, 1.0),
    }
}

fn wrap_index(i: i64, n: usize, mode: WrapMode) -> usize {
    match mode {
        WrapMode::Repeat => i.rem_euclid(n as i64) as usize,
        WrapMode::Clamp => i.clamp(0, n as i64 - 1) as usize,
    }
}

/// Bilinear footprint at `uv` after scaling by `tiling` and wrapping.
pub fn footprint(width: usize, height: usize, uv: [f64; 2], tiling: f64, wrap: WrapMode) -> Footprint {
    let u = wrap_coord(uv[0] * tiling, wrap);
    let v = wrap_coord(uv[1] * tiling, wrap);
    // texel centers sit at (i + 0.5) / width
    let x = u * width as f64 - 0.5;
    let y = v * height as f64 - 0.5;
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let i0 = wrap_index(x0 as i64, width, wrap);
    let i1 = wrap_index(x0 as i64 + 1, width, wrap);
    let j0 = wrap_index(y0 as i64, height, wrap);
    let j1 = wrap_index(y0 as i64 + 1, height, wrap);
    Footprint {
        texels: [j0 * width + i0, j0 * width + i1, j1 * width + i0, j1 * width + i1],
        weights: [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ],
    }
}

pub fn sample_texture_with(texture: &Texture, uv: [f64; 2], tiling: f64, wrap: WrapMode) -> ([f64; 3], Footprint) {
    let fp = footprint(texture.width, texture.height, uv, tiling, wrap);
    (fp.apply(texture), fp)
}

/// Samples with the texture's own wrap mode.
pub fn sample_texture(texture: &Texture, uv: [f64; 2], tiling: f64) -> ([f64; 3], Footprint) {
    sample_texture_with(texture, uv, tiling, texture.wrap)
}
