use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AssetError;

const MAX_PIXELS: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrapMode {
    #[default]
    Repeat,
    Clamp,
}

impl WrapMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WrapMode::Repeat => "repeat",
            WrapMode::Clamp => "clamp",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "repeat" => Some(WrapMode::Repeat),
            "clamp" => Some(WrapMode::Clamp),
            _ => None,
        }
    }
}

/// RGB texel grid in `[0, 1]`.
///
/// Texel `(i, j)` is column `i` counted from the left and row `j` counted from
/// the bottom, stored at `j * width + i`; its center is at uv
/// `((i + 0.5) / width, (j + 0.5) / height)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<[f32; 3]>,
    pub wrap: WrapMode,
}

impl Texture {
    pub fn new(width: usize, height: usize, texels: Vec<[f32; 3]>, wrap: WrapMode) -> Result<Self, AssetError> {
        let tex = Texture {
            width,
            height,
            texels,
            wrap,
        };
        tex.validate()?;
        Ok(tex)
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Texture {
            width,
            height,
            texels: vec![rgb; width * height],
            wrap: WrapMode::Repeat,
        }
    }

    pub fn validate(&self) -> Result<(), AssetError> {
        if self.width == 0 || self.height == 0 {
            return Err(AssetError::InvalidTexture("dimensions must be positive".into()));
        }
        if self.texels.len() != self.width * self.height {
            return Err(AssetError::InvalidTexture(format!(
                "expected {} texels, got {}",
                self.width * self.height,
                self.texels.len()
            )));
        }
        if let Some(k) = self
            .texels
            .iter()
            .position(|t| t.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(AssetError::InvalidTexture(format!("texel {k} outside [0, 1]")));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn get(&self, i: usize, j: usize) -> [f32; 3] {
        self.texels[self.index(i, j)]
    }
}

/// Row-major RGB image, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Image {
            width,
            height,
            pixels: vec![rgb; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max)
    }
}

/// 8-bit quantization, rounding half up, clamped to `[0, 255]`.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn check_dims(width: usize, height: usize) -> Result<usize, AssetError> {
    match width.checked_mul(height) {
        Some(n) if n <= MAX_PIXELS => Ok(n),
        _ => Err(AssetError::DimensionOverflow { width, height }),
    }
}

/// Splits `count` whitespace-separated header tokens off the front of `bytes`,
/// honoring `#` comments, and returns them with the offset just past the single
/// whitespace byte that terminates the last token.
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize), AssetError> {
    let mut tokens = Vec::with_capacity(count);
    let mut pos = 0;
    while tokens.len() < count {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() {
            return Err(AssetError::MalformedHeader("truncated header".into()));
        }
        let token = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| AssetError::MalformedHeader("non-ascii header".into()))?;
        tokens.push(token.to_string());
    }
    Ok((tokens, pos + 1))
}

fn parse_dim(token: &str) -> Result<usize, AssetError> {
    match token.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(AssetError::MalformedHeader(format!("invalid dimension `{token}`"))),
    }
}

pub fn write_ppm(width: usize, height: usize, rgb: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(rgb.len() * 3);
    for px in rgb {
        out.extend_from_slice(px);
    }
    out
}

/// Returns `(width, height, pixels)` with rows top to bottom.
pub fn read_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>), AssetError> {
    let (tokens, offset) = header_tokens(bytes, 4)?;
    if tokens[0] != "P6" {
        return Err(AssetError::MalformedHeader(format!("expected P6, got `{}`", tokens[0])));
    }
    let (width, height) = (parse_dim(&tokens[1])?, parse_dim(&tokens[2])?);
    if tokens[3] != "255" {
        return Err(AssetError::MalformedHeader("only maxval 255 is supported".into()));
    }
    let n = check_dims(width, height)?;
    let data = &bytes[offset..];
    if data.len() < n * 3 {
        return Err(AssetError::MalformedHeader("truncated pixel data".into()));
    }
    Ok((width, height, data[..n * 3].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}

/// PFM pixels, rows bottom to top as stored in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmData {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f32; 3]>,
}

/// Little-endian color PFM; `rgb` rows run bottom to top.
pub fn write_pfm(width: usize, height: usize, rgb: &[[f32; 3]]) -> Vec<u8> {
    let mut out = format!("PF\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(rgb.len() * 12);
    for px in rgb {
        for c in px {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(bytes: &[u8]) -> Result<PfmData, AssetError> {
    let (tokens, offset) = header_tokens(bytes, 4)?;
    if tokens[0] != "PF" {
        return Err(AssetError::MalformedHeader(format!("expected PF, got `{}`", tokens[0])));
    }
    let (width, height) = (parse_dim(&tokens[1])?, parse_dim(&tokens[2])?);
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| AssetError::MalformedHeader(format!("invalid scale `{}`", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(AssetError::MalformedHeader("scale must be non-zero".into()));
    }
    let little = scale < 0.0;
    let n = check_dims(width, height)?;
    let data = &bytes[offset..];
    if data.len() < n * 12 {
        return Err(AssetError::MalformedHeader("truncated pixel data".into()));
    }
    let read = |c: &[u8]| {
        let b = [c[0], c[1], c[2], c[3]];
        if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let rgb = data[..n * 12]
        .chunks_exact(12)
        .map(|px| [read(&px[0..4]), read(&px[4..8]), read(&px[8..12])])
        .collect();
    Ok(PfmData { width, height, rgb })
}

pub fn texture_from_ppm(bytes: &[u8]) -> Result<Texture, AssetError> {
    let (width, height, rgb) = read_ppm(bytes)?;
    let mut texels = vec![[0.0f32; 3]; width * height];
    for y in 0..height {
        let j = height - 1 - y;
        for i in 0..width {
            let p = rgb[y * width + i];
            texels[j * width + i] = p.map(|c| (f64::from(c) / 255.0) as f32);
        }
    }
    Texture::new(width, height, texels, WrapMode::Repeat)
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase())
}

/// Loads a `.pfm` (exact) or `.ppm` (8 bit) texture. The wrap mode defaults to repeat.
pub fn load_texture(path: &Path) -> Result<Texture, AssetError> {
    let bytes = fs::read(path).map_err(|e| AssetError::io(path, e))?;
    match extension(path).as_deref() {
        Some("pfm") => {
            let pfm = read_pfm(&bytes)?;
            Texture::new(pfm.width, pfm.height, pfm.rgb, WrapMode::Repeat)
        }
        Some("ppm") => texture_from_ppm(&bytes),
        _ => Err(AssetError::UnsupportedFormat(path.to_path_buf())),
    }
}

pub fn save_texture(texture: &Texture, path: &Path) -> Result<(), AssetError> {
    let bytes = match extension(path).as_deref() {
        Some("pfm") => write_pfm(texture.width, texture.height, &texture.texels),
        Some("ppm") => {
            let mut rgb = Vec::with_capacity(texture.texels.len());
            for y in 0..texture.height {
                let j = texture.height - 1 - y;
                for i in 0..texture.width {
                    rgb.push(texture.get(i, j).map(|c| quantize(f64::from(c))));
                }
            }
            write_ppm(texture.width, texture.height, &rgb)
        }
        _ => return Err(AssetError::UnsupportedFormat(path.to_path_buf())),
    };
    fs::write(path, bytes).map_err(|e| AssetError::io(path, e))
}

/// Writes an image as `.ppm` (clamped, quantized) or `.pfm` (32-bit float).
pub fn save_image(image: &Image, path: &Path) -> Result<(), AssetError> {
    let bytes = match extension(path).as_deref() {
        Some("ppm") => {
            let rgb: Vec<[u8; 3]> = image.pixels.iter().map(|p| p.map(quantize)).collect();
            write_ppm(image.width, image.height, &rgb)
        }
        Some("pfm") => {
            let mut rgb = Vec::with_capacity(image.pixels.len());
            for y in (0..image.height).rev() {
                for x in 0..image.width {
                    rgb.push(image.get(x, y).map(|c| c as f32));
                }
            }
            write_pfm(image.width, image.height, &rgb)
        }
        _ => return Err(AssetError::UnsupportedFormat(path.to_path_buf())),
    };
    fs::write(path, bytes).map_err(|e| AssetError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn white_texture_roundtrips_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let white = Texture::filled(5, 3, [1.0; 3]);
        for name in ["w.pfm", "w.ppm"] {
            let path = dir.path().join(name);
            save_texture(&white, &path).unwrap();
            assert_eq!(load_texture(&path).unwrap(), white);
        }
    }

    #[test]
    fn thirds_quantize_to_multiples_of_85() {
        let values = [0.0f32, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let texels = values.map(|v| [v; 3]).to_vec();
        let tex = Texture::new(2, 2, texels, WrapMode::Repeat).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        save_texture(&tex, &path).unwrap();
        let back = load_texture(&path).unwrap();
        let expected = [0u8, 85, 170, 255].map(|q| (f64::from(q) / 255.0) as f32);
        for (texel, e) in back.texels.iter().zip(expected) {
            assert_eq!(*texel, [e; 3]);
        }
    }

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(0.49 / 255.0), 0);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(7.0), 255);
    }

    #[test]
    fn truncated_files_are_malformed() {
        let pfm = write_pfm(2, 2, &[[0.5; 3]; 4]);
        for cut in [0, 3, 8, pfm.len() - 1] {
            assert!(matches!(read_pfm(&pfm[..cut]), Err(AssetError::MalformedHeader(_))), "cut {cut}");
        }
        let ppm = write_ppm(2, 2, &[[1, 2, 3]; 4]);
        for cut in [0, 2, 9, ppm.len() - 1] {
            assert!(matches!(read_ppm(&ppm[..cut]), Err(AssetError::MalformedHeader(_))), "cut {cut}");
        }
    }

    #[test]
    fn oversized_dimensions_rejected() {
        let bytes = b"PF\n100000000 100000000\n-1.0\n".to_vec();
        assert!(matches!(read_pfm(&bytes), Err(AssetError::DimensionOverflow { .. })));
        let bytes = format!("P6\n{} 2\n255\n", usize::MAX).into_bytes();
        assert!(matches!(read_ppm(&bytes), Err(AssetError::DimensionOverflow { .. })));
    }

    #[test]
    fn ppm_header_comments() {
        let mut bytes = b"P6\n# made by hand\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30]);
        assert_eq!(read_ppm(&bytes).unwrap(), (1, 1, vec![[10, 20, 30]]));
    }

    #[test]
    fn big_endian_pfm_is_read() {
        let mut bytes = b"PF\n1 1\n1.0\n".to_vec();
        for c in [0.25f32, 0.5, 0.75] {
            bytes.extend_from_slice(&c.to_be_bytes());
        }
        assert_eq!(read_pfm(&bytes).unwrap().rgb, vec![[0.25, 0.5, 0.75]]);
    }

    #[test]
    fn ppm_rows_are_top_down() {
        // texel row 0 is the bottom of the image
        let tex = Texture::new(1, 2, vec![[0.0; 3], [1.0; 3]], WrapMode::Repeat).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        save_texture(&tex, &path).unwrap();
        let (_, _, rgb) = read_ppm(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(rgb, vec![[255; 3], [0; 3]]);
    }

    #[test]
    fn out_of_range_texels_rejected() {
        assert!(Texture::new(1, 1, vec![[1.5, 0.0, 0.0]], WrapMode::Clamp).is_err());
        assert!(Texture::new(1, 1, vec![[f32::NAN, 0.0, 0.0]], WrapMode::Clamp).is_err());
        assert!(Texture::new(2, 1, vec![[0.0; 3]], WrapMode::Clamp).is_err());
    }

    proptest! {
        #[test]
        fn pfm_roundtrip_is_bit_exact(w in 1usize..6, h in 1usize..6, seed in prop::collection::vec(any::<f32>(), 108)) {
            let rgb: Vec<[f32; 3]> = (0..w * h).map(|k| [seed[3 * k], seed[3 * k + 1], seed[3 * k + 2]]).collect();
            let back = read_pfm(&write_pfm(w, h, &rgb)).unwrap();
            let bits = |v: &[[f32; 3]]| v.iter().flatten().map(|c| c.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.rgb), bits(&rgb));
        }

        #[test]
        fn eight_bit_quantization_is_idempotent(v in 0.0f64..=1.0) {
            let q = quantize(v);
            let reloaded = f64::from((f64::from(q) / 255.0) as f32);
            prop_assert_eq!(quantize(reloaded), q);
        }
    }
}
