use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_resolution, VictimError};
use crate::assets::Image;
use crate::renderer::PixelBox;

pub const FEATURES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub grid: usize,
    pub threshold: f64,
    pub iou_threshold: f64,
    /// Minimum fraction of a cell covered by the object for a positive label.
    pub coverage: f64,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            grid: 7,
            threshold: 0.5,
            iou_threshold: 0.5,
            coverage: 0.5,
            iterations: 3000,
            learning_rate: 2.0,
        }
    }
}

/// One box per image: the 4-connected above-threshold region around the best cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: PixelBox,
    pub confidence: f64,
}

/// Grid detector with a shared logistic objectness head.
///
/// Per-cell features are the mean of each channel and the mean squared
/// deviation of each channel from the background color.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub width: usize,
    pub height: usize,
    pub grid: usize,
    pub background: [f64; 3],
    pub weights: [f64; FEATURES],
    pub bias: f64,
    pub threshold: f64,
    pub iou_threshold: f64,
    pub seed: u64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl DetectorModel {
    pub fn new(width: usize, height: usize, config: &DetectorConfig, background: [f64; 3]) -> Result<Self, VictimError> {
        let g = config.grid;
        if g == 0 || !width.is_multiple_of(g) || !height.is_multiple_of(g) {
            return Err(VictimError::InvalidConfig(format!("grid {g} must divide {width}x{height}")));
        }
        if !(config.threshold > 0.0 && config.threshold < 1.0) {
            return Err(VictimError::InvalidConfig("threshold must lie in (0, 1)".into()));
        }
        Ok(DetectorModel {
            width,
            height,
            grid: g,
            background,
            weights: [0.0; FEATURES],
            bias: 0.0,
            threshold: config.threshold,
            iou_threshold: config.iou_threshold,
            seed: 0,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.grid * self.grid
    }

    fn cell_size(&self) -> (usize, usize) {
        (self.width / self.grid, self.height / self.grid)
    }

    /// Pixel rectangle of a cell (row-major cell index).
    pub fn cell_box(&self, cell: usize) -> PixelBox {
        let (cw, ch) = self.cell_size();
        let (cx, cy) = (cell % self.grid, cell / self.grid);
        PixelBox {
            x0: (cx * cw) as f64,
            y0: (cy * ch) as f64,
            x1: ((cx + 1) * cw) as f64,
            y1: ((cy + 1) * ch) as f64,
        }
    }

    fn cell_of(&self, x: usize, y: usize) -> usize {
        let (cw, ch) = self.cell_size();
        (y / ch) * self.grid + x / cw
    }

    pub fn features(&self, image: &Image) -> Result<Vec<[f64; FEATURES]>, VictimError> {
        check_resolution(image, self.width, self.height)?;
        let mut out = vec![[0.0; FEATURES]; self.cell_count()];
        for y in 0..self.height {
            for x in 0..self.width {
                let f = &mut out[self.cell_of(x, y)];
                let p = image.pixels[y * self.width + x];
                for c in 0..3 {
                    let d = p[c] - self.background[c];
                    f[c] += p[c];
                    f[3 + c] += d * d;
                }
            }
        }
        let (cw, ch) = self.cell_size();
        let norm = 1.0 / (cw * ch) as f64;
        for f in &mut out {
            for v in f.iter_mut() {
                *v *= norm;
            }
        }
        Ok(out)
    }

    fn score_of(&self, f: &[f64; FEATURES]) -> f64 {
        sigmoid(self.bias + self.weights.iter().zip(f).map(|(w, x)| w * x).sum::<f64>())
    }

    /// Objectness per cell, row-major.
    pub fn cell_scores(&self, image: &Image) -> Result<Vec<f64>, VictimError> {
        Ok(self.features(image)?.iter().map(|f| self.score_of(f)).collect())
    }

    pub fn detect(&self, image: &Image) -> Result<Option<Detection>, VictimError> {
        Ok(self.detect_from_scores(&self.cell_scores(image)?))
    }

    pub fn detect_from_scores(&self, scores: &[f64]) -> Option<Detection> {
        let best = super::classifier::argmax(scores);
        let confidence = scores[best];
        if confidence < self.threshold {
            return None;
        }
        let g = self.grid;
        let mut seen = vec![false; scores.len()];
        let mut stack = vec![best];
        seen[best] = true;
        let mut bbox = self.cell_box(best);
        while let Some(c) = stack.pop() {
            let b = self.cell_box(c);
            bbox = PixelBox {
                x0: bbox.x0.min(b.x0),
                y0: bbox.y0.min(b.y0),
                x1: bbox.x1.max(b.x1),
                y1: bbox.y1.max(b.y1),
            };
            let (cx, cy) = (c % g, c / g);
            let mut neighbors = Vec::with_capacity(4);
            if cx > 0 {
                neighbors.push(c - 1);
            }
            if cx + 1 < g {
                neighbors.push(c + 1);
            }
            if cy > 0 {
                neighbors.push(c - g);
            }
            if cy + 1 < g {
                neighbors.push(c + g);
            }
            for n in neighbors {
                if !seen[n] && scores[n] >= self.threshold {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        Some(Detection { bbox, confidence })
    }

    /// Cells whose rectangle overlaps `bbox` with positive area.
    pub fn cells_overlapping(&self, bbox: &PixelBox) -> Vec<usize> {
        (0..self.cell_count()).filter(|&c| self.cell_box(c).intersects(bbox)).collect()
    }

    /// Sum of objectness over `cells` and its exact gradient w.r.t. every pixel.
    pub fn objectness_grad(&self, image: &Image, cells: &[usize]) -> Result<(f64, Vec<[f64; 3]>), VictimError> {
        let features = self.features(image)?;
        let mut selected = vec![false; self.cell_count()];
        for &c in cells {
            if c >= selected.len() {
                return Err(VictimError::InvalidConfig(format!("cell {c} out of range")));
            }
            selected[c] = true;
        }
        let mut total = 0.0;
        let mut d_z = vec![0.0; self.cell_count()];
        for (c, f) in features.iter().enumerate() {
            if selected[c] {
                let s = self.score_of(f);
                total += s;
                d_z[c] = s * (1.0 - s);
            }
        }
        let (cw, ch) = self.cell_size();
        let norm = 1.0 / (cw * ch) as f64;
        let mut grad = vec![[0.0; 3]; self.width * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                let dz = d_z[self.cell_of(x, y)];
                if dz == 0.0 {
                    continue;
                }
                let p = image.pixels[y * self.width + x];
                grad[y * self.width + x] = [0, 1, 2].map(|c| {
                    let d = p[c] - self.background[c];
                    dz * norm * (self.weights[c] + 2.0 * d * self.weights[3 + c])
                });
            }
        }
        Ok((total, grad))
    }

    /// Fraction of each cell covered by `mask` (row-major pixels).
    pub fn cell_coverage(&self, mask: &[bool]) -> Result<Vec<f64>, VictimError> {
        if mask.len() != self.width * self.height {
            return Err(VictimError::ResolutionMismatch {
                expected: (self.width, self.height),
                got: (mask.len(), 1),
            });
        }
        let mut out = vec![0.0; self.cell_count()];
        for y in 0..self.height {
            for x in 0..self.width {
                if mask[y * self.width + x] {
                    out[self.cell_of(x, y)] += 1.0;
                }
            }
        }
        let (cw, ch) = self.cell_size();
        for v in &mut out {
            *v /= (cw * ch) as f64;
        }
        Ok(out)
    }
}

/// Fits the objectness head by logistic regression over all cells of all images.
///
/// A cell is positive when the object mask covers at least `config.coverage` of it.
pub fn fit_detector(
    images: &[Image],
    masks: &[Vec<bool>],
    background: [f64; 3],
    config: &DetectorConfig,
    seed: u64,
) -> Result<DetectorModel, VictimError> {
    if images.is_empty() || images.len() != masks.len() {
        return Err(VictimError::InvalidConfig("need one mask per training image".into()));
    }
    let mut model = DetectorModel::new(images[0].width, images[0].height, config, background)?;
    model.seed = seed;
    let mut samples = Vec::new();
    for (img, mask) in images.iter().zip(masks) {
        let features = model.features(img)?;
        let coverage = model.cell_coverage(mask)?;
        for (f, cov) in features.into_iter().zip(coverage) {
            samples.push((f, if cov >= config.coverage { 1.0 } else { 0.0 }));
        }
    }
    if !samples.iter().any(|s| s.1 == 1.0) || !samples.iter().any(|s| s.1 == 0.0) {
        return Err(VictimError::InvalidConfig(
            "detector training needs both object and background cells".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in &mut model.weights {
        *w = rng.random_range(-0.01..0.01);
    }
    let scale = 1.0 / samples.len() as f64;
    for _ in 0..config.iterations {
        let mut gw = [0.0; FEATURES];
        let mut gb = 0.0;
        for (f, label) in &samples {
            let d = model.score_of(f) - label;
            gb += d;
            for (g, x) in gw.iter_mut().zip(f) {
                *g += d * x;
            }
        }
        for (w, g) in model.weights.iter_mut().zip(gw) {
            *w -= config.learning_rate * scale * g;
        }
        model.bias -= config.learning_rate * scale * gb;
    }
    Ok(model)
}
