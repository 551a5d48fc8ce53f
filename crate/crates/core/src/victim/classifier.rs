use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_resolution, VictimError};
use crate::assets::Image;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub downsample: usize,
    pub classes: usize,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            downsample: 8,
            classes: 2,
            iterations: 2000,
            learning_rate: 0.5,
        }
    }
}

/// Average pooling by `downsample`, then a linear map to class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub width: usize,
    pub height: usize,
    pub downsample: usize,
    pub classes: usize,
    /// `classes × features`, row-major; features ordered (pooled row, pooled column, channel).
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub seed: u64,
}

fn pooled_dims(width: usize, height: usize, f: usize) -> Result<(usize, usize), VictimError> {
    if f == 0 || !width.is_multiple_of(f) || !height.is_multiple_of(f) {
        return Err(VictimError::InvalidConfig(format!(
            "downsample factor {f} must divide {width}x{height}"
        )));
    }
    Ok((width / f, height / f))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label]`, computed stably.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

impl ClassifierModel {
    pub fn zeros(width: usize, height: usize, downsample: usize, classes: usize) -> Result<Self, VictimError> {
        let (pw, ph) = pooled_dims(width, height, downsample)?;
        if classes < 2 {
            return Err(VictimError::InvalidConfig("at least two classes are required".into()));
        }
        Ok(ClassifierModel {
            width,
            height,
            downsample,
            classes,
            weights: vec![0.0; classes * pw * ph * 3],
            bias: vec![0.0; classes],
            seed: 0,
        })
    }

    pub fn feature_count(&self) -> usize {
        (self.width / self.downsample) * (self.height / self.downsample) * 3
    }

    pub fn features(&self, image: &Image) -> Result<Vec<f64>, VictimError> {
        check_resolution(image, self.width, self.height)?;
        let f = self.downsample;
        let pw = self.width / f;
        let mut out = vec![0.0; self.feature_count()];
        for y in 0..self.height {
            for x in 0..self.width {
                let base = ((y / f) * pw + x / f) * 3;
                let p = image.pixels[y * self.width + x];
                for c in 0..3 {
                    out[base + c] += p[c];
                }
            }
        }
        let norm = 1.0 / (f * f) as f64;
        for v in &mut out {
            *v *= norm;
        }
        Ok(out)
    }

    fn logits_of(&self, features: &[f64]) -> Vec<f64> {
        let n = features.len();
        (0..self.classes)
            .map(|k| {
                let row = &self.weights[k * n..(k + 1) * n];
                self.bias[k] + row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    pub fn logits(&self, image: &Image) -> Result<Vec<f64>, VictimError> {
        Ok(self.logits_of(&self.features(image)?))
    }

    pub fn predict(&self, image: &Image) -> Result<usize, VictimError> {
        let logits = self.logits(image)?;
        Ok(argmax(&logits))
    }

    /// Cross-entropy toward `label` and its exact gradient w.r.t. every pixel.
    pub fn cross_entropy_grad(&self, image: &Image, label: usize) -> Result<(f64, Vec<[f64; 3]>), VictimError> {
        if label >= self.classes {
            return Err(VictimError::LabelOutOfRange { label, classes: self.classes });
        }
        let features = self.features(image)?;
        let logits = self.logits_of(&features);
        let loss = cross_entropy(&logits, label);
        let mut d_logits = softmax(&logits);
        d_logits[label] -= 1.0;
        let n = features.len();
        let mut d_feat = vec![0.0; n];
        for (k, dl) in d_logits.iter().enumerate() {
            for (i, w) in self.weights[k * n..(k + 1) * n].iter().enumerate() {
                d_feat[i] += dl * w;
            }
        }
        let f = self.downsample;
        let pw = self.width / f;
        let norm = 1.0 / (f * f) as f64;
        let mut grad = vec![[0.0; 3]; self.width * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                let base = ((y / f) * pw + x / f) * 3;
                grad[y * self.width + x] = [0, 1, 2].map(|c| d_feat[base + c] * norm);
            }
        }
        Ok((loss, grad))
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Multinomial logistic regression by full-batch gradient descent.
///
/// Fails unless the fitted model classifies every training image correctly.
pub fn fit_classifier(
    images: &[Image],
    labels: &[usize],
    config: &ClassifierConfig,
    seed: u64,
) -> Result<ClassifierModel, VictimError> {
    if images.is_empty() || images.len() != labels.len() {
        return Err(VictimError::InvalidConfig("need one label per training image".into()));
    }
    let (w, h) = (images[0].width, images[0].height);
    let mut model = ClassifierModel::zeros(w, h, config.downsample, config.classes)?;
    model.seed = seed;
    for &l in labels {
        if l >= config.classes {
            return Err(VictimError::LabelOutOfRange { label: l, classes: config.classes });
        }
    }
    for k in 0..config.classes {
        if !labels.contains(&k) {
            return Err(VictimError::InvalidConfig(format!("class {k} has no training image")));
        }
    }
    let features: Vec<Vec<f64>> = images.iter().map(|img| model.features(img)).collect::<Result<_, _>>()?;
    let n = model.feature_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut model.weights {
        *v = rng.random_range(-0.01..0.01);
    }
    let scale = 1.0 / images.len() as f64;
    for _ in 0..config.iterations {
        let mut gw = vec![0.0; model.weights.len()];
        let mut gb = vec![0.0; config.classes];
        for (x, &label) in features.iter().zip(labels) {
            let mut d = softmax(&model.logits_of(x));
            d[label] -= 1.0;
            for (k, dk) in d.iter().enumerate() {
                gb[k] += dk;
                for (g, xi) in gw[k * n..(k + 1) * n].iter_mut().zip(x) {
                    *g += dk * xi;
                }
            }
        }
        for (wv, g) in model.weights.iter_mut().zip(&gw) {
            *wv -= config.learning_rate * scale * g;
        }
        for (bv, g) in model.bias.iter_mut().zip(&gb) {
            *bv -= config.learning_rate * scale * g;
        }
    }
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(x, &l)| argmax(&model.logits_of(x)) == l)
        .count();
    if correct != images.len() {
        return Err(VictimError::NotSeparable {
            correct,
            total: images.len(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform_logits_and_closed_form_gradient() {
        let model = ClassifierModel::zeros(16, 16, 8, 3).unwrap();
        let img = Image::filled(16, 16, [0.3, 0.6, 0.9]);
        let logits = model.logits(&img).unwrap();
        assert_eq!(logits, vec![0.0; 3]);
        let p = softmax(&logits);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let (loss, grad) = model.cross_entropy_grad(&img, 1).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        assert!(grad.iter().all(|g| *g == [0.0; 3]));
    }

    #[test]
    fn red_versus_blue_is_learned() {
        let red = Image::filled(16, 16, [1.0, 0.0, 0.0]);
        let blue = Image::filled(16, 16, [0.0, 0.0, 1.0]);
        let model = fit_classifier(&[red.clone(), blue.clone()], &[0, 1], &ClassifierConfig::default(), 3).unwrap();
        assert_eq!(model.predict(&red).unwrap(), 0);
        assert_eq!(model.predict(&blue).unwrap(), 1);
    }

    #[test]
    fn fitting_is_bit_deterministic() {
        let a = Image::filled(16, 16, [0.2, 0.4, 0.1]);
        let b = Image::filled(16, 16, [0.7, 0.1, 0.3]);
        let cfg = ClassifierConfig::default();
        let m1 = fit_classifier(&[a.clone(), b.clone()], &[0, 1], &cfg, 11).unwrap();
        let m2 = fit_classifier(&[a, b], &[0, 1], &cfg, 11).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn inseparable_data_is_an_error() {
        let a = Image::filled(16, 16, [0.5; 3]);
        let err = fit_classifier(&[a.clone(), a], &[0, 1], &ClassifierConfig::default(), 0).unwrap_err();
        assert!(matches!(err, VictimError::NotSeparable { correct: 1, total: 2 }));
    }

    #[test]
    fn resolution_mismatch() {
        let model = ClassifierModel::zeros(16, 16, 8, 2).unwrap();
        assert!(matches!(
            model.logits(&Image::filled(8, 16, [0.0; 3])),
            Err(VictimError::ResolutionMismatch { .. })
        ));
        assert!(ClassifierModel::zeros(12, 16, 8, 2).is_err());
    }

    #[test]
    fn stable_cross_entropy() {
        assert!((cross_entropy(&[1000.0, 0.0], 0)).abs() < 1e-12);
        assert!((cross_entropy(&[0.0, 1000.0], 0) - 1000.0).abs() < 1e-9);
    }
}
