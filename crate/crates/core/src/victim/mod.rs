//! Small, exactly differentiable victim models: a pooled linear classifier and
//! a grid objectness detector, with deterministic fitting, closed-form input
//! gradients and the accuracy / average-precision metrics.
//!
//! Weights are stored in a little-endian container:
//!
//! ```text
//! "ADVM" | u32 version (1) | u32 kind (0 classifier, 1 detector) | body
//! classifier body: u32 width, height, downsample, classes | u64 seed
//!                  | f64 weights[classes * features] | f64 bias[classes]
//! detector body:   u32 width, height, grid | u64 seed | f64 threshold, iou_threshold
//!                  | f64 background[3] | f64 weights[6] | f64 bias
//! ```

mod classifier;
mod detector;
mod metrics;

use thiserror::Error;

use crate::assets::Image;

pub use classifier::{argmax, cross_entropy, fit_classifier, softmax, ClassifierConfig, ClassifierModel};
pub use detector::{fit_detector, Detection, DetectorConfig, DetectorModel};
pub use metrics::{accuracy, average_precision};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"ADVM";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VictimError {
    #[error("image is {got:?}, model expects {expected:?}")]
    ResolutionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("training set not separated after the iteration budget: {correct}/{total} correct; simplify the scene")]
    NotSeparable { correct: usize, total: usize },
    #[error("empty frame set")]
    EmptyFrameSet,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed weights file: {0}")]
    Format(String),
}

pub(crate) fn check_resolution(image: &Image, width: usize, height: usize) -> Result<(), VictimError> {
    if image.width != width || image.height != height || image.pixels.len() != width * height {
        return Err(VictimError::ResolutionMismatch {
            expected: (width, height),
            got: (image.width, image.height),
        });
    }
    Ok(())
}

/// Either victim, behind one serialization format.
#[derive(Debug, Clone, PartialEq)]
pub enum Victim {
    Classifier(ClassifierModel),
    Detector(DetectorModel),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], VictimError> {
        if self.0.len() < n {
            return Err(VictimError::Format("truncated".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn u32(&mut self) -> Result<usize, VictimError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64, VictimError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, VictimError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| VictimError::Format("size overflow".into()))?)?;
        let out: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(VictimError::Format("non-finite value".into()));
        }
        Ok(out)
    }
}

impl Victim {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(WEIGHTS_MAGIC.to_vec());
        w.u32(WEIGHTS_VERSION as usize);
        match self {
            Victim::Classifier(m) => {
                w.u32(0);
                for v in [m.width, m.height, m.downsample, m.classes] {
                    w.u32(v);
                }
                w.u64(m.seed);
                w.f64s(&m.weights);
                w.f64s(&m.bias);
            }
            Victim::Detector(m) => {
                w.u32(1);
                for v in [m.width, m.height, m.grid] {
                    w.u32(v);
                }
                w.u64(m.seed);
                w.f64s(&[m.threshold, m.iou_threshold]);
                w.f64s(&m.background);
                w.f64s(&m.weights);
                w.f64s(&[m.bias]);
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VictimError> {
        let mut r = Reader(bytes);
        if r.take(4)? != WEIGHTS_MAGIC {
            return Err(VictimError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != WEIGHTS_VERSION as usize {
            return Err(VictimError::Format(format!("unsupported version {version}")));
        }
        let victim = match r.u32()? {
            0 => {
                let (width, height, downsample, classes) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
                let mut m = ClassifierModel::zeros(width, height, downsample, classes)?;
                m.seed = r.u64()?;
                m.weights = r.f64s(m.weights.len())?;
                m.bias = r.f64s(classes)?;
                Victim::Classifier(m)
            }
            1 => {
                let (width, height, grid) = (r.u32()?, r.u32()?, r.u32()?);
                let seed = r.u64()?;
                let t = r.f64s(2)?;
                let config = DetectorConfig {
                    grid,
                    threshold: t[0],
                    iou_threshold: t[1],
                    ..DetectorConfig::default()
                };
                let bg = r.f64s(3)?;
                let mut m = DetectorModel::new(width, height, &config, [bg[0], bg[1], bg[2]])?;
                m.seed = seed;
                m.weights.copy_from_slice(&r.f64s(detector::FEATURES)?);
                m.bias = r.f64s(1)?[0];
                Victim::Detector(m)
            }
            k => return Err(VictimError::Format(format!("unknown model kind {k}"))),
        };
        if !r.0.is_empty() {
            return Err(VictimError::Format("trailing bytes".into()));
        }
        Ok(victim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classifier() -> ClassifierModel {
        let mut m = ClassifierModel::zeros(16, 8, 8, 2).unwrap();
        m.weights.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64 * 0.25 - 1.0);
        m.bias = vec![0.5, -0.125];
        m.seed = 99;
        m
    }

    #[test]
    fn classifier_container_round_trip() {
        let v = Victim::Classifier(classifier());
        let bytes = v.to_bytes();
        assert_eq!(&bytes[..4], b"ADVM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(Victim::from_bytes(&bytes).unwrap(), v);
    }

    #[test]
    fn detector_container_round_trip() {
        let mut m = DetectorModel::new(28, 28, &DetectorConfig::default(), [0.5, 0.4, 0.3]).unwrap();
        m.weights = [1.0, -2.0, 3.0, 0.5, 0.25, -0.75];
        m.bias = -1.5;
        m.seed = 7;
        let v = Victim::Detector(m);
        assert_eq!(Victim::from_bytes(&v.to_bytes()).unwrap(), v);
    }

    #[test]
    fn corrupt_containers_are_rejected() {
        let bytes = Victim::Classifier(classifier()).to_bytes();
        assert!(Victim::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Victim::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(Victim::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Victim::from_bytes(&long).is_err());
    }
}
