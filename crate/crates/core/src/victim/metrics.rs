use super::detector::Detection;
use super::VictimError;
use crate::renderer::PixelBox;

/// Fraction of predictions equal to their label.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, VictimError> {
    if predictions.is_empty() {
        return Err(VictimError::EmptyFrameSet);
    }
    if predictions.len() != labels.len() {
        return Err(VictimError::InvalidConfig("one label per prediction required".into()));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Average precision with one ground-truth box per frame and at most one detection per frame.
///
/// Detections are ranked by confidence, ties broken by frame index. A
/// detection is a true positive when its IoU with its frame's box reaches
/// `iou_threshold`. Precision is interpolated over all recall points.
pub fn average_precision(
    detections: &[Option<Detection>],
    ground_truth: &[PixelBox],
    iou_threshold: f64,
) -> Result<f64, VictimError> {
    if ground_truth.is_empty() {
        return Err(VictimError::EmptyFrameSet);
    }
    if detections.len() != ground_truth.len() {
        return Err(VictimError::InvalidConfig("one detection slot per frame required".into()));
    }
    let mut ranked: Vec<(usize, f64, bool)> = detections
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.map(|d| (i, d.confidence, d.bbox.iou(&ground_truth[i]) >= iou_threshold)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let total = ground_truth.len() as f64;
    let mut points = Vec::with_capacity(ranked.len());
    let mut tp = 0.0;
    for (k, &(_, _, hit)) in ranked.iter().enumerate() {
        if hit {
            tp += 1.0;
        }
        points.push((tp / total, tp / (k + 1) as f64));
    }
    // precision envelope from the right
    for k in (0..points.len().saturating_sub(1)).rev() {
        points[k].1 = points[k].1.max(points[k + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x0: f64) -> PixelBox {
        PixelBox { x0, y0: 0.0, x1: x0 + 10.0, y1: 10.0 }
    }

    fn det(x0: f64, confidence: f64) -> Option<Detection> {
        Some(Detection { bbox: b(x0), confidence })
    }

    #[test]
    fn two_of_twenty_one() {
        let mut preds = vec![0; 21];
        preds[3] = 1;
        preds[17] = 1;
        let acc = accuracy(&preds, &[1; 21]).unwrap();
        assert_eq!((acc * 10000.0).round() / 100.0, 9.52);
    }

    #[test]
    fn all_correct_detections() {
        let gt = vec![b(0.0), b(5.0), b(20.0)];
        let dets = vec![det(0.0, 0.9), det(5.0, 0.6), det(20.0, 0.7)];
        assert_eq!(average_precision(&dets, &gt, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_curve() {
        // A: correct at 0.9; B: wrong location at 0.8
        let gt = vec![b(0.0), b(0.0)];
        let dets = vec![det(0.0, 0.9), det(30.0, 0.8)];
        assert_eq!(average_precision(&dets, &gt, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn missing_detections_lower_recall() {
        let gt = vec![b(0.0); 4];
        let dets = vec![det(0.0, 0.9), None, None, None];
        assert_eq!(average_precision(&dets, &gt, 0.5).unwrap(), 0.25);
        assert_eq!(average_precision(&[None, None], &gt[..2], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn interpolated_precision() {
        // ranks: TP, FP, TP over 3 ground truths -> 1/3 * 1 + 1/3 * 2/3
        let gt = vec![b(0.0); 3];
        let dets = vec![det(0.0, 0.9), det(50.0, 0.8), det(0.0, 0.7)];
        let ap = average_precision(&dets, &gt, 0.5).unwrap();
        assert!((ap - (1.0 / 3.0 + 2.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_frame_set() {
        assert!(matches!(accuracy(&[], &[]), Err(VictimError::EmptyFrameSet)));
        assert!(matches!(average_precision(&[], &[], 0.5), Err(VictimError::EmptyFrameSet)));
    }

    proptest! {
        #[test]
        fn accuracy_is_permutation_invariant(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..30),
            rot in 0usize..30,
        ) {
            let (p, l): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            let (rp, rl): (Vec<_>, Vec<_>) = rotated.into_iter().unzip();
            prop_assert_eq!(accuracy(&p, &l).unwrap(), accuracy(&rp, &rl).unwrap());
        }

        #[test]
        fn ap_lies_in_unit_interval(
            frames in prop::collection::vec((any::<bool>(), 0.0f64..1.0, any::<bool>()), 1..20),
        ) {
            let gt: Vec<PixelBox> = frames.iter().map(|_| b(0.0)).collect();
            let dets: Vec<Option<Detection>> = frames
                .iter()
                .map(|&(present, c, hit)| present.then(|| Detection { bbox: b(if hit { 0.0 } else { 40.0 }), confidence: c }))
                .collect();
            let ap = average_precision(&dets, &gt, 0.5).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
        }
    }
}
