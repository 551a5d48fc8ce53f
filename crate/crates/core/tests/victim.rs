use advtex_core::assets::Image;
use advtex_core::victim::{ClassifierModel, DetectorConfig, DetectorModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image {
        width: w,
        height: h,
        pixels: (0..w * h).map(|_| [0, 1, 2].map(|_| rng.random_range(0.0..1.0))).collect(),
    }
}

/// Central differences of `f` at every pixel channel, compared against `grad`.
fn check_against_fd(image: &Image, grad: &[[f64; 3]], f: impl Fn(&Image) -> f64) -> f64 {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for p in 0..image.pixels.len() {
        for c in 0..3 {
            let mut plus = image.clone();
            let mut minus = image.clone();
            plus.pixels[p][c] += h;
            minus.pixels[p][c] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let g = grad[p][c];
            if g.abs() > 1e-8 {
                worst = worst.max((fd - g).abs() / g.abs());
            } else {
                assert!(fd.abs() < 1e-8, "pixel {p} channel {c}: fd {fd} vs analytic {g}");
            }
        }
    }
    worst
}

#[test]
fn classifier_input_grad_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut model = ClassifierModel::zeros(16, 16, 8, 2).unwrap();
    for w in &mut model.weights {
        *w = rng.random_range(-3.0..3.0);
    }
    model.bias = vec![0.3, -0.2];
    for i in 0..10 {
        let img = random_image(&mut rng, 16, 16);
        let label = i % 2;
        let (_, grad) = model.cross_entropy_grad(&img, label).unwrap();
        let worst = check_against_fd(&img, &grad, |x| model.cross_entropy_grad(x, label).unwrap().0);
        assert!(worst < 1e-6, "image {i}: relative error {worst}");
    }
}

#[test]
fn detector_input_grad_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let config = DetectorConfig {
        grid: 4,
        ..DetectorConfig::default()
    };
    let mut model = DetectorModel::new(16, 16, &config, [0.5, 0.45, 0.55]).unwrap();
    for w in &mut model.weights {
        *w = rng.random_range(-4.0..4.0);
    }
    model.bias = -0.7;
    for i in 0..10 {
        let img = random_image(&mut rng, 16, 16);
        let cells: Vec<usize> = (0..16).filter(|c| (c + i) % 3 != 0).collect();
        let (_, grad) = model.objectness_grad(&img, &cells).unwrap();
        let worst = check_against_fd(&img, &grad, |x| model.objectness_grad(x, &cells).unwrap().0);
        assert!(worst < 1e-6, "image {i}: relative error {worst}");
    }
}
