use advtex_bench::{grid_mesh, scene, texture};
use advtex_core::assets::Image;
use advtex_core::attack::{pgd_step, AttackConfig, AttackState};
use advtex_core::renderer::{render, TexGradient};
use advtex_core::victim::{ClassifierModel, DetectorConfig, DetectorModel};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn renderer(c: &mut Criterion) {
    let mut group = c.benchmark_group("render");
    let tex = texture(64);
    for (grid, size) in [(2, 56), (8, 56), (8, 128)] {
        let mesh = grid_mesh(grid);
        let fs = scene(size);
        let id = format!("{}tri_{size}px", 2 * grid * grid);
        group.bench_function(BenchmarkId::new("forward", &id), |b| {
            b.iter(|| render(black_box(&fs), &mesh, &tex).unwrap())
        });
        let r = render(&fs, &mesh, &tex).unwrap();
        let d_image = vec![[1.0; 3]; r.image.pixels.len()];
        group.bench_function(BenchmarkId::new("backward", &id), |b| {
            b.iter(|| r.backward(black_box(&d_image), (64, 64)).unwrap())
        });
    }
    group.finish();
}

fn victims(c: &mut Criterion) {
    let image = Image::filled(56, 56, [0.3, 0.6, 0.4]);
    let mut classifier = ClassifierModel::zeros(56, 56, 8, 2).unwrap();
    for (k, w) in classifier.weights.iter_mut().enumerate() {
        *w = ((k % 7) as f64 - 3.0) * 0.01;
    }
    c.bench_function("classifier_grad_56px", |b| {
        b.iter(|| classifier.cross_entropy_grad(black_box(&image), 1).unwrap())
    });
    let detector = DetectorModel::new(56, 56, &DetectorConfig { grid: 14, ..Default::default() }, [0.5; 3]).unwrap();
    let cells: Vec<usize> = (0..detector.cell_count()).collect();
    c.bench_function("detector_grad_56px", |b| {
        b.iter(|| detector.objectness_grad(black_box(&image), &cells).unwrap())
    });
}

fn attack_step(c: &mut Criterion) {
    let tex = texture(64);
    let config = AttackConfig::default();
    let state = AttackState::new(tex.clone(), &config);
    let mut grad = TexGradient::zeros(64, 64);
    for (k, g) in grad.values.iter_mut().enumerate() {
        *g = [k as f64 % 3.0 - 1.0, 0.5, -0.5];
    }
    c.bench_function("pgd_step_64x64", |b| b.iter(|| pgd_step(black_box(&state), &grad, &config).unwrap()));
}

criterion_group!(benches, renderer, victims, attack_step);
criterion_main!(benches);
