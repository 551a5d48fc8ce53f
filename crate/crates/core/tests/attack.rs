use advtex_core::assets::{load_texture, parse_obj, Mesh, Texture, WrapMode};
use advtex_core::attack::{
    run_attack, Algorithm, AttackConfig, AttackError, AttackScene, RunOptions, RunOutput, Task,
};
use advtex_core::scene_io::{parse_xml, CameraDesc, FrameScene, ObjectDesc};
use advtex_core::scene_model::LightSpec;
use advtex_core::transform::WorldMatrix;
use advtex_core::victim::{ClassifierModel, DetectorConfig, DetectorModel, Victim};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quad `[-1, 1]²` at depth 3 whose uvs cover only the lower half of the texture.
fn half_uv_quad() -> Mesh {
    parse_obj("v 1 -1 0\nv -1 -1 0\nv -1 1 0\nv 1 1 0\nvt 0 0\nvt 1 0\nvt 1 0.5\nvt 0 0.5\nf 1/1 2/2 3/3 4/4\n").unwrap()
}

fn frames() -> Vec<FrameScene> {
    (0..3)
        .map(|k| FrameScene {
            frame: k,
            camera: CameraDesc {
                to_world: WorldMatrix::IDENTITY,
                fov_deg: 60.0,
                width: 16,
                height: 16,
            },
            object: ObjectDesc {
                mesh_path: "quad.obj".into(),
                to_world: WorldMatrix {
                    translation: [0.3 * (f64::from(k) - 1.0), 0.0, 3.0],
                    ..WorldMatrix::IDENTITY
                },
                scale: 1.0,
                texture_path: "textures/initial.pfm".into(),
                uv_tiling: 1.0,
                wrap: WrapMode::Clamp,
            },
            light: LightSpec::new([0.0, 0.0, -1.0], [0.5; 3], [0.4; 3]).unwrap(),
            background: [0.5; 3],
        })
        .collect()
}

fn texture(seed: u64) -> Texture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texels = (0..8 * 8).map(|_| [0, 1, 2].map(|_| rng.random_range(0.1f32..0.9))).collect();
    Texture::new(8, 8, texels, WrapMode::Clamp).unwrap()
}

fn classifier(seed: u64, scale: f64) -> Victim {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ClassifierModel::zeros(16, 16, 4, 2).unwrap();
    for w in &mut m.weights {
        *w = scale * rng.random_range(-1.0..1.0);
    }
    Victim::Classifier(m)
}

fn config(iterations: usize) -> AttackConfig {
    AttackConfig {
        iterations,
        step_size: 0.05,
        budget: 0.3,
        ..AttackConfig::default()
    }
}

#[test]
fn zero_weight_victim_leaves_texture_unchanged() {
    let (frames, mesh, victim) = (frames(), half_uv_quad(), classifier(0, 0.0));
    let scene = AttackScene { frames: &frames, mesh: &mesh, victim: &victim, gimbal_locked_frames: vec![] };
    let initial = texture(1);
    let out = run_attack(&scene, initial.clone(), &config(1), &RunOptions::default()).unwrap();
    assert_eq!(out.state.current, initial);
    assert_eq!(out.state.best, initial);
}

#[test]
fn saved_textures_match_state_and_frames_reference_the_result() {
    let dir = tempfile::tempdir().unwrap();
    let (frames, mesh, victim) = (frames(), half_uv_quad(), classifier(2, 5.0));
    let scene = AttackScene { frames: &frames, mesh: &mesh, victim: &victim, gimbal_locked_frames: vec![1] };
    let options = RunOptions {
        jobs: 2,
        output: Some(RunOutput { root: dir.path().into(), run_dir: "runs/a".into(), save_renders: true }),
    };
    let cfg = config(5);
    let out = run_attack(&scene, texture(3), &cfg, &options).unwrap();
    let run = dir.path().join("runs/a");
    let last = load_texture(&run.join("textures/iter_0005.pfm")).unwrap();
    assert_eq!(last.texels, out.state.current.texels);
    let first = load_texture(&run.join("textures/iter_0000.pfm")).unwrap();
    assert_eq!(first.texels, texture(3).texels);
    for f in &frames {
        let xml = std::fs::read_to_string(run.join(format!("frames/frame_{:04}.xml", f.frame))).unwrap();
        let parsed = parse_xml(&xml).unwrap();
        let saved = load_texture(&dir.path().join(&parsed.object.texture_path)).unwrap();
        assert_eq!(saved.texels, out.state.best.texels);
    }
    assert!(run.join("renders/iter_0004/frame_0002.ppm").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["complete"], true);
    assert_eq!(report["gimbal_locked_frames"][0], 1);
    assert_eq!(report["log"].as_array().unwrap().len(), 5);
}

#[test]
fn best_loss_is_the_minimum_of_the_logged_losses() {
    let (frames, mesh, victim) = (frames(), half_uv_quad(), classifier(4, 5.0));
    let scene = AttackScene { frames: &frames, mesh: &mesh, victim: &victim, gimbal_locked_frames: vec![] };
    let out = run_attack(&scene, texture(5), &config(6), &RunOptions::default()).unwrap();
    let logged = out.state.log.iter().map(|l| l.loss).fold(f64::INFINITY, f64::min);
    assert!(out.state.best_loss <= logged);
    assert!(out.state.best_loss < out.report.benign_loss);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (frames, mesh, victim) = (frames(), half_uv_quad(), classifier(6, 5.0));
    let scene = AttackScene { frames: &frames, mesh: &mesh, victim: &victim, gimbal_locked_frames: vec![] };
    for algorithm in [Algorithm::Pgd, Algorithm::AutoPgd] {
        let cfg = AttackConfig { algorithm, ..config(8) };
        let a = run_attack(&scene, texture(7), &cfg, &RunOptions { jobs: 1, output: None }).unwrap();
        let b = run_attack(&scene, texture(7), &cfg, &RunOptions { jobs: 3, output: None }).unwrap();
        assert_eq!(a.state.best, b.state.best);
        assert_eq!(a.report, b.report);
    }
}

#[test]
fn unsampled_texels_are_untouched() {
    let (frames, mesh, victim) = (frames(), half_uv_quad(), classifier(8, 5.0));
    let scene = AttackScene { frames: &frames, mesh: &mesh, victim: &victim, gimbal_locked_frames: vec![] };
    let initial = texture(9);
    let out = run_attack(&scene, initial.clone(), &config(5), &RunOptions::default()).unwrap();
    assert_eq!(out.report.locality_ok, Some(true));
    // uvs stop at v = 0.5: rows 5..8 lie more than one texel beyond it
    for j in 5..8 {
        for i in 0..8 {
            assert!(!out.sampled[j * 8 + i]);
            assert_eq!(out.state.best.get(i, j), initial.get(i, j));
        }
    }
    assert_ne!(out.state.best, initial);
}

#[test]
fn batches_cycle_through_frames() {
    let (frames, mesh, victim) = (frames(), half_uv_quad(), classifier(10, 5.0));
    let scene = AttackScene { frames: &frames, mesh: &mesh, victim: &victim, gimbal_locked_frames: vec![] };
    let cfg = AttackConfig { batch: 1, seed: 3, ..config(6) };
    let a = run_attack(&scene, texture(11), &cfg, &RunOptions::default()).unwrap();
    let b = run_attack(&scene, texture(11), &cfg, &RunOptions::default()).unwrap();
    assert_eq!(a.state.best, b.state.best);
    assert!(a.report.log.iter().all(|l| l.metric == 0.0 || l.metric == 1.0));
}

#[test]
fn non_finite_victim_output_aborts() {
    let (frames, mesh) = (frames(), half_uv_quad());
    let mut m = ClassifierModel::zeros(16, 16, 4, 2).unwrap();
    m.weights[0] = f64::NAN;
    let victim = Victim::Classifier(m);
    let scene = AttackScene { frames: &frames, mesh: &mesh, victim: &victim, gimbal_locked_frames: vec![] };
    let err = run_attack(&scene, texture(12), &config(2), &RunOptions::default()).unwrap_err();
    assert!(matches!(err, AttackError::NonFinite { .. }), "{err}");
}

#[test]
fn victim_must_match_the_task() {
    let (frames, mesh, victim) = (frames(), half_uv_quad(), classifier(13, 1.0));
    let scene = AttackScene { frames: &frames, mesh: &mesh, victim: &victim, gimbal_locked_frames: vec![] };
    let cfg = AttackConfig { task: Task::Detection, ..config(1) };
    assert!(matches!(
        run_attack(&scene, texture(14), &cfg, &RunOptions::default()),
        Err(AttackError::Config(_))
    ));
}

#[test]
fn detection_attack_lowers_objectness() {
    let (frames, mesh) = (frames(), half_uv_quad());
    let cfg = DetectorConfig { grid: 4, ..DetectorConfig::default() };
    let mut m = DetectorModel::new(16, 16, &cfg, [0.5; 3]).unwrap();
    m.weights = [0.0, 0.0, 0.0, 30.0, 30.0, 30.0];
    m.bias = -0.5;
    let victim = Victim::Detector(m);
    let scene = AttackScene { frames: &frames, mesh: &mesh, victim: &victim, gimbal_locked_frames: vec![] };
    let cfg = AttackConfig { task: Task::Detection, budget: 1.0, ..config(10) };
    let out = run_attack(&scene, texture(15), &cfg, &RunOptions::default()).unwrap();
    assert!(out.state.best_loss < out.report.benign_loss);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn budget_holds_at_every_iteration(seed in 0u64..1000, budget in 0.01f64..1.0, ratio in 0.1f64..1.0, auto in any::<bool>()) {
        let (frames, mesh, victim) = (frames(), half_uv_quad(), classifier(seed, 5.0));
        let scene = AttackScene { frames: &frames, mesh: &mesh, victim: &victim, gimbal_locked_frames: vec![] };
        let cfg = AttackConfig {
            algorithm: if auto { Algorithm::AutoPgd } else { Algorithm::Pgd },
            iterations: 6,
            budget,
            step_size: budget * ratio,
            ..AttackConfig::default()
        };
        let initial = texture(seed + 1);
        let out = run_attack(&scene, initial.clone(), &cfg, &RunOptions::default()).unwrap();
        prop_assert!(out.report.budget_ok);
        for l in &out.state.log {
            prop_assert!(l.max_deviation <= budget + 1e-9);
        }
        for t in [&out.state.best, &out.state.current] {
            for (a, b) in t.texels.iter().flatten().zip(initial.texels.iter().flatten()) {
                prop_assert!((0.0..=1.0).contains(a));
                prop_assert!((f64::from(*a) - f64::from(*b)).abs() <= budget + 1e-9);
            }
        }
    }
}
