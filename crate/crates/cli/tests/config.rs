use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use rgbdm::geometry::PinholeCamera;
use rgbdm::simulator::scenes::BuiltinScene;
use rgbdm::simulator::{IrObservation, NoiseConfig};
use rgbdm_cli::config::{PipelineConfig, SceneSource, SegmentationMode, TrajectorySource};
use rgbdm_cli::{formats, CliError};
use tempfile::TempDir;

fn line_of(err: CliError) -> Option<usize> {
    match err {
        CliError::Config { line, .. } => line,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn default_config_round_trips() {
    let c = PipelineConfig::default();
    assert_eq!(PipelineConfig::parse(&c.to_text()).unwrap(), c);
    assert_eq!(PipelineConfig::parse("").unwrap(), c);
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let c = PipelineConfig::parse("# header\n\nscene = four-material-room # trailing\nsegmentation = multi\n").unwrap();
    assert_eq!(c.scene, SceneSource::Builtin(BuiltinScene::FourMaterialRoom));
    assert_eq!(c.segmentation, SegmentationMode::Multi);
}

#[test]
fn errors_point_at_the_offending_line() {
    assert_eq!(line_of(PipelineConfig::parse("ir_frames = 10\nbogus = 1\n").unwrap_err()), Some(2));
    assert_eq!(line_of(PipelineConfig::parse("\n\nno equals sign\n").unwrap_err()), Some(3));
    assert_eq!(line_of(PipelineConfig::parse("rgb_every = 2\nrgb_every = 3\n").unwrap_err()), Some(2));
    assert_eq!(line_of(PipelineConfig::parse("scene = nowhere.txt\n").unwrap_err()), Some(1));
    assert_eq!(line_of(PipelineConfig::parse("x\n").unwrap_err()), Some(1));
    // range checks report the key's line
    assert_eq!(line_of(PipelineConfig::parse("\noutlier_fraction = 1.5\n").unwrap_err()), Some(2));
    assert_eq!(line_of(PipelineConfig::parse("\n\ncamera = 500 500 300 200 0 480\n").unwrap_err()), Some(3));
    assert_eq!(line_of(PipelineConfig::parse("saturation_level = 0\n").unwrap_err()), Some(1));
}

#[test]
fn referenced_files_must_exist() {
    let dir = TempDir::new().unwrap();
    let trajectory = dir.path().join("t.txt");
    let text = format!("trajectory = {}\n", trajectory.display());
    assert!(PipelineConfig::parse(&text).is_err());
    fs::write(&trajectory, "trajectory v1\n").unwrap();
    let c = PipelineConfig::parse(&text).unwrap();
    assert_eq!(c.trajectory, TrajectorySource::File(trajectory));
    assert_eq!(PipelineConfig::parse(&c.to_text()).unwrap(), c);
}

#[test]
fn observation_files_round_trip_exactly() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("ir.txt");
    let obs = vec![
        IrObservation {
            vertex_id: 3,
            frame_time: 0.1 + 0.2,
            led_index: 9,
            intensity: 1.0 / 3.0,
            pixel: [12.25, 1e-17],
        },
        IrObservation {
            vertex_id: 0,
            frame_time: 7.0,
            led_index: 0,
            intensity: 0.0,
            pixel: [693.999, 0.5],
        },
    ];
    formats::write_ir(&path, &obs).unwrap();
    assert_eq!(formats::read_ir(&path).unwrap(), obs);
}

#[test]
fn scene_files_round_trip_exactly() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("scene.txt");
    let scene = BuiltinScene::GymballCorner.build(300);
    formats::write_scene(&path, &scene.vertices, &scene.materials).unwrap();
    let (vertices, materials) = formats::read_scene(&path).unwrap();
    assert_eq!(vertices, scene.vertices);
    assert_eq!(materials, scene.materials);
    let trajectory = BuiltinScene::TwoSphere.trajectory(20);
    let tpath = dir.path().join("trajectory.txt");
    formats::write_trajectory(&tpath, &trajectory).unwrap();
    let back = formats::read_trajectory(&tpath).unwrap();
    for (a, b) in back.iter().zip(&trajectory) {
        assert_eq!(a.timestamp, b.timestamp);
        assert_eq!(a.pose.translation, b.pose.translation);
        assert!(a.pose.rotation.angle_to(&b.pose.rotation) < 1e-12);
    }
}

#[test]
fn bad_rows_report_file_and_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("truth.txt");
    fs::write(&path, "groundtruth v1\n0 1\n# note\n1 x\n").unwrap();
    match formats::read_truth(&path).unwrap_err() {
        CliError::BadInput { path: p, line, .. } => {
            assert_eq!(p, path);
            assert_eq!(line, 4);
        }
        other => panic!("unexpected {other}"),
    }
    let missing = dir.path().join("absent.txt");
    assert!(matches!(formats::read_truth(&missing), Err(CliError::MissingInput(p)) if p == missing));
}

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

prop_compose! {
    fn arb_config()(
        scene in prop::sample::select(BuiltinScene::ALL.to_vec()),
        vertex_count in 1usize..100_000,
        fx in finite(10.0, 2000.0),
        fy in finite(10.0, 2000.0),
        u in finite(0.01, 0.99),
        v in finite(0.01, 0.99),
        width in 2u32..4096,
        height in 2u32..4096,
        extrinsic in prop::array::uniform7(finite(-1.0, 1.0)),
        ir_frames in 1usize..1000,
        rgb_every in 1usize..10,
        exposure in finite(1e-3, 10.0),
        saturation in finite(1e-3, 100.0),
        jitter in prop::array::uniform4(finite(0.0, 5.0)),
        fractions in prop::array::uniform2(finite(0.0, 1.0)),
        seed in any::<u64>(),
        budget in 1usize..1_000_000,
        radius in finite(1e-4, 1.0),
        multi in any::<bool>(),
        resolution in 1u32..1024,
        out in "[a-z][a-z0-9_/]{0,12}",
    ) -> PipelineConfig {
        let (cx, cy) = (u * width as f64, v * height as f64);
        let mut extrinsic = extrinsic;
        extrinsic[0] += 2.0;
        PipelineConfig {
            scene: SceneSource::Builtin(scene),
            vertex_count,
            camera: PinholeCamera { fx, fy, cx, cy, width, height },
            ir_extrinsic: extrinsic,
            ir_frames,
            rgb_every,
            rgb_exposure: exposure,
            saturation_level: saturation,
            noise: NoiseConfig {
                normal_jitter_deg: jitter[0],
                pose_translation_jitter_m: jitter[1],
                pose_rotation_jitter_deg: jitter[2],
                intensity_multiplicative_sigma: jitter[3],
                outlier_fraction: fractions[0],
                dropout_fraction: fractions[1],
                rng_seed: seed,
            },
            sample_budget: budget,
            diffusion_radius: radius,
            segmentation: if multi { SegmentationMode::Multi } else { SegmentationMode::Two },
            sphere_resolution: resolution,
            output_dir: PathBuf::from(out),
            ..PipelineConfig::default()
        }
    }
}

proptest! {
    #[test]
    fn parse_serialize_parse_is_identity(c in arb_config()) {
        let text = c.to_text();
        let parsed = PipelineConfig::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &c);
        prop_assert_eq!(parsed.to_text(), text);
    }
}
