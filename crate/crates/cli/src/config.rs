//! Flat `key = value` pipeline configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rgbdm::geometry::{LedRig, PinholeCamera, Pose, Quaternion, TimedPose, Vec3};
use rgbdm::simulator::scenes::{default_camera, default_ir_extrinsic, depth_frames_for, BuiltinScene, OrbitSpec};
use rgbdm::simulator::{make_default_rig, NoiseConfig, ScanConfig};

use crate::error::{CliError, Result};
use crate::formats::parse_field;

#[derive(Debug, Clone, PartialEq)]
pub enum SceneSource {
    Builtin(BuiltinScene),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectorySource {
    /// Orbit around the scene, sized for the IR frame count.
    Orbit,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RigSource {
    Default,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentationMode {
    Two,
    Multi,
}

impl SegmentationMode {
    fn name(&self) -> &'static str {
        match self {
            SegmentationMode::Two => "two",
            SegmentationMode::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scene: SceneSource,
    /// Vertex count of built-in scenes.
    pub vertex_count: usize,
    /// Replaces the scene's material list.
    pub materials: Option<PathBuf>,
    pub trajectory: TrajectorySource,
    pub rig: RigSource,
    pub camera: PinholeCamera,
    /// IR camera in the depth camera frame: `qw qx qy qz tx ty tz`.
    pub ir_extrinsic: [f64; 7],
    pub ir_frames: usize,
    pub rgb_every: usize,
    pub rgb_exposure: f64,
    pub saturation_level: f64,
    pub noise: NoiseConfig,
    pub sample_budget: usize,
    pub diffusion_radius: f64,
    pub segmentation: SegmentationMode,
    pub sphere_resolution: u32,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let e = default_ir_extrinsic();
        let [qw, qx, qy, qz] = e.rotation.components();
        let t = e.translation;
        Self {
            scene: SceneSource::Builtin(BuiltinScene::TwoSphere),
            vertex_count: 5000,
            materials: None,
            trajectory: TrajectorySource::Orbit,
            rig: RigSource::Default,
            camera: default_camera(),
            ir_extrinsic: [qw, qx, qy, qz, t.x, t.y, t.z],
            ir_frames: 200,
            rgb_every: 3,
            rgb_exposure: 1.0,
            saturation_level: 4.0,
            noise: NoiseConfig::noiseless(1),
            sample_budget: 100_000,
            diffusion_radius: 0.01,
            segmentation: SegmentationMode::Two,
            sphere_resolution: 256,
            output_dir: PathBuf::from("out"),
        }
    }
}

const KEYS: &[&str] = &[
    "scene",
    "vertex_count",
    "materials",
    "trajectory",
    "rig",
    "camera",
    "ir_extrinsic",
    "ir_frames",
    "rgb_every",
    "rgb_exposure",
    "saturation_level",
    "normal_jitter_deg",
    "pose_translation_jitter_m",
    "pose_rotation_jitter_deg",
    "intensity_sigma",
    "outlier_fraction",
    "dropout_fraction",
    "rng_seed",
    "sample_budget",
    "diffusion_radius",
    "segmentation",
    "sphere_resolution",
    "output_dir",
];

fn existing(value: &str) -> std::result::Result<PathBuf, String> {
    let p = PathBuf::from(value);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("file '{value}' does not exist"))
    }
}

fn numbers<const N: usize>(value: &str, what: &str) -> std::result::Result<[f64; N], String> {
    let fields: Vec<&str> = value.split_whitespace().collect();
    if fields.len() != N {
        return Err(format!("{what} needs {N} numbers, found {}", fields.len()));
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = parse_field(f, what)?;
    }
    Ok(out)
}

fn scalar<T: FromStr>(value: &str, key: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    parse_field(value, key)
}

impl PipelineConfig {
    /// Parses config text. Keys may appear at most once; missing keys keep
    /// their defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut lines: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::at_line(no, format!("expected 'key = value', found '{line}'")));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(key) = KEYS.iter().copied().find(|k| *k == key) else {
                return Err(CliError::at_line(no, format!("unknown key '{key}'")));
            };
            if let Some(first) = lines.insert(key, no) {
                return Err(CliError::at_line(no, format!("key '{key}' already set on line {first}")));
            }
            config.apply(key, value).map_err(|m| CliError::at_line(no, m))?;
        }
        config
            .validate()
            .map_err(|(key, msg)| match lines.get(key) {
                Some(no) => CliError::at_line(*no, msg),
                None => CliError::config(msg),
            })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Config {
                path: Some(path.to_path_buf()),
                line: None,
                msg: "file not found".into(),
            },
            _ => CliError::io(path, e),
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config { line, msg, .. } => CliError::Config {
                path: Some(path.to_path_buf()),
                line,
                msg,
            },
            other => other,
        })
    }

    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "scene" => {
                self.scene = match BuiltinScene::from_str(value) {
                    Ok(b) => SceneSource::Builtin(b),
                    Err(_) if Path::new(value).is_file() => SceneSource::File(PathBuf::from(value)),
                    Err(e) => return Err(format!("{e}, and no scene file '{value}' exists")),
                }
            }
            "vertex_count" => self.vertex_count = scalar(value, key)?,
            "materials" => self.materials = Some(existing(value)?),
            "trajectory" => {
                self.trajectory = match value {
                    "orbit" => TrajectorySource::Orbit,
                    path => TrajectorySource::File(existing(path)?),
                }
            }
            "rig" => {
                self.rig = match value {
                    "default" => RigSource::Default,
                    path => RigSource::File(existing(path)?),
                }
            }
            "camera" => {
                let [fx, fy, cx, cy, w, h] = numbers::<6>(value, key)?;
                let dim = |d: f64| {
                    if d >= 1.0 && d.fract() == 0.0 && d <= u32::MAX as f64 {
                        Ok(d as u32)
                    } else {
                        Err(format!("camera size {d} must be a positive integer"))
                    }
                };
                self.camera = PinholeCamera {
                    fx,
                    fy,
                    cx,
                    cy,
                    width: dim(w)?,
                    height: dim(h)?,
                };
            }
            "ir_extrinsic" => self.ir_extrinsic = numbers::<7>(value, key)?,
            "ir_frames" => self.ir_frames = scalar(value, key)?,
            "rgb_every" => self.rgb_every = scalar(value, key)?,
            "rgb_exposure" => self.rgb_exposure = scalar(value, key)?,
            "saturation_level" => self.saturation_level = scalar(value, key)?,
            "normal_jitter_deg" => self.noise.normal_jitter_deg = scalar(value, key)?,
            "pose_translation_jitter_m" => self.noise.pose_translation_jitter_m = scalar(value, key)?,
            "pose_rotation_jitter_deg" => self.noise.pose_rotation_jitter_deg = scalar(value, key)?,
            "intensity_sigma" => self.noise.intensity_multiplicative_sigma = scalar(value, key)?,
            "outlier_fraction" => self.noise.outlier_fraction = scalar(value, key)?,
            "dropout_fraction" => self.noise.dropout_fraction = scalar(value, key)?,
            "rng_seed" => self.noise.rng_seed = scalar(value, key)?,
            "sample_budget" => self.sample_budget = scalar(value, key)?,
            "diffusion_radius" => self.diffusion_radius = scalar(value, key)?,
            "segmentation" => {
                self.segmentation = match value {
                    "two" => SegmentationMode::Two,
                    "multi" => SegmentationMode::Multi,
                    other => return Err(format!("segmentation '{other}' (expected two or multi)")),
                }
            }
            "sphere_resolution" => self.sphere_resolution = scalar(value, key)?,
            "output_dir" => {
                if value.is_empty() {
                    return Err("output_dir is empty".into());
                }
                self.output_dir = PathBuf::from(value);
            }
            _ => unreachable!("key list and match arms agree"),
        }
        Ok(())
    }

    /// Checks ranges; errors name the offending key.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let positive = |key: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err((key, format!("{key} = {v} must be positive")))
            }
        };
        let at_least_one = |key: &'static str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err((key, format!("{key} must be >= 1")))
            }
        };
        at_least_one("vertex_count", self.vertex_count)?;
        at_least_one("ir_frames", self.ir_frames)?;
        at_least_one("rgb_every", self.rgb_every)?;
        at_least_one("sample_budget", self.sample_budget)?;
        at_least_one("sphere_resolution", self.sphere_resolution as usize)?;
        positive("rgb_exposure", self.rgb_exposure)?;
        positive("saturation_level", self.saturation_level)?;
        positive("diffusion_radius", self.diffusion_radius)?;
        self.camera.validate().map_err(|e| ("camera", e.to_string()))?;
        let q = &self.ir_extrinsic[..4];
        if !self.ir_extrinsic.iter().all(|v| v.is_finite()) || q.iter().all(|v| *v == 0.0) {
            return Err(("ir_extrinsic", "ir_extrinsic needs a finite, non-zero quaternion".into()));
        }
        self.noise.validate().map_err(|e| {
            let msg = e.to_string();
            let key = [
                ("normal_jitter", "normal_jitter_deg"),
                ("translation", "pose_translation_jitter_m"),
                ("rotation", "pose_rotation_jitter_deg"),
                ("intensity", "intensity_sigma"),
                ("outlier", "outlier_fraction"),
                ("dropout", "dropout_fraction"),
            ]
            .into_iter()
            .find(|(needle, _)| msg.contains(needle))
            .map_or("rng_seed", |(_, key)| key);
            (key, msg)
        })
    }

    /// Serializes every key, so parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let path = |p: &Path| p.display().to_string();
        let scene = match &self.scene {
            SceneSource::Builtin(b) => b.name().to_string(),
            SceneSource::File(p) => path(p),
        };
        let _ = writeln!(s, "scene = {scene}");
        let _ = writeln!(s, "vertex_count = {}", self.vertex_count);
        if let Some(m) = &self.materials {
            let _ = writeln!(s, "materials = {}", path(m));
        }
        let trajectory = match &self.trajectory {
            TrajectorySource::Orbit => "orbit".to_string(),
            TrajectorySource::File(p) => path(p),
        };
        let _ = writeln!(s, "trajectory = {trajectory}");
        let rig = match &self.rig {
            RigSource::Default => "default".to_string(),
            RigSource::File(p) => path(p),
        };
        let _ = writeln!(s, "rig = {rig}");
        let c = &self.camera;
        let _ = writeln!(s, "camera = {} {} {} {} {} {}", c.fx, c.fy, c.cx, c.cy, c.width, c.height);
        let e: Vec<String> = self.ir_extrinsic.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "ir_extrinsic = {}", e.join(" "));
        let _ = writeln!(s, "ir_frames = {}", self.ir_frames);
        let _ = writeln!(s, "rgb_every = {}", self.rgb_every);
        let _ = writeln!(s, "rgb_exposure = {}", self.rgb_exposure);
        let _ = writeln!(s, "saturation_level = {}", self.saturation_level);
        let n = &self.noise;
        let _ = writeln!(s, "normal_jitter_deg = {}", n.normal_jitter_deg);
        let _ = writeln!(s, "pose_translation_jitter_m = {}", n.pose_translation_jitter_m);
        let _ = writeln!(s, "pose_rotation_jitter_deg = {}", n.pose_rotation_jitter_deg);
        let _ = writeln!(s, "intensity_sigma = {}", n.intensity_multiplicative_sigma);
        let _ = writeln!(s, "outlier_fraction = {}", n.outlier_fraction);
        let _ = writeln!(s, "dropout_fraction = {}", n.dropout_fraction);
        let _ = writeln!(s, "rng_seed = {}", n.rng_seed);
        let _ = writeln!(s, "sample_budget = {}", self.sample_budget);
        let _ = writeln!(s, "diffusion_radius = {}", self.diffusion_radius);
        let _ = writeln!(s, "segmentation = {}", self.segmentation.name());
        let _ = writeln!(s, "sphere_resolution = {}", self.sphere_resolution);
        let _ = writeln!(s, "output_dir = {}", path(&self.output_dir));
        s
    }

    pub fn ir_extrinsic_pose(&self) -> Pose {
        let [qw, qx, qy, qz, tx, ty, tz] = self.ir_extrinsic;
        Pose::new(Quaternion::new(qw, qx, qy, qz), Vec3::new(tx, ty, tz))
    }

    /// Trajectory for an orbit source; `None` when it comes from a file.
    pub fn orbit_trajectory(&self) -> Option<Vec<TimedPose>> {
        let frames = depth_frames_for(self.ir_frames);
        match (&self.trajectory, &self.scene) {
            (TrajectorySource::File(_), _) => None,
            (TrajectorySource::Orbit, SceneSource::Builtin(b)) => Some(b.trajectory(frames)),
            (TrajectorySource::Orbit, SceneSource::File(_)) => Some(OrbitSpec::default().build(frames)),
        }
    }

    pub fn scan_config(&self, trajectory: Vec<TimedPose>, rig: LedRig) -> ScanConfig {
        ScanConfig {
            camera: self.camera,
            rig,
            trajectory,
            ir_extrinsic: self.ir_extrinsic_pose(),
            ir_frame_count: self.ir_frames,
            rgb_every: self.rgb_every,
            rgb_exposure: self.rgb_exposure,
            noise: self.noise.clone(),
            saturation_level: self.saturation_level,
        }
    }

    pub fn default_rig() -> LedRig {
        make_default_rig()
    }
}
