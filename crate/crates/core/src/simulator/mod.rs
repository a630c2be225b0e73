//! Forward model of the scanner.
//!
//! A scan walks a set of IR frames spread over the depth-camera trajectory.
//! Each IR frame is lit by one LED (cycled in order) and produces one
//! [`IrObservation`] per visible vertex following
//! `I = vig(x) * vis * f(theta_h, theta_d) * (n . l) * L / d^2`.
//! Every `rgb_every`-th trajectory frame also yields shaded colour samples.
//!
//! Noise (normal and pose jitter, log-normal intensity noise, outliers and
//! dropout) is drawn from per-frame ChaCha streams derived from one seed, so
//! the frame loop can run in parallel without changing the output.

pub mod scenes;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::brdf_table::Rgb;
use crate::estimation::RgbObservation;
use crate::geometry::{
    angle_between_deg, half_diff_angles, pose_at, GeometryError, HalfDiffAngles, Led, LedRig,
    PinholeCamera, Pose, Quaternion, TimedPose, Vec3,
};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("scene has no vertices")]
    EmptyScene,
    #[error("trajectory needs at least 2 poses, found {0}")]
    ShortTrajectory(usize),
    #[error("trajectory timestamps must be strictly increasing (index {0})")]
    NonMonotonicTrajectory(usize),
    #[error("vertex {vertex} references unknown material {material}")]
    UnknownMaterial { vertex: usize, material: usize },
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid scan configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Analytic bivariate reflectance used as ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMaterial {
    pub diffuse_albedo: Rgb,
    pub specular_strength: f64,
    pub lobe_exponent: f64,
    /// Unit-norm colour direction.
    pub color: Rgb,
}

impl GroundTruthMaterial {
    /// Validates ranges and normalizes `color`.
    pub fn new(
        diffuse_albedo: Rgb,
        specular_strength: f64,
        lobe_exponent: f64,
        color: Rgb,
    ) -> Result<Self, SimulationError> {
        if !diffuse_albedo.iter().all(|a| (0.0..=1.0).contains(a)) {
            return Err(SimulationError::InvalidMaterial(format!(
                "diffuse albedo {:?} outside [0, 1]",
                diffuse_albedo.as_slice()
            )));
        }
        if !(specular_strength >= 0.0) || !specular_strength.is_finite() {
            return Err(SimulationError::InvalidMaterial(format!(
                "specular strength {specular_strength} must be >= 0"
            )));
        }
        if !(lobe_exponent >= 1.0) || !lobe_exponent.is_finite() {
            return Err(SimulationError::InvalidMaterial(format!(
                "lobe exponent {lobe_exponent} must be >= 1"
            )));
        }
        if color.iter().any(|c| *c < 0.0 || !c.is_finite()) {
            return Err(SimulationError::InvalidMaterial("negative colour".into()));
        }
        let color = color
            .try_normalize(0.0)
            .ok_or_else(|| SimulationError::InvalidMaterial("zero colour".into()))?;
        Ok(Self {
            diffuse_albedo,
            specular_strength,
            lobe_exponent,
            color,
        })
    }

    /// Gray-level diffuse term: mean of the albedo channels.
    pub fn diffuse_gray(&self) -> f64 {
        self.diffuse_albedo.mean()
    }

    /// Scalar IR reflectance at the given angles.
    pub fn eval(&self, angles: &HalfDiffAngles) -> f64 {
        eval_ground_truth_brdf(self, angles)
    }

    /// Colour-scaled reflectance `color * f`.
    pub fn eval_rgb(&self, angles: &HalfDiffAngles) -> Rgb {
        self.color * self.eval(angles)
    }
}

pub fn eval_ground_truth_brdf(mat: &GroundTruthMaterial, angles: &HalfDiffAngles) -> f64 {
    let cos_h = angles.theta_h().to_radians().cos().max(0.0);
    mat.diffuse_gray() + mat.specular_strength * cos_h.powf(mat.lobe_exponent)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneVertex {
    pub position: Vec3,
    pub normal: Vec3,
    pub material_id: usize,
}

impl SceneVertex {
    /// Normalizes `normal`; fails on a zero normal.
    pub fn new(position: Vec3, normal: Vec3, material_id: usize) -> Result<Self, GeometryError> {
        let normal = normal.try_normalize(0.0).ok_or(GeometryError::Degenerate)?;
        Ok(Self {
            position,
            normal,
            material_id,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub normal_jitter_deg: f64,
    pub pose_translation_jitter_m: f64,
    pub pose_rotation_jitter_deg: f64,
    pub intensity_multiplicative_sigma: f64,
    pub outlier_fraction: f64,
    pub dropout_fraction: f64,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::noiseless(0)
    }
}

impl NoiseConfig {
    pub fn noiseless(rng_seed: u64) -> Self {
        Self {
            normal_jitter_deg: 0.0,
            pose_translation_jitter_m: 0.0,
            pose_rotation_jitter_deg: 0.0,
            intensity_multiplicative_sigma: 0.0,
            outlier_fraction: 0.0,
            dropout_fraction: 0.0,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let nonneg = [
            ("normal_jitter_deg", self.normal_jitter_deg),
            ("pose_translation_jitter_m", self.pose_translation_jitter_m),
            ("pose_rotation_jitter_deg", self.pose_rotation_jitter_deg),
            (
                "intensity_multiplicative_sigma",
                self.intensity_multiplicative_sigma,
            ),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SimulationError::InvalidConfig(format!("{name} = {v} must be >= 0")));
            }
        }
        for (name, v) in [
            ("outlier_fraction", self.outlier_fraction),
            ("dropout_fraction", self.dropout_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimulationError::InvalidConfig(format!(
                    "{name} = {v} must lie in [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub camera: PinholeCamera,
    pub rig: LedRig,
    /// Depth-camera trajectory.
    pub trajectory: Vec<TimedPose>,
    /// Fixed transform from the IR camera frame to the depth camera frame.
    pub ir_extrinsic: Pose,
    /// Number of IR frames spread uniformly over the trajectory span.
    pub ir_frame_count: usize,
    /// Colour samples are taken on every k-th trajectory frame.
    pub rgb_every: usize,
    /// Scale applied to shaded colour samples.
    pub rgb_exposure: f64,
    pub noise: NoiseConfig,
    pub saturation_level: f64,
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        self.camera.validate()?;
        validate_trajectory(&self.trajectory)?;
        if !(self.saturation_level > 0.0) {
            return Err(SimulationError::InvalidConfig(format!(
                "saturation_level = {} must be > 0",
                self.saturation_level
            )));
        }
        if self.ir_frame_count == 0 {
            return Err(SimulationError::InvalidConfig(
                "ir_frame_count must be >= 1".into(),
            ));
        }
        if self.rgb_every == 0 {
            return Err(SimulationError::InvalidConfig("rgb_every must be >= 1".into()));
        }
        if !(self.rgb_exposure > 0.0) {
            return Err(SimulationError::InvalidConfig("rgb_exposure must be > 0".into()));
        }
        self.noise.validate()
    }

    /// IR frame schedule: times strictly inside the trajectory span, one LED each.
    pub fn ir_frames(&self) -> Vec<IrFrame> {
        let t0 = self.trajectory.first().map_or(0.0, |p| p.timestamp);
        let t1 = self.trajectory.last().map_or(0.0, |p| p.timestamp);
        let n = self.ir_frame_count;
        let step = (t1 - t0) / n as f64;
        (0..n)
            .map(|k| IrFrame {
                index: k,
                time: t0 + (k as f64 + 0.5) * step,
                led_index: k % self.rig.len(),
            })
            .collect()
    }

    /// Nominal IR camera pose at `time` (no jitter).
    pub fn ir_pose_at(&self, time: f64) -> Option<Pose> {
        ir_pose_at(&self.trajectory, &self.ir_extrinsic, time)
    }
}

/// IR camera pose: interpolated depth pose composed with the fixed extrinsic.
pub fn ir_pose_at(trajectory: &[TimedPose], extrinsic: &Pose, time: f64) -> Option<Pose> {
    pose_at(trajectory, time).map(|p| p.compose(extrinsic))
}

pub fn validate_trajectory(trajectory: &[TimedPose]) -> Result<(), SimulationError> {
    if trajectory.len() < 2 {
        return Err(SimulationError::ShortTrajectory(trajectory.len()));
    }
    for (i, w) in trajectory.windows(2).enumerate() {
        if !(w[0].timestamp < w[1].timestamp) {
            return Err(SimulationError::NonMonotonicTrajectory(i + 1));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrFrame {
    pub index: usize,
    pub time: f64,
    pub led_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrObservation {
    pub vertex_id: usize,
    pub frame_time: f64,
    pub led_index: usize,
    pub intensity: f64,
    pub pixel: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScanOutput {
    pub ir: Vec<IrObservation>,
    pub rgb: Vec<RgbObservation>,
}

/// Ten-LED rig: eight on a 16 cm circle around the camera, one at 8 cm and
/// one at 28 cm, all in the camera plane with unit brightness.
pub fn make_default_rig() -> LedRig {
    let mut leds: Vec<Led> = (0..8)
        .map(|k| {
            let a = (k as f64 * 45.0).to_radians();
            Led {
                position: Vec3::new(0.16 * a.cos(), 0.16 * a.sin(), 0.0),
                brightness: 1.0,
            }
        })
        .collect();
    for (r, deg) in [(0.08, 22.5f64), (0.28, 202.5)] {
        let a = deg.to_radians();
        leds.push(Led {
            position: Vec3::new(r * a.cos(), r * a.sin(), 0.0),
            brightness: 1.0,
        });
    }
    LedRig::new(leds).expect("default rig is valid")
}

/// cos^4 falloff of the pixel ray against the optical axis.
pub fn vignette(pixel: [f64; 2], camera: &PinholeCamera) -> f64 {
    camera.off_axis_cos(pixel).powi(4)
}

/// Noise-free IR intensity of one vertex under one LED.
///
/// `led_position` and `camera_center` are in world coordinates. Returns 0
/// when not visible or when the light or viewer is below the surface.
pub fn render_ir_intensity(
    vertex: &SceneVertex,
    material: &GroundTruthMaterial,
    led_position: &Vec3,
    led_brightness: f64,
    camera_center: &Vec3,
    vignette: f64,
    visible: bool,
) -> f64 {
    if !visible {
        return 0.0;
    }
    let to_led = led_position - vertex.position;
    let d2 = to_led.norm_squared();
    let Some(l) = to_led.try_normalize(0.0) else {
        return 0.0;
    };
    let Some(v) = (camera_center - vertex.position).try_normalize(0.0) else {
        return 0.0;
    };
    let n_dot_l = vertex.normal.dot(&l);
    if n_dot_l <= 0.0 || vertex.normal.dot(&v) <= 0.0 {
        return 0.0;
    }
    let Ok(angles) = half_diff_angles(&vertex.normal, &l, &v) else {
        return 0.0;
    };
    vignette * material.eval(&angles) * n_dot_l * led_brightness / d2
}

const NORMAL_STREAM: u64 = 0;
const IR_STREAM_BASE: u64 = 1;
const RGB_STREAM_BASE: u64 = 1 << 40;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Small random rotation with Gaussian angle of the given std-dev (degrees).
fn jitter_rotation(rng: &mut ChaCha8Rng, sigma_deg: f64) -> Quaternion {
    let axis = Vec3::new(gaussian(rng), gaussian(rng), gaussian(rng));
    let angle = gaussian(rng) * sigma_deg.to_radians();
    if sigma_deg == 0.0 {
        return Quaternion::IDENTITY;
    }
    Quaternion::from_axis_angle(&axis, angle)
}

/// Surface normals as they really are, i.e. the mesh normals perturbed.
fn true_normals(scene: &[SceneVertex], noise: &NoiseConfig) -> Vec<Vec3> {
    let mut rng = stream_rng(noise.rng_seed, NORMAL_STREAM);
    scene
        .iter()
        .map(|v| {
            let q = jitter_rotation(&mut rng, noise.normal_jitter_deg);
            q.rotate(&v.normal).normalize()
        })
        .collect()
}

struct NoiseDraw {
    z: f64,
    outlier: f64,
    outlier_value: f64,
    drop: f64,
}

impl NoiseDraw {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            z: gaussian(rng),
            outlier: rng.gen(),
            outlier_value: rng.gen(),
            drop: rng.gen(),
        }
    }
}

/// Simulates IR and colour observations for a scene.
pub fn simulate_scan(
    scene: &[SceneVertex],
    materials: &[GroundTruthMaterial],
    config: &ScanConfig,
) -> Result<ScanOutput, SimulationError> {
    if scene.is_empty() {
        return Err(SimulationError::EmptyScene);
    }
    config.validate()?;
    for (i, v) in scene.iter().enumerate() {
        if v.material_id >= materials.len() {
            return Err(SimulationError::UnknownMaterial {
                vertex: i,
                material: v.material_id,
            });
        }
    }
    let noise = &config.noise;
    let normals = true_normals(scene, noise);

    let ir_frames = config.ir_frames();
    let ir: Vec<Vec<IrObservation>> = ir_frames
        .par_iter()
        .map(|frame| simulate_ir_frame(scene, &normals, materials, config, frame))
        .collect();

    let rgb_frames: Vec<usize> = (0..config.trajectory.len())
        .step_by(config.rgb_every)
        .collect();
    let rgb: Vec<Vec<RgbObservation>> = rgb_frames
        .par_iter()
        .map(|&j| simulate_rgb_frame(scene, &normals, materials, config, j))
        .collect();

    Ok(ScanOutput {
        ir: ir.into_iter().flatten().collect(),
        rgb: rgb.into_iter().flatten().collect(),
    })
}

fn simulate_ir_frame(
    scene: &[SceneVertex],
    normals: &[Vec3],
    materials: &[GroundTruthMaterial],
    config: &ScanConfig,
    frame: &IrFrame,
) -> Vec<IrObservation> {
    let noise = &config.noise;
    let mut rng = stream_rng(noise.rng_seed, IR_STREAM_BASE + frame.index as u64);
    let nominal = config
        .ir_pose_at(frame.time)
        .expect("IR frames lie inside the trajectory");
    let jitter_q = jitter_rotation(&mut rng, noise.pose_rotation_jitter_deg);
    let jitter_t = Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng))
        * noise.pose_translation_jitter_m;
    let pose = Pose::new(
        jitter_q.mul(&nominal.rotation),
        nominal.translation + jitter_t,
    );
    let led = config.rig.leds()[frame.led_index];
    let led_world = pose.transform_point(&led.position);
    let center = pose.center();

    let mut out = Vec::new();
    for (id, vertex) in scene.iter().enumerate() {
        let true_vertex = SceneVertex {
            normal: normals[id],
            ..*vertex
        };
        let Ok(pixel) = crate::geometry::project(&config.camera, &pose, &vertex.position) else {
            continue;
        };
        if (center - vertex.position).dot(&true_vertex.normal) <= 0.0 {
            continue;
        }
        let draw = NoiseDraw::draw(&mut rng);
        if draw.drop < noise.dropout_fraction {
            continue;
        }
        let vig = vignette(pixel, &config.camera);
        let clean = render_ir_intensity(
            &true_vertex,
            &materials[vertex.material_id],
            &led_world,
            led.brightness,
            &center,
            vig,
            true,
        );
        let mut intensity = if noise.intensity_multiplicative_sigma > 0.0 {
            clean * (noise.intensity_multiplicative_sigma * draw.z).exp()
        } else {
            clean
        };
        if draw.outlier < noise.outlier_fraction {
            intensity = draw.outlier_value * config.saturation_level;
        }
        out.push(IrObservation {
            vertex_id: id,
            frame_time: frame.time,
            led_index: frame.led_index,
            intensity: intensity.min(config.saturation_level),
            pixel,
        });
    }
    out
}

/// Shading used for colour samples: the material lit from the viewpoint.
fn rgb_shading(normal: &Vec3, view: &Vec3, material: &GroundTruthMaterial) -> Option<Rgb> {
    let cos = normal.dot(view);
    if cos <= 0.0 {
        return None;
    }
    let angles = half_diff_angles(normal, view, view).ok()?;
    Some(material.eval_rgb(&angles) * cos)
}

fn simulate_rgb_frame(
    scene: &[SceneVertex],
    normals: &[Vec3],
    materials: &[GroundTruthMaterial],
    config: &ScanConfig,
    frame_index: usize,
) -> Vec<RgbObservation> {
    let noise = &config.noise;
    let mut rng = stream_rng(noise.rng_seed, RGB_STREAM_BASE + frame_index as u64);
    let pose = config.trajectory[frame_index].pose;
    let center = pose.center();
    let mut out = Vec::new();
    for (id, vertex) in scene.iter().enumerate() {
        if crate::geometry::project(&config.camera, &pose, &vertex.position).is_err() {
            continue;
        }
        let Some(view) = (center - vertex.position).try_normalize(0.0) else {
            continue;
        };
        let Some(shade) = rgb_shading(&normals[id], &view, &materials[vertex.material_id]) else {
            continue;
        };
        let draw = NoiseDraw::draw(&mut rng);
        if draw.drop < noise.dropout_fraction {
            continue;
        }
        let channel_noise = Vector3::new(gaussian(&mut rng), draw.z, gaussian(&mut rng));
        let mut rgb = shade * config.rgb_exposure;
        if noise.intensity_multiplicative_sigma > 0.0 {
            rgb = rgb.component_mul(
                &channel_noise.map(|z| (noise.intensity_multiplicative_sigma * z).exp()),
            );
        }
        if draw.outlier < noise.outlier_fraction {
            let mut r = || rng.gen::<f64>() * config.saturation_level;
            rgb = Vector3::new(r(), draw.outlier_value * config.saturation_level, r());
        }
        out.push(RgbObservation {
            vertex_id: id,
            rgb: rgb.map(|c| c.min(config.saturation_level)),
            omega_out_angle: angle_between_deg(&vertex.normal, &view),
        });
    }
    out
}
