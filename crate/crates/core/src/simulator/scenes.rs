//! Built-in synthetic scenes, trajectories and scan presets.
//!
//! Scenes are convex-outward point sets (sphere caps and planar patches)
//! facing the scanning trajectory, so front-facing plus frustum tests are a
//! sufficient visibility model.

use std::fmt;
use std::str::FromStr;

use crate::brdf_table::Rgb;
use crate::geometry::{PinholeCamera, Pose, TimedPose, Vec3};

use super::{make_default_rig, GroundTruthMaterial, NoiseConfig, ScanConfig, SceneVertex};

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub vertices: Vec<SceneVertex>,
    pub materials: Vec<GroundTruthMaterial>,
}

impl Scene {
    pub fn material_labels(&self) -> Vec<usize> {
        self.vertices.iter().map(|v| v.material_id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinScene {
    /// Two spheres side by side, one matte and one glossy.
    TwoSphere,
    /// Four spheres in a 2 x 2 arrangement, four distinct materials.
    FourMaterialRoom,
    /// Floor, back wall, a ball and a board under the ball.
    GymballCorner,
}

impl BuiltinScene {
    pub const ALL: [BuiltinScene; 3] = [
        BuiltinScene::TwoSphere,
        BuiltinScene::FourMaterialRoom,
        BuiltinScene::GymballCorner,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinScene::TwoSphere => "two-sphere",
            BuiltinScene::FourMaterialRoom => "four-material-room",
            BuiltinScene::GymballCorner => "gymball-corner",
        }
    }

    /// Builds the scene with approximately `vertex_count` vertices.
    pub fn build(&self, vertex_count: usize) -> Scene {
        match self {
            BuiltinScene::TwoSphere => two_sphere(vertex_count),
            BuiltinScene::FourMaterialRoom => four_material_room(vertex_count),
            BuiltinScene::GymballCorner => gymball_corner(vertex_count),
        }
    }

    /// Trajectory orbiting the scene centre.
    pub fn trajectory(&self, depth_frames: usize) -> Vec<TimedPose> {
        let orbit = match self {
            BuiltinScene::TwoSphere => OrbitSpec {
                radius: 1.1,
                ..OrbitSpec::default()
            },
            BuiltinScene::FourMaterialRoom => OrbitSpec {
                radius: 1.3,
                ..OrbitSpec::default()
            },
            BuiltinScene::GymballCorner => OrbitSpec {
                target: Vec3::new(0.0, -0.1, 0.0),
                radius: 1.4,
                elevation_offset_deg: 20.0,
                ..OrbitSpec::default()
            },
        };
        orbit.build(depth_frames)
    }

    /// Scan preset with the default camera and rig.
    pub fn scan_config(&self, ir_frame_count: usize, noise: NoiseConfig) -> ScanConfig {
        let depth_frames = depth_frames_for(ir_frame_count);
        ScanConfig {
            camera: default_camera(),
            rig: make_default_rig(),
            trajectory: self.trajectory(depth_frames),
            ir_extrinsic: default_ir_extrinsic(),
            ir_frame_count,
            rgb_every: 3,
            rgb_exposure: 1.0,
            noise,
            saturation_level: 4.0,
        }
    }
}

impl fmt::Display for BuiltinScene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinScene {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuiltinScene::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = BuiltinScene::ALL.iter().map(|b| b.name()).collect();
                format!("unknown scene '{s}' (expected one of {})", names.join(", "))
            })
    }
}

/// IR camera: 694 x 518 with a field of view close to the depth camera's.
pub fn default_camera() -> PinholeCamera {
    PinholeCamera::new(560.0, 560.0, 347.0, 259.0, 694, 518).expect("valid intrinsics")
}

/// Depth frames spanning `ir_frame_count` IR frames: depth runs at 30 fps,
/// IR at 20 fps over the same span.
pub fn depth_frames_for(ir_frame_count: usize) -> usize {
    (ir_frame_count * 3).div_ceil(2).max(2)
}

/// IR camera mounted 2.5 cm to the side of the depth camera.
pub fn default_ir_extrinsic() -> Pose {
    Pose::new(
        crate::geometry::Quaternion::IDENTITY,
        Vec3::new(0.025, 0.0, 0.0),
    )
}

/// Camera path on a sphere around `target`: azimuth sweeps linearly while
/// elevation oscillates.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSpec {
    pub target: Vec3,
    pub radius: f64,
    pub azimuth_start_deg: f64,
    pub azimuth_end_deg: f64,
    pub elevation_offset_deg: f64,
    pub elevation_amplitude_deg: f64,
    pub elevation_cycles: f64,
    pub fps: f64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        Self {
            target: Vec3::zeros(),
            radius: 1.2,
            azimuth_start_deg: -35.0,
            azimuth_end_deg: 35.0,
            elevation_offset_deg: 0.0,
            elevation_amplitude_deg: 20.0,
            elevation_cycles: 2.0,
            fps: 30.0,
        }
    }
}

impl OrbitSpec {
    pub fn build(&self, frames: usize) -> Vec<TimedPose> {
        let frames = frames.max(2);
        (0..frames)
            .map(|k| {
                let u = k as f64 / (frames - 1) as f64;
                let az = (self.azimuth_start_deg
                    + u * (self.azimuth_end_deg - self.azimuth_start_deg))
                    .to_radians();
                let el = (self.elevation_offset_deg
                    + self.elevation_amplitude_deg
                        * (std::f64::consts::TAU * self.elevation_cycles * u).sin())
                .to_radians();
                let dir = Vec3::new(az.sin() * el.cos(), el.sin(), az.cos() * el.cos());
                let eye = self.target + dir * self.radius;
                let pose = Pose::look_at(&eye, &self.target, &Vec3::y())
                    .expect("orbit never looks straight down");
                TimedPose::new(pose, k as f64 / self.fps)
            })
            .collect()
    }
}

/// Points on a spherical cap around `axis`, Fibonacci spiral spacing.
pub fn sphere_cap(
    center: Vec3,
    radius: f64,
    axis: Vec3,
    cap_deg: f64,
    count: usize,
    material_id: usize,
) -> Vec<SceneVertex> {
    let axis = axis.normalize();
    let rot = crate::geometry::Quaternion::rotation_between(&Vec3::z(), &axis);
    let cos_cap = cap_deg.to_radians().cos();
    (0..count)
        .map(|i| {
            let z = 1.0 - (1.0 - cos_cap) * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = i as f64 * GOLDEN_ANGLE;
            let n = rot.rotate(&Vec3::new(r * phi.cos(), r * phi.sin(), z));
            SceneVertex::new(center + n * radius, n, material_id).expect("unit normal")
        })
        .collect()
}

/// Regular grid on a rectangle spanned by `u` and `v` around `center`.
pub fn planar_patch(
    center: Vec3,
    u: Vec3,
    v: Vec3,
    count: usize,
    material_id: usize,
) -> Vec<SceneVertex> {
    let normal = u.cross(&v).normalize();
    let aspect = u.norm() / v.norm();
    let nu = ((count as f64 * aspect).sqrt().ceil() as usize).max(1);
    let nv = count.div_ceil(nu).max(1);
    let mut out = Vec::with_capacity(nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            if out.len() == count {
                break;
            }
            let a = (i as f64 + 0.5) / nu as f64 - 0.5;
            let b = (j as f64 + 0.5) / nv as f64 - 0.5;
            let p = center + u * a + v * b;
            out.push(SceneVertex::new(p, normal, material_id).expect("unit normal"));
        }
    }
    out
}

fn material(albedo: [f64; 3], ks: f64, exponent: f64, color: [f64; 3]) -> GroundTruthMaterial {
    GroundTruthMaterial::new(Rgb::from(albedo), ks, exponent, Rgb::from(color))
        .expect("built-in materials are valid")
}

fn two_sphere(n: usize) -> Scene {
    let materials = vec![
        // matte clay
        material([0.55, 0.45, 0.40], 0.0, 1.0, [0.85, 0.35, 0.25]),
        // glossy plastic
        material([0.25, 0.30, 0.40], 1.5, 40.0, [0.25, 0.45, 0.85]),
    ];
    let half = n / 2;
    let mut vertices = sphere_cap(Vec3::new(-0.3, 0.0, 0.0), 0.22, Vec3::z(), 80.0, half, 0);
    vertices.extend(sphere_cap(
        Vec3::new(0.3, 0.0, 0.0),
        0.22,
        Vec3::z(),
        80.0,
        n - half,
        1,
    ));
    Scene {
        vertices,
        materials,
    }
}

fn four_material_room(n: usize) -> Scene {
    let materials = vec![
        // white matte paint
        material([0.70, 0.70, 0.70], 0.0, 1.0, [1.0, 1.0, 1.0]),
        // white glossy ceramic: same colour, different reflectance
        material([0.35, 0.35, 0.35], 1.2, 30.0, [1.0, 1.0, 1.0]),
        // red rubber
        material([0.45, 0.20, 0.15], 0.4, 10.0, [0.90, 0.30, 0.25]),
        // green fabric
        material([0.30, 0.45, 0.25], 0.0, 1.0, [0.30, 0.80, 0.35]),
    ];
    let centers = [
        Vec3::new(-0.3, 0.28, 0.0),
        Vec3::new(0.3, 0.28, 0.0),
        Vec3::new(-0.3, -0.28, 0.0),
        Vec3::new(0.3, -0.28, 0.0),
    ];
    let mut vertices = Vec::with_capacity(n);
    for (m, c) in centers.iter().enumerate() {
        let count = n / 4 + usize::from(m < n % 4);
        vertices.extend(sphere_cap(*c, 0.2, Vec3::z(), 80.0, count, m));
    }
    Scene {
        vertices,
        materials,
    }
}

fn gymball_corner(n: usize) -> Scene {
    let materials = vec![
        // wall
        material([0.75, 0.75, 0.72], 0.0, 1.0, [0.98, 0.98, 0.92]),
        // rubber ball
        material([0.30, 0.15, 0.12], 1.0, 25.0, [0.90, 0.30, 0.20]),
        // wooden board
        material([0.45, 0.35, 0.25], 0.3, 8.0, [0.70, 0.50, 0.30]),
    ];
    let wall_n = n * 2 / 5;
    let floor_n = n / 5;
    let ball_n = n / 4;
    let board_n = n - wall_n - floor_n - ball_n;
    let mut vertices = planar_patch(
        Vec3::new(0.0, 0.1, -0.45),
        Vec3::new(1.2, 0.0, 0.0),
        Vec3::new(0.0, 0.8, 0.0),
        wall_n,
        0,
    );
    // floor shares the wall paint
    vertices.extend(planar_patch(
        Vec3::new(0.0, -0.3, 0.05),
        Vec3::new(0.0, 0.0, 0.9),
        Vec3::new(1.2, 0.0, 0.0),
        floor_n,
        0,
    ));
    vertices.extend(sphere_cap(
        Vec3::new(0.05, -0.05, 0.0),
        0.2,
        Vec3::new(0.0, 0.35, 1.0),
        80.0,
        ball_n,
        1,
    ));
    vertices.extend(planar_patch(
        Vec3::new(0.05, -0.29, 0.3),
        Vec3::new(0.0, 0.0, 0.3),
        Vec3::new(0.6, 0.0, 0.0),
        board_n,
        2,
    ));
    Scene {
        vertices,
        materials,
    }
}
