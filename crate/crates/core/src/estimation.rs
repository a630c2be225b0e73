//! Per-vertex reflectance estimation.
//!
//! Colour comes from the per-channel median of unsaturated, non-grazing RGB
//! samples, normalized to unit Euclidean length. Each IR observation is
//! inverted through the image formation model to one scalar reflectance
//! value, scaled by the vertex colour and averaged into the vertex's table.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::brdf_table::{bin, BrdfTable, Rgb, RgbBrdfSample, TableError};
use crate::geometry::{half_diff_angles, HalfDiffAngles, LedRig, PinholeCamera, Pose, TimedPose};
use crate::simulator::{ir_pose_at, vignette, IrObservation, SceneVertex};

/// Samples viewed beyond this angle from the normal are discarded.
pub const MAX_VIEW_ANGLE_DEG: f64 = 60.0;
/// Light directions beyond this angle from the normal are discarded.
pub const MAX_LIGHT_ANGLE_DEG: f64 = 60.0;
/// Pixels darker than this vignette factor are not trusted.
pub const VIGNETTE_FLOOR: f64 = 0.05;
/// Colour estimation needs at least this many valid samples.
pub const MIN_COLOR_SAMPLES: usize = 3;

pub const RECORDS_HEADER: &str = "vertexrecords v1 euclidean";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgbObservation {
    pub vertex_id: usize,
    pub rgb: Rgb,
    /// Angle between the surface normal and the view direction, degrees.
    pub omega_out_angle: f64,
}

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("only {valid} valid colour samples, need {MIN_COLOR_SAMPLES}")]
    InsufficientData { valid: usize },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Why an IR observation did not yield a reflectance sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rejection {
    Saturated,
    Shadowed,
    VignetteFloor,
    GrazingIn,
    GrazingOut,
    /// The LED index does not exist in the rig.
    UnknownLed,
    /// Frame time outside the trajectory, so no pose can be interpolated.
    NoPose,
    /// Colour could not be estimated for the vertex.
    NoColor,
    /// The observation names a vertex outside the scene.
    UnknownVertex,
}

impl Rejection {
    pub const ALL: [Rejection; 9] = [
        Rejection::Saturated,
        Rejection::Shadowed,
        Rejection::VignetteFloor,
        Rejection::GrazingIn,
        Rejection::GrazingOut,
        Rejection::UnknownLed,
        Rejection::NoPose,
        Rejection::NoColor,
        Rejection::UnknownVertex,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Rejection::Saturated => "saturated",
            Rejection::Shadowed => "shadowed",
            Rejection::VignetteFloor => "vignette-floor",
            Rejection::GrazingIn => "grazing-in",
            Rejection::GrazingOut => "grazing-out",
            Rejection::UnknownLed => "unknown-led",
            Rejection::NoPose => "no-pose",
            Rejection::NoColor => "no-color",
            Rejection::UnknownVertex => "unknown-vertex",
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Normalized per-channel median colour of the valid samples.
pub fn estimate_vertex_color(
    observations: &[RgbObservation],
    saturation_level: f64,
) -> Result<Rgb, EstimationError> {
    let valid: Vec<&RgbObservation> = observations
        .iter()
        .filter(|o| o.omega_out_angle <= MAX_VIEW_ANGLE_DEG)
        .filter(|o| o.rgb.iter().all(|c| *c < saturation_level))
        .collect();
    if valid.len() < MIN_COLOR_SAMPLES {
        return Err(EstimationError::InsufficientData { valid: valid.len() });
    }
    let mut channel = vec![0.0; valid.len()];
    let mut med = Rgb::zeros();
    for k in 0..3 {
        for (slot, o) in channel.iter_mut().zip(&valid) {
            *slot = o.rgb[k];
        }
        med[k] = median(&mut channel);
    }
    med.try_normalize(0.0)
        .ok_or(EstimationError::InsufficientData { valid: 0 })
}

/// Inverts the image formation model for one observation.
///
/// `camera_pose` is the IR camera pose at the observation time; LED
/// positions are taken from the rig in that camera's frame.
pub fn invert_image_formation(
    obs: &IrObservation,
    vertex: &SceneVertex,
    camera_pose: &Pose,
    rig: &LedRig,
    vignette_value: f64,
    saturation_level: f64,
) -> Result<(HalfDiffAngles, f64), Rejection> {
    if obs.intensity >= saturation_level {
        return Err(Rejection::Saturated);
    }
    if !(obs.intensity > 0.0) {
        return Err(Rejection::Shadowed);
    }
    if vignette_value < VIGNETTE_FLOOR {
        return Err(Rejection::VignetteFloor);
    }
    let led = rig.get(obs.led_index).ok_or(Rejection::UnknownLed)?;
    let to_led = camera_pose.transform_point(&led.position) - vertex.position;
    let d2 = to_led.norm_squared();
    let l = to_led.try_normalize(0.0).ok_or(Rejection::GrazingIn)?;
    let n_dot_l = vertex.normal.dot(&l);
    if n_dot_l < MAX_LIGHT_ANGLE_DEG.to_radians().cos() {
        return Err(Rejection::GrazingIn);
    }
    let v = (camera_pose.center() - vertex.position)
        .try_normalize(0.0)
        .ok_or(Rejection::GrazingOut)?;
    if vertex.normal.dot(&v) < MAX_VIEW_ANGLE_DEG.to_radians().cos() {
        return Err(Rejection::GrazingOut);
    }
    let angles = half_diff_angles(&vertex.normal, &l, &v).map_err(|_| Rejection::GrazingOut)?;
    let f = obs.intensity / (vignette_value * n_dot_l * led.brightness / d2);
    Ok((angles, f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexReflectanceRecord {
    pub vertex_id: usize,
    pub normalized_color: Rgb,
    pub table: BrdfTable,
}

/// Calibrated inputs needed to turn observations into reflectance samples.
#[derive(Debug, Clone, Copy)]
pub struct EstimationContext<'a> {
    pub camera: &'a PinholeCamera,
    pub rig: &'a LedRig,
    /// Depth-camera trajectory.
    pub trajectory: &'a [TimedPose],
    pub ir_extrinsic: &'a Pose,
    pub saturation_level: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccumulationReport {
    pub total: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<Rejection, usize>,
}

impl AccumulationReport {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }
}

/// Estimates colours for every vertex with enough valid RGB samples.
/// Returns `None` entries for vertices without enough data.
pub fn estimate_colors(
    rgb: &[RgbObservation],
    vertex_count: usize,
    saturation_level: f64,
) -> Vec<Option<Rgb>> {
    let mut per_vertex: Vec<Vec<RgbObservation>> = vec![Vec::new(); vertex_count];
    for o in rgb {
        if let Some(list) = per_vertex.get_mut(o.vertex_id) {
            list.push(*o);
        }
    }
    per_vertex
        .iter()
        .map(|obs| estimate_vertex_color(obs, saturation_level).ok())
        .collect()
}

/// Builds one reflectance record per coloured vertex that received at least
/// one accepted sample.
pub fn accumulate_vertex_tables(
    ir_observations: &[IrObservation],
    scene: &[SceneVertex],
    colors: &[Option<Rgb>],
    ctx: &EstimationContext<'_>,
) -> (Vec<VertexReflectanceRecord>, AccumulationReport) {
    let mut tables: BTreeMap<usize, BrdfTable> = BTreeMap::new();
    let mut report = AccumulationReport {
        total: ir_observations.len(),
        ..Default::default()
    };
    // observations are grouped by frame, so the pose is cached per time stamp
    let mut cached: Option<(f64, Option<Pose>)> = None;
    for obs in ir_observations {
        let result = (|| {
            let vertex = scene.get(obs.vertex_id).ok_or(Rejection::UnknownVertex)?;
            let color = colors
                .get(obs.vertex_id)
                .copied()
                .flatten()
                .ok_or(Rejection::NoColor)?;
            let pose = match cached {
                Some((t, p)) if t == obs.frame_time => p,
                _ => {
                    let p = ir_pose_at(ctx.trajectory, ctx.ir_extrinsic, obs.frame_time);
                    cached = Some((obs.frame_time, p));
                    p
                }
            }
            .ok_or(Rejection::NoPose)?;
            let vig = vignette(obs.pixel, ctx.camera);
            let (angles, f) =
                invert_image_formation(obs, vertex, &pose, ctx.rig, vig, ctx.saturation_level)?;
            Ok::<_, Rejection>((angles, color * f))
        })();
        match result {
            Ok((angles, value)) => {
                // positive intensity over a positive, floored denominator
                let sample = RgbBrdfSample::new(value).expect("finite non-negative sample");
                report.accepted += 1;
                tables.entry(obs.vertex_id).or_default().insert(bin(&angles), sample);
            }
            Err(reason) => *report.rejected.entry(reason).or_default() += 1,
        }
    }
    let records = tables
        .into_iter()
        .map(|(vertex_id, table)| VertexReflectanceRecord {
            vertex_id,
            normalized_color: colors[vertex_id].expect("accepted vertices have colour"),
            table,
        })
        .collect();
    (records, report)
}

/// Writes records as `vertex id r g b` lines, each followed by its table block.
pub fn write_records<W: Write>(records: &[VertexReflectanceRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{RECORDS_HEADER}")?;
    writeln!(w, "count {}", records.len())?;
    for r in records {
        let c = r.normalized_color;
        writeln!(w, "vertex {} {:e} {:e} {:e}", r.vertex_id, c.x, c.y, c.z)?;
        r.table.write_to(&mut w)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(mut reader: R) -> Result<Vec<VertexReflectanceRecord>, EstimationError> {
    let parse_err = |line: usize, msg: String| EstimationError::Parse { line, msg };
    let mut line_no = 1;
    let mut buf = String::new();
    reader.read_line(&mut buf)?;
    if buf.trim() != RECORDS_HEADER {
        return Err(parse_err(
            line_no,
            format!("expected header '{RECORDS_HEADER}', found '{}'", buf.trim()),
        ));
    }
    buf.clear();
    line_no += 1;
    reader.read_line(&mut buf)?;
    let count: usize = buf
        .trim()
        .strip_prefix("count ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| parse_err(line_no, "expected 'count N'".into()))?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        buf.clear();
        line_no += 1;
        reader.read_line(&mut buf)?;
        let fields: Vec<&str> = buf.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "vertex" {
            return Err(parse_err(line_no, "expected 'vertex id r g b'".into()));
        }
        let vertex_id: usize = fields[1]
            .parse()
            .map_err(|e| parse_err(line_no, format!("vertex id: {e}")))?;
        let mut c = [0.0; 3];
        for k in 0..3 {
            c[k] = fields[2 + k]
                .parse()
                .map_err(|e| parse_err(line_no, format!("colour: {e}")))?;
        }
        let table = BrdfTable::read_block(&mut reader, line_no + 1)?;
        line_no += 1 + table.present_count() + 1;
        out.push(VertexReflectanceRecord {
            vertex_id,
            normalized_color: Rgb::from(c),
            table,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf_table::CellIndex;
    use crate::geometry::{Led, Vec3};
    use crate::simulator::{make_default_rig, render_ir_intensity, GroundTruthMaterial};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rgb_obs(r: f64, g: f64, b: f64, angle: f64) -> RgbObservation {
        RgbObservation {
            vertex_id: 0,
            rgb: Rgb::new(r, g, b),
            omega_out_angle: angle,
        }
    }

    #[test]
    fn color_normalization_and_median() {
        let same = vec![rgb_obs(2.0, 4.0, 4.0, 10.0); 4];
        assert_relative_eq!(
            estimate_vertex_color(&same, 10.0).unwrap(),
            Rgb::new(1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0),
            epsilon = 1e-15
        );
        let mut robust = vec![rgb_obs(1.0, 1.0, 1.0, 0.0); 5];
        robust.push(rgb_obs(9.0, 9.0, 9.0, 0.0));
        assert_relative_eq!(
            estimate_vertex_color(&robust, 10.0).unwrap(),
            Rgb::repeat(1.0 / 3f64.sqrt()),
            epsilon = 1e-15
        );
    }

    #[test]
    fn color_filters_match_brute_force() {
        let obs = vec![
            rgb_obs(1.0, 2.0, 3.0, 10.0),
            rgb_obs(5.0, 1.0, 1.0, 70.0), // grazing
            rgb_obs(2.0, 3.0, 4.0, 59.0),
            rgb_obs(9.9, 1.0, 1.0, 5.0), // saturated red
            rgb_obs(3.0, 1.0, 2.0, 30.0),
            rgb_obs(2.5, 2.5, 2.5, 60.5), // grazing
        ];
        // oracle: survivors are indices 0, 2, 4
        let m = Rgb::new(2.0, 2.0, 3.0);
        let got = estimate_vertex_color(&obs, 9.9).unwrap();
        assert_relative_eq!(got, m / m.norm(), epsilon = 1e-15);
        assert!(matches!(
            estimate_vertex_color(&obs[..2], 9.9),
            Err(EstimationError::InsufficientData { valid: 1 })
        ));
    }

    proptest! {
        #[test]
        fn color_invariant_to_permutation_and_duplication(
            values in prop::collection::vec((prop::array::uniform3(0.01..5.0f64), 0.0..80.0f64), 3..30),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let obs: Vec<RgbObservation> = values.iter().map(|(c, a)| rgb_obs(c[0], c[1], c[2], *a)).collect();
            let base = estimate_vertex_color(&obs, 4.0);
            let mut shuffled = obs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mut doubled = obs.clone();
            doubled.extend(obs.iter().copied());
            match base {
                Ok(c) => {
                    prop_assert_eq!(estimate_vertex_color(&shuffled, 4.0).unwrap(), c);
                    let d = estimate_vertex_color(&doubled, 4.0).unwrap();
                    prop_assert!((d - c).norm() < 1e-12);
                }
                Err(_) => prop_assert!(estimate_vertex_color(&shuffled, 4.0).is_err()),
            }
        }
    }

    fn setup() -> (SceneVertex, Pose, LedRig, GroundTruthMaterial) {
        let v = SceneVertex::new(Vec3::new(0.05, 0.0, 0.0), Vec3::new(0.1, -0.2, 1.0), 0).unwrap();
        let pose = Pose::look_at(&Vec3::new(0.1, 0.1, 0.9), &Vec3::zeros(), &Vec3::y()).unwrap();
        let m = GroundTruthMaterial::new(Rgb::repeat(0.4), 1.0, 30.0, Rgb::x()).unwrap();
        (v, pose, make_default_rig(), m)
    }

    #[test]
    fn inversion_round_trip() {
        let (v, pose, rig, m) = setup();
        for (k, led) in rig.leds().iter().enumerate() {
            let led_w = pose.transform_point(&led.position);
            let i = render_ir_intensity(&v, &m, &led_w, led.brightness, &pose.center(), 0.8, true);
            let obs = IrObservation {
                vertex_id: 0,
                frame_time: 0.0,
                led_index: k,
                intensity: i,
                pixel: [0.0, 0.0],
            };
            let (angles, f) = invert_image_formation(&obs, &v, &pose, &rig, 0.8, 100.0).unwrap();
            let truth = m.eval(&angles);
            assert!(((f - truth) / truth).abs() < 1e-12);
        }
    }

    #[test]
    fn inversion_rejections() {
        let (v, pose, rig, _) = setup();
        let mut obs = IrObservation {
            vertex_id: 0,
            frame_time: 0.0,
            led_index: 0,
            intensity: 0.0,
            pixel: [0.0, 0.0],
        };
        assert_eq!(
            invert_image_formation(&obs, &v, &pose, &rig, 1.0, 1.0),
            Err(Rejection::Shadowed)
        );
        obs.intensity = 1.0;
        assert_eq!(
            invert_image_formation(&obs, &v, &pose, &rig, 1.0, 1.0),
            Err(Rejection::Saturated)
        );
        obs.intensity = 0.5;
        assert_eq!(
            invert_image_formation(&obs, &v, &pose, &rig, 0.01, 1.0),
            Err(Rejection::VignetteFloor)
        );
        obs.led_index = 99;
        assert_eq!(
            invert_image_formation(&obs, &v, &pose, &rig, 1.0, 1.0),
            Err(Rejection::UnknownLed)
        );

        // light at 75 degrees from the normal, viewer straight above
        let flat = SceneVertex::new(Vec3::zeros(), Vec3::z(), 0).unwrap();
        let a = 75f64.to_radians();
        let cam = Pose::look_at(&Vec3::new(0.0, 0.0, 1.0), &Vec3::zeros(), &Vec3::y()).unwrap();
        let led_world = Vec3::new(a.sin(), 0.0, a.cos());
        let side_rig = LedRig::new(vec![Led {
            position: cam.inverse_transform_point(&led_world),
            brightness: 1.0,
        }])
        .unwrap();
        obs.led_index = 0;
        assert_eq!(
            invert_image_formation(&obs, &flat, &cam, &side_rig, 1.0, 1.0),
            Err(Rejection::GrazingIn)
        );
        // viewer at 75 degrees, light overhead
        let grazing_cam =
            Pose::look_at(&Vec3::new(a.sin(), 0.0, a.cos()), &Vec3::zeros(), &Vec3::y()).unwrap();
        let overhead = LedRig::new(vec![Led {
            position: grazing_cam.inverse_transform_point(&Vec3::new(0.0, 0.0, 1.0)),
            brightness: 1.0,
        }])
        .unwrap();
        assert_eq!(
            invert_image_formation(&obs, &flat, &grazing_cam, &overhead, 1.0, 1.0),
            Err(Rejection::GrazingOut)
        );
    }

    fn straight_down_context() -> (Vec<TimedPose>, PinholeCamera, LedRig, Pose) {
        let pose = Pose::look_at(&Vec3::new(0.0, 0.0, 1.0), &Vec3::zeros(), &Vec3::y()).unwrap();
        let traj = vec![TimedPose::new(pose, 0.0), TimedPose::new(pose, 1.0)];
        let cam = PinholeCamera::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let rig = LedRig::new(vec![Led {
            position: Vec3::zeros(),
            brightness: 1.0,
        }])
        .unwrap();
        (traj, cam, rig, Pose::IDENTITY)
    }

    #[test]
    fn accumulate_scales_by_color_and_averages() {
        let (traj, cam, rig, ext) = straight_down_context();
        let ctx = EstimationContext {
            camera: &cam,
            rig: &rig,
            trajectory: &traj,
            ir_extrinsic: &ext,
            saturation_level: 100.0,
        };
        let v = SceneVertex::new(Vec3::zeros(), Vec3::z(), 0).unwrap();
        // light and camera coincide 1 m above: n.l = 1, d = 1, vignette 1 at centre
        let obs = |f: f64| IrObservation {
            vertex_id: 0,
            frame_time: 0.5,
            led_index: 0,
            intensity: f,
            pixel: [320.0, 240.0],
        };
        let (recs, report) =
            accumulate_vertex_tables(&[obs(2.0)], &[v], &[Some(Rgb::x())], &ctx);
        assert_eq!(report.accepted, 1);
        let cell = recs[0].table.get(CellIndex::new(0, 0).unwrap()).unwrap();
        assert_eq!(cell.count, 1);
        assert_relative_eq!(cell.mean, Rgb::new(2.0, 0.0, 0.0), epsilon = 1e-12);

        let gray = Rgb::repeat(1.0 / 3f64.sqrt());
        let (recs, _) = accumulate_vertex_tables(&[obs(1.0), obs(3.0)], &[v], &[Some(gray)], &ctx);
        let cell = recs[0].table.get(CellIndex::new(0, 0).unwrap()).unwrap();
        assert_eq!(cell.count, 2);
        assert_relative_eq!(cell.mean, Rgb::repeat(2.0 / 3f64.sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn accumulate_accounts_for_every_observation() {
        let (traj, cam, rig, ext) = straight_down_context();
        let ctx = EstimationContext {
            camera: &cam,
            rig: &rig,
            trajectory: &traj,
            ir_extrinsic: &ext,
            saturation_level: 5.0,
        };
        let verts = [
            SceneVertex::new(Vec3::zeros(), Vec3::z(), 0).unwrap(),
            SceneVertex::new(Vec3::zeros(), Vec3::z(), 0).unwrap(),
        ];
        let mk = |id, t, i| IrObservation {
            vertex_id: id,
            frame_time: t,
            led_index: 0,
            intensity: i,
            pixel: [320.0, 240.0],
        };
        let obs = [
            mk(0, 0.5, 1.0),
            mk(0, 0.5, 0.0),
            mk(0, 0.5, 6.0),
            mk(0, 3.0, 1.0),
            mk(1, 0.5, 1.0),
        ];
        let (recs, report) = accumulate_vertex_tables(&obs, &verts, &[Some(Rgb::x()), None], &ctx);
        assert_eq!(recs.len(), 1);
        assert_eq!(report.accepted, 1);
        assert_eq!(report.accepted + report.rejected_total(), report.total);
        assert_eq!(report.rejected[&Rejection::Shadowed], 1);
        assert_eq!(report.rejected[&Rejection::Saturated], 1);
        assert_eq!(report.rejected[&Rejection::NoPose], 1);
        assert_eq!(report.rejected[&Rejection::NoColor], 1);
    }

    #[test]
    fn records_text_round_trip() {
        let mut t = BrdfTable::new();
        t.insert(CellIndex::new(2, 3).unwrap(), RgbBrdfSample::new(Rgb::new(0.1, 0.2, 0.3)).unwrap());
        let recs = vec![
            VertexReflectanceRecord {
                vertex_id: 4,
                normalized_color: Rgb::new(0.6, 0.8, 0.0),
                table: t.clone(),
            },
            VertexReflectanceRecord {
                vertex_id: 9,
                normalized_color: Rgb::new(0.0, 0.0, 1.0),
                table: BrdfTable::new(),
            },
        ];
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("vertexrecords v1 euclidean\n"));
        assert_eq!(read_records(buf.as_slice()).unwrap(), recs);
        assert!(read_records("vertexrecords v0\n".as_bytes()).is_err());
    }
}
