//! Plain-text artifact formats exchanged between stages.
//!
//! Every file starts with a `<kind> v1` header line; `#` starts a comment
//! line. Numbers are written in shortest round-trip form so a file read
//! back yields the exact values that were written.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rgbdm::estimation::{read_records, write_records, EstimationError, RgbObservation, VertexReflectanceRecord};
use rgbdm::geometry::{Led, LedRig, Pose, Quaternion, TimedPose, Vec3};
use rgbdm::segmentation::{read_labels, write_labels, SegmentationError};
use rgbdm::simulator::{GroundTruthMaterial, IrObservation, SceneVertex};
use rgbdm::Rgb;

use crate::error::{CliError, Result};

pub const SCENE_HEADER: &str = "scene v1";
pub const MATERIALS_HEADER: &str = "materials v1";
pub const TRAJECTORY_HEADER: &str = "trajectory v1";
pub const RIG_HEADER: &str = "rig v1";
pub const IR_HEADER: &str = "irobs v1";
pub const RGB_HEADER: &str = "rgbobs v1";
pub const TRUTH_HEADER: &str = "groundtruth v1";

/// Vectors within this distance of unit length are kept bit for bit.
const UNIT_TOLERANCE: f64 = 1e-12;

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

/// Writes a whole file through `body`.
pub fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Reads the data rows of a headed file as whitespace-separated fields,
/// with their 1-based line numbers.
fn read_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let reader = open(path)?;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !seen_header {
            if trimmed != header {
                return Err(CliError::bad_input(
                    path,
                    i + 1,
                    format!("expected header '{header}', found '{trimmed}'"),
                ));
            }
            seen_header = true;
            continue;
        }
        rows.push((i + 1, trimmed.split_whitespace().map(str::to_owned).collect()));
    }
    if !seen_header {
        return Err(CliError::bad_input(path, 1, format!("empty file, expected header '{header}'")));
    }
    Ok(rows)
}

pub fn parse_field<T: FromStr>(field: &str, what: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    field.parse().map_err(|e| format!("{what} '{field}': {e}"))
}

fn floats<const N: usize>(fields: &[String], what: &str) -> std::result::Result<[f64; N], String> {
    if fields.len() != N {
        return Err(format!("{what} needs {N} numbers, found {}", fields.len()));
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = parse_field(f, what)?;
    }
    Ok(out)
}

fn unit_or_normalized(v: Vec3) -> Vec3 {
    if (v.norm() - 1.0).abs() <= UNIT_TOLERANCE {
        v
    } else {
        v.normalize()
    }
}

fn material_row(m: &GroundTruthMaterial) -> String {
    let kd = m.diffuse_albedo;
    let c = m.color;
    format!(
        "material {} {} {} {} {} {} {} {}",
        kd.x, kd.y, kd.z, m.specular_strength, m.lobe_exponent, c.x, c.y, c.z
    )
}

fn parse_material(fields: &[String]) -> std::result::Result<GroundTruthMaterial, String> {
    let [kr, kg, kb, ks, e, cr, cg, cb] = floats::<8>(fields, "material")?;
    let color = Rgb::new(cr, cg, cb);
    let mut m = GroundTruthMaterial::new(Rgb::new(kr, kg, kb), ks, e, color).map_err(|e| e.to_string())?;
    if (color.norm() - 1.0).abs() <= UNIT_TOLERANCE {
        m.color = color;
    }
    Ok(m)
}

/// Scene file: `material kd_r kd_g kd_b ks exponent c_r c_g c_b` rows
/// followed by `vertex px py pz nx ny nz material` rows; vertex ids are
/// row order.
pub fn write_scene(path: &Path, vertices: &[SceneVertex], materials: &[GroundTruthMaterial]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{SCENE_HEADER}")?;
        for m in materials {
            writeln!(w, "{}", material_row(m))?;
        }
        for v in vertices {
            let (p, n) = (v.position, v.normal);
            writeln!(w, "vertex {} {} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z, v.material_id)?;
        }
        Ok(())
    })
}

pub fn read_scene(path: &Path) -> Result<(Vec<SceneVertex>, Vec<GroundTruthMaterial>)> {
    let mut vertices = Vec::new();
    let mut materials = Vec::new();
    for (line, fields) in read_rows(path, SCENE_HEADER)? {
        let bad = |msg: String| CliError::bad_input(path, line, msg);
        match fields[0].as_str() {
            "material" => materials.push(parse_material(&fields[1..]).map_err(bad)?),
            "vertex" => {
                if fields.len() != 8 {
                    return Err(bad(format!("vertex needs 7 fields, found {}", fields.len() - 1)));
                }
                let [px, py, pz, nx, ny, nz] = floats::<6>(&fields[1..7], "vertex").map_err(bad)?;
                let material_id: usize = parse_field(&fields[7], "material id").map_err(bad)?;
                let normal = Vec3::new(nx, ny, nz);
                if !(normal.norm() > 0.0) {
                    return Err(bad("zero normal".into()));
                }
                vertices.push(SceneVertex {
                    position: Vec3::new(px, py, pz),
                    normal: unit_or_normalized(normal),
                    material_id,
                });
            }
            other => return Err(bad(format!("unknown row kind '{other}'"))),
        }
    }
    if let Some((id, v)) = vertices.iter().enumerate().find(|(_, v)| v.material_id >= materials.len()) {
        return Err(CliError::bad_input(
            path,
            1,
            format!("vertex {id} references material {} of {}", v.material_id, materials.len()),
        ));
    }
    Ok((vertices, materials))
}

pub fn read_materials(path: &Path) -> Result<Vec<GroundTruthMaterial>> {
    read_rows(path, MATERIALS_HEADER)?
        .into_iter()
        .map(|(line, fields)| match fields[0].as_str() {
            "material" => parse_material(&fields[1..]).map_err(|m| CliError::bad_input(path, line, m)),
            other => Err(CliError::bad_input(path, line, format!("unknown row kind '{other}'"))),
        })
        .collect()
}

pub fn write_materials(path: &Path, materials: &[GroundTruthMaterial]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{MATERIALS_HEADER}")?;
        for m in materials {
            writeln!(w, "{}", material_row(m))?;
        }
        Ok(())
    })
}

/// Trajectory rows: `t qw qx qy qz tx ty tz`.
pub fn write_trajectory(path: &Path, trajectory: &[TimedPose]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for p in trajectory {
            let [qw, qx, qy, qz] = p.pose.rotation.components();
            let t = p.pose.translation;
            writeln!(w, "{} {qw} {qx} {qy} {qz} {} {} {}", p.timestamp, t.x, t.y, t.z)?;
        }
        Ok(())
    })
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TimedPose>> {
    let trajectory = read_rows(path, TRAJECTORY_HEADER)?
        .into_iter()
        .map(|(line, fields)| {
            let [t, qw, qx, qy, qz, tx, ty, tz] =
                floats::<8>(&fields, "pose").map_err(|m| CliError::bad_input(path, line, m))?;
            Ok(TimedPose::new(Pose::new(Quaternion::new(qw, qx, qy, qz), Vec3::new(tx, ty, tz)), t))
        })
        .collect::<Result<Vec<_>>>()?;
    rgbdm::simulator::validate_trajectory(&trajectory).map_err(|e| CliError::bad_input(path, 1, e.to_string()))?;
    Ok(trajectory)
}

/// Rig rows: `x y z brightness`, positions in the IR camera frame.
pub fn read_rig(path: &Path) -> Result<LedRig> {
    let leds = read_rows(path, RIG_HEADER)?
        .into_iter()
        .map(|(line, fields)| {
            let [x, y, z, b] = floats::<4>(&fields, "led").map_err(|m| CliError::bad_input(path, line, m))?;
            Ok(Led {
                position: Vec3::new(x, y, z),
                brightness: b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LedRig::new(leds).map_err(|e| CliError::bad_input(path, 1, e.to_string()))
}

pub fn write_rig(path: &Path, rig: &LedRig) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{RIG_HEADER}")?;
        for led in rig.leds() {
            let p = led.position;
            writeln!(w, "{} {} {} {}", p.x, p.y, p.z, led.brightness)?;
        }
        Ok(())
    })
}

/// IR rows: `vertex_id frame_time led_index intensity px py`.
pub fn write_ir(path: &Path, observations: &[IrObservation]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{IR_HEADER}")?;
        for o in observations {
            writeln!(
                w,
                "{} {} {} {} {} {}",
                o.vertex_id, o.frame_time, o.led_index, o.intensity, o.pixel[0], o.pixel[1]
            )?;
        }
        Ok(())
    })
}

pub fn read_ir(path: &Path) -> Result<Vec<IrObservation>> {
    read_rows(path, IR_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let parse = || -> std::result::Result<IrObservation, String> {
                if f.len() != 6 {
                    return Err(format!("expected 6 fields, found {}", f.len()));
                }
                Ok(IrObservation {
                    vertex_id: parse_field(&f[0], "vertex id")?,
                    frame_time: parse_field(&f[1], "frame time")?,
                    led_index: parse_field(&f[2], "led index")?,
                    intensity: parse_field(&f[3], "intensity")?,
                    pixel: [parse_field(&f[4], "pixel x")?, parse_field(&f[5], "pixel y")?],
                })
            };
            parse().map_err(|m| CliError::bad_input(path, line, m))
        })
        .collect()
}

/// Colour rows: `vertex_id r g b omega_out_deg`.
pub fn write_rgb(path: &Path, observations: &[RgbObservation]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{RGB_HEADER}")?;
        for o in observations {
            writeln!(w, "{} {} {} {} {}", o.vertex_id, o.rgb.x, o.rgb.y, o.rgb.z, o.omega_out_angle)?;
        }
        Ok(())
    })
}

pub fn read_rgb(path: &Path) -> Result<Vec<RgbObservation>> {
    read_rows(path, RGB_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let parse = || -> std::result::Result<RgbObservation, String> {
                if f.len() != 5 {
                    return Err(format!("expected 5 fields, found {}", f.len()));
                }
                let [r, g, b, angle] = floats::<4>(&f[1..], "colour sample")?;
                Ok(RgbObservation {
                    vertex_id: parse_field(&f[0], "vertex id")?,
                    rgb: Rgb::new(r, g, b),
                    omega_out_angle: angle,
                })
            };
            parse().map_err(|m| CliError::bad_input(path, line, m))
        })
        .collect()
}

/// Ground truth rows: `vertex_id material`.
pub fn write_truth(path: &Path, vertices: &[SceneVertex]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{TRUTH_HEADER}")?;
        for (id, v) in vertices.iter().enumerate() {
            writeln!(w, "{id} {}", v.material_id)?;
        }
        Ok(())
    })
}

pub fn read_truth(path: &Path) -> Result<BTreeMap<usize, usize>> {
    let mut out = BTreeMap::new();
    for (line, f) in read_rows(path, TRUTH_HEADER)? {
        let bad = |m: String| CliError::bad_input(path, line, m);
        if f.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", f.len())));
        }
        let v: usize = parse_field(&f[0], "vertex id").map_err(bad)?;
        let m: usize = parse_field(&f[1], "material").map_err(bad)?;
        if out.insert(v, m).is_some() {
            return Err(bad(format!("vertex {v} listed twice")));
        }
    }
    Ok(out)
}

pub fn save_records(path: &Path, records: &[VertexReflectanceRecord]) -> Result<()> {
    write_file(path, |w| write_records(records, w))
}

pub fn load_records(path: &Path) -> Result<Vec<VertexReflectanceRecord>> {
    read_records(open(path)?).map_err(|e| match e {
        EstimationError::Parse { line, msg } => CliError::bad_input(path, line, msg),
        EstimationError::Io(e) => CliError::io(path, e),
        other => CliError::bad_input(path, 0, other.to_string()),
    })
}

pub fn save_labels(path: &Path, labels: &BTreeMap<usize, Option<usize>>) -> Result<()> {
    write_file(path, |w| write_labels(labels, w))
}

pub fn load_labels(path: &Path) -> Result<BTreeMap<usize, Option<usize>>> {
    read_labels(open(path)?).map_err(|e| match e {
        SegmentationError::Parse { line, msg } => CliError::bad_input(path, line, msg),
        SegmentationError::Io(e) => CliError::io(path, e),
        other => CliError::bad_input(path, 0, other.to_string()),
    })
}
