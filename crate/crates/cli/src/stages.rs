//! The five pipeline stages. Each reads its inputs from the output
//! directory (plus the config) and writes its artifacts there, so any stage
//! can be re-run on its own.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rgbdm::brdf_table::{BrdfTable, CompleteBrdfTable};
use rgbdm::estimation::{accumulate_vertex_tables, estimate_colors, EstimationContext, VertexReflectanceRecord};
use rgbdm::render_eval::{evaluate, render_material_sphere, rerender_ir_frame, EvalReport, Image, SceneMaterials};
use rgbdm::segmentation::{
    build_global_table, diffuse_labels, merge_group_tables, multi_material_segmentation,
    two_material_segmentation, MaterialGroups, SegmentationParams,
};
use rgbdm::simulator::scenes::Scene;
use rgbdm::simulator::{ir_pose_at, simulate_scan};
use rgbdm::Vec3;

use crate::config::{PipelineConfig, RigSource, SceneSource, SegmentationMode, TrajectorySource};
use crate::error::{CliError, Result};
use crate::formats;

pub const SCENE_FILE: &str = "scene.txt";
pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const IR_FILE: &str = "observations_ir.txt";
pub const RGB_FILE: &str = "observations_rgb.txt";
pub const TRUTH_FILE: &str = "ground_truth.txt";
pub const RECORDS_FILE: &str = "records.txt";
/// Labels of the sampled vertices.
pub const GROUPS_FILE: &str = "groups.txt";
/// Labels of every vertex after diffusion.
pub const LABELS_FILE: &str = "labels.txt";
pub const SCENE_IMAGE: &str = "scene_ir.ppm";
pub const REPORT_FILE: &str = "report.txt";

/// Light direction of the material sphere renders.
const SPHERE_LIGHT: [f64; 3] = [0.4, 0.5, 1.0];

pub fn material_table_file(group: usize) -> String {
    format!("material_{group}.brdf")
}

pub fn sphere_image_file(group: usize) -> String {
    format!("sphere_{group}.ppm")
}

fn out(config: &PipelineConfig, name: &str) -> PathBuf {
    config.output_dir.join(name)
}

fn ensure_output_dir(config: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&config.output_dir).map_err(|e| CliError::Io {
        path: config.output_dir.clone(),
        source: e,
    })
}

fn rig(config: &PipelineConfig) -> Result<rgbdm::geometry::LedRig> {
    match &config.rig {
        RigSource::Default => Ok(PipelineConfig::default_rig()),
        RigSource::File(p) => formats::read_rig(p),
    }
}

fn build_scene(config: &PipelineConfig) -> Result<Scene> {
    let mut scene = match &config.scene {
        SceneSource::Builtin(b) => b.build(config.vertex_count),
        SceneSource::File(p) => {
            let (vertices, materials) = formats::read_scene(p)?;
            Scene { vertices, materials }
        }
    };
    if let Some(p) = &config.materials {
        scene.materials = formats::read_materials(p)?;
        if let Some(v) = scene.vertices.iter().find(|v| v.material_id >= scene.materials.len()) {
            return Err(CliError::bad_input(
                p,
                1,
                format!("only {} materials, scene uses material {}", scene.materials.len(), v.material_id),
            ));
        }
    }
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub vertices: usize,
    pub ir_observations: usize,
    pub rgb_observations: usize,
}

pub fn simulate(config: &PipelineConfig) -> Result<SimulateSummary> {
    let scene = build_scene(config)?;
    let trajectory = match (&config.trajectory, config.orbit_trajectory()) {
        (_, Some(t)) => t,
        (TrajectorySource::File(p), None) => formats::read_trajectory(p)?,
        (TrajectorySource::Orbit, None) => unreachable!("orbit always yields a trajectory"),
    };
    let scan_config = config.scan_config(trajectory, rig(config)?);
    let scan = simulate_scan(&scene.vertices, &scene.materials, &scan_config)
        .map_err(|e| CliError::config(e.to_string()))?;
    ensure_output_dir(config)?;
    formats::write_scene(&out(config, SCENE_FILE), &scene.vertices, &scene.materials)?;
    formats::write_trajectory(&out(config, TRAJECTORY_FILE), &scan_config.trajectory)?;
    formats::write_ir(&out(config, IR_FILE), &scan.ir)?;
    formats::write_rgb(&out(config, RGB_FILE), &scan.rgb)?;
    formats::write_truth(&out(config, TRUTH_FILE), &scene.vertices)?;
    if scan.ir.is_empty() {
        warn!("simulation produced no IR observations");
    }
    info!(
        "simulated {} vertices: {} IR and {} colour observations",
        scene.vertices.len(),
        scan.ir.len(),
        scan.rgb.len()
    );
    Ok(SimulateSummary {
        vertices: scene.vertices.len(),
        ir_observations: scan.ir.len(),
        rgb_observations: scan.rgb.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub records: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
}

pub fn estimate(config: &PipelineConfig) -> Result<EstimateSummary> {
    let (vertices, _) = formats::read_scene(&out(config, SCENE_FILE))?;
    let trajectory = formats::read_trajectory(&out(config, TRAJECTORY_FILE))?;
    let ir = formats::read_ir(&out(config, IR_FILE))?;
    let rgb = formats::read_rgb(&out(config, RGB_FILE))?;
    let rig = rig(config)?;
    let colors = estimate_colors(&rgb, vertices.len(), config.saturation_level);
    let extrinsic = config.ir_extrinsic_pose();
    let ctx = EstimationContext {
        camera: &config.camera,
        rig: &rig,
        trajectory: &trajectory,
        ir_extrinsic: &extrinsic,
        saturation_level: config.saturation_level,
    };
    let (records, report) = accumulate_vertex_tables(&ir, &vertices, &colors, &ctx);
    formats::save_records(&out(config, RECORDS_FILE), &records)?;
    if records.is_empty() {
        warn!("no vertex received a reflectance sample");
    }
    let rejected: BTreeMap<String, usize> =
        report.rejected.iter().map(|(r, n)| (r.name().to_string(), *n)).collect();
    info!(
        "estimated {} vertex tables from {} of {} IR observations; rejected {:?}",
        records.len(),
        report.accepted,
        report.total,
        rejected
    );
    Ok(EstimateSummary {
        records: records.len(),
        accepted: report.accepted,
        rejected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSummary {
    pub group_sizes: Vec<usize>,
    pub unclassified: usize,
    pub diffused_labelled: usize,
}

pub fn segment(config: &PipelineConfig) -> Result<SegmentSummary> {
    let records = formats::load_records(&out(config, RECORDS_FILE))?;
    let (vertices, _) = formats::read_scene(&out(config, SCENE_FILE))?;
    let table = build_global_table(&records, config.sample_budget, config.noise.rng_seed)
        .map_err(|e| CliError::Numeric(format!("segmentation: {e}")))?;
    let params = SegmentationParams::default();
    let seg = match config.segmentation {
        SegmentationMode::Two => two_material_segmentation(&table, &params),
        SegmentationMode::Multi => multi_material_segmentation(&table, &params),
    };
    if let Some(d) = seg.diagnostic {
        warn!("segmentation: {d}; every sampled vertex is unclassified");
    }
    let positions: Vec<Vec3> = vertices.iter().map(|v| v.position).collect();
    let diffused = diffuse_labels(&seg.groups, &positions, config.diffusion_radius);
    formats::save_labels(&out(config, GROUPS_FILE), &seg.groups.labels())?;
    formats::save_labels(&out(config, LABELS_FILE), &diffused.iter().copied().enumerate().collect())?;
    for (k, table) in merge_group_tables(&seg.groups, &records).iter().enumerate() {
        if let Some(t) = table {
            let path = out(config, &material_table_file(k));
            formats::write_file(&path, |w| t.write_to(w))?;
        }
    }
    let summary = SegmentSummary {
        group_sizes: seg.groups.groups.iter().map(|g| g.len()).collect(),
        unclassified: seg.groups.unclassified.len(),
        diffused_labelled: diffused.iter().filter(|l| l.is_some()).count(),
    };
    info!(
        "segmented {} sampled vertices into groups {:?}, {} unclassified, {} vertices labelled after diffusion",
        table.sampled().len(),
        summary.group_sizes,
        summary.unclassified,
        summary.diffused_labelled
    );
    Ok(summary)
}

fn load_groups(config: &PipelineConfig) -> Result<MaterialGroups> {
    Ok(MaterialGroups::from_labels(formats::load_labels(&out(config, GROUPS_FILE))?))
}

fn save_image(path: &Path, image: &Image) -> Result<()> {
    formats::write_file(path, |w| image.write_ppm(w))
}

/// Mean reflectance of each vertex's measured cells; zero without a record.
fn lambertian_fallback(records: &[VertexReflectanceRecord], vertex_count: usize) -> Vec<f64> {
    let mut out = vec![0.0; vertex_count];
    for r in records.iter().filter(|r| r.vertex_id < vertex_count) {
        let norms: Vec<f64> = r.table.iter_measured().map(|(_, c)| c.mean.norm()).collect();
        if !norms.is_empty() {
            out[r.vertex_id] = norms.iter().sum::<f64>() / norms.len() as f64;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSummary {
    pub spheres: Vec<PathBuf>,
    pub scene_image: PathBuf,
}

pub fn render(config: &PipelineConfig) -> Result<RenderSummary> {
    let groups = load_groups(config)?;
    let records = formats::load_records(&out(config, RECORDS_FILE))?;
    let (vertices, _) = formats::read_scene(&out(config, SCENE_FILE))?;
    let trajectory = formats::read_trajectory(&out(config, TRAJECTORY_FILE))?;
    let labels = formats::load_labels(&out(config, LABELS_FILE))?;
    let tables: Vec<CompleteBrdfTable> = merge_group_tables(&groups, &records)
        .into_iter()
        .enumerate()
        .map(|(k, t)| {
            t.ok_or_else(|| CliError::Numeric(format!("group {k} has no reflectance samples")))?
                .complete()
                .map_err(|e| CliError::Numeric(format!("group {k}: {e}")))
        })
        .collect::<Result<_>>()?;
    ensure_output_dir(config)?;
    let light = Vec3::from(SPHERE_LIGHT).normalize();
    let mut spheres = Vec::new();
    for (k, table) in tables.iter().enumerate() {
        let path = out(config, &sphere_image_file(k));
        save_image(&path, &render_material_sphere(table, &light, config.sphere_resolution))?;
        spheres.push(path);
    }
    let per_vertex: Vec<Option<usize>> = (0..vertices.len())
        .map(|v| labels.get(&v).copied().flatten().filter(|k| *k < tables.len()))
        .collect();
    let lambertian = lambertian_fallback(&records, vertices.len());
    let materials = SceneMaterials {
        labels: &per_vertex,
        tables: &tables,
        lambertian: &lambertian,
    };
    let rig = rig(config)?;
    let (t0, t1) = (trajectory[0].timestamp, trajectory[trajectory.len() - 1].timestamp);
    let pose = ir_pose_at(&trajectory, &config.ir_extrinsic_pose(), 0.5 * (t0 + t1))
        .ok_or_else(|| CliError::Numeric("no pose at the middle of the trajectory".into()))?;
    let frame = rerender_ir_frame(&vertices, &materials, &pose, &rig.leds()[0], &config.camera);
    let scene_image = out(config, SCENE_IMAGE);
    save_image(&scene_image, &frame.image)?;
    info!("rendered {} material spheres and the scene", spheres.len());
    Ok(RenderSummary { spheres, scene_image })
}

pub fn evaluate_stage(config: &PipelineConfig) -> Result<EvalReport> {
    let groups = load_groups(config)?;
    let truth = formats::read_truth(&out(config, TRUTH_FILE))?;
    let (_, materials) = formats::read_scene(&out(config, SCENE_FILE))?;
    let records = formats::load_records(&out(config, RECORDS_FILE))?;
    let tables: Vec<BrdfTable> = merge_group_tables(&groups, &records)
        .into_iter()
        .map(Option::unwrap_or_default)
        .collect();
    let report = evaluate(&groups, &truth, &tables, &materials);
    formats::write_file(&out(config, REPORT_FILE), |w| report.write_to(w))?;
    info!(
        "purity {:.4}, classified fraction {:.4}",
        report.purity, report.classified_fraction
    );
    Ok(report)
}

/// Runs every stage in order, stopping at the first failure.
pub fn pipeline(config: &PipelineConfig) -> Result<EvalReport> {
    simulate(config)?;
    estimate(config)?;
    segment(config)?;
    render(config)?;
    evaluate_stage(config)
}

