//! Re-rendering from estimated reflectance and evaluation against ground
//! truth.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::brdf_table::{BrdfTable, CompleteBrdfTable, Rgb};
use crate::geometry::{half_diff_angles, project, Led, PinholeCamera, Pose, Vec3};
use crate::segmentation::MaterialGroups;
use crate::simulator::{vignette, GroundTruthMaterial, SceneVertex};

/// Display gamma applied when writing images.
pub const GAMMA: f64 = 1.0 / 2.2;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Linear RGB image, row-major with the origin at the top left.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Result<Self, RenderError> {
        if width == 0 || height == 0 {
            return Err(RenderError::EmptyImage { width, height });
        }
        Ok(Self {
            width,
            height,
            pixels: vec![Rgb::zeros(); width as usize * height as usize],
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: Rgb) {
        self.pixels[(y * self.width + x) as usize] = value;
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    /// Binary PPM (P6, maxval 255) with values clamped to [0, 1] and
    /// gamma encoded.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|p| p.iter().map(|c| encode(*c)).collect::<Vec<_>>())
            .collect();
        w.write_all(&bytes)
    }
}

fn encode(c: f64) -> u8 {
    let c = if c.is_finite() { c.clamp(0.0, 1.0) } else { 0.0 };
    (c.powf(GAMMA) * 255.0).round() as u8
}

/// Orthographic view of a unit sphere lit by a directional light. The
/// viewer looks down -z; pixels outside the sphere stay black.
pub fn render_material_sphere(table: &CompleteBrdfTable, light_direction: &Vec3, resolution: u32) -> Image {
    let res = resolution.max(1);
    let mut image = Image::new(res, res).expect("positive resolution");
    let Some(l) = light_direction.try_normalize(0.0) else {
        return image;
    };
    let view = Vec3::z();
    let rows: Vec<Vec<Rgb>> = (0..res)
        .into_par_iter()
        .map(|y| {
            (0..res)
                .map(|x| {
                    let px = (x as f64 + 0.5) / res as f64 * 2.0 - 1.0;
                    let py = 1.0 - (y as f64 + 0.5) / res as f64 * 2.0;
                    let r2 = px * px + py * py;
                    if r2 > 1.0 {
                        return Rgb::zeros();
                    }
                    let n = Vec3::new(px, py, (1.0 - r2).sqrt());
                    shade(table, &n, &l, &view).unwrap_or_else(Rgb::zeros)
                })
                .collect()
        })
        .collect();
    for (y, row) in rows.into_iter().enumerate() {
        for (x, v) in row.into_iter().enumerate() {
            image.set(x as u32, y as u32, v);
        }
    }
    image
}

/// Table value times the cosine of incidence, or `None` when the light is
/// below the surface.
pub fn shade(table: &CompleteBrdfTable, n: &Vec3, l: &Vec3, v: &Vec3) -> Option<Rgb> {
    let n_dot_l = n.dot(l);
    if n_dot_l <= 0.0 || n.dot(v) <= 0.0 {
        return None;
    }
    let angles = half_diff_angles(n, l, v).ok()?;
    Some(table.lookup(&angles) * n_dot_l)
}

/// Estimated reflectance used to re-render a scene.
#[derive(Debug, Clone, Copy)]
pub struct SceneMaterials<'a> {
    /// Per-vertex group label.
    pub labels: &'a [Option<usize>],
    /// Completed table per group.
    pub tables: &'a [CompleteBrdfTable],
    /// Per-vertex Lambertian reflectance for vertices without a usable group.
    pub lambertian: &'a [f64],
}

impl SceneMaterials<'_> {
    /// Scalar IR reflectance of a vertex for the given directions. Colour
    /// tables hold unit colour times reflectance, so the norm is used.
    fn reflectance(&self, vertex_id: usize, n: &Vec3, l: &Vec3, v: &Vec3) -> f64 {
        let table = self
            .labels
            .get(vertex_id)
            .copied()
            .flatten()
            .and_then(|k| self.tables.get(k));
        match table {
            Some(t) => half_diff_angles(n, l, v).map_or(0.0, |a| t.lookup(&a).norm()),
            None => self.lambertian.get(vertex_id).copied().unwrap_or(0.0),
        }
    }
}

/// One vertex as it appears in a re-rendered frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatSample {
    pub vertex_id: usize,
    pub pixel: [f64; 2],
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub image: Image,
    pub samples: Vec<SplatSample>,
}

/// Re-renders one IR frame by splatting every visible vertex to its nearest
/// pixel; the closest vertex wins a pixel.
pub fn rerender_ir_frame(
    scene: &[SceneVertex],
    materials: &SceneMaterials<'_>,
    ir_pose: &Pose,
    led: &Led,
    camera: &PinholeCamera,
) -> RenderedFrame {
    let led_world = ir_pose.transform_point(&led.position);
    let center = ir_pose.center();
    let samples: Vec<(SplatSample, f64)> = scene
        .par_iter()
        .enumerate()
        .filter_map(|(id, vertex)| {
            let pixel = project(camera, ir_pose, &vertex.position).ok()?;
            let to_cam = center - vertex.position;
            if to_cam.dot(&vertex.normal) <= 0.0 {
                return None;
            }
            let to_led = led_world - vertex.position;
            let d2 = to_led.norm_squared();
            let l = to_led.try_normalize(0.0)?;
            let v = to_cam.try_normalize(0.0)?;
            let n_dot_l = vertex.normal.dot(&l);
            let intensity = if n_dot_l > 0.0 {
                let f = materials.reflectance(id, &vertex.normal, &l, &v);
                vignette(pixel, camera) * f * n_dot_l * led.brightness / d2
            } else {
                0.0
            };
            let depth = ir_pose.inverse_transform_point(&vertex.position).z;
            Some((
                SplatSample {
                    vertex_id: id,
                    pixel,
                    intensity,
                },
                depth,
            ))
        })
        .collect();
    let mut image = Image::new(camera.width, camera.height).expect("validated camera");
    let mut zbuf = vec![f64::INFINITY; camera.width as usize * camera.height as usize];
    for (s, depth) in &samples {
        let x = s.pixel[0].floor();
        let y = s.pixel[1].floor();
        if x < 0.0 || y < 0.0 || x >= camera.width as f64 || y >= camera.height as f64 {
            continue;
        }
        let (x, y) = (x as u32, y as u32);
        let slot = (y * camera.width + x) as usize;
        if *depth < zbuf[slot] {
            zbuf[slot] = *depth;
            image.set(x, y, Rgb::repeat(s.intensity));
        }
    }
    RenderedFrame {
        image,
        samples: samples.into_iter().map(|(s, _)| s).collect(),
    }
}

/// Root mean square difference between the measured cells of a table and
/// the ground truth evaluated at cell centres. `None` for tables without
/// measured cells.
pub fn table_rmse(table: &BrdfTable, truth: &GroundTruthMaterial) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (cell, c) in table.iter_measured() {
        let expected = truth.eval_rgb(&cell.center());
        sum += (c.mean - expected).norm_squared();
        n += 3;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub group_counts: Vec<usize>,
    /// Correctly labelled over classified vertices; 1.0 when nothing is
    /// classified, see `purity_defined`.
    pub purity: f64,
    pub purity_defined: bool,
    pub classified_fraction: f64,
    /// Per group: RMSE of its measured cells against the matched material.
    pub brdf_rmse_per_material: Vec<Option<f64>>,
    /// Group to ground-truth material.
    pub matched_labels: BTreeMap<usize, usize>,
}

/// Greedy maximum-overlap matching of groups to materials; larger overlaps
/// first, ties by lower group then lower material id.
pub fn match_labels(groups: &MaterialGroups, truth: &BTreeMap<usize, usize>) -> BTreeMap<usize, (usize, usize)> {
    let mut overlaps: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (k, g) in groups.groups.iter().enumerate() {
        for v in g {
            if let Some(m) = truth.get(v) {
                *overlaps.entry((k, *m)).or_default() += 1;
            }
        }
    }
    let mut pairs: Vec<((usize, usize), usize)> = overlaps.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut used_groups = BTreeSet::new();
    let mut used_materials = BTreeSet::new();
    let mut out = BTreeMap::new();
    for ((k, m), count) in pairs {
        if used_groups.contains(&k) || used_materials.contains(&m) {
            continue;
        }
        used_groups.insert(k);
        used_materials.insert(m);
        out.insert(k, (m, count));
    }
    out
}

/// Scores a segmentation and its per-group tables against ground truth.
/// `truth` maps vertex id to material index into `truth_materials`;
/// `estimated_tables` is indexed by group.
pub fn evaluate(
    groups: &MaterialGroups,
    truth: &BTreeMap<usize, usize>,
    estimated_tables: &[BrdfTable],
    truth_materials: &[GroundTruthMaterial],
) -> EvalReport {
    let matching = match_labels(groups, truth);
    let classified = groups.classified_count();
    let sampled = groups.sampled_count();
    let correct: usize = matching.values().map(|(_, c)| c).sum();
    let brdf_rmse_per_material = (0..groups.groups.len())
        .map(|k| {
            let (m, _) = matching.get(&k)?;
            table_rmse(estimated_tables.get(k)?, truth_materials.get(*m)?)
        })
        .collect();
    EvalReport {
        group_counts: groups.groups.iter().map(BTreeSet::len).collect(),
        purity: if classified > 0 {
            correct as f64 / classified as f64
        } else {
            1.0
        },
        purity_defined: classified > 0,
        classified_fraction: if sampled > 0 {
            classified as f64 / sampled as f64
        } else {
            0.0
        },
        brdf_rmse_per_material,
        matched_labels: matching.into_iter().map(|(k, (m, _))| (k, m)).collect(),
    }
}

impl EvalReport {
    /// Flat `key = value` lines.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let join = |items: Vec<String>| items.join(" ");
        writeln!(w, "groups = {}", self.group_counts.len())?;
        writeln!(w, "group_counts = {}", join(self.group_counts.iter().map(|c| c.to_string()).collect()))?;
        writeln!(w, "purity = {}", self.purity)?;
        writeln!(w, "purity_defined = {}", self.purity_defined)?;
        writeln!(w, "classified_fraction = {}", self.classified_fraction)?;
        writeln!(
            w,
            "brdf_rmse_per_material = {}",
            join(
                self.brdf_rmse_per_material
                    .iter()
                    .map(|r| r.map_or("nan".to_string(), |v| v.to_string()))
                    .collect()
            )
        )?;
        writeln!(
            w,
            "matched_labels = {}",
            join(self.matched_labels.iter().map(|(k, m)| format!("{k}:{m}")).collect())
        )
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Colour-only baseline: clusters per-vertex colours with meanshift and
/// treats each cluster as a group. Used only as a comparator.
pub fn color_only_groups(colors: &BTreeMap<usize, Rgb>) -> MaterialGroups {
    let ids: Vec<usize> = colors.keys().copied().collect();
    let values: Vec<Rgb> = colors.values().copied().collect();
    let bandwidth = crate::segmentation::default_bandwidth(&values)
        .ok()
        .filter(|b| *b > 0.0)
        .unwrap_or(1e-6);
    let Ok(clusters) = crate::segmentation::meanshift_with_kernel(
        &values,
        bandwidth,
        crate::segmentation::Kernel::Gaussian,
    ) else {
        return MaterialGroups::all_unclassified(ids);
    };
    MaterialGroups {
        groups: clusters
            .into_iter()
            .map(|c| c.members.into_iter().map(|i| ids[i]).collect())
            .collect(),
        unclassified: BTreeSet::new(),
    }
}
