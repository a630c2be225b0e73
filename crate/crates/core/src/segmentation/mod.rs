//! Material segmentation over the global cell table.
//!
//! Every sampled vertex scatters its per-cell reflectance means into a shared
//! 45 x 48 table. Cells whose samples split into well separated colour
//! clusters seed material groups, which then grow cell by cell.

mod diffusion;
mod meanshift;
mod propagation;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::brdf_table::{BrdfTable, CellIndex, Rgb, CELL_COUNT};
use crate::estimation::VertexReflectanceRecord;

pub use diffusion::{diffuse_labels, DEFAULT_DIFFUSION_RADIUS};
pub use meanshift::{default_bandwidth, meanshift, meanshift_with_kernel, Kernel, ModeCluster};
pub use propagation::{
    multi_material_segmentation, propagation_score, two_material_segmentation, Diagnostic,
    Segmentation,
};

/// Mahalanobis radius of the 3σ assignment rule.
pub const THREE_SIGMA: f64 = 3.0;
/// Relative ridge added to fitted covariances.
pub const COVARIANCE_EPSILON: f64 = 1e-6;
pub const SEGMENTATION_HEADER: &str = "segmentation v1";

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("no reflectance records to segment")]
    EmptyRecords,
    #[error("sample budget must be at least 1")]
    ZeroBudget,
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("vertex {0} is already in the table")]
    DuplicateVertex(usize),
    #[error("vertex {vertex} has two samples in cell ({h_bin}, {d_bin})")]
    DuplicateCell {
        vertex: usize,
        h_bin: usize,
        d_bin: usize,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tunable limits of the segmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationParams {
    pub min_cluster_size: usize,
    pub min_cell_samples: usize,
    /// Clusters below this fraction of their cell's samples are dropped.
    pub min_cluster_fraction: f64,
    /// Smallest per-group sample count a propagation fit accepts.
    pub min_fit_samples: usize,
    pub kernel: Kernel,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 10,
            min_cell_samples: 20,
            min_cluster_fraction: 0.05,
            min_fit_samples: 4,
            kernel: Kernel::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSample {
    /// Position of the vertex in [`GlobalCellTable::sampled`].
    pub slot: usize,
    pub vertex_id: usize,
    pub value: Rgb,
}

/// Per-cell lists of per-vertex reflectance samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalCellTable {
    cells: Vec<Vec<CellSample>>,
    sampled: Vec<usize>,
    slots: BTreeMap<usize, usize>,
}

impl Default for GlobalCellTable {
    fn default() -> Self {
        Self::new()
    }
}

impl GlobalCellTable {
    pub fn new() -> Self {
        Self {
            cells: vec![Vec::new(); CELL_COUNT],
            sampled: Vec::new(),
            slots: BTreeMap::new(),
        }
    }

    /// Adds one vertex with at most one sample per cell.
    pub fn add_vertex<I>(&mut self, vertex_id: usize, samples: I) -> Result<(), SegmentationError>
    where
        I: IntoIterator<Item = (CellIndex, Rgb)>,
    {
        if self.slots.contains_key(&vertex_id) {
            return Err(SegmentationError::DuplicateVertex(vertex_id));
        }
        let mut samples: Vec<(CellIndex, Rgb)> = samples.into_iter().collect();
        samples.sort_by_key(|(c, _)| c.flat());
        if let Some(w) = samples.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(SegmentationError::DuplicateCell {
                vertex: vertex_id,
                h_bin: w[0].0.h_bin(),
                d_bin: w[0].0.d_bin(),
            });
        }
        let slot = self.sampled.len();
        self.sampled.push(vertex_id);
        self.slots.insert(vertex_id, slot);
        for (cell, value) in samples {
            self.cells[cell.flat()].push(CellSample {
                slot,
                vertex_id,
                value,
            });
        }
        Ok(())
    }

    /// The sub-table holding only the vertices of `keep`, in slot order.
    pub fn restricted_to(&self, keep: &BTreeSet<usize>) -> Self {
        let mut out = Self::new();
        let mut remap = vec![None; self.sampled.len()];
        for (slot, v) in self.sampled.iter().enumerate() {
            if keep.contains(v) {
                remap[slot] = Some(out.sampled.len());
                out.slots.insert(*v, out.sampled.len());
                out.sampled.push(*v);
            }
        }
        for (cell, samples) in out.cells.iter_mut().zip(&self.cells) {
            cell.extend(samples.iter().filter_map(|s| {
                remap[s.slot].map(|slot| CellSample { slot, ..*s })
            }));
        }
        out
    }

    pub fn cell(&self, index: CellIndex) -> &[CellSample] {
        &self.cells[index.flat()]
    }

    pub(crate) fn cell_flat(&self, flat: usize) -> &[CellSample] {
        &self.cells[flat]
    }

    /// Sampled vertex ids in slot order.
    pub fn sampled(&self) -> &[usize] {
        &self.sampled
    }

    pub fn slot_of(&self, vertex_id: usize) -> Option<usize> {
        self.slots.get(&vertex_id).copied()
    }

    pub fn sample_count(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sampled.is_empty()
    }
}

/// Subsamples up to `sample_budget` vertices without replacement and
/// scatters their measured cell means into a global table.
pub fn build_global_table(
    records: &[VertexReflectanceRecord],
    sample_budget: usize,
    rng_seed: u64,
) -> Result<GlobalCellTable, SegmentationError> {
    if records.is_empty() {
        return Err(SegmentationError::EmptyRecords);
    }
    if sample_budget == 0 {
        return Err(SegmentationError::ZeroBudget);
    }
    let mut chosen: Vec<usize> = if sample_budget >= records.len() {
        (0..records.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rand::seq::index::sample(&mut rng, records.len(), sample_budget).into_vec()
    };
    chosen.sort_by_key(|&i| records[i].vertex_id);
    let mut table = GlobalCellTable::new();
    for i in chosen {
        let r = &records[i];
        table.add_vertex(r.vertex_id, r.table.iter_measured().map(|(c, cell)| (c, cell.mean)))?;
    }
    Ok(table)
}

/// Mahalanobis distance of `x` from a Gaussian. The covariance must be
/// positive definite.
pub fn mahalanobis(x: &Rgb, mean: &Rgb, covariance: &Matrix3<f64>) -> Result<f64, SegmentationError> {
    let chol = covariance
        .cholesky()
        .ok_or(SegmentationError::NotPositiveDefinite)?;
    let y = chol
        .l()
        .solve_lower_triangular(&(x - mean))
        .ok_or(SegmentationError::NotPositiveDefinite)?;
    Ok(y.norm())
}

/// A 3D Gaussian with its precision matrix cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: Rgb,
    covariance: Matrix3<f64>,
    precision: Matrix3<f64>,
}

impl Gaussian {
    /// Builds a Gaussian from a positive definite covariance.
    pub fn new(mean: Rgb, covariance: Matrix3<f64>) -> Result<Self, SegmentationError> {
        let chol = covariance
            .cholesky()
            .ok_or(SegmentationError::NotPositiveDefinite)?;
        Ok(Self {
            mean,
            covariance,
            precision: chol.inverse(),
        })
    }

    /// Fits mean and sample covariance, then adds a small ridge so
    /// degenerate sample sets stay invertible.
    pub fn fit<'a, I>(samples: I) -> Result<Self, SegmentationError>
    where
        I: IntoIterator<Item = &'a Rgb>,
        I::IntoIter: Clone,
    {
        let iter = samples.into_iter();
        let mut n = 0usize;
        let mut sum = Rgb::zeros();
        for s in iter.clone() {
            sum += s;
            n += 1;
        }
        if n == 0 {
            return Err(SegmentationError::TooFewSamples { needed: 1, found: 0 });
        }
        let mean = sum / n as f64;
        let mut scatter = Matrix3::zeros();
        for s in iter {
            let d = s - mean;
            scatter += d * d.transpose();
        }
        let covariance = if n > 1 {
            scatter / (n - 1) as f64
        } else {
            scatter
        };
        Self::new(mean, regularize(covariance, &mean))
    }

    pub fn mean(&self) -> &Rgb {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix3<f64> {
        &self.covariance
    }

    pub fn mahalanobis(&self, x: &Rgb) -> f64 {
        let d = x - self.mean;
        d.dot(&(self.precision * d)).max(0.0).sqrt()
    }
}

fn regularize(covariance: Matrix3<f64>, mean: &Rgb) -> Matrix3<f64> {
    // zero-spread clusters fall back to a scale tied to the mean magnitude
    let scale = (covariance.trace() / 3.0)
        .max(COVARIANCE_EPSILON * mean.norm_squared() / 3.0)
        .max(f64::MIN_POSITIVE);
    covariance + Matrix3::identity() * (COVARIANCE_EPSILON * scale)
}

/// A surviving meanshift cluster of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCluster {
    pub gaussian: Gaussian,
    /// Slots of the member vertices, ascending.
    pub members: Vec<usize>,
}

/// Sum of the cross Mahalanobis distances between two Gaussians' means.
pub fn separability_score(g1: &Gaussian, g2: &Gaussian) -> f64 {
    g2.mahalanobis(&g1.mean) + g1.mahalanobis(&g2.mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Group1,
    Group2,
    Ambiguous,
}

pub fn assign_3sigma(sample: &Rgb, g1: &Gaussian, g2: &Gaussian) -> Assignment {
    let d1 = g1.mahalanobis(sample);
    let d2 = g2.mahalanobis(sample);
    if d1 < THREE_SIGMA && d2 > THREE_SIGMA {
        Assignment::Group1
    } else if d1 > THREE_SIGMA && d2 < THREE_SIGMA {
        Assignment::Group2
    } else {
        Assignment::Ambiguous
    }
}

/// Meanshift clusters of one cell's samples, filtered and fitted.
pub fn cell_clusters(samples: &[CellSample], params: &SegmentationParams) -> Vec<GaussianCluster> {
    if samples.len() < params.min_cell_samples.max(2) {
        return Vec::new();
    }
    let values: Vec<Rgb> = samples.iter().map(|s| s.value).collect();
    let mean_norm = values.iter().map(|v| v.norm()).sum::<f64>() / values.len() as f64;
    let floor = (1e-6 * mean_norm).max(f64::MIN_POSITIVE);
    let bandwidth = default_bandwidth(&values).expect("at least two samples").max(floor);
    let Ok(modes) = meanshift_with_kernel(&values, bandwidth, params.kernel) else {
        return Vec::new();
    };
    let min_size = params
        .min_cluster_size
        .max((params.min_cluster_fraction * samples.len() as f64).ceil() as usize);
    modes
        .into_iter()
        .filter(|m| m.members.len() >= min_size)
        .filter_map(|m| {
            let gaussian = Gaussian::fit(m.members.iter().map(|&i| &values[i])).ok()?;
            let mut members: Vec<usize> = m.members.iter().map(|&i| samples[i].slot).collect();
            members.sort_unstable();
            Some(GaussianCluster { gaussian, members })
        })
        .collect()
}

/// Clusters every cell of the table, indexed by flat cell index.
pub fn initial_clusters(table: &GlobalCellTable, params: &SegmentationParams) -> Vec<Vec<GaussianCluster>> {
    (0..CELL_COUNT)
        .into_par_iter()
        .map(|flat| cell_clusters(table.cell_flat(flat), params))
        .collect()
}

/// Disjoint material groups plus the sampled vertices left unclassified.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaterialGroups {
    pub groups: Vec<BTreeSet<usize>>,
    pub unclassified: BTreeSet<usize>,
}

impl MaterialGroups {
    pub fn all_unclassified<I: IntoIterator<Item = usize>>(vertices: I) -> Self {
        Self {
            groups: Vec::new(),
            unclassified: vertices.into_iter().collect(),
        }
    }

    /// Groups are pairwise disjoint and together with the unclassified set
    /// cover exactly `sampled`.
    pub fn is_partition_of(&self, sampled: &[usize]) -> bool {
        let mut seen = BTreeSet::new();
        for v in self.groups.iter().flatten().chain(&self.unclassified) {
            if !seen.insert(*v) {
                return false;
            }
        }
        seen.len() == sampled.len() && sampled.iter().all(|v| seen.contains(v))
    }

    pub fn label_of(&self, vertex_id: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&vertex_id))
    }

    /// Every sampled vertex with its group, ascending by vertex id.
    pub fn labels(&self) -> BTreeMap<usize, Option<usize>> {
        let mut out: BTreeMap<usize, Option<usize>> =
            self.unclassified.iter().map(|&v| (v, None)).collect();
        for (k, g) in self.groups.iter().enumerate() {
            out.extend(g.iter().map(|&v| (v, Some(k))));
        }
        out
    }

    pub fn sampled_count(&self) -> usize {
        self.classified_count() + self.unclassified.len()
    }

    pub fn classified_count(&self) -> usize {
        self.groups.iter().map(BTreeSet::len).sum()
    }

    /// Rebuilds groups from a labelling; group count is one past the
    /// largest label.
    pub fn from_labels<I: IntoIterator<Item = (usize, Option<usize>)>>(labels: I) -> Self {
        let mut out = Self::default();
        for (v, label) in labels {
            match label {
                Some(k) => {
                    if out.groups.len() <= k {
                        out.groups.resize_with(k + 1, BTreeSet::new);
                    }
                    out.groups[k].insert(v);
                }
                None => {
                    out.unclassified.insert(v);
                }
            }
        }
        out
    }
}

/// Count-weighted merge of the member records of each group; `None` for
/// groups without any record.
pub fn merge_group_tables(groups: &MaterialGroups, records: &[VertexReflectanceRecord]) -> Vec<Option<BrdfTable>> {
    let by_vertex: BTreeMap<usize, &BrdfTable> = records.iter().map(|r| (r.vertex_id, &r.table)).collect();
    groups
        .groups
        .iter()
        .map(|g| BrdfTable::merge(g.iter().filter_map(|v| by_vertex.get(v).copied())).ok())
        .collect()
}

/// Writes `vertex_id label` lines (label -1 for unclassified) after a
/// summary block of group sizes.
pub fn write_labels<W: Write>(labels: &BTreeMap<usize, Option<usize>>, mut w: W) -> std::io::Result<()> {
    let group_count = labels.values().flatten().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; group_count];
    for k in labels.values().flatten() {
        counts[*k] += 1;
    }
    writeln!(w, "{SEGMENTATION_HEADER}")?;
    writeln!(w, "groups {group_count}")?;
    for (k, c) in counts.iter().enumerate() {
        writeln!(w, "group {k} {c}")?;
    }
    writeln!(w, "unclassified {}", labels.values().filter(|l| l.is_none()).count())?;
    writeln!(w, "vertices {}", labels.len())?;
    for (v, label) in labels {
        match label {
            Some(k) => writeln!(w, "{v} {k}")?,
            None => writeln!(w, "{v} -1")?,
        }
    }
    Ok(())
}

pub fn read_labels<R: BufRead>(reader: R) -> Result<BTreeMap<usize, Option<usize>>, SegmentationError> {
    let err = |line: usize, msg: String| SegmentationError::Parse { line, msg };
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let header = header?;
    if header.trim() != SEGMENTATION_HEADER {
        return Err(err(1, format!("expected header '{SEGMENTATION_HEADER}', found '{}'", header.trim())));
    }
    let mut expected = None;
    let mut out = BTreeMap::new();
    for (no, line) in lines {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => {}
            ["groups" | "group" | "unclassified", ..] => {}
            ["vertices", n] => {
                expected = Some(n.parse::<usize>().map_err(|e| err(no, e.to_string()))?);
            }
            [v, label] => {
                let v: usize = v.parse().map_err(|e| err(no, format!("vertex id: {e}")))?;
                let label: i64 = label.parse().map_err(|e| err(no, format!("label: {e}")))?;
                let label = match label {
                    -1 => None,
                    k if k >= 0 => Some(k as usize),
                    k => return Err(err(no, format!("invalid label {k}"))),
                };
                if out.insert(v, label).is_some() {
                    return Err(err(no, format!("vertex {v} listed twice")));
                }
            }
            _ => return Err(err(no, format!("unexpected line '{line}'"))),
        }
    }
    if let Some(n) = expected {
        if n != out.len() {
            return Err(err(0, format!("expected {n} vertices, found {}", out.len())));
        }
    }
    Ok(out)
}
