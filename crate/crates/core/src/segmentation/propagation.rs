//! Seeding and cell-by-cell growth of material groups.

use std::collections::{BTreeSet, VecDeque};

use rayon::prelude::*;

use crate::brdf_table::CELL_COUNT;

use super::{
    assign_3sigma, initial_clusters, separability_score, Assignment, CellSample, Gaussian,
    GaussianCluster, GlobalCellTable, MaterialGroups, SegmentationParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnostic {
    /// No cell holds two clusters with a positive separability score.
    NoSeparableCell,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diagnostic::NoSeparableCell => write!(f, "no cell separates two clusters"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub groups: MaterialGroups,
    pub diagnostic: Option<Diagnostic>,
    /// Propagation steps taken over all rounds.
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Free,
    One,
    Two,
}

/// Working state of one growth round, indexed by slot.
struct Round {
    side: Vec<Side>,
    /// Vertices owned by earlier rounds; they may join the competitor side
    /// but never the grown group.
    locked: Vec<bool>,
    n1: usize,
    n2: usize,
    consumed: Vec<bool>,
}

impl Round {
    fn new(locked: Vec<bool>) -> Self {
        Self {
            side: vec![Side::Free; locked.len()],
            locked,
            n1: 0,
            n2: 0,
            consumed: vec![false; CELL_COUNT],
        }
    }

    fn assign_cell(&mut self, samples: &[CellSample], g1: &Gaussian, g2: &Gaussian) {
        for s in samples {
            if self.side[s.slot] != Side::Free {
                continue;
            }
            match assign_3sigma(&s.value, g1, g2) {
                Assignment::Group1 if !self.locked[s.slot] => {
                    self.side[s.slot] = Side::One;
                    self.n1 += 1;
                }
                Assignment::Group2 => {
                    self.side[s.slot] = Side::Two;
                    self.n2 += 1;
                }
                _ => {}
            }
        }
    }

    /// Grows both sides until no unconsumed cell scores above zero.
    fn propagate(&mut self, table: &GlobalCellTable, params: &SegmentationParams) -> usize {
        let mut steps = 0;
        loop {
            let scores: Vec<Option<(f64, Gaussian, Gaussian)>> = (0..CELL_COUNT)
                .into_par_iter()
                .map(|flat| {
                    if self.consumed[flat] {
                        return None;
                    }
                    score_cell(
                        table.cell_flat(flat),
                        |s| self.side[s.slot],
                        self.n1,
                        self.n2,
                        params,
                    )
                })
                .collect();
            let mut best: Option<(usize, f64, Gaussian, Gaussian)> = None;
            for (flat, s) in scores.into_iter().enumerate() {
                if let Some((score, g1, g2)) = s {
                    if score > 0.0 && best.as_ref().map_or(true, |b| score > b.1) {
                        best = Some((flat, score, g1, g2));
                    }
                }
            }
            let Some((flat, _, g1, g2)) = best else {
                return steps;
            };
            self.assign_cell(table.cell_flat(flat), &g1, &g2);
            self.consumed[flat] = true;
            steps += 1;
            if cfg!(debug_assertions) {
                let count = |side| self.side.iter().filter(|s| **s == side).count();
                assert_eq!((count(Side::One), count(Side::Two)), (self.n1, self.n2));
                assert!(self.side.iter().zip(&self.locked).all(|(s, l)| !(*l && *s == Side::One)));
            }
        }
    }

    fn members(&self, side: Side, table: &GlobalCellTable) -> BTreeSet<usize> {
        self.side
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == side)
            .map(|(slot, _)| table.sampled()[slot])
            .collect()
    }
}

/// Fits one Gaussian per side from the cell's samples and scores their
/// separability. A side present with fewer than half of its vertices scores
/// zero, reported as `None`.
fn score_cell<F>(
    samples: &[CellSample],
    side_of: F,
    n1: usize,
    n2: usize,
    params: &SegmentationParams,
) -> Option<(f64, Gaussian, Gaussian)>
where
    F: Fn(&CellSample) -> Side,
{
    let (mut c1, mut c2) = (0usize, 0usize);
    for s in samples {
        match side_of(s) {
            Side::One => c1 += 1,
            Side::Two => c2 += 1,
            Side::Free => {}
        }
    }
    if n1 == 0 || n2 == 0 || 2 * c1 < n1 || 2 * c2 < n2 {
        return None;
    }
    let min_fit = params.min_fit_samples.max(1);
    if c1 < min_fit || c2 < min_fit {
        return None;
    }
    let fit = |side: Side| {
        Gaussian::fit(samples.iter().filter(|s| side_of(s) == side).map(|s| &s.value))
    };
    let (g1, g2) = (fit(Side::One).ok()?, fit(Side::Two).ok()?);
    Some((separability_score(&g1, &g2), g1, g2))
}

/// Score of one cell against two vertex groups, with the Gaussians fitted
/// to each group's samples in the cell. Zero when either group has fewer
/// than half of its vertices in the cell.
pub fn propagation_score(
    samples: &[CellSample],
    mat1: &BTreeSet<usize>,
    mat2: &BTreeSet<usize>,
    params: &SegmentationParams,
) -> (f64, Option<(Gaussian, Gaussian)>) {
    let side = |s: &CellSample| {
        if mat1.contains(&s.vertex_id) {
            Side::One
        } else if mat2.contains(&s.vertex_id) {
            Side::Two
        } else {
            Side::Free
        }
    };
    match score_cell(samples, side, mat1.len(), mat2.len(), params) {
        Some((score, g1, g2)) => (score, Some((g1, g2))),
        None => (0.0, None),
    }
}

/// The two largest clusters of a cell, larger first.
fn two_largest(clusters: &[GaussianCluster]) -> Option<(&GaussianCluster, &GaussianCluster)> {
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by(|&a, &b| clusters[b].members.len().cmp(&clusters[a].members.len()).then(a.cmp(&b)));
    match order.as_slice() {
        [a, b, ..] => Some((&clusters[*a], &clusters[*b])),
        _ => None,
    }
}

fn debug_check(groups: impl FnOnce() -> MaterialGroups, table: &GlobalCellTable) {
    if cfg!(debug_assertions) {
        assert!(groups().is_partition_of(table.sampled()), "material groups lost their partition");
    }
}

/// Splits the sampled vertices into two materials seeded at the most
/// separable cell.
pub fn two_material_segmentation(table: &GlobalCellTable, params: &SegmentationParams) -> Segmentation {
    let clusters = initial_clusters(table, params);
    let mut seed: Option<(usize, f64)> = None;
    for (flat, cell) in clusters.iter().enumerate() {
        if let Some((a, b)) = two_largest(cell) {
            let score = separability_score(&a.gaussian, &b.gaussian);
            if score > 0.0 && seed.map_or(true, |(_, s)| score > s) {
                seed = Some((flat, score));
            }
        }
    }
    let Some((seed_flat, _)) = seed else {
        return Segmentation {
            groups: MaterialGroups::all_unclassified(table.sampled().iter().copied()),
            diagnostic: Some(Diagnostic::NoSeparableCell),
            steps: 0,
        };
    };
    let (a, b) = two_largest(&clusters[seed_flat]).expect("seed cell has two clusters");
    let mut round = Round::new(vec![false; table.sampled().len()]);
    round.assign_cell(table.cell_flat(seed_flat), &a.gaussian, &b.gaussian);
    round.consumed[seed_flat] = true;
    let steps = round.propagate(table, params);
    let groups = MaterialGroups {
        groups: vec![round.members(Side::One, table), round.members(Side::Two, table)],
        unclassified: round.members(Side::Free, table),
    };
    debug_check(|| groups.clone(), table);
    Segmentation {
        groups,
        diagnostic: None,
        steps,
    }
}

/// Peels off one material per round, seeded at the cluster farthest from its
/// nearest same-cell competitor, until a round finds nothing new. Each group
/// is then peeled again on its own samples and replaced by its parts when it
/// yields two or more.
pub fn multi_material_segmentation(table: &GlobalCellTable, params: &SegmentationParams) -> Segmentation {
    let first = peel_rounds(table, params);
    if first.diagnostic.is_some() {
        return first;
    }
    let mut steps = first.steps;
    let mut unclassified = first.groups.unclassified;
    let mut pending: VecDeque<BTreeSet<usize>> = first.groups.groups.into();
    let mut groups = Vec::new();
    while let Some(group) = pending.pop_front() {
        let split = peel_rounds(&table.restricted_to(&group), params);
        let floor = params.min_cluster_size.max((params.min_cluster_fraction * group.len() as f64).ceil() as usize);
        let parts = &split.groups.groups;
        if parts.len() >= 2 && parts.iter().all(|p| p.len() >= floor) {
            steps += split.steps;
            unclassified.extend(split.groups.unclassified);
            pending.extend(split.groups.groups);
        } else {
            groups.push(group);
        }
    }
    let groups = MaterialGroups { groups, unclassified };
    debug_check(|| groups.clone(), table);
    Segmentation {
        groups,
        diagnostic: None,
        steps,
    }
}

fn peel_rounds(table: &GlobalCellTable, params: &SegmentationParams) -> Segmentation {
    let clusters = initial_clusters(table, params);
    let n = table.sampled().len();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut tried: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut groups: Vec<BTreeSet<usize>> = Vec::new();
    let mut steps = 0;
    loop {
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for (flat, cell) in clusters.iter().enumerate() {
            for (i, c) in cell.iter().enumerate() {
                if tried.contains(&(flat, i)) {
                    continue;
                }
                let free = c.members.iter().filter(|&&m| label[m].is_none()).count();
                if 2 * free <= c.members.len() {
                    continue;
                }
                let nearest = cell
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(j, o)| (j, separability_score(&c.gaussian, &o.gaussian)))
                    .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
                if let Some((j, score)) = nearest {
                    if score > 0.0 && best.map_or(true, |b| score > b.0) {
                        best = Some((score, flat, i, j));
                    }
                }
            }
        }
        let Some((_, flat, i, j)) = best else {
            break;
        };
        tried.insert((flat, i));
        let mut round = Round::new(label.iter().map(Option::is_some).collect());
        let cell = &clusters[flat];
        round.assign_cell(table.cell_flat(flat), &cell[i].gaussian, &cell[j].gaussian);
        round.consumed[flat] = true;
        steps += round.propagate(table, params);
        if round.n1 == 0 {
            break;
        }
        let k = groups.len();
        for (slot, side) in round.side.iter().enumerate() {
            if *side == Side::One {
                label[slot] = Some(k);
            }
        }
        groups.push(round.members(Side::One, table));
        debug_check(|| assemble(&groups, &label, table), table);
    }
    let diagnostic = groups.is_empty().then_some(Diagnostic::NoSeparableCell);
    if table.is_empty() {
        return Segmentation {
            groups: MaterialGroups::default(),
            diagnostic: None,
            steps,
        };
    }
    Segmentation {
        groups: assemble(&groups, &label, table),
        diagnostic,
        steps,
    }
}

fn assemble(groups: &[BTreeSet<usize>], label: &[Option<usize>], table: &GlobalCellTable) -> MaterialGroups {
    MaterialGroups {
        groups: groups.to_vec(),
        unclassified: label
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_none())
            .map(|(slot, _)| table.sampled()[slot])
            .collect(),
    }
}
