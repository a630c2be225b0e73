//! The 45 x 48 bivariate BRDF table over (theta_h, theta_d).
//!
//! Each cell holds an RGB-scaled reflectance mean and the number of samples
//! behind it. Cells filled by [`BrdfTable::complete`] carry a count of zero
//! and are reported as synthetic.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::HalfDiffAngles;

pub type Rgb = Vector3<f64>;

pub const H_BINS: usize = 45;
pub const D_BINS: usize = 48;
pub const CELL_COUNT: usize = H_BINS * D_BINS;
/// Bin width along theta_h, degrees.
pub const H_BIN_WIDTH: f64 = 90.0 / H_BINS as f64;
/// Bin width along theta_d, degrees.
pub const D_BIN_WIDTH: f64 = 90.0 / D_BINS as f64;

pub const TABLE_HEADER: &str = "brdftable v1 45 48";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot merge an empty list of tables")]
    EmptyMerge,
    #[error("completion needs at least 2 present cells, found {0}")]
    TooSparse(usize),
    #[error("table has {0} absent cells; complete it first")]
    Incomplete(usize),
    #[error("invalid sample {0:?}: components must be finite and non-negative")]
    InvalidSample([f64; 3]),
    #[error("cell index ({0}, {1}) out of range")]
    IndexRange(usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellIndex {
    h_bin: usize,
    d_bin: usize,
}

impl CellIndex {
    pub fn new(h_bin: usize, d_bin: usize) -> Result<Self, TableError> {
        if h_bin >= H_BINS || d_bin >= D_BINS {
            return Err(TableError::IndexRange(h_bin, d_bin));
        }
        Ok(Self { h_bin, d_bin })
    }

    pub fn h_bin(&self) -> usize {
        self.h_bin
    }

    pub fn d_bin(&self) -> usize {
        self.d_bin
    }

    /// Row-major position (theta_h major).
    pub fn flat(&self) -> usize {
        self.h_bin * D_BINS + self.d_bin
    }

    pub fn from_flat(flat: usize) -> Self {
        debug_assert!(flat < CELL_COUNT);
        Self {
            h_bin: flat / D_BINS,
            d_bin: flat % D_BINS,
        }
    }

    pub fn all() -> impl Iterator<Item = CellIndex> {
        (0..CELL_COUNT).map(Self::from_flat)
    }

    /// Angles at the centre of this cell.
    pub fn center(&self) -> HalfDiffAngles {
        HalfDiffAngles::new(
            (self.h_bin as f64 + 0.5) * H_BIN_WIDTH,
            (self.d_bin as f64 + 0.5) * D_BIN_WIDTH,
        )
        .expect("cell centres are in range")
    }
}

pub fn bin(angles: &HalfDiffAngles) -> CellIndex {
    let h = ((angles.theta_h() / H_BIN_WIDTH).floor() as usize).min(H_BINS - 1);
    let d = ((angles.theta_d() / D_BIN_WIDTH).floor() as usize).min(D_BINS - 1);
    CellIndex { h_bin: h, d_bin: d }
}

/// RGB-scaled reflectance sample `(R f, G f, B f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgbBrdfSample(Rgb);

impl RgbBrdfSample {
    pub fn new(value: Rgb) -> Result<Self, TableError> {
        if value.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(Self(value))
        } else {
            Err(TableError::InvalidSample([value.x, value.y, value.z]))
        }
    }

    pub fn value(&self) -> Rgb {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mean: Rgb,
    /// Number of averaged samples; zero marks a synthetic (filled-in) cell.
    pub count: u64,
}

impl Cell {
    pub fn is_synthetic(&self) -> bool {
        self.count == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrdfTable {
    cells: Vec<Option<Cell>>,
}

impl Default for BrdfTable {
    fn default() -> Self {
        Self::new()
    }
}

impl BrdfTable {
    pub fn new() -> Self {
        Self {
            cells: vec![None; CELL_COUNT],
        }
    }

    pub fn get(&self, index: CellIndex) -> Option<&Cell> {
        self.cells[index.flat()].as_ref()
    }

    /// Sets a cell directly. Used by deserialization and tests.
    pub fn set(&mut self, index: CellIndex, cell: Option<Cell>) {
        self.cells[index.flat()] = cell;
    }

    /// Adds one sample to a cell's running mean.
    pub fn insert(&mut self, index: CellIndex, sample: RgbBrdfSample) {
        let slot = &mut self.cells[index.flat()];
        match slot {
            None => {
                *slot = Some(Cell {
                    mean: sample.value(),
                    count: 1,
                })
            }
            Some(cell) => {
                // a synthetic cell is replaced by the first measurement
                if cell.count == 0 {
                    *cell = Cell {
                        mean: sample.value(),
                        count: 1,
                    };
                } else {
                    cell.count += 1;
                    cell.mean += (sample.value() - cell.mean) / cell.count as f64;
                }
            }
        }
    }

    pub fn iter_present(&self) -> impl Iterator<Item = (CellIndex, &Cell)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|c| (CellIndex::from_flat(i), c)))
    }

    /// Cells backed by at least one measurement.
    pub fn iter_measured(&self) -> impl Iterator<Item = (CellIndex, &Cell)> + '_ {
        self.iter_present().filter(|(_, c)| c.count > 0)
    }

    pub fn present_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn measured_count(&self) -> usize {
        self.iter_measured().count()
    }

    pub fn is_empty(&self) -> bool {
        self.present_count() == 0
    }

    /// Count-weighted union of several tables.
    pub fn merge<'a, I>(tables: I) -> Result<BrdfTable, TableError>
    where
        I: IntoIterator<Item = &'a BrdfTable>,
    {
        let mut iter = tables.into_iter().peekable();
        if iter.peek().is_none() {
            return Err(TableError::EmptyMerge);
        }
        let mut sums = vec![(Rgb::zeros(), 0u64); CELL_COUNT];
        // synthetic-only contributions: unweighted sum and how many
        let mut synth = vec![(Rgb::zeros(), 0u64); CELL_COUNT];
        for table in iter {
            for (i, cell) in table.cells.iter().enumerate() {
                let Some(cell) = cell else { continue };
                if cell.count > 0 {
                    sums[i].0 += cell.mean * cell.count as f64;
                    sums[i].1 += cell.count;
                } else {
                    synth[i].0 += cell.mean;
                    synth[i].1 += 1;
                }
            }
        }
        let cells = sums
            .into_iter()
            .zip(synth)
            .map(|((sum, n), (ssum, sn))| {
                if n > 0 {
                    Some(Cell {
                        mean: sum / n as f64,
                        count: n,
                    })
                } else if sn > 0 {
                    Some(Cell {
                        mean: ssum / sn as f64,
                        count: 0,
                    })
                } else {
                    None
                }
            })
            .collect();
        Ok(BrdfTable { cells })
    }

    /// Fills every absent cell by linear interpolation with constant
    /// extrapolation: first along theta_h within each theta_d column, then
    /// along theta_d for columns that had no data at all.
    pub fn complete(&self) -> Result<CompleteBrdfTable, TableError> {
        let present = self.present_count();
        if present < 2 {
            return Err(TableError::TooSparse(present));
        }
        let mut out = self.clone();

        let mut column_has_data = [false; D_BINS];
        for (d, has) in column_has_data.iter_mut().enumerate() {
            let line: Vec<Option<Rgb>> = (0..H_BINS)
                .map(|h| out.cells[h * D_BINS + d].map(|c| c.mean))
                .collect();
            if let Some(filled) = fill_line(&line) {
                *has = true;
                for (h, v) in filled.into_iter().enumerate() {
                    let slot = &mut out.cells[h * D_BINS + d];
                    if slot.is_none() {
                        *slot = Some(Cell { mean: v, count: 0 });
                    }
                }
            }
        }

        for h in 0..H_BINS {
            let line: Vec<Option<Rgb>> = (0..D_BINS)
                .map(|d| {
                    if column_has_data[d] {
                        out.cells[h * D_BINS + d].map(|c| c.mean)
                    } else {
                        None
                    }
                })
                .collect();
            let filled = fill_line(&line).expect("at least one column has data");
            for (d, v) in filled.into_iter().enumerate() {
                let slot = &mut out.cells[h * D_BINS + d];
                if slot.is_none() {
                    *slot = Some(Cell { mean: v, count: 0 });
                }
            }
        }
        Ok(CompleteBrdfTable(out))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_text().as_bytes())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(32 + 48 * self.present_count());
        s.push_str(TABLE_HEADER);
        s.push('\n');
        for (idx, cell) in self.iter_present() {
            let _ = writeln!(
                s,
                "{} {} {} {:e} {:e} {:e}",
                idx.h_bin, idx.d_bin, cell.count, cell.mean.x, cell.mean.y, cell.mean.z
            );
        }
        s
    }

    /// Parses one table block. Reading stops at the first blank line or at
    /// end of input; `first_line` is used for error messages.
    pub fn read_block<R: BufRead>(reader: &mut R, first_line: usize) -> Result<Self, TableError> {
        let mut line_no = first_line;
        let mut buf = String::new();
        if reader.read_line(&mut buf)? == 0 {
            return Err(TableError::Parse {
                line: line_no,
                msg: "missing table header".into(),
            });
        }
        if buf.trim() != TABLE_HEADER {
            return Err(TableError::Parse {
                line: line_no,
                msg: format!("expected header '{TABLE_HEADER}', found '{}'", buf.trim()),
            });
        }
        let mut table = BrdfTable::new();
        loop {
            buf.clear();
            line_no += 1;
            if reader.read_line(&mut buf)? == 0 {
                break;
            }
            let line = buf.trim();
            if line.is_empty() {
                break;
            }
            let (idx, cell) = parse_cell_line(line).map_err(|msg| TableError::Parse {
                line: line_no,
                msg,
            })?;
            table.set(idx, Some(cell));
        }
        Ok(table)
    }

    pub fn from_text(text: &str) -> Result<Self, TableError> {
        Self::read_block(&mut text.as_bytes(), 1)
    }
}

fn parse_cell_line(line: &str) -> Result<(CellIndex, Cell), String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(format!("expected 6 fields, found {}", fields.len()));
    }
    let h: usize = fields[0].parse().map_err(|e| format!("h_bin: {e}"))?;
    let d: usize = fields[1].parse().map_err(|e| format!("d_bin: {e}"))?;
    let count: u64 = fields[2].parse().map_err(|e| format!("count: {e}"))?;
    let mut rgb = [0.0; 3];
    for (k, v) in rgb.iter_mut().enumerate() {
        *v = fields[3 + k]
            .parse()
            .map_err(|e| format!("channel {k}: {e}"))?;
    }
    let idx = CellIndex::new(h, d).map_err(|e| e.to_string())?;
    let sample = RgbBrdfSample::new(Rgb::from(rgb)).map_err(|e| e.to_string())?;
    Ok((
        idx,
        Cell {
            mean: sample.value(),
            count,
        },
    ))
}

/// 1D fill of a line of optional values. `None` when the line is empty.
fn fill_line(line: &[Option<Rgb>]) -> Option<Vec<Rgb>> {
    let known: Vec<usize> = (0..line.len()).filter(|&i| line[i].is_some()).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut out = Vec::with_capacity(line.len());
    let mut k = 0;
    for i in 0..line.len() {
        let v = if let Some(v) = line[i] {
            v
        } else if i < first {
            line[first].unwrap()
        } else if i > last {
            line[last].unwrap()
        } else {
            while known[k + 1] < i {
                k += 1;
            }
            let (a, b) = (known[k], known[k + 1]);
            let t = (i - a) as f64 / (b - a) as f64;
            line[a].unwrap() * (1.0 - t) + line[b].unwrap() * t
        };
        out.push(v);
    }
    Some(out)
}

/// A table with every cell present, ready for continuous lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteBrdfTable(BrdfTable);

impl TryFrom<BrdfTable> for CompleteBrdfTable {
    type Error = TableError;

    fn try_from(table: BrdfTable) -> Result<Self, TableError> {
        let missing = CELL_COUNT - table.present_count();
        if missing > 0 {
            return Err(TableError::Incomplete(missing));
        }
        Ok(Self(table))
    }
}

impl CompleteBrdfTable {
    /// Table with the same value in every cell, all flagged synthetic.
    pub fn constant(value: Rgb) -> Self {
        Self(BrdfTable {
            cells: vec![Some(Cell { mean: value, count: 0 }); CELL_COUNT],
        })
    }

    pub fn table(&self) -> &BrdfTable {
        &self.0
    }

    pub fn into_table(self) -> BrdfTable {
        self.0
    }

    fn value(&self, h: usize, d: usize) -> Rgb {
        self.0.cells[h * D_BINS + d]
            .expect("complete tables have every cell")
            .mean
    }

    /// Bilinear interpolation between cell centres, clamped at the edges.
    pub fn lookup(&self, angles: &HalfDiffAngles) -> Rgb {
        let (h0, h1, th) = bracket(angles.theta_h(), H_BIN_WIDTH, H_BINS);
        let (d0, d1, td) = bracket(angles.theta_d(), D_BIN_WIDTH, D_BINS);
        let top = self.value(h0, d0) * (1.0 - td) + self.value(h0, d1) * td;
        let bottom = self.value(h1, d0) * (1.0 - td) + self.value(h1, d1) * td;
        top * (1.0 - th) + bottom * th
    }
}

/// Neighbouring centre indices and blend weight for a coordinate.
fn bracket(angle: f64, width: f64, bins: usize) -> (usize, usize, f64) {
    let x = angle / width - 0.5;
    if x <= 0.0 {
        return (0, 0, 0.0);
    }
    if x >= (bins - 1) as f64 {
        return (bins - 1, bins - 1, 0.0);
    }
    let i = x.floor() as usize;
    (i, i + 1, x - i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn angles(h: f64, d: f64) -> HalfDiffAngles {
        HalfDiffAngles::new(h, d).unwrap()
    }

    fn sample(r: f64, g: f64, b: f64) -> RgbBrdfSample {
        RgbBrdfSample::new(Rgb::new(r, g, b)).unwrap()
    }

    fn idx(h: usize, d: usize) -> CellIndex {
        CellIndex::new(h, d).unwrap()
    }

    #[test]
    fn binning_examples() {
        assert_eq!(bin(&angles(0.0, 0.0)), idx(0, 0));
        assert_eq!(bin(&angles(89.999, 89.999)), idx(44, 47));
        assert_eq!(bin(&angles(90.0, 90.0)), idx(44, 47));
        assert_eq!(bin(&angles(45.0, 20.0)), idx(22, 10));
    }

    #[test]
    fn cell_index_rejects_out_of_range() {
        assert!(CellIndex::new(45, 0).is_err());
        assert!(CellIndex::new(0, 48).is_err());
    }

    #[test]
    fn bin_of_every_cell_center_is_identity() {
        for c in CellIndex::all() {
            assert_eq!(bin(&c.center()), c);
        }
    }

    #[test]
    fn insert_running_mean() {
        let mut t = BrdfTable::new();
        t.insert(idx(3, 4), sample(1.0, 1.0, 1.0));
        assert_eq!(t.get(idx(3, 4)).unwrap().count, 1);
        t.insert(idx(3, 4), sample(3.0, 3.0, 3.0));
        let c = t.get(idx(3, 4)).unwrap();
        assert_eq!(c.count, 2);
        assert_relative_eq!(c.mean, Rgb::new(2.0, 2.0, 2.0));
    }

    #[test]
    fn insert_matches_batch_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<Rgb> = (0..100)
            .map(|_| Rgb::new(rng.gen(), rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 1e3))
            .collect();
        let mut t = BrdfTable::new();
        for s in &samples {
            t.insert(idx(0, 0), RgbBrdfSample::new(*s).unwrap());
        }
        let batch = samples.iter().sum::<Rgb>() / samples.len() as f64;
        let got = t.get(idx(0, 0)).unwrap().mean;
        for k in 0..3 {
            assert!((got[k] - batch[k]).abs() <= 1e-12 * batch[k].abs().max(1.0));
        }
    }

    #[test]
    fn invalid_samples_rejected() {
        assert!(RgbBrdfSample::new(Rgb::new(-1.0, 0.0, 0.0)).is_err());
        assert!(RgbBrdfSample::new(Rgb::new(f64::NAN, 0.0, 0.0)).is_err());
    }

    #[test]
    fn merge_examples() {
        let mut a = BrdfTable::new();
        a.set(idx(1, 1), Some(Cell { mean: Rgb::repeat(2.0), count: 1 }));
        a.set(idx(2, 2), Some(Cell { mean: Rgb::repeat(5.0), count: 2 }));
        let mut b = BrdfTable::new();
        b.set(idx(1, 1), Some(Cell { mean: Rgb::repeat(4.0), count: 3 }));
        b.set(idx(7, 0), Some(Cell { mean: Rgb::repeat(1.0), count: 1 }));

        assert_eq!(BrdfTable::merge([&a]).unwrap(), a);
        let m = BrdfTable::merge([&a, &b]).unwrap();
        let c = m.get(idx(1, 1)).unwrap();
        assert_relative_eq!(c.mean, Rgb::repeat(3.5));
        assert_eq!(c.count, 4);
        assert_eq!(m.get(idx(2, 2)), a.get(idx(2, 2)));
        assert_eq!(m.get(idx(7, 0)), b.get(idx(7, 0)));
        assert_eq!(m.present_count(), 3);
        assert_eq!(BrdfTable::merge([&a, &BrdfTable::new()]).unwrap(), a);
        assert!(matches!(
            BrdfTable::merge(std::iter::empty()),
            Err(TableError::EmptyMerge)
        ));
    }

    #[test]
    fn complete_requires_two_cells() {
        let mut t = BrdfTable::new();
        assert!(matches!(t.complete(), Err(TableError::TooSparse(0))));
        t.insert(idx(0, 0), sample(1.0, 1.0, 1.0));
        assert!(matches!(t.complete(), Err(TableError::TooSparse(1))));
    }

    #[test]
    fn complete_interpolates_midpoint_and_copies_single_column() {
        let mut t = BrdfTable::new();
        t.insert(idx(0, 5), sample(1.0, 1.0, 1.0));
        t.insert(idx(2, 5), sample(3.0, 3.0, 3.0));
        let c = t.complete().unwrap();
        let mid = c.table().get(idx(1, 5)).unwrap();
        assert_relative_eq!(mid.mean, Rgb::repeat(2.0));
        assert!(mid.is_synthetic());
        // hand-worked 3x3 corner: h rows beyond 2 hold 3, every d column copies column 5
        for h in 0..3 {
            for d in 0..3 {
                let expected = [1.0, 2.0, 3.0][h];
                assert_relative_eq!(c.table().get(idx(h, d)).unwrap().mean, Rgb::repeat(expected));
            }
        }
        assert_relative_eq!(c.table().get(idx(44, 47)).unwrap().mean, Rgb::repeat(3.0));
    }

    #[test]
    fn complete_interpolates_along_theta_d_between_columns() {
        let mut t = BrdfTable::new();
        t.insert(idx(4, 0), sample(0.0, 0.0, 0.0));
        t.insert(idx(4, 4), sample(4.0, 8.0, 0.0));
        let c = t.complete().unwrap();
        assert_relative_eq!(c.table().get(idx(4, 1)).unwrap().mean, Rgb::new(1.0, 2.0, 0.0));
        assert_relative_eq!(c.table().get(idx(30, 3)).unwrap().mean, Rgb::new(3.0, 6.0, 0.0));
    }

    #[test]
    fn complete_on_full_table_is_identity() {
        let mut t = BrdfTable::new();
        for c in CellIndex::all() {
            t.insert(c, sample(c.h_bin() as f64, c.d_bin() as f64, 1.0));
        }
        assert_eq!(t.complete().unwrap().into_table(), t);
    }

    #[test]
    fn lookup_examples() {
        let constant = CompleteBrdfTable::constant(Rgb::new(0.2, 0.3, 0.4));
        for (h, d) in [(0.0, 0.0), (13.3, 77.0), (90.0, 90.0)] {
            assert_relative_eq!(constant.lookup(&angles(h, d)), Rgb::new(0.2, 0.3, 0.4));
        }

        // linear ramp in theta_h: value = centre angle
        let mut t = BrdfTable::new();
        for c in CellIndex::all() {
            let th = c.center().theta_h();
            t.insert(c, sample(th, 2.0 * th, 1.0));
        }
        let ramp = t.complete().unwrap();
        let center = idx(10, 3).center();
        assert_relative_eq!(ramp.lookup(&center), Rgb::new(21.0, 42.0, 1.0), epsilon = 1e-12);
        for th in [1.0, 7.3, 44.0, 88.99] {
            let v = ramp.lookup(&angles(th, 33.0));
            assert_relative_eq!(v.x, th, epsilon = 1e-9);
            assert_relative_eq!(v.y, 2.0 * th, epsilon = 1e-9);
        }
        // clamped beyond the outermost centres
        assert_relative_eq!(ramp.lookup(&angles(0.2, 0.0)).x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(ramp.lookup(&angles(90.0, 0.0)).x, 89.0, epsilon = 1e-12);
    }

    #[test]
    fn incomplete_table_not_convertible() {
        let mut t = BrdfTable::new();
        t.insert(idx(0, 0), sample(1.0, 1.0, 1.0));
        assert!(matches!(
            CompleteBrdfTable::try_from(t),
            Err(TableError::Incomplete(n)) if n == CELL_COUNT - 1
        ));
    }

    #[test]
    fn text_format() {
        let mut t = BrdfTable::new();
        t.insert(idx(3, 1), sample(0.5, 0.25, 0.125));
        t.set(idx(44, 47), Some(Cell { mean: Rgb::repeat(1.0), count: 0 }));
        let text = t.to_text();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("brdftable v1 45 48"));
        let first: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(&first[..3], &["3", "1", "1"]);
        let last: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(&last[..3], &["44", "47", "0"]);
        assert_eq!(BrdfTable::from_text(&text).unwrap(), t);

        assert!(BrdfTable::from_text("brdftable v2 45 48\n").is_err());
        let err = BrdfTable::from_text("brdftable v1 45 48\n0 0 1 1 1\n").unwrap_err();
        assert!(matches!(err, TableError::Parse { line: 2, .. }));
    }

    proptest! {
        #[test]
        fn insert_is_order_independent(
            values in prop::collection::vec(prop::array::uniform3(0.0..10.0f64), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = values.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let fill = |vals: &[[f64; 3]]| {
                let mut t = BrdfTable::new();
                for v in vals {
                    t.insert(idx(5, 5), RgbBrdfSample::new(Rgb::from(*v)).unwrap());
                }
                t.get(idx(5, 5)).unwrap().mean
            };
            prop_assert!((fill(&values) - fill(&shuffled)).norm() < 1e-9);
        }

        #[test]
        fn complete_preserves_present_cells(
            cells in prop::collection::btree_map((0..H_BINS, 0..D_BINS), prop::array::uniform3(0.0..4.0f64), 2..30)
        ) {
            let mut t = BrdfTable::new();
            for ((h, d), v) in &cells {
                t.insert(idx(*h, *d), RgbBrdfSample::new(Rgb::from(*v)).unwrap());
            }
            let c = t.complete().unwrap();
            prop_assert_eq!(c.table().present_count(), CELL_COUNT);
            for cell in CellIndex::all() {
                let got = c.table().get(cell).unwrap();
                match t.get(cell) {
                    Some(orig) => prop_assert_eq!(got, orig),
                    None => prop_assert!(got.is_synthetic()),
                }
            }
        }
    }
}
