//! Rasterized open subsets of R^N (N = 2 or 3).
//!
//! Cells live on the global lattice `h·Z^N`: cell `[i, j, l]` covers
//! `[i·h, (i+1)·h) × [j·h, (j+1)·h) × ...`. A cut *level* `L` along an axis
//! is the cell face at coordinate `L·h`; the *column* at level `L` is the
//! slab of cells with index `L` along that axis. Slices are always taken on
//! cell faces so that left part, column and right part partition the domain
//! exactly.
//!
//! Unused trailing axes (axis 2 when `N = 2`) have extent 1 and index 0.

use crate::error::{Error, Result};

/// Global lattice index of a cell. Entries beyond the grid dimension are 0.
pub type Cell = [i64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dim: usize,
    h: f64,
    origin: [i64; 3],
    extent: [usize; 3],
}

impl GridSpec {
    pub fn new(dim: usize, h: f64, origin: &[i64], extent: &[usize]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidSpec(format!("dimension {dim} not in {{2, 3}}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidSpec(format!("cell size {h} must be positive")));
        }
        if origin.len() != dim || extent.len() != dim {
            return Err(Error::InvalidSpec(format!(
                "expected {dim} origin and extent entries, got {} and {}",
                origin.len(),
                extent.len()
            )));
        }
        if extent.iter().any(|&e| e == 0) {
            return Err(Error::InvalidSpec("extent must be at least 1 per axis".into()));
        }
        let mut o = [0i64; 3];
        let mut e = [1usize; 3];
        o[..dim].copy_from_slice(origin);
        e[..dim].copy_from_slice(extent);
        Ok(Self {
            dim,
            h,
            origin: o,
            extent: e,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_size(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &[i64] {
        &self.origin[..self.dim]
    }

    pub fn extent(&self) -> &[usize] {
        &self.extent[..self.dim]
    }

    /// Volume of one cell, `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Area of one cell face, `h^(N-1)`.
    pub fn face_area(&self) -> f64 {
        self.h.powi(self.dim as i32 - 1)
    }

    pub fn box_len(&self) -> usize {
        self.extent.iter().product()
    }

    /// Position of `c` in the box (x fastest), or `None` outside it.
    pub fn linear(&self, c: &Cell) -> Option<usize> {
        let mut idx = 0usize;
        for a in (0..3).rev() {
            let local = c[a] - self.origin[a];
            if local < 0 || local >= self.extent[a] as i64 {
                return None;
            }
            idx = idx * self.extent[a] + local as usize;
        }
        Some(idx)
    }

    fn cell_at(&self, mut idx: usize) -> Cell {
        let mut c = [0i64; 3];
        for a in 0..3 {
            c[a] = self.origin[a] + (idx % self.extent[a]) as i64;
            idx /= self.extent[a];
        }
        c
    }

    /// Lower face coordinate of the box along `axis`.
    pub fn lo(&self, axis: usize) -> i64 {
        self.origin[axis]
    }

    /// One past the last cell index of the box along `axis`.
    pub fn hi(&self, axis: usize) -> i64 {
        self.origin[axis] + self.extent[axis] as i64
    }
}

/// Which piece of a domain a [`SliceSelector`] extracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Cells entirely to the left of the column containing `t`.
    Left,
    /// Cells entirely to the right of the column containing `t`.
    Right,
    /// The column containing `t`, as an (N-1)-dimensional cell set.
    Section,
    /// Cells of the band `[t0 - t, t0 + t]`.
    InteriorBand,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceSelector {
    pub axis: usize,
    pub side: Side,
    /// The level `t` (for bands: the half-width).
    pub level: f64,
    /// Band centre `t0`; ignored for the other sides.
    pub center: f64,
}

impl SliceSelector {
    pub fn left(axis: usize, t: f64) -> Self {
        Self {
            axis,
            side: Side::Left,
            level: t,
            center: 0.0,
        }
    }

    pub fn right(axis: usize, t: f64) -> Self {
        Self {
            axis,
            side: Side::Right,
            level: t,
            center: 0.0,
        }
    }

    pub fn section(axis: usize, t: f64) -> Self {
        Self {
            axis,
            side: Side::Section,
            level: t,
            center: 0.0,
        }
    }

    pub fn band(axis: usize, t0: f64, half_width: f64) -> Self {
        Self {
            axis,
            side: Side::InteriorBand,
            level: half_width,
            center: t0,
        }
    }
}

/// Cell index of the column whose half-open interval contains coordinate `t`.
pub fn column_of(t: f64, h: f64) -> i64 {
    // Snap coordinates within rounding noise of a face onto that face.
    let x = t / h;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as i64
    } else {
        x.floor() as i64
    }
}

/// An (N-1)-dimensional set of cells: one column of a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub axis: usize,
    pub level: i64,
    pub cells: Vec<Cell>,
    face_area: f64,
}

impl Section {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// (N-1)-dimensional measure of the section.
    pub fn measure(&self) -> f64 {
        self.cells.len() as f64 * self.face_area
    }
}

/// Result of [`GridDomain::slice`].
#[derive(Debug, Clone, PartialEq)]
pub enum Slice {
    Domain(GridDomain),
    Section(Section),
}

/// Inclusive-exclusive bounding box of the occupied cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub lo: Cell,
    pub hi: Cell,
}

impl BoundingBox {
    pub fn extent(&self, axis: usize) -> i64 {
        self.hi[axis] - self.lo[axis]
    }
}

/// A rasterized domain: a grid spec and the set of occupied cells.
///
/// Occupancy is a dense bitset over the spec's box. Per-axis slab counts are
/// cached so quantile queries cost `O(extent)`.
#[derive(Debug, Clone)]
pub struct GridDomain {
    spec: GridSpec,
    bits: Vec<u64>,
    count: usize,
    slabs: [Vec<usize>; 3],
}

impl PartialEq for GridDomain {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.bits == other.bits
    }
}

impl Eq for GridDomain {}

impl GridDomain {
    pub fn empty(spec: GridSpec) -> Self {
        let words = spec.box_len().div_ceil(64);
        let slabs = [
            vec![0; spec.extent[0]],
            vec![0; spec.extent[1]],
            vec![0; spec.extent[2]],
        ];
        Self {
            spec,
            bits: vec![0; words],
            count: 0,
            slabs,
        }
    }

    /// Builds a domain in the given box. Cells outside the box are an error.
    pub fn from_cells<I>(spec: GridSpec, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = Cell>,
    {
        let mut d = Self::empty(spec);
        for c in cells {
            let idx = d
                .spec
                .linear(&c)
                .ok_or_else(|| Error::InvalidSpec(format!("cell {c:?} outside grid box")))?;
            d.set(idx);
        }
        Ok(d)
    }

    /// Builds a domain from arbitrary cells, with the box fitted tightly to them.
    pub fn from_cell_list(dim: usize, h: f64, cells: &[Cell]) -> Result<Self> {
        if cells.is_empty() {
            let spec = GridSpec::new(dim, h, &vec![0; dim], &vec![1; dim])?;
            return Ok(Self::empty(spec));
        }
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for c in cells {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a] + 1);
            }
        }
        let extent: Vec<usize> = (0..dim).map(|a| (hi[a] - lo[a]) as usize).collect();
        let spec = GridSpec::new(dim, h, &lo[..dim], &extent)?;
        Self::from_cells(spec, cells.iter().copied())
    }

    /// Builds a domain over the box `[0, extent)` from a membership predicate
    /// evaluated on local cell indices.
    pub fn from_fn<F>(dim: usize, h: f64, extent: &[usize], mut inside: F) -> Result<Self>
    where
        F: FnMut(Cell) -> bool,
    {
        let spec = GridSpec::new(dim, h, &vec![0; dim], extent)?;
        let mut d = Self::empty(spec);
        for idx in 0..d.spec.box_len() {
            if inside(d.spec.cell_at(idx)) {
                d.set(idx);
            }
        }
        Ok(d)
    }

    fn set(&mut self, idx: usize) {
        let (w, b) = (idx / 64, idx % 64);
        if self.bits[w] & (1 << b) == 0 {
            self.bits[w] |= 1 << b;
            self.count += 1;
            let c = self.spec.cell_at(idx);
            for a in 0..3 {
                self.slabs[a][(c[a] - self.spec.origin[a]) as usize] += 1;
            }
        }
    }

    fn get(&self, idx: usize) -> bool {
        self.bits[idx / 64] & (1 << (idx % 64)) != 0
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn cell_size(&self) -> f64 {
        self.spec.h
    }

    pub fn contains(&self, c: &Cell) -> bool {
        match self.spec.linear(c) {
            Some(idx) => self.get(idx),
            None => false,
        }
    }

    /// Number of occupied cells.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// `|Ω| = (occupied cells) · h^N`.
    pub fn measure(&self) -> f64 {
        self.count as f64 * self.spec.cell_volume()
    }

    /// Occupied cells in lexicographic (x fastest) order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.bits.iter().enumerate().flat_map(move |(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(self.spec.cell_at(w * 64 + b))
            })
        })
    }

    pub fn cell_vec(&self) -> Vec<Cell> {
        self.cells().collect()
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        if self.is_empty() {
            return None;
        }
        let mut lo = [0i64; 3];
        let mut hi = [1i64; 3];
        for a in 0..3 {
            let first = self.slabs[a].iter().position(|&n| n > 0)?;
            let last = self.slabs[a].iter().rposition(|&n| n > 0)?;
            lo[a] = self.spec.origin[a] + first as i64;
            hi[a] = self.spec.origin[a] + last as i64 + 1;
        }
        Some(BoundingBox { lo, hi })
    }

    /// Same occupancy with the box shrunk to the occupied cells.
    pub fn trimmed(&self) -> GridDomain {
        match self.bounding_box() {
            None => GridDomain::empty(
                GridSpec::new(self.dim(), self.spec.h, &vec![0; self.dim()], &vec![1; self.dim()])
                    .expect("valid spec"),
            ),
            Some(bb) => {
                let dim = self.dim();
                let extent: Vec<usize> = (0..dim).map(|a| bb.extent(a) as usize).collect();
                let spec = GridSpec::new(dim, self.spec.h, &bb.lo[..dim], &extent)
                    .expect("bounding box is a valid spec");
                GridDomain::from_cells(spec, self.cells()).expect("cells inside their bounding box")
            }
        }
    }

    /// Keeps the cells for which `keep` holds; the box is trimmed.
    pub fn filter<F>(&self, mut keep: F) -> GridDomain
    where
        F: FnMut(&Cell) -> bool,
    {
        let cells: Vec<Cell> = self.cells().filter(|c| keep(c)).collect();
        GridDomain::from_cell_list(self.dim(), self.spec.h, &cells).expect("valid cells")
    }

    /// Cells with index `< level` along `axis` (the part left of the face at `level`).
    pub fn left_of(&self, axis: usize, level: i64) -> GridDomain {
        self.filter(|c| c[axis] < level)
    }

    /// Cells with index `>= level` along `axis` (includes the column at `level`).
    pub fn right_of(&self, axis: usize, level: i64) -> GridDomain {
        self.filter(|c| c[axis] >= level)
    }

    /// Cells with index in `[from, to)` along `axis`.
    pub fn between(&self, axis: usize, from: i64, to: i64) -> GridDomain {
        self.filter(|c| c[axis] >= from && c[axis] < to)
    }

    /// The column of cells with index `level` along `axis`.
    pub fn column(&self, axis: usize, level: i64) -> Section {
        let cells = if level < self.spec.lo(axis) || level >= self.spec.hi(axis) {
            Vec::new()
        } else {
            self.cells().filter(|c| c[axis] == level).collect()
        };
        Section {
            axis,
            level,
            cells,
            face_area: self.spec.face_area(),
        }
    }

    /// Number of occupied cells in the column at `level`.
    pub fn column_count(&self, axis: usize, level: i64) -> usize {
        let local = level - self.spec.origin[axis];
        if local < 0 || local >= self.spec.extent[axis] as i64 {
            0
        } else {
            self.slabs[axis][local as usize]
        }
    }

    /// Number of occupied cells with index `< level` along `axis`.
    pub fn count_left_of(&self, axis: usize, level: i64) -> usize {
        let local = (level - self.spec.origin[axis]).clamp(0, self.spec.extent[axis] as i64);
        self.slabs[axis][..local as usize].iter().sum()
    }

    pub fn slice(&self, sel: &SliceSelector) -> Slice {
        let h = self.spec.h;
        let axis = sel.axis;
        match sel.side {
            Side::Left => Slice::Domain(self.left_of(axis, column_of(sel.level, h))),
            Side::Right => Slice::Domain(self.right_of(axis, column_of(sel.level, h) + 1)),
            Side::Section => Slice::Section(self.column(axis, column_of(sel.level, h))),
            Side::InteriorBand => {
                let from = face_at_or_above(sel.center - sel.level, h);
                let to = face_at_or_below(sel.center + sel.level, h);
                Slice::Domain(self.between(axis, from, to))
            }
        }
    }

    /// Smallest face level `L` with `count_left_of(L) >= cells`.
    ///
    /// For `cells == 0` this is the lower face of the occupied bounding box.
    pub fn tau_level_count(&self, axis: usize, cells: usize) -> Result<i64> {
        if cells > self.count {
            return Err(Error::MeasureOutOfRange {
                requested: cells as f64 * self.spec.cell_volume(),
                available: self.measure(),
            });
        }
        let bb = self.bounding_box().ok_or(Error::EmptyDomain)?;
        if cells == 0 {
            return Ok(bb.lo[axis]);
        }
        let mut acc = 0usize;
        for (i, &n) in self.slabs[axis].iter().enumerate() {
            acc += n;
            if acc >= cells {
                return Ok(self.spec.origin[axis] + i as i64 + 1);
            }
        }
        unreachable!("cells <= count")
    }

    /// Converts a measure to the number of cells needed to reach it.
    pub fn cells_for_measure(&self, m: f64) -> Result<usize> {
        let total = self.measure();
        let slack = 1e-9 * total.max(self.spec.cell_volume());
        if !(m >= -slack && m <= total + slack) {
            return Err(Error::MeasureOutOfRange {
                requested: m,
                available: total,
            });
        }
        let raw = m / self.spec.cell_volume();
        let n = if (raw - raw.round()).abs() < 1e-9 {
            raw.round()
        } else {
            raw.ceil()
        };
        Ok((n.max(0.0) as usize).min(self.count))
    }

    /// `τ(Ω, m) = inf{t : |Ω^l_t| ≥ m}` as a face level.
    pub fn tau_level(&self, axis: usize, m: f64) -> Result<i64> {
        let cells = self.cells_for_measure(m)?;
        self.tau_level_count(axis, cells)
    }

    /// `τ(Ω, m)` as a coordinate.
    pub fn tau(&self, axis: usize, m: f64) -> Result<f64> {
        Ok(self.tau_level(axis, m)? as f64 * self.spec.h)
    }

    /// `W(Ω, m1, m2) = τ(Ω, m2) − τ(Ω, m1)`.
    pub fn width(&self, axis: usize, m1: f64, m2: f64) -> Result<f64> {
        if m1 > m2 {
            return Err(Error::Precondition(format!("width needs m1 <= m2, got {m1} > {m2}")));
        }
        Ok(self.tau(axis, m2)? - self.tau(axis, m1)?)
    }

    /// Diameter of the projection of the domain on `axis`.
    pub fn projection_diameter(&self, axis: usize) -> Result<f64> {
        let bb = self.bounding_box().ok_or(Error::EmptyDomain)?;
        Ok(bb.extent(axis) as f64 * self.spec.h)
    }

    /// Mirror image through the face at coordinate 0 along `axis`
    /// (cell index `i` maps to `-1 - i`).
    pub fn reflect(&self, axis: usize) -> GridDomain {
        let dim = self.dim();
        let mut origin = self.spec.origin;
        origin[axis] = -self.spec.hi(axis);
        let spec = GridSpec::new(dim, self.spec.h, &origin[..dim], self.spec.extent())
            .expect("valid spec");
        let cells = self.cells().map(|mut c| {
            c[axis] = -1 - c[axis];
            c
        });
        GridDomain::from_cells(spec, cells).expect("reflected cells stay in the reflected box")
    }

    /// Shift by an integer number of cells along `axis`.
    pub fn translate(&self, axis: usize, cells: i64) -> GridDomain {
        let mut spec = self.spec.clone();
        spec.origin[axis] += cells;
        GridDomain {
            spec,
            bits: self.bits.clone(),
            count: self.count,
            slabs: self.slabs.clone(),
        }
    }

    /// Same occupancy with cell size multiplied by `alpha` (the dilation `αΩ`).
    pub fn scaled(&self, alpha: f64) -> Result<GridDomain> {
        let mut spec = self.spec.clone();
        let h = spec.h * alpha;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidSpec(format!("scale factor {alpha} gives cell size {h}")));
        }
        spec.h = h;
        Ok(GridDomain {
            spec,
            bits: self.bits.clone(),
            count: self.count,
            slabs: self.slabs.clone(),
        })
    }

    /// Replaces every cell by a `factor^N` block of cells of the same size,
    /// i.e. the domain dilated by `factor` on the same lattice.
    pub fn refined_dilation(&self, factor: usize) -> GridDomain {
        let dim = self.dim();
        let f = factor as i64;
        let mut cells = Vec::with_capacity(self.count * factor.pow(dim as u32));
        for c in self.cells() {
            let kz = if dim == 3 { f } else { 1 };
            for dz in 0..kz {
                for dy in 0..f {
                    for dx in 0..f {
                        let mut n = [c[0] * f + dx, c[1] * f + dy, 0];
                        if dim == 3 {
                            n[2] = c[2] * f + dz;
                        }
                        cells.push(n);
                    }
                }
            }
        }
        GridDomain::from_cell_list(dim, self.spec.h, &cells).expect("valid cells")
    }

    pub fn union(&self, other: &GridDomain) -> Result<GridDomain> {
        self.check_compatible(other)?;
        let mut cells = self.cell_vec();
        cells.extend(other.cells().filter(|c| !self.contains(c)));
        GridDomain::from_cell_list(self.dim(), self.spec.h, &cells)
    }

    pub fn is_subset_of(&self, other: &GridDomain) -> bool {
        self.cells().all(|c| other.contains(&c))
    }

    pub fn is_disjoint_from(&self, other: &GridDomain) -> bool {
        self.cells().all(|c| !other.contains(&c))
    }

    pub fn check_compatible(&self, other: &GridDomain) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Incompatible(format!(
                "dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        if (self.spec.h - other.spec.h).abs() > 1e-12 * self.spec.h {
            return Err(Error::Incompatible(format!(
                "cell sizes {} and {}",
                self.spec.h, other.spec.h
            )));
        }
        Ok(())
    }

    /// Face-adjacent neighbours of a cell (2N of them, occupied or not).
    pub fn neighbors(&self, c: &Cell) -> impl Iterator<Item = Cell> + '_ {
        let dim = self.dim();
        let c = *c;
        (0..dim).flat_map(move |a| {
            [-1i64, 1].into_iter().map(move |s| {
                let mut n = c;
                n[a] += s;
                n
            })
        })
    }

    /// Face-connected components, ordered by their first cell.
    pub fn components(&self) -> Vec<GridDomain> {
        let mut seen = vec![false; self.spec.box_len()];
        let mut out = Vec::new();
        for start in self.cells() {
            let si = self.spec.linear(&start).expect("occupied cell in box");
            if seen[si] {
                continue;
            }
            seen[si] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(c) = stack.pop() {
                comp.push(c);
                for n in self.neighbors(&c) {
                    if let Some(ni) = self.spec.linear(&n) {
                        if self.get(ni) && !seen[ni] {
                            seen[ni] = true;
                            stack.push(n);
                        }
                    }
                }
            }
            out.push(GridDomain::from_cell_list(self.dim(), self.spec.h, &comp).expect("valid cells"));
        }
        out
    }
}

fn face_at_or_above(t: f64, h: f64) -> i64 {
    let x = t / h;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as i64
    } else {
        x.ceil() as i64
    }
}

fn face_at_or_below(t: f64, h: f64) -> i64 {
    let x = t / h;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as i64
    } else {
        x.floor() as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(nx: usize, ny: usize, h: f64) -> GridDomain {
        GridDomain::from_fn(2, h, &[nx, ny], |_| true).unwrap()
    }

    fn unit_square() -> GridDomain {
        rect(64, 64, 1.0 / 64.0)
    }

    #[test]
    fn measure_counts_cells() {
        let d = rect(10, 10, 0.1);
        assert!((d.measure() - 1.0).abs() < 1e-12);
        assert_eq!(unit_square().measure(), 1.0);
        let empty = GridDomain::empty(GridSpec::new(2, 0.1, &[0, 0], &[3, 3]).unwrap());
        assert_eq!(empty.measure(), 0.0);
    }

    #[test]
    fn slices_of_the_unit_square() {
        let d = unit_square();
        match d.slice(&SliceSelector::left(0, 0.5)) {
            Slice::Domain(l) => assert_eq!(l.measure(), 0.5),
            _ => panic!("expected a domain"),
        }
        match d.slice(&SliceSelector::section(0, 0.5)) {
            Slice::Section(s) => assert_eq!(s.measure(), 1.0),
            _ => panic!("expected a section"),
        }
        let shifted = d.translate(0, 100);
        match shifted.slice(&SliceSelector::left(0, 0.5)) {
            Slice::Domain(l) => assert!(l.is_empty()),
            _ => panic!("expected a domain"),
        }
    }

    #[test]
    fn band_slice() {
        let d = unit_square();
        match d.slice(&SliceSelector::band(0, 0.5, 0.25)) {
            Slice::Domain(b) => assert_eq!(b.measure(), 0.5),
            _ => panic!("expected a domain"),
        }
    }

    #[test]
    fn tau_and_width_on_the_square() {
        let d = unit_square();
        assert_eq!(d.tau(0, 0.5).unwrap(), 0.5);
        assert_eq!(d.tau(0, 1.0).unwrap(), 1.0);
        assert_eq!(d.tau(0, 0.0).unwrap(), 0.0);
        assert_eq!(d.width(0, 0.25, 0.75).unwrap(), 0.5);
        assert_eq!(d.width(1, 0.3, 0.3).unwrap(), 0.0);
        assert!(matches!(d.tau(0, 1.5), Err(Error::MeasureOutOfRange { .. })));
    }

    #[test]
    fn width_of_a_rectangle() {
        let d = rect(128, 32, 1.0 / 64.0);
        assert_eq!(d.width(0, 0.0, 1.0).unwrap(), 2.0);
        assert_eq!(d.projection_diameter(1).unwrap(), 0.5);
    }

    #[test]
    fn tau_on_an_l_shape_matches_column_prefix_sums() {
        // Two unit-area squares side by side, the right one shifted up by half.
        let n = 16usize;
        let h = 1.0 / n as f64;
        let d = GridDomain::from_fn(2, h, &[2 * n, n + n / 2], |c| {
            let (x, y) = (c[0] as usize, c[1] as usize);
            (x < n && y < n) || (x >= n && y >= n / 2)
        })
        .unwrap();
        // Oracle: walk columns left to right, accumulating column areas.
        // Both squares have n rows in every column.
        let columns = vec![n as f64 * h * h; 2 * n];
        for m in [0.1, 0.5, 1.0, 1.3, 2.0] {
            let mut acc = 0.0;
            let mut level = 0usize;
            for (x, a) in columns.iter().enumerate() {
                acc += a;
                if acc >= m - 1e-12 {
                    level = x + 1;
                    break;
                }
            }
            assert!((d.tau(0, m).unwrap() - level as f64 * h).abs() < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn projection_of_separated_squares() {
        let n = 8usize;
        let h = 1.0 / n as f64;
        let d = GridDomain::from_fn(2, h, &[5 * n, n], |c| {
            let x = c[0] as usize;
            x < n || x >= 4 * n
        })
        .unwrap();
        assert!((d.projection_diameter(0).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(d.components().len(), 2);
    }

    #[test]
    fn reflect_is_an_involution() {
        let d = GridDomain::from_fn(2, 0.1, &[7, 5], |c| c[0] < 3 || c[1] == 0).unwrap();
        let back = d.reflect(0).reflect(0);
        assert_eq!(back, d);
        assert_eq!(d.reflect(1).measure(), d.measure());
        assert_eq!(d.translate(1, -4).measure(), d.measure());
    }

    #[test]
    fn three_dimensional_basics() {
        let d = GridDomain::from_fn(3, 0.5, &[2, 2, 2], |_| true).unwrap();
        assert_eq!(d.measure(), 1.0);
        assert_eq!(d.column(2, 1).measure(), 1.0);
        assert_eq!(d.tau(2, 0.5).unwrap(), 0.5);
        assert_eq!(d.components().len(), 1);
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::new(4, 1.0, &[0; 4], &[1; 4]).is_err());
        assert!(GridSpec::new(2, 0.0, &[0, 0], &[1, 1]).is_err());
        assert!(GridSpec::new(2, 1.0, &[0, 0], &[0, 1]).is_err());
    }

    fn arb_domain() -> impl Strategy<Value = GridDomain> {
        (2usize..12, 2usize..12, proptest::collection::vec(any::<bool>(), 144))
            .prop_filter_map("non-empty", |(nx, ny, bits)| {
                let d = GridDomain::from_fn(2, 0.25, &[nx, ny], |c| {
                    bits[(c[0] as usize) * 12 + c[1] as usize]
                })
                .ok()?;
                (!d.is_empty()).then_some(d)
            })
    }

    proptest! {
        #[test]
        fn tau_is_monotone_and_widths_add(d in arb_domain(), a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            let total = d.measure();
            let mut ms = [a * total, b * total, c * total];
            ms.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let t: Vec<f64> = ms.iter().map(|&m| d.tau(0, m).unwrap()).collect();
            prop_assert!(t[0] <= t[1] && t[1] <= t[2]);
            let w01 = d.width(0, ms[0], ms[1]).unwrap();
            let w12 = d.width(0, ms[1], ms[2]).unwrap();
            let w02 = d.width(0, ms[0], ms[2]).unwrap();
            prop_assert!(w01 >= 0.0 && w12 >= 0.0);
            prop_assert!((w01 + w12 - w02).abs() < 1e-12);
        }

        #[test]
        fn columns_partition_the_domain(d in arb_domain(), level in 0i64..12, axis in 0usize..2) {
            let t = level as f64 * 0.25;
            let left = match d.slice(&SliceSelector::left(axis, t)) { Slice::Domain(x) => x, _ => unreachable!() };
            let right = match d.slice(&SliceSelector::right(axis, t)) { Slice::Domain(x) => x, _ => unreachable!() };
            let col = match d.slice(&SliceSelector::section(axis, t)) { Slice::Section(x) => x, _ => unreachable!() };
            prop_assert_eq!(left.len() + right.len() + col.len(), d.len());
        }

        #[test]
        fn isometries_preserve_geometry(d in arb_domain(), shift in -20i64..20) {
            for axis in 0..2 {
                let r = d.reflect(axis);
                let t = d.translate(axis, shift);
                prop_assert_eq!(r.len(), d.len());
                prop_assert_eq!(t.len(), d.len());
                for p in 0..2 {
                    prop_assert_eq!(r.projection_diameter(p).unwrap(), d.projection_diameter(p).unwrap());
                    prop_assert_eq!(t.projection_diameter(p).unwrap(), d.projection_diameter(p).unwrap());
                }
                let n = d.len();
                let (c1, c2) = (n / 5, (7 * n) / 10);
                let cv = d.spec().cell_volume();
                // Reflection swaps the roles of the two quantile arguments:
                // the reflected quantile at c is minus the last level whose
                // left count does not exceed n - c.
                let bb = d.bounding_box().unwrap();
                let sup_level = |c: usize| {
                    (bb.lo[axis]..=bb.hi[axis]).filter(|&l| d.count_left_of(axis, l) <= c).max().unwrap()
                };
                let expected = (sup_level(n - c1) - sup_level(n - c2)) as f64 * 0.25;
                let wr = r.width(axis, c1 as f64 * cv, c2 as f64 * cv).unwrap();
                prop_assert!((wr - expected).abs() < 1e-12);
                let w = d.width(axis, c1 as f64 * cv, c2 as f64 * cv).unwrap();
                prop_assert_eq!(t.width(axis, c1 as f64 * cv, c2 as f64 * cv).unwrap(), w);
            }
        }
    }
}
