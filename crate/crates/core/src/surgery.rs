//! Tail and interior domain surgery.
//!
//! A cut along `axis` removes a low-measure piece of the domain and grafts a
//! cylinder `(t − σ, t) × Ω_t` of length `σ = ε^{1/(N−1)}` onto the cut
//! section, so that the eigenfunctions extend to test functions by a linear
//! ramp. Levels are cell faces: face `c` separates cell index `c − 1` from `c`.
//!
//! Raster conventions:
//! * the section at face `c` is the column of cells with index `c` on the
//!   kept side;
//! * a cylinder of length `σ` is `q = ⌈σ/h⌉` copies of the section column;
//!   its Dirichlet boundary sits at the next cell centre, so the ramp runs
//!   over `σ_d = (q + 1) h`;
//! * an interior cut leaves one empty column between the two cylinders,
//!   where the test functions vanish.

use crate::bessel;
use crate::error::{Error, Result};
use crate::grid::{Cell, GridDomain};
use crate::spectral::{self, DirichletOperator, SolverConfig, Spectrum};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Which surgery a cut level belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Tail,
    Interior,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tail => "tail",
            Mode::Interior => "interior",
        }
    }
}

/// How condition (3) is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifyMode {
    /// Condition (3) requires a verified decrease of every normalized eigenvalue.
    Empirical,
    /// Condition (3) is whatever is left after (1) and (2).
    Theory,
}

impl std::str::FromStr for ClassifyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Self::Empirical),
            "theory" => Ok(Self::Theory),
            _ => Err(Error::InvalidSpec(format!("unknown mode `{s}` (expected empirical|theory)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    /// `max(ε, δ) > ν`.
    Cond1,
    /// Not (1), and `m ≤ C4 (ε + δ) ε^{1/(N−1)}`.
    Cond2,
    /// Neither, and the rescaled grafted domain has smaller eigenvalues.
    Cond3,
    /// Neither (1) nor (2), but no decrease could be verified.
    Inconclusive,
}

impl Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Class::Cond1 => "cond1",
            Class::Cond2 => "cond2",
            Class::Cond3 => "cond3",
            Class::Inconclusive => "inconclusive",
        }
    }
}

/// Constants of the construction for an eigenvalue budget `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConstants {
    pub dim: usize,
    /// Budget with `λ_k(Ω) ≤ K` (normalized).
    pub k_budget: f64,
    /// Tail mass scale: the largest value with `(4m̂)^{2/N} K / λ_1(B_N) ≤ 1/2`, capped at 1/4.
    pub mhat: f64,
    pub nu: f64,
    /// Only reported; condition (3) in theory mode does not use it.
    pub c3: f64,
    pub c4: f64,
    /// Interior analogue of `c4`.
    pub c6: f64,
    /// Guaranteed decrease per step once `m ≥ m̂`: `λ_1(B_N) m̂ / N`.
    pub eta: f64,
    /// Relative margin a decrease must exceed to count in empirical mode.
    pub decrease_margin: f64,
}

impl TheoryConstants {
    pub fn new(dim: usize, k_budget: f64) -> Result<Self> {
        Self::with(dim, k_budget, 0.1, 10.0)
    }

    pub fn with(dim: usize, k_budget: f64, nu: f64, c4: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidSpec(format!("dimension {dim} not in {{2, 3}}")));
        }
        if !(k_budget > 0.0 && k_budget.is_finite()) {
            return Err(Error::InvalidSpec(format!("budget K = {k_budget} must be positive")));
        }
        if !(nu > 0.0 && nu < 1.0) {
            return Err(Error::InvalidSpec(format!("nu = {nu} must lie in (0, 1)")));
        }
        if !(c4 > 0.0 && c4.is_finite()) {
            return Err(Error::InvalidSpec(format!("C4 = {c4} must be positive")));
        }
        let lb = bessel::lambda1_unit_ball(dim);
        let n = dim as f64;
        let mhat = ((lb / (2.0 * k_budget)).powf(n / 2.0) / 4.0).min(0.25 * (1.0 - 1e-12));
        Ok(Self {
            dim,
            k_budget,
            mhat,
            nu,
            c3: 1.0,
            c4,
            c6: c4,
            eta: lb * mhat / n,
            decrease_margin: 1e-6,
        })
    }

    /// `⌈K/η⌉`, the bound on consecutive decreasing steps, at most 64.
    pub fn step_cap(&self) -> usize {
        ((self.k_budget / self.eta).ceil() as usize).clamp(1, 64)
    }
}

/// Quantities of one side of a cut.
#[derive(Debug, Clone, PartialEq)]
pub struct SideSection {
    /// Cell index of the section column along the cut axis.
    pub column: i64,
    /// `-1` when the removed part lies at lower indices, `+1` otherwise.
    pub toward: i64,
    pub eps: f64,
    pub sigma: f64,
    pub mu_i: Vec<f64>,
    pub delta_i: Vec<f64>,
    pub delta_tan_i: Vec<f64>,
}

/// Section statistics at one cut level.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionData {
    pub axis: usize,
    pub mode: Mode,
    /// Tail: the cut face coordinate. Interior: the band half-width.
    pub t: f64,
    /// Interior band centre (equal to `t` in tail mode).
    pub t0: f64,
    /// Face indices of the removed slab `[lo, hi)` along the axis.
    pub lo: i64,
    pub hi: i64,
    pub eps: f64,
    pub m: f64,
    /// `∫_{Ω_t} |Du_i|²`.
    pub delta_i: Vec<f64>,
    /// `∫_{Ω_t} |D_y u_i|²`, the part tangential to the section.
    pub delta_tan_i: Vec<f64>,
    /// `∫_{Ω_t} u_i²`.
    pub mu_i: Vec<f64>,
    pub delta: f64,
    pub phi: f64,
    pub sigma: f64,
    pub sides: Vec<SideSection>,
}

#[derive(Debug, Clone, Default)]
struct ColumnStat {
    count: usize,
    mu: Vec<f64>,
    dtan: Vec<f64>,
    dminus: Vec<f64>,
    dplus: Vec<f64>,
    energy: f64,
}

/// Per-column statistics of a domain and its eigenfunctions along one axis.
#[derive(Debug, Clone)]
pub struct SectionScanner<'a> {
    domain: &'a GridDomain,
    axis: usize,
    k: usize,
    first: i64,
    columns: Vec<ColumnStat>,
    /// `energy_prefix[j]` = energy of columns with local index `< j`.
    energy_prefix: Vec<f64>,
}

impl<'a> SectionScanner<'a> {
    pub fn new(domain: &'a GridDomain, spectrum: &Spectrum, axis: usize) -> Result<Self> {
        let op = DirichletOperator::assemble(domain)?;
        if axis >= domain.dim() {
            return Err(Error::InvalidSpec(format!("axis {} out of range", axis + 1)));
        }
        let k = spectrum.k();
        let spec = domain.spec();
        let first = spec.lo(axis);
        let ncol = spec.extent()[axis];
        let mut columns = vec![
            ColumnStat {
                mu: vec![0.0; k],
                dtan: vec![0.0; k],
                dminus: vec![0.0; k],
                dplus: vec![0.0; k],
                ..Default::default()
            };
            ncol
        ];
        let h = domain.cell_size();
        let n = domain.dim() as i32;
        let w_sec = h.powi(n - 1);
        let w_grad = h.powi(n - 3);
        let w_energy = h.powi(n - 2);
        for (r, c) in op.cells().iter().enumerate() {
            let col = &mut columns[(c[axis] - first) as usize];
            col.count += 1;
            let nb: Vec<Option<usize>> = op.neighbor_rows(r).collect();
            for i in 0..k {
                let u = &spectrum.eigenfunctions[i];
                let x = u[r];
                let val = |o: Option<usize>| o.map_or(0.0, |j| u[j]);
                col.mu[i] += x * x * w_sec;
                for a in 0..domain.dim() {
                    let (minus, plus) = (nb[2 * a], nb[2 * a + 1]);
                    if a == axis {
                        col.dminus[i] += (x - val(minus)).powi(2) * w_grad;
                        col.dplus[i] += (x - val(plus)).powi(2) * w_grad;
                    } else {
                        if minus.is_none() {
                            col.dtan[i] += x * x * w_grad;
                        }
                        col.dtan[i] += (x - val(plus)).powi(2) * w_grad;
                    }
                    for o in [minus, plus] {
                        let share = if o.is_some() { 0.5 } else { 1.0 };
                        col.energy += share * (x - val(o)).powi(2) * w_energy;
                    }
                }
            }
        }
        let mut energy_prefix = Vec::with_capacity(ncol + 1);
        energy_prefix.push(0.0);
        for c in &columns {
            energy_prefix.push(energy_prefix.last().unwrap() + c.energy);
        }
        Ok(Self {
            domain,
            axis,
            k,
            first,
            columns,
            energy_prefix,
        })
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    fn local(&self, col: i64) -> Option<usize> {
        let j = col - self.first;
        (j >= 0 && (j as usize) < self.columns.len()).then_some(j as usize)
    }

    fn energy_between(&self, from: i64, to: i64) -> f64 {
        let clamp = |c: i64| (c - self.first).clamp(0, self.columns.len() as i64) as usize;
        let (a, b) = (clamp(from), clamp(to));
        if b <= a {
            0.0
        } else {
            self.energy_prefix[b] - self.energy_prefix[a]
        }
    }

    fn side(&self, column: i64, toward: i64) -> SideSection {
        let h = self.domain.cell_size();
        let n = self.domain.dim();
        let zero = vec![0.0; self.k];
        let (count, mu, dtan, dnorm) = match self.local(column) {
            Some(j) => {
                let c = &self.columns[j];
                let dn = if toward < 0 { &c.dminus } else { &c.dplus };
                (c.count, c.mu.clone(), c.dtan.clone(), dn.clone())
            }
            None => (0, zero.clone(), zero.clone(), zero),
        };
        let eps = count as f64 * h.powi(n as i32 - 1);
        SideSection {
            column,
            toward,
            eps,
            sigma: eps.powf(1.0 / (n as f64 - 1.0)),
            delta_i: dtan.iter().zip(&dnorm).map(|(a, b)| a + b).collect(),
            delta_tan_i: dtan,
            mu_i: mu,
        }
    }

    fn assemble(&self, mode: Mode, t: f64, t0: f64, lo: i64, hi: i64, sides: Vec<SideSection>) -> SectionData {
        let n = self.domain.dim() as f64;
        let h = self.domain.cell_size();
        let k = self.k;
        let sum = |f: &dyn Fn(&SideSection) -> &Vec<f64>| -> Vec<f64> {
            (0..k).map(|i| sides.iter().map(|s| f(s)[i]).sum()).collect()
        };
        let delta_i = sum(&|s| &s.delta_i);
        let delta_tan_i = sum(&|s| &s.delta_tan_i);
        let mu_i = sum(&|s| &s.mu_i);
        let eps: f64 = sides.iter().map(|s| s.eps).sum();
        let removed = self.domain.count_left_of(self.axis, hi) - self.domain.count_left_of(self.axis, lo);
        SectionData {
            axis: self.axis,
            mode,
            t,
            t0,
            lo,
            hi,
            eps,
            m: removed as f64 * h.powi(self.domain.dim() as i32),
            delta: delta_i.iter().sum(),
            delta_i,
            delta_tan_i,
            mu_i,
            phi: self.energy_between(lo, hi),
            sigma: eps.powf(1.0 / (n - 1.0)),
            sides,
        }
    }

    /// Tail cut at face `c`: the cells with index `< c` are removed.
    pub fn tail(&self, c: i64) -> SectionData {
        let lo = self.domain.spec().lo(self.axis).min(c);
        let t = c as f64 * self.domain.cell_size();
        let side = self.side(c, -1);
        self.assemble(Mode::Tail, t, t, lo, c, vec![side])
    }

    /// Interior cut removing the slab of faces `[lo, hi)`.
    pub fn interior(&self, lo: i64, hi: i64) -> SectionData {
        let h = self.domain.cell_size();
        let t0 = 0.5 * (lo + hi) as f64 * h;
        let t = 0.5 * (hi - lo) as f64 * h;
        let sides = vec![self.side(lo - 1, 1), self.side(hi, -1)];
        self.assemble(Mode::Interior, t, t0, lo, hi, sides)
    }
}

/// Last admissible tail face: `τ(Ω, 2m̂)` as a face index.
pub fn tail_limit(domain: &GridDomain, axis: usize, tc: &TheoryConstants) -> Result<i64> {
    domain.tau_level(axis, (2.0 * tc.mhat * domain.measure()).min(domain.measure()))
}

/// Face indices `(A, B)` with `A = τ(Ω, m̄ − m̂)` and `B = τ(Ω, m̄ + m̂/2)`;
/// the interior band is centred at `(A + B)/2` with half-width at most `(B − A)/2`.
pub fn interior_window(domain: &GridDomain, axis: usize, mbar: f64, tc: &TheoryConstants) -> Result<(i64, i64)> {
    let total = domain.measure();
    let (lo_m, hi_m) = ((mbar - tc.mhat) * total, (mbar + 0.5 * tc.mhat) * total);
    if !(tc.mhat < mbar && mbar < 1.0 - 0.5 * tc.mhat) {
        return Err(Error::Precondition(format!(
            "m̄ = {mbar} outside ({}, {})",
            tc.mhat,
            1.0 - 0.5 * tc.mhat
        )));
    }
    Ok((domain.tau_level(axis, lo_m)?, domain.tau_level(axis, hi_m)?))
}

/// Section data for a tail cut at coordinate `t` or an interior band of
/// half-width `t` around `t0`. Both must be cell-face aligned (after
/// rounding to the nearest half cell for `t0`).
pub fn section_data(
    domain: &GridDomain,
    spectrum: &Spectrum,
    axis: usize,
    mode: Mode,
    t0: f64,
    t: f64,
    tc: &TheoryConstants,
) -> Result<SectionData> {
    let h = domain.cell_size();
    let scanner = SectionScanner::new(domain, spectrum, axis)?;
    match mode {
        Mode::Tail => {
            let c = (t / h).round() as i64;
            let limit = tail_limit(domain, axis, tc)?;
            if c > limit {
                return Err(Error::Precondition(format!(
                    "tail level {t} beyond τ(Ω, 2m̂) = {}",
                    limit as f64 * h
                )));
            }
            Ok(scanner.tail(c))
        }
        Mode::Interior => {
            let lo = ((t0 - t) / h).round() as i64;
            let hi = ((t0 + t) / h).round() as i64;
            if hi < lo || t < 0.0 {
                return Err(Error::Precondition(format!("band half-width {t} must be non-negative")));
            }
            Ok(scanner.interior(lo, hi))
        }
    }
}

/// Empirical ratios `μ_i / (ε^{2/(N−1)} δ_i)`; `None` where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct MuBoundReport {
    pub ratios: Vec<Option<f64>>,
    pub max_ratio: Option<f64>,
}

pub fn mu_bound_check(sd: &SectionData, dim: usize) -> MuBoundReport {
    let scale = sd.eps.powf(2.0 / (dim as f64 - 1.0));
    let ratios: Vec<Option<f64>> = sd
        .mu_i
        .iter()
        .zip(&sd.delta_i)
        .map(|(&mu, &d)| {
            let den = scale * d;
            (sd.eps > 0.0 && den > 0.0).then(|| mu / den)
        })
        .collect();
    let max_ratio = ratios.iter().flatten().cloned().reduce(f64::max);
    MuBoundReport { ratios, max_ratio }
}

/// The grafted domain `Ω̃(t)` with bookkeeping for the test functions.
#[derive(Debug, Clone)]
pub struct SurgeryResult {
    pub mode: Mode,
    pub grafted: GridDomain,
    /// `|Ω̃(t)|` (occupied measure).
    pub volume: f64,
    /// Cylinder length in columns, per side.
    pub q: Vec<usize>,
    /// Measure of the kept part `Ω⁺(t)`.
    pub kept_volume: f64,
    /// For every grafted cell (in `grafted.cells()` order): the source row in
    /// the original domain and the ramp factor (1 outside the cylinders).
    pub source: Vec<(usize, f64)>,
    /// Cylinder membership of each grafted cell.
    pub in_cylinder: Vec<bool>,
    /// Grafted rows of the section columns (half weight in cylinder quadrature).
    pub section_rows: Vec<usize>,
    /// `|Ω̃|^{2/N} λ_i(Ω̃)`, once computed.
    pub normalized_spectrum: Option<Vec<f64>>,
    pub classification: Option<Class>,
}

fn row_lookup(domain: &GridDomain) -> impl Fn(&Cell) -> Option<usize> + '_ {
    let spec = domain.spec();
    let mut rows = vec![u32::MAX; spec.box_len()];
    for (r, c) in domain.cells().enumerate() {
        rows[spec.linear(&c).expect("cell in box")] = r as u32;
    }
    move |c: &Cell| {
        spec.linear(c)
            .and_then(|i| (rows[i] != u32::MAX).then_some(rows[i] as usize))
    }
}

fn cylinder_len(sigma: f64, eps: f64, h: f64) -> usize {
    if eps <= 0.0 {
        0
    } else {
        ((sigma / h - 1e-9).ceil() as usize).max(1)
    }
}

struct Builder {
    cells: HashMap<Cell, (usize, f64, bool)>,
    sections: Vec<Cell>,
}

impl Builder {
    fn finish(self, domain: &GridDomain, mode: Mode, q: Vec<usize>, kept: usize) -> SurgeryResult {
        let dim = domain.dim();
        let h = domain.cell_size();
        let list: Vec<Cell> = self.cells.keys().copied().collect();
        let grafted = if list.is_empty() {
            GridDomain::empty(domain.spec().clone())
        } else {
            GridDomain::from_cell_list(dim, h, &list).expect("valid cells")
        };
        let mut source = Vec::with_capacity(grafted.len());
        let mut in_cylinder = Vec::with_capacity(grafted.len());
        let mut index = HashMap::with_capacity(grafted.len());
        for (g, c) in grafted.cells().enumerate() {
            let (row, f, cyl) = self.cells[&c];
            source.push((row, f));
            in_cylinder.push(cyl);
            index.insert(c, g);
        }
        let section_rows = self.sections.iter().filter_map(|c| index.get(c).copied()).collect();
        SurgeryResult {
            mode,
            volume: grafted.measure(),
            kept_volume: kept as f64 * domain.spec().cell_volume(),
            grafted,
            q,
            source,
            in_cylinder,
            section_rows,
            normalized_spectrum: None,
            classification: None,
        }
    }
}

/// `Ω̃(t) = Ω⁺(t) ∪ Q(t)`: the cells left of the cut face are removed and
/// `⌈σ/h⌉` copies of the section column are attached in their place.
pub fn build_tail_cut(domain: &GridDomain, sd: &SectionData) -> Result<SurgeryResult> {
    if sd.mode != Mode::Tail {
        return Err(Error::Precondition("tail cut needs tail section data".into()));
    }
    let axis = sd.axis;
    let h = domain.cell_size();
    let c = sd.hi;
    let rows = row_lookup(domain);
    let mut b = Builder {
        cells: HashMap::new(),
        sections: Vec::new(),
    };
    let mut kept = 0;
    for cell in domain.cells() {
        if cell[axis] >= c {
            b.cells.insert(cell, (rows(&cell).unwrap(), 1.0, false));
            kept += 1;
        }
    }
    let side = &sd.sides[0];
    let q = cylinder_len(side.sigma, side.eps, h);
    for cell in domain.column(axis, c).cells {
        let row = rows(&cell).unwrap();
        b.sections.push(cell);
        for j in 1..=q {
            let mut n = cell;
            n[axis] -= j as i64;
            b.cells.insert(n, (row, (q + 1 - j) as f64 / (q + 1) as f64, true));
        }
    }
    Ok(b.finish(domain, Mode::Tail, vec![q], kept))
}

/// Interior surgery: the slab `Ω⁻(t)` is removed, each remaining half
/// receives an internal cylinder on its section, and the right half is
/// translated so that the two cylinders are one empty column apart.
pub fn build_interior_cut(domain: &GridDomain, sd: &SectionData) -> Result<SurgeryResult> {
    if sd.mode != Mode::Interior {
        return Err(Error::Precondition("interior cut needs interior section data".into()));
    }
    let axis = sd.axis;
    let h = domain.cell_size();
    let (lo, hi) = (sd.lo, sd.hi);
    let rows = row_lookup(domain);
    let left_nonempty = domain.count_left_of(axis, lo) > 0;
    let right_nonempty = domain.count_left_of(axis, hi) < domain.len();
    let q1 = if left_nonempty {
        cylinder_len(sd.sides[0].sigma, sd.sides[0].eps, h)
    } else {
        0
    };
    let q2 = if right_nonempty {
        cylinder_len(sd.sides[1].sigma, sd.sides[1].eps, h)
    } else {
        0
    };
    let gap = usize::from(left_nonempty && right_nonempty);
    let width = (hi - lo) as usize;
    if q1 + q2 + gap > width {
        return Err(Error::Precondition(format!(
            "cylinders overlap: {q1} + {q2} columns (+{gap} gap) exceed the band width {width}"
        )));
    }
    let shift = (lo + (q1 + q2 + gap) as i64) - hi;
    let mut b = Builder {
        cells: HashMap::new(),
        sections: Vec::new(),
    };
    let mut kept = 0;
    for cell in domain.cells() {
        if cell[axis] < lo {
            b.cells.insert(cell, (rows(&cell).unwrap(), 1.0, false));
            kept += 1;
        } else if cell[axis] >= hi {
            let mut n = cell;
            n[axis] += shift;
            b.cells.insert(n, (rows(&cell).unwrap(), 1.0, false));
            kept += 1;
        }
    }
    if q1 > 0 {
        for cell in domain.column(axis, lo - 1).cells {
            let row = rows(&cell).unwrap();
            b.sections.push(cell);
            for j in 1..=q1 {
                let mut n = cell;
                n[axis] += j as i64;
                b.cells.insert(n, (row, (q1 + 1 - j) as f64 / (q1 + 1) as f64, true));
            }
        }
    }
    if q2 > 0 {
        for cell in domain.column(axis, hi).cells {
            let row = rows(&cell).unwrap();
            let mut s = cell;
            s[axis] += shift;
            b.sections.push(s);
            for j in 1..=q2 {
                let mut n = s;
                n[axis] -= j as i64;
                b.cells.insert(n, (row, (q2 + 1 - j) as f64 / (q2 + 1) as f64, true));
            }
        }
    }
    Ok(b.finish(domain, Mode::Interior, vec![q1, q2], kept))
}

/// Closed-form cylinder integrals against their raster quadrature for one `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderDiagnostics {
    /// `Σ_sides μ/σ_d + δ_tan σ_d/3`.
    pub energy_closed: f64,
    pub energy_quadrature: f64,
    /// `Σ_sides σ_d μ/3`.
    pub mass_closed: f64,
    pub mass_quadrature: f64,
}

impl CylinderDiagnostics {
    pub fn energy_rel_error(&self) -> f64 {
        rel_err(self.energy_quadrature, self.energy_closed)
    }

    pub fn mass_rel_error(&self) -> f64 {
        rel_err(self.mass_quadrature, self.mass_closed)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 { 0.0 } else { (a - b).abs() / s }
}

/// Test functions `ũ_i` on `Ω̃(t)` and their diagnostics.
#[derive(Debug, Clone)]
pub struct GraftedFunctions {
    /// Over `grafted.cells()`.
    pub functions: Vec<Vec<f64>>,
    pub cylinder: Vec<CylinderDiagnostics>,
    /// `R(ũ_i, Ω̃(t))`.
    pub rayleigh: Vec<f64>,
    /// `(R(ũ_i) − λ_i(Ω)) / (ε^{1/(N−1)} δ_i)` where defined.
    pub rayleigh_constant: Vec<Option<f64>>,
}

pub fn graft_test_functions(spectrum: &Spectrum, result: &SurgeryResult, sd: &SectionData) -> Result<GraftedFunctions> {
    let g = &result.grafted;
    let k = spectrum.k();
    let functions: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let u = &spectrum.eigenfunctions[i];
            result.source.iter().map(|&(r, f)| f * u[r]).collect()
        })
        .collect();
    if g.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let op = DirichletOperator::assemble(g)?;
    let h = g.cell_size();
    let n = g.dim() as i32;
    let hn = h.powi(n);
    let hface = h.powi(n - 2);
    let mut is_section = vec![false; g.len()];
    for &r in &result.section_rows {
        is_section[r] = true;
    }
    let cyl_sides: Vec<(usize, &SideSection)> = match result.mode {
        Mode::Tail => vec![(result.q[0], &sd.sides[0])],
        Mode::Interior => result.q.iter().copied().zip(sd.sides.iter()).collect(),
    };
    let axis = sd.axis;
    let mut cylinder = Vec::with_capacity(k);
    let mut rayleigh = Vec::with_capacity(k);
    let mut rayleigh_constant = Vec::with_capacity(k);
    for (i, v) in functions.iter().enumerate() {
        let (mut energy_closed, mut mass_closed) = (0.0, 0.0);
        for &(q, side) in &cyl_sides {
            if q == 0 {
                continue;
            }
            let sd_len = (q + 1) as f64 * h;
            energy_closed += side.mu_i[i] / sd_len + side.delta_tan_i[i] * sd_len / 3.0;
            mass_closed += sd_len * side.mu_i[i] / 3.0;
        }
        // Faces touching the cylinder count fully; the tangential faces of
        // the section columns, and their mass, with weight 1/2 (trapezoid
        // rule in the cut direction).
        let (mut energy_q, mut mass_q) = (0.0, 0.0);
        for r in 0..g.len() {
            let x = v[r];
            let nb: Vec<Option<usize>> = op.neighbor_rows(r).collect();
            if result.in_cylinder[r] {
                mass_q += x * x * hn;
                for o in &nb {
                    let y = o.map_or(0.0, |j| v[j]);
                    let shared = o.is_some_and(|j| result.in_cylinder[j]);
                    let w = if shared { 0.5 } else { 1.0 };
                    energy_q += w * (x - y).powi(2) * hface;
                }
            } else if is_section[r] {
                mass_q += 0.5 * x * x * hn;
                for (d, o) in nb.iter().enumerate() {
                    if d / 2 == axis {
                        continue;
                    }
                    let y = o.map_or(0.0, |j| v[j]);
                    let w = if o.is_some() { 0.5 } else { 1.0 };
                    energy_q += 0.5 * w * (x - y).powi(2) * hface;
                }
            }
        }
        cylinder.push(CylinderDiagnostics {
            energy_closed,
            energy_quadrature: energy_q,
            mass_closed,
            mass_quadrature: mass_q,
        });
        let num = op.energy(v);
        let den = spectral::dot(v, v) * hn;
        let ray = if den > 0.0 { num / den } else { f64::INFINITY };
        rayleigh.push(ray);
        let scale = sd.eps.powf(1.0 / (g.dim() as f64 - 1.0)) * sd.delta_i[i];
        rayleigh_constant.push((scale > 0.0).then(|| (ray - spectrum.eigenvalues[i]) / scale));
    }
    Ok(GraftedFunctions {
        functions,
        cylinder,
        rayleigh,
        rayleigh_constant,
    })
}

/// Rayleigh-Ritz upper bounds for the normalized eigenvalues of `Ω̂(t)`
/// from `span{ũ_1..ũ_k}`.
pub fn normalized_upper_bounds(result: &SurgeryResult, functions: &[Vec<f64>]) -> Result<Vec<f64>> {
    let nu = spectral::subspace_upper_bounds(functions, &result.grafted)?;
    Ok(spectral::normalize(&nu, result.volume, result.grafted.dim()))
}

/// Solves the grafted domain and stores `|Ω̃|^{2/N} λ_i(Ω̃)`.
pub fn evaluate_grafted(result: &mut SurgeryResult, k: usize, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let g = &result.grafted;
    let k_eff = k.min(g.len());
    let s = spectral::spectrum_of(g, k_eff, cfg)?;
    let mut norm = spectral::normalized_eigenvalues(&s, g);
    norm.resize(k, f64::INFINITY);
    result.normalized_spectrum = Some(norm.clone());
    Ok(norm)
}

/// Conditions (1) and (2), or `None` when neither holds.
pub fn formula_class(sd: &SectionData, tc: &TheoryConstants) -> Option<Class> {
    if sd.eps.max(sd.delta) > tc.nu {
        return Some(Class::Cond1);
    }
    let c = match sd.mode {
        Mode::Tail => tc.c4,
        Mode::Interior => tc.c6,
    };
    let rhs = c * (sd.eps + sd.delta) * sd.eps.powf(1.0 / (tc.dim as f64 - 1.0));
    if sd.m <= rhs {
        return Some(Class::Cond2);
    }
    None
}

/// `true` when every `after_i` is below `before_i` by more than the margin.
pub fn strictly_decreases(before: &[f64], after: &[f64], margin: f64) -> bool {
    before.len() <= after.len() && before.iter().zip(after).all(|(b, a)| *a < b * (1.0 - margin))
}

/// The trichotomy for one cut. In empirical mode condition (3) needs the
/// grafted spectrum (see [`evaluate_grafted`]) below `original` (normalized).
pub fn classify(
    result: &SurgeryResult,
    sd: &SectionData,
    tc: &TheoryConstants,
    mode: ClassifyMode,
    original: &[f64],
) -> Class {
    if let Some(c) = formula_class(sd, tc) {
        return c;
    }
    match mode {
        ClassifyMode::Theory => Class::Cond3,
        ClassifyMode::Empirical => match &result.normalized_spectrum {
            Some(after) if strictly_decreases(original, after, tc.decrease_margin) => Class::Cond3,
            _ => Class::Inconclusive,
        },
    }
}

/// How the cut levels of a scan are generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanMode {
    /// Every face from the left edge of the box to `τ(Ω, 2m̂)`.
    Tail,
    /// Every band centred between `τ(Ω, m̄ − m̂)` and `τ(Ω, m̄ + m̂/2)`.
    Interior { mbar: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub classify: ClassifyMode,
    pub solver: SolverConfig,
    /// Grafted domains solved up front, in order of their Rayleigh-Ritz bounds.
    pub solve_budget: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            classify: ClassifyMode::Empirical,
            solver: SolverConfig::default(),
            solve_budget: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanRow {
    pub sd: SectionData,
    /// `|Ω̃(t)|` relative to `|Ω|`.
    pub volume: f64,
    pub class: Class,
    /// Normalized eigenvalues of `Ω̂(t)`: solver values when `solved`,
    /// otherwise Rayleigh-Ritz upper bounds (empty if not computed).
    pub lambda_hat: Vec<f64>,
    pub solved: bool,
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub axis: usize,
    pub mode: Mode,
    pub original: Vec<f64>,
    pub rows: Vec<ScanRow>,
    /// Index into `rows` of the chosen Cond3 level.
    pub best: Option<usize>,
    pub best_result: Option<SurgeryResult>,
}

fn build(domain: &GridDomain, sd: &SectionData) -> Result<SurgeryResult> {
    match sd.mode {
        Mode::Tail => build_tail_cut(domain, sd),
        Mode::Interior => build_interior_cut(domain, sd),
    }
}

fn min_drop(before: &[f64], after: &[f64]) -> f64 {
    before
        .iter()
        .zip(after)
        .map(|(b, a)| b - a)
        .fold(f64::INFINITY, f64::min)
}

/// Section data for every admissible level of a scan.
pub fn scan_levels(scanner: &SectionScanner, domain: &GridDomain, mode: ScanMode, tc: &TheoryConstants) -> Result<Vec<SectionData>> {
    let axis = scanner.axis();
    let bb = domain.bounding_box().ok_or(Error::EmptyDomain)?;
    match mode {
        ScanMode::Tail => {
            let limit = tail_limit(domain, axis, tc)?;
            Ok((bb.lo[axis]..=limit).map(|c| scanner.tail(c)).collect())
        }
        ScanMode::Interior { mbar } => {
            let (a, b) = interior_window(domain, axis, mbar, tc)?;
            let (mut lo, mut hi) = ((a + b).div_euclid(2), (a + b + 1).div_euclid(2));
            let mut out = Vec::new();
            while hi - lo <= b - a {
                out.push(scanner.interior(lo, hi));
                lo -= 1;
                hi += 1;
            }
            Ok(out)
        }
    }
}

/// Classifies every admissible level and picks, among the Cond3 levels,
/// the one with the largest minimum eigenvalue drop.
pub fn scan(
    domain: &GridDomain,
    spectrum: &Spectrum,
    axis: usize,
    mode: ScanMode,
    tc: &TheoryConstants,
    cfg: &ScanConfig,
) -> Result<ScanReport> {
    let original = spectral::normalized_eigenvalues(spectrum, domain);
    let scanner = SectionScanner::new(domain, spectrum, axis)?;
    let levels = scan_levels(&scanner, domain, mode, tc)?;
    let total = domain.measure();
    let surgery_mode = match mode {
        ScanMode::Tail => Mode::Tail,
        ScanMode::Interior { .. } => Mode::Interior,
    };
    let mut rows = Vec::with_capacity(levels.len());
    let mut results: Vec<Option<SurgeryResult>> = Vec::with_capacity(levels.len());
    for sd in levels {
        let formula = formula_class(&sd, tc);
        let built = if formula.is_none() { build(domain, &sd).ok() } else { None };
        let (class, lambda_hat) = match (&formula, &built) {
            (Some(c), _) => (*c, Vec::new()),
            (None, None) => (Class::Inconclusive, Vec::new()),
            (None, Some(res)) => {
                if cfg.classify == ClassifyMode::Theory {
                    (Class::Cond3, Vec::new())
                } else {
                    let bounds = graft_test_functions(spectrum, res, &sd)
                        .and_then(|gf| normalized_upper_bounds(res, &gf.functions))
                        .unwrap_or_default();
                    let class = if strictly_decreases(&original, &bounds, tc.decrease_margin) {
                        Class::Cond3
                    } else {
                        Class::Inconclusive
                    };
                    (class, bounds)
                }
            }
        };
        let volume = built.as_ref().map_or(f64::NAN, |r| r.volume / total);
        rows.push(ScanRow {
            sd,
            volume,
            class,
            lambda_hat,
            solved: false,
        });
        results.push(built);
    }

    let mut best = None;
    if cfg.classify == ClassifyMode::Empirical {
        let k = original.len();
        let mut order: Vec<usize> = (0..rows.len()).filter(|&i| results[i].is_some()).collect();
        let key = |r: &ScanRow| {
            if r.lambda_hat.len() == k {
                min_drop(&original, &r.lambda_hat)
            } else {
                f64::NEG_INFINITY
            }
        };
        order.sort_by(|&a, &b| key(&rows[b]).total_cmp(&key(&rows[a])).then(a.cmp(&b)));
        let solve = |idx: usize, rows: &mut Vec<ScanRow>, results: &mut Vec<Option<SurgeryResult>>| -> Result<()> {
            let res = results[idx].as_mut().expect("built");
            let after = evaluate_grafted(res, k, &cfg.solver)?;
            let row = &mut rows[idx];
            row.class = classify(res, &row.sd, tc, ClassifyMode::Empirical, &original);
            res.classification = Some(row.class);
            row.lambda_hat = after;
            row.solved = true;
            Ok(())
        };
        for &idx in order.iter().take(cfg.solve_budget) {
            solve(idx, &mut rows, &mut results)?;
        }
        loop {
            let pick = (0..rows.len())
                .filter(|&i| rows[i].class == Class::Cond3)
                .max_by(|&a, &b| {
                    min_drop(&original, &rows[a].lambda_hat)
                        .total_cmp(&min_drop(&original, &rows[b].lambda_hat))
                        .then(b.cmp(&a))
                });
            match pick {
                None => break,
                Some(i) if rows[i].solved => {
                    best = Some(i);
                    break;
                }
                Some(i) => solve(i, &mut rows, &mut results)?,
            }
        }
    } else {
        // Theory mode: the Cond3 level removing the most measure.
        best = (0..rows.len())
            .filter(|&i| rows[i].class == Class::Cond3)
            .max_by(|&a, &b| rows[a].sd.m.total_cmp(&rows[b].sd.m).then(b.cmp(&a)));
        if let Some(i) = best {
            if let Some(res) = results[i].as_mut() {
                let after = evaluate_grafted(res, original.len(), &cfg.solver)?;
                rows[i].lambda_hat = after;
                rows[i].solved = true;
                res.classification = Some(Class::Cond3);
            }
        }
    }
    let best_result = best.and_then(|i| results[i].take());
    Ok(ScanReport {
        axis,
        mode: surgery_mode,
        original,
        rows,
        best,
        best_result,
    })
}

/// CSV `t,eps,m,delta,phi,sigma,volume,class,lambda_hat_1..k`, one row per level.
pub fn scan_csv(report: &ScanReport) -> String {
    let k = report.original.len();
    let mut out = String::from("t,eps,m,delta,phi,sigma,volume,class");
    for i in 1..=k {
        let _ = write!(out, ",lambda_hat_{i}");
    }
    out.push('\n');
    for row in &report.rows {
        let sd = &row.sd;
        let t = match sd.mode {
            Mode::Tail => sd.t,
            Mode::Interior => sd.t,
        };
        let _ = write!(
            out,
            "{:.9},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9},{}",
            t,
            sd.eps,
            sd.m,
            sd.delta,
            sd.phi,
            sd.sigma,
            row.volume,
            row.class.as_str()
        );
        for i in 0..k {
            match row.lambda_hat.get(i) {
                Some(v) if v.is_finite() => {
                    let _ = write!(out, ",{v:.9e}");
                }
                _ => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn setup(d: &GridDomain, k: usize) -> (Spectrum, TheoryConstants) {
        let s = spectral::spectrum_of(d, k, &cfg()).unwrap();
        let norm = spectral::normalized_eigenvalues(&s, d);
        (s, TheoryConstants::new(d.dim(), norm[k - 1] * 1.01).unwrap())
    }

    #[test]
    fn mhat_satisfies_its_defining_inequality() {
        for dim in [2, 3] {
            for k in [20.0, 50.0, 200.0, 1e4] {
                let tc = TheoryConstants::new(dim, k).unwrap();
                let lhs = (4.0 * tc.mhat).powf(2.0 / dim as f64) * k / bessel::lambda1_unit_ball(dim);
                assert!(lhs <= 0.5 + 1e-12 && tc.mhat > 0.0 && tc.mhat < 0.25);
                assert!((lhs - 0.5).abs() < 1e-9);
                assert!(tc.eta > 0.0);
            }
        }
    }

    #[test]
    fn unit_square_section_and_tail_cut() {
        let d = shapes::unit_square(31);
        let (s, _) = setup(&d, 1);
        let h = d.cell_size();
        let scanner = SectionScanner::new(&d, &s, 0).unwrap();
        let sd = scanner.tail(16);
        assert!((sd.t - 0.5).abs() < 1e-12);
        assert!((sd.eps - 31.0 * h).abs() < 1e-12);
        assert!((sd.m - 16.0 * 31.0 * h * h).abs() < 1e-12);
        assert!((sd.sigma - sd.eps).abs() < 1e-15);
        let res = build_tail_cut(&d, &sd).unwrap();
        assert_eq!(res.q, vec![31]);
        assert_eq!(res.grafted.len(), 15 * 31 + 31 * 31);
        assert!((res.volume - (res.kept_volume + 31.0 * 31.0 * h * h)).abs() < 1e-12);
    }

    #[test]
    fn empty_column_gives_zero_section() {
        let d = shapes::separated_squares(2, 10, 3);
        let (s, tc) = setup(&d, 2);
        let scanner = SectionScanner::new(&d, &s, 0).unwrap();
        let sd = scanner.tail(11);
        assert_eq!(sd.eps, 0.0);
        assert!(sd.mu_i.iter().chain(&sd.delta_i).all(|&v| v == 0.0));
        assert!(mu_bound_check(&sd, 2).ratios.iter().all(Option::is_none));
        let res = build_tail_cut(&d, &sd).unwrap();
        assert_eq!(res.q, vec![0]);
        assert_eq!(res.grafted, d.right_of(0, 11));
        let gf = graft_test_functions(&s, &res, &sd).unwrap();
        assert!(gf.cylinder.iter().all(|c| c.energy_closed == 0.0 && c.energy_quadrature == 0.0));
        let _ = tc;
    }

    #[test]
    fn dumbbell_neck_section_matches_direct_summation() {
        // 0.45-area squares and a 0.1 x 1.0 neck, at h = 1/60.
        let d = shapes::dumbbell(40, 60, 6).scaled(1.0 / 60.0 / (1.0 / (3560f64).sqrt())).unwrap();
        let h = d.cell_size();
        let (s, _) = setup(&d, 2);
        let scanner = SectionScanner::new(&d, &s, 0).unwrap();
        let c = 70;
        let sd = scanner.tail(c);
        assert!((sd.eps - 0.1).abs() < 1e-12);

        // Oracle: explicit lookups cell by cell.
        let cells = d.cell_vec();
        let idx: HashMap<Cell, usize> = cells.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        for i in 0..2 {
            let u = &s.eigenfunctions[i];
            let val = |c: [i64; 3]| idx.get(&c).map_or(0.0, |&r| u[r]);
            let (mut mu, mut dn, mut dt) = (0.0, 0.0, 0.0);
            for y in -5..50 {
                let cell = [c, y, 0];
                if !idx.contains_key(&cell) {
                    continue;
                }
                let v = val(cell);
                mu += v * v * h;
                dn += ((v - val([c - 1, y, 0])) / h).powi(2) * h;
                if !idx.contains_key(&[c, y - 1, 0]) {
                    dt += (v / h).powi(2) * h;
                }
                dt += ((val([c, y + 1, 0]) - v) / h).powi(2) * h;
            }
            assert!((sd.mu_i[i] - mu).abs() < 1e-12 * mu.max(1e-300));
            assert!((sd.delta_tan_i[i] - dt).abs() < 1e-10 * dt);
            assert!((sd.delta_i[i] - dt - dn).abs() < 1e-10 * (dt + dn));
        }
        let report = mu_bound_check(&sd, 2);
        assert!(report.ratios.iter().all(|r| r.is_some_and(f64::is_finite)));

        // Cut at the neck: sigma = 0.1 means 6 cylinder columns.
        let res = build_tail_cut(&d, &sd).unwrap();
        let cyl = res.volume - res.kept_volume;
        assert!((cyl - 0.01).abs() <= 6.0 * h * h + 1e-12);
    }

    #[test]
    fn cylinder_closed_forms_on_square_cut() {
        let d = shapes::unit_square(47);
        let (s, _) = setup(&d, 3);
        let scanner = SectionScanner::new(&d, &s, 0).unwrap();
        let sd = scanner.tail(20);
        let res = build_tail_cut(&d, &sd).unwrap();
        let gf = graft_test_functions(&s, &res, &sd).unwrap();
        let h = d.cell_size();
        for c in &gf.cylinder {
            assert!(c.energy_rel_error() <= 5.0 * h, "{c:?}");
            assert!(c.mass_rel_error() <= 5.0 * h, "{c:?}");
        }
        // Test functions vanish outside the grafted domain by construction and
        // are bounded above by min-max.
        let nu = normalized_upper_bounds(&res, &gf.functions).unwrap();
        let mut r = res.clone();
        let lam = evaluate_grafted(&mut r, 3, &cfg()).unwrap();
        for j in 0..3 {
            assert!(nu[j] >= lam[j] * (1.0 - 1e-8));
        }
    }

    #[test]
    fn interior_cut_of_separated_halves_is_a_translation() {
        let d = shapes::separated_squares(2, 12, 6);
        let (s, tc) = setup(&d, 2);
        let scanner = SectionScanner::new(&d, &s, 0).unwrap();
        let sd = scanner.interior(14, 16);
        assert_eq!(sd.m, 0.0);
        assert_eq!(sd.eps, 0.0);
        let mut res = build_interior_cut(&d, &sd).unwrap();
        assert_eq!(res.grafted.len(), d.len());
        assert_eq!(res.grafted.components().len(), 2);
        let after = evaluate_grafted(&mut res, 2, &cfg()).unwrap();
        let before = spectral::normalized_eigenvalues(&s, &d);
        for i in 0..2 {
            assert!((after[i] - before[i]).abs() < 1e-7 * before[i]);
        }
        assert_eq!(formula_class(&sd, &tc), Some(Class::Cond2));
    }

    #[test]
    fn interior_cut_of_dumbbell_neck() {
        let d = shapes::dumbbell(30, 40, 2);
        let h = d.cell_size();
        let (s, _) = setup(&d, 2);
        let scanner = SectionScanner::new(&d, &s, 0).unwrap();
        let sd = scanner.interior(40, 60);
        let res = build_interior_cut(&d, &sd).unwrap();
        assert_eq!(res.q, vec![2, 2]);
        let removed = 20 * 2;
        assert_eq!(res.grafted.len(), d.len() - removed + 2 * 2 * 2);
        let bound = d.measure() - sd.m + sd.eps.powi(2);
        assert!(res.volume <= bound + 2.0 * 2.0 * h * h);
        // A band at the domain edge degenerates to a tail cut.
        let f = shapes::filament(20, 30, 1);
        let (fs, _) = setup(&f, 1);
        let fscan = SectionScanner::new(&f, &fs, 0).unwrap();
        let a = build_interior_cut(&f, &fscan.interior(-3, 3)).unwrap().grafted;
        let b = build_tail_cut(&f, &fscan.tail(3)).unwrap().grafted;
        assert_eq!(a.len(), b.len());
        let shift = b.bounding_box().unwrap().lo[0] - a.bounding_box().unwrap().lo[0];
        assert_eq!(a.translate(0, shift), b);
        // Overlapping cylinders are rejected.
        let wide = SectionScanner::new(&shapes::rectangle(&[30, 30]), &setup(&shapes::rectangle(&[30, 30]), 1).0, 0)
            .unwrap()
            .interior(14, 16);
        assert!(matches!(
            build_interior_cut(&shapes::rectangle(&[30, 30]), &wide),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn classification_rules() {
        let d = shapes::filament(40, 150, 1);
        let (s, tc) = setup(&d, 3);
        let scanner = SectionScanner::new(&d, &s, 0).unwrap();
        // Thick section: condition (1).
        let thick = scanner.tail(160);
        assert!(thick.eps > tc.nu);
        assert_eq!(formula_class(&thick, &tc), Some(Class::Cond1));
        // No removed mass: condition (2).
        let first = scanner.tail(0);
        assert_eq!(first.m, 0.0);
        assert_eq!(formula_class(&first, &tc), Some(Class::Cond2));
        // Deep in the filament: neither, and the cut lowers every eigenvalue.
        let sd = scanner.tail(100);
        assert_eq!(formula_class(&sd, &tc), None);
        let mut res = build_tail_cut(&d, &sd).unwrap();
        evaluate_grafted(&mut res, 3, &cfg()).unwrap();
        let before = spectral::normalized_eigenvalues(&s, &d);
        assert_eq!(classify(&res, &sd, &tc, ClassifyMode::Empirical, &before), Class::Cond3);
        assert_eq!(classify(&res, &sd, &tc, ClassifyMode::Theory, &before), Class::Cond3);
    }

    #[test]
    fn scan_finds_a_decreasing_cut_on_a_filament() {
        let d = shapes::filament(40, 150, 1);
        let (s, tc) = setup(&d, 3);
        let report = scan(&d, &s, 0, ScanMode::Tail, &tc, &ScanConfig::default()).unwrap();
        let best = report.best.expect("a Cond3 level");
        let row = &report.rows[best];
        assert!(row.solved && row.class == Class::Cond3);
        assert!(strictly_decreases(&report.original, &row.lambda_hat, 0.01));
        for r in report.rows.iter().filter(|r| r.class == Class::Cond3) {
            assert!(strictly_decreases(&report.original, &r.lambda_hat, tc.decrease_margin));
        }
        let csv = scan_csv(&report);
        assert!(csv.starts_with("t,eps,m,delta,phi,sigma,volume,class,lambda_hat_1,lambda_hat_2,lambda_hat_3\n"));
        assert_eq!(csv.lines().count(), report.rows.len() + 1);
        // Monotone in t.
        for w in report.rows.windows(2) {
            assert!(w[0].sd.m <= w[1].sd.m && w[0].sd.phi <= w[1].sd.phi + 1e-12);
        }
    }
}
