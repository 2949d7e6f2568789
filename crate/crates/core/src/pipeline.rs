//! The boundedness construction: repeated tail and interior surgeries along
//! every axis, with reflections so that both ends of each axis get cut.
//!
//! Every comparison uses normalized eigenvalues. Before each pass the domain
//! is put in canonical form (trimmed, box at the origin, unit measure) and its
//! spectrum is solved from scratch, so a run is a deterministic function of
//! the input occupancy.

use crate::error::{Error, Result};
use crate::grid::{Cell, GridDomain};
use crate::spectral::{self, SolverConfig, Spectrum};
use crate::surgery::{self, Class, Mode, ScanConfig, ScanMode, TheoryConstants};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub k: usize,
    pub constants: TheoryConstants,
    /// Accepted surgeries per pass before giving up (`⌈K/η⌉`, at most 64).
    pub max_steps: usize,
    /// Zero-based axes, processed in this order.
    pub axis_order: Vec<usize>,
    /// Spacing of the interior quantiles `m̄ = 2m̂, 3m̂, …` (defaults to `m̂`).
    pub mbar_step: f64,
    pub scan: ScanConfig,
    /// Full sweeps over all axes; the run stops early at a fixed point.
    pub max_sweeps: usize,
}

impl PipelineConfig {
    pub fn new(dim: usize, k: usize, k_budget: f64) -> Result<Self> {
        Self::from_constants(k, TheoryConstants::new(dim, k_budget)?)
    }

    pub fn from_constants(k: usize, constants: TheoryConstants) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidSpec("k must be at least 1".into()));
        }
        Ok(Self {
            k,
            max_steps: constants.step_cap(),
            axis_order: (0..constants.dim).collect(),
            mbar_step: constants.mhat,
            constants,
            scan: ScanConfig::default(),
            max_sweeps: 4,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.max_sweeps == 0 {
            return Err(Error::InvalidSpec("iteration caps must be positive".into()));
        }
        if !(self.mbar_step > 0.0) {
            return Err(Error::InvalidSpec(format!("quantile step {} must be positive", self.mbar_step)));
        }
        if let Some(&a) = self.axis_order.iter().find(|&&a| a >= self.constants.dim) {
            return Err(Error::InvalidSpec(format!("axis {} out of range", a + 1)));
        }
        Ok(())
    }

    fn tol(&self) -> f64 {
        self.scan.solver.tol
    }
}

/// One candidate surgery offered to the pipeline (or a compaction).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineStep {
    pub axis: usize,
    /// `tail`, `interior`, `compact` or `initial`.
    pub mode: &'static str,
    pub t: f64,
    pub class: Option<Class>,
    pub accepted: bool,
    pub before: Vec<f64>,
    /// Normalized eigenvalues of the candidate.
    pub after: Vec<f64>,
    /// Extents of the bounding box in cells after the step.
    pub bbox: Vec<i64>,
}

/// Measured widths standing in for the radii of the construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisWidths {
    pub axis: usize,
    /// `W(Ω, 0, m̂)` after the first tail pass.
    pub r1: f64,
    /// Largest `W(Ω, m̄ − m̂, m̄ + m̂/2)` after the interior passes.
    pub r2: f64,
    /// Projection diameter once the axis is done.
    pub r3: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub k: usize,
    pub steps: Vec<PipelineStep>,
    pub initial: Vec<f64>,
    pub final_spectrum: Vec<f64>,
    pub initial_bbox: Vec<i64>,
    pub final_bbox: Vec<i64>,
    pub widths: Vec<AxisWidths>,
    /// Final projection diameter over all axes.
    pub r: f64,
    /// Some pass hit `max_steps` while still improving.
    pub cap_hit: bool,
    /// The last sweep still changed the domain.
    pub sweep_cap_hit: bool,
    pub sweeps: usize,
}

impl PipelineReport {
    pub fn accepted(&self) -> impl Iterator<Item = &PipelineStep> {
        self.steps.iter().filter(|s| s.accepted && s.mode != "initial")
    }
}

/// Trimmed, lower box corner at the origin, unit measure.
pub fn canonical(domain: &GridDomain) -> Result<GridDomain> {
    let bb = domain.bounding_box().ok_or(Error::EmptyDomain)?;
    let dim = domain.dim();
    let cells: Vec<Cell> = domain
        .cells()
        .map(|mut c| {
            for a in 0..dim {
                c[a] -= bb.lo[a];
            }
            c
        })
        .collect();
    let h = (cells.len() as f64).powf(-1.0 / dim as f64);
    GridDomain::from_cell_list(dim, h, &cells)
}

fn extents(domain: &GridDomain) -> Vec<i64> {
    let dim = domain.dim();
    domain
        .bounding_box()
        .map_or(vec![0; dim], |bb| (0..dim).map(|a| bb.extent(a)).collect())
}

/// Working state: a canonical domain with its spectrum.
struct State {
    domain: GridDomain,
    spectrum: Spectrum,
    normalized: Vec<f64>,
}

impl State {
    fn new(domain: &GridDomain, k: usize, solver: &SolverConfig) -> Result<Self> {
        let domain = canonical(domain)?;
        let spectrum = spectral::spectrum_of(&domain, k.min(domain.len()), solver)?;
        let normalized = spectral::normalized_eigenvalues(&spectrum, &domain);
        Ok(Self {
            domain,
            spectrum,
            normalized,
        })
    }
}

fn decreases(before: &[f64], after: &[f64], tol: f64) -> bool {
    before.len() <= after.len() && before.iter().zip(after).all(|(b, a)| *a < b - 2.0 * tol * b)
}

/// Repeated scans of one kind until no Cond3 level decreases the spectrum.
fn surgery_pass(
    state: &mut State,
    axis: usize,
    mode: ScanMode,
    cfg: &PipelineConfig,
    steps: &mut Vec<PipelineStep>,
) -> Result<bool> {
    let mut taken = 0;
    loop {
        if taken == cfg.max_steps {
            return Ok(true);
        }
        let report = surgery::scan(&state.domain, &state.spectrum, axis, mode, &cfg.constants, &cfg.scan)?;
        let (Some(best), Some(result)) = (report.best, report.best_result) else {
            return Ok(false);
        };
        let row = &report.rows[best];
        let old_extent = extents(&state.domain)[axis];
        let new_extent = extents(&result.grafted)[axis];
        let mut accepted = decreases(&state.normalized, &row.lambda_hat, cfg.tol()) && new_extent <= old_extent;
        let mut next = None;
        if accepted {
            let s = State::new(&result.grafted, cfg.k, &cfg.scan.solver)?;
            // The canonical re-solve must confirm the decrease.
            accepted = decreases(&state.normalized, &s.normalized, cfg.tol());
            next = Some(s);
        }
        steps.push(PipelineStep {
            axis,
            mode: row.sd.mode.as_str(),
            t: if row.sd.mode == Mode::Tail { row.sd.t } else { row.sd.t0 },
            class: Some(row.class),
            accepted,
            before: state.normalized.clone(),
            after: next.as_ref().map_or_else(|| row.lambda_hat.clone(), |s| s.normalized.clone()),
            bbox: extents(next.as_ref().map_or(&state.domain, |s| &s.domain)),
        });
        match next {
            Some(s) if accepted => {
                *state = s;
                taken += 1;
            }
            _ => return Ok(false),
        }
    }
}

/// Collapses every run of empty columns strictly inside the bounding box to
/// a single empty column. The spectrum is unchanged.
pub fn compact(domain: &GridDomain, axis: usize) -> GridDomain {
    let Some(bb) = domain.bounding_box() else {
        return domain.clone();
    };
    let mut shift = vec![0i64; bb.extent(axis) as usize];
    let mut acc = 0;
    let mut prev_empty = false;
    for (j, col) in (bb.lo[axis]..bb.hi[axis]).enumerate() {
        let empty = domain.column_count(axis, col) == 0;
        if empty && prev_empty {
            acc += 1;
        }
        prev_empty = empty;
        shift[j] = acc;
    }
    if acc == 0 {
        return domain.clone();
    }
    let cells: Vec<Cell> = domain
        .cells()
        .map(|mut c| {
            c[axis] -= shift[(c[axis] - bb.lo[axis]) as usize];
            c
        })
        .collect();
    GridDomain::from_cell_list(domain.dim(), domain.cell_size(), &cells).expect("valid cells")
}

fn tail_pass(state: &mut State, axis: usize, cfg: &PipelineConfig, steps: &mut Vec<PipelineStep>) -> Result<bool> {
    surgery_pass(state, axis, ScanMode::Tail, cfg, steps)
}

fn compact_step(state: &mut State, axis: usize, cfg: &PipelineConfig, steps: &mut Vec<PipelineStep>) -> Result<()> {
    let compacted = compact(&state.domain, axis);
    if compacted.len() == state.domain.len() && extents(&compacted) == extents(&state.domain) {
        return Ok(());
    }
    let s = State::new(&compacted, cfg.k, &cfg.scan.solver)?;
    steps.push(PipelineStep {
        axis,
        mode: "compact",
        t: 0.0,
        class: None,
        accepted: true,
        before: state.normalized.clone(),
        after: s.normalized.clone(),
        bbox: extents(&s.domain),
    });
    *state = s;
    Ok(())
}

fn interior_levels(cfg: &PipelineConfig) -> Vec<f64> {
    let mhat = cfg.constants.mhat;
    let mut out = Vec::new();
    let mut j = 2.0;
    loop {
        let mbar = j * cfg.mbar_step.max(1e-6);
        if mbar > 1.0 - mhat + 1e-12 || j > 1e5 {
            break;
        }
        if mbar > mhat && mbar < 1.0 - 0.5 * mhat {
            out.push(mbar);
        }
        j += 1.0;
    }
    out
}

fn interior_pass(
    state: &mut State,
    axis: usize,
    mbar: f64,
    cfg: &PipelineConfig,
    steps: &mut Vec<PipelineStep>,
) -> Result<bool> {
    compact_step(state, axis, cfg, steps)?;
    surgery_pass(state, axis, ScanMode::Interior { mbar }, cfg, steps)
}

fn reflect_state(state: &mut State, axis: usize, cfg: &PipelineConfig) -> Result<()> {
    *state = State::new(&state.domain.reflect(axis), cfg.k, &cfg.scan.solver)?;
    Ok(())
}

/// Tail surgeries along `axis` (the low end) until none decreases every
/// eigenvalue. The input is canonicalized first.
pub fn bound_tail(domain: &GridDomain, axis: usize, cfg: &PipelineConfig) -> Result<(GridDomain, PipelineReport)> {
    run_single(domain, cfg, |state, steps| tail_pass(state, axis, cfg, steps))
}

/// Empty bands along `axis` are compacted, then interior surgeries centred
/// at the `m̄` quantile are applied until none decreases every eigenvalue.
pub fn bound_interior(
    domain: &GridDomain,
    axis: usize,
    mbar: f64,
    cfg: &PipelineConfig,
) -> Result<(GridDomain, PipelineReport)> {
    let mhat = cfg.constants.mhat;
    if !(mbar > mhat && mbar < 1.0 - 0.5 * mhat) {
        return Err(Error::Precondition(format!(
            "m̄ = {mbar} outside ({mhat}, {})",
            1.0 - 0.5 * mhat
        )));
    }
    run_single(domain, cfg, |state, steps| interior_pass(state, axis, mbar, cfg, steps))
}

fn run_single<F>(domain: &GridDomain, cfg: &PipelineConfig, pass: F) -> Result<(GridDomain, PipelineReport)>
where
    F: FnOnce(&mut State, &mut Vec<PipelineStep>) -> Result<bool>,
{
    cfg.validate()?;
    let mut state = State::new(domain, cfg.k, &cfg.scan.solver)?;
    let initial = state.normalized.clone();
    let initial_bbox = extents(&state.domain);
    let mut steps = vec![initial_step(&state)];
    let cap_hit = pass(&mut state, &mut steps)?;
    let report = PipelineReport {
        k: cfg.k,
        steps,
        initial,
        final_spectrum: state.normalized.clone(),
        initial_bbox,
        final_bbox: extents(&state.domain),
        widths: Vec::new(),
        r: max_diameter(&state.domain)?,
        cap_hit,
        sweep_cap_hit: false,
        sweeps: 1,
    };
    Ok((state.domain, report))
}

fn initial_step(state: &State) -> PipelineStep {
    PipelineStep {
        axis: 0,
        mode: "initial",
        t: 0.0,
        class: None,
        accepted: true,
        before: state.normalized.clone(),
        after: state.normalized.clone(),
        bbox: extents(&state.domain),
    }
}

fn max_diameter(domain: &GridDomain) -> Result<f64> {
    (0..domain.dim())
        .map(|a| domain.projection_diameter(a))
        .try_fold(0.0f64, |m, d| Ok(m.max(d?)))
}

/// The full construction: per axis a tail pass, interior passes at
/// `m̄ = 2m̂, 3m̂, …, 1 − m̂`, and a tail pass on the reflected domain.
/// Sweeps over all axes repeat until nothing changes.
pub fn bound_all(domain: &GridDomain, cfg: &PipelineConfig) -> Result<(GridDomain, PipelineReport)> {
    cfg.validate()?;
    if domain.dim() != cfg.constants.dim {
        return Err(Error::Incompatible(format!(
            "domain dimension {} but constants for N = {}",
            domain.dim(),
            cfg.constants.dim
        )));
    }
    let mut state = State::new(domain, cfg.k, &cfg.scan.solver)?;
    let initial = state.normalized.clone();
    let initial_bbox = extents(&state.domain);
    let mut steps = vec![initial_step(&state)];
    let mut cap_hit = false;
    let mut widths = Vec::new();
    let mhat = cfg.constants.mhat;
    let levels = interior_levels(cfg);
    let mut sweeps = 0;
    let mut changed = true;
    while changed && sweeps < cfg.max_sweeps {
        sweeps += 1;
        let before = steps.len();
        widths.clear();
        for &axis in &cfg.axis_order {
            cap_hit |= tail_pass(&mut state, axis, cfg, &mut steps)?;
            let r1 = state.domain.width(axis, 0.0, mhat * state.domain.measure())?;
            let mut r2 = 0.0f64;
            for &mbar in &levels {
                cap_hit |= interior_pass(&mut state, axis, mbar, cfg, &mut steps)?;
                let m = state.domain.measure();
                r2 = r2.max(state.domain.width(axis, (mbar - mhat) * m, (mbar + 0.5 * mhat) * m)?);
            }
            reflect_state(&mut state, axis, cfg)?;
            cap_hit |= tail_pass(&mut state, axis, cfg, &mut steps)?;
            reflect_state(&mut state, axis, cfg)?;
            widths.push(AxisWidths {
                axis,
                r1,
                r2,
                r3: state.domain.projection_diameter(axis)?,
            });
        }
        changed = steps[before..].iter().any(|s| s.accepted);
    }
    let report = PipelineReport {
        k: cfg.k,
        steps,
        initial,
        final_spectrum: state.normalized.clone(),
        initial_bbox,
        final_bbox: extents(&state.domain),
        widths,
        r: max_diameter(&state.domain)?,
        cap_hit,
        sweep_cap_hit: changed,
        sweeps,
    };
    Ok((state.domain, report))
}

/// `step,axis,mode,t,class,accepted,lambda_1..k,bbox_x,bbox_y[,bbox_z]`.
/// Row 0 is the input; `lambda` columns hold the candidate's values.
pub fn trace_csv(report: &PipelineReport) -> String {
    let dim = report.initial_bbox.len();
    let mut out = String::from("step,axis,mode,t,class,accepted");
    for i in 1..=report.k {
        let _ = write!(out, ",lambda_{i}");
    }
    for name in ["bbox_x", "bbox_y", "bbox_z"].iter().take(dim) {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for (n, s) in report.steps.iter().enumerate() {
        let _ = write!(
            out,
            "{n},{},{},{:.9},{},{}",
            s.axis + 1,
            s.mode,
            s.t,
            s.class.map_or("", Class::as_str),
            u8::from(s.accepted)
        );
        for i in 0..report.k {
            match s.after.get(i) {
                Some(v) if v.is_finite() => {
                    let _ = write!(out, ",{v:.9e}");
                }
                _ => out.push(','),
            }
        }
        for e in &s.bbox {
            let _ = write!(out, ",{e}");
        }
        out.push('\n');
    }
    out
}
