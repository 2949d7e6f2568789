//! The cell-centred Dirichlet Laplacian on a [`GridDomain`] and its lowest
//! eigenpairs.
//!
//! Vectors over a domain are indexed by the domain's occupied cells in
//! [`GridDomain::cells`] order. Eigenfunctions are normalized so that
//! `Σ u² h^N = 1`.

use crate::eigen::{self, EigenConfig, SymmetricOperator};
use crate::error::{Error, Result};
use crate::grid::{Cell, GridDomain, Side, SliceSelector, column_of};
use rayon::prelude::*;
use std::fmt::Write as _;

const NONE: u32 = u32::MAX;

/// Gram condition numbers above this make a function family rank deficient.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Matrix-free 2N+1 point stencil: `2N/h²` on the diagonal, `-1/h²` to each
/// occupied face neighbour.
#[derive(Debug, Clone)]
pub struct DirichletOperator {
    dim: usize,
    h: f64,
    cells: Vec<Cell>,
    /// `2N` neighbour rows per cell, `NONE` where the neighbour is empty.
    neighbors: Vec<u32>,
}

impl DirichletOperator {
    pub fn assemble(domain: &GridDomain) -> Result<Self> {
        if domain.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let spec = domain.spec();
        let dim = domain.dim();
        let cells = domain.cell_vec();
        let mut rows = vec![NONE; spec.box_len()];
        for (r, c) in cells.iter().enumerate() {
            rows[spec.linear(c).expect("cell in box")] = r as u32;
        }
        let mut neighbors = Vec::with_capacity(2 * dim * cells.len());
        for c in &cells {
            for n in domain.neighbors(c) {
                neighbors.push(spec.linear(&n).map_or(NONE, |i| rows[i]));
            }
        }
        Ok(Self {
            dim,
            h: domain.cell_size(),
            cells,
            neighbors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_size(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Rows of the face neighbours of row `r` (`None` for empty neighbours),
    /// ordered `-x, +x, -y, +y[, -z, +z]`.
    pub fn neighbor_rows(&self, r: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        let k = 2 * self.dim;
        self.neighbors[r * k..(r + 1) * k]
            .iter()
            .map(|&n| (n != NONE).then_some(n as usize))
    }

    /// Discrete energy `∫|Du|²`: squared forward differences over every cell
    /// face, with `u = 0` outside the domain.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let mut au = vec![0.0; u.len()];
        self.apply(u, &mut au);
        dot(u, &au) * self.h.powi(self.dim as i32)
    }
}

impl SymmetricOperator for DirichletOperator {
    fn size(&self) -> usize {
        self.cells.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let k = 2 * self.dim;
        let inv_h2 = 1.0 / (self.h * self.h);
        let diag = k as f64 * inv_h2;
        let row = |((yr, &xr), nb): ((&mut f64, &f64), &[u32])| {
            let mut s = 0.0;
            for &n in nb {
                if n != NONE {
                    s += x[n as usize];
                }
            }
            *yr = diag * xr - inv_h2 * s;
        };
        if x.len() > 50_000 && rayon::current_num_threads() > 1 {
            y.par_iter_mut()
                .zip(x.par_iter())
                .zip(self.neighbors.par_chunks_exact(k))
                .for_each(row);
        } else {
            y.iter_mut().zip(x).zip(self.neighbors.chunks_exact(k)).for_each(row);
        }
    }

    fn spectral_upper_bound(&self) -> f64 {
        4.0 * self.dim as f64 / (self.h * self.h)
    }
}

/// Solver settings for [`lowest_eigenpairs`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Relative residual target `‖Au − λu‖ ≤ tol·λ‖u‖`.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 4000,
            seed: 0x5eed,
        }
    }
}

impl SolverConfig {
    fn eigen(&self) -> EigenConfig {
        EigenConfig {
            tol: self.tol,
            max_iterations: self.max_iterations,
            seed: self.seed,
            ..EigenConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending `λ_1..λ_k`.
    pub eigenvalues: Vec<f64>,
    /// `u_i` over the domain cells, `Σ u_i² h^N = 1`.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Relative residuals `‖Au − λu‖/(λ‖u‖)`.
    pub residuals: Vec<f64>,
    /// `max_{i≠j} |⟨u_i, u_j⟩|` in the discrete L² product.
    pub orthogonality_defect: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Spectrum {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn worst_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// Lowest `k` eigenpairs; non-convergence is an error.
pub fn lowest_eigenpairs(op: &DirichletOperator, k: usize, cfg: &SolverConfig) -> Result<Spectrum> {
    lowest_eigenpairs_warm(op, k, &[], cfg)
}

/// As [`lowest_eigenpairs`], seeding the iteration with `warm` vectors.
pub fn lowest_eigenpairs_warm(
    op: &DirichletOperator,
    k: usize,
    warm: &[Vec<f64>],
    cfg: &SolverConfig,
) -> Result<Spectrum> {
    let s = solve(op, k, warm, cfg)?;
    if !s.converged {
        return Err(Error::NotConverged {
            iterations: s.iterations,
            worst_residual: s.worst_residual(),
        });
    }
    Ok(s)
}

/// Runs the solver and returns whatever it reached, converged or not.
pub fn solve(op: &DirichletOperator, k: usize, warm: &[Vec<f64>], cfg: &SolverConfig) -> Result<Spectrum> {
    let n = op.size();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!("k = {k} must lie in [1, {n}]")));
    }
    let res = eigen::lowest(op, k, warm, &cfg.eigen());
    let scale = op.cell_size().powi(op.dim() as i32).sqrt().recip();
    let eigenfunctions: Vec<Vec<f64>> = res
        .vectors
        .into_iter()
        .map(|v| v.into_iter().map(|x| x * scale).collect())
        .collect();
    let hn = op.cell_size().powi(op.dim() as i32);
    let mut defect: f64 = 0.0;
    for i in 0..k {
        for j in 0..i {
            defect = defect.max((dot(&eigenfunctions[i], &eigenfunctions[j]) * hn).abs());
        }
    }
    Ok(Spectrum {
        eigenvalues: res.values,
        eigenfunctions,
        residuals: res.residuals,
        orthogonality_defect: defect,
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// Assemble and solve in one step.
pub fn spectrum_of(domain: &GridDomain, k: usize, cfg: &SolverConfig) -> Result<Spectrum> {
    let op = DirichletOperator::assemble(domain)?;
    lowest_eigenpairs(&op, k, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighReport {
    pub numerator: f64,
    pub denominator: f64,
    pub quotient: f64,
}

fn in_subregion(c: &Cell, sel: &SliceSelector, h: f64) -> bool {
    let x = c[sel.axis];
    match sel.side {
        Side::Left => x < column_of(sel.level, h),
        Side::Right => x > column_of(sel.level, h),
        Side::Section => x == column_of(sel.level, h),
        Side::InteriorBand => {
            let t0 = sel.center;
            let lo = ((t0 - sel.level) / h - 1e-9).ceil() as i64;
            let hi = ((t0 + sel.level) / h + 1e-9).floor() as i64;
            x >= lo && x < hi
        }
    }
}

/// Rayleigh quotient of `u` (over the domain cells). With a subregion `D`,
/// `u` is restricted to `D` and extended by zero, so the report is `R(u|_D, D)`.
pub fn rayleigh(u: &[f64], domain: &GridDomain, subregion: Option<&SliceSelector>) -> Result<RayleighReport> {
    let op = DirichletOperator::assemble(domain)?;
    if u.len() != op.size() {
        return Err(Error::Precondition(format!(
            "vector has {} entries, domain has {} cells",
            u.len(),
            op.size()
        )));
    }
    let h = domain.cell_size();
    let v: Vec<f64> = match subregion {
        None => u.to_vec(),
        Some(sel) => op
            .cells()
            .iter()
            .zip(u)
            .map(|(c, &x)| if in_subregion(c, sel, h) { x } else { 0.0 })
            .collect(),
    };
    let numerator = op.energy(&v);
    let denominator = dot(&v, &v) * h.powi(domain.dim() as i32);
    if denominator <= 0.0 {
        return Err(Error::Precondition("function vanishes on the subregion".into()));
    }
    Ok(RayleighReport {
        numerator,
        denominator,
        quotient: numerator / denominator,
    })
}

/// `|Ω|^{2/N} λ_i(Ω)`, the eigenvalues of the unit-measure rescaling.
pub fn normalized_eigenvalues(spectrum: &Spectrum, domain: &GridDomain) -> Vec<f64> {
    normalize(&spectrum.eigenvalues, domain.measure(), domain.dim())
}

pub fn normalize(values: &[f64], measure: f64, dim: usize) -> Vec<f64> {
    let f = measure.powf(2.0 / dim as f64);
    values.iter().map(|l| l * f).collect()
}

/// Rayleigh-Ritz values on `span{functions}`: by min-max, `λ_i ≤ ν_i`.
pub fn subspace_upper_bounds(functions: &[Vec<f64>], domain: &GridDomain) -> Result<Vec<f64>> {
    let op = DirichletOperator::assemble(domain)?;
    if functions.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(f) = functions.iter().find(|f| f.len() != op.size()) {
        return Err(Error::Precondition(format!(
            "function has {} entries, domain has {} cells",
            f.len(),
            op.size()
        )));
    }
    eigen::ritz_values(&op, functions, MAX_GRAM_CONDITION).map_err(|condition| Error::RankDeficient { condition })
}

/// CSV `index,lambda,normalized_lambda,residual`, one row per eigenvalue.
pub fn eigen_csv(spectrum: &Spectrum, domain: &GridDomain) -> String {
    let norm = normalized_eigenvalues(spectrum, domain);
    let mut out = String::from("index,lambda,normalized_lambda,residual\n");
    for (i, (l, n)) in spectrum.eigenvalues.iter().zip(&norm).enumerate() {
        let _ = writeln!(out, "{},{:.12e},{:.12e},{:.3e}", i + 1, l, n, spectrum.residuals[i]);
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
