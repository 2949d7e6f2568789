//! Quartile splitting and certified bounds for `λ_k/λ_1`.
//!
//! Lengths and eigenvalues are reported on the unit-measure scale of the
//! input domain: a subdomain of `Ω` keeps the scale factor of `Ω`, so its
//! eigenvalues are `|Ω|^{2/N} λ(Ω_i)`, directly comparable with the budget.

use crate::bessel;
use crate::error::{Error, Result};
use crate::grid::GridDomain;
use crate::spectral::{self, SolverConfig, Spectrum};
use rayon::prelude::*;
use std::fmt::Write as _;

/// Face levels where the squared mass of `u_1` first reaches `1/(4N)` from
/// each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub axis: usize,
    pub lo_face: i64,
    pub hi_face: i64,
    /// `t⁻`, `t⁺` on the unit-measure scale.
    pub t_minus: f64,
    pub t_plus: f64,
}

impl Quartiles {
    /// `(t⁺ − t⁻)/2`.
    pub fn rho(&self) -> f64 {
        0.5 * (self.t_plus - self.t_minus)
    }
}

fn unit_scale(domain: &GridDomain) -> f64 {
    domain.measure().powf(1.0 / domain.dim() as f64)
}

/// `∫_{Ω^l_{t⁻}} u² = ∫_{Ω^r_{t⁺}} u² = 1/(4N)`, at cell faces.
pub fn quartile_levels(domain: &GridDomain, spectrum: &Spectrum, axis: usize) -> Result<Quartiles> {
    quartiles_scaled(domain, &spectrum.eigenfunctions[0], axis, unit_scale(domain))
}

fn quartiles_scaled(domain: &GridDomain, u: &[f64], axis: usize, scale: f64) -> Result<Quartiles> {
    let bb = domain.bounding_box().ok_or(Error::EmptyDomain)?;
    if axis >= domain.dim() {
        return Err(Error::InvalidSpec(format!("axis {} out of range", axis + 1)));
    }
    let h = domain.cell_size();
    let hn = h.powi(domain.dim() as i32);
    let lo = bb.lo[axis];
    let mut mass = vec![0.0; bb.extent(axis) as usize];
    for (c, x) in domain.cells().zip(u) {
        mass[(c[axis] - lo) as usize] += x * x * hn;
    }
    let total: f64 = mass.iter().sum();
    let target = total / (4.0 * domain.dim() as f64);
    let mut acc = 0.0;
    let mut lo_face = bb.hi[axis];
    for (j, m) in mass.iter().enumerate() {
        acc += m;
        if acc >= target {
            lo_face = lo + j as i64 + 1;
            break;
        }
    }
    acc = 0.0;
    let mut hi_face = lo;
    for (j, m) in mass.iter().enumerate().rev() {
        acc += m;
        if acc >= target {
            hi_face = lo + j as i64;
            break;
        }
    }
    Ok(Quartiles {
        axis,
        lo_face,
        hi_face,
        t_minus: lo_face as f64 * h / scale,
        t_plus: hi_face as f64 * h / scale,
    })
}

/// `8N(K + 1/ρ²)`.
pub fn certified_bound(dim: usize, k_budget: f64, rho: f64) -> f64 {
    8.0 * dim as f64 * (k_budget + 1.0 / (rho * rho))
}

#[derive(Debug, Clone)]
pub struct SplitCertificate {
    pub axis: usize,
    pub t_minus: f64,
    pub t_plus: f64,
    pub rho_eff: f64,
    /// Centre of the removed column.
    pub t: f64,
    pub cut_column: i64,
    pub k_budget: f64,
    pub k_prime: f64,
    /// `Ω^l_t` and `Ω^r_t` with the cut column removed.
    pub parts: [GridDomain; 2],
    /// `λ_1` of each part (unit-measure scale of the parent).
    pub lambda1: [f64; 2],
    /// Rayleigh quotients of the truncated eigenfunctions.
    pub rayleigh: [f64; 2],
}

impl SplitCertificate {
    pub fn holds(&self, tol: f64) -> bool {
        let bound = self.k_prime * (1.0 + tol);
        self.lambda1.iter().chain(&self.rayleigh).all(|&l| l <= bound)
            && self.parts[0].is_disjoint_from(&self.parts[1])
    }
}

/// Splits at the axis with the largest quartile gap. `k_budget` bounds the
/// normalized `λ_1(Ω)`.
///
/// When `λ_1 = λ_2` (disconnected domains) the spectrum should carry both
/// modes: the first eigenfunction is then taken in their span, choosing the
/// one with the widest quartile gap.
pub fn split(domain: &GridDomain, spectrum: &Spectrum, k_budget: f64, cfg: &SolverConfig) -> Result<SplitCertificate> {
    let u = first_mode(domain, spectrum, unit_scale(domain), cfg.tol)?;
    split_scaled(domain, &u, k_budget, unit_scale(domain), cfg)
}

const EIGENSPACE_SAMPLES: usize = 64;

fn widest(domain: &GridDomain, u: &[f64], scale: f64) -> Result<Quartiles> {
    let mut best: Option<Quartiles> = None;
    for axis in 0..domain.dim() {
        let q = quartiles_scaled(domain, u, axis, scale)?;
        if best.is_none_or(|b| q.rho() > b.rho()) {
            best = Some(q);
        }
    }
    Ok(best.expect("dim >= 1"))
}

fn first_mode(domain: &GridDomain, spectrum: &Spectrum, scale: f64, tol: f64) -> Result<Vec<f64>> {
    let u1 = &spectrum.eigenfunctions[0];
    let double = spectrum.k() >= 2 && spectrum.eigenvalues[1] <= spectrum.eigenvalues[0] * (1.0 + 100.0 * tol);
    if !double {
        return Ok(u1.clone());
    }
    let u2 = &spectrum.eigenfunctions[1];
    let mut best = (f64::NEG_INFINITY, u1.clone());
    for j in 0..EIGENSPACE_SAMPLES {
        let a = std::f64::consts::PI * j as f64 / EIGENSPACE_SAMPLES as f64;
        let (c, s) = (a.cos(), a.sin());
        let u: Vec<f64> = u1.iter().zip(u2).map(|(x, y)| c * x + s * y).collect();
        let rho = widest(domain, &u, scale)?.rho();
        if rho > best.0 {
            best = (rho, u);
        }
    }
    Ok(best.1)
}

fn split_scaled(domain: &GridDomain, u: &[f64], k_budget: f64, scale: f64, cfg: &SolverConfig) -> Result<SplitCertificate> {
    let dim = domain.dim();
    let q = widest(domain, u, scale)?;
    if q.hi_face <= q.lo_face {
        return Err(Error::DegenerateSplit(format!(
            "no quartile gap along any axis (best t⁺ − t⁻ = {:.3e})",
            q.t_plus - q.t_minus
        )));
    }
    let axis = q.axis;
    let cut = (q.lo_face + q.hi_face - 1).div_euclid(2);
    let h = domain.cell_size();
    let rho = q.rho();
    let t = (cut as f64 + 0.5) * h / scale;
    let parts = [domain.left_of(axis, cut), domain.right_of(axis, cut + 1)];
    let s2 = scale * scale;
    let mut lambda1 = [0.0; 2];
    let mut rayleigh = [0.0; 2];
    for side in 0..2 {
        let spec = spectral::spectrum_of(&parts[side], 1, cfg)?;
        lambda1[side] = spec.eigenvalues[0] * s2;
        let ramp: Vec<f64> = domain
            .cells()
            .zip(u)
            .map(|(c, &x)| {
                let centre = (c[axis] as f64 + 0.5) * h / scale;
                let d = if side == 0 { t - centre } else { centre - t };
                x * (d / rho).clamp(0.0, 1.0)
            })
            .collect();
        rayleigh[side] = spectral::rayleigh(&ramp, domain, None)?.quotient * s2;
    }
    Ok(SplitCertificate {
        axis,
        t_minus: q.t_minus,
        t_plus: q.t_plus,
        rho_eff: rho,
        t,
        cut_column: cut,
        k_budget,
        k_prime: certified_bound(dim, k_budget, rho),
        parts,
        lambda1,
        rayleigh,
    })
}

#[derive(Debug, Clone)]
pub struct RatioCertificate {
    pub k: usize,
    pub depth: usize,
    /// `K_1..K_{j+1}`.
    pub k_chain: Vec<f64>,
    /// Smallest `ρ_eff` at each level.
    pub rho: Vec<f64>,
    pub leaves: Vec<GridDomain>,
    pub leaf_lambda1: Vec<f64>,
    /// `M' = K_{j+1}`.
    pub m_prime: f64,
    /// Normalized `λ_k(Ω)`.
    pub lambda_k: f64,
    pub lambda_1: f64,
}

impl RatioCertificate {
    pub fn max_leaf_lambda1(&self) -> f64 {
        self.leaf_lambda1.iter().cloned().fold(0.0, f64::max)
    }

    /// `λ_k(Ω) ≤ max_i λ_1(Ω^i) ≤ M'`, with pairwise disjoint leaves.
    pub fn holds(&self, tol: f64) -> bool {
        let max = self.max_leaf_lambda1();
        let disjoint = self
            .leaves
            .iter()
            .enumerate()
            .all(|(i, a)| self.leaves[i + 1..].iter().all(|b| a.is_disjoint_from(b)));
        disjoint && self.lambda_k <= max * (1.0 + tol) && max <= self.m_prime * (1.0 + tol)
    }
}

/// Smallest `j` with `2^j ≥ k`.
pub fn depth_for(k: usize) -> usize {
    let mut j = 0;
    while (1usize << j) < k {
        j += 1;
    }
    j
}

/// Splits recursively to depth `j` (`2^j ≥ k`) with `K_{l+1} = 8N(K_l + 1/ρ_l²)`
/// from `K_1 = λ_1(Ω)`.
pub fn recursive_split(domain: &GridDomain, spectrum: &Spectrum, k: usize, cfg: &SolverConfig) -> Result<RatioCertificate> {
    if k == 0 {
        return Err(Error::InvalidSpec("k must be at least 1".into()));
    }
    let scale = unit_scale(domain);
    let s2 = scale * scale;
    let owned;
    let spectrum = if spectrum.k() >= k {
        spectrum
    } else {
        owned = spectral::spectrum_of(domain, k, cfg)?;
        &owned
    };
    let lambda_1 = spectrum.eigenvalues[0] * s2;
    let lambda_k = spectrum.eigenvalues[k - 1] * s2;
    let depth = depth_for(k);
    let mut k_chain = vec![lambda_1];
    let mut rho = Vec::new();
    let mut nodes: Vec<(GridDomain, Vec<f64>, f64)> =
        vec![(domain.clone(), first_mode(domain, spectrum, scale, cfg.tol)?, lambda_1)];
    for _ in 0..depth {
        let kl = *k_chain.last().unwrap();
        let certs: Vec<SplitCertificate> = nodes
            .iter()
            .map(|(d, u, _)| split_scaled(d, u, kl, scale, cfg))
            .collect::<Result<_>>()?;
        let rho_l = certs.iter().map(|c| c.rho_eff).fold(f64::INFINITY, f64::min);
        rho.push(rho_l);
        k_chain.push(certified_bound(domain.dim(), kl, rho_l));
        let mut next = Vec::with_capacity(2 * nodes.len());
        for c in certs {
            for (part, l1) in c.parts.into_iter().zip(c.lambda1) {
                let s = spectral::spectrum_of(&part, 2.min(part.len()), cfg)?;
                let u = first_mode(&part, &s, scale, cfg.tol)?;
                next.push((part, u, l1));
            }
        }
        nodes = next;
    }
    let m_prime = *k_chain.last().unwrap();
    let (leaves, leaf_lambda1) = nodes.into_iter().map(|(d, _, l)| (d, l)).unzip();
    Ok(RatioCertificate {
        k,
        depth,
        k_chain,
        rho,
        leaves,
        leaf_lambda1,
        m_prime,
        lambda_k,
        lambda_1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyReport {
    pub k: usize,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub argmax: usize,
    /// `(j_{1,1}/j_{0,1})²` for `k = 2`.
    pub disk_ratio: Option<f64>,
}

/// `λ_k/λ_1` for every domain, in input order.
pub fn ratio_survey(corpus: &[GridDomain], k: usize, cfg: &SolverConfig) -> Result<SurveyReport> {
    if corpus.is_empty() {
        return Err(Error::Precondition("empty corpus".into()));
    }
    if k == 0 {
        return Err(Error::InvalidSpec("k must be at least 1".into()));
    }
    let ratios: Vec<f64> = corpus
        .par_iter()
        .map(|d| {
            let s = spectral::spectrum_of(d, k, cfg)?;
            Ok(s.eigenvalues[k - 1] / s.eigenvalues[0])
        })
        .collect::<Result<_>>()?;
    let (argmax, max_ratio) = ratios
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, r)| if r > b.1 { (i, r) } else { b });
    Ok(SurveyReport {
        k,
        ratios,
        max_ratio,
        argmax,
        disk_ratio: (k == 2).then(bessel::disk_ratio),
    })
}

fn kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key}={value}");
}

pub fn split_report(c: &SplitCertificate, tol: f64) -> String {
    let mut out = String::new();
    kv(&mut out, "axis", c.axis + 1);
    kv(&mut out, "t_minus", format!("{:.9}", c.t_minus));
    kv(&mut out, "t_plus", format!("{:.9}", c.t_plus));
    kv(&mut out, "rho_eff", format!("{:.9}", c.rho_eff));
    kv(&mut out, "t", format!("{:.9}", c.t));
    kv(&mut out, "cut_column", c.cut_column);
    kv(&mut out, "k_budget", format!("{:.9e}", c.k_budget));
    kv(&mut out, "k_prime", format!("{:.9e}", c.k_prime));
    for i in 0..2 {
        kv(&mut out, &format!("cells_{}", i + 1), c.parts[i].len());
        kv(&mut out, &format!("lambda1_{}", i + 1), format!("{:.9e}", c.lambda1[i]));
        kv(&mut out, &format!("rayleigh_{}", i + 1), format!("{:.9e}", c.rayleigh[i]));
    }
    kv(&mut out, "certified", c.holds(tol));
    out
}

pub fn ratio_report(c: &RatioCertificate, tol: f64) -> String {
    let mut out = String::new();
    kv(&mut out, "k", c.k);
    kv(&mut out, "depth", c.depth);
    let chain: Vec<String> = c.k_chain.iter().map(|v| format!("{v:.9e}")).collect();
    kv(&mut out, "k_chain", chain.join(";"));
    let rho: Vec<String> = c.rho.iter().map(|v| format!("{v:.9}")).collect();
    kv(&mut out, "rho", rho.join(";"));
    kv(&mut out, "m_prime", format!("{:.9e}", c.m_prime));
    kv(&mut out, "lambda_1", format!("{:.9e}", c.lambda_1));
    kv(&mut out, "lambda_k", format!("{:.9e}", c.lambda_k));
    kv(&mut out, "max_leaf_lambda1", format!("{:.9e}", c.max_leaf_lambda1()));
    kv(&mut out, "certified", c.holds(tol));
    out
}

/// `leaf,cells,lambda_1`.
pub fn leaf_csv(c: &RatioCertificate) -> String {
    let mut out = String::from("leaf,cells,lambda_1\n");
    for (i, (d, l)) in c.leaves.iter().zip(&c.leaf_lambda1).enumerate() {
        let _ = writeln!(out, "{},{},{l:.9e}", i + 1, d.len());
    }
    out
}

pub fn survey_report(s: &SurveyReport, names: &[String]) -> String {
    let mut out = String::new();
    kv(&mut out, "k", s.k);
    kv(&mut out, "domains", s.ratios.len());
    kv(&mut out, "max_ratio", format!("{:.9}", s.max_ratio));
    let arg = names.get(s.argmax).cloned().unwrap_or_else(|| s.argmax.to_string());
    kv(&mut out, "argmax", arg);
    if let Some(d) = s.disk_ratio {
        kv(&mut out, "disk_ratio", format!("{d:.9}"));
    }
    out
}

/// `domain,ratio`.
pub fn survey_csv(s: &SurveyReport, names: &[String]) -> String {
    let mut out = String::from("domain,ratio\n");
    for (i, r) in s.ratios.iter().enumerate() {
        let name = names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let _ = writeln!(out, "{name},{r:.9}");
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

    #[test]
    fn bound_arithmetic() {
        assert_eq!(certified_bound(2, 20.0, 0.25), 576.0);
        assert_eq!(depth_for(1), 0);
        assert_eq!(depth_for(2), 1);
        assert_eq!(depth_for(3), 2);
        assert_eq!(depth_for(4), 2);
        assert_eq!(depth_for(5), 3);
    }

    #[test]
    fn unit_square_quartiles() {
        // Marginal of 2 sin²(πx) sin²(πy): F(t) = t − sin(2πt)/(2π).
        let f = |t: f64| t - (2.0 * std::f64::consts::PI * t).sin() / (2.0 * std::f64::consts::PI) - 0.125;
        let (mut a, mut b) = (0.0, 0.5);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 { b = m } else { a = m }
        }
        let root = 0.5 * (a + b);
        assert!((root - 0.2811).abs() < 1e-3);
        let d = shapes::unit_square(63);
        let s = spectral::spectrum_of(&d, 1, &cfg()).unwrap();
        let h = d.cell_size();
        for axis in 0..2 {
            let q = quartile_levels(&d, &s, axis).unwrap();
            // Face L sits at physical coordinate (L + 1/2) h.
            let lo = (q.lo_face as f64 + 0.5) * h;
            let hi = (q.hi_face as f64 + 0.5) * h;
            assert!((lo - root).abs() <= h, "{lo} vs {root}");
            assert!((hi - (1.0 - root)).abs() <= h);
            assert_eq!(q.lo_face + q.hi_face, 63);
        }
    }

    #[test]
    fn disjoint_squares_split_into_components() {
        let d = shapes::separated_squares(2, 16, 6);
        let s = spectral::spectrum_of(&d, 2, &cfg()).unwrap();
        let c = split(&d, &s, 200.0, &cfg()).unwrap();
        assert_eq!(c.axis, 0);
        assert!(c.parts[0].len() == 256 && c.parts[1].len() == 256, "{} {} {:?}", c.parts[0].len(), c.parts[1].len(), (c.t_minus, c.t_plus));
        let one = spectral::spectrum_of(&shapes::rectangle(&[16, 16]).scaled(d.cell_size() / shapes::rectangle(&[16, 16]).cell_size()).unwrap(), 1, &cfg()).unwrap();
        let s2 = d.measure();
        assert!((c.lambda1[0] - one.eigenvalues[0] * s2).abs() < 1e-7 * c.lambda1[0]);
        assert!(c.holds(1e-8));
    }

    #[test]
    fn unit_square_split_is_certified() {
        let d = shapes::unit_square(47);
        let s = spectral::spectrum_of(&d, 1, &cfg()).unwrap();
        let k = spectral::normalized_eigenvalues(&s, &d)[0];
        let c = split(&d, &s, k, &cfg()).unwrap();
        assert!(c.holds(1e-8));
        // Each half is about a 1 x 1/2 rectangle: λ_1 ≈ π²(1 + 4).
        let half = 5.0 * std::f64::consts::PI.powi(2);
        for l in c.lambda1 {
            assert!((l - half).abs() < 0.1 * half, "{l}");
        }
        for r in c.rayleigh {
            assert!(r <= c.k_prime);
        }
    }

    #[test]
    fn single_column_is_degenerate() {
        let d = GridDomain::from_fn(2, 0.1, &[1, 1], |_| true).unwrap();
        let s = spectral::spectrum_of(&d, 1, &cfg()).unwrap();
        assert!(matches!(split(&d, &s, 100.0, &cfg()), Err(Error::DegenerateSplit(_))));
    }

    #[test]
    fn recursive_certificates() {
        let four = shapes::separated_squares(4, 12, 3);
        let s = spectral::spectrum_of(&four, 4, &cfg()).unwrap();
        let c = recursive_split(&four, &s, 4, &cfg()).unwrap();
        assert_eq!(c.leaves.len(), 4);
        assert!(c.leaves.iter().all(|l| l.len() == 144));
        assert!(c.holds(1e-8));
        assert!((c.lambda_k - c.max_leaf_lambda1()).abs() < 1e-6 * c.lambda_k);
        assert_eq!(leaf_csv(&c).lines().count(), 5);

        let disk = shapes::disk(20.0);
        let s = spectral::spectrum_of(&disk, 3, &cfg()).unwrap();
        let c = recursive_split(&disk, &s, 3, &cfg()).unwrap();
        assert_eq!(c.depth, 2);
        assert!(c.holds(1e-8));
        assert!(ratio_report(&c, 1e-8).contains("certified=true"));
    }

    #[test]
    fn survey_of_disk_and_twins() {
        let corpus = vec![shapes::unit_area_disk(40.0), shapes::two_disks(15.0, 4.0)];
        let r = ratio_survey(&corpus, 2, &cfg()).unwrap();
        let dr = bessel::disk_ratio();
        assert!((r.ratios[0] - dr).abs() < 0.02 * dr);
        assert!((r.ratios[1] - 1.0).abs() < 1e-6);
        assert_eq!(r.argmax, 0);
    }
}
