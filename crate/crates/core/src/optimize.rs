//! Simulated annealing over rasterized domains of fixed cell count,
//! minimizing an increasing function of the normalized eigenvalues.

use crate::error::{Error, Result};
use crate::grid::{Cell, GridDomain};
use crate::spectral::{self, DirichletOperator, SolverConfig, Spectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::fmt::Write as _;

/// Increasing functionals of `(λ_1, …, λ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalSpec {
    /// `λ_j`.
    Single(usize),
    /// `Σ w_i λ_i` with `w_i ≥ 0`.
    WeightedSum(Vec<f64>),
    /// `Π_{i ≤ k} λ_i`.
    Product(usize),
    /// `max_{i ≤ k} λ_i`.
    Max(usize),
}

impl FunctionalSpec {
    pub fn weighted_sum(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSpec("weighted sum needs at least one weight".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidSpec(format!("weight {w} must be finite and non-negative")));
        }
        Ok(Self::WeightedSum(weights))
    }

    /// Number of eigenvalues the functional reads.
    pub fn k(&self) -> usize {
        match self {
            Self::Single(k) | Self::Product(k) | Self::Max(k) => *k,
            Self::WeightedSum(w) => w.len(),
        }
    }

    /// `F` on normalized eigenvalues (at least `k` of them).
    pub fn apply(&self, lambda: &[f64]) -> f64 {
        let k = self.k();
        let l = &lambda[..k];
        match self {
            Self::Single(j) => lambda[j - 1],
            Self::WeightedSum(w) => w.iter().zip(l).map(|(w, x)| w * x).sum(),
            Self::Product(_) => l.iter().product(),
            Self::Max(_) => l.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `∂F/∂λ_i` at `lambda` (one-sided for `Max`); all entries are `≥ 0`.
    pub fn sensitivity(&self, lambda: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut g = vec![0.0; k];
        match self {
            Self::Single(j) => g[j - 1] = 1.0,
            Self::WeightedSum(w) => g.copy_from_slice(w),
            Self::Product(_) => {
                let p: f64 = lambda[..k].iter().product();
                for i in 0..k {
                    g[i] = p / lambda[i];
                }
            }
            Self::Max(_) => {
                let m = self.apply(lambda);
                for i in 0..k {
                    if lambda[i] >= m * (1.0 - 1e-9) {
                        g[i] = 1.0;
                    }
                }
            }
        }
        g
    }
}

impl std::str::FromStr for FunctionalSpec {
    type Err = Error;

    /// `single:J`, `sum:W1,W2,…`, `product:K` or `max:K`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("bad functional `{s}` (single:J | sum:W1,.. | product:K | max:K)"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let count = || -> Result<usize> {
            match arg.trim().parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k),
                _ => Err(bad()),
            }
        };
        match kind.trim() {
            "single" => Ok(Self::Single(count()?)),
            "product" => Ok(Self::Product(count()?)),
            "max" => Ok(Self::Max(count()?)),
            "sum" => {
                let w = arg
                    .split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                Self::weighted_sum(w)
            }
            _ => Err(bad()),
        }
    }
}

/// `F` of the normalized spectrum of `domain`.
pub fn evaluate(f: &FunctionalSpec, domain: &GridDomain, cfg: &SolverConfig) -> Result<f64> {
    let k = f.k();
    if domain.len() < k {
        return Err(Error::Precondition(format!("{} cells cannot carry {k} eigenvalues", domain.len())));
    }
    let s = spectral::spectrum_of(domain, k, cfg)?;
    Ok(f.apply(&spectral::normalized_eigenvalues(&s, domain)))
}

/// One boundary cell out, one exterior cell in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub removed: Cell,
    pub added: Cell,
}

impl Move {
    pub fn reversed(self) -> Move {
        Move {
            removed: self.added,
            added: self.removed,
        }
    }
}

fn offsets(dim: usize) -> impl Iterator<Item = Cell> {
    (0..dim).flat_map(|a| {
        [-1i64, 1].into_iter().map(move |s| {
            let mut o = [0i64; 3];
            o[a] = s;
            o
        })
    })
}

fn shift(c: Cell, o: Cell) -> Cell {
    [c[0] + o[0], c[1] + o[1], c[2] + o[2]]
}

/// Removes a random boundary cell and adds a random cell outside the
/// remaining domain that touches it (other than the removed one).
/// Disconnection is allowed.
pub fn propose_move<R: Rng>(domain: &GridDomain, rng: &mut R) -> Result<Move> {
    let dim = domain.dim();
    let boundary: Vec<Cell> = domain
        .cells()
        .filter(|c| offsets(dim).any(|o| !domain.contains(&shift(*c, o))))
        .collect();
    if domain.len() < 2 || boundary.is_empty() {
        return Err(Error::NoLegalMove(format!("domain has {} cells", domain.len())));
    }
    // Retry a few removals before falling back to enumeration.
    for _ in 0..8 {
        let removed = boundary[rng.gen_range(0..boundary.len())];
        let exterior = exterior_after(domain, removed);
        if !exterior.is_empty() {
            let added = exterior[rng.gen_range(0..exterior.len())];
            return Ok(Move { removed, added });
        }
    }
    for &removed in &boundary {
        let exterior = exterior_after(domain, removed);
        if !exterior.is_empty() {
            let added = exterior[rng.gen_range(0..exterior.len())];
            return Ok(Move { removed, added });
        }
    }
    Err(Error::NoLegalMove("no exterior cell touches the domain".into()))
}

fn exterior_after(domain: &GridDomain, removed: Cell) -> Vec<Cell> {
    let dim = domain.dim();
    let inside = |c: &Cell| *c != removed && domain.contains(c);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for c in domain.cells().filter(|c| *c != removed) {
        for o in offsets(dim) {
            let n = shift(c, o);
            if n != removed && !inside(&n) && seen.insert(n) {
                out.push(n);
            }
        }
    }
    // Ordering must not depend on hashing.
    out.sort_unstable();
    out
}

/// Like [`propose_move`], but each end of the move is the winner of a
/// tournament of `size` uniform draws: the boundary cell with the lowest
/// `score` leaves and the exterior cell whose best inside neighbour has the
/// highest `score` enters. `score` is indexed like `domain.cells()`.
pub fn propose_guided<R: Rng>(domain: &GridDomain, score: &[f64], size: usize, rng: &mut R) -> Result<Move> {
    let dim = domain.dim();
    let spec = domain.spec();
    let mut lookup = vec![f64::NAN; spec.box_len()];
    for (c, s) in domain.cells().zip(score) {
        lookup[spec.linear(&c).expect("in box")] = *s;
    }
    let at = |c: &Cell| spec.linear(c).map_or(f64::NAN, |i| lookup[i]);
    let boundary: Vec<Cell> = domain
        .cells()
        .filter(|c| offsets(dim).any(|o| !domain.contains(&shift(*c, o))))
        .collect();
    if domain.len() < 2 || boundary.is_empty() {
        return Err(Error::NoLegalMove(format!("domain has {} cells", domain.len())));
    }
    let size = size.max(1);
    let mut removed = boundary[rng.gen_range(0..boundary.len())];
    for _ in 1..size {
        let c = boundary[rng.gen_range(0..boundary.len())];
        if at(&c) < at(&removed) {
            removed = c;
        }
    }
    let exterior = exterior_after(domain, removed);
    if exterior.is_empty() {
        return propose_move(domain, rng);
    }
    let pull = |c: &Cell| {
        offsets(dim)
            .map(|o| shift(*c, o))
            .filter(|n| *n != removed)
            .map(|n| at(&n))
            .filter(|v| !v.is_nan())
            .fold(0.0, f64::max)
    };
    let mut added = exterior[rng.gen_range(0..exterior.len())];
    let mut best = pull(&added);
    for _ in 1..size {
        let c = exterior[rng.gen_range(0..exterior.len())];
        let v = pull(&c);
        if v > best {
            added = c;
            best = v;
        }
    }
    Ok(Move { removed, added })
}

pub fn apply_move(domain: &GridDomain, mv: Move) -> Result<GridDomain> {
    if !domain.contains(&mv.removed) || domain.contains(&mv.added) {
        return Err(Error::Precondition(format!("move {mv:?} does not fit the domain")));
    }
    let mut cells: Vec<Cell> = domain.cells().filter(|c| *c != mv.removed).collect();
    cells.push(mv.added);
    GridDomain::from_cell_list(domain.dim(), domain.cell_size(), &cells)
}

/// Geometric cooling `T_i = T_0 (T_end/T_0)^{i/iterations}`, with
/// temperatures relative to the initial value of `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub iterations: usize,
    pub t0: f64,
    pub t_end: f64,
    /// Probability of a guided proposal (otherwise uniform).
    pub guided: f64,
    /// Tournament size of guided proposals.
    pub tournament: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            t0: 2e-4,
            t_end: 1e-6,
            guided: 0.75,
            tournament: 4,
        }
    }
}

impl Schedule {
    fn temperature(&self, iter: usize, f0: f64) -> f64 {
        let frac = if self.iterations <= 1 {
            0.0
        } else {
            iter as f64 / (self.iterations - 1) as f64
        };
        f0.abs().max(1e-300) * self.t0 * (self.t_end / self.t0).powf(frac)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub value: f64,
    pub lambda: Vec<f64>,
    pub accepted: bool,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub best: GridDomain,
    pub best_value: f64,
    pub best_lambda: Vec<f64>,
    pub current: GridDomain,
    /// One row per iteration, the candidate's values.
    pub history: Vec<HistoryRow>,
}

/// Previous eigenvectors carried over to the moved domain.
fn warm_vectors(old: &GridDomain, s: &Spectrum, new: &GridDomain) -> Vec<Vec<f64>> {
    let spec = old.spec();
    let mut rows = vec![u32::MAX; spec.box_len()];
    for (r, c) in old.cells().enumerate() {
        rows[spec.linear(&c).expect("in box")] = r as u32;
    }
    let map: Vec<Option<usize>> = new
        .cells()
        .map(|c| spec.linear(&c).and_then(|i| (rows[i] != u32::MAX).then_some(rows[i] as usize)))
        .collect();
    s.eigenfunctions
        .iter()
        .map(|u| map.iter().map(|r| r.map_or(0.0, |r| u[r])).collect())
        .collect()
}

fn solve_warm(domain: &GridDomain, k: usize, warm: &[Vec<f64>], cfg: &SolverConfig) -> Result<Spectrum> {
    let op = DirichletOperator::assemble(domain)?;
    spectral::solve(&op, k, warm, cfg)
}

/// Metropolis acceptance on `F` with geometric cooling. Deterministic for
/// fixed inputs and seed.
pub fn run(
    f: &FunctionalSpec,
    initial: &GridDomain,
    schedule: &Schedule,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<OptimizeResult> {
    let k = f.k();
    if initial.len() <= k {
        return Err(Error::Precondition(format!(
            "{} cells cannot carry {k} eigenvalues",
            initial.len()
        )));
    }
    let cells = initial.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = initial.clone();
    let mut spec = spectral::spectrum_of(&current, k, cfg)?;
    let mut lambda = spectral::normalized_eigenvalues(&spec, &current);
    let mut value = f.apply(&lambda);
    let f0 = value;
    let mut best = (current.clone(), value, lambda.clone());
    let mut history = Vec::with_capacity(schedule.iterations);
    for iter in 0..schedule.iterations {
        let temperature = schedule.temperature(iter, f0);
        let mv = if rng.gen_bool(schedule.guided.clamp(0.0, 1.0)) {
            let g = f.sensitivity(&lambda);
            let score: Vec<f64> = (0..current.len())
                .map(|r| (0..k).map(|i| g[i] * spec.eigenfunctions[i][r].powi(2)).sum())
                .collect();
            propose_guided(&current, &score, schedule.tournament, &mut rng)?
        } else {
            propose_move(&current, &mut rng)?
        };
        let candidate = apply_move(&current, mv)?;
        assert_eq!(candidate.len(), cells, "moves preserve the cell count");
        let warm = warm_vectors(&current, &spec, &candidate);
        let cs = solve_warm(&candidate, k, &warm, cfg)?;
        let cl = spectral::normalized_eigenvalues(&cs, &candidate);
        let cv = f.apply(&cl);
        let u: f64 = rng.r#gen();
        let accepted = cs.converged && (cv <= value || u < (-(cv - value) / temperature).exp());
        history.push(HistoryRow {
            iter,
            value: cv,
            lambda: cl.clone(),
            accepted,
            temperature,
        });
        if accepted {
            current = candidate;
            spec = cs;
            lambda = cl;
            value = cv;
            if value < best.1 {
                best = (current.clone(), value, lambda.clone());
            }
        }
    }
    Ok(OptimizeResult {
        best: best.0,
        best_value: best.1,
        best_lambda: best.2,
        current,
        history,
    })
}

/// `iter,F,lambda_1..k,accepted,temperature`.
pub fn history_csv(result: &OptimizeResult, k: usize) -> String {
    let mut out = String::from("iter,F");
    for i in 1..=k {
        let _ = write!(out, ",lambda_{i}");
    }
    out.push_str(",accepted,temperature\n");
    for row in &result.history {
        let _ = write!(out, "{},{:.9e}", row.iter, row.value);
        for l in &row.lambda {
            let _ = write!(out, ",{l:.9e}");
        }
        let _ = writeln!(out, ",{},{:.6e}", u8::from(row.accepted), row.temperature);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use proptest::prelude::*;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn functional_values() {
        let d = shapes::unit_square(63);
        let v = evaluate(&FunctionalSpec::Single(1), &d, &cfg()).unwrap();
        // The occupied measure is (63/64)² of the unit square.
        let exact = 2.0 * std::f64::consts::PI.powi(2) * (63.0f64 / 64.0).powi(2);
        assert!((v - exact).abs() < 2e-3 * exact);
        let zero = FunctionalSpec::weighted_sum(vec![0.0, 0.0]).unwrap();
        assert_eq!(evaluate(&zero, &d, &cfg()).unwrap(), 0.0);
        let twins = shapes::separated_squares(2, 20, 2);
        let m2 = evaluate(&FunctionalSpec::Max(2), &twins, &cfg()).unwrap();
        let m1 = evaluate(&FunctionalSpec::Single(1), &twins, &cfg()).unwrap();
        assert!((m2 - m1).abs() < 1e-7 * m1);
        assert!(FunctionalSpec::weighted_sum(vec![1.0, -0.5]).is_err());
        assert_eq!("sum:1,0.5".parse::<FunctionalSpec>().unwrap(), FunctionalSpec::WeightedSum(vec![1.0, 0.5]));
        assert_eq!("single:2".parse::<FunctionalSpec>().unwrap(), FunctionalSpec::Single(2));
        assert!("single:0".parse::<FunctionalSpec>().is_err());
    }

    #[test]
    fn moves_on_tiny_domains() {
        let one = GridDomain::from_fn(2, 1.0, &[1, 1], |_| true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(propose_move(&one, &mut rng), Err(Error::NoLegalMove(_))));
        let two = GridDomain::from_fn(2, 1.0, &[2, 1], |_| true).unwrap();
        for _ in 0..50 {
            let mv = propose_move(&two, &mut rng).unwrap();
            let next = apply_move(&two, mv).unwrap();
            assert_eq!(next.len(), 2);
            // The kept cell and the new one are neighbours: a slide.
            let c = next.cell_vec();
            let d: i64 = (0..2).map(|a| (c[0][a] - c[1][a]).abs()).sum();
            assert_eq!(d, 1);
            assert_eq!(apply_move(&next, mv.reversed()).unwrap(), two);
        }
    }

    #[test]
    fn move_on_a_blob_changes_two_cells() {
        let b = shapes::blob(11, 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mv = propose_move(&b, &mut rng).unwrap();
        let n = apply_move(&b, mv).unwrap();
        assert_eq!(n.len(), b.len());
        let a: HashSet<Cell> = b.cells().collect();
        let c: HashSet<Cell> = n.cells().collect();
        assert_eq!(a.symmetric_difference(&c).count(), 2);
    }

    #[test]
    fn zero_iterations_and_determinism() {
        let r = shapes::rectangle(&[24, 6]);
        let f = FunctionalSpec::Single(1);
        let none = Schedule {
            iterations: 0,
            ..Schedule::default()
        };
        let out = run(&f, &r, &none, 3, &cfg()).unwrap();
        assert_eq!(out.best, r);
        assert!(out.history.is_empty());
        let short = Schedule {
            iterations: 60,
            ..Schedule::default()
        };
        let a = run(&f, &r, &short, 9, &cfg()).unwrap();
        let b = run(&f, &r, &short, 9, &cfg()).unwrap();
        assert_eq!(history_csv(&a, 1), history_csv(&b, 1));
        assert_eq!(a.best, b.best);
        assert!(a.best_value <= a.history[0].value.max(evaluate(&f, &r, &cfg()).unwrap()));
        assert_eq!(history_csv(&a, 1).lines().count(), 61);
    }

    proptest! {
        #[test]
        fn functionals_are_monotone(
            base in prop::collection::vec(1.0f64..100.0, 3),
            bump in prop::collection::vec(0.0f64..10.0, 3),
            w in prop::collection::vec(0.0f64..5.0, 3),
        ) {
            let mut a = base.clone();
            a.sort_by(f64::total_cmp);
            let mut b: Vec<f64> = a.iter().zip(&bump).map(|(x, d)| x + d).collect();
            b.sort_by(f64::total_cmp);
            for f in [
                FunctionalSpec::Single(1),
                FunctionalSpec::Single(3),
                FunctionalSpec::Product(3),
                FunctionalSpec::Max(3),
                FunctionalSpec::weighted_sum(w.clone()).unwrap(),
            ] {
                prop_assert!(f.apply(&b) >= f.apply(&a));
            }
        }
    }
}
