//! Block preconditioned eigensolver for the lowest eigenpairs of a sparse
//! symmetric positive definite operator (LOBPCG with a Chebyshev polynomial
//! preconditioner), plus a dense fallback for small problems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A symmetric positive definite operator available through its action.
pub trait SymmetricOperator: Sync {
    fn size(&self) -> usize;

    /// `y = A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Upper bound on the spectrum (e.g. Gershgorin).
    fn spectral_upper_bound(&self) -> f64;

    /// Dense matrix, used for small problems.
    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenConfig {
    /// Relative residual target: `‖Ax − λx‖ ≤ tol·λ·‖x‖`.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Extra block vectors beyond the `k` wanted.
    pub guard: usize,
    /// Maximum degree of the Chebyshev preconditioner (0 disables it).
    pub chebyshev_degree: usize,
    /// Problems up to this size are solved densely.
    pub dense_threshold: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 4000,
            seed: 0x5eed,
            guard: 3,
            chebyshev_degree: 64,
            dense_threshold: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// Euclidean-normalized eigenvectors, one per value.
    pub vectors: Vec<Vec<f64>>,
    /// Relative residuals `‖Ax − λx‖/λ`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn apply_block<A: SymmetricOperator + ?Sized>(op: &A, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut y = DMatrix::zeros(n, x.ncols());
    if n * x.ncols() > 20_000 {
        x.as_slice()
            .par_chunks(n)
            .zip(y.as_mut_slice().par_chunks_mut(n))
            .for_each(|(xc, yc)| op.apply(xc, yc));
    } else {
        for (xc, yc) in x.as_slice().chunks(n).zip(y.as_mut_slice().chunks_mut(n)) {
            op.apply(xc, yc);
        }
    }
    y
}

/// Chebyshev iteration for `A z = r` from `z = 0`, tuned to `[a, b]`. The
/// result is `p(A) r` for a fixed polynomial positive on `(0, b]`, so it is a
/// symmetric positive definite preconditioner.
fn chebyshev<A: SymmetricOperator + ?Sized>(op: &A, r: &[f64], a: f64, b: f64, degree: usize, z: &mut [f64]) {
    let n = r.len();
    let theta = 0.5 * (b + a);
    let delta = 0.5 * (b - a);
    let sigma = theta / delta;
    let mut rho = 1.0 / sigma;
    let mut res = r.to_vec();
    let mut d: Vec<f64> = r.iter().map(|v| v / theta).collect();
    let mut ad = vec![0.0; n];
    z.iter_mut().for_each(|v| *v = 0.0);
    for step in 0..degree {
        for i in 0..n {
            z[i] += d[i];
        }
        if step + 1 == degree {
            break;
        }
        op.apply(&d, &mut ad);
        for i in 0..n {
            res[i] -= ad[i];
        }
        let rho_next = 1.0 / (2.0 * sigma - rho);
        let c1 = rho_next * rho;
        let c2 = 2.0 * rho_next / delta;
        for i in 0..n {
            d[i] = c1 * d[i] + c2 * res[i];
        }
        rho = rho_next;
    }
}

/// Chebyshev preconditioner whose degree grows with `sqrt(b / theta_top)`, so
/// the polynomial resolves the spectrum down to the top of the current block.
fn precondition<A: SymmetricOperator + ?Sized>(
    op: &A,
    r: &DMatrix<f64>,
    theta_top: f64,
    cfg: &EigenConfig,
) -> DMatrix<f64> {
    if cfg.chebyshev_degree == 0 {
        return r.clone();
    }
    let n = r.nrows();
    let b = op.spectral_upper_bound();
    let ideal = (b / theta_top.max(f64::MIN_POSITIVE)).sqrt().ceil() as usize;
    let deg = ideal.clamp(2, cfg.chebyshev_degree);
    let a = b / (deg * deg) as f64;
    let mut z = DMatrix::zeros(n, r.ncols());
    z.as_mut_slice()
        .par_chunks_mut(n)
        .zip(r.as_slice().par_chunks(n))
        .for_each(|(zc, rc)| chebyshev(op, rc, a, b, deg, zc));
    z
}

/// Sorted symmetric eigendecomposition (ascending).
fn sym_eig(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = h.nrows();
    let sym = 0.5 * (&h + h.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Solves the pencil `H c = θ G c` restricted to the numerically nonsingular
/// part of `G`. Returns ascending values and `G`-orthonormal coefficients.
fn projected_pencil(g: &DMatrix<f64>, hq: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (gv, gvec) = sym_eig(g.clone());
    let gmax = gv.iter().cloned().fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..gv.len()).filter(|&i| gv[i] > 1e-12 * gmax).collect();
    let mut t = DMatrix::zeros(g.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        t.set_column(c, &(gvec.column(i) / gv[i].sqrt()));
    }
    let hr = t.transpose() * hq * &t;
    let (vals, y) = sym_eig(hr);
    (vals, t * y)
}

fn orthonormalize(x: &mut DMatrix<f64>) {
    // Two passes of modified Gram-Schmidt.
    let m = x.ncols();
    for _ in 0..2 {
        for j in 0..m {
            for i in 0..j {
                let proj = x.column(i).dot(&x.column(j));
                let ci = x.column(i).clone_owned();
                x.column_mut(j).axpy(-proj, &ci, 1.0);
            }
            let nrm = x.column(j).norm();
            if nrm > 0.0 {
                x.column_mut(j).scale_mut(1.0 / nrm);
            }
        }
    }
}

fn random_block(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, m, |_, _| rng.gen::<f64>() - 0.5)
}

/// Fixes the sign of each vector so that its largest-magnitude entry
/// (first one on ties) is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() * (1.0 + 1e-9) {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dense_solve<A: SymmetricOperator + ?Sized>(op: &A, k: usize) -> EigenResult {
    let a = op.to_dense();
    let (vals, vecs) = sym_eig(a.clone());
    let mut vectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for i in 0..k {
        let mut v: Vec<f64> = vecs.column(i).iter().copied().collect();
        canonical_sign(&mut v);
        let x = DVector::from_column_slice(&v);
        let r = &a * &x - &x * vals[i];
        residuals.push(r.norm() / vals[i].abs().max(f64::MIN_POSITIVE));
        vectors.push(v);
    }
    EigenResult {
        values: vals[..k].to_vec(),
        vectors,
        residuals,
        iterations: 0,
        converged: true,
    }
}

/// Lowest `k` eigenpairs of `op`. `warm` vectors (if any) seed the block;
/// missing columns are filled from a seeded random generator.
pub fn lowest<A: SymmetricOperator + ?Sized>(
    op: &A,
    k: usize,
    warm: &[Vec<f64>],
    cfg: &EigenConfig,
) -> EigenResult {
    let n = op.size();
    assert!(k >= 1 && k <= n, "need 1 <= k <= n");
    let m = (k + cfg.guard).min(n);
    if n <= cfg.dense_threshold || 3 * m >= n {
        return dense_solve(op, k);
    }

    let mut x = random_block(n, m, cfg.seed);
    for (j, w) in warm.iter().take(m).enumerate() {
        if w.len() == n && w.iter().any(|v| *v != 0.0) {
            // Keep a little randomness so a rank-deficient warm start cannot stall.
            let nrm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            for i in 0..n {
                x[(i, j)] = w[i] / nrm + 1e-6 * x[(i, j)] / (n as f64).sqrt();
            }
        }
    }
    orthonormalize(&mut x);
    let mut ax = apply_block(op, &x);
    let (theta0, c0) = sym_eig(x.transpose() * &ax);
    x = &x * &c0;
    ax = &ax * &c0;
    let mut theta = theta0;
    let mut p: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut residuals = vec![f64::INFINITY; m];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        let mut r = ax.clone();
        for j in 0..m {
            let xj = x.column(j).clone_owned();
            r.column_mut(j).axpy(-theta[j], &xj, 1.0);
            residuals[j] = r.column(j).norm() / theta[j].abs().max(f64::MIN_POSITIVE);
        }
        if residuals[..k].iter().all(|&res| res <= cfg.tol) {
            converged = true;
            break;
        }
        iterations += 1;

        // Only unconverged directions drive the search.
        let active: Vec<usize> = (0..m).filter(|&j| residuals[j] > 0.1 * cfg.tol).collect();
        let r_active = r.select_columns(&active);
        let mut w = precondition(op, &r_active, theta[m - 1], cfg);
        let xtw = x.transpose() * &w;
        w -= &x * xtw;
        normalize_columns(&mut w, None);
        let aw = apply_block(op, &w);

        let (q, aq) = match p.take() {
            Some((mut pp, mut app)) => {
                let xtp = x.transpose() * &pp;
                pp -= &x * &xtp;
                app -= &ax * &xtp;
                normalize_columns(&mut pp, Some(&mut app));
                (hcat(&[&x, &w, &pp]), hcat(&[&ax, &aw, &app]))
            }
            None => (hcat(&[&x, &w]), hcat(&[&ax, &aw])),
        };
        let g = q.transpose() * &q;
        let hq = q.transpose() * &aq;
        let (vals, c) = projected_pencil(&g, &hq);
        if vals.len() < m {
            // Basis collapsed; restart from the current Ritz vectors.
            p = None;
            continue;
        }
        let cm = c.columns(0, m).clone_owned();
        let new_x = &q * &cm;
        let new_ax = &aq * &cm;
        // Search direction: the non-X part of the update.
        let mut cp = cm.clone();
        cp.rows_mut(0, m).fill(0.0);
        let pp = &q * &cp;
        let app = &aq * &cp;
        x = new_x;
        ax = new_ax;
        theta = vals[..m].to_vec();
        p = Some((pp, app));

        if iterations % 25 == 0 {
            // Guard against slow loss of orthogonality.
            let defect = (x.transpose() * &x - DMatrix::identity(m, m)).amax();
            if defect > 1e-10 {
                orthonormalize(&mut x);
                ax = apply_block(op, &x);
                let (t2, c2) = sym_eig(x.transpose() * &ax);
                x = &x * &c2;
                ax = &ax * &c2;
                theta = t2;
                p = None;
            }
        }
    }

    let mut vectors = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: Vec<f64> = x.column(j).iter().copied().collect();
        let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= nrm);
        canonical_sign(&mut v);
        vectors.push(v);
    }
    EigenResult {
        values: theta[..k].to_vec(),
        vectors,
        residuals: residuals[..k].to_vec(),
        iterations,
        converged,
    }
}

fn normalize_columns(w: &mut DMatrix<f64>, mut aw: Option<&mut DMatrix<f64>>) {
    for j in 0..w.ncols() {
        let nrm = w.column(j).norm();
        if nrm > 0.0 {
            w.column_mut(j).scale_mut(1.0 / nrm);
            if let Some(a) = aw.as_deref_mut() {
                a.column_mut(j).scale_mut(1.0 / nrm);
            }
        }
    }
}

fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut data = Vec::with_capacity(n * cols);
    for b in blocks {
        data.extend_from_slice(b.as_slice());
    }
    DMatrix::from_vec(n, cols, data)
}

/// Rayleigh-Ritz values of `op` on `span{w}`: the generalized eigenvalues of
/// `(WᵀAW, WᵀW)`. Returns `None` when the Gram matrix condition number
/// exceeds `max_condition`, together with that condition number.
pub fn ritz_values<A: SymmetricOperator + ?Sized>(
    op: &A,
    w: &[Vec<f64>],
    max_condition: f64,
) -> Result<Vec<f64>, f64> {
    let n = op.size();
    let j = w.len();
    let mut data = Vec::with_capacity(n * j);
    for v in w {
        data.extend_from_slice(v);
    }
    let wm = DMatrix::from_vec(n, j, data);
    let aw = apply_block(op, &wm);
    let g = wm.transpose() * &wm;
    let h = wm.transpose() * &aw;
    // Scale to unit diagonal before judging conditioning.
    let d: Vec<f64> = (0..j).map(|i| g[(i, i)].sqrt()).collect();
    if d.iter().any(|&x| x == 0.0) {
        return Err(f64::INFINITY);
    }
    let gs = DMatrix::from_fn(j, j, |a, b| g[(a, b)] / (d[a] * d[b]));
    let hs = DMatrix::from_fn(j, j, |a, b| h[(a, b)] / (d[a] * d[b]));
    let (gv, _) = sym_eig(gs.clone());
    let cond = gv[j - 1] / gv[0].max(0.0);
    if !(cond <= max_condition) {
        return Err(cond);
    }
    let chol = gs.cholesky().ok_or(f64::INFINITY)?;
    let l_inv = chol.l().try_inverse().ok_or(f64::INFINITY)?;
    let reduced = &l_inv * hs * l_inv.transpose();
    Ok(sym_eig(reduced).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-D Dirichlet Laplacian on n points, unit spacing.
    struct Path(usize);

    impl SymmetricOperator for Path {
        fn size(&self) -> usize {
            self.0
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let n = self.0;
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        }
        fn spectral_upper_bound(&self) -> f64 {
            4.0
        }
    }

    fn exact(n: usize, j: usize) -> f64 {
        let s = (j as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin();
        4.0 * s * s
    }

    #[test]
    fn iterative_matches_closed_form() {
        let op = Path(600);
        let cfg = EigenConfig {
            dense_threshold: 0,
            tol: 1e-9,
            ..Default::default()
        };
        let res = lowest(&op, 4, &[], &cfg);
        assert!(res.converged, "residuals {:?}", res.residuals);
        for j in 0..4 {
            assert!((res.values[j] - exact(600, j + 1)).abs() < 1e-10 * exact(600, j + 1) + 1e-14);
        }
    }

    #[test]
    fn dense_path_for_small_problems() {
        let op = Path(10);
        let res = lowest(&op, 3, &[], &EigenConfig::default());
        for j in 0..3 {
            assert!((res.values[j] - exact(10, j + 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn unpreconditioned_also_converges() {
        let op = Path(500);
        let cfg = EigenConfig {
            dense_threshold: 0,
            chebyshev_degree: 0,
            max_iterations: 20_000,
            ..Default::default()
        };
        let res = lowest(&op, 2, &[], &cfg);
        assert!(res.converged);
        assert!((res.values[0] - exact(500, 1)).abs() < 1e-10);
    }

    #[test]
    fn ritz_values_exact_on_invariant_subspace() {
        let op = Path(50);
        let res = lowest(&op, 3, &[], &EigenConfig::default());
        let nu = ritz_values(&op, &res.vectors, 1e12).unwrap();
        for j in 0..3 {
            assert!((nu[j] - res.values[j]).abs() < 1e-10);
        }
        let dup = vec![res.vectors[0].clone(), res.vectors[0].clone()];
        assert!(ritz_values(&op, &dup, 1e12).is_err());
    }
}
