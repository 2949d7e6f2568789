//! Bessel functions of the first kind of integer order and their zeros,
//! enough to tabulate first eigenvalues of balls.

use std::f64::consts::PI;

/// `J_n(x)` by its power series. Accurate to ~1e-14 for `|x| <= 20`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = half.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    let q = -half * half;
    for k in 1..200u32 {
        term *= q / (f64::from(k) * f64::from(k + n));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// The `k`-th positive zero of `J_n` (k >= 1), by bracketing with McMahon's
/// asymptotic guess and bisection.
pub fn bessel_zero(n: u32, k: u32) -> f64 {
    assert!(k >= 1, "zeros are numbered from 1");
    let beta = (f64::from(k) + 0.5 * f64::from(n) - 0.25) * PI;
    let mu = 4.0 * f64::from(n * n);
    let guess = beta - (mu - 1.0) / (8.0 * beta);
    let (mut lo, mut hi) = (guess - 0.5, guess + 0.5);
    let f = |x: f64| bessel_j(n, x);
    let mut flo = f(lo);
    assert!(flo * f(hi) < 0.0, "zero of J_{n} near {guess} not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `λ_1` of the ball of unit volume in R^N, for N = 2 or 3.
pub fn lambda1_unit_ball(dim: usize) -> f64 {
    match dim {
        // radius 1/sqrt(pi)
        2 => PI * bessel_zero(0, 1).powi(2),
        // radius (3/(4 pi))^(1/3); the first zero of j_0(x) = sin x / x is pi
        3 => (4.0 * PI / 3.0).powf(2.0 / 3.0) * PI * PI,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// `λ_2/λ_1` of the disk, `(j_{1,1}/j_{0,1})²`.
pub fn disk_ratio() -> f64 {
    (bessel_zero(1, 1) / bessel_zero(0, 1)).powi(2)
}
