//! Helpers shared by the integration tests and the acceptance runner.

#![allow(dead_code)]

use coopd2d::channel::PairGammas;

/// Eigenvalues of a symmetric 2x2 matrix, larger first.
pub fn sym_eigs(a: f64, b: f64, d: f64) -> (f64, f64) {
    let mid = 0.5 * (a + d);
    let rad = (0.5 * (a - d)).hypot(b);
    let hi = mid + rad;
    // product of the eigenvalues is the determinant
    let lo = if hi != 0.0 { (a * d - b * b) / hi } else { mid - rad };
    (hi, lo)
}

/// Central-difference Hessian of `(2y - 1) log2(1 + beta x)`, returned as
/// its eigenvalues. Steps are relative in `x` and absolute in `y`.
pub fn fd_probe_eigs(beta: f64, x: f64, y: f64) -> (f64, f64) {
    // ln_1p keeps f accurate when beta x is tiny
    let f = |x: f64, y: f64| (2.0 * y - 1.0) * (beta * x).ln_1p() / std::f64::consts::LN_2;
    let hx = 1e-3 * x;
    let hy = 1e-3;
    let fxx = (f(x + hx, y) - 2.0 * f(x, y) + f(x - hx, y)) / (hx * hx);
    let fyy = (f(x, y + hy) - 2.0 * f(x, y) + f(x, y - hy)) / (hy * hy);
    let fxy = (f(x + hx, y + hy) - f(x + hx, y - hy) - f(x - hx, y + hy) + f(x - hx, y - hy)) / (4.0 * hx * hy);
    sym_eigs(fxx, fxy, fyy)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Per-watt coefficients from base-10 exponents.
pub fn gammas_from_log10(e: [f64; 4]) -> PairGammas {
    PairGammas {
        mn: 10f64.powf(e[0]),
        mb: 10f64.powf(e[1]),
        nb: 10f64.powf(e[2]),
        nn: 10f64.powf(e[3]),
    }
}
