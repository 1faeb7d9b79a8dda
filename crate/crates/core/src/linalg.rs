//! Closed-form dense linear algebra for symmetric matrices of size <= 3.
//!
//! Matrices are row-major `[f64; 9]` with only the leading `n x n` block used.

use std::f64::consts::TAU;

pub(crate) type Mat3 = [f64; 9];

#[inline]
pub(crate) fn at(a: &Mat3, n: usize, i: usize, j: usize) -> f64 {
    a[i * n + j]
}

pub(crate) fn det(a: &Mat3, n: usize) -> f64 {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => unreachable!("dimension {n} > 3"),
    }
}

/// Adjugate inverse. Callers guarantee `a` is well conditioned (here `a >= I`).
pub(crate) fn inverse(a: &Mat3, n: usize) -> Mat3 {
    let mut out = [0.0; 9];
    let d = det(a, n);
    match n {
        1 => out[0] = 1.0 / a[0],
        2 => {
            out[0] = a[3] / d;
            out[1] = -a[1] / d;
            out[2] = -a[2] / d;
            out[3] = a[0] / d;
        }
        3 => {
            let c = |i: usize, j: usize| at(a, 3, i, j);
            out[0] = (c(1, 1) * c(2, 2) - c(1, 2) * c(2, 1)) / d;
            out[1] = (c(0, 2) * c(2, 1) - c(0, 1) * c(2, 2)) / d;
            out[2] = (c(0, 1) * c(1, 2) - c(0, 2) * c(1, 1)) / d;
            out[3] = (c(1, 2) * c(2, 0) - c(1, 0) * c(2, 2)) / d;
            out[4] = (c(0, 0) * c(2, 2) - c(0, 2) * c(2, 0)) / d;
            out[5] = (c(0, 2) * c(1, 0) - c(0, 0) * c(1, 2)) / d;
            out[6] = (c(1, 0) * c(2, 1) - c(1, 1) * c(2, 0)) / d;
            out[7] = (c(0, 1) * c(2, 0) - c(0, 0) * c(2, 1)) / d;
            out[8] = (c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0)) / d;
        }
        _ => unreachable!("dimension {n} > 3"),
    }
    out
}

/// Eigenvalues of a symmetric positive semidefinite matrix, non-increasing,
/// clamped at zero.
pub(crate) fn psd_eigenvalues(a: &Mat3, n: usize) -> [f64; 3] {
    let mut ev = match n {
        1 => [a[0], 0.0, 0.0],
        2 => {
            let mean = 0.5 * (a[0] + a[3]);
            let r = (0.5 * (a[0] - a[3])).hypot(a[1]);
            let hi = mean + r;
            // det / hi avoids cancellation in mean - r
            let lo = if hi > 0.0 { det(a, 2) / hi } else { 0.0 };
            [hi, lo, 0.0]
        }
        3 => sym3_eigenvalues(a),
        _ => unreachable!("dimension {n} > 3"),
    };
    for v in ev.iter_mut().take(n) {
        *v = v.max(0.0);
    }
    ev
}

fn sym3_eigenvalues(a: &Mat3) -> [f64; 3] {
    let off = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
    let q = (a[0] + a[4] + a[8]) / 3.0;
    let d0 = a[0] - q;
    let d1 = a[4] - q;
    let d2 = a[8] - q;
    let p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * off;
    if p2 == 0.0 {
        return [q, q, q];
    }
    let p = (p2 / 6.0).sqrt();
    let b = [
        d0 / p,
        a[1] / p,
        a[2] / p,
        a[3] / p,
        d1 / p,
        a[5] / p,
        a[6] / p,
        a[7] / p,
        d2 / p,
    ];
    let r = (det(&b, 3) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + TAU / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    [e1, e2, e3]
}
