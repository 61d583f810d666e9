//! Small dense linear algebra: a cyclic Jacobi eigensolver for Hermitian matrices and a
//! scaling-and-squaring matrix exponential.

use nalgebra::DMatrix;

use crate::propagator::C64;

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations, ascending.
///
/// Sweeps stop once the off-diagonal Frobenius norm falls below `tol` times the full norm.
pub fn jacobi_symmetric_eigenvalues(mut a: DMatrix<f64>, tol: f64) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let total = a.norm();
    if n == 0 {
        return Vec::new();
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= tol * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Eigenvalues of a Hermitian matrix H = X + iY via the real embedding [[X, -Y], [Y, X]],
/// whose spectrum is that of H with every eigenvalue doubled.
pub fn hermitian_eigenvalues(h: &DMatrix<C64>) -> Vec<f64> {
    let n = h.nrows();
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = 0.5 * (h[(i, j)] + h[(j, i)].conj());
            m[(i, j)] = z.re;
            m[(i + n, j + n)] = z.re;
            m[(i, j + n)] = -z.im;
            m[(i + n, j)] = z.im;
        }
    }
    let ev = jacobi_symmetric_eigenvalues(m, 1e-13);
    ev.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Σ|λ| of a Hermitian matrix.
pub fn hermitian_trace_norm(h: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues(h).iter().map(|v| v.abs()).sum()
}

/// e^A by scaling and squaring with a Taylor series.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm1 * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a * C64::new(scale, 0.0);
    let mut sum = DMatrix::<C64>::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for k in 1..60 {
        term = &term * &x * C64::new(1.0 / k as f64, 0.0);
        sum += &term;
        if term.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}
