//! Special functions: Bessel J_n, Laguerre polynomials, Riemann zeta, log-factorials
//! and Gauss-Legendre nodes.

use crate::error::{input, Result};

/// J_0(x), ..., J_nmax(x) by Miller's backward recurrence, normalised with
/// J_0 + 2 Σ_k J_{2k} = 1.
///
/// Every entry carries relative accuracy, including the deep tail n ≫ |x| where
/// values fall below 1e-300 and eventually underflow to zero.
pub fn bessel_j_sequence(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = nmax.max(ax.ceil() as usize) as f64;
    let mut m = (top + 40.0 + 2.0 * (40.0 * top).sqrt()).ceil() as usize;
    m += m % 2;

    const BIG: f64 = 1e250;
    let mut jkp1 = 0.0f64;
    let mut jk = 1e-280f64;
    let mut sum = 0.0f64;
    for k in (1..=m).rev() {
        if k <= nmax {
            out[k] = jk;
        }
        if k % 2 == 0 {
            sum += 2.0 * jk;
        }
        let jkm1 = (2.0 * k as f64 / ax) * jk - jkp1;
        jkp1 = jk;
        jk = jkm1;
        if jk.abs() > BIG {
            jk /= BIG;
            jkp1 /= BIG;
            sum /= BIG;
            for v in out.iter_mut().skip(k) {
                *v /= BIG;
            }
        }
    }
    out[0] = jk;
    sum += jk;
    for (n, v) in out.iter_mut().enumerate() {
        *v /= sum;
        if x < 0.0 && n % 2 == 1 {
            *v = -*v;
        }
    }
    out
}

/// J_n(x) for integer n of either sign.
pub fn bessel_j(n: i64, x: f64) -> f64 {
    let k = n.unsigned_abs() as usize;
    let v = bessel_j_sequence(k, x)[k];
    if n < 0 && k % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Generalised Laguerre polynomials L_0^{(k)}(x), ..., L_nmax^{(k)}(x).
pub fn laguerre_sequence(nmax: usize, k: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(1.0);
    if nmax == 0 {
        return out;
    }
    out.push(1.0 + k - x);
    for j in 1..nmax {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + k - x) * out[j] - (jf + k) * out[j - 1]) / (jf + 1.0);
        out.push(next);
    }
    out
}

/// L_n^{(k)}(x).
pub fn assoc_laguerre(n: usize, k: f64, x: f64) -> f64 {
    laguerre_sequence(n, k, x)[n]
}

/// L_n(x).
pub fn laguerre(n: usize, x: f64) -> f64 {
    assoc_laguerre(n, 0.0, x)
}

/// Riemann zeta for real s > 1 (Euler-Maclaurin, relative error below 1e-14).
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return input(format!("zeta(s) requires finite s > 1, got {s}"));
    }
    const N: usize = 1000;
    let nf = N as f64;
    let mut acc = 0.0;
    for k in (1..N).rev() {
        acc += (k as f64).powf(-s);
    }
    let ns = nf.powf(-s);
    let tail = nf * ns / (s - 1.0) + 0.5 * ns + s * ns / (12.0 * nf)
        - s * (s + 1.0) * (s + 2.0) * ns / (720.0 * nf.powi(3))
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * ns / (30240.0 * nf.powi(5));
    Ok(acc + tail)
}

/// ln(n!), exact summation for small n and a Stirling series beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if n <= 32 {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x.powi(3))
        + 1.0 / (1260.0 * x.powi(5))
}

/// Gauss-Legendre nodes and weights on [a, b].
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // Recompute the derivative at the converged node.
        let (mut p0, mut p1) = (1.0, z);
        for j in 2..=n {
            let jf = j as f64;
            let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
            p0 = p1;
            p1 = p2;
        }
        let pm1 = if n == 1 { 1.0 } else { p0 };
        if n >= 1 {
            dp = nf * (z * p1 - pm1) / (z * z - 1.0);
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = mid - half * z;
        nodes[n - 1 - i] = mid + half * z;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}
