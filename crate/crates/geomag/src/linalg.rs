//! Small dense complex matrices (2x2 and 4x4 in practice).

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomagError, Result};
use crate::C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Pauli matrix sigma_k for k in 1..=3; k = 0 gives the identity.
pub fn pauli(k: usize) -> CMat {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let entries = match k {
        0 => [o, z, z, o],
        1 => [z, o, o, z],
        2 => [z, -I, I, z],
        3 => [o, z, z, -o],
        _ => panic!("pauli index {k} out of range"),
    };
    CMat::from_row_slice(2, 2, &entries)
}

pub fn mat2(a: C64, b: C64, cc: C64, d: C64) -> CMat {
    CMat::from_row_slice(2, 2, &[a, b, cc, d])
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - identity(n)))
}

pub fn hermiticity_defect(h: &CMat) -> f64 {
    max_abs(&(h - h.adjoint()))
}

pub fn symmetrize(h: &CMat) -> CMat {
    (h + h.adjoint()).scale(0.5)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// exp(i H) for Hermitian H. The 2x2 case uses the Pauli decomposition
/// H = a0 + a.sigma; larger matrices use scaling and squaring of the series.
pub fn expi_hermitian(h: &CMat) -> CMat {
    if h.nrows() == 2 {
        return expi_2x2(h);
    }
    expm_series(&h.map(|z| I * z))
}

fn expi_2x2(h: &CMat) -> CMat {
    let a0 = 0.5 * (h[(0, 0)] + h[(1, 1)]).re;
    let a3 = 0.5 * (h[(0, 0)] - h[(1, 1)]).re;
    let off = 0.5 * (h[(0, 1)] + h[(1, 0)].conj());
    let a1 = off.re;
    let a2 = -off.im;
    let n = (a1 * a1 + a2 * a2 + a3 * a3).sqrt();
    let (cs, sinc) = if n < 1e-8 {
        (1.0 - n * n / 2.0, 1.0 - n * n / 6.0)
    } else {
        (n.cos(), n.sin() / n)
    };
    let ph = C64::from_polar(1.0, a0);
    let s = I * sinc;
    let m = mat2(
        C64::new(cs, 0.0) + s * a3,
        s * C64::new(a1, -a2),
        s * C64::new(a1, a2),
        C64::new(cs, 0.0) - s * a3,
    );
    m * ph
}

/// exp(X) by scaling and squaring with a truncated Taylor series.
pub fn expm_series(x: &CMat) -> CMat {
    let n = x.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| x[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0;
    if norm1 > 0.5 {
        s = (norm1 / 0.5).log2().ceil() as i32;
    }
    let xs = x.scale(0.5f64.powi(s));
    let mut term = identity(n);
    let mut sum = identity(n);
    for k in 1..=20 {
        term = &term * &xs / C64::new(k as f64, 0.0);
        sum += &term;
        if max_abs(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let eig = symmetrize(h).symmetric_eigen();
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solve A x = b with LU; returns x and the 1-norm condition number.
/// Columns are equilibrated first so that badly scaled bases do not inflate
/// the estimate.
pub fn solve(a: &CMat, b: &CVec, max_cond: f64) -> Result<(CVec, f64)> {
    let n = a.ncols();
    let mut scaled = a.clone();
    let mut scale = vec![1.0; n];
    for j in 0..n {
        let m = (0..n).map(|i| a[(i, j)].norm()).fold(0.0, f64::max);
        if m > 0.0 {
            scale[j] = 1.0 / m;
            for i in 0..n {
                scaled[(i, j)] *= scale[j];
            }
        }
    }
    let lu = scaled.clone().lu();
    let inv = lu.try_inverse().ok_or(GeomagError::Conditioning {
        cond: f64::INFINITY,
    })?;
    let cond = norm1(&scaled) * norm1(&inv);
    if !cond.is_finite() || cond > max_cond {
        return Err(GeomagError::Conditioning { cond });
    }
    let mut x = &inv * b;
    for j in 0..n {
        x[j] *= scale[j];
    }
    Ok((x, cond))
}
