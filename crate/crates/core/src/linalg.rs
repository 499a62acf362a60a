//! Small dense kernels: symmetric eigenvalues, row rank, linear solves.
//!
//! Everything here works on `nalgebra` dynamic matrices. Sizes in this crate
//! are tiny (a handful of rows), so the algorithms favour clarity over speed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Absolute symmetry tolerance, scaled by the largest entry when that exceeds one.
pub const SYMMETRY_TOL: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Largest absolute entry of `S - S^T`.
pub fn symmetry_defect(s: &Matrix) -> f64 {
    let k = s.nrows();
    let mut defect: f64 = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            defect = defect.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    defect
}

pub fn max_abs(s: &Matrix) -> f64 {
    s.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Eigenvalues of a symmetric matrix in ascending order, by cyclic Jacobi rotations.
pub fn eigenvalues_symmetric(s: &Matrix) -> Result<Vec<f64>> {
    if s.nrows() != s.ncols() {
        return Err(Error::Dimension {
            field: "S",
            expected: "square matrix".into(),
            actual: format!("{}x{}", s.nrows(), s.ncols()),
        });
    }
    let defect = symmetry_defect(s);
    if defect > SYMMETRY_TOL * max_abs(s).max(1.0) {
        return Err(Error::NotSymmetric { defect });
    }

    let k = s.nrows();
    let mut a = s.clone();
    let scale = a.norm();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                // rotation angle that zeroes a[p][q]
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for r in 0..k {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - sn * arq;
                    a[(r, q)] = sn * arp + c * arq;
                }
                for r in 0..k {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - sn * aqr;
                    a[(q, r)] = sn * apr + c * aqr;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..k).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Row rank by Gaussian elimination with partial pivoting.
///
/// A pivot counts when its magnitude exceeds `pivot_tol * ||A||_inf`.
pub fn row_rank(a: &Matrix, pivot_tol: f64) -> usize {
    let (rows, cols) = a.shape();
    let norm_inf = (0..rows)
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if norm_inf == 0.0 {
        return 0;
    }
    let threshold = pivot_tol * norm_inf;
    let mut work = a.clone();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot_row, pivot_val) =
            (rank..rows)
                .map(|r| (r, work[(r, col)].abs()))
                .fold(
                    (rank, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pivot_val <= threshold {
            continue;
        }
        work.swap_rows(rank, pivot_row);
        for r in (rank + 1)..rows {
            let factor = work[(r, col)] / work[(rank, col)];
            if factor != 0.0 {
                for c in col..cols {
                    work[(r, c)] -= factor * work[(rank, c)];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Solve `K z = rhs` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `1e-12 * max|K|`.
pub fn solve_dense(k: &Matrix, rhs: &Vector) -> Option<Vector> {
    let size = k.nrows();
    debug_assert_eq!(size, k.ncols());
    debug_assert_eq!(size, rhs.len());
    let threshold = 1e-12 * max_abs(k).max(f64::MIN_POSITIVE);
    let mut a = k.clone();
    let mut b = rhs.clone();
    for col in 0..size {
        let (pivot_row, pivot_val) =
            (col..size)
                .map(|r| (r, a[(r, col)].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pivot_val <= threshold {
            return None;
        }
        a.swap_rows(col, pivot_row);
        b.swap_rows(col, pivot_row);
        for r in (col + 1)..size {
            let factor = a[(r, col)] / a[(col, col)];
            if factor != 0.0 {
                for c in col..size {
                    a[(r, c)] -= factor * a[(col, c)];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    let mut z = Vector::zeros(size);
    for r in (0..size).rev() {
        let tail: f64 = ((r + 1)..size).map(|c| a[(r, c)] * z[c]).sum();
        z[r] = (b[r] - tail) / a[(r, r)];
    }
    Some(z)
}

pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Matrix {
    Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}
