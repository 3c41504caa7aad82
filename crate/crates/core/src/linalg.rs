//! Dense linear algebra kernels used by the estimators.
//!
//! Least squares is solved by Householder QR with column pivoting rather
//! than normal equations; the rank tolerance is machine epsilon times the
//! larger matrix dimension times the largest column norm. An independent
//! normal-equations route lives in the test suite as the oracle.

use crate::error::{Error, Result};

/// Least-squares solution of `min ||X b - y||` for a column-major design.
#[derive(Debug, Clone)]
pub struct Lstsq {
    /// Coefficients in original column order.
    pub coef: Vec<f64>,
    /// `X b` per row.
    pub fitted: Vec<f64>,
    /// `y - X b` per row.
    pub residuals: Vec<f64>,
    /// `(X'X)^{-1}`, the sandwich bread, in original column order.
    pub xtx_inv: Vec<Vec<f64>>,
}

/// Solve least squares by column-pivoted Householder QR.
///
/// `columns` is the design matrix stored one column per entry; `names`
/// supplies the labels used when reporting rank deficiency.
pub fn lstsq(columns: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<Lstsq> {
    let k = columns.len();
    let n = y.len();
    if k == 0 {
        return Err(Error::Numerical("empty design matrix".into()));
    }
    for col in columns {
        if col.len() != n {
            return Err(Error::Numerical(format!(
                "design column length {} does not match {} rows",
                col.len(),
                n
            )));
        }
    }
    if n <= k {
        return Err(Error::Numerical(format!(
            "need more rows ({n}) than columns ({k}) for least squares"
        )));
    }

    // Working copies: columns of X and the rotating response.
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut qty = y.to_vec();
    let mut piv: Vec<usize> = (0..k).collect();

    let max_col_norm = a
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0_f64, f64::max);
    let tol = f64::EPSILON * n.max(k) as f64 * max_col_norm;

    for j in 0..k {
        // Pivot: bring the remaining column with the largest trailing norm
        // to position j. Norms are recomputed to avoid downdating drift.
        let mut best = j;
        let mut best_norm = trailing_norm(&a[j], j);
        for m in (j + 1)..k {
            let nm = trailing_norm(&a[m], j);
            if nm > best_norm {
                best = m;
                best_norm = nm;
            }
        }
        a.swap(j, best);
        piv.swap(j, best);

        if best_norm <= tol {
            // Columns at positions j..k are numerically dependent on the
            // first j pivoted columns. Express each offender in terms of the
            // kept columns so the error names both sides of the dependency.
            let mut parts = Vec::new();
            for m in j..k {
                let mut z = vec![0.0; j];
                for i in (0..j).rev() {
                    let mut s = a[m][i];
                    for l in (i + 1)..j {
                        s -= a[l][i] * z[l];
                    }
                    z[i] = s / a[i][i];
                }
                let involved: Vec<&str> = (0..j)
                    .filter(|&i| z[i].abs() > 1e-8 * (1.0 + z.iter().map(|v| v.abs()).fold(0.0, f64::max)))
                    .map(|i| names[piv[i]].as_str())
                    .collect();
                if involved.is_empty() {
                    parts.push(format!("{} has no remaining variation", names[piv[m]]));
                } else {
                    parts.push(format!(
                        "{} is collinear with [{}]",
                        names[piv[m]],
                        involved.join(", ")
                    ));
                }
            }
            return Err(Error::Numerical(format!(
                "rank-deficient design: {}",
                parts.join("; ")
            )));
        }

        // Householder reflection zeroing a[j][j+1..] .
        let x0 = a[j][j];
        let sigma: f64 = a[j][j + 1..].iter().map(|v| v * v).sum();
        if sigma == 0.0 {
            continue; // already triangular in this column
        }
        let mu = (x0 * x0 + sigma).sqrt();
        let v0 = if x0 <= 0.0 { x0 - mu } else { -sigma / (x0 + mu) };
        let beta = 2.0 * v0 * v0 / (sigma + v0 * v0);

        // v = [1, a[j][j+1..]/v0]; apply H = I - beta v v' to the trailing
        // columns and to qty, then write the new diagonal.
        let inv_v0 = 1.0 / v0;
        let v: Vec<f64> = std::iter::once(1.0)
            .chain(a[j][j + 1..].iter().map(|&x| x * inv_v0))
            .collect();
        for target in (j + 1)..k {
            apply_reflector(&mut a[target], j, &v, beta);
        }
        apply_reflector(&mut qty, j, &v, beta);
        // The reflector maps the column onto +mu e1 for either sign of x0.
        a[j][j] = mu;
        for r in (j + 1)..n {
            a[j][r] = 0.0;
        }
    }

    // Back substitution on the k x k upper triangle.
    let mut z = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = qty[j];
        for m in (j + 1)..k {
            s -= a[m][j] * z[m];
        }
        z[j] = s / a[j][j];
    }
    let mut coef = vec![0.0; k];
    for j in 0..k {
        coef[piv[j]] = z[j];
    }

    // R^{-1} (upper triangular), then (X'X)^{-1} = P R^{-1} R^{-T} P'.
    let mut rinv = vec![vec![0.0; k]; k];
    for j in 0..k {
        rinv[j][j] = 1.0 / a[j][j];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for m in (i + 1)..=j {
                s += a[m][i] * rinv[m][j];
            }
            rinv[i][j] = -s / a[i][i];
        }
    }
    let mut xtx_inv = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let mut s = 0.0;
            for m in j..k {
                s += rinv[i][m] * rinv[j][m];
            }
            xtx_inv[piv[i]][piv[j]] = s;
            xtx_inv[piv[j]][piv[i]] = s;
        }
    }

    let mut fitted = vec![0.0; n];
    for (j, col) in columns.iter().enumerate() {
        let b = coef[j];
        if b != 0.0 {
            for (f, &x) in fitted.iter_mut().zip(col.iter()) {
                *f += b * x;
            }
        }
    }
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();

    Ok(Lstsq {
        coef,
        fitted,
        residuals,
        xtx_inv,
    })
}

fn trailing_norm(col: &[f64], from: usize) -> f64 {
    col[from..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// In-place `col <- (I - beta v v') col` acting on rows `from..`.
fn apply_reflector(col: &mut [f64], from: usize, v: &[f64], beta: f64) {
    let mut dot = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        dot += vi * col[from + i];
    }
    let scale = beta * dot;
    for (i, &vi) in v.iter().enumerate() {
        col[from + i] -= scale * vi;
    }
}

/// Eigenvalues (descending) and matching orthonormal eigenvector columns of
/// a small symmetric matrix, by cyclic Jacobi rotations.
pub fn sym_eigen(matrix: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = matrix.len();
    if k == 0 || matrix.iter().any(|r| r.len() != k) {
        return Err(Error::Numerical("sym_eigen requires a square matrix".into()));
    }
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v = identity(k);

    let scale: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x.abs())
        .fold(0.0, f64::max)
        .max(1.0);
    let tol = f64::EPSILON * scale;

    for _sweep in 0..100 {
        let mut off = 0.0_f64;
        for p in 0..k {
            for q in (p + 1)..k {
                off = off.max(a[p][q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                if a[p][q].abs() <= tol * 1e-2 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, p, q, c, s);
                for r in 0..k {
                    let vp = v[r][p];
                    let vq = v[r][q];
                    v[r][p] = c * vp - s * vq;
                    v[r][q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let mut vectors = vec![vec![0.0; k]; k]; // column j = eigenvector j
    for (jnew, &jold) in order.iter().enumerate() {
        for r in 0..k {
            vectors[r][jnew] = v[r][jold];
        }
    }
    Ok((eigenvalues, vectors))
}

fn rotate(a: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let k = a.len();
    for r in 0..k {
        if r != p && r != q {
            let arp = a[r][p];
            let arq = a[r][q];
            a[r][p] = c * arp - s * arq;
            a[p][r] = a[r][p];
            a[r][q] = s * arp + c * arq;
            a[q][r] = a[r][q];
        }
    }
    let app = a[p][p];
    let aqq = a[q][q];
    let apq = a[p][q];
    a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
    a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
    a[p][q] = 0.0;
    a[q][p] = 0.0;
}

fn identity(k: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; k]; k];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Smallest eigenvalue of a symmetric matrix; used for PSD assertions.
pub fn min_eigenvalue(matrix: &[Vec<f64>]) -> Result<f64> {
    let (evs, _) = sym_eigen(matrix)?;
    Ok(*evs.last().expect("nonempty"))
}
