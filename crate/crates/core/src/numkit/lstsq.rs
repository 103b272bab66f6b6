use crate::error::{Error, Result};
use crate::numkit::Matrix;

const RANK_TOL: f64 = 1e-12;

/// Least-squares solution of `a x ≈ b` by Householder QR.
pub fn lstsq(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::Dimension(format!(
            "right-hand side has {} entries for {m} equations",
            b.len()
        )));
    }
    if n == 0 || m < n {
        return Err(Error::Fit(format!(
            "{m} equations cannot determine {n} unknowns"
        )));
    }
    // Column-major copy so each Householder step walks contiguous memory.
    let mut q: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut rhs = b.to_vec();
    let mut diag = vec![0.0; n];
    for k in 0..n {
        let norm = q[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[k] = 0.0;
            continue;
        }
        let alpha = if q[k][k] > 0.0 { -norm } else { norm };
        let mut v = q[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for col in q.iter_mut().skip(k) {
            let s: f64 = v.iter().zip(&col[k..]).map(|(x, y)| x * y).sum::<f64>() * 2.0 / vnorm2;
            for (c, x) in col[k..].iter_mut().zip(&v) {
                *c -= s * x;
            }
        }
        let s: f64 = v.iter().zip(&rhs[k..]).map(|(x, y)| x * y).sum::<f64>() * 2.0 / vnorm2;
        for (c, x) in rhs[k..].iter_mut().zip(&v) {
            *c -= s * x;
        }
    }
    let scale = diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    if scale == 0.0 || diag.iter().any(|d| d.abs() <= RANK_TOL * scale) {
        return Err(Error::Fit("design matrix is rank deficient".into()));
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..n {
            s -= q[j][i] * x[j];
        }
        x[i] = s / diag[i];
    }
    Ok(x)
}
