//! Dense least-squares via Householder QR.
//!
//! Kept deliberately small: the diagnostics module needs well-conditioned
//! least-squares solves and the diagonal of (XᵀX)⁻¹ for standard errors,
//! nothing more. Normal-equation solves exist only as test oracles.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Result of a QR least-squares solve.
#[derive(Debug, Clone)]
pub struct Lstsq {
    /// Solution coefficients (length = number of columns).
    pub coeffs: Vec<f64>,
    /// Diagonal of (XᵀX)⁻¹ = (RᵀR)⁻¹, needed for OLS standard errors.
    pub xtx_inv_diag: Vec<f64>,
}

/// Solves min ‖X b − y‖₂ by Householder QR with column-pivot-free
/// factorization and explicit rank checking.
///
/// `names` labels columns in the singularity error (pass factor names so the
/// message identifies the dependent column).
///
/// # Errors
///
/// [`Error::SingularDesign`] when some diagonal of R collapses below
/// `1e-10 · max |R_jj|` — the named column is (numerically) a linear
/// combination of earlier ones.
pub fn lstsq(x: &Mat, y: &[f64], names: &[String]) -> Result<Lstsq> {
    assert_eq!(x.rows, y.len(), "row count must match response length");
    assert!(x.rows >= x.cols, "need at least as many rows as columns");
    let (n, p) = (x.rows, x.cols);
    let mut a = x.clone();
    let mut rhs = y.to_vec();

    // Householder triangularization, applying each reflector to rhs as well.
    for k in 0..p {
        let mut norm = 0.0;
        for i in k..n {
            norm += a.get(i, k) * a.get(i, k);
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue; // leaves R_kk = 0; caught by the rank check below
        }
        let alpha = if a.get(k, k) > 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n - k];
        v[0] = a.get(k, k) - alpha;
        for i in k + 1..n {
            v[i - k] = a.get(i, k);
        }
        let vtv: f64 = v.iter().map(|t| t * t).sum();
        if vtv == 0.0 {
            continue;
        }
        a.set(k, k, alpha);
        for i in k + 1..n {
            a.set(i, k, 0.0);
        }
        for j in k + 1..p {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i - k] * a.get(i, j);
            }
            let scale = 2.0 * dot / vtv;
            for i in k..n {
                let val = a.get(i, j) - scale * v[i - k];
                a.set(i, j, val);
            }
        }
        let mut dot = 0.0;
        for i in k..n {
            dot += v[i - k] * rhs[i];
        }
        let scale = 2.0 * dot / vtv;
        for i in k..n {
            rhs[i] -= scale * v[i - k];
        }
    }

    let max_diag = (0..p).map(|j| a.get(j, j).abs()).fold(0.0, f64::max);
    let tol = 1e-10 * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..p {
        if a.get(j, j).abs() <= tol {
            return Err(Error::SingularDesign {
                column: j,
                name: names.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
            });
        }
    }

    // Back-substitution for R b = Qᵀ y.
    let mut coeffs = vec![0.0; p];
    for j in (0..p).rev() {
        let mut acc = rhs[j];
        for k in j + 1..p {
            acc -= a.get(j, k) * coeffs[k];
        }
        coeffs[j] = acc / a.get(j, j);
    }

    // diag((XᵀX)⁻¹) = diag(R⁻¹ R⁻ᵀ) = squared norms of the rows of R⁻¹.
    // Column j of R⁻¹ solves R w = e_j (upper-triangular back-substitution,
    // zeros below j); entry w[i] lands in row i's norm.
    let mut xtx_inv_diag = vec![0.0; p];
    let mut w = vec![0.0; p];
    for j in 0..p {
        for item in w.iter_mut() {
            *item = 0.0;
        }
        w[j] = 1.0 / a.get(j, j);
        for i in (0..j).rev() {
            let mut acc = 0.0;
            for k in i + 1..=j {
                acc -= a.get(i, k) * w[k];
            }
            w[i] = acc / a.get(i, i);
        }
        for i in 0..=j {
            xtx_inv_diag[i] += w[i] * w[i];
        }
    }

    Ok(Lstsq { coeffs, xtx_inv_diag })
}
