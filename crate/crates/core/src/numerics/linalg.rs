//! Small dense linear algebra: packed symmetric matrices, Cholesky, weighted least squares.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric matrix stored as its packed lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    order: usize,
    lower: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(order: usize) -> Self {
        assert!(order >= 1, "order must be at least 1");
        Self { order, lower: vec![0.0; order * (order + 1) / 2] }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from a full square matrix, reading the lower triangle only.
    pub fn from_full(rows: &[Vec<f64>]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, r) in rows.iter().enumerate() {
            for j in 0..=i {
                m.set(i, j, r[j]);
            }
        }
        m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        i * (i + 1) / 2 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[Self::idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.lower[Self::idx(i, j)] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.lower[Self::idx(i, j)] += v;
    }

    pub fn to_full(&self) -> Matrix {
        let n = self.order;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

/// Factorizes a symmetric positive-definite matrix.
pub fn cholesky(a: &SymmetricMatrix) -> Result<Cholesky> {
    cholesky_with_tolerance(a, 0.0)
}

/// Cholesky where a pivot at or below `rel_tol` times the original diagonal entry
/// is treated as a loss of positive definiteness.
pub fn cholesky_with_tolerance(a: &SymmetricMatrix, rel_tol: f64) -> Result<Cholesky> {
    let n = a.order();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        let scale = a.get(j, j).abs();
        if !(d > rel_tol * scale) || !d.is_finite() || d <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(Cholesky { l })
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn order(&self) -> usize {
        self.l.rows()
    }

    pub fn log_det(&self) -> f64 {
        (0..self.order()).map(|i| 2.0 * self.l[(i, i)].ln()).sum()
    }

    /// Solves `L z = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.order();
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.order();
        let mut x = self.forward(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> SymmetricMatrix {
        let n = self.order();
        let mut inv = SymmetricMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in j..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }

    /// `L Lᵀ`, for reconstruction checks.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        let n = self.order();
        let mut a = SymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.l[(i, k)] * self.l[(j, k)]).sum();
                a.set(i, j, s);
            }
        }
        a
    }
}

/// Weighted least-squares fit.
#[derive(Debug, Clone)]
pub struct WlsFit {
    pub coefficients: Vec<f64>,
    /// `(XᵀWX)⁻¹`; callers scale it by their residual-variance convention.
    pub unscaled_covariance: SymmetricMatrix,
    pub residuals: Vec<f64>,
    /// `Σ wᵢ rᵢ²`.
    pub weighted_rss: f64,
}

const RANK_TOL: f64 = 1e-10;

/// Minimizes `Σ wᵢ (yᵢ − xᵢβ)²`.
pub fn wls_solve(x: &Matrix, y: &[f64], w: &[f64]) -> Result<WlsFit> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n || w.len() != n {
        return Err(Error::Validation(format!(
            "wls: {n} design rows but {} responses and {} weights",
            y.len(),
            w.len()
        )));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation("wls: weights must be finite and nonnegative".into()));
    }
    if p == 0 {
        return Err(Error::RankDeficient);
    }
    let mut xtwx = SymmetricMatrix::zeros(p);
    let mut xtwy = vec![0.0; p];
    for i in 0..n {
        let row = x.row(i);
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        for a in 0..p {
            xtwy[a] += wi * row[a] * y[i];
            for b in 0..=a {
                xtwx.add(a, b, wi * row[a] * row[b]);
            }
        }
    }
    let chol = cholesky_with_tolerance(&xtwx, RANK_TOL).map_err(|_| Error::RankDeficient)?;
    let coefficients = chol.solve(&xtwy);
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - dot(x.row(i), &coefficients)).collect();
    let weighted_rss = residuals.iter().zip(w).map(|(r, wi)| wi * r * r).sum();
    Ok(WlsFit {
        coefficients,
        unscaled_covariance: chol.inverse(),
        residuals,
        weighted_rss,
    })
}
