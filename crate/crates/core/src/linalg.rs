//! Dense row-major matrices and the few factorizations the crate needs:
//! symmetric Jacobi eigendecomposition, Cholesky, Gaussian elimination and
//! a spectral radius estimate for stability diagnostics. Sizes here are
//! small (factor counts, asset counts, feature widths), so simplicity and
//! determinism win over blocked kernels.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "flat data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
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

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dims");
        let mut out = Mat::zeros(self.rows, other.cols);
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

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dims");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add dims");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Shape consistency check for matrices deserialized from JSON.
    pub fn shape_ok(&self) -> bool {
        self.data.len() == self.rows * self.cols
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with matching eigenvector
/// columns. Fails if the off-diagonal mass does not vanish in 100 sweeps.
pub fn jacobi_eigen_sym(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!("eigen of non-square {}x{}", a.rows(), a.cols())));
    }
    let mut a = a.clone();
    let mut v = Mat::identity(n);
    let frob = a.frobenius_norm().max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if (2.0 * off).sqrt() <= 1e-14 * frob {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| a[(y, y)].partial_cmp(&a[(x, x)]).unwrap());
            let vals: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
            let vecs = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
            return Ok((vals, vecs));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
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
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::Numerical("Jacobi eigensolver did not converge in 100 sweeps".into()))
}

/// Lower-triangular Cholesky factor of a symmetric positive semidefinite
/// matrix. Pivots within `-tol` of zero are clamped to zero (rank
/// deficiency); more negative pivots are an error.
pub fn cholesky_psd(a: &Mat, tol: f64) -> Result<Mat> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!("cholesky of non-square {}x{}", a.rows(), a.cols())));
    }
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0f64, f64::max).max(1.0);
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol * scale {
            return Err(Error::Numerical(format!(
                "matrix not positive semidefinite: pivot {d:.3e} at index {j}"
            )));
        }
        let piv = d.max(0.0).sqrt();
        l[(j, j)] = piv;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = if piv > 0.0 { s / piv } else { 0.0 };
        }
    }
    Ok(l)
}

/// Solve `A x = b` for square `A` by Gaussian elimination with partial
/// pivoting.
pub fn solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::Shape(format!(
            "solve dims: A is {}x{}, b has {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap())
            .unwrap();
        let pivot = m[(pivot_row, col)];
        if pivot.abs() < 1e-12 * (1.0 + a.frobenius_norm()) {
            return Err(Error::Numerical(format!("singular system at column {col}")));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(pivot_row, j)];
                m[(pivot_row, j)] = tmp;
            }
            x.swap(col, pivot_row);
        }
        for i in (col + 1)..n {
            let f = m[(i, col)] / m[(col, col)];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[(i, j)] -= f * m[(col, j)];
            }
            x[i] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}

/// Solve an SPD system via Cholesky (normal equations, covariance solves).
pub fn solve_spd(a: &Mat, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let l = cholesky_psd(a, tol)?;
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let v = y[k];
            y[i] -= l[(i, k)] * v;
        }
        if l[(i, i)] == 0.0 {
            return Err(Error::Numerical("rank-deficient SPD solve".into()));
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = y[k];
            y[i] -= l[(k, i)] * v;
        }
        y[i] /= l[(i, i)];
    }
    Ok(y)
}

/// Spectral radius of a square (not necessarily symmetric) matrix via
/// normalized repeated squaring: rho(A) = lim ||A^m||^(1/m) with m = 2^s.
/// Deterministic and accurate to ~1e-9 for the small systems used here.
pub fn spectral_radius(a: &Mat) -> Result<f64> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!(
            "spectral radius of non-square {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut c = a.clone();
    // g approximates log rho; after s squarings it holds log(||A^(2^s)||_F) / 2^s.
    let norm0 = c.frobenius_norm();
    if norm0 == 0.0 {
        return Ok(0.0);
    }
    c = c.scale(1.0 / norm0);
    let mut g = norm0.ln();
    let mut half = 0.5;
    for _ in 0..48 {
        c = c.matmul(&c);
        let norm = c.frobenius_norm();
        if norm == 0.0 || !norm.is_finite() {
            // Nilpotent part dominated; radius is effectively zero.
            return Ok(0.0);
        }
        c = c.scale(1.0 / norm);
        g += norm.ln() * half;
        half *= 0.5;
    }
    Ok(g.exp())
}

/// Project a symmetric matrix to the nearest correlation matrix with
/// eigenvalues clamped at `floor`, then rescale to a unit diagonal.
pub fn nearest_psd_corr(a: &Mat, floor: f64) -> Result<Mat> {
    let n = a.rows();
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let (vals, vecs) = jacobi_eigen_sym(&sym)?;
    let clamped: Vec<f64> = vals.iter().map(|&v| v.max(floor)).collect();
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += vecs[(i, k)] * clamped[k] * vecs[(j, k)];
            }
            out[(i, j)] = s;
        }
    }
    let d: Vec<f64> = (0..n).map(|i| out[(i, i)].sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] /= d[i] * d[j];
        }
    }
    for i in 0..n {
        out[(i, i)] = 1.0;
    }
    Ok(out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
