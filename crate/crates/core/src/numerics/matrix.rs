//! Dense row-major f64 matrices and the handful of kernels the tape needs.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major dense matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

// Below this many multiply-adds a parallel split costs more than it saves.
const PAR_FLOP_THRESHOLD: usize = 1 << 17;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{rows}x{cols}"),
                format!("data length {}", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::shape("Matrix::from_rows", c, format!("row {i} length {}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    /// A 1xN row matrix.
    pub fn row_vector(v: &[f64]) -> Self {
        Matrix {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    /// A 1x1 matrix.
    pub fn scalar(v: f64) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index and value of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(usize, f64)> {
        self.data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite())
            .map(|(i, &v)| (i, v))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn checked_add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        let data = self.data.iter().map(|v| v * c).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(matmul_nn(self, other))
    }

    /// `self * other^T`.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::shape(
                "matmul_transposed",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(matmul_nt(self, other))
    }

    fn zip_with(&self, op: &'static str, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

/// Matrix-vector product `W*x`.
///
/// Shift vectors are not applied here; they enter through the shifted
/// activation that follows each affine step.
pub fn affine(w: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if w.cols() != x.len() {
        return Err(Error::shape(
            "affine",
            format!("{}x{}", w.rows(), w.cols()),
            format!("vector length {}", x.len()),
        ));
    }
    Ok((0..w.rows())
        .map(|i| w.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
        .collect())
}

// C = A (m x k) * B (k x n). Accumulates along rows of B so every inner loop
// walks contiguous memory. Row-parallel: each output row has a fixed
// sequential accumulation order, so results are bit-reproducible.
pub(crate) fn matmul_nn(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols, b.rows);
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(m, n);

    let body = |i: usize, out_row: &mut [f64]| {
        let a_row = a.row(i);
        for (l, &aval) in a_row.iter().enumerate() {
            if aval == 0.0 {
                continue;
            }
            let b_row = b.row(l);
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aval * bv;
            }
        }
    };

    if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
        out.data
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for i in 0..m {
            let row = &mut out.data[i * n..(i + 1) * n];
            body(i, row);
        }
    }
    out
}

// C = A (m x k) * B^T with B (n x k): pairwise dots of contiguous rows.
pub(crate) fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols, b.cols);
    let (m, k, n) = (a.rows, a.cols, b.rows);
    let mut out = Matrix::zeros(m, n);

    let body = |i: usize, out_row: &mut [f64]| {
        let a_row = a.row(i);
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = b.row(j);
            *o = a_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
        }
    };

    if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
        out.data
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for i in 0..m {
            let row = &mut out.data[i * n..(i + 1) * n];
            body(i, row);
        }
    }
    out
}

// C = A^T * B with A (k x m), B (k x n): per output row i, accumulate
// a[l,i] * B[l,:] over l.
pub(crate) fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.rows, b.rows);
    let (k, m, n) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(m, n);

    let body = |i: usize, out_row: &mut [f64]| {
        for l in 0..k {
            let aval = a.data[l * m + i];
            if aval == 0.0 {
                continue;
            }
            let b_row = b.row(l);
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aval * bv;
            }
        }
    };

    if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
        out.data
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for i in 0..m {
            let row = &mut out.data[i * n..(i + 1) * n];
            body(i, row);
        }
    }
    out
}

/// Solves `A x = b` for symmetric positive-definite `A` via Cholesky.
///
/// `b` has one column per right-hand side. Fails with the offending pivot
/// when `A` is not positive definite.
pub fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape("cholesky_solve", format!("{}x{}", a.rows(), a.cols()), "square"));
    }
    if b.rows() != n {
        return Err(Error::shape("cholesky_solve", n, b.rows()));
    }

    // Lower-triangular factor, in place on a copy.
    let mut l = a.clone();
    for j in 0..n {
        let mut d = l.get(j, j);
        for k in 0..j {
            let v = l.get(j, k);
            d -= v * v;
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::RankDeficient { row: j, pivot: d });
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in (j + 1)..n {
            let mut s = l.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }

    let mut x = b.clone();
    let r = x.cols();
    // Forward solve L y = b.
    for i in 0..n {
        for c in 0..r {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    // Back solve L^T x = y.
    for i in (0..n).rev() {
        for c in 0..r {
            let mut s = x.get(i, c);
            for k in (i + 1)..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_and_zero() {
        let eye = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(affine(&eye, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);

        let zero = Matrix::zeros(3, 2);
        assert_eq!(affine(&zero, &[5.0, -7.0]).unwrap(), vec![0.0; 3]);

        let w = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(affine(&w, &[1.0, 2.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn affine_reports_both_shapes() {
        let w = Matrix::zeros(2, 3);
        let err = affine(&w, &[1.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("1"), "{msg}");
    }

    #[test]
    fn matmul_variants_agree_with_naive() {
        let mut rng = crate::rng::seeded(11);
        use rand::Rng as _;
        for &(m, k, n) in &[(1usize, 1usize, 1usize), (3, 4, 2), (8, 5, 7), (70, 33, 41)] {
            let a = Matrix::from_vec(m, k, (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let b = Matrix::from_vec(k, n, (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let c = matmul_nn(&a, &b);
            let c_nt = matmul_nt(&a, &b.transpose());
            let c_tn = matmul_tn(&a.transpose(), &b);
            let mut naive = Matrix::zeros(m, n);
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for l in 0..k {
                        s += a.get(i, l) * b.get(l, j);
                    }
                    naive.set(i, j, s);
                }
            }
            for i in 0..m * n {
                assert!((c.data()[i] - naive.data()[i]).abs() < 1e-12);
                assert!((c_nt.data()[i] - naive.data()[i]).abs() < 1e-12);
                assert!((c_tn.data()[i] - naive.data()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = M^T M + I is SPD.
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![-1.0, 0.3, 2.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let mut a = matmul_tn(&m, &m);
        for i in 0..3 {
            a.set(i, i, a.get(i, i) + 1.0);
        }
        let x_true = Matrix::from_vec(3, 1, vec![0.5, -1.5, 2.0]).unwrap();
        let b = a.matmul(&x_true).unwrap();
        let x = cholesky_solve(&a, &b).unwrap();
        for i in 0..3 {
            assert!((x.get(i, 0) - x_true.get(i, 0)).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky_solve(&a, &Matrix::zeros(2, 1)), Err(Error::RankDeficient { .. })));
    }
}
