//! Dense row-major f64 tensors and the numeric kernels shared by the
//! autodiff tape and the value-only forward paths.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("dimension mismatch: {op} with shapes {lhs:?} and {rhs:?}")]
    Mismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Dense tensor, row-major. Only rank 1 and 2 are used in practice; a rank-1
/// tensor of length c behaves like a 1 x c matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::new(vec![rows, cols], vec![0.0; rows * cols])
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1, 1], vec![v])
    }

    pub fn row_vec(v: Vec<f64>) -> Self {
        Tensor::new(vec![1, v.len()], v)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows when viewed as a matrix (rank-1 tensors are a single row).
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            1 => self.shape[0],
            _ => panic!("tensor of rank {} has no column count", self.shape.len()),
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows() == other.rows() && self.cols() == other.cols()
    }

    // ---- kernels -------------------------------------------------------

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(ShapeError::Mismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        // i-k-j order keeps the inner loop contiguous in both inputs.
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        Ok(Tensor::new(vec![m, n], out))
    }

    pub fn zip(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, ShapeError> {
        if !self.same_shape(other) {
            return Err(ShapeError::Mismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(Tensor::new(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip(other, "mul", |a, b| a * b)
    }

    /// Broadcast-add a 1 x C row to every row of an R x C matrix.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor, ShapeError> {
        if row.rows() != 1 || row.cols() != self.cols() {
            return Err(ShapeError::Mismatch {
                op: "add_row",
                lhs: self.shape.clone(),
                rhs: row.shape.clone(),
            });
        }
        let c = self.cols();
        let mut out = self.data.clone();
        for r in 0..self.rows() {
            for j in 0..c {
                out[r * c + j] += row.data[j];
            }
        }
        Ok(Tensor::new(self.shape.clone(), out))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.iter().map(|v| f(*v)).collect())
    }

    /// k * x + c elementwise.
    pub fn affine(&self, k: f64, c: f64) -> Tensor {
        self.map(|v| k * v + c)
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, ShapeError> {
        assert!(!parts.is_empty());
        let r = parts[0].rows();
        for p in parts {
            if p.rows() != r {
                return Err(ShapeError::Mismatch {
                    op: "concat_cols",
                    lhs: parts[0].shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
        }
        let total: usize = parts.iter().map(|p| p.cols()).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                out.extend_from_slice(p.row(i));
            }
        }
        Ok(Tensor::new(vec![r, total], out))
    }

    /// Numerically stable softmax along the given axis (0 = down columns,
    /// 1 = along rows).
    pub fn softmax(&self, axis: usize) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        match axis {
            1 => {
                for i in 0..r {
                    softmax_slice(self.row(i), &mut out[i * c..(i + 1) * c]);
                }
            }
            0 => {
                let mut col = vec![0.0; r];
                let mut sm = vec![0.0; r];
                for j in 0..c {
                    for i in 0..r {
                        col[i] = self.at(i, j);
                    }
                    softmax_slice(&col, &mut sm);
                    for i in 0..r {
                        out[i * c + j] = sm[i];
                    }
                }
            }
            _ => panic!("softmax axis must be 0 or 1"),
        }
        Tensor::new(self.shape.clone(), out)
    }

    /// Per-row column pick: out[r, 0] = self[r, idx[r]].
    pub fn pick_per_row(&self, idx: &[usize]) -> Tensor {
        assert_eq!(idx.len(), self.rows());
        let data = idx
            .iter()
            .enumerate()
            .map(|(r, &j)| self.at(r, j))
            .collect();
        Tensor::new(vec![self.rows(), 1], data)
    }

    /// Copy the given rows into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Tensor {
        let c = self.cols();
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            out.extend_from_slice(self.row(r));
        }
        Tensor::new(vec![rows.len(), c], out)
    }

    pub fn sum_rows(&self) -> Tensor {
        let data = (0..self.rows())
            .map(|r| self.row(r).iter().sum())
            .collect();
        Tensor::new(vec![self.rows(), 1], data)
    }

    pub fn sum_all(&self) -> Tensor {
        Tensor::scalar(self.data.iter().sum())
    }

    pub fn mean_all(&self) -> Tensor {
        Tensor::scalar(self.data.iter().sum::<f64>() / self.data.len() as f64)
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "reshape {:?} -> {:?}",
            self.shape,
            shape
        );
        Tensor::new(shape, self.data.clone())
    }

    /// Per-row batched bilinear product. `self` is B x n, `w` is
    /// B x (n*h) holding one n x h matrix per row; output is B x h.
    pub fn rowwise_bmm(&self, w: &Tensor, n: usize, h: usize) -> Tensor {
        let b = self.rows();
        assert_eq!(self.cols(), n);
        assert_eq!(w.rows(), b);
        assert_eq!(w.cols(), n * h);
        let mut out = vec![0.0; b * h];
        for r in 0..b {
            let q = self.row(r);
            let wr = w.row(r);
            let orow = &mut out[r * h..(r + 1) * h];
            for i in 0..n {
                let qi = q[i];
                if qi == 0.0 {
                    continue;
                }
                let wslice = &wr[i * h..(i + 1) * h];
                for j in 0..h {
                    orow[j] += qi * wslice[j];
                }
            }
        }
        Tensor::new(vec![b, h], out)
    }
}

pub(crate) fn softmax_slice(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(x.iter()) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let eye = Tensor::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let m = Tensor::from_rows(vec![
            vec![3.0, -1.0, 2.5],
            vec![0.0, 7.0, 1.0],
            vec![4.0, 4.0, -2.0],
        ]);
        assert_eq!(eye.matmul(&m).unwrap(), m);
    }

    #[test]
    fn hand_computed_matmul() {
        let a = Tensor::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Tensor::from_rows(vec![vec![1.0], vec![1.0]]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_reference() {
        // Independent triple-loop oracle over a random 5x7 * 7x2 product.
        let mut v = 0.37;
        let mut next = || {
            v = (v * 9301.0 + 49297.0) % 233280.0;
            v / 233280.0 - 0.5
        };
        let a = Tensor::new(vec![5, 7], (0..35).map(|_| next()).collect());
        let b = Tensor::new(vec![7, 2], (0..14).map(|_| next()).collect());
        let c = a.matmul(&b).unwrap();
        for i in 0..5 {
            for j in 0..2 {
                let mut s = 0.0;
                for p in 0..7 {
                    s += a.at(i, p) * b.at(p, j);
                }
                assert!((c.at(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_error_reports_both_shapes() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(4, 2);
        let err = a.matmul(&b).unwrap_err();
        match err {
            ShapeError::Mismatch { lhs, rhs, .. } => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![4, 2]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn softmax_symmetry_and_shift_invariance() {
        let t = Tensor::row_vec(vec![0.0, 0.0]);
        let s = t.softmax(1);
        assert!((s.data()[0] - 0.5).abs() < 1e-12);
        let big = Tensor::row_vec(vec![1000.0, 1000.0]);
        let s = big.softmax(1);
        assert!(s.all_finite());
        assert!((s.data()[0] - 0.5).abs() < 1e-12);
        let t = Tensor::row_vec(vec![0.0, 3.0_f64.ln()]);
        let s = t.softmax(1);
        assert!((s.data()[0] - 0.25).abs() < 1e-12);
        assert!((s.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let t = Tensor::from_rows(vec![vec![1.0, -2.0, 0.5], vec![10.0, 10.0, 10.0]]);
        let s = t.softmax(1);
        for r in 0..2 {
            let sum: f64 = s.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(s.row(r).iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn rowwise_bmm_matches_loop() {
        let q = Tensor::from_rows(vec![vec![1.0, 2.0], vec![-1.0, 0.5]]);
        let w = Tensor::from_rows(vec![
            vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0],
            vec![0.5, 0.5, 0.5, 1.0, 1.0, 1.0],
        ]);
        let out = q.rowwise_bmm(&w, 2, 3);
        // row 0: q = [1,2], w = [[1,0,0],[1,2,0]] -> [3,4,0]
        assert_eq!(out.row(0), &[3.0, 4.0, 0.0]);
        // row 1: q = [-1,0.5], w = [[.5,.5,.5],[1,1,1]] -> [0,0,0]
        assert_eq!(out.row(1), &[0.0, 0.0, 0.0]);
    }
}
