//! Minimal row-major f64 matrix with the handful of operations the
//! training code needs. Multiplication parallelizes over output rows,
//! which keeps results bit-identical to the serial loop since each row
//! accumulates in the same order regardless of thread count.

use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

// Below this many multiply-adds the rayon dispatch overhead dominates.
const PAR_THRESHOLD: usize = 1 << 16;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} needs {} values", rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copy of the selected rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (dst, &src) in indices.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
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

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} by {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        let work = self.rows * self.cols * rhs.cols;
        if work >= PAR_THRESHOLD {
            out.data
                .par_chunks_mut(rhs.cols)
                .enumerate()
                .for_each(|(i, out_row)| Self::matmul_row(self.row(i), rhs, out_row));
        } else {
            for i in 0..self.rows {
                let (head, tail) = out.data.split_at_mut(i * rhs.cols);
                let _ = head;
                Self::matmul_row(self.row(i), rhs, &mut tail[..rhs.cols]);
            }
        }
        out
    }

    // out_row += Σ_k a_row[k] · rhs.row(k), accumulated in k order.
    fn matmul_row(a_row: &[f64], rhs: &Matrix, out_row: &mut [f64]) {
        for (k, &a) in a_row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let b_row = rhs.row(k);
            for (o, &b) in out_row.iter_mut().zip(b_row) {
                *o += a * b;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Per-column mean over rows.
    pub fn col_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, &v) in mean.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        for m in &mut mean {
            *m /= n;
        }
        mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn small_matmul() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn identity_matmul() {
        let mut rng = Rng::seeded(3);
        let a = Matrix::from_fn(7, 7, |_, _| rng.range(-1.0, 1.0));
        let eye = Matrix::from_fn(7, 7, |i, j| if i == j { 1.0 } else { 0.0 });
        assert_eq!(a.matmul(&eye).data(), a.data());
        assert_eq!(eye.matmul(&a).data(), a.data());
    }

    #[test]
    fn parallel_path_matches_serial_order() {
        // A matrix big enough to take the parallel path, multiplied by a
        // one-column rhs small enough to force the serial path when split.
        let mut rng = Rng::seeded(11);
        let a = Matrix::from_fn(64, 64, |_, _| rng.range(-1.0, 1.0));
        let b = Matrix::from_fn(64, 33, |_, _| rng.range(-1.0, 1.0));
        let big = a.matmul(&b); // 64*64*33 > threshold

        let mut expect = Matrix::zeros(64, 33);
        for i in 0..64 {
            for k in 0..64 {
                let av = a.get(i, k);
                for j in 0..33 {
                    let cur = expect.get(i, j);
                    expect.set(i, j, cur + av * b.get(k, j));
                }
            }
        }
        assert_eq!(big.data(), expect.data());
    }

    #[test]
    fn transpose_round_trip() {
        let mut rng = Rng::seeded(4);
        let a = Matrix::from_fn(5, 9, |_, _| rng.range(-2.0, 2.0));
        assert_eq!(a.transpose().transpose(), a);
        let t = a.transpose();
        assert_eq!(t.get(3, 2), a.get(2, 3));
    }

    #[test]
    fn select_rows_and_col_mean() {
        let a = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let picked = a.select_rows(&[2, 0]);
        assert_eq!(picked.data(), &[5.0, 6.0, 1.0, 2.0]);
        assert_eq!(a.col_mean(), vec![3.0, 4.0]);
    }

    #[test]
    #[should_panic(expected = "matmul shape mismatch")]
    fn shape_mismatch_panics() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let _ = a.matmul(&b);
    }
}
