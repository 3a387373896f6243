//! Dense matrices over a [`Field`].

use thiserror::Error;

use crate::galois::{Elem, Field};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinalgError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is singular")]
    Singular,
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Elem>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![Elem::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Elem::ONE);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Elem>>) -> Result<Matrix, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::Shape("ragged rows".into()));
        }
        Ok(Matrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// `rows x cols` Vandermonde matrix with row i = (1, x_i, ..., x_i^(cols-1)).
    pub fn vandermonde(field: &Field, points: &[Elem], cols: usize) -> Matrix {
        let mut m = Matrix::zeros(points.len(), cols);
        for (i, &x) in points.iter().enumerate() {
            let mut acc = Elem::ONE;
            for j in 0..cols {
                m.set(i, j, acc);
                acc = field.mul(acc, x);
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Elem {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Elem) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Elem] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Elem> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|e| e.is_zero())
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Sub-matrix made of the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(rows.len(), self.cols);
        for (k, &r) in rows.iter().enumerate() {
            out.data[k * self.cols..(k + 1) * self.cols].copy_from_slice(self.row(r));
        }
        out
    }

    pub fn mul(&self, field: &Field, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::Shape(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..rhs.cols {
                    let v = field.add(out.get(r, c), field.mul(a, rhs.get(k, c)));
                    out.set(r, c, v);
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix.
    pub fn left_mul_vec(&self, field: &Field, v: &[Elem]) -> Vec<Elem> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![Elem::ZERO; self.cols];
        for (r, &a) in v.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o = field.add(*o, field.mul(a, self.get(r, c)));
            }
        }
        out
    }

    /// Matrix times column vector.
    pub fn mul_vec(&self, field: &Field, v: &[Elem]) -> Vec<Elem> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| field.dot(self.row(r), v)).collect()
    }

    /// Solves `self * X = rhs` for square `self` by Gauss-Jordan elimination.
    pub fn solve(&self, field: &Field, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        if self.rows != self.cols || rhs.rows != self.rows {
            return Err(LinalgError::Shape(format!(
                "solve {}x{} with rhs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let n = self.rows;
        let w = n + rhs.cols;
        let mut aug = Matrix::zeros(n, w);
        for r in 0..n {
            for c in 0..n {
                aug.set(r, c, self.get(r, c));
            }
            for c in 0..rhs.cols {
                aug.set(r, n + c, rhs.get(r, c));
            }
        }
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| !aug.get(r, col).is_zero())
                .ok_or(LinalgError::Singular)?;
            if pivot != col {
                for c in 0..w {
                    aug.data.swap(pivot * w + c, col * w + c);
                }
            }
            let inv = field
                .inv(aug.get(col, col))
                .map_err(|_| LinalgError::Singular)?;
            for c in col..w {
                aug.set(col, c, field.mul(aug.get(col, c), inv));
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = aug.get(r, col);
                if factor.is_zero() {
                    continue;
                }
                for c in col..w {
                    let v = field.sub(aug.get(r, c), field.mul(factor, aug.get(col, c)));
                    aug.set(r, c, v);
                }
            }
        }
        let mut out = Matrix::zeros(n, rhs.cols);
        for r in 0..n {
            for c in 0..rhs.cols {
                out.set(r, c, aug.get(r, n + c));
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, field: &Field) -> Result<Matrix, LinalgError> {
        self.solve(field, &Matrix::identity(self.rows))
    }

    pub fn rank(&self, field: &Field) -> usize {
        let mut m = self.clone();
        let mut rank = 0;
        for col in 0..m.cols {
            let Some(pivot) = (rank..m.rows).find(|&r| !m.get(r, col).is_zero()) else {
                continue;
            };
            for c in 0..m.cols {
                m.data.swap(pivot * m.cols + c, rank * m.cols + c);
            }
            let inv = field.inv(m.get(rank, col)).expect("pivot is nonzero");
            for r in rank + 1..m.rows {
                let factor = field.mul(m.get(r, col), inv);
                if factor.is_zero() {
                    continue;
                }
                for c in col..m.cols {
                    let v = field.sub(m.get(r, c), field.mul(factor, m.get(rank, c)));
                    m.set(r, c, v);
                }
            }
            rank += 1;
        }
        rank
    }
}
