//! Matrix storage shared by every solver stage.
//!
//! `A` is usually sparse and only ever touched through products and a
//! shifted factorization; `B` is a thin dense block.

use std::collections::BTreeMap;

use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef};

use crate::error::{LyapError, Result};
use crate::spectral::SpectrumInfo;

/// Compressed sparse row storage with summed duplicates and sorted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    SparseCoordinate(CsrMatrix),
    DenseColumnMajor(Mat<f64>),
}

/// A real matrix held either sparse or dense.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixHandle {
    rows: usize,
    cols: usize,
    storage: Storage,
}

impl MatrixHandle {
    /// Builds a sparse handle from 0-based coordinates. Duplicate positions are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LyapError::Dimension(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        let mut summed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, v) in entries {
            if i >= rows || j >= cols {
                return Err(LyapError::Dimension(format!(
                    "entry ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            *summed.entry((i, j)).or_insert(0.0) += v;
        }
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(summed.len());
        let mut values = Vec::with_capacity(summed.len());
        for (&(i, j), &v) in &summed {
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            rows,
            cols,
            storage: Storage::SparseCoordinate(CsrMatrix {
                nrows: rows,
                ncols: cols,
                row_ptr,
                col_idx,
                values,
            }),
        })
    }

    pub fn from_dense(mat: Mat<f64>) -> Self {
        Self {
            rows: mat.nrows(),
            cols: mat.ncols(),
            storage: Storage::DenseColumnMajor(mat),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::from_dense(Mat::from_fn(rows, cols, f))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::SparseCoordinate(_))
    }

    /// Stored entries: nonzeros for sparse storage, `rows * cols` for dense.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::SparseCoordinate(csr) => csr.nnz(),
            Storage::DenseColumnMajor(m) => m.nrows() * m.ncols(),
        }
    }

    pub fn as_dense(&self) -> Option<MatRef<'_, f64>> {
        match &self.storage {
            Storage::DenseColumnMajor(m) => Some(m.as_ref()),
            Storage::SparseCoordinate(_) => None,
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match &self.storage {
            Storage::DenseColumnMajor(m) => m.clone(),
            Storage::SparseCoordinate(csr) => {
                let mut out = Mat::zeros(self.rows, self.cols);
                for (i, j, v) in csr.triplets() {
                    out[(i, j)] += v;
                }
                out
            }
        }
    }

    /// Converts to dense storage in place of a sparse one.
    pub fn into_dense(self) -> Self {
        match self.storage {
            Storage::DenseColumnMajor(_) => self,
            Storage::SparseCoordinate(_) => Self::from_dense(self.to_dense()),
        }
    }

    /// Every stored entry as `(row, col, value)`, 0-based. Dense handles list all entries.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        match &self.storage {
            Storage::SparseCoordinate(csr) => csr.triplets().collect(),
            Storage::DenseColumnMajor(m) => (0..m.ncols())
                .flat_map(|j| (0..m.nrows()).map(move |i| (i, j, m[(i, j)])))
                .collect(),
        }
    }

    /// `self * x` for a dense block `x`.
    pub fn mul_dense(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(self.cols, x.nrows(), "mul_dense: inner dimension mismatch");
        match &self.storage {
            Storage::DenseColumnMajor(m) => m * x,
            Storage::SparseCoordinate(csr) => {
                let mut out = Mat::zeros(self.rows, x.ncols());
                for c in 0..x.ncols() {
                    let xc = x.col(c);
                    let mut oc = out.col_mut(c);
                    for i in 0..self.rows {
                        let mut acc = 0.0;
                        for (j, v) in csr.row(i) {
                            acc += v * xc[j];
                        }
                        oc[i] = acc;
                    }
                }
                out
            }
        }
    }

    /// `(self + shift * I) * x`.
    pub fn shifted_mul_dense(&self, shift: f64, x: MatRef<'_, f64>) -> Mat<f64> {
        let mut out = self.mul_dense(x);
        if shift != 0.0 {
            for c in 0..x.ncols() {
                for i in 0..x.nrows() {
                    out[(i, c)] += shift * x[(i, c)];
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        match &self.storage {
            Storage::DenseColumnMajor(m) => m.norm_l2(),
            Storage::SparseCoordinate(csr) => {
                csr.values.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
        }
    }

    /// `self + shift * I` as a faer sparse matrix, with explicit diagonal entries.
    pub(crate) fn shifted_sparse(&self, shift: f64) -> Result<SparseColMat<usize, f64>> {
        let mut diag_seen = vec![false; self.rows.min(self.cols)];
        let mut entries: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(self.nnz() + self.rows);
        for (i, j, v) in self.triplets() {
            let v = if i == j {
                diag_seen[i] = true;
                v + shift
            } else {
                v
            };
            entries.push(Triplet::new(i, j, v));
        }
        for (i, seen) in diag_seen.iter().enumerate() {
            if !seen {
                entries.push(Triplet::new(i, i, shift));
            }
        }
        SparseColMat::try_new_from_triplets(self.rows, self.cols, &entries)
            .map_err(|e| LyapError::Numeric(format!("sparse assembly failed: {e:?}")))
    }
}

/// The data `(A, B)` of `A P + P A^T = -B B^T`.
#[derive(Debug, Clone)]
pub struct StableSystem {
    a: MatrixHandle,
    b: MatrixHandle,
    stability_checked: bool,
}

impl StableSystem {
    /// Validates shapes. `B` is stored dense.
    pub fn new(a: MatrixHandle, b: MatrixHandle) -> Result<Self> {
        if !a.is_square() {
            return Err(LyapError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        if b.rows() != a.rows() {
            return Err(LyapError::Dimension(format!(
                "B has {} rows but A is {}x{}",
                b.rows(),
                a.rows(),
                a.cols()
            )));
        }
        Ok(Self {
            a,
            b: b.into_dense(),
            stability_checked: false,
        })
    }

    pub fn from_dense(a: Mat<f64>, b: Mat<f64>) -> Result<Self> {
        Self::new(MatrixHandle::from_dense(a), MatrixHandle::from_dense(b))
    }

    pub fn a(&self) -> &MatrixHandle {
        &self.a
    }

    pub fn b(&self) -> &MatrixHandle {
        &self.b
    }

    pub fn b_dense(&self) -> MatRef<'_, f64> {
        self.b.as_dense().expect("B is stored dense")
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn p(&self) -> usize {
        self.b.cols()
    }

    pub fn stability_checked(&self) -> bool {
        self.stability_checked
    }

    /// Marks the system stable after checking every available eigenvalue estimate.
    pub fn assert_stable(&mut self, spectrum: &SpectrumInfo) -> Result<()> {
        spectrum.check_stable()?;
        self.stability_checked = true;
        Ok(())
    }

    /// `||B B^T||_F`, computed from the `p x p` Gram matrix.
    pub fn rhs_norm(&self) -> f64 {
        let b = self.b_dense();
        let gram = b.transpose() * b;
        gram.norm_l2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = MatrixHandle::from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 2.0), (0, 0, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 2);
        let d = m.to_dense();
        assert_eq!(d[(0, 0)], 1.5);
        assert_eq!(d[(1, 1)], 2.0);
    }

    #[test]
    fn out_of_bounds_entry_rejected() {
        let err = MatrixHandle::from_triplets(2, 2, [(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, LyapError::Dimension(_)));
    }

    #[test]
    fn sparse_and_dense_products_agree() {
        let entries = [(0, 0, -2.0), (0, 2, 1.0), (1, 1, -3.0), (2, 0, 0.5), (2, 2, -1.0)];
        let s = MatrixHandle::from_triplets(3, 3, entries).unwrap();
        let d = MatrixHandle::from_dense(s.to_dense());
        let x = Mat::from_fn(3, 2, |i, j| (i + 2 * j) as f64 - 1.0);
        let ys = s.shifted_mul_dense(0.5, x.as_ref());
        let yd = d.shifted_mul_dense(0.5, x.as_ref());
        assert!((&ys - &yd).norm_l2() < 1e-14);
        assert!((s.frobenius_norm() - d.frobenius_norm()).abs() < 1e-14);
    }

    #[test]
    fn system_shape_checks() {
        let a = MatrixHandle::from_fn(2, 2, |i, j| if i == j { -1.0 } else { 0.0 });
        let b3 = MatrixHandle::from_fn(3, 1, |_, _| 1.0);
        assert!(matches!(StableSystem::new(a.clone(), b3), Err(LyapError::Dimension(_))));
        let rect = MatrixHandle::from_fn(2, 3, |_, _| 0.0);
        let b2 = MatrixHandle::from_fn(2, 1, |_, _| 1.0);
        assert!(matches!(StableSystem::new(rect, b2.clone()), Err(LyapError::NotSquare { .. })));
        let sys = StableSystem::new(a, b2).unwrap();
        assert!(!sys.stability_checked());
        assert!((sys.rhs_norm() - 2.0).abs() < 1e-15);
    }
}
