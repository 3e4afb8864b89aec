//! Small dense/sparse linear-algebra kernels used by the smooth terms.
//!
//! Vectors are plain `&[f64]` slices. Matrices come in two storage flavours:
//! row-major dense and compressed sparse rows. Both expose the same row-slab
//! operations since block gradients only ever touch the rows of one block.

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, Error> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "dense matrix {}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, Error> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Dimension(format!("row {i} has {} entries, expected {c}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, self.row(i), &mut out);
        }
        out
    }

    /// `AᵀA`, exactly symmetric.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        // row-major A is column-major Aᵀ
        let at = nalgebra::DMatrixView::from_slice(&self.data, n, self.rows);
        let g = at * at.transpose();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = g[(i, j)];
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from coordinate triplets; duplicate entries are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        ri: &[usize],
        ci: &[usize],
        vals: &[f64],
    ) -> Result<Self, Error> {
        if ri.len() != ci.len() || ri.len() != vals.len() {
            return Err(Error::Dimension("triplet arrays differ in length".into()));
        }
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(vals.len());
        for ((&r, &c), &v) in ri.iter().zip(ci).zip(vals) {
            if r >= rows || c >= cols {
                return Err(Error::Dimension(format!("triplet ({r},{c}) outside {rows}x{cols}")));
            }
            entries.push((r, c, v));
        }
        entries.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self { rows, cols, indptr, indices, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[s..e].iter().zip(&self.values[s..e]).map(|(&j, v)| v * x[j]).sum()
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[s..e].iter().copied().zip(self.values[s..e].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[s..e].binary_search(&j) {
            Ok(p) => self.values[s + p],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut ri = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            ri.extend(std::iter::repeat_n(r, self.row_nnz(r)));
        }
        (ri, self.indices.clone(), self.values.clone())
    }
}

/// Matrix with either storage. Serialized as nested arrays (dense) or as
/// `{rows, cols, vals, shape}` triplets (sparse).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Dense(Vec<Vec<f64>>),
    Triplets {
        rows: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<[usize; 2]>,
    },
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self, Error> {
        match r {
            MatrixRepr::Dense(rows) => Ok(Matrix::Dense(DenseMatrix::from_rows(&rows)?)),
            MatrixRepr::Triplets { rows, cols, vals, shape } => {
                let [nr, nc] = shape.unwrap_or_else(|| {
                    [
                        rows.iter().max().map_or(0, |m| m + 1),
                        cols.iter().max().map_or(0, |m| m + 1),
                    ]
                });
                Ok(Matrix::Sparse(CsrMatrix::from_triplets(nr, nc, &rows, &cols, &vals)?))
            }
        }
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        match m {
            Matrix::Dense(d) => MatrixRepr::Dense(d.to_rows()),
            Matrix::Sparse(s) => {
                let shape = Some([s.rows, s.cols]);
                let (rows, cols, vals) = s.triplets();
                MatrixRepr::Triplets { rows, cols, vals, shape }
            }
        }
    }
}

impl Matrix {
    pub fn rows(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.rows(),
            Matrix::Sparse(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.cols(),
            Matrix::Sparse(s) => s.cols(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Matrix::Dense(d) => d.get(i, j),
            Matrix::Sparse(s) => s.get(i, j),
        }
    }

    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        match self {
            Matrix::Dense(d) => dot(d.row(i), x),
            Matrix::Sparse(s) => s.row_dot(i, x),
        }
    }

    /// Number of stored entries in row `i`; the per-row work of a product.
    pub fn row_cost(&self, i: usize) -> usize {
        match self {
            Matrix::Dense(d) => d.cols(),
            Matrix::Sparse(s) => s.row_nnz(i),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows()).map(|i| self.row_dot(i, x)).collect()
    }

    /// Dense copy of the square sub-block `rows × cols` given by two ranges.
    pub fn sub_block(&self, r: std::ops::Range<usize>, c: std::ops::Range<usize>) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(r.len(), c.len());
        for (oi, i) in r.clone().enumerate() {
            match self {
                Matrix::Dense(d) => {
                    for (oj, j) in c.clone().enumerate() {
                        out.set(oi, oj, d.get(i, j));
                    }
                }
                Matrix::Sparse(s) => {
                    for (j, v) in s.row_entries(i) {
                        if c.contains(&j) {
                            out.set(oi, j - c.start, v);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows() != self.cols() {
            return false;
        }
        match self {
            Matrix::Dense(d) => {
                let n = d.rows();
                (0..n).all(|i| (0..i).all(|j| (d.get(i, j) - d.get(j, i)).abs() <= tol * (1.0 + d.get(i, j).abs())))
            }
            Matrix::Sparse(s) => (0..s.rows()).all(|i| {
                s.row_entries(i).all(|(j, v)| (s.get(j, i) - v).abs() <= tol * (1.0 + v.abs()))
            }),
        }
    }
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
///
/// Stops once the Rayleigh quotient changes by less than `tol` relative.
pub fn power_iteration<F>(n: usize, apply: F, tol: f64, max_iter: usize) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if n == 0 {
        return 0.0;
    }
    // deterministic, not aligned with any coordinate axis
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).sin()).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = apply(&v);
        let next = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / nw).collect();
        if (next - lambda).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            return next.max(lambda);
        }
        lambda = next;
    }
    lambda
}

/// Extreme eigenvalues `(min, max)` of a small dense symmetric matrix.
pub fn sym_eig_extremes(m: &DenseMatrix) -> (f64, f64) {
    let n = m.rows();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let eig = nalgebra::SymmetricEigen::new(mat);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_roundtrip() {
        let m = CsrMatrix::from_triplets(2, 3, &[0, 1, 0, 0], &[2, 0, 2, 1], &[1.0, 2.0, 3.0, -1.0]).unwrap();
        assert_eq!(m.get(0, 2), 4.0);
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.row_dot(0, &[1.0, 1.0, 1.0]), 3.0);
        let json = serde_json::to_string(&Matrix::Sparse(m.clone())).unwrap();
        let back: Matrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Matrix::Sparse(m));
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]]).unwrap();
        let lmax = power_iteration(3, |v| a.matvec(v), 1e-12, 10_000);
        let (_, emax) = sym_eig_extremes(&a);
        assert!((lmax - emax).abs() < 1e-8, "{lmax} vs {emax}");
    }

    #[test]
    fn gram_is_ata() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![0.5, -1.0]]).unwrap();
        let g = a.gram();
        assert_eq!(g.get(0, 0), 1.0 + 9.0 + 0.25);
        assert_eq!(g.get(0, 1), 2.0 + 12.0 - 0.5);
        assert_eq!(g.get(1, 0), g.get(0, 1));
    }
}
