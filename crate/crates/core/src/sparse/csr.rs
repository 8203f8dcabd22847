use crate::error::{Error, Result};

/// Coordinate-format accumulator for a square matrix.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn extend(&mut self, other: Triplets) {
        self.entries.extend(other.entries);
    }

    /// Sums duplicates and compresses into row storage.
    pub fn finalize(self) -> Result<SparseMatrix> {
        let n = self.n;
        let mut counts = vec![0usize; n + 1];
        for &(r, c, _) in &self.entries {
            if r >= n || c >= n {
                return Err(Error::IndexOutOfRange { row: r, col: c, n });
            }
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; self.entries.len()];
        let mut vals = vec![0.0; self.entries.len()];
        let mut next = counts.clone();
        for (r, c, v) in self.entries {
            let p = next[r];
            cols[p] = c;
            vals[p] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(cols.len());
        let mut values = Vec::with_capacity(cols.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..n {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|p| (cols[p], vals[p])));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }
}

/// Square matrix in compressed sparse row storage with sorted,
/// duplicate-free column indices in each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "vector length");
        (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum()
            })
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.mul_vec(y)).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let n = self.n;
        let mut counts = vec![0usize; n + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let p = next[j];
                col_idx[p] = i;
                values[p] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            n,
            row_ptr: counts,
            col_idx,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - Aᵀ| <= rel_tol * max |A|`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let t = self.transpose();
        let scale = self.max_abs();
        let diff = self.add_scaled(1.0, &t, -1.0).expect("same dimension");
        diff.max_abs() <= rel_tol * scale
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `diag(rows) * self * diag(cols)`.
    pub fn scale_rows_cols(&self, rows: &[f64], cols: &[f64]) -> Result<SparseMatrix> {
        if rows.len() != self.n || cols.len() != self.n {
            return Err(Error::Dimension(format!(
                "scaling vectors of length {} and {} for a {1}x{1} matrix",
                rows.len(),
                self.n
            )));
        }
        let mut out = self.clone();
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[p] *= rows[i] * cols[self.col_idx[p]];
            }
        }
        Ok(out)
    }

    /// `a * self + b * other`, merging the sparsity patterns.
    pub fn add_scaled(&self, a: f64, other: &SparseMatrix, b: f64) -> Result<SparseMatrix> {
        if self.n != other.n {
            return Err(Error::Dimension(format!(
                "cannot add {0}x{0} and {1}x{1} matrices",
                self.n, other.n
            )));
        }
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(col_idx.capacity());
        row_ptr.push(0);
        for i in 0..self.n {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let next_a = ca.get(p).copied().unwrap_or(usize::MAX);
                let next_b = cb.get(q).copied().unwrap_or(usize::MAX);
                if next_a == next_b {
                    col_idx.push(next_a);
                    values.push(a * va[p] + b * vb[q]);
                    p += 1;
                    q += 1;
                } else if next_a < next_b {
                    col_idx.push(next_a);
                    values.push(a * va[p]);
                    p += 1;
                } else {
                    col_idx.push(next_b);
                    values.push(b * vb[q]);
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Linear combination `Σ c_k A_k` of matrices of equal dimension.
    pub fn combine(terms: &[(f64, &SparseMatrix)]) -> Result<SparseMatrix> {
        let (first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::Dimension("empty linear combination".into()))?;
        let mut acc = first.1.scaled(first.0);
        for (c, m) in rest {
            acc = acc.add_scaled(1.0, m, *c)?;
        }
        Ok(acc)
    }

    /// Appends the entries of this matrix, shifted by `(row_off, col_off)`,
    /// to a triplet list.
    pub fn push_into(&self, out: &mut Triplets, row_off: usize, col_off: usize) {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out.push(i + row_off, j + col_off, v);
            }
        }
    }

    /// Dense row-major copy, for small diagnostics and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }
}

/// Sums duplicate triplets and compresses them.
pub fn finalize(triplets: Triplets) -> Result<SparseMatrix> {
    triplets.finalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_zero() {
        let m = Triplets::new(3).finalize().unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0]), vec![0.0; 3]);
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = Triplets::new(2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 1.0);
        t.push(1, 0, 3.0);
        let m = t.finalize().unwrap();
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn out_of_range_rejected() {
        let mut t = Triplets::new(2);
        t.push(2, 0, 1.0);
        assert!(matches!(
            t.finalize(),
            Err(Error::IndexOutOfRange { row: 2, col: 0, n: 2 })
        ));
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let mut a = Triplets::new(2);
        a.push(0, 1, 2.0);
        let mut b = Triplets::new(2);
        b.push(0, 0, 1.0);
        b.push(0, 1, 1.0);
        let c = a
            .finalize()
            .unwrap()
            .add_scaled(1.0, &b.finalize().unwrap(), -2.0)
            .unwrap();
        assert_eq!(c.to_dense(), vec![vec![-2.0, 0.0], vec![0.0, 0.0]]);
    }

    fn dense_from(n: usize, entries: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; n]; n];
        for &(i, j, v) in entries {
            d[i][j] += v;
        }
        d
    }

    proptest! {
        #[test]
        fn matvec_matches_dense_oracle(
            entries in proptest::collection::vec((0usize..50, 0usize..50, -10.0f64..10.0), 0..400),
            x in proptest::collection::vec(-1.0f64..1.0, 50),
        ) {
            let mut t = Triplets::new(50);
            for &(i, j, v) in &entries {
                t.push(i, j, v);
            }
            let m = t.finalize().unwrap();
            let d = dense_from(50, &entries);
            let y = m.mul_vec(&x);
            for i in 0..50 {
                let want: f64 = (0..50).map(|j| d[i][j] * x[j]).sum();
                let scale: f64 = (0..50).map(|j| (d[i][j] * x[j]).abs()).sum();
                prop_assert!((y[i] - want).abs() <= 1e-13 * (1.0 + scale));
            }
            for i in 0..50 {
                let (cols, _) = m.row(i);
                prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
            }
            prop_assert_eq!(m.transpose().transpose(), m);
        }
    }
}
