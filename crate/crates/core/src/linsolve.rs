//! Sparse direct linear algebra: triplet assembly and LU factorization
//! with forward and transpose solves (the latter drives the adjoint).

use crate::error::{Error, Result};
use faer::linalg::solvers::SolveCore;
use faer::sparse::{SparseColMat, Triplet};

/// Triplet accumulator for a square system. Duplicate entries are summed
/// at factorization time; insertion order is deterministic.
#[derive(Debug, Clone)]
pub struct TripletMatrix {
    pub n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletMatrix {
    pub fn new(n: usize) -> Self {
        TripletMatrix { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        TripletMatrix { n, entries: Vec::with_capacity(cap) }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n && col < self.n);
        if val != 0.0 {
            self.entries.push(Triplet::new(row, col, val));
        }
    }

    pub fn nnz_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Triplet<usize, usize, f64>] {
        &self.entries
    }

    /// Summed coefficient at (row, col); linear scan, test use only.
    pub fn coeff(&self, row: usize, col: usize) -> f64 {
        self.entries
            .iter()
            .filter(|t| t.row == row && t.col == col)
            .map(|t| t.val)
            .sum()
    }

    /// Sum of duplicate entries on the diagonal, per row.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for t in &self.entries {
            if t.row == t.col {
                d[t.row] += t.val;
            }
        }
        d
    }

    /// Factor `A + beta * diag(extra)`.
    pub fn factor_damped(&self, beta: f64, diag: &[f64]) -> Result<LuFactors> {
        let mut entries = self.entries.clone();
        if beta != 0.0 {
            for (i, &d) in diag.iter().enumerate() {
                entries.push(Triplet::new(i, i, beta * d));
            }
        }
        let mat = SparseColMat::try_new_from_triplets(self.n, self.n, &entries)
            .map_err(|e| Error::LinearSolve(format!("assembly failed: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::LinearSolve(format!("LU factorization failed: {e:?}")))?;
        Ok(LuFactors { lu, n: self.n })
    }

    pub fn factor(&self) -> Result<LuFactors> {
        self.factor_damped(0.0, &[])
    }

    /// Dense matrix-vector product `A x` (test and diagnostics use).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for t in &self.entries {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    /// Transposed product `A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for t in &self.entries {
            y[t.col] += t.val * x[t.row];
        }
        y
    }
}

/// Factorized sparse LU.
pub struct LuFactors {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl LuFactors {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut m = faer::Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu
            .solve_in_place_with_conj(faer::Conj::No, m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    pub fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let mut m = faer::Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu
            .solve_transpose_in_place_with_conj(faer::Conj::No, m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_small_system_with_duplicates() {
        // A = [[4, 1], [2, 3]] assembled with split entries
        let mut a = TripletMatrix::new(2);
        a.push(0, 0, 3.0);
        a.push(0, 0, 1.0);
        a.push(0, 1, 1.0);
        a.push(1, 0, 2.0);
        a.push(1, 1, 3.0);
        let f = a.factor().unwrap();
        let x = f.solve(&[5.0, 5.0]);
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(x[1], 1.0, max_relative = 1e-14);
        let y = a.matvec(&x);
        assert_relative_eq!(y[0], 5.0, max_relative = 1e-14);
    }

    #[test]
    fn transpose_solve() {
        let mut a = TripletMatrix::new(2);
        a.push(0, 0, 4.0);
        a.push(0, 1, 1.0);
        a.push(1, 1, 3.0);
        let f = a.factor().unwrap();
        // A^T x = b with A upper triangular
        let x = f.solve_transpose(&[4.0, 7.0]);
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(x[1], 2.0, max_relative = 1e-14);
        let y = a.matvec_transpose(&x);
        assert_relative_eq!(y[1], 7.0, max_relative = 1e-14);
    }

    #[test]
    fn damping_shifts_diagonal() {
        let mut a = TripletMatrix::new(2);
        a.push(0, 0, 1.0);
        a.push(1, 1, 2.0);
        let d = a.diagonal();
        let f = a.factor_damped(0.5, &d).unwrap();
        let x = f.solve(&[3.0, 6.0]);
        assert_relative_eq!(x[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(x[1], 2.0, max_relative = 1e-14);
    }

    #[test]
    fn singular_matrix_reports_error() {
        let mut a = TripletMatrix::new(2);
        a.push(0, 0, 1.0);
        a.push(1, 0, 1.0);
        // column 1 empty -> structurally singular
        let r = a.factor();
        match r {
            Err(Error::LinearSolve(_)) => {}
            Ok(f) => {
                // some LU backends factor structurally singular matrices
                // and produce non-finite solutions instead
                let x = f.solve(&[1.0, 1.0]);
                assert!(x.iter().any(|v| !v.is_finite() || v.abs() > 1e12));
            }
            Err(e) => panic!("unexpected error kind: {e:?}"),
        }
    }
}
