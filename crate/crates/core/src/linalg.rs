use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues sorted ascending and
/// eigenvectors (columns) reordered to match.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let cols: Vec<DVector<f64>> = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        let vectors = if cols.is_empty() {
            DMatrix::zeros(m.nrows(), 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Self { values, vectors }
    }

    /// Eigenvectors whose eigenvalue passes `keep`, as columns.
    pub fn select(&self, keep: impl Fn(f64) -> bool) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| keep(**v))
            .map(|(i, _)| self.vectors.column(i).into_owned())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(self.vectors.nrows(), 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_values_and_vectors() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]);
        let e = SortedEigen::new(&m);
        assert!(e.values[0].abs() < 1e-14);
        assert!((e.values[1] - 4.0).abs() < 1e-14);
        let v0 = e.vectors.column(0);
        assert!((v0[0].abs() - v0[1].abs()).abs() < 1e-14);
        let kernel = e.select(|v| v < 1.0);
        assert_eq!(kernel.ncols(), 1);
    }

    #[test]
    fn op_norm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -3.0]));
        assert_eq!(sym_op_norm(&m), 3.0);
    }
}
