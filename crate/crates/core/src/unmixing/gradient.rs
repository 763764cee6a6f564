//! First-order spatial differences of abundance maps.
//!
//! For an `R × N` matrix whose columns are pixels of an `N1 × N2` image
//! (`n = n1 + N1·n2`), the horizontal operator differences along `n2` and the
//! vertical one along `n1`. The last difference in each direction is zero,
//! which is the same as replicate padding.

use nalgebra::DMatrix;

/// Horizontal forward differences: `out[:, (n1,n2)] = a[:, (n1,n2+1)] − a[:, (n1,n2)]`.
pub fn horizontal(a: &DMatrix<f64>, n1: usize, n2: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for b in 0..n2.saturating_sub(1) {
        for i in 0..n1 {
            let n = i + n1 * b;
            let next = n + n1;
            for k in 0..a.nrows() {
                out[(k, n)] = a[(k, next)] - a[(k, n)];
            }
        }
    }
    out
}

/// Vertical forward differences: `out[:, (n1,n2)] = a[:, (n1+1,n2)] − a[:, (n1,n2)]`.
pub fn vertical(a: &DMatrix<f64>, n1: usize, n2: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for b in 0..n2 {
        for i in 0..n1.saturating_sub(1) {
            let n = i + n1 * b;
            for k in 0..a.nrows() {
                out[(k, n)] = a[(k, n + 1)] - a[(k, n)];
            }
        }
    }
    out
}

/// Adjoint of [`horizontal`].
pub fn horizontal_adjoint(y: &DMatrix<f64>, n1: usize, n2: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for b in 0..n2.saturating_sub(1) {
        for i in 0..n1 {
            let n = i + n1 * b;
            for k in 0..y.nrows() {
                out[(k, n + n1)] += y[(k, n)];
                out[(k, n)] -= y[(k, n)];
            }
        }
    }
    out
}

/// Adjoint of [`vertical`].
pub fn vertical_adjoint(y: &DMatrix<f64>, n1: usize, n2: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for b in 0..n2 {
        for i in 0..n1.saturating_sub(1) {
            let n = i + n1 * b;
            for k in 0..y.nrows() {
                out[(k, n + 1)] += y[(k, n)];
                out[(k, n)] -= y[(k, n)];
            }
        }
    }
    out
}

/// Number of nonzero difference terms touching each pixel; the diagonal of
/// `HhᵀHh + HvᵀHv`.
pub fn degree(n1: usize, n2: usize) -> Vec<f64> {
    (0..n1 * n2)
        .map(|n| {
            let (i, b) = (n % n1, n / n1);
            let h = (b > 0) as usize + (b + 1 < n2) as usize;
            let v = (i > 0) as usize + (i + 1 < n1) as usize;
            (h + v) as f64
        })
        .collect()
}

/// `Σ_n ‖x_n‖₂` over columns.
pub fn l21_norm(x: &DMatrix<f64>) -> f64 {
    x.column_iter().map(|c| c.norm()).sum()
}

/// Group soft-thresholding, the proximal map of `t·‖·‖_{2,1}`, applied per column.
pub fn group_soft_threshold(x: &mut DMatrix<f64>, t: f64) {
    for mut c in x.column_iter_mut() {
        let norm = c.norm();
        let scale = if norm > 0.0 { (1.0 - t / norm).max(0.0) } else { 0.0 };
        c *= scale;
    }
}
