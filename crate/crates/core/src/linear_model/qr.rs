//! Column-pivoted Householder QR for least squares.

/// Columns whose remaining norm falls below this fraction of the first
/// pivot's norm are treated as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares solution of a possibly rank-deficient system.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    /// Coefficients in the original column order; aliased entries are 0.
    pub coefficients: Vec<f64>,
    pub aliased: Vec<bool>,
    pub rank: usize,
}

/// Solves `min ||A b - y||` where `a` is `rows x cols`, column-major.
///
/// Pivots on the largest remaining column norm at each step and stops once
/// that norm drops to `RANK_TOLERANCE` times the first pivot's. Columns not
/// reached are aliased and get coefficient 0.
pub fn solve_least_squares(a: &[f64], rows: usize, cols: usize, y: &[f64]) -> LeastSquares {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    let mut a = a.to_vec();
    let mut qty = y.to_vec();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut r_diag = vec![0.0; cols];
    let col = |j: usize| j * rows;

    let steps = rows.min(cols);
    let mut first_norm = 0.0;
    let mut rank = 0;
    for k in 0..steps {
        // pivot on the largest trailing column norm
        let (mut best, mut best_sq) = (k, -1.0);
        for j in k..cols {
            let s: f64 = a[col(j) + k..col(j) + rows].iter().map(|v| v * v).sum();
            if s > best_sq {
                best = j;
                best_sq = s;
            }
        }
        if best != k {
            for i in 0..rows {
                a.swap(col(k) + i, col(best) + i);
            }
            perm.swap(k, best);
        }
        let norm = best_sq.sqrt();
        if k == 0 {
            first_norm = norm;
        }
        if norm == 0.0 || norm <= RANK_TOLERANCE * first_norm {
            break;
        }

        // Householder vector v = x - s e1 with s = -sign(x0) ||x||
        let x0 = a[col(k) + k];
        let s = if x0 >= 0.0 { -norm } else { norm };
        a[col(k) + k] = x0 - s;
        let vtv: f64 = a[col(k) + k..col(k) + rows].iter().map(|v| v * v).sum();
        if vtv > 0.0 {
            for j in k + 1..cols {
                let dot: f64 = (k..rows).map(|i| a[col(k) + i] * a[col(j) + i]).sum();
                let f = 2.0 * dot / vtv;
                for i in k..rows {
                    a[col(j) + i] -= f * a[col(k) + i];
                }
            }
            let dot: f64 = (k..rows).map(|i| a[col(k) + i] * qty[i]).sum();
            let f = 2.0 * dot / vtv;
            for i in k..rows {
                qty[i] -= f * a[col(k) + i];
            }
        }
        r_diag[k] = s;
        rank = k + 1;
    }

    // back substitution on the leading rank x rank block of R
    let mut b = vec![0.0; rank];
    for k in (0..rank).rev() {
        let mut acc = qty[k];
        for j in k + 1..rank {
            acc -= a[col(j) + k] * b[j];
        }
        b[k] = acc / r_diag[k];
    }

    let mut coefficients = vec![0.0; cols];
    let mut aliased = vec![true; cols];
    for (k, &c) in perm.iter().enumerate().take(rank) {
        coefficients[c] = b[k];
        aliased[c] = false;
    }
    LeastSquares {
        coefficients,
        aliased,
        rank,
    }
}
