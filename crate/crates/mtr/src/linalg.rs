//! Dense least squares via Householder QR.
//!
//! Solves `min ||A x - b||` for tall matrices (rows >= cols) without forming
//! the normal equations. Rank deficiency is detected from the magnitudes of
//! the R diagonal.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Relative R-diagonal threshold below which the matrix is treated as
/// rank-deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares solution of `A x = b` for an m x n matrix with m >= n.
///
/// `matrix_name` labels the matrix in the rank-deficiency error.
#[allow(clippy::needless_range_loop)]
pub fn lstsq(a: &Array2<f64>, b: &[f64], matrix_name: &str) -> Result<Vec<f64>> {
    let m = a.nrows();
    let n = a.ncols();
    if b.len() != m {
        return Err(Error::Dimension(format!(
            "right-hand side has {} entries, matrix has {} rows",
            b.len(),
            m
        )));
    }
    if m < n {
        return Err(Error::Dimension(format!(
            "least-squares system is underdetermined: {m} rows < {n} columns"
        )));
    }

    // Working copies, row major.
    let mut r: Vec<f64> = a.iter().copied().collect();
    let mut rhs = b.to_vec();
    let at = |r: &Vec<f64>, i: usize, j: usize| r[i * n + j];

    for col in 0..n {
        // Householder reflector for the trailing column segment.
        let mut norm = 0.0;
        for i in col..m {
            let v = at(&r, i, col);
            norm += v * v;
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            // Column segment already zero; R[col,col] = 0 and the rank check
            // below reports the deficiency.
            continue;
        }
        let pivot = at(&r, col, col);
        let alpha = if pivot >= 0.0 { -norm } else { norm };
        // v = x - alpha * e1, normalized so v[0] = 1.
        let v0 = pivot - alpha;
        let mut v = vec![0.0; m - col];
        v[0] = 1.0;
        for i in (col + 1)..m {
            v[i - col] = at(&r, i, col) / v0;
        }
        // beta = 2 / (v^T v)
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        let beta = 2.0 / vtv;

        // Apply the reflector to the remaining columns of R and to the rhs.
        for j in col..n {
            let mut dot = 0.0;
            for i in col..m {
                dot += v[i - col] * at(&r, i, j);
            }
            let s = beta * dot;
            for i in col..m {
                r[i * n + j] -= s * v[i - col];
            }
        }
        let mut dot = 0.0;
        for i in col..m {
            dot += v[i - col] * rhs[i];
        }
        let s = beta * dot;
        for i in col..m {
            rhs[i] -= s * v[i - col];
        }
    }

    // Rank check on the R diagonal.
    let diag: Vec<f64> = (0..n).map(|j| at(&r, j, j).abs()).collect();
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);
    if max_diag == 0.0 || diag.iter().any(|&d| d < RANK_TOLERANCE * max_diag) {
        return Err(Error::RankDeficient {
            matrix: matrix_name.to_string(),
            columns: n,
        });
    }

    // Back substitution: R x = Q^T b (first n rows).
    let mut x = vec![0.0; n];
    for j in (0..n).rev() {
        let mut sum = rhs[j];
        for l in (j + 1)..n {
            sum -= at(&r, j, l) * x[l];
        }
        x[j] = sum / at(&r, j, j);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Independent route: solve the normal equations A^T A x = A^T b by
    /// Gaussian elimination with partial pivoting.
    #[allow(clippy::needless_range_loop)]
    fn normal_equations(a: &Array2<f64>, b: &[f64]) -> Vec<f64> {
        let n = a.ncols();
        let m = a.nrows();
        let mut ata = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for row in 0..m {
                    s += a[[row, i]] * a[[row, j]];
                }
                ata[i][j] = s;
            }
            let mut s = 0.0;
            for row in 0..m {
                s += a[[row, i]] * b[row];
            }
            ata[i][n] = s;
        }
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| ata[x][col].abs().total_cmp(&ata[y][col].abs()))
                .unwrap();
            ata.swap(col, piv);
            for row in (col + 1)..n {
                let f = ata[row][col] / ata[col][col];
                for j in col..=n {
                    ata[row][j] -= f * ata[col][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for j in (0..n).rev() {
            let mut s = ata[j][n];
            for l in (j + 1)..n {
                s -= ata[j][l] * x[l];
            }
            x[j] = s / ata[j][j];
        }
        x
    }

    #[test]
    fn solves_square_system() {
        let a = array![[3.0, 1.0], [1.0, 2.0]];
        let x = lstsq(&a, &[9.0, 8.0], "A").unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn solves_overdetermined_consistent_system() {
        // Rows (1,0),(0,1),(1,1) with rhs (0.2,0.5,0.7) is consistent.
        let a = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let x = lstsq(&a, &[0.2, 0.5, 0.7], "A").unwrap();
        assert!((x[0] - 0.2).abs() < 1e-12);
        assert!((x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations_on_random_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(n..=n + 20);
            let a = Array2::from_shape_fn((m, n), |_| rng.gen::<f64>() * 2.0 - 1.0);
            let b: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let x = lstsq(&a, &b, "A").unwrap();
            let x_ref = normal_equations(&a, &b);
            for j in 0..n {
                assert!(
                    (x[j] - x_ref[j]).abs() < 1e-8,
                    "qr {} vs normal equations {}",
                    x[j],
                    x_ref[j]
                );
            }
        }
    }

    #[test]
    fn reports_rank_deficiency() {
        // Second column is twice the first.
        let a = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let err = lstsq(&a, &[1.0, 2.0, 3.0], "design matrix").unwrap_err();
        match err {
            Error::RankDeficient { matrix, columns } => {
                assert_eq!(matrix, "design matrix");
                assert_eq!(columns, 2);
            }
            other => panic!("expected rank deficiency, got {other}"),
        }
    }

    #[test]
    fn rejects_underdetermined_and_mismatched_systems() {
        let a = array![[1.0, 2.0, 3.0]];
        assert!(matches!(
            lstsq(&a, &[1.0], "A"),
            Err(Error::Dimension(_))
        ));
        let a = array![[1.0], [2.0]];
        assert!(matches!(lstsq(&a, &[1.0], "A"), Err(Error::Dimension(_))));
    }
}
