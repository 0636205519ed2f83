//! Random linear target combinations: coefficient matrix construction,
//! target encoding, and least-squares decoding.
//!
//! Each of the `r` columns of the coefficient matrix mixes exactly `k`
//! targets. Columns are generated in order: the `k` targets with the lowest
//! participation count so far are chosen (ties broken uniformly by the seeded
//! generator), which keeps per-target participation balanced to within one.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::lstsq;

/// q×r coefficient matrix whose columns each combine `k` targets.
///
/// `k` and `seed` are present on generated matrices and absent on matrices
/// imported from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    matrix: Array2<f64>,
    k: Option<usize>,
    seed: Option<u64>,
}

/// Encoded training targets: Z = Y_norm · C.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTargets {
    pub z: Array2<f64>,
}

impl CoefficientMatrix {
    /// Number of targets (rows).
    pub fn q(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of combinations (columns).
    pub fn r(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn k(&self) -> Option<usize> {
        self.k
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.matrix.column(j)
    }

    /// Wraps an externally supplied matrix (e.g. imported from CSV).
    ///
    /// Entries must be finite and within [0, 1], and every column must mix at
    /// least one target. Sparsity structure beyond that is not assumed.
    pub fn from_matrix(matrix: Array2<f64>) -> Result<CoefficientMatrix> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Config("coefficient matrix is empty".into()));
        }
        for ((i, j), &v) in matrix.indexed_iter() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "coefficient at row {i}, column {j} is {v}; expected a value in [0, 1]"
                )));
            }
        }
        for j in 0..matrix.ncols() {
            if matrix.column(j).iter().all(|&v| v == 0.0) {
                return Err(Error::Config(format!(
                    "coefficient column {j} is entirely zero"
                )));
            }
        }
        Ok(CoefficientMatrix {
            matrix,
            k: None,
            seed: None,
        })
    }

    /// Serializes as plain CSV: q rows by r columns of shortest round-trip
    /// decimals.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.q() {
            let row: Vec<String> = (0..self.r())
                .map(|j| format!("{}", self.matrix[[i, j]]))
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Parses the CSV form written by
    /// [`to_csv_string`](CoefficientMatrix::to_csv_string).
    pub fn from_csv_str(text: &str) -> Result<CoefficientMatrix> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let row: Vec<f64> = trimmed
                .split(',')
                .map(|cell| {
                    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("invalid coefficient '{}'", cell.trim()),
                    })
                })
                .collect::<Result<_>>()?;
            if rows.is_empty() {
                width = row.len();
            } else if row.len() != width {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {width} columns, found {}", row.len()),
                });
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "coefficient CSV has no rows".into(),
            });
        }
        let matrix = Array2::from_shape_fn((rows.len(), width), |(i, j)| rows[i][j]);
        CoefficientMatrix::from_matrix(matrix)
    }
}

/// Draws a coefficient uniformly from (0, 1] by resampling on exact zero.
fn nonzero_coefficient(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v: f64 = rng.gen();
        if v != 0.0 {
            return v;
        }
    }
}

/// Builds a q×r coefficient matrix with exactly `k` non-zeros per column.
///
/// Columns are drawn sequentially from a single seeded stream, so extending
/// `r` with the same seed reproduces the shorter matrix as a prefix.
pub fn build_coefficient_matrix(
    q: usize,
    r: usize,
    k: usize,
    seed: u64,
) -> Result<CoefficientMatrix> {
    if k < 2 {
        return Err(Error::Parameter(format!(
            "combination size k must be at least 2, got {k}"
        )));
    }
    if k > q {
        return Err(Error::Parameter(format!(
            "combination size k={k} exceeds target count q={q}"
        )));
    }
    if r < q {
        return Err(Error::Parameter(format!(
            "combination count r={r} is below target count q={q}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = Array2::zeros((q, r));
    let mut counts = vec![0u32; q];
    let mut order: Vec<usize> = (0..q).collect();
    for j in 0..r {
        // Uniform shuffle then stable sort by count: equal-count targets end
        // up in uniformly random relative order.
        order.shuffle(&mut rng);
        order.sort_by_key(|&t| counts[t]);
        let mut selected: Vec<usize> = order[..k].to_vec();
        selected.sort_unstable();
        for &t in &selected {
            matrix[[t, j]] = nonzero_coefficient(&mut rng);
            counts[t] += 1;
        }
    }
    Ok(CoefficientMatrix {
        matrix,
        k: Some(k),
        seed: Some(seed),
    })
}

/// Encodes normalized targets: Z = Y_norm · C.
pub fn encode(y_norm: &Array2<f64>, c: &CoefficientMatrix) -> Result<EncodedTargets> {
    if y_norm.ncols() != c.q() {
        return Err(Error::Dimension(format!(
            "target matrix has {} columns, coefficient matrix expects {}",
            y_norm.ncols(),
            c.q()
        )));
    }
    Ok(EncodedTargets {
        z: y_norm.dot(&c.matrix),
    })
}

/// Decodes one prediction vector: the least-squares minimizer of
/// ‖Cᵀ ŷ − z‖₂. The result is not clipped to [0, 1].
pub fn decode(c: &CoefficientMatrix, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != c.r() {
        return Err(Error::Dimension(format!(
            "encoded vector has {} entries, coefficient matrix has {} columns",
            z.len(),
            c.r()
        )));
    }
    let ct = c.matrix.t().to_owned();
    lstsq(&ct, z, "transposed coefficient matrix")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn participation_counts(c: &CoefficientMatrix) -> Vec<usize> {
        (0..c.q())
            .map(|t| (0..c.r()).filter(|&j| c.matrix()[[t, j]] != 0.0).count())
            .collect()
    }

    #[test]
    fn frozen_participation_counts() {
        let c = build_coefficient_matrix(6, 8, 2, 42).unwrap();
        let mut counts = participation_counts(&c);
        counts.sort_unstable();
        assert_eq!(counts, vec![2, 2, 3, 3, 3, 3]);

        let c = build_coefficient_matrix(3, 3, 2, 7).unwrap();
        assert_eq!(participation_counts(&c), vec![2, 2, 2]);
    }

    #[test]
    fn k_equal_q_fills_every_entry() {
        let c = build_coefficient_matrix(4, 6, 4, 1).unwrap();
        assert!(c.matrix().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            build_coefficient_matrix(4, 8, 1, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            build_coefficient_matrix(4, 8, 5, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            build_coefficient_matrix(4, 3, 2, 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let a = build_coefficient_matrix(6, 20, 3, 9).unwrap();
        let b = build_coefficient_matrix(6, 20, 3, 9).unwrap();
        assert_eq!(a, b);
        let c = build_coefficient_matrix(6, 20, 3, 10).unwrap();
        assert_ne!(a.matrix(), c.matrix());
    }

    #[test]
    fn extending_r_preserves_the_prefix() {
        let short = build_coefficient_matrix(5, 9, 2, 33).unwrap();
        let long = build_coefficient_matrix(5, 14, 2, 33).unwrap();
        for j in 0..9 {
            assert_eq!(short.column(j).to_vec(), long.column(j).to_vec());
        }
    }

    #[test]
    fn sparsity_and_balance_over_many_configurations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
        for trial in 0..1200u64 {
            let q = rng.gen_range(2..=16usize);
            let k = rng.gen_range(2..=q);
            let r = rng.gen_range(q..=500usize);
            let c = build_coefficient_matrix(q, r, k, trial).unwrap();
            for j in 0..r {
                let nz = c.column(j).iter().filter(|&&v| v != 0.0).count();
                assert_eq!(nz, k, "column {j} of q={q} r={r} k={k}");
                assert!(c
                    .column(j)
                    .iter()
                    .all(|&v| v == 0.0 || (v > 0.0 && v <= 1.0)));
            }
            let counts = participation_counts(&c);
            let max = counts.iter().max().unwrap();
            let min = counts.iter().min().unwrap();
            assert!(
                max - min <= 1,
                "participation spread {max}-{min} for q={q} r={r} k={k}"
            );
        }
    }

    #[test]
    fn encode_examples() {
        let c = CoefficientMatrix::from_matrix(array![[0.4], [0.6]]).unwrap();
        let z = encode(&array![[0.5, 1.0]], &c).unwrap();
        assert!((z.z[[0, 0]] - 0.8).abs() < 1e-15);

        let z = encode(&array![[0.0, 0.0]], &c).unwrap();
        assert_eq!(z.z[[0, 0]], 0.0);

        let identity =
            CoefficientMatrix::from_matrix(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let y = array![[0.3, 0.9], [0.1, 0.4]];
        let z = encode(&y, &identity).unwrap();
        assert_eq!(z.z, y);

        assert!(matches!(
            encode(&array![[1.0, 2.0, 3.0]], &identity),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn decode_examples() {
        let identity =
            CoefficientMatrix::from_matrix(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let y = decode(&identity, &[0.3, 0.7]).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-12 && (y[1] - 0.7).abs() < 1e-12);

        // C^T rows (1,0),(0,1),(1,1): consistent with y = (0.2, 0.5).
        let c = CoefficientMatrix::from_matrix(array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
            .unwrap();
        let y = decode(&c, &[0.2, 0.5, 0.7]).unwrap();
        assert!((y[0] - 0.2).abs() < 1e-12 && (y[1] - 0.5).abs() < 1e-12);

        let c = CoefficientMatrix::from_matrix(array![[1.0, 1.0]]).unwrap();
        let y = decode(&c, &[0.0, 1.0]).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decode_reports_rank_deficiency() {
        let c = CoefficientMatrix::from_matrix(array![[0.5, 0.5], [0.5, 0.5]]).unwrap();
        match decode(&c, &[1.0, 1.0]).unwrap_err() {
            Error::RankDeficient { matrix, columns } => {
                assert_eq!(matrix, "transposed coefficient matrix");
                assert_eq!(columns, 2);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let c = build_coefficient_matrix(4, 10, 2, 77).unwrap();
        let text = c.to_csv_string();
        let back = CoefficientMatrix::from_csv_str(&text).unwrap();
        assert_eq!(c.matrix(), back.matrix());
        assert_eq!(back.k(), None);
        assert_eq!(back.seed(), None);
    }

    #[test]
    fn csv_import_rejects_malformed_input() {
        assert!(matches!(
            CoefficientMatrix::from_csv_str("0.5,abc\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            CoefficientMatrix::from_csv_str("0.5,0.5\n0.5\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(CoefficientMatrix::from_csv_str("").is_err());
        assert!(CoefficientMatrix::from_csv_str("1.5,0.5\n0.5,0.5\n").is_err());
        assert!(CoefficientMatrix::from_csv_str("0,0.5\n0,0.5\n").is_err());
    }

    /// Residual norm of C^T y = z at a specific y.
    #[allow(clippy::needless_range_loop)]
    fn residual_norm(c: &CoefficientMatrix, y: &[f64], z: &[f64]) -> f64 {
        let mut sse = 0.0;
        for j in 0..c.r() {
            let mut pred = 0.0;
            for t in 0..c.q() {
                pred += c.matrix()[[t, j]] * y[t];
            }
            sse += (pred - z[j]) * (pred - z[j]);
        }
        sse.sqrt()
    }

    /// Brute-force grid search over y in [-2, 2]^q.
    fn grid_best_residual(c: &CoefficientMatrix, z: &[f64], step: f64) -> f64 {
        let q = c.q();
        let n = (4.0 / step).round() as usize + 1;
        let coord = |i: usize| -2.0 + i as f64 * step;
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; q];
        let mut y = vec![0.0; q];
        loop {
            for t in 0..q {
                y[t] = coord(idx[t]);
            }
            best = best.min(residual_norm(c, &y, z));
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < n {
                    break;
                }
                idx[d] = 0;
                d += 1;
                if d == q {
                    return best;
                }
            }
        }
    }

    #[test]
    fn decode_beats_grid_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4242);
        // (q, r, grid step): full 1e-3 resolution for q <= 2; q = 3 uses a
        // coarser grid to stay tractable, which only weakens the bound the
        // solver must beat.
        for &(q, r, step) in &[(2usize, 6usize, 1e-3), (2, 12, 1e-3), (3, 9, 1e-2)] {
            let c = build_coefficient_matrix(q, r, 2, rng.gen()).unwrap();
            let z: Vec<f64> = (0..r).map(|_| rng.gen::<f64>() * 2.0 - 0.5).collect();
            let decoded = decode(&c, &z).unwrap();
            let solver_residual = residual_norm(&c, &decoded, &z);
            let grid_residual = grid_best_residual(&c, &z, step);
            assert!(
                solver_residual <= grid_residual + 1e-9,
                "solver residual {solver_residual} exceeds grid best {grid_residual} (q={q}, r={r})"
            );
        }
        // q = 1 least-squares mean, full resolution.
        let c = CoefficientMatrix::from_matrix(array![[1.0, 1.0, 1.0]]).unwrap();
        let z = [0.1, 0.4, 0.55];
        let decoded = decode(&c, &z).unwrap();
        assert!(
            residual_norm(&c, &decoded, &z) <= grid_best_residual(&c, &z, 1e-3) + 1e-9
        );
    }

    proptest! {
        #[test]
        fn decode_inverts_encode_on_exact_data(
            seed in 0u64..5000,
            q in 2usize..6,
            extra in 0usize..10,
            y_cells in proptest::collection::vec(0.0f64..1.0, 8),
        ) {
            let r = q + extra;
            let k = 2 + (seed as usize) % (q - 1);
            let c = build_coefficient_matrix(q, r, k, seed).unwrap();
            let y: Vec<f64> = y_cells[..q].to_vec();
            let y_mat = Array2::from_shape_fn((1, q), |(_, j)| y[j]);
            let z = encode(&y_mat, &c).unwrap();
            let z_row: Vec<f64> = z.z.row(0).to_vec();
            match decode(&c, &z_row) {
                Ok(decoded) => {
                    for t in 0..q {
                        prop_assert!(
                            (decoded[t] - y[t]).abs() < 1e-8,
                            "target {} decoded {} expected {}", t, decoded[t], y[t]
                        );
                    }
                }
                // Random sparse matrices can be numerically rank-deficient;
                // the error path is exercised elsewhere.
                Err(Error::RankDeficient { .. }) => {}
                Err(other) => return Err(TestCaseError::fail(format!("{other}"))),
            }
        }
    }
}
