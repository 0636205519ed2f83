//! Cross-dataset method comparison: win/loss counts, the Friedman test with
//! mean ranks and the Iman-Davenport correction, Nemenyi critical
//! differences, and the (exact) Wilcoxon signed-rank test.
//!
//! Scores are aRRMSE values, so lower is always better.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};

use crate::error::{Error, Result};

/// Methods-by-datasets score table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `scores[method][dataset]`.
    pub scores: Vec<Vec<f64>>,
}

impl ResultTable {
    pub fn new(
        methods: Vec<String>,
        datasets: Vec<String>,
        scores: Vec<Vec<f64>>,
    ) -> Result<ResultTable> {
        if methods.is_empty() || datasets.is_empty() {
            return Err(Error::Stats(
                "result table needs at least one method and one dataset".into(),
            ));
        }
        for (i, name) in methods.iter().enumerate() {
            if methods[..i].contains(name) {
                return Err(Error::Stats(format!("duplicate method name '{name}'")));
            }
        }
        for (i, name) in datasets.iter().enumerate() {
            if datasets[..i].contains(name) {
                return Err(Error::Stats(format!("duplicate dataset name '{name}'")));
            }
        }
        if scores.len() != methods.len() {
            return Err(Error::Stats(format!(
                "{} score rows for {} methods",
                scores.len(),
                methods.len()
            )));
        }
        for (m, row) in scores.iter().enumerate() {
            if row.len() != datasets.len() {
                return Err(Error::Stats(format!(
                    "method '{}' has {} scores for {} datasets",
                    methods[m],
                    row.len(),
                    datasets.len()
                )));
            }
            for (d, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Stats(format!(
                        "score for method '{}' on dataset '{}' is {v}",
                        methods[m], datasets[d]
                    )));
                }
            }
        }
        Ok(ResultTable {
            methods,
            datasets,
            scores,
        })
    }

    /// Parses a CSV with a header of dataset names (first column is the
    /// method label) and one row per method. Empty cells and `-` count as
    /// missing; every missing cell is listed in the error.
    pub fn from_csv_str(text: &str) -> Result<ResultTable> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "result CSV is empty".into(),
        })?;
        let datasets: Vec<String> = header
            .split(',')
            .skip(1)
            .map(|t| t.trim().to_string())
            .collect();
        if datasets.is_empty() || datasets.iter().any(|d| d.is_empty()) {
            return Err(Error::Parse {
                line: 1,
                message: "header must name at least one dataset".into(),
            });
        }

        let mut methods = Vec::new();
        let mut scores: Vec<Vec<f64>> = Vec::new();
        let mut missing: Vec<String> = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let mut cells = line.split(',');
            let method = cells.next().unwrap_or("").trim().to_string();
            if method.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "row is missing a method name".into(),
                });
            }
            let values: Vec<&str> = cells.map(|c| c.trim()).collect();
            if values.len() != datasets.len() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "method '{method}' has {} cells for {} datasets",
                        values.len(),
                        datasets.len()
                    ),
                });
            }
            let mut row = Vec::with_capacity(values.len());
            for (d, cell) in values.iter().enumerate() {
                if cell.is_empty() || *cell == "-" {
                    missing.push(format!("{method}/{}", datasets[d]));
                    row.push(f64::NAN);
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid score '{cell}' for dataset '{}'", datasets[d]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("non-finite score '{cell}' for dataset '{}'", datasets[d]),
                    });
                }
                row.push(v);
            }
            methods.push(method);
            scores.push(row);
        }
        if !missing.is_empty() {
            return Err(Error::Stats(format!(
                "result table has {} missing cell(s): {}",
                missing.len(),
                missing.join(", ")
            )));
        }
        ResultTable::new(methods, datasets, scores)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("method");
        for d in &self.datasets {
            out.push(',');
            out.push_str(d);
        }
        out.push('\n');
        for (m, name) in self.methods.iter().enumerate() {
            out.push_str(name);
            for v in &self.scores[m] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn n_methods(&self) -> usize {
        self.methods.len()
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }
}

/// Ranks with average-rank tie handling; rank 1 is the lowest value.
pub fn rank_values(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share ranks i+1..=j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for t in i..=j {
            ranks[idx[t]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Per-dataset and mean ranks of each method (lower score = better rank).
#[derive(Debug, Clone, Serialize)]
pub struct RankSummary {
    /// `per_dataset[dataset][method]`.
    pub per_dataset: Vec<Vec<f64>>,
    pub mean_ranks: Vec<f64>,
}

pub fn average_ranks(table: &ResultTable) -> RankSummary {
    let k = table.n_methods();
    let n = table.n_datasets();
    let mut per_dataset = Vec::with_capacity(n);
    let mut mean_ranks = vec![0.0; k];
    for d in 0..n {
        let column: Vec<f64> = (0..k).map(|m| table.scores[m][d]).collect();
        let ranks = rank_values(&column);
        for m in 0..k {
            mean_ranks[m] += ranks[m];
        }
        per_dataset.push(ranks);
    }
    for r in &mut mean_ranks {
        *r /= n as f64;
    }
    RankSummary {
        per_dataset,
        mean_ranks,
    }
}

/// Pairwise win/loss counts: entry `[i][j]` counts datasets where method `i`
/// strictly beats method `j` and vice versa; ties count for neither.
pub fn wins_losses(table: &ResultTable) -> Result<Vec<Vec<(usize, usize)>>> {
    let k = table.n_methods();
    if k < 2 {
        return Err(Error::Stats(
            "win/loss counts need at least two methods".into(),
        ));
    }
    let mut out = vec![vec![(0usize, 0usize); k]; k];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            let mut wins = 0;
            let mut losses = 0;
            for d in 0..table.n_datasets() {
                if table.scores[i][d] < table.scores[j][d] {
                    wins += 1;
                } else if table.scores[j][d] < table.scores[i][d] {
                    losses += 1;
                }
            }
            *cell = (wins, losses);
        }
    }
    Ok(out)
}

/// Friedman test over mean ranks with the Iman-Davenport F correction.
#[derive(Debug, Clone, Serialize)]
pub struct FriedmanResult {
    pub mean_ranks: Vec<f64>,
    pub chi_square: f64,
    /// Absent when the statistic is degenerate (see `degenerate`).
    pub iman_davenport_f: Option<f64>,
    /// Two-sided p-value from the F distribution with (k-1, (k-1)(N-1))
    /// degrees of freedom; the F form corrects the conservative chi-square
    /// approximation.
    pub p_value: f64,
    /// True when chi-square reaches its maximum N(k-1), where the F statistic
    /// is undefined; p is then reported as 0.
    pub degenerate: bool,
}

pub fn friedman(table: &ResultTable) -> Result<FriedmanResult> {
    let k = table.n_methods() as f64;
    let n = table.n_datasets() as f64;
    if table.n_methods() < 2 || table.n_datasets() < 2 {
        return Err(Error::Stats(
            "the Friedman test needs at least 2 methods and 2 datasets".into(),
        ));
    }
    let summary = average_ranks(table);
    let sum_sq: f64 = summary.mean_ranks.iter().map(|r| r * r).sum();
    let chi_square = 12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0) * (k + 1.0) / 4.0);
    let max_chi = n * (k - 1.0);
    let denom = max_chi - chi_square;
    if denom <= 1e-9 * max_chi {
        return Ok(FriedmanResult {
            mean_ranks: summary.mean_ranks,
            chi_square,
            iman_davenport_f: None,
            p_value: 0.0,
            degenerate: true,
        });
    }
    let f_stat = (n - 1.0) * chi_square / denom;
    let d1 = k - 1.0;
    let d2 = (k - 1.0) * (n - 1.0);
    let dist = FisherSnedecor::new(d1, d2)
        .map_err(|e| Error::Stats(format!("F distribution setup failed: {e}")))?;
    let p_value = if f_stat <= 0.0 {
        1.0
    } else {
        (1.0 - dist.cdf(f_stat)).clamp(0.0, 1.0)
    };
    Ok(FriedmanResult {
        mean_ranks: summary.mean_ranks,
        chi_square,
        iman_davenport_f: Some(f_stat),
        p_value,
        degenerate: false,
    })
}

/// Two-tailed studentized-range constants divided by sqrt(2), at infinite
/// degrees of freedom, for the Nemenyi test; k = 2..=10.
const NEMENYI_Q_05: [f64; 9] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164,
];
const NEMENYI_Q_10: [f64; 9] = [
    1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920,
];

/// Critical difference in mean ranks: CD = q_alpha * sqrt(k(k+1)/(6N)).
/// `alpha` must be 0.05 or 0.10; `num_methods` must be in 2..=10.
pub fn nemenyi_cd(num_methods: usize, num_datasets: usize, alpha: f64) -> Result<f64> {
    if !(2..=10).contains(&num_methods) {
        return Err(Error::Parameter(format!(
            "no studentized-range constant bundled for k={num_methods} (supported: 2..=10)"
        )));
    }
    if num_datasets == 0 {
        return Err(Error::Parameter("need at least one dataset".into()));
    }
    let q = if (alpha - 0.05).abs() < 1e-9 {
        NEMENYI_Q_05[num_methods - 2]
    } else if (alpha - 0.10).abs() < 1e-9 {
        NEMENYI_Q_10[num_methods - 2]
    } else {
        return Err(Error::Parameter(format!(
            "unsupported alpha {alpha} (supported: 0.05, 0.10)"
        )));
    };
    let k = num_methods as f64;
    let n = num_datasets as f64;
    Ok(q * (k * (k + 1.0) / (6.0 * n)).sqrt())
}

/// Wilcoxon signed-rank outcome.
#[derive(Debug, Clone, Serialize)]
pub struct WilcoxonResult {
    pub t_minus: f64,
    pub t_plus: f64,
    /// Pairs remaining after dropping zero differences.
    pub n_used: usize,
    pub p_two_sided: f64,
    /// True when the p-value came from full enumeration (n_used <= 20).
    pub exact: bool,
}

/// Paired two-sided Wilcoxon signed-rank test on per-dataset scores.
///
/// Differences a-b are ranked by absolute value with average ranks on ties;
/// zero differences are dropped. For n <= 20 the p-value is exact (all 2^n
/// sign assignments); beyond that a normal approximation with continuity
/// correction is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "paired test got {} and {} scores",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::Stats(
            "all paired differences are zero; the test carries no information".into(),
        ));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = rank_values(&abs);
    let mut t_plus = 0.0;
    let mut t_minus = 0.0;
    for (d, r) in diffs.iter().zip(ranks.iter()) {
        if *d > 0.0 {
            t_plus += r;
        } else {
            t_minus += r;
        }
    }

    let p_two_sided;
    let exact;
    if n <= 20 {
        // Ranks may be half-integers under ties; doubling them makes exact
        // integer subset sums.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut ways = vec![0u64; total + 1];
        ways[0] = 1;
        for &w in &doubled {
            for s in (w..=total).rev() {
                ways[s] += ways[s - w];
            }
        }
        let t_obs = (2.0 * t_minus).round() as usize;
        let le: u64 = ways[..=t_obs].iter().sum();
        let ge: u64 = ways[t_obs..].iter().sum();
        let denom = (1u64 << n) as f64;
        p_two_sided = (2.0 * (le.min(ge) as f64) / denom).min(1.0);
        exact = true;
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let sigma = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0).sqrt();
        let t = t_minus.min(t_plus);
        let z = (t - mu + 0.5) / sigma;
        let normal = Normal::new(0.0, 1.0)
            .map_err(|e| Error::Stats(format!("normal distribution setup failed: {e}")))?;
        p_two_sided = (2.0 * normal.cdf(z)).min(1.0);
        exact = false;
    }

    Ok(WilcoxonResult {
        t_minus,
        t_plus,
        n_used: n,
        p_two_sided,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(methods: &[&str], datasets: usize, scores: &[&[f64]]) -> ResultTable {
        ResultTable::new(
            methods.iter().map(|s| s.to_string()).collect(),
            (0..datasets).map(|d| format!("d{d}")).collect(),
            scores.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_and_missing_cells() {
        let t = table(&["A", "B"], 3, &[&[0.1, 0.2, 0.3], &[0.3, 0.2, 0.1]]);
        let text = t.to_csv_string();
        let parsed = ResultTable::from_csv_str(&text).unwrap();
        assert_eq!(t, parsed);

        let err = ResultTable::from_csv_str("method,d1,d2\nA,0.1,-\nB,,0.2\n").unwrap_err();
        match err {
            Error::Stats(msg) => {
                assert!(msg.contains("A/d2"), "{msg}");
                assert!(msg.contains("B/d1"), "{msg}");
            }
            other => panic!("unexpected error {other}"),
        }

        assert!(ResultTable::from_csv_str("method,d1\nA,0.1,0.2\n").is_err());
        assert!(ResultTable::from_csv_str("method,d1\nA,inf\n").is_err());
        assert!(ResultTable::from_csv_str("").is_err());
    }

    #[test]
    fn rank_values_average_ties() {
        assert_eq!(rank_values(&[0.3, 0.1, 0.2]), vec![3.0, 1.0, 2.0]);
        assert_eq!(rank_values(&[0.5, 0.2, 0.2]), vec![3.0, 1.5, 1.5]);
        assert_eq!(rank_values(&[1.0, 1.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn wins_losses_counts_strict_improvements() {
        let t = table(
            &["A", "B"],
            4,
            &[&[0.1, 0.5, 0.3, 0.2], &[0.2, 0.5, 0.1, 0.4]],
        );
        let wl = wins_losses(&t).unwrap();
        assert_eq!(wl[0][1], (2, 1));
        assert_eq!(wl[1][0], (1, 2));
        assert_eq!(wl[0][0], (0, 0));

        let tie = table(&["A", "B"], 2, &[&[0.5, 0.7], &[0.5, 0.7]]);
        assert_eq!(wins_losses(&tie).unwrap()[0][1], (0, 0));
    }

    #[test]
    fn friedman_identical_scores_gives_p_one() {
        let t = table(
            &["A", "B", "C"],
            4,
            &[&[0.5; 4], &[0.5; 4], &[0.5; 4]],
        );
        let f = friedman(&t).unwrap();
        assert_eq!(f.mean_ranks, vec![2.0, 2.0, 2.0]);
        assert_eq!(f.chi_square, 0.0);
        assert_eq!(f.p_value, 1.0);
        assert!(!f.degenerate);
    }

    #[test]
    fn friedman_total_dominance_is_degenerate() {
        let t = table(
            &["A", "B"],
            4,
            &[&[0.1, 0.1, 0.1, 0.1], &[0.2, 0.2, 0.2, 0.2]],
        );
        let f = friedman(&t).unwrap();
        assert!((f.chi_square - 4.0).abs() < 1e-12);
        assert!(f.degenerate);
        assert_eq!(f.p_value, 0.0);
        assert!(f.iman_davenport_f.is_none());
    }

    #[test]
    fn friedman_f_p_value_matches_closed_form() {
        // Construct a 3-method, 12-dataset table with mean ranks
        // (1.5, 2.25, 2.25): method A ranks first on 6 datasets and last on
        // 3, etc. Simpler: feed ranks directly as scores; ranking preserves
        // them. A=1 on 6 datasets/3 on 3/2 on 3 gives mean 1.75; instead use
        // the known algebra: chi-square 4.5 needs sum of squared mean ranks
        // 12.375.
        // A: rank 1 ten times, 3 twice -> mean 1.3333; easier to just verify
        // with scores that produce ties-free ranks and compare against the
        // closed-form F CDF for d1=2.
        let scores_a = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 3.0];
        let scores_b = [2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 1.0, 1.0, 1.0];
        let scores_c = [3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0];
        let t = table(&["A", "B", "C"], 12, &[&scores_a, &scores_b, &scores_c]);
        let f = friedman(&t).unwrap();
        // Mean ranks: A (9*1 + 3*3)/12 = 1.5, B (6*2+3*3+3*1)/12 = 2, C
        // (6*3+6*2)/12 = 2.5; chi2 = 12*12/12 * (1.5^2+4+6.25 - 12) = 6.
        assert!((f.chi_square - 6.0).abs() < 1e-12);
        let f_stat = f.iman_davenport_f.unwrap();
        assert!((f_stat - 11.0 * 6.0 / (24.0 - 6.0)).abs() < 1e-12);
        // For d1 = 2 the F survival function is (1 + x/11)^(-11) with
        // d2 = 22.
        let expected_p = (1.0 + f_stat / 11.0).powi(-11);
        assert!(
            (f.p_value - expected_p).abs() < 1e-10,
            "{} vs {expected_p}",
            f.p_value
        );
    }

    #[test]
    fn friedman_needs_two_by_two() {
        let t = table(&["A"], 3, &[&[0.1, 0.2, 0.3]]);
        assert!(friedman(&t).is_err());
    }

    #[test]
    fn nemenyi_reference_values() {
        let cd = nemenyi_cd(3, 12, 0.10).unwrap();
        assert!((cd - 0.8377).abs() < 5e-5, "{cd}");
        let quadrupled = nemenyi_cd(3, 48, 0.10).unwrap();
        assert!((quadrupled - cd / 2.0).abs() < 1e-12);
        assert!((quadrupled - 0.41885).abs() < 5e-5);
        let two = nemenyi_cd(2, 6, 0.05).unwrap();
        assert!((two - 0.8002).abs() < 5e-5, "{two}");
    }

    #[test]
    fn nemenyi_rejects_unsupported_inputs() {
        assert!(nemenyi_cd(1, 10, 0.05).is_err());
        assert!(nemenyi_cd(11, 10, 0.05).is_err());
        assert!(nemenyi_cd(3, 0, 0.05).is_err());
        assert!(nemenyi_cd(3, 10, 0.01).is_err());
    }

    #[test]
    fn wilcoxon_small_examples() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.t_minus, 0.0);
        assert_eq!(r.t_plus, 6.0);
        assert_eq!(r.p_two_sided, 0.25);
        assert!(r.exact);

        assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn wilcoxon_handles_tied_magnitudes() {
        // Differences (1, -1, 2): ranks (1.5, 1.5, 3), T- = 1.5.
        let r = wilcoxon_signed_rank(&[1.0, 0.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r.t_minus, 1.5);
        assert_eq!(r.t_plus, 4.5);
        assert_eq!(r.p_two_sided, 0.75);
    }

    #[test]
    fn wilcoxon_zero_differences_are_dropped() {
        let r = wilcoxon_signed_rank(&[1.0, 5.0, 2.0, 3.0], &[1.0, 4.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.n_used, 3);
    }

    #[test]
    fn wilcoxon_normal_approximation_branch() {
        let n = 25;
        let a: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let b = vec![0.0; n];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);
        assert_eq!(r.t_minus, 0.0);
        assert!(r.p_two_sided < 1e-4, "{}", r.p_two_sided);

        // Near-symmetric differences: p should be large.
        let a: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (i / 2 + 1) as f64).collect();
        let r = wilcoxon_signed_rank(&a, &vec![0.0; n]).unwrap();
        assert!(r.p_two_sided > 0.5, "{}", r.p_two_sided);
    }

    /// Independent oracle: enumerate all sign patterns directly.
    fn brute_force_wilcoxon_p(diffs: &[f64]) -> f64 {
        let kept: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
        let n = kept.len();
        let abs: Vec<f64> = kept.iter().map(|d| d.abs()).collect();
        let ranks = rank_values(&abs);
        let t_minus_obs: f64 = kept
            .iter()
            .zip(ranks.iter())
            .filter(|(d, _)| **d < 0.0)
            .map(|(_, r)| *r)
            .sum();
        let mut le = 0u64;
        let mut ge = 0u64;
        for pattern in 0u64..(1 << n) {
            let t: f64 = (0..n)
                .filter(|i| pattern & (1 << i) != 0)
                .map(|i| ranks[i])
                .sum();
            if t <= t_minus_obs + 1e-12 {
                le += 1;
            }
            if t >= t_minus_obs - 1e-12 {
                ge += 1;
            }
        }
        let denom = (1u64 << n) as f64;
        (2.0 * (le.min(ge) as f64) / denom).min(1.0)
    }

    proptest! {
        #[test]
        fn ranks_sum_to_triangular_number(
            scores in proptest::collection::vec(0.0f64..10.0, 2..8),
        ) {
            let k = scores.len();
            let ranks = rank_values(&scores);
            let sum: f64 = ranks.iter().sum();
            prop_assert!((sum - (k * (k + 1)) as f64 / 2.0).abs() < 1e-9);
        }

        #[test]
        fn friedman_is_shift_invariant(
            cells in proptest::collection::vec(0.0f64..2.0, 12),
            shift in -5.0f64..5.0,
        ) {
            let rows: Vec<Vec<f64>> = cells.chunks(4).map(|c| c.to_vec()).collect();
            let t = ResultTable::new(
                vec!["A".into(), "B".into(), "C".into()],
                (0..4).map(|d| format!("d{d}")).collect(),
                rows.clone(),
            ).unwrap();
            let shifted = ResultTable::new(
                t.methods.clone(),
                t.datasets.clone(),
                rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect(),
            ).unwrap();
            let fa = friedman(&t).unwrap();
            let fb = friedman(&shifted).unwrap();
            prop_assert_eq!(fa.mean_ranks, fb.mean_ranks);
            prop_assert!((fa.chi_square - fb.chi_square).abs() < 1e-9);
        }

        #[test]
        fn wins_losses_is_antisymmetric(
            cells in proptest::collection::vec(0.0f64..1.0, 15),
        ) {
            let rows: Vec<Vec<f64>> = cells.chunks(5).map(|c| c.to_vec()).collect();
            let t = ResultTable::new(
                vec!["A".into(), "B".into(), "C".into()],
                (0..5).map(|d| format!("d{d}")).collect(),
                rows,
            ).unwrap();
            let wl = wins_losses(&t).unwrap();
            #[allow(clippy::needless_range_loop)]
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(wl[i][j].0, wl[j][i].1);
                    prop_assert_eq!(wl[i][j].1, wl[j][i].0);
                }
            }
        }

        #[test]
        fn exact_wilcoxon_matches_enumeration(
            diffs in proptest::collection::vec(-4i8..=4, 2..12),
        ) {
            prop_assume!(diffs.iter().any(|d| *d != 0));
            let a: Vec<f64> = diffs.iter().map(|d| *d as f64).collect();
            let b = vec![0.0; a.len()];
            let mine = wilcoxon_signed_rank(&a, &b).unwrap();
            let brute = brute_force_wilcoxon_p(&a);
            prop_assert!(
                (mine.p_two_sided - brute).abs() < 1e-12,
                "dp {} vs enumeration {}", mine.p_two_sided, brute
            );
        }

        #[test]
        fn wilcoxon_is_shift_invariant(
            pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..10),
            shift in -10.0f64..10.0,
        ) {
            let a: Vec<f64> = pairs.iter().map(|(x, _)| *x).collect();
            let b: Vec<f64> = pairs.iter().map(|(_, y)| *y).collect();
            let base = match wilcoxon_signed_rank(&a, &b) {
                Ok(r) => r,
                Err(_) => return Ok(()),
            };
            let a2: Vec<f64> = a.iter().map(|v| v + shift).collect();
            let b2: Vec<f64> = b.iter().map(|v| v + shift).collect();
            let shifted = wilcoxon_signed_rank(&a2, &b2).unwrap();
            prop_assert_eq!(base.t_minus, shifted.t_minus);
            prop_assert_eq!(base.p_two_sided, shifted.p_two_sided);
        }
    }
}
