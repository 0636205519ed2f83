//! Statistical comparison of methods from a methods x datasets result table:
//! win/loss counts, the Friedman test, the Nemenyi critical difference, and
//! pairwise Wilcoxon signed-rank tests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use mtr::stats::{
    friedman, nemenyi_cd, wilcoxon_signed_rank, wins_losses, FriedmanResult, ResultTable,
    WilcoxonResult,
};

#[derive(Serialize)]
struct NemenyiReport {
    alpha: f64,
    critical_difference: f64,
}

#[derive(Serialize)]
struct PairwiseWilcoxon {
    method_a: String,
    method_b: String,
    #[serde(flatten)]
    result: Option<WilcoxonResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Serialize)]
struct ComparisonReport {
    methods: Vec<String>,
    datasets: Vec<String>,
    mean_ranks: Vec<f64>,
    /// `wins_losses[i][j]` = (datasets where i beats j, datasets where j
    /// beats i).
    wins_losses: Vec<Vec<(usize, usize)>>,
    friedman: FriedmanResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    nemenyi: Option<NemenyiReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nemenyi_note: Option<String>,
    wilcoxon: Vec<PairwiseWilcoxon>,
}

pub fn compare_methods(table_path: &Path, alpha: f64, output_dir: &Path) -> Result<()> {
    if (alpha - 0.05).abs() > 1e-9 && (alpha - 0.10).abs() > 1e-9 {
        bail!("alpha must be 0.05 or 0.10, got {alpha}");
    }
    let text = fs::read_to_string(table_path)
        .with_context(|| format!("cannot read {}", table_path.display()))?;
    let table = ResultTable::from_csv_str(&text)?;
    if table.methods.len() < 2 {
        bail!("nothing to compare: the table has a single method");
    }
    if table.datasets.len() < 2 {
        bail!(
            "comparison needs at least 2 datasets, got {}",
            table.datasets.len()
        );
    }

    let report = build_report(&table, alpha)?;
    let text_summary = render_text(&report);

    fs::create_dir_all(output_dir)
        .with_context(|| format!("creating {}", output_dir.display()))?;
    fs::write(
        output_dir.join("comparison.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    fs::write(output_dir.join("comparison.txt"), &text_summary)?;
    print!("{text_summary}");
    println!(
        "wrote comparison.json and comparison.txt to {}",
        output_dir.display()
    );
    Ok(())
}

fn build_report(table: &ResultTable, alpha: f64) -> Result<ComparisonReport> {
    let wl = wins_losses(table)?;
    let fr = friedman(table)?;
    let (nemenyi, nemenyi_note) = match nemenyi_cd(table.methods.len(), table.datasets.len(), alpha)
    {
        Ok(cd) => (
            Some(NemenyiReport {
                alpha,
                critical_difference: cd,
            }),
            None,
        ),
        Err(err) => (None, Some(format!("critical difference unavailable: {err}"))),
    };

    let mut wilcoxon = Vec::new();
    for a in 0..table.methods.len() {
        for b in (a + 1)..table.methods.len() {
            let entry = match wilcoxon_signed_rank(&table.scores[a], &table.scores[b]) {
                Ok(result) => PairwiseWilcoxon {
                    method_a: table.methods[a].clone(),
                    method_b: table.methods[b].clone(),
                    result: Some(result),
                    note: None,
                },
                Err(err) => PairwiseWilcoxon {
                    method_a: table.methods[a].clone(),
                    method_b: table.methods[b].clone(),
                    result: None,
                    note: Some(format!("test unavailable: {err}")),
                },
            };
            wilcoxon.push(entry);
        }
    }

    Ok(ComparisonReport {
        methods: table.methods.clone(),
        datasets: table.datasets.clone(),
        mean_ranks: fr.mean_ranks.clone(),
        wins_losses: wl,
        friedman: fr,
        nemenyi,
        nemenyi_note,
        wilcoxon,
    })
}

fn render_text(report: &ComparisonReport) -> String {
    let k = report.methods.len();
    let width = report
        .methods
        .iter()
        .map(|m| m.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "result table: {k} methods x {} datasets",
        report.datasets.len()
    );

    let _ = writeln!(out, "\nmean ranks (lower is better):");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        report.mean_ranks[a]
            .total_cmp(&report.mean_ranks[b])
            .then(a.cmp(&b))
    });
    for &i in &order {
        let _ = writeln!(
            out,
            "  {:<width$}  {:.4}",
            report.methods[i], report.mean_ranks[i]
        );
    }

    let fr = &report.friedman;
    if fr.degenerate {
        let _ = writeln!(
            out,
            "\nfriedman: chi-square = {:.4}, p = 0 (one method dominates on every dataset)",
            fr.chi_square
        );
    } else {
        match fr.iman_davenport_f {
            Some(f) => {
                let _ = writeln!(
                    out,
                    "\nfriedman: chi-square = {:.4}, iman-davenport F = {:.4}, p = {:.4}",
                    fr.chi_square, f, fr.p_value
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "\nfriedman: chi-square = {:.4}, p = {:.4}",
                    fr.chi_square, fr.p_value
                );
            }
        }
    }
    match (&report.nemenyi, &report.nemenyi_note) {
        (Some(nem), _) => {
            let _ = writeln!(
                out,
                "nemenyi critical difference (alpha = {}): {:.4}",
                nem.alpha, nem.critical_difference
            );
        }
        (None, Some(note)) => {
            let _ = writeln!(out, "nemenyi: {note}");
        }
        (None, None) => {}
    }

    let _ = writeln!(out, "\nwins:losses (row method vs column method):");
    let _ = write!(out, "  {:<width$}", "");
    for name in &report.methods {
        let _ = write!(out, "  {name:>width$}");
    }
    let _ = writeln!(out);
    for (i, name) in report.methods.iter().enumerate() {
        let _ = write!(out, "  {name:<width$}");
        for j in 0..k {
            if i == j {
                let _ = write!(out, "  {:>width$}", "-");
            } else {
                let (wins, losses) = report.wins_losses[i][j];
                let _ = write!(out, "  {:>width$}", format!("{wins}:{losses}"));
            }
        }
        let _ = writeln!(out);
    }

    let _ = writeln!(out, "\nwilcoxon signed-rank (two-sided):");
    for pair in &report.wilcoxon {
        match (&pair.result, &pair.note) {
            (Some(result), _) => {
                let _ = writeln!(
                    out,
                    "  {} vs {}: T- = {}, T+ = {}, n = {}, p = {:.4} ({})",
                    pair.method_a,
                    pair.method_b,
                    result.t_minus,
                    result.t_plus,
                    result.n_used,
                    result.p_two_sided,
                    if result.exact { "exact" } else { "normal approximation" }
                );
            }
            (None, Some(note)) => {
                let _ = writeln!(out, "  {} vs {}: {note}", pair.method_a, pair.method_b);
            }
            (None, None) => {}
        }
    }
    out
}
