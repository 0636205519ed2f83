//! Dataset ingestion, missing-value imputation, target normalization, and
//! train/test split plans.
//!
//! Supported file formats are a numeric-only ARFF subset and plain CSV with a
//! header row. `?` marks a missing cell in both. Targets are designated
//! out-of-band, either as the last `q` attributes or by an explicit name list.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which attributes of a parsed file are targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSpec {
    /// The last `q` attributes in file order.
    LastK(usize),
    /// Attributes selected by name, in the listed order.
    Names(Vec<String>),
}

/// Parsed dataset that may still contain missing cells (stored as NaN).
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub input_names: Vec<String>,
    pub target_names: Vec<String>,
}

/// Complete dataset: every cell is a finite number.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub input_names: Vec<String>,
    pub target_names: Vec<String>,
}

impl RawDataset {
    pub fn has_missing(&self) -> bool {
        self.x.iter().chain(self.y.iter()).any(|v| v.is_nan())
    }

    /// Converts to a [`Dataset`] without imputation; any missing cell is an
    /// error naming the attribute.
    pub fn require_complete(&self) -> Result<Dataset> {
        for (names, mat) in [(&self.input_names, &self.x), (&self.target_names, &self.y)] {
            for (j, name) in names.iter().enumerate() {
                if mat.column(j).iter().any(|v| v.is_nan()) {
                    return Err(Error::Config(format!(
                        "attribute '{name}' has missing values and imputation is disabled"
                    )));
                }
            }
        }
        Ok(Dataset {
            x: self.x.clone(),
            y: self.y.clone(),
            input_names: self.input_names.clone(),
            target_names: self.target_names.clone(),
        })
    }
}

impl Dataset {
    /// Number of rows.
    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    /// Number of input attributes.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of targets.
    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    /// New dataset containing the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let x = Array2::from_shape_fn((rows.len(), self.p()), |(i, j)| self.x[[rows[i], j]]);
        let y = Array2::from_shape_fn((rows.len(), self.q()), |(i, j)| self.y[[rows[i], j]]);
        Dataset {
            x,
            y,
            input_names: self.input_names.clone(),
            target_names: self.target_names.clone(),
        }
    }
}

fn unquote(token: &str) -> &str {
    let t = token.trim();
    if t.len() >= 2 {
        let bytes = t.as_bytes();
        if (bytes[0] == b'\'' && bytes[t.len() - 1] == b'\'')
            || (bytes[0] == b'"' && bytes[t.len() - 1] == b'"')
        {
            return &t[1..t.len() - 1];
        }
    }
    t
}

fn parse_cell(raw: &str, line: usize) -> Result<f64> {
    let t = raw.trim();
    if t == "?" {
        return Ok(f64::NAN);
    }
    let value: f64 = t.parse().map_err(|_| Error::Parse {
        line,
        message: format!("expected a numeric value, found '{t}'"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value '{t}'"),
        });
    }
    Ok(value)
}

fn parse_data_row(line_text: &str, line: usize, expected: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line_text.split(',').collect();
    if fields.len() != expected {
        return Err(Error::Parse {
            line,
            message: format!("expected {expected} fields, found {}", fields.len()),
        });
    }
    fields.iter().map(|f| parse_cell(f, line)).collect()
}

/// Splits a parsed table into inputs and targets according to `targets`.
fn designate_targets(
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    targets: &TargetSpec,
) -> Result<RawDataset> {
    let n = names.len();
    let target_cols: Vec<usize> = match targets {
        TargetSpec::LastK(q) => {
            if *q == 0 {
                return Err(Error::Config("target count must be at least 1".into()));
            }
            if *q >= n {
                return Err(Error::Config(format!(
                    "target count {q} leaves no input attributes ({n} attributes total)"
                )));
            }
            (n - q..n).collect()
        }
        TargetSpec::Names(list) => {
            if list.is_empty() {
                return Err(Error::Config("target name list is empty".into()));
            }
            let mut cols = Vec::with_capacity(list.len());
            for want in list {
                match names.iter().position(|n| n == want) {
                    Some(j) => cols.push(j),
                    None => {
                        return Err(Error::Config(format!(
                            "target attribute '{want}' not found in the file"
                        )))
                    }
                }
            }
            if cols.len() >= n {
                return Err(Error::Config(format!(
                    "all {n} attributes designated as targets; no inputs remain"
                )));
            }
            cols
        }
    };

    let is_target = {
        let mut mask = vec![false; n];
        for &j in &target_cols {
            mask[j] = true;
        }
        mask
    };
    let input_cols: Vec<usize> = (0..n).filter(|&j| !is_target[j]).collect();

    let m = rows.len();
    let x = Array2::from_shape_fn((m, input_cols.len()), |(i, j)| rows[i][input_cols[j]]);
    let y = Array2::from_shape_fn((m, target_cols.len()), |(i, j)| rows[i][target_cols[j]]);
    Ok(RawDataset {
        x,
        y,
        input_names: input_cols.iter().map(|&j| names[j].clone()).collect(),
        target_names: target_cols.iter().map(|&j| names[j].clone()).collect(),
    })
}

fn check_duplicate_names(names: &[String], line: usize) -> Result<()> {
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate attribute name '{name}'"),
            });
        }
    }
    Ok(())
}

/// Parses the supported ARFF subset: `@relation`, numeric `@attribute` lines,
/// `@data`, comma-separated rows, `%` comments, `?` for missing.
pub fn parse_arff(text: &str, targets: &TargetSpec) -> Result<RawDataset> {
    let mut names: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut in_data = false;
    let mut data_line = 0;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = trimmed.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            }
            if lower.starts_with("@attribute") {
                let rest = trimmed["@attribute".len()..].trim();
                let (name, kind) = split_attribute(rest, line)?;
                let kind_lower = kind.to_ascii_lowercase();
                match kind_lower.as_str() {
                    "numeric" | "real" | "integer" => names.push(name),
                    _ if kind_lower.starts_with('{') => {
                        return Err(Error::UnsupportedAttribute {
                            name,
                            kind: "nominal".into(),
                        })
                    }
                    "string" => {
                        return Err(Error::UnsupportedAttribute {
                            name,
                            kind: "string".into(),
                        })
                    }
                    _ if kind_lower.starts_with("date") => {
                        return Err(Error::UnsupportedAttribute {
                            name,
                            kind: "date".into(),
                        })
                    }
                    _ if kind_lower.starts_with("relational") => {
                        return Err(Error::UnsupportedAttribute {
                            name,
                            kind: "relational".into(),
                        })
                    }
                    other => {
                        return Err(Error::Parse {
                            line,
                            message: format!("unknown attribute type '{other}'"),
                        })
                    }
                }
                continue;
            }
            if lower == "@data" {
                if names.is_empty() {
                    return Err(Error::Parse {
                        line,
                        message: "@data before any @attribute declaration".into(),
                    });
                }
                check_duplicate_names(&names, line)?;
                in_data = true;
                data_line = line;
                continue;
            }
            return Err(Error::Parse {
                line,
                message: format!("expected @relation, @attribute, or @data, found '{trimmed}'"),
            });
        }
        if trimmed.starts_with('{') {
            return Err(Error::Parse {
                line,
                message: "sparse ARFF rows are not supported".into(),
            });
        }
        rows.push(parse_data_row(trimmed, line, names.len())?);
    }

    if !in_data {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: "missing @data section".into(),
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: data_line,
            message: "no data rows".into(),
        });
    }
    designate_targets(names, rows, targets)
}

/// Splits the remainder of an `@attribute` line into (name, type).
fn split_attribute(rest: &str, line: usize) -> Result<(String, String)> {
    let rest = rest.trim();
    if rest.is_empty() {
        return Err(Error::Parse {
            line,
            message: "attribute declaration missing name and type".into(),
        });
    }
    let (name, kind) = if rest.starts_with('\'') || rest.starts_with('"') {
        let quote = rest.chars().next().unwrap();
        match rest[1..].find(quote) {
            Some(end) => (rest[1..1 + end].to_string(), rest[2 + end..].to_string()),
            None => {
                return Err(Error::Parse {
                    line,
                    message: "unterminated quoted attribute name".into(),
                })
            }
        }
    } else {
        match rest.find(char::is_whitespace) {
            Some(end) => (rest[..end].to_string(), rest[end..].to_string()),
            None => {
                return Err(Error::Parse {
                    line,
                    message: "attribute declaration missing a type".into(),
                })
            }
        }
    };
    let kind = kind.trim().to_string();
    if kind.is_empty() {
        return Err(Error::Parse {
            line,
            message: "attribute declaration missing a type".into(),
        });
    }
    Ok((name, kind))
}

/// Parses a CSV file: header row of attribute names, then numeric rows with
/// `?` for missing cells.
pub fn parse_csv(text: &str, targets: &TargetSpec) -> Result<RawDataset> {
    let mut names: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header_seen = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !header_seen {
            names = trimmed
                .split(',')
                .map(|t| unquote(t).to_string())
                .collect();
            if names.iter().any(|n| n.is_empty()) {
                return Err(Error::Parse {
                    line,
                    message: "empty attribute name in header".into(),
                });
            }
            check_duplicate_names(&names, line)?;
            header_seen = true;
            continue;
        }
        rows.push(parse_data_row(trimmed, line, names.len())?);
    }

    if !header_seen {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: "no data rows".into(),
        });
    }
    designate_targets(names, rows, targets)
}

/// Replaces each missing cell with its column mean over observed cells.
pub fn impute_mean(raw: &RawDataset) -> Result<Dataset> {
    let fill = |mat: &Array2<f64>, names: &[String]| -> Result<Array2<f64>> {
        let mut out = mat.clone();
        for j in 0..mat.ncols() {
            let col = mat.column(j);
            let observed: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
            if observed.is_empty() {
                return Err(Error::AllMissing {
                    name: names[j].clone(),
                });
            }
            if observed.len() == col.len() {
                continue;
            }
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            for i in 0..out.nrows() {
                if out[[i, j]].is_nan() {
                    out[[i, j]] = mean;
                }
            }
        }
        Ok(out)
    };
    Ok(Dataset {
        x: fill(&raw.x, &raw.input_names)?,
        y: fill(&raw.y, &raw.target_names)?,
        input_names: raw.input_names.clone(),
        target_names: raw.target_names.clone(),
    })
}

/// Loads a dataset file, dispatching on the extension (`.arff` or `.csv`).
pub fn load_dataset(path: &Path, targets: &TargetSpec, impute_missing: bool) -> Result<Dataset> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let text = std::fs::read_to_string(path)?;
    let raw = match ext.as_str() {
        "arff" => parse_arff(&text, targets)?,
        "csv" => parse_csv(&text, targets)?,
        other => {
            return Err(Error::Config(format!(
                "unsupported dataset extension '{other}' for {}",
                path.display()
            )))
        }
    };
    if impute_missing {
        impute_mean(&raw)
    } else {
        raw.require_complete()
    }
}

/// Per-target 0-1 normalization ranges fitted on training targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    ranges: Vec<(f64, f64)>,
}

impl Normalizer {
    /// Fits per-target (min, max) over the given training targets.
    ///
    /// Panics if `y_train` is empty.
    pub fn fit(y_train: &Array2<f64>) -> Normalizer {
        assert!(y_train.nrows() >= 1, "normalizer fitted on empty matrix");
        let ranges = (0..y_train.ncols())
            .map(|j| {
                let col = y_train.column(j);
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (min, max)
            })
            .collect();
        Normalizer { ranges }
    }

    /// Rebuilds a normalizer from stored (min, max) pairs.
    pub fn from_ranges(ranges: Vec<(f64, f64)>) -> Result<Normalizer> {
        if ranges.is_empty() {
            return Err(Error::Config("normalizer has no target ranges".into()));
        }
        for (j, &(min, max)) in ranges.iter().enumerate() {
            if !(min.is_finite() && max.is_finite() && min <= max) {
                return Err(Error::Config(format!(
                    "invalid normalizer range ({min}, {max}) for target {j}"
                )));
            }
        }
        Ok(Normalizer { ranges })
    }

    pub fn q(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    /// Maps each target value v to (v - min) / (max - min); a constant
    /// training target maps to 0. Values outside the training range map
    /// outside [0, 1] and are not clipped.
    pub fn apply(&self, y: &Array2<f64>) -> Array2<f64> {
        assert_eq!(y.ncols(), self.q(), "normalizer target count mismatch");
        Array2::from_shape_fn(y.dim(), |(i, j)| {
            let (min, max) = self.ranges[j];
            if max > min {
                (y[[i, j]] - min) / (max - min)
            } else {
                0.0
            }
        })
    }

    /// Inverse of [`apply`](Normalizer::apply): u maps to min + u·(max - min);
    /// a constant training target maps back to that constant.
    pub fn invert(&self, y: &Array2<f64>) -> Array2<f64> {
        assert_eq!(y.ncols(), self.q(), "normalizer target count mismatch");
        Array2::from_shape_fn(y.dim(), |(i, j)| {
            let (min, max) = self.ranges[j];
            if max > min {
                min + y[[i, j]] * (max - min)
            } else {
                min
            }
        })
    }
}

/// Row split plan: a single holdout split or k-fold cross-validation
/// assignments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitPlan {
    Holdout {
        train_indices: Vec<usize>,
        test_indices: Vec<usize>,
    },
    Cv {
        fold_assignments: Vec<usize>,
        folds: usize,
        seed: u64,
    },
}

impl SplitPlan {
    /// (train, test) index pairs, one per fold (a holdout plan yields one).
    pub fn splits(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        match self {
            SplitPlan::Holdout {
                train_indices,
                test_indices,
            } => vec![(train_indices.clone(), test_indices.clone())],
            SplitPlan::Cv {
                fold_assignments,
                folds,
                ..
            } => (0..*folds)
                .map(|f| {
                    let mut train = Vec::new();
                    let mut test = Vec::new();
                    for (i, &a) in fold_assignments.iter().enumerate() {
                        if a == f {
                            test.push(i);
                        } else {
                            train.push(i);
                        }
                    }
                    (train, test)
                })
                .collect(),
        }
    }
}

/// Builds a holdout plan, validating that the two index lists partition
/// `0..m` exactly.
pub fn make_holdout(m: usize, train_indices: Vec<usize>, test_indices: Vec<usize>) -> Result<SplitPlan> {
    let mut seen = vec![false; m];
    for &i in train_indices.iter().chain(test_indices.iter()) {
        if i >= m {
            return Err(Error::Config(format!(
                "split index {i} out of range for {m} rows"
            )));
        }
        if seen[i] {
            return Err(Error::Config(format!("split index {i} appears twice")));
        }
        seen[i] = true;
    }
    if seen.iter().any(|&s| !s) {
        let missing = seen.iter().position(|&s| !s).unwrap();
        return Err(Error::Config(format!(
            "split omits row {missing} of 0..{m}"
        )));
    }
    if train_indices.is_empty() || test_indices.is_empty() {
        return Err(Error::Config("holdout split has an empty side".into()));
    }
    Ok(SplitPlan::Holdout {
        train_indices,
        test_indices,
    })
}

/// Builds a k-fold plan: a seeded random permutation of rows is dealt
/// round-robin into folds, so fold sizes differ by at most 1.
pub fn make_kfold(m: usize, folds: usize, seed: u64) -> Result<SplitPlan> {
    if folds < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 folds, got {folds}"
        )));
    }
    if folds > m {
        return Err(Error::Config(format!(
            "cannot split {m} rows into {folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_assignments = vec![0usize; m];
    for (pos, &row) in order.iter().enumerate() {
        fold_assignments[row] = pos % folds;
    }
    Ok(SplitPlan::Cv {
        fold_assignments,
        folds,
        seed,
    })
}

/// Renders a dataset back to CSV text (used by tooling and tests).
pub fn to_csv_string(d: &Dataset) -> String {
    let mut out = String::new();
    let names: Vec<&str> = d
        .input_names
        .iter()
        .chain(d.target_names.iter())
        .map(|s| s.as_str())
        .collect();
    let _ = writeln!(out, "{}", names.join(","));
    for i in 0..d.m() {
        let mut fields: Vec<String> = Vec::with_capacity(d.p() + d.q());
        for j in 0..d.p() {
            fields.push(format!("{}", d.x[[i, j]]));
        }
        for j in 0..d.q() {
            fields.push(format!("{}", d.y[[i, j]]));
        }
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}
