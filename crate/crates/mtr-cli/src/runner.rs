//! Experiment runner: expands the config into dataset x method cells, runs
//! them in a thread pool with pre-derived seeds, and writes the result table,
//! per-cell reports, curve data, and a manifest with content hashes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use mtr::dataset::{load_dataset, Dataset};
use mtr::eval::{evaluate_cv, evaluate_holdout, report_to_json, EvalReport};
use mtr::gbtree::GbmConfig;
use mtr::rlc::{MultiTargetLearner, RlcLearner, RlcParams, StLearner};

use crate::config::{DatasetSection, ExperimentConfig};

#[derive(Debug, Clone)]
enum MethodKind {
    St,
    Rlc { r: usize, k: usize },
}

#[derive(Debug, Clone)]
struct MethodSpec {
    name: String,
    kind: MethodKind,
}

enum LoadedProtocol {
    Cv { data: Dataset, folds: usize },
    Holdout { train: Dataset, test: Dataset },
}

struct CellPlan {
    dataset: String,
    method: MethodSpec,
    seed: u64,
    fold_seed: u64,
}

struct CellOutcome {
    report: Option<EvalReport>,
    error: Option<String>,
    seconds: f64,
}

#[derive(Serialize)]
struct ManifestCell {
    dataset: String,
    method: String,
    seed: u64,
    status: String,
    seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct ManifestOutput {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    format: String,
    version: String,
    master_seed: u64,
    jobs: usize,
    cells: Vec<ManifestCell>,
    outputs: Vec<ManifestOutput>,
}

/// First 8 bytes of SHA-256 over the parts joined by a 0x1f separator.
/// Keeps every cell's randomness independent of scheduling and of sibling
/// cells.
fn derive_seed(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn build_methods(config: &ExperimentConfig) -> Vec<MethodSpec> {
    let mut methods = Vec::new();
    if config.st.enabled {
        methods.push(MethodSpec {
            name: "ST".into(),
            kind: MethodKind::St,
        });
    }
    if config.rlc.enabled {
        for &k in &config.rlc.k {
            for &r in &config.rlc.r {
                methods.push(MethodSpec {
                    name: format!("RLC_r{r}_k{k}"),
                    kind: MethodKind::Rlc { r, k },
                });
            }
        }
    }
    methods
}

fn build_learner(kind: &MethodKind, gbm: &GbmConfig, seed: u64) -> Box<dyn MultiTargetLearner> {
    let gbm = GbmConfig { seed, ..gbm.clone() };
    match kind {
        MethodKind::St => Box::new(StLearner { gbm }),
        MethodKind::Rlc { r, k } => Box::new(RlcLearner {
            params: RlcParams {
                r: *r,
                k: *k,
                seed,
                gbm,
            },
        }),
    }
}

fn load_one(section: &DatasetSection, impute: bool) -> Result<LoadedProtocol> {
    let spec = section.target_spec();
    let data = load_dataset(&section.path, &spec, impute)
        .with_context(|| format!("loading {}", section.path.display()))?;
    match (&section.folds, &section.test_path) {
        (Some(folds), None) => Ok(LoadedProtocol::Cv {
            data,
            folds: *folds,
        }),
        (None, Some(test_path)) => {
            let test = load_dataset(test_path, &spec, impute)
                .with_context(|| format!("loading {}", test_path.display()))?;
            Ok(LoadedProtocol::Holdout { train: data, test })
        }
        _ => unreachable!("config validation enforces exactly one protocol"),
    }
}

type LoadedMap = BTreeMap<String, std::result::Result<LoadedProtocol, String>>;

fn load_all(config: &ExperimentConfig) -> LoadedMap {
    config
        .datasets
        .iter()
        .map(|section| {
            let loaded = load_one(section, config.impute_missing).map_err(|e| format!("{e:#}"));
            (section.name.clone(), loaded)
        })
        .collect()
}

/// Runs every dataset x method cell and writes all output files. Returns
/// false when at least one cell failed; the failure is recorded in the
/// manifest and the cell is missing from the result table.
pub fn run_experiment(config: &ExperimentConfig) -> Result<bool> {
    let methods = build_methods(config);
    let datasets = load_all(config);
    let gbm = config.gbm.to_config();
    let out = &config.output_dir;
    prepare_output_dir(out)?;

    let master = config.seed.to_le_bytes();
    let mut cells = Vec::new();
    for section in &config.datasets {
        // One fold seed per dataset so every method sees the same splits.
        let fold_seed = derive_seed(&[section.name.as_bytes(), b"folds", &master]);
        for method in &methods {
            let seed = derive_seed(&[section.name.as_bytes(), method.name.as_bytes(), &master]);
            cells.push(CellPlan {
                dataset: section.name.clone(),
                method: method.clone(),
                seed,
                fold_seed,
            });
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .context("building the worker pool")?;
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| run_cell(cell, &datasets, &gbm, config))
            .collect()
    });

    let mut failed = 0usize;
    for (cell, outcome) in cells.iter().zip(&outcomes) {
        match (&outcome.report, &outcome.error) {
            (Some(report), _) => println!(
                "{} / {}: aRRMSE {:.4} ({:.1}s)",
                cell.dataset, cell.method.name, report.arrmse, outcome.seconds
            ),
            (None, Some(error)) => {
                failed += 1;
                eprintln!("{} / {}: FAILED: {error}", cell.dataset, cell.method.name);
            }
            _ => unreachable!("every cell has a report or an error"),
        }
    }

    write_results_csv(config, &methods, &outcomes, out)?;
    write_reports(&cells, &outcomes, out)?;
    write_curves(config, &cells, &outcomes, out)?;
    write_manifest(config, &cells, &outcomes, out)?;

    println!(
        "{} of {} cells succeeded; outputs in {}",
        cells.len() - failed,
        cells.len(),
        out.display()
    );
    Ok(failed == 0)
}

/// Clears the files this runner manages so the directory holds exactly one
/// run's outputs. Other files are left alone.
fn prepare_output_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for name in ["results.csv", "manifest.json"] {
        let path = out.join(name);
        if path.exists() {
            fs::remove_file(&path)?;
        }
    }
    for name in ["reports", "curves", "models"] {
        let path = out.join(name);
        if path.exists() {
            fs::remove_dir_all(&path)?;
        }
    }
    Ok(())
}

fn run_cell(
    cell: &CellPlan,
    datasets: &LoadedMap,
    gbm: &GbmConfig,
    config: &ExperimentConfig,
) -> CellOutcome {
    let start = Instant::now();
    let result = (|| -> Result<EvalReport> {
        let loaded = match datasets
            .get(&cell.dataset)
            .expect("cell references a configured dataset")
        {
            Ok(loaded) => loaded,
            Err(message) => anyhow::bail!("{message}"),
        };
        let learner = build_learner(&cell.method.kind, gbm, cell.seed);
        let policy = config.degenerate_targets.policy();
        let report = match loaded {
            LoadedProtocol::Cv { data, folds } => {
                evaluate_cv(learner.as_ref(), data, *folds, cell.fold_seed, policy)?
            }
            LoadedProtocol::Holdout { train, test } => {
                evaluate_holdout(learner.as_ref(), train, test, policy)?
            }
        };
        if config.save_models {
            // Holdout keeps the evaluated model (refit on the same train
            // split is identical); CV refits on the full dataset.
            let fit_data = match loaded {
                LoadedProtocol::Cv { data, .. } => data,
                LoadedProtocol::Holdout { train, .. } => train,
            };
            let model = learner.fit_seeded(fit_data, cell.seed)?;
            let dir = config
                .output_dir
                .join("models")
                .join(format!("{}__{}", cell.dataset, cell.method.name));
            model.save_bundle(&dir)?;
        }
        Ok(report)
    })();
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(report) => CellOutcome {
            report: Some(report),
            error: None,
            seconds,
        },
        Err(error) => CellOutcome {
            report: None,
            error: Some(format!("{error:#}")),
            seconds,
        },
    }
}

fn write_results_csv(
    config: &ExperimentConfig,
    methods: &[MethodSpec],
    outcomes: &[CellOutcome],
    out: &Path,
) -> Result<()> {
    // Cells are laid out dataset-major, method-minor.
    let n_methods = methods.len();
    let mut csv = String::from("method");
    for section in &config.datasets {
        csv.push(',');
        csv.push_str(&section.name);
    }
    csv.push('\n');
    for (mi, method) in methods.iter().enumerate() {
        csv.push_str(&method.name);
        for di in 0..config.datasets.len() {
            match &outcomes[di * n_methods + mi].report {
                Some(report) => {
                    let _ = write!(csv, ",{}", report.arrmse);
                }
                None => csv.push_str(",-"),
            }
        }
        csv.push('\n');
    }
    fs::write(out.join("results.csv"), csv).context("writing results.csv")?;
    Ok(())
}

fn write_reports(cells: &[CellPlan], outcomes: &[CellOutcome], out: &Path) -> Result<()> {
    let mut files = Vec::new();
    for (cell, outcome) in cells.iter().zip(outcomes) {
        if let Some(report) = &outcome.report {
            let name = format!("{}__{}.json", cell.dataset, cell.method.name);
            files.push((name, report_to_json(report)?));
        }
    }
    if files.is_empty() {
        return Ok(());
    }
    let dir = out.join("reports");
    fs::create_dir_all(&dir)?;
    for (name, text) in files {
        fs::write(dir.join(name), text)?;
    }
    Ok(())
}

/// Error-vs-r curve data: one file per (dataset, k), plus a cross-dataset
/// average per k restricted to r values that every dataset produced.
fn write_curves(
    config: &ExperimentConfig,
    cells: &[CellPlan],
    outcomes: &[CellOutcome],
    out: &Path,
) -> Result<()> {
    let mut series: BTreeMap<usize, BTreeMap<String, BTreeMap<usize, f64>>> = BTreeMap::new();
    for (cell, outcome) in cells.iter().zip(outcomes) {
        if let (MethodKind::Rlc { r, k }, Some(report)) = (&cell.method.kind, &outcome.report) {
            series
                .entry(*k)
                .or_default()
                .entry(cell.dataset.clone())
                .or_default()
                .insert(*r, report.arrmse);
        }
    }
    if series.is_empty() {
        return Ok(());
    }
    let dir = out.join("curves");
    fs::create_dir_all(&dir)?;
    for (k, by_dataset) in &series {
        for (dataset, points) in by_dataset {
            let mut csv = String::from("r,k,arrmse\n");
            for (r, arrmse) in points {
                let _ = writeln!(csv, "{r},{k},{arrmse}");
            }
            fs::write(dir.join(format!("{dataset}_k{k}.csv")), csv)?;
        }
        if config.datasets.len() >= 2 && by_dataset.len() == config.datasets.len() {
            let mut csv = String::from("r,k,arrmse\n");
            let mut rows = 0usize;
            let first = by_dataset.values().next().expect("series is non-empty");
            for &r in first.keys() {
                if by_dataset.values().all(|points| points.contains_key(&r)) {
                    let sum: f64 = by_dataset.values().map(|points| points[&r]).sum();
                    let mean = sum / by_dataset.len() as f64;
                    let _ = writeln!(csv, "{r},{k},{mean}");
                    rows += 1;
                }
            }
            if rows > 0 {
                fs::write(dir.join(format!("average_k{k}.csv")), csv)?;
            }
        }
    }
    Ok(())
}

fn write_manifest(
    config: &ExperimentConfig,
    cells: &[CellPlan],
    outcomes: &[CellOutcome],
    out: &Path,
) -> Result<()> {
    let mut manifest_cells: Vec<ManifestCell> = cells
        .iter()
        .zip(outcomes)
        .map(|(cell, outcome)| ManifestCell {
            dataset: cell.dataset.clone(),
            method: cell.method.name.clone(),
            seed: cell.seed,
            status: if outcome.report.is_some() { "ok" } else { "failed" }.into(),
            seconds: outcome.seconds,
            error: outcome.error.clone(),
        })
        .collect();
    manifest_cells.sort_by(|a, b| (&a.dataset, &a.method).cmp(&(&b.dataset, &b.method)));

    let mut outputs = Vec::new();
    for path in walk_files(out)? {
        let rel = path.strip_prefix(out).expect("walk stays under the root");
        let rel = rel.to_string_lossy().replace('\\', "/");
        if rel == "manifest.json" {
            continue;
        }
        let bytes = fs::read(&path)?;
        outputs.push(ManifestOutput {
            path: rel,
            sha256: hex(&Sha256::digest(&bytes)),
        });
    }
    outputs.sort_by(|a, b| a.path.cmp(&b.path));

    let manifest = RunManifest {
        format: "mtr-run/1".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        master_seed: config.seed,
        jobs: config.jobs,
        cells: manifest_cells,
        outputs,
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )
    .context("writing manifest.json")?;
    Ok(())
}

fn walk_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let path = entry.path();
            if entry.file_type()?.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    Ok(files)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
