//! Experiment configuration: a TOML file describing datasets, methods, and
//! sweep parameters, plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use mtr::dataset::TargetSpec;
use mtr::eval::DegeneratePolicy;
use mtr::gbtree::GbmConfig;

/// Base-learner settings; every field falls back to the library default.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GbmSection {
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_leaves: Option<usize>,
    pub min_leaf: Option<usize>,
}

impl GbmSection {
    pub fn to_config(&self) -> GbmConfig {
        let defaults = GbmConfig::default();
        GbmConfig {
            iterations: self.iterations.unwrap_or(defaults.iterations),
            learning_rate: self.learning_rate.unwrap_or(defaults.learning_rate),
            max_leaves: self.max_leaves.unwrap_or(defaults.max_leaves),
            min_leaf: self.min_leaf.unwrap_or(defaults.min_leaf),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StSection {
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for StSection {
    fn default() -> StSection {
        StSection { enabled: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlcSection {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Ensemble sizes to sweep.
    #[serde(default)]
    pub r: Vec<usize>,
    /// Combination sizes to sweep.
    #[serde(default)]
    pub k: Vec<usize>,
}

impl Default for RlcSection {
    fn default() -> RlcSection {
        RlcSection {
            enabled: true,
            r: Vec::new(),
            k: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: String,
    pub path: PathBuf,
    /// Number of trailing columns that are targets.
    pub targets: Option<usize>,
    /// Target attribute names; alternative to `targets`.
    pub names: Option<Vec<String>>,
    /// Cross-validation fold count; alternative to `test_path`.
    pub folds: Option<usize>,
    /// Separate test file for holdout evaluation.
    pub test_path: Option<PathBuf>,
}

impl DatasetSection {
    pub fn target_spec(&self) -> TargetSpec {
        match (&self.targets, &self.names) {
            (Some(n), None) => TargetSpec::LastK(*n),
            (None, Some(names)) => TargetSpec::Names(names.clone()),
            _ => unreachable!("validated"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateSetting {
    #[default]
    Error,
    Skip,
}

impl DegenerateSetting {
    pub fn policy(self) -> DegeneratePolicy {
        match self {
            DegenerateSetting::Error => DegeneratePolicy::Error,
            DegenerateSetting::Skip => DegeneratePolicy::SkipWithWarning,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub save_models: bool,
    #[serde(default = "default_true")]
    pub impute_missing: bool,
    #[serde(default)]
    pub degenerate_targets: DegenerateSetting,
    #[serde(default)]
    pub gbm: GbmSection,
    #[serde(default)]
    pub st: StSection,
    #[serde(default)]
    pub rlc: RlcSection,
    #[serde(rename = "dataset", default)]
    pub datasets: Vec<DatasetSection>,
}

fn default_true() -> bool {
    true
}

fn default_jobs() -> usize {
    0 // 0 means "let the thread pool decide"
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub r: Option<Vec<usize>>,
    pub k: Option<Vec<usize>>,
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut config: ExperimentConfig = toml::from_str(&text)
        .with_context(|| format!("cannot parse config {}", path.display()))?;

    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(folds) = overrides.folds {
        for dataset in &mut config.datasets {
            if dataset.folds.is_some() {
                dataset.folds = Some(folds);
            }
        }
    }
    if let Some(r) = &overrides.r {
        config.rlc.r = r.clone();
    }
    if let Some(k) = &overrides.k {
        config.rlc.k = k.clone();
    }
    if let Some(iterations) = overrides.iterations {
        config.gbm.iterations = Some(iterations);
    }
    if let Some(learning_rate) = overrides.learning_rate {
        config.gbm.learning_rate = Some(learning_rate);
    }
    if let Some(dir) = &overrides.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(jobs) = overrides.jobs {
        config.jobs = jobs;
    }

    validate(&config)?;
    Ok(config)
}

fn validate(config: &ExperimentConfig) -> Result<()> {
    if config.datasets.is_empty() {
        bail!("config lists no datasets");
    }
    if !config.st.enabled && !config.rlc.enabled {
        bail!("no methods enabled: set st.enabled or rlc.enabled");
    }
    if config.rlc.enabled {
        if config.rlc.r.is_empty() {
            bail!("rlc is enabled but the r sweep list is empty");
        }
        if config.rlc.k.is_empty() {
            bail!("rlc is enabled but the k sweep list is empty");
        }
        if let Some(r) = config.rlc.r.iter().find(|r| **r == 0) {
            bail!("invalid ensemble size r = {r}");
        }
        if let Some(k) = config.rlc.k.iter().find(|k| **k < 2) {
            bail!("combination size k = {k} is below 2");
        }
    }
    config.gbm.to_config().validate()?;

    let mut seen = std::collections::HashSet::new();
    for dataset in &config.datasets {
        if dataset.name.is_empty()
            || !dataset
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            bail!(
                "dataset name '{}' must be non-empty and use only letters, digits, '-', '_'",
                dataset.name
            );
        }
        if !seen.insert(dataset.name.clone()) {
            bail!("duplicate dataset name '{}'", dataset.name);
        }
        if dataset.name == "average" {
            bail!("dataset name 'average' is reserved for cross-dataset curve files");
        }
        if !dataset.path.is_file() {
            bail!(
                "dataset '{}': file {} does not exist",
                dataset.name,
                dataset.path.display()
            );
        }
        match (&dataset.targets, &dataset.names) {
            (Some(0), _) => bail!("dataset '{}': targets must be >= 1", dataset.name),
            (Some(_), None) | (None, Some(_)) => {}
            (Some(_), Some(_)) => bail!(
                "dataset '{}': give either `targets` or `names`, not both",
                dataset.name
            ),
            (None, None) => bail!(
                "dataset '{}': one of `targets` or `names` is required",
                dataset.name
            ),
        }
        match (&dataset.folds, &dataset.test_path) {
            (Some(folds), None) => {
                if *folds < 2 {
                    bail!("dataset '{}': folds must be >= 2", dataset.name);
                }
            }
            (None, Some(test)) => {
                if !test.is_file() {
                    bail!(
                        "dataset '{}': test file {} does not exist",
                        dataset.name,
                        test.display()
                    );
                }
            }
            (Some(_), Some(_)) => bail!(
                "dataset '{}': give either `folds` or `test_path`, not both",
                dataset.name
            ),
            (None, None) => bail!(
                "dataset '{}': one of `folds` or `test_path` is required",
                dataset.name
            ),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_csv(dir: &Path, name: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, "a,b,t\n1,2,3\n4,5,6\n7,8,9\n").unwrap();
        path
    }

    fn base_config(dir: &Path) -> String {
        let data = write_csv(dir, "d.csv");
        format!(
            "seed = 7\noutput_dir = \"{}\"\n[rlc]\nr = [8]\nk = [2]\n[[dataset]]\nname = \"d\"\npath = \"{}\"\ntargets = 1\nfolds = 3\n",
            dir.join("out").display(),
            data.display()
        )
    }

    #[test]
    fn parses_and_validates_minimal_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        fs::write(&path, base_config(dir.path())).unwrap();
        let config = load_config(&path, &Overrides::default()).unwrap();
        assert_eq!(config.seed, 7);
        assert!(config.st.enabled);
        assert_eq!(config.rlc.r, vec![8]);
        assert_eq!(config.datasets.len(), 1);
        assert!(config.impute_missing);
        assert_eq!(config.gbm.to_config().iterations, 100);
    }

    #[test]
    fn overrides_replace_config_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        fs::write(&path, base_config(dir.path())).unwrap();
        let overrides = Overrides {
            seed: Some(99),
            folds: Some(5),
            r: Some(vec![4, 6]),
            k: Some(vec![2]),
            iterations: Some(10),
            learning_rate: Some(0.5),
            output_dir: Some(dir.path().join("elsewhere")),
            jobs: Some(2),
        };
        let config = load_config(&path, &overrides).unwrap();
        assert_eq!(config.seed, 99);
        assert_eq!(config.datasets[0].folds, Some(5));
        assert_eq!(config.rlc.r, vec![4, 6]);
        assert_eq!(config.gbm.to_config().iterations, 10);
        assert_eq!(config.gbm.to_config().learning_rate, 0.5);
        assert_eq!(config.output_dir, dir.path().join("elsewhere"));
        assert_eq!(config.jobs, 2);
    }

    #[test]
    fn rejects_broken_configs() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_csv(dir.path(), "d.csv");
        let cases = [
            // no datasets
            "seed = 1\noutput_dir = \"o\"\n[rlc]\nr = [4]\nk = [2]\n".to_string(),
            // missing file
            "seed = 1\noutput_dir = \"o\"\n[rlc]\nr = [4]\nk = [2]\n[[dataset]]\nname = \"d\"\npath = \"nope.csv\"\ntargets = 1\nfolds = 2\n".to_string(),
            // empty sweep
            format!("seed = 1\noutput_dir = \"o\"\n[rlc]\nr = []\nk = [2]\n[[dataset]]\nname = \"d\"\npath = \"{}\"\ntargets = 1\nfolds = 2\n", data.display()),
            // k below 2
            format!("seed = 1\noutput_dir = \"o\"\n[rlc]\nr = [4]\nk = [1]\n[[dataset]]\nname = \"d\"\npath = \"{}\"\ntargets = 1\nfolds = 2\n", data.display()),
            // both protocol keys
            format!("seed = 1\noutput_dir = \"o\"\n[rlc]\nr = [4]\nk = [2]\n[[dataset]]\nname = \"d\"\npath = \"{0}\"\ntargets = 1\nfolds = 2\ntest_path = \"{0}\"\n", data.display()),
            // no method enabled
            format!("seed = 1\noutput_dir = \"o\"\n[st]\nenabled = false\n[rlc]\nenabled = false\nr = [4]\nk = [2]\n[[dataset]]\nname = \"d\"\npath = \"{}\"\ntargets = 1\nfolds = 2\n", data.display()),
            // bad dataset name
            format!("seed = 1\noutput_dir = \"o\"\n[rlc]\nr = [4]\nk = [2]\n[[dataset]]\nname = \"a/b\"\npath = \"{}\"\ntargets = 1\nfolds = 2\n", data.display()),
            // unknown key
            format!("seed = 1\noutput_dir = \"o\"\nbogus = 3\n[rlc]\nr = [4]\nk = [2]\n[[dataset]]\nname = \"d\"\npath = \"{}\"\ntargets = 1\nfolds = 2\n", data.display()),
        ];
        for (i, text) in cases.iter().enumerate() {
            let path = dir.path().join(format!("bad{i}.toml"));
            fs::write(&path, text).unwrap();
            assert!(
                load_config(&path, &Overrides::default()).is_err(),
                "case {i} should fail"
            );
        }
    }
}
