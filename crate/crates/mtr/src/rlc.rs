//! Training and prediction orchestration: the random-linear-combination
//! ensemble and the single-target baseline, behind a common learner trait.
//!
//! The ensemble normalizes targets, mixes them into `r` random combinations,
//! fits one boosted model per combination, and decodes predictions back to
//! the original target space by least squares. The baseline fits one boosted
//! model per raw target.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{build_coefficient_matrix, decode, encode, CoefficientMatrix};
use crate::dataset::{Dataset, Normalizer};
use crate::error::{Error, Result};
use crate::gbtree::{fit_gbm, GbmConfig, GbmModel};
use crate::util::derive_seed;

/// Ensemble hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlcParams {
    /// Number of random combinations (new targets); must be >= q at train
    /// time.
    pub r: usize,
    /// Targets mixed per combination; 2 <= k <= q.
    pub k: usize,
    pub seed: u64,
    pub gbm: GbmConfig,
}

/// Fitted ensemble: normalizer, coefficient matrix, and one model per
/// combination.
#[derive(Debug, Clone, PartialEq)]
pub struct RlcModel {
    pub normalizer: Normalizer,
    pub coefficients: CoefficientMatrix,
    pub models: Vec<GbmModel>,
}

/// Fitted single-target baseline: one model per original target. The
/// normalizer is present only when the caller trained on transformed
/// targets; [`train_st`] trains on raw targets and leaves it empty.
#[derive(Debug, Clone, PartialEq)]
pub struct StModel {
    pub normalizer: Option<Normalizer>,
    pub models: Vec<GbmModel>,
}

/// Trains the ensemble: fit normalizer, build the coefficient matrix, encode
/// targets, and fit one boosted model per encoded column. Per-model seeds are
/// derived from `params.seed` and the column index, so the fits can run in
/// parallel with schedule-independent results.
pub fn train_rlc(train: &Dataset, params: &RlcParams) -> Result<RlcModel> {
    params.gbm.validate()?;
    let normalizer = Normalizer::fit(&train.y);
    let coefficients = build_coefficient_matrix(train.q(), params.r, params.k, params.seed)?;
    let y_norm = normalizer.apply(&train.y);
    let encoded = encode(&y_norm, &coefficients)?;

    let models: Vec<GbmModel> = (0..params.r)
        .into_par_iter()
        .map(|i| {
            let column: Vec<f64> = encoded.z.column(i).to_vec();
            let config = GbmConfig {
                seed: derive_seed(params.seed, i as u64 + 1),
                ..params.gbm.clone()
            };
            fit_gbm(&train.x, &column, &config)
        })
        .collect::<Result<_>>()?;

    Ok(RlcModel {
        normalizer,
        coefficients,
        models,
    })
}

/// Decodes a vector of per-combination predictions into the original target
/// space: least-squares solve, then denormalization.
pub fn decode_predictions(
    coefficients: &CoefficientMatrix,
    normalizer: &Normalizer,
    z_row: &[f64],
) -> Result<Vec<f64>> {
    let y_norm = decode(coefficients, z_row)?;
    let row = Array2::from_shape_fn((1, y_norm.len()), |(_, j)| y_norm[j]);
    Ok(normalizer.invert(&row).row(0).to_vec())
}

/// Predicts one instance with the ensemble: per-model predictions form the
/// encoded vector, which is decoded and denormalized.
pub fn predict_rlc(model: &RlcModel, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
    let z_row: Vec<f64> = model.models.iter().map(|m| m.predict(x)).collect();
    decode_predictions(&model.coefficients, &model.normalizer, &z_row)
}

/// Trains the single-target baseline: one boosted model per raw target
/// column, fitted independently (and in parallel).
pub fn train_st(train: &Dataset, gbm: &GbmConfig) -> Result<StModel> {
    gbm.validate()?;
    let models: Vec<GbmModel> = (0..train.q())
        .into_par_iter()
        .map(|j| {
            let column: Vec<f64> = train.y.column(j).to_vec();
            let config = GbmConfig {
                seed: derive_seed(gbm.seed, j as u64 + 1),
                ..gbm.clone()
            };
            fit_gbm(&train.x, &column, &config)
        })
        .collect::<Result<_>>()?;
    Ok(StModel {
        normalizer: None,
        models,
    })
}

/// Predicts one instance with the baseline: concatenated per-target outputs,
/// denormalized only if the model carries a normalizer.
pub fn predict_st(model: &StModel, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
    let preds: Vec<f64> = model.models.iter().map(|m| m.predict(x)).collect();
    match &model.normalizer {
        None => Ok(preds),
        Some(norm) => {
            let row = Array2::from_shape_fn((1, preds.len()), |(_, j)| preds[j]);
            Ok(norm.invert(&row).row(0).to_vec())
        }
    }
}

/// A fitted multi-target model: pure, thread-safe prediction plus bundle
/// persistence.
pub trait MultiTargetModel: Send + Sync {
    /// Predicted target vector (length q) for one instance.
    fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>>;
    /// Number of targets predicted.
    fn q(&self) -> usize;
    /// Writes the model to a bundle directory (see [`load_bundle`]).
    fn save_bundle(&self, dir: &Path) -> Result<()>;
}

/// A trainable method specification. Implementations must be deterministic
/// given the training data and `seed`, independent of thread scheduling.
pub trait MultiTargetLearner: Send + Sync {
    /// Stable method name used in result tables (e.g. "ST", "RLC_r100_k2").
    fn name(&self) -> String;
    /// The learner's master seed.
    fn seed(&self) -> u64;
    /// Fits with an explicit seed in place of the master seed (used by
    /// cross-validation to give each fold its own derived seed).
    fn fit_seeded(&self, train: &Dataset, seed: u64) -> Result<Box<dyn MultiTargetModel>>;
    /// Fits with the master seed.
    fn fit(&self, train: &Dataset) -> Result<Box<dyn MultiTargetModel>> {
        self.fit_seeded(train, self.seed())
    }
}

/// Ensemble learner configuration.
#[derive(Debug, Clone)]
pub struct RlcLearner {
    pub params: RlcParams,
}

/// Baseline learner configuration.
#[derive(Debug, Clone)]
pub struct StLearner {
    pub gbm: GbmConfig,
}

/// Fitted ensemble with the parameters that produced it.
pub struct TrainedRlc {
    pub params: RlcParams,
    pub model: RlcModel,
}

/// Fitted baseline with the configuration that produced it.
pub struct TrainedSt {
    pub gbm: GbmConfig,
    pub model: StModel,
}

impl MultiTargetLearner for RlcLearner {
    fn name(&self) -> String {
        format!("RLC_r{}_k{}", self.params.r, self.params.k)
    }

    fn seed(&self) -> u64 {
        self.params.seed
    }

    fn fit_seeded(&self, train: &Dataset, seed: u64) -> Result<Box<dyn MultiTargetModel>> {
        let params = RlcParams {
            seed,
            ..self.params.clone()
        };
        let model = train_rlc(train, &params)?;
        Ok(Box::new(TrainedRlc { params, model }))
    }
}

impl MultiTargetLearner for StLearner {
    fn name(&self) -> String {
        "ST".into()
    }

    fn seed(&self) -> u64 {
        self.gbm.seed
    }

    fn fit_seeded(&self, train: &Dataset, seed: u64) -> Result<Box<dyn MultiTargetModel>> {
        let gbm = GbmConfig { seed, ..self.gbm.clone() };
        let model = train_st(train, &gbm)?;
        Ok(Box::new(TrainedSt { gbm, model }))
    }
}

impl MultiTargetModel for TrainedRlc {
    fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        predict_rlc(&self.model, x)
    }

    fn q(&self) -> usize {
        self.model.coefficients.q()
    }

    fn save_bundle(&self, dir: &Path) -> Result<()> {
        save_rlc_bundle(&self.model, &self.params, dir)
    }
}

impl MultiTargetModel for TrainedSt {
    fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        predict_st(&self.model, x)
    }

    fn q(&self) -> usize {
        self.model.models.len()
    }

    fn save_bundle(&self, dir: &Path) -> Result<()> {
        save_st_bundle(&self.model, &self.gbm, dir)
    }
}

const BUNDLE_FORMAT: &str = "mtr-bundle/1";

/// Contents of a bundle's `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    /// "rlc" or "st".
    pub kind: String,
    pub q: usize,
    pub models: usize,
    pub gbm: GbmConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    pub normalizer: bool,
}

fn normalizer_csv(norm: &Normalizer) -> String {
    let mut out = String::new();
    for &(min, max) in norm.ranges() {
        out.push_str(&format!("{min},{max}\n"));
    }
    out
}

fn parse_normalizer_csv(text: &str) -> Result<Normalizer> {
    let mut ranges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parts: Vec<&str> = trimmed.split(',').collect();
        let bad = || Error::Parse {
            line: idx + 1,
            message: format!("invalid normalizer range '{trimmed}'"),
        };
        if parts.len() != 2 {
            return Err(bad());
        }
        let min: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let max: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        ranges.push((min, max));
    }
    Normalizer::from_ranges(ranges)
}

fn write_models(dir: &Path, models: &[GbmModel]) -> Result<()> {
    let models_dir = dir.join("models");
    std::fs::create_dir_all(&models_dir)?;
    for (i, model) in models.iter().enumerate() {
        std::fs::write(models_dir.join(format!("model_{i:05}.txt")), model.to_text())?;
    }
    Ok(())
}

fn read_models(dir: &Path, count: usize) -> Result<Vec<GbmModel>> {
    let models_dir = dir.join("models");
    (0..count)
        .map(|i| {
            let path = models_dir.join(format!("model_{i:05}.txt"));
            let text = std::fs::read_to_string(&path)?;
            GbmModel::from_text(&text)
        })
        .collect()
}

/// Writes an ensemble bundle: manifest, coefficient CSV, normalizer CSV, and
/// one text file per model.
pub fn save_rlc_bundle(model: &RlcModel, params: &RlcParams, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        kind: "rlc".into(),
        q: model.coefficients.q(),
        models: model.models.len(),
        gbm: params.gbm.clone(),
        r: Some(params.r),
        k: Some(params.k),
        seed: Some(params.seed),
        normalizer: true,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    std::fs::write(dir.join("coefficients.csv"), model.coefficients.to_csv_string())?;
    std::fs::write(dir.join("normalizer.csv"), normalizer_csv(&model.normalizer))?;
    write_models(dir, &model.models)
}

/// Writes a baseline bundle: manifest, optional normalizer CSV, and one text
/// file per model.
pub fn save_st_bundle(model: &StModel, gbm: &GbmConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        kind: "st".into(),
        q: model.models.len(),
        models: model.models.len(),
        gbm: gbm.clone(),
        r: None,
        k: None,
        seed: Some(gbm.seed),
        normalizer: model.normalizer.is_some(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    if let Some(norm) = &model.normalizer {
        std::fs::write(dir.join("normalizer.csv"), normalizer_csv(norm))?;
    }
    write_models(dir, &model.models)
}

/// Reads and validates a bundle's manifest.
pub fn read_manifest(dir: &Path) -> Result<BundleManifest> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: BundleManifest = serde_json::from_str(&text)?;
    if manifest.format != BUNDLE_FORMAT {
        return Err(Error::ModelFormat(format!(
            "unsupported bundle format '{}', expected '{BUNDLE_FORMAT}'",
            manifest.format
        )));
    }
    Ok(manifest)
}

/// Loads a bundle written by [`MultiTargetModel::save_bundle`], dispatching
/// on the manifest's `kind`.
pub fn load_bundle(dir: &Path) -> Result<Box<dyn MultiTargetModel>> {
    let manifest = read_manifest(dir)?;
    let models = read_models(dir, manifest.models)?;
    match manifest.kind.as_str() {
        "rlc" => {
            let coefficients = CoefficientMatrix::from_csv_str(&std::fs::read_to_string(
                dir.join("coefficients.csv"),
            )?)?;
            if coefficients.q() != manifest.q || coefficients.r() != manifest.models {
                return Err(Error::ModelFormat(format!(
                    "coefficient matrix is {}x{}, manifest declares {}x{}",
                    coefficients.q(),
                    coefficients.r(),
                    manifest.q,
                    manifest.models
                )));
            }
            let normalizer =
                parse_normalizer_csv(&std::fs::read_to_string(dir.join("normalizer.csv"))?)?;
            if normalizer.q() != manifest.q {
                return Err(Error::ModelFormat(format!(
                    "normalizer covers {} targets, manifest declares {}",
                    normalizer.q(),
                    manifest.q
                )));
            }
            let params = RlcParams {
                r: manifest.r.unwrap_or(manifest.models),
                k: manifest.k.unwrap_or(0),
                seed: manifest.seed.unwrap_or(0),
                gbm: manifest.gbm.clone(),
            };
            Ok(Box::new(TrainedRlc {
                params,
                model: RlcModel {
                    normalizer,
                    coefficients,
                    models,
                },
            }))
        }
        "st" => {
            let normalizer = if manifest.normalizer {
                Some(parse_normalizer_csv(&std::fs::read_to_string(
                    dir.join("normalizer.csv"),
                )?)?)
            } else {
                None
            };
            Ok(Box::new(TrainedSt {
                gbm: manifest.gbm.clone(),
                model: StModel { normalizer, models },
            }))
        }
        other => Err(Error::ModelFormat(format!("unknown bundle kind '{other}'"))),
    }
}
