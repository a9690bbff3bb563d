use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pca::ComponentRanking;
use crate::sae::{TrainConfig, DEFAULT_ITERATIONS, DEFAULT_LEARNING_RATE};
use crate::svm;

/// Structures compared when `sae_structure_search` is on.
pub const SAE_STRUCTURE_CANDIDATES: [&[usize]; 4] = [&[40, 20, 15], &[50, 25, 10], &[50, 20], &[40, 15]];

/// Everything a repeated experiment needs besides the data.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub repeats: usize,
    pub test_frac: f64,
    /// Draw each repeat's test rows per class in proportion to the class sizes.
    pub stratify: bool,
    /// Folds of the inner cross-validations.
    pub k: usize,
    /// Split seed of repeat `r` is `base_seed + r`.
    pub base_seed: u64,
    pub sae_dims: Vec<usize>,
    /// Learning rate and iteration count of SAE pretraining and fine-tuning. `l2` and
    /// `seed` are ignored: l2 comes from `l2_grid`, seeds from the repeat.
    pub sae_train: TrainConfig<f64>,
    /// Choose the SAE structure among [`SAE_STRUCTURE_CANDIDATES`] by inner CV.
    pub sae_structure_search: bool,
    pub l2_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    /// SVM cost used while tuning m and the number of PCs.
    pub inner_c: f64,
    pub lambda_count: usize,
    /// Smallest λ on the path as a fraction of λ_max.
    pub lambda_ratio: f64,
    /// Candidate feature counts for t-test selection; the full feature count is always added.
    pub m_grid: Vec<usize>,
    pub pc_grid: Vec<usize>,
    pub pca_ranking: ComponentRanking,
    /// Standardize SAE outputs with training statistics before selection and the SVM.
    pub scale_sae_features: bool,
    pub svm_tol: f64,
    pub svm_max_epochs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            repeats: 100,
            test_frac: 0.2,
            stratify: true,
            k: 10,
            base_seed: 0,
            sae_dims: vec![40, 15],
            sae_train: TrainConfig {
                learning_rate: DEFAULT_LEARNING_RATE,
                iterations: DEFAULT_ITERATIONS,
                l2: 0.0,
                seed: 0,
            },
            sae_structure_search: false,
            l2_grid: vec![1e-4, 1e-3, 1e-2],
            c_grid: svm::DEFAULT_C_GRID.to_vec(),
            inner_c: 1.0,
            lambda_count: 30,
            lambda_ratio: 1e-3,
            m_grid: vec![1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 25, 30, 40, 50],
            pc_grid: vec![2, 5, 10, 15, 20, 30, 40],
            pca_ranking: ComponentRanking::Variance,
            scale_sae_features: true,
            svm_tol: svm::DEFAULT_TOL,
            svm_max_epochs: svm::DEFAULT_MAX_EPOCHS,
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> Error {
    Error::invalid(format!("config key {key} = {value:?}: {why}"))
}

fn parse_one<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.trim().parse().map_err(|_| bad(key, value, "not a valid value"))
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| parse_one(key, t))
        .collect()
}

fn join<V: ToString>(vals: &[V]) -> String {
    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn ranking_name(r: ComponentRanking) -> &'static str {
    match r {
        ComponentRanking::Variance => "variance",
        ComponentRanking::Discriminatory => "discriminatory",
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));
        if self.repeats == 0 {
            return fail("repeats must be at least 1".into());
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return fail(format!("test_frac {} outside (0, 1)", self.test_frac));
        }
        if self.k < 2 {
            return fail(format!("k must be at least 2, got {}", self.k));
        }
        if self.sae_dims.is_empty() || self.sae_dims.windows(2).any(|w| w[1] >= w[0]) || self.sae_dims.contains(&0) {
            return fail(format!("sae_dims must be strictly decreasing and positive, got {:?}", self.sae_dims));
        }
        self.sae_train.validate()?;
        if self.l2_grid.is_empty() || self.l2_grid.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return fail("l2_grid must be a non-empty list of finite values >= 0".into());
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return fail("c_grid must be a non-empty list of finite values > 0".into());
        }
        if !(self.inner_c > 0.0) || !self.inner_c.is_finite() {
            return fail(format!("inner_c must be finite and > 0, got {}", self.inner_c));
        }
        if self.lambda_count < 2 {
            return fail("lambda_count must be at least 2".into());
        }
        if !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0) {
            return fail(format!("lambda_ratio {} outside (0, 1)", self.lambda_ratio));
        }
        if self.m_grid.contains(&0) || self.pc_grid.contains(&0) {
            return fail("m_grid and pc_grid entries must be positive".into());
        }
        if self.pc_grid.is_empty() {
            return fail("pc_grid must not be empty".into());
        }
        if !(self.svm_tol > 0.0) || self.svm_max_epochs == 0 {
            return fail("svm_tol must be > 0 and svm_max_epochs >= 1".into());
        }
        Ok(())
    }

    /// Parses `key = value` lines. Blank lines and lines starting with `#` are skipped;
    /// keys not present keep their defaults, unknown keys are an error.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    row: lineno + 1,
                    column: String::new(),
                    message: format!("expected `key = value`, found {line:?}"),
                });
            };
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                row: lineno + 1,
                column: key.trim().to_string(),
                message: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "repeats" => self.repeats = parse_one(key, value)?,
            "test_frac" => self.test_frac = parse_one(key, value)?,
            "stratify" => self.stratify = parse_one(key, value)?,
            "k" => self.k = parse_one(key, value)?,
            "base_seed" => self.base_seed = parse_one(key, value)?,
            "sae_dims" => self.sae_dims = parse_list(key, value)?,
            "learning_rate" => self.sae_train.learning_rate = parse_one(key, value)?,
            "iterations" => self.sae_train.iterations = parse_one(key, value)?,
            "sae_structure_search" => self.sae_structure_search = parse_one(key, value)?,
            "l2_grid" => self.l2_grid = parse_list(key, value)?,
            "c_grid" => self.c_grid = parse_list(key, value)?,
            "inner_c" => self.inner_c = parse_one(key, value)?,
            "lambda_count" => self.lambda_count = parse_one(key, value)?,
            "lambda_ratio" => self.lambda_ratio = parse_one(key, value)?,
            "m_grid" => self.m_grid = parse_list(key, value)?,
            "pc_grid" => self.pc_grid = parse_list(key, value)?,
            "pca_ranking" => {
                self.pca_ranking = match value {
                    "variance" => ComponentRanking::Variance,
                    "discriminatory" => ComponentRanking::Discriminatory,
                    _ => return Err(bad(key, value, "expected variance or discriminatory")),
                }
            }
            "scale_sae_features" => self.scale_sae_features = parse_one(key, value)?,
            "svm_tol" => self.svm_tol = parse_one(key, value)?,
            "svm_max_epochs" => self.svm_max_epochs = parse_one(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Inverse of [`ExperimentConfig::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("repeats", self.repeats.to_string());
        kv("test_frac", self.test_frac.to_string());
        kv("stratify", self.stratify.to_string());
        kv("k", self.k.to_string());
        kv("base_seed", self.base_seed.to_string());
        kv("sae_dims", join(&self.sae_dims));
        kv("learning_rate", self.sae_train.learning_rate.to_string());
        kv("iterations", self.sae_train.iterations.to_string());
        kv("sae_structure_search", self.sae_structure_search.to_string());
        kv("l2_grid", join(&self.l2_grid));
        kv("c_grid", join(&self.c_grid));
        kv("inner_c", self.inner_c.to_string());
        kv("lambda_count", self.lambda_count.to_string());
        kv("lambda_ratio", self.lambda_ratio.to_string());
        kv("m_grid", join(&self.m_grid));
        kv("pc_grid", join(&self.pc_grid));
        kv("pca_ranking", ranking_name(self.pca_ranking).to_string());
        kv("scale_sae_features", self.scale_sae_features.to_string());
        kv("svm_tol", self.svm_tol.to_string());
        kv("svm_max_epochs", self.svm_max_epochs.to_string());
        s
    }
}
