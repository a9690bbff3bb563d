//! Repeated train/test evaluation of feature-learning pipelines.
//!
//! A pipeline standardizes on the training rows, optionally learns SAE features,
//! optionally selects or projects features, tunes every hyperparameter by k-fold
//! cross-validation inside the training rows and reports test accuracy of a linear SVM.

mod config;
mod experiment;
mod pipeline;

use std::fmt;
use std::str::FromStr;

pub use config::{ExperimentConfig, SAE_STRUCTURE_CANDIDATES};
pub use experiment::{
    parse_rendered_csv, parse_results_csv, render_table, repeat_split, results_to_csv, run_experiment, run_experiment_with_jobs,
    Cell, RepeatResult, ResultsTable, TableFormat,
};
pub use pipeline::{
    run_pipeline, FeatureMap, FittedSae, Hyperparameters, PipelineRun, Reduction,
    FOLD_SEED_OFFSET, SAE_SEED_OFFSET,
};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Llf,
    LlfSaef,
    LlfSemiSaef,
    Saef,
    SemiSaef,
}

impl Method {
    /// Column order of the rendered table.
    pub const ALL: [Method; 5] = [
        Method::Llf,
        Method::LlfSaef,
        Method::LlfSemiSaef,
        Method::Saef,
        Method::SemiSaef,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Llf => "LLF",
            Method::LlfSaef => "LLF+SAEF",
            Method::LlfSemiSaef => "LLF+semi-SAEF",
            Method::Saef => "SAEF",
            Method::SemiSaef => "semi-SAEF",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Method::Llf => "llf",
            Method::LlfSaef => "llf-saef",
            Method::LlfSemiSaef => "llf-semi-saef",
            Method::Saef => "saef",
            Method::SemiSaef => "semi-saef",
        }
    }

    pub fn uses_raw(self) -> bool {
        matches!(self, Method::Llf | Method::LlfSaef | Method::LlfSemiSaef)
    }

    pub fn uses_sae(self) -> bool {
        self != Method::Llf
    }

    /// Whether SAE pretraining also sees the unlabeled rows.
    pub fn is_semi(self) -> bool {
        matches!(self, Method::SemiSaef | Method::LlfSemiSaef)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Selector {
    None,
    Lasso,
    Ttest,
    Pca,
}

impl Selector {
    /// Row order of the rendered table.
    pub const ALL: [Selector; 4] = [Selector::None, Selector::Lasso, Selector::Ttest, Selector::Pca];

    pub fn label(self) -> &'static str {
        match self {
            Selector::None => "No FS",
            Selector::Lasso => "Lasso",
            Selector::Ttest => "t-test",
            Selector::Pca => "PCA",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Selector::None => "none",
            Selector::Lasso => "lasso",
            Selector::Ttest => "ttest",
            Selector::Pca => "pca",
        }
    }
}

fn parse_by<E: Copy>(s: &str, all: &[E], key: impl Fn(E) -> &'static str, label: impl Fn(E) -> &'static str, what: &str) -> Result<E> {
    let wanted = s.trim();
    all.iter()
        .copied()
        .find(|&e| key(e).eq_ignore_ascii_case(wanted) || label(e) == wanted)
        .ok_or_else(|| {
            let keys: Vec<&str> = all.iter().map(|&e| key(e)).collect();
            Error::invalid(format!("unknown {what} {wanted:?} (expected one of {})", keys.join(", ")))
        })
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_by(s, &Method::ALL, Method::key, Method::label, "method")
    }
}

impl FromStr for Selector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_by(s, &Selector::ALL, Selector::key, Selector::label, "selector")
    }
}

/// One populated (method, selector) cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PipelineSpec {
    method: Method,
    selector: Selector,
}

impl PipelineSpec {
    /// Lasso pairs with the three LLF-based methods, t-test and PCA only with LLF,
    /// and every method runs without selection.
    pub fn new(method: Method, selector: Selector) -> Result<Self> {
        let ok = match selector {
            Selector::None => true,
            Selector::Lasso => method.uses_raw(),
            Selector::Ttest | Selector::Pca => method == Method::Llf,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "{} with {} is not an evaluated combination",
                method.label(),
                selector.label()
            )));
        }
        Ok(PipelineSpec { method, selector })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn selector(&self) -> Selector {
        self.selector
    }

    /// All ten evaluated combinations, selector-major in table order.
    pub fn table1() -> Vec<PipelineSpec> {
        let mut out = Vec::new();
        for s in Selector::ALL {
            for m in Method::ALL {
                if let Ok(spec) = PipelineSpec::new(m, s) {
                    out.push(spec);
                }
            }
        }
        out
    }

    /// The four LLF pipelines: no selection, lasso, t-test and PCA.
    pub fn llf_selectors() -> Vec<PipelineSpec> {
        Selector::ALL
            .iter()
            .map(|&s| PipelineSpec { method: Method::Llf, selector: s })
            .collect()
    }

    /// `method:selector`, e.g. `llf-saef:lasso`.
    pub fn key(&self) -> String {
        format!("{}:{}", self.method.key(), self.selector.key())
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.selector {
            Selector::None => write!(f, "{}", self.method.label()),
            s => write!(f, "{}+{}", self.method.label(), s.label()),
        }
    }
}

impl FromStr for PipelineSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (m, sel) = s.split_once(':').unwrap_or((s, "none"));
        PipelineSpec::new(m.parse()?, sel.parse()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_cells() {
        let all = PipelineSpec::table1();
        assert_eq!(all.len(), 10);
        let count = |s: Selector| all.iter().filter(|p| p.selector() == s).count();
        assert_eq!(count(Selector::None), 5);
        assert_eq!(count(Selector::Lasso), 3);
        assert_eq!(count(Selector::Ttest), 1);
        assert_eq!(count(Selector::Pca), 1);
        assert!(PipelineSpec::new(Method::Saef, Selector::Pca).is_err());
        assert!(PipelineSpec::new(Method::Saef, Selector::Lasso).is_err());
        assert!(PipelineSpec::new(Method::LlfSaef, Selector::Ttest).is_err());
    }

    #[test]
    fn keys_round_trip() {
        for spec in PipelineSpec::table1() {
            assert_eq!(spec.key().parse::<PipelineSpec>().unwrap(), spec);
        }
        assert_eq!("llf".parse::<PipelineSpec>().unwrap(), PipelineSpec::new(Method::Llf, Selector::None).unwrap());
        assert_eq!("LLF+semi-SAEF".parse::<Method>().unwrap(), Method::LlfSemiSaef);
        assert!("llf:ridge".parse::<PipelineSpec>().is_err());
        assert_eq!(PipelineSpec::new(Method::LlfSaef, Selector::Lasso).unwrap().to_string(), "LLF+SAEF+Lasso");
    }
}
