//! Replicated classification benchmark: stratified splits, per-class
//! subsampling, `(λ, σ²)` grid search, macro metrics and aggregation.

mod experiment;
mod grid;
mod metrics;
mod split;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use experiment::{
    cell_seeds, run_experiment, run_experiment_with, summarize, CellKey, CellSeeds, ExperimentResults, ResultRow,
    RunOptions, SummaryRow, METRIC_NAMES,
};
#[cfg(feature = "io")]
pub use experiment::{load_checkpoint, plot_csv_string, results_csv_string, summary_csv_string, write_outputs, Checkpoint};
pub use grid::{fit_method, grid_search, GridChoice, GridSpec};
pub use metrics::{compute_metrics, ConfusionCounts, MetricsReport};
pub use split::{stratified_split, subsample_per_class};

use crate::error::{Result, ShapeError};
use crate::kernels::KernelFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "vwg-krrc")]
    VwgKrrc,
    #[serde(rename = "fpg-krrc")]
    FpgKrrc,
    #[serde(rename = "rie-krrc")]
    RieKrrc,
    #[serde(rename = "naive-rrc")]
    NaiveRrc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::VwgKrrc, Method::FpgKrrc, Method::RieKrrc, Method::NaiveRrc];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::VwgKrrc => "vwg-krrc",
            Method::FpgKrrc => "fpg-krrc",
            Method::RieKrrc => "rie-krrc",
            Method::NaiveRrc => "naive-rrc",
        }
    }

    /// Kernel family of the KRRC methods; `None` for naive RRC.
    pub fn kernel_family(self) -> Option<KernelFamily> {
        match self {
            Method::VwgKrrc => Some(KernelFamily::Vwg),
            Method::FpgKrrc => Some(KernelFamily::Fpg),
            Method::RieKrrc => Some(KernelFamily::IntrinsicGaussian),
            Method::NaiveRrc => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ShapeError::InvalidInput(format!("unknown method `{s}`")))
    }
}

/// `λ ∈ {10⁻⁴, …, 10¹}`
pub fn default_lambda_grid() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1]
}

/// `σ² ∈ {10⁻², …, 10²}`
pub fn default_sigma_sq_grid() -> Vec<f64> {
    vec![1e-2, 1e-1, 1e0, 1e1, 1e2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub train_fraction: f64,
    pub subsample_sizes: Vec<usize>,
    pub replicates: usize,
    pub lambda_grid: Vec<f64>,
    pub sigma_sq_grid: Vec<f64>,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            subsample_sizes: (1..=10).map(|i| 10 * i).collect(),
            replicates: 20,
            lambda_grid: default_lambda_grid(),
            sigma_sq_grid: default_sigma_sq_grid(),
            seed: 0,
            methods: vec![Method::VwgKrrc, Method::RieKrrc, Method::NaiveRrc],
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ShapeError::InvalidInput(m.into()));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train fraction must lie in (0, 1)");
        }
        if self.subsample_sizes.is_empty() || self.subsample_sizes.contains(&0) {
            return bad("subsample sizes must be nonempty and positive");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        for (name, grid) in [("lambda", &self.lambda_grid), ("sigma^2", &self.sigma_sq_grid)] {
            if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(ShapeError::InvalidInput(format!(
                    "{name} grid must be nonempty with positive entries"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn default_plan_is_valid() {
        let p = ExperimentPlan::default();
        p.validate().unwrap();
        assert_eq!(p.subsample_sizes, vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 100]);
        assert_eq!(p.replicates, 20);
        let mut bad = p.clone();
        bad.lambda_grid.clear();
        assert!(bad.validate().is_err());
        let mut bad = p.clone();
        bad.train_fraction = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = p;
        bad.sigma_sq_grid = vec![1.0, -1.0];
        assert!(bad.validate().is_err());
    }
}
