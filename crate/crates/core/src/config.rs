use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};

pub const DEFAULT_THRESHOLD_CONSTANT: f64 = 2.0;
pub const DEFAULT_MAX_REJECTION_ROUNDS: usize = 50;

/// Parameters of one coreset build.
///
/// Exactly one of `epsilon` and `target_size` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kernel_family: KernelFamily,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_size: Option<usize>,
    pub seed: u64,
    pub query_budget: usize,
    #[serde(default)]
    pub partitioned: bool,
    #[serde(default = "default_threshold")]
    pub threshold_constant: f64,
    #[serde(default = "default_rounds")]
    pub max_rejection_rounds: usize,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD_CONSTANT
}

fn default_rounds() -> usize {
    DEFAULT_MAX_REJECTION_ROUNDS
}

impl RunConfig {
    /// Flat build down to `target_size` points with default tuning.
    pub fn for_size(spec: KernelSpec, target_size: usize, seed: u64, query_budget: usize) -> Self {
        RunConfig {
            kernel_family: spec.family,
            alpha: spec.alpha,
            epsilon: None,
            target_size: Some(target_size),
            seed,
            query_budget,
            partitioned: false,
            threshold_constant: DEFAULT_THRESHOLD_CONSTANT,
            max_rejection_rounds: DEFAULT_MAX_REJECTION_ROUNDS,
        }
    }

    /// Flat build that stops once the error budget would exceed `epsilon`.
    pub fn for_epsilon(spec: KernelSpec, epsilon: f64, seed: u64, query_budget: usize) -> Self {
        RunConfig { epsilon: Some(epsilon), target_size: None, ..Self::for_size(spec, 1, seed, query_budget) }
    }

    pub fn partitioned(mut self, on: bool) -> Self {
        self.partitioned = on;
        self
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.kernel_family, self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel()?;
        match (self.epsilon, self.target_size) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::param("exactly one of epsilon and target_size must be set"))
            }
            (Some(e), None) if !(e > 0.0 && e < 1.0) => {
                return Err(Error::param(format!("epsilon must lie in (0, 1), got {e}")))
            }
            (None, Some(0)) => return Err(Error::param("target_size must be positive")),
            _ => {}
        }
        if self.query_budget == 0 {
            return Err(Error::param("query_budget must be at least 1"));
        }
        if !(self.threshold_constant.is_finite() && self.threshold_constant > 0.0) {
            return Err(Error::param(format!(
                "threshold_constant must be positive, got {}",
                self.threshold_constant
            )));
        }
        if self.max_rejection_rounds == 0 {
            return Err(Error::param("max_rejection_rounds must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig::for_size(KernelSpec::new(KernelFamily::Gaussian, 1.0).unwrap(), 8, 1, 10)
    }

    #[test]
    fn validation() {
        base().validate().unwrap();
        assert!(RunConfig { epsilon: Some(0.1), ..base() }.validate().is_err());
        assert!(RunConfig { target_size: None, ..base() }.validate().is_err());
        let eps = RunConfig::for_epsilon(KernelSpec::new(KernelFamily::Laplacian, 2.0).unwrap(), 0.05, 0, 5);
        eps.validate().unwrap();
        assert!(RunConfig { epsilon: Some(1.0), ..eps.clone() }.validate().is_err());
        assert!(RunConfig { alpha: -1.0, ..base() }.validate().is_err());
        assert!(RunConfig { query_budget: 0, ..base() }.validate().is_err());
        assert!(RunConfig { max_rejection_rounds: 0, ..base() }.validate().is_err());
    }

    #[test]
    fn json_defaults() {
        let c: RunConfig = serde_json::from_str(
            r#"{"kernel_family":"laplacian","alpha":2.0,"target_size":4,"seed":3,"query_budget":9}"#,
        )
        .unwrap();
        assert_eq!(c.threshold_constant, 2.0);
        assert_eq!(c.max_rejection_rounds, 50);
        assert!(!c.partitioned);
    }
}
