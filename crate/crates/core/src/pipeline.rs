//! Episodes to product model to dependability report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::CheckError;
use crate::dependability::{self, DependabilityConfig, DependabilityReport};
use crate::estimation::{
    build_product, count_transitions, estimate_mission_length, mle, CountMatrix, Episode, EstimationError,
    EstimationWarning, ProductModel, RiskMap,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Check(#[from] CheckError),
}

/// Where a product model came from; stored next to the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildProvenance {
    pub sample_count: usize,
    pub riskmap: RiskMap,
    pub l_mis: f64,
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub product: ProductModel,
    pub counts: CountMatrix,
    pub failure: Vec<Vec<f64>>,
    pub warnings: Vec<EstimationWarning>,
    pub provenance: BuildProvenance,
}

pub fn build_model(
    episodes: &[Episode],
    riskmap: &RiskMap,
    include_timeouts: bool,
) -> Result<BuiltModel, EstimationError> {
    let counts = count_transitions(episodes, riskmap)?;
    let chain = mle(&counts);
    let stage = estimate_mission_length(episodes, include_timeouts)?;
    let product = build_product(&chain.matrix, stage, riskmap)?;
    Ok(BuiltModel {
        provenance: BuildProvenance { sample_count: episodes.len(), riskmap: riskmap.clone(), l_mis: stage.l_mis },
        product,
        counts,
        failure: chain.matrix,
        warnings: chain.warnings,
    })
}

impl BuiltModel {
    pub fn report(&self, cfg: &DependabilityConfig) -> Result<DependabilityReport, CheckError> {
        let p = &self.provenance;
        dependability::report(&self.product.model, cfg, Some(p.sample_count), Some(&p.riskmap), Some(p.l_mis))
    }
}

/// Builds the model from `episodes` and reports all five properties.
pub fn assess(
    episodes: &[Episode],
    riskmap: &RiskMap,
    cfg: &DependabilityConfig,
) -> Result<DependabilityReport, PipelineError> {
    Ok(build_model(episodes, riskmap, true)?.report(cfg)?)
}

/// Fraction of episodes that reached the goal.
pub fn success_rate(episodes: &[Episode]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    let goals = episodes.iter().filter(|e| e.outcome == crate::estimation::Outcome::Goal).count();
    goals as f64 / episodes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::Outcome;

    #[test]
    fn builds_and_reports() {
        let eps = vec![
            Episode::from_clearances(&[3.5, 2.5, 0.5, 3.5], Outcome::Goal),
            Episode::from_clearances(&[3.5, 3.5, 3.5], Outcome::Goal),
            Episode::from_clearances(&[3.5, 0.4], Outcome::Crash),
        ];
        let built = build_model(&eps, &RiskMap::default(), true).unwrap();
        assert_eq!(built.product.model.num_states(), 10);
        assert_eq!(built.provenance.l_mis, 2.5);
        assert_eq!(built.counts.total(), 3 + 2 + 1 + 1);
        let report = built.report(&DependabilityConfig::default()).unwrap();
        assert!(report.safety > 0.0 && report.safety < 1.0);
        assert_eq!(report.provenance.sample_count, Some(3));
        assert!((success_rate(&eps) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_crashed_is_an_error() {
        let eps = vec![Episode::from_clearances(&[3.5, 0.4], Outcome::Crash)];
        assert!(matches!(
            assess(&eps, &RiskMap::default(), &DependabilityConfig::default()),
            Err(PipelineError::Estimation(EstimationError::AllCrashed))
        ));
    }
}
