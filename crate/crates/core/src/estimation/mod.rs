//! From sampled episodes to the failure-process DTMC and its product with the
//! mission-stage chain.
//!
//! Risk levels are indexed `0 = s_N`, `1..=m = s_B1..s_Bm`, `m + 1 = s_C`.

mod episode;
mod product;

pub use episode::{read_jsonl, write_jsonl, Episode, Outcome, Step};
pub use product::{
    build_product, ProductModel, CRASH, CRIT_SITU, MISS_COMP, NCRIT_SITU, NEG_RISK, PROGRESSING, TERMINATED,
};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("episode has no steps")]
    EmptyEpisode,
    #[error("no episodes supplied")]
    NoEpisodes,
    #[error("invalid clearance {value} at step {step}")]
    BadClearance { step: usize, value: f64 },
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("every episode crashed; the mission length cannot be estimated")]
    AllCrashed,
    #[error("expected mission length {0} is below 1")]
    MissionTooShort(f64),
    #[error("invalid risk map: {0}")]
    RiskMap(String),
    #[error("invalid failure matrix: {0}")]
    Matrix(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Clearance thresholds and deviation weights defining the risk abstraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskMap {
    /// Strictly decreasing clearances `c_1 > ... > c_m`, metres.
    pub thresholds: Vec<f64>,
    /// Strictly increasing deviation weights `d_1 < ... < d_m`.
    pub deviations: Vec<f64>,
    pub sensor_range: f64,
}

impl Default for RiskMap {
    fn default() -> Self {
        RiskMap { thresholds: vec![3.0, 2.0, 1.0], deviations: vec![1.0, 2.0, 3.0], sensor_range: 3.15 }
    }
}

impl RiskMap {
    /// Number of benign failure levels.
    pub fn levels(&self) -> usize {
        self.thresholds.len()
    }

    /// Index of the catastrophic level `s_C`.
    pub fn crash_level(&self) -> usize {
        self.levels() + 1
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }

    pub fn level_name(&self, level: usize) -> String {
        match level {
            0 => "s_N".into(),
            l if l == self.crash_level() => "s_C".into(),
            l => format!("s_B{l}"),
        }
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        let bad = |m: String| Err(EstimationError::RiskMap(m));
        let m = self.levels();
        if m == 0 {
            return bad("at least one threshold is required".into());
        }
        if self.deviations.len() != m {
            return bad(format!("{} deviations for {m} thresholds", self.deviations.len()));
        }
        if !self.thresholds.iter().all(|c| c.is_finite() && *c > 0.0) {
            return bad("thresholds must be positive".into());
        }
        if !self.thresholds.windows(2).all(|w| w[0] > w[1]) {
            return bad("thresholds must be strictly decreasing".into());
        }
        if self.thresholds[0] > self.sensor_range {
            return bad(format!("first threshold {} exceeds sensor range {}", self.thresholds[0], self.sensor_range));
        }
        if !self.deviations.iter().all(|d| d.is_finite() && *d >= 0.0) {
            return bad("deviations must be non-negative".into());
        }
        if !self.deviations.windows(2).all(|w| w[0] < w[1]) {
            return bad("deviations must be strictly increasing".into());
        }
        Ok(())
    }

    /// Reads a risk map from TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, EstimationError> {
        let map: RiskMap = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| EstimationError::RiskMap(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| EstimationError::RiskMap(e.to_string()))?
        };
        map.validate()?;
        Ok(map)
    }

    /// Risk level of a clearance; boundaries go to the lower-risk side.
    pub fn map_clearance(&self, clearance: f64) -> usize {
        self.thresholds
            .iter()
            .position(|&c| clearance >= c)
            .unwrap_or(self.levels())
    }
}

/// Transition counts between risk levels, rows and columns `[s_N, s_B1..s_Bm, s_C]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl CountMatrix {
    pub fn zeros(levels: usize) -> Self {
        CountMatrix { counts: vec![vec![0; levels + 2]; levels + 2] }
    }

    pub fn size(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn merge(mut self, other: &CountMatrix) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }
}

fn count_episode(ep: &Episode, riskmap: &RiskMap) -> CountMatrix {
    let mut c = CountMatrix::zeros(riskmap.levels());
    let levels: Vec<usize> = ep.steps.iter().map(|s| riskmap.map_clearance(s.clearance)).collect();
    for w in levels.windows(2) {
        c.counts[w[0]][w[1]] += 1;
    }
    if ep.outcome == Outcome::Crash {
        let last = *levels.last().expect("episode checked non-empty");
        c.counts[last][riskmap.crash_level()] += 1;
    }
    c
}

/// Counts consecutive risk-level transitions; a crash adds one final
/// transition into `s_C`.
pub fn count_transitions(episodes: &[Episode], riskmap: &RiskMap) -> Result<CountMatrix, EstimationError> {
    if episodes.is_empty() {
        return Err(EstimationError::NoEpisodes);
    }
    for ep in episodes {
        ep.check()?;
    }
    Ok(episodes
        .iter()
        .map(|ep| count_episode(ep, riskmap))
        .fold(CountMatrix::zeros(riskmap.levels()), |acc, c| acc.merge(&c)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimationWarning {
    /// No outgoing transitions observed; the level became absorbing.
    ZeroRow { level: usize },
    /// Counts out of `s_C` were discarded because it is absorbing.
    CrashRowIgnored { count: u64 },
}

impl std::fmt::Display for EstimationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimationWarning::ZeroRow { level } => write!(
                f,
                "risk level {level} has no observed outgoing transitions; made absorbing (sample more episodes)"
            ),
            EstimationWarning::CrashRowIgnored { count } => {
                write!(f, "ignored {count} observed transitions out of the absorbing crash state")
            }
        }
    }
}

/// Row-stochastic failure-process matrix plus anything worth warning about.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureChain {
    pub matrix: Vec<Vec<f64>>,
    pub warnings: Vec<EstimationWarning>,
}

/// Maximum-likelihood estimate `n_ij / sum_j n_ij`, row by row.
pub fn mle(counts: &CountMatrix) -> FailureChain {
    let k = counts.size();
    let crash = k - 1;
    let mut warnings = Vec::new();
    let mut matrix = vec![vec![0.0; k]; k];
    for i in 0..crash {
        let total = counts.row_total(i);
        if total == 0 {
            matrix[i][i] = 1.0;
            warnings.push(EstimationWarning::ZeroRow { level: i });
            continue;
        }
        for j in 0..k {
            matrix[i][j] = counts.counts[i][j] as f64 / total as f64;
        }
    }
    let crash_total = counts.row_total(crash);
    if crash_total > 0 {
        warnings.push(EstimationWarning::CrashRowIgnored { count: crash_total });
    }
    matrix[crash][crash] = 1.0;
    for w in &warnings {
        warn!("{w}");
    }
    FailureChain { matrix, warnings }
}

/// Expected mission length `l_mis`, in transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionStage {
    pub l_mis: f64,
}

impl MissionStage {
    pub fn new(l_mis: f64) -> Result<Self, EstimationError> {
        if !(l_mis >= 1.0 && l_mis.is_finite()) {
            return Err(EstimationError::MissionTooShort(l_mis));
        }
        Ok(MissionStage { l_mis })
    }
}

/// Mean of `length - 1` over non-crash episodes. Timeouts count unless
/// `include_timeouts` is false.
pub fn estimate_mission_length(episodes: &[Episode], include_timeouts: bool) -> Result<MissionStage, EstimationError> {
    let lengths: Vec<f64> = episodes
        .iter()
        .filter(|e| match e.outcome {
            Outcome::Crash => false,
            Outcome::Goal => true,
            Outcome::Timeout => include_timeouts,
        })
        .map(|e| e.len().saturating_sub(1) as f64)
        .collect();
    if lengths.is_empty() {
        return Err(EstimationError::AllCrashed);
    }
    MissionStage::new(lengths.iter().sum::<f64>() / lengths.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clearance_mapping() {
        let rm = RiskMap::default();
        assert_eq!(rm.map_clearance(3.5), 0);
        assert_eq!(rm.map_clearance(3.0), 0);
        assert_eq!(rm.map_clearance(2.5), 1);
        assert_eq!(rm.map_clearance(2.0), 1);
        assert_eq!(rm.map_clearance(1.5), 2);
        assert_eq!(rm.map_clearance(0.4), 3);
        assert_eq!(rm.map_clearance(0.0), 3);
    }

    #[test]
    fn riskmap_validation() {
        assert!(RiskMap::default().validate().is_ok());
        let mut r = RiskMap::default();
        r.thresholds = vec![3.0, 3.0, 1.0];
        assert!(r.validate().is_err());
        let mut r = RiskMap::default();
        r.deviations = vec![1.0, 1.0, 3.0];
        assert!(r.validate().is_err());
        let mut r = RiskMap::default();
        r.sensor_range = 2.0;
        assert!(r.validate().is_err());
        assert!(RiskMap { thresholds: vec![], deviations: vec![], sensor_range: 1.0 }.validate().is_err());
    }

    #[test]
    fn riskmap_from_toml_and_json() {
        let t = RiskMap::parse("thresholds = [2.0, 1.0]\ndeviations = [0.5, 4.0]\nsensor_range = 3.15\n").unwrap();
        assert_eq!(t.levels(), 2);
        let j = RiskMap::parse(r#"{"thresholds":[2.0,1.0],"deviations":[0.5,4.0],"sensor_range":3.15}"#).unwrap();
        assert_eq!(t, j);
        assert!(RiskMap::parse("thresholds = [1.0, 2.0]\ndeviations = [1, 2]\nsensor_range = 3\n").is_err());
    }

    #[test]
    fn counts_goal_episode() {
        let rm = RiskMap::default();
        let c = count_transitions(&[Episode::from_clearances(&[3.5, 2.5, 3.5], Outcome::Goal)], &rm).unwrap();
        let mut expected = CountMatrix::zeros(3);
        expected.counts[0][1] = 1;
        expected.counts[1][0] = 1;
        assert_eq!(c, expected);
    }

    #[test]
    fn counts_crash_episode() {
        let rm = RiskMap::default();
        let c = count_transitions(&[Episode::from_clearances(&[3.5, 0.4], Outcome::Crash)], &rm).unwrap();
        let mut expected = CountMatrix::zeros(3);
        expected.counts[0][3] = 1;
        expected.counts[3][4] = 1;
        assert_eq!(c, expected);
    }

    #[test]
    fn counting_rejects_empty_inputs() {
        let rm = RiskMap::default();
        assert!(matches!(count_transitions(&[], &rm), Err(EstimationError::NoEpisodes)));
        let empty = Episode { steps: vec![], outcome: Outcome::Goal };
        assert!(matches!(count_transitions(&[empty], &rm), Err(EstimationError::EmptyEpisode)));
    }

    #[test]
    fn mle_rows() {
        let mut c = CountMatrix::zeros(3);
        c.counts[0] = vec![8, 2, 0, 0, 0];
        c.counts[1] = vec![1, 1, 1, 0, 1];
        c.counts[2] = vec![0, 0, 3, 0, 0];
        let chain = mle(&c);
        assert_eq!(chain.matrix[0], vec![0.8, 0.2, 0.0, 0.0, 0.0]);
        assert_eq!(chain.matrix[1], vec![0.25, 0.25, 0.25, 0.0, 0.25]);
        assert_eq!(chain.matrix[3], vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(chain.matrix[4], vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(chain.warnings, vec![EstimationWarning::ZeroRow { level: 3 }]);
    }

    #[test]
    fn mle_forces_crash_absorbing() {
        let mut c = CountMatrix::zeros(1);
        c.counts[0] = vec![1, 0, 1];
        c.counts[1] = vec![1, 1, 0];
        c.counts[2] = vec![5, 0, 0];
        let chain = mle(&c);
        assert_eq!(chain.matrix[2], vec![0.0, 0.0, 1.0]);
        assert!(chain.warnings.contains(&EstimationWarning::CrashRowIgnored { count: 5 }));
    }

    #[test]
    fn mission_length() {
        let goal = |n: usize| Episode::from_clearances(&vec![3.5; n], Outcome::Goal);
        assert_eq!(estimate_mission_length(&[goal(101), goal(301)], true).unwrap().l_mis, 200.0);
        let crash = Episode::from_clearances(&[3.5, 0.0], Outcome::Crash);
        assert_eq!(estimate_mission_length(&[goal(50), crash.clone()], true).unwrap().l_mis, 49.0);
        assert!(matches!(estimate_mission_length(&[crash], true), Err(EstimationError::AllCrashed)));
        let timeout = Episode::from_clearances(&vec![3.5; 11], Outcome::Timeout);
        assert_eq!(estimate_mission_length(&[goal(3), timeout.clone()], true).unwrap().l_mis, 6.0);
        assert_eq!(estimate_mission_length(&[goal(3), timeout], false).unwrap().l_mis, 2.0);
        assert!(matches!(estimate_mission_length(&[goal(1)], true), Err(EstimationError::MissionTooShort(_))));
    }
}
