use crate::model::{LabeledDtmc, RewardStructure, ROW_SUM_TOLERANCE};

use super::{EstimationError, MissionStage, RiskMap};

pub const NEG_RISK: &str = "neg_risk";
pub const CRASH: &str = "crash";
pub const PROGRESSING: &str = "progressing";
pub const TERMINATED: &str = "terminated";
pub const MISS_COMP: &str = "miss_comp";
pub const CRIT_SITU: &str = "crit_situ";
pub const NCRIT_SITU: &str = "ncrit_situ";

/// Product of the failure-process chain and the mission-stage chain.
///
/// State `(level, stage)` has index `2 * level + stage` with stage 0 =
/// progressing (`k0`) and 1 = terminated (`k1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductModel {
    pub model: LabeledDtmc,
    pub riskmap: RiskMap,
    pub stage: MissionStage,
}

impl ProductModel {
    pub fn index(level: usize, terminated: bool) -> usize {
        2 * level + usize::from(terminated)
    }
}

pub(crate) fn risk_prop(riskmap: &RiskMap, level: usize) -> String {
    match level {
        0 => NEG_RISK.into(),
        l if l == riskmap.crash_level() => CRASH.into(),
        l => format!("risk_B_{l}"),
    }
}

/// Synchronous product: each step moves the risk level by `failure` and ends
/// the mission with probability `1 / l_mis`. Terminated and crashed states are
/// absorbing.
pub fn build_product(
    failure: &[Vec<f64>],
    stage: MissionStage,
    riskmap: &RiskMap,
) -> Result<ProductModel, EstimationError> {
    riskmap.validate()?;
    let k = riskmap.levels() + 2;
    if failure.len() != k || failure.iter().any(|r| r.len() != k) {
        return Err(EstimationError::Matrix(format!("expected a {k}x{k} matrix")));
    }
    for (i, row) in failure.iter().enumerate() {
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(EstimationError::Matrix(format!("row {i} has an entry outside [0,1]")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(EstimationError::Matrix(format!("row {i} sums to {sum}")));
        }
    }
    let stage = MissionStage::new(stage.l_mis)?;
    let end = 1.0 / stage.l_mis;
    let crash = riskmap.crash_level();

    let mut names = Vec::with_capacity(2 * k);
    for level in 0..k {
        for s in ["k0", "k1"] {
            names.push(format!("{}.{s}", riskmap.level_name(level)));
        }
    }
    let mut triples = Vec::new();
    for level in 0..k {
        let from = ProductModel::index(level, false);
        if level == crash {
            triples.push((from, from, 1.0));
        } else {
            for (to, &p) in failure[level].iter().enumerate() {
                let stay = p * (1.0 - end);
                let stop = p * end;
                if stay > 0.0 {
                    triples.push((from, ProductModel::index(to, false), stay));
                }
                if stop > 0.0 {
                    triples.push((from, ProductModel::index(to, true), stop));
                }
            }
        }
        let done = ProductModel::index(level, true);
        triples.push((done, done, 1.0));
    }
    let mut model = LabeledDtmc::new(names, ProductModel::index(0, false), triples)
        .map_err(|e| EstimationError::Matrix(e.to_string()))?;

    let m = riskmap.levels();
    for level in 0..k {
        for terminated in [false, true] {
            let s = ProductModel::index(level, terminated);
            model.add_label(s, risk_prop(riskmap, level));
            model.add_label(s, if terminated { TERMINATED } else { PROGRESSING });
            if terminated && level != crash {
                model.add_label(s, MISS_COMP);
            }
            if !terminated && level == m {
                model.add_label(s, CRIT_SITU);
            }
            if !terminated && level == 0 {
                model.add_label(s, NCRIT_SITU);
            }
        }
    }

    let n = model.num_states();
    let mut step = RewardStructure::zero("step", n);
    let mut deviation = RewardStructure::zero("deviation", n);
    for level in 0..k {
        let from = ProductModel::index(level, false);
        for &(to, _) in model.row(from) {
            step.transition_rewards.insert((from, to), 1.0);
        }
        if (1..=m).contains(&level) {
            for terminated in [false, true] {
                deviation.state_rewards[ProductModel::index(level, terminated)] = riskmap.deviations[level - 1];
            }
        }
    }
    model.add_reward(step);
    model.add_reward(deviation);
    Ok(ProductModel { model, riskmap: riskmap.clone(), stage })
}
