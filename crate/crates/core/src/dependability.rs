//! Safety, resilience, robustness, detection and recovery of a product model.
//!
//! All functions work on any [`LabeledDtmc`] that carries the `step` and
//! `deviation` reward structures and either the macro labels `miss_comp`,
//! `crit_situ`, `ncrit_situ` or the base propositions they are defined from:
//!
//! ```text
//! miss_comp  := !crash & terminated
//! crit_situ  := risk_B_max & progressing
//! ncrit_situ := neg_risk & progressing
//! ```

use std::fmt;

use serde::{Serialize, Serializer};

use crate::checker::{self, CheckError, Semantics, SolverConfig};
use crate::estimation::{
    RiskMap, CRASH, CRIT_SITU, MISS_COMP, NCRIT_SITU, NEG_RISK, PROGRESSING, TERMINATED,
};
use crate::model::{LabeledDtmc, ModelError, Predicate, RewardStructure, StateSet};

/// A property value, an infinite expectation, or undefined (null conditioning event).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PropertyValue {
    Value(f64),
    Infinite,
    Undefined,
}

impl PropertyValue {
    fn from_f64(v: f64) -> Self {
        if v.is_infinite() {
            PropertyValue::Infinite
        } else {
            PropertyValue::Value(v)
        }
    }

    fn from_option(v: Option<f64>) -> Self {
        v.map(Self::from_f64).unwrap_or(PropertyValue::Undefined)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            PropertyValue::Value(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for PropertyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyValue::Value(v) => write!(f, "{v:.6}"),
            PropertyValue::Infinite => f.write_str("inf"),
            PropertyValue::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for PropertyValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PropertyValue::Value(v) => s.serialize_f64(*v),
            PropertyValue::Infinite => s.serialize_str("inf"),
            PropertyValue::Undefined => s.serialize_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DependabilityConfig {
    pub solver: SolverConfig,
    pub semantics: Semantics,
    /// Clamp detection and recovery at 0 instead of reporting negative values.
    pub clamp: bool,
}

/// State sets behind the property macros.
#[derive(Debug, Clone)]
pub struct Macros {
    pub miss_comp: StateSet,
    pub crit_situ: StateSet,
    pub ncrit_situ: StateSet,
}

impl Macros {
    pub fn resolve(model: &LabeledDtmc) -> Result<Self, ModelError> {
        let declared = |p: &str| model.propositions().contains(p);
        let lookup = |label: &str, fallback: &dyn Fn() -> Result<Predicate, ModelError>| {
            if declared(label) {
                model.labeled(label)
            } else {
                model.satisfying_states(&fallback()?)
            }
        };
        let miss_comp = lookup(MISS_COMP, &|| {
            Ok(Predicate::and(Predicate::not(Predicate::ap(CRASH)), Predicate::ap(TERMINATED)))
        })?;
        let crit_situ = lookup(CRIT_SITU, &|| {
            let worst = model
                .propositions()
                .iter()
                .filter_map(|p| p.strip_prefix("risk_B_").and_then(|i| i.parse::<usize>().ok()))
                .max()
                .ok_or_else(|| ModelError::UnknownProposition("risk_B_1".into()))?;
            Ok(Predicate::and(Predicate::ap(format!("risk_B_{worst}")), Predicate::ap(PROGRESSING)))
        })?;
        let ncrit_situ = lookup(NCRIT_SITU, &|| {
            Ok(Predicate::and(Predicate::ap(NEG_RISK), Predicate::ap(PROGRESSING)))
        })?;
        Ok(Macros { miss_comp, crit_situ, ncrit_situ })
    }
}

/// Shared engine calls, cached per model.
struct Ctx<'a> {
    model: &'a LabeledDtmc,
    cfg: DependabilityConfig,
    macros: Macros,
    step: &'a RewardStructure,
    deviation: &'a RewardStructure,
}

impl<'a> Ctx<'a> {
    fn new(model: &'a LabeledDtmc, cfg: DependabilityConfig) -> Result<Self, CheckError> {
        Ok(Ctx {
            model,
            cfg,
            macros: Macros::resolve(model)?,
            step: model.reward("step")?,
            deviation: model.reward("deviation")?,
        })
    }

    fn init(&self) -> usize {
        self.model.initial()
    }

    fn reach(&self, target: &StateSet) -> Result<f64, CheckError> {
        Ok(checker::reach_prob(self.model, target, &self.cfg.solver)?[self.init()])
    }

    fn reward_until(&self, reward: &RewardStructure, target: &StateSet) -> Result<PropertyValue, CheckError> {
        let s = self.init();
        Ok(match self.cfg.semantics {
            Semantics::Conditional => PropertyValue::from_option(
                checker::conditional_reach_reward(self.model, reward, target, &self.cfg.solver)?[s],
            ),
            Semantics::Strict => {
                PropertyValue::from_f64(checker::reach_reward(self.model, reward, target, &self.cfg.solver)?[s])
            }
        })
    }

    fn nested_reward(&self, reward: &RewardStructure, a: &StateSet, b: &StateSet) -> Result<PropertyValue, CheckError> {
        let s = self.init();
        Ok(match self.cfg.semantics {
            Semantics::Conditional => PropertyValue::from_option(
                checker::nested_reach_reward(self.model, reward, a, b, &self.cfg.solver)?[s],
            ),
            Semantics::Strict => PropertyValue::from_f64(
                checker::nested_reach_reward_strict(self.model, reward, a, b, &self.cfg.solver)?[s],
            ),
        })
    }

    fn max_deviation(&self) -> f64 {
        self.deviation.state_rewards.iter().copied().fold(0.0, f64::max)
    }

    fn clamp(&self, v: f64) -> f64 {
        if self.cfg.clamp {
            v.clamp(0.0, 1.0)
        } else {
            v
        }
    }
}

/// `1 - num / den`, undefined unless both are finite and `den > 0`.
fn one_minus_ratio(num: PropertyValue, den: PropertyValue) -> PropertyValue {
    match (num, den) {
        (PropertyValue::Value(n), PropertyValue::Value(d)) if d > 0.0 => PropertyValue::Value(1.0 - n / d),
        _ => PropertyValue::Undefined,
    }
}

/// Probability of terminating without a crash.
pub fn safety(model: &LabeledDtmc, cfg: &DependabilityConfig) -> Result<f64, CheckError> {
    let ctx = Ctx::new(model, *cfg)?;
    ctx.reach(&ctx.macros.miss_comp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resilience {
    pub value: PropertyValue,
    /// Expected total deviation over successful missions.
    pub deviation: PropertyValue,
    /// Expected length of a successful mission.
    pub mission_length: PropertyValue,
    /// `max_i d_i` times `mission_length`.
    pub max_dev: PropertyValue,
}

pub fn resilience(model: &LabeledDtmc, cfg: &DependabilityConfig) -> Result<Resilience, CheckError> {
    resilience_in(&Ctx::new(model, *cfg)?)
}

fn resilience_in(ctx: &Ctx) -> Result<Resilience, CheckError> {
    let deviation = ctx.reward_until(ctx.deviation, &ctx.macros.miss_comp)?;
    let mission_length = ctx.reward_until(ctx.step, &ctx.macros.miss_comp)?;
    let max_dev = match mission_length {
        PropertyValue::Value(l) => PropertyValue::Value(ctx.max_deviation() * l),
        other => other,
    };
    let value = one_minus_ratio(deviation, max_dev);
    Ok(Resilience { value, deviation, mission_length, max_dev })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Robustness {
    pub value: f64,
    /// `P(F (crit_situ & F miss_comp))`
    pub numerator: f64,
    /// `P(F crit_situ)`
    pub denominator: f64,
    /// The critical situation is unreachable and `value` is 1 by convention.
    pub vacuous: bool,
}

pub fn robustness(model: &LabeledDtmc, cfg: &DependabilityConfig) -> Result<Robustness, CheckError> {
    robustness_in(&Ctx::new(model, *cfg)?)
}

fn robustness_in(ctx: &Ctx) -> Result<Robustness, CheckError> {
    let denominator = ctx.reach(&ctx.macros.crit_situ)?;
    let numerator = checker::nested_reach_prob(ctx.model, &ctx.macros.crit_situ, &ctx.macros.miss_comp, &ctx.cfg.solver)?
        [ctx.init()];
    if denominator == 0.0 {
        return Ok(Robustness { value: 1.0, numerator, denominator, vacuous: true });
    }
    Ok(Robustness { value: (numerator / denominator).min(1.0), numerator, denominator, vacuous: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub value: PropertyValue,
    /// Expected steps until the critical situation is first reached.
    pub steps_to_critical: PropertyValue,
    /// Expected length of a successful mission.
    pub mission_length: PropertyValue,
    pub vacuous: bool,
}

pub fn detection(model: &LabeledDtmc, cfg: &DependabilityConfig) -> Result<Detection, CheckError> {
    detection_in(&Ctx::new(model, *cfg)?)
}

fn detection_in(ctx: &Ctx) -> Result<Detection, CheckError> {
    let mission_length = ctx.reward_until(ctx.step, &ctx.macros.miss_comp)?;
    if ctx.reach(&ctx.macros.crit_situ)? == 0.0 {
        return Ok(Detection {
            value: PropertyValue::Value(1.0),
            steps_to_critical: PropertyValue::Undefined,
            mission_length,
            vacuous: true,
        });
    }
    let steps_to_critical = ctx.reward_until(ctx.step, &ctx.macros.crit_situ)?;
    let value = match one_minus_ratio(steps_to_critical, mission_length) {
        PropertyValue::Value(v) => PropertyValue::Value(ctx.clamp(v)),
        other => other,
    };
    Ok(Detection { value, steps_to_critical, mission_length, vacuous: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Recovery {
    pub value: PropertyValue,
    /// Expected steps until `ncrit_situ` is reached after `crit_situ`.
    pub nested_steps: PropertyValue,
    /// `nested_steps` minus the detection steps.
    pub recovery_steps: PropertyValue,
    /// Probability of the nested event the expectation is conditioned on.
    pub event_probability: f64,
}

pub fn recovery(model: &LabeledDtmc, cfg: &DependabilityConfig) -> Result<Recovery, CheckError> {
    let ctx = Ctx::new(model, *cfg)?;
    let det = detection_in(&ctx)?;
    recovery_in(&ctx, &det)
}

fn recovery_in(ctx: &Ctx, det: &Detection) -> Result<Recovery, CheckError> {
    let (crit, ncrit) = (&ctx.macros.crit_situ, &ctx.macros.ncrit_situ);
    let event_probability = checker::nested_reach_prob(ctx.model, crit, ncrit, &ctx.cfg.solver)?[ctx.init()];
    let nested_steps = if event_probability > 0.0 {
        ctx.nested_reward(ctx.step, crit, ncrit)?
    } else {
        PropertyValue::Undefined
    };
    let recovery_steps = match (nested_steps, det.steps_to_critical) {
        (PropertyValue::Value(a), PropertyValue::Value(b)) => PropertyValue::Value(a - b),
        (PropertyValue::Infinite, PropertyValue::Value(_)) => PropertyValue::Infinite,
        _ => PropertyValue::Undefined,
    };
    let value = match one_minus_ratio(recovery_steps, det.mission_length) {
        PropertyValue::Value(v) => PropertyValue::Value(ctx.clamp(v)),
        other => other,
    };
    Ok(Recovery { value, nested_steps, recovery_steps, event_probability })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub model_hash: String,
    pub sample_count: Option<usize>,
    pub riskmap: Option<RiskMap>,
    pub l_mis: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependabilityReport {
    pub safety: f64,
    pub resilience: PropertyValue,
    pub robustness: f64,
    pub detection: PropertyValue,
    pub recovery: PropertyValue,
    pub semantics: Semantics,
    pub resilience_detail: Resilience,
    pub robustness_detail: Robustness,
    pub detection_detail: Detection,
    pub recovery_detail: Recovery,
    /// Recovery is computed with a nested reward query and flagged experimental.
    pub recovery_experimental: bool,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

/// Runs all five properties and gathers intermediates and warnings.
pub fn report(
    model: &LabeledDtmc,
    cfg: &DependabilityConfig,
    sample_count: Option<usize>,
    riskmap: Option<&RiskMap>,
    l_mis: Option<f64>,
) -> Result<DependabilityReport, CheckError> {
    let ctx = Ctx::new(model, *cfg)?;
    let safety = ctx.reach(&ctx.macros.miss_comp)?;
    let res = resilience_in(&ctx)?;
    let rob = robustness_in(&ctx)?;
    let det = detection_in(&ctx)?;
    let rec = recovery_in(&ctx, &det)?;

    let mut warnings = Vec::new();
    if safety == 0.0 {
        warnings.push("no successful mission is possible; resilience and detection are undefined".to_string());
    }
    if rob.vacuous {
        warnings.push("critical situation unreachable: robustness and detection set to 1 (vacuous)".to_string());
    }
    if rec.value == PropertyValue::Undefined {
        warnings.push("recovery undefined: the critical-then-negligible event cannot be conditioned on".to_string());
    }
    if cfg.semantics == Semantics::Strict && safety < 1.0 {
        warnings.push("strict semantics: expectations over missable targets are infinite".to_string());
    }
    Ok(DependabilityReport {
        safety,
        resilience: res.value,
        robustness: rob.value,
        detection: det.value,
        recovery: rec.value,
        semantics: cfg.semantics,
        resilience_detail: res,
        robustness_detail: rob,
        detection_detail: det,
        recovery_detail: rec,
        recovery_experimental: true,
        warnings,
        provenance: Provenance {
            model_hash: model.content_hash(),
            sample_count,
            riskmap: riskmap.cloned(),
            l_mis,
        },
    })
}

impl DependabilityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Property rows `(name, value, note)`.
    pub fn rows(&self) -> Vec<(&'static str, PropertyValue, String)> {
        let vac = |v: bool| if v { "vacuous".to_string() } else { String::new() };
        vec![
            ("safety", PropertyValue::Value(self.safety), String::new()),
            ("resilience", self.resilience, String::new()),
            ("robustness", PropertyValue::Value(self.robustness), vac(self.robustness_detail.vacuous)),
            ("detection", self.detection, vac(self.detection_detail.vacuous)),
            ("recovery", self.recovery, "experimental".to_string()),
        ]
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12} {:>12}  notes\n", "property", "value");
        for (name, value, note) in self.rows() {
            out.push_str(&format!("{name:<12} {:>12}  {note}\n", value.to_string()));
        }
        out.push_str(&format!("semantics: {}\n", self.semantics));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }

    pub fn csv_header() -> &'static str {
        "safety,resilience,robustness,detection,recovery,semantics"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            csv_value(PropertyValue::Value(self.safety)),
            csv_value(self.resilience),
            csv_value(PropertyValue::Value(self.robustness)),
            csv_value(self.detection),
            csv_value(self.recovery),
            self.semantics
        )
    }
}

pub fn csv_value(v: PropertyValue) -> String {
    match v {
        PropertyValue::Value(x) => format!("{x}"),
        other => other.to_string(),
    }
}
