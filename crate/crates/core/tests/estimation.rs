mod common;

use common::*;
use depcheck_core::dependability::DependabilityConfig;
use depcheck_core::estimation::{count_transitions, estimate_mission_length, mle, read_jsonl, write_jsonl, RiskMap};
use depcheck_core::pipeline::{assess, build_model};
use depcheck_core::simenv::{self, SimConfig};

fn max_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max)
}

#[test]
fn mle_recovers_planted_chain() {
    let truth = planted_failure();
    let eps = sample_episodes(&truth, 30.0, 10_000, 42);
    let chain = mle(&count_transitions(&eps, &RiskMap::default()).unwrap());
    assert!(chain.warnings.is_empty());
    let err = max_error(&chain.matrix, &truth);
    assert!(err <= 0.02, "max entry error {err}");
}

#[test]
fn mle_error_shrinks_with_more_episodes() {
    let truth = planted_failure();
    let small = mle(&count_transitions(&sample_episodes(&truth, 30.0, 200, 1), &RiskMap::default()).unwrap());
    let large = mle(&count_transitions(&sample_episodes(&truth, 30.0, 20_000, 1), &RiskMap::default()).unwrap());
    assert!(max_error(&large.matrix, &truth) < max_error(&small.matrix, &truth));
}

#[test]
fn mle_is_unbiased_at_fixed_sample_size() {
    let truth = planted_failure();
    let (i, j) = (0, 1);
    let estimates: Vec<f64> = (0..1000)
        .map(|k| {
            let eps = sample_episodes(&truth, 30.0, 50, 10_000 + k);
            mle(&count_transitions(&eps, &RiskMap::default()).unwrap()).matrix[i][j]
        })
        .collect();
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let sd = (estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    assert!((mean - truth[i][j]).abs() <= 3.0 * se, "mean {mean} truth {} se {se}", truth[i][j]);
}

#[test]
fn mission_length_counts_transitions() {
    let eps = sample_episodes(&planted_failure(), 30.0, 20_000, 9);
    let stage = estimate_mission_length(&eps, true).unwrap();
    // goal episodes are geometric given survival, so only a loose check applies
    assert!(stage.l_mis > 5.0 && stage.l_mis < 30.0, "{}", stage.l_mis);
}

#[test]
fn simulated_pipeline_produces_a_report() {
    let cfg = SimConfig { sigma: 1.0, episodes: 200, seed: 3, ..SimConfig::default() };
    let eps = simenv::simulate(&cfg).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &eps).unwrap();
    let back = read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, eps);
    let report = assess(&back, &RiskMap::default(), &DependabilityConfig::default()).unwrap();
    assert!(report.safety > 0.0 && report.safety <= 1.0);
    let built = build_model(&back, &RiskMap::default(), true).unwrap();
    assert_eq!(built.product.model.num_states(), 10);
    assert_eq!(built.provenance.sample_count, 200);
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let cfg = SimConfig { sigma: 0.7, episodes: 50, seed: 8, ..SimConfig::default() };
    let render = |eps| {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, eps).unwrap();
        buf
    };
    assert_eq!(render(&simenv::simulate(&cfg).unwrap()), render(&simenv::simulate(&cfg).unwrap()));
}
