//! The weight fusioner: per-candidate log-weighted metric aggregation,
//! cross-scorer weighted summation, and argmax selection.

use crate::metrics::{MetricName, SubScores, ALL_METRICS};
use crate::num::Real;
use crate::scorers::ScorerOutput;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    LowestIndex,
}

/// How scorer outputs are weighted against each other: uniformly, or
/// pre-assigned from known per-model performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelWeights<S> {
    Uniform,
    Assigned(BTreeMap<String, S>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig<S> {
    /// Per-metric weights of the logarithmic sum.
    pub metric_log_weights: BTreeMap<MetricName, S>,
    pub model_weights: ModelWeights<S>,
    /// Floor applied inside the logarithm so zero scores stay finite.
    pub epsilon: S,
    pub tie_break: TieBreak,
}

impl<S: Real> FusionConfig<S> {
    pub fn validate(&self) -> Result<(), FusionError> {
        if self.metric_log_weights.values().any(|w| *w < S::zero()) {
            return Err(FusionError::InvalidConfig("negative metric weight".into()));
        }
        if !self.metric_log_weights.values().any(|w| *w > S::zero()) {
            return Err(FusionError::InvalidConfig(
                "at least one metric weight must be positive".into(),
            ));
        }
        if !(self.epsilon > S::zero() && self.epsilon < S::one()) {
            return Err(FusionError::InvalidConfig("epsilon must lie in (0, 1)".into()));
        }
        if let ModelWeights::Assigned(map) = &self.model_weights {
            if map.values().any(|w| !(*w > S::zero())) {
                return Err(FusionError::InvalidConfig("model weights must be > 0".into()));
            }
        }
        Ok(())
    }
}

impl<S: Real> Default for FusionConfig<S> {
    /// Weight 1 on every penalty metric and the composite weights on the
    /// rest, mirroring the metric-suite defaults.
    fn default() -> Self {
        let weights = crate::metrics::MetricWeights::<S>::default();
        let mut metric_log_weights = BTreeMap::new();
        for &m in ALL_METRICS.iter() {
            if weights.penalty_set.contains(&m) {
                metric_log_weights.insert(m, S::one());
            }
        }
        for (&m, &w) in weights.weighted.iter() {
            metric_log_weights.insert(m, w);
        }
        FusionConfig {
            metric_log_weights,
            model_weights: ModelWeights::Uniform,
            epsilon: S::of(1e-6),
            tie_break: TieBreak::LowestIndex,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FusionError {
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("scorer outputs cover different candidate counts: {0:?}")]
    LengthMismatch(Vec<usize>),
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error("no model weight assigned for scorer {0:?}")]
    MissingModelWeight(String),
}

/// Fixed-weight logarithmic sum `sum_m w_m ln(max(s_m, epsilon))`.
pub fn aggregate_log<S: Real>(scores: &SubScores<S>, cfg: &FusionConfig<S>) -> Result<S, FusionError> {
    cfg.validate()?;
    let mut acc = S::zero();
    for (&name, &w) in cfg.metric_log_weights.iter() {
        if w == S::zero() {
            continue;
        }
        acc += w * scores.get(name).max(cfg.epsilon).ln();
    }
    Ok(acc)
}

/// Cross-scorer fusion: `fused_j = sum_k model_weight_k * aggregate(scores_kj)`.
pub fn fuse_models<S: Real>(
    per_scorer: &[ScorerOutput<S>],
    cfg: &FusionConfig<S>,
) -> Result<Vec<(usize, S)>, FusionError> {
    cfg.validate()?;
    if per_scorer.is_empty() {
        return Err(FusionError::EmptyCandidates);
    }
    let n = per_scorer[0].scores.len();
    if per_scorer.iter().any(|out| out.scores.len() != n) {
        return Err(FusionError::LengthMismatch(
            per_scorer.iter().map(|out| out.scores.len()).collect(),
        ));
    }
    let uniform = S::one() / S::from_usize(per_scorer.len()).unwrap();
    let mut fused = vec![S::zero(); n];
    for out in per_scorer {
        let weight = match &cfg.model_weights {
            ModelWeights::Uniform => uniform,
            ModelWeights::Assigned(map) => *map
                .get(&out.scorer_id)
                .ok_or_else(|| FusionError::MissingModelWeight(out.scorer_id.clone()))?,
        };
        for (j, scores) in out.scores.iter().enumerate() {
            fused[j] += weight * aggregate_log(scores, cfg)?;
        }
    }
    Ok(fused.into_iter().enumerate().collect())
}

/// Argmax with deterministic lowest-index tie-breaking.
pub fn select_best<S: Real>(
    fused: &[(usize, S)],
    cfg: &FusionConfig<S>,
) -> Result<usize, FusionError> {
    let TieBreak::LowestIndex = cfg.tie_break;
    let mut best: Option<(usize, S)> = None;
    for &(idx, score) in fused {
        match best {
            None => best = Some((idx, score)),
            Some((_, b)) if score > b => best = Some((idx, score)),
            _ => {}
        }
    }
    best.map(|(idx, _)| idx).ok_or(FusionError::EmptyCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg_with(entries: &[(MetricName, f64)]) -> FusionConfig<f64> {
        FusionConfig {
            metric_log_weights: entries.iter().copied().collect(),
            model_weights: ModelWeights::Uniform,
            epsilon: 1e-6,
            tie_break: TieBreak::LowestIndex,
        }
    }

    #[test]
    fn aggregate_single_metric_unit_score() {
        let cfg = cfg_with(&[(MetricName::Nc, 1.0)]);
        assert_eq!(aggregate_log(&SubScores::all(1.0), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn aggregate_matches_hand_formula() {
        let cfg = cfg_with(&[(MetricName::Nc, 2.0), (MetricName::Ep, 1.0)]);
        let mut scores = SubScores::all(1.0);
        scores.nc = 0.5;
        scores.ep = 0.25;
        let got = aggregate_log(&scores, &cfg).unwrap();
        let expect = 2.0 * 0.5f64.ln() + 0.25f64.ln();
        assert!((got - expect).abs() < 1e-12);
        assert!((expect + 2.7726).abs() < 1e-4);
    }

    #[test]
    fn aggregate_floors_zero_scores() {
        let cfg = cfg_with(&[(MetricName::Nc, 3.0)]);
        let mut scores = SubScores::all(1.0);
        scores.nc = 0.0;
        let got = aggregate_log(&scores, &cfg).unwrap();
        assert!(got.is_finite());
        assert!((got - 3.0 * 1e-6f64.ln()).abs() < 1e-9);
    }

    fn outputs(rows: &[Vec<f64>], ids: &[&str]) -> Vec<ScorerOutput<f64>> {
        // encode a scalar score as an all-ep SubScores for hand fixtures
        rows.iter()
            .zip(ids)
            .map(|(row, id)| ScorerOutput {
                scorer_id: id.to_string(),
                scores: row
                    .iter()
                    .map(|&v| {
                        let mut s = SubScores::all(1.0);
                        s.ep = v;
                        s
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn fuse_single_scorer_equals_aggregate() {
        let cfg = cfg_with(&[(MetricName::Ep, 1.0)]);
        let outs = outputs(&[vec![0.5, 0.9, 0.2]], &["a"]);
        let fused = fuse_models(&outs, &cfg).unwrap();
        for (j, (idx, score)) in fused.iter().enumerate() {
            assert_eq!(*idx, j);
            let expect = aggregate_log(&outs[0].scores[j], &cfg).unwrap();
            assert!((score - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_identical_scorers_uniform_is_identity() {
        let cfg = cfg_with(&[(MetricName::Ep, 1.0)]);
        let one = outputs(&[vec![0.5, 0.9, 0.2]], &["a"]);
        let two = outputs(&[vec![0.5, 0.9, 0.2], vec![0.5, 0.9, 0.2]], &["a", "b"]);
        let fused_one = fuse_models(&one, &cfg).unwrap();
        let fused_two = fuse_models(&two, &cfg).unwrap();
        for ((_, a), (_, b)) in fused_one.iter().zip(&fused_two) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_assigned_weights_hand_computed() {
        let mut cfg = cfg_with(&[(MetricName::Ep, 1.0)]);
        cfg.model_weights = ModelWeights::Assigned(
            [("a".to_string(), 2.0), ("b".to_string(), 1.0)].into_iter().collect(),
        );
        let outs = outputs(&[vec![0.5, 0.9, 0.2], vec![0.8, 0.4, 0.6]], &["a", "b"]);
        let fused = fuse_models(&outs, &cfg).unwrap();
        for j in 0..3 {
            let expect = 2.0 * outs[0].scores[j].ep.max(1e-6).ln()
                + 1.0 * outs[1].scores[j].ep.max(1e-6).ln();
            assert!((fused[j].1 - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_rejects_mismatched_lengths_and_missing_weights() {
        let cfg = cfg_with(&[(MetricName::Ep, 1.0)]);
        let outs = outputs(&[vec![0.5, 0.9], vec![0.5]], &["a", "b"]);
        assert!(matches!(fuse_models(&outs, &cfg), Err(FusionError::LengthMismatch(_))));

        let mut cfg2 = cfg.clone();
        cfg2.model_weights =
            ModelWeights::Assigned([("a".to_string(), 1.0)].into_iter().collect());
        let outs2 = outputs(&[vec![0.5], vec![0.6]], &["a", "b"]);
        assert!(matches!(
            fuse_models(&outs2, &cfg2),
            Err(FusionError::MissingModelWeight(_))
        ));
    }

    #[test]
    fn select_best_examples() {
        let cfg = cfg_with(&[(MetricName::Ep, 1.0)]);
        assert_eq!(select_best(&[(0, 0.1), (1, 0.9), (2, 0.3)], &cfg).unwrap(), 1);
        assert_eq!(select_best(&[(0, 0.5), (1, 0.5)], &cfg).unwrap(), 0);
        assert_eq!(select_best(&[(0, -3.0)], &cfg).unwrap(), 0);
        assert!(matches!(
            select_best::<f64>(&[], &cfg),
            Err(FusionError::EmptyCandidates)
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = FusionConfig::<f64>::default();
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = FusionConfig::<f64>::default();
        cfg.metric_log_weights.clear();
        assert!(cfg.validate().is_err());
    }

    proptest! {
        /// Scaling all model weights by c > 0 or shifting every fused score
        /// by a constant never changes the selection.
        #[test]
        fn argmax_invariance(
            scores in proptest::collection::vec(
                proptest::collection::vec(0.01f64..=1.0, 5), 2..5),
            c in prop_oneof![Just(0.01f64), Just(1.0f64), Just(100.0f64)],
            shift in -10.0f64..10.0,
        ) {
            let ids: Vec<String> = (0..scores.len()).map(|i| format!("s{i}")).collect();
            let outs: Vec<ScorerOutput<f64>> = scores
                .iter()
                .zip(&ids)
                .map(|(row, id)| ScorerOutput {
                    scorer_id: id.clone(),
                    scores: row.iter().map(|&v| {
                        let mut s = SubScores::all(1.0);
                        s.ep = v;
                        s
                    }).collect(),
                })
                .collect();
            let mut cfg = cfg_with(&[(MetricName::Ep, 5.0), (MetricName::Ttc, 5.0)]);
            cfg.model_weights = ModelWeights::Assigned(
                ids.iter().map(|id| (id.clone(), 1.0)).collect());
            let fused = fuse_models(&outs, &cfg).unwrap();
            let base = select_best(&fused, &cfg).unwrap();

            let mut scaled_cfg = cfg.clone();
            scaled_cfg.model_weights = ModelWeights::Assigned(
                ids.iter().map(|id| (id.clone(), c)).collect());
            let fused_scaled = fuse_models(&outs, &scaled_cfg).unwrap();
            prop_assert_eq!(select_best(&fused_scaled, &scaled_cfg).unwrap(), base);

            let shifted: Vec<(usize, f64)> =
                fused.iter().map(|&(i, s)| (i, s + shift)).collect();
            prop_assert_eq!(select_best(&shifted, &cfg).unwrap(), base);
        }

        /// Raising one sub-score of one candidate never lowers that
        /// candidate's fused score.
        #[test]
        fn fused_score_monotone(
            v in 0.0f64..=1.0,
            bump in 0.0f64..=1.0,
            metric_idx in 0usize..9,
        ) {
            let cfg = FusionConfig::<f64>::default();
            let mut scores = SubScores::all(0.5);
            let m = ALL_METRICS[metric_idx];
            scores.set(m, v);
            let before = aggregate_log(&scores, &cfg).unwrap();
            let mut bumped = scores;
            bumped.set(m, (v + bump).min(1.0));
            let after = aggregate_log(&bumped, &cfg).unwrap();
            prop_assert!(after >= before - 1e-12);
        }
    }
}
