//! Pipeline plumbing shared by the subcommands: candidate generation,
//! scorer resolution, per-scenario evaluation, the ablation runner, and
//! the score/fuse entry points.

use crate::config::HarnessConfig;
use crate::records::{
    FuseRecord, RecordLine, RunErrorRecord, RunRecord, ScoreRecord, VlmOutcome,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use vsf_core::directive::{parse_directive_reply, rule_based_directive, CognitiveDirective};
use vsf_core::metrics::{self, MetricError};
use vsf_core::scenario::Stage;
use vsf_core::scorers;
use vsf_core::LinearScorerParams;
use vsf_core::vocab::{generate_anchors, generate_vocabulary};
use vsf_core::{
    fusion, AnchorParams, EgoState, FusionConfig, ModelWeights, Scenario, ScorerOutput, SubScores,
    Trajectory,
};
use vsf_vlm::protocol::ChatMessage;
use vsf_vlm::{FewShotExample, VlmEndpointConfig, VlmFusionInputs};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Transport(String),
}

impl RunError {
    pub fn is_transport(&self) -> bool {
        matches!(self, RunError::Transport(_))
    }
}

impl From<MetricError> for RunError {
    fn from(e: MetricError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<vsf_core::scenario::ScenarioError> for RunError {
    fn from(e: vsf_core::scenario::ScenarioError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<vsf_core::vocab::VocabError> for RunError {
    fn from(e: vsf_core::vocab::VocabError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<vsf_core::scorers::ScorerError> for RunError {
    fn from(e: vsf_core::scorers::ScorerError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<vsf_core::fusion::FusionError> for RunError {
    fn from(e: vsf_core::fusion::FusionError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<crate::records::RecordError> for RunError {
    fn from(e: crate::records::RecordError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<vsf_vlm::pipeline::PipelineError> for RunError {
    fn from(e: vsf_vlm::pipeline::PipelineError) -> Self {
        match e {
            vsf_vlm::pipeline::PipelineError::Vlm(inner) => RunError::Transport(inner.to_string()),
            other => RunError::Data(other.to_string()),
        }
    }
}

impl From<vsf_vlm::VlmError> for RunError {
    fn from(e: vsf_vlm::VlmError) -> Self {
        RunError::Transport(e.to_string())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Candidate set for one scenario: the kinematic vocabulary plus, when
/// enabled, one batch of perturbation anchors seeded from it. The anchor
/// stream is keyed on (global seed, scenario id).
pub fn build_candidates(
    ego: &EgoState,
    scenario_id: &str,
    cfg: &HarnessConfig,
    seed: u64,
) -> Result<Vec<Trajectory>, RunError> {
    let mut candidates = generate_vocabulary(ego, &cfg.vocab)?;
    if cfg.anchors.enabled && cfg.anchors.seed_count > 0 {
        let params = AnchorParams {
            seed_count: cfg.anchors.seed_count,
            noise_scale_lon: cfg.anchors.noise_scale_lon,
            noise_scale_lat: cfg.anchors.noise_scale_lat,
            rng_seed: seed ^ fnv1a(scenario_id.as_bytes()),
        };
        let anchors = generate_anchors(ego, &candidates.clone(), &params)?;
        candidates.extend(anchors);
    }
    Ok(candidates)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectiveSource {
    #[default]
    Rule,
    Vlm,
}

/// Scorer declaration as written in ablation specs and --scorer flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    Oracle,
    Noisy {
        sd: f64,
        seed: u64,
    },
    Linear {
        params: PathBuf,
        #[serde(default)]
        directive: DirectiveSource,
    },
}

impl ScorerSpec {
    /// Parse the --scorer flag grammar:
    /// `oracle` | `noisy:<sd>,<seed>` | `linear:<params path>[,vlm]`.
    pub fn parse_flag(s: &str) -> Result<Self, String> {
        if s == "oracle" {
            return Ok(ScorerSpec::Oracle);
        }
        if let Some(rest) = s.strip_prefix("noisy:") {
            let (sd, seed) = rest
                .split_once(',')
                .ok_or_else(|| format!("expected noisy:<sd>,<seed>, got {s:?}"))?;
            return Ok(ScorerSpec::Noisy {
                sd: sd.parse().map_err(|e| format!("bad sd in {s:?}: {e}"))?,
                seed: seed.parse().map_err(|e| format!("bad seed in {s:?}: {e}"))?,
            });
        }
        if let Some(rest) = s.strip_prefix("linear:") {
            let (path, directive) = match rest.split_once(',') {
                Some((p, "vlm")) => (p, DirectiveSource::Vlm),
                Some((p, "rule")) => (p, DirectiveSource::Rule),
                Some((_, other)) => return Err(format!("bad directive source {other:?}")),
                None => (rest, DirectiveSource::Rule),
            };
            return Ok(ScorerSpec::Linear { params: PathBuf::from(path), directive });
        }
        Err(format!("unknown scorer {s:?} (oracle | noisy:<sd>,<seed> | linear:<path>[,vlm])"))
    }
}

/// A scorer with its parameters loaded, ready to run.
pub enum ResolvedScorer {
    Oracle,
    Noisy { sd: f64, seed: u64 },
    Linear { params: Box<LinearScorerParams>, directive: DirectiveSource },
}

impl ResolvedScorer {
    pub fn resolve(spec: &ScorerSpec) -> Result<Self, RunError> {
        Ok(match spec {
            ScorerSpec::Oracle => ResolvedScorer::Oracle,
            ScorerSpec::Noisy { sd, seed } => ResolvedScorer::Noisy { sd: *sd, seed: *seed },
            ScorerSpec::Linear { params, directive } => ResolvedScorer::Linear {
                params: Box::new(scorers::load_params(params)?),
                directive: directive.clone(),
            },
        })
    }

    pub fn needs_endpoint(&self) -> bool {
        matches!(self, ResolvedScorer::Linear { directive: DirectiveSource::Vlm, .. })
    }
}

/// Ask the endpoint for a directive; fall back to the rule-based provider
/// when the reply does not parse.
fn vlm_directive(
    ego: &EgoState,
    stage: &Stage<'_, f64>,
    cfg: &HarnessConfig,
    endpoint: &VlmEndpointConfig,
) -> Result<CognitiveDirective, RunError> {
    let text = format!(
        "Ego status: speed {:.2} m/s, accel {:.2} m/s^2, command {}.\n\
         Predict the next driving directive.\n\
         Reply with exactly: DIRECTIVE: <longitudinal>, <lateral>",
        ego.speed, ego.accel, ego.command
    );
    let reply = vsf_vlm::query_vlm(vec![ChatMessage::text("user", text)], endpoint)?;
    Ok(parse_directive_reply(&reply)
        .unwrap_or_else(|_| rule_based_directive(ego, stage, &cfg.directive_rules)))
}

/// Run one scorer over a candidate set. `oracle_scores` is the cached
/// metric-suite pass shared by the oracle and noisy observers.
pub fn run_scorer(
    scorer_id: &str,
    scorer: &ResolvedScorer,
    candidates: &[Trajectory],
    stage: &Stage<'_, f64>,
    ego: &EgoState,
    oracle_scores: &[SubScores],
    cfg: &HarnessConfig,
    endpoint: Option<&VlmEndpointConfig>,
) -> Result<ScorerOutput, RunError> {
    match scorer {
        ResolvedScorer::Oracle => Ok(ScorerOutput {
            scorer_id: scorer_id.to_string(),
            scores: oracle_scores.to_vec(),
        }),
        ResolvedScorer::Noisy { sd, seed } => Ok(ScorerOutput {
            scorer_id: scorer_id.to_string(),
            scores: scorers::perturb_scores(oracle_scores, scorer_id, *sd, *seed),
        }),
        ResolvedScorer::Linear { params, directive } => {
            let dir = match directive {
                DirectiveSource::Rule => rule_based_directive(ego, stage, &cfg.directive_rules),
                DirectiveSource::Vlm => {
                    let endpoint = endpoint.ok_or_else(|| {
                        RunError::Data("linear scorer with vlm directive needs an endpoint".into())
                    })?;
                    vlm_directive(ego, stage, cfg, endpoint)?
                }
            };
            Ok(scorers::linear_scorer(candidates, stage, ego, dir, params, scorer_id)?)
        }
    }
}

/// Everything computed once per scenario and reused across fusion configs.
pub struct ScenarioEval {
    pub candidates: Vec<Trajectory>,
    pub oracle1: Vec<SubScores>,
    pub ep_ref1: Option<f64>,
    pub ep_ref2: Option<f64>,
    pub outputs: BTreeMap<String, ScorerOutput>,
}

pub fn evaluate_scenario(
    scenario: &Scenario,
    scorers_used: &BTreeMap<String, ResolvedScorer>,
    cfg: &HarnessConfig,
    seed: u64,
    endpoint: Option<&VlmEndpointConfig>,
) -> Result<ScenarioEval, RunError> {
    let candidates = build_candidates(&scenario.ego, &scenario.id, cfg, seed)?;
    let stage1 = scenario.stage1();
    let ep_ref1 = metrics::ep_reference(&candidates, &stage1, &cfg.metrics)?;
    let oracle1: Vec<SubScores> = candidates
        .iter()
        .map(|traj| metrics::score_all(traj, &stage1, &cfg.metrics, ep_ref1))
        .collect::<Result<_, _>>()?;
    let ep_ref2 = match scenario.stage2() {
        Some(stage2) => metrics::ep_reference(&candidates, &stage2, &cfg.metrics)?,
        None => None,
    };
    let mut outputs = BTreeMap::new();
    for (id, scorer) in scorers_used {
        let output =
            run_scorer(id, scorer, &candidates, &stage1, &scenario.ego, &oracle1, cfg, endpoint)?;
        outputs.insert(id.clone(), output);
    }
    Ok(ScenarioEval { candidates, oracle1, ep_ref1, ep_ref2, outputs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Weight,
    Vlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub name: String,
    pub scorers: Vec<String>,
    pub mode: FusionMode,
    /// Pre-assigned per-model weights; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_weights: Option<BTreeMap<String, f64>>,
}

impl FusionSpec {
    fn fusion_config(&self, base: &FusionConfig) -> FusionConfig {
        let mut cfg = base.clone();
        cfg.model_weights = match &self.model_weights {
            Some(map) => ModelWeights::Assigned(map.clone()),
            None => ModelWeights::Uniform,
        };
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub scorers: BTreeMap<String, ScorerSpec>,
    pub fusions: Vec<FusionSpec>,
    pub scenario_file: PathBuf,
    pub output_dir: PathBuf,
}

impl AblationSpec {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Data(format!("failed to read spec {}: {e}", path.display())))?;
        let spec: AblationSpec = serde_json::from_str(&text)
            .map_err(|e| RunError::Data(format!("malformed spec {}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.scorers.is_empty() {
            return Err(RunError::Data("ablation spec declares no scorers".into()));
        }
        if self.fusions.is_empty() {
            return Err(RunError::Data("ablation spec declares no fusion configs".into()));
        }
        let mut names = BTreeSet::new();
        for fusion in &self.fusions {
            if !names.insert(&fusion.name) {
                return Err(RunError::Data(format!("duplicate fusion config {:?}", fusion.name)));
            }
            if fusion.scorers.is_empty() {
                return Err(RunError::Data(format!("fusion {:?} lists no scorers", fusion.name)));
            }
            for id in &fusion.scorers {
                if !self.scorers.contains_key(id) {
                    return Err(RunError::Data(format!(
                        "fusion {:?} references undeclared scorer {id:?}",
                        fusion.name
                    )));
                }
            }
            if let Some(weights) = &fusion.model_weights {
                for id in weights.keys() {
                    if !fusion.scorers.contains(id) {
                        return Err(RunError::Data(format!(
                            "fusion {:?} weights unknown scorer {id:?}",
                            fusion.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Scorer ids any fusion actually uses.
    pub fn used_scorers(&self) -> BTreeSet<String> {
        self.fusions.iter().flat_map(|f| f.scorers.iter().cloned()).collect()
    }
}

/// Counting semaphore bounding concurrent VLM queries.
pub struct InflightGate {
    slots: Mutex<usize>,
    available: Condvar,
}

impl InflightGate {
    pub fn new(limit: usize) -> Self {
        InflightGate { slots: Mutex::new(limit.max(1)), available: Condvar::new() }
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut slots = self.slots.lock().expect("gate poisoned");
        while *slots == 0 {
            slots = self.available.wait(slots).expect("gate poisoned");
        }
        *slots -= 1;
        drop(slots);
        let result = f();
        *self.slots.lock().expect("gate poisoned") += 1;
        self.available.notify_one();
        result
    }
}

fn default_few_shot() -> Vec<FewShotExample> {
    vec![FewShotExample {
        user_text: "Ego status: speed 9.00 m/s, accel 0.00 m/s^2, command forward.\n\
                    Candidates:\nA: scorer=example score=-4.2000\nB: scorer=example score=-1.3000\n\
                    Reply with exactly: SELECTION: <letter>"
            .to_string(),
        assistant_text: "SELECTION: B".to_string(),
    }]
}

/// Per-scorer log-aggregate rankings over their own predictions.
fn per_scorer_rankings(
    outputs: &[&ScorerOutput],
    fusion_cfg: &FusionConfig,
) -> Result<Vec<(String, Vec<(usize, f64)>)>, RunError> {
    let mut rankings = Vec::with_capacity(outputs.len());
    for output in outputs {
        let mut ranked = Vec::with_capacity(output.scores.len());
        for (j, scores) in output.scores.iter().enumerate() {
            ranked.push((j, fusion::aggregate_log(scores, fusion_cfg)?));
        }
        rankings.push((output.scorer_id.clone(), ranked));
    }
    Ok(rankings)
}

pub struct FusionOutcome {
    pub selected_index: usize,
    pub fused: Vec<f64>,
    pub vlm: Option<VlmOutcome>,
}

/// Run one fusion config against a prepared scenario evaluation.
pub fn run_fusion(
    scenario: &Scenario,
    eval: &ScenarioEval,
    fusion_spec: &FusionSpec,
    cfg: &HarnessConfig,
    endpoint: Option<&VlmEndpointConfig>,
    gate: Option<&InflightGate>,
) -> Result<FusionOutcome, RunError> {
    let outputs: Vec<&ScorerOutput> = fusion_spec
        .scorers
        .iter()
        .map(|id| {
            eval.outputs
                .get(id)
                .ok_or_else(|| RunError::Data(format!("missing scorer output {id:?}")))
        })
        .collect::<Result<_, _>>()?;
    let fusion_cfg = fusion_spec.fusion_config(&cfg.fusion);
    let owned: Vec<ScorerOutput> = outputs.iter().map(|o| (*o).clone()).collect();
    let fused_pairs = fusion::fuse_models(&owned, &fusion_cfg)?;
    let weight_winner = fusion::select_best(&fused_pairs, &fusion_cfg)?;
    let fused: Vec<f64> = fused_pairs.iter().map(|&(_, s)| s).collect();

    match fusion_spec.mode {
        FusionMode::Weight => Ok(FusionOutcome {
            selected_index: weight_winner,
            fused,
            vlm: None,
        }),
        FusionMode::Vlm => {
            let endpoint = endpoint.ok_or_else(|| {
                RunError::Data("vlm fusion requires an endpoint (config vlm.endpoint or VSF_VLM_ENDPOINT)".into())
            })?;
            let rankings = per_scorer_rankings(&outputs, &fusion_cfg)?;
            let stage1 = scenario.stage1();
            let few_shot = default_few_shot();
            let inputs = VlmFusionInputs {
                stage: &stage1,
                camera: &scenario.camera,
                ego: &scenario.ego,
                candidates: &eval.candidates,
                rankings: &rankings,
                weight_winner,
                few_shot: &few_shot,
            };
            let select = || {
                vsf_vlm::select_with_vlm(
                    &inputs,
                    &cfg.lqr,
                    &cfg.render.to_render_config(),
                    endpoint,
                )
            };
            let selection = match gate {
                Some(gate) => gate.run(select),
                None => select(),
            }?;
            Ok(FusionOutcome {
                selected_index: selection.index,
                fused,
                vlm: Some(VlmOutcome {
                    presented: selection.presented,
                    fell_back: selection.fell_back,
                    raw_reply: selection.raw_reply,
                }),
            })
        }
    }
}

/// Evaluate a chosen plan against both stages of its scenario.
pub fn evaluate_selection(
    scenario: &Scenario,
    eval: &ScenarioEval,
    selected: usize,
    cfg: &HarnessConfig,
) -> Result<(SubScores, Option<SubScores>, f64, Option<f64>, f64), RunError> {
    let chosen = &eval.candidates[selected];
    let traj2 = scenario.stage2.as_ref().map(|_| chosen);
    let result = metrics::evaluate_two_stage(
        chosen,
        traj2,
        scenario,
        &cfg.weights,
        &cfg.metrics,
        (eval.ep_ref1, eval.ep_ref2),
    )?;
    let stage1_score = metrics::compose_epdms(&result.stage1, &cfg.weights)?;
    let stage2_score = result
        .stage2
        .as_ref()
        .map(|s| metrics::compose_epdms(s, &cfg.weights))
        .transpose()?;
    Ok((result.stage1, result.stage2, stage1_score, stage2_score, result.epdms))
}

pub struct AblationOutput {
    pub records: Vec<RecordLine>,
    pub summary: String,
    pub timings: String,
}

/// Run every fusion config over every scenario. A failing scenario yields
/// one error record and the fleet continues; per-config failures yield one
/// error record per config.
pub fn run_ablation(
    spec: &AblationSpec,
    cfg: &HarnessConfig,
    seed: u64,
    endpoint: Option<&VlmEndpointConfig>,
) -> Result<AblationOutput, RunError> {
    spec.validate()?;
    let scenarios: Vec<Scenario> = vsf_core::scenario::load_scenarios(&spec.scenario_file)?;
    let mut resolved = BTreeMap::new();
    for id in spec.used_scorers() {
        resolved.insert(id.clone(), ResolvedScorer::resolve(&spec.scorers[&id])?);
    }
    let needs_endpoint = spec.fusions.iter().any(|f| f.mode == FusionMode::Vlm)
        || resolved.values().any(|s| s.needs_endpoint());
    if needs_endpoint && endpoint.is_none() {
        return Err(RunError::Data(
            "spec uses the vlm path but no endpoint is configured (vlm.endpoint or VSF_VLM_ENDPOINT)".into(),
        ));
    }
    let gate = InflightGate::new(cfg.vlm.max_inflight);

    let per_scenario: Vec<(Vec<RecordLine>, f64)> = scenarios
        .par_iter()
        .map(|scenario| {
            let start = std::time::Instant::now();
            let mut lines = Vec::with_capacity(spec.fusions.len());
            match evaluate_scenario(scenario, &resolved, cfg, seed, endpoint) {
                Err(e) => {
                    // scenario-level failure: one record, all configs skipped
                    lines.push(RecordLine::Error(RunErrorRecord {
                        scenario_id: scenario.id.clone(),
                        config_name: "*".to_string(),
                        error: e.to_string(),
                    }));
                }
                Ok(eval) => {
                    for fusion_spec in &spec.fusions {
                        let t0 = std::time::Instant::now();
                        let line = run_fusion(scenario, &eval, fusion_spec, cfg, endpoint, Some(&gate))
                            .and_then(|outcome| {
                                let (stage1, stage2, s1, s2, epdms) =
                                    evaluate_selection(scenario, &eval, outcome.selected_index, cfg)?;
                                Ok(RunRecord {
                                    scenario_id: scenario.id.clone(),
                                    config_name: fusion_spec.name.clone(),
                                    selected_index: outcome.selected_index,
                                    stage1,
                                    stage2,
                                    stage1_score: s1,
                                    stage2_score: s2,
                                    epdms,
                                    wall_ms: t0.elapsed().as_secs_f64() * 1e3,
                                })
                            });
                        lines.push(match line {
                            Ok(record) => RecordLine::Run(record),
                            Err(e) => RecordLine::Error(RunErrorRecord {
                                scenario_id: scenario.id.clone(),
                                config_name: fusion_spec.name.clone(),
                                error: e.to_string(),
                            }),
                        });
                    }
                }
            }
            (lines, start.elapsed().as_secs_f64() * 1e3)
        })
        .collect();

    let mut records = Vec::new();
    let mut total_ms = 0.0;
    for (lines, ms) in per_scenario {
        records.extend(lines);
        total_ms += ms;
    }
    let summary = crate::report::summarize(&records);
    let timings = format!(
        "scenarios: {}\nconfigs: {}\ntotal scenario-eval wall time: {:.1} ms\n",
        scenarios.len(),
        spec.fusions.len(),
        total_ms
    );
    Ok(AblationOutput { records, summary, timings })
}

/// Write ablation outputs under the spec's output directory.
pub fn write_ablation_output(spec: &AblationSpec, output: &AblationOutput) -> Result<(), RunError> {
    std::fs::create_dir_all(&spec.output_dir)
        .map_err(|e| RunError::Data(format!("cannot create {}: {e}", spec.output_dir.display())))?;
    crate::records::write_jsonl(&spec.output_dir.join("records.jsonl"), &output.records)?;
    std::fs::write(spec.output_dir.join("summary.txt"), &output.summary)
        .map_err(|e| RunError::Data(format!("cannot write summary: {e}")))?;
    std::fs::write(spec.output_dir.join("timings.txt"), &output.timings)
        .map_err(|e| RunError::Data(format!("cannot write timings: {e}")))?;
    Ok(())
}

/// `score` subcommand: score every (scenario, trajectory) pair with the
/// requested scorer. The oracle evaluates both stages; predictive scorers
/// report their stage-1 predictions.
pub fn score_command(
    scenarios: &[Scenario],
    trajs: &[Trajectory],
    spec: &ScorerSpec,
    cfg: &HarnessConfig,
    endpoint: Option<&VlmEndpointConfig>,
) -> Result<Vec<ScoreRecord>, RunError> {
    let scorer = ResolvedScorer::resolve(spec)?;
    let scorer_id = match spec {
        ScorerSpec::Oracle => "oracle".to_string(),
        ScorerSpec::Noisy { sd, seed } => format!("noisy-{sd}-{seed}"),
        ScorerSpec::Linear { .. } => "linear".to_string(),
    };
    let mut records = Vec::with_capacity(scenarios.len() * trajs.len());
    for scenario in scenarios {
        let stage1 = scenario.stage1();
        let ep_ref1 = metrics::ep_reference(trajs, &stage1, &cfg.metrics)?;
        let oracle1: Vec<SubScores> = trajs
            .iter()
            .map(|t| metrics::score_all(t, &stage1, &cfg.metrics, ep_ref1))
            .collect::<Result<_, _>>()?;
        let output = run_scorer(
            &scorer_id, &scorer, trajs, &stage1, &scenario.ego, &oracle1, cfg, endpoint,
        )?;
        let stage2_scores: Option<Vec<SubScores>> = match (&scorer, scenario.stage2()) {
            (ResolvedScorer::Oracle, Some(stage2)) => {
                let ep_ref2 = metrics::ep_reference(trajs, &stage2, &cfg.metrics)?;
                Some(
                    trajs
                        .iter()
                        .map(|t| metrics::score_all(t, &stage2, &cfg.metrics, ep_ref2))
                        .collect::<Result<_, _>>()?,
                )
            }
            _ => None,
        };
        for (j, stage1_scores) in output.scores.iter().enumerate() {
            let stage2 = stage2_scores.as_ref().map(|v| v[j]);
            let c1 = metrics::compose_epdms(stage1_scores, &cfg.weights)?;
            let epdms = match stage2 {
                Some(s2) => c1 * metrics::compose_epdms(&s2, &cfg.weights)?,
                None => c1,
            };
            records.push(ScoreRecord {
                scenario_id: scenario.id.clone(),
                traj_index: j,
                scorer_id: output.scorer_id.clone(),
                stage1: *stage1_scores,
                stage2,
                epdms,
            });
        }
    }
    Ok(records)
}

/// `fuse` subcommand: combine per-scorer score files and select per
/// scenario; with `vlm_inputs` the VLM selection loop replaces the plain
/// argmax.
pub fn fuse_command(
    score_files: &[Vec<ScoreRecord>],
    cfg: &HarnessConfig,
    model_weights: Option<BTreeMap<String, f64>>,
    vlm_inputs: Option<(&[Scenario], &[Trajectory], &VlmEndpointConfig)>,
) -> Result<Vec<FuseRecord>, RunError> {
    if score_files.is_empty() {
        return Err(RunError::Data("fuse needs at least one score file".into()));
    }
    // group each file by scenario, preserving scenario order of the first file
    let mut scenario_order: Vec<String> = Vec::new();
    for record in &score_files[0] {
        if !scenario_order.contains(&record.scenario_id) {
            scenario_order.push(record.scenario_id.clone());
        }
    }
    let mut fusion_cfg = cfg.fusion.clone();
    fusion_cfg.model_weights = match model_weights {
        Some(map) => ModelWeights::Assigned(map),
        None => ModelWeights::Uniform,
    };

    let mut out = Vec::with_capacity(scenario_order.len());
    for scenario_id in &scenario_order {
        let mut outputs: Vec<ScorerOutput> = Vec::with_capacity(score_files.len());
        for file in score_files {
            let mut rows: Vec<&ScoreRecord> =
                file.iter().filter(|r| &r.scenario_id == scenario_id).collect();
            if rows.is_empty() {
                return Err(RunError::Data(format!(
                    "scenario {scenario_id:?} missing from one score file"
                )));
            }
            rows.sort_by_key(|r| r.traj_index);
            let scorer_id = rows[0].scorer_id.clone();
            outputs.push(ScorerOutput {
                scorer_id,
                scores: rows.iter().map(|r| r.stage1).collect(),
            });
        }
        let fused_pairs = fusion::fuse_models(&outputs, &fusion_cfg)?;
        let weight_winner = fusion::select_best(&fused_pairs, &fusion_cfg)?;
        let fused: Vec<f64> = fused_pairs.iter().map(|&(_, s)| s).collect();

        let (selected_index, vlm) = match &vlm_inputs {
            None => (weight_winner, None),
            Some((scenarios, trajs, endpoint)) => {
                let scenario = scenarios
                    .iter()
                    .find(|s| &s.id == scenario_id)
                    .ok_or_else(|| {
                        RunError::Data(format!("scenario {scenario_id:?} not in scenario file"))
                    })?;
                let refs: Vec<&ScorerOutput> = outputs.iter().collect();
                let rankings = per_scorer_rankings(&refs, &fusion_cfg)?;
                let stage1 = scenario.stage1();
                let few_shot = default_few_shot();
                let inputs = VlmFusionInputs {
                    stage: &stage1,
                    camera: &scenario.camera,
                    ego: &scenario.ego,
                    candidates: trajs,
                    rankings: &rankings,
                    weight_winner,
                    few_shot: &few_shot,
                };
                let selection = vsf_vlm::select_with_vlm(
                    &inputs,
                    &cfg.lqr,
                    &cfg.render.to_render_config(),
                    endpoint,
                )?;
                (
                    selection.index,
                    Some(VlmOutcome {
                        presented: selection.presented,
                        fell_back: selection.fell_back,
                        raw_reply: selection.raw_reply,
                    }),
                )
            }
        };
        out.push(FuseRecord {
            scenario_id: scenario_id.clone(),
            selected_index,
            fused,
            vlm,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{gen_scenarios, ScenarioKind};

    fn small_config() -> HarnessConfig {
        let mut cfg = HarnessConfig::default();
        cfg.vocab.curvature_grid = vec![-0.05, 0.0, 0.05];
        cfg.vocab.accel_grid = vec![-2.0, 0.0, 2.0];
        cfg.vocab.second_phase = None;
        cfg.anchors.seed_count = 1;
        cfg
    }

    #[test]
    fn candidates_are_deterministic_and_within_limits() {
        let cfg = small_config();
        let scenario = &gen_scenarios(ScenarioKind::StraightClear, 1, 1)[0];
        let a = build_candidates(&scenario.ego, &scenario.id, &cfg, 42).unwrap();
        let b = build_candidates(&scenario.ego, &scenario.id, &cfg, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 9 * 2); // vocabulary + one anchor per seed
        for traj in &a {
            traj.validate().unwrap();
        }
    }

    #[test]
    fn scorer_flag_grammar() {
        assert_eq!(ScorerSpec::parse_flag("oracle").unwrap(), ScorerSpec::Oracle);
        assert_eq!(
            ScorerSpec::parse_flag("noisy:0.1,7").unwrap(),
            ScorerSpec::Noisy { sd: 0.1, seed: 7 }
        );
        assert_eq!(
            ScorerSpec::parse_flag("linear:/tmp/p.txt").unwrap(),
            ScorerSpec::Linear { params: PathBuf::from("/tmp/p.txt"), directive: DirectiveSource::Rule }
        );
        assert_eq!(
            ScorerSpec::parse_flag("linear:/tmp/p.txt,vlm").unwrap(),
            ScorerSpec::Linear { params: PathBuf::from("/tmp/p.txt"), directive: DirectiveSource::Vlm }
        );
        assert!(ScorerSpec::parse_flag("noisy:0.1").is_err());
        assert!(ScorerSpec::parse_flag("magic").is_err());
    }

    #[test]
    fn ablation_spec_validation() {
        let mut spec = AblationSpec {
            scorers: [("a".to_string(), ScorerSpec::Oracle)].into_iter().collect(),
            fusions: vec![FusionSpec {
                name: "solo a".into(),
                scorers: vec!["a".into()],
                mode: FusionMode::Weight,
                model_weights: None,
            }],
            scenario_file: PathBuf::from("x.json"),
            output_dir: PathBuf::from("out"),
        };
        spec.validate().unwrap();
        spec.fusions.push(FusionSpec {
            name: "bad".into(),
            scorers: vec!["missing".into()],
            mode: FusionMode::Weight,
            model_weights: None,
        });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn inflight_gate_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;
        let gate = Arc::new(InflightGate::new(2));
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        for _ in 0..8 {
            let gate = Arc::clone(&gate);
            let live = Arc::clone(&live);
            let peak = Arc::clone(&peak);
            handles.push(std::thread::spawn(move || {
                gate.run(|| {
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(std::time::Duration::from_millis(10));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
