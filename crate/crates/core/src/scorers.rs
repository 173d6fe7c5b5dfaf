//! Pluggable per-candidate scorers: an oracle that replays the metric
//! suite, noisy observers standing in for backbone variants, and a
//! directive-conditioned linear (ridge) scorer with a closed-form fit.

use crate::directive::{encode_directive, CognitiveDirective, DirectiveEmbedding};
use crate::geometry::{normalize_angle, Polyline};
use crate::linalg::cholesky_solve;
use crate::metrics::{self, MetricConfig, MetricError, SubScores, ALL_METRICS};
use crate::num::Real;
use crate::scenario::{Command, EgoState, Stage, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Predicted sub-scores for every candidate, in candidate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerOutput<S> {
    pub scorer_id: String,
    pub scores: Vec<SubScores<S>>,
}

pub const FEATURE_COUNT: usize = 16;
pub const EGO_FEATURE_COUNT: usize = 5;

/// Names of the trajectory features, in vector order. This order is part
/// of the parameter-file contract.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "end_x",
    "end_y",
    "end_heading",
    "mean_abs_curvature",
    "max_abs_curvature",
    "mean_abs_accel",
    "max_abs_accel",
    "arc_length",
    "min_agent_clearance",
    "drivable_fraction",
    "lat_offset_mean",
    "lat_offset_std",
    "lat_offset_min",
    "lat_offset_max",
    "lat_offset_end",
    "lat_offset_abs_max",
];

/// Clearance reported when there is nothing to clear.
const OPEN_CLEARANCE: f64 = 100.0;

/// Fixed-length summary of one candidate in one stage.
pub fn trajectory_features<S: Real>(traj: &Trajectory<S>, stage: &Stage<'_, S>) -> Vec<S> {
    let end = traj.end();
    let n = traj.samples.len();
    let n_s = S::from_usize(n).unwrap();

    let mut curv_sum = S::zero();
    let mut curv_max = S::zero();
    let mut curv_count = S::zero();
    for w in traj.samples.windows(2) {
        let ds = w[0].pose.position().dist(w[1].pose.position());
        if ds < S::of(1e-6) {
            continue;
        }
        let k = (normalize_angle(w[1].pose.heading - w[0].pose.heading) / ds).abs();
        curv_sum += k;
        curv_max = curv_max.max(k);
        curv_count += S::one();
    }
    let curv_mean = if curv_count > S::zero() { curv_sum / curv_count } else { S::zero() };

    let mut acc_sum = S::zero();
    let mut acc_max = S::zero();
    for w in traj.samples.windows(2) {
        let dt = w[1].t - w[0].t;
        if dt <= S::zero() {
            continue;
        }
        let a = ((w[1].speed - w[0].speed) / dt).abs();
        acc_sum += a;
        acc_max = acc_max.max(a);
    }
    let acc_mean = acc_sum / S::from_usize(n.saturating_sub(1).max(1)).unwrap();

    let mut clearance = S::of(OPEN_CLEARANCE);
    for sample in traj.samples.iter() {
        for agent in stage.agents {
            let (pose, _) = agent.state_at(sample.t);
            clearance = clearance.min(sample.pose.position().dist(pose.position()));
        }
    }

    let drivable_fraction = if stage.map.drivable.is_empty() {
        S::one()
    } else {
        let inside = traj
            .samples
            .iter()
            .filter(|s| {
                stage
                    .map
                    .drivable
                    .iter()
                    .any(|poly| poly.contains(s.pose.position()))
            })
            .count();
        S::from_usize(inside).unwrap() / n_s
    };

    let route = Polyline::new(&stage.map.route);
    let offsets: Vec<S> = traj
        .samples
        .iter()
        .map(|s| route.project(s.pose.position()).signed_offset)
        .collect();
    let lat_mean = offsets.iter().copied().sum::<S>() / n_s;
    let lat_var = offsets
        .iter()
        .map(|&o| (o - lat_mean) * (o - lat_mean))
        .sum::<S>()
        / n_s;
    let lat_min = offsets.iter().copied().fold(S::infinity(), S::min);
    let lat_max = offsets.iter().copied().fold(S::neg_infinity(), S::max);
    let lat_abs_max = lat_min.abs().max(lat_max.abs());

    vec![
        end.pose.x,
        end.pose.y,
        end.pose.heading,
        curv_mean,
        curv_max,
        acc_mean,
        acc_max,
        traj.arc_length(),
        clearance,
        drivable_fraction,
        lat_mean,
        lat_var.sqrt(),
        lat_min,
        lat_max,
        *offsets.last().expect("non-empty trajectory"),
        lat_abs_max,
    ]
}

/// speed, accel, command one-hot (left, forward, right).
pub fn ego_features<S: Real>(ego: &EgoState<S>) -> [S; EGO_FEATURE_COUNT] {
    let onehot = |c: Command| if ego.command == c { S::one() } else { S::zero() };
    [
        ego.speed,
        ego.accel,
        onehot(Command::Left),
        onehot(Command::Forward),
        onehot(Command::Right),
    ]
}

/// Ground-truth scorer: replays the metric suite verbatim.
pub fn oracle_scorer<S: Real>(
    trajs: &[Trajectory<S>],
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<ScorerOutput<S>, MetricError> {
    Ok(ScorerOutput {
        scorer_id: "oracle".into(),
        scores: metrics::score_candidates(trajs, stage, cfg)?,
    })
}

/// Oracle scores plus seeded Gaussian noise, clipped to [0, 1]. The noise
/// stream is keyed on (rng_seed, scorer_id), so distinct observers are
/// independent and reruns reproduce.
pub fn noisy_scorer<S: Real>(
    trajs: &[Trajectory<S>],
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
    scorer_id: &str,
    noise_sd: S,
    rng_seed: u64,
) -> Result<ScorerOutput<S>, MetricError> {
    let oracle = metrics::score_candidates(trajs, stage, cfg)?;
    Ok(ScorerOutput {
        scorer_id: scorer_id.to_string(),
        scores: perturb_scores(&oracle, scorer_id, noise_sd, rng_seed),
    })
}

/// Noise application, split out so a cached oracle pass can be reused
/// across observers.
pub fn perturb_scores<S: Real>(
    oracle: &[SubScores<S>],
    scorer_id: &str,
    noise_sd: S,
    rng_seed: u64,
) -> Vec<SubScores<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ fnv1a(scorer_id.as_bytes()));
    oracle
        .iter()
        .map(|scores| {
            let mut out = *scores;
            for &m in ALL_METRICS.iter() {
                let g: f64 = StandardNormal.sample(&mut rng);
                out.set(m, (scores.get(m) + noise_sd * S::of(g)).clamp01());
            }
            out
        })
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Ridge weights for the nine metric heads over
/// [trajectory features | ego status | directive embedding] plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorerParams<S> {
    /// One weight row per metric, ALL_METRICS order.
    pub weights: Vec<Vec<S>>,
    pub biases: Vec<S>,
    pub lambda: S,
    pub embedding: DirectiveEmbedding<S>,
}

impl<S: Real> LinearScorerParams<S> {
    pub fn input_dim(&self) -> usize {
        FEATURE_COUNT + EGO_FEATURE_COUNT + self.embedding.dim
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        if self.weights.len() != ALL_METRICS.len() || self.biases.len() != ALL_METRICS.len() {
            return Err(ScorerError::DimensionMismatch(format!(
                "expected {} weight rows, found {}",
                ALL_METRICS.len(),
                self.weights.len()
            )));
        }
        let dim = self.input_dim();
        for (i, row) in self.weights.iter().enumerate() {
            if row.len() != dim {
                return Err(ScorerError::DimensionMismatch(format!(
                    "weight row {i} has length {}, expected {dim}",
                    row.len()
                )));
            }
        }
        if !(self.lambda > S::zero()) {
            return Err(ScorerError::DimensionMismatch("lambda must be > 0".into()));
        }
        self.embedding
            .validate()
            .map_err(ScorerError::DimensionMismatch)?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScorerError {
    #[error("design matrix is rank deficient and lambda = 0")]
    DegenerateDesign,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("need at least {need} training rows, got {got}")]
    NotEnoughRows { need: usize, got: usize },
    #[error("parameter file {path}: {message}")]
    ParamFile { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// One training row: candidate features, ego status, directive and the
/// metric-suite scores to regress onto.
#[derive(Debug, Clone)]
pub struct TrainingRow<S> {
    pub features: Vec<S>,
    pub ego: [S; EGO_FEATURE_COUNT],
    pub directive: CognitiveDirective,
    pub targets: SubScores<S>,
}

fn assemble_input<S: Real>(
    features: &[S],
    ego: &[S; EGO_FEATURE_COUNT],
    directive: CognitiveDirective,
    embedding: &DirectiveEmbedding<S>,
) -> Vec<S> {
    let mut x = Vec::with_capacity(FEATURE_COUNT + EGO_FEATURE_COUNT + embedding.dim);
    x.extend_from_slice(features);
    x.extend_from_slice(ego);
    x.extend_from_slice(&encode_directive(directive, embedding));
    x
}

/// Closed-form per-metric ridge fit on the normal equations. The bias
/// column is appended and left unregularized.
pub fn fit_linear_scorer<S: Real>(
    training: &[TrainingRow<S>],
    lambda: S,
    embedding: DirectiveEmbedding<S>,
) -> Result<LinearScorerParams<S>, ScorerError> {
    let dim = FEATURE_COUNT + EGO_FEATURE_COUNT + embedding.dim;
    if training.len() < dim + 1 {
        return Err(ScorerError::NotEnoughRows { need: dim + 1, got: training.len() });
    }
    let aug = dim + 1; // bias column
    let rows: Vec<Vec<S>> = training
        .iter()
        .map(|row| {
            if row.features.len() != FEATURE_COUNT {
                return Err(ScorerError::DimensionMismatch(format!(
                    "feature vector has length {}, expected {FEATURE_COUNT}",
                    row.features.len()
                )));
            }
            let mut x = assemble_input(&row.features, &row.ego, row.directive, &embedding);
            x.push(S::one());
            Ok(x)
        })
        .collect::<Result<_, _>>()?;

    // Gram matrix X^T X + lambda I (bias unregularized), shared by all heads
    let mut gram = vec![vec![S::zero(); aug]; aug];
    for x in &rows {
        for i in 0..aug {
            for j in i..aug {
                gram[i][j] += x[i] * x[j];
            }
        }
    }
    for i in 0..aug {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
    }
    for (i, row) in gram.iter_mut().enumerate().take(dim) {
        row[i] += lambda;
    }
    let solve = |rhs: &[S]| cholesky_solve(&gram, rhs);

    let mut weights = Vec::with_capacity(ALL_METRICS.len());
    let mut biases = Vec::with_capacity(ALL_METRICS.len());
    for &metric in ALL_METRICS.iter() {
        let mut rhs = vec![S::zero(); aug];
        for (x, row) in rows.iter().zip(training) {
            let y = row.targets.get(metric);
            for i in 0..aug {
                rhs[i] += x[i] * y;
            }
        }
        let sol = solve(&rhs).ok_or(ScorerError::DegenerateDesign)?;
        weights.push(sol[..dim].to_vec());
        biases.push(sol[dim]);
    }
    Ok(LinearScorerParams { weights, biases, lambda, embedding })
}

/// Predictions `clip(w.x + b, 0, 1)` per metric head.
pub fn linear_scorer<S: Real>(
    trajs: &[Trajectory<S>],
    stage: &Stage<'_, S>,
    ego: &EgoState<S>,
    directive: CognitiveDirective,
    params: &LinearScorerParams<S>,
    scorer_id: &str,
) -> Result<ScorerOutput<S>, ScorerError> {
    params.validate()?;
    let ego_f = ego_features(ego);
    let scores = trajs
        .iter()
        .map(|traj| {
            let x = assemble_input(
                &trajectory_features(traj, stage),
                &ego_f,
                directive,
                &params.embedding,
            );
            let mut out = SubScores::all(S::zero());
            for (head, &metric) in ALL_METRICS.iter().enumerate() {
                let w = &params.weights[head];
                let dot: S = w.iter().zip(&x).map(|(a, b)| *a * *b).sum();
                out.set(metric, (dot + params.biases[head]).clamp01());
            }
            out
        })
        .collect();
    Ok(ScorerOutput { scorer_id: scorer_id.to_string(), scores })
}

/// Plain-text parameter file: a header naming the feature order, one
/// weight row per metric, then the embedding table.
pub fn save_params<S: Real>(path: &Path, params: &LinearScorerParams<S>) -> Result<(), ScorerError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# linear scorer parameters v1")?;
    writeln!(
        f,
        "# input order: {} | ego: speed accel cmd_left cmd_forward cmd_right | directive embedding",
        FEATURE_NAMES.join(" ")
    )?;
    writeln!(f, "lambda {}", params.lambda)?;
    writeln!(f, "dim {}", params.input_dim())?;
    for (head, &metric) in ALL_METRICS.iter().enumerate() {
        write!(f, "metric {metric}")?;
        for w in &params.weights[head] {
            write!(f, " {w}")?;
        }
        writeln!(f, " bias {}", params.biases[head])?;
    }
    writeln!(f, "embedding {} {}", CognitiveDirective::COUNT, params.embedding.dim)?;
    for (dir, row) in CognitiveDirective::all().zip(&params.embedding.table) {
        write!(f, "row {}", dir.to_string().to_lowercase().replace(", ", ","))?;
        for v in row {
            write!(f, " {v}")?;
        }
        writeln!(f)?;
    }
    Ok(())
}

pub fn load_params<S: Real>(path: &Path) -> Result<LinearScorerParams<S>, ScorerError> {
    let err = |message: String| ScorerError::ParamFile {
        path: path.display().to_string(),
        message,
    };
    let file = std::fs::File::open(path)?;
    let mut lambda = None;
    let mut dim = None;
    let mut weights: Vec<Vec<S>> = Vec::new();
    let mut biases: Vec<S> = Vec::new();
    let mut table: Vec<Vec<S>> = Vec::new();
    let mut emb_dim = 0usize;
    let parse = |tok: &str| -> Result<S, ScorerError> {
        tok.parse::<f64>()
            .map(S::of)
            .map_err(|e| err(format!("bad number {tok:?}: {e}")))
    };
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("lambda") => {
                lambda = Some(parse(toks.next().ok_or_else(|| err("missing lambda".into()))?)?)
            }
            Some("dim") => {
                dim = Some(
                    toks.next()
                        .and_then(|t| t.parse::<usize>().ok())
                        .ok_or_else(|| err("missing dim".into()))?,
                )
            }
            Some("metric") => {
                let _name = toks.next().ok_or_else(|| err("missing metric name".into()))?;
                let rest: Vec<&str> = toks.collect();
                let bias_pos = rest
                    .iter()
                    .position(|t| *t == "bias")
                    .ok_or_else(|| err("metric row missing bias".into()))?;
                let row: Vec<S> = rest[..bias_pos]
                    .iter()
                    .map(|t| parse(t))
                    .collect::<Result<_, _>>()?;
                let bias = parse(
                    rest.get(bias_pos + 1)
                        .ok_or_else(|| err("missing bias value".into()))?,
                )?;
                weights.push(row);
                biases.push(bias);
            }
            Some("embedding") => {
                let rows: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad embedding rows".into()))?;
                emb_dim = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad embedding dim".into()))?;
                if rows != CognitiveDirective::COUNT {
                    return Err(err(format!("embedding must have 12 rows, found {rows}")));
                }
            }
            Some("row") => {
                let _label = toks.next().ok_or_else(|| err("missing row label".into()))?;
                let row: Vec<S> = toks.map(parse).collect::<Result<_, _>>()?;
                table.push(row);
            }
            Some(other) => return Err(err(format!("unknown record {other:?}"))),
            None => {}
        }
    }
    let lambda = lambda.ok_or_else(|| err("missing lambda record".into()))?;
    let dim = dim.ok_or_else(|| err("missing dim record".into()))?;
    let params = LinearScorerParams {
        weights,
        biases,
        lambda,
        embedding: DirectiveEmbedding { dim: emb_dim, table },
    };
    if params.input_dim() != dim {
        return Err(err(format!(
            "declared dim {dim} does not match {} + {} + {}",
            FEATURE_COUNT, EGO_FEATURE_COUNT, emb_dim
        )));
    }
    params.validate()?;
    Ok(params)
}
