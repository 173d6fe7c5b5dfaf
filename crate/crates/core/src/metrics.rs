//! The nine-part metric suite and its two-stage composition.
//!
//! Sub-metrics are binary (pass/fail) except ego progress, which is the
//! clipped ratio against the best compliant candidate. The composite score
//! multiplies the penalty group and weights the rest:
//! `(prod penalties) * (sum w_m s_m / sum w_m)`.

use crate::geometry::{
    angle_diff, normalize_angle, segment_intersection_param, Point2, Polyline, OrientedBox,
};
use crate::num::Real;
use crate::scenario::{Agent, Scenario, Stage, Trajectory};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Nc,
    Dac,
    Ddc,
    Tlc,
    Ep,
    Ttc,
    Lk,
    Hc,
    Ec,
}

pub const ALL_METRICS: [MetricName; 9] = [
    MetricName::Nc,
    MetricName::Dac,
    MetricName::Ddc,
    MetricName::Tlc,
    MetricName::Ep,
    MetricName::Ttc,
    MetricName::Lk,
    MetricName::Hc,
    MetricName::Ec,
];

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MetricName::Nc => "nc",
            MetricName::Dac => "dac",
            MetricName::Ddc => "ddc",
            MetricName::Tlc => "tlc",
            MetricName::Ep => "ep",
            MetricName::Ttc => "ttc",
            MetricName::Lk => "lk",
            MetricName::Hc => "hc",
            MetricName::Ec => "ec",
        };
        write!(f, "{s}")
    }
}

impl FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nc" => Ok(MetricName::Nc),
            "dac" => Ok(MetricName::Dac),
            "ddc" => Ok(MetricName::Ddc),
            "tlc" => Ok(MetricName::Tlc),
            "ep" => Ok(MetricName::Ep),
            "ttc" => Ok(MetricName::Ttc),
            "lk" => Ok(MetricName::Lk),
            "hc" => Ok(MetricName::Hc),
            "ec" => Ok(MetricName::Ec),
            other => Err(format!("unknown metric name {other:?}")),
        }
    }
}

/// The nine named metric values for one trajectory in one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubScores<S> {
    pub nc: S,
    pub dac: S,
    pub ddc: S,
    pub tlc: S,
    pub ep: S,
    pub ttc: S,
    pub lk: S,
    pub hc: S,
    pub ec: S,
}

impl<S: Real> SubScores<S> {
    pub fn all(value: S) -> Self {
        SubScores {
            nc: value,
            dac: value,
            ddc: value,
            tlc: value,
            ep: value,
            ttc: value,
            lk: value,
            hc: value,
            ec: value,
        }
    }

    pub fn get(&self, name: MetricName) -> S {
        match name {
            MetricName::Nc => self.nc,
            MetricName::Dac => self.dac,
            MetricName::Ddc => self.ddc,
            MetricName::Tlc => self.tlc,
            MetricName::Ep => self.ep,
            MetricName::Ttc => self.ttc,
            MetricName::Lk => self.lk,
            MetricName::Hc => self.hc,
            MetricName::Ec => self.ec,
        }
    }

    pub fn set(&mut self, name: MetricName, value: S) {
        match name {
            MetricName::Nc => self.nc = value,
            MetricName::Dac => self.dac = value,
            MetricName::Ddc => self.ddc = value,
            MetricName::Tlc => self.tlc = value,
            MetricName::Ep => self.ep = value,
            MetricName::Ttc => self.ttc = value,
            MetricName::Lk => self.lk = value,
            MetricName::Hc => self.hc = value,
            MetricName::Ec => self.ec = value,
        }
    }

    pub fn in_bounds(&self) -> bool {
        ALL_METRICS
            .iter()
            .all(|&m| self.get(m) >= S::zero() && self.get(m) <= S::one())
    }
}

/// Which metrics multiply and which average, with their weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights<S> {
    pub penalty_set: BTreeSet<MetricName>,
    pub weighted: BTreeMap<MetricName, S>,
}

impl<S: Real> MetricWeights<S> {
    pub fn validate(&self) -> Result<(), MetricError> {
        for name in self.penalty_set.iter() {
            if self.weighted.contains_key(name) {
                return Err(MetricError::InvalidWeights(format!(
                    "{name} appears in both the penalty set and the weighted set"
                )));
            }
        }
        for &name in ALL_METRICS.iter() {
            if !self.penalty_set.contains(&name) && !self.weighted.contains_key(&name) {
                return Err(MetricError::InvalidWeights(format!("{name} is not covered")));
            }
        }
        if self.weighted.values().any(|w| *w < S::zero()) {
            return Err(MetricError::InvalidWeights("negative weight".into()));
        }
        let total: S = self.weighted.values().copied().sum();
        if !(total > S::zero()) {
            return Err(MetricError::InvalidWeights("weights must sum to > 0".into()));
        }
        Ok(())
    }
}

impl<S: Real> Default for MetricWeights<S> {
    /// NAVSIM-v2-style grouping: hard rules multiply, the rest average
    /// with EP/TTC emphasized.
    fn default() -> Self {
        let penalty_set = [MetricName::Nc, MetricName::Dac, MetricName::Ddc, MetricName::Tlc]
            .into_iter()
            .collect();
        let weighted = [
            (MetricName::Ep, S::of(5.0)),
            (MetricName::Ttc, S::of(5.0)),
            (MetricName::Lk, S::of(2.0)),
            (MetricName::Hc, S::of(1.0)),
            (MetricName::Ec, S::of(2.0)),
        ]
        .into_iter()
        .collect();
        MetricWeights { penalty_set, weighted }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpdmsResult<S> {
    pub stage1: SubScores<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<SubScores<S>>,
    pub epdms: S,
}

/// Every geometric and dynamic threshold the suite uses, in one block.
/// The paper's metric list fixes the names; these defaults fix the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig<S> {
    pub ego_length: S,
    pub ego_width: S,
    /// Below this speed the ego is "stationary" for at-fault purposes (m/s).
    pub stationary_speed: S,
    /// Half-angle of the rear impact sector (radians; 120 degree sector).
    pub rear_sector_half_angle: S,
    /// Maximum tolerated wrong-way distance (m).
    pub ddc_limit: S,
    /// Constant-velocity projection window (s) and its sampling step.
    pub ttc_horizon: S,
    pub ttc_step: S,
    /// Lane-keeping deviation bound (m) and tolerated duration (s).
    pub lk_max_dev: S,
    pub lk_max_dur: S,
    /// Comfort bounds.
    pub hc_lon_accel_max: S,
    pub hc_lat_accel_max: S,
    pub ec_jerk_max: S,
    pub ec_yaw_rate_max: S,
    pub ec_yaw_accel_max: S,
}

impl<S: Real> Default for MetricConfig<S> {
    fn default() -> Self {
        MetricConfig {
            ego_length: S::of(4.6),
            ego_width: S::of(1.9),
            stationary_speed: S::of(0.1),
            rear_sector_half_angle: S::of(std::f64::consts::PI / 3.0),
            ddc_limit: S::of(2.0),
            ttc_horizon: S::of(1.0),
            ttc_step: S::of(0.1),
            lk_max_dev: S::of(0.5),
            lk_max_dur: S::of(1.0),
            hc_lon_accel_max: S::of(4.0),
            hc_lat_accel_max: S::of(4.9),
            ec_jerk_max: S::of(8.0),
            ec_yaw_rate_max: S::of(0.95),
            ec_yaw_accel_max: S::of(1.9),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("{metric}: missing map data ({element})")]
    MissingMapData {
        metric: &'static str,
        element: &'static str,
    },
    #[error("invalid metric weights: {0}")]
    InvalidWeights(String),
    #[error("stage-2 trajectory presence does not match the scenario")]
    StageMismatch,
}

fn ego_box_at<S: Real>(
    traj: &Trajectory<S>,
    k: usize,
    cfg: &MetricConfig<S>,
) -> OrientedBox<S> {
    let s = &traj.samples[k];
    OrientedBox::new(s.pose.position(), s.pose.heading, cfg.ego_length, cfg.ego_width)
}

fn agent_box<S: Real>(agent: &Agent<S>, pose: crate::scenario::Pose2D<S>) -> OrientedBox<S> {
    OrientedBox::new(pose.position(), pose.heading, agent.length, agent.width)
}

/// No at-fault collisions. Fault is adjudicated per agent at the first
/// contact step: a collision is excused when the ego is stationary or the
/// impact arrives in its rear sector.
pub fn score_nc<S: Real>(
    traj: &Trajectory<S>,
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<S, MetricError> {
    for agent in stage.agents {
        for (k, sample) in traj.samples.iter().enumerate() {
            let ego = ego_box_at(traj, k, cfg);
            let (pose, _) = agent.state_at(sample.t);
            if !ego.overlaps(&agent_box(agent, pose)) {
                continue;
            }
            // first contact with this agent decides the fault
            let excused = sample.speed < cfg.stationary_speed || {
                let d = pose.position().sub(sample.pose.position());
                let bearing = d.y.atan2(d.x);
                let rear_axis = normalize_angle(sample.pose.heading + S::PI());
                angle_diff(bearing, rear_axis) <= cfg.rear_sector_half_angle
            };
            if !excused {
                return Ok(S::zero());
            }
            break;
        }
    }
    Ok(S::one())
}

/// Drivable-area compliance: all four footprint corners inside the union
/// of drivable polygons at every step.
pub fn score_dac<S: Real>(
    traj: &Trajectory<S>,
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<S, MetricError> {
    if stage.map.drivable.is_empty() {
        return Err(MetricError::MissingMapData { metric: "dac", element: "drivable" });
    }
    for k in 0..traj.samples.len() {
        for corner in ego_box_at(traj, k, cfg).corners() {
            let inside = stage.map.drivable.iter().any(|poly| poly.contains(corner));
            if !inside {
                return Ok(S::zero());
            }
        }
    }
    Ok(S::one())
}

/// Driving-direction compliance: tolerate less than `ddc_limit` meters of
/// travel with heading opposed (> 90 degrees) to the matched lane.
pub fn score_ddc<S: Real>(
    traj: &Trajectory<S>,
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<S, MetricError> {
    if stage.map.lanes.is_empty() {
        return Err(MetricError::MissingMapData { metric: "ddc", element: "lanes" });
    }
    let mut opposed = S::zero();
    for w in traj.samples.windows(2) {
        let chord = w[0].pose.position().dist(w[1].pose.position());
        if chord < S::of(1e-9) {
            continue;
        }
        let (_, lane_heading) = match_lane(stage, w[0].pose.position());
        if angle_diff(w[0].pose.heading, lane_heading) > S::FRAC_PI_2() {
            opposed += chord;
        }
    }
    Ok(if opposed < cfg.ddc_limit { S::one() } else { S::zero() })
}

/// Nearest lane and the heading of its matched centerline segment.
fn match_lane<S: Real>(stage: &Stage<'_, S>, p: Point2<S>) -> (usize, S) {
    let mut best = (0usize, S::infinity(), S::zero());
    for (i, lane) in stage.map.lanes.iter().enumerate() {
        let proj = Polyline::new(&lane.centerline).project(p);
        if proj.distance < best.1 {
            best = (i, proj.distance, lane.direction[proj.segment]);
        }
    }
    (best.0, best.2)
}

/// Traffic-light compliance: the front bumper must not cross a stop line
/// while its light is red.
pub fn score_tlc<S: Real>(
    traj: &Trajectory<S>,
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<S, MetricError> {
    if stage.map.traffic_lights.is_empty() {
        return Ok(S::one());
    }
    let half_len = cfg.ego_length * S::of(0.5);
    let front = |k: usize| {
        let s = &traj.samples[k];
        s.pose.position().add(Point2::unit(s.pose.heading).scale(half_len))
    };
    for k in 0..traj.samples.len() - 1 {
        let (a, b) = (front(k), front(k + 1));
        for light in stage.map.traffic_lights.iter() {
            if let Some(u) = segment_intersection_param(a, b, light.stop_line[0], light.stop_line[1]) {
                let t_cross =
                    traj.samples[k].t + (traj.samples[k + 1].t - traj.samples[k].t) * u;
                if light.state_at(t_cross) == crate::scenario::LightState::Red {
                    return Ok(S::zero());
                }
            }
        }
    }
    Ok(S::one())
}

/// Net arc-length advance of the trajectory's projection onto the route.
pub fn route_progress<S: Real>(traj: &Trajectory<S>, stage: &Stage<'_, S>) -> Result<S, MetricError> {
    if stage.map.route.len() < 2 {
        return Err(MetricError::MissingMapData { metric: "ep", element: "route" });
    }
    let route = Polyline::new(&stage.map.route);
    let start = route.project(traj.start().pose.position()).arc_length;
    let end = route.project(traj.end().pose.position()).arc_length;
    Ok(end - start)
}

/// Ego progress against a reference progress (the best compliant
/// candidate). With no reference the trajectory is its own yardstick.
pub fn score_ep<S: Real>(
    traj: &Trajectory<S>,
    stage: &Stage<'_, S>,
    reference: Option<S>,
) -> Result<S, MetricError> {
    let progress = route_progress(traj, stage)?;
    match reference {
        None => Ok(S::one()),
        Some(r) if r <= S::of(1e-9) => Ok(S::one()),
        Some(r) => Ok((progress / r).clamp01()),
    }
}

/// Best route progress among candidates passing both NC and DAC; `None`
/// when no candidate qualifies.
pub fn ep_reference<S: Real>(
    candidates: &[Trajectory<S>],
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<Option<S>, MetricError> {
    let mut best: Option<S> = None;
    for traj in candidates {
        if score_nc(traj, stage, cfg)? == S::zero() {
            continue;
        }
        if score_dac(traj, stage, cfg)? == S::zero() {
            continue;
        }
        let p = route_progress(traj, stage)?;
        best = Some(match best {
            Some(b) => b.max(p),
            None => p,
        });
    }
    Ok(best)
}

/// Time-to-collision: project everything at constant velocity over
/// `(0, ttc_horizon]` from every step; any footprint overlap fails.
pub fn score_ttc<S: Real>(
    traj: &Trajectory<S>,
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<S, MetricError> {
    if stage.agents.is_empty() {
        return Ok(S::one());
    }
    let n_tau = (cfg.ttc_horizon / cfg.ttc_step).round().as_f64() as usize;
    for sample in traj.samples.iter() {
        let ego_vel = Point2::unit(sample.pose.heading).scale(sample.speed);
        for agent in stage.agents {
            let (apose, _) = agent.state_at(sample.t);
            let avel = agent.velocity_at(sample.t);
            for j in 1..=n_tau {
                let tau = cfg.ttc_step * S::from_usize(j).unwrap();
                let ego_box = OrientedBox::new(
                    sample.pose.position().add(ego_vel.scale(tau)),
                    sample.pose.heading,
                    cfg.ego_length,
                    cfg.ego_width,
                );
                let a_box = OrientedBox::new(
                    apose.position().add(avel.scale(tau)),
                    apose.heading,
                    agent.length,
                    agent.width,
                );
                if ego_box.overlaps(&a_box) {
                    return Ok(S::zero());
                }
            }
        }
    }
    Ok(S::one())
}

/// Lane keeping: lateral deviation beyond `lk_max_dev` must not persist
/// longer than `lk_max_dur`.
pub fn score_lk<S: Real>(
    traj: &Trajectory<S>,
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<S, MetricError> {
    if stage.map.lanes.is_empty() {
        return Err(MetricError::MissingMapData { metric: "lk", element: "lanes" });
    }
    let mut run = 0usize;
    for sample in traj.samples.iter() {
        let p = sample.pose.position();
        let deviation = stage
            .map
            .lanes
            .iter()
            .map(|lane| Polyline::new(&lane.centerline).project(p).distance)
            .fold(S::infinity(), |a, b| a.min(b));
        if deviation > cfg.lk_max_dev {
            run += 1;
            let duration = traj.dt * S::from_usize(run).unwrap();
            if duration > cfg.lk_max_dur {
                return Ok(S::zero());
            }
        } else {
            run = 0;
        }
    }
    Ok(S::one())
}

/// (t, speed, heading) chain of the history followed by the plan; the
/// seam between them is part of the differencing window.
fn comfort_chain<S: Real>(traj: &Trajectory<S>, stage: &Stage<'_, S>) -> Vec<(S, S, S)> {
    let t_start = traj.samples[0].t;
    let mut chain: Vec<(S, S, S)> = stage
        .ego_history
        .samples
        .iter()
        .filter(|s| s.t < t_start - S::of(1e-9))
        .map(|s| (s.t, s.speed, s.pose.heading))
        .collect();
    chain.extend(traj.samples.iter().map(|s| (s.t, s.speed, s.pose.heading)));
    chain
}

fn comfort_profiles<S: Real>(chain: &[(S, S, S)]) -> (Vec<(S, S)>, Vec<(S, S)>, Vec<(S, S)>) {
    // finite-difference longitudinal accel, yaw rate, lateral accel
    let mut lon = Vec::new();
    let mut yaw = Vec::new();
    let mut lat = Vec::new();
    for w in chain.windows(2) {
        let dt = w[1].0 - w[0].0;
        if dt <= S::zero() {
            continue;
        }
        let a = (w[1].1 - w[0].1) / dt;
        let yr = normalize_angle(w[1].2 - w[0].2) / dt;
        lon.push((w[0].0, a));
        yaw.push((w[0].0, yr));
        lat.push((w[0].0, w[0].1 * yr));
    }
    (lon, yaw, lat)
}

/// History comfort: accel bounds over the plan prefixed by the history.
pub fn score_hc<S: Real>(
    traj: &Trajectory<S>,
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<S, MetricError> {
    let (lon, _, lat) = comfort_profiles(&comfort_chain(traj, stage));
    let ok = lon.iter().all(|&(_, a)| a.abs() <= cfg.hc_lon_accel_max)
        && lat.iter().all(|&(_, a)| a.abs() <= cfg.hc_lat_accel_max);
    Ok(if ok { S::one() } else { S::zero() })
}

/// Extended comfort: HC bounds plus jerk, yaw-rate and yaw-accel bounds.
pub fn score_ec<S: Real>(
    traj: &Trajectory<S>,
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<S, MetricError> {
    if score_hc(traj, stage, cfg)? == S::zero() {
        return Ok(S::zero());
    }
    let (lon, yaw, _) = comfort_profiles(&comfort_chain(traj, stage));
    let diff = |series: &[(S, S)]| -> Vec<S> {
        series
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    };
    let ok = diff(&lon).iter().all(|j| j.abs() <= cfg.ec_jerk_max)
        && yaw.iter().all(|&(_, r)| r.abs() <= cfg.ec_yaw_rate_max)
        && diff(&yaw).iter().all(|a| a.abs() <= cfg.ec_yaw_accel_max);
    Ok(if ok { S::one() } else { S::zero() })
}

/// All nine sub-metrics for one trajectory.
pub fn score_all<S: Real>(
    traj: &Trajectory<S>,
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
    ep_ref: Option<S>,
) -> Result<SubScores<S>, MetricError> {
    Ok(SubScores {
        nc: score_nc(traj, stage, cfg)?,
        dac: score_dac(traj, stage, cfg)?,
        ddc: score_ddc(traj, stage, cfg)?,
        tlc: score_tlc(traj, stage, cfg)?,
        ep: score_ep(traj, stage, ep_ref)?,
        ttc: score_ttc(traj, stage, cfg)?,
        lk: score_lk(traj, stage, cfg)?,
        hc: score_hc(traj, stage, cfg)?,
        ec: score_ec(traj, stage, cfg)?,
    })
}

/// Score a whole candidate set against one stage; the EP reference is the
/// best NC- and DAC-compliant progress within the set.
pub fn score_candidates<S: Real>(
    candidates: &[Trajectory<S>],
    stage: &Stage<'_, S>,
    cfg: &MetricConfig<S>,
) -> Result<Vec<SubScores<S>>, MetricError> {
    let reference = ep_reference(candidates, stage, cfg)?;
    candidates
        .iter()
        .map(|traj| score_all(traj, stage, cfg, reference))
        .collect()
}

/// `(prod penalties) * (sum w_m s_m / sum w_m)`.
pub fn compose_epdms<S: Real>(
    scores: &SubScores<S>,
    weights: &MetricWeights<S>,
) -> Result<S, MetricError> {
    weights.validate()?;
    let mut penalty = S::one();
    for &name in weights.penalty_set.iter() {
        penalty *= scores.get(name);
    }
    let total: S = weights.weighted.values().copied().sum();
    let mut acc = S::zero();
    for (&name, &w) in weights.weighted.iter() {
        acc += w * scores.get(name);
    }
    Ok((penalty * acc / total).clamp01())
}

/// Score a plan against stage one (and stage two when the scenario has
/// one); the per-scenario EPDMS is the product of the stage composites.
pub fn evaluate_two_stage<S: Real>(
    traj1: &Trajectory<S>,
    traj2: Option<&Trajectory<S>>,
    scenario: &Scenario<S>,
    weights: &MetricWeights<S>,
    cfg: &MetricConfig<S>,
    ep_refs: (Option<S>, Option<S>),
) -> Result<EpdmsResult<S>, MetricError> {
    let stage2 = scenario.stage2();
    if traj2.is_some() != stage2.is_some() {
        return Err(MetricError::StageMismatch);
    }
    let s1 = score_all(traj1, &scenario.stage1(), cfg, ep_refs.0)?;
    let c1 = compose_epdms(&s1, weights)?;
    match (traj2, stage2) {
        (Some(t2), Some(stage)) => {
            let s2 = score_all(t2, &stage, cfg, ep_refs.1)?;
            let c2 = compose_epdms(&s2, weights)?;
            Ok(EpdmsResult { stage1: s1, stage2: Some(s2), epdms: c1 * c2 })
        }
        _ => Ok(EpdmsResult { stage1: s1, stage2: None, epdms: c1 }),
    }
}
