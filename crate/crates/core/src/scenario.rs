//! Domain model: trajectories, agents, maps, cameras and scenarios, plus
//! loading/validation and trajectory resampling.
//!
//! All data lives in the ego-local planning frame at t = 0 (x forward,
//! y left, angles CCW radians), distances in meters, times in seconds.
//! Scenario files are UTF-8 JSON: a top-level list of scenario records
//! whose field names match the struct fields below.

use crate::geometry::{lerp_angle, normalize_angle, Point2, Polygon};
use crate::num::Real;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// Default planning horizon in seconds.
pub const DEFAULT_HORIZON: f64 = 4.0;
/// Default sample step in seconds (40 steps plus the initial pose).
pub const DEFAULT_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D<S> {
    pub x: S,
    pub y: S,
    /// Heading in radians, normalized to (-pi, pi].
    pub heading: S,
}

impl<S: Real> Pose2D<S> {
    pub fn new(x: S, y: S, heading: S) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Point2<S> {
        Point2::new(self.x, self.y)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.heading.is_finite()
            && self.heading > -S::PI()
            && self.heading <= S::PI()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample<S> {
    pub t: S,
    pub pose: Pose2D<S>,
    pub speed: S,
}

/// Timestamped pose/speed sequence at a fixed step: the unit that gets
/// scored, fused, simulated and rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub samples: Vec<TrajectorySample<S>>,
    pub dt: S,
    pub horizon: S,
}

impl<S: Real> Trajectory<S> {
    /// Build from uniformly spaced samples starting at `t0`.
    pub fn from_samples(t0: S, dt: S, samples: Vec<(Pose2D<S>, S)>) -> Self {
        let horizon = dt * S::from_usize(samples.len().saturating_sub(1)).unwrap();
        Trajectory {
            samples: samples
                .into_iter()
                .enumerate()
                .map(|(i, (pose, speed))| TrajectorySample {
                    t: t0 + dt * S::from_usize(i).unwrap(),
                    pose,
                    speed,
                })
                .collect(),
            dt,
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start(&self) -> &TrajectorySample<S> {
        &self.samples[0]
    }

    pub fn end(&self) -> &TrajectorySample<S> {
        self.samples.last().expect("non-empty trajectory")
    }

    pub fn positions(&self) -> Vec<Point2<S>> {
        self.samples.iter().map(|s| s.pose.position()).collect()
    }

    /// Total chord length of the sample chain.
    pub fn arc_length(&self) -> S {
        self.samples
            .windows(2)
            .map(|w| w[0].pose.position().dist(w[1].pose.position()))
            .sum()
    }

    /// Largest |heading change| / chord-length ratio along the chain.
    /// Steps shorter than `min_step` are skipped (heading is ill-defined
    /// while standing still).
    pub fn max_abs_curvature(&self, min_step: S) -> S {
        let mut max = S::zero();
        for w in self.samples.windows(2) {
            let ds = w[0].pose.position().dist(w[1].pose.position());
            if ds < min_step {
                continue;
            }
            let dth = normalize_angle(w[1].pose.heading - w[0].pose.heading);
            max = max.max((dth / ds).abs());
        }
        max
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.samples.is_empty() {
            return Err("trajectory has no samples".into());
        }
        if !(self.dt > S::zero()) || !self.dt.is_finite() {
            return Err("dt must be positive and finite".into());
        }
        let tol = self.dt * S::of(1e-6);
        for (i, w) in self.samples.windows(2).enumerate() {
            let gap = w[1].t - w[0].t;
            if gap <= S::zero() {
                return Err(format!("timestamps not strictly increasing at index {}", i + 1));
            }
            if (gap - self.dt).abs() > tol {
                return Err(format!(
                    "non-uniform spacing at index {}: gap {} vs dt {}",
                    i + 1,
                    gap,
                    self.dt
                ));
            }
        }
        for (i, s) in self.samples.iter().enumerate() {
            if !s.pose.is_valid() {
                return Err(format!("invalid pose at sample {i}"));
            }
            if !(s.speed >= S::zero()) || !s.speed.is_finite() {
                return Err(format!("negative or non-finite speed at sample {i}"));
            }
        }
        let expect = (self.horizon / self.dt).round().as_f64() as usize + 1;
        if self.samples.len() != expect {
            return Err(format!(
                "sample count {} does not match horizon/dt + 1 = {}",
                self.samples.len(),
                expect
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Left,
    Forward,
    Right,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Left => write!(f, "left"),
            Command::Forward => write!(f, "forward"),
            Command::Right => write!(f, "right"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState<S> {
    pub pose: Pose2D<S>,
    pub speed: S,
    pub accel: S,
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint<S> {
    pub t: S,
    pub pose: Pose2D<S>,
    pub speed: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent<S> {
    pub id: String,
    pub length: S,
    pub width: S,
    pub track: Vec<TrackPoint<S>>,
}

impl<S: Real> Agent<S> {
    /// Pose and speed at time `t`, linearly interpolated (shortest-arc for
    /// heading) and clamped to the track ends.
    pub fn state_at(&self, t: S) -> (Pose2D<S>, S) {
        let first = &self.track[0];
        if t <= first.t {
            return (first.pose, first.speed);
        }
        let last = self.track.last().expect("non-empty track");
        if t >= last.t {
            return (last.pose, last.speed);
        }
        for w in self.track.windows(2) {
            if t <= w[1].t {
                let span = w[1].t - w[0].t;
                let u = if span > S::zero() { (t - w[0].t) / span } else { S::zero() };
                let pose = Pose2D {
                    x: w[0].pose.x + (w[1].pose.x - w[0].pose.x) * u,
                    y: w[0].pose.y + (w[1].pose.y - w[0].pose.y) * u,
                    heading: lerp_angle(w[0].pose.heading, w[1].pose.heading, u),
                };
                let speed = w[0].speed + (w[1].speed - w[0].speed) * u;
                return (pose, speed);
            }
        }
        (last.pose, last.speed)
    }

    /// Planar velocity estimated by finite differences around time `t`.
    pub fn velocity_at(&self, t: S) -> Point2<S> {
        let h = S::of(0.05);
        let (p0, _) = self.state_at(t - h);
        let (p1, _) = self.state_at(t + h);
        Point2::new(p1.x - p0.x, p1.y - p0.y).scale(S::one() / (h + h))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane<S> {
    pub centerline: Vec<Point2<S>>,
    /// Unit heading per centerline segment (len = centerline.len() - 1).
    pub direction: Vec<S>,
    pub half_width: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightState {
    Red,
    Yellow,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightPhase<S> {
    pub t: S,
    pub state: LightState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficLight<S> {
    pub stop_line: [Point2<S>; 2],
    pub state_timeline: Vec<LightPhase<S>>,
}

impl<S: Real> TrafficLight<S> {
    /// Piecewise-constant state lookup: the latest phase at or before `t`.
    pub fn state_at(&self, t: S) -> LightState {
        let mut state = self.state_timeline[0].state;
        for phase in &self.state_timeline {
            if phase.t <= t {
                state = phase.state;
            } else {
                break;
            }
        }
        state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapContext<S> {
    /// Union of simple CCW polygons the ego may occupy.
    pub drivable: Vec<Polygon<S>>,
    pub lanes: Vec<Lane<S>>,
    pub traffic_lights: Vec<TrafficLight<S>>,
    /// The ego's intended path.
    pub route: Vec<Point2<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraExtrinsic<S> {
    /// Camera position in the ego frame (z up from ground).
    pub x: S,
    pub y: S,
    pub z: S,
    pub yaw: S,
    pub pitch: S,
    pub roll: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel<S> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: u32,
    pub height: u32,
    pub extrinsic: CameraExtrinsic<S>,
}

impl<S: Real> CameraModel<S> {
    pub fn is_valid(&self) -> bool {
        self.fx > S::zero()
            && self.fy > S::zero()
            && self.cx > S::zero()
            && self.cx < S::from_u32(self.width).unwrap()
            && self.cy > S::zero()
            && self.cy < S::from_u32(self.height).unwrap()
    }
}

/// Override bundle for the second evaluation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOverride<S> {
    pub ego: EgoState<S>,
    pub agents: Vec<Agent<S>>,
    pub map: MapContext<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<S> {
    pub id: String,
    pub ego: EgoState<S>,
    /// Past motion ending at t = 0 (used by the comfort metrics).
    pub ego_history: Trajectory<S>,
    pub agents: Vec<Agent<S>>,
    pub map: MapContext<S>,
    pub camera: CameraModel<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<StageOverride<S>>,
}

/// One evaluation stage of a scenario: the slice of state the metric suite
/// consumes.
#[derive(Debug, Clone, Copy)]
pub struct Stage<'a, S> {
    pub ego: &'a EgoState<S>,
    pub ego_history: &'a Trajectory<S>,
    pub agents: &'a [Agent<S>],
    pub map: &'a MapContext<S>,
}

impl<S: Real> Scenario<S> {
    pub fn stage1(&self) -> Stage<'_, S> {
        Stage {
            ego: &self.ego,
            ego_history: &self.ego_history,
            agents: &self.agents,
            map: &self.map,
        }
    }

    pub fn stage2(&self) -> Option<Stage<'_, S>> {
        self.stage2.as_ref().map(|ov| Stage {
            ego: &ov.ego,
            ego_history: &self.ego_history,
            agents: &ov.agents,
            map: &ov.map,
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |field: &str, message: String| {
            Err(ScenarioError::Invariant {
                scenario: self.id.clone(),
                field: field.to_string(),
                message,
            })
        };
        if self.id.is_empty() {
            return fail("id", "empty scenario id".into());
        }
        if !(self.ego.speed >= S::zero()) {
            return fail("ego.speed", "speed must be >= 0".into());
        }
        if !self.ego.pose.is_valid() {
            return fail("ego.pose", "non-finite or unnormalized pose".into());
        }
        if let Err(m) = self.ego_history.validate() {
            return fail("ego_history", m);
        }
        validate_agents(&self.id, "agents", &self.agents)?;
        validate_map(&self.id, "map", &self.map)?;
        if !self.camera.is_valid() {
            return fail("camera", "focal lengths must be positive and principal point inside the image".into());
        }
        if let Some(ov) = &self.stage2 {
            if !(ov.ego.speed >= S::zero()) {
                return fail("stage2.ego.speed", "speed must be >= 0".into());
            }
            validate_agents(&self.id, "stage2.agents", &ov.agents)?;
            validate_map(&self.id, "stage2.map", &ov.map)?;
        }
        Ok(())
    }
}

fn validate_agents<S: Real>(
    scenario: &str,
    field: &str,
    agents: &[Agent<S>],
) -> Result<(), ScenarioError> {
    for agent in agents {
        let fail = |message: String| {
            Err(ScenarioError::Invariant {
                scenario: scenario.to_string(),
                field: format!("{field}[{}]", agent.id),
                message,
            })
        };
        if !(agent.length > S::zero()) || !(agent.width > S::zero()) {
            return fail("length and width must be positive".into());
        }
        if agent.track.len() < 2 {
            return fail("track needs at least 2 points".into());
        }
        for w in agent.track.windows(2) {
            if !(w[1].t > w[0].t) {
                return fail("track timestamps must be strictly increasing".into());
            }
        }
        if agent.track[0].t > S::zero() || agent.track.last().unwrap().t < S::of(DEFAULT_HORIZON) {
            return fail("track must cover the scoring horizon".into());
        }
    }
    Ok(())
}

fn validate_map<S: Real>(
    scenario: &str,
    field: &str,
    map: &MapContext<S>,
) -> Result<(), ScenarioError> {
    let fail = |sub: &str, message: String| {
        Err(ScenarioError::Invariant {
            scenario: scenario.to_string(),
            field: format!("{field}.{sub}"),
            message,
        })
    };
    for (i, poly) in map.drivable.iter().enumerate() {
        if !poly.is_simple() {
            return fail(&format!("drivable[{i}]"), "polygon must be simple".into());
        }
        if !poly.is_ccw() {
            return fail(&format!("drivable[{i}]"), "polygon must be CCW".into());
        }
    }
    for (i, lane) in map.lanes.iter().enumerate() {
        if lane.centerline.len() < 2 {
            return fail(&format!("lanes[{i}]"), "centerline needs at least 2 points".into());
        }
        if lane.direction.len() != lane.centerline.len() - 1 {
            return fail(
                &format!("lanes[{i}]"),
                "direction must have one entry per centerline segment".into(),
            );
        }
        if !(lane.half_width > S::zero()) {
            return fail(&format!("lanes[{i}]"), "half_width must be positive".into());
        }
    }
    for (i, light) in map.traffic_lights.iter().enumerate() {
        if light.state_timeline.is_empty() {
            return fail(&format!("traffic_lights[{i}]"), "empty state timeline".into());
        }
    }
    if map.route.len() < 2 {
        return fail("route", "route needs at least 2 points".into());
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario file {path}: {source}")]
    Malformed {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("scenario {scenario}: invariant violated on {field}: {message}")]
    Invariant {
        scenario: String,
        field: String,
        message: String,
    },
    #[error("duplicate scenario id {0}")]
    DuplicateId(String),
    #[error("empty trajectory")]
    EmptyTrajectory,
}

/// Load and validate a scenario file (JSON list of scenario records).
pub fn load_scenarios<S: Real>(path: &Path) -> Result<Vec<Scenario<S>>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let scenarios: Vec<Scenario<S>> =
        serde_json::from_str(&text).map_err(|source| ScenarioError::Malformed {
            path: path.display().to_string(),
            source,
        })?;
    let mut seen = std::collections::HashSet::new();
    for sc in &scenarios {
        if !seen.insert(sc.id.clone()) {
            return Err(ScenarioError::DuplicateId(sc.id.clone()));
        }
        sc.validate()?;
    }
    Ok(scenarios)
}

pub fn save_scenarios<S: Real>(path: &Path, scenarios: &[Scenario<S>]) -> Result<(), ScenarioError> {
    let text = serde_json::to_string_pretty(scenarios).expect("scenario serialization");
    std::fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Resample a trajectory at a new step: linear interpolation for position
/// and speed, shortest-arc interpolation for heading, endpoints preserved.
/// The requested step is snapped to the nearest divisor of the horizon so
/// spacing stays uniform.
pub fn resample_trajectory<S: Real>(
    traj: &Trajectory<S>,
    dt_new: S,
) -> Result<Trajectory<S>, ScenarioError> {
    if traj.samples.is_empty() {
        return Err(ScenarioError::EmptyTrajectory);
    }
    assert!(dt_new > S::zero(), "dt_new must be positive");
    if traj.samples.len() == 1 {
        let mut out = traj.clone();
        out.dt = dt_new;
        return Ok(out);
    }
    let t0 = traj.samples[0].t;
    let t_end = traj.samples.last().unwrap().t;
    let span = t_end - t0;
    let n = (span / dt_new).round().max(S::one()).as_f64() as usize;
    let dt = span / S::from_usize(n).unwrap();
    let mut samples = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = if k == n {
            t_end
        } else {
            t0 + dt * S::from_usize(k).unwrap()
        };
        samples.push(TrajectorySample {
            t,
            pose: interpolate_pose(traj, t),
            speed: interpolate_speed(traj, t),
        });
    }
    Ok(Trajectory {
        samples,
        dt,
        horizon: span,
    })
}

fn bracket<S: Real>(traj: &Trajectory<S>, t: S) -> (usize, S) {
    let samples = &traj.samples;
    if t <= samples[0].t {
        return (0, S::zero());
    }
    let last = samples.len() - 1;
    if t >= samples[last].t {
        return (last - 1, S::one());
    }
    for i in 0..last {
        if t <= samples[i + 1].t {
            let span = samples[i + 1].t - samples[i].t;
            let u = if span > S::zero() { (t - samples[i].t) / span } else { S::zero() };
            return (i, u);
        }
    }
    (last - 1, S::one())
}

fn interpolate_pose<S: Real>(traj: &Trajectory<S>, t: S) -> Pose2D<S> {
    let (i, u) = bracket(traj, t);
    let (a, b) = (&traj.samples[i], &traj.samples[i + 1]);
    Pose2D {
        x: a.pose.x + (b.pose.x - a.pose.x) * u,
        y: a.pose.y + (b.pose.y - a.pose.y) * u,
        heading: lerp_angle(a.pose.heading, b.pose.heading, u),
    }
}

fn interpolate_speed<S: Real>(traj: &Trajectory<S>, t: S) -> S {
    let (i, u) = bracket(traj, t);
    let (a, b) = (&traj.samples[i], &traj.samples[i + 1]);
    a.speed + (b.speed - a.speed) * u
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn straight_trajectory(v: f64, horizon: f64, dt: f64) -> Trajectory<f64> {
        let n = (horizon / dt).round() as usize;
        Trajectory::from_samples(
            0.0,
            dt,
            (0..=n)
                .map(|k| (Pose2D::new(v * dt * k as f64, 0.0, 0.0), v))
                .collect(),
        )
    }

    #[test]
    fn trajectory_validation_catches_bad_spacing() {
        let mut traj = straight_trajectory(5.0, 4.0, 0.1);
        assert!(traj.validate().is_ok());
        traj.samples[3].t = traj.samples[2].t; // duplicate timestamp
        assert!(traj.validate().is_err());
    }

    #[test]
    fn resample_identity_at_same_dt() {
        let traj = straight_trajectory(5.0, 4.0, 0.1);
        let re = resample_trajectory(&traj, 0.1).unwrap();
        assert_eq!(re.samples.len(), traj.samples.len());
        for (a, b) in traj.samples.iter().zip(&re.samples) {
            assert!((a.pose.x - b.pose.x).abs() < 1e-012);
            assert!((a.pose.heading - b.pose.heading).abs() < 1e-12);
            assert!((a.speed - b.speed).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_halved_dt_hits_midpoints() {
        let traj = straight_trajectory(5.0, 4.0, 0.1);
        let re = resample_trajectory(&traj, 0.05).unwrap();
        assert_eq!(re.samples.len(), 81);
        // odd samples must be chord midpoints of the original
        for k in 0..traj.samples.len() - 1 {
            let mid = &re.samples[2 * k + 1];
            let expect = (traj.samples[k].pose.x + traj.samples[k + 1].pose.x) / 2.0;
            assert!((mid.pose.x - expect).abs() < 1e-9);
            assert!(mid.pose.y.abs() < 1e-12);
        }
        // endpoints preserved
        assert_eq!(re.samples.last().unwrap().t, traj.samples.last().unwrap().t);
    }

    #[test]
    fn resample_heading_across_pi_matches_unwrap_oracle() {
        // headings sweep across the +/- pi seam
        let dt = 0.1;
        let n = 10usize;
        let samples: Vec<(Pose2D<f64>, f64)> = (0..=n)
            .map(|k| {
                let h = 3.0 + 0.06 * k as f64; // crosses pi at ~2.4 steps in
                (Pose2D::new(k as f64, 0.0, h), 1.0)
            })
            .collect();
        // oracle: unwrap the raw (pre-normalization) heading sequence, lerp, re-wrap
        let raw: Vec<f64> = (0..=n).map(|k| 3.0 + 0.06 * k as f64).collect();
        let traj = Trajectory::from_samples(0.0, dt, samples);
        let re = resample_trajectory(&traj, 0.05).unwrap();
        for s in &re.samples {
            let u = s.t / dt;
            let i = (u.floor() as usize).min(n - 1);
            let frac = u - i as f64;
            let expect = normalize_angle(raw[i] + (raw[i + 1] - raw[i]) * frac);
            assert!(
                (normalize_angle(s.pose.heading - expect)).abs() < 1e-9,
                "heading mismatch at t={}",
                s.t
            );
        }
    }

    #[test]
    fn resample_commutes_with_rigid_transform() {
        let traj = straight_trajectory(3.0, 2.0, 0.1);
        let rot = 0.7f64;
        let shift = Point2::new(4.0, -2.0);
        let transform = |tr: &Trajectory<f64>| -> Trajectory<f64> {
            let mut out = tr.clone();
            for s in &mut out.samples {
                let p = s.pose.position();
                let x = p.x * rot.cos() - p.y * rot.sin() + shift.x;
                let y = p.x * rot.sin() + p.y * rot.cos() + shift.y;
                s.pose = Pose2D::new(x, y, s.pose.heading + rot);
            }
            out
        };
        let a = transform(&resample_trajectory(&traj, 0.05).unwrap());
        let b = resample_trajectory(&transform(&traj), 0.05).unwrap();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert!((sa.pose.x - sb.pose.x).abs() < 1e-9);
            assert!((sa.pose.y - sb.pose.y).abs() < 1e-9);
            assert!(normalize_angle(sa.pose.heading - sb.pose.heading).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_trajectory_resample_fails() {
        let traj = Trajectory::<f64> {
            samples: vec![],
            dt: 0.1,
            horizon: 0.0,
        };
        assert!(matches!(
            resample_trajectory(&traj, 0.1),
            Err(ScenarioError::EmptyTrajectory)
        ));
    }

    #[test]
    fn traffic_light_state_lookup() {
        let light = TrafficLight {
            stop_line: [Point2::new(0.0, -2.0), Point2::new(0.0, 2.0)],
            state_timeline: vec![
                LightPhase { t: 0.0, state: LightState::Red },
                LightPhase { t: 3.0, state: LightState::Green },
            ],
        };
        assert_eq!(light.state_at(-1.0), LightState::Red);
        assert_eq!(light.state_at(1.2), LightState::Red);
        assert_eq!(light.state_at(3.0), LightState::Green);
        assert_eq!(light.state_at(10.0), LightState::Green);
    }

    #[test]
    fn agent_interpolation_clamps_and_lerps() {
        let agent = Agent {
            id: "a1".into(),
            length: 4.0,
            width: 2.0,
            track: vec![
                TrackPoint { t: 0.0, pose: Pose2D::new(0.0, 0.0, 0.0), speed: 2.0 },
                TrackPoint { t: 2.0, pose: Pose2D::new(4.0, 0.0, 0.0), speed: 2.0 },
            ],
        };
        let (p, v): (Pose2D<f64>, f64) = agent.state_at(1.0);
        assert!((p.x - 2.0).abs() < 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
        let (p, _) = agent.state_at(5.0);
        assert!((p.x - 4.0).abs() < 1e-12);
        let vel = agent.velocity_at(1.0);
        assert!((vel.x - 2.0).abs() < 1e-9);
    }
}
