//! Procedural scenario synthesis: five hazard families, each deterministic
//! per seed, each carrying a stage-2 variant with perturbed initial speed
//! and agent offsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::str::FromStr;
use vsf_core::geometry::Point2;
use vsf_core::scenario::{
    Agent, CameraExtrinsic, CameraModel, Command, EgoState, Lane, LightPhase, LightState,
    MapContext, Pose2D, StageOverride, TrackPoint, TrafficLight, Trajectory, DEFAULT_DT,
    DEFAULT_HORIZON,
};
use vsf_core::{Polygon, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    StraightClear,
    LeadBrake,
    RedLight,
    CurveLaneKeep,
    CrossTraffic,
}

pub const ALL_KINDS: [ScenarioKind; 5] = [
    ScenarioKind::StraightClear,
    ScenarioKind::LeadBrake,
    ScenarioKind::RedLight,
    ScenarioKind::CurveLaneKeep,
    ScenarioKind::CrossTraffic,
];

impl ScenarioKind {
    pub fn slug(&self) -> &'static str {
        match self {
            ScenarioKind::StraightClear => "straight_clear",
            ScenarioKind::LeadBrake => "lead_brake",
            ScenarioKind::RedLight => "red_light",
            ScenarioKind::CurveLaneKeep => "curve_lane_keep",
            ScenarioKind::CrossTraffic => "cross_traffic",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "straight_clear" => Ok(ScenarioKind::StraightClear),
            "lead_brake" => Ok(ScenarioKind::LeadBrake),
            "red_light" => Ok(ScenarioKind::RedLight),
            "curve_lane_keep" => Ok(ScenarioKind::CurveLaneKeep),
            "cross_traffic" => Ok(ScenarioKind::CrossTraffic),
            "mixed" => Err("mixed is handled by gen_mixed_scenarios".into()),
            other => Err(format!("unknown scenario kind {other:?}")),
        }
    }
}

const TRACK_START: f64 = -1.0;
const TRACK_END: f64 = 5.0;
const TRACK_DT: f64 = 0.1;

fn default_camera() -> CameraModel<f64> {
    CameraModel {
        fx: 500.0,
        fy: 500.0,
        cx: 320.0,
        cy: 240.0,
        width: 640,
        height: 480,
        extrinsic: CameraExtrinsic { x: 0.5, y: 0.0, z: 1.6, yaw: 0.0, pitch: 0.0, roll: 0.0 },
    }
}

fn straight_history(speed: f64) -> Trajectory<f64> {
    let n = 10usize;
    Trajectory::from_samples(
        -1.0,
        DEFAULT_DT,
        (0..=n)
            .map(|k| {
                let t = -1.0 + DEFAULT_DT * k as f64;
                (Pose2D::new(speed * t, 0.0, 0.0), speed)
            })
            .collect(),
    )
}

fn straight_map(half_width: f64) -> MapContext<f64> {
    MapContext {
        drivable: vec![Polygon::new(vec![
            Point2::new(-40.0, -half_width),
            Point2::new(150.0, -half_width),
            Point2::new(150.0, half_width),
            Point2::new(-40.0, half_width),
        ])],
        lanes: vec![Lane {
            centerline: vec![Point2::new(-40.0, 0.0), Point2::new(150.0, 0.0)],
            direction: vec![0.0],
            half_width: 2.0,
        }],
        traffic_lights: vec![],
        route: vec![Point2::new(-40.0, 0.0), Point2::new(150.0, 0.0)],
    }
}

/// Constant-velocity track through `start` with the given heading.
fn linear_track(start: Point2<f64>, heading: f64, speed: f64) -> Vec<TrackPoint<f64>> {
    let dir = Point2::unit(heading);
    let steps = ((TRACK_END - TRACK_START) / TRACK_DT).round() as usize;
    (0..=steps)
        .map(|k| {
            let t = TRACK_START + TRACK_DT * k as f64;
            let p = start.add(dir.scale(speed * t));
            TrackPoint { t, pose: Pose2D::new(p.x, p.y, heading), speed }
        })
        .collect()
}

/// Lead-vehicle track: cruise at `v0`, brake at `rate` from `t_brake`
/// until stopped.
fn braking_track(start_x: f64, v0: f64, t_brake: f64, rate: f64) -> Vec<TrackPoint<f64>> {
    let steps = ((TRACK_END - TRACK_START) / TRACK_DT).round() as usize;
    (0..=steps)
        .map(|k| {
            let t = TRACK_START + TRACK_DT * k as f64;
            let (x, v) = if t <= t_brake {
                (start_x + v0 * t, v0)
            } else {
                let dt = t - t_brake;
                let t_stop = v0 / rate;
                if dt < t_stop {
                    (start_x + v0 * t_brake + v0 * dt - 0.5 * rate * dt * dt, v0 - rate * dt)
                } else {
                    (start_x + v0 * t_brake + 0.5 * v0 * v0 / rate, 0.0)
                }
            };
            TrackPoint { t, pose: Pose2D::new(x, 0.0, 0.0), speed: v }
        })
        .collect()
}

fn curve_map(kappa: f64, half_width: f64) -> MapContext<f64> {
    // constant-curvature arc through the origin, tangent to +x; positive
    // offsets sit on the left of the travel direction
    let arc_point = |s: f64, offset: f64| {
        let theta = kappa * s;
        let x = theta.sin() / kappa;
        let y = (1.0 - theta.cos()) / kappa;
        Point2::new(x - offset * theta.sin(), y + offset * theta.cos())
    };
    let n = 40usize;
    let length = 90.0f64.min(std::f64::consts::FRAC_PI_2 / kappa.abs());
    let pre = Point2::new(-30.0, 0.0);
    let mut centerline = vec![pre];
    let mut left = vec![Point2::new(-30.0, half_width)];
    let mut right = vec![Point2::new(-30.0, -half_width)];
    for k in 0..=n {
        let s = length * k as f64 / n as f64;
        centerline.push(arc_point(s, 0.0));
        left.push(arc_point(s, half_width));
        right.push(arc_point(s, -half_width));
    }
    let mut ring = right;
    ring.extend(left.into_iter().rev());
    let mut poly = Polygon::new(ring);
    if !poly.is_ccw() {
        poly.vertices.reverse();
    }
    let direction: Vec<f64> = centerline
        .windows(2)
        .map(|w| {
            let d = w[1].sub(w[0]);
            d.y.atan2(d.x)
        })
        .collect();
    MapContext {
        drivable: vec![poly],
        lanes: vec![Lane { centerline: centerline.clone(), direction, half_width: 2.0 }],
        traffic_lights: vec![],
        route: centerline,
    }
}

/// Deterministic scenario batch; every scenario carries a stage-2 variant
/// with the initial speed perturbed by up to 20% and agents offset.
pub fn gen_scenarios(kind: ScenarioKind, count: usize, rng_seed: u64) -> Vec<Scenario> {
    assert!(count >= 1, "count must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..count).map(|index| gen_one(kind, index, rng_seed, &mut rng)).collect()
}

/// Round-robin over all five kinds.
pub fn gen_mixed_scenarios(count: usize, rng_seed: u64) -> Vec<Scenario> {
    assert!(count >= 1, "count must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..count)
        .map(|index| gen_one(ALL_KINDS[index % ALL_KINDS.len()], index, rng_seed, &mut rng))
        .collect()
}

fn gen_one(kind: ScenarioKind, index: usize, rng_seed: u64, rng: &mut ChaCha8Rng) -> Scenario {
    let id = format!("{}-{rng_seed:08x}-{index:04}", kind.slug());
    let mut command = Command::Forward;
    let (speed, map, agents) = match kind {
        ScenarioKind::StraightClear => {
            let speed = rng.gen_range(6.0..12.0);
            (speed, straight_map(6.0), vec![])
        }
        ScenarioKind::LeadBrake => {
            let speed = rng.gen_range(6.0..11.0);
            let gap = rng.gen_range(14.0..24.0);
            let t_brake = rng.gen_range(0.2..1.0);
            let rate = rng.gen_range(3.0..5.0);
            let lead = Agent {
                id: "lead".to_string(),
                length: 4.6,
                width: 1.9,
                track: braking_track(gap, speed, t_brake, rate),
            };
            (speed, straight_map(6.0), vec![lead])
        }
        ScenarioKind::RedLight => {
            let speed = rng.gen_range(5.0..10.0);
            let line_x = rng.gen_range(14.0..28.0);
            let mut map = straight_map(6.0);
            map.traffic_lights.push(TrafficLight {
                stop_line: [Point2::new(line_x, -6.0), Point2::new(line_x, 6.0)],
                state_timeline: vec![
                    LightPhase { t: -10.0, state: LightState::Red },
                    LightPhase { t: DEFAULT_HORIZON + 2.0, state: LightState::Green },
                ],
            });
            (speed, map, vec![])
        }
        ScenarioKind::CurveLaneKeep => {
            let speed = rng.gen_range(5.0..9.0);
            let magnitude = rng.gen_range(0.02..0.05);
            let kappa = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
            command = if kappa > 0.0 { Command::Left } else { Command::Right };
            (speed, curve_map(kappa, 6.0), vec![])
        }
        ScenarioKind::CrossTraffic => {
            let speed = rng.gen_range(5.0..10.0);
            let cross_x = rng.gen_range(16.0..26.0);
            let from_left = rng.gen_bool(0.5);
            let cross_speed = rng.gen_range(6.0..10.0);
            // time the crosser to reach the ego lane inside the horizon
            let t_reach = rng.gen_range(1.5..3.5);
            let start_offset = cross_speed * t_reach;
            let (start_y, heading) = if from_left {
                (start_offset, -std::f64::consts::FRAC_PI_2)
            } else {
                (-start_offset, std::f64::consts::FRAC_PI_2)
            };
            let crosser = Agent {
                id: "crosser".to_string(),
                length: 4.4,
                width: 1.8,
                track: linear_track(Point2::new(cross_x, start_y), heading, cross_speed),
            };
            (speed, straight_map(6.0), vec![crosser])
        }
    };

    let ego = EgoState {
        pose: Pose2D::new(0.0, 0.0, 0.0),
        speed,
        accel: 0.0,
        command,
    };

    // stage-2 variant: same scene, nudged initial speed and agent offsets
    let speed_factor = 1.0 + rng.gen_range(-0.2..0.2);
    let stage2_agents: Vec<Agent<f64>> = agents
        .iter()
        .map(|agent| {
            let dx = rng.gen_range(-2.0..2.0);
            let dy = rng.gen_range(-0.4..0.4);
            Agent {
                id: agent.id.clone(),
                length: agent.length,
                width: agent.width,
                track: agent
                    .track
                    .iter()
                    .map(|p| TrackPoint {
                        t: p.t,
                        pose: Pose2D::new(p.pose.x + dx, p.pose.y + dy, p.pose.heading),
                        speed: p.speed,
                    })
                    .collect(),
            }
        })
        .collect();
    let stage2 = StageOverride {
        ego: EgoState { speed: speed * speed_factor, ..ego },
        agents: stage2_agents,
        map: map.clone(),
    };

    Scenario {
        id,
        ego,
        ego_history: straight_history(speed),
        agents,
        map,
        camera: default_camera(),
        stage2: Some(stage2),
    }
}
