//! Cognitive directives: the (longitudinal, lateral) instruction taxonomy,
//! its embedding table, a rule-based provider, and reply parsing.

use crate::num::Real;
use crate::scenario::{Command, EgoState, LightState, Stage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Longitudinal {
    Keep,
    Accelerate,
    Decelerate,
    Stop,
}

pub const ALL_LONGITUDINAL: [Longitudinal; 4] = [
    Longitudinal::Keep,
    Longitudinal::Accelerate,
    Longitudinal::Decelerate,
    Longitudinal::Stop,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lateral {
    Forward,
    Left,
    Right,
}

pub const ALL_LATERAL: [Lateral; 3] = [Lateral::Forward, Lateral::Left, Lateral::Right];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CognitiveDirective {
    pub longitudinal: Longitudinal,
    pub lateral: Lateral,
}

impl CognitiveDirective {
    pub const COUNT: usize = 12;

    pub fn new(longitudinal: Longitudinal, lateral: Lateral) -> Self {
        Self { longitudinal, lateral }
    }

    /// Row index in the embedding table: lexicographic by
    /// (longitudinal, lateral) in declaration order.
    pub fn index(&self) -> usize {
        let lon = match self.longitudinal {
            Longitudinal::Keep => 0,
            Longitudinal::Accelerate => 1,
            Longitudinal::Decelerate => 2,
            Longitudinal::Stop => 3,
        };
        let lat = match self.lateral {
            Lateral::Forward => 0,
            Lateral::Left => 1,
            Lateral::Right => 2,
        };
        lon * 3 + lat
    }

    pub fn all() -> impl Iterator<Item = CognitiveDirective> {
        ALL_LONGITUDINAL
            .into_iter()
            .flat_map(|lon| ALL_LATERAL.into_iter().map(move |lat| Self::new(lon, lat)))
    }
}

impl fmt::Display for Longitudinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl fmt::Display for Lateral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl fmt::Display for CognitiveDirective {
    /// Canonical wire form, e.g. "Accelerate, Right".
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}", self.longitudinal, self.lateral)
    }
}

/// 12 x d embedding table; rows are orthonormal by construction
/// (Gram-Schmidt on a seeded Gaussian matrix), which keeps them pairwise
/// distinct and unit-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectiveEmbedding<S> {
    pub dim: usize,
    pub table: Vec<Vec<S>>,
}

pub const DEFAULT_EMBEDDING_DIM: usize = 16;

impl<S: Real> DirectiveEmbedding<S> {
    pub fn seeded(dim: usize, seed: u64) -> Self {
        assert!(dim >= CognitiveDirective::COUNT, "dim must be >= 12 for orthonormal rows");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table: Vec<Vec<S>> = (0..CognitiveDirective::COUNT)
            .map(|_| {
                (0..dim)
                    .map(|_| S::of(StandardNormal.sample(&mut rng)))
                    .collect()
            })
            .collect();
        // Gram-Schmidt
        for i in 0..table.len() {
            for j in 0..i {
                let dot: S = table[i].iter().zip(&table[j]).map(|(a, b)| *a * *b).sum();
                for k in 0..dim {
                    let v = table[j][k];
                    table[i][k] -= dot * v;
                }
            }
            let norm: S = table[i].iter().map(|v| *v * *v).sum::<S>().sqrt();
            assert!(norm > S::of(1e-9), "degenerate Gaussian draw");
            for v in table[i].iter_mut() {
                *v /= norm;
            }
        }
        DirectiveEmbedding { dim, table }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.table.len() != CognitiveDirective::COUNT {
            return Err(format!("embedding table has {} rows, expected 12", self.table.len()));
        }
        for (i, row) in self.table.iter().enumerate() {
            if row.len() != self.dim {
                return Err(format!("row {i} has length {}, expected {}", row.len(), self.dim));
            }
            for (j, other) in self.table.iter().enumerate().skip(i + 1) {
                if row == other {
                    return Err(format!("rows {i} and {j} are identical"));
                }
            }
        }
        Ok(())
    }
}

/// Look up the embedding row for a directive.
pub fn encode_directive<S: Real>(
    dir: CognitiveDirective,
    table: &DirectiveEmbedding<S>,
) -> Vec<S> {
    table.table[dir.index()].clone()
}

/// Thresholds for the rule-based provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectiveRuleConfig<S> {
    /// Comfortable braking rate used for the stopping-distance envelope.
    pub brake_decel: S,
    /// Standoff margin added to the stopping distance (m).
    pub margin: S,
    pub speed_limit: S,
    /// Half-width of the forward corridor when testing for blockers (m).
    pub corridor_half_width: S,
}

impl<S: Real> Default for DirectiveRuleConfig<S> {
    fn default() -> Self {
        DirectiveRuleConfig {
            brake_decel: S::of(3.0),
            margin: S::of(2.0),
            speed_limit: S::of(15.0),
            corridor_half_width: S::of(2.0),
        }
    }
}

/// Distance ahead of the ego along its heading, or negative when behind.
fn ahead_distance<S: Real>(ego: &EgoState<S>, p: crate::geometry::Point2<S>) -> (S, S) {
    let fwd = crate::geometry::Point2::unit(ego.pose.heading);
    let rel = p.sub(ego.pose.position());
    (rel.dot(fwd), rel.cross(fwd).abs())
}

/// Deterministic stand-in for a directive-producing VLM: lateral follows
/// the navigation command; longitudinal picks Stop / Decelerate /
/// Accelerate / Keep from the stopping-distance envelope.
pub fn rule_based_directive<S: Real>(
    ego: &EgoState<S>,
    stage: &Stage<'_, S>,
    cfg: &DirectiveRuleConfig<S>,
) -> CognitiveDirective {
    let lateral = match ego.command {
        Command::Left => Lateral::Left,
        Command::Forward => Lateral::Forward,
        Command::Right => Lateral::Right,
    };
    let stopping = ego.speed * ego.speed / (S::of(2.0) * cfg.brake_decel) + cfg.margin;

    let mut nearest_hazard = S::infinity();
    for light in stage.map.traffic_lights.iter() {
        if light.state_at(S::zero()) != LightState::Red {
            continue;
        }
        let mid = light.stop_line[0].add(light.stop_line[1]).scale(S::of(0.5));
        let (dist, _) = ahead_distance(ego, mid);
        if dist > S::zero() {
            nearest_hazard = nearest_hazard.min(dist);
        }
    }
    for agent in stage.agents {
        let (pose, _) = agent.state_at(S::zero());
        let (dist, lateral_off) = ahead_distance(ego, pose.position());
        if dist > S::zero() && lateral_off <= cfg.corridor_half_width {
            nearest_hazard = nearest_hazard.min(dist);
        }
    }

    let longitudinal = if nearest_hazard <= stopping {
        Longitudinal::Stop
    } else if nearest_hazard <= stopping * S::of(2.0) {
        Longitudinal::Decelerate
    } else if ego.speed < S::of(0.8) * cfg.speed_limit {
        Longitudinal::Accelerate
    } else {
        Longitudinal::Keep
    };
    CognitiveDirective::new(longitudinal, lateral)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unrecognized directive reply: {0:?}")]
pub struct UnrecognizedDirective(pub String);

fn directive_regex() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| {
        regex::Regex::new(
            r"(?i)\b(keep|accelerate|decelerate|stop)\b\s*,\s*\b(forward|left|right)\b",
        )
        .expect("directive regex")
    })
}

/// Case-insensitive "<longitudinal>, <lateral>" match anywhere in the
/// text; the first match wins.
pub fn parse_directive_reply(text: &str) -> Result<CognitiveDirective, UnrecognizedDirective> {
    let caps = directive_regex()
        .captures(text)
        .ok_or_else(|| UnrecognizedDirective(text.to_string()))?;
    let longitudinal = match caps[1].to_ascii_lowercase().as_str() {
        "keep" => Longitudinal::Keep,
        "accelerate" => Longitudinal::Accelerate,
        "decelerate" => Longitudinal::Decelerate,
        _ => Longitudinal::Stop,
    };
    let lateral = match caps[2].to_ascii_lowercase().as_str() {
        "forward" => Lateral::Forward,
        "left" => Lateral::Left,
        _ => Lateral::Right,
    };
    Ok(CognitiveDirective::new(longitudinal, lateral))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Polygon};
    use crate::scenario::{
        Agent, EgoState, Lane, LightPhase, MapContext, Pose2D, TrackPoint, TrafficLight,
        Trajectory,
    };

    fn base_stage() -> (EgoState<f64>, Trajectory<f64>, MapContext<f64>) {
        let ego = EgoState {
            pose: Pose2D::new(0.0, 0.0, 0.0),
            speed: 10.0,
            accel: 0.0,
            command: Command::Forward,
        };
        let history = Trajectory::from_samples(
            -1.0,
            0.1,
            (0..=10).map(|k| (Pose2D::new(-10.0 + k as f64, 0.0, 0.0), 10.0)).collect(),
        );
        let map = MapContext {
            drivable: vec![Polygon::new(vec![
                Point2::new(-20.0, -5.0),
                Point2::new(100.0, -5.0),
                Point2::new(100.0, 5.0),
                Point2::new(-20.0, 5.0),
            ])],
            lanes: vec![Lane {
                centerline: vec![Point2::new(-20.0, 0.0), Point2::new(100.0, 0.0)],
                direction: vec![0.0],
                half_width: 2.0,
            }],
            traffic_lights: vec![],
            route: vec![Point2::new(-20.0, 0.0), Point2::new(100.0, 0.0)],
        };
        (ego, history, map)
    }

    #[test]
    fn twelve_distinct_unit_rows() {
        let table = DirectiveEmbedding::<f64>::seeded(DEFAULT_EMBEDDING_DIM, 99);
        table.validate().unwrap();
        let mut seen = Vec::new();
        for dir in CognitiveDirective::all() {
            let v = encode_directive(dir, &table);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
            assert!(!seen.contains(&v));
            seen.push(v);
        }
        assert_eq!(seen.len(), 12);
    }

    #[test]
    fn encoding_is_deterministic() {
        let table = DirectiveEmbedding::<f64>::seeded(16, 7);
        let dir = CognitiveDirective::new(Longitudinal::Accelerate, Lateral::Right);
        assert_eq!(encode_directive(dir, &table), encode_directive(dir, &table));
        let other = CognitiveDirective::new(Longitudinal::Keep, Lateral::Forward);
        assert_ne!(encode_directive(dir, &table), encode_directive(other, &table));
    }

    #[test]
    fn directive_indices_cover_0_to_11() {
        let mut seen: Vec<usize> = CognitiveDirective::all().map(|d| d.index()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn rule_stop_on_red_light() {
        let (ego, history, mut map) = base_stage();
        map.traffic_lights.push(TrafficLight {
            stop_line: [Point2::new(5.0, -3.0), Point2::new(5.0, 3.0)],
            state_timeline: vec![LightPhase { t: 0.0, state: LightState::Red }],
        });
        let stage = Stage { ego: &ego, ego_history: &history, agents: &[], map: &map };
        // stopping distance 10^2/6 + 2 = 18.67 m > 5 m
        let dir = rule_based_directive(&ego, &stage, &DirectiveRuleConfig::default());
        assert_eq!(dir, CognitiveDirective::new(Longitudinal::Stop, Lateral::Forward));
    }

    #[test]
    fn rule_accelerate_when_clear_and_slow() {
        let (mut ego, history, map) = base_stage();
        ego.speed = 5.0;
        let stage = Stage { ego: &ego, ego_history: &history, agents: &[], map: &map };
        let dir = rule_based_directive(&ego, &stage, &DirectiveRuleConfig::default());
        assert_eq!(dir, CognitiveDirective::new(Longitudinal::Accelerate, Lateral::Forward));
    }

    #[test]
    fn rule_keep_at_speed_limit_with_left_command() {
        let (mut ego, history, map) = base_stage();
        ego.speed = 15.0;
        ego.command = Command::Left;
        let stage = Stage { ego: &ego, ego_history: &history, agents: &[], map: &map };
        let dir = rule_based_directive(&ego, &stage, &DirectiveRuleConfig::default());
        assert_eq!(dir, CognitiveDirective::new(Longitudinal::Keep, Lateral::Left));
    }

    #[test]
    fn rule_decelerate_within_double_envelope() {
        let (ego, history, map) = base_stage();
        let agent = Agent {
            id: "blocker".into(),
            length: 4.0,
            width: 2.0,
            track: vec![
                TrackPoint { t: -1.0, pose: Pose2D::new(25.0, 0.0, 0.0), speed: 0.0 },
                TrackPoint { t: 10.0, pose: Pose2D::new(25.0, 0.0, 0.0), speed: 0.0 },
            ],
        };
        let agents = [agent];
        let stage = Stage { ego: &ego, ego_history: &history, agents: &agents, map: &map };
        // stopping envelope 18.67, blocker at 25 m: inside 2x envelope
        let dir = rule_based_directive(&ego, &stage, &DirectiveRuleConfig::default());
        assert_eq!(dir.longitudinal, Longitudinal::Decelerate);
    }

    #[test]
    fn parse_examples_from_contract() {
        assert_eq!(
            parse_directive_reply("Accelerate, Right").unwrap(),
            CognitiveDirective::new(Longitudinal::Accelerate, Lateral::Right)
        );
        assert_eq!(
            parse_directive_reply("directive: keep, forward.").unwrap(),
            CognitiveDirective::new(Longitudinal::Keep, Lateral::Forward)
        );
        assert!(parse_directive_reply("go faster").is_err());
    }

    #[test]
    fn parse_format_identity_on_all_12() {
        for dir in CognitiveDirective::all() {
            assert_eq!(parse_directive_reply(&dir.to_string()).unwrap(), dir);
            // and in the wire form
            assert_eq!(parse_directive_reply(&format!("DIRECTIVE: {dir}")).unwrap(), dir);
        }
    }
}
