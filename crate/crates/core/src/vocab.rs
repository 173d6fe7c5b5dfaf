//! Candidate generation: a dense kinematic vocabulary over a curvature x
//! acceleration grid (optionally two-phase for lane-change-like profiles)
//! plus seeded perturbation anchors that diversify around seed trajectories.

use crate::geometry::{normalize_angle, Point2};
use crate::num::Real;
use crate::scenario::{EgoState, Pose2D, Trajectory, TrajectorySample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Hard cap on grid curvatures (1/m).
pub const DEFAULT_KAPPA_MAX: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondPhase<S> {
    pub switch_time: S,
    pub curvature_grid: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyParams<S> {
    pub curvature_grid: Vec<S>,
    pub accel_grid: Vec<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_phase: Option<SecondPhase<S>>,
    pub v_max: S,
    pub horizon: S,
    pub dt: S,
    pub kappa_max: S,
}

impl<S: Real> VocabularyParams<S> {
    pub fn validate(&self) -> Result<(), VocabError> {
        if self.curvature_grid.is_empty() || self.accel_grid.is_empty() {
            return Err(VocabError::InvalidParams("empty grid".into()));
        }
        if !(self.dt > S::zero()) || !(self.horizon > S::zero()) {
            return Err(VocabError::InvalidParams("dt and horizon must be positive".into()));
        }
        if !(self.v_max > S::zero()) {
            return Err(VocabError::InvalidParams("v_max must be positive".into()));
        }
        let over = self
            .curvature_grid
            .iter()
            .chain(self.second_phase.iter().flat_map(|p| p.curvature_grid.iter()))
            .any(|k| k.abs() > self.kappa_max);
        if over {
            return Err(VocabError::InvalidParams(format!(
                "curvature grid exceeds kappa_max {}",
                self.kappa_max
            )));
        }
        if let Some(phase) = &self.second_phase {
            if phase.curvature_grid.is_empty() {
                return Err(VocabError::InvalidParams("empty second-phase grid".into()));
            }
            if phase.switch_time < S::zero() || phase.switch_time > self.horizon {
                return Err(VocabError::InvalidParams(
                    "switch_time must lie within [0, horizon]".into(),
                ));
            }
        }
        Ok(())
    }

    /// Number of trajectories the grid will produce.
    pub fn cardinality(&self) -> usize {
        let second = self.second_phase.as_ref().map_or(1, |p| p.curvature_grid.len());
        self.curvature_grid.len() * self.accel_grid.len() * second
    }
}

impl Default for VocabularyParams<f64> {
    fn default() -> Self {
        let n_kappa = 25;
        let curvature_grid = (0..n_kappa)
            .map(|i| -0.12 + 0.24 * i as f64 / (n_kappa - 1) as f64)
            .collect();
        VocabularyParams {
            curvature_grid,
            accel_grid: vec![-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0],
            second_phase: Some(SecondPhase {
                switch_time: 2.0,
                curvature_grid: vec![-0.08, -0.04, 0.0, 0.04, 0.08],
            }),
            v_max: 18.0,
            horizon: crate::scenario::DEFAULT_HORIZON,
            dt: crate::scenario::DEFAULT_DT,
            kappa_max: DEFAULT_KAPPA_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorParams<S> {
    pub seed_count: usize,
    pub noise_scale_lon: S,
    pub noise_scale_lat: S,
    pub rng_seed: u64,
}

impl<S: Real> AnchorParams<S> {
    pub fn validate(&self) -> Result<(), VocabError> {
        if self.seed_count < 1 {
            return Err(VocabError::InvalidParams("seed_count must be >= 1".into()));
        }
        if self.noise_scale_lon < S::zero() || self.noise_scale_lat < S::zero() {
            return Err(VocabError::InvalidParams("noise scales must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("anchor generation needs at least one seed trajectory")]
    NoSeeds,
}

/// Integrate one unicycle profile from the ego pose. Speed follows the
/// clipped ramp `v(t) = clip(v0 + a t, 0, v_max)` sampled at step midpoints;
/// each step advances along an exact constant-curvature arc, so constant-
/// rate profiles reproduce the closed-form circular solution.
fn integrate_profile<S: Real>(
    ego: &EgoState<S>,
    accel: S,
    kappa1: S,
    kappa2: S,
    switch_time: S,
    params: &VocabularyParams<S>,
) -> Trajectory<S> {
    let steps = (params.horizon / params.dt).round().as_f64() as usize;
    let dt = params.dt;
    let half = S::of(0.5);
    let speed_at = |t: S| (ego.speed + accel * t).clamped(S::zero(), params.v_max);
    let mut pos = ego.pose.position();
    let mut heading = ego.pose.heading;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push((Pose2D::new(pos.x, pos.y, heading), speed_at(S::zero())));
    for k in 0..steps {
        let t = dt * S::from_usize(k).unwrap();
        let kappa = if t + dt * half < switch_time { kappa1 } else { kappa2 };
        let v_mid = speed_at(t + dt * half);
        let dth = kappa * v_mid * dt;
        let chord = if dth.abs() < S::of(1e-9) {
            v_mid * dt
        } else {
            v_mid * dt * (dth * half).sin() / (dth * half)
        };
        let dir = heading + dth * half;
        pos = pos.add(Point2::unit(dir).scale(chord));
        heading = normalize_angle(heading + dth);
        samples.push((Pose2D::new(pos.x, pos.y, heading), speed_at(t + dt)));
    }
    Trajectory::from_samples(S::zero(), dt, samples)
}

/// One trajectory per grid combination, in grid order
/// (curvature, accel, second-phase curvature).
pub fn generate_vocabulary<S: Real>(
    ego: &EgoState<S>,
    params: &VocabularyParams<S>,
) -> Result<Vec<Trajectory<S>>, VocabError> {
    params.validate()?;
    let (switch_time, second_grid) = match &params.second_phase {
        Some(p) => (p.switch_time, p.curvature_grid.clone()),
        None => (params.horizon + S::one(), vec![S::zero()]),
    };
    let mut out = Vec::with_capacity(params.cardinality());
    for &kappa in &params.curvature_grid {
        for &accel in &params.accel_grid {
            for &kappa2 in &second_grid {
                let k2 = if params.second_phase.is_some() { kappa2 } else { kappa };
                out.push(integrate_profile(ego, accel, kappa, k2, switch_time, params));
            }
        }
    }
    Ok(out)
}

/// Smooth monotone ramp: 0 at the start of the horizon, 1 at the end,
/// zero slope at both ends.
fn ramp<S: Real>(u: S) -> S {
    let u = u.clamp01();
    u * u * (S::of(3.0) - S::of(2.0) * u)
}

/// Perturbation anchors: per seed, `seed_count` copies with smooth
/// endpoint offsets blended in along the ramp. Headings are kept from the
/// seed; speeds are rescaled by the local chord-length ratio so zero
/// offsets reproduce the seed exactly. Offsets that would push a step's
/// curvature past `kappa_max` are halved until the profile complies.
pub fn generate_anchors<S: Real>(
    ego: &EgoState<S>,
    seeds: &[Trajectory<S>],
    params: &AnchorParams<S>,
) -> Result<Vec<Trajectory<S>>, VocabError> {
    params.validate()?;
    if seeds.is_empty() {
        return Err(VocabError::NoSeeds);
    }
    let _ = ego;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut out = Vec::with_capacity(seeds.len() * params.seed_count);
    for seed in seeds {
        for _ in 0..params.seed_count {
            let g_lon: f64 = StandardNormal.sample(&mut rng);
            let g_lat: f64 = StandardNormal.sample(&mut rng);
            let d_lon = params.noise_scale_lon * S::of(g_lon);
            let d_lat = params.noise_scale_lat * S::of(g_lat);
            out.push(perturb_seed(seed, d_lon, d_lat));
        }
    }
    Ok(out)
}

fn perturb_seed<S: Real>(seed: &Trajectory<S>, d_lon: S, d_lat: S) -> Trajectory<S> {
    let kappa_limit = seed
        .max_abs_curvature(S::of(1e-6))
        .max(S::of(DEFAULT_KAPPA_MAX));
    let mut scale = S::one();
    for _ in 0..20 {
        let candidate = apply_offset(seed, d_lon * scale, d_lat * scale);
        if candidate.max_abs_curvature(S::of(1e-6)) <= kappa_limit + S::of(1e-6) {
            return candidate;
        }
        scale *= S::of(0.5);
    }
    seed.clone()
}

fn apply_offset<S: Real>(seed: &Trajectory<S>, d_lon: S, d_lat: S) -> Trajectory<S> {
    let span = seed.horizon.max(S::of(1e-9));
    let t0 = seed.samples[0].t;
    let positions: Vec<Point2<S>> = seed
        .samples
        .iter()
        .map(|s| {
            let u = (s.t - t0) / span;
            let fwd = Point2::unit(s.pose.heading);
            let left = fwd.perp();
            s.pose
                .position()
                .add(fwd.scale(d_lon * ramp(u)))
                .add(left.scale(d_lat * ramp(u)))
        })
        .collect();
    let n = seed.samples.len();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        // speed scaled by the chord-length ratio of the step ahead
        let speed = if n >= 2 {
            let j = i.min(n - 2);
            let old = seed.samples[j].pose.position().dist(seed.samples[j + 1].pose.position());
            let new = positions[j].dist(positions[j + 1]);
            if old > S::of(1e-9) {
                (seed.samples[i].speed * (new / old)).max(S::zero())
            } else {
                new / seed.dt
            }
        } else {
            seed.samples[i].speed
        };
        samples.push(TrajectorySample {
            t: seed.samples[i].t,
            pose: Pose2D {
                x: positions[i].x,
                y: positions[i].y,
                heading: seed.samples[i].pose.heading,
            },
            speed,
        });
    }
    Trajectory {
        samples,
        dt: seed.dt,
        horizon: seed.horizon,
    }
}
