//! Finite-horizon LQR tracking on a kinematic bicycle: linearize along the
//! candidate, run the backward Riccati recursion, roll the closed loop
//! forward with clamped controls. The output trajectory follows the
//! (clamped) bicycle model exactly, which is what makes it kinematically
//! feasible regardless of the candidate.

use crate::geometry::normalize_angle;
use crate::linalg::{
    mat2_add, mat2_inverse, mat2_mul2x4, mat2x4_mul4, mat2x4_mul4x2, mat2x4_vec, mat4_add,
    mat4_mul, mat4_sub, mat4_symmetrize, mat4_transpose, mat4x2_mul2x4, mat4x2_t_mul4, Mat2,
    Mat2x4, Mat4, Mat4x2, Vec2, Vec4,
};
use crate::num::Real;
use crate::scenario::{Pose2D, Trajectory, TrajectorySample};
use serde::{Deserialize, Serialize};

/// State vector order: (x, y, heading, speed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicycleState<S> {
    pub x: S,
    pub y: S,
    pub heading: S,
    pub speed: S,
}

impl<S: Real> BicycleState<S> {
    pub fn as_vec(&self) -> Vec4<S> {
        [self.x, self.y, self.heading, self.speed]
    }

    pub fn from_sample(sample: &TrajectorySample<S>) -> Self {
        BicycleState {
            x: sample.pose.x,
            y: sample.pose.y,
            heading: sample.pose.heading,
            speed: sample.speed,
        }
    }
}

/// Control vector order: (accel, steer).
pub type Control<S> = Vec2<S>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LqrConfig<S> {
    pub wheelbase: S,
    pub dt: S,
    /// State-error weight (4x4, symmetric PSD).
    pub q: Mat4<S>,
    /// Control-effort weight (2x2, symmetric PD).
    pub r: Mat2<S>,
    pub steer_limit: S,
    pub accel_min: S,
    pub accel_max: S,
    /// Tracking is "feasible" while the position error stays below this.
    pub max_pos_err: S,
}

impl<S: Real> Default for LqrConfig<S> {
    fn default() -> Self {
        let mut q = [[S::zero(); 4]; 4];
        q[0][0] = S::one();
        q[1][1] = S::one();
        q[2][2] = S::of(0.5);
        q[3][3] = S::of(0.5);
        let mut r = [[S::zero(); 2]; 2];
        r[0][0] = S::of(0.1);
        r[1][1] = S::of(0.1);
        LqrConfig {
            wheelbase: S::of(2.7),
            dt: S::of(crate::scenario::DEFAULT_DT),
            q,
            r,
            steer_limit: S::of(0.6),
            accel_min: S::of(-6.0),
            accel_max: S::of(4.0),
            max_pos_err: S::one(),
        }
    }
}

impl<S: Real> LqrConfig<S> {
    /// Largest curvature the steering limit admits.
    pub fn curvature_limit(&self) -> S {
        self.steer_limit.tan() / self.wheelbase
    }

    pub fn clamp_control(&self, u: Control<S>) -> Control<S> {
        [
            u[0].clamped(self.accel_min, self.accel_max),
            u[1].clamped(-self.steer_limit, self.steer_limit),
        ]
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LqrError {
    #[error("candidate dt does not match controller dt")]
    HorizonMismatch,
    #[error("numerical failure in the Riccati recursion: {0}")]
    NumericalFailure(String),
    #[error("candidate trajectory too short to track")]
    TooShort,
}

/// Euler-discretized bicycle step; speed clamps at zero (the vehicle does
/// not roll backwards under braking).
pub fn bicycle_step<S: Real>(state: &BicycleState<S>, u: Control<S>, cfg: &LqrConfig<S>) -> BicycleState<S> {
    let dt = cfg.dt;
    BicycleState {
        x: state.x + state.speed * state.heading.cos() * dt,
        y: state.y + state.speed * state.heading.sin() * dt,
        heading: normalize_angle(state.heading + state.speed / cfg.wheelbase * u[1].tan() * dt),
        speed: (state.speed + u[0] * dt).max(S::zero()),
    }
}

/// Analytic Jacobians of the Euler-discretized bicycle about a reference
/// state and control.
pub fn linearize<S: Real>(
    ref_state: &BicycleState<S>,
    ref_control: Control<S>,
    cfg: &LqrConfig<S>,
) -> (Mat4<S>, Mat4x2<S>) {
    let dt = cfg.dt;
    let (sin_h, cos_h) = (ref_state.heading.sin(), ref_state.heading.cos());
    let steer = ref_control[1];
    let mut a = crate::linalg::mat4_identity();
    a[0][2] = -ref_state.speed * sin_h * dt;
    a[0][3] = cos_h * dt;
    a[1][2] = ref_state.speed * cos_h * dt;
    a[1][3] = sin_h * dt;
    a[2][3] = steer.tan() / cfg.wheelbase * dt;
    let mut b = [[S::zero(); 2]; 4];
    b[3][0] = dt;
    let cos_steer = steer.cos();
    b[2][1] = ref_state.speed / (cfg.wheelbase * cos_steer * cos_steer) * dt;
    (a, b)
}

/// Backward Riccati recursion over a time-varying linearization:
/// `P_N = Q`, `K_t = (R + B^T P B)^-1 B^T P A`, `P_t = Q + A^T P (A - B K)`,
/// symmetrized each step.
pub fn solve_riccati<S: Real>(
    a_seq: &[Mat4<S>],
    b_seq: &[Mat4x2<S>],
    q: &Mat4<S>,
    r: &Mat2<S>,
) -> Result<Vec<Mat2x4<S>>, LqrError> {
    if a_seq.len() != b_seq.len() {
        return Err(LqrError::NumericalFailure("A/B sequence length mismatch".into()));
    }
    let n = a_seq.len();
    let mut p = *q;
    let mut gains = vec![[[S::zero(); 4]; 2]; n];
    for t in (0..n).rev() {
        let a = &a_seq[t];
        let b = &b_seq[t];
        let bt_p = mat4x2_t_mul4(b, &p); // B^T P (2x4)
        let btpb = mat2x4_mul4x2(&bt_p, b); // B^T P B (2x2)
        let lhs = mat2_add(r, &btpb);
        let lhs_inv = mat2_inverse(&lhs).ok_or_else(|| {
            LqrError::NumericalFailure(format!("singular R + B^T P B at step {t}"))
        })?;
        let btpa = mat2x4_mul4(&bt_p, a); // B^T P A (2x4)
        let k = mat2_mul2x4(&lhs_inv, &btpa);
        let bk = mat4x2_mul2x4(b, &k); // B K (4x4)
        let closed = mat4_sub(a, &bk);
        let at_p = mat4_mul(&mat4_transpose(a), &p);
        p = mat4_symmetrize(&mat4_add(q, &mat4_mul(&at_p, &closed)));
        if p.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LqrError::NumericalFailure(format!("non-finite P at step {t}")));
        }
        gains[t] = k;
    }
    Ok(gains)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackDiagnostics<S> {
    pub max_pos_err: S,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult<S> {
    pub simulated: Trajectory<S>,
    pub controls: Vec<Control<S>>,
    pub diagnostics: TrackDiagnostics<S>,
}

/// Reference controls recovered from the candidate by finite differences:
/// accel from the speed profile, steer from the chord curvature.
fn reference_controls<S: Real>(candidate: &Trajectory<S>, cfg: &LqrConfig<S>) -> Vec<Control<S>> {
    let mut out = Vec::with_capacity(candidate.samples.len() - 1);
    for w in candidate.samples.windows(2) {
        let dt = w[1].t - w[0].t;
        let accel = (w[1].speed - w[0].speed) / dt;
        let ds = w[0].pose.position().dist(w[1].pose.position());
        let steer = if ds > S::of(1e-6) {
            let kappa = normalize_angle(w[1].pose.heading - w[0].pose.heading) / ds;
            (cfg.wheelbase * kappa).atan()
        } else {
            S::zero()
        };
        out.push(cfg.clamp_control([accel, steer]));
    }
    out
}

/// Closed-loop tracking: `u_t = u_ref_t - K_t (x_t - x_ref_t)` with
/// controls clamped to the actuation limits.
pub fn track_trajectory<S: Real>(
    candidate: &Trajectory<S>,
    init: BicycleState<S>,
    cfg: &LqrConfig<S>,
) -> Result<TrackResult<S>, LqrError> {
    if candidate.samples.len() < 2 {
        return Err(LqrError::TooShort);
    }
    if (candidate.dt - cfg.dt).abs() > cfg.dt * S::of(1e-6) {
        return Err(LqrError::HorizonMismatch);
    }
    let n = candidate.samples.len() - 1;
    let refs: Vec<BicycleState<S>> = candidate.samples.iter().map(BicycleState::from_sample).collect();
    let u_ref = reference_controls(candidate, cfg);
    let mut a_seq = Vec::with_capacity(n);
    let mut b_seq = Vec::with_capacity(n);
    for t in 0..n {
        let (a, b) = linearize(&refs[t], u_ref[t], cfg);
        a_seq.push(a);
        b_seq.push(b);
    }
    let gains = solve_riccati(&a_seq, &b_seq, &cfg.q, &cfg.r)?;

    let mut state = init;
    let mut controls = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n + 1);
    let mut max_pos_err = position_error(&state, &refs[0]);
    samples.push(to_sample(candidate.samples[0].t, &state));
    for t in 0..n {
        let mut err = sub_state(&state, &refs[t]);
        err[2] = normalize_angle(err[2]);
        let feedback = mat2x4_vec(&gains[t], &err);
        let u = cfg.clamp_control([u_ref[t][0] - feedback[0], u_ref[t][1] - feedback[1]]);
        state = bicycle_step(&state, u, cfg);
        controls.push(u);
        max_pos_err = max_pos_err.max(position_error(&state, &refs[t + 1]));
        samples.push(to_sample(candidate.samples[t + 1].t, &state));
    }
    let simulated = Trajectory {
        samples,
        dt: candidate.dt,
        horizon: candidate.horizon,
    };
    let feasible = max_pos_err <= cfg.max_pos_err;
    Ok(TrackResult {
        simulated,
        controls,
        diagnostics: TrackDiagnostics { max_pos_err, feasible },
    })
}

fn sub_state<S: Real>(a: &BicycleState<S>, b: &BicycleState<S>) -> Vec4<S> {
    [a.x - b.x, a.y - b.y, a.heading - b.heading, a.speed - b.speed]
}

fn position_error<S: Real>(a: &BicycleState<S>, b: &BicycleState<S>) -> S {
    ((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)).sqrt()
}

fn to_sample<S: Real>(t: S, state: &BicycleState<S>) -> TrajectorySample<S> {
    TrajectorySample {
        t,
        pose: Pose2D::new(state.x, state.y, state.heading),
        speed: state.speed,
    }
}
