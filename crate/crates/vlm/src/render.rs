//! Synthetic front-view rendering: pinhole projection of the flat-ground
//! scene (drivable area, lane lines, stop lines, agent boxes) with the
//! simulated candidates overlaid as labeled colored polylines.
//!
//! Axis conventions: the ego frame is x forward / y left / z up; the
//! camera frame is X right / Y down / Z forward, so with an identity
//! extrinsic rotation `X = -y_rel`, `Y = -z_rel`, `Z = x_rel`.

use crate::raster::{Image, Rgb, PALETTE};
use vsf_core::scenario::Stage;
use vsf_core::{CameraModel, Trajectory};

/// Points closer than this to the image plane are not drawn (meters).
pub const NEAR_PLANE: f64 = 0.1;
/// Segments and polygons are clipped slightly in front of the near plane.
const CLIP_PLANE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub line_width: u32,
    pub label_scale: u32,
    pub colors: Vec<Rgb>,
    /// Height of the rendered agent boxes (m).
    pub agent_height: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            line_width: 2,
            label_scale: 2,
            colors: PALETTE.to_vec(),
            agent_height: 1.6,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("no candidate projects into the camera frustum")]
    NoVisiblePoints,
    #[error("render_overlay needs at least one candidate")]
    NoCandidates,
}

/// Ego-frame point to camera-frame coordinates (X right, Y down, Z forward).
fn to_camera(p: [f64; 3], cam: &CameraModel) -> [f64; 3] {
    let e = &cam.extrinsic;
    let (sy, cy) = e.yaw.sin_cos();
    let (sp, cp) = e.pitch.sin_cos();
    let (sr, cr) = e.roll.sin_cos();
    // R = Rz(yaw) Ry(pitch) Rx(roll); rows of R^T give the inverse rotation
    let r = [
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ];
    let d = [p[0] - e.x, p[1] - e.y, p[2] - e.z];
    let rel = [
        r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
        r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
        r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
    ];
    [-rel[1], -rel[2], rel[0]]
}

fn pinhole(c: [f64; 3], cam: &CameraModel) -> (f64, f64) {
    (
        cam.fx * c[0] / c[2] + cam.cx,
        cam.fy * c[1] / c[2] + cam.cy,
    )
}

/// Project an ego-frame point; `None` behind the near plane or outside the
/// image bounds.
pub fn project_point(p: [f64; 3], cam: &CameraModel) -> Option<(f64, f64)> {
    let c = to_camera(p, cam);
    if c[2] <= NEAR_PLANE {
        return None;
    }
    let (u, v) = pinhole(c, cam);
    if u < 0.0 || u > cam.width as f64 || v < 0.0 || v > cam.height as f64 {
        return None;
    }
    Some((u, v))
}

/// Project a world segment, clipping against the near plane; endpoints may
/// land outside the image (the raster clips).
fn project_segment(a: [f64; 3], b: [f64; 3], cam: &CameraModel) -> Option<((f64, f64), (f64, f64))> {
    let mut ca = to_camera(a, cam);
    let mut cb = to_camera(b, cam);
    if ca[2] <= CLIP_PLANE && cb[2] <= CLIP_PLANE {
        return None;
    }
    if ca[2] <= CLIP_PLANE || cb[2] <= CLIP_PLANE {
        let t = (CLIP_PLANE - ca[2]) / (cb[2] - ca[2]);
        let cut = [
            ca[0] + t * (cb[0] - ca[0]),
            ca[1] + t * (cb[1] - ca[1]),
            CLIP_PLANE,
        ];
        if ca[2] <= CLIP_PLANE {
            ca = cut;
        } else {
            cb = cut;
        }
    }
    Some((pinhole(ca, cam), pinhole(cb, cam)))
}

/// Clip a camera-space polygon against Z >= CLIP_PLANE (Sutherland-Hodgman).
fn clip_polygon_near(points: Vec<[f64; 3]>) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(points.len() + 2);
    for i in 0..points.len() {
        let cur = points[i];
        let next = points[(i + 1) % points.len()];
        let cur_in = cur[2] >= CLIP_PLANE;
        let next_in = next[2] >= CLIP_PLANE;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            let t = (CLIP_PLANE - cur[2]) / (next[2] - cur[2]);
            out.push([
                cur[0] + t * (next[0] - cur[0]),
                cur[1] + t * (next[1] - cur[1]),
                CLIP_PLANE,
            ]);
        }
    }
    out
}

fn fill_ground_polygon(img: &mut Image, ring: &[[f64; 2]], cam: &CameraModel, color: Rgb) {
    let camera_ring: Vec<[f64; 3]> = ring.iter().map(|p| to_camera([p[0], p[1], 0.0], cam)).collect();
    let clipped = clip_polygon_near(camera_ring);
    if clipped.len() < 3 {
        return;
    }
    let projected: Vec<(f64, f64)> = clipped.iter().map(|&c| pinhole(c, cam)).collect();
    img.fill_polygon(&projected, color);
}

fn draw_world_polyline(
    img: &mut Image,
    points: &[[f64; 3]],
    cam: &CameraModel,
    width: u32,
    color: Rgb,
) {
    for w in points.windows(2) {
        if let Some((a, b)) = project_segment(w[0], w[1], cam) {
            img.draw_line(a, b, width, color);
        }
    }
}

const SKY: Rgb = [171, 205, 239];
const GROUND: Rgb = [96, 96, 96];
const DRIVABLE: Rgb = [60, 60, 66];
const LANE_LINE: Rgb = [222, 222, 222];
const STOP_LINE_RED: Rgb = [229, 30, 30];
const STOP_LINE_OTHER: Rgb = [160, 160, 30];
const AGENT: Rgb = [255, 255, 255];

/// Render the stage scene with the labeled candidates overlaid.
/// Deterministic byte-for-byte for fixed inputs.
pub fn render_overlay(
    stage: &Stage<'_, f64>,
    cam: &CameraModel,
    candidates: &[(char, &Trajectory)],
    cfg: &RenderConfig,
) -> Result<Image, RenderError> {
    if candidates.is_empty() {
        return Err(RenderError::NoCandidates);
    }
    let any_visible = candidates.iter().any(|(_, traj)| {
        traj.samples
            .iter()
            .any(|s| project_point([s.pose.x, s.pose.y, 0.0], cam).is_some())
    });
    if !any_visible {
        return Err(RenderError::NoVisiblePoints);
    }

    let mut img = Image::filled(cam.width, cam.height, SKY);

    // ground plane: everything below the horizon line
    let horizon = horizon_row(cam);
    img.fill_polygon(
        &[
            (-2.0, horizon),
            (cam.width as f64 + 2.0, horizon),
            (cam.width as f64 + 2.0, cam.height as f64 + 2.0),
            (-2.0, cam.height as f64 + 2.0),
        ],
        GROUND,
    );

    for poly in stage.map.drivable.iter() {
        let ring: Vec<[f64; 2]> = poly.vertices.iter().map(|p| [p.x, p.y]).collect();
        fill_ground_polygon(&mut img, &ring, cam, DRIVABLE);
    }

    for lane in stage.map.lanes.iter() {
        let line: Vec<[f64; 3]> = lane.centerline.iter().map(|p| [p.x, p.y, 0.0]).collect();
        draw_world_polyline(&mut img, &line, cam, 1, LANE_LINE);
    }

    for light in stage.map.traffic_lights.iter() {
        let color = match light.state_at(0.0) {
            vsf_core::scenario::LightState::Red => STOP_LINE_RED,
            _ => STOP_LINE_OTHER,
        };
        let line = [
            [light.stop_line[0].x, light.stop_line[0].y, 0.0],
            [light.stop_line[1].x, light.stop_line[1].y, 0.0],
        ];
        draw_world_polyline(&mut img, &line, cam, cfg.line_width, color);
    }

    for agent in stage.agents.iter() {
        draw_agent_box(&mut img, agent, cam, cfg);
    }

    for (i, (label, traj)) in candidates.iter().enumerate() {
        let color = cfg.colors[i % cfg.colors.len()];
        let path: Vec<[f64; 3]> = traj.samples.iter().map(|s| [s.pose.x, s.pose.y, 0.0]).collect();
        draw_world_polyline(&mut img, &path, cam, cfg.line_width, color);
        // label at the last visible sample
        let anchor = traj
            .samples
            .iter()
            .rev()
            .find_map(|s| project_point([s.pose.x, s.pose.y, 0.0], cam));
        if let Some((u, v)) = anchor {
            img.draw_text(
                &label.to_string(),
                u.round() as i64 + 4,
                v.round() as i64 - 10,
                cfg.label_scale,
                color,
            );
        }
    }

    Ok(img)
}

/// Image row of the horizon: the projection of a far-away ground point on
/// the optical axis.
fn horizon_row(cam: &CameraModel) -> f64 {
    let far = to_camera([1.0e4, 0.0, 0.0], cam);
    if far[2] > NEAR_PLANE {
        pinhole(far, cam).1
    } else {
        0.0
    }
}

fn draw_agent_box(img: &mut Image, agent: &vsf_core::Agent, cam: &CameraModel, cfg: &RenderConfig) {
    let (pose, _) = agent.state_at(0.0);
    let bbox = vsf_core::OrientedBox::new(pose.position(), pose.heading, agent.length, agent.width);
    let corners = bbox.corners();
    let base: Vec<[f64; 3]> = corners.iter().map(|c| [c.x, c.y, 0.0]).collect();
    let top: Vec<[f64; 3]> = corners.iter().map(|c| [c.x, c.y, cfg.agent_height]).collect();
    for i in 0..4 {
        let j = (i + 1) % 4;
        for (a, b) in [(base[i], base[j]), (top[i], top[j]), (base[i], top[i])] {
            if let Some((pa, pb)) = project_segment(a, b, cam) {
                img.draw_line(pa, pb, 1, AGENT);
            }
        }
    }
}
