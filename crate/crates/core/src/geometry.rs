//! Planar geometry used by the metric suite: points, angle arithmetic,
//! segments, simple polygons, oriented boxes (SAT overlap) and polylines
//! with arc-length projection.
//!
//! Everything lives in the ego-local planning frame: x forward, y left,
//! angles counter-clockwise in radians.

use crate::num::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<S> {
    pub x: S,
    pub y: S,
}

impl<S: Real> Point2<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: S) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product `self × o`.
    pub fn cross(self, o: Self) -> S {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> S {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Self) -> S {
        self.sub(o).norm()
    }

    /// Unit vector at the given heading.
    pub fn unit(heading: S) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    /// Rotate by 90 degrees counter-clockwise.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Normalize an angle to the half-open interval (-pi, pi].
pub fn normalize_angle<S: Real>(a: S) -> S {
    let tau = S::TAU();
    let mut r = a - tau * (a / tau).floor(); // [0, tau)
    if r > S::PI() {
        r -= tau;
    }
    r
}

/// Interpolate between two headings along the shortest arc.
pub fn lerp_angle<S: Real>(a: S, b: S, t: S) -> S {
    normalize_angle(a + normalize_angle(b - a) * t)
}

/// Smallest absolute difference between two headings.
pub fn angle_diff<S: Real>(a: S, b: S) -> S {
    normalize_angle(a - b).abs()
}

fn orient<S: Real>(a: Point2<S>, b: Point2<S>, c: Point2<S>) -> S {
    b.sub(a).cross(c.sub(a))
}

fn on_segment<S: Real>(a: Point2<S>, b: Point2<S>, p: Point2<S>, tol: S) -> bool {
    if orient(a, b, p).abs() > tol * a.dist(b).max(S::one()) {
        return false;
    }
    p.x >= a.x.min(b.x) - tol
        && p.x <= a.x.max(b.x) + tol
        && p.y >= a.y.min(b.y) - tol
        && p.y <= a.y.max(b.y) + tol
}

/// Whether segments ab and cd intersect (touching endpoints count).
pub fn segments_intersect<S: Real>(
    a: Point2<S>,
    b: Point2<S>,
    c: Point2<S>,
    d: Point2<S>,
) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > S::zero() && d2 < S::zero()) || (d1 < S::zero() && d2 > S::zero()))
        && ((d3 > S::zero() && d4 < S::zero()) || (d3 < S::zero() && d4 > S::zero()))
    {
        return true;
    }
    let tol = S::of(1e-12);
    on_segment(c, d, a, tol)
        || on_segment(c, d, b, tol)
        || on_segment(a, b, c, tol)
        || on_segment(a, b, d, tol)
}

/// Intersection parameter of segment ab with segment cd, if any:
/// returns `u` in [0, 1] such that the crossing point is `a + u*(b-a)`.
pub fn segment_intersection_param<S: Real>(
    a: Point2<S>,
    b: Point2<S>,
    c: Point2<S>,
    d: Point2<S>,
) -> Option<S> {
    let r = b.sub(a);
    let s = d.sub(c);
    let denom = r.cross(s);
    if denom.abs() < S::of(1e-15) {
        return None; // parallel or degenerate
    }
    let qp = c.sub(a);
    let u = qp.cross(s) / denom;
    let v = qp.cross(r) / denom;
    if u >= S::zero() && u <= S::one() && v >= S::zero() && v <= S::one() {
        Some(u)
    } else {
        None
    }
}

/// Distance from point p to segment ab, plus the parameter of the closest point.
pub fn point_segment_distance<S: Real>(p: Point2<S>, a: Point2<S>, b: Point2<S>) -> (S, S) {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 <= S::zero() {
        return (p.dist(a), S::zero());
    }
    let t = p.sub(a).dot(ab) / len2;
    let t = t.clamp01();
    (p.dist(a.add(ab.scale(t))), t)
}

/// Simple polygon stored as an open CCW ring of vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon<S> {
    pub vertices: Vec<Point2<S>>,
}

impl<S: Real> Polygon<S> {
    pub fn new(vertices: Vec<Point2<S>>) -> Self {
        Self { vertices }
    }

    /// Twice the signed area (positive for CCW rings).
    pub fn signed_area2(&self) -> S {
        let n = self.vertices.len();
        let mut s = S::zero();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            s += a.cross(b);
        }
        s
    }

    pub fn is_ccw(&self) -> bool {
        self.signed_area2() > S::zero()
    }

    /// No two non-adjacent edges may intersect; adjacent edges only share
    /// their common endpoint.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            if a.dist(b) < S::of(1e-12) {
                return false;
            }
            for j in (i + 1)..n {
                // skip adjacent edges (they share a vertex)
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Winding-number containment; points on the boundary count as inside.
    pub fn contains(&self, p: Point2<S>) -> bool {
        let n = self.vertices.len();
        let tol = S::of(1e-9);
        let mut winding = 0i32;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if on_segment(a, b, p, tol) {
                return true;
            }
            if a.y <= p.y {
                if b.y > p.y && orient(a, b, p) > S::zero() {
                    winding += 1;
                }
            } else if b.y <= p.y && orient(a, b, p) < S::zero() {
                winding -= 1;
            }
        }
        winding != 0
    }
}

/// Axis-aligned footprint rotated to a heading: the collision primitive for
/// ego and agent bodies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox<S> {
    pub center: Point2<S>,
    pub heading: S,
    pub half_length: S,
    pub half_width: S,
}

impl<S: Real> OrientedBox<S> {
    pub fn new(center: Point2<S>, heading: S, length: S, width: S) -> Self {
        Self {
            center,
            heading,
            half_length: length * S::of(0.5),
            half_width: width * S::of(0.5),
        }
    }

    /// Corners in CCW order: front-left, rear-left, rear-right, front-right.
    pub fn corners(&self) -> [Point2<S>; 4] {
        let fwd = Point2::unit(self.heading);
        let left = fwd.perp();
        let f = fwd.scale(self.half_length);
        let l = left.scale(self.half_width);
        [
            self.center.add(f).add(l),
            self.center.sub(f).add(l),
            self.center.sub(f).sub(l),
            self.center.add(f).sub(l),
        ]
    }

    /// Separating-axis overlap test between two oriented rectangles.
    /// Tangent contact (shared edge or corner, zero penetration) does not
    /// count as overlap.
    pub fn overlaps(&self, other: &Self) -> bool {
        let axes = [
            Point2::unit(self.heading),
            Point2::unit(self.heading).perp(),
            Point2::unit(other.heading),
            Point2::unit(other.heading).perp(),
        ];
        let ca = self.corners();
        let cb = other.corners();
        for axis in axes {
            let (mut amin, mut amax) = (S::infinity(), S::neg_infinity());
            for c in ca {
                let p = c.dot(axis);
                amin = amin.min(p);
                amax = amax.max(p);
            }
            let (mut bmin, mut bmax) = (S::infinity(), S::neg_infinity());
            for c in cb {
                let p = c.dot(axis);
                bmin = bmin.min(p);
                bmax = bmax.max(p);
            }
            if amax <= bmin || bmax <= amin {
                return false;
            }
        }
        true
    }
}

/// Open chain of points with arc-length queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline<'a, S> {
    pub points: &'a [Point2<S>],
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<S> {
    /// Arc length from the polyline start to the foot of the projection.
    pub arc_length: S,
    /// Distance from the query point to the polyline.
    pub distance: S,
    /// Signed lateral offset: positive when the point lies left of the
    /// matched segment direction.
    pub signed_offset: S,
    /// Index of the matched segment.
    pub segment: usize,
}

impl<'a, S: Real> Polyline<'a, S> {
    pub fn new(points: &'a [Point2<S>]) -> Self {
        Self { points }
    }

    pub fn total_length(&self) -> S {
        self.points
            .windows(2)
            .map(|w| w[0].dist(w[1]))
            .sum::<S>()
    }

    /// Heading of segment `i`.
    pub fn segment_heading(&self, i: usize) -> S {
        let d = self.points[i + 1].sub(self.points[i]);
        d.y.atan2(d.x)
    }

    /// Closest-point projection; on ties the earliest segment wins.
    pub fn project(&self, p: Point2<S>) -> Projection<S> {
        assert!(self.points.len() >= 2, "polyline needs at least 2 points");
        let mut best = Projection {
            arc_length: S::zero(),
            distance: S::infinity(),
            signed_offset: S::zero(),
            segment: 0,
        };
        let mut acc = S::zero();
        for i in 0..self.points.len() - 1 {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let seg_len = a.dist(b);
            let (d, t) = point_segment_distance(p, a, b);
            if d < best.distance {
                let dir = b.sub(a);
                let side = dir.cross(p.sub(a));
                best = Projection {
                    arc_length: acc + seg_len * t,
                    distance: d,
                    signed_offset: if side >= S::zero() { d } else { -d },
                    segment: i,
                };
            }
            acc += seg_len;
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    #[test]
    fn angle_normalization_range() {
        for k in -20..=20 {
            let a = 0.37 * k as f64;
            let n = normalize_angle(a);
            assert!(n > -std::f64::consts::PI && n <= std::f64::consts::PI);
            assert!(((n - a) / std::f64::consts::TAU).round() * std::f64::consts::TAU + a - n
                < 1e-9);
        }
        assert_eq!(normalize_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert_eq!(normalize_angle(-std::f64::consts::PI), std::f64::consts::PI);
    }

    #[test]
    fn lerp_angle_takes_short_arc() {
        let a = 3.0f64;
        let b = -3.0f64; // short arc crosses pi
        let mid = lerp_angle(a, b, 0.5);
        assert!((mid.abs() - std::f64::consts::PI).abs() < 0.15);
        assert!((lerp_angle(a, b, 0.0) - a).abs() < 1e-12);
        assert!((lerp_angle(a, b, 1.0) - b).abs() < 1e-12);
    }

    #[test]
    fn segment_intersection_basic() {
        assert!(segments_intersect(
            p(0.0, 0.0),
            p(2.0, 2.0),
            p(0.0, 2.0),
            p(2.0, 0.0)
        ));
        assert!(!segments_intersect(
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(0.0, 1.0),
            p(1.0, 1.0)
        ));
        // touching endpoint counts
        assert!(segments_intersect(
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(1.0, 0.0),
            p(2.0, 1.0)
        ));
        let u = segment_intersection_param(p(0.0, -1.0), p(0.0, 3.0), p(-1.0, 1.0), p(1.0, 1.0))
            .unwrap();
        assert!((u - 0.5).abs() < 1e-12);
    }

    #[test]
    fn polygon_containment_vs_dense_raycast_oracle() {
        // oracle: crossing-number with a horizontal ray, evaluated on a jittered copy
        fn oracle_contains(poly: &[Point2<f64>], q: Point2<f64>) -> bool {
            let n = poly.len();
            let mut inside = false;
            let mut j = n - 1;
            for i in 0..n {
                let (a, b) = (poly[i], poly[j]);
                if (a.y > q.y) != (b.y > q.y)
                    && q.x < (b.x - a.x) * (q.y - a.y) / (b.y - a.y) + a.x
                {
                    inside = !inside;
                }
                j = i;
            }
            inside
        }
        let poly = vec![p(0.0, 0.0), p(4.0, 0.0), p(4.0, 3.0), p(2.0, 5.0), p(0.0, 3.0)];
        let polygon = Polygon::new(poly.clone());
        assert!(polygon.is_simple());
        assert!(polygon.is_ccw());
        let mut k: u64 = 0x9e3779b97f4a7c15;
        for _ in 0..2000 {
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let x = ((k >> 11) as f64 / (1u64 << 53) as f64) * 6.0 - 1.0;
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let y = ((k >> 11) as f64 / (1u64 << 53) as f64) * 7.0 - 1.0;
            let q = p(x, y);
            // skip near-boundary points where the two formulations may differ
            let near_edge = (0..poly.len()).any(|i| {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                point_segment_distance(q, a, b).0 < 1e-6
            });
            if near_edge {
                continue;
            }
            assert_eq!(polygon.contains(q), oracle_contains(&poly, q), "at {q:?}");
        }
    }

    #[test]
    fn polygon_self_intersection_detected() {
        let bow_tie = Polygon::new(vec![p(0.0, 0.0), p(2.0, 2.0), p(2.0, 0.0), p(0.0, 2.0)]);
        assert!(!bow_tie.is_simple());
    }

    #[test]
    fn obb_overlap_vs_brute_oracle() {
        // oracle: boxes overlap iff a corner of one is inside the other or
        // any edges intersect (sufficient for non-containment cases, and
        // containment implies corner-inside)
        fn oracle(a: &OrientedBox<f64>, b: &OrientedBox<f64>) -> bool {
            let pa = Polygon::new(a.corners().to_vec());
            let pb = Polygon::new(b.corners().to_vec());
            let ca = a.corners();
            let cb = b.corners();
            if ca.iter().any(|&c| pb.contains(c)) || cb.iter().any(|&c| pa.contains(c)) {
                return true;
            }
            for i in 0..4 {
                for j in 0..4 {
                    if segments_intersect(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]) {
                        return true;
                    }
                }
            }
            false
        }
        let mut k: u64 = 12345;
        let mut next = move || {
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (k >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut disagreements = 0;
        for _ in 0..3000 {
            let a = OrientedBox::new(
                p(next() * 10.0, next() * 10.0),
                next() * 6.28,
                1.0 + next() * 4.0,
                0.5 + next() * 2.0,
            );
            let b = OrientedBox::new(
                p(next() * 10.0, next() * 10.0),
                next() * 6.28,
                1.0 + next() * 4.0,
                0.5 + next() * 2.0,
            );
            if a.overlaps(&b) != oracle(&a, &b) {
                disagreements += 1;
            }
        }
        // boundary-inclusive oracle vs strict SAT may differ only at tangency
        assert_eq!(disagreements, 0, "non-tangent disagreement");
    }

    #[test]
    fn obb_separated_and_contained() {
        let a = OrientedBox::new(p(0.0, 0.0), 0.0, 4.0, 2.0);
        let b = OrientedBox::new(p(10.0, 0.0), 1.0, 4.0, 2.0);
        assert!(!a.overlaps(&b));
        let c = OrientedBox::new(p(0.1, 0.0), 0.3, 1.0, 0.5);
        assert!(a.overlaps(&c)); // fully contained
        let touch = OrientedBox::new(p(4.0, 0.0), 0.0, 4.0, 2.0);
        assert!(!a.overlaps(&touch)); // shared edge, zero penetration
    }

    #[test]
    fn polyline_projection_on_straight_route() {
        let pts = vec![p(0.0, 0.0), p(10.0, 0.0), p(20.0, 0.0)];
        let line = Polyline::new(&pts);
        assert!((line.total_length() - 20.0).abs() < 1e-12);
        let proj = line.project(p(12.0, 3.0));
        assert!((proj.arc_length - 12.0).abs() < 1e-12);
        assert!((proj.distance - 3.0).abs() < 1e-12);
        assert!(proj.signed_offset > 0.0); // left of travel direction
        assert_eq!(proj.segment, 1);
        let proj2 = line.project(p(-5.0, -2.0));
        assert!((proj2.arc_length - 0.0).abs() < 1e-12);
        assert!(proj2.signed_offset < 0.0);
    }

    #[test]
    fn polyline_projection_generic_f32() {
        let pts = vec![
            Point2::<f32>::new(0.0, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(3.0, 4.0),
        ];
        let line = Polyline::new(&pts);
        assert!((line.total_length() - 7.0).abs() < 1e-6);
        let proj = line.project(Point2::new(3.5, 1.0));
        assert!((proj.arc_length - 4.0).abs() < 1e-5);
    }
}
