//! Planar geometry: points, segments, crack polylines, circles and rectangles.
//!
//! Everything here is a pure function of its inputs. Coincidence tests use
//! [`GEOM_TOL`] (mm).

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::GeometryError;

/// Coincidence tolerance in mm.
pub const GEOM_TOL: f64 = 1e-9;

/// Distance below which a point is considered to lie on a crack.
pub const ON_CRACK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise normal.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, o: Point, t: f64) -> Point {
        self + (o - self) * t
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Ordered chain of at least two distinct vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<Point>,
}

impl Polyline {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(*p));
        }
        for (i, w) in vertices.windows(2).enumerate() {
            if w[0].dist(w[1]) <= GEOM_TOL {
                return Err(GeometryError::DegenerateSegment { index: i });
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn first(&self) -> Point {
        self.vertices[0]
    }

    pub fn last(&self) -> Point {
        *self.vertices.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.dist(b)).sum()
    }

    /// Frame at the final vertex, oriented along the last segment.
    pub fn tip_frame(&self) -> TipFrame {
        let n = self.vertices.len();
        let d = self.vertices[n - 1] - self.vertices[n - 2];
        TipFrame {
            tip: self.vertices[n - 1],
            direction: d * (1.0 / d.norm()),
        }
    }

    /// Appends a vertex; rejects a zero-length segment.
    pub fn push(&mut self, p: Point) -> Result<(), GeometryError> {
        if !p.is_finite() {
            return Err(GeometryError::NonFinite(p));
        }
        if self.last().dist(p) <= GEOM_TOL {
            return Err(GeometryError::DegenerateSegment {
                index: self.vertices.len() - 1,
            });
        }
        self.vertices.push(p);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() || !center.is_finite() {
            return Err(GeometryError::BadRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, p: Point) -> bool {
        p.dist(self.center) < self.radius
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self, GeometryError> {
        let r = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        if !(x_min < x_max && y_min < y_max) || ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::BadRect(r));
        }
        Ok(r)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed containment with tolerance `tol`.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p.x >= self.x_min - tol && p.x <= self.x_max + tol && p.y >= self.y_min - tol && p.y <= self.y_max + tol
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        o.x_min >= self.x_min && o.x_max <= self.x_max && o.y_min >= self.y_min && o.y_max <= self.y_max
    }

    /// Distance from an interior point to the nearest edge.
    pub fn inner_distance(&self, p: Point) -> f64 {
        (p.x - self.x_min)
            .min(self.x_max - p.x)
            .min(p.y - self.y_min)
            .min(self.y_max - p.y)
    }

    /// Shortest distance from `p` to the closed rectangle (0 inside).
    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = (self.x_min - p.x).max(0.0).max(p.x - self.x_max);
        let dy = (self.y_min - p.y).max(0.0).max(p.y - self.y_max);
        dx.hypot(dy)
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }
}

/// Crack-tip frame: tip position and unit direction of the last segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipFrame {
    pub tip: Point,
    pub direction: Point,
}

impl TipFrame {
    pub fn new(tip: Point, direction: Point) -> Result<Self, GeometryError> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(GeometryError::BadDirection(direction));
        }
        Ok(Self {
            tip,
            direction: direction * (1.0 / n),
        })
    }

    /// Global angle of the frame direction.
    pub fn angle(&self) -> f64 {
        self.direction.y.atan2(self.direction.x)
    }

    /// Global → local rotation of a vector.
    pub fn to_local(&self, v: Point) -> Point {
        let (c, s) = (self.direction.x, self.direction.y);
        Point::new(c * v.x + s * v.y, -s * v.x + c * v.y)
    }

    /// Local → global rotation of a vector.
    pub fn to_global(&self, v: Point) -> Point {
        let (c, s) = (self.direction.x, self.direction.y);
        Point::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    /// Inverse of [`tip_polar`].
    pub fn from_polar(&self, r: f64, theta: f64) -> Point {
        self.tip + self.to_global(Point::new(r * theta.cos(), r * theta.sin()))
    }
}

/// Side of a crack: `+1` left of travel, `-1` right of travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Above,
    Below,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Above => 1.0,
            Side::Below => -1.0,
        }
    }
}

/// Parameter of the closest point on `[a, b]` to `p`, clamped to `[0, 1]`.
fn closest_param(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    ((p - a).dot(d) / d.dot(d)).clamp(0.0, 1.0)
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> Result<f64, GeometryError> {
    if a.dist(b) <= GEOM_TOL {
        return Err(GeometryError::DegenerateSegment { index: 0 });
    }
    Ok(unchecked_segment_distance(p, a, b))
}

fn unchecked_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let t = closest_param(p, a, b);
    let foot = if t <= 0.0 {
        a
    } else if t >= 1.0 {
        b
    } else {
        a.lerp(b, t)
    };
    p.dist(foot)
}

pub fn point_polyline_distance(p: Point, path: &Polyline) -> f64 {
    path.segments()
        .map(|(a, b)| unchecked_segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

/// Heaviside side of `p` relative to the nearest crack segment.
///
/// When the nearest point is an interior vertex the side is taken against the
/// sum of the two adjacent left normals, which keeps the sign consistent on
/// both sides of a kink.
pub fn crack_side(p: Point, crack: &Polyline) -> Result<Side, GeometryError> {
    let verts = crack.vertices();
    let mut best = (f64::INFINITY, 0usize, 0.0);
    for (i, w) in verts.windows(2).enumerate() {
        let t = closest_param(p, w[0], w[1]);
        let d = p.dist(w[0].lerp(w[1], t));
        if d < best.0 {
            best = (d, i, t);
        }
    }
    let (dist, seg, t) = best;
    if dist <= ON_CRACK_TOL {
        return Err(GeometryError::OnCrack(p));
    }
    let a = verts[seg];
    let b = verts[seg + 1];
    let normal_of = |i: usize| (verts[i + 1] - verts[i]).perp() * (1.0 / verts[i].dist(verts[i + 1]));
    let normal = if t >= 1.0 && seg + 2 < verts.len() {
        normal_of(seg) + normal_of(seg + 1)
    } else if t <= 0.0 && seg > 0 {
        normal_of(seg - 1) + normal_of(seg)
    } else {
        normal_of(seg)
    };
    let anchor = if t >= 1.0 { b } else if t <= 0.0 { a } else { a.lerp(b, t) };
    let s = (p - anchor).dot(normal);
    let s = if s == 0.0 {
        // Degenerate pseudo-normal (hairpin); fall back to the segment itself.
        (b - a).cross(p - a)
    } else {
        s
    };
    Ok(if s > 0.0 { Side::Above } else { Side::Below })
}

/// Polar coordinates of `p` in the tip frame; `θ ∈ (−π, π]`.
///
/// The tip itself maps to `(0, 0)`.
pub fn tip_polar(p: Point, frame: &TipFrame) -> (f64, f64) {
    let local = frame.to_local(p - frame.tip);
    let r = local.norm();
    if r == 0.0 {
        return (0.0, 0.0);
    }
    let mut theta = local.y.atan2(local.x);
    if theta == -PI {
        theta = PI;
    }
    (r, theta)
}

/// First point where the directed segment `a → b` meets the circle boundary.
///
/// Returns `a` when `a` already lies inside the circle.
pub fn segment_circle_hit(a: Point, b: Point, c: &Circle) -> Result<Option<Point>, GeometryError> {
    if a.dist(b) <= GEOM_TOL {
        return Err(GeometryError::DegenerateSegment { index: 0 });
    }
    if a.dist(c.center) < c.radius {
        return Ok(Some(a));
    }
    let d = b - a;
    let f = a - c.center;
    let qa = d.dot(d);
    let qb = 2.0 * f.dot(d);
    let qc = f.dot(f) - c.radius * c.radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Ok(None);
    }
    let sq = disc.sqrt();
    let t = (-qb - sq) / (2.0 * qa);
    if (0.0..=1.0).contains(&t) {
        Ok(Some(a + d * t))
    } else {
        Ok(None)
    }
}

/// Point where a segment starting inside `rect` leaves it, if it does.
pub fn segment_rect_exit(a: Point, b: Point, rect: &Rect) -> Option<Point> {
    if rect.contains(b, 0.0) {
        return None;
    }
    let d = b - a;
    let mut t_exit = 1.0f64;
    let mut clip = |num: f64, den: f64| {
        // Leaving through the half-plane boundary where den > 0.
        if den > 0.0 {
            t_exit = t_exit.min(num / den);
        }
    };
    clip(rect.x_max - a.x, d.x);
    clip(a.x - rect.x_min, -d.x);
    clip(rect.y_max - a.y, d.y);
    clip(a.y - rect.y_min, -d.y);
    Some(a + d * t_exit.max(0.0))
}

/// Parameter range `[t0, t1]` of segment `a → b` inside the closed rectangle.
pub fn clip_segment_to_rect(a: Point, b: Point, rect: &Rect) -> Option<(f64, f64)> {
    let d = b - a;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let checks = [
        (-d.x, a.x - rect.x_min),
        (d.x, rect.x_max - a.x),
        (-d.y, a.y - rect.y_min),
        (d.y, rect.y_max - a.y),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Intersection parameter `(t, u)` of segments `a + t(b − a)` and `c + u(d − c)`.
pub fn segment_intersection(a: Point, b: Point, c: Point, d: Point) -> Option<(f64, f64)> {
    let r = b - a;
    let s = d - c;
    let den = r.cross(s);
    if den.abs() < 1e-300 {
        return None;
    }
    let t = (c - a).cross(s) / den;
    let u = (c - a).cross(r) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some((t, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn line(v: &[(f64, f64)]) -> Polyline {
        Polyline::new(v.iter().map(|&(x, y)| p(x, y)).collect()).unwrap()
    }

    #[test]
    fn segment_distance_examples() {
        let (a, b) = (p(0.0, 0.0), p(2.0, 0.0));
        assert_eq!(point_segment_distance(p(0.0, 1.0), a, b).unwrap(), 1.0);
        assert_eq!(point_segment_distance(p(3.0, 0.0), a, b).unwrap(), 1.0);
        assert_eq!(point_segment_distance(p(1.0, 0.0), a, b).unwrap(), 0.0);
        assert!(point_segment_distance(p(1.0, 0.0), a, a).is_err());
    }

    #[test]
    fn polyline_distance_examples() {
        assert_eq!(point_polyline_distance(p(1.0, 1.0), &line(&[(0.0, 0.0), (2.0, 0.0)])), 1.0);
        let kinked = line(&[(0.0, 0.0), (2.0, 0.0), (2.0, 4.0)]);
        assert_eq!(point_polyline_distance(p(2.0, 2.0), &kinked), 0.0);
        // brute-force oracle: dense sampling of the path
        let q = p(3.0, 1.0);
        let mut best = f64::INFINITY;
        for (a, b) in kinked.segments() {
            for k in 0..=10_000 {
                best = best.min(q.dist(a.lerp(b, k as f64 / 10_000.0)));
            }
        }
        let d = point_polyline_distance(q, &kinked);
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d, best, epsilon = 1e-6);
    }

    #[test]
    fn crack_side_examples() {
        let straight = line(&[(0.0, 0.0), (10.0, 0.0)]);
        assert_eq!(crack_side(p(5.0, 0.1), &straight).unwrap(), Side::Above);
        assert_eq!(crack_side(p(5.0, -0.1), &straight).unwrap(), Side::Below);
        assert!(matches!(crack_side(p(5.0, 0.0), &straight), Err(GeometryError::OnCrack(_))));
        let kinked = line(&[(0.0, 0.0), (5.0, 0.0), (8.0, 3.0)]);
        assert_eq!(crack_side(p(7.0, 1.0), &kinked).unwrap(), Side::Below);
    }

    #[test]
    fn kinked_side_matches_half_plane_sampling() {
        // Points near the second segment, away from the kink wedge, must
        // follow the sign of the cross product with that segment.
        let kinked = line(&[(0.0, 0.0), (5.0, 0.0), (8.0, 3.0)]);
        let (a, b) = (p(5.0, 0.0), p(8.0, 3.0));
        let dir = (b - a) * (1.0 / a.dist(b));
        for i in 1..40 {
            for j in [-0.9, -0.3, 0.3, 0.9] {
                let q = a.lerp(b, i as f64 / 40.0 + 0.01) + dir.perp() * j;
                if point_polyline_distance(q, &kinked) < q.dist(a.lerp(b, closest_param(q, a, b))) - 1e-12 {
                    continue;
                }
                let expect = if j > 0.0 { Side::Above } else { Side::Below };
                assert_eq!(crack_side(q, &kinked).unwrap(), expect, "q = {q:?}");
            }
        }
    }

    #[test]
    fn tip_polar_examples() {
        let f = TipFrame::new(p(0.0, 0.0), p(1.0, 0.0)).unwrap();
        assert_eq!(tip_polar(p(1.0, 0.0), &f), (1.0, 0.0));
        let (r, t) = tip_polar(p(0.0, 2.0), &f);
        assert_abs_diff_eq!(r, 2.0);
        assert_abs_diff_eq!(t, PI / 2.0);
        let g = TipFrame::new(p(0.0, 0.0), p(0.0, 1.0)).unwrap();
        let (r, t) = tip_polar(p(1.0, 0.0), &g);
        assert_abs_diff_eq!(r, 1.0);
        assert_abs_diff_eq!(t, -PI / 2.0, epsilon = 1e-15);
        assert_eq!(tip_polar(p(0.0, 0.0), &f), (0.0, 0.0));
        // back-ray
        assert_eq!(tip_polar(p(-1.0, 0.0), &f).1, PI);
    }

    #[test]
    fn circle_hit_examples() {
        let c = Circle::new(p(0.0, 0.0), 1.0).unwrap();
        let hit = segment_circle_hit(p(-2.0, 0.0), p(2.0, 0.0), &c).unwrap().unwrap();
        assert_abs_diff_eq!(hit.x, -1.0);
        assert_abs_diff_eq!(hit.y, 0.0);
        assert!(segment_circle_hit(p(0.0, 5.0), p(1.0, 5.0), &c).unwrap().is_none());
        assert_eq!(segment_circle_hit(p(0.0, 0.0), p(2.0, 0.0), &c).unwrap(), Some(p(0.0, 0.0)));
        // stops short of the circle
        assert!(segment_circle_hit(p(-3.0, 0.0), p(-2.0, 0.0), &c).unwrap().is_none());
    }

    #[test]
    fn rect_exit_and_clip() {
        let r = Rect::new(0.0, 10.0, 0.0, 5.0).unwrap();
        assert_eq!(segment_rect_exit(p(9.0, 1.0), p(9.5, 1.0), &r), None);
        let e = segment_rect_exit(p(9.0, 1.0), p(11.0, 1.0), &r).unwrap();
        assert_abs_diff_eq!(e.x, 10.0);
        let (t0, t1) = clip_segment_to_rect(p(-5.0, 1.0), p(5.0, 1.0), &r).unwrap();
        assert_abs_diff_eq!(t0, 0.5);
        assert_abs_diff_eq!(t1, 1.0);
        assert!(clip_segment_to_rect(p(-5.0, 6.0), p(5.0, 6.0), &r).is_none());
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(Polyline::new(vec![p(0.0, 0.0)]).is_err());
        assert!(Polyline::new(vec![p(0.0, 0.0), p(0.0, 0.0)]).is_err());
        assert!(Circle::new(p(0.0, 0.0), 0.0).is_err());
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(TipFrame::new(p(0.0, 0.0), p(0.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn vertices_have_zero_distance(pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..8)) {
            let verts: Vec<Point> = pts.iter().map(|&(x, y)| p(x, y)).collect();
            if let Ok(path) = Polyline::new(verts) {
                for v in path.vertices() {
                    prop_assert_eq!(point_polyline_distance(*v, &path), 0.0);
                }
            }
        }

        #[test]
        fn side_antisymmetric_under_reflection(x in -20.0..20.0f64, y in 1e-6..20.0f64, ang in -3.0..3.0f64) {
            // straight crack through origin at angle `ang`, long enough to dominate
            let d = p(ang.cos(), ang.sin());
            let crack = Polyline::new(vec![d * -100.0, d * 100.0]).unwrap();
            let frame = TipFrame::new(p(0.0, 0.0), d).unwrap();
            let q = frame.to_global(p(x, y));
            let q_ref = frame.to_global(p(x, -y));
            prop_assert_eq!(crack_side(q, &crack).unwrap().sign(), -crack_side(q_ref, &crack).unwrap().sign());
        }

        #[test]
        fn behind_tip_side_is_sign_of_y(x in -30.0..-1e-3f64, y in prop_oneof![-10.0..-1e-6f64, 1e-6..10.0f64]) {
            let crack = Polyline::new(vec![p(-40.0, 0.0), p(0.0, 0.0)]).unwrap();
            prop_assert_eq!(crack_side(p(x, y), &crack).unwrap().sign(), y.signum());
        }

        #[test]
        fn tip_polar_round_trip(tx in -10.0..10.0f64, ty in -10.0..10.0f64, ang in -3.2..3.2f64, px in -20.0..20.0f64, py in -20.0..20.0f64) {
            let frame = TipFrame::new(p(tx, ty), p(ang.cos(), ang.sin())).unwrap();
            let q = p(px, py);
            let (r, t) = tip_polar(q, &frame);
            prop_assert!(t > -PI && t <= PI);
            let back = frame.from_polar(r, t);
            prop_assert!(back.dist(q) < 1e-10);
        }
    }
}
