//! Convex polygon clipping used to carve elements by crack lines and holes.

use std::f64::consts::PI;

use crate::geometry::{Circle, Point, Rect};

/// Counter-clockwise convex polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn from_rect(r: &Rect) -> Self {
        Self {
            vertices: r.corners().to_vec(),
        }
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return 0.0;
        }
        0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
    }

    pub fn centroid(&self) -> Point {
        let v = &self.vertices;
        let n = v.len();
        let a = self.area();
        if a.abs() < 1e-300 {
            let s = v.iter().fold(Point::default(), |acc, p| acc + *p);
            return s * (1.0 / n as f64);
        }
        let mut c = Point::default();
        for i in 0..n {
            let (p, q) = (v[i], v[(i + 1) % n]);
            c = c + (p + q) * p.cross(q);
        }
        c * (1.0 / (6.0 * a))
    }

    /// Keeps the part where `(x − origin) · normal <= 0`.
    pub fn clip(&self, origin: Point, normal: Point) -> Option<ConvexPolygon> {
        let v = &self.vertices;
        let n = v.len();
        let dist: Vec<f64> = v.iter().map(|p| (*p - origin).dot(normal)).collect();
        let mut out = Vec::with_capacity(n + 2);
        for i in 0..n {
            let j = (i + 1) % n;
            let (di, dj) = (dist[i], dist[j]);
            if di <= 0.0 {
                out.push(v[i]);
            }
            if (di < 0.0 && dj > 0.0) || (di > 0.0 && dj < 0.0) {
                let t = di / (di - dj);
                out.push(v[i].lerp(v[j], t));
            }
        }
        dedup_ring(&mut out);
        (out.len() >= 3).then_some(ConvexPolygon { vertices: out })
    }

    /// Splits by the infinite line through `origin` along `dir`:
    /// returns (left part, right part).
    pub fn split(&self, origin: Point, dir: Point) -> (Option<ConvexPolygon>, Option<ConvexPolygon>) {
        let left_normal = dir.perp();
        (self.clip(origin, -left_normal), self.clip(origin, left_normal))
    }

    /// Decomposes `self \ hole` into disjoint convex pieces.
    pub fn subtract(&self, hole: &ConvexPolygon) -> Vec<ConvexPolygon> {
        let mut pieces = Vec::new();
        let mut rest = Some(self.clone());
        let h = &hole.vertices;
        for i in 0..h.len() {
            let Some(cur) = rest.take() else { break };
            let a = h[i];
            let b = h[(i + 1) % h.len()];
            // outward normal of a CCW edge
            let outward = Point::new(b.y - a.y, a.x - b.x);
            if let Some(out) = cur.clip(a, -outward) {
                pieces.push(out);
            }
            rest = cur.clip(a, outward);
        }
        pieces
    }

    /// Fan triangulation rooted at vertex `root`.
    pub fn fan(&self, root: usize) -> Vec<[Point; 3]> {
        let v = &self.vertices;
        let n = v.len();
        (1..n - 1)
            .map(|k| [v[root], v[(root + k) % n], v[(root + k + 1) % n]])
            .collect()
    }

    pub fn vertex_index_near(&self, p: Point, tol: f64) -> Option<usize> {
        self.vertices.iter().position(|v| v.dist(p) <= tol)
    }
}

fn dedup_ring(v: &mut Vec<Point>) {
    v.dedup_by(|a, b| a.dist(*b) < 1e-14);
    while v.len() > 1 && v[0].dist(*v.last().unwrap()) < 1e-14 {
        v.pop();
    }
}

/// Number of sides of an inscribed regular polygon whose chord sag is at most `max_sag`.
pub fn circle_sides(radius: f64, max_sag: f64) -> usize {
    let ratio = (1.0 - max_sag / radius).clamp(-1.0, 1.0);
    let half = ratio.acos();
    if half <= 0.0 {
        return 4096;
    }
    ((PI / half).ceil() as usize).clamp(8, 4096)
}

/// Inscribed regular polygon approximating a circle.
pub fn circle_polygon(c: &Circle, max_sag: f64) -> ConvexPolygon {
    let n = circle_sides(c.radius, max_sag);
    let vertices = (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            c.center + Point::new(a.cos(), a.sin()) * c.radius
        })
        .collect();
    ConvexPolygon { vertices }
}
