//! Quadrature rules on the reference square and on triangles.

use std::f64::consts::PI;

use crate::geometry::Point;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Symmetric triangle rules in barycentric form (weights sum to 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TriangleRule {
    /// 3 points, exact for degree 2.
    Three,
    /// 6 points, exact for degree 4.
    Six,
    /// 12 points, exact for degree 6.
    Twelve,
    /// Gauss–Legendre `n × n` on the square collapsed onto the first
    /// vertex; cancels a `1/r` singularity located there.
    Collapsed(u8),
}

fn orbit3(a: f64, w: f64, out: &mut Vec<([f64; 3], f64)>) {
    let b = 1.0 - 2.0 * a;
    out.push(([a, a, b], w));
    out.push(([a, b, a], w));
    out.push(([b, a, a], w));
}

fn orbit6(a: f64, b: f64, w: f64, out: &mut Vec<([f64; 3], f64)>) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        out.push((p, w));
    }
}

fn barycentric(rule: TriangleRule) -> Vec<([f64; 3], f64)> {
    let mut out = Vec::new();
    match rule {
        TriangleRule::Three => orbit3(1.0 / 6.0, 1.0 / 3.0, &mut out),
        TriangleRule::Six => {
            orbit3(0.445948490915965, 0.223381589678011, &mut out);
            orbit3(0.091576213509771, 0.109951743655322, &mut out);
        }
        TriangleRule::Twelve => {
            orbit3(0.249286745170910, 0.116786275726379, &mut out);
            orbit3(0.063089014491502, 0.050844906370207, &mut out);
            orbit6(0.310352451033784, 0.053145049844817, 0.082851075618374, &mut out);
        }
        TriangleRule::Collapsed(n) => {
            let g = gauss_legendre(n as usize);
            for &(xu, wu) in &g {
                let u = 0.5 * (xu + 1.0);
                for &(xv, wv) in &g {
                    let v = 0.5 * (xv + 1.0);
                    // p = a + u((1 − v)(b − a) + v(c − a)), dA = 2·area·u du dv
                    let l1 = u * (1.0 - v);
                    let l2 = u * v;
                    out.push(([1.0 - u, l1, l2], 0.25 * wu * wv * 2.0 * u));
                }
            }
        }
    }
    out
}

/// Gauss points and physical weights on triangle `t`.
pub fn triangle_points(t: &[Point; 3], rule: TriangleRule) -> Vec<(Point, f64)> {
    let area = 0.5 * (t[1] - t[0]).cross(t[2] - t[0]).abs();
    barycentric(rule)
        .into_iter()
        .map(|(l, w)| (t[0] * l[0] + t[1] * l[1] + t[2] * l[2], w * area))
        .collect()
}

/// `n × n` Gauss points with physical weights on an axis-aligned rectangle.
pub fn rect_points(x0: f64, x1: f64, y0: f64, y1: f64, n: usize) -> Vec<(Point, f64)> {
    let g = gauss_legendre(n);
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let (hx, hy) = (0.5 * (x1 - x0), 0.5 * (y1 - y0));
    let mut out = Vec::with_capacity(n * n);
    for &(eta, wy) in &g {
        for &(xi, wx) in &g {
            out.push((Point::new(cx + hx * xi, cy + hy * eta), wx * wy * hx * hy));
        }
    }
    out
}
