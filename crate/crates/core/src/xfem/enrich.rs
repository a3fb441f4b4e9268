//! Crack-tip branch functions and their gradients.

use crate::geometry::{tip_polar, Point, TipFrame};

/// `√r · [sin(θ/2), cos(θ/2), sin θ sin(θ/2), sin θ cos(θ/2)]`.
pub fn tip_enrichment(r: f64, theta: f64) -> [f64; 4] {
    let sr = r.max(0.0).sqrt();
    let (s2, c2) = (0.5 * theta).sin_cos();
    let st = theta.sin();
    [sr * s2, sr * c2, sr * st * s2, sr * st * c2]
}

/// Branch values and global gradients at `p`. At the tip itself the
/// gradient is singular and reported as zero.
pub fn tip_enrichment_grad(p: Point, frame: &TipFrame) -> ([f64; 4], [Point; 4]) {
    let (r, theta) = tip_polar(p, frame);
    let phi = tip_enrichment(r, theta);
    if r <= 0.0 {
        return (phi, [Point::default(); 4]);
    }
    let sr = r.sqrt();
    let (s2, c2) = (0.5 * theta).sin_cos();
    let (st, ct) = theta.sin_cos();
    let d_r = [phi[0] / (2.0 * r), phi[1] / (2.0 * r), phi[2] / (2.0 * r), phi[3] / (2.0 * r)];
    let d_theta = [
        0.5 * sr * c2,
        -0.5 * sr * s2,
        sr * (ct * s2 + 0.5 * st * c2),
        sr * (ct * c2 - 0.5 * st * s2),
    ];
    let mut grad = [Point::default(); 4];
    for a in 0..4 {
        let local = Point::new(ct * d_r[a] - st / r * d_theta[a], st * d_r[a] + ct / r * d_theta[a]);
        grad[a] = frame.to_global(local);
    }
    (phi, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn spot_values() {
        assert_eq!(tip_enrichment(1.0, 0.0), [0.0, 1.0, 0.0, 0.0]);
        let v = tip_enrichment(4.0, PI);
        assert!((v[0] - 2.0).abs() < 1e-15 && v[1].abs() < 1e-15 && v[2].abs() < 1e-15 && v[3].abs() < 1e-15);
        let jump = tip_enrichment(1.0, PI)[0] - tip_enrichment(1.0, -PI)[0];
        assert!((jump - 2.0).abs() < 1e-15);
        assert_eq!(tip_enrichment(0.0, 1.0), [0.0; 4]);
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            x in -3.0..3.0f64, y in 0.05..3.0f64, sign in prop::bool::ANY,
            ang in -3.1..3.1f64, tx in -1.0..1.0f64, ty in -1.0..1.0f64,
        ) {
            let frame = TipFrame::new(Point::new(tx, ty), Point::new(ang.cos(), ang.sin())).unwrap();
            // keep away from the back-ray, where Φ₁ jumps
            let yl = if sign { y } else { -y };
            let p = frame.to_global(Point::new(x, yl)) + frame.tip;
            let (_, g) = tip_enrichment_grad(p, &frame);
            let h = 1e-6;
            for a in 0..4 {
                let f = |q: Point| {
                    let (r, t) = tip_polar(q, &frame);
                    tip_enrichment(r, t)[a]
                };
                let gx = (f(p + Point::new(h, 0.0)) - f(p - Point::new(h, 0.0))) / (2.0 * h);
                let gy = (f(p + Point::new(0.0, h)) - f(p - Point::new(0.0, h))) / (2.0 * h);
                let scale = 1.0 + g[a].norm();
                prop_assert!((gx - g[a].x).abs() < 1e-6 * scale);
                prop_assert!((gy - g[a].y).abs() < 1e-6 * scale);
            }
        }
    }
}
