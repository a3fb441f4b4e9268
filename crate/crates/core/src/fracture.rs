//! Stress intensity factors, kink angle and fixed-increment growth.

use std::f64::consts::PI;

use crate::error::FractureError;
use crate::geometry::{segment_circle_hit, segment_rect_exit, tip_polar, Circle, Point, Polyline, Rect, TipFrame, GEOM_TOL};
use crate::xfem::{Material, Model};

/// Mixed-mode stress intensity factors in MPa·√mm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SifPair {
    pub k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthStatus {
    Growing,
    HitBoundary,
    HitHole,
    MaxSteps,
}

impl GrowthStatus {
    pub fn is_terminal(self) -> bool {
        self != GrowthStatus::Growing
    }

    pub fn label(self) -> &'static str {
        match self {
            GrowthStatus::Growing => "GROWING",
            GrowthStatus::HitBoundary => "HIT_BOUNDARY",
            GrowthStatus::HitHole => "HIT_HOLE",
            GrowthStatus::MaxSteps => "MAX_STEPS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Opening,
    Sliding,
}

/// Unit-K Williams field in tip coordinates: stress `(σ11, σ22, σ12)` and
/// `∂u/∂x1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxField {
    pub stress: [f64; 3],
    pub du_dx1: [f64; 2],
}

/// Displacement angular functions `f(θ)` and `f'(θ)` of the unit-K field,
/// with `u = √r f(θ)`.
fn williams_angular(theta: f64, mode: Mode, mat: &Material) -> ([f64; 2], [f64; 2]) {
    let kappa = mat.kappa();
    let c = 1.0 / (2.0 * mat.shear_modulus() * (2.0 * PI).sqrt());
    let (s, co) = (0.5 * theta).sin_cos();
    match mode {
        Mode::Opening => (
            [c * co * (kappa - 1.0 + 2.0 * s * s), c * s * (kappa + 1.0 - 2.0 * co * co)],
            [
                c * (-0.5 * s * (kappa - 1.0 + 2.0 * s * s) + 2.0 * s * co * co),
                c * (0.5 * co * (kappa + 1.0 - 2.0 * co * co) + 2.0 * s * s * co),
            ],
        ),
        Mode::Sliding => (
            [c * s * (kappa + 1.0 + 2.0 * co * co), -c * co * (kappa - 1.0 - 2.0 * s * s)],
            [
                c * (0.5 * co * (kappa + 1.0 + 2.0 * co * co) - 2.0 * s * s * co),
                -c * (-0.5 * s * (kappa - 1.0 - 2.0 * s * s) - 2.0 * s * co * co),
            ],
        ),
    }
}

/// Unit-K Williams displacement at polar position `(r, θ)` of the tip.
pub fn williams_displacement(r: f64, theta: f64, mode: Mode, mat: &Material) -> [f64; 2] {
    let (f, _) = williams_angular(theta, mode, mat);
    f.map(|v| r.sqrt() * v)
}

pub fn williams_field(r: f64, theta: f64, mode: Mode, mat: &Material) -> AuxField {
    let a = 1.0 / (2.0 * PI * r).sqrt();
    let (s, c) = (0.5 * theta).sin_cos();
    let (s3, c3) = (1.5 * theta).sin_cos();
    let stress = match mode {
        Mode::Opening => [a * c * (1.0 - s * s3), a * c * (1.0 + s * s3), a * s * c * c3],
        Mode::Sliding => [-a * s * (2.0 + c * c3), a * s * c * c3, a * c * (1.0 - s * s3)],
    };
    let (f, df) = williams_angular(theta, mode, mat);
    let (st, ct) = theta.sin_cos();
    let rs = r.sqrt();
    let du_dx1 = [0, 1].map(|i| (ct * 0.5 * f[i] - st * df[i]) / rs);
    AuxField { stress, du_dx1 }
}

/// Default interaction radius for `model`: `factor` tip-element diagonals,
/// shrunk to stay inside the domain and clear of holes.
pub fn integration_radius(model: &Model, factor: f64) -> Result<f64, FractureError> {
    let mesh = &model.mesh;
    let tip = model.frame.tip;
    let wanted = factor * mesh.element_diagonal();
    let mut r = wanted.min(mesh.domain().inner_distance(tip));
    for c in &model.holes {
        r = r.min(tip.dist(c.center) - c.radius);
    }
    let h = mesh.h();
    if r < h {
        return Err(FractureError::RadiusTooSmall { r_d: r, h });
    }
    if r < wanted {
        log::warn!("interaction radius shrunk from {wanted:.3} to {r:.3} mm near the boundary");
    }
    Ok(r)
}

/// Interaction integrals over the disk of radius `r_d` around the tip.
pub fn compute_sifs(model: &Model, u: &[f64], mat: &Material, r_d: f64) -> Result<SifPair, FractureError> {
    let mesh = &model.mesh;
    let h = mesh.h();
    if r_d < h {
        return Err(FractureError::RadiusTooSmall { r_d, h });
    }
    let frame = &model.frame;
    let tip = frame.tip;
    let (c, s) = (frame.direction.x, frame.direction.y);
    let d = mat.constitutive();
    let mut integral = [0.0; 2];
    for e in mesh.elements_near(tip, r_d) {
        if model.classes.is_void(e) || mesh.element_rect(e).distance_to(tip) >= r_d {
            continue;
        }
        let ed = model.element_data(e);
        for cell in model.cells(e) {
            for &(p, w) in &cell.points {
                let (r, theta) = tip_polar(p, frame);
                if r >= r_d || r <= 0.0 {
                    continue;
                }
                let rho2 = (r / r_d).powi(2);
                let local = frame.to_local(p - tip);
                let dq = local * (-4.0 * (1.0 - rho2) / (r_d * r_d));
                // local displacement gradient R G Rᵀ
                let g = model.displacement_gradient(&ed, u, p, cell.side);
                let rg = [
                    [c * g[0][0] + s * g[1][0], c * g[0][1] + s * g[1][1]],
                    [-s * g[0][0] + c * g[1][0], -s * g[0][1] + c * g[1][1]],
                ];
                let gl = [
                    [rg[0][0] * c + rg[0][1] * s, -rg[0][0] * s + rg[0][1] * c],
                    [rg[1][0] * c + rg[1][1] * s, -rg[1][0] * s + rg[1][1] * c],
                ];
                let eps = [gl[0][0], gl[1][1], gl[0][1] + gl[1][0]];
                let sig: [f64; 3] = std::array::from_fn(|i| d[i][0] * eps[0] + d[i][1] * eps[1] + d[i][2] * eps[2]);
                for (k, mode) in [Mode::Opening, Mode::Sliding].into_iter().enumerate() {
                    let aux = williams_field(r, theta, mode, mat);
                    let [a11, a22, a12] = aux.stress;
                    let [v1, v2] = aux.du_dx1;
                    let work = a11 * eps[0] + a22 * eps[1] + a12 * eps[2];
                    let t1 = (sig[0] * v1 + sig[2] * v2) * dq.x + (sig[2] * v1 + sig[1] * v2) * dq.y;
                    let t2 = (a11 * gl[0][0] + a12 * gl[1][0]) * dq.x + (a12 * gl[0][0] + a22 * gl[1][0]) * dq.y;
                    integral[k] += w * (t1 + t2 - work * dq.x);
                }
            }
        }
    }
    let scale = 0.5 * mat.effective_modulus();
    let sifs = SifPair {
        k1: scale * integral[0],
        k2: scale * integral[1],
    };
    if sifs.k1 < 0.0 {
        log::warn!("negative opening factor {:.4e}", sifs.k1);
    }
    Ok(sifs)
}

/// Kink angle of maximum hoop stress, in the tip frame.
pub fn propagation_angle(sifs: SifPair) -> Result<f64, FractureError> {
    let SifPair { k1, k2 } = sifs;
    if k1 == 0.0 && k2 == 0.0 {
        return Err(FractureError::NoField);
    }
    if k2.abs() <= 1e-12 * k1.abs() {
        return Ok(0.0);
    }
    Ok(2.0 * ((k1 - (k1 * k1 + 8.0 * k2 * k2).sqrt()) / (4.0 * k2)).atan())
}

/// Appends one increment of length `da` at `theta` relative to the tip
/// direction, truncated at the domain boundary or the first hole hit.
pub fn grow_crack(
    crack: &Polyline,
    frame: &TipFrame,
    theta: f64,
    da: f64,
    domain: &Rect,
    holes: &[Circle],
) -> Result<(Polyline, GrowthStatus), FractureError> {
    let a = frame.tip;
    let angle = frame.angle() + theta;
    let b = a + Point::new(angle.cos(), angle.sin()) * da;
    let mut end = b;
    let mut status = GrowthStatus::Growing;
    if let Some(p) = segment_rect_exit(a, b, domain) {
        end = p;
        status = GrowthStatus::HitBoundary;
    }
    for hole in holes {
        if let Some(p) = segment_circle_hit(a, b, hole)? {
            if a.dist(p) < a.dist(end) || (status == GrowthStatus::Growing && a.dist(p) <= a.dist(end)) {
                end = p;
                status = GrowthStatus::HitHole;
            }
        }
    }
    let mut out = crack.clone();
    if a.dist(end) > GEOM_TOL {
        out.push(end)?;
    }
    Ok((out, status))
}
