//! Quadrature cells conforming to the crack and trimmed by holes.

use super::quadrature::{rect_points, triangle_points};
use super::Model;
use crate::geometry::{Point, Side};
use crate::mesh::{cut_by_lines, material_pieces, nodal_side, segments_touching, ElementTag};
use crate::polygon::ConvexPolygon;

/// Integration points of one piece of an element. `side` is the crack
/// side shared by every point of the cell when Heaviside functions are
/// present.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCell {
    pub triangle: Option<[Point; 3]>,
    pub side: Option<Side>,
    pub points: Vec<(Point, f64)>,
}

/// Material quadrature cells of element `e`: a tensor rule on plain
/// elements, otherwise triangles conforming to crack lines and hole chords.
/// Elements touching the crack tip are fanned from the tip.
pub fn subdivide_element(model: &Model, e: usize) -> Vec<QuadCell> {
    let mesh = &model.mesh;
    let tag = model.classes.tag(e);
    if tag == ElementTag::Void {
        return Vec::new();
    }
    let rect = mesh.element_rect(e);
    let ed = model.element_data(e);
    let tip = model.frame.tip;
    let eps = 1e-9 * mesh.h();
    let touches_tip = rect.contains(tip, eps);
    let carve = touches_tip || ed.has_branch || matches!(tag, ElementTag::Split | ElementTag::Tip | ElementTag::HoleCut);

    if !carve {
        let side = ed.has_heaviside.then(|| nodal_side(rect_center(&rect), &model.crack));
        let points = rect_points(rect.x_min, rect.x_max, rect.y_min, rect.y_max, model.quad.standard_order);
        return vec![QuadCell {
            triangle: None,
            side,
            points,
        }];
    }

    let pieces = if tag == ElementTag::HoleCut {
        material_pieces(mesh, e, &model.holes, &model.hole_polys)
    } else {
        vec![ConvexPolygon::from_rect(&rect)]
    };
    let mut lines: Vec<(Point, Point)> = segments_touching(&model.crack, &rect, eps)
        .into_iter()
        .map(|(a, b)| (a, b - a))
        .collect();
    if ed.has_branch || touches_tip {
        lines.push((tip, model.frame.direction));
    }
    if touches_tip {
        lines.push((tip, model.frame.direction.perp()));
    }
    let pieces = cut_by_lines(pieces, &lines, 1e-12 * mesh.element_area());

    let mut cells = Vec::new();
    for piece in pieces {
        let side = ed.has_heaviside.then(|| nodal_side(piece.centroid(), &model.crack));
        let root = if touches_tip { piece.vertex_index_near(tip, eps) } else { None };
        let rule = match root {
            Some(_) => model.quad.tip_rule,
            None if ed.has_branch => model.quad.blending_rule,
            None => model.quad.split_rule,
        };
        for tri in piece.fan(root.unwrap_or(0)) {
            if triangle_area(&tri) <= 1e-14 * mesh.element_area() {
                continue;
            }
            cells.push(QuadCell {
                triangle: Some(tri),
                side,
                points: triangle_points(&tri, rule),
            });
        }
    }
    cells
}

fn rect_center(r: &crate::geometry::Rect) -> Point {
    Point::new(0.5 * (r.x_min + r.x_max), 0.5 * (r.y_min + r.y_max))
}

fn triangle_area(t: &[Point; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(t[2] - t[0]).abs()
}

