//! Structured quadrilateral mesh, element classification against the crack
//! and holes, and the enriched DOF map.

use std::collections::HashMap;

use crate::error::MeshError;
use crate::geometry::{clip_segment_to_rect, crack_side, Circle, Point, Polyline, Rect, Side, GEOM_TOL};
use crate::polygon::{circle_polygon, ConvexPolygon};

/// Elements with a smaller material fraction are treated as void.
pub const MIN_MATERIAL_FRACTION: f64 = 1e-3;

/// Heaviside enrichment is dropped at nodes whose support has less than this
/// fraction of its area on the far side of the crack.
pub const HEAVISIDE_AREA_TOL: f64 = 1e-4;

/// Uniform `nx × ny` grid of bilinear quads over a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    domain: Rect,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

pub fn build_mesh(domain: Rect, nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::BadCounts { nx, ny });
    }
    Ok(Mesh {
        domain,
        nx,
        ny,
        hx: domain.width() / nx as f64,
        hy: domain.height() / ny as f64,
    })
}

impl Mesh {
    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Characteristic element size (the larger side).
    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }

    pub fn element_diagonal(&self) -> f64 {
        self.hx.hypot(self.hy)
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node_ij(&self, n: usize) -> (usize, usize) {
        (n % (self.nx + 1), n / (self.nx + 1))
    }

    pub fn node(&self, n: usize) -> Point {
        let (i, j) = self.node_ij(n);
        Point::new(
            self.domain.x_min + i as f64 * self.hx,
            self.domain.y_min + j as f64 * self.hy,
        )
    }

    pub fn element_id(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// Counter-clockwise corner nodes, starting bottom-left.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.element_ij(e);
        [
            self.node_id(i, j),
            self.node_id(i + 1, j),
            self.node_id(i + 1, j + 1),
            self.node_id(i, j + 1),
        ]
    }

    pub fn element_rect(&self, e: usize) -> Rect {
        let (i, j) = self.element_ij(e);
        let x0 = self.domain.x_min + i as f64 * self.hx;
        let y0 = self.domain.y_min + j as f64 * self.hy;
        Rect {
            x_min: x0,
            x_max: x0 + self.hx,
            y_min: y0,
            y_max: y0 + self.hy,
        }
    }

    pub fn element_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Elements sharing node `n`.
    pub fn node_elements(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.node_ij(n);
        let (i, j) = (i as isize, j as isize);
        [(i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)]
            .into_iter()
            .filter(move |&(a, b)| a >= 0 && b >= 0 && (a as usize) < self.nx && (b as usize) < self.ny)
            .map(move |(a, b)| self.element_id(a as usize, b as usize))
    }

    /// Element containing `p` (closed, ties resolved toward lower indices).
    pub fn locate(&self, p: Point) -> Option<usize> {
        if !self.domain.contains(p, GEOM_TOL) {
            return None;
        }
        let fi = ((p.x - self.domain.x_min) / self.hx).floor();
        let fj = ((p.y - self.domain.y_min) / self.hy).floor();
        let i = (fi.max(0.0) as usize).min(self.nx - 1);
        let j = (fj.max(0.0) as usize).min(self.ny - 1);
        Some(self.element_id(i, j))
    }

    /// Elements whose rectangles overlap the axis-aligned box around `c` with half-width `r`.
    pub fn elements_near(&self, c: Point, r: f64) -> Vec<usize> {
        let to_i = |x: f64| ((x - self.domain.x_min) / self.hx).floor();
        let to_j = |y: f64| ((y - self.domain.y_min) / self.hy).floor();
        let i0 = to_i(c.x - r).max(0.0) as usize;
        let i1 = (to_i(c.x + r).max(0.0) as usize).min(self.nx - 1);
        let j0 = to_j(c.y - r).max(0.0) as usize;
        let j1 = (to_j(c.y + r).max(0.0) as usize).min(self.ny - 1);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.push(self.element_id(i, j));
            }
        }
        out
    }

    /// Bottom-up node lists along each domain edge, ordered along the edge.
    pub fn edge_nodes(&self, edge: Edge) -> Vec<usize> {
        match edge {
            Edge::Bottom => (0..=self.nx).map(|i| self.node_id(i, 0)).collect(),
            Edge::Top => (0..=self.nx).map(|i| self.node_id(i, self.ny)).collect(),
            Edge::Left => (0..=self.ny).map(|j| self.node_id(0, j)).collect(),
            Edge::Right => (0..=self.ny).map(|j| self.node_id(self.nx, j)).collect(),
        }
    }

    /// Elements adjacent to a domain edge, ordered along the edge.
    pub fn edge_elements(&self, edge: Edge) -> Vec<usize> {
        match edge {
            Edge::Bottom => (0..self.nx).map(|i| self.element_id(i, 0)).collect(),
            Edge::Top => (0..self.nx).map(|i| self.element_id(i, self.ny - 1)).collect(),
            Edge::Left => (0..self.ny).map(|j| self.element_id(0, j)).collect(),
            Edge::Right => (0..self.ny).map(|j| self.element_id(self.nx - 1, j)).collect(),
        }
    }

    /// Node closest to `p`.
    pub fn nearest_node(&self, p: Point) -> usize {
        let i = ((p.x - self.domain.x_min) / self.hx).round().clamp(0.0, self.nx as f64) as usize;
        let j = ((p.y - self.domain.y_min) / self.hy).round().clamp(0.0, self.ny as f64) as usize;
        self.node_id(i, j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    Bottom,
    Right,
    Top,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementTag {
    Standard,
    Split,
    Tip,
    Void,
    HoleCut,
}

/// Per-element classification against the current crack and hole set.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementClass {
    pub tags: Vec<ElementTag>,
    /// Material fraction in `[0, 1]`; 0 iff the element is void.
    pub fractions: Vec<f64>,
    pub tip_element: Option<usize>,
    /// Material area on the (above, below) side of the crack, for elements
    /// that a Heaviside candidate node touches.
    side_areas: HashMap<usize, [f64; 2]>,
    /// Heaviside sign of candidate nodes.
    node_sides: HashMap<usize, Side>,
}

impl ElementClass {
    pub fn tag(&self, e: usize) -> ElementTag {
        self.tags[e]
    }

    pub fn is_void(&self, e: usize) -> bool {
        self.tags[e] == ElementTag::Void
    }

    pub fn is_cut(&self, e: usize) -> bool {
        matches!(self.tags[e], ElementTag::Split | ElementTag::Tip)
    }

    pub fn node_side(&self, n: usize) -> Option<Side> {
        self.node_sides.get(&n).copied()
    }

    pub fn count(&self, tag: ElementTag) -> usize {
        self.tags.iter().filter(|t| **t == tag).count()
    }
}

/// Side of a nodal point; points on the crack count as above.
pub fn nodal_side(p: Point, crack: &Polyline) -> Side {
    crack_side(p, crack).unwrap_or(Side::Above)
}

/// Hole polygons used for trimming, chord sag bounded by `h / 100`.
pub fn hole_polygons(mesh: &Mesh, holes: &[Circle]) -> Vec<ConvexPolygon> {
    holes.iter().map(|c| circle_polygon(c, mesh.h() / 100.0)).collect()
}

/// Material pieces of element `e` after removing every overlapping hole.
pub fn material_pieces(mesh: &Mesh, e: usize, holes: &[Circle], polys: &[ConvexPolygon]) -> Vec<ConvexPolygon> {
    let rect = mesh.element_rect(e);
    let mut pieces = vec![ConvexPolygon::from_rect(&rect)];
    for (c, poly) in holes.iter().zip(polys) {
        if rect.distance_to(c.center) >= c.radius {
            continue;
        }
        pieces = pieces.iter().flat_map(|p| p.subtract(poly)).collect();
    }
    let min_area = 1e-12 * mesh.element_area();
    pieces.retain(|p| p.area() > min_area);
    pieces
}

fn hole_covers(rect: &Rect, c: &Circle) -> bool {
    rect.corners().iter().all(|p| p.dist(c.center) <= c.radius)
}

/// Crack shifted by `eps` to its right; used so that a crack lying exactly
/// on element edges still cuts a definite row of elements.
fn nudged_segments(crack: &Polyline, eps: f64) -> Vec<(Point, Point)> {
    crack
        .segments()
        .map(|(a, b)| {
            let d = b - a;
            let shift = d.perp() * (-eps / d.norm());
            (a + shift, b + shift)
        })
        .collect()
}

/// Segments of `crack` touching the closed rectangle (with tolerance).
pub fn segments_touching(crack: &Polyline, rect: &Rect, tol: f64) -> Vec<(Point, Point)> {
    let grown = Rect {
        x_min: rect.x_min - tol,
        x_max: rect.x_max + tol,
        y_min: rect.y_min - tol,
        y_max: rect.y_max + tol,
    };
    crack
        .segments()
        .filter(|(a, b)| clip_segment_to_rect(*a, *b, &grown).is_some())
        .collect()
}

/// Splits convex pieces by the infinite lines through each segment.
pub fn cut_by_lines(pieces: Vec<ConvexPolygon>, lines: &[(Point, Point)], min_area: f64) -> Vec<ConvexPolygon> {
    let mut out = pieces;
    for &(origin, dir) in lines {
        let mut next = Vec::with_capacity(out.len() * 2);
        for p in out {
            let (l, r) = p.split(origin, dir);
            next.extend(l.into_iter().chain(r).filter(|q| q.area() > min_area));
        }
        out = next;
    }
    out
}

/// Hole-only classification (no crack).
pub fn classify_holes(mesh: &Mesh, holes: &[Circle]) -> ElementClass {
    let ne = mesh.element_count();
    let polys = hole_polygons(mesh, holes);
    let mut tags = vec![ElementTag::Standard; ne];
    let mut fractions = vec![1.0; ne];
    for e in 0..ne {
        let rect = mesh.element_rect(e);
        if holes.iter().any(|c| hole_covers(&rect, c)) {
            tags[e] = ElementTag::Void;
            fractions[e] = 0.0;
            continue;
        }
        if holes.iter().any(|c| rect.distance_to(c.center) < c.radius) {
            let area: f64 = material_pieces(mesh, e, holes, &polys).iter().map(|p| p.area()).sum();
            let f = (area / mesh.element_area()).clamp(0.0, 1.0);
            if f < MIN_MATERIAL_FRACTION {
                tags[e] = ElementTag::Void;
                fractions[e] = 0.0;
            } else if f < 1.0 - 1e-12 {
                tags[e] = ElementTag::HoleCut;
                fractions[e] = f;
            }
        }
    }
    ElementClass {
        tags,
        fractions,
        tip_element: None,
        side_areas: HashMap::new(),
        node_sides: HashMap::new(),
    }
}

pub fn classify_elements(mesh: &Mesh, crack: &Polyline, holes: &[Circle]) -> Result<ElementClass, MeshError> {
    let ne = mesh.element_count();
    let eps = 1e-9 * mesh.h();
    let polys = hole_polygons(mesh, holes);
    let ElementClass { mut tags, fractions, .. } = classify_holes(mesh, holes);

    // tip element: the tip nudged backwards and to the right of the crack
    let frame = crack.tip_frame();
    if !mesh.domain().contains(frame.tip, GEOM_TOL) {
        return Err(MeshError::TipOutsideDomain(frame.tip));
    }
    let probe = frame.tip - frame.direction * eps - frame.direction.perp() * eps;
    let tip_element = mesh.locate(probe).ok_or(MeshError::TipOutsideDomain(frame.tip))?;

    // crack cuts
    let nudged = nudged_segments(crack, eps);
    let min_len = 10.0 * eps;
    let mut cut = vec![false; ne];
    for &(a, b) in &nudged {
        let len = a.dist(b);
        let lo = Point::new(a.x.min(b.x), a.y.min(b.y));
        let hi = Point::new(a.x.max(b.x), a.y.max(b.y));
        let candidates = mesh.elements_near(lo.lerp(hi, 0.5), 0.5 * (hi.x - lo.x).max(hi.y - lo.y) + mesh.h());
        for e in candidates {
            if tags[e] == ElementTag::Void {
                continue;
            }
            if let Some((t0, t1)) = clip_segment_to_rect(a, b, &mesh.element_rect(e)) {
                if (t1 - t0) * len > min_len {
                    cut[e] = true;
                }
            }
        }
    }
    for e in 0..ne {
        if e == tip_element && tags[e] != ElementTag::Void {
            tags[e] = ElementTag::Tip;
        } else if cut[e] && tags[e] != ElementTag::Void {
            tags[e] = ElementTag::Split;
        }
    }

    // side areas around Heaviside candidates
    let tip_nodes = mesh.element_nodes(tip_element);
    let mut node_sides = HashMap::new();
    let mut side_areas = HashMap::new();
    let min_area = 1e-12 * mesh.element_area();
    for e in (0..ne).filter(|&e| tags[e] == ElementTag::Split) {
        for n in mesh.element_nodes(e) {
            if tip_nodes.contains(&n) || node_sides.contains_key(&n) {
                continue;
            }
            node_sides.insert(n, nodal_side(mesh.node(n), crack));
            for s in mesh.node_elements(n) {
                if tags[s] == ElementTag::Void || side_areas.contains_key(&s) {
                    continue;
                }
                let pieces = if tags[s] == ElementTag::HoleCut || cut[s] || s == tip_element {
                    material_pieces(mesh, s, holes, &polys)
                } else {
                    vec![ConvexPolygon::from_rect(&mesh.element_rect(s))]
                };
                let lines: Vec<(Point, Point)> = segments_touching(crack, &mesh.element_rect(s), eps)
                    .into_iter()
                    .map(|(a, b)| (a, b - a))
                    .collect();
                let mut areas = [0.0; 2];
                for p in cut_by_lines(pieces, &lines, min_area) {
                    let idx = match nodal_side(p.centroid(), crack) {
                        Side::Above => 0,
                        Side::Below => 1,
                    };
                    areas[idx] += p.area();
                }
                side_areas.insert(s, areas);
            }
        }
    }

    Ok(ElementClass {
        tags,
        fractions,
        tip_element: Some(tip_element),
        side_areas,
        node_sides,
    })
}

/// Kind of an enriched degree of freedom pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DofKind {
    Standard,
    Heaviside,
    Branch(u8),
}

/// Stable identity of one scalar DOF across crack-growth steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DofKey {
    pub node: u32,
    pub kind: DofKind,
    pub component: u8,
}

/// First index of each DOF block at a node; pairs are (ux, uy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodeDofs {
    pub standard: Option<usize>,
    pub heaviside: Option<usize>,
    /// Eight consecutive indices: four branch functions × (ux, uy).
    pub branch: Option<usize>,
}

impl NodeDofs {
    pub fn count(&self) -> usize {
        self.standard.map_or(0, |_| 2) + self.heaviside.map_or(0, |_| 2) + self.branch.map_or(0, |_| 8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub nodes: Vec<NodeDofs>,
    pub total: usize,
    /// Heaviside sign at enriched nodes.
    pub node_sides: HashMap<usize, Side>,
}

impl DofMap {
    /// Keys of all DOFs, indexed by DOF number.
    pub fn keys(&self) -> Vec<DofKey> {
        let mut keys = vec![
            DofKey {
                node: 0,
                kind: DofKind::Standard,
                component: 0
            };
            self.total
        ];
        for (n, d) in self.nodes.iter().enumerate() {
            let node = n as u32;
            if let Some(s) = d.standard {
                for c in 0..2 {
                    keys[s + c] = DofKey {
                        node,
                        kind: DofKind::Standard,
                        component: c as u8,
                    };
                }
            }
            if let Some(h) = d.heaviside {
                for c in 0..2 {
                    keys[h + c] = DofKey {
                        node,
                        kind: DofKind::Heaviside,
                        component: c as u8,
                    };
                }
            }
            if let Some(b) = d.branch {
                for k in 0..8 {
                    keys[b + k] = DofKey {
                        node,
                        kind: DofKind::Branch((k / 2) as u8),
                        component: (k % 2) as u8,
                    };
                }
            }
        }
        keys
    }

    pub fn heaviside_node_count(&self) -> usize {
        self.nodes.iter().filter(|d| d.heaviside.is_some()).count()
    }

    pub fn branch_node_count(&self) -> usize {
        self.nodes.iter().filter(|d| d.branch.is_some()).count()
    }
}

pub fn build_dof_map(mesh: &Mesh, classes: &ElementClass) -> DofMap {
    let nn = mesh.node_count();
    let active: Vec<bool> = (0..nn)
        .map(|n| mesh.node_elements(n).any(|e| !classes.is_void(e)))
        .collect();
    let tip_nodes = classes.tip_element.map(|e| mesh.element_nodes(e));
    let is_branch = |n: usize| tip_nodes.is_some_and(|t| t.contains(&n)) && active[n];

    let mut heaviside = vec![false; nn];
    for (n, side) in &classes.node_sides {
        if !active[*n] || is_branch(*n) {
            continue;
        }
        let (mut same, mut other) = (0.0, 0.0);
        for e in mesh.node_elements(*n) {
            if let Some(a) = classes.side_areas.get(&e) {
                let (s, o) = match side {
                    Side::Above => (a[0], a[1]),
                    Side::Below => (a[1], a[0]),
                };
                same += s;
                other += o;
            }
        }
        let total = same + other;
        heaviside[*n] = total > 0.0 && other / total >= HEAVISIDE_AREA_TOL;
    }

    let mut nodes = vec![NodeDofs::default(); nn];
    let mut next = 0;
    let mut node_sides = HashMap::new();
    for n in 0..nn {
        if !active[n] {
            continue;
        }
        nodes[n].standard = Some(next);
        next += 2;
        if heaviside[n] {
            nodes[n].heaviside = Some(next);
            next += 2;
            node_sides.insert(n, classes.node_sides[&n]);
        }
        if is_branch(n) {
            nodes[n].branch = Some(next);
            next += 8;
        }
    }
    DofMap {
        nodes,
        total: next,
        node_sides,
    }
}
