//! Enriched finite element discretization: basis evaluation, quadrature
//! cells, element stiffness, global assembly, loads and supports.

mod cells;
mod enrich;
mod loads;
pub mod quadrature;

use std::collections::HashMap;

pub use cells::{subdivide_element, QuadCell};
pub use enrich::{tip_enrichment, tip_enrichment_grad};
pub use loads::{apply_loads_bcs, ConstrainedSystem, EdgeLoad, LoadSpec, PointLoad, Support, SupportTarget};

use crate::error::{MeshError, ModelError};
use crate::geometry::{Circle, Point, Polyline, Side, TipFrame};
use crate::mesh::{build_dof_map, classify_elements, hole_polygons, nodal_side, DofMap, ElementClass, ElementTag, Mesh, NodeDofs};
use crate::polygon::ConvexPolygon;
use crate::sparse::{CsrMatrix, TripletBuilder};
use quadrature::TriangleRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlaneState {
    PlaneStrain,
    PlaneStress,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
    pub state: PlaneState,
}

impl Material {
    pub fn new(young: f64, poisson: f64, state: PlaneState) -> Result<Self, ModelError> {
        if !(young > 0.0 && young.is_finite()) {
            return Err(ModelError::Material(format!("Young's modulus must be positive, got {young}")));
        }
        if !(0.0..0.5).contains(&poisson) {
            return Err(ModelError::Material(format!("Poisson's ratio must lie in [0, 0.5), got {poisson}")));
        }
        Ok(Self { young, poisson, state })
    }

    /// Stress–strain matrix for `(εxx, εyy, γxy)`.
    pub fn constitutive(&self) -> [[f64; 3]; 3] {
        let (e, nu) = (self.young, self.poisson);
        match self.state {
            PlaneState::PlaneStrain => {
                let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
                [
                    [c * (1.0 - nu), c * nu, 0.0],
                    [c * nu, c * (1.0 - nu), 0.0],
                    [0.0, 0.0, c * (1.0 - 2.0 * nu) / 2.0],
                ]
            }
            PlaneState::PlaneStress => {
                let c = e / (1.0 - nu * nu);
                [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]]
            }
        }
    }

    pub fn shear_modulus(&self) -> f64 {
        self.young / (2.0 * (1.0 + self.poisson))
    }

    /// Kolosov constant.
    pub fn kappa(&self) -> f64 {
        match self.state {
            PlaneState::PlaneStrain => 3.0 - 4.0 * self.poisson,
            PlaneState::PlaneStress => (3.0 - self.poisson) / (1.0 + self.poisson),
        }
    }

    /// Modulus relating the energy release rate to `K² `.
    pub fn effective_modulus(&self) -> f64 {
        match self.state {
            PlaneState::PlaneStrain => self.young / (1.0 - self.poisson * self.poisson),
            PlaneState::PlaneStress => self.young,
        }
    }

    /// Out-of-plane normal stress for the given in-plane stresses.
    pub fn sigma_zz(&self, sxx: f64, syy: f64) -> f64 {
        match self.state {
            PlaneState::PlaneStrain => self.poisson * (sxx + syy),
            PlaneState::PlaneStress => 0.0,
        }
    }
}

/// Quadrature choices per element kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Tensor Gauss order on uncut elements.
    pub standard_order: usize,
    /// Triangles of crack- or hole-cut elements without branch functions.
    pub split_rule: TriangleRule,
    /// Triangles fanned from the crack tip.
    pub tip_rule: TriangleRule,
    /// Other triangles of elements carrying branch functions.
    pub blending_rule: TriangleRule,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            standard_order: 2,
            split_rule: TriangleRule::Three,
            tip_rule: TriangleRule::Six,
            blending_rule: TriangleRule::Twelve,
        }
    }
}

/// One scalar basis function at a point; it multiplies the DOF pair
/// starting at `dof`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Basis {
    pub dof: usize,
    pub value: f64,
    pub grad: Point,
}

/// Per-element data reused at every evaluation point.
#[derive(Debug, Clone)]
pub struct ElementData {
    pub element: usize,
    pub nodes: [usize; 4],
    pub coords: [Point; 4],
    pub dofs: [NodeDofs; 4],
    heaviside_at_node: [f64; 4],
    branch_at_node: [[f64; 4]; 4],
    pub has_heaviside: bool,
    pub has_branch: bool,
}

impl ElementData {
    pub fn dof_count(&self) -> usize {
        self.dofs.iter().map(|d| d.count()).sum()
    }

    pub fn is_plain(&self) -> bool {
        !self.has_heaviside && !self.has_branch
    }
}

/// The discretized problem for one crack configuration.
#[derive(Debug, Clone)]
pub struct Model {
    pub mesh: Mesh,
    pub crack: Polyline,
    pub holes: Vec<Circle>,
    pub hole_polys: Vec<ConvexPolygon>,
    pub classes: ElementClass,
    pub dofs: DofMap,
    pub frame: TipFrame,
    pub quad: QuadOptions,
}

impl Model {
    pub fn new(mesh: Mesh, crack: Polyline, holes: Vec<Circle>, quad: QuadOptions) -> Result<Self, MeshError> {
        let classes = classify_elements(&mesh, &crack, &holes)?;
        let dofs = build_dof_map(&mesh, &classes);
        let hole_polys = hole_polygons(&mesh, &holes);
        let frame = crack.tip_frame();
        Ok(Self {
            mesh,
            crack,
            holes,
            hole_polys,
            classes,
            dofs,
            frame,
            quad,
        })
    }

    pub fn total_dofs(&self) -> usize {
        self.dofs.total
    }

    pub fn element_data(&self, e: usize) -> ElementData {
        let nodes = self.mesh.element_nodes(e);
        let coords = nodes.map(|n| self.mesh.node(n));
        let dofs = nodes.map(|n| self.dofs.nodes[n]);
        let mut heaviside_at_node = [0.0; 4];
        let mut branch_at_node = [[0.0; 4]; 4];
        let mut has_heaviside = false;
        let mut has_branch = false;
        for a in 0..4 {
            if dofs[a].heaviside.is_some() {
                has_heaviside = true;
                heaviside_at_node[a] = self.dofs.node_sides[&nodes[a]].sign();
            }
            if dofs[a].branch.is_some() {
                has_branch = true;
                let (r, t) = crate::geometry::tip_polar(coords[a], &self.frame);
                branch_at_node[a] = tip_enrichment(r, t);
            }
        }
        ElementData {
            element: e,
            nodes,
            coords,
            dofs,
            heaviside_at_node,
            branch_at_node,
            has_heaviside,
            has_branch,
        }
    }

    /// Bilinear shape functions and their gradients at `p`.
    pub fn shape(&self, ed: &ElementData, p: Point) -> ([f64; 4], [Point; 4]) {
        let (hx, hy) = (self.mesh.hx(), self.mesh.hy());
        let c = (ed.coords[0] + ed.coords[2]) * 0.5;
        let xi = 2.0 * (p.x - c.x) / hx;
        let eta = 2.0 * (p.y - c.y) / hy;
        const SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
        let mut n = [0.0; 4];
        let mut g = [Point::default(); 4];
        for (a, &(sa, ta)) in SIGNS.iter().enumerate() {
            n[a] = 0.25 * (1.0 + sa * xi) * (1.0 + ta * eta);
            g[a] = Point::new(0.25 * sa * (1.0 + ta * eta) * 2.0 / hx, 0.25 * ta * (1.0 + sa * xi) * 2.0 / hy);
        }
        (n, g)
    }

    /// All scalar bases of element `ed` at `p`, node-major, standard before
    /// enriched. `side` is the crack side of `p`; it is computed when absent.
    pub fn bases(&self, ed: &ElementData, p: Point, side: Option<Side>) -> Vec<Basis> {
        let (n, g) = self.shape(ed, p);
        let h = if ed.has_heaviside {
            side.unwrap_or_else(|| nodal_side(p, &self.crack)).sign()
        } else {
            0.0
        };
        let branch = ed.has_branch.then(|| tip_enrichment_grad(p, &self.frame));
        let mut out = Vec::with_capacity(ed.dof_count() / 2);
        for a in 0..4 {
            let d = &ed.dofs[a];
            if let Some(s) = d.standard {
                out.push(Basis {
                    dof: s,
                    value: n[a],
                    grad: g[a],
                });
            }
            if let Some(hd) = d.heaviside {
                let shift = h - ed.heaviside_at_node[a];
                out.push(Basis {
                    dof: hd,
                    value: shift * n[a],
                    grad: g[a] * shift,
                });
            }
            if let Some(b) = d.branch {
                let (phi, dphi) = branch.as_ref().expect("branch data present");
                for k in 0..4 {
                    let shift = phi[k] - ed.branch_at_node[a][k];
                    out.push(Basis {
                        dof: b + 2 * k,
                        value: shift * n[a],
                        grad: dphi[k] * n[a] + g[a] * shift,
                    });
                }
            }
        }
        out
    }

    pub fn cells(&self, e: usize) -> Vec<QuadCell> {
        subdivide_element(self, e)
    }

    /// Element stiffness and its global DOF list.
    pub fn element_stiffness(&self, ed: &ElementData, mat: &Material, cells: &[QuadCell]) -> ElementMatrix {
        let d = mat.constitutive();
        let nb = ed.dof_count() / 2;
        let mut dofs = Vec::with_capacity(2 * nb);
        for a in 0..4 {
            let nd = &ed.dofs[a];
            for base in [nd.standard, nd.heaviside] {
                if let Some(s) = base {
                    dofs.extend([s, s + 1]);
                }
            }
            if let Some(b) = nd.branch {
                dofs.extend(b..b + 8);
            }
        }
        let m = 2 * nb;
        let mut k = vec![0.0; m * m];
        for cell in cells {
            for &(p, w) in &cell.points {
                let bases = self.bases(ed, p, cell.side);
                debug_assert_eq!(bases.len(), nb);
                for (a, ba) in bases.iter().enumerate() {
                    let (ax, ay) = (ba.grad.x, ba.grad.y);
                    // rows of Dᵀ-weighted B for the two components of basis a
                    let ra = [
                        [d[0][0] * ax, d[1][0] * ax, d[2][2] * ay],
                        [d[0][1] * ay, d[1][1] * ay, d[2][2] * ax],
                    ];
                    for (b, bb) in bases.iter().enumerate().skip(a) {
                        let (bx, by) = (bb.grad.x, bb.grad.y);
                        let kxx = ra[0][0] * bx + ra[0][2] * by;
                        let kxy = ra[0][1] * by + ra[0][2] * bx;
                        let kyx = ra[1][0] * bx + ra[1][2] * by;
                        let kyy = ra[1][1] * by + ra[1][2] * bx;
                        let (i, j) = (2 * a, 2 * b);
                        k[i * m + j] += w * kxx;
                        k[i * m + j + 1] += w * kxy;
                        k[(i + 1) * m + j] += w * kyx;
                        k[(i + 1) * m + j + 1] += w * kyy;
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                k[i * m + j] = k[j * m + i];
            }
        }
        ElementMatrix { dofs, k }
    }

    /// Strain `(εxx, εyy, γxy)` at `p` in element `ed`.
    pub fn strain(&self, ed: &ElementData, u: &[f64], p: Point, side: Option<Side>) -> [f64; 3] {
        let mut eps = [0.0; 3];
        for b in self.bases(ed, p, side) {
            let (ux, uy) = (u[b.dof], u[b.dof + 1]);
            eps[0] += b.grad.x * ux;
            eps[1] += b.grad.y * uy;
            eps[2] += b.grad.y * ux + b.grad.x * uy;
        }
        eps
    }

    pub fn displacement(&self, ed: &ElementData, u: &[f64], p: Point, side: Option<Side>) -> Point {
        let mut out = Point::default();
        for b in self.bases(ed, p, side) {
            out = out + Point::new(u[b.dof], u[b.dof + 1]) * b.value;
        }
        out
    }

    /// Displacement gradient `[[∂ux/∂x, ∂ux/∂y], [∂uy/∂x, ∂uy/∂y]]`.
    pub fn displacement_gradient(&self, ed: &ElementData, u: &[f64], p: Point, side: Option<Side>) -> [[f64; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        for b in self.bases(ed, p, side) {
            let (ux, uy) = (u[b.dof], u[b.dof + 1]);
            g[0][0] += b.grad.x * ux;
            g[0][1] += b.grad.y * ux;
            g[1][0] += b.grad.x * uy;
            g[1][1] += b.grad.y * uy;
        }
        g
    }

    /// Area-weighted mean in-plane stress `(σxx, σyy, τxy)` over the
    /// material part of element `e`; `None` for void elements.
    pub fn element_mean_stress(&self, e: usize, u: &[f64], mat: &Material) -> Option<[f64; 3]> {
        if self.classes.is_void(e) {
            return None;
        }
        let ed = self.element_data(e);
        let d = mat.constitutive();
        let mut acc = [0.0; 3];
        let mut area = 0.0;
        for cell in self.cells(e) {
            for &(p, w) in &cell.points {
                let eps = self.strain(&ed, u, p, cell.side);
                for i in 0..3 {
                    acc[i] += w * (d[i][0] * eps[0] + d[i][1] * eps[1] + d[i][2] * eps[2]);
                }
                area += w;
            }
        }
        (area > 0.0).then(|| acc.map(|v| v / area))
    }

    /// Nodal von Mises stress from averaged element-mean stresses; nodes
    /// without material report zero.
    pub fn nodal_von_mises(&self, u: &[f64], mat: &Material) -> Vec<f64> {
        let means: Vec<Option<[f64; 3]>> = (0..self.mesh.element_count()).map(|e| self.element_mean_stress(e, u, mat)).collect();
        (0..self.mesh.node_count())
            .map(|n| {
                let mut acc = [0.0; 3];
                let mut cnt = 0.0;
                for e in self.mesh.node_elements(n) {
                    if let Some(s) = means[e] {
                        for i in 0..3 {
                            acc[i] += s[i];
                        }
                        cnt += 1.0;
                    }
                }
                if cnt == 0.0 {
                    0.0
                } else {
                    von_mises(acc.map(|v| v / cnt), mat)
                }
            })
            .collect()
    }

    /// Nodal displacements (standard DOFs; enrichments vanish at nodes).
    pub fn nodal_displacements(&self, u: &[f64]) -> Vec<Point> {
        self.dofs
            .nodes
            .iter()
            .map(|d| d.standard.map_or(Point::default(), |s| Point::new(u[s], u[s + 1])))
            .collect()
    }
}

pub fn von_mises(s: [f64; 3], mat: &Material) -> f64 {
    let szz = mat.sigma_zz(s[0], s[1]);
    let (a, b, c) = (s[0] - s[1], s[1] - szz, szz - s[0]);
    (0.5 * (a * a + b * b + c * c) + 3.0 * s[2] * s[2]).sqrt()
}

/// Dense element block with its global DOF indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrix {
    pub dofs: Vec<usize>,
    pub k: Vec<f64>,
}

/// Global stiffness assembly with reuse of element blocks that do not
/// depend on the crack.
#[derive(Debug, Clone)]
pub struct Assembler {
    material: Material,
    plain: Option<Vec<f64>>,
    hole_cut: HashMap<usize, Vec<f64>>,
}

impl Assembler {
    pub fn new(material: Material) -> Self {
        Self {
            material,
            plain: None,
            hole_cut: HashMap::new(),
        }
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    /// Assembles `K`; element contributions are summed in element order.
    pub fn assemble(&mut self, model: &Model) -> CsrMatrix {
        let ne = model.mesh.element_count();
        let mut b = TripletBuilder::with_capacity(model.total_dofs(), ne * 64);
        for e in 0..ne {
            let tag = model.classes.tag(e);
            if tag == ElementTag::Void {
                continue;
            }
            let ed = model.element_data(e);
            let reusable = ed.is_plain() && matches!(tag, ElementTag::Standard | ElementTag::HoleCut);
            let em = if reusable {
                let k = match tag {
                    ElementTag::Standard => self
                        .plain
                        .get_or_insert_with(|| model.element_stiffness(&ed, &self.material, &model.cells(e)).k)
                        .clone(),
                    _ => self
                        .hole_cut
                        .entry(e)
                        .or_insert_with(|| model.element_stiffness(&ed, &self.material, &model.cells(e)).k)
                        .clone(),
                };
                let dofs = ed.dofs.iter().flat_map(|d| {
                    let s = d.standard.unwrap();
                    [s, s + 1]
                });
                ElementMatrix { dofs: dofs.collect(), k }
            } else {
                model.element_stiffness(&ed, &self.material, &model.cells(e))
            };
            let m = em.dofs.len();
            for (i, &gi) in em.dofs.iter().enumerate() {
                for (j, &gj) in em.dofs.iter().enumerate() {
                    b.push(gi, gj, em.k[i * m + j]);
                }
            }
        }
        b.build()
    }
}

/// Assembles the global stiffness of `model` without caching.
pub fn assemble(model: &Model, mat: &Material) -> CsrMatrix {
    Assembler::new(*mat).assemble(model)
}

#[cfg(test)]
mod tests;
