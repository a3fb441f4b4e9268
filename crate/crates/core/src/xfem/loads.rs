//! Edge tractions, point forces and Dirichlet supports.

use super::quadrature::gauss_legendre;
use super::Model;
use crate::error::ModelError;
use crate::geometry::{Point, GEOM_TOL};
use crate::mesh::Edge;
use crate::sparse::CsrMatrix;

/// Uniform traction (force per unit length) on one domain edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeLoad {
    pub edge: Edge,
    pub traction: Point,
}

/// Concentrated force applied at the node nearest to `at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLoad {
    pub at: Point,
    pub force: Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportTarget {
    Edge(Edge),
    /// The node nearest to this point.
    Near(Point),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub target: SupportTarget,
    pub fix_x: bool,
    pub fix_y: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadSpec {
    pub edge_loads: Vec<EdgeLoad>,
    pub point_loads: Vec<PointLoad>,
    pub supports: Vec<Support>,
}

/// Reduced system on the free DOFs.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    pub k: CsrMatrix,
    pub f: Vec<f64>,
    /// Reduced index of each full DOF; `None` where fixed.
    pub free_of: Vec<Option<usize>>,
    /// Full index of each reduced DOF.
    pub full_of: Vec<usize>,
    /// Unconstrained load vector.
    pub f_full: Vec<f64>,
}

impl ConstrainedSystem {
    /// Full solution vector with zeros at fixed DOFs.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.free_of.len()];
        for (r, &i) in self.full_of.iter().enumerate() {
            out[i] = u[r];
        }
        out
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.full_of.iter().map(|&i| full[i]).collect()
    }
}

/// Consistent nodal load vector of `loads` for `model`.
pub fn load_vector(model: &Model, loads: &LoadSpec) -> Result<Vec<f64>, ModelError> {
    let mesh = &model.mesh;
    let mut f = vec![0.0; model.total_dofs()];
    let gauss = gauss_legendre(3);
    for load in &loads.edge_loads {
        let nodes = mesh.edge_nodes(load.edge);
        let elems = mesh.edge_elements(load.edge);
        for (k, &e) in elems.iter().enumerate() {
            if model.classes.is_void(e) {
                continue;
            }
            let (a, b) = (mesh.node(nodes[k]), mesh.node(nodes[k + 1]));
            let len = a.dist(b);
            let ed = model.element_data(e);
            for &(s, w) in &gauss {
                let p = a.lerp(b, 0.5 * (s + 1.0));
                for basis in model.bases(&ed, p, None) {
                    let scale = 0.5 * w * len * basis.value;
                    f[basis.dof] += scale * load.traction.x;
                    f[basis.dof + 1] += scale * load.traction.y;
                }
            }
        }
    }
    for load in &loads.point_loads {
        if !mesh.domain().contains(load.at, GEOM_TOL) {
            return Err(ModelError::LoadOutside(load.at));
        }
        let n = mesh.nearest_node(load.at);
        let s = model.dofs.nodes[n].standard.ok_or(ModelError::InactiveSupport(n))?;
        f[s] += load.force.x;
        f[s + 1] += load.force.y;
    }
    Ok(f)
}

/// Fixed DOF indices (full numbering), ascending and unique.
pub fn fixed_dofs(model: &Model, loads: &LoadSpec) -> Result<Vec<usize>, ModelError> {
    let mesh = &model.mesh;
    let mut fixed = Vec::new();
    for s in &loads.supports {
        let nodes = match s.target {
            SupportTarget::Edge(edge) => mesh.edge_nodes(edge),
            SupportTarget::Near(p) => vec![mesh.nearest_node(p)],
        };
        for n in nodes {
            let Some(base) = model.dofs.nodes[n].standard else {
                if matches!(s.target, SupportTarget::Near(_)) {
                    return Err(ModelError::InactiveSupport(n));
                }
                continue;
            };
            if s.fix_x {
                fixed.push(base);
            }
            if s.fix_y {
                fixed.push(base + 1);
            }
        }
    }
    fixed.sort_unstable();
    fixed.dedup();
    Ok(fixed)
}

/// Integrates loads and eliminates fixed DOFs (zero prescribed values).
pub fn apply_loads_bcs(model: &Model, k: &CsrMatrix, loads: &LoadSpec) -> Result<ConstrainedSystem, ModelError> {
    let f_full = load_vector(model, loads)?;
    let fixed = fixed_dofs(model, loads)?;
    let n = k.n();
    let mut is_fixed = vec![false; n];
    for &d in &fixed {
        is_fixed[d] = true;
    }
    let mut free_of = vec![None; n];
    let mut full_of = Vec::with_capacity(n - fixed.len());
    for i in 0..n {
        if !is_fixed[i] {
            free_of[i] = Some(full_of.len());
            full_of.push(i);
        }
    }
    let kr = k.remap(&free_of, full_of.len());
    let f = full_of.iter().map(|&i| f_full[i]).collect();
    Ok(ConstrainedSystem {
        k: kr,
        f,
        free_of,
        full_of,
        f_full,
    })
}
