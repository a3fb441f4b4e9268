use ccp_core::fracture::{compute_sifs, integration_radius, propagation_angle};
use ccp_core::geometry::{Circle, Point, Polyline, Rect};
use ccp_core::mesh::{build_mesh, Edge};
use ccp_core::solver::full_solve;
use ccp_core::xfem::{apply_loads_bcs, assemble, EdgeLoad, LoadSpec, Material, Model, PlaneState, QuadOptions, Support, SupportTarget};

const W: f64 = 40.0;
const HEIGHT: f64 = 121.0;
const MID: f64 = 60.5;

fn handbook_factor(ratio: f64) -> f64 {
    1.12 - 0.231 * ratio + 10.55 * ratio.powi(2) - 21.72 * ratio.powi(3) + 30.39 * ratio.powi(4)
}

fn material() -> Material {
    Material::new(7.17e4, 0.33, PlaneState::PlaneStrain).unwrap()
}

/// Edge-cracked plate pulled symmetrically at both ends; the mesh is
/// mirror-symmetric about the crack line.
fn solve(a: f64, holes: Vec<Circle>, sigma: f64) -> (Model, Vec<f64>) {
    let mesh = build_mesh(Rect::new(0.0, W, 0.0, HEIGHT).unwrap(), 40, 121).unwrap();
    let crack = Polyline::new(vec![Point::new(0.0, MID), Point::new(a, MID)]).unwrap();
    let model = Model::new(mesh, crack, holes, QuadOptions::default()).unwrap();
    let mat = material();
    let k = assemble(&model, &mat);
    let pin = |y: f64| Support {
        target: SupportTarget::Near(Point::new(W, y)),
        fix_x: true,
        fix_y: true,
    };
    let loads = LoadSpec {
        edge_loads: vec![
            EdgeLoad {
                edge: Edge::Top,
                traction: Point::new(0.0, sigma),
            },
            EdgeLoad {
                edge: Edge::Bottom,
                traction: Point::new(0.0, -sigma),
            },
        ],
        point_loads: vec![],
        supports: vec![pin(MID + 0.5), pin(MID - 0.5)],
    };
    let sys = apply_loads_bcs(&model, &k, &loads).unwrap();
    let u = full_solve(&sys.k, &sys.f).unwrap();
    (model, sys.expand(&u))
}

#[test]
fn edge_crack_mode_one_matches_handbook() {
    let a = 12.0;
    let sigma = 100.0;
    let (model, u) = solve(a, vec![], sigma);
    let mat = material();
    let r_d = integration_radius(&model, 2.5).unwrap();
    let s = compute_sifs(&model, &u, &mat, r_d).unwrap();
    let expected = handbook_factor(a / W) * sigma * (std::f64::consts::PI * a).sqrt();
    let rel = (s.k1 - expected).abs() / expected;
    println!("K_I {:.4} expected {:.4} rel {:.4}, K_II {:.3e}", s.k1, expected, rel, s.k2);
    assert!(rel < 0.05);
    assert!(s.k2.abs() < 1e-4 * s.k1);

    // radius robustness
    for f in [0.7, 1.3] {
        let other = compute_sifs(&model, &u, &mat, f * r_d).unwrap();
        let change = (other.k1 - s.k1).abs() / s.k1;
        println!("r_d x{f}: K_I {:.4} change {:.4}", other.k1, change);
        assert!(change < 0.02);
    }

    // linearity and rigid motion
    let doubled: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
    let s2 = compute_sifs(&model, &doubled, &mat, r_d).unwrap();
    assert!((s2.k1 - 2.0 * s.k1).abs() < 1e-9 * s.k1);
    let mut rigid = vec![0.0; u.len()];
    for nd in &model.dofs.nodes {
        if let Some(i) = nd.standard {
            rigid[i] = 0.3;
            rigid[i + 1] = -0.2;
        }
    }
    let s0 = compute_sifs(&model, &rigid, &mat, r_d).unwrap();
    assert!(s0.k1.abs() < 1e-9 && s0.k2.abs() < 1e-9);
}

#[test]
fn mirrored_geometry_flips_shear_factor() {
    let above = Circle::new(Point::new(22.0, MID + 6.0), 3.0).unwrap();
    let below = Circle::new(Point::new(22.0, MID - 6.0), 3.0).unwrap();
    let mat = material();
    let (ma, ua) = solve(12.5, vec![above], 100.0);
    let (mb, ub) = solve(12.5, vec![below], 100.0);
    let sa = compute_sifs(&ma, &ua, &mat, integration_radius(&ma, 2.5).unwrap()).unwrap();
    let sb = compute_sifs(&mb, &ub, &mat, integration_radius(&mb, 2.5).unwrap()).unwrap();
    println!("above {sa:?} below {sb:?}");
    assert!(sa.k2.abs() > 1e-3 * sa.k1);
    // blending-cell triangulation is not mirror-symmetric, so the match
    // holds to quadrature accuracy
    assert!((sa.k1 - sb.k1).abs() < 1e-4 * sa.k1);
    assert!((sa.k2 + sb.k2).abs() < 1e-4 * sa.k1);
    let (ta, tb) = (propagation_angle(sa).unwrap(), propagation_angle(sb).unwrap());
    assert!(ta < 0.0 && tb > 0.0);
    assert!((ta + tb).abs() < 1e-4);
}
