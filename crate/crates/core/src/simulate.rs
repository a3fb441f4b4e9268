//! Quasi-static crack propagation driver and the path-following objective.

use std::io::{self, Write};
use std::time::Instant;

use log::debug;

use crate::error::{FractureError, GeometryError, SimError};
use crate::fracture::{compute_sifs, grow_crack, integration_radius, propagation_angle, GrowthStatus};
use crate::geometry::{point_polyline_distance, Circle, Point, Polyline, Rect};
use crate::mesh::{build_mesh, DofKey, Edge, Mesh};
use crate::solver::{detect_unbalanced, dur_solve, embed_previous, full_solve_factored, ReanalysisState};
use crate::sparse::norm2;
use crate::xfem::{
    apply_loads_bcs, Assembler, ConstrainedSystem, EdgeLoad, LoadSpec, Material, Model, PlaneState, QuadOptions, Support,
    SupportTarget,
};

/// Holes placed by the optimizer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Design {
    pub holes: Vec<Circle>,
}

impl Design {
    pub fn new(holes: Vec<Circle>) -> Self {
        Self { holes }
    }

    /// Builds a design from `(x, y, r)` triples.
    pub fn from_triples(v: &[[f64; 3]]) -> Result<Self, GeometryError> {
        let holes = v.iter().map(|&[x, y, r]| Circle::new(Point::new(x, y), r)).collect::<Result<_, _>>()?;
        Ok(Self { holes })
    }

    /// Flat `[x0, y0, r0, x1, ...]` encoding.
    pub fn to_vector(&self) -> Vec<f64> {
        self.holes.iter().flat_map(|c| [c.center.x, c.center.y, c.radius]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    /// Full factorization at every step.
    Full,
    /// Full analysis at step 1, reanalysis afterwards.
    Dur,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    pub material: Material,
    pub loads: LoadSpec,
    pub crack_mouth: Point,
    /// Initial crack direction in radians from +x.
    pub crack_angle: f64,
    pub a0: f64,
    pub da: f64,
    pub max_steps: usize,
    pub fixed_holes: Vec<Circle>,
    pub solver: SolverMode,
    pub quad: QuadOptions,
    /// Interaction radius in tip-element diagonals.
    pub radius_factor: f64,
    /// Export nodal displacement and von Mises stress of the last analysis.
    pub record_fields: bool,
}

impl SimConfig {
    /// 60×120 mm plate with a 10 mm left-edge crack at mid-height, bottom
    /// edge fixed, top edge pulled with 200 N/mm, 1 mm elements.
    pub fn reference_plate() -> Self {
        Self {
            domain: Rect::new(0.0, 60.0, 0.0, 120.0).expect("valid rectangle"),
            nx: 60,
            ny: 120,
            material: Material::new(7.17e4, 0.33, PlaneState::PlaneStrain).expect("valid material"),
            loads: LoadSpec {
                edge_loads: vec![EdgeLoad {
                    edge: Edge::Top,
                    traction: Point::new(0.0, 200.0),
                }],
                point_loads: vec![],
                supports: vec![Support {
                    target: SupportTarget::Edge(Edge::Bottom),
                    fix_x: true,
                    fix_y: true,
                }],
            },
            crack_mouth: Point::new(0.0, 60.0),
            crack_angle: 0.0,
            a0: 10.0,
            da: 1.0,
            max_steps: 30,
            fixed_holes: vec![],
            solver: SolverMode::Dur,
            quad: QuadOptions::default(),
            radius_factor: 2.5,
            record_fields: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.a0 > 0.0) {
            return bad("a0 must be positive");
        }
        if !(self.da > 0.0) {
            return bad("crack increment must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if self.nx == 0 || self.ny == 0 {
            return bad("mesh counts must be positive");
        }
        if !(self.radius_factor > 0.0) {
            return bad("radius factor must be positive");
        }
        if !self.crack_angle.is_finite() {
            return bad("crack angle must be finite");
        }
        if !self.domain.contains(self.crack_mouth, 1e-9) {
            return bad("crack mouth lies outside the domain");
        }
        if !self.domain.contains(self.initial_tip(), 0.0) {
            return bad("initial crack tip lies outside the domain");
        }
        Ok(())
    }

    pub fn initial_tip(&self) -> Point {
        self.crack_mouth + Point::new(self.crack_angle.cos(), self.crack_angle.sin()) * self.a0
    }

    pub fn initial_crack(&self) -> Result<Polyline, GeometryError> {
        Polyline::new(vec![self.crack_mouth, self.initial_tip()])
    }

    pub fn mesh(&self) -> Result<Mesh, SimError> {
        Ok(build_mesh(self.domain, self.nx, self.ny)?)
    }
}

/// Waypoints the crack should pass near.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecifiedPath {
    pub key_points: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub k1: f64,
    pub k2: f64,
    pub theta: f64,
    pub solve_ms: f64,
    pub reanalysis: bool,
    pub schur_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalFields {
    pub position: Vec<Point>,
    pub displacement: Vec<Point>,
    pub von_mises: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub crack: Polyline,
    pub status: GrowthStatus,
    pub steps: Vec<StepRecord>,
    pub fields: Option<NodalFields>,
}

impl SimResult {
    pub fn tip(&self) -> Point {
        self.crack.last()
    }

    pub fn total_solve_ms(&self) -> f64 {
        self.steps.iter().map(|s| s.solve_ms).sum()
    }
}

/// One analysis: current model, constrained system and solution.
struct Analysis {
    model: Model,
    sys: ConstrainedSystem,
    u_full: Vec<f64>,
}

/// Stepwise solver that keeps the first-iteration state for reanalysis.
struct Stepper<'a> {
    cfg: &'a SimConfig,
    mesh: Mesh,
    holes: Vec<Circle>,
    assembler: Assembler,
    state: Option<ReanalysisState>,
}

struct Solved {
    u: Vec<f64>,
    ms: f64,
    reanalysis: bool,
    schur_dim: usize,
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a SimConfig, design: &Design) -> Result<Self, SimError> {
        let mut holes = cfg.fixed_holes.clone();
        holes.extend(design.holes.iter().copied());
        Ok(Self {
            cfg,
            mesh: cfg.mesh()?,
            holes,
            assembler: Assembler::new(cfg.material),
            state: None,
        })
    }

    fn system(&mut self, crack: &Polyline) -> Result<(Model, ConstrainedSystem, Vec<DofKey>), SimError> {
        let model = Model::new(self.mesh.clone(), crack.clone(), self.holes.clone(), self.cfg.quad)?;
        let k = self.assembler.assemble(&model);
        let sys = apply_loads_bcs(&model, &k, &self.cfg.loads)?;
        let all = model.dofs.keys();
        let keys = sys.full_of.iter().map(|&i| all[i]).collect();
        Ok((model, sys, keys))
    }

    fn solve_full(&mut self, step: usize, sys: &ConstrainedSystem, keys: Vec<DofKey>, keep: bool) -> Result<Solved, SimError> {
        let t = Instant::now();
        let (u, factor) = full_solve_factored(&sys.k, &sys.f).map_err(|source| SimError::Solver { step, source })?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        if keep {
            let st = ReanalysisState::new(keys, sys.k.clone(), sys.f.clone(), u.clone(), factor)
                .map_err(|source| SimError::Solver { step, source })?;
            self.state = Some(st);
        }
        Ok(Solved {
            u,
            ms,
            reanalysis: false,
            schur_dim: 0,
        })
    }

    fn solve_dur(&mut self, step: usize, sys: &ConstrainedSystem, keys: &[DofKey]) -> Result<Solved, SimError> {
        let state = self.state.as_mut().expect("first iteration stored");
        let t = Instant::now();
        let wrap = |source| SimError::Solver { step, source };
        let emb = embed_previous(state, keys).map_err(wrap)?;
        let (part, delta) = detect_unbalanced(&sys.k, &emb.k1, &sys.f, &emb.u1);
        let out = dur_solve(&sys.k, &sys.f, state, &emb, &part, &delta).map_err(wrap)?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        debug!(
            "step {step}: {} unbalanced of {}, schur {}, refinements {}",
            part.unbalanced.len(),
            keys.len(),
            out.schur_dim,
            out.refinements
        );
        Ok(Solved {
            u: out.u,
            ms,
            reanalysis: !out.fell_back,
            schur_dim: out.schur_dim,
        })
    }

    fn analyse(&mut self, step: usize, crack: &Polyline, mode: SolverMode) -> Result<(Analysis, Solved), SimError> {
        let (model, sys, keys) = self.system(crack)?;
        let solved = if mode == SolverMode::Dur && self.state.is_some() {
            self.solve_dur(step, &sys, &keys)?
        } else {
            self.solve_full(step, &sys, keys, mode == SolverMode::Dur)?
        };
        let u_full = sys.expand(&solved.u);
        Ok((Analysis { model, sys, u_full }, solved))
    }
}

/// Outcome of a fracture evaluation at the current tip.
enum TipUpdate {
    Grow { k1: f64, k2: f64, theta: f64 },
    Stop(GrowthStatus),
}

fn evaluate_tip(cfg: &SimConfig, a: &Analysis, step: usize) -> Result<TipUpdate, SimError> {
    let r_d = match integration_radius(&a.model, cfg.radius_factor) {
        Ok(r) => r,
        Err(FractureError::RadiusTooSmall { .. }) => return Ok(TipUpdate::Stop(proximity_status(&a.model))),
        Err(source) => return Err(SimError::Fracture { step, source }),
    };
    let s = compute_sifs(&a.model, &a.u_full, &cfg.material, r_d).map_err(|source| SimError::Fracture { step, source })?;
    let theta = propagation_angle(s).map_err(|source| SimError::Fracture { step, source })?;
    Ok(TipUpdate::Grow { k1: s.k1, k2: s.k2, theta })
}

/// Which feature ends growth when the tip gets too close to continue.
fn proximity_status(model: &Model) -> GrowthStatus {
    let tip = model.frame.tip;
    let to_boundary = model.mesh.domain().inner_distance(tip);
    let to_hole = model.holes.iter().map(|c| tip.dist(c.center) - c.radius).fold(f64::INFINITY, f64::min);
    if to_hole < to_boundary {
        GrowthStatus::HitHole
    } else {
        GrowthStatus::HitBoundary
    }
}

fn nodal_fields(cfg: &SimConfig, a: &Analysis) -> NodalFields {
    let mesh = &a.model.mesh;
    NodalFields {
        position: (0..mesh.node_count()).map(|n| mesh.node(n)).collect(),
        displacement: a.model.nodal_displacements(&a.u_full),
        von_mises: a.model.nodal_von_mises(&a.u_full, &cfg.material),
    }
}

/// Grows the crack of `cfg` in the presence of `design` until it stops.
pub fn propagate(design: &Design, cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let mut crack = cfg.initial_crack()?;
    let mut stepper = Stepper::new(cfg, design)?;
    if stepper.holes.iter().any(|c| c.contains(crack.last())) {
        return Ok(SimResult {
            crack,
            status: GrowthStatus::HitHole,
            steps: vec![],
            fields: None,
        });
    }
    let mut steps = Vec::new();
    let mut status = GrowthStatus::Growing;
    let mut last = None;
    for step in 1..=cfg.max_steps {
        let (analysis, solved) = stepper.analyse(step, &crack, cfg.solver)?;
        let update = evaluate_tip(cfg, &analysis, step)?;
        last = Some(analysis);
        let (k1, k2, theta) = match update {
            TipUpdate::Grow { k1, k2, theta } => (k1, k2, theta),
            TipUpdate::Stop(s) => {
                status = s;
                break;
            }
        };
        steps.push(StepRecord {
            step,
            k1,
            k2,
            theta,
            solve_ms: solved.ms,
            reanalysis: solved.reanalysis,
            schur_dim: solved.schur_dim,
        });
        let frame = crack.tip_frame();
        let (next, st) = grow_crack(&crack, &frame, theta, cfg.da, &cfg.domain, &stepper.holes)
            .map_err(|source| SimError::Fracture { step, source })?;
        crack = next;
        status = st;
        if st.is_terminal() {
            break;
        }
    }
    if status == GrowthStatus::Growing {
        status = GrowthStatus::MaxSteps;
    }
    let fields = match (&last, cfg.record_fields) {
        (Some(a), true) => Some(nodal_fields(cfg, a)),
        _ => None,
    };
    Ok(SimResult {
        crack,
        status,
        steps,
        fields,
    })
}

/// Per-step comparison of reanalysis against a full solve of the same system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyRow {
    pub step: usize,
    pub disp_rel_err: f64,
    pub stress_rel_err: f64,
    pub t_full_ms: f64,
    pub t_dur_ms: f64,
    pub schur_dim: usize,
}

/// Runs the reanalysis path and solves every step a second time with a
/// full factorization; growth follows the reanalysis solution.
pub fn verify(design: &Design, cfg: &SimConfig) -> Result<(SimResult, Vec<VerifyRow>), SimError> {
    cfg.validate()?;
    let mut crack = cfg.initial_crack()?;
    let mut stepper = Stepper::new(cfg, design)?;
    let mut rows = Vec::new();
    let mut steps = Vec::new();
    let mut status = GrowthStatus::Growing;
    if stepper.holes.iter().any(|c| c.contains(crack.last())) {
        status = GrowthStatus::HitHole;
    }
    let mut last = None;
    let mut step = 0;
    while status == GrowthStatus::Growing && step < cfg.max_steps {
        step += 1;
        let (analysis, dur) = stepper.analyse(step, &crack, SolverMode::Dur)?;
        let (full_ms, u_ref) = if step == 1 {
            (dur.ms, analysis.u_full.clone())
        } else {
            let full = stepper.solve_full(step, &analysis.sys, vec![], false)?;
            (full.ms, analysis.sys.expand(&full.u))
        };
        let diff: Vec<f64> = analysis.u_full.iter().zip(&u_ref).map(|(a, b)| a - b).collect();
        let vm_dur = analysis.model.nodal_von_mises(&analysis.u_full, &cfg.material);
        let vm_ref = analysis.model.nodal_von_mises(&u_ref, &cfg.material);
        let vm_diff: Vec<f64> = vm_dur.iter().zip(&vm_ref).map(|(a, b)| a - b).collect();
        rows.push(VerifyRow {
            step,
            disp_rel_err: norm2(&diff) / norm2(&u_ref),
            stress_rel_err: norm2(&vm_diff) / norm2(&vm_ref),
            t_full_ms: full_ms,
            t_dur_ms: dur.ms,
            schur_dim: dur.schur_dim,
        });
        let update = evaluate_tip(cfg, &analysis, step)?;
        last = Some(analysis);
        match update {
            TipUpdate::Grow { k1, k2, theta } => {
                steps.push(StepRecord {
                    step,
                    k1,
                    k2,
                    theta,
                    solve_ms: dur.ms,
                    reanalysis: dur.reanalysis,
                    schur_dim: dur.schur_dim,
                });
                let (next, st) = grow_crack(&crack, &crack.tip_frame(), theta, cfg.da, &cfg.domain, &stepper.holes)
                    .map_err(|source| SimError::Fracture { step, source })?;
                crack = next;
                status = st;
            }
            TipUpdate::Stop(s) => status = s,
        }
    }
    if status == GrowthStatus::Growing {
        status = GrowthStatus::MaxSteps;
    }
    let fields = match (&last, cfg.record_fields) {
        (Some(a), true) => Some(nodal_fields(cfg, a)),
        _ => None,
    };
    Ok((
        SimResult {
            crack,
            status,
            steps,
            fields,
        },
        rows,
    ))
}

/// Mean distance from the key points to the crack path.
pub fn path_fitness(crack: &Polyline, spec: &SpecifiedPath) -> f64 {
    if spec.key_points.is_empty() {
        return 0.0;
    }
    let total: f64 = spec.key_points.iter().map(|&p| point_polyline_distance(p, crack)).sum();
    total / spec.key_points.len() as f64
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintReport {
    pub violations: Vec<String>,
}

impl ConstraintReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Strict feasibility of `design` inside `space` and clear of
/// `fixed_holes` and of each other.
pub fn constraints_ok(design: &Design, space: &Rect, fixed_holes: &[Circle]) -> ConstraintReport {
    let mut violations = Vec::new();
    for (i, h) in design.holes.iter().enumerate() {
        let (c, r) = (h.center, h.radius);
        if !(r > 0.0) {
            violations.push(format!("hole {i}: radius {r} not positive"));
        }
        if !(space.x_min + r < c.x && c.x < space.x_max - r) {
            violations.push(format!("hole {i}: x = {:.6} outside ({:.6}, {:.6})", c.x, space.x_min + r, space.x_max - r));
        }
        if !(space.y_min + r < c.y && c.y < space.y_max - r) {
            violations.push(format!("hole {i}: y = {:.6} outside ({:.6}, {:.6})", c.y, space.y_min + r, space.y_max - r));
        }
        for (j, f) in fixed_holes.iter().enumerate() {
            if !(c.dist(f.center) > r + f.radius) {
                violations.push(format!("hole {i} overlaps fixed hole {j}"));
            }
        }
        for (j, o) in design.holes.iter().enumerate().skip(i + 1) {
            if !(c.dist(o.center) > r + o.radius) {
                violations.push(format!("hole {i} overlaps hole {j}"));
            }
        }
    }
    ConstraintReport { violations }
}

pub fn write_path_csv<W: Write>(mut w: W, crack: &Polyline) -> io::Result<()> {
    writeln!(w, "step,x_mm,y_mm")?;
    for (i, p) in crack.vertices().iter().enumerate() {
        writeln!(w, "{i},{:.9},{:.9}", p.x, p.y)?;
    }
    Ok(())
}

pub fn write_steps_csv<W: Write>(mut w: W, steps: &[StepRecord]) -> io::Result<()> {
    writeln!(w, "step,KI,KII,theta_rad,solve_ms")?;
    for s in steps {
        writeln!(w, "{},{:.9e},{:.9e},{:.12e},{:.3}", s.step, s.k1, s.k2, s.theta, s.solve_ms)?;
    }
    Ok(())
}

pub fn write_fields_csv<W: Write>(mut w: W, fields: &NodalFields) -> io::Result<()> {
    writeln!(w, "node,x_mm,y_mm,ux_mm,uy_mm,von_mises_mpa")?;
    for (i, ((p, u), vm)) in fields.position.iter().zip(&fields.displacement).zip(&fields.von_mises).enumerate() {
        writeln!(w, "{i},{:.6},{:.6},{:.9e},{:.9e},{:.6e}", p.x, p.y, u.x, u.y, vm)?;
    }
    Ok(())
}

pub fn write_verify_csv<W: Write>(mut w: W, rows: &[VerifyRow]) -> io::Result<()> {
    writeln!(w, "step,disp_rel_err,stress_rel_err,t_full_ms,t_dur_ms")?;
    for r in rows {
        writeln!(w, "{},{:.3e},{:.3e},{:.3},{:.3}", r.step, r.disp_rel_err, r.stress_rel_err, r.t_full_ms, r.t_dur_ms)?;
    }
    Ok(())
}
