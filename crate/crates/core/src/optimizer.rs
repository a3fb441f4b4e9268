//! Particle swarm search, design-space partitioning and the adaptive
//! hole-count loop.

use std::io::{self, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::OptimError;
use crate::geometry::{point_polyline_distance, Circle, Point, Polyline, Rect};
use crate::metamodel::{surrogate_pso, SurrogateConfig};
use crate::simulate::{constraints_ok, path_fitness, propagate, Design, SimConfig, SpecifiedPath};

/// Fitness assigned to infeasible designs, in mm.
pub const PENALTY: f64 = 1e6;
/// Clearance kept between a hole and its strip walls.
const WALL: f64 = 1e-6;
/// Improvement below which a generation counts as stalled.
const STALL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PsoConfig {
    pub particles: usize,
    pub max_generations: usize,
    pub phi1: f64,
    pub phi2: f64,
    pub inertia: f64,
    pub stall_generations: usize,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 40,
            max_generations: 200,
            phi1: 1.49445,
            phi2: 1.49445,
            inertia: 0.729,
            stall_generations: 30,
            seed: 1,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: &str| Err(OptimError::Config(m.to_string()));
        if self.particles < 2 {
            return bad("at least 2 particles are required");
        }
        if !(self.phi1 > 0.0 && self.phi2 > 0.0) {
            return bad("acceleration coefficients must be positive");
        }
        if !self.inertia.is_finite() || self.inertia < 0.0 {
            return bad("inertia must be finite and non-negative");
        }
        if self.max_generations == 0 {
            return bad("max_generations must be at least 1");
        }
        if self.stall_generations == 0 {
            return bad("stall_generations must be at least 1");
        }
        Ok(())
    }
}

/// Bounds and feasibility of a search problem.
pub trait SearchSpace: Sync {
    fn dim(&self) -> usize;
    /// Outer box containing every feasible point.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// Uniform random point satisfying the bounds.
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Projects `x` onto the bounds and zeroes the velocity of every
    /// clamped component.
    fn clamp(&self, x: &mut [f64], v: &mut [f64]);
    /// Constraints beyond the bounds; infeasible points are not evaluated.
    fn feasible(&self, _x: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchSpace for BoxSpace {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lower.clone(), self.upper.clone())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| l + (u - l) * rng.gen::<f64>()).collect()
    }

    fn clamp(&self, x: &mut [f64], v: &mut [f64]) {
        for i in 0..x.len() {
            clamp_component(&mut x[i], &mut v[i], self.lower[i], self.upper[i]);
        }
    }
}

fn clamp_component(x: &mut f64, v: &mut f64, lo: f64, hi: f64) {
    if *x < lo {
        *x = lo;
        *v = 0.0;
    } else if *x > hi {
        *x = hi;
        *v = 0.0;
    }
}

/// Equal-width vertical strips of the design space, one hole per strip.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub space: Rect,
    pub strips: Vec<Rect>,
}

impl PartitionPlan {
    pub fn n(&self) -> usize {
        self.strips.len()
    }
}

pub fn partition_design_space(space: &Rect, n: usize, r_min: f64) -> Result<PartitionPlan, OptimError> {
    if n == 0 {
        return Err(OptimError::Config("at least one subdomain is required".into()));
    }
    let w = space.width() / n as f64;
    if 0.5 * w.min(space.height()) - WALL <= r_min {
        return Err(OptimError::TooManyStrips { n, r_min });
    }
    let strips = (0..n)
        .map(|k| {
            let x0 = space.x_min + w * k as f64;
            let x1 = if k + 1 == n { space.x_max } else { space.x_min + w * (k + 1) as f64 };
            Rect::new(x0, x1, space.y_min, space.y_max).expect("strip of a valid rectangle")
        })
        .collect();
    Ok(PartitionPlan { space: *space, strips })
}

/// Hole designs `[x, y, r]` per strip, checked against the full design
/// space and pre-existing holes.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleSpace {
    pub plan: PartitionPlan,
    pub r_min: f64,
    pub fixed_holes: Vec<Circle>,
}

impl HoleSpace {
    fn r_max(strip: &Rect) -> f64 {
        0.5 * strip.width().min(strip.height()) - WALL
    }

    fn center_bounds(strip: &Rect, r: f64) -> (f64, f64, f64, f64) {
        let m = r + WALL;
        (strip.x_min + m, strip.x_max - m, strip.y_min + m, strip.y_max - m)
    }
}

impl SearchSpace for HoleSpace {
    fn dim(&self) -> usize {
        3 * self.plan.n()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for s in &self.plan.strips {
            let (x0, x1, y0, y1) = Self::center_bounds(s, self.r_min);
            lo.extend([x0, y0, self.r_min]);
            hi.extend([x1, y1, Self::r_max(s)]);
        }
        (lo, hi)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for s in &self.plan.strips {
            let r = self.r_min + (Self::r_max(s) - self.r_min) * rng.gen::<f64>();
            let (x0, x1, y0, y1) = Self::center_bounds(s, r);
            let cx = x0 + (x1 - x0) * rng.gen::<f64>();
            let cy = y0 + (y1 - y0) * rng.gen::<f64>();
            x.extend([cx, cy, r]);
        }
        x
    }

    fn clamp(&self, x: &mut [f64], v: &mut [f64]) {
        for (k, s) in self.plan.strips.iter().enumerate() {
            let i = 3 * k;
            clamp_component(&mut x[i + 2], &mut v[i + 2], self.r_min, Self::r_max(s));
            let (x0, x1, y0, y1) = Self::center_bounds(s, x[i + 2]);
            clamp_component(&mut x[i], &mut v[i], x0, x1);
            clamp_component(&mut x[i + 1], &mut v[i + 1], y0, y1);
        }
    }

    fn feasible(&self, x: &[f64]) -> bool {
        match design_from_vector(x) {
            Some(d) => constraints_ok(&d, &self.plan.space, &self.fixed_holes).ok(),
            None => false,
        }
    }
}

/// Design with one hole per `[x, y, r]` triple; `None` for a non-positive
/// radius or a ragged vector.
pub fn design_from_vector(x: &[f64]) -> Option<Design> {
    if x.len() % 3 != 0 {
        return None;
    }
    let triples: Vec<[f64; 3]> = x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    Design::from_triples(&triples).ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub fitness: f64,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Fitness evaluations performed so far (infeasible points excluded).
    pub evaluations: usize,
}

/// Fitness of each point, in order; infeasible points get the penalty.
fn evaluate_all<S, F>(space: &S, fitness: &F, points: &[Vec<f64>]) -> (Vec<f64>, usize)
where
    S: SearchSpace + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    let feasible: Vec<bool> = points.iter().map(|x| space.feasible(x)).collect();
    let values = points
        .par_iter()
        .zip(feasible.par_iter())
        .map(|(x, &ok)| if ok { fitness(x) } else { PENALTY })
        .collect();
    (values, feasible.iter().filter(|&&ok| ok).count())
}

/// Initial swarm: `seeds` first (taken as given), the rest sampled.
pub fn init_swarm<S, F>(space: &S, fitness: &F, cfg: &PsoConfig, seeds: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Swarm
where
    S: SearchSpace + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = space.dim();
    let mut positions = Vec::with_capacity(cfg.particles);
    let mut velocities = Vec::with_capacity(cfg.particles);
    for p in 0..cfg.particles {
        let other = space.sample(rng);
        let x = match seeds.get(p) {
            Some(s) => {
                assert_eq!(s.len(), dim, "seed has the wrong dimension");
                s.clone()
            }
            None => space.sample(rng),
        };
        let v: Vec<f64> = other.iter().zip(&x).map(|(o, xi)| 0.5 * (o - xi)).collect();
        positions.push(x);
        velocities.push(v);
    }
    let (values, evaluations) = evaluate_all(space, fitness, &positions);
    let particles: Vec<Particle> = positions
        .into_iter()
        .zip(velocities)
        .zip(values)
        .map(|((x, v), f)| Particle {
            best_position: x.clone(),
            best_fitness: f,
            position: x,
            velocity: v,
            fitness: f,
        })
        .collect();
    let mut best = 0;
    for (i, p) in particles.iter().enumerate() {
        if p.fitness < particles[best].fitness {
            best = i;
        }
    }
    Swarm {
        best_position: particles[best].position.clone(),
        best_fitness: particles[best].fitness,
        particles,
        evaluations,
    }
}

/// One generation: velocity and position update, clamping, evaluation and
/// best-position bookkeeping.
pub fn pso_step<S, F>(swarm: &mut Swarm, fitness: &F, space: &S, cfg: &PsoConfig, rng: &mut ChaCha8Rng)
where
    S: SearchSpace + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    let gbest = swarm.best_position.clone();
    for p in &mut swarm.particles {
        for i in 0..p.position.len() {
            let u1: f64 = rng.gen::<f64>() * cfg.phi1;
            let u2: f64 = rng.gen::<f64>() * cfg.phi2;
            p.velocity[i] = cfg.inertia * p.velocity[i] + u1 * (p.best_position[i] - p.position[i]) + u2 * (gbest[i] - p.position[i]);
            p.position[i] += p.velocity[i];
        }
        space.clamp(&mut p.position, &mut p.velocity);
    }
    let positions: Vec<Vec<f64>> = swarm.particles.iter().map(|p| p.position.clone()).collect();
    let (values, n_eval) = evaluate_all(space, fitness, &positions);
    swarm.evaluations += n_eval;
    for (p, f) in swarm.particles.iter_mut().zip(values) {
        p.fitness = f;
        if f < p.best_fitness {
            p.best_fitness = f;
            p.best_position = p.position.clone();
        }
    }
    for p in &swarm.particles {
        if p.best_fitness < swarm.best_fitness {
            swarm.best_fitness = p.best_fitness;
            swarm.best_position = p.best_position.clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub gbest: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Generation 0 is the initial swarm.
    pub history: Vec<GenerationRecord>,
    pub evaluations: usize,
}

/// Runs generations until `max_generations` or until the best fitness has
/// improved by less than 1e-6 for `stall_generations` in a row.
pub fn pso_run<S, F>(fitness: &F, space: &S, cfg: &PsoConfig, seeds: &[Vec<f64>]) -> Result<PsoOutcome, OptimError>
where
    S: SearchSpace + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut swarm = init_swarm(space, fitness, cfg, seeds, &mut rng);
    let mut history = vec![GenerationRecord {
        generation: 0,
        gbest: swarm.best_fitness,
        evaluations: swarm.evaluations,
    }];
    let mut stalled = 0;
    for generation in 1..=cfg.max_generations {
        let before = swarm.best_fitness;
        pso_step(&mut swarm, fitness, space, cfg, &mut rng);
        history.push(GenerationRecord {
            generation,
            gbest: swarm.best_fitness,
            evaluations: swarm.evaluations,
        });
        if before - swarm.best_fitness < STALL_TOL {
            stalled += 1;
            if stalled >= cfg.stall_generations {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(PsoOutcome {
        best_position: swarm.best_position,
        best_fitness: swarm.best_fitness,
        history,
        evaluations: swarm.evaluations,
    })
}

/// Hole placement for a target crack path.
#[derive(Debug, Clone, PartialEq)]
pub struct CcpProblem {
    pub sim: SimConfig,
    pub target: SpecifiedPath,
    pub space: Rect,
    pub r_min: f64,
}

impl CcpProblem {
    /// Minimum radius defaults to two element sizes.
    pub fn new(sim: SimConfig, target: SpecifiedPath, space: Rect) -> Self {
        let h = (sim.domain.width() / sim.nx as f64).max(sim.domain.height() / sim.ny as f64);
        Self {
            sim,
            target,
            space,
            r_min: 2.0 * h,
        }
    }

    pub fn hole_space(&self, n: usize) -> Result<HoleSpace, OptimError> {
        Ok(HoleSpace {
            plan: partition_design_space(&self.space, n, self.r_min)?,
            r_min: self.r_min,
            fixed_holes: self.sim.fixed_holes.clone(),
        })
    }

    /// True fitness of a feasible design.
    pub fn evaluate(&self, design: &Design) -> Result<f64, OptimError> {
        let res = propagate(design, &self.sim)?;
        Ok(path_fitness(&res.crack, &self.target))
    }

    /// Fitness function for the swarm; simulator failures are penalized.
    pub fn fitness_fn<'a>(&'a self, counter: &'a AtomicUsize) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
        move |x: &[f64]| {
            counter.fetch_add(1, Ordering::Relaxed);
            let Some(d) = design_from_vector(x) else { return PENALTY };
            match self.evaluate(&d) {
                Ok(c) => c,
                Err(e) => {
                    warn!("simulation failed for {:?}: {e}", d.to_vector());
                    PENALTY
                }
            }
        }
    }

    /// The n-hole design extended by a minimum-radius hole in the corner of
    /// the design space farthest from the target path, holes sorted by x.
    pub fn pad_design(&self, design: &Design) -> Option<Design> {
        let inset = self.r_min + 2.0 * WALL;
        let corners = [
            Point::new(self.space.x_min + inset, self.space.y_min + inset),
            Point::new(self.space.x_max - inset, self.space.y_min + inset),
            Point::new(self.space.x_min + inset, self.space.y_max - inset),
            Point::new(self.space.x_max - inset, self.space.y_max - inset),
        ];
        let guide = self.guide_path();
        let mut best: Option<(f64, Design)> = None;
        for c in corners {
            let mut holes = design.holes.clone();
            holes.push(Circle::new(c, self.r_min).ok()?);
            holes.sort_by(|a, b| a.center.x.total_cmp(&b.center.x));
            let d = Design::new(holes);
            if !constraints_ok(&d, &self.space, &self.sim.fixed_holes).ok() {
                continue;
            }
            let dist = guide.as_ref().map_or(0.0, |g| point_polyline_distance(c, g));
            if best.as_ref().map_or(true, |(b, _)| dist > *b) {
                best = Some((dist, d));
            }
        }
        best.map(|(_, d)| d)
    }

    /// Initial crack followed by the key points.
    fn guide_path(&self) -> Option<Polyline> {
        let mut v = vec![self.sim.crack_mouth, self.sim.initial_tip()];
        for &p in &self.target.key_points {
            if v.last().map_or(true, |l: &Point| l.dist(p) > 1e-9) {
                v.push(p);
            }
        }
        Polyline::new(v).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InnerOptimizer {
    Pso,
    BpnnPso(SurrogateConfig),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub generation: usize,
    pub holes: usize,
    pub gbest: f64,
    pub true_evals: usize,
    pub surrogate_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcpResult {
    pub best: Design,
    /// True fitness of `best`.
    pub c_min: f64,
    /// Surrogate prediction for `best`, when a surrogate was used.
    pub predicted: Option<f64>,
    pub holes: usize,
    pub converged: bool,
    pub history: Vec<HistoryRow>,
    pub true_evals: usize,
    pub surrogate_evals: usize,
    /// True fitness reached for each hole count tried.
    pub per_count: Vec<(usize, f64)>,
    /// Test-set R² of each surrogate trained.
    pub surrogate_r2: Vec<f64>,
    /// Wall time spent sampling and training surrogates.
    pub modeling_ms: f64,
    /// Wall time spent in swarm search and verification.
    pub optimization_ms: f64,
}

/// Plain swarm search over `n` holes with the true simulator.
pub fn ccp_pso(problem: &CcpProblem, n: usize, cfg: &PsoConfig, seeds: &[Vec<f64>]) -> Result<CcpResult, OptimError> {
    let space = problem.hole_space(n)?;
    let counter = AtomicUsize::new(0);
    let f = problem.fitness_fn(&counter);
    let t0 = Instant::now();
    let out = pso_run(&f, &space, cfg, seeds)?;
    let optimization_ms = t0.elapsed().as_secs_f64() * 1e3;
    let best = design_from_vector(&out.best_position).ok_or_else(|| OptimError::Infeasible { rate: 0.0, tries: out.evaluations })?;
    if out.best_fitness >= PENALTY {
        return Err(OptimError::Infeasible {
            rate: 0.0,
            tries: out.evaluations,
        });
    }
    let history = out
        .history
        .iter()
        .map(|g| HistoryRow {
            generation: g.generation,
            holes: n,
            gbest: g.gbest,
            true_evals: g.evaluations,
            surrogate_evals: 0,
        })
        .collect();
    Ok(CcpResult {
        best,
        c_min: out.best_fitness,
        predicted: None,
        holes: n,
        converged: false,
        history,
        true_evals: counter.load(Ordering::Relaxed),
        surrogate_evals: 0,
        per_count: vec![(n, out.best_fitness)],
        surrogate_r2: vec![],
        modeling_ms: 0.0,
        optimization_ms,
    })
}

/// Adds holes one at a time until the best fitness drops below `eps` or
/// `n_max` holes have been tried; each run is seeded with the previous
/// best design plus a minimum-radius hole.
pub fn adaptive_ccp(problem: &CcpProblem, eps: f64, inner: &InnerOptimizer, cfg: &PsoConfig, n_max: usize) -> Result<CcpResult, OptimError> {
    if !(eps > 0.0) {
        return Err(OptimError::Config("threshold must be positive".into()));
    }
    if n_max == 0 {
        return Err(OptimError::Config("maximum hole count must be at least 1".into()));
    }
    let mut total: Option<CcpResult> = None;
    for n in 1..=n_max {
        if let Err(e) = partition_design_space(&problem.space, n, problem.r_min) {
            if n == 1 {
                return Err(e);
            }
            warn!("stopping at {} holes: {e}", n - 1);
            break;
        }
        let seeds: Vec<Vec<f64>> = total
            .as_ref()
            .and_then(|t| problem.pad_design(&t.best))
            .map(|d| vec![d.to_vector()])
            .unwrap_or_default();
        let run_cfg = PsoConfig {
            seed: cfg.seed.wrapping_add(n as u64 - 1),
            ..cfg.clone()
        };
        let run = match inner {
            InnerOptimizer::Pso => ccp_pso(problem, n, &run_cfg, &seeds)?,
            InnerOptimizer::BpnnPso(sc) => surrogate_pso(problem, n, sc, &run_cfg, &seeds)?,
        };
        info!("{n} hole(s): c = {:.6} mm", run.c_min);
        let converged = run.c_min < eps;
        total = Some(match total.take() {
            None => run,
            Some(prev) => merge(prev, run),
        });
        if converged {
            total.as_mut().unwrap().converged = true;
            break;
        }
    }
    Ok(total.expect("at least one run"))
}

/// Appends `run` to `prev`, keeping the better design and a running
/// minimum in the history.
fn merge(mut prev: CcpResult, run: CcpResult) -> CcpResult {
    let offset = prev.history.last().map_or(0, |h| h.generation + 1);
    let mut floor = prev.history.last().map_or(f64::INFINITY, |h| h.gbest);
    for h in &run.history {
        floor = floor.min(h.gbest);
        prev.history.push(HistoryRow {
            generation: h.generation + offset,
            gbest: floor,
            true_evals: h.true_evals + prev.true_evals,
            surrogate_evals: h.surrogate_evals + prev.surrogate_evals,
            ..*h
        });
    }
    prev.true_evals += run.true_evals;
    prev.surrogate_evals += run.surrogate_evals;
    prev.per_count.extend(run.per_count);
    prev.surrogate_r2.extend(run.surrogate_r2);
    prev.modeling_ms += run.modeling_ms;
    prev.optimization_ms += run.optimization_ms;
    if run.c_min < prev.c_min {
        prev.best = run.best;
        prev.c_min = run.c_min;
        prev.predicted = run.predicted;
        prev.holes = run.holes;
    }
    prev
}

pub fn write_convergence_csv<W: Write>(mut w: W, history: &[HistoryRow]) -> io::Result<()> {
    writeln!(w, "generation,gbest_mm,true_evals,surrogate_evals")?;
    for h in history {
        writeln!(w, "{},{:.9e},{},{}", h.generation, h.gbest, h.true_evals, h.surrogate_evals)?;
    }
    Ok(())
}
