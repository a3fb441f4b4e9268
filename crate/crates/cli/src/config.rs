//! JSON run configuration: schema, defaults and cross-field validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ccp_core::geometry::{Circle, Point, Rect};
use ccp_core::mesh::Edge;
use ccp_core::metamodel::{SurrogateConfig, TrainConfig};
use ccp_core::optimizer::{CcpProblem, InnerOptimizer, PsoConfig};
use ccp_core::simulate::{Design, SimConfig, SolverMode, SpecifiedPath};
use ccp_core::xfem::{EdgeLoad, LoadSpec, Material, PlaneState, PointLoad, QuadOptions, Support, SupportTarget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateConfig {
    pub width_mm: f64,
    pub height_mm: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for PlateConfig {
    fn default() -> Self {
        Self {
            width_mm: 60.0,
            height_mm: 120.0,
            nx: 60,
            ny: 120,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneKind {
    Strain,
    Stress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub young_mpa: f64,
    pub poisson: f64,
    pub plane: PlaneKind,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            young_mpa: 7.17e4,
            poisson: 0.33,
            plane: PlaneKind::Strain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeName {
    Bottom,
    Right,
    Top,
    Left,
}

impl From<EdgeName> for Edge {
    fn from(e: EdgeName) -> Self {
        match e {
            EdgeName::Bottom => Edge::Bottom,
            EdgeName::Right => Edge::Right,
            EdgeName::Top => Edge::Top,
            EdgeName::Left => Edge::Left,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractionConfig {
    pub edge: EdgeName,
    /// Force per unit length, N/mm.
    pub traction: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointLoadConfig {
    pub at: [f64; 2],
    pub force: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportConfig {
    /// Either an edge or the node nearest to a point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<EdgeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near: Option<[f64; 2]>,
    pub fix_x: bool,
    pub fix_y: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadsConfig {
    pub tractions: Vec<TractionConfig>,
    pub point_loads: Vec<PointLoadConfig>,
    pub supports: Vec<SupportConfig>,
}

impl Default for LoadsConfig {
    fn default() -> Self {
        Self {
            tractions: vec![TractionConfig {
                edge: EdgeName::Top,
                traction: [0.0, 200.0],
            }],
            point_loads: vec![],
            supports: vec![SupportConfig {
                edge: Some(EdgeName::Bottom),
                near: None,
                fix_x: true,
                fix_y: true,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrackConfig {
    pub mouth: [f64; 2],
    pub angle_deg: f64,
    pub initial_length_mm: f64,
    pub increment_mm: f64,
    pub max_steps: usize,
    /// Interaction radius in tip-element diagonals.
    pub radius_factor: f64,
}

impl Default for CrackConfig {
    fn default() -> Self {
        Self {
            mouth: [0.0, 60.0],
            angle_deg: 0.0,
            initial_length_mm: 10.0,
            increment_mm: 1.0,
            max_steps: 30,
            radius_factor: 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    Full,
    Dur,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InnerName {
    Pso,
    BpnnPso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoSettings {
    pub particles: usize,
    pub max_generations: usize,
    pub phi1: f64,
    pub phi2: f64,
    pub inertia: f64,
    pub stall_generations: usize,
}

impl Default for PsoSettings {
    fn default() -> Self {
        let d = PsoConfig::default();
        Self {
            particles: d.particles,
            max_generations: d.max_generations,
            phi1: d.phi1,
            phi2: d.phi2,
            inertia: d.inertia,
            stall_generations: d.stall_generations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSettings {
    pub n_train: usize,
    pub n_test: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub target_mse: f64,
}

impl Default for SurrogateSettings {
    fn default() -> Self {
        let s = SurrogateConfig::default();
        Self {
            n_train: s.n_train,
            n_test: s.n_test,
            hidden: s.hidden,
            epochs: s.train.epochs,
            learning_rate: s.train.learning_rate,
            momentum: s.train.momentum,
            batch_size: s.train.batch_size,
            target_mse: s.train.target_mse,
        }
    }
}

/// Everything a run needs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub plate: PlateConfig,
    pub material: MaterialConfig,
    pub loads: LoadsConfig,
    pub crack: CrackConfig,
    /// Holes of the design to simulate, `[x, y, r]` in mm.
    pub holes: Vec<[f64; 3]>,
    /// Holes that are part of the structure and never optimized.
    pub fixed_holes: Vec<[f64; 3]>,
    pub solver: SolverName,
    pub record_fields: bool,
    pub plot: bool,
    pub target_key_points: Vec<[f64; 2]>,
    pub design_space: Option<RectConfig>,
    /// Minimum hole radius; defaults to two element sizes.
    pub min_radius_mm: Option<f64>,
    pub pso: PsoSettings,
    pub surrogate: SurrogateSettings,
    pub inner: InnerName,
    /// Fitness threshold of the adaptive hole-count loop, mm.
    pub epsilon_mm: f64,
    pub max_holes: usize,
    /// Hole count of the design space sampled by `sample`.
    pub sample_holes: usize,
    /// Dataset read by `train`; defaults to `dataset.csv` in the output
    /// directory.
    pub dataset: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            plate: PlateConfig::default(),
            material: MaterialConfig::default(),
            loads: LoadsConfig::default(),
            crack: CrackConfig::default(),
            holes: vec![],
            fixed_holes: vec![],
            solver: SolverName::Dur,
            record_fields: true,
            plot: true,
            target_key_points: vec![],
            design_space: None,
            min_radius_mm: None,
            pso: PsoSettings::default(),
            surrogate: SurrogateSettings::default(),
            inner: InnerName::Pso,
            epsilon_mm: 0.1,
            max_holes: 4,
            sample_holes: 1,
            dataset: None,
            seed: 1,
        }
    }
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg = parse_config_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        anyhow::anyhow!("field '{path}' (line {}, column {}): {inner}", inner.line(), inner.column())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn circle(v: &[f64; 3], field: &str) -> Result<Circle> {
    Circle::new(Point::new(v[0], v[1]), v[2]).with_context(|| format!("{field}: invalid hole"))
}

impl RunConfig {
    pub fn domain(&self) -> Result<Rect> {
        Rect::new(0.0, self.plate.width_mm, 0.0, self.plate.height_mm).context("plate: width and height must be positive")
    }

    /// Cross-field checks; each error names the offending field.
    pub fn validate(&self) -> Result<()> {
        let domain = self.domain()?;
        if self.plate.nx == 0 || self.plate.ny == 0 {
            bail!("plate.nx, plate.ny: element counts must be positive");
        }
        Material::new(self.material.young_mpa, self.material.poisson, PlaneState::PlaneStrain).context("material")?;
        if !(self.crack.increment_mm > 0.0) {
            bail!("crack.increment_mm: must be positive, got {}", self.crack.increment_mm);
        }
        if !(self.crack.initial_length_mm > 0.0) {
            bail!("crack.initial_length_mm: must be positive, got {}", self.crack.initial_length_mm);
        }
        if self.crack.max_steps == 0 {
            bail!("crack.max_steps: must be at least 1");
        }
        if !(self.crack.radius_factor > 0.0) {
            bail!("crack.radius_factor: must be positive");
        }
        let mouth = Point::new(self.crack.mouth[0], self.crack.mouth[1]);
        if !domain.contains(mouth, 1e-9) {
            bail!("crack.mouth: ({}, {}) lies outside the plate", mouth.x, mouth.y);
        }
        let tip = self.sim_config()?.initial_tip();
        if !domain.contains(tip, 0.0) {
            bail!("crack: initial tip ({:.3}, {:.3}) lies outside the plate", tip.x, tip.y);
        }
        for (i, s) in self.loads.supports.iter().enumerate() {
            if s.edge.is_some() == s.near.is_some() {
                bail!("loads.supports[{i}]: give exactly one of 'edge' or 'near'");
            }
            if let Some(p) = s.near {
                if !domain.contains(Point::new(p[0], p[1]), 1e-9) {
                    bail!("loads.supports[{i}].near: point lies outside the plate");
                }
            }
        }
        for (i, p) in self.loads.point_loads.iter().enumerate() {
            if !domain.contains(Point::new(p.at[0], p.at[1]), 1e-9) {
                bail!("loads.point_loads[{i}].at: point lies outside the plate");
            }
        }
        for (i, h) in self.holes.iter().enumerate() {
            circle(h, &format!("holes[{i}]"))?;
        }
        for (i, h) in self.fixed_holes.iter().enumerate() {
            circle(h, &format!("fixed_holes[{i}]"))?;
        }
        for (i, k) in self.target_key_points.iter().enumerate() {
            if !domain.contains(Point::new(k[0], k[1]), 1e-9) {
                bail!("target_key_points[{i}]: ({}, {}) lies outside the plate", k[0], k[1]);
            }
        }
        if let Some(ds) = &self.design_space {
            let r = Rect::new(ds.x_min, ds.x_max, ds.y_min, ds.y_max).context("design_space: bounds are inverted")?;
            if !domain.contains_rect(&r) {
                bail!("design_space: must lie inside the plate");
            }
        }
        if let Some(r) = self.min_radius_mm {
            if !(r > 0.0) {
                bail!("min_radius_mm: must be positive");
            }
        }
        if !(self.epsilon_mm > 0.0) {
            bail!("epsilon_mm: must be positive");
        }
        if self.max_holes == 0 {
            bail!("max_holes: must be at least 1");
        }
        if self.sample_holes == 0 {
            bail!("sample_holes: must be at least 1");
        }
        self.pso_config().validate().context("pso")?;
        self.train_config().validate().context("surrogate")?;
        if self.surrogate.n_train == 0 {
            bail!("surrogate.n_train: must be positive");
        }
        if self.surrogate.hidden.is_empty() || self.surrogate.hidden.contains(&0) {
            bail!("surrogate.hidden: layer sizes must be positive");
        }
        Ok(())
    }

    pub fn material(&self) -> Result<Material> {
        let state = match self.material.plane {
            PlaneKind::Strain => PlaneState::PlaneStrain,
            PlaneKind::Stress => PlaneState::PlaneStress,
        };
        Ok(Material::new(self.material.young_mpa, self.material.poisson, state)?)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let loads = LoadSpec {
            edge_loads: self
                .loads
                .tractions
                .iter()
                .map(|t| EdgeLoad {
                    edge: t.edge.into(),
                    traction: Point::new(t.traction[0], t.traction[1]),
                })
                .collect(),
            point_loads: self
                .loads
                .point_loads
                .iter()
                .map(|p| PointLoad {
                    at: Point::new(p.at[0], p.at[1]),
                    force: Point::new(p.force[0], p.force[1]),
                })
                .collect(),
            supports: self
                .loads
                .supports
                .iter()
                .map(|s| Support {
                    target: match (s.edge, s.near) {
                        (Some(e), _) => SupportTarget::Edge(e.into()),
                        (None, Some(p)) => SupportTarget::Near(Point::new(p[0], p[1])),
                        (None, None) => SupportTarget::Edge(Edge::Bottom),
                    },
                    fix_x: s.fix_x,
                    fix_y: s.fix_y,
                })
                .collect(),
        };
        let fixed_holes = self.fixed_holes.iter().enumerate().map(|(i, h)| circle(h, &format!("fixed_holes[{i}]"))).collect::<Result<_>>()?;
        Ok(SimConfig {
            domain: self.domain()?,
            nx: self.plate.nx,
            ny: self.plate.ny,
            material: self.material()?,
            loads,
            crack_mouth: Point::new(self.crack.mouth[0], self.crack.mouth[1]),
            crack_angle: self.crack.angle_deg.to_radians(),
            a0: self.crack.initial_length_mm,
            da: self.crack.increment_mm,
            max_steps: self.crack.max_steps,
            fixed_holes,
            solver: match self.solver {
                SolverName::Full => SolverMode::Full,
                SolverName::Dur => SolverMode::Dur,
            },
            quad: QuadOptions::default(),
            radius_factor: self.crack.radius_factor,
            record_fields: self.record_fields,
        })
    }

    pub fn design(&self) -> Result<Design> {
        Ok(Design::from_triples(&self.holes)?)
    }

    pub fn pso_config(&self) -> PsoConfig {
        PsoConfig {
            particles: self.pso.particles,
            max_generations: self.pso.max_generations,
            phi1: self.pso.phi1,
            phi2: self.pso.phi2,
            inertia: self.pso.inertia,
            stall_generations: self.pso.stall_generations,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.surrogate.epochs,
            learning_rate: self.surrogate.learning_rate,
            momentum: self.surrogate.momentum,
            batch_size: self.surrogate.batch_size,
            seed: self.seed,
            target_mse: self.surrogate.target_mse,
        }
    }

    pub fn surrogate_config(&self) -> SurrogateConfig {
        SurrogateConfig {
            n_train: self.surrogate.n_train,
            n_test: self.surrogate.n_test,
            hidden: self.surrogate.hidden.clone(),
            train: self.train_config(),
        }
    }

    pub fn inner_optimizer(&self) -> InnerOptimizer {
        match self.inner {
            InnerName::Pso => InnerOptimizer::Pso,
            InnerName::BpnnPso => InnerOptimizer::BpnnPso(self.surrogate_config()),
        }
    }

    /// Optimization problem; needs key points and a design space.
    pub fn problem(&self) -> Result<CcpProblem> {
        if self.target_key_points.is_empty() {
            bail!("target_key_points: at least one key point is required");
        }
        let ds = self.design_space.as_ref().context("design_space: required for this command")?;
        let space = Rect::new(ds.x_min, ds.x_max, ds.y_min, ds.y_max)?;
        let target = SpecifiedPath {
            key_points: self.target_key_points.iter().map(|k| Point::new(k[0], k[1])).collect(),
        };
        let mut p = CcpProblem::new(self.sim_config()?, target, space);
        if let Some(r) = self.min_radius_mm {
            p.r_min = r;
        }
        Ok(p)
    }
}
