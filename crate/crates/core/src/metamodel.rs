//! Latin hypercube sampling, a small feed-forward network surrogate and
//! surrogate-assisted swarm search.

use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::OptimError;
use crate::optimizer::{design_from_vector, pso_run, CcpProblem, CcpResult, HistoryRow, PsoConfig, SearchSpace, PENALTY};

/// Draws per row within the row's strata before falling back to the box.
const STRATUM_RETRIES: usize = 200;
/// Minimum acceptable feasible fraction of all draws.
const MIN_FEASIBLE_RATE: f64 = 0.01;
/// Draws made before the feasible fraction is judged.
const RATE_WARMUP: usize = 1000;
const MODEL_MAGIC: &str = "ccp-bpnn 1";

/// Latin hypercube of `n` rows over the box, each row accepted by
/// `feasible`. Infeasible rows are redrawn inside their strata, then
/// anywhere in the box once the stratum retries run out.
pub fn lhs_sample<F>(lower: &[f64], upper: &[f64], n: usize, feasible: F, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, OptimError>
where
    F: Fn(&[f64]) -> bool,
{
    let d = lower.len();
    if upper.len() != d || d == 0 {
        return Err(OptimError::Config("sampling bounds must be nonempty and of equal length".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
        return Err(OptimError::Config("sampling bounds must be finite with lower <= upper".into()));
    }
    let strata: Vec<Vec<usize>> = (0..d)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    // Only uniform draws over the box measure the feasible fraction.
    let mut tries = 0usize;
    let mut hits = 0usize;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = None;
        for _ in 0..STRATUM_RETRIES {
            let x: Vec<f64> = (0..d)
                .map(|k| lower[k] + (upper[k] - lower[k]) * (strata[k][i] as f64 + rng.gen::<f64>()) / n as f64)
                .collect();
            if feasible(&x) {
                row = Some(x);
                break;
            }
        }
        let row = match row {
            Some(x) => x,
            None => loop {
                let x: Vec<f64> = (0..d).map(|k| lower[k] + (upper[k] - lower[k]) * rng.gen::<f64>()).collect();
                tries += 1;
                if feasible(&x) {
                    hits += 1;
                    break x;
                }
                let rate = hits as f64 / tries as f64;
                if tries >= RATE_WARMUP && rate < MIN_FEASIBLE_RATE {
                    return Err(OptimError::Infeasible { rate, tries });
                }
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Per-feature affine map of `[min, max]` onto `[-1, 1]`. Constant
/// features map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut min: Vec<f64> = Vec::new();
        let mut max: Vec<f64> = Vec::new();
        for r in rows {
            if min.is_empty() {
                min = r.to_vec();
                max = r.to_vec();
                continue;
            }
            for (k, &v) in r.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn half_span(&self, k: usize) -> f64 {
        0.5 * (self.max[k] - self.min[k])
    }

    pub fn norm(&self, k: usize, v: f64) -> f64 {
        let s = self.half_span(k);
        if s > 0.0 {
            (v - self.min[k]) / s - 1.0
        } else {
            0.0
        }
    }

    pub fn denorm(&self, k: usize, v: f64) -> f64 {
        let s = self.half_span(k);
        if s > 0.0 {
            (v + 1.0) * s + self.min[k]
        } else {
            self.min[k]
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(k, &v)| v >= self.min[k] && v <= self.max[k])
    }
}

/// Fully connected network with tanh hidden layers and a linear scalar
/// output, operating on normalized inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    /// Per layer: row-major weights (outputs × inputs) then biases.
    params: Vec<f64>,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
}

impl Network {
    /// Xavier-uniform weights and zero biases.
    pub fn new(sizes: &[usize], input_norm: Normalizer, output_norm: Normalizer, rng: &mut ChaCha8Rng) -> Result<Self, OptimError> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) || *sizes.last().unwrap() != 1 {
            return Err(OptimError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        if input_norm.dim() != sizes[0] || output_norm.dim() != 1 {
            return Err(OptimError::Config("normalizer dimensions do not match the layers".into()));
        }
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.gen_range(-a..a)));
            params.extend(std::iter::repeat(0.0).take(w[1]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            input_norm,
            output_norm,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let o = off;
            off += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    /// Activations of every layer for a normalized input.
    fn activations(&self, xn: &[f64]) -> Vec<Vec<f64>> {
        let last = self.sizes.len() - 2;
        let mut acts = vec![xn.to_vec()];
        for (l, (off, n_in, n_out)) in self.layers().enumerate() {
            let a = acts.last().unwrap();
            let (w, b) = self.params[off..off + n_in * n_out + n_out].split_at(n_in * n_out);
            let z: Vec<f64> = (0..n_out)
                .map(|j| {
                    let s: f64 = w[j * n_in..(j + 1) * n_in].iter().zip(a).map(|(wi, ai)| wi * ai).sum();
                    let z = s + b[j];
                    if l == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(z);
        }
        acts
    }

    pub fn forward_normalized(&self, xn: &[f64]) -> f64 {
        self.activations(xn).last().unwrap()[0]
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(k, &v)| self.input_norm.norm(k, v)).collect()
    }

    /// Predicted fitness in physical units.
    pub fn forward(&self, x: &[f64]) -> f64 {
        self.output_norm.denorm(0, self.forward_normalized(&self.normalize_input(x)))
    }

    /// Mean squared error over a normalized batch and its gradient with
    /// respect to the flat parameter vector.
    pub fn gradient(&self, batch: &[(Vec<f64>, f64)]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let m = batch.len() as f64;
        let layers: Vec<_> = self.layers().collect();
        for (xn, yn) in batch {
            let acts = self.activations(xn);
            let e = acts.last().unwrap()[0] - yn;
            loss += e * e / m;
            let mut delta = vec![2.0 * e / m];
            for (l, &(off, n_in, n_out)) in layers.iter().enumerate().rev() {
                let a = &acts[l];
                for j in 0..n_out {
                    for i in 0..n_in {
                        grad[off + j * n_in + i] += delta[j] * a[i];
                    }
                    grad[off + n_in * n_out + j] += delta[j];
                }
                if l == 0 {
                    break;
                }
                delta = (0..n_in)
                    .map(|i| {
                        let s: f64 = (0..n_out).map(|j| self.params[off + j * n_in + i] * delta[j]).sum();
                        s * (1.0 - a[i] * a[i])
                    })
                    .collect();
            }
        }
        (loss, grad)
    }

    fn mse(&self, batch: &[(Vec<f64>, f64)]) -> f64 {
        batch.iter().map(|(x, y)| (self.forward_normalized(x) - y).powi(2)).sum::<f64>() / batch.len() as f64
    }

    /// Plain-text model file:
    /// `ccp-bpnn 1`, `layers <sizes>`, `activation tanh`,
    /// `input_min <d>`, `input_max <d>`, `output_min <1>`, `output_max <1>`,
    /// then per layer `weights <row-major out×in>` and `biases <out>`.
    pub fn save<W: Write>(&self, mut w: W) -> io::Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        writeln!(w, "{MODEL_MAGIC}")?;
        writeln!(w, "layers {}", self.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "))?;
        writeln!(w, "activation tanh")?;
        writeln!(w, "input_min {}", join(&self.input_norm.min))?;
        writeln!(w, "input_max {}", join(&self.input_norm.max))?;
        writeln!(w, "output_min {}", join(&self.output_norm.min))?;
        writeln!(w, "output_max {}", join(&self.output_norm.max))?;
        for (off, n_in, n_out) in self.layers() {
            writeln!(w, "weights {}", join(&self.params[off..off + n_in * n_out]))?;
            writeln!(w, "biases {}", join(&self.params[off + n_in * n_out..off + n_in * n_out + n_out]))?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self, OptimError> {
        let bad = |m: String| OptimError::Config(format!("model file: {m}"));
        let lines: Vec<String> = r.lines().collect::<Result<_, _>>().map_err(|e| bad(e.to_string()))?;
        let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
        if it.next() != Some(MODEL_MAGIC) {
            return Err(bad("unsupported header".into()));
        }
        let mut field = |key: &str| -> Result<Vec<String>, OptimError> {
            let line = it.next().ok_or_else(|| bad(format!("missing '{key}'")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(format!("expected '{key}', found '{line}'")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let floats = |v: Vec<String>| -> Result<Vec<f64>, OptimError> {
            v.iter().map(|s| s.parse::<f64>().map_err(|e| bad(format!("'{s}': {e}")))).collect()
        };
        let sizes: Vec<usize> = field("layers")?
            .iter()
            .map(|s| s.parse().map_err(|e| bad(format!("'{s}': {e}"))))
            .collect::<Result<_, _>>()?;
        let act = field("activation")?;
        if act != ["tanh"] {
            return Err(bad(format!("unsupported activation {act:?}")));
        }
        let input_norm = Normalizer {
            min: floats(field("input_min")?)?,
            max: floats(field("input_max")?)?,
        };
        let output_norm = Normalizer {
            min: floats(field("output_min")?)?,
            max: floats(field("output_max")?)?,
        };
        if sizes.len() < 2 || input_norm.dim() != sizes[0] || input_norm.max.len() != sizes[0] || output_norm.max.len() != 1 || output_norm.dim() != 1 {
            return Err(bad("layer sizes and normalizers disagree".into()));
        }
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let weights = floats(field("weights")?)?;
            let biases = floats(field("biases")?)?;
            if weights.len() != w[0] * w[1] || biases.len() != w[1] {
                return Err(bad(format!("layer {}x{} has wrong parameter count", w[1], w[0])));
            }
            params.extend(weights);
            params.extend(biases);
        }
        Ok(Self {
            sizes,
            params,
            input_norm,
            output_norm,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Training stops once the epoch loss (normalized scale) reaches this.
    pub target_mse: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            seed: 7,
            target_mse: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let ok = self.epochs > 0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.batch_size > 0
            && self.target_mse >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(OptimError::Config(format!("invalid training settings {self:?}")))
        }
    }
}

/// Mini-batch gradient descent with momentum on raw `(x, y)` rows, using
/// the network's normalizers. Returns the per-epoch training loss.
pub fn train(net: &mut Network, data: &[(Vec<f64>, f64)], cfg: &TrainConfig) -> Result<Vec<f64>, OptimError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(OptimError::Config("training set is empty".into()));
    }
    let norm: Vec<(Vec<f64>, f64)> = data.iter().map(|(x, y)| (net.normalize_input(x), net.output_norm.norm(0, *y))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..norm.len()).collect();
    let mut velocity = vec![0.0; net.params.len()];
    let initial = net.mse(&norm);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Vec<f64>, f64)> = chunk.iter().map(|&i| norm[i].clone()).collect();
            let (_, g) = net.gradient(&batch);
            for ((p, v), gi) in net.params.iter_mut().zip(&mut velocity).zip(&g) {
                *v = cfg.momentum * *v - cfg.learning_rate * gi;
                *p += *v;
            }
        }
        let loss = net.mse(&norm);
        if !loss.is_finite() || loss > 10.0 * initial.max(f64::MIN_POSITIVE) {
            return Err(OptimError::Diverged { epoch, loss, initial });
        }
        history.push(loss);
        if loss <= cfg.target_mse {
            break;
        }
    }
    Ok(history)
}

/// Normalizers fitted to `data`, fresh weights, then [`train`].
pub fn fit_network(data: &[(Vec<f64>, f64)], hidden: &[usize], cfg: &TrainConfig) -> Result<(Network, Vec<f64>), OptimError> {
    let first = data.first().ok_or_else(|| OptimError::Config("training set is empty".into()))?;
    let mut sizes = vec![first.0.len()];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let input_norm = Normalizer::fit(data.iter().map(|(x, _)| x.as_slice()));
    let ys: Vec<[f64; 1]> = data.iter().map(|(_, y)| [*y]).collect();
    let output_norm = Normalizer::fit(ys.iter().map(|y| y.as_slice()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::new(&sizes, input_norm, output_norm, &mut rng)?;
    let history = train(&mut net, data, cfg)?;
    Ok((net, history))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `None` when the actual values have zero variance.
    pub r2: Option<f64>,
    pub rmse: f64,
}

pub fn regression_metrics(pred: &[f64], actual: &[f64]) -> Result<Metrics, OptimError> {
    if pred.len() != actual.len() || pred.len() < 2 {
        return Err(OptimError::Config("metrics need two equal-length series of at least 2 values".into()));
    }
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    Ok(Metrics {
        r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        rmse: (ss_res / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "TRAIN",
            Split::Test => "TEST",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn rows(&self, which: Split) -> Vec<(Vec<f64>, f64)> {
        (0..self.targets.len())
            .filter(|&i| self.split[i] == which)
            .map(|i| (self.inputs[i].clone(), self.targets[i]))
            .collect()
    }
}

/// Column names `x1_mm,y1_mm,r1_mm,…` for hole designs, `v1,…` otherwise.
pub fn design_columns(dim: usize) -> Vec<String> {
    if dim % 3 == 0 {
        (1..=dim / 3).flat_map(|k| [format!("x{k}_mm"), format!("y{k}_mm"), format!("r{k}_mm")]).collect()
    } else {
        (1..=dim).map(|k| format!("v{k}")).collect()
    }
}

pub fn write_dataset_csv<W: Write>(mut w: W, ds: &Dataset) -> io::Result<()> {
    let dim = ds.inputs.first().map_or(0, |x| x.len());
    writeln!(w, "{},fitness_mm,split", design_columns(dim).join(","))?;
    for i in 0..ds.targets.len() {
        let xs: Vec<String> = ds.inputs[i].iter().map(|v| format!("{v:.9e}")).collect();
        writeln!(w, "{},{:.9e},{}", xs.join(","), ds.targets[i], ds.split[i].label())?;
    }
    Ok(())
}

pub fn read_dataset_csv<R: BufRead>(r: R) -> Result<Dataset, OptimError> {
    let bad = |line: usize, m: String| OptimError::Config(format!("dataset line {line}: {m}"));
    let mut ds = Dataset::default();
    let mut width = None;
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| bad(i + 1, e.to_string()))?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() < 3 || *width.get_or_insert(cols.len()) != cols.len() {
            return Err(bad(i + 1, "wrong column count".into()));
        }
        let nums: Vec<f64> = cols[..cols.len() - 1]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| bad(i + 1, format!("'{s}': {e}"))))
            .collect::<Result<_, _>>()?;
        let split = match cols[cols.len() - 1] {
            "TRAIN" => Split::Train,
            "TEST" => Split::Test,
            s => return Err(bad(i + 1, format!("unknown split '{s}'"))),
        };
        let (y, x) = nums.split_last().unwrap();
        if !y.is_finite() {
            return Err(bad(i + 1, "non-finite target".into()));
        }
        ds.inputs.push(x.to_vec());
        ds.targets.push(*y);
        ds.split.push(split);
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_test: 500,
            hidden: vec![5, 5],
            train: TrainConfig::default(),
        }
    }
}

/// LHS rows of the space evaluated with `fitness`; rows whose evaluation
/// is non-finite or penalized are dropped. The first `n_train` kept rows
/// form the training split.
pub fn build_dataset<S, F>(space: &S, fitness: &F, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset, OptimError>
where
    S: SearchSpace + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (lo, hi) = space.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = lhs_sample(&lo, &hi, n_train + n_test, |x| space.feasible(x), &mut rng)?;
    let targets: Vec<f64> = inputs.par_iter().map(|x| fitness(x)).collect();
    let mut ds = Dataset::default();
    for (x, y) in inputs.into_iter().zip(targets) {
        if !y.is_finite() || y >= PENALTY {
            warn!("dropping sample {x:?}: evaluation failed");
            continue;
        }
        let split = if ds.targets.len() < n_train { Split::Train } else { Split::Test };
        ds.inputs.push(x);
        ds.targets.push(y);
        ds.split.push(split);
    }
    Ok(ds)
}

/// Outcome of a surrogate-assisted search on an abstract problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOutcome {
    pub best_position: Vec<f64>,
    pub predicted: f64,
    pub true_fitness: f64,
    pub history: Vec<HistoryRow>,
    pub true_evals: usize,
    pub surrogate_evals: usize,
    pub test_metrics: Option<Metrics>,
    pub modeling_ms: f64,
    pub optimization_ms: f64,
}

/// Sample, evaluate, build a model with `make_model`, search the model and
/// verify its optimum once with `fitness`.
pub fn surrogate_search<S, F, M, B>(space: &S, fitness: &F, make_model: B, sc: &SurrogateConfig, cfg: &PsoConfig, seeds: &[Vec<f64>], holes: usize) -> Result<SurrogateOutcome, OptimError>
where
    S: SearchSpace + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
    M: Fn(&[f64]) -> f64 + Sync,
    B: FnOnce(&Dataset) -> Result<M, OptimError>,
{
    if sc.n_train == 0 {
        return Err(OptimError::Config("n_train must be positive".into()));
    }
    let true_calls = AtomicUsize::new(0);
    let counted = |x: &[f64]| {
        true_calls.fetch_add(1, Ordering::Relaxed);
        fitness(x)
    };
    let t0 = Instant::now();
    let ds = build_dataset(space, &counted, sc.n_train, sc.n_test, cfg.seed ^ 0x5eed)?;
    let model = make_model(&ds)?;
    let test = ds.rows(Split::Test);
    let test_metrics = if test.len() >= 2 {
        let pred: Vec<f64> = test.iter().map(|(x, _)| model(x)).collect();
        let actual: Vec<f64> = test.iter().map(|(_, y)| *y).collect();
        Some(regression_metrics(&pred, &actual)?)
    } else {
        None
    };
    match test_metrics.and_then(|m| m.r2) {
        Some(r2) if r2 < 0.5 => warn!("surrogate is unreliable: test R² = {r2:.3}"),
        None => warn!("surrogate test R² is unavailable"),
        _ => {}
    }
    let modeling_ms = t0.elapsed().as_secs_f64() * 1e3;
    let sampled = true_calls.load(Ordering::Relaxed);

    let t1 = Instant::now();
    let out = pso_run(&model, space, cfg, seeds)?;
    debug_assert_eq!(true_calls.load(Ordering::Relaxed), sampled);
    let true_fitness = counted(&out.best_position);
    let optimization_ms = t1.elapsed().as_secs_f64() * 1e3;
    let history = out
        .history
        .iter()
        .map(|g| HistoryRow {
            generation: g.generation,
            holes,
            gbest: g.gbest,
            true_evals: sampled,
            surrogate_evals: g.evaluations,
        })
        .collect();
    Ok(SurrogateOutcome {
        best_position: out.best_position,
        predicted: out.best_fitness,
        true_fitness,
        history,
        true_evals: true_calls.load(Ordering::Relaxed),
        surrogate_evals: out.evaluations,
        test_metrics,
        modeling_ms,
        optimization_ms,
    })
}

/// Network-assisted search over `n` holes.
pub fn surrogate_pso(problem: &CcpProblem, n: usize, sc: &SurrogateConfig, cfg: &PsoConfig, seeds: &[Vec<f64>]) -> Result<CcpResult, OptimError> {
    let space = problem.hole_space(n)?;
    let calls = AtomicUsize::new(0);
    let f = problem.fitness_fn(&calls);
    let make = |ds: &Dataset| -> Result<_, OptimError> {
        let (net, _) = fit_network(&ds.rows(Split::Train), &sc.hidden, &sc.train)?;
        Ok(move |x: &[f64]| net.forward(x))
    };
    let out = surrogate_search(&space, &f, make, sc, cfg, seeds, n)?;
    let best = design_from_vector(&out.best_position).ok_or(OptimError::Infeasible { rate: 0.0, tries: 0 })?;
    Ok(CcpResult {
        best,
        c_min: out.true_fitness,
        predicted: Some(out.predicted),
        holes: n,
        converged: false,
        history: out.history,
        true_evals: out.true_evals,
        surrogate_evals: out.surrogate_evals,
        per_count: vec![(n, out.true_fitness)],
        surrogate_r2: out.test_metrics.and_then(|m| m.r2).into_iter().collect(),
        modeling_ms: out.modeling_ms,
        optimization_ms: out.optimization_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::BoxSpace;

    fn random_net(rng: &mut ChaCha8Rng, d: usize) -> Network {
        let norm = Normalizer {
            min: vec![-1.0; d],
            max: vec![1.0; d],
        };
        let out = Normalizer {
            min: vec![-1.0],
            max: vec![1.0],
        };
        let mut net = Network::new(&[d, 5, 5, 1], norm, out, rng).unwrap();
        for p in net.params_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        net
    }

    fn random_batch(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Vec<(Vec<f64>, f64)> {
        (0..m).map(|_| ((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn lhs_places_one_point_per_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = lhs_sample(&[0.0], &[1.0], 4, |_| true, &mut rng).unwrap();
        let mut bins: Vec<usize> = rows.iter().map(|r| (r[0] * 4.0) as usize).collect();
        bins.sort();
        assert_eq!(bins, vec![0, 1, 2, 3]);

        let rows = lhs_sample(&[0.0, -1.0, 5.0], &[1.0, 1.0, 6.0], 1000, |_| true, &mut rng).unwrap();
        for k in 0..3 {
            let (lo, w) = [(0.0, 1.0), (-1.0, 2.0), (5.0, 1.0)][k];
            let mut bins: Vec<usize> = rows.iter().map(|r| ((r[k] - lo) / w * 1000.0) as usize).collect();
            bins.sort();
            assert_eq!(bins, (0..1000).collect::<Vec<_>>());
        }
    }

    #[test]
    fn lhs_respects_constraints_and_rejects_empty_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = lhs_sample(&[0.0, 0.0], &[1.0, 1.0], 200, |x| x[0] + x[1] < 1.0, &mut rng).unwrap();
        assert_eq!(rows.len(), 200);
        assert!(rows.iter().all(|x| x[0] + x[1] < 1.0));
        let err = lhs_sample(&[0.0], &[1.0], 10, |_| false, &mut rng).unwrap_err();
        assert!(matches!(err, OptimError::Infeasible { .. }));
    }

    #[test]
    fn zero_weights_output_the_denormalized_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = random_net(&mut rng, 2);
        net.output_norm = Normalizer {
            min: vec![10.0],
            max: vec![20.0],
        };
        let n = net.params().len();
        for p in net.params_mut() {
            *p = 0.0;
        }
        net.params_mut()[n - 1] = 0.5;
        assert_eq!(net.forward(&[0.3, -0.7]), 17.5);
    }

    #[test]
    fn hand_evaluated_small_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let unit = || Normalizer {
            min: vec![-1.0],
            max: vec![1.0],
        };
        let mut net = Network::new(&[1, 2, 1], unit(), unit(), &mut rng).unwrap();
        // hidden: w = [0.5, -0.25], b = [0.1, 0.2]; output: w = [1.5, 2.0], b = -0.3
        net.params_mut().copy_from_slice(&[0.5, -0.25, 0.1, 0.2, 1.5, 2.0, -0.3]);
        let x = 0.4;
        let expected = 1.5 * (0.5 * x + 0.1f64).tanh() + 2.0 * (-0.25 * x + 0.2f64).tanh() - 0.3;
        let y = net.forward(&[x]);
        assert!((y - expected).abs() < 1e-12);
        assert_eq!(y.to_bits(), net.forward(&[x]).to_bits());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..20 {
            let d = 1 + case % 4;
            let mut net = random_net(&mut rng, d);
            let batch = random_batch(&mut rng, d, 1 + case % 7);
            let (_, g) = net.gradient(&batch);
            let step = 1e-6;
            let mut fd = vec![0.0; g.len()];
            for i in 0..g.len() {
                let p = net.params()[i];
                net.params_mut()[i] = p + step;
                let up = net.mse(&batch);
                net.params_mut()[i] = p - step;
                let dn = net.mse(&batch);
                net.params_mut()[i] = p;
                fd[i] = (up - dn) / (2.0 * step);
            }
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / norm < 1e-6, "case {case}: {}", diff / norm);
        }
    }

    #[test]
    fn gradient_vanishes_on_exact_fit_and_scales_with_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = random_net(&mut rng, 3);
        let x = vec![0.1, -0.2, 0.3];
        let y = net.forward_normalized(&x);
        let (loss, g) = net.gradient(&[(x.clone(), y)]);
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let (_, g1) = net.gradient(&[(x.clone(), y - 0.1)]);
        let (_, g2) = net.gradient(&[(x, y - 0.3)]);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((3.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn fits_identity() {
        let data: Vec<(Vec<f64>, f64)> = (0..100).map(|i| (vec![i as f64 / 99.0], i as f64 / 99.0)).collect();
        let (net, history) = fit_network(&data, &[5, 5], &TrainConfig::default()).unwrap();
        let mse: f64 = data.iter().map(|(x, y)| (net.forward(x) - y).powi(2)).sum::<f64>() / 100.0;
        assert!(mse < 1e-4, "{mse}");
        // Mini-batch noise makes single epochs jitter; the 10-epoch moving
        // average sampled every 100 epochs must not rise.
        let avg: Vec<f64> = history.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).step_by(100).collect();
        assert!(avg.windows(2).all(|w| w[1] <= w[0]), "{avg:?}");
    }

    #[test]
    fn fits_smooth_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = |x: &[f64]| 1.0 + x[0] * x[0] + 0.5 * x[1] - 0.8 * x[1] * x[2] + 0.3 * x[2] * x[2];
        let rows = lhs_sample(&[-1.0; 3], &[1.0; 3], 1500, |_| true, &mut rng).unwrap();
        let data: Vec<(Vec<f64>, f64)> = rows.iter().map(|x| (x.clone(), f(x))).collect();
        let (net, _) = fit_network(&data[..1000], &[5, 5], &TrainConfig::default()).unwrap();
        let pred: Vec<f64> = data[1000..].iter().map(|(x, _)| net.forward(x)).collect();
        let actual: Vec<f64> = data[1000..].iter().map(|(_, y)| *y).collect();
        let m = regression_metrics(&pred, &actual).unwrap();
        assert!(m.r2.unwrap() > 0.95, "{m:?}");
    }

    #[test]
    fn training_is_reproducible_and_divergence_is_reported() {
        let data: Vec<(Vec<f64>, f64)> = (0..50).map(|i| (vec![i as f64], (i as f64).sin())).collect();
        let cfg = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let a = fit_network(&data, &[5, 5], &cfg).unwrap();
        let b = fit_network(&data, &[5, 5], &cfg).unwrap();
        assert_eq!(a, b);
        let hot = TrainConfig {
            learning_rate: 50.0,
            ..cfg
        };
        assert!(matches!(fit_network(&data, &[5, 5], &hot), Err(OptimError::Diverged { .. })));
    }

    #[test]
    fn metrics_examples() {
        let m = regression_metrics(&[0.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((m.rmse - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((m.r2.unwrap() - 0.5).abs() < 1e-15);
        let m = regression_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((m.r2, m.rmse), (Some(1.0), 0.0));
        let m = regression_metrics(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.r2, Some(0.0));
        assert_eq!(regression_metrics(&[1.0, 2.0], &[3.0, 3.0]).unwrap().r2, None);
        assert!(regression_metrics(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn normalization_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.gen_range(-50.0..80.0)).collect()).collect();
        let n = Normalizer::fit(rows.iter().map(|r| r.as_slice()));
        for r in &rows {
            for (k, &v) in r.iter().enumerate() {
                let t = n.norm(k, v);
                assert!((-1.0..=1.0).contains(&t));
                assert!((n.denorm(k, t) - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn model_file_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut net = random_net(&mut rng, 3);
        net.input_norm = Normalizer {
            min: vec![0.1, 2.0, -3.0],
            max: vec![1.0 / 3.0, 7.5, 1e-3],
        };
        let mut buf = Vec::new();
        net.save(&mut buf).unwrap();
        let back = Network::load(&buf[..]).unwrap();
        assert_eq!(back, net);
        let mut broken = String::from_utf8(buf).unwrap().replace("biases", "bias");
        assert!(Network::load(broken.as_bytes()).is_err());
        broken = "ccp-bpnn 2\n".into();
        assert!(Network::load(broken.as_bytes()).is_err());
    }

    #[test]
    fn dataset_csv_round_trips() {
        let ds = Dataset {
            inputs: vec![vec![1.0, 2.0, 3.0], vec![4.5, 5.25, 6.125]],
            targets: vec![0.1, 0.2],
            split: vec![Split::Train, Split::Test],
        };
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &ds).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x1_mm,y1_mm,r1_mm,fitness_mm,split\n"));
        assert_eq!(read_dataset_csv(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn exact_surrogate_reproduces_plain_search() {
        let space = BoxSpace {
            lower: vec![-3.0; 2],
            upper: vec![3.0; 2],
        };
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] + 0.5).powi(2);
        let cfg = PsoConfig {
            max_generations: 40,
            ..PsoConfig::default()
        };
        let sc = SurrogateConfig {
            n_train: 30,
            n_test: 10,
            ..SurrogateConfig::default()
        };
        let out = surrogate_search(&space, &f, |_: &Dataset| Ok(f), &sc, &cfg, &[], 1).unwrap();
        let plain = pso_run(&f, &space, &cfg, &[]).unwrap();
        assert_eq!(out.best_position, plain.best_position);
        assert_eq!(out.predicted, plain.best_fitness);
        assert_eq!(out.true_fitness, plain.best_fitness);
        assert_eq!(out.true_evals, 41);
        assert_eq!(out.surrogate_evals, plain.evaluations);
    }
}
