//! Probabilistic solvers for `Y_t = xi + ∫_t^τ f(Y_r) dr - ∫_t^τ Z_r dB_r`
//! with `xi = g(X_τ)` and `f(y) <= -kappa y^{1+q}`.
//!
//! * [`xi_lower_bound`]: Monte Carlo mean of the deterministic flow started
//!   from `xi ∧ n` and run for the exit time, a lower bound for `Y_0`;
//! * [`solve_regression`]: backward induction on the simulated paths with
//!   implicit generator steps and binned conditional expectations;
//! * [`ladder_run`]: the truncation ladder `n -> Y_0^n` on common paths;
//! * [`phi_residual`]: the nonnegative defect in `1/Y_0^q = E[qτ + 1/(xi∧n)^q] - Phi_0`;
//! * [`weighted_z_diagnostic`]: `E ∫ |Z|^2 rho^{4/q+eps}` from the regression slopes.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closedform::{f_transform, f_transform_inverse, majorant_value, GeneratorSpec, MajorantSpec};
use crate::diffusion::{simulate_batch, CoefficientField, McEstimate, PathBatch, StepConfig, DEFAULT_UNEXITED_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryData, Domain, Location};

/// Residual tolerance of [`implicit_step`], relative to `max(1, target)`.
pub const IMPLICIT_STEP_TOL: f64 = 1e-12;

/// Solves `y - dt f(y) = target` for `y >= 0`.
///
/// The left side is strictly increasing, so the root is unique and lies in
/// `[0, target]`. Newton from `target` with a bisection fallback.
pub fn implicit_step(gen: &GeneratorSpec, dt: f64, target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    if target.is_infinite() {
        return f64::INFINITY;
    }
    let tol = IMPLICIT_STEP_TOL * target.max(1.0);
    let g = |y: f64| y - dt * gen.eval(y) - target;
    let (mut lo, mut hi) = (0.0, target);
    let mut y = target;
    for _ in 0..200 {
        let r = g(y);
        if r.abs() <= tol {
            return y;
        }
        if r > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let slope = 1.0 - dt * gen.derivative(y);
        let mut next = y - r / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == y {
            return y;
        }
        y = next;
    }
    y
}

/// Runs the implicit scheme on the pure ODE `dY = -f(Y) dt`, `Y_T = xi`.
pub fn solve_pure_ode(gen: &GeneratorSpec, xi: f64, horizon: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(Error::Precondition(format!("need dt > 0 and horizon >= 0, got {dt}, {horizon}")));
    }
    let steps = (horizon / dt).round() as usize;
    if ((steps as f64) * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::Precondition(format!("dt {dt} does not divide horizon {horizon}")));
    }
    let mut y = xi;
    for _ in 0..steps {
        y = implicit_step(gen, dt, y);
    }
    Ok(y)
}

/// `F^{-1}(F(xi) + tau)`; the closed form `(kappa q tau + xi^{-q})^{-1/q}` for the power kind.
fn flow_value(gen: &GeneratorSpec, xi: f64, tau: f64) -> Result<f64> {
    match gen {
        GeneratorSpec::Power { q, kappa } => Ok((kappa * q * tau + xi.powf(-q)).powf(-1.0 / q)),
        GeneratorSpec::Tabulated { .. } => {
            if tau == 0.0 {
                return Ok(xi);
            }
            let fx = if xi.is_infinite() { 0.0 } else { f_transform(gen, xi)? };
            f_transform_inverse(gen, fx + tau)
        }
    }
}

/// Monte Carlo estimate of `Xi_0 = E[F^{-1}(F(g(X_τ) ∧ n) + τ)]`; for the
/// power generator with `kappa = 1` this is `E[(q τ + (g ∧ n)^{-q})^{-1/q}]`.
/// Paths truncated at `t_max` contribute `0`, which keeps the estimate a lower bound.
#[allow(clippy::too_many_arguments)]
pub fn xi_lower_bound(
    gen: &GeneratorSpec,
    field: &CoefficientField,
    domain: &Domain,
    boundary: &BoundaryData,
    x: &[f64],
    truncation: f64,
    steps: StepConfig,
    n_paths: usize,
    seed: u64,
    unexited_threshold: f64,
) -> Result<McEstimate> {
    if domain.contains(x)? != Location::Interior {
        return Err(Error::Precondition("xi_lower_bound needs an interior start".into()));
    }
    if !(truncation > 0.0) {
        return Err(Error::Precondition(format!("truncation must be positive, got {truncation}")));
    }
    let batch = simulate_batch(field, domain, x, StepConfig { record_states: false, ..steps }, seed, n_paths)?;
    batch.require_unexited_below(unexited_threshold)?;
    xi_from_batch(gen, boundary, truncation, &batch)
}

/// [`xi_lower_bound`] on an existing batch.
pub fn xi_from_batch(gen: &GeneratorSpec, boundary: &BoundaryData, truncation: f64, batch: &PathBatch) -> Result<McEstimate> {
    let samples = batch
        .paths
        .iter()
        .map(|p| match &p.exit_point {
            Some(e) if p.exited => flow_value(gen, boundary.truncated(e, truncation), p.tau_hat),
            _ => Ok(0.0),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_samples(samples, batch.seed))
}

const MAX_BIN_DIM: usize = 8;

/// Uniform tensor grid of bins over the bounding box of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BinGrid {
    lo: Vec<f64>,
    width: Vec<f64>,
    counts: Vec<usize>,
}

impl BinGrid {
    pub fn new(domain: &Domain, counts: &[usize]) -> Result<Self> {
        let (lo, hi) = domain.bounding_box();
        if counts.len() != lo.len() || counts.len() > MAX_BIN_DIM || counts.iter().any(|&c| c == 0) {
            return Err(Error::Precondition(format!(
                "need one positive bin count per axis, got {counts:?} for d = {}",
                lo.len()
            )));
        }
        let width = lo.iter().zip(&hi).zip(counts).map(|((l, h), &c)| (h - l) / c as f64).collect();
        Ok(BinGrid { lo, width, counts: counts.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.counts.len() {
            let c = self.counts[k];
            let i = (((x[k] - self.lo[k]) / self.width[k]).floor().max(0.0) as usize).min(c - 1);
            idx += i * stride;
            stride *= c;
        }
        idx
    }

    pub fn center(&self, mut idx: usize) -> Vec<f64> {
        (0..self.counts.len())
            .map(|k| {
                let i = idx % self.counts[k];
                idx /= self.counts[k];
                self.lo[k] + (i as f64 + 0.5) * self.width[k]
            })
            .collect()
    }

    /// Fills empty bins (NaN) with the mean of their filled axis neighbours,
    /// sweeping until every bin holds a value. Leaves an all-empty table alone.
    pub fn fill_empty(&self, values: &mut [f64]) {
        if values.iter().all(|v| v.is_nan()) {
            return;
        }
        let d = self.counts.len();
        let mut strides = vec![1usize; d];
        for k in 1..d {
            strides[k] = strides[k - 1] * self.counts[k - 1];
        }
        loop {
            let snapshot = values.to_vec();
            let mut changed = false;
            let mut remaining = false;
            for idx in 0..values.len() {
                if !snapshot[idx].is_nan() {
                    continue;
                }
                let (mut sum, mut n) = (0.0, 0);
                for k in 0..d {
                    let i = (idx / strides[k]) % self.counts[k];
                    if i > 0 && !snapshot[idx - strides[k]].is_nan() {
                        sum += snapshot[idx - strides[k]];
                        n += 1;
                    }
                    if i + 1 < self.counts[k] && !snapshot[idx + strides[k]].is_nan() {
                        sum += snapshot[idx + strides[k]];
                        n += 1;
                    }
                }
                if n > 0 {
                    values[idx] = sum / n as f64;
                    changed = true;
                } else {
                    remaining = true;
                }
            }
            if !remaining || !changed {
                return;
            }
        }
    }

    /// Multilinear interpolation between bin centres (flat beyond the outer centres).
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        self.contract(values, x, None)
    }

    /// Gradient of the multilinear interpolant.
    pub fn gradient(&self, values: &[f64], x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.contract(values, x, Some(k));
        }
    }

    /// Sums corner values against the interpolation weights, or against the
    /// weights of the partial derivative along axis `deriv`.
    fn contract(&self, values: &[f64], x: &[f64], deriv: Option<usize>) -> f64 {
        let d = self.counts.len();
        let mut base = [0usize; MAX_BIN_DIM];
        let mut frac = [0.0; MAX_BIN_DIM];
        let mut slope = [0.0; MAX_BIN_DIM];
        for k in 0..d {
            let c = self.counts[k];
            let t = (x[k] - self.lo[k]) / self.width[k] - 0.5;
            if c == 1 || t <= 0.0 {
                base[k] = 0;
            } else if t >= (c - 1) as f64 {
                base[k] = c - 2;
                frac[k] = 1.0;
            } else {
                base[k] = t as usize;
                frac[k] = t - base[k] as f64;
                slope[k] = 1.0 / self.width[k];
            }
        }
        let mut acc = 0.0;
        'corners: for corner in 0..(1usize << d) {
            let mut idx = 0;
            let mut stride = 1;
            let mut w = 1.0;
            for k in 0..d {
                let hi = (corner >> k) & 1 == 1;
                if self.counts[k] == 1 && hi {
                    continue 'corners;
                }
                idx += (base[k] + usize::from(hi)) * stride;
                stride *= self.counts[k];
                w *= match (deriv == Some(k), hi) {
                    (false, true) => frac[k],
                    (false, false) => 1.0 - frac[k],
                    (true, true) => slope[k],
                    (true, false) => -slope[k],
                };
            }
            acc += w * values[idx];
        }
        acc
    }
}

/// Everything needed to run the backward scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsdeConfig {
    pub generator: GeneratorSpec,
    pub field: CoefficientField,
    pub domain: Domain,
    pub boundary: BoundaryData,
    pub x: Vec<f64>,
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Truncation level `n` (finite).
    pub truncation: f64,
    /// Bins per axis; defaults to 64 in 1D and 32 per axis otherwise.
    #[serde(default)]
    pub bins: Option<Vec<usize>>,
    #[serde(default = "default_unexited")]
    pub unexited_threshold: f64,
    /// Keep the regression gradients so Z diagnostics can be computed.
    #[serde(default)]
    pub estimate_z: bool,
}

fn default_unexited() -> f64 {
    DEFAULT_UNEXITED_THRESHOLD
}

impl BsdeConfig {
    fn bin_counts(&self) -> Vec<usize> {
        self.bins.clone().unwrap_or_else(|| {
            let d = self.domain.dimension();
            if d == 1 {
                vec![64]
            } else {
                vec![32; d]
            }
        })
    }

    fn steps(&self) -> StepConfig {
        StepConfig::new(self.dt, self.t_max).recording()
    }

    fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.field.validate()?;
        if self.generator.kappa() <= 0.0 {
            return Err(Error::Precondition("the BSDE solver needs kappa > 0".into()));
        }
        if !(self.truncation > 0.0 && self.truncation.is_finite()) {
            return Err(Error::Precondition(format!("truncation must be finite and positive, got {}", self.truncation)));
        }
        if self.x.len() != self.domain.dimension() {
            return Err(Error::DimensionMismatch { expected: self.domain.dimension(), got: self.x.len() });
        }
        Ok(())
    }
}

/// Per-slice value tables of the regression function.
#[derive(Debug, Clone)]
pub struct ValueSlices {
    pub grid: BinGrid,
    pub dt: f64,
    /// `values[i]` is the filled bin table at time `i dt`; slice 0 is unused
    /// (the root value is [`BsdeRun::y0_mean`]).
    pub values: Vec<Vec<f64>>,
}

impl ValueSlices {
    /// CSV dump `slice,t,bin,center_0..,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.grid.counts.len();
        write!(w, "slice,t,bin")?;
        for k in 0..d {
            write!(w, ",center_{k}")?;
        }
        writeln!(w, ",value")?;
        for (i, table) in self.values.iter().enumerate().skip(1) {
            for (b, v) in table.iter().enumerate() {
                if v.is_nan() {
                    continue;
                }
                write!(w, "{i},{},{b}", i as f64 * self.dt)?;
                for c in self.grid.center(b) {
                    write!(w, ",{c}")?;
                }
                writeln!(w, ",{v}")?;
            }
        }
        Ok(())
    }
}

/// Result of one backward-scheme run at one truncation level.
#[derive(Debug, Clone)]
pub struct BsdeRun {
    pub config: BsdeConfig,
    pub truncation: f64,
    pub y0_mean: f64,
    pub y0_stderr: f64,
    /// Same run with the upper terminal value `min(n, C/rho^{2/q})` for
    /// paths cut at `t_max`; equals `y0_mean` when every path exited.
    pub y0_upper: f64,
    pub unexited_fraction: f64,
    pub mean_exit_time: McEstimate,
    /// Per-path samples of the terminal part of the residual identity; `None`
    /// when some path ends where `g = 0`.
    pub residual_terms: Option<McEstimate>,
    pub slices: ValueSlices,
    pub batch: Arc<PathBatch>,
}

impl BsdeRun {
    pub fn level_record(&self) -> LevelRecord {
        let phi = phi_residual(self, self.config.boundary.lower_bound().min(self.truncation)).ok();
        LevelRecord {
            n: self.truncation,
            y0_mean: self.y0_mean,
            y0_stderr: self.y0_stderr,
            phi0: phi.map(|p| p.mean),
            phi0_stderr: phi.map(|p| p.standard_error),
        }
    }

    /// JSON summary with the fixed field set.
    pub fn to_json(&self, per_level: &[LevelRecord], diagnostics: serde_json::Value) -> serde_json::Value {
        let phi = phi_residual(self, self.config.boundary.lower_bound().min(self.truncation)).ok();
        serde_json::json!({
            "config": self.config,
            "y0_mean": self.y0_mean,
            "y0_stderr": self.y0_stderr,
            "unexited_fraction": self.unexited_fraction,
            "per_level": per_level,
            "phi0": phi.map(|p| serde_json::json!({"mean": p.mean, "stderr": p.standard_error})),
            "diagnostics": diagnostics,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub n: f64,
    pub y0_mean: f64,
    pub y0_stderr: f64,
    pub phi0: Option<f64>,
    pub phi0_stderr: Option<f64>,
}

/// Simulates the paths and runs the backward scheme at `config.truncation`.
pub fn solve_regression(config: &BsdeConfig) -> Result<BsdeRun> {
    config.validate()?;
    let batch = Arc::new(simulate_batch(
        &config.field,
        &config.domain,
        &config.x,
        config.steps(),
        config.seed,
        config.n_paths,
    )?);
    batch.require_unexited_below(config.unexited_threshold)?;
    let store = SliceStore::new(&batch)?;
    backward(config, batch, &store, config.truncation)
}

fn backward(config: &BsdeConfig, batch: Arc<PathBatch>, store: &SliceStore, n: f64) -> Result<BsdeRun> {
    let gen = &config.generator;
    let dt = config.dt;
    let grid = BinGrid::new(&config.domain, &config.bin_counts())?;
    let dim = config.domain.dimension();
    let q = gen.q();
    let majorant = MajorantSpec::new(
        crate::closedform::keller_osserman_constant(q, dim, crate::closedform::KellerOssermanSetting::BrownianBall)?,
        q,
    );

    let paths = &batch.paths;
    let terminal: Vec<f64> = paths
        .iter()
        .map(|p| p.exit_point.as_ref().map_or(0.0, |e| config.boundary.truncated(e, n)))
        .collect();
    // Exiting paths: exact flow over the partial last step, expressed as the
    // target whose implicit step reproduces it.
    let exit_target = paths
        .iter()
        .zip(&terminal)
        .map(|(p, &xi)| {
            if !p.exited || p.interior_steps == 0 {
                return Ok(xi);
            }
            let rest = (p.tau_hat - (p.interior_steps - 1) as f64 * dt).clamp(0.0, dt);
            let y = flow_value(gen, xi, rest)?;
            Ok(y - dt * gen.eval(y))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mean_exit_time = McEstimate::from_samples(paths.iter().map(|p| p.tau_hat), batch.seed);
    let residual_terms = residual_samples(gen, &terminal, paths.iter().map(|p| p.tau_hat), batch.seed)?;

    // Boundary start: nothing to simulate.
    if paths.iter().all(|p| p.interior_steps == 0) {
        let y = terminal[0];
        return Ok(BsdeRun {
            config: config.clone(),
            truncation: n,
            y0_mean: y,
            y0_stderr: 0.0,
            y0_upper: y,
            unexited_fraction: 0.0,
            mean_exit_time,
            residual_terms,
            slices: ValueSlices { grid, dt, values: vec![] },
            batch,
        });
    }

    let lower = sweep(config, &batch, &store, &grid, &exit_target, |_| 0.0)?;
    let unexited = batch.unexited_count();
    let y0_upper = if unexited > 0 {
        let upper_end = |p: &crate::diffusion::StoppedPath| {
            let rho = p
                .final_state
                .as_ref()
                .map_or(0.0, |s| config.domain.distance_to_boundary(s).unwrap_or(0.0));
            n.min(majorant_value(&majorant, rho) * gen.kappa().powf(-1.0 / q))
        };
        sweep(config, &batch, &store, &grid, &exit_target, upper_end)?.0
    } else {
        lower.0
    };
    let (y0_mean, y0_stderr, values) = lower;
    Ok(BsdeRun {
        config: config.clone(),
        truncation: n,
        y0_mean,
        y0_stderr,
        y0_upper,
        unexited_fraction: batch.unexited_fraction(),
        mean_exit_time,
        residual_terms,
        slices: ValueSlices { grid, dt, values },
        batch,
    })
}

/// Samples `kappa q τ + (xi∧n)^{-q}` (power kind) or `τ + F(xi∧n)` (tables).
fn residual_samples(
    gen: &GeneratorSpec,
    terminal: &[f64],
    taus: impl Iterator<Item = f64>,
    seed: u64,
) -> Result<Option<McEstimate>> {
    if terminal.iter().any(|&t| t <= 0.0) {
        return Ok(None);
    }
    let samples = terminal
        .iter()
        .zip(taus)
        .map(|(&xi, tau)| match gen {
            GeneratorSpec::Power { q, kappa } => Ok(kappa * q * tau + xi.powf(-q)),
            GeneratorSpec::Tabulated { .. } => Ok(tau + if xi.is_infinite() { 0.0 } else { f_transform(gen, xi)? }),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Some(McEstimate::from_samples(samples, seed)))
}

/// Alive-path count above which slice targets are evaluated in parallel.
const PARALLEL_MIN: usize = 4096;

type SweepResult = (f64, f64, Vec<Vec<f64>>);

/// One backward induction. `cut_value` gives the terminal value of paths
/// that reached `t_max` without exiting.
fn sweep(
    config: &BsdeConfig,
    batch: &PathBatch,
    store: &SliceStore,
    grid: &BinGrid,
    exit_value: &[f64],
    cut_value: impl Fn(&crate::diffusion::StoppedPath) -> f64,
) -> Result<SweepResult> {
    let gen = &config.generator;
    let dt = config.dt;
    let paths = &batch.paths;
    let horizon = store.horizon();
    // terminal values by position in `store.order`
    let end_value: Vec<f64> = store
        .order
        .iter()
        .map(|&id| {
            let p = &paths[id];
            if p.exited {
                exit_value[id]
            } else {
                cut_value(p)
            }
        })
        .collect();

    let nb = grid.len();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut sums = vec![0.0; nb];
    let mut counts = vec![0usize; nb];
    let mut root = (0.0, 0.0);
    let mut targets = Vec::new();
    for i in (0..horizon).rev() {
        let alive = store.alive[i];
        let alive_next = store.alive.get(i + 1).copied().unwrap_or(0);
        let next_table = &values.get(i + 1);
        let target = |pos: usize| -> f64 {
            if pos < alive_next {
                grid.interpolate(next_table.expect("slice i+1 exists"), store.state(i + 1, pos))
            } else {
                end_value[pos]
            }
        };
        if i == 0 {
            let est = McEstimate::from_samples((0..alive).map(target), batch.seed);
            let y = implicit_step(gen, dt, est.mean);
            let slope = 1.0 / (1.0 - dt * gen.derivative(y));
            root = (y, est.standard_error * slope);
            break;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        if alive >= PARALLEL_MIN {
            targets.clear();
            (0..alive).into_par_iter().map(target).collect_into_vec(&mut targets);
            for (pos, &t) in targets.iter().enumerate() {
                let b = grid.index(store.state(i, pos));
                sums[b] += t;
                counts[b] += 1;
            }
        } else {
            for pos in 0..alive {
                let b = grid.index(store.state(i, pos));
                sums[b] += target(pos);
                counts[b] += 1;
            }
        }
        let mut table: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c > 0 { implicit_step(gen, dt, s / c as f64) } else { f64::NAN })
            .collect();
        grid.fill_empty(&mut table);
        values[i] = table;
    }
    Ok((root.0, root.1, values))
}

/// Path states regrouped by time slice: slice `i` holds, contiguously, the
/// states at step `i` of the paths still inside, ordered by decreasing lifetime.
#[derive(Debug, Clone)]
pub struct SliceStore {
    dim: usize,
    /// Path indices by decreasing `interior_steps`.
    order: Vec<usize>,
    /// `alive[i]`: number of paths with `interior_steps > i`.
    alive: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl SliceStore {
    pub fn new(batch: &PathBatch) -> Result<Self> {
        let paths = &batch.paths;
        let dim = paths.first().map_or(1, |p| p.start.len());
        let mut order: Vec<usize> = (0..paths.len()).collect();
        order.sort_by(|&a, &b| paths[b].interior_steps.cmp(&paths[a].interior_steps).then(a.cmp(&b)));
        let horizon = order.first().map_or(0, |&i| paths[i].interior_steps);
        if paths.iter().any(|p| p.states.len() < p.interior_steps * dim) {
            return Err(Error::Precondition("paths were simulated without recorded states".into()));
        }
        let mut alive = vec![0usize; horizon];
        let mut k = paths.len();
        for i in 0..horizon {
            while k > 0 && paths[order[k - 1]].interior_steps <= i {
                k -= 1;
            }
            alive[i] = k;
        }
        let mut offsets = Vec::with_capacity(horizon);
        let mut total = 0;
        for &a in &alive {
            offsets.push(total);
            total += a * dim;
        }
        let mut data = vec![0.0; total];
        for (pos, &id) in order.iter().enumerate() {
            let p = &paths[id];
            for i in 0..p.interior_steps {
                let at = offsets[i] + pos * dim;
                data[at..at + dim].copy_from_slice(p.state(i));
            }
        }
        Ok(SliceStore { dim, order, alive, offsets, data })
    }

    pub fn horizon(&self) -> usize {
        self.alive.len()
    }

    #[inline]
    fn state(&self, i: usize, pos: usize) -> &[f64] {
        let at = self.offsets[i] + pos * self.dim;
        &self.data[at..at + self.dim]
    }
}

/// `Phi_0` estimate: `E[kappa q τ + (xi∧n)^{-q}] - Y_0^{-q}` for the power
/// generator (the usual identity when `kappa = 1`), `E[τ + F(xi∧n)] - F(Y_0)`
/// for tabulated generators. Requires `g ∧ n >= alpha > 0`.
pub fn phi_residual(run: &BsdeRun, alpha: f64) -> Result<McEstimate> {
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("phi_residual needs a positive lower bound alpha, got {alpha}")));
    }
    let bound = run.config.boundary.lower_bound().min(run.truncation);
    if bound < alpha {
        return Err(Error::Precondition(format!("boundary data infimum {bound} is below alpha = {alpha}")));
    }
    let terms = run
        .residual_terms
        .ok_or_else(|| Error::Precondition("terminal values vanish on some paths".into()))?;
    let gen = &run.config.generator;
    let y = run.y0_mean;
    let (root, droot) = match gen {
        GeneratorSpec::Power { q, .. } => (y.powf(-q), q * y.powf(-q - 1.0)),
        GeneratorSpec::Tabulated { .. } => (f_transform(gen, y)?, 1.0 / gen.eval(y).abs()),
    };
    let se = (terms.standard_error.powi(2) + (droot * run.y0_stderr).powi(2)).sqrt();
    Ok(McEstimate {
        mean: terms.mean - root,
        standard_error: se,
        sample_count: terms.sample_count,
        seed: terms.seed,
    })
}

/// `E ∫_0^τ |Z_r|^2 rho(X_r)^{4/q + eps} dr` with `Z = sigma^T grad Y` taken
/// from the slopes of the per-slice regression functions. Needs `eps > 1`.
pub fn weighted_z_diagnostic(run: &BsdeRun, eps: f64) -> Result<McEstimate> {
    if !(eps > 1.0) {
        return Err(Error::Precondition(format!("the weight exponent needs eps > 1, got {eps}")));
    }
    if !run.config.estimate_z {
        return Err(Error::Precondition("run was made without Z estimates".into()));
    }
    let cfg = &run.config;
    let d = cfg.domain.dimension();
    let power = 4.0 / cfg.generator.q() + eps;
    let slices = &run.slices;
    let mut grad = vec![0.0; d];
    let mut sz = vec![0.0; d];
    let samples: Vec<f64> = run
        .batch
        .paths
        .iter()
        .map(|p| {
            let mut acc = 0.0;
            for i in 1..p.interior_steps.min(slices.values.len()) {
                let x = p.state(i);
                slices.grid.gradient(&slices.values[i], x, &mut grad);
                let s = cfg.field.sigma_matrix(x);
                // Z = grad^T sigma
                for j in 0..d {
                    sz[j] = (0..d).map(|k| grad[k] * s[(k, j)]).sum();
                }
                let z2: f64 = sz.iter().map(|v| v * v).sum();
                let rho = cfg.domain.distance_to_boundary(x).unwrap_or(0.0);
                acc += z2 * rho.powf(power) * cfg.dt;
            }
            acc
        })
        .collect();
    Ok(McEstimate::from_samples(samples, run.batch.seed))
}

/// Truncation ladder on common paths.
#[derive(Debug, Clone)]
pub struct TruncationLadder {
    pub levels: Vec<f64>,
    pub runs: Vec<BsdeRun>,
    /// Indices `k` where `Y_0^{n_{k+1}} < Y_0^{n_k} - 3 * combined stderr`.
    pub monotonicity_violations: Vec<usize>,
    /// Last value once two successive relative increments fall below `tol`.
    pub stabilized: Option<f64>,
}

impl TruncationLadder {
    pub fn records(&self) -> Vec<LevelRecord> {
        self.runs.iter().map(BsdeRun::level_record).collect()
    }

    pub fn y0(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.y0_mean).collect()
    }
}

/// Default truncation levels `2^k`, `k = 0..=max_exp`.
pub fn power_of_two_levels(max_exp: u32) -> Vec<f64> {
    (0..=max_exp).map(|k| 2f64.powi(k as i32)).collect()
}

/// Runs the backward scheme at each level on one shared path batch.
pub fn ladder_run(config: &BsdeConfig, levels: &[f64], tol: f64) -> Result<TruncationLadder> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(format!("levels must be strictly increasing, got {levels:?}")));
    }
    let mut base = config.clone();
    base.truncation = levels[0];
    base.validate()?;
    let batch = Arc::new(simulate_batch(&base.field, &base.domain, &base.x, base.steps(), base.seed, base.n_paths)?);
    batch.require_unexited_below(base.unexited_threshold)?;
    let store = SliceStore::new(&batch)?;
    let mut runs = Vec::with_capacity(levels.len());
    for &n in levels {
        let mut cfg = config.clone();
        cfg.truncation = n;
        runs.push(backward(&cfg, batch.clone(), &store, n)?);
    }
    let monotonicity_violations = runs
        .windows(2)
        .enumerate()
        .filter(|(_, w)| {
            let se = (w[0].y0_stderr.powi(2) + w[1].y0_stderr.powi(2)).sqrt();
            w[1].y0_mean < w[0].y0_mean - 3.0 * se
        })
        .map(|(k, _)| k)
        .collect();
    let y: Vec<f64> = runs.iter().map(|r| r.y0_mean).collect();
    let stabilized = (2..y.len())
        .find(|&k| (y[k] - y[k - 1]).abs() < tol * y[k].abs() && (y[k - 1] - y[k - 2]).abs() < tol * y[k - 1].abs())
        .map(|k| y[k]);
    Ok(TruncationLadder {
        levels: levels.to_vec(),
        runs,
        monotonicity_violations,
        stabilized,
    })
}
