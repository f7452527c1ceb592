//! Euler–Maruyama simulation of the diffusion `dX = b(X) dt + sigma(X) dB`
//! killed at its first exit from the closed domain, plus Monte Carlo
//! estimators of exit-time functionals.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, path index)`, so a
//! batch is bit-identical whatever the number of worker threads.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::report::{CheckReport, Comparison};
use crate::error::{Error, Result};
use crate::geometry::{Domain, Location, Shape};

/// Default cap on the fraction of paths allowed to survive until `t_max`.
pub const DEFAULT_UNEXITED_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSpec {
    Zero,
    Constant { v: Vec<f64> },
    /// `b(x) = lambda (m - x)`
    Linear { lambda: f64, m: Vec<f64> },
    /// One-dimensional piecewise-linear profile `b(x)`, constant beyond the end nodes.
    Tabulated { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionSpec {
    Identity,
    /// `sigma = s Id`
    Scalar { s: f64 },
    Diagonal { d: Vec<f64> },
    /// Constant full matrix, row-major.
    Matrix { m: Vec<Vec<f64>> },
    /// One-dimensional piecewise-linear profile `sigma(x)`.
    Tabulated { points: Vec<(f64, f64)> },
}

/// The constants declared for conditions (B), (E) and (L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    pub k_bound: f64,
    pub alpha_ellipticity: f64,
    pub k_lipschitz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Brownian,
    ConstantDrift,
    LinearDrift,
    ScalarSigma,
    Tabulated,
    Custom,
}

/// Drift and diffusion coefficients with their declared bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub dim: usize,
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
    pub declared: DeclaredConstants,
}

fn interp(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = points.partition_point(|p| p.0 <= x) - 1;
    let ((x0, y0), (x1, y1)) = (points[i], points[i + 1]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

impl CoefficientField {
    pub fn new(dim: usize, drift: DriftSpec, diffusion: DiffusionSpec, declared: DeclaredConstants) -> Result<Self> {
        let f = CoefficientField { dim, drift, diffusion, declared };
        f.validate()?;
        Ok(f)
    }

    /// Standard Brownian motion: `b = 0`, `sigma = Id`.
    pub fn brownian(dim: usize) -> Self {
        CoefficientField {
            dim,
            drift: DriftSpec::Zero,
            diffusion: DiffusionSpec::Identity,
            declared: DeclaredConstants {
                k_bound: 1.0,
                alpha_ellipticity: 1.0,
                k_lipschitz: 0.0,
            },
        }
    }

    /// Constant drift `v` with `sigma = s Id`. `s = 0` gives deterministic transport.
    pub fn constant_drift(v: Vec<f64>, s: f64) -> Self {
        let speed = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        CoefficientField {
            dim: v.len(),
            drift: DriftSpec::Constant { v },
            diffusion: DiffusionSpec::Scalar { s },
            declared: DeclaredConstants {
                k_bound: speed + s.abs(),
                alpha_ellipticity: s * s,
                k_lipschitz: 0.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        let bad = |m: String| Err(Error::InvalidCoefficients(m));
        if d == 0 {
            return bad("dimension must be positive".into());
        }
        match &self.drift {
            DriftSpec::Constant { v } if v.len() != d => return bad("drift vector has wrong length".into()),
            DriftSpec::Linear { m, .. } if m.len() != d => return bad("drift center has wrong length".into()),
            DriftSpec::Tabulated { points } if d != 1 || points.is_empty() => {
                return bad("tabulated drift needs d = 1 and at least one node".into())
            }
            _ => {}
        }
        match &self.diffusion {
            DiffusionSpec::Diagonal { d: v } if v.len() != d => return bad("diagonal has wrong length".into()),
            DiffusionSpec::Matrix { m } if m.len() != d || m.iter().any(|r| r.len() != d) => {
                return bad("sigma matrix must be d x d".into())
            }
            DiffusionSpec::Tabulated { points } if d != 1 || points.is_empty() => {
                return bad("tabulated sigma needs d = 1 and at least one node".into())
            }
            _ => {}
        }
        if let DriftSpec::Tabulated { points } = &self.drift {
            if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                return bad("tabulated abscissae must increase".into());
            }
        }
        if let DiffusionSpec::Tabulated { points } = &self.diffusion {
            if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                return bad("tabulated abscissae must increase".into());
            }
        }
        let c = self.declared;
        if !(c.k_bound >= 0.0 && c.alpha_ellipticity >= 0.0 && c.k_lipschitz >= 0.0) {
            return bad("declared constants must be nonnegative".into());
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        match (&self.drift, &self.diffusion) {
            (DriftSpec::Zero, DiffusionSpec::Identity) => Family::Brownian,
            (DriftSpec::Tabulated { .. }, _) | (_, DiffusionSpec::Tabulated { .. }) => Family::Tabulated,
            (DriftSpec::Constant { .. }, DiffusionSpec::Identity | DiffusionSpec::Scalar { .. }) => Family::ConstantDrift,
            (DriftSpec::Linear { .. }, DiffusionSpec::Identity | DiffusionSpec::Scalar { .. }) => Family::LinearDrift,
            (DriftSpec::Zero, DiffusionSpec::Scalar { .. }) => Family::ScalarSigma,
            _ => Family::Custom,
        }
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            DriftSpec::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            DriftSpec::Constant { v } => out.copy_from_slice(v),
            DriftSpec::Linear { lambda, m } => {
                for ((o, xi), mi) in out.iter_mut().zip(x).zip(m) {
                    *o = lambda * (mi - xi);
                }
            }
            DriftSpec::Tabulated { points } => out[0] = interp(points, x[0]),
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        out
    }

    /// `out = sigma(x) z`.
    pub fn sigma_apply(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            DiffusionSpec::Identity => out.copy_from_slice(z),
            DiffusionSpec::Scalar { s } => {
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = s * zi;
                }
            }
            DiffusionSpec::Diagonal { d } => {
                for ((o, zi), di) in out.iter_mut().zip(z).zip(d) {
                    *o = di * zi;
                }
            }
            DiffusionSpec::Matrix { m } => {
                for (o, row) in out.iter_mut().zip(m) {
                    *o = row.iter().zip(z).map(|(a, b)| a * b).sum();
                }
            }
            DiffusionSpec::Tabulated { points } => out[0] = interp(points, x[0]) * z[0],
        }
    }

    /// `sigma(x)` as a dense row-major matrix.
    pub fn sigma_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match &self.diffusion {
            DiffusionSpec::Identity => DMatrix::identity(d, d),
            DiffusionSpec::Scalar { s } => DMatrix::identity(d, d) * *s,
            DiffusionSpec::Diagonal { d: v } => DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v.clone())),
            DiffusionSpec::Matrix { m } => DMatrix::from_fn(d, d, |i, j| m[i][j]),
            DiffusionSpec::Tabulated { points } => DMatrix::from_element(1, 1, interp(points, x[0])),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        match &self.diffusion {
            DiffusionSpec::Matrix { m } => m
                .iter()
                .enumerate()
                .all(|(i, r)| r.iter().enumerate().all(|(j, v)| i == j || *v == 0.0)),
            _ => true,
        }
    }

    /// Diagonal of `a = sigma sigma^*`; errors for non-diagonal `sigma`.
    pub fn diffusion_diagonal(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.is_diagonal() {
            return Err(Error::NonDiagonalDiffusion);
        }
        let s = self.sigma_matrix(x);
        Ok((0..self.dim).map(|i| s[(i, i)] * s[(i, i)]).collect())
    }
}

/// Spectral norm of `sigma` and smallest eigenvalue of `sigma sigma^*`.
fn sigma_spectrum(s: &DMatrix<f64>) -> (f64, f64) {
    let a = s * s.transpose();
    let eig = SymmetricEigen::new(a);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    (max.sqrt(), min)
}

/// Identity of the random stream driving one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub index: u64,
}

impl StreamId {
    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

/// One discretised trajectory stopped at its exit time.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppedPath {
    pub start: Vec<f64>,
    pub dt: f64,
    /// Interior states `X_0, .., X_{k}` flattened (empty unless recorded).
    pub states: Vec<f64>,
    /// Number of interior grid states (`0` for a boundary start).
    pub interior_steps: usize,
    pub tau_hat: f64,
    pub exit_point: Option<Vec<f64>>,
    pub exited: bool,
    /// Last state of a path truncated at `t_max`.
    pub final_state: Option<Vec<f64>>,
    pub stream: StreamId,
}

impl StoppedPath {
    pub fn state(&self, i: usize) -> &[f64] {
        let d = self.start.len();
        &self.states[i * d..(i + 1) * d]
    }
}

/// Time stepping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Keep the interior states (needed by the backward scheme).
    #[serde(default)]
    pub record_states: bool,
}

impl StepConfig {
    pub fn new(dt: f64, t_max: f64) -> Self {
        StepConfig { dt, t_max, record_states: false }
    }

    pub fn recording(mut self) -> Self {
        self.record_states = true;
        self
    }

    pub fn max_steps(&self) -> usize {
        ((self.t_max / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Precondition(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt) {
            return Err(Error::Precondition(format!("t_max {} must be at least dt {}", self.t_max, self.dt)));
        }
        Ok(())
    }
}

/// Simulates one path until it leaves the closed domain or reaches `t_max`.
///
/// The exit time is refined by linear interpolation of the signed distance
/// over the crossing step; the exit point is the boundary projection of the
/// interpolated crossing.
pub fn simulate_to_exit(
    field: &CoefficientField,
    domain: &Domain,
    x: &[f64],
    steps: StepConfig,
    stream: StreamId,
) -> Result<StoppedPath> {
    steps.validate()?;
    let d = domain.dimension();
    if field.dim != d {
        return Err(Error::DimensionMismatch { expected: d, got: field.dim });
    }
    let mut path = StoppedPath {
        start: x.to_vec(),
        dt: steps.dt,
        states: Vec::new(),
        interior_steps: 0,
        tau_hat: 0.0,
        exit_point: None,
        exited: false,
        final_state: None,
        stream,
    };
    match domain.contains(x)? {
        Location::Exterior => return Err(Error::StartOutside(x.to_vec())),
        Location::Boundary => {
            path.exit_point = Some(domain.project_to_boundary(x).unwrap_or_else(|_| x.to_vec()));
            path.exited = true;
            return Ok(path);
        }
        Location::Interior => {}
    }

    if let Shape::Interval { a, b } = domain.shape() {
        return simulate_interval(field, (*a, *b), x[0], steps, path);
    }

    let mut rng = stream.rng();
    let sqrt_dt = steps.dt.sqrt();
    let mut cur = x.to_vec();
    let mut next = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut sz = vec![0.0; d];
    let mut s_cur = domain.signed_distance_unchecked(&cur);
    let max_steps = steps.max_steps();
    if steps.record_states {
        path.states.reserve(d * 64);
    }

    for k in 0..max_steps {
        if steps.record_states {
            path.states.extend_from_slice(&cur);
        }
        path.interior_steps = k + 1;
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        field.drift_into(&cur, &mut b);
        field.sigma_apply(&cur, &z, &mut sz);
        for i in 0..d {
            next[i] = cur[i] + b[i] * steps.dt + sz[i] * sqrt_dt;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { path: stream.index as usize, step: k });
        }
        let s_next = domain.signed_distance_unchecked(&next);
        if s_next <= 0.0 {
            let theta = s_cur / (s_cur - s_next);
            let crossing: Vec<f64> = cur.iter().zip(&next).map(|(a, b)| a + theta * (b - a)).collect();
            path.tau_hat = (k as f64 + theta) * steps.dt;
            path.exit_point = Some(domain.project_to_boundary(&crossing)?);
            path.exited = true;
            return Ok(path);
        }
        std::mem::swap(&mut cur, &mut next);
        s_cur = s_next;
    }
    path.tau_hat = max_steps as f64 * steps.dt;
    path.final_state = Some(cur);
    Ok(path)
}

impl CoefficientField {
    fn drift_1d(&self, x: f64) -> f64 {
        match &self.drift {
            DriftSpec::Zero => 0.0,
            DriftSpec::Constant { v } => v[0],
            DriftSpec::Linear { lambda, m } => lambda * (m[0] - x),
            DriftSpec::Tabulated { points } => interp(points, x),
        }
    }

    fn sigma_1d(&self, x: f64) -> f64 {
        match &self.diffusion {
            DiffusionSpec::Identity => 1.0,
            DiffusionSpec::Scalar { s } => *s,
            DiffusionSpec::Diagonal { d } => d[0],
            DiffusionSpec::Matrix { m } => m[0][0],
            DiffusionSpec::Tabulated { points } => interp(points, x),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self.drift, DriftSpec::Zero | DriftSpec::Constant { .. })
            && !matches!(self.diffusion, DiffusionSpec::Tabulated { .. })
    }
}

/// Scalar specialisation of [`simulate_to_exit`] for intervals; same scheme,
/// same random draws.
fn simulate_interval(
    field: &CoefficientField,
    (lo, hi): (f64, f64),
    x: f64,
    steps: StepConfig,
    mut path: StoppedPath,
) -> Result<StoppedPath> {
    let mut rng = path.stream.rng();
    let dt = steps.dt;
    let sqrt_dt = dt.sqrt();
    let max_steps = steps.max_steps();
    let constant = field.is_constant();
    let (b0, s0) = (field.drift_1d(x) * dt, field.sigma_1d(x) * sqrt_dt);
    let mut cur = x;
    let mut s_cur = (cur - lo).min(hi - cur);
    for k in 0..max_steps {
        if steps.record_states {
            path.states.push(cur);
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        let next = if constant {
            cur + b0 + s0 * z
        } else {
            cur + field.drift_1d(cur) * dt + field.sigma_1d(cur) * sqrt_dt * z
        };
        if !next.is_finite() {
            return Err(Error::NonFiniteState { path: path.stream.index as usize, step: k });
        }
        let s_next = (next - lo).min(hi - next);
        if s_next <= 0.0 {
            let theta = s_cur / (s_cur - s_next);
            let crossing = cur + theta * (next - cur);
            path.interior_steps = k + 1;
            path.tau_hat = (k as f64 + theta) * dt;
            path.exit_point = Some(vec![if crossing - lo <= hi - crossing { lo } else { hi }]);
            path.exited = true;
            return Ok(path);
        }
        cur = next;
        s_cur = s_next;
    }
    path.interior_steps = max_steps;
    path.tau_hat = max_steps as f64 * dt;
    path.final_state = Some(vec![cur]);
    Ok(path)
}

/// A set of independent paths from a common start.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub seed: u64,
    pub steps: StepConfig,
    pub paths: Vec<StoppedPath>,
}

impl PathBatch {
    pub fn unexited_count(&self) -> usize {
        self.paths.iter().filter(|p| !p.exited).count()
    }

    pub fn unexited_fraction(&self) -> f64 {
        self.unexited_count() as f64 / self.paths.len() as f64
    }

    pub fn exit_times(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.tau_hat).collect()
    }

    fn require_exited(&self) -> Result<()> {
        let count = self.unexited_count();
        if count > 0 {
            return Err(Error::Unexited { count, total: self.paths.len() });
        }
        Ok(())
    }

    pub fn require_unexited_below(&self, threshold: f64) -> Result<()> {
        let fraction = self.unexited_fraction();
        if fraction > threshold {
            return Err(Error::UnexitedFraction { fraction, threshold });
        }
        Ok(())
    }

    /// Writes `path_id,tau_hat,exit_coord_0..,exited`; unexited paths leave the
    /// exit coordinates empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.paths.first().map_or(0, |p| p.start.len());
        write!(w, "path_id,tau_hat")?;
        for i in 0..d {
            write!(w, ",exit_coord_{i}")?;
        }
        writeln!(w, ",exited")?;
        for (i, p) in self.paths.iter().enumerate() {
            write!(w, "{i},{}", p.tau_hat)?;
            match &p.exit_point {
                Some(e) => e.iter().try_for_each(|c| write!(w, ",{c}"))?,
                None => (0..d).try_for_each(|_| write!(w, ","))?,
            }
            writeln!(w, ",{}", p.exited)?;
        }
        Ok(())
    }
}

/// Simulates `n_paths` paths; path `i` uses stream `(seed, i)`. Results are
/// collected in index order so the batch does not depend on scheduling.
pub fn simulate_batch(
    field: &CoefficientField,
    domain: &Domain,
    x: &[f64],
    steps: StepConfig,
    seed: u64,
    n_paths: usize,
) -> Result<PathBatch> {
    if n_paths == 0 {
        return Err(Error::Precondition("n_paths must be at least 1".into()));
    }
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| simulate_to_exit(field, domain, x, steps, StreamId { seed, index: i as u64 }))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathBatch { seed, steps, paths })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(samples: impl IntoIterator<Item = f64>, seed: u64) -> McEstimate {
        // Welford
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for x in samples {
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        let var = if n > 1 { (m2 / (n - 1) as f64).max(0.0) } else { 0.0 };
        McEstimate {
            mean,
            standard_error: (var / n.max(1) as f64).sqrt(),
            sample_count: n,
            seed,
        }
    }

    pub fn relative_error(&self) -> f64 {
        self.standard_error / self.mean.abs()
    }
}

pub fn estimate_mean_exit_time(batch: &PathBatch) -> Result<McEstimate> {
    batch.require_exited()?;
    Ok(McEstimate::from_samples(batch.paths.iter().map(|p| p.tau_hat), batch.seed))
}

/// `E[exp(beta tau)]`, the quantity bounded in the exponential-moment condition.
pub fn estimate_exp_moment(batch: &PathBatch, beta: f64) -> Result<McEstimate> {
    if !(beta >= 0.0) {
        return Err(Error::Precondition(format!("beta must be nonnegative, got {beta}")));
    }
    batch.require_exited()?;
    Ok(McEstimate::from_samples(batch.paths.iter().map(|p| (beta * p.tau_hat).exp()), batch.seed))
}

/// `E[tau^{-1/q}]`; the caller multiplies by `rho(x)^{2/q}`.
pub fn estimate_inverse_power_moment(batch: &PathBatch, q: f64) -> Result<McEstimate> {
    if !(q > 0.0) {
        return Err(Error::Precondition(format!("q must be positive, got {q}")));
    }
    batch.require_exited()?;
    let zeros = batch.paths.iter().filter(|p| p.tau_hat <= 0.0).count();
    if zeros > 0 {
        return Err(Error::ZeroExitTime(zeros));
    }
    Ok(McEstimate::from_samples(
        batch.paths.iter().map(|p| p.tau_hat.powf(-1.0 / q)),
        batch.seed,
    ))
}

/// Samples the coefficients on a grid over the closed domain and compares the
/// measured bound, ellipticity and Lipschitz constants with the declared ones.
pub fn check_coefficients(field: &CoefficientField, domain: &Domain, grid_resolution: usize) -> Result<CheckReport> {
    let d = domain.dimension();
    if field.dim != d {
        return Err(Error::DimensionMismatch { expected: d, got: field.dim });
    }
    let n = grid_resolution.max(2);
    let (lo, hi) = domain.bounding_box();
    let total = n.pow(d as u32);
    let point = |mut idx: usize| -> Vec<f64> {
        (0..d)
            .map(|k| {
                let i = idx % n;
                idx /= n;
                lo[k] + (hi[k] - lo[k]) * i as f64 / (n - 1) as f64
            })
            .collect()
    };
    let mut k_bound = 0.0f64;
    let mut alpha = f64::INFINITY;
    let mut lipschitz = 0.0f64;
    let mut worst_bound_at = Vec::new();
    for idx in 0..total {
        let x = point(idx);
        if domain.signed_distance(&x)? < 0.0 {
            continue;
        }
        let bn = field.drift(&x).iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = field.sigma_matrix(&x);
        let (snorm, smin) = sigma_spectrum(&s);
        if bn + snorm > k_bound {
            k_bound = bn + snorm;
            worst_bound_at = x.clone();
        }
        alpha = alpha.min(smin);
        // forward neighbours along each axis
        let mut stride = 1;
        for k in 0..d {
            let i = (idx / stride) % n;
            if i + 1 < n {
                let y = point(idx + stride);
                if domain.signed_distance(&y)? >= 0.0 {
                    let diff = &field.sigma_matrix(&y) - &s;
                    let (dn, _) = sigma_spectrum(&diff);
                    let h = (hi[k] - lo[k]) / (n - 1) as f64;
                    lipschitz = lipschitz.max(dn / h);
                }
            }
            stride *= n;
        }
    }
    let config = serde_json::json!({
        "family": field.family(),
        "dim": d,
        "grid_resolution": n,
        "declared": field.declared,
    });
    let mut r = CheckReport::new("coefficients", config, None);
    r.measure("k_bound", k_bound)
        .measure("alpha_ellipticity", alpha)
        .measure("k_lipschitz", lipschitz)
        .threshold("declared_k_bound", field.declared.k_bound)
        .threshold("declared_alpha_ellipticity", field.declared.alpha_ellipticity)
        .threshold("declared_k_lipschitz", field.declared.k_lipschitz)
        .threshold("positive", 1e-12)
        .gate("k_bound", Comparison::Le, "declared_k_bound", 0.0)
        .gate("alpha_ellipticity", Comparison::Ge, "declared_alpha_ellipticity", 0.0)
        .gate("alpha_ellipticity", Comparison::Ge, "positive", 0.0)
        .gate("k_lipschitz", Comparison::Le, "declared_k_lipschitz", 0.0);
    if !worst_bound_at.is_empty() {
        r.config["worst_bound_at"] = serde_json::json!(worst_bound_at);
    }
    r.finish();
    Ok(r)
}
