//! Finite differences for `-L u + kappa u|u|^q = 0` on intervals and boxes
//! with Dirichlet data `g ∧ n`, where `L = (1/2) a_ii ∂_ii + b_i ∂_i` and
//! `a = sigma sigma^*` is diagonal.
//!
//! Second derivatives are central, drift terms upwinded so that `-L_h` is an
//! M-matrix. The nonlinear system is solved by damped Newton on a banded LU.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::checks::report::{CheckReport, Comparison};
use crate::closedform::GeneratorSpec;
use crate::diffusion::CoefficientField;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryData, Domain, Shape};

/// Uniform tensor grid on an interval or box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cells: Vec<usize>,
    h: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    /// `cells[k]` intervals along axis `k`.
    pub fn new(domain: &Domain, cells: &[usize]) -> Result<Self> {
        if matches!(domain.shape(), Shape::Ball { .. }) {
            return Err(Error::InvalidDomain(
                "finite differences support intervals and boxes only; use the Monte Carlo path for balls".into(),
            ));
        }
        let (lo, hi) = domain.bounding_box();
        if cells.len() != lo.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: cells.len() });
        }
        if cells.iter().any(|&c| c < 2) {
            return Err(Error::Precondition(format!("need at least 2 cells per axis, got {cells:?}")));
        }
        let h = lo.iter().zip(&hi).zip(cells).map(|((l, u), &c)| (u - l) / c as f64).collect();
        let mut strides = vec![1usize; cells.len()];
        for k in 1..cells.len() {
            strides[k] = strides[k - 1] * (cells[k - 1] + 1);
        }
        Ok(Grid { domain: domain.clone(), lo, hi, cells: cells.to_vec(), h, strides })
    }

    /// Same spacing `h` on every axis (`h` must divide each side length).
    pub fn with_spacing(domain: &Domain, h: f64) -> Result<Self> {
        let (lo, hi) = domain.bounding_box();
        let cells = lo
            .iter()
            .zip(&hi)
            .map(|(l, u)| {
                let c = (u - l) / h;
                if (c - c.round()).abs() > 1e-9 * c.max(1.0) {
                    Err(Error::Precondition(format!("h = {h} does not divide side length {}", u - l)))
                } else {
                    Ok(c.round() as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Grid::new(domain, &cells)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dimension(&self) -> usize {
        self.cells.len()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.iter().map(|c| c + 1).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Half-bandwidth of the assembled operator.
    fn bandwidth(&self) -> usize {
        self.strides[self.dimension() - 1]
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.cells
            .iter()
            .map(|&c| {
                let i = idx % (c + 1);
                idx /= c + 1;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    fn coord(&self, k: usize, i: usize) -> f64 {
        if i == self.cells[k] {
            self.hi[k]
        } else {
            self.lo[k] + i as f64 * self.h[k]
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().enumerate().map(|(k, &i)| self.coord(k, i)).collect()
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.multi_index(idx).iter().zip(&self.cells).any(|(&i, &c)| i == 0 || i == c)
    }

    /// Index of the node at `x`, if `x` is a node up to `1e-9 h`.
    pub fn find_node(&self, x: &[f64]) -> Option<usize> {
        let mut multi = Vec::with_capacity(x.len());
        for k in 0..self.dimension() {
            let t = (x[k] - self.lo[k]) / self.h[k];
            let i = t.round();
            if (t - i).abs() > 1e-9 || i < 0.0 || i as usize > self.cells[k] {
                return None;
            }
            multi.push(i as usize);
        }
        Some(self.flat_index(&multi))
    }
}

/// Semilinear Dirichlet problem at one truncation level.
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub grid: Grid,
    pub field: CoefficientField,
    pub generator: GeneratorSpec,
    pub boundary: BoundaryData,
    pub truncation: f64,
}

impl EllipticProblem {
    pub fn new(
        grid: Grid,
        field: CoefficientField,
        generator: GeneratorSpec,
        boundary: BoundaryData,
        truncation: f64,
    ) -> Result<Self> {
        let p = EllipticProblem { grid, field, generator, boundary, truncation };
        p.validate()?;
        Ok(p)
    }

    pub fn with_truncation(&self, n: f64) -> Self {
        EllipticProblem { truncation: n, ..self.clone() }
    }

    pub fn with_boundary(&self, boundary: BoundaryData) -> Self {
        EllipticProblem { boundary, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.field.validate()?;
        if !self.field.is_diagonal() {
            return Err(Error::NonDiagonalDiffusion);
        }
        if self.field.dim != self.grid.dimension() {
            return Err(Error::DimensionMismatch { expected: self.grid.dimension(), got: self.field.dim });
        }
        if !(self.truncation > 0.0 && self.truncation.is_finite()) {
            return Err(Error::Precondition(format!("truncation must be finite and positive, got {}", self.truncation)));
        }
        if self.generator.kappa() > 0.0 {
            for idx in 0..self.grid.len() {
                let x = self.grid.node(idx);
                if self.field.diffusion_diagonal(&x)?.iter().any(|&a| !(a > 0.0)) {
                    return Err(Error::InvalidCoefficients(format!("diffusion degenerates at node {x:?}")));
                }
            }
        }
        Ok(())
    }

    /// `g ∧ n` at each node (unused on interior nodes).
    fn boundary_values(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| {
                if self.grid.is_boundary(i) {
                    self.boundary.truncated(&self.grid.node(i), self.truncation)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Sparse rows of `-L_h`; boundary rows are the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    pub diag: Vec<f64>,
    pub off: Vec<Vec<(usize, f64)>>,
    pub interior: Vec<bool>,
    bandwidth: usize,
}

impl DiscreteOperator {
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.diag[i] * u[i] + self.off[i].iter().map(|&(j, v)| v * u[j]).sum::<f64>();
        }
    }

    /// Nonpositive off-diagonals and weak row diagonal dominance.
    pub fn is_m_matrix(&self) -> bool {
        self.off.iter().zip(&self.diag).all(|(row, &d)| {
            let s: f64 = row.iter().map(|&(_, v)| v.abs()).sum();
            row.iter().all(|&(_, v)| v <= 0.0) && d >= s * (1.0 - 1e-14)
        })
    }
}

/// Assembles `-L_h`: `(a_kk/(2h^2)) [-1, 2, -1]` per axis, plus
/// `(|b_k|/h) [0, 1, -1]` for `b_k > 0` and `(|b_k|/h) [-1, 1, 0]` for `b_k < 0`.
pub fn assemble_operator(problem: &EllipticProblem) -> Result<DiscreteOperator> {
    let grid = &problem.grid;
    let n = grid.len();
    let d = grid.dimension();
    let mut diag = vec![1.0; n];
    let mut off = vec![Vec::new(); n];
    let mut interior = vec![false; n];
    let mut b = vec![0.0; d];
    for idx in 0..n {
        if grid.is_boundary(idx) {
            continue;
        }
        interior[idx] = true;
        let x = grid.node(idx);
        let a = problem.field.diffusion_diagonal(&x)?;
        problem.field.drift_into(&x, &mut b);
        let mut dsum = 0.0;
        let row = &mut off[idx];
        for k in 0..d {
            let h = grid.h[k];
            let s = grid.strides[k];
            let c = a[k] / (2.0 * h * h);
            let up = b[k].max(0.0) / h;
            let down = (-b[k]).max(0.0) / h;
            dsum += 2.0 * c + up + down;
            row.push((idx - s, -c - down));
            row.push((idx + s, -c - up));
        }
        diag[idx] = dsum;
    }
    Ok(DiscreteOperator { diag, off, interior, bandwidth: grid.bandwidth() })
}

/// Banded matrix with equal lower/upper half-bandwidth, LU without pivoting
/// (adequate for the diagonally dominant M-matrices assembled here).
struct Banded {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Banded {
    fn zeros(n: usize, p: usize) -> Self {
        Banded { n, p, data: vec![0.0; n * (2 * p + 1)] }
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * (2 * self.p + 1) + j + self.p - i]
    }

    fn factor(&mut self) {
        let (n, p, w) = (self.n, self.p, 2 * self.p + 1);
        for k in 0..n {
            let pivot = self.data[k * w + p];
            let jmax = (k + p + 1).min(n);
            for i in (k + 1)..jmax {
                let ik = i * w + k + p - i;
                let l = self.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = l;
                for j in (k + 1)..jmax {
                    self.data[i * w + j + p - i] -= l * self.data[k * w + j + p - k];
                }
            }
        }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let (n, p, w) = (self.n, self.p, 2 * self.p + 1);
        for i in 0..n {
            let lo = i.saturating_sub(p);
            let mut s = rhs[i];
            for j in lo..i {
                s -= self.data[i * w + j + p - i] * rhs[j];
            }
            rhs[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + p + 1).min(n);
            let mut s = rhs[i];
            for j in (i + 1)..hi {
                s -= self.data[i * w + j + p - i] * rhs[j];
            }
            rhs[i] = s / self.data[i * w + p];
        }
    }
}

/// Newton controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub picard_sweeps: usize,
    pub max_halvings: usize,
    /// Converged when the scaled sup residual is `<= rel_tol * (1 + n)`.
    pub rel_tol: f64,
    /// Extra full Newton steps once converged, kept while they cut the residual 10x.
    pub polish_steps: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iterations: 200, picard_sweeps: 3, max_halvings: 30, rel_tol: 1e-10, polish_steps: 3 }
    }
}

/// Nodal solution at one truncation level.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Sup norm of the Jacobi-scaled residual `r_i / (-L_h)_ii`.
    pub residual: f64,
    pub iterations: usize,
    pub truncation: f64,
    /// Nodes clamped to zero after convergence (should be none).
    pub clamped_nodes: usize,
    pub clamped_max: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldSummary {
    pub truncation: f64,
    pub residual: f64,
    pub iterations: usize,
    pub clamped_nodes: usize,
    pub clamped_max: f64,
    pub nodes: usize,
    pub h: Vec<f64>,
}

impl SolutionField {
    pub fn at_node(&self, x: &[f64]) -> Option<f64> {
        self.grid.find_node(x).map(|i| self.values[i])
    }

    /// Multilinear interpolation of the nodal values.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let d = g.dimension();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let t = ((x[k] - g.lo[k]) / g.h[k]).clamp(0.0, g.cells[k] as f64);
            let i = (t.floor() as usize).min(g.cells[k] - 1);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        (0..(1usize << d))
            .map(|corner| {
                let mut idx = 0;
                let mut w = 1.0;
                for k in 0..d {
                    let hi = (corner >> k) & 1 == 1;
                    idx += (base[k] + usize::from(hi)) * g.strides[k];
                    w *= if hi { frac[k] } else { 1.0 - frac[k] };
                }
                w * self.values[idx]
            })
            .sum()
    }

    pub fn summary(&self) -> FieldSummary {
        FieldSummary {
            truncation: self.truncation,
            residual: self.residual,
            iterations: self.iterations,
            clamped_nodes: self.clamped_nodes,
            clamped_max: self.clamped_max,
            nodes: self.values.len(),
            h: self.grid.h.clone(),
        }
    }

    /// CSV `x_0,..,x_{d-1},u`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.grid.dimension();
        let header: Vec<String> = (0..d).map(|k| format!("x_{k}")).chain(["u".to_string()]).collect();
        writeln!(w, "{}", header.join(","))?;
        for (i, u) in self.values.iter().enumerate() {
            for c in self.grid.node(i) {
                write!(w, "{c},")?;
            }
            writeln!(w, "{u}")?;
        }
        Ok(())
    }
}

/// Gnuplot script plotting `u` and `rho^{2/q} u` from a field CSV (1D) or a
/// surface of `u` (2D).
pub fn gnuplot_script(csv_name: &str, dim: usize, q: f64) -> String {
    if dim == 1 {
        format!(
            "set datafile separator ','\nset key autotitle columnhead\nset multiplot layout 2,1\n\
             set ylabel 'u'\nplot '{csv_name}' using 1:2 with lines title 'u'\n\
             set ylabel 'rho^(2/q) u'\nset xlabel 'x'\n\
             rho(x) = (x < 1 - x ? x : 1 - x)\n\
             plot '{csv_name}' using 1:(rho($1)**(2.0/{q})*$2) with lines title 'rho^(2/q) u'\n\
             unset multiplot\n"
        )
    } else {
        format!(
            "set datafile separator ','\nset key autotitle columnhead\n\
             splot '{csv_name}' using 1:2:{} with points pt 7 ps 0.3 title 'u'\n",
            dim + 1
        )
    }
}

/// Solves the problem from `u = 0` with Picard warm-up sweeps.
pub fn solve_truncated(problem: &EllipticProblem) -> Result<SolutionField> {
    solve_with(problem, None, NewtonOptions::default())
}

/// Solves the problem, optionally warm-started from `guess`.
pub fn solve_with(problem: &EllipticProblem, guess: Option<&[f64]>, opts: NewtonOptions) -> Result<SolutionField> {
    let op = assemble_operator(problem)?;
    let bvals = problem.boundary_values();
    let gen = &problem.generator;
    let nn = problem.grid.len();
    let tol = opts.rel_tol * (1.0 + problem.truncation);

    let mut u: Vec<f64> = match guess {
        Some(g) if g.len() == nn => g.to_vec(),
        Some(g) => return Err(Error::DimensionMismatch { expected: nn, got: g.len() }),
        None => vec![0.0; nn],
    };
    for i in 0..nn {
        if !op.interior[i] {
            u[i] = bvals[i];
        }
    }

    let mut work = Banded::zeros(nn, op.bandwidth);
    let mut rhs = vec![0.0; nn];

    if guess.is_none() {
        // Picard: (-L_h + c(u_k)) u_{k+1} = 0 with c(u) = -f(u)/u.
        for _ in 0..opts.picard_sweeps {
            fill_matrix(&mut work, &op, |i| {
                let v = u[i];
                if v > 0.0 {
                    -gen.eval(v) / v
                } else {
                    0.0
                }
            });
            work.factor();
            for i in 0..nn {
                rhs[i] = if op.interior[i] { 0.0 } else { bvals[i] };
            }
            work.solve(&mut rhs);
            u.copy_from_slice(&rhs);
        }
    }

    let mut r = vec![0.0; nn];
    let mut norm = residual(&op, gen, &bvals, &u, &mut r);
    let mut history = vec![norm];
    let mut iterations = 0;
    let mut trial = vec![0.0; nn];
    let mut rt = vec![0.0; nn];
    // After the tolerance is met, keep taking full steps while they still
    // shrink the residual by 10x: the scaled residual understates the error
    // in `u` by a factor of order `h^-2`.
    let mut polishing = 0;
    while norm > tol || polishing < opts.polish_steps {
        if norm <= tol {
            polishing += 1;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NewtonStalled { iterations, history });
        }
        iterations += 1;
        fill_matrix(&mut work, &op, |i| -gen.derivative(u[i]));
        work.factor();
        for i in 0..nn {
            rhs[i] = -r[i];
        }
        work.solve(&mut rhs);
        if norm <= tol {
            for i in 0..nn {
                trial[i] = u[i] + rhs[i];
            }
            let tn = residual(&op, gen, &bvals, &trial, &mut rt);
            if tn < 0.1 * norm {
                u.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut rt);
                norm = tn;
                history.push(norm);
                continue;
            }
            break;
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            for i in 0..nn {
                trial[i] = u[i] + lambda * rhs[i];
            }
            let tn = residual(&op, gen, &bvals, &trial, &mut rt);
            if tn < norm {
                u.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut rt);
                norm = tn;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        history.push(norm);
        if !accepted {
            return Err(Error::NewtonStalled { iterations, history });
        }
    }

    let mut clamped_nodes = 0;
    let mut clamped_max: f64 = 0.0;
    for v in u.iter_mut() {
        if *v < 0.0 {
            clamped_nodes += 1;
            clamped_max = clamped_max.max(-*v);
            *v = 0.0;
        }
    }
    Ok(SolutionField {
        grid: problem.grid.clone(),
        values: u,
        residual: norm,
        iterations,
        truncation: problem.truncation,
        clamped_nodes,
        clamped_max,
        q: gen.q(),
    })
}

/// Jacobi-scaled residual; returns its sup norm.
fn residual(op: &DiscreteOperator, gen: &GeneratorSpec, bvals: &[f64], u: &[f64], r: &mut [f64]) -> f64 {
    let mut norm: f64 = 0.0;
    for i in 0..u.len() {
        r[i] = if op.interior[i] {
            op.diag[i] * u[i] + op.off[i].iter().map(|&(j, v)| v * u[j]).sum::<f64>() - gen.eval(u[i])
        } else {
            u[i] - bvals[i]
        };
        norm = norm.max((r[i] / op.diag[i]).abs());
    }
    if norm.is_nan() {
        f64::INFINITY
    } else {
        norm
    }
}

/// Writes `-L_h + diag(extra)` (interior rows) into `m`.
fn fill_matrix(m: &mut Banded, op: &DiscreteOperator, extra: impl Fn(usize) -> f64) {
    m.data.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..op.diag.len() {
        if op.interior[i] {
            *m.at(i, i) = op.diag[i] + extra(i);
            for &(j, v) in &op.off[i] {
                *m.at(i, j) += v;
            }
        } else {
            *m.at(i, i) = 1.0;
        }
    }
}

/// One rung of the ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderLevel {
    pub n: f64,
    pub iterations: usize,
    pub residual: f64,
    pub clamped_nodes: usize,
    /// Sup of `u_n - u_{n_prev}` over nodes with `rho >= delta` (none on the first level).
    pub interior_increment: Option<f64>,
    /// Smallest `u_n - u_{n_prev}` over all nodes.
    pub min_increment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRecord {
    pub levels: Vec<LadderLevel>,
    pub delta: f64,
    pub tol: f64,
    /// First level whose interior increment is below `tol`.
    pub converged_at: Option<f64>,
}

/// Monotonicity tolerance for `u_n <= u_{n'}`.
pub const LADDER_MONOTONE_TOL: f64 = 1e-9;

/// Solves the truncated problems at `levels` (warm-starting each level from
/// the previous one) and returns the last field with the ladder record.
/// `delta` defaults to `4h`.
pub fn ladder_minimal(
    template: &EllipticProblem,
    levels: &[f64],
    delta: Option<f64>,
    tol: f64,
) -> Result<(SolutionField, LadderRecord)> {
    let (fields, record) = ladder_fields(template, levels, delta, tol)?;
    Ok((fields.into_iter().last().expect("non-empty ladder"), record))
}

/// As [`ladder_minimal`] but keeps every level's field.
pub fn ladder_fields(
    template: &EllipticProblem,
    levels: &[f64],
    delta: Option<f64>,
    tol: f64,
) -> Result<(Vec<SolutionField>, LadderRecord)> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(format!("levels must be strictly increasing, got {levels:?}")));
    }
    let grid = &template.grid;
    let delta = delta.unwrap_or(4.0 * grid.h.iter().cloned().fold(0.0, f64::max));
    let deep: Vec<bool> = (0..grid.len())
        .map(|i| grid.domain.distance_to_boundary(&grid.node(i)).unwrap_or(0.0) >= delta)
        .collect();
    let mut fields: Vec<SolutionField> = Vec::with_capacity(levels.len());
    let mut record = LadderRecord { levels: Vec::new(), delta, tol, converged_at: None };
    for &n in levels {
        let problem = template.with_truncation(n);
        let guess = fields.last().map(|f| f.values.as_slice());
        let field = solve_with(&problem, guess, NewtonOptions::default())?;
        let (mut inc, mut min_inc) = (None, None);
        if let Some(prev) = fields.last() {
            let mut sup: f64 = 0.0;
            let mut lo = f64::INFINITY;
            for i in 0..field.values.len() {
                let dlt = field.values[i] - prev.values[i];
                if dlt < -LADDER_MONOTONE_TOL {
                    return Err(Error::LadderNotMonotone {
                        node: i,
                        level: n,
                        lower: prev.values[i],
                        upper: field.values[i],
                    });
                }
                lo = lo.min(dlt);
                if deep[i] {
                    sup = sup.max(dlt.abs());
                }
            }
            inc = Some(sup);
            min_inc = Some(lo);
            if sup < tol && record.converged_at.is_none() {
                record.converged_at = Some(n);
            }
        }
        record.levels.push(LadderLevel {
            n,
            iterations: field.iterations,
            residual: field.residual,
            clamped_nodes: field.clamped_nodes,
            interior_increment: inc,
            min_increment: min_inc,
        });
        fields.push(field);
    }
    Ok((fields, record))
}

/// Largest power of two not above `A h^{-2/q}`, `A` the half-line blow-up
/// coefficient. Past this level the node next to a blow-up boundary follows
/// the boundary value instead of the limiting profile.
pub fn ladder_level_cap(q: f64, sigma: f64, kappa: f64, h: f64) -> f64 {
    let a = crate::closedform::halfline_blowup_coefficient_scaled(q, sigma, kappa);
    2f64.powi((a * h.powf(-2.0 / q)).log2().floor() as i32)
}

/// Powers of two `1, 2, ..., cap`.
pub fn power_of_two_levels_to(cap: f64) -> Vec<f64> {
    let top = cap.log2().round().max(0.0) as i32;
    (0..=top).map(|k| 2f64.powi(k)).collect()
}

/// Solves with `g1` and `g2` and reports `max(u1 - u2)` against `1e-9`.
pub fn comparison_check(problem: &EllipticProblem, g1: &BoundaryData, g2: &BoundaryData) -> Result<CheckReport> {
    let u1 = solve_truncated(&problem.with_boundary(g1.clone()))?;
    let u2 = solve_truncated(&problem.with_boundary(g2.clone()))?;
    let max_diff = u1.values.iter().zip(&u2.values).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    let data_gap = (0..problem.grid.len())
        .filter(|&i| problem.grid.is_boundary(i))
        .map(|i| {
            let x = problem.grid.node(i);
            g1.truncated(&x, problem.truncation) - g2.truncated(&x, problem.truncation)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let mut report = CheckReport::new(
        "minimality_comparison",
        serde_json::json!({ "g1": g1, "g2": g2, "truncation": problem.truncation, "h": problem.grid.h }),
        None,
    );
    report
        .measure("max_u1_minus_u2", max_diff)
        .measure("max_g1_minus_g2", data_gap)
        .threshold("tolerance", LADDER_MONOTONE_TOL)
        .gate("max_u1_minus_u2", Comparison::Le, "tolerance", 0.0)
        .finish();
    Ok(report)
}

/// Samples `(rho, rho^{2/q} u)` at the nodes on the grid line starting at
/// the boundary node `start` in direction `direction` (a signed unit axis vector).
pub fn boundary_layer_profile(field: &SolutionField, start: &[f64], direction: &[f64]) -> Result<Vec<(f64, f64)>> {
    let grid = &field.grid;
    let d = grid.dimension();
    if direction.len() != d || start.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: direction.len().min(start.len()) });
    }
    let nonzero: Vec<usize> = (0..d).filter(|&k| direction[k] != 0.0).collect();
    if nonzero.len() != 1 || (direction[nonzero[0]].abs() - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!("direction {direction:?} is not grid-aligned")));
    }
    let axis = nonzero[0];
    let forward = direction[axis] > 0.0;
    let idx = grid
        .find_node(start)
        .ok_or_else(|| Error::Precondition(format!("{start:?} is not a grid node")))?;
    let mut multi = grid.multi_index(idx);
    let on_face = if forward { multi[axis] == 0 } else { multi[axis] == grid.cells[axis] };
    if !on_face {
        return Err(Error::Precondition(format!("{start:?} is not on the face that {direction:?} points away from")));
    }
    let mut out = Vec::new();
    loop {
        if forward {
            multi[axis] += 1;
        } else {
            multi[axis] -= 1;
        }
        let i = grid.flat_index(&multi);
        if grid.is_boundary(i) {
            break;
        }
        let x = grid.node(i);
        let rho = grid.domain.distance_to_boundary(&x)?;
        out.push((rho, rho.powf(2.0 / field.q) * field.values[i]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BlowupSet, FiniteData};
    use rand::{Rng, SeedableRng};

    fn unit() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    fn problem(cells: usize, field: CoefficientField, gen: GeneratorSpec, g: BoundaryData, n: f64) -> EllipticProblem {
        EllipticProblem::new(Grid::new(&unit(), &[cells]).unwrap(), field, gen, g, n).unwrap()
    }

    #[test]
    fn stencil_examples() {
        let g = BoundaryData::constant(&unit(), 1.0).unwrap();
        let p = problem(4, CoefficientField::brownian(1), GeneratorSpec::power(1.0, 1.0).unwrap(), g.clone(), 10.0);
        let op = assemble_operator(&p).unwrap();
        assert_eq!(op.diag[2], 16.0);
        assert_eq!(op.off[2], vec![(1, -8.0), (3, -8.0)]);
        assert!(op.is_m_matrix());

        let p = problem(4, CoefficientField::constant_drift(vec![1.0], 1.0), GeneratorSpec::power(1.0, 1.0).unwrap(), g, 10.0);
        let op = assemble_operator(&p).unwrap();
        // -L_h row: [-8, 16, -8] + [0, 4, -4]
        assert_eq!(op.diag[2], 20.0);
        assert_eq!(op.off[2], vec![(1, -8.0), (3, -12.0)]);
    }

    #[test]
    fn m_matrix_on_random_coefficients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let field = CoefficientField {
                dim: 1,
                drift: crate::diffusion::DriftSpec::Tabulated {
                    points: (0..5).map(|i| (i as f64 / 4.0, rng.random_range(-5.0..5.0))).collect(),
                },
                diffusion: crate::diffusion::DiffusionSpec::Tabulated {
                    points: (0..5).map(|i| (i as f64 / 4.0, rng.random_range(0.2..2.0))).collect(),
                },
                declared: crate::diffusion::DeclaredConstants { k_bound: 10.0, alpha_ellipticity: 0.04, k_lipschitz: 100.0 },
            };
            let p = problem(
                rng.random_range(4..64),
                field,
                GeneratorSpec::power(1.0, 1.0).unwrap(),
                BoundaryData::constant(&unit(), 1.0).unwrap(),
                1.0,
            );
            assert!(assemble_operator(&p).unwrap().is_m_matrix());
        }
        let b = Domain::cuboid(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let field = CoefficientField::constant_drift(vec![1.0, -3.0], 0.7);
        let p = EllipticProblem::new(
            Grid::new(&b, &[8, 12]).unwrap(),
            field,
            GeneratorSpec::power(1.0, 1.0).unwrap(),
            BoundaryData::constant(&b, 1.0).unwrap(),
            1.0,
        )
        .unwrap();
        assert!(assemble_operator(&p).unwrap().is_m_matrix());
    }

    #[test]
    fn rejects_non_diagonal_and_balls() {
        let field = CoefficientField {
            dim: 2,
            drift: crate::diffusion::DriftSpec::Zero,
            diffusion: crate::diffusion::DiffusionSpec::Matrix { m: vec![vec![1.0, 0.5], vec![0.0, 1.0]] },
            declared: crate::diffusion::DeclaredConstants { k_bound: 2.0, alpha_ellipticity: 0.1, k_lipschitz: 0.0 },
        };
        let b = Domain::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let r = EllipticProblem::new(
            Grid::new(&b, &[4, 4]).unwrap(),
            field,
            GeneratorSpec::power(1.0, 1.0).unwrap(),
            BoundaryData::constant(&b, 1.0).unwrap(),
            1.0,
        );
        assert_eq!(r.unwrap_err(), Error::NonDiagonalDiffusion);
        assert!(Grid::new(&Domain::ball(vec![0.0, 0.0], 1.0).unwrap(), &[4, 4]).is_err());
    }

    #[test]
    fn linear_sanity_reproduces_affine_data() {
        let d = unit();
        let g = BoundaryData::new(&d, FiniteData::Affine { offset: 0.0, gradient: vec![1.0] }, BlowupSet::empty()).unwrap();
        let p = problem(16, CoefficientField::brownian(1), GeneratorSpec::power(1.0, 0.0).unwrap(), g, 10.0);
        let u = solve_truncated(&p).unwrap();
        for i in 0..=16 {
            let x = i as f64 / 16.0;
            assert!((u.values[i] - x).abs() < 1e-14, "{i}: {}", u.values[i]);
        }

        let b = Domain::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = BoundaryData::new(&b, FiniteData::Affine { offset: 1.0, gradient: vec![2.0, -0.5] }, BlowupSet::empty()).unwrap();
        let p = EllipticProblem::new(
            Grid::new(&b, &[8, 8]).unwrap(),
            CoefficientField::brownian(2),
            GeneratorSpec::power(1.0, 0.0).unwrap(),
            g,
            100.0,
        )
        .unwrap();
        let u = solve_truncated(&p).unwrap();
        for i in 0..u.values.len() {
            let x = u.grid.node(i);
            assert!((u.values[i] - (1.0 + 2.0 * x[0] - 0.5 * x[1])).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_data_bounds_and_residual() {
        for &c in &[0.5, 1.0, 7.0] {
            let p = problem(
                64,
                CoefficientField::brownian(1),
                GeneratorSpec::power(1.0, 1.0).unwrap(),
                BoundaryData::constant(&unit(), c).unwrap(),
                100.0,
            );
            let u = solve_truncated(&p).unwrap();
            assert!(u.values.iter().all(|&v| (0.0..=c).contains(&v)));
            assert!(u.residual <= 1e-10 * 101.0);
            assert_eq!(u.clamped_nodes, 0);
            assert_eq!(u.values[0], c);
            assert_eq!(u.values[64], c);
        }
    }

    #[test]
    fn ladder_inactive_and_ordering() {
        let p = problem(
            32,
            CoefficientField::brownian(1),
            GeneratorSpec::power(1.0, 1.0).unwrap(),
            BoundaryData::constant(&unit(), 1.0).unwrap(),
            1.0,
        );
        let (fields, rec) = ladder_fields(&p, &[1.0, 2.0, 4.0], None, 1e-6).unwrap();
        assert_eq!(fields[0].values, fields[1].values);
        assert_eq!(fields[1].values, fields[2].values);
        assert_eq!(rec.converged_at, Some(2.0));
        assert!(ladder_minimal(&p, &[4.0, 2.0], None, 1e-6).is_err());
    }

    #[test]
    fn comparison_and_negative_control() {
        let d = unit();
        let g1 = BoundaryData::new(&d, FiniteData::Affine { offset: 0.5, gradient: vec![2.0] }, BlowupSet::empty()).unwrap();
        let g2 = g1.shifted(&d, 1.0).unwrap();
        let p = problem(64, CoefficientField::brownian(1), GeneratorSpec::power(1.0, 1.0).unwrap(), g1.clone(), 100.0);
        let r = comparison_check(&p, &g1, &g2).unwrap();
        assert!(r.passed());
        let r = comparison_check(&p, &g1, &g1).unwrap();
        assert!(r.passed());
        assert_eq!(r.value("max_u1_minus_u2"), Some(0.0));
        let r = comparison_check(&p, &g2, &g1).unwrap();
        assert!(!r.passed());
        assert_eq!(r.rederive_verdict(), r.verdict);
    }

    #[test]
    fn profile_direction_checks() {
        let p = problem(
            16,
            CoefficientField::brownian(1),
            GeneratorSpec::power(1.0, 1.0).unwrap(),
            BoundaryData::constant(&unit(), 1.0).unwrap(),
            1.0,
        );
        let u = solve_truncated(&p).unwrap();
        let prof = boundary_layer_profile(&u, &[0.0], &[1.0]).unwrap();
        assert_eq!(prof.len(), 15);
        assert_eq!(prof[0].0, 1.0 / 16.0);
        assert!(boundary_layer_profile(&u, &[0.0], &[0.5]).is_err());
        assert!(boundary_layer_profile(&u, &[0.0], &[-1.0]).is_err());
        assert!(boundary_layer_profile(&u, &[1.0], &[-1.0]).is_ok());
    }

    #[test]
    fn banded_solver_matches_dense() {
        let n = 12;
        let p = 3;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut b = Banded::zeros(n, p);
        for i in 0..n {
            let mut s = 0.0;
            for j in i.saturating_sub(p)..(i + p + 1).min(n) {
                if i != j {
                    let v = -rng.random_range(0.0..1.0);
                    dense[(i, j)] = v;
                    *b.at(i, j) = v;
                    s -= v;
                }
            }
            dense[(i, i)] = s + 0.5;
            *b.at(i, i) = s + 0.5;
        }
        let rhs: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let exact = dense.lu().solve(&nalgebra::DVector::from_vec(rhs.clone())).unwrap();
        b.factor();
        let mut x = rhs;
        b.solve(&mut x);
        for i in 0..n {
            assert!((x[i] - exact[i]).abs() < 1e-12);
        }
    }
}
