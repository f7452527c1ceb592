//! Experiment configuration files.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;
use singular_bsde::closedform::GeneratorSpec;
use singular_bsde::diffusion::{CoefficientField, DeclaredConstants, DiffusionSpec, DriftSpec};
use singular_bsde::geometry::{BlowupSet, BoundaryData, Domain, FiniteData};

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CoefficientsSpec {
    Brownian,
    ConstantDrift {
        v: Vec<f64>,
        #[serde(default)]
        s: f64,
    },
    Custom {
        drift: DriftSpec,
        diffusion: DiffusionSpec,
        declared: DeclaredConstants,
    },
}

impl Default for CoefficientsSpec {
    fn default() -> Self {
        CoefficientsSpec::Brownian
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct BoundarySpec {
    #[serde(default = "zero_data")]
    pub finite: FiniteData,
    #[serde(default)]
    pub blowup: BlowupSet,
}

fn zero_data() -> FiniteData {
    FiniteData::Constant { value: 0.0 }
}

#[derive(Debug, Clone, Deserialize)]
pub struct SolverParams {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Grid spacing of the finite-difference solver.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Truncation levels; a single level when absent.
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub bins: Option<Vec<usize>>,
    #[serde(default = "default_unexited")]
    pub unexited_threshold: f64,
    /// Weighted-Z exponent offset; the diagnostic is computed when present.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Also report the lower bound `Xi_0` at the last level.
    #[serde(default)]
    pub xi_bound: bool,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_t_max() -> f64 {
    2.0
}
fn default_paths() -> usize {
    10_000
}
fn default_seed() -> u64 {
    1
}
fn default_h() -> f64 {
    1.0 / 256.0
}
fn default_truncation() -> f64 {
    1024.0
}
fn default_tol() -> f64 {
    1e-6
}
fn default_unexited() -> f64 {
    singular_bsde::diffusion::DEFAULT_UNEXITED_THRESHOLD
}

impl Default for SolverParams {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("all solver params have defaults")
    }
}

/// Fixed-horizon scalar mode of `solve-bsde` (no space).
#[derive(Debug, Clone, Deserialize)]
pub struct PureOde {
    pub xi: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Outputs {
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_prefix() -> String {
    "run".into()
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { prefix: default_prefix() }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub domain: Option<Domain>,
    #[serde(default)]
    pub coefficients: CoefficientsSpec,
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub boundary: Option<BoundarySpec>,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub pure_ode: Option<PureOde>,
    /// Dotted config paths mapped to the values to sweep over.
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<Value>>,
}

/// Parses a config, returning it with the dotted paths of ignored keys.
pub fn parse(value: &Value) -> Result<(ExperimentConfig, Vec<String>), Failure> {
    let mut ignored = Vec::new();
    let cfg: ExperimentConfig = serde_ignored::deserialize(value.clone(), |path| ignored.push(path.to_string()))
        .map_err(|e| Failure::config(format!("invalid config: {e}")))?;
    Ok((cfg, ignored))
}

impl ExperimentConfig {
    pub fn domain(&self) -> Result<&Domain, Failure> {
        self.domain.as_ref().ok_or_else(|| Failure::config("config needs a domain"))
    }

    pub fn generator(&self) -> Result<&GeneratorSpec, Failure> {
        self.generator.as_ref().ok_or_else(|| Failure::config("config needs a generator"))
    }

    pub fn start(&self) -> Result<&[f64], Failure> {
        let x = self.x.as_deref().ok_or_else(|| Failure::config("config needs a start point x"))?;
        let d = self.domain()?.dimension();
        if x.len() != d {
            return Err(Failure::config(format!("x has {} coordinates, domain dimension is {d}", x.len())));
        }
        Ok(x)
    }

    pub fn field(&self) -> Result<CoefficientField, Failure> {
        let d = self.domain()?.dimension();
        let f = match &self.coefficients {
            CoefficientsSpec::Brownian => CoefficientField::brownian(d),
            CoefficientsSpec::ConstantDrift { v, s } => CoefficientField::constant_drift(v.clone(), *s),
            CoefficientsSpec::Custom { drift, diffusion, declared } => {
                CoefficientField::new(d, drift.clone(), diffusion.clone(), *declared).map_err(Failure::from_core)?
            }
        };
        if f.dim != d {
            return Err(Failure::config(format!("coefficients have dimension {}, domain has {d}", f.dim)));
        }
        f.validate().map_err(Failure::from_core)?;
        Ok(f)
    }

    /// Boundary data; blow-up regions are checked against the domain.
    pub fn boundary(&self) -> Result<BoundaryData, Failure> {
        let b = self.boundary.as_ref().ok_or_else(|| Failure::config("config needs boundary data"))?;
        BoundaryData::new(self.domain()?, b.finite.clone(), b.blowup.clone()).map_err(Failure::from_core)
    }

    pub fn levels(&self) -> Vec<f64> {
        self.solver.levels.clone().unwrap_or_else(|| vec![self.solver.truncation])
    }
}

/// Sets the value at a dotted path, creating objects on the way.
pub fn set_path(root: &mut Value, path: &str, v: Value) -> Result<(), Failure> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Failure::config(format!("sweep path {path} runs through a non-object")))?;
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), v);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Cartesian product of the sweep lists, in key order with the last key varying fastest.
pub fn sweep_points(sweep: &BTreeMap<String, Vec<Value>>) -> Vec<Vec<(String, Value)>> {
    let mut points: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for (key, values) in sweep {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for v in values {
                let mut q = p.clone();
                q.push((key.clone(), v.clone()));
                next.push(q);
            }
        }
        points = next;
    }
    points
}
