//! The registered checks. All of them run on the unit interval.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::report::{CheckReport, Comparison};
use super::{sub_seed, Suite};
use crate::bsde::{self, BsdeConfig};
use crate::closedform::{
    self, keller_osserman_constant, GeneratorSpec, KellerOssermanSetting, MajorantSpec,
};
use crate::diffusion::{estimate_inverse_power_moment, simulate_batch, CoefficientField, McEstimate, StepConfig};
use crate::geometry::{BlowupSet, BoundaryData, Domain, FiniteData};
use crate::pde::{self, EllipticProblem, Grid, SolutionField};
use crate::Result;

fn unit() -> Domain {
    Domain::interval(0.0, 1.0).expect("unit interval")
}

fn rho(x: f64) -> f64 {
    x.min(1.0 - x)
}

/// `g(0) = +inf`, `g(1) = 1`.
fn left_blowup(d: &Domain) -> Result<BoundaryData> {
    BoundaryData::new(d, FiniteData::Constant { value: 1.0 }, BlowupSet::points(&[vec![0.0]]))
}

fn boundary_named(d: &Domain, name: &str) -> Result<BoundaryData> {
    match name {
        "infinite" => BoundaryData::infinite(d),
        "left_blowup" => left_blowup(d),
        "one" => BoundaryData::constant(d, 1.0),
        other => Err(crate::Error::InvalidConfig(format!("unknown boundary {other}"))),
    }
}

fn problem(q: f64, kappa: f64, boundary: BoundaryData, h: f64) -> Result<EllipticProblem> {
    let d = unit();
    EllipticProblem::new(
        Grid::with_spacing(&d, h)?,
        CoefficientField::brownian(1),
        GeneratorSpec::power(q, kappa)?,
        boundary,
        1.0,
    )
}

/// Ladder up to `max_level`, or up to the grid cap when absent.
fn ladder(p: &EllipticProblem, max_level: Option<f64>) -> Result<(Vec<SolutionField>, pde::LadderRecord)> {
    let h = p.grid.spacing()[0];
    let cap = max_level.unwrap_or_else(|| pde::ladder_level_cap(p.generator.q(), 1.0, p.generator.kappa(), h));
    pde::ladder_fields(p, &pde::power_of_two_levels_to(cap), None, 1e-6)
}

fn bsde_config(q: f64, kappa: f64, boundary: BoundaryData, x: f64, mc: &Mc, seed: u64, truncation: f64) -> Result<BsdeConfig> {
    Ok(BsdeConfig {
        generator: GeneratorSpec::power(q, kappa)?,
        field: CoefficientField::brownian(1),
        domain: unit(),
        boundary,
        x: vec![x],
        dt: mc.dt,
        t_max: mc.t_max,
        n_paths: mc.n_paths,
        seed,
        truncation,
        bins: Some(vec![mc.bins]),
        unexited_threshold: crate::diffusion::DEFAULT_UNEXITED_THRESHOLD,
        estimate_z: false,
    })
}

fn key(prefix: &str, x: f64) -> String {
    format!("{prefix}_x{x}")
}

/// Monte Carlo sizes shared by several checks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mc {
    pub n_paths: usize,
    pub dt: f64,
    pub t_max: f64,
    pub bins: usize,
}

impl Mc {
    fn for_suite(suite: Suite) -> Mc {
        match suite {
            Suite::Full => Mc { n_paths: 100_000, dt: 1e-3, t_max: 2.0, bins: 64 },
            Suite::Fast => Mc { n_paths: 10_000, dt: 1e-3, t_max: 2.0, bins: 32 },
        }
    }
}

fn parse<T: for<'de> Deserialize<'de>>(config: &Value) -> Result<T> {
    serde_json::from_value(config.clone()).map_err(|e| crate::Error::InvalidConfig(e.to_string()))
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("configs serialise")
}

// ---------------------------------------------------------------- keller_osserman

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KellerOssermanConfig {
    pub q: f64,
    pub kappa: f64,
    pub h: f64,
    pub max_level: Option<f64>,
    pub xs: Vec<f64>,
    pub truncation: f64,
    pub mc: Mc,
}

pub(super) fn keller_osserman_defaults(suite: Suite) -> Value {
    to_value(&KellerOssermanConfig {
        q: 1.0,
        kappa: 1.0,
        h: if suite == Suite::Full { 1.0 / 512.0 } else { 1.0 / 128.0 },
        max_level: None,
        xs: vec![0.1, 0.25, 0.5],
        truncation: 1024.0,
        mc: Mc::for_suite(suite),
    })
}

pub(super) fn keller_osserman(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: KellerOssermanConfig = parse(config)?;
    let mut r = CheckReport::new("keller_osserman", config.clone(), Some(seed));
    keller_osserman_into(&mut r, &c, seed, "")?;
    Ok(r)
}

/// Gates `rho^{2/q} u <= C kappa^{-1/q}` for the PDE ladder and the BSDE.
fn keller_osserman_into(r: &mut CheckReport, c: &KellerOssermanConfig, seed: u64, prefix: &str) -> Result<()> {
    let d = unit();
    let bound = MajorantSpec::for_kappa(keller_osserman_constant(c.q, 1, KellerOssermanSetting::BrownianBall)?, c.q, c.kappa).c;
    let p = problem(c.q, c.kappa, BoundaryData::infinite(&d)?, c.h)?;
    let (fields, _) = ladder(&p, c.max_level)?;
    let u = fields.last().expect("non-empty ladder");
    let pde_max = (0..u.grid.len())
        .filter(|&i| !u.grid.is_boundary(i))
        .map(|i| rho(u.grid.node(i)[0]).powf(2.0 / c.q) * u.values[i])
        .fold(0.0, f64::max);
    let t = format!("{prefix}C");
    r.threshold(&t, bound);
    let m = format!("{prefix}pde_max_scaled");
    r.measure(&m, pde_max).gate(&m, Comparison::Le, &t, 0.0);
    for (k, &x) in c.xs.iter().enumerate() {
        let cfg = bsde_config(c.q, c.kappa, BoundaryData::infinite(&d)?, x, &c.mc, sub_seed(seed, "keller_osserman", k as u64), c.truncation)?;
        let run = bsde::solve_regression(&cfg)?;
        let s = rho(x).powf(2.0 / c.q);
        let m = key(&format!("{prefix}bsde_scaled_upper"), x);
        r.measure_se(&m, s * run.y0_upper, s * run.y0_stderr).gate(&m, Comparison::Le, &t, 3.0);
    }
    Ok(())
}

// ---------------------------------------------------------------- ladder_monotone

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderMonotoneConfig {
    pub qs: Vec<f64>,
    pub h: f64,
    pub boundaries: Vec<String>,
    pub x: f64,
    pub bsde_levels: Vec<f64>,
    pub mc: Mc,
}

pub(super) fn ladder_monotone_defaults(suite: Suite) -> Value {
    let mut mc = Mc::for_suite(suite);
    if suite == Suite::Full {
        mc.n_paths = 50_000;
    }
    to_value(&LadderMonotoneConfig {
        qs: vec![1.0, 2.0],
        h: if suite == Suite::Full { 1.0 / 512.0 } else { 1.0 / 128.0 },
        boundaries: vec!["left_blowup".into(), "infinite".into()],
        x: 0.5,
        bsde_levels: vec![1.0, 4.0, 16.0, 64.0, 256.0, 1024.0],
        mc,
    })
}

pub(super) fn ladder_monotone(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: LadderMonotoneConfig = parse(config)?;
    let mut r = CheckReport::new("ladder_monotone", config.clone(), Some(seed));
    let d = unit();
    let mut min_inc = f64::INFINITY;
    for &q in &c.qs {
        for b in &c.boundaries {
            let p = problem(q, 1.0, boundary_named(&d, b)?, c.h)?;
            let (fields, _) = ladder(&p, None)?;
            for w in fields.windows(2) {
                let lo = w[1].values.iter().zip(&w[0].values).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
                min_inc = min_inc.min(lo);
            }
        }
    }
    r.measure("pde_min_increment", min_inc)
        .threshold("minus_tolerance", -pde::LADDER_MONOTONE_TOL)
        .gate("pde_min_increment", Comparison::Ge, "minus_tolerance", 0.0);

    let mut min_z = f64::INFINITY;
    for (k, &q) in c.qs.iter().enumerate() {
        let cfg = bsde_config(q, 1.0, left_blowup(&d)?, c.x, &c.mc, sub_seed(seed, "ladder_monotone", k as u64), c.bsde_levels[0])?;
        let lad = bsde::ladder_run(&cfg, &c.bsde_levels, 1e-3)?;
        for w in lad.runs.windows(2) {
            let se = (w[0].y0_stderr.powi(2) + w[1].y0_stderr.powi(2)).sqrt();
            let inc = w[1].y0_mean - w[0].y0_mean;
            let z = if se > 0.0 { inc / se } else if inc >= 0.0 { 0.0 } else { f64::NEG_INFINITY };
            min_z = min_z.min(z);
        }
    }
    r.measure("bsde_min_standardized_increment", min_z)
        .threshold("minus_three", -3.0)
        .gate("bsde_min_standardized_increment", Comparison::Ge, "minus_three", 0.0);
    Ok(r)
}

// ---------------------------------------------------------------- xi_bound

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiBoundConfig {
    pub q: f64,
    pub kappa: f64,
    pub h: f64,
    pub xs: Vec<f64>,
    pub mc: Mc,
}

pub(super) fn xi_bound_defaults(suite: Suite) -> Value {
    let mut mc = Mc::for_suite(suite);
    if suite == Suite::Full {
        mc.dt = 1e-4;
    }
    to_value(&XiBoundConfig {
        q: 1.0,
        kappa: 1.0,
        h: if suite == Suite::Full { 1.0 / 512.0 } else { 1.0 / 128.0 },
        xs: vec![0.25, 0.5, 0.75],
        mc,
    })
}

pub(super) fn xi_bound(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: XiBoundConfig = parse(config)?;
    let mut r = CheckReport::new("xi_bound", config.clone(), Some(seed));
    xi_bound_into(&mut r, &c, seed, "")?;
    Ok(r)
}

/// Gates `Xi_0 - u(x) <= 0` within 3 standard errors, `g = +inf`.
fn xi_bound_into(r: &mut CheckReport, c: &XiBoundConfig, seed: u64, prefix: &str) -> Result<()> {
    let d = unit();
    let g = BoundaryData::infinite(&d)?;
    let gen = GeneratorSpec::power(c.q, c.kappa)?;
    let p = problem(c.q, c.kappa, g.clone(), c.h)?;
    let (fields, _) = ladder(&p, None)?;
    let u = fields.last().expect("non-empty ladder");
    let zero = format!("{prefix}zero");
    r.threshold(&zero, 0.0);
    for (k, &x) in c.xs.iter().enumerate() {
        let xi = bsde::xi_lower_bound(
            &gen,
            &CoefficientField::brownian(1),
            &d,
            &g,
            &[x],
            f64::INFINITY,
            StepConfig::new(c.mc.dt, c.mc.t_max),
            c.mc.n_paths,
            sub_seed(seed, "xi_bound", k as u64),
            crate::diffusion::DEFAULT_UNEXITED_THRESHOLD,
        )?;
        let ux = u.interpolate(&[x]);
        r.measure_se(key(&format!("{prefix}xi"), x), xi.mean, xi.standard_error);
        r.measure(key(&format!("{prefix}u"), x), ux);
        let m = key(&format!("{prefix}xi_minus_u"), x);
        r.measure_se(&m, xi.mean - ux, xi.standard_error).gate(&m, Comparison::Le, &zero, 3.0);
    }
    Ok(())
}

// ---------------------------------------------------------------- phi_sign

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSignConfig {
    pub q: f64,
    pub x: f64,
    pub mc: Mc,
    pub transport_dt: f64,
}

pub(super) fn phi_sign_defaults(suite: Suite) -> Value {
    let mut mc = Mc::for_suite(suite);
    // no unexited paths, so every terminal value is g = 1
    mc.t_max = 4.0;
    to_value(&PhiSignConfig { q: 1.0, x: 0.5, mc, transport_dt: 1e-3 })
}

pub(super) fn phi_sign(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: PhiSignConfig = parse(config)?;
    let mut r = CheckReport::new("phi_sign", config.clone(), Some(seed));
    let d = unit();
    let cfg = bsde_config(c.q, 1.0, BoundaryData::constant(&d, 1.0)?, c.x, &c.mc, sub_seed(seed, "phi_sign", 0), 1.0)?;
    let run = bsde::solve_regression(&cfg)?;
    let phi = bsde::phi_residual(&run, 1.0)?;
    r.measure_se("phi0", phi.mean, phi.standard_error)
        .threshold("zero", 0.0)
        .gate("phi0", Comparison::Ge, "zero", 3.0);

    let transport = BsdeConfig {
        field: CoefficientField::constant_drift(vec![1.0], 0.0),
        dt: c.transport_dt,
        t_max: 2.0,
        n_paths: 8,
        ..cfg
    };
    let run = bsde::solve_regression(&transport)?;
    let phi = bsde::phi_residual(&run, 1.0)?;
    r.measure("transport_abs_phi0", phi.mean.abs())
        .threshold("five_dt", 5.0 * c.transport_dt)
        .gate("transport_abs_phi0", Comparison::Le, "five_dt", 0.0);
    Ok(r)
}

// ---------------------------------------------------------------- lemma3_band

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub qs: Vec<f64>,
    pub xs: Vec<f64>,
    pub n_paths: usize,
    /// `dt = rho(x)^2 / dt_divisor`.
    pub dt_divisor: f64,
    pub t_max: f64,
}

pub(super) fn lemma3_band_defaults(suite: Suite) -> Value {
    to_value(&BandConfig {
        qs: vec![1.0, 2.0],
        xs: vec![0.01, 0.02, 0.05, 0.1],
        n_paths: if suite == Suite::Full { 100_000 } else { 2_000 },
        dt_divisor: 64.0,
        t_max: 4.0,
    })
}

/// `rho(x)^{2/q} E[tau^{-1/q}]` per `q` (outer) and `x` (inner); one batch per `x`.
fn band_values(field: &CoefficientField, c: &BandConfig, seed: u64) -> Result<Vec<Vec<McEstimate>>> {
    let d = unit();
    let mut out = vec![Vec::with_capacity(c.xs.len()); c.qs.len()];
    for (k, &x) in c.xs.iter().enumerate() {
        let dt = rho(x).powi(2) / c.dt_divisor;
        let batch = simulate_batch(field, &d, &[x], StepConfig::new(dt, c.t_max), sub_seed(seed, "band", k as u64), c.n_paths)?;
        for (j, &q) in c.qs.iter().enumerate() {
            let m = estimate_inverse_power_moment(&batch, q)?;
            let s = rho(x).powf(2.0 / q);
            out[j].push(McEstimate { mean: s * m.mean, standard_error: s * m.standard_error, ..m });
        }
    }
    Ok(out)
}

/// Records the band statistics for one `q` and gates them.
fn band_gates(r: &mut CheckReport, q: f64, xs: &[f64], vals: &[McEstimate]) {
    let max = vals.iter().map(|v| v.mean).fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().map(|v| v.mean).fold(f64::INFINITY, f64::min);
    let rel = vals.iter().map(|v| v.standard_error / v.mean.abs()).fold(0.0, f64::max);
    for (x, v) in xs.iter().zip(vals) {
        r.measure_se(format!("band_q{q}_x{x}"), v.mean, v.standard_error);
    }
    let ratio = format!("ratio_q{q}");
    let lo = format!("min_q{q}");
    let se = format!("max_rel_stderr_q{q}");
    r.measure(&ratio, max / min).measure(&lo, min).measure(&se, rel);
    r.gate(&ratio, Comparison::Le, "max_ratio", 0.0)
        .gate(&lo, Comparison::Ge, "zero", 0.0)
        .gate(&se, Comparison::Le, "max_rel_stderr", 0.0);
}

pub(super) fn lemma3_band(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: BandConfig = parse(config)?;
    let mut r = CheckReport::new("lemma3_band", config.clone(), Some(seed));
    r.threshold("max_ratio", 10.0).threshold("zero", 0.0).threshold("max_rel_stderr", 0.1);
    let vals = band_values(&CoefficientField::brownian(1), &c, seed)?;
    for (&q, v) in c.qs.iter().zip(&vals) {
        band_gates(&mut r, q, &c.xs, v);
    }
    Ok(r)
}

// ---------------------------------------------------------------- blowup_rate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupRateConfig {
    pub q: f64,
    pub kappa: f64,
    /// Grid spacings, coarse to fine; the profile band is checked on the last one.
    pub hs: Vec<f64>,
    pub max_level: Option<f64>,
    pub profile_range: (f64, f64),
    pub lower_band_range: (f64, f64),
    pub max_rel_change: f64,
}

pub(super) fn blowup_rate_defaults(_suite: Suite) -> Value {
    to_value(&BlowupRateConfig {
        q: 2.0,
        kappa: 1.0,
        hs: vec![1.0 / 1024.0, 1.0 / 2048.0, 1.0 / 4096.0],
        max_level: Some(16384.0),
        profile_range: (0.01, 0.03),
        lower_band_range: (0.01, 0.1),
        max_rel_change: 0.1,
    })
}

pub(super) fn blowup_rate(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: BlowupRateConfig = parse(config)?;
    let mut r = CheckReport::new("blowup_rate", config.clone(), Some(seed));
    blowup_rate_into(&mut r, &c, "")?;
    Ok(r)
}

/// Profile `rho^{2/q} u` from the blow-up end `x = 0` of `g(0) = inf, g(1) = 1`.
fn blowup_rate_into(r: &mut CheckReport, c: &BlowupRateConfig, prefix: &str) -> Result<()> {
    let d = unit();
    let a = closedform::halfline_blowup_coefficient_scaled(c.q, 1.0, c.kappa);
    let ko = MajorantSpec::for_kappa(keller_osserman_constant(c.q, 1, KellerOssermanSetting::BrownianBall)?, c.q, c.kappa).c;
    let t = |s: &str| format!("{prefix}{s}");
    r.threshold(t("band_lo"), 0.9 * a).threshold(t("band_hi"), 1.1 * a).threshold(t("C"), ko);
    r.threshold(t("zero"), 0.0).threshold(t("max_rel_change"), c.max_rel_change);
    let mut lower = Vec::new();
    let mut max_scaled: f64 = 0.0;
    let mut band = (f64::INFINITY, f64::NEG_INFINITY);
    for (k, &h) in c.hs.iter().enumerate() {
        let p = problem(c.q, c.kappa, left_blowup(&d)?, h)?;
        let (fields, _) = ladder(&p, c.max_level)?;
        let u = fields.last().expect("non-empty ladder");
        // the half of the line that moves away from x = 0
        let mut profile = pde::boundary_layer_profile(u, &[0.0], &[1.0])?;
        let turn = profile.windows(2).position(|w| w[1].0 < w[0].0).map_or(profile.len(), |k| k + 1);
        profile.truncate(turn);
        let lo = profile
            .iter()
            .filter(|p| p.0 >= c.lower_band_range.0 - 1e-12 && p.0 <= c.lower_band_range.1 + 1e-12)
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min);
        r.measure(format!("{prefix}lower_band_h{k}"), lo);
        lower.push(lo);
        if k + 1 == c.hs.len() {
            max_scaled = profile.iter().map(|p| p.1).fold(max_scaled, f64::max);
            for p in profile.iter().filter(|p| p.0 >= c.profile_range.0 - 1e-12 && p.0 <= c.profile_range.1 + 1e-12) {
                band = (band.0.min(p.1), band.1.max(p.1));
            }
        }
    }
    r.measure(t("profile_min"), band.0).measure(t("profile_max"), band.1).measure(t("max_scaled"), max_scaled);
    r.gate(&t("profile_min"), Comparison::Ge, &t("band_lo"), 0.0)
        .gate(&t("profile_max"), Comparison::Le, &t("band_hi"), 0.0)
        .gate(&t("max_scaled"), Comparison::Le, &t("C"), 0.0);
    let low = lower.iter().cloned().fold(f64::INFINITY, f64::min);
    r.measure(t("lower_band_min"), low).gate(&t("lower_band_min"), Comparison::Ge, &t("zero"), 0.0);
    if lower.len() > 1 {
        let change = lower.windows(2).map(|w| (w[1] - w[0]).abs() / w[1].abs()).fold(0.0, f64::max);
        r.measure(t("lower_band_rel_change"), change)
            .gate(&t("lower_band_rel_change"), Comparison::Le, &t("max_rel_change"), 0.0);
    }
    Ok(())
}

// ---------------------------------------------------------------- boundary_continuity

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityConfig {
    pub qs: Vec<f64>,
    pub h: f64,
    /// The grid error is measured against spacing `h / refinement`.
    pub refinement: usize,
}

pub(super) fn boundary_continuity_defaults(suite: Suite) -> Value {
    to_value(&ContinuityConfig {
        qs: vec![1.0, 2.0],
        h: if suite == Suite::Full { 1.0 / 2048.0 } else { 1.0 / 1024.0 },
        refinement: 4,
    })
}

/// Quadratic extrapolation of the last three interior nodes to `x = 1`
/// against `g(1) = 1`, gated by twice the scheme's grid error on bounded data.
pub(super) fn boundary_continuity(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: ContinuityConfig = parse(config)?;
    let mut r = CheckReport::new("boundary_continuity", config.clone(), Some(seed));
    let d = unit();
    for &q in &c.qs {
        let cap = pde::ladder_level_cap(q, 1.0, 1.0, c.h);
        let (u, _) = ladder(&problem(q, 1.0, left_blowup(&d)?, c.h)?, Some(cap))?;
        let u = u.last().expect("ladder");
        let n = u.values.len();
        let extrap = 3.0 * u.values[n - 2] - 3.0 * u.values[n - 3] + u.values[n - 4];
        let gap = (extrap - 1.0).abs();
        // grid error of the scheme on bounded data g = 1
        let g = BoundaryData::constant(&d, 1.0)?;
        let uc = pde::solve_truncated(&problem(q, 1.0, g.clone(), c.h)?)?;
        let uf = pde::solve_truncated(&problem(q, 1.0, g, c.h / c.refinement as f64)?)?;
        let err = (0..n).map(|i| (uc.values[i] - uf.values[i * c.refinement]).abs()).fold(0.0, f64::max);
        let (g, e) = (format!("gap_q{q}"), format!("two_grid_error_q{q}"));
        r.measure(&g, gap).measure(format!("grid_error_q{q}"), err).threshold(&e, 2.0 * err);
        r.gate(&g, Comparison::Le, &e, 0.0);
    }
    Ok(r)
}

// ---------------------------------------------------------------- minimality_comparison

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub q: f64,
    pub h: f64,
    pub truncation: f64,
    pub shift: f64,
}

pub(super) fn minimality_comparison_defaults(suite: Suite) -> Value {
    to_value(&ComparisonConfig {
        q: 1.0,
        h: if suite == Suite::Full { 1.0 / 512.0 } else { 1.0 / 128.0 },
        truncation: 1024.0,
        shift: 1.0,
    })
}

pub(super) fn minimality_comparison(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: ComparisonConfig = parse(config)?;
    let mut r = CheckReport::new("minimality_comparison", config.clone(), Some(seed));
    let d = unit();
    let g = left_blowup(&d)?;
    let g_up = g.shifted(&d, c.shift)?;
    let p = problem(c.q, 1.0, g.clone(), c.h)?.with_truncation(c.truncation);
    let ordered = pde::comparison_check(&p, &g, &g_up)?;
    let swapped = pde::comparison_check(&p, &g_up, &g)?;
    let m = |rep: &CheckReport| rep.value("max_u1_minus_u2").unwrap_or(f64::NAN);
    r.measure("max_u_g_minus_u_shifted", m(&ordered))
        .measure("swapped_max_u_shifted_minus_u_g", m(&swapped))
        .threshold("tolerance", pde::LADDER_MONOTONE_TOL)
        .gate("max_u_g_minus_u_shifted", Comparison::Le, "tolerance", 0.0)
        .negative_gate("swapped_max_u_shifted_minus_u_g", Comparison::Le, "tolerance");
    Ok(r)
}

// ---------------------------------------------------------------- general_generator

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralConfig {
    pub q: f64,
    pub kappa: f64,
    pub ode: OdeConfig,
    pub transform_range: (f64, f64),
    pub transform_points: usize,
    pub keller_osserman: KellerOssermanConfig,
    pub blowup: BlowupRateConfig,
    pub xi: XiBoundConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeConfig {
    pub xi: f64,
    pub horizon: f64,
    pub dt: f64,
    pub ratio_dts: (f64, f64),
}

pub(super) fn general_generator_defaults(suite: Suite) -> Value {
    let (q, kappa) = (1.0, 2.0);
    let mut ko: KellerOssermanConfig = serde_json::from_value(keller_osserman_defaults(suite)).expect("defaults");
    ko.kappa = kappa;
    let mut xi: XiBoundConfig = serde_json::from_value(xi_bound_defaults(suite)).expect("defaults");
    xi.kappa = kappa;
    let h = 1.0 / 4096.0;
    let blowup = BlowupRateConfig {
        q,
        kappa,
        hs: vec![2.0 * h, h],
        max_level: None,
        profile_range: (0.01, 0.03),
        lower_band_range: (0.01, 0.1),
        max_rel_change: 0.1,
    };
    to_value(&GeneralConfig {
        q,
        kappa,
        ode: OdeConfig { xi: 2.0, horizon: 1.0, dt: 1e-3, ratio_dts: (4e-3, 2e-3) },
        transform_range: (1e-2, 1e2),
        transform_points: 41,
        keller_osserman: ko,
        blowup,
        xi,
    })
}

/// The ODE flow, Keller-Osserman, blow-up profile and lower-bound checks for
/// `f(y) = -kappa y^{1+q}`, with the flow oracle from the F-transform.
pub(super) fn general_generator(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: GeneralConfig = parse(config)?;
    let mut r = CheckReport::new("general_generator", config.clone(), Some(seed));
    let gen = GeneratorSpec::power(c.q, c.kappa)?;

    let oracle = closedform::general_flow(&gen, c.ode.xi, c.ode.horizon)?;
    let err = |dt: f64| -> Result<f64> { Ok((bsde::solve_pure_ode(&gen, c.ode.xi, c.ode.horizon, dt)? - oracle).abs()) };
    let y = bsde::solve_pure_ode(&gen, c.ode.xi, c.ode.horizon, c.ode.dt)?;
    r.measure("ode_oracle", oracle).measure("ode_y0", y).measure("ode_abs_error", (y - oracle).abs());
    r.measure("ode_error_ratio", err(c.ode.ratio_dts.0)? / err(c.ode.ratio_dts.1)?);
    r.threshold("ode_tol", 0.01).threshold("ratio_lo", 1.6).threshold("ratio_hi", 2.4);
    r.gate("ode_abs_error", Comparison::Le, "ode_tol", 0.0)
        .gate("ode_error_ratio", Comparison::Ge, "ratio_lo", 0.0)
        .gate("ode_error_ratio", Comparison::Le, "ratio_hi", 0.0);

    let (a, b) = c.transform_range;
    let mut worst: f64 = 0.0;
    for k in 0..c.transform_points {
        let y = a * (b / a).powf(k as f64 / (c.transform_points - 1).max(1) as f64);
        let exact = 1.0 / (c.kappa * c.q * y.powf(c.q));
        let closed = closedform::f_transform(&gen, y)?;
        let quad = closedform::f_transform_quadrature(&gen, y)?;
        worst = worst.max((closed - quad).abs()).max((closed - exact).abs());
    }
    r.measure("transform_max_abs_diff", worst)
        .threshold("transform_tol", 1e-8)
        .gate("transform_max_abs_diff", Comparison::Le, "transform_tol", 0.0);

    keller_osserman_into(&mut r, &c.keller_osserman, sub_seed(seed, "general_generator", 0), "ko_")?;
    blowup_rate_into(&mut r, &c.blowup, "profile_")?;
    xi_bound_into(&mut r, &c.xi, sub_seed(seed, "general_generator", 1), "xi_")?;
    Ok(r)
}

// ---------------------------------------------------------------- degenerate_sigma

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegenerateConfig {
    pub band: BandConfig,
    pub x_small: f64,
}

pub(super) fn degenerate_sigma_defaults(_suite: Suite) -> Value {
    to_value(&DegenerateConfig {
        band: BandConfig { qs: vec![1.0, 2.0], xs: vec![0.9, 0.95, 0.99, 0.998], n_paths: 4, dt_divisor: 64.0, t_max: 2.0 },
        x_small: 0.998,
    })
}

/// `sigma = 0`, `b = 1`: the band value is `(1 - x)^{1/q}` and the band
/// criterion has to fail.
pub(super) fn degenerate_sigma(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: DegenerateConfig = parse(config)?;
    let mut r = CheckReport::new("degenerate_sigma", config.clone(), Some(seed));
    let field = CoefficientField::constant_drift(vec![1.0], 0.0);
    let vals = band_values(&field, &c.band, seed)?;
    let mut dev: f64 = 0.0;
    for (&q, v) in c.band.qs.iter().zip(&vals) {
        for (&x, e) in c.band.xs.iter().zip(v) {
            dev = dev.max((e.mean - (1.0 - x).powf(1.0 / q)).abs());
            if q == 1.0 && (x - c.x_small).abs() < 1e-15 {
                r.measure("band_q1_at_x_small", e.mean);
            }
        }
    }
    r.measure("max_deviation", dev)
        .threshold("deviation_tol", 1e-9)
        .threshold("small", 0.05)
        .gate("max_deviation", Comparison::Le, "deviation_tol", 0.0)
        .gate("band_q1_at_x_small", Comparison::Le, "small", 0.0);
    let q1 = c.band.qs.iter().position(|&q| q == 1.0).unwrap_or(0);
    let means: Vec<f64> = vals[q1].iter().map(|e| e.mean).collect();
    let max = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = means.iter().cloned().fold(f64::INFINITY, f64::min);
    r.measure("band_ratio_q1", max / min)
        .threshold("max_ratio", 10.0)
        .negative_gate("band_ratio_q1", Comparison::Le, "max_ratio");
    Ok(r)
}

// ---------------------------------------------------------------- weighted_z

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedZConfig {
    pub q: f64,
    pub eps: f64,
    pub x: f64,
    pub levels: Vec<f64>,
    pub mc: Mc,
}

pub(super) fn weighted_z_defaults(suite: Suite) -> Value {
    to_value(&WeightedZConfig {
        q: 2.0,
        eps: 2.0,
        x: 0.5,
        levels: vec![32.0, 64.0, 128.0, 256.0, 512.0, 1024.0],
        mc: Mc::for_suite(suite),
    })
}

pub(super) fn weighted_z(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: WeightedZConfig = parse(config)?;
    let mut r = CheckReport::new("weighted_z", config.clone(), Some(seed));
    let d = unit();
    let mut cfg = bsde_config(c.q, 1.0, BoundaryData::infinite(&d)?, c.x, &c.mc, sub_seed(seed, "weighted_z", 0), c.levels[0])?;
    cfg.estimate_z = true;
    let lad = bsde::ladder_run(&cfg, &c.levels, 1e-3)?;
    let mut vals = Vec::with_capacity(lad.runs.len());
    for (n, run) in c.levels.iter().zip(&lad.runs) {
        let z = bsde::weighted_z_diagnostic(run, c.eps)?;
        r.measure_se(format!("diagnostic_n{n}"), z.mean, z.standard_error);
        vals.push(z.mean);
    }
    let mut sorted = vals.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
    r.measure("median", median)
        .measure("max_over_median", sorted[m - 1] / median)
        .measure("median_over_min", median / sorted[0])
        .threshold("factor", 2.0)
        .gate("max_over_median", Comparison::Le, "factor", 0.0)
        .gate("median_over_min", Comparison::Le, "factor", 0.0);
    Ok(r)
}

// ---------------------------------------------------------------- cross_representation

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossConfig {
    pub q: f64,
    pub h: f64,
    pub xs: Vec<f64>,
    pub tolerance: f64,
    pub mc: Mc,
}

pub(super) fn cross_representation_defaults(suite: Suite) -> Value {
    to_value(&CrossConfig {
        q: 1.0,
        h: if suite == Suite::Full { 1.0 / 512.0 } else { 1.0 / 128.0 },
        xs: vec![0.25, 0.5, 0.75],
        tolerance: 0.05,
        mc: Mc::for_suite(suite),
    })
}

/// PDE value against BSDE `Y_0` for bounded data `g = 1`.
pub(super) fn cross_representation(config: &Value, seed: u64) -> Result<CheckReport> {
    let c: CrossConfig = parse(config)?;
    let mut r = CheckReport::new("cross_representation", config.clone(), Some(seed));
    let d = unit();
    let g = BoundaryData::constant(&d, 1.0)?;
    let u = pde::solve_truncated(&problem(c.q, 1.0, g.clone(), c.h)?)?;
    r.threshold("tolerance", c.tolerance);
    for (k, &x) in c.xs.iter().enumerate() {
        let cfg = bsde_config(c.q, 1.0, g.clone(), x, &c.mc, sub_seed(seed, "cross_representation", k as u64), 1.0)?;
        let run = bsde::solve_regression(&cfg)?;
        let ux = u.interpolate(&[x]);
        r.measure(key("u", x), ux).measure_se(key("y0", x), run.y0_mean, run.y0_stderr);
        let m = key("abs_diff", x);
        r.measure_se(&m, (ux - run.y0_mean).abs(), run.y0_stderr).gate(&m, Comparison::Le, "tolerance", 3.0);
    }
    Ok(r)
}
