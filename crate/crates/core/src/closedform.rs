//! Analytic oracles.
//!
//! * the deterministic flow `alpha_t = (q (tau - tau∧t) + xi^{-q})^{-1/q}` solving
//!   `d alpha = alpha^{1+q} dt` backwards from `alpha_tau = xi`;
//! * Keller–Osserman constants for the a priori bound `|Y| <= C / rho^{2/q}`;
//! * the transform `F(y) = -∫_y^∞ dx / f(x)` that linearises the flow of a
//!   general monotone generator;
//! * the exact half-line blow-up profile `u(x) = A x^{-2/q}`.
//!
//! `+inf` is represented by `f64::INFINITY` throughout; `inf.powf(-q) == 0`
//! gives the arithmetic rule `1 / inf^q = 0` for free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Relative tolerance of the quadrature route for `F`.
pub const F_QUAD_RTOL: f64 = 1e-10;

/// Relative tolerance of the bisection route for `F^{-1}`.
pub const F_INV_RTOL: f64 = 1e-12;

/// Monotone generator `f` with `f(0) = 0` and `f(y) <= -kappa y^{1+q}` for `y >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GeneratorSpec {
    /// `f(y) = -kappa y |y|^q`.
    Power { q: f64, kappa: f64 },
    /// Piecewise-linear `f` through `(y_i, f_i)` with `y_0 = 0`, extended past the
    /// last node by `f_last (y / y_last)^{1+q}`.
    Tabulated {
        q: f64,
        kappa: f64,
        points: Vec<(f64, f64)>,
    },
}

impl GeneratorSpec {
    pub fn power(q: f64, kappa: f64) -> Result<Self> {
        let g = GeneratorSpec::Power { q, kappa };
        g.validate()?;
        Ok(g)
    }

    pub fn tabulated(q: f64, kappa: f64, points: Vec<(f64, f64)>) -> Result<Self> {
        let g = GeneratorSpec::Tabulated { q, kappa, points };
        g.validate()?;
        Ok(g)
    }

    pub fn q(&self) -> f64 {
        match self {
            GeneratorSpec::Power { q, .. } | GeneratorSpec::Tabulated { q, .. } => *q,
        }
    }

    pub fn kappa(&self) -> f64 {
        match self {
            GeneratorSpec::Power { kappa, .. } | GeneratorSpec::Tabulated { kappa, .. } => *kappa,
        }
    }

    /// Checks `q > 0`, `kappa >= 0` and, for tables, `f(0) = 0`, monotonicity and the envelope.
    /// `kappa = 0` is only meaningful for the linear sanity mode of the PDE solver.
    pub fn validate(&self) -> Result<()> {
        let (q, kappa) = (self.q(), self.kappa());
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::InvalidGenerator(format!("q must be positive, got {q}")));
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::InvalidGenerator(format!("kappa must be nonnegative, got {kappa}")));
        }
        if let GeneratorSpec::Tabulated { points, .. } = self {
            if kappa <= 0.0 {
                return Err(Error::InvalidGenerator("tabulated generators need kappa > 0".into()));
            }
            if points.len() < 2 {
                return Err(Error::InvalidGenerator("table needs at least two nodes".into()));
            }
            if points[0] != (0.0, 0.0) {
                return Err(Error::InvalidGenerator("table must start at (0, 0)".into()));
            }
            for w in points.windows(2) {
                let ((y0, f0), (y1, f1)) = (w[0], w[1]);
                if !(y1 > y0) {
                    return Err(Error::InvalidGenerator("table abscissae must increase".into()));
                }
                if f1 > f0 {
                    return Err(Error::InvalidGenerator(format!("f increases between y={y0} and y={y1}")));
                }
            }
            for &(y, f) in &points[1..] {
                if f > -kappa * y.powf(1.0 + q) {
                    return Err(Error::InvalidGenerator(format!(
                        "envelope f(y) <= -kappa y^(1+q) violated at y={y}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `f(y)`.
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            GeneratorSpec::Power { q, kappa } => -kappa * y * y.abs().powf(*q),
            GeneratorSpec::Tabulated { q, points, .. } => {
                if y < 0.0 {
                    return -self.eval(-y);
                }
                let (yl, fl) = *points.last().expect("validated");
                if y >= yl {
                    return fl * (y / yl).powf(1.0 + q);
                }
                let i = points.partition_point(|p| p.0 <= y).max(1) - 1;
                let ((y0, f0), (y1, f1)) = (points[i], points[i + 1]);
                f0 + (f1 - f0) * (y - y0) / (y1 - y0)
            }
        }
    }

    /// `f'(y)` (one-sided from the right at table nodes).
    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            GeneratorSpec::Power { q, kappa } => -kappa * (1.0 + q) * y.abs().powf(*q),
            GeneratorSpec::Tabulated { q, points, .. } => {
                let y = y.abs();
                let (yl, fl) = *points.last().expect("validated");
                if y >= yl {
                    return fl * (1.0 + q) * y.powf(*q) / yl.powf(1.0 + q);
                }
                let i = points.partition_point(|p| p.0 <= y).max(1) - 1;
                let ((y0, f0), (y1, f1)) = (points[i], points[i + 1]);
                (f1 - f0) / (y1 - y0)
            }
        }
    }

    /// Samples the invariants of the generator on `[0, y_max]`; returns the
    /// worst envelope slack `max(f(y) + kappa y^{1+q})` (must be `<= 0`).
    pub fn envelope_slack(&self, y_max: f64, samples: usize) -> f64 {
        let (q, kappa) = (self.q(), self.kappa());
        (0..=samples)
            .map(|i| {
                let y = y_max * i as f64 / samples as f64;
                self.eval(y) + kappa * y.powf(1.0 + q)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// The deterministic flow `alpha_t`. Returns `xi` for `t >= tau`.
pub fn ode_flow_alpha(q: f64, xi: f64, tau: f64, t: f64) -> f64 {
    if t >= tau {
        return xi;
    }
    let s = q * (tau - t) + xi.powf(-q);
    s.powf(-1.0 / q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KellerOssermanSetting {
    /// Brownian motion on a ball (any center and radius).
    BrownianBall,
    /// Conservative constant from sup-bounds on the coefficients and on the
    /// regularised distance `theta` (with `|grad theta| <= 1`).
    Generic {
        sigma_sup: f64,
        drift_sup: f64,
        theta_sup: f64,
        trace_bound: f64,
    },
}

/// Smallest admissible `C` for the bound `|Y| <= C rho^{-2/q}` in the given setting.
pub fn keller_osserman_constant(q: f64, d: usize, setting: KellerOssermanSetting) -> Result<f64> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::Precondition(format!("q must be positive, got {q}")));
    }
    if d == 0 {
        return Err(Error::Precondition("dimension must be at least 1".into()));
    }
    let cq = match setting {
        KellerOssermanSetting::BrownianBall => (4.0 / q) * (2.0 / q + 1.0) + 4.0 * d as f64 / q,
        KellerOssermanSetting::Generic {
            sigma_sup,
            drift_sup,
            theta_sup,
            trace_bound,
        } => {
            (2.0 / q) * (2.0 / q + 1.0) * sigma_sup * sigma_sup
                + (2.0 / q) * theta_sup * drift_sup
                + (1.0 / q) * theta_sup * trace_bound
        }
    };
    Ok(cq.powf(1.0 / q))
}

/// The bracket whose nonnegativity certifies the constant `c` for Brownian
/// motion on a ball of radius `radius` in dimension `d`, evaluated at distance
/// `r` from the center with `theta = (R^2 - r^2) / R + eps`.
pub fn brownian_ball_bracket(c: f64, q: f64, d: usize, radius: f64, r: f64, eps: f64) -> f64 {
    let theta = (radius * radius - r * r) / radius + eps;
    let grad_sq = 4.0 * r * r / (radius * radius);
    let trace = -2.0 * d as f64 / radius;
    c.powf(q) - (1.0 / q) * (2.0 / q + 1.0) * grad_sq + (theta / q) * trace
}

/// `Psi_eps(rho) = C / (rho + eps)^{2/q}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajorantSpec {
    pub c: f64,
    pub q: f64,
    pub eps: f64,
}

impl MajorantSpec {
    pub fn new(c: f64, q: f64) -> Self {
        MajorantSpec { c, q, eps: 0.0 }
    }

    /// The same constant for `f(y) = -kappa y^{1+q}`: solutions scale as `kappa^{-1/q}`.
    pub fn for_kappa(c: f64, q: f64, kappa: f64) -> Self {
        MajorantSpec {
            c: c * kappa.powf(-1.0 / q),
            q,
            eps: 0.0,
        }
    }
}

pub fn majorant_value(spec: &MajorantSpec, rho: f64) -> f64 {
    let base = rho + spec.eps;
    if base <= 0.0 {
        return f64::INFINITY;
    }
    spec.c / base.powf(2.0 / spec.q)
}

/// `F(y) = -∫_y^∞ dx / f(x)`: closed form for the power kind, quadrature for tables.
pub fn f_transform(gen: &GeneratorSpec, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Precondition(format!("F is defined for y > 0, got {y}")));
    }
    if y.is_infinite() {
        return Ok(0.0);
    }
    match gen {
        GeneratorSpec::Power { q, kappa } => {
            if *kappa <= 0.0 {
                return Err(Error::Divergent("kappa = 0 has no finite transform".into()));
            }
            Ok(y.powf(-q) / (kappa * q))
        }
        GeneratorSpec::Tabulated { .. } => f_transform_quadrature(gen, y),
    }
}

/// Quadrature route for `F`, usable for any generator. Only evaluates `f`.
///
/// Table segments are integrated piecewise; past the last node (or for the
/// power kind, over the whole half-line) the substitution `x = y0 / s` maps
/// `[y0, ∞)` onto `(0, 1]`.
pub fn f_transform_quadrature(gen: &GeneratorSpec, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Precondition(format!("F is defined for y > 0, got {y}")));
    }
    if y.is_infinite() {
        return Ok(0.0);
    }
    let kappa = gen.kappa();
    if kappa <= 0.0 {
        return Err(Error::Divergent("envelope needs kappa > 0".into()));
    }
    let recip = |x: f64| {
        let fx = gen.eval(x);
        if fx < 0.0 {
            -1.0 / fx
        } else {
            f64::INFINITY
        }
    };
    let mut total = 0.0;
    let mut start = y;
    if let GeneratorSpec::Tabulated { points, .. } = gen {
        for w in points.windows(2) {
            let (a, b) = (w[0].0.max(start), w[1].0);
            if b <= a {
                continue;
            }
            if gen.eval(a) >= 0.0 {
                return Err(Error::Divergent(format!("f vanishes at y={a}")));
            }
            let (v, _) = quadrature::integrate(recip, a, b, F_QUAD_RTOL * 1e-2, 0.0);
            total += v;
            start = b;
        }
    }
    let y0 = start;
    // ∫_{y0}^∞ dx/|f(x)| = ∫_0^1 y0 / (s^2 |f(y0/s)|) ds; the integrand is
    // bounded by s^{q-1} / (kappa y0^q), so it vanishes or stays integrable at s=0.
    let tail = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let x = y0 / s;
        let fx = gen.eval(x);
        if !fx.is_finite() || fx == 0.0 {
            return 0.0;
        }
        y0 / (s * s * -fx)
    };
    let (v, err) = quadrature::integrate(tail, 0.0, 1.0, F_QUAD_RTOL * 1e-2, 0.0);
    if !v.is_finite() || err > F_QUAD_RTOL * v.abs().max(1e-300) * 1e3 {
        return Err(Error::Divergent(format!("tail integral did not converge (estimate {v}, error {err})")));
    }
    total += v;
    if !total.is_finite() {
        return Err(Error::Divergent(format!("F({y}) is not finite")));
    }
    Ok(total)
}

/// The unique `y > 0` with `F(y) = v`.
pub fn f_transform_inverse(gen: &GeneratorSpec, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::OutOfRange { value: v });
    }
    if v.is_infinite() {
        return Ok(0.0);
    }
    match gen {
        GeneratorSpec::Power { q, kappa } => {
            if *kappa <= 0.0 {
                return Err(Error::Divergent("kappa = 0 has no finite transform".into()));
            }
            Ok((kappa * q * v).powf(-1.0 / q))
        }
        GeneratorSpec::Tabulated { .. } => {
            // F is decreasing: F(lo) > v > F(hi)
            let mut lo = 1.0;
            let mut hi = 1.0;
            let mut guard = 0;
            while f_transform(gen, lo)? <= v {
                lo *= 0.5;
                guard += 1;
                if guard > 2000 || lo == 0.0 {
                    return Err(Error::OutOfRange { value: v });
                }
            }
            while f_transform(gen, hi)? >= v {
                hi *= 2.0;
                guard += 1;
                if guard > 4000 || hi.is_infinite() {
                    return Err(Error::OutOfRange { value: v });
                }
            }
            while (hi - lo) > F_INV_RTOL * hi {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if f_transform(gen, mid)? > v {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

/// Solves `F(Y) = F(xi) + horizon` (the flow of `dY = -f(Y) dt` run backwards
/// for `horizon` units of time from terminal value `xi`).
pub fn general_flow(gen: &GeneratorSpec, xi: f64, horizon: f64) -> Result<f64> {
    if !(horizon >= 0.0) {
        return Err(Error::Precondition(format!("horizon must be nonnegative, got {horizon}")));
    }
    if !(xi > 0.0) {
        return Err(Error::Precondition(format!("terminal value must be positive, got {xi}")));
    }
    if horizon == 0.0 {
        return Ok(xi);
    }
    let fx = if xi.is_infinite() { 0.0 } else { f_transform(gen, xi)? };
    f_transform_inverse(gen, fx + horizon)
}

/// `A` such that `u(x) = A x^{-2/q}` solves `(sigma^2 / 2) u'' = u^{1+q}` on the half-line.
pub fn halfline_blowup_coefficient(q: f64, sigma: f64) -> f64 {
    halfline_blowup_coefficient_scaled(q, sigma, 1.0)
}

/// Same profile for `(sigma^2 / 2) u'' = kappa u^{1+q}`.
pub fn halfline_blowup_coefficient_scaled(q: f64, sigma: f64, kappa: f64) -> f64 {
    ((sigma * sigma / (q * kappa)) * (2.0 / q + 1.0)).powf(1.0 / q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn alpha_examples() {
        assert!(close(ode_flow_alpha(1.0, f64::INFINITY, 1.0, 0.0), 1.0, 1e-15));
        assert_eq!(ode_flow_alpha(1.0, 2.0, 1.0, 1.0), 2.0);
        assert!(close(ode_flow_alpha(2.0, f64::INFINITY, 2.0, 0.0), 0.5, 1e-15));
        assert_eq!(ode_flow_alpha(1.0, f64::INFINITY, 1.0, 1.5), f64::INFINITY);
    }

    #[test]
    fn alpha_semigroup() {
        for &q in &[0.5, 1.0, 2.0, 3.5] {
            for &xi in &[0.3, 2.0, f64::INFINITY] {
                let tau = 1.7;
                for &(s, t) in &[(0.0, 0.5), (0.2, 1.1), (0.0, 1.7), (1.0, 1.6)] {
                    let direct = ode_flow_alpha(q, xi, tau, s);
                    let mid = ode_flow_alpha(q, xi, tau, t);
                    let composed = ode_flow_alpha(q, mid, t, s);
                    assert!(close(direct, composed, 1e-12), "q={q} xi={xi} s={s} t={t}");
                }
            }
        }
    }

    #[test]
    fn alpha_solves_ode() {
        let h = 1e-6;
        for &q in &[0.5, 1.0, 2.0] {
            for &t in &[0.0, 0.3, 0.8] {
                let a = ode_flow_alpha(q, 2.0, 1.0, t);
                let b = ode_flow_alpha(q, 2.0, 1.0, t + h);
                let fd = (b - a) / h;
                let rel = (fd - a.powf(1.0 + q)).abs() / a.powf(1.0 + q);
                assert!(rel < 1e-4, "q={q} t={t} rel={rel}");
            }
        }
    }

    #[test]
    fn keller_osserman_examples() {
        let c = keller_osserman_constant(1.0, 2, KellerOssermanSetting::BrownianBall).unwrap();
        assert!(close(c, 20.0, 1e-14));
        let c = keller_osserman_constant(2.0, 1, KellerOssermanSetting::BrownianBall).unwrap();
        assert!(close(c, 6f64.sqrt(), 1e-14));
        let c = keller_osserman_constant(1.0, 1, KellerOssermanSetting::BrownianBall).unwrap();
        assert!(close(c, 16.0, 1e-14));
        assert!(keller_osserman_constant(0.0, 1, KellerOssermanSetting::BrownianBall).is_err());
    }

    #[test]
    fn brownian_constant_certifies_bracket() {
        for &q in &[0.5, 1.0, 2.0, 4.0] {
            for d in 1..=3 {
                let c = keller_osserman_constant(q, d, KellerOssermanSetting::BrownianBall).unwrap();
                for &radius in &[0.5, 1.0, 3.0] {
                    for &eps in &[0.0, 0.1 * radius, radius] {
                        for i in 0..=200 {
                            let r = radius * i as f64 / 200.0;
                            let b = brownian_ball_bracket(c, q, d, radius, r, eps);
                            assert!(b >= -1e-9 * c.powf(q), "q={q} d={d} R={radius} r={r} eps={eps}: {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn majorant_examples() {
        assert!(close(majorant_value(&MajorantSpec::new(1.0, 2.0), 0.1), 10.0, 1e-14));
        assert!(close(majorant_value(&MajorantSpec::new(16.0, 1.0), 0.5), 64.0, 1e-14));
        assert_eq!(majorant_value(&MajorantSpec::new(3.0, 1.0), 0.0), f64::INFINITY);
    }

    #[test]
    fn f_transform_examples() {
        let g11 = GeneratorSpec::power(1.0, 1.0).unwrap();
        let g21 = GeneratorSpec::power(2.0, 1.0).unwrap();
        let g12 = GeneratorSpec::power(1.0, 2.0).unwrap();
        assert!(close(f_transform(&g11, 2.0).unwrap(), 0.5, 1e-15));
        assert!(close(f_transform(&g21, 1.0).unwrap(), 0.5, 1e-15));
        assert!(close(f_transform(&g12, 1.0).unwrap(), 0.5, 1e-15));
        assert!(close(f_transform_inverse(&g11, 0.5).unwrap(), 2.0, 1e-15));
        assert!(close(f_transform_inverse(&g21, 0.5).unwrap(), 1.0, 1e-15));
        assert!(f_transform_inverse(&g11, 0.0).is_err());
        assert!(f_transform(&g11, 0.0).is_err());
    }

    #[test]
    fn f_transform_quadrature_matches_closed_form() {
        for &(q, kappa) in &[(1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (0.5, 1.5), (3.0, 0.7)] {
            let g = GeneratorSpec::power(q, kappa).unwrap();
            for k in -8..=8 {
                let y = 10f64.powf(k as f64 / 4.0);
                let a = f_transform(&g, y).unwrap();
                let b = f_transform_quadrature(&g, y).unwrap();
                assert!((a - b).abs() <= 1e-10 * a, "q={q} kappa={kappa} y={y}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn inverse_round_trip_over_six_decades() {
        let gens = [
            GeneratorSpec::power(1.0, 1.0).unwrap(),
            GeneratorSpec::power(2.0, 3.0).unwrap(),
            tabulated_example(),
        ];
        for g in &gens {
            for k in -3..=3 {
                let v = 10f64.powi(k);
                let y = f_transform_inverse(g, v).unwrap();
                let back = f_transform(g, y).unwrap();
                assert!((back - v).abs() <= 1e-10 * v, "{g:?} v={v} back={back}");
                let again = f_transform_inverse(g, f_transform(g, y).unwrap()).unwrap();
                assert!((again - y).abs() <= 1e-10 * y);
            }
        }
    }

    fn tabulated_example() -> GeneratorSpec {
        // f(y) = -(y^2 + y^3) sampled, dominates the (q=1, kappa=1) envelope
        let pts: Vec<(f64, f64)> = (0..=40)
            .map(|i| {
                let y = 0.1 * i as f64;
                (y, -(y * y + y * y * y))
            })
            .collect();
        GeneratorSpec::tabulated(1.0, 1.0, pts).unwrap()
    }

    #[test]
    fn tabulated_validation() {
        assert!(GeneratorSpec::tabulated(1.0, 1.0, vec![(0.0, 0.0), (1.0, -0.5)]).is_err());
        assert!(GeneratorSpec::tabulated(1.0, 1.0, vec![(0.1, 0.0), (1.0, -2.0)]).is_err());
        assert!(GeneratorSpec::tabulated(1.0, 1.0, vec![(0.0, 0.0), (1.0, -2.0), (2.0, -1.0)]).is_err());
        let g = tabulated_example();
        assert!(g.envelope_slack(10.0, 1000) <= 0.0);
        assert!(close(g.eval(4.0), -80.0, 1e-14));
        assert!(close(g.eval(8.0), -80.0 * 4.0, 1e-14));
    }

    #[test]
    fn general_flow_examples() {
        let g11 = GeneratorSpec::power(1.0, 1.0).unwrap();
        let g21 = GeneratorSpec::power(2.0, 1.0).unwrap();
        assert!(close(general_flow(&g11, f64::INFINITY, 1.0).unwrap(), 1.0, 1e-15));
        assert_eq!(general_flow(&g11, 2.0, 0.0).unwrap(), 2.0);
        assert!(close(general_flow(&g21, f64::INFINITY, 2.0).unwrap(), 0.5, 1e-15));
    }

    #[test]
    fn general_flow_equals_alpha_for_unit_kappa() {
        for &q in &[0.5, 1.0, 2.0] {
            let g = GeneratorSpec::power(q, 1.0).unwrap();
            for &xi in &[0.5, 2.0, f64::INFINITY] {
                for &h in &[0.0, 0.1, 1.0, 5.0] {
                    let a = general_flow(&g, xi, h).unwrap();
                    let b = ode_flow_alpha(q, xi, h, 0.0);
                    assert!(a == b || (a - b).abs() <= 1e-12 * b, "q={q} xi={xi} h={h}");
                }
            }
        }
    }

    #[test]
    fn tabulated_flow_solves_ode() {
        // F'(y) = 1/f(y), so d/dh Y(h) = f(Y) along the flow
        let g = tabulated_example();
        let h = 1e-5;
        let y0 = general_flow(&g, 2.0, 0.3).unwrap();
        let y1 = general_flow(&g, 2.0, 0.3 + h).unwrap();
        let fd = (y1 - y0) / h;
        assert!((fd - g.eval(y0)).abs() < 1e-3 * g.eval(y0).abs(), "{fd} vs {}", g.eval(y0));
    }

    #[test]
    fn halfline_examples() {
        assert!(close(halfline_blowup_coefficient(2.0, 1.0), 1.0, 1e-15));
        assert!(close(halfline_blowup_coefficient(1.0, 1.0), 3.0, 1e-15));
        assert!(close(halfline_blowup_coefficient(2.0, 2f64.sqrt()), 2f64.sqrt(), 1e-15));
    }

    #[test]
    fn halfline_residual() {
        // u = A x^{-p}, u'' = A p (p+1) x^{-p-2} with p = 2/q
        for &(q, sigma) in &[(1.0, 1.0), (2.0, 1.0), (0.5, 0.7), (3.0, 2.0)] {
            let a = halfline_blowup_coefficient(q, sigma);
            let p = 2.0 / q;
            for i in 0..=100 {
                let x = 0.01 * 1000f64.powf(i as f64 / 100.0);
                let u = a * x.powf(-p);
                let upp = a * p * (p + 1.0) * x.powf(-p - 2.0);
                let lhs = 0.5 * sigma * sigma * upp;
                let rhs = u.powf(1.0 + q);
                assert!((lhs - rhs).abs() <= 1e-9 * rhs, "q={q} x={x}");
            }
        }
    }
}
