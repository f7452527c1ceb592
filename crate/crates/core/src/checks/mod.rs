//! Named, reproducible checks and the fast/full suites.

mod catalog;
pub mod report;

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use serde_json::Value;

pub use catalog::{
    BandConfig, BlowupRateConfig, ComparisonConfig, ContinuityConfig, CrossConfig, DegenerateConfig,
    GeneralConfig, KellerOssermanConfig, LadderMonotoneConfig, Mc, OdeConfig, PhiSignConfig, WeightedZConfig,
    XiBoundConfig,
};
pub use report::{CheckReport, Comparison, Verdict};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Fast,
    Full,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Suite> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            other => Err(Error::UnknownSuite(other.to_string())),
        }
    }
}

/// A registered check.
pub struct CheckEntry {
    pub name: &'static str,
    pub claim: &'static str,
    pub defaults: fn(Suite) -> Value,
    run: fn(&Value, u64) -> Result<CheckReport>,
}

macro_rules! entry {
    ($name:ident, $defaults:ident, $claim:expr) => {
        CheckEntry { name: stringify!($name), claim: $claim, defaults: catalog::$defaults, run: catalog::$name }
    };
}

/// All checks in registry order.
pub static REGISTRY: &[CheckEntry] = &[
    entry!(keller_osserman, keller_osserman_defaults, "rho^{2/q} u <= C for the PDE ladder and BSDE Y_0"),
    entry!(ladder_monotone, ladder_monotone_defaults, "u_n and Y_0^n are nondecreasing in n"),
    entry!(xi_bound, xi_bound_defaults, "Xi_0 <= u(x)"),
    entry!(phi_sign, phi_sign_defaults, "Phi_0 >= 0; Phi_0 = 0 without noise"),
    entry!(lemma3_band, lemma3_band_defaults, "rho^{2/q} E[tau^{-1/q}] stays in a positive band"),
    entry!(blowup_rate, blowup_rate_defaults, "rho^{2/q} u matches the half-line profile near the blow-up set"),
    entry!(boundary_continuity, boundary_continuity_defaults, "u attains g off the blow-up set"),
    entry!(minimality_comparison, minimality_comparison_defaults, "g <= g' implies u <= u'; swapped data must fail"),
    entry!(general_generator, general_generator_defaults, "flow, bounds and profile for f(y) = -kappa y^{1+q}"),
    entry!(degenerate_sigma, degenerate_sigma_defaults, "without noise the band collapses and the band check fails"),
    entry!(weighted_z, weighted_z_defaults, "weighted Z energy is stable across truncation levels"),
    entry!(cross_representation, cross_representation_defaults, "PDE u(x) agrees with BSDE Y_0 for bounded data"),
];

pub fn find_check(name: &str) -> Result<&'static CheckEntry> {
    REGISTRY.iter().find(|e| e.name == name).ok_or_else(|| Error::UnknownCheck(name.to_string()))
}

/// Seed of the `index`-th random stream of the check `tag`.
pub(crate) fn sub_seed(seed: u64, tag: &str, index: u64) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finaliser
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Shallow merge of `overrides` into the full-scale defaults.
pub fn resolve_config(entry: &CheckEntry, suite: Suite, overrides: &Value) -> Result<Value> {
    let mut base = (entry.defaults)(suite);
    match overrides {
        Value::Null => {}
        Value::Object(o) => {
            let map = base.as_object_mut().expect("defaults are objects");
            for (k, v) in o {
                map.insert(k.clone(), v.clone());
            }
        }
        _ => return Err(Error::InvalidConfig("check config must be a JSON object".into())),
    }
    Ok(base)
}

/// Runs one check. `config` overrides the full-scale defaults key by key.
/// Numerical failures become a failed report; unknown names and invalid
/// configs are errors.
pub fn run_check(name: &str, config: &Value, seed: u64) -> Result<CheckReport> {
    let entry = find_check(name)?;
    let resolved = resolve_config(entry, Suite::Full, config)?;
    run_resolved(entry, resolved, seed)
}

fn run_resolved(entry: &CheckEntry, config: Value, seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let mut report = match (entry.run)(&config, seed) {
        Ok(mut r) => {
            r.finish();
            r
        }
        Err(e @ Error::InvalidConfig(_)) => return Err(e),
        Err(e) => {
            let mut r = CheckReport::new(entry.name, config, Some(seed));
            r.fail_with(e.to_string());
            r
        }
    };
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Every registered check at the suite's scale, in registry order.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckReport> {
    REGISTRY
        .iter()
        .map(|entry| {
            let config = (entry.defaults)(suite);
            run_resolved(entry, config.clone(), seed).unwrap_or_else(|e| {
                let mut r = CheckReport::new(entry.name, config, Some(seed));
                r.fail_with(e.to_string());
                r
            })
        })
        .collect()
}

pub fn all_passed(reports: &[CheckReport]) -> bool {
    !reports.is_empty() && reports.iter().all(CheckReport::passed)
}

/// One JSON object per line.
pub fn to_jsonl(reports: &[CheckReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

pub fn summary_table(reports: &[CheckReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:>7} {:>6} {:>9}", "check", "verdict", "gates", "time_s");
    for r in reports {
        let held = r
            .gates
            .iter()
            .filter(|g| match g.expect {
                report::Expectation::Holds => g.holds,
                report::Expectation::Violated => !g.holds,
            })
            .count();
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{:<24} {:>7} {:>3}/{:<2} {:>9.2}", r.name, verdict, held, r.gates.len(), r.wall_time_s);
        if let Some(e) = &r.error {
            let _ = writeln!(out, "    error: {e}");
        }
    }
    let _ = writeln!(out, "aggregate: {}", if all_passed(reports) { "PASS" } else { "FAIL" });
    out
}
