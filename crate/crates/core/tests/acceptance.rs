//! Acceptance criteria at full scale. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::time::Instant;

use serde_json::Value;
use singular_bsde::bsde::solve_pure_ode;
use singular_bsde::checks::report::Expectation;
use singular_bsde::checks::{run_check, run_suite, to_jsonl, CheckReport, Suite};
use singular_bsde::closedform::GeneratorSpec;

const SEED: u64 = 20240601;

struct Outcome {
    passed: bool,
    detail: String,
}

fn checks(names: &[&str]) -> Outcome {
    let mut passed = true;
    let mut detail = Vec::new();
    for name in names {
        let r: CheckReport = run_check(name, &Value::Null, SEED).expect("registered check");
        passed &= r.passed();
        let met = r.gates.iter().filter(|g| g.holds == (g.expect == Expectation::Holds)).count();
        detail.push(format!("{name} {}/{} gates as expected{}", met, r.gates.len(), if r.passed() { "" } else { " (verdict fail)" }));
        if let Some(e) = &r.error {
            detail.push(format!("error: {e}"));
        }
        if !r.passed() {
            for g in &r.gates {
                let m = r.measured.get(&g.measured).map(|m| m.value).unwrap_or(f64::NAN);
                let t = r.thresholds.get(&g.threshold).copied().unwrap_or(f64::NAN);
                detail.push(format!("  {} = {m} vs {} = {t} holds={}", g.measured, g.threshold, g.holds));
            }
        }
    }
    Outcome { passed, detail: detail.join("; ") }
}

fn ode_flow() -> Outcome {
    let gen = GeneratorSpec::power(1.0, 1.0).unwrap();
    let exact = 2.0 / 3.0;
    let err = |dt: f64| (solve_pure_ode(&gen, 2.0, 1.0, dt).unwrap() - exact).abs();
    let e3 = err(1e-3);
    let ratio = err(4e-3) / err(2e-3);
    Outcome {
        passed: e3 <= 0.01 && (1.6..=2.4).contains(&ratio),
        detail: format!("|Y0 - 2/3| = {e3:.2e} at dt=1e-3, error ratio {ratio:.3}"),
    }
}

fn determinism() -> Outcome {
    let a = to_jsonl(&run_suite(Suite::Fast, SEED));
    let b = to_jsonl(&run_suite(Suite::Fast, SEED));
    let in_pool = |n: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| to_jsonl(&run_suite(Suite::Fast, SEED)))
    };
    let one = in_pool(1);
    let four = in_pool(4);
    Outcome {
        passed: a == b && one == four && a == one,
        detail: format!("twice identical: {}, 1 vs 4 workers identical: {}, {} bytes", a == b, one == four, a.len()),
    }
}

fn main() {
    type Criterion = (&'static str, f64, Box<dyn Fn() -> Outcome>);
    let criteria: Vec<Criterion> = vec![
        ("ODE-flow convergence", 1.0, Box::new(ode_flow)),
        ("Keller-Osserman bound", 120.0, Box::new(|| checks(&["keller_osserman"]))),
        ("boundary layer vs half-line profile", 60.0, Box::new(|| checks(&["blowup_rate"]))),
        ("Xi lower bound", 120.0, Box::new(|| checks(&["xi_bound"]))),
        ("Phi residual sign", 60.0, Box::new(|| checks(&["phi_sign"]))),
        ("exit-time band", 120.0, Box::new(|| checks(&["lemma3_band"]))),
        ("degenerate negative control", 1.0, Box::new(|| checks(&["degenerate_sigma"]))),
        ("cross-representation", 180.0, Box::new(|| checks(&["cross_representation"]))),
        ("ladder monotonicity and comparison", 60.0, Box::new(|| checks(&["ladder_monotone", "minimality_comparison"]))),
        ("general generator", 180.0, Box::new(|| checks(&["general_generator"]))),
        ("determinism", 480.0, Box::new(determinism)),
        ("weighted-Z diagnostic", 300.0, Box::new(|| checks(&["weighted_z"]))),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let ok = o.passed && secs < *budget;
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {} [{secs:.1}s of {budget:.0}s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
