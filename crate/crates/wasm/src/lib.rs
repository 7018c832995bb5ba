//! JSON-in, JSON-out bindings used by `www/index.html`.
//!
//! Weak values are `U[0, 1]` throughout; the strong law is either `U[0, w̄]`
//! or a member of the slow-drain family.

use serde_json::{json, Value};
use tourney_core::equilibrium::{self, Instance, OdeOptions};
use tourney_core::mechanisms::{self, AuctionSpec, Mechanism, StrongBidder};
use tourney_core::myerson;
use tourney_core::sequences::{self, ExperimentSpec, FamilyKind, FamilySpec, Prop, ReserveRule};
use tourney_core::Distribution;
use wasm_bindgen::prelude::*;

const PLOT_POINTS: usize = 201;

fn weak() -> Distribution {
    Distribution::uniform(0.0, 1.0).unwrap()
}

/// `"uniform"` gives `U[0, w̄]`; `"bump"` gives slow-drain member `level`
/// with atom at 2.
pub fn strong_law(kind: &str, w_bar: f64, level: usize) -> Result<Distribution, String> {
    match kind {
        "uniform" => Distribution::uniform(0.0, w_bar).map_err(|e| e.to_string()),
        "bump" => FamilySpec::slow_drain(2.0, 2.5, level.max(1))
            .and_then(|f| f.member(level.max(1)))
            .map_err(|e| e.to_string()),
        other => Err(format!("unknown strong law {other}")),
    }
}

pub fn solve_json(n: usize, kind: &str, w_bar: f64, level: usize) -> Result<Value, String> {
    let g = strong_law(kind, w_bar, level)?;
    let inst = Instance::plain(weak(), g, n).map_err(|e| e.to_string())?;
    let (bid, report) = equilibrium::solve_ode(&inst, &OdeOptions::default()).map_err(|e| e.to_string())?;
    let br = equilibrium::verify_best_response(&inst, &bid, 50, 200);
    let v: Vec<f64> = (0..PLOT_POINTS).map(|i| i as f64 / (PLOT_POINTS - 1) as f64).collect();
    let b: Vec<f64> = v.iter().map(|x| bid.value(*x)).collect();
    Ok(json!({
        "v": v,
        "b": b,
        "beta_star": inst.beta_star(),
        "max_regret": br.max_regret,
        "residual": report.max_ode_residual,
        "warnings": report.warnings,
    }))
}

pub fn compare_json(n: usize, kind: &str, w_bar: f64, level: usize, reserve: f64, samples: u32, seed: u64) -> Result<Value, String> {
    let g = strong_law(kind, w_bar, level)?;
    let inst = Instance::plain(weak(), g.clone(), n).map_err(|e| e.to_string())?;
    let (bid, _) = equilibrium::solve_ode(&inst, &OdeOptions::default()).map_err(|e| e.to_string())?;
    let strong = StrongBidder::Continuous(g.clone());
    let samples = samples.max(1) as u64;
    let run = |spec: AuctionSpec| mechanisms::simulate(&spec, samples, seed).map_err(|e| e.to_string());
    let ta = run(AuctionSpec::new(Mechanism::Tournament, n, weak(), strong.clone()).with_bid_fn(bid))?;
    let sa = run(AuctionSpec::new(Mechanism::Second, n, weak(), strong.clone()))?;
    let sr = run(AuctionSpec::new(Mechanism::SecondReserve, n, weak(), strong).with_reserve(reserve))?;
    let oa = myerson::oa_revenue(Some(&weak()), n, Some(&g), samples, seed);
    let row = |name: &str, m: f64, se: f64| json!({ "mechanism": name, "revenue": m, "se": se });
    Ok(json!([
        row("TA", ta.revenue.mean, ta.revenue.std_error),
        row("SA", sa.revenue.mean, sa.revenue.std_error),
        row(&format!("SA_RESERVE r={reserve}"), sr.revenue.mean, sr.revenue.std_error),
        row("OA", oa.mean, oa.std_error),
    ]))
}

pub fn sweep_json(prop: &str, levels: usize, samples: u32, seed: u64) -> Result<Value, String> {
    let prop: Prop = prop.parse().map_err(|e: tourney_core::Error| e.to_string())?;
    let k = 2.0;
    let (kind, rule, intervention) = match prop {
        Prop::P7 => (FamilyKind::SlowDrain, Some(ReserveRule::Approximating { eps: 0.5 }), None),
        Prop::P8 => (FamilyKind::SlowDrain, Some(ReserveRule::ConstantLimit { r_bar: 0.8 * k }), None),
        Prop::P9 => (FamilyKind::SlowDrain, Some(ReserveRule::Overshoot { r_bar: 1.1 * k }), None),
        Prop::P10 => (FamilyKind::SplitAtom { p: 0.5 }, Some(ReserveRule::FromBelowQuantile), None),
        Prop::S8 => (FamilyKind::SmoothedDiscrete { p: 1.0 }, None, Some(0.75)),
        _ => (FamilyKind::SlowDrain, None, None),
    };
    let spec = ExperimentSpec {
        prop,
        family: FamilySpec::new(kind, k, 2.5, levels).map_err(|e| e.to_string())?,
        rule,
        weak: weak(),
        n: 2,
        samples: samples.max(1) as u64,
        seed,
        intervention_p: intervention,
    };
    let table = sequences::run_limit_experiment(&spec, &OdeOptions::default()).map_err(|e| e.to_string())?;
    serde_json::to_value(&table).map_err(|e| e.to_string())
}

fn out(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

/// Equilibrium bid schedule on 201 points plus its regret check.
#[wasm_bindgen]
pub fn solve(n: usize, kind: &str, w_bar: f64, level: usize) -> Result<String, JsError> {
    out(solve_json(n, kind, w_bar, level))
}

/// Revenue of TA, SA, SA with reserve and the optimal auction.
#[wasm_bindgen]
pub fn compare(n: usize, kind: &str, w_bar: f64, level: usize, reserve: f64, samples: u32, seed: u64) -> Result<String, JsError> {
    out(compare_json(n, kind, w_bar, level, reserve, samples, seed))
}

/// Limit table for one experiment with its default family and rule.
#[wasm_bindgen]
pub fn sweep(prop: &str, levels: usize, samples: u32, seed: u64) -> Result<String, JsError> {
    out(sweep_json(prop, levels, samples, seed))
}
