//! Strong-bidder families collapsing onto an atom at `k`, their diagnostics,
//! reserve rules and the limit experiments built on them.
//!
//! Every member `G_l` mixes three raised-cosine/uniform pieces on `[0, w̄]`:
//! a low half-bump at 0 (mass `δ_l`), a bump around `k` (mass
//! `1 - δ_l - ε_l`) and a uniform floor (mass `ε_l`) that keeps the density
//! positive. Widths halve with each index.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dist::{Component, Distribution, StrongLaw, SupportInterval};
use crate::equilibrium::{self, Instance, OdeOptions};
use crate::error::{Error, Result};
use crate::mechanisms::{self, AuctionSpec, Mechanism, StrongBidder};
use crate::myerson;
use crate::quad::{integrate_with, QuadConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// Low mass `δ_l = 1/(4 l²)` draining into a bump at 0.
    SlowDrain,
    /// Fixed low mass 1/4 spread over `[0, k/2]`.
    FastDrain,
    /// Low bump with mass `1 - p` and atom bump with mass `p`.
    SmoothedDiscrete { p: f64 },
    /// Slow drain with the atom bump shifted so that `G_l(k) → p`.
    SplitAtom { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(flatten)]
    pub kind: FamilyKind,
    pub k: f64,
    pub w_bar: f64,
    #[serde(rename = "L")]
    pub levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberWeights {
    pub low: f64,
    pub floor: f64,
    pub atom: f64,
    pub low_width: f64,
    pub atom_width: f64,
    pub atom_center: f64,
}

// (t + 1)/2 + sin(πt)/(2π): mass of a unit bump left of center + t·width
fn bump_mass_left(t: f64) -> f64 {
    0.5 * (t + 1.0) + (PI * t).sin() / (2.0 * PI)
}

fn bump_offset_for_mass(p: f64) -> f64 {
    crate::dist::invert_increasing(
        bump_mass_left,
        |t| 0.5 * (1.0 + (PI * t).cos()),
        p,
        -1.0,
        1.0,
    )
}

impl FamilySpec {
    pub fn new(kind: FamilyKind, k: f64, w_bar: f64, levels: usize) -> Result<Self> {
        let f = Self {
            kind,
            k,
            w_bar,
            levels,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn slow_drain(k: f64, w_bar: f64, levels: usize) -> Result<Self> {
        Self::new(FamilyKind::SlowDrain, k, w_bar, levels)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.w_bar > self.k) {
            return Err(Error::Domain(format!(
                "family needs 0 < k < w̄, got k = {}, w̄ = {}",
                self.k, self.w_bar
            )));
        }
        if self.levels == 0 {
            return Err(Error::Domain("family needs at least one index".into()));
        }
        match self.kind {
            FamilyKind::SmoothedDiscrete { p } | FamilyKind::SplitAtom { p }
                if !(0.0..=1.0).contains(&p) =>
            {
                Err(Error::Domain(format!("family probability {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            FamilyKind::SlowDrain => "slow_drain".into(),
            FamilyKind::FastDrain => "fast_drain".into(),
            FamilyKind::SmoothedDiscrete { p } => format!("smoothed_discrete(p={p})"),
            FamilyKind::SplitAtom { p } => format!("split_atom(p={p})"),
        }
    }

    pub fn weights(&self, l: usize) -> MemberWeights {
        let lf = l as f64;
        let shrink = 0.5f64.powi(l as i32 - 1);
        let low_width = 0.1 * self.k * shrink;
        let atom_width = (0.125 * self.k).min(0.5 * (self.w_bar - self.k)) * shrink;
        let drain = 0.25 / (lf * lf);
        let (low, floor, center) = match self.kind {
            FamilyKind::SlowDrain => (drain, (drain / (4.0 * lf)).max(1e-4), self.k),
            FamilyKind::FastDrain => (0.25, (0.0625 / (lf * lf)).max(1e-4), self.k),
            FamilyKind::SmoothedDiscrete { p } => {
                let floor = (0.0625 / (lf * lf)).max(1e-4);
                ((1.0 - p) * (1.0 - floor), floor, self.k)
            }
            FamilyKind::SplitAtom { p } => {
                let t = bump_offset_for_mass(p);
                (drain, (drain / (4.0 * lf)).max(1e-4), self.k - t * atom_width)
            }
        };
        MemberWeights {
            low,
            floor,
            atom: 1.0 - low - floor,
            low_width: if self.kind == FamilyKind::FastDrain { 0.25 * self.k } else { low_width },
            atom_width,
            atom_center: center,
        }
    }

    /// Member `G_l`, `l >= 1`.
    pub fn member(&self, l: usize) -> Result<Distribution> {
        if l == 0 {
            return Err(Error::Domain("family indices start at 1".into()));
        }
        let w = self.weights(l);
        let s = SupportInterval::new(0.0, self.w_bar)?;
        let low_center = if self.kind == FamilyKind::FastDrain { 0.25 * self.k } else { 0.0 };
        let mut parts = Vec::new();
        if w.low > 0.0 {
            parts.push((w.low, Component::raised_cosine(low_center, w.low_width, 0.0, self.w_bar)?));
        }
        if w.atom > 0.0 {
            parts.push((
                w.atom,
                Component::raised_cosine(w.atom_center, w.atom_width, 0.0, self.w_bar)?,
            ));
        }
        parts.push((w.floor, Component::uniform(0.0, self.w_bar)?));
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let last = parts.len() - 1;
        parts[last].0 += 1.0 - total;
        Distribution::mixture(s, parts)
    }

    pub fn members(&self) -> Result<Vec<Distribution>> {
        (1..=self.levels).map(|l| self.member(l)).collect()
    }

    /// `lim G_l(k)` implied by the construction.
    pub fn limit_mass_at_k(&self) -> f64 {
        match self.kind {
            FamilyKind::SlowDrain => 0.5,
            FamilyKind::FastDrain => 0.25 + 0.75 * 0.5,
            FamilyKind::SmoothedDiscrete { p } => 1.0 - p + 0.5 * p,
            FamilyKind::SplitAtom { p } => p,
        }
    }

    /// First index from which `E[w_l] >= v̄` holds through `L`.
    pub fn strong_from(&self, v_bar: f64) -> Result<Option<usize>> {
        let mut first = None;
        for l in (1..=self.levels).rev() {
            if self.member(l)?.mean() >= v_bar {
                first = Some(l);
            } else {
                break;
            }
        }
        Ok(first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub l: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub tol: f64,
    pub rows: Vec<ConcentrationRow>,
    pub passed: bool,
}

fn nondecreasing_tail(xs: &[f64]) -> bool {
    let start = xs.len() / 2;
    xs[start..].windows(2).all(|w| w[1] >= w[0])
}

fn nonincreasing_tail(xs: &[f64]) -> bool {
    let start = xs.len() / 2;
    xs[start..].windows(2).all(|w| w[1] <= w[0])
}

/// Final mass near `k` needed by the concentration check.
pub const CONCENTRATION_FLOOR: f64 = 0.9;

/// Mass of `[k - tol, k + tol]` per index; passes when it rises over the
/// second half of the range and ends at [`CONCENTRATION_FLOOR`] or above.
pub fn check_concentration(fam: &FamilySpec, tol: f64) -> Result<ConcentrationReport> {
    let mut rows = Vec::new();
    for l in 1..=fam.levels {
        let g = fam.member(l)?;
        rows.push(ConcentrationRow {
            l,
            mass: g.mass_between(fam.k - tol, fam.k + tol),
        });
    }
    let masses: Vec<f64> = rows.iter().map(|r| r.mass).collect();
    let passed = nondecreasing_tail(&masses) && masses[masses.len() - 1] >= CONCENTRATION_FLOOR;
    Ok(ConcentrationReport { tol, rows, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrainRow {
    pub l: usize,
    /// `(G(c2) - G(c1)) / G(c2)`.
    pub ratio: f64,
    /// `E[w | w <= c2]`.
    pub cond_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrainReport {
    pub c1: f64,
    pub c2: f64,
    pub rows: Vec<DrainRow>,
    pub ratio_passed: bool,
    pub cond_mean_passed: bool,
    /// Both diagnostics reach the same verdict.
    pub agree: bool,
}

/// Final values at or below this fraction count as drained.
pub const DRAIN_THRESHOLD: f64 = 0.05;

/// Ratio and conditional-mean diagnostics for one `(c1, c2)` pair.
pub fn check_slow_drain(fam: &FamilySpec, c1: f64, c2: f64) -> Result<DrainReport> {
    if !(0.0 < c1 && c1 < c2 && c2 < fam.k) {
        return Err(Error::Domain(format!(
            "need 0 < c1 < c2 < k, got c1 = {c1}, c2 = {c2}, k = {}",
            fam.k
        )));
    }
    let mut rows = Vec::new();
    for l in 1..=fam.levels {
        let g = fam.member(l)?;
        let g2 = g.cdf(c2);
        rows.push(DrainRow {
            l,
            ratio: (g2 - g.cdf(c1)) / g2,
            cond_mean: g.phi(c2)?,
        });
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let means: Vec<f64> = rows.iter().map(|r| r.cond_mean / c2).collect();
    let ratio_passed = nonincreasing_tail(&ratios) && ratios[ratios.len() - 1] <= DRAIN_THRESHOLD;
    let cond_mean_passed = nonincreasing_tail(&means) && means[means.len() - 1] <= DRAIN_THRESHOLD;
    Ok(DrainReport {
        c1,
        c2,
        rows,
        ratio_passed,
        cond_mean_passed,
        agree: ratio_passed == cond_mean_passed,
    })
}

/// Six `(c1, c2)` pairs from the points `k · 0.9 · 3^{-j}`, `j = 0..3`.
pub fn default_drain_pairs(k: f64) -> Vec<(f64, f64)> {
    let pts: Vec<f64> = (0..4).rev().map(|j| k * 0.9 / 3f64.powi(j)).collect();
    let mut out = Vec::new();
    for i in 0..4 {
        for j in i + 1..4 {
            out.push((pts[i], pts[j]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCheck {
    pub family: String,
    pub concentration: ConcentrationReport,
    pub drain: Vec<DrainReport>,
    pub concentrates: bool,
    pub drains_slowly: bool,
    pub diagnostics_agree: bool,
    /// First index with `E[w_l] >= v̄`.
    pub strong_from: Option<usize>,
}

/// Concentration check at `tol = 0.05 k` plus the drain check on the
/// default pairs.
pub fn check_family(fam: &FamilySpec, v_bar: f64) -> Result<FamilyCheck> {
    let concentration = check_concentration(fam, 0.05 * fam.k)?;
    let drain = default_drain_pairs(fam.k)
        .into_iter()
        .map(|(a, b)| check_slow_drain(fam, a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(FamilyCheck {
        family: fam.name(),
        concentrates: concentration.passed,
        drains_slowly: drain.iter().all(|d| d.ratio_passed),
        diagnostics_agree: drain.iter().all(|d| d.agree),
        concentration,
        drain,
        strong_from: fam.strong_from(v_bar)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReserveRule {
    /// `r_l = r̄` for every index, `v̄ < r̄ < k`.
    ConstantLimit { r_bar: f64 },
    /// `r_l = r̄ > k` for every index.
    Overshoot { r_bar: f64 },
    /// `r_l ↑ k` from below with `G_l(r_l)` within `2^{-(l+1)}` of `G_l(k)`.
    FromBelowQuantile,
    /// `r_l = k - ε / n_l` with `n_l` the largest `n` such that
    /// `G_l(k - ε/n) <= 1/n`.
    Approximating { eps: f64 },
}

impl ReserveRule {
    pub fn name(&self) -> &'static str {
        match self {
            ReserveRule::ConstantLimit { .. } => "constant_limit",
            ReserveRule::Overshoot { .. } => "overshoot",
            ReserveRule::FromBelowQuantile => "from_below_quantile",
            ReserveRule::Approximating { .. } => "approximating",
        }
    }

    /// Reserve per index together with the block number `n_l` for the
    /// approximating rule.
    pub fn reserves(&self, fam: &FamilySpec) -> Result<Vec<(f64, Option<u64>)>> {
        let k = fam.k;
        let mut out: Vec<(f64, Option<u64>)> = Vec::new();
        for l in 1..=fam.levels {
            let entry = match *self {
                ReserveRule::ConstantLimit { r_bar } | ReserveRule::Overshoot { r_bar } => {
                    (r_bar, None)
                }
                ReserveRule::FromBelowQuantile => {
                    let prev = out.last().map_or(0.0, |p| p.0);
                    (reserve_from_below(fam, l, prev)?, None)
                }
                ReserveRule::Approximating { eps } => {
                    let g = fam.member(l)?;
                    let n = approximating_block(&g, k, eps);
                    (k - eps / n as f64, Some(n))
                }
            };
            out.push(entry);
        }
        Ok(out)
    }
}

/// Reserve just below `k` with `G_l(k) - 2^{-(l+1)} <= G_l(r_l) < G_l(k)`,
/// at least `k (1 - 2^{-l})` and above `prev`.
pub fn reserve_from_below(fam: &FamilySpec, l: usize, prev: f64) -> Result<f64> {
    let g = fam.member(l)?;
    let k = fam.k;
    let gk = g.cdf(k);
    let slack = 0.5f64.powi(l as i32 + 1);
    let by_mass = g.quantile((gk - slack).max(0.0));
    let by_distance = k * (1.0 - 0.5f64.powi(l as i32));
    let mut r = by_mass.max(by_distance);
    if r <= prev {
        r = 0.5 * (prev + k);
    }
    if !(r < k) {
        return Err(Error::Domain(format!("reserve {r} at index {l} is not below k")));
    }
    Ok(r)
}

fn approximating_block(g: &Distribution, k: f64, eps: f64) -> u64 {
    let ok = |n: u64| g.cdf(k - eps / n as f64) <= 1.0 / n as f64;
    if !ok(1) {
        return 1;
    }
    let cap = 1u64 << 20;
    let mut hi = 2;
    while hi < cap && ok(hi) {
        hi *= 2;
    }
    if ok(hi) {
        return hi;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prop {
    P4,
    P5,
    P6,
    P7,
    P8,
    P9,
    P10,
    S8,
}

impl std::str::FromStr for Prop {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "P4" => Prop::P4,
            "P5" => Prop::P5,
            "P6" => Prop::P6,
            "P7" => Prop::P7,
            "P8" => Prop::P8,
            "P9" => Prop::P9,
            "P10" => Prop::P10,
            "S8" => Prop::S8,
            _ => return Err(Error::Domain(format!("unknown experiment {s}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub prop: Prop,
    pub family: FamilySpec,
    #[serde(default)]
    pub rule: Option<ReserveRule>,
    #[serde(rename = "F")]
    pub weak: Distribution,
    #[serde(rename = "N")]
    pub n: usize,
    pub samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub intervention_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub l: usize,
    pub r_mean: f64,
    pub r_se: f64,
    pub s_mean: Option<f64>,
    pub s_se: Option<f64>,
    pub target: f64,
    pub gap: f64,
    pub solver_method: String,
    pub max_regret: Option<f64>,
    pub reserve: Option<f64>,
    pub block: Option<u64>,
    pub ode_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitTable {
    pub prop: Prop,
    pub family: String,
    pub rule: Option<String>,
    pub rows: Vec<LimitRow>,
    pub target: f64,
    pub surplus_target: Option<f64>,
    pub last: f64,
    pub richardson: Option<f64>,
    pub gap: f64,
    pub checks: Vec<Check>,
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

impl LimitTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,R_mean,R_se,S_mean,S_se,target,gap,solver_method,max_regret\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.l,
                r.r_mean,
                r.r_se,
                opt(r.s_mean),
                opt(r.s_se),
                r.target,
                r.gap,
                r.solver_method,
                opt(r.max_regret)
            ));
        }
        out
    }

    /// Gaps of the last `m` rows strictly decrease.
    pub fn gap_shrinks_over_last(&self, m: usize) -> bool {
        let g: Vec<f64> = self.rows.iter().map(|r| r.gap).collect();
        g.len() >= m && g[g.len() - m..].windows(2).all(|w| w[1] < w[0])
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// `E[max(v_{1:N}, w)] = ∫ (1 - F(x)^N G(x)) dx`.
pub fn expected_max_value(weak: &Distribution, n: usize, strong: &Distribution) -> f64 {
    let hi = weak.hi().max(strong.hi());
    let mut knots = weak.knots().to_vec();
    knots.extend_from_slice(strong.knots());
    integrate_with(
        |x| 1.0 - weak.cdf(x).powi(n as i32) * strong.cdf(x),
        0.0,
        hi,
        &knots,
        &QuadConfig::default(),
    )
    .value
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Precondition(msg.into()))
    }
}

/// Runs one limit experiment over the family indices `1..=L`.
pub fn run_limit_experiment(spec: &ExperimentSpec, ode: &OdeOptions) -> Result<LimitTable> {
    let fam = &spec.family;
    fam.validate()?;
    let k = fam.k;
    let vbar = spec.weak.hi();
    let n = spec.n;
    require(n >= 2, format!("need N >= 2 weak bidders, got {n}"))?;
    require(k > vbar, format!("atom k = {k} must exceed v̄ = {vbar}"))?;
    let needs_atom_limit = !matches!(spec.prop, Prop::P9);
    if needs_atom_limit {
        let conc = check_concentration(fam, 0.05 * k)?;
        require(
            conc.passed,
            format!("{:?} needs a family concentrating at k; {} does not", spec.prop, fam.name()),
        )?;
    }
    if matches!(spec.prop, Prop::P4 | Prop::P5 | Prop::P6 | Prop::P10) {
        let drains = default_drain_pairs(k)
            .into_iter()
            .map(|(a, b)| check_slow_drain(fam, a, b).map(|d| d.ratio_passed))
            .collect::<Result<Vec<_>>>()?;
        require(
            drains.iter().all(|d| *d),
            format!(
                "{:?} needs low mass draining toward 0; {} fails the slow-drain check",
                spec.prop,
                fam.name()
            ),
        )?;
    }
    let v1 = spec.weak.order_stat_mean(n, 1)?;
    let v2 = spec.weak.order_stat_mean(n, 2)?;

    let rule_needed = |ok: bool, what: &str| require(ok, format!("{:?} needs {what}", spec.prop));
    let (target, surplus_target) = match spec.prop {
        Prop::P4 | Prop::P5 | Prop::P6 | Prop::P7 => (k, Some(k)),
        Prop::P8 => match spec.rule {
            Some(ReserveRule::ConstantLimit { r_bar }) if r_bar > vbar && r_bar < k => (r_bar, Some(k)),
            _ => return Err(Error::Precondition("P8 needs a constant_limit rule with v̄ < r̄ < k".into())),
        },
        Prop::P9 => match spec.rule {
            Some(ReserveRule::Overshoot { r_bar }) | Some(ReserveRule::ConstantLimit { r_bar })
                if r_bar > k && r_bar < fam.w_bar =>
            {
                (v2, Some(v1))
            }
            _ => return Err(Error::Precondition("P9 needs a reserve limit r̄ in (k, w̄)".into())),
        },
        Prop::P10 => {
            let p = fam.limit_mass_at_k();
            (p * v2 + (1.0 - p) * k, Some(p * v1 + (1.0 - p) * k))
        }
        Prop::S8 => {
            let p = spec
                .intervention_p
                .ok_or_else(|| Error::Precondition("S8 needs intervention_p".into()))?;
            require(
                p > 0.0 && p <= 1.0 && p * k > vbar,
                format!("S8 needs p in (0, 1] with pk > v̄, got p = {p}"),
            )?;
            (p * k, None)
        }
    };
    match spec.prop {
        Prop::P7 => rule_needed(matches!(spec.rule, Some(ReserveRule::Approximating { .. })), "an approximating rule")?,
        Prop::P10 => rule_needed(matches!(spec.rule, Some(ReserveRule::FromBelowQuantile)), "a from_below_quantile rule")?,
        _ => {}
    }
    let reserves = match (spec.prop, spec.rule) {
        (Prop::P7 | Prop::P8 | Prop::P9 | Prop::P10, Some(rule)) => Some(rule.reserves(fam)?),
        _ => None,
    };

    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for l in 1..=fam.levels {
        let g = fam.member(l)?;
        let row = match spec.prop {
            Prop::P4 | Prop::P6 | Prop::S8 => {
                let law = match spec.prop {
                    Prop::S8 => StrongLaw::with_intervention(g.clone(), spec.intervention_p.unwrap())?,
                    _ => StrongLaw::plain(g.clone()),
                };
                let inst = Instance::new(spec.weak.clone(), law, n)?;
                let (bid, report) = equilibrium::solve_ode(&inst, ode)?;
                let br = equilibrium::verify_best_response(&inst, &bid, 50, 200);
                let (kind, p) = match spec.prop {
                    Prop::S8 => (Mechanism::TournamentIntervention, spec.intervention_p),
                    _ => (Mechanism::Tournament, None),
                };
                let mut auction =
                    AuctionSpec::new(kind, n, spec.weak.clone(), StrongBidder::Continuous(g.clone()))
                        .with_bid_fn(bid);
                auction.intervention_p = p;
                let sim = mechanisms::simulate(&auction, spec.samples, spec.seed)?;
                LimitRow {
                    l,
                    r_mean: sim.revenue.mean,
                    r_se: sim.revenue.std_error,
                    s_mean: Some(sim.surplus.mean),
                    s_se: Some(sim.surplus.std_error),
                    target,
                    gap: (sim.revenue.mean - target).abs(),
                    solver_method: "ode".into(),
                    max_regret: Some(br.max_regret),
                    reserve: None,
                    block: None,
                    ode_residual: Some(report.max_ode_residual),
                }
            }
            Prop::P5 => {
                let oa = myerson::oa_revenue(Some(&spec.weak), n, Some(&g), spec.samples, spec.seed);
                LimitRow {
                    l,
                    r_mean: oa.mean,
                    r_se: oa.std_error,
                    s_mean: None,
                    s_se: None,
                    target,
                    gap: (oa.mean - target).abs(),
                    solver_method: "monte_carlo".into(),
                    max_regret: None,
                    reserve: None,
                    block: None,
                    ode_residual: None,
                }
            }
            Prop::P7 | Prop::P8 | Prop::P9 | Prop::P10 => {
                let (r, block) = reserves.as_ref().unwrap()[l - 1];
                let cf = mechanisms::sa_reserve_closed_form(&spec.weak, &g, n, r)?;
                LimitRow {
                    l,
                    r_mean: cf.revenue,
                    r_se: 0.0,
                    s_mean: Some(cf.surplus),
                    s_se: Some(0.0),
                    target,
                    gap: (cf.revenue - target).abs(),
                    solver_method: "closed_form".into(),
                    max_regret: None,
                    reserve: Some(r),
                    block,
                    ode_residual: None,
                }
            }
        };
        if spec.prop == Prop::P4 {
            let top = expected_max_value(&spec.weak, n, &g);
            let s = row.s_mean.unwrap();
            let slack = 3.0 * (row.r_se + row.s_se.unwrap());
            checks.push(Check {
                name: format!("surplus bracket l={l}"),
                passed: s + slack >= row.r_mean && s <= top + slack,
                detail: format!("R = {}, S = {s}, E[max value] = {top}", row.r_mean),
            });
        }
        if let (Prop::P7, Some(nb)) = (spec.prop, row.block) {
            let nb = nb as f64;
            let bound = (1.0 - 1.0 / nb) * row.reserve.unwrap();
            checks.push(Check {
                name: format!("block bound l={l}"),
                passed: row.r_mean >= bound,
                detail: format!("R = {} vs (1 - 1/n)(k - ε/n) = {bound} with n = {nb}", row.r_mean),
            });
        }
        if spec.prop == Prop::P10 {
            let r = row.reserve.unwrap();
            let (gr, gk) = (g.cdf(r), g.cdf(k));
            checks.push(Check {
                name: format!("reserve bracket l={l}"),
                passed: r < k && gr < gk && gr > gk - 1.0 / l as f64,
                detail: format!("r = {r}, G(r) = {gr}, G(k) = {gk}"),
            });
        }
        rows.push(row);
    }

    if spec.prop == Prop::P4 {
        // close revenue forces close surplus
        let gamma = 0.1 * k;
        let ok = rows.iter().all(|r| {
            (r.r_mean - k).abs() > gamma || (r.s_mean.unwrap() - k).abs() <= gamma + 3.0 * r.s_se.unwrap()
        });
        checks.push(Check {
            name: "surplus follows revenue".into(),
            passed: ok,
            detail: format!("rows with |R - k| <= {gamma} have |S - k| <= {gamma}"),
        });
    }
    let last = rows[rows.len() - 1].r_mean;
    let richardson = if rows.len() >= 2 {
        Some(2.0 * last - rows[rows.len() - 2].r_mean)
    } else {
        None
    };
    Ok(LimitTable {
        prop: spec.prop,
        family: fam.name(),
        rule: spec.rule.map(|r| r.name().to_string()),
        rows,
        target,
        surplus_target,
        last,
        richardson,
        gap: (last - target).abs(),
        checks,
    })
}
