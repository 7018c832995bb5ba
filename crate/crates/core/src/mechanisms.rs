//! Per-draw outcome rules and Monte Carlo estimators for the five mechanisms.
//!
//! Replicate `j` of an `N`-bidder run reads the uniforms keyed
//! `(seed, j·(N+3) + t)`: `t < N` for the weak values, `t = N` for the strong
//! value, then the tie-break and intervention uniforms.

use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::equilibrium::BidFunction;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{accumulate, RevenueEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    #[serde(rename = "TA")]
    Tournament,
    #[serde(rename = "SA")]
    Second,
    #[serde(rename = "SA_RESERVE")]
    SecondReserve,
    #[serde(rename = "TA_INTERVENTION")]
    TournamentIntervention,
    #[serde(rename = "TA_DISCRETE")]
    TournamentDiscrete,
}

impl Mechanism {
    pub fn label(&self) -> &'static str {
        match self {
            Mechanism::Tournament => "TA",
            Mechanism::Second => "SA",
            Mechanism::SecondReserve => "SA_RESERVE",
            Mechanism::TournamentIntervention => "TA_INTERVENTION",
            Mechanism::TournamentDiscrete => "TA_DISCRETE",
        }
    }

    pub fn needs_bid_fn(&self) -> bool {
        matches!(self, Mechanism::Tournament | Mechanism::TournamentIntervention)
    }
}

/// Strong value `k` with probability `p`, zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteAtom {
    pub k: f64,
    pub p: f64,
}

/// Serialised as either `{"k", "p"}` or a distribution object.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum StrongBidder {
    Atom(DiscreteAtom),
    Continuous(Distribution),
}

impl<'de> Deserialize<'de> for StrongBidder {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(de)?;
        if v.get("k").is_some() {
            serde_json::from_value(v).map(StrongBidder::Atom).map_err(D::Error::custom)
        } else {
            serde_json::from_value(v).map(StrongBidder::Continuous).map_err(D::Error::custom)
        }
    }
}

impl StrongBidder {
    fn sample(&self, seed: u64, index: u64) -> f64 {
        match self {
            StrongBidder::Continuous(d) => d.sample(seed, index),
            StrongBidder::Atom(a) => {
                if rng::uniform(seed, index) < a.p {
                    a.k
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionSpec {
    pub kind: Mechanism,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "F")]
    pub weak: Distribution,
    pub strong: StrongBidder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reserve: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid_fn: Option<BidFunction>,
}

impl AuctionSpec {
    pub fn new(kind: Mechanism, n: usize, weak: Distribution, strong: StrongBidder) -> Self {
        Self {
            kind,
            n,
            weak,
            strong,
            reserve: None,
            intervention_p: None,
            bid_fn: None,
        }
    }

    pub fn with_reserve(mut self, r: f64) -> Self {
        self.reserve = Some(r);
        self
    }

    pub fn with_intervention(mut self, p: f64) -> Self {
        self.intervention_p = Some(p);
        self
    }

    pub fn with_bid_fn(mut self, b: BidFunction) -> Self {
        self.bid_fn = Some(b);
        self
    }

    /// Every violated field rule, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let vbar = self.weak.hi();
        let kind = self.kind.label();
        if self.n < 2 {
            out.push(format!("N = {} but at least 2 weak bidders are required", self.n));
        }
        match (self.kind == Mechanism::SecondReserve, self.reserve) {
            (true, None) => out.push("SA_RESERVE requires a reserve".into()),
            (false, Some(_)) => out.push(format!("{kind} takes no reserve")),
            (true, Some(r)) if !(r >= vbar) => out.push(format!(
                "reserve {r} is below v̄ = {vbar}; the reserve formulas hold only for r >= v̄"
            )),
            _ => {}
        }
        match (self.kind == Mechanism::TournamentIntervention, self.intervention_p) {
            (true, None) => out.push("TA_INTERVENTION requires intervention_p".into()),
            (false, Some(_)) => out.push(format!("{kind} takes no intervention_p")),
            (true, Some(p)) if !(p > 0.0 && p <= 1.0) => {
                out.push(format!("intervention_p = {p} outside (0, 1]"))
            }
            _ => {}
        }
        match (self.kind.needs_bid_fn(), &self.bid_fn) {
            (true, None) => out.push(format!("{kind} requires a bid function")),
            (false, Some(_)) => out.push(format!("{kind} takes no bid function")),
            _ => {}
        }
        match (&self.strong, self.kind) {
            (StrongBidder::Atom(a), Mechanism::TournamentDiscrete) => {
                if !(a.k > vbar) {
                    out.push(format!("atom k = {} must exceed v̄ = {vbar}", a.k));
                }
                if !(0.0..=1.0).contains(&a.p) {
                    out.push(format!("atom probability {} outside [0, 1]", a.p));
                } else if !(a.p * a.k > vbar) {
                    out.push(format!(
                        "pk = {} <= v̄ = {vbar}: the atom equilibrium is not guaranteed",
                        a.p * a.k
                    ));
                }
            }
            (StrongBidder::Atom(_), _) => out.push(format!("{kind} needs a continuous strong law")),
            (StrongBidder::Continuous(_), Mechanism::TournamentDiscrete) => {
                out.push("TA_DISCRETE needs an atom strong law".into())
            }
            _ => {}
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(v.join("; ")))
        }
    }

    /// Uniforms consumed per replicate.
    pub fn stride(&self) -> u64 {
        self.n as u64 + 3
    }

    pub fn draw(&self, seed: u64, replicate: u64) -> Draw {
        let c = self.stride();
        let base = replicate * c;
        let n = self.n as u64;
        Draw {
            v: (0..n).map(|i| self.weak.sample(seed, base + i)).collect(),
            w: self.strong.sample(seed, base + n),
            tie_u: rng::uniform(seed, base + n + 1),
            intervention_u: rng::uniform(seed, base + n + 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub v: Vec<f64>,
    pub w: f64,
    pub tie_u: f64,
    pub intervention_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    Weak(usize),
    Strong,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub winner: Winner,
    pub price: f64,
    /// Value of the winner.
    pub surplus: f64,
    pub winning_bid: f64,
}

// index of the largest entry, ties split uniformly by u
fn argmax_tie(xs: &[f64], u: f64) -> usize {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] == top).collect();
    let pick = ((u * tied.len() as f64) as usize).min(tied.len() - 1);
    tied[pick]
}

fn top_two(xs: &[f64]) -> (f64, f64) {
    let mut a = f64::NEG_INFINITY;
    let mut b = f64::NEG_INFINITY;
    for &x in xs {
        if x > a {
            b = a;
            a = x;
        } else if x > b {
            b = x;
        }
    }
    (a, b)
}

/// Applies the mechanism's allocation and payment rule to one draw.
///
/// The spec is assumed valid; see [`AuctionSpec::validate`].
pub fn run_once(spec: &AuctionSpec, d: &Draw) -> Outcome {
    match spec.kind {
        Mechanism::Tournament | Mechanism::TournamentIntervention => {
            let bid = spec.bid_fn.as_ref().expect("validated spec carries a bid function");
            let bids: Vec<f64> = d.v.iter().map(|v| bid.value(*v)).collect();
            let keep = spec.intervention_p.map_or(true, |p| d.intervention_u < p);
            let strong_bid = if keep { d.w } else { 0.0 };
            second_stage(&bids, &d.v, strong_bid, d.w, d.tie_u, d.tie_u < 0.5)
        }
        Mechanism::TournamentDiscrete => {
            let StrongBidder::Atom(a) = &spec.strong else {
                panic!("TA_DISCRETE needs an atom strong law");
            };
            let bids: Vec<f64> = d.v.iter().map(|v| if *v > 0.0 { a.k } else { 0.0 }).collect();
            second_stage(&bids, &d.v, d.w, d.w, d.tie_u, true)
        }
        Mechanism::Second => {
            let mut all = d.v.clone();
            all.push(d.w);
            let i = argmax_tie(&all, d.tie_u);
            let (_, second) = top_two(&all);
            let winner = if i == spec.n { Winner::Strong } else { Winner::Weak(i) };
            Outcome {
                winner,
                price: second,
                surplus: all[i],
                winning_bid: all[i],
            }
        }
        Mechanism::SecondReserve => {
            let r = spec.reserve.expect("validated spec carries a reserve");
            if d.w >= r {
                Outcome {
                    winner: Winner::Strong,
                    price: r,
                    surplus: d.w,
                    winning_bid: d.w,
                }
            } else {
                let i = argmax_tie(&d.v, d.tie_u);
                let (_, second) = top_two(&d.v);
                Outcome {
                    winner: Winner::Weak(i),
                    price: second,
                    surplus: d.v[i],
                    winning_bid: d.v[i],
                }
            }
        }
    }
}

fn second_stage(
    bids: &[f64],
    values: &[f64],
    strong_bid: f64,
    strong_value: f64,
    tie_u: f64,
    strong_wins_tie: bool,
) -> Outcome {
    let i = argmax_tie(bids, tie_u);
    let weak_bid = bids[i];
    let strong_wins = strong_bid > weak_bid || (strong_bid == weak_bid && strong_wins_tie);
    if strong_wins {
        Outcome {
            winner: Winner::Strong,
            price: weak_bid,
            surplus: strong_value,
            winning_bid: strong_bid,
        }
    } else {
        Outcome {
            winner: Winner::Weak(i),
            price: strong_bid,
            surplus: values[i],
            winning_bid: weak_bid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub revenue: RevenueEstimate,
    pub surplus: RevenueEstimate,
}

/// Monte Carlo revenue and surplus over `n` replicates.
pub fn simulate(spec: &AuctionSpec, n: u64, seed: u64) -> Result<Simulation> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Domain("need at least one replicate".into()));
    }
    let [rev, sur] = accumulate(n, |j| {
        let o = run_once(spec, &spec.draw(seed, j));
        [o.price, o.surplus]
    });
    Ok(Simulation {
        revenue: rev.estimate(seed),
        surplus: sur.estimate(seed),
    })
}

/// Per-draw table `j,winner,price,surplus` for small runs (`n <= 10⁴`).
pub fn draws_csv(spec: &AuctionSpec, n: u64, seed: u64) -> Result<String> {
    spec.validate()?;
    if n > 10_000 {
        return Err(Error::Domain(format!("per-draw output is limited to 10⁴ draws, got {n}")));
    }
    let mut out = String::from("j,winner,price,surplus\n");
    for j in 0..n {
        let o = run_once(spec, &spec.draw(seed, j));
        let who = match o.winner {
            Winner::Weak(i) => format!("weak{}", i + 1),
            Winner::Strong => "strong".into(),
            Winner::None => "none".into(),
        };
        out.push_str(&format!("{j},{who},{},{}\n", o.price, o.surplus));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReserveValues {
    pub revenue: f64,
    pub surplus: f64,
}

/// Second-price revenue and surplus with reserve `r >= v̄` on the strong
/// bidder:
/// `R = G(r) E[v_{2:N}] + (1 - G(r)) r`,
/// `S = G(r) E[v_{1:N}] + (1 - G(r)) E[w | w >= r]`.
pub fn sa_reserve_closed_form(
    weak: &Distribution,
    strong: &Distribution,
    n: usize,
    r: f64,
) -> Result<ReserveValues> {
    if !(r >= weak.hi()) {
        return Err(Error::InvalidSpec(format!(
            "reserve {r} is below v̄ = {}; the reserve formulas hold only for r >= v̄",
            weak.hi()
        )));
    }
    let g = strong.cdf(r);
    let v1 = weak.order_stat_mean(n, 1)?;
    let v2 = weak.order_stat_mean(n, 2)?;
    let tail = 1.0 - g;
    let above = if tail > 1e-14 && r < strong.hi() {
        tail * strong.cond_mean_above(r)?
    } else {
        0.0
    };
    Ok(ReserveValues {
        revenue: g * v2 + tail * r,
        surplus: g * v1 + above,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn u(lo: f64, hi: f64) -> Distribution {
        Distribution::uniform(lo, hi).unwrap()
    }

    fn draw(v: &[f64], w: f64) -> Draw {
        Draw {
            v: v.to_vec(),
            w,
            tie_u: 0.3,
            intervention_u: 0.9,
        }
    }

    fn doubling() -> BidFunction {
        BidFunction::from_nodes(vec![0.0, 1.0], vec![0.0, 2.0], vec![2.0, 2.0], 1.0).unwrap()
    }

    #[test]
    fn tournament_rule_on_stub_bids() {
        let spec = AuctionSpec::new(Mechanism::Tournament, 2, u(0.0, 1.0), StrongBidder::Continuous(u(0.0, 2.0)))
            .with_bid_fn(doubling());
        let o = run_once(&spec, &draw(&[0.4, 0.3], 0.5));
        assert_eq!(o.winner, Winner::Weak(0));
        assert_relative_eq!(o.price, 0.5);
        assert_relative_eq!(o.surplus, 0.4);
    }

    #[test]
    fn discrete_tie_goes_to_strong() {
        let spec = AuctionSpec::new(
            Mechanism::TournamentDiscrete,
            2,
            u(0.0, 1.0),
            StrongBidder::Atom(DiscreteAtom { k: 2.0, p: 0.75 }),
        );
        let o = run_once(&spec, &draw(&[0.4, 0.3], 2.0));
        assert_eq!(o.winner, Winner::Strong);
        assert_eq!(o.price, 2.0);
        let o = run_once(&spec, &draw(&[0.4, 0.3], 0.0));
        assert!(matches!(o.winner, Winner::Weak(_)));
        assert_eq!(o.price, 0.0);
    }

    #[test]
    fn reserve_rule() {
        let spec = AuctionSpec::new(Mechanism::SecondReserve, 2, u(0.0, 1.0), StrongBidder::Continuous(u(0.0, 2.0)))
            .with_reserve(1.5);
        let o = run_once(&spec, &draw(&[0.4, 0.3], 1.9));
        assert_eq!(o.winner, Winner::Strong);
        assert_eq!(o.price, 1.5);
        let o = run_once(&spec, &draw(&[0.4, 0.3], 1.2));
        assert_eq!(o.winner, Winner::Weak(0));
        assert_eq!(o.price, 0.3);
    }

    #[test]
    fn intervention_zeroes_strong_bid() {
        let spec = AuctionSpec::new(
            Mechanism::TournamentIntervention,
            2,
            u(0.0, 1.0),
            StrongBidder::Continuous(u(0.0, 2.0)),
        )
        .with_bid_fn(doubling())
        .with_intervention(0.75);
        let o = run_once(&spec, &draw(&[0.4, 0.3], 1.5));
        assert_eq!(o.winner, Winner::Weak(0));
        assert_eq!(o.price, 0.0);
    }

    #[test]
    fn low_reserve_is_rejected() {
        let spec = AuctionSpec::new(Mechanism::SecondReserve, 2, u(0.0, 1.0), StrongBidder::Continuous(u(0.0, 2.0)))
            .with_reserve(0.5);
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
        assert!(sa_reserve_closed_form(&u(0.0, 1.0), &u(0.0, 2.0), 2, 0.5).is_err());
    }

    #[test]
    fn closed_form_values() {
        let r = sa_reserve_closed_form(&u(0.0, 1.0), &u(0.0, 2.0), 2, 1.5).unwrap();
        assert_relative_eq!(r.revenue, 0.625, epsilon = 1e-12);
        assert_relative_eq!(r.surplus, 0.9375, epsilon = 1e-12);
        let top = sa_reserve_closed_form(&u(0.0, 1.0), &u(0.0, 2.0), 2, 2.0).unwrap();
        assert_relative_eq!(top.revenue, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = AuctionSpec::new(Mechanism::Second, 3, u(0.0, 1.0), StrongBidder::Continuous(u(0.0, 2.0)));
        let a = simulate(&spec, 10_000, 11).unwrap();
        let b = simulate(&spec, 10_000, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate(&spec, 10_000, 12).unwrap();
        assert_ne!(a.revenue.mean, c.revenue.mean);
    }

    #[test]
    fn per_draw_csv_is_bounded() {
        let spec = AuctionSpec::new(Mechanism::Second, 2, u(0.0, 1.0), StrongBidder::Continuous(u(0.0, 2.0)));
        let csv = draws_csv(&spec, 3, 1).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(draws_csv(&spec, 10_001, 1).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let js = r#"{"kind":"TA_DISCRETE","N":2,"F":{"kind":"uniform","params":[],"support":[0,1]},
                     "strong":{"k":2.0,"p":0.75}}"#;
        let spec: AuctionSpec = serde_json::from_str(js).unwrap();
        assert_eq!(spec.kind, Mechanism::TournamentDiscrete);
        assert!(spec.validate().is_ok());
    }
}
