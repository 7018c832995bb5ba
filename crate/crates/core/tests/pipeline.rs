use tourney_core::dist::{Distribution, StrongLaw};
use tourney_core::equilibrium::{self, Instance, OdeOptions, PicardOptions};
use tourney_core::mechanisms::{self, AuctionSpec, Mechanism, StrongBidder};
use tourney_core::sequences::{self, ExperimentSpec, FamilyKind, FamilySpec, Prop, ReserveRule};
use tourney_core::Error;

fn u(lo: f64, hi: f64) -> Distribution {
    Distribution::uniform(lo, hi).unwrap()
}

fn bump_instance(n: usize) -> Instance {
    let g = FamilySpec::slow_drain(2.0, 2.5, 8).unwrap().member(3).unwrap();
    Instance::plain(u(0.0, 1.0), g, n).unwrap()
}

#[test]
fn picard_approaches_ode_off_the_linear_case() {
    let inst = bump_instance(2);
    let (ode, _) = equilibrium::solve_ode(&inst, &OdeOptions::default()).unwrap();
    let mut last = f64::INFINITY;
    for m in [2001, 8001, 32001] {
        let opts = PicardOptions { grid_size: m, ..Default::default() };
        let (pic, rep) = equilibrium::solve_picard(&inst, &opts).unwrap();
        assert!(rep.picard_iterations > 1);
        let d = equilibrium::sup_distance(&ode, &pic);
        assert!(d < last, "m = {m}: {d} >= {last}");
        last = d;
    }
    assert!(last < 5e-3, "{last}");
}

#[test]
fn equilibrium_bids_beat_the_linear_guess() {
    let inst = bump_instance(3);
    let (bid, _) = equilibrium::solve_ode(&inst, &OdeOptions::default()).unwrap();
    let eq = equilibrium::verify_best_response(&inst, &bid, 50, 200);
    let linear = bid.scaled(1.02).unwrap();
    let off = equilibrium::verify_best_response(&inst, &linear, 50, 200);
    assert!(eq.max_regret <= 1e-4);
    assert!(off.max_regret > 10.0 * eq.max_regret.max(1e-8));
}

#[test]
fn tournament_revenue_between_second_price_and_atom() {
    let inst = bump_instance(2);
    let (bid, _) = equilibrium::solve_ode(&inst, &OdeOptions::default()).unwrap();
    let g = inst.strong.dist.clone();
    let ta = AuctionSpec::new(Mechanism::Tournament, 2, u(0.0, 1.0), StrongBidder::Continuous(g.clone()))
        .with_bid_fn(bid);
    let sa = AuctionSpec::new(Mechanism::Second, 2, u(0.0, 1.0), StrongBidder::Continuous(g));
    let rt = mechanisms::simulate(&ta, 100_000, 11).unwrap().revenue;
    let rs = mechanisms::simulate(&sa, 100_000, 11).unwrap().revenue;
    assert!(rt.mean > rs.mean);
}

#[test]
fn intervention_instance_solves_with_square_root_start() {
    let g = FamilySpec::new(FamilyKind::SmoothedDiscrete { p: 1.0 }, 2.0, 2.5, 4)
        .unwrap()
        .member(4)
        .unwrap();
    let inst = Instance::new(u(0.0, 1.0), StrongLaw::with_intervention(g, 0.75).unwrap(), 2).unwrap();
    let (bid, _) = equilibrium::solve_ode(&inst, &OdeOptions::default()).unwrap();
    assert_eq!(bid.start_exponent(), 0.5);
    let br = equilibrium::verify_best_response(&inst, &bid, 50, 200);
    assert!(br.max_regret <= 1e-4, "{}", br.max_regret);
    assert!(matches!(
        equilibrium::solve_picard(&inst, &PicardOptions::default()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn limit_tables_serialize_and_extrapolate() {
    let spec = ExperimentSpec {
        prop: Prop::P8,
        family: FamilySpec::slow_drain(2.0, 2.5, 6).unwrap(),
        rule: Some(ReserveRule::ConstantLimit { r_bar: 1.6 }),
        weak: u(0.0, 1.0),
        n: 2,
        samples: 0,
        seed: 0,
        intervention_p: None,
    };
    let t = sequences::run_limit_experiment(&spec, &OdeOptions::default()).unwrap();
    let csv = t.to_csv();
    assert!(csv.starts_with("l,R_mean,R_se,S_mean,S_se,target,gap,solver_method,max_regret\n"));
    assert_eq!(csv.lines().count(), 7);
    let r = &t.rows;
    assert_eq!(t.richardson.unwrap(), 2.0 * r[5].r_mean - r[4].r_mean);
    let back: sequences::LimitTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
    assert_eq!(back, t);
}

#[test]
fn wrong_rule_is_refused_before_running() {
    let spec = ExperimentSpec {
        prop: Prop::P8,
        family: FamilySpec::slow_drain(2.0, 2.5, 4).unwrap(),
        rule: Some(ReserveRule::ConstantLimit { r_bar: 0.5 }),
        weak: u(0.0, 1.0),
        n: 2,
        samples: 0,
        seed: 0,
        intervention_p: None,
    };
    assert!(matches!(
        sequences::run_limit_experiment(&spec, &OdeOptions::default()),
        Err(Error::Precondition(_))
    ));
}
