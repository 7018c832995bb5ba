//! `tourney`: solve, verify, simulate and sweep tournament auctions.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use config::{ConfigError, ExperimentConfig, ExperimentSection, MechanismConfig};
use output::{sorted_json, stamped, Bundle};
use tourney_core::equilibrium::{self, SolveMethod};
use tourney_core::sequences::{self, ExperimentSpec, FamilyKind, Prop};
use tourney_core::{mechanisms, myerson, BidFunction, DiscreteAtom, Mechanism, SolveReport, StrongBidder};

#[derive(Parser, Debug)]
#[command(name = "tourney", version, about = "Tournament auctions with a strong bidder")]
struct Cli {
    /// JSON experiment config; built-in defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides monte_carlo.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the weak bidders' equilibrium schedule.
    Solve,
    /// Solve, then check best responses, overbidding and the Picard cross-check.
    Verify,
    /// Monte Carlo revenue and surplus of one mechanism.
    Simulate(SimulateArgs),
    /// Optimal-auction revenue benchmark.
    Oa(OaArgs),
    /// Limit experiment along a strong-bidder family.
    Sweep(SweepArgs),
    /// Concentration and slow-drain diagnostics for a family.
    CheckFamily(FamilyArgs),
    /// Summarise the result files in the output directory.
    Report,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MechanismArg {
    #[value(name = "TA")]
    Ta,
    #[value(name = "SA")]
    Sa,
    #[value(name = "SA_RESERVE")]
    SaReserve,
    #[value(name = "TA_INTERVENTION")]
    TaIntervention,
    #[value(name = "TA_DISCRETE")]
    TaDiscrete,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Ta => Mechanism::Tournament,
            MechanismArg::Sa => Mechanism::Second,
            MechanismArg::SaReserve => Mechanism::SecondReserve,
            MechanismArg::TaIntervention => Mechanism::TournamentIntervention,
            MechanismArg::TaDiscrete => Mechanism::TournamentDiscrete,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    mechanism: Option<MechanismArg>,
    /// Monte Carlo replicates.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    reserve: Option<f64>,
    #[arg(long)]
    intervention_p: Option<f64>,
    /// Atom value for TA_DISCRETE.
    #[arg(long)]
    atom_k: Option<f64>,
    /// Atom probability for TA_DISCRETE.
    #[arg(long)]
    atom_p: Option<f64>,
    /// Also write a per-draw CSV with this many rows (at most 10⁴).
    #[arg(long)]
    draws: Option<u64>,
}

#[derive(Args, Debug)]
struct OaArgs {
    /// Monte Carlo replicates.
    #[arg(long)]
    n: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum FamilyArg {
    SlowDrain,
    FastDrain,
    SmoothedDiscrete,
    SplitAtom,
}

#[derive(Args, Debug)]
struct FamilyArgs {
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Mass parameter for smoothed_discrete and split_atom.
    #[arg(long)]
    p: Option<f64>,
    /// Number of family members.
    #[arg(long = "L")]
    levels: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// P4, P5, P6, P7, P8, P9, P10 or S8.
    #[arg(long)]
    prop: Option<Prop>,
    #[command(flatten)]
    family: FamilyArgs,
    /// Monte Carlo replicates per family member.
    #[arg(long)]
    n: Option<u64>,
    /// Extra copy of the table; the name gains the hash and seed.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    kind: String,
    messages: Vec<String>,
}

impl Failure {
    fn config(messages: Vec<String>) -> Self {
        Self { code: 2, kind: "semantic".into(), messages }
    }

    fn io(e: std::io::Error) -> Self {
        Self { code: 1, kind: "io".into(), messages: vec![e.to_string()] }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = if matches!(e, ConfigError::Io(_)) { 1 } else { 2 };
        Self { code, kind: e.kind().into(), messages: e.messages() }
    }
}

impl From<tourney_core::Error> for Failure {
    fn from(e: tourney_core::Error) -> Self {
        let (code, kind) = if e.is_numeric_failure() { (3, "numeric") } else { (2, "semantic") };
        Self { code, kind: kind.into(), messages: vec![e.to_string()] }
    }
}

fn family_kind(arg: FamilyArg, p: f64) -> FamilyKind {
    match arg {
        FamilyArg::SlowDrain => FamilyKind::SlowDrain,
        FamilyArg::FastDrain => FamilyKind::FastDrain,
        FamilyArg::SmoothedDiscrete => FamilyKind::SmoothedDiscrete { p },
        FamilyArg::SplitAtom => FamilyKind::SplitAtom { p },
    }
}

fn apply_family(cfg: &mut ExperimentConfig, a: &FamilyArgs) {
    if a.family.is_none() && a.p.is_none() && a.levels.is_none() {
        return;
    }
    let mut fam = cfg.family_or_default();
    let current_p = match fam.kind {
        FamilyKind::SmoothedDiscrete { p } | FamilyKind::SplitAtom { p } => p,
        _ => 0.5,
    };
    if let Some(f) = a.family {
        fam.kind = family_kind(f, a.p.unwrap_or(current_p));
    } else if let Some(p) = a.p {
        fam.kind = match fam.kind {
            FamilyKind::SmoothedDiscrete { .. } => FamilyKind::SmoothedDiscrete { p },
            FamilyKind::SplitAtom { .. } => FamilyKind::SplitAtom { p },
            k => k,
        };
    }
    if let Some(l) = a.levels {
        fam.levels = l;
    }
    cfg.family = Some(fam);
}

/// Folds command-line overrides into the config so the hash covers them.
fn apply_overrides(cfg: &mut ExperimentConfig, cli: &Cli) {
    if let Some(s) = cli.seed {
        cfg.monte_carlo.seed = s;
    }
    match &cli.command {
        Command::Simulate(a) => {
            let mut m = cfg.mechanism();
            if let Some(k) = a.mechanism {
                m = MechanismConfig { kind: k.into(), reserve: None, intervention_p: None };
            }
            if a.reserve.is_some() {
                m.reserve = a.reserve;
            }
            if a.intervention_p.is_some() {
                m.intervention_p = a.intervention_p;
            }
            cfg.mechanism = Some(m);
            if let Some(n) = a.n {
                cfg.monte_carlo.n = n;
            }
            if a.draws.is_some() {
                cfg.monte_carlo.draws = a.draws;
            }
            if a.atom_k.is_some() || a.atom_p.is_some() {
                let base = match &cfg.strong {
                    Some(StrongBidder::Atom(x)) => *x,
                    _ => DiscreteAtom { k: 2.0, p: 0.75 },
                };
                cfg.strong = Some(StrongBidder::Atom(DiscreteAtom {
                    k: a.atom_k.unwrap_or(base.k),
                    p: a.atom_p.unwrap_or(base.p),
                }));
            }
        }
        Command::Sweep(a) => {
            if let Some(p) = a.prop {
                let keep = cfg.experiment.as_ref().filter(|e| e.prop == p).cloned();
                cfg.experiment = Some(keep.unwrap_or(ExperimentSection { prop: p, rule: None, intervention_p: None }));
            }
            apply_family(cfg, &a.family);
            if let Some(n) = a.n {
                cfg.monte_carlo.n = n;
            }
            cfg.resolve_sweep();
        }
        Command::Oa(a) => {
            if let Some(n) = a.n {
                cfg.monte_carlo.n = n;
            }
        }
        Command::CheckFamily(a) => {
            apply_family(cfg, a);
            if cfg.family.is_none() {
                cfg.family = Some(cfg.family_or_default());
            }
        }
        _ => {}
    }
}

/// Rules a command needs before any computation starts.
fn validate(cfg: &ExperimentConfig, cmd: &Command) -> Result<(), Failure> {
    let mut errs = cfg.basic_violations();
    match cmd {
        Command::Solve | Command::Verify => {
            if let Err(e) = cfg.instance() {
                errs.extend(e);
            }
        }
        Command::Simulate(_) => {
            if let Err(e) = cfg.auction() {
                errs.extend(e);
            }
            if cfg.mechanism().kind.needs_bid_fn() {
                if let Err(e) = cfg.instance() {
                    errs.extend(e);
                }
            }
        }
        Command::Oa(_) => {
            if let Err(e) = cfg.weak() {
                errs.push(e);
            }
            if let Err(e) = cfg.bidders() {
                errs.push(e);
            }
            if let Err(e) = cfg.strong_dist() {
                errs.push(e);
            }
        }
        Command::Sweep(_) => {
            if let Err(e) = cfg.weak() {
                errs.push(e);
            }
            if let Err(e) = cfg.bidders() {
                errs.push(e);
            }
        }
        Command::CheckFamily(_) | Command::Report => {}
    }
    errs.dedup();
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Failure::config(errs))
    }
}

fn solve(cfg: &ExperimentConfig) -> Result<(BidFunction, SolveReport), Failure> {
    let inst = cfg.instance().map_err(Failure::config)?;
    let out = match cfg.solver.method {
        SolveMethod::Ode => equilibrium::solve_ode(&inst, &cfg.solver.ode())?,
        SolveMethod::Picard => equilibrium::solve_picard(&inst, &cfg.solver.picard())?,
    };
    Ok(out)
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    hash: String,
    bundle: Bundle,
    command: &'static str,
}

impl Run<'_> {
    fn body<T: Serialize>(&mut self, result: &T) -> Result<(), Failure> {
        let doc = json!({
            "command": self.command,
            "config": self.cfg,
            "config_hash": self.hash,
            "seed": self.cfg.seed(),
            "result": result,
        });
        self.bundle.write_suffix(".json", &sorted_json(&doc)).map_err(Failure::io)
    }

    fn csv(&mut self, suffix: &str, text: &str) -> Result<(), Failure> {
        self.bundle.write_suffix(suffix, text).map_err(Failure::io)
    }
}

fn verify(run: &mut Run) -> Result<u8, Failure> {
    let cfg = run.cfg;
    let inst = cfg.instance().map_err(Failure::config)?;
    let (bid, report) = solve(cfg)?;
    let br = equilibrium::verify_best_response(&inst, &bid, 50, 200);
    let g = bid.grid();
    let overbid_violations = (1..g.len() - 1).filter(|&i| !(bid.values()[i] > g[i])).count();
    let cross = if inst.strong.zero_mass == 0.0 && cfg.solver.method == SolveMethod::Ode {
        let (pic, _) = equilibrium::solve_picard(&inst, &cfg.solver.picard())?;
        Some(equilibrium::cross_validate(&inst, &bid, &pic))
    } else {
        None
    };
    let regret_tol = 1e-4 * inst.v_bar();
    let passed = br.max_regret <= regret_tol && overbid_violations == 0;
    run.csv("_bid.csv", &bid.to_csv())?;
    run.body(&json!({
        "bid_function": bid,
        "solve_report": report,
        "best_response": br,
        "regret_tolerance": regret_tol,
        "overbidding_violations": overbid_violations,
        "cross_check": cross,
        "passed": passed,
    }))?;
    Ok(if passed { 0 } else { 4 })
}

fn simulate(run: &mut Run) -> Result<u8, Failure> {
    let cfg = run.cfg;
    let mut spec = cfg.auction().map_err(Failure::config)?;
    let mut report = None;
    if spec.kind.needs_bid_fn() {
        let (bid, r) = solve(cfg)?;
        spec.bid_fn = Some(bid);
        report = Some(r);
    }
    let sim = mechanisms::simulate(&spec, cfg.monte_carlo.n, cfg.seed())?;
    if let Some(d) = cfg.monte_carlo.draws {
        run.csv("_draws.csv", &mechanisms::draws_csv(&spec, d, cfg.seed())?)?;
    }
    run.body(&json!({
        "mechanism": spec.kind,
        "revenue": sim.revenue,
        "surplus": sim.surplus,
        "solve_report": report,
    }))?;
    Ok(0)
}

fn oa(run: &mut Run) -> Result<u8, Failure> {
    let cfg = run.cfg;
    let f = cfg.weak().map_err(|e| Failure::config(vec![e]))?;
    let g = cfg.strong_dist().map_err(|e| Failure::config(vec![e]))?;
    let n = cfg.bidders().map_err(|e| Failure::config(vec![e]))?;
    let est = myerson::oa_revenue(Some(f), n, Some(g), cfg.monte_carlo.n, cfg.seed());
    run.body(&json!({
        "revenue": est.mean,
        "se": est.std_error,
        "n": est.n,
        "regular_F": myerson::regularity_check(f, 1000).regular,
        "regular_G": myerson::regularity_check(g, 1000).regular,
        "reserve_single_buyer": myerson::single_buyer_reserve(g),
    }))?;
    Ok(0)
}

fn sweep(run: &mut Run, extra: Option<&Path>) -> Result<u8, Failure> {
    let cfg = run.cfg;
    let exp = cfg.experiment.clone().expect("resolved");
    let spec = ExperimentSpec {
        prop: exp.prop,
        family: cfg.family.expect("resolved"),
        rule: exp.rule,
        weak: cfg.weak().map_err(|e| Failure::config(vec![e]))?.clone(),
        n: cfg.bidders().map_err(|e| Failure::config(vec![e]))?,
        samples: cfg.monte_carlo.n,
        seed: cfg.seed(),
        intervention_p: exp.intervention_p,
    };
    let table = sequences::run_limit_experiment(&spec, &cfg.solver.ode())?;
    let csv = table.to_csv();
    run.csv("_table.csv", &csv)?;
    if let Some(p) = extra {
        let path = stamped(p, &run.hash, cfg.seed());
        run.bundle.write(path, &csv).map_err(Failure::io)?;
    }
    run.body(&table)?;
    Ok(0)
}

fn check_family(run: &mut Run) -> Result<u8, Failure> {
    let cfg = run.cfg;
    let fam = cfg.family.expect("resolved");
    let vbar = cfg.weak.as_ref().map_or(1.0, |w| w.hi());
    let check = sequences::check_family(&fam, vbar)?;
    run.body(&check)?;
    Ok(0)
}

fn headline(doc: &Value) -> String {
    let r = &doc["result"];
    match doc["command"].as_str().unwrap_or("") {
        "solve" => format!("residual {}", r["solve_report"]["max_ode_residual"]),
        "verify" => format!("passed {} max_regret {}", r["passed"], r["best_response"]["max_regret"]),
        "simulate" => format!("{} revenue {} ± {}", r["mechanism"], r["revenue"]["mean"], r["revenue"]["se"]),
        "oa" => format!("revenue {} ± {}", r["revenue"], r["se"]),
        "sweep" => format!("{} last {} target {} gap {}", r["prop"], r["last"], r["target"], r["gap"]),
        "check-family" => format!(
            "{} concentrates {} drains {}",
            r["family"], r["concentrates"], r["drains_slowly"]
        ),
        _ => String::new(),
    }
}

fn report(run: &mut Run) -> Result<u8, Failure> {
    let dir = run.bundle.dir.clone();
    let mut entries = Vec::new();
    if dir.is_dir() {
        let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(Failure::io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let n = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                n.ends_with(".json") && !n.ends_with(".meta.json") && !n.starts_with("report_")
            })
            .collect();
        names.sort();
        for p in names {
            let text = std::fs::read_to_string(&p).map_err(Failure::io)?;
            let Ok(doc) = serde_json::from_str::<Value>(&text) else { continue };
            if doc.get("command").is_none() {
                continue;
            }
            let line = headline(&doc);
            println!("{:<50} {line}", p.file_name().unwrap().to_string_lossy());
            entries.push(json!({
                "file": p.file_name().unwrap().to_string_lossy(),
                "command": doc["command"],
                "config_hash": doc["config_hash"],
                "seed": doc["seed"],
                "summary": line,
            }));
        }
    }
    run.body(&json!({ "runs": entries }))?;
    Ok(0)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Solve => "solve",
        Command::Verify => "verify",
        Command::Simulate(_) => "simulate",
        Command::Oa(_) => "oa",
        Command::Sweep(_) => "sweep",
        Command::CheckFamily(_) => "check-family",
        Command::Report => "report",
    }
}

fn execute(cli: &Cli) -> Result<(u8, Vec<PathBuf>), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut cfg, cli);
    validate(&cfg, &cli.command)?;
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let hash = cfg.hash();
    let name = command_name(&cli.command);
    let mut run = Run {
        cfg: &cfg,
        bundle: Bundle::new(&out_dir, name, &hash, cfg.seed()),
        hash: hash.clone(),
        command: name,
    };
    let started = Instant::now();
    let code = match &cli.command {
        Command::Solve => {
            let (bid, rep) = solve(&cfg)?;
            run.csv("_bid.csv", &bid.to_csv())?;
            run.body(&json!({ "bid_function": bid, "solve_report": rep }))?;
            0
        }
        Command::Verify => verify(&mut run)?,
        Command::Simulate(_) => simulate(&mut run)?,
        Command::Oa(_) => oa(&mut run)?,
        Command::Sweep(a) => sweep(&mut run, a.out.as_deref())?,
        Command::CheckFamily(_) => check_family(&mut run)?,
        Command::Report => report(&mut run)?,
    };
    let meta = json!({
        "command": name,
        "config_hash": hash,
        "seed": cfg.seed(),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "created_unix_s": SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "files": run.bundle.written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    run.bundle.write_suffix(".meta.json", &sorted_json(&meta)).map_err(Failure::io)?;
    Ok((code, run.bundle.written))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("{}", json!({ "error": "config", "exit_code": 2, "messages": [e.to_string()] }));
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok((code, files)) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!(
                "{}",
                json!({ "error": f.kind, "exit_code": f.code, "messages": f.messages })
            );
            ExitCode::from(f.code)
        }
    }
}
