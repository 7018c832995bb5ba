//! Experiment configuration: parsing, defaults, validation and hashing.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use tourney_core::equilibrium::{Instance, OdeOptions, PicardOptions, SolveMethod};
use tourney_core::sequences::{FamilyKind, FamilySpec, Prop, ReserveRule};
use tourney_core::{AuctionSpec, BidFunction, Distribution, Mechanism, StrongBidder, StrongLaw};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub kind: Mechanism,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reserve: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: SolveMethod,
    pub grid_size: usize,
    pub v0_fraction: f64,
    pub rk_tolerance: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = OdeOptions::default();
        let p = PicardOptions::default();
        Self {
            method: SolveMethod::Ode,
            grid_size: o.grid_size,
            v0_fraction: o.v0_fraction,
            rk_tolerance: o.rk_tolerance,
            picard_tol: p.tol,
            picard_max_iter: p.max_iter,
            damping: p.damping,
        }
    }
}

impl SolverConfig {
    pub fn ode(&self) -> OdeOptions {
        OdeOptions {
            v0_fraction: self.v0_fraction,
            grid_size: self.grid_size,
            rk_tolerance: self.rk_tolerance,
            ..OdeOptions::default()
        }
    }

    pub fn picard(&self) -> PicardOptions {
        PicardOptions {
            grid_size: self.grid_size,
            max_iter: self.picard_max_iter,
            tol: self.picard_tol,
            damping: self.damping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub n: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<u64>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n: 200_000,
            seed: 1,
            draws: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub prop: Prop,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<ReserveRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub weak: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong: Option<StrongBidder>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<MechanismConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

/// Every problem found in a config, reported together.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Schema(Vec<String>),
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::Io(_) => "io",
            ConfigError::Schema(_) => "schema",
        }
    }

    pub fn messages(&self) -> Vec<String> {
        match self {
            ConfigError::Io(m) => vec![m.clone()],
            ConfigError::Schema(v) => v.clone(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: VERSION,
            n: Some(2),
            weak: Some(Distribution::uniform(0.0, 1.0).unwrap()),
            strong: Some(StrongBidder::Continuous(Distribution::uniform(0.0, 2.0).unwrap())),
            family: None,
            mechanism: Some(MechanismConfig {
                kind: Mechanism::Tournament,
                reserve: None,
                intervention_p: None,
            }),
            solver: SolverConfig::default(),
            monte_carlo: MonteCarloConfig::default(),
            experiment: None,
            output: None,
        }
    }
}

fn unknown_keys(input: &Value, known: &Value, path: &str, out: &mut Vec<String>) {
    match (input, known) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in a {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get(k) {
                    Some(kv) => unknown_keys(v, kv, &p, out),
                    None if v.is_null() => {}
                    None => out.push(format!("{p}: unknown key")),
                }
            }
        }
        (Value::Array(a), Value::Array(b)) if a.len() == b.len() => {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                unknown_keys(x, y, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let raw: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Schema(vec![format!("invalid JSON: {e}")]))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(raw.clone()).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Schema(vec![format!("{path}: {}", e.into_inner())])
        })?;
        let mut unknown = Vec::new();
        unknown_keys(&raw, &serde_json::to_value(&cfg).unwrap(), "", &mut unknown);
        if !unknown.is_empty() {
            return Err(ConfigError::Schema(unknown));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical JSON with sorted keys; the output section is left out.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        serde_json::to_string(&serde_json::to_value(&c).unwrap()).unwrap()
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self) -> u64 {
        self.monte_carlo.seed
    }

    pub fn weak(&self) -> Result<&Distribution, String> {
        self.weak.as_ref().ok_or_else(|| "F: required".to_string())
    }

    pub fn bidders(&self) -> Result<usize, String> {
        self.n.ok_or_else(|| "N: required".to_string())
    }

    pub fn mechanism(&self) -> MechanismConfig {
        self.mechanism.clone().unwrap_or(MechanismConfig {
            kind: Mechanism::Tournament,
            reserve: None,
            intervention_p: None,
        })
    }

    pub fn strong_dist(&self) -> Result<&Distribution, String> {
        match &self.strong {
            Some(StrongBidder::Continuous(d)) => Ok(d),
            Some(StrongBidder::Atom(_)) => Err("strong: a continuous law is required here".into()),
            None => Err("strong: required".into()),
        }
    }

    /// Equilibrium instance for the tournament mechanisms.
    pub fn instance(&self) -> Result<Instance, Vec<String>> {
        let mut errs = Vec::new();
        let weak = self.weak().map_err(|e| errs.push(e)).ok();
        let n = self.bidders().map_err(|e| errs.push(e)).ok();
        let strong = self.strong_dist().map_err(|e| errs.push(e)).ok();
        let mech = self.mechanism();
        let law = match (strong, mech.kind) {
            (Some(g), Mechanism::Tournament) => Some(StrongLaw::plain(g.clone())),
            (Some(g), Mechanism::TournamentIntervention) => match mech.intervention_p {
                Some(p) => StrongLaw::with_intervention(g.clone(), p).map_err(|e| errs.push(e.to_string())).ok(),
                None => {
                    errs.push("mechanism.intervention_p: required for TA_INTERVENTION".into());
                    None
                }
            },
            (Some(_), k) => {
                errs.push(format!("mechanism.kind: {} has no equilibrium bid schedule to solve", k.label()));
                None
            }
            _ => None,
        };
        if let (Some(w), Some(n), Some(law)) = (weak, n, law) {
            match Instance::new(w.clone(), law, n) {
                Ok(i) if errs.is_empty() => return Ok(i),
                Ok(_) => {}
                Err(e) => errs.push(e.to_string()),
            }
        }
        if mech.kind == Mechanism::TournamentIntervention && self.solver.method == SolveMethod::Picard {
            errs.push("solver.method: fixed-point iteration does not handle TA_INTERVENTION".into());
        }
        Err(errs)
    }

    /// Auction spec with a placeholder bid schedule where one is needed.
    pub fn auction(&self) -> Result<AuctionSpec, Vec<String>> {
        let mut errs = Vec::new();
        let weak = self.weak().map_err(|e| errs.push(e)).ok();
        let n = self.bidders().map_err(|e| errs.push(e)).ok();
        let strong = self.strong.clone();
        if strong.is_none() {
            errs.push("strong: required".into());
        }
        let (Some(weak), Some(n), Some(strong)) = (weak, n, strong) else {
            return Err(errs);
        };
        let m = self.mechanism();
        let mut spec = AuctionSpec::new(m.kind, n, weak.clone(), strong);
        spec.reserve = m.reserve;
        spec.intervention_p = m.intervention_p;
        if m.kind.needs_bid_fn() {
            spec.bid_fn = Some(BidFunction::identity(weak.hi()));
        }
        errs.extend(spec.violations());
        if errs.is_empty() {
            Ok(spec)
        } else {
            Err(errs)
        }
    }

    pub fn family_or_default(&self) -> FamilySpec {
        self.family.unwrap_or_else(|| {
            let prop = self.experiment.as_ref().map(|e| e.prop);
            let kind = match prop {
                Some(Prop::P10) => FamilyKind::SplitAtom { p: 0.5 },
                Some(Prop::S8) => FamilyKind::SmoothedDiscrete { p: 1.0 },
                _ => FamilyKind::SlowDrain,
            };
            FamilySpec {
                kind,
                k: 2.0,
                w_bar: 2.5,
                levels: 8,
            }
        })
    }

    /// Fills in the family, reserve rule and intervention level a sweep
    /// needs when the config leaves them out.
    pub fn resolve_sweep(&mut self) {
        let fam = self.family_or_default();
        self.family = Some(fam);
        let vbar = self.weak.as_ref().map_or(1.0, |w| w.hi());
        let exp = self.experiment.get_or_insert(ExperimentSection {
            prop: Prop::P6,
            rule: None,
            intervention_p: None,
        });
        let k = fam.k;
        if exp.rule.is_none() {
            exp.rule = match exp.prop {
                Prop::P7 => Some(ReserveRule::Approximating { eps: 0.5 * (k - vbar) }),
                Prop::P8 => Some(ReserveRule::ConstantLimit { r_bar: 0.8 * k }),
                Prop::P9 => Some(ReserveRule::Overshoot { r_bar: 1.1 * k }),
                Prop::P10 => Some(ReserveRule::FromBelowQuantile),
                _ => None,
            };
        }
        if exp.prop == Prop::S8 && exp.intervention_p.is_none() {
            exp.intervention_p = Some(0.75);
        }
    }

    /// Rules shared by every command.
    pub fn basic_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.version != VERSION {
            out.push(format!("version: expected {VERSION}, got {}", self.version));
        }
        if let Some(n) = self.n {
            if n < 2 {
                out.push(format!("N: at least 2 weak bidders are required, got {n}"));
            }
        }
        if self.monte_carlo.n == 0 {
            out.push("monte_carlo.n: must be positive".into());
        }
        if let Some(d) = self.monte_carlo.draws {
            if d > 10_000 {
                out.push(format!("monte_carlo.draws: at most 10000 per-draw rows, got {d}"));
            }
        }
        let s = &self.solver;
        if s.grid_size < 3 {
            out.push("solver.grid_size: at least 3 points".into());
        }
        if !(s.v0_fraction > 0.0 && s.v0_fraction < 0.1) {
            out.push("solver.v0_fraction: must lie in (0, 0.1)".into());
        }
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            out.push("solver.damping: must lie in (0, 1]".into());
        }
        if !(s.rk_tolerance > 0.0 && s.picard_tol > 0.0) || s.picard_max_iter == 0 {
            out.push("solver: tolerances and iteration cap must be positive".into());
        }
        if let Some(f) = &self.family {
            if let Err(e) = f.validate() {
                out.push(format!("family: {e}"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1, "N": 2,
        "F": {"kind": "uniform", "params": [], "support": [0, 1]},
        "strong": {"kind": "uniform", "params": [], "support": [0, 2]},
        "mechanism": {"kind": "TA"}
    }"#;

    #[test]
    fn minimal_tournament_config_is_valid() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert!(cfg.basic_violations().is_empty());
        assert!(cfg.instance().is_ok());
        assert!(cfg.auction().is_ok());
    }

    #[test]
    fn round_trip_keeps_hash() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg, again);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let h = cfg.hash();
        cfg.output = Some(OutputConfig { dir: Some("elsewhere".into()) });
        assert_eq!(cfg.hash(), h);
        cfg.monte_carlo.seed += 1;
        assert_ne!(cfg.hash(), h);
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let text = MINIMAL.replace("\"N\": 2", "\"N\": 2, \"colour\": 1, \"solver\": {\"speed\": 3}");
        match ExperimentConfig::from_json(&text) {
            Err(ConfigError::Schema(v)) => {
                assert_eq!(v.len(), 2, "{v:?}");
                assert!(v.iter().any(|m| m.starts_with("colour")));
                assert!(v.iter().any(|m| m.starts_with("solver.speed")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_errors_name_the_field() {
        let text = MINIMAL.replace("\"N\": 2", "\"N\": \"two\"");
        match ExperimentConfig::from_json(&text) {
            Err(ConfigError::Schema(v)) => assert!(v[0].starts_with("N:"), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn low_reserve_is_a_semantic_error() {
        let text = MINIMAL.replace(r#"{"kind": "TA"}"#, r#"{"kind": "SA_RESERVE", "reserve": 0.5}"#);
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let errs = cfg.auction().unwrap_err();
        assert!(errs.iter().any(|e| e.contains("r >= v̄")), "{errs:?}");
    }

    #[test]
    fn discrete_needs_pk_above_top_value() {
        let text = MINIMAL
            .replace(r#"{"kind": "uniform", "params": [], "support": [0, 2]}"#, r#"{"k": 2, "p": 0.4}"#)
            .replace(r#"{"kind": "TA"}"#, r#"{"kind": "TA_DISCRETE"}"#);
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let errs = cfg.auction().unwrap_err();
        assert!(errs.iter().any(|e| e.contains("pk")), "{errs:?}");
    }

    #[test]
    fn sweep_defaults_follow_the_experiment() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment = Some(ExperimentSection { prop: Prop::P9, rule: None, intervention_p: None });
        cfg.resolve_sweep();
        assert_eq!(cfg.experiment.unwrap().rule, Some(ReserveRule::Overshoot { r_bar: 2.2 }));
    }
}
