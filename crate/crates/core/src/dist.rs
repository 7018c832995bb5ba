//! Value distributions on bounded supports.
//!
//! Every distribution is a finite mixture of components with closed-form
//! cdf, density, density slope and partial first moment. Those closed forms
//! drive the equilibrium solver and the samplers; quadrature is reserved for
//! construction checks and order-statistic expectations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate_with, QuadConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct SupportInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SupportInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo >= hi {
            return Err(Error::InvalidDistribution(format!(
                "support [{lo}, {hi}] must satisfy 0 <= lo < hi"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

impl From<SupportInterval> for [f64; 2] {
    fn from(s: SupportInterval) -> Self {
        [s.lo, s.hi]
    }
}

impl TryFrom<[f64; 2]> for SupportInterval {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        SupportInterval::new(v[0], v[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionKind {
    Uniform,
    BetaLikePolynomial,
    RaisedCosineBump,
    PiecewiseLinearDensity,
    Mixture,
}

/// One mixture component; each carries unit mass on its own interval.
#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Density proportional to `t^a (1 - t)^b`, `t = (x - lo) / (hi - lo)`.
    BetaPoly {
        lo: f64,
        hi: f64,
        a: u32,
        b: u32,
        coeffs: Vec<f64>,
    },
    /// Raised-cosine bump `(1 + cos(π (x - c) / h)) / 2h`, truncated to
    /// `[lo, hi]` and renormalised.
    RaisedCosine {
        center: f64,
        half_width: f64,
        lo: f64,
        hi: f64,
        base_cdf: f64,
        base_moment: f64,
        mass: f64,
    },
    PiecewiseLinear {
        xs: Vec<f64>,
        ys: Vec<f64>,
        cum: Vec<f64>,
        mom: Vec<f64>,
    },
}

// x - sin x without cancellation near zero
fn x_minus_sin(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let x2 = x * x;
        x * x2 * (1.0 / 6.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 5040.0 - x2 / 362_880.0)))
    } else {
        x - x.sin()
    }
}

// y²/2 - y sin y + 1 - cos y without cancellation near zero
fn bump_moment_kernel(y: f64) -> f64 {
    if y.abs() < 0.1 {
        let y2 = y * y;
        y2 * y2 * (1.0 / 8.0 - y2 * (1.0 / 144.0 - y2 * (1.0 / 5760.0 - y2 / 403_200.0)))
    } else {
        0.5 * y * y - y * y.sin() + (1.0 - y.cos())
    }
}

impl Component {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidDistribution(format!(
                "uniform component needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Component::Uniform { lo, hi })
    }

    pub fn beta_poly(lo: f64, hi: f64, a: u32, b: u32) -> Result<Self> {
        if !(lo < hi) || a > 20 || b > 20 {
            return Err(Error::InvalidDistribution(format!(
                "beta-like component needs lo < hi and exponents <= 20, got [{lo}, {hi}], a={a}, b={b}"
            )));
        }
        // expand t^a (1-t)^b
        let mut coeffs = vec![0.0; (a + b + 1) as usize];
        let mut binom = 1.0;
        for j in 0..=b {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[(a + j) as usize] = sign * binom;
            binom = binom * (b - j) as f64 / (j + 1) as f64;
        }
        let total: f64 = coeffs.iter().enumerate().map(|(i, c)| c / (i + 1) as f64).sum();
        for c in coeffs.iter_mut() {
            *c /= total;
        }
        Ok(Component::BetaPoly { lo, hi, a, b, coeffs })
    }

    /// Raised-cosine bump centred at `center` with half-width `half_width`,
    /// restricted to `[lo, hi]`.
    pub fn raised_cosine(center: f64, half_width: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(half_width > 0.0) || !center.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "raised-cosine bump needs a positive half-width, got {half_width}"
            )));
        }
        let lo = lo.max(center - half_width);
        let hi = hi.min(center + half_width);
        if !(lo < hi) {
            return Err(Error::InvalidDistribution(format!(
                "raised-cosine bump at {center} ± {half_width} misses the support"
            )));
        }
        let (c_lo, m_lo) = Self::full_bump(center, half_width, lo);
        let (c_hi, _) = Self::full_bump(center, half_width, hi);
        Ok(Component::RaisedCosine {
            center,
            half_width,
            lo,
            hi,
            base_cdf: c_lo,
            base_moment: m_lo,
            mass: c_hi - c_lo,
        })
    }

    pub fn piecewise_linear(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidDistribution(
                "piecewise-linear density needs at least two knots".into(),
            ));
        }
        for w in knots.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err(Error::InvalidDistribution(
                    "piecewise-linear knots must be strictly increasing".into(),
                ));
            }
        }
        if knots.iter().any(|k| !(k.1 >= 0.0) || !k.1.is_finite()) {
            return Err(Error::InvalidDistribution(
                "piecewise-linear heights must be finite and nonnegative".into(),
            ));
        }
        let area: f64 = knots
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum();
        if !(area > 0.0) {
            return Err(Error::InvalidDistribution(
                "piecewise-linear density has zero area".into(),
            ));
        }
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = knots.iter().map(|k| k.1 / area).collect();
        let mut cum = vec![0.0; xs.len()];
        let mut mom = vec![0.0; xs.len()];
        for j in 0..xs.len() - 1 {
            let d = xs[j + 1] - xs[j];
            let s = (ys[j + 1] - ys[j]) / d;
            cum[j + 1] = cum[j] + ys[j] * d + 0.5 * s * d * d;
            mom[j + 1] = mom[j] + Self::segment_moment(xs[j], ys[j], s, d);
        }
        Ok(Component::PiecewiseLinear { xs, ys, cum, mom })
    }

    fn segment_moment(x0: f64, y0: f64, s: f64, d: f64) -> f64 {
        x0 * y0 * d + 0.5 * (x0 * s + y0) * d * d + s * d * d * d / 3.0
    }

    // cdf and partial first moment of the untruncated bump
    fn full_bump(center: f64, h: f64, x: f64) -> (f64, f64) {
        let s = (x - (center - h)).clamp(0.0, 2.0 * h);
        let y = PI * s / h; // 2φ
        let cdf = x_minus_sin(y) / (2.0 * PI);
        let moment = (center - h) * cdf + h * bump_moment_kernel(y) / (2.0 * PI * PI);
        (cdf, moment)
    }

    pub fn lo(&self) -> f64 {
        match self {
            Component::Uniform { lo, .. }
            | Component::BetaPoly { lo, .. }
            | Component::RaisedCosine { lo, .. } => *lo,
            Component::PiecewiseLinear { xs, .. } => xs[0],
        }
    }

    pub fn hi(&self) -> f64 {
        match self {
            Component::Uniform { hi, .. }
            | Component::BetaPoly { hi, .. }
            | Component::RaisedCosine { hi, .. } => *hi,
            Component::PiecewiseLinear { xs, .. } => xs[xs.len() - 1],
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo() {
            return 0.0;
        }
        if x >= self.hi() {
            return 1.0;
        }
        match self {
            Component::Uniform { lo, hi } => (x - lo) / (hi - lo),
            Component::BetaPoly { lo, hi, coeffs, .. } => {
                let t = (x - lo) / (hi - lo);
                poly_integral(coeffs, t, 1)
            }
            Component::RaisedCosine {
                center,
                half_width,
                base_cdf,
                mass,
                ..
            } => {
                let (c, _) = Self::full_bump(*center, *half_width, x);
                ((c - base_cdf) / mass).clamp(0.0, 1.0)
            }
            Component::PiecewiseLinear { xs, ys, cum, .. } => {
                let j = segment_index(xs, x);
                let d = x - xs[j];
                let s = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]);
                (cum[j] + ys[j] * d + 0.5 * s * d * d).min(1.0)
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo() || x > self.hi() {
            return 0.0;
        }
        match self {
            Component::Uniform { lo, hi } => 1.0 / (hi - lo),
            Component::BetaPoly { lo, hi, coeffs, .. } => {
                let t = (x - lo) / (hi - lo);
                poly_eval(coeffs, t) / (hi - lo)
            }
            Component::RaisedCosine {
                center,
                half_width,
                mass,
                ..
            } => {
                let phi = 0.5 * PI * (x - (center - half_width)) / half_width;
                let s = phi.sin();
                s * s / (half_width * mass)
            }
            Component::PiecewiseLinear { xs, ys, .. } => {
                let j = segment_index(xs, x);
                let s = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]);
                (ys[j] + s * (x - xs[j])).max(0.0)
            }
        }
    }

    /// Derivative of the density. At piecewise-linear knots this is the
    /// right-hand slope (left-hand at the last knot).
    pub fn pdf_prime(&self, x: f64) -> f64 {
        if x < self.lo() || x > self.hi() {
            return 0.0;
        }
        match self {
            Component::Uniform { .. } => 0.0,
            Component::BetaPoly { lo, hi, coeffs, .. } => {
                let t = (x - lo) / (hi - lo);
                let w = hi - lo;
                let mut acc = 0.0;
                for (i, c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * t + c * i as f64;
                }
                acc / (w * w)
            }
            Component::RaisedCosine {
                center,
                half_width,
                mass,
                ..
            } => {
                let y = PI * (x - (center - half_width)) / half_width;
                PI * y.sin() / (2.0 * half_width * half_width * mass)
            }
            Component::PiecewiseLinear { xs, ys, .. } => {
                let j = segment_index(xs, x);
                (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j])
            }
        }
    }

    /// `∫_{-∞}^{x} ξ p(ξ) dξ`.
    pub fn partial_moment(&self, x: f64) -> f64 {
        if x <= self.lo() {
            return 0.0;
        }
        let x = x.min(self.hi());
        match self {
            Component::Uniform { lo, hi } => (x - lo) * (x + lo) / (2.0 * (hi - lo)),
            Component::BetaPoly { lo, hi, coeffs, .. } => {
                let w = hi - lo;
                let t = (x - lo) / w;
                lo * poly_integral(coeffs, t, 1) + w * poly_integral(coeffs, t, 2)
            }
            Component::RaisedCosine {
                center,
                half_width,
                base_moment,
                mass,
                ..
            } => {
                let (_, m) = Self::full_bump(*center, *half_width, x);
                (m - base_moment) / mass
            }
            Component::PiecewiseLinear { xs, ys, mom, .. } => {
                let j = segment_index(xs, x);
                let s = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]);
                mom[j] + Self::segment_moment(xs[j], ys[j], s, x - xs[j])
            }
        }
    }

    fn knots(&self, out: &mut Vec<f64>) {
        out.push(self.lo());
        out.push(self.hi());
        match self {
            Component::RaisedCosine { center, .. } => out.push(*center),
            Component::PiecewiseLinear { xs, .. } => out.extend_from_slice(xs),
            _ => {}
        }
    }

    fn code(&self) -> f64 {
        match self {
            Component::Uniform { .. } => 0.0,
            Component::BetaPoly { .. } => 1.0,
            Component::RaisedCosine { .. } => 2.0,
            Component::PiecewiseLinear { .. } => 3.0,
        }
    }

    fn own_params(&self) -> Vec<f64> {
        match self {
            Component::Uniform { .. } => vec![],
            Component::BetaPoly { a, b, .. } => vec![*a as f64, *b as f64],
            Component::RaisedCosine {
                center, half_width, ..
            } => vec![*center, *half_width],
            Component::PiecewiseLinear { xs, ys, .. } => xs
                .iter()
                .zip(ys)
                .flat_map(|(x, y)| [*x, *y])
                .collect(),
        }
    }

    fn from_code(code: f64, lo: f64, hi: f64, params: &[f64]) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidDistribution(msg.to_string());
        match code as i64 {
            0 if params.is_empty() => Component::uniform(lo, hi),
            1 if params.len() == 2 => {
                Component::beta_poly(lo, hi, exponent(params[0])?, exponent(params[1])?)
            }
            2 if params.len() == 2 => Component::raised_cosine(params[0], params[1], lo, hi),
            3 if params.len() >= 4 && params.len() % 2 == 0 => {
                let knots: Vec<(f64, f64)> = params.chunks(2).map(|c| (c[0], c[1])).collect();
                if knots[0].0 < lo || knots[knots.len() - 1].0 > hi {
                    return Err(bad("piecewise-linear knots leave the component interval"));
                }
                Component::piecewise_linear(&knots)
            }
            _ => Err(bad(&format!(
                "unknown component code {code} with {} parameters",
                params.len()
            ))),
        }
    }
}

fn exponent(x: f64) -> Result<u32> {
    if x >= 0.0 && x.fract() == 0.0 && x <= 20.0 {
        Ok(x as u32)
    } else {
        Err(Error::InvalidDistribution(format!(
            "beta-like exponent must be an integer in [0, 20], got {x}"
        )))
    }
}

fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ci| acc * t + ci)
}

// ∫_0^t τ^(shift-1) Σ c_i τ^i dτ
fn poly_integral(c: &[f64], t: f64, shift: usize) -> f64 {
    let mut acc = 0.0;
    for (i, ci) in c.iter().enumerate().rev() {
        acc = acc * t + ci / (i + shift) as f64;
    }
    acc * t.powi(shift as i32)
}

fn segment_index(xs: &[f64], x: f64) -> usize {
    match xs.binary_search_by(|k| k.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(xs.len() - 2),
        Err(i) => i.saturating_sub(1).min(xs.len() - 2),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistributionDef {
    kind: DistributionKind,
    #[serde(default)]
    params: Vec<f64>,
    support: SupportInterval,
}

/// A univariate absolutely continuous law on a bounded support.
///
/// Serialises to `{"kind": .., "params": [..], "support": [lo, hi]}`. Mixture
/// parameters are a flat list of records
/// `[weight, code, lo, hi, m, p_1, .., p_m]` with component codes
/// 0 uniform, 1 beta-like polynomial, 2 raised-cosine bump and
/// 3 piecewise-linear density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionDef", into = "DistributionDef")]
pub struct Distribution {
    kind: DistributionKind,
    params: Vec<f64>,
    support: SupportInterval,
    parts: Vec<(f64, Component)>,
    knots: Vec<f64>,
}

impl From<Distribution> for DistributionDef {
    fn from(d: Distribution) -> Self {
        DistributionDef {
            kind: d.kind,
            params: d.params,
            support: d.support,
        }
    }
}

impl TryFrom<DistributionDef> for Distribution {
    type Error = Error;
    fn try_from(def: DistributionDef) -> Result<Self> {
        Distribution::from_parts(def.kind, &def.params, def.support)
    }
}

impl Distribution {
    /// Builds and validates a distribution from its serialised form.
    pub fn from_parts(kind: DistributionKind, params: &[f64], support: SupportInterval) -> Result<Self> {
        let SupportInterval { lo, hi } = support;
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        let parts = match kind {
            DistributionKind::Uniform => {
                if !params.is_empty() {
                    return bad("uniform takes no parameters".into());
                }
                vec![(1.0, Component::uniform(lo, hi)?)]
            }
            DistributionKind::BetaLikePolynomial => {
                if params.len() != 2 {
                    return bad("beta-like-polynomial takes [a, b]".into());
                }
                vec![(
                    1.0,
                    Component::beta_poly(lo, hi, exponent(params[0])?, exponent(params[1])?)?,
                )]
            }
            DistributionKind::RaisedCosineBump => {
                if params.len() != 2 {
                    return bad("raised-cosine-bump takes [center, half_width]".into());
                }
                vec![(1.0, Component::raised_cosine(params[0], params[1], lo, hi)?)]
            }
            DistributionKind::PiecewiseLinearDensity => {
                if params.len() < 4 || params.len() % 2 != 0 {
                    return bad("piecewise-linear-density takes [x0, y0, x1, y1, ..]".into());
                }
                let knots: Vec<(f64, f64)> = params.chunks(2).map(|c| (c[0], c[1])).collect();
                if knots[0].0 < lo || knots[knots.len() - 1].0 > hi {
                    return bad("piecewise-linear knots leave the support".into());
                }
                vec![(1.0, Component::piecewise_linear(&knots)?)]
            }
            DistributionKind::Mixture => {
                let mut parts = Vec::new();
                let mut rest = params;
                while !rest.is_empty() {
                    if rest.len() < 5 {
                        return bad("truncated mixture record".into());
                    }
                    let (w, code, clo, chi, m) = (rest[0], rest[1], rest[2], rest[3], rest[4]);
                    if !(m >= 0.0 && m.fract() == 0.0) || rest.len() < 5 + m as usize {
                        return bad("mixture record has a bad parameter count".into());
                    }
                    let own = &rest[5..5 + m as usize];
                    if clo < lo || chi > hi {
                        return bad(format!("component [{clo}, {chi}] leaves the support"));
                    }
                    parts.push((w, Component::from_code(code, clo, chi, own)?));
                    rest = &rest[5 + m as usize..];
                }
                parts
            }
        };
        Self::assemble(kind, params.to_vec(), support, parts)
    }

    fn assemble(
        kind: DistributionKind,
        params: Vec<f64>,
        support: SupportInterval,
        parts: Vec<(f64, Component)>,
    ) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidDistribution("no components".into()));
        }
        if parts.iter().any(|(w, _)| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidDistribution("negative mixture weight".into()));
        }
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let mut knots = vec![support.lo, support.hi];
        for (_, c) in &parts {
            c.knots(&mut knots);
        }
        knots.retain(|x| support.contains(*x));
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup();
        let d = Distribution {
            kind,
            params,
            support,
            parts,
            knots,
        };
        let mass = integrate_with(
            |x| d.density(x),
            support.lo,
            support.hi,
            &d.knots,
            &QuadConfig::default(),
        )
        .value;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidDistribution(format!(
                "density integrates to {mass}, expected 1"
            )));
        }
        Ok(d)
    }

    /// Mixture of weighted components on `support`.
    pub fn mixture(support: SupportInterval, parts: Vec<(f64, Component)>) -> Result<Self> {
        let mut params = Vec::new();
        for (w, c) in &parts {
            let own = c.own_params();
            params.extend_from_slice(&[*w, c.code(), c.lo(), c.hi(), own.len() as f64]);
            params.extend(own);
        }
        Self::assemble(DistributionKind::Mixture, params, support, parts)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::from_parts(DistributionKind::Uniform, &[], SupportInterval::new(lo, hi)?)
    }

    pub fn raised_cosine(center: f64, half_width: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::from_parts(
            DistributionKind::RaisedCosineBump,
            &[center, half_width],
            SupportInterval::new(lo, hi)?,
        )
    }

    pub fn piecewise_linear(knots: &[(f64, f64)], lo: f64, hi: f64) -> Result<Self> {
        let params: Vec<f64> = knots.iter().flat_map(|k| [k.0, k.1]).collect();
        Self::from_parts(
            DistributionKind::PiecewiseLinearDensity,
            &params,
            SupportInterval::new(lo, hi)?,
        )
    }

    pub fn beta_like(a: u32, b: u32, lo: f64, hi: f64) -> Result<Self> {
        Self::from_parts(
            DistributionKind::BetaLikePolynomial,
            &[a as f64, b as f64],
            SupportInterval::new(lo, hi)?,
        )
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    pub fn lo(&self) -> f64 {
        self.support.lo
    }

    pub fn hi(&self) -> f64 {
        self.support.hi
    }

    pub fn components(&self) -> &[(f64, Component)] {
        &self.parts
    }

    /// Sorted panel edges for quadrature: support ends, component edges,
    /// bump centres and density knots.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Clamps to 0 below the support and 1 above it.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.support.lo {
            return 0.0;
        }
        if x >= self.support.hi {
            return 1.0;
        }
        let s: f64 = self.parts.iter().map(|(w, c)| w * c.cdf(x)).sum();
        s.clamp(0.0, 1.0)
    }

    /// Density, zero outside the support.
    pub fn density(&self, x: f64) -> f64 {
        if !self.support.contains(x) {
            return 0.0;
        }
        self.parts.iter().map(|(w, c)| w * c.pdf(x)).sum()
    }

    pub fn density_slope(&self, x: f64) -> f64 {
        if !self.support.contains(x) {
            return 0.0;
        }
        self.parts.iter().map(|(w, c)| w * c.pdf_prime(x)).sum()
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.check_in_support(x)?;
        Ok(self.density(x))
    }

    pub fn pdf_prime(&self, x: f64) -> Result<f64> {
        self.check_in_support(x)?;
        Ok(self.density_slope(x))
    }

    fn check_in_support(&self, x: f64) -> Result<()> {
        if self.support.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "x = {x} outside support [{}, {}]",
                self.support.lo, self.support.hi
            )))
        }
    }

    /// `∫_lo^x ξ g(ξ) dξ`, clamped to the support.
    pub fn partial_moment(&self, x: f64) -> f64 {
        if x <= self.support.lo {
            return 0.0;
        }
        self.parts.iter().map(|(w, c)| w * c.partial_moment(x)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.partial_moment(self.support.hi)
    }

    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }

    /// Smallest `x` with `cdf(x) >= q`; `q >= 1` maps to the upper support end.
    pub fn quantile(&self, q: f64) -> f64 {
        if !(q > 0.0) {
            return self.support.lo;
        }
        if q >= 1.0 {
            return self.support.hi;
        }
        if let [(_, Component::Uniform { lo, hi })] = self.parts.as_slice() {
            return lo + q * (hi - lo);
        }
        invert_increasing(
            |x| self.cdf(x),
            |x| self.density(x),
            q,
            self.support.lo,
            self.support.hi,
        )
    }

    /// Inverse-cdf draw keyed by `(seed, index)`.
    pub fn sample(&self, seed: u64, index: u64) -> f64 {
        self.quantile(rng::uniform(seed, index))
    }

    /// `Φ(b) = E[w | w <= b]`, with `Φ(lo) = lo` by continuity.
    pub fn phi(&self, b: f64) -> Result<f64> {
        StrongLaw::plain(self.clone()).phi(b)
    }

    pub fn phi_inverse(&self, xi: f64) -> Result<f64> {
        StrongLaw::plain(self.clone()).phi_inverse(xi)
    }

    /// `E[w | w <= c]`.
    pub fn cond_mean_below(&self, c: f64) -> Result<f64> {
        self.phi(c.min(self.support.hi))
    }

    /// `E[w | w >= r] = r + ∫_r^{hi} (1 - (G(ξ) - G(r)) / (1 - G(r))) dξ`.
    pub fn cond_mean_above(&self, r: f64) -> Result<f64> {
        let g_r = self.cdf(r);
        let tail = 1.0 - g_r;
        if !(tail > 1e-14) || r >= self.support.hi {
            return Err(Error::NoMassAboveReserve(r));
        }
        let integral = integrate_with(
            |x| 1.0 - (self.cdf(x) - g_r) / tail,
            r,
            self.support.hi,
            &self.knots,
            &QuadConfig::default(),
        )
        .value;
        Ok(r + integral)
    }

    /// Expected `q`-th largest of `n` iid draws (`q = 1` is the maximum).
    /// Only ranks 1 and 2 are supported.
    pub fn order_stat_mean(&self, n: usize, q: usize) -> Result<f64> {
        if q == 0 || q > 2 || q > n {
            return Err(Error::UnsupportedRank { rank: q, n });
        }
        let lo = self.support.lo;
        let nf = n as f64;
        let value = if q == 1 {
            integrate_with(
                |x| 1.0 - self.cdf(x).powi(n as i32),
                lo,
                self.support.hi,
                &self.knots,
                &QuadConfig::default(),
            )
            .value
        } else {
            integrate_with(
                |x| {
                    let f = self.cdf(x);
                    let fn1 = f.powi(n as i32 - 1);
                    1.0 - fn1 * f - nf * fn1 * (1.0 - f)
                },
                lo,
                self.support.hi,
                &self.knots,
                &QuadConfig::default(),
            )
            .value
        };
        Ok(lo + value)
    }

    /// Minimum of the density over an interior grid of `points` nodes.
    pub fn min_interior_density(&self, points: usize) -> f64 {
        let SupportInterval { lo, hi } = self.support;
        (1..=points)
            .map(|i| self.density(lo + (hi - lo) * i as f64 / (points + 1) as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the density is strictly positive on the closed support.
    pub fn check_positive(&self) -> Result<()> {
        let SupportInterval { lo, hi } = self.support;
        let interior = self.min_interior_density(999);
        let ends = self.density(lo).min(self.density(hi));
        let knots = self
            .knots
            .iter()
            .map(|x| self.density(*x))
            .fold(f64::INFINITY, f64::min);
        let floor = interior.min(ends).min(knots);
        if floor > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidDistribution(format!(
                "density vanishes on [{lo}, {hi}] (minimum {floor})"
            )))
        }
    }
}

/// Bid law of the strong bidder: truthful bids from `dist`, replaced by a
/// zero bid with probability `zero_mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongLaw {
    pub dist: Distribution,
    pub zero_mass: f64,
}

impl StrongLaw {
    pub fn plain(dist: Distribution) -> Self {
        Self {
            dist,
            zero_mass: 0.0,
        }
    }

    /// Strong bid kept with probability `keep`, zeroed otherwise.
    pub fn with_intervention(dist: Distribution, keep: f64) -> Result<Self> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::Domain(format!(
                "intervention keep probability must lie in (0, 1], got {keep}"
            )));
        }
        Ok(Self {
            dist,
            zero_mass: 1.0 - keep,
        })
    }

    pub fn hi(&self) -> f64 {
        self.dist.hi()
    }

    pub fn cdf(&self, b: f64) -> f64 {
        if b < 0.0 {
            return 0.0;
        }
        self.zero_mass + (1.0 - self.zero_mass) * self.dist.cdf(b)
    }

    pub fn density(&self, b: f64) -> f64 {
        (1.0 - self.zero_mass) * self.dist.density(b)
    }

    pub fn density_slope(&self, b: f64) -> f64 {
        (1.0 - self.zero_mass) * self.dist.density_slope(b)
    }

    pub fn partial_moment(&self, b: f64) -> f64 {
        (1.0 - self.zero_mass) * self.dist.partial_moment(b)
    }

    pub fn mean(&self) -> f64 {
        self.partial_moment(self.hi())
    }

    /// `v G(b) - ∫_0^b ξ g(ξ) dξ`, the bracket `G(b) (v - Φ(b))`.
    pub fn surplus_below(&self, v: f64, b: f64) -> f64 {
        v * self.cdf(b) - self.partial_moment(b)
    }

    pub fn phi(&self, b: f64) -> Result<f64> {
        let lo = self.dist.lo();
        if b > self.hi() || b.is_nan() {
            return Err(Error::Domain(format!(
                "Φ argument {b} beyond support end {}",
                self.hi()
            )));
        }
        if b < lo {
            return if self.zero_mass > 0.0 && b >= 0.0 {
                Ok(0.0)
            } else {
                Err(Error::Domain(format!("Φ argument {b} below support start {lo}")))
            };
        }
        let g = self.cdf(b);
        if g <= 0.0 {
            return Ok(lo);
        }
        Ok(self.partial_moment(b) / g)
    }

    /// Inverse of `Φ` on `[0, E[w]]`.
    pub fn phi_inverse(&self, xi: f64) -> Result<f64> {
        let top = self.mean();
        let lo = self.dist.lo();
        if !(xi >= 0.0) || xi > top * (1.0 + 1e-15) {
            return Err(Error::Domain(format!(
                "Φ⁻¹ argument {xi} outside [0, E[w] = {top}]"
            )));
        }
        if xi >= top {
            return Ok(self.hi());
        }
        if xi <= lo && self.zero_mass == 0.0 {
            return Ok(lo);
        }
        if xi == 0.0 {
            return Ok(0.0);
        }
        Ok(invert_increasing(
            |b| self.phi(b).unwrap_or(top),
            |b| {
                let g = self.cdf(b);
                if g > 0.0 {
                    self.density(b) * (b - self.partial_moment(b) / g) / g
                } else {
                    0.0
                }
            },
            xi,
            lo.max(0.0),
            self.hi(),
        ))
    }
}

/// Solves `f(x) = target` for increasing `f` on `[lo, hi]` by Newton steps
/// safeguarded with bisection; returns the leftmost solution on flat stretches.
pub(crate) fn invert_increasing<F, D>(f: F, df: D, target: f64, lo: f64, hi: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    if f(a) >= target {
        return a;
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..400 {
        let fx = f(x);
        if fx >= target {
            b = x;
        } else {
            a = x;
        }
        if b - a <= 2.0 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        let d = df(x);
        let resid = fx - target;
        if d > 0.0 && resid.abs() <= 2.0 * f64::EPSILON * target.abs() {
            return x;
        }
        let mut next = if d > 0.0 { x - resid / d } else { f64::NAN };
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if d > 0.0 && (next - x).abs() <= 2.0 * f64::EPSILON * x.abs() {
            return next;
        }
        x = next;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use approx::assert_relative_eq;

    fn u01() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    fn u02() -> Distribution {
        Distribution::uniform(0.0, 2.0).unwrap()
    }

    // 0.25·U[0, 0.1] + 0.75·bump(2, 0.1) on [0, 2.1], no floor
    fn spec_mixture() -> Distribution {
        let s = SupportInterval::new(0.0, 2.1).unwrap();
        Distribution::mixture(
            s,
            vec![
                (0.25, Component::uniform(0.0, 0.1).unwrap()),
                (0.75, Component::raised_cosine(2.0, 0.1, 0.0, 2.1).unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn uniform_basics() {
        let d = u01();
        assert_eq!(d.cdf(0.5), 0.5);
        assert_eq!(d.cdf(0.0), 0.0);
        assert_eq!(d.cdf(-1.0), 0.0);
        assert_eq!(d.cdf(3.0), 1.0);
        assert_eq!(d.pdf(0.3).unwrap(), 1.0);
        assert_eq!(d.pdf_prime(0.3).unwrap(), 0.0);
        assert_eq!(d.quantile(0.25), 0.25);
        assert_eq!(d.quantile(1.0), 1.0);
    }

    #[test]
    fn pdf_outside_support_is_domain_error() {
        assert!(matches!(u01().pdf(1.5), Err(Error::Domain(_))));
        assert!(matches!(u01().pdf_prime(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn mixture_cdf_matches_numeric_integration() {
        let d = spec_mixture();
        let numeric =
            integrate_with(|x| d.density(x), 0.0, 1.0, d.knots(), &QuadConfig::default()).value;
        assert_relative_eq!(numeric, 0.25, epsilon = 1e-10);
        assert_relative_eq!(d.cdf(1.0), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn mixture_quantile_takes_leftmost_point() {
        let d = spec_mixture();
        assert_relative_eq!(d.quantile(0.25), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn raised_cosine_slope_vanishes_at_center() {
        let d = Distribution::raised_cosine(1.0, 0.5, 0.0, 2.0).unwrap();
        assert!(d.pdf_prime(1.0).unwrap().abs() < 1e-12);
        assert_relative_eq!(d.pdf(1.0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn truncated_bump_renormalises() {
        let c = Component::raised_cosine(0.0, 0.2, 0.0, 1.0).unwrap();
        assert_relative_eq!(c.cdf(0.2), 1.0, epsilon = 1e-14);
        assert_relative_eq!(c.pdf(0.0), 2.0 / 0.2, epsilon = 1e-12);
        let m = integrate(|x| x * c.pdf(x), 0.0, 0.2).value;
        assert_relative_eq!(c.partial_moment(0.2), m, epsilon = 1e-12);
    }

    #[test]
    fn piecewise_linear_slope_is_segment_slope() {
        let d = Distribution::piecewise_linear(&[(0.0, 1.0), (0.5, 2.0), (1.0, 1.0)], 0.0, 1.0)
            .unwrap();
        // heights normalise by area 1.5
        let h = 1e-7;
        for x in [0.25, 0.5, 0.75] {
            let fd = (d.density(x + h) - d.density(x)) / h;
            assert_relative_eq!(d.pdf_prime(x).unwrap(), fd, max_relative = 1e-6);
        }
        assert_relative_eq!(d.pdf_prime(0.5).unwrap(), -2.0 / 1.5, epsilon = 1e-12);
    }

    #[test]
    fn smooth_slopes_match_central_differences() {
        let ds = [
            Distribution::raised_cosine(1.0, 0.75, 0.0, 2.0).unwrap(),
            Distribution::beta_like(2, 3, 0.0, 1.0).unwrap(),
        ];
        let h = 1e-5;
        for d in &ds {
            for i in 1..20 {
                let x = d.lo() + d.support().width() * i as f64 / 20.0;
                let fd = (d.density(x + h) - d.density(x - h)) / (2.0 * h);
                let an = d.pdf_prime(x).unwrap();
                assert!((an - fd).abs() <= 1e-6 * (1.0 + an.abs()), "{x}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn partial_moments_match_quadrature() {
        let ds = [
            spec_mixture(),
            Distribution::beta_like(3, 2, 0.5, 2.0).unwrap(),
            Distribution::piecewise_linear(&[(0.0, 0.5), (0.3, 2.0), (1.0, 0.1)], 0.0, 1.0)
                .unwrap(),
        ];
        for d in &ds {
            for i in 0..=10 {
                let x = d.lo() + d.support().width() * i as f64 / 10.0;
                let q = integrate_with(
                    |t| t * d.density(t),
                    d.lo(),
                    x,
                    d.knots(),
                    &QuadConfig::default(),
                )
                .value;
                assert!((d.partial_moment(x) - q).abs() < 1e-11, "{x}");
                let c = integrate_with(|t| d.density(t), d.lo(), x, d.knots(), &QuadConfig::default())
                    .value;
                assert!((d.cdf(x) - c).abs() < 1e-11, "{x}");
            }
        }
    }

    #[test]
    fn bad_weights_and_mass_are_rejected() {
        let s = SupportInterval::new(0.0, 1.0).unwrap();
        let r = Distribution::mixture(s, vec![(0.7, Component::uniform(0.0, 1.0).unwrap())]);
        assert!(matches!(r, Err(Error::InvalidDistribution(_))));
        assert!(SupportInterval::new(1.0, 1.0).is_err());
        assert!(SupportInterval::new(-0.5, 1.0).is_err());
    }

    #[test]
    fn json_shape_round_trips() {
        let d = spec_mixture();
        let js = serde_json::to_value(&d).unwrap();
        assert_eq!(js["kind"], "mixture");
        assert_eq!(js["support"], serde_json::json!([0.0, 2.1]));
        let back: Distribution = serde_json::from_value(js).unwrap();
        assert_eq!(back, d);
        let u: Distribution =
            serde_json::from_str(r#"{"kind":"uniform","params":[],"support":[0,2]}"#).unwrap();
        assert_eq!(u.hi(), 2.0);
        assert!(serde_json::from_str::<Distribution>(
            r#"{"kind":"uniform","params":[],"support":[2,1]}"#
        )
        .is_err());
    }

    #[test]
    fn order_statistics_of_uniform() {
        let d = u01();
        assert_relative_eq!(d.order_stat_mean(2, 1).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(d.order_stat_mean(2, 2).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(d.order_stat_mean(5, 1).unwrap(), 5.0 / 6.0, epsilon = 1e-12);
        assert!(matches!(
            d.order_stat_mean(5, 3),
            Err(Error::UnsupportedRank { rank: 3, n: 5 })
        ));
        assert!(d.order_stat_mean(1, 2).is_err());
    }

    #[test]
    fn phi_of_uniform() {
        assert_relative_eq!(u01().phi(0.8).unwrap(), 0.4, epsilon = 1e-15);
        assert_eq!(u01().phi(0.0).unwrap(), 0.0);
        assert_relative_eq!(u02().phi(2.0).unwrap(), u02().mean(), epsilon = 1e-15);
        assert!(matches!(u01().phi(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn phi_slope_at_zero_is_one_half() {
        let d = u02();
        let b = 1e-4;
        // quadrature oracle for E[w | w <= b]
        let num = integrate(|x| x * d.density(x), 0.0, b).value;
        let den = integrate(|x| d.density(x), 0.0, b).value;
        assert!((num / den / b - 0.5).abs() < 1e-6);
        assert!((d.phi(b).unwrap() / b - 0.5).abs() < 1e-6);
    }

    #[test]
    fn phi_inverse_values() {
        assert_relative_eq!(u01().phi_inverse(0.4).unwrap(), 0.8, epsilon = 1e-12);
        assert_eq!(u01().phi_inverse(0.0).unwrap(), 0.0);
        let r = u02().phi_inverse(1e-4).unwrap() / 1e-4;
        assert!((r - 2.0).abs() < 1e-3);
        assert!(matches!(u01().phi_inverse(0.6), Err(Error::Domain(_))));
    }

    #[test]
    fn cond_mean_above_values() {
        assert_relative_eq!(u02().cond_mean_above(1.0).unwrap(), 1.5, epsilon = 1e-12);
        assert_relative_eq!(u02().cond_mean_above(0.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(
            u02().cond_mean_above(2.0),
            Err(Error::NoMassAboveReserve(_))
        ));
    }

    #[test]
    fn positivity_check_flags_gaps() {
        assert!(spec_mixture().check_positive().is_err());
        assert!(u02().check_positive().is_ok());
    }

    #[test]
    fn intervention_law_shifts_mass_to_zero() {
        let law = StrongLaw::with_intervention(u02(), 0.75).unwrap();
        assert_relative_eq!(law.cdf(0.0), 0.25, epsilon = 1e-15);
        assert_relative_eq!(law.cdf(1.0), 0.25 + 0.75 * 0.5, epsilon = 1e-15);
        assert_relative_eq!(law.mean(), 0.75, epsilon = 1e-15);
        let b = law.phi_inverse(0.3).unwrap();
        assert_relative_eq!(law.phi(b).unwrap(), 0.3, epsilon = 1e-12);
    }
}
