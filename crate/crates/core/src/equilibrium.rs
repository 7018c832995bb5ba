//! Symmetric equilibrium bid schedule of the tournament auction.
//!
//! The weak bidders' bid `b(v)` solves `b' = H(b, v)` with
//!
//! ```text
//! H(b, v) = (N - 1) f(v) / F(v) · (v G(b) - M(b)) / ((b - v) g(b)),
//! ```
//!
//! `M(b) = ∫_0^b ξ g(ξ) dξ`, inside the band `v < b < Φ⁻¹(v)`. The upper
//! band edge is exactly where `v G(b) - M(b)` changes sign, so it is checked
//! without inverting `Φ`.

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, StrongLaw};
use crate::error::{Error, Result};

/// Weak-bidder law, strong-bidder bid law and number of weak bidders.
#[derive(Debug, Clone)]
pub struct Instance {
    pub weak: Distribution,
    pub strong: StrongLaw,
    pub n: usize,
}

impl Instance {
    pub fn new(weak: Distribution, strong: StrongLaw, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("need at least two weak bidders, got {n}")));
        }
        if weak.lo() != 0.0 || strong.dist.lo() != 0.0 {
            return Err(Error::InvalidDistribution(
                "weak and strong supports must start at 0".into(),
            ));
        }
        weak.check_positive()?;
        strong.dist.check_positive()?;
        Ok(Self { weak, strong, n })
    }

    pub fn plain(weak: Distribution, strong: Distribution, n: usize) -> Result<Self> {
        Self::new(weak, StrongLaw::plain(strong), n)
    }

    pub fn v_bar(&self) -> f64 {
        self.weak.hi()
    }

    /// `2N / (N + 1)`.
    pub fn beta_star(&self) -> f64 {
        beta_star(self.n)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let mean = self.strong.mean();
        if mean < self.v_bar() {
            w.push(format!(
                "strong bidder mean {mean} is below the weak support end {}; the band may close before v̄",
                self.v_bar()
            ));
        }
        w
    }

    pub fn rhs(&self, b: f64, v: f64) -> Result<f64> {
        ode_rhs(b, v, &self.weak, &self.strong, self.n)
    }

    /// `K(β, v) = H(β v, v)`; at `v = 0` the limit value.
    pub fn k(&self, beta: f64, v: f64) -> Result<f64> {
        if v == 0.0 {
            if self.strong.zero_mass > 0.0 {
                return Err(Error::Domain("K has no finite limit with a zero-bid atom".into()));
            }
            if !(beta > 1.0 && beta < 2.0) {
                return Err(Error::Domain(format!("β = {beta} outside (1, 2) at v = 0")));
            }
            return Ok(k_limit(beta, self.n));
        }
        self.rhs(beta * v, v)
    }
}

pub fn beta_star(n: usize) -> f64 {
    2.0 * n as f64 / (n as f64 + 1.0)
}

/// `H(b, v)`; domain error outside the open band.
pub fn ode_rhs(b: f64, v: f64, weak: &Distribution, strong: &StrongLaw, n: usize) -> Result<f64> {
    if !(v > 0.0 && v <= weak.hi()) {
        return Err(Error::Domain(format!("v = {v} outside (0, {}]", weak.hi())));
    }
    if !(b > v) {
        return Err(Error::Domain(format!("b = {b} not above v = {v}")));
    }
    if !(b < strong.hi()) {
        return Err(Error::Domain(format!("b = {b} not below {}", strong.hi())));
    }
    let s = strong.surplus_below(v, b);
    if !(s > 0.0) {
        return Err(Error::Domain(format!("b = {b} not below Φ⁻¹({v})")));
    }
    let g = strong.density(b);
    if !(g > 0.0) {
        return Err(Error::Domain(format!("strong density vanishes at b = {b}")));
    }
    let hazard = weak.density(v) / weak.cdf(v);
    Ok((n as f64 - 1.0) * hazard * s / ((b - v) * g))
}

/// `K(β, v) = H(β v, v)`.
pub fn k_fn(beta: f64, v: f64, weak: &Distribution, strong: &StrongLaw, n: usize) -> Result<f64> {
    ode_rhs(beta * v, v, weak, strong, n)
}

/// `lim_{v→0} K(β, v) = (N - 1) β / (β - 1) · (1 - β / 2)`.
pub fn k_limit(beta: f64, n: usize) -> f64 {
    (n as f64 - 1.0) * beta / (beta - 1.0) * (1.0 - 0.5 * beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Ode,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: SolveMethod,
    /// Largest `|b' - H| / (1 + |H|)` at interval midpoints.
    pub max_ode_residual: f64,
    pub picard_iterations: usize,
    pub sup_norm_delta: f64,
    /// Nodes where the Picard clamp binds on the final iterate.
    pub clamp_active: usize,
    pub rk_steps_accepted: usize,
    pub rk_steps_rejected: usize,
    pub warnings: Vec<String>,
}

impl SolveReport {
    fn new(method: SolveMethod) -> Self {
        Self {
            method,
            max_ode_residual: 0.0,
            picard_iterations: 0,
            sup_norm_delta: 0.0,
            clamp_active: 0,
            rk_steps_accepted: 0,
            rk_steps_rejected: 0,
            warnings: Vec::new(),
        }
    }
}

/// Tabulated increasing bid schedule with monotone cubic Hermite
/// interpolation.
///
/// On the first cell the schedule follows `b(v) = b_1 (v / v_1)^p` when the
/// start exponent `p` differs from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BidFunctionDef", into = "BidFunctionDef")]
pub struct BidFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    start_exponent: f64,
    hslopes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BidFunctionDef {
    grid: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<Option<f64>>,
    start_exponent: f64,
}

impl From<BidFunction> for BidFunctionDef {
    fn from(b: BidFunction) -> Self {
        BidFunctionDef {
            grid: b.grid,
            values: b.values,
            slopes: b
                .slopes
                .iter()
                .map(|s| if s.is_finite() { Some(*s) } else { None })
                .collect(),
            start_exponent: b.start_exponent,
        }
    }
}

impl TryFrom<BidFunctionDef> for BidFunction {
    type Error = Error;
    fn try_from(d: BidFunctionDef) -> Result<Self> {
        let slopes = d.slopes.iter().map(|s| s.unwrap_or(f64::INFINITY)).collect();
        BidFunction::from_nodes(d.grid, d.values, slopes, d.start_exponent)
    }
}

impl BidFunction {
    pub fn from_nodes(
        grid: Vec<f64>,
        values: Vec<f64>,
        slopes: Vec<f64>,
        start_exponent: f64,
    ) -> Result<Self> {
        let n = grid.len();
        if n < 2 || values.len() != n || slopes.len() != n {
            return Err(Error::Domain("bid table needs matching columns of length >= 2".into()));
        }
        if grid[0] != 0.0 || values[0] != 0.0 {
            return Err(Error::Domain("bid table must start at (0, 0)".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("bid grid must be strictly increasing".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("bid values must be strictly increasing".into()));
        }
        if !(start_exponent > 0.0 && start_exponent <= 1.0) {
            return Err(Error::Domain(format!("start exponent {start_exponent} outside (0, 1]")));
        }
        let mut hslopes = slopes.clone();
        // Fritsch–Carlson limiting, only where the cubic would lose monotonicity
        for i in 0..n - 1 {
            let d = (values[i + 1] - values[i]) / (grid[i + 1] - grid[i]);
            if !hslopes[i].is_finite() || !hslopes[i + 1].is_finite() {
                continue;
            }
            let a = hslopes[i].max(0.0) / d;
            let b = hslopes[i + 1].max(0.0) / d;
            let r = a * a + b * b;
            if r > 9.0 {
                let t = 3.0 / r.sqrt();
                hslopes[i] = t * a * d;
                hslopes[i + 1] = t * b * d;
            } else {
                hslopes[i] = a * d;
                hslopes[i + 1] = b * d;
            }
        }
        Ok(Self {
            grid,
            values,
            slopes,
            start_exponent,
            hslopes,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Node slopes; infinite at 0 for a square-root start.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn start_exponent(&self) -> f64 {
        self.start_exponent
    }

    pub fn v_max(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn top(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    fn cell(&self, v: f64) -> usize {
        match self.grid.binary_search_by(|g| g.partial_cmp(&v).unwrap()) {
            Ok(i) => i.min(self.grid.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.grid.len() - 2),
        }
    }

    /// `b(v)`, clamped to the table range.
    pub fn value(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= self.v_max() {
            return self.top();
        }
        let i = self.cell(v);
        if i == 0 && self.start_exponent != 1.0 {
            return self.values[1] * (v / self.grid[1]).powf(self.start_exponent);
        }
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let h = x1 - x0;
        let t = (v - x0) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.hslopes[i] * h, self.hslopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }

    /// `b'(v)` of the interpolant.
    pub fn derivative(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, self.v_max());
        let i = self.cell(v);
        if i == 0 && self.start_exponent != 1.0 {
            if v == 0.0 {
                return f64::INFINITY;
            }
            return self.start_exponent * self.value(v) / v;
        }
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let h = x1 - x0;
        let t = (v - x0) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.hslopes[i] * h, self.hslopes[i + 1] * h);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h
    }

    /// Smallest `v` with `b(v) >= x`; `v_max` above the top bid.
    pub fn inverse(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.top() {
            return self.v_max();
        }
        let i = match self.values.binary_search_by(|y| y.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.grid[i],
            Err(i) => i - 1,
        };
        crate::dist::invert_increasing(
            |v| self.value(v),
            |v| self.derivative(v),
            x,
            self.grid[i],
            self.grid[i + 1],
        )
    }

    /// Same schedule with every bid multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_nodes(
            self.grid.clone(),
            self.values.iter().map(|y| y * factor).collect(),
            self.slopes.iter().map(|s| s * factor).collect(),
            self.start_exponent,
        )
    }

    /// Truthful bidding `b(v) = v` on `[0, v_max]`.
    pub fn identity(v_max: f64) -> Self {
        Self::from_nodes(vec![0.0, v_max], vec![0.0, v_max], vec![1.0, 1.0], 1.0).unwrap()
    }

    /// `v,b,b_prime` table with a header row and LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,b,b_prime\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!("{},{},{}\n", self.grid[i], self.values[i], self.slopes[i]));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    /// Start offset `v0` as a fraction of `v̄`.
    pub v0_fraction: f64,
    /// Size of the uniform output grid that every integration run lands on.
    pub grid_size: usize,
    /// Residual tolerance for `|b' - H| / (1 + |H|)` at midpoints.
    pub rk_tolerance: f64,
    pub step_rtol: f64,
    pub step_atol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            v0_fraction: 1e-4,
            grid_size: 2001,
            rk_tolerance: 1e-6,
            step_rtol: 1e-10,
            step_atol: 1e-13,
        }
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One Dormand–Prince step from `(v, b)` with slope `k1`. Fails if any stage
/// leaves the band.
fn dp_step(inst: &Instance, v: f64, b: f64, k1: f64, h: f64) -> Result<(f64, f64, f64)> {
    let mut k = [0.0; 7];
    k[0] = k1;
    for s in 0..6 {
        let mut y = b;
        for j in 0..=s {
            y += h * A[s][j] * k[j];
        }
        let x = if s >= 4 { v + h } else { v + C[s] * h };
        k[s + 1] = inst.rhs(y, x)?;
        if s == 5 {
            let err: f64 = h * E.iter().zip(&k).map(|(e, ki)| e * ki).sum::<f64>();
            return Ok((y, k[6], err));
        }
    }
    unreachable!()
}

/// Starting point `(v0, b0)` and start exponent.
fn singular_start(inst: &Instance, v0: f64) -> Result<(f64, f64)> {
    let z = inst.strong.zero_mass;
    if z == 0.0 {
        return Ok((inst.beta_star() * v0, 1.0));
    }
    let g0 = inst.strong.dist.density(0.0);
    if !(g0 > 0.0) {
        return Err(Error::SingularStart("strong density vanishes at 0".into()));
    }
    let n = inst.n as f64;
    let c = (n - 1.0) * z / (n * (1.0 - z) * g0);
    Ok(((2.0 * c * v0).sqrt(), 0.5))
}

/// Integrates the equilibrium ODE from the singular start to `v̄`.
pub fn solve_ode(inst: &Instance, opts: &OdeOptions) -> Result<(BidFunction, SolveReport)> {
    let vbar = inst.v_bar();
    let mut report = SolveReport::new(SolveMethod::Ode);
    report.warnings = inst.warnings();
    let v0 = opts.v0_fraction * vbar;
    let (b0, exponent) = singular_start(inst, v0)?;
    let k0 = inst.rhs(b0, v0).map_err(|e| {
        Error::SingularStart(format!("start point (v0 = {v0}, b0 = {b0}) outside the band: {e}"))
    })?;

    let m = opts.grid_size.max(3);
    let out: Vec<f64> = (0..m).map(|i| vbar * i as f64 / (m - 1) as f64).collect();
    let first_slope = if exponent == 1.0 { inst.beta_star() } else { f64::INFINITY };
    let mut grid = vec![0.0, v0];
    let mut values = vec![0.0, b0];
    let mut slopes = vec![first_slope, k0];

    let h_floor = 1e-12 * vbar;
    let (mut v, mut b, mut k1) = (v0, b0, k0);
    let mut h = v0;
    let mut next = out.iter().position(|x| *x > v0).unwrap();
    while next < m {
        let target = out[next];
        let mut step = h.min(target - v);
        let lands = step >= target - v;
        if lands {
            step = target - v;
        }
        match dp_step(inst, v, b, k1, step) {
            Ok((bn, kn, err)) => {
                let scale = opts.step_atol + opts.step_rtol * bn.abs().max(b.abs());
                let ratio = err.abs() / scale;
                if ratio <= 1.0 && bn > b {
                    let vn = if lands { target } else { v + step };
                    v = vn;
                    b = bn;
                    k1 = kn;
                    grid.push(v);
                    values.push(b);
                    slopes.push(k1);
                    report.rk_steps_accepted += 1;
                    if lands {
                        next += 1;
                    }
                    let grow = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
                    h = if lands { h.max(step * grow) } else { step * grow };
                } else {
                    report.rk_steps_rejected += 1;
                    h = step * (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.5);
                }
            }
            Err(_) => {
                report.rk_steps_rejected += 1;
                h = 0.5 * step;
            }
        }
        if h < h_floor {
            let edge = if b <= v { "lower" } else { "upper" };
            return Err(Error::BandEscape {
                v,
                detail: format!("step fell below {h_floor:e} near the {edge} band edge (b = {b})"),
            });
        }
    }

    let bid = BidFunction::from_nodes(grid, values, slopes, exponent)?;
    report.max_ode_residual = ode_residual(inst, &bid);
    if report.max_ode_residual > opts.rk_tolerance {
        report.warnings.push(format!(
            "midpoint residual {:e} exceeds tolerance {:e}",
            report.max_ode_residual, opts.rk_tolerance
        ));
    }
    Ok((bid, report))
}

/// Largest scaled residual `|b' - H(b, v)| / (1 + |H|)` at interval
/// midpoints beyond the first cell.
pub fn ode_residual(inst: &Instance, bid: &BidFunction) -> f64 {
    let g = bid.grid();
    let mut worst: f64 = 0.0;
    for w in g.windows(2).skip(1) {
        let m = 0.5 * (w[0] + w[1]);
        let r = match inst.rhs(bid.value(m), m) {
            Ok(hv) => (bid.derivative(m) - hv).abs() / (1.0 + hv.abs()),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(r);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub grid_size: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Largest damping `α` in `γ ← (1 - α) γ + α 𝒰𝒯γ`; halved whenever the
    /// update norm grows and regrown by 10% while it shrinks.
    pub damping: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            grid_size: 2001,
            max_iter: 5000,
            tol: 1e-9,
            damping: 0.5,
        }
    }
}

const MIN_DAMPING: f64 = 1e-3;

/// Fixed point of `𝒯γ(v) = (1/v) ∫_0^v K(γ(ξ), ξ) dξ` in `β = b / v` space.
pub fn solve_picard(inst: &Instance, opts: &PicardOptions) -> Result<(BidFunction, SolveReport)> {
    if inst.strong.zero_mass > 0.0 {
        return Err(Error::Precondition(
            "fixed-point iteration needs a strong law without a zero-bid atom".into(),
        ));
    }
    let vbar = inst.v_bar();
    let m = opts.grid_size.max(3);
    let v: Vec<f64> = (0..m).map(|i| vbar * i as f64 / (m - 1) as f64).collect();
    let mut lower = vec![1.0 + 1e-6; m];
    let mut upper = vec![2.0 - 1e-6; m];
    let mean = inst.strong.mean();
    for i in 1..m {
        let edge = if v[i] < mean {
            inst.strong.phi_inverse(v[i])?.min(inst.strong.hi())
        } else {
            inst.strong.hi()
        };
        upper[i] = edge / v[i] - 1e-6;
        lower[i] = 1.0 + 1e-6;
        if !(upper[i] > lower[i]) {
            return Err(Error::BandEscape {
                v: v[i],
                detail: "band is empty on the grid".into(),
            });
        }
    }

    let mut report = SolveReport::new(SolveMethod::Picard);
    report.warnings = inst.warnings();
    let mut gamma = vec![inst.beta_star(); m];
    let mut alpha = opts.damping;
    let mut last = f64::INFINITY;
    let mut kv = vec![0.0; m];
    let mut t = vec![0.0; m];
    for iter in 1..=opts.max_iter {
        for i in 0..m {
            kv[i] = inst.k(gamma[i], v[i])?;
        }
        let mut cum = 0.0;
        t[0] = kv[0];
        let mut clamped = 0;
        for i in 1..m {
            cum += 0.5 * (kv[i - 1] + kv[i]) * (v[i] - v[i - 1]);
            t[i] = cum / v[i];
        }
        let mut delta: f64 = 0.0;
        for i in 0..m {
            if t[i] < lower[i] || t[i] > upper[i] {
                clamped += 1;
            }
            t[i] = t[i].clamp(lower[i], upper[i]);
            delta = delta.max((t[i] - gamma[i]).abs());
        }
        report.picard_iterations = iter;
        report.sup_norm_delta = delta;
        report.clamp_active = clamped;
        if delta <= opts.tol {
            gamma.copy_from_slice(&t);
            break;
        }
        if delta > last {
            alpha = (alpha * 0.5).max(MIN_DAMPING);
        } else {
            alpha = (alpha * 1.1).min(opts.damping);
        }
        last = delta;
        for i in 0..m {
            gamma[i] = (1.0 - alpha) * gamma[i] + alpha * t[i];
        }
        if iter == opts.max_iter {
            return Err(Error::NoConvergence {
                iterations: iter,
                delta,
            });
        }
    }

    let values: Vec<f64> = v.iter().zip(&gamma).map(|(x, g)| x * g).collect();
    let mut slopes = Vec::with_capacity(m);
    for i in 0..m {
        slopes.push(inst.k(gamma[i], v[i])?);
    }
    let bid = BidFunction::from_nodes(v, values, slopes, 1.0)?;
    report.max_ode_residual = ode_residual(inst, &bid);
    Ok((bid, report))
}

/// Sup-norm distance between two schedules on the union of their grids.
pub fn sup_distance(a: &BidFunction, b: &BidFunction) -> f64 {
    a.grid()
        .iter()
        .chain(b.grid())
        .map(|v| (a.value(*v) - b.value(*v)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub sup_distance: f64,
    pub threshold: f64,
    pub agree: bool,
}

/// Compares ODE and Picard schedules; disagreement beyond `1e-3 · v̄` is
/// flagged and the ODE result stays authoritative.
pub fn cross_validate(inst: &Instance, ode: &BidFunction, picard: &BidFunction) -> CrossCheck {
    let d = sup_distance(ode, picard);
    let threshold = 1e-3 * inst.v_bar();
    CrossCheck {
        sup_distance: d,
        threshold,
        agree: d <= threshold,
    }
}

/// Expected payoff of a weak bidder with value `v` placing bid `x` against
/// `N - 1` rivals on `b` and the strong bid law.
pub fn payoff_of_bid(inst: &Instance, bid: &BidFunction, v: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let rank = inst.weak.cdf(bid.inverse(x)).powi(inst.n as i32 - 1);
    rank * inst.strong.surplus_below(v, x)
}

/// `π(ṽ | v) = F(ṽ)^{N-1} (v G(b(ṽ)) - M(b(ṽ)))`.
pub fn payoff(inst: &Instance, bid: &BidFunction, v_true: f64, v_report: f64) -> f64 {
    if v_report <= 0.0 {
        return 0.0;
    }
    let x = bid.value(v_report);
    inst.weak.cdf(v_report).powi(inst.n as i32 - 1) * inst.strong.surplus_below(v_true, x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseReport {
    pub max_regret: f64,
    /// `(v, ṽ)` attaining the largest regret; deviations above the top bid
    /// are reported as `v̄ · x / b(v̄)`.
    pub worst_pair: (f64, f64),
    pub v_points: usize,
    pub dev_points: usize,
}

fn deviation_bids(bid: &BidFunction, vbar: f64, dev_points: usize) -> Vec<(f64, f64)> {
    let mut devs: Vec<(f64, f64)> = (0..dev_points)
        .map(|j| {
            let r = vbar * j as f64 / (dev_points - 1) as f64;
            (r, bid.value(r))
        })
        .collect();
    let top = bid.top();
    for m in 1..=20 {
        let x = top * (1.0 + 0.01 * m as f64);
        devs.push((vbar * x / top, x));
    }
    devs
}

/// Grid search for profitable deviations, including bids above `b(v̄)`.
pub fn verify_best_response(
    inst: &Instance,
    bid: &BidFunction,
    v_points: usize,
    dev_points: usize,
) -> BestResponseReport {
    let vbar = inst.v_bar();
    let devs = deviation_bids(bid, vbar, dev_points);
    let mut worst = (0.0, (0.0, 0.0));
    for i in 1..=v_points {
        let v = vbar * i as f64 / v_points as f64;
        let own = payoff(inst, bid, v, v);
        for (r, x) in &devs {
            let regret = payoff_of_bid(inst, bid, v, *x) - own;
            if regret > worst.0 {
                worst = (regret, (v, *r));
            }
        }
    }
    BestResponseReport {
        max_regret: worst.0,
        worst_pair: worst.1,
        v_points,
        dev_points,
    }
}

/// Report on a uniform grid of `dev_points` that maximises `π(· | v)`.
pub fn best_report(inst: &Instance, bid: &BidFunction, v: f64, dev_points: usize) -> f64 {
    let vbar = inst.v_bar();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for j in 0..dev_points {
        let r = vbar * j as f64 / (dev_points - 1) as f64;
        let p = payoff(inst, bid, v, r);
        if p > best.0 {
            best = (p, r);
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEquilibrium {
    /// Bid of any weak bidder with a positive value; zero values bid 0.
    pub bid_if_positive: f64,
    pub expected_revenue: f64,
}

/// Equilibrium when the strong value is `k` with probability `p` and 0
/// otherwise: every positive weak value bids `k`, revenue `p k`.
pub fn discrete_equilibrium(p: f64, k: f64, weak: &Distribution, n: usize) -> Result<DiscreteEquilibrium> {
    if !(0.0..=1.0).contains(&p) || n < 1 {
        return Err(Error::Domain(format!("need p in [0, 1] and N >= 1, got p = {p}, N = {n}")));
    }
    if p * k <= weak.hi() {
        return Err(Error::Precondition(format!(
            "pk = {} <= v̄ = {}: the atom equilibrium is not guaranteed",
            p * k,
            weak.hi()
        )));
    }
    Ok(DiscreteEquilibrium {
        bid_if_positive: k,
        expected_revenue: p * k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn uu(n: usize, wbar: f64) -> Instance {
        Instance::plain(
            Distribution::uniform(0.0, 1.0).unwrap(),
            Distribution::uniform(0.0, wbar).unwrap(),
            n,
        )
        .unwrap()
    }

    #[test]
    fn rhs_hand_value() {
        let i = uu(2, 2.0);
        assert_relative_eq!(i.rhs(0.6, 0.5).unwrap(), 2.4, epsilon = 1e-12);
        assert_relative_eq!(i.k(1.2, 0.5).unwrap(), 2.4, epsilon = 1e-12);
        assert_eq!(i.k(1.2, 0.5).unwrap(), i.rhs(1.2 * 0.5, 0.5).unwrap());
    }

    #[test]
    fn rhs_band_edges() {
        let i = uu(2, 2.0);
        assert!(matches!(i.rhs(0.5, 0.5), Err(Error::Domain(_))));
        assert!(matches!(i.rhs(1.0, 0.5), Err(Error::Domain(_))));
        let near_low: Vec<f64> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|e| i.rhs(0.5 + e, 0.5).unwrap())
            .collect();
        assert!(near_low[0] < near_low[1] && near_low[1] < near_low[2]);
        assert!(i.rhs(1.0 - 1e-9, 0.5).unwrap() < 1e-7);
    }

    #[test]
    fn k_limit_value() {
        assert_relative_eq!(k_limit(4.0 / 3.0, 2), 4.0 / 3.0, epsilon = 1e-14);
        let i = uu(2, 2.0);
        assert!((i.k(1.2, 1e-7).unwrap() - k_limit(1.2, 2)).abs() < 1e-5);
    }

    #[test]
    fn uniform_pair_has_linear_equilibrium() {
        // F = U[0,1], G = U[0,2]: b = 2N/(N+1) v solves the ODE while b <= 2
        for n in [2, 3, 5] {
            let inst = uu(n, 2.0);
            let (bid, rep) = solve_ode(&inst, &OdeOptions::default()).unwrap();
            let bs = beta_star(n);
            for v in [0.1, 0.5, 0.9, 1.0] {
                assert!((bid.value(v) - bs * v).abs() < 1e-8, "n={n} v={v}");
            }
            assert!(rep.max_ode_residual < 1e-6);
        }
    }

    #[test]
    fn picard_matches_ode() {
        let inst = uu(2, 2.0);
        let (ode, _) = solve_ode(&inst, &OdeOptions::default()).unwrap();
        let (pic, rep) = solve_picard(&inst, &PicardOptions::default()).unwrap();
        assert!(rep.sup_norm_delta <= 1e-9);
        assert_eq!(rep.clamp_active, 0);
        assert!(cross_validate(&inst, &ode, &pic).agree);
    }

    #[test]
    fn best_response_detects_perturbation() {
        let inst = uu(2, 2.0);
        let (bid, _) = solve_ode(&inst, &OdeOptions::default()).unwrap();
        assert!(verify_best_response(&inst, &bid, 50, 200).max_regret <= 1e-4);
        let up = bid.scaled(1.1).unwrap();
        assert!(verify_best_response(&inst, &up, 50, 200).max_regret > 1e-3);
        let truthful = BidFunction::identity(1.0);
        assert!(verify_best_response(&inst, &truthful, 50, 200).max_regret > 0.0);
    }

    #[test]
    fn payoff_closed_form_for_uniforms() {
        let inst = uu(2, 2.0);
        let (bid, _) = solve_ode(&inst, &OdeOptions::default()).unwrap();
        assert_eq!(payoff(&inst, &bid, 0.5, 0.0), 0.0);
        for (v, r) in [(0.5, 0.3), (0.2, 0.9), (0.8, 0.8)] {
            let x = bid.value(r);
            let closed = r * (v * x - x * x / 2.0) / 2.0;
            assert_relative_eq!(payoff(&inst, &bid, v, r), closed, epsilon = 1e-14);
        }
    }

    #[test]
    fn argmax_is_truthful_report() {
        let inst = uu(2, 2.0);
        let (bid, _) = solve_ode(&inst, &OdeOptions::default()).unwrap();
        let step = 1.0 / 199.0;
        for i in 1..10 {
            let v = i as f64 / 10.0;
            assert!((best_report(&inst, &bid, v, 200) - v).abs() <= step + 1e-12);
        }
    }

    #[test]
    fn discrete_equilibrium_revenue() {
        let f = Distribution::uniform(0.0, 1.0).unwrap();
        assert_eq!(discrete_equilibrium(0.75, 2.0, &f, 2).unwrap().expected_revenue, 1.5);
        assert!(matches!(
            discrete_equilibrium(0.4, 2.0, &f, 2),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn bid_function_json_round_trip() {
        let inst = Instance::new(
            Distribution::uniform(0.0, 1.0).unwrap(),
            StrongLaw::with_intervention(Distribution::uniform(0.0, 3.0).unwrap(), 0.75).unwrap(),
            2,
        )
        .unwrap();
        let (bid, _) = solve_ode(&inst, &OdeOptions { grid_size: 51, ..Default::default() }).unwrap();
        assert!(bid.slopes()[0].is_infinite());
        let js = serde_json::to_string(&bid).unwrap();
        assert!(js.contains("null"));
        let back: BidFunction = serde_json::from_str(&js).unwrap();
        assert_eq!(back, bid);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let b = BidFunction::identity(1.0);
        assert_eq!(b.to_csv(), "v,b,b_prime\n0,0,1\n1,1,1\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rhs_positive_inside_band(v in 0.01f64..1.0, t in 0.01f64..0.99) {
            let inst = uu(3, 2.0);
            let hi = inst.strong.phi_inverse(v).unwrap();
            let b = v + t * (hi - v);
            prop_assert!(inst.rhs(b, v).unwrap() > 0.0);
        }

        #[test]
        fn inverse_undoes_value(v in 0.0f64..1.0) {
            let inst = uu(2, 2.0);
            let (bid, _) = solve_ode(&inst, &OdeOptions { grid_size: 101, ..Default::default() }).unwrap();
            let x = bid.value(v);
            prop_assert!((bid.inverse(x) - v).abs() < 1e-9);
        }
    }
}
