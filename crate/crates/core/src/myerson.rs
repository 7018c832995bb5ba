//! Optimal-auction benchmark via (ironed) virtual values.

use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::stats::{accumulate, RevenueEstimate};

/// `ψ(x) = x - (1 - D(x)) / d(x)`.
pub fn virtual_value(d: &Distribution, x: f64) -> Result<f64> {
    if !d.support().contains(x) || x <= d.lo() {
        return Err(Error::Domain(format!(
            "virtual value needs x in ({}, {}], got {x}",
            d.lo(),
            d.hi()
        )));
    }
    if x >= d.hi() {
        return Ok(d.hi());
    }
    let dens = d.density(x);
    if !(dens > 0.0) {
        return Err(Error::Domain(format!("density vanishes at {x}")));
    }
    Ok(x - (1.0 - d.cdf(x)) / dens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub regular: bool,
    /// Adjacent grid points `(x_i, x_{i+1})` where `ψ` drops.
    pub violations: Vec<(f64, f64)>,
}

/// Checks that `ψ` is nondecreasing on `grid_size` interior points.
pub fn regularity_check(d: &Distribution, grid_size: usize) -> RegularityReport {
    let (lo, w) = (d.lo(), d.support().width());
    let xs: Vec<f64> = (0..grid_size)
        .map(|i| lo + w * (i as f64 + 0.5) / grid_size as f64)
        .collect();
    let psi: Vec<f64> = xs
        .iter()
        .map(|x| virtual_value(d, *x).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let mut violations = Vec::new();
    for i in 0..grid_size.saturating_sub(1) {
        if psi[i + 1] < psi[i] - 1e-9 {
            violations.push((xs[i], xs[i + 1]));
        }
    }
    RegularityReport {
        regular: violations.is_empty(),
        violations,
    }
}

/// Ironed virtual value: slope of the concave hull of the revenue curve
/// `R(q) = q · D⁻¹(1 - q)` on a uniform quantile grid.
#[derive(Debug, Clone)]
pub struct VirtualValueFn {
    dist: Distribution,
    cells: usize,
    /// Grid indices of hull vertices, increasing in `q`.
    hull: Vec<usize>,
    /// Slope of each hull segment, nonincreasing in `q`.
    slopes: Vec<f64>,
    pub ironed: bool,
}

impl VirtualValueFn {
    /// `ψ̄(x)`, nondecreasing in `x`. Single-cell hull segments return the
    /// pointwise `ψ` clamped between the neighbouring segment slopes.
    pub fn eval(&self, x: f64) -> f64 {
        let d = &self.dist;
        if x >= d.hi() {
            return d.hi();
        }
        let q = 1.0 - d.cdf(x);
        let pos = q * self.cells as f64;
        let seg = match self
            .hull
            .binary_search_by(|h| (*h as f64).partial_cmp(&pos).unwrap())
        {
            Ok(i) => i.min(self.slopes.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.slopes.len() - 1),
        };
        let s = self.slopes[seg];
        if self.hull[seg + 1] - self.hull[seg] == 1 && x > d.lo() {
            if let Ok(psi) = virtual_value(d, x) {
                let upper = if seg > 0 { self.slopes[seg - 1] } else { f64::INFINITY };
                let lower = if seg + 1 < self.slopes.len() {
                    self.slopes[seg + 1]
                } else {
                    f64::NEG_INFINITY
                };
                return psi.clamp(lower, upper);
            }
        }
        s
    }

    pub fn hull_segments(&self) -> usize {
        self.slopes.len()
    }
}

/// Builds `ψ̄` from a quantile grid with `cells` intervals.
pub fn ironed_virtual(d: &Distribution, cells: usize) -> VirtualValueFn {
    let cells = cells.max(2);
    let pts: Vec<(f64, f64)> = (0..=cells)
        .map(|j| {
            let q = j as f64 / cells as f64;
            (q, q * d.quantile(1.0 - q))
        })
        .collect();
    // upper hull, Andrew's monotone chain
    let mut hull: Vec<usize> = Vec::with_capacity(cells + 1);
    for j in 0..=cells {
        while hull.len() >= 2 {
            let (a, b) = (pts[hull[hull.len() - 2]], pts[hull[hull.len() - 1]]);
            let c = pts[j];
            let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }
    let slopes: Vec<f64> = hull
        .windows(2)
        .map(|w| (pts[w[1]].1 - pts[w[0]].1) / (pts[w[1]].0 - pts[w[0]].0))
        .collect();
    let ironed = hull.len() < cells + 1;
    VirtualValueFn {
        dist: d.clone(),
        cells,
        hull,
        slopes,
        ironed,
    }
}

/// Monte Carlo estimate of `E[max(0, ψ̄_F(v_1), .., ψ̄_F(v_N), ψ̄_G(w))]`.
///
/// `weak` may be absent or `n` zero; the strong bidder may be absent. Draw
/// keys follow the mechanism layout with stride `N + 3`.
pub fn oa_revenue(
    weak: Option<&Distribution>,
    n: usize,
    strong: Option<&Distribution>,
    samples: u64,
    seed: u64,
) -> RevenueEstimate {
    let n = if weak.is_some() { n } else { 0 };
    let psi_f = weak.map(|f| ironed_virtual(f, 10_000));
    let psi_g = strong.map(|g| ironed_virtual(g, 10_000));
    let c = n as u64 + 3;
    let [m] = accumulate(samples, |j| {
        let base = j * c;
        let mut best: f64 = 0.0;
        if let (Some(f), Some(pf)) = (weak, &psi_f) {
            for i in 0..n as u64 {
                best = best.max(pf.eval(f.sample(seed, base + i)));
            }
        }
        if let (Some(g), Some(pg)) = (strong, &psi_g) {
            best = best.max(pg.eval(g.sample(seed, base + n as u64)));
        }
        [best]
    });
    m.estimate(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservePick {
    pub r_star: f64,
    pub revenue: f64,
}

/// Maximises `r (1 - D(r))` by a grid scan refined with golden sections.
pub fn single_buyer_reserve(d: &Distribution) -> ReservePick {
    let rev = |r: f64| r * (1.0 - d.cdf(r));
    let (lo, w) = (d.lo(), d.support().width());
    let m = 4000;
    let mut best = (0, rev(lo));
    for i in 1..=m {
        let r = lo + w * i as f64 / m as f64;
        let v = rev(r);
        if v > best.1 {
            best = (i, v);
        }
    }
    let step = w / m as f64;
    let mut a = (lo + step * (best.0 as f64 - 1.0)).max(lo);
    let mut b = (lo + step * (best.0 as f64 + 1.0)).min(d.hi());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (rev(x1), rev(x2));
    for _ in 0..100 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = rev(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = rev(x1);
        }
        if b - a < 1e-13 * w {
            break;
        }
    }
    let r = 0.5 * (a + b);
    let grid_r = lo + step * best.0 as f64;
    if rev(r) >= best.1 {
        ReservePick {
            r_star: r,
            revenue: rev(r),
        }
    } else {
        ReservePick {
            r_star: grid_r,
            revenue: best.1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{Component, SupportInterval};
    use approx::assert_relative_eq;

    fn u(lo: f64, hi: f64) -> Distribution {
        Distribution::uniform(lo, hi).unwrap()
    }

    fn two_bumps() -> Distribution {
        let s = SupportInterval::new(0.0, 2.5).unwrap();
        Distribution::mixture(
            s,
            vec![
                (0.2, Component::raised_cosine(0.0, 0.2, 0.0, 2.5).unwrap()),
                (0.79, Component::raised_cosine(2.0, 0.25, 0.0, 2.5).unwrap()),
                (0.01, Component::uniform(0.0, 2.5).unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn uniform_virtual_values() {
        assert_relative_eq!(virtual_value(&u(0.0, 1.0), 0.7).unwrap(), 0.4, epsilon = 1e-14);
        assert_eq!(virtual_value(&u(0.0, 1.0), 1.0).unwrap(), 1.0);
        assert_relative_eq!(virtual_value(&u(0.0, 2.0), 1.0).unwrap(), 0.0, epsilon = 1e-14);
        assert!(virtual_value(&u(0.0, 1.0), 1.5).is_err());
    }

    #[test]
    fn regularity() {
        assert!(regularity_check(&u(0.0, 1.0), 1000).regular);
        assert!(!regularity_check(&two_bumps(), 1000).regular);
    }

    #[test]
    fn single_bump_regularity_matches_finite_differences() {
        let d = Distribution::raised_cosine(1.0, 0.5, 0.5, 1.5).unwrap();
        let rep = regularity_check(&d, 200);
        let h = 1e-6;
        let any_drop = (1..199).any(|i| {
            let x = 0.5 + (i as f64 + 0.5) / 200.0;
            virtual_value(&d, x + h).unwrap() < virtual_value(&d, x).unwrap()
        });
        assert_eq!(rep.regular, !any_drop);
    }

    #[test]
    fn ironing_regular_law_is_identity() {
        let d = u(0.0, 1.0);
        let p = ironed_virtual(&d, 10_000);
        for i in 1..100 {
            let x = i as f64 / 100.0;
            assert!((p.eval(x) - (2.0 * x - 1.0)).abs() < 1e-4);
        }
    }

    #[test]
    fn ironed_values_are_monotone() {
        let p = ironed_virtual(&two_bumps(), 10_000);
        assert!(p.ironed);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=2000 {
            let x = 2.5 * i as f64 / 2000.0;
            let v = p.eval(x);
            assert!(v >= prev - 1e-9, "x = {x}: {v} < {prev}");
            assert!(v <= x + 1e-9);
            prev = v;
        }
    }

    #[test]
    fn single_buyer_revenue_matches_ironed_oa() {
        let d = two_bumps();
        let direct = single_buyer_reserve(&d);
        let oa = oa_revenue(None, 0, Some(&d), 400_000, 3);
        assert!((oa.mean - direct.revenue).abs() < 1e-3 + 3.0 * oa.std_error);
    }

    #[test]
    fn classic_values() {
        let r = single_buyer_reserve(&u(0.0, 1.0));
        assert_relative_eq!(r.r_star, 0.5, epsilon = 1e-6);
        assert_relative_eq!(r.revenue, 0.25, epsilon = 1e-12);
        let r = single_buyer_reserve(&u(0.0, 2.0));
        assert_relative_eq!(r.r_star, 1.0, epsilon = 1e-6);
        assert_relative_eq!(r.revenue, 0.5, epsilon = 1e-12);
        let one = oa_revenue(None, 0, Some(&u(0.0, 1.0)), 200_000, 1);
        assert!(one.covers(0.25, 4.0));
        let two = oa_revenue(Some(&u(0.0, 1.0)), 2, None, 200_000, 1);
        assert!(two.covers(5.0 / 12.0, 4.0));
    }
}
