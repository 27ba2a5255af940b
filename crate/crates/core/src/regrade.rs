//! Constructive recovery of the additive regrade of an associative operation.
//!
//! Given a smooth associative `S(u, v)`, there is a monotone `xi` with
//! `xi(S(u, v)) = xi(u) + xi(v)`. It is built from the partial derivatives:
//!
//! * `G(u, v) = S_2(u, v) / S_1(u, v)` factorizes as `c H(u) / H(v)`,
//! * `h(v) = d/dv ln G(u0, v)` does not depend on `u0`,
//! * `H(u) = exp(-int_{u0}^{u} h)`, and `xi(u) = int_{u0}^{u} du' / H(u')`.
//!
//! Everything here runs on real intervals. `xi` is only defined up to an
//! affine map, so comparisons go through [`affine_fit`].

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub type BinaryFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Default tabulation size: 256 intervals.
pub const DEFAULT_GRID: usize = 257;
pub const MIN_GRID: usize = 16;
/// Points per axis of the associativity and distributivity test grids.
pub const CHECK_GRID: usize = 17;
/// Largest associativity residual accepted by [`recover_regrade`].
pub const ASSOC_GATE: f64 = 1e-8;
/// Finite-difference step as a fraction of the domain width.
pub const FD_STEP_REL: f64 = 1e-5;
/// Threshold used by [`product_rule_residual`] to classify a candidate.
pub const PRODUCT_RULE_TOL: f64 = 1e-10;

/// A binary operation sampled on `[u_lo, u_hi] x [v_lo, v_hi]`.
#[derive(Clone)]
pub struct BinaryOpSampler {
    name: String,
    eval: BinaryFn,
    partials: Option<(BinaryFn, BinaryFn)>,
    u_range: (f64, f64),
    v_range: (f64, f64),
    grid_n: usize,
}

impl fmt::Debug for BinaryOpSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryOpSampler")
            .field("name", &self.name)
            .field("analytic_partials", &self.partials.is_some())
            .field("u_range", &self.u_range)
            .field("v_range", &self.v_range)
            .field("grid_n", &self.grid_n)
            .finish()
    }
}

impl BinaryOpSampler {
    pub fn new<F>(
        name: impl Into<String>,
        eval: F,
        u_range: (f64, f64),
        v_range: (f64, f64),
    ) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        for (lo, hi) in [u_range, v_range] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSampler(format!("bad interval [{lo}, {hi}]")));
            }
        }
        let s = BinaryOpSampler {
            name: name.into(),
            eval: Arc::new(eval),
            partials: None,
            u_range,
            v_range,
            grid_n: DEFAULT_GRID,
        };
        s.check_finite()?;
        Ok(s)
    }

    /// Supplies `S_1 = dS/du` and `S_2 = dS/dv` in closed form.
    pub fn with_partials<F1, F2>(mut self, s1: F1, s2: F2) -> Self
    where
        F1: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        F2: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.partials = Some((Arc::new(s1), Arc::new(s2)));
        self
    }

    pub fn with_grid(mut self, grid_n: usize) -> Result<Self> {
        if grid_n < MIN_GRID {
            return Err(Error::InvalidSampler(format!(
                "grid_n = {grid_n} below minimum {MIN_GRID}"
            )));
        }
        self.grid_n = grid_n;
        self.check_finite()?;
        Ok(self)
    }

    pub fn with_domain(mut self, u_range: (f64, f64), v_range: (f64, f64)) -> Result<Self> {
        let rebuilt = BinaryOpSampler::new(self.name.clone(), |_, _| 0.0, u_range, v_range)?;
        self.u_range = rebuilt.u_range;
        self.v_range = rebuilt.v_range;
        self.check_finite()?;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        (self.eval)(u, v)
    }

    pub fn u_range(&self) -> (f64, f64) {
        self.u_range
    }

    pub fn v_range(&self) -> (f64, f64) {
        self.v_range
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    /// `(S_1, S_2)` at `(u, v)`: analytic when supplied, otherwise central
    /// differences with step [`FD_STEP_REL`] times the domain width.
    pub fn partials_at(&self, u: f64, v: f64) -> (f64, f64) {
        match &self.partials {
            Some((s1, s2)) => (s1(u, v), s2(u, v)),
            None => {
                let du = FD_STEP_REL * (self.u_range.1 - self.u_range.0);
                let dv = FD_STEP_REL * (self.v_range.1 - self.v_range.0);
                let s1 = (self.eval(u + du, v) - self.eval(u - du, v)) / (2.0 * du);
                let s2 = (self.eval(u, v + dv) - self.eval(u, v - dv)) / (2.0 * dv);
                (s1, s2)
            }
        }
    }

    fn check_finite(&self) -> Result<()> {
        let us = grid(self.u_range, self.grid_n);
        let vs = grid(self.v_range, self.grid_n);
        for &u in &us {
            for &v in &vs {
                if !self.eval(u, v).is_finite() {
                    return Err(Error::InvalidSampler(format!(
                        "{} is not finite at ({u}, {v})",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn grid((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / m).collect()
}

fn in_range(x: f64, (lo, hi): (f64, f64)) -> bool {
    let slack = 1e-12 * (hi - lo);
    x.is_finite() && x >= lo - slack && x <= hi + slack
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AssocReport {
    pub max_residual: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// `max |S(S(u,v),w) - S(u,S(v,w))|` over a [`CHECK_GRID`]^3 triple grid.
/// Triples whose intermediate values leave the declared domain are skipped.
pub fn associativity_residual(s: &BinaryOpSampler) -> Result<AssocReport> {
    let mid = (s.u_range.0.max(s.v_range.0), s.u_range.1.min(s.v_range.1));
    if mid.0 > mid.1 {
        return Err(Error::OutOfDomain(format!(
            "u and v domains of {} do not overlap",
            s.name
        )));
    }
    let us = grid(s.u_range, CHECK_GRID);
    let vs = if mid.0 < mid.1 {
        grid(mid, CHECK_GRID)
    } else {
        vec![mid.0]
    };
    let ws = grid(s.v_range, CHECK_GRID);
    let mut report = AssocReport {
        max_residual: 0.0,
        evaluated: 0,
        skipped: 0,
    };
    for &u in &us {
        for &v in &vs {
            let r = s.eval(u, v);
            for &w in &ws {
                let t = s.eval(v, w);
                if !in_range(r, s.u_range) || !in_range(t, s.v_range) {
                    report.skipped += 1;
                    continue;
                }
                let lhs = s.eval(r, w);
                let rhs = s.eval(u, t);
                if !(lhs.is_finite() && rhs.is_finite()) {
                    report.skipped += 1;
                    continue;
                }
                report.evaluated += 1;
                report.max_residual = report.max_residual.max((lhs - rhs).abs());
            }
        }
    }
    if report.evaluated == 0 {
        return Err(Error::OutOfDomain(format!(
            "every associativity triple of {} leaves the domain",
            s.name
        )));
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
    /// Fitted constant absorbed into `xi`.
    pub offset: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Tabulated regrade and the intermediate functions it was built from.
#[derive(Clone, Debug, Serialize)]
pub struct RegradeResult {
    pub nodes: Vec<f64>,
    pub xi: Vec<f64>,
    /// `xi'(u) = 1 / H(u)`.
    pub xi_prime: Vec<f64>,
    /// `h(v) = d/dv ln G(u0, v)`, by central differences.
    pub h: Vec<f64>,
    /// `H(u) = exp(-int_{u0}^{u} h)`, normalized to `H(u0) = 1`.
    pub h_factor: Vec<f64>,
    /// The constant in `xi(S(u,v)) = xi(u) + c xi(v)`, fixed to one for
    /// associative operations.
    pub c_constant: f64,
    /// `G(u0, u0)`, which equals `c` when `G = c H(u) / H(v)` holds.
    pub c_measured: f64,
    pub assoc_residual: f64,
    pub residual_stats: Option<ResidualStats>,
}

impl RegradeResult {
    pub fn range(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().expect("non-empty grid"))
    }

    /// Cubic Hermite interpolation of `xi` using the tabulated derivative.
    /// Exact at the nodes. `None` outside the tabulated range.
    pub fn xi_at(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.range();
        if !in_range(x, (lo, hi)) {
            return None;
        }
        let x = x.clamp(lo, hi);
        let m = self.nodes.len() - 1;
        let dx = (hi - lo) / m as f64;
        let i = (((x - lo) / dx).floor() as usize).min(m - 1);
        let t = (x - self.nodes[i]) / dx;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        Some(
            h00 * self.xi[i]
                + h10 * dx * self.xi_prime[i]
                + h01 * self.xi[i + 1]
                + h11 * dx * self.xi_prime[i + 1],
        )
    }

    /// Node indices inside the central `fraction` of the tabulated range.
    pub fn interior_indices(&self, fraction: f64) -> Vec<usize> {
        let (lo, hi) = self.range();
        let margin = 0.5 * (1.0 - fraction) * (hi - lo);
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i] >= lo + margin && self.nodes[i] <= hi - margin)
            .collect()
    }
}

/// Cumulative composite Simpson integral of equally spaced samples, starting
/// at zero. Odd nodes are filled from the preceding even node with a
/// four-point rule, so every entry is exact for cubics.
pub fn cumulative_simpson(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 4 {
        match n {
            2 => out[1] = 0.5 * dx * (f[0] + f[1]),
            3 => {
                out[1] = dx * ((5.0 * f[0] + 8.0 * f[1] - f[2]) / 12.0);
                out[2] = (2.0 * dx) * ((f[0] + 4.0 * f[1] + f[2]) / 6.0);
            }
            _ => {}
        }
        return out;
    }
    let mut j = 0;
    while j + 2 < n {
        out[j + 2] = out[j] + (2.0 * dx) * ((f[j] + 4.0 * f[j + 1] + f[j + 2]) / 6.0);
        out[j + 1] = out[j] + dx * half_step(f, j);
        j += 2;
    }
    if j + 1 < n {
        out[j + 1] = out[j] + dx * half_step(f, j);
    }
    out
}

/// Integral over `[x_j, x_{j+1}]` in units of `dx`, from four neighbouring
/// samples.
fn half_step(f: &[f64], j: usize) -> f64 {
    if j + 3 < f.len() {
        (9.0 * f[j] + 19.0 * f[j + 1] - 5.0 * f[j + 2] + f[j + 3]) / 24.0
    } else {
        (f[j - 2] - 5.0 * f[j - 1] + 19.0 * f[j] + 9.0 * f[j + 1]) / 24.0
    }
}

/// Recovers `xi` with `xi(S(u, v)) = xi(u) + xi(v) + const` on the u-domain.
pub fn recover_regrade(s: &BinaryOpSampler) -> Result<RegradeResult> {
    let assoc = associativity_residual(s)?;
    if assoc.max_residual > ASSOC_GATE {
        return Err(Error::NonAssociative(assoc.max_residual));
    }
    let (lo, hi) = s.u_range;
    if s.v_range.0 > lo || s.v_range.1 < hi {
        return Err(Error::OutOfDomain(format!(
            "v domain of {} must cover the u domain for tabulation",
            s.name
        )));
    }
    let n = s.grid_n;
    let nodes = grid(s.u_range, n);
    let dx = (hi - lo) / (n - 1) as f64;
    let delta = FD_STEP_REL * (hi - lo);

    let g_at = |v: f64| -> Result<f64> {
        let (s1, s2) = s.partials_at(lo, v);
        if !(s1.is_finite() && s2.is_finite())
            || s1.abs() <= 1e-12 * (s1.abs() + s2.abs())
            || s1 == 0.0
        {
            return Err(Error::VanishingPartial { u: lo, v });
        }
        Ok(s2 / s1)
    };

    let g: Vec<f64> = nodes.iter().map(|&v| g_at(v)).collect::<Result<_>>()?;
    let g0 = g[0];
    if g.iter()
        .map(|&gj| gj / g0)
        .any(|r| !(r.is_finite() && r > 0.0))
    {
        return Err(Error::NonMonotone);
    }
    let h = nodes
        .iter()
        .map(|&v| {
            let up = g_at(v + delta)?;
            let down = g_at(v - delta)?;
            Ok(((up / down).abs().ln()) / (2.0 * delta))
        })
        .collect::<Result<Vec<f64>>>()?;
    // exp(-int_{u0}^{u} h) = G(u0, u0) / G(u0, u)
    let h_factor: Vec<f64> = g.iter().map(|&gj| g0 / gj).collect();
    let xi_prime: Vec<f64> = g.iter().map(|&gj| gj / g0).collect();
    let xi = cumulative_simpson(&xi_prime, dx);
    if xi.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotone);
    }

    let mut result = RegradeResult {
        nodes,
        xi,
        xi_prime,
        h,
        h_factor,
        c_constant: 1.0,
        c_measured: g0,
        assoc_residual: assoc.max_residual,
        residual_stats: None,
    };
    result.residual_stats = additivity_residual(&result, s).ok();
    Ok(result)
}

/// `max |xi(S(u,v)) - xi(u) - xi(v) - k|` over node pairs, with the constant
/// `k` chosen to minimize the maximum. Pairs whose `S(u,v)` falls outside the
/// tabulation are skipped.
pub fn additivity_residual(result: &RegradeResult, s: &BinaryOpSampler) -> Result<ResidualStats> {
    let m = result.nodes.len() - 1;
    let stride = (m / 32).max(1);
    let picks: Vec<usize> = (0..=m).step_by(stride).collect();
    let mut residuals = Vec::new();
    let mut skipped = 0;
    for &i in &picks {
        for &j in &picks {
            let (u, v) = (result.nodes[i], result.nodes[j]);
            if !in_range(v, s.v_range) {
                skipped += 1;
                continue;
            }
            match result.xi_at(s.eval(u, v)) {
                Some(x) => residuals.push(x - result.xi[i] - result.xi[j]),
                None => skipped += 1,
            }
        }
    }
    if residuals.is_empty() {
        return Err(Error::OutOfDomain(format!(
            "no S(u, v) of {} falls inside the tabulated range",
            s.name
        )));
    }
    let hi = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    let offset = 0.5 * (hi + lo);
    let dev: Vec<f64> = residuals.iter().map(|r| (r - offset).abs()).collect();
    Ok(ResidualStats {
        max: dev.iter().copied().fold(0.0, f64::max),
        mean: dev.iter().sum::<f64>() / dev.len() as f64,
        offset,
        evaluated: dev.len(),
        skipped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AffineFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_dev: f64,
}

/// Least-squares `y ~ slope * x + intercept`.
pub fn affine_fit(xs: &[f64], ys: &[f64]) -> AffineFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let max_dev = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    AffineFit {
        slope,
        intercept,
        max_dev,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProductRuleReport {
    /// `max |P(u, v + w) - P(u, v) - P(u, w)|`
    pub left_dist: f64,
    /// `max |P(u + v, w) - P(u, w) - P(v, w)|`
    pub right_dist: f64,
    pub assoc: f64,
    /// Least-squares `C` in `P ~ C u v`.
    pub c_fit: f64,
    /// `max |P(u, v) - C u v|` on the grid.
    pub fit_residual: f64,
    pub passes: bool,
}

/// Checks a product-rule candidate against both distributivity constraints
/// and associativity. Only `C u v` passes all three.
pub fn product_rule_residual(p: &BinaryOpSampler) -> Result<ProductRuleReport> {
    let us = grid(p.u_range, CHECK_GRID);
    let vs = grid(p.v_range, CHECK_GRID);

    let mut left: f64 = 0.0;
    let mut left_n = 0;
    for &u in &us {
        for &v in &vs {
            for &w in &vs {
                if !in_range(v + w, p.v_range) {
                    continue;
                }
                left = left.max((p.eval(u, v + w) - p.eval(u, v) - p.eval(u, w)).abs());
                left_n += 1;
            }
        }
    }

    let mut right: f64 = 0.0;
    let mut right_n = 0;
    for &u in &us {
        for &v in &us {
            if !in_range(u + v, p.u_range) {
                continue;
            }
            for &w in &vs {
                right = right.max((p.eval(u + v, w) - p.eval(u, w) - p.eval(v, w)).abs());
                right_n += 1;
            }
        }
    }
    if left_n == 0 || right_n == 0 {
        return Err(Error::OutOfDomain(format!(
            "domain of {} is not closed under any needed sums",
            p.name
        )));
    }

    let assoc = associativity_residual(p)?.max_residual;

    let (mut num, mut den) = (0.0, 0.0);
    for &u in &us {
        for &v in &vs {
            num += p.eval(u, v) * u * v;
            den += (u * v) * (u * v);
        }
    }
    let c_fit = if den > 0.0 { num / den } else { 0.0 };
    let fit_residual = us
        .iter()
        .flat_map(|&u| vs.iter().map(move |&v| (u, v)))
        .map(|(u, v)| (p.eval(u, v) - c_fit * u * v).abs())
        .fold(0.0, f64::max);
    let passes = left <= PRODUCT_RULE_TOL && right <= PRODUCT_RULE_TOL && assoc <= PRODUCT_RULE_TOL;
    Ok(ProductRuleReport {
        left_dist: left,
        right_dist: right,
        assoc,
        c_fit,
        fit_residual,
        passes,
    })
}

/// Strictly increasing `eta(u) = a u + b u^3 + c (1 - e^{-d u}) + e ln(1 + u)`
/// on `u >= 0`, used to manufacture associative operations
/// `S(u, v) = eta^{-1}(eta(u) + eta(v))` with a known regrade.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonotoneGenerator {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl MonotoneGenerator {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        MonotoneGenerator {
            a: rng.gen_range(0.5..2.0),
            b: rng.gen_range(0.0..1.0),
            c: rng.gen_range(0.0..2.0),
            d: rng.gen_range(0.5..3.0),
            e: rng.gen_range(0.0..1.0),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.a * u + self.b * u * u * u + self.c * (-(-self.d * u).exp_m1()) + self.e * u.ln_1p()
    }

    pub fn deriv(&self, u: f64) -> f64 {
        self.a + 3.0 * self.b * u * u + self.c * self.d * (-self.d * u).exp() + self.e / (1.0 + u)
    }

    /// Safeguarded Newton solve of `eta(u) = y` for `y >= 0`.
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while self.eval(hi) < y {
            lo = hi;
            hi *= 2.0;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fx = self.eval(x) - y;
            if fx == 0.0 {
                return x;
            }
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - fx / self.deriv(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs()
                || hi - lo <= 2.0 * f64::EPSILON * hi
            {
                return next;
            }
            x = next;
        }
        x
    }

    pub fn sampler(&self, range: (f64, f64)) -> Result<BinaryOpSampler> {
        let g = *self;
        BinaryOpSampler::new(
            "eta-generated",
            move |u, v| g.inverse(g.eval(u) + g.eval(v)),
            range,
            range,
        )
    }
}

pub const CATALOG: [&str; 5] = ["add", "cubic-mean", "uv-shift", "product", "broken-assoc"];

/// Named operations with their default domains.
///
/// * `add`: `u + v` on `[0, 1]`
/// * `cubic-mean`: `(u^q + v^q)^(1/q)` on `[0.5, 1.5]`, `q = coefs[0]` (3)
/// * `uv-shift`: `u + v + a u v` on `[0.1, 1]`, `a = coefs[0]` (1)
/// * `product`: `C u v + k` on `[0.5, 1.5]`, `C = coefs[0]` (1), `k = coefs[1]` (0)
/// * `broken-assoc`: `u + a v^2` on `[0, 2]`, `a = coefs[0]` (1)
pub fn catalog(name: &str, coefs: &[f64]) -> Result<BinaryOpSampler> {
    let coef = |i: usize, default: f64| coefs.get(i).copied().unwrap_or(default);
    let sampler = match name {
        "add" => BinaryOpSampler::new("add", |u, v| u + v, (0.0, 1.0), (0.0, 1.0))?
            .with_partials(|_, _| 1.0, |_, _| 1.0),
        "cubic-mean" => {
            let q = coef(0, 3.0);
            if q == 0.0 {
                return Err(Error::InvalidSampler(
                    "cubic-mean exponent must be non-zero".into(),
                ));
            }
            let s = move |u: f64, v: f64| (u.powf(q) + v.powf(q)).powf(1.0 / q);
            BinaryOpSampler::new("cubic-mean", s, (0.5, 1.5), (0.5, 1.5))?.with_partials(
                move |u, v| (u / s(u, v)).powf(q - 1.0),
                move |u, v| (v / s(u, v)).powf(q - 1.0),
            )
        }
        "uv-shift" => {
            let a = coef(0, 1.0);
            BinaryOpSampler::new(
                "uv-shift",
                move |u, v| u + v + a * u * v,
                (0.1, 1.0),
                (0.1, 1.0),
            )?
            .with_partials(move |_, v| 1.0 + a * v, move |u, _| 1.0 + a * u)
        }
        "product" => {
            let (c, k) = (coef(0, 1.0), coef(1, 0.0));
            BinaryOpSampler::new("product", move |u, v| c * u * v + k, (0.5, 1.5), (0.5, 1.5))?
                .with_partials(move |_, v| c * v, move |u, _| c * u)
        }
        "broken-assoc" => {
            let a = coef(0, 1.0);
            BinaryOpSampler::new(
                "broken-assoc",
                move |u, v| u + a * v * v,
                (0.0, 2.0),
                (0.0, 2.0),
            )?
            .with_partials(|_, _| 1.0, move |_, v| 2.0 * a * v)
        }
        other => {
            return Err(Error::InvalidSampler(format!(
                "unknown operation '{other}' (known: {})",
                CATALOG.join(", ")
            )))
        }
    };
    Ok(sampler)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn addition_is_exactly_associative() {
        let s = catalog("add", &[]).unwrap();
        let r = associativity_residual(&s).unwrap();
        assert_eq!(r.max_residual, 0.0);
        assert!(r.evaluated > 0 && r.skipped > 0);
    }

    #[test]
    fn cubic_mean_is_associative() {
        let s = catalog("cubic-mean", &[]).unwrap();
        assert!(associativity_residual(&s).unwrap().max_residual <= 1e-12);
    }

    #[test]
    fn broken_assoc_counterexample() {
        let s = catalog("broken-assoc", &[]).unwrap();
        // S(S(0,1),1) = 2 but S(0,S(1,1)) = 4
        assert_eq!(s.eval(s.eval(0.0, 1.0), 1.0), 2.0);
        assert_eq!(s.eval(0.0, s.eval(1.0, 1.0)), 4.0);
        assert!(associativity_residual(&s).unwrap().max_residual > 0.1);
        assert!(matches!(recover_regrade(&s), Err(Error::NonAssociative(_))));
    }

    #[test]
    fn add_regrade_is_identity() {
        let s = catalog("add", &[]).unwrap();
        let r = recover_regrade(&s).unwrap();
        for (x, xi) in r.nodes.iter().zip(&r.xi) {
            assert_eq!(*xi, x - r.nodes[0]);
        }
        let stats = r.residual_stats.unwrap();
        assert_eq!(stats.max, 0.0);
        assert_eq!(r.c_measured, 1.0);
        assert!(r.h.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn cubic_regrade_matches_cube() {
        let s = catalog("cubic-mean", &[]).unwrap();
        let r = recover_regrade(&s).unwrap();
        let cubes: Vec<f64> = r.nodes.iter().map(|u| u * u * u).collect();
        let fit = affine_fit(&cubes, &r.xi);
        assert!(fit.max_dev <= 1e-6, "{fit:?}");
        // xi' (u0) = 1 normalization: xi = (u^3 - u0^3) / (3 u0^2)
        assert!((fit.slope - 1.0 / 0.75).abs() <= 1e-9);
        assert!(r.residual_stats.unwrap().max <= 1e-6);
        assert!((r.c_measured - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn uv_shift_regrade_is_log() {
        let s = catalog("uv-shift", &[]).unwrap();
        let r = recover_regrade(&s).unwrap();
        let logs: Vec<f64> = r.nodes.iter().map(|u| u.ln_1p()).collect();
        assert!(affine_fit(&logs, &r.xi).max_dev <= 1e-6);
        assert!(r.residual_stats.unwrap().max <= 1e-6);
    }

    #[test]
    fn finite_difference_path_matches_analytic() {
        let analytic = catalog("uv-shift", &[0.5]).unwrap();
        let numeric =
            BinaryOpSampler::new("uv", |u, v| u + v + 0.5 * u * v, (0.1, 1.0), (0.1, 1.0)).unwrap();
        let a = recover_regrade(&analytic).unwrap();
        let b = recover_regrade(&numeric).unwrap();
        let worst =
            a.xi.iter()
                .zip(&b.xi)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "{worst}");
    }

    #[test]
    fn generated_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let eta = MonotoneGenerator::random(&mut rng);
            let y = eta.eval(0.7);
            assert!((eta.inverse(y) - 0.7).abs() <= 1e-15);
            let s = eta.sampler((0.1, 1.0)).unwrap();
            assert!(associativity_residual(&s).unwrap().max_residual <= 1e-10);
            let r = recover_regrade(&s).unwrap();
            let idx = r.interior_indices(0.8);
            let xs: Vec<f64> = idx.iter().map(|&i| eta.eval(r.nodes[i])).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| r.xi[i]).collect();
            assert!(affine_fit(&xs, &ys).max_dev <= 1e-5);
        }
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let n = 21;
        let dx = 0.05;
        let f: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 * dx;
                x * x * x - x
            })
            .collect();
        let integ = cumulative_simpson(&f, dx);
        for (i, v) in integ.iter().enumerate() {
            let x = i as f64 * dx;
            let exact = x.powi(4) / 4.0 - x * x / 2.0;
            assert!((v - exact).abs() <= 1e-13, "{i}: {v} vs {exact}");
        }
        // even number of points takes the trailing half-interval rule
        let integ = cumulative_simpson(&f[..20], dx);
        let x = 19.0 * dx;
        assert!((integ[19] - (x.powi(4) / 4.0 - x * x / 2.0)).abs() <= 1e-13);
    }

    #[test]
    fn hermite_interpolation_exact_at_nodes() {
        let s = catalog("cubic-mean", &[]).unwrap();
        let r = recover_regrade(&s).unwrap();
        for i in [0, 1, 100, 256] {
            assert_eq!(r.xi_at(r.nodes[i]), Some(r.xi[i]));
        }
        assert_eq!(r.xi_at(1.6), None);
        // between nodes, against the analytic regrade
        let x = 1.0 + 1.0 / 3000.0;
        let exact = (x * x * x - 0.125) / 0.75;
        assert!((r.xi_at(x).unwrap() - exact).abs() <= 1e-9);
    }

    #[test]
    fn product_rule_candidates() {
        let uv = product_rule_residual(&catalog("product", &[]).unwrap()).unwrap();
        assert_eq!((uv.left_dist, uv.right_dist, uv.assoc), (0.0, 0.0, 0.0));
        assert_eq!(uv.c_fit, 1.0);
        assert!(uv.passes);

        let two = product_rule_residual(&catalog("product", &[2.0]).unwrap()).unwrap();
        assert!(two.passes);
        assert_eq!(two.c_fit, 2.0);
        assert!(two.fit_residual <= 1e-8);

        let add = BinaryOpSampler::new("u+v", |u, v| u + v, (0.0, 1.0), (0.0, 1.0)).unwrap();
        let rep = product_rule_residual(&add).unwrap();
        // u + (v + w) vs (u + v) + (u + w) at u = v = w = 1/2
        assert!(rep.left_dist >= 0.5);
        assert!(!rep.passes);
    }

    #[test]
    fn sampler_validation() {
        assert!(BinaryOpSampler::new("bad", |u, v| u + v, (1.0, 0.0), (0.0, 1.0)).is_err());
        assert!(BinaryOpSampler::new("nan", |u, _| u.ln(), (0.0, 1.0), (0.0, 1.0)).is_err());
        let s = catalog("add", &[]).unwrap();
        assert!(s.clone().with_grid(8).is_err());
        assert!(s.with_grid(64).is_ok());
        assert!(catalog("nope", &[]).is_err());
    }
}
