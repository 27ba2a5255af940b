//! Concentration of the N-replica product state under fraction-window
//! projectors.
//!
//! For `N` independent copies of a normalized state with `p = |A_k|^2`, the
//! projector that passes only configurations in which the fraction of copies
//! found at site `k` lies in `[f - eps, f + eps]` has expectation
//!
//! ```text
//! (Psi_N, P Psi_N) = sum_{n = n_min}^{n_max} C(N, n) p^n (1 - p)^(N - n)
//! ```
//!
//! which tends to one when `|f - p| < eps` and to zero when `|f - p| > eps`.
//! The binomial terms are evaluated in log space with the saddle-point
//! (Loader) decomposition, which stays accurate to a few ulps for any `N`.

use libm::{erf, erfc};
use num_complex::Complex64;
use serde::Serialize;

use crate::composite::product_state;
use crate::error::{Error, Result};
use crate::lattice::WaveFunction;

/// Largest replica count accepted by [`small_n_direct`].
pub const MAX_DIRECT_REPLICAS: usize = 12;
/// Largest configuration space enumerated by [`small_n_direct`].
pub const MAX_DIRECT_CONFIGS: f64 = 1e7;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BornExperiment {
    pub p: f64,
    pub n_replicas: u64,
    pub f: f64,
    pub epsilon: f64,
}

impl BornExperiment {
    /// `epsilon = 0` describes the strict filter that passes a single count.
    pub fn new(p: f64, n_replicas: u64, f: f64, epsilon: f64) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidExperiment(msg));
        if !(0.0..=1.0).contains(&p) {
            return bad(format!("p = {p} outside [0, 1]"));
        }
        if n_replicas == 0 {
            return bad("N must be positive".into());
        }
        if !(0.0..=1.0).contains(&f) {
            return bad(format!("f = {f} outside [0, 1]"));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return bad(format!("epsilon = {epsilon} must be >= 0"));
        }
        Ok(BornExperiment {
            p,
            n_replicas,
            f,
            epsilon,
        })
    }

    /// Takes `p = |A_k|^2` from a normalized wave function.
    pub fn from_wave_function(
        psi: &WaveFunction,
        k_site: usize,
        n_replicas: u64,
        f: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let p = detection_probability(psi, k_site)?;
        BornExperiment::new(p, n_replicas, f, epsilon)
    }

    pub fn window(&self) -> Option<ProjectorWindow> {
        ProjectorWindow::from_fraction(self.f, self.epsilon, self.n_replicas)
    }
}

/// `|A_k|^2` for a normalized state.
pub fn detection_probability(psi: &WaveFunction, k_site: usize) -> Result<f64> {
    if k_site >= psi.len() {
        return Err(Error::LatticeMismatch(format!(
            "site {k_site} outside 0..{}",
            psi.len()
        )));
    }
    if !psi.is_normalized() {
        return Err(Error::NotNormalized(
            (crate::lattice::norm_sq(psi) - 1.0).abs(),
        ));
    }
    Ok(psi.coeffs()[k_site].norm_sqr().min(1.0))
}

/// Inclusive range of replica counts `n` passed by a projector filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ProjectorWindow {
    pub n_min: u64,
    pub n_max: u64,
}

impl ProjectorWindow {
    pub fn new(n_min: u64, n_max: u64, n_replicas: u64) -> Result<Self> {
        if n_min > n_max || n_max > n_replicas {
            return Err(Error::InvalidExperiment(format!(
                "window [{n_min}, {n_max}] not inside [0, {n_replicas}]"
            )));
        }
        Ok(ProjectorWindow { n_min, n_max })
    }

    /// Strict filter passing exactly `n` copies.
    pub fn single(n: u64) -> Self {
        ProjectorWindow { n_min: n, n_max: n }
    }

    pub fn full(n_replicas: u64) -> Self {
        ProjectorWindow {
            n_min: 0,
            n_max: n_replicas,
        }
    }

    /// `n_min = ceil((f - eps) N)`, `n_max = floor((f + eps) N)`, clipped to
    /// `[0, N]`. Returns `None` when no integer count falls in the window.
    pub fn from_fraction(f: f64, epsilon: f64, n_replicas: u64) -> Option<Self> {
        let n = n_replicas as f64;
        let lo = snapped_ceil((f - epsilon) * n).max(0.0);
        let hi = snapped_floor((f + epsilon) * n).min(n);
        if lo > hi {
            return None;
        }
        Some(ProjectorWindow {
            n_min: lo as u64,
            n_max: hi as u64,
        })
    }

    pub fn contains(&self, n: u64) -> bool {
        (self.n_min..=self.n_max).contains(&n)
    }
}

// (f -/+ eps) N is usually meant to be an integer when it is within rounding
// of one, e.g. 0.34 * 100.
fn snap(x: f64) -> Option<f64> {
    let r = x.round();
    ((x - r).abs() <= 1e-9 * x.abs().max(1.0)).then_some(r)
}

fn snapped_ceil(x: f64) -> f64 {
    snap(x).unwrap_or_else(|| x.ceil())
}

fn snapped_floor(x: f64) -> f64 {
    snap(x).unwrap_or_else(|| x.floor())
}

/// `ln(n!) - [(n + 1/2) ln n - n + ln sqrt(2 pi)]`, the Stirling remainder.
fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    debug_assert!(n >= 1);
    if n <= 15 {
        let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
        let x = n as f64;
        return ln_fact - (x + 0.5) * x.ln() + x - LN_SQRT_2PI;
    }
    let x = n as f64;
    let nn = x * x;
    if n > 500 {
        (S0 - S1 / nn) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / x
    }
}

/// Deviance term `x ln(x / np) + np - x`, evaluated without cancellation
/// when `x` is close to `np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `ln [ C(N, n) p^n (1 - p)^(N - n) ]`; `-inf` for impossible counts.
pub fn log_binomial_pmf(n: u64, total: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if n > total {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if n == total { 0.0 } else { f64::NEG_INFINITY };
    }
    let big_n = total as f64;
    if n == 0 {
        return big_n * (-p).ln_1p();
    }
    if n == total {
        return big_n * p.ln();
    }
    let x = n as f64;
    let lc = stirlerr(total)
        - stirlerr(n)
        - stirlerr(total - n)
        - bd0(x, big_n * p)
        - bd0(big_n - x, big_n * q);
    let lf = LN_2PI + x.ln() + (-x / big_n).ln_1p();
    lc - 0.5 * lf
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Binomial mass of `window` for `N` replicas at detection probability `p`.
pub fn overlap_window(p: f64, n_replicas: u64, window: ProjectorWindow) -> f64 {
    let mut acc = CompensatedSum::default();
    for n in window.n_min..=window.n_max.min(n_replicas) {
        let lp = log_binomial_pmf(n, n_replicas, p);
        if lp > -745.0 {
            acc.add(lp.exp());
        }
    }
    acc.value().clamp(0.0, 1.0)
}

/// `(Psi_N, P Psi_N)` for the experiment's fraction window.
pub fn overlap_exact(e: &BornExperiment) -> f64 {
    e.window()
        .map_or(0.0, |w| overlap_window(e.p, e.n_replicas, w))
}

/// `|P Psi_N - Psi_N|^2 = 1 - (Psi_N, P Psi_N)`, using `P^2 = P`.
pub fn deviation_norm(e: &BornExperiment) -> f64 {
    1.0 - overlap_exact(e)
}

/// Gaussian mass of `[f - eps, f + eps]` for mean `p` and variance
/// `p (1 - p) / N`.
pub fn overlap_gaussian(e: &BornExperiment) -> Result<f64> {
    if e.p <= 0.0 || e.p >= 1.0 {
        return Err(Error::DegenerateProbability(e.p));
    }
    let sigma = (e.p * (1.0 - e.p) / e.n_replicas as f64).sqrt();
    let scale = sigma * std::f64::consts::SQRT_2;
    let a = (e.f - e.epsilon - e.p) / scale;
    let b = (e.f + e.epsilon - e.p) / scale;
    // erfc keeps precision in whichever tail both ends sit in
    let mass = if a >= 0.0 {
        0.5 * (erfc(a) - erfc(b))
    } else if b <= 0.0 {
        0.5 * (erfc(-b) - erfc(-a))
    } else {
        0.5 * (erf(b) - erf(a))
    };
    Ok(mass.clamp(0.0, 1.0))
}

/// Hoeffding envelope `2 exp(-2 N (eps - |f - p|)^2)` on [`deviation_norm`],
/// valid when `|f - p| < eps`.
pub fn hoeffding_bound(e: &BornExperiment) -> Option<f64> {
    let margin = e.epsilon - (e.f - e.p).abs();
    (margin > 0.0).then(|| 2.0 * (-2.0 * e.n_replicas as f64 * margin * margin).exp())
}

/// Builds the N-fold product state explicitly and sums `|Psi_N(c)|^2` over
/// every configuration `c` whose count of copies at `k_site` lies in
/// `window`.
pub fn small_n_direct(
    psi: &WaveFunction,
    k_site: usize,
    window: ProjectorWindow,
    n_replicas: usize,
) -> Result<f64> {
    if n_replicas == 0 || n_replicas > MAX_DIRECT_REPLICAS {
        return Err(Error::SizeGuard {
            size: n_replicas as f64,
            limit: MAX_DIRECT_REPLICAS as f64,
        });
    }
    detection_probability(psi, k_site)?;
    let configs = (psi.len() as f64).powi(n_replicas as i32);
    if configs > MAX_DIRECT_CONFIGS {
        return Err(Error::SizeGuard {
            size: configs,
            limit: MAX_DIRECT_CONFIGS,
        });
    }
    let copies = vec![psi.clone(); n_replicas];
    let state = product_state(&copies)?;
    let l = psi.len();
    let mut acc = CompensatedSum::default();
    for (index, amp) in state.coeffs().iter().enumerate() {
        let mut rest = index;
        let mut count = 0u64;
        for _ in 0..n_replicas {
            if rest % l == k_site {
                count += 1;
            }
            rest /= l;
        }
        if window.contains(count) {
            // (Psi_N, P Psi_N) with P diagonal and 0/1
            let term: Complex64 = amp.conj() * amp;
            acc.add(term.re);
        }
    }
    Ok(acc.value())
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    #[serde(rename = "N")]
    pub n_replicas: u64,
    pub overlap_exact: f64,
    pub overlap_gauss: Option<f64>,
    pub deviation: f64,
}

/// One row per `N`, in the given (ascending) order.
pub fn convergence_scan(p: f64, f: f64, epsilon: f64, n_list: &[u64]) -> Result<Vec<ScanRow>> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidExperiment(
            "N list must be strictly ascending".into(),
        ));
    }
    n_list
        .iter()
        .map(|&n| {
            let e = BornExperiment::new(p, n, f, epsilon)?;
            let exact = overlap_exact(&e);
            Ok(ScanRow {
                n_replicas: n,
                overlap_exact: exact,
                overlap_gauss: overlap_gaussian(&e).ok(),
                deviation: 1.0 - exact,
            })
        })
        .collect()
}
