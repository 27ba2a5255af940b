//! Amplitude assignment for setups.
//!
//! The production path is a transfer-matrix product: propagate from the
//! source one step at a time, projecting onto the holes whenever a filter is
//! met, and read off the detector component. The oracle is a literal sum over
//! every hole-threading path.

use std::fmt;
use std::ops::{Add, Mul};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{
    random_complex_kernel, random_unitary_kernel, CVector, Kernel, LatticeConfig,
};
use crate::setup::{decompose_at, fill_sigma, random_setup, Setup};

/// Upper bound on the number of paths [`amplitude_bruteforce`] will enumerate.
pub const MAX_PATHS: f64 = 1e7;

/// Magnitude below which two amplitudes are compared absolutely.
pub const NEAR_ZERO: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Amplitude {
    pub value: Complex64,
}

impl Amplitude {
    pub fn new(value: Complex64) -> Self {
        Amplitude { value }
    }

    pub fn zero() -> Self {
        Amplitude::new(Complex64::new(0.0, 0.0))
    }

    pub fn one() -> Self {
        Amplitude::new(Complex64::new(1.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.value.norm_sqr()
    }
}

impl Add for Amplitude {
    type Output = Amplitude;
    fn add(self, rhs: Amplitude) -> Amplitude {
        Amplitude::new(self.value + rhs.value)
    }
}

impl Mul for Amplitude {
    type Output = Amplitude;
    fn mul(self, rhs: Amplitude) -> Amplitude {
        Amplitude::new(self.value * rhs.value)
    }
}

impl fmt::Display for Amplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+.15e}{:+.15e}i", self.value.re, self.value.im)
    }
}

/// `|z1 - z2| / max(|z1|, |z2|)`, or the plain difference when both are
/// below [`NEAR_ZERO`].
pub fn relative_deviation(z1: Complex64, z2: Complex64) -> f64 {
    let diff = (z1 - z2).norm();
    let scale = z1.norm().max(z2.norm());
    if scale < NEAR_ZERO {
        diff
    } else {
        diff / scale.max(1e-300)
    }
}

/// Transfer-matrix amplitude of `setup` under `kernel`.
pub fn amplitude(setup: &Setup, kernel: &Kernel) -> Result<Amplitude> {
    let n = kernel.num_sites();
    setup.check_sites(n)?;
    let mut state = CVector::zeros(n);
    state[setup.source().site] = Complex64::new(1.0, 0.0);
    let mut filters = setup.filters().iter().peekable();
    for t in setup.source().time + 1..=setup.detector().time {
        state = kernel.step() * state;
        if let Some(f) = filters.next_if(|f| f.time() == t) {
            let holes = f.holes();
            for (site, z) in state.iter_mut().enumerate() {
                if !holes.contains(&site) {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
    Ok(Amplitude::new(state[setup.detector().site]))
}

/// Literal sum over all complete paths `x_i -> x_1 -> ... -> x_f` that pass
/// through a hole of every filter, each weighted by the product of its
/// single-step kernel entries.
pub fn amplitude_bruteforce(setup: &Setup, kernel: &Kernel) -> Result<Amplitude> {
    let n = kernel.num_sites();
    setup.check_sites(n)?;
    let layers: Vec<Vec<usize>> = (setup.source().time + 1..setup.detector().time)
        .map(|t| match setup.filter_at(t) {
            Some(f) => f.holes().iter().copied().collect(),
            None => (0..n).collect(),
        })
        .collect();
    let paths: f64 = layers.iter().map(|l| l.len() as f64).product();
    if paths > MAX_PATHS {
        return Err(Error::PathExplosion {
            paths,
            limit: MAX_PATHS,
        });
    }
    if layers.iter().any(|l| l.is_empty()) {
        return Ok(Amplitude::zero());
    }

    let detector = setup.detector().site;
    let mut total = Complex64::new(0.0, 0.0);
    let mut path = vec![0usize; layers.len()];
    let mut cursor = vec![0usize; layers.len()];
    // odometer over all site sequences
    loop {
        for (d, slot) in path.iter_mut().enumerate() {
            *slot = layers[d][cursor[d]];
        }
        let mut weight = Complex64::new(1.0, 0.0);
        let mut prev = setup.source().site;
        for &x in &path {
            weight *= kernel.entry(x, prev);
            prev = x;
        }
        weight *= kernel.entry(detector, prev);
        total += weight;

        let mut digit = 0;
        loop {
            if digit == cursor.len() {
                return Ok(Amplitude::new(total));
            }
            cursor[digit] += 1;
            if cursor[digit] < layers[digit].len() {
                break;
            }
            cursor[digit] = 0;
            digit += 1;
        }
    }
}

/// Ways of evaluating the same amplitude.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalStrategy {
    TransferMatrix,
    /// Product rule: split at each listed single-hole filter time and
    /// multiply the transfer-matrix amplitudes of the pieces.
    RecursiveDecompose(Vec<usize>),
    /// Transfer matrix after a sigma filter is placed at every free time.
    SigmaFilled,
    BruteForcePaths,
}

impl fmt::Display for EvalStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalStrategy::TransferMatrix => write!(f, "transfer"),
            EvalStrategy::RecursiveDecompose(times) => {
                let t: Vec<String> = times.iter().map(|t| t.to_string()).collect();
                write!(f, "decompose@{}", t.join("+"))
            }
            EvalStrategy::SigmaFilled => write!(f, "sigma"),
            EvalStrategy::BruteForcePaths => write!(f, "brute"),
        }
    }
}

pub fn evaluate(setup: &Setup, kernel: &Kernel, strategy: &EvalStrategy) -> Result<Amplitude> {
    match strategy {
        EvalStrategy::TransferMatrix => amplitude(setup, kernel),
        EvalStrategy::RecursiveDecompose(times) => {
            let mut times = times.clone();
            times.sort_unstable();
            times.dedup();
            if times.is_empty() {
                return Err(Error::InvalidStrategy("no split times given".into()));
            }
            // peel off the earliest piece at each split
            let mut rest = setup.clone();
            let mut product = Amplitude::one();
            for t in times {
                let (earlier, later) = decompose_at(&rest, t)
                    .map_err(|e| Error::InvalidStrategy(format!("split at t={t}: {e}")))?;
                product = product * amplitude(&earlier, kernel)?;
                rest = later;
            }
            Ok(product * amplitude(&rest, kernel)?)
        }
        EvalStrategy::SigmaFilled => amplitude(&fill_sigma(setup, kernel.num_sites())?, kernel),
        EvalStrategy::BruteForcePaths => amplitude_bruteforce(setup, kernel),
    }
}

/// All strategies applicable to `setup`: transfer matrix, a product-rule
/// split at each single-hole filter and at all of them together, sigma
/// filling, and path enumeration when it fits under [`MAX_PATHS`].
pub fn default_strategies(setup: &Setup, kernel: &Kernel) -> Vec<EvalStrategy> {
    let mut out = vec![EvalStrategy::TransferMatrix];
    let splits = setup.single_hole_times();
    for &t in &splits {
        out.push(EvalStrategy::RecursiveDecompose(vec![t]));
    }
    if splits.len() > 1 {
        out.push(EvalStrategy::RecursiveDecompose(splits));
    }
    out.push(EvalStrategy::SigmaFilled);
    let n = kernel.num_sites() as f64;
    let paths: f64 = (setup.source().time + 1..setup.detector().time)
        .map(|t| setup.filter_at(t).map_or(n, |f| f.holes().len() as f64))
        .product();
    if paths <= MAX_PATHS {
        out.push(EvalStrategy::BruteForcePaths);
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct PairDeviation {
    pub first: String,
    pub second: String,
    pub deviation: f64,
}

impl PairDeviation {
    pub fn label(&self) -> String {
        format!("{}|{}", self.first, self.second)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub values: Vec<(String, Amplitude)>,
    pub pairs: Vec<PairDeviation>,
    pub max_deviation: f64,
}

/// Evaluates `setup` under every strategy and reports pairwise relative
/// deviations.
pub fn consistency_check(
    setup: &Setup,
    kernel: &Kernel,
    strategies: &[EvalStrategy],
) -> Result<ConsistencyReport> {
    if strategies.len() < 2 {
        return Err(Error::InvalidStrategy(
            "consistency check needs at least two strategies".into(),
        ));
    }
    let values = strategies
        .iter()
        .map(|s| Ok((s.to_string(), evaluate(setup, kernel, s)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    let mut max_deviation: f64 = 0.0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let deviation = relative_deviation(values[i].1.value, values[j].1.value);
            max_deviation = max_deviation.max(deviation);
            pairs.push(PairDeviation {
                first: values[i].0.clone(),
                second: values[j].0.clone(),
                deviation,
            });
        }
    }
    Ok(ConsistencyReport {
        values,
        pairs,
        max_deviation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FuzzRow {
    pub seed: u64,
    pub strategy_pair: String,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FuzzReport {
    pub rows: Vec<FuzzRow>,
    pub max_deviation: f64,
    pub samples: usize,
}

/// Per-sample seeds derived from a master seed.
pub fn sample_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen()).collect()
}

/// Kernel for fuzz sample `seed`: unitary tight-binding-like or a generic
/// complex matrix, alternating on the low bit.
pub fn fuzz_kernel(num_sites: usize, seed: u64) -> Kernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    if seed & 1 == 0 {
        random_unitary_kernel(num_sites, &mut rng)
    } else {
        random_complex_kernel(num_sites, &mut rng)
    }
}

/// Runs [`consistency_check`] with [`default_strategies`] over `count`
/// random setups and kernels.
pub fn fuzz(seed: u64, count: usize, config: &LatticeConfig) -> Result<FuzzReport> {
    config.validate()?;
    let max_filters = config.num_steps - 1;
    let mut rows = Vec::new();
    let mut max_deviation: f64 = 0.0;
    for sample in sample_seeds(seed, count) {
        let setup = random_setup(config, sample, max_filters)?;
        let kernel = fuzz_kernel(config.num_sites, sample);
        let report = consistency_check(&setup, &kernel, &default_strategies(&setup, &kernel))?;
        max_deviation = max_deviation.max(report.max_deviation);
        rows.extend(report.pairs.into_iter().map(|p| FuzzRow {
            seed: sample,
            strategy_pair: p.label(),
            deviation: p.deviation,
        }));
    }
    Ok(FuzzReport {
        rows,
        max_deviation,
        samples: count,
    })
}
