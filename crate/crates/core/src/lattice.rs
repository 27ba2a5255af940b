//! Discrete spacetime arena: lattice geometry, single-step kernels and wave
//! functions.
//!
//! A [`Kernel`] holds the one-step transition amplitudes `K[x'][x]` for moving
//! from site `x` to site `x'` in one time step. Every amplitude in the crate is
//! built out of these entries.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerance for calling a kernel unitary.
pub const UNITARY_TOL: f64 = 1e-12;
/// Tolerance for calling a wave function normalized.
pub const NORM_TOL: f64 = 1e-12;

/// Relative size of the last Taylor term kept in [`expm`].
const EXPM_TERM_TOL: f64 = 1e-16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Ring,
    Open,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub num_sites: usize,
    pub num_steps: usize,
    pub dt: f64,
    pub hbar: f64,
    pub boundary: Boundary,
}

impl LatticeConfig {
    /// Ring lattice with `dt = hbar = 1`.
    pub fn ring(num_sites: usize, num_steps: usize) -> Result<Self> {
        Self::new(num_sites, num_steps, 1.0, 1.0, Boundary::Ring)
    }

    pub fn open(num_sites: usize, num_steps: usize) -> Result<Self> {
        Self::new(num_sites, num_steps, 1.0, 1.0, Boundary::Open)
    }

    pub fn new(
        num_sites: usize,
        num_steps: usize,
        dt: f64,
        hbar: f64,
        boundary: Boundary,
    ) -> Result<Self> {
        let cfg = LatticeConfig {
            num_sites,
            num_steps,
            dt,
            hbar,
            boundary,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        self.hbar = hbar;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        // A ring needs three sites before its wrap-around bond is distinct
        // from the ordinary nearest-neighbour bonds.
        let min_sites = match self.boundary {
            Boundary::Ring => 3,
            Boundary::Open => 1,
        };
        if self.num_sites < min_sites {
            return Err(Error::InvalidConfig(format!(
                "{:?} lattice needs at least {min_sites} sites, got {}",
                self.boundary, self.num_sites
            )));
        }
        if self.num_steps < 1 {
            return Err(Error::InvalidConfig("num_steps must be >= 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "hbar must be > 0, got {}",
                self.hbar
            )));
        }
        Ok(())
    }

    pub fn contains(&self, event: Event) -> bool {
        event.site < self.num_sites && event.time <= self.num_steps
    }
}

/// A point `(site, time)` of the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub site: usize,
    pub time: usize,
}

impl Event {
    pub fn new(site: usize, time: usize) -> Self {
        Event { site, time }
    }
}

impl std::fmt::Display for Event {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.site, self.time)
    }
}

/// Single time-step transition matrix. `step[(to, from)]` is the elementary
/// amplitude for a hop `from -> to`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    step: Matrix,
    label: String,
}

impl Kernel {
    pub fn new(step: Matrix, label: impl Into<String>) -> Result<Self> {
        if step.nrows() != step.ncols() {
            return Err(Error::DimensionMismatch {
                expected: step.nrows(),
                found: step.ncols(),
            });
        }
        if step.nrows() == 0 {
            return Err(Error::InvalidConfig(
                "kernel must have at least one site".into(),
            ));
        }
        if !all_finite(step.iter()) {
            return Err(Error::NonFinite("kernel entries".into()));
        }
        Ok(Kernel {
            step,
            label: label.into(),
        })
    }

    /// Like [`Kernel::new`] but also requires `|K^H K - I|_max <= 1e-12`.
    pub fn unitary(step: Matrix, label: impl Into<String>) -> Result<Self> {
        let k = Kernel::new(step, label)?;
        let res = k.unitarity_residual();
        if res > UNITARY_TOL {
            return Err(Error::NotUnitary(res));
        }
        Ok(k)
    }

    pub fn num_sites(&self) -> usize {
        self.step.nrows()
    }

    pub fn step(&self) -> &Matrix {
        &self.step
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn entry(&self, to: usize, from: usize) -> Complex64 {
        self.step[(to, from)]
    }

    pub fn unitarity_residual(&self) -> f64 {
        let n = self.num_sites();
        let prod = self.step.adjoint() * &self.step;
        max_abs_diff(&prod, &Matrix::identity(n, n))
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_residual() <= UNITARY_TOL
    }

    /// `M * K` where `M` keeps only the listed sites after the step.
    pub fn masked(&self, holes: &[usize]) -> Result<Kernel> {
        let n = self.num_sites();
        let mut keep = vec![false; n];
        for &h in holes {
            if h >= n {
                return Err(Error::LatticeMismatch(format!("hole {h} outside 0..{n}")));
            }
            keep[h] = true;
        }
        let mut step = self.step.clone();
        for (row, kept) in keep.iter().enumerate() {
            if !kept {
                step.row_mut(row).fill(Complex64::new(0.0, 0.0));
            }
        }
        Kernel::new(step, format!("{}+mask", self.label))
    }

    pub fn apply(&self, v: &CVector) -> Result<CVector> {
        check_len(self.num_sites(), v.len())?;
        Ok(&self.step * v)
    }

    pub fn to_file(&self) -> KernelFile {
        let n = self.num_sites();
        let mut entries = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let z = self.step[(r, c)];
                entries.push([z.re, z.im]);
            }
        }
        KernelFile {
            num_sites: n,
            entries,
            label: self.label.clone(),
        }
    }

    pub fn from_file(file: KernelFile) -> Result<Kernel> {
        let n = file.num_sites;
        if file.entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: file.entries.len(),
            });
        }
        let step = Matrix::from_row_iterator(
            n,
            n,
            file.entries.iter().map(|&[re, im]| Complex64::new(re, im)),
        );
        Kernel::new(step, file.label)
    }

    pub fn from_json(text: &str) -> Result<Kernel> {
        Kernel::from_file(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }
}

/// On-disk kernel: row-major `L*L` list of `[re, im]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelFile {
    #[serde(rename = "L")]
    pub num_sites: usize,
    pub entries: Vec<[f64; 2]>,
    #[serde(default)]
    pub label: String,
}

/// Amplitudes `A_i` over the lattice sites at a fixed time.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    coeffs: CVector,
    time: usize,
}

impl WaveFunction {
    pub fn new(coeffs: CVector, time: usize) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidConfig(
                "wave function must have at least one site".into(),
            ));
        }
        if !all_finite(coeffs.iter()) {
            return Err(Error::NonFinite("wave function coefficients".into()));
        }
        Ok(WaveFunction { coeffs, time })
    }

    pub fn from_slice(coeffs: &[Complex64], time: usize) -> Result<Self> {
        WaveFunction::new(CVector::from_column_slice(coeffs), time)
    }

    pub fn from_real(coeffs: &[f64], time: usize) -> Result<Self> {
        let c: Vec<Complex64> = coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        WaveFunction::from_slice(&c, time)
    }

    /// Point state concentrated at `site`.
    pub fn point(num_sites: usize, site: usize, time: usize) -> Result<Self> {
        if site >= num_sites {
            return Err(Error::LatticeMismatch(format!(
                "site {site} outside 0..{num_sites}"
            )));
        }
        let mut v = CVector::zeros(num_sites);
        v[site] = Complex64::new(1.0, 0.0);
        WaveFunction::new(v, time)
    }

    /// Random state with independent standard complex Gaussian entries,
    /// normalized to one.
    pub fn random<R: Rng + ?Sized>(num_sites: usize, time: usize, rng: &mut R) -> Self {
        loop {
            let v = CVector::from_fn(num_sites, |_, _| {
                Complex64::new(gaussian(rng), gaussian(rng))
            });
            if let Ok(psi) = WaveFunction::new(v, time).and_then(|w| normalize(&w)) {
                return psi;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &CVector {
        &self.coeffs
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn is_normalized(&self) -> bool {
        (norm_sq(self) - 1.0).abs() <= NORM_TOL
    }

    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.coeffs.iter().map(|z| [z.re, z.im]).collect()
    }

    /// Parses a JSON list of `[re, im]` pairs.
    pub fn from_json(text: &str, time: usize) -> Result<Self> {
        let pairs: Vec<[f64; 2]> = serde_json::from_str(text)?;
        let c: Vec<Complex64> = pairs
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        WaveFunction::from_slice(&c, time)
    }

    pub(crate) fn with_coeffs(&self, coeffs: CVector, time: usize) -> Result<Self> {
        WaveFunction::new(coeffs, time)
    }
}

/// `(a, b) = sum_x conj(a(x)) b(x)`.
pub fn inner_product(a: &WaveFunction, b: &WaveFunction) -> Result<Complex64> {
    check_len(a.len(), b.len())?;
    Ok(a.coeffs
        .iter()
        .zip(b.coeffs.iter())
        .map(|(x, y)| x.conj() * y)
        .sum())
}

pub fn norm_sq(a: &WaveFunction) -> f64 {
    a.coeffs.iter().map(|z| z.norm_sqr()).sum()
}

pub fn normalize(a: &WaveFunction) -> Result<WaveFunction> {
    let n = norm_sq(a);
    if n <= 0.0 {
        return Err(Error::ZeroVector);
    }
    let scale = 1.0 / n.sqrt();
    a.with_coeffs(a.coeffs.map(|z| z * scale), a.time)
}

/// Hermitian nearest-neighbour hopping matrix: `onsite` on the diagonal,
/// `H[j+1][j] = hop`, `H[j][j+1] = conj(hop)`, wrapping on a ring.
pub fn tight_binding_hamiltonian(
    config: &LatticeConfig,
    hop: Complex64,
    onsite: &[f64],
) -> Result<Matrix> {
    config.validate()?;
    let n = config.num_sites;
    check_len(n, onsite.len())?;
    if !(hop.re.is_finite() && hop.im.is_finite()) || onsite.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("tight-binding parameters".into()));
    }
    let mut h = Matrix::zeros(n, n);
    for (j, &e) in onsite.iter().enumerate() {
        h[(j, j)] = Complex64::new(e, 0.0);
    }
    let bonds = match config.boundary {
        Boundary::Ring => n,
        Boundary::Open => n.saturating_sub(1),
    };
    for j in 0..bonds {
        let k = (j + 1) % n;
        h[(k, j)] += hop;
        h[(j, k)] += hop.conj();
    }
    Ok(h)
}

/// `K = exp(-i H dt / hbar)` for the tight-binding Hamiltonian of `config`.
pub fn make_tight_binding_kernel(
    config: &LatticeConfig,
    hop: Complex64,
    onsite: &[f64],
) -> Result<Kernel> {
    let h = tight_binding_hamiltonian(config, hop, onsite)?;
    let factor = Complex64::new(0.0, -config.dt / config.hbar);
    let step = expm(&(h * factor));
    Kernel::unitary(
        step,
        format!(
            "tight-binding L={} hop={} dt={}",
            config.num_sites, hop, config.dt
        ),
    )
}

/// Matrix exponential by scaling and squaring of the truncated Taylor series.
pub fn expm(a: &Matrix) -> Matrix {
    assert!(a.is_square(), "expm requires a square matrix");
    let n = a.nrows();
    let norm = norm_one(a);
    let mut squarings = 0u32;
    let mut scaled_norm = norm;
    while scaled_norm > 0.5 {
        scaled_norm *= 0.5;
        squarings += 1;
    }
    let b = a * Complex64::new(0.5f64.powi(squarings as i32), 0.0);

    let mut sum = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..=200 {
        term = (&term * &b) * Complex64::new(1.0 / k as f64, 0.0);
        sum += &term;
        if norm_one(&term) <= EXPM_TERM_TOL * norm_one(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `K^(t2 - t1)`: the multi-step propagator from time `t1` to `t2`.
pub fn propagator(kernel: &Kernel, t1: usize, t2: usize) -> Result<Matrix> {
    if t1 > t2 {
        return Err(Error::ReversedTime { t1, t2 });
    }
    let n = kernel.num_sites();
    let mut out = Matrix::identity(n, n);
    for _ in t1..t2 {
        out = kernel.step() * out;
    }
    Ok(out)
}

/// Hermitian matrix with Gaussian entries, scaled by `scale`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Matrix {
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = Complex64::new(scale * gaussian(rng), 0.0);
        for j in (i + 1)..n {
            let z = Complex64::new(gaussian(rng), gaussian(rng)) * (scale / 2f64.sqrt());
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

/// Random unitary kernel `exp(-i H)` for a random Hermitian `H`.
pub fn random_unitary_kernel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Kernel {
    let h = random_hermitian(n, 1.0, rng);
    let step = expm(&(h * Complex64::new(0.0, -1.0)));
    Kernel::new(step, format!("random-unitary L={n}")).expect("finite by construction")
}

/// Kernel with i.i.d. complex Gaussian entries of variance `1/n`; generally
/// not unitary.
pub fn random_complex_kernel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Kernel {
    let s = 1.0 / (2.0 * n as f64).sqrt();
    let step = Matrix::from_fn(n, n, |_, _| {
        Complex64::new(s * gaussian(rng), s * gaussian(rng))
    });
    Kernel::new(step, format!("random-complex L={n}")).expect("finite by construction")
}

/// Standard normal variate (Box-Muller).
pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub(crate) fn max_abs(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn norm_one(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn all_finite<'a>(mut it: impl Iterator<Item = &'a Complex64>) -> bool {
    it.all(|z| z.re.is_finite() && z.im.is_finite())
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
