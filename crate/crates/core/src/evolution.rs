//! Wave-function time evolution, the discrete Schrödinger generator, and the
//! linearity check of the evolution map.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{check_len, max_abs, max_abs_diff, Kernel, Matrix, WaveFunction};

/// Tolerance for calling a matrix Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    matrix: Matrix,
    hermitian_flag: bool,
}

impl Hamiltonian {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::NonFinite("hamiltonian".into()));
        }
        let hermitian_flag = max_abs_diff(&matrix, &matrix.adjoint()) <= HERMITIAN_TOL;
        Ok(Hamiltonian {
            matrix,
            hermitian_flag,
        })
    }

    pub fn zero(n: usize) -> Self {
        Hamiltonian {
            matrix: Matrix::zeros(n, n),
            hermitian_flag: true,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_flag
    }

    /// `max |H - H^H|`.
    pub fn hermiticity_residual(&self) -> f64 {
        max_abs_diff(&self.matrix, &self.matrix.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `Psi(t + steps) = K^steps Psi(t)`.
pub fn evolve(psi: &WaveFunction, kernel: &Kernel, steps: usize) -> Result<WaveFunction> {
    check_len(kernel.num_sites(), psi.len())?;
    let mut v = psi.coeffs().clone();
    for _ in 0..steps {
        v = kernel.step() * v;
    }
    WaveFunction::new(v, psi.time() + steps)
}

/// Every intermediate state `Psi(t), Psi(t+1), ..., Psi(t+steps)`.
pub fn trajectory(psi: &WaveFunction, kernel: &Kernel, steps: usize) -> Result<Vec<WaveFunction>> {
    check_len(kernel.num_sites(), psi.len())?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(psi.clone());
    for _ in 0..steps {
        let next = evolve(out.last().expect("non-empty"), kernel, 1)?;
        out.push(next);
    }
    Ok(out)
}

/// Forward-difference generator `H = i hbar (K - I) / dt`.
///
/// For `K = exp(-i H0 dt / hbar)` this differs from `H0` by `O(dt)`; the
/// anti-Hermitian part of the estimate, reported by
/// [`Hamiltonian::hermiticity_residual`], is of the same order.
pub fn generator_from_kernel(kernel: &Kernel, dt: f64, hbar: f64) -> Result<Hamiltonian> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
    }
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "hbar must be > 0, got {hbar}"
        )));
    }
    let n = kernel.num_sites();
    let diff = kernel.step() - Matrix::identity(n, n);
    Hamiltonian::new(diff * Complex64::new(0.0, hbar / dt))
}

/// `max | i hbar (evolve(Psi, K, 1) - Psi) / dt - H Psi |`.
pub fn schrodinger_residual(
    psi: &WaveFunction,
    hamiltonian: &Hamiltonian,
    kernel: &Kernel,
    dt: f64,
    hbar: f64,
) -> Result<f64> {
    check_len(kernel.num_sites(), psi.len())?;
    check_len(hamiltonian.dim(), psi.len())?;
    let next = evolve(psi, kernel, 1)?;
    let lhs = (next.coeffs() - psi.coeffs()) * Complex64::new(0.0, hbar / dt);
    let rhs = hamiltonian.matrix() * psi.coeffs();
    Ok(max_abs(&(lhs - rhs)))
}

/// `max | evolve(a Psi1 + b Psi2) - (a evolve(Psi1) + b evolve(Psi2)) |`
/// after `steps` steps.
pub fn linearity_check(
    kernel: &Kernel,
    psi1: &WaveFunction,
    psi2: &WaveFunction,
    alpha: Complex64,
    beta: Complex64,
    steps: usize,
) -> Result<f64> {
    check_len(psi1.len(), psi2.len())?;
    let combined = WaveFunction::new(psi1.coeffs() * alpha + psi2.coeffs() * beta, psi1.time())?;
    let lhs = evolve(&combined, kernel, steps)?;
    let e1 = evolve(psi1, kernel, steps)?;
    let e2 = evolve(psi2, kernel, steps)?;
    let rhs = e1.coeffs() * alpha + e2.coeffs() * beta;
    Ok(max_abs(&(lhs.coeffs() - rhs)))
}

#[derive(Clone, Debug, Serialize)]
pub struct EvolutionRow {
    pub step: usize,
    pub site: usize,
    pub re: f64,
    pub im: f64,
    pub prob: f64,
}

/// Flattened time series of [`trajectory`], one row per (step, site).
pub fn evolution_table(
    psi: &WaveFunction,
    kernel: &Kernel,
    steps: usize,
) -> Result<Vec<EvolutionRow>> {
    let traj = trajectory(psi, kernel, steps)?;
    Ok(traj
        .iter()
        .enumerate()
        .flat_map(|(step, w)| {
            w.coeffs()
                .iter()
                .enumerate()
                .map(move |(site, z)| EvolutionRow {
                    step,
                    site,
                    re: z.re,
                    im: z.im,
                    prob: z.norm_sqr(),
                })
        })
        .collect())
}
