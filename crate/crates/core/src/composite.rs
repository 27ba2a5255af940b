//! Setups for several independent particles and N-fold product states.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::amplitude::{amplitude, Amplitude};
use crate::error::{Error, Result};
use crate::lattice::{Kernel, WaveFunction, NORM_TOL};
use crate::setup::{self, Setup};

/// Largest tensor [`product_state`] will materialize.
pub const MAX_PRODUCT_DIM: f64 = 1e7;

/// `c = {a; b; ...}`: one setup and kernel per independent particle.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeSetup {
    parts: Vec<(Setup, Kernel)>,
}

impl CompositeSetup {
    pub fn new(parts: Vec<(Setup, Kernel)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidSetup(
                "composite setup needs at least one part".into(),
            ));
        }
        for (s, k) in &parts {
            s.check_sites(k.num_sites())?;
        }
        Ok(CompositeSetup { parts })
    }

    pub fn parts(&self) -> &[(Setup, Kernel)] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Loads `{"parts": [{"setup": ..., "kernel_ref": "k.json"}, ...]}`;
    /// kernel paths are relative to the composite file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CompositeFile = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let parts = file
            .parts
            .into_iter()
            .map(|p| {
                let ktext = std::fs::read_to_string(base.join(&p.kernel_ref))?;
                Ok((p.setup, Kernel::from_json(&ktext)?))
            })
            .collect::<Result<Vec<_>>>()?;
        CompositeSetup::new(parts)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompositeFile {
    pub parts: Vec<CompositePart>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompositePart {
    pub setup: Setup,
    pub kernel_ref: String,
}

/// `psi(c) = prod_i psi(a_i)`.
pub fn composite_amplitude(c: &CompositeSetup) -> Result<Amplitude> {
    c.parts
        .iter()
        .try_fold(Amplitude::one(), |acc, (s, k)| Ok(acc * amplitude(s, k)?))
}

/// `{..., a'; ...} v {..., a''; ...}`: the composites must agree in every
/// part but one, where the setups are or-combinable.
pub fn or_compose(a: &CompositeSetup, b: &CompositeSetup) -> Result<CompositeSetup> {
    if a.len() != b.len() {
        return Err(Error::NotCombinable("different number of parts".into()));
    }
    if a.parts
        .iter()
        .zip(&b.parts)
        .any(|((_, ka), (_, kb))| ka != kb)
    {
        return Err(Error::NotCombinable("part kernels differ".into()));
    }
    let differing: Vec<usize> = (0..a.len())
        .filter(|&i| a.parts[i].0 != b.parts[i].0)
        .collect();
    let [idx] = differing.as_slice() else {
        return Err(Error::NotCombinable(format!(
            "composites differ in {} parts",
            differing.len()
        )));
    };
    let mut parts = a.parts.clone();
    parts[*idx].0 = setup::or_compose(&a.parts[*idx].0, &b.parts[*idx].0)?;
    CompositeSetup::new(parts)
}

/// `{a1; b1}{a2; b2} = {a1 a2; b1 b2}`, part by part.
pub fn and_compose(earlier: &CompositeSetup, later: &CompositeSetup) -> Result<CompositeSetup> {
    if earlier.len() != later.len() {
        return Err(Error::NonConsecutive("different number of parts".into()));
    }
    let parts = earlier
        .parts
        .iter()
        .zip(&later.parts)
        .map(|((se, ke), (sl, kl))| {
            if ke != kl {
                return Err(Error::NonConsecutive("part kernels differ".into()));
            }
            Ok((setup::and_compose(se, sl)?, ke.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    CompositeSetup::new(parts)
}

/// Coefficients of `Psi_1 (x) Psi_2 (x) ... (x) Psi_N`, indexed with the
/// first factor most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductState {
    dims: Vec<usize>,
    coeffs: Vec<Complex64>,
}

impl ProductState {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Coefficient at the multi-index `sites`.
    pub fn get(&self, sites: &[usize]) -> Option<Complex64> {
        if sites.len() != self.dims.len() || sites.iter().zip(&self.dims).any(|(s, d)| s >= d) {
            return None;
        }
        let idx = sites
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (s, d)| acc * d + s);
        Some(self.coeffs[idx])
    }
}

pub fn product_state(psis: &[WaveFunction]) -> Result<ProductState> {
    if psis.is_empty() {
        return Err(Error::InvalidConfig(
            "product of zero wave functions".into(),
        ));
    }
    let size: f64 = psis.iter().map(|p| p.len() as f64).product();
    if size > MAX_PRODUCT_DIM {
        return Err(Error::SizeGuard {
            size,
            limit: MAX_PRODUCT_DIM,
        });
    }
    for p in psis {
        if !p.is_normalized() {
            return Err(Error::NotNormalized(
                (crate::lattice::norm_sq(p) - 1.0).abs(),
            ));
        }
    }
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for p in psis {
        coeffs = coeffs
            .iter()
            .flat_map(|&c| p.coeffs().iter().map(move |&z| c * z))
            .collect();
    }
    let state = ProductState {
        dims: psis.iter().map(|p| p.len()).collect(),
        coeffs,
    };
    debug_assert!((state.norm_sq() - 1.0).abs() <= NORM_TOL * psis.len() as f64);
    Ok(state)
}
