//! Projections onto a prior manifold: identity, sparse coding over a learned
//! dictionary, or an external process speaking a small binary protocol.

mod dictionary;
mod external;
mod omp;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use dictionary::{learn_dictionary, Dictionary};
pub use external::{project_external, ExternalProjector, DEFAULT_TIMEOUT, MAGIC};
pub use omp::{omp, SparseCode};

pub const DEFAULT_MMSE_PASSES: usize = 10;
/// Noise level relative to `max(y)`.
pub const DEFAULT_NOISE_FACTOR: f64 = 0.05;

/// Clamps at zero and rescales to unit sum; all-zero input maps to uniform.
pub fn simplex_floor<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotAMeasure("non-finite entry".into()));
    }
    let mut out: Vec<T> = values.iter().map(|&v| v.max(T::zero())).collect();
    let total: T = out.iter().copied().sum();
    if total > T::zero() {
        out.iter_mut().for_each(|v| *v = *v / total);
    } else {
        let u = T::one() / T::from_usize_lossy(out.len().max(1));
        out.iter_mut().for_each(|v| *v = u);
    }
    Ok(out)
}

/// Sparse-prior projection: OMP reconstruction, optionally averaged over
/// `mmse_passes` noisy copies of `y` (stochastic resonance), then brought
/// back to the simplex.
pub fn project_sparse<T: Scalar>(
    y: &[T],
    dict: &Dictionary<T>,
    k: usize,
    mmse_passes: usize,
    noise_sigma: T,
    seed: u64,
) -> Result<Vec<T>> {
    if mmse_passes == 0 {
        return Err(Error::InvalidConfig(
            "mmse_passes must be at least 1".into(),
        ));
    }
    if !(noise_sigma >= T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "noise sigma must be non-negative, got {noise_sigma}"
        )));
    }
    if mmse_passes == 1 && noise_sigma == T::zero() {
        let code = omp(y, dict, k, T::zero())?;
        return simplex_floor(&dict.reconstruct(&code));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![T::zero(); y.len()];
    let mut noisy = vec![T::zero(); y.len()];
    for _ in 0..mmse_passes {
        for (z, &v) in noisy.iter_mut().zip(y) {
            let eta: f64 = StandardNormal.sample(&mut rng);
            *z = v + noise_sigma * T::lit(eta);
        }
        let code = omp(&noisy, dict, k, T::zero())?;
        for (a, r) in acc.iter_mut().zip(dict.reconstruct(&code)) {
            *a = *a + r;
        }
    }
    let passes = T::from_usize_lossy(mmse_passes);
    acc.iter_mut().for_each(|a| *a = *a / passes);
    simplex_floor(&acc)
}

/// Settings of the sparse projector.
#[derive(Debug, Clone)]
pub struct SparseProjector<T> {
    pub dictionary: Arc<Dictionary<T>>,
    pub sparsity: usize,
    pub mmse_passes: usize,
    /// Noise sigma as a multiple of `max(y)`.
    pub noise_factor: T,
}

impl<T: Scalar> SparseProjector<T> {
    pub fn new(dictionary: Arc<Dictionary<T>>, sparsity: usize) -> Self {
        SparseProjector {
            dictionary,
            sparsity,
            mmse_passes: DEFAULT_MMSE_PASSES,
            noise_factor: T::lit(DEFAULT_NOISE_FACTOR),
        }
    }

    /// Plain OMP reconstruction, no noise averaging.
    pub fn plain(dictionary: Arc<Dictionary<T>>, sparsity: usize) -> Self {
        SparseProjector {
            mmse_passes: 1,
            noise_factor: T::zero(),
            ..Self::new(dictionary, sparsity)
        }
    }
}

/// Projection onto the prior manifold. Every variant returns a probability
/// vector.
#[derive(Debug, Clone)]
pub enum Projector<T> {
    Identity,
    Sparse(SparseProjector<T>),
    External(Arc<ExternalProjector>),
}

impl<T: Scalar> Projector<T> {
    /// `seed` only matters for stochastic projectors.
    pub fn project(&self, y: &[T], seed: u64) -> Result<Vec<T>> {
        match self {
            Projector::Identity => simplex_floor(y),
            Projector::Sparse(sp) => {
                let peak = y.iter().copied().fold(T::zero(), T::max);
                project_sparse(
                    y,
                    &sp.dictionary,
                    sp.sparsity,
                    sp.mmse_passes,
                    sp.noise_factor * peak,
                    seed,
                )
            }
            Projector::External(ext) => project_external(y, ext),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Projector::Sparse(sp) if sp.mmse_passes > 1 || sp.noise_factor > T::zero())
    }
}
