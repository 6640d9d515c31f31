//! Run configuration: an optional TOML file overridden by command-line flags.

use std::path::Path;

use anyhow::{bail, Context};
use otmorph::priors::{DEFAULT_MMSE_PASSES, DEFAULT_NOISE_FACTOR};
use otmorph::transport::{DEFAULT_EPSILON, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use otmorph::{AdmmConfig, SinkhornOptions};
use serde::Deserialize;

use crate::UsageError;

pub const DEFAULT_FRAMES: usize = 9;
pub const DEFAULT_SPARSITY: usize = 12;
pub const DEFAULT_ATOMS: usize = 256;

/// Every field is optional; missing ones fall back to the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub epsilon: Option<f64>,
    pub mu: Option<f64>,
    pub stop_tol: Option<f64>,
    pub max_outer_iters: Option<usize>,
    pub fixed_iters: Option<usize>,
    pub n_frames: Option<usize>,
    pub sparsity: Option<usize>,
    pub atoms: Option<usize>,
    pub mmse_passes: Option<usize>,
    /// Stochastic-resonance noise as a multiple of `max(y)`.
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Fields set in `other` win.
    pub fn overridden_by(&self, other: &RunConfig) -> RunConfig {
        RunConfig {
            epsilon: other.epsilon.or(self.epsilon),
            mu: other.mu.or(self.mu),
            stop_tol: other.stop_tol.or(self.stop_tol),
            max_outer_iters: other.max_outer_iters.or(self.max_outer_iters),
            fixed_iters: other.fixed_iters.or(self.fixed_iters),
            n_frames: other.n_frames.or(self.n_frames),
            sparsity: other.sparsity.or(self.sparsity),
            atoms: other.atoms.or(self.atoms),
            mmse_passes: other.mmse_passes.or(self.mmse_passes),
            noise_sigma: other.noise_sigma.or(self.noise_sigma),
            seed: other.seed.or(self.seed),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let positive = |name: &str, v: Option<f64>| -> anyhow::Result<()> {
            match v {
                Some(x) if !(x > 0.0 && x.is_finite()) => {
                    bail!(UsageError(format!("{name} must be positive, got {x}")))
                }
                _ => Ok(()),
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("mu", self.mu)?;
        positive("stop_tol", self.stop_tol)?;
        for (name, v) in [
            ("fixed_iters", self.fixed_iters),
            ("n_frames", self.n_frames),
            ("sparsity", self.sparsity),
            ("atoms", self.atoms),
            ("mmse_passes", self.mmse_passes),
        ] {
            if v == Some(0) {
                bail!(UsageError(format!("{name} must be at least 1")));
            }
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                bail!(UsageError(format!(
                    "noise_sigma must be non-negative, got {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(DEFAULT_EPSILON)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames.unwrap_or(DEFAULT_FRAMES)
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity.unwrap_or(DEFAULT_SPARSITY)
    }

    pub fn atoms(&self) -> usize {
        self.atoms.unwrap_or(DEFAULT_ATOMS)
    }

    pub fn mmse_passes(&self) -> usize {
        self.mmse_passes.unwrap_or(DEFAULT_MMSE_PASSES)
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma.unwrap_or(DEFAULT_NOISE_FACTOR)
    }

    pub fn admm(&self, n: usize, sinkhorn_tol: Option<f64>) -> AdmmConfig<f64> {
        let mut c = AdmmConfig::for_len(n);
        if let Some(mu) = self.mu {
            c.mu = mu;
        }
        if let Some(t) = self.stop_tol {
            c.stop_tol = t;
        }
        if let Some(m) = self.max_outer_iters {
            c.max_outer_iters = m;
        }
        c.fixed_iters = self.fixed_iters;
        c.seed = self.seed();
        c.prox.sinkhorn = Self::sinkhorn(sinkhorn_tol);
        c
    }

    pub fn sinkhorn(tol: Option<f64>) -> SinkhornOptions<f64> {
        SinkhornOptions::new(DEFAULT_MAX_ITERS, tol.unwrap_or(DEFAULT_TOL))
    }
}
