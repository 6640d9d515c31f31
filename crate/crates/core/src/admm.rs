//! Manifold-constrained barycenters by ADMM splitting.
//!
//! Alternates a prox-regularized barycenter step (q), a projection onto the
//! prior manifold (r) and a scaled dual update (u) until `‖q − r‖₂` falls
//! below the stopping threshold.

use crate::barycenter::{
    entropic_barycenter_with, prox_barycenter_step_with, BarycenterOptions, BarycenterWeights,
    ProxOptions, ProxTerm,
};
use crate::error::{Error, Result};
use crate::measure::{resimplex, GridMeasure, GroundCost};
use crate::priors::Projector;
use crate::scalar::{l2_distance, Scalar};
use crate::transport::DualPotentials;

pub const DEFAULT_MU: f64 = 0.05;
pub const DEFAULT_MAX_OUTER_ITERS: usize = 20;
/// Stopping threshold per `sqrt(n)`.
pub const DEFAULT_STOP_TOL_PER_ROOT_N: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig<T> {
    pub mu: T,
    pub stop_tol: T,
    pub max_outer_iters: usize,
    /// Run exactly this many outer iterations, ignoring the stopping rule.
    pub fixed_iters: Option<usize>,
    /// Base seed for stochastic projectors; iteration `k` uses a seed derived
    /// from this and `k`.
    pub seed: u64,
    pub barycenter: BarycenterOptions<T>,
    pub prox: ProxOptions<T>,
}

impl<T: Scalar> AdmmConfig<T> {
    /// Defaults for a grid of `n` pixels.
    pub fn for_len(n: usize) -> Self {
        AdmmConfig {
            mu: T::lit(DEFAULT_MU),
            stop_tol: T::lit(DEFAULT_STOP_TOL_PER_ROOT_N) * T::from_usize_lossy(n).sqrt(),
            max_outer_iters: DEFAULT_MAX_OUTER_ITERS,
            fixed_iters: None,
            seed: 0,
            barycenter: BarycenterOptions::default(),
            prox: ProxOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > T::zero()) || !self.mu.is_finite() {
            return Err(Error::InvalidPenalty(self.mu.as_f64()));
        }
        if !(self.stop_tol > T::zero()) {
            return Err(Error::InvalidTolerance(self.stop_tol.as_f64()));
        }
        if self.fixed_iters == Some(0) {
            return Err(Error::InvalidConfig(
                "fixed_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn limit(&self) -> usize {
        self.fixed_iters.unwrap_or(self.max_outer_iters)
    }
}

/// Full iteration state; enough to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<T> {
    pub q: GridMeasure<T>,
    pub r: GridMeasure<T>,
    pub u: Vec<T>,
    pub outer_iter: usize,
    /// `‖q − r‖₂` after each outer iteration.
    pub residual_history: Vec<T>,
    /// Stopping rule met (never set under `fixed_iters`).
    pub converged: bool,
    /// Every inner transport solve converged.
    pub transport_converged: bool,
    /// Potentials of the last prox step, reused as warm starts.
    pub potentials: Vec<Option<DualPotentials<T>>>,
}

impl<T: Scalar> AdmmState<T> {
    fn check(&self, n: usize) -> Result<()> {
        let bad = |why: &str| Err(Error::InconsistentState(why.into()));
        if self.q.len() != n || self.r.len() != n || self.u.len() != n {
            return bad("state length does not match the inputs");
        }
        if self.residual_history.len() != self.outer_iter {
            return bad("residual history length differs from the iteration count");
        }
        if self.u.iter().any(|v| !v.is_finite()) {
            return bad("non-finite dual variable");
        }
        if self.q.shape() != self.r.shape() {
            return bad("q and r live on different grids");
        }
        Ok(())
    }
}

/// Seed for the projection in outer iteration `k` (SplitMix64 finalizer).
pub fn iteration_seed(base: u64, k: usize) -> u64 {
    let mut z = base.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Barycenter of `inputs` constrained to the projector's manifold.
///
/// Starts from the unconstrained entropic barycenter (`r = q`, `u = 0`) and
/// returns the projected iterate `r` along with the final state.
pub fn constrained_barycenter<T: Scalar>(
    inputs: &[GridMeasure<T>],
    weights: &BarycenterWeights<T>,
    projector: &Projector<T>,
    cost: &GroundCost<T>,
    config: &AdmmConfig<T>,
) -> Result<(GridMeasure<T>, AdmmState<T>)> {
    config.validate()?;
    let start = entropic_barycenter_with(inputs, weights, cost, &config.barycenter)?;
    if !start.converged {
        log::warn!(
            "initial barycenter stopped after {} iterations without converging",
            start.iterations
        );
    }
    let n = start.measure.len();
    let state = AdmmState {
        q: start.measure.clone(),
        r: start.measure,
        u: vec![T::zero(); n],
        outer_iter: 0,
        residual_history: Vec::new(),
        converged: false,
        transport_converged: start.converged,
        potentials: Vec::new(),
    };
    let limit = config.limit();
    run(state, inputs, weights, projector, cost, config, limit)
}

/// Continues a run for at most `extra_iters` further outer iterations. A
/// converged state is returned as is.
pub fn resume<T: Scalar>(
    state: AdmmState<T>,
    inputs: &[GridMeasure<T>],
    weights: &BarycenterWeights<T>,
    projector: &Projector<T>,
    cost: &GroundCost<T>,
    config: &AdmmConfig<T>,
    extra_iters: usize,
) -> Result<(GridMeasure<T>, AdmmState<T>)> {
    config.validate()?;
    let n = inputs.first().ok_or(Error::EmptyInputs)?.len();
    state.check(n)?;
    cost.check_measure(&state.q)?;
    let limit = state.outer_iter.saturating_add(extra_iters);
    run(state, inputs, weights, projector, cost, config, limit)
}

fn run<T: Scalar>(
    mut state: AdmmState<T>,
    inputs: &[GridMeasure<T>],
    weights: &BarycenterWeights<T>,
    projector: &Projector<T>,
    cost: &GroundCost<T>,
    config: &AdmmConfig<T>,
    limit: usize,
) -> Result<(GridMeasure<T>, AdmmState<T>)> {
    let shape = state.q.shape();
    while !state.converged && state.outer_iter < limit {
        let target: Vec<T> = state
            .r
            .mass()
            .iter()
            .zip(&state.u)
            .map(|(&r, &u)| r + u)
            .collect();
        let prox = ProxTerm::new(target, config.mu)?;
        let step = prox_barycenter_step_with(
            inputs,
            weights,
            &prox,
            cost,
            &config.prox,
            Some(&state.q),
            &state.potentials,
        )?;
        state.transport_converged &= step.transport_converged;
        state.potentials = step.potentials;
        let q = step.measure;

        let shifted: Vec<T> = q
            .mass()
            .iter()
            .zip(&state.u)
            .map(|(&q, &u)| q - u)
            .collect();
        let seed = iteration_seed(config.seed, state.outer_iter);
        let r = resimplex(&projector.project(&shifted, seed)?, shape)?;

        for ((u, &rv), &qv) in state.u.iter_mut().zip(r.mass()).zip(q.mass()) {
            *u = *u + rv - qv;
        }
        let residual = l2_distance(q.mass(), r.mass());
        state.q = q;
        state.r = r;
        state.outer_iter += 1;
        state.residual_history.push(residual);
        log::debug!("admm iteration {}: residual {residual:e}", state.outer_iter);
        if config.fixed_iters.is_none() && residual < config.stop_tol {
            state.converged = true;
        }
    }
    Ok((state.r.clone(), state))
}
