//! Weighted entropic Wasserstein barycenters.
//!
//! Two solvers share one objective, `sum_i w_i W_eps(p_i, q)`, by default
//! debiased with `- W_eps(q, q) / 2` so that the barycenter of identical
//! inputs is that input rather than a blurred copy:
//!
//! * [`entropic_barycenter`] runs iterative Bregman projections in scaling
//!   form: fit each plan's first marginal, then recombine the second marginals
//!   by a weighted geometric mean.
//! * [`prox_barycenter_step`] adds the quadratic penalty
//!   `(mu / 2) ||target - q||^2` and minimizes by mirror descent on the simplex,
//!   using the centered dual potentials as gradients, with backtracking.

use std::collections::VecDeque;

use log::debug;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::GibbsKernel;
use crate::measure::{normalize_to_measure, GridMeasure, GroundCost, MASS_FLOOR};
use crate::scalar::{dot, l1_distance, l2_distance, l2_norm, Scalar};
use crate::transport::{
    centered, DualPotentials, SinkhornMode, SinkhornOptions, TransportSolver, DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
};

pub const DEFAULT_PROX_STEP: f64 = 1.0;
pub const DEFAULT_INNER_ITERS: usize = 300;
/// Relative objective decrease below which the prox step stops early.
pub const PROX_REL_TOL: f64 = 1e-7;

const SCALING_LIMIT: f64 = 1e30;
const LBFGS_MEMORY: usize = 8;
const MIN_LINE_STEP: f64 = 1e-10;

/// Convex weights of a barycenter problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterWeights<T> {
    weights: Vec<T>,
}

impl<T: Scalar> BarycenterWeights<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInputs);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::InvalidWeights(format!(
                "negative or non-finite weight in {weights:?}"
            )));
        }
        let total: T = weights.iter().copied().sum();
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(Self { weights })
    }

    /// `(1 - alpha, alpha)`: alpha is the progress from the first input toward the second.
    pub fn pair(alpha: T) -> Result<Self> {
        if !(alpha >= T::zero() && alpha <= T::one()) {
            return Err(Error::InvalidWeights(format!(
                "alpha {alpha} outside [0, 1]"
            )));
        }
        Self::new(vec![T::one() - alpha, alpha])
    }

    /// Bilinear weights `((1-a)(1-b), a(1-b), (1-a)b, ab)` for four corners.
    pub fn bilinear(a: T, b: T) -> Result<Self> {
        let one = T::one();
        let w = vec![(one - a) * (one - b), a * (one - b), (one - a) * b, a * b];
        let total: T = w.iter().copied().sum();
        Self::new(w.into_iter().map(|x| x / total).collect())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Quadratic coupling `(mu / 2) ||target - q||^2` added to the barycenter objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxTerm<T> {
    pub target: Vec<T>,
    pub mu: T,
}

impl<T: Scalar> ProxTerm<T> {
    pub fn new(target: Vec<T>, mu: T) -> Result<Self> {
        if !(mu >= T::zero()) || !mu.is_finite() {
            return Err(Error::InvalidPenalty(mu.as_f64()));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotAMeasure("non-finite prox target".into()));
        }
        Ok(Self { target, mu })
    }

    /// No penalty.
    pub fn none(n: usize) -> Self {
        Self {
            target: vec![T::zero(); n],
            mu: T::zero(),
        }
    }

    fn value(&self, q: &[T]) -> T {
        if self.mu == T::zero() {
            return T::zero();
        }
        let d = l2_distance(&self.target, q);
        self.mu * T::lit(0.5) * d * d
    }
}

fn check_inputs<T: Scalar>(
    inputs: &[GridMeasure<T>],
    weights: &BarycenterWeights<T>,
    cost: &GroundCost<T>,
) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::EmptyInputs);
    }
    if inputs.len() != weights.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} inputs",
            weights.len(),
            inputs.len()
        )));
    }
    for p in inputs {
        cost.check_measure(p)?;
    }
    Ok(())
}

/// Weighted geometric mean of the inputs, floored and renormalized.
pub fn geometric_mean<T: Scalar>(
    inputs: &[GridMeasure<T>],
    weights: &BarycenterWeights<T>,
) -> Result<GridMeasure<T>> {
    let n = inputs[0].len();
    let floor = T::lit(MASS_FLOOR);
    let mut log_mean = vec![T::zero(); n];
    for (p, &w) in inputs.iter().zip(weights.as_slice()) {
        if w == T::zero() {
            continue;
        }
        for (acc, &m) in log_mean.iter_mut().zip(p.mass()) {
            *acc = *acc + w * m.max(floor).ln();
        }
    }
    let max = log_mean.iter().copied().fold(T::neg_infinity(), T::max);
    let px: Vec<T> = log_mean.iter().map(|&l| (l - max).exp()).collect();
    normalize_to_measure(&px, inputs[0].shape())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycenterOptions<T> {
    pub max_iters: usize,
    /// L1 change between successive iterates that counts as converged.
    pub tol: T,
    pub mode: SinkhornMode,
    /// Remove the entropic blur by subtracting half the self-transport term.
    pub debias: bool,
}

impl<T: Scalar> Default for BarycenterOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            tol: T::lit(DEFAULT_TOL),
            mode: SinkhornMode::Auto,
            debias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterReport<T> {
    pub measure: GridMeasure<T>,
    pub iterations: usize,
    pub converged: bool,
    pub log_domain: bool,
}

/// Iterative Bregman projections for the weighted entropic barycenter.
pub fn entropic_barycenter<T: Scalar>(
    inputs: &[GridMeasure<T>],
    weights: &BarycenterWeights<T>,
    cost: &GroundCost<T>,
    max_iters: usize,
    tol: T,
) -> Result<GridMeasure<T>> {
    let options = BarycenterOptions {
        max_iters,
        tol,
        ..BarycenterOptions::default()
    };
    Ok(entropic_barycenter_with(inputs, weights, cost, &options)?.measure)
}

pub fn entropic_barycenter_with<T: Scalar>(
    inputs: &[GridMeasure<T>],
    weights: &BarycenterWeights<T>,
    cost: &GroundCost<T>,
    options: &BarycenterOptions<T>,
) -> Result<BarycenterReport<T>> {
    check_inputs(inputs, weights, cost)?;
    if !(options.tol > T::zero()) {
        return Err(Error::InvalidTolerance(options.tol.as_f64()));
    }
    let kernel = GibbsKernel::new(cost);
    let init = geometric_mean(inputs, weights)?;
    let active: Vec<(usize, T)> = weights
        .as_slice()
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, w)| *w > T::zero())
        .collect();

    let use_log = match options.mode {
        SinkhornMode::Log => true,
        SinkhornMode::Standard => false,
        SinkhornMode::Auto => cost.epsilon() < T::lit(1e-3),
    };
    if !use_log {
        let out = ibp_standard(inputs, &active, &kernel, &init, options);
        match out {
            Some(report) => return Ok(report),
            None if options.mode == SinkhornMode::Standard => {
                return Ok(BarycenterReport {
                    measure: init,
                    iterations: 0,
                    converged: false,
                    log_domain: false,
                });
            }
            None => debug!("barycenter scalings left [1e-30, 1e30]; switching to log domain"),
        }
    }
    Ok(ibp_log(inputs, &active, &kernel, &init, options))
}

fn finish<T: Scalar>(log_q: &[T], shape: crate::measure::GridShape) -> GridMeasure<T> {
    let max = log_q.iter().copied().fold(T::neg_infinity(), T::max);
    let px: Vec<T> = log_q.iter().map(|&l| (l - max).exp()).collect();
    normalize_to_measure(&px, shape).expect("barycenter iterate has positive mass")
}

fn normalized<T: Scalar>(q: &[T]) -> Vec<T> {
    let s: T = q.iter().copied().sum();
    q.iter().map(|&x| x / s).collect()
}

/// Scaling-form iteration. Returns `None` when the scalings leave the safe range.
fn ibp_standard<T: Scalar>(
    inputs: &[GridMeasure<T>],
    active: &[(usize, T)],
    kernel: &GibbsKernel<T>,
    init: &GridMeasure<T>,
    options: &BarycenterOptions<T>,
) -> Option<BarycenterReport<T>> {
    let n = init.len();
    let limit = T::lit(SCALING_LIMIT);
    // exact zeros come from empty input pixels and are harmless
    let ok = |s: &[T]| {
        s.iter()
            .all(|&x| x.is_finite() && x <= limit && (x == T::zero() || x * limit >= T::one()))
    };
    let mut v = vec![vec![T::one(); n]; active.len()];
    let mut u = vec![vec![T::zero(); n]; active.len()];
    let mut ktu = vec![vec![T::zero(); n]; active.len()];
    let mut kv = vec![T::zero(); n];
    let mut scratch = vec![T::zero(); n];
    let mut prev = init.mass().to_vec();
    let mut log_q = vec![T::zero(); n];
    let mut d = vec![T::one(); n];
    let mut kd = vec![T::zero(); n];
    for it in 1..=options.max_iters {
        for (l, &dv) in log_q.iter_mut().zip(&d) {
            *l = if options.debias { dv.ln() } else { T::zero() };
        }
        for (a, &(idx, w)) in active.iter().enumerate() {
            kernel.apply(&v[a], &mut kv, &mut scratch);
            let p = inputs[idx].mass();
            for i in 0..n {
                u[a][i] = p[i] / kv[i];
            }
            kernel.apply(&u[a], &mut ktu[a], &mut scratch);
            for j in 0..n {
                log_q[j] = log_q[j] + w * ktu[a][j].ln();
            }
        }
        let q: Vec<T> = log_q.iter().map(|&l| l.exp()).collect();
        for a in 0..active.len() {
            for j in 0..n {
                v[a][j] = q[j] / ktu[a][j];
            }
        }
        if options.debias {
            kernel.apply(&d, &mut kd, &mut scratch);
            for j in 0..n {
                d[j] = (d[j] * q[j] / kd[j]).sqrt();
            }
        }
        if u.iter()
            .chain(v.iter())
            .chain(std::iter::once(&d))
            .any(|s| !ok(s))
            || q.iter().any(|x| !x.is_finite() || *x <= T::zero())
        {
            return None;
        }
        let qn = normalized(&q);
        let change = l1_distance(&qn, &prev);
        prev = qn;
        if change < options.tol {
            return Some(BarycenterReport {
                measure: finish(&log_q, init.shape()),
                iterations: it,
                converged: true,
                log_domain: false,
            });
        }
    }
    let log_q: Vec<T> = prev.iter().map(|&x| x.ln()).collect();
    Some(BarycenterReport {
        measure: finish(&log_q, init.shape()),
        iterations: options.max_iters,
        converged: false,
        log_domain: false,
    })
}

fn ibp_log<T: Scalar>(
    inputs: &[GridMeasure<T>],
    active: &[(usize, T)],
    kernel: &GibbsKernel<T>,
    init: &GridMeasure<T>,
    options: &BarycenterOptions<T>,
) -> BarycenterReport<T> {
    let n = init.len();
    let tiny = T::min_positive_value();
    let log_p: Vec<Vec<T>> = inputs
        .iter()
        .map(|p| p.mass().iter().map(|&m| m.max(tiny).ln()).collect())
        .collect();
    // potentials scaled by 1/eps
    let mut g = vec![vec![T::zero(); n]; active.len()];
    let mut f = vec![T::zero(); n];
    let mut lse = vec![T::zero(); n];
    let mut lse_col = vec![vec![T::zero(); n]; active.len()];
    let mut scratch = vec![T::zero(); n];
    let mut prev = init.mass().to_vec();
    let mut log_q = vec![T::zero(); n];
    let mut log_d = vec![T::zero(); n];
    let mut lse_d = vec![T::zero(); n];
    let mut iterations = options.max_iters;
    let mut converged = false;
    for it in 1..=options.max_iters {
        log_q.copy_from_slice(&log_d);
        for (a, &(idx, w)) in active.iter().enumerate() {
            kernel.log_apply(&g[a], &mut lse, &mut scratch);
            for i in 0..n {
                f[i] = log_p[idx][i] - lse[i];
            }
            kernel.log_apply(&f, &mut lse_col[a], &mut scratch);
            for j in 0..n {
                log_q[j] = log_q[j] + w * lse_col[a][j];
            }
        }
        for a in 0..active.len() {
            for j in 0..n {
                g[a][j] = log_q[j] - lse_col[a][j];
            }
        }
        if options.debias {
            kernel.log_apply(&log_d, &mut lse_d, &mut scratch);
            for j in 0..n {
                log_d[j] = T::lit(0.5) * (log_d[j] + log_q[j] - lse_d[j]);
            }
        }
        let max = log_q.iter().copied().fold(T::neg_infinity(), T::max);
        let qn = normalized(&log_q.iter().map(|&l| (l - max).exp()).collect::<Vec<T>>());
        let change = l1_distance(&qn, &prev);
        prev = qn;
        if change < options.tol {
            iterations = it;
            converged = true;
            break;
        }
    }
    BarycenterReport {
        measure: finish(&log_q, init.shape()),
        iterations,
        converged,
        log_domain: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxOptions<T> {
    pub inner_iters: usize,
    /// Mirror-descent step used until curvature pairs are available; trial
    /// points that raise the objective are halved back.
    pub step: T,
    pub rel_tol: T,
    pub sinkhorn: SinkhornOptions<T>,
    /// Solve the per-input transport problems on the rayon pool.
    pub parallel: bool,
    /// Subtract half the self-transport term, as in the debiased barycenter.
    pub debias: bool,
}

impl<T: Scalar> Default for ProxOptions<T> {
    fn default() -> Self {
        Self {
            inner_iters: DEFAULT_INNER_ITERS,
            step: T::lit(DEFAULT_PROX_STEP),
            rel_tol: T::lit(PROX_REL_TOL),
            sinkhorn: SinkhornOptions::default(),
            parallel: false,
            debias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxReport<T> {
    pub measure: GridMeasure<T>,
    /// Objective after each accepted step, starting with the initial point.
    pub objective_history: Vec<T>,
    pub iterations: usize,
    /// Final potentials per input (empty entries for zero weights), followed
    /// by the self-transport potential when debiased.
    pub potentials: Vec<Option<DualPotentials<T>>>,
    /// Whether every transport solve along the way converged.
    pub transport_converged: bool,
}

struct Evaluation<T> {
    objective: T,
    gradient: Vec<T>,
    potentials: Vec<Option<DualPotentials<T>>>,
    converged: bool,
}

#[allow(clippy::too_many_arguments)]
fn evaluate<T: Scalar>(
    solver: &TransportSolver<T>,
    inputs: &[GridMeasure<T>],
    weights: &[T],
    prox: &ProxTerm<T>,
    q: &GridMeasure<T>,
    warm: &[Option<DualPotentials<T>>],
    parallel: bool,
    debias: bool,
) -> Result<Evaluation<T>> {
    let solve = |k: usize| -> Result<Option<(T, DualPotentials<T>)>> {
        if weights[k] == T::zero() {
            return Ok(None);
        }
        let r = solver.solve(&inputs[k], q, warm.get(k).and_then(|w| w.as_ref()))?;
        Ok(Some((r.entropic, r.potentials)))
    };
    let results: Vec<Option<(T, DualPotentials<T>)>> = if parallel {
        (0..inputs.len())
            .into_par_iter()
            .map(solve)
            .collect::<Result<_>>()?
    } else {
        (0..inputs.len()).map(solve).collect::<Result<_>>()?
    };
    let n = q.len();
    let mut objective = prox.value(q.mass());
    let mut gradient = vec![T::zero(); n];
    let mut converged = true;
    let mut potentials = Vec::with_capacity(inputs.len());
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Some((value, pot)) => {
                objective = objective + weights[k] * value;
                converged &= pot.converged;
                let g = centered(&pot.g, q.mass());
                for (acc, gv) in gradient.iter_mut().zip(g) {
                    *acc = *acc + weights[k] * gv;
                }
                potentials.push(Some(pot));
            }
            None => potentials.push(None),
        }
    }
    if debias {
        let warm_h = warm
            .get(inputs.len())
            .and_then(|w| w.as_ref())
            .map(|w| w.f.as_slice());
        let selfterm = solver.solve_symmetric(q, warm_h)?;
        objective = objective - T::lit(0.5) * selfterm.value;
        converged &= selfterm.converged;
        for (acc, hv) in gradient.iter_mut().zip(centered(&selfterm.h, q.mass())) {
            *acc = *acc - hv;
        }
        potentials.push(Some(DualPotentials {
            f: selfterm.h.clone(),
            g: selfterm.h,
            epsilon: solver.cost().epsilon(),
            converged: selfterm.converged,
            iterations: selfterm.iterations,
            log_domain: true,
        }));
    }
    if prox.mu > T::zero() {
        for ((acc, &qv), &t) in gradient.iter_mut().zip(q.mass()).zip(&prox.target) {
            *acc = *acc + prox.mu * (qv - t);
        }
    }
    Ok(Evaluation {
        objective,
        gradient,
        potentials,
        converged,
    })
}

/// Proximally regularized barycenter step, started from the weighted geometric mean.
pub fn prox_barycenter_step<T: Scalar>(
    inputs: &[GridMeasure<T>],
    weights: &BarycenterWeights<T>,
    prox: &ProxTerm<T>,
    cost: &GroundCost<T>,
    inner_iters: usize,
    step: T,
) -> Result<GridMeasure<T>> {
    let options = ProxOptions {
        inner_iters,
        step,
        ..ProxOptions::default()
    };
    Ok(prox_barycenter_step_with(inputs, weights, prox, cost, &options, None, &[])?.measure)
}

/// Mirror descent on `sum w_i W_eps(p_i, q) + (mu/2) ||target - q||^2` from
/// `start` (or the geometric mean), warm-starting transport solves from `warm`.
pub fn prox_barycenter_step_with<T: Scalar>(
    inputs: &[GridMeasure<T>],
    weights: &BarycenterWeights<T>,
    prox: &ProxTerm<T>,
    cost: &GroundCost<T>,
    options: &ProxOptions<T>,
    start: Option<&GridMeasure<T>>,
    warm: &[Option<DualPotentials<T>>],
) -> Result<ProxReport<T>> {
    check_inputs(inputs, weights, cost)?;
    if !(options.step > T::zero()) {
        return Err(Error::StepNotPositive(options.step.as_f64()));
    }
    let n = inputs[0].len();
    if prox.target.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: prox.target.len(),
        });
    }
    if !(prox.mu >= T::zero()) {
        return Err(Error::InvalidPenalty(prox.mu.as_f64()));
    }
    let solver = TransportSolver::new(*cost, options.sinkhorn)?;
    let w = weights.as_slice();
    let shape = inputs[0].shape();

    let mut q = match start {
        Some(s) => {
            cost.check_measure(s)?;
            s.clone()
        }
        None => geometric_mean(inputs, weights)?,
    };
    let mut current = evaluate(
        &solver,
        inputs,
        w,
        prox,
        &q,
        warm,
        options.parallel,
        options.debias,
    )?;
    let mut history = vec![current.objective];
    let mut all_converged = current.converged;
    let mut iterations = 0;

    // Mirror descent in log coordinates z = ln q, preconditioned by an L-BFGS
    // model built on the mirror metric diag(1/q).
    let mut log_q: Vec<T> = q.mass().iter().map(|&m| m.ln()).collect();
    let mut gz = log_gradient(q.mass(), &current.gradient);
    let mut memory: VecDeque<Curvature<T>> = VecDeque::with_capacity(LBFGS_MEMORY);
    let mut gamma = options.step;

    'outer: while iterations < options.inner_iters {
        iterations += 1;
        let mut direction = lbfgs_direction(&memory, &gz, q.mass(), gamma);
        if dot(&direction, &gz) >= T::zero() {
            memory.clear();
            direction = lbfgs_direction(&memory, &gz, q.mass(), gamma);
        }
        let mut t = T::one();
        let mut backtracked = false;
        loop {
            let trial_log: Vec<T> = log_q
                .iter()
                .zip(&direction)
                .map(|(&l, &d)| l + t * d)
                .collect();
            let max = trial_log.iter().copied().fold(T::neg_infinity(), T::max);
            let px: Vec<T> = trial_log.iter().map(|&l| (l - max).exp()).collect();
            let trial = normalize_to_measure(&px, shape)?;
            let eval = evaluate(
                &solver,
                inputs,
                w,
                prox,
                &trial,
                &current.potentials,
                options.parallel,
                options.debias,
            )?;
            if eval.objective <= current.objective {
                let decrease = current.objective - eval.objective;
                let scale = current.objective.abs().max(T::min_positive_value());
                all_converged &= eval.converged;
                let next_log: Vec<T> = trial.mass().iter().map(|&m| m.ln()).collect();
                let next_gz = log_gradient(trial.mass(), &eval.gradient);
                let sv: Vec<T> = next_log.iter().zip(&log_q).map(|(&a, &b)| a - b).collect();
                let yv: Vec<T> = next_gz.iter().zip(&gz).map(|(&a, &b)| a - b).collect();
                let sy = dot(&sv, &yv);
                if sy > T::epsilon() * l2_norm(&sv) * l2_norm(&yv) {
                    let yhy: T = yv.iter().zip(trial.mass()).map(|(&y, &m)| y * y / m).sum();
                    gamma = sy / yhy;
                    if memory.len() == LBFGS_MEMORY {
                        memory.pop_front();
                    }
                    memory.push_back(Curvature {
                        s: sv,
                        y: yv,
                        rho: T::one() / sy,
                    });
                }
                q = trial;
                log_q = next_log;
                gz = next_gz;
                current = eval;
                history.push(current.objective);
                // a tiny decrease right after backtracking says more about the
                // step than about stationarity
                if decrease / scale < options.rel_tol && !backtracked {
                    break 'outer;
                }
                break;
            }
            backtracked = true;
            t = t * T::lit(0.5);
            if t < T::lit(MIN_LINE_STEP) {
                if memory.is_empty() {
                    break 'outer;
                }
                // the quasi-Newton model is stale: restart from plain mirror descent
                memory.clear();
                direction = lbfgs_direction(&memory, &gz, q.mass(), gamma);
                t = T::one();
            }
        }
    }
    Ok(ProxReport {
        measure: q,
        objective_history: history,
        iterations,
        potentials: current.potentials,
        transport_converged: all_converged,
    })
}

struct Curvature<T> {
    s: Vec<T>,
    y: Vec<T>,
    rho: T,
}

/// Gradient with respect to `z = ln q` of a function of `q = softmax(z)`.
fn log_gradient<T: Scalar>(q: &[T], grad: &[T]) -> Vec<T> {
    let mean = dot(q, grad);
    q.iter().zip(grad).map(|(&m, &g)| m * (g - mean)).collect()
}

/// Two-loop recursion with `H0 = gamma * diag(1/q)`; with an empty memory
/// this is the plain mirror-descent step `-gamma * (grad - <grad, q>)`.
fn lbfgs_direction<T: Scalar>(
    memory: &VecDeque<Curvature<T>>,
    gz: &[T],
    q: &[T],
    gamma: T,
) -> Vec<T> {
    let mut r = gz.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for c in memory.iter().rev() {
        let a = c.rho * dot(&c.s, &r);
        for (rv, &yv) in r.iter_mut().zip(&c.y) {
            *rv = *rv - a * yv;
        }
        alphas.push(a);
    }
    for (rv, &m) in r.iter_mut().zip(q) {
        *rv = gamma * *rv / m;
    }
    for (c, &a) in memory.iter().zip(alphas.iter().rev()) {
        let b = c.rho * dot(&c.y, &r);
        for (rv, &sv) in r.iter_mut().zip(&c.s) {
            *rv = *rv + (a - b) * sv;
        }
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

/// Barycenter objective `sum_i w_i W_eps(p_i, q)`, minus `W_eps(q, q) / 2`
/// when `debias` is set.
pub fn barycenter_objective<T: Scalar>(
    inputs: &[GridMeasure<T>],
    weights: &BarycenterWeights<T>,
    q: &GridMeasure<T>,
    cost: &GroundCost<T>,
    sinkhorn: SinkhornOptions<T>,
    debias: bool,
) -> Result<T> {
    check_inputs(inputs, weights, cost)?;
    let solver = TransportSolver::new(*cost, sinkhorn)?;
    let none = ProxTerm::none(q.len());
    Ok(evaluate(
        &solver,
        inputs,
        weights.as_slice(),
        &none,
        q,
        &[],
        false,
        debias,
    )?
    .objective)
}
