//! Entropic optimal transport between two grid measures.
//!
//! Sinkhorn iterations run on the separable Gibbs kernel. The plain scaling
//! iteration is used while the scaling vectors stay within `[1e-30, 1e30]`; past
//! that, or for `epsilon < 1e-3`, the solver works on the dual potentials with
//! log-sum-exp updates.

use crate::error::{Error, Result};
use crate::kernel::GibbsKernel;
use crate::measure::{GridMeasure, GroundCost};
use crate::scalar::{dot, Scalar};

pub const DEFAULT_EPSILON: f64 = 2e-3;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Scaling magnitude past which the standard iteration hands over to the log domain.
const SCALING_LIMIT: f64 = 1e30;
/// Below this epsilon the log domain is used from the start.
const LOG_DOMAIN_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SinkhornMode {
    /// Standard scaling iteration with automatic fallback to the log domain.
    #[default]
    Auto,
    /// Standard scaling iteration only; reports non-convergence instead of switching.
    Standard,
    /// Log-domain iteration only.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions<T> {
    pub max_iters: usize,
    /// L1 tolerance on the marginals of the implied plan.
    pub tol: T,
    pub mode: SinkhornMode,
}

impl<T: Scalar> Default for SinkhornOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            tol: T::lit(DEFAULT_TOL),
            mode: SinkhornMode::Auto,
        }
    }
}

impl<T: Scalar> SinkhornOptions<T> {
    pub fn new(max_iters: usize, tol: T) -> Self {
        Self {
            max_iters,
            tol,
            mode: SinkhornMode::Auto,
        }
    }

    pub fn with_mode(mut self, mode: SinkhornMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Dual potentials `(f, g)` of one entropic transport problem. The plan is
/// `P_ij = exp((f_i + g_j - C_ij) / eps)`; the gauge is fixed so `sum(f) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials<T> {
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub epsilon: T,
    pub converged: bool,
    pub iterations: usize,
    /// Whether the final iterations ran in the log domain.
    pub log_domain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportResult<T> {
    /// Transport cost `<P, C>` of the entropic plan, without the entropy term.
    pub cost: T,
    /// `<P, C> + eps * KL(P | p (x) q)`. Non-negative and non-increasing as
    /// epsilon shrinks.
    pub regularized: T,
    /// `<P, C> + eps * sum P (ln P - 1)`, the objective Sinkhorn minimizes.
    /// Its gradient in the second marginal is `g`.
    pub entropic: T,
    /// L1 errors of the implied plan's row and column sums.
    pub marginal_error: (T, T),
    pub potentials: DualPotentials<T>,
}

/// Reusable Sinkhorn solver bound to one ground cost.
#[derive(Debug, Clone)]
pub struct TransportSolver<T> {
    cost: GroundCost<T>,
    kernel: GibbsKernel<T>,
    options: SinkhornOptions<T>,
}

struct Workspace<T> {
    a: Vec<T>,
    b: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    fn new(n: usize) -> Self {
        Self {
            a: vec![T::zero(); n],
            b: vec![T::zero(); n],
            scratch: vec![T::zero(); n],
        }
    }
}

fn safe_ln<T: Scalar>(x: T) -> T {
    x.max(T::min_positive_value()).ln()
}

impl<T: Scalar> TransportSolver<T> {
    pub fn new(cost: GroundCost<T>, options: SinkhornOptions<T>) -> Result<Self> {
        if !(options.tol > T::zero()) {
            return Err(Error::InvalidTolerance(options.tol.as_f64()));
        }
        Ok(Self {
            kernel: GibbsKernel::new(&cost),
            cost,
            options,
        })
    }

    pub fn cost(&self) -> &GroundCost<T> {
        &self.cost
    }

    pub fn options(&self) -> &SinkhornOptions<T> {
        &self.options
    }

    /// Solves the entropic problem between `p` and `q`, optionally warm-started
    /// from earlier potentials on the same grid and epsilon.
    pub fn solve(
        &self,
        p: &GridMeasure<T>,
        q: &GridMeasure<T>,
        warm: Option<&DualPotentials<T>>,
    ) -> Result<TransportResult<T>> {
        self.cost.check_measure(p)?;
        self.cost.check_measure(q)?;
        let n = p.len();
        let eps = self.cost.epsilon();
        let warm = warm.filter(|w| w.f.len() == n && w.g.len() == n && w.epsilon == eps);
        let (mut f, mut g) = match warm {
            Some(w) => (w.f.clone(), w.g.clone()),
            None => (vec![T::zero(); n], vec![T::zero(); n]),
        };
        let opts = self.options;
        let mut ws = Workspace::new(n);

        let use_log = match opts.mode {
            SinkhornMode::Log => true,
            SinkhornMode::Standard => false,
            SinkhornMode::Auto => eps < T::lit(LOG_DOMAIN_EPSILON),
        };
        let (mut converged, mut iterations, mut log_domain) = (false, 0, use_log);
        if !use_log {
            let out = self.standard(p.mass(), q.mass(), &mut f, &mut g, opts.max_iters, &mut ws);
            converged = out.converged;
            iterations = out.iterations;
            if out.overflowed && opts.mode == SinkhornMode::Auto {
                log_domain = true;
                if f.iter().chain(&g).any(|v| !v.is_finite()) {
                    f.iter_mut()
                        .chain(g.iter_mut())
                        .for_each(|v| *v = T::zero());
                }
            }
        }
        if log_domain {
            let budget = opts.max_iters.saturating_sub(iterations);
            let cold = warm.is_none() && iterations == 0;
            let out = self.log_domain(p.mass(), q.mass(), &mut f, &mut g, budget, cold, &mut ws);
            converged = out.converged;
            iterations += out.iterations;
        }

        let shift = f.iter().copied().sum::<T>() / T::from_usize_lossy(n);
        f.iter_mut().for_each(|v| *v = *v - shift);
        g.iter_mut().for_each(|v| *v = *v + shift);

        let potentials = DualPotentials {
            f,
            g,
            epsilon: eps,
            converged,
            iterations,
            log_domain,
        };
        Ok(self.evaluate(p.mass(), q.mass(), potentials, &mut ws))
    }

    /// Self-transport `W_eps(q, q)`: the symmetric potential `h` (with
    /// `f = g = h`) by the averaged fixed-point iteration
    /// `h <- (h + eps ln q - eps LSE((h - C) / eps)) / 2`.
    pub fn solve_symmetric(
        &self,
        q: &GridMeasure<T>,
        warm: Option<&[T]>,
    ) -> Result<SymmetricResult<T>> {
        self.cost.check_measure(q)?;
        let n = q.len();
        let eps = self.cost.epsilon();
        let log_q: Vec<T> = q.mass().iter().map(|&x| safe_ln(x)).collect();
        let mut s: Vec<T> = match warm {
            Some(h) if h.len() == n => h.iter().map(|&v| v / eps).collect(),
            _ => log_q.iter().map(|&l| l * T::lit(0.5)).collect(),
        };
        let mut ws = Workspace::new(n);
        let half = T::lit(0.5);
        let (mut converged, mut iterations) = (false, 0);
        while iterations <= self.options.max_iters {
            self.kernel.log_apply(&s, &mut ws.a, &mut ws.scratch);
            let err: T = (0..n)
                .map(|i| ((s[i] + ws.a[i]).exp() - q.mass()[i]).abs())
                .sum();
            if err < self.options.tol {
                converged = true;
                break;
            }
            if iterations == self.options.max_iters {
                break;
            }
            for i in 0..n {
                s[i] = half * (s[i] + log_q[i] - ws.a[i]);
            }
            iterations += 1;
        }
        let h: Vec<T> = s.iter().map(|&v| v * eps).collect();
        // dual value <h, q> + <h, q> - eps * mass(P), mass(P) = 1 at the optimum
        let mass: T = (0..n).map(|i| (s[i] + ws.a[i]).exp()).sum();
        let value = T::lit(2.0) * dot(&h, q.mass()) - eps * mass;
        Ok(SymmetricResult {
            h,
            value,
            converged,
            iterations,
        })
    }

    fn standard(
        &self,
        p: &[T],
        q: &[T],
        f: &mut [T],
        g: &mut [T],
        max_iters: usize,
        ws: &mut Workspace<T>,
    ) -> LoopOutcome {
        let eps = self.kernel.epsilon();
        let tol = self.options.tol;
        let limit = T::lit(SCALING_LIMIT);
        let mut u: Vec<T> = f.iter().map(|&x| (x / eps).exp()).collect();
        let mut v: Vec<T> = g.iter().map(|&x| (x / eps).exp()).collect();
        let in_range = |s: &[T]| {
            s.iter()
                .all(|&x| x.is_finite() && x <= limit && x * limit >= T::one())
        };
        let mut outcome = LoopOutcome::default();
        if !in_range(&u) || !in_range(&v) {
            outcome.overflowed = true;
            return outcome;
        }
        for it in 0..=max_iters {
            self.kernel.apply(&v, &mut ws.a, &mut ws.scratch);
            if it > 0 {
                let err: T = u
                    .iter()
                    .zip(&ws.a)
                    .zip(p)
                    .map(|((&ui, &kv), &pi)| (ui * kv - pi).abs())
                    .sum();
                if err < tol {
                    outcome.converged = true;
                    break;
                }
            }
            if it == max_iters {
                break;
            }
            for i in 0..u.len() {
                u[i] = p[i] / ws.a[i];
            }
            self.kernel.apply(&u, &mut ws.b, &mut ws.scratch);
            for j in 0..v.len() {
                v[j] = q[j] / ws.b[j];
            }
            outcome.iterations = it + 1;
            if !in_range(&u) || !in_range(&v) {
                outcome.overflowed = true;
                return outcome;
            }
            // keep the last in-range scalings as potentials
            for i in 0..u.len() {
                f[i] = eps * u[i].ln();
                g[i] = eps * v[i].ln();
            }
        }
        outcome
    }

    #[allow(clippy::too_many_arguments)]
    fn log_domain(
        &self,
        p: &[T],
        q: &[T],
        f: &mut [T],
        g: &mut [T],
        max_iters: usize,
        cold: bool,
        ws: &mut Workspace<T>,
    ) -> LoopOutcome {
        let log_p: Vec<T> = p.iter().map(|&x| safe_ln(x)).collect();
        let log_q: Vec<T> = q.iter().map(|&x| safe_ln(x)).collect();
        let mut outcome = LoopOutcome::default();

        // Cold starts anneal epsilon down from the cost scale.
        if cold {
            let mut stage_eps = self.kernel.epsilon();
            let mut stages = Vec::new();
            while stage_eps < T::one() {
                stage_eps = stage_eps * T::lit(4.0);
                stages.push(stage_eps);
            }
            let stage_tol = self.options.tol.max(T::lit(1e-3));
            for &stage in stages.iter().rev() {
                let kernel = GibbsKernel::new(
                    &self
                        .cost
                        .with_epsilon(stage)
                        .expect("positive annealing epsilon"),
                );
                let budget = 50.min(max_iters.saturating_sub(outcome.iterations));
                let out = log_loop(&kernel, p, &log_p, &log_q, f, g, budget, stage_tol, ws);
                outcome.iterations += out.iterations;
            }
        }
        let budget = max_iters.saturating_sub(outcome.iterations);
        let out = log_loop(
            &self.kernel,
            p,
            &log_p,
            &log_q,
            f,
            g,
            budget,
            self.options.tol,
            ws,
        );
        outcome.iterations += out.iterations;
        outcome.converged = out.converged;
        outcome
    }

    fn evaluate(
        &self,
        p: &[T],
        q: &[T],
        potentials: DualPotentials<T>,
        ws: &mut Workspace<T>,
    ) -> TransportResult<T> {
        let eps = potentials.epsilon;
        let n = p.len();
        let fx: Vec<T> = potentials.f.iter().map(|&v| v / eps).collect();
        let gx: Vec<T> = potentials.g.iter().map(|&v| v / eps).collect();

        // log row and column sums of the plan
        self.kernel.log_apply(&gx, &mut ws.a, &mut ws.scratch);
        let row: Vec<T> = (0..n).map(|i| (fx[i] + ws.a[i]).exp()).collect();
        self.kernel.log_apply(&fx, &mut ws.b, &mut ws.scratch);
        let col: Vec<T> = (0..n).map(|j| (gx[j] + ws.b[j]).exp()).collect();

        let mut weighted = vec![T::zero(); n];
        self.kernel.log_apply_cost_weighted(&gx, &mut weighted);
        let sharp: T = (0..n).map(|i| (fx[i] + weighted[i]).exp()).sum();
        let total: T = row.iter().copied().sum();

        let entropic = dot(&potentials.f, &row) + dot(&potentials.g, &col) - eps * total;
        let log_p: Vec<T> = p.iter().map(|&x| safe_ln(x)).collect();
        let log_q: Vec<T> = q.iter().map(|&x| safe_ln(x)).collect();
        // eps * sum P ln P = <f, row> + <g, col> - <P, C>
        let plogp = dot(&potentials.f, &row) + dot(&potentials.g, &col) - sharp;
        let kl = plogp - eps * (dot(&row, &log_p) + dot(&col, &log_q)) - eps * total + eps;
        let regularized = sharp + kl;

        let row_err = row.iter().zip(p).map(|(&a, &b)| (a - b).abs()).sum();
        let col_err = col.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum();
        TransportResult {
            cost: sharp.max(T::zero()),
            regularized,
            entropic,
            marginal_error: (row_err, col_err),
            potentials,
        }
    }
}

/// Outcome of [`TransportSolver::solve_symmetric`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricResult<T> {
    pub h: Vec<T>,
    /// Entropic objective `W_eps(q, q)`.
    pub value: T,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Default, Clone, Copy)]
struct LoopOutcome {
    converged: bool,
    iterations: usize,
    overflowed: bool,
}

#[allow(clippy::too_many_arguments)]
fn log_loop<T: Scalar>(
    kernel: &GibbsKernel<T>,
    p: &[T],
    log_p: &[T],
    log_q: &[T],
    f: &mut [T],
    g: &mut [T],
    max_iters: usize,
    tol: T,
    ws: &mut Workspace<T>,
) -> LoopOutcome {
    let eps = kernel.epsilon();
    let n = p.len();
    let mut x = vec![T::zero(); n];
    let mut outcome = LoopOutcome::default();
    for it in 0..=max_iters {
        for j in 0..n {
            x[j] = g[j] / eps;
        }
        kernel.log_apply(&x, &mut ws.a, &mut ws.scratch);
        if it > 0 {
            let err: T = (0..n)
                .map(|i| ((f[i] / eps + ws.a[i]).exp() - p[i]).abs())
                .sum();
            if err < tol {
                outcome.converged = true;
                break;
            }
        }
        if it == max_iters {
            break;
        }
        for i in 0..n {
            f[i] = eps * (log_p[i] - ws.a[i]);
            x[i] = f[i] / eps;
        }
        kernel.log_apply(&x, &mut ws.b, &mut ws.scratch);
        for j in 0..n {
            g[j] = eps * (log_q[j] - ws.b[j]);
        }
        outcome.iterations = it + 1;
    }
    outcome
}

/// Sinkhorn with the default (automatic) domain selection.
pub fn sinkhorn<T: Scalar>(
    p: &GridMeasure<T>,
    q: &GridMeasure<T>,
    cost: &GroundCost<T>,
    max_iters: usize,
    tol: T,
) -> Result<TransportResult<T>> {
    TransportSolver::new(*cost, SinkhornOptions::new(max_iters, tol))?.solve(p, q, None)
}

/// Gradient of the entropic cost with respect to its second marginal: the
/// potential `g` centered by its `q`-weighted mean.
pub fn barycentric_displacement<T: Scalar>(
    potentials: &DualPotentials<T>,
    q: &GridMeasure<T>,
) -> Result<Vec<T>> {
    if !potentials.converged {
        return Err(Error::NotConverged);
    }
    if potentials.g.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: q.len(),
            actual: potentials.g.len(),
        });
    }
    Ok(centered(&potentials.g, q.mass()))
}

pub(crate) fn centered<T: Scalar>(g: &[T], weights: &[T]) -> Vec<T> {
    let mean = dot(g, weights) / weights.iter().copied().sum::<T>();
    g.iter().map(|&v| v - mean).collect()
}
