//! Morphing sequences and their transition-quality metrics.

use rayon::prelude::*;

use crate::admm::{constrained_barycenter, iteration_seed, resume, AdmmConfig, AdmmState};
use crate::barycenter::BarycenterWeights;
use crate::error::{Error, Result};
use crate::measure::{GridMeasure, GroundCost};
use crate::priors::Projector;
use crate::scalar::{l2_distance, Scalar};
use crate::transport::{SinkhornOptions, TransportSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphMethod {
    Unconstrained,
    Constrained,
    /// Frames produced elsewhere and loaded for evaluation.
    ExternalInterpolation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphSequence<T> {
    pub frames: Vec<GridMeasure<T>>,
    pub alphas: Vec<T>,
    pub method: MorphMethod,
}

impl<T: Scalar> MorphSequence<T> {
    /// Wraps existing frames (endpoints included) with the uniform schedule.
    pub fn from_frames(frames: Vec<GridMeasure<T>>, method: MorphMethod) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidConfig(
                "a sequence needs at least two frames".into(),
            ));
        }
        let shape = frames[0].shape();
        for f in &frames[1..] {
            shape.check_same(&f.shape())?;
        }
        let alphas = schedule(frames.len() - 2);
        Ok(MorphSequence {
            frames,
            alphas,
            method,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn reversed(&self) -> Self {
        let mut frames = self.frames.clone();
        frames.reverse();
        let alphas = self.alphas.iter().rev().map(|&a| T::one() - a).collect();
        MorphSequence {
            frames,
            alphas,
            method: self.method,
        }
    }
}

/// `α_i = i / (N + 1)` for `i = 0..=N+1`.
pub fn schedule<T: Scalar>(n_frames: usize) -> Vec<T> {
    let denom = T::from_usize_lossy(n_frames + 1);
    (0..n_frames + 2)
        .map(|i| T::from_usize_lossy(i) / denom)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MorphOptions {
    /// Worker threads for independent frames; `None` or `Some(1)` runs
    /// sequentially.
    pub jobs: Option<usize>,
    /// Two-input morphs only: start each frame from the previous frame's
    /// final ADMM state. Forces sequential evaluation and makes frames depend
    /// on their neighbours.
    pub warm_start: bool,
}

fn method_of<T>(projector: &Projector<T>) -> MorphMethod {
    match projector {
        Projector::Identity => MorphMethod::Unconstrained,
        _ => MorphMethod::Constrained,
    }
}

fn parallel_map<R: Send>(
    count: usize,
    jobs: Option<usize>,
    f: impl Fn(usize) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    match jobs {
        Some(j) if j > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            pool.install(|| (0..count).into_par_iter().map(&f).collect())
        }
        _ => (0..count).map(f).collect(),
    }
}

/// Frame `i` gets its own projector seed so results do not depend on the
/// evaluation order.
fn frame_config<T: Scalar>(config: &AdmmConfig<T>, frame: usize) -> AdmmConfig<T> {
    AdmmConfig {
        seed: iteration_seed(config.seed ^ 0x6d6f_7270_6800_0000, frame),
        ..*config
    }
}

pub fn morph<T: Scalar>(
    x1: &GridMeasure<T>,
    x2: &GridMeasure<T>,
    n_frames: usize,
    projector: &Projector<T>,
    cost: &GroundCost<T>,
    config: &AdmmConfig<T>,
) -> Result<MorphSequence<T>> {
    morph_with(
        x1,
        x2,
        n_frames,
        projector,
        cost,
        config,
        MorphOptions::default(),
    )
}

/// Constrained barycenters at `α_i = i/(N+1)` between `x1` and `x2`; the
/// endpoints are kept as given.
pub fn morph_with<T: Scalar>(
    x1: &GridMeasure<T>,
    x2: &GridMeasure<T>,
    n_frames: usize,
    projector: &Projector<T>,
    cost: &GroundCost<T>,
    config: &AdmmConfig<T>,
    options: MorphOptions,
) -> Result<MorphSequence<T>> {
    if n_frames == 0 {
        return Err(Error::InvalidConfig("n_frames must be at least 1".into()));
    }
    cost.check_measure(x1)?;
    cost.check_measure(x2)?;
    let alphas = schedule::<T>(n_frames);
    let inputs = [x1.clone(), x2.clone()];
    let middle = if options.warm_start {
        let mut previous: Option<AdmmState<T>> = None;
        let mut out = Vec::with_capacity(n_frames);
        for i in 0..n_frames {
            let w = BarycenterWeights::pair(alphas[i + 1])?;
            let cfg = frame_config(config, i + 1);
            let (frame, state) = match previous.take() {
                None => constrained_barycenter(&inputs, &w, projector, cost, &cfg)?,
                Some(state) => {
                    let fresh = AdmmState {
                        outer_iter: 0,
                        residual_history: Vec::new(),
                        converged: false,
                        transport_converged: true,
                        ..state
                    };
                    let budget = cfg.fixed_iters.unwrap_or(cfg.max_outer_iters);
                    resume(fresh, &inputs, &w, projector, cost, &cfg, budget)?
                }
            };
            if !state.transport_converged {
                log::warn!("frame {}: some transport solves did not converge", i + 1);
            }
            previous = Some(state);
            out.push(frame);
        }
        out
    } else {
        parallel_map(n_frames, options.jobs, |i| {
            let w = BarycenterWeights::pair(alphas[i + 1])?;
            let cfg = frame_config(config, i + 1);
            let (frame, state) = constrained_barycenter(&inputs, &w, projector, cost, &cfg)?;
            if !state.transport_converged {
                log::warn!("frame {}: some transport solves did not converge", i + 1);
            }
            Ok(frame)
        })?
    };
    let mut frames = Vec::with_capacity(n_frames + 2);
    frames.push(x1.clone());
    frames.extend(middle);
    frames.push(x2.clone());
    Ok(MorphSequence {
        frames,
        alphas,
        method: method_of(projector),
    })
}

/// Bilinear weights `((1−a)(1−b), a(1−b), (1−a)b, ab)` on a
/// `grid_steps × grid_steps` lattice; `result[i][j]` sits at
/// `b = i/(g−1)`, `a = j/(g−1)`. Lattice corners are the inputs themselves.
pub fn morph4<T: Scalar>(
    corners: &[GridMeasure<T>; 4],
    grid_steps: usize,
    projector: &Projector<T>,
    cost: &GroundCost<T>,
    config: &AdmmConfig<T>,
    options: MorphOptions,
) -> Result<Vec<Vec<GridMeasure<T>>>> {
    if grid_steps < 2 {
        return Err(Error::InvalidConfig("grid_steps must be at least 2".into()));
    }
    for c in corners {
        cost.check_measure(c)?;
    }
    let g = grid_steps;
    let last = T::from_usize_lossy(g - 1);
    let cells = parallel_map(g * g, options.jobs, |cell| {
        let (i, j) = (cell / g, cell % g);
        let corner = match (i, j) {
            (0, 0) => Some(0),
            (0, c) if c == g - 1 => Some(1),
            (r, 0) if r == g - 1 => Some(2),
            (r, c) if r == g - 1 && c == g - 1 => Some(3),
            _ => None,
        };
        if let Some(k) = corner {
            return Ok(corners[k].clone());
        }
        let a = T::from_usize_lossy(j) / last;
        let b = T::from_usize_lossy(i) / last;
        let w = BarycenterWeights::bilinear(a, b)?;
        let cfg = frame_config(config, cell);
        Ok(constrained_barycenter(corners, &w, projector, cost, &cfg)?.0)
    })?;
    let mut rows = Vec::with_capacity(g);
    let mut it = cells.into_iter();
    for _ in 0..g {
        rows.push(it.by_ref().take(g).collect());
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionReport<T> {
    /// Population standard deviation of the per-step distances.
    pub regularity: T,
    /// Mean per-step distance.
    pub total_distance: T,
    /// Mean `‖y − proj(y)‖₂` over all frames.
    pub manifold_distance: T,
    pub per_step_distances: Vec<T>,
    pub transport_converged: bool,
}

impl<T: Scalar> TransitionReport<T> {
    /// Builds the summary statistics from the per-step distances.
    pub fn from_steps(steps: Vec<T>, manifold_distance: T, transport_converged: bool) -> Self {
        let (total_distance, regularity) = mean_and_std(&steps);
        TransitionReport {
            regularity,
            total_distance,
            manifold_distance,
            per_step_distances: steps,
            transport_converged,
        }
    }
}

/// Mean and population standard deviation. Deviations are taken from the
/// first value so a constant list gives exactly zero spread.
pub fn mean_and_std<T: Scalar>(values: &[T]) -> (T, T) {
    if values.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let pivot = values[0];
    let shifted_mean = values.iter().map(|&v| v - pivot).sum::<T>() / n;
    let var = values
        .iter()
        .map(|&v| {
            let d = v - pivot - shifted_mean;
            d * d
        })
        .sum::<T>()
        / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluateOptions<T> {
    pub sinkhorn: SinkhornOptions<T>,
    /// Seed for stochastic projectors (frame `i` uses a seed derived from it).
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl<T: Scalar> Default for EvaluateOptions<T> {
    fn default() -> Self {
        EvaluateOptions {
            sinkhorn: SinkhornOptions::default(),
            seed: 0,
            jobs: None,
        }
    }
}

pub fn evaluate<T: Scalar>(
    seq: &MorphSequence<T>,
    cost: &GroundCost<T>,
    projector: &Projector<T>,
) -> Result<TransitionReport<T>> {
    evaluate_with(seq, cost, projector, &EvaluateOptions::default())
}

/// Regularity, total distance and distance to the manifold of a sequence.
pub fn evaluate_with<T: Scalar>(
    seq: &MorphSequence<T>,
    cost: &GroundCost<T>,
    projector: &Projector<T>,
    options: &EvaluateOptions<T>,
) -> Result<TransitionReport<T>> {
    if seq.frames.len() < 2 {
        return Err(Error::InvalidConfig(
            "a sequence needs at least two frames".into(),
        ));
    }
    for f in &seq.frames {
        cost.check_measure(f)?;
    }
    let solver = TransportSolver::new(*cost, options.sinkhorn)?;
    let frames = &seq.frames;
    let steps = parallel_map(frames.len() - 1, options.jobs, |i| {
        // a fixed argument order makes the distance exactly symmetric
        let (a, b) = canonical_pair(&frames[i], &frames[i + 1]);
        let r = solver.solve(a, b, None)?;
        Ok((r.cost.max(T::zero()).sqrt(), r.potentials.converged))
    })?;
    let residuals = parallel_map(frames.len(), options.jobs, |i| {
        let y = frames[i].mass();
        let p = projector.project(y, iteration_seed(options.seed, i))?;
        Ok(l2_distance(y, &p))
    })?;
    let converged = steps.iter().all(|s| s.1);
    if !converged {
        log::warn!("some per-step transport solves did not converge");
    }
    let manifold = residuals.iter().copied().sum::<T>() / T::from_usize_lossy(residuals.len());
    Ok(TransitionReport::from_steps(
        steps.into_iter().map(|s| s.0).collect(),
        manifold,
        converged,
    ))
}

fn canonical_pair<'a, T: Scalar>(
    a: &'a GridMeasure<T>,
    b: &'a GridMeasure<T>,
) -> (&'a GridMeasure<T>, &'a GridMeasure<T>) {
    for (x, y) in a.mass().iter().zip(b.mass()) {
        if x < y {
            return (a, b);
        }
        if x > y {
            return (b, a);
        }
    }
    (a, b)
}
