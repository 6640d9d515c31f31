use std::sync::Arc;

use otmorph::admm::iteration_seed;
use otmorph::barycenter::entropic_barycenter_with;
use otmorph::error::Error;
use otmorph::measure::resimplex;
use otmorph::priors::SparseProjector;
use otmorph::{
    constrained_barycenter, normalize_to_measure, resume, AdmmConfig, AdmmState, BarycenterWeights,
    Dictionary, GridMeasure, GridShape, GroundCost, Projector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 2e-3;

fn random_measure(shape: GridShape, rng: &mut ChaCha8Rng) -> GridMeasure<f64> {
    let px: Vec<f64> = (0..shape.len()).map(|_| rng.random::<f64>()).collect();
    normalize_to_measure(&px, shape).unwrap()
}

/// Gaussian bumps centred on every pixel: a non-negative, highly coherent
/// dictionary that is still good enough for a few-atom prior.
fn bump_dictionary(shape: GridShape, sigma: f64) -> Arc<Dictionary<f64>> {
    let columns: Vec<Vec<f64>> = (0..shape.len())
        .map(|c| {
            let (cr, cc) = shape.coords(c);
            (0..shape.len())
                .map(|i| {
                    let (r, k) = shape.coords(i);
                    let d2 = (r as f64 - cr as f64).powi(2) + (k as f64 - cc as f64).powi(2);
                    (-d2 / (2.0 * sigma * sigma)).exp()
                })
                .collect()
        })
        .collect();
    Arc::new(Dictionary::from_columns(shape.len(), &columns).unwrap())
}

fn sparse_setup() -> (Vec<GridMeasure<f64>>, Projector<f64>, GroundCost<f64>) {
    let shape = GridShape::new(8, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let inputs = vec![
        random_measure(shape, &mut rng),
        random_measure(shape, &mut rng),
    ];
    let proj = Projector::Sparse(SparseProjector::new(bump_dictionary(shape, 1.2), 3));
    (inputs, proj, GroundCost::new(shape, 0.01).unwrap())
}

fn assert_same_state(a: &AdmmState<f64>, b: &AdmmState<f64>) {
    assert_eq!(a.q, b.q);
    assert_eq!(a.r, b.r);
    assert_eq!(a.u, b.u);
    assert_eq!(a.outer_iter, b.outer_iter);
    assert_eq!(a.residual_history, b.residual_history);
    assert_eq!(a.converged, b.converged);
}

#[test]
fn identity_projector_reduces_to_the_entropic_barycenter() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = GridShape::new(10, 10).unwrap();
    let cost = GroundCost::new(shape, EPS).unwrap();
    let config = AdmmConfig::for_len(shape.len());
    let cases: Vec<(usize, BarycenterWeights<f64>)> = vec![
        (2, BarycenterWeights::pair(0.3).unwrap()),
        (2, BarycenterWeights::pair(0.5).unwrap()),
        (4, BarycenterWeights::bilinear(0.25, 0.6).unwrap()),
        (4, BarycenterWeights::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap()),
    ];
    for (k, w) in cases {
        let inputs: Vec<_> = (0..k).map(|_| random_measure(shape, &mut rng)).collect();
        let reference = entropic_barycenter_with(&inputs, &w, &cost, &config.barycenter)
            .unwrap()
            .measure;
        let (out, state) =
            constrained_barycenter(&inputs, &w, &Projector::Identity, &cost, &config).unwrap();
        assert!(state.converged);
        assert!(state.outer_iter <= 2, "{} iterations", state.outer_iter);
        assert!(out.total_variation(&reference) < 0.02);
    }
}

#[test]
fn dual_update_identity_holds_every_iteration() {
    let (inputs, proj, cost) = sparse_setup();
    let w = BarycenterWeights::pair(0.4).unwrap();
    let config = AdmmConfig {
        fixed_iters: Some(1),
        ..AdmmConfig::for_len(64)
    };
    let (_, mut state) = constrained_barycenter(&inputs, &w, &proj, &cost, &config).unwrap();
    for (u, (r, q)) in state
        .u
        .iter()
        .zip(state.r.mass().iter().zip(state.q.mass()))
    {
        assert!((u - (r - q)).abs() < 1e-15);
    }
    for _ in 0..3 {
        let before = state.u.clone();
        state = resume(state, &inputs, &w, &proj, &cost, &config, 1)
            .unwrap()
            .1;
        for (i, b) in before.iter().enumerate() {
            let want = b + state.r.mass()[i] - state.q.mass()[i];
            assert!((state.u[i] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn outputs_are_measures_whether_or_not_converged() {
    let (inputs, proj, cost) = sparse_setup();
    for (alpha, iters) in [(0.2, 1), (0.7, 4)] {
        let w = BarycenterWeights::pair(alpha).unwrap();
        let config = AdmmConfig {
            fixed_iters: Some(iters),
            ..AdmmConfig::for_len(64)
        };
        let (out, state) = constrained_barycenter(&inputs, &w, &proj, &cost, &config).unwrap();
        assert_eq!(state.residual_history.len(), state.outer_iter);
        for m in [&out, &state.q, &state.r] {
            let total: f64 = m.mass().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(m.mass().iter().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn resuming_equals_one_longer_run() {
    let (inputs, proj, cost) = sparse_setup();
    let w = BarycenterWeights::pair(0.5).unwrap();
    let config = AdmmConfig {
        fixed_iters: Some(5),
        seed: 11,
        ..AdmmConfig::for_len(64)
    };
    let short = AdmmConfig {
        fixed_iters: Some(3),
        ..config
    };
    let (_, long) = constrained_barycenter(&inputs, &w, &proj, &cost, &config).unwrap();
    let (_, first) = constrained_barycenter(&inputs, &w, &proj, &cost, &short).unwrap();
    let (out, resumed) = resume(first, &inputs, &w, &proj, &cost, &config, 2).unwrap();
    assert_same_state(&long, &resumed);
    assert_eq!(out, long.r);
}

#[test]
fn resume_without_budget_is_a_no_op() {
    let (inputs, proj, cost) = sparse_setup();
    let w = BarycenterWeights::pair(0.5).unwrap();
    let config = AdmmConfig {
        fixed_iters: Some(2),
        ..AdmmConfig::for_len(64)
    };
    let (_, state) = constrained_barycenter(&inputs, &w, &proj, &cost, &config).unwrap();
    let (out, again) = resume(state.clone(), &inputs, &w, &proj, &cost, &config, 0).unwrap();
    assert_same_state(&state, &again);
    assert_eq!(out, state.r);
}

#[test]
fn resume_after_convergence_returns_immediately() {
    let shape = GridShape::new(6, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inputs = vec![
        random_measure(shape, &mut rng),
        random_measure(shape, &mut rng),
    ];
    let cost = GroundCost::new(shape, EPS).unwrap();
    let w = BarycenterWeights::pair(0.5).unwrap();
    let config = AdmmConfig::for_len(shape.len());
    let (out, state) =
        constrained_barycenter(&inputs, &w, &Projector::Identity, &cost, &config).unwrap();
    assert!(state.converged);
    let (again, next) = resume(
        state.clone(),
        &inputs,
        &w,
        &Projector::Identity,
        &cost,
        &config,
        10,
    )
    .unwrap();
    assert_same_state(&state, &next);
    assert_eq!(out, again);
}

#[test]
fn single_pass_is_the_projected_prox_output() {
    let (inputs, proj, cost) = sparse_setup();
    let w = BarycenterWeights::pair(0.35).unwrap();
    let config = AdmmConfig {
        fixed_iters: Some(1),
        seed: 99,
        ..AdmmConfig::for_len(64)
    };
    let (out, state) = constrained_barycenter(&inputs, &w, &proj, &cost, &config).unwrap();
    let projected = proj.project(state.q.mass(), iteration_seed(99, 0)).unwrap();
    let want = resimplex(&projected, state.q.shape()).unwrap();
    assert_eq!(out, want);
}

#[test]
fn tampered_state_is_rejected() {
    let (inputs, proj, cost) = sparse_setup();
    let w = BarycenterWeights::pair(0.5).unwrap();
    let config = AdmmConfig {
        fixed_iters: Some(1),
        ..AdmmConfig::for_len(64)
    };
    let (_, state) = constrained_barycenter(&inputs, &w, &proj, &cost, &config).unwrap();

    let mut bad = state.clone();
    bad.residual_history.push(0.0);
    let err = resume(bad, &inputs, &w, &proj, &cost, &config, 1).unwrap_err();
    assert!(matches!(err, Error::InconsistentState(_)));

    let mut bad = state.clone();
    bad.u.pop();
    let err = resume(bad, &inputs, &w, &proj, &cost, &config, 1).unwrap_err();
    assert!(matches!(err, Error::InconsistentState(_)));

    let mut bad = state;
    bad.u[0] = f64::NAN;
    let err = resume(bad, &inputs, &w, &proj, &cost, &config, 1).unwrap_err();
    assert!(matches!(err, Error::InconsistentState(_)));
}

/// Residual at iteration 5 no larger than at iteration 1 on at least 90% of
/// 50 random digit pairs. Takes the better part of an hour single-threaded.
#[test]
#[ignore]
fn residual_trend_on_digits() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist");
    let train = otmorph::io::load_idx(format!("{root}/train-images-idx3-ubyte")).unwrap();
    let test = otmorph::io::load_idx(format!("{root}/t10k-images-idx3-ubyte")).unwrap();
    let samples: Vec<Vec<f64>> = (0..train.count)
        .map(|i| train.measure::<f64>(i).unwrap().into_mass())
        .collect();
    let dict = Arc::new(otmorph::learn_dictionary(&samples, 256, 12, 3, 1).unwrap());
    let proj = Projector::Sparse(SparseProjector::new(dict, 12));
    let cost = GroundCost::new(test.shape, EPS).unwrap();
    let config = AdmmConfig {
        fixed_iters: Some(5),
        ..AdmmConfig::for_len(test.shape.len())
    };
    let w = BarycenterWeights::pair(0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut improved = 0;
    for _ in 0..50 {
        let i = rng.random_range(0..test.count);
        let j = rng.random_range(0..test.count);
        let inputs = [test.measure(i).unwrap(), test.measure(j).unwrap()];
        let (_, state) = constrained_barycenter(&inputs, &w, &proj, &cost, &config).unwrap();
        let h = &state.residual_history;
        if h[4] <= h[0] {
            improved += 1;
        }
    }
    assert!(improved >= 45, "{improved}/50");
}
