use otmorph::barycenter::{
    barycenter_objective, prox_barycenter_step_with, BarycenterOptions, ProxOptions,
};
use otmorph::transport::SinkhornOptions;
use otmorph::{
    entropic_barycenter, exact_lp_transport, normalize_to_measure, prox_barycenter_step,
    BarycenterWeights, GridMeasure, GridShape, GroundCost, ProxTerm,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 2e-3;

fn random_measure(shape: GridShape, rng: &mut ChaCha8Rng) -> GridMeasure<f64> {
    let px: Vec<f64> = (0..shape.len()).map(|_| rng.random::<f64>()).collect();
    normalize_to_measure(&px, shape).unwrap()
}

fn blob(shape: GridShape, center: (f64, f64), sigma: f64) -> GridMeasure<f64> {
    let px: Vec<f64> = (0..shape.len())
        .map(|i| {
            let (r, c) = shape.coords(i);
            let d2 = (r as f64 - center.0).powi(2) + (c as f64 - center.1).powi(2);
            (-d2 / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    normalize_to_measure(&px, shape).unwrap()
}

/// Minimizer over Dirac candidates of `(1-a) W(p1, d_c) + a W(p2, d_c)`, using
/// the exact solver for every term.
fn dirac_grid_search(p1: &GridMeasure<f64>, p2: &GridMeasure<f64>, alpha: f64) -> usize {
    let cost = GroundCost::new(p1.shape(), 1.0).unwrap();
    (0..p1.len())
        .map(|c| {
            let d = GridMeasure::dirac(p1.shape(), c).unwrap();
            let v = (1.0 - alpha) * exact_lp_transport(p1, &d, &cost).unwrap()
                + alpha * exact_lp_transport(p2, &d, &cost).unwrap();
            (c, v)
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap()
        .0
}

#[test]
fn single_input_is_recovered_up_to_blur() {
    let shape = GridShape::new(16, 16).unwrap();
    let p = blob(shape, (7.0, 8.5), 3.0);
    let cost = GroundCost::new(shape, EPS).unwrap();
    let w = BarycenterWeights::new(vec![1.0]).unwrap();
    let q = entropic_barycenter(std::slice::from_ref(&p), &w, &cost, 10_000, 1e-9).unwrap();
    assert!(q.total_variation(&p) <= 0.05, "{}", q.total_variation(&p));
}

#[test]
fn identical_inputs_give_the_input() {
    let shape = GridShape::new(16, 16).unwrap();
    let p = blob(shape, (6.0, 9.0), 3.0);
    let cost = GroundCost::new(shape, EPS).unwrap();
    let w = BarycenterWeights::pair(0.5).unwrap();
    let q = entropic_barycenter(&[p.clone(), p.clone()], &w, &cost, 10_000, 1e-9).unwrap();
    assert!(q.total_variation(&p) <= 0.05);
}

#[test]
fn dirac_midpoint() {
    let shape = GridShape::new(1, 17).unwrap();
    let p1 = GridMeasure::dirac(shape, 2).unwrap();
    let p2 = GridMeasure::dirac(shape, 14).unwrap();
    let cost = GroundCost::new(shape, EPS).unwrap();
    for (alpha, expect) in [(0.25, 5usize), (0.5, 8), (0.75, 11)] {
        assert_eq!(dirac_grid_search(&p1, &p2, alpha), expect);
        let w = BarycenterWeights::pair(alpha).unwrap();
        let q = entropic_barycenter(&[p1.clone(), p2.clone()], &w, &cost, 10_000, 1e-9).unwrap();
        let (_, col) = q.mean_position();
        assert!((col - expect as f64).abs() <= 0.5, "alpha {alpha}: {col}");
    }
}

#[test]
fn permutation_equivariance() {
    let shape = GridShape::new(8, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cost = GroundCost::new(shape, EPS).unwrap();
    for _ in 0..3 {
        let inputs: Vec<_> = (0..3).map(|_| random_measure(shape, &mut rng)).collect();
        let w = vec![0.2, 0.5, 0.3];
        let a = entropic_barycenter(
            &inputs,
            &BarycenterWeights::new(w.clone()).unwrap(),
            &cost,
            10_000,
            1e-10,
        )
        .unwrap();
        let perm = [2usize, 0, 1];
        let pin: Vec<_> = perm.iter().map(|&k| inputs[k].clone()).collect();
        let pw: Vec<f64> = perm.iter().map(|&k| w[k]).collect();
        let b = entropic_barycenter(
            &pin,
            &BarycenterWeights::new(pw).unwrap(),
            &cost,
            10_000,
            1e-10,
        )
        .unwrap();
        for (x, y) in a.mass().iter().zip(b.mass()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn translation_interpolates_linearly() {
    let shape = GridShape::new(1, 32).unwrap();
    let p1 = blob(shape, (0.0, 8.0), 1.5);
    let p2 = blob(shape, (0.0, 22.0), 1.5);
    let cost = GroundCost::new(shape, EPS).unwrap();
    let start = p1.mean_position().1;
    let end = p2.mean_position().1;
    for alpha in [0.25, 0.5, 0.75] {
        let w = BarycenterWeights::pair(alpha).unwrap();
        let q = entropic_barycenter(&[p1.clone(), p2.clone()], &w, &cost, 10_000, 1e-9).unwrap();
        let want = (1.0 - alpha) * start + alpha * end;
        assert!((q.mean_position().1 - want).abs() < 0.5);
    }
}

#[test]
fn prox_without_penalty_matches_bregman_solver() {
    let shape = GridShape::new(1, 16).unwrap();
    let cost = GroundCost::new(shape, EPS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sink = SinkhornOptions::new(50_000, 1e-10);
    for _ in 0..20 {
        let inputs = vec![
            random_measure(shape, &mut rng),
            random_measure(shape, &mut rng),
        ];
        let w = BarycenterWeights::pair(rng.random_range(0.1..0.9)).unwrap();
        let ibp = entropic_barycenter(&inputs, &w, &cost, 50_000, 1e-11).unwrap();
        let opts = ProxOptions {
            sinkhorn: sink,
            ..ProxOptions::default()
        };
        let md =
            prox_barycenter_step_with(&inputs, &w, &ProxTerm::none(16), &cost, &opts, None, &[])
                .unwrap();
        assert!(
            md.measure.total_variation(&ibp) < 0.02,
            "tv {}",
            md.measure.total_variation(&ibp)
        );
        let a = barycenter_objective(&inputs, &w, &ibp, &cost, sink, true).unwrap();
        let b = barycenter_objective(&inputs, &w, &md.measure, &cost, sink, true).unwrap();
        assert!((a - b).abs() <= 0.01 * a.abs(), "{a} vs {b}");
    }
}

#[test]
fn dominant_penalty_pins_the_target() {
    let shape = GridShape::new(1, 16).unwrap();
    let cost = GroundCost::new(shape, EPS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let inputs = vec![
        random_measure(shape, &mut rng),
        random_measure(shape, &mut rng),
    ];
    let target = random_measure(shape, &mut rng);
    let w = BarycenterWeights::pair(0.5).unwrap();
    let prox = ProxTerm::new(target.mass().to_vec(), 1e6).unwrap();
    let q = prox_barycenter_step(&inputs, &w, &prox, &cost, 300, 1.0).unwrap();
    assert!(
        q.total_variation(&target) < 1e-3,
        "{}",
        q.total_variation(&target)
    );
}

#[test]
fn accepted_objectives_never_increase() {
    let shape = GridShape::new(6, 6).unwrap();
    let cost = GroundCost::new(shape, EPS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for mu in [0.0, 0.05, 10.0] {
        let inputs = vec![
            random_measure(shape, &mut rng),
            random_measure(shape, &mut rng),
        ];
        let target = random_measure(shape, &mut rng);
        let w = BarycenterWeights::pair(0.3).unwrap();
        let prox = ProxTerm::new(target.mass().to_vec(), mu).unwrap();
        let opts = ProxOptions {
            inner_iters: 50,
            ..ProxOptions::default()
        };
        let r = prox_barycenter_step_with(&inputs, &w, &prox, &cost, &opts, None, &[]).unwrap();
        for pair in r.objective_history.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }
}

#[test]
fn default_options_are_wired() {
    let o = BarycenterOptions::<f64>::default();
    assert_eq!(o.max_iters, 10_000);
    let p = ProxOptions::<f64>::default();
    assert_eq!(p.inner_iters, 300);
    assert_eq!(p.step, 1.0);
}

fn variance(q: &GridMeasure<f64>) -> f64 {
    let (mr, mc) = q.mean_position();
    q.mass()
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let (r, c) = q.shape().coords(i);
            m * ((r as f64 - mr).powi(2) + (c as f64 - mc).powi(2))
        })
        .sum()
}

#[test]
fn plain_bregman_blurs_and_debiasing_removes_it() {
    let shape = GridShape::new(16, 16).unwrap();
    let p = blob(shape, (7.0, 8.0), 1.2);
    let cost = GroundCost::new(shape, EPS).unwrap();
    let w = BarycenterWeights::pair(0.5).unwrap();
    let inputs = [p.clone(), p.clone()];
    let run = |debias| {
        let opts = BarycenterOptions {
            tol: 1e-10,
            debias,
            ..Default::default()
        };
        otmorph::barycenter::entropic_barycenter_with(&inputs, &w, &cost, &opts)
            .unwrap()
            .measure
    };
    let plain = run(false);
    let debiased = run(true);
    assert!(variance(&plain) > variance(&p) + 0.05);
    assert!((variance(&debiased) - variance(&p)).abs() < 0.01);
    assert!(debiased.total_variation(&p) < 0.1 * plain.total_variation(&p));
    let (r, c) = plain.mean_position();
    assert!((r - 7.0).abs() < 1e-6 && (c - 8.0).abs() < 1e-6);
}

#[test]
fn weight_endpoints_on_digits() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../data/mnist/t10k-images-idx3-ubyte"
    );
    let data = otmorph::io::load_idx(path).unwrap();
    let cost = GroundCost::new(data.shape, EPS).unwrap();
    for (i, j) in [(0, 1), (2, 3)] {
        let p1 = data.measure::<f64>(i).unwrap();
        let p2 = data.measure::<f64>(j).unwrap();
        let inputs = [p1.clone(), p2.clone()];
        for (alpha, want) in [(0.0, &p1), (1.0, &p2)] {
            let w = BarycenterWeights::pair(alpha).unwrap();
            let q = entropic_barycenter(&inputs, &w, &cost, 10_000, 1e-6).unwrap();
            assert!(
                q.total_variation(want) <= 0.05,
                "{i},{j} a={alpha}: {}",
                q.total_variation(want)
            );
        }
    }
}
