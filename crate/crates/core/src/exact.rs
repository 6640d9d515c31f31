//! Exact discrete optimal transport by the transportation simplex method.
//!
//! Meant as a test oracle for small grids. The basis is kept as a spanning tree
//! over row and column nodes; entering cells are chosen by Dantzig's rule and the
//! solver switches to Bland's rule after a run of degenerate pivots.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::measure::{GridMeasure, GroundCost};
use crate::scalar::Scalar;

/// Largest grid (in pixels) the exact solver accepts.
pub const EXACT_LIMIT: usize = 256;

/// Optimal value of the unregularized transport problem between `p` and `q`
/// under the squared ground cost.
pub fn exact_lp_transport<T: Scalar>(
    p: &GridMeasure<T>,
    q: &GridMeasure<T>,
    cost: &GroundCost<T>,
) -> Result<T> {
    cost.check_measure(p)?;
    cost.check_measure(q)?;
    let n = p.len();
    if n > EXACT_LIMIT {
        return Err(Error::InstanceTooLarge {
            n,
            limit: EXACT_LIMIT,
        });
    }
    let mut c = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            c.push(cost.cost_between(i, j)?);
        }
    }
    Ok(transportation_simplex(p.mass(), q.mass(), &c).value)
}

#[derive(Debug, Clone)]
pub(crate) struct TransportPlan<T> {
    pub value: T,
    /// Basic cells `(row, col, flow)`.
    #[allow(dead_code)]
    pub cells: Vec<(usize, usize, T)>,
}

/// Solves `min <X, C>` over couplings of `supply` and `demand` (dense row-major
/// `cost`). Both marginals must carry the same total up to rounding; the
/// residual is absorbed by the last demand.
pub(crate) fn transportation_simplex<T: Scalar>(
    supply: &[T],
    demand: &[T],
    cost: &[T],
) -> TransportPlan<T> {
    let m = supply.len();
    let n = demand.len();
    let mut demand = demand.to_vec();
    let total_s: T = supply.iter().copied().sum();
    let total_d: T = demand.iter().copied().sum();
    demand[n - 1] = (demand[n - 1] + total_s - total_d).max(T::zero());

    // northwest corner start; keeps exactly m + n - 1 basic cells
    let mut basis: Vec<(usize, usize, T)> = Vec::with_capacity(m + n - 1);
    {
        let mut s = supply.to_vec();
        let mut d = demand.clone();
        let (mut i, mut j) = (0, 0);
        while i < m && j < n {
            let x = s[i].min(d[j]);
            basis.push((i, j, x));
            s[i] = s[i] - x;
            d[j] = d[j] - x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if (s[i] <= d[j] && i < m - 1) || j == n - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let cmax = cost.iter().copied().fold(T::zero(), |a, b| a.max(b.abs()));
    let tol = T::epsilon() * T::lit(64.0) * cmax.max(T::one());
    let max_pivots = 50 * (m + n) * (m + n) + 1000;
    let mut degenerate_run = 0usize;
    let mut is_basic = vec![false; m * n];
    for &(i, j, _) in &basis {
        is_basic[i * n + j] = true;
    }

    for _ in 0..max_pivots {
        let (u, v) = potentials(m, n, &basis, cost);
        let bland = degenerate_run > m + n;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -tol;
        'scan: for i in 0..m {
            for j in 0..n {
                if is_basic[i * n + j] {
                    continue;
                }
                let rc = cost[i * n + j] - u[i] - v[j];
                if rc < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = rc;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        // cycle: entering cell + tree path from column node ej back to row node ei
        let path = tree_path(m, n, &basis, ei, ej);
        // path lists basis indices alternating sign starting with "-"
        let mut theta = T::infinity();
        let mut leave = usize::MAX;
        for (k, &b) in path.iter().enumerate() {
            if k % 2 == 0 {
                let x = basis[b].2;
                if x < theta || (x == theta && b < leave) {
                    theta = x;
                    leave = b;
                }
            }
        }
        for (k, &b) in path.iter().enumerate() {
            let x = &mut basis[b].2;
            *x = if k % 2 == 0 { *x - theta } else { *x + theta };
        }
        degenerate_run = if theta > T::zero() {
            0
        } else {
            degenerate_run + 1
        };
        let (li, lj, _) = basis[leave];
        is_basic[li * n + lj] = false;
        is_basic[ei * n + ej] = true;
        basis[leave] = (ei, ej, theta);
    }

    let value = basis
        .iter()
        .map(|&(i, j, x)| x.max(T::zero()) * cost[i * n + j])
        .sum();
    TransportPlan {
        value,
        cells: basis,
    }
}

/// Row and column duals with `u_i + v_j = c_ij` on every basic cell, `u_0 = 0`.
fn potentials<T: Scalar>(
    m: usize,
    n: usize,
    basis: &[(usize, usize, T)],
    cost: &[T],
) -> (Vec<T>, Vec<T>) {
    let adj = adjacency(m, n, basis);
    let mut u = vec![T::nan(); m];
    let mut v = vec![T::nan(); n];
    let mut seen = vec![false; m + n];
    let mut queue = VecDeque::new();
    // the basis is a spanning tree, so a single root reaches every node
    u[0] = T::zero();
    seen[0] = true;
    queue.push_back(0);
    while let Some(node) = queue.pop_front() {
        for &b in &adj[node] {
            let (i, j, _) = basis[b];
            let c = cost[i * n + j];
            let other = if node < m { m + j } else { i };
            if seen[other] {
                continue;
            }
            seen[other] = true;
            if node < m {
                v[j] = c - u[i];
            } else {
                u[i] = c - v[j];
            }
            queue.push_back(other);
        }
    }
    (u, v)
}

fn adjacency<T>(m: usize, n: usize, basis: &[(usize, usize, T)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); m + n];
    for (b, &(i, j, _)) in basis.iter().enumerate() {
        adj[i].push(b);
        adj[m + j].push(b);
    }
    adj
}

/// Basis cells on the tree path from column node `col` to row node `row`.
fn tree_path<T>(
    m: usize,
    n: usize,
    basis: &[(usize, usize, T)],
    row: usize,
    col: usize,
) -> Vec<usize> {
    let adj = adjacency(m, n, basis);
    let start = m + col;
    let mut via = vec![usize::MAX; m + n];
    let mut seen = vec![false; m + n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(node) = queue.pop_front() {
        if node == row {
            break;
        }
        for &b in &adj[node] {
            let (i, j, _) = basis[b];
            let other = if node < m { m + j } else { i };
            if !seen[other] {
                seen[other] = true;
                via[other] = b;
                queue.push_back(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = row;
    while node != start {
        let b = via[node];
        path.push(b);
        let (i, j, _) = basis[b];
        node = if node < m { m + j } else { i };
    }
    // walked from the row back to the column: first cell shares the entering
    // row and must lose flow
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{normalize_to_measure, GridShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(vals: &[f64]) -> GridMeasure<f64> {
        GridMeasure::new(GridShape::new(1, vals.len()).unwrap(), vals.to_vec()).unwrap()
    }

    #[test]
    fn identical_measures_cost_zero() {
        let shape = GridShape::new(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let px: Vec<f64> = (0..9).map(|_| rng.random()).collect();
        let p = normalize_to_measure(&px, shape).unwrap();
        let cost = GroundCost::new(shape, 1.0).unwrap();
        assert_eq!(exact_lp_transport(&p, &p, &cost).unwrap(), 0.0);
    }

    #[test]
    fn single_move_end_to_end() {
        let cost = GroundCost::new(GridShape::new(1, 3).unwrap(), 1.0).unwrap();
        let v =
            exact_lp_transport(&line(&[1.0, 0.0, 0.0]), &line(&[0.0, 0.0, 1.0]), &cost).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn half_shift_example() {
        let cost = GroundCost::new(GridShape::new(1, 3).unwrap(), 1.0).unwrap();
        let v =
            exact_lp_transport(&line(&[0.5, 0.5, 0.0]), &line(&[0.0, 0.5, 0.5]), &cost).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_large_instances() {
        let shape = GridShape::new(17, 17).unwrap();
        let p = GridMeasure::<f64>::uniform(shape);
        let cost = GroundCost::new(shape, 1.0).unwrap();
        assert!(matches!(
            exact_lp_transport(&p, &p, &cost),
            Err(Error::InstanceTooLarge { n: 289, .. })
        ));
    }

    /// Enumerates every vertex of a small transport polytope by brute force:
    /// choose the basis support among all cell subsets of size m + n - 1.
    fn brute_force(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        let (m, n) = (a.len(), b.len());
        let cells = m * n;
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << cells) {
            if mask.count_ones() as usize != m + n - 1 {
                continue;
            }
            // solve the support system by repeated leaf elimination
            let mut s = a.to_vec();
            let mut d = b.to_vec();
            let mut active: Vec<usize> = (0..cells).filter(|k| mask >> k & 1 == 1).collect();
            let mut x = vec![0.0; cells];
            let mut ok = true;
            while !active.is_empty() {
                let leaf = active.iter().position(|&k| {
                    let (i, j) = (k / n, k % n);
                    active.iter().filter(|&&o| o / n == i).count() == 1
                        || active.iter().filter(|&&o| o % n == j).count() == 1
                });
                let Some(pos) = leaf else {
                    ok = false;
                    break;
                };
                let k = active.remove(pos);
                let (i, j) = (k / n, k % n);
                let row_leaf = active.iter().all(|&o| o / n != i);
                let val = if row_leaf { s[i] } else { d[j] };
                x[k] = val;
                s[i] -= val;
                d[j] -= val;
            }
            if !ok || x.iter().any(|&v| v < -1e-12) || s.iter().chain(&d).any(|v| v.abs() > 1e-9) {
                continue;
            }
            best = best.min((0..cells).map(|k| x[k] * c[k]).sum());
        }
        best
    }

    #[test]
    fn matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let shape = GridShape::new(1, 3).unwrap();
            let a = normalize_to_measure(&[rng.random(), rng.random(), rng.random::<f64>()], shape)
                .unwrap();
            let b = normalize_to_measure(&[rng.random(), rng.random(), rng.random::<f64>()], shape)
                .unwrap();
            let cost = GroundCost::new(shape, 1.0).unwrap();
            let c: Vec<f64> = (0..9)
                .map(|k| cost.cost_between(k / 3, k % 3).unwrap())
                .collect();
            let want = brute_force(a.mass(), b.mass(), &c);
            let got = exact_lp_transport(&a, &b, &cost).unwrap();
            assert!((want - got).abs() < 1e-12, "{want} vs {got}");
        }
        // 2x2 grid: 16 cells, subsets of size 7
        for _ in 0..10 {
            let shape = GridShape::new(2, 2).unwrap();
            let mk = |rng: &mut ChaCha8Rng| {
                let px: Vec<f64> = (0..4).map(|_| rng.random()).collect();
                normalize_to_measure(&px, shape).unwrap()
            };
            let (a, b) = (mk(&mut rng), mk(&mut rng));
            let cost = GroundCost::new(shape, 1.0).unwrap();
            let c: Vec<f64> = (0..16)
                .map(|k| cost.cost_between(k / 4, k % 4).unwrap())
                .collect();
            let want = brute_force(a.mass(), b.mass(), &c);
            let got = exact_lp_transport(&a, &b, &cost).unwrap();
            assert!((want - got).abs() < 1e-12, "{want} vs {got}");
        }
    }

    #[test]
    fn plan_has_feasible_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 16;
        let a: Vec<f64> = {
            let v: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        };
        let b: Vec<f64> = {
            let v: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        };
        let c: Vec<f64> = (0..n * n).map(|_| rng.random()).collect();
        let plan = transportation_simplex(&a, &b, &c);
        assert_eq!(plan.cells.len(), 2 * n - 1);
        let mut rows = vec![0.0; n];
        let mut cols = vec![0.0; n];
        for &(i, j, x) in &plan.cells {
            assert!(x >= -1e-15);
            rows[i] += x;
            cols[j] += x;
        }
        for k in 0..n {
            assert!((rows[k] - a[k]).abs() < 1e-12);
            assert!((cols[k] - b[k]).abs() < 1e-12);
        }
    }
}
