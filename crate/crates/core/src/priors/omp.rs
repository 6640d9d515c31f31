use crate::error::{Error, Result};
use crate::priors::Dictionary;
use crate::scalar::{dot, Scalar};

/// Sparse code: selected atoms (in selection order) and their coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode<T> {
    pub support: Vec<usize>,
    pub coefficients: Vec<T>,
}

impl<T> SparseCode<T> {
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// Orthogonal matching pursuit.
///
/// Each step adds the atom most correlated with the residual and refits all
/// coefficients by least squares on the support (incremental Cholesky of the
/// support Gram matrix). Stops after `k` atoms, once the residual norm drops
/// to `residual_tol`, or when no remaining atom correlates with the residual.
pub fn omp<T: Scalar>(
    y: &[T],
    dict: &Dictionary<T>,
    k: usize,
    residual_tol: T,
) -> Result<SparseCode<T>> {
    let n = dict.atom_dim();
    let m = dict.atom_count();
    if k == 0 || k > n.min(m) {
        return Err(Error::SparsityOutOfRange { k, max: n.min(m) });
    }
    if y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: y.len(),
        });
    }

    let dty = dict.correlate(y);
    let energy = dot(y, y);
    let scale = energy.sqrt().max(T::min_positive_value());
    let tiny = T::epsilon() * T::lit(64.0);

    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut coef: Vec<T> = Vec::new();
    // lower-triangular factor of the support Gram, row-major, k × k
    let mut chol = vec![T::zero(); k * k];
    let mut corr = dty.clone();

    while support.len() < k {
        let residual = (energy - dot(&coef, &support.iter().map(|&j| dty[j]).collect::<Vec<_>>()))
            .max(T::zero())
            .sqrt();
        if residual <= residual_tol {
            break;
        }
        let best = (0..m).filter(|j| !support.contains(j)).max_by(|&a, &b| {
            corr[a]
                .abs()
                .partial_cmp(&corr[b].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let Some(best) = best else { break };
        if corr[best].abs() <= tiny * scale {
            break;
        }

        // extend the Cholesky factor with the new atom's row
        let s = support.len();
        let mut row = vec![T::zero(); s + 1];
        for i in 0..s {
            let mut v = dict.gram(support[i], best);
            for l in 0..i {
                v = v - chol[i * k + l] * row[l];
            }
            row[i] = v / chol[i * k + i];
        }
        let diag = T::one() - row[..s].iter().map(|&v| v * v).sum::<T>();
        if diag <= tiny {
            // atom is (numerically) in the span of the support
            break;
        }
        row[s] = diag.sqrt();
        chol[s * k..s * k + s + 1].copy_from_slice(&row);
        support.push(best);

        let rhs: Vec<T> = support.iter().map(|&j| dty[j]).collect();
        coef = cholesky_solve(&chol, k, &rhs);
        for (j, c) in corr.iter_mut().enumerate() {
            let fitted: T = support
                .iter()
                .zip(&coef)
                .map(|(&a, &x)| dict.gram(j, a) * x)
                .sum();
            *c = dty[j] - fitted;
        }
    }
    Ok(SparseCode {
        support,
        coefficients: coef,
    })
}

fn cholesky_solve<T: Scalar>(l: &[T], stride: usize, rhs: &[T]) -> Vec<T> {
    let s = rhs.len();
    let mut z = vec![T::zero(); s];
    for i in 0..s {
        let mut v = rhs[i];
        for j in 0..i {
            v = v - l[i * stride + j] * z[j];
        }
        z[i] = v / l[i * stride + i];
    }
    let mut x = vec![T::zero(); s];
    for i in (0..s).rev() {
        let mut v = z[i];
        for j in (i + 1)..s {
            v = v - l[j * stride + i] * x[j];
        }
        x[i] = v / l[i * stride + i];
    }
    x
}
