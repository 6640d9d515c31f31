//! Separable Gibbs kernel `K = exp(-C / eps)` on a grid.
//!
//! The squared ground cost splits as `C = C_rows (+) C_cols`, so `K` is the
//! Kronecker product of two small per-axis kernels and `K v` costs two 1-D
//! passes instead of a dense `n x n` product.

use crate::measure::GroundCost;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub(crate) struct GibbsKernel<T> {
    rows: usize,
    cols: usize,
    epsilon: T,
    /// Per-axis costs divided by epsilon.
    row_cost: Vec<T>,
    col_cost: Vec<T>,
    row_kernel: Vec<T>,
    col_kernel: Vec<T>,
    /// `ln(C)` per axis, `-inf` on the diagonal.
    row_log_cost: Vec<T>,
    col_log_cost: Vec<T>,
}

/// Which axis a 1-D pass runs along.
#[derive(Clone, Copy)]
enum Axis {
    Rows,
    Cols,
}

impl<T: Scalar> GibbsKernel<T> {
    pub fn new(cost: &GroundCost<T>) -> Self {
        let shape = cost.shape();
        let eps = cost.epsilon();
        let (rows, cols) = (shape.rows(), shape.cols());
        let rc = GroundCost::<T>::axis_matrix(rows);
        let cc = GroundCost::<T>::axis_matrix(cols);
        let scaled = |m: &[T]| m.iter().map(|&c| c / eps).collect::<Vec<T>>();
        // subnormal entries are flushed: they are numerically irrelevant and slow
        let kern = |m: &[T]| {
            m.iter()
                .map(|&c| flush((-c / eps).exp()))
                .collect::<Vec<T>>()
        };
        let logc = |m: &[T]| m.iter().map(|&c| c.ln()).collect::<Vec<T>>();
        Self {
            rows,
            cols,
            epsilon: eps,
            row_cost: scaled(&rc),
            col_cost: scaled(&cc),
            row_kernel: kern(&rc),
            col_kernel: kern(&cc),
            row_log_cost: logc(&rc),
            col_log_cost: logc(&cc),
        }
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    /// `out = K v`. `K` is symmetric so this is also `K^T v`.
    pub fn apply(&self, v: &[T], out: &mut [T], scratch: &mut [T]) {
        let (rows, cols) = (self.rows, self.cols);
        // along columns
        for r in 0..rows {
            let src = &v[r * cols..(r + 1) * cols];
            let dst = &mut scratch[r * cols..(r + 1) * cols];
            for (d, k) in dst.iter_mut().zip(self.col_kernel.chunks_exact(cols)) {
                *d = k.iter().zip(src).map(|(&a, &b)| a * b).sum();
            }
        }
        // along rows
        out.iter_mut().for_each(|o| *o = T::zero());
        for r in 0..rows {
            let k = &self.row_kernel[r * rows..(r + 1) * rows];
            let dst = &mut out[r * cols..(r + 1) * cols];
            for (rp, &w) in k.iter().enumerate() {
                if w == T::zero() {
                    continue;
                }
                let src = &scratch[rp * cols..(rp + 1) * cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d + w * s;
                }
            }
        }
    }

    /// One log-sum-exp pass along an axis:
    /// `out[.., a, ..] = LSE_b (x[.., b, ..] - C[a, b] / eps + extra[a, b])`.
    fn lse_pass(&self, x: &[T], out: &mut [T], axis: Axis, log_weight: Option<&[T]>) {
        let (rows, cols) = (self.rows, self.cols);
        let (len, cost) = match axis {
            Axis::Rows => (rows, &self.row_cost),
            Axis::Cols => (cols, &self.col_cost),
        };
        let mut terms = vec![T::zero(); len];
        let lines = match axis {
            Axis::Rows => cols,
            Axis::Cols => rows,
        };
        for line in 0..lines {
            let at = |k: usize| match axis {
                Axis::Rows => k * cols + line,
                Axis::Cols => line * cols + k,
            };
            for a in 0..len {
                let crow = &cost[a * len..(a + 1) * len];
                let mut max = T::neg_infinity();
                for b in 0..len {
                    let mut t = x[at(b)] - crow[b];
                    if let Some(w) = log_weight {
                        t = t + w[a * len + b];
                    }
                    terms[b] = t;
                    if t > max {
                        max = t;
                    }
                }
                out[at(a)] = if max == T::neg_infinity() {
                    max
                } else {
                    max + terms.iter().map(|&t| (t - max).exp()).sum::<T>().ln()
                };
            }
        }
    }

    /// Unweighted LSE pass. Each line is exponentiated once against its own
    /// maximum and multiplied by the plain kernel; outputs whose sum is too
    /// small to trust fall back to the exact per-entry LSE.
    fn lse_pass_fast(&self, x: &[T], out: &mut [T], axis: Axis) {
        let (rows, cols) = (self.rows, self.cols);
        let (len, kernel, lines) = match axis {
            Axis::Rows => (rows, &self.row_kernel, cols),
            Axis::Cols => (cols, &self.col_kernel, rows),
        };
        let safe = T::min_positive_value().sqrt();
        let mut xs = vec![T::zero(); len];
        let mut e = vec![T::zero(); len];
        for line in 0..lines {
            let at = |k: usize| match axis {
                Axis::Rows => k * cols + line,
                Axis::Cols => line * cols + k,
            };
            for b in 0..len {
                xs[b] = x[at(b)];
            }
            let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
            if max == T::neg_infinity() {
                for a in 0..len {
                    out[at(a)] = max;
                }
                continue;
            }
            for b in 0..len {
                e[b] = flush((xs[b] - max).exp());
            }
            for a in 0..len {
                let krow = &kernel[a * len..(a + 1) * len];
                let sum: T = krow.iter().zip(&e).map(|(&k, &v)| k * v).sum();
                out[at(a)] = if sum > safe {
                    max + sum.ln()
                } else {
                    self.exact_lse(&xs, a, axis)
                };
            }
        }
    }

    fn exact_lse(&self, xs: &[T], a: usize, axis: Axis) -> T {
        let len = xs.len();
        let cost = match axis {
            Axis::Rows => &self.row_cost,
            Axis::Cols => &self.col_cost,
        };
        let crow = &cost[a * len..(a + 1) * len];
        let max = xs
            .iter()
            .zip(crow)
            .map(|(&x, &c)| x - c)
            .fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return max;
        }
        max + xs
            .iter()
            .zip(crow)
            .map(|(&x, &c)| (x - c - max).exp())
            .sum::<T>()
            .ln()
    }

    /// `out_i = LSE_j (x_j - C_ij / eps)`, i.e. `ln(K exp(x))`.
    pub fn log_apply(&self, x: &[T], out: &mut [T], scratch: &mut [T]) {
        self.lse_pass_fast(x, scratch, Axis::Cols);
        self.lse_pass_fast(scratch, out, Axis::Rows);
    }

    /// `out_i = ln(sum_j C_ij exp(x_j - C_ij / eps))`.
    pub fn log_apply_cost_weighted(&self, x: &[T], out: &mut [T]) {
        let n = self.len();
        let mut plain = vec![T::zero(); n];
        let mut weighted = vec![T::zero(); n];
        self.lse_pass(x, &mut plain, Axis::Cols, None);
        self.lse_pass(x, &mut weighted, Axis::Cols, Some(&self.col_log_cost));
        // C = C_rows + C_cols: the row-cost part weights the plain column sums,
        // the column-cost part carries the weighted column sums.
        let mut a = vec![T::zero(); n];
        let mut b = vec![T::zero(); n];
        self.lse_pass(&plain, &mut a, Axis::Rows, Some(&self.row_log_cost));
        self.lse_pass(&weighted, &mut b, Axis::Rows, None);
        for i in 0..n {
            let (hi, lo) = if a[i] > b[i] {
                (a[i], b[i])
            } else {
                (b[i], a[i])
            };
            out[i] = if hi == T::neg_infinity() {
                hi
            } else {
                hi + (T::one() + (lo - hi).exp()).ln()
            };
        }
    }
}

fn flush<T: Scalar>(v: T) -> T {
    if v < T::min_positive_value() {
        T::zero()
    } else {
        v
    }
}
