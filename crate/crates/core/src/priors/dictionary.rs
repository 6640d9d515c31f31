use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::priors::omp::{omp, SparseCode};
use crate::scalar::{dot, Scalar};

const NORM_SLACK: f64 = 1e-9;
const MINIBATCH: usize = 64;

/// Column-normalized atom matrix, stored column-major.
///
/// The Gram matrix is computed once at construction; OMP works almost
/// entirely on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary<T> {
    atom_dim: usize,
    atom_count: usize,
    atoms: Vec<T>,
    gram: Vec<T>,
}

impl<T: Scalar> Dictionary<T> {
    /// Wraps a column-major `atom_dim × atom_count` matrix whose columns
    /// already have unit norm.
    pub fn new(atom_dim: usize, atom_count: usize, atoms: Vec<T>) -> Result<Self> {
        if atom_dim == 0 || atom_count == 0 {
            return Err(Error::InvalidDictionary("empty dictionary".into()));
        }
        if atoms.len() != atom_dim * atom_count {
            return Err(Error::LengthMismatch {
                expected: atom_dim * atom_count,
                actual: atoms.len(),
            });
        }
        for (j, col) in atoms.chunks(atom_dim).enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDictionary(format!(
                    "atom {j} has non-finite entries"
                )));
            }
            let norm = dot(col, col).sqrt();
            if (norm - T::one()).abs() > T::lit(NORM_SLACK) {
                return Err(Error::InvalidDictionary(format!(
                    "atom {j} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self::from_unit_columns(atom_dim, atom_count, atoms))
    }

    /// Normalizes every column; fails on an all-zero column.
    pub fn from_columns(atom_dim: usize, columns: &[Vec<T>]) -> Result<Self> {
        let mut atoms = Vec::with_capacity(atom_dim * columns.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != atom_dim {
                return Err(Error::LengthMismatch {
                    expected: atom_dim,
                    actual: col.len(),
                });
            }
            let unit =
                unit(col).ok_or_else(|| Error::InvalidDictionary(format!("atom {j} is zero")))?;
            atoms.extend(unit);
        }
        Self::new(atom_dim, columns.len(), atoms)
    }

    fn from_unit_columns(atom_dim: usize, atom_count: usize, atoms: Vec<T>) -> Self {
        let mut gram = vec![T::zero(); atom_count * atom_count];
        for a in 0..atom_count {
            let ca = &atoms[a * atom_dim..(a + 1) * atom_dim];
            for b in a..atom_count {
                let v = dot(ca, &atoms[b * atom_dim..(b + 1) * atom_dim]);
                gram[a * atom_count + b] = v;
                gram[b * atom_count + a] = v;
            }
        }
        Dictionary {
            atom_dim,
            atom_count,
            atoms,
            gram,
        }
    }

    pub fn atom_dim(&self) -> usize {
        self.atom_dim
    }

    pub fn atom_count(&self) -> usize {
        self.atom_count
    }

    pub fn atom(&self, j: usize) -> &[T] {
        &self.atoms[j * self.atom_dim..(j + 1) * self.atom_dim]
    }

    /// Column-major atom storage.
    pub fn as_slice(&self) -> &[T] {
        &self.atoms
    }

    pub(crate) fn gram(&self, a: usize, b: usize) -> T {
        self.gram[a * self.atom_count + b]
    }

    /// `Dᵀ y`
    pub fn correlate(&self, y: &[T]) -> Vec<T> {
        self.atoms
            .chunks(self.atom_dim)
            .map(|col| dot(col, y))
            .collect()
    }

    /// `D · code`
    pub fn reconstruct(&self, code: &SparseCode<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.atom_dim];
        for (&j, &c) in code.support.iter().zip(&code.coefficients) {
            for (o, &a) in out.iter_mut().zip(self.atom(j)) {
                *o = *o + c * a;
            }
        }
        out
    }

    /// Largest absolute inner product between distinct atoms.
    pub fn coherence(&self) -> T {
        let m = self.atom_count;
        let mut worst = T::zero();
        for a in 0..m {
            for b in (a + 1)..m {
                worst = worst.max(self.gram(a, b).abs());
            }
        }
        worst
    }
}

fn unit<T: Scalar>(v: &[T]) -> Option<Vec<T>> {
    let norm = dot(v, v).sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| x / norm).collect())
}

fn residual_norm<T: Scalar>(dict: &Dictionary<T>, y: &[T], code: &SparseCode<T>) -> T {
    let rec = dict.reconstruct(code);
    y.iter()
        .zip(&rec)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt()
}

/// Learns an `m`-atom dictionary by minibatch alternation: OMP coding of a
/// shuffled minibatch, then one block-coordinate least-squares sweep over the
/// atoms using statistics accumulated during the epoch.
///
/// Starts from the first `m` non-zero samples (normalized). Atoms unused for
/// a whole epoch are replaced by the worst-reconstructed samples.
pub fn learn_dictionary<T: Scalar>(
    samples: &[Vec<T>],
    m: usize,
    k: usize,
    epochs: usize,
    seed: u64,
) -> Result<Dictionary<T>> {
    if m == 0 {
        return Err(Error::InvalidDictionary(
            "atom count must be positive".into(),
        ));
    }
    if samples.len() < m {
        return Err(Error::TooFewSamples {
            needed: m,
            got: samples.len(),
        });
    }
    let n = samples[0].len();
    if n == 0 {
        return Err(Error::InvalidDictionary("samples are empty".into()));
    }
    for s in samples {
        if s.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: s.len(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "sample with non-finite entries".into(),
            ));
        }
    }
    if k == 0 || k > n.min(m) {
        return Err(Error::SparsityOutOfRange { k, max: n.min(m) });
    }

    let mut columns: Vec<Vec<T>> = samples.iter().filter_map(|s| unit(s)).take(m).collect();
    if columns.len() < m {
        return Err(Error::TooFewSamples {
            needed: m,
            got: columns.len(),
        });
    }
    let mut dict = Dictionary::from_columns(n, &columns)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut a = vec![T::zero(); m * m];
        let mut b = vec![T::zero(); n * m];
        let mut used = vec![false; m];
        let mut errors: Vec<(T, usize)> = Vec::with_capacity(samples.len());

        for batch in order.chunks(MINIBATCH) {
            for &i in batch {
                let y = &samples[i];
                let code = omp(y, &dict, k, T::zero())?;
                errors.push((residual_norm(&dict, y, &code), i));
                for (p, (&ja, &ca)) in code.support.iter().zip(&code.coefficients).enumerate() {
                    used[ja] = true;
                    for (&jb, &cb) in code.support.iter().zip(&code.coefficients).skip(p) {
                        a[ja * m + jb] = a[ja * m + jb] + ca * cb;
                        if ja != jb {
                            a[jb * m + ja] = a[jb * m + ja] + ca * cb;
                        }
                    }
                    for (bv, &yv) in b[ja * n..(ja + 1) * n].iter_mut().zip(y) {
                        *bv = *bv + ca * yv;
                    }
                }
            }
            update_atoms(&mut columns, &a, &b, n, m);
            dict = Dictionary::from_columns(n, &columns)?;
        }

        // dead atoms: swap in the samples the current dictionary explains worst
        errors.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut candidates = errors.iter().map(|&(_, i)| i);
        let mut replaced = false;
        for j in (0..m).filter(|&j| !used[j]) {
            if let Some(col) = candidates.by_ref().find_map(|i| unit(&samples[i])) {
                columns[j] = col;
                replaced = true;
            }
        }
        if replaced {
            dict = Dictionary::from_columns(n, &columns)?;
        }
    }
    Ok(dict)
}

/// One sweep of `d_j ← normalize(d_j + (b_j − D a_j) / A_jj)`; atoms with no
/// accumulated energy are left untouched.
fn update_atoms<T: Scalar>(columns: &mut [Vec<T>], a: &[T], b: &[T], n: usize, m: usize) {
    let tiny = T::lit(1e-12);
    for j in 0..m {
        let ajj = a[j * m + j];
        if ajj <= tiny {
            continue;
        }
        let mut u: Vec<T> = b[j * n..(j + 1) * n].to_vec();
        for (l, col) in columns.iter().enumerate() {
            let alj = a[l * m + j];
            if alj != T::zero() {
                for (uv, &cv) in u.iter_mut().zip(col) {
                    *uv = *uv - alj * cv;
                }
            }
        }
        let updated: Vec<T> = columns[j]
            .iter()
            .zip(&u)
            .map(|(&d, &r)| d + r / ajj)
            .collect();
        if let Some(col) = unit(&updated) {
            columns[j] = col;
        }
    }
}
