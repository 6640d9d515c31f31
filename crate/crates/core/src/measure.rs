//! Probability measures on pixel grids and the squared-Euclidean ground cost.
//!
//! Pixels are stored row-major. Each axis coordinate is normalized to `[0, 1]`
//! (`row / (rows - 1)`, `col / (cols - 1)`), so the ground cost between any two
//! pixels lies in `[0, 2]` regardless of resolution.

use crate::error::{Error, Result};
use crate::scalar::{l1_distance, Scalar};

/// Entries below this value are raised to it before renormalization.
pub const MASS_FLOOR: f64 = 1e-12;

/// Entries in `[-NEGATIVE_SLACK, 0)` are treated as rounding noise and clamped.
pub const NEGATIVE_SLACK: f64 = 1e-9;

/// Absolute tolerance on the total mass of a measure.
pub fn mass_tolerance<T: Scalar>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    rows: usize,
    cols: usize,
}

impl GridShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows.checked_mul(cols).is_none() {
            return Err(Error::EmptyGrid { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(row, col)` of a row-major pixel index.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub(crate) fn check_same(&self, other: &GridShape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        Ok(())
    }
}

/// A probability distribution over the pixels of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure<T> {
    shape: GridShape,
    mass: Vec<T>,
}

impl<T: Scalar> GridMeasure<T> {
    /// Wraps an already-normalized mass vector, checking the simplex invariants.
    pub fn new(shape: GridShape, mass: Vec<T>) -> Result<Self> {
        if mass.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                actual: mass.len(),
            });
        }
        if let Some((i, v)) = mass
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < T::zero())
        {
            return Err(Error::NotAMeasure(format!("entry {i} is {v}")));
        }
        let total: T = mass.iter().copied().sum();
        if (total - T::one()).abs() > mass_tolerance::<T>() {
            return Err(Error::NotAMeasure(format!("total mass {total}")));
        }
        Ok(Self { shape, mass })
    }

    /// Uniform measure on every pixel.
    pub fn uniform(shape: GridShape) -> Self {
        let n = shape.len();
        Self {
            shape,
            mass: vec![T::one() / T::from_usize_lossy(n); n],
        }
    }

    /// Point mass at `index`, with every other pixel at the mass floor.
    pub fn dirac(shape: GridShape, index: usize) -> Result<Self> {
        if index >= shape.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: shape.len(),
            });
        }
        let mut pixels = vec![T::zero(); shape.len()];
        pixels[index] = T::one();
        normalize_to_measure(&pixels, shape)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    pub fn into_mass(self) -> Vec<T> {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Total variation distance, `0.5 * ||self - other||_1`.
    pub fn total_variation(&self, other: &Self) -> T {
        l1_distance(&self.mass, &other.mass) * T::lit(0.5)
    }

    /// Mass-weighted mean `(row, col)` in pixel units.
    pub fn mean_position(&self) -> (T, T) {
        let mut r = T::zero();
        let mut c = T::zero();
        for (i, &m) in self.mass.iter().enumerate() {
            let (ri, ci) = self.shape.coords(i);
            r = r + m * T::from_usize_lossy(ri);
            c = c + m * T::from_usize_lossy(ci);
        }
        (r, c)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > self.mass[best] {
                best = i;
            }
        }
        best
    }

    /// Same mass in the other scalar type, renormalized after rounding.
    pub fn cast<U: Scalar>(&self) -> GridMeasure<U> {
        let mass: Vec<U> = self.mass.iter().map(|&m| U::lit(m.as_f64())).collect();
        let total: U = mass.iter().copied().sum();
        GridMeasure {
            shape: self.shape,
            mass: mass.into_iter().map(|m| m / total).collect(),
        }
    }
}

/// Squared Euclidean ground cost in axis-normalized coordinates, paired with the
/// entropic weight used by every solver that consumes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundCost<T> {
    shape: GridShape,
    epsilon: T,
}

impl<T: Scalar> GroundCost<T> {
    pub fn new(shape: GridShape, epsilon: T) -> Result<Self> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::InvalidEpsilon(epsilon.as_f64()));
        }
        Ok(Self { shape, epsilon })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        Self::new(self.shape, epsilon)
    }

    /// Squared normalized distance between two positions on an axis of `len` pixels.
    pub fn axis_cost(len: usize, a: usize, b: usize) -> T {
        if len <= 1 {
            return T::zero();
        }
        let d = (T::from_usize_lossy(a) - T::from_usize_lossy(b)) / T::from_usize_lossy(len - 1);
        d * d
    }

    /// Dense `len x len` matrix of squared axis distances.
    pub(crate) fn axis_matrix(len: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(len * len);
        for a in 0..len {
            for b in 0..len {
                out.push(Self::axis_cost(len, a, b));
            }
        }
        out
    }

    pub fn cost_between(&self, i: usize, j: usize) -> Result<T> {
        let n = self.shape.len();
        for index in [i, j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, len: n });
            }
        }
        let (ri, ci) = self.shape.coords(i);
        let (rj, cj) = self.shape.coords(j);
        Ok(Self::axis_cost(self.shape.rows(), ri, rj) + Self::axis_cost(self.shape.cols(), ci, cj))
    }

    pub(crate) fn check_measure(&self, m: &GridMeasure<T>) -> Result<()> {
        self.shape.check_same(&m.shape())
    }
}

/// Turns raw non-negative pixel intensities into a probability measure.
///
/// Entries are scaled to sum to one, raised to [`MASS_FLOOR`], and scaled again.
pub fn normalize_to_measure<T: Scalar>(pixels: &[T], shape: GridShape) -> Result<GridMeasure<T>> {
    if pixels.len() != shape.len() {
        return Err(Error::LengthMismatch {
            expected: shape.len(),
            actual: pixels.len(),
        });
    }
    let slack = T::lit(NEGATIVE_SLACK);
    let mut total = T::zero();
    for (index, &v) in pixels.iter().enumerate() {
        if !v.is_finite() || v < -slack {
            return Err(Error::NegativeInput {
                index,
                value: v.as_f64(),
            });
        }
        total = total + v.max(T::zero());
    }
    if !(total > T::zero()) {
        return Err(Error::AllZeroInput);
    }
    let floor = T::lit(MASS_FLOOR);
    let mut mass: Vec<T> = pixels
        .iter()
        .map(|&v| (v.max(T::zero()) / total).max(floor))
        .collect();
    let total: T = mass.iter().copied().sum();
    mass.iter_mut().for_each(|m| *m = *m / total);
    Ok(GridMeasure { shape, mass })
}

/// Clamps negatives to zero and renormalizes; used to bring projector outputs
/// back onto the simplex. Falls back to the uniform measure when nothing
/// positive survives.
pub fn resimplex<T: Scalar>(values: &[T], shape: GridShape) -> Result<GridMeasure<T>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotAMeasure("non-finite entry".into()));
    }
    let clamped: Vec<T> = values.iter().map(|&v| v.max(T::zero())).collect();
    match normalize_to_measure(&clamped, shape) {
        Err(Error::AllZeroInput) => Ok(GridMeasure::uniform(shape)),
        other => other,
    }
}
