use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{rng, EngineError, Scalar};

/// Dense row-major array of rank 0 (scalar), 1 (vector) or 2 (matrix).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Initialiser for [`build_tensor`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    Gaussian { mean: f64, std: f64, seed: u64 },
}

/// Allocates a tensor of the given shape filled according to `init`.
///
/// Gaussian fills are drawn in `f64` from the seeded stream and then cast, so
/// the same seed gives the same values (up to rounding) in either precision.
pub fn build_tensor<T: Scalar>(shape: &[usize], init: Init) -> Result<Tensor<T>, EngineError> {
    if shape.contains(&0) {
        return Err(EngineError::InvalidShape(format!(
            "dimensions must be positive, got {shape:?}"
        )));
    }
    match init {
        Init::Zeros => Tensor::zeros(shape),
        Init::Constant(c) => Tensor::filled(shape, T::from_f64(c)),
        Init::Gaussian { mean, std, seed } => {
            let mut stream = rng::stream(seed, 0);
            Tensor::gaussian(shape, mean, std, &mut stream)
        }
    }
}

fn check_rank(shape: &[usize]) -> Result<(), EngineError> {
    if shape.len() > 2 {
        return Err(EngineError::InvalidShape(format!(
            "rank {} tensors are not supported (shape {shape:?})",
            shape.len()
        )));
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self, EngineError> {
        check_rank(shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(EngineError::InvalidShape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self, EngineError> {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Result<Self, EngineError> {
        check_rank(shape)?;
        let n = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, EngineError> {
        Self::new(&[rows, cols], data)
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self, EngineError> {
        Self::new(shape, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    /// One-hot vector of length `len` with a 1 at `index`.
    pub fn one_hot(len: usize, index: usize) -> Result<Self, EngineError> {
        if index >= len {
            return Err(EngineError::InvalidShape(format!(
                "one-hot index {index} out of range for length {len}"
            )));
        }
        let mut data = vec![T::zero(); len];
        data[index] = T::one();
        Ok(Self::vector(data))
    }

    pub fn gaussian<R: Rng + ?Sized>(
        shape: &[usize],
        mean: f64,
        std: f64,
        rng: &mut R,
    ) -> Result<Self, EngineError> {
        check_rank(shape)?;
        if !(std >= 0.0) || !std.is_finite() {
            return Err(EngineError::Precondition(format!(
                "gaussian std must be finite and non-negative, got {std}"
            )));
        }
        let normal = Normal::new(mean, std)
            .map_err(|e| EngineError::Precondition(format!("gaussian({mean}, {std}): {e}")))?;
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64(normal.sample(rng))).collect();
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a rank-0 (or single element) tensor.
    pub fn item(&self) -> T {
        self.data[0]
    }

    /// Element `[i, j]` of a matrix.
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.shape[1] + j]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs().as_f64())
            .fold(0.0, f64::max)
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }
}
