//! Row-major f64 tensors and the three GEMM shapes needed for dense layers.

use crate::error::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        assert_eq!(self.shape.len(), 2, "row() on a non-matrix");
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c = a · wᵀ + beta·c` with `a: m×k`, `w: n×k`, `c: m×n`.
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], w: &[f64], beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && w.len() >= n * k && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: bounds asserted above; strides describe row-major a, c and
    // transposed row-major w.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = dᵀ · a + beta·c` with `d: m×n`, `a: m×k`, `c: n×k`.
pub fn gemm_tn(m: usize, n: usize, k: usize, d: &[f64], a: &[f64], beta: f64, c: &mut [f64]) {
    assert!(d.len() >= m * n && a.len() >= m * k && c.len() >= n * k);
    if n == 0 || k == 0 {
        return;
    }
    // SAFETY: bounds asserted above.
    unsafe {
        matrixmultiply::dgemm(
            n,
            m,
            k,
            1.0,
            d.as_ptr(),
            1,
            n as isize,
            a.as_ptr(),
            k as isize,
            1,
            beta,
            c.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

/// `c = d · w + beta·c` with `d: m×n`, `w: n×k`, `c: m×k`.
pub fn gemm_nn(m: usize, n: usize, k: usize, d: &[f64], w: &[f64], beta: f64, c: &mut [f64]) {
    assert!(d.len() >= m * n && w.len() >= n * k && c.len() >= m * k);
    if m == 0 || k == 0 {
        return;
    }
    // SAFETY: bounds asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            n,
            k,
            1.0,
            d.as_ptr(),
            n as isize,
            1,
            w.as_ptr(),
            k as isize,
            1,
            beta,
            c.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}
