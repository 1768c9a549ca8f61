//! Dense row-major tensors, a reverse-mode tape over them, and
//! finite-difference gradient checking.

mod alloc;
mod gradcheck;
pub(crate) mod kernels;
mod sparse;
mod tape;

use std::fmt;
use std::sync::Arc;

pub use alloc::{AllocCounter, CounterScope};
pub use gradcheck::{grad_check, grad_check_many};
pub use sparse::Csr;
pub use tape::{Gradients, OpKind, Tape, Var};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array with shape metadata.
///
/// Element storage is charged to the [`AllocCounter`] that was current on
/// the allocating thread.
pub struct Tensor<T: Scalar = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
    counter: Arc<AllocCounter>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return shape_err(
                "tensor",
                format!("shape {shape:?} needs {numel} elements, got {}", data.len()),
            );
        }
        Ok(Self::from_parts(shape.to_vec(), data))
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let counter = AllocCounter::current();
        counter.charge(data.len());
        Tensor { shape, data, counter }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; numel])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let numel = shape.iter().product();
        Self::from_parts(shape.to_vec(), (0..numel).map(&mut f).collect())
    }

    pub fn scalar(value: T) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return shape_err("from_rows", format!("row {i} has {} entries, expected {cols}", r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self::from_parts(vec![rows.len(), cols], data))
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |k| if k / n == k % n { T::one() } else { T::zero() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.clone()
    }

    /// Takes the storage out of the tensor, refunding the allocation.
    pub fn into_vec(mut self) -> Vec<T> {
        std::mem::take(&mut self.data)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return shape_err("item", format!("tensor of shape {:?} is not a scalar", self.shape));
        }
        Ok(self.data[0])
    }

    /// (rows, cols) of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => shape_err("dims2", format!("expected a matrix, got shape {s:?}")),
        }
    }

    pub fn at(&self, index: &[usize]) -> T {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut flat = 0;
        for (i, (&ix, &dim)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < dim, "index {ix} out of range for axis {i} of size {dim}");
            flat = flat * dim + ix;
        }
        self.data[flat]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let cols = *self.shape.last().expect("row of a rank-0 tensor");
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        Ok(Self::from_parts(vec![c, r], kernels::transpose(&self.data, r, c)))
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let (shape, data) = kernels::permute(&self.data, &self.shape, perm)?;
        Ok(Self::from_parts(shape, data))
    }

    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        let (shape, data) = kernels::slice_axis(&self.data, &self.shape, axis, start, len)?;
        Ok(Self::from_parts(shape, data))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return shape_err("matmul", format!("{:?} x {:?}", self.shape, other.shape));
        }
        Ok(Self::from_parts(vec![m, n], kernels::matmul(&self.data, &other.data, m, k, n)))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return shape_err("zip_map", format!("{:?} vs {:?}", self.shape, other.shape));
        }
        Ok(Self::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return shape_err("max_abs_diff", format!("{:?} vs {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Element-type conversion.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
        )
    }

    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let shapes: Vec<&[usize]> = parts.iter().map(|t| t.shape()).collect();
        let datas: Vec<&[T]> = parts.iter().map(|t| t.data()).collect();
        let (shape, data) = kernels::concat(&datas, &shapes, axis)?;
        Ok(Self::from_parts(shape, data))
    }
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self::from_parts(self.shape.clone(), self.data.clone())
    }
}

impl<T: Scalar> Drop for Tensor<T> {
    fn drop(&mut self) {
        self.counter.refund(self.data.len());
    }
}

impl<T: Scalar> PartialEq for Tensor<T> {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).field("data", &self.data).finish()
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for Tensor<T> {
    type Error = Error;

    fn try_from(v: Vec<T>) -> Result<Self> {
        let n = v.len();
        Tensor::new(&[n], v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f64>::new(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::<f64>::new(&[2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.numel(), 6);
    }

    #[test]
    fn alloc_counter_tracks_live_floats() {
        let counter = AllocCounter::new();
        let _scope = counter.install();
        assert_eq!(counter.live_floats(), 0);
        let a = Tensor::<f64>::zeros(&[3, 7]);
        assert_eq!(counter.live_floats(), 21);
        let b = a.clone();
        assert_eq!(counter.live_floats(), 42);
        drop(a);
        assert_eq!(counter.live_floats(), 21);
        drop(b);
        assert_eq!(counter.live_floats(), 0);
        assert_eq!(counter.peak_floats(), 42);
        counter.reset();
        assert_eq!(counter.peak_floats(), 0);
    }

    #[test]
    fn drop_on_other_thread_refunds_owner() {
        let counter = AllocCounter::new();
        let t = {
            let _scope = counter.install();
            Tensor::<f32>::zeros(&[10, 10])
        };
        assert_eq!(counter.live_floats(), 100);
        std::thread::spawn(move || drop(t)).join().unwrap();
        assert_eq!(counter.live_floats(), 0);
    }

    #[test]
    fn watched_allocations() {
        let counter = AllocCounter::new();
        let _scope = counter.install();
        counter.watch_at_least(100);
        let _small = Tensor::<f64>::zeros(&[9, 9]);
        let _big = Tensor::<f64>::zeros(&[10, 10]);
        assert_eq!(counter.watched_allocs(), 1);
        assert_eq!(counter.largest_alloc(), 100);
    }

    #[test]
    fn permute_and_slice() {
        let t = Tensor::<f64>::from_fn(&[2, 3, 4], |k| k as f64);
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.at(&[3, 1, 2]), t.at(&[1, 2, 3]));
        let s = t.slice_axis(1, 1, 2).unwrap();
        assert_eq!(s.shape(), &[2, 2, 4]);
        assert_eq!(s.at(&[1, 0, 2]), t.at(&[1, 1, 2]));
    }
}
