//! Dense 3-D array with `[batch][channel][time]` layout.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A contiguous `(B, C, T)` array, row-major with time fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3<S: Scalar> {
    b: usize,
    c: usize,
    t: usize,
    data: Vec<S>,
}

impl<S: Scalar> Grid3<S> {
    pub fn zeros(b: usize, c: usize, t: usize) -> Self {
        Self {
            b,
            c,
            t,
            data: vec![S::zero(); b * c * t],
        }
    }

    pub fn from_vec(b: usize, c: usize, t: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != b * c * t {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{}x{} = {} elements, got {}",
                b,
                c,
                t,
                b * c * t,
                data.len()
            )));
        }
        Ok(Self { b, c, t, data })
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.b, self.c, self.t)
    }
    #[inline]
    pub fn batches(&self) -> usize {
        self.b
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.c
    }
    #[inline]
    pub fn time_len(&self) -> usize {
        self.t
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, t: usize) -> usize {
        (b * self.c + c) * self.t + t
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, t: usize) -> S {
        self.data[self.idx(b, c, t)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, v: S) {
        let i = self.idx(b, c, t);
        self.data[i] = v;
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    /// The time series of one (batch, channel) lane.
    #[inline]
    pub fn lane(&self, b: usize, c: usize) -> &[S] {
        let start = (b * self.c + c) * self.t;
        &self.data[start..start + self.t]
    }

    #[inline]
    pub fn lane_mut(&mut self, b: usize, c: usize) -> &mut [S] {
        let start = (b * self.c + c) * self.t;
        &mut self.data[start..start + self.t]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            b: self.b,
            c: self.c,
            t: self.t,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        for &v in &self.data {
            if !v.is_finite() {
                return Err(Error::NonFinite(what.to_string()));
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self {
            b: self.b,
            c: self.c,
            t: self.t,
            data,
        })
    }

    /// Cast element-wise through f64.
    pub fn cast<R: Scalar>(&self) -> Grid3<R> {
        Grid3 {
            b: self.b,
            c: self.c,
            t: self.t,
            data: self.data.iter().map(|&v| R::from_f64(v.to_f64())).collect(),
        }
    }
}
