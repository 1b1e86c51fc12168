use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::scalar::Scalar;

/// Extents of one sample: `(channels, time, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub time: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, time: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            time,
            height,
            width,
        }
    }

    pub fn numel(&self) -> usize {
        self.channels * self.volume()
    }

    /// Elements per channel.
    pub fn volume(&self) -> usize {
        self.time * self.height * self.width
    }

    /// `[time, height, width]`
    pub fn extents(&self) -> [usize; 3] {
        [self.time, self.height, self.width]
    }

    pub fn from_extents(channels: usize, e: [usize; 3]) -> Self {
        Shape::new(channels, e[0], e[1], e[2])
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{},{})",
            self.channels, self.time, self.height, self.width
        )
    }
}

/// Dense single-sample tensor, row-major over `(c, t, h, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.numel()],
        }
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(EngineError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> T) -> Self {
        Tensor {
            shape,
            data: (0..shape.numel()).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, c: usize, t: usize, h: usize, w: usize) -> usize {
        let s = &self.shape;
        debug_assert!(c < s.channels && t < s.time && h < s.height && w < s.width);
        ((c * s.time + t) * s.height + h) * s.width + w
    }

    pub fn get(&self, c: usize, t: usize, h: usize, w: usize) -> T {
        self.data[self.offset(c, t, h, w)]
    }

    pub fn set(&mut self, c: usize, t: usize, h: usize, w: usize, v: T) {
        let o = self.offset(c, t, h, w);
        self.data[o] = v;
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let v = self.shape.volume();
        &self.data[c * v..(c + 1) * v]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let v = self.shape.volume();
        &mut self.data[c * v..(c + 1) * v]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }

    /// Rejects NaN/Inf, naming `context` in the error.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(index) => Err(EngineError::NonFinite {
                context: context.to_string(),
                index,
            }),
        }
    }
}

pub(crate) fn ensure_batch<T: Scalar>(op: &'static str, input: &[Tensor<T>]) -> Result<Shape> {
    let first = input.first().ok_or(EngineError::EmptyBatch(op))?.shape();
    for t in &input[1..] {
        if t.shape() != first {
            return Err(EngineError::shape(op, first, t.shape()));
        }
    }
    Ok(first)
}
