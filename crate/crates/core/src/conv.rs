//! Reference convolution, activation, pooling and dense layers.
//!
//! Convolution is cross-correlation (no kernel flip). Each output element is
//! reduced in a fixed order: input channel, then kernel row, then kernel
//! column, with the bias added last. Results are therefore bit-identical
//! across runs and independent of how callers parallelize over images.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor3};

/// Filter weights in `[out][in][row][col]` order plus one bias per filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank<T> {
    out_channels: usize,
    in_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> FilterBank<T> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(Error::ShapeMismatch(format!(
                "filter dims must be positive, got {out_channels}x{in_channels}x{kernel_h}x{kernel_w}"
            )));
        }
        let expected = out_channels * in_channels * kernel_h * kernel_w;
        if weights.len() != expected {
            return Err(Error::ShapeMismatch(format!("filter bank needs {expected} weights, got {}", weights.len())));
        }
        if bias.len() != out_channels {
            return Err(Error::ShapeMismatch(format!("filter bank needs {out_channels} biases, got {}", bias.len())));
        }
        Ok(Self { out_channels, in_channels, kernel_h, kernel_w, weights, bias })
    }

    /// Weights with zero bias.
    pub fn without_bias(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<T>,
    ) -> Result<Self> {
        Self::new(out_channels, in_channels, kernel_h, kernel_w, weights, alloc::vec![T::zero(); out_channels])
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_h(&self) -> usize {
        self.kernel_h
    }

    pub fn kernel_w(&self) -> usize {
        self.kernel_w
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    #[inline]
    pub fn weight_index(&self, o: usize, c: usize, j: usize, k: usize) -> usize {
        ((o * self.in_channels + c) * self.kernel_h + j) * self.kernel_w + k
    }

    #[inline]
    pub fn weight(&self, o: usize, c: usize, j: usize, k: usize) -> T {
        self.weights[self.weight_index(o, c, j, k)]
    }

    /// Kernel row `j` of filter `o`, input channel `c`.
    pub fn kernel_row(&self, o: usize, c: usize, j: usize) -> &[T] {
        let start = self.weight_index(o, c, j, 0);
        &self.weights[start..start + self.kernel_w]
    }

    /// Element-wise sum of two equally shaped banks (biases summed too).
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.dims(), other.dims())));
        }
        let weights = self.weights.iter().zip(&other.weights).map(|(&a, &b)| a + b).collect();
        let bias = self.bias.iter().zip(&other.bias).map(|(&a, &b)| a + b).collect();
        Self::new(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w, weights, bias)
    }

    /// `(out_channels, in_channels, kernel_h, kernel_w)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
    }
}

/// Strides and zero padding of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub stride_v: usize,
    pub stride_h: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvGeometry {
    /// Unpadded ("valid") convolution.
    pub fn valid(stride_v: usize, stride_h: usize) -> Self {
        Self { stride_v, stride_h, pad_h: 0, pad_w: 0 }
    }

    pub fn padded(stride_v: usize, stride_h: usize, pad_h: usize, pad_w: usize) -> Self {
        Self { stride_v, stride_h, pad_h, pad_w }
    }

    /// Output `(height, width)` for the given input and kernel sizes.
    pub fn output_dims(&self, in_h: usize, in_w: usize, kernel_h: usize, kernel_w: usize) -> Result<(usize, usize)> {
        if self.stride_v == 0 || self.stride_h == 0 {
            return Err(Error::BadGeometry(format!(
                "strides must be positive, got ({}, {})",
                self.stride_v, self.stride_h
            )));
        }
        let span_h = in_h + 2 * self.pad_h;
        let span_w = in_w + 2 * self.pad_w;
        if kernel_h > span_h || kernel_w > span_w {
            return Err(Error::BadGeometry(format!(
                "{kernel_h}x{kernel_w} kernel does not fit padded {span_h}x{span_w} input"
            )));
        }
        Ok(((span_h - kernel_h) / self.stride_v + 1, (span_w - kernel_w) / self.stride_h + 1))
    }
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self::valid(1, 1)
    }
}

/// 2-D cross-correlation of `input` with every filter, plus bias.
pub fn conv2d<T: Scalar>(input: &Tensor3<T>, filters: &FilterBank<T>, geom: &ConvGeometry) -> Result<Tensor3<T>> {
    if input.channels() != filters.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, filters expect {}",
            input.channels(),
            filters.in_channels()
        )));
    }
    let (kh, kw) = (filters.kernel_h(), filters.kernel_w());
    let (out_h, out_w) = geom.output_dims(input.height(), input.width(), kh, kw)?;
    let (in_h, in_w) = (input.height() as isize, input.width() as isize);
    let mut out = Vec::with_capacity(filters.out_channels() * out_h * out_w);
    for o in 0..filters.out_channels() {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let top = (oy * geom.stride_v) as isize - geom.pad_h as isize;
                let left = (ox * geom.stride_h) as isize - geom.pad_w as isize;
                let mut acc = T::zero();
                for c in 0..input.channels() {
                    for j in 0..kh {
                        let y = top + j as isize;
                        if y < 0 || y >= in_h {
                            continue;
                        }
                        let row = input.row(c, y as usize);
                        let taps = filters.kernel_row(o, c, j);
                        for (k, &w) in taps.iter().enumerate() {
                            let x = left + k as isize;
                            if x < 0 || x >= in_w {
                                continue;
                            }
                            acc = acc + w * row[x as usize];
                        }
                    }
                }
                out.push(acc + filters.bias()[o]);
            }
        }
    }
    Tensor3::new(filters.out_channels(), out_h, out_w, out)
}

pub fn relu<T: Scalar>(t: &Tensor3<T>) -> Tensor3<T> {
    t.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// 2×2 max-pooling with stride 2.
pub fn maxpool2<T: Scalar>(t: &Tensor3<T>) -> Result<Tensor3<T>> {
    maxpool2_with_argmax(t).map(|(pooled, _)| pooled)
}

/// Max-pooling that also returns, for each output element, the flat input
/// index of the winning element (first maximum in row-major window order).
pub fn maxpool2_with_argmax<T: Scalar>(t: &Tensor3<T>) -> Result<(Tensor3<T>, Vec<usize>)> {
    let (c, h, w) = t.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::BadGeometry(format!("maxpool2 needs even dims, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = t.index(ch, 2 * y, 2 * x);
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = t.index(ch, 2 * y + dy, 2 * x + dx);
                    if t.data()[i] > t.data()[best] {
                        best = i;
                    }
                }
                out.push(t.data()[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor3::new(c, oh, ow, out)?, arg))
}

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Affine map `W·x + b`.
pub fn dense<T: Scalar>(x: &[T], w: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    if w.cols() != x.len() || w.rows() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "dense: W is {}x{}, x has {}, b has {}",
            w.rows(),
            w.cols(),
            x.len(),
            b.len()
        )));
    }
    Ok((0..w.rows()).map(|r| w.row(r).iter().zip(x).fold(T::zero(), |acc, (&wi, &xi)| acc + wi * xi) + b[r]).collect())
}
