//! Channel-major tensors, quantization, norms and bit-level statistics.

use alloc::format;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, Mul, Sub};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type usable in tensors, convolutions and MAC accounting.
///
/// `INTEGRAL` marks types whose arithmetic is exact, which decides how the
/// equivalence checks compare results.
pub trait Scalar:
    Copy + Debug + PartialEq + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self>
{
    const INTEGRAL: bool;
    fn zero() -> Self;
    fn to_f64(self) -> f64;

    fn is_zero(self) -> bool {
        self == Self::zero()
    }
}

macro_rules! impl_scalar {
    ($t:ty, $integral:expr, $zero:expr) => {
        impl Scalar for $t {
            const INTEGRAL: bool = $integral;
            #[inline]
            fn zero() -> Self {
                $zero
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f64, false, 0.0);
impl_scalar!(f32, false, 0.0);
impl_scalar!(i32, true, 0);
impl_scalar!(i64, true, 0);

/// Dense 3-D array stored channel-major, then row-major.
///
/// Row `y` of channel `c` is the contiguous slice
/// `data[(c * height + y) * width..][..width]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Tensor3<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!("tensor dims must be positive, got {channels}x{height}x{width}")));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{channels}x{height}x{width} tensor needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(channels, height, width, alloc::vec![value; channels * height * width])
    }

    /// Builds a tensor from `f(channel, row, col)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: every tensor holds at least one element.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: T) {
        let i = self.index(c, y, x);
        self.data[i] = value;
    }

    pub fn row(&self, c: usize, y: usize) -> &[T] {
        let start = self.index(c, y, 0);
        &self.data[start..start + self.width]
    }

    pub fn row_mut(&mut self, c: usize, y: usize) -> &mut [T] {
        let start = self.index(c, y, 0);
        let w = self.width;
        &mut self.data[start..start + w]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Tensor3<U> {
        Tensor3 {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Tensor3<U>) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Element-wise combination of two equally shaped tensors.
    pub fn zip_with<U: Copy, V: Copy>(&self, other: &Tensor3<U>, mut f: impl FnMut(T, U) -> V) -> Result<Tensor3<V>> {
        if !self.same_dims(other) {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.dims(), other.dims())));
        }
        Ok(Tensor3 {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }
}

/// Largest absolute element value.
pub fn linf_norm<T: Scalar>(t: &Tensor3<T>) -> f64 {
    t.data().iter().fold(0.0f64, |m, &v| m.max(v.to_f64().abs()))
}

/// Bit width and scale used to digitize real values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    magnitude_bits: u32,
    signed: bool,
    scale: f64,
}

impl QuantSpec {
    pub fn new(magnitude_bits: u32, signed: bool, scale: f64) -> Result<Self> {
        if !(1..=31).contains(&magnitude_bits) {
            return Err(Error::InvalidParameter(format!("magnitude_bits must be in 1..=31, got {magnitude_bits}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { magnitude_bits, signed, scale })
    }

    /// Sign plus magnitude over an 8-bit pixel scale: real 1.0 maps to 255.
    pub fn noise_on_8bit(magnitude_bits: u32) -> Result<Self> {
        Self::new(magnitude_bits, true, 1.0 / 255.0)
    }

    /// Unsigned 8-bit pixels for images normalized to [0, 1].
    pub fn pixels_8bit() -> Self {
        Self { magnitude_bits: 8, signed: false, scale: 1.0 / 255.0 }
    }

    pub fn magnitude_bits(&self) -> u32 {
        self.magnitude_bits
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn max_level(&self) -> i64 {
        (1i64 << self.magnitude_bits) - 1
    }

    pub fn min_level(&self) -> i64 {
        if self.signed {
            -self.max_level()
        } else {
            0
        }
    }
}

/// Rounds `value / scale` to the nearest integer level, ties away from zero.
pub fn quantize(t: &Tensor3<f64>, q: &QuantSpec) -> Result<Tensor3<i32>> {
    let (min, max) = (q.min_level(), q.max_level());
    let mut data = Vec::with_capacity(t.len());
    for (index, &v) in t.data().iter().enumerate() {
        let scaled = v / q.scale;
        // NaN and infinities are never representable.
        let rounded = Float::round(scaled);
        if !rounded.is_finite() || rounded < min as f64 || rounded > max as f64 {
            let level = if rounded.is_finite() { rounded as i64 } else { i64::MAX };
            return Err(Error::OutOfRange { index, level, min, max });
        }
        data.push(rounded as i32);
    }
    Tensor3::new(t.channels(), t.height(), t.width(), data)
}

/// Maps integer levels back to reals (`level * scale`).
pub fn dequantize(t: &Tensor3<i32>, q: &QuantSpec) -> Tensor3<f64> {
    t.map(|v| v as f64 * q.scale)
}

/// Population statistics of a digitized tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitStats {
    pub total_elements: u64,
    pub nonzero_elements: u64,
    /// Bits needed to represent the largest magnitude (0 for an all-zero tensor).
    pub max_magnitude_bits: u32,
    /// Set bits summed over all magnitudes (sign excluded).
    pub total_nonzero_bits: u64,
}

pub fn bit_stats(t: &Tensor3<i32>) -> BitStats {
    let mut stats =
        BitStats { total_elements: t.len() as u64, nonzero_elements: 0, max_magnitude_bits: 0, total_nonzero_bits: 0 };
    for &v in t.data() {
        let m = v.unsigned_abs();
        if m != 0 {
            stats.nonzero_elements += 1;
        }
        stats.max_magnitude_bits = stats.max_magnitude_bits.max(u32::BITS - m.leading_zeros());
        stats.total_nonzero_bits += u64::from(m.count_ones());
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t1(v: Vec<f64>) -> Tensor3<f64> {
        let n = v.len();
        Tensor3::new(1, 1, n, v).unwrap()
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(matches!(Tensor3::<f64>::new(0, 1, 1, vec![]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(Tensor3::new(1, 2, 2, vec![1.0; 3]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn rows_are_contiguous() {
        let t = Tensor3::from_fn(2, 3, 4, |c, y, x| (c * 100 + y * 10 + x) as i32).unwrap();
        assert_eq!(t.row(1, 2), &[120, 121, 122, 123]);
        assert_eq!(t.get(0, 1, 3), 13);
    }

    #[test]
    fn quantize_zero() {
        let q = QuantSpec::new(4, true, 0.3).unwrap();
        let z = Tensor3::zeros(2, 3, 3).unwrap();
        assert!(quantize(&z, &q).unwrap().data().iter().all(|&v| v == 0));
    }

    #[test]
    fn quantize_range_limits() {
        let four = QuantSpec::new(4, true, 1.0).unwrap();
        let three = QuantSpec::new(3, true, 1.0).unwrap();
        assert_eq!(quantize(&t1(vec![12.75]), &four).unwrap().data(), &[13]);
        assert_eq!(quantize(&t1(vec![12.75]), &three), Err(Error::OutOfRange { index: 0, level: 13, min: -7, max: 7 }));
        assert_eq!(quantize(&t1(vec![-3.4]), &four).unwrap().data(), &[-3]);
        let unsigned = QuantSpec::new(4, false, 1.0).unwrap();
        assert!(quantize(&t1(vec![-1.0]), &unsigned).is_err());
        assert!(quantize(&t1(vec![f64::NAN]), &four).is_err());
    }

    #[test]
    fn quantize_ties_away_from_zero() {
        let q = QuantSpec::new(4, true, 1.0).unwrap();
        assert_eq!(quantize(&t1(vec![2.5, -2.5, 0.5, -0.5]), &q).unwrap().data(), &[3, -3, 1, -1]);
    }

    #[test]
    fn quantize_exhaustive_range_scan() {
        // Every level k in [-20, 20] with offsets inside the rounding cell.
        for bits in 1..=5u32 {
            let q = QuantSpec::new(bits, true, 0.5).unwrap();
            let max = (1i64 << bits) - 1;
            for k in -20i64..=20 {
                for off in [-0.24, 0.0, 0.24] {
                    let v = (k as f64 + off) * 0.5;
                    let r = quantize(&t1(vec![v]), &q);
                    if k.abs() <= max {
                        assert_eq!(r.unwrap().data(), &[k as i32]);
                    } else {
                        assert!(r.is_err());
                    }
                }
            }
        }
    }

    #[test]
    fn linf_cases() {
        assert_eq!(linf_norm(&Tensor3::<f64>::zeros(1, 2, 2).unwrap()), 0.0);
        assert_eq!(linf_norm(&Tensor3::new(1, 1, 2, vec![-7i32, 3]).unwrap()), 7.0);
    }

    #[test]
    fn bit_stats_cases() {
        let z = Tensor3::<i32>::zeros(1, 2, 3).unwrap();
        assert_eq!(
            bit_stats(&z),
            BitStats { total_elements: 6, nonzero_elements: 0, max_magnitude_bits: 0, total_nonzero_bits: 0 }
        );
        let twelve = Tensor3::new(1, 1, 1, vec![12]).unwrap();
        assert_eq!(
            bit_stats(&twelve),
            BitStats { total_elements: 1, nonzero_elements: 1, max_magnitude_bits: 4, total_nonzero_bits: 2 }
        );
        let small = Tensor3::new(1, 1, 3, vec![1, 2, 3]).unwrap();
        let s = bit_stats(&small);
        assert_eq!((s.nonzero_elements, s.max_magnitude_bits, s.total_nonzero_bits), (3, 2, 4));
        let neg = Tensor3::new(1, 1, 2, vec![-12, i32::MIN]).unwrap();
        assert_eq!(bit_stats(&neg).max_magnitude_bits, 32);
    }
}
