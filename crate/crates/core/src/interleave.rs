//! Noise interleaving: adding a perturbation to a convolution's input without
//! ever performing the addition.
//!
//! Convolution is additive in its input, so `F * (I + n) = F * I + F * n`.
//! Weaving noise row `r` directly below image row `r`, repeating every filter
//! row twice and doubling the vertical stride makes each output element of
//! the woven convolution pick up both halves of that sum:
//!
//! * output row `m` starts at woven row `2·m·s` (`s` = original vertical stride),
//! * duplicated filter row `2j` meets woven row `2(m·s + j)`, image row `m·s + j`,
//! * duplicated filter row `2j + 1` meets woven row `2(m·s + j) + 1`, noise row `m·s + j`.
//!
//! The bias is kept as-is so it still contributes exactly once.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::conv::{conv2d, ConvGeometry, FilterBank};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor3};

/// Clean image, its perturbation, and the row-woven tensor built from both.
#[derive(Debug, Clone, PartialEq)]
pub struct InterleavedInput<T> {
    pub base: Tensor3<T>,
    pub noise: Tensor3<T>,
    /// Height `2·H`; row `2r` is image row `r`, row `2r + 1` is noise row `r`.
    pub woven: Tensor3<T>,
}

pub fn interleave_rows<T: Scalar>(image: &Tensor3<T>, noise: &Tensor3<T>) -> Result<InterleavedInput<T>> {
    if !image.same_dims(noise) {
        return Err(Error::ShapeMismatch(format!("image {:?} vs noise {:?}", image.dims(), noise.dims())));
    }
    let (c, h, w) = image.dims();
    let mut data = Vec::with_capacity(2 * image.len());
    for ch in 0..c {
        for r in 0..h {
            data.extend_from_slice(image.row(ch, r));
            data.extend_from_slice(noise.row(ch, r));
        }
    }
    Ok(InterleavedInput { base: image.clone(), noise: noise.clone(), woven: Tensor3::new(c, 2 * h, w, data)? })
}

/// Splits a woven tensor back into `(image, noise)`.
pub fn deinterleave_rows<T: Scalar>(woven: &Tensor3<T>) -> Result<(Tensor3<T>, Tensor3<T>)> {
    let (c, h2, w) = woven.dims();
    if h2 % 2 != 0 {
        return Err(Error::ShapeMismatch(format!("woven height {h2} is odd")));
    }
    let h = h2 / 2;
    let mut image = Vec::with_capacity(c * h * w);
    let mut noise = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for r in 0..h {
            image.extend_from_slice(woven.row(ch, 2 * r));
            noise.extend_from_slice(woven.row(ch, 2 * r + 1));
        }
    }
    Ok((Tensor3::new(c, h, w, image)?, Tensor3::new(c, h, w, noise)?))
}

/// A filter bank and its row-duplicated counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackedFilter<T> {
    pub source: FilterBank<T>,
    /// Kernel height doubled; rows `2j` and `2j + 1` both equal source row `j`.
    /// Bias is copied unchanged.
    pub duplicated: FilterBank<T>,
}

pub fn duplicate_filter_rows<T: Scalar>(f: &FilterBank<T>) -> AttackedFilter<T> {
    let (oc, ic, kh, kw) = f.dims();
    let mut weights = Vec::with_capacity(2 * f.weights().len());
    for o in 0..oc {
        for c in 0..ic {
            for j in 0..kh {
                let row = f.kernel_row(o, c, j);
                weights.extend_from_slice(row);
                weights.extend_from_slice(row);
            }
        }
    }
    let duplicated = FilterBank::new(oc, ic, 2 * kh, kw, weights, f.bias().to_vec())
        .expect("duplicated dims follow from a valid bank");
    AttackedFilter { source: f.clone(), duplicated }
}

/// Doubles the vertical stride; everything else is unchanged.
pub fn attacked_geometry(g: &ConvGeometry) -> ConvGeometry {
    ConvGeometry { stride_v: 2 * g.stride_v, ..*g }
}

fn require_unpadded_rows(g: &ConvGeometry) -> Result<()> {
    if g.pad_h != 0 {
        return Err(Error::BadGeometry(format!(
            "interleaved convolution is only defined for pad_h == 0, got {}",
            g.pad_h
        )));
    }
    Ok(())
}

/// Convolves an already woven tensor through the duplicated-row, doubled-stride path.
pub fn conv_woven<T: Scalar>(woven: &Tensor3<T>, filters: &FilterBank<T>, geom: &ConvGeometry) -> Result<Tensor3<T>> {
    require_unpadded_rows(geom)?;
    let attacked = duplicate_filter_rows(filters);
    conv2d(woven, &attacked.duplicated, &attacked_geometry(geom))
}

/// Convolution of `image + noise` computed through the woven input.
pub fn attacked_conv<T: Scalar>(
    image: &Tensor3<T>,
    noise: &Tensor3<T>,
    filters: &FilterBank<T>,
    geom: &ConvGeometry,
) -> Result<Tensor3<T>> {
    require_unpadded_rows(geom)?;
    let woven = interleave_rows(image, noise)?.woven;
    conv_woven(&woven, filters, geom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub max_abs_diff: f64,
    pub exact: bool,
}

/// Compares the woven path against explicit `conv2d(image + noise)`.
pub fn equivalence_report<T: Scalar>(
    image: &Tensor3<T>,
    noise: &Tensor3<T>,
    filters: &FilterBank<T>,
    geom: &ConvGeometry,
) -> Result<EquivalenceReport> {
    let woven = interleave_rows(image, noise)?.woven;
    equivalence_report_woven(&woven, image, noise, filters, geom)
}

/// Like [`equivalence_report`] but convolves a caller-supplied woven tensor,
/// so a tampered weave can be checked against the clean reference.
pub fn equivalence_report_woven<T: Scalar>(
    woven: &Tensor3<T>,
    image: &Tensor3<T>,
    noise: &Tensor3<T>,
    filters: &FilterBank<T>,
    geom: &ConvGeometry,
) -> Result<EquivalenceReport> {
    let attacked = conv_woven(woven, filters, geom)?;
    let direct = conv2d(&image.add(noise)?, filters, geom)?;
    if !attacked.same_dims(&direct) {
        return Ok(EquivalenceReport { max_abs_diff: f64::INFINITY, exact: false });
    }
    let mut max_abs_diff = 0.0f64;
    let mut magnitude = 0.0f64;
    let mut identical = true;
    for (&a, &d) in attacked.data().iter().zip(direct.data()) {
        identical &= a == d;
        max_abs_diff = max_abs_diff.max((a.to_f64() - d.to_f64()).abs());
        magnitude = magnitude.max(d.to_f64().abs());
    }
    let exact = if T::INTEGRAL { identical } else { max_abs_diff <= 1e-9 * magnitude };
    Ok(EquivalenceReport { max_abs_diff, exact })
}
