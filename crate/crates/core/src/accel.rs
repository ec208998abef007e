//! MAC accounting for a zero-skipping systolic array and the row-placement
//! model of the accelerator's input buffer.
//!
//! The cycle figure is an occupancy lower bound: executed MACs spread
//! perfectly over every processing element. No dataflow schedule is modeled.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::conv::{ConvGeometry, FilterBank};
use crate::error::{Error, Result};
use crate::interleave::{attacked_geometry, duplicate_filter_rows, interleave_rows};
use crate::tensor::{Scalar, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowSource {
    Image,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowDescriptor {
    pub source: RowSource,
    pub channel: usize,
    pub index: usize,
    pub address: u64,
}

/// Flat byte-addressed placement of tensor rows, one row per `row_stride`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryImage {
    pub base_address: u64,
    pub row_stride: u64,
    pub rows: Vec<RowDescriptor>,
}

impl MemoryImage {
    /// Reads rows in address order and concatenates them into a tensor of
    /// the same width, one output row per memory row.
    pub fn stream<T: Scalar>(&self, image: &Tensor3<T>, noise: Option<&Tensor3<T>>) -> Result<Tensor3<T>> {
        let c = image.channels();
        if self.rows.is_empty() || self.rows.len() % c != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} memory rows do not divide into {c} channels",
                self.rows.len()
            )));
        }
        let mut order: Vec<&RowDescriptor> = self.rows.iter().collect();
        order.sort_by_key(|r| r.address);
        let mut data = Vec::with_capacity(self.rows.len() * image.width());
        for r in order {
            let src = match r.source {
                RowSource::Image => image,
                RowSource::Noise => noise
                    .ok_or_else(|| Error::ShapeMismatch("memory image references noise rows but none given".into()))?,
            };
            if r.channel >= src.channels() || r.index >= src.height() {
                return Err(Error::ShapeMismatch(format!("row ({}, {}) outside {:?}", r.channel, r.index, src.dims())));
            }
            data.extend_from_slice(src.row(r.channel, r.index));
        }
        Tensor3::new(c, self.rows.len() / c, image.width(), data)
    }
}

/// Lays out image rows contiguously from `base`, channel by channel.
///
/// With `noise`, noise row `r` is placed right after image row `r`
/// (the attacked layout); without it the rows are packed back to back.
pub fn layout_rows<T: Scalar>(image: &Tensor3<T>, noise: Option<&Tensor3<T>>, base: u64) -> Result<MemoryImage> {
    if let Some(n) = noise {
        if !image.same_dims(n) {
            return Err(Error::ShapeMismatch(format!("image {:?} vs noise {:?}", image.dims(), n.dims())));
        }
    }
    let row_stride = (image.width() * core::mem::size_of::<T>()) as u64;
    let per_row = if noise.is_some() { 2 } else { 1 };
    let mut rows = Vec::with_capacity(image.channels() * image.height() * per_row);
    let mut push = |source, channel, index| {
        let address = base + rows.len() as u64 * row_stride;
        rows.push(RowDescriptor { source, channel, index, address });
    };
    for c in 0..image.channels() {
        for r in 0..image.height() {
            push(RowSource::Image, c, r);
            if noise.is_some() {
                push(RowSource::Noise, c, r);
            }
        }
    }
    Ok(MemoryImage { base_address: base, row_stride, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystolicConfig {
    pub rows: usize,
    pub cols: usize,
    pub zero_skip: bool,
}

impl SystolicConfig {
    pub fn new(rows: usize, cols: usize, zero_skip: bool) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!("systolic array must be at least 1x1, got {rows}x{cols}")));
        }
        Ok(Self { rows, cols, zero_skip })
    }

    /// 256×256 array, the 65,536-MAC datacenter TPU class.
    pub fn tpu(zero_skip: bool) -> Self {
        Self { rows: 256, cols: 256, zero_skip }
    }

    /// 8×8 array for quick experiments.
    pub fn small(zero_skip: bool) -> Self {
        Self { rows: 8, cols: 8, zero_skip }
    }

    pub fn pes(&self) -> u64 {
        (self.rows * self.cols) as u64
    }
}

/// MAC and cycle accounting for one convolution on the array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub mac_issued: u64,
    pub mac_skipped: u64,
    pub mac_executed: u64,
    /// Occupancy lower bound: `ceil(mac_executed / (rows · cols))`.
    pub cycles: u64,
    pub array_utilization: f64,
}

impl SimReport {
    fn from_counts(issued: u64, skipped: u64, cfg: &SystolicConfig) -> Self {
        let executed = issued - skipped;
        let pes = cfg.pes();
        let cycles = executed.div_ceil(pes);
        let array_utilization = if cycles == 0 { 0.0 } else { executed as f64 / (cycles * pes) as f64 };
        Self { mac_issued: issued, mac_skipped: skipped, mac_executed: executed, cycles, array_utilization }
    }
}

/// Counts MACs issued by `conv2d(input, filters, geom)`.
///
/// Every (output element, filter tap) pair issues one MAC, padded taps
/// included. With zero-skip, a MAC whose input or weight is exactly zero
/// (a padded tap reads zero) is skipped.
pub fn count_macs<T: Scalar>(
    input: &Tensor3<T>,
    filters: &FilterBank<T>,
    geom: &ConvGeometry,
    cfg: &SystolicConfig,
) -> Result<SimReport> {
    if input.channels() != filters.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, filters expect {}",
            input.channels(),
            filters.in_channels()
        )));
    }
    let (oc, ic, kh, kw) = filters.dims();
    let (out_h, out_w) = geom.output_dims(input.height(), input.width(), kh, kw)?;
    let issued = (out_h * out_w * oc * ic * kh * kw) as u64;
    if !cfg.zero_skip {
        return Ok(SimReport::from_counts(issued, 0, cfg));
    }
    let (in_h, in_w) = (input.height() as isize, input.width() as isize);
    let mut skipped = 0u64;
    for o in 0..oc {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let top = (oy * geom.stride_v) as isize - geom.pad_h as isize;
                let left = (ox * geom.stride_h) as isize - geom.pad_w as isize;
                for c in 0..ic {
                    for j in 0..kh {
                        let y = top + j as isize;
                        for (k, &w) in filters.kernel_row(o, c, j).iter().enumerate() {
                            let x = left + k as isize;
                            let padded = y < 0 || y >= in_h || x < 0 || x >= in_w;
                            if padded || w.is_zero() || input.get(c, y as usize, x as usize).is_zero() {
                                skipped += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(SimReport::from_counts(issued, skipped, cfg))
}

/// MAC reports for the clean convolution, the interleaved convolution and,
/// for reference, the convolution of the noise alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackFootprint {
    pub clean: SimReport,
    pub attacked: SimReport,
    pub noise_only: SimReport,
}

impl AttackFootprint {
    pub fn issued_ratio(&self) -> f64 {
        self.attacked.mac_issued as f64 / self.clean.mac_issued as f64
    }

    pub fn extra_executed(&self) -> u64 {
        self.attacked.mac_executed - self.clean.mac_executed
    }
}

pub fn compare_attack_footprint<T: Scalar>(
    image: &Tensor3<T>,
    noise: &Tensor3<T>,
    filters: &FilterBank<T>,
    geom: &ConvGeometry,
    cfg: &SystolicConfig,
) -> Result<AttackFootprint> {
    if geom.pad_h != 0 {
        return Err(Error::BadGeometry(format!(
            "interleaved convolution is only defined for pad_h == 0, got {}",
            geom.pad_h
        )));
    }
    let woven = interleave_rows(image, noise)?.woven;
    let dup = duplicate_filter_rows(filters).duplicated;
    Ok(AttackFootprint {
        clean: count_macs(image, filters, geom, cfg)?,
        attacked: count_macs(&woven, &dup, &attacked_geometry(geom), cfg)?,
        noise_only: count_macs(noise, filters, geom, cfg)?,
    })
}

/// Summary statistics of a set of MAC counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    pub count: usize,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub min: u64,
    pub max: u64,
}

impl CountSummary {
    pub fn from_counts(counts: &[u64]) -> Option<Self> {
        let (&first, _) = counts.split_first()?;
        let n = counts.len() as f64;
        let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
        let variance = counts.iter().map(|&c| (c as f64 - mean) * (c as f64 - mean)).sum::<f64>() / n;
        let (min, max) = counts.iter().fold((first, first), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        Some(Self { count: counts.len(), mean, variance, min, max })
    }

    pub fn contains(&self, value: u64) -> bool {
        (self.min..=self.max).contains(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn regular_and_attacked_layouts() {
        let img = Tensor3::new(1, 2, 3, vec![1i32, 2, 3, 4, 5, 6]).unwrap();
        let m = layout_rows(&img, None, 0x1000).unwrap();
        assert_eq!(m.row_stride, 12);
        assert_eq!(
            m.rows,
            vec![
                RowDescriptor { source: RowSource::Image, channel: 0, index: 0, address: 0x1000 },
                RowDescriptor { source: RowSource::Image, channel: 0, index: 1, address: 0x100c },
            ]
        );
        let noise = Tensor3::filled(1, 2, 3, 9i32).unwrap();
        let m = layout_rows(&img, Some(&noise), 0).unwrap();
        let tags: Vec<_> = m.rows.iter().map(|r| (r.source, r.index)).collect();
        assert_eq!(
            tags,
            vec![(RowSource::Image, 0), (RowSource::Noise, 0), (RowSource::Image, 1), (RowSource::Noise, 1)]
        );
        assert!(m.rows.windows(2).all(|w| w[1].address == w[0].address + m.row_stride));
        assert_eq!(m.stream(&img, Some(&noise)).unwrap(), interleave_rows(&img, &noise).unwrap().woven);
        assert_eq!(layout_rows(&img, None, 0).unwrap().stream(&img, None).unwrap(), img);
        assert!(m.stream(&img, None).is_err());
    }

    #[test]
    fn layout_shape_mismatch() {
        let img = Tensor3::<i32>::zeros(1, 2, 3).unwrap();
        let noise = Tensor3::<i32>::zeros(1, 3, 3).unwrap();
        assert!(matches!(layout_rows(&img, Some(&noise), 0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn dense_count_closed_form() {
        let x = Tensor3::filled(1, 4, 4, 1i32).unwrap();
        let f = FilterBank::without_bias(1, 1, 2, 2, vec![1; 4]).unwrap();
        let r = count_macs(&x, &f, &ConvGeometry::default(), &SystolicConfig::small(true)).unwrap();
        assert_eq!((r.mac_issued, r.mac_skipped, r.mac_executed), (36, 0, 36));
        assert_eq!(r.cycles, 1);
        assert!((r.array_utilization - 36.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn all_zero_input_skips_everything() {
        let x = Tensor3::<i32>::zeros(2, 5, 5).unwrap();
        let f = FilterBank::without_bias(3, 2, 3, 3, vec![1; 54]).unwrap();
        let r = count_macs(&x, &f, &ConvGeometry::default(), &SystolicConfig::tpu(true)).unwrap();
        assert_eq!(r.mac_executed, 0);
        assert_eq!(r.cycles, 0);
        assert_eq!(r.array_utilization, 0.0);
        let off = count_macs(&x, &f, &ConvGeometry::default(), &SystolicConfig::tpu(false)).unwrap();
        assert_eq!(off.mac_executed, off.mac_issued);
    }

    #[test]
    fn padded_taps_are_zero_operands() {
        let x = Tensor3::filled(1, 2, 2, 1i32).unwrap();
        let f = FilterBank::without_bias(1, 1, 3, 3, vec![1; 9]).unwrap();
        let r = count_macs(&x, &f, &ConvGeometry::padded(1, 1, 1, 1), &SystolicConfig::small(true)).unwrap();
        assert_eq!(r.mac_issued, 36);
        assert_eq!(r.mac_executed, 16);
    }

    #[test]
    fn zero_noise_footprint() {
        let img = Tensor3::from_fn(1, 6, 6, |_, y, x| ((y + x) % 3) as i32).unwrap();
        let z = Tensor3::zeros(1, 6, 6).unwrap();
        let f = FilterBank::without_bias(2, 1, 3, 2, (1..=12).collect()).unwrap();
        let g = ConvGeometry::default();
        let on = compare_attack_footprint(&img, &z, &f, &g, &SystolicConfig::small(true)).unwrap();
        assert_eq!(on.attacked.mac_executed, on.clean.mac_executed);
        assert_eq!(on.extra_executed(), 0);
        let off = compare_attack_footprint(&img, &z, &f, &g, &SystolicConfig::small(false)).unwrap();
        assert_eq!(off.attacked.mac_issued, 2 * off.clean.mac_issued);
        assert_eq!(off.issued_ratio(), 2.0);
    }

    #[test]
    fn summary_stats() {
        let s = CountSummary::from_counts(&[2, 4, 4, 4, 5, 5, 7, 9]).unwrap();
        assert_eq!((s.count, s.min, s.max), (8, 2, 9));
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.variance, 4.0);
        assert!(s.contains(9) && !s.contains(10));
        assert!(CountSummary::from_counts(&[]).is_none());
    }

    #[test]
    fn config_validation() {
        assert!(SystolicConfig::new(0, 4, true).is_err());
        assert_eq!(SystolicConfig::tpu(true).pes(), 65_536);
    }
}
