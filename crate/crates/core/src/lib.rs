//! Core numerics for the noise-interleaving convolution attack laboratory.
//!
//! Everything in this crate is pure computation over owned values and builds
//! without `std` (only `alloc` is required):
//!
//! * [`tensor`]: channel-major tensors, quantization, norms, bit statistics.
//! * [`conv`]: reference convolution, ReLU, 2×2 max-pooling and dense layers.
//! * [`interleave`]: the row-interleaved input, row-duplicated filters and
//!   stride-doubled geometry whose convolution equals convolving the
//!   noise-added image.
//! * [`accel`]: a MAC/cycle occupancy model of a zero-skipping systolic
//!   array plus the row-placement memory model.
//! * [`adversary`]: a tiny trainable CNN, FGSM, universal perturbation
//!   crafting, random-noise baselines and fooling metrics.
//!
//! File formats, the CLI and run manifests live in the `weavelab` crate.
#![no_std]

extern crate alloc;

pub mod accel;
pub mod adversary;
pub mod conv;
pub mod error;
pub mod interleave;
pub mod tensor;

pub use accel::{
    compare_attack_footprint, count_macs, layout_rows, AttackFootprint, CountSummary, MemoryImage, RowDescriptor,
    RowSource, SimReport, SystolicConfig,
};
pub use conv::{conv2d, dense, maxpool2, relu, ConvGeometry, FilterBank, Matrix};
pub use error::{Error, Result};
pub use interleave::{
    attacked_conv, attacked_geometry, duplicate_filter_rows, equivalence_report, interleave_rows, AttackedFilter,
    EquivalenceReport, InterleavedInput,
};
pub use tensor::{bit_stats, linf_norm, quantize, BitStats, QuantSpec, Scalar, Tensor3};
