//! Seeded synthetic image corpus: class-conditional strokes over noisy background.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// A labeled image with pixels normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor3<f64>,
    pub label: usize,
}

/// Stroke shape drawn for each class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    HorizontalBar,
    VerticalBar,
    Diagonal,
    AntiDiagonal,
    Plus,
    Frame,
    Cross,
    Dot,
}

impl Pattern {
    pub const ALL: [Pattern; 8] = [
        Pattern::HorizontalBar,
        Pattern::VerticalBar,
        Pattern::Diagonal,
        Pattern::AntiDiagonal,
        Pattern::Plus,
        Pattern::Frame,
        Pattern::Cross,
        Pattern::Dot,
    ];

    /// Whether pixel `(y, x)` is on the stroke centered at `(cy, cx)` with
    /// half-extent `r`.
    fn covers(self, y: isize, x: isize, cy: isize, cx: isize, r: isize) -> bool {
        let (dy, dx) = (y - cy, x - cx);
        let within = dy.abs() <= r && dx.abs() <= r;
        match self {
            Pattern::HorizontalBar => dy == 0 && dx.abs() <= r,
            Pattern::VerticalBar => dx == 0 && dy.abs() <= r,
            Pattern::Diagonal => within && dy == dx,
            Pattern::AntiDiagonal => within && dy == -dx,
            Pattern::Plus => within && (dy == 0 || dx == 0),
            Pattern::Frame => within && (dy.abs() == r || dx.abs() == r),
            Pattern::Cross => within && (dy == dx || dy == -dx),
            Pattern::Dot => dy.abs() <= 1 && dx.abs() <= 1,
        }
    }
}

/// Generator for a class-balanced corpus of stroke images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticCorpus {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    /// Background pixels are uniform in `[0, background]`.
    pub background: f64,
    /// Stroke pixels are uniform in `[foreground.0, foreground.1]`.
    pub foreground: (f64, f64),
}

impl SyntheticCorpus {
    pub fn new(channels: usize, height: usize, width: usize, num_classes: usize) -> Result<Self> {
        if num_classes < 2 || num_classes > Pattern::ALL.len() {
            return Err(Error::InvalidParameter(format!(
                "synthetic corpus supports 2..={} classes, got {num_classes}",
                Pattern::ALL.len()
            )));
        }
        if channels == 0 || height < 7 || width < 7 {
            return Err(Error::InvalidParameter(format!(
                "synthetic images need at least 1x7x7, got {channels}x{height}x{width}"
            )));
        }
        Ok(Self { channels, height, width, num_classes, background: 0.25, foreground: (0.4, 0.7) })
    }

    /// `n` samples with labels cycling through the classes. `stream`
    /// separates independent splits drawn from the same seed.
    pub fn generate(&self, n: usize, seed: u64, stream: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        (0..n).map(|i| self.sample(&mut rng, i % self.num_classes)).collect()
    }

    fn sample(&self, rng: &mut ChaCha8Rng, label: usize) -> Sample {
        let pattern = Pattern::ALL[label];
        let (h, w) = (self.height as isize, self.width as isize);
        let r = rng.gen_range(2..=((h.min(w) - 1) / 2 - 1).max(2));
        let cy = rng.gen_range(r..h - r);
        let cx = rng.gen_range(r..w - r);
        let mut data = Vec::with_capacity(self.channels * self.height * self.width);
        for _ in 0..self.channels {
            let level = rng.gen_range(self.foreground.0..=self.foreground.1);
            for y in 0..h {
                for x in 0..w {
                    let bg = rng.gen_range(0.0..=self.background);
                    let v = if pattern.covers(y, x, cy, cx, r) { level.max(bg) } else { bg };
                    data.push(v);
                }
            }
        }
        Sample {
            image: Tensor3::new(self.channels, self.height, self.width, data).expect("dims validated at construction"),
            label,
        }
    }
}
