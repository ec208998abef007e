use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::{conv2d, dense, maxpool2_with_argmax, relu, ConvGeometry, FilterBank, Matrix};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Layer sizes of a [`TinyCnn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub num_classes: usize,
}

impl Default for Architecture {
    /// 1×12×12 input, four 3×3 filters, six classes.
    fn default() -> Self {
        Self { input_channels: 1, input_height: 12, input_width: 12, filters: 4, kernel: 3, stride: 1, num_classes: 6 }
    }
}

/// conv → ReLU → 2×2 max-pool → flatten → dense → softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyCnn {
    input_dims: (usize, usize, usize),
    conv: FilterBank<f64>,
    geom: ConvGeometry,
    fc: Matrix<f64>,
    fc_bias: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub conv_out: Tensor3<f64>,
    /// Flat index into `conv_out` that won each pooling window.
    pub pool_argmax: Vec<usize>,
    pub features: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Forward {
    pub fn prediction(&self) -> usize {
        argmax(&self.logits)
    }
}

/// Gradients of the cross-entropy loss, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv_weights: Vec<f64>,
    pub conv_bias: Vec<f64>,
    pub fc_weights: Vec<f64>,
    pub fc_bias: Vec<f64>,
    pub input: Tensor3<f64>,
    pub loss: f64,
}

impl Gradients {
    pub(crate) fn zeros_like(model: &TinyCnn) -> Self {
        let (c, h, w) = model.input_dims;
        Self {
            conv_weights: alloc::vec![0.0; model.conv.weights().len()],
            conv_bias: alloc::vec![0.0; model.conv.out_channels()],
            fc_weights: alloc::vec![0.0; model.fc.data().len()],
            fc_bias: alloc::vec![0.0; model.fc.rows()],
            input: Tensor3::zeros(c, h, w).expect("model input dims are positive"),
            loss: 0.0,
        }
    }

    /// `self += scale · other` over every parameter gradient (input gradient and loss too).
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d += a * s);
        }
        axpy(&mut self.conv_weights, &other.conv_weights, scale);
        axpy(&mut self.conv_bias, &other.conv_bias, scale);
        axpy(&mut self.fc_weights, &other.fc_weights, scale);
        axpy(&mut self.fc_bias, &other.fc_bias, scale);
        axpy(self.input.data_mut(), other.input.data(), scale);
        self.loss += scale * other.loss;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| Float::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `-ln softmax(logits)[label]`, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + Float::ln(logits.iter().map(|&z| Float::exp(z - max)).sum::<f64>());
    lse - logits[label]
}

impl TinyCnn {
    pub fn from_parts(
        input_dims: (usize, usize, usize),
        conv: FilterBank<f64>,
        geom: ConvGeometry,
        fc: Matrix<f64>,
        fc_bias: Vec<f64>,
    ) -> Result<Self> {
        let (c, h, w) = input_dims;
        if c != conv.in_channels() {
            return Err(Error::ShapeMismatch(format!("input has {c} channels, conv expects {}", conv.in_channels())));
        }
        let (oh, ow) = geom.output_dims(h, w, conv.kernel_h(), conv.kernel_w())?;
        if oh % 2 != 0 || ow % 2 != 0 {
            return Err(Error::BadGeometry(format!("conv output {oh}x{ow} is not poolable by 2")));
        }
        let features = conv.out_channels() * (oh / 2) * (ow / 2);
        if fc.cols() != features || fc.rows() != fc_bias.len() || fc.rows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "dense layer is {}x{} with {} biases, expected {features} inputs",
                fc.rows(),
                fc.cols(),
                fc_bias.len()
            )));
        }
        Ok(Self { input_dims, conv, geom, fc, fc_bias })
    }

    /// Uniform ±sqrt(6 / fan_in) weights and zero biases from `seed`.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = arch.input_channels * arch.kernel * arch.kernel;
        let n = arch.filters * fan_in;
        let conv = FilterBank::without_bias(
            arch.filters,
            arch.input_channels,
            arch.kernel,
            arch.kernel,
            uniform_vec(&mut rng, n, fan_in),
        )?;
        let geom = ConvGeometry::valid(arch.stride, arch.stride);
        let (oh, ow) = geom.output_dims(arch.input_height, arch.input_width, arch.kernel, arch.kernel)?;
        let features = arch.filters * (oh / 2) * (ow / 2);
        let fc = Matrix::new(arch.num_classes, features, uniform_vec(&mut rng, arch.num_classes * features, features))?;
        Self::from_parts(
            (arch.input_channels, arch.input_height, arch.input_width),
            conv,
            geom,
            fc,
            alloc::vec![0.0; arch.num_classes],
        )
    }

    pub fn input_dims(&self) -> (usize, usize, usize) {
        self.input_dims
    }

    pub fn num_classes(&self) -> usize {
        self.fc.rows()
    }

    pub fn conv(&self) -> &FilterBank<f64> {
        &self.conv
    }

    pub fn geometry(&self) -> &ConvGeometry {
        &self.geom
    }

    pub fn fc(&self) -> &Matrix<f64> {
        &self.fc
    }

    pub fn fc_bias(&self) -> &[f64] {
        &self.fc_bias
    }

    fn check_input(&self, x: &Tensor3<f64>) -> Result<()> {
        if x.dims() != self.input_dims {
            return Err(Error::ShapeMismatch(format!("model expects {:?}, got {:?}", self.input_dims, x.dims())));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor3<f64>) -> Result<Forward> {
        self.check_input(x)?;
        self.forward_from_conv(conv2d(x, &self.conv, &self.geom)?)
    }

    /// Runs every layer after the first convolution on a supplied
    /// first-layer output.
    pub fn forward_from_conv(&self, conv_out: Tensor3<f64>) -> Result<Forward> {
        let (pooled, pool_argmax) = maxpool2_with_argmax(&relu(&conv_out))?;
        let features = pooled.into_data();
        let logits = dense(&features, &self.fc, &self.fc_bias)?;
        let probs = softmax(&logits);
        Ok(Forward { conv_out, pool_argmax, features, logits, probs })
    }

    pub fn predict(&self, x: &Tensor3<f64>) -> Result<usize> {
        Ok(self.forward(x)?.prediction())
    }

    pub fn loss(&self, x: &Tensor3<f64>, label: usize) -> Result<f64> {
        self.check_label(label)?;
        Ok(cross_entropy(&self.forward(x)?.logits, label))
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.num_classes() {
            return Err(Error::ShapeMismatch(format!("label {label} out of range for {} classes", self.num_classes())));
        }
        Ok(())
    }

    /// Gradients of the cross-entropy loss at `(x, label)`.
    pub fn backward(&self, x: &Tensor3<f64>, label: usize) -> Result<Gradients> {
        self.backward_scaled(x, label, 1.0)
    }

    /// Gradients of `scale · loss`.
    pub fn backward_scaled(&self, x: &Tensor3<f64>, label: usize, scale: f64) -> Result<Gradients> {
        self.check_label(label)?;
        let fwd = self.forward(x)?;
        let mut g = Gradients::zeros_like(self);
        g.loss = scale * cross_entropy(&fwd.logits, label);

        let classes = self.num_classes();
        let nfeat = self.fc.cols();
        let dlogits: Vec<f64> =
            (0..classes).map(|i| scale * (fwd.probs[i] - if i == label { 1.0 } else { 0.0 })).collect();
        let mut dfeat = alloc::vec![0.0; nfeat];
        for (i, &dl) in dlogits.iter().enumerate() {
            g.fc_bias[i] = dl;
            let row = self.fc.row(i);
            for j in 0..nfeat {
                g.fc_weights[i * nfeat + j] = dl * fwd.features[j];
                dfeat[j] += row[j] * dl;
            }
        }

        // Max-pool routes to the window winner; ReLU gates on positive pre-activations.
        let conv_out = &fwd.conv_out;
        let mut dconv = alloc::vec![0.0; conv_out.len()];
        for (&src, &d) in fwd.pool_argmax.iter().zip(&dfeat) {
            if conv_out.data()[src] > 0.0 {
                dconv[src] += d;
            }
        }

        let (oc, ic, kh, kw) = self.conv.dims();
        let (_, out_h, out_w) = conv_out.dims();
        let (in_h, in_w) = (x.height() as isize, x.width() as isize);
        for o in 0..oc {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let d = dconv[(o * out_h + oy) * out_w + ox];
                    if d == 0.0 {
                        continue;
                    }
                    g.conv_bias[o] += d;
                    let top = (oy * self.geom.stride_v) as isize - self.geom.pad_h as isize;
                    let left = (ox * self.geom.stride_h) as isize - self.geom.pad_w as isize;
                    for c in 0..ic {
                        for j in 0..kh {
                            let y = top + j as isize;
                            if y < 0 || y >= in_h {
                                continue;
                            }
                            for k in 0..kw {
                                let xx = left + k as isize;
                                if xx < 0 || xx >= in_w {
                                    continue;
                                }
                                let wi = self.conv.weight_index(o, c, j, k);
                                let ii = x.index(c, y as usize, xx as usize);
                                g.conv_weights[wi] += d * x.data()[ii];
                                g.input.data_mut()[ii] += d * self.conv.weights()[wi];
                            }
                        }
                    }
                }
            }
        }
        Ok(g)
    }

    /// Gradient step `w ← w − α·g` on every parameter.
    pub fn apply_step(&mut self, g: &Gradients, learning_rate: f64) {
        fn step(w: &mut [f64], g: &[f64], a: f64) {
            w.iter_mut().zip(g).for_each(|(w, &g)| *w -= a * g);
        }
        step(self.conv.weights_mut(), &g.conv_weights, learning_rate);
        step(self.conv.bias_mut(), &g.conv_bias, learning_rate);
        step(self.fc.data_mut(), &g.fc_weights, learning_rate);
        step(&mut self.fc_bias, &g.fc_bias, learning_rate);
    }

    /// Every parameter in a fixed order: conv weights, conv bias, fc weights, fc bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::new();
        p.extend_from_slice(self.conv.weights());
        p.extend_from_slice(self.conv.bias());
        p.extend_from_slice(self.fc.data());
        p.extend_from_slice(&self.fc_bias);
        p
    }

    /// Mutable access to parameter `i` in [`parameters`](Self::parameters) order.
    pub fn parameter_mut(&mut self, i: usize) -> &mut f64 {
        let nw = self.conv.weights().len();
        let nb = self.conv.bias().len();
        let nf = self.fc.data().len();
        if i < nw {
            &mut self.conv.weights_mut()[i]
        } else if i < nw + nb {
            &mut self.conv.bias_mut()[i - nw]
        } else if i < nw + nb + nf {
            &mut self.fc.data_mut()[i - nw - nb]
        } else {
            &mut self.fc_bias[i - nw - nb - nf]
        }
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = Float::sqrt(6.0 / fan_in as f64);
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

impl Gradients {
    /// Parameter gradients flattened in [`TinyCnn::parameters`] order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut p = Vec::new();
        p.extend_from_slice(&self.conv_weights);
        p.extend_from_slice(&self.conv_bias);
        p.extend_from_slice(&self.fc_weights);
        p.extend_from_slice(&self.fc_bias);
        p
    }
}
