//! Randomly initialized networks and the statistics-capturing forward pass.

use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::{channel_moments, conv2d, Tensor};
use crate::arch::{validate, ArchitectureSpec, BlockKind, BlockSpec, Mode, ValidationError};
use crate::resource::{bottleneck_width, unit_input, ConstraintSet};
use crate::rng::{self, Domain};

/// Normalization epsilon inside BatchNorm layers.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, thiserror::Error)]
pub enum BuildError {
    #[error("architecture is invalid: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ValidationError>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForwardError {
    #[error("block {block}: expected {expected} input channels, got {found}")]
    ShapeMismatch { block: usize, expected: usize, found: usize },
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
    pub weight: Vec<f64>,
}

impl Conv {
    fn forward(&self, x: &Tensor) -> Tensor {
        conv2d(x, &self.weight, self.out_channels, self.kernel, self.stride, self.groups)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Convolution followed by BatchNorm, optionally ReLU.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub conv: Conv,
    /// Index into [`NetworkInstance::bn_layers`].
    pub bn: usize,
    pub relu: bool,
}

#[derive(Debug, Clone)]
pub struct ResidualUnit {
    pub main: Vec<ConvBn>,
    pub shortcut: Option<ConvBn>,
}

#[derive(Debug, Clone)]
pub struct AttentionUnit {
    pub query: Conv,
    pub value: Conv,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Plain(Vec<ConvBn>),
    Residual(Vec<ResidualUnit>),
    Attention(Vec<AttentionUnit>),
    Pool,
    Linear { in_features: usize, out_features: usize, weight: Vec<f64>, bias: Vec<f64> },
    Identity { out_channels: usize, stride: usize },
}

#[derive(Debug, Clone)]
pub struct NetworkInstance {
    pub architecture: ArchitectureSpec,
    /// One entry per block, in block order.
    pub layers: Vec<Layer>,
    /// BatchNorm layers in execution order.
    pub bn_layers: Vec<BatchNorm>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Tapped activations in block order; for classification, the pre-GAP map.
    pub taps: Vec<Tensor>,
    /// Per BatchNorm layer, the per-channel batch variance of its input.
    pub bn_variances: Vec<Vec<f64>>,
}

struct Builder {
    seed: u64,
    next_layer: u64,
    bn_layers: Vec<BatchNorm>,
}

impl Builder {
    fn kaiming(&mut self, count: usize, fan_in: usize) -> Vec<f64> {
        let mut rng = rng::stream(self.seed, Domain::Weights, self.next_layer);
        self.next_layer += 1;
        let std = (2.0 / fan_in as f64).sqrt();
        (0..count).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn conv(&mut self, cin: usize, cout: usize, k: usize, stride: usize, groups: usize) -> Conv {
        let fan_in = cin / groups * k * k;
        let weight = self.kaiming(cout * fan_in, fan_in);
        Conv { in_channels: cin, out_channels: cout, kernel: k, stride, groups, weight }
    }

    fn conv_bn(&mut self, cin: usize, cout: usize, k: usize, stride: usize, groups: usize, relu: bool) -> ConvBn {
        let conv = self.conv(cin, cout, k, stride, groups);
        self.bn_layers.push(BatchNorm { gamma: vec![1.0; cout], beta: vec![0.0; cout] });
        ConvBn { conv, bn: self.bn_layers.len() - 1, relu }
    }

    fn shortcut(&mut self, cin: usize, cout: usize, stride: usize) -> Option<ConvBn> {
        (cin != cout || stride != 1).then(|| self.conv_bn(cin, cout, 1, stride, 1, false))
    }

    fn layer(&mut self, block: &BlockSpec) -> Layer {
        let out = block.out_channels;
        let units = 0..block.repeats;
        match block.kind {
            BlockKind::ConvK1BNRELU | BlockKind::ConvK3BNRELU | BlockKind::ConvK5BNRELU | BlockKind::ConvK7BNRELU => {
                let k = kernel_of(block.kind);
                Layer::Plain(
                    units
                        .map(|u| {
                            let (cin, s) = unit_input(block, u);
                            self.conv_bn(cin, out, k, s, 1, true)
                        })
                        .collect(),
                )
            }
            BlockKind::ResK3K3 | BlockKind::ResK5K5 | BlockKind::ResK7K7 => {
                let k = kernel_of(block.kind);
                Layer::Residual(
                    units
                        .map(|u| {
                            let (cin, s) = unit_input(block, u);
                            let main = vec![self.conv_bn(cin, out, k, s, 1, true), self.conv_bn(out, out, k, 1, 1, false)];
                            ResidualUnit { main, shortcut: self.shortcut(cin, out, s) }
                        })
                        .collect(),
                )
            }
            BlockKind::ResK1K3K1 => {
                let mid = bottleneck_width(out);
                Layer::Residual(
                    units
                        .map(|u| {
                            let (cin, s) = unit_input(block, u);
                            let main = vec![
                                self.conv_bn(cin, mid, 1, 1, 1, true),
                                self.conv_bn(mid, mid, 3, s, 1, true),
                                self.conv_bn(mid, out, 1, 1, 1, false),
                            ];
                            ResidualUnit { main, shortcut: self.shortcut(cin, out, s) }
                        })
                        .collect(),
                )
            }
            BlockKind::SCDown => Layer::Plain(
                units
                    .flat_map(|u| {
                        let (cin, s) = unit_input(block, u);
                        [self.conv_bn(cin, out, 1, 1, 1, false), self.conv_bn(out, out, 3, s, out, false)]
                    })
                    .collect(),
            ),
            BlockKind::PSA => Layer::Attention(
                units
                    .map(|_| AttentionUnit { query: self.conv(out, out, 1, 1, 1), value: self.conv(out, out, 1, 1, 1) })
                    .collect(),
            ),
            BlockKind::GAP => Layer::Pool,
            BlockKind::FC => {
                let weight = self.kaiming(block.in_channels * out, block.in_channels);
                Layer::Linear { in_features: block.in_channels, out_features: out, weight, bias: vec![0.0; out] }
            }
            BlockKind::Identity => Layer::Identity { out_channels: out, stride: block.stride },
        }
    }
}

fn kernel_of(kind: BlockKind) -> usize {
    match kind {
        BlockKind::ConvK1BNRELU => 1,
        BlockKind::ConvK3BNRELU | BlockKind::ResK3K3 => 3,
        BlockKind::ConvK5BNRELU | BlockKind::ResK5K5 => 5,
        BlockKind::ConvK7BNRELU | BlockKind::ResK7K7 => 7,
        _ => unreachable!("{kind} has no single kernel size"),
    }
}

/// Instantiates `arch` with Kaiming-normal weights keyed by `(seed, layer index)`.
pub fn build_network(arch: &ArchitectureSpec, seed: u64) -> Result<NetworkInstance, BuildError> {
    let errors = validate(arch, &ConstraintSet { max_depth: usize::MAX, ..ConstraintSet::default() });
    if !errors.is_empty() {
        return Err(BuildError::Invalid(errors));
    }
    let mut builder = Builder { seed, next_layer: 0, bn_layers: Vec::new() };
    let layers = arch.blocks.iter().map(|b| builder.layer(b)).collect();
    Ok(NetworkInstance { architecture: arch.clone(), layers, bn_layers: builder.bn_layers, seed })
}

fn conv_count(c: &Conv) -> usize {
    c.weight.len()
}

impl NetworkInstance {
    /// Number of scalars allocated for weights, BN affine parameters and biases.
    pub fn parameter_count(&self) -> u64 {
        let convs: usize = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Plain(units) => units.iter().map(|u| conv_count(&u.conv)).sum(),
                Layer::Residual(units) => units
                    .iter()
                    .map(|u| {
                        u.main.iter().map(|c| conv_count(&c.conv)).sum::<usize>()
                            + u.shortcut.as_ref().map_or(0, |c| conv_count(&c.conv))
                    })
                    .sum(),
                Layer::Attention(units) => units.iter().map(|u| conv_count(&u.query) + conv_count(&u.value)).sum(),
                Layer::Linear { weight, bias, .. } => weight.len() + bias.len(),
                Layer::Pool | Layer::Identity { .. } => 0,
            })
            .sum();
        let bn: usize = self.bn_layers.iter().map(|b| b.gamma.len() + b.beta.len()).sum();
        (convs + bn) as u64
    }

    /// FNV-1a over the bit patterns of every weight, in construction order.
    pub fn weight_checksum(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        let mut feed = |values: &[f64]| {
            for v in values {
                for byte in v.to_bits().to_le_bytes() {
                    hash ^= byte as u64;
                    hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        };
        for layer in &self.layers {
            match layer {
                Layer::Plain(units) => units.iter().for_each(|u| feed(&u.conv.weight)),
                Layer::Residual(units) => units.iter().for_each(|u| {
                    u.main.iter().for_each(|c| feed(&c.conv.weight));
                    if let Some(s) = &u.shortcut {
                        feed(&s.conv.weight);
                    }
                }),
                Layer::Attention(units) => units.iter().for_each(|u| {
                    feed(&u.query.weight);
                    feed(&u.value.weight);
                }),
                Layer::Linear { weight, bias, .. } => {
                    feed(weight);
                    feed(bias);
                }
                Layer::Pool | Layer::Identity { .. } => {}
            }
        }
        hash
    }

    /// Block indices whose outputs are captured as taps.
    pub fn tap_blocks(&self) -> Vec<Option<usize>> {
        match self.architecture.mode {
            Mode::Detection => self.architecture.tap_positions().into_iter().map(Some).collect(),
            // `None` stands for the network input (empty body).
            Mode::Classification => vec![self.architecture.pre_head_position()],
        }
    }

    /// Runs every block in order, recording BN input variances and taps.
    pub fn forward_with_stats(&self, input: &Tensor) -> Result<ForwardTrace, ForwardError> {
        self.forward_blocks(input, &self.tap_blocks(), self.layers.len())
    }

    /// Forward pass over the first `depth` blocks.
    pub(crate) fn forward_blocks(
        &self,
        input: &Tensor,
        taps: &[Option<usize>],
        depth: usize,
    ) -> Result<ForwardTrace, ForwardError> {
        let mut bn_variances = vec![Vec::new(); self.bn_layers.len()];
        let mut captured = vec![None; taps.len()];
        for (slot, tap) in captured.iter_mut().zip(taps) {
            if tap.is_none() {
                *slot = Some(input.clone());
            }
        }
        let mut x = input.clone();
        for (i, (layer, block)) in self.layers.iter().zip(&self.architecture.blocks).enumerate().take(depth) {
            if x.c != block.in_channels {
                return Err(ForwardError::ShapeMismatch { block: i, expected: block.in_channels, found: x.c });
            }
            x = self.run_layer(layer, x, &mut bn_variances);
            for (slot, tap) in captured.iter_mut().zip(taps) {
                if *tap == Some(i) {
                    *slot = Some(x.clone());
                }
            }
        }
        let taps = captured.into_iter().map(|t| t.expect("tap block lies beyond forward depth")).collect();
        Ok(ForwardTrace { taps, bn_variances })
    }

    fn conv_bn(&self, unit: &ConvBn, x: &Tensor, stats: &mut [Vec<f64>]) -> Tensor {
        let mut y = unit.conv.forward(x);
        let (mean, var) = channel_moments(&y);
        let bn = &self.bn_layers[unit.bn];
        let plane = y.plane();
        for n in 0..y.n {
            for c in 0..y.c {
                let inv = 1.0 / (var[c] + BN_EPS).sqrt();
                let (m, g, b) = (mean[c], bn.gamma[c], bn.beta[c]);
                for v in &mut y.data[(n * y.c + c) * plane..][..plane] {
                    *v = g * (*v - m) * inv + b;
                }
            }
        }
        stats[unit.bn] = var;
        if unit.relu {
            y.relu_();
        }
        y
    }

    fn run_layer(&self, layer: &Layer, x: Tensor, stats: &mut [Vec<f64>]) -> Tensor {
        match layer {
            Layer::Plain(units) => units.iter().fold(x, |x, u| self.conv_bn(u, &x, stats)),
            Layer::Residual(units) => units.iter().fold(x, |x, unit| {
                let mut y = unit.main.iter().fold(x.clone(), |h, u| self.conv_bn(u, &h, stats));
                match &unit.shortcut {
                    Some(proj) => y.add_(&self.conv_bn(proj, &x, stats)),
                    None => y.add_(&x),
                }
                y.relu_();
                y
            }),
            Layer::Attention(units) => units.iter().fold(x, |x, unit| attention(unit, &x)),
            Layer::Pool => x.global_avg_pool(),
            Layer::Linear { in_features, out_features, weight, bias } => {
                let pooled = if x.plane() == 1 { x } else { x.global_avg_pool() };
                let mut out = Tensor::zeros(pooled.n, *out_features, 1, 1);
                for n in 0..pooled.n {
                    let feats = &pooled.data[n * in_features..][..*in_features];
                    for o in 0..*out_features {
                        let row = &weight[o * in_features..][..*in_features];
                        let dot: f64 = row.iter().zip(feats).map(|(w, f)| w * f).sum();
                        out.data[n * out_features + o] = dot + bias[o];
                    }
                }
                out
            }
            Layer::Identity { out_channels, stride } => identity(&x, *out_channels, *stride),
        }
    }
}

/// Channel attention: `x + softmax_c(Wq · gap(x)) ⊙ (Wv x)`.
fn attention(unit: &AttentionUnit, x: &Tensor) -> Tensor {
    let pooled = x.global_avg_pool();
    let logits = unit.query.forward(&pooled);
    let value = unit.value.forward(x);
    let plane = x.plane();
    let mut out = x.clone();
    for n in 0..x.n {
        let row = &logits.data[n * x.c..][..x.c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for c in 0..x.c {
            let a = exps[c] / total;
            let off = (n * x.c + c) * plane;
            for (o, v) in out.data[off..off + plane].iter_mut().zip(&value.data[off..off + plane]) {
                *o += a * v;
            }
        }
    }
    out
}

/// Strided subsampling with zero-padded or truncated channels.
fn identity(x: &Tensor, out_channels: usize, stride: usize) -> Tensor {
    if stride == 1 && out_channels == x.c {
        return x.clone();
    }
    let ho = x.h.div_ceil(stride);
    let wo = x.w.div_ceil(stride);
    let mut out = Tensor::zeros(x.n, out_channels, ho, wo);
    for n in 0..x.n {
        for c in 0..out_channels.min(x.c) {
            for oy in 0..ho {
                for ox in 0..wo {
                    out.data[((n * out_channels + c) * ho + oy) * wo + ox] =
                        x.data[((n * x.c + c) * x.h + oy * stride) * x.w + ox * stride];
                }
            }
        }
    }
    out
}
