//! Analytic parameter, FLOP and depth estimation plus budget checks.
//!
//! FLOP convention: a multiply-accumulate counts as 2 FLOPs; BatchNorm costs 2
//! FLOPs per output element (scale and shift), ReLU 1, residual addition 1,
//! global average pooling 1 per input element. FC adds one FLOP per class for
//! the bias.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arch::{ArchitectureSpec, BlockKind, BlockSpec};

pub const FLOPS_CONVENTION: &str =
    "FLOPs = 2 x MACs; BN 2/elem, ReLU 1/elem, add 1/elem, GAP 1/input elem, FC bias 1/class";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub params: u64,
    pub flops: u64,
    pub depth: u64,
    pub resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintSet {
    pub max_params: u64,
    pub max_flops: u64,
    pub max_depth: usize,
    pub min_params: Option<u64>,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self { max_params: 1_000_000, max_flops: 500_000_000, max_depth: 32, min_params: None }
    }
}

impl ConstraintSet {
    pub fn is_consistent(&self) -> bool {
        self.min_params.is_none_or(|min| min <= self.max_params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    ParamsExceeded,
    FlopsExceeded,
    DepthExceeded,
    ParamsBelowMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub bound: Bound,
    pub actual: u64,
    pub limit: u64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: actual {} vs limit {}", self.bound, self.actual, self.limit)
    }
}

/// Inclusive budget check; one violation per breached bound.
pub fn check(profile: &ResourceProfile, limits: &ConstraintSet) -> Vec<Violation> {
    let mut out = Vec::new();
    if profile.params > limits.max_params {
        out.push(Violation { bound: Bound::ParamsExceeded, actual: profile.params, limit: limits.max_params });
    }
    if profile.flops > limits.max_flops {
        out.push(Violation { bound: Bound::FlopsExceeded, actual: profile.flops, limit: limits.max_flops });
    }
    if profile.depth > limits.max_depth as u64 {
        out.push(Violation { bound: Bound::DepthExceeded, actual: profile.depth, limit: limits.max_depth as u64 });
    }
    if let Some(min) = limits.min_params {
        if profile.params < min {
            out.push(Violation { bound: Bound::ParamsBelowMin, actual: profile.params, limit: min });
        }
    }
    out
}

/// Cost of one block at a given input side length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockCost {
    pub params: u64,
    pub flops: u64,
    pub out_resolution: usize,
}

/// Output side of a same-padded, strided layer.
pub fn strided(side: usize, stride: usize) -> usize {
    side.div_ceil(stride)
}

fn conv_params(k: usize, cin: usize, cout: usize) -> u64 {
    (k * k * cin * cout) as u64
}

fn conv_flops(k: usize, cin: usize, cout: usize, out_side: usize) -> u64 {
    2 * (k * k * cin * cout * out_side * out_side) as u64
}

fn bn_params(c: usize) -> u64 {
    2 * c as u64
}

fn elems(c: usize, side: usize) -> u64 {
    (c * side * side) as u64
}

/// Parameters and FLOPs of `block` applied to a `side`×`side` input.
pub fn block_cost(block: &BlockSpec, side: usize) -> BlockCost {
    let out = block.out_channels;
    let mut params = 0u64;
    let mut flops = 0u64;
    let mut h = side;

    match block.kind {
        BlockKind::ConvK1BNRELU | BlockKind::ConvK3BNRELU | BlockKind::ConvK5BNRELU | BlockKind::ConvK7BNRELU => {
            let k = match block.kind {
                BlockKind::ConvK1BNRELU => 1,
                BlockKind::ConvK3BNRELU => 3,
                BlockKind::ConvK5BNRELU => 5,
                _ => 7,
            };
            for u in 0..block.repeats {
                let (cin, s) = unit_input(block, u);
                let ho = strided(h, s);
                params += conv_params(k, cin, out) + bn_params(out);
                flops += conv_flops(k, cin, out, ho) + 2 * elems(out, ho) + elems(out, ho);
                h = ho;
            }
        }
        BlockKind::ResK3K3 | BlockKind::ResK5K5 | BlockKind::ResK7K7 => {
            let k = match block.kind {
                BlockKind::ResK3K3 => 3,
                BlockKind::ResK5K5 => 5,
                _ => 7,
            };
            for u in 0..block.repeats {
                let (cin, s) = unit_input(block, u);
                let ho = strided(h, s);
                params += conv_params(k, cin, out) + bn_params(out);
                params += conv_params(k, out, out) + bn_params(out);
                flops += conv_flops(k, cin, out, ho) + 3 * elems(out, ho);
                flops += conv_flops(k, out, out, ho) + 2 * elems(out, ho);
                if cin != out || s != 1 {
                    params += conv_params(1, cin, out) + bn_params(out);
                    flops += conv_flops(1, cin, out, ho) + 2 * elems(out, ho);
                }
                // add + ReLU
                flops += 2 * elems(out, ho);
                h = ho;
            }
        }
        BlockKind::ResK1K3K1 => {
            let mid = bottleneck_width(out);
            for u in 0..block.repeats {
                let (cin, s) = unit_input(block, u);
                let ho = strided(h, s);
                params += conv_params(1, cin, mid) + bn_params(mid);
                params += conv_params(3, mid, mid) + bn_params(mid);
                params += conv_params(1, mid, out) + bn_params(out);
                flops += conv_flops(1, cin, mid, h) + 3 * elems(mid, h);
                flops += conv_flops(3, mid, mid, ho) + 3 * elems(mid, ho);
                flops += conv_flops(1, mid, out, ho) + 2 * elems(out, ho);
                if cin != out || s != 1 {
                    params += conv_params(1, cin, out) + bn_params(out);
                    flops += conv_flops(1, cin, out, ho) + 2 * elems(out, ho);
                }
                flops += 2 * elems(out, ho);
                h = ho;
            }
        }
        BlockKind::GAP => {
            flops += elems(block.in_channels, h);
            h = 1;
        }
        BlockKind::FC => {
            params += (block.in_channels * out + out) as u64;
            flops += 2 * (block.in_channels * out) as u64 + out as u64;
            h = 1;
        }
        BlockKind::SCDown => {
            for u in 0..block.repeats {
                let (cin, s) = unit_input(block, u);
                let ho = strided(h, s);
                // pointwise channel change at input resolution
                params += conv_params(1, cin, out) + bn_params(out);
                flops += conv_flops(1, cin, out, h) + 2 * elems(out, h);
                // depthwise 3x3, one filter per channel
                params += 9 * out as u64 + bn_params(out);
                flops += 2 * 9 * elems(out, ho) + 2 * elems(out, ho);
                h = ho;
            }
        }
        BlockKind::PSA => {
            // Per unit: pool (1/elem), query 1x1 on the pooled vector (2c^2),
            // softmax over channels (exp, sum, divide: 3c), value 1x1 (2c^2 per
            // pixel), channel rescale (1/elem), residual add (1/elem).
            let c = out;
            for _ in 0..block.repeats {
                params += 2 * (c * c) as u64;
                flops += elems(c, h) + 2 * (c * c) as u64 + 3 * c as u64;
                flops += conv_flops(1, c, c, h) + 2 * elems(c, h);
            }
        }
        BlockKind::Identity => {
            h = strided(h, block.stride);
        }
    }
    BlockCost { params, flops, out_resolution: h }
}

/// Input width and stride of the `unit`-th stacked unit of a block.
pub fn unit_input(block: &BlockSpec, unit: usize) -> (usize, usize) {
    if unit == 0 {
        (block.in_channels, block.stride)
    } else {
        (block.out_channels, 1)
    }
}

/// Mid width of the 1-3-1 bottleneck.
pub fn bottleneck_width(out_channels: usize) -> usize {
    out_channels.div_ceil(2)
}

pub fn estimate(arch: &ArchitectureSpec) -> ResourceProfile {
    estimate_at(arch, arch.input_resolution)
}

pub fn estimate_at(arch: &ArchitectureSpec, resolution: usize) -> ResourceProfile {
    let mut side = resolution;
    let mut params = 0;
    let mut flops = 0;
    for block in &arch.blocks {
        let cost = block_cost(block, side);
        params += cost.params;
        flops += cost.flops;
        side = cost.out_resolution;
    }
    let depth = arch.blocks.iter().map(|b| b.repeats as u64).sum();
    ResourceProfile { params, flops, depth, resolution }
}
