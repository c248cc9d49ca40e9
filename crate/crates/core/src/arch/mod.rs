//! Architecture template language.
//!
//! An architecture is an ordered chain of block calls such as
//! `ConvK3BNRELU(3,8,1,1)` or `ResK3K3(16,32,2,1)`. Each call carries four
//! integers: input channels, output channels, stride and repeats. Detection
//! backbones mark the blocks whose activations feed the detection head with
//! an `@P<k>` suffix.

mod catalog;
mod parse;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use catalog::{catalog_signature, catalog_table, ModeSet, Signature};
pub use parse::{parse_architecture, ParseError, ParseErrorKind};
pub use validate::{validate, ValidationCode, ValidationError, WHOLE_ARCHITECTURE};

/// Task the architecture is searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Classification,
    Detection,
}

impl Mode {
    /// Square input side used when the source text does not say otherwise.
    pub fn default_resolution(self) -> usize {
        match self {
            Mode::Classification => 32,
            Mode::Detection => 64,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Classification => "classification",
            Mode::Detection => "detection",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classification" => Ok(Mode::Classification),
            "detection" => Ok(Mode::Detection),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    ConvK1BNRELU,
    ConvK3BNRELU,
    ConvK5BNRELU,
    ConvK7BNRELU,
    ResK3K3,
    ResK5K5,
    ResK7K7,
    ResK1K3K1,
    GAP,
    FC,
    SCDown,
    PSA,
    Identity,
}

impl BlockKind {
    pub const ALL: [BlockKind; 13] = [
        BlockKind::ConvK1BNRELU,
        BlockKind::ConvK3BNRELU,
        BlockKind::ConvK5BNRELU,
        BlockKind::ConvK7BNRELU,
        BlockKind::ResK3K3,
        BlockKind::ResK5K5,
        BlockKind::ResK7K7,
        BlockKind::ResK1K3K1,
        BlockKind::GAP,
        BlockKind::FC,
        BlockKind::SCDown,
        BlockKind::PSA,
        BlockKind::Identity,
    ];

    /// Searchable body blocks shared by both modes.
    pub const BODY: [BlockKind; 8] = [
        BlockKind::ConvK1BNRELU,
        BlockKind::ConvK3BNRELU,
        BlockKind::ConvK5BNRELU,
        BlockKind::ConvK7BNRELU,
        BlockKind::ResK3K3,
        BlockKind::ResK5K5,
        BlockKind::ResK7K7,
        BlockKind::ResK1K3K1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::ConvK1BNRELU => "ConvK1BNRELU",
            BlockKind::ConvK3BNRELU => "ConvK3BNRELU",
            BlockKind::ConvK5BNRELU => "ConvK5BNRELU",
            BlockKind::ConvK7BNRELU => "ConvK7BNRELU",
            BlockKind::ResK3K3 => "ResK3K3",
            BlockKind::ResK5K5 => "ResK5K5",
            BlockKind::ResK7K7 => "ResK7K7",
            BlockKind::ResK1K3K1 => "ResK1K3K1",
            BlockKind::GAP => "GAP",
            BlockKind::FC => "FC",
            BlockKind::SCDown => "SCDown",
            BlockKind::PSA => "PSA",
            BlockKind::Identity => "Identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }

    pub fn is_head(self) -> bool {
        matches!(self, BlockKind::GAP | BlockKind::FC)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One block call of the template language.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub repeats: usize,
    /// Detection scale label `k` of an `@P<k>` suffix.
    pub tap: Option<u32>,
}

impl BlockSpec {
    pub fn new(kind: BlockKind, in_channels: usize, out_channels: usize, stride: usize, repeats: usize) -> Self {
        Self { kind, in_channels, out_channels, stride, repeats, tap: None }
    }

    pub fn with_tap(mut self, scale: u32) -> Self {
        self.tap = Some(scale);
        self
    }
}

impl fmt::Display for BlockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({},{},{},{})",
            self.kind, self.in_channels, self.out_channels, self.stride, self.repeats
        )?;
        if let Some(scale) = self.tap {
            write!(f, "@P{scale}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub mode: Mode,
    pub blocks: Vec<BlockSpec>,
    pub input_channels: usize,
    pub input_resolution: usize,
    /// Output width of the FC head; `None` in detection mode.
    pub num_classes: Option<usize>,
}

pub const DEFAULT_INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SerializeError {
    #[error("architecture has no blocks")]
    Empty,
}

impl ArchitectureSpec {
    /// Builds a spec with default input geometry for `mode`; `num_classes`
    /// follows the FC head when one is present.
    pub fn new(mode: Mode, blocks: Vec<BlockSpec>) -> Self {
        let num_classes = match mode {
            Mode::Classification => blocks
                .iter()
                .rev()
                .find(|b| b.kind == BlockKind::FC)
                .map(|b| b.out_channels),
            Mode::Detection => None,
        };
        Self {
            mode,
            blocks,
            input_channels: DEFAULT_INPUT_CHANNELS,
            input_resolution: mode.default_resolution(),
            num_classes,
        }
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.input_resolution = resolution;
        self
    }

    /// Indices of tapped blocks in block order.
    pub fn tap_positions(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.tap.is_some())
            .map(|(i, _)| i)
            .collect()
    }

    /// Index of the last block before the classification head.
    pub fn pre_head_position(&self) -> Option<usize> {
        self.blocks.iter().position(|b| b.kind.is_head()).and_then(|i| i.checked_sub(1))
    }

    /// Canonical text form: one block per line, LF endings, no spaces.
    ///
    /// An `Input(channels,resolution)` directive is emitted only when the input
    /// geometry differs from the mode default, so that ordinary architectures
    /// serialize to pure block lines.
    pub fn serialize(&self) -> Result<String, SerializeError> {
        if self.blocks.is_empty() {
            return Err(SerializeError::Empty);
        }
        let mut out = String::new();
        if self.input_channels != DEFAULT_INPUT_CHANNELS
            || self.input_resolution != self.mode.default_resolution()
        {
            out.push_str(&format!("Input({},{})\n", self.input_channels, self.input_resolution));
        }
        for block in &self.blocks {
            out.push_str(&block.to_string());
            out.push('\n');
        }
        Ok(out)
    }

    /// Single-line form (`;`-separated) used as a de-duplication key and in logs.
    pub fn compact(&self) -> String {
        let mut parts: Vec<String> = Vec::with_capacity(self.blocks.len() + 1);
        if self.input_channels != DEFAULT_INPUT_CHANNELS
            || self.input_resolution != self.mode.default_resolution()
        {
            parts.push(format!("Input({},{})", self.input_channels, self.input_resolution));
        }
        parts.extend(self.blocks.iter().map(|b| b.to_string()));
        parts.join(";")
    }
}
