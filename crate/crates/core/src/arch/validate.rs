use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{catalog_signature, ArchitectureSpec, BlockKind, Mode};
use crate::resource::ConstraintSet;

/// Position reported for errors that concern the architecture as a whole.
pub const WHOLE_ARCHITECTURE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValidationCode {
    ChannelMismatch,
    UnknownBlock,
    IllegalParameter,
    ModeViolation,
    DepthExceeded,
    HeadMissing,
    NoTaps,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub code: ValidationCode,
    pub position: usize,
    pub detail: String,
}

impl ValidationError {
    fn at(code: ValidationCode, position: usize, detail: impl Into<String>) -> Self {
        Self { code, position, detail: detail.into() }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.position == WHOLE_ARCHITECTURE {
            write!(f, "{:?}: {}", self.code, self.detail)
        } else {
            write!(f, "{:?} at block {}: {}", self.code, self.position, self.detail)
        }
    }
}

/// Structural check of an architecture. An empty result means valid.
///
/// Parameter and FLOP budgets are not checked here; see [`crate::resource::check`].
pub fn validate(arch: &ArchitectureSpec, limits: &ConstraintSet) -> Vec<ValidationError> {
    use ValidationCode::*;
    let mut errors = Vec::new();

    if arch.input_channels == 0 || arch.input_resolution == 0 {
        errors.push(ValidationError::at(
            IllegalParameter,
            WHOLE_ARCHITECTURE,
            "input channels and resolution must be positive",
        ));
    }

    let mut expected_in = arch.input_channels;
    for (i, block) in arch.blocks.iter().enumerate() {
        let sig = catalog_signature(block.kind);
        if !sig.modes.contains(arch.mode) {
            errors.push(ValidationError::at(
                ModeViolation,
                i,
                format!("{} is not available in {} mode", block.kind, arch.mode),
            ));
        }
        if block.in_channels != expected_in {
            errors.push(ValidationError::at(
                ChannelMismatch,
                i,
                format!("expected in={expected_in}, found in={}", block.in_channels),
            ));
        }
        expected_in = block.out_channels;

        if block.in_channels == 0 || block.out_channels == 0 {
            errors.push(ValidationError::at(IllegalParameter, i, "channel counts must be positive"));
        }
        if !sig.strides.contains(&block.stride) {
            errors.push(ValidationError::at(
                IllegalParameter,
                i,
                format!("stride {} not in {:?} for {}", block.stride, sig.strides, block.kind),
            ));
        }
        if block.repeats == 0 {
            errors.push(ValidationError::at(IllegalParameter, i, "repeats must be at least 1"));
        } else if sig.single_unit && block.repeats != 1 {
            errors.push(ValidationError::at(
                IllegalParameter,
                i,
                format!("{} requires repeats=1", block.kind),
            ));
        }
        if sig.same_channels && block.in_channels != block.out_channels {
            errors.push(ValidationError::at(
                IllegalParameter,
                i,
                format!("{} requires in_channels = out_channels", block.kind),
            ));
        }
        if block.tap.is_some() && arch.mode == Mode::Classification {
            errors.push(ValidationError::at(ModeViolation, i, "taps are only allowed in detection mode"));
        }
    }

    if arch.blocks.len() > limits.max_depth {
        errors.push(ValidationError::at(
            DepthExceeded,
            WHOLE_ARCHITECTURE,
            format!("{} blocks exceed max_depth {}", arch.blocks.len(), limits.max_depth),
        ));
    }

    match arch.mode {
        Mode::Classification => check_head(arch, &mut errors),
        Mode::Detection => check_taps(arch, &mut errors),
    }
    errors
}

fn check_head(arch: &ArchitectureSpec, errors: &mut Vec<ValidationError>) {
    let n = arch.blocks.len();
    let head_ok = n >= 2 && arch.blocks[n - 2].kind == BlockKind::GAP && arch.blocks[n - 1].kind == BlockKind::FC;
    if !head_ok {
        errors.push(ValidationError::at(
            ValidationCode::HeadMissing,
            WHOLE_ARCHITECTURE,
            "classification architectures must end with GAP then FC",
        ));
    }
    let body_len = if head_ok { n - 2 } else { n };
    for (i, block) in arch.blocks.iter().enumerate().take(body_len) {
        if block.kind.is_head() {
            errors.push(ValidationError::at(
                ValidationCode::IllegalParameter,
                i,
                format!("{} may only appear in the head", block.kind),
            ));
        }
    }
}

fn check_taps(arch: &ArchitectureSpec, errors: &mut Vec<ValidationError>) {
    let mut seen = HashSet::new();
    let mut any = false;
    for (i, block) in arch.blocks.iter().enumerate() {
        if let Some(scale) = block.tap {
            any = true;
            if !seen.insert(scale) {
                errors.push(ValidationError::at(
                    ValidationCode::IllegalParameter,
                    i,
                    format!("duplicate tap label P{scale}"),
                ));
            }
        }
    }
    if !any {
        errors.push(ValidationError::at(
            ValidationCode::NoTaps,
            WHOLE_ARCHITECTURE,
            "detection architectures need at least one @P<k> tap",
        ));
    }
}
