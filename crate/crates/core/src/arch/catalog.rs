use super::{BlockKind, Mode};

/// Modes in which a block kind may appear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeSet {
    pub classification: bool,
    pub detection: bool,
}

impl ModeSet {
    const BOTH: ModeSet = ModeSet { classification: true, detection: true };
    const CLASSIFICATION: ModeSet = ModeSet { classification: true, detection: false };
    const DETECTION: ModeSet = ModeSet { classification: false, detection: true };

    pub fn contains(self, mode: Mode) -> bool {
        match mode {
            Mode::Classification => self.classification,
            Mode::Detection => self.detection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    pub arity: usize,
    /// Kernel sizes of the convolutions in one unit, in execution order.
    pub kernels: &'static [usize],
    pub modes: ModeSet,
    pub strides: &'static [usize],
    /// Input and output widths must agree.
    pub same_channels: bool,
    /// Repeats is pinned to one.
    pub single_unit: bool,
}

const ANY_STRIDE: &[usize] = &[1, 2];
const UNIT_STRIDE: &[usize] = &[1];

pub fn catalog_signature(kind: BlockKind) -> Signature {
    let conv = |kernels: &'static [usize]| Signature {
        arity: 4,
        kernels,
        modes: ModeSet::BOTH,
        strides: ANY_STRIDE,
        same_channels: false,
        single_unit: false,
    };
    match kind {
        BlockKind::ConvK1BNRELU => conv(&[1]),
        BlockKind::ConvK3BNRELU => conv(&[3]),
        BlockKind::ConvK5BNRELU => conv(&[5]),
        BlockKind::ConvK7BNRELU => conv(&[7]),
        BlockKind::ResK3K3 => conv(&[3, 3]),
        BlockKind::ResK5K5 => conv(&[5, 5]),
        BlockKind::ResK7K7 => conv(&[7, 7]),
        BlockKind::ResK1K3K1 => conv(&[1, 3, 1]),
        BlockKind::GAP => Signature {
            arity: 4,
            kernels: &[],
            modes: ModeSet::CLASSIFICATION,
            strides: UNIT_STRIDE,
            same_channels: true,
            single_unit: true,
        },
        BlockKind::FC => Signature {
            arity: 4,
            kernels: &[],
            modes: ModeSet::CLASSIFICATION,
            strides: UNIT_STRIDE,
            same_channels: false,
            single_unit: true,
        },
        BlockKind::SCDown => Signature {
            arity: 4,
            kernels: &[1, 3],
            modes: ModeSet::DETECTION,
            strides: &[2],
            same_channels: false,
            single_unit: false,
        },
        BlockKind::PSA => Signature {
            arity: 4,
            kernels: &[1, 1],
            modes: ModeSet::DETECTION,
            strides: UNIT_STRIDE,
            same_channels: true,
            single_unit: false,
        },
        // Parameter-free: strided subsampling plus zero-pad or truncation of channels.
        BlockKind::Identity => Signature {
            arity: 4,
            kernels: &[],
            modes: ModeSet::BOTH,
            strides: ANY_STRIDE,
            same_channels: false,
            single_unit: true,
        },
    }
}

/// Human-readable catalog for the given mode, one kind per line.
pub fn catalog_table(mode: Mode) -> String {
    let mut out = String::new();
    for kind in BlockKind::ALL {
        let sig = catalog_signature(kind);
        if !sig.modes.contains(mode) {
            continue;
        }
        let kernels = if sig.kernels.is_empty() {
            "-".to_string()
        } else {
            sig.kernels.iter().map(|k| format!("{k}x{k}")).collect::<Vec<_>>().join(",")
        };
        let strides = sig.strides.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("|");
        let mut notes = Vec::new();
        if sig.same_channels {
            notes.push("in=out");
        }
        if sig.single_unit {
            notes.push("repeats=1");
        }
        out.push_str(&format!(
            "{}(in,out,stride,repeats)  kernels {}  stride {}{}\n",
            kind,
            kernels,
            strides,
            if notes.is_empty() { String::new() } else { format!("  {}", notes.join(", ")) }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_k3_signature() {
        let sig = catalog_signature(BlockKind::ConvK3BNRELU);
        assert_eq!(sig.kernels, &[3]);
        assert_eq!(sig.arity, 4);
        assert!(sig.modes.contains(Mode::Classification) && sig.modes.contains(Mode::Detection));
    }

    #[test]
    fn psa_is_detection_only_with_unit_stride() {
        let sig = catalog_signature(BlockKind::PSA);
        assert_eq!(sig.arity, 4);
        assert!(!sig.modes.contains(Mode::Classification));
        assert!(sig.modes.contains(Mode::Detection));
        assert_eq!(sig.strides, &[1]);
    }

    #[test]
    fn bottleneck_kernels() {
        let sig = catalog_signature(BlockKind::ResK1K3K1);
        assert_eq!(sig.kernels, &[1, 3, 1]);
        assert_eq!(sig.arity, 4);
        assert!(sig.modes.contains(Mode::Classification) && sig.modes.contains(Mode::Detection));
    }

    #[test]
    fn classification_catalog_has_ten_named_blocks() {
        let count = BlockKind::ALL
            .iter()
            .filter(|&&k| k != BlockKind::Identity)
            .filter(|&&k| catalog_signature(k).modes.contains(Mode::Classification))
            .count();
        assert_eq!(count, 10);
        let table = catalog_table(Mode::Classification);
        assert!(table.contains("ResK1K3K1"));
        assert!(!table.contains("SCDown"));
    }
}
