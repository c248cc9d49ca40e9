mod common;

use common::random_arch;
use phasenas::arch::{parse_architecture, validate, ArchitectureSpec, BlockKind, Mode, ValidationCode};
use phasenas::eval::{build_network, score_inputs, ScoreConfig};
use phasenas::generate::{mock_explore, mock_refine, BaseInfo, GenerationContext, MockSpace, OpenSpace, Phase, PoolMember};
use phasenas::resource::{estimate, ConstraintSet};
use proptest::prelude::*;

fn mode_of(flag: bool) -> Mode {
    if flag {
        Mode::Detection
    } else {
        Mode::Classification
    }
}

fn arch_strategy() -> impl Strategy<Value = ArchitectureSpec> {
    (any::<u64>(), any::<bool>(), 1usize..6, 1usize..64).prop_map(|(seed, det, ch, res)| {
        let mut arch = random_arch(seed, mode_of(det));
        if seed % 3 == 0 {
            arch.input_channels = ch;
            arch.blocks[0].in_channels = ch;
            arch.input_resolution = res;
        }
        arch
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10_000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn serialize_then_parse_is_identity(arch in arch_strategy()) {
        let text = arch.serialize().unwrap();
        prop_assert_eq!(&parse_architecture(&text, arch.mode).unwrap(), &arch);
        prop_assert_eq!(&parse_architecture(&arch.compact(), arch.mode).unwrap(), &arch);
    }

    #[test]
    fn parser_never_panics_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..200), det in any::<bool>()) {
        let text = String::from_utf8_lossy(&bytes);
        let _ = parse_architecture(&text, mode_of(det));
    }

    #[test]
    fn parser_never_panics_on_near_miss_text(seed in any::<u64>(), cut in any::<prop::sample::Index>(), junk in "[(),;@P#0-9A-Za-z \n-]{0,6}") {
        let text = random_arch(seed, Mode::Detection).serialize().unwrap();
        let mut at = cut.index(text.len() + 1);
        while !text.is_char_boundary(at) {
            at -= 1;
        }
        let spliced = format!("{}{}{}", &text[..at], junk, &text[at..]);
        let _ = parse_architecture(&spliced, Mode::Detection);
        let _ = parse_architecture(&text[..at], Mode::Classification);
    }
}

#[test]
fn generated_architectures_validate_and_run() {
    let limits = ConstraintSet { max_depth: 64, ..ConstraintSet::default() };
    let cfg = ScoreConfig { repeats: 1, batch_size: 2, resolution: 8, ..ScoreConfig::default() };
    for seed in 0..300 {
        let arch = random_arch(seed, mode_of(seed % 2 == 1));
        assert!(validate(&arch, &limits).is_empty(), "{}", arch.compact());
        let net = build_network(&arch, seed).unwrap();
        assert_eq!(net.parameter_count(), estimate(&arch).params);
        let (x, _) = score_inputs(&cfg, arch.input_channels, 0);
        net.forward_with_stats(&x).unwrap();
    }
}

#[test]
fn validator_flags_every_broken_channel_link() {
    let limits = ConstraintSet { max_depth: 64, ..ConstraintSet::default() };
    for seed in 0..500 {
        let mut arch = random_arch(seed, mode_of(seed % 2 == 0));
        let i = seed as usize % arch.blocks.len();
        arch.blocks[i].in_channels += 1;
        let errors = validate(&arch, &limits);
        let mismatches: Vec<usize> =
            errors.iter().filter(|e| e.code == ValidationCode::ChannelMismatch).map(|e| e.position).collect();
        assert_eq!(mismatches, vec![i], "{}: {errors:?}", arch.compact());
    }
}

#[test]
fn validator_flags_mode_and_head_rules() {
    let limits = ConstraintSet::default();
    for seed in 0..200 {
        let cls = random_arch(seed, Mode::Classification);
        let body = cls.blocks[..cls.blocks.len() - 2].to_vec();
        let headless = ArchitectureSpec::new(Mode::Classification, body.clone());
        assert!(validate(&headless, &limits).iter().any(|e| e.code == ValidationCode::HeadMissing));
        let untapped = ArchitectureSpec::new(Mode::Detection, body);
        assert!(validate(&untapped, &limits).iter().any(|e| e.code == ValidationCode::NoTaps));

        let det = random_arch(seed, Mode::Detection);
        let mut as_cls = det.clone();
        as_cls.mode = Mode::Classification;
        let errors = validate(&as_cls, &limits);
        assert!(errors.iter().any(|e| e.code == ValidationCode::ModeViolation));
        let flagged: Vec<_> = errors.iter().filter(|e| e.code == ValidationCode::ModeViolation).map(|e| e.position).collect();
        for (i, b) in det.blocks.iter().enumerate() {
            if b.tap.is_some() || matches!(b.kind, BlockKind::SCDown | BlockKind::PSA) {
                assert!(flagged.contains(&i));
            }
        }
    }
}

#[test]
fn depth_limit_counts_blocks() {
    let arch = random_arch(5, Mode::Classification);
    let tight = ConstraintSet { max_depth: arch.blocks.len() - 1, ..ConstraintSet::default() };
    assert!(validate(&arch, &tight).iter().any(|e| e.code == ValidationCode::DepthExceeded));
    let exact = ConstraintSet { max_depth: arch.blocks.len(), ..ConstraintSet::default() };
    assert!(validate(&arch, &exact).is_empty());
}

fn context(seed: u64, mode: Mode, phase: Phase, base: Option<String>) -> GenerationContext {
    let pool = base.iter().map(|s| PoolMember { serialization: s.clone(), score: 1.0 }).collect();
    GenerationContext {
        phase,
        mode,
        constraints: ConstraintSet::default(),
        catalog: String::new(),
        pool,
        base: base.map(|s| {
            let profile = estimate(&parse_architecture(&s, mode).unwrap());
            BaseInfo { serialization: s, score: 1.0, profile }
        }),
        feedback: Vec::new(),
        seed,
    }
}

#[test]
fn mock_output_always_parses_and_validates() {
    let spaces = [MockSpace::Open(OpenSpace::default()), MockSpace::Micro];
    for seed in 0..10_000u64 {
        let space = &spaces[(seed % 2) as usize];
        let mode = if matches!(space, MockSpace::Micro) || seed % 4 == 0 { Mode::Classification } else { Mode::Detection };
        let ctx = context(seed, mode, Phase::Exploration, None);
        let text = mock_explore(&ctx, space);
        let arch = parse_architecture(&text, mode).unwrap_or_else(|e| panic!("{text}: {e}"));
        assert!(validate(&arch, &ctx.constraints).is_empty(), "{text}");

        let refined = mock_refine(&context(seed, mode, Phase::Refinement, Some(text)), space).unwrap();
        let arch = parse_architecture(&refined, mode).unwrap_or_else(|e| panic!("{refined}: {e}"));
        assert!(validate(&arch, &ctx.constraints).is_empty(), "{refined}");
    }
}
