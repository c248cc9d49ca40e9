mod common;

use common::{random_arch, ref_bn, ref_conv, ref_detection_mu, Act};
use phasenas::arch::{parse_architecture, BlockKind, Mode};
use phasenas::eval::{
    bn_scaling_term, build_network, classification_score, detection_score, score, score_inputs, ScoreConfig,
    BN_EPS,
};
use phasenas::generate::{mock_explore, GenerationContext, MockSpace, OpenSpace, Phase};
use phasenas::resource::ConstraintSet;

fn small(repeats: usize) -> ScoreConfig {
    ScoreConfig { repeats, batch_size: 4, resolution: 8, ..ScoreConfig::default() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn single_bn_variance_matches_direct_computation() {
    let arch = parse_architecture("ConvK3BNRELU(3,4,2,1)@P3", Mode::Detection).unwrap();
    let net = build_network(&arch, 11).unwrap();
    let cfg = small(1);
    let (x1, _) = score_inputs(&cfg, 3, 0);
    let trace = net.forward_with_stats(&x1).unwrap();
    let phasenas::eval::Layer::Plain(units) = &net.layers[0] else { unreachable!() };
    let conv = ref_conv(&Act::from_tensor(&x1), &units[0].conv.weight, 4, 3, 2);
    let (_, expected) = ref_bn(&conv, BN_EPS);
    assert_eq!(trace.bn_variances.len(), 1);
    for (got, want) in trace.bn_variances[0].iter().zip(&expected) {
        assert!(rel(*got, *want) < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn two_tap_score_matches_reference() {
    let kernels = [BlockKind::ConvK1BNRELU, BlockKind::ConvK3BNRELU, BlockKind::ConvK5BNRELU];
    for seed in 0..20u64 {
        let k2 = kernels[seed as usize % 3];
        let c1 = 3 + (seed as usize % 4);
        let c2 = 4 + (seed as usize % 5);
        let s1 = 1 + (seed as usize % 2);
        let text = format!("ConvK3BNRELU(3,{c1},{s1},1)@P3\n{k2}({c1},{c2},2,1)@P4\n");
        let arch = parse_architecture(&text, Mode::Detection).unwrap();
        let net = build_network(&arch, seed).unwrap();
        let cfg = ScoreConfig { seed, ..small(2) };
        let engine = detection_score(&net, &cfg).unwrap().mean;
        let reference = ref_detection_mu(&net, &cfg, BN_EPS);
        assert!(rel(engine, reference) <= 1e-6, "{text}: {engine} vs {reference}");
    }
}

#[test]
fn zero_mix_score_is_log_epsilon_plus_bn_term() {
    for seed in 0..40 {
        let mode = if seed % 2 == 0 { Mode::Classification } else { Mode::Detection };
        let arch = random_arch(seed, mode);
        let net = build_network(&arch, seed).unwrap();
        let cfg = ScoreConfig { gamma_mix: 0.0, ..small(2) };
        let report = score(&net, &cfg).unwrap();
        for (i, s) in report.per_repeat.iter().enumerate() {
            let (x1, _) = score_inputs(&cfg, 3, i);
            let trace = net.forward_with_stats(&x1).unwrap();
            let want = cfg.epsilon.ln() + bn_scaling_term(&trace.bn_variances, cfg.epsilon);
            assert!((s - want).abs() <= 1e-12, "{}", arch.compact());
        }
    }
}

#[test]
fn single_tap_detection_equals_classification_bitwise() {
    for seed in 0..20 {
        let cls = random_arch(seed, Mode::Classification);
        let mut body: Vec<_> = cls.blocks[..cls.blocks.len() - 2].to_vec();
        body.last_mut().unwrap().tap = Some(3);
        let det = phasenas::arch::ArchitectureSpec::new(Mode::Detection, body);
        let cfg = small(3);
        let a = classification_score(&build_network(&cls, seed).unwrap(), &cfg).unwrap();
        let b = detection_score(&build_network(&det, seed).unwrap(), &cfg).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits(), "{}", cls.compact());
        assert_eq!(a.per_repeat, b.per_repeat);
    }
}

#[test]
fn perturbation_response_scales_with_the_mixing_weight() {
    // Past the first BN layer, scaling the perturbation scales the output
    // difference roughly linearly while it stays small.
    let arch = parse_architecture("ConvK3BNRELU(3,8,1,1)@P3", Mode::Detection).unwrap();
    let net = build_network(&arch, 3).unwrap();
    let at = |g: f64| {
        let cfg = ScoreConfig { gamma_mix: g, ..small(1) };
        let bn = {
            let (x1, _) = score_inputs(&cfg, 3, 0);
            bn_scaling_term(&net.forward_with_stats(&x1).unwrap().bn_variances, cfg.epsilon)
        };
        (detection_score(&net, &cfg).unwrap().mean - bn).exp()
    };
    let ratio = at(2e-3) / at(1e-3);
    assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
}

#[test]
fn frozen_depth_ordering_fixture() {
    // Values computed once with the straight-line reference above.
    let shallow = parse_architecture("ConvK3BNRELU(3,8,1,1)@P3", Mode::Detection).unwrap();
    let deep = parse_architecture("ConvK3BNRELU(3,8,1,1)\nConvK3BNRELU(8,8,1,1)\nConvK3BNRELU(8,8,1,1)@P3", Mode::Detection)
        .unwrap();
    let cfg = small(2);
    let s = detection_score(&build_network(&shallow, 0).unwrap(), &cfg).unwrap().mean;
    let d = detection_score(&build_network(&deep, 0).unwrap(), &cfg).unwrap().mean;
    assert!(rel(s, SHALLOW_MU) < 1e-9, "shallow {s}");
    assert!(rel(d, DEEP_MU) < 1e-9, "deep {d}");
    assert!(d < s);
    assert!(rel(ref_detection_mu(&build_network(&shallow, 0).unwrap(), &cfg, BN_EPS), SHALLOW_MU) < 1e-12);
}

const SHALLOW_MU: f64 = 2.3144231748966746;
const DEEP_MU: f64 = 2.099500664161855;

#[test]
fn mock_architectures_never_score_non_finite() {
    let space = MockSpace::Open(OpenSpace { widths: vec![4, 8, 12, 16], max_body: 4, max_repeats: 2, num_classes: 10 });
    let constraints = ConstraintSet { max_params: 50_000, max_flops: 20_000_000, max_depth: 12, min_params: None };
    let cfg = ScoreConfig { repeats: 1, batch_size: 2, resolution: 8, ..ScoreConfig::default() };
    for seed in 0..1000u64 {
        let mode = if seed % 4 == 3 { Mode::Detection } else { Mode::Classification };
        let ctx = GenerationContext {
            phase: Phase::Exploration,
            mode,
            constraints,
            catalog: String::new(),
            pool: Vec::new(),
            base: None,
            feedback: Vec::new(),
            seed,
        };
        let arch = parse_architecture(&mock_explore(&ctx, &space), mode).unwrap();
        let report = score(&build_network(&arch, seed).unwrap(), &ScoreConfig { seed, ..cfg }).unwrap();
        assert!(report.mean.is_finite(), "{}", arch.compact());
    }
}
