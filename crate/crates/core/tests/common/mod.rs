#![allow(dead_code)]

pub mod replay;

use phasenas::arch::{catalog_signature, parse_architecture, ArchitectureSpec, BlockKind, BlockSpec, Mode};
use phasenas::eval::{Layer, NetworkInstance, ScoreConfig, Tensor};
use phasenas::generate::{MockExplorer, MockRefiner, MockSpace, OpenSpace, Phase};
use phasenas::resource::ConstraintSet;
use phasenas::search::{
    run_search, Evaluator, JsonlSink, NetworkEvaluator, SearchConfig, SearchOutcome, Termination, Verdict,
};
use phasenas::rng::{stream, Domain};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Random structurally valid architecture over the whole catalog for `mode`.
pub fn random_arch(seed: u64, mode: Mode) -> ArchitectureSpec {
    let mut rng = stream(seed, Domain::Bench, 77);
    let kinds: Vec<BlockKind> = BlockKind::ALL
        .into_iter()
        .filter(|&k| !k.is_head() && catalog_signature(k).modes.contains(mode))
        .collect();
    let widths = [1usize, 2, 3, 4, 6, 8, 12, 16];
    let n = rng.random_range(1..=5);
    let mut blocks = Vec::new();
    let mut c = 3;
    for _ in 0..n {
        let kind = *kinds.choose(&mut rng).unwrap();
        let sig = catalog_signature(kind);
        let out = if sig.same_channels { c } else { *widths.choose(&mut rng).unwrap() };
        let stride = *sig.strides.choose(&mut rng).unwrap();
        let repeats = if sig.single_unit { 1 } else { rng.random_range(1..=3) };
        blocks.push(BlockSpec::new(kind, c, out, stride, repeats));
        c = out;
    }
    match mode {
        Mode::Classification => {
            blocks.push(BlockSpec::new(BlockKind::GAP, c, c, 1, 1));
            blocks.push(BlockSpec::new(BlockKind::FC, c, rng.random_range(1..=10), 1, 1));
        }
        Mode::Detection => {
            let tapped = rng.random_range(0..blocks.len());
            blocks[tapped].tap = Some(3);
            if tapped + 1 < blocks.len() && rng.random_bool(0.5) {
                let last = blocks.len() - 1;
                blocks[last].tap = Some(4);
            }
        }
    }
    let res = *[8usize, 12, 16, 32].choose(&mut rng).unwrap();
    ArchitectureSpec::new(mode, blocks).with_resolution(res)
}

/// Dense `f64` activation in NCHW order.
#[derive(Clone, Debug)]
pub struct Act {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Act {
    pub fn from_tensor(t: &Tensor) -> Self {
        Act { n: t.n, c: t.c, h: t.h, w: t.w, v: t.data.clone() }
    }

    fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.v[((n * self.c + c) * self.h + y) * self.w + x]
    }
}

/// Zero-padded convolution, padding `k / 2`, output side `ceil(side / stride)`.
pub fn ref_conv(x: &Act, weight: &[f64], cout: usize, k: usize, stride: usize) -> Act {
    let ho = x.h.div_ceil(stride);
    let wo = x.w.div_ceil(stride);
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; x.n * cout * ho * wo];
    for n in 0..x.n {
        for o in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for i in 0..x.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad;
                                let ix = (ox * stride + kx) as isize - pad;
                                if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                    continue;
                                }
                                let wv = weight[((o * x.c + i) * k + ky) * k + kx];
                                acc += wv * x.at(n, i, iy as usize, ix as usize);
                            }
                        }
                    }
                    out[((n * cout + o) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    Act { n: x.n, c: cout, h: ho, w: wo, v: out }
}

/// Batch-statistics normalization with unit scale and zero shift; returns the
/// per-channel biased variance of the input alongside the output.
pub fn ref_bn(x: &Act, eps: f64) -> (Act, Vec<f64>) {
    let count = (x.n * x.h * x.w) as f64;
    let mut out = x.clone();
    let mut vars = Vec::with_capacity(x.c);
    for c in 0..x.c {
        let mut values = Vec::new();
        for n in 0..x.n {
            for y in 0..x.h {
                for xx in 0..x.w {
                    values.push(x.at(n, c, y, xx));
                }
            }
        }
        let mean = values.iter().sum::<f64>() / count;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
        vars.push(var);
        for n in 0..x.n {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let i = ((n * x.c + c) * x.h + y) * x.w + xx;
                    out.v[i] = (x.v[i] - mean) / (var + eps).sqrt();
                }
            }
        }
    }
    (out, vars)
}

pub fn ref_relu(mut x: Act) -> Act {
    for v in &mut x.v {
        *v = v.max(0.0);
    }
    x
}

/// Forward pass of a chain of single-unit `ConvK*BNRELU` blocks. Returns the
/// tapped activations and every BN input variance.
pub fn ref_forward(net: &NetworkInstance, input: &Act, bn_eps: f64) -> (Vec<Act>, Vec<Vec<f64>>) {
    let mut x = input.clone();
    let mut taps = Vec::new();
    let mut vars = Vec::new();
    for (layer, block) in net.layers.iter().zip(&net.architecture.blocks) {
        let Layer::Plain(units) = layer else { panic!("reference covers plain conv chains only") };
        for unit in units {
            let conv = ref_conv(&x, &unit.conv.weight, unit.conv.out_channels, unit.conv.kernel, unit.conv.stride);
            let (normed, var) = ref_bn(&conv, bn_eps);
            vars.push(var);
            x = if unit.relu { ref_relu(normed) } else { normed };
        }
        if block.tap.is_some() {
            taps.push(x.clone());
        }
    }
    (taps, vars)
}

/// Straight-line perturbation score: per repeat `ln(Δ + ε) + Σ ln √(mean var + ε)`,
/// then the population mean.
pub fn ref_detection_mu(net: &NetworkInstance, cfg: &ScoreConfig, bn_eps: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..cfg.repeats {
        let (x1, x2) = phasenas::eval::score_inputs(cfg, net.architecture.input_channels, i);
        let a = Act::from_tensor(&x1);
        let b = Act::from_tensor(&x2);
        let mut mixed = a.clone();
        for (m, v) in mixed.v.iter_mut().zip(&b.v) {
            *m += cfg.gamma_mix * v;
        }
        let (clean_taps, vars) = ref_forward(net, &a, bn_eps);
        let (mixed_taps, _) = ref_forward(net, &mixed, bn_eps);
        let mut delta = 0.0;
        for (p, q) in clean_taps.iter().zip(&mixed_taps) {
            delta += p.v.iter().zip(&q.v).map(|(s, t)| (s - t).abs()).sum::<f64>();
        }
        let mut bn_term = 0.0;
        for var in &vars {
            let mean_var = var.iter().sum::<f64>() / var.len() as f64;
            bn_term += (mean_var + cfg.epsilon).sqrt().ln();
        }
        total += (delta + cfg.epsilon).ln() + bn_term;
    }
    total / cfg.repeats as f64
}

/// Checks a finished search against the controller's contract. Returns the
/// first broken rule.
pub fn check_search_invariants(outcome: &SearchOutcome, cfg: &SearchConfig, init_mu: f64) -> Result<(), String> {
    let records = &outcome.records;
    if records.len() > cfg.max_iterations || outcome.summary.iterations > cfg.max_iterations {
        return Err(format!("{} iterations exceed the budget {}", records.len(), cfg.max_iterations));
    }
    let mut best = init_mu;
    let mut phase = if init_mu >= cfg.gamma_trans { Phase::Refinement } else { Phase::Exploration };
    let mut transition = (init_mu >= cfg.gamma_trans).then_some(0);
    let mut base = (phase == Phase::Refinement).then_some(init_mu);
    for r in records {
        if r.pool_size > cfg.pool_size {
            return Err(format!("iteration {}: pool size {} > {}", r.iteration, r.pool_size, cfg.pool_size));
        }
        let now = r.pool_best.ok_or_else(|| format!("iteration {}: empty pool", r.iteration))?;
        if now < best {
            return Err(format!("iteration {}: pool best fell from {best} to {now}", r.iteration));
        }
        best = now;
        if r.phase != phase {
            return Err(format!("iteration {}: ran in {:?}, expected {:?}", r.iteration, r.phase, phase));
        }
        if r.transitioned {
            if transition.is_some() {
                return Err(format!("iteration {}: second transition", r.iteration));
            }
            transition = Some(r.iteration);
            phase = Phase::Refinement;
        }
        // The transition fires on the first iteration whose pool max reaches the threshold.
        if transition.is_none() && now >= cfg.gamma_trans {
            return Err(format!("iteration {}: pool max {now} reached threshold without a transition", r.iteration));
        }
        match (r.phase, r.verdict) {
            (Phase::Refinement, Verdict::Accepted) => {
                let (old, new) = (base.unwrap_or(f64::NEG_INFINITY), r.mu.unwrap_or(f64::NAN));
                if !(new > old) || r.base_score != Some(new) {
                    return Err(format!("iteration {}: base update {old} -> {new} is not a strict improvement", r.iteration));
                }
            }
            (Phase::Refinement, _) if r.base_score != base => {
                return Err(format!("iteration {}: base changed without an accepted candidate", r.iteration));
            }
            _ => {}
        }
        if r.transitioned {
            base = Some(now);
        } else if r.phase == Phase::Refinement {
            base = r.base_score;
        }
    }
    if transition != outcome.transition_iteration {
        return Err(format!("transition {:?} disagrees with summary {:?}", transition, outcome.transition_iteration));
    }
    if outcome.termination == Termination::Budget && records.len() != cfg.max_iterations {
        return Err("budget termination before the budget was spent".into());
    }
    if outcome.termination == Termination::StopThreshold && best < cfg.gamma_stop {
        return Err("stopped below the stop threshold".into());
    }
    Ok(())
}

// Both modes score roughly 2 to 6 under this score config.
const MOCK_GAMMA_TRANS: f64 = 3.0;
const MOCK_GAMMA_STOP: f64 = 5.5;

/// Small open-space search used by the controller invariant checks.
pub fn mock_search_config(seed: u64) -> SearchConfig {
    SearchConfig {
        pool_size: 5,
        max_iterations: 60,
        score_config: ScoreConfig { repeats: 2, batch_size: 4, resolution: 8, seed, ..ScoreConfig::default() },
        constraints: ConstraintSet { max_params: 100_000, max_flops: 20_000_000, max_depth: 12, min_params: None },
        seed,
        ..SearchConfig::new(MOCK_GAMMA_TRANS, MOCK_GAMMA_STOP)
    }
}

pub fn mock_search_init(mode: Mode) -> ArchitectureSpec {
    let text = match mode {
        Mode::Classification => "ConvK3BNRELU(3,8,1,1)\nGAP(8,8,1,1)\nFC(8,10,1,1)",
        Mode::Detection => "ConvK3BNRELU(3,8,2,1)@P3",
    };
    parse_architecture(text, mode).unwrap()
}

pub fn mock_search_space() -> MockSpace {
    MockSpace::Open(OpenSpace { widths: vec![8, 16, 24], max_body: 4, max_repeats: 2, num_classes: 10 })
}

/// Runs one seeded mock search; returns the outcome, the JSONL log and the
/// initial architecture's score.
pub fn mock_search(seed: u64, mode: Mode) -> (SearchOutcome, Vec<u8>, f64) {
    let cfg = mock_search_config(seed);
    let mut evaluator = NetworkEvaluator::new(cfg.score_config);
    let init_mu = evaluator.evaluate(&mock_search_init(mode)).unwrap().mu;
    let mut sink = JsonlSink::new(Vec::new());
    let outcome = run_search(
        &mock_search_init(mode),
        &cfg,
        &mut MockExplorer::new(mock_search_space()),
        &mut MockRefiner::new(mock_search_space()),
        &mut evaluator,
        &mut sink,
    )
    .unwrap();
    (outcome, sink.into_inner(), init_mu)
}

/// Chain of plain `ConvK*BNRELU` blocks with exactly two taps.
pub fn random_two_tap(seed: u64) -> ArchitectureSpec {
    let mut rng = stream(seed, Domain::Bench, 78);
    let kinds = [BlockKind::ConvK1BNRELU, BlockKind::ConvK3BNRELU, BlockKind::ConvK5BNRELU, BlockKind::ConvK7BNRELU];
    let n = rng.random_range(2..=4);
    let mut c = 3;
    let mut blocks = Vec::new();
    for _ in 0..n {
        let out = rng.random_range(2..=12);
        let block = BlockSpec::new(*kinds.choose(&mut rng).unwrap(), c, out, rng.random_range(1..=2), rng.random_range(1..=2));
        blocks.push(block);
        c = out;
    }
    let first = rng.random_range(0..n - 1);
    let second = rng.random_range(first + 1..n);
    blocks[first].tap = Some(3);
    blocks[second].tap = Some(4);
    ArchitectureSpec::new(Mode::Detection, blocks)
}
