//! Seeded stand-ins for the exploration and refinement models.
//!
//! Both mocks are pure functions of the generation context: the random stream
//! is keyed by `ctx.seed` and every other input comes from the context itself.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{GenerationContext, Generator, GeneratorError, GeneratorResult};
use crate::arch::{catalog_signature, parse_architecture, validate, ArchitectureSpec, BlockKind, BlockSpec, Mode};
use crate::oracle::{Genome, MicroSpace, CHOICES, SLOTS};
use crate::resource::{check, estimate};
use crate::rng::{stream, Domain};

const FRESH_ATTEMPTS: usize = 64;

/// Unconstrained layouts built from the block catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenSpace {
    pub widths: Vec<usize>,
    pub max_body: usize,
    pub max_repeats: usize,
    pub num_classes: usize,
}

impl Default for OpenSpace {
    fn default() -> Self {
        Self { widths: vec![8, 16, 24, 32, 48, 64], max_body: 6, max_repeats: 2, num_classes: 10 }
    }
}

/// Where the mocks draw architectures from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockSpace {
    Open(OpenSpace),
    /// The six-slot benchmark space; mutations are slot changes.
    Micro,
}

impl Default for MockSpace {
    fn default() -> Self {
        MockSpace::Open(OpenSpace::default())
    }
}

fn rng_for(ctx: &GenerationContext) -> ChaCha8Rng {
    stream(ctx.seed, Domain::Generator, 0)
}

fn render(arch: &ArchitectureSpec) -> String {
    arch.serialize().expect("mock architectures are non-empty")
}

/// With probability ½ (or when the pool is empty) a fresh architecture,
/// otherwise 2–4 mutations of a random pool member.
pub fn mock_explore(ctx: &GenerationContext, space: &MockSpace) -> String {
    let mut rng = rng_for(ctx);
    let fresh = ctx.pool.is_empty() || rng.random_bool(0.5);
    match space {
        MockSpace::Micro => {
            let parent = if fresh { None } else { pool_genome(ctx, &mut rng) };
            let genome = match parent {
                Some(mut g) => {
                    for _ in 0..rng.random_range(2..=4) {
                        mutate_slot(&mut g, &mut rng);
                    }
                    g
                }
                None => random_genome(&mut rng),
            };
            render(&MicroSpace.architecture(&genome))
        }
        MockSpace::Open(open) => {
            let parent = if fresh { None } else { pool_arch(ctx, &mut rng) };
            let arch = match parent {
                Some(mut arch) => {
                    let n = rng.random_range(2..=4);
                    let mut applied = 0;
                    let mut tries = 0;
                    while applied < n && tries < 32 {
                        tries += 1;
                        if mutate_open(&mut arch, open, &mut rng, Mutations::EXPLORE) {
                            applied += 1;
                        }
                    }
                    arch
                }
                None => fresh_open(ctx, open, &mut rng),
            };
            render(&arch)
        }
    }
}

/// Exactly one mutation of the base architecture.
pub fn mock_refine(ctx: &GenerationContext, space: &MockSpace) -> Result<String, GeneratorError> {
    let base = ctx
        .base
        .as_ref()
        .ok_or_else(|| GeneratorError::Precondition("refinement requires a base architecture".into()))?;
    let arch = parse_architecture(&base.serialization, ctx.mode)
        .map_err(|e| GeneratorError::Precondition(format!("base does not parse: {e}")))?;
    let mut rng = rng_for(ctx);
    match space {
        MockSpace::Micro => {
            let mut genome = MicroSpace
                .genome(&arch)
                .ok_or_else(|| GeneratorError::Precondition("base is outside the micro space".into()))?;
            mutate_slot(&mut genome, &mut rng);
            Ok(render(&MicroSpace.architecture(&genome)))
        }
        MockSpace::Open(open) => {
            let mut arch = arch;
            for _ in 0..64 {
                if mutate_open(&mut arch, open, &mut rng, Mutations::REFINE) {
                    return Ok(render(&arch));
                }
            }
            Err(GeneratorError::Precondition("base admits no single-step mutation".into()))
        }
    }
}

fn random_genome(rng: &mut ChaCha8Rng) -> Genome {
    let mut g = [0u8; SLOTS];
    for slot in g.iter_mut() {
        *slot = rng.random_range(0..CHOICES.len()) as u8;
    }
    g
}

fn mutate_slot(genome: &mut Genome, rng: &mut ChaCha8Rng) {
    let slot = rng.random_range(0..SLOTS);
    let shift = rng.random_range(1..CHOICES.len()) as u8;
    genome[slot] = (genome[slot] + shift) % CHOICES.len() as u8;
}

fn pool_genome(ctx: &GenerationContext, rng: &mut ChaCha8Rng) -> Option<Genome> {
    let member = ctx.pool.choose(rng)?;
    let arch = parse_architecture(&member.serialization, ctx.mode).ok()?;
    MicroSpace.genome(&arch)
}

fn pool_arch(ctx: &GenerationContext, rng: &mut ChaCha8Rng) -> Option<ArchitectureSpec> {
    let member = ctx.pool.choose(rng)?;
    let arch = parse_architecture(&member.serialization, ctx.mode).ok()?;
    (body_len(&arch) > 0).then_some(arch)
}

fn body_kinds(mode: Mode) -> Vec<BlockKind> {
    BlockKind::ALL
        .into_iter()
        .filter(|&k| !k.is_head() && k != BlockKind::Identity && catalog_signature(k).modes.contains(mode))
        .collect()
}

fn body_len(arch: &ArchitectureSpec) -> usize {
    match arch.mode {
        Mode::Classification => arch.blocks.len().saturating_sub(2),
        Mode::Detection => arch.blocks.len(),
    }
}

fn random_block(kinds: &[BlockKind], open: &OpenSpace, in_channels: usize, rng: &mut ChaCha8Rng) -> BlockSpec {
    let kind = *kinds.choose(rng).expect("catalog has body kinds");
    let sig = catalog_signature(kind);
    let out = if sig.same_channels { in_channels } else { *open.widths.choose(rng).expect("widths are non-empty") };
    let stride = *sig.strides.choose(rng).expect("signature lists strides");
    let repeats = if sig.single_unit { 1 } else { rng.random_range(1..=open.max_repeats.max(1)) };
    BlockSpec::new(kind, in_channels, out, stride, repeats)
}

/// Taps the last block of each of the final three resolution stages.
fn place_taps(blocks: &mut [BlockSpec]) {
    let mut stage_ends: Vec<usize> = (0..blocks.len())
        .filter(|&i| i + 1 == blocks.len() || blocks[i + 1].stride > 1)
        .collect();
    let keep = stage_ends.len().saturating_sub(3);
    stage_ends.drain(..keep);
    for (label, &i) in stage_ends.iter().enumerate() {
        blocks[i].tap = Some(3 + label as u32);
    }
}

fn fresh_open(ctx: &GenerationContext, open: &OpenSpace, rng: &mut ChaCha8Rng) -> ArchitectureSpec {
    let kinds = body_kinds(ctx.mode);
    let mut last = None;
    for _ in 0..FRESH_ATTEMPTS {
        let n = rng.random_range(1..=open.max_body.max(1));
        let mut blocks = Vec::with_capacity(n + 2);
        let mut c = crate::arch::DEFAULT_INPUT_CHANNELS;
        for _ in 0..n {
            let block = random_block(&kinds, open, c, rng);
            c = block.out_channels;
            blocks.push(block);
        }
        match ctx.mode {
            Mode::Classification => {
                blocks.push(BlockSpec::new(BlockKind::GAP, c, c, 1, 1));
                blocks.push(BlockSpec::new(BlockKind::FC, c, open.num_classes, 1, 1));
            }
            Mode::Detection => place_taps(&mut blocks),
        }
        let arch = ArchitectureSpec::new(ctx.mode, blocks);
        if validate(&arch, &ctx.constraints).is_empty() && check(&estimate(&arch), &ctx.constraints).is_empty() {
            return arch;
        }
        last = Some(arch);
    }
    last.expect("at least one attempt")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mutation {
    Kind,
    Width,
    Insert,
    Remove,
    Stride,
    Repeats,
}

struct Mutations;

impl Mutations {
    const EXPLORE: &'static [Mutation] =
        &[Mutation::Kind, Mutation::Width, Mutation::Insert, Mutation::Remove, Mutation::Stride, Mutation::Repeats];
    /// Each changes one block parameter or inserts/deletes one block.
    const REFINE: &'static [Mutation] =
        &[Mutation::Kind, Mutation::Insert, Mutation::Remove, Mutation::Stride, Mutation::Repeats];
}

/// Applies one randomly chosen mutation; `false` when it was not applicable
/// and `arch` is unchanged.
fn mutate_open(arch: &mut ArchitectureSpec, open: &OpenSpace, rng: &mut ChaCha8Rng, allowed: &[Mutation]) -> bool {
    let n = body_len(arch);
    if n == 0 {
        return false;
    }
    let mode = arch.mode;
    let blocks = &mut arch.blocks;
    match *allowed.choose(rng).expect("mutation list is non-empty") {
        Mutation::Kind => {
            let i = rng.random_range(0..n);
            let b = blocks[i].clone();
            let options: Vec<BlockKind> = body_kinds(mode)
                .into_iter()
                .filter(|&k| {
                    let sig = catalog_signature(k);
                    k != b.kind
                        && sig.strides.contains(&b.stride)
                        && (!sig.same_channels || b.in_channels == b.out_channels)
                        && (!sig.single_unit || b.repeats == 1)
                })
                .collect();
            match options.choose(rng) {
                Some(&k) => {
                    blocks[i].kind = k;
                    true
                }
                None => false,
            }
        }
        Mutation::Width => {
            // Boundary between body block i and its successor (the head or next block).
            let i = rng.random_range(0..n);
            let next = i + 1;
            let pinned = |b: &BlockSpec| catalog_signature(b.kind).same_channels && !b.kind.is_head();
            if pinned(&blocks[i]) || (next < n && pinned(&blocks[next])) {
                return false;
            }
            let current = blocks[i].out_channels;
            let options: Vec<usize> = open.widths.iter().copied().filter(|&w| w != current).collect();
            let Some(&w) = options.choose(rng) else { return false };
            blocks[i].out_channels = w;
            if next < blocks.len() {
                blocks[next].in_channels = w;
                if blocks[next].kind == BlockKind::GAP {
                    blocks[next].out_channels = w;
                    blocks[next + 1].in_channels = w;
                }
            }
            true
        }
        Mutation::Insert => {
            if n >= open.max_body.max(1) * 2 {
                return false;
            }
            let at = rng.random_range(0..=n);
            let c = if at == 0 { arch.input_channels } else { blocks[at - 1].out_channels };
            let kinds: Vec<BlockKind> =
                body_kinds(mode).into_iter().filter(|&k| catalog_signature(k).strides.contains(&1)).collect();
            let kind = *kinds.choose(rng).expect("stride-1 kinds exist");
            blocks.insert(at, BlockSpec::new(kind, c, c, 1, 1));
            true
        }
        Mutation::Remove => {
            if n < 2 {
                return false;
            }
            let options: Vec<usize> =
                (0..n).filter(|&i| blocks[i].in_channels == blocks[i].out_channels && blocks[i].tap.is_none()).collect();
            match options.choose(rng) {
                Some(&i) => {
                    blocks.remove(i);
                    true
                }
                None => false,
            }
        }
        Mutation::Stride => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            for i in order {
                let strides = catalog_signature(blocks[i].kind).strides;
                if let Some(&s) = strides.iter().find(|&&s| s != blocks[i].stride) {
                    blocks[i].stride = s;
                    return true;
                }
            }
            false
        }
        Mutation::Repeats => {
            let options: Vec<usize> = (0..n).filter(|&i| !catalog_signature(blocks[i].kind).single_unit).collect();
            let Some(&i) = options.choose(rng) else { return false };
            let max = open.max_repeats.max(2);
            let r = blocks[i].repeats;
            blocks[i].repeats = if r <= 1 { 2 } else if r >= max || rng.random_bool(0.5) { r - 1 } else { r + 1 };
            true
        }
    }
}

fn wrap(dsl: String) -> GeneratorResult {
    GeneratorResult { raw_text: dsl.clone(), extracted: Ok(dsl), attempts: 1 }
}

fn space_name(space: &MockSpace) -> &'static str {
    match space {
        MockSpace::Open(_) => "open",
        MockSpace::Micro => "micro",
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockExplorer {
    pub space: MockSpace,
}

impl MockExplorer {
    pub fn new(space: MockSpace) -> Self {
        Self { space }
    }
}

impl Generator for MockExplorer {
    fn name(&self) -> String {
        format!("mock-explore:{}", space_name(&self.space))
    }

    fn generate(&mut self, ctx: &GenerationContext) -> Result<GeneratorResult, GeneratorError> {
        Ok(wrap(mock_explore(ctx, &self.space)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockRefiner {
    pub space: MockSpace,
}

impl MockRefiner {
    pub fn new(space: MockSpace) -> Self {
        Self { space }
    }
}

impl Generator for MockRefiner {
    fn name(&self) -> String {
        format!("mock-refine:{}", space_name(&self.space))
    }

    fn generate(&mut self, ctx: &GenerationContext) -> Result<GeneratorResult, GeneratorError> {
        mock_refine(ctx, &self.space).map(wrap)
    }
}
