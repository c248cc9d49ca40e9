//! Exhaustively scored micro search space.
//!
//! Six slots, each one of `Identity`, `ConvK3BNRELU` or `ResK3K3`, on the fixed
//! channel schedule 3→8→16→16→32→32→64 with strides (1,2,1,2,1,1) and a
//! GAP/FC head: 729 architectures in total. Tabulating the score of every
//! member gives ground-truth ranks for judging search runs.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::{ArchitectureSpec, BlockKind, BlockSpec, Mode};
use crate::eval::{build_network, classification_score, ScoreConfig, ScoreError};
use crate::generate::{MockExplorer, MockRefiner, MockSpace};
use crate::rng::{stream, Domain};
use crate::search::{run_search, Evaluation, Evaluator, NullSink, SearchConfig, SearchError, Termination};

pub const SLOTS: usize = 6;
pub const CHOICES: [BlockKind; 3] = [BlockKind::Identity, BlockKind::ConvK3BNRELU, BlockKind::ResK3K3];
pub const CHANNELS: [usize; SLOTS + 1] = [3, 8, 16, 16, 32, 32, 64];
pub const STRIDES: [usize; SLOTS] = [1, 2, 1, 2, 1, 1];
pub const NUM_CLASSES: usize = 10;
pub const SPACE_SIZE: usize = 729;
pub const FORMAT_VERSION: u32 = 2;

/// Slot choices, each an index into [`CHOICES`].
pub type Genome = [u8; SLOTS];

#[derive(Debug, Clone, Copy, Default)]
pub struct MicroSpace;

impl MicroSpace {
    pub fn architecture(&self, genome: &Genome) -> ArchitectureSpec {
        let mut blocks: Vec<BlockSpec> = (0..SLOTS)
            .map(|i| BlockSpec::new(CHOICES[genome[i] as usize], CHANNELS[i], CHANNELS[i + 1], STRIDES[i], 1))
            .collect();
        let last = CHANNELS[SLOTS];
        blocks.push(BlockSpec::new(BlockKind::GAP, last, last, 1, 1));
        blocks.push(BlockSpec::new(BlockKind::FC, last, NUM_CLASSES, 1, 1));
        ArchitectureSpec::new(Mode::Classification, blocks)
    }

    /// Inverse of [`MicroSpace::architecture`]; `None` when `arch` is outside the space.
    pub fn genome(&self, arch: &ArchitectureSpec) -> Option<Genome> {
        let mut genome = [0u8; SLOTS];
        for (i, g) in genome.iter_mut().enumerate() {
            let block = arch.blocks.get(i)?;
            *g = CHOICES.iter().position(|&k| k == block.kind)? as u8;
        }
        (self.architecture(&genome) == *arch).then_some(genome)
    }

    /// Ternary counter order, slot 0 least significant.
    pub fn genome_at(index: usize) -> Genome {
        let mut genome = [0u8; SLOTS];
        let mut rest = index;
        for g in genome.iter_mut() {
            *g = (rest % 3) as u8;
            rest /= 3;
        }
        genome
    }
}

pub fn enumerate_space() -> Vec<ArchitectureSpec> {
    (0..SPACE_SIZE).map(|i| MicroSpace.architecture(&MicroSpace::genome_at(i))).collect()
}

/// Score configuration used for tabulation unless overridden.
pub fn default_bench_config() -> ScoreConfig {
    ScoreConfig { gamma_mix: 0.01, epsilon: 1e-5, repeats: 2, batch_size: 8, resolution: 16, seed: 0 }
}

/// Top 5% of the space, rounded up.
pub const TOP5_RANK: usize = SPACE_SIZE.div_ceil(20);

/// Pinned search settings for the benchmark. The stop threshold is never
/// reached, so every run spends the full budget.
pub fn default_bench_search() -> SearchConfig {
    SearchConfig {
        pool_size: 5,
        max_iterations: 200,
        score_config: default_bench_config(),
        ..SearchConfig::new(4.2, f64::INFINITY)
    }
}

/// The same search with refinement switched off: the transition threshold is
/// raised to the stop threshold.
pub fn exploration_only(cfg: &SearchConfig) -> SearchConfig {
    SearchConfig { gamma_trans: cfg.gamma_stop, ..cfg.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub arch: String,
    /// `-inf` for non-finite scores.
    #[serde(with = "score_repr")]
    pub mu: f64,
    pub rank: usize,
}

/// JSON has no infinities; non-finite scores persist as `null`.
mod score_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableHeader {
    format_version: u32,
    config_hash: String,
    config: ScoreConfig,
    entries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    pub config: ScoreConfig,
    /// Enumeration order.
    pub entries: Vec<OracleEntry>,
    index: HashMap<String, usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("architecture is not a member of the micro space")]
    NotInSpace,
    #[error("oracle file: {0}")]
    Io(#[from] io::Error),
    #[error("oracle file is malformed: {0}")]
    Format(String),
}

/// Stable hash of a score configuration, used to detect stale cached tables.
pub fn config_hash(cfg: &ScoreConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("score config serializes");
    hex::encode(Sha256::digest(format!("v{FORMAT_VERSION}:{canonical}").as_bytes()))
}

/// `1 + #{strictly greater μ}`; ties share the better rank.
pub fn ranks(scores: &[f64]) -> Vec<usize> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    scores
        .iter()
        .map(|s| 1 + sorted.partition_point(|x| x.total_cmp(s) == std::cmp::Ordering::Greater))
        .collect()
}

impl OracleTable {
    fn from_scores(config: ScoreConfig, archs: Vec<String>, scores: Vec<f64>) -> Self {
        let r = ranks(&scores);
        let entries: Vec<OracleEntry> = archs
            .into_iter()
            .zip(scores)
            .zip(r)
            .map(|((arch, mu), rank)| OracleEntry { arch, mu, rank })
            .collect();
        let index = entries.iter().enumerate().map(|(i, e)| (e.arch.clone(), i)).collect();
        Self { config, entries, index }
    }

    pub fn get(&self, arch: &ArchitectureSpec) -> Option<&OracleEntry> {
        self.index.get(&arch.compact()).map(|&i| &self.entries[i])
    }

    pub fn rank_of(&self, arch: &ArchitectureSpec) -> Result<usize, OracleError> {
        self.get(arch).map(|e| e.rank).ok_or(OracleError::NotInSpace)
    }

    pub fn argmax(&self) -> &OracleEntry {
        self.entries.iter().min_by_key(|e| e.rank).expect("table is non-empty")
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.config)
    }

    pub fn save(&self, path: &Path) -> Result<(), OracleError> {
        let mut out = io::BufWriter::new(fs::File::create(path)?);
        let header = TableHeader {
            format_version: FORMAT_VERSION,
            config_hash: self.config_hash(),
            config: self.config,
            entries: self.entries.len(),
        };
        writeln!(out, "{}", serde_json::to_string(&header).map_err(|e| OracleError::Format(e.to_string()))?)?;
        for entry in &self.entries {
            writeln!(out, "{}", serde_json::to_string(entry).map_err(|e| OracleError::Format(e.to_string()))?)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut lines = reader.lines();
        let header_line = lines.next().ok_or_else(|| OracleError::Format("empty file".into()))??;
        let header: TableHeader =
            serde_json::from_str(&header_line).map_err(|e| OracleError::Format(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(OracleError::Format(format!("unsupported format version {}", header.format_version)));
        }
        if header.config_hash != config_hash(&header.config) {
            return Err(OracleError::Format("config hash does not match config".into()));
        }
        let mut entries = Vec::with_capacity(header.entries);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str::<OracleEntry>(&line).map_err(|e| OracleError::Format(e.to_string()))?);
        }
        if entries.len() != header.entries {
            return Err(OracleError::Format(format!("expected {} entries, found {}", header.entries, entries.len())));
        }
        let index = entries.iter().enumerate().map(|(i, e)| (e.arch.clone(), i)).collect();
        Ok(Self { config: header.config, entries, index })
    }

    /// Loads `path` if it holds a table for `cfg`; otherwise tabulates and saves.
    /// The flag reports whether the cache was reused.
    pub fn load_or_tabulate(path: &Path, cfg: &ScoreConfig) -> Result<(Self, bool), OracleError> {
        if let Ok(table) = Self::load(path) {
            if table.config_hash() == config_hash(cfg) {
                return Ok((table, true));
            }
        }
        let table = tabulate(cfg);
        table.save(path)?;
        Ok((table, false))
    }
}

/// Scores every member of the micro space. Runs candidates in parallel;
/// each score is deterministic so the table does not depend on scheduling.
pub fn tabulate(cfg: &ScoreConfig) -> OracleTable {
    let archs = enumerate_space();
    let scores: Vec<f64> = archs
        .par_iter()
        .map(|arch| {
            let net = build_network(arch, cfg.seed).expect("micro space members are valid");
            classification_score(&net, cfg).map_or(f64::NEG_INFINITY, |r| r.mean)
        })
        .collect();
    OracleTable::from_scores(*cfg, archs.iter().map(|a| a.compact()).collect(), scores)
}

/// Looks scores up in a tabulated oracle instead of running networks.
pub struct TableEvaluator<'a> {
    pub table: &'a OracleTable,
}

impl Evaluator for TableEvaluator<'_> {
    fn evaluate(&mut self, arch: &ArchitectureSpec) -> Result<Evaluation, ScoreError> {
        let entry = self
            .table
            .get(arch)
            .ok_or_else(|| ScoreError::InvalidConfig("architecture is not in the oracle table".into()))?;
        if entry.mu.is_finite() {
            Ok(Evaluation { mu: entry.mu, sigma: 0.0 })
        } else {
            Err(ScoreError::NonFinite { repeat: 0, value: entry.mu })
        }
    }
}

/// The seeded micro-space member a bench run starts from.
pub fn bench_init(seed: u64) -> ArchitectureSpec {
    use rand::Rng;
    let index = stream(seed, Domain::Bench, 0).random_range(0..SPACE_SIZE);
    MicroSpace.architecture(&MicroSpace::genome_at(index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub seed: u64,
    pub best: String,
    pub mu: f64,
    pub rank: usize,
    pub iterations: usize,
    pub transition_iteration: Option<usize>,
    pub termination: Termination,
    /// Oracle rank of the pool's best after each iteration; index 0 is the initial architecture.
    pub rank_trajectory: Vec<usize>,
}

/// Runs one search per seed over the micro space, scoring from `table`.
///
/// `template.seed` is replaced by each seed in turn.
pub fn run_bench(table: &OracleTable, template: &SearchConfig, seeds: &[u64]) -> Result<Vec<BenchRun>, SearchError> {
    seeds
        .iter()
        .map(|&seed| {
            let cfg = SearchConfig { seed, ..template.clone() };
            let init = bench_init(seed);
            let mut evaluator = TableEvaluator { table };
            let out = run_search(
                &init,
                &cfg,
                &mut MockExplorer::new(MockSpace::Micro),
                &mut MockRefiner::new(MockSpace::Micro),
                &mut evaluator,
                &mut NullSink,
            )?;
            let rank_of_score = |mu: f64| 1 + table.entries.iter().filter(|e| e.mu > mu).count();
            let mut trajectory = vec![table.rank_of(&init).expect("init is in the space")];
            trajectory.extend(out.records.iter().map(|r| r.pool_best.map_or(SPACE_SIZE, rank_of_score)));
            Ok(BenchRun {
                seed,
                best: out.best.compact(),
                mu: out.mu,
                rank: table.rank_of(&out.best).expect("search stays in the space"),
                iterations: out.summary.iterations,
                transition_iteration: out.transition_iteration,
                termination: out.termination,
                rank_trajectory: trajectory,
            })
        })
        .collect()
}

/// Median of final ranks; the lower middle element for even counts.
pub fn median_rank(runs: &[BenchRun]) -> Option<usize> {
    let mut ranks: Vec<usize> = runs.iter().map(|r| r.rank).collect();
    ranks.sort_unstable();
    ranks.get(ranks.len().saturating_sub(1) / 2).copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::validate;
    use crate::resource::ConstraintSet;
    use std::collections::HashSet;

    #[test]
    fn space_is_the_full_product() {
        let archs = enumerate_space();
        assert_eq!(archs.len(), SPACE_SIZE);
        let unique: HashSet<String> = archs.iter().map(|a| a.compact()).collect();
        assert_eq!(unique.len(), SPACE_SIZE);
        assert!(archs.iter().all(|a| validate(a, &ConstraintSet::default()).is_empty()));
        assert!(archs.iter().any(|a| a.blocks[..SLOTS].iter().all(|b| b.kind == BlockKind::Identity)));
    }

    #[test]
    fn genome_round_trip() {
        for i in [0, 1, 5, 242, 728] {
            let g = MicroSpace::genome_at(i);
            assert_eq!(MicroSpace.genome(&MicroSpace.architecture(&g)), Some(g));
        }
        let mut outside = MicroSpace.architecture(&[1; SLOTS]);
        outside.blocks[2].repeats = 2;
        assert_eq!(MicroSpace.genome(&outside), None);
    }

    #[test]
    fn ranks_share_ties_and_sort_infinities_last() {
        assert_eq!(ranks(&[1.0, 3.0, 3.0, f64::NEG_INFINITY, 2.0]), vec![4, 1, 1, 5, 3]);
    }

    #[test]
    fn persisted_table_round_trips() {
        let cfg = default_bench_config();
        let archs: Vec<String> = enumerate_space().iter().take(4).map(|a| a.compact()).collect();
        let table = OracleTable::from_scores(cfg, archs, vec![1.5, f64::NEG_INFINITY, 0.25, 1.5]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oracle.jsonl");
        table.save(&path).unwrap();
        let back = OracleTable::load(&path).unwrap();
        assert_eq!(back.entries, table.entries);
        assert_eq!(back.entries[1].rank, 4);
    }
}
