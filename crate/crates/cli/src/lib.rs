//! Command implementations behind the `phasenas` binary.

pub mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use phasenas::arch::{parse_architecture, validate, ArchitectureSpec, Mode};
use phasenas::eval::{build_network, score, ScoreError, ScoreReport};
use phasenas::generate::{
    mock_explore, GenerationContext, Generator, HttpTransport, LlmGenerator, MockExplorer, MockRefiner, MockSpace,
    Phase,
};
use phasenas::oracle::{self, median_rank, run_bench, BenchRun, OracleTable, TOP5_RANK};
use phasenas::resource::{check, estimate_at, FLOPS_CONVENTION};
use phasenas::search::{run_search, JsonlSink, NetworkEvaluator, SearchConfig, Termination};

use config::{GeneratorChoice, RunConfig, ScoreSection};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;
pub const EXIT_NON_FINITE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "phasenas", version, about = "Phase-adaptive architecture search with training-free scores")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// classification or detection.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate an architecture file.
    Validate {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score an architecture with a randomly initialized network.
    Score {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print parameter, FLOP and depth estimates.
    Estimate {
        file: PathBuf,
        /// Input side length; defaults to the architecture's own.
        #[arg(long)]
        resolution: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run an architecture search.
    Search {
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate the micro-space oracle and rank seeded search results against it.
    Bench {
        /// Number of seeded searches.
        #[arg(long)]
        seeds: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

/// A failed command: message for standard error plus exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn config(e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

pub fn run(cli: Cli, out: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Validate { file, common } => cmd_validate(&file, &common, out),
        Command::Score { file, common } => cmd_score(&file, &common, out),
        Command::Estimate { file, resolution, common } => cmd_estimate(&file, resolution, &common, out),
        Command::Search { common } => cmd_search(&common, out),
        Command::Bench { seeds, common } => cmd_bench(seeds, &common, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            f.code
        }
    }
}

fn load_config(common: &Common, required: bool) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(Failure::config)?,
        None if required => return Err(Failure::config("--config is required")),
        None => RunConfig { base_dir: PathBuf::from("."), ..RunConfig::default() },
    };
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(mode) = common.mode {
        cfg.mode = Some(mode);
    }
    Ok(cfg)
}

fn write_out(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> CmdResult {
    out.write_fmt(text).and_then(|_| out.write_all(b"\n")).map_err(|e| Failure::config(format!("stdout: {e}")))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => { write_out($out, format_args!($($arg)*)) };
}

fn read_source(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

/// Parses and structurally validates `path`, reporting every problem.
fn load_architecture(path: &Path, cfg: &RunConfig) -> Result<ArchitectureSpec, Failure> {
    let text = read_source(path)?;
    let arch = parse_architecture(&text, cfg.mode())
        .map_err(|e| Failure::new(EXIT_INVALID, format!("{}: ParseError at {e}", path.display())))?;
    let errors = validate(&arch, &cfg.constraints.unwrap_or_default());
    if !errors.is_empty() {
        let lines: Vec<String> = errors.iter().map(|e| format!("{}: {e}", path.display())).collect();
        return Err(Failure::new(EXIT_INVALID, lines.join("\n")));
    }
    Ok(arch)
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

fn cmd_validate(file: &Path, common: &Common, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common, false)?;
    let arch = load_architecture(file, &cfg)?;
    say!(out, "{}: ok ({} mode, {} blocks)", file.display(), arch.mode, arch.blocks.len())
}

#[derive(Serialize)]
struct ScoreRecord<'a> {
    architecture: String,
    report: &'a ScoreReport,
}

fn cmd_score(file: &Path, common: &Common, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common, false)?;
    let score_cfg = cfg.score_config();
    score_cfg.check().map_err(Failure::config)?;
    let arch = load_architecture(file, &cfg)?;
    let net = build_network(&arch, score_cfg.seed).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
    let report = match score(&net, &score_cfg) {
        Ok(r) => r,
        Err(e @ ScoreError::NonFinite { .. }) => return Err(Failure::new(EXIT_NON_FINITE, e.to_string())),
        Err(e) => return Err(Failure::new(EXIT_INVALID, e.to_string())),
    };
    say!(out, "mu = {}", report.mean)?;
    say!(out, "sigma = {}", report.std)?;
    say!(out, "repeats = {}", report.per_repeat.len())?;
    for (i, s) in report.per_repeat.iter().enumerate() {
        say!(out, "s[{i}] = {s}")?;
    }
    if let Some(path) = &common.out {
        let record = ScoreRecord { architecture: arch.compact(), report: &report };
        let json = serde_json::to_string(&record).map_err(Failure::config)?;
        write_file(path, &(json + "\n"))?;
    }
    Ok(())
}

fn cmd_estimate(file: &Path, resolution: Option<usize>, common: &Common, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common, false)?;
    let arch = load_architecture(file, &cfg)?;
    let side = resolution.unwrap_or(arch.input_resolution);
    if side == 0 {
        return Err(Failure::config("resolution must be positive"));
    }
    let profile = estimate_at(&arch, side);
    say!(out, "# {FLOPS_CONVENTION}")?;
    say!(out, "params = {}", profile.params)?;
    say!(out, "flops = {}", profile.flops)?;
    say!(out, "depth = {}", profile.depth)?;
    say!(out, "resolution = {}", profile.resolution)?;
    let limits = cfg.constraints.unwrap_or_default();
    for v in check(&profile, &limits) {
        say!(out, "over budget: {v}")?;
    }
    Ok(())
}

fn initial_architecture(cfg: &RunConfig, space: &MockSpace, search: &SearchConfig) -> Result<ArchitectureSpec, Failure> {
    if let Some(path) = &cfg.init {
        return load_architecture(&cfg.resolve_path(path), cfg);
    }
    if *space == MockSpace::Micro {
        return Ok(oracle::bench_init(search.seed));
    }
    let ctx = GenerationContext {
        phase: Phase::Exploration,
        mode: cfg.mode(),
        constraints: search.constraints,
        catalog: phasenas::arch::catalog_table(cfg.mode()),
        pool: Vec::new(),
        base: None,
        feedback: Vec::new(),
        seed: search.seed,
    };
    let text = mock_explore(&ctx, space);
    parse_architecture(&text, cfg.mode()).map_err(|e| Failure::config(format!("initial architecture: {e}")))
}

fn cmd_search(common: &Common, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common, true)?;
    let search = cfg.search_config().map_err(Failure::config)?;
    let space = cfg.mock_space();

    let (mut explorer, mut refiner): (Box<dyn Generator>, Box<dyn Generator>) = match cfg.generator {
        GeneratorChoice::Mock => (Box::new(MockExplorer::new(space.clone())), Box::new(MockRefiner::new(space.clone()))),
        GeneratorChoice::Llm => {
            let ep = cfg.endpoint().map_err(Failure::config)?;
            (
                Box::new(LlmGenerator::new(ep.clone(), Box::new(HttpTransport::new()))),
                Box::new(LlmGenerator::new(ep, Box::new(HttpTransport::new()))),
            )
        }
    };
    let init = initial_architecture(&cfg, &space, &search)?;

    let output = cfg.output.clone().unwrap_or_default();
    let log_path = common
        .out
        .clone()
        .or_else(|| output.log.as_ref().map(|p| cfg.resolve_path(p)))
        .unwrap_or_else(|| PathBuf::from("search.jsonl"));
    let best_path = output.best.as_ref().map(|p| cfg.resolve_path(p)).unwrap_or_else(|| log_path.with_extension("best.arch"));
    if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))?;
    }
    let file = fs::File::create(&log_path)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", log_path.display())))?;
    let mut sink = JsonlSink::new(io::BufWriter::new(file));
    let mut evaluator = NetworkEvaluator::new(search.score_config);

    let outcome = run_search(&init, &search, explorer.as_mut(), refiner.as_mut(), &mut evaluator, &mut sink)
        .map_err(Failure::config)?;
    write_file(&best_path, &outcome.best.serialize().expect("best is non-empty"))?;

    say!(out, "best = {}", outcome.best.compact())?;
    say!(out, "mu = {}", outcome.mu)?;
    match outcome.transition_iteration {
        Some(i) => say!(out, "transition_iteration = {i}")?,
        None => say!(out, "transition_iteration = none")?,
    }
    say!(out, "iterations = {}", outcome.summary.iterations)?;
    say!(out, "termination = {:?}", outcome.termination)?;
    say!(out, "log = {}", log_path.display())?;
    if outcome.termination == Termination::TransportExhausted {
        let reason = outcome.records.last().and_then(|r| r.reason.clone()).unwrap_or_default();
        return Err(Failure::new(EXIT_TRANSPORT, reason));
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    oracle_config_hash: String,
    oracle_reused: bool,
    space_size: usize,
    runs: Vec<BenchRun>,
    median_rank: Option<usize>,
    top5_hits: usize,
    ablation: Option<AblationReport>,
}

#[derive(Serialize)]
struct AblationReport {
    runs: Vec<BenchRun>,
    median_rank: Option<usize>,
}

fn cmd_bench(seeds: Option<usize>, common: &Common, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common, true)?;
    let mut search = cfg.search_config().map_err(Failure::config)?;
    let bench = cfg.bench.clone().unwrap_or_default();
    let n = seeds.or(bench.seeds).unwrap_or(10);
    let first = cfg.seed();
    let seed_list: Vec<u64> = (first..first + n as u64).collect();

    let table_cfg = resolve_bench_score(bench.score.as_ref());
    table_cfg.check().map_err(Failure::config)?;
    let cache = bench.oracle.as_ref().map(|p| cfg.resolve_path(p)).unwrap_or_else(|| cfg.resolve_path(Path::new("oracle.jsonl")));
    let (table, reused) = OracleTable::load_or_tabulate(&cache, &table_cfg).map_err(Failure::config)?;
    say!(
        out,
        "oracle: {} ({} architectures, config {})",
        if reused { "reused cached table" } else { "tabulated" },
        table.entries.len(),
        &table.config_hash()[..12]
    )?;

    search.score_config = table_cfg;
    let runs = run_bench(&table, &search, &seed_list).map_err(Failure::config)?;
    for r in &runs {
        let transition = r.transition_iteration.map_or("none".to_string(), |i| i.to_string());
        say!(out, "seed {}: rank {} (mu {:.6}, transition {transition})", r.seed, r.rank, r.mu)?;
    }
    let hits = runs.iter().filter(|r| r.rank <= TOP5_RANK).count();
    let median = median_rank(&runs);
    say!(out, "median rank {}; {hits}/{} runs in the top {TOP5_RANK}", median.unwrap_or(0), runs.len())?;

    let ablation = if bench.ablation {
        let runs = run_bench(&table, &oracle::exploration_only(&search), &seed_list).map_err(Failure::config)?;
        let median = median_rank(&runs);
        say!(out, "exploration-only median rank {}", median.unwrap_or(0))?;
        Some(AblationReport { runs, median_rank: median })
    } else {
        None
    };

    if let Some(path) = common.out.clone().or_else(|| cfg.output.as_ref()?.report.as_ref().map(|p| cfg.resolve_path(p))) {
        let report = BenchReport {
            oracle_config_hash: table.config_hash(),
            oracle_reused: reused,
            space_size: table.entries.len(),
            runs,
            median_rank: median,
            top5_hits: hits,
            ablation,
        };
        let json = serde_json::to_string_pretty(&report).map_err(Failure::config)?;
        write_file(&path, &(json + "\n"))?;
    }
    Ok(())
}

/// Bench tabulation settings start from the pinned micro-space defaults, not the mode defaults.
pub fn resolve_bench_score(section: Option<&ScoreSection>) -> phasenas::eval::ScoreConfig {
    let d = oracle::default_bench_config();
    let s = section.cloned().unwrap_or_default();
    phasenas::eval::ScoreConfig {
        gamma_mix: s.gamma_mix.unwrap_or(d.gamma_mix),
        epsilon: s.epsilon.unwrap_or(d.epsilon),
        repeats: s.repeats.unwrap_or(d.repeats),
        batch_size: s.batch_size.unwrap_or(d.batch_size),
        resolution: s.resolution.unwrap_or(d.resolution),
        seed: s.seed.unwrap_or(d.seed),
    }
}
