//! Command-line surface: flag/file config merging and the four subcommands
//! (`run`, `sweep`, `bench`, `dkg-demo`).
//!
//! Flags override config-file values, which override built-in defaults. A
//! validation failure always names the offending field.

use crate::dkg;
use crate::field_math::GroupParams;
use crate::sim::scenario::Scenario;
use crate::sim::{self, metrics, Mode, SimConfig, SimError, DEFAULT_SWEEP_PERIODS};
use crate::threshold::reconstruct_master;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("invalid value for {field}: {message}")]
    Invalid { field: String, message: String },
}

/// Pipeline variant, as spelled on the command line and in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CliMode {
    Zk,
    Plain,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Mode {
        match m {
            CliMode::Zk => Mode::Zk,
            CliMode::Plain => Mode::Plain,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "zkdpps",
    version,
    about = "Privacy-preserving stream processing simulator: encrypted \
             pipeline vs plaintext baseline over a BFT ledger"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one scenario end to end and report each task's delivery
    Run(RunFlags),
    /// Sweep the task arrival period across both modes and compare delay
    Sweep(SweepFlags),
    /// Measure key-generation and reconstruction wall-clock means
    Bench(BenchFlags),
    /// Run one key ceremony and print the share-verification table
    DkgDemo(DkgDemoFlags),
}

#[derive(Args, Debug, Default)]
pub struct RunFlags {
    /// Scenario: 1 hazmat-coverage, 2 shelf-life, 3 price-analysis [default: 1]
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Pipeline variant [default: zk]
    #[arg(long, value_enum)]
    pub mode: Option<CliMode>,
    /// Validator / manager count [default: 5]
    #[arg(long)]
    pub validators: Option<usize>,
    /// Decryption quorum size [default: 3]
    #[arg(long)]
    pub threshold: Option<usize>,
    /// Ledger block period in milliseconds [default: 1000]
    #[arg(long)]
    pub block_period_ms: Option<u64>,
    /// Task arrival period in milliseconds [default: 1000]
    #[arg(long)]
    pub inter_task_ms: Option<u64>,
    /// Independent repetitions, reseeded per run index [default: 1]
    #[arg(long)]
    pub runs: Option<u32>,
    /// Workers that corrupt their result bytes [default: 0]
    #[arg(long)]
    pub byzantine_computers: Option<usize>,
    /// Master seed; same seed and config replay byte-identically [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the per-task CSV report here
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-run ledger dumps here
    #[arg(long)]
    pub dump_ledger: Option<PathBuf>,
    /// JSON config file mirroring these flags; explicit flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SweepFlags {
    /// Scenario to sweep [default: 1]
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Validator / manager count [default: 5]
    #[arg(long)]
    pub validators: Option<usize>,
    /// Decryption quorum size [default: 3]
    #[arg(long)]
    pub threshold: Option<usize>,
    /// Ledger block period in milliseconds [default: 1000]
    #[arg(long)]
    pub block_period_ms: Option<u64>,
    /// Task arrivals per (period, mode) point [default: 30]
    #[arg(long)]
    pub runs: Option<u32>,
    /// Master seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the combined per-task CSV here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct BenchFlags {
    /// Iterations per measurement [default: 100]
    #[arg(long)]
    pub iters: Option<u32>,
    /// RNG seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct DkgDemoFlags {
    /// Dealer / participant count [default: 5]
    #[arg(long)]
    pub validators: Option<usize>,
    /// Reconstruction threshold [default: 3]
    #[arg(long)]
    pub threshold: Option<usize>,
    /// RNG seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Config-file image of the `run` flags. Keys spell exactly like the flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<CliMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validators: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_period_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inter_task_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub byzantine_computers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_ledger: Option<PathBuf>,
}

/// Fully merged and validated configuration for `run`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: u8,
    pub mode: Mode,
    pub validators: usize,
    pub threshold: usize,
    pub block_period_ms: u64,
    pub inter_task_ms: u64,
    pub runs: u32,
    pub byzantine_computers: usize,
    pub seed: u64,
    /// Key-round lifetime; not a flag, fixed at five minutes.
    pub key_refresh_ms: u64,
    /// Replicas per task; follows the validator count.
    pub replication: usize,
    pub out: Option<PathBuf>,
    pub dump_ledger: Option<PathBuf>,
}

impl RunConfig {
    pub fn to_sim(&self) -> SimConfig {
        SimConfig {
            scenario: self.scenario,
            mode: self.mode,
            validators: self.validators,
            threshold: self.threshold,
            computers: self.replication,
            replication: self.replication,
            block_period_ms: self.block_period_ms,
            inter_task_ms: self.inter_task_ms,
            instances: 1,
            byzantine_computers: self.byzantine_computers,
            seed: self.seed,
            key_refresh_ms: self.key_refresh_ms,
            ..SimConfig::default()
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.runs == 0 {
            return Err(ConfigError::Invalid {
                field: "runs".into(),
                message: "at least one run required".into(),
            });
        }
        self.to_sim().validate().map_err(|e| match e {
            SimError::Config { field, message } => ConfigError::Invalid {
                field: field.into(),
                message,
            },
            other => ConfigError::Invalid {
                field: "config".into(),
                message: other.to_string(),
            },
        })
    }
}

/// Merges flags over file values over defaults, then validates.
pub fn parse_and_validate(
    flags: &RunFlags,
    file: Option<&FileConfig>,
) -> Result<RunConfig, ConfigError> {
    fn pick<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
        flag.or(file).unwrap_or(default)
    }
    let f = |get: fn(&FileConfig) -> Option<u64>| file.and_then(get);
    let validators = pick(
        flags.validators,
        file.and_then(|c| c.validators),
        5,
    );
    let cfg = RunConfig {
        scenario: pick(flags.scenario, file.and_then(|c| c.scenario), 1),
        mode: pick(flags.mode, file.and_then(|c| c.mode), CliMode::Zk).into(),
        validators,
        threshold: pick(flags.threshold, file.and_then(|c| c.threshold), 3),
        block_period_ms: pick(flags.block_period_ms, f(|c| c.block_period_ms), 1000),
        inter_task_ms: pick(flags.inter_task_ms, f(|c| c.inter_task_ms), 1000),
        runs: pick(flags.runs, file.and_then(|c| c.runs), 1),
        byzantine_computers: pick(
            flags.byzantine_computers,
            file.and_then(|c| c.byzantine_computers),
            0,
        ),
        seed: pick(flags.seed, f(|c| c.seed), 7),
        key_refresh_ms: 300_000,
        replication: validators,
        out: flags
            .out
            .clone()
            .or_else(|| file.and_then(|c| c.out.clone())),
        dump_ledger: flags
            .dump_ledger
            .clone()
            .or_else(|| file.and_then(|c| c.dump_ledger.clone())),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_file(path: Option<&Path>) -> Result<Option<FileConfig>, ConfigError> {
    let Some(path) = path else {
        return Ok(None);
    };
    let err = |message: String| ConfigError::File {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let parsed = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    Ok(Some(parsed))
}

/// Nonzero when anything leaked or any task was rejected: a fault-free run
/// must deliver everything, and a fault-injected run signals its rejections.
pub fn exit_code(reports: &[metrics::RunReport]) -> i32 {
    let tainted: u64 = reports.iter().map(|r| r.taint_violations).sum();
    let rejected = reports.iter().any(|r| r.any_rejected());
    if tainted > 0 || rejected {
        1
    } else {
        0
    }
}

pub fn dispatch(cli: Cli) -> Result<i32, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run(flags) => cmd_run(flags),
        Command::Sweep(flags) => cmd_sweep(flags),
        Command::Bench(flags) => cmd_bench(flags),
        Command::DkgDemo(flags) => cmd_dkg_demo(flags),
    }
}

pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_run(flags: RunFlags) -> Result<i32, Box<dyn std::error::Error>> {
    let file = load_file(flags.config.as_deref())?;
    let cfg = parse_and_validate(&flags, file.as_ref())?;
    let scenario = Scenario::by_id(cfg.scenario).expect("validated");
    let reports = sim::run_many(&cfg.to_sim(), cfg.runs)?;

    println!(
        "scenario {} ({}), mode {}, {} validator(s), threshold {}, {} run(s)",
        scenario.id,
        scenario.name,
        cfg.mode.name(),
        cfg.validators,
        cfg.threshold,
        cfg.runs
    );
    if scenario.display_scale > 0 {
        println!("values are fixed-point, scaled by 10^{}", scenario.display_scale);
    }
    for report in &reports {
        print!("{}", report.summary());
        if let Some(th) = scenario.alert_threshold {
            for record in &report.records {
                if record.delivered_value.is_some_and(|v| v >= th) {
                    println!(
                        "  alert: {} value {} >= threshold {th}",
                        record.label,
                        record.delivered_value.unwrap()
                    );
                }
            }
        }
    }

    if let Some(path) = &cfg.out {
        fs::write(path, metrics::to_csv(&reports))?;
        println!("csv written to {}", path.display());
    }
    if let Some(path) = &cfg.dump_ledger {
        let mut dump = String::new();
        for report in &reports {
            let _ = writeln!(dump, "# run {}", report.run);
            dump.push_str(&report.ledger_dump);
        }
        fs::write(path, dump)?;
        println!("ledger dumps written to {}", path.display());
    }
    Ok(exit_code(&reports))
}

fn cmd_sweep(flags: SweepFlags) -> Result<i32, Box<dyn std::error::Error>> {
    let base = SimConfig {
        scenario: flags.scenario.unwrap_or(1),
        validators: flags.validators.unwrap_or(5),
        threshold: flags.threshold.unwrap_or(3),
        block_period_ms: flags.block_period_ms.unwrap_or(1000),
        seed: flags.seed.unwrap_or(7),
        ..SimConfig::default()
    };
    base.validate().map_err(|e| match e {
        SimError::Config { field, message } => ConfigError::Invalid {
            field: field.into(),
            message,
        },
        other => ConfigError::Invalid {
            field: "config".into(),
            message: other.to_string(),
        },
    })?;
    let instances = flags.runs.unwrap_or(30).max(1);
    let report = sim::sweep(&base, &DEFAULT_SWEEP_PERIODS, instances)?;
    print!("{}", report.table());
    if let Some(path) = &flags.out {
        fs::write(path, metrics::to_csv(&report.reports))?;
        println!("csv written to {}", path.display());
    }
    Ok(exit_code(&report.reports))
}

fn cmd_bench(flags: BenchFlags) -> Result<i32, Box<dyn std::error::Error>> {
    let iters = flags.iters.unwrap_or(100).max(1);
    let mut rng = ChaCha20Rng::seed_from_u64(flags.seed.unwrap_or(7));
    let group = GroupParams::desk_default();

    let t0 = Instant::now();
    for _ in 0..iters {
        let out = dkg::run_ceremony(&group, 5, 3, &mut rng)?;
        std::hint::black_box(&out);
    }
    let keygen_ms = t0.elapsed().as_secs_f64() * 1000.0 / f64::from(iters);

    let ceremony = dkg::run_ceremony(&group, 5, 3, &mut rng)?;
    let quorum = &ceremony.shares[..3];
    let t1 = Instant::now();
    for _ in 0..iters {
        let secret =
            reconstruct_master(&group, &ceremony.group_commitments, 3, quorum)?;
        std::hint::black_box(&secret);
    }
    let reconstruct_ms = t1.elapsed().as_secs_f64() * 1000.0 / f64::from(iters);

    println!("keygen      mean {keygen_ms:8.3} ms over {iters} iters (5 dealers, threshold 3)");
    println!("reconstruct mean {reconstruct_ms:8.3} ms over {iters} iters (3 shares, commitment-checked)");
    Ok(0)
}

fn cmd_dkg_demo(flags: DkgDemoFlags) -> Result<i32, Box<dyn std::error::Error>> {
    let n = flags.validators.unwrap_or(5);
    let threshold = flags.threshold.unwrap_or(3);
    let mut rng = ChaCha20Rng::seed_from_u64(flags.seed.unwrap_or(7));
    let group = GroupParams::desk_default();
    let recipients: Vec<u32> = (1..=n as u32).collect();

    println!("key ceremony: {n} dealers, threshold {threshold}");
    println!(
        "group: {}-bit prime order, generator {}",
        group.order_q().bits(),
        group.generator_g()
    );

    let packages: Vec<dkg::DealerPackage> = recipients
        .iter()
        .map(|&d| dkg::deal(&group, d, threshold, &recipients, &mut rng))
        .collect();

    println!("share verification (rows: dealer, columns: recipient 1..={n}):");
    for pkg in &packages {
        let mut row = format!("  dealer {}:", pkg.dealer);
        for share in &pkg.shares {
            let ok = dkg::verify_dealt_share(&group, pkg, share);
            row.push_str(if ok { "  ok" } else { " BAD" });
        }
        println!("{row}");
    }

    let out = dkg::aggregate(&group, n, threshold, &packages)?;
    println!(
        "verified dealers: {:?}, excluded: {:?}",
        out.verified_dealers, out.excluded_dealers
    );
    let pk_hex = format!("{:x}", out.public_key);
    println!("group public key: 0x{pk_hex}");
    let all_ok = out
        .shares
        .iter()
        .all(|s| dkg::verify_key_share(&group, &out.group_commitments, s));
    println!(
        "aggregated shares: {}",
        if all_ok {
            "all pass the group commitment check"
        } else {
            "COMMITMENT CHECK FAILED"
        }
    );
    Ok(0)
}
