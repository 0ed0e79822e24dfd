//! `fsl`: key generation, round simulation, parameter recommendation and rate analysis.
//!
//! Exit codes: 0 ok, 1 check failure, 2 usage or input error, 3 cuckoo insertion failure.

mod check;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fsl_core::analytics::{rate_basic, rate_csv, rate_text, rate_udpf, CostModel, RateReport};
use fsl_core::batch_code::recommend_params;
use fsl_core::dpf::{dpf_gen, DpfParams};
use fsl_core::harness::{bench_sweep, run_psr, run_round, Scenario};
use fsl_core::{DpfKey, GroupParams, GroupVector, Party};
use rand::rngs::OsRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "FSL_OUT_DIR";

#[derive(Parser)]
#[command(name = "fsl", version, about = "Two-server secure submodel learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, evaluate and self-test DPF keys.
    Dpf {
        #[command(subcommand)]
        action: DpfAction,
    },
    /// Run a scenario file and write its transcript.
    Run(RunArgs),
    /// Communication cost and rate analysis.
    Rate(RateArgs),
    /// Recommend table parameters for a selection size.
    Params(ParamsArgs),
    /// Timing and communication sweep over a grid of sizes, as CSV.
    Bench(BenchArgs),
}

#[derive(Args, Clone, Copy)]
struct GroupArgs {
    /// Base group width in bits (32, 64 or 128).
    #[arg(long, default_value_t = 128)]
    l: u32,
    /// Mega-element width.
    #[arg(long, default_value_t = 1)]
    tau: usize,
}

#[derive(Subcommand)]
enum DpfAction {
    /// Write a key pair to `key0.dpf` and `key1.dpf`.
    Gen {
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        alpha: u64,
        /// Big-endian value, left-padded to `tau * l` bits.
        #[arg(long)]
        beta_hex: String,
        #[command(flatten)]
        group: GroupArgs,
        /// Deterministic seed; OS entropy when absent.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a key file at one point, or over the whole domain with `--full`.
    Eval {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        party: u8,
        #[arg(long, required_unless_present = "full")]
        x: Option<u64>,
        #[arg(long)]
        full: bool,
    },
    /// Exhaustive correctness check over small domains.
    Selftest {
        #[arg(long, default_value_t = 8)]
        depth: u32,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (`key = value` lines).
    scenario: PathBuf,
    /// Run private retrieval instead of aggregation.
    #[arg(long)]
    psr: bool,
    /// Output directory; defaults to $FSL_OUT_DIR, then the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct RateArgs {
    /// Index-space size.
    #[arg(long, default_value_t = 1 << 20)]
    m: u64,
    /// Compression rate k/m.
    #[arg(long, default_value_t = 0.1)]
    c: f64,
    #[arg(long, default_value_t = 128)]
    l: u32,
    #[arg(long, default_value_t = 1)]
    tau: usize,
    #[arg(long, default_value_t = 1.25)]
    epsilon: f64,
    /// Per-bin key depth, ceil(log2 theta).
    #[arg(long, default_value_t = 9)]
    depth: u32,
    /// Round of the updatable variant to report as well.
    #[arg(long)]
    udpf_round: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Verify the published constants and table cells; exit 1 on drift.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    m: u64,
    #[arg(long)]
    k: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// log2 of the model sizes to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [10u32, 12])]
    log_m: Vec<u32>,
    /// Compression rates to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01f64, 0.1])]
    c: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Outcome of a failed command, mapped onto the exit-code contract.
#[derive(Debug)]
enum Failure {
    Check(String),
    Usage(anyhow::Error),
    Cuckoo(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Cuckoo(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<fsl_core::Error> for Failure {
    fn from(e: fsl_core::Error) -> Self {
        match e {
            fsl_core::Error::InsertionFailure { .. } => Failure::Cuckoo(e.to_string()),
            fsl_core::Error::Parameter(_) | fsl_core::Error::Format(_) | fsl_core::Error::Domain { .. } => {
                Failure::Usage(e.into())
            }
            other => Failure::Check(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn parse_beta(hex_str: &str, group: GroupParams) -> anyhow::Result<GroupVector> {
    let raw = hex::decode(hex_str.trim_start_matches("0x")).context("beta is not valid hex")?;
    let width = group.vector_bytes();
    anyhow::ensure!(raw.len() <= width, "beta has {} bytes, group holds {width}", raw.len());
    let mut bytes = vec![0u8; width - raw.len()];
    bytes.extend_from_slice(&raw);
    Ok(GroupVector::from_bytes(group, &bytes)?)
}

fn cmd_dpf(action: DpfAction) -> CmdResult {
    match action {
        DpfAction::Gen { depth, alpha, beta_hex, group, seed, out } => {
            let g = GroupParams::new(group.l, group.tau)?;
            let params = DpfParams::new(depth, g)?;
            let beta = parse_beta(&beta_hex, g)?;
            let (k0, k1) = match seed {
                Some(s) => dpf_gen(params, alpha, &beta, &mut ChaCha20Rng::seed_from_u64(s))?,
                None => dpf_gen(params, alpha, &beta, &mut OsRng)?,
            };
            let dir = out_dir(out);
            for (name, key) in [("key0.dpf", &k0), ("key1.dpf", &k1)] {
                let path = dir.join(name);
                write_file(&path, &key.to_bytes())?;
                println!("{}: {} bytes ({} key bits)", path.display(), key.to_bytes().len(), params.key_bits());
            }
            Ok(())
        }
        DpfAction::Eval { key, party, x, full } => {
            let bytes = fs::read(&key).with_context(|| format!("reading {}", key.display()))?;
            let party = Party::from_index(party as usize)?;
            let k = DpfKey::from_bytes(&bytes, party)?;
            if full {
                for (i, v) in k.eval_full()?.iter().enumerate() {
                    println!("{i} {}", hex::encode(v.to_bytes()));
                }
            } else {
                let x = x.expect("clap requires x without --full");
                println!("{}", hex::encode(k.eval(x)?.to_bytes()));
            }
            Ok(())
        }
        DpfAction::Selftest { depth, trials, seed } => {
            if depth == 0 || depth > 16 {
                return Err(Failure::Usage(anyhow::anyhow!("selftest depth must be in 1..=16")));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut points = 0u64;
            for d in 1..=depth {
                for _ in 0..trials {
                    let g = GroupParams::new([32, 64, 128][rng.gen_range(0..3)], rng.gen_range(1..=3))?;
                    let params = DpfParams::new(d, g)?;
                    let alpha = rng.gen_range(0..params.domain_size());
                    let beta = GroupVector::from_elems(g, (0..g.tau()).map(|_| rng.gen::<u128>() & g.mask()).collect())?;
                    let (k0, k1) = dpf_gen(params, alpha, &beta, &mut rng)?;
                    let (f0, f1) = (k0.eval_full()?, k1.eval_full()?);
                    for x in 0..params.domain_size() {
                        let sum = f0[x as usize].add(&f1[x as usize])?;
                        let ok = if x == alpha { sum == beta } else { sum.is_zero() };
                        if !ok || k0.eval(x)? != f0[x as usize] {
                            return Err(Failure::Check(format!("mismatch at depth {d}, alpha {alpha}, x {x}")));
                        }
                        points += 1;
                    }
                }
            }
            println!("selftest ok: depths 1..={depth}, {trials} keys each, {points} points");
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> CmdResult {
    let text = fs::read_to_string(&args.scenario).with_context(|| format!("reading {}", args.scenario.display()))?;
    let scenario = Scenario::parse(&text)?;
    let transcript = if args.psr { run_psr(&scenario)? } else { run_round(&scenario)? };
    let dir = out_dir(args.out);
    let stem = args.scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let kind = if args.psr { "psr" } else { "ssa" };
    let messages = dir.join(format!("{stem}.{kind}.messages.csv"));
    let summary = dir.join(format!("{stem}.{kind}.summary.txt"));
    write_file(&messages, transcript.messages_csv().as_bytes())?;
    let mut text = transcript.summary_text();
    text.push_str(&format!("oracle_match = {}\n", transcript.all_match()));
    write_file(&summary, text.as_bytes())?;
    print!("{text}");
    println!("wrote {} and {}", messages.display(), summary.display());
    if transcript.all_match() {
        Ok(())
    } else {
        Err(Failure::Check("result differs from the plaintext oracle".into()))
    }
}

fn cmd_rate(args: RateArgs) -> CmdResult {
    if args.check {
        let report = check::run();
        print!("{}", report.text);
        return if report.ok { Ok(()) } else { Err(Failure::Check("constants drifted".into())) };
    }
    let model = CostModel {
        l: args.l,
        tau: args.tau,
        epsilon: args.epsilon,
        depth: args.depth,
        k: args.c * args.m as f64,
        ..CostModel::reference(args.m, args.c)
    };
    let mut rows: Vec<(&str, RateReport)> = vec![("basic", rate_basic(&model)?)];
    if let Some(round) = args.udpf_round {
        let r = rate_udpf(&model, round)?;
        rows.push(("udpf nominal", r.nominal));
        rows.push(("udpf implemented", r.implemented));
    }
    match args.format {
        Format::Csv => {
            let table: Vec<_> = rows.iter().map(|(_, r)| (model, *r)).collect();
            print!("{}", rate_csv(&table));
        }
        Format::Text => {
            for (name, r) in &rows {
                println!("[{name}]");
                print!("{}", rate_text(&model, r));
            }
            if let Some(note) = check::depth_note(args.depth, args.tau, rows[0].1.threshold_c) {
                println!("note: {note}");
            }
        }
    }
    Ok(())
}

fn cmd_params(args: ParamsArgs) -> CmdResult {
    let rec = recommend_params(args.m, args.k)?;
    let c = args.k as f64 / args.m as f64;
    println!("m = {}\nk = {}\nc = {:.4}%", args.m, args.k, c * 100.0);
    println!("epsilon = {}\ntheta_estimate = {:.1}\ndepth = {}", rec.epsilon, rec.theta_estimate, rec.depth);
    let model = CostModel { epsilon: rec.epsilon, depth: rec.depth, ..CostModel::reference(args.m, c) };
    let r = rate_basic(&model)?;
    if c > r.threshold_c {
        println!(
            "warning: c = {:.1}% exceeds the break-even rate {:.1}%; sharing the full update is cheaper",
            c * 100.0,
            r.threshold_c * 100.0
        );
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let mut grid = Vec::new();
    for &lg in &args.log_m {
        if lg > 24 {
            return Err(Failure::Usage(anyhow::anyhow!("log_m {lg} too large for the in-process harness")));
        }
        for &c in &args.c {
            let m = 1u64 << lg;
            let mut s = Scenario::new(m, ((m as f64 * c).round() as usize).max(1), args.n);
            s.rng_seed = args.seed;
            grid.push(s);
        }
    }
    let csv = bench_sweep(&grid)?;
    match args.out {
        Some(path) => write_file(&path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dpf { action } => cmd_dpf(action),
        Command::Run(a) => cmd_run(a),
        Command::Rate(a) => cmd_rate(a),
        Command::Params(a) => cmd_params(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Check(msg) => eprintln!("check failed: {msg}"),
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Cuckoo(msg) => eprintln!("cuckoo insertion failed: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
