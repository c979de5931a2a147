//! `run`, `bench` and `serve` subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use shared_dof_core::{compare, run_headless, ControllerConfig, Metrics, UserKind, UserPolicy, Variant, DEFAULT_TICKS_MAX};

use crate::{log_dir_from_env, output_path, resolve_scenario};

#[derive(Debug, Parser)]
#[command(name = "shared-dof", version, about = "Shared-control simulator: classic mode switching vs adaptive DoF mapping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one headless session with a simulated user.
    Run(RunArgs),
    /// Run a variants × scenarios × seeds matrix and compare against classic.
    Bench(BenchArgs),
    /// Serve sessions over WebSocket at /session.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario JSON file (bare `canonical.json` / `deadlock.json` use the built-ins).
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = "admc_continuous")]
    pub mode: Variant,
    #[arg(long, default_value = "greedy")]
    pub user: UserKind,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_TICKS_MAX)]
    pub ticks_max: u64,
    /// JSON-Lines log path; metrics go to `<stem>.metrics.csv` beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario file; repeat for several.
    #[arg(long, required = true)]
    pub scenario: Vec<PathBuf>,
    /// Variant; repeat for several. Defaults to all five.
    #[arg(long)]
    pub mode: Vec<Variant>,
    #[arg(long, default_value = "greedy")]
    pub user: UserKind,
    /// Seeds as `a-b` or a comma list.
    #[arg(long, default_value = "1-10")]
    pub seeds: SeedList,
    #[arg(long, default_value_t = DEFAULT_TICKS_MAX)]
    pub ticks_max: u64,
    /// Output directory for per-cell logs and report.csv.
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 20.0)]
    pub tick_rate: f64,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl std::str::FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_seeds(s).map(SeedList)
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = |_| format!("invalid seed list {s:?}; use a-b or a,b,c");
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if a > b {
            return Err(format!("empty seed range {s:?}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

/// Exit status of a command, separate from hard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Timeout,
    Failed,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Timeout => 2,
            Outcome::Failed => 1,
        }
    }
}

pub const METRICS_CSV_HEADER: &str = "scenario,variant,user,seed,completion_time_s,user_switches,auto_switches,path_length_m,angular_path_rad,idle_time_s,perspective_changes,success,ticks";

pub fn metrics_csv_row(scenario: &str, variant: Variant, user: UserKind, seed: u64, m: &Metrics) -> String {
    format!(
        "{scenario},{variant},{user},{seed},{},{},{},{},{},{},{},{},{}",
        m.completion_time_s.map(|t| t.to_string()).unwrap_or_default(),
        m.user_switches,
        m.auto_switches,
        m.path_length_m,
        m.angular_path_rad,
        m.idle_time_s,
        m.perspective_changes,
        m.success,
        m.ticks
    )
}

fn metrics_path(log: &Path) -> PathBuf {
    let stem = log.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    log.with_file_name(format!("{stem}.metrics.csv"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_log(path: &Path, log: &shared_dof_core::SessionLog) -> Result<()> {
    ensure_parent(path)?;
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    log.write_jsonl(BufWriter::new(file))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn run(args: &RunArgs) -> Result<Outcome> {
    let scenario = resolve_scenario(&args.scenario)?;
    let config = ControllerConfig::with_variant(args.mode);
    let out = run_headless(&scenario, &config, UserPolicy::new(args.user), args.seed, args.ticks_max)?;

    let default_name = PathBuf::from(format!("{}-{}-{}-seed{}.jsonl", scenario.name, args.mode, args.user, args.seed));
    let log_path = output_path(args.out.as_ref().unwrap_or(&default_name), log_dir_from_env().as_deref());
    write_log(&log_path, &out.log)?;
    let csv = format!(
        "{METRICS_CSV_HEADER}\n{}\n",
        metrics_csv_row(&scenario.name, args.mode, args.user, args.seed, &out.metrics)
    );
    let csv_path = metrics_path(&log_path);
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;

    let m = &out.metrics;
    match m.completion_time_s {
        Some(t) => println!(
            "{} {}: done in {t:.2} s, {} user / {} auto switches, path {:.3} m -> {}",
            scenario.name,
            args.mode,
            m.user_switches,
            m.auto_switches,
            m.path_length_m,
            log_path.display()
        ),
        None => println!(
            "{} {}: not done after {} ticks -> {}",
            scenario.name,
            args.mode,
            m.ticks,
            log_path.display()
        ),
    }
    Ok(if out.success() {
        Outcome::Success
    } else {
        Outcome::Timeout
    })
}

pub fn bench(args: &BenchArgs) -> Result<Outcome> {
    let variants: Vec<Variant> = if args.mode.is_empty() {
        Variant::ALL.to_vec()
    } else {
        let mut v = args.mode.clone();
        v.sort();
        v.dedup();
        v
    };
    let scenarios = args
        .scenario
        .iter()
        .map(|p| resolve_scenario(p))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = log_dir_from_env().unwrap_or_else(|| args.out.clone());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut by_variant: BTreeMap<Variant, Vec<Metrics>> = BTreeMap::new();
    let mut failed_cells = 0;
    for scenario in &scenarios {
        for &variant in &variants {
            let config = ControllerConfig::with_variant(variant);
            for &seed in &args.seeds.0 {
                let cell = format!("{}_{}_seed{}", scenario.name, variant, seed);
                let result = run_headless(scenario, &config, UserPolicy::new(args.user), seed, args.ticks_max)
                    .map_err(anyhow::Error::from)
                    .and_then(|out| {
                        write_log(&dir.join(format!("{cell}.jsonl")), &out.log)?;
                        Ok(out)
                    });
                match result {
                    Ok(out) => by_variant.entry(variant).or_default().push(out.metrics),
                    Err(e) => {
                        failed_cells += 1;
                        eprintln!("cell {cell} failed: {e:#}");
                    }
                }
            }
        }
    }

    let report = compare(&by_variant).context("building comparison report")?;
    fs::write(dir.join("report.csv"), report.to_csv()).context("writing report.csv")?;
    print!("{}", report.to_text());
    println!("logs and report.csv in {}", dir.display());
    if failed_cells > 0 {
        bail!("{failed_cells} benchmark cell(s) failed");
    }
    Ok(Outcome::Success)
}
