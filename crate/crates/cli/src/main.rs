//! `pfsmc`: run, sweep, bound and re-verify sliding-mode controlled
//! phase-field experiments described by a TOML config.

mod config;
mod fields;
mod run;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{parse_config, LoadedConfig};

#[derive(Parser)]
#[command(
    name = "pfsmc",
    version,
    about = "Sliding-mode control experiments for phase-field systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation, write its run directory and verdict.
    Simulate(Common),
    /// Run every cell of the `[sweep]` grid and write a summary.
    Sweep(Common),
    /// Print the bounds report (runs the pilot simulation).
    Bounds(Common),
    /// Recompute bounds and verdict from a persisted run.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    /// Output root (overrides `PFSMC_OUT` and `[output].dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the embedding-constant estimate.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<LoadedConfig> {
        let mut cfg = parse_config(&self.config)?;
        if let Some(s) = self.seed {
            cfg.config.seed = s;
        }
        Ok(cfg)
    }

    fn out_root(&self, cfg: &LoadedConfig) -> PathBuf {
        if let Some(o) = &self.out {
            return o.clone();
        }
        if let Some(o) = std::env::var_os("PFSMC_OUT").filter(|o| !o.is_empty()) {
            return PathBuf::from(o);
        }
        let dir = Path::new(&cfg.config.output.dir);
        if dir.is_absolute() {
            dir.to_path_buf()
        } else {
            cfg.base_dir.join(dir)
        }
    }
}

fn simulate(args: &Common) -> Result<u8> {
    let cfg = args.load()?;
    let out_root = args.out_root(&cfg);
    let prep = run::prepare(cfg)?;
    let o = run::execute(&prep, &out_root)?;
    println!("run {}", o.run_dir.display());
    println!("{}", o.verdict.to_json());
    Ok(run::exit_code(o.verdict.status))
}

fn sweep(args: &Common) -> Result<u8> {
    let cfg = args.load()?;
    let out_root = args.out_root(&cfg);
    let o = sweep::sweep(&cfg, args.jobs as usize, &out_root)?;
    print!("{}", sweep::summary_csv(&o.summary));
    match o.summary.fitted_exponent {
        Some(k) => println!("fitted exponent of T*_emp vs rho: {k:.4}"),
        None => println!("fitted exponent of T*_emp vs rho: unavailable"),
    }
    println!("summary {}", o.dir.display());
    let bad = o
        .summary
        .cells
        .iter()
        .any(|r| r.error.is_some() || r.status == Some("fail"));
    Ok(if bad { 2 } else { 0 })
}

fn bounds(args: &Common) -> Result<u8> {
    let cfg = args.load()?;
    let out_root = args.out_root(&cfg);
    let run_id = cfg.run_id()?;
    let prep = run::prepare(cfg)?;
    let (report, _) = prep.bounds()?;
    let dir = out_root.join(run_id);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.resolved.toml"), prep.cfg.config.run_toml())?;
    std::fs::write(dir.join("bounds.json"), report.to_json() + "\n")?;
    println!("{}", report.to_json());
    Ok(0)
}

fn verify(args: &Common) -> Result<u8> {
    let cfg = args.load()?;
    let out_root = args.out_root(&cfg);
    let prep = run::prepare(cfg)?;
    let r = run::reverify(&prep, &out_root)?;
    println!("{}", r.verdict.to_json());
    let yes = |b: bool| if b { "yes" } else { "no" };
    println!("matches persisted verdict: {}", yes(r.matches_verdict));
    println!("matches persisted bounds: {}", yes(r.matches_bounds));
    if !(r.matches_verdict && r.matches_bounds) {
        eprintln!(
            "error: recomputed results differ from {}",
            r.run_dir.display()
        );
        return Ok(1);
    }
    Ok(run::exit_code(r.verdict.status))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Bounds(a) => bounds(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
