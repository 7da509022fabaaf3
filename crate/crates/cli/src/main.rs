mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use commands::{Command, Options};

#[derive(Parser)]
#[command(name = "arbor", version, about = "Spectra of Schrödinger operators on regular metric trees")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML configuration file.
    #[arg(long, global = true, default_value = "arbor.toml")]
    config: PathBuf,
    /// Directory for the report files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Cross-check against the direct discretisation of the whole tree.
    #[arg(long, global = true)]
    compare_direct: bool,
    /// Also write an SVG plot.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Dimension estimate, channel multiplicities and envelope constants.
    TreeInfo,
    /// Negative spectrum from the channel decomposition.
    Spectrum,
    /// Weak-coupling sweep with sandwich bounds and power-law fit.
    WeakSweep,
    /// Birman–Schwinger secular equation for `B₀ + λW`.
    BsSolve,
    /// Count bounds and channel thresholds.
    Bounds,
    /// Exponential law at d = 2.
    D2Sweep,
    /// Emptiness at small coupling for d > 2.
    Supercritical,
    /// Strong-coupling count against the Weyl term.
    Weyl,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::TreeInfo => Command::TreeInfo,
            Cmd::Spectrum => Command::Spectrum,
            Cmd::WeakSweep => Command::WeakSweep,
            Cmd::BsSolve => Command::BsSolve,
            Cmd::Bounds => Command::Bounds,
            Cmd::D2Sweep => Command::D2Sweep,
            Cmd::Supercritical => Command::Supercritical,
            Cmd::Weyl => Command::Weyl,
        }
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn error_value(err: &anyhow::Error) -> Value {
    let kind = err.chain().find_map(|e| e.downcast_ref::<arbor_core::Error>()).map(|e| e.kind()).unwrap_or("config");
    json!({"kind": kind, "message": format!("{err:#}")})
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd: Command = cli.command.into();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: creating {}: {e}", cli.out.display());
        return ExitCode::from(1);
    }
    let opts = Options { compare_direct: cli.compare_direct, svg: cli.svg };
    let stem = cmd.name();
    let cfg = match config::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            let doc = json!({"schema_version": 1, "command": stem, "error": error_value(&e)});
            let _ = write(&cli.out, &format!("{stem}.json"), &format!("{doc:#}\n"));
            return ExitCode::from(1);
        }
    };
    let resolved = json!({
        "tree": cfg.tree,
        "potential": cfg.potential,
        "numerics": cfg.numerics(),
        "sweep": cfg.sweep,
        "spectrum": cfg.spectrum,
        "bounds": cfg.bounds,
        "bs": cfg.bs,
        "weyl": cfg.weyl,
    });
    let (doc, code) = match commands::run(cmd, &cfg, &opts) {
        Ok(rep) => {
            let files = [("csv", rep.csv.as_deref()), ("svg", rep.svg.as_deref())];
            for (ext, body) in files {
                if let Some(body) = body {
                    if let Err(e) = write(&cli.out, &format!("{stem}.{ext}"), body) {
                        eprintln!("error: {e:#}");
                        return ExitCode::from(1);
                    }
                }
            }
            println!("{stem}: {}", rep.verdict);
            let doc = json!({
                "schema_version": 1,
                "command": stem,
                "config": resolved,
                "pass": rep.pass,
                "verdict": rep.verdict,
                "result": rep.result,
            });
            (doc, if rep.pass { 0 } else { 2 })
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            (json!({"schema_version": 1, "command": stem, "config": resolved, "error": error_value(&e)}), 1)
        }
    };
    if let Err(e) = write(&cli.out, &format!("{stem}.json"), &format!("{doc:#}\n")) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
