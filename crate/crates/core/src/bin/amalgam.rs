use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use amalgam::cli::{parse_config, run_suite, SuiteName};
use amalgam::numerics::Tolerance;

/// Directory that receives a copy of every report when set.
const REPORT_DIR_VAR: &str = "AMALGAM_REPORT_DIR";

#[derive(Parser)]
#[command(name = "amalgam", version, about = "Verify amalgamated free product constructions on truncated Fock modules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verification suites of a JSON configuration.
    Verify {
        config: PathBuf,
        /// Override the truncation level.
        #[arg(long)]
        truncation: Option<usize>,
        /// Override the absolute tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        report: Format,
        /// Run only these suites (repeatable).
        #[arg(long = "suite", value_parser = parse_suite)]
        suites: Vec<SuiteName>,
        /// Include wall-clock timings in the output.
        #[arg(long)]
        timings: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn parse_suite(s: &str) -> Result<SuiteName, String> {
    SuiteName::parse(s).ok_or_else(|| {
        let names: Vec<_> = SuiteName::ALL.iter().map(|n| n.as_str()).collect();
        format!("unknown suite `{s}` (expected one of {})", names.join(", "))
    })
}

fn main() -> ExitCode {
    let Command::Verify { config, truncation, tol, report, suites, timings } = Cli::parse().command;
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    if truncation.is_some() {
        cfg.truncation = truncation;
    }
    if let Some(eps) = tol {
        if let Err(e) = Tolerance::new(eps, cfg.tolerance().map(|t| t.rel_eps).unwrap_or(eps)) {
            eprintln!("error: --tol: {e}");
            return ExitCode::from(2);
        }
        cfg.tolerance.get_or_insert_with(Default::default).abs_eps = Some(eps);
    }
    if !suites.is_empty() {
        cfg.suites = Some(suites);
    }
    if let Err(e) = cfg.tolerance() {
        eprintln!("error: {}: {e}", config.display());
        return ExitCode::from(2);
    }

    let result = run_suite(&cfg);
    let rendered = match report {
        Format::Text => {
            let mut s = result.to_text();
            if timings {
                for (suite, secs) in &result.timings {
                    s.push_str(&format!("time {suite} {secs:.3}s\n"));
                }
            }
            s
        }
        Format::Json => result.to_json(timings),
    };
    print!("{rendered}");
    if let Ok(dir) = std::env::var(REPORT_DIR_VAR) {
        if let Err(e) = save(Path::new(&dir), &config, report, &rendered) {
            eprintln!("error: cannot write report to {dir}: {e}");
            return ExitCode::from(2);
        }
    }
    ExitCode::from(result.exit_code() as u8)
}

fn save(dir: &Path, config: &Path, format: Format, rendered: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let ext = if format == Format::Json { "json" } else { "txt" };
    std::fs::write(dir.join(format!("{stem}.report.{ext}")), rendered)
}
