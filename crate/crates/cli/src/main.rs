use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracheat_cli::cache::{CACHE_DIR_ENV, DEFAULT_CACHE_DIR};
use fracheat_cli::failure::Failure;
use fracheat_cli::manifest::CachePolicy;
use fracheat_cli::report;
use fracheat_cli::run::{run_path, Options};

#[derive(Parser)]
#[command(name = "fracheat", version, about = "Numerical experiments for the fractional heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment manifest.
    Run {
        manifest: PathBuf,
        /// Output directory; defaults to the manifest's `output` or runs/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cache policy; overrides the manifest.
        #[arg(long, value_enum)]
        cache: Option<CachePolicy>,
        /// Worker threads for the numerical kernels.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, env = CACHE_DIR_ENV, default_value = DEFAULT_CACHE_DIR)]
        cache_dir: PathBuf,
    },
    /// Merge the JSON reports below DIR into report.csv and report.json.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { manifest, out, cache, threads, cache_dir } => {
            if let Some(k) = threads {
                if k == 0 {
                    eprintln!("invalid manifest: --threads must be positive");
                    return ExitCode::from(Failure::EXIT_MANIFEST);
                }
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                    eprintln!("run failed: {e}");
                    return ExitCode::from(Failure::EXIT_RUNTIME);
                }
            }
            match run_path(&manifest, &Options { out, cache, cache_dir }) {
                Ok(summary) => {
                    for c in &summary.checks {
                        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.tag, c.detail);
                    }
                    println!("wrote {} files to {}", summary.files.len(), summary.out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Command::Report { dir } => match report::collect(&dir).and_then(|r| report::write(&dir, &r).map(|_| r)) {
            Ok(r) => {
                print!("{}", r.to_table());
                if r.all_pass() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(Failure::EXIT_CHECKS_FAILED)
                }
            }
            Err(e) => {
                eprintln!("report failed: {e:#}");
                ExitCode::from(Failure::EXIT_RUNTIME)
            }
        },
    }
}
