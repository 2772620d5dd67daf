use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pam_lab::error::ModuleError;
use pam_lab::ConfigError;

const EXIT_USAGE: u8 = 64;
const EXIT_SOFTWARE: u8 = 70;

#[derive(Parser)]
#[command(
    name = "pam-lab",
    version,
    about = "Numerical lab for the parabolic Anderson model on compact manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's `output`, else results/<id>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; results do not depend on this.
        #[arg(long, env = "PAM_LAB_THREADS")]
        threads: Option<usize>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a traceability matrix for every results.json under DIR.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
        } => run(config, out, threads, seed),
        Command::Report { dir } => match pam_lab::report::write_report(&dir) {
            Ok(rows) => {
                let (p, f, i) = pam_lab::report::counts(&rows);
                println!("{} rows: {p} pass, {f} fail, {i} inconclusive", rows.len());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: [report] {e:#}");
                ExitCode::from(EXIT_SOFTWARE)
            }
        },
    }
}

fn run(
    config: PathBuf,
    out: Option<PathBuf>,
    threads: Option<usize>,
    seed: Option<u64>,
) -> ExitCode {
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: [cli] thread pool: {e}");
            return ExitCode::from(EXIT_SOFTWARE);
        }
    }
    let cfg = match pam_lab::load_config(&config, seed) {
        Ok(c) => c,
        Err(e) => return config_failure(&config, &e),
    };
    let dir = pam_lab::output_dir(&cfg, out);
    match pam_lab::execute(&cfg, &dir) {
        Ok(rec) => {
            for v in &rec.verdicts {
                println!("{:<12} {:<24} {}", v.verdict.as_str(), v.criterion, v.claim);
            }
            let (p, f, i) = rec.counts();
            println!(
                "{}: {p} pass, {f} fail, {i} inconclusive -> {}",
                cfg.id,
                dir.display()
            );
            ExitCode::from(rec.exit_code())
        }
        Err(e) => {
            match e.downcast_ref::<ModuleError>() {
                Some(m) => eprintln!("error: {m}"),
                None => eprintln!("error: [cli] {e:#}"),
            }
            ExitCode::from(EXIT_SOFTWARE)
        }
    }
}

fn config_failure(path: &std::path::Path, e: &ConfigError) -> ExitCode {
    eprintln!("error: {}: {e}", path.display());
    ExitCode::from(EXIT_USAGE)
}
