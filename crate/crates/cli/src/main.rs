mod report;
mod run;
mod scenario;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use gradobs::observability::{build_named_scenario, SCENARIOS};

#[derive(Parser)]
#[command(name = "gradobs", version, about = "Run observability scenarios and write reports")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and write report.json plus CSV tables.
    Run {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Seed for randomized choices such as kernel source points.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List built-in constructions with their parameters.
    ListBuiltins,
    /// Parse and validate a scenario file without running it.
    Check { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::ListBuiltins => {
            for name in SCENARIOS {
                let sc = build_named_scenario(name, &BTreeMap::new()).expect("defaults are valid");
                let params: Vec<String> = sc.params.iter().map(|(k, v)| format!("{}={}", k, v)).collect();
                let pred: Vec<String> = sc.predicted.iter().map(|(k, v)| format!("{}={:.6}", k, v)).collect();
                println!("{} ({})", name, sc.surface.case);
                println!("  params: {}", params.join(" "));
                println!("  predicted: {}", pred.join(" "));
            }
            ExitCode::SUCCESS
        }
        Cmd::Check { file } => match scenario::load(&file) {
            Ok(r) => {
                println!("ok: {} ({} cells, {} horizons)", r.name, r.cells.len(), r.ts.len());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {}", file.display(), e);
                ExitCode::from(2)
            }
        },
        Cmd::Run { file, out, threads, seed } => {
            let res = match scenario::load(&file) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{}: {}", file.display(), e);
                    return ExitCode::from(2);
                }
            };
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("cannot start worker threads: {}", e);
                    return ExitCode::from(2);
                }
            };
            let writer = match report::Out::new(&out) {
                Ok(w) => w,
                Err(e) => {
                    eprintln!("{}: {}", out.display(), e);
                    return ExitCode::from(2);
                }
            };
            let rep = match pool.install(|| run::run(&res, &writer, seed)) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("writing outputs: {}", e);
                    return ExitCode::from(2);
                }
            };
            let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            if let Err(e) = writer.write("report.json", &rep.to_json(ts)) {
                eprintln!("writing report.json: {}", e);
                return ExitCode::from(2);
            }
            for c in rep.checks() {
                println!(
                    "{} {} (measured {}, expected {}, tolerance {})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.expected,
                    c.tolerance
                );
            }
            if rep.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
