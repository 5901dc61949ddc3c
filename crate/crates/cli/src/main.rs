use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use mpi_stereo::commands::{run, Cli};
use mpi_stereo::{init_thread_pool, tune_allocator};

fn main() -> ExitCode {
    let cli = Cli::parse();
    tune_allocator();
    match init_thread_pool().and_then(|_| run(cli)) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr().lock(), "{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
