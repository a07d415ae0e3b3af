use clap::Parser;

use probrel::cli::{run, Cli, Exit};

fn main() {
    let cli = Cli::parse();
    let code = std::panic::catch_unwind(|| run(&cli)).unwrap_or(Exit::Internal as i32);
    std::process::exit(code);
}
