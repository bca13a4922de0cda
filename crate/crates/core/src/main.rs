use clap::Parser;
use dualloop::cli::{execute, Cli};

fn main() {
    std::process::exit(execute(Cli::parse()));
}
