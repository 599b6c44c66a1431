use clap::Parser;
use knocksim::cli::{run, Cli};

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("knocksim: {e:#}");
        std::process::exit(1);
    }
}
