use clap::Parser;
use xlir::cli::{self, Cli};

fn main() {
    if let Err(e) = cli::run(Cli::parse()) {
        eprintln!("xlir: {e}");
        std::process::exit(e.exit_code());
    }
}
