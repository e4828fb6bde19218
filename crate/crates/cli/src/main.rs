use clap::Parser;
use mcpca_cli::{configure_threads, Cli};

fn main() {
    let result = configure_threads().and_then(|()| Cli::parse().command.run());
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
