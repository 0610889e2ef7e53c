use clap::Parser;
use lscp_cli::{emit, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli).and_then(|out| emit(&out)) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
