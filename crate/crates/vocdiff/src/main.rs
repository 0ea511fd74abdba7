use clap::Parser;

use vocdiff::cli::{run, Cli};

// Exit codes: 0 ok, 2 config/usage error, 3 numerical abort.
fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error:{}: {e}", e.category());
        std::process::exit(e.exit_code());
    }
}
