use clap::Parser;
use fracwave_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let result = run(&cli);
    if let Some(e) = &result.error {
        eprintln!("error: {e}");
    }
    std::process::exit(result.exit_code);
}
