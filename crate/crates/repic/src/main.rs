use clap::Parser;

fn main() {
    let cli = repic::Cli::parse();
    if let Err(e) = repic::run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
