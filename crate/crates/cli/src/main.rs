use clap::Parser;

fn main() {
    let cli = quadfuse_cli::Cli::parse();
    std::process::exit(quadfuse_cli::run(&cli));
}
