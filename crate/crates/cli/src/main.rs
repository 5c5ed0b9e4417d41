use clap::Parser;

fn main() {
    let cli = diamond_cli::Cli::parse();
    std::process::exit(diamond_cli::run(&cli));
}
