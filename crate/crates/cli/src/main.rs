use clap::Parser;

fn main() {
    let cli = csl_cli::Cli::parse();
    std::process::exit(csl_cli::run(&cli));
}
