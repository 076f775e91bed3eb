use clap::Parser;

fn main() {
    std::process::exit(logdet_lab_cli::run(logdet_lab_cli::Cli::parse()));
}
