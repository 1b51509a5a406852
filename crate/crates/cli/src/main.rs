use clap::Parser;

fn main() {
    let cli = l1pareto_cli::Cli::parse();
    std::process::exit(l1pareto_cli::run(cli));
}
