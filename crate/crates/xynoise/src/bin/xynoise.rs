use clap::Parser;

fn main() {
    let cli = xynoise::cli::Cli::parse();
    std::process::exit(xynoise::cli::run(cli));
}
