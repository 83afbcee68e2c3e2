use clap::Parser;

fn main() {
    let cli = xlhwr::cli::Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = xlhwr::cli::run(cli) {
        eprintln!("xlhwr: {e}");
        std::process::exit(e.exit_code());
    }
}
