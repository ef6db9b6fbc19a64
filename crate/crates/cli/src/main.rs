use clap::Parser;

fn main() {
    let cli = lob_cli::Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = lob_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(lob_cli::exit_code(&e));
    }
}
