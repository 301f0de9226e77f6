use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = frem_cli::Cli::parse();
    if let Err(err) = frem_cli::run(cli) {
        eprintln!("frem: {err}");
        std::process::exit(err.exit_code());
    }
}
