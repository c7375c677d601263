use clap::Parser;
use fpt_cli::{init_threads, run, Cli, EXIT_CONFIG};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    if let Err(e) = init_threads().and_then(|_| run(cli)) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
