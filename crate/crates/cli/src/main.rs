use clap::Parser;
use log::LevelFilter;
use pnl_cli::{run, Cli};

fn init_logging() {
    let mut builder = env_logger::Builder::new();
    builder.filter_level(LevelFilter::Warn);
    match std::env::var("PNL_LOG").ok().as_deref() {
        Some("quiet") => {
            builder.filter_level(LevelFilter::Off);
        }
        Some("info") => {
            builder.filter_level(LevelFilter::Info);
        }
        Some("debug") => {
            builder.filter_level(LevelFilter::Debug);
        }
        Some(other) => {
            builder.parse_filters(other);
        }
        None => {}
    }
    builder.init();
}

fn main() {
    init_logging();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(line) => println!("{line}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
