mod cli;
mod commands;
mod config;
mod error;
mod output;
mod pool;

use clap::Parser;

use cli::{Cli, Command};
use config::ConfigFile;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    pool::set_threads(cli.threads);
    let result = ConfigFile::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::RrgValidate(args) => commands::rrg_validate(args, &file),
        Command::DiffusionApprox(args) => commands::diffusion_approx(args, &file),
        Command::EmitFeatures(args) => commands::emit_features(args, &file),
        Command::AblationSweep(args) => commands::ablation_sweep(args, &file),
        Command::GenerateCorpus(args) => commands::generate_corpus(args, &file),
    });
    if let Err(e) = result {
        log::error!("{e}");
        std::process::exit(1);
    }
}
