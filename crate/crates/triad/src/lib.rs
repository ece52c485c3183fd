//! Staged command-line pipeline over `triad-core`.

pub mod config;
pub mod error;
pub mod stages;

pub use config::PipelineConfig;
pub use error::CliError;
pub use stages::{manifests, run_stage, run_stages, Manifest, Stage};

/// Runs `stage` (`all` or one stage name) for `cfg`.
pub fn run(cfg: &PipelineConfig, stage: &str) -> Result<Vec<Manifest>, CliError> {
    if stage == "all" {
        return run_stages(&Stage::pipeline(cfg), cfg);
    }
    let st = Stage::parse(stage).ok_or_else(|| {
        let names: Vec<&str> = Stage::ALL.iter().map(|s| s.as_str()).collect();
        CliError::config("--stage", format!("unknown stage `{stage}`; expected all or one of {}", names.join(", ")))
    })?;
    run_stages(&[st], cfg)
}
