use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use star_core::model::{Architecture, ChangeStar};
use star_nn::Parameters;

use crate::config::{LoadedConfig, Overrides};
use crate::error::CliResult;

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// Run config; the default architecture when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ModelInfo {
    architecture: Architecture,
    backbone_params: usize,
    mixin_params: usize,
    total_params: usize,
}

pub fn run(args: InfoArgs) -> CliResult<()> {
    let (arch, seed) = match &args.config {
        Some(path) => {
            let cfg = LoadedConfig::load(path)?.resolve(&Overrides::default())?;
            (cfg.run.model, cfg.run.train.seed)
        }
        None => (Architecture::default(), 0),
    };
    let mut model = ChangeStar::<f32>::new(arch.clone(), seed)?;
    let backbone_params = model.backbone_mut().num_params();
    let mixin_params = model.mixin_mut().num_params();
    let info = ModelInfo {
        architecture: arch,
        backbone_params,
        mixin_params,
        total_params: model.num_params(),
    };
    println!("{}", serde_json::to_string_pretty(&info)?);
    Ok(())
}
