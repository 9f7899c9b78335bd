use std::path::PathBuf;

use clap::Args;
use star_core::datasets::{generate_synthetic, write_bitemporal, write_single_temporal, Split, SyntheticSceneSpec};

use crate::config::{create_dir, read_document};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output root; `train/` and `eval/` are created below it.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene spec (TOML or JSON); defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of single-temporal training tiles.
    #[arg(long, default_value_t = 500)]
    pub train: usize,
    /// Number of bitemporal evaluation pairs.
    #[arg(long, default_value_t = 100)]
    pub eval: usize,
    /// Tile side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
}

pub const SCENE_FILE: &str = "scene.json";

pub fn run(args: SynthArgs) -> CliResult<()> {
    let mut spec = match &args.config {
        Some(path) => read_document::<SyntheticSceneSpec>(path)?.0,
        None => SyntheticSceneSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(size) = args.size {
        spec.size = size;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = generate_synthetic(&spec, args.train, args.eval)?;
    create_dir(&args.out)?;
    if let Some(path) = &args.config {
        let text = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("toml");
        let dest = args.out.join(format!("config.{ext}"));
        std::fs::write(&dest, text).map_err(|e| CliError::io(&dest, e))?;
    }
    let scene = args.out.join(SCENE_FILE);
    std::fs::write(&scene, serde_json::to_string_pretty(&spec)?).map_err(|e| CliError::io(&scene, e))?;
    if !data.train.is_empty() {
        write_single_temporal(args.out.join("train"), &data.train, Split::Train)?;
    }
    if !data.eval.is_empty() {
        write_bitemporal(args.out.join("eval"), &data.eval, Split::Eval)?;
    }
    println!(
        "wrote {} training tiles and {} eval pairs ({}x{}) to {}",
        data.train.len(),
        data.eval.len(),
        spec.size,
        spec.size,
        args.out.display()
    );
    Ok(())
}
