use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use super::{run, CommandKind, RunConfig};
use crate::manifest::{Scenario, Split};
use crate::metrics::Metric;
use crate::ood::ReplacedLabel;

#[derive(Debug, Parser)]
#[command(
    name = "geoshift",
    version,
    about = "Augment, synthesize and evaluate hyperspectral segmentation data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Count images and subjects per scenario/split and check split integrity.
    Validate(RunArgs),
    /// Calibrate a raw cube against white/dark references and l1-normalize it.
    Preprocess(RunArgs),
    /// Write an isolation or removal dataset from the original images of a manifest.
    Synthesize(RunArgs),
    /// Apply an augmentation pipeline to the images of a manifest, batch by batch.
    Augment(RunArgs),
    /// Score predicted masks against the reference masks of a manifest.
    Evaluate(RunArgs),
    /// Hierarchically aggregate metric tables.
    Aggregate(RunArgs),
    /// Bootstrap-rank methods from their metric tables.
    Rank(RunArgs),
    /// Class neighbourhood matrix of the masks of a manifest.
    Neighbors(RunArgs),
}

impl Sub {
    fn split(self) -> (CommandKind, RunArgs) {
        match self {
            Sub::Validate(a) => (CommandKind::Validate, a),
            Sub::Preprocess(a) => (CommandKind::Preprocess, a),
            Sub::Synthesize(a) => (CommandKind::Synthesize, a),
            Sub::Augment(a) => (CommandKind::Augment, a),
            Sub::Evaluate(a) => (CommandKind::Evaluate, a),
            Sub::Aggregate(a) => (CommandKind::Aggregate, a),
            Sub::Rank(a) => (CommandKind::Rank, a),
            Sub::Neighbors(a) => (CommandKind::Neighbors, a),
        }
    }
}

fn parse_named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), path.into())),
        _ => Err(format!("expected NAME=TABLE, got '{s}'")),
    }
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Run config document (TOML, or JSON by extension); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (outputs do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory [env: GEOSHIFT_OUTPUT].
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Dataset manifest [env: GEOSHIFT_MANIFEST].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Label map document [env: GEOSHIFT_LABELMAP]; defaults to the built-in surgical classes.
    #[arg(long)]
    pub labelmap: Option<PathBuf>,
    #[arg(long, value_parser = parse_named::<Scenario>)]
    pub scenario: Option<Scenario>,
    #[arg(long, value_parser = parse_named::<Split>)]
    pub split: Option<Split>,
    /// DSC or NSD.
    #[arg(long, value_parser = |s: &str| s.parse::<Metric>().map_err(|e| e.to_string()))]
    pub metric: Option<Metric>,
    /// Bootstrap samples for ranking [default: 1000].
    #[arg(long)]
    pub bootstrap_samples: Option<usize>,
    /// Draw all subjects without replacement in every bootstrap sample.
    #[arg(long)]
    pub without_replacement: bool,
    /// Augmentation pipeline document [env: GEOSHIFT_PIPELINE].
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// Images per augmentation batch [default: 5].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Also write RGB renderings as PNG.
    #[arg(long)]
    pub preview: bool,
    /// Background cube for the *_bgr scenarios [env: GEOSHIFT_BACKGROUND].
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Mask label of replaced pixels: invalid or background.
    #[arg(long, value_parser = parse_named::<ReplacedLabel>)]
    pub replaced_label: Option<ReplacedLabel>,
    /// Also remove the background class in removal scenarios.
    #[arg(long)]
    pub remove_background: bool,
    /// Directory of predicted masks named <image_id>.mask.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Metric table to aggregate (repeatable).
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Method metric table as NAME=TABLE (repeatable).
    #[arg(long = "method", value_parser = parse_method)]
    pub methods: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub raw: Option<PathBuf>,
    #[arg(long)]
    pub white: Option<PathBuf>,
    #[arg(long)]
    pub dark: Option<PathBuf>,
}

impl RunArgs {
    pub fn to_config(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            workers: self.workers,
            output: self.output.clone(),
            manifest: self.manifest.clone(),
            labelmap: self.labelmap.clone(),
            scenario: self.scenario,
            split: self.split,
            metric: self.metric,
            bootstrap_samples: self.bootstrap_samples,
            with_replacement: self.without_replacement.then_some(false),
            pipeline: self.pipeline.clone(),
            batch_size: self.batch_size,
            preview: self.preview.then_some(true),
            background: self.background.clone(),
            replaced_label: self.replaced_label,
            remove_background: self.remove_background.then_some(true),
            predictions: self.predictions.clone(),
            inputs: self.inputs.clone(),
            methods: self.methods.iter().cloned().collect(),
            raw: self.raw.clone(),
            white: self.white.clone(),
            dark: self.dark.clone(),
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (command, args) = cli.command.split();
    let file = match &args.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        },
        None => RunConfig::default(),
    };
    let config = args.to_config().over(file).over(RunConfig::from_env()).resolve(command);
    println!("geoshift {command}, resolved config:\n{}", config.to_json());
    match run(command, &config) {
        Ok(p) => {
            println!(
                "wrote {} files to {} (config {})",
                p.outputs.len() + 2,
                config.output_dir().display(),
                &p.config_hash[..12]
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_into_config() {
        let cli = Cli::try_parse_from([
            "geoshift",
            "rank",
            "--method",
            "ot=ot.csv",
            "--method",
            "base=b.csv",
            "--metric",
            "nsd",
            "--scenario",
            "isolation_zero",
            "--without-replacement",
        ])
        .unwrap();
        let (kind, args) = cli.command.split();
        assert_eq!(kind, CommandKind::Rank);
        let cfg = args.to_config();
        assert_eq!(cfg.metric, Some(Metric::Nsd));
        assert_eq!(cfg.scenario, Some(Scenario::IsolationZero));
        assert_eq!(cfg.with_replacement, Some(false));
        assert_eq!(cfg.methods.len(), 2);
        assert!(Cli::try_parse_from(["geoshift", "rank", "--method", "nopath"]).is_err());
        assert!(Cli::try_parse_from(["geoshift", "evaluate", "--scenario", "bogus"]).is_err());
    }
}
