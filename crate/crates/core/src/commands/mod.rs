//! The subcommands behind the `geoshift` binary.
//!
//! Every command takes a [`RunConfig`]. Values are layered flag > config file >
//! environment (paths only) > default; the resolved config is printed before
//! the command runs and persisted next to its outputs as `run_config.json`,
//! together with `provenance.json` (command, config hash, seed, output hashes).

mod cli;
mod report;
mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cube::LabelMap;
use crate::error::{Error, Result};
use crate::io::load_labelmap;
use crate::manifest::{Scenario, Split};
use crate::metrics::Metric;
use crate::ood::ReplacedLabel;

pub use cli::{main_with_args, Cli};

/// Stands in for a label map path when the built-in surgical label map is used.
pub const BUILTIN_LABELMAP: &str = "builtin:surgical";
pub const DEFAULT_OUTPUT: &str = "geoshift-out";
pub const DEFAULT_BATCH_SIZE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Validate,
    Preprocess,
    Synthesize,
    Augment,
    Evaluate,
    Aggregate,
    Rank,
    Neighbors,
}

impl CommandKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CommandKind::Validate => "validate",
            CommandKind::Preprocess => "preprocess",
            CommandKind::Synthesize => "synthesize",
            CommandKind::Augment => "augment",
            CommandKind::Evaluate => "evaluate",
            CommandKind::Aggregate => "aggregate",
            CommandKind::Rank => "rank",
            CommandKind::Neighbors => "neighbors",
        }
    }

    fn uses_seed(&self) -> bool {
        matches!(self, CommandKind::Augment | CommandKind::Rank)
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of one command run. Unset fields fall through to the next layer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labelmap: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub with_replacement: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preview: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replaced_label: Option<ReplacedLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remove_background: Option<bool>,
    /// Directory holding predicted masks named `<image_id>.mask`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    /// Metric-record tables to aggregate.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
    /// Method name -> metric-record table, for ranking.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub methods: BTreeMap<String, PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub white: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dark: Option<PathBuf>,
}

macro_rules! layer_fields {
    ($hi:ident, $lo:ident; $($opt:ident),*; $($coll:ident),*) => {
        RunConfig {
            $($opt: $hi.$opt.or($lo.$opt),)*
            $($coll: if $hi.$coll.is_empty() { $lo.$coll } else { $hi.$coll },)*
        }
    };
}

impl RunConfig {
    /// Reads a config document; `.json` files as JSON, anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| crate::manifest::json_error(&text, path, e))
        } else {
            toml::from_str(&text).map_err(|e| crate::io::toml_error(path, e))
        }
    }

    /// Default paths from `GEOSHIFT_*` variables, looked up through `var`.
    pub fn from_env_with(var: impl Fn(&str) -> Option<String>) -> Self {
        let path = |k: &str| var(k).filter(|v| !v.is_empty()).map(PathBuf::from);
        RunConfig {
            output: path("GEOSHIFT_OUTPUT"),
            manifest: path("GEOSHIFT_MANIFEST"),
            labelmap: path("GEOSHIFT_LABELMAP"),
            pipeline: path("GEOSHIFT_PIPELINE"),
            background: path("GEOSHIFT_BACKGROUND"),
            ..Default::default()
        }
    }

    pub fn from_env() -> Self {
        Self::from_env_with(|k| std::env::var(k).ok())
    }

    /// `self` where set, otherwise `lower`.
    pub fn over(self, lower: RunConfig) -> RunConfig {
        let hi = self;
        let lo = lower;
        layer_fields!(hi, lo;
            seed, workers, output, manifest, labelmap, scenario, split, metric, bootstrap_samples,
            with_replacement, pipeline, batch_size, preview, background, replaced_label,
            remove_background, predictions, raw, white, dark;
            inputs, methods)
    }

    /// Fills the defaults the command uses, so the printed config is complete.
    pub fn resolve(mut self, command: CommandKind) -> Self {
        use CommandKind::*;
        self.output.get_or_insert_with(|| DEFAULT_OUTPUT.into());
        self.workers.get_or_insert_with(rayon::current_num_threads);
        if command.uses_seed() {
            self.seed.get_or_insert(0);
        }
        if matches!(command, Synthesize | Evaluate | Neighbors) {
            self.labelmap.get_or_insert_with(|| BUILTIN_LABELMAP.into());
        }
        match command {
            Synthesize => {
                self.remove_background.get_or_insert(false);
                if let (None, Some(sc)) = (self.replaced_label, self.scenario) {
                    self.replaced_label = match sc {
                        Scenario::IsolationZero | Scenario::RemovalZero => Some(ReplacedLabel::Invalid),
                        Scenario::IsolationBgr | Scenario::RemovalBgr => Some(ReplacedLabel::Background),
                        _ => None,
                    };
                }
            }
            Augment => {
                self.batch_size.get_or_insert(DEFAULT_BATCH_SIZE);
                self.preview.get_or_insert(false);
            }
            Preprocess => {
                self.preview.get_or_insert(false);
            }
            Rank => {
                self.bootstrap_samples
                    .get_or_insert(crate::analysis::DEFAULT_BOOTSTRAP_SAMPLES);
                self.with_replacement.get_or_insert(true);
            }
            Neighbors => {
                self.scenario.get_or_insert(Scenario::Original);
            }
            Validate | Evaluate | Aggregate => {}
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    /// SHA-256 over the command name and the config without `workers`.
    pub fn hash(&self, command: CommandKind) -> String {
        let mut canonical = self.clone();
        canonical.workers = None;
        let mut h = Sha256::new();
        h.update(command.as_str().as_bytes());
        h.update(b"\n");
        h.update(canonical.to_json().as_bytes());
        hex(&h.finalize())
    }

    pub(crate) fn output_dir(&self) -> &Path {
        self.output.as_deref().unwrap_or(Path::new(DEFAULT_OUTPUT))
    }

    pub(crate) fn require<'a, T>(value: &'a Option<T>, command: CommandKind, flag: &str) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "{command} needs --{flag} (or `{}` in the config)",
                flag.replace('-', "_")
            ))
        })
    }

    pub(crate) fn load_labelmap(&self) -> Result<LabelMap> {
        match &self.labelmap {
            Some(p) if p.as_os_str() != BUILTIN_LABELMAP => load_labelmap(p),
            _ => Ok(LabelMap::surgical()),
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
}

/// Written as `provenance.json` next to a command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: CommandKind,
    pub version: String,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config: RunConfig,
    pub outputs: Vec<OutputFile>,
}

impl Provenance {
    fn build(command: CommandKind, config: &RunConfig, root: &Path, mut files: Vec<PathBuf>) -> Result<Self> {
        files.sort();
        files.dedup();
        let outputs = files
            .into_par_iter()
            .map(|rel| {
                let path = root.join(&rel);
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                Ok(OutputFile {
                    path: rel,
                    sha256: hex(&Sha256::digest(&bytes)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Provenance {
            command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(command),
            seed: config.seed,
            config: config.clone(),
            outputs,
        })
    }
}

/// Runs `command` with an already resolved config inside a pool of
/// `config.workers` threads, then writes `run_config.json` and `provenance.json`.
pub fn run(command: CommandKind, config: &RunConfig) -> Result<Provenance> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let root = config.output_dir().to_path_buf();
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let files = pool.install(|| run::execute(command, config, &root))?;

    let provenance = Provenance::build(command, config, &root, files)?;
    let write = |name: &str, text: String| {
        let p = root.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("run_config.json", config.to_json())?;
    write(
        "provenance.json",
        serde_json::to_string_pretty(&provenance).expect("provenance serializes"),
    )?;
    Ok(provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_precedence() {
        let flags = RunConfig {
            seed: Some(7),
            ..Default::default()
        };
        let file = RunConfig {
            seed: Some(1),
            manifest: Some("from_file.json".into()),
            batch_size: Some(3),
            ..Default::default()
        };
        let env = RunConfig::from_env_with(|k| match k {
            "GEOSHIFT_MANIFEST" => Some("from_env.json".into()),
            "GEOSHIFT_LABELMAP" => Some("env_labels.toml".into()),
            _ => None,
        });
        let cfg = flags.over(file).over(env).resolve(CommandKind::Augment);
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.manifest, Some("from_file.json".into()));
        assert_eq!(cfg.labelmap, Some("env_labels.toml".into()));
        assert_eq!(cfg.batch_size, Some(3));
        assert_eq!(cfg.preview, Some(false));
        assert_eq!(cfg.output, Some(DEFAULT_OUTPUT.into()));
    }

    #[test]
    fn resolve_fills_command_defaults() {
        let rank = RunConfig::default().resolve(CommandKind::Rank);
        assert_eq!(rank.bootstrap_samples, Some(1000));
        assert_eq!(rank.with_replacement, Some(true));
        assert_eq!(rank.seed, Some(0));
        let synth = RunConfig {
            scenario: Some(Scenario::RemovalBgr),
            ..Default::default()
        }
        .resolve(CommandKind::Synthesize);
        assert_eq!(synth.replaced_label, Some(ReplacedLabel::Background));
        assert_eq!(synth.labelmap, Some(BUILTIN_LABELMAP.into()));
        assert_eq!(RunConfig::default().resolve(CommandKind::Evaluate).seed, None);
    }

    #[test]
    fn config_round_trips_through_json_and_toml() {
        let cfg = RunConfig {
            seed: Some(u64::MAX),
            scenario: Some(Scenario::IsolationZero),
            metric: Some(Metric::Nsd),
            methods: [("a".to_string(), PathBuf::from("a.csv"))].into(),
            ..Default::default()
        };
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);

        let toml_text = "seed = 3\nscenario = \"removal_zero\"\nmetric = \"DSC\"\n[methods]\nbaseline = \"b.csv\"\n";
        let t: RunConfig = toml::from_str(toml_text).unwrap();
        assert_eq!(t.scenario, Some(Scenario::RemovalZero));
        assert_eq!(t.methods["baseline"], PathBuf::from("b.csv"));
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
    }

    #[test]
    fn hash_ignores_workers_only() {
        let a = RunConfig {
            seed: Some(1),
            workers: Some(1),
            ..Default::default()
        };
        let b = RunConfig {
            workers: Some(8),
            ..a.clone()
        };
        assert_eq!(a.hash(CommandKind::Augment), b.hash(CommandKind::Augment));
        assert_ne!(a.hash(CommandKind::Augment), a.hash(CommandKind::Rank));
        let c = RunConfig {
            seed: Some(2),
            ..a.clone()
        };
        assert_ne!(a.hash(CommandKind::Augment), c.hash(CommandKind::Augment));
        assert_eq!(a.hash(CommandKind::Augment).len(), 64);
    }
}
