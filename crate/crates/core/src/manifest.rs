//! Dataset manifests: which images exist, whose they are and which split they belong to.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "original")]
    Original,
    #[serde(rename = "no-occlusion")]
    NoOcclusion,
    #[serde(rename = "occlusion")]
    Occlusion,
    #[serde(rename = "isolation_real")]
    IsolationReal,
    #[serde(rename = "isolation_zero")]
    IsolationZero,
    #[serde(rename = "isolation_bgr")]
    IsolationBgr,
    #[serde(rename = "removal_zero")]
    RemovalZero,
    #[serde(rename = "removal_bgr")]
    RemovalBgr,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Original,
        Scenario::NoOcclusion,
        Scenario::Occlusion,
        Scenario::IsolationReal,
        Scenario::IsolationZero,
        Scenario::IsolationBgr,
        Scenario::RemovalZero,
        Scenario::RemovalBgr,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Original => "original",
            Scenario::NoOcclusion => "no-occlusion",
            Scenario::Occlusion => "occlusion",
            Scenario::IsolationReal => "isolation_real",
            Scenario::IsolationZero => "isolation_zero",
            Scenario::IsolationBgr => "isolation_bgr",
            Scenario::RemovalZero => "removal_zero",
            Scenario::RemovalBgr => "removal_bgr",
        }
    }

    /// Removal scenarios aggregate with the per-image minimum over removed classes.
    pub fn is_removal(&self) -> bool {
        matches!(self, Scenario::RemovalZero | Scenario::RemovalBgr)
    }

    pub fn is_manipulated(&self) -> bool {
        matches!(
            self,
            Scenario::IsolationZero | Scenario::IsolationBgr | Scenario::RemovalZero | Scenario::RemovalBgr
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub subject_id: String,
    pub split: Split,
    pub occlusion: bool,
    pub scenario: Scenario,
    /// Cube payload path, relative to the manifest's directory unless absolute.
    pub cube: PathBuf,
    pub mask: PathBuf,
    /// For manipulated images: the image they were derived from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_image: Option<String>,
    /// For manipulated images: name of the isolated or removed class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manipulated_class: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub images: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against; set by [`load_manifest`].
    pub base_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    format_version: u32,
    images: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(images: Vec<ManifestEntry>) -> Self {
        Self { images, base_dir: None }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn cube_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.resolve(&entry.cube)
    }

    pub fn mask_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.resolve(&entry.mask)
    }

    pub fn get(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.images.iter().find(|e| e.image_id == image_id)
    }

    /// Entries restricted to one split.
    pub fn with_split(&self, split: Split) -> DatasetManifest {
        self.filtered(|e| e.split == split)
    }

    pub fn filtered(&self, keep: impl Fn(&ManifestEntry) -> bool) -> DatasetManifest {
        DatasetManifest {
            images: self.images.iter().filter(|e| keep(e)).cloned().collect(),
            base_dir: self.base_dir.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let doc = ManifestDoc {
            format_version: MANIFEST_FORMAT_VERSION,
            images: self.images.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| json_error(text, path, e))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::parse(path, 0, "missing integer format_version"))?;
        if version != MANIFEST_FORMAT_VERSION as u64 {
            return Err(Error::UnknownVersion {
                path: path.to_path_buf(),
                found: u32::try_from(version).unwrap_or(u32::MAX),
                supported: MANIFEST_FORMAT_VERSION,
            });
        }
        let doc: ManifestDoc = serde_json::from_str(text).map_err(|e| json_error(text, path, e))?;
        Ok(Self::new(doc.images))
    }
}

pub(crate) fn json_error(text: &str, path: &Path, e: serde_json::Error) -> Error {
    // serde_json reports 1-based line/column; convert to a byte offset
    let offset = text
        .split_inclusive('\n')
        .take(e.line().saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + e.column().saturating_sub(1);
    Error::parse(path, offset, e.to_string())
}

/// Reads a manifest without checking split integrity.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m = DatasetManifest::from_json(&text, path)?;
    m.base_dir = path.parent().map(Path::to_path_buf);
    Ok(m)
}

/// Reads a manifest and rejects it if [`validate_manifest`] finds violations.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let m = read_manifest(path.as_ref())?;
    let report = validate_manifest(&m);
    if let Some(v) = report.violations.first() {
        return Err(Error::Validation(format!(
            "{}: {v} ({} violation(s) total)",
            path.as_ref().display(),
            report.violations.len()
        )));
    }
    Ok(m)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_json()).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub images: usize,
    pub subjects: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateImageId { image_id: String },
    SubjectInBothSplits { subject_id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateImageId { image_id } => write!(f, "duplicate image id '{image_id}'"),
            Violation::SubjectInBothSplits { subject_id } => {
                write!(f, "subject '{subject_id}' appears in both train and test")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub total: Counts,
    pub per_scenario: BTreeMap<String, Counts>,
    pub per_split: BTreeMap<String, Counts>,
    /// Keyed `"<scenario>/<split>"`.
    pub per_scenario_split: BTreeMap<String, Counts>,
    /// Original-scenario images carrying the occlusion flag.
    pub occlusion: Counts,
    /// Original-scenario images without the occlusion flag.
    pub no_occlusion: Counts,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn scenario(&self, scenario: Scenario) -> Counts {
        self.per_scenario.get(scenario.as_str()).copied().unwrap_or_default()
    }

    pub fn scenario_split(&self, scenario: Scenario, split: Split) -> Counts {
        self.per_scenario_split
            .get(&format!("{scenario}/{split}"))
            .copied()
            .unwrap_or_default()
    }
}

#[derive(Default)]
struct Tally<'a> {
    images: usize,
    subjects: BTreeSet<&'a str>,
}

impl Tally<'_> {
    fn counts(&self) -> Counts {
        Counts {
            images: self.images,
            subjects: self.subjects.len(),
        }
    }
}

/// Counts images and subjects per scenario and split and lists split-integrity violations.
pub fn validate_manifest(manifest: &DatasetManifest) -> ValidationReport {
    let mut total = Tally::default();
    let mut per_scenario: BTreeMap<String, Tally> = BTreeMap::new();
    let mut per_split: BTreeMap<String, Tally> = BTreeMap::new();
    let mut per_pair: BTreeMap<String, Tally> = BTreeMap::new();
    let mut occl = Tally::default();
    let mut no_occl = Tally::default();
    let mut seen_ids = BTreeSet::new();
    let mut duplicate_ids = BTreeSet::new();
    let mut subject_splits: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();

    for e in &manifest.images {
        let subj = e.subject_id.as_str();
        if !seen_ids.insert(e.image_id.as_str()) {
            duplicate_ids.insert(e.image_id.clone());
        }
        subject_splits.entry(subj).or_default().insert(e.split);
        total.images += 1;
        total.subjects.insert(subj);
        for t in [
            per_scenario.entry(e.scenario.to_string()).or_default(),
            per_split.entry(e.split.to_string()).or_default(),
            per_pair.entry(format!("{}/{}", e.scenario, e.split)).or_default(),
        ] {
            t.images += 1;
            t.subjects.insert(subj);
        }
        if e.scenario == Scenario::Original {
            let t = if e.occlusion { &mut occl } else { &mut no_occl };
            t.images += 1;
            t.subjects.insert(subj);
        }
    }

    let mut violations: Vec<Violation> = duplicate_ids
        .into_iter()
        .map(|image_id| Violation::DuplicateImageId { image_id })
        .collect();
    violations.extend(subject_splits.iter().filter(|(_, s)| s.len() > 1).map(|(subj, _)| {
        Violation::SubjectInBothSplits {
            subject_id: subj.to_string(),
        }
    }));

    let collapse = |m: BTreeMap<String, Tally>| m.into_iter().map(|(k, t)| (k, t.counts())).collect();
    ValidationReport {
        total: total.counts(),
        per_scenario: collapse(per_scenario),
        per_split: collapse(per_split),
        per_scenario_split: collapse(per_pair),
        occlusion: occl.counts(),
        no_occlusion: no_occl.counts(),
        violations,
    }
}
