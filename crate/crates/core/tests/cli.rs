use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geoshift::augment::RngStream;
use geoshift::cube::{HsiCube, LabelMap, SegmentationMask};
use geoshift::io::{load_cube, load_mask, save_cube, save_labelmap, save_mask};
use geoshift::manifest::{load_manifest, save_manifest, DatasetManifest, ManifestEntry, Scenario, Split};
use geoshift::metrics::{read_records, Metric, MetricRecord};
use geoshift::toy::{spectral_cube, wavelengths, ToyDataset};

fn geoshift(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_geoshift"));
    for var in [
        "GEOSHIFT_OUTPUT",
        "GEOSHIFT_MANIFEST",
        "GEOSHIFT_LABELMAP",
        "GEOSHIFT_PIPELINE",
        "GEOSHIFT_BACKGROUND",
    ] {
        cmd.env_remove(var);
    }
    cmd.args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Images with three vertical stripes labelled 0, 1, 2.
fn striped_dataset(dir: &Path, images: usize) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let labelmap = LabelMap::from_names(&["background", "liver", "stomach"]).unwrap();
    save_labelmap(&labelmap, dir.join("labels.toml")).unwrap();
    let mut entries = Vec::new();
    for i in 0..images {
        let id = format!("img{i}");
        let mask = SegmentationMask::from_fn(12, 18, |_, x| (x / 6) as u8);
        let mut rng = RngStream::new(i as u64);
        let cube = spectral_cube(&mut rng, &mask, &wavelengths(8), 0.01);
        save_cube(&cube, dir.join(format!("{id}.cube"))).unwrap();
        save_mask(&mask, dir.join(format!("{id}.mask"))).unwrap();
        entries.push(ManifestEntry {
            image_id: id.clone(),
            subject_id: format!("P{}", i / 2),
            split: Split::Test,
            occlusion: false,
            scenario: Scenario::Original,
            cube: format!("{id}.cube").into(),
            mask: format!("{id}.mask").into(),
            source_image: None,
            manipulated_class: None,
        });
    }
    let path = dir.join("manifest.json");
    save_manifest(&DatasetManifest::new(entries), &path).unwrap();
    path
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synthesize_isolation_counts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = striped_dataset(&tmp.path().join("data"), 2);
    let labels = tmp.path().join("data/labels.toml");
    let out = tmp.path().join("iso");
    let args = [
        "synthesize",
        "--manifest",
        p(&manifest),
        "--labelmap",
        p(&labels),
        "--scenario",
        "isolation_zero",
        "--output",
        p(&out),
    ];
    let o = geoshift(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("\"scenario\": \"isolation_zero\""),
        "resolved config is printed"
    );
    let m = load_manifest(out.join("manifest.json")).unwrap();
    assert_eq!(m.len(), 6);
    assert!(m
        .images
        .iter()
        .all(|e| e.scenario == Scenario::IsolationZero && e.split == Split::Test));
    assert!(m.get("img1@isolation_zero@stomach").is_some());
    let synth = fs::read_to_string(out.join("synthesis.csv")).unwrap();
    assert!(synth.starts_with("scenario,class,images\n"));
    assert!(out.join("synthesis.json").exists());

    let first = dir_bytes(&out);
    let again = geoshift(&args);
    assert!(again.status.success());
    assert_eq!(dir_bytes(&out), first);

    // persisted config re-executes to the same outputs
    let rerun = tmp.path().join("rerun.json");
    fs::copy(out.join("run_config.json"), &rerun).unwrap();
    let o = geoshift(&["synthesize", "--config", p(&rerun)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(dir_bytes(&out), first);
}

#[test]
fn synthesize_bgr_without_background_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = striped_dataset(&tmp.path().join("data"), 2);
    let o = geoshift(&[
        "synthesize",
        "--manifest",
        p(&manifest),
        "--labelmap",
        p(&tmp.path().join("data/labels.toml")),
        "--scenario",
        "removal_bgr",
        "--output",
        p(&tmp.path().join("out")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("background"), "{}", stderr(&o));
}

#[test]
fn synthesize_removal_bgr_with_background() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = striped_dataset(&tmp.path().join("data"), 2);
    let bg = tmp.path().join("bg.cube");
    let bg_cube = HsiCube::filled(12, 18, wavelengths(8), 0.25).unwrap();
    save_cube(&bg_cube, &bg).unwrap();
    let out = tmp.path().join("out");
    let o = geoshift(&[
        "synthesize",
        "--manifest",
        p(&manifest),
        "--labelmap",
        p(&tmp.path().join("data/labels.toml")),
        "--scenario",
        "removal_bgr",
        "--background",
        p(&bg),
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = load_manifest(out.join("manifest.json")).unwrap();
    // background is not removed by default: 2 classes per image
    assert_eq!(m.len(), 4);
    let e = m.get("img0@removal_bgr@liver").unwrap();
    let mask = load_mask(m.mask_path(e)).unwrap();
    assert_eq!(mask.count(1), 0);
    let cube = load_cube(m.cube_path(e)).unwrap();
    assert_eq!(cube.at(0, 7, 3), 0.25);
}

fn write_pipeline(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn augment_logs_transplantation_and_depends_on_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ToyDataset {
        subjects: 1,
        images_per_subject: 2,
        ..Default::default()
    }
    .write(&data)
    .unwrap();
    let pipeline = tmp.path().join("ot.toml");
    write_pipeline(&pipeline, "[[steps]]\nkind = \"organ_transplantation\"\np = 1.0\n");
    let manifest = data.join("manifest.json");
    let run = |seed: &str, out: &Path, preview: bool| {
        let mut args = vec![
            "augment",
            "--manifest",
            p(&manifest),
            "--pipeline",
            p(&pipeline),
            "--seed",
            seed,
            "--output",
            p(out),
        ];
        if preview {
            args.push("--preview");
        }
        let o = geoshift(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    let a = tmp.path().join("a");
    run("1", &a, true);
    let log: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("augment_log.json")).unwrap()).unwrap();
    let entries = log[0]["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    for e in entries {
        assert_eq!(e["event"], "transplant");
        assert!(e["donor"].is_u64());
        assert!(e["class"].is_u64());
        assert!(e["pixel_count"].as_u64().unwrap() > 0);
    }
    assert!(a.join("S00_000.png").exists());
    assert!(a.join("S00_001.cube").exists());
    let m = load_manifest(a.join("manifest.json")).unwrap();
    assert_eq!(m.len(), 2);

    let a2 = tmp.path().join("a2");
    run("1", &a2, true);
    assert_eq!(dir_bytes(&a), {
        let mut d = dir_bytes(&a2);
        // run_config/provenance name a different output directory
        for (name, bytes) in d.iter_mut() {
            if name == "run_config.json" || name == "provenance.json" {
                *bytes = fs::read(a.join(name.as_str())).unwrap();
            }
        }
        d
    });

    let b = tmp.path().join("b");
    run("2", &b, false);
    assert_ne!(
        fs::read(a.join("S00_000.cube")).unwrap(),
        fs::read(b.join("S00_000.cube")).unwrap()
    );
    assert!(!b.join("S00_000.png").exists());
}

#[test]
fn evaluate_identity_and_scenario_tags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = striped_dataset(&data, 2);
    let out = tmp.path().join("eval");
    let o = geoshift(&[
        "evaluate",
        "--manifest",
        p(&manifest),
        "--labelmap",
        p(&data.join("labels.toml")),
        "--predictions",
        p(&data),
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = read_records(
        fs::File::open(out.join("metrics.csv")).unwrap(),
        Path::new("metrics.csv"),
    )
    .unwrap();
    assert_eq!(recs.len(), 2 * 3 * 2);
    assert!(recs.iter().all(|r| r.value == 1.0 && r.scenario == Scenario::Original));
    assert!(out.join("metrics.json").exists());

    // evaluate a synthesized dataset: scenario and provenance propagate
    let iso = tmp.path().join("iso");
    let o = geoshift(&[
        "synthesize",
        "--manifest",
        p(&manifest),
        "--labelmap",
        p(&data.join("labels.toml")),
        "--scenario",
        "isolation_zero",
        "--output",
        p(&iso),
    ]);
    assert!(o.status.success());
    let out2 = tmp.path().join("eval2");
    let o = geoshift(&[
        "evaluate",
        "--manifest",
        p(&iso.join("manifest.json")),
        "--labelmap",
        p(&data.join("labels.toml")),
        "--predictions",
        p(&iso),
        "--metric",
        "DSC",
        "--output",
        p(&out2),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = read_records(fs::File::open(out2.join("metrics.csv")).unwrap(), Path::new("m.csv")).unwrap();
    assert!(recs
        .iter()
        .all(|r| r.scenario == Scenario::IsolationZero && r.metric == Metric::Dsc));
    assert!(recs
        .iter()
        .all(|r| r.source_image.is_some() && r.manipulated_class.is_some()));
}

#[test]
fn evaluate_unparseable_mask_names_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = striped_dataset(&data, 2);
    let preds = tmp.path().join("preds");
    fs::create_dir_all(&preds).unwrap();
    for id in ["img0", "img1"] {
        fs::copy(data.join(format!("{id}.mask")), preds.join(format!("{id}.mask"))).unwrap();
        fs::copy(
            data.join(format!("{id}.mask.toml")),
            preds.join(format!("{id}.mask.toml")),
        )
        .unwrap();
    }
    fs::write(preds.join("img1.mask"), [0u8; 5]).unwrap();
    let o = geoshift(&[
        "evaluate",
        "--manifest",
        p(&manifest),
        "--labelmap",
        p(&data.join("labels.toml")),
        "--predictions",
        p(&preds),
        "--output",
        p(&tmp.path().join("out")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("img1.mask"), "{}", stderr(&o));
}

fn record(image: &str, subject: &str, class: &str, value: f64) -> MetricRecord {
    MetricRecord {
        image_id: image.into(),
        subject_id: subject.into(),
        scenario: Scenario::Original,
        class: class.into(),
        metric: Metric::Dsc,
        value,
        support: 10,
        source_image: None,
        manipulated_class: None,
    }
}

fn write_table(path: &Path, recs: &[MetricRecord]) {
    geoshift::metrics::write_records(fs::File::create(path).unwrap(), recs).unwrap();
}

#[test]
fn aggregate_worked_example() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("m.csv");
    write_table(
        &table,
        &[
            record("a1", "A", "liver", 0.8),
            record("a2", "A", "liver", 0.6),
            record("b1", "B", "liver", 1.0),
        ],
    );
    let out = tmp.path().join("agg");
    let o = geoshift(&["aggregate", "--input", p(&table), "--output", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("aggregate_classes.csv")).unwrap();
    assert_eq!(text, "scenario,metric,class,mean,subjects\noriginal,DSC,liver,0.85,2\n");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("aggregate_summary.json")).unwrap()).unwrap();
    assert_eq!(summary[0]["mean"], 0.85);
}

#[test]
fn rank_dominating_method() {
    let tmp = tempfile::tempdir().unwrap();
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for s in 0..5 {
        for (c, class) in ["liver", "colon", "stomach"].iter().enumerate() {
            let v = 0.3 + 0.1 * c as f64 + 0.01 * s as f64;
            good.push(record(&format!("i{s}"), &format!("P{s}"), class, v + 0.05));
            bad.push(record(&format!("i{s}"), &format!("P{s}"), class, v));
        }
    }
    let (g, b) = (tmp.path().join("good.csv"), tmp.path().join("bad.csv"));
    write_table(&g, &good);
    write_table(&b, &bad);
    let out = tmp.path().join("rank");
    let o = geoshift(&[
        "rank",
        "--method",
        &format!("ot={}", p(&g)),
        "--method",
        &format!("baseline={}", p(&b)),
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"bootstrap_samples\": 1000"));
    let freqs = fs::read_to_string(out.join("rank_frequencies.csv")).unwrap();
    assert!(freqs.contains("original,DSC,ot,1.0,1.0\n"), "{freqs}");
    assert!(freqs.contains("original,DSC,baseline,2.0,1.0\n"), "{freqs}");
}

#[test]
fn rank_mismatched_grid_is_structural_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (g, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    write_table(&g, &[record("i", "P1", "liver", 0.5), record("j", "P2", "liver", 0.5)]);
    write_table(&b, &[record("i", "P1", "liver", 0.5)]);
    let o = geoshift(&[
        "rank",
        "--method",
        &format!("a={}", p(&g)),
        "--method",
        &format!("b={}", p(&b)),
        "--output",
        p(&tmp.path().join("out")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("grid"), "{}", stderr(&o));
}

#[test]
fn neighbors_two_class_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    fs::create_dir_all(&dir).unwrap();
    let labelmap = LabelMap::from_names(&["background", "liver"]).unwrap();
    save_labelmap(&labelmap, dir.join("labels.toml")).unwrap();
    let mut entries = Vec::new();
    for i in 0..3 {
        let id = format!("m{i}");
        let split_at = 3 + i;
        save_mask(
            &SegmentationMask::from_fn(8, 10, |_, x| u8::from(x >= split_at)),
            dir.join(format!("{id}.mask")),
        )
        .unwrap();
        entries.push(ManifestEntry {
            image_id: id.clone(),
            subject_id: format!("P{}", i % 2),
            split: Split::Test,
            occlusion: false,
            scenario: Scenario::Original,
            cube: format!("{id}.cube").into(),
            mask: format!("{id}.mask").into(),
            source_image: None,
            manipulated_class: None,
        });
    }
    save_manifest(&DatasetManifest::new(entries), dir.join("manifest.json")).unwrap();
    let out = tmp.path().join("nb");
    let o = geoshift(&[
        "neighbors",
        "--manifest",
        p(&dir.join("manifest.json")),
        "--labelmap",
        p(&dir.join("labels.toml")),
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let long = fs::read_to_string(out.join("neighbors.csv")).unwrap();
    assert_eq!(
        long,
        "observed,neighbor,proportion\nbackground,liver,1.0\nliver,background,1.0\n"
    );
    let matrix = fs::read_to_string(out.join("neighbors_matrix.csv")).unwrap();
    assert_eq!(matrix, "neighbor,background,liver\nbackground,,1.000\nliver,1.000,\n");
}

#[test]
fn validate_reports_violations_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = striped_dataset(&data, 4);
    let o = geoshift(&[
        "validate",
        "--manifest",
        p(&manifest),
        "--output",
        p(&tmp.path().join("v")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("v/validation.csv")).unwrap();
    assert!(csv.contains("total,all,4,2\n"), "{csv}");

    let mut m = load_manifest(&manifest).unwrap();
    m.images[1].split = Split::Train;
    save_manifest(&m, &manifest).unwrap();
    let o = geoshift(&[
        "validate",
        "--manifest",
        p(&manifest),
        "--output",
        p(&tmp.path().join("v2")),
    ]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("appears in both train and test"));
}

#[test]
fn env_and_config_layering() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = striped_dataset(&data, 2);
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "output = \"{}\"\nmanifest = \"/does/not/exist.json\"\n",
            p(&tmp.path().join("from_config"))
        ),
    )
    .unwrap();
    // flag beats config
    let o = geoshift(&["validate", "--config", p(&cfg), "--manifest", p(&manifest)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("from_config/validation.csv").exists());

    // env supplies a default path when neither flag nor config does
    let o = Command::new(env!("CARGO_BIN_EXE_geoshift"))
        .args(["validate", "--output", p(&tmp.path().join("from_env"))])
        .env("GEOSHIFT_MANIFEST", p(&manifest))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));

    // config beats env
    let o = Command::new(env!("CARGO_BIN_EXE_geoshift"))
        .args(["validate", "--config", p(&cfg)])
        .env("GEOSHIFT_MANIFEST", p(&manifest))
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/does/not/exist.json"));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "sede = 1\n").unwrap();
    let o = geoshift(&["validate", "--config", p(&bad)]);
    assert!(!o.status.success());
}

#[test]
fn provenance_lists_outputs_with_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = striped_dataset(&data, 2);
    let out = tmp.path().join("v");
    assert!(geoshift(&["validate", "--manifest", p(&manifest), "--output", p(&out)])
        .status
        .success());
    let prov: geoshift::commands::Provenance =
        serde_json::from_str(&fs::read_to_string(out.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov.command, geoshift::commands::CommandKind::Validate);
    assert_eq!(prov.config_hash.len(), 64);
    let names: Vec<_> = prov
        .outputs
        .iter()
        .map(|o| o.path.to_str().unwrap().to_string())
        .collect();
    assert_eq!(names, ["validation.csv", "validation.json"]);
}

#[test]
fn preprocess_writes_normalized_cube_and_preview() {
    let tmp = tempfile::tempdir().unwrap();
    let wl = geoshift::cube::HsiCube::reference_wavelengths();
    let raw = HsiCube::filled(4, 5, wl.clone(), 0.6).unwrap();
    let white = HsiCube::filled(4, 5, wl.clone(), 1.0).unwrap();
    let dark = HsiCube::filled(4, 5, wl, 0.1).unwrap();
    for (name, c) in [("raw", &raw), ("white", &white), ("dark", &dark)] {
        save_cube(c, tmp.path().join(format!("{name}.cube"))).unwrap();
    }
    let out = tmp.path().join("pre");
    let o = geoshift(&[
        "preprocess",
        "--raw",
        p(&tmp.path().join("raw.cube")),
        "--white",
        p(&tmp.path().join("white.cube")),
        "--dark",
        p(&tmp.path().join("dark.cube")),
        "--preview",
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cube = load_cube(out.join("raw.cube")).unwrap();
    let sum: f32 = cube.spectrum(0).iter().sum();
    assert!((sum - 1.0).abs() < 1e-5);
    assert!(out.join("raw.png").exists());
}

#[test]
fn missing_required_flag_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = geoshift(&["evaluate", "--output", p(&tmp.path().join("o"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--manifest"), "{}", stderr(&o));
    let o = geoshift(&["frobnicate"]);
    assert!(!o.status.success());
}
