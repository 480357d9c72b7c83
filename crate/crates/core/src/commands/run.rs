use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::report::{print_table, Outputs};
use super::{CommandKind, RunConfig};
use crate::analysis::{
    aggregate_hierarchical, aggregate_removal, bootstrap_ranking, neighborhood_matrix, subject_scores, RankingConfig,
};
use crate::augment::rng::derive_seed;
use crate::augment::{Batch, Item, LogEntry, Pipeline};
use crate::error::{Error, Result};
use crate::io::{load_cube, load_mask, save_cube, save_mask};
use crate::manifest::{load_manifest, read_manifest, save_manifest, validate_manifest, DatasetManifest, Scenario};
use crate::metrics::{evaluate_image, read_records, write_records, Metric, MetricRecord};
use crate::ood::{synthesize_dataset, ManipulationJob};
use crate::preprocess::{calibrate, l1_normalize, rgb_reconstruct, RgbBands, RgbImage};

pub(crate) fn execute(command: CommandKind, cfg: &RunConfig, root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(root);
    match command {
        CommandKind::Validate => validate(cfg, &mut out)?,
        CommandKind::Preprocess => preprocess(cfg, &mut out)?,
        CommandKind::Synthesize => synthesize(cfg, &mut out)?,
        CommandKind::Augment => augment(cfg, &mut out)?,
        CommandKind::Evaluate => evaluate(cfg, &mut out)?,
        CommandKind::Aggregate => aggregate(cfg, &mut out)?,
        CommandKind::Rank => rank(cfg, &mut out)?,
        CommandKind::Neighbors => neighbors(cfg, &mut out)?,
    }
    Ok(out.into_files())
}

fn write_png(path: &Path, rgb: &RgbImage) -> Result<()> {
    image::save_buffer(
        path,
        &rgb.to_rgb8(),
        rgb.width as u32,
        rgb.height as u32,
        image::ColorType::Rgb8,
    )
    .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct CountRow {
    scope: &'static str,
    key: String,
    images: usize,
    subjects: usize,
}

fn validate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let path = RunConfig::require(&cfg.manifest, CommandKind::Validate, "manifest")?;
    let manifest = read_manifest(path)?;
    let report = validate_manifest(&manifest);

    let mut rows = vec![CountRow {
        scope: "total",
        key: "all".into(),
        images: report.total.images,
        subjects: report.total.subjects,
    }];
    let groups = [
        ("scenario", &report.per_scenario),
        ("split", &report.per_split),
        ("scenario_split", &report.per_scenario_split),
    ];
    for (scope, map) in groups {
        rows.extend(map.iter().map(|(k, c)| CountRow {
            scope,
            key: k.clone(),
            images: c.images,
            subjects: c.subjects,
        }));
    }
    for (key, c) in [("occlusion", report.occlusion), ("no_occlusion", report.no_occlusion)] {
        rows.push(CountRow {
            scope: "original",
            key: key.into(),
            images: c.images,
            subjects: c.subjects,
        });
    }
    out.csv("validation.csv", &rows)?;
    out.json("validation.json", &report)?;

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.scope.into(),
                r.key.clone(),
                r.images.to_string(),
                r.subjects.to_string(),
            ]
        })
        .collect();
    print_table(&["scope", "key", "images", "subjects"], &table);
    for v in &report.violations {
        println!("violation: {v}");
    }
    if report.is_valid() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{} split-integrity violation(s) in {}",
            report.violations.len(),
            path.display()
        )))
    }
}

fn preprocess(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let cmd = CommandKind::Preprocess;
    let raw_path = RunConfig::require(&cfg.raw, cmd, "raw")?;
    let raw = load_cube(raw_path)?;
    let white = load_cube(RunConfig::require(&cfg.white, cmd, "white")?)?;
    let dark = load_cube(RunConfig::require(&cfg.dark, cmd, "dark")?)?;
    let (calibrated, calibration) = calibrate(&raw, &white, &dark)?;
    let (normalized, normalization) = l1_normalize(&calibrated);
    if calibration.degenerate_elements > 0 {
        log::warn!(
            "{} degenerate white/dark elements set to 0",
            calibration.degenerate_elements
        );
    }
    if normalization.zero_spectra > 0 {
        log::warn!("{} all-zero spectra left unnormalized", normalization.zero_spectra);
    }

    let stem = raw_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cube".into());
    let cube_path = out.file(format!("{stem}.cube"));
    save_cube(&normalized, &cube_path)?;
    out.file(crate::io::header_path(Path::new(&format!("{stem}.cube"))));
    if cfg.preview == Some(true) {
        write_png(
            &out.file(format!("{stem}.png")),
            &rgb_reconstruct(&normalized, &RgbBands::default())?,
        )?;
    }

    #[derive(Serialize)]
    struct Row {
        image: String,
        degenerate_elements: usize,
        clamped_elements: usize,
        zero_spectra: usize,
    }
    let row = Row {
        image: stem,
        degenerate_elements: calibration.degenerate_elements,
        clamped_elements: calibration.clamped_elements,
        zero_spectra: normalization.zero_spectra,
    };
    print_table(
        &["image", "degenerate", "clamped", "zero_spectra"],
        &[vec![
            row.image.clone(),
            row.degenerate_elements.to_string(),
            row.clamped_elements.to_string(),
            row.zero_spectra.to_string(),
        ]],
    );
    out.table("preprocess", &[row])
}

fn register_images(out: &mut Outputs, manifest: &DatasetManifest) {
    for e in &manifest.images {
        for rel in [&e.cube, &e.mask] {
            out.file(rel.clone());
            out.file(crate::io::header_path(rel));
        }
    }
}

fn synthesize(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let cmd = CommandKind::Synthesize;
    let scenario = *RunConfig::require(&cfg.scenario, cmd, "scenario")?;
    if !scenario.is_manipulated() {
        return Err(Error::Config(format!(
            "synthesize needs a manipulated scenario (isolation_zero, isolation_bgr, removal_zero, removal_bgr), got {scenario}"
        )));
    }
    let source = load_manifest(RunConfig::require(&cfg.manifest, cmd, "manifest")?)?
        .filtered(|e| e.scenario == Scenario::Original);
    let mut job = ManipulationJob::new(source, scenario, cfg.load_labelmap()?, cfg.output_dir());
    job.replaced_label = cfg.replaced_label;
    job.remove_background = cfg.remove_background.unwrap_or(false);
    if let Some(bg) = &cfg.background {
        job = job.with_background(load_cube(bg)?);
    }
    let report = synthesize_dataset(&job)?;
    out.file("manifest.json");
    register_images(out, &report.manifest);

    #[derive(Serialize)]
    struct Row<'a> {
        scenario: &'a str,
        class: &'a str,
        images: usize,
    }
    let rows: Vec<Row> = report
        .per_class
        .iter()
        .map(|(class, &images)| Row {
            scenario: &report.scenario,
            class,
            images,
        })
        .collect();
    out.csv("synthesis.csv", &rows)?;
    out.json("synthesis.json", &report)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.class.to_string(), r.images.to_string()])
        .collect();
    print_table(&["class", "images"], &table);
    println!(
        "{}: {} source images -> {} outputs",
        report.scenario, report.source_images, report.output_images
    );
    Ok(())
}

/// Consecutive chunks of `size`; a trailing single image joins the previous chunk
/// so mixing operations always see at least two images.
fn batch_ranges(n: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let size = size.max(1);
    let mut ranges: Vec<_> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if ranges.len() > 1 && ranges.last().is_some_and(|r| r.len() == 1) {
        let last = ranges.pop().expect("non-empty");
        ranges.last_mut().expect("non-empty").end = last.end;
    }
    ranges
}

#[derive(Serialize)]
struct BatchLog {
    batch: usize,
    seed: u64,
    images: Vec<String>,
    entries: Vec<LogEntry>,
}

fn augment(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let cmd = CommandKind::Augment;
    let manifest = load_manifest(RunConfig::require(&cfg.manifest, cmd, "manifest")?)?;
    let pipeline = Pipeline::load(RunConfig::require(&cfg.pipeline, cmd, "pipeline")?)?;
    let seed = cfg.seed.unwrap_or(0);
    let preview = cfg.preview == Some(true);
    let bands = RgbBands::default();

    let mut logs = Vec::new();
    let mut entries = Vec::with_capacity(manifest.len());
    for (b, range) in batch_ranges(manifest.len(), cfg.batch_size.unwrap_or(super::DEFAULT_BATCH_SIZE))
        .into_iter()
        .enumerate()
    {
        let sources = &manifest.images[range];
        let items = sources
            .par_iter()
            .map(|e| Item::new(load_cube(manifest.cube_path(e))?, load_mask(manifest.mask_path(e))?))
            .collect::<Result<Vec<_>>>()?;
        let mut batch = Batch::new(items)?;
        let batch_seed = derive_seed(seed, &[b as u64]);
        let log = pipeline.apply(&mut batch, batch_seed)?;

        let names: Vec<(PathBuf, PathBuf, Option<PathBuf>)> = sources
            .iter()
            .map(|e| {
                let cube = PathBuf::from(format!("{}.cube", e.image_id));
                let mask = PathBuf::from(format!("{}.mask", e.image_id));
                let png = preview.then(|| PathBuf::from(format!("{}.png", e.image_id)));
                (cube, mask, png)
            })
            .collect();
        for (cube, mask, png) in &names {
            for rel in [cube, mask] {
                out.file(rel.clone());
                out.file(crate::io::header_path(rel));
            }
            if let Some(p) = png {
                out.file(p.clone());
            }
        }
        batch
            .items()
            .par_iter()
            .zip(&names)
            .map(|(item, (cube, mask, png))| {
                save_cube(&item.cube, out_path(cfg, cube))?;
                save_mask(&item.mask, out_path(cfg, mask))?;
                if let Some(p) = png {
                    write_png(&out_path(cfg, p), &rgb_reconstruct(&item.cube, &bands)?)?;
                }
                Ok(())
            })
            .collect::<Result<()>>()?;

        for (e, (cube, mask, _)) in sources.iter().zip(names) {
            let mut entry = e.clone();
            entry.cube = cube;
            entry.mask = mask;
            entries.push(entry);
        }
        logs.push(BatchLog {
            batch: b,
            seed: batch_seed,
            images: sources.iter().map(|e| e.image_id.clone()).collect(),
            entries: log.entries,
        });
    }

    save_manifest(&DatasetManifest::new(entries), out.file("manifest.json"))?;
    out.json("augment_log.json", &logs)?;

    #[derive(Serialize)]
    struct EventRow {
        batch: usize,
        step: usize,
        kind: String,
        event: String,
    }
    let rows: Vec<EventRow> = logs
        .iter()
        .flat_map(|l| {
            l.entries.iter().map(|e| EventRow {
                batch: l.batch,
                step: e.step,
                kind: e.kind.clone(),
                event: serde_json::to_string(&e.event).expect("event serializes"),
            })
        })
        .collect();
    out.csv("augment_log.csv", &rows)?;

    let mut counts: BTreeMap<(usize, &str), usize> = BTreeMap::new();
    let mut skipped = 0;
    for l in &logs {
        for e in &l.entries {
            if matches!(e.event, crate::augment::AugmentEvent::Skipped { .. }) {
                skipped += 1;
            } else {
                *counts.entry((e.step, e.kind.as_str())).or_insert(0) += 1;
            }
        }
    }
    let table: Vec<Vec<String>> = counts
        .iter()
        .map(|((step, kind), n)| vec![step.to_string(), kind.to_string(), n.to_string()])
        .collect();
    print_table(&["step", "kind", "events"], &table);
    println!("{} images in {} batches, {skipped} skipped", manifest.len(), logs.len());
    if skipped > 0 {
        log::warn!("{skipped} augmentation applications skipped");
    }
    Ok(())
}

fn out_path(cfg: &RunConfig, rel: &Path) -> PathBuf {
    cfg.output_dir().join(rel)
}

fn evaluate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let cmd = CommandKind::Evaluate;
    let mut manifest = load_manifest(RunConfig::require(&cfg.manifest, cmd, "manifest")?)?;
    if let Some(sc) = cfg.scenario {
        manifest = manifest.filtered(|e| e.scenario == sc);
    }
    let predictions = RunConfig::require(&cfg.predictions, cmd, "predictions")?;
    let labelmap = cfg.load_labelmap()?;

    let per_image = manifest
        .images
        .par_iter()
        .map(|e| {
            let reference = load_mask(manifest.mask_path(e))?;
            let pred = load_mask(predictions.join(format!("{}.mask", e.image_id)))?;
            let metrics = evaluate_image(&pred, &reference, &labelmap)?;
            Ok(metrics
                .into_iter()
                .filter(|m| cfg.metric.is_none_or(|want| m.metric == want))
                .map(|m| MetricRecord {
                    image_id: e.image_id.clone(),
                    subject_id: e.subject_id.clone(),
                    scenario: e.scenario,
                    class: labelmap.name(m.class).expect("checked by evaluate_image").to_string(),
                    metric: m.metric,
                    value: m.value,
                    support: m.support,
                    source_image: e.source_image.clone(),
                    manipulated_class: e.manipulated_class.clone(),
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<MetricRecord> = per_image.into_iter().flatten().collect();

    let path = out.file("metrics.csv");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_records(std::io::BufWriter::new(f), &records)?;
    out.json("metrics.json", &records)?;

    let mut summary: BTreeMap<(String, Metric), (usize, f64)> = BTreeMap::new();
    for r in &records {
        let s = summary.entry((r.scenario.to_string(), r.metric)).or_insert((0, 0.0));
        s.0 += 1;
        s.1 += r.value;
    }
    let table: Vec<Vec<String>> = summary
        .iter()
        .map(|((sc, m), (n, sum))| {
            vec![
                sc.clone(),
                m.to_string(),
                n.to_string(),
                format!("{:.4}", sum / *n as f64),
            ]
        })
        .collect();
    print_table(&["scenario", "metric", "records", "flat_mean"], &table);
    println!("{} images evaluated", manifest.len());
    Ok(())
}

fn load_record_tables(paths: &[PathBuf]) -> Result<Vec<MetricRecord>> {
    let mut all = Vec::new();
    for p in paths {
        let f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
        all.extend(read_records(std::io::BufReader::new(f), p)?);
    }
    Ok(all)
}

/// Records grouped by (scenario, metric) after the config filters; removal
/// scenarios are reduced to their per-class minimum first.
fn grouped(cfg: &RunConfig, records: Vec<MetricRecord>) -> BTreeMap<(Scenario, Metric), Vec<MetricRecord>> {
    let mut groups: BTreeMap<(Scenario, Metric), Vec<MetricRecord>> = BTreeMap::new();
    for r in records {
        if cfg.scenario.is_some_and(|s| s != r.scenario) || cfg.metric.is_some_and(|m| m != r.metric) {
            continue;
        }
        groups.entry((r.scenario, r.metric)).or_default().push(r);
    }
    for ((scenario, _), recs) in groups.iter_mut() {
        if scenario.is_removal() {
            *recs = aggregate_removal(recs);
        }
    }
    groups
}

fn aggregate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    if cfg.inputs.is_empty() {
        return Err(Error::Config(
            "aggregate needs at least one --input metric table".into(),
        ));
    }
    let groups = grouped(cfg, load_record_tables(&cfg.inputs)?);

    #[derive(Serialize)]
    struct SummaryRow {
        scenario: Scenario,
        metric: Metric,
        classes: usize,
        mean: Option<f64>,
        sd: Option<f64>,
    }
    #[derive(Serialize)]
    struct ClassRow {
        scenario: Scenario,
        metric: Metric,
        class: String,
        mean: f64,
        subjects: usize,
    }
    #[derive(Serialize)]
    struct SubjectRow {
        scenario: Scenario,
        metric: Metric,
        subject: String,
        class: String,
        mean: f64,
        images: usize,
    }
    let (mut summary, mut classes, mut subjects) = (Vec::new(), Vec::new(), Vec::new());
    for (&(scenario, metric), recs) in &groups {
        let agg = aggregate_hierarchical(recs)?;
        summary.push(SummaryRow {
            scenario,
            metric,
            classes: agg.classes.len(),
            mean: agg.mean,
            sd: agg.sd,
        });
        classes.extend(agg.classes.into_iter().map(|c| ClassRow {
            scenario,
            metric,
            class: c.class,
            mean: c.mean,
            subjects: c.subjects,
        }));
        subjects.extend(agg.subject_class.into_iter().map(|c| SubjectRow {
            scenario,
            metric,
            subject: c.subject,
            class: c.class,
            mean: c.mean,
            images: c.images,
        }));
    }
    out.table("aggregate_summary", &summary)?;
    out.table("aggregate_classes", &classes)?;
    out.table("aggregate_subjects", &subjects)?;

    let fmt = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| format!("{v:.4}"));
    let table: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.scenario.to_string(),
                s.metric.to_string(),
                s.classes.to_string(),
                fmt(s.mean),
                fmt(s.sd),
            ]
        })
        .collect();
    print_table(&["scenario", "metric", "classes", "mean", "sd"], &table);
    Ok(())
}

fn rank(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    if cfg.methods.len() < 2 {
        return Err(Error::Config(
            "rank needs at least two --method NAME=TABLE entries".into(),
        ));
    }
    let config = RankingConfig {
        samples: cfg
            .bootstrap_samples
            .unwrap_or(crate::analysis::DEFAULT_BOOTSTRAP_SAMPLES),
        seed: cfg.seed.unwrap_or(0),
        with_replacement: cfg.with_replacement.unwrap_or(true),
    };
    let mut per_key: BTreeMap<(Scenario, Metric), BTreeMap<String, Vec<crate::analysis::SubjectScore>>> =
        BTreeMap::new();
    for (method, path) in &cfg.methods {
        for (key, recs) in grouped(cfg, load_record_tables(std::slice::from_ref(path))?) {
            per_key
                .entry(key)
                .or_default()
                .insert(method.clone(), subject_scores(&recs)?);
        }
    }

    #[derive(Serialize)]
    struct RankRow<'a> {
        scenario: Scenario,
        metric: Metric,
        method: &'a str,
        point_score: f64,
        point_rank: f64,
        mean_rank: f64,
        median_rank: f64,
        rank_p2_5: f64,
        rank_p97_5: f64,
    }
    #[derive(Serialize)]
    struct FreqRow<'a> {
        scenario: Scenario,
        metric: Metric,
        method: &'a str,
        rank: f64,
        frequency: f64,
    }
    #[derive(Serialize)]
    struct Doc {
        scenario: Scenario,
        metric: Metric,
        ranking: crate::analysis::RankingResult,
    }
    let mut docs = Vec::new();
    for ((scenario, metric), mut methods) in per_key {
        for name in cfg.methods.keys() {
            methods.entry(name.clone()).or_default();
        }
        let ranking =
            bootstrap_ranking(&methods, &config).map_err(|e| Error::Structural(format!("{scenario}/{metric}: {e}")))?;
        docs.push(Doc {
            scenario,
            metric,
            ranking,
        });
    }
    let mut rows = Vec::new();
    let mut freqs = Vec::new();
    for d in &docs {
        for m in &d.ranking.methods {
            rows.push(RankRow {
                scenario: d.scenario,
                metric: d.metric,
                method: &m.method,
                point_score: m.point_score,
                point_rank: m.point_rank,
                mean_rank: m.mean_rank,
                median_rank: m.median_rank,
                rank_p2_5: m.rank_interval.0,
                rank_p97_5: m.rank_interval.1,
            });
            freqs.extend(m.rank_frequencies.iter().map(|f| FreqRow {
                scenario: d.scenario,
                metric: d.metric,
                method: &m.method,
                rank: f.rank,
                frequency: f.frequency,
            }));
        }
    }
    out.csv("ranking.csv", &rows)?;
    out.csv("rank_frequencies.csv", &freqs)?;
    out.json("ranking.json", &docs)?;

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.scenario.to_string(),
                r.metric.to_string(),
                r.method.to_string(),
                format!("{:.4}", r.point_score),
                format!("{:.2}", r.mean_rank),
                format!("{}", r.median_rank),
                format!("[{}, {}]", r.rank_p2_5, r.rank_p97_5),
            ]
        })
        .collect();
    print_table(
        &[
            "scenario",
            "metric",
            "method",
            "score",
            "mean_rank",
            "median",
            "95% interval",
        ],
        &table,
    );
    Ok(())
}

fn neighbors(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let manifest = read_manifest(RunConfig::require(&cfg.manifest, CommandKind::Neighbors, "manifest")?)?;
    let manifest =
        manifest.filtered(|e| cfg.scenario.is_none_or(|s| e.scenario == s) && cfg.split.is_none_or(|s| e.split == s));
    let labelmap = cfg.load_labelmap()?;
    let masks = manifest
        .images
        .par_iter()
        .map(|e| Ok((load_mask(manifest.mask_path(e))?, e.subject_id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let matrix = neighborhood_matrix(&masks, &labelmap)?;

    #[derive(Serialize)]
    struct Row<'a> {
        observed: &'a str,
        neighbor: &'a str,
        proportion: f64,
    }
    let mut rows = Vec::new();
    for (j, observed) in matrix.classes.iter().enumerate() {
        if !matrix.observed[j] {
            continue;
        }
        for (i, neighbor) in matrix.classes.iter().enumerate() {
            if i != j {
                rows.push(Row {
                    observed,
                    neighbor,
                    proportion: matrix.get(i, j),
                });
            }
        }
    }
    out.csv("neighbors.csv", &rows)?;
    out.json("neighbors.json", &matrix)?;

    // rendered matrix: rows = neighbour class i, columns = observed class j
    let path = out.file("neighbors_matrix.csv");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(f);
    let write_err = |e: csv::Error| Error::Config(format!("cannot write {}: {e}", path.display()));
    let mut header = vec!["neighbor".to_string()];
    header.extend(matrix.classes.iter().cloned());
    w.write_record(&header).map_err(write_err)?;
    for (name, cells) in matrix.classes.iter().zip(matrix.display_rows()) {
        let mut rec = vec![name.clone()];
        rec.extend(cells);
        w.write_record(&rec).map_err(write_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    println!(
        "{} masks, {} of {} classes with cross-class boundaries",
        masks.len(),
        matrix.observed.iter().filter(|&&o| o).count(),
        matrix.classes.len()
    );
    Ok(())
}
