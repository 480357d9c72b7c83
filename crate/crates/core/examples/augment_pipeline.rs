//! Run a pipeline with geometric augmentation followed by organ transplantation
//! on one batch and print what happened.
//!
//! cargo run --example augment_pipeline

use geoshift::augment::{compose, Batch, Item, Pipeline};
use geoshift::toy::ToyDataset;

const PIPELINE: &str = r#"
seed = 7

[[steps]]
kind = "geometric"
p = 0.5

[[steps]]
kind = "organ_transplantation"
p = 0.8
classes_per_recipient = 1
"#;

fn main() -> geoshift::Result<()> {
    let ds = ToyDataset::default();
    let items = (0..5)
        .map(|i| {
            let (cube, mask) = ds.image(i);
            Item::new(cube, mask)
        })
        .collect::<geoshift::Result<Vec<_>>>()?;
    let batch = Batch::new(items)?;

    let pipeline = Pipeline::from_toml(PIPELINE)?;
    let seed = pipeline.seed.unwrap_or(0);
    let (out, log) = compose(&pipeline, &batch, seed)?;

    for entry in &log.entries {
        println!(
            "step {} {:<22} {}",
            entry.step,
            entry.kind,
            serde_json::to_string(&entry.event).unwrap()
        );
    }
    for (i, (before, after)) in batch.items().iter().zip(out.items()).enumerate() {
        let changed = before
            .mask
            .labels()
            .iter()
            .zip(after.mask.labels())
            .filter(|(a, b)| a != b)
            .count();
        println!(
            "image {i}: {changed} mask pixels changed, classes now {:?}",
            after.mask.classes_present()
        );
    }

    // same seed, same output
    let (again, _) = compose(&pipeline, &batch, seed)?;
    assert_eq!(again, out);
    Ok(())
}
