//! Write a toy dataset, then derive isolation and removal datasets from it.
//!
//! cargo run --example synthesize_ood

use geoshift::manifest::{validate_manifest, Scenario};
use geoshift::ood::{synthesize_dataset, ManipulationJob};
use geoshift::toy::ToyDataset;

fn main() -> geoshift::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let ds = ToyDataset::default();
    let source = ds.write(&root.path().join("original"))?;
    println!("source: {} images", source.len());

    for scenario in [Scenario::IsolationZero, Scenario::RemovalZero] {
        let job = ManipulationJob::new(
            source.clone(),
            scenario,
            ds.labelmap(),
            root.path().join(scenario.as_str()),
        );
        let report = synthesize_dataset(&job)?;
        println!(
            "{scenario}: {} -> {} images, per class {:?}",
            report.source_images, report.output_images, report.per_class
        );
        let first = &report.manifest.images[0];
        println!("  e.g. {} (source {:?})", first.image_id, first.source_image);
        assert!(validate_manifest(&report.manifest).is_valid());
    }
    Ok(())
}
