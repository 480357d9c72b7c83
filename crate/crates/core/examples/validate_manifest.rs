//! Count images and subjects of a manifest and split it by the occlusion flag.
//!
//! cargo run --example validate_manifest

use geoshift::manifest::{validate_manifest, Split};
use geoshift::ood::filter_occlusion;
use geoshift::toy::ToyDataset;

fn main() -> geoshift::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let manifest = ToyDataset {
        subjects: 6,
        test_subjects: 2,
        ..Default::default()
    }
    .write(dir.path())?;

    let report = validate_manifest(&manifest);
    println!("total: {:?}", report.total);
    for (key, counts) in &report.per_scenario_split {
        println!("{key:<16} {counts:?}");
    }
    println!(
        "occlusion {:?}, no occlusion {:?}",
        report.occlusion, report.no_occlusion
    );
    println!("violations: {:?}", report.violations);

    let occluded = filter_occlusion(&manifest, true);
    let test = manifest.with_split(Split::Test);
    println!("{} occluded images, {} test images", occluded.len(), test.len());
    Ok(())
}
