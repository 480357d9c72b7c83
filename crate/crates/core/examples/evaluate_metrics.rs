//! Score a corrupted prediction against its reference with DSC and NSD.
//!
//! cargo run --example evaluate_metrics

use geoshift::augment::RngStream;
use geoshift::metrics::{dsc, evaluate_image, nsd};
use geoshift::toy::ToyDataset;

fn main() -> geoshift::Result<()> {
    let ds = ToyDataset::default();
    let labelmap = ds.labelmap();
    let (_, reference) = ds.image(0);

    // shift the prediction two pixels right and flip a few labels
    let mut rng = RngStream::new(1);
    let mut pred = reference.clone();
    let w = reference.width();
    for (i, l) in pred.labels_mut().iter_mut().enumerate() {
        let x = i % w;
        *l = if x >= 2 {
            reference.labels()[i - 2]
        } else {
            reference.labels()[i]
        };
        if rng.bernoulli(0.02) {
            *l = rng.index(ds.classes as usize) as u8;
        }
    }

    println!("{:<12} {:>6} {:>8} {:>8}", "class", "metric", "value", "support");
    for m in evaluate_image(&pred, &reference, &labelmap)? {
        let name = labelmap.name(m.class).unwrap_or("?");
        println!(
            "{name:<12} {:>6} {:>8.4} {:>8}",
            m.metric.to_string(),
            m.value,
            m.support
        );
    }

    let class = 1;
    println!("\nNSD of class {class} as the tolerance grows:");
    for tau in [1.0, 2.0, 3.0, 5.0] {
        println!(
            "  tau {tau}: {:.4}",
            nsd(&pred, &reference, class, tau)?.unwrap_or(f64::NAN)
        );
    }
    println!(
        "DSC of class {class}: {:.4}",
        dsc(&pred, &reference, class)?.unwrap_or(f64::NAN)
    );
    Ok(())
}
