//! Class neighbourhood matrix of a toy dataset.
//!
//! cargo run --example neighbors

use geoshift::analysis::neighborhood_matrix;
use geoshift::toy::ToyDataset;

fn main() -> geoshift::Result<()> {
    let ds = ToyDataset {
        classes: 6,
        ..Default::default()
    };
    let labelmap = ds.labelmap();
    let masks: Vec<_> = (0..ds.subjects * ds.images_per_subject)
        .map(|i| (ds.image(i).1, format!("S{:02}", i / ds.images_per_subject)))
        .collect();
    let nm = neighborhood_matrix(&masks, &labelmap)?;

    // column j: how the neighbours of class j split over the other classes
    print!("{:>10}", "");
    for c in &nm.classes {
        print!("{c:>10}");
    }
    println!();
    for (c, row) in nm.classes.iter().zip(nm.display_rows()) {
        print!("{c:>10}");
        for v in row {
            print!("{v:>10}");
        }
        println!();
    }
    for j in 0..nm.classes.len() {
        if nm.observed[j] {
            assert!((nm.column_sum(j) - 1.0).abs() < 1e-9);
        }
    }
    Ok(())
}
