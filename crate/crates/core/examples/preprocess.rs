//! Calibrate a raw cube against white/dark references, l1-normalize it and
//! render an RGB preview.
//!
//! cargo run --example preprocess

use geoshift::augment::RngStream;
use geoshift::io::save_cube;
use geoshift::preprocess::{calibrate, l1_normalize, rgb_reconstruct, RgbBands};
use geoshift::toy::{region_mask, spectral_cube, wavelengths};
use geoshift::HsiCube;

fn main() -> geoshift::Result<()> {
    let mut rng = RngStream::new(3);
    let wl = wavelengths(100);
    let mask = region_mask(&mut rng, 48, 64, 5, 9);
    let reflectance = spectral_cube(&mut rng, &mask, &wl, 0.01);

    // fake sensor: counts = dark + reflectance * (white - dark)
    let dark = HsiCube::filled(48, 64, wl.clone(), 90.0)?;
    let white = HsiCube::filled(48, 64, wl.clone(), 4000.0)?;
    let counts: Vec<f32> = reflectance.data().iter().map(|r| 90.0 + r * 3910.0).collect();
    let raw = HsiCube::new(48, 64, wl, counts)?;

    let (calibrated, report) = calibrate(&raw, &white, &dark)?;
    println!("calibration: {report:?}");
    let max_err = calibrated
        .data()
        .iter()
        .zip(reflectance.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    println!("max |calibrated - reflectance| = {max_err:.2e}");

    let (normalized, report) = l1_normalize(&calibrated);
    let norm: f32 = normalized.spectrum(0).iter().sum();
    println!("normalization: {report:?}, l1 norm of first pixel = {norm:.6}");

    let rgb = rgb_reconstruct(&normalized, &RgbBands::default())?;
    println!(
        "rgb preview {}x{}, centre pixel {:?}",
        rgb.width,
        rgb.height,
        rgb.pixel(24, 32)
    );

    let out = std::env::temp_dir().join("geoshift-example-preprocess.cube");
    save_cube(&normalized, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
