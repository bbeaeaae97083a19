//! Binary greyscale PGM (P5, maxval 255) export.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::RecurrenceImage;

/// `round(v * 255)` with halves rounded away from zero.
pub fn pixel(v: f64) -> u8 {
    (v * 255.0).round() as u8
}

pub fn pgm_bytes(image: &RecurrenceImage) -> Result<Vec<u8>> {
    let n = image.size();
    if let Some(v) = image.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidConfig(format!("pixel value {v} outside [0, 1]")));
    }
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(image.values().iter().map(|&v| pixel(v)));
    Ok(out)
}

pub fn export_pgm(image: &RecurrenceImage, path: &Path) -> Result<()> {
    std::fs::write(path, pgm_bytes(image)?).map_err(|e| Error::io(path, e))
}
