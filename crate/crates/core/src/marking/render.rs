//! Lossless PNG transcoding of source images for display at a fixed
//! physical height. Pixels are never resampled here; the client scales.

use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Physical height images are shown at unless a request says otherwise.
pub const DEFAULT_DISPLAY_HEIGHT_CM: f64 = 22.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetadata {
    pub width_px: u32,
    pub height_px: u32,
    pub px_per_cm: u16,
    pub target_cm: f64,
}

impl ImageMetadata {
    /// Screen centimeters per image centimeter at the target height.
    pub fn scale_factor(&self) -> f64 {
        self.target_cm / (f64::from(self.height_px) / f64::from(self.px_per_cm))
    }
}

#[derive(Debug, Clone)]
pub struct RenderedImage {
    pub png: Vec<u8>,
    pub metadata: ImageMetadata,
}

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("display height {0} cm must be a positive number")]
    BadHeight(f64),
    #[error("{path}: {reason}")]
    Unreadable { path: String, reason: String },
}

pub fn render_image(path: &Path, px_per_cm: u16, display_height_cm: f64) -> Result<RenderedImage, RenderError> {
    if !(display_height_cm.is_finite() && display_height_cm > 0.0) {
        return Err(RenderError::BadHeight(display_height_cm));
    }
    let unreadable =
        |e: &dyn std::fmt::Display| RenderError::Unreadable { path: path.display().to_string(), reason: e.to_string() };
    let img = image::ImageReader::open(path)
        .map_err(|e| unreadable(&e))?
        .with_guessed_format()
        .map_err(|e| unreadable(&e))?
        .decode()
        .map_err(|e| unreadable(&e))?;
    let mut png = Vec::new();
    img.write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png).map_err(|e| unreadable(&e))?;
    Ok(RenderedImage {
        png,
        metadata: ImageMetadata {
            width_px: img.width(),
            height_px: img.height(),
            px_per_cm,
            target_cm: display_height_cm,
        },
    })
}
