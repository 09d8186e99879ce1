use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use image::GrayImage;

use super::LocalizationError;
use crate::session::FrameRef;

/// Mean gradient energy of a grayscale image: the sum over pixels of
/// `dx^2 + dy^2` (forward differences, zero past the last row/column)
/// divided by the pixel count. Intensities are on the 0..=255 scale.
pub fn image_sharpness(img: &GrayImage) -> f64 {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return 0.0;
    }
    let px = |x: u32, y: u32| f64::from(img.get_pixel(x, y).0[0]);
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = px(x, y);
            if x + 1 < w {
                let dx = px(x + 1, y) - v;
                sum += dx * dx;
            }
            if y + 1 < h {
                let dy = px(x, y + 1) - v;
                sum += dy * dy;
            }
        }
    }
    sum / (f64::from(w) * f64::from(h))
}

/// Decode encoded image bytes and score them with [`image_sharpness`].
pub fn frame_sharpness(bytes: &[u8], uri: &str) -> Result<f64, LocalizationError> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| LocalizationError::Decode { uri: uri.to_string(), detail: e.to_string() })?;
    Ok(image_sharpness(&img.to_luma8()))
}

pub trait SharpnessSource: Sync {
    fn sharpness(&self, frame: &FrameRef) -> Result<f64, LocalizationError>;
}

/// Uses the frame index's precomputed sharpness when present, otherwise
/// decodes the image under `root` once and remembers the result.
#[derive(Debug)]
pub struct SharpnessCache {
    root: PathBuf,
    cache: Mutex<HashMap<String, f64>>,
}

impl SharpnessCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), cache: Mutex::new(HashMap::new()) }
    }

    fn path(&self, uri: &str) -> PathBuf {
        let p = Path::new(uri);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }
}

impl SharpnessSource for SharpnessCache {
    fn sharpness(&self, frame: &FrameRef) -> Result<f64, LocalizationError> {
        if let Some(s) = frame.sharpness {
            return Ok(s);
        }
        if let Some(s) = self.cache.lock().unwrap_or_else(|p| p.into_inner()).get(&frame.uri) {
            return Ok(*s);
        }
        let bytes = std::fs::read(self.path(&frame.uri))
            .map_err(|e| LocalizationError::Decode { uri: frame.uri.clone(), detail: e.to_string() })?;
        let s = frame_sharpness(&bytes, &frame.uri)?;
        self.cache.lock().unwrap_or_else(|p| p.into_inner()).insert(frame.uri.clone(), s);
        Ok(s)
    }
}

/// Sharpness straight from the frame index; frames without a value score 0.
impl SharpnessSource for () {
    fn sharpness(&self, frame: &FrameRef) -> Result<f64, LocalizationError> {
        Ok(frame.sharpness.unwrap_or(0.0))
    }
}
