//! Eye-region masks, generation grid arithmetic and pair integrity.
//!
//! Given a face box with height `h` and width `w`, the eye region is the set
//! of pixels `(i, j)` with
//!
//! ```text
//! y_min + 0.25h <= i <= y_min + 0.55h
//! x_min + 0.05w <= j <= x_max - 0.05w
//! ```
//!
//! evaluated on integer pixel indices, so the inclusive bounds are the
//! ceiling of the lower and the floor of the upper real bound. All bound
//! arithmetic is done in integers scaled by 20 to stay exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

/// Inpainting prompt carried as metadata in every mask record. Never executed.
pub const INPAINT_PROMPT: &str =
    "eyes looking to the side, avoiding eye contact, natural eye movement, same person, photorealistic";
pub const DEFAULT_BLUR_RADIUS: f64 = 3.0;
pub const DEFAULT_MAX_SIZE: u32 = 1024;
pub const GRID: u32 = 16;
/// `ceil(3 * sigma)` for the default blur, i.e. the blur transition band.
pub const DEFAULT_DILATION: u32 = 9;
pub const DEFAULT_TOLERANCE: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate face box {0:?}: width and height must be positive")]
    DegenerateBBox(FaceBBox),
    #[error("eye band of {0:?} is empty inside a {1}x{2} image")]
    EmptyBand(FaceBBox, u32, u32),
    #[error("resize of {w}x{h} to max side {max_size} collapses a dimension to zero")]
    ZeroDimension { w: u32, h: u32, max_size: u32 },
    #[error("raster dimensions differ: {0} vs {1}")]
    DimensionMismatch(String, String),
    #[error("raster sample buffer has {found} bytes, expected {expected}")]
    RasterShape { found: usize, expected: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(u8),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

/// Face bounding box in image coordinates, origin top-left. Serialised as
/// `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i64; 4]", into = "[i64; 4]")]
pub struct FaceBBox {
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

impl From<[i64; 4]> for FaceBBox {
    fn from(v: [i64; 4]) -> Self {
        FaceBBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<FaceBBox> for [i64; 4] {
    fn from(b: FaceBBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl FaceBBox {
    pub fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Self {
        FaceBBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> i64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> i64 {
        self.y_max - self.y_min
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width() <= 0 || self.height() <= 0 {
            return Err(GeometryError::DegenerateBBox(*self));
        }
        Ok(())
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskRect {
    pub row_lo: u32,
    pub row_hi: u32,
    pub col_lo: u32,
    pub col_hi: u32,
}

impl MaskRect {
    pub fn contains(&self, row: u32, col: u32) -> bool {
        (self.row_lo..=self.row_hi).contains(&row) && (self.col_lo..=self.col_hi).contains(&col)
    }

    pub fn height(&self) -> u32 {
        self.row_hi - self.row_lo + 1
    }

    pub fn width(&self) -> u32 {
        self.col_hi - self.col_lo + 1
    }

    pub fn area(&self) -> u64 {
        self.height() as u64 * self.width() as u64
    }

    /// Grow by `by` pixels on every side, clamped to the image.
    pub fn dilate(&self, by: u32, image_w: u32, image_h: u32) -> MaskRect {
        MaskRect {
            row_lo: self.row_lo.saturating_sub(by),
            row_hi: (self.row_hi.saturating_add(by)).min(image_h.saturating_sub(1)),
            col_lo: self.col_lo.saturating_sub(by),
            col_hi: (self.col_hi.saturating_add(by)).min(image_w.saturating_sub(1)),
        }
    }
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -(-a).div_euclid(b)
}

/// Unclamped inclusive integer bounds `(row_lo, row_hi, col_lo, col_hi)`.
pub fn eye_band_bounds(bbox: &FaceBBox) -> (i64, i64, i64, i64) {
    let (h, w) = (bbox.height(), bbox.width());
    (
        ceil_div(20 * bbox.y_min + 5 * h, 20),
        floor_div(20 * bbox.y_min + 11 * h, 20),
        ceil_div(20 * bbox.x_min + w, 20),
        floor_div(20 * bbox.x_max - w, 20),
    )
}

/// Eye-region rectangle for a face box, clamped to the image.
pub fn eye_region_band(bbox: &FaceBBox, image_w: u32, image_h: u32) -> Result<MaskRect, GeometryError> {
    bbox.validate()?;
    let (r0, r1, c0, c1) = eye_band_bounds(bbox);
    let (max_r, max_c) = (image_h as i64 - 1, image_w as i64 - 1);
    let (r0, r1) = (r0.max(0), r1.min(max_r));
    let (c0, c1) = (c0.max(0), c1.min(max_c));
    if r0 > r1 || c0 > c1 {
        return Err(GeometryError::EmptyBand(*bbox, image_w, image_h));
    }
    Ok(MaskRect {
        row_lo: r0 as u32,
        row_hi: r1 as u32,
        col_lo: c0 as u32,
        col_hi: c1 as u32,
    })
}

/// 8-bit raster, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRaster {
    width: u32,
    height: u32,
    channels: u8,
    samples: Vec<u8>,
}

impl ImageRaster {
    pub fn new(width: u32, height: u32, channels: u8, samples: Vec<u8>) -> Result<Self, GeometryError> {
        if channels != 1 && channels != 3 {
            return Err(GeometryError::Channels(channels));
        }
        let expected = width as usize * height as usize * channels as usize;
        if samples.len() != expected {
            return Err(GeometryError::RasterShape {
                found: samples.len(),
                expected,
            });
        }
        Ok(ImageRaster {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, GeometryError> {
        let n = width as usize * height as usize * channels as usize;
        ImageRaster::new(width, height, channels, vec![value; n])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    fn offset(&self, row: u32, col: u32) -> usize {
        (row as usize * self.width as usize + col as usize) * self.channels as usize
    }

    pub fn pixel(&self, row: u32, col: u32) -> &[u8] {
        let o = self.offset(row, col);
        &self.samples[o..o + self.channels as usize]
    }

    pub fn pixel_mut(&mut self, row: u32, col: u32) -> &mut [u8] {
        let o = self.offset(row, col);
        let c = self.channels as usize;
        &mut self.samples[o..o + c]
    }

    fn dims(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }

    /// Read a PNG or JPEG. Grey images stay single-channel, everything else
    /// is converted to RGB.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let img = image::open(path)?;
        let raster = if img.color().channel_count() <= 2 {
            let g = img.to_luma8();
            ImageRaster::new(g.width(), g.height(), 1, g.into_raw())?
        } else {
            let rgb = img.to_rgb8();
            ImageRaster::new(rgb.width(), rgb.height(), 3, rgb.into_raw())?
        };
        Ok(raster)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.samples,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }
}

/// Binary rectangle (255 inside, 0 outside) blurred with a Gaussian of
/// `sigma = blur_radius` and half-width `ceil(3 * sigma)`. Kernel weights
/// falling outside the image are dropped and the rest renormalised. A
/// radius of zero returns the binary rectangle.
pub fn rasterize_soft_mask(rect: &MaskRect, image_w: u32, image_h: u32, blur_radius: f64) -> ImageRaster {
    let (w, h) = (image_w as usize, image_h as usize);
    let mut field: Vec<f64> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .map(|(r, c)| if rect.contains(r as u32, c as u32) { 255.0 } else { 0.0 })
        .collect();

    if blur_radius > 0.0 {
        let kernel = gaussian_kernel(blur_radius);
        field = blur_axis(&field, w, h, &kernel, true);
        field = blur_axis(&field, w, h, &kernel, false);
    }

    let samples = field.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    ImageRaster::new(image_w, image_h, 1, samples).expect("mask buffer sized from dimensions")
}

/// Unnormalised weights for offsets `-r..=r`, `r = ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect()
}

fn blur_axis(src: &[f64], w: usize, h: usize, kernel: &[f64], horizontal: bool) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut out = vec![0.0; src.len()];
    for row in 0..h {
        for col in 0..w {
            let (pos, len) = if horizontal { (col, w) } else { (row, h) };
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, weight) in kernel.iter().enumerate() {
                let p = pos as i64 + k as i64 - r;
                if p < 0 || p >= len as i64 {
                    continue;
                }
                let idx = if horizontal {
                    row * w + p as usize
                } else {
                    p as usize * w + col
                };
                acc += weight * src[idx];
                norm += weight;
            }
            out[row * w + col] = acc / norm;
        }
    }
    out
}

/// Target dimensions for the inpainting model: scale so the longer side is
/// `max_size` (upscaling included), truncate, then floor to the 16-px grid.
pub fn flux_resize_dims(w: u32, h: u32, max_size: u32) -> Result<(u32, u32), GeometryError> {
    let zero = GeometryError::ZeroDimension { w, h, max_size };
    if w == 0 || h == 0 {
        return Err(zero);
    }
    let ratio = max_size as f64 / w.max(h) as f64;
    let snap = |side: u32| ((side as f64 * ratio) as u64 / GRID as u64 * GRID as u64) as u32;
    let (new_w, new_h) = (snap(w), snap(h));
    if new_w == 0 || new_h == 0 {
        return Err(zero);
    }
    Ok((new_w, new_h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub pass: bool,
    pub max_outside_diff: u8,
    pub violating_pixel_count: u64,
}

/// Checks that a real/fake pair differs only inside the (dilated) mask.
/// A pixel violates when any channel differs by more than `tolerance`.
pub fn pair_integrity(
    real: &ImageRaster,
    fake: &ImageRaster,
    rect: &MaskRect,
    dilation: u32,
    tolerance: u8,
) -> Result<IntegrityReport, GeometryError> {
    if (real.width, real.height, real.channels) != (fake.width, fake.height, fake.channels) {
        return Err(GeometryError::DimensionMismatch(real.dims(), fake.dims()));
    }
    let guard = rect.dilate(dilation, real.width, real.height);
    let mut max_diff = 0u8;
    let mut violating = 0u64;
    for row in 0..real.height {
        for col in 0..real.width {
            if guard.contains(row, col) {
                continue;
            }
            let diff = real
                .pixel(row, col)
                .iter()
                .zip(fake.pixel(row, col))
                .map(|(a, b)| a.abs_diff(*b))
                .max()
                .unwrap_or(0);
            max_diff = max_diff.max(diff);
            if diff > tolerance {
                violating += 1;
            }
        }
    }
    Ok(IntegrityReport {
        pass: max_diff <= tolerance,
        max_outside_diff: max_diff,
        violating_pixel_count: violating,
    })
}

/// Sidecar metadata written next to every emitted mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_id: Option<String>,
    pub bbox: FaceBBox,
    pub rect: MaskRect,
    pub blur_radius: f64,
    pub prompt_text: String,
    pub image_w: u32,
    pub image_h: u32,
    pub new_w: u32,
    pub new_h: u32,
}

impl MaskRecord {
    pub fn build(
        image_id: &str,
        bbox: FaceBBox,
        image_w: u32,
        image_h: u32,
        blur_radius: f64,
    ) -> Result<(MaskRecord, ImageRaster), GeometryError> {
        let rect = eye_region_band(&bbox, image_w, image_h)?;
        let (new_w, new_h) = flux_resize_dims(image_w, image_h, DEFAULT_MAX_SIZE)?;
        let mask = rasterize_soft_mask(&rect, image_w, image_h, blur_radius);
        let record = MaskRecord {
            image_id: image_id.to_string(),
            base_id: None,
            bbox,
            rect,
            blur_radius,
            prompt_text: INPAINT_PROMPT.to_string(),
            image_w,
            image_h,
            new_w,
            new_h,
        };
        Ok((record, mask))
    }
}
