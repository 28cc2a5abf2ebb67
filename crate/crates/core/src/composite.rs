//! Pasting the rendered robot over the inpainted background, and the CutMix
//! sprite baseline.
//!
//! Compositing is hard (binary masks, no feathering) and never mutates its
//! inputs.

use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::Overlay;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompositeError {
    #[error("size mismatch: background {background:?}, overlay {overlay:?}")]
    SizeMismatch { background: (u32, u32), overlay: (u32, u32) },
    #[error("bounding box is empty or outside the image: {0:?}")]
    EmptyBBox(BBox),
    #[error("sprite is empty")]
    EmptySprite,
    #[error("sprite i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Integer image translation applied to the overlay before pasting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct PixelOffset {
    pub du: i64,
    pub dv: i64,
}

impl PixelOffset {
    pub const ZERO: PixelOffset = PixelOffset { du: 0, dv: 0 };

    pub fn new(du: i64, dv: i64) -> Self {
        PixelOffset { du, dv }
    }
}

/// Offset that moves the projected robot wrist onto the detected hand wrist.
/// Components are rounded half away from zero.
pub fn alignment_offset(hand_wrist: [f64; 2], projected_wrist: [f64; 2]) -> PixelOffset {
    PixelOffset {
        du: (hand_wrist[0] - projected_wrist[0]).round() as i64,
        dv: (hand_wrist[1] - projected_wrist[1]).round() as i64,
    }
}

fn check_size(background: &RgbImage, overlay: &Overlay) -> Result<(), CompositeError> {
    if background.dimensions() != overlay.mask.dimensions() || overlay.rgb.dimensions() != overlay.mask.dimensions() {
        return Err(CompositeError::SizeMismatch {
            background: background.dimensions(),
            overlay: overlay.mask.dimensions(),
        });
    }
    Ok(())
}

/// Calls `f(dst_index, src_index)` for every overlay pixel that is set and
/// lands inside the image after shifting by `offset`.
fn for_each_shifted(mask: &GrayImage, offset: PixelOffset, mut f: impl FnMut(usize, usize)) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let raw = mask.as_raw();
    for sy in 0..h {
        let dy = sy + offset.dv;
        if dy < 0 || dy >= h {
            continue;
        }
        for sx in 0..w {
            let src = (sy * w + sx) as usize;
            if raw[src] != 255 {
                continue;
            }
            let dx = sx + offset.du;
            if dx < 0 || dx >= w {
                continue;
            }
            f((dy * w + dx) as usize, src);
        }
    }
}

/// Background with the overlay's masked pixels pasted at `offset`.
pub fn paste(background: &RgbImage, overlay: &Overlay, offset: PixelOffset) -> Result<RgbImage, CompositeError> {
    check_size(background, overlay)?;
    let mut out = background.clone();
    let src = overlay.rgb.as_raw();
    let dst: &mut [u8] = out.as_mut();
    for_each_shifted(&overlay.mask, offset, |d, s| {
        dst[d * 3..d * 3 + 3].copy_from_slice(&src[s * 3..s * 3 + 3]);
    });
    Ok(out)
}

/// The robot mask as it appears in the pasted frame.
pub fn shifted_mask(overlay: &Overlay, offset: PixelOffset) -> GrayImage {
    let mut out = GrayImage::new(overlay.width(), overlay.height());
    let dst: &mut [u8] = out.as_mut();
    for_each_shifted(&overlay.mask, offset, |d, _| dst[d] = 255);
    out
}

/// Axis-aligned pixel rectangle `[x, x+width) x [y, y+height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl BBox {
    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && py >= self.y && px - self.x < self.width && py - self.y < self.height
    }

    /// Smallest box covering `points`, grown by `margin` of its size on every
    /// side and clipped to a `width x height` image.
    pub fn around(points: &[[f64; 2]], margin: f64, width: u32, height: u32) -> Option<BBox> {
        let finite = points.iter().filter(|p| p[0].is_finite() && p[1].is_finite());
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in finite {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        if !(x0 <= x1 && y0 <= y1) {
            return None;
        }
        let (mx, my) = ((x1 - x0) * margin, (y1 - y0) * margin);
        let left = (x0 - mx).floor().clamp(0.0, width as f64) as u32;
        let top = (y0 - my).floor().clamp(0.0, height as f64) as u32;
        let right = (x1 + mx).ceil().clamp(0.0, width as f64) as u32;
        let bottom = (y1 + my).ceil().clamp(0.0, height as f64) as u32;
        (right > left && bottom > top).then(|| BBox { x: left, y: top, width: right - left, height: bottom - top })
    }
}

/// A robot picture with its binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    pub rgb: RgbImage,
    pub mask: GrayImage,
}

impl Sprite {
    pub fn new(rgb: RgbImage, mask: GrayImage) -> Result<Sprite, CompositeError> {
        if rgb.width() == 0 || rgb.height() == 0 || !mask.as_raw().iter().any(|&m| m == 255) {
            return Err(CompositeError::EmptySprite);
        }
        if rgb.dimensions() != mask.dimensions() {
            return Err(CompositeError::SizeMismatch { background: rgb.dimensions(), overlay: mask.dimensions() });
        }
        Ok(Sprite { rgb, mask })
    }
}

/// Loads `sprite_N.png` / `sprite_N_mask.png` pairs, ordered by N.
pub fn load_sprites(dir: &Path) -> Result<Vec<Sprite>, CompositeError> {
    let io = |path: &Path, message: String| CompositeError::Io { path: path.to_path_buf(), message };
    let entries = std::fs::read_dir(dir).map_err(|e| io(dir, e.to_string()))?;
    let mut numbered = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io(dir, e.to_string()))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(n) = name.strip_prefix("sprite_").and_then(|r| r.strip_suffix(".png")) else {
            continue;
        };
        if let Ok(n) = n.parse::<u64>() {
            numbered.push(n);
        }
    }
    numbered.sort_unstable();
    let mut sprites = Vec::with_capacity(numbered.len());
    for n in numbered {
        let rgb_path = dir.join(format!("sprite_{n}.png"));
        let mask_path = dir.join(format!("sprite_{n}_mask.png"));
        let rgb = image::open(&rgb_path).map_err(|e| io(&rgb_path, e.to_string()))?.to_rgb8();
        let mask = image::open(&mask_path).map_err(|e| io(&mask_path, e.to_string()))?.to_luma8();
        sprites.push(Sprite::new(rgb, mask)?);
    }
    if sprites.is_empty() {
        return Err(io(dir, "no sprite_N.png files".into()));
    }
    Ok(sprites)
}

/// Scale factor and pixel size of `sprite` fitted into `bbox`.
pub fn cutmix_fit(sprite: &Sprite, bbox: &BBox) -> (f64, u32, u32) {
    let (sw, sh) = (sprite.rgb.width() as f64, sprite.rgb.height() as f64);
    let s = (bbox.width as f64 / sw).min(bbox.height as f64 / sh);
    let w = ((sw * s).floor() as u32).clamp(0, bbox.width);
    let h = ((sh * s).floor() as u32).clamp(0, bbox.height);
    (s, w, h)
}

/// Pastes the sprite, scaled uniformly to the largest size fitting the box
/// and centered in it, with nearest-neighbor sampling. Returns the composited
/// image and the mask of pasted pixels.
pub fn cutmix(original: &RgbImage, sprite: &Sprite, bbox: &BBox) -> Result<(RgbImage, GrayImage), CompositeError> {
    let (iw, ih) = original.dimensions();
    if bbox.width == 0 || bbox.height == 0 || bbox.x + bbox.width > iw || bbox.y + bbox.height > ih {
        return Err(CompositeError::EmptyBBox(*bbox));
    }
    let (s, w, h) = cutmix_fit(sprite, bbox);
    let mut out = original.clone();
    let mut mask = GrayImage::new(iw, ih);
    let ox = bbox.x + (bbox.width - w) / 2;
    let oy = bbox.y + (bbox.height - h) / 2;
    let (sw, sh) = sprite.rgb.dimensions();
    for dy in 0..h {
        let sy = (((dy as f64 + 0.5) / s) as u32).min(sh - 1);
        for dx in 0..w {
            let sx = (((dx as f64 + 0.5) / s) as u32).min(sw - 1);
            if sprite.mask.get_pixel(sx, sy)[0] != 255 {
                continue;
            }
            out.put_pixel(ox + dx, oy + dy, *sprite.rgb.get_pixel(sx, sy));
            mask.put_pixel(ox + dx, oy + dy, image::Luma([255]));
        }
    }
    Ok((out, mask))
}
