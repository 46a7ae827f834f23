//! Deterministic rasterization of scenes onto the 32x32 canvas, plus the
//! binary P6 pixmap encoding used on disk.

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::{Error, Result};

use super::scene::{SceneObject, SceneSpec, ShapeClass, Size, CELL_PX, CHANNELS, IMAGE_H, IMAGE_W};

pub const BACKGROUND: [f64; 3] = [0.10, 0.10, 0.10];

/// Pixel offsets of a shape's footprint relative to its cell's anchor pixel
/// (the 5th pixel of the 8x8 cell in both axes). Every footprint stays
/// strictly inside its cell, so objects never overlap.
pub fn footprint(shape: ShapeClass, size: Size) -> Vec<(i32, i32)> {
    let mut px = Vec::new();
    match shape {
        ShapeClass::Circle => {
            let r = match size {
                Size::Small => 2.0_f64,
                Size::Large => 3.0,
            };
            let reach = r as i32;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    if (dy * dy + dx * dx) as f64 <= r * r {
                        px.push((dy, dx));
                    }
                }
            }
        }
        ShapeClass::Square => {
            let half = match size {
                Size::Small => 2,
                Size::Large => 3,
            };
            for dy in -half..half {
                for dx in -half..half {
                    px.push((dy, dx));
                }
            }
        }
        ShapeClass::Triangle => {
            let last_row = match size {
                Size::Small => 1,
                Size::Large => 2,
            };
            for dy in -1..=last_row {
                for dx in -(dy + 1)..=(dy + 1) {
                    px.push((dy, dx));
                }
            }
        }
    }
    px
}

/// Nominal pixel area of each (shape, size) footprint. The renderer must
/// reproduce these exactly; tests enumerate the footprints independently.
pub fn nominal_area(shape: ShapeClass, size: Size) -> usize {
    match (shape, size) {
        (ShapeClass::Circle, Size::Small) => 13,
        (ShapeClass::Circle, Size::Large) => 29,
        (ShapeClass::Square, Size::Small) => 16,
        (ShapeClass::Square, Size::Large) => 36,
        (ShapeClass::Triangle, Size::Small) => 9,
        (ShapeClass::Triangle, Size::Large) => 16,
    }
}

fn anchor(obj: &SceneObject) -> (i32, i32) {
    let (row, col) = obj.grid_pos();
    ((row * CELL_PX + CELL_PX / 2) as i32, (col * CELL_PX + CELL_PX / 2) as i32)
}

/// Render a scene to a [32, 32, 3] tensor with values in [0, 1].
pub fn render(scene: &SceneSpec) -> Tensor {
    let mut data = Vec::with_capacity(IMAGE_H * IMAGE_W * CHANNELS);
    for _ in 0..IMAGE_H * IMAGE_W {
        data.extend_from_slice(&BACKGROUND);
    }
    for obj in scene.objects() {
        let (ay, ax) = anchor(obj);
        let rgb = obj.color.rgb();
        for (dy, dx) in footprint(obj.shape, obj.size) {
            let (y, x) = ((ay + dy) as usize, (ax + dx) as usize);
            let base = (y * IMAGE_W + x) * CHANNELS;
            data[base..base + 3].copy_from_slice(&rgb);
        }
    }
    Tensor::new(vec![IMAGE_H, IMAGE_W, CHANNELS], data).expect("renderer output is well-formed")
}

/// Ground-truth bounding box of one object, (cx, cy, w, h) normalized to the
/// unit square. Pixel p spans [p, p+1)/32.
pub fn object_box(obj: &SceneObject) -> (f64, f64, f64, f64) {
    let fp = footprint(obj.shape, obj.size);
    let (ay, ax) = anchor(obj);
    let min_y = fp.iter().map(|&(dy, _)| ay + dy).min().unwrap() as f64;
    let max_y = fp.iter().map(|&(dy, _)| ay + dy).max().unwrap() as f64;
    let min_x = fp.iter().map(|&(_, dx)| ax + dx).min().unwrap() as f64;
    let max_x = fp.iter().map(|&(_, dx)| ax + dx).max().unwrap() as f64;
    let h = (max_y + 1.0 - min_y) / IMAGE_H as f64;
    let w = (max_x + 1.0 - min_x) / IMAGE_W as f64;
    let cy = (min_y + max_y + 1.0) / 2.0 / IMAGE_H as f64;
    let cx = (min_x + max_x + 1.0) / 2.0 / IMAGE_W as f64;
    (cx, cy, w, h)
}

/// Encode an image tensor as a binary P6 pixmap (maxval 255).
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    if image.shape() != [IMAGE_H, IMAGE_W, CHANNELS] {
        return Err(Error::Shape {
            op: "encode_ppm",
            detail: format!("expected [{IMAGE_H}, {IMAGE_W}, {CHANNELS}], got {:?}", image.shape()),
        });
    }
    let mut bytes = format!("P6\n{IMAGE_W} {IMAGE_H}\n255\n").into_bytes();
    bytes.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(bytes)
}

pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    fs::write(path, encode_ppm(image)?)?;
    Ok(())
}

/// Decode a P6 pixmap produced by [`encode_ppm`] back to a [0, 1] tensor.
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    decode_ppm(&bytes).map_err(|reason| Error::Manifest(format!("{}: {reason}", path.display())))
}

fn decode_ppm(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let header_end = bytes
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .ok_or("truncated P6 header")?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|e| e.to_string())?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("P6") {
        return Err("not a P6 pixmap".into());
    }
    let w: usize = fields.next().ok_or("missing width")?.parse().map_err(|_| "bad width")?;
    let h: usize = fields.next().ok_or("missing height")?.parse().map_err(|_| "bad height")?;
    let maxval: usize = fields.next().ok_or("missing maxval")?.parse().map_err(|_| "bad maxval")?;
    if (w, h, maxval) != (IMAGE_W, IMAGE_H, 255) {
        return Err(format!("unsupported pixmap {w}x{h} maxval {maxval}"));
    }
    let pixels = &bytes[header_end + 1..];
    if pixels.len() != IMAGE_H * IMAGE_W * CHANNELS {
        return Err(format!("expected {} pixel bytes, got {}", IMAGE_H * IMAGE_W * 3, pixels.len()));
    }
    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(vec![IMAGE_H, IMAGE_W, CHANNELS], data).map_err(|e| e.to_string())
}
