//! `.flo` files, reference sidecars and image files.
//!
//! A `.flo` file is the magic float 202021.25 (bytes `PIEH`), the width and
//! height as `i32`, then `height * width` pairs of `f32` `(u, v)` in row-major
//! order, all little-endian. Invalid cells are written as the sentinel 1e9 in
//! both channels; on reading, any cell with a component of magnitude 1e9 or
//! more, or a NaN, is invalid.
//!
//! The reference is not part of the format. [`save_flow`] writes it to a
//! sidecar with the same path and extension `.ref` holding `s` or `t`;
//! [`load_flow`] reads it back when present.

use std::fs;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use image::{DynamicImage, GrayImage, RgbImage};
use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use crate::error::{FlowError, Result};
use crate::field::{check_finite, FlowField, Reference, ValidityMask};

pub const FLO_MAGIC: f32 = 202021.25;
/// Written for invalid cells.
pub const FLO_INVALID: f32 = 1e9;
/// Largest accepted width or height.
pub const FLO_MAX_DIM: i32 = 65535;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FlowError + '_ {
    move |source| FlowError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Encodes a field as `.flo` bytes. Vectors are rounded to `f32`.
pub fn encode_flo(f: &FlowField) -> Result<Vec<u8>> {
    check_finite(f.vectors(), f.mask())?;
    let (h, w) = f.shape();
    if h > FLO_MAX_DIM as usize || w > FLO_MAX_DIM as usize {
        return Err(FlowError::BadDimensions {
            width: w.min(i32::MAX as usize) as i32,
            height: h.min(i32::MAX as usize) as i32,
        });
    }
    let mut out = Vec::with_capacity(12 + 8 * h * w);
    out.write_f32::<LittleEndian>(FLO_MAGIC).expect("write to Vec");
    out.write_i32::<LittleEndian>(w as i32).expect("write to Vec");
    out.write_i32::<LittleEndian>(h as i32).expect("write to Vec");
    let v = f.vectors();
    for r in 0..h {
        for c in 0..w {
            let (u, vv) = if f.is_valid(r, c) {
                (v[[r, c, 0]] as f32, v[[r, c, 1]] as f32)
            } else {
                (FLO_INVALID, FLO_INVALID)
            };
            out.write_f32::<LittleEndian>(u).expect("write to Vec");
            out.write_f32::<LittleEndian>(vv).expect("write to Vec");
        }
    }
    Ok(out)
}

/// Decodes `.flo` bytes with the given reference.
pub fn decode_flo(bytes: &[u8], reference: Reference) -> Result<FlowField> {
    let mut cur = Cursor::new(bytes);
    let short = |what: &str| FlowError::Truncated(format!("{} bytes, missing {what}", bytes.len()));
    let magic = cur.read_f32::<LittleEndian>().map_err(|_| short("header"))?;
    if magic != FLO_MAGIC {
        return Err(FlowError::BadMagic(magic));
    }
    let width = cur.read_i32::<LittleEndian>().map_err(|_| short("width"))?;
    let height = cur.read_i32::<LittleEndian>().map_err(|_| short("height"))?;
    if width <= 0 || height <= 0 || width > FLO_MAX_DIM || height > FLO_MAX_DIM {
        return Err(FlowError::BadDimensions { width, height });
    }
    let (w, h) = (width as usize, height as usize);
    let need = 12 + 8 * w * h;
    if bytes.len() < need {
        return Err(FlowError::Truncated(format!(
            "{} bytes, {width}x{height} needs {need}",
            bytes.len()
        )));
    }
    let mut raw = vec![0f32; 2 * w * h];
    cur.read_f32_into::<LittleEndian>(&mut raw).map_err(|_| short("data"))?;
    let mut vectors = Array3::zeros((h, w, 2));
    let mut mask = Array2::from_elem((h, w), true);
    for (i, pair) in raw.chunks_exact(2).enumerate() {
        let (r, c) = (i / w, i % w);
        let invalid = pair.iter().any(|x| x.is_nan() || x.abs() >= FLO_INVALID);
        if invalid {
            mask[[r, c]] = false;
        } else {
            vectors[[r, c, 0]] = pair[0] as f64;
            vectors[[r, c, 1]] = pair[1] as f64;
        }
    }
    FlowField::new(vectors, reference, Some(mask))
}

/// Reads a `.flo` file; the reference defaults to source.
pub fn read_flo(path: impl AsRef<Path>, reference: Option<Reference>) -> Result<FlowField> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    decode_flo(&bytes, reference.unwrap_or(Reference::Source))
}

/// Writes a `.flo` file.
pub fn write_flo(path: impl AsRef<Path>, f: &FlowField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flo(f)?).map_err(io_err(path))
}

/// `flow.flo` -> `flow.ref`.
pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    path.as_ref().with_extension("ref")
}

/// Reads the sidecar of `path` if it exists.
pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Option<Reference>> {
    let side = sidecar_path(path);
    match fs::read_to_string(&side) {
        Ok(text) => text.trim().parse().map(Some).map_err(|_| FlowError::Format {
            path: side,
            message: format!("expected `s` or `t`, found `{}`", text.trim()),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(FlowError::Io { path: side, source: e }),
    }
}

pub fn write_sidecar(path: impl AsRef<Path>, reference: Reference) -> Result<()> {
    let side = sidecar_path(path);
    fs::write(&side, format!("{reference}\n")).map_err(|source| FlowError::Io { path: side, source })
}

/// Reads a flow with its reference taken from `reference`, else the
/// sidecar, else source.
pub fn load_flow(path: impl AsRef<Path>, reference: Option<Reference>) -> Result<FlowField> {
    let path = path.as_ref();
    let reference = match reference {
        Some(r) => r,
        None => read_sidecar(path)?.unwrap_or(Reference::Source),
    };
    read_flo(path, Some(reference))
}

/// Writes a flow and its reference sidecar.
pub fn save_flow(path: impl AsRef<Path>, f: &FlowField) -> Result<()> {
    let path = path.as_ref();
    write_flo(path, f)?;
    write_sidecar(path, f.reference())
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> FlowError + '_ {
    move |source| FlowError::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Saves an RGB image; the format follows the extension (`.ppm`, `.png`).
pub fn write_image(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    img.save(path).map_err(image_err(path))
}

/// Saves a mask as a grayscale image, 255 where valid.
pub fn write_mask(path: impl AsRef<Path>, mask: &ValidityMask) -> Result<()> {
    let path = path.as_ref();
    crate::viz::render_mask(mask).save(path).map_err(image_err(path))
}

/// Loads an image as `(H, W, C)` data: one channel for grayscale files,
/// three otherwise (alpha is dropped).
pub fn read_image(path: impl AsRef<Path>) -> Result<Array3<f64>> {
    let path = path.as_ref();
    let img = image::open(path).map_err(image_err(path))?;
    let gray = matches!(img, DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_));
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(if gray {
        let g = img.to_luma8();
        Array3::from_shape_fn((h, w, 1), |(r, c, _)| g.get_pixel(c as u32, r as u32).0[0] as f64)
    } else {
        let rgb = img.to_rgb8();
        Array3::from_shape_fn((h, w, 3), |(r, c, k)| rgb.get_pixel(c as u32, r as u32).0[k] as f64)
    })
}

/// Loads an image as 8-bit RGB.
pub fn read_rgb_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    Ok(image::open(path).map_err(image_err(path))?.to_rgb8())
}

/// Saves one- or three-channel data as an 8-bit image, rounding and clamping
/// values to `0..=255`. Cells outside `mask` are black.
pub fn write_data_image(
    path: impl AsRef<Path>,
    data: ArrayView3<'_, f64>,
    mask: Option<ArrayView2<'_, bool>>,
) -> Result<()> {
    let path = path.as_ref();
    let (h, w, c) = data.dim();
    let q = |r: u32, col: u32, k: usize| -> u8 {
        let (r, col) = (r as usize, col as usize);
        if mask.as_ref().is_some_and(|m| !m[[r, col]]) {
            0
        } else {
            data[[r, col, k]].round().clamp(0.0, 255.0) as u8
        }
    };
    let saved = match c {
        1 => GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([q(y, x, 0)])).save(path),
        3 => RgbImage::from_fn(w as u32, h as u32, |x, y| image::Rgb([q(y, x, 0), q(y, x, 1), q(y, x, 2)])).save(path),
        _ => {
            return Err(FlowError::InvalidArgument(format!(
                "cannot save {c}-channel data as an image"
            )))
        }
    };
    saved.map_err(image_err(path))
}
