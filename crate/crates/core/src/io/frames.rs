//! Frame images: 8-bit PGM/PPM and the raw `GRY1` float format.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::flow::GrayImage;
use crate::smoothing::FrameSource;

pub const GRAY_MAGIC: &[u8; 4] = b"GRY1";

/// `GRY1`, `u32` height, `u32` width, then `H×W` little-endian `f32`.
pub fn encode_gray_raw(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * img.data().len());
    out.extend_from_slice(GRAY_MAGIC);
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    for v in img.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_gray_raw(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 12 || &bytes[..4] != GRAY_MAGIC {
        return Err(Error::invalid("not a GRY1 image"));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    if Some(payload.len()) != h.checked_mul(w).and_then(|n| n.checked_mul(4)) {
        return Err(Error::invalid(format!("GRY1 payload does not hold {h}×{w} pixels")));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    GrayImage::new(w, h, data)
}

fn decode_pnm(path: &Path, bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// Reads a frame as grayscale. Color frames are converted with luma weights.
pub fn read_frame(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(GRAY_MAGIC) {
        return decode_gray_raw(&bytes);
    }
    match decode_pnm(path, &bytes)? {
        DynamicImage::ImageLuma8(g) => GrayImage::from_gray8(g.width() as usize, g.height() as usize, g.as_raw()),
        other => {
            let rgb = other.to_rgb8();
            GrayImage::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
        }
    }
}

/// Reads a frame as 8-bit RGB, expanding gray frames.
pub fn read_frame_rgb(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(GRAY_MAGIC) {
        return Ok(gray_to_rgb(&decode_gray_raw(&bytes)?));
    }
    Ok(decode_pnm(path, &bytes)?.to_rgb8())
}

pub fn gray_to_rgb(img: &GrayImage) -> RgbImage {
    let g = img.to_gray8();
    let raw: Vec<u8> = g.iter().flat_map(|&v| [v, v, v]).collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer matches dimensions")
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

/// Binary PGM (P5).
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    ensure_parent(path)?;
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_gray8());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Binary PPM (P6).
pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    ensure_parent(path)?;
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_raw());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_gray_raw(path: &Path, img: &GrayImage) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, encode_gray_raw(img)).map_err(|e| Error::io(path, e))
}

/// Frames stored as `<dir>/<index:06>.{pgm,ppm,gry}`.
#[derive(Debug, Clone)]
pub struct FrameDir {
    dir: PathBuf,
}

impl FrameDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FrameDir { dir: dir.into() }
    }

    pub fn file_name(index: usize) -> String {
        format!("{index:06}.pgm")
    }

    pub fn path(&self, index: usize) -> Option<PathBuf> {
        ["pgm", "ppm", "gry"]
            .iter()
            .map(|ext| self.dir.join(format!("{index:06}.{ext}")))
            .find(|p| p.is_file())
    }
}

impl FrameSource for FrameDir {
    fn frame(&self, index: usize) -> Result<GrayImage> {
        let path = self.path(index).ok_or_else(|| {
            Error::MissingInput(format!("frame {index} not found in {}", self.dir.display()))
        })?;
        read_frame(&path)
    }
}
