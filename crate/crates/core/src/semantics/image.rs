//! Binary netpbm I/O: P5 graymaps for semantic maps (pixel value = label
//! id) and P6 pixmaps for renders. Round trips are byte-exact.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::SemanticsError;

/// An 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize) -> RgbImage {
        RgbImage { height, width, data: vec![0; height * width * 3] }
    }

    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<RgbImage, SemanticsError> {
        if data.len() != height * width * 3 {
            return Err(SemanticsError::SizeMismatch(format!(
                "{height}x{width} rgb image needs {} bytes, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(RgbImage { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Normalize to a flat [3,H,W] channel-major f64 buffer in [0,1].
    pub fn to_channels(&self) -> Vec<f64> {
        let npix = self.height * self.width;
        let mut out = vec![0.0; 3 * npix];
        for px in 0..npix {
            for c in 0..3 {
                out[c * npix + px] = self.data[px * 3 + c] as f64 / 255.0;
            }
        }
        out
    }
}

fn split_header(bytes: &[u8], what: &'static str) -> Result<(usize, usize, usize), SemanticsError> {
    // magic, width, height, maxval separated by single whitespace, then raster
    let mut fields = Vec::new();
    let mut pos = 0;
    let mut start = None;
    while pos < bytes.len() && fields.len() < 4 {
        let b = bytes[pos];
        if b.is_ascii_whitespace() {
            if let Some(s) = start.take() {
                fields.push((s, pos));
            }
        } else if start.is_none() {
            start = Some(pos);
        }
        pos += 1;
    }
    if fields.len() < 4 {
        return Err(SemanticsError::Format { what, detail: "truncated header".into() });
    }
    let field = |i: usize| std::str::from_utf8(&bytes[fields[i].0..fields[i].1]).unwrap_or("");
    let width: usize = field(1)
        .parse()
        .map_err(|_| SemanticsError::Format { what, detail: format!("bad width {:?}", field(1)) })?;
    let height: usize = field(2)
        .parse()
        .map_err(|_| SemanticsError::Format { what, detail: format!("bad height {:?}", field(2)) })?;
    let maxval: usize = field(3)
        .parse()
        .map_err(|_| SemanticsError::Format { what, detail: format!("bad maxval {:?}", field(3)) })?;
    if maxval != 255 {
        return Err(SemanticsError::Format { what, detail: format!("unsupported maxval {maxval}") });
    }
    // raster starts right after the single whitespace ending the maxval field
    Ok((width, height, fields[3].1 + 1))
}

/// Write an 8-bit graymap (one byte per pixel of `pixels`, row-major).
pub fn write_pgm(path: &Path, height: usize, width: usize, pixels: &[u8]) -> Result<(), SemanticsError> {
    if pixels.len() != height * width {
        return Err(SemanticsError::SizeMismatch(format!(
            "{height}x{width} graymap needs {} bytes, got {}",
            height * width,
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(32 + pixels.len());
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.extend_from_slice(pixels);
    fs::write(path, out)?;
    Ok(())
}

/// Read an 8-bit graymap; returns (height, width, pixels).
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>), SemanticsError> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(b"P5") {
        return Err(SemanticsError::Format { what: "pgm", detail: "missing P5 magic".into() });
    }
    let (width, height, raster) = split_header(&bytes, "pgm")?;
    let need = width * height;
    if bytes.len() < raster + need {
        return Err(SemanticsError::Format { what: "pgm", detail: "truncated raster".into() });
    }
    Ok((height, width, bytes[raster..raster + need].to_vec()))
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<(), SemanticsError> {
    let mut out = Vec::with_capacity(32 + image.data.len());
    write!(out, "P6\n{} {}\n255\n", image.width, image.height)?;
    out.extend_from_slice(&image.data);
    fs::write(path, out)?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<RgbImage, SemanticsError> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(b"P6") {
        return Err(SemanticsError::Format { what: "ppm", detail: "missing P6 magic".into() });
    }
    let (width, height, raster) = split_header(&bytes, "ppm")?;
    let need = width * height * 3;
    if bytes.len() < raster + need {
        return Err(SemanticsError::Format { what: "ppm", detail: "truncated raster".into() });
    }
    RgbImage::from_raw(height, width, bytes[raster..raster + need].to_vec())
}
