//! Binary netpbm: P5 (greymap) and P6 (RGB pixmap).
//!
//! Greymaps are written with maxval 65535, two bytes per sample, most
//! significant byte first. Reading accepts any maxval up to 65535.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::raster::FeatureRaster;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PnmHeader {
    pub magic: [u8; 2],
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
}

fn next_byte<R: Read>(r: &mut R) -> Result<Option<u8>> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(None),
        _ => Ok(Some(b[0])),
    }
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
/// Consumes exactly one whitespace byte after the token.
fn token<R: Read>(r: &mut R) -> Result<u32> {
    let mut digits = Vec::new();
    loop {
        let b = next_byte(r)?
            .ok_or_else(|| Error::TruncatedFile("end of file inside header".into()))?;
        match b {
            b'#' if digits.is_empty() => {
                while !matches!(next_byte(r)?, Some(b'\n') | None) {}
            }
            b if b.is_ascii_whitespace() => {
                if !digits.is_empty() {
                    break;
                }
            }
            b'0'..=b'9' => digits.push(b),
            other => {
                return Err(Error::Format(format!(
                    "unexpected byte {other:#04x} in header"
                )))
            }
        }
    }
    std::str::from_utf8(&digits)
        .expect("ascii digits")
        .parse()
        .map_err(|_| Error::Format("header value out of range".into()))
}

pub fn read_header<R: Read>(r: &mut R) -> Result<PnmHeader> {
    let mut magic = [0u8; 2];
    r.read_exact(&mut magic).map_err(|_| Error::BadMagic)?;
    if magic[0] != b'P' || !matches!(magic[1], b'5' | b'6') {
        return Err(Error::BadMagic);
    }
    let width = token(r)? as usize;
    let height = token(r)? as usize;
    let maxval = token(r)?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval} outside 1..=65535")));
    }
    Ok(PnmHeader {
        magic,
        width,
        height,
        maxval,
    })
}

fn read_samples<R: Read>(r: &mut R, count: usize, maxval: u32) -> Result<Vec<u16>> {
    let wide = maxval > 255;
    let mut buf = vec![0u8; count * if wide { 2 } else { 1 }];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::TruncatedFile(format!("expected {} sample bytes", buf.len()))
        }
        _ => Error::Io(e),
    })?;
    let samples: Vec<u16> = if wide {
        buf.chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        buf.into_iter().map(u16::from).collect()
    };
    if let Some(s) = samples.iter().find(|&&s| u32::from(s) > maxval) {
        return Err(Error::Format(format!("sample {s} exceeds maxval {maxval}")));
    }
    Ok(samples)
}

/// Greymap as `(width, height, samples)`.
pub fn read_pgm<R: BufRead>(mut r: R) -> Result<(usize, usize, Vec<u16>)> {
    let h = read_header(&mut r)?;
    if h.magic != *b"P5" {
        return Err(Error::BadMagic);
    }
    let samples = read_samples(&mut r, h.width * h.height, h.maxval)?;
    Ok((h.width, h.height, samples))
}

/// 16-bit greymap with maxval 65535.
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    if samples.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{} samples for a {width}x{height} greymap",
            samples.len()
        )));
    }
    write!(w, "P5\n{width} {height}\n65535\n")?;
    let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// RGB pixmap as a three-band raster with values in `0..=maxval`.
pub fn read_ppm<R: BufRead>(mut r: R) -> Result<FeatureRaster> {
    let h = read_header(&mut r)?;
    if h.magic != *b"P6" {
        return Err(Error::BadMagic);
    }
    let samples = read_samples(&mut r, 3 * h.width * h.height, h.maxval)?;
    FeatureRaster::new(
        h.height,
        h.width,
        3,
        samples.into_iter().map(f64::from).collect(),
    )
}

/// 8-bit RGB pixmap. Values are rounded and clamped to `0..=255`.
pub fn write_ppm<W: Write>(mut w: W, raster: &FeatureRaster) -> Result<()> {
    if raster.bands() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "PPM needs 3 bands, raster has {}",
            raster.bands()
        )));
    }
    write!(w, "P6\n{} {}\n255\n", raster.width(), raster.height())?;
    let bytes: Vec<u8> = raster
        .values()
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
