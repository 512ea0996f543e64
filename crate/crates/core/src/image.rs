//! Frames and binary PPM (P6) images.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::TensorF32;

/// One image from the input stream. `image` is `[H, W, 3]` with values in
/// `[0, 1]`; it is shared so identical frames need not be copied.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub seq_id: u64,
    pub image: Arc<TensorF32>,
    pub ingest_ns: u64,
}

impl Frame {
    pub fn new(seq_id: u64, image: impl Into<Arc<TensorF32>>, ingest_ns: u64) -> Result<Self> {
        let image = image.into();
        image_extents(&image)?;
        Ok(Self {
            seq_id,
            image,
            ingest_ns,
        })
    }

    pub fn height(&self) -> u32 {
        self.image.dims()[0]
    }

    pub fn width(&self) -> u32 {
        self.image.dims()[1]
    }
}

/// `(height, width)` of an `[H, W, 3]` image tensor.
pub fn image_extents(image: &TensorF32) -> Result<(u32, u32)> {
    match image.dims() {
        &[h, w, 3] if h >= 1 && w >= 1 => Ok((h, w)),
        dims => Err(Error::Contract(format!(
            "expected image dims [H>=1, W>=1, 3], got {dims:?}"
        ))),
    }
}

pub fn read_ppm<R: Read>(mut source: R) -> Result<TensorF32> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("reading PPM", e))?;
    parse_ppm(&bytes)
}

fn parse_ppm(bytes: &[u8]) -> Result<TensorF32> {
    let mut header = HeaderCursor { bytes, pos: 0 };
    let magic = header.token()?;
    if magic != b"P6" {
        return Err(Error::Format(format!(
            "unsupported PPM magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PPM maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty PPM image {width}x{height}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(Error::Format("missing whitespace after PPM header".into())),
    }
    let n = (width as usize)
        .checked_mul(height as usize)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| Error::Format("PPM extents overflow".into()))?;
    let raster = &bytes[header.pos..];
    if raster.len() < n {
        return Err(Error::Format(format!(
            "short PPM payload: expected {n} bytes, got {}",
            raster.len()
        )));
    }
    let data = raster[..n].iter().map(|&b| f32::from(b) / 255.0).collect();
    TensorF32::new(vec![height, width, 3], data)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated PPM header".into()));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("invalid PPM {what}")))
    }
}

/// Encode one `[0, 1]` value as a byte: `round(v * 255)`, half away from zero, clamped.
pub fn encode_channel(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn write_ppm<W: Write>(image: &TensorF32, mut sink: W) -> Result<u64> {
    let (h, w) = image_extents(image)?;
    let header = format!("P6\n{w} {h}\n255\n");
    let payload: Vec<u8> = image.data().iter().map(|&v| encode_channel(v)).collect();
    sink.write_all(header.as_bytes())
        .and_then(|_| sink.write_all(&payload))
        .map_err(|e| Error::io("writing PPM", e))?;
    Ok((header.len() + payload.len()) as u64)
}

pub fn read_ppm_file(path: &Path) -> Result<TensorF32> {
    let bytes = std::fs::read(path).map_err(|e| Error::io_path(path, e))?;
    parse_ppm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_ppm_file(path: &Path, image: &TensorF32) -> Result<u64> {
    let file = File::create(path).map_err(|e| Error::io_path(path, e))?;
    let mut w = BufWriter::new(file);
    let n = write_ppm(image, &mut w)?;
    w.flush().map_err(|e| Error::io_path(path, e))?;
    Ok(n)
}
