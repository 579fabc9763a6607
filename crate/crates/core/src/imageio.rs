//! 8-bit grayscale raster I/O: binary PGM (P5) and PNG.

use std::io::Cursor;
use std::path::Path;

use crate::error::{CoraxError, Result};
use crate::gaze::{BinaryMask, HeatmapFrame};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(CoraxError::Image(format!(
                "{} bytes for a {width}x{height} raster",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_frame(frame: &HeatmapFrame) -> Self {
        GrayImage {
            width: frame.width,
            height: frame.height,
            pixels: frame.to_gray8(),
        }
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        GrayImage {
            width: mask.width,
            height: mask.height,
            pixels: mask.to_gray8(),
        }
    }

    /// Intensities in [0, 1].
    pub fn to_frame(&self) -> HeatmapFrame {
        HeatmapFrame {
            width: self.width,
            height: self.height,
            values: self.pixels.iter().map(|p| *p as f64 / 255.0).collect(),
        }
    }

    /// Nonzero pixels.
    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|p| *p > 0).collect(),
        }
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode_pgm(bytes: &[u8]) -> Result<Self> {
        // header: magic, width, height, maxval; '#' comments allowed
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(CoraxError::Image("truncated PGM header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(CoraxError::Image(format!("expected P5, found {}", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| CoraxError::Image(format!("bad PGM header field `{s}`")))
        };
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(CoraxError::Image(format!("only 8-bit PGM supported, maxval {maxval}")));
        }
        // single whitespace byte after maxval
        let data = bytes
            .get(pos + 1..pos + 1 + width * height)
            .ok_or_else(|| CoraxError::Image("truncated PGM raster".into()))?;
        GrayImage::new(width, height, data.to_vec())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .ok_or_else(|| CoraxError::Image("raster size mismatch".into()))?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| CoraxError::Image(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| CoraxError::Image(e.to_string()))?
            .into_luma8();
        let (w, h) = img.dimensions();
        GrayImage::new(w as usize, h as usize, img.into_raw())
    }

    /// Detects PGM by its magic, PNG otherwise.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(b"P5") {
            Self::decode_pgm(bytes)
        } else {
            Self::decode_png(bytes)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    /// Format chosen by extension: `.pgm` or `.png`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => self.encode_pgm(),
            Some("png") => self.encode_png()?,
            other => {
                return Err(CoraxError::Image(format!("unsupported extension {other:?}")));
            }
        };
        std::fs::write(path, bytes)?;
        Ok(())
    }
}
