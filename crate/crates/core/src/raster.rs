//! Grayscale and binary rasters with PGM/PNG I/O.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Intensity image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f32) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Loads an 8- or 16-bit PGM (P5/P2) or a PNG, normalizing to [0, 1].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
            let pgm = Pgm::decode(&bytes).map_err(|m| Error::format(path, m))?;
            let scale = 1.0 / pgm.maxval as f32;
            return Ok(GrayImage {
                width: pgm.width,
                height: pgm.height,
                data: pgm.samples.iter().map(|&v| v as f32 * scale).collect(),
            });
        }
        let img = image::load_from_memory(&bytes)
            .map_err(|e| Error::format(path, e.to_string()))?
            .into_luma16();
        let (width, height) = img.dimensions();
        Ok(GrayImage {
            width,
            height,
            data: img.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        })
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let samples: Vec<u16> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u16)
            .collect();
        let bytes = Pgm {
            width: self.width,
            height: self.height,
            maxval: 255,
            samples,
        }
        .encode();
        write_file(path.as_ref(), &bytes)
    }
}

/// Binary map (edges, boundaries, activity).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl BinaryMap {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMap {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = self.index(x, y);
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Nonzero pixels of a grayscale image.
    pub fn from_gray(img: &GrayImage, threshold: f32) -> Self {
        BinaryMap {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        Pgm {
            width: self.width,
            height: self.height,
            maxval: 255,
            samples: self.data.iter().map(|&v| if v { 255 } else { 0 }).collect(),
        }
        .encode()
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_pgm_bytes())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let raw: Vec<u8> = self.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
        save_png_luma(path.as_ref(), self.width, self.height, raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_gray(&GrayImage::load(path)?, 0.5))
    }
}

/// Netpbm graymap. Samples are stored widened to u16 regardless of maxval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: u32,
    pub height: u32,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pgm {
    /// Binary P5 encoding; 16-bit samples are big-endian when maxval > 255.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            out.reserve(self.samples.len() * 2);
            for s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0usize;
        let mut header = Vec::with_capacity(4);
        while header.len() < 4 {
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
                return Err("truncated PGM header".into());
            }
            header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        let magic = header[0].as_str();
        let num = |s: &str| s.parse::<u32>().map_err(|_| format!("bad PGM header field {s:?}"));
        let width = num(&header[1])?;
        let height = num(&header[2])?;
        let maxval = num(&header[3])?;
        if maxval == 0 || maxval > 65535 {
            return Err(format!("PGM maxval {maxval} out of range"));
        }
        let n = width as usize * height as usize;
        let samples = match magic {
            "P5" => {
                pos += 1;
                let body = bytes.get(pos..).unwrap_or(&[]);
                if maxval > 255 {
                    if body.len() < 2 * n {
                        return Err("truncated PGM raster".into());
                    }
                    body.chunks_exact(2)
                        .take(n)
                        .map(|c| u16::from_be_bytes([c[0], c[1]]))
                        .collect()
                } else {
                    if body.len() < n {
                        return Err("truncated PGM raster".into());
                    }
                    body[..n].iter().map(|&b| b as u16).collect()
                }
            }
            "P2" => {
                let text = String::from_utf8_lossy(&bytes[pos..]);
                let vals: std::result::Result<Vec<u16>, _> =
                    text.split_whitespace().take(n).map(str::parse::<u16>).collect();
                let vals = vals.map_err(|_| "bad P2 sample".to_string())?;
                if vals.len() < n {
                    return Err("truncated PGM raster".into());
                }
                vals
            }
            other => return Err(format!("unsupported magic {other:?}")),
        };
        Ok(Pgm {
            width,
            height,
            maxval: maxval as u16,
            samples,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Pgm::decode(&bytes).map_err(|m| Error::format(path, m))
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn save_png_luma(path: &Path, width: u32, height: u32, raw: Vec<u8>) -> Result<()> {
    let img = image::GrayImage::from_raw(width, height, raw)
        .ok_or_else(|| Error::format(path, "raster size mismatch"))?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub(crate) fn save_png_rgb(path: &Path, width: u32, height: u32, raw: Vec<u8>) -> Result<()> {
    let img = image::RgbImage::from_raw(width, height, raw)
        .ok_or_else(|| Error::format(path, "raster size mismatch"))?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// HSV to RGB with s = v = 1 scaling applied by the caller; `hue` in [0, 1).
pub fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [u8; 3] {
    let h = hue.rem_euclid(1.0) * 6.0;
    let i = h.floor() as i32;
    let f = h - i as f64;
    let p = val * (1.0 - sat);
    let q = val * (1.0 - sat * f);
    let t = val * (1.0 - sat * (1.0 - f));
    let (r, g, b) = match i {
        0 => (val, t, p),
        1 => (q, val, p),
        2 => (p, val, t),
        3 => (p, q, val),
        4 => (t, p, val),
        _ => (val, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}
