//! Raw hyperspectral cube I/O and value normalization.
//!
//! Cubes live in memory in band-sequential order: all of band 0 in row-major
//! spatial order, then band 1, and so on. On-disk interleave is only handled
//! while reading and writing.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk band interleave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Interleave {
    #[serde(rename = "BSQ", alias = "bsq")]
    Bsq,
    #[serde(rename = "BIL", alias = "bil")]
    Bil,
    #[serde(rename = "BIP", alias = "bip")]
    Bip,
}

impl Interleave {
    pub const ALL: [Interleave; 3] = [Interleave::Bsq, Interleave::Bil, Interleave::Bip];

    pub fn code(self) -> u8 {
        match self {
            Interleave::Bsq => 0,
            Interleave::Bil => 1,
            Interleave::Bip => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Interleave::Bsq),
            1 => Some(Interleave::Bil),
            2 => Some(Interleave::Bip),
            _ => None,
        }
    }

    /// Position of sample (band, row, col) in a file with this interleave.
    #[inline]
    fn file_index(self, h: &CubeHeader, band: usize, row: usize, col: usize) -> usize {
        match self {
            Interleave::Bsq => (band * h.height + row) * h.width + col,
            Interleave::Bil => (row * h.bands + band) * h.width + col,
            Interleave::Bip => (row * h.width + col) * h.bands + band,
        }
    }
}

impl fmt::Display for Interleave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interleave::Bsq => "BSQ",
            Interleave::Bil => "BIL",
            Interleave::Bip => "BIP",
        })
    }
}

impl FromStr for Interleave {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bsq" => Ok(Interleave::Bsq),
            "bil" => Ok(Interleave::Bil),
            "bip" => Ok(Interleave::Bip),
            other => Err(Error::InvalidHeader(format!(
                "unknown interleave {other:?}"
            ))),
        }
    }
}

/// Sample encoding. Multi-byte formats are always little-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    U8,
    U16le,
    F32le,
    F64le,
}

impl SampleFormat {
    pub fn bytes_per_sample(self) -> usize {
        match self {
            SampleFormat::U8 => 1,
            SampleFormat::U16le => 2,
            SampleFormat::F32le => 4,
            SampleFormat::F64le => 8,
        }
    }

    fn decode(self, bytes: &[u8]) -> f64 {
        match self {
            SampleFormat::U8 => bytes[0] as f64,
            SampleFormat::U16le => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            SampleFormat::F32le => f32::from_le_bytes(bytes.try_into().unwrap()) as f64,
            SampleFormat::F64le => f64::from_le_bytes(bytes.try_into().unwrap()),
        }
    }

    /// Integer formats clamp to their range and round half away from zero.
    fn encode(self, value: f64, out: &mut [u8]) {
        match self {
            SampleFormat::U8 => out[0] = value.clamp(0.0, u8::MAX as f64).round() as u8,
            SampleFormat::U16le => out
                .copy_from_slice(&(value.clamp(0.0, u16::MAX as f64).round() as u16).to_le_bytes()),
            SampleFormat::F32le => out.copy_from_slice(&(value as f32).to_le_bytes()),
            SampleFormat::F64le => out.copy_from_slice(&value.to_le_bytes()),
        }
    }
}

impl fmt::Display for SampleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleFormat::U8 => "u8",
            SampleFormat::U16le => "u16le",
            SampleFormat::F32le => "f32le",
            SampleFormat::F64le => "f64le",
        })
    }
}

impl FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u8" => Ok(SampleFormat::U8),
            "u16le" => Ok(SampleFormat::U16le),
            "f32le" => Ok(SampleFormat::F32le),
            "f64le" => Ok(SampleFormat::F64le),
            other => Err(Error::InvalidHeader(format!(
                "unknown sample format {other:?}"
            ))),
        }
    }
}

/// Geometry and encoding of a raw cube file; serialized as the JSON sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub interleave: Interleave,
    pub sample_format: SampleFormat,
}

impl CubeHeader {
    pub fn new(height: usize, width: usize, bands: usize) -> Self {
        CubeHeader {
            height,
            width,
            bands,
            interleave: Interleave::Bsq,
            sample_format: SampleFormat::F32le,
        }
    }

    pub fn with_format(mut self, interleave: Interleave, sample_format: SampleFormat) -> Self {
        self.interleave = interleave;
        self.sample_format = sample_format;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.bands == 0 {
            return Err(Error::InvalidHeader(format!(
                "dimensions must be positive, got {}x{}x{}",
                self.height, self.width, self.bands
            )));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn sample_count(&self) -> usize {
        self.height * self.width * self.bands
    }

    pub fn file_len(&self) -> u64 {
        self.sample_count() as u64 * self.sample_format.bytes_per_sample() as u64
    }

    pub fn same_dims(&self, other: &CubeHeader) -> bool {
        self.height == other.height && self.width == other.width && self.bands == other.bands
    }
}

/// Reads a JSON sidecar header.
pub fn read_header(path: impl AsRef<Path>) -> Result<CubeHeader> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: CubeHeader = serde_json::from_str(&text)
        .map_err(|e| Error::Sidecar(format!("{}: {e}", path.display())))?;
    header.validate()?;
    Ok(header)
}

pub fn write_header(header: &CubeHeader, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(header).expect("header serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Affine map from raw sample values to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub lo: f64,
    pub hi: f64,
}

impl NormParams {
    pub fn is_constant(&self) -> bool {
        self.hi == self.lo
    }

    #[inline]
    pub fn normalize(&self, raw: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (raw - self.lo) / (self.hi - self.lo)
        }
    }

    #[inline]
    pub fn denormalize(&self, v: f64) -> f64 {
        self.lo + v * (self.hi - self.lo)
    }
}

/// A hyperspectral image: `height x width x bands` samples in band-sequential order.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    pub header: CubeHeader,
    pub samples: Vec<f64>,
    /// Set once samples have been mapped to `[0, 1]`.
    pub norm: Option<NormParams>,
}

impl HyperCube {
    pub fn new(header: CubeHeader, samples: Vec<f64>) -> Result<Self> {
        header.validate()?;
        if samples.len() != header.sample_count() {
            return Err(Error::Dimension(format!(
                "{} samples for a {}x{}x{} cube",
                samples.len(),
                header.height,
                header.width,
                header.bands
            )));
        }
        Ok(HyperCube {
            header,
            samples,
            norm: None,
        })
    }

    pub fn height(&self) -> usize {
        self.header.height
    }

    pub fn width(&self) -> usize {
        self.header.width
    }

    pub fn bands(&self) -> usize {
        self.header.bands
    }

    #[inline]
    pub fn index(&self, band: usize, row: usize, col: usize) -> usize {
        (band * self.header.height + row) * self.header.width + col
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.samples[self.index(band, row, col)]
    }

    pub fn band(&self, band: usize) -> &[f64] {
        let n = self.header.pixels();
        &self.samples[band * n..(band + 1) * n]
    }

    /// Spectrum of one pixel.
    pub fn spectrum(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.bands()).map(|b| self.get(b, row, col)).collect()
    }

    /// Decodes raw file bytes laid out as `header` describes.
    pub fn from_bytes(bytes: &[u8], header: &CubeHeader) -> Result<Self> {
        header.validate()?;
        let expected = header.file_len();
        if bytes.len() as u64 != expected {
            return Err(Error::FileSize {
                expected,
                actual: bytes.len() as u64,
            });
        }
        let bps = header.sample_format.bytes_per_sample();
        let mut samples = Vec::with_capacity(header.sample_count());
        for band in 0..header.bands {
            for row in 0..header.height {
                for col in 0..header.width {
                    let at = header.interleave.file_index(header, band, row, col) * bps;
                    samples.push(header.sample_format.decode(&bytes[at..at + bps]));
                }
            }
        }
        Ok(HyperCube {
            header: *header,
            samples,
            norm: None,
        })
    }

    /// Encodes the samples with the layout and sample format of `header`.
    pub fn to_bytes(&self, header: &CubeHeader) -> Result<Vec<u8>> {
        header.validate()?;
        if !self.header.same_dims(header) {
            return Err(Error::Dimension(format!(
                "cube is {}x{}x{} but header says {}x{}x{}",
                self.height(),
                self.width(),
                self.bands(),
                header.height,
                header.width,
                header.bands
            )));
        }
        let bps = header.sample_format.bytes_per_sample();
        let mut out = vec![0u8; header.file_len() as usize];
        for band in 0..header.bands {
            for row in 0..header.height {
                for col in 0..header.width {
                    let at = header.interleave.file_index(header, band, row, col) * bps;
                    header
                        .sample_format
                        .encode(self.get(band, row, col), &mut out[at..at + bps]);
                }
            }
        }
        Ok(out)
    }
}

/// Reads a raw cube. Samples come back unnormalized in canonical order.
pub fn read_cube(path: impl AsRef<Path>, header: &CubeHeader) -> Result<HyperCube> {
    let path = path.as_ref();
    header.validate()?;
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.len() != header.file_len() {
        return Err(Error::FileSize {
            expected: header.file_len(),
            actual: meta.len(),
        });
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    HyperCube::from_bytes(&bytes, header)
}

pub fn write_cube(cube: &HyperCube, path: impl AsRef<Path>, header: &CubeHeader) -> Result<()> {
    let path = path.as_ref();
    let bytes = cube.to_bytes(header)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Global min-max scaling to `[0, 1]`. A constant cube maps to all zeros.
pub fn normalize(mut cube: HyperCube) -> Result<HyperCube> {
    if let Some(i) = cube.samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let lo = cube.samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cube
        .samples
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let norm = NormParams { lo, hi };
    for v in &mut cube.samples {
        // clamp absorbs rounding at the endpoints
        *v = norm.normalize(*v).clamp(0.0, 1.0);
    }
    cube.norm = Some(norm);
    Ok(cube)
}

/// Maps normalized samples back to the raw scale recorded in `cube.norm`.
pub fn denormalize(cube: HyperCube) -> Result<HyperCube> {
    let norm = cube.norm.ok_or(Error::MissingNorm)?;
    Ok(denormalize_with(cube, norm))
}

pub fn denormalize_with(mut cube: HyperCube, norm: NormParams) -> HyperCube {
    for v in &mut cube.samples {
        *v = norm.denormalize(*v);
    }
    cube.norm = None;
    cube
}
