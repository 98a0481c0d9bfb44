//! Distortion and rate measures: MSE, PSNR and bits per pixel per band.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cube::HyperCube;
use crate::error::{Error, Result};

/// Mean squared difference over every sample of two equally-shaped cubes.
///
/// Averages over bands as well as pixels, so a cube gets a single figure.
pub fn mse(a: &HyperCube, b: &HyperCube) -> Result<f64> {
    if !a.header.same_dims(&b.header) {
        return Err(Error::Dimension(format!(
            "cannot compare {}x{}x{} with {}x{}x{}",
            a.height(),
            a.width(),
            a.bands(),
            b.height(),
            b.width(),
            b.bands()
        )));
    }
    Ok(mse_slices(&a.samples, &b.samples))
}

pub(crate) fn mse_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sse / a.len() as f64
}

/// `10 log10(peak^2 / mse)` in dB; `f64::INFINITY` when `mse == 0`.
pub fn psnr(mse: f64, peak: f64) -> Result<f64> {
    if mse < 0.0 || mse.is_nan() {
        return Err(Error::NegativeMse(mse));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// PSNR on the normalized `[0, 1]` scale.
pub fn psnr_unit(mse: f64) -> f64 {
    psnr(mse, 1.0).expect("mse is non-negative")
}

/// Parameter-only rate: `params * bits / (rows * cols * bands)`.
pub fn bpppb(param_count: u64, bits_per_param: u32, rows: usize, cols: usize, bands: usize) -> f64 {
    rate(param_count * bits_per_param as u64, rows, cols, bands)
}

/// Header-inclusive rate of a bitstream of `file_bits` bits.
pub fn file_bpppb(file_bits: u64, rows: usize, cols: usize, bands: usize) -> f64 {
    rate(file_bits, rows, cols, bands)
}

fn rate(bits: u64, rows: usize, cols: usize, bands: usize) -> f64 {
    bits as f64 / (rows * cols * bands) as f64
}

/// One point on a rate-distortion curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub bpppb: f64,
    pub mse: f64,
    /// `inf` for an exact reconstruction.
    pub psnr: f64,
    pub iteration: u64,
    pub wall_seconds: f64,
}

impl RdPoint {
    pub fn new(bpppb: f64, mse: f64, iteration: u64, wall_seconds: f64) -> Self {
        RdPoint {
            bpppb,
            mse,
            psnr: psnr_unit(mse),
            iteration,
            wall_seconds,
        }
    }
}

pub fn write_rd_csv<W: io::Write>(points: &[RdPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_rd_csv<R: io::Read>(reader: R) -> Result<Vec<RdPoint>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn save_rd_csv(points: &[RdPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_rd_csv(points, io::BufWriter::new(file))
}
