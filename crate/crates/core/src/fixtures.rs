//! Deterministic synthetic cubes built from a few low-frequency spatial
//! sinusoids whose amplitudes drift slowly across bands.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{CubeHeader, HyperCube};
use crate::error::{Error, Result};

pub const MAX_COMPONENTS: usize = 3;
/// Cycles per image along either axis.
pub const MAX_FREQUENCY: f64 = 3.0;

/// Spatial frequency of one sinusoidal component, in cycles per image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub fx: f64,
    pub fy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub frequencies: Vec<Frequency>,
    /// Drives phases and spectral amplitude curves.
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// The 32x32x8 fixture used throughout the test suites.
    fn default() -> Self {
        SyntheticSpec {
            rows: 32,
            cols: 32,
            bands: 8,
            frequencies: vec![
                Frequency { fx: 1.0, fy: 0.5 },
                Frequency { fx: 0.5, fy: 1.5 },
                Frequency { fx: 2.0, fy: 1.0 },
            ],
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn new(rows: usize, cols: usize, bands: usize, seed: u64) -> Self {
        SyntheticSpec {
            rows,
            cols,
            bands,
            seed,
            ..Default::default()
        }
    }

    /// Random frequencies in `[0, MAX_FREQUENCY]` for every component.
    pub fn random(rows: usize, cols: usize, bands: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
        let frequencies = (0..MAX_COMPONENTS)
            .map(|_| Frequency {
                fx: rng.gen_range(0.0..=MAX_FREQUENCY),
                fy: rng.gen_range(0.0..=MAX_FREQUENCY),
            })
            .collect();
        SyntheticSpec {
            rows,
            cols,
            bands,
            frequencies,
            seed,
        }
    }

    pub fn header(&self) -> CubeHeader {
        CubeHeader::new(self.rows, self.cols, self.bands)
    }

    pub fn validate(&self) -> Result<()> {
        self.header().validate()?;
        if self.frequencies.len() > MAX_COMPONENTS {
            return Err(Error::InvalidSettings(format!(
                "at most {MAX_COMPONENTS} components, got {}",
                self.frequencies.len()
            )));
        }
        for f in &self.frequencies {
            if !(f.fx.abs() <= MAX_FREQUENCY && f.fy.abs() <= MAX_FREQUENCY) {
                return Err(Error::InvalidSettings(format!(
                    "frequency ({}, {}) exceeds {MAX_FREQUENCY} cycles per image",
                    f.fx, f.fy
                )));
            }
        }
        Ok(())
    }
}

struct Component {
    freq: Frequency,
    phase: f64,
    /// Amplitude curve across bands: `peak * (0.55 + 0.45 sin(rate * t + offset))`.
    rate: f64,
    offset: f64,
}

/// Band `c` at pixel `(m, n)` is
/// `0.5 + 0.5 * sum_k a_k(c) sin(2 pi (fx_k n / N + fy_k m / M) + phi_k)`
/// with `sum_k |a_k(c)| <= 1`, so samples stay in `[0, 1]`.
///
/// Components with both frequencies zero carry no spatial signal and are skipped.
pub fn gen_smooth_cube(spec: &SyntheticSpec) -> Result<HyperCube> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let active: Vec<Component> = spec
        .frequencies
        .iter()
        .map(|&freq| Component {
            freq,
            phase: rng.gen_range(0.0..2.0 * PI),
            rate: rng.gen_range(0.5..2.0),
            offset: rng.gen_range(0.0..2.0 * PI),
        })
        .filter(|c| c.freq.fx != 0.0 || c.freq.fy != 0.0)
        .collect();
    let peak = if active.is_empty() {
        0.0
    } else {
        1.0 / active.len() as f64
    };
    let (m_total, n_total) = (spec.rows as f64, spec.cols as f64);

    let mut samples = Vec::with_capacity(spec.rows * spec.cols * spec.bands);
    for band in 0..spec.bands {
        let t = PI * band as f64 / spec.bands as f64;
        let amps: Vec<f64> = active
            .iter()
            .map(|c| peak * (0.55 + 0.45 * (c.rate * t + c.offset).sin()))
            .collect();
        for m in 0..spec.rows {
            for n in 0..spec.cols {
                let mut acc = 0.0;
                for (c, a) in active.iter().zip(&amps) {
                    let arg = 2.0
                        * PI
                        * (c.freq.fx * n as f64 / n_total + c.freq.fy * m as f64 / m_total)
                        + c.phase;
                    acc += a * arg.sin();
                }
                samples.push((0.5 + 0.5 * acc).clamp(0.0, 1.0));
            }
        }
    }
    HyperCube::new(spec.header(), samples)
}
