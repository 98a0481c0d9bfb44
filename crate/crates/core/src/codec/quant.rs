//! Reduced-precision storage of trained parameters.

use std::fmt;
use std::str::FromStr;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::cube::{Interleave, NormParams};
use crate::error::{Error, Result};
use crate::siren::{Real, SirenConfig, SirenModel};

/// Stored bits per network parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum BitWidth {
    /// Per-layer affine 8-bit codes.
    B8,
    /// IEEE binary16.
    B16,
    /// IEEE binary32.
    B32,
}

impl BitWidth {
    pub const ALL: [BitWidth; 3] = [BitWidth::B32, BitWidth::B16, BitWidth::B8];

    pub fn bits(self) -> u32 {
        match self {
            BitWidth::B8 => 8,
            BitWidth::B16 => 16,
            BitWidth::B32 => 32,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitWidth::B8),
            16 => Ok(BitWidth::B16),
            32 => Ok(BitWidth::B32),
            other => Err(Error::BitWidth(other)),
        }
    }
}

impl TryFrom<u32> for BitWidth {
    type Error = Error;
    fn try_from(bits: u32) -> Result<Self> {
        BitWidth::from_bits(bits)
    }
}

impl From<BitWidth> for u32 {
    fn from(b: BitWidth) -> u32 {
        b.bits()
    }
}

impl fmt::Display for BitWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

impl FromStr for BitWidth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bits: u32 = s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSettings(format!("not a bit width: {s:?}")))?;
        BitWidth::from_bits(bits)
    }
}

/// What the decoder needs to know about the image besides the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub rows: u32,
    pub cols: u32,
    pub bands: u32,
    pub interleave: Interleave,
    pub norm: NormParams,
}

/// 8-bit codes of one layer: `value = zero + scale * code`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineCodes {
    pub scale: f32,
    pub zero: f32,
    pub codes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F16(Vec<f16>),
    /// One entry per layer, input layer first.
    U8(Vec<AffineCodes>),
}

impl Payload {
    pub fn bit_width(&self) -> BitWidth {
        match self {
            Payload::F32(_) => BitWidth::B32,
            Payload::F16(_) => BitWidth::B16,
            Payload::U8(_) => BitWidth::B8,
        }
    }

    pub fn scalar_count(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F16(v) => v.len(),
            Payload::U8(layers) => layers.iter().map(|l| l.codes.len()).sum(),
        }
    }
}

/// A quantized network plus the metadata needed to rebuild the image.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    pub image: ImageInfo,
    pub hidden_layers: u8,
    pub hidden_width: u16,
    pub omega0: f32,
    pub payload: Payload,
}

impl CompressedModel {
    pub fn bit_width(&self) -> BitWidth {
        self.payload.bit_width()
    }

    pub fn config(&self) -> SirenConfig {
        SirenConfig::new(
            self.hidden_layers as usize,
            self.hidden_width as usize,
            self.image.bands as usize,
        )
        .with_omega0(self.omega0 as f64)
    }

    pub fn param_count(&self) -> u64 {
        self.config().param_count()
    }
}

fn check_finite<F: Real>(model: &SirenModel<F>) -> Result<()> {
    for (i, layer) in model.layers.iter().enumerate() {
        if layer.values().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParam { layer: i });
        }
    }
    Ok(())
}

/// Binary16 with round-to-nearest-even; magnitudes beyond the largest finite
/// half clamp to it.
pub fn to_half(v: f64) -> f16 {
    f16::from_f64(v.clamp(-f16::MAX.to_f64(), f16::MAX.to_f64()))
}

/// Affine 8-bit codes over one layer's parameters.
pub fn affine_codes(values: &[f32]) -> AffineCodes {
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let (lo, hi) = if values.is_empty() {
        (0.0, 0.0)
    } else {
        (lo, hi)
    };
    let span = hi as f64 - lo as f64;
    let codes = values
        .iter()
        .map(|&v| {
            if span == 0.0 {
                0
            } else {
                // (v - zero) / scale with scale = span / 255, kept exact at the halfway codes
                ((v as f64 - lo as f64) * 255.0 / span)
                    .round()
                    .clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    AffineCodes {
        scale: (span / 255.0) as f32,
        zero: lo,
        codes,
    }
}

impl AffineCodes {
    pub fn value(&self, code: u8) -> f64 {
        self.zero as f64 + self.scale as f64 * code as f64
    }
}

/// Encodes `model` at `bits` per parameter.
pub fn quantize<F: Real>(
    model: &SirenModel<F>,
    bits: BitWidth,
    image: ImageInfo,
) -> Result<CompressedModel> {
    let cfg = model.config;
    cfg.validate()?;
    if cfg.out_dim != image.bands as usize {
        return Err(Error::Dimension(format!(
            "network outputs {} bands, image has {}",
            cfg.out_dim, image.bands
        )));
    }
    let hidden_layers = u8::try_from(cfg.hidden_layers)
        .map_err(|_| Error::InvalidConfig(format!("depth {} exceeds 255", cfg.hidden_layers)))?;
    let hidden_width = u16::try_from(cfg.hidden_width)
        .map_err(|_| Error::InvalidConfig(format!("width {} exceeds 65535", cfg.hidden_width)))?;
    check_finite(model)?;

    let payload = match bits {
        BitWidth::B32 => Payload::F32(model.params().map(|v| v.as_f64() as f32).collect()),
        BitWidth::B16 => Payload::F16(model.params().map(|v| to_half(v.as_f64())).collect()),
        BitWidth::B8 => Payload::U8(
            model
                .layers
                .iter()
                .map(|l| affine_codes(&l.values().map(|v| v.as_f64() as f32).collect::<Vec<_>>()))
                .collect(),
        ),
    };
    Ok(CompressedModel {
        image,
        hidden_layers,
        hidden_width,
        omega0: cfg.omega0 as f32,
        payload,
    })
}

/// Rebuilds the network in precision `F`.
pub fn dequantize_as<F: Real>(cm: &CompressedModel) -> Result<SirenModel<F>> {
    let cfg = cm.config();
    cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
    let expected = cfg.param_count() as usize;
    let actual = cm.payload.scalar_count();
    if expected != actual {
        let bytes = |n: usize| n * cm.bit_width().bits() as usize / 8;
        return Err(Error::PayloadLength {
            expected: bytes(expected),
            actual: bytes(actual),
        });
    }
    let flat: Vec<F> = match &cm.payload {
        Payload::F32(v) => v.iter().map(|x| F::of(*x as f64)).collect(),
        Payload::F16(v) => v.iter().map(|x| F::of(x.to_f64())).collect(),
        Payload::U8(layers) => {
            let shapes = cfg.layer_shapes();
            if layers.len() != shapes.len()
                || layers
                    .iter()
                    .zip(&shapes)
                    .any(|(l, (o, i))| l.codes.len() != o * i + o)
            {
                return Err(Error::Format(
                    "8-bit layer blocks do not match the architecture".into(),
                ));
            }
            layers
                .iter()
                .flat_map(|l| l.codes.iter().map(move |&q| F::of(l.value(q))))
                .collect()
        }
    };
    SirenModel::from_flat(cfg, &flat)
}

/// Rebuilds the network at training precision.
pub fn dequantize(cm: &CompressedModel) -> Result<SirenModel<f32>> {
    dequantize_as(cm)
}
