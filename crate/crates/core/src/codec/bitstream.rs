//! `.hsic` container.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! |      0 |    4 | magic `HSIC`                            |
//! |      4 |    1 | version (1)                             |
//! |      5 |    4 | rows `M` (u32)                          |
//! |      9 |    4 | cols `N` (u32)                          |
//! |     13 |    4 | bands `C` (u32)                         |
//! |     17 |    1 | interleave of origin (0 BSQ, 1 BIL, 2 BIP) |
//! |     18 |    1 | sine layers `d` (u8)                    |
//! |     19 |    2 | hidden width `w` (u16)                  |
//! |     21 |    4 | omega0 (f32)                            |
//! |     25 |    1 | bits per parameter (32, 16 or 8)        |
//! |     26 |    8 | normalization lo (f64)                  |
//! |     34 |    8 | normalization hi (f64)                  |
//! |     42 |    - | payload                                 |
//!
//! The payload lists parameters layer by layer, input layer first, each
//! layer's weights row-major (`fan_out x fan_in`) followed by its bias.
//! At 32 bits each parameter is a binary32, at 16 bits a binary16. At 8 bits
//! every layer starts with its f32 `scale` and f32 `zero` and is followed by
//! one code byte per parameter; the value is `zero + scale * code`.
//!
//! A file shorter than its header implies is reported as truncated; one
//! with bytes left over as a payload length mismatch.

use std::fs;
use std::path::Path;

use half::f16;

use super::quant::{AffineCodes, BitWidth, CompressedModel, ImageInfo, Payload};
use crate::cube::{Interleave, NormParams};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"HSIC";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 42;
pub const HEADER_BITS: u64 = HEADER_BYTES as u64 * 8;
/// Per-layer scale and zero of the 8-bit payload.
pub const AFFINE_BLOCK_BYTES: usize = 8;

/// Payload size in bytes for an architecture and bit width.
pub fn payload_bytes(layer_lens: &[usize], bits: BitWidth) -> usize {
    let params: usize = layer_lens.iter().sum();
    match bits {
        BitWidth::B32 => params * 4,
        BitWidth::B16 => params * 2,
        BitWidth::B8 => params + AFFINE_BLOCK_BYTES * layer_lens.len(),
    }
}

fn layer_lens(cm_layers: &[(usize, usize)]) -> Vec<usize> {
    cm_layers.iter().map(|(o, i)| o * i + o).collect()
}

/// Exact size of the serialized model in bits.
pub fn stream_bits(cm: &CompressedModel) -> u64 {
    let lens = layer_lens(&cm.config().layer_shapes());
    HEADER_BITS + 8 * payload_bytes(&lens, cm.bit_width()) as u64
}

pub fn encode(cm: &CompressedModel) -> Vec<u8> {
    let lens = layer_lens(&cm.config().layer_shapes());
    let mut out = Vec::with_capacity(HEADER_BYTES + payload_bytes(&lens, cm.bit_width()));
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&cm.image.rows.to_le_bytes());
    out.extend_from_slice(&cm.image.cols.to_le_bytes());
    out.extend_from_slice(&cm.image.bands.to_le_bytes());
    out.push(cm.image.interleave.code());
    out.push(cm.hidden_layers);
    out.extend_from_slice(&cm.hidden_width.to_le_bytes());
    out.extend_from_slice(&cm.omega0.to_le_bytes());
    out.push(cm.bit_width().bits() as u8);
    out.extend_from_slice(&cm.image.norm.lo.to_le_bytes());
    out.extend_from_slice(&cm.image.norm.hi.to_le_bytes());
    debug_assert_eq!(out.len(), HEADER_BYTES);
    match &cm.payload {
        Payload::F32(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Payload::F16(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_bits().to_le_bytes())),
        Payload::U8(layers) => {
            for l in layers {
                out.extend_from_slice(&l.scale.to_le_bytes());
                out.extend_from_slice(&l.zero.to_le_bytes());
                out.extend_from_slice(&l.codes);
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

pub fn decode(bytes: &[u8]) -> Result<CompressedModel> {
    if bytes.len() >= 4 && bytes[..4] != MAGIC {
        return Err(Error::BadMagic(bytes[..4].try_into().unwrap()));
    }
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Truncated {
            expected: HEADER_BYTES,
            actual: bytes.len(),
        });
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u8();
    if version != VERSION {
        return Err(Error::Version(version));
    }
    let (rows, cols, bands) = (cur.u32(), cur.u32(), cur.u32());
    let interleave_code = cur.u8();
    let interleave = Interleave::from_code(interleave_code)
        .ok_or_else(|| Error::Format(format!("unknown interleave code {interleave_code}")))?;
    let hidden_layers = cur.u8();
    let hidden_width = cur.u16();
    let omega0 = cur.f32();
    let bits_code = cur.u8();
    let bits = BitWidth::from_bits(bits_code as u32)
        .map_err(|_| Error::Format(format!("unsupported bit width {bits_code}")))?;
    let norm = NormParams {
        lo: cur.f64(),
        hi: cur.f64(),
    };
    if rows == 0 || cols == 0 || bands == 0 || hidden_layers == 0 || hidden_width == 0 {
        return Err(Error::Format(format!(
            "zero dimension in header ({rows}x{cols}x{bands}, d={hidden_layers}, w={hidden_width})"
        )));
    }
    if !(omega0.is_finite() && omega0 > 0.0) {
        return Err(Error::Format(format!("invalid omega0 {omega0}")));
    }
    if !(norm.lo.is_finite() && norm.hi.is_finite() && norm.hi >= norm.lo) {
        return Err(Error::Format(format!(
            "invalid normalization range [{}, {}]",
            norm.lo, norm.hi
        )));
    }

    let mut cm = CompressedModel {
        image: ImageInfo {
            rows,
            cols,
            bands,
            interleave,
            norm,
        },
        hidden_layers,
        hidden_width,
        omega0,
        payload: Payload::F32(Vec::new()),
    };
    let lens = layer_lens(&cm.config().layer_shapes());
    let expected_payload = payload_bytes(&lens, bits);
    let expected_total = HEADER_BYTES + expected_payload;
    if bytes.len() < expected_total {
        return Err(Error::Truncated {
            expected: expected_total,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected_total {
        return Err(Error::PayloadLength {
            expected: expected_payload,
            actual: bytes.len() - HEADER_BYTES,
        });
    }
    let params: usize = lens.iter().sum();
    cm.payload = match bits {
        BitWidth::B32 => Payload::F32((0..params).map(|_| cur.f32()).collect()),
        BitWidth::B16 => Payload::F16((0..params).map(|_| f16::from_bits(cur.u16())).collect()),
        BitWidth::B8 => Payload::U8(
            lens.iter()
                .map(|&n| {
                    let scale = cur.f32();
                    let zero = cur.f32();
                    let codes = bytes[cur.pos..cur.pos + n].to_vec();
                    cur.pos += n;
                    AffineCodes { scale, zero, codes }
                })
                .collect(),
        ),
    };
    debug_assert_eq!(cur.pos, bytes.len());
    Ok(cm)
}

pub fn write_bitstream(cm: &CompressedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if cm.payload.scalar_count() as u64 != cm.param_count() {
        return Err(Error::PayloadLength {
            expected: cm.param_count() as usize,
            actual: cm.payload.scalar_count(),
        });
    }
    fs::write(path, encode(cm)).map_err(|e| Error::io(path, e))
}

pub fn read_bitstream(path: impl AsRef<Path>) -> Result<CompressedModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
