//! Encoding a cube as a trained network and decoding it back.

pub mod bitstream;
pub mod decode;
pub mod grid;
pub mod quant;
pub mod train;

pub use bitstream::{read_bitstream, stream_bits, write_bitstream, HEADER_BITS, HEADER_BYTES};
pub use decode::{decode_grid, decode_partial, decompress, reconstruct, reconstruct_grid};
pub use grid::{axis_coord, make_grid, CoordGrid, GridPoint};
pub use quant::{
    dequantize, dequantize_as, quantize, BitWidth, CompressedModel, ImageInfo, Payload,
};
pub use train::{overfit, overfit_from, pixel_targets, TrainOutcome, TrainSettings};
