//! Hyperspectral image compression with sinusoidal coordinate networks.
//!
//! A cube is encoded by overfitting a small sine-activated MLP that maps a
//! pixel's `(x, y)` position to its spectrum; the quantized weights are the
//! compressed file. Decoding evaluates the network on the pixel grid, or on
//! any other set of coordinates.

pub mod adam;
pub mod codec;
pub mod cube;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod pipeline;
pub mod search;
pub mod siren;

pub use adam::{adam_step, AdamParams, AdamState};
pub use codec::{
    decode_partial, decompress, dequantize, make_grid, overfit, quantize, read_bitstream,
    write_bitstream, BitWidth, CompressedModel, CoordGrid, ImageInfo, TrainOutcome, TrainSettings,
};
pub use cube::{
    denormalize, normalize, read_cube, read_header, write_cube, write_header, CubeHeader,
    HyperCube, Interleave, NormParams, SampleFormat,
};
pub use error::{Error, ErrorClass, Result};
pub use fixtures::{gen_smooth_cube, SyntheticSpec};
pub use metrics::{bpppb, file_bpppb, mse, psnr, RdPoint};
pub use pipeline::{
    compare, compress, rd_sweep, Architecture, CompressResult, CompressSettings, SweepRow,
};
pub use search::{enumerate_candidates, search, Budget, ProbeResult, SearchOutcome, SearchSpace};
pub use siren::{init_siren, param_count, Precision, Real, SirenConfig, SirenModel};
