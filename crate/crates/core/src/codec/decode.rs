use ndarray::{Array2, ArrayView2};

use super::grid::{make_grid, CoordGrid};
use super::quant::{dequantize, CompressedModel};
use crate::cube::{denormalize_with, CubeHeader, HyperCube, SampleFormat};
use crate::error::{Error, Result};
use crate::siren::{Real, SirenModel};

/// Network outputs clamped to the normalized range, widened to f64.
pub(crate) fn clamped_outputs<F: Real>(
    model: &SirenModel<F>,
    coords: ArrayView2<'_, F>,
) -> Result<Array2<f64>> {
    let y = model.forward(coords)?;
    Ok(y.mapv(|v| v.max(F::zero()).min(F::one()).as_f64()))
}

/// Spectra at arbitrary `(x, y)` coordinates, on the original sample scale.
/// Grid points reproduce the matching pixels of [`decompress`] exactly;
/// other points sample the continuous representation.
pub fn decode_partial(cm: &CompressedModel, coords: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let model = dequantize(cm)?;
    let norm = cm.image.norm;
    let coords = coords.mapv(|v| v as f32);
    let mut out = clamped_outputs(&model, coords.view())?;
    out.mapv_inplace(|v| norm.denormalize(v));
    Ok(out)
}

/// Normalized reconstruction of the sampled pixels, shaped `grid.rows x grid.cols`.
pub fn reconstruct_grid(cm: &CompressedModel, grid: &CoordGrid) -> Result<HyperCube> {
    if grid.frame_rows != cm.image.rows as usize || grid.frame_cols != cm.image.cols as usize {
        return Err(Error::Dimension(format!(
            "grid frame {}x{} does not match image {}x{}",
            grid.frame_rows, grid.frame_cols, cm.image.rows, cm.image.cols
        )));
    }
    let model = dequantize(cm)?;
    let values = clamped_outputs(&model, grid.to_array::<f32>().view())?;
    let bands = cm.image.bands as usize;
    let pixels = grid.len();
    let mut samples = vec![0.0; pixels * bands];
    for (p, row) in values.rows().into_iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            samples[b * pixels + p] = *v;
        }
    }
    let header = CubeHeader::new(grid.rows, grid.cols, bands)
        .with_format(cm.image.interleave, SampleFormat::F32le);
    let mut cube = HyperCube::new(header, samples)?;
    cube.norm = Some(cm.image.norm);
    Ok(cube)
}

/// Raw-scale reconstruction of the sampled pixels.
pub fn decode_grid(cm: &CompressedModel, grid: &CoordGrid) -> Result<HyperCube> {
    let cube = reconstruct_grid(cm, grid)?;
    Ok(denormalize_with(cube, cm.image.norm))
}

/// Normalized reconstruction of the whole image; `norm` is set.
pub fn reconstruct(cm: &CompressedModel) -> Result<HyperCube> {
    reconstruct_grid(
        cm,
        &make_grid(cm.image.rows as usize, cm.image.cols as usize),
    )
}

/// Evaluates the network at every pixel and maps the result back to the
/// original sample scale.
pub fn decompress(cm: &CompressedModel) -> Result<HyperCube> {
    decode_grid(
        cm,
        &make_grid(cm.image.rows as usize, cm.image.cols as usize),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::quant::{quantize, BitWidth, ImageInfo};
    use crate::cube::{Interleave, NormParams};
    use crate::siren::{init_siren, SirenConfig};
    use ndarray::array;

    fn compressed(rows: u32, cols: u32, bands: u32, seed: u64) -> CompressedModel {
        let mut m: SirenModel<f32> =
            init_siren(SirenConfig::new(2, 8, bands as usize), seed).unwrap();
        m.layers[2].bias.fill(0.5);
        let info = ImageInfo {
            rows,
            cols,
            bands,
            interleave: Interleave::Bip,
            norm: NormParams {
                lo: 100.0,
                hi: 300.0,
            },
        };
        quantize(&m, BitWidth::B32, info).unwrap()
    }

    #[test]
    fn constant_network_decodes_to_constant_cube() {
        let m: SirenModel<f32> = {
            let mut m = SirenModel::zeros(SirenConfig::new(1, 3, 2)).unwrap();
            m.layers[1].bias = array![0.25, 0.75];
            m
        };
        let info = ImageInfo {
            rows: 3,
            cols: 4,
            bands: 2,
            interleave: Interleave::Bsq,
            norm: NormParams { lo: 10.0, hi: 20.0 },
        };
        let cube = decompress(&quantize(&m, BitWidth::B32, info).unwrap()).unwrap();
        assert_eq!((cube.height(), cube.width(), cube.bands()), (3, 4, 2));
        assert!(cube.band(0).iter().all(|v| *v == 12.5));
        assert!(cube.band(1).iter().all(|v| *v == 17.5));
        assert!(cube.norm.is_none());
    }

    #[test]
    fn outputs_are_clamped_before_denormalizing() {
        let mut m: SirenModel<f32> = SirenModel::zeros(SirenConfig::new(1, 3, 2)).unwrap();
        m.layers[1].bias = array![-4.0, 9.0];
        let info = ImageInfo {
            rows: 2,
            cols: 2,
            bands: 2,
            interleave: Interleave::Bsq,
            norm: NormParams { lo: 10.0, hi: 20.0 },
        };
        let cube = decompress(&quantize(&m, BitWidth::B32, info).unwrap()).unwrap();
        assert!(cube.band(0).iter().all(|v| *v == 10.0));
        assert!(cube.band(1).iter().all(|v| *v == 20.0));
    }

    #[test]
    fn grid_subset_matches_full_decode() {
        let cm = compressed(9, 7, 3, 5);
        let full = decompress(&cm).unwrap();
        let grid = make_grid(9, 7);
        let picks = [0usize, 5, 17, 40, 62];
        let coords = Array2::from_shape_fn((picks.len(), 2), |(i, j)| {
            let p = grid.entries[picks[i]];
            if j == 0 {
                p.x
            } else {
                p.y
            }
        });
        let spectra = decode_partial(&cm, coords.view()).unwrap();
        for (i, &k) in picks.iter().enumerate() {
            let p = grid.entries[k];
            for b in 0..3 {
                assert_eq!(spectra[[i, b]], full.get(b, p.row, p.col));
            }
        }
    }

    #[test]
    fn strided_grid_gives_low_resolution_cube() {
        let cm = compressed(9, 6, 2, 1);
        let low = decode_grid(&cm, &CoordGrid::strided(9, 6, 2).unwrap()).unwrap();
        assert_eq!((low.height(), low.width(), low.bands()), (5, 3, 2));
        let full = decompress(&cm).unwrap();
        for b in 0..2 {
            for r in 0..5 {
                for c in 0..3 {
                    assert_eq!(low.get(b, r, c), full.get(b, 2 * r, 2 * c));
                }
            }
        }
    }

    #[test]
    fn off_grid_points_are_finite() {
        let cm = compressed(4, 4, 3, 2);
        let mid = axis_mid();
        let spectra =
            decode_partial(&cm, array![[mid, mid], [0.123, -0.987], [1.5, -2.0]].view()).unwrap();
        assert!(spectra.iter().all(|v| v.is_finite()));
    }

    fn axis_mid() -> f64 {
        // halfway between the first two pixel centers of a 4-pixel axis
        (crate::codec::grid::axis_coord(0, 4) + crate::codec::grid::axis_coord(1, 4)) / 2.0
    }

    #[test]
    fn grid_frame_must_match_image() {
        let cm = compressed(4, 4, 3, 2);
        assert!(matches!(
            decode_grid(&cm, &make_grid(4, 5)),
            Err(Error::Dimension(_))
        ));
    }
}
