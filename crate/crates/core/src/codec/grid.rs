use ndarray::Array2;

use crate::error::{Error, Result};
use crate::siren::Real;

/// Normalized coordinate of pixel `index` along an axis of `count` pixels.
/// The first and last pixels land on -1 and +1; a single pixel sits at 0.
#[inline]
pub fn axis_coord(index: usize, count: usize) -> f64 {
    if count <= 1 {
        0.0
    } else {
        (2 * index) as f64 / (count - 1) as f64 - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
}

/// Pixel coordinates of a (possibly partial) sampling of an image, row-major.
///
/// `rows x cols` is the shape of the sampled block; coordinates always refer
/// to the full `frame_rows x frame_cols` image.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordGrid {
    pub rows: usize,
    pub cols: usize,
    pub frame_rows: usize,
    pub frame_cols: usize,
    pub entries: Vec<GridPoint>,
}

fn sampled(frame_rows: usize, frame_cols: usize, rows: Vec<usize>, cols: Vec<usize>) -> CoordGrid {
    let mut entries = Vec::with_capacity(rows.len() * cols.len());
    for &row in &rows {
        let y = axis_coord(row, frame_rows);
        for &col in &cols {
            entries.push(GridPoint {
                row,
                col,
                x: axis_coord(col, frame_cols),
                y,
            });
        }
    }
    CoordGrid {
        rows: rows.len(),
        cols: cols.len(),
        frame_rows,
        frame_cols,
        entries,
    }
}

/// Every pixel of a `rows x cols` image.
pub fn make_grid(rows: usize, cols: usize) -> CoordGrid {
    sampled(rows, cols, (0..rows).collect(), (0..cols).collect())
}

impl CoordGrid {
    /// Every `step`-th row and column starting at 0: a
    /// `ceil(rows/step) x ceil(cols/step)` preview.
    pub fn strided(rows: usize, cols: usize, step: usize) -> Result<CoordGrid> {
        if step == 0 {
            return Err(Error::InvalidSettings(
                "scale factor must be at least 1".into(),
            ));
        }
        Ok(sampled(
            rows,
            cols,
            (0..rows).step_by(step).collect(),
            (0..cols).step_by(step).collect(),
        ))
    }

    /// A `height x width` window whose top-left pixel is `(row0, col0)`.
    pub fn window(
        rows: usize,
        cols: usize,
        row0: usize,
        col0: usize,
        height: usize,
        width: usize,
    ) -> Result<CoordGrid> {
        if height == 0 || width == 0 || row0 + height > rows || col0 + width > cols {
            return Err(Error::InvalidSettings(format!(
                "crop {height}x{width} at ({row0}, {col0}) does not fit a {rows}x{cols} image"
            )));
        }
        Ok(sampled(
            rows,
            cols,
            (row0..row0 + height).collect(),
            (col0..col0 + width).collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `len x 2` matrix of `(x, y)` rows.
    pub fn to_array<F: Real>(&self) -> Array2<F> {
        let mut out = Array2::zeros((self.entries.len(), 2));
        for (i, p) in self.entries.iter().enumerate() {
            out[[i, 0]] = F::of(p.x);
            out[[i, 1]] = F::of(p.y);
        }
        out
    }
}
