//! Choosing network depth and width under a rate budget.
//!
//! For every candidate depth the widest network whose parameter cost fits
//! the budget is kept; each `(architecture, learning rate)` pair is then
//! probe-trained briefly and the best probe PSNR wins.

use std::cmp::Ordering;
use std::io;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::DEFAULT_LR;
use crate::codec::quant::BitWidth;
use crate::codec::train::{overfit, TrainSettings};
use crate::cube::HyperCube;
use crate::error::{Error, Result};
use crate::metrics::bpppb;
use crate::siren::{param_count, Real, SirenConfig, DEFAULT_OMEGA0, IN_DIM};

pub const DEFAULT_PROBE_ITERATIONS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub target_bpppb: f64,
    pub bits: BitWidth,
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
}

impl Budget {
    pub fn new(target_bpppb: f64, bits: BitWidth, rows: usize, cols: usize, bands: usize) -> Self {
        Budget {
            target_bpppb,
            bits,
            rows,
            cols,
            bands,
        }
    }

    pub fn for_cube(target_bpppb: f64, bits: BitWidth, cube: &HyperCube) -> Self {
        Budget::new(
            target_bpppb,
            bits,
            cube.height(),
            cube.width(),
            cube.bands(),
        )
    }

    fn samples(&self) -> u64 {
        (self.rows * self.cols * self.bands) as u64
    }

    fn fits(&self, params: u64) -> bool {
        bpppb(params, self.bits.bits(), self.rows, self.cols, self.bands) <= self.target_bpppb
    }

    /// Largest parameter count whose rate does not exceed the target:
    /// `floor(target * rows * cols * bands / bits)`.
    pub fn max_params(&self) -> Result<u64> {
        if !(self.target_bpppb > 0.0 && self.target_bpppb.is_finite()) {
            return Err(Error::Budget(format!(
                "target rate must be positive, got {}",
                self.target_bpppb
            )));
        }
        if self.samples() == 0 {
            return Err(Error::Budget("image has no samples".into()));
        }
        let mut max =
            (self.target_bpppb * self.samples() as f64 / self.bits.bits() as f64).floor() as u64;
        // the float product can land one above the exact floor
        while max > 0 && !self.fits(max) {
            max -= 1;
        }
        Ok(max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub depths: Vec<usize>,
    pub widths: RangeInclusive<usize>,
    pub lrs: Vec<f64>,
    pub probe_iterations: u64,
    /// Applied to every candidate; not searched.
    pub omega0: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            depths: vec![2, 3, 4, 5],
            widths: 8..=1024,
            lrs: vec![DEFAULT_LR],
            probe_iterations: DEFAULT_PROBE_ITERATIONS,
            omega0: DEFAULT_OMEGA0,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.depths.contains(&0) {
            return Err(Error::InvalidSettings(
                "depths must be a non-empty set of positive counts".into(),
            ));
        }
        if self.widths.is_empty() || *self.widths.start() == 0 {
            return Err(Error::InvalidSettings(format!(
                "invalid width range {:?}",
                self.widths
            )));
        }
        if self.lrs.is_empty() || self.lrs.iter().any(|lr| !(*lr > 0.0)) {
            return Err(Error::InvalidSettings(
                "learning rates must be a non-empty set of positive values".into(),
            ));
        }
        if self.probe_iterations == 0 {
            return Err(Error::InvalidSettings(
                "probe iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Widest network per depth that fits the budget, dropping any that use
/// less than half of it. Sorted by descending parameter count.
pub fn enumerate_candidates(budget: &Budget, space: &SearchSpace) -> Result<Vec<SirenConfig>> {
    space.validate()?;
    let max_params = budget.max_params()?;
    let mut out = Vec::new();
    for &depth in &space.depths {
        let cost = |w: usize| param_count(depth, w, IN_DIM, budget.bands);
        let (mut lo, mut hi) = (*space.widths.start(), *space.widths.end());
        if cost(lo) > max_params {
            continue;
        }
        // invariant: cost(lo) fits; find the last width that fits
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if cost(mid) <= max_params {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        if 2 * cost(lo) < max_params {
            continue;
        }
        out.push(SirenConfig::new(depth, lo, budget.bands).with_omega0(space.omega0));
    }
    if out.is_empty() {
        return Err(Error::NoCandidates { max_params });
    }
    out.sort_by_key(|c| std::cmp::Reverse(c.param_count()));
    Ok(out)
}

/// One probe-trained `(architecture, learning rate)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub omega0: f64,
    pub lr: f64,
    pub param_count: u64,
    pub bpppb: f64,
    pub probe_psnr: f64,
}

impl ProbeResult {
    pub fn config(&self, bands: usize) -> SirenConfig {
        SirenConfig::new(self.hidden_layers, self.hidden_width, bands).with_omega0(self.omega0)
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: SirenConfig,
    pub best_lr: f64,
    /// Index of the winner in `report`.
    pub best_index: usize,
    /// Candidates in enumeration order, each expanded over the learning rates.
    pub report: Vec<ProbeResult>,
}

/// Ranking: higher PSNR, then fewer parameters, shallower, lower lr.
/// `Less` means `a` is preferred.
fn preference(a: &ProbeResult, b: &ProbeResult) -> Ordering {
    let psnr = |p: &ProbeResult| {
        if p.probe_psnr.is_nan() {
            f64::NEG_INFINITY
        } else {
            p.probe_psnr
        }
    };
    psnr(b)
        .partial_cmp(&psnr(a))
        .unwrap_or(Ordering::Equal)
        .then(a.param_count.cmp(&b.param_count))
        .then(a.hidden_layers.cmp(&b.hidden_layers))
        .then(a.lr.partial_cmp(&b.lr).unwrap_or(Ordering::Equal))
}

/// Index of the preferred entry; the earliest wins a complete tie.
pub fn select_best(report: &[ProbeResult]) -> Option<usize> {
    (0..report.len()).reduce(|best, i| {
        if preference(&report[i], &report[best]) == Ordering::Less {
            i
        } else {
            best
        }
    })
}

/// Probe-trains every `(candidate, lr)` pair on `cube` and picks the best.
pub fn search_candidates<F: Real>(
    cube: &HyperCube,
    candidates: &[SirenConfig],
    budget: &Budget,
    space: &SearchSpace,
    seed: u64,
) -> Result<SearchOutcome> {
    space.validate()?;
    if candidates.is_empty() {
        return Err(Error::NoCandidates {
            max_params: budget.max_params()?,
        });
    }
    let pairs: Vec<(SirenConfig, f64)> = candidates
        .iter()
        .flat_map(|c| space.lrs.iter().map(move |lr| (*c, *lr)))
        .collect();
    let report = pairs
        .par_iter()
        .map(|(config, lr)| {
            let settings = TrainSettings {
                iterations: space.probe_iterations,
                lr: *lr,
                batch: None,
                seed,
                eval_every: space.probe_iterations.min(100),
            };
            let outcome = overfit::<F>(cube, *config, &settings)?;
            Ok(ProbeResult {
                hidden_layers: config.hidden_layers,
                hidden_width: config.hidden_width,
                omega0: config.omega0,
                lr: *lr,
                param_count: config.param_count(),
                bpppb: bpppb(
                    config.param_count(),
                    budget.bits.bits(),
                    budget.rows,
                    budget.cols,
                    budget.bands,
                ),
                probe_psnr: outcome.best_psnr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best_index = select_best(&report).expect("report is non-empty");
    Ok(SearchOutcome {
        best: pairs[best_index].0,
        best_lr: pairs[best_index].1,
        best_index,
        report,
    })
}

/// Enumerates candidates for the budget, then probes them.
pub fn search<F: Real>(
    cube: &HyperCube,
    budget: &Budget,
    space: &SearchSpace,
    seed: u64,
) -> Result<SearchOutcome> {
    if budget.bands != cube.bands() || budget.rows != cube.height() || budget.cols != cube.width() {
        return Err(Error::Dimension(
            "budget dimensions differ from the cube".into(),
        ));
    }
    let candidates = enumerate_candidates(budget, space)?;
    search_candidates::<F>(cube, &candidates, budget, space, seed)
}

pub fn write_report_csv<W: io::Write>(report: &[ProbeResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in report {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_report_csv<R: io::Read>(reader: R) -> Result<Vec<ProbeResult>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
