//! Overfitting a network to a single cube.

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::decode::clamped_outputs;
use super::grid::make_grid;
use crate::adam::{adam_step, AdamParams, AdamState, DEFAULT_LR};
use crate::cube::HyperCube;
use crate::error::{Error, Result};
use crate::metrics::{bpppb, mse_slices, psnr_unit, RdPoint};
use crate::siren::{init_siren, Real, SirenConfig, SirenModel};

pub const DEFAULT_ITERATIONS: u64 = 50_000;
pub const DEFAULT_EVAL_EVERY: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub iterations: u64,
    pub lr: f64,
    /// Pixels per step; `None` trains on the full grid every step.
    pub batch: Option<usize>,
    pub seed: u64,
    /// Iterations between snapshot evaluations of the training PSNR.
    pub eval_every: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            iterations: DEFAULT_ITERATIONS,
            lr: DEFAULT_LR,
            batch: None,
            seed: 0,
            eval_every: DEFAULT_EVAL_EVERY,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidSettings(
                "iterations must be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidSettings(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidSettings(
                "evaluation interval must be at least 1".into(),
            ));
        }
        if self.batch == Some(0) {
            return Err(Error::InvalidSettings(
                "batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of an overfitting run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Snapshot with the highest training PSNR.
    pub model: SirenModel<F>,
    pub best_mse: f64,
    pub best_psnr: f64,
    pub best_iteration: u64,
    /// One point per evaluation, in iteration order.
    pub trace: Vec<RdPoint>,
}

/// Per-pixel spectra of a cube as a `pixels x bands` matrix.
pub fn pixel_targets<F: Real>(cube: &HyperCube) -> Array2<F> {
    let pixels = cube.header.pixels();
    Array2::from_shape_fn((pixels, cube.bands()), |(p, b)| {
        F::of(cube.samples[b * pixels + p])
    })
}

fn check_normalized(cube: &HyperCube) -> Result<()> {
    if cube.norm.is_none() || cube.samples.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::NotNormalized);
    }
    Ok(())
}

/// Trains a freshly initialized network on `cube`.
pub fn overfit<F: Real>(
    cube: &HyperCube,
    config: SirenConfig,
    settings: &TrainSettings,
) -> Result<TrainOutcome<F>> {
    let model = init_siren(config, settings.seed)?;
    overfit_from(cube, model, settings)
}

/// Runs `settings.iterations` Adam steps on the MSE between the network and
/// the cube, starting from `model`, and keeps the best-PSNR snapshot.
pub fn overfit_from<F: Real>(
    cube: &HyperCube,
    mut model: SirenModel<F>,
    settings: &TrainSettings,
) -> Result<TrainOutcome<F>> {
    settings.validate()?;
    model.config.validate()?;
    check_normalized(cube)?;
    if model.config.out_dim != cube.bands() {
        return Err(Error::Dimension(format!(
            "network outputs {} bands, cube has {}",
            model.config.out_dim,
            cube.bands()
        )));
    }

    let start = Instant::now();
    let (rows, cols, bands) = (cube.height(), cube.width(), cube.bands());
    let coords: Array2<F> = make_grid(rows, cols).to_array();
    let targets: Array2<F> = pixel_targets(cube);
    let reference: Vec<f64> = pixel_targets::<f64>(cube).into_iter().collect();
    let pixels = coords.nrows();
    let rate = bpppb(model.config.param_count(), 32, rows, cols, bands);

    let mut state = AdamState::new(&model, AdamParams::with_lr(settings.lr))?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x9e37_79b9_7f4a_7c15);
    let minibatch = settings.batch.filter(|&k| k < pixels);

    let evaluate = |model: &SirenModel<F>| -> Result<f64> {
        let out = clamped_outputs(model, coords.view())?;
        Ok(mse_slices(
            out.as_slice().expect("standard layout"),
            &reference,
        ))
    };

    let first = evaluate(&model)?;
    let mut best = (first, 0u64, model.clone());
    let mut trace = vec![RdPoint::new(rate, first, 0, start.elapsed().as_secs_f64())];

    for it in 1..=settings.iterations {
        let (_, grads) = match minibatch {
            Some(k) => {
                let idx = rand::seq::index::sample(&mut rng, pixels, k).into_vec();
                let c = coords.select(Axis(0), &idx);
                let t = targets.select(Axis(0), &idx);
                model.loss_and_grad(c.view(), t.view())?
            }
            None => model.loss_and_grad(coords.view(), targets.view())?,
        };
        adam_step(&mut model, &grads, &mut state)?;

        if it % settings.eval_every == 0 || it == settings.iterations {
            let mse = evaluate(&model)?;
            trace.push(RdPoint::new(rate, mse, it, start.elapsed().as_secs_f64()));
            if mse < best.0 {
                best = (mse, it, model.clone());
            }
        }
    }

    let (best_mse, best_iteration, model) = best;
    Ok(TrainOutcome {
        model,
        best_mse,
        best_psnr: psnr_unit(best_mse),
        best_iteration,
        trace,
    })
}
