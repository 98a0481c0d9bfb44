//! End-to-end compression runs and rate-distortion sweeps.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::bitstream::{encode, stream_bits};
use crate::codec::decode::reconstruct;
use crate::codec::quant::{quantize, BitWidth, CompressedModel, ImageInfo};
use crate::codec::train::{overfit, TrainSettings};
use crate::cube::{normalize, HyperCube};
use crate::error::{Error, Result};
use crate::metrics::{bpppb, file_bpppb, mse, psnr, psnr_unit, RdPoint};
use crate::search::{search, Budget, SearchOutcome, SearchSpace};
use crate::siren::{Precision, Real, SirenConfig, DEFAULT_OMEGA0};

/// How the network shape is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Fixed {
        depth: usize,
        width: usize,
    },
    /// Searched so the parameter-only rate stays within the target.
    Budget {
        target_bpppb: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressSettings {
    pub architecture: Architecture,
    pub bits: BitWidth,
    pub omega0: f64,
    pub precision: Precision,
    /// With a budget the learning rate comes from the search instead.
    pub train: TrainSettings,
    pub search: SearchSpace,
}

impl Default for CompressSettings {
    fn default() -> Self {
        CompressSettings {
            architecture: Architecture::Fixed {
                depth: 3,
                width: 64,
            },
            bits: BitWidth::B16,
            omega0: DEFAULT_OMEGA0,
            precision: Precision::Fp32,
            train: TrainSettings::default(),
            search: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompressResult {
    pub compressed: CompressedModel,
    pub config: SirenConfig,
    pub lr: f64,
    pub search: Option<SearchOutcome>,
    /// Training trace at full precision.
    pub trace: Vec<RdPoint>,
    pub trained_psnr: f64,
    pub best_iteration: u64,
    /// Distortion after quantization.
    pub mse: f64,
    pub psnr: f64,
    /// `param_count * bits / (M N C)`.
    pub param_bpppb: f64,
    pub file_bits: u64,
    pub file_bpppb: f64,
    pub wall_seconds: f64,
}

impl CompressResult {
    /// Final point, rated by the whole file.
    pub fn point(&self) -> RdPoint {
        RdPoint::new(
            self.file_bpppb,
            self.mse,
            self.best_iteration,
            self.wall_seconds,
        )
    }

    pub fn bytes(&self) -> Vec<u8> {
        encode(&self.compressed)
    }
}

/// Normalizes `cube`, picks the architecture, trains, quantizes and measures
/// the reconstruction.
pub fn compress(cube: &HyperCube, settings: &CompressSettings) -> Result<CompressResult> {
    match settings.precision {
        Precision::Fp32 => compress_as::<f32>(cube, settings),
        Precision::Fp64 => compress_as::<f64>(cube, settings),
    }
}

fn compress_as<F: Real>(raw: &HyperCube, settings: &CompressSettings) -> Result<CompressResult> {
    let start = Instant::now();
    settings.train.validate()?;
    // the file stores omega0 as f32; train with exactly that value
    let omega0 = settings.omega0 as f32 as f64;
    let interleave = raw.header.interleave;
    let cube = normalize(raw.clone())?;
    let (rows, cols, bands) = (cube.height(), cube.width(), cube.bands());

    let (config, lr, found) = match settings.architecture {
        Architecture::Fixed { depth, width } => {
            let config = SirenConfig::new(depth, width, bands).with_omega0(omega0);
            config.validate()?;
            (config, settings.train.lr, None)
        }
        Architecture::Budget { target_bpppb } => {
            let budget = Budget::new(target_bpppb, settings.bits, rows, cols, bands);
            let space = SearchSpace {
                omega0,
                ..settings.search.clone()
            };
            let found = search::<F>(&cube, &budget, &space, settings.train.seed)?;
            (found.best, found.best_lr, Some(found))
        }
    };

    let train = TrainSettings {
        lr,
        ..settings.train
    };
    let outcome = overfit::<F>(&cube, config, &train)?;
    let image = ImageInfo {
        rows: dim_u32(rows)?,
        cols: dim_u32(cols)?,
        bands: dim_u32(bands)?,
        interleave,
        norm: cube.norm.ok_or(Error::MissingNorm)?,
    };
    let compressed = quantize(&outcome.model, settings.bits, image)?;
    let decoded = reconstruct(&compressed)?;
    let err = mse(&decoded, &cube)?;
    let file_bits = stream_bits(&compressed);

    Ok(CompressResult {
        config,
        lr,
        search: found,
        trace: outcome.trace,
        trained_psnr: outcome.best_psnr,
        best_iteration: outcome.best_iteration,
        mse: err,
        psnr: psnr_unit(err),
        param_bpppb: bpppb(
            config.param_count(),
            settings.bits.bits(),
            rows,
            cols,
            bands,
        ),
        file_bits,
        file_bpppb: file_bpppb(file_bits, rows, cols, bands),
        wall_seconds: start.elapsed().as_secs_f64(),
        compressed,
    })
}

fn dim_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidHeader(format!("dimension {n} exceeds u32")))
}

/// Distortion between a reference cube and a test cube, both scaled by the
/// reference's min-max range. With `peak`, the raw-scale MSE is used instead.
pub fn compare(reference: &HyperCube, test: &HyperCube, peak: Option<f64>) -> Result<(f64, f64)> {
    if let Some(peak) = peak {
        let err = mse(reference, test)?;
        return Ok((err, psnr(err, peak)?));
    }
    let reference = normalize(reference.clone())?;
    let norm = reference.norm.ok_or(Error::MissingNorm)?;
    let mut scaled = test.clone();
    scaled
        .samples
        .iter_mut()
        .for_each(|v| *v = norm.normalize(*v));
    let err = mse(&reference, &scaled)?;
    Ok((err, psnr(err, 1.0)?))
}

/// One row of a rate-distortion sweep; measurement fields are empty when
/// the row failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub target_bpppb: f64,
    pub bits: u32,
    pub status: String,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub lr: Option<f64>,
    pub param_count: Option<u64>,
    pub bpppb: Option<f64>,
    pub file_bpppb: Option<f64>,
    pub mse: Option<f64>,
    pub psnr: Option<f64>,
    pub iteration: Option<u64>,
    pub wall_seconds: Option<f64>,
    pub file: Option<String>,
}

pub const STATUS_OK: &str = "ok";

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    fn failed(target_bpppb: f64, bits: BitWidth, err: &Error) -> Self {
        SweepRow {
            target_bpppb,
            bits: bits.bits(),
            status: format!("failed: {err}"),
            depth: None,
            width: None,
            lr: None,
            param_count: None,
            bpppb: None,
            file_bpppb: None,
            mse: None,
            psnr: None,
            iteration: None,
            wall_seconds: None,
            file: None,
        }
    }
}

pub fn sweep_file_name(target_bpppb: f64, bits: BitWidth) -> String {
    format!("rd_b{}_t{}.hsic", bits.bits(), target_bpppb)
}

/// Compresses `cube` once per `(bits, target)` pair, in that order. A
/// failing row is recorded and the sweep continues. With `out_dir`, every
/// successful bitstream is written there.
pub fn rd_sweep(
    cube: &HyperCube,
    targets: &[f64],
    bits: &[BitWidth],
    base: &CompressSettings,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    if targets.is_empty() || bits.is_empty() {
        return Err(Error::InvalidSettings(
            "sweep needs at least one target and one bit width".into(),
        ));
    }
    let mut pairs: Vec<(BitWidth, f64)> = bits
        .iter()
        .flat_map(|b| targets.iter().map(move |t| (*b, *t)))
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut rows = Vec::with_capacity(pairs.len());
    for (bits, target) in pairs {
        let settings = CompressSettings {
            architecture: Architecture::Budget {
                target_bpppb: target,
            },
            bits,
            ..base.clone()
        };
        let row = compress(cube, &settings).and_then(|r| {
            let file = match out_dir {
                Some(dir) => {
                    let path: PathBuf = dir.join(sweep_file_name(target, bits));
                    fs::write(&path, r.bytes()).map_err(|e| Error::io(&path, e))?;
                    Some(path.display().to_string())
                }
                None => None,
            };
            Ok(SweepRow {
                target_bpppb: target,
                bits: bits.bits(),
                status: STATUS_OK.into(),
                depth: Some(r.config.hidden_layers),
                width: Some(r.config.hidden_width),
                lr: Some(r.lr),
                param_count: Some(r.config.param_count()),
                bpppb: Some(r.param_bpppb),
                file_bpppb: Some(r.file_bpppb),
                mse: Some(r.mse),
                psnr: Some(r.psnr),
                iteration: Some(r.best_iteration),
                wall_seconds: Some(r.wall_seconds),
                file,
            })
        });
        rows.push(row.unwrap_or_else(|e| SweepRow::failed(target, bits, &e)));
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: io::Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_sweep_csv<R: io::Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::bitstream::HEADER_BITS;
    use crate::cube::CubeHeader;
    use crate::fixtures::{gen_smooth_cube, SyntheticSpec};

    fn quick(arch: Architecture) -> CompressSettings {
        CompressSettings {
            architecture: arch,
            train: TrainSettings {
                iterations: 20,
                eval_every: 10,
                ..Default::default()
            },
            search: SearchSpace {
                probe_iterations: 5,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn small() -> HyperCube {
        gen_smooth_cube(&SyntheticSpec::new(8, 8, 4, 3)).unwrap()
    }

    #[test]
    fn fixed_architecture_accounting() {
        let cube = small();
        let r = compress(&cube, &quick(Architecture::Fixed { depth: 2, width: 8 })).unwrap();
        let params = r.config.param_count();
        assert_eq!(r.file_bits, HEADER_BITS + params * 16);
        assert_eq!(r.bytes().len() as u64 * 8, r.file_bits);
        assert_eq!(r.file_bpppb, r.file_bits as f64 / 256.0);
        assert_eq!(r.point().bpppb, r.file_bpppb);
        assert!(r.psnr.is_finite());
    }

    #[test]
    fn budget_run_stays_within_target() {
        let cube = small();
        let r = compress(&cube, &quick(Architecture::Budget { target_bpppb: 32.0 })).unwrap();
        assert!(r.param_bpppb <= 32.0);
        let found = r.search.unwrap();
        assert_eq!(found.best, r.config);
    }

    #[test]
    fn omega0_is_stored_as_trained() {
        let cube = small();
        let mut s = quick(Architecture::Fixed { depth: 1, width: 4 });
        s.omega0 = 0.1;
        let r = compress(&cube, &s).unwrap();
        assert_eq!(r.config.omega0, 0.1f32 as f64);
        assert_eq!(r.compressed.config(), r.config);
    }

    #[test]
    fn compare_uses_reference_range() {
        let h = CubeHeader::new(1, 2, 1);
        let a = HyperCube::new(h, vec![0.0, 10.0]).unwrap();
        let b = HyperCube::new(h, vec![1.0, 10.0]).unwrap();
        let (err, db) = compare(&a, &b, None).unwrap();
        assert!((err - 0.005).abs() < 1e-15);
        assert!((db - psnr_unit(0.005)).abs() < 1e-12);
        let (err, _) = compare(&a, &b, Some(10.0)).unwrap();
        assert_eq!(err, 0.5);
    }

    #[test]
    fn sweep_orders_rows_and_isolates_failures() {
        let cube = small();
        let dir = tempfile::tempdir().unwrap();
        // 1e-3 bpppb cannot hold any network
        let rows = rd_sweep(
            &cube,
            &[32.0, 1e-3],
            &[BitWidth::B32, BitWidth::B16],
            &quick(Architecture::Budget { target_bpppb: 1.0 }),
            Some(dir.path()),
        )
        .unwrap();
        let keys: Vec<(u32, f64)> = rows.iter().map(|r| (r.bits, r.target_bpppb)).collect();
        assert_eq!(keys, vec![(16, 1e-3), (16, 32.0), (32, 1e-3), (32, 32.0)]);
        assert!(!rows[0].is_ok() && rows[0].status.starts_with("failed"));
        assert!(rows[1].is_ok() && rows[3].is_ok());
        for row in rows.iter().filter(|r| r.is_ok()) {
            assert!(row.bpppb.unwrap() <= row.target_bpppb);
            assert!(Path::new(row.file.as_ref().unwrap()).exists());
        }

        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let cube = small();
        let s = quick(Architecture::Budget { target_bpppb: 1.0 });
        assert!(rd_sweep(&cube, &[], &[BitWidth::B16], &s, None).is_err());
    }
}
