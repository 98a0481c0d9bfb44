//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Exits non-zero when any criterion fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hsic_core::codec::bitstream::{decode, encode, stream_bits, HEADER_BITS};
use hsic_core::codec::decode::{decode_grid, reconstruct};
use hsic_core::codec::quant::dequantize;
use hsic_core::codec::CoordGrid;
use hsic_core::cube::{CubeHeader, HyperCube, Interleave, NormParams, SampleFormat};
use hsic_core::metrics::{read_rd_csv, write_rd_csv};
use hsic_core::pipeline::read_sweep_csv;
use hsic_core::{
    bpppb, decode_partial, decompress, file_bpppb, init_siren, make_grid, mse, normalize, psnr,
    quantize, read_bitstream, read_cube, read_header, write_cube, BitWidth, CompressedModel, Error,
    ImageInfo, RdPoint, SirenConfig, SirenModel,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn(&mut Ctx) -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// A bitstream produced during the run and the rates reported for it.
struct Produced {
    path: PathBuf,
    file_bpppb: f64,
    param_bpppb: Option<f64>,
}

struct Ctx {
    dir: PathBuf,
    fixture: PathBuf,
    trained: Option<PathBuf>,
    produced: Vec<Produced>,
}

fn hsic(dir: &Path, args: &[&str]) -> Result<HashMap<String, String>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hsic"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "hsic {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout)
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

fn num(kv: &HashMap<String, String>, key: &str) -> Result<f64, String> {
    kv.get(key)
        .ok_or_else(|| format!("missing {key}"))?
        .parse()
        .map_err(|e| format!("{key}: {e}"))
}

fn fixture_cube(ctx: &Ctx) -> HyperCube {
    let header = read_header(ctx.fixture.with_extension("json")).unwrap();
    normalize(read_cube(&ctx.fixture, &header).unwrap()).unwrap()
}

// ---- 1

const H: f64 = 1e-5;

fn worst_fd_ratio(model: &SirenModel<f64>, coords: &Array2<f64>, targets: &Array2<f64>) -> f64 {
    let loss = |flat: &[f64]| {
        let m = SirenModel::from_flat(model.config, flat).unwrap();
        m.loss_and_grad(coords.view(), targets.view()).unwrap().0
    };
    let (_, grads) = model.loss_and_grad(coords.view(), targets.view()).unwrap();
    let analytic: Vec<f64> = grads
        .iter()
        .flat_map(|l| l.values().collect::<Vec<_>>())
        .collect();
    let flat = model.to_flat();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let mut p = flat.clone();
        p[i] += H;
        let mut m = flat.clone();
        m[i] -= H;
        let numeric = (loss(&p) - loss(&m)) / (2.0 * H);
        let allowed = 1e-4 * a.abs().max(numeric.abs()) + 1e-8;
        worst = worst.max((a - numeric).abs() / allowed);
    }
    worst
}

fn gradient_oracle(_: &mut Ctx) -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut components = 0;
    for _ in 0..50 {
        let depth = rng.gen_range(1..=3);
        let width = rng.gen_range(1..=8);
        let out = rng.gen_range(1..=4);
        let rows = rng.gen_range(1..=16);
        let model = init_siren::<f64>(SirenConfig::new(depth, width, out), rng.gen()).unwrap();
        let coords = Array2::from_shape_fn((rows, 2), |_| rng.gen_range(-1.0..=1.0));
        let targets = Array2::from_shape_fn((rows, out), |_| rng.gen_range(0.0..=1.0));
        components += model.param_count();
        worst = worst.max(worst_fd_ratio(&model, &coords, &targets));
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{components} components, worst error/allowed {worst:.3}, {secs:.1}s");
    ensure(worst <= 1.0 && secs < 30.0, || detail.clone())?;
    Ok(detail)
}

// ---- 2

fn overfit_floor(ctx: &mut Ctx) -> Check {
    let kv = hsic(
        &ctx.dir,
        &[
            "compress",
            "-i",
            "fixture.raw",
            "-o",
            "trained32.hsic",
            "--depth",
            "3",
            "--width",
            "64",
            "--bits",
            "32",
            "--lr",
            "2e-4",
            "--iterations",
            "20000",
            "--seed",
            "0",
        ],
    )?;
    let path = ctx.dir.join("trained32.hsic");
    ctx.trained = Some(path.clone());
    ctx.produced.push(Produced {
        path,
        file_bpppb: num(&kv, "file_bpppb")?,
        param_bpppb: Some(num(&kv, "bpppb")?),
    });
    let best = num(&kv, "trained_psnr")?;
    let detail = format!(
        "best PSNR {best:.2} dB at iteration {}, {:.0}s",
        kv["iteration"],
        num(&kv, "wall_seconds")?
    );
    ensure(best >= 45.0, || detail.clone())?;
    Ok(detail)
}

// ---- 3

fn quantization_claim(ctx: &mut Ctx) -> Check {
    let path = ctx.trained.clone().ok_or("criterion 2 produced no model")?;
    let cube = fixture_cube(ctx);
    let full = read_bitstream(&path).map_err(|e| e.to_string())?;
    let model = dequantize(&full).map_err(|e| e.to_string())?;
    let mut db = Vec::new();
    for bits in BitWidth::ALL {
        let cm = quantize(&model, bits, full.image).map_err(|e| e.to_string())?;
        let p = ctx.dir.join(format!("trained{bits}.hsic"));
        std::fs::write(&p, encode(&cm)).map_err(|e| e.to_string())?;
        let (m, n, c) = (cube.height(), cube.width(), cube.bands());
        ctx.produced.push(Produced {
            path: p,
            file_bpppb: file_bpppb(stream_bits(&cm), m, n, c),
            param_bpppb: Some(bpppb(cm.param_count(), bits.bits(), m, n, c)),
        });
        let err =
            mse(&reconstruct(&cm).map_err(|e| e.to_string())?, &cube).map_err(|e| e.to_string())?;
        db.push(psnr(err, 1.0).map_err(|e| e.to_string())?);
    }
    let (p32, p16, p8) = (db[0], db[1], db[2]);
    let (drop16, drop8) = (p32 - p16, p16 - p8);
    let detail = format!(
        "PSNR 32/16/8 = {p32:.3}/{p16:.3}/{p8:.3} dB; 32->16 drop {drop16:.3} dB (< 0.5 required), 16->8 drop {drop8:.3} dB"
    );
    ensure(drop16 < 0.5 && drop8 > drop16, || detail.clone())?;
    Ok(detail)
}

// ---- 4

fn rate_distortion_trend(ctx: &mut Ctx) -> Check {
    let start = Instant::now();
    hsic(
        &ctx.dir,
        &[
            "rd-sweep",
            "-i",
            "fixture.raw",
            "--targets",
            "0.5,1.0,2.0",
            "--bits",
            "16",
            "--iterations",
            "20000",
            "--seed",
            "0",
            "-o",
            "rd.csv",
            "--streams-dir",
            "streams",
        ],
    )?;
    let rows =
        read_sweep_csv(std::fs::File::open(ctx.dir.join("rd.csv")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(rows.len() == 3, || format!("{} rows", rows.len()))?;
    let mut psnrs = Vec::new();
    for r in &rows {
        ensure(r.is_ok(), || {
            format!("row {} failed: {}", r.target_bpppb, r.status)
        })?;
        ensure(r.bpppb.unwrap() <= r.target_bpppb, || {
            format!("row {} over budget", r.target_bpppb)
        })?;
        ctx.produced.push(Produced {
            path: PathBuf::from(r.file.clone().ok_or("row without bitstream")?),
            file_bpppb: r.file_bpppb.unwrap(),
            param_bpppb: r.bpppb,
        });
        psnrs.push(r.psnr.unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "PSNR at 0.5/1/2 bpppb = {:.2}/{:.2}/{:.2} dB (d,w = {}), {secs:.0}s",
        psnrs[0],
        psnrs[1],
        psnrs[2],
        rows.iter()
            .map(|r| format!("{},{}", r.depth.unwrap(), r.width.unwrap()))
            .collect::<Vec<_>>()
            .join(" / ")
    );
    ensure(
        psnrs.windows(2).all(|w| w[1] >= w[0]) && secs < 900.0,
        || detail.clone(),
    )?;
    Ok(detail)
}

// ---- 5

fn rate_exactness(ctx: &mut Ctx) -> Check {
    ensure(!ctx.produced.is_empty(), || {
        "no files from criteria 2-4".into()
    })?;
    for f in &ctx.produced {
        let bytes = std::fs::read(&f.path).map_err(|e| format!("{}: {e}", f.path.display()))?;
        let cm = decode(&bytes).map_err(|e| e.to_string())?;
        let b = cm.bit_width().bits() as u64;
        let layers = cm.config().layer_shapes().len() as u64;
        let extra = if b == 8 { 64 * layers } else { 0 };
        let bits = bytes.len() as u64 * 8;
        let expected = HEADER_BITS + cm.param_count() * b + extra;
        ensure(bits == expected, || {
            format!("{}: {bits} bits, expected {expected}", f.path.display())
        })?;
        let samples = cm.image.rows as f64 * cm.image.cols as f64 * cm.image.bands as f64;
        ensure(f.file_bpppb == bits as f64 / samples, || {
            format!(
                "{}: reported {} != {}",
                f.path.display(),
                f.file_bpppb,
                bits as f64 / samples
            )
        })?;
        if let Some(p) = f.param_bpppb {
            let exact = (cm.param_count() * b) as f64 / samples;
            ensure(p == exact, || {
                format!("{}: parameter rate {p} != {exact}", f.path.display())
            })?;
        }
    }
    Ok(format!("{} bitstreams checked", ctx.produced.len()))
}

// ---- 6

fn random_model(rng: &mut ChaCha8Rng, max_w: usize, bands: usize) -> SirenModel<f32> {
    let cfg = SirenConfig::new(rng.gen_range(1..=4), rng.gen_range(1..=max_w), bands)
        .with_omega0(rng.gen_range(1.0f32..60.0) as f64);
    let mut m = init_siren::<f32>(cfg, rng.gen()).unwrap();
    m.layers.last_mut().unwrap().bias.fill(0.5);
    m
}

fn random_info(rng: &mut ChaCha8Rng, bands: usize, max_side: u32) -> ImageInfo {
    ImageInfo {
        rows: rng.gen_range(1..=max_side),
        cols: rng.gen_range(1..=max_side),
        bands: bands as u32,
        interleave: Interleave::ALL[rng.gen_range(0..3)],
        norm: NormParams {
            lo: rng.gen_range(-100.0..0.0),
            hi: rng.gen_range(1.0..5000.0),
        },
    }
}

fn random_compressed(rng: &mut ChaCha8Rng, max_side: u32) -> CompressedModel {
    let bands = rng.gen_range(1..=8);
    let model = random_model(rng, 16, bands);
    let image = random_info(rng, bands, max_side);
    quantize(&model, BitWidth::ALL[rng.gen_range(0..3)], image).unwrap()
}

fn round_trips(ctx: &mut Ctx) -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for case in 0..200 {
        let bands = rng.gen_range(1..=8);
        let m = random_model(&mut rng, 16, bands);
        let cm = quantize(&m, BitWidth::B32, random_info(&mut rng, bands, 8)).unwrap();
        let back = dequantize(&cm).map_err(|e| e.to_string())?;
        let bits =
            |m: &SirenModel<f32>| m.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&back) == bits(&m), || {
            format!("32-bit case {case} not bit-exact")
        })?;
    }
    for case in 0..200 {
        let cm = random_compressed(&mut rng, 64);
        let bytes = encode(&cm);
        let back = decode(&bytes).map_err(|e| e.to_string())?;
        ensure(back == cm && encode(&back) == bytes, || {
            format!("bitstream case {case} differs")
        })?;
    }
    let path = ctx.dir.join("rt.raw");
    for case in 0..200 {
        let (h, w, c) = (
            rng.gen_range(1..=9),
            rng.gen_range(1..=9),
            rng.gen_range(1..=6),
        );
        let format = [
            SampleFormat::U8,
            SampleFormat::U16le,
            SampleFormat::F32le,
            SampleFormat::F64le,
        ][case % 4];
        let samples: Vec<f64> = (0..h * w * c)
            .map(|_| match format {
                SampleFormat::U8 => rng.gen_range(0..=255u32) as f64,
                SampleFormat::U16le => rng.gen_range(0..=65535u32) as f64,
                SampleFormat::F32le => rng.gen_range(-1e4f32..1e4) as f64,
                SampleFormat::F64le => rng.gen_range(-1e4..1e4),
            })
            .collect();
        let cube = HyperCube::new(CubeHeader::new(h, w, c), samples).unwrap();
        for il in Interleave::ALL {
            let header = CubeHeader::new(h, w, c).with_format(il, format);
            write_cube(&cube, &path, &header).map_err(|e| e.to_string())?;
            let back = read_cube(&path, &header).map_err(|e| e.to_string())?;
            ensure(back.samples == cube.samples, || {
                format!("cube case {case} ({il}, {format}) differs")
            })?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("3 x 200 cases in {secs:.1}s"))
}

// ---- 7

fn partial_decode(ctx: &mut Ctx) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let dir = ctx.dir.join("partial");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    for case in 0..20 {
        let cm = random_compressed(&mut rng, 16);
        let (rows, cols) = (cm.image.rows as usize, cm.image.cols as usize);
        let full = decompress(&cm).map_err(|e| e.to_string())?;
        let grid = make_grid(rows, cols);
        let out = decode_partial(&cm, grid.to_array::<f64>().view()).map_err(|e| e.to_string())?;
        let pixels = rows * cols;
        for p in 0..pixels {
            for b in 0..cm.image.bands as usize {
                ensure(
                    out[[p, b]].to_bits() == full.samples[b * pixels + p].to_bits(),
                    || format!("model {case}: pixel {p} band {b} differs"),
                )?;
            }
        }
        let window = decode_grid(
            &cm,
            &CoordGrid::window(rows, cols, 0, 0, rows, cols).unwrap(),
        )
        .unwrap();
        ensure(window.samples == full.samples, || {
            format!("model {case}: full-frame window differs")
        })?;

        std::fs::write(dir.join("m.hsic"), encode(&cm)).map_err(|e| e.to_string())?;
        hsic(&dir, &["decompress", "-i", "m.hsic", "-o", "full.raw"])?;
        let crop = format!("0,0,{rows},{cols}");
        hsic(
            &dir,
            &[
                "decompress",
                "-i",
                "m.hsic",
                "-o",
                "crop.raw",
                "--crop",
                &crop,
            ],
        )?;
        let a = std::fs::read(dir.join("full.raw")).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.join("crop.raw")).map_err(|e| e.to_string())?;
        ensure(a == b, || {
            format!("model {case}: --crop of the full frame differs from full decode")
        })?;
    }
    Ok("20 models".into())
}

// ---- 8

fn determinism(ctx: &mut Ctx) -> Check {
    let dir = &ctx.dir;
    hsic(
        dir,
        &[
            "compress",
            "-i",
            "fixture.raw",
            "-o",
            "det.hsic",
            "--depth",
            "2",
            "--width",
            "16",
            "--bits",
            "16",
            "--iterations",
            "500",
            "--batch",
            "256",
            "--precision",
            "fp64",
            "--seed",
            "11",
        ],
    )?;
    hsic(
        dir,
        &["replay", "det.manifest.json", "--out-dir", "replay1"],
    )?;
    hsic(
        dir,
        &["replay", "det.manifest.json", "--out-dir", "replay2"],
    )?;
    let read = |p: &str| std::fs::read(dir.join(p)).map_err(|e| e.to_string());
    let (a, b, c) = (
        read("det.hsic")?,
        read("replay1/det.hsic")?,
        read("replay2/det.hsic")?,
    );
    ensure(a == b && b == c, || "replayed bitstreams differ".into())?;
    Ok(format!("{} bytes, identical across 3 runs", a.len()))
}

// ---- 9

fn metric_identities(_: &mut Ctx) -> Check {
    let cube = |h, w, b, s: Vec<f64>| HyperCube::new(CubeHeader::new(h, w, b), s).unwrap();
    let a = cube(2, 2, 2, vec![0.9, 0.1, 0.4, 0.7, 0.3, 0.3, 0.8, 0.0]);
    let b = cube(2, 2, 2, vec![0.2, 0.6, 0.4, 0.1, 0.5, 0.9, 0.8, 1.0]);
    let mut sum = 0.0;
    for i in 0..8 {
        sum += (a.samples[i] - b.samples[i]) * (a.samples[i] - b.samples[i]);
    }
    ensure(mse(&a, &a).unwrap() == 0.0, || "mse(a, a) != 0".into())?;
    ensure(mse(&a, &b).unwrap() == sum / 8.0, || {
        "mse differs from brute-force sum".into()
    })?;
    let zeros = cube(2, 2, 2, vec![0.0; 8]);
    let halves = cube(2, 2, 2, vec![0.5; 8]);
    ensure(mse(&zeros, &halves).unwrap() == 0.25, || {
        "constant residual case".into()
    })?;
    ensure(psnr(0.01, 1.0).unwrap() == 20.0, || {
        format!("psnr(0.01) = {}", psnr(0.01, 1.0).unwrap())
    })?;
    ensure(psnr(0.0, 1.0).unwrap() == f64::INFINITY, || {
        "missing +inf sentinel".into()
    })?;
    let p = psnr(1.0, 255.0).unwrap();
    ensure(format!("{p:.2}") == "48.13", || {
        format!("psnr(1, 255) = {p}")
    })?;
    ensure(
        matches!(psnr(-1.0, 1.0), Err(Error::NegativeMse(_))),
        || "negative mse accepted".into(),
    )?;
    ensure(bpppb(1, 32, 1, 1, 32) == 1.0, || {
        "1 param, 32 bits, 1x1x32".into()
    })?;
    ensure(bpppb(57818, 16, 145, 145, 220) <= 0.2, || {
        "57818 params exceed 0.2".into()
    })?;
    ensure(
        bpppb(500, 32, 7, 9, 3) == 2.0 * bpppb(500, 16, 7, 9, 3),
        || "rate not linear in bits".into(),
    )?;
    let diff = file_bpppb(HEADER_BITS + 9032 * 16, 32, 32, 8) - bpppb(9032, 16, 32, 32, 8);
    ensure(diff == HEADER_BITS as f64 / 8192.0, || {
        format!("header overhead {diff}")
    })?;
    let six = psnr(0.003, 2.0).unwrap() - psnr(0.003, 1.0).unwrap();
    ensure((six - 20.0 * 2f64.log10()).abs() < 1e-12, || {
        format!("peak doubling adds {six}")
    })?;

    let points = vec![
        RdPoint::new(0.5, 1e-3, 10, 0.1),
        RdPoint::new(1.0, 0.0, 20, 0.2),
    ];
    let mut buf = Vec::new();
    write_rd_csv(&points, &mut buf).unwrap();
    ensure(String::from_utf8_lossy(&buf).contains(",inf,"), || {
        "inf not serialized as \"inf\"".into()
    })?;
    ensure(read_rd_csv(buf.as_slice()).unwrap() == points, || {
        "RdPoint CSV round trip".into()
    })?;
    Ok("all examples exact".into())
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path().to_path_buf();
    let mut ctx = Ctx {
        fixture: dir.join("fixture.raw"),
        dir: dir.clone(),
        trained: None,
        produced: Vec::new(),
    };
    if let Err(e) = hsic(&dir, &["fixtures", "gen", "-o", "fixture.raw"]) {
        eprintln!("cannot generate the fixture: {e}");
        std::process::exit(1);
    }

    let criteria: [Criterion; 9] = [
        ("gradient oracle", gradient_oracle),
        ("synthetic overfit floor", overfit_floor),
        ("quantization claim", quantization_claim),
        ("rate-distortion trend", rate_distortion_trend),
        ("file size and rate exactness", rate_exactness),
        ("bitstream and cube round trips", round_trips),
        ("partial decode equivalence", partial_decode),
        ("determinism", determinism),
        ("metric identities", metric_identities),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&mut ctx))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
