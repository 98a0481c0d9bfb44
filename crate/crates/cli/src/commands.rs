use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use hsic_core::codec::bitstream::encode;
use hsic_core::codec::decode::decode_grid;
use hsic_core::cube::{read_cube, read_header, write_cube, write_header, CubeHeader, HyperCube};
use hsic_core::metrics::save_rd_csv;
use hsic_core::pipeline::write_sweep_csv;
use hsic_core::search::write_report_csv;
use hsic_core::{
    compare, compress, gen_smooth_cube, make_grid, normalize, rd_sweep, read_bitstream, search,
    Architecture, Budget, CompressSettings, CoordGrid, Precision, SearchSpace, SyntheticSpec,
    TrainSettings,
};

use crate::args::{
    sidecar, Command, CompressArgs, CubeInput, DecompressArgs, EvalArgs, FixturesAction, GenArgs,
    ReplayArgs, SearchArgs, SearchFlags, SweepArgs, TrainArgs,
};
use crate::manifest::{manifest_path, now_unix, sibling, RunManifest};

/// Bad flag combinations the argument parser cannot express.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

struct Finished {
    resolved: serde_json::Value,
    outputs: Vec<PathBuf>,
    /// Where the manifest goes; `None` for commands without file outputs.
    manifest: Option<PathBuf>,
}

pub fn run(mut command: Command) -> Result<()> {
    if let Command::Replay(args) = command {
        return replay(args);
    }
    command.absolutize()?;
    let started = now_unix();
    let done = match &command {
        Command::Compress(a) => cmd_compress(a)?,
        Command::Decompress(a) => cmd_decompress(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::Search(a) => cmd_search(a)?,
        Command::RdSweep(a) => cmd_rd_sweep(a)?,
        Command::Fixtures(f) => match &f.action {
            FixturesAction::Gen(g) => cmd_gen(g)?,
        },
        Command::Replay(_) => unreachable!(),
    };
    if let Some(path) = done.manifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            run: command,
            resolved: done.resolved,
            outputs: done.outputs,
            started_unix: started,
            finished_unix: now_unix(),
        }
        .write(&path)?;
    }
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<()> {
    let manifest = RunManifest::read(&args.manifest)?;
    let mut command = manifest.run;
    if matches!(command, Command::Replay(_)) {
        return Err(UsageError("a manifest cannot record a replay".into()).into());
    }
    if let Some(dir) = args.out_dir {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        command.redirect_outputs(&std::path::absolute(dir)?);
    }
    run(command)
}

fn load_cube(input: &CubeInput) -> Result<HyperCube> {
    let header = read_header(input.header_path())?;
    Ok(read_cube(&input.input, &header)?)
}

fn train_settings(t: &TrainArgs) -> TrainSettings {
    TrainSettings {
        iterations: t.iterations,
        lr: t.lr,
        batch: t.batch,
        seed: t.seed,
        eval_every: t.eval_every,
    }
}

fn search_space(s: &SearchFlags, t: &TrainArgs) -> SearchSpace {
    SearchSpace {
        depths: s.depths.clone(),
        widths: s.min_width..=s.max_width,
        lrs: if s.lrs.is_empty() {
            vec![t.lr]
        } else {
            s.lrs.clone()
        },
        probe_iterations: s.probe_iters,
        omega0: t.omega0,
    }
}

fn base_settings(t: &TrainArgs, s: &SearchFlags) -> CompressSettings {
    CompressSettings {
        omega0: t.omega0,
        precision: t.precision,
        train: train_settings(t),
        search: search_space(s, t),
        ..Default::default()
    }
}

fn cmd_compress(a: &CompressArgs) -> Result<Finished> {
    let architecture = match (a.depth, a.width, a.target_bpppb) {
        (Some(depth), Some(width), None) => Architecture::Fixed { depth, width },
        (None, None, Some(target_bpppb)) => Architecture::Budget { target_bpppb },
        _ => {
            return Err(
                UsageError("give either --depth and --width, or --target-bpppb".into()).into(),
            )
        }
    };
    let cube = load_cube(&a.cube)?;
    let settings = CompressSettings {
        architecture,
        bits: a.bits,
        ..base_settings(&a.train, &a.search)
    };
    let result = compress(&cube, &settings)?;

    fs::write(&a.out, encode(&result.compressed))
        .with_context(|| format!("writing {}", a.out.display()))?;
    let trace = sibling(&a.out, "trace.csv");
    save_rd_csv(&result.trace, &trace)?;
    let mut outputs = vec![a.out.clone(), trace];
    if let Some(found) = &result.search {
        let report = sibling(&a.out, "search.csv");
        write_report_csv(&found.report, create(&report)?)?;
        outputs.push(report);
    }

    let p = result.point();
    println!(
        "depth={} width={} params={} bits={} bpppb={} file_bpppb={} mse={:e} psnr={:.4} trained_psnr={:.4} iteration={} wall_seconds={:.3}",
        result.config.hidden_layers,
        result.config.hidden_width,
        result.config.param_count(),
        a.bits,
        result.param_bpppb,
        p.bpppb,
        p.mse,
        p.psnr,
        result.trained_psnr,
        p.iteration,
        p.wall_seconds
    );
    let resolved = serde_json::json!({
        "settings": settings,
        "config": result.config,
        "lr": result.lr,
    });
    Ok(Finished {
        resolved,
        manifest: Some(manifest_path(&a.out)),
        outputs,
    })
}

fn cmd_decompress(a: &DecompressArgs) -> Result<Finished> {
    let cm = read_bitstream(&a.input)?;
    let (rows, cols) = (cm.image.rows as usize, cm.image.cols as usize);
    let grid = match (a.scale, a.crop) {
        (Some(k), _) => CoordGrid::strided(rows, cols, k)?,
        (None, Some(c)) => CoordGrid::window(rows, cols, c.row0, c.col0, c.height, c.width)?,
        (None, None) => make_grid(rows, cols),
    };
    let cube = decode_grid(&cm, &grid)?;
    let header: CubeHeader = cube.header;
    write_cube(&cube, &a.out, &header)?;
    let side = sidecar(&a.out);
    write_header(&header, &side)?;
    println!(
        "{}x{}x{} {} {}",
        header.height, header.width, header.bands, header.interleave, header.sample_format
    );
    Ok(Finished {
        resolved: serde_json::to_value(header)?,
        manifest: Some(manifest_path(&a.out)),
        outputs: vec![a.out.clone(), side],
    })
}

fn cmd_eval(a: &EvalArgs) -> Result<Finished> {
    let reference = load_cube(&CubeInput {
        input: a.reference.clone(),
        header: a.reference_header.clone(),
    })?;
    let test = load_cube(&CubeInput {
        input: a.test.clone(),
        header: a.test_header.clone(),
    })?;
    let (mse, psnr) = compare(&reference, &test, a.peak)?;
    println!("mse={mse:e} psnr={psnr:.6}");
    let Some(out) = &a.out else {
        return Ok(Finished {
            resolved: serde_json::Value::Null,
            outputs: vec![],
            manifest: None,
        });
    };
    let mut f = create(out)?;
    writeln!(f, "mse,psnr\n{mse},{psnr}")?;
    Ok(Finished {
        resolved: serde_json::json!({ "peak": a.peak.unwrap_or(1.0), "normalized": a.peak.is_none() }),
        manifest: Some(manifest_path(out)),
        outputs: vec![out.clone()],
    })
}

fn cmd_search(a: &SearchArgs) -> Result<Finished> {
    let cube = normalize(load_cube(&a.cube)?)?;
    let budget = Budget::for_cube(a.target_bpppb, a.bits, &cube);
    let mut space = search_space(&a.search, &a.train);
    space.omega0 = space.omega0 as f32 as f64;
    let found = match a.train.precision {
        Precision::Fp32 => search::<f32>(&cube, &budget, &space, a.train.seed)?,
        Precision::Fp64 => search::<f64>(&cube, &budget, &space, a.train.seed)?,
    };
    write_report_csv(&found.report, create(&a.out)?)?;
    let best = &found.report[found.best_index];
    println!(
        "best depth={} width={} lr={} params={} bpppb={} probe_psnr={:.4}",
        best.hidden_layers,
        best.hidden_width,
        best.lr,
        best.param_count,
        best.bpppb,
        best.probe_psnr
    );
    Ok(Finished {
        resolved: serde_json::json!({ "budget": budget, "max_params": budget.max_params()?, "space": space }),
        manifest: Some(manifest_path(&a.out)),
        outputs: vec![a.out.clone()],
    })
}

fn cmd_rd_sweep(a: &SweepArgs) -> Result<Finished> {
    let cube = load_cube(&a.cube)?;
    if let Some(dir) = &a.streams_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let base = base_settings(&a.train, &a.search);
    let rows = rd_sweep(&cube, &a.targets, &a.bits, &base, a.streams_dir.as_deref())?;
    write_sweep_csv(&rows, create(&a.out)?)?;
    for r in &rows {
        match (r.bpppb, r.psnr) {
            (Some(rate), Some(psnr)) => println!(
                "bits={} target={} bpppb={rate} psnr={psnr:.4}",
                r.bits, r.target_bpppb
            ),
            _ => println!("bits={} target={} {}", r.bits, r.target_bpppb, r.status),
        }
    }
    let mut outputs = vec![a.out.clone()];
    outputs.extend(
        rows.iter()
            .filter_map(|r| r.file.as_ref().map(PathBuf::from)),
    );
    Ok(Finished {
        resolved: serde_json::to_value(&base)?,
        manifest: Some(manifest_path(&a.out)),
        outputs,
    })
}

fn cmd_gen(g: &GenArgs) -> Result<Finished> {
    let spec = if g.random {
        SyntheticSpec::random(g.rows, g.cols, g.bands, g.seed)
    } else {
        SyntheticSpec::new(g.rows, g.cols, g.bands, g.seed)
    };
    let cube = gen_smooth_cube(&spec)?;
    let header = spec.header().with_format(g.interleave, g.format);
    write_cube(&cube, &g.out, &header)?;
    let side = sidecar(&g.out);
    write_header(&header, &side)?;
    println!("{}x{}x{} -> {}", g.rows, g.cols, g.bands, g.out.display());
    Ok(Finished {
        resolved: serde_json::to_value(&spec)?,
        manifest: Some(manifest_path(&g.out)),
        outputs: vec![g.out.clone(), side],
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}
