use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use hsic_core::codec::train::{DEFAULT_EVAL_EVERY, DEFAULT_ITERATIONS};
use hsic_core::cube::{Interleave, SampleFormat};
use hsic_core::search::DEFAULT_PROBE_ITERATIONS;
use hsic_core::{BitWidth, Precision};

#[derive(Debug, Parser)]
#[command(
    name = "hsic",
    version,
    about = "Hyperspectral cube compression with sinusoidal coordinate networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Encode a cube by overfitting a network to it
    Compress(CompressArgs),
    /// Decode a bitstream to a raw f32 cube, optionally as a preview or crop
    Decompress(DecompressArgs),
    /// Distortion between two cubes
    Eval(EvalArgs),
    /// Probe-train every architecture that fits a rate budget
    Search(SearchArgs),
    /// Compress at several rates and bit widths, one CSV row each
    RdSweep(SweepArgs),
    /// Synthetic test cubes
    Fixtures(FixturesArgs),
    /// Re-run the command recorded in a manifest
    Replay(ReplayArgs),
}

/// A raw cube and its JSON sidecar (default: the cube path with a `.json` extension).
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CubeInput {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub header: Option<PathBuf>,
}

impl CubeInput {
    pub fn header_path(&self) -> PathBuf {
        self.header.clone().unwrap_or_else(|| sidecar(&self.input))
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: u64,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 30.0)]
    pub omega0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pixels per step; full batch when omitted
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_EVAL_EVERY)]
    pub eval_every: u64,
    /// fp32 or fp64
    #[arg(long, default_value_t = Precision::Fp32)]
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SearchFlags {
    #[arg(long, default_value_t = DEFAULT_PROBE_ITERATIONS)]
    pub probe_iters: u64,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    pub depths: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    pub min_width: usize,
    #[arg(long, default_value_t = 1024)]
    pub max_width: usize,
    /// Learning rates to probe; defaults to --lr
    #[arg(long, value_delimiter = ',')]
    pub lrs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CompressArgs {
    #[command(flatten)]
    pub cube: CubeInput,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, requires = "width", conflicts_with = "target_bpppb")]
    pub depth: Option<usize>,
    #[arg(long, requires = "depth")]
    pub width: Option<usize>,
    /// Search for the architecture that best fits this parameter-only rate
    #[arg(long)]
    pub target_bpppb: Option<f64>,
    #[arg(long, default_value_t = BitWidth::B16)]
    pub bits: BitWidth,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub search: SearchFlags,
}

/// `row0,col0,height,width`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl FromStr for Crop {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [row0, col0, height, width] => Ok(Crop {
                row0,
                col0,
                height,
                width,
            }),
            _ => Err(format!("expected row0,col0,height,width, got {s:?}")),
        }
    }
}

impl fmt::Display for Crop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.row0, self.col0, self.height, self.width
        )
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DecompressArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Raw f32le output; the sidecar goes next to it
    #[arg(long, short)]
    pub out: PathBuf,
    /// Decode every k-th row and column
    #[arg(long, conflicts_with = "crop")]
    pub scale: Option<usize>,
    /// Decode only the window row0,col0,height,width
    #[arg(long)]
    pub crop: Option<Crop>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub reference_header: Option<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub test_header: Option<PathBuf>,
    /// PSNR peak on the raw scale; without it both cubes are scaled by the
    /// reference's range and the peak is 1
    #[arg(long)]
    pub peak: Option<f64>,
    /// Also write mse,psnr as CSV
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SearchArgs {
    #[command(flatten)]
    pub cube: CubeInput,
    #[arg(long)]
    pub target_bpppb: f64,
    #[arg(long, default_value_t = BitWidth::B16)]
    pub bits: BitWidth,
    /// Report CSV
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub cube: CubeInput,
    #[arg(long, value_delimiter = ',', required = true)]
    pub targets: Vec<f64>,
    #[arg(long = "bits", value_delimiter = ',', default_value = "16")]
    pub bits: Vec<BitWidth>,
    /// Sweep CSV
    #[arg(long, short)]
    pub out: PathBuf,
    /// Keep every row's bitstream in this directory
    #[arg(long)]
    pub streams_dir: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FixturesArgs {
    #[command(subcommand)]
    pub action: FixturesAction,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixturesAction {
    /// Write a smooth synthetic cube and its sidecar
    Gen(GenArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub rows: usize,
    #[arg(long, default_value_t = 32)]
    pub cols: usize,
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Draw the spatial frequencies from the seed instead of the defaults
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value_t = Interleave::Bsq)]
    pub interleave: Interleave,
    #[arg(long, default_value_t = SampleFormat::F32le)]
    pub format: SampleFormat,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded locations
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl Command {
    /// Resolves every path against the current directory so a manifest can
    /// be replayed from anywhere.
    pub fn absolutize(&mut self) -> std::io::Result<()> {
        let abs = |p: &mut PathBuf| -> std::io::Result<()> {
            *p = std::path::absolute(&*p)?;
            Ok(())
        };
        let abs_opt = |p: &mut Option<PathBuf>| -> std::io::Result<()> {
            if let Some(p) = p {
                *p = std::path::absolute(&*p)?;
            }
            Ok(())
        };
        match self {
            Command::Compress(a) => {
                abs(&mut a.cube.input)?;
                abs_opt(&mut a.cube.header)?;
                abs(&mut a.out)
            }
            Command::Decompress(a) => {
                abs(&mut a.input)?;
                abs(&mut a.out)
            }
            Command::Eval(a) => {
                abs(&mut a.reference)?;
                abs_opt(&mut a.reference_header)?;
                abs(&mut a.test)?;
                abs_opt(&mut a.test_header)?;
                abs_opt(&mut a.out)
            }
            Command::Search(a) => {
                abs(&mut a.cube.input)?;
                abs_opt(&mut a.cube.header)?;
                abs(&mut a.out)
            }
            Command::RdSweep(a) => {
                abs(&mut a.cube.input)?;
                abs_opt(&mut a.cube.header)?;
                abs(&mut a.out)?;
                abs_opt(&mut a.streams_dir)
            }
            Command::Fixtures(a) => match &mut a.action {
                FixturesAction::Gen(g) => abs(&mut g.out),
            },
            Command::Replay(a) => {
                abs(&mut a.manifest)?;
                abs_opt(&mut a.out_dir)
            }
        }
    }

    /// Moves every output into `dir`, keeping file names.
    pub fn redirect_outputs(&mut self, dir: &Path) {
        let move_to = |p: &mut PathBuf| {
            if let Some(name) = p.file_name() {
                *p = dir.join(name);
            }
        };
        match self {
            Command::Compress(a) => move_to(&mut a.out),
            Command::Decompress(a) => move_to(&mut a.out),
            Command::Eval(a) => {
                if let Some(out) = &mut a.out {
                    move_to(out)
                }
            }
            Command::Search(a) => move_to(&mut a.out),
            Command::RdSweep(a) => {
                move_to(&mut a.out);
                if let Some(d) = &mut a.streams_dir {
                    let name = d
                        .file_name()
                        .map(|n| n.to_owned())
                        .unwrap_or_else(|| "streams".into());
                    *d = dir.join(name);
                }
            }
            Command::Fixtures(a) => match &mut a.action {
                FixturesAction::Gen(g) => move_to(&mut g.out),
            },
            Command::Replay(_) => {}
        }
    }
}
