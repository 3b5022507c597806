//! The `ssf` command-line interface.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (unreadable inputs, bad checkpoints, diverged training), 3 decode error.
//! Setting `SSF_DETERMINISTIC=1` pins all tensor math to one thread so that
//! streams decode bit-exactly on any machine with the same binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::codec::{compress_gop, GopPlan, StreamDecoder};
use crate::data::{gen_synthetic, load_dataset, write_frames, ChunkMode};
use crate::error::{data_err, invalid, Error, Result};
use crate::eval::{emit_rd_curve, eval_model, EvalOptions, EvalReport};
use crate::training::{sweep, train, TrainConfig, TrainOutputs};
use crate::transforms::TransformFamily;

pub const DETERMINISTIC_ENV: &str = "SSF_DETERMINISTIC";

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DECODE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ssf", version, about = "Scale-space flow learned video codec")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic sequence of drifting blobs as 16-bit PNGs.
    GenData {
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model.
    Train {
        #[command(flatten)]
        common: TrainArgs,
        #[arg(long)]
        lambda: Option<f64>,
        /// Output checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV; defaults to `<out>.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train and evaluate one model per lambda.
    Sweep {
        #[command(flatten)]
        common: TrainArgs,
        /// Comma-separated lambdas; defaults to the standard nine-point set.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        /// Evaluation frames; defaults to `--data`.
        #[arg(long)]
        eval_data: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        gop: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compress a directory of frames into one `.ssfv` stream.
    Compress {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30)]
        gop: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a stream into 16-bit PNG frames.
    Decompress {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure PSNR and bpp on decoded streams.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 30)]
        gop: usize,
        /// Exclude the 31-byte container header from bpp.
        #[arg(long)]
        payload_only: bool,
    },
    /// Collect eval reports into CSV, JSON and SVG curves.
    RdCurve {
        /// Glob matching report JSON files.
        #[arg(long)]
        reports: String,
        /// Output path prefix.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` config file; desk defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides the config's transform family.
    #[arg(long)]
    pub family: Option<TransformFamily>,
    /// Overrides the config's step count.
    #[arg(long)]
    pub steps: Option<usize>,
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::from_file(p)?,
            None => TrainConfig::desk(),
        };
        if let Some(f) = self.family {
            cfg.family = f;
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        Ok(cfg)
    }
}

/// Maps an error onto the documented exit codes.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => EXIT_USAGE,
        Error::Decode(_) | Error::FrameDecode { .. } => EXIT_DECODE,
        _ => EXIT_DATA,
    }
}

fn run_command(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData {
            frames,
            size,
            seed,
            out,
        } => {
            let ds = gen_synthetic(frames, size, seed)?;
            let files = write_frames(&ds.frames, &out)?;
            println!("wrote {} frames to {}", files.len(), out.display());
        }
        Command::Train {
            common,
            lambda,
            out,
            log,
        } => {
            let mut cfg = common.config()?;
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            cfg.validate()?;
            let data = load_dataset(&common.data, ChunkMode::Train)?;
            let log = log.unwrap_or_else(|| out.with_extension("log.csv"));
            let outcome = train(
                &data,
                &cfg,
                &TrainOutputs {
                    checkpoint: Some(out.clone()),
                    log_csv: Some(log),
                },
            )?;
            println!(
                "trained {} steps, final loss {:.6}, checkpoint {}",
                outcome.record.steps,
                outcome.record.final_loss.unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Sweep {
            common,
            lambdas,
            eval_data,
            gop,
            out,
        } => {
            let cfg = common.config()?;
            let lambdas = if lambdas.is_empty() {
                crate::training::SWEEP_LAMBDAS.to_vec()
            } else {
                lambdas
            };
            let train_data = load_dataset(&common.data, ChunkMode::Train)?;
            let eval_data = match eval_data {
                Some(p) => load_dataset(p, ChunkMode::Test)?,
                None => train_data.clone().with_mode(ChunkMode::Test),
            };
            let opts = EvalOptions {
                plan: GopPlan::new(gop)?,
                ..EvalOptions::default()
            };
            let entries = sweep(&train_data, &eval_data, &cfg, &lambdas, &opts, &out)?;
            println!("lambda,bpp,psnr_db,reused");
            for e in entries {
                println!("{},{:.5},{:.3},{}", e.lambda, e.point.bpp, e.point.psnr_db, e.reused);
            }
        }
        Command::Compress {
            ckpt,
            data,
            gop,
            out,
        } => {
            let (model, _) = checkpoint::load(&ckpt)?;
            let ds = load_dataset(&data, ChunkMode::Test)?;
            let enc = compress_gop(&ds.frames, &model, &GopPlan::new(gop)?)?;
            std::fs::write(&out, &enc.bytes).map_err(|e| Error::io(&out, e))?;
            println!(
                "{} frames -> {} bytes ({:.4} bpp)",
                ds.len(),
                enc.bytes.len(),
                crate::metrics::bpp(enc.bytes.len(), ds.len(), ds.height(), ds.width(), true)
            );
        }
        Command::Decompress { ckpt, input, out } => {
            let (model, _) = checkpoint::load(&ckpt)?;
            let bytes = std::fs::read(&input).map_err(|e| Error::io(&input, e))?;
            let frames = StreamDecoder::new(&bytes, &model)?.collect::<Result<Vec<_>>>()?;
            write_frames(&frames, &out)?;
            println!("decoded {} frames to {}", frames.len(), out.display());
        }
        Command::Eval {
            ckpt,
            data,
            report,
            gop,
            payload_only,
        } => {
            let (model, rec) = checkpoint::load(&ckpt)?;
            let ds = load_dataset(&data, ChunkMode::Test)?;
            let opts = EvalOptions {
                plan: GopPlan::new(gop)?,
                include_header: !payload_only,
                lambda: rec.lambda.unwrap_or(f64::NAN),
                ..EvalOptions::default()
            };
            let r = eval_model(&model, &ds, &opts)?;
            r.save(&report)?;
            println!(
                "{}: {:.5} bpp, {:.3} dB over {} frames",
                r.point.family,
                r.point.bpp,
                r.point.psnr_db,
                r.frames.len()
            );
        }
        Command::RdCurve { reports, out } => {
            let paths: Vec<PathBuf> = glob::glob(&reports)
                .map_err(|e| invalid!("bad glob `{reports}`: {e}"))?
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| data_err!("{e}"))?;
            if paths.is_empty() {
                return Err(data_err!("no reports match `{reports}`"));
            }
            let points = paths
                .iter()
                .map(|p| EvalReport::load(p).map(|r| r.point))
                .collect::<Result<Vec<_>>>()?;
            for f in emit_rd_curve(&points, &out)? {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code(&e)
        }
    }
}

/// Applies `SSF_DETERMINISTIC` before any tensor work starts.
pub fn configure_threads() {
    if std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| v == "1") {
        std::env::set_var("RAYON_NUM_THREADS", "1");
    }
}
