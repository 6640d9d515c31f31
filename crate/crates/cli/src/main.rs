mod config;
mod input;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use otmorph::io::{load_idx, read_pgm_measure, save_dictionary, write_pgm};
use otmorph::morph::{evaluate_with, morph_with, EvaluateOptions, MorphOptions};
use otmorph::{
    learn_dictionary, morph4, GridMeasure, GroundCost, MorphMethod, MorphSequence, Projector,
    TransportSolver,
};

use crate::config::RunConfig;
use crate::input::{check_size, parse_prior, ImageSpec};

/// Bad flags, bad config values or inputs that cannot be used together.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "otmorph",
    version,
    about = "Manifold-constrained Wasserstein morphing"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML file with run settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// ADMM stopping tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_outer_iters: Option<usize>,
    /// Run exactly this many ADMM iterations per frame.
    #[arg(long, global = true)]
    fixed_iters: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    sparsity: Option<usize>,
    #[arg(long, global = true)]
    mmse_passes: Option<usize>,
    /// Projector noise as a multiple of the largest pixel mass.
    #[arg(long, global = true)]
    noise_sigma: Option<f64>,
    /// Sinkhorn marginal tolerance.
    #[arg(long, global = true)]
    sinkhorn_tol: Option<f64>,
    /// Worker threads for independent frames.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Exponent applied when converting between pixel levels and mass.
    #[arg(long, global = true, default_value_t = 1.0)]
    gamma: f64,
    /// Accept images larger than 64x64.
    #[arg(long, global = true)]
    allow_large: bool,
    /// Seconds to wait for each external projector reply.
    #[arg(long, global = true)]
    external_timeout: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a dictionary from an IDX image file.
    LearnDict {
        #[arg(long)]
        idx: PathBuf,
        #[arg(long)]
        atoms: Option<usize>,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        /// Use only the first N images.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Morph between two images and score the sequence.
    Morph {
        /// PGM file or `file.idx#index`.
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Number of intermediate frames.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, default_value = "none")]
        prior: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Start each frame from the previous frame's solver state.
        #[arg(long)]
        warm_start: bool,
    },
    /// Bilinear lattice of barycenters between four corner images.
    Barycenter4 {
        #[arg(long, num_args = 4, required = true)]
        images: Vec<String>,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value = "none")]
        prior: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Entropic transport cost between two images.
    Distance {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Score an existing directory of frame_*.pgm files.
    Evaluate {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value = "none")]
        prior: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 usage, 3 I/O, 4 external projector protocol, 1 anything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    use otmorph::Error as E;
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::Io(_) | E::TruncatedFile { .. } | E::BadMagic(_) | E::Format { .. } => 3,
                E::ProtocolViolation(_) | E::Timeout(_) | E::ProcessUnavailable(_) => 4,
                E::NotConverged => 1,
                _ => 2,
            };
        }
    }
    1
}

impl Global {
    fn run_config(&self) -> anyhow::Result<RunConfig> {
        let file = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            epsilon: self.epsilon,
            mu: self.mu,
            stop_tol: self.tol,
            max_outer_iters: self.max_outer_iters,
            fixed_iters: self.fixed_iters,
            seed: self.seed,
            sparsity: self.sparsity,
            mmse_passes: self.mmse_passes,
            noise_sigma: self.noise_sigma,
            ..Default::default()
        };
        let merged = file.overridden_by(&flags);
        merged.validate()?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            bail!(UsageError(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.jobs == Some(0) {
            bail!(UsageError("jobs must be at least 1".into()));
        }
        Ok(merged)
    }

    fn load(&self, spec: &str) -> anyhow::Result<GridMeasure<f64>> {
        ImageSpec::parse(spec).load(self.gamma, self.allow_large)
    }

    fn prior(&self, spec: &str, config: &RunConfig) -> anyhow::Result<Projector<f64>> {
        parse_prior(spec, config, self.external_timeout)
    }

    fn evaluate_options(&self, config: &RunConfig) -> EvaluateOptions<f64> {
        EvaluateOptions {
            sinkhorn: RunConfig::sinkhorn(self.sinkhorn_tol),
            seed: config.seed(),
            jobs: self.jobs,
        }
    }
}

fn same_shape(images: &[&GridMeasure<f64>]) -> anyhow::Result<()> {
    let first = images[0].shape();
    for m in &images[1..] {
        if m.shape() != first {
            bail!(UsageError(format!(
                "image sizes differ: {}x{} vs {}x{}",
                first.rows(),
                first.cols(),
                m.shape().rows(),
                m.shape().cols()
            )));
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:03}.pgm")
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    let mut config = g.run_config()?;
    match cli.command {
        Command::LearnDict {
            idx,
            atoms,
            epochs,
            limit,
            out,
        } => {
            if atoms.is_some() {
                config.atoms = atoms;
                config.validate()?;
            }
            if epochs == 0 {
                bail!(UsageError("epochs must be at least 1".into()));
            }
            let data = load_idx(&idx).with_context(|| format!("reading {}", idx.display()))?;
            check_size(data.shape.rows(), data.shape.cols(), g.allow_large)?;
            let count = limit.map_or(data.count, |l| l.min(data.count));
            let mut samples = Vec::with_capacity(count);
            for i in 0..count {
                // blank images carry no shape information
                if data.image(i).iter().any(|&b| b > 0) {
                    samples.push(data.measure::<f64>(i)?.into_mass());
                }
            }
            let dict = learn_dictionary(
                &samples,
                config.atoms(),
                config.sparsity(),
                epochs,
                config.seed(),
            )?;
            save_dictionary(&dict, &out).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Morph {
            a,
            b,
            frames,
            prior,
            out_dir,
            warm_start,
        } => {
            if frames.is_some() {
                config.n_frames = frames;
                config.validate()?;
            }
            let (x1, x2) = (g.load(&a)?, g.load(&b)?);
            same_shape(&[&x1, &x2])?;
            let projector = g.prior(&prior, &config)?;
            let cost = GroundCost::new(x1.shape(), config.epsilon())?;
            let admm = config.admm(x1.len(), g.sinkhorn_tol);
            let options = MorphOptions {
                jobs: g.jobs,
                warm_start,
            };
            let seq = morph_with(
                &x1,
                &x2,
                config.n_frames(),
                &projector,
                &cost,
                &admm,
                options,
            )?;
            create_dir(&out_dir)?;
            for (i, f) in seq.frames.iter().enumerate() {
                let path = out_dir.join(frame_name(i));
                write_pgm(f, &path, g.gamma)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            // score what was written, so `evaluate` on the directory agrees
            let written = read_frames(&out_dir, g.gamma)?;
            let report = evaluate_with(&written, &cost, &projector, &g.evaluate_options(&config))?;
            let text = report::render(&report);
            let path = out_dir.join("metrics.txt");
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            print!("{text}");
        }
        Command::Barycenter4 {
            images,
            steps,
            prior,
            out_dir,
        } => {
            let loaded = images
                .iter()
                .map(|s| g.load(s))
                .collect::<anyhow::Result<Vec<_>>>()?;
            same_shape(&loaded.iter().collect::<Vec<_>>())?;
            let corners: [GridMeasure<f64>; 4] = loaded.try_into().expect("clap enforces four");
            let projector = g.prior(&prior, &config)?;
            let cost = GroundCost::new(corners[0].shape(), config.epsilon())?;
            let admm = config.admm(corners[0].len(), g.sinkhorn_tol);
            let options = MorphOptions {
                jobs: g.jobs,
                warm_start: false,
            };
            let grid = morph4(&corners, steps, &projector, &cost, &admm, options)?;
            create_dir(&out_dir)?;
            for (i, row) in grid.iter().enumerate() {
                for (j, cell) in row.iter().enumerate() {
                    let path = out_dir.join(format!("cell_{i}_{j}.pgm"));
                    write_pgm(cell, &path, g.gamma)
                        .with_context(|| format!("writing {}", path.display()))?;
                }
            }
        }
        Command::Distance { a, b } => {
            let (x1, x2) = (g.load(&a)?, g.load(&b)?);
            same_shape(&[&x1, &x2])?;
            let cost = GroundCost::new(x1.shape(), config.epsilon())?;
            let solver = TransportSolver::new(cost, RunConfig::sinkhorn(g.sinkhorn_tol))?;
            let r = solver.solve(&x1, &x2, None)?;
            if !r.potentials.converged {
                log::warn!(
                    "Sinkhorn stopped after {} iterations without converging",
                    r.potentials.iterations
                );
            }
            println!("sharp={}", r.cost);
            println!("regularized={}", r.regularized);
            println!("entropic={}", r.entropic);
            println!("converged={}", r.potentials.converged);
        }
        Command::Evaluate { frames, prior } => {
            let seq = read_frames(&frames, g.gamma)?;
            check_size(
                seq.frames[0].shape().rows(),
                seq.frames[0].shape().cols(),
                g.allow_large,
            )?;
            let projector = g.prior(&prior, &config)?;
            let cost = GroundCost::new(seq.frames[0].shape(), config.epsilon())?;
            let report = evaluate_with(&seq, &cost, &projector, &g.evaluate_options(&config))?;
            print!("{}", report::render(&report));
        }
    }
    Ok(())
}

/// `frame_000.pgm`, `frame_001.pgm`, … in index order; the numbering must be
/// contiguous from zero.
fn read_frames(dir: &Path, gamma: f64) -> anyhow::Result<MorphSequence<f64>> {
    let mut frames = Vec::new();
    loop {
        let path = dir.join(frame_name(frames.len()));
        if !path.exists() {
            break;
        }
        frames.push(
            read_pgm_measure(&path, gamma)
                .with_context(|| format!("reading {}", path.display()))?,
        );
    }
    if frames.len() < 2 {
        bail!(UsageError(format!(
            "{} holds fewer than two frames (expected frame_000.pgm, frame_001.pgm, …)",
            dir.display()
        )));
    }
    same_shape(&frames.iter().collect::<Vec<_>>())?;
    Ok(MorphSequence::from_frames(
        frames,
        MorphMethod::ExternalInterpolation,
    )?)
}
