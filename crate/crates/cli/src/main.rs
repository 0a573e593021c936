use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use vhsc_core::geometry::io::load_mesh;
use vhsc_core::implicit_net::{Architecture, TrainConfig};
use vhsc_core::pipeline::{
    aggregate, build_corpus, compare_meshes, read_reports, run_benchmark_from, run_from_config, smoothed_ends,
    train_command, CorpusConfig, Family, RunConfig, SuiteConfig,
};
use vhsc_core::rng_from_seed;

#[derive(Parser)]
#[command(name = "vhsc", version, about = "Active visuo-haptic shape completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Desk,
    Compact,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Build a procedural training corpus.
    Corpus {
        #[arg(long)]
        out: PathBuf,
        /// CorpusConfig JSON; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        shapes: Option<usize>,
        #[arg(long)]
        rotations: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma separated subset of sphere,box,cylinder,capsule,superellipsoid.
        #[arg(long, value_delimiter = ',')]
        families: Option<Vec<String>>,
        /// Also write one scene JSON per view.
        #[arg(long)]
        scenes: bool,
    },
    /// Train the multi-shape decoder on a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Loss CSV; defaults to the checkpoint path with a `.loss.csv` suffix.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        /// TrainConfig JSON; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        arch: Option<Arch>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Print the loss every this many iterations (0 disables).
        #[arg(long, default_value_t = 100)]
        every: usize,
    },
    /// One active completion run.
    Run {
        /// RunConfig JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        touches: Option<usize>,
    },
    /// Benchmark matrix; resumes completed cells.
    Bench {
        /// SuiteConfig JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Chamfer and Jaccard between meshes, or aggregates of a steps CSV.
    Metrics {
        #[arg(long, requires = "truth", conflicts_with = "steps")]
        recon: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// steps.csv to aggregate per (reconstructor, policy, t).
        #[arg(long)]
        steps: Option<PathBuf>,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn family(name: &str) -> Result<Family> {
    Family::ALL.into_iter().find(|f| f.name() == name).with_context(|| format!("unknown shape family '{name}'"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Corpus { out, config, shapes, rotations, points, seed, families, scenes } => {
            let mut cfg: CorpusConfig = match config {
                Some(p) => read_json(&p)?,
                None => CorpusConfig::default(),
            };
            cfg.shapes = shapes.unwrap_or(cfg.shapes);
            cfg.rotations = rotations.unwrap_or(cfg.rotations);
            cfg.points = points.unwrap_or(cfg.points);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.scenes |= scenes;
            if let Some(names) = families {
                cfg.families = names.iter().map(|n| family(n)).collect::<Result<_>>()?;
            }
            let m = build_corpus(&cfg, &out)?;
            println!("wrote {} clouds to {}", m.entries.len(), out.display());
        }
        Command::Train { corpus, out, loss_csv, config, arch, iterations, seed, every } => {
            let mut cfg: TrainConfig = match config {
                Some(p) => read_json(&p)?,
                None => TrainConfig::default(),
            };
            if let Some(a) = arch {
                cfg.architecture = match a {
                    Arch::Desk => Architecture::desk(),
                    Arch::Compact => Architecture::compact(),
                    Arch::Full => Architecture::full(),
                };
            }
            cfg.iterations = iterations.unwrap_or(cfg.iterations);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let loss_path = loss_csv.unwrap_or_else(|| {
                let mut s = out.clone().into_os_string();
                s.push(".loss.csv");
                PathBuf::from(s)
            });
            let (_, trace) = train_command(&corpus, &cfg, &out, &loss_path, |r| {
                if every > 0 && r.iteration % every == 0 {
                    eprintln!("iter {:>6}  loss {:.6}  data {:.6}  normal {:.6}  eikonal {:.6}", r.iteration, r.total, r.data, r.normal, r.eikonal);
                }
            })?;
            if let Some((a, b)) = smoothed_ends(&trace, 50) {
                println!("smoothed loss {a:.6} -> {b:.6}; checkpoint {}", out.display());
            }
        }
        Command::Run { config, seed, out, touches } => {
            let mut cfg: RunConfig = read_json(&config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.touches = touches.unwrap_or(cfg.touches);
            if let Some(o) = out {
                cfg.output = o;
            }
            let result = run_from_config(&cfg)?;
            println!("t  chamfer    jaccard  outcome   seconds");
            for r in &result.reports {
                println!("{:<2} {:<10.6} {:<8.4} {:<9} {:.1}", r.t, r.chamfer, r.jaccard, r.outcome, r.seconds);
            }
        }
        Command::Bench { config } => {
            let suite: SuiteConfig = read_json(&config)?;
            let s = run_benchmark_from(&suite)?;
            println!("cells {}  computed {}  skipped {}  failed {}", s.cells, s.computed, s.skipped, s.failed.len());
            for (cell, e) in &s.failed {
                eprintln!("failed {cell}: {e}");
            }
            if !s.complete() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Metrics { recon, truth, samples, seed, steps } => match (recon, truth, steps) {
            (Some(r), Some(t), None) => {
                let (chamfer, jaccard) = compare_meshes(&load_mesh(&r)?, &load_mesh(&t)?, samples, &mut rng_from_seed(seed))?;
                println!("{}", serde_json::json!({"chamfer": chamfer, "jaccard": jaccard}));
            }
            (None, None, Some(s)) => {
                println!("reconstructor,policy,t,runs,chamfer_mean,chamfer_std,jaccard_mean,jaccard_std");
                for a in aggregate(&read_reports(&s)?) {
                    println!(
                        "{},{},{},{},{},{},{},{}",
                        a.reconstructor, a.policy, a.t, a.runs, a.chamfer_mean, a.chamfer_std, a.jaccard_mean, a.jaccard_std
                    );
                }
            }
            _ => bail!("give either --recon and --truth, or --steps"),
        },
    }
    Ok(ExitCode::SUCCESS)
}
