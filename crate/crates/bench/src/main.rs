use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use merge_bench::clock::SyntheticNetwork;
use merge_bench::commands::{self, BenchSpec, DEFAULT_CALIB_SAMPLES};
use merge_bench::{BenchError, Result};
use merge_core::nn::ModelConfig;
use merge_core::nonlinear::ActivationKind;
use merge_core::private::Variant;

#[derive(Parser)]
#[command(name = "merge-bench", version, about = "Private generation benchmarks: fixtures, calibration, merging, sweeps and fits")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Copy)]
struct SeedArg {
    /// Seed for every random choice.
    #[arg(long, env = "MERGE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Act {
    Relu,
    Quad,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a seeded random model and, next to it, the echo fixture.
    GenFixture {
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        vocab: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 64)]
        inter: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = 64)]
        max_len: usize,
        #[arg(long, value_enum, default_value_t = Act::Relu)]
        activation: Act,
    },
    /// Average attention maps over a seeded synthetic corpus.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = DEFAULT_CALIB_SAMPLES)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fold every block into a merge module and self-check the result.
    Merge {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encrypted generation for each (variant, length) cell.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        merged: Option<PathBuf>,
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Comma-separated variants or `all`.
        #[arg(long, default_value = "all", value_delimiter = ',')]
        variant: Vec<String>,
        /// Total sequence lengths.
        #[arg(long, default_value = "8,16,32,64", value_delimiter = ',')]
        lens: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        prefix_len: usize,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
        /// Synthetic time per byte; replaces measured wall time.
        #[arg(long, requires = "ns_per_round")]
        ns_per_byte: Option<f64>,
        #[arg(long, requires = "ns_per_byte")]
        ns_per_round: Option<f64>,
    },
    /// Log-log fits of bytes against sequence length from a bench CSV.
    ScalingFit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Token agreement under input-embedding noise, vanilla and resending.
    SweepNoise {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        mse: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        #[arg(long, default_value_t = 8)]
        prompts: usize,
        #[arg(long, default_value_t = 2)]
        prefix_len: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_variants(list: &[String]) -> Result<Vec<Variant>> {
    if list.iter().any(|s| s.eq_ignore_ascii_case("all")) {
        return Ok(Variant::ALL.to_vec());
    }
    list.iter()
        .map(|s| Variant::parse(s).ok_or_else(|| BenchError::Usage(format!("unknown variant {s}"))))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenFixture { seed, out, vocab, dim, inter, layers, heads, max_len, activation } => {
            let config = ModelConfig {
                vocab_size: vocab,
                model_dim: dim,
                intermediate_dim: inter,
                n_layers: layers,
                n_heads: heads,
                max_len,
                activation: match activation {
                    Act::Relu => ActivationKind::Relu,
                    Act::Quad => ActivationKind::Quad,
                },
                ..Default::default()
            };
            let (m, e) = commands::cmd_gen_fixture(config, seed.seed, &out)?;
            println!("wrote {} and {}", m.display(), e.display());
        }
        Cmd::Calibrate { model, seed, samples, out } => {
            let ca = commands::cmd_calibrate(&model, seed.seed, samples, &out)?;
            println!("wrote {} ({} layers x {} heads, max row-sum error {:.2e})", out.display(), ca.n_layers(), ca.n_heads(), ca.max_violation());
        }
        Cmd::Merge { model, calib, out } => {
            let r = commands::cmd_merge(&model, &calib, &out)?;
            for (i, d) in r.layer_deviation.iter().enumerate() {
                println!("layer {i}: max |merged - reference| = {d:.3e}");
            }
            println!("wrote {} (self-check max deviation {:.3e})", out.display(), r.max_deviation());
        }
        Cmd::Bench { model, merged, calib, variant, lens, prefix_len, reps, seed, out, ns_per_byte, ns_per_round } => {
            let network = match (ns_per_byte, ns_per_round) {
                (Some(ns_per_byte), Some(ns_per_round)) => Some(SyntheticNetwork { ns_per_byte, ns_per_round }),
                _ => None,
            };
            let spec = BenchSpec {
                variants: parse_variants(&variant)?,
                lens,
                prefix_len,
                model,
                merged,
                calib,
                seed: seed.seed,
                reps,
                out,
                network,
            };
            let o = commands::cmd_bench(&spec)?;
            println!("wrote {} and {}", o.csv.display(), o.markdown.display());
        }
        Cmd::ScalingFit { input, out } => {
            for f in commands::cmd_scaling_fit(&input, &out)? {
                let flag = match f.within_band() {
                    Some(false) => "  OUTSIDE expected band",
                    _ => "",
                };
                println!("{:8} {:8} slope {:.3} (R^2 {:.4}){flag}", f.variant.name(), f.category.name(), f.slope, f.r_squared);
            }
            println!("wrote {}", out.display());
        }
        Cmd::SweepNoise { model, mse, steps, prompts, prefix_len, seed, out } => {
            let rows = commands::cmd_sweep_noise(&model, &mse, steps, prompts, prefix_len, seed.seed, &out)?;
            println!("wrote {} ({} rows)", out.display(), rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
