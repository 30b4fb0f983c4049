//! The subcommands, callable without the CLI.

use std::path::{Path, PathBuf};

use merge_core::er::noise_robustness_sweep;
use merge_core::fixtures::echo_fixture;
use merge_core::merge::{calibrate_constant_attention, composed_reference, markov_corpus, merged_forward, ConstantAttention, MergedModel};
use merge_core::mpc::Category;
use merge_core::nn::{Matrix, ModelConfig, ModelWeights};
use merge_core::private::{EncryptedSession, SessionModel, SessionOptions, Variant};
use merge_core::scaling::{fit_loglog, MIN_POINTS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::clock::{StdClock, SyntheticNetwork};
use crate::error::{BenchError, Result};
use crate::format::WeightFile;
use crate::report::{self, BenchRow, RunLedger, ScalingFitRow};

/// `model.mrgw` becomes `model.echo.mrgw`.
pub fn echo_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}.echo{ext}"))
}

/// Writes a seeded random model to `out` and the echo fixture next to it.
pub fn cmd_gen_fixture(config: ModelConfig, seed: u64, out: &Path) -> Result<(PathBuf, PathBuf)> {
    let w = ModelWeights::random(config, seed)?;
    WeightFile::from_model(&w, seed).write(out)?;
    let echo = echo_path(out);
    WeightFile::from_model(&echo_fixture(seed)?.weights, seed).write(&echo)?;
    Ok((out.to_path_buf(), echo))
}

pub fn load_model(path: &Path) -> Result<ModelWeights> {
    WeightFile::read(path)?.into_model().map_err(|e| e.context(path.display().to_string()))
}

pub fn load_merged(path: &Path) -> Result<MergedModel> {
    WeightFile::read(path)?.into_merged().map_err(|e| e.context(path.display().to_string()))
}

pub fn load_attention(path: &Path) -> Result<ConstantAttention> {
    WeightFile::read(path)?.into_attention().map_err(|e| e.context(path.display().to_string()))
}

/// Calibration corpus size used when none is given.
pub const DEFAULT_CALIB_SAMPLES: usize = 32;

/// Calibrates on a seeded Markov corpus of full-length sequences.
pub fn cmd_calibrate(model: &Path, corpus_seed: u64, samples: usize, out: &Path) -> Result<ConstantAttention> {
    let w = load_model(model)?;
    let c = &w.config;
    let ca = calibrate_constant_attention(&w, &markov_corpus(c.vocab_size, samples, c.max_len, corpus_seed))?;
    WeightFile::from_attention(&ca, w.config, corpus_seed).write(out)?;
    Ok(ca)
}

/// Worst per-layer deviation between the folded block and the unfolded
/// constant-attention reference on random probe inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeReport {
    pub layer_deviation: Vec<f64>,
}

impl MergeReport {
    pub fn max_deviation(&self) -> f64 {
        self.layer_deviation.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn merge_self_check(w: &ModelWeights, m: &MergedModel, probe_seed: u64) -> Result<MergeReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(probe_seed);
    let c = &w.config;
    let mut layer_deviation = Vec::with_capacity(c.n_layers);
    for (lw, ml) in w.layers.iter().zip(&m.layers) {
        let mut worst: f64 = 0.0;
        for n in [1, c.max_len / 2, c.max_len] {
            let h = Matrix::new(n, c.model_dim, (0..n * c.model_dim).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            let got = merged_forward(&h, ml, c, false)?;
            let want = composed_reference(&h, lw, &ml.c, c)?;
            worst = worst.max(got.max_abs_diff(&want)?);
        }
        layer_deviation.push(worst);
    }
    Ok(MergeReport { layer_deviation })
}

/// Folds every block; a merged input file is rejected.
pub fn cmd_merge(model: &Path, calib: &Path, out: &Path) -> Result<MergeReport> {
    let w = load_model(model)?;
    let ca = load_attention(calib)?;
    let m = MergedModel::compile(&w, &ca)?;
    let report = merge_self_check(&w, &m, 0)?;
    WeightFile::from_merged(&m, 0).write(out)?;
    Ok(report)
}

/// Parameters of a benchmark sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub variants: Vec<Variant>,
    /// Total sequence lengths `N_t` (prefix plus generated tokens).
    pub lens: Vec<usize>,
    pub prefix_len: usize,
    pub model: PathBuf,
    /// Merged model for OnlyMM / ER_MM; built from `calib` (or a fresh
    /// calibration seeded by `seed`) when absent.
    pub merged: Option<PathBuf>,
    pub calib: Option<PathBuf>,
    pub seed: u64,
    pub reps: usize,
    pub out: PathBuf,
    pub network: Option<SyntheticNetwork>,
}

impl BenchSpec {
    pub fn validate(&self, max_len: usize) -> Result<()> {
        if self.reps == 0 {
            return Err(BenchError::Usage("repetitions must be at least 1".into()));
        }
        if self.variants.is_empty() || self.lens.is_empty() {
            return Err(BenchError::Usage("need at least one variant and one length".into()));
        }
        if self.prefix_len == 0 {
            return Err(BenchError::Usage("prefix length must be at least 1".into()));
        }
        if let Some(&n) = self.lens.iter().find(|&&n| n <= self.prefix_len || n > max_len) {
            return Err(BenchError::Usage(format!(
                "length {n} must exceed the prefix length {} and be at most {max_len}",
                self.prefix_len
            )));
        }
        Ok(())
    }
}

/// Deterministic prompt for a seed.
pub fn prompt(vocab: usize, len: usize, seed: u64) -> Vec<usize> {
    markov_corpus(vocab, 1, len, seed).remove(0)
}

/// Outcome of one benchmark sweep.
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub runs: Vec<RunLedger>,
    pub tokens: Vec<(Variant, usize, Vec<usize>)>,
    pub csv: PathBuf,
    pub markdown: PathBuf,
}

/// Everything needed to open sessions of any variant.
pub struct BenchModels {
    pub plain: ModelWeights,
    pub merged: Option<MergedModel>,
}

impl BenchModels {
    pub fn load(spec: &BenchSpec) -> Result<Self> {
        let plain = load_model(&spec.model)?;
        let merged = if !spec.variants.iter().any(|v| v.merged()) {
            None
        } else if let Some(p) = &spec.merged {
            Some(load_merged(p)?)
        } else {
            let ca = match &spec.calib {
                Some(p) => load_attention(p)?,
                None => {
                    let c = &plain.config;
                    calibrate_constant_attention(
                        &plain,
                        &markov_corpus(c.vocab_size, DEFAULT_CALIB_SAMPLES, c.max_len, spec.seed),
                    )?
                }
            };
            Some(MergedModel::compile(&plain, &ca)?)
        };
        if let Some(m) = &merged {
            if m.config != plain.config {
                return Err(merge_core::Error::Shape("merged model config differs from the plain model".into()).into());
            }
        }
        Ok(Self { plain, merged })
    }

    pub fn session(&self, v: Variant, seed: u64, clock: bool) -> Result<EncryptedSession> {
        let model: SessionModel = if v.merged() {
            self.merged.as_ref().ok_or_else(|| BenchError::Usage(format!("{v} needs a merged model")))?.into()
        } else {
            (&self.plain).into()
        };
        let opts = SessionOptions { seed, ..Default::default() };
        Ok(if clock {
            EncryptedSession::with_clock(v, model, opts, Box::new(StdClock::new()))?
        } else {
            EncryptedSession::new(v, model, opts)?
        })
    }
}

/// Runs one encrypted generation for a `(variant, N_t)` cell.
pub fn bench_cell(models: &BenchModels, v: Variant, n_t: usize, prefix: &[usize], seed: u64, clock: bool) -> Result<(RunLedger, Vec<usize>)> {
    let ctx = || format!("{v} at N_t={n_t}");
    let mut s = models.session(v, seed, clock).map_err(|e| e.context(ctx()))?;
    let out = s
        .run_encrypted_generation(prefix, n_t - prefix.len())
        .map_err(|e| BenchError::from(e).context(ctx()))?;
    Ok((RunLedger { variant: v, seq_len: n_t, ledger: out.ledger }, out.tokens))
}

/// Runs every `(variant, length)` cell `reps` times and writes `bench.csv`
/// and `report.md` into `spec.out`.
pub fn cmd_bench(spec: &BenchSpec) -> Result<BenchOutcome> {
    let models = BenchModels::load(spec)?;
    spec.validate(models.plain.config.max_len)?;
    std::fs::create_dir_all(&spec.out).map_err(BenchError::io(&spec.out))?;
    let prefix = prompt(models.plain.config.vocab_size, spec.prefix_len, spec.seed);
    let mut runs = Vec::new();
    let mut tokens = Vec::new();
    for &v in &spec.variants {
        for &n in &spec.lens {
            for _ in 0..spec.reps {
                let (mut run, toks) = bench_cell(&models, v, n, &prefix, spec.seed, spec.network.is_none())?;
                if let Some(net) = spec.network {
                    run.ledger = synthetic_ledger(&run.ledger, &net);
                }
                runs.push(run);
                tokens.push((v, n, toks));
            }
        }
    }
    let rows: Vec<BenchRow> = runs.iter().flat_map(RunLedger::rows).collect();
    let csv = spec.out.join("bench.csv");
    report::write_bench_csv(&csv, &rows)?;
    let markdown = spec.out.join("report.md");
    std::fs::write(&markdown, report::render_markdown(&rows, spec.network.is_some())).map_err(BenchError::io(&markdown))?;
    Ok(BenchOutcome { runs, tokens, csv, markdown })
}

/// Replaces measured wall time with the synthetic network model.
fn synthetic_ledger(l: &merge_core::mpc::CommLedger, net: &SyntheticNetwork) -> merge_core::mpc::CommLedger {
    let mut out = l.clone();
    for c in Category::ALL {
        out.set_wall(c, net.wall_ns(&l.get(c)));
    }
    out
}

/// Expected slope band asserted for a `(variant, category)` pair.
pub fn expected_band(v: Variant, c: Category) -> Option<(f64, f64)> {
    match (v, c) {
        (Variant::Vanilla, Category::Linear) => Some((1.7, 2.3)),
        (Variant::ErMm, Category::Linear) => Some((0.7, 1.3)),
        _ => None,
    }
}

/// Log-log fits of median bytes against `N_t` for every `(variant, category)`
/// with at least three lengths of non-zero traffic.
pub fn scaling_fits(rows: &[BenchRow]) -> Result<Vec<ScalingFitRow>> {
    let agg = report::aggregate(rows);
    let mut keys: Vec<(Variant, Category)> = agg.keys().map(|k| (k.0, k.2)).collect();
    keys.sort();
    keys.dedup();
    let mut out = Vec::new();
    let mut any_lengths = false;
    for (v, c) in keys {
        let pts: Vec<(f64, f64)> = agg
            .iter()
            .filter(|(k, x)| k.0 == v && k.2 == c && x.bytes > 0)
            .map(|(k, x)| (k.1 as f64, x.bytes as f64))
            .collect();
        let lens = agg.keys().filter(|k| k.0 == v && k.2 == c).count();
        any_lengths |= lens >= MIN_POINTS;
        if pts.len() < MIN_POINTS {
            continue;
        }
        let f = fit_loglog(&pts)?;
        out.push(ScalingFitRow {
            variant: v,
            category: c,
            slope: f.slope,
            intercept: f.intercept,
            r_squared: f.r_squared,
            points: f.points,
            band: expected_band(v, c),
        });
    }
    if !any_lengths {
        return Err(merge_core::Error::Degenerate(format!("scaling fits need at least {MIN_POINTS} lengths per variant")).into());
    }
    Ok(out)
}

pub fn cmd_scaling_fit(input: &Path, out: &Path) -> Result<Vec<ScalingFitRow>> {
    let rows = report::read_bench_csv(input)?;
    let fits = scaling_fits(&rows)?;
    report::write_fit_csv(out, &fits)?;
    Ok(fits)
}

/// Noise sweep over `prompts` seeded prompts of `prefix_len` tokens.
pub fn cmd_sweep_noise(
    model: &Path,
    mse: &[f64],
    steps: usize,
    prompts: usize,
    prefix_len: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<merge_core::er::SweepRow>> {
    let w = load_model(model)?;
    let ps: Vec<Vec<usize>> = (0..prompts as u64).map(|i| prompt(w.config.vocab_size, prefix_len, seed.wrapping_add(i))).collect();
    let rows = noise_robustness_sweep(&w, mse, &ps, steps, seed)?;
    report::write_sweep_csv(out, &rows)?;
    Ok(rows)
}
