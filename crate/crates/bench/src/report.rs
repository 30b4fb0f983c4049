//! CSV schemas and the markdown summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use merge_core::er::SweepRow;
use merge_core::mpc::{Category, CommLedger, Counters};
use merge_core::private::Variant;

use crate::error::{BenchError, Result};

pub const BENCH_HEADER: [&str; 7] = ["variant", "seq_len", "category", "bytes", "rounds", "op_count", "wall_ns"];
pub const FIT_HEADER: [&str; 8] = ["variant", "category", "slope", "intercept", "r_squared", "points", "band", "within_band"];
pub const SWEEP_HEADER: [&str; 6] = ["mode", "target_mse", "measured_mse", "agreement_rate", "seq_len", "seed"];

/// One ledger line of one benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub variant: Variant,
    pub seq_len: usize,
    pub category: Category,
    pub counters: Counters,
}

/// Ledger of one `(variant, seq_len)` run.
#[derive(Debug, Clone)]
pub struct RunLedger {
    pub variant: Variant,
    pub seq_len: usize,
    pub ledger: CommLedger,
}

impl RunLedger {
    pub fn rows(&self) -> impl Iterator<Item = BenchRow> + '_ {
        Category::ALL.into_iter().map(|category| BenchRow {
            variant: self.variant,
            seq_len: self.seq_len,
            category,
            counters: self.ledger.get(category),
        })
    }
}

fn create(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(BenchError::io(path))?;
    Ok(csv::Writer::from_writer(f))
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        let c = &r.counters;
        w.write_record([
            r.variant.name().to_string(),
            r.seq_len.to_string(),
            r.category.name().to_string(),
            c.bytes.to_string(),
            c.rounds.to_string(),
            c.op_count.to_string(),
            c.wall_ns.to_string(),
        ])?;
    }
    w.flush().map_err(BenchError::io(path))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| BenchError::Format(format!("bench CSV line {line}: bad column {}", BENCH_HEADER[i])))
}

pub fn read_bench_csv(path: &Path) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| BenchError::from(e).context(path.display().to_string()))?;
    if r.headers()?.iter().collect::<Vec<_>>() != BENCH_HEADER {
        return Err(BenchError::Format(format!("{}: unexpected header", path.display())));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let variant = Variant::parse(&rec[0]).ok_or_else(|| BenchError::Format(format!("line {line}: variant {}", &rec[0])))?;
        let category =
            Category::parse(&rec[2]).ok_or_else(|| BenchError::Format(format!("line {line}: category {}", &rec[2])))?;
        out.push(BenchRow {
            variant,
            seq_len: field(&rec, 1, line)?,
            category,
            counters: Counters {
                bytes: field(&rec, 3, line)?,
                rounds: field(&rec, 4, line)?,
                op_count: field(&rec, 5, line)?,
                wall_ns: field(&rec, 6, line)?,
            },
        });
    }
    Ok(out)
}

/// Median of each counter over repeated runs of the same cell.
pub fn median_counters(runs: &[Counters]) -> Counters {
    fn med(mut v: Vec<u64>) -> u64 {
        v.sort_unstable();
        if v.is_empty() {
            0
        } else if v.len() % 2 == 1 {
            v[v.len() / 2]
        } else {
            (v[v.len() / 2 - 1] + v[v.len() / 2]) / 2
        }
    }
    Counters {
        bytes: med(runs.iter().map(|c| c.bytes).collect()),
        rounds: med(runs.iter().map(|c| c.rounds).collect()),
        op_count: med(runs.iter().map(|c| c.op_count).collect()),
        wall_ns: med(runs.iter().map(|c| c.wall_ns).collect()),
    }
}

/// Median counters keyed by `(variant, seq_len, category)`.
pub fn aggregate(rows: &[BenchRow]) -> BTreeMap<(Variant, usize, Category), Counters> {
    let mut groups: BTreeMap<(Variant, usize, Category), Vec<Counters>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.variant, r.seq_len, r.category)).or_default().push(r.counters);
    }
    groups.into_iter().map(|(k, v)| (k, median_counters(&v))).collect()
}

fn mb(bytes: u64) -> String {
    format!("{:.3}", bytes as f64 / 1e6)
}

/// Per-length tables with one row per variant, bytes in MB, plus a Fraction
/// column against Vanilla at the same length.
pub fn render_markdown(rows: &[BenchRow], synthetic_time: bool) -> String {
    let agg = aggregate(rows);
    let mut lens: Vec<usize> = agg.keys().map(|k| k.1).collect();
    lens.sort_unstable();
    lens.dedup();
    let mut variants: Vec<Variant> = agg.keys().map(|k| k.0).collect();
    variants.sort();
    variants.dedup();
    let mut out = String::from("# Communication by category\n\n");
    let time_label = if synthetic_time { "Time (ms, synthetic)" } else { "Time (ms)" };
    for n in lens {
        let total = |v: Variant| -> Option<u64> {
            let parts: Vec<u64> = Category::ALL.iter().filter_map(|&c| agg.get(&(v, n, c)).map(|x| x.bytes)).collect();
            (!parts.is_empty()).then(|| parts.iter().sum())
        };
        let base = total(Variant::Vanilla);
        let _ = writeln!(out, "## N_t = {n}\n");
        let _ = writeln!(
            out,
            "| Variant | Embed (MB) | Linear (MB) | Softmax (MB) | Sampling (MB) | Other (MB) | Total (MB) | Rounds | {time_label} | Fraction |"
        );
        let _ = writeln!(out, "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|");
        for &v in &variants {
            let Some(t) = total(v) else { continue };
            let get = |c| agg.get(&(v, n, c)).copied().unwrap_or_default();
            let rounds: u64 = Category::ALL.iter().map(|&c| get(c).rounds).sum();
            let wall: u64 = Category::ALL.iter().map(|&c| get(c).wall_ns).sum();
            let frac = match base {
                Some(b) if b > 0 => format!("{:.2}%", 100.0 * t as f64 / b as f64),
                _ => "n/a".to_string(),
            };
            let _ = writeln!(
                out,
                "| {v} | {} | {} | {} | {} | {} | {} | {rounds} | {:.3} | {frac} |",
                mb(get(Category::Embed).bytes),
                mb(get(Category::Linear).bytes),
                mb(get(Category::Softmax).bytes),
                mb(get(Category::Sampling).bytes),
                mb(get(Category::Other).bytes),
                mb(t),
                wall as f64 / 1e6,
            );
        }
        out.push('\n');
    }
    out
}

/// One `(variant, category)` regression line.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFitRow {
    pub variant: Variant,
    pub category: Category,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    /// Expected slope band, when one is asserted for this pair.
    pub band: Option<(f64, f64)>,
}

impl ScalingFitRow {
    pub fn within_band(&self) -> Option<bool> {
        self.band.map(|(lo, hi)| (lo..=hi).contains(&self.slope))
    }
}

pub fn write_fit_csv(path: &Path, rows: &[ScalingFitRow]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(FIT_HEADER)?;
    for r in rows {
        w.write_record([
            r.variant.name().to_string(),
            r.category.name().to_string(),
            format!("{:.6}", r.slope),
            format!("{:.6}", r.intercept),
            format!("{:.6}", r.r_squared),
            r.points.to_string(),
            r.band.map(|(lo, hi)| format!("[{lo}, {hi}]")).unwrap_or_default(),
            r.within_band().map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(BenchError::io(path))
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.mode.clone(),
            r.target_mse.to_string(),
            format!("{:.9}", r.measured_mse),
            format!("{:.6}", r.agreement_rate),
            r.seq_len.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(BenchError::io(path))
}
