use std::path::Path;

use merge_bench::clock::SyntheticNetwork;
use merge_bench::commands::*;
use merge_bench::format::WeightFile;
use merge_bench::report::{self, BenchRow};
use merge_core::er::{batch_sample, generate_er};
use merge_core::merge::{markov_corpus, MergedModel};
use merge_core::mpc::{Category, Counters};
use merge_core::nn::{add_positional, embed_lookup, generate_vanilla, transformer_forward_traced, ModelConfig};
use merge_core::private::Variant;

fn small() -> ModelConfig {
    ModelConfig { vocab_size: 40, model_dim: 16, intermediate_dim: 24, max_len: 24, ..Default::default() }
}

fn fixture(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("m.mrgw");
    cmd_gen_fixture(small(), 7, &p).unwrap();
    p
}

#[test]
fn fixtures_are_byte_identical_by_seed() {
    let d = tempfile::tempdir().unwrap();
    let (a, ae) = cmd_gen_fixture(small(), 3, &d.path().join("a.mrgw")).unwrap();
    let (b, be) = cmd_gen_fixture(small(), 3, &d.path().join("b.mrgw")).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read(&ae).unwrap(), std::fs::read(&be).unwrap());
    assert_eq!(ae.file_name().unwrap(), "a.echo.mrgw");
    let (c, _) = cmd_gen_fixture(small(), 4, &d.path().join("c.mrgw")).unwrap();
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    let f = WeightFile::read(&a).unwrap();
    assert_eq!(f.config, small());
    assert_eq!(f.seed, 3);
}

#[test]
fn shipped_echo_fixture_passes_er_equivalence() {
    let d = tempfile::tempdir().unwrap();
    let (_, echo) = cmd_gen_fixture(small(), 9, &d.path().join("m.mrgw")).unwrap();
    let w = load_model(&echo).unwrap();
    for prefix in [vec![0usize], vec![5, 6, 7]] {
        let want = generate_vanilla(&prefix, 12, &w).unwrap();
        let h = generate_er(&prefix, 12, &w).unwrap();
        assert_eq!(batch_sample(&h, &w.w_cls, None).unwrap(), want);
    }
}

#[test]
fn calibration_is_stochastic_deterministic_and_exact_for_one_sample() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture(d.path());
    let (a, b) = (d.path().join("c1.mrgw"), d.path().join("c2.mrgw"));
    let ca = cmd_calibrate(&m, 11, 5, &a).unwrap();
    cmd_calibrate(&m, 11, 5, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(ca.max_violation() <= 1e-9);
    for layer in &load_attention(&a).unwrap().maps {
        for c in layer {
            for i in 0..c.rows() {
                assert!((c.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }

    let one = cmd_calibrate(&m, 12, 1, &a).unwrap();
    let w = load_model(&m).unwrap();
    let seq = markov_corpus(40, 1, 24, 12).remove(0);
    let e = add_positional(&embed_lookup(&seq, &w.embedding).unwrap(), &w.positional).unwrap();
    let (_, trace) = transformer_forward_traced(&e, &w).unwrap();
    for (l, layer) in trace.iter().enumerate() {
        for (h, a) in layer.iter().enumerate() {
            assert!(one.maps[l][h].max_abs_diff(a).unwrap() <= 1e-12);
        }
    }
}

#[test]
fn merge_self_check_and_idempotence() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture(d.path());
    let c = d.path().join("c.mrgw");
    cmd_calibrate(&m, 1, 4, &c).unwrap();
    let out = d.path().join("merged.mrgw");
    let r = cmd_merge(&m, &c, &out).unwrap();
    assert_eq!(r.layer_deviation.len(), 2);
    assert!(r.max_deviation() <= 1e-5);
    let err = cmd_merge(&out, &c, &d.path().join("again.mrgw")).unwrap_err();
    assert!(err.to_string().contains("already merged"), "{err}");
    assert_eq!(err.exit_code(), 3);

    let merged: MergedModel = load_merged(&out).unwrap();
    let spec = spec(d.path(), &m, Some(&out), vec![Variant::ErMm], vec![6]);
    let models = BenchModels::load(&spec).unwrap();
    assert_eq!(models.merged.as_ref().unwrap(), &merged);
    bench_cell(&models, Variant::ErMm, 6, &[1, 2], 0, false).unwrap();
}

fn spec(dir: &Path, model: &Path, merged: Option<&Path>, variants: Vec<Variant>, lens: Vec<usize>) -> BenchSpec {
    BenchSpec {
        variants,
        lens,
        prefix_len: 2,
        model: model.to_path_buf(),
        merged: merged.map(Path::to_path_buf),
        calib: None,
        seed: 5,
        reps: 1,
        out: dir.join("bench"),
        network: Some(SyntheticNetwork { ns_per_byte: 0.1, ns_per_round: 50_000.0 }),
    }
}

#[test]
fn bench_report_structure_and_ordering() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture(d.path());
    let s = BenchSpec { reps: 2, ..spec(d.path(), &m, None, Variant::ALL.to_vec(), vec![6, 12, 24]) };
    let o = cmd_bench(&s).unwrap();
    assert_eq!(o.runs.len(), 4 * 3 * 2);
    let md = std::fs::read_to_string(&o.markdown).unwrap();
    for v in Variant::ALL {
        assert_eq!(md.matches(&format!("| {v} |")).count(), 3, "{v}");
    }
    assert_eq!(md.matches("100.00% |").count(), 3);
    assert!(md.contains("Embed") && md.contains("Sampling") && md.contains("Fraction") && md.contains("Total"));
    assert!(md.contains("synthetic"));
    for n in [6, 12, 24] {
        let total = |v: Variant| o.runs.iter().find(|r| r.variant == v && r.seq_len == n).unwrap().ledger.total().bytes;
        assert!(total(Variant::ErMm) < total(Variant::Vanilla), "N_t={n}");
    }
    let rows = report::read_bench_csv(&o.csv).unwrap();
    assert_eq!(rows.len(), 24 * Category::ALL.len());

    // Synthetic time makes the whole CSV reproducible.
    let again = cmd_bench(&BenchSpec { out: d.path().join("again"), ..s.clone() }).unwrap();
    assert_eq!(std::fs::read(&o.csv).unwrap(), std::fs::read(&again.csv).unwrap());
}

#[test]
fn bench_rejects_bad_specs() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture(d.path());
    for s in [
        BenchSpec { reps: 0, ..spec(d.path(), &m, None, vec![Variant::Vanilla], vec![8]) },
        spec(d.path(), &m, None, vec![Variant::Vanilla], vec![2]),
        spec(d.path(), &m, None, vec![Variant::Vanilla], vec![25]),
        spec(d.path(), &m, None, vec![], vec![8]),
    ] {
        assert_eq!(cmd_bench(&s).unwrap_err().exit_code(), 2);
    }
}

fn synthetic_rows(f: impl Fn(f64) -> f64) -> Vec<BenchRow> {
    [8usize, 16, 32, 64]
        .iter()
        .map(|&n| BenchRow {
            variant: Variant::Vanilla,
            seq_len: n,
            category: Category::Linear,
            counters: Counters { bytes: f(n as f64).round() as u64, ..Default::default() },
        })
        .collect()
}

#[test]
fn fits_on_constructed_data() {
    let fits = scaling_fits(&synthetic_rows(|n| 1000.0 * n * n)).unwrap();
    assert!((fits[0].slope - 2.0).abs() <= 0.01);
    assert_eq!(fits[0].within_band(), Some(true));
    let fits = scaling_fits(&synthetic_rows(|n| 1000.0 * n)).unwrap();
    assert!((fits[0].slope - 1.0).abs() <= 0.01);
    assert_eq!(fits[0].within_band(), Some(false));
    let short: Vec<BenchRow> = synthetic_rows(|n| n).into_iter().take(2).collect();
    assert!(scaling_fits(&short).is_err());
}

#[test]
fn fit_command_round_trips_csv() {
    let d = tempfile::tempdir().unwrap();
    let input = d.path().join("b.csv");
    report::write_bench_csv(&input, &synthetic_rows(|n| 3.0 * n * n)).unwrap();
    let out = d.path().join("f.csv");
    let fits = cmd_scaling_fit(&input, &out).unwrap();
    assert_eq!(fits.len(), 1);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("variant,category,slope,intercept,r_squared,points,band,within_band\n"));
    assert!(text.contains("Vanilla,Linear,2.000000"));
    std::fs::write(&input, "nonsense\n1,2\n").unwrap();
    assert_eq!(cmd_scaling_fit(&input, &out).unwrap_err().exit_code(), 3);
}

#[test]
fn noise_sweep_rows() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture(d.path());
    let out = d.path().join("s.csv");
    let levels = [0.0, 0.001, 0.1, 2.0];
    let rows = cmd_sweep_noise(&m, &levels, 6, 4, 2, 3, &out).unwrap();
    assert_eq!(rows.len(), 2 * levels.len());
    for r in &rows {
        if r.target_mse == 0.0 {
            assert_eq!(r.agreement_rate, 1.0);
        } else {
            assert!((r.measured_mse - r.target_mse).abs() <= 0.05 * r.target_mse);
        }
    }
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "mode,target_mse,measured_mse,agreement_rate,seq_len,seed");
    assert_eq!(text.lines().count(), 1 + rows.len());
}
