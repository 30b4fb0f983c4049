//! A single party's transcript does not depend on the other party's secrets.

use merge_core::fixtures::echo_fixture;
use merge_core::mpc::{Mpc, Party};
use merge_core::private::{EncryptedSession, SessionOptions, Variant};
use merge_core::ring::{FixedConfig, FixedTensor};

const BUCKETS: usize = 16;
const RUNS: u64 = 1500;
/// 99.9% quantile of chi-square with 15 degrees of freedom.
const CHI2_CRIT: f64 = 37.7;

/// Histogram of the top four bits of every element `viewer` receives while
/// the client's secret `x` is multiplied with a server weight.
fn view_histogram(x: &[f64], viewer: Party) -> [u64; BUCKETS] {
    let cfg = FixedConfig::default();
    let xt = FixedTensor::from_f64(&[1, x.len()], x, cfg).unwrap();
    let wt = FixedTensor::from_f64(&[x.len(), 2], &vec![0.5; 2 * x.len()], cfg).unwrap();
    let mut hist = [0u64; BUCKETS];
    for seed in 0..RUNS {
        let mut mpc = Mpc::new(seed, cfg);
        mpc.channel_mut().record_transcripts();
        let sx = mpc.share_input(&xt, Party::Client);
        let sw = mpc.share_input(&wt, Party::Server);
        let prod = mpc.matmul(&sx, &sw).unwrap();
        mpc.mul(&prod, &prod).unwrap();
        for msg in mpc.channel().transcript(viewer) {
            for r in msg {
                hist[(r.0 >> 60) as usize] += 1;
            }
        }
    }
    hist
}

fn chi2_two_sample(a: &[u64; BUCKETS], b: &[u64; BUCKETS]) -> f64 {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    a.iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0)
        .map(|(&x, &y)| {
            let d = ka * x as f64 - kb * y as f64;
            d * d / (x + y) as f64
        })
        .sum()
}

fn chi2_uniform(a: &[u64; BUCKETS]) -> f64 {
    let n = a.iter().sum::<u64>() as f64;
    let e = n / BUCKETS as f64;
    a.iter().map(|&x| (x as f64 - e).powi(2) / e).sum()
}

#[test]
fn server_view_is_independent_of_client_input() {
    let h0 = view_histogram(&[0.0, 0.0, 0.0], Party::Server);
    let h1 = view_histogram(&[100.0, -3.25, 7.5], Party::Server);
    assert_eq!(h0.iter().sum::<u64>(), h1.iter().sum::<u64>());
    let two = chi2_two_sample(&h0, &h1);
    assert!(two < CHI2_CRIT, "two-sample chi2 {two}");
    assert!(chi2_uniform(&h0) < CHI2_CRIT && chi2_uniform(&h1) < CHI2_CRIT);
}

#[test]
fn client_view_is_uniform_for_any_input() {
    let h = view_histogram(&[-40.0, 1.0, 0.001], Party::Client);
    assert!(chi2_uniform(&h) < CHI2_CRIT, "{}", chi2_uniform(&h));
}

#[test]
fn message_shapes_do_not_depend_on_tokens() {
    let fx = echo_fixture(4).unwrap();
    let merged = fx.merged(4).unwrap();
    for v in Variant::ALL {
        let shapes = |prefix: &[usize]| {
            let mut s = if v.merged() {
                EncryptedSession::new(v, &merged, SessionOptions::default())
            } else {
                EncryptedSession::new(v, &fx.weights, SessionOptions::default())
            }
            .unwrap();
            s.mpc_mut().channel_mut().record_transcripts();
            let out = s.run_encrypted_generation(prefix, 6).unwrap();
            let lens: Vec<usize> = s.mpc().channel().transcript(Party::Server).iter().map(Vec::len).collect();
            (lens, out.ledger)
        };
        let (a, la) = shapes(&[0, 1]);
        let (b, lb) = shapes(&[30, 17]);
        assert_eq!(a, b, "{v}");
        assert!(la.same_counts(&lb), "{v}");
    }
}
