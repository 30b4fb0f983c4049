use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::fixtures::echo_fixture;
use crate::merge::{calibrate_constant_attention, markov_corpus, merged_model_forward, MergedModel};
use crate::mpc::{reconstruct, Category, Mpc, Party};
use crate::nn::{add_positional, embed_lookup, one_hot, transformer_forward, Matrix, ModelConfig, ModelWeights};
use crate::ring::FixedConfig;
use crate::Error;

fn toy() -> (ModelWeights, MergedModel) {
    let w = ModelWeights::random(ModelConfig::default(), 21).unwrap();
    let corpus = markov_corpus(w.config.vocab_size, 8, w.config.max_len, 5);
    let ca = calibrate_constant_attention(&w, &corpus).unwrap();
    let m = MergedModel::compile(&w, &ca).unwrap();
    (w, m)
}

fn session<'a>(v: Variant, w: &'a ModelWeights, m: &'a MergedModel) -> EncryptedSession {
    let model: SessionModel<'a> = if v.merged() { m.into() } else { w.into() };
    EncryptedSession::new(v, model, SessionOptions { seed: 3, ..Default::default() }).unwrap()
}

#[test]
fn embedding_lookup_is_private_and_exact() {
    let cfg = FixedConfig::default();
    let table = Matrix::from_fn(10, 4, |i, j| (i as f64) - 0.25 * j as f64);
    let mut bytes = Vec::new();
    for tokens in [[3usize, 7], [0, 0]] {
        let mut mpc = Mpc::new(1, cfg);
        let t = mpc.share_input(&table.to_fixed(cfg).unwrap(), Party::Server);
        let oh = mpc.share_input(&one_hot(&tokens, 10).unwrap().to_fixed(cfg).unwrap(), Party::Client);
        let before = mpc.snapshot();
        let e = mpc_embed(&mut mpc, &oh, &t).unwrap();
        let spent = mpc.snapshot().since(&before);
        let got = Matrix::from_fixed(&reconstruct(&e).unwrap()).unwrap();
        let want = embed_lookup(&tokens, &table).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() <= 2.0 * cfg.ulp());
        assert_eq!(spent.get(Category::Embed).bytes, 16 * (2 * 10 + 10 * 4));
        assert_eq!(spent.total().bytes, spent.get(Category::Embed).bytes);
        bytes.push(spent);
    }
    assert!(bytes[0].same_counts(&bytes[1]));
    let mut mpc = Mpc::new(1, cfg);
    let bad = mpc.public(&Matrix::zeros(2, 9).to_fixed(cfg).unwrap());
    let t = mpc.public(&table.to_fixed(cfg).unwrap());
    assert!(matches!(mpc_embed(&mut mpc, &bad, &t), Err(Error::Shape(_))));
}

#[test]
fn encrypted_forward_tracks_plaintext() {
    let (w, m) = toy();
    let tokens = [5usize, 17, 200, 3, 99, 42, 8, 1];
    let e = add_positional(&embed_lookup(&tokens, &w.embedding).unwrap(), &w.positional).unwrap();
    for v in [Variant::Vanilla, Variant::OnlyMM] {
        let mut s = session(v, &w, &m);
        let cfg = s.mpc().config();
        let shared = s.mpc_mut().share_input(&e.to_fixed(cfg).unwrap(), Party::Client);
        let before = s.snapshot();
        let h = s.run_encrypted_forward(&shared).unwrap();
        let spent = s.snapshot().since(&before);
        let got = Matrix::from_fixed(&reconstruct(&h).unwrap()).unwrap();
        let want = if v.merged() { merged_model_forward(&e, &m).unwrap() } else { transformer_forward(&e, &w).unwrap() };
        let err = got.max_abs_diff(&want).unwrap();
        assert!(err <= 0.05, "{v}: {err}");
        assert_eq!(spent.get(Category::Embed).bytes, 0);
        assert!(spent.get(Category::Linear).bytes > 0);
        if v.merged() {
            assert_eq!(spent.get(Category::Softmax).bytes, 0);
        } else {
            assert!(spent.get(Category::Softmax).bytes > 0);
        }
    }
}

#[test]
fn variant_needs_matching_model() {
    let (w, m) = toy();
    let o = SessionOptions::default();
    assert!(matches!(EncryptedSession::new(Variant::ErMm, &w, o), Err(Error::Config(_))));
    assert!(matches!(EncryptedSession::new(Variant::OnlyER, &m, o), Err(Error::Config(_))));
    let mut s = session(Variant::Vanilla, &w, &m);
    assert!(matches!(s.run_encrypted_generation(&[1; 60], 5), Err(Error::LengthOverflow { .. })));
    assert!(s.run_encrypted_generation(&[], 1).is_err());
}

#[test]
fn non_causal_constant_attention_is_rejected() {
    let (_, mut m) = toy();
    m.layers[0].c[1].set(0, 3, 0.1);
    assert!(matches!(EncryptedSession::new(Variant::ErMm, &m, SessionOptions::default()), Err(Error::Config(_))));
}

#[test]
fn setup_is_charged_to_other() {
    let (w, m) = toy();
    for v in Variant::ALL {
        let mut s = session(v, &w, &m);
        let l = s.snapshot();
        assert!(l.get(Category::Other).bytes > 0);
        assert_eq!(l.total().bytes, l.get(Category::Other).bytes, "{v}");
    }
}

#[test]
fn all_variants_agree_on_echo() {
    let fx = echo_fixture(2).unwrap();
    let merged = fx.merged(2).unwrap();
    let prefix = [4usize, 11];
    let want = fx.expected(&prefix, 10);
    for v in Variant::ALL {
        let model: SessionModel = if v.merged() { (&merged).into() } else { (&fx.weights).into() };
        let mut s = EncryptedSession::new(v, model, SessionOptions { seed: 9, ..Default::default() }).unwrap();
        let out = s.run_encrypted_generation(&prefix, 10).unwrap();
        assert_eq!(out.tokens, want, "{v}");
        assert_eq!(out.per_step.len(), 10);
    }
}

#[test]
fn embed_cost_is_constant_for_resending_variants() {
    let fx = echo_fixture(1).unwrap();
    let merged = fx.merged(1).unwrap();
    let prefix = [2usize, 9, 4];
    let embed = |v: Variant, n: usize| {
        let model: SessionModel = if v.merged() { (&merged).into() } else { (&fx.weights).into() };
        let mut s = EncryptedSession::new(v, model, SessionOptions::default()).unwrap();
        s.run_encrypted_generation(&prefix, n - prefix.len()).unwrap().ledger.get(Category::Embed).bytes
    };
    for v in [Variant::OnlyER, Variant::ErMm] {
        assert_eq!(embed(v, 4), embed(v, 16), "{v}");
        assert_eq!(embed(v, 4), 16 * (3 * 32 + 32 * 32));
    }
    assert!(embed(Variant::Vanilla, 4) < embed(Variant::Vanilla, 5));
    assert!(embed(Variant::OnlyMM, 5) < embed(Variant::OnlyMM, 8));
}

#[test]
fn incremental_cache_matches_recomputation() {
    let (_, m) = toy();
    let prefix = [7usize, 130, 2];
    let mut outs = Vec::new();
    for incremental in [true, false] {
        let opts = SessionOptions { seed: 4, incremental, ..Default::default() };
        let mut s = EncryptedSession::new(Variant::ErMm, &m, opts).unwrap();
        outs.push(s.run_encrypted_generation(&prefix, 12).unwrap());
    }
    let err = outs[0].hidden.max_abs_diff(&outs[1].hidden).unwrap();
    assert!(err <= 1e-2, "{err}");
    let total = |o: &GenerationOutput| o.ledger.get(Category::Linear).bytes;
    assert!(total(&outs[0]) < total(&outs[1]));

    let fx = echo_fixture(6).unwrap();
    let em = fx.merged(6).unwrap();
    let toks: Vec<Vec<usize>> = [true, false]
        .into_iter()
        .map(|incremental| {
            let opts = SessionOptions { incremental, ..Default::default() };
            EncryptedSession::new(Variant::ErMm, &em, opts).unwrap().run_encrypted_generation(&[3], 20).unwrap().tokens
        })
        .collect();
    assert_eq!(toks[0], toks[1]);
}

#[test]
fn merged_er_hidden_tracks_plaintext_er() {
    let (_, m) = toy();
    let prefix = [1usize, 2, 3, 4];
    let plain = crate::er::generate_er(&prefix, 6, &m).unwrap();
    let mut s = EncryptedSession::new(Variant::ErMm, &m, SessionOptions::default()).unwrap();
    let out = s.run_encrypted_generation(&prefix, 6).unwrap();
    let err = out.hidden.max_abs_diff(&plain).unwrap();
    assert!(err <= 0.05, "{err}");
}

#[test]
fn step_costs() {
    let fx = echo_fixture(3).unwrap();
    let merged = fx.merged(3).unwrap();
    let mut s = EncryptedSession::new(Variant::ErMm, &merged, SessionOptions::default()).unwrap();
    let out = s.run_encrypted_generation(&[1, 2], 12).unwrap();
    let steps = &out.per_step[1..];
    assert!(steps.iter().all(|c| c.rounds == steps[0].rounds && c.bytes == steps[0].bytes));
    assert_eq!(out.deferred_sampling.rounds, 2);
    assert!(out.per_step.iter().all(|c| c.bytes > 0));

    let mut s = EncryptedSession::new(Variant::Vanilla, &fx.weights, SessionOptions::default()).unwrap();
    let out = s.run_encrypted_generation(&[1, 2], 8).unwrap();
    assert!(out.per_step.windows(2).all(|p| p[0].bytes < p[1].bytes));
    assert_eq!(out.deferred_sampling, Default::default());
}

#[test]
fn deterministic_by_seed() {
    let (w, _) = toy();
    let run = |seed| {
        let mut s = EncryptedSession::new(Variant::OnlyER, &w, SessionOptions { seed, ..Default::default() }).unwrap();
        s.run_encrypted_generation(&[5, 6], 4).unwrap()
    };
    let (a, b) = (run(8), run(8));
    assert_eq!(a.tokens, b.tokens);
    assert!(a.ledger.same_counts(&b.ledger));
    assert_eq!(a.hidden, b.hidden);
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(Variant::parse(v.name()), Some(v));
    }
    assert_eq!(Variant::parse("ER+MM"), Some(Variant::ErMm));
    assert_eq!(Variant::parse("bogus"), None);
    assert_eq!(vec![Variant::ErMm.resends(), Variant::OnlyMM.resends()], vec![true, false]);
}
