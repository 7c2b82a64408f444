mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlir_core::gradcheck::{self, CheckKind, CheckOptions};
use xlir_core::{FeatureExtractor, LinearEncoder, SparseVec};

/// Padded per-token n-gram counts, written independently of the library.
fn exact_ngrams(text: &str, n: usize) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for tok in text.to_lowercase().split_whitespace() {
        let s: Vec<char> = format!("<{tok}>").chars().collect();
        if s.len() <= n {
            *m.entry(s.iter().collect()).or_insert(0.0) += 1.0;
            continue;
        }
        for i in 0..=s.len() - n {
            *m.entry(s[i..i + n].iter().collect()).or_insert(0.0) += 1.0;
        }
    }
    m
}

fn random_sparse(rng: &mut ChaCha8Rng, f: usize) -> SparseVec {
    let mut entries = Vec::new();
    for c in 0..f {
        if rng.gen_bool(0.3) {
            entries.push((c as u32, rng.gen_range(-1.0..1.0)));
        }
    }
    SparseVec::new(f, entries).unwrap()
}

fn random_word(rng: &mut ChaCha8Rng, alphabet: &[char]) -> String {
    (0..rng.gen_range(1..8)).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

#[test]
fn featurize_matches_exact_counts() {
    let fx = FeatureExtractor::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let alphabet: Vec<char> = "abcdefgh".chars().collect();
    for _ in 0..200 {
        let text: Vec<String> = (0..rng.gen_range(1..6)).map(|_| random_word(&mut rng, &alphabet)).collect();
        let text = text.join(" ");
        let mut want: BTreeMap<u32, f64> = BTreeMap::new();
        for (g, c) in exact_ngrams(&text, 3) {
            *want.entry(fx.bucket(&g)).or_insert(0.0) += c;
        }
        let norm = common::ksum(want.values().map(|c| c * c)).sqrt();
        let got = fx.featurize(&text).unwrap();
        assert_eq!(got.entries().len(), want.len());
        for (&(i, v), (&j, c)) in got.entries().iter().zip(&want) {
            assert_eq!(i, j);
            assert!((v - c / norm).abs() <= 1e-15);
        }
        assert!((got.norm() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn disjoint_alphabets_overlap_only_through_collisions() {
    let fx = FeatureExtractor::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<char> = "abcdefghijklm".chars().collect();
    let b: Vec<char> = "nopqrstuvwxyz".chars().collect();
    let trials = 2000;
    let mut mass = Vec::with_capacity(trials);
    for _ in 0..trials {
        let ta = (0..6).map(|_| random_word(&mut rng, &a)).collect::<Vec<_>>().join(" ");
        let tb = (0..6).map(|_| random_word(&mut rng, &b)).collect::<Vec<_>>().join(" ");
        let ea = exact_ngrams(&ta, 3);
        let eb = exact_ngrams(&tb, 3);
        assert!(ea.keys().all(|g| !eb.contains_key(g)));
        let (xa, xb) = (fx.featurize(&ta).unwrap(), fx.featurize(&tb).unwrap());
        let ya = xa.to_dense();
        mass.push(common::ksum(xb.entries().iter().map(|&(i, v)| ya[i as usize] * v)));
    }
    let mean = common::ksum(mass.iter().copied()) / trials as f64;
    // roughly |grams_a| * |grams_b| / D_feat colliding pairs, each of weight ~1/|grams|
    assert!(mean < 0.02, "mean collision mass {mean}");
}

#[test]
fn encode_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (e, f) = (rng.gen_range(1..10), rng.gen_range(1..60));
        let w: Vec<f64> = (0..e * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let enc = LinearEncoder::from_weights(e, f, w.clone()).unwrap();
        let x = random_sparse(&mut rng, f);
        let dense = x.to_dense();
        let z = enc.encode(&x).unwrap();
        for r in 0..e {
            let want = common::kdot(&w[r * f..(r + 1) * f], &dense);
            assert!((z[r] - want).abs() <= 1e-12);
        }
        let y = random_sparse(&mut rng, f);
        let zs = enc.encode(&x.add(&y).unwrap()).unwrap();
        let zy = enc.encode(&y).unwrap();
        for r in 0..e {
            assert!((zs[r] - (z[r] + zy[r])).abs() <= 1e-12);
        }
    }
}

#[test]
fn composite_gradient_through_encoder() {
    let r = gradcheck::run_suite(CheckKind::JointThroughEncoder, &[2, 4], 10, 3, &CheckOptions::default()).unwrap();
    for x in &r {
        assert!(x.passed(), "{}", x.summary());
    }
}
