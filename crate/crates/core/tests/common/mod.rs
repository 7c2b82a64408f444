//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's math.
#![allow(dead_code)]

use rand::Rng;

/// Neumaier-compensated sum.
pub fn ksum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn kdot(u: &[f64], v: &[f64]) -> f64 {
    ksum(u.iter().zip(v).map(|(a, b)| a * b))
}

pub fn kcos(u: &[f64], v: &[f64]) -> f64 {
    kdot(u, v) / (kdot(u, u).sqrt() * kdot(v, v).sqrt())
}

pub fn klse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + ksum(xs.iter().map(|x| (x - m).exp())).ln()
}

/// Direct evaluation of the in-batch retrieval loss.
pub fn ir_direct(q: &[Vec<f64>], p: &[Vec<f64>]) -> f64 {
    let n = q.len();
    let terms = (0..n).map(|i| {
        let s: Vec<f64> = (0..n).map(|j| kcos(&q[i], &p[j])).collect();
        klse(&s) - s[i]
    });
    ksum(terms) / n as f64
}

/// Direct evaluation of the semantic loss with pairs (2t, 2t+1).
pub fn sema_direct(rows: &[Vec<f64>], tau: f64) -> f64 {
    let m = rows.len();
    let partner = |a: usize| a ^ 1;
    let terms = (0..m).map(|a| {
        let s: Vec<f64> = (0..m).filter(|&k| k != a).map(|k| kcos(&rows[a], &rows[k]) / tau).collect();
        klse(&s) - kcos(&rows[a], &rows[partner(a)]) / tau
    });
    ksum(terms) / m as f64
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Direct evaluation of the language loss: pairs (2t, 2t+1) for t < n_pairs,
/// then extras; mean over (pair, third row) combinations.
pub fn lang_direct(rows: &[Vec<f64>], n_pairs: usize) -> f64 {
    let mut terms = Vec::new();
    for t in 0..n_pairs {
        let (i, j) = (2 * t, 2 * t + 1);
        for k in 0..rows.len() {
            if k == i || k == j {
                continue;
            }
            let d = kcos(&rows[i], &rows[k]) - kcos(&rows[j], &rows[k]);
            terms.push(-(log_sigmoid(d) + log_sigmoid(-d)));
        }
    }
    let n = terms.len() as f64;
    ksum(terms) / n
}

pub fn random_rows<R: Rng>(rng: &mut R, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Full-sort ranking: indices by descending score, ties by ascending key.
pub fn full_sort<K: Ord + Clone>(scores: &[(K, f64)]) -> Vec<(K, f64)> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    v
}

/// Reciprocal rank from a full ranking, cut at `k`.
pub fn rr_direct(ranking: &[String], relevant: &[String], k: usize) -> f64 {
    for (pos, id) in ranking.iter().enumerate().take(k) {
        if relevant.contains(id) {
            return 1.0 / (pos + 1) as f64;
        }
    }
    0.0
}

pub fn recall_direct(ranking: &[String], relevant: &[String], k: usize) -> f64 {
    let hit = ranking.iter().take(k).filter(|id| relevant.contains(id)).count();
    hit as f64 / relevant.len() as f64
}

/// Margin score evaluated from its definition with compensated sums.
pub fn margin_direct(sim_uv: f64, nn_u: &[f64], nn_v: &[f64]) -> f64 {
    let k = nn_u.len() as f64;
    sim_uv / (ksum(nn_u.iter().map(|x| x / (2.0 * k))) + ksum(nn_v.iter().map(|x| x / (2.0 * k))))
}

/// F1 of `score > t` computed by counting.
pub fn f1_at(scored: &[(f64, bool)], total_gold: usize, t: f64) -> f64 {
    let pred = scored.iter().filter(|s| s.0 > t).count();
    let tp = scored.iter().filter(|s| s.0 > t && s.1).count();
    let p = if pred == 0 { 0.0 } else { tp as f64 / pred as f64 };
    let r = tp as f64 / total_gold as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Exhaustive scan: every midpoint between distinct scores and both
/// sentinels, best F1 with ties to the higher threshold.
pub fn best_threshold(scored: &[(f64, bool)], total_gold: usize) -> (f64, f64) {
    let mut xs: Vec<f64> = scored.iter().map(|s| s.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let mut cands = vec![xs[0] - 1.0];
    cands.extend(xs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    cands.push(xs[xs.len() - 1] + 1.0);
    let mut best = (f64::NAN, -1.0);
    for t in cands {
        let f = f1_at(scored, total_gold, t);
        if f > best.1 || (f == best.1 && t > best.0) {
            best = (t, f);
        }
    }
    best
}
