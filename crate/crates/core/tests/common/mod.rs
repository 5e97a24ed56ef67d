//! Naive reference implementations used as test oracles. Each one follows
//! its formula term by term with no shared code from the library.
#![allow(dead_code)]

use std::f64::consts::PI;

use narrate::synth::CorpusConfig;
use rustfft::num_complex::Complex64;

pub fn naive_recall(rankings: &[Vec<usize>], golds: &[usize], k: usize) -> f64 {
    let mut hits = 0.0;
    for (r, &g) in rankings.iter().zip(golds) {
        for i in 0..k.min(r.len()) {
            if r[i] == g {
                hits += 1.0;
            }
        }
    }
    hits / rankings.len() as f64
}

pub fn naive_mrr(rankings: &[Vec<usize>], golds: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &g) in rankings.iter().zip(golds) {
        let mut rank = 0;
        while r[rank] != g {
            rank += 1;
        }
        total += 1.0 / (rank + 1) as f64;
    }
    total / rankings.len() as f64
}

pub fn naive_ndcg(rankings: &[Vec<usize>], grades: &[Vec<u8>], k: usize) -> f64 {
    let mut total = 0.0;
    let mut n = 0.0;
    for (r, g) in rankings.iter().zip(grades) {
        let mut dcg = 0.0;
        for i in 0..k.min(r.len()) {
            dcg += (2f64.powi(g[r[i]] as i32) - 1.0) / ((i + 2) as f64).ln() * 2f64.ln();
        }
        let mut ideal = g.clone();
        ideal.sort();
        ideal.reverse();
        let mut idcg = 0.0;
        for i in 0..k.min(ideal.len()) {
            idcg += (2f64.powi(ideal[i] as i32) - 1.0) / ((i + 2) as f64).ln() * 2f64.ln();
        }
        if idcg > 0.0 {
            total += dcg / idcg;
            n += 1.0;
        }
    }
    total / n
}

pub fn naive_accuracy(p: &[usize], g: &[usize]) -> f64 {
    let mut c = 0.0;
    for i in 0..p.len() {
        if p[i] == g[i] {
            c += 1.0;
        }
    }
    c / p.len() as f64
}

pub fn naive_macro_f1(p: &[usize], g: &[usize], classes: usize) -> f64 {
    let mut sum = 0.0;
    let mut used = 0.0;
    for c in 0..classes {
        let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
        for i in 0..p.len() {
            match (p[i] == c, g[i] == c) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                _ => {}
            }
        }
        if tp + fp + fneg > 0.0 {
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
            sum += if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            used += 1.0;
        }
    }
    sum / used
}

pub fn naive_time_l1(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        s += (x[i] - y[i]).abs();
    }
    s / x.len() as f64
}

pub fn naive_js(p: &[f64], q: &[f64]) -> f64 {
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for i in 0..p.len() {
        let m = (p[i] + q[i]) / 2.0;
        if p[i] > 0.0 {
            kl_p += p[i] * (p[i] / m).log2();
        }
        if q[i] > 0.0 {
            kl_q += q[i] * (q[i] / m).log2();
        }
    }
    0.5 * kl_p + 0.5 * kl_q
}

pub fn hamming(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()).collect()
}

/// Direct sum `Σ_t x(t + τH) w(t) e^{-j 2π k t / L}`, indexed `[k][τ]`.
pub fn direct_stft(x: &[f64], w: &[f64], hop: usize) -> Vec<Vec<Complex64>> {
    let l = w.len();
    let frames = (x.len() - l) / hop + 1;
    (0..=l / 2)
        .map(|k| {
            (0..frames)
                .map(|tau| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for t in 0..l {
                        let angle = -2.0 * PI * k as f64 * t as f64 / l as f64;
                        acc += x[t + tau * hop] * w[t] * Complex64::new(angle.cos(), angle.sin());
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn morlet(t: f64, omega0: f64) -> Complex64 {
    let g = PI.powf(-0.25) * (-t * t / 2.0).exp();
    Complex64::new(g * (omega0 * t).cos(), g * (omega0 * t).sin())
}

pub fn ricker(t: f64) -> Complex64 {
    let a = 2.0 / (3f64.sqrt() * PI.powf(0.25));
    Complex64::new(a * (1.0 - t * t) * (-t * t / 2.0).exp(), 0.0)
}

/// `|a^{-1/2} Σ_{|t-b| ≤ 4a} x(t) ψ*((t-b)/a)|`, indexed `[scale][b]`.
pub fn direct_cwt(x: &[f64], scales: &[f64], psi: impl Fn(f64) -> Complex64) -> Vec<Vec<f64>> {
    let n = x.len() as i64;
    scales
        .iter()
        .map(|&a| {
            (0..n)
                .map(|b| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for t in 0..n {
                        if ((t - b) as f64).abs() <= 4.0 * a {
                            acc += x[t as usize] * psi((t - b) as f64 / a).conj();
                        }
                    }
                    (acc / a.sqrt()).norm()
                })
                .collect()
        })
        .collect()
}

/// Corpus for the trend criteria: 8 subjects, 5 positions.
pub fn trend_corpus() -> CorpusConfig {
    CorpusConfig::new(8, 5, 12, 15, 11)
}

/// Corpus large enough for 100 distinct descriptions.
pub fn retrieval_corpus() -> CorpusConfig {
    CorpusConfig::new(8, 5, 16, 20, 11)
}
