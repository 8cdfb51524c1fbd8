//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use esvi::expfam::GlobalMixtureState;
use esvi::harness::corpus::{Corpus, Document};
use esvi::harness::synth::PlantedTopics;
use esvi::lda::{DocShard, LdaHyper};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// The 50-document, V=200, 8-topic corpus used across the tests.
pub fn planted_corpus() -> Corpus {
    PlantedTopics::default().generate(1).corpus
}

pub fn hyper(topics: usize) -> LdaHyper {
    LdaHyper { topics, vocab: PlantedTopics::default().vocab, alpha: 0.1, eta: 0.01 }
}

// ---------------------------------------------------------------------------
// Double-double arithmetic, about 32 significant digits.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Dd { hi, lo }
    }

    pub fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let v = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(v.hi, v.lo + t.lo)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

const LN2: Dd = Dd::new(std::f64::consts::LN_2, 2.3190468138462996e-17);

/// ln x for x > 0: x = 2^e · m with m ∈ [1, 2), ln m = 2 atanh((m−1)/(m+1)).
pub fn ln_dd(x: Dd) -> Dd {
    let e = x.hi.log2().floor();
    let scale = Dd::from(2f64.powi(-(e as i32)));
    let m = x.mul(scale);
    let s = m.sub(Dd::from(1.0)).div(m.add(Dd::from(1.0)));
    let s2 = s.mul(s);
    let mut term = s;
    let mut sum = Dd::from(0.0);
    for k in 0..60 {
        sum = sum.add(term.div(Dd::from((2 * k + 1) as f64)));
        term = term.mul(s2);
        if term.hi.abs() < 1e-40 {
            break;
        }
    }
    LN2.mul(Dd::from(e)).add(sum.add(sum))
}

/// B_{2n} for n = 1..12.
const BERNOULLI: [(f64, f64); 12] = [
    (1.0, 6.0),
    (-1.0, 30.0),
    (1.0, 42.0),
    (-1.0, 30.0),
    (5.0, 66.0),
    (-691.0, 2730.0),
    (7.0, 6.0),
    (-3617.0, 510.0),
    (43867.0, 798.0),
    (-174611.0, 330.0),
    (854513.0, 138.0),
    (-236364091.0, 2730.0),
];

/// ψ(x) in double-double: shift to x ≥ 40, then twelve asymptotic terms.
/// The truncation error there is below 1e-35.
pub fn digamma_dd(x: f64) -> Dd {
    let mut y = Dd::from(x);
    let mut shift = Dd::from(0.0);
    while y.hi < 40.0 {
        shift = shift.add(Dd::from(1.0).div(y));
        y = y.add(Dd::from(1.0));
    }
    let inv = Dd::from(1.0).div(y);
    let inv2 = inv.mul(inv);
    let mut pow = inv2;
    let mut series = Dd::from(0.0);
    for (n, &(num, den)) in BERNOULLI.iter().enumerate() {
        let two_n = 2.0 * (n + 1) as f64;
        let coeff = Dd::from(num).div(Dd::from(den).mul(Dd::from(two_n)));
        series = series.add(coeff.mul(pow));
        pow = pow.mul(inv2);
    }
    ln_dd(y).sub(inv.mul(Dd::from(0.5))).sub(series).sub(shift)
}

/// ψ(x) at exact doubles, from mpmath at 50 digits, as (x, hi, lo).
pub const MPMATH_DIGAMMA: [(f64, f64, f64); 11] = [
    (0.001, -1000.5755719318103, -2.0425078515687333e-14),
    (0.1, -10.423754940411076, -3.6769653932837104e-16),
    (0.5, -1.9635100260214235, 6.95842813380203e-17),
    (1.0, -0.5772156649015329, 4.942915152430645e-18),
    (1.4616321449683622, -9.241265521729427e-17, -2.5907356508198256e-33),
    (2.5, 0.7031566406452432, -4.430586970323463e-18),
    (7.0, 1.8727843350984672, -6.167046632507874e-17),
    (33.25, 3.4889418035209387, -5.112271972306195e-17),
    (1000.0, 6.907255195648812, 8.916703251127857e-17),
    (123456.75, 11.723642121279044, 8.629890424057128e-16),
    (1000000.0, 13.815510057964191, -6.330374222031517e-16),
];

// ---------------------------------------------------------------------------
// Restricted subset problem.

/// Σ z_k (u_k − ln z_k) with 0 · ln 0 = 0.
pub fn restricted_objective(u: &[f64], z: &[f64]) -> f64 {
    u.iter().zip(z).map(|(&u, &z)| if z > 0.0 { z * (u - z.ln()) } else { 0.0 }).sum()
}

/// Euclidean projection onto {z ≥ 0, Σ z = c}.
pub fn project_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - c) / (j + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projected gradient ascent with backtracking on the restricted objective.
pub fn projected_gradient_max(u: &[f64], c: f64) -> Vec<f64> {
    let k = u.len();
    let mut z = vec![c / k as f64; k];
    let mut f = restricted_objective(u, &z);
    let mut step = 1.0;
    for _ in 0..20_000 {
        let grad: Vec<f64> = u.iter().zip(&z).map(|(&u, &z)| u - z.max(1e-300).ln() - 1.0).collect();
        let mut improved = false;
        while step > 1e-18 {
            let trial: Vec<f64> = z.iter().zip(&grad).map(|(z, g)| z + step * g).collect();
            let trial = project_simplex(&trial, c);
            let ft = restricted_objective(u, &trial);
            if ft > f {
                let moved: f64 = trial.iter().zip(&z).map(|(a, b)| (a - b).abs()).sum();
                z = trial;
                f = ft;
                improved = moved > 1e-16;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    z
}

/// A random point of {z ≥ 0, Σ z = c}; some draws put zero on a coordinate.
pub fn random_feasible<R: Rng>(rng: &mut R, k: usize, c: f64) -> Vec<f64> {
    let conc = [0.1, 1.0, 10.0][rng.random_range(0..3)];
    let gamma = Gamma::new(conc, 1.0).unwrap();
    let mut z: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    if rng.random_bool(0.2) {
        z[rng.random_range(0..k)] = 0.0;
    }
    let total: f64 = z.iter().sum();
    if total == 0.0 {
        z[0] = 1.0;
        return z.iter().map(|w| w * c).collect();
    }
    z.iter().map(|w| w / total * c).collect()
}

// ---------------------------------------------------------------------------
// Batch recomputation of the globals from stored assignments.

/// γ (D × K) and λ (V × K) from the shard's φ.
pub fn lda_batch(shard: &DocShard, hyper: &LdaHyper) -> (Vec<f64>, Vec<f64>) {
    let k = hyper.topics;
    let mut gamma = vec![hyper.alpha; shard.num_docs() * k];
    let mut lambda = vec![hyper.eta; hyper.vocab * k];
    for (e, entry) in shard.entries().iter().enumerate() {
        let (d, w) = (entry.doc as usize, entry.word as usize);
        shard.for_each_phi(e, |t, p| {
            gamma[d * k + t] += entry.count * p;
            lambda[w * k + t] += entry.count * p;
        });
    }
    (gamma, lambda)
}

/// Multinomial-mixture globals: π̃ = α + Σ z, ñ = 1 + Σ z, ν̃ = η + Σ z x.
pub fn multinomial_batch(docs: &[Document], z: &[Vec<f64>], alpha: f64, eta: f64, vocab: usize) -> GlobalMixtureState {
    let k = z[0].len();
    let mut state = GlobalMixtureState {
        alpha,
        pi_tilde: vec![alpha; k],
        n_tilde: vec![1.0; k],
        nu_tilde: vec![vec![eta; vocab]; k],
    };
    for (doc, zi) in docs.iter().zip(z) {
        for (c, &weight) in zi.iter().enumerate() {
            state.pi_tilde[c] += weight;
            state.n_tilde[c] += weight;
            for &(w, n) in &doc.entries {
                state.nu_tilde[c][w as usize] += weight * n as f64;
            }
        }
    }
    state
}

pub fn max_relative(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300)).fold(0.0, f64::max)
}
