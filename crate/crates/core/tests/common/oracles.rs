//! Independent reference implementations. These deliberately avoid the
//! library's code paths: different algebra, brute force or direct hashing.

use factmask::{Label, Span};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Mask count for a ratio given in whole percent, in exact integer arithmetic.
pub fn mask_count_percent(n: usize, percent: u32) -> usize {
    if percent == 0 || n == 0 {
        return 0;
    }
    // round_half_up(p * n / 100) == floor((p * n + 50) / 100)
    let k = (percent as usize * n + 50) / 100;
    k.clamp(1, n)
}

/// Seeded sampler written from the contract: draw `k` distinct indices by
/// successive uniform choice among the not-yet-chosen positions.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut chosen = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
        chosen.push(pool[i]);
    }
    chosen.sort_unstable();
    chosen
}

/// `stable_hash` recomputed with sha2 directly.
pub fn sha_u64(parts: &[&[u8]]) -> u64 {
    let mut bytes = Vec::new();
    for p in parts {
        bytes.extend_from_slice(&(p.len() as u64).to_le_bytes());
        bytes.extend_from_slice(p);
    }
    let digest = Sha256::digest(&bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Byte coverage of a span list as a bitmap.
pub fn coverage(len: usize, spans: &[Span]) -> Vec<bool> {
    let mut bits = vec![false; len];
    for s in spans {
        for b in &mut bits[s.start..s.end] {
            *b = true;
        }
    }
    bits
}

pub fn recount(truth: &[Label], pred: &[Label], class: Label) -> (usize, usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for i in 0..truth.len() {
        if pred[i] == class && truth[i] == class {
            tp += 1;
        } else if pred[i] == class {
            fp += 1;
        } else if truth[i] == class {
            fn_ += 1;
        } else {
            tn += 1;
        }
    }
    (tp, fp, fn_, tn)
}

pub fn macro_f1(truth: &[Label], pred: &[Label]) -> f64 {
    let mut total = 0.0;
    for class in [Label::Consistent, Label::Inconsistent] {
        let (tp, fp, fn_, _) = recount(truth, pred, class);
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        total += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    total / 2.0
}

pub fn balanced_accuracy(truth: &[Label], pred: &[Label]) -> f64 {
    let mut total = 0.0;
    for class in [Label::Consistent, Label::Inconsistent] {
        let members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        let hits = members.iter().filter(|&&i| pred[i] == class).count();
        total += hits as f64 / members.len() as f64;
    }
    total / 2.0
}

/// Single-pass textbook formula.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
pub fn mean_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let smaller = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&mean_ranks(x), &mean_ranks(y))
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9.
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn t_log_norm(df: f64) -> f64 {
    ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln()
}

fn t_pdf(t: f64, df: f64, ln_c: f64) -> f64 {
    (ln_c - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp()
}

/// Two-sided p-value of the correlation t-test by composite Simpson
/// integration of the t density over `[0, |t|]`.
pub fn correlation_p(r: f64, n: usize) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r.abs() * (df / (1.0 - r * r)).sqrt();
    // Substitute t = tan(theta) so large |t| stays well resolved.
    let upper = t.atan();
    let steps = 20_000;
    let h = upper / steps as f64;
    let ln_c = t_log_norm(df);
    let f = |theta: f64| {
        let c = theta.cos();
        t_pdf(theta.tan(), df, ln_c) / (c * c)
    };
    let mut sum = f(0.0) + f(upper);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    let central = sum * h / 3.0;
    (1.0 - 2.0 * central).max(0.0)
}

/// Least-squares quadratic via the 3x3 normal equations solved by Cramer's
/// rule in exact rational arithmetic. Returns `(a, b, c, r_squared)` for
/// `y = a x^2 + b x + c`, each rounded to the nearest f64 only at the end.
pub fn quadratic(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    use num_rational::BigRational;
    use num_traits::{ToPrimitive, Zero};

    let exact = |v: f64| BigRational::from_float(v).expect("finite input");
    let xs: Vec<BigRational> = x.iter().map(|&v| exact(v)).collect();
    let ys: Vec<BigRational> = y.iter().map(|&v| exact(v)).collect();
    let pow = |v: &BigRational, p: i32| {
        (0..p).fold(BigRational::from_integer(1.into()), |acc, _| acc * v)
    };
    let s = |p: i32| {
        xs.iter()
            .fold(BigRational::zero(), |acc, v| acc + pow(v, p))
    };
    let t = |p: i32| {
        xs.iter()
            .zip(&ys)
            .fold(BigRational::zero(), |acc, (v, w)| acc + pow(v, p) * w)
    };
    let m = [[s(4), s(3), s(2)], [s(3), s(2), s(1)], [s(2), s(1), s(0)]];
    let rhs = [t(2), t(1), t(0)];
    let det = |m: &[[BigRational; 3]; 3]| {
        &m[0][0] * (&m[1][1] * &m[2][2] - &m[1][2] * &m[2][1])
            - &m[0][1] * (&m[1][0] * &m[2][2] - &m[1][2] * &m[2][0])
            + &m[0][2] * (&m[1][0] * &m[2][1] - &m[1][1] * &m[2][0])
    };
    let d = det(&m);
    let coef: Vec<BigRational> = (0..3)
        .map(|k| {
            let mut mk = m.clone();
            for row in 0..3 {
                mk[row][k] = rhs[row].clone();
            }
            det(&mk) / &d
        })
        .collect();
    let n = BigRational::from_integer(ys.len().into());
    let mean = ys.iter().fold(BigRational::zero(), |acc, v| acc + v) / n;
    let sq = |v: BigRational| &v * &v;
    let ss_tot = ys
        .iter()
        .fold(BigRational::zero(), |acc, v| acc + sq(v - &mean));
    let ss_res = xs.iter().zip(&ys).fold(BigRational::zero(), |acc, (v, w)| {
        acc + sq(w - (&coef[0] * v * v + &coef[1] * v + &coef[2]))
    });
    let r2 = if ss_tot.is_zero() {
        0.0
    } else {
        (BigRational::from_integer(1.into()) - ss_res / ss_tot)
            .to_f64()
            .unwrap()
    };
    let f = |v: &BigRational| v.to_f64().unwrap();
    (f(&coef[0]), f(&coef[1]), f(&coef[2]), r2)
}

/// Set-overlap F1 on lower-cased, punctuation-stripped words.
pub fn token_f1(a: &str, b: &str) -> f64 {
    use std::collections::BTreeSet;
    let words = |s: &str| -> BTreeSet<String> {
        s.split_whitespace()
            .map(|w| {
                w.chars()
                    .skip_while(|c| !c.is_alphanumeric())
                    .collect::<String>()
                    .chars()
                    .rev()
                    .skip_while(|c| !c.is_alphanumeric())
                    .collect::<String>()
                    .chars()
                    .rev()
                    .collect::<String>()
                    .to_lowercase()
            })
            .filter(|w| !w.is_empty())
            .collect()
    };
    let (sa, sb) = (words(a), words(b));
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let common = sa.iter().filter(|w| sb.contains(*w)).count();
    2.0 * common as f64 / (sa.len() + sb.len()) as f64
}

/// Diversity by explicit enumeration of all unordered pairs.
pub fn diversity(samples: &[&str], sim: impl Fn(&str, &str) -> f64) -> f64 {
    let mut pairs = Vec::new();
    for i in 0..samples.len() {
        for j in 0..samples.len() {
            if i < j {
                pairs.push(sim(samples[i], samples[j]));
            }
        }
    }
    -(pairs.iter().sum::<f64>() / pairs.len() as f64)
}

/// Random vector in `[lo, hi)` with a fraction of forced ties.
pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, tie_heavy: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if tie_heavy {
                rng.random_range(0..4) as f64
            } else {
                rng.random_range(-10.0..10.0)
            }
        })
        .collect()
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                Label::Consistent
            } else {
                Label::Inconsistent
            }
        })
        .collect()
}
