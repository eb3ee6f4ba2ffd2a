//! Inference over paired binary outcomes: Wilson intervals, exact McNemar,
//! Cochran's Q and Holm adjustment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    DomainError(String),
}

/// Paired contingency counts for models A and B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairedCounts {
    /// Both correct.
    pub n11: u64,
    /// A correct, B wrong.
    pub n10: u64,
    /// A wrong, B correct.
    pub n01: u64,
    pub n00: u64,
}

impl PairedCounts {
    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    pub fn from_outcomes(a: &[bool], b: &[bool]) -> Self {
        assert_eq!(a.len(), b.len(), "paired outcomes must have equal length");
        let mut c = Self::default();
        for (&x, &y) in a.iter().zip(b) {
            match (x, y) {
                (true, true) => c.n11 += 1,
                (true, false) => c.n10 += 1,
                (false, true) => c.n01 += 1,
                (false, false) => c.n00 += 1,
            }
        }
        c
    }

    pub fn swapped(&self) -> Self {
        Self { n11: self.n11, n10: self.n01, n01: self.n10, n00: self.n00 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub delta: Option<f64>,
    /// Set when the statistic is undefined (e.g. all rows constant).
    pub degenerate: bool,
}

/// Two-sided standard normal quantile for `confidence`.
pub fn two_sided_z(confidence: f64) -> f64 {
    if (confidence - 0.95).abs() < 1e-12 {
        1.959964
    } else {
        normal_quantile(0.5 + confidence / 2.0)
    }
}

/// Inverse standard normal CDF (Acklam's rational approximation with one
/// Halley refinement step).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Complementary error function via the regularized incomplete gamma.
fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        1.0 + gamma_p(0.5, x * x)
    }
}

/// Wilson score interval, clamped to [0, 1].
pub fn wilson_ci(successes: u64, n: u64, confidence: f64) -> Result<(f64, f64), StatsError> {
    if n == 0 || successes > n || !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::DomainError(format!("wilson_ci({successes}, {n}, {confidence})")));
    }
    let z = two_sided_z(confidence);
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// P[Bin(n, 1/2) <= k], summed in log space.
fn binom_half_cdf(n: u64, k: u64) -> f64 {
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    let terms: Vec<f64> = (0..=k.min(n)).map(|i| ln_choose(n, i) - ln_half_n).collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max.exp() * terms.iter().map(|t| (t - max).exp()).sum::<f64>()
}

/// Exact two-sided McNemar test: p = min(1, 2 P[Bin(d, 1/2) <= min(n10, n01)]).
pub fn mcnemar_exact(c: PairedCounts) -> TestResult {
    let d = c.n10 + c.n01;
    let b = c.n10.min(c.n01);
    let n = c.total();
    let delta = (n > 0).then(|| (c.n10 as f64 - c.n01 as f64) / n as f64);
    let p = if d == 0 { 1.0 } else { (2.0 * binom_half_cdf(d, b)).min(1.0) };
    TestResult { statistic: b as f64, p_value: p, delta, degenerate: false }
}

/// Cochran's Q over an N×M binary matrix (rows = instances, columns = models).
pub fn cochran_q(rows: &[Vec<bool>]) -> Result<TestResult, StatsError> {
    let m = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || m < 2 {
        return Err(StatsError::DomainError("cochran_q needs N >= 1 and M >= 2".into()));
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err(StatsError::DomainError("ragged outcome matrix".into()));
    }
    let mut col = vec![0f64; m];
    let mut sum_row_sq = 0f64;
    let mut total = 0f64;
    for r in rows {
        let rs = r.iter().filter(|x| **x).count() as f64;
        for (j, &x) in r.iter().enumerate() {
            if x {
                col[j] += 1.0;
            }
        }
        total += rs;
        sum_row_sq += rs * rs;
    }
    let k = m as f64;
    let denom = k * total - sum_row_sq;
    if denom == 0.0 {
        return Ok(TestResult { statistic: 0.0, p_value: 1.0, delta: None, degenerate: true });
    }
    let sum_col_sq: f64 = col.iter().map(|c| c * c).sum();
    let q = (k - 1.0) * (k * sum_col_sq - total * total) / denom;
    Ok(TestResult { statistic: q, p_value: chi_square_sf(q, (m - 1) as f64), delta: None, degenerate: false })
}

/// Holm step-down adjustment; results are returned in input order.
pub fn holm_correct(p_values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::DomainError(format!("p-value {bad} outside [0,1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut out = vec![0.0; m];
    let mut running = 0f64;
    for (rank, &i) in order.iter().enumerate() {
        let adj = (p_values[i] * (m - rank) as f64).min(1.0);
        running = running.max(adj);
        out[i] = running;
    }
    Ok(out)
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df / 2.0, x / 2.0)
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
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
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_ITER: usize = 10_000;

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x). Uses the series for
/// x < a + 1 and the continued fraction otherwise.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..GAMMA_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}
