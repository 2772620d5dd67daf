//! Envelope fitting, regression and interval helpers shared by the verifiers.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One sampled inequality: `lhs <= C * envelope` is claimed for some constant `C`.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeSample {
    /// Index in the parameter grid; even indices fit, odd indices validate.
    pub param_index: usize,
    pub lhs: f64,
    pub envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub fitted_constant: f64,
    pub validation_constant: f64,
    pub slack: f64,
    pub fit_samples: usize,
    pub validation_samples: usize,
    pub passed: bool,
}

/// Fits `C = max lhs/envelope` on even grid indices and checks the odd ones against `(1 + slack) C`.
pub fn fit_validate(samples: &[EnvelopeSample], slack: f64) -> EnvelopeReport {
    let mut fit = f64::NEG_INFINITY;
    let mut val = f64::NEG_INFINITY;
    let (mut nf, mut nv) = (0, 0);
    for s in samples {
        let ratio = s.lhs / s.envelope;
        if s.param_index % 2 == 0 {
            fit = fit.max(ratio);
            nf += 1;
        } else {
            val = val.max(ratio);
            nv += 1;
        }
    }
    let passed = nf > 0
        && nv > 0
        && fit.is_finite()
        && val.is_finite()
        && val <= (1.0 + slack) * fit.max(0.0);
    EnvelopeReport {
        fitted_constant: fit,
        validation_constant: val,
        slack,
        fit_samples: nf,
        validation_samples: nv,
        passed,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    LinearFit {
        slope,
        intercept: my - slope * mx,
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    crate::quadrature::pairwise_sum(xs) / xs.len() as f64
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, f64::INFINITY);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = crate::quadrature::pairwise_sum(&dev) / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Empirical quantile with linear interpolation; `xs` need not be sorted.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Wilson score interval at 95% for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054;
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if k == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// Indices of a bootstrap resample of size `n`.
pub fn bootstrap_indices<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Least-squares fit of `ln y = ln C + theta t`, then `C` raised so the fit half is covered.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentialEnvelope {
    pub constant: f64,
    pub theta: f64,
    pub validation_ratio: f64,
    pub slack: f64,
    pub passed: bool,
}

pub fn fit_exponential_envelope(t: &[f64], y: &[f64], slack: f64) -> ExponentialEnvelope {
    let mut tf = Vec::new();
    let mut lf = Vec::new();
    for (i, (&ti, &yi)) in t.iter().zip(y).enumerate() {
        if i % 2 == 0 {
            tf.push(ti);
            lf.push(yi.ln());
        }
    }
    let fit = least_squares(&tf, &lf);
    let theta = fit.slope;
    let constant = tf
        .iter()
        .zip(&lf)
        .map(|(ti, li)| (li - theta * ti).exp())
        .fold(f64::NEG_INFINITY, f64::max);
    let validation_ratio = t
        .iter()
        .zip(y)
        .enumerate()
        .filter(|(i, _)| i % 2 == 1)
        .map(|(_, (ti, yi))| yi / (constant * (theta * ti).exp()))
        .fold(f64::NEG_INFINITY, f64::max);
    ExponentialEnvelope {
        constant,
        theta,
        validation_ratio,
        slack,
        passed: constant.is_finite() && validation_ratio <= 1.0 + slack,
    }
}

/// Outcome of a check against a criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}
