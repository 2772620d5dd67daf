//! The scalar recursion `h_{n+1}(t) = ∫₀ᵗ h_n(t-s) k^n(s) ds` and the series `H_λ = Σ λ^{2n} h_n`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, graded_grid};
use crate::stats::{fit_exponential_envelope, ExponentialEnvelope};

const GL_NODES: usize = 48;

/// `h_0, ..., h_N` sampled on a graded grid `t_j = T (j/J)^γ`, `j = 0..=J`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HSeries {
    pub times: Vec<f64>,
    pub gamma: f64,
    /// `values[n][j] = h_n(t_j)`.
    pub values: Vec<Vec<f64>>,
}

impl HSeries {
    pub fn orders(&self) -> usize {
        self.values.len()
    }

    /// Degree-5 Lagrange interpolation of `h_n` in the graded variable `w = (t/T)^{1/γ}`.
    pub fn interpolate(&self, n: usize, t: f64) -> f64 {
        let big_t = *self.times.last().unwrap();
        let j_max = self.times.len() - 1;
        let w = (t.clamp(0.0, big_t) / big_t).powf(1.0 / self.gamma) * j_max as f64;
        let i0 = (w.floor() as isize - 2).clamp(0, j_max as isize - 5) as usize;
        let v = &self.values[n];
        let mut s = 0.0;
        for a in 0..6 {
            let mut l = 1.0;
            for b in 0..6 {
                if a != b {
                    l *= (w - (i0 + b) as f64) / (a as f64 - b as f64);
                }
            }
            s += l * v[i0 + a];
        }
        s
    }
}

/// Computes `h_0..=h_N` for an order-dependent kernel `k(n, s)` whose worst endpoint behaviour is
/// `s^p`, `p > -1`. Each `h_{n+1}(t)` is split at `t/2`; both halves use the substitution
/// `s = (t/2) v^q` with `q` large enough that every endpoint power becomes at least cubic in `v`.
pub fn h_recursion<K>(
    orders: usize,
    t_max: f64,
    intervals: usize,
    gamma: f64,
    p: f64,
    k: K,
) -> Result<HSeries>
where
    K: Fn(usize, f64) -> f64,
{
    if !(p > -1.0) {
        return Err(Error::InvalidInput(format!(
            "kernel exponent {p} is not integrable at 0"
        )));
    }
    if intervals < 6 || !(t_max > 0.0) {
        return Err(Error::InvalidInput(
            "h recursion needs t > 0 and at least 6 intervals".into(),
        ));
    }
    let times = graded_grid(t_max, intervals, gamma);
    let q = 4.0 / (1.0 + p.min(0.0));
    let (nodes, weights) = gauss_legendre::<f64>(GL_NODES);
    let mut out = HSeries {
        times: times.clone(),
        gamma,
        values: vec![vec![1.0; times.len()]],
    };
    for n in 0..orders {
        let mut next = vec![0.0; times.len()];
        for (j, &t) in times.iter().enumerate().skip(1) {
            let half = t / 2.0;
            let mut s = 0.0;
            for (x, w) in nodes.iter().zip(&weights) {
                let v = 0.5 * (x + 1.0);
                let u = half * v.powf(q);
                let jac = 0.5 * w * half * q * v.powf(q - 1.0);
                s += jac
                    * (k(n, u) * out.interpolate(n, t - u) + out.interpolate(n, u) * k(n, t - u));
            }
            next[j] = s;
        }
        out.values.push(next);
    }
    Ok(out)
}

/// Closed form of `h̃_0..=h̃_N` at `t` for the kernel `k̃(s) = 1 + s^p`, using
/// `∫₀ᵗ (t-s)^a s^p ds = B(a+1, p+1) t^{a+p+1}`.
pub fn power_law_h(p: f64, orders: usize, t: f64) -> Vec<f64> {
    // h̃_n(t) = Σ_j c[n][j] t^{n + j p}
    let mut coeffs = vec![vec![1.0]];
    for n in 0..orders {
        let mut next = vec![0.0; n + 2];
        for (j, &c) in coeffs[n].iter().enumerate() {
            let a = n as f64 + j as f64 * p;
            next[j] += c / (a + 1.0);
            let beta = (ln_gamma(a + 1.0) + ln_gamma(p + 1.0) - ln_gamma(a + p + 2.0)).exp();
            next[j + 1] += c * beta;
        }
        coeffs.push(next);
    }
    coeffs
        .iter()
        .enumerate()
        .map(|(n, c)| {
            c.iter()
                .enumerate()
                .map(|(j, cj)| cj * t.powf(n as f64 + j as f64 * p))
                .sum()
        })
        .collect()
}

/// `Σ_{n>N} x^n h̃_n(t)` for `k̃ = 1 + s^p`, summed until the terms are negligible.
pub fn power_law_tail(p: f64, x: f64, t: f64, from_order: usize) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut cap = from_order + 64;
    loop {
        let h = power_law_h(p, cap, t);
        let mut s = 0.0;
        let mut last = 0.0;
        for (n, hn) in h.iter().enumerate().skip(from_order + 1) {
            last = x.powi(n as i32) * hn;
            s += last;
        }
        if !s.is_finite() {
            return Err(Error::NonConvergence(format!(
                "tail series overflowed at x={x}, t={t}"
            )));
        }
        if last <= 1e-16 * s.max(f64::MIN_POSITIVE) || last == 0.0 {
            return Ok(s);
        }
        if cap > from_order + 2048 {
            return Err(Error::NonConvergence(format!(
                "tail series did not settle by order {cap}"
            )));
        }
        cap *= 2;
    }
}

/// `H_λ(t_j) = Σ_n λ^{2n} h_n(t_j)` over the grid, requiring the last retained term to be negligible.
pub fn h_lambda(lambda: f64, h: &HSeries) -> Result<Vec<f64>> {
    let l2 = lambda * lambda;
    let mut out = Vec::with_capacity(h.times.len());
    for j in 0..h.times.len() {
        let mut s = 0.0;
        let mut last = 0.0;
        for (n, hn) in h.values.iter().enumerate() {
            last = l2.powi(n as i32) * hn[j];
            s += last;
        }
        if h.values.len() > 1 && last > 1e-12 * s {
            return Err(Error::NonConvergence(format!(
                "H_λ partial sum not stabilised at t={} with {} orders (last term {last:e}, sum {s:e})",
                h.times[j],
                h.values.len()
            )));
        }
        out.push(s);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HLambdaReport {
    pub lambda: f64,
    pub values: Vec<f64>,
    pub envelope: ExponentialEnvelope,
}

/// Fits `H_λ(t) <= C e^{θt}` on half the grid and validates on the other half.
pub fn h_lambda_envelope(lambda: f64, h: &HSeries, slack: f64) -> Result<HLambdaReport> {
    let values = h_lambda(lambda, h)?;
    let (t, y): (Vec<f64>, Vec<f64>) = h
        .times
        .iter()
        .zip(&values)
        .skip(1)
        .map(|(a, b)| (*a, *b))
        .unzip();
    let envelope = fit_exponential_envelope(&t, &y, slack);
    Ok(HLambdaReport {
        lambda,
        values,
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn unit_kernel_gives_powers() {
        let h = h_recursion(5, 2.0, 64, 1.0, 0.0, |_, _| 1.0).unwrap();
        assert!(h.values[0].iter().all(|&v| v == 1.0));
        for n in 1..=5 {
            for (t, v) in h.times.iter().zip(&h.values[n]) {
                let exact = t.powi(n as i32) / factorial(n);
                assert!(
                    (v - exact).abs() <= 1e-10 * exact.max(1e-3),
                    "n={n} t={t}: {v} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn inverse_sqrt_kernel_first_order() {
        let h = h_recursion(1, 1.5, 64, 2.0, -0.5, |_, s| 1.0 + s.powf(-0.5)).unwrap();
        for (t, v) in h.times.iter().zip(&h.values[1]) {
            let exact = t + 2.0 * t.sqrt();
            assert!((v - exact).abs() < 1e-10, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn numeric_matches_closed_form() {
        for &p in &[-0.5, -0.25, 0.25, 0.5] {
            let gamma = crate::quadrature::grading_exponent(0.5 + p, 1);
            let h = h_recursion(4, 3.0, 160, gamma, p, |_, s| 1.0 + s.powf(p)).unwrap();
            for &t in &[0.1, 1.0, 3.0] {
                let exact = power_law_h(p, 4, t);
                for n in 0..=4 {
                    let v = h.interpolate(n, t);
                    assert!(
                        (v / exact[n] - 1.0).abs() < 5e-4,
                        "p={p} n={n} t={t}: {v} vs {}",
                        exact[n]
                    );
                }
            }
        }
    }

    #[test]
    fn nonnegative_nondecreasing() {
        let h = h_recursion(6, 2.0, 80, 2.0, -0.5, |n, s| {
            (1.0 + 0.1 * n as f64) * (1.0 + s.powf(-0.5))
        })
        .unwrap();
        for v in &h.values {
            assert!(v.iter().all(|&x| x >= 0.0));
            assert!(v.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn h_lambda_zero_and_exponential() {
        let h = h_recursion(40, 2.0, 64, 1.0, 0.0, |_, _| 1.0).unwrap();
        let r0 = h_lambda_envelope(0.0, &h, 0.1).unwrap();
        assert_eq!(r0.envelope.constant, 1.0);
        assert_eq!(r0.envelope.theta, 0.0);
        let lam = 1.3;
        let r = h_lambda_envelope(lam, &h, 0.1).unwrap();
        for (t, v) in h.times.iter().zip(&r.values) {
            assert!((v / (lam * lam * t).exp() - 1.0).abs() < 1e-9);
        }
        assert!((r.envelope.theta / (lam * lam) - 1.0).abs() < 0.02);
        assert!(r.envelope.passed);
    }

    #[test]
    fn unstabilised_series_is_reported() {
        let h = h_recursion(3, 2.0, 32, 1.0, 0.0, |_, _| 1.0).unwrap();
        assert!(matches!(h_lambda(3.0, &h), Err(Error::NonConvergence(_))));
    }

    #[test]
    fn tail_of_exponential_series() {
        // p = 0: k̃ = 2, h̃_n = (2t)^n / n!
        let t = 0.7;
        let x = 0.4;
        let tail = power_law_tail(0.0, x, t, 3).unwrap();
        let exact: f64 = (4..60)
            .map(|n| (2.0 * x * t).powi(n) / factorial(n as usize))
            .sum();
        assert!((tail / exact - 1.0).abs() < 1e-12);
    }
}
