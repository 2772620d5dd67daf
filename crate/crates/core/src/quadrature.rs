//! One-dimensional quadrature rules and graded grids.

use crate::scalar::Scalar;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre<T: Scalar>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (
        nodes.into_iter().map(T::lit).collect(),
        weights.into_iter().map(T::lit).collect(),
    )
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Legendre polynomials `P_0..=P_l` at `x`.
pub fn legendre_all<T: Scalar>(l: usize, x: T) -> Vec<T> {
    let mut out = Vec::with_capacity(l + 1);
    out.push(T::one());
    if l >= 1 {
        out.push(x);
    }
    for k in 2..=l {
        let kf = T::lit(k as f64);
        let next = ((kf + kf - T::one()) * x * out[k - 1] - (kf - T::one()) * out[k - 2]) / kf;
        out.push(next);
    }
    out
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre::<f64>(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(&w)
        .map(|(&x, &w)| (mid + half * x, half * w))
        .collect()
}

/// Grid `t (j/J)^gamma`, `j = 0..=J`, refined toward zero.
pub fn graded_grid(t: f64, intervals: usize, gamma: f64) -> Vec<f64> {
    (0..=intervals)
        .map(|j| t * (j as f64 / intervals as f64).powf(gamma))
        .collect()
}

/// Grading exponent for an integrand with endpoint singularity `s^((2 alpha - d)/2)`.
pub fn grading_exponent(alpha: f64, dim: usize) -> f64 {
    let g = (2.0 * alpha - dim as f64) / 2.0;
    (2.0 / (1.0 + g)).clamp(1.0, 4.0)
}

/// `n` logarithmically spaced values from `a` to `b` inclusive.
pub fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `n` equally spaced values from `a` to `b` inclusive.
pub fn lin_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Pairwise sum; fixed association order regardless of caller.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 12, 40] {
            let (x, w) = gauss_legendre::<f64>(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "n={n}: {total}");
            for p in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 {
                    0.0
                } else {
                    2.0 / (p as f64 + 1.0)
                };
                assert!((approx - exact).abs() < 1e-12, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn nodes_sorted_and_f32_works() {
        let (x, w) = gauss_legendre::<f32>(9);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert!((w.iter().sum::<f32>() - 2.0).abs() < 1e-5);
    }

    #[test]
    fn legendre_values() {
        let p = legendre_all(3, 0.5f64);
        assert!((p[2] - (-0.125)).abs() < 1e-15);
        assert!((p[3] - (-0.4375)).abs() < 1e-15);
    }

    #[test]
    fn graded_grid_endpoints() {
        let g = graded_grid(2.0, 8, 2.0);
        assert_eq!(g[0], 0.0);
        assert!((g[8] - 2.0).abs() < 1e-15);
        assert!(g[1] < g[8] / 8.0);
        assert_eq!(grading_exponent(1.0, 1), 2.0 / 1.5);
        assert_eq!(grading_exponent(0.1, 2), 4.0);
    }
}
