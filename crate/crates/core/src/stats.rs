//! Scalar statistics shared across modules. All std-dev style quantities
//! use the n-1 sample convention unless stated otherwise.

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (n-1). Zero for fewer than two points.
pub fn sample_var(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_std(x: &[f64]) -> f64 {
    sample_var(x).sqrt()
}

/// Population variance (divide by n).
pub fn pop_var(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

pub fn pop_std(x: &[f64]) -> f64 {
    pop_var(x).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `q` in [0, 1].
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Pearson correlation, NaN when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

/// Kendall tau-a rank correlation, O(n^2); fine for calibration windows.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (x[i] - x[j]) * (y[i] - y[j]);
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    (concordant - discordant) as f64 / pairs
}

/// Skewness and excess kurtosis with population (biased) moments.
pub fn skew_kurtosis(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = mean(x);
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for v in x {
        let d = v - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return (0.0, 0.0);
    }
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Jarque-Bera statistic: n/6 * (skew^2 + kurt^2/4).
pub fn jarque_bera(x: &[f64]) -> f64 {
    let (s, k) = skew_kurtosis(x);
    x.len() as f64 / 6.0 * (s * s + k * k / 4.0)
}

/// Two-sample Kolmogorov-Smirnov statistic: sup |F1 - F2|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let xa = a[i];
        let xb = b[j];
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        let fa = i as f64 / na as f64;
        let fb = j as f64 / nb as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_and_std_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(mean(&x), 2.5);
        assert_abs_diff_eq!(sample_var(&x), 5.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pop_var(&x), 1.25, epsilon = 1e-15);
    }

    #[test]
    fn quantile_interpolates() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile(&x, 0.0), 1.0);
        assert_abs_diff_eq!(quantile(&x, 1.0), 4.0);
        assert_abs_diff_eq!(quantile(&x, 0.5), 2.5);
        assert_abs_diff_eq!(quantile(&x, 0.25), 1.75);
    }

    #[test]
    fn kendall_tau_perfect_orders() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 4.0, 6.0, 8.0, 10.0];
        assert_abs_diff_eq!(kendall_tau(&x, &y), 1.0);
        let yrev: Vec<f64> = y.iter().rev().copied().collect();
        assert_abs_diff_eq!(kendall_tau(&x, &yrev), -1.0);
    }

    #[test]
    fn jarque_bera_zero_for_symmetric_mesokurtic() {
        // {-a, 0 x(n-2), a} has skew 0 and kurtosis exactly n/2, so n = 6
        // puts both JB terms at zero.
        let x = [-2.0, 0.0, 0.0, 0.0, 0.0, 2.0];
        let (s, k) = skew_kurtosis(&x);
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(jarque_bera(&x), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn jarque_bera_large_for_heavy_tails() {
        // One extreme outlier inflates kurtosis far beyond normal.
        let mut x = vec![0.0; 99];
        x.push(30.0);
        assert!(jarque_bera(&x) > 100.0);
    }

    #[test]
    fn ks_statistic_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_abs_diff_eq!(ks_statistic(&a, &a), 0.0);
        let b = [10.0, 11.0, 12.0];
        assert_abs_diff_eq!(ks_statistic(&a, &b), 1.0);
    }

    #[test]
    fn ks_statistic_half_shift() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 50.0).collect();
        assert_abs_diff_eq!(ks_statistic(&a, &b), 0.5, epsilon = 0.01);
    }
}
