//! Small statistics toolkit shared by the estimators.
//!
//! All reductions take slices in a fixed order and sum pairwise, so a
//! result never depends on how the per-item work was scheduled.

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&dev) / (n - 1) as f64
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    (mean(xs), (variance(xs) / n as f64).sqrt())
}

/// Ratio of means `Σa / Σb` with a delta-method standard error that uses
/// the joint empirical covariance of the paired samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioEstimate {
    pub ratio: f64,
    pub stderr: f64,
    pub mean_num: f64,
    pub mean_den: f64,
    pub stderr_den: f64,
    pub n: usize,
}

pub fn ratio_of_means(num: &[f64], den: &[f64]) -> RatioEstimate {
    assert_eq!(num.len(), den.len(), "paired samples required");
    let n = num.len();
    let a = mean(num);
    let b = mean(den);
    let r = a / b;
    let (stderr, stderr_den) = if n < 2 {
        (f64::NAN, f64::NAN)
    } else {
        let resid: Vec<f64> = num.iter().zip(den).map(|(x, y)| x - r * y).collect();
        let v = variance(&resid);
        ((v / n as f64).sqrt() / b.abs(), (variance(den) / n as f64).sqrt())
    };
    RatioEstimate {
        ratio: r,
        stderr,
        mean_num: a,
        mean_den: b,
        stderr_den,
        n,
    }
}

/// Total-variation distance between two pmfs indexed by the same keys.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let mut s = 0.0;
    for i in 0..n {
        let a = p.get(i).copied().unwrap_or(0.0);
        let b = q.get(i).copied().unwrap_or(0.0);
        s += (a - b).abs();
    }
    0.5 * s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn mean_and_stderr() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_stderr(&xs);
        assert_eq!(m, 2.5);
        // sample variance 5/3
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ratio_exact_when_proportional() {
        let den = [1.0, 2.0, 3.0, 5.0];
        let num: Vec<f64> = den.iter().map(|d| 0.25 * d).collect();
        let r = ratio_of_means(&num, &den);
        assert!((r.ratio - 0.25).abs() < 1e-15);
        assert!(r.stderr < 1e-15);
    }

    #[test]
    fn tv_distance() {
        assert_eq!(total_variation(&[0.5, 0.5], &[1.0]), 0.5);
        assert_eq!(total_variation(&[0.2, 0.8], &[0.2, 0.8]), 0.0);
    }
}
