//! Summary statistics and the paired one-sided t-test used by the harness.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean (sample standard deviation over `√n`).
pub fn std_err(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// p-value of the one-sided paired t-test of `mean(a − b) > 0`.
///
/// Identical samples give 1; a constant positive difference gives 0.
pub fn paired_t_greater(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diff.len();
    if n < 2 {
        return 1.0;
    }
    let m = mean(&diff);
    let se = std_err(&diff);
    if se == 0.0 {
        return if m > 0.0 { 0.0 } else { 1.0 };
    }
    let t = m / se;
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("degrees of freedom are positive");
    1.0 - dist.cdf(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_summaries() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert_eq!(median(&xs), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert!((std_err(&xs) - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn paired_test_known_value() {
        // diffs 1,2,3: mean 2, se 1/√3, t = 2√3 on 2 dof.
        let p = paired_t_greater(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]);
        let t: f64 = 2.0 * 3f64.sqrt();
        let want = 0.5 - t / (2.0 * (2.0 + t * t).sqrt());
        assert!((p - want).abs() < 1e-10, "{p} vs {want}");
        assert_eq!(paired_t_greater(&[1.0, 1.0], &[1.0, 1.0]), 1.0);
        assert_eq!(paired_t_greater(&[2.0, 3.0], &[1.0, 2.0]), 0.0);
    }
}
