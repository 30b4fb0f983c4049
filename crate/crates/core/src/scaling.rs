//! Log-log least squares for cost-versus-length scaling.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `log y = slope * log x + intercept`, natural logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl LogLogFit {
    pub fn predict(&self, x: f64) -> f64 {
        libm::exp(self.intercept + self.slope * libm::log(x))
    }

    pub fn slope_within(&self, lo: f64, hi: f64) -> bool {
        (lo..=hi).contains(&self.slope)
    }
}

/// Fewest distinct lengths a fit accepts.
pub const MIN_POINTS: usize = 3;

/// Ordinary least squares on `(ln x, ln y)`. Needs at least three distinct
/// positive `x` and strictly positive `y`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::Degenerate("log-log fit needs positive finite points".into()));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < MIN_POINTS {
        return Err(Error::Degenerate(alloc::format!("{} distinct lengths, need {MIN_POINTS}", xs.len())));
    }
    let lx: Vec<f64> = points.iter().map(|p| libm::log(p.0)).collect();
    let ly: Vec<f64> = points.iter().map(|p| libm::log(p.1)).collect();
    let n = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LogLogFit { slope, intercept, r_squared, points: points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn power_laws() {
        let quad: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0].iter().map(|&n| (n, 3.5 * n * n)).collect();
        let f = fit_loglog(&quad).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3.5f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!((f.predict(10.0) - 350.0).abs() < 1e-9);
        let lin: Vec<(f64, f64)> = [8.0, 16.0, 32.0].iter().map(|&n| (n, 7.0 * n)).collect();
        assert!((fit_loglog(&lin).unwrap().slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_or_invalid_input() {
        assert!(fit_loglog(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_loglog(&[(1.0, 1.0), (1.0, 2.0), (2.0, 2.0), (2.0, 3.0)]).is_err());
        assert!(fit_loglog(&[(1.0, 1.0), (2.0, 0.0), (3.0, 2.0)]).is_err());
    }

    #[test]
    fn noisy_fit_has_lower_r_squared() {
        let pts = [(8.0, 100.0), (16.0, 150.0), (32.0, 900.0), (64.0, 1000.0)];
        let f = fit_loglog(&pts).unwrap();
        assert!(f.r_squared < 0.99 && f.r_squared > 0.0);
    }

    proptest! {
        #[test]
        fn recovers_any_power(c in 0.01f64..1e6, k in -3.0f64..3.0) {
            let pts: Vec<(f64, f64)> = [4.0, 9.0, 20.0, 50.0].iter().map(|&n: &f64| (n, c * n.powf(k))).collect();
            let f = fit_loglog(&pts).unwrap();
            prop_assert!((f.slope - k).abs() < 1e-9);
            prop_assert!((f.intercept - c.ln()).abs() < 1e-8);
        }
    }
}
