//! Cross-seed summaries, Welch tests with Hedges' g, and Benjamini-Hochberg
//! adjustment.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};

/// Which end of a metric counts as "best".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub best: f64,
    pub min: f64,
    pub max: f64,
    pub stderr: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    /// Set when `n == 1`: spread and interval are collapsed to zero width.
    pub single_sample: bool,
}

/// Two-sided 97.5% Student-t quantile.
pub fn t_quantile_975(df: f64) -> Result<f64> {
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| invalid(format!("t distribution with df={df}: {e}")))?;
    Ok(t.inverse_cdf(0.975))
}

/// Summary statistics with sample (n-1) standard deviation and a t-based
/// 95% interval. Values are sorted first so the result does not depend on
/// input order.
pub fn aggregate(sample: &[f64], direction: Direction) -> Result<Summary> {
    if sample.is_empty() {
        return Err(invalid("cannot aggregate an empty sample"));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(invalid("sample contains non-finite values"));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    };
    let (min, max) = (xs[0], xs[n - 1]);
    let best = match direction {
        Direction::HigherIsBetter => max,
        Direction::LowerIsBetter => min,
    };
    if n == 1 {
        return Ok(Summary {
            n,
            mean,
            std: 0.0,
            median,
            best,
            min,
            max,
            stderr: 0.0,
            ci95_lo: mean,
            ci95_hi: mean,
            single_sample: true,
        });
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let stderr = std / (n as f64).sqrt();
    let half = t_quantile_975((n - 1) as f64)? * stderr;
    Ok(Summary {
        n,
        mean,
        std,
        median,
        best,
        min,
        max,
        stderr,
        ci95_lo: mean - half,
        ci95_hi: mean + half,
        single_sample: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    /// `mean(a) - mean(b)`.
    pub delta: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub t: f64,
    pub df: f64,
    pub hedges_g: f64,
    pub p: f64,
    /// Both samples constant but different: the test has no finite statistic.
    pub degenerate: bool,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch test of `mean(a) = mean(b)` with Welch-Satterthwaite
/// degrees of freedom, and the pooled-SD Hedges' g.
pub fn welch_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "welch test needs n >= 2 per sample (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(invalid("samples contain non-finite values"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let delta = ma - mb;
    if va == 0.0 && vb == 0.0 {
        let degenerate = delta != 0.0;
        return Ok(WelchResult {
            delta,
            ci95_lo: delta,
            ci95_hi: delta,
            t: if degenerate {
                delta.signum() * f64::INFINITY
            } else {
                0.0
            },
            df: na + nb - 2.0,
            hedges_g: if degenerate {
                delta.signum() * f64::INFINITY
            } else {
                0.0
            },
            p: if degenerate { 0.0 } else { 1.0 },
            degenerate,
        });
    }
    let (qa, qb) = (va / na, vb / nb);
    let se = (qa + qb).sqrt();
    let t = delta / se;
    let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| invalid(format!("t distribution with df={df}: {e}")))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    let half = dist.inverse_cdf(0.975) * se;
    let pooled = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    let correction = 1.0 - 3.0 / (4.0 * (na + nb) - 9.0);
    Ok(WelchResult {
        delta,
        ci95_lo: delta - half,
        ci95_hi: delta + half,
        t,
        df,
        hedges_g: delta / pooled * correction,
        p,
        degenerate: false,
    })
}

/// Benjamini-Hochberg step-up q-values, returned in input order.
pub fn bh_adjust(pvalues: &[f64]) -> Result<Vec<f64>> {
    if pvalues.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("p-values must lie in [0, 1]"));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvalues[i].total_cmp(&pvalues[j]).then(i.cmp(&j)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(pvalues[i] * m as f64 / (rank + 1) as f64);
        q[i] = running.min(1.0);
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample() {
        let s = aggregate(&[1.0, 1.0, 1.0], Direction::HigherIsBetter).unwrap();
        assert_eq!((s.mean, s.std, s.ci95_lo, s.ci95_hi), (1.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn one_two_three() {
        let s = aggregate(&[3.0, 1.0, 2.0], Direction::HigherIsBetter).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert!((s.stderr - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let half = 4.302652729911275 / 3f64.sqrt();
        assert!((s.ci95_hi - (2.0 + half)).abs() < 1e-9);
        assert!((s.ci95_lo - (2.0 - half)).abs() < 1e-9);
        assert_eq!(s.best, 3.0);
        assert_eq!(s.median, 2.0);
    }

    #[test]
    fn single_sample_is_flagged() {
        let s = aggregate(&[0.4], Direction::LowerIsBetter).unwrap();
        assert!(s.single_sample);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.ci95_lo, s.ci95_hi);
    }

    #[test]
    fn identical_samples() {
        let w = welch_test(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(w.delta, 0.0);
        assert_eq!(w.hedges_g, 0.0);
        assert!((w.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        let w = welch_test(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((w.p, w.hedges_g, w.ci95_lo, w.ci95_hi), (1.0, 0.0, 0.0, 0.0));
        assert!(!w.degenerate);
        let w = welch_test(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert!(w.degenerate);
        assert_eq!(w.p, 0.0);
    }

    #[test]
    fn bh_fixture() {
        let q = bh_adjust(&[0.01, 0.02, 0.03, 0.04]).unwrap();
        for v in q {
            assert!((v - 0.04).abs() < 1e-15);
        }
        assert_eq!(bh_adjust(&[0.3]).unwrap(), vec![0.3]);
    }
}
