//! Descriptive statistics over trace rows.

use std::fmt::Write as _;

use super::trace::TraceRow;

pub const CDF_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then_some(self.mean)
    }

    /// Sample variance (n − 1 denominator); zero for a single value.
    pub fn variance(&self) -> Option<f64> {
        match self.n {
            0 => None,
            1 => Some(0.0),
            n => Some(self.m2 / (n - 1) as f64),
        }
    }
}

/// Empirical CDF evaluated at `CDF_POINTS` evenly spaced quantile levels.
///
/// Point `i` is `(x, (i + 1) / n)` where `x` is the smallest sample whose
/// empirical CDF reaches that level.
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let len = sorted.len();
    (0..CDF_POINTS)
        .map(|i| {
            let p = (i + 1) as f64 / CDF_POINTS as f64;
            let idx = ((p * len as f64).ceil() as usize).clamp(1, len) - 1;
            (sorted[idx], p)
        })
        .collect()
}

pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub epochs: u64,
    /// Epoch-length-weighted mean of the per-epoch average age.
    pub weighted_mean_age_ns: f64,
    pub mean_age_ns: f64,
    pub median_age_ns: f64,
    pub var_age_ns2: f64,
    pub age_cdf: Vec<(f64, f64)>,
    pub rtt_cdf: Vec<(f64, f64)>,
    pub mean_lambda: f64,
    pub mean_backlog: f64,
    /// Share of rate updates that hit a clamp bound.
    pub clamp_fraction: f64,
    /// Epochs whose average age exceeded `threshold_ns`.
    pub violations: u64,
    pub threshold_ns: u64,
}

/// `None` when `rows` is empty.
pub fn summarize(rows: &[TraceRow], threshold_ns: u64) -> Option<SummaryStats> {
    if rows.is_empty() {
        return None;
    }
    let ages: Vec<f64> = rows.iter().map(|r| r.avg_age_ns).collect();
    let rtts: Vec<f64> = rows.iter().map(|r| r.rtt_bar_ns).collect();
    let mut w = Welford::default();
    ages.iter().for_each(|&a| w.push(a));

    let total_len: u128 = rows.iter().map(|r| r.epoch_len_ns as u128).sum();
    let weighted = if total_len == 0 {
        w.mean().expect("non-empty")
    } else {
        rows.iter().map(|r| r.avg_age_ns * r.epoch_len_ns as f64).sum::<f64>() / total_len as f64
    };
    // Every row closes with one rate update.
    let clamped = rows.iter().filter(|r| r.clamped).count() as f64;
    let n = rows.len() as f64;
    Some(SummaryStats {
        epochs: rows.len() as u64,
        weighted_mean_age_ns: weighted,
        mean_age_ns: w.mean().expect("non-empty"),
        median_age_ns: median(&ages).expect("non-empty"),
        var_age_ns2: w.variance().expect("non-empty"),
        age_cdf: empirical_cdf(&ages),
        rtt_cdf: empirical_cdf(&rtts),
        mean_lambda: rows.iter().map(|r| r.lambda).sum::<f64>() / n,
        mean_backlog: rows.iter().map(|r| r.avg_backlog).sum::<f64>() / n,
        clamp_fraction: clamped / n,
        violations: rows.iter().filter(|r| r.avg_age_ns > threshold_ns as f64).count() as u64,
        threshold_ns,
    })
}

impl SummaryStats {
    /// Scalar fields as `key = value` lines. CDFs are emitted separately.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "weighted_mean_age_ns = {}", self.weighted_mean_age_ns);
        let _ = writeln!(s, "mean_age_ns = {}", self.mean_age_ns);
        let _ = writeln!(s, "median_age_ns = {}", self.median_age_ns);
        let _ = writeln!(s, "var_age_ns2 = {}", self.var_age_ns2);
        let _ = writeln!(s, "mean_lambda = {}", self.mean_lambda);
        let _ = writeln!(s, "mean_backlog = {}", self.mean_backlog);
        let _ = writeln!(s, "clamp_fraction = {}", self.clamp_fraction);
        let _ = writeln!(s, "violations = {}", self.violations);
        let _ = writeln!(s, "threshold_ns = {}", self.threshold_ns);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;

    fn row(run: &str, k: u64, age_ms: f64, len_ms: u64) -> TraceRow {
        TraceRow {
            run_id: run.into(),
            policy: PolicyKind::Lazy,
            k,
            t_start_ns: 0,
            t_end_ns: len_ms * 1_000_000,
            avg_age_ns: age_ms * 1e6,
            peak_age_ns: 0,
            avg_backlog: 1.0,
            lambda: 10.0,
            epoch_len_ns: len_ms * 1_000_000,
            action: None,
            rtt_bar_ns: 1e6,
            z_bar_ns: None,
            clamped: k % 2 == 1,
            zeta: 0,
            true_avg_age_ns: None,
        }
    }

    #[test]
    fn weighted_and_unweighted() {
        let s = summarize(&[row("a", 0, 1.0, 1000), row("a", 1, 3.0, 3000)], u64::MAX).unwrap();
        assert!((s.weighted_mean_age_ns - 2.5e6).abs() < 1e-6);
        assert!((s.mean_age_ns - 2.0e6).abs() < 1e-6);
        assert_eq!(s.clamp_fraction, 0.5);
    }

    #[test]
    fn single_epoch() {
        let s = summarize(&[row("a", 0, 7.0, 10)], 0).unwrap();
        assert_eq!(s.weighted_mean_age_ns, 7e6);
        assert_eq!(s.var_age_ns2, 0.0);
        assert_eq!(s.violations, 1);
        assert!(summarize(&[], 0).is_none());
    }

    #[test]
    fn cdf_shape() {
        let c = empirical_cdf(&[3.0, 1.0, 2.0]);
        assert_eq!(c.len(), CDF_POINTS);
        assert_eq!(c[0], (1.0, 0.001));
        assert_eq!(c[CDF_POINTS - 1], (3.0, 1.0));
        assert!(c.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
