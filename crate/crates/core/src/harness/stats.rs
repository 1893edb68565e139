//! Trimmed statistics and trace slopes.

use std::ops::Range;

use crate::error::{Error, Result};

/// Smallest sample that [`trimmed_mean`] accepts.
pub const MIN_TRIM_SAMPLE: usize = 20;

/// Mean after dropping `floor(0.05·n)` values from each end of the sorted sample.
pub fn trimmed_mean(values: &[f64]) -> Result<f64> {
    if values.len() < MIN_TRIM_SAMPLE {
        return Err(Error::Domain(format!(
            "trimmed mean needs at least {MIN_TRIM_SAMPLE} values, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = values.len() / 20;
    let kept = &sorted[cut..sorted.len() - cut];
    Ok(mean(kept))
}

/// Trimmed mean when the sample is large enough, plain mean otherwise.
pub fn robust_mean(values: &[f64]) -> Option<f64> {
    match values.len() {
        0 => None,
        n if n < MIN_TRIM_SAMPLE => Some(mean(values)),
        _ => trimmed_mean(values).ok(),
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Converged-trial outcomes of one instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceOutcome {
    pub iterations: Vec<f64>,
    pub wall_ms: Vec<f64>,
}

/// Aggregated (mean, std) across instances; `None` marks "no converged trial".
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub problem: String,
    pub algo: String,
    pub batch_size: usize,
    pub eps: String,
    pub mean_iters: Option<f64>,
    pub std_iters: Option<f64>,
    pub mean_wall_ms: Option<f64>,
    pub std_wall_ms: Option<f64>,
}

impl SummaryRow {
    /// `(mean, std)` iteration cell rounded for tables: integer mean, one-decimal std.
    pub fn iteration_cell(&self) -> String {
        match (self.mean_iters, self.std_iters) {
            (Some(m), Some(s)) => format!("({:.0}, {:.1})", m, s),
            _ => "(N, N)".to_string(),
        }
    }
}

/// Per-instance trimmed means, then mean and sample std across instances.
///
/// An instance with no converged trial makes the whole row `N`.
pub fn summarize(problem: &str, algo: &str, batch_size: usize, eps: &str, outcomes: &[InstanceOutcome]) -> SummaryRow {
    let per_instance: Option<Vec<(f64, f64)>> = outcomes
        .iter()
        .map(|o| Some((robust_mean(&o.iterations)?, robust_mean(&o.wall_ms)?)))
        .collect();
    let (mi, si, mw, sw) = match per_instance {
        Some(v) if !v.is_empty() => {
            let iters: Vec<f64> = v.iter().map(|p| p.0).collect();
            let walls: Vec<f64> = v.iter().map(|p| p.1).collect();
            (
                Some(mean(&iters)),
                Some(sample_std(&iters)),
                Some(mean(&walls)),
                Some(sample_std(&walls)),
            )
        }
        _ => (None, None, None, None),
    };
    SummaryRow {
        problem: problem.to_string(),
        algo: algo.to_string(),
        batch_size,
        eps: eps.to_string(),
        mean_iters: mi,
        std_iters: si,
        mean_wall_ms: mw,
        std_wall_ms: sw,
    }
}

/// Least-squares slope of `ln(trace[k])` against `k` over `window`.
pub fn fit_log_slope(trace: &[f64], window: Range<usize>) -> Result<f64> {
    if window.end > trace.len() || window.len() < 2 {
        return Err(Error::Domain(format!(
            "window {window:?} invalid for a trace of length {}",
            trace.len()
        )));
    }
    let pts = &trace[window.clone()];
    if let Some(i) = pts.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!(
            "trace value {} at index {} is not positive",
            pts[i],
            window.start + i
        )));
    }
    let n = pts.len() as f64;
    let xm = (window.start + window.end - 1) as f64 / 2.0;
    let ym = pts.iter().map(|v| v.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in pts.iter().enumerate() {
        let dx = (window.start + i) as f64 - xm;
        sxy += dx * (v.ln() - ym);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

/// Per accuracy level: (successes, mean first-hit iteration, max first-hit iteration).
pub fn first_hit_levels(traces: &[(&[f64], usize)], levels: &[f64]) -> Vec<(usize, Option<f64>, Option<usize>)> {
    levels
        .iter()
        .map(|&level| {
            let hits: Vec<usize> = traces
                .iter()
                .filter_map(|(t, stride)| t.iter().position(|v| *v <= level).map(|i| i * stride))
                .collect();
            if hits.is_empty() {
                (0, None, None)
            } else {
                let m = hits.iter().sum::<usize>() as f64 / hits.len() as f64;
                (hits.len(), Some(m), hits.iter().copied().max())
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trimmed_constant() {
        assert_eq!(trimmed_mean(&[7.0; 100]).unwrap(), 7.0);
    }

    #[test]
    fn trimmed_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        // oracle: mean of 6..=95
        let oracle = (6..=95).map(f64::from).sum::<f64>() / 90.0;
        assert_eq!(oracle, 50.5);
        assert_eq!(trimmed_mean(&v).unwrap(), oracle);
    }

    #[test]
    fn outlier_is_trimmed() {
        let base: Vec<f64> = (0..100).map(|i| 10.0 + (i % 7) as f64).collect();
        let mut with = base.clone();
        with[37] = 1e9;
        let mut without = base;
        without[37] = 16.0;
        assert_eq!(trimmed_mean(&with).unwrap(), trimmed_mean(&without).unwrap());
    }

    #[test]
    fn small_sample_rejected() {
        assert!(matches!(trimmed_mean(&[1.0; 19]), Err(Error::Domain(_))));
    }

    #[test]
    fn summary_of_three_instances() {
        let outcomes: Vec<InstanceOutcome> = [100.0, 110.0, 120.0]
            .iter()
            .map(|&m| InstanceOutcome {
                iterations: vec![m; 30],
                wall_ms: vec![1.0; 30],
            })
            .collect();
        let row = summarize("(ED, 20, 0.7)", "sga", 50, "preset1", &outcomes);
        assert_eq!(row.mean_iters, Some(110.0));
        assert_eq!(row.std_iters, Some(10.0));
        assert_eq!(row.std_wall_ms, Some(0.0));
        assert_eq!(row.iteration_cell(), "(110, 10.0)");
    }

    #[test]
    fn identical_instances_have_zero_std() {
        let o = InstanceOutcome {
            iterations: (0..40).map(f64::from).collect(),
            wall_ms: vec![2.0; 40],
        };
        let row = summarize("p", "sgd", 10, "-", &[o.clone(), o.clone(), o]);
        assert_eq!(row.std_iters, Some(0.0));
    }

    #[test]
    fn empty_instance_marks_n() {
        let good = InstanceOutcome {
            iterations: vec![5.0; 30],
            wall_ms: vec![1.0; 30],
        };
        let row = summarize("p", "rmsprop", 50, "-", &[good, InstanceOutcome::default()]);
        assert_eq!(row.mean_iters, None);
        assert_eq!(row.iteration_cell(), "(N, N)");
    }

    #[test]
    fn slope_of_geometric_trace() {
        let g: f64 = 0.93;
        let t: Vec<f64> = (0..200).map(|k| g.powi(k)).collect();
        assert!((fit_log_slope(&t, 0..200).unwrap() - g.ln()).abs() < 1e-12);
        assert!((fit_log_slope(&t, 50..120).unwrap() - g.ln()).abs() < 1e-12);
        assert_eq!(fit_log_slope(&[3.0; 10], 0..10).unwrap(), 0.0);
    }

    #[test]
    fn slope_rejects_non_positive() {
        assert!(fit_log_slope(&[1.0, 0.0, 0.5], 0..3).is_err());
        assert!(fit_log_slope(&[1.0, 0.5], 0..3).is_err());
    }

    #[test]
    fn levels_triples() {
        let a = [1.0, 0.5, 0.05, 0.001];
        let b = [1.0, 0.2, 0.09];
        let out = first_hit_levels(&[(&a, 1), (&b, 10)], &[0.1, 0.01]);
        assert_eq!(out[0], (2, Some(11.0), Some(20)));
        assert_eq!(out[1], (1, Some(3.0), Some(3)));
    }

    proptest! {
        #[test]
        fn trimmed_mean_within_range(v in prop::collection::vec(-1e6f64..1e6, 20..300)) {
            let m = trimmed_mean(&v).unwrap();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo - 1e-6 && m <= hi + 1e-6);
        }

        #[test]
        fn trimmed_mean_shift_equivariant(v in prop::collection::vec(-1e3f64..1e3, 20..100), c in -1e3f64..1e3) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let a = trimmed_mean(&shifted).unwrap();
            let b = trimmed_mean(&v).unwrap() + c;
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}
