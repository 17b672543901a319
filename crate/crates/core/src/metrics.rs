//! Simple regret and cross-run summaries.
//!
//! Steps before the first completed experiment carry a best value of `-∞`
//! and a regret of `+∞`; every summary here treats those as ordinary
//! (largest) order statistics.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no traces to aggregate")]
    Empty,
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// `f_star − best_so_far`, clamped at zero (maximization space).
pub fn simple_regret(f_star: f64, best_so_far: f64) -> f64 {
    if best_so_far == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    (f_star - best_so_far).max(0.0)
}

/// Per-step record of one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub function: String,
    pub preset: String,
    pub strategy: String,
    pub run: usize,
    pub seed: u64,
    /// Best completed objective value per step, maximization space.
    pub best_values: Vec<f64>,
    pub regrets: Vec<f64>,
}

impl RunTrace {
    pub fn new(
        function: impl Into<String>,
        preset: impl Into<String>,
        strategy: impl Into<String>,
        run: usize,
        seed: u64,
        best_values: Vec<f64>,
        f_star: f64,
    ) -> Self {
        let regrets = best_values.iter().map(|b| simple_regret(f_star, *b)).collect();
        Self {
            function: function.into(),
            preset: preset.into(),
            strategy: strategy.into(),
            run,
            seed,
            best_values,
            regrets,
        }
    }

    pub fn len(&self) -> usize {
        self.regrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regrets.is_empty()
    }
}

/// Linear-interpolation quantile of an ascending slice. `+∞` entries
/// propagate whenever they take part in the interpolation.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi || frac == 0.0 {
        return sorted[lo];
    }
    if sorted[hi].is_infinite() {
        return sorted[hi];
    }
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSummary {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Per-step median and quartiles across equally long series.
pub fn aggregate_series(series: &[&[f64]]) -> Result<Vec<StepSummary>, MetricsError> {
    let first = series.first().ok_or(MetricsError::Empty)?;
    let len = first.len();
    if let Some(bad) = series.iter().find(|s| s.len() != len) {
        return Err(MetricsError::LengthMismatch(len, bad.len()));
    }
    Ok((0..len)
        .map(|t| {
            let col = sorted(series.iter().map(|s| s[t]));
            StepSummary {
                median: quantile(&col, 0.5),
                q25: quantile(&col, 0.25),
                q75: quantile(&col, 0.75),
            }
        })
        .collect())
}

/// Per-step regret summary across runs.
pub fn aggregate(traces: &[RunTrace]) -> Result<Vec<StepSummary>, MetricsError> {
    let series: Vec<&[f64]> = traces.iter().map(|t| t.regrets.as_slice()).collect();
    aggregate_series(&series)
}

/// A statistic that may be censored (undefined because too few runs reached
/// the target).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Censored {
    Value(f64),
    Censored,
}

impl Censored {
    fn from_finite(v: f64) -> Self {
        if v.is_finite() {
            Censored::Value(v)
        } else {
            Censored::Censored
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Censored::Value(v) => Some(v),
            Censored::Censored => None,
        }
    }
}

impl fmt::Display for Censored {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Censored::Value(v) => write!(f, "{v}"),
            Censored::Censored => f.write_str("–"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsToReach {
    pub median: Censored,
    pub iqr: Censored,
}

/// First 1-based step at which a regret series drops to `reference`.
pub fn first_reaching(regrets: &[f64], reference: f64) -> Option<usize> {
    regrets.iter().position(|r| *r <= reference).map(|i| i + 1)
}

/// Median and IQR of the steps each run needs to reach `reference_regret`.
///
/// Runs that never reach it count as `+∞`. The median is therefore finite
/// only when strictly more than half of the runs reach the target, and the
/// IQR only when the upper quartile is finite.
pub fn steps_to_reach(traces: &[RunTrace], reference_regret: f64) -> StepsToReach {
    if traces.is_empty() {
        return StepsToReach {
            median: Censored::Censored,
            iqr: Censored::Censored,
        };
    }
    let steps = sorted(traces.iter().map(|t| {
        first_reaching(&t.regrets, reference_regret)
            .map(|s| s as f64)
            .unwrap_or(f64::INFINITY)
    }));
    let q75 = quantile(&steps, 0.75);
    StepsToReach {
        median: Censored::from_finite(quantile(&steps, 0.5)),
        iqr: Censored::from_finite(q75 - quantile(&steps, 0.25)),
    }
}

/// Fraction of steps where `a` is strictly below `b`; ties count for neither.
pub fn superiority_ratio(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count();
    Ok(wins as f64 / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(regrets: Vec<f64>) -> RunTrace {
        let best = regrets.iter().map(|r| -r).collect();
        RunTrace::new("F1", "K2-11", "pipebo", 0, 0, best, 0.0)
    }

    #[test]
    fn regret_basics() {
        assert_eq!(simple_regret(0.0, 0.0), 0.0);
        assert_eq!(simple_regret(0.0, -5.0), 5.0);
        assert_eq!(simple_regret(0.0, 1e-12), 0.0);
        assert_eq!(simple_regret(0.0, f64::NEG_INFINITY), f64::INFINITY);
    }

    #[test]
    fn single_trace_aggregates_to_itself() {
        let t = trace(vec![3.0, 2.0, 2.0, 0.5]);
        let agg = aggregate(std::slice::from_ref(&t)).unwrap();
        for (s, r) in agg.iter().zip(&t.regrets) {
            assert_eq!((s.median, s.q25, s.q75), (*r, *r, *r));
        }
    }

    #[test]
    fn even_count_median_averages_middle_pair() {
        let traces: Vec<RunTrace> = (1..=4).map(|v| trace(vec![v as f64; 3])).collect();
        let agg = aggregate(&traces).unwrap();
        assert!(agg.iter().all(|s| s.median == 2.5));
        assert_eq!(agg[0].q25, 1.75);
        assert_eq!(agg[0].q75, 3.25);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let traces = vec![trace(vec![1.0, 1.0]), trace(vec![1.0])];
        assert_eq!(aggregate(&traces).unwrap_err(), MetricsError::LengthMismatch(2, 1));
        assert!(superiority_ratio(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn all_runs_reach_at_the_same_step() {
        let traces: Vec<RunTrace> = (0..5)
            .map(|_| {
                let mut r = vec![5.0; 9];
                r.extend(vec![0.1; 11]);
                trace(r)
            })
            .collect();
        let s = steps_to_reach(&traces, 0.2);
        assert_eq!(s.median, Censored::Value(10.0));
        assert_eq!(s.iqr, Censored::Value(0.0));
    }

    #[test]
    fn no_run_reaching_is_fully_censored() {
        let traces = vec![trace(vec![5.0; 10]); 4];
        let s = steps_to_reach(&traces, 1.0);
        assert_eq!(s, StepsToReach { median: Censored::Censored, iqr: Censored::Censored });
        assert_eq!(s.median.to_string(), "–");
    }

    #[test]
    fn exactly_half_reaching_is_censored() {
        let reach = {
            let mut r = vec![5.0; 39];
            r.extend(vec![0.0; 161]);
            r
        };
        let never = vec![5.0; 200];
        let half: Vec<RunTrace> = (0..4)
            .map(|i| trace(if i % 2 == 0 { reach.clone() } else { never.clone() }))
            .collect();
        assert_eq!(steps_to_reach(&half, 1.0).median, Censored::Censored);
        // One more reaching run tips it over half: sorted {40, 40, 40, ∞, ∞}.
        let mut more = half.clone();
        more.push(trace(reach.clone()));
        let s = steps_to_reach(&more, 1.0);
        assert_eq!(s.median, Censored::Value(40.0));
        assert_eq!(s.iqr, Censored::Censored);
    }

    #[test]
    fn superiority_counts() {
        assert_eq!(superiority_ratio(&[1.0; 200], &[1.0; 200]).unwrap(), 0.0);
        assert_eq!(superiority_ratio(&[0.0; 5], &[1.0; 5]).unwrap(), 1.0);
        let mut a = vec![0.0; 120];
        a.extend(vec![1.0; 10]);
        a.extend(vec![2.0; 70]);
        let b = vec![1.0; 200];
        assert!((superiority_ratio(&a, &b).unwrap() - 0.60).abs() < 1e-15);
        assert!((superiority_ratio(&b, &a).unwrap() - 0.35).abs() < 1e-15);
    }

    fn nonincreasing(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0..1.0f64, len).prop_map(|drops| {
            let mut level = 10.0;
            drops
                .into_iter()
                .map(|d| {
                    level *= 1.0 - 0.5 * d;
                    level
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn median_of_nonincreasing_traces_is_nonincreasing(
            runs in prop::collection::vec(nonincreasing(30), 1..12)
        ) {
            let traces: Vec<RunTrace> = runs.into_iter().map(trace).collect();
            let agg = aggregate(&traces).unwrap();
            for w in agg.windows(2) {
                prop_assert!(w[1].median <= w[0].median);
            }
        }

        #[test]
        fn larger_reference_never_needs_more_steps(
            runs in prop::collection::vec(nonincreasing(40), 1..12),
            r1 in 0.0..10.0f64,
            r2 in 0.0..10.0f64,
        ) {
            let traces: Vec<RunTrace> = runs.into_iter().map(trace).collect();
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let m_lo = steps_to_reach(&traces, lo).median.value().unwrap_or(f64::INFINITY);
            let m_hi = steps_to_reach(&traces, hi).median.value().unwrap_or(f64::INFINITY);
            prop_assert!(m_hi <= m_lo);
        }

        #[test]
        fn superiority_ratios_sum_to_at_most_one(
            a in prop::collection::vec(0u8..4, 1..50),
            b_seed in prop::collection::vec(0u8..4, 50),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b_seed[..a.len()].iter().copied().map(f64::from).collect();
            let sum = superiority_ratio(&a, &b).unwrap() + superiority_ratio(&b, &a).unwrap();
            let ties = a.iter().zip(&b).any(|(x, y)| x == y);
            prop_assert!(sum <= 1.0 + 1e-12);
            prop_assert_eq!((sum - 1.0).abs() < 1e-12, !ties);
        }
    }
}
