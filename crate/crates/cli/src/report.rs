//! Tables computed from trace files.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use pipebo_core::engine::Strategy;
use pipebo_core::metrics::{aggregate, steps_to_reach, superiority_ratio, Censored, RunTrace, StepsToReach};

use crate::error::{HarnessError, Result};

type Group<'a> = ((&'a str, &'a str, &'a str), Vec<RunTrace>);

/// Groups traces by `(function, preset, strategy)` in first-seen order.
fn groups(traces: &[RunTrace]) -> Vec<Group<'_>> {
    let mut out: Vec<Group<'_>> = Vec::new();
    for t in traces {
        let key = (t.function.as_str(), t.preset.as_str(), t.strategy.as_str());
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(t.clone()),
            None => out.push((key, vec![t.clone()])),
        }
    }
    out
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

/// Formats a step count the way the summary table does: one decimal below
/// 100, none above.
fn format_steps(v: f64) -> String {
    if v < 100.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.0}")
    }
}

fn format_cell(s: &StepsToReach) -> String {
    match (s.median, s.iqr) {
        (Censored::Censored, _) => "–".to_string(),
        (Censored::Value(m), Censored::Value(iqr)) => format!("{}({iqr:.0})", format_steps(m)),
        (Censored::Value(m), Censored::Censored) => format!("{}(–)", format_steps(m)),
    }
}

/// Steps-to-reach table: one row per function, one column per compared
/// (preset, strategy) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub reference_step: usize,
    pub functions: Vec<String>,
    /// `(preset, strategy)` per column.
    pub columns: Vec<(String, String)>,
    /// `cells[row][col]`, `None` where the pair was not run.
    pub cells: Vec<Vec<Option<StepsToReach>>>,
    /// Vanilla's median regret at the reference step, `[row][col]`.
    pub references: Vec<Vec<Option<f64>>>,
}

impl SummaryTable {
    /// Mean of the uncensored medians in column `col`.
    pub fn average(&self, col: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter_map(|row| row[col].and_then(|c| c.median.value()))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("function,preset,strategy,reference_regret,median_steps,iqr_steps\n");
        for (r, f) in self.functions.iter().enumerate() {
            for (c, (preset, strategy)) in self.columns.iter().enumerate() {
                if let (Some(cell), Some(reference)) = (self.cells[r][c], self.references[r][c]) {
                    let _ = writeln!(s, "{f},{preset},{strategy},{reference},{},{}", csv_num(cell.median), csv_num(cell.iqr));
                }
            }
        }
        s
    }
}

fn csv_num(c: Censored) -> String {
    c.value().map(|v| v.to_string()).unwrap_or_default()
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let headers: Vec<String> = self.columns.iter().map(|(p, s)| format!("{p} {s}")).collect();
        let first = self.functions.iter().map(|s| s.chars().count()).chain([8]).max().unwrap_or(8);
        let widths: Vec<usize> = headers.iter().map(|h| h.chars().count().max(10)).collect();
        write!(f, "{:<first$}", "function")?;
        for (h, w) in headers.iter().zip(&widths) {
            write!(f, "  {h:>w$}")?;
        }
        writeln!(f)?;
        for (r, name) in self.functions.iter().enumerate() {
            write!(f, "{name:<first$}")?;
            for (c, w) in widths.iter().enumerate() {
                let cell = self.cells[r][c].as_ref().map(format_cell).unwrap_or_default();
                write!(f, "  {cell:>w$}")?;
            }
            writeln!(f)?;
        }
        write!(f, "{:<first$}", "Average")?;
        for (c, w) in widths.iter().enumerate() {
            let avg = self.average(c).map(|v| format!("{v:.1}")).unwrap_or_else(|| "–".into());
            write!(f, "  {avg:>w$}")?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "(median steps to reach vanilla's median regret at step {}; IQR in parentheses; – = not reached)",
            self.reference_step
        )
    }
}

/// Steps each non-vanilla strategy needs to match vanilla's median regret
/// at `reference_step`.
pub fn summarize(traces: &[RunTrace], reference_step: usize) -> Result<SummaryTable> {
    let vanilla = Strategy::Vanilla.tag();
    let groups = groups(traces);
    if !groups.iter().any(|((_, _, s), _)| *s == vanilla) {
        return Err(HarnessError::MissingStrategy(vanilla.into()));
    }
    let mut functions = Vec::new();
    let mut columns = Vec::new();
    for ((f, p, s), _) in &groups {
        push_unique(&mut functions, f.to_string());
        if *s != vanilla {
            push_unique(&mut columns, (p.to_string(), s.to_string()));
        }
    }
    if columns.is_empty() {
        return Err(HarnessError::MissingStrategy("a strategy other than vanilla".into()));
    }

    let mut cells = vec![vec![None; columns.len()]; functions.len()];
    let mut references = vec![vec![None; columns.len()]; functions.len()];
    for ((f, p, s), runs) in &groups {
        if *s == vanilla {
            continue;
        }
        let Some((_, base)) = groups.iter().find(|((bf, bp, bs), _)| bf == f && bp == p && *bs == vanilla) else {
            return Err(HarnessError::MissingStrategy(format!("{vanilla} (for {f} {p})")));
        };
        let budget = base[0].len();
        if reference_step == 0 || reference_step > budget {
            return Err(HarnessError::Config(format!(
                "reference step {reference_step} is outside the {budget}-step budget"
            )));
        }
        let reference = aggregate(base)?[reference_step - 1].median;
        let r = functions.iter().position(|x| x == f).expect("function listed");
        let c = columns
            .iter()
            .position(|(cp, cs)| cp == p && cs == s)
            .expect("column listed");
        cells[r][c] = Some(steps_to_reach(runs, reference));
        references[r][c] = Some(reference);
    }
    Ok(SummaryTable {
        reference_step,
        functions,
        columns,
        cells,
        references,
    })
}

/// Presets for `K = 3` in problem-set table order; other presets follow in
/// first-seen order.
pub const K3_ORDER: [&str; 5] = ["K3-811", "K3-532", "K3-343", "K3-235", "K3-118"];

/// Per-function share of steps where PipeBO's median regret is strictly
/// below the no-update variant's.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperiorityTable {
    pub functions: Vec<String>,
    pub presets: Vec<String>,
    /// `ratios[row][col]`, `None` where the function was not run with that
    /// preset.
    pub ratios: Vec<Vec<Option<f64>>>,
}

impl SuperiorityTable {
    /// Long format: `function,preset,superiority_ratio`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("function,preset,superiority_ratio\n");
        for (r, f) in self.functions.iter().enumerate() {
            for (c, p) in self.presets.iter().enumerate() {
                if let Some(v) = self.ratios[r][c] {
                    let _ = writeln!(s, "{f},{p},{v}");
                }
            }
        }
        s
    }

    /// Median ratio across functions for preset column `col`.
    pub fn median(&self, col: usize) -> Option<f64> {
        let mut v: Vec<f64> = self.ratios.iter().filter_map(|row| row[col]).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(pipebo_core::metrics::quantile(&v, 0.5))
    }

    pub fn column(&self, preset: &str) -> Option<usize> {
        self.presets.iter().position(|p| p == preset)
    }
}

impl fmt::Display for SuperiorityTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let first = self.functions.iter().map(|s| s.chars().count()).chain([8]).max().unwrap_or(8);
        let widths: Vec<usize> = self.presets.iter().map(|p| p.len().max(6)).collect();
        write!(f, "{:<first$}", "function")?;
        for (p, w) in self.presets.iter().zip(&widths) {
            write!(f, "  {p:>w$}")?;
        }
        writeln!(f)?;
        for (r, name) in self.functions.iter().enumerate() {
            write!(f, "{name:<first$}")?;
            for (c, w) in widths.iter().enumerate() {
                let cell = self.ratios[r][c].map(|v| format!("{v:.3}")).unwrap_or_default();
                write!(f, "  {cell:>w$}")?;
            }
            writeln!(f)?;
        }
        write!(f, "{:<first$}", "Median")?;
        for (c, w) in widths.iter().enumerate() {
            let m = self.median(c).map(|v| format!("{v:.3}")).unwrap_or_default();
            write!(f, "  {m:>w$}")?;
        }
        writeln!(f)
    }
}

/// Compares PipeBO with its no-update variant on every shared preset.
pub fn compare_update(traces: &[RunTrace]) -> Result<SuperiorityTable> {
    let (with, without) = (Strategy::PipeBo.tag(), Strategy::NoUpdate.tag());
    let groups = groups(traces);
    for s in [with, without] {
        if !groups.iter().any(|((_, _, gs), _)| *gs == s) {
            return Err(HarnessError::MissingStrategy(s.into()));
        }
    }
    let mut functions = Vec::new();
    let mut presets = Vec::new();
    for ((f, p, s), _) in &groups {
        if *s == with || *s == without {
            push_unique(&mut functions, f.to_string());
            push_unique(&mut presets, p.to_string());
        }
    }
    presets.sort_by_key(|p| K3_ORDER.iter().position(|k| k == p).unwrap_or(K3_ORDER.len()));

    let find = |f: &str, p: &str, s: &str| groups.iter().find(|(k, _)| *k == (f, p, s)).map(|(_, v)| v);
    let mut ratios = vec![vec![None; presets.len()]; functions.len()];
    for (r, f) in functions.iter().enumerate() {
        for (c, p) in presets.iter().enumerate() {
            match (find(f, p, with), find(f, p, without)) {
                (Some(a), Some(b)) => {
                    let ma: Vec<f64> = aggregate(a)?.iter().map(|s| s.median).collect();
                    let mb: Vec<f64> = aggregate(b)?.iter().map(|s| s.median).collect();
                    ratios[r][c] = Some(superiority_ratio(&ma, &mb)?);
                }
                (None, None) => {}
                (Some(_), None) | (None, Some(_)) => {
                    return Err(HarnessError::PresetMismatch(format!(
                        "{f} {p} has runs for only one of {with} and {without}"
                    )));
                }
            }
        }
    }
    Ok(SuperiorityTable {
        functions,
        presets,
        ratios,
    })
}

/// Writes `contents` to `path`, mapping failures to harness errors.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(function: &str, preset: &str, strategy: &str, run: usize, regrets: &[f64]) -> RunTrace {
        let best = regrets.iter().map(|r| -r).collect();
        RunTrace::new(function, preset, strategy, run, run as u64, best, 0.0)
    }

    /// Regret 10 until `from`, then 1.
    fn step_series(from: usize, len: usize) -> Vec<f64> {
        (1..=len).map(|t| if t < from { 10.0 } else { 1.0 }).collect()
    }

    #[test]
    fn every_run_reaching_at_forty_reads_forty() {
        let mut traces = Vec::new();
        for run in 0..5 {
            traces.push(trace("F1", "K3-343", "vanilla", run, &step_series(100, 200)));
            traces.push(trace("F1", "K3-343", "pipebo", run, &step_series(40, 200)));
        }
        let table = summarize(&traces, 100).unwrap();
        assert_eq!(table.columns, vec![("K3-343".to_string(), "pipebo".to_string())]);
        assert_eq!(format_cell(&table.cells[0][0].unwrap()), "40.0(0)");
        assert_eq!(table.average(0), Some(40.0));
        assert!(table.to_string().contains("40.0(0)"));
    }

    #[test]
    fn never_reaching_is_a_dash_and_skipped_in_the_average() {
        let mut traces = Vec::new();
        for run in 0..3 {
            for f in ["F1", "F5"] {
                traces.push(trace(f, "K2-11", "vanilla", run, &step_series(50, 120)));
            }
            traces.push(trace("F1", "K2-11", "pipebo", run, &step_series(20 + run, 120)));
            traces.push(trace("F5", "K2-11", "pipebo", run, &[10.0; 120]));
        }
        let table = summarize(&traces, 100).unwrap();
        assert_eq!(format_cell(&table.cells[1][0].unwrap()), "–");
        assert_eq!(table.average(0), Some(21.0));
        let text = table.to_string();
        assert!(text.lines().any(|l| l.starts_with("F5") && l.trim_end().ends_with('–')), "{text}");
    }

    #[test]
    fn long_medians_drop_the_decimal() {
        let s = StepsToReach {
            median: Censored::Value(126.0),
            iqr: Censored::Censored,
        };
        assert_eq!(format_cell(&s), "126(–)");
        assert_eq!(format_steps(41.5), "41.5");
    }

    #[test]
    fn summarize_requires_vanilla() {
        let traces = vec![trace("F1", "K2-11", "pipebo", 0, &[1.0; 10])];
        assert!(matches!(summarize(&traces, 5), Err(HarnessError::MissingStrategy(s)) if s == "vanilla"));
    }

    #[test]
    fn reference_step_beyond_budget_is_rejected() {
        let traces = vec![
            trace("F1", "K2-11", "vanilla", 0, &[1.0; 10]),
            trace("F1", "K2-11", "pipebo", 0, &[1.0; 10]),
        ];
        assert!(matches!(summarize(&traces, 11), Err(HarnessError::Config(_))));
    }

    #[test]
    fn self_comparison_is_all_zero() {
        let mut traces = Vec::new();
        for run in 0..3 {
            let r = step_series(30 + run, 200);
            traces.push(trace("F1", "K3-343", "pipebo", run, &r));
            traces.push(trace("F1", "K3-343", "noupdate", run, &r));
        }
        let table = compare_update(&traces).unwrap();
        assert_eq!(table.ratios, vec![vec![Some(0.0)]]);
    }

    #[test]
    fn three_quarters_better() {
        // PipeBO lower on the last 150 of 200 steps.
        let a: Vec<f64> = (1..=200).map(|t| if t > 50 { 1.0 } else { 5.0 }).collect();
        let b = vec![5.0; 200];
        let traces = vec![trace("F2", "K3-118", "pipebo", 0, &a), trace("F2", "K3-118", "noupdate", 0, &b)];
        let table = compare_update(&traces).unwrap();
        assert_eq!(table.ratios[0][0], Some(0.75));
        assert_eq!(table.to_csv(), "function,preset,superiority_ratio\nF2,K3-118,0.75\n");
    }

    #[test]
    fn columns_follow_problem_set_order() {
        let mut traces = Vec::new();
        for p in ["K3-118", "K3-343", "K3-811", "K3-235", "K3-532"] {
            traces.push(trace("F1", p, "pipebo", 0, &[1.0; 5]));
            traces.push(trace("F1", p, "noupdate", 0, &[2.0; 5]));
        }
        let table = compare_update(&traces).unwrap();
        assert_eq!(table.presets, K3_ORDER.to_vec());
    }

    #[test]
    fn one_sided_preset_is_a_mismatch() {
        let traces = vec![
            trace("F1", "K3-343", "pipebo", 0, &[1.0; 5]),
            trace("F1", "K3-343", "noupdate", 0, &[1.0; 5]),
            trace("F1", "K3-118", "pipebo", 0, &[1.0; 5]),
        ];
        assert!(matches!(compare_update(&traces), Err(HarnessError::PresetMismatch(_))));
    }
}
