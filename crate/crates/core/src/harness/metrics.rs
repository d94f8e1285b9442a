//! Sample efficiency and cross-seed aggregation.

use std::fmt;

use crate::ppo::EvalRecord;

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt(), count: values.len() })
    }
}

impl fmt::Display for MeanStd {
    /// `mean ± std`; the precision flag applies to both numbers.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = f.precision().unwrap_or(1);
        write!(f, "{:.p$} ± {:.p$}", self.mean, self.std)
    }
}

/// First counter value at which the EMA series reaches `threshold`.
pub fn first_crossing(ema: &[f64], counters: &[u64], threshold: f64) -> Option<u64> {
    ema.iter().zip(counters).find(|(e, _)| **e >= threshold).map(|(_, &c)| c)
}

/// Transitions sampled on `level` when its evaluation EMA first reached
/// `threshold`.
pub fn sample_efficiency(evals: &[EvalRecord], level: usize, threshold: f64) -> Option<u64> {
    let (ema, counters): (Vec<f64>, Vec<u64>) =
        evals.iter().filter(|e| e.level == level).map(|e| (e.ema, e.level_transitions)).unzip();
    first_crossing(&ema, &counters, threshold)
}

/// One named metric across runs; `None` marks a run where it is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricColumn {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub name: String,
    /// Over the runs where the metric is present.
    pub stats: Option<MeanStd>,
    pub present: usize,
    pub runs: usize,
}

pub fn aggregate_runs(columns: &[MetricColumn]) -> Vec<AggregateRow> {
    columns
        .iter()
        .map(|c| {
            let present: Vec<f64> = c.values.iter().flatten().copied().collect();
            AggregateRow {
                name: c.name.clone(),
                stats: MeanStd::of(&present),
                present: present.len(),
                runs: c.values.len(),
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("metric,mean,std,present,runs\n");
    for r in rows {
        let (m, s) = r.stats.map_or((String::new(), String::new()), |st| (st.mean.to_string(), st.std.to_string()));
        out.push_str(&format!("{},{m},{s},{},{}\n", r.name, r.present, r.runs));
    }
    out
}

/// Aligned text table with `mean ± std` cells.
pub fn aggregate_table(rows: &[AggregateRow], precision: usize) -> String {
    let cells: Vec<(String, String, String)> = rows
        .iter()
        .map(|r| {
            let v = r.stats.map_or_else(|| "-".to_string(), |s| format!("{s:.precision$}"));
            (r.name.clone(), v, format!("{}/{}", r.present, r.runs))
        })
        .collect();
    let w0 = cells.iter().map(|c| c.0.chars().count()).max().unwrap_or(0).max(6);
    let w1 = cells.iter().map(|c| c.1.chars().count()).max().unwrap_or(0).max(10);
    let mut out = format!("{:<w0$}  {:>w1$}  runs\n", "metric", "mean ± std");
    for (a, b, c) in cells {
        let pad = w1 - b.chars().count();
        out.push_str(&format!("{a:<w0$}  {}{b}  {c}\n", " ".repeat(pad)));
    }
    out
}
