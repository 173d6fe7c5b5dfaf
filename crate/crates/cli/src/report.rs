//! Fleet summary tables: per-config means of the stage composites and the
//! per-scenario EPDMS, printed to two decimals in the x100 convention.

use crate::records::{RecordLine, RunRecord};
use std::collections::BTreeMap;

struct ConfigStats {
    runs: usize,
    errors: usize,
    stage1_sum: f64,
    stage2_sum: f64,
    stage2_count: usize,
    epdms_sum: f64,
}

impl ConfigStats {
    fn new() -> Self {
        ConfigStats { runs: 0, errors: 0, stage1_sum: 0.0, stage2_sum: 0.0, stage2_count: 0, epdms_sum: 0.0 }
    }

    fn add(&mut self, record: &RunRecord) {
        self.runs += 1;
        self.stage1_sum += record.stage1_score;
        if let Some(s2) = record.stage2_score {
            self.stage2_sum += s2;
            self.stage2_count += 1;
        }
        self.epdms_sum += record.epdms;
    }
}

/// Aligned table sorted by config name: EPDMS I / EPDMS II / EPDMS fleet
/// means. Stage-II shows an em dash when no record carries a second stage.
pub fn summarize(records: &[RecordLine]) -> String {
    let mut stats: BTreeMap<String, ConfigStats> = BTreeMap::new();
    for line in records {
        let entry = stats
            .entry(line.config_name().to_string())
            .or_insert_with(ConfigStats::new);
        match line {
            RecordLine::Run(record) => entry.add(record),
            RecordLine::Error(_) => entry.errors += 1,
        }
    }
    stats.remove("*"); // scenario-level failures are not a config

    let name_width = stats
        .keys()
        .map(|k| k.len())
        .chain(std::iter::once("config".len()))
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_width$}  {:>8}  {:>8}  {:>8}  {:>5}  {:>6}\n",
        "config", "EPDMS I", "EPDMS II", "EPDMS", "n", "errors"
    ));
    for (name, s) in &stats {
        let fmt_mean = |sum: f64, n: usize| {
            if n == 0 {
                "—".to_string()
            } else {
                format!("{:.2}", 100.0 * sum / n as f64)
            }
        };
        out.push_str(&format!(
            "{:<name_width$}  {:>8}  {:>8}  {:>8}  {:>5}  {:>6}\n",
            name,
            fmt_mean(s.stage1_sum, s.runs),
            fmt_mean(s.stage2_sum, s.stage2_count),
            fmt_mean(s.epdms_sum, s.runs),
            s.runs,
            s.errors
        ));
    }
    out
}
