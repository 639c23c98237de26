use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BenchError, Measurement};

/// Timings of one subject in one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    /// First word sent to last word received.
    pub transport: Measurement,
    /// Start of serialization to end of deserialization, where measured.
    pub codec_inclusive: Option<Measurement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub label: String,
    pub baseline: Option<SubjectResult>,
    pub streaming: Option<SubjectResult>,
    /// Baseline over streaming mean transport time.
    pub speedup: Option<f64>,
}

impl ConfigResult {
    pub fn new(label: impl Into<String>, baseline: Option<SubjectResult>, streaming: Option<SubjectResult>) -> Self {
        let speedup = match (&baseline, &streaming) {
            (Some(b), Some(s)) if s.transport.t_avg > 0.0 => Some(b.transport.t_avg / s.transport.t_avg),
            _ => None,
        };
        ConfigResult {
            label: label.into(),
            baseline,
            streaming,
            speedup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    /// Name of the varied parameter, used as first column.
    pub key: String,
    pub configs: Vec<ConfigResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(BenchError::UnknownFormat(other.to_owned())),
        }
    }
}

pub fn emit_report(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => csv(report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => markdown(report),
    }
}

fn ms(ns: f64) -> String {
    format!("{:.4}", ns / 1e6)
}

fn cell(r: &Option<SubjectResult>) -> String {
    match r {
        Some(r) => format!("{} ({})", ms(r.transport.t_avg), ms(r.transport.sigma)),
        None => "-".to_owned(),
    }
}

fn markdown(report: &BenchReport) -> String {
    let mut out = format!(
        "| {} | baseline t_avg (σ) [ms] | streaming t_avg (σ) [ms] | speedup |\n|---|---|---|---|\n",
        report.key
    );
    for c in &report.configs {
        let speedup = c.speedup.map(|s| format!("{s:.2}")).unwrap_or_else(|| "-".to_owned());
        let _ = writeln!(out, "| {} | {} | {} | {} |", c.label, cell(&c.baseline), cell(&c.streaming), speedup);
    }
    out
}

fn csv(report: &BenchReport) -> String {
    let mut out = format!("{}", report.key);
    for subject in ["baseline", "streaming"] {
        for col in ["n", "t_avg_ns", "sigma_ns", "codec_t_avg_ns", "codec_sigma_ns"] {
            let _ = write!(out, ",{subject}_{col}");
        }
    }
    out.push_str(",speedup\n");
    for c in &report.configs {
        out.push_str(&c.label);
        for r in [&c.baseline, &c.streaming] {
            match r {
                Some(r) => {
                    let t = &r.transport;
                    let _ = write!(out, ",{},{:.1},{:.1}", t.n, t.t_avg, t.sigma);
                    match &r.codec_inclusive {
                        Some(m) => {
                            let _ = write!(out, ",{:.1},{:.1}", m.t_avg, m.sigma);
                        }
                        None => out.push_str(",,"),
                    }
                }
                None => out.push_str(",,,,,"),
            }
        }
        match c.speedup {
            Some(s) => {
                let _ = writeln!(out, ",{s:.4}");
            }
            None => out.push_str(",\n"),
        }
    }
    out
}
