use std::io::Read;

use qosmc_core::sim::{aggregate_repetitions, QosScores, RunMetrics, RunSummary};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::run::{fmt6, RunRow, CSV_HEADER};

#[derive(Debug, Deserialize)]
struct CsvRow {
    policy: String,
    seed: u64,
    avg_rate_bps: f64,
    avg_latency_s: f64,
    reliability: f64,
    resource_hz: f64,
    se_bps_per_hz: f64,
    qos_rate_score: f64,
    qos_lat_score: f64,
    qos_rel_score: f64,
}

pub fn read_metrics_csv<R: Read>(input: R) -> CliResult<Vec<RunRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let bad = |e: csv::Error| CliError::Infeasible(format!("metrics CSV: {e}"));
    let headers = rd.headers().map_err(bad)?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(CliError::Infeasible(format!("metrics CSV header must be {}", CSV_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rd.deserialize::<CsvRow>() {
        let r = rec.map_err(bad)?;
        rows.push(RunRow {
            policy: r.policy,
            seed: r.seed,
            metrics: RunMetrics {
                avg_rate_bps: r.avg_rate_bps,
                avg_latency_s: r.avg_latency_s,
                reliability: r.reliability,
                resource_hz: r.resource_hz,
                se_bps_per_hz: r.se_bps_per_hz,
                qos: QosScores { rate: r.qos_rate_score, latency: r.qos_lat_score, reliability: r.qos_rel_score },
            },
        });
    }
    if rows.is_empty() {
        return Err(CliError::Infeasible("metrics CSV has no rows; nothing to report".into()));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementsMet {
    pub rate: bool,
    pub latency: bool,
    pub reliability: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub seeds: Vec<u64>,
    pub summary: RunSummary,
    /// Seed-averaged QoS score equal to 1.
    pub met: RequirementsMet,
    /// Seeds with reliability of at least 0.99.
    pub reliable_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub policies: Vec<PolicySummary>,
    pub orderings: Vec<OrderingCheck>,
}

pub const RELIABILITY_BAR: f64 = 0.99;

/// Groups rows by policy in first-seen order and summarises each group.
pub fn build_report(rows: &[RunRow]) -> CliResult<Report> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.policy.as_str()) {
            names.push(&r.policy);
        }
    }
    let mut policies = Vec::new();
    for name in names {
        let group: Vec<&RunRow> = rows.iter().filter(|r| r.policy == name).collect();
        let metrics: Vec<RunMetrics> = group.iter().map(|r| r.metrics).collect();
        let summary = aggregate_repetitions(&metrics)?;
        policies.push(PolicySummary {
            policy: name.to_string(),
            seeds: group.iter().map(|r| r.seed).collect(),
            met: RequirementsMet {
                rate: summary.qos_rate.mean >= 1.0,
                latency: summary.qos_latency.mean >= 1.0,
                reliability: summary.qos_reliability.mean >= 1.0,
            },
            reliable_seeds: metrics.iter().filter(|m| m.reliability >= RELIABILITY_BAR).count(),
            summary,
        });
    }
    let find = |n: &str| policies.iter().find(|p| p.policy == n).map(|p| &p.summary);
    let mut orderings = Vec::new();
    let mut check = |name: &str, lhs: f64, rhs: f64, holds: bool| orderings.push(OrderingCheck { name: name.into(), lhs, rhs, holds });
    if let (Some(p), Some(s)) = (find("proposed"), find("snr")) {
        check("proposed avg_rate >= snr avg_rate", p.avg_rate_bps.mean, s.avg_rate_bps.mean, p.avg_rate_bps.mean >= s.avg_rate_bps.mean);
        check("proposed avg_latency <= snr avg_latency", p.avg_latency_s.mean, s.avg_latency_s.mean, p.avg_latency_s.mean <= s.avg_latency_s.mean);
    }
    if let (Some(p), Some(l)) = (find("proposed"), find("lbmc")) {
        check("proposed SE >= lbmc SE", p.se_bps_per_hz.mean, l.se_bps_per_hz.mean, p.se_bps_per_hz.mean >= l.se_bps_per_hz.mean);
        check("proposed resource <= lbmc resource", p.resource_hz.mean, l.resource_hz.mean, p.resource_hz.mean <= l.resource_hz.mean);
    }
    if let Some(p) = policies.iter().find(|p| p.policy == "proposed") {
        let n = p.seeds.len();
        let need = (0.9 * n as f64).ceil();
        check("proposed reliability >= 0.99 in 90% of seeds", p.reliable_seeds as f64, need, p.reliable_seeds as f64 >= need);
    }
    Ok(Report { policies, orderings })
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let ms = |m: &qosmc_core::sim::MeanStd, scale: f64| format!("{} ± {}", fmt6(m.mean * scale), fmt6(m.std * scale));
    for p in &report.policies {
        let s = &p.summary;
        out.push_str(&format!("{} ({} runs)\n", p.policy, s.runs));
        out.push_str(&format!("  rate        {} Mb/s\n", ms(&s.avg_rate_bps, 1e-6)));
        out.push_str(&format!("  latency     {} ms\n", ms(&s.avg_latency_s, 1e3)));
        out.push_str(&format!("  reliability {}\n", ms(&s.reliability, 1.0)));
        out.push_str(&format!("  resource    {} MHz\n", ms(&s.resource_hz, 1e-6)));
        out.push_str(&format!("  SE          {} b/s/Hz\n", ms(&s.se_bps_per_hz, 1.0)));
        let flag = |b: bool| if b { "met" } else { "missed" };
        out.push_str(&format!(
            "  QoS: rate {}, latency {}, reliability {}; all met in {}% of runs\n",
            flag(p.met.rate),
            flag(p.met.latency),
            flag(p.met.reliability),
            fmt6(100.0 * s.qos_success_rate)
        ));
    }
    for c in &report.orderings {
        out.push_str(&format!("[{}] {} ({} vs {})\n", if c.holds { "PASS" } else { "FAIL" }, c.name, fmt6(c.lhs), fmt6(c.rhs)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(policy: &str, seed: u64, rate: f64, lat: f64, rel: f64) -> RunRow {
        RunRow {
            policy: policy.into(),
            seed,
            metrics: RunMetrics {
                avg_rate_bps: rate,
                avg_latency_s: lat,
                reliability: rel,
                resource_hz: 1e6,
                se_bps_per_hz: rate / 1e6,
                qos: QosScores { rate: 1.0, latency: 1.0, reliability: 1.0 },
            },
        }
    }

    #[test]
    fn single_row_has_zero_spread() {
        let r = build_report(&[row("snr", 1, 1e8, 1e-3, 0.99)]).unwrap();
        assert_eq!(r.policies.len(), 1);
        assert_eq!(r.policies[0].summary.avg_rate_bps.std, 0.0);
        assert!(r.orderings.is_empty());
    }

    #[test]
    fn orderings_compare_seed_means() {
        let rows = vec![
            row("proposed", 1, 150e6, 0.3e-3, 0.999),
            row("proposed", 2, 148e6, 0.3e-3, 0.995),
            row("snr", 1, 140e6, 0.5e-3, 0.999),
            row("snr", 2, 150e6, 0.2e-3, 0.999),
        ];
        let r = build_report(&rows).unwrap();
        let by = |n: &str| r.orderings.iter().find(|c| c.name.starts_with(n)).unwrap().holds;
        assert!(by("proposed avg_rate"));
        assert!(by("proposed avg_latency"));
        assert!(by("proposed reliability"));
        assert!(render_text(&r).contains("[PASS] proposed avg_rate >= snr avg_rate"));
    }

    #[test]
    fn empty_and_malformed_csv_rejected() {
        let header = CSV_HEADER.join(",") + "\n";
        assert!(matches!(read_metrics_csv(header.as_bytes()), Err(CliError::Infeasible(_))));
        assert!(read_metrics_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_metrics_csv("".as_bytes()).is_err());
    }
}
