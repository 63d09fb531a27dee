use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::selector::QosRequirement;

/// What one gNB delivered to the UE over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MemberStats {
    pub delivered_packets: u64,
    pub delivered_bits: u64,
    pub lost_packets: u64,
    /// Sum of delivered-packet latencies, seconds.
    pub latency_sum_s: f64,
    /// Integral of occupied bandwidth over time, Hz*s.
    pub bandwidth_time: f64,
}

impl MemberStats {
    pub fn mean_latency_s(&self) -> f64 {
        if self.delivered_packets == 0 {
            f64::INFINITY
        } else {
            self.latency_sum_s / self.delivered_packets as f64
        }
    }

    pub fn reliability(&self) -> f64 {
        let done = self.delivered_packets + self.lost_packets;
        if done == 0 {
            0.0
        } else {
            self.delivered_packets as f64 / done as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosScores {
    pub rate: f64,
    pub latency: f64,
    pub reliability: f64,
}

impl QosScores {
    pub fn all_met(&self) -> bool {
        self.rate >= 1.0 && self.latency >= 1.0 && self.reliability >= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub avg_rate_bps: f64,
    /// Infinite when nothing was delivered.
    pub avg_latency_s: f64,
    pub reliability: f64,
    pub resource_hz: f64,
    pub se_bps_per_hz: f64,
    pub qos: QosScores,
}

/// Rate-weighted latency and reliability over members, totals for the rest.
pub fn collect_metrics(members: &[MemberStats], duration_s: f64, req: &QosRequirement, rate_tolerance: f64) -> RunMetrics {
    let bits: u64 = members.iter().map(|m| m.delivered_bits).sum();
    let avg_rate = bits as f64 / duration_s;
    let (latency, reliability) = if bits == 0 {
        (f64::INFINITY, 0.0)
    } else {
        let mut lat = 0.0;
        let mut rel = 0.0;
        for m in members.iter().filter(|m| m.delivered_bits > 0) {
            let w = m.delivered_bits as f64 / bits as f64;
            lat += w * m.mean_latency_s();
            rel += w * m.reliability();
        }
        (lat, rel)
    };
    let resource = members.iter().map(|m| m.bandwidth_time).sum::<f64>() / duration_s;
    let se = if resource > 0.0 { avg_rate / resource } else { 0.0 };
    RunMetrics {
        avg_rate_bps: avg_rate,
        avg_latency_s: latency,
        reliability,
        resource_hz: resource,
        se_bps_per_hz: se,
        qos: qos_scores(avg_rate, latency, reliability, req, rate_tolerance),
    }
}

/// Provided over required for rate and reliability, required over provided
/// for latency, each capped at 1. Rate within `rate_tolerance` of the target
/// counts as met.
pub fn qos_scores(rate: f64, latency: f64, reliability: f64, req: &QosRequirement, rate_tolerance: f64) -> QosScores {
    QosScores {
        rate: (rate / ((1.0 - rate_tolerance) * req.rate_req_bps)).min(1.0),
        latency: if latency > 0.0 { (req.lat_req_s / latency).min(1.0) } else { 1.0 },
        reliability: (reliability / req.rel_req).min(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation; one value has zero spread.
pub fn mean_std(xs: &[f64]) -> Result<MeanStd> {
    if xs.is_empty() {
        return invalid("no values to summarise");
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(MeanStd { mean, std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: usize,
    pub avg_rate_bps: MeanStd,
    pub avg_latency_s: MeanStd,
    pub reliability: MeanStd,
    pub resource_hz: MeanStd,
    pub se_bps_per_hz: MeanStd,
    pub qos_rate: MeanStd,
    pub qos_latency: MeanStd,
    pub qos_reliability: MeanStd,
    /// Fraction of runs with every QoS score at 1.
    pub qos_success_rate: f64,
}

pub fn aggregate_repetitions(runs: &[RunMetrics]) -> Result<RunSummary> {
    if runs.is_empty() {
        return invalid("no runs to aggregate");
    }
    let col = |f: fn(&RunMetrics) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(RunSummary {
        runs: runs.len(),
        avg_rate_bps: col(|r| r.avg_rate_bps)?,
        avg_latency_s: col(|r| r.avg_latency_s)?,
        reliability: col(|r| r.reliability)?,
        resource_hz: col(|r| r.resource_hz)?,
        se_bps_per_hz: col(|r| r.se_bps_per_hz)?,
        qos_rate: col(|r| r.qos.rate)?,
        qos_latency: col(|r| r.qos.latency)?,
        qos_reliability: col(|r| r.qos.reliability)?,
        qos_success_rate: runs.iter().filter(|r| r.qos.all_met()).count() as f64 / runs.len() as f64,
    })
}
