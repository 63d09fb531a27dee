//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::sync::Arc;
use std::time::{Duration, Instant};

use qosmc_core::bler::{
    generate_training_set, train_models, BlerEstimator, CqiOracleEstimator, GenieEstimator, LearnedEstimator,
    PipelineConfig, TrainedModels, TrainingSweep,
};
use qosmc_core::channel::{CarrierClass, CqiHistory, GnbProfile, Position};
use qosmc_core::policy::{make_policy, FixedPolicy, PolicyKind};
use qosmc_core::radio::{
    consumed_bandwidth, max_latency, min_latency, slot_count, tbs_bits, McsTable, Numerology, RbAllocation,
};
use qosmc_core::selector::{select, ClusterAssignment, GnbSnapshot, MemberAssignment, QosRequirement, SelectorConfig};
use qosmc_core::sim::{residual_loss, run_scenario_with, LoadParams, RunMetrics, RunOptions, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
}

fn formula_suite() -> (bool, String) {
    let table = McsTable::default();
    let mut bad = Vec::new();
    let ns = [(0.1, 0, 100u64), (0.1, 3, 800), (0.0105, 2, 42), (0.00999, 1, 19), (1.0, 2, 4000)];
    for (t, mu, want) in ns {
        let got = slot_count(t, Numerology::new(mu).unwrap()).unwrap();
        if got != want {
            bad.push(format!("NS({t},{mu})={got}, want {want}"));
        }
    }
    let tbs = [(10, 27, 11553u64), (66, 1, 3881), (66, 19, 52666), (1, 5, 230), (27, 21, 23396)];
    for (a, mcs, want) in tbs {
        let got = tbs_bits(RbAllocation(a), mcs, &table).unwrap();
        if got != want {
            bad.push(format!("TBS({a},{mcs})={got}, want {want}"));
        }
    }
    let cbw = [(66, 3, 95.04e6), (10, 0, 1.8e6), (25, 1, 9.0e6), (1, 2, 720e3)];
    for (a, mu, want) in cbw {
        let got = consumed_bandwidth(RbAllocation(a), Numerology::new(mu).unwrap());
        if !rel_close(got, want) {
            bad.push(format!("CBW({a},{mu})={got}, want {want}"));
        }
    }
    let lat = [(0, 2e-3, 8e-3), (1, 1e-3, 4e-3), (2, 0.5e-3, 2e-3), (3, 0.25e-3, 1e-3)];
    for (mu, lo, hi) in lat {
        let n = Numerology::new(mu).unwrap();
        if !rel_close(min_latency(n), lo) || !rel_close(max_latency(n), hi) {
            bad.push(format!("latency bracket mu={mu}"));
        }
    }
    (bad.is_empty(), if bad.is_empty() { "19 tabulated values exact".into() } else { bad.join("; ") })
}

fn train(seed: u64) -> (TrainedModels, usize) {
    let cfg = ScenarioConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = generate_training_set(&cfg, &TrainingSweep::default(), &mut rng).unwrap();
    let n = rows.len();
    (train_models(&rows, &PipelineConfig::default(), &mut rng).unwrap(), n)
}

fn random_snapshots(rng: &mut ChaCha8Rng, n: usize) -> Vec<GnbSnapshot> {
    (0..n)
        .map(|id| GnbSnapshot {
            id,
            position: Position::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)),
            numerology: Numerology::new(rng.random_range(0..=3)).unwrap(),
            power_level: rng.random_range(0..=2),
            available_rbs: rng.random_range(0..=66),
            total_rbs: 66,
            cqi: CqiHistory::from_values(20, &[rng.random_range(0..=15); 20]),
            mean_snr_db: Some(rng.random_range(-5.0..40.0)),
        })
        .collect()
}

fn selector_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let table = McsTable::default();
    let est = GenieEstimator::new(ScenarioConfig::default().oracle, true);
    let (mut mismatches, mut cf_bad, mut feasible) = (0, 0, 0);
    for _ in 0..1000 {
        let b = rng.random_range(1..=5);
        let snaps = random_snapshots(&mut rng, b);
        let req = QosRequirement {
            rate_req_bps: rng.random_range(10e6..800e6),
            lat_req_s: [0.3e-3, 0.6e-3, 1.2e-3, 2.5e-3][rng.random_range(0..4)],
            ..QosRequirement::default()
        };
        let cfg = SelectorConfig { max_cluster_size: rng.random_range(1..=4), ..SelectorConfig::default() };
        let d = select(&snaps, &est, &req, &cfg, 0.1, &table).unwrap();
        let cand: Vec<usize> = (0..b).filter(|i| !d.assignment.excluded.contains(i)).collect();
        let exhaustive = (1u32..(1 << cand.len())).any(|mask| {
            mask.count_ones() as usize <= cfg.max_cluster_size
                && cand.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, &i)| d.cards[i].max_es_rate).sum::<f64>()
                    >= req.rate_req_bps
        });
        mismatches += usize::from(exhaustive != d.assignment.feasible);
        feasible += usize::from(exhaustive);
        let cf: f64 = d.assignment.members.iter().map(|m| m.cf).sum();
        cf_bad += usize::from((cf - 1.0).abs() > 1e-9);
    }
    (
        mismatches == 0 && cf_bad == 0,
        format!("1000 instances ({feasible} feasible): {mismatches} feasibility mismatches, {cf_bad} CF sums off by >1e-9"),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn run_policies(est: Arc<dyn BlerEstimator>, seeds: &[u64]) -> Vec<(PolicyKind, Vec<RunMetrics>)> {
    let cfg = ScenarioConfig::default().fast();
    std::thread::scope(|s| {
        let handles: Vec<_> = PolicyKind::ALL
            .iter()
            .map(|&k| {
                let (cfg, est) = (&cfg, est.clone());
                s.spawn(move || {
                    let p = make_policy(k, est);
                    let runs = seeds.iter().map(|&seed| run_scenario_with(cfg, p.as_ref(), seed, &RunOptions::default()).unwrap().metrics).collect();
                    (k, runs)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn harq_statistics() -> (bool, String) {
    let cfg = ScenarioConfig {
        gnbs: vec![GnbProfile {
            id: 0,
            position: Position::new(100.0, 100.0),
            numerology: Numerology::MU3,
            carrier: CarrierClass::Small,
            max_power_dbm: 29.0,
            power_level: 0,
            total_rbs: 66,
        }],
        ue_start: Some(Position::new(110.0, 100.0)),
        ue_mobile: false,
        load: LoadParams { step_rbs: 0, period_s: 0.1, max_occupied_rbs: 0 },
        duration_s: 60.0,
        ..ScenarioConfig::default()
    };
    let policy = FixedPolicy {
        assignment: ClusterAssignment {
            policy: "fixed".into(),
            members: vec![MemberAssignment { gnb_id: 0, mcs: 20, cf: 1.0, rbs: 66, est_bler: 0.0, est_rate_bps: 0.0 }],
            feasible: true,
            shortfall: false,
            constraints_relaxed: false,
            excluded: Vec::new(),
        },
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for bler in [0.05, 0.1, 0.3] {
        let opts = RunOptions { bler_override: Some(bler), ..RunOptions::default() };
        let d = run_scenario_with(&cfg, &policy, 77, &opts).unwrap().diagnostics;
        let n = (d.tb_decoded + d.tb_lost) as f64;
        let q = residual_loss(bler);
        let sigma = (q * (1.0 - q) / n).sqrt();
        let rate = d.tb_lost as f64 / n;
        let z = (rate - q) / sigma;
        ok &= z.abs() <= 3.0;
        parts.push(format!("bler {bler}: {rate:.3e} vs {q:.3e} (z={z:+.2}, n={n})"));
    }
    (ok, parts.join("; "))
}

fn determinism(models: &TrainedModels) -> (bool, String) {
    let cfg = ScenarioConfig { duration_s: 2.0, ..ScenarioConfig::default() };
    let opts = RunOptions { audit: true, events: true, bler_override: None };
    let est: Arc<dyn BlerEstimator> = Arc::new(learned(models));
    let mut same = true;
    for k in PolicyKind::ALL {
        let p = make_policy(k, est.clone());
        let a = run_scenario_with(&cfg, p.as_ref(), 5, &opts).unwrap();
        let b = run_scenario_with(&cfg, p.as_ref(), 5, &opts).unwrap();
        same &= a.events == b.events && a.audit == b.audit && a.metrics == b.metrics;
    }
    let (again, _) = train(1);
    let same_models = again.clusters.to_json().unwrap() == models.clusters.to_json().unwrap()
        && again.regressor.to_json().unwrap() == models.regressor.to_json().unwrap();
    (same && same_models, format!("simulation traces identical: {same}; retrained artifacts identical: {same_models}"))
}

fn learned(models: &TrainedModels) -> LearnedEstimator {
    let cfg = ScenarioConfig::default();
    let cold = CqiOracleEstimator::new(cfg.oracle.clone(), cfg.cqi_quantizer.clone(), cfg.propagation.fading);
    LearnedEstimator::new(models.clusters.clone(), models.regressor.clone(), cold).unwrap()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn main() {
    let mut out = Vec::new();

    let ((pass, detail), elapsed) = timed(formula_suite);
    out.push(Outcome { name: "formula suite", pass: pass && elapsed < Duration::from_secs(1), detail, elapsed });

    let ((models, rows), elapsed) = timed(|| train(1));
    let acc40 = models.report.classifiers.iter().find(|c| c.n_clusters == 40).map_or(0.0, |c| c.accuracy);
    let mae = models.report.regressor.test_mae;
    out.push(Outcome {
        name: "estimator fidelity",
        pass: rows >= 2430 && acc40 >= 0.90 && mae <= 0.05 && elapsed < Duration::from_secs(300),
        detail: format!("{rows} rows, 40-cluster accuracy {acc40:.4} (>= 0.90), regressor MAE {mae:.4} (<= 0.05)"),
        elapsed,
    });

    let ((pass, detail), elapsed) = timed(selector_equivalence);
    out.push(Outcome { name: "selector oracle equivalence", pass, detail, elapsed });

    let seeds: Vec<u64> = (1..=10).collect();
    let (runs, elapsed) = timed(|| run_policies(Arc::new(learned(&models)), &seeds));
    let get = |k: PolicyKind| &runs.iter().find(|(p, _)| *p == k).unwrap().1;
    let (p, s, l) = (get(PolicyKind::Proposed), get(PolicyKind::Snr), get(PolicyKind::Lbmc));
    let m = |v: &[RunMetrics], f: fn(&RunMetrics) -> f64| mean(&v.iter().map(f).collect::<Vec<_>>());
    let checks = [
        ("(a) rate", m(p, |r| r.avg_rate_bps), m(s, |r| r.avg_rate_bps), true),
        ("(b) latency", m(p, |r| r.avg_latency_s), m(s, |r| r.avg_latency_s), false),
        ("(d) SE", m(p, |r| r.se_bps_per_hz), m(l, |r| r.se_bps_per_hz), true),
        ("(e) resource", m(p, |r| r.resource_hz), m(l, |r| r.resource_hz), false),
    ];
    let reliable = p.iter().filter(|r| r.reliability >= 0.99).count();
    let mut pass = reliable >= 9 && elapsed < Duration::from_secs(600);
    let mut parts = Vec::new();
    for (name, a, b, greater) in checks {
        let ok = if greater { a >= b } else { a <= b };
        pass &= ok;
        parts.push(format!("{name} {a:.6e} {} {b:.6e} {}", if greater { ">=" } else { "<=" }, if ok { "ok" } else { "VIOLATED" }));
    }
    parts.insert(2, format!("(c) reliability >= 0.99 in {reliable}/10 seeds"));
    out.push(Outcome { name: "desk-scale ordering", pass, detail: parts.join("; "), elapsed });

    let success = p.iter().filter(|r| r.qos.all_met()).count() as f64 / p.len() as f64;
    out.push(Outcome {
        name: "QoS success rate",
        pass: success >= 0.9,
        detail: format!("proposed met all QoS in {:.0}% of seeds (>= 90%)", 100.0 * success),
        elapsed: Duration::ZERO,
    });

    let ((pass, detail), elapsed) = timed(harq_statistics);
    out.push(Outcome { name: "HARQ statistics", pass, detail, elapsed });

    let ((pass, detail), elapsed) = timed(|| determinism(&models));
    out.push(Outcome { name: "determinism", pass, detail, elapsed });

    println!();
    for o in &out {
        println!("[{}] {} ({:.2} s): {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.elapsed.as_secs_f64(), o.detail);
    }
    let failed = out.iter().filter(|o| !o.pass).count();
    println!("acceptance: {}/{} criteria passed", out.len() - failed, out.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
