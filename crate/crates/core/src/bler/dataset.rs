//! Labelled training rows: a CQI history recorded along a short random-waypoint
//! walk, the link context, and the BLER observed over many slots afterwards.

use std::io::{Read, Write};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bler::oracle::oracle_bler;
use crate::channel::{
    path_loss_db, rayleigh_gain_db, snr_db, step_mobility, CqiHistory, MobilityState, Shadowing,
};
use crate::error::{invalid, Result};
use crate::radio::{Numerology, MAX_MCS};
use crate::sim::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSweep {
    /// Empty means every numerology of the scenario.
    pub numerologies: Vec<Numerology>,
    pub power_levels: Vec<u8>,
    pub mcs: Vec<usize>,
    pub positions_per_set: usize,
    pub slots_per_row: usize,
}

impl Default for TrainingSweep {
    fn default() -> Self {
        TrainingSweep {
            numerologies: Vec::new(),
            power_levels: vec![0, 1, 2],
            mcs: (1..=MAX_MCS).collect(),
            positions_per_set: 10,
            slots_per_row: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow {
    pub cqi: Vec<u8>,
    pub numerology: Numerology,
    pub power_level: u8,
    pub mcs: usize,
    pub bler: f64,
    /// Mean data SNR when the BLER was measured; not part of the CSV.
    pub snr_db: f64,
}

/// One row per (numerology, power level, MCS, position). Every row walks its
/// own UE from a uniform random start, served by a random gNB of that numerology.
pub fn generate_training_set<R: Rng + ?Sized>(cfg: &ScenarioConfig, sweep: &TrainingSweep, rng: &mut R) -> Result<Vec<TrainingRow>> {
    let nums = if sweep.numerologies.is_empty() { cfg.numerologies() } else { sweep.numerologies.clone() };
    if nums.is_empty() || sweep.power_levels.is_empty() || sweep.mcs.is_empty() || sweep.positions_per_set == 0 {
        return invalid("training sweep is empty");
    }
    if sweep.slots_per_row == 0 {
        return invalid("training rows need at least one slot");
    }
    if let Some(&p) = sweep.power_levels.iter().find(|&&p| p >= crate::channel::NUM_POWER_LEVELS) {
        return invalid(format!("power level {p} not in 0..3"));
    }
    if let Some(&m) = sweep.mcs.iter().find(|&&m| !(1..=MAX_MCS).contains(&m)) {
        return invalid(format!("MCS index {m} outside 1..=27"));
    }
    let prop = &cfg.propagation;
    let chl = cfg.cqi_history_len;
    let mut rows = Vec::with_capacity(nums.len() * sweep.power_levels.len() * sweep.mcs.len() * sweep.positions_per_set);
    for &num in &nums {
        let cells: Vec<_> = cfg.gnbs.iter().filter(|g| g.numerology == num).collect();
        if cells.is_empty() {
            return invalid(format!("scenario has no gNB with numerology {}", num.mu()));
        }
        for &power_level in &sweep.power_levels {
            for &mcs in &sweep.mcs {
                for _ in 0..sweep.positions_per_set {
                    let gnb = *cells.choose(rng).expect("nonempty");
                    let sigma = prop.class(gnb.carrier).shadowing_sigma_db;
                    let mut ue = MobilityState::random(cfg.area_side_m, &cfg.mobility, rng);
                    let mut shadow = Shadowing::new(sigma, ue.position, rng);
                    let mut hist = CqiHistory::new(chl);
                    for _ in 0..chl {
                        ue = step_mobility(&ue, cfg.epoch_s, cfg.area_side_m, &cfg.mobility, rng);
                        shadow.update(sigma, prop.decorrelation_m, ue.position, rng);
                        let pl = path_loss_db(gnb, &ue.position, shadow.value_db, prop);
                        let noise: f64 = StandardNormal.sample(rng);
                        let measured = snr_db(gnb, pl, 0, prop) + prop.cqi_measurement_sigma_db * noise;
                        hist.push(cfg.cqi_quantizer.cqi(measured));
                    }
                    let pl = path_loss_db(gnb, &ue.position, shadow.value_db, prop);
                    let snr = snr_db(gnb, pl, power_level, prop);
                    let mut failures = 0usize;
                    for _ in 0..sweep.slots_per_row {
                        let fade = if prop.fading { rayleigh_gain_db(rng) } else { 0.0 };
                        let p = oracle_bler(snr + fade, mcs, num, &cfg.oracle)?;
                        if rng.random::<f64>() < p {
                            failures += 1;
                        }
                    }
                    rows.push(TrainingRow {
                        cqi: hist.values(),
                        numerology: num,
                        power_level,
                        mcs,
                        bler: failures as f64 / sweep.slots_per_row as f64,
                        snr_db: snr,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn csv_header(chl: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..chl).map(|i| format!("cqi_{i}")).collect();
    h.extend(["mu", "power_level", "mcs", "bler"].map(String::from));
    h
}

pub fn write_training_csv<W: Write>(rows: &[TrainingRow], out: W) -> Result<()> {
    let chl = rows.first().map(|r| r.cqi.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(chl))?;
    for r in rows {
        let mut rec: Vec<String> = r.cqi.iter().map(|c| c.to_string()).collect();
        rec.push(r.numerology.mu().to_string());
        rec.push(r.power_level.to_string());
        rec.push(r.mcs.to_string());
        rec.push(r.bler.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows back; the SNR column does not exist in the file and comes back as NaN.
pub fn read_training_csv<R: Read>(input: R) -> Result<Vec<TrainingRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let chl = headers.len().checked_sub(4).filter(|&n| n > 0);
    let Some(chl) = chl else {
        return invalid("training CSV needs CQI columns plus mu, power_level, mcs, bler");
    };
    if headers.iter().collect::<Vec<_>>() != csv_header(chl) {
        return invalid("unexpected training CSV header");
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse_err = |i: usize| crate::error::Error::InvalidArgument(format!("bad value {:?} in column {}", field(i), &headers[i]));
        let cqi = (0..chl).map(|i| field(i).parse::<u8>().map_err(|_| parse_err(i))).collect::<Result<Vec<u8>>>()?;
        let mu: u8 = field(chl).parse().map_err(|_| parse_err(chl))?;
        rows.push(TrainingRow {
            cqi,
            numerology: Numerology::new(mu)?,
            power_level: field(chl + 1).parse().map_err(|_| parse_err(chl + 1))?,
            mcs: field(chl + 2).parse().map_err(|_| parse_err(chl + 2))?,
            bler: field(chl + 3).parse().map_err(|_| parse_err(chl + 3))?,
            snr_db: f64::NAN,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_sweep() -> TrainingSweep {
        TrainingSweep { mcs: vec![1, 14, 27], positions_per_set: 2, slots_per_row: 200, ..TrainingSweep::default() }
    }

    #[test]
    fn full_sweep_row_count() {
        let cfg = ScenarioConfig::default();
        let sweep = TrainingSweep { slots_per_row: 1, ..TrainingSweep::default() };
        let rows = generate_training_set(&cfg, &sweep, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(rows.len(), 3 * 3 * 27 * 10);
        assert!(rows.iter().all(|r| r.cqi.len() == 20 && r.cqi.iter().all(|&c| c < 16)));
    }

    #[test]
    fn empty_sweep_rejected() {
        let cfg = ScenarioConfig::default();
        let sweep = TrainingSweep { mcs: vec![], ..TrainingSweep::default() };
        assert!(generate_training_set(&cfg, &sweep, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
        let sweep = TrainingSweep { positions_per_set: 0, ..TrainingSweep::default() };
        assert!(generate_training_set(&cfg, &sweep, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn without_fading_bler_matches_oracle() {
        let mut cfg = ScenarioConfig::default();
        cfg.propagation.fading = false;
        let sweep = TrainingSweep { slots_per_row: 2000, ..small_sweep() };
        let rows = generate_training_set(&cfg, &sweep, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for r in &rows {
            let p = oracle_bler(r.snr_db, r.mcs, r.numerology, &cfg.oracle).unwrap();
            // 99 % two-sided binomial interval
            let half = 2.576 * (p * (1.0 - p) / 2000.0).sqrt() + 1.0 / 2000.0;
            assert!((r.bler - p).abs() <= half, "oracle {p} vs empirical {}", r.bler);
        }
    }

    #[test]
    fn same_seed_same_rows() {
        let cfg = ScenarioConfig::default();
        let a = generate_training_set(&cfg, &small_sweep(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_training_set(&cfg, &small_sweep(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let c = generate_training_set(&cfg, &small_sweep(), &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip() {
        let cfg = ScenarioConfig::default();
        let rows = generate_training_set(&cfg, &small_sweep(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut buf = Vec::new();
        write_training_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cqi_0,cqi_1,"));
        assert!(text.lines().next().unwrap().ends_with("cqi_19,mu,power_level,mcs,bler"));
        let back = read_training_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!((&a.cqi, a.numerology, a.power_level, a.mcs, a.bler), (&b.cqi, b.numerology, b.power_level, b.mcs, b.bler));
        }
        assert!(read_training_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
