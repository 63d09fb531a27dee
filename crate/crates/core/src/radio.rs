//! Closed-form NR radio arithmetic: slot counts, transport-block sizes,
//! rates, occupied bandwidth, spectrum efficiency and HARQ latency bounds.
//!
//! Everything here is a pure function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Resource elements per RB usable for data in one slot.
pub const DATA_RES_PER_RB: f64 = 156.0;
pub const SUBCARRIERS_PER_RB: f64 = 12.0;
pub const BASE_SCS_HZ: f64 = 15e3;
/// Highest valid MCS index; index 0 means "no transmission".
pub const MAX_MCS: usize = 27;
pub const MCS_TABLE_LEN: usize = 28;

/// OFDM numerology exponent. Sub-carrier spacing is `15 * 2^mu` kHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Numerology(u8);

impl Numerology {
    pub const MU0: Numerology = Numerology(0);
    pub const MU1: Numerology = Numerology(1);
    pub const MU2: Numerology = Numerology(2);
    pub const MU3: Numerology = Numerology(3);

    pub fn new(mu: u8) -> Result<Self> {
        if mu > 3 {
            return invalid(format!("numerology {mu} outside 0..=3"));
        }
        Ok(Numerology(mu))
    }

    pub fn mu(self) -> u8 {
        self.0
    }

    /// `2^mu`
    pub fn scale(self) -> u32 {
        1 << self.0
    }

    pub fn scs_hz(self) -> f64 {
        BASE_SCS_HZ * self.scale() as f64
    }

    pub fn slot_duration_s(self) -> f64 {
        1e-3 / self.scale() as f64
    }

    pub fn slots_per_second(self) -> f64 {
        1e3 * self.scale() as f64
    }
}

impl TryFrom<u8> for Numerology {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Numerology::new(v)
    }
}

impl From<Numerology> for u8 {
    fn from(n: Numerology) -> u8 {
        n.0
    }
}

/// Number of allocated resource blocks on one gNB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct RbAllocation(pub u32);

impl RbAllocation {
    pub fn checked(alrb: u32, total_rbs: u32) -> Result<Self> {
        if alrb > total_rbs {
            return invalid(format!("{alrb} RBs exceeds the {total_rbs} available"));
        }
        Ok(RbAllocation(alrb))
    }

    pub fn count(self) -> u32 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub bits_per_symbol: u8,
    pub coding_rate: f64,
}

impl McsEntry {
    /// Information bits carried per data resource element.
    pub fn efficiency(&self) -> f64 {
        self.bits_per_symbol as f64 * self.coding_rate
    }

    pub fn tbs_bits(&self, alrb: RbAllocation) -> u64 {
        let bits = DATA_RES_PER_RB * alrb.0 as f64 * self.coding_rate * self.bits_per_symbol as f64;
        (bits + 1e-9).floor() as u64
    }
}

/// On-disk shape of one table row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McsRow {
    pub index: usize,
    pub bits_per_symbol: u8,
    pub coding_rate_x1024: f64,
}

/// 28-row MCS table. Row 0 is reserved; transmissions use 1..=27.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

// 256-QAM MCS index table (Qm, R x 1024).
const NR_256QAM: [(u8, f64); MCS_TABLE_LEN] = [
    (2, 120.0),
    (2, 193.0),
    (2, 308.0),
    (2, 449.0),
    (2, 602.0),
    (4, 378.0),
    (4, 434.0),
    (4, 490.0),
    (4, 553.0),
    (4, 616.0),
    (4, 658.0),
    (6, 466.0),
    (6, 517.0),
    (6, 567.0),
    (6, 616.0),
    (6, 666.0),
    (6, 719.0),
    (6, 772.0),
    (6, 822.0),
    (6, 873.0),
    (8, 682.5),
    (8, 711.0),
    (8, 754.0),
    (8, 797.0),
    (8, 841.0),
    (8, 885.0),
    (8, 916.5),
    (8, 948.0),
];

impl Default for McsTable {
    fn default() -> Self {
        let entries = NR_256QAM
            .iter()
            .map(|&(q, r)| McsEntry { bits_per_symbol: q, coding_rate: r / 1024.0 })
            .collect();
        McsTable { entries }
    }
}

impl McsTable {
    pub fn new(entries: Vec<McsEntry>) -> Result<Self> {
        if entries.len() != MCS_TABLE_LEN {
            return invalid(format!("MCS table needs {MCS_TABLE_LEN} entries, got {}", entries.len()));
        }
        for (i, e) in entries.iter().enumerate() {
            if ![2, 4, 6, 8].contains(&e.bits_per_symbol) {
                return invalid(format!("MCS {i}: bits per symbol {} not in {{2,4,6,8}}", e.bits_per_symbol));
            }
            if !(e.coding_rate > 0.0 && e.coding_rate <= 1.0) {
                return invalid(format!("MCS {i}: coding rate {} outside (0,1]", e.coding_rate));
            }
        }
        for q in [2u8, 4, 6, 8] {
            let rates: Vec<f64> = entries.iter().filter(|e| e.bits_per_symbol == q).map(|e| e.coding_rate).collect();
            if rates.windows(2).any(|w| w[1] < w[0]) {
                return invalid(format!("coding rate decreases within modulation order {q}"));
            }
        }
        Ok(McsTable { entries })
    }

    pub fn from_rows(rows: &[McsRow]) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.index != i {
                return invalid(format!("MCS row {i} carries index {}", r.index));
            }
        }
        McsTable::new(
            rows.iter()
                .map(|r| McsEntry { bits_per_symbol: r.bits_per_symbol, coding_rate: r.coding_rate_x1024 / 1024.0 })
                .collect(),
        )
    }

    pub fn to_rows(&self) -> Vec<McsRow> {
        self.entries
            .iter()
            .enumerate()
            .map(|(index, e)| McsRow { index, bits_per_symbol: e.bits_per_symbol, coding_rate_x1024: e.coding_rate * 1024.0 })
            .collect()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rows: Vec<McsRow> = serde_json::from_str(s)?;
        McsTable::from_rows(&rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_rows())?)
    }

    /// Entry for a transmission index in 1..=27.
    pub fn entry(&self, mcs: usize) -> Result<&McsEntry> {
        if !(1..=MAX_MCS).contains(&mcs) {
            return invalid(format!("MCS index {mcs} outside 1..=27"));
        }
        Ok(&self.entries[mcs])
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }
}

impl Serialize for McsTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for McsTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<McsRow>::deserialize(d)?;
        McsTable::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Slots of numerology `num` in an interval of `t` seconds, rounded down.
pub fn slot_count(t: f64, num: Numerology) -> Result<u64> {
    if !(t > 0.0) || !t.is_finite() {
        return invalid(format!("interval must be positive, got {t}"));
    }
    Ok((t * num.scale() as f64 * 1e3 + 1e-9).floor() as u64)
}

pub fn tbs_bits(alrb: RbAllocation, mcs: usize, table: &McsTable) -> Result<u64> {
    Ok(table.entry(mcs)?.tbs_bits(alrb))
}

/// Error-weighted goodput of one gNB over `t` seconds given per-slot BLER and TB sizes.
pub fn gnb_rate(bler_per_slot: &[f64], tbs_per_slot: &[u64], t: f64) -> Result<f64> {
    if bler_per_slot.len() != tbs_per_slot.len() {
        return invalid(format!(
            "{} BLER values vs {} TB sizes",
            bler_per_slot.len(),
            tbs_per_slot.len()
        ));
    }
    if !(t > 0.0) {
        return invalid(format!("interval must be positive, got {t}"));
    }
    if let Some(b) = bler_per_slot.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return invalid(format!("BLER {b} outside [0,1]"));
    }
    let bits: f64 = bler_per_slot
        .iter()
        .zip(tbs_per_slot)
        .map(|(&b, &tbs)| (1.0 - b) * tbs as f64)
        .sum();
    Ok(bits / t)
}

pub fn total_rate(per_gnb_rates: &[f64]) -> f64 {
    per_gnb_rates.iter().sum()
}

/// Time-averaged occupied bandwidth in Hz: `ALRB * 12 * SCS`.
pub fn consumed_bandwidth(alrb: RbAllocation, num: Numerology) -> f64 {
    alrb.0 as f64 * SUBCARRIERS_PER_RB * num.scs_hz()
}

/// Occupied bandwidth of a whole cluster; `connected[i]` plays the role of
/// the connectivity vector.
pub fn cluster_bandwidth(members: &[(RbAllocation, Numerology)], connected: &[bool]) -> f64 {
    members
        .iter()
        .zip(connected)
        .filter(|(_, &on)| on)
        .map(|(&(a, n), _)| consumed_bandwidth(a, n))
        .sum()
}

/// bit/s/Hz. Zero bandwidth with zero rate is defined as zero efficiency.
pub fn spectrum_efficiency(dr: f64, cbw: f64) -> Result<f64> {
    if cbw < 0.0 || dr < 0.0 {
        return invalid(format!("negative rate {dr} or bandwidth {cbw}"));
    }
    if cbw == 0.0 {
        if dr == 0.0 {
            return Ok(0.0);
        }
        return invalid(format!("rate {dr} over zero bandwidth"));
    }
    Ok(dr / cbw)
}

/// Decode on the first attempt: two slots.
pub fn min_latency(num: Numerology) -> f64 {
    2.0 / num.scale() as f64 * 1e-3
}

/// Decode after three retransmissions: eight slots.
pub fn max_latency(num: Numerology) -> f64 {
    8.0 / num.scale() as f64 * 1e-3
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_with(mcs: usize, q: u8, cr: f64) -> McsTable {
        let mut entries = McsTable::default().entries().to_vec();
        // keep the per-order monotonicity valid by overwriting a whole order
        for e in entries.iter_mut().filter(|e| e.bits_per_symbol == q) {
            e.coding_rate = cr;
        }
        entries[mcs] = McsEntry { bits_per_symbol: q, coding_rate: cr };
        McsTable::new(entries).unwrap()
    }

    #[test]
    fn slot_counts() {
        assert_eq!(slot_count(1.0, Numerology::MU0).unwrap(), 1000);
        assert_eq!(slot_count(1.0, Numerology::MU3).unwrap(), 8000);
        assert_eq!(slot_count(0.5, Numerology::MU2).unwrap(), 2000);
        assert!(matches!(slot_count(0.0, Numerology::MU0), Err(Error::InvalidArgument(_))));
        assert!(slot_count(-1.0, Numerology::MU0).is_err());
    }

    #[test]
    fn numerology_bounds() {
        assert!(Numerology::new(4).is_err());
        assert!(serde_json::from_str::<Numerology>("5").is_err());
        assert_eq!(serde_json::from_str::<Numerology>("2").unwrap(), Numerology::MU2);
    }

    #[test]
    fn tbs_examples() {
        let t = table_with(1, 2, 0.5);
        assert_eq!(tbs_bits(RbAllocation(1), 1, &t).unwrap(), 156);
        assert_eq!(tbs_bits(RbAllocation(0), 1, &t).unwrap(), 0);
        let t = table_with(27, 8, 0.92);
        assert_eq!(tbs_bits(RbAllocation(10), 27, &t).unwrap(), 11481);
        assert!(tbs_bits(RbAllocation(1), 0, &t).is_err());
        assert!(tbs_bits(RbAllocation(1), 28, &t).is_err());
    }

    #[test]
    fn rate_examples() {
        let r = gnb_rate(&[0.0; 1000], &[156; 1000], 1.0).unwrap();
        assert_eq!(r, 156_000.0);
        assert_eq!(gnb_rate(&[1.0; 10], &[999; 10], 1.0).unwrap(), 0.0);
        let r = gnb_rate(&[0.1; 1000], &[1000; 1000], 1.0).unwrap();
        assert!((r - 900_000.0).abs() <= 900_000.0 * 1e-12);
        assert!(gnb_rate(&[0.0; 3], &[1; 2], 1.0).is_err());
        assert_eq!(total_rate(&[100.0, 50.0]), 150.0);
        assert_eq!(total_rate(&[]), 0.0);
        assert!((total_rate(&[1e8, 5e7, 2e7]) - 1.7e8).abs() < 1e-4);
    }

    #[test]
    fn bandwidth_and_se() {
        assert_eq!(consumed_bandwidth(RbAllocation(1), Numerology::MU0), 180_000.0);
        assert_eq!(consumed_bandwidth(RbAllocation(1), Numerology::MU3), 1_440_000.0);
        assert_eq!(consumed_bandwidth(RbAllocation(66), Numerology::MU2), 47_520_000.0);
        assert_eq!(spectrum_efficiency(1e6, 1e6).unwrap(), 1.0);
        assert_eq!(spectrum_efficiency(0.0, 180_000.0).unwrap(), 0.0);
        assert_eq!(spectrum_efficiency(9e5, 180_000.0).unwrap(), 5.0);
        assert_eq!(spectrum_efficiency(0.0, 0.0).unwrap(), 0.0);
        assert!(spectrum_efficiency(1.0, 0.0).is_err());
        let members = [(RbAllocation(1), Numerology::MU0), (RbAllocation(1), Numerology::MU3)];
        assert_eq!(cluster_bandwidth(&members, &[true, false]), 180_000.0);
        assert_eq!(cluster_bandwidth(&members, &[true, true]), 1_620_000.0);
    }

    #[test]
    fn latency_bounds() {
        assert!((min_latency(Numerology::MU0) - 2.0e-3).abs() < 1e-15);
        assert!((min_latency(Numerology::MU2) - 0.5e-3).abs() < 1e-15);
        assert!((min_latency(Numerology::MU3) - 0.25e-3).abs() < 1e-15);
        assert!((max_latency(Numerology::MU0) - 8.0e-3).abs() < 1e-15);
        assert!((max_latency(Numerology::MU3) - 1.0e-3).abs() < 1e-15);
        assert!((max_latency(Numerology::MU1) - 4.0e-3).abs() < 1e-15);
    }

    #[test]
    fn default_table_shape() {
        let t = McsTable::default();
        assert_eq!(t.entries().len(), 28);
        assert!((t.entry(1).unwrap().coding_rate - 193.0 / 1024.0).abs() < 1e-15);
        assert!((t.entry(27).unwrap().coding_rate - 948.0 / 1024.0).abs() < 1e-15);
        // spectral efficiency strictly increases over transmission indices
        assert!(t.entries()[1..].windows(2).all(|w| w[1].efficiency() > w[0].efficiency()));
    }

    #[test]
    fn table_json_round_trip_and_validation() {
        let t = McsTable::default();
        let back = McsTable::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
        let mut rows = t.to_rows();
        rows[3].bits_per_symbol = 3;
        assert!(McsTable::from_rows(&rows).is_err());
        let mut rows = t.to_rows();
        rows.pop();
        assert!(McsTable::from_rows(&rows).is_err());
        let mut rows = t.to_rows();
        rows[4].coding_rate_x1024 = 100.0;
        assert!(McsTable::from_rows(&rows).is_err());
    }

    #[test]
    fn error_free_se_upper_bound_is_attained() {
        let table = McsTable::default();
        for mu in 0..=3u8 {
            let num = Numerology::new(mu).unwrap();
            for mcs in [1usize, 9, 20, 27] {
                // 128 RBs makes the TB size an exact integer for x/1024 coding rates
                let alrb = RbAllocation(128);
                let t = 0.01;
                let ns = slot_count(t, num).unwrap() as usize;
                let tbs = tbs_bits(alrb, mcs, &table).unwrap();
                let rate = gnb_rate(&vec![0.0; ns], &vec![tbs; ns], t).unwrap();
                let se = spectrum_efficiency(rate, consumed_bandwidth(alrb, num)).unwrap();
                let e = table.entry(mcs).unwrap();
                let bound = e.efficiency() * 156.0 * ns as f64 / (t * 180e3 * num.scale() as f64);
                assert!((se - bound).abs() <= bound * 1e-12, "mu={mu} mcs={mcs} {se} vs {bound}");
            }
        }
    }

    proptest! {
        #[test]
        fn max_latency_is_four_times_min(mu in 0u8..=3) {
            let n = Numerology::new(mu).unwrap();
            prop_assert!((max_latency(n) - 4.0 * min_latency(n)).abs() < 1e-18);
        }

        #[test]
        fn slot_count_doubles_per_mu(t in 0.001f64..100.0, mu in 0u8..3) {
            let a = slot_count(t, Numerology::new(mu).unwrap()).unwrap();
            let b = slot_count(t, Numerology::new(mu + 1).unwrap()).unwrap();
            // flooring of the exact product can differ by at most one slot
            prop_assert!(b == 2 * a || b == 2 * a + 1);
        }

        #[test]
        fn tbs_linear_in_rbs(alrb in 0u32..=33, mcs in 1usize..=27) {
            let t = McsTable::default();
            let one = tbs_bits(RbAllocation(alrb), mcs, &t).unwrap() as i64;
            let two = tbs_bits(RbAllocation(2 * alrb), mcs, &t).unwrap() as i64;
            prop_assert!((two - 2 * one).abs() <= 1);
        }

        #[test]
        fn rate_monotone(
            blers in proptest::collection::vec(0.0f64..=1.0, 1..20),
            idx in 0usize..20,
            bump in 0.0f64..1.0,
            tbs in 0u64..100_000,
        ) {
            let n = blers.len();
            let i = idx % n;
            let sizes = vec![tbs; n];
            let base = gnb_rate(&blers, &sizes, 1.0).unwrap();
            let mut worse = blers.clone();
            worse[i] = (worse[i] + bump).min(1.0);
            prop_assert!(gnb_rate(&worse, &sizes, 1.0).unwrap() <= base + 1e-9);
            let mut bigger = sizes.clone();
            bigger[i] += 1000;
            prop_assert!(gnb_rate(&blers, &bigger, 1.0).unwrap() >= base - 1e-9);
        }
    }
}
