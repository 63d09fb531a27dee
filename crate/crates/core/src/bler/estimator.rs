use std::sync::Arc;

use crate::bler::kmeans::{cqi_label, CqiClusterModel};
use crate::bler::oracle::{oracle_bler, BlerOracleParams, FadingCurve};
use crate::bler::regressor::{estimate_bler, BlerRegressor};
use crate::channel::{CqiQuantizer, POWER_STEP_DB};
use crate::error::{invalid, Result};
use crate::radio::{Numerology, MAX_MCS};
use crate::selector::GnbSnapshot;

/// Source of the per-MCS BLER row for one gNB at a decision epoch.
pub trait BlerEstimator: Send + Sync {
    /// BLER for MCS 1..=27 (27 entries, each in [0, 1]).
    fn bler_row(&self, snap: &GnbSnapshot) -> Vec<f64>;

    fn name(&self) -> &str;
}

/// Expected BLER row at a mean SNR, averaged over Rayleigh fading when enabled.
#[derive(Debug, Clone)]
pub struct LinkCurve {
    params: BlerOracleParams,
    fading: Option<Arc<FadingCurve>>,
}

impl LinkCurve {
    pub fn new(params: BlerOracleParams, fading: bool) -> Self {
        let curve = fading.then(|| FadingCurve::shared(params.slope));
        LinkCurve { params, fading: curve }
    }

    pub fn bler(&self, snr_db: f64, mcs: usize, num: Numerology) -> f64 {
        let r = match &self.fading {
            Some(c) => c.bler(snr_db, mcs, num, &self.params),
            None => oracle_bler(snr_db, mcs, num, &self.params),
        };
        r.unwrap_or(1.0)
    }

    pub fn row(&self, snr_db: f64, num: Numerology) -> Vec<f64> {
        (1..=MAX_MCS).map(|mcs| self.bler(snr_db, mcs, num)).collect()
    }
}

/// Reads the latest CQI as the bin-centre SNR at full power and backs off by
/// the power level. Used on its own and as the cold-start path of the learned
/// estimator.
#[derive(Debug, Clone)]
pub struct CqiOracleEstimator {
    curve: LinkCurve,
    quantizer: CqiQuantizer,
}

impl CqiOracleEstimator {
    pub fn new(params: BlerOracleParams, quantizer: CqiQuantizer, fading: bool) -> Self {
        CqiOracleEstimator { curve: LinkCurve::new(params, fading), quantizer }
    }
}

impl BlerEstimator for CqiOracleEstimator {
    fn bler_row(&self, snap: &GnbSnapshot) -> Vec<f64> {
        match snap.cqi.latest() {
            Some(c) => {
                let snr = self.quantizer.bin_center_db(c) - POWER_STEP_DB * snap.power_level as f64;
                self.curve.row(snr, snap.numerology)
            }
            None => vec![1.0; MAX_MCS],
        }
    }

    fn name(&self) -> &str {
        "cqi-oracle"
    }
}

/// Cluster label from the CQI history, then the regressor per MCS.
#[derive(Debug, Clone)]
pub struct LearnedEstimator {
    pub clusters: CqiClusterModel,
    pub regressor: BlerRegressor,
    cold: CqiOracleEstimator,
}

impl LearnedEstimator {
    pub fn new(clusters: CqiClusterModel, regressor: BlerRegressor, cold: CqiOracleEstimator) -> Result<Self> {
        if !regressor.is_trained() {
            return Err(crate::error::Error::NotReady("BLER regressor has not been trained".into()));
        }
        if regressor.n_labels() != clusters.n_clusters() {
            return invalid(format!(
                "regressor expects {} labels, cluster model has {}",
                regressor.n_labels(),
                clusters.n_clusters()
            ));
        }
        Ok(LearnedEstimator { clusters, regressor, cold })
    }
}

impl BlerEstimator for LearnedEstimator {
    fn bler_row(&self, snap: &GnbSnapshot) -> Vec<f64> {
        let Ok(label) = cqi_label(&self.clusters, &snap.cqi) else {
            return self.cold.bler_row(snap);
        };
        (1..=MAX_MCS)
            .map(|mcs| estimate_bler(&self.regressor, label, snap.numerology, snap.power_level, mcs).unwrap_or(1.0))
            .collect()
    }

    fn name(&self) -> &str {
        "learned"
    }
}

/// Knows the true mean SNR carried in the snapshot.
#[derive(Debug, Clone)]
pub struct GenieEstimator {
    curve: LinkCurve,
}

impl GenieEstimator {
    pub fn new(params: BlerOracleParams, fading: bool) -> Self {
        GenieEstimator { curve: LinkCurve::new(params, fading) }
    }
}

impl BlerEstimator for GenieEstimator {
    fn bler_row(&self, snap: &GnbSnapshot) -> Vec<f64> {
        match snap.mean_snr_db {
            Some(s) => self.curve.row(s, snap.numerology),
            None => vec![1.0; MAX_MCS],
        }
    }

    fn name(&self) -> &str {
        "genie"
    }
}

/// Fixed SNR per gNB id; unknown ids see a dead link.
#[derive(Debug, Clone)]
pub struct FixedSnrOracle {
    snr_by_id: Vec<(usize, f64)>,
    curve: LinkCurve,
}

impl FixedSnrOracle {
    pub fn new(snr_by_id: Vec<(usize, f64)>, params: BlerOracleParams, fading: bool) -> Self {
        FixedSnrOracle { snr_by_id, curve: LinkCurve::new(params, fading) }
    }
}

impl BlerEstimator for FixedSnrOracle {
    fn bler_row(&self, snap: &GnbSnapshot) -> Vec<f64> {
        match self.snr_by_id.iter().find(|(id, _)| *id == snap.id) {
            Some(&(_, s)) => self.curve.row(s, snap.numerology),
            None => vec![1.0; MAX_MCS],
        }
    }

    fn name(&self) -> &str {
        "fixed-snr"
    }
}

/// Same BLER for every gNB and MCS.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEstimator(pub f64);

impl BlerEstimator for ConstantEstimator {
    fn bler_row(&self, _: &GnbSnapshot) -> Vec<f64> {
        vec![self.0.clamp(0.0, 1.0); MAX_MCS]
    }

    fn name(&self) -> &str {
        "constant"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{CqiHistory, Position};

    fn snap(cqi: &[u8], power_level: u8) -> GnbSnapshot {
        GnbSnapshot {
            id: 0,
            position: Position::new(0.0, 0.0),
            numerology: Numerology::MU2,
            power_level,
            available_rbs: 66,
            total_rbs: 66,
            cqi: CqiHistory::from_values(20, cqi),
            mean_snr_db: Some(17.0),
        }
    }

    #[test]
    fn cqi_oracle_uses_latest_bin_centre() {
        let q = CqiQuantizer::default();
        let p = BlerOracleParams::default();
        let e = CqiOracleEstimator::new(p.clone(), q.clone(), false);
        let row = e.bler_row(&snap(&[3, 9], 1));
        let snr = q.bin_center_db(9) - 3.0;
        for mcs in 1..=MAX_MCS {
            assert_eq!(row[mcs - 1], oracle_bler(snr, mcs, Numerology::MU2, &p).unwrap());
        }
        assert_eq!(e.bler_row(&snap(&[], 0)), vec![1.0; 27]);
    }

    #[test]
    fn fading_raises_bler_at_high_margin() {
        let p = BlerOracleParams::default();
        let flat = LinkCurve::new(p.clone(), false);
        let faded = LinkCurve::new(p, true);
        assert!(faded.bler(30.0, 5, Numerology::MU0) > flat.bler(30.0, 5, Numerology::MU0));
        assert!(faded.bler(-20.0, 5, Numerology::MU0) < flat.bler(-20.0, 5, Numerology::MU0));
    }

    #[test]
    fn genie_and_fixed_agree() {
        let p = BlerOracleParams::default();
        let g = GenieEstimator::new(p.clone(), true);
        let f = FixedSnrOracle::new(vec![(0, 17.0)], p, true);
        let s = snap(&[5; 20], 0);
        assert_eq!(g.bler_row(&s), f.bler_row(&s));
        let mut other = s.clone();
        other.id = 4;
        assert_eq!(f.bler_row(&other), vec![1.0; 27]);
    }
}
