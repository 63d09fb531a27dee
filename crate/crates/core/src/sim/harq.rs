use serde::{Deserialize, Serialize};

use crate::radio::Numerology;

pub const MAX_HARQ_ATTEMPTS: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HarqState {
    Pending,
    Decoded,
    Lost,
}

/// Life of one transport block: an initial transmission plus up to three
/// retransmissions, two slots apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarqProcess {
    pub tb_id: u64,
    pub attempts: u8,
    pub outcomes: Vec<bool>,
    pub state: HarqState,
    pub max_attempts: u8,
}

impl HarqProcess {
    pub fn new(tb_id: u64, max_attempts: u8) -> Self {
        HarqProcess { tb_id, attempts: 0, outcomes: Vec::new(), state: HarqState::Pending, max_attempts: max_attempts.max(1) }
    }

    /// Slots from first transmission to the final decode outcome.
    pub fn latency_slots(&self) -> u32 {
        2 * self.attempts as u32
    }

    pub fn latency_s(&self, num: Numerology) -> f64 {
        self.latency_slots() as f64 * num.slot_duration_s()
    }
}

pub fn harq_step(mut p: HarqProcess, decode_success: bool) -> HarqProcess {
    if p.state != HarqState::Pending {
        return p;
    }
    p.attempts += 1;
    p.outcomes.push(decode_success);
    if decode_success {
        p.state = HarqState::Decoded;
    } else if p.attempts >= p.max_attempts {
        p.state = HarqState::Lost;
    }
    p
}

/// Per-block loss after all attempts, each failing independently with `bler`.
pub fn residual_loss(bler: f64) -> f64 {
    residual_loss_after(bler, MAX_HARQ_ATTEMPTS)
}

pub fn residual_loss_after(bler: f64, attempts: u8) -> f64 {
    bler.clamp(0.0, 1.0).powi(attempts as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_attempt_success_at_mu0() {
        let p = harq_step(HarqProcess::new(0, 4), true);
        assert_eq!(p.state, HarqState::Decoded);
        assert!((p.latency_s(Numerology::MU0) - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn four_failures_lose_the_block() {
        let mut p = HarqProcess::new(1, 4);
        for i in 0..4 {
            assert_eq!(p.state, HarqState::Pending, "attempt {i}");
            p = harq_step(p, false);
        }
        assert_eq!(p.state, HarqState::Lost);
        assert_eq!(harq_step(p.clone(), true), p);
    }

    #[test]
    fn last_attempt_success_at_mu3() {
        let mut p = HarqProcess::new(2, 4);
        for _ in 0..3 {
            p = harq_step(p, false);
        }
        p = harq_step(p, true);
        assert_eq!(p.state, HarqState::Decoded);
        assert!((p.latency_s(Numerology::MU3) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn residual_loss_values() {
        assert_eq!(residual_loss(0.0), 0.0);
        assert_eq!(residual_loss(1.0), 1.0);
        assert!((residual_loss(0.1) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn residual_loss_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let bler = 0.1;
        let lost = (0..n)
            .filter(|i| {
                let mut p = HarqProcess::new(*i, 4);
                while p.state == HarqState::Pending {
                    p = harq_step(p, rng.random::<f64>() >= bler);
                }
                p.state == HarqState::Lost
            })
            .count();
        let q = residual_loss(bler);
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        let rate = lost as f64 / n as f64;
        assert!((rate - q).abs() <= 3.0 * sigma, "{rate} vs {q}");
    }
}
