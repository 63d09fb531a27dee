use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::config::LoadParams;

/// Occupied RBs of every gNB, driven by a reflecting integer random walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundLoad {
    pub occupied: Vec<u32>,
}

impl BackgroundLoad {
    pub fn random<R: Rng + ?Sized>(n: usize, params: &LoadParams, rng: &mut R) -> Self {
        BackgroundLoad { occupied: (0..n).map(|_| rng.random_range(0..=params.max_occupied_rbs)).collect() }
    }

    pub fn available(&self, i: usize, total_rbs: u32) -> u32 {
        total_rbs.saturating_sub(self.occupied[i])
    }
}

fn reflect(x: i64, max: i64) -> i64 {
    if max == 0 {
        return 0;
    }
    let period = 2 * max;
    let r = x.rem_euclid(period);
    if r > max {
        period - r
    } else {
        r
    }
}

pub fn step_background_load<R: Rng + ?Sized>(state: &BackgroundLoad, params: &LoadParams, rng: &mut R) -> BackgroundLoad {
    let step = params.step_rbs as i64;
    let max = params.max_occupied_rbs as i64;
    let occupied = state
        .occupied
        .iter()
        .map(|&o| {
            // one draw per gNB even when the step is zero keeps streams aligned
            let d = rng.random_range(-step..=step);
            reflect(o as i64 + d, max) as u32
        })
        .collect();
    BackgroundLoad { occupied }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_step_is_constant() {
        let p = LoadParams { step_rbs: 0, ..LoadParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s0 = BackgroundLoad { occupied: vec![3, 17, 40] };
        let mut s = s0.clone();
        for _ in 0..100 {
            s = step_background_load(&s, &p, &mut rng);
        }
        assert_eq!(s, s0);
    }

    #[test]
    fn long_walk_stays_bounded() {
        let p = LoadParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = BackgroundLoad::random(9, &p, &mut rng);
        let (mut saw_lo, mut saw_hi) = (false, false);
        for _ in 0..100_000 {
            s = step_background_load(&s, &p, &mut rng);
            assert!(s.occupied.iter().all(|&o| o <= 40));
            saw_lo |= s.occupied.iter().any(|&o| o <= 2);
            saw_hi |= s.occupied.iter().any(|&o| o >= 38);
            assert!(s.available(0, 66) >= 26);
        }
        assert!(saw_lo && saw_hi);
    }

    #[test]
    fn seeded_trajectory_repeats() {
        let p = LoadParams::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = BackgroundLoad::random(4, &p, &mut rng);
            (0..50).map(|_| { s = step_background_load(&s, &p, &mut rng); s.clone() }).collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
    }

    proptest! {
        #[test]
        fn reflect_in_range(x in -1000i64..1000, max in 0i64..60) {
            let r = reflect(x, max);
            prop_assert!((0..=max).contains(&r));
            if (0..=max).contains(&x) {
                prop_assert_eq!(r, x);
            }
        }
    }
}
