//! Multichannel slotted-ALOHA contention: every transmitter picks one of M
//! channels uniformly at random; a channel delivers its payload only if
//! exactly one transmitter chose it. Collided payloads are lost outright
//! (no capture effect, no retransmission within the iteration).

use rand::Rng;

use crate::rng::SimRng;

/// Outcome of one contention round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentionOutcome {
    /// Delivered transmissions as (user index, channel index) pairs, in
    /// ascending channel order.
    pub successes: Vec<(usize, usize)>,
    /// Channels on which two or more transmitters collided.
    pub collided_channels: Vec<usize>,
    /// Channels nobody picked.
    pub idle_channels: usize,
    /// Number of users that transmitted (the base station's K_hat,
    /// counting colliding users too).
    pub attempted: usize,
}

impl ContentionOutcome {
    /// Channels carrying any activity at all.
    pub fn busy_channels(&self) -> usize {
        self.successes.len() + self.collided_channels.len()
    }
}

/// Run one contention round among `transmitters` over `channels` channels.
pub fn contend(transmitters: &[usize], channels: usize, rng: &mut SimRng) -> ContentionOutcome {
    assert!(channels >= 1, "need at least one channel");
    // occupancy per channel: the sole occupant while unique, else a collision marker
    const EMPTY: usize = usize::MAX;
    const COLLIDED: usize = usize::MAX - 1;
    let mut occupant = vec![EMPTY; channels];
    for &user in transmitters {
        let ch = rng.random_range(0..channels);
        occupant[ch] = if occupant[ch] == EMPTY {
            user
        } else {
            COLLIDED
        };
    }
    let mut successes = Vec::new();
    let mut collided_channels = Vec::new();
    let mut idle_channels = 0;
    for (ch, &occ) in occupant.iter().enumerate() {
        match occ {
            EMPTY => idle_channels += 1,
            COLLIDED => collided_channels.push(ch),
            user => successes.push((user, ch)),
        }
    }
    ContentionOutcome {
        successes,
        collided_channels,
        idle_channels,
        attempted: transmitters.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rng(seed: u64) -> SimRng {
        substream(seed, 0, StreamKind::Channel, 0)
    }

    #[test]
    fn single_transmitter_always_succeeds() {
        let mut r = rng(1);
        for channels in [1, 2, 10] {
            let out = contend(&[7], channels, &mut r);
            assert_eq!(out.successes.len(), 1);
            assert_eq!(out.successes[0].0, 7);
            assert_eq!(out.attempted, 1);
            assert!(out.collided_channels.is_empty());
        }
    }

    #[test]
    fn two_transmitters_one_channel_collide() {
        let mut r = rng(2);
        let out = contend(&[0, 1], 1, &mut r);
        assert!(out.successes.is_empty());
        assert_eq!(out.collided_channels, vec![0]);
        assert_eq!(out.attempted, 2);
        assert_eq!(out.idle_channels, 0);
    }

    #[test]
    fn empty_transmitter_set() {
        let mut r = rng(3);
        let out = contend(&[], 5, &mut r);
        assert_eq!(out.attempted, 0);
        assert!(out.successes.is_empty());
        assert_eq!(out.idle_channels, 5);
    }

    #[test]
    fn mean_successes_matches_closed_form() {
        // E[successes] = n (1 - 1/M)^(n-1)
        let trials = 100_000;
        for &(n, m) in &[(2usize, 2usize), (5, 10), (10, 10), (20, 10)] {
            let mut r = rng(40 + n as u64);
            let transmitters: Vec<usize> = (0..n).collect();
            let total: usize = (0..trials)
                .map(|_| contend(&transmitters, m, &mut r).successes.len())
                .sum();
            let mean = total as f64 / trials as f64;
            let expected = n as f64 * (1.0 - 1.0 / m as f64).powi(n as i32 - 1);
            assert_relative_eq!(mean, expected, max_relative = 0.02);
        }
    }

    /// Expected successes by exhaustive enumeration of all M^n channel
    /// assignments, the independent oracle for small cases.
    fn brute_force_mean_successes(n: usize, m: usize) -> f64 {
        let total_assignments = m.pow(n as u32);
        let mut total_successes = 0usize;
        for code in 0..total_assignments {
            let mut counts = vec![0usize; m];
            let mut rem = code;
            for _ in 0..n {
                counts[rem % m] += 1;
                rem /= m;
            }
            total_successes += counts.iter().filter(|&&c| c == 1).count();
        }
        total_successes as f64 / total_assignments as f64
    }

    #[test]
    fn closed_form_matches_brute_force_enumeration() {
        for n in 1..=3 {
            for m in 1..=3 {
                let brute = brute_force_mean_successes(n, m);
                let closed = n as f64 * (1.0 - 1.0 / m as f64).powi(n as i32 - 1);
                assert_relative_eq!(brute, closed, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn empirical_mean_matches_brute_force_for_small_cases() {
        let trials = 100_000;
        for n in 1..=3usize {
            for m in 1..=3usize {
                let mut r = rng(100 + (10 * n + m) as u64);
                let transmitters: Vec<usize> = (0..n).collect();
                let total: usize = (0..trials)
                    .map(|_| contend(&transmitters, m, &mut r).successes.len())
                    .sum();
                let mean = total as f64 / trials as f64;
                let brute = brute_force_mean_successes(n, m);
                assert!(
                    (mean - brute).abs() <= 0.02 * brute.max(0.05),
                    "n={n} m={m}: empirical {mean} vs enumerated {brute}"
                );
            }
        }
    }

    #[test]
    fn channel_choice_is_uniform() {
        // chi-squared over 1e5 single-transmitter rounds, M=10, 9 dof;
        // critical value at significance 0.001 is 27.877
        let m = 10;
        let trials = 100_000;
        let mut r = rng(9);
        let mut counts = vec![0usize; m];
        for _ in 0..trials {
            let out = contend(&[0], m, &mut r);
            counts[out.successes[0].1] += 1;
        }
        let expected = trials as f64 / m as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(
            chi2 < 27.877,
            "chi-squared statistic {chi2} rejects uniformity"
        );
    }

    #[test]
    fn identical_seed_identical_outcome() {
        let transmitters: Vec<usize> = (0..25).collect();
        let a = contend(&transmitters, 10, &mut rng(77));
        let b = contend(&transmitters, 10, &mut rng(77));
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn outcome_partitions_the_channels(
            n in 0usize..40,
            m in 1usize..16,
            seed in 0u64..1000,
        ) {
            let transmitters: Vec<usize> = (0..n).collect();
            let out = contend(&transmitters, m, &mut rng(seed));
            prop_assert_eq!(
                out.successes.len() + out.collided_channels.len() + out.idle_channels,
                m
            );
            prop_assert!(out.successes.len() <= n.min(m));
            prop_assert_eq!(out.attempted, n);
            prop_assert!(out.attempted >= out.successes.len());
        }
    }
}
