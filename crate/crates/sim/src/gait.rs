//! Diagonal-pair trot scheduling.
//!
//! Feet pair up as {FL, RR} and {FR, RL}, half a period apart. Each foot is
//! in stance for `duty` of the cycle starting at its pair's phase offset;
//! duty 0.5 alternates the pairs seamlessly, duty > 0.5 adds double support,
//! duty < 0.5 leaves flight gaps.

use optistate_core::ContactRef;

use crate::config::{CommandProfile, GaitConfig, SimConfig};

/// Phase offset of each foot's stance window within the cycle.
/// Order: FL, FR, RL, RR.
const PAIR_OFFSET: [f64; 4] = [0.0, 0.5, 0.5, 0.0];

/// Fractional position inside the gait cycle at time `t`.
pub fn cycle_phase(gait: &GaitConfig, t: f64) -> f64 {
    let p = (t / gait.period).fract();
    if p < 0.0 {
        p + 1.0
    } else {
        p
    }
}

/// Stance flags at time `t`. A standing profile keeps all feet planted.
pub fn contact_at(gait: &GaitConfig, profile: CommandProfile, t: f64) -> ContactRef {
    if profile == CommandProfile::Standing {
        return ContactRef::all_stance();
    }
    let phase = cycle_phase(gait, t);
    let mut flags = [false; 4];
    for (leg, flag) in flags.iter_mut().enumerate() {
        let local = (phase - PAIR_OFFSET[leg]).rem_euclid(1.0);
        *flag = local < gait.duty;
    }
    ContactRef::new(flags)
}

/// Time of the next touchdown for `leg` strictly after `t`.
pub fn next_touchdown(gait: &GaitConfig, leg: usize, t: f64) -> f64 {
    let phase = cycle_phase(gait, t);
    let offset = PAIR_OFFSET[leg];
    let mut delta = (offset - phase).rem_euclid(1.0);
    if delta <= 1e-12 {
        delta = 1.0;
    }
    t + delta * gait.period
}

/// Stance duration per step, s.
pub fn stance_duration(gait: &GaitConfig) -> f64 {
    gait.duty * gait.period
}

/// The full reference contact sequence on the control grid.
pub fn gait_schedule(config: &SimConfig) -> Vec<ContactRef> {
    (0..config.frame_count())
        .map(|k| contact_at(&config.gait, config.command.profile, k as f64 * config.dt))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gait() -> GaitConfig {
        GaitConfig {
            period: 0.4,
            duty: 0.5,
            swing_height: 0.05,
        }
    }

    #[test]
    fn pairs_split_the_cycle_evenly() {
        let g = gait();
        let dt = 0.005;
        let mut stance_time = [0.0f64; 4];
        for k in 0..80 {
            let c = contact_at(&g, CommandProfile::RandomWalk, k as f64 * dt);
            for leg in 0..4 {
                if c.is_stance(leg) {
                    stance_time[leg] += dt;
                }
            }
        }
        // One full cycle: each foot in stance exactly 0.2 s.
        for leg in 0..4 {
            assert!((stance_time[leg] - 0.2).abs() < 1e-12, "leg {leg}");
        }
    }

    #[test]
    fn diagonal_pairs_move_together() {
        let g = gait();
        for k in 0..400 {
            let c = contact_at(&g, CommandProfile::RandomWalk, k as f64 * 0.003);
            assert_eq!(c.is_stance(0), c.is_stance(3), "FL/RR must agree");
            assert_eq!(c.is_stance(1), c.is_stance(2), "FR/RL must agree");
        }
    }

    #[test]
    fn schedule_is_periodic() {
        let g = gait();
        for k in 0..100 {
            let t = k as f64 * 0.007;
            let a = contact_at(&g, CommandProfile::RandomWalk, t);
            let b = contact_at(&g, CommandProfile::RandomWalk, t + g.period);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn no_flight_for_duty_at_least_half() {
        for duty in [0.5, 0.6, 0.75] {
            let g = GaitConfig {
                period: 0.4,
                duty,
                swing_height: 0.05,
            };
            // Exhaustive scan over one period on a fine grid.
            for k in 0..4000 {
                let t = k as f64 * (g.period / 4000.0);
                let c = contact_at(&g, CommandProfile::RandomWalk, t);
                assert!(c.count() >= 2, "flight at t={t} duty={duty}");
                if duty > 0.5 {
                    assert!(c.count() == 2 || c.count() == 4);
                }
            }
        }
    }

    #[test]
    fn low_duty_has_flight_gaps() {
        let g = GaitConfig {
            period: 0.4,
            duty: 0.4,
            swing_height: 0.05,
        };
        let mut seen_flight = false;
        for k in 0..4000 {
            let t = k as f64 * (g.period / 4000.0);
            seen_flight |= contact_at(&g, CommandProfile::RandomWalk, t).count() == 0;
        }
        assert!(seen_flight);
    }

    #[test]
    fn touchdown_is_consistent_with_contact() {
        let g = gait();
        for leg in 0..4 {
            for k in 0..50 {
                let t = 0.013 * k as f64;
                let td = next_touchdown(&g, leg, t);
                assert!(td > t);
                let just_before = contact_at(&g, CommandProfile::RandomWalk, td - 1e-6);
                let just_after = contact_at(&g, CommandProfile::RandomWalk, td + 1e-6);
                assert!(!just_before.is_stance(leg) || just_after.is_stance(leg));
                assert!(just_after.is_stance(leg));
            }
        }
    }
}
