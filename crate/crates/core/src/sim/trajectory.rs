//! Ground-truth ripening: normalized Shore-hardness decay and the four
//! ripening classes.
//!
//! Peel hardness is tracked as the Shore value normalized to its value at
//! loading time, so every fruit starts at 1.0 and softens monotonically.
//! Class boundaries follow the fixed thresholds 0.9 / 0.8 / 0.7.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, purpose};
use crate::topology::FruitId;

/// Ripening stage, ordered from unripe to ready-to-eat.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum RipeningClass {
    /// Unripe.
    C1,
    /// Ready for stock.
    C2,
    /// Ready for grocery.
    C3,
    /// Ready for the consumer.
    C4,
}

impl RipeningClass {
    pub const ALL: [RipeningClass; 4] = [
        RipeningClass::C1,
        RipeningClass::C2,
        RipeningClass::C3,
        RipeningClass::C4,
    ];

    /// 1-based ordinal: C1 -> 1 ... C4 -> 4.
    pub fn ordinal(self) -> u8 {
        match self {
            RipeningClass::C1 => 1,
            RipeningClass::C2 => 2,
            RipeningClass::C3 => 3,
            RipeningClass::C4 => 4,
        }
    }

    pub fn from_ordinal(ordinal: u8) -> Result<Self> {
        match ordinal {
            1 => Ok(RipeningClass::C1),
            2 => Ok(RipeningClass::C2),
            3 => Ok(RipeningClass::C3),
            4 => Ok(RipeningClass::C4),
            other => Err(Error::Data(format!("unknown ripening class C{other}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RipeningClass::C1 => "C1",
            RipeningClass::C2 => "C2",
            RipeningClass::C3 => "C3",
            RipeningClass::C4 => "C4",
        }
    }
}

impl std::fmt::Display for RipeningClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// The three normalized-Shore thresholds separating the four classes,
/// ordered by crossing time: 0.9 is crossed first, 0.7 last.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Threshold {
    T090,
    T080,
    T070,
}

impl Threshold {
    pub const ALL: [Threshold; 3] = [Threshold::T090, Threshold::T080, Threshold::T070];

    pub fn value(self) -> f64 {
        match self {
            Threshold::T090 => 0.9,
            Threshold::T080 => 0.8,
            Threshold::T070 => 0.7,
        }
    }

    /// Index in crossing order: T090 -> 0, T080 -> 1, T070 -> 2.
    pub fn index(self) -> usize {
        match self {
            Threshold::T090 => 0,
            Threshold::T080 => 1,
            Threshold::T070 => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Threshold::T090 => "0.9",
            Threshold::T080 => "0.8",
            Threshold::T070 => "0.7",
        }
    }

    /// Whether a fruit with the given normalized Shore value has crossed
    /// this threshold.
    pub fn crossed_by(self, sh: f64) -> bool {
        sh < self.value()
    }

    /// Class reached once this threshold (and all earlier ones) crossed.
    pub fn class_on_crossing(self) -> RipeningClass {
        match self {
            Threshold::T090 => RipeningClass::C2,
            Threshold::T080 => RipeningClass::C3,
            Threshold::T070 => RipeningClass::C4,
        }
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Class of a normalized Shore value. The boundary of each band belongs
/// to the less-ripe class that opens it: sh = 0.8 is C2, not C3.
pub fn classify_sh(sh: f64) -> Result<RipeningClass> {
    if !sh.is_finite() || sh <= 0.0 || sh > 1.0 {
        return Err(Error::ShoreDomain(sh));
    }
    Ok(if sh >= 0.9 {
        RipeningClass::C1
    } else if sh >= 0.8 {
        RipeningClass::C2
    } else if sh >= 0.7 {
        RipeningClass::C3
    } else {
        RipeningClass::C4
    })
}

/// Storage regime of the cohort; sets how fast fruits reach the consumer
/// class (5-7 days at ambient conditions, 3-5 days in a ripening room).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Regime {
    Ambient,
    Accelerated,
}

impl Regime {
    fn consumer_crossing_mean_days(self) -> f64 {
        match self {
            Regime::Ambient => 6.0,
            Regime::Accelerated => 4.0,
        }
    }

    fn consumer_crossing_sd_days(self) -> f64 {
        match self {
            Regime::Ambient => 0.5,
            Regime::Accelerated => 0.4,
        }
    }
}

/// Cohort-level decay parameters; per-fruit values are drawn from these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortProfile {
    pub regime: Regime,
    /// Per-fruit spread of the day on which the 0.7 threshold is crossed,
    /// as a multiplier on the regime's default spread.
    pub variability: f64,
    /// Range of the hardness plateau the decay settles on.
    pub floor_lo: f64,
    pub floor_hi: f64,
}

impl CohortProfile {
    pub fn new(regime: Regime) -> Self {
        CohortProfile {
            regime,
            variability: 1.0,
            floor_lo: 0.35,
            floor_hi: 0.55,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.variability.is_finite() && self.variability >= 0.0) {
            return Err(Error::Config(format!(
                "cohort variability {} must be non-negative",
                self.variability
            )));
        }
        if !(0.0 < self.floor_lo && self.floor_lo <= self.floor_hi && self.floor_hi < 0.7) {
            return Err(Error::Config(format!(
                "hardness floor range [{}, {}] must sit inside (0, 0.7)",
                self.floor_lo, self.floor_hi
            )));
        }
        Ok(())
    }
}

impl Default for CohortProfile {
    fn default() -> Self {
        CohortProfile::new(Regime::Ambient)
    }
}

/// Exponential-plateau hardness decay of one fruit:
/// `sh(t) = floor + (1 - floor) * exp(-decay * t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShTrajectory {
    pub fruit: FruitId,
    pub floor: f64,
    pub decay_per_hour: f64,
}

impl ShTrajectory {
    /// Normalized Shore value after `t_hours` hours; 1.0 exactly at t = 0.
    pub fn sh(&self, t_hours: f64) -> f64 {
        self.floor + (1.0 - self.floor) * (-self.decay_per_hour * t_hours).exp()
    }

    pub fn class_at(&self, t_hours: f64) -> RipeningClass {
        classify_sh(self.sh(t_hours)).expect("trajectory stays inside (0, 1]")
    }

    /// Hours at which the trajectory crosses `threshold` (sh drops below
    /// it), or None when the plateau never reaches it.
    pub fn crossing_hours(&self, threshold: f64) -> Option<f64> {
        if self.decay_per_hour <= 0.0 || threshold <= self.floor || threshold >= 1.0 {
            return None;
        }
        Some(((1.0 - self.floor) / (threshold - self.floor)).ln() / self.decay_per_hour)
    }
}

/// Draw one fruit's trajectory from the cohort profile. The consumer
/// crossing day is sampled around the regime's window and the decay rate
/// solved so that sh hits 0.7 exactly on that day.
pub fn generate_trajectory(
    fruit: FruitId,
    profile: &CohortProfile,
    seed: u64,
) -> Result<ShTrajectory> {
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    profile.validate()?;
    let mut rng = seed::rng(seed, &[purpose::TRAJECTORY, u64::from(fruit.ordinal())]);
    let mean = profile.regime.consumer_crossing_mean_days();
    let sd = profile.regime.consumer_crossing_sd_days() * profile.variability;
    let crossing_days = if sd > 0.0 {
        let normal = Normal::new(mean, sd).map_err(|e| Error::Config(e.to_string()))?;
        normal.sample(&mut rng).max(0.5)
    } else {
        mean
    };
    let floor = if profile.floor_hi > profile.floor_lo {
        rng.random_range(profile.floor_lo..profile.floor_hi)
    } else {
        profile.floor_lo
    };
    let decay_per_hour = ((1.0 - floor) / (0.7 - floor)).ln() / (24.0 * crossing_days);
    Ok(ShTrajectory {
        fruit,
        floor,
        decay_per_hour,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_follow_the_threshold_table() {
        assert_eq!(classify_sh(0.95).unwrap(), RipeningClass::C1);
        assert_eq!(classify_sh(1.0).unwrap(), RipeningClass::C1);
        assert_eq!(classify_sh(0.9).unwrap(), RipeningClass::C1);
        // the boundary belongs to the class whose row it opens
        assert_eq!(classify_sh(0.80).unwrap(), RipeningClass::C2);
        assert_eq!(classify_sh(0.85).unwrap(), RipeningClass::C2);
        assert_eq!(classify_sh(0.7).unwrap(), RipeningClass::C3);
        assert_eq!(classify_sh(0.69).unwrap(), RipeningClass::C4);
        assert_eq!(classify_sh(0.1).unwrap(), RipeningClass::C4);
    }

    #[test]
    fn classification_is_monotone_in_hardness() {
        // harder fruit never classifies riper
        let grid: Vec<f64> = (1..=1000).map(|i| f64::from(i) / 1000.0).collect();
        for pair in grid.windows(2) {
            let softer = classify_sh(pair[0]).unwrap();
            let harder = classify_sh(pair[1]).unwrap();
            assert!(harder <= softer);
        }
    }

    #[test]
    fn out_of_domain_shore_values_are_rejected() {
        assert!(matches!(classify_sh(0.0), Err(Error::ShoreDomain(_))));
        assert!(matches!(classify_sh(-0.1), Err(Error::ShoreDomain(_))));
        assert!(matches!(classify_sh(1.01), Err(Error::ShoreDomain(_))));
        assert!(matches!(classify_sh(f64::NAN), Err(Error::ShoreDomain(_))));
    }

    #[test]
    fn trajectory_starts_at_one_and_decreases() {
        let fruit = FruitId::new(1).unwrap();
        let t = generate_trajectory(fruit, &CohortProfile::default(), 7).unwrap();
        assert_eq!(t.sh(0.0), 1.0);
        let mut prev = 1.0;
        for h in 1..=400 {
            let sh = t.sh(f64::from(h));
            assert!(sh <= prev);
            assert!(sh > 0.0);
            prev = sh;
        }
    }

    #[test]
    fn zero_decay_keeps_the_fruit_unripe() {
        let t = ShTrajectory {
            fruit: FruitId::new(1).unwrap(),
            floor: 0.4,
            decay_per_hour: 0.0,
        };
        for h in [0.0, 24.0, 24.0 * 30.0] {
            assert_eq!(t.sh(h), 1.0);
            assert_eq!(t.class_at(h), RipeningClass::C1);
        }
        assert_eq!(t.crossing_hours(0.7), None);
    }

    #[test]
    fn ambient_cohort_reaches_consumer_class_in_five_to_seven_days() {
        // Monte-Carlo oracle over a seeded 1000-fruit cohort: at least 90%
        // must cross the 0.7 threshold between day 5 and day 7.
        let profile = CohortProfile::default();
        let crossings = monte_carlo_crossings(&profile, 99, 1000);
        let in_window = crossings
            .iter()
            .filter(|&&d| (5.0..=7.0).contains(&d))
            .count();
        assert!(
            in_window as f64 / crossings.len() as f64 >= 0.9,
            "only {in_window}/1000 fruits crossed within [5, 7] days"
        );
    }

    #[test]
    fn accelerated_cohort_reaches_consumer_class_in_three_to_five_days() {
        let profile = CohortProfile::new(Regime::Accelerated);
        let crossings = monte_carlo_crossings(&profile, 123, 1000);
        let in_window = crossings
            .iter()
            .filter(|&&d| (3.0..=5.0).contains(&d))
            .count();
        assert!(in_window as f64 / crossings.len() as f64 >= 0.9);
    }

    fn monte_carlo_crossings(profile: &CohortProfile, seed: u64, n: usize) -> Vec<f64> {
        // FruitId is capped at 128, so reseed in batches to reach n fruits.
        let mut out = Vec::with_capacity(n);
        let mut batch_seed = seed;
        while out.len() < n {
            for ordinal in 1..=128u16 {
                if out.len() == n {
                    break;
                }
                let t =
                    generate_trajectory(FruitId::new(ordinal).unwrap(), profile, batch_seed)
                        .unwrap();
                out.push(t.crossing_hours(0.7).expect("floor below 0.7") / 24.0);
            }
            batch_seed = batch_seed.wrapping_add(1);
        }
        out
    }

    #[test]
    fn class_sequence_over_time_is_monotone() {
        for ordinal in 1..=32 {
            let t = generate_trajectory(
                FruitId::new(ordinal).unwrap(),
                &CohortProfile::default(),
                5,
            )
            .unwrap();
            let mut prev = RipeningClass::C1;
            for h in 0..300 {
                let c = t.class_at(f64::from(h));
                assert!(c >= prev);
                prev = c;
            }
        }
    }

    #[test]
    fn invalid_profile_is_a_configuration_error() {
        let p = CohortProfile {
            floor_hi: 0.8,
            ..CohortProfile::default()
        };
        let r = generate_trajectory(FruitId::new(1).unwrap(), &p, 1);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
