//! Composition of the six binary SVMs into per-fruit ripeness decisions.
//!
//! Per threshold, the basal-tag model and the averaged B/C model vote and
//! the votes fuse through a logic OR: if either model sees the threshold
//! crossed, it counts as crossed. A cycle where neither model has data
//! abstains.
//!
//! Because hardness only decreases, the per-threshold states latch: once
//! a threshold reads crossed, later cycles keep it crossed, and crossing
//! a later threshold (say 0.7) promotes the earlier ones (0.9, 0.8). All
//! fruits count as unripe at time zero, which resolves leading
//! abstentions to the not-crossed state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::trajectory::{RipeningClass, Threshold};
use crate::topology::FruitId;

/// Output of one model for one (fruit, cycle, threshold): crossed, not
/// crossed, or no data.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ModelVote {
    Zero,
    One,
    Missing,
}

impl ModelVote {
    pub fn from_prediction(p: Option<bool>) -> Self {
        match p {
            Some(true) => ModelVote::One,
            Some(false) => ModelVote::Zero,
            None => ModelVote::Missing,
        }
    }
}

/// Fused per-threshold state before monotonic enforcement.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum FusedState {
    Zero,
    One,
    Abstain,
}

/// Logic-OR fusion over the present model outputs; abstains only when
/// both models are silent.
pub fn fuse(a: ModelVote, bc: ModelVote) -> FusedState {
    use ModelVote::*;
    match (a, bc) {
        (One, _) | (_, One) => FusedState::One,
        (Zero, _) | (_, Zero) => FusedState::Zero,
        (Missing, Missing) => FusedState::Abstain,
    }
}

/// Per-threshold decision record of one cycle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub threshold: Threshold,
    pub vote_a: ModelVote,
    pub vote_bc: ModelVote,
    pub fused: FusedState,
}

impl ThresholdDecision {
    pub fn new(threshold: Threshold, vote_a: ModelVote, vote_bc: ModelVote) -> Self {
        ThresholdDecision {
            threshold,
            vote_a,
            vote_bc,
            fused: fuse(vote_a, vote_bc),
        }
    }
}

/// One resolved cycle of the latched series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolvedCycle {
    pub state: bool,
    /// True when latching or the time-zero prior overrode the raw value.
    pub corrected: bool,
}

/// Latch one threshold's fused series: once crossed, stay crossed.
/// Abstentions resolve to the latch (time-zero prior of not-crossed
/// before the first crossing) and never reset it.
pub fn enforce_monotonic(series: &[FusedState]) -> Vec<ResolvedCycle> {
    let mut latched = false;
    series
        .iter()
        .map(|s| {
            let (state, corrected) = match s {
                FusedState::One => {
                    latched = true;
                    (true, false)
                }
                FusedState::Zero => (latched, latched),
                FusedState::Abstain => (latched, true),
            };
            ResolvedCycle { state, corrected }
        })
        .collect()
}

/// Map resolved per-threshold states to a class, repairing hierarchy
/// inconsistencies: a crossed lower threshold implies the higher ones
/// (hardness passed them on the way down). Returns the class, the
/// repaired states and whether repair changed anything.
pub fn map_decisions(states: [bool; 3], repair: bool) -> (RipeningClass, [bool; 3], bool) {
    let mut repaired = states;
    let mut changed = false;
    if repair {
        // Threshold order is [0.9, 0.8, 0.7]; crossing index k implies
        // crossing every index below k.
        for k in (0..3).rev() {
            if repaired[k] {
                for higher in repaired[..k].iter_mut().filter(|s| !**s) {
                    *higher = true;
                    changed = true;
                }
            }
        }
    }
    let count = repaired.iter().filter(|&&s| s).count() as u8;
    let class = RipeningClass::from_ordinal(1 + count).expect("count <= 3");
    (class, repaired, changed)
}

/// Classifier behaviour switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Promote higher thresholds when a lower one reads crossed.
    pub hierarchy_repair: bool,
    /// Abstain instead of repairing when the raw pattern is inconsistent
    /// (a lower threshold crossed while a higher one reads not-crossed).
    pub abstain_on_discordance: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hierarchy_repair: true,
            abstain_on_discordance: false,
        }
    }
}

/// Per-cycle classification outcome of one fruit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RipenessReport {
    pub fruit: FruitId,
    pub day: u16,
    pub cycle: u16,
    /// Latched, repaired per-threshold states in [0.9, 0.8, 0.7] order.
    pub states: [bool; 3],
    /// None when the classification abstained this cycle.
    pub class: Option<RipeningClass>,
    /// True when latching, the time-zero prior or hierarchy repair
    /// overrode a raw value this cycle.
    pub enforced: bool,
    pub decisions: [ThresholdDecision; 3],
}

/// Streaming per-fruit classifier state; cycles must be fed in order.
#[derive(Clone, Debug)]
pub struct FruitClassifier {
    fruit: FruitId,
    config: ClassifierConfig,
    latched: [bool; 3],
}

impl FruitClassifier {
    pub fn new(fruit: FruitId, config: ClassifierConfig) -> Self {
        FruitClassifier {
            fruit,
            config,
            latched: [false; 3],
        }
    }

    /// Fold one cycle of per-threshold decisions into the latch and emit
    /// the report. The report abstains when every threshold was silent
    /// this cycle (or, if configured, on raw hierarchy discordance).
    pub fn advance(&mut self, day: u16, cycle: u16, decisions: [ThresholdDecision; 3]) -> RipenessReport {
        let mut corrected = false;
        let mut states = [false; 3];
        for (k, d) in decisions.iter().enumerate() {
            match d.fused {
                FusedState::One => {
                    self.latched[k] = true;
                }
                FusedState::Zero => {
                    if self.latched[k] {
                        corrected = true;
                    }
                }
                FusedState::Abstain => {
                    corrected = true;
                }
            }
            states[k] = self.latched[k];
        }

        let all_silent = decisions.iter().all(|d| d.fused == FusedState::Abstain);

        let raw_discordant = (0..3).any(|k| {
            decisions[k].fused == FusedState::One
                && (0..k).any(|lower| decisions[lower].fused == FusedState::Zero)
        });

        let (class, repaired, repair_changed) = map_decisions(states, self.config.hierarchy_repair);
        if repair_changed {
            // promotion latches permanently, otherwise the class series
            // could fall back next cycle
            self.latched = repaired;
            corrected = true;
        }

        let abstained =
            all_silent || (self.config.abstain_on_discordance && raw_discordant);
        RipenessReport {
            fruit: self.fruit,
            day,
            cycle,
            states: repaired,
            class: if abstained { None } else { Some(class) },
            enforced: corrected || repair_changed,
            decisions,
        }
    }
}

/// Statistic mode over the non-abstaining cycle classes of one day; ties
/// break toward the riper class. Returns None when every cycle abstained.
pub fn daily_mode(reports: &[RipenessReport]) -> Option<RipeningClass> {
    let mut counts = [0u32; 4];
    for r in reports {
        if let Some(c) = r.class {
            counts[usize::from(c.ordinal()) - 1] += 1;
        }
    }
    let best = *counts.iter().max().unwrap();
    if best == 0 {
        return None;
    }
    // scan riper classes first so ties resolve toward them
    for ordinal in (1..=4u8).rev() {
        if counts[usize::from(ordinal) - 1] == best {
            return Some(RipeningClass::from_ordinal(ordinal).unwrap());
        }
    }
    unreachable!()
}

/// Exact abstention accounting over a set of reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub classified: u64,
    pub abstained: u64,
}

impl Accounting {
    pub fn tally(reports: &[RipenessReport]) -> Self {
        let abstained = reports.iter().filter(|r| r.class.is_none()).count() as u64;
        Accounting {
            classified: reports.len() as u64 - abstained,
            abstained,
        }
    }

    pub fn total(&self) -> u64 {
        self.classified + self.abstained
    }

    pub fn abstention_rate(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.abstained as f64 / self.total() as f64
        }
    }

    pub fn check(&self, expected_total: u64) -> Result<()> {
        if self.total() == expected_total {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "classified {} + abstained {} != total evaluations {}",
                self.classified, self.abstained, expected_total
            )))
        }
    }
}
