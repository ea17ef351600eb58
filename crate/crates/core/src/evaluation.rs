//! Leave-one-fruit-out cross-validation, confusion matrices, and the
//! switching-day / hardness-distance error analyses.
//!
//! One fold holds out every sample of one fruit (all cycles, all tags),
//! trains the six SVMs (two sources x three thresholds) on the rest with
//! fold-local feature selection, and classifies the held-out fruit
//! through the full fusion/latching chain. Folds rotate over the fruits
//! in ordinal order and their pooled counts feed the confusion matrices.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    Accounting, ClassifierConfig, FruitClassifier, ModelVote, RipenessReport, ThresholdDecision,
};
use crate::error::{Error, Result};
use crate::pipeline::{CycleStamp, FeatureTable, ModelSource};
use crate::selection::{select_top, AucRanking};
use crate::sim::trajectory::{classify_sh, RipeningClass, Threshold};
use crate::svm::{train, SvmModel, SvmParams, TrainMeta};
use crate::topology::FruitId;

/// Ground-truth hardness per (fruit, cycle).
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub stamps: Vec<CycleStamp>,
    sh: BTreeMap<u16, Vec<f64>>,
}

impl GroundTruth {
    pub fn new(stamps: Vec<CycleStamp>, sh: BTreeMap<u16, Vec<f64>>) -> Result<Self> {
        for (fruit, values) in &sh {
            if values.len() != stamps.len() {
                return Err(Error::Data(format!(
                    "ground truth for fruit {fruit} has {} cycles, expected {}",
                    values.len(),
                    stamps.len()
                )));
            }
        }
        Ok(GroundTruth { stamps, sh })
    }

    pub fn fruits(&self) -> Vec<u16> {
        self.sh.keys().copied().collect()
    }

    pub fn n_cycles(&self) -> usize {
        self.stamps.len()
    }

    pub fn sh(&self, fruit: u16, cycle_idx: usize) -> Option<f64> {
        self.sh.get(&fruit)?.get(cycle_idx).copied()
    }

    /// True crossing state of (fruit, cycle) for a threshold.
    pub fn state(&self, fruit: u16, cycle_idx: usize, threshold: Threshold) -> Option<bool> {
        self.sh(fruit, cycle_idx).map(|sh| threshold.crossed_by(sh))
    }

    pub fn class(&self, fruit: u16, cycle_idx: usize) -> Option<RipeningClass> {
        self.sh(fruit, cycle_idx).and_then(|sh| classify_sh(sh).ok())
    }

    /// Daily-mode ground-truth class (ties toward the riper class).
    pub fn daily_class(&self, fruit: u16, day: u16) -> Option<RipeningClass> {
        let mut counts = [0u32; 4];
        for (i, stamp) in self.stamps.iter().enumerate() {
            if stamp.day == day {
                if let Some(c) = self.class(fruit, i) {
                    counts[usize::from(c.ordinal()) - 1] += 1;
                }
            }
        }
        let best = *counts.iter().max().unwrap();
        if best == 0 {
            return None;
        }
        (1..=4u8)
            .rev()
            .find(|&o| counts[usize::from(o) - 1] == best)
            .map(|o| RipeningClass::from_ordinal(o).unwrap())
    }

    /// The switching day: first day whose daily-mode ground-truth class
    /// crosses the threshold; None when the fruit never crosses.
    pub fn switching_day(&self, fruit: u16, threshold: Threshold) -> Option<u16> {
        let mut days: Vec<u16> = self.stamps.iter().map(|s| s.day).collect();
        days.dedup();
        let needed = threshold.class_on_crossing();
        days.into_iter()
            .find(|&d| self.daily_class(fruit, d).is_some_and(|c| c >= needed))
    }
}

/// Binary confusion counts for one (model, threshold) stratum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_pos: u64,
}

/// Row-wise and overall accuracies; a component with an empty denominator
/// is absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTriple {
    pub row0: Option<f64>,
    pub row1: Option<f64>,
    pub overall: Option<f64>,
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (false, false) => self.true_neg += 1,
            (false, true) => self.false_pos += 1,
            (true, false) => self.false_neg += 1,
            (true, true) => self.true_pos += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_neg + self.false_pos + self.false_neg + self.true_pos
    }

    /// TN/(TN+FP) for row 0, TP/(FN+TP) for row 1 and the overall ratio.
    pub fn accuracy(&self) -> AccuracyTriple {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                None
            } else {
                Some(num as f64 / den as f64)
            }
        };
        AccuracyTriple {
            row0: ratio(self.true_neg, self.true_neg + self.false_pos),
            row1: ratio(self.true_pos, self.false_neg + self.true_pos),
            overall: ratio(self.true_pos + self.true_neg, self.total()),
        }
    }
}

/// Which decision pipeline a pooled result belongs to.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum ModelVariant {
    /// Basal-tag model alone.
    TagA,
    /// Averaged B/C model alone.
    TagsBc,
    /// Logic-OR fusion of both.
    Fused,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [ModelVariant::TagA, ModelVariant::TagsBc, ModelVariant::Fused];

    pub fn label(self) -> &'static str {
        match self {
            ModelVariant::TagA => "A",
            ModelVariant::TagsBc => "BC",
            ModelVariant::Fused => "fused",
        }
    }
}

/// One pooled test evaluation (non-abstained).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalRecord {
    pub fruit: u16,
    pub cycle_idx: u32,
    pub threshold: Threshold,
    pub predicted: bool,
    pub truth: bool,
}

impl EvalRecord {
    pub fn correct(&self) -> bool {
        self.predicted == self.truth
    }
}

/// Per-fold provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fruit: u16,
    pub skipped: Option<String>,
    pub train_fruits: Vec<u16>,
    /// Selected feature ids per (threshold, source).
    pub selections: Vec<(Threshold, ModelSource, Vec<u8>)>,
}

/// Cross-validation configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LofoConfig {
    /// Features kept for the basal-tag model.
    pub top_k_a: usize,
    /// Features kept for the B/C model.
    pub top_k_bc: usize,
    /// Recompute the AUC selection inside each fold (leakage-safe); the
    /// alternative selects once on the full dataset.
    pub per_fold_selection: bool,
    pub svm: SvmParams,
    pub classifier: ClassifierConfig,
}

impl Default for LofoConfig {
    fn default() -> Self {
        LofoConfig {
            top_k_a: 5,
            top_k_bc: 10,
            per_fold_selection: true,
            svm: SvmParams::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl LofoConfig {
    fn k_for(&self, source: ModelSource) -> usize {
        match source {
            ModelSource::A => self.top_k_a,
            ModelSource::Bc => self.top_k_bc,
        }
    }
}

/// Pooled outcome of a full rotation.
#[derive(Clone, Debug)]
pub struct LofoOutcome {
    pub folds: Vec<FoldSummary>,
    pub reports: BTreeMap<ModelVariant, Vec<RipenessReport>>,
    pub records: BTreeMap<ModelVariant, Vec<EvalRecord>>,
    pub confusion: BTreeMap<(ModelVariant, Threshold), ConfusionMatrix>,
    /// Abstention accounting of the fused pipeline.
    pub accounting: Accounting,
}

impl LofoOutcome {
    pub fn overall_accuracy(&self, variant: ModelVariant, threshold: Threshold) -> Option<f64> {
        self.confusion
            .get(&(variant, threshold))
            .and_then(|cm| cm.accuracy().overall)
    }
}

struct FoldOutput {
    summary: FoldSummary,
    reports: BTreeMap<ModelVariant, Vec<RipenessReport>>,
    records: BTreeMap<ModelVariant, Vec<EvalRecord>>,
}

/// The six models of one fold, keyed by (threshold, source).
type FoldModels = BTreeMap<(Threshold, ModelSource), SvmModel>;

fn train_fold_models(
    table: &FeatureTable,
    truth: &GroundTruth,
    config: &LofoConfig,
    held_out: u16,
    fold_index: u32,
    global_selection: Option<&BTreeMap<(Threshold, ModelSource), Vec<u8>>>,
) -> Result<(FoldModels, FoldSummary)> {
    let train_fruits: Vec<u16> = table
        .fruits
        .iter()
        .copied()
        .filter(|&f| f != held_out)
        .collect();
    let mut summary = FoldSummary {
        fruit: held_out,
        skipped: None,
        train_fruits: train_fruits.clone(),
        selections: Vec::new(),
    };
    let mut models = BTreeMap::new();
    for source in ModelSource::ALL {
        // labelled training vectors of this source, one per (fruit, cycle)
        let mut rows: Vec<(&crate::pipeline::FeatureSlot, usize, u16)> = Vec::new();
        for &fruit in &train_fruits {
            for cycle_idx in 0..table.n_cycles() {
                if let Some(slot) = table.vector(fruit, source, cycle_idx) {
                    rows.push((slot, cycle_idx, fruit));
                }
            }
        }
        for threshold in Threshold::ALL {
            let labelled: Vec<(&crate::pipeline::FeatureSlot, bool)> = rows
                .iter()
                .filter_map(|&(slot, cycle_idx, fruit)| {
                    truth.state(fruit, cycle_idx, threshold).map(|l| (slot, l))
                })
                .collect();
            let selected = match global_selection {
                Some(global) => global
                    .get(&(threshold, source))
                    .cloned()
                    .expect("global selection covers all strata"),
                None => {
                    let ranking = AucRanking::compute(threshold, source, &labelled);
                    select_top(&ranking, config.k_for(source))?
                }
            };
            let train_rows: Vec<(Vec<f64>, bool)> = labelled
                .iter()
                .filter_map(|(slot, label)| {
                    selected
                        .iter()
                        .map(|&id| slot[usize::from(id) - 1])
                        .collect::<Option<Vec<f64>>>()
                        .map(|x| (x, *label))
                })
                .collect();
            let meta = TrainMeta {
                threshold: Some(threshold.label().to_string()),
                source: Some(source.label().to_string()),
                fold: Some(fold_index),
            };
            let model = train(&train_rows, &selected, &config.svm, meta)?;
            summary.selections.push((threshold, source, selected));
            models.insert((threshold, source), model);
        }
    }
    Ok((models, summary))
}

/// Classify one fruit's cycle sequence with a set of six models, through
/// the requested variant pipeline.
fn classify_fruit(
    table: &FeatureTable,
    models: &FoldModels,
    classifier: &ClassifierConfig,
    fruit: u16,
    variant: ModelVariant,
) -> Vec<RipenessReport> {
    let fruit_id = FruitId::new(fruit).expect("table fruits are valid");
    let mut clf = FruitClassifier::new(fruit_id, classifier.clone());
    let mut reports = Vec::with_capacity(table.n_cycles());
    for cycle_idx in 0..table.n_cycles() {
        let vote = |source: ModelSource, threshold: Threshold| -> ModelVote {
            let prediction = table.vector(fruit, source, cycle_idx).and_then(|slot| {
                let model = &models[&(threshold, source)];
                let x = model.project(slot)?;
                Some(model.predict(&x).expect("projected width matches").0)
            });
            ModelVote::from_prediction(prediction)
        };
        let decisions = Threshold::ALL.map(|threshold| {
            let (a, bc) = match variant {
                ModelVariant::TagA => (vote(ModelSource::A, threshold), ModelVote::Missing),
                ModelVariant::TagsBc => (ModelVote::Missing, vote(ModelSource::Bc, threshold)),
                ModelVariant::Fused => (
                    vote(ModelSource::A, threshold),
                    vote(ModelSource::Bc, threshold),
                ),
            };
            ThresholdDecision::new(threshold, a, bc)
        });
        let stamp = table.stamps[cycle_idx];
        reports.push(clf.advance(stamp.day, stamp.cycle, decisions));
    }
    reports
}

/// Full leave-one-fruit-out rotation.
pub fn lofo_cv(table: &FeatureTable, truth: &GroundTruth, config: &LofoConfig) -> Result<LofoOutcome> {
    if table.fruits.len() < 2 {
        return Err(Error::Config(
            "leave-one-fruit-out needs at least two fruits".into(),
        ));
    }
    if table.n_cycles() != truth.n_cycles() {
        return Err(Error::Data(format!(
            "feature table has {} cycles, ground truth {}",
            table.n_cycles(),
            truth.n_cycles()
        )));
    }
    for &fruit in &table.fruits {
        if truth.sh(fruit, 0).is_none() {
            return Err(Error::Data(format!(
                "fruit {fruit} has features but no ground truth"
            )));
        }
    }

    let global_selection = if config.per_fold_selection {
        None
    } else {
        let mut global = BTreeMap::new();
        for source in ModelSource::ALL {
            let mut rows: Vec<(&crate::pipeline::FeatureSlot, usize, u16)> = Vec::new();
            for &fruit in &table.fruits {
                for cycle_idx in 0..table.n_cycles() {
                    if let Some(slot) = table.vector(fruit, source, cycle_idx) {
                        rows.push((slot, cycle_idx, fruit));
                    }
                }
            }
            for threshold in Threshold::ALL {
                let labelled: Vec<(&crate::pipeline::FeatureSlot, bool)> = rows
                    .iter()
                    .filter_map(|&(slot, cycle_idx, fruit)| {
                        truth.state(fruit, cycle_idx, threshold).map(|l| (slot, l))
                    })
                    .collect();
                let ranking = AucRanking::compute(threshold, source, &labelled);
                global.insert(
                    (threshold, source),
                    select_top(&ranking, config.k_for(source))?,
                );
            }
        }
        Some(global)
    };

    let fold_outputs: Vec<FoldOutput> = table
        .fruits
        .par_iter()
        .enumerate()
        .map(|(fold_index, &held_out)| {
            match train_fold_models(
                table,
                truth,
                config,
                held_out,
                fold_index as u32,
                global_selection.as_ref(),
            ) {
                Ok((models, summary)) => {
                    assert!(
                        !summary.train_fruits.contains(&held_out),
                        "fold {held_out} leaks its own fruit"
                    );
                    let mut reports = BTreeMap::new();
                    let mut records = BTreeMap::new();
                    for variant in ModelVariant::ALL {
                        let fruit_reports = classify_fruit(
                            table,
                            &models,
                            &config.classifier,
                            held_out,
                            variant,
                        );
                        let mut variant_records = Vec::new();
                        for (cycle_idx, report) in fruit_reports.iter().enumerate() {
                            for (k, threshold) in Threshold::ALL.into_iter().enumerate() {
                                if report.decisions[k].fused
                                    == crate::classifier::FusedState::Abstain
                                {
                                    continue;
                                }
                                if let Some(t) =
                                    truth.state(held_out, cycle_idx, threshold)
                                {
                                    variant_records.push(EvalRecord {
                                        fruit: held_out,
                                        cycle_idx: cycle_idx as u32,
                                        threshold,
                                        predicted: report.states[k],
                                        truth: t,
                                    });
                                }
                            }
                        }
                        reports.insert(variant, fruit_reports);
                        records.insert(variant, variant_records);
                    }
                    FoldOutput {
                        summary,
                        reports,
                        records,
                    }
                }
                Err(Error::SingleClass) => FoldOutput {
                    summary: FoldSummary {
                        fruit: held_out,
                        skipped: Some("training set single-class for a threshold".into()),
                        train_fruits: Vec::new(),
                        selections: Vec::new(),
                    },
                    reports: BTreeMap::new(),
                    records: BTreeMap::new(),
                },
                Err(Error::SelectionShortfall { usable, requested }) => FoldOutput {
                    summary: FoldSummary {
                        fruit: held_out,
                        skipped: Some(format!(
                            "only {usable} features rankable, {requested} requested"
                        )),
                        train_fruits: Vec::new(),
                        selections: Vec::new(),
                    },
                    reports: BTreeMap::new(),
                    records: BTreeMap::new(),
                },
                Err(e) => panic!("fold {held_out} failed: {e}"),
            }
        })
        .collect();

    let mut outcome = LofoOutcome {
        folds: Vec::new(),
        reports: ModelVariant::ALL.iter().map(|&v| (v, Vec::new())).collect(),
        records: ModelVariant::ALL.iter().map(|&v| (v, Vec::new())).collect(),
        confusion: BTreeMap::new(),
        accounting: Accounting::default(),
    };
    for mut fold in fold_outputs {
        for variant in ModelVariant::ALL {
            if let Some(r) = fold.reports.remove(&variant) {
                outcome.reports.get_mut(&variant).unwrap().extend(r);
            }
            if let Some(r) = fold.records.remove(&variant) {
                outcome.records.get_mut(&variant).unwrap().extend(r);
            }
        }
        outcome.folds.push(fold.summary);
    }
    for (&variant, records) in &outcome.records {
        for r in records {
            outcome
                .confusion
                .entry((variant, r.threshold))
                .or_default()
                .record(r.truth, r.predicted);
        }
    }
    outcome.accounting = Accounting::tally(&outcome.reports[&ModelVariant::Fused]);
    Ok(outcome)
}

/// Error histogram over the temporal distance to the true switching day.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SwitchingDayHistogram {
    pub threshold: Threshold,
    /// D = (day of the misclassified sample) - (true switching day).
    pub bins: BTreeMap<i32, u64>,
    /// Errors on fruits that never cross this threshold in ground truth.
    pub undefined_errors: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SwitchingAnalysis {
    pub histograms: Vec<SwitchingDayHistogram>,
    pub tolerance_days: u16,
    pub base_accuracy: f64,
    /// Accuracy when errors within +/- tolerance days are forgiven.
    pub tolerant_accuracy: f64,
}

impl SwitchingAnalysis {
    /// Fraction of the binned error mass within |D| <= window.
    pub fn mass_within(&self, window: i32) -> Option<f64> {
        let total: u64 = self.histograms.iter().map(|h| h.bins.values().sum::<u64>()).sum();
        if total == 0 {
            return None;
        }
        let near: u64 = self
            .histograms
            .iter()
            .flat_map(|h| h.bins.iter())
            .filter(|(d, _)| d.abs() <= window)
            .map(|(_, n)| n)
            .sum();
        Some(near as f64 / total as f64)
    }
}

/// Bin every misclassified sample by its distance to the true switching
/// day and compute the day-tolerant accuracy.
pub fn switching_day_analysis(
    records: &[EvalRecord],
    truth: &GroundTruth,
    tolerance_days: u16,
) -> SwitchingAnalysis {
    let mut histograms: BTreeMap<Threshold, SwitchingDayHistogram> = Threshold::ALL
        .into_iter()
        .map(|t| {
            (
                t,
                SwitchingDayHistogram {
                    threshold: t,
                    bins: BTreeMap::new(),
                    undefined_errors: 0,
                },
            )
        })
        .collect();
    let mut correct = 0u64;
    let mut forgiven = 0u64;
    for r in records {
        if r.correct() {
            correct += 1;
            continue;
        }
        let day = i32::from(truth.stamps[r.cycle_idx as usize].day);
        let hist = histograms.get_mut(&r.threshold).unwrap();
        match truth.switching_day(r.fruit, r.threshold) {
            Some(d0) => {
                let d = day - i32::from(d0);
                *hist.bins.entry(d).or_insert(0) += 1;
                if d.abs() <= i32::from(tolerance_days) {
                    forgiven += 1;
                }
            }
            None => hist.undefined_errors += 1,
        }
    }
    let total = records.len() as u64;
    let base_accuracy = if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    };
    let tolerant_accuracy = if total == 0 {
        0.0
    } else {
        (correct + forgiven) as f64 / total as f64
    };
    SwitchingAnalysis {
        histograms: histograms.into_values().collect(),
        tolerance_days,
        base_accuracy,
        tolerant_accuracy,
    }
}

/// One evaluation's distance to the decision threshold.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShDistanceRecord {
    pub fruit: u16,
    pub threshold: Threshold,
    pub sh: f64,
    /// d = measured SH - threshold.
    pub d: f64,
    pub correct: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShDistanceAnalysis {
    pub records: Vec<ShDistanceRecord>,
    /// Relative half-width of the forgiven dead-band around the threshold.
    pub band: f64,
    pub base_accuracy: f64,
    pub tolerant_accuracy: f64,
}

/// Mark every evaluation against the measured hardness and compute the
/// dead-band-tolerant accuracy: errors with |SH - TH| <= band * TH are
/// forgiven.
pub fn sh_distance_analysis(
    records: &[EvalRecord],
    truth: &GroundTruth,
    band: f64,
) -> ShDistanceAnalysis {
    let mut out = Vec::with_capacity(records.len());
    let mut correct = 0u64;
    let mut forgiven = 0u64;
    for r in records {
        let sh = truth
            .sh(r.fruit, r.cycle_idx as usize)
            .expect("records come from evaluated fruits");
        let d = sh - r.threshold.value();
        if r.correct() {
            correct += 1;
        } else if d.abs() <= band * r.threshold.value() {
            forgiven += 1;
        }
        out.push(ShDistanceRecord {
            fruit: r.fruit,
            threshold: r.threshold,
            sh,
            d,
            correct: r.correct(),
        });
    }
    let total = records.len() as u64;
    let base_accuracy = if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    };
    let tolerant_accuracy = if total == 0 {
        0.0
    } else {
        (correct + forgiven) as f64 / total as f64
    };
    ShDistanceAnalysis {
        records: out,
        band,
        base_accuracy,
        tolerant_accuracy,
    }
}

/// Class shares of one cycle, classifier output taken at face value.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvolutionRow {
    pub day: u16,
    pub cycle: u16,
    /// Shares of C1..C4 over all fruits of the cycle.
    pub shares: [f64; 4],
    pub abstain: f64,
}

/// Per-cycle class-share table; shares plus the abstention column sum to
/// one.
pub fn evolution_summary(reports: &[RipenessReport]) -> Vec<EvolutionRow> {
    let mut per_cycle: BTreeMap<(u16, u16), ([u64; 4], u64, u64)> = BTreeMap::new();
    for r in reports {
        let entry = per_cycle.entry((r.day, r.cycle)).or_insert(([0; 4], 0, 0));
        match r.class {
            Some(c) => entry.0[usize::from(c.ordinal()) - 1] += 1,
            None => entry.1 += 1,
        }
        entry.2 += 1;
    }
    per_cycle
        .into_iter()
        .map(|((day, cycle), (counts, abstained, total))| {
            let total = total as f64;
            EvolutionRow {
                day,
                cycle,
                shares: [
                    counts[0] as f64 / total,
                    counts[1] as f64 / total,
                    counts[2] as f64 / total,
                    counts[3] as f64 / total,
                ],
                abstain: abstained as f64 / total,
            }
        })
        .collect()
}
