//! End-to-end commands tying simulation, training, classification and
//! evaluation to the file formats. Every command is a pure function of
//! its configuration plus input files; outputs embed the configuration
//! and its hash for provenance.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{daily_mode, FruitClassifier, ModelVote, RipenessReport, ThresholdDecision};
use crate::config::ExperimentConfig;
use crate::dataio;
use crate::error::{Error, Result};
use crate::evaluation::{
    evolution_summary, lofo_cv, sh_distance_analysis, switching_day_analysis, GroundTruth,
    LofoOutcome, ModelVariant, ShDistanceAnalysis, SwitchingAnalysis,
};
use crate::interrogation::{run_scan, schedule_daily, ScanLog, ScanSource};
use crate::pipeline::{CycleStamp, FeatureTable, ModelSource, CATALOGUE_VERSION};
use crate::selection::{select_top, AucRanking};
use crate::sim::channel::{Channel, SimSource};
use crate::sim::trajectory::{generate_trajectory, Threshold};
use crate::svm::{train, SvmModel, TrainMeta};
use crate::topology::{FruitId, TagList};

/// Build the simulation source (channel + cohort trajectories) of a run.
pub fn build_source(config: &ExperimentConfig) -> Result<SimSource> {
    let channel = Channel::new(config.channel.clone(), config.seed)?;
    let trajectories = (1..=config.cohort.fruits)
        .map(|f| generate_trajectory(FruitId::new(f)?, &config.cohort.profile, config.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimSource::new(channel, trajectories))
}

/// Run the scheduled campaign in memory: one scan log per cycle plus the
/// ground truth sampled at each cycle start.
pub fn simulate_in_memory(config: &ExperimentConfig) -> Result<(Vec<ScanLog>, GroundTruth)> {
    config.validate()?;
    let tags = TagList::standard();
    let source = build_source(config)?;
    let n_tags = config
        .scan
        .selection
        .fruits(Some(&source.loaded_fruits()))?
        .len()
        * 3;
    let slots = schedule_daily(
        config.cohort.cycles_per_day,
        config.cohort.days,
        config.scan.scan_duration_s(n_tags),
    )?;

    let mut logs = Vec::with_capacity(slots.len());
    let mut stamps = Vec::with_capacity(slots.len());
    let mut sh: BTreeMap<u16, Vec<f64>> = BTreeMap::new();
    for slot in slots {
        let log = run_scan(
            &tags,
            &mut ScanSource::Sim(&source),
            &config.scan,
            slot,
            config.cohort.cycles_per_day,
        )?;
        stamps.push(CycleStamp {
            day: slot.day,
            cycle: slot.cycle,
        });
        for fruit in 1..=config.cohort.fruits {
            let traj = source
                .trajectory(FruitId::new(fruit)?)
                .expect("cohort fruits have trajectories");
            // durometer reading at the cycle start, rounded as written
            let value = (traj.sh(slot.start_hours) * 1e6).round() / 1e6;
            sh.entry(fruit).or_default().push(value);
        }
        logs.push(log);
    }
    Ok((logs, GroundTruth::new(stamps, sh)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimSummary {
    pub config_hash: String,
    pub fruits: u16,
    pub days: u16,
    pub cycles_per_day: u16,
    pub fruit_evaluations: u64,
    pub scanlog_rows: u64,
    pub scan_duration_s: f64,
    /// Mean ground-truth switching day per threshold (crossing fruits).
    pub mean_switching_day: Vec<Option<f64>>,
}

/// Simulate a campaign and write `scanlog.csv`, `ground_truth.csv`,
/// `tag_list.csv` and `config.json` into `out_dir`.
pub fn cmd_simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<SimSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let tags = TagList::standard();
    let source = build_source(config)?;
    let selected = config
        .scan
        .selection
        .fruits(Some(&source.loaded_fruits()))?;
    let n_tags = selected.len() * 3;
    let scan_duration_s = config.scan.scan_duration_s(n_tags);
    let slots = schedule_daily(
        config.cohort.cycles_per_day,
        config.cohort.days,
        scan_duration_s,
    )?;

    let mut writer = dataio::ScanLogWriter::create(&out_dir.join("scanlog.csv"))?;
    let mut stamps = Vec::with_capacity(slots.len());
    let mut sh: BTreeMap<u16, Vec<f64>> = BTreeMap::new();
    for slot in slots {
        let log = run_scan(
            &tags,
            &mut ScanSource::Sim(&source),
            &config.scan,
            slot,
            config.cohort.cycles_per_day,
        )?;
        writer.write_log(&log)?;
        stamps.push(CycleStamp {
            day: slot.day,
            cycle: slot.cycle,
        });
        for fruit in 1..=config.cohort.fruits {
            let traj = source.trajectory(FruitId::new(fruit)?).unwrap();
            let value = (traj.sh(slot.start_hours) * 1e6).round() / 1e6;
            sh.entry(fruit).or_default().push(value);
        }
    }
    let scanlog_rows = writer.finish()?;
    let truth = GroundTruth::new(stamps, sh)?;
    dataio::write_ground_truth(&out_dir.join("ground_truth.csv"), &truth)?;
    dataio::write_tag_list(&out_dir.join("tag_list.csv"), &tags)?;
    std::fs::write(out_dir.join("config.json"), config.canonical_json())?;

    let mean_switching_day = Threshold::ALL
        .map(|th| {
            let days: Vec<f64> = truth
                .fruits()
                .iter()
                .filter_map(|&f| truth.switching_day(f, th).map(f64::from))
                .collect();
            if days.is_empty() {
                None
            } else {
                Some(days.iter().sum::<f64>() / days.len() as f64)
            }
        })
        .to_vec();
    let summary = SimSummary {
        config_hash: config.hash(),
        fruits: config.cohort.fruits,
        days: config.cohort.days,
        cycles_per_day: config.cohort.cycles_per_day,
        fruit_evaluations: u64::from(config.cohort.fruits)
            * u64::from(config.cohort.days)
            * u64::from(config.cohort.cycles_per_day),
        scanlog_rows,
        scan_duration_s,
        mean_switching_day,
    };
    dataio::write_json(&out_dir.join("sim_summary.json"), &summary)?;
    println!(
        "simulated {} fruits x {} days x {} cycles: {} fruit-evaluations, {} scan rows",
        summary.fruits,
        summary.days,
        summary.cycles_per_day,
        summary.fruit_evaluations,
        summary.scanlog_rows
    );
    for (th, mean) in Threshold::ALL.iter().zip(&summary.mean_switching_day) {
        match mean {
            Some(d) => println!("  threshold {th}: mean switching day {d:.2}"),
            None => println!("  threshold {th}: no fruit crosses"),
        }
    }
    Ok(summary)
}

fn check_alignment(table: &FeatureTable, truth: &GroundTruth) -> Result<()> {
    if table.stamps != truth.stamps {
        let t = table
            .stamps
            .iter()
            .zip(&truth.stamps)
            .find(|(a, b)| a != b);
        return Err(Error::Data(match t {
            Some((a, b)) => format!(
                "cycle mismatch: scan log has day {} cycle {}, ground truth day {} cycle {}",
                a.day, a.cycle, b.day, b.cycle
            ),
            None => format!(
                "scan log covers {} cycles, ground truth {}",
                table.stamps.len(),
                truth.stamps.len()
            ),
        }));
    }
    let truth_fruits = truth.fruits();
    for &f in &table.fruits {
        if !truth_fruits.contains(&f) {
            return Err(Error::Data(format!(
                "fruit {f} appears in the scan log but not in the ground truth"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub catalogue_version: String,
    pub fruits: usize,
    pub cycles: usize,
    pub models: Vec<String>,
    pub selections: Vec<(String, String, Vec<u8>)>,
    pub switched_normalizations: u32,
}

/// Train the six production models on a full campaign and write the model
/// bundle: `svm_*.json`, `selection_report.csv`, `features.csv`,
/// `manifest.json` and `config.json`.
pub fn cmd_train(
    config: &ExperimentConfig,
    scanlog: &Path,
    truth_path: &Path,
    out_dir: &Path,
) -> Result<TrainSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let logs = dataio::read_scanlog(scanlog)?;
    let truth = dataio::read_ground_truth(truth_path)?;
    let table = FeatureTable::build(&logs, config.pipeline.window)?;
    check_alignment(&table, &truth)?;

    let mut rankings = Vec::new();
    let mut models: Vec<(ModelSource, Threshold, SvmModel)> = Vec::new();
    for source in ModelSource::ALL {
        let k = match source {
            ModelSource::A => config.selection.top_k_a,
            ModelSource::Bc => config.selection.top_k_bc,
        };
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
            let selected = select_top(&ranking, k)?;
            rankings.push(ranking);
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
                fold: None,
            };
            models.push((source, threshold, train(&train_rows, &selected, &config.svm, meta)?));
        }
    }

    let mut model_files = Vec::new();
    let mut selections = Vec::new();
    for (source, threshold, model) in &models {
        let name = dataio::model_file_name(*source, *threshold);
        dataio::write_model(&out_dir.join(&name), model)?;
        selections.push((
            threshold.label().to_string(),
            source.label().to_string(),
            model.feature_ids.clone(),
        ));
        model_files.push(name);
    }
    dataio::write_selection_report(&out_dir.join("selection_report.csv"), &rankings)?;
    dataio::write_features(&out_dir.join("features.csv"), &table)?;
    std::fs::write(out_dir.join("config.json"), config.canonical_json())?;
    let summary = TrainSummary {
        config_hash: config.hash(),
        catalogue_version: CATALOGUE_VERSION.to_string(),
        fruits: table.fruits.len(),
        cycles: table.n_cycles(),
        models: model_files,
        selections,
        switched_normalizations: table.switched_normalizations,
    };
    dataio::write_json(&out_dir.join("manifest.json"), &summary)?;
    println!(
        "trained 6 models on {} fruits x {} cycles; bundle in {}",
        summary.fruits,
        summary.cycles,
        out_dir.display()
    );
    Ok(summary)
}

/// Everything an evaluation computes, before serialization.
pub struct EvaluationBundle {
    pub outcome: LofoOutcome,
    pub switching: SwitchingAnalysis,
    pub sh_distance: ShDistanceAnalysis,
    pub evolution: Vec<crate::evaluation::EvolutionRow>,
}

/// Run the leave-one-fruit-out evaluation and both error analyses.
pub fn evaluate_in_memory(
    config: &ExperimentConfig,
    logs: &[ScanLog],
    truth: &GroundTruth,
) -> Result<EvaluationBundle> {
    let table = FeatureTable::build(logs, config.pipeline.window)?;
    check_alignment(&table, truth)?;
    let outcome = lofo_cv(&table, truth, &config.lofo())?;
    let fused_records = &outcome.records[&ModelVariant::Fused];
    let switching = switching_day_analysis(fused_records, truth, config.evaluation.day_tolerance);
    let sh_distance = sh_distance_analysis(fused_records, truth, config.evaluation.sh_band);
    let evolution = evolution_summary(&outcome.reports[&ModelVariant::Fused]);
    let expected = (outcome.folds.iter().filter(|f| f.skipped.is_none()).count()
        * truth.n_cycles()) as u64;
    outcome.accounting.check(expected)?;
    Ok(EvaluationBundle {
        outcome,
        switching,
        sh_distance,
        evolution,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub model: String,
    pub threshold: String,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tp: u64,
    pub row0: Option<f64>,
    pub row1: Option<f64>,
    pub overall: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config_hash: String,
    pub catalogue_version: String,
    pub fruits: usize,
    pub cycles: usize,
    pub total_evaluations: u64,
    pub classified: u64,
    pub abstained: u64,
    pub abstention_rate: f64,
    pub accuracy: Vec<AccuracyEntry>,
    pub switching_tolerance_days: u16,
    pub switching_base_accuracy: f64,
    pub switching_tolerant_accuracy: f64,
    pub switching_mass_within_one_day: Option<f64>,
    pub switching_undefined_errors: u64,
    pub sh_band: f64,
    pub sh_base_accuracy: f64,
    pub sh_tolerant_accuracy: f64,
    pub skipped_folds: Vec<(u16, String)>,
}

fn summarize(config: &ExperimentConfig, truth: &GroundTruth, bundle: &EvaluationBundle) -> EvalSummary {
    let outcome = &bundle.outcome;
    let mut accuracy = Vec::new();
    for ((variant, threshold), cm) in &outcome.confusion {
        let acc = cm.accuracy();
        accuracy.push(AccuracyEntry {
            model: variant.label().to_string(),
            threshold: threshold.label().to_string(),
            tn: cm.true_neg,
            fp: cm.false_pos,
            fn_: cm.false_neg,
            tp: cm.true_pos,
            row0: acc.row0,
            row1: acc.row1,
            overall: acc.overall,
        });
    }
    EvalSummary {
        config_hash: config.hash(),
        catalogue_version: CATALOGUE_VERSION.to_string(),
        fruits: truth.fruits().len(),
        cycles: truth.n_cycles(),
        total_evaluations: outcome.accounting.total(),
        classified: outcome.accounting.classified,
        abstained: outcome.accounting.abstained,
        abstention_rate: outcome.accounting.abstention_rate(),
        accuracy,
        switching_tolerance_days: bundle.switching.tolerance_days,
        switching_base_accuracy: bundle.switching.base_accuracy,
        switching_tolerant_accuracy: bundle.switching.tolerant_accuracy,
        switching_mass_within_one_day: bundle.switching.mass_within(1),
        switching_undefined_errors: bundle
            .switching
            .histograms
            .iter()
            .map(|h| h.undefined_errors)
            .sum(),
        sh_band: bundle.sh_distance.band,
        sh_base_accuracy: bundle.sh_distance.base_accuracy,
        sh_tolerant_accuracy: bundle.sh_distance.tolerant_accuracy,
        skipped_folds: outcome
            .folds
            .iter()
            .filter_map(|f| f.skipped.clone().map(|s| (f.fruit, s)))
            .collect(),
    }
}

/// Evaluate a campaign end to end and write the evaluation bundle.
pub fn cmd_evaluate(
    config: &ExperimentConfig,
    scanlog: &Path,
    truth_path: &Path,
    out_dir: &Path,
) -> Result<EvalSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let logs = dataio::read_scanlog(scanlog)?;
    let truth = dataio::read_ground_truth(truth_path)?;
    let bundle = evaluate_in_memory(config, &logs, &truth)?;

    dataio::write_confusion(&out_dir.join("confusion_matrices.csv"), &bundle.outcome.confusion)?;
    dataio::write_switching_histogram(&out_dir.join("switching_histogram.csv"), &bundle.switching)?;
    dataio::write_sh_distance(&out_dir.join("sh_distance.csv"), &bundle.sh_distance)?;
    dataio::write_evolution(&out_dir.join("evolution.csv"), &bundle.evolution)?;
    dataio::write_reports(
        &out_dir.join("per_cycle_reports.csv"),
        &bundle.outcome.reports[&ModelVariant::Fused],
    )?;
    std::fs::write(out_dir.join("config.json"), config.canonical_json())?;
    let summary = summarize(config, &truth, &bundle);
    dataio::write_json(&out_dir.join("summary.json"), &summary)?;

    println!(
        "evaluated {} fruits x {} cycles: {} classified, {} abstained ({:.1}%)",
        summary.fruits,
        summary.cycles,
        summary.classified,
        summary.abstained,
        100.0 * summary.abstention_rate
    );
    for entry in &summary.accuracy {
        if entry.model == "fused" {
            println!(
                "  threshold {}: overall accuracy {}",
                entry.threshold,
                entry
                    .overall
                    .map_or_else(|| "n/a".into(), |v| format!("{:.1}%", 100.0 * v))
            );
        }
    }
    println!(
        "  switching-day accuracy {:.1}% -> {:.1}% at +/-{} day(s)",
        100.0 * summary.switching_base_accuracy,
        100.0 * summary.switching_tolerant_accuracy,
        summary.switching_tolerance_days
    );
    println!(
        "  hardness-band accuracy {:.1}% -> {:.1}% at +/-{:.0}%",
        100.0 * summary.sh_base_accuracy,
        100.0 * summary.sh_tolerant_accuracy,
        100.0 * summary.sh_band
    );
    Ok(summary)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifySummary {
    pub config_hash: String,
    pub fruits: usize,
    pub cycles: usize,
    pub classified: u64,
    pub abstained: u64,
}

/// Load a trained model bundle and classify a scan log (no ground truth
/// involved); writes per-cycle and daily-mode reports.
pub fn cmd_classify(
    config: &ExperimentConfig,
    models_dir: &Path,
    scanlog: &Path,
    out_dir: &Path,
) -> Result<ClassifySummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let logs = dataio::read_scanlog(scanlog)?;
    let table = FeatureTable::build(&logs, config.pipeline.window)?;

    let mut models: BTreeMap<(Threshold, ModelSource), SvmModel> = BTreeMap::new();
    for source in ModelSource::ALL {
        for threshold in Threshold::ALL {
            let path = models_dir.join(dataio::model_file_name(source, threshold));
            let model = dataio::read_model(&path)?;
            model.check_catalogue()?;
            models.insert((threshold, source), model);
        }
    }

    let mut reports: Vec<RipenessReport> = Vec::new();
    let mut daily: Vec<(u16, u16, Option<crate::sim::trajectory::RipeningClass>)> = Vec::new();
    for &fruit in &table.fruits {
        let mut clf = FruitClassifier::new(FruitId::new(fruit)?, config.classifier.clone());
        let mut fruit_reports = Vec::with_capacity(table.n_cycles());
        for cycle_idx in 0..table.n_cycles() {
            let decisions = Threshold::ALL.map(|threshold| {
                let vote = |source: ModelSource| -> ModelVote {
                    let prediction = table.vector(fruit, source, cycle_idx).and_then(|slot| {
                        let model = &models[&(threshold, source)];
                        let x = model.project(slot)?;
                        Some(model.predict(&x).expect("projection matches model").0)
                    });
                    ModelVote::from_prediction(prediction)
                };
                ThresholdDecision::new(threshold, vote(ModelSource::A), vote(ModelSource::Bc))
            });
            let stamp = table.stamps[cycle_idx];
            fruit_reports.push(clf.advance(stamp.day, stamp.cycle, decisions));
        }
        let mut days: Vec<u16> = fruit_reports.iter().map(|r| r.day).collect();
        days.dedup();
        for day in days {
            let day_reports: Vec<RipenessReport> = fruit_reports
                .iter()
                .filter(|r| r.day == day)
                .cloned()
                .collect();
            daily.push((fruit, day, daily_mode(&day_reports)));
        }
        reports.extend(fruit_reports);
    }

    let abstained = reports.iter().filter(|r| r.class.is_none()).count() as u64;
    let summary = ClassifySummary {
        config_hash: config.hash(),
        fruits: table.fruits.len(),
        cycles: table.n_cycles(),
        classified: reports.len() as u64 - abstained,
        abstained,
    };
    dataio::write_reports(&out_dir.join("per_cycle_reports.csv"), &reports)?;
    dataio::write_daily_reports(&out_dir.join("daily_reports.csv"), &daily)?;
    dataio::write_json(&out_dir.join("classify_summary.json"), &summary)?;
    println!(
        "classified {} fruits x {} cycles: {} decisions, {} abstentions",
        summary.fruits, summary.cycles, summary.classified, summary.abstained
    );
    Ok(summary)
}

/// Compare two output directories byte for byte; returns the first
/// mismatching file name if any.
pub fn diff_dirs(a: &Path, b: &Path) -> Result<Option<PathBuf>> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(a)?
        .map(|e| Ok(e?.path().file_name().unwrap().into()))
        .collect::<Result<_>>()?;
    names.sort();
    for name in names {
        let fa = std::fs::read(a.join(&name))?;
        let fb = std::fs::read(b.join(&name))?;
        if fa != fb {
            return Ok(Some(name));
        }
    }
    Ok(None)
}
