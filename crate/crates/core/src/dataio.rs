//! File formats: the CSV data planes and JSON model/summary documents.
//!
//! The scan log CSV is the contract between acquisition and the pipeline:
//! `day,cycle,timestamp_s,mux,port,slot,position,band,at,sweep,freq_mhz,
//! pin_dbm,read_ok,turnon_dbm,rssi_dbm,phase_deg`, with empty fields for
//! absent indicators. Every writer here round-trips through its reader
//! without loss.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    ConfusionMatrix, EvolutionRow, GroundTruth, ModelVariant, ShDistanceAnalysis,
    SwitchingAnalysis,
};
use crate::classifier::RipenessReport;
use crate::interrogation::{AutoTune, Band, RfSample, ScanLog, SweepKind};
use crate::pipeline::{CycleStamp, FeatureTable, ModelSource, FEATURE_COUNT};
use crate::selection::AucRanking;
use crate::sim::trajectory::{classify_sh, RipeningClass, Threshold};
use crate::svm::SvmModel;
use crate::topology::{TagAddress, TagList, TagPosition};

#[derive(Serialize, Deserialize)]
struct ScanRow {
    day: u16,
    cycle: u16,
    timestamp_s: f64,
    mux: u8,
    port: u8,
    slot: u8,
    position: String,
    band: String,
    at: String,
    sweep: String,
    freq_mhz: f64,
    pin_dbm: f64,
    read_ok: bool,
    turnon_dbm: Option<f64>,
    rssi_dbm: Option<f64>,
    phase_deg: Option<f64>,
}

/// Index of the modality defined by (sweep, band, AT); the inverse of the
/// catalogue layout, used to rebuild samples from CSV rows.
fn modality_index_of(sweep: SweepKind, band: Band, at: AutoTune) -> u8 {
    match sweep {
        SweepKind::Power => match (band, at) {
            (Band::Etsi, AutoTune::On) => 0,
            (Band::Etsi, AutoTune::Off) => 1,
            (Band::Fcc, AutoTune::On) => 2,
            (Band::Fcc, AutoTune::Off) => 3,
        },
        SweepKind::FrequencyFixedPower => match at {
            AutoTune::On => 4,
            AutoTune::Off => 5,
        },
        SweepKind::FrequencyTurnOn => match at {
            AutoTune::On => 6,
            AutoTune::Off => 7,
        },
    }
}

/// Streaming scan-log writer; cycles are appended one log at a time.
pub struct ScanLogWriter {
    writer: csv::Writer<BufWriter<File>>,
    rows: u64,
}

impl ScanLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path)?;
        Ok(ScanLogWriter {
            writer: csv::Writer::from_writer(BufWriter::new(file)),
            rows: 0,
        })
    }

    pub fn write_log(&mut self, log: &ScanLog) -> Result<()> {
        for s in &log.samples {
            self.writer.serialize(ScanRow {
                day: log.day,
                cycle: log.cycle,
                timestamp_s: s.timestamp_s,
                mux: s.address.mux(),
                port: s.address.port(),
                slot: s.address.slot(),
                position: s.address.position().to_string(),
                band: s.band.label().to_string(),
                at: s.autotune.label().to_string(),
                sweep: s.sweep.label().to_string(),
                freq_mhz: s.freq_mhz,
                pin_dbm: s.power_in_dbm,
                read_ok: s.read_ok,
                turnon_dbm: s.turn_on_dbm,
                rssi_dbm: s.rssi_dbm,
                phase_deg: s.phase_deg,
            })?;
            self.rows += 1;
        }
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<u64> {
        self.writer.flush()?;
        Ok(self.rows)
    }
}

pub fn write_scanlog(path: &Path, logs: &[ScanLog]) -> Result<u64> {
    let mut w = ScanLogWriter::create(path)?;
    for log in logs {
        w.write_log(log)?;
    }
    w.finish()
}

/// Read a scan-log CSV back into per-cycle logs. Rows of one cycle must
/// be contiguous and cycles ordered, as the writer produces them.
pub fn read_scanlog(path: &Path) -> Result<Vec<ScanLog>> {
    let file = File::open(path)?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut logs: Vec<ScanLog> = Vec::new();
    for row in reader.deserialize() {
        let row: ScanRow = row?;
        if !row.read_ok && (row.rssi_dbm.is_some() || row.phase_deg.is_some() || row.turnon_dbm.is_some())
        {
            return Err(Error::Data(format!(
                "scan row at day {} cycle {} carries indicators despite read_ok=false",
                row.day, row.cycle
            )));
        }
        let position = TagPosition::parse(&row.position)?;
        let address = TagAddress::new(row.mux, row.port, row.slot, position)?;
        let band = Band::parse(&row.band)?;
        let at = AutoTune::parse(&row.at)?;
        let sweep = SweepKind::parse(&row.sweep)?;
        let sample = RfSample {
            address,
            modality_index: modality_index_of(sweep, band, at),
            band,
            autotune: at,
            sweep,
            freq_mhz: row.freq_mhz,
            power_in_dbm: row.pin_dbm,
            timestamp_s: row.timestamp_s,
            read_ok: row.read_ok,
            turn_on_dbm: row.turnon_dbm,
            rssi_dbm: row.rssi_dbm,
            phase_deg: row.phase_deg,
        };
        match logs.last_mut() {
            Some(log) if log.day == row.day && log.cycle == row.cycle => {
                log.samples.push(sample);
            }
            _ => {
                if logs
                    .iter()
                    .any(|l| l.day == row.day && l.cycle == row.cycle)
                {
                    return Err(Error::Data(format!(
                        "scan rows of day {} cycle {} are not contiguous",
                        row.day, row.cycle
                    )));
                }
                logs.push(ScanLog {
                    day: row.day,
                    cycle: row.cycle,
                    start_s: row.timestamp_s,
                    samples: vec![sample],
                });
            }
        }
    }
    if logs.is_empty() {
        return Err(Error::Data("scan log is empty".into()));
    }
    Ok(logs)
}

#[derive(Serialize, Deserialize)]
struct GroundTruthRow {
    fruit_id: u16,
    day: u16,
    cycle: u16,
    sh: f64,
    true_class: String,
}

pub fn write_ground_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for &fruit in &truth.fruits() {
        for (i, stamp) in truth.stamps.iter().enumerate() {
            let sh = truth.sh(fruit, i).expect("aligned truth");
            w.serialize(GroundTruthRow {
                fruit_id: fruit,
                day: stamp.day,
                cycle: stamp.cycle,
                sh,
                true_class: classify_sh(sh)?.label().to_string(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let file = File::open(path)?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut stamps: Vec<CycleStamp> = Vec::new();
    let mut per_fruit: BTreeMap<u16, Vec<(CycleStamp, f64)>> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: GroundTruthRow = row?;
        let class = classify_sh(row.sh)?;
        if class.label() != row.true_class {
            return Err(Error::Data(format!(
                "fruit {} day {} cycle {}: sh {} is {} but the row claims {}",
                row.fruit_id, row.day, row.cycle, row.sh, class, row.true_class
            )));
        }
        let stamp = CycleStamp {
            day: row.day,
            cycle: row.cycle,
        };
        per_fruit
            .entry(row.fruit_id)
            .or_default()
            .push((stamp, row.sh));
        if !stamps.contains(&stamp) {
            stamps.push(stamp);
        }
    }
    if stamps.is_empty() {
        return Err(Error::Data("ground truth is empty".into()));
    }
    let mut sh = BTreeMap::new();
    for (fruit, rows) in per_fruit {
        if rows.len() != stamps.len() {
            return Err(Error::Data(format!(
                "fruit {fruit} has {} ground-truth rows, expected {}",
                rows.len(),
                stamps.len()
            )));
        }
        for ((stamp, _), expected) in rows.iter().zip(&stamps) {
            if stamp != expected {
                return Err(Error::Data(format!(
                    "fruit {fruit} ground truth visits day {} cycle {} out of order",
                    stamp.day, stamp.cycle
                )));
            }
        }
        sh.insert(fruit, rows.into_iter().map(|(_, v)| v).collect());
    }
    GroundTruth::new(stamps, sh)
}

pub fn write_tag_list(path: &Path, tags: &TagList) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["mux", "port", "slot", "position", "fruit_id", "epc"])?;
    for e in tags.entries() {
        w.write_record([
            e.address.mux().to_string(),
            e.address.port().to_string(),
            e.address.slot().to_string(),
            e.address.position().to_string(),
            e.fruit.ordinal().to_string(),
            e.epc.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tag_list(path: &Path) -> Result<TagList> {
    let file = File::open(path)?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut entries = Vec::new();
    for record in reader.records() {
        let r = record?;
        if r.len() != 6 {
            return Err(Error::Data(format!("tag list row has {} fields", r.len())));
        }
        let parse_u8 = |s: &str| {
            s.parse::<u8>()
                .map_err(|_| Error::Data(format!("bad tag list field {s:?}")))
        };
        let address = TagAddress::new(
            parse_u8(&r[0])?,
            parse_u8(&r[1])?,
            parse_u8(&r[2])?,
            TagPosition::parse(&r[3])?,
        )?;
        let fruit = crate::topology::FruitId::new(
            r[4].parse::<u16>()
                .map_err(|_| Error::Data(format!("bad fruit id {:?}", &r[4])))?,
        )?;
        entries.push(crate::topology::TagEntry {
            address,
            fruit,
            epc: r[5].to_string(),
        });
    }
    TagList::from_entries(entries)
}

/// Feature matrix export: `fruit_id,cycle,model_source,f01..f28` with the
/// global 1-based cycle index.
pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["fruit_id".to_string(), "cycle".to_string(), "model_source".to_string()];
    for f in 1..=FEATURE_COUNT {
        header.push(format!("f{f:02}"));
    }
    w.write_record(&header)?;
    for (fruit, source, cycle_idx, slot) in table.rows() {
        let mut record = vec![
            fruit.to_string(),
            (cycle_idx + 1).to_string(),
            source.label().to_string(),
        ];
        for v in slot.iter() {
            record.push(v.map_or_else(String::new, |x| x.to_string()));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Ranking report: `threshold,model,rank,feature_id,auc`.
pub fn write_selection_report(path: &Path, rankings: &[AucRanking]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["threshold", "model", "rank", "feature_id", "auc"])?;
    for ranking in rankings {
        for (rank, entry) in ranking.entries.iter().enumerate() {
            w.write_record([
                ranking.threshold.label().to_string(),
                ranking.source.label().to_string(),
                (rank + 1).to_string(),
                entry.feature_id.to_string(),
                entry.auc.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Confusion matrices with the three accuracy ratios.
pub fn write_confusion(
    path: &Path,
    confusion: &BTreeMap<(ModelVariant, Threshold), ConfusionMatrix>,
) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([
        "model", "threshold", "tn", "fp", "fn", "tp", "row0_acc", "row1_acc", "overall_acc",
    ])?;
    let fmt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:.6}"));
    for ((variant, threshold), cm) in confusion {
        let acc = cm.accuracy();
        w.write_record([
            variant.label().to_string(),
            threshold.label().to_string(),
            cm.true_neg.to_string(),
            cm.false_pos.to_string(),
            cm.false_neg.to_string(),
            cm.true_pos.to_string(),
            fmt(acc.row0),
            fmt(acc.row1),
            fmt(acc.overall),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Switching-day error histogram: `threshold,d_days,errors`.
pub fn write_switching_histogram(path: &Path, analysis: &SwitchingAnalysis) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["threshold", "d_days", "errors"])?;
    for hist in &analysis.histograms {
        for (d, n) in &hist.bins {
            w.write_record([
                hist.threshold.label().to_string(),
                d.to_string(),
                n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-evaluation hardness distances: `fruit_id,threshold,sh,d,correct`.
pub fn write_sh_distance(path: &Path, analysis: &ShDistanceAnalysis) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["fruit_id", "threshold", "sh", "d", "correct"])?;
    for r in &analysis.records {
        w.write_record([
            r.fruit.to_string(),
            r.threshold.label().to_string(),
            r.sh.to_string(),
            r.d.to_string(),
            r.correct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Class-share evolution: `day,cycle,c1,c2,c3,c4,abstain`.
pub fn write_evolution(path: &Path, rows: &[EvolutionRow]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["day", "cycle", "c1", "c2", "c3", "c4", "abstain"])?;
    for r in rows {
        w.write_record([
            r.day.to_string(),
            r.cycle.to_string(),
            format!("{:.6}", r.shares[0]),
            format!("{:.6}", r.shares[1]),
            format!("{:.6}", r.shares[2]),
            format!("{:.6}", r.shares[3]),
            format!("{:.6}", r.abstain),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-cycle decisions: `fruit_id,day,cycle,th09,th08,th07,class,abstain,enforced`.
pub fn write_reports(path: &Path, reports: &[RipenessReport]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([
        "fruit_id", "day", "cycle", "th09", "th08", "th07", "class", "abstain", "enforced",
    ])?;
    for r in reports {
        w.write_record([
            r.fruit.ordinal().to_string(),
            r.day.to_string(),
            r.cycle.to_string(),
            u8::from(r.states[0]).to_string(),
            u8::from(r.states[1]).to_string(),
            u8::from(r.states[2]).to_string(),
            r.class.map_or_else(String::new, |c| c.label().to_string()),
            r.class.is_none().to_string(),
            r.enforced.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Daily-mode decisions: `fruit_id,day,class` (empty class = abstained).
pub fn write_daily_reports(
    path: &Path,
    daily: &[(u16, u16, Option<RipeningClass>)],
) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["fruit_id", "day", "class"])?;
    for (fruit, day, class) in daily {
        w.write_record([
            fruit.to_string(),
            day.to_string(),
            class.map_or_else(String::new, |c| c.label().to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_model(path: &Path, model: &SvmModel) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, model)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<SvmModel> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Stable file name of one of the six models.
pub fn model_file_name(source: ModelSource, threshold: Threshold) -> String {
    let th = match threshold {
        Threshold::T090 => "090",
        Threshold::T080 => "080",
        Threshold::T070 => "070",
    };
    format!("svm_{}_{th}.json", source.label().to_lowercase())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}
