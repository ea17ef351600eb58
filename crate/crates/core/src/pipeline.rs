//! Raw scan logs to per-fruit feature vectors.
//!
//! The interrogation yields 28 features per tag and cycle: for each of the
//! four (band, auto-tune) contexts, (1) mean turn-on power over the band's
//! turn-on grid, (2) mean RSSI at 30 dBm, (3) mean phase at 30 dBm,
//! (4) RSSI-vs-power slope, (5) phase-vs-power slope, (6) RSSI-vs-frequency
//! slope and (7) the frequency of minimum turn-on power.
//!
//! Each per-tag series is smoothed by a trailing moving average and then
//! normalized against its first valid value: dB-valued and slope features
//! by subtraction, phase features by modular difference. Signals of the
//! eccentric tags B and C are averaged after normalization.
//!
//! Phase-valued series are kept continuous at build time by folding each
//! raw circular mean onto the representative nearest the previous sample;
//! without this the wrap at 0/360 degrees would corrupt the moving
//! average for tags whose phase baseline sits near the wrap.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interrogation::{AutoTune, Band, RfSample, ScanLog, SweepKind};
use crate::topology::{FruitId, TagAddress, TagPosition};

/// Version of the feature catalogue; serialized into every trained model
/// and checked before inference.
pub const CATALOGUE_VERSION: &str = "fc-1";

pub const FEATURE_COUNT: usize = 28;

/// One per-cycle feature vector; index = feature_id - 1.
pub type FeatureSlot = [Option<f64>; FEATURE_COUNT];

/// The seven per-context feature shapes.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum FeatureKind {
    MeanTurnOn,
    MeanRssi,
    MeanPhase,
    RssiPowerSlope,
    PhasePowerSlope,
    RssiFreqSlope,
    MinTurnOnFreq,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 7] = [
        FeatureKind::MeanTurnOn,
        FeatureKind::MeanRssi,
        FeatureKind::MeanPhase,
        FeatureKind::RssiPowerSlope,
        FeatureKind::PhasePowerSlope,
        FeatureKind::RssiFreqSlope,
        FeatureKind::MinTurnOnFreq,
    ];

    pub fn unit(self) -> &'static str {
        match self {
            FeatureKind::MeanTurnOn => "dBm",
            FeatureKind::MeanRssi => "dBm",
            FeatureKind::MeanPhase => "deg",
            FeatureKind::RssiPowerSlope => "dB/dB",
            FeatureKind::PhasePowerSlope => "deg/dB",
            FeatureKind::RssiFreqSlope => "dB/MHz",
            FeatureKind::MinTurnOnFreq => "MHz",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::MeanTurnOn => "turnon_mean",
            FeatureKind::MeanRssi => "rssi_mean",
            FeatureKind::MeanPhase => "phase_mean",
            FeatureKind::RssiPowerSlope => "rssi_power_slope",
            FeatureKind::PhasePowerSlope => "phase_power_slope",
            FeatureKind::RssiFreqSlope => "rssi_freq_slope",
            FeatureKind::MinTurnOnFreq => "turnon_min_freq",
        }
    }

    /// Whether the raw series lives on a circle (degrees).
    fn is_circular(self) -> bool {
        self == FeatureKind::MeanPhase
    }
}

/// How a series is normalized against its first valid value.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum NormMode {
    /// Divide by the first value; first output is 1.0.
    Ratio,
    /// Subtract the first value; first output is 0.0.
    Difference,
    /// Subtract the first value, mapping into (-180, 180]; first output 0.0.
    CircularDifference,
}

/// One catalogue entry.
#[derive(Clone, Copy, Debug)]
pub struct FeatureDef {
    pub id: u8,
    pub band: Band,
    pub autotune: AutoTune,
    pub kind: FeatureKind,
    pub norm: NormMode,
}

impl FeatureDef {
    pub fn name(&self) -> String {
        format!(
            "{}_{}_at_{}",
            self.kind.name(),
            self.band.label().to_lowercase(),
            self.autotune.label()
        )
    }
}

const CONTEXTS: [(Band, AutoTune); 4] = [
    (Band::Etsi, AutoTune::On),
    (Band::Etsi, AutoTune::Off),
    (Band::Fcc, AutoTune::On),
    (Band::Fcc, AutoTune::Off),
];

/// The 28-entry feature catalogue: feature_id = context * 7 + kind + 1.
pub fn catalogue() -> &'static [FeatureDef; FEATURE_COUNT] {
    static CATALOGUE: OnceLock<[FeatureDef; FEATURE_COUNT]> = OnceLock::new();
    CATALOGUE.get_or_init(|| {
        let mut defs = Vec::with_capacity(FEATURE_COUNT);
        for (ctx, (band, autotune)) in CONTEXTS.into_iter().enumerate() {
            for (k, kind) in FeatureKind::ALL.into_iter().enumerate() {
                let norm = if kind.is_circular() {
                    NormMode::CircularDifference
                } else {
                    NormMode::Difference
                };
                defs.push(FeatureDef {
                    id: (ctx * 7 + k + 1) as u8,
                    band,
                    autotune,
                    kind,
                    norm,
                });
            }
        }
        defs.try_into().expect("28 catalogue entries")
    })
}

/// Human-readable catalogue listing, shipped with the repository as
/// `docs/feature_catalogue.txt`; a test keeps the file in sync.
pub fn catalogue_document() -> String {
    let mut out = String::new();
    out.push_str(&format!("feature catalogue version {CATALOGUE_VERSION}\n"));
    out.push_str(
        "\nPer tag and cycle, 28 features: 7 shapes per (band, auto-tune) context.\n\
         Series are smoothed by a trailing moving average (default 7 cycles)\n\
         and normalized against their first valid value per the mode below.\n\
         Phase series are kept continuous across the 0/360 wrap before\n\
         filtering; their normalization maps into (-180, 180].\n\n",
    );
    out.push_str("id   name                            raw unit  normalization\n");
    for def in catalogue() {
        let mode = match def.norm {
            NormMode::Ratio => "ratio vs first value",
            NormMode::Difference => "difference vs first value",
            NormMode::CircularDifference => "circular difference vs first value",
        };
        out.push_str(&format!(
            "f{:02}  {:<30}  {:<8}  {}\n",
            def.id,
            def.name(),
            def.kind.unit(),
            mode
        ));
    }
    out.push_str(
        "\nSources per shape: turnon_mean and turnon_min_freq from the turn-on\n\
         ramp sweep (4 channels per band); rssi_mean, phase_mean and\n\
         rssi_freq_slope from the fixed 30 dBm frequency sweep; the power\n\
         slopes from the 10..30 dBm power sweep at the band's reference\n\
         channel.\n",
    );
    out
}

/// Which tag model a feature vector feeds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum ModelSource {
    /// The basal tag alone.
    A,
    /// Tags B and C, averaged.
    Bc,
}

impl ModelSource {
    pub const ALL: [ModelSource; 2] = [ModelSource::A, ModelSource::Bc];

    pub fn label(self) -> &'static str {
        match self {
            ModelSource::A => "A",
            ModelSource::Bc => "BC",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(ModelSource::A),
            "BC" => Ok(ModelSource::Bc),
            other => Err(Error::Data(format!("unknown model source {other:?}"))),
        }
    }
}

/// Time-ordered values of one feature of one tag.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorSeries {
    pub fruit: FruitId,
    pub position: TagPosition,
    pub feature_id: u8,
    /// (global cycle index, value), cycle indices strictly increasing.
    pub points: Vec<(u32, f64)>,
}

fn fold180(d: f64) -> f64 {
    let r = (d + 180.0).rem_euclid(360.0) - 180.0;
    if r == -180.0 {
        180.0
    } else {
        r
    }
}

fn circular_mean_deg(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0u32);
    for v in values {
        let r = v.to_radians();
        s += r.sin();
        c += r.cos();
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let mean = s.atan2(c).to_degrees();
    Some(if mean < 0.0 { mean + 360.0 } else { mean })
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Raw 28-feature vector of one tag from the rows of one cycle.
fn extract_tag_cycle(rows: &[&RfSample]) -> FeatureSlot {
    let mut out: FeatureSlot = [None; FEATURE_COUNT];
    for def in catalogue() {
        let (band, at) = (def.band, def.autotune);
        let value = match def.kind {
            FeatureKind::MeanTurnOn => {
                let values: Vec<f64> = rows
                    .iter()
                    .filter(|s| {
                        s.sweep == SweepKind::FrequencyTurnOn
                            && s.band == band
                            && s.autotune == at
                    })
                    .filter_map(|s| s.turn_on_dbm)
                    .collect();
                if values.is_empty() {
                    None
                } else {
                    Some(values.iter().sum::<f64>() / values.len() as f64)
                }
            }
            FeatureKind::MeanRssi => {
                let values: Vec<f64> = rows
                    .iter()
                    .filter(|s| {
                        s.sweep == SweepKind::FrequencyFixedPower
                            && s.band == band
                            && s.autotune == at
                            && s.read_ok
                    })
                    .filter_map(|s| s.rssi_dbm)
                    .collect();
                if values.is_empty() {
                    None
                } else {
                    Some(values.iter().sum::<f64>() / values.len() as f64)
                }
            }
            FeatureKind::MeanPhase => circular_mean_deg(
                rows.iter()
                    .filter(|s| {
                        s.sweep == SweepKind::FrequencyFixedPower
                            && s.band == band
                            && s.autotune == at
                            && s.read_ok
                    })
                    .filter_map(|s| s.phase_deg),
            ),
            FeatureKind::RssiPowerSlope => {
                let points: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|s| {
                        s.sweep == SweepKind::Power
                            && s.band == band
                            && s.autotune == at
                            && s.read_ok
                    })
                    .filter_map(|s| s.rssi_dbm.map(|r| (s.power_in_dbm, r)))
                    .collect();
                least_squares_slope(&points)
            }
            FeatureKind::PhasePowerSlope => {
                let raw: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|s| {
                        s.sweep == SweepKind::Power
                            && s.band == band
                            && s.autotune == at
                            && s.read_ok
                    })
                    .filter_map(|s| s.phase_deg.map(|p| (s.power_in_dbm, p)))
                    .collect();
                circular_mean_deg(raw.iter().map(|p| p.1)).and_then(|center| {
                    let folded: Vec<(f64, f64)> = raw
                        .iter()
                        .map(|&(x, p)| (x, center + fold180(p - center)))
                        .collect();
                    least_squares_slope(&folded)
                })
            }
            FeatureKind::RssiFreqSlope => {
                let points: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|s| {
                        s.sweep == SweepKind::FrequencyFixedPower
                            && s.band == band
                            && s.autotune == at
                            && s.read_ok
                    })
                    .filter_map(|s| s.rssi_dbm.map(|r| (s.freq_mhz, r)))
                    .collect();
                least_squares_slope(&points)
            }
            FeatureKind::MinTurnOnFreq => rows
                .iter()
                .filter(|s| {
                    s.sweep == SweepKind::FrequencyTurnOn && s.band == band && s.autotune == at
                })
                .filter_map(|s| s.turn_on_dbm.map(|t| (t, s.freq_mhz)))
                .fold(None::<(f64, f64)>, |best, (t, f)| match best {
                    None => Some((t, f)),
                    Some((bt, bf)) if t < bt || (t == bt && f < bf) => Some((t, f)),
                    best => best,
                })
                .map(|(_, f)| f),
        };
        out[usize::from(def.id) - 1] = value;
    }
    out
}

/// Extract the per-tag feature series from a sequence of cycle logs.
/// Logs must be ordered with strictly increasing (day, cycle).
pub fn extract_features(logs: &[ScanLog]) -> Result<Vec<IndicatorSeries>> {
    let mut prev: Option<(u16, u16)> = None;
    for log in logs {
        let key = (log.day, log.cycle);
        if let Some(p) = prev {
            if key <= p {
                return Err(Error::Data(format!(
                    "scan logs out of order: day {} cycle {} after day {} cycle {}",
                    log.day, log.cycle, p.0, p.1
                )));
            }
        }
        prev = Some(key);
    }

    let mut series: BTreeMap<(TagAddress, u8), Vec<(u32, f64)>> = BTreeMap::new();
    for (cycle_idx, log) in logs.iter().enumerate() {
        let mut per_tag: BTreeMap<TagAddress, Vec<&RfSample>> = BTreeMap::new();
        for s in &log.samples {
            per_tag.entry(s.address).or_default().push(s);
        }
        for (addr, rows) in per_tag {
            let slot = extract_tag_cycle(&rows);
            for (i, v) in slot.iter().enumerate() {
                if let Some(v) = v {
                    series
                        .entry((addr, (i + 1) as u8))
                        .or_default()
                        .push((cycle_idx as u32, *v));
                }
            }
        }
    }

    Ok(series
        .into_iter()
        .map(|((addr, feature_id), mut points)| {
            let def = catalogue()[usize::from(feature_id) - 1];
            if def.kind.is_circular() {
                // keep the circular series continuous across cycles
                for i in 1..points.len() {
                    let prev = points[i - 1].1;
                    points[i].1 = prev + fold180(points[i].1 - prev);
                }
            }
            IndicatorSeries {
                fruit: addr.fruit(),
                position: addr.position(),
                feature_id,
                points,
            }
        })
        .collect())
}

/// Causal trailing-window mean over cycle indices. The first `window - 1`
/// cycles average the available prefix; gaps inside the window are
/// skipped. An empty series stays empty.
pub fn moving_average(series: &IndicatorSeries, window: u32) -> IndicatorSeries {
    let window = window.max(1);
    let mut points = Vec::with_capacity(series.points.len());
    for (i, &(cycle, _)) in series.points.iter().enumerate() {
        let lo = cycle.saturating_sub(window - 1);
        let mut sum = 0.0;
        let mut n = 0u32;
        for &(c, v) in series.points[..=i].iter().rev() {
            if c < lo {
                break;
            }
            sum += v;
            n += 1;
        }
        points.push((cycle, sum / f64::from(n)));
    }
    IndicatorSeries {
        points,
        ..series.clone()
    }
}

/// Normalize a series against its first valid value. Ratio series whose
/// first value is zero fall back to difference normalization; the returned
/// flag marks that switch.
pub fn normalize_initial(
    series: &IndicatorSeries,
    mode: NormMode,
) -> Result<(IndicatorSeries, bool)> {
    let &(_, first) = series
        .points
        .first()
        .ok_or_else(|| Error::Data("cannot normalize a series with no valid value".into()))?;
    let mut switched = false;
    let mode = match mode {
        NormMode::Ratio if first == 0.0 => {
            switched = true;
            NormMode::Difference
        }
        m => m,
    };
    let points = series
        .points
        .iter()
        .map(|&(c, v)| {
            let nv = match mode {
                NormMode::Ratio => v / first,
                NormMode::Difference => v - first,
                NormMode::CircularDifference => fold180(v - first),
            };
            (c, nv)
        })
        .collect();
    Ok((
        IndicatorSeries {
            points,
            ..series.clone()
        },
        switched,
    ))
}

/// Element-wise mean of the B and C vectors; a value present on only one
/// side passes through, a value present on neither stays a gap.
pub fn combine_bc(b: &FeatureSlot, c: &FeatureSlot) -> FeatureSlot {
    let mut out: FeatureSlot = [None; FEATURE_COUNT];
    for i in 0..FEATURE_COUNT {
        out[i] = match (b[i], c[i]) {
            (Some(x), Some(y)) => Some((x + y) / 2.0),
            (Some(x), None) => Some(x),
            (None, Some(y)) => Some(y),
            (None, None) => None,
        };
    }
    out
}

/// Identifies one measurement cycle of a campaign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleStamp {
    pub day: u16,
    pub cycle: u16,
}

/// Filtered, normalized per-fruit feature vectors for both model sources.
#[derive(Clone, Debug)]
pub struct FeatureTable {
    pub stamps: Vec<CycleStamp>,
    pub fruits: Vec<u16>,
    /// How many ratio-mode series fell back to difference normalization.
    pub switched_normalizations: u32,
    data: BTreeMap<(u16, ModelSource), Vec<FeatureSlot>>,
}

impl FeatureTable {
    /// Run the full pipeline over ordered cycle logs.
    pub fn build(logs: &[ScanLog], window: u32) -> Result<FeatureTable> {
        let stamps: Vec<CycleStamp> = logs
            .iter()
            .map(|l| CycleStamp {
                day: l.day,
                cycle: l.cycle,
            })
            .collect();
        let n_cycles = stamps.len();
        // every scanned fruit belongs to the table, readable or not:
        // all-missed tags still feed the abstention accounting downstream
        let scanned: std::collections::BTreeSet<u16> = logs
            .iter()
            .flat_map(|l| l.samples.iter().map(|s| s.address.fruit().ordinal()))
            .collect();
        let series = extract_features(logs)?;

        let mut switched_normalizations = 0;
        let mut per_tag: BTreeMap<(u16, TagPosition), Vec<FeatureSlot>> = BTreeMap::new();
        for s in series {
            let def = catalogue()[usize::from(s.feature_id) - 1];
            let filtered = moving_average(&s, window);
            let (normalized, switched) = normalize_initial(&filtered, def.norm)?;
            if switched {
                switched_normalizations += 1;
            }
            let slots = per_tag
                .entry((s.fruit.ordinal(), s.position))
                .or_insert_with(|| vec![[None; FEATURE_COUNT]; n_cycles]);
            for (cycle, v) in normalized.points {
                slots[cycle as usize][usize::from(s.feature_id) - 1] = Some(v);
            }
        }

        let fruits: Vec<u16> = scanned.into_iter().collect();
        let empty = vec![[None; FEATURE_COUNT]; n_cycles];
        let mut data = BTreeMap::new();
        for &fruit in &fruits {
            let a = per_tag
                .get(&(fruit, TagPosition::A))
                .cloned()
                .unwrap_or_else(|| empty.clone());
            let b = per_tag.get(&(fruit, TagPosition::B)).unwrap_or(&empty);
            let c = per_tag.get(&(fruit, TagPosition::C)).unwrap_or(&empty);
            let bc: Vec<FeatureSlot> = b
                .iter()
                .zip(c.iter())
                .map(|(bs, cs)| combine_bc(bs, cs))
                .collect();
            data.insert((fruit, ModelSource::A), a);
            data.insert((fruit, ModelSource::Bc), bc);
        }
        Ok(FeatureTable {
            stamps,
            fruits,
            switched_normalizations,
            data,
        })
    }

    /// Assemble a table from prebuilt per-(fruit, source) vectors; every
    /// vector sequence must cover all cycles.
    pub fn from_vectors(
        stamps: Vec<CycleStamp>,
        data: BTreeMap<(u16, ModelSource), Vec<FeatureSlot>>,
    ) -> Result<FeatureTable> {
        for ((fruit, source), slots) in &data {
            if slots.len() != stamps.len() {
                return Err(Error::Data(format!(
                    "fruit {fruit} source {} has {} cycles, expected {}",
                    source.label(),
                    slots.len(),
                    stamps.len()
                )));
            }
        }
        let fruits: Vec<u16> = data
            .keys()
            .map(|&(f, _)| f)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(FeatureTable {
            stamps,
            fruits,
            switched_normalizations: 0,
            data,
        })
    }

    pub fn n_cycles(&self) -> usize {
        self.stamps.len()
    }

    /// Feature vector of (fruit, source) at a cycle; all-gap vectors count
    /// as absent.
    pub fn vector(&self, fruit: u16, source: ModelSource, cycle_idx: usize) -> Option<&FeatureSlot> {
        let slot = self.data.get(&(fruit, source))?.get(cycle_idx)?;
        if slot.iter().any(Option::is_some) {
            Some(slot)
        } else {
            None
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = (u16, ModelSource, usize, &FeatureSlot)> {
        self.data.iter().flat_map(|(&(fruit, source), slots)| {
            slots
                .iter()
                .enumerate()
                .map(move |(i, s)| (fruit, source, i, s))
        })
    }
}
