//! Reader scan procedure: the eight interrogation modalities, the
//! MUX -> antenna -> tag selection loop, timing accounting and the raw
//! sample stream.
//!
//! Each tag is interrogated inside a fixed 35-second slot. The slot hosts
//! four base sweeps, each run with auto-tuning enabled and disabled:
//!
//! 1. power sweep in the ETSI band at the band's reference channel;
//! 2. power sweep in the FCC band;
//! 3. frequency sweep over both bands at a fixed 30 dBm;
//! 4. frequency sweep over both bands measuring the turn-on power by an
//!    ascending ramp (2 dB coarse steps, 1 dB refinement).
//!
//! Every (frequency, power) query occupies one fixed dwell interval, and
//! the worst-case query plan is checked against the slot at configuration
//! time, so a full-trolley scan lasts exactly 384 slots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::channel::SimSource;
use crate::topology::{FruitId, TagAddress, TagList};

/// UHF regulatory band.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Band {
    /// European allocation, 865-868 MHz.
    Etsi,
    /// North-American allocation, 903-928 MHz.
    Fcc,
}

const ETSI_CHANNELS: [f64; 4] = [865.0, 866.0, 867.0, 868.0];
const FCC_CHANNELS: [f64; 26] = [
    903.0, 904.0, 905.0, 906.0, 907.0, 908.0, 909.0, 910.0, 911.0, 912.0, 913.0, 914.0, 915.0,
    916.0, 917.0, 918.0, 919.0, 920.0, 921.0, 922.0, 923.0, 924.0, 925.0, 926.0, 927.0, 928.0,
];
const ETSI_TURN_ON: [f64; 4] = [865.0, 866.0, 867.0, 868.0];
const FCC_TURN_ON: [f64; 4] = [903.0, 911.0, 919.0, 927.0];

impl Band {
    pub const BOTH: [Band; 2] = [Band::Etsi, Band::Fcc];

    pub fn index(self) -> u64 {
        match self {
            Band::Etsi => 0,
            Band::Fcc => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Band::Etsi => "ETSI",
            Band::Fcc => "FCC",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ETSI" => Ok(Band::Etsi),
            "FCC" => Ok(Band::Fcc),
            other => Err(Error::Data(format!("unknown band {other:?}"))),
        }
    }

    pub fn center_mhz(self) -> f64 {
        match self {
            Band::Etsi => 866.5,
            Band::Fcc => 915.5,
        }
    }

    /// Channel grid of the fixed-power frequency sweep (1 MHz spacing).
    pub fn fixed_sweep_freqs(self) -> &'static [f64] {
        match self {
            Band::Etsi => &ETSI_CHANNELS,
            Band::Fcc => &FCC_CHANNELS,
        }
    }

    /// Coarser grid used by the turn-on ramp sweep; the ramp is expensive,
    /// so it only fits the tag slot on a reduced set of channels.
    pub fn turn_on_freqs(self) -> &'static [f64] {
        match self {
            Band::Etsi => &ETSI_TURN_ON,
            Band::Fcc => &FCC_TURN_ON,
        }
    }

    /// Reference channel of the power sweep.
    pub fn power_sweep_freq(self) -> f64 {
        match self {
            Band::Etsi => 866.0,
            Band::Fcc => 915.0,
        }
    }

    pub fn of_freq(freq_mhz: f64) -> Band {
        if freq_mhz < 900.0 {
            Band::Etsi
        } else {
            Band::Fcc
        }
    }
}

/// Auto-tuning state of the tag chip during the interrogation.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum AutoTune {
    On,
    Off,
}

impl AutoTune {
    pub fn index(self) -> u64 {
        match self {
            AutoTune::On => 0,
            AutoTune::Off => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AutoTune::On => "on",
            AutoTune::Off => "off",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(AutoTune::On),
            "off" => Ok(AutoTune::Off),
            other => Err(Error::Data(format!("unknown auto-tune state {other:?}"))),
        }
    }
}

/// Sweep shape of one modality.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum SweepKind {
    /// Interrogation power swept at the band's reference channel.
    Power,
    /// Frequency swept over both bands at a fixed 30 dBm.
    FrequencyFixedPower,
    /// Frequency swept over both bands, measuring the turn-on power.
    FrequencyTurnOn,
}

impl SweepKind {
    pub fn label(self) -> &'static str {
        match self {
            SweepKind::Power => "power",
            SweepKind::FrequencyFixedPower => "freq",
            SweepKind::FrequencyTurnOn => "turnon",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(SweepKind::Power),
            "freq" => Ok(SweepKind::FrequencyFixedPower),
            "turnon" => Ok(SweepKind::FrequencyTurnOn),
            other => Err(Error::Data(format!("unknown sweep kind {other:?}"))),
        }
    }
}

/// One of the eight interrogation modalities (4 base modes x 2 AT states).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Modality {
    pub index: u8,
    pub sweep: SweepKind,
    /// Band of a power sweep; frequency sweeps cover both bands.
    pub band: Option<Band>,
    pub autotune: AutoTune,
}

impl Modality {
    fn bands(&self) -> &'static [Band] {
        match self.band {
            Some(Band::Etsi) => &[Band::Etsi],
            Some(Band::Fcc) => &[Band::Fcc],
            None => &Band::BOTH,
        }
    }
}

const MODALITIES: [Modality; 8] = [
    Modality { index: 0, sweep: SweepKind::Power, band: Some(Band::Etsi), autotune: AutoTune::On },
    Modality { index: 1, sweep: SweepKind::Power, band: Some(Band::Etsi), autotune: AutoTune::Off },
    Modality { index: 2, sweep: SweepKind::Power, band: Some(Band::Fcc), autotune: AutoTune::On },
    Modality { index: 3, sweep: SweepKind::Power, band: Some(Band::Fcc), autotune: AutoTune::Off },
    Modality { index: 4, sweep: SweepKind::FrequencyFixedPower, band: None, autotune: AutoTune::On },
    Modality { index: 5, sweep: SweepKind::FrequencyFixedPower, band: None, autotune: AutoTune::Off },
    Modality { index: 6, sweep: SweepKind::FrequencyTurnOn, band: None, autotune: AutoTune::On },
    Modality { index: 7, sweep: SweepKind::FrequencyTurnOn, band: None, autotune: AutoTune::Off },
];

/// The full modality catalogue in execution order.
pub fn modality_catalogue() -> &'static [Modality; 8] {
    &MODALITIES
}

/// Interrogation power of the fixed-power frequency sweep (dBm).
pub const FIXED_SWEEP_POWER_DBM: i32 = 30;

/// One interrogation result.
#[derive(Clone, Debug, PartialEq)]
pub struct RfSample {
    pub address: TagAddress,
    pub modality_index: u8,
    pub band: Band,
    pub autotune: AutoTune,
    pub sweep: SweepKind,
    pub freq_mhz: f64,
    pub power_in_dbm: f64,
    pub timestamp_s: f64,
    pub read_ok: bool,
    pub turn_on_dbm: Option<f64>,
    pub rssi_dbm: Option<f64>,
    pub phase_deg: Option<f64>,
}

impl RfSample {
    fn unread(
        address: TagAddress,
        m: &Modality,
        band: Band,
        freq_mhz: f64,
        power_in_dbm: f64,
        timestamp_s: f64,
    ) -> Self {
        RfSample {
            address,
            modality_index: m.index,
            band,
            autotune: m.autotune,
            sweep: m.sweep,
            freq_mhz,
            power_in_dbm,
            timestamp_s,
            read_ok: false,
            turn_on_dbm: None,
            rssi_dbm: None,
            phase_deg: None,
        }
    }
}

/// One full scan pass: the samples of one measurement cycle plus metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanLog {
    pub day: u16,
    pub cycle: u16,
    pub start_s: f64,
    pub samples: Vec<RfSample>,
}

/// Part of the trolley to visit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScanSelection {
    /// Every fruit with a trajectory in the simulation source.
    Loaded,
    /// All 384 tags, loaded or not.
    Full,
    /// All fruits under the listed multiplexers.
    Muxes(Vec<u8>),
    /// Explicit fruit ordinals.
    Fruits(Vec<u16>),
}

impl ScanSelection {
    /// Resolve to the selected fruit ordinals, in scan order.
    pub fn fruits(&self, loaded: Option<&[u16]>) -> Result<Vec<u16>> {
        match self {
            ScanSelection::Loaded => loaded.map(<[u16]>::to_vec).ok_or_else(|| {
                Error::Config("`loaded` selection requires a simulation source".into())
            }),
            ScanSelection::Full => Ok((1..=crate::topology::FRUIT_COUNT).collect()),
            ScanSelection::Muxes(muxes) => {
                let mut out = Vec::new();
                for &m in muxes {
                    if !(1..=crate::topology::MUX_COUNT).contains(&m) {
                        return Err(Error::Config(format!("mux {m} outside 1..=4")));
                    }
                }
                for f in 1..=crate::topology::FRUIT_COUNT {
                    let mux = FruitId::new(f)?.address(crate::topology::TagPosition::A).mux();
                    if muxes.contains(&mux) {
                        out.push(f);
                    }
                }
                Ok(out)
            }
            ScanSelection::Fruits(fruits) => {
                let mut out: Vec<u16> = Vec::new();
                for &f in fruits {
                    FruitId::new(f)?;
                    if !out.contains(&f) {
                        out.push(f);
                    }
                }
                out.sort_unstable();
                Ok(out)
            }
        }
    }
}

/// Reader configuration for one scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub power_min_dbm: i32,
    pub power_max_dbm: i32,
    pub power_step_db: i32,
    /// Time of one (frequency, power) query, seconds.
    pub query_dwell_s: f64,
    /// Fixed slot reserved per tag, seconds.
    pub tag_slot_s: f64,
    pub selection: ScanSelection,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            power_min_dbm: 10,
            power_max_dbm: 30,
            power_step_db: 1,
            query_dwell_s: 0.1,
            tag_slot_s: 35.0,
            selection: ScanSelection::Loaded,
        }
    }
}

impl ScanConfig {
    pub fn power_grid(&self) -> impl Iterator<Item = i32> + '_ {
        (self.power_min_dbm..=self.power_max_dbm).step_by(self.power_step_db.max(1) as usize)
    }

    fn power_grid_len(&self) -> usize {
        self.power_grid().count()
    }

    /// Upper bound on the queries one tag slot can issue: two power
    /// sweeps, the 30-channel fixed sweep and the 8-channel turn-on ramp
    /// (11 coarse + 1 refinement query per channel), all twice for the
    /// two AT states.
    pub fn worst_case_queries_per_tag(&self) -> usize {
        let power = self.power_grid_len();
        let fixed: usize = Band::BOTH.iter().map(|b| b.fixed_sweep_freqs().len()).sum();
        let ramp_worst = self.coarse_ramp_len() + 1;
        let turn_on: usize = Band::BOTH
            .iter()
            .map(|b| b.turn_on_freqs().len() * ramp_worst)
            .sum();
        2 * (2 * power + fixed + turn_on)
    }

    fn coarse_ramp_len(&self) -> usize {
        let span = (self.power_max_dbm - self.power_min_dbm).max(0) as usize;
        span / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.power_min_dbm >= self.power_max_dbm {
            return Err(Error::Config(format!(
                "power range [{}, {}] is empty",
                self.power_min_dbm, self.power_max_dbm
            )));
        }
        if self.power_step_db < 1 {
            return Err(Error::Config("power step must be >= 1 dB".into()));
        }
        if !(self.query_dwell_s > 0.0 && self.query_dwell_s.is_finite()) {
            return Err(Error::Config("query dwell must be positive".into()));
        }
        if !(self.tag_slot_s > 0.0 && self.tag_slot_s.is_finite()) {
            return Err(Error::Config("tag slot must be positive".into()));
        }
        let worst = self.worst_case_queries_per_tag() as f64 * self.query_dwell_s;
        if worst > self.tag_slot_s {
            return Err(Error::Config(format!(
                "worst-case interrogation of one tag takes {worst:.1} s, \
                 exceeding the {} s slot",
                self.tag_slot_s
            )));
        }
        Ok(())
    }

    /// Simulated duration of a scan visiting `n_tags` tags.
    pub fn scan_duration_s(&self, n_tags: usize) -> f64 {
        n_tags as f64 * self.tag_slot_s
    }
}

/// One scheduled measurement cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleSlot {
    pub day: u16,
    pub cycle: u16,
    pub start_hours: f64,
}

impl CycleSlot {
    /// Global 0-based cycle index given the cycles-per-day count.
    pub fn global_index(&self, cycles_per_day: u16) -> u32 {
        u32::from(self.day - 1) * u32::from(cycles_per_day) + u32::from(self.cycle - 1)
    }
}

/// Evenly spaced cycle start times; spacing must fit the scan duration so
/// consecutive reading sequences never overlap.
pub fn schedule_daily(
    cycles_per_day: u16,
    days: u16,
    scan_duration_s: f64,
) -> Result<Vec<CycleSlot>> {
    if cycles_per_day < 1 {
        return Err(Error::Config("cycles_per_day must be >= 1".into()));
    }
    if days < 1 {
        return Err(Error::Config("days must be >= 1".into()));
    }
    let spacing_hours = 24.0 / f64::from(cycles_per_day);
    if scan_duration_s > spacing_hours * 3600.0 {
        return Err(Error::Config(format!(
            "{cycles_per_day} cycles/day leave {spacing_hours:.2} h per cycle, \
             but one scan takes {:.2} h",
            scan_duration_s / 3600.0
        )));
    }
    let mut slots = Vec::with_capacity(usize::from(cycles_per_day) * usize::from(days));
    for day in 1..=days {
        for cycle in 1..=cycles_per_day {
            slots.push(CycleSlot {
                day,
                cycle,
                start_hours: f64::from(day - 1) * 24.0 + f64::from(cycle - 1) * spacing_hours,
            });
        }
    }
    Ok(slots)
}

/// Where run_scan takes its indicator values from.
pub enum ScanSource<'a> {
    /// Live simulation.
    Sim(&'a SimSource),
    /// Replay of a previously recorded log.
    Replay(ReplayCursor<'a>),
}

/// Sequential cursor over a recorded log for replays.
pub struct ReplayCursor<'a> {
    samples: &'a [RfSample],
    pos: usize,
    day: u16,
    cycle: u16,
    start_s: f64,
}

impl<'a> ReplayCursor<'a> {
    pub fn new(log: &'a ScanLog) -> Self {
        ReplayCursor {
            samples: &log.samples,
            pos: 0,
            day: log.day,
            cycle: log.cycle,
            start_s: log.start_s,
        }
    }

    /// All recorded samples of (addr, modality), in recording order.
    fn take_modality(
        &mut self,
        addr: TagAddress,
        modality: &Modality,
        last_complete: &Option<TagAddress>,
    ) -> Result<Vec<RfSample>> {
        let mut out = Vec::new();
        while let Some(s) = self.samples.get(self.pos) {
            if s.address == addr && s.modality_index == modality.index {
                out.push(s.clone());
                self.pos += 1;
            } else {
                break;
            }
        }
        if out.is_empty() {
            return Err(Error::ReplayTruncated {
                last_complete: last_complete
                    .map_or_else(|| "none".to_string(), |a| a.to_string()),
            });
        }
        Ok(out)
    }
}

struct TagClock {
    base_s: f64,
    dwell_s: f64,
    queries: u32,
}

impl TagClock {
    fn next(&mut self) -> f64 {
        let t = self.base_s + f64::from(self.queries) * self.dwell_s;
        self.queries += 1;
        t
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Execute one modality of one tag against the simulator and return its
/// samples. `sh` is the Shore value the tag senses (None = unloaded
/// cavity) and `blocked` a missed interrogation or antenna outage.
#[allow(clippy::too_many_arguments)]
fn execute_modality(
    source: &SimSource,
    addr: TagAddress,
    modality: &Modality,
    sh: Option<f64>,
    cycle: u32,
    blocked: bool,
    config: &ScanConfig,
    clock: &mut TagClock,
) -> Vec<RfSample> {
    let channel = source.channel();
    let at = modality.autotune;
    let mut out = Vec::new();
    let read_sample = |band: Band, freq: f64, pin: f64, ts: f64| -> RfSample {
        RfSample {
            address: addr,
            modality_index: modality.index,
            band,
            autotune: at,
            sweep: modality.sweep,
            freq_mhz: freq,
            power_in_dbm: pin,
            timestamp_s: ts,
            read_ok: true,
            turn_on_dbm: None,
            rssi_dbm: Some(round2(channel.backscatter_rssi(
                addr,
                at,
                band,
                freq,
                pin,
                sh,
                cycle,
                modality.index,
            ))),
            phase_deg: Some(round2(channel.backscatter_phase(
                addr,
                at,
                band,
                freq,
                pin,
                sh,
                cycle,
                modality.index,
            ))),
        }
    };
    match modality.sweep {
        SweepKind::Power => {
            let band = modality.band.expect("power sweeps carry a band");
            let freq = band.power_sweep_freq();
            let threshold = channel.turn_on_threshold(addr, at, band, freq, sh, cycle);
            for pin in config.power_grid() {
                let ts = clock.next();
                let pin = f64::from(pin);
                if !blocked && pin >= threshold {
                    out.push(read_sample(band, freq, pin, ts));
                } else {
                    out.push(RfSample::unread(addr, modality, band, freq, pin, ts));
                }
            }
        }
        SweepKind::FrequencyFixedPower => {
            let pin = f64::from(FIXED_SWEEP_POWER_DBM);
            for &band in modality.bands() {
                for &freq in band.fixed_sweep_freqs() {
                    let threshold = channel.turn_on_threshold(addr, at, band, freq, sh, cycle);
                    let ts = clock.next();
                    if !blocked && pin >= threshold {
                        out.push(read_sample(band, freq, pin, ts));
                    } else {
                        out.push(RfSample::unread(addr, modality, band, freq, pin, ts));
                    }
                }
            }
        }
        SweepKind::FrequencyTurnOn => {
            for &band in modality.bands() {
                for &freq in band.turn_on_freqs() {
                    let threshold = channel.turn_on_threshold(addr, at, band, freq, sh, cycle);
                    run_turn_on_ramp(
                        addr, modality, band, freq, threshold, blocked, config, clock,
                        &read_sample, &mut out,
                    );
                }
            }
        }
    }
    out
}

/// Ascending ramp: 2 dB coarse steps until the first read, then a 1 dB
/// refinement below it. The measured turn-on is the lowest 1 dB grid
/// power with a successful read and annotates exactly that sample.
#[allow(clippy::too_many_arguments)]
fn run_turn_on_ramp(
    addr: TagAddress,
    modality: &Modality,
    band: Band,
    freq: f64,
    threshold: f64,
    blocked: bool,
    config: &ScanConfig,
    clock: &mut TagClock,
    read_sample: &impl Fn(Band, f64, f64, f64) -> RfSample,
    out: &mut Vec<RfSample>,
) {
    let start = out.len();
    let mut first_read: Option<i32> = None;
    let mut pin = config.power_min_dbm;
    while pin <= config.power_max_dbm {
        let ts = clock.next();
        let p = f64::from(pin);
        if !blocked && p >= threshold {
            out.push(read_sample(band, freq, p, ts));
            first_read = Some(pin);
            break;
        }
        out.push(RfSample::unread(addr, modality, band, freq, p, ts));
        pin += 2;
    }
    let Some(coarse) = first_read else {
        return; // tag never turned on at this frequency
    };
    let mut turn_on = coarse;
    if coarse > config.power_min_dbm {
        let ts = clock.next();
        let p = f64::from(coarse - 1);
        if p >= threshold {
            out.push(read_sample(band, freq, p, ts));
            turn_on = coarse - 1;
        } else {
            out.push(RfSample::unread(addr, modality, band, freq, p, ts));
        }
    }
    let turn_on_f = f64::from(turn_on);
    for s in out[start..].iter_mut().rev() {
        if s.read_ok && s.power_in_dbm == turn_on_f {
            s.turn_on_dbm = Some(turn_on_f);
            break;
        }
    }
}

/// Interrogate one tag with one modality outside a scan; timestamps start
/// at zero. Missed-read and outage draws apply exactly as in a scan.
pub fn observe_indicators(
    source: &SimSource,
    addr: TagAddress,
    modality: &Modality,
    sh: Option<f64>,
    cycle: u32,
    config: &ScanConfig,
) -> Vec<RfSample> {
    let blocked = source.channel().antenna_out(addr.antenna(), cycle)
        || source.channel().modality_missed(addr, cycle, modality.index);
    let mut clock = TagClock {
        base_s: 0.0,
        dwell_s: config.query_dwell_s,
        queries: 0,
    };
    execute_modality(source, addr, modality, sh, cycle, blocked, config, &mut clock)
}

/// Run one scan cycle over the selected region.
///
/// Visits addresses in scan order, executes all eight modalities per tag
/// inside its fixed slot and emits the sample stream. Each tag is only
/// interrogated through its own antenna.
pub fn run_scan(
    tags: &TagList,
    source: &mut ScanSource<'_>,
    config: &ScanConfig,
    slot: CycleSlot,
    cycles_per_day: u16,
) -> Result<ScanLog> {
    config.validate()?;
    let loaded = match source {
        ScanSource::Sim(sim) => Some(sim.loaded_fruits()),
        ScanSource::Replay(_) => None,
    };
    let fruits = config.selection.fruits(loaded.as_deref())?;
    let mut addresses = Vec::with_capacity(fruits.len() * 3);
    for a in crate::topology::enumerate_addresses() {
        if fruits.binary_search(&a.fruit().ordinal()).is_ok() {
            if !tags.contains(a) {
                return Err(Error::Data(format!(
                    "selection includes {a} which is missing from the tag list"
                )));
            }
            addresses.push(a);
        }
    }
    let cycle_index = slot.global_index(cycles_per_day);
    let (day, cycle, start_s) = match source {
        ScanSource::Sim(_) => (slot.day, slot.cycle, slot.start_hours * 3600.0),
        ScanSource::Replay(cursor) => (cursor.day, cursor.cycle, cursor.start_s),
    };

    let mut samples = Vec::new();
    let mut last_complete: Option<TagAddress> = None;
    for (tag_idx, &addr) in addresses.iter().enumerate() {
        let mut clock = TagClock {
            base_s: start_s + tag_idx as f64 * config.tag_slot_s,
            dwell_s: config.query_dwell_s,
            queries: 0,
        };
        match source {
            ScanSource::Sim(sim) => {
                let sh = sim.sh_seen(addr, slot.start_hours);
                let out = sim.channel().antenna_out(addr.antenna(), cycle_index);
                for modality in modality_catalogue() {
                    let blocked = out
                        || sim
                            .channel()
                            .modality_missed(addr, cycle_index, modality.index);
                    samples.extend(execute_modality(
                        sim, addr, modality, sh, cycle_index, blocked, config, &mut clock,
                    ));
                }
                debug_assert!(
                    f64::from(clock.queries) * config.query_dwell_s <= config.tag_slot_s
                );
            }
            ScanSource::Replay(cursor) => {
                for modality in modality_catalogue() {
                    samples.extend(cursor.take_modality(addr, modality, &last_complete)?);
                }
            }
        }
        last_complete = Some(addr);
    }
    Ok(ScanLog {
        day,
        cycle,
        start_s,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::channel::{Channel, ChannelParams};
    use crate::sim::trajectory::{generate_trajectory, CohortProfile};
    use crate::topology::TagPosition;

    fn sim_source(fruits: u16, seed: u64) -> SimSource {
        let channel = Channel::new(ChannelParams::default(), seed).unwrap();
        let profile = CohortProfile::default();
        let trajectories = (1..=fruits)
            .map(|f| generate_trajectory(FruitId::new(f).unwrap(), &profile, seed).unwrap())
            .collect();
        SimSource::new(channel, trajectories)
    }

    #[test]
    fn catalogue_has_exactly_eight_modalities() {
        let cat = modality_catalogue();
        assert_eq!(cat.len(), 8);
        let power = cat.iter().filter(|m| m.sweep == SweepKind::Power).count();
        let fixed = cat
            .iter()
            .filter(|m| m.sweep == SweepKind::FrequencyFixedPower)
            .count();
        let turnon = cat
            .iter()
            .filter(|m| m.sweep == SweepKind::FrequencyTurnOn)
            .count();
        assert_eq!((power, fixed, turnon), (4, 2, 2));
        let at_on = cat.iter().filter(|m| m.autotune == AutoTune::On).count();
        assert_eq!(at_on, 4);
    }

    #[test]
    fn frequency_grids_match_the_band_plans() {
        assert_eq!(Band::Etsi.fixed_sweep_freqs().len(), 4);
        assert_eq!(Band::Fcc.fixed_sweep_freqs().len(), 26);
        assert!(Band::Etsi.fixed_sweep_freqs().iter().all(|f| (865.0..=868.0).contains(f)));
        assert!(Band::Fcc.fixed_sweep_freqs().iter().all(|f| (903.0..=928.0).contains(f)));
    }

    #[test]
    fn worst_case_plan_fits_the_tag_slot() {
        let cfg = ScanConfig::default();
        cfg.validate().unwrap();
        let worst = cfg.worst_case_queries_per_tag();
        assert_eq!(worst, 336);
        assert!(worst as f64 * cfg.query_dwell_s <= cfg.tag_slot_s);
    }

    #[test]
    fn full_trolley_scan_covers_all_tags_and_lasts_exactly_the_slot_budget() {
        let src = sim_source(128, 3);
        let cfg = ScanConfig {
            selection: ScanSelection::Full,
            ..ScanConfig::default()
        };
        let slot = CycleSlot { day: 1, cycle: 1, start_hours: 0.0 };
        let log = run_scan(&TagList::standard(), &mut ScanSource::Sim(&src), &cfg, slot, 4).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for s in &log.samples {
            seen.insert((s.address, s.modality_index));
        }
        assert_eq!(seen.len(), 384 * 8);
        assert_eq!(cfg.scan_duration_s(384), 13_440.0);
        // per-tag duration within the slot
        let mut per_tag = std::collections::BTreeMap::<TagAddress, (f64, f64)>::new();
        for s in &log.samples {
            let e = per_tag.entry(s.address).or_insert((f64::MAX, f64::MIN));
            e.0 = e.0.min(s.timestamp_s);
            e.1 = e.1.max(s.timestamp_s);
        }
        for (a, (lo, hi)) in per_tag {
            assert!(hi - lo <= 35.0, "tag {a} ran {:.1} s", hi - lo);
        }
        // timestamps non-decreasing
        for w in log.samples.windows(2) {
            assert!(w[1].timestamp_s >= w[0].timestamp_s);
        }
    }

    #[test]
    fn single_fruit_selection_visits_three_tags_and_eight_modalities() {
        let src = sim_source(8, 1);
        let cfg = ScanConfig {
            selection: ScanSelection::Fruits(vec![5]),
            ..ScanConfig::default()
        };
        let slot = CycleSlot { day: 1, cycle: 1, start_hours: 0.0 };
        let log = run_scan(&TagList::standard(), &mut ScanSource::Sim(&src), &cfg, slot, 4).unwrap();
        let tags: std::collections::BTreeSet<_> =
            log.samples.iter().map(|s| s.address).collect();
        assert_eq!(tags.len(), 3);
        assert!(tags.iter().all(|a| a.fruit().ordinal() == 5));
        let pairs: std::collections::BTreeSet<_> = log
            .samples
            .iter()
            .map(|s| (s.address, s.modality_index))
            .collect();
        assert_eq!(pairs.len(), 3 * 8);
    }

    #[test]
    fn unread_samples_carry_no_indicators() {
        let src = sim_source(4, 9);
        let cfg = ScanConfig {
            selection: ScanSelection::Loaded,
            ..ScanConfig::default()
        };
        let slot = CycleSlot { day: 1, cycle: 1, start_hours: 0.0 };
        let log = run_scan(&TagList::standard(), &mut ScanSource::Sim(&src), &cfg, slot, 4).unwrap();
        for s in &log.samples {
            if !s.read_ok {
                assert!(s.rssi_dbm.is_none() && s.phase_deg.is_none() && s.turn_on_dbm.is_none());
            }
            if s.turn_on_dbm.is_some() {
                assert_eq!(s.sweep, SweepKind::FrequencyTurnOn);
                assert!(s.read_ok);
            }
            assert_eq!(Band::of_freq(s.freq_mhz), s.band);
        }
    }

    #[test]
    fn turn_on_annotation_is_the_lowest_power_read() {
        let src = sim_source(16, 13);
        let cfg = ScanConfig {
            selection: ScanSelection::Loaded,
            ..ScanConfig::default()
        };
        let slot = CycleSlot { day: 1, cycle: 1, start_hours: 0.0 };
        let log = run_scan(&TagList::standard(), &mut ScanSource::Sim(&src), &cfg, slot, 4).unwrap();
        // group turn-on sweep rows by (tag, at, freq)
        let mut groups: std::collections::BTreeMap<_, Vec<&RfSample>> =
            std::collections::BTreeMap::new();
        for s in &log.samples {
            if s.sweep == SweepKind::FrequencyTurnOn {
                groups
                    .entry((s.address, s.autotune, s.freq_mhz.round() as u64))
                    .or_default()
                    .push(s);
            }
        }
        for (_, rows) in groups {
            let annotated: Vec<_> = rows.iter().filter(|s| s.turn_on_dbm.is_some()).collect();
            let reads: Vec<_> = rows.iter().filter(|s| s.read_ok).collect();
            if reads.is_empty() {
                assert!(annotated.is_empty());
                continue;
            }
            assert_eq!(annotated.len(), 1);
            let lowest_read = reads
                .iter()
                .map(|s| s.power_in_dbm)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(annotated[0].turn_on_dbm.unwrap(), lowest_read);
        }
    }

    #[test]
    fn replay_reproduces_the_recorded_log_byte_for_byte() {
        let src = sim_source(4, 21);
        let cfg = ScanConfig {
            selection: ScanSelection::Fruits(vec![1, 2, 3, 4]),
            ..ScanConfig::default()
        };
        let slot = CycleSlot { day: 2, cycle: 3, start_hours: 36.0 };
        let original =
            run_scan(&TagList::standard(), &mut ScanSource::Sim(&src), &cfg, slot, 4).unwrap();
        let mut replay = ScanSource::Replay(ReplayCursor::new(&original));
        let copied = run_scan(&TagList::standard(), &mut replay, &cfg, slot, 4).unwrap();
        assert_eq!(original, copied);
    }

    #[test]
    fn exhausted_replay_names_the_last_complete_address() {
        let src = sim_source(4, 21);
        let cfg = ScanConfig {
            selection: ScanSelection::Fruits(vec![1, 2]),
            ..ScanConfig::default()
        };
        let slot = CycleSlot { day: 1, cycle: 1, start_hours: 0.0 };
        let mut log =
            run_scan(&TagList::standard(), &mut ScanSource::Sim(&src), &cfg, slot, 4).unwrap();
        // drop the last tag's samples
        let last = *log.samples.last().map(|s| &s.address).unwrap();
        log.samples.retain(|s| s.address != last);
        let mut replay = ScanSource::Replay(ReplayCursor::new(&log));
        let err = run_scan(&TagList::standard(), &mut replay, &cfg, slot, 4).unwrap_err();
        match err {
            Error::ReplayTruncated { last_complete } => {
                assert_eq!(last_complete, "M1P1S2B");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn observe_indicators_runs_one_modality_outside_a_scan() {
        use crate::sim::channel::Span;
        // degenerate channel: zero noise and zero sensitivity returns the
        // pinned baselines exactly, for any hardness
        let mut params = ChannelParams::noise_free();
        params.turn_on.sens = Span::fixed(0.0);
        params.turn_on.curvature = Span::fixed(0.0);
        params.turn_on.resonance_sens = Span::fixed(0.0);
        params.turn_on.base_at_on = Span::fixed(14.0);
        params.rssi.sens = Span::fixed(0.0);
        params.rssi.base_loaded = Span::fixed(-61.0);
        params.rssi.power_slope_base = Span::fixed(0.0);
        params.rssi.power_slope_sens = Span::fixed(0.0);
        params.rssi.freq_slope_base = Span::fixed(0.0);
        params.rssi.freq_slope_sens = Span::fixed(0.0);
        let channel = Channel::new(params, 2).unwrap();
        let traj = generate_trajectory(
            FruitId::new(1).unwrap(),
            &CohortProfile::default(),
            2,
        )
        .unwrap();
        let src = SimSource::new(channel, vec![traj]);
        let addr = TagAddress::new(1, 1, 1, TagPosition::A).unwrap();
        let cfg = ScanConfig::default();
        for sh in [1.0, 0.75, 0.4] {
            let fixed = &modality_catalogue()[4];
            let samples = observe_indicators(&src, addr, fixed, Some(sh), 0, &cfg);
            assert_eq!(samples.len(), 30, "one query per fixed-sweep channel");
            assert!(samples
                .iter()
                .all(|s| s.read_ok && s.rssi_dbm == Some(-61.0)));
            let ramp = &modality_catalogue()[6];
            let samples = observe_indicators(&src, addr, ramp, Some(sh), 0, &cfg);
            let turn_ons: Vec<f64> = samples.iter().filter_map(|s| s.turn_on_dbm).collect();
            assert_eq!(turn_ons.len(), 8, "one turn-on value per ramp channel");
            assert!(turn_ons.iter().all(|&t| t == 14.0));
        }
    }

    #[test]
    fn daily_schedule_is_evenly_spaced() {
        let slots = schedule_daily(4, 7, 13_440.0).unwrap();
        assert_eq!(slots.len(), 28);
        assert_eq!(slots[0].start_hours, 0.0);
        assert_eq!(slots[1].start_hours, 6.0);
        assert_eq!(slots[2].start_hours, 12.0);
        assert_eq!(slots[3].start_hours, 18.0);
        assert_eq!(slots[4].start_hours, 24.0);
        // windows are pairwise disjoint
        for w in slots.windows(2) {
            assert!(w[0].start_hours + 13_440.0 / 3600.0 <= w[1].start_hours);
        }
        // 7 days x 4 cycles x 32 fruits = 896 fruit-evaluations
        assert_eq!(slots.len() * 32, 896);
    }

    #[test]
    fn infeasible_schedule_is_a_configuration_error() {
        let four_hours = 4.0 * 3600.0;
        assert!(matches!(
            schedule_daily(7, 1, four_hours),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tags_are_only_read_through_their_own_antenna() {
        let src = sim_source(8, 5);
        let cfg = ScanConfig::default();
        let slot = CycleSlot { day: 1, cycle: 1, start_hours: 0.0 };
        let log = run_scan(&TagList::standard(), &mut ScanSource::Sim(&src), &cfg, slot, 4).unwrap();
        // scan-order grouping: antenna blocks are contiguous and ordered
        let antennas: Vec<_> = log.samples.iter().map(|s| s.address.antenna()).collect();
        let mut dedup = antennas.clone();
        dedup.dedup();
        let mut sorted = dedup.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(dedup, sorted, "antenna blocks interleave");
    }

    #[test]
    fn selection_by_mux_covers_one_shelf() {
        let fruits = ScanSelection::Muxes(vec![1]).fruits(None).unwrap();
        assert_eq!(fruits.len(), 32);
        assert!(fruits.iter().all(|&f| f <= 32));
        let full = ScanSelection::Full.fruits(None).unwrap();
        assert_eq!(full.len(), 128);
        assert!(ScanSelection::Loaded.fruits(None).is_err());
    }

    #[test]
    fn position_of_unloaded_cavity_is_observed_unloaded() {
        // fruits 1..=2 loaded; fruit 3 unloaded (cavity empty)
        let src = sim_source(2, 8);
        assert!(src.sh_seen(
            TagAddress::new(1, 1, 3, TagPosition::A).unwrap(), 0.0
        ).is_none());
        assert!(src.sh_seen(
            TagAddress::new(1, 1, 1, TagPosition::A).unwrap(), 0.0
        ).is_some());
    }
}
