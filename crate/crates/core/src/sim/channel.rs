//! Stochastic channel model mapping fruit state to electromagnetic
//! indicators.
//!
//! Every per-tag response parameter is drawn once, deterministically, from
//! the run seed and the tag address, so observations are pure functions of
//! (seed, address, interrogation coordinates). Indicator responses are
//! affine in the ripeness progress `1 - sh` plus Gaussian noise; the
//! turn-on response additionally carries a resonance bowl over frequency
//! that detunes as the fruit ripens.
//!
//! Missed readings have two components: an independent per-interrogation
//! dropout and a per-cycle antenna outage that silences all twelve tags of
//! one antenna at once (the dominant cause of fruit-level abstention,
//! since the three tags of a fruit share one antenna).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interrogation::{AutoTune, Band};
use crate::seed::{self, purpose};
use crate::sim::trajectory::ShTrajectory;
use crate::topology::{FruitId, TagAddress, TagPosition};

/// Closed interval a per-tag parameter is drawn from. `lo == hi` pins the
/// parameter exactly (used by noise-free test cohorts).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Span { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Span { lo: v, hi: v }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "span {name} = [{}, {}] is not a finite non-empty interval",
                self.lo, self.hi
            )))
        }
    }
}

/// Turn-on power response (dBm at the reader antenna).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnOnParams {
    pub base_at_on: Span,
    pub base_at_off: Span,
    /// dB added per unit of ripeness progress (1 - sh).
    pub sens: Span,
    /// dB per MHz^2 of detuning from the resonance frequency.
    pub curvature: Span,
    pub resonance_etsi_mhz: Span,
    pub resonance_fcc_mhz: Span,
    /// MHz of resonance shift per unit of ripeness progress.
    pub resonance_sens: Span,
    pub noise_sigma: f64,
    pub cycle_jitter_sigma: f64,
}

impl Default for TurnOnParams {
    fn default() -> Self {
        TurnOnParams {
            base_at_on: Span::new(11.0, 12.5),
            base_at_off: Span::new(12.0, 13.0),
            sens: Span::new(2.0, 3.0),
            curvature: Span::new(0.002, 0.005),
            resonance_etsi_mhz: Span::new(865.5, 867.5),
            resonance_fcc_mhz: Span::new(908.0, 922.0),
            resonance_sens: Span::new(-6.0, -2.0),
            noise_sigma: 0.12,
            cycle_jitter_sigma: 0.1,
        }
    }
}

/// Backscatter signal strength response (dBm at the reader).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RssiParams {
    pub base_loaded: Span,
    pub base_unloaded: Span,
    /// dB per unit of ripeness progress.
    pub sens: Span,
    /// dB of RSSI per dB of interrogation power, around the 30 dBm point.
    pub power_slope_base: Span,
    pub power_slope_sens: Span,
    /// dB per MHz around the band center.
    pub freq_slope_base: Span,
    pub freq_slope_sens: Span,
    pub noise_sigma: f64,
    pub cycle_jitter_sigma: f64,
}

impl Default for RssiParams {
    fn default() -> Self {
        RssiParams {
            base_loaded: Span::new(-66.0, -54.0),
            base_unloaded: Span::new(-59.0, -54.0),
            sens: Span::new(-4.5, -2.5),
            power_slope_base: Span::new(0.05, 0.15),
            power_slope_sens: Span::new(-0.05, -0.02),
            freq_slope_base: Span::new(-0.05, 0.05),
            freq_slope_sens: Span::new(-0.03, -0.01),
            noise_sigma: 0.5,
            cycle_jitter_sigma: 0.3,
        }
    }
}

/// Backscatter phase response (degrees, wrapped to [0, 360)).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    /// Degrees per unit of ripeness progress.
    pub sens: Span,
    pub power_slope_base: Span,
    pub power_slope_sens: Span,
    pub noise_sigma: f64,
    pub cycle_jitter_sigma: f64,
}

impl Default for PhaseParams {
    fn default() -> Self {
        PhaseParams {
            sens: Span::new(45.0, 75.0),
            power_slope_base: Span::new(-0.2, 0.2),
            power_slope_sens: Span::new(-0.3, 0.3),
            noise_sigma: 2.0,
            cycle_jitter_sigma: 1.5,
        }
    }
}

/// Full channel description. A value of this struct plus a seed fixes
/// every observation of a campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Probability that one (tag, modality) interrogation fails outright.
    pub missed_read_prob: f64,
    /// Probability that one antenna is silent for a whole cycle, taking
    /// all twelve of its tags (hence four fruits) with it.
    pub antenna_outage_prob: f64,
    pub turn_on: TurnOnParams,
    pub rssi: RssiParams,
    pub phase: PhaseParams,
    /// Ripening-onset delay sensed by the eccentric tags B and C,
    /// emulating ripening that starts from a different point of the fruit.
    pub eccentric_onset_delay_hours: Span,
    /// Sensitivity multiplier of the eccentric tags relative to the basal
    /// tag; ripening shows up weaker away from the basal region.
    pub eccentric_sens_scale: Span,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            missed_read_prob: 0.015,
            antenna_outage_prob: 0.055,
            turn_on: TurnOnParams::default(),
            rssi: RssiParams::default(),
            phase: PhaseParams::default(),
            eccentric_onset_delay_hours: Span::new(0.0, 18.0),
            eccentric_sens_scale: Span::new(0.7, 0.95),
        }
    }
}

impl ChannelParams {
    /// A noise-free, homogeneous-sensitivity channel with no missed
    /// readings; indicators respond strongly and identically on every tag.
    pub fn noise_free() -> Self {
        ChannelParams {
            missed_read_prob: 0.0,
            antenna_outage_prob: 0.0,
            turn_on: TurnOnParams {
                sens: Span::fixed(3.0),
                resonance_sens: Span::fixed(-4.0),
                noise_sigma: 0.0,
                cycle_jitter_sigma: 0.0,
                ..TurnOnParams::default()
            },
            rssi: RssiParams {
                sens: Span::fixed(-4.0),
                power_slope_sens: Span::fixed(-0.03),
                freq_slope_sens: Span::fixed(-0.02),
                noise_sigma: 0.0,
                cycle_jitter_sigma: 0.0,
                ..RssiParams::default()
            },
            phase: PhaseParams {
                sens: Span::fixed(60.0),
                power_slope_sens: Span::fixed(0.0),
                noise_sigma: 0.0,
                cycle_jitter_sigma: 0.0,
                ..PhaseParams::default()
            },
            eccentric_onset_delay_hours: Span::fixed(0.0),
            eccentric_sens_scale: Span::fixed(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (p, name) in [
            (self.missed_read_prob, "missed_read_prob"),
            (self.antenna_outage_prob, "antenna_outage_prob"),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        for (s, name) in [
            (self.turn_on.noise_sigma, "turn_on.noise_sigma"),
            (self.turn_on.cycle_jitter_sigma, "turn_on.cycle_jitter_sigma"),
            (self.rssi.noise_sigma, "rssi.noise_sigma"),
            (self.rssi.cycle_jitter_sigma, "rssi.cycle_jitter_sigma"),
            (self.phase.noise_sigma, "phase.noise_sigma"),
            (self.phase.cycle_jitter_sigma, "phase.cycle_jitter_sigma"),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("{name} = {s} must be >= 0")));
            }
        }
        self.turn_on.base_at_on.validate("turn_on.base_at_on")?;
        self.turn_on.base_at_off.validate("turn_on.base_at_off")?;
        self.turn_on.sens.validate("turn_on.sens")?;
        self.turn_on.curvature.validate("turn_on.curvature")?;
        self.turn_on
            .resonance_etsi_mhz
            .validate("turn_on.resonance_etsi_mhz")?;
        self.turn_on
            .resonance_fcc_mhz
            .validate("turn_on.resonance_fcc_mhz")?;
        self.turn_on.resonance_sens.validate("turn_on.resonance_sens")?;
        self.rssi.base_loaded.validate("rssi.base_loaded")?;
        self.rssi.base_unloaded.validate("rssi.base_unloaded")?;
        self.rssi.sens.validate("rssi.sens")?;
        self.rssi.power_slope_base.validate("rssi.power_slope_base")?;
        self.rssi.power_slope_sens.validate("rssi.power_slope_sens")?;
        self.rssi.freq_slope_base.validate("rssi.freq_slope_base")?;
        self.rssi.freq_slope_sens.validate("rssi.freq_slope_sens")?;
        self.phase.sens.validate("phase.sens")?;
        self.phase.power_slope_base.validate("phase.power_slope_base")?;
        self.phase.power_slope_sens.validate("phase.power_slope_sens")?;
        self.eccentric_onset_delay_hours
            .validate("eccentric_onset_delay_hours")?;
        self.eccentric_sens_scale.validate("eccentric_sens_scale")?;
        Ok(())
    }
}

/// Resolved per-(tag, AT state, band) response parameters.
#[derive(Clone, Copy, Debug)]
pub struct ContextResponse {
    pub turn_on_base: f64,
    pub turn_on_base_unloaded: f64,
    pub turn_on_sens: f64,
    pub curvature: f64,
    pub resonance_mhz: f64,
    pub resonance_sens: f64,
    pub rssi_base: f64,
    pub rssi_base_unloaded: f64,
    pub rssi_sens: f64,
    pub rssi_power_slope: f64,
    pub rssi_power_slope_sens: f64,
    pub rssi_freq_slope: f64,
    pub rssi_freq_slope_sens: f64,
    pub phase_base: f64,
    pub phase_base_unloaded: f64,
    pub phase_sens: f64,
    pub phase_power_slope: f64,
    pub phase_power_slope_sens: f64,
}

/// The channel: params + seed. Observations are pure functions of their
/// coordinates, so a shared reference can serve parallel scans.
#[derive(Clone, Debug)]
pub struct Channel {
    params: ChannelParams,
    seed: u64,
}

fn wrap_degrees(p: f64) -> f64 {
    let w = p % 360.0;
    if w < 0.0 {
        w + 360.0
    } else {
        w
    }
}

impl Channel {
    pub fn new(params: ChannelParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Channel { params, seed })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-(tag, AT, band) response bundle, derived from the seed.
    pub fn response(&self, addr: TagAddress, at: AutoTune, band: Band) -> ContextResponse {
        let mut rng = seed::rng(
            self.seed,
            &[
                purpose::TAG_RESPONSE,
                addr.code(),
                at.index(),
                band.index(),
            ],
        );
        let p = &self.params;
        let base_span = match at {
            AutoTune::On => p.turn_on.base_at_on,
            AutoTune::Off => p.turn_on.base_at_off,
        };
        let resonance_span = match band {
            Band::Etsi => p.turn_on.resonance_etsi_mhz,
            Band::Fcc => p.turn_on.resonance_fcc_mhz,
        };
        let scale = self.eccentric_scale(addr);
        ContextResponse {
            turn_on_base: base_span.sample(&mut rng),
            turn_on_base_unloaded: base_span.sample(&mut rng),
            turn_on_sens: p.turn_on.sens.sample(&mut rng) * scale,
            curvature: p.turn_on.curvature.sample(&mut rng),
            resonance_mhz: resonance_span.sample(&mut rng),
            resonance_sens: p.turn_on.resonance_sens.sample(&mut rng) * scale,
            rssi_base: p.rssi.base_loaded.sample(&mut rng),
            rssi_base_unloaded: p.rssi.base_unloaded.sample(&mut rng),
            rssi_sens: p.rssi.sens.sample(&mut rng) * scale,
            rssi_power_slope: p.rssi.power_slope_base.sample(&mut rng),
            rssi_power_slope_sens: p.rssi.power_slope_sens.sample(&mut rng) * scale,
            rssi_freq_slope: p.rssi.freq_slope_base.sample(&mut rng),
            rssi_freq_slope_sens: p.rssi.freq_slope_sens.sample(&mut rng) * scale,
            phase_base: rng.random_range(0.0..360.0),
            phase_base_unloaded: rng.random_range(0.0..360.0),
            phase_sens: p.phase.sens.sample(&mut rng) * scale,
            phase_power_slope: p.phase.power_slope_base.sample(&mut rng),
            phase_power_slope_sens: p.phase.power_slope_sens.sample(&mut rng) * scale,
        }
    }

    /// Ripening-sensitivity multiplier of a tag; 1.0 for the basal tag.
    fn eccentric_scale(&self, addr: TagAddress) -> f64 {
        if addr.position() == TagPosition::A {
            return 1.0;
        }
        let mut rng = seed::rng(self.seed, &[purpose::ECCENTRIC_SCALE, addr.code()]);
        self.params.eccentric_sens_scale.sample(&mut rng)
    }

    /// Onset delay sensed by eccentric tags; zero for the basal tag.
    pub fn onset_delay_hours(&self, addr: TagAddress) -> f64 {
        if addr.position() == TagPosition::A {
            return 0.0;
        }
        let mut rng = seed::rng(self.seed, &[purpose::ONSET_DELAY, addr.code()]);
        self.params.eccentric_onset_delay_hours.sample(&mut rng)
    }

    fn gauss(&self, sigma: f64, parts: &[u64]) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let mut rng = seed::rng(self.seed, parts);
        let z: f64 = StandardNormal.sample(&mut rng);
        z * sigma
    }

    /// Per-(tag, cycle) setup wobble shared by all queries of the cycle;
    /// returns (turn-on, rssi, phase) offsets.
    fn cycle_jitter(&self, addr: TagAddress, cycle: u32) -> (f64, f64, f64) {
        let p = &self.params;
        if p.turn_on.cycle_jitter_sigma == 0.0
            && p.rssi.cycle_jitter_sigma == 0.0
            && p.phase.cycle_jitter_sigma == 0.0
        {
            return (0.0, 0.0, 0.0);
        }
        let mut rng = seed::rng(
            self.seed,
            &[purpose::CYCLE_JITTER, addr.code(), u64::from(cycle)],
        );
        let zt: f64 = StandardNormal.sample(&mut rng);
        let zr: f64 = StandardNormal.sample(&mut rng);
        let zp: f64 = StandardNormal.sample(&mut rng);
        (
            zt * p.turn_on.cycle_jitter_sigma,
            zr * p.rssi.cycle_jitter_sigma,
            zp * p.phase.cycle_jitter_sigma,
        )
    }

    /// Whether one (tag, modality) interrogation fails this cycle.
    pub fn modality_missed(&self, addr: TagAddress, cycle: u32, modality_index: u8) -> bool {
        if self.params.missed_read_prob <= 0.0 {
            return false;
        }
        let mut rng = seed::rng(
            self.seed,
            &[
                purpose::MISSED_READ,
                addr.code(),
                u64::from(cycle),
                u64::from(modality_index),
            ],
        );
        rng.random::<f64>() < self.params.missed_read_prob
    }

    /// Whether one antenna is silent for the whole cycle.
    pub fn antenna_out(&self, antenna: (u8, u8), cycle: u32) -> bool {
        if self.params.antenna_outage_prob <= 0.0 {
            return false;
        }
        let mut rng = seed::rng(
            self.seed,
            &[
                purpose::ANTENNA_OUTAGE,
                u64::from(antenna.0),
                u64::from(antenna.1),
                u64::from(cycle),
            ],
        );
        rng.random::<f64>() < self.params.antenna_outage_prob
    }

    /// Continuous turn-on threshold (dBm) of the tag at one frequency.
    /// `sh = None` models an unloaded cavity: flat response, no ripening
    /// sensitivity.
    pub fn turn_on_threshold(
        &self,
        addr: TagAddress,
        at: AutoTune,
        band: Band,
        freq_mhz: f64,
        sh: Option<f64>,
        cycle: u32,
    ) -> f64 {
        let resp = self.response(addr, at, band);
        let (jit, _, _) = self.cycle_jitter(addr, cycle);
        let noise = self.gauss(
            self.params.turn_on.noise_sigma,
            &[
                purpose::TURN_ON_NOISE,
                addr.code(),
                at.index(),
                freq_mhz.round() as u64,
                u64::from(cycle),
            ],
        );
        match sh {
            None => resp.turn_on_base_unloaded + jit + noise,
            Some(sh) => {
                let progress = 1.0 - sh;
                let resonance = resp.resonance_mhz + resp.resonance_sens * progress;
                let detune = freq_mhz - resonance;
                resp.turn_on_base
                    + resp.turn_on_sens * progress
                    + resp.curvature * detune * detune
                    + jit
                    + noise
            }
        }
    }

    /// Backscatter RSSI (dBm) for one successful query.
    #[allow(clippy::too_many_arguments)]
    pub fn backscatter_rssi(
        &self,
        addr: TagAddress,
        at: AutoTune,
        band: Band,
        freq_mhz: f64,
        power_dbm: f64,
        sh: Option<f64>,
        cycle: u32,
        modality_index: u8,
    ) -> f64 {
        let resp = self.response(addr, at, band);
        let (_, jit, _) = self.cycle_jitter(addr, cycle);
        let noise = self.gauss(
            self.params.rssi.noise_sigma,
            &[
                purpose::QUERY_NOISE,
                0,
                addr.code(),
                at.index(),
                u64::from(modality_index),
                freq_mhz.round() as u64,
                power_dbm.round() as u64,
                u64::from(cycle),
            ],
        );
        let (base, slope, fslope) = match sh {
            None => (
                resp.rssi_base_unloaded,
                resp.rssi_power_slope,
                resp.rssi_freq_slope,
            ),
            Some(sh) => {
                let progress = 1.0 - sh;
                (
                    resp.rssi_base + resp.rssi_sens * progress,
                    resp.rssi_power_slope + resp.rssi_power_slope_sens * progress,
                    resp.rssi_freq_slope + resp.rssi_freq_slope_sens * progress,
                )
            }
        };
        base + slope * (power_dbm - 30.0) + fslope * (freq_mhz - band.center_mhz()) + jit + noise
    }

    /// Backscatter phase (degrees in [0, 360)) for one successful query.
    #[allow(clippy::too_many_arguments)]
    pub fn backscatter_phase(
        &self,
        addr: TagAddress,
        at: AutoTune,
        band: Band,
        freq_mhz: f64,
        power_dbm: f64,
        sh: Option<f64>,
        cycle: u32,
        modality_index: u8,
    ) -> f64 {
        let resp = self.response(addr, at, band);
        let (_, _, jit) = self.cycle_jitter(addr, cycle);
        let noise = self.gauss(
            self.params.phase.noise_sigma,
            &[
                purpose::QUERY_NOISE,
                1,
                addr.code(),
                at.index(),
                u64::from(modality_index),
                freq_mhz.round() as u64,
                power_dbm.round() as u64,
                u64::from(cycle),
            ],
        );
        let (base, slope) = match sh {
            None => (resp.phase_base_unloaded, resp.phase_power_slope),
            Some(sh) => {
                let progress = 1.0 - sh;
                (
                    resp.phase_base + resp.phase_sens * progress,
                    resp.phase_power_slope + resp.phase_power_slope_sens * progress,
                )
            }
        };
        wrap_degrees(base + slope * (power_dbm - 30.0) + jit + noise)
    }
}

/// Indicator source backed by the simulator: a channel plus the cohort's
/// ground-truth trajectories. Fruits without a trajectory are unloaded
/// cavities.
#[derive(Clone, Debug)]
pub struct SimSource {
    channel: Channel,
    trajectories: BTreeMap<u16, ShTrajectory>,
}

impl SimSource {
    pub fn new(channel: Channel, trajectories: Vec<ShTrajectory>) -> Self {
        let trajectories = trajectories
            .into_iter()
            .map(|t| (t.fruit.ordinal(), t))
            .collect();
        SimSource {
            channel,
            trajectories,
        }
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn loaded_fruits(&self) -> Vec<u16> {
        self.trajectories.keys().copied().collect()
    }

    pub fn is_loaded(&self, fruit: FruitId) -> bool {
        self.trajectories.contains_key(&fruit.ordinal())
    }

    pub fn trajectory(&self, fruit: FruitId) -> Option<&ShTrajectory> {
        self.trajectories.get(&fruit.ordinal())
    }

    /// Normalized Shore value sensed by `addr` at `t_hours`; None when the
    /// cavity is unloaded. Eccentric tags see a delayed onset.
    pub fn sh_seen(&self, addr: TagAddress, t_hours: f64) -> Option<f64> {
        let traj = self.trajectories.get(&addr.fruit().ordinal())?;
        let delay = self.channel.onset_delay_hours(addr);
        Some(traj.sh((t_hours - delay).max(0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::enumerate_addresses;

    fn addr(mux: u8, port: u8, slot: u8, pos: TagPosition) -> TagAddress {
        TagAddress::new(mux, port, slot, pos).unwrap()
    }

    fn degenerate_params() -> ChannelParams {
        // zero noise, zero sensitivity, pinned baselines
        let mut p = ChannelParams::noise_free();
        p.turn_on.sens = Span::fixed(0.0);
        p.turn_on.curvature = Span::fixed(0.0);
        p.turn_on.resonance_sens = Span::fixed(0.0);
        p.turn_on.base_at_on = Span::fixed(12.0);
        p.turn_on.base_at_off = Span::fixed(13.0);
        p.rssi.sens = Span::fixed(0.0);
        p.rssi.base_loaded = Span::fixed(-60.0);
        p.rssi.power_slope_base = Span::fixed(0.0);
        p.rssi.power_slope_sens = Span::fixed(0.0);
        p.rssi.freq_slope_base = Span::fixed(0.0);
        p.rssi.freq_slope_sens = Span::fixed(0.0);
        p.phase.sens = Span::fixed(0.0);
        p.phase.power_slope_base = Span::fixed(0.0);
        p.phase.power_slope_sens = Span::fixed(0.0);
        p
    }

    #[test]
    fn degenerate_channel_returns_the_baseline_exactly() {
        let ch = Channel::new(degenerate_params(), 3).unwrap();
        let a = addr(1, 1, 1, TagPosition::A);
        for sh in [1.0, 0.8, 0.5] {
            let rssi = ch.backscatter_rssi(a, AutoTune::On, Band::Etsi, 866.0, 30.0, Some(sh), 0, 0);
            assert_eq!(rssi, -60.0);
            let to = ch.turn_on_threshold(a, AutoTune::On, Band::Etsi, 866.0, Some(sh), 0);
            assert_eq!(to, 12.0);
        }
    }

    #[test]
    fn observations_are_bit_reproducible() {
        let ch = Channel::new(ChannelParams::default(), 11).unwrap();
        let ch2 = Channel::new(ChannelParams::default(), 11).unwrap();
        let a = addr(2, 5, 3, TagPosition::B);
        for cycle in 0..4 {
            let x = ch.backscatter_rssi(a, AutoTune::Off, Band::Fcc, 915.0, 24.0, Some(0.8), cycle, 2);
            let y = ch2.backscatter_rssi(a, AutoTune::Off, Band::Fcc, 915.0, 24.0, Some(0.8), cycle, 2);
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn different_seeds_give_different_observations() {
        let ch1 = Channel::new(ChannelParams::default(), 1).unwrap();
        let ch2 = Channel::new(ChannelParams::default(), 2).unwrap();
        let a = addr(1, 1, 1, TagPosition::A);
        let x = ch1.backscatter_rssi(a, AutoTune::On, Band::Etsi, 866.0, 30.0, Some(0.9), 0, 0);
        let y = ch2.backscatter_rssi(a, AutoTune::On, Band::Etsi, 866.0, 30.0, Some(0.9), 0, 0);
        assert_ne!(x, y);
    }

    #[test]
    fn noise_free_indicators_are_strictly_monotone_in_ripeness() {
        let ch = Channel::new(ChannelParams::noise_free(), 5).unwrap();
        let a = addr(1, 2, 1, TagPosition::A);
        let mut prev_rssi = f64::INFINITY;
        let mut prev_to = f64::NEG_INFINITY;
        for step in 0..6 {
            let sh = 1.0 - 0.1 * f64::from(step);
            let rssi = ch.backscatter_rssi(a, AutoTune::On, Band::Etsi, 866.0, 30.0, Some(sh), 0, 0);
            let to = ch.turn_on_threshold(a, AutoTune::On, Band::Etsi, 866.0, Some(sh), 0);
            assert!(rssi < prev_rssi, "rssi sensitivity is negative");
            assert!(to > prev_to, "turn-on sensitivity is positive");
            prev_rssi = rssi;
            prev_to = to;
        }
    }

    #[test]
    fn loaded_turn_on_stays_more_than_10_db_below_max_power() {
        // worst case over the whole default parameter space, all tags,
        // full ripeness, every turn-on frequency
        let ch = Channel::new(ChannelParams::default(), 1234).unwrap();
        for a in enumerate_addresses() {
            for at in [AutoTune::On, AutoTune::Off] {
                for band in [Band::Etsi, Band::Fcc] {
                    for &freq in band.turn_on_freqs() {
                        for sh in [1.0, 0.7, 0.35] {
                            let th =
                                ch.turn_on_threshold(a, at, band, freq, Some(sh), 3);
                            // the 1 dB ramp grid measures ceil(th); that
                            // value must stay more than 10 dB below the
                            // 30 dBm maximum
                            assert!(
                                th.ceil() < 20.0,
                                "threshold {th} at {a} {band:?} {freq} leaves < 10 dB margin"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn unloaded_rssi_baselines_sit_in_the_calibration_window() {
        let ch = Channel::new(ChannelParams::default(), 99).unwrap();
        for a in enumerate_addresses().into_iter().step_by(7) {
            for at in [AutoTune::On, AutoTune::Off] {
                for band in [Band::Etsi, Band::Fcc] {
                    let r = ch.response(a, at, band);
                    assert!((-60.0..=-53.0).contains(&r.rssi_base_unloaded));
                }
            }
        }
    }

    #[test]
    fn phase_is_wrapped() {
        let ch = Channel::new(ChannelParams::default(), 17).unwrap();
        for a in enumerate_addresses().into_iter().take(30) {
            let p = ch.backscatter_phase(a, AutoTune::On, Band::Fcc, 915.0, 30.0, Some(0.5), 1, 2);
            assert!((0.0..360.0).contains(&p));
        }
    }

    #[test]
    fn eccentric_tags_see_a_delayed_onset() {
        let params = ChannelParams::default();
        let ch = Channel::new(params, 21).unwrap();
        let a = addr(1, 1, 1, TagPosition::A);
        let b = addr(1, 1, 1, TagPosition::B);
        assert_eq!(ch.onset_delay_hours(a), 0.0);
        let d = ch.onset_delay_hours(b);
        assert!((0.0..=18.0).contains(&d));
        // delay is stable
        assert_eq!(ch.onset_delay_hours(b), d);
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        let p = ChannelParams {
            missed_read_prob: 1.5,
            ..ChannelParams::default()
        };
        assert!(matches!(Channel::new(p, 0), Err(Error::Config(_))));
    }
}
