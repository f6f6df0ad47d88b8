//! Biphasic stimulation pulse trains through a modeled DAC.
//!
//! A train is stored as a list of phases (start, width, code). Voltages are
//! encoded around the DAC midscale: a positive phase sits `amplitude` above
//! midscale, a negative phase the same number of codes below it. Because both
//! halves of a pair use the same integer offset, the signed charge of any
//! train built here is exactly zero in integer arithmetic.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StimError {
    #[error("voltage {0} V outside DAC range [0, {1}] V")]
    VoltageOutOfRange(f64, f64),
    #[error("invalid DAC model: {0}")]
    InvalidDac(String),
    #[error("invalid stimulus command: {0}")]
    InvalidCommand(String),
}

/// Converter parameters. Defaults model a 12-bit, 4-channel part on a 5 V reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DacModel {
    pub resolution_bits: u8,
    pub reference_voltage: f64,
    pub channel_count: u8,
    /// Sample period used by the dense renderer.
    pub sample_period_ms: u32,
}

impl Default for DacModel {
    fn default() -> Self {
        Self {
            resolution_bits: 12,
            reference_voltage: 5.0,
            channel_count: 4,
            sample_period_ms: 1,
        }
    }
}

impl DacModel {
    pub fn new(resolution_bits: u8, reference_voltage: f64) -> Result<Self, StimError> {
        let dac = Self {
            resolution_bits,
            reference_voltage,
            ..Self::default()
        };
        dac.validate()?;
        Ok(dac)
    }

    pub fn validate(&self) -> Result<(), StimError> {
        if !(8..=16).contains(&self.resolution_bits) {
            return Err(StimError::InvalidDac(format!(
                "resolution_bits {} not in [8, 16]",
                self.resolution_bits
            )));
        }
        if !(self.reference_voltage.is_finite() && self.reference_voltage > 0.0) {
            return Err(StimError::InvalidDac(format!(
                "reference_voltage {} must be positive",
                self.reference_voltage
            )));
        }
        if self.channel_count == 0 {
            return Err(StimError::InvalidDac(
                "channel_count must be nonzero".into(),
            ));
        }
        if self.sample_period_ms == 0 {
            return Err(StimError::InvalidDac(
                "sample_period_ms must be nonzero".into(),
            ));
        }
        Ok(())
    }

    /// Size of one code step in volts.
    pub fn lsb(&self) -> f64 {
        self.reference_voltage / f64::from(1u32 << self.resolution_bits)
    }

    pub fn max_code(&self) -> u16 {
        ((1u32 << self.resolution_bits) - 1) as u16
    }

    pub fn midscale(&self) -> u16 {
        (1u32 << (self.resolution_bits - 1)) as u16
    }

    pub fn code_to_voltage(&self, code: u16) -> f64 {
        f64::from(code) * self.lsb()
    }

    /// Highest voltage the converter can actually output.
    pub fn full_scale_voltage(&self) -> f64 {
        self.code_to_voltage(self.max_code())
    }
}

/// Maps a voltage to the nearest DAC code, saturating at the top code.
pub fn quantize_voltage(v: f64, dac: &DacModel) -> Result<u16, StimError> {
    if !(v.is_finite() && (0.0..=dac.reference_voltage).contains(&v)) {
        return Err(StimError::VoltageOutOfRange(v, dac.reference_voltage));
    }
    let code = (v / dac.lsb()).round();
    Ok(code.min(f64::from(dac.max_code())) as u16)
}

/// Stimulation outputs on the backpack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    LeftAntenna,
    RightAntenna,
    Cerci,
    Spare,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::LeftAntenna,
        Channel::RightAntenna,
        Channel::Cerci,
        Channel::Spare,
    ];

    /// Bit position in a channel mask.
    pub fn bit(self) -> u8 {
        match self {
            Channel::LeftAntenna => 0,
            Channel::RightAntenna => 1,
            Channel::Cerci => 2,
            Channel::Spare => 3,
        }
    }
}

/// Set of channels, stored as the wire mask (bit0 left antenna .. bit3 spare).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ChannelSet(u8);

impl ChannelSet {
    pub const EMPTY: ChannelSet = ChannelSet(0);

    pub fn from_mask(mask: u8) -> Self {
        ChannelSet(mask & 0x0F)
    }

    pub fn single(channel: Channel) -> Self {
        ChannelSet(1 << channel.bit())
    }

    pub fn both_antennae() -> Self {
        Self::single(Channel::LeftAntenna).with(Channel::RightAntenna)
    }

    pub fn with(self, channel: Channel) -> Self {
        ChannelSet(self.0 | (1 << channel.bit()))
    }

    pub fn contains(self, channel: Channel) -> bool {
        self.0 & (1 << channel.bit()) != 0
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Channel> {
        Channel::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

impl fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self
            .iter()
            .map(|c| match c {
                Channel::LeftAntenna => "left",
                Channel::RightAntenna => "right",
                Channel::Cerci => "cerci",
                Channel::Spare => "spare",
            })
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join("+"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    PositiveFirst,
    NegativeFirst,
}

/// One stimulation request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusCommand {
    pub channels: ChannelSet,
    /// Per-phase peak, volts relative to midscale.
    pub amplitude_v: f64,
    pub pulse_width_ms: u32,
    pub duration_ms: u32,
    /// Midscale interval between consecutive biphasic pairs.
    pub inter_pulse_gap_ms: u32,
    pub polarity: Polarity,
}

impl StimulusCommand {
    pub fn new(
        channels: ChannelSet,
        amplitude_v: f64,
        pulse_width_ms: u32,
        duration_ms: u32,
    ) -> Self {
        Self {
            channels,
            amplitude_v,
            pulse_width_ms,
            duration_ms,
            inter_pulse_gap_ms: 0,
            polarity: Polarity::PositiveFirst,
        }
    }

    /// The protocol used throughout the experiments: 2.5 V, 12 ms phases.
    pub fn standard(channels: ChannelSet, duration_ms: u32) -> Self {
        Self::new(channels, 2.5, 12, duration_ms)
    }

    pub fn validate(&self, dac: &DacModel) -> Result<(), StimError> {
        if self.channels.is_empty() {
            return Err(StimError::InvalidCommand("no channel selected".into()));
        }
        let max_amp = dac.reference_voltage / 2.0;
        if !(self.amplitude_v.is_finite() && self.amplitude_v > 0.0 && self.amplitude_v <= max_amp)
        {
            return Err(StimError::InvalidCommand(format!(
                "amplitude {} V not in (0, {}] V",
                self.amplitude_v, max_amp
            )));
        }
        if self.pulse_width_ms == 0 {
            return Err(StimError::InvalidCommand(
                "pulse width must be positive".into(),
            ));
        }
        if u64::from(self.duration_ms) < 2 * u64::from(self.pulse_width_ms) {
            return Err(StimError::InvalidCommand(format!(
                "duration {} ms shorter than one biphasic pair ({} ms)",
                self.duration_ms,
                2 * u64::from(self.pulse_width_ms)
            )));
        }
        Ok(())
    }
}

/// A constant-code interval of the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub start_ms: u32,
    pub width_ms: u32,
    pub code: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    pub channels: ChannelSet,
    pub phases: Vec<Phase>,
    pub midscale: u16,
    /// Requested train duration; the output rests at midscale after the last phase.
    pub duration_ms: u32,
}

impl PulseTrain {
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }

    pub fn pair_count(&self) -> usize {
        self.phases.len() / 2
    }

    /// Time from the first phase edge to the end of the last phase.
    pub fn span_ms(&self) -> u32 {
        self.phases.last().map_or(0, |p| p.start_ms + p.width_ms)
    }

    pub fn code_at(&self, t_ms: f64) -> u16 {
        self.phases
            .iter()
            .find(|p| t_ms >= f64::from(p.start_ms) && t_ms < f64::from(p.start_ms + p.width_ms))
            .map_or(self.midscale, |p| p.code)
    }

    /// Samples the train on the DAC sample grid over `[0, duration_ms)`.
    pub fn render_dense(&self, dac: &DacModel) -> Vec<DenseSample> {
        (0..self.duration_ms)
            .step_by(dac.sample_period_ms as usize)
            .map(|t| {
                let code = self.code_at(f64::from(t));
                DenseSample {
                    time_ms: t,
                    code,
                    voltage_v: dac.code_to_voltage(code),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DenseSample {
    pub time_ms: u32,
    pub code: u16,
    pub voltage_v: f64,
}

/// Writes rendered samples as `time_ms,code,voltage_v` CSV.
pub fn write_dense_csv<W: Write>(samples: &[DenseSample], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_ms", "code", "voltage_v"])?;
    for s in samples {
        w.write_record([
            s.time_ms.to_string(),
            s.code.to_string(),
            format!("{:.6}", s.voltage_v),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Number of complete biphasic pairs that fit in the command's duration.
pub fn pair_count_for(cmd: &StimulusCommand) -> u32 {
    let pair = 2 * u64::from(cmd.pulse_width_ms);
    let gap = u64::from(cmd.inter_pulse_gap_ms);
    ((u64::from(cmd.duration_ms) + gap) / (pair + gap)) as u32
}

/// Builds the biphasic train for a validated command. Partial trailing pairs are dropped.
pub fn build_pulse_train(cmd: &StimulusCommand, dac: &DacModel) -> Result<PulseTrain, StimError> {
    cmd.validate(dac)?;
    let mid = dac.midscale();
    let headroom = mid.min(dac.max_code() - mid);
    let offset = ((cmd.amplitude_v / dac.lsb()).round() as u16).min(headroom);
    if offset == 0 {
        return Err(StimError::InvalidCommand(format!(
            "amplitude {} V below one DAC step",
            cmd.amplitude_v
        )));
    }
    let (first, second) = match cmd.polarity {
        Polarity::PositiveFirst => (mid + offset, mid - offset),
        Polarity::NegativeFirst => (mid - offset, mid + offset),
    };
    let pairs = pair_count_for(cmd);
    let width = cmd.pulse_width_ms;
    let mut phases = Vec::with_capacity(2 * pairs as usize);
    let mut t = 0;
    for _ in 0..pairs {
        phases.push(Phase {
            start_ms: t,
            width_ms: width,
            code: first,
        });
        phases.push(Phase {
            start_ms: t + width,
            width_ms: width,
            code: second,
        });
        t += 2 * width + cmd.inter_pulse_gap_ms;
    }
    Ok(PulseTrain {
        channels: cmd.channels,
        phases,
        midscale: mid,
        duration_ms: cmd.duration_ms,
    })
}

/// Signed charge in code·ms. Integer, so zero means exactly balanced.
pub fn charge_residual_codes(train: &PulseTrain) -> i64 {
    train
        .phases
        .iter()
        .map(|p| (i64::from(p.code) - i64::from(train.midscale)) * i64::from(p.width_ms))
        .sum()
}

/// Signed charge residual of a train in volt·milliseconds.
pub fn verify_charge_balance(train: &PulseTrain, dac: &DacModel) -> f64 {
    charge_residual_codes(train) as f64 * dac.lsb()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dac() -> DacModel {
        DacModel::default()
    }

    #[test]
    fn quantize_reference_points() {
        let d = dac();
        assert_eq!(quantize_voltage(0.0, &d).unwrap(), 0);
        assert_eq!(quantize_voltage(2.5, &d).unwrap(), 2048);
        assert_eq!(quantize_voltage(5.0, &d).unwrap(), 4095);
        assert!(matches!(
            quantize_voltage(5.01, &d),
            Err(StimError::VoltageOutOfRange(..))
        ));
        assert!(quantize_voltage(-0.1, &d).is_err());
        assert!(quantize_voltage(f64::NAN, &d).is_err());
    }

    #[test]
    fn dac_validation() {
        assert!(DacModel::new(7, 5.0).is_err());
        assert!(DacModel::new(17, 5.0).is_err());
        assert!(DacModel::new(12, 0.0).is_err());
        let d = DacModel::new(16, 3.3).unwrap();
        assert_eq!(d.max_code(), 65535);
        assert_eq!(d.midscale(), 32768);
    }

    #[test]
    fn standard_protocol_pair_counts() {
        let d = dac();
        let short = build_pulse_train(
            &StimulusCommand::standard(ChannelSet::single(Channel::Cerci), 400),
            &d,
        )
        .unwrap();
        assert_eq!(short.pair_count(), 16);
        assert_eq!(short.span_ms(), 384);
        let long = build_pulse_train(
            &StimulusCommand::standard(ChannelSet::single(Channel::Cerci), 1200),
            &d,
        )
        .unwrap();
        assert_eq!(long.pair_count(), 50);
        assert_eq!(long.span_ms(), 1200);
    }

    #[test]
    fn too_short_duration_rejected() {
        let cmd = StimulusCommand::standard(ChannelSet::single(Channel::Cerci), 23);
        assert!(matches!(
            build_pulse_train(&cmd, &dac()),
            Err(StimError::InvalidCommand(_))
        ));
    }

    #[test]
    fn invalid_amplitudes_rejected() {
        let d = dac();
        for amp in [0.0, -1.0, 2.6, f64::INFINITY] {
            let cmd = StimulusCommand::new(ChannelSet::single(Channel::Cerci), amp, 12, 400);
            assert!(build_pulse_train(&cmd, &d).is_err(), "amp {amp}");
        }
        let empty = StimulusCommand::new(ChannelSet::EMPTY, 2.5, 12, 400);
        assert!(empty.validate(&d).is_err());
    }

    #[test]
    fn full_swing_fits_code_range() {
        let d = dac();
        let train = build_pulse_train(
            &StimulusCommand::standard(ChannelSet::single(Channel::Cerci), 400),
            &d,
        )
        .unwrap();
        let max = train.phases.iter().map(|p| p.code).max().unwrap();
        let min = train.phases.iter().map(|p| p.code).min().unwrap();
        assert_eq!(max, 4095);
        assert_eq!(min, 1);
        assert_eq!(charge_residual_codes(&train), 0);
    }

    #[test]
    fn removed_positive_phase_leaves_negative_charge() {
        let d = dac();
        let mut train = build_pulse_train(
            &StimulusCommand::standard(ChannelSet::single(Channel::Cerci), 400),
            &d,
        )
        .unwrap();
        let removed = train.phases.remove(0);
        let amplitude = d.code_to_voltage(removed.code) - d.code_to_voltage(train.midscale);
        let residual = verify_charge_balance(&train, &d);
        assert_eq!(residual, -amplitude * f64::from(removed.width_ms));
    }

    #[test]
    fn empty_train_is_balanced() {
        let train = PulseTrain {
            channels: ChannelSet::single(Channel::Spare),
            phases: vec![],
            midscale: 2048,
            duration_ms: 0,
        };
        assert_eq!(verify_charge_balance(&train, &dac()), 0.0);
    }

    #[test]
    fn negative_first_and_gaps() {
        let d = dac();
        let mut cmd = StimulusCommand::standard(ChannelSet::single(Channel::LeftAntenna), 100);
        cmd.polarity = Polarity::NegativeFirst;
        cmd.inter_pulse_gap_ms = 10;
        let train = build_pulse_train(&cmd, &d).unwrap();
        // (100 + 10) / (24 + 10) = 3 pairs, span 3*24 + 2*10
        assert_eq!(train.pair_count(), 3);
        assert_eq!(train.span_ms(), 92);
        assert!(train.phases[0].code < train.midscale);
        assert_eq!(train.phases[2].start_ms, 34);
        assert_eq!(verify_charge_balance(&train, &d), 0.0);
    }

    #[test]
    fn dense_render_rests_at_midscale() {
        let d = dac();
        let train = build_pulse_train(
            &StimulusCommand::standard(ChannelSet::single(Channel::Cerci), 400),
            &d,
        )
        .unwrap();
        let dense = train.render_dense(&d);
        assert_eq!(dense.len(), 400);
        assert_eq!(dense[0].code, 4095);
        assert_eq!(dense[12].code, 1);
        assert_eq!(dense[390].code, 2048);
        let sum: i64 = dense.iter().map(|s| i64::from(s.code) - 2048).sum();
        assert_eq!(sum, 0);
    }

    #[test]
    fn channel_set_display_and_mask() {
        let both = ChannelSet::both_antennae();
        assert_eq!(both.mask(), 0b11);
        assert_eq!(both.to_string(), "left+right");
        assert_eq!(ChannelSet::from_mask(0xF4).mask(), 0x04);
    }
}
