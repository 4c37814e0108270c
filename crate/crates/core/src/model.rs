//! Domain types shared by the solvers: segments, transistors, stimuli,
//! networks and sampled traces.
//!
//! A dendrite segment is one transistor driving a reservoir node, an axial
//! resistor from the reservoir node to the membrane node, and a leak resistor
//! from the membrane node to the segment's resting rail. Both capacitors have
//! their bottom plates on ground. An n-type segment rests at `vdd` and its
//! transistor pulls the reservoir towards ground; a p-type segment is the
//! complement.

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::analytic::CharacteristicSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what} must be strictly positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("invalid transistor model: {0}")]
    Transistor(String),
    #[error("invalid stimulus: {0}")]
    Stimulus(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("segment `{segment}` has no gate inputs")]
    NoGates { segment: String },
    #[error("segment `{segment}` gate references unknown segment `{target}`")]
    DanglingMembraneRef { segment: String, target: String },
    #[error("segment `{segment}` gate references unknown stimulus `{target}`")]
    DanglingStimulusRef { segment: String, target: String },
    #[error("trace channel `{0}` has a different length from the others")]
    RaggedTrace(String),
    #[error("trace channel `{0}` contains a non-finite sample")]
    NonFiniteSample(String),
    #[error("trace has no channel named `{0}`")]
    MissingChannel(String),
}

fn positive(what: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::NonPositive { what, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    NType,
    PType,
}

impl Polarity {
    /// Rail the transistor pulls the reservoir towards.
    pub fn drain_rail(self, vdd: f64) -> f64 {
        match self {
            Polarity::NType => 0.0,
            Polarity::PType => vdd,
        }
    }

    /// Rail the leak resistor pulls the membrane towards.
    pub fn leak_rail(self, vdd: f64) -> f64 {
        match self {
            Polarity::NType => vdd,
            Polarity::PType => 0.0,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::NType => "n",
            Polarity::PType => "p",
        })
    }
}

/// The passive RC network of a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcNetwork {
    /// Axial resistance between reservoir and membrane nodes, ohms.
    pub r_axial: f64,
    /// Leak resistance from membrane node to the resting rail, ohms.
    pub r_leak: f64,
    /// Reservoir capacitance, farads.
    pub c_reservoir: f64,
    /// Membrane capacitance, farads.
    pub c_membrane: f64,
}

impl RcNetwork {
    pub fn new(
        r_axial: f64,
        r_leak: f64,
        c_reservoir: f64,
        c_membrane: f64,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            r_axial: positive("axial resistance", r_axial)?,
            r_leak: positive("leak resistance", r_leak)?,
            c_reservoir: positive("reservoir capacitance", c_reservoir)?,
            c_membrane: positive("membrane capacitance", c_membrane)?,
        })
    }

    /// `R_A = R_L = r`, `C_R = C_M = c`.
    pub fn uniform(r: f64, c: f64) -> Result<Self, ModelError> {
        Self::new(r, r, c, c)
    }

    pub(crate) fn validate(&self) -> Result<(), ModelError> {
        Self::new(self.r_axial, self.r_leak, self.c_reservoir, self.c_membrane).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub polarity: Polarity,
    pub rc: RcNetwork,
}

impl SegmentParams {
    pub fn new(polarity: Polarity, rc: RcNetwork) -> Self {
        Self { polarity, rc }
    }

    pub fn n_type(rc: RcNetwork) -> Self {
        Self::new(Polarity::NType, rc)
    }

    pub fn p_type(rc: RcNetwork) -> Self {
        Self::new(Polarity::PType, rc)
    }
}

/// Quiescent membrane voltage of a segment: `vdd` for n-type, ground for
/// p-type.
pub fn rest_voltage(segment: &SegmentParams, vdd: f64) -> Result<f64, ModelError> {
    let vdd = positive("vdd", vdd)?;
    Ok(segment.polarity.leak_rail(vdd))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SwitchKind {
    /// Ideal switch at the threshold.
    HardSwitch,
    /// Logistic interpolation of conductance around the threshold.
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransistorModel {
    pub kind: SwitchKind,
    /// Gate threshold in volts. Measured from ground for n-type devices and
    /// downward from `vdd` for p-type devices.
    pub v_threshold: f64,
    pub r_on: f64,
    pub r_off: f64,
    /// Gate-voltage span over which a smoothed device moves from 10% to 90%
    /// of its conductance range.
    pub transition_width: f64,
}

impl TransistorModel {
    pub const DEFAULT_R_ON: f64 = 50.0;
    pub const DEFAULT_R_OFF: f64 = 10e6;
    pub const DEFAULT_TRANSITION_WIDTH: f64 = 0.05;
    pub const N_THRESHOLD: f64 = 1.7;
    pub const P_THRESHOLD: f64 = 2.2;

    pub fn new(
        kind: SwitchKind,
        v_threshold: f64,
        r_on: f64,
        r_off: f64,
        transition_width: f64,
    ) -> Result<Self, ModelError> {
        let m = Self {
            kind,
            v_threshold,
            r_on,
            r_off,
            transition_width,
        };
        m.validate()?;
        Ok(m)
    }

    /// Calibrated default device for the given polarity.
    pub fn default_for(polarity: Polarity) -> Self {
        let v_threshold = match polarity {
            Polarity::NType => Self::N_THRESHOLD,
            Polarity::PType => Self::P_THRESHOLD,
        };
        Self {
            kind: SwitchKind::Smoothed,
            v_threshold,
            r_on: Self::DEFAULT_R_ON,
            r_off: Self::DEFAULT_R_OFF,
            transition_width: Self::DEFAULT_TRANSITION_WIDTH,
        }
    }

    pub fn hard_switch(polarity: Polarity) -> Self {
        Self {
            kind: SwitchKind::HardSwitch,
            ..Self::default_for(polarity)
        }
    }

    pub fn with_threshold(mut self, v_threshold: f64) -> Self {
        self.v_threshold = v_threshold;
        self
    }

    pub fn with_r_on(mut self, r_on: f64) -> Self {
        self.r_on = r_on;
        self
    }

    pub fn with_r_off(mut self, r_off: f64) -> Self {
        self.r_off = r_off;
        self
    }

    pub fn with_transition_width(mut self, width: f64) -> Self {
        self.transition_width = width;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Transistor(msg));
        if !(self.r_on.is_finite() && self.r_off.is_finite()) {
            return bad("r_on and r_off must be finite".into());
        }
        if !(self.r_on > 0.0 && self.r_on < self.r_off) {
            return bad(format!(
                "need 0 < r_on < r_off, got r_on={} r_off={}",
                self.r_on, self.r_off
            ));
        }
        if !(self.v_threshold.is_finite() && self.v_threshold > 0.0) {
            return bad(format!("v_threshold must be > 0, got {}", self.v_threshold));
        }
        if self.kind == SwitchKind::Smoothed
            && !(self.transition_width.is_finite() && self.transition_width > 0.0)
        {
            return bad(format!(
                "transition_width must be > 0 for a smoothed device, got {}",
                self.transition_width
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stimulus {
    /// `amplitude` on `[t_start, t_start + width)`.
    SquarePulse {
        amplitude: f64,
        width: f64,
        t_start: f64,
    },
    /// `count` square pulses, one every `period`.
    PulseTrain {
        amplitude: f64,
        width: f64,
        period: f64,
        count: u32,
        t_start: f64,
    },
    /// Free membrane response of an RC network whose reservoir starts at
    /// `v0`, in deviation coordinates.
    AnalyticSpike {
        rc: RcNetwork,
        v0: f64,
        t_start: f64,
    },
    /// Uniformly sampled waveform, linearly interpolated, zero outside its
    /// support.
    Samples { t0: f64, dt: f64, values: Vec<f64> },
}

impl Stimulus {
    pub fn square_pulse(amplitude: f64, width: f64, t_start: f64) -> Result<Self, ModelError> {
        let s = Stimulus::SquarePulse {
            amplitude,
            width,
            t_start,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn pulse_train(
        amplitude: f64,
        width: f64,
        period: f64,
        count: u32,
        t_start: f64,
    ) -> Result<Self, ModelError> {
        let s = Stimulus::PulseTrain {
            amplitude,
            width,
            period,
            count,
            t_start,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn analytic_spike(rc: RcNetwork, v0: f64, t_start: f64) -> Result<Self, ModelError> {
        let s = Stimulus::AnalyticSpike { rc, v0, t_start };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Stimulus(msg.to_string()));
        let finite_start = |t: f64| t.is_finite() && t >= 0.0;
        match *self {
            Stimulus::SquarePulse {
                amplitude,
                width,
                t_start,
            } => {
                if !(amplitude.is_finite() && amplitude >= 0.0) {
                    return bad("amplitude must be >= 0");
                }
                if !(width.is_finite() && width > 0.0) {
                    return bad("width must be > 0");
                }
                if !finite_start(t_start) {
                    return bad("t_start must be >= 0");
                }
            }
            Stimulus::PulseTrain {
                amplitude,
                width,
                period,
                t_start,
                ..
            } => {
                if !(amplitude.is_finite() && amplitude >= 0.0) {
                    return bad("amplitude must be >= 0");
                }
                if !(width.is_finite() && width > 0.0) {
                    return bad("width must be > 0");
                }
                if !(period.is_finite() && period > width) {
                    return bad("period must exceed width");
                }
                if !finite_start(t_start) {
                    return bad("t_start must be >= 0");
                }
            }
            Stimulus::AnalyticSpike { rc, v0, t_start } => {
                rc.validate()?;
                if !(v0.is_finite() && v0 >= 0.0) {
                    return bad("v0 must be >= 0");
                }
                if !finite_start(t_start) {
                    return bad("t_start must be >= 0");
                }
            }
            Stimulus::Samples { t0, dt, ref values } => {
                if !(dt.is_finite() && dt > 0.0) {
                    return bad("sample spacing must be > 0");
                }
                if !t0.is_finite() {
                    return bad("sample origin must be finite");
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("samples must be finite");
                }
            }
        }
        Ok(())
    }

    /// Start time of the waveform's support.
    pub fn t_start(&self) -> f64 {
        match *self {
            Stimulus::SquarePulse { t_start, .. }
            | Stimulus::PulseTrain { t_start, .. }
            | Stimulus::AnalyticSpike { t_start, .. } => t_start,
            Stimulus::Samples { t0, .. } => t0,
        }
    }

    /// Copy of this stimulus shifted later in time by `dt`.
    pub fn delayed(&self, dt: f64) -> Stimulus {
        let mut s = self.clone();
        match &mut s {
            Stimulus::SquarePulse { t_start, .. }
            | Stimulus::PulseTrain { t_start, .. }
            | Stimulus::AnalyticSpike { t_start, .. } => *t_start += dt,
            Stimulus::Samples { t0, .. } => *t0 += dt,
        }
        s
    }

    /// Compiled form for repeated evaluation.
    pub fn prepare(&self) -> Result<PreparedStimulus<'_>, ModelError> {
        self.validate()?;
        let solution = match *self {
            Stimulus::AnalyticSpike { rc, v0, .. } => Some(
                CharacteristicSolution::new(v0, &rc)
                    .map_err(|e| ModelError::Stimulus(e.to_string()))?,
            ),
            _ => None,
        };
        Ok(PreparedStimulus {
            stimulus: self,
            solution,
        })
    }
}

/// A stimulus with its analytic solution precomputed.
#[derive(Debug, Clone)]
pub struct PreparedStimulus<'a> {
    stimulus: &'a Stimulus,
    solution: Option<CharacteristicSolution>,
}

impl PreparedStimulus<'_> {
    pub fn value(&self, t: f64) -> f64 {
        match *self.stimulus {
            Stimulus::SquarePulse {
                amplitude,
                width,
                t_start,
            } => {
                if t >= t_start && t < t_start + width {
                    amplitude
                } else {
                    0.0
                }
            }
            Stimulus::PulseTrain {
                amplitude,
                width,
                period,
                count,
                t_start,
            } => {
                if t < t_start {
                    return 0.0;
                }
                let k = ((t - t_start) / period).floor();
                if k >= f64::from(count) {
                    return 0.0;
                }
                let local = t - t_start - k * period;
                if local < width {
                    amplitude
                } else {
                    0.0
                }
            }
            Stimulus::AnalyticSpike { t_start, .. } => {
                if t < t_start {
                    0.0
                } else {
                    // prepare() always fills the solution for spikes
                    self.solution
                        .as_ref()
                        .map_or(0.0, |s| s.membrane_voltage(t - t_start))
                }
            }
            Stimulus::Samples { t0, dt, ref values } => {
                if values.is_empty() || t < t0 {
                    return 0.0;
                }
                let x = (t - t0) / dt;
                let i = x.floor() as usize;
                if i + 1 < values.len() {
                    let frac = x - i as f64;
                    values[i] + (values[i + 1] - values[i]) * frac
                } else if i + 1 == values.len() && x == i as f64 {
                    values[i]
                } else {
                    0.0
                }
            }
        }
    }
}

/// Value of a stimulus at time `t`.
pub fn stimulus_value(stimulus: &Stimulus, t: f64) -> Result<f64, ModelError> {
    Ok(stimulus.prepare()?.value(t))
}

/// What drives one gate of a segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GateSource {
    Stimulus(String),
    /// Membrane node of the named segment.
    Membrane(String),
}

impl GateSource {
    pub fn name(&self) -> &str {
        match self {
            GateSource::Stimulus(n) | GateSource::Membrane(n) => n,
        }
    }
}

/// One segment inside a network. All gates are identical devices in parallel
/// on the segment's reservoir node.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInstance {
    pub name: String,
    pub params: SegmentParams,
    pub transistor: TransistorModel,
    pub gates: Vec<GateSource>,
}

impl SegmentInstance {
    /// Segment with the default transistor for its polarity.
    pub fn new(name: impl Into<String>, params: SegmentParams, gates: Vec<GateSource>) -> Self {
        Self {
            name: name.into(),
            transistor: TransistorModel::default_for(params.polarity),
            params,
            gates,
        }
    }

    pub fn with_transistor(mut self, transistor: TransistorModel) -> Self {
        self.transistor = transistor;
        self
    }
}

/// Validated graph of segments. Feedback loops are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    vdd: f64,
    segments: Vec<SegmentInstance>,
}

impl Network {
    pub fn new(vdd: f64, segments: Vec<SegmentInstance>) -> Result<Self, ModelError> {
        let vdd = positive("vdd", vdd)?;
        let mut names = HashSet::new();
        for seg in &segments {
            if !names.insert(seg.name.as_str()) {
                return Err(ModelError::DuplicateName(seg.name.clone()));
            }
            seg.params.rc.validate()?;
            seg.transistor.validate()?;
            if seg.gates.is_empty() {
                return Err(ModelError::NoGates {
                    segment: seg.name.clone(),
                });
            }
        }
        for seg in &segments {
            for gate in &seg.gates {
                if let GateSource::Membrane(target) = gate {
                    if !names.contains(target.as_str()) {
                        return Err(ModelError::DanglingMembraneRef {
                            segment: seg.name.clone(),
                            target: target.clone(),
                        });
                    }
                }
            }
        }
        Ok(Self { vdd, segments })
    }

    pub fn empty(vdd: f64) -> Result<Self, ModelError> {
        Self::new(vdd, Vec::new())
    }

    pub fn vdd(&self) -> f64 {
        self.vdd
    }

    pub fn segments(&self) -> &[SegmentInstance] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&SegmentInstance> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.name == name)
    }

    /// Names of every stimulus some gate reads.
    pub fn stimulus_refs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.segments.iter().flat_map(|s| {
            s.gates.iter().filter_map(move |g| match g {
                GateSource::Stimulus(n) => Some((s.name.as_str(), n.as_str())),
                GateSource::Membrane(_) => None,
            })
        })
    }
}

pub fn reservoir_channel(segment: &str) -> String {
    format!("{segment}.r")
}

pub fn membrane_channel(segment: &str) -> String {
    format!("{segment}.m")
}

/// Uniformly sampled multi-channel voltage record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    dt: f64,
    t0: f64,
    channels: IndexMap<String, Vec<f64>>,
}

impl Trace {
    pub fn new(
        dt: f64,
        t0: f64,
        channels: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, ModelError> {
        let dt = positive("trace dt", dt)?;
        let mut map = IndexMap::new();
        let mut len = None;
        for (name, samples) in channels {
            if *len.get_or_insert(samples.len()) != samples.len() {
                return Err(ModelError::RaggedTrace(name));
            }
            if samples.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteSample(name));
            }
            if map.insert(name.clone(), samples).is_some() {
                return Err(ModelError::DuplicateName(name));
            }
        }
        Ok(Self {
            dt,
            t0,
            channels: map,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.channels.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    pub fn require(&self, name: &str) -> Result<&[f64], ModelError> {
        self.channel(name)
            .ok_or_else(|| ModelError::MissingChannel(name.to_string()))
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.channels.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Trace restricted to the named channels, in the given order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Trace, ModelError> {
        let picked = names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                self.require(n).map(|s| (n.to_string(), s.to_vec()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Trace::new(self.dt, self.t0, picked)
    }

    /// Adds a channel; it must match the existing length.
    pub fn push_channel(&mut self, name: String, samples: Vec<f64>) -> Result<(), ModelError> {
        if !self.channels.is_empty() && samples.len() != self.len() {
            return Err(ModelError::RaggedTrace(name));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteSample(name));
        }
        if self.channels.contains_key(&name) {
            return Err(ModelError::DuplicateName(name));
        }
        self.channels.insert(name, samples);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic_rc() -> RcNetwork {
        RcNetwork::uniform(1e3, 1e-6).unwrap()
    }

    #[test]
    fn rest_voltage_follows_leak_rail() {
        let n = SegmentParams::n_type(generic_rc());
        let p = SegmentParams::p_type(generic_rc());
        assert_eq!(rest_voltage(&n, 5.0).unwrap(), 5.0);
        assert_eq!(rest_voltage(&p, 5.0).unwrap(), 0.0);
        assert!(rest_voltage(&n, 0.0).is_err());
    }

    #[test]
    fn rc_rejects_non_positive() {
        assert!(RcNetwork::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(RcNetwork::new(1.0, f64::INFINITY, 1.0, 1.0).is_err());
        assert!(RcNetwork::new(1.0, 1.0, -1e-6, 1.0).is_err());
        assert!(RcNetwork::new(1.0, 1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn transistor_invariants() {
        let d = TransistorModel::default_for(Polarity::NType);
        assert!(d.validate().is_ok());
        assert!(d.with_r_on(20e6).validate().is_err());
        assert!(d.with_threshold(0.0).validate().is_err());
        assert!(d.with_transition_width(0.0).validate().is_err());
        let hard = TransistorModel::hard_switch(Polarity::PType).with_transition_width(0.0);
        assert!(hard.validate().is_ok());
        let mut open = d;
        open.r_off = f64::INFINITY;
        assert!(open.validate().is_err());
    }

    #[test]
    fn square_pulse_values() {
        let s = Stimulus::square_pulse(1.7, 2e-3, 1e-3).unwrap();
        assert_eq!(stimulus_value(&s, 2e-3).unwrap(), 1.7);
        assert_eq!(stimulus_value(&s, 0.0).unwrap(), 0.0);
        assert_eq!(stimulus_value(&s, 3e-3).unwrap(), 0.0);
    }

    #[test]
    fn pulse_train_values() {
        let s = Stimulus::pulse_train(3.0, 0.4e-3, 1e-3, 4, 0.0).unwrap();
        assert_eq!(stimulus_value(&s, 1.2e-3).unwrap(), 3.0);
        assert_eq!(stimulus_value(&s, 1.5e-3).unwrap(), 0.0);
        assert_eq!(stimulus_value(&s, 3.1e-3).unwrap(), 3.0);
        // a fifth pulse would start at 4 ms
        assert_eq!(stimulus_value(&s, 4.1e-3).unwrap(), 0.0);
        assert!(Stimulus::pulse_train(3.0, 1e-3, 1e-3, 4, 0.0).is_err());
    }

    #[test]
    fn samples_interpolate_and_vanish_outside() {
        let s = Stimulus::Samples {
            t0: 1.0,
            dt: 0.5,
            values: vec![0.0, 2.0, 4.0],
        };
        assert_eq!(stimulus_value(&s, 0.9).unwrap(), 0.0);
        assert_eq!(stimulus_value(&s, 1.25).unwrap(), 1.0);
        assert_eq!(stimulus_value(&s, 2.0).unwrap(), 4.0);
        assert_eq!(stimulus_value(&s, 2.1).unwrap(), 0.0);
    }

    #[test]
    fn analytic_spike_starts_at_zero_and_rises() {
        let s = Stimulus::analytic_spike(generic_rc(), 2.0, 1e-3).unwrap();
        assert_eq!(stimulus_value(&s, 0.5e-3).unwrap(), 0.0);
        assert!(stimulus_value(&s, 1e-3).unwrap().abs() < 1e-12);
        assert!(stimulus_value(&s, 2e-3).unwrap() > 0.1);
    }

    #[test]
    fn stimulus_negative_amplitude_rejected() {
        assert!(Stimulus::square_pulse(-1.0, 1e-3, 0.0).is_err());
        assert!(Stimulus::square_pulse(1.0, 0.0, 0.0).is_err());
    }

    fn seg(name: &str, pol: Polarity, gates: &[GateSource]) -> SegmentInstance {
        SegmentInstance::new(name, SegmentParams::new(pol, generic_rc()), gates.to_vec())
    }

    #[test]
    fn network_rejects_dangling_membrane_ref() {
        let err = Network::new(
            5.0,
            vec![seg("a", Polarity::NType, &[GateSource::Membrane("b".into())])],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DanglingMembraneRef { .. }));
    }

    #[test]
    fn network_accepts_loops_and_forward_refs() {
        let ring = Network::new(
            5.0,
            vec![
                seg(
                    "a",
                    Polarity::NType,
                    &[
                        GateSource::Stimulus("s".into()),
                        GateSource::Membrane("b".into()),
                    ],
                ),
                seg("b", Polarity::PType, &[GateSource::Membrane("a".into())]),
                seg("c", Polarity::NType, &[GateSource::Membrane("c".into())]),
            ],
        );
        assert!(ring.is_ok());
    }

    #[test]
    fn network_rejects_duplicates_and_bad_vdd() {
        let s = GateSource::Stimulus("s".into());
        let dup = Network::new(
            5.0,
            vec![
                seg("a", Polarity::NType, &[s.clone()]),
                seg("a", Polarity::NType, &[s.clone()]),
            ],
        );
        assert!(matches!(dup, Err(ModelError::DuplicateName(_))));
        assert!(Network::new(0.0, vec![]).is_err());
        assert!(Network::new(5.0, vec![seg("a", Polarity::NType, &[])]).is_err());
    }

    #[test]
    fn trace_rejects_ragged_and_non_finite() {
        let ragged = Trace::new(
            1.0,
            0.0,
            vec![("a".to_string(), vec![0.0, 1.0]), ("b".to_string(), vec![0.0])],
        );
        assert!(matches!(ragged, Err(ModelError::RaggedTrace(_))));
        let nan = Trace::new(1.0, 0.0, vec![("a".to_string(), vec![f64::NAN])]);
        assert!(nan.is_err());
        assert!(Trace::new(0.0, 0.0, Vec::<(String, Vec<f64>)>::new()).is_err());
    }
}
