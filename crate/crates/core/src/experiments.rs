//! Built-in circuits and sweep drivers for the standard characterisation
//! experiments: delay, gain, chains, integration, sound localisation and
//! the looped bursting neuron.
//!
//! Every sweep point is an independent simulation; results are collected in
//! input order so tables are identical however the points are scheduled.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::analytic::{AnalyticError, CharacteristicSolution};
use crate::measure::{
    self, count_spikes, peak, peak_from_start, MeasureError, PairedInputCircuit, Rests,
    SpikeCriteria,
};
use crate::model::{
    membrane_channel, GateSource, ModelError, Network, Polarity, RcNetwork, SegmentInstance,
    SegmentParams, Stimulus, Trace, TransistorModel,
};
use crate::netlist::Netlist;
use crate::table::{ResultTable, Value};
use crate::transient::{simulate, Method, PassiveLadder, SimConfig, SimError, Simulator};

pub const VDD: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ExperimentError>;

/// Maps `f` over `items`, in parallel when enabled, keeping input order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Transistor models for the n-type and p-type segments of a circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Devices {
    pub n: TransistorModel,
    pub p: TransistorModel,
}

impl Default for Devices {
    fn default() -> Self {
        Self {
            n: TransistorModel::default_for(Polarity::NType),
            p: TransistorModel::default_for(Polarity::PType),
        }
    }
}

impl Devices {
    pub fn for_polarity(&self, polarity: Polarity) -> TransistorModel {
        match polarity {
            Polarity::NType => self.n,
            Polarity::PType => self.p,
        }
    }

    /// Low on-resistance parts for the 22 nF / 220 Ω chain, whose 4.8 µs
    /// time constant is far shorter than the default device's discharge.
    pub fn chain() -> Self {
        let d = Self::default();
        Self {
            n: d.n.with_r_on(5.0),
            p: d.p.with_r_on(5.0),
        }
    }

    /// Softer devices calibrated so the ring's burst windows sit on the
    /// tabled P8 leak resistances.
    pub fn ring() -> Self {
        Self {
            n: TransistorModel::default_for(Polarity::NType)
                .with_threshold(1.3054)
                .with_transition_width(0.27209)
                .with_r_on(80.81),
            p: TransistorModel::default_for(Polarity::PType)
                .with_threshold(2.0247)
                .with_transition_width(0.29514)
                .with_r_on(82.163),
        }
    }

    /// Devices that keep the coincidence detector's output stage out of
    /// saturation so the response to the separation stays peaked.
    pub fn localisation() -> Self {
        Self {
            n: TransistorModel::default_for(Polarity::NType)
                .with_threshold(1.0223)
                .with_transition_width(0.16212)
                .with_r_on(13.858),
            p: TransistorModel::default_for(Polarity::PType)
                .with_threshold(2.0315)
                .with_transition_width(1.0785)
                .with_r_on(6126.0),
        }
    }
}

fn segment(
    name: &str,
    polarity: Polarity,
    rc: RcNetwork,
    gates: Vec<GateSource>,
    devices: &Devices,
) -> SegmentInstance {
    SegmentInstance::new(name, SegmentParams::new(polarity, rc), gates)
        .with_transistor(devices.for_polarity(polarity))
}

fn stim(name: &str) -> GateSource {
    GateSource::Stimulus(name.to_string())
}

fn membrane(name: &str) -> GateSource {
    GateSource::Membrane(name.to_string())
}

fn single_input(name: &str, stimulus: Stimulus) -> BTreeMap<String, Stimulus> {
    BTreeMap::from([(name.to_string(), stimulus)])
}

// ---------------------------------------------------------------------------
// Sound localisation

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    A,
    B,
    C,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::A, Variant::B, Variant::C];

    /// `(R_A, R_L)` of the long-delay branch N1 and short branch N2.
    pub fn branch_values(self) -> ((f64, f64), (f64, f64)) {
        match self {
            Variant::A => ((1.42e3, 1.94e3), (205.0, 140.0)),
            Variant::B => ((2.18e3, 5.34e3), (196.0, 140.0)),
            Variant::C => ((2.7e3, 8.89e3), (197.0, 132.0)),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

pub const LOCALISATION_C: f64 = 1e-6;
/// `(R_A, R_L)` of the integrating p-type segment.
pub const LOCALISATION_P1: (f64, f64) = (13.0, 1e3);

/// Two n-type branches whose outputs gate one p-type integrator through
/// parallel transistors. The lead input drives N1, the lag input N2.
#[derive(Debug, Clone, PartialEq)]
pub struct Localiser {
    pub variant: Variant,
    pub network: Network,
    pub cfg: SimConfig,
}

impl Localiser {
    pub const LEAD: &'static str = "in1";
    pub const LAG: &'static str = "in2";
    pub const PROBE: &'static str = "p1.m";

    /// Netlist of this circuit driven at one separation.
    pub fn netlist(&self, pulse: &Stimulus, separation: f64) -> Netlist {
        Netlist::new(
            self.network.clone(),
            BTreeMap::from([
                (Self::LEAD.to_string(), pulse.clone()),
                (Self::LAG.to_string(), pulse.delayed(separation)),
            ]),
        )
        .with_probes(["n1", "n2", "p1"])
        .with_tran(self.cfg)
    }
}

impl PairedInputCircuit for Localiser {
    fn run(&self, lead: &Stimulus, lag: &Stimulus) -> std::result::Result<Trace, SimError> {
        let stimuli = BTreeMap::from([
            (Self::LEAD.to_string(), lead.clone()),
            (Self::LAG.to_string(), lag.clone()),
        ]);
        simulate(&self.network, &stimuli, self.cfg)
    }

    fn probe(&self) -> &str {
        Self::PROBE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalisationProtocol {
    pub amplitude: f64,
    pub width: f64,
    pub t_start: f64,
    pub max_separation: f64,
    pub step: f64,
    pub dt: f64,
    pub duration: f64,
}

impl Default for LocalisationProtocol {
    fn default() -> Self {
        Self {
            amplitude: 1.7,
            width: 2e-3,
            t_start: 1e-3,
            max_separation: 10e-3,
            step: 0.25e-3,
            dt: 2e-6,
            duration: 40e-3,
        }
    }
}

impl LocalisationProtocol {
    pub fn pulse(&self) -> Result<Stimulus> {
        Ok(Stimulus::square_pulse(self.amplitude, self.width, self.t_start)?)
    }

    pub fn separations(&self) -> Vec<f64> {
        let n = (self.max_separation / self.step).round() as usize;
        (0..=n).map(|k| k as f64 * self.step).collect()
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(self.dt, self.duration)
    }
}

pub fn build_sound_localisation(variant: Variant) -> Result<Localiser> {
    build_sound_localisation_with(variant, &Devices::localisation(), SimConfig::new(2e-6, 40e-3))
}

pub fn build_sound_localisation_with(
    variant: Variant,
    devices: &Devices,
    cfg: SimConfig,
) -> Result<Localiser> {
    let ((ra1, rl1), (ra2, rl2)) = variant.branch_values();
    let c = LOCALISATION_C;
    let network = Network::new(
        VDD,
        vec![
            segment("n1", Polarity::NType, RcNetwork::new(ra1, rl1, c, c)?, vec![stim(Localiser::LEAD)], devices),
            segment("n2", Polarity::NType, RcNetwork::new(ra2, rl2, c, c)?, vec![stim(Localiser::LAG)], devices),
            segment(
                "p1",
                Polarity::PType,
                RcNetwork::new(LOCALISATION_P1.0, LOCALISATION_P1.1, c, c)?,
                vec![membrane("n1"), membrane("n2")],
                devices,
            ),
        ],
    )?;
    Ok(Localiser {
        variant,
        network,
        cfg,
    })
}

/// `(separation, peak P1 deviation)` for each separation in the protocol.
pub fn run_sound_localisation(variant: Variant) -> Result<Vec<(f64, f64)>> {
    run_sound_localisation_with(variant, &Devices::localisation(), &LocalisationProtocol::default())
}

pub fn run_sound_localisation_with(
    variant: Variant,
    devices: &Devices,
    protocol: &LocalisationProtocol,
) -> Result<Vec<(f64, f64)>> {
    let circuit = build_sound_localisation_with(variant, devices, protocol.sim_config())?;
    Ok(measure::response_curve(&circuit, &protocol.pulse()?, &protocol.separations())?)
}

/// Passive coincidence circuit: two RC ladders summed at an ideal output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassiveCoincidence {
    pub long: PassiveLadder,
    pub short: PassiveLadder,
    pub cfg: SimConfig,
}

impl PassiveCoincidence {
    pub const STAGES: usize = 3;
    pub const R_LEAK: f64 = 10e3;
    pub const R_SHORT: f64 = 100.0;
    pub const PROBE: &'static str = "out";

    pub fn new(r_axial: f64, cfg: SimConfig) -> Result<Self> {
        let ladder = |r| PassiveLadder::new(Self::STAGES, r, Self::R_LEAK, LOCALISATION_C);
        Ok(Self {
            long: ladder(r_axial)?,
            short: ladder(Self::R_SHORT)?,
            cfg,
        })
    }
}

impl PairedInputCircuit for PassiveCoincidence {
    fn run(&self, lead: &Stimulus, lag: &Stimulus) -> std::result::Result<Trace, SimError> {
        let last = PassiveLadder::stage_channel(Self::STAGES - 1);
        let a = self.long.simulate(lead, self.cfg)?;
        let b = self.short.simulate(lag, self.cfg)?;
        let sum = a.require(&last)?.iter().zip(b.require(&last)?).map(|(x, y)| x + y).collect();
        Ok(Trace::new(a.dt(), a.t0(), [(Self::PROBE.to_string(), sum)])?)
    }

    fn probe(&self) -> &str {
        Self::PROBE
    }
}

pub const PASSIVE_BASELINE_R: [f64; 5] = [500.0, 1000.0, 2000.0, 3000.0, 4000.0];

/// One response curve per long-branch axial resistance.
pub fn run_passive_localisation_baseline(r_axial: &[f64]) -> Result<Vec<Vec<(f64, f64)>>> {
    run_passive_localisation_baseline_with(r_axial, &LocalisationProtocol::default())
}

pub fn run_passive_localisation_baseline_with(
    r_axial: &[f64],
    protocol: &LocalisationProtocol,
) -> Result<Vec<Vec<(f64, f64)>>> {
    if r_axial.is_empty() {
        return Err(ExperimentError::Invalid("no branch resistances given".into()));
    }
    let pulse = protocol.pulse()?;
    let separations = protocol.separations();
    r_axial
        .iter()
        .map(|&r| {
            let circuit = PassiveCoincidence::new(r, protocol.sim_config())?;
            Ok(measure::response_curve(&circuit, &pulse, &separations)?)
        })
        .collect()
}

/// Index of the largest value; ties go to the first.
pub fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

// ---------------------------------------------------------------------------
// Bursting neuron

/// `(name, R_L)` of the ring segments before the tunable P8; all share
/// `R_A = 220 Ω`.
pub const RING_SEGMENTS: [(&str, f64); 7] = [
    ("n1", 1000.0),
    ("p2", 377.0),
    ("n3", 220.0),
    ("p4", 438.0),
    ("n5", 187.0),
    ("p6", 390.0),
    ("n7", 220.0),
];
pub const RING_R_AXIAL: f64 = 220.0;
pub const RING_C_FIRST: f64 = 3.3e-9;
pub const RING_C: f64 = 22e-9;
/// P8 leak resistances giving one, two and three spikes.
pub const RING_P8_R_LEAK: [f64; 3] = [127.0, 231.0, 251.0];
pub const RING_INPUT: &str = "in";

/// Ring of eight alternating segments fed back from P8 into N1, which also
/// reads the external input.
pub fn build_bursting_neuron(p8_r_leak: f64) -> Result<Network> {
    build_bursting_neuron_with(p8_r_leak, &Devices::ring())
}

pub fn build_bursting_neuron_with(p8_r_leak: f64, devices: &Devices) -> Result<Network> {
    let names: Vec<&str> = RING_SEGMENTS.iter().map(|(n, _)| *n).chain(["p8"]).collect();
    let mut segments = Vec::with_capacity(8);
    for (k, name) in names.iter().enumerate() {
        let (polarity, r_leak, c) = match k {
            0 => (Polarity::NType, RING_SEGMENTS[0].1, RING_C_FIRST),
            7 => (Polarity::PType, p8_r_leak, RING_C),
            _ if k % 2 == 0 => (Polarity::NType, RING_SEGMENTS[k].1, RING_C),
            _ => (Polarity::PType, RING_SEGMENTS[k].1, RING_C),
        };
        let gates = if k == 0 {
            vec![stim(RING_INPUT), membrane("p8")]
        } else {
            vec![membrane(names[k - 1])]
        };
        segments.push(segment(name, polarity, RcNetwork::new(RING_R_AXIAL, r_leak, c, c)?, gates, devices));
    }
    Ok(Network::new(VDD, segments)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstProtocol {
    pub amplitude: f64,
    /// Must be shorter than one trip around the ring so the input and the
    /// returning spike do not overlap.
    pub width: f64,
    pub t_start: f64,
    pub dt: f64,
    pub duration: f64,
    pub record_stride: usize,
    pub spikes: SpikeCriteria,
    /// Final deviation from rest above which the ring counts as latched.
    pub latch_tolerance: f64,
}

impl Default for BurstProtocol {
    fn default() -> Self {
        Self {
            amplitude: 5.0,
            width: 11.76e-6,
            t_start: 10e-6,
            dt: 10e-9,
            duration: 2e-3,
            record_stride: 20,
            spikes: SpikeCriteria::new(VDD),
            latch_tolerance: 0.05,
        }
    }
}

impl BurstProtocol {
    pub fn pulse(&self) -> Result<Stimulus> {
        Ok(Stimulus::square_pulse(self.amplitude, self.width, self.t_start)?)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(self.dt, self.duration).with_stride(self.record_stride)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Burst {
    /// Spikes on N1's membrane.
    pub spikes: usize,
    /// Whether N1 ends back at its resting level.
    pub returned_to_rest: bool,
}

pub fn run_bursting_neuron(p8_r_leak: f64, protocol: &BurstProtocol) -> Result<Burst> {
    run_bursting_neuron_with(p8_r_leak, &Devices::ring(), protocol)
}

pub fn run_bursting_neuron_with(
    p8_r_leak: f64,
    devices: &Devices,
    protocol: &BurstProtocol,
) -> Result<Burst> {
    let net = build_bursting_neuron_with(p8_r_leak, devices)?;
    let trace = simulate(&net, &single_input(RING_INPUT, protocol.pulse()?), protocol.sim_config())?;
    let probe = membrane_channel("n1");
    let samples = trace.require(&probe)?;
    let rest = samples[0];
    let last = samples[samples.len() - 1];
    Ok(Burst {
        spikes: count_spikes(&trace, &probe, rest, protocol.spikes)?,
        returned_to_rest: (last - rest).abs() <= protocol.latch_tolerance,
    })
}

pub fn bursting_neuron_netlist(p8_r_leak: f64, protocol: &BurstProtocol) -> Result<Netlist> {
    Ok(Netlist::new(
        build_bursting_neuron(p8_r_leak)?,
        single_input(RING_INPUT, protocol.pulse()?),
    )
    .with_probes([RING_INPUT, "n1", "p8"])
    .with_tran(protocol.sim_config()))
}

/// Spike counts over a list of P8 leak resistances.
pub fn burst_sweep(p8_r_leak: &[f64], protocol: &BurstProtocol) -> Result<ResultTable> {
    let bursts = par_map(p8_r_leak, |&r| run_bursting_neuron(r, protocol))?;
    let mut table = ResultTable::new(["p8_r_leak_ohm", "spikes", "returned_to_rest"]);
    for (&r, b) in p8_r_leak.iter().zip(bursts) {
        table.push(vec![r.into(), b.spikes.into(), b.returned_to_rest.to_string().into()]);
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Single-segment characterisation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Characterisation {
    DelaySweep,
    GainSweep,
    ChainComparison,
    TemporalIntegration,
    SpatialIntegration,
}

impl Characterisation {
    pub const ALL: [Characterisation; 5] = [
        Characterisation::DelaySweep,
        Characterisation::GainSweep,
        Characterisation::ChainComparison,
        Characterisation::TemporalIntegration,
        Characterisation::SpatialIntegration,
    ];
}

/// Knobs shared by the characterisation runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacterisationOptions {
    /// Step for the millisecond-scale single-segment runs.
    pub dt: f64,
    /// Step for the microsecond-scale chain comparison.
    pub chain_dt: f64,
    pub method: Method,
}

impl Default for CharacterisationOptions {
    fn default() -> Self {
        Self {
            dt: 1e-6,
            chain_dt: 5e-9,
            method: Method::BackwardEuler,
        }
    }
}

impl CharacterisationOptions {
    /// The same options with every step divided by `factor`.
    pub fn refined(self, factor: f64) -> Self {
        Self {
            dt: self.dt / factor,
            chain_dt: self.chain_dt / factor,
            ..self
        }
    }

    fn config(&self, duration: f64) -> SimConfig {
        SimConfig::new(self.dt, duration).with_method(self.method)
    }
}

pub const SWEEP_AMPLITUDES: [f64; 15] = [
    1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0, 3.25, 3.5, 3.75, 4.0, 4.25, 4.5, 4.75, 5.0,
];
pub const CHARACTERISATION_WIDTH: f64 = 2e-3;
pub const CHARACTERISATION_START: f64 = 1e-3;

/// One n- or p-type segment driven from a stimulus called `in`.
pub fn single_segment(polarity: Polarity, rc: RcNetwork, inputs: usize) -> Result<Network> {
    let gates = (0..inputs)
        .map(|k| stim(&if k == 0 { "in".to_string() } else { format!("in{}", k + 1) }))
        .collect();
    Ok(Network::new(VDD, vec![segment("d1", polarity, rc, gates, &Devices::default())])?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseResponse {
    pub delay: Option<f64>,
    pub gain: f64,
    pub peak: f64,
}

/// Drives `d1` with one square pulse and measures its membrane response.
pub fn pulse_response(
    polarity: Polarity,
    rc: RcNetwork,
    amplitude: f64,
    cfg: SimConfig,
) -> Result<PulseResponse> {
    let net = single_segment(polarity, rc, 1)?;
    let pulse = Stimulus::square_pulse(amplitude, CHARACTERISATION_WIDTH, CHARACTERISATION_START)?;
    let trace = simulate(&net, &single_input("in", pulse), cfg)?;
    let out = membrane_channel("d1");
    let rests = Rests::from_start(&trace, "in", &out)?;
    let floor = measure::DEFAULT_FLOOR_FRACTION * VDD;
    Ok(PulseResponse {
        delay: measure::delay(&trace, "in", &out, rests, floor)?,
        gain: measure::gain(&trace, "in", &out, rests)?,
        peak: peak(&trace, &out, rests.output)?.magnitude,
    })
}

/// Time allowed for a uniform `R`/`C` segment to respond and settle.
fn settle_time(r: f64, c: f64) -> f64 {
    CHARACTERISATION_START + CHARACTERISATION_WIDTH + 10.0 * r * c
}

pub fn run_characterisation(kind: Characterisation) -> Result<ResultTable> {
    run_characterisation_with(kind, &CharacterisationOptions::default())
}

pub fn run_characterisation_with(
    kind: Characterisation,
    opts: &CharacterisationOptions,
) -> Result<ResultTable> {
    match kind {
        Characterisation::DelaySweep => delay_sweep(opts),
        Characterisation::GainSweep => gain_sweep(opts),
        Characterisation::ChainComparison => chain_comparison(opts),
        Characterisation::TemporalIntegration => temporal_integration(opts),
        Characterisation::SpatialIntegration => spatial_integration(opts),
    }
}

const POLARITIES: [Polarity; 2] = [Polarity::NType, Polarity::PType];

/// Delay and gain over amplitudes 1.5–5 V for `R_A = R_L` = 1–10 kΩ.
fn delay_sweep(opts: &CharacterisationOptions) -> Result<ResultTable> {
    let mut points = Vec::new();
    for pol in POLARITIES {
        for k in 1..=10 {
            for amp in SWEEP_AMPLITUDES {
                points.push((pol, k as f64 * 1e3, amp));
            }
        }
    }
    let c = 1e-6;
    let results = par_map(&points, |&(pol, r, amp)| {
        pulse_response(pol, RcNetwork::uniform(r, c)?, amp, opts.config(settle_time(r, c)))
    })?;
    let mut table = ResultTable::new(["polarity", "r_ohm", "amplitude_v", "delay_s", "gain", "peak_v"]);
    for (&(pol, r, amp), res) in points.iter().zip(results) {
        table.push(vec![
            pol.to_string().into(),
            r.into(),
            amp.into(),
            res.delay.into(),
            res.gain.into(),
            res.peak.into(),
        ]);
    }
    Ok(table)
}

/// Gain over amplitudes for `R_A = 2 kΩ`, `R_L` = 1–8 kΩ.
fn gain_sweep(opts: &CharacterisationOptions) -> Result<ResultTable> {
    let mut points = Vec::new();
    for pol in POLARITIES {
        for k in 1..=8 {
            for amp in SWEEP_AMPLITUDES {
                points.push((pol, k as f64 * 1e3, amp));
            }
        }
    }
    let c = 1e-6;
    let results = par_map(&points, |&(pol, rl, amp)| {
        let rc = RcNetwork::new(2e3, rl, c, c)?;
        pulse_response(pol, rc, amp, opts.config(settle_time(2e3 + rl, c)))
    })?;
    let mut table = ResultTable::new(["polarity", "r_leak_ohm", "amplitude_v", "gain", "peak_v"]);
    for (&(pol, rl, amp), res) in points.iter().zip(results) {
        table.push(vec![
            pol.to_string().into(),
            rl.into(),
            amp.into(),
            res.gain.into(),
            res.peak.into(),
        ]);
    }
    Ok(table)
}

pub const CHAIN_STAGES: usize = 5;
pub const CHAIN_R: f64 = 220.0;
pub const CHAIN_C: f64 = 22e-9;
pub const CHAIN_PULSE: (f64, f64, f64) = (5.0, 8e-6, 10e-6);
pub const CHAIN_DURATION: f64 = 400e-6;

/// Alternating n/p chain starting with an n-type segment, `x0..x4`.
pub fn build_active_chain(stages: usize, devices: &Devices) -> Result<Network> {
    let rc = RcNetwork::uniform(CHAIN_R, CHAIN_C)?;
    let segments = (0..stages)
        .map(|k| {
            let pol = if k % 2 == 0 { Polarity::NType } else { Polarity::PType };
            let gate = if k == 0 { stim("in") } else { membrane(&format!("x{}", k - 1)) };
            segment(&format!("x{k}"), pol, rc, vec![gate], devices)
        })
        .collect();
    Ok(Network::new(VDD, segments)?)
}

/// Stage peaks of the passive ladder and the active chain under one pulse.
fn chain_comparison(opts: &CharacterisationOptions) -> Result<ResultTable> {
    let (amp, width, t0) = CHAIN_PULSE;
    let pulse = Stimulus::square_pulse(amp, width, t0)?;
    let cfg = SimConfig::new(opts.chain_dt, CHAIN_DURATION).with_method(opts.method);
    let passive = PassiveLadder::new(CHAIN_STAGES, CHAIN_R, CHAIN_R, CHAIN_C)?.simulate(&pulse, cfg)?;
    let net = build_active_chain(CHAIN_STAGES, &Devices::chain())?;
    let active = simulate(&net, &single_input("in", pulse), cfg)?;
    let mut table = ResultTable::new(["circuit", "stage", "peak_v", "t_peak_s"]);
    for k in 0..CHAIN_STAGES {
        let p = peak_from_start(&passive, &PassiveLadder::stage_channel(k))?;
        table.push(vec!["passive".into(), k.into(), p.magnitude.into(), p.t_peak.into()]);
    }
    for k in 0..CHAIN_STAGES {
        let p = peak_from_start(&active, &membrane_channel(&format!("x{k}")))?;
        table.push(vec!["active".into(), k.into(), p.magnitude.into(), p.t_peak.into()]);
    }
    Ok(table)
}

pub const TRAIN_PERIODS: [f64; 3] = [1e-3, 2e-3, 4e-3];
pub const TRAIN_COUNT: u32 = 4;
/// Pulse width of the integration trains; it must fit inside the shortest
/// period.
pub const TRAIN_WIDTH: f64 = 0.95e-3;

/// Per-pulse peak of a 1 kΩ / 1 µF n-type segment driven by 4-pulse trains.
/// Each peak is the largest deviation between a pulse onset and the next.
fn temporal_integration(opts: &CharacterisationOptions) -> Result<ResultTable> {
    let rc = RcNetwork::uniform(1e3, 1e-6)?;
    let net = single_segment(Polarity::NType, rc, 1)?;
    let rows = par_map(&TRAIN_PERIODS, |&period| {
        let train = Stimulus::pulse_train(5.0, TRAIN_WIDTH, period, TRAIN_COUNT, CHARACTERISATION_START)?;
        let duration = CHARACTERISATION_START + TRAIN_COUNT as f64 * period + 10e-3;
        let trace = simulate(&net, &single_input("in", train), opts.config(duration))?;
        let out = trace.require("d1.m")?;
        let rest = out[0];
        let index = |t: f64| ((t / trace.dt()).round() as usize).min(out.len());
        (0..TRAIN_COUNT as usize)
            .map(|k| {
                let a = index(CHARACTERISATION_START + k as f64 * period);
                let b = index(CHARACTERISATION_START + (k + 1) as f64 * period);
                let peak = out[a..b].iter().map(|v| (v - rest).abs()).fold(0.0, f64::max);
                Ok((period, k, peak))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut table = ResultTable::new(["period_s", "pulse", "peak_v"]);
    for (period, k, peak) in rows.into_iter().flatten() {
        table.push(vec![period.into(), k.into(), peak.into()]);
    }
    Ok(table)
}

pub const SPATIAL_AMPLITUDE: f64 = 1.7;
pub const SPATIAL_OFFSETS: [f64; 6] = [0.0, 0.5e-3, 1e-3, 2e-3, 4e-3, 8e-3];

/// Two-gate n-type segment: one input alone, then both inputs with the
/// second delayed by each offset.
fn spatial_integration(opts: &CharacterisationOptions) -> Result<ResultTable> {
    let rc = RcNetwork::uniform(1e3, 1e-6)?;
    let net = single_segment(Polarity::NType, rc, 2)?;
    let pulse = Stimulus::square_pulse(SPATIAL_AMPLITUDE, CHARACTERISATION_WIDTH, CHARACTERISATION_START)?;
    // an idle second input is a zero-amplitude pulse
    let idle = Stimulus::square_pulse(0.0, CHARACTERISATION_WIDTH, CHARACTERISATION_START)?;
    let mut cases = vec![(1usize, 0.0, idle)];
    cases.extend(SPATIAL_OFFSETS.iter().map(|&o| (2, o, pulse.delayed(o))));
    let peaks = par_map(&cases, |(_, offset, second)| {
        let stimuli = BTreeMap::from([("in".to_string(), pulse.clone()), ("in2".to_string(), second.clone())]);
        let cfg = opts.config(settle_time(1e3, 1e-6) + offset + 10e-3);
        let trace = simulate(&net, &stimuli, cfg)?;
        Ok(peak_from_start(&trace, "d1.m")?.magnitude)
    })?;
    let mut table = ResultTable::new(["inputs", "offset_s", "peak_v"]);
    for ((inputs, offset, _), peak) in cases.iter().zip(peaks) {
        table.push(vec![(*inputs).into(), (*offset).into(), peak.into()]);
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Free RC response overlay

pub const OVERLAY_V0: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const OVERLAY_R_OFF: f64 = 1e15;

/// Membrane deviation of a 1 kΩ / 1 µF n-type segment released with its
/// reservoir `V0` below rest: the closed form next to the simulated
/// response, one column pair per `V0`.
pub fn rc_response_overlay(v0s: &[f64], dt: f64, duration: f64) -> Result<ResultTable> {
    let rc = RcNetwork::uniform(1e3, 1e-6)?;
    // the default off-state leak (10 MΩ from a 5 V node) would add a
    // 0.5 mV offset through R_A; the closed form assumes an open switch
    let open = TransistorModel::hard_switch(Polarity::NType).with_r_off(OVERLAY_R_OFF);
    let segment = single_segment(Polarity::NType, rc, 1)?.segments()[0].clone().with_transistor(open);
    let net = Network::new(VDD, vec![segment])?;
    let idle = single_input("in", Stimulus::square_pulse(0.0, duration, 0.0)?);
    let cfg = SimConfig::new(dt, duration).with_method(Method::Trapezoidal);
    let mut columns = vec!["time_s".to_string()];
    let mut data: Vec<Vec<f64>> = Vec::new();
    for &v0 in v0s {
        let sol = CharacteristicSolution::new(v0, &rc)?;
        let mut sim = Simulator::new(&net, &idle, cfg)?;
        sim.set_segment_state(0, VDD - v0, VDD);
        let trace = sim.run()?;
        let numeric = trace.require("d1.m")?;
        if data.is_empty() {
            data.push(trace.times().collect());
        }
        data.push(data[0].iter().map(|&t| sol.membrane_voltage(t)).collect());
        data.push(numeric.iter().map(|v| VDD - v).collect());
        columns.push(format!("analytic_v0_{v0}"));
        columns.push(format!("numeric_v0_{v0}"));
    }
    let mut table = ResultTable::new(columns);
    for i in 0..data.first().map_or(0, Vec::len) {
        table.push(data.iter().map(|c| Value::Num(c[i])).collect());
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn localisation_values() {
        let a = build_sound_localisation(Variant::A).unwrap();
        let n1 = a.network.segment("n1").unwrap();
        assert_eq!((n1.params.rc.r_axial, n1.params.rc.r_leak), (1.42e3, 1.94e3));
        let c = build_sound_localisation(Variant::C).unwrap();
        let n1 = c.network.segment("n1").unwrap();
        assert_eq!((n1.params.rc.r_axial, n1.params.rc.r_leak), (2.7e3, 8.89e3));
        for v in Variant::ALL {
            let l = build_sound_localisation(v).unwrap();
            let p1 = l.network.segment("p1").unwrap();
            assert_eq!((p1.params.rc.r_axial, p1.params.rc.r_leak), (13.0, 1e3));
            assert_eq!(p1.gates.len(), 2);
            assert_eq!(p1.params.polarity, Polarity::PType);
        }
    }

    #[test]
    fn ring_values() {
        let net = build_bursting_neuron(231.0).unwrap();
        let names: Vec<_> = net.segments().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["n1", "p2", "n3", "p4", "n5", "p6", "n7", "p8"]);
        let n1 = net.segment("n1").unwrap();
        assert_eq!(n1.params.rc, RcNetwork::new(220.0, 1000.0, 3.3e-9, 3.3e-9).unwrap());
        assert_eq!(n1.gates, vec![stim(RING_INPUT), membrane("p8")]);
        let p2 = net.segment("p2").unwrap();
        assert_eq!((p2.params.rc.r_leak, p2.params.rc.c_membrane), (377.0, 22e-9));
        assert_eq!(net.segment("p8").unwrap().params.rc.r_leak, 231.0);
        assert!(build_bursting_neuron(0.0).is_err());
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn separations_cover_protocol() {
        let s = LocalisationProtocol::default().separations();
        assert_eq!(s.len(), 41);
        assert_eq!(s[40], 10e-3);
    }

    #[test]
    fn passive_baseline_needs_resistances() {
        assert!(run_passive_localisation_baseline(&[]).is_err());
    }
}
