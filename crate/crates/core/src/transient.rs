//! Fixed-step implicit time-domain simulation of segment networks.
//!
//! Each segment carries two states, the reservoir voltage `v_R` and the
//! membrane voltage `v_M`:
//!
//! ```text
//! C_R dv_R/dt = g_ds (rail_drain - v_R) + (v_M - v_R) / R_A
//! C_M dv_M/dt = (v_R - v_M) / R_A + (rail_leak - v_M) / R_L
//! ```
//!
//! The transistor conductance `g_ds` is frozen for each step at the gate
//! voltages of the previous accepted step, so every step is a 2x2 linear
//! solve per segment. Gates never load the node they read.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{
    membrane_channel, reservoir_channel, GateSource, ModelError, Network, Polarity,
    PreparedStimulus, Stimulus, SwitchKind, Trace, TransistorModel,
};

/// Voltage margin outside the supply rails tolerated before aborting.
pub const GUARD_BAND: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("segment `{segment}` reads stimulus `{stimulus}` which was not supplied")]
    MissingStimulus { segment: String, stimulus: String },
    #[error("diverged at t={time:.9} s: node `{node}` reached {value} V")]
    Diverged { time: f64, node: String, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    BackwardEuler,
    Trapezoidal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub method: Method,
    pub record_stride: usize,
}

impl SimConfig {
    /// Step used for the millisecond-scale circuits.
    pub const DEFAULT_DT: f64 = 1e-6;

    pub fn new(dt: f64, duration: f64) -> Self {
        Self {
            dt,
            duration,
            method: Method::BackwardEuler,
            record_stride: 1,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(SimError::Config(format!(
                "duration must be >= dt, got {}",
                self.duration
            )));
        }
        if self.record_stride == 0 {
            return Err(SimError::Config("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Drain-source conductance of one gate transistor.
pub fn transistor_conductance(
    v_gate: f64,
    model: &TransistorModel,
    polarity: Polarity,
    vdd: f64,
) -> f64 {
    let g_off = 1.0 / model.r_off;
    let g_on = 1.0 / model.r_on;
    // gate drive in the switching direction
    let drive = match polarity {
        Polarity::NType => v_gate,
        Polarity::PType => vdd - v_gate,
    };
    let fraction = match model.kind {
        SwitchKind::HardSwitch => {
            if drive >= model.v_threshold {
                1.0
            } else {
                0.0
            }
        }
        SwitchKind::Smoothed => {
            // 10%..90% over transition_width
            let k = 2.0 * 9f64.ln() / model.transition_width;
            logistic(k * (drive - model.v_threshold))
        }
    };
    g_off + (g_on - g_off) * fraction
}

/// Physical state of a network at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub v_reservoir: Vec<f64>,
    pub v_membrane: Vec<f64>,
}

impl SimState {
    /// Every node on its segment's resting rail.
    pub fn rest(net: &Network) -> Self {
        let vdd = net.vdd();
        let (v_reservoir, v_membrane) = net
            .segments()
            .iter()
            .map(|s| {
                let r = s.params.polarity.leak_rail(vdd);
                (r, r)
            })
            .unzip();
        Self {
            time: 0.0,
            v_reservoir,
            v_membrane,
        }
    }

    /// Current through the axial resistor of segment `i`, reservoir to
    /// membrane.
    pub fn axial_current(&self, net: &Network, i: usize) -> f64 {
        let rc = &net.segments()[i].params.rc;
        (self.v_reservoir[i] - self.v_membrane[i]) / rc.r_axial
    }

    /// Current through the leak resistor of segment `i`, membrane to rail.
    pub fn leak_current(&self, net: &Network, i: usize) -> f64 {
        let seg = &net.segments()[i];
        let rail = seg.params.polarity.leak_rail(net.vdd());
        (self.v_membrane[i] - rail) / seg.params.rc.r_leak
    }
}

#[derive(Debug, Clone, Copy)]
enum Gate {
    /// Stimulus applied as a deviation from the gate's resting level:
    /// upward from ground for n-type, downward from `vdd` for p-type.
    Stimulus { index: usize, from_vdd: bool },
    Membrane(usize),
}

#[derive(Debug, Clone)]
struct CompiledSegment {
    polarity: Polarity,
    transistor: TransistorModel,
    gates: Vec<Gate>,
    c_r: f64,
    c_m: f64,
    g_a: f64,
    g_l: f64,
    rail_drain: f64,
    rail_leak: f64,
}

/// Solves `[[a, b], [c, d]] x = [e, f]`.
fn solve2(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> (f64, f64) {
    let det = a * d - b * c;
    ((e * d - b * f) / det, (a * f - e * c) / det)
}

/// Stepping simulator over one network. Most callers want [`simulate`].
pub struct Simulator<'a> {
    net: &'a Network,
    cfg: SimConfig,
    stimulus_names: Vec<String>,
    stimuli: Vec<PreparedStimulus<'a>>,
    segments: Vec<CompiledSegment>,
    state: SimState,
    step: usize,
    conductance: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        net: &'a Network,
        stimuli: &'a BTreeMap<String, Stimulus>,
        cfg: SimConfig,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        let stimulus_names: Vec<String> = stimuli.keys().cloned().collect();
        let prepared = stimuli
            .values()
            .map(Stimulus::prepare)
            .collect::<Result<Vec<_>, _>>()?;
        let vdd = net.vdd();
        let mut segments = Vec::with_capacity(net.segments().len());
        for seg in net.segments() {
            let gates = seg
                .gates
                .iter()
                .map(|g| match g {
                    GateSource::Stimulus(name) => stimulus_names
                        .iter()
                        .position(|n| n == name)
                        .map(|index| Gate::Stimulus {
                            index,
                            from_vdd: seg.params.polarity == Polarity::PType,
                        })
                        .ok_or_else(|| SimError::MissingStimulus {
                            segment: seg.name.clone(),
                            stimulus: name.clone(),
                        }),
                    // Network::new guarantees the target exists
                    GateSource::Membrane(name) => Ok(Gate::Membrane(
                        net.index_of(name).expect("validated membrane reference"),
                    )),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rc = seg.params.rc;
            segments.push(CompiledSegment {
                polarity: seg.params.polarity,
                transistor: seg.transistor,
                gates,
                c_r: rc.c_reservoir,
                c_m: rc.c_membrane,
                g_a: 1.0 / rc.r_axial,
                g_l: 1.0 / rc.r_leak,
                rail_drain: seg.params.polarity.drain_rail(vdd),
                rail_leak: seg.params.polarity.leak_rail(vdd),
            });
        }
        let mut sim = Self {
            net,
            cfg,
            stimulus_names,
            stimuli: prepared,
            conductance: vec![0.0; segments.len()],
            segments,
            state: SimState::rest(net),
            step: 0,
        };
        sim.settle();
        Ok(sim)
    }

    /// Moves the state to the DC operating point with every stimulus at
    /// rest. With all transistors off this sits within `r_off` leakage of
    /// the resting rails.
    fn settle(&mut self) {
        for _ in 0..100 {
            self.update_conductances(None);
            let mut change: f64 = 0.0;
            for (i, seg) in self.segments.iter().enumerate() {
                let g = self.conductance[i];
                let (g11, g12, g22) = (g + seg.g_a, -seg.g_a, seg.g_a + seg.g_l);
                let (r, m) = solve2(g11, g12, g12, g22, g * seg.rail_drain, seg.g_l * seg.rail_leak);
                change = change
                    .max((r - self.state.v_reservoir[i]).abs())
                    .max((m - self.state.v_membrane[i]).abs());
                self.state.v_reservoir[i] = r;
                self.state.v_membrane[i] = m;
            }
            if change == 0.0 {
                break;
            }
        }
    }

    fn update_conductances(&mut self, t: Option<f64>) {
        let vdd = self.net.vdd();
        for i in 0..self.segments.len() {
            let seg = &self.segments[i];
            let g: f64 = seg
                .gates
                .iter()
                .map(|&g| {
                    transistor_conductance(self.gate_voltage(g, t), &seg.transistor, seg.polarity, vdd)
                })
                .sum();
            self.conductance[i] = g;
        }
    }

    /// Overrides the physical voltages of segment `i`.
    pub fn set_segment_state(&mut self, i: usize, v_reservoir: f64, v_membrane: f64) {
        self.state.v_reservoir[i] = v_reservoir;
        self.state.v_membrane[i] = v_membrane;
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    /// Gate voltage at `t`; `None` for `t` evaluates every stimulus at its
    /// resting level.
    fn gate_voltage(&self, gate: Gate, t: Option<f64>) -> f64 {
        match gate {
            Gate::Stimulus { index, from_vdd } => {
                let s = t.map_or(0.0, |t| self.stimuli[index].value(t));
                if from_vdd {
                    self.net.vdd() - s
                } else {
                    s
                }
            }
            Gate::Membrane(i) => self.state.v_membrane[i],
        }
    }

    /// Advances one step of `cfg.dt`.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.update_conductances(Some(self.time()));
        let h = self.cfg.dt;
        for (i, seg) in self.segments.iter().enumerate() {
            let g = self.conductance[i];
            let (vr, vm) = (self.state.v_reservoir[i], self.state.v_membrane[i]);
            // conductance matrix G and source s of  C x' = -G x + s
            let (g11, g12, g22) = (g + seg.g_a, -seg.g_a, seg.g_a + seg.g_l);
            let (s1, s2) = (g * seg.rail_drain, seg.g_l * seg.rail_leak);
            let (cr, cm) = (seg.c_r / h, seg.c_m / h);
            let (nr, nm) = match self.cfg.method {
                Method::BackwardEuler => {
                    solve2(cr + g11, g12, g12, cm + g22, cr * vr + s1, cm * vm + s2)
                }
                Method::Trapezoidal => {
                    let r1 = (cr - 0.5 * g11) * vr - 0.5 * g12 * vm + s1;
                    let r2 = -0.5 * g12 * vr + (cm - 0.5 * g22) * vm + s2;
                    solve2(cr + 0.5 * g11, 0.5 * g12, 0.5 * g12, cm + 0.5 * g22, r1, r2)
                }
            };
            self.state.v_reservoir[i] = nr;
            self.state.v_membrane[i] = nm;
        }
        self.step += 1;
        self.state.time = self.time();
        self.check_guard()
    }

    fn check_guard(&self) -> Result<(), SimError> {
        let vdd = self.net.vdd();
        let bad = |v: f64| !v.is_finite() || v < -GUARD_BAND || v > vdd + GUARD_BAND;
        for (i, seg) in self.net.segments().iter().enumerate() {
            let (vr, vm) = (self.state.v_reservoir[i], self.state.v_membrane[i]);
            let (node, value) = if bad(vr) {
                (reservoir_channel(&seg.name), vr)
            } else if bad(vm) {
                (membrane_channel(&seg.name), vm)
            } else {
                continue;
            };
            return Err(SimError::Diverged {
                time: self.state.time,
                node,
                value,
            });
        }
        Ok(())
    }

    /// Runs to `cfg.duration`, recording every `record_stride`-th step.
    pub fn run(mut self) -> Result<Trace, SimError> {
        let steps = self.cfg.steps();
        let stride = self.cfg.record_stride;
        let n_records = steps / stride + 1;
        let n_seg = self.segments.len();
        let mut stim_rec = vec![Vec::with_capacity(n_records); self.stimuli.len()];
        let mut res_rec = vec![Vec::with_capacity(n_records); n_seg];
        let mut mem_rec = vec![Vec::with_capacity(n_records); n_seg];
        self.check_guard()?;
        for n in 0..=steps {
            if n % stride == 0 {
                let t = self.time();
                for (rec, s) in stim_rec.iter_mut().zip(&self.stimuli) {
                    rec.push(s.value(t));
                }
                for i in 0..n_seg {
                    res_rec[i].push(self.state.v_reservoir[i]);
                    mem_rec[i].push(self.state.v_membrane[i]);
                }
            }
            if n < steps {
                self.step()?;
            }
        }
        let mut channels = Vec::with_capacity(self.stimuli.len() + 2 * n_seg);
        channels.extend(self.stimulus_names.iter().cloned().zip(stim_rec));
        for ((seg, r), m) in self.net.segments().iter().zip(res_rec).zip(mem_rec) {
            channels.push((reservoir_channel(&seg.name), r));
            channels.push((membrane_channel(&seg.name), m));
        }
        Ok(Trace::new(self.cfg.dt * stride as f64, 0.0, channels)?)
    }
}

/// Simulates `net` from its resting operating point.
///
/// Stimuli on p-type gates are applied as downward excursions from `vdd`,
/// so the same positive pulse switches either polarity on.
pub fn simulate(
    net: &Network,
    stimuli: &BTreeMap<String, Stimulus>,
    cfg: SimConfig,
) -> Result<Trace, SimError> {
    Simulator::new(net, stimuli, cfg)?.run()
}

/// Passive RC ladder: every stage has a capacitor to ground and a leak to
/// ground, neighbours are linked by `r_axial`, and the source drives stage 0
/// through `r_axial`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassiveLadder {
    pub stages: usize,
    pub r_axial: f64,
    pub r_leak: f64,
    pub c_stage: f64,
}

impl PassiveLadder {
    pub fn new(stages: usize, r_axial: f64, r_leak: f64, c_stage: f64) -> Result<Self, SimError> {
        if stages == 0 {
            return Err(SimError::Config("a ladder needs at least one stage".into()));
        }
        for (what, v) in [
            ("axial resistance", r_axial),
            ("leak resistance", r_leak),
            ("stage capacitance", c_stage),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::NonPositive { what, value: v }.into());
            }
        }
        Ok(Self {
            stages,
            r_axial,
            r_leak,
            c_stage,
        })
    }

    pub fn stage_channel(k: usize) -> String {
        format!("stage{k}")
    }

    /// Channels: `in` followed by `stage0..stage{n-1}`.
    pub fn simulate(&self, stimulus: &Stimulus, cfg: SimConfig) -> Result<Trace, SimError> {
        cfg.validate()?;
        let input = stimulus.prepare()?;
        let n = self.stages;
        let ga = 1.0 / self.r_axial;
        let gl = 1.0 / self.r_leak;
        let cdt = self.c_stage / cfg.dt;
        // G is tridiagonal: diag = gl + links, off = -ga
        let diag: Vec<f64> = (0..n)
            .map(|k| gl + ga + if k + 1 < n { ga } else { 0.0 })
            .collect();
        let (theta, explicit) = match cfg.method {
            Method::BackwardEuler => (1.0, 0.0),
            Method::Trapezoidal => (0.5, 0.5),
        };
        let steps = cfg.steps();
        let stride = cfg.record_stride;
        let mut v = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut c_prime = vec![0.0; n];
        let mut records = vec![Vec::with_capacity(steps / stride + 1); n + 1];
        for step in 0..=steps {
            let t = step as f64 * cfg.dt;
            let vs = input.value(t);
            if step % stride == 0 {
                records[0].push(vs);
                for k in 0..n {
                    records[k + 1].push(v[k]);
                }
            }
            if step == steps {
                break;
            }
            for k in 0..n {
                let mut gx = diag[k] * v[k];
                if k > 0 {
                    gx -= ga * v[k - 1];
                }
                if k + 1 < n {
                    gx -= ga * v[k + 1];
                }
                rhs[k] = cdt * v[k] - explicit * gx + if k == 0 { ga * vs } else { 0.0 };
            }
            // Thomas algorithm on (C/dt + theta G) v' = rhs
            let off = -theta * ga;
            let mut denom = cdt + theta * diag[0];
            c_prime[0] = off / denom;
            rhs[0] /= denom;
            for k in 1..n {
                denom = cdt + theta * diag[k] - off * c_prime[k - 1];
                c_prime[k] = off / denom;
                rhs[k] = (rhs[k] - off * rhs[k - 1]) / denom;
            }
            v[n - 1] = rhs[n - 1];
            for k in (0..n - 1).rev() {
                v[k] = rhs[k] - c_prime[k] * v[k + 1];
            }
            if let Some((k, &bad)) = v.iter().enumerate().find(|(_, x)| !x.is_finite()) {
                return Err(SimError::Diverged {
                    time: t + cfg.dt,
                    node: Self::stage_channel(k),
                    value: bad,
                });
            }
        }
        let mut channels = Vec::with_capacity(n + 1);
        let mut it = records.into_iter();
        channels.push(("in".to_string(), it.next().unwrap_or_default()));
        channels.extend(it.enumerate().map(|(k, r)| (Self::stage_channel(k), r)));
        Ok(Trace::new(cfg.dt * stride as f64, 0.0, channels)?)
    }
}

/// Convenience wrapper over [`PassiveLadder::simulate`].
pub fn simulate_passive_chain(
    n_stages: usize,
    r_axial: f64,
    r_leak: f64,
    c_membrane: f64,
    stimulus: &Stimulus,
    cfg: SimConfig,
) -> Result<Trace, SimError> {
    PassiveLadder::new(n_stages, r_axial, r_leak, c_membrane)?.simulate(stimulus, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::CharacteristicSolution;
    use crate::model::{RcNetwork, SegmentInstance, SegmentParams};

    fn single(polarity: Polarity, model: TransistorModel) -> Network {
        let rc = RcNetwork::uniform(1e3, 1e-6).unwrap();
        Network::new(
            5.0,
            vec![SegmentInstance::new(
                "d1",
                SegmentParams::new(polarity, rc),
                vec![GateSource::Stimulus("s1".into())],
            )
            .with_transistor(model)],
        )
        .unwrap()
    }

    fn pulse(amp: f64, width: f64, t0: f64) -> BTreeMap<String, Stimulus> {
        BTreeMap::from([(
            "s1".to_string(),
            Stimulus::square_pulse(amp, width, t0).unwrap(),
        )])
    }

    #[test]
    fn conductance_limits() {
        let n = TransistorModel::default_for(Polarity::NType);
        assert!((transistor_conductance(0.0, &n, Polarity::NType, 5.0) - 1e-7).abs() < 1e-12);
        let hard = TransistorModel::hard_switch(Polarity::NType);
        assert_eq!(transistor_conductance(1.7, &hard, Polarity::NType, 5.0), 0.02);
        assert_eq!(transistor_conductance(1.69, &hard, Polarity::NType, 5.0), 1e-7);
        let p = TransistorModel::hard_switch(Polarity::PType);
        assert_eq!(transistor_conductance(2.8, &p, Polarity::PType, 5.0), 0.02);
        assert_eq!(transistor_conductance(2.81, &p, Polarity::PType, 5.0), 1e-7);
    }

    #[test]
    fn smoothed_conductance_is_monotone_and_centred() {
        let m = TransistorModel::default_for(Polarity::NType);
        let mid = transistor_conductance(1.7, &m, Polarity::NType, 5.0);
        assert!((mid - 0.5 * (0.02 + 1e-7)).abs() < 1e-12);
        let lo = transistor_conductance(1.675, &m, Polarity::NType, 5.0);
        let hi = transistor_conductance(1.725, &m, Polarity::NType, 5.0);
        assert!(((lo - 1e-7) / (0.02 - 1e-7) - 0.1).abs() < 1e-9);
        assert!(((hi - 1e-7) / (0.02 - 1e-7) - 0.9).abs() < 1e-9);
        let p = TransistorModel::default_for(Polarity::PType);
        let mut last = f64::INFINITY;
        for i in 0..=100 {
            let g = transistor_conductance(i as f64 * 0.05, &p, Polarity::PType, 5.0);
            assert!(g <= last);
            last = g;
        }
    }

    #[test]
    fn zero_input_stays_at_rest() {
        for pol in [Polarity::NType, Polarity::PType] {
            let net = single(pol, TransistorModel::default_for(pol));
            let stim = pulse(0.0, 2e-3, 1e-3);
            let trace = simulate(&net, &stim, SimConfig::new(1e-6, 10e-3)).unwrap();
            let rest = pol.leak_rail(5.0);
            for ch in ["d1.r", "d1.m"] {
                let v = trace.channel(ch).unwrap();
                // off-state leakage through r_off shifts the rest point by < 1 mV
                assert!((v[0] - rest).abs() < 1e-3);
                assert!(v.iter().all(|&x| (x - v[0]).abs() < 1e-12), "{ch} drifted");
            }
        }
    }

    #[test]
    fn n_type_dips_and_recovers() {
        let net = single(Polarity::NType, TransistorModel::default_for(Polarity::NType));
        let trace = simulate(&net, &pulse(5.0, 2e-3, 1e-3), SimConfig::new(1e-6, 30e-3)).unwrap();
        let m = trace.channel("d1.m").unwrap();
        let min = m.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min < 4.0);
        assert!((m[m.len() - 1] - 5.0).abs() < 0.01);
        assert_eq!(trace.channel_names().collect::<Vec<_>>(), ["s1", "d1.r", "d1.m"]);
    }

    #[test]
    fn free_response_matches_analytic_solution() {
        // a 0.3 ms pulse nearly empties C_R; afterwards the circuit is linear
        let net = single(Polarity::NType, TransistorModel::hard_switch(Polarity::NType));
        let (t_end, dt) = (0.3e-3, 1e-7);
        let trace = simulate(&net, &pulse(5.0, t_end, 0.0), SimConfig::new(dt, 15e-3)).unwrap();
        let i_end = (t_end / dt).round() as usize;
        let r = trace.channel("d1.r").unwrap();
        let m = trace.channel("d1.m").unwrap();
        let (u_r, u_m) = (5.0 - r[i_end], 5.0 - m[i_end]);
        let rc = RcNetwork::uniform(1e3, 1e-6).unwrap();
        // linear superposition of a charged reservoir and a charged membrane
        let from_r = CharacteristicSolution::new(u_r, &rc).unwrap();
        let mut worst: f64 = 0.0;
        for k in i_end..trace.len() {
            let t = (k - i_end) as f64 * dt;
            let predicted = from_r.membrane_voltage(t) + membrane_only(u_m, &rc, t);
            worst = worst.max((5.0 - m[k] - predicted).abs());
        }
        assert!(worst < 0.01 * u_r, "worst {worst} vs V0 {u_r}");
    }

    // membrane response with v_R(0) = 0, v_M(0) = vm0, by the same modal basis
    fn membrane_only(vm0: f64, rc: &RcNetwork, t: f64) -> f64 {
        let s = CharacteristicSolution::new(1.0, rc).unwrap();
        let tau = rc.r_axial * rc.c_reservoir;
        let (lp, lm) = (s.lambda_plus, s.lambda_minus);
        // v_R = a e^{lp t} + b e^{lm t}, a + b = 0, a(1+lp tau) + b(1+lm tau) = vm0
        let a = vm0 / (tau * (lp - lm));
        (1.0 + lp * tau) * a * (lp * t).exp() - (1.0 + lm * tau) * a * (lm * t).exp()
    }

    #[test]
    fn momentum_after_short_pulse() {
        let net = single(Polarity::NType, TransistorModel::default_for(Polarity::NType));
        let trace = simulate(&net, &pulse(5.0, 0.5e-3, 0.0), SimConfig::new(1e-6, 5e-3)).unwrap();
        let m = trace.channel("d1.m").unwrap();
        let at_end = 5.0 - m[500];
        let later = 5.0 - m[900];
        assert!(later > at_end, "deviation {later} should exceed {at_end}");
    }

    #[test]
    fn trapezoidal_agrees_with_backward_euler() {
        let net = single(Polarity::PType, TransistorModel::default_for(Polarity::PType));
        let stim = pulse(0.0, 2e-3, 1e-3);
        let cfg = SimConfig::new(1e-6, 20e-3);
        let mut sim = Simulator::new(&net, &stim, cfg).unwrap();
        sim.set_segment_state(0, 1.0, 0.0);
        let be = sim.run().unwrap();
        let mut sim = Simulator::new(&net, &stim, cfg.with_method(Method::Trapezoidal)).unwrap();
        sim.set_segment_state(0, 1.0, 0.0);
        let tr = sim.run().unwrap();
        let (a, b) = (be.channel("d1.m").unwrap(), tr.channel("d1.m").unwrap());
        let worst = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "methods differ by {worst}");
    }

    #[test]
    fn missing_stimulus_is_reported() {
        let net = single(Polarity::NType, TransistorModel::default_for(Polarity::NType));
        let err = simulate(&net, &BTreeMap::new(), SimConfig::new(1e-6, 1e-3)).unwrap_err();
        assert!(matches!(err, SimError::MissingStimulus { .. }));
    }

    #[test]
    fn guard_band_aborts() {
        let net = single(Polarity::NType, TransistorModel::default_for(Polarity::NType));
        let stim = pulse(0.0, 1e-3, 0.0);
        let mut sim = Simulator::new(&net, &stim, SimConfig::new(1e-6, 1e-3)).unwrap();
        sim.set_segment_state(0, 7.0, 5.0);
        let err = sim.run().unwrap_err();
        assert!(matches!(err, SimError::Diverged { ref node, .. } if node == "d1.r"));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.0, 1.0).validate().is_err());
        assert!(SimConfig::new(1e-3, 1e-4).validate().is_err());
        assert!(SimConfig::new(1e-6, 1e-3).with_stride(0).validate().is_err());
    }

    #[test]
    fn record_stride_and_currents() {
        let net = single(Polarity::NType, TransistorModel::default_for(Polarity::NType));
        let stim = pulse(5.0, 1e-3, 0.0);
        let trace = simulate(&net, &stim, SimConfig::new(1e-6, 2e-3).with_stride(10)).unwrap();
        assert_eq!(trace.len(), 201);
        assert!((trace.dt() - 1e-5).abs() < 1e-18);

        let mut sim = Simulator::new(&net, &stim, SimConfig::new(1e-6, 2e-3)).unwrap();
        for _ in 0..500 {
            sim.step().unwrap();
        }
        let st = sim.state().clone();
        // reservoir is pulled low, so axial current flows membrane -> reservoir
        assert!(st.axial_current(&net, 0) < 0.0);
        assert!(st.leak_current(&net, 0) < 0.0);
    }

    #[test]
    fn passive_chain_rest_without_input() {
        let stim = Stimulus::square_pulse(0.0, 1e-3, 0.0).unwrap();
        let trace = simulate_passive_chain(1, 1e3, 1e3, 1e-6, &stim, SimConfig::new(1e-6, 5e-3)).unwrap();
        assert!(trace.channel("stage0").unwrap().iter().all(|&v| v == 0.0));
        assert!(simulate_passive_chain(0, 1e3, 1e3, 1e-6, &stim, SimConfig::new(1e-6, 5e-3)).is_err());
    }
}
