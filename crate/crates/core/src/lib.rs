//! Simulation and analysis of active dendrite circuits.
//!
//! A dendrite segment is a single transistor plus a two-capacitor RC
//! network. This crate provides the closed-form free response of that
//! network ([`analytic`]), a nonlinear transient engine for arbitrary
//! networks of segments ([`transient`]), waveform measurements
//! ([`measure`]), a text netlist format ([`netlist`]) and the built-in
//! characterisation experiments ([`experiments`]).

pub mod analytic;
pub mod experiments;
pub mod measure;
pub mod model;
pub mod netlist;
pub mod table;
pub mod transient;

pub use analytic::{to_physical, CharacteristicSolution, CoefficientForm};
pub use model::{
    rest_voltage, stimulus_value, GateSource, ModelError, Network, Polarity, RcNetwork,
    SegmentInstance, SegmentParams, Stimulus, SwitchKind, Trace, TransistorModel,
};
pub use transient::{simulate, simulate_passive_chain, Method, SimConfig, SimError};
