//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each entry point returns a [`Plot`]: a shared x axis plus named series.
//! The `*_plot` functions hold the logic and are usable natively; the
//! exported wrappers only convert errors for JavaScript.

use dendrite::experiments::{
    bursting_neuron_netlist, run_sound_localisation, BurstProtocol, Variant,
};
use dendrite::measure::{count_spikes, peak_from_start};
use dendrite::netlist;
use dendrite::{simulate, Trace};
use wasm_bindgen::prelude::*;

/// Longest run the demo accepts, in steps, to keep the page responsive.
pub const MAX_STEPS: usize = 2_000_000;

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    x_label: String,
    x: Vec<f64>,
    names: Vec<String>,
    series: Vec<Vec<f64>>,
    summary: String,
}

#[wasm_bindgen]
impl Plot {
    #[wasm_bindgen(getter)]
    pub fn x_label(&self) -> String {
        self.x_label.clone()
    }

    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn count(&self) -> usize {
        self.series.len()
    }

    pub fn name(&self, i: usize) -> String {
        self.names.get(i).cloned().unwrap_or_default()
    }

    pub fn series(&self, i: usize) -> Vec<f64> {
        self.series.get(i).cloned().unwrap_or_default()
    }

    /// One-line description of the result.
    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

impl Plot {
    fn from_trace(trace: &Trace, summary: String) -> Self {
        let (names, series) = trace
            .channels()
            .map(|(n, v)| (n.to_string(), v.to_vec()))
            .unzip();
        Plot {
            x_label: "time (s)".into(),
            x: trace.times().collect(),
            names,
            series,
            summary,
        }
    }
}

/// Simulates netlist text, keeping its probes (or every channel).
pub fn netlist_plot(text: &str) -> Result<Plot, String> {
    let net = netlist::parse(text).map_err(|e| e.to_string())?;
    let cfg = net
        .tran
        .ok_or("the netlist needs a `tran dt=… duration=…` line")?;
    if cfg.steps() > MAX_STEPS {
        return Err(format!(
            "{} steps is too many for the browser (limit {MAX_STEPS})",
            cfg.steps()
        ));
    }
    let trace = simulate(&net.network, &net.stimuli, cfg).map_err(|e| e.to_string())?;
    let trace = if net.probes.is_empty() {
        trace
    } else {
        trace.select(&net.probe_channels()).map_err(|e| e.to_string())?
    };
    let summary = format!("{} samples, dt {} s", trace.len(), trace.dt());
    Ok(Plot::from_trace(&trace, summary))
}

/// Peak response against input separation for one detector variant.
pub fn localisation_plot(variant: &str) -> Result<Plot, String> {
    let v = match variant {
        "A" | "a" => Variant::A,
        "B" | "b" => Variant::B,
        "C" | "c" => Variant::C,
        other => return Err(format!("unknown variant `{other}`")),
    };
    let curve = run_sound_localisation(v).map_err(|e| e.to_string())?;
    let best = curve
        .iter()
        .fold((0.0, f64::NEG_INFINITY), |b, &(s, p)| if p > b.1 { (s, p) } else { b });
    Ok(Plot {
        x_label: "separation (s)".into(),
        x: curve.iter().map(|c| c.0).collect(),
        names: vec![format!("variant {v}")],
        series: vec![curve.iter().map(|c| c.1).collect()],
        summary: format!(
            "variant {v}: largest response {:.3} V at {:.2} ms",
            best.1,
            best.0 * 1e3
        ),
    })
}

/// Ring burst for a given P8 leak resistance, with the spike count.
pub fn burst_plot(p8_r_leak: f64) -> Result<Plot, String> {
    let protocol = BurstProtocol::default();
    let net = bursting_neuron_netlist(p8_r_leak, &protocol).map_err(|e| e.to_string())?;
    let trace = simulate(&net.network, &net.stimuli, protocol.sim_config())
        .map_err(|e| e.to_string())?;
    let trace = trace.select(&net.probe_channels()).map_err(|e| e.to_string())?;
    let rest = peak_from_start(&trace, "n1.m").map_err(|e| e.to_string())?.rest;
    let spikes = count_spikes(&trace, "n1.m", rest, protocol.spikes)
        .map_err(|e| e.to_string())?;
    Ok(Plot::from_trace(
        &trace,
        format!("P8 leak {p8_r_leak} ohm: {spikes} spike(s) on N1"),
    ))
}

#[wasm_bindgen]
pub fn simulate_netlist(text: &str) -> Result<Plot, JsError> {
    netlist_plot(text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn localisation_curve(variant: &str) -> Result<Plot, JsError> {
    localisation_plot(variant).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn ring_burst(p8_r_leak: f64) -> Result<Plot, JsError> {
    burst_plot(p8_r_leak).map_err(|e| JsError::new(&e))
}

/// The single-segment netlist shown when the page loads.
#[wasm_bindgen]
pub fn example_netlist() -> String {
    "vdd 5\n\
     stim in pulse amp=3 width=2m t0=1m\n\
     seg d1 n ra=1k rl=1k cr=1u cm=1u gate=in\n\
     probe in\n\
     probe d1\n\
     tran dt=10u duration=20m\n"
        .to_string()
}
