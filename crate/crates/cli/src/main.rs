use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dendrite::experiments::{
    self, burst_sweep, rc_response_overlay, run_characterisation, run_passive_localisation_baseline,
    run_sound_localisation, BurstProtocol, Characterisation, CharacterisationOptions, Devices,
    ExperimentError, LocalisationProtocol, Variant, PASSIVE_BASELINE_R, RING_P8_R_LEAK,
};
use dendrite::measure::{self, count_spikes, Rests, SpikeCriteria};
use dendrite::netlist::{self, Netlist};
use dendrite::table::{read_trace_csv, write_trace_csv, ResultTable};
use dendrite::{simulate, Method, SimConfig, SimError};

#[derive(Parser)]
#[command(name = "dendrite", version, about = "Simulate and analyse active dendrite circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a transient simulation of a netlist and write the trace as CSV.
    Simulate {
        netlist: PathBuf,
        /// Simulated time in seconds; overrides the netlist's `tran` line.
        #[arg(long)]
        duration: Option<f64>,
        /// Time step in seconds; overrides the netlist's `tran` line.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Output file; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in experiment and write its tables to a directory.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Measure a trace CSV and print one value.
    Analyze {
        trace: PathBuf,
        #[arg(long)]
        in_channel: Option<String>,
        #[arg(long)]
        out_channel: String,
        #[arg(long, value_enum)]
        metric: Metric,
        /// Supply voltage used for the delay floor and spike threshold.
        #[arg(long, default_value_t = netlist::DEFAULT_VDD)]
        vdd: f64,
        /// Spike threshold as a fraction of the supply.
        #[arg(long, default_value_t = measure::DEFAULT_SPIKE_THRESHOLD)]
        threshold: f64,
        /// Minimum spacing in seconds between counted spikes.
        #[arg(long, default_value_t = measure::DEFAULT_REFRACTORY)]
        refractory: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Be,
    Trap,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    Fig1f,
    Fig2,
    Fig3,
    Fig3d,
    Fig4,
    Fig6,
    Fig5,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Delay,
    Gain,
    Spikes,
}

/// Failure with its process exit code: 1 for bad input, 2 for a failed
/// simulation.
#[derive(Debug)]
enum Failure {
    Input(String),
    Simulation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Simulation(_) => 2,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Diverged { .. } => Failure::Simulation(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Simulation(e.to_string())
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

/// Built-in transient settings when neither flags nor netlist give them.
const DEFAULT_DURATION: f64 = 20e-3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            netlist,
            duration,
            dt,
            method,
            out,
        } => cmd_simulate(&netlist, duration, dt, method, out.as_deref()),
        Command::Reproduce { target, out } => cmd_reproduce(target, &out),
        Command::Analyze {
            trace,
            in_channel,
            out_channel,
            metric,
            vdd,
            threshold,
            refractory,
        } => {
            let criteria = SpikeCriteria::new(vdd)
                .with_threshold(threshold)
                .with_refractory(refractory);
            cmd_analyze(&trace, in_channel.as_deref(), &out_channel, metric, criteria)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(msg) | Failure::Simulation(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn read_netlist(path: &Path) -> Result<Netlist, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    netlist::parse(&text).map_err(|e| {
        Failure::Input(format!(
            "{}:{}:{}: {} (at `{}`)",
            path.display(),
            e.line,
            e.column,
            e.message,
            e.token
        ))
    })
}

fn cmd_simulate(
    path: &Path,
    duration: Option<f64>,
    dt: Option<f64>,
    method: Option<MethodArg>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let net = read_netlist(path)?;
    let base = net
        .tran
        .unwrap_or_else(|| SimConfig::new(SimConfig::DEFAULT_DT, DEFAULT_DURATION));
    let mut cfg = base;
    cfg.dt = dt.unwrap_or(base.dt);
    cfg.duration = duration.unwrap_or(base.duration);
    if let Some(m) = method {
        cfg.method = match m {
            MethodArg::Be => Method::BackwardEuler,
            MethodArg::Trap => Method::Trapezoidal,
        };
    }
    let trace = simulate(&net.network, &net.stimuli, cfg)?;
    let trace = if net.probes.is_empty() {
        trace
    } else {
        trace
            .select(&net.probe_channels())
            .map_err(|e| Failure::Input(e.to_string()))?
    };
    match out {
        Some(p) => {
            let file = fs::File::create(p).map_err(|e| io_error(p, e))?;
            write_trace_csv(&trace, io::BufWriter::new(file)).map_err(|e| io_error(p, e))
        }
        None => write_trace_csv(&trace, io::stdout().lock()).map_err(|e| Failure::Input(e.to_string())),
    }
}

fn cmd_analyze(
    path: &Path,
    in_channel: Option<&str>,
    out_channel: &str,
    metric: Metric,
    criteria: SpikeCriteria,
) -> Result<(), Failure> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    let trace = read_trace_csv(io::BufReader::new(file)).map_err(|e| io_error(path, e))?;
    let bad = |e: measure::MeasureError| Failure::Input(e.to_string());
    let input = || in_channel.ok_or_else(|| Failure::Input("this metric needs --in-channel".into()));
    let value = match metric {
        Metric::Delay => {
            let inp = input()?;
            let rests = Rests::from_start(&trace, inp, out_channel).map_err(bad)?;
            let floor = measure::DEFAULT_FLOOR_FRACTION * criteria.vdd;
            match measure::delay(&trace, inp, out_channel, rests, floor).map_err(bad)? {
                Some(d) => d.to_string(),
                None => "undefined".to_string(),
            }
        }
        Metric::Gain => {
            let inp = input()?;
            let rests = Rests::from_start(&trace, inp, out_channel).map_err(bad)?;
            measure::gain(&trace, inp, out_channel, rests).map_err(bad)?.to_string()
        }
        Metric::Spikes => {
            let rest = measure::peak_from_start(&trace, out_channel).map_err(bad)?.rest;
            count_spikes(&trace, out_channel, rest, criteria).map_err(bad)?.to_string()
        }
    };
    println!("{value}");
    Ok(())
}

/// Collects output files and a description of the settings used.
struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
    config: String,
}

impl Outputs<'_> {
    fn table(&mut self, name: &str, table: &ResultTable) -> Result<(), Failure> {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        table.write_csv(io::BufWriter::new(file)).map_err(|e| io_error(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, line: impl AsRef<str>) {
        self.config.push_str(line.as_ref());
        self.config.push('\n');
    }

    fn finish(self, target: &str) -> Result<(), Failure> {
        let mut text = format!("target: {target}\nfiles:\n");
        for f in &self.files {
            let _ = writeln!(text, "  {f}");
        }
        text.push_str("config:\n");
        for line in self.config.lines() {
            let _ = writeln!(text, "  {line}");
        }
        let path = self.dir.join("manifest.txt");
        let mut file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        file.write_all(text.as_bytes()).map_err(|e| io_error(&path, e))
    }
}

fn curve_table(curve: &[(f64, f64)]) -> ResultTable {
    let mut t = ResultTable::new(["separation_s", "peak_v"]);
    for &(s, v) in curve {
        t.push(vec![s.into(), v.into()]);
    }
    t
}

fn cmd_reproduce(target: Target, dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut out = Outputs {
        dir,
        files: Vec::new(),
        config: String::new(),
    };
    let opts = CharacterisationOptions::default();
    let name = target
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    match target {
        Target::Fig1f => {
            let (dt, duration) = (1e-6, 10e-3);
            out.table("fig1f.csv", &rc_response_overlay(&experiments::OVERLAY_V0, dt, duration)?)?;
            out.note(format!("segment: n-type, R_A = R_L = 1 kohm, C_R = C_M = 1 uF, vdd {}", experiments::VDD));
            out.note(format!("V0: {:?} V; trapezoidal, dt {dt} s, duration {duration} s", experiments::OVERLAY_V0));
        }
        Target::Fig2 => {
            out.table("fig2_delay.csv", &run_characterisation(Characterisation::DelaySweep)?)?;
            out.note(format!("{opts:?}"));
            out.note(format!("amplitudes {:?} V", experiments::SWEEP_AMPLITUDES));
        }
        Target::Fig3 => {
            out.table("fig3_gain.csv", &run_characterisation(Characterisation::GainSweep)?)?;
            out.note(format!("{opts:?}"));
            out.note(format!("amplitudes {:?} V", experiments::SWEEP_AMPLITUDES));
        }
        Target::Fig3d => {
            out.table("fig3d_chain.csv", &run_characterisation(Characterisation::ChainComparison)?)?;
            out.note(format!("{opts:?}"));
            out.note(format!("pulse (amplitude, width, start) {:?}", experiments::CHAIN_PULSE));
            out.note(format!("active devices {:?}", Devices::chain()));
        }
        Target::Fig4 => {
            out.table("fig4_temporal.csv", &run_characterisation(Characterisation::TemporalIntegration)?)?;
            out.table("fig4_spatial.csv", &run_characterisation(Characterisation::SpatialIntegration)?)?;
            out.note(format!("{opts:?}"));
            out.note(format!("train width {} s, periods {:?} s", experiments::TRAIN_WIDTH, experiments::TRAIN_PERIODS));
        }
        Target::Fig6 => {
            for v in Variant::ALL {
                out.table(&format!("fig6_variant{v}.csv"), &curve_table(&run_sound_localisation(v)?))?;
            }
            let curves = run_passive_localisation_baseline(&PASSIVE_BASELINE_R)?;
            let mut t = ResultTable::new(["r_axial_ohm", "separation_s", "peak_v"]);
            for (r, curve) in PASSIVE_BASELINE_R.iter().zip(curves) {
                for (s, v) in curve {
                    t.push(vec![(*r).into(), s.into(), v.into()]);
                }
            }
            out.table("fig6_passive.csv", &t)?;
            out.note(format!("{:?}", LocalisationProtocol::default()));
            out.note(format!("devices {:?}", Devices::localisation()));
        }
        Target::Fig5 => {
            let protocol = BurstProtocol::default();
            out.table("fig5_bursts.csv", &burst_sweep(&RING_P8_R_LEAK, &protocol)?)?;
            out.note(format!("{protocol:?}"));
            out.note(format!("devices {:?}", Devices::ring()));
        }
    }
    out.finish(&name)
}
