//! Delay, gain, peak and spike-count measurements on traces.

use thiserror::Error;

use crate::model::{ModelError, Stimulus, Trace};
use crate::transient::SimError;

/// Default measurability floor for delays, as a fraction of `vdd`.
pub const DEFAULT_FLOOR_FRACTION: f64 = 0.02;
pub const DEFAULT_SPIKE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_REFRACTORY: f64 = 10e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("channel `{0}` is empty")]
    EmptyChannel(String),
    #[error("input channel `{0}` never leaves its rest level")]
    ZeroInput(String),
    #[error("threshold fraction must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("no separations requested")]
    NoSeparations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakInfo {
    pub t_peak: f64,
    /// Absolute deviation from `rest`.
    pub magnitude: f64,
    pub rest: f64,
}

/// Rest levels of an input/output channel pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rests {
    pub input: f64,
    pub output: f64,
}

impl Rests {
    pub fn new(input: f64, output: f64) -> Self {
        Self { input, output }
    }

    /// Takes each channel's first sample as its rest level.
    pub fn from_start(trace: &Trace, input: &str, output: &str) -> Result<Self, MeasureError> {
        Ok(Self {
            input: first(trace, input)?,
            output: first(trace, output)?,
        })
    }
}

fn first(trace: &Trace, channel: &str) -> Result<f64, MeasureError> {
    trace
        .require(channel)?
        .first()
        .copied()
        .ok_or_else(|| MeasureError::EmptyChannel(channel.to_string()))
}

/// Largest deviation from `rest`; ties go to the earliest sample.
pub fn peak(trace: &Trace, channel: &str, rest: f64) -> Result<PeakInfo, MeasureError> {
    let samples = trace.require(channel)?;
    let (idx, magnitude) = samples
        .iter()
        .map(|v| (v - rest).abs())
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, m)| match best {
            Some((_, bm)) if bm >= m => best,
            _ => Some((i, m)),
        })
        .ok_or_else(|| MeasureError::EmptyChannel(channel.to_string()))?;
    Ok(PeakInfo {
        t_peak: trace.time(idx),
        magnitude,
        rest,
    })
}

/// Peak measured against the channel's first sample.
pub fn peak_from_start(trace: &Trace, channel: &str) -> Result<PeakInfo, MeasureError> {
    peak(trace, channel, first(trace, channel)?)
}

/// Time from the input peak to the output peak, or `None` if the output
/// deviation stays below `floor` volts.
pub fn delay(
    trace: &Trace,
    in_channel: &str,
    out_channel: &str,
    rests: Rests,
    floor: f64,
) -> Result<Option<f64>, MeasureError> {
    let input = peak(trace, in_channel, rests.input)?;
    let output = peak(trace, out_channel, rests.output)?;
    if output.magnitude < floor || input.magnitude == 0.0 {
        return Ok(None);
    }
    Ok(Some(output.t_peak - input.t_peak))
}

/// Output peak deviation over input peak deviation. Polarity is ignored.
pub fn gain(
    trace: &Trace,
    in_channel: &str,
    out_channel: &str,
    rests: Rests,
) -> Result<f64, MeasureError> {
    let input = peak(trace, in_channel, rests.input)?;
    if input.magnitude == 0.0 {
        return Err(MeasureError::ZeroInput(in_channel.to_string()));
    }
    let output = peak(trace, out_channel, rests.output)?;
    Ok(output.magnitude / input.magnitude)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeCriteria {
    pub vdd: f64,
    /// Deviation threshold as a fraction of `vdd`.
    pub threshold_fraction: f64,
    /// Crossings closer than this to the last counted one are merged.
    pub refractory: f64,
}

impl SpikeCriteria {
    pub fn new(vdd: f64) -> Self {
        Self {
            vdd,
            threshold_fraction: DEFAULT_SPIKE_THRESHOLD,
            refractory: DEFAULT_REFRACTORY,
        }
    }

    pub fn with_threshold(mut self, fraction: f64) -> Self {
        self.threshold_fraction = fraction;
        self
    }

    pub fn with_refractory(mut self, refractory: f64) -> Self {
        self.refractory = refractory;
        self
    }
}

/// Number of upward crossings of `|v - rest|` through the threshold.
pub fn count_spikes(
    trace: &Trace,
    channel: &str,
    rest: f64,
    criteria: SpikeCriteria,
) -> Result<usize, MeasureError> {
    let frac = criteria.threshold_fraction;
    if !(frac > 0.0 && frac < 1.0) {
        return Err(MeasureError::BadThreshold(frac));
    }
    let level = frac * criteria.vdd;
    let samples = trace.require(channel)?;
    let mut above = false;
    let mut last: Option<f64> = None;
    let mut count = 0;
    for (i, v) in samples.iter().enumerate() {
        let now = (v - rest).abs() > level;
        if now && !above {
            let t = trace.time(i);
            if last.map_or(true, |tl| t - tl >= criteria.refractory) {
                count += 1;
                last = Some(t);
            }
        }
        above = now;
    }
    Ok(count)
}

/// A circuit with two inputs that can be driven by a pair of pulses.
pub trait PairedInputCircuit: Sync {
    /// Simulates with `lead` on the first input and `lag` on the second.
    fn run(&self, lead: &Stimulus, lag: &Stimulus) -> Result<Trace, SimError>;

    /// Channel whose peak deviation is the circuit's response.
    fn probe(&self) -> &str;
}

/// Peak probe deviation for each separation, in input order. The second
/// input receives `pulse` delayed by the separation.
pub fn response_curve<C: PairedInputCircuit + ?Sized>(
    circuit: &C,
    pulse: &Stimulus,
    separations: &[f64],
) -> Result<Vec<(f64, f64)>, MeasureError> {
    if separations.is_empty() {
        return Err(MeasureError::NoSeparations);
    }
    let point = |&dt: &f64| -> Result<(f64, f64), MeasureError> {
        let trace = circuit.run(pulse, &pulse.delayed(dt))?;
        Ok((dt, peak_from_start(&trace, circuit.probe())?.magnitude))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        separations.par_iter().map(point).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        separations.iter().map(point).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(channels: &[(&str, &[f64])]) -> Trace {
        Trace::new(
            1e-3,
            0.0,
            channels.iter().map(|(n, v)| (n.to_string(), v.to_vec())),
        )
        .unwrap()
    }

    #[test]
    fn constant_channel_has_no_peak() {
        let t = trace(&[("a", &[1.0; 5])]);
        let p = peak(&t, "a", 1.0).unwrap();
        assert_eq!(p.magnitude, 0.0);
        assert_eq!(p.t_peak, 0.0);
    }

    #[test]
    fn ties_pick_earliest() {
        let t = trace(&[("a", &[0.0, 2.0, 0.0, 2.0, 0.0])]);
        let p = peak(&t, "a", 0.0).unwrap();
        assert_eq!(p.t_peak, 1e-3);
        assert_eq!(p.magnitude, 2.0);
        // a dip of equal size still loses to the earlier rise
        let t = trace(&[("a", &[1.0, 2.0, 0.0])]);
        assert_eq!(peak(&t, "a", 1.0).unwrap().t_peak, 1e-3);
    }

    #[test]
    fn empty_and_missing_channels() {
        let t = trace(&[("a", &[])]);
        assert!(matches!(peak(&t, "a", 0.0), Err(MeasureError::EmptyChannel(_))));
        assert!(matches!(peak(&t, "b", 0.0), Err(MeasureError::Model(_))));
    }

    #[test]
    fn delay_between_channels() {
        let t = trace(&[
            ("in", &[0.0, 1.0, 0.0, 0.0, 0.0]),
            ("out", &[5.0, 5.0, 4.8, 3.0, 4.0]),
        ]);
        let d = delay(&t, "in", "out", Rests::new(0.0, 5.0), 0.1).unwrap();
        assert!((d.unwrap() - 2e-3).abs() < 1e-15);
        assert_eq!(delay(&t, "in", "in", Rests::new(0.0, 0.0), 0.1).unwrap(), Some(0.0));
        assert_eq!(delay(&t, "in", "out", Rests::new(0.0, 5.0), 2.5).unwrap(), None);
    }

    #[test]
    fn gain_ratio_and_zero_input() {
        let t = trace(&[("in", &[0.0, 2.0, 0.0]), ("out", &[5.0, 5.0, 2.0])]);
        let g = gain(&t, "in", "out", Rests::new(0.0, 5.0)).unwrap();
        assert!((g - 1.5).abs() < 1e-15);
        assert_eq!(gain(&t, "in", "in", Rests::new(0.0, 0.0)).unwrap(), 1.0);
        let z = trace(&[("in", &[0.0, 0.0]), ("out", &[0.0, 1.0])]);
        assert!(matches!(
            gain(&z, "in", "out", Rests::new(0.0, 0.0)),
            Err(MeasureError::ZeroInput(_))
        ));
    }

    #[test]
    fn spike_counting() {
        let crit = SpikeCriteria::new(5.0).with_refractory(2.5e-3);
        let flat = trace(&[("a", &[0.0; 10])]);
        assert_eq!(count_spikes(&flat, "a", 0.0, crit).unwrap(), 0);
        let two = trace(&[("a", &[0.0, 3.0, 0.0, 0.0, 3.0, 0.0])]);
        assert_eq!(count_spikes(&two, "a", 0.0, crit).unwrap(), 2);
        // second crossing 2 ms after the first is merged
        let close = trace(&[("a", &[0.0, 3.0, 0.0, 3.0, 0.0])]);
        assert_eq!(count_spikes(&close, "a", 0.0, crit).unwrap(), 1);
        assert!(count_spikes(&flat, "a", 0.0, crit.with_threshold(1.0)).is_err());
    }
}
