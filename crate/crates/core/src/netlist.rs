//! Line-oriented text format for networks, stimuli and probes.
//!
//! ```text
//! # one n-type segment driven by a pulse
//! vdd 5
//! stim s1 pulse amp=5 width=2m t0=1m
//! seg d1 n ra=1k rl=1k cr=1u cm=1u gate=s1
//! probe d1
//! tran dt=1u duration=20m
//! ```
//!
//! Keywords and option keys are case-insensitive; names are not. Numbers
//! take the suffixes `p n u m k meg` (`m` is milli). Gate sources name a
//! stimulus or a segment, whose membrane node then drives the gate.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::model::{
    membrane_channel, reservoir_channel, GateSource, Network, Polarity, RcNetwork, SegmentInstance,
    SegmentParams, Stimulus, SwitchKind, TransistorModel,
};
use crate::transient::{Method, SimConfig};

pub const DEFAULT_VDD: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {column}: {message} (at `{token}`)")]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    pub message: String,
    pub token: String,
}

/// A parsed netlist document.
#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    pub network: Network,
    pub stimuli: BTreeMap<String, Stimulus>,
    /// Stimulus names, segment names (meaning the membrane) or explicit
    /// `<seg>.r` / `<seg>.m` channels.
    pub probes: Vec<String>,
    pub tran: Option<SimConfig>,
}

impl Netlist {
    pub fn new(network: Network, stimuli: BTreeMap<String, Stimulus>) -> Self {
        Self {
            network,
            stimuli,
            probes: Vec::new(),
            tran: None,
        }
    }

    pub fn with_probes<S: Into<String>>(mut self, probes: impl IntoIterator<Item = S>) -> Self {
        self.probes = probes.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_tran(mut self, cfg: SimConfig) -> Self {
        self.tran = Some(cfg);
        self
    }

    /// Trace channel names for the probes, in order.
    pub fn probe_channels(&self) -> Vec<String> {
        self.probes
            .iter()
            .map(|p| {
                if self.network.segment(p).is_some() {
                    membrane_channel(p)
                } else {
                    p.clone()
                }
            })
            .collect()
    }
}

impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    for (col, (byte, ch)) in line.char_indices().enumerate() {
        if ch.is_whitespace() {
            if let Some((b, c)) = start.take() {
                out.push(Token {
                    text: &line[b..byte],
                    column: c + 1,
                });
            }
        } else if start.is_none() {
            start = Some((byte, col));
        }
    }
    if let Some((b, c)) = start {
        out.push(Token {
            text: &line[b..],
            column: c + 1,
        });
    }
    out
}

fn err(line: usize, tok: &Token<'_>, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column: tok.column,
        message: message.into(),
        token: tok.text.to_string(),
    }
}

const SUFFIXES: [(&str, i32); 6] = [("meg", 6), ("p", -12), ("n", -9), ("u", -6), ("m", -3), ("k", 3)];

/// Parses a number with an optional SI suffix. The suffix is applied as a
/// decimal exponent, so `2.18k` is exactly the double nearest 2180.
pub fn parse_si(text: &str) -> Option<f64> {
    let lower = text.to_ascii_lowercase();
    let (mantissa, exp) = SUFFIXES
        .iter()
        .find_map(|(s, e)| lower.strip_suffix(s).map(|m| (m, Some(*e))))
        .unwrap_or((&lower, None));
    let ok_chars = mantissa
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '+' | '-' | 'e'));
    if mantissa.is_empty() || !ok_chars || !mantissa.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    let value: f64 = match exp {
        Some(_) if mantissa.contains('e') => return None,
        Some(e) => format!("{mantissa}e{e}").parse().ok()?,
        None => mantissa.parse().ok()?,
    };
    value.is_finite().then_some(value)
}

/// Engineering-notation text that parses back to exactly `x` (`2.18k`,
/// `1u`, `500m`). Extreme magnitudes fall back to exponent form.
pub fn format_si(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:e}", x.abs());
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits = mant.replace('.', "");
    let group = (exp.div_euclid(3) * 3).clamp(-12, 6);
    let suffix = match group {
        -12 => "p",
        -9 => "n",
        -6 => "u",
        -3 => "m",
        0 => "",
        3 => "k",
        _ => "meg",
    };
    // shift the decimal point textually so no rounding is involved
    let int_len = exp - group + 1;
    let body = if int_len <= 0 {
        format!("0.{}{digits}", "0".repeat((-int_len) as usize))
    } else if int_len as usize >= digits.len() {
        format!("{digits}{}", "0".repeat(int_len as usize - digits.len()))
    } else {
        let (a, b) = digits.split_at(int_len as usize);
        format!("{a}.{b}")
    };
    let sign = if x < 0.0 { "-" } else { "" };
    let eng = format!("{sign}{body}{suffix}");
    let sci = format!("{x:e}");
    if eng.len() <= sci.len() + 3 && parse_si(&eng) == Some(x) {
        eng
    } else {
        sci
    }
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

const KEYWORDS: [&str; 5] = ["vdd", "stim", "seg", "probe", "tran"];

/// `key=value` options of one line, with their tokens for error reporting.
struct Options<'a> {
    line: usize,
    anchor: Token<'a>,
    map: HashMap<String, (Token<'a>, &'a str)>,
}

impl<'a> Options<'a> {
    fn parse(line: usize, anchor: &Token<'a>, toks: &[Token<'a>]) -> Result<Self, ParseError> {
        let mut map = HashMap::new();
        for t in toks {
            let Some((k, v)) = t.text.split_once('=') else {
                return Err(err(line, t, "expected key=value"));
            };
            let key = k.to_ascii_lowercase();
            if key.is_empty() || v.is_empty() {
                return Err(err(line, t, "expected key=value"));
            }
            if map.insert(key, (t.clone(), v)).is_some() {
                return Err(err(line, t, format!("option `{k}` given twice")));
            }
        }
        Ok(Self {
            line,
            anchor: anchor.clone(),
            map,
        })
    }

    fn take_str(&mut self, key: &str) -> Option<(Token<'a>, &'a str)> {
        self.map.remove(key)
    }

    fn opt_num(&mut self, key: &str) -> Result<Option<f64>, ParseError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((tok, v)) => parse_si(v)
                .map(Some)
                .ok_or_else(|| err(self.line, &tok, format!("bad number `{v}` for `{key}`"))),
        }
    }

    fn num(&mut self, key: &str) -> Result<f64, ParseError> {
        self.opt_num(key)?.ok_or_else(|| {
            err(self.line, &self.anchor, format!("missing required option `{key}`"))
        })
    }

    fn opt_count(&mut self, key: &str) -> Result<Option<u32>, ParseError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((tok, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| err(self.line, &tok, format!("`{key}` must be a whole number"))),
        }
    }

    fn finish(self) -> Result<(), ParseError> {
        match self.map.into_values().min_by_key(|(t, _)| t.column) {
            None => Ok(()),
            Some((tok, _)) => Err(err(self.line, &tok, "unknown option")),
        }
    }
}

struct PendingRef {
    line: usize,
    column: usize,
    token: String,
    segment: String,
}

#[derive(Default)]
struct Builder {
    vdd: Option<f64>,
    stimuli: BTreeMap<String, Stimulus>,
    segments: Vec<SegmentInstance>,
    names: HashMap<String, usize>,
    gate_refs: Vec<PendingRef>,
    probes: Vec<(usize, usize, String)>,
    tran: Option<SimConfig>,
}

/// Parses a netlist document. Never panics; every failure carries a
/// source position.
pub fn parse(source: &str) -> Result<Netlist, ParseError> {
    let mut b = Builder::default();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split('#').next().unwrap_or("");
        let toks = tokenize(text);
        let Some(head) = toks.first() else { continue };
        let kw = head.text.to_ascii_lowercase();
        match kw.as_str() {
            "vdd" => {
                if b.vdd.is_some() {
                    return Err(err(line, head, "vdd given twice"));
                }
                let [_, v] = toks.as_slice() else {
                    return Err(err(line, head, "expected `vdd <volts>`"));
                };
                let x = parse_si(v.text).ok_or_else(|| err(line, v, "bad number"))?;
                if !(x > 0.0) {
                    return Err(err(line, v, "vdd must be positive"));
                }
                b.vdd = Some(x);
            }
            "stim" => parse_stim(&mut b, line, &toks)?,
            "seg" => parse_seg(&mut b, line, &toks)?,
            "probe" => {
                let [_, name] = toks.as_slice() else {
                    return Err(err(line, head, "expected `probe <name>`"));
                };
                b.probes.push((line, name.column, name.text.to_string()));
            }
            "tran" => {
                if b.tran.is_some() {
                    return Err(err(line, head, "tran given twice"));
                }
                let mut o = Options::parse(line, head, &toks[1..])?;
                let dt = o.num("dt")?;
                let duration = o.num("duration")?;
                let mut cfg = SimConfig::new(dt, duration);
                if let Some((tok, m)) = o.take_str("method") {
                    cfg.method = match m.to_ascii_lowercase().as_str() {
                        "be" | "euler" => Method::BackwardEuler,
                        "trap" | "trapezoidal" => Method::Trapezoidal,
                        _ => return Err(err(line, &tok, "method must be `be` or `trap`")),
                    };
                }
                if let Some(s) = o.opt_count("stride")? {
                    cfg.record_stride = s as usize;
                }
                o.finish()?;
                cfg.validate().map_err(|e| err(line, head, e.to_string()))?;
                b.tran = Some(cfg);
            }
            _ => return Err(err(line, head, "unknown keyword")),
        }
    }
    finish(b)
}

fn declare(b: &mut Builder, line: usize, name: &Token<'_>) -> Result<(), ParseError> {
    if !valid_name(name.text) || KEYWORDS.contains(&name.text.to_ascii_lowercase().as_str()) {
        return Err(err(line, name, "invalid name"));
    }
    if let Some(prev) = b.names.insert(name.text.to_string(), line) {
        return Err(err(line, name, format!("name already defined on line {prev}")));
    }
    Ok(())
}

fn parse_stim(b: &mut Builder, line: usize, toks: &[Token<'_>]) -> Result<(), ParseError> {
    let (Some(name), Some(kind)) = (toks.get(1), toks.get(2)) else {
        return Err(err(line, &toks[0], "expected `stim <name> <kind> ...`"));
    };
    declare(b, line, name)?;
    let mut o = Options::parse(line, kind, &toks[3..])?;
    let t0 = o.opt_num("t0")?.unwrap_or(0.0);
    let stim = match kind.text.to_ascii_lowercase().as_str() {
        "pulse" => Stimulus::SquarePulse {
            amplitude: o.num("amp")?,
            width: o.num("width")?,
            t_start: t0,
        },
        "train" => {
            let (amplitude, width, period) = (o.num("amp")?, o.num("width")?, o.num("period")?);
            let count = o
                .opt_count("count")?
                .ok_or_else(|| err(line, kind, "missing required option `count`"))?;
            Stimulus::PulseTrain {
                amplitude,
                width,
                period,
                count,
                t_start: t0,
            }
        }
        "spike" => {
            let v0 = o.num("v0")?;
            let rc = RcNetwork {
                r_axial: o.num("ra")?,
                r_leak: o.num("rl")?,
                c_reservoir: o.num("cr")?,
                c_membrane: o.num("cm")?,
            };
            Stimulus::AnalyticSpike { rc, v0, t_start: t0 }
        }
        "samples" => {
            let dt = o.num("dt")?;
            let (tok, list) = o
                .take_str("values")
                .ok_or_else(|| err(line, kind, "missing required option `values`"))?;
            let values = list
                .split(',')
                .map(parse_si)
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| err(line, &tok, "bad number in `values`"))?;
            Stimulus::Samples { t0, dt, values }
        }
        _ => return Err(err(line, kind, "stimulus kind must be pulse, train, spike or samples")),
    };
    o.finish()?;
    stim.validate().map_err(|e| err(line, name, e.to_string()))?;
    b.stimuli.insert(name.text.to_string(), stim);
    Ok(())
}

fn parse_seg(b: &mut Builder, line: usize, toks: &[Token<'_>]) -> Result<(), ParseError> {
    let (Some(name), Some(pol)) = (toks.get(1), toks.get(2)) else {
        return Err(err(line, &toks[0], "expected `seg <name> <n|p> ...`"));
    };
    declare(b, line, name)?;
    let polarity = match pol.text.to_ascii_lowercase().as_str() {
        "n" => Polarity::NType,
        "p" => Polarity::PType,
        _ => return Err(err(line, pol, "polarity must be `n` or `p`")),
    };
    let mut o = Options::parse(line, pol, &toks[3..])?;
    let rc = RcNetwork::new(o.num("ra")?, o.num("rl")?, o.num("cr")?, o.num("cm")?)
        .map_err(|e| err(line, name, e.to_string()))?;
    let (gtok, glist) = o
        .take_str("gate")
        .ok_or_else(|| err(line, pol, "missing required option `gate`"))?;
    let mut gates = Vec::new();
    for g in glist.split(',') {
        if !valid_name(g) {
            return Err(err(line, &gtok, format!("bad gate source `{g}`")));
        }
        // resolved once every name is known
        gates.push(GateSource::Stimulus(g.to_string()));
        b.gate_refs.push(PendingRef {
            line,
            column: gtok.column,
            token: g.to_string(),
            segment: name.text.to_string(),
        });
    }
    let mut dev = TransistorModel::default_for(polarity);
    if let Some(v) = o.opt_num("vth")? {
        dev.v_threshold = v;
    }
    if let Some(v) = o.opt_num("ron")? {
        dev.r_on = v;
    }
    if let Some(v) = o.opt_num("roff")? {
        dev.r_off = v;
    }
    if let Some(v) = o.opt_num("tw")? {
        dev.transition_width = v;
    }
    if let Some((tok, m)) = o.take_str("model") {
        dev.kind = match m.to_ascii_lowercase().as_str() {
            "hard" => SwitchKind::HardSwitch,
            "smooth" => SwitchKind::Smoothed,
            _ => return Err(err(line, &tok, "model must be `hard` or `smooth`")),
        };
    }
    o.finish()?;
    dev.validate().map_err(|e| err(line, name, e.to_string()))?;
    let seg = SegmentInstance::new(name.text, SegmentParams::new(polarity, rc), gates)
        .with_transistor(dev);
    b.segments.push(seg);
    Ok(())
}

fn finish(mut b: Builder) -> Result<Netlist, ParseError> {
    let is_segment: HashMap<&str, ()> = b
        .segments
        .iter()
        .map(|s| (s.name.as_str(), ()))
        .collect();
    let mut resolved: HashMap<String, Vec<GateSource>> = HashMap::new();
    for r in &b.gate_refs {
        let src = if is_segment.contains_key(r.token.as_str()) {
            GateSource::Membrane(r.token.clone())
        } else if b.stimuli.contains_key(&r.token) {
            GateSource::Stimulus(r.token.clone())
        } else {
            return Err(ParseError {
                line: r.line,
                column: r.column,
                message: format!("unresolved gate source `{}`", r.token),
                token: r.token.clone(),
            });
        };
        resolved.entry(r.segment.clone()).or_default().push(src);
    }
    for (line, column, p) in &b.probes {
        let known = b.stimuli.contains_key(p)
            || is_segment.contains_key(p.as_str())
            || p.rsplit_once('.').is_some_and(|(seg, node)| {
                is_segment.contains_key(seg) && (node == "r" || node == "m")
            });
        if !known {
            return Err(ParseError {
                line: *line,
                column: *column,
                message: format!("unresolved probe `{p}`"),
                token: p.clone(),
            });
        }
    }
    let mut segments = Vec::with_capacity(b.segments.len());
    for mut seg in b.segments.drain(..) {
        seg.gates = resolved.remove(&seg.name).unwrap_or_default();
        segments.push(seg);
    }
    // every per-line check has already run, so this is a last resort
    let network = Network::new(b.vdd.unwrap_or(DEFAULT_VDD), segments).map_err(|e| ParseError {
        line: 1,
        column: 1,
        message: e.to_string(),
        token: String::new(),
    })?;
    Ok(Netlist {
        network,
        stimuli: b.stimuli,
        probes: b.probes.into_iter().map(|(_, _, p)| p).collect(),
        tran: b.tran,
    })
}

fn stim_line(name: &str, s: &Stimulus) -> String {
    let f = format_si;
    match s {
        Stimulus::SquarePulse {
            amplitude,
            width,
            t_start,
        } => format!("stim {name} pulse amp={} width={} t0={}", f(*amplitude), f(*width), f(*t_start)),
        Stimulus::PulseTrain {
            amplitude,
            width,
            period,
            count,
            t_start,
        } => format!(
            "stim {name} train amp={} width={} period={} count={count} t0={}",
            f(*amplitude),
            f(*width),
            f(*period),
            f(*t_start)
        ),
        Stimulus::AnalyticSpike { rc, v0, t_start } => format!(
            "stim {name} spike v0={} ra={} rl={} cr={} cm={} t0={}",
            f(*v0),
            f(rc.r_axial),
            f(rc.r_leak),
            f(rc.c_reservoir),
            f(rc.c_membrane),
            f(*t_start)
        ),
        Stimulus::Samples { t0, dt, values } => {
            let vals: Vec<String> = values.iter().map(|v| f(*v)).collect();
            format!("stim {name} samples t0={} dt={} values={}", f(*t0), f(*dt), vals.join(","))
        }
    }
}

fn seg_line(seg: &SegmentInstance) -> String {
    let rc = &seg.params.rc;
    let pol = match seg.params.polarity {
        Polarity::NType => "n",
        Polarity::PType => "p",
    };
    let gates: Vec<&str> = seg.gates.iter().map(GateSource::name).collect();
    let mut s = format!(
        "seg {} {pol} ra={} rl={} cr={} cm={} gate={}",
        seg.name,
        format_si(rc.r_axial),
        format_si(rc.r_leak),
        format_si(rc.c_reservoir),
        format_si(rc.c_membrane),
        gates.join(",")
    );
    let dev = &seg.transistor;
    let def = TransistorModel::default_for(seg.params.polarity);
    let opts = [
        ("vth", dev.v_threshold, def.v_threshold),
        ("ron", dev.r_on, def.r_on),
        ("roff", dev.r_off, def.r_off),
        ("tw", dev.transition_width, def.transition_width),
    ];
    for (key, v, d) in opts {
        if v != d {
            let _ = write!(s, " {key}={}", format_si(v));
        }
    }
    if dev.kind == SwitchKind::HardSwitch {
        s.push_str(" model=hard");
    }
    s
}

/// Renders a netlist that [`parse`] reads back to an equal value.
pub fn serialize(n: &Netlist) -> String {
    let mut out = format!("vdd {}\n", format_si(n.network.vdd()));
    for (name, s) in &n.stimuli {
        out += &stim_line(name, s);
        out.push('\n');
    }
    for seg in n.network.segments() {
        out += &seg_line(seg);
        out.push('\n');
    }
    for p in &n.probes {
        let _ = writeln!(out, "probe {p}");
    }
    if let Some(cfg) = &n.tran {
        let _ = write!(out, "tran dt={} duration={}", format_si(cfg.dt), format_si(cfg.duration));
        if cfg.method == Method::Trapezoidal {
            out.push_str(" method=trap");
        }
        if cfg.record_stride != 1 {
            let _ = write!(out, " stride={}", cfg.record_stride);
        }
        out.push('\n');
    }
    out
}

/// All probe channel names a trace of this netlist can carry.
pub fn channel_names(n: &Netlist) -> Vec<String> {
    let mut v: Vec<String> = n.stimuli.keys().cloned().collect();
    for s in n.network.segments() {
        v.push(reservoir_channel(&s.name));
        v.push(membrane_channel(&s.name));
    }
    v
}
