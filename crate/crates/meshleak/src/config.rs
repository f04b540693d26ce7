//! Experiment configuration: a line-oriented `key = value` format with
//! `[section]` headers, covering the layout, simulator knobs, victim,
//! probe and analysis stages.

use std::collections::BTreeMap;

use crate::analysis::decode::DecodeParams;
use crate::cache::SliceHash;
use crate::evset::EvBuildMode;
use crate::sim::SimParams;
use crate::workload::{OpPattern, VictimProfile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VictimKind {
    Modexp,
    SlidingWindow,
    Periodic,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMode {
    Best,
    Random,
    Fixed { src: usize, dst: usize },
}

#[derive(Debug, Clone)]
pub struct VictimSpec {
    pub kind: VictimKind,
    /// Explicit exponent bits (MSB first); absent means random of key_len.
    pub key_bits: Option<String>,
    pub key_len: usize,
    pub window: usize,
    pub tile: Option<usize>,
    pub pattern: OpPattern,
    pub profile: VictimProfile,
}

impl Default for VictimSpec {
    fn default() -> Self {
        VictimSpec {
            kind: VictimKind::Modexp,
            key_bits: None,
            key_len: 64,
            window: 5,
            tile: None,
            pattern: OpPattern::SqrRise,
            profile: VictimProfile::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeSpec {
    pub path: PathMode,
    pub ev_size: usize,
    pub sweeps_per_sample: usize,
    pub l2_set: usize,
    pub ev_mode: EvBuildMode,
    /// Extra capture beyond the victim run, cycles.
    pub tail_cycles: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            path: PathMode::Best,
            ev_size: 24,
            sweeps_per_sample: 2,
            l2_set: 768,
            ev_mode: EvBuildMode::Direct,
            tail_cycles: 8_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisSpec {
    /// None selects percentile auto-calibration per trace.
    pub params: Option<DecodeParams>,
    pub repeat: usize,
    pub correct: bool,
    pub kmer: usize,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            params: None,
            repeat: 1,
            correct: false,
            kmer: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub layout: String,
    pub params: SimParams,
    pub victim: VictimSpec,
    pub probe: ProbeSpec,
    pub analysis: AnalysisSpec,
    /// FNV-1a hash of the source text, echoed into every report.
    pub config_hash: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            layout: "xeon-8260".to_string(),
            params: SimParams {
                background_ppm: 150,
                ..SimParams::default()
            },
            victim: VictimSpec::default(),
            probe: ProbeSpec::default(),
            analysis: AnalysisSpec::default(),
            config_hash: 0,
        }
    }
}

pub fn fnv1a(text: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

fn parse_sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut section = String::from("sim");
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::MalformedConfig(format!("line {}: bad section", lineno + 1)))?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::MalformedConfig(format!("line {}: expected key = value", lineno + 1))
        })?;
        out.entry(section.clone())
            .or_default()
            .insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::MalformedConfig(format!("bad value for {key}: `{v}`")))
}

impl ExperimentConfig {
    /// Parses the config text; unknown keys are rejected to catch typos.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig {
            config_hash: fnv1a(text),
            ..ExperimentConfig::default()
        };
        let sections = parse_sections(text)?;
        for (section, map) in &sections {
            match section.as_str() {
                "sim" => {
                    for (k, v) in map {
                        match k.as_str() {
                            "layout" => cfg.layout = v.clone(),
                            "seed" => cfg.params.seed = num(k, v)?,
                            "clock_hz" => cfg.params.clock_hz = num(k, v)?,
                            "buffer_depth" => cfg.params.buffer_depth = num(k, v)?,
                            "retry_penalty" => cfg.params.retry_penalty = num(k, v)?,
                            "flits_per_line" => cfg.params.line_flits = num(k, v)?,
                            "background_ppm" => cfg.params.background_ppm = num(k, v)?,
                            "drop_ppm" => cfg.params.drop_ppm = num(k, v)?,
                            "hash" => {
                                cfg.params.hash = match v.as_str() {
                                    "xor-fold" => SliceHash::XorFold,
                                    "modulo" => SliceHash::Modulo,
                                    other => {
                                        return Err(Error::MalformedConfig(format!(
                                            "unknown hash `{other}`"
                                        )))
                                    }
                                }
                            }
                            other => {
                                return Err(Error::MalformedConfig(format!(
                                    "unknown [sim] key `{other}`"
                                )))
                            }
                        }
                    }
                }
                "victim" => {
                    for (k, v) in map {
                        match k.as_str() {
                            "kind" => {
                                cfg.victim.kind = match v.as_str() {
                                    "modexp" => VictimKind::Modexp,
                                    "sliding-window" => VictimKind::SlidingWindow,
                                    "periodic" => VictimKind::Periodic,
                                    "none" => VictimKind::None,
                                    other => {
                                        return Err(Error::MalformedConfig(format!(
                                            "unknown victim kind `{other}`"
                                        )))
                                    }
                                }
                            }
                            "key" => cfg.victim.key_bits = Some(v.clone()),
                            "key_len" => cfg.victim.key_len = num(k, v)?,
                            "w" => cfg.victim.window = num(k, v)?,
                            "tile" => cfg.victim.tile = Some(num(k, v)?),
                            "pattern" => {
                                cfg.victim.pattern = match v.as_str() {
                                    "a" | "A" => OpPattern::MulRise,
                                    "b" | "B" => OpPattern::SqrRise,
                                    "c" | "C" => OpPattern::MulPit,
                                    other => {
                                        return Err(Error::MalformedConfig(format!(
                                            "unknown pattern `{other}`"
                                        )))
                                    }
                                }
                            }
                            "sqr_lines" => cfg.victim.profile.sqr_lines = num(k, v)?,
                            "mul_lines" => cfg.victim.profile.mul_lines = num(k, v)?,
                            "gc_lines" => cfg.victim.profile.baseline_lines_per_k = num(k, v)?,
                            "bit0_cycles" => cfg.victim.profile.bit0_cycles = num(k, v)?,
                            "bit1_cycles" => cfg.victim.profile.bit1_cycles = num(k, v)?,
                            "jitter_ppm" => cfg.victim.profile.jitter_ppm = num(k, v)?,
                            other => {
                                return Err(Error::MalformedConfig(format!(
                                    "unknown [victim] key `{other}`"
                                )))
                            }
                        }
                    }
                }
                "probe" => {
                    for (k, v) in map {
                        match k.as_str() {
                            "path" => {
                                cfg.probe.path = match v.as_str() {
                                    "best" => PathMode::Best,
                                    "random" => PathMode::Random,
                                    pair => {
                                        let (s, d) = pair.split_once('>').ok_or_else(|| {
                                            Error::MalformedConfig(format!(
                                                "path must be best, random or src>dst, got `{pair}`"
                                            ))
                                        })?;
                                        PathMode::Fixed {
                                            src: num("path src", s.trim())?,
                                            dst: num("path dst", d.trim())?,
                                        }
                                    }
                                }
                            }
                            "n" => cfg.probe.ev_size = num(k, v)?,
                            "x" => cfg.probe.sweeps_per_sample = num(k, v)?,
                            "l2_set" => cfg.probe.l2_set = num(k, v)?,
                            "tail_cycles" => cfg.probe.tail_cycles = num(k, v)?,
                            "ev_mode" => {
                                cfg.probe.ev_mode = match v.as_str() {
                                    "direct" => EvBuildMode::Direct,
                                    "search" => EvBuildMode::Search,
                                    other => {
                                        return Err(Error::MalformedConfig(format!(
                                            "unknown ev mode `{other}`"
                                        )))
                                    }
                                }
                            }
                            other => {
                                return Err(Error::MalformedConfig(format!(
                                    "unknown [probe] key `{other}`"
                                )))
                            }
                        }
                    }
                }
                "analysis" => {
                    for (k, v) in map {
                        match k.as_str() {
                            "params" => {
                                cfg.analysis.params = match v.as_str() {
                                    "auto" => None,
                                    "paper" => Some(DecodeParams::default()),
                                    other => {
                                        return Err(Error::MalformedConfig(format!(
                                            "analysis params must be auto or paper, got `{other}`"
                                        )))
                                    }
                                }
                            }
                            "repeat" => cfg.analysis.repeat = num(k, v)?,
                            "kmer" => cfg.analysis.kmer = num(k, v)?,
                            "correct" => {
                                cfg.analysis.correct = match v.as_str() {
                                    "debruijn" => true,
                                    "none" => false,
                                    other => {
                                        return Err(Error::MalformedConfig(format!(
                                            "correct must be debruijn or none, got `{other}`"
                                        )))
                                    }
                                }
                            }
                            other => {
                                return Err(Error::MalformedConfig(format!(
                                    "unknown [analysis] key `{other}`"
                                )))
                            }
                        }
                    }
                }
                other => {
                    return Err(Error::MalformedConfig(format!(
                        "unknown section `[{other}]`"
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &str) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
