//! Run ledgers and their on-disk forms: the per-episode CSV, the JSON run
//! manifest, the TOML experiment config and the JSONL regression-sample log.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::s3q::SampleLogEntry;

pub const CSV_HEADER: &str = "episode,phase,source,inst_regret,cum_regret,mem_entries,mem_bytes";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    S3qSubroutine,
    S4qMain,
    Baseline,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Source::S3qSubroutine => "s3q-subroutine",
            Source::S4qMain => "s4q-main",
            Source::Baseline => "baseline",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "s3q-subroutine" => Some(Source::S3qSubroutine),
            "s4q-main" => Some(Source::S4qMain),
            "baseline" => Some(Source::Baseline),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    /// One-based and contiguous.
    pub episode: u64,
    pub phase: u32,
    pub source: Source,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub mem_entries: usize,
    pub mem_bytes: u64,
}

/// What happened in one outer phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: u32,
    pub s3q_episodes: u64,
    pub s3q_epochs: u32,
    pub main_episodes: u64,
    pub fired: bool,
    /// `max_h T_h` when the phase ended.
    pub trigger_value: f64,
    pub threshold: f64,
    /// `E_ρ max_a Q_1(s, a)` of the optimistic network.
    pub optimistic_value: f64,
    pub greedy_value: f64,
    pub controller_value: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<EpisodeRow>,
    pub phases: Vec<PhaseSummary>,
    pub v_star: f64,
    pub lambda: f64,
}

impl RunRecord {
    pub fn push(&mut self, phase: u32, source: Source, inst_regret: f64, mem_entries: usize, mem_bytes: u64) {
        let prev = self.rows.last().map_or(0.0, |r| r.cum_regret);
        self.rows.push(EpisodeRow {
            episode: self.rows.len() as u64 + 1,
            phase,
            source,
            inst_regret,
            cum_regret: prev + inst_regret,
            mem_entries,
            mem_bytes,
        });
    }

    pub fn episodes(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn completed_phases(&self) -> usize {
        self.phases.iter().filter(|p| p.fired).count()
    }

    /// Cumulative regret after `k` episodes (`k ≥ 1`).
    pub fn cum_regret_at(&self, k: u64) -> Option<f64> {
        self.rows.get((k as usize).checked_sub(1)?).map(|r| r.cum_regret)
    }

    pub fn ave_regret_at(&self, k: u64) -> Option<f64> {
        self.cum_regret_at(k).map(|c| c / k as f64)
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }
}

pub fn rows_to_csv(rows: &[EpisodeRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.episode,
            r.phase,
            r.source.tag(),
            r.inst_regret,
            r.cum_regret,
            r.mem_entries,
            r.mem_bytes
        );
    }
    out
}

/// Parses a ledger CSV; episode indices must be contiguous from 1.
pub fn parse_csv(text: &str) -> Result<Vec<EpisodeRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse(n, format!("expected 7 fields, found {}", f.len())));
        }
        let int = |s: &str, what: &str| s.parse::<u64>().map_err(|_| Error::parse(n, format!("bad {what} `{s}`")));
        let real = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(n, format!("bad {what} `{s}`")))
        };
        let episode = int(f[0], "episode")?;
        if episode != rows.len() as u64 + 1 {
            return Err(Error::parse(n, format!("episode {episode} breaks contiguity")));
        }
        rows.push(EpisodeRow {
            episode,
            phase: u32::try_from(int(f[1], "phase")?).map_err(|_| Error::parse(n, "phase out of range"))?,
            source: Source::from_tag(f[2]).ok_or_else(|| Error::parse(n, format!("unknown source `{}`", f[2])))?,
            inst_regret: real(f[3], "inst_regret")?,
            cum_regret: real(f[4], "cum_regret")?,
            mem_entries: usize::try_from(int(f[5], "mem_entries")?).map_err(|_| Error::parse(n, "mem_entries out of range"))?,
            mem_bytes: int(f[6], "mem_bytes")?,
        });
    }
    Ok(rows)
}

/// Experiment configuration, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: Option<String>,
    pub episodes: Option<u64>,
    pub seed: Option<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub lambda: Option<f64>,
    #[serde(default = "one")]
    pub c_bonus: f64,
    #[serde(default = "one")]
    pub c_stop: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Uniform reward noise half width; absent means deterministic rewards.
    pub noise_half_width: Option<f64>,
    pub out: Option<String>,
}

fn default_delta() -> f64 {
    0.1
}
fn one() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    0.1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: None,
            episodes: None,
            seed: None,
            delta: default_delta(),
            lambda: None,
            c_bonus: 1.0,
            c_stop: 1.0,
            lr: default_lr(),
            noise_half_width: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, output location excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: u64,
    pub final_cum_regret: Option<f64>,
    pub ave_regret_quarter: Option<f64>,
    pub ave_regret_half: Option<f64>,
    pub ave_regret_final: Option<f64>,
    pub phases: Option<u64>,
    pub completed_phases: Option<u64>,
    pub final_mem_entries: Option<u64>,
    pub final_mem_bytes: Option<u64>,
    pub first_divergence_step: Option<u64>,
    pub max_param_norm: Option<f64>,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

impl Summary {
    pub fn from_record(rec: &RunRecord) -> Self {
        let k = rec.episodes();
        let last = rec.rows.last();
        Summary {
            episodes: k,
            final_cum_regret: last.map(|r| r.cum_regret),
            ave_regret_quarter: rec.ave_regret_at(k / 4),
            ave_regret_half: rec.ave_regret_at(k / 2),
            ave_regret_final: rec.ave_regret_at(k),
            phases: Some(rec.phases.len() as u64),
            completed_phases: Some(rec.completed_phases() as u64),
            final_mem_entries: last.map(|r| r.mem_entries as u64),
            final_mem_bytes: last.map(|r| r.mem_bytes),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub instance_id: String,
    pub seed: Option<u64>,
    pub config: ExperimentConfig,
    /// Resolved parameters actually used (e.g. the default λ).
    pub resolved: BTreeMap<String, f64>,
    pub summary: Summary,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }
}

pub fn write_sample_log(entries: &[SampleLogEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_sample_log(text: &str) -> Result<Vec<SampleLogEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(i + 1, e.to_string())))
        .collect()
}
