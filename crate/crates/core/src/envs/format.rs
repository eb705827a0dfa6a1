//! Line-oriented text format for instances.
//!
//! ```text
//! format streamq-instance 1
//! horizon 2
//! states 2
//! actions 2
//! dim 4
//! noise none                # or: noise bounded <half_width>
//! generator tabular
//! seed 7
//! meta <key> <value...>     # zero or more
//! start <S values>
//! phi <h> <s*A+a> <d values>    # H·S·A lines, in order
//! mu <h> <z> <S values>         # H·d lines, in order
//! reward <h> <d values>         # H lines
//! end
//! ```
//!
//! Reals are written with 17 significant digits, which round-trips every
//! finite `f64` exactly. Blank lines and `#` comments are ignored.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::{InstanceMeta, LowRankMdp, MdpTables, RewardNoise};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "streamq-instance";
/// Refuse to allocate beyond this many reals while parsing.
const MAX_REALS: usize = 1 << 24;

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_row(out: &mut String, prefix: &str, xs: impl Iterator<Item = f64>) {
    out.push_str(prefix);
    for x in xs {
        out.push(' ');
        out.push_str(&real(x));
    }
    out.push('\n');
}

fn write_body(mdp: &LowRankMdp, out: &mut String) {
    for (h, feats) in mdp.phi.iter().enumerate() {
        for (i, f) in feats.iter().enumerate() {
            push_row(out, &format!("phi {h} {i}"), f.iter().copied());
        }
    }
    for (h, m) in mdp.mu.iter().enumerate() {
        for z in 0..mdp.dim {
            push_row(out, &format!("mu {h} {z}"), m.row(z).iter().copied());
        }
    }
    for (h, w) in mdp.reward_w.iter().enumerate() {
        push_row(out, &format!("reward {h}"), w.iter().copied());
    }
}

fn write_header(mdp: &LowRankMdp, out: &mut String) {
    out.push_str(&format!("format {MAGIC} {FORMAT_VERSION}\n"));
    out.push_str(&format!("horizon {}\nstates {}\nactions {}\ndim {}\n", mdp.horizon, mdp.states, mdp.actions, mdp.dim));
    match mdp.noise {
        RewardNoise::None => out.push_str("noise none\n"),
        RewardNoise::Bounded { half_width } => out.push_str(&format!("noise bounded {}\n", real(half_width))),
    }
}

pub fn write_instance(mdp: &LowRankMdp) -> String {
    let mut out = String::new();
    write_header(mdp, &mut out);
    let gen = if mdp.meta.generator.is_empty() { "unknown" } else { &mdp.meta.generator };
    out.push_str(&format!("generator {}\n", sanitize(gen)));
    out.push_str(&format!("seed {}\n", mdp.meta.seed));
    for (k, v) in &mdp.meta.entries {
        out.push_str(&format!("meta {} {}\n", sanitize(k), v.replace(['\n', '\r'], " ")));
    }
    push_row(&mut out, "start", mdp.start.iter().copied());
    write_body(mdp, &mut out);
    out.push_str("end\n");
    out
}

fn sanitize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join("_")
}

/// SHA-256 over the numerical content (dimensions, noise, start, tables).
/// Provenance metadata does not affect the id.
pub fn content_id(mdp: &LowRankMdp) -> String {
    let mut out = String::new();
    write_header(mdp, &mut out);
    push_row(&mut out, "start", mdp.start.iter().copied());
    write_body(mdp, &mut out);
    hex::encode(Sha256::digest(out.as_bytes()))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Result<(usize, Vec<&'a str>)> {
        for (i, raw) in self.inner.by_ref() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.last = i + 1;
            return Ok((i + 1, line.split_whitespace().collect()));
        }
        Err(Error::parse(self.last + 1, "unexpected end of input"))
    }

    fn keyword(&mut self, kw: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, toks) = self.next_tokens()?;
        if toks[0] != kw {
            return Err(Error::parse(n, format!("expected `{kw}`, found `{}`", toks[0])));
        }
        Ok((n, toks[1..].to_vec()))
    }

    fn count(&mut self, kw: &str) -> Result<usize> {
        let (n, rest) = self.keyword(kw)?;
        match rest.as_slice() {
            [v] => v
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::parse(n, format!("`{kw}` must be a positive integer"))),
            _ => Err(Error::parse(n, format!("`{kw}` takes one value"))),
        }
    }
}

fn parse_reals(n: usize, toks: &[&str], expect: usize) -> Result<Vec<f64>> {
    if toks.len() != expect {
        return Err(Error::parse(n, format!("expected {expect} values, found {}", toks.len())));
    }
    toks.iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(n, format!("`{t}` is not a finite real")))
        })
        .collect()
}

fn expect_index(n: usize, tok: Option<&&str>, want: usize, what: &str) -> Result<()> {
    match tok.and_then(|t| t.parse::<usize>().ok()) {
        Some(v) if v == want => Ok(()),
        _ => Err(Error::parse(n, format!("expected {what} index {want}"))),
    }
}

pub fn parse_instance(text: &str) -> Result<LowRankMdp> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (n, rest) = lines.keyword("format")?;
    match rest.as_slice() {
        [magic, ver] if *magic == MAGIC => {
            if ver.parse::<u32>().ok() != Some(FORMAT_VERSION) {
                return Err(Error::parse(n, format!("unsupported format version `{ver}`")));
            }
        }
        _ => return Err(Error::parse(n, format!("not a {MAGIC} file"))),
    }
    let horizon = lines.count("horizon")?;
    let states = lines.count("states")?;
    let actions = lines.count("actions")?;
    let dim = lines.count("dim")?;
    let n_sa = states
        .checked_mul(actions)
        .ok_or_else(|| Error::parse(lines.last, "state-action count overflows"))?;
    let reals = horizon
        .checked_mul(n_sa.saturating_mul(dim).saturating_add(dim.saturating_mul(states)).saturating_add(dim))
        .unwrap_or(usize::MAX);
    if reals > MAX_REALS {
        return Err(Error::parse(lines.last, format!("instance too large ({reals} reals)")));
    }

    let (n, rest) = lines.keyword("noise")?;
    let noise = match rest.as_slice() {
        ["none"] => RewardNoise::None,
        ["bounded", w] => RewardNoise::Bounded {
            half_width: parse_reals(n, &[w], 1)?[0],
        },
        _ => return Err(Error::parse(n, "noise must be `none` or `bounded <half_width>`")),
    };
    let (n, rest) = lines.keyword("generator")?;
    let generator = match rest.as_slice() {
        [g] => g.to_string(),
        _ => return Err(Error::parse(n, "generator takes one token")),
    };
    let (n, rest) = lines.keyword("seed")?;
    let seed = match rest.as_slice() {
        [s] => s.parse::<u64>().map_err(|_| Error::parse(n, "seed must be a u64"))?,
        _ => return Err(Error::parse(n, "seed takes one value")),
    };

    let mut meta = InstanceMeta {
        generator,
        seed,
        ..Default::default()
    };
    let start = loop {
        let (n, toks) = lines.next_tokens()?;
        match toks[0] {
            "meta" if toks.len() >= 2 => {
                meta.entries.insert(toks[1].to_string(), toks[2..].join(" "));
            }
            "meta" => return Err(Error::parse(n, "meta needs a key")),
            "start" => break parse_reals(n, &toks[1..], states)?,
            other => return Err(Error::parse(n, format!("expected `meta` or `start`, found `{other}`"))),
        }
    };

    let mut phi = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let mut feats = Vec::with_capacity(n_sa);
        for i in 0..n_sa {
            let (n, rest) = lines.keyword("phi")?;
            expect_index(n, rest.first(), h, "timestep")?;
            expect_index(n, rest.get(1), i, "state-action")?;
            feats.push(DVector::from_vec(parse_reals(n, rest.get(2..).unwrap_or(&[]), dim)?));
        }
        phi.push(feats);
    }
    let mut mu = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let mut m = DMatrix::zeros(dim, states);
        for z in 0..dim {
            let (n, rest) = lines.keyword("mu")?;
            expect_index(n, rest.first(), h, "timestep")?;
            expect_index(n, rest.get(1), z, "latent")?;
            for (sp, x) in parse_reals(n, rest.get(2..).unwrap_or(&[]), states)?.into_iter().enumerate() {
                m[(z, sp)] = x;
            }
        }
        mu.push(m);
    }
    let mut reward_w = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let (n, rest) = lines.keyword("reward")?;
        expect_index(n, rest.first(), h, "timestep")?;
        reward_w.push(DVector::from_vec(parse_reals(n, rest.get(1..).unwrap_or(&[]), dim)?));
    }
    let (n, rest) = lines.keyword("end")?;
    if !rest.is_empty() {
        return Err(Error::parse(n, "trailing tokens after `end`"));
    }
    if let Ok((n, _)) = lines.next_tokens() {
        return Err(Error::parse(n, "content after `end`"));
    }

    LowRankMdp::new(MdpTables {
        horizon,
        states,
        actions,
        dim,
        phi,
        mu,
        reward_w,
        start,
        noise,
        meta,
    })
}
