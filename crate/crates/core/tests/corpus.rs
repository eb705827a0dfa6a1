//! Replays the checked-in fuzz seeds through their decoders, plus cheap
//! byte-level mutations of each seed.

use std::fs;
use std::path::PathBuf;

use streamq::envs::{parse_instance, write_instance};
use streamq::record::{parse_csv, parse_sample_log, ExperimentConfig, Manifest};
use streamq::s4q::ReplayMemory;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Truncations, single-byte deletions and digit flips, kept to valid UTF-8.
fn mutations(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let cuts: Vec<usize> = text.char_indices().map(|(i, _)| i).step_by(7).collect();
    for &i in &cuts {
        out.push(text[..i].to_string());
        let mut s = text.to_string();
        s.remove(i);
        out.push(s);
        let mut s = text.to_string();
        if s[i..].starts_with(|c: char| c.is_ascii_digit()) {
            s.replace_range(i..i + 1, "9");
            out.push(s);
        }
    }
    out
}

#[test]
fn instance_seeds_parse_and_round_trip() {
    for (p, text) in seeds("parse_instance") {
        let mdp = parse_instance(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(write_instance(&mdp), text, "{}", p.display());
        for m in mutations(&text) {
            if let Ok(mdp) = parse_instance(&m) {
                let once = write_instance(&mdp);
                assert_eq!(write_instance(&parse_instance(&once).unwrap()), once);
            }
        }
    }
}

#[test]
fn csv_seeds_parse() {
    for (p, text) in seeds("parse_csv") {
        assert!(!parse_csv(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display())).is_empty());
        for m in mutations(&text) {
            let _ = parse_csv(&m);
        }
    }
}

#[test]
fn config_seeds_parse_and_keep_their_hash() {
    for (p, text) in seeds("experiment_config") {
        let cfg = ExperimentConfig::from_toml(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap().hash(), cfg.hash());
        for m in mutations(&text) {
            if let Ok(c) = ExperimentConfig::from_toml(&m) {
                assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap().hash(), c.hash());
            }
        }
    }
}

#[test]
fn manifest_seeds_parse() {
    for (p, text) in seeds("manifest") {
        let m = Manifest::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(m.config_hash, m.config.hash());
        for m in mutations(&text) {
            let _ = Manifest::from_json(&m);
        }
    }
}

#[test]
fn sample_log_seeds_parse() {
    for (p, text) in seeds("sample_log") {
        assert!(!parse_sample_log(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display())).is_empty());
        for m in mutations(&text) {
            let _ = parse_sample_log(&m);
        }
    }
}

#[test]
fn replay_memory_seeds_round_trip() {
    for (p, text) in seeds("replay_memory") {
        let mem = ReplayMemory::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(ReplayMemory::from_json(&mem.to_json()).unwrap(), mem);
        for m in mutations(&text) {
            if let Ok(mem) = ReplayMemory::from_json(&m) {
                assert_eq!(ReplayMemory::from_json(&mem.to_json()).unwrap().to_json(), mem.to_json());
            }
        }
    }
}
