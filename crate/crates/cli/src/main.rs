//! `streamq`: generate instances, run the learners and the baseline,
//! verify invariants and aggregate finished runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use streamq::baselines::{run_vanilla, VanillaConfig};
use streamq::diagnostics::{self, error_bracket, value_sandwich, ConcentrationKind, FeatureLaw, UncertaintySpec};
use streamq::envs::{
    gen_divergence_instance, gen_lowrank, gen_tabular, parse_instance, policy_value, value_iteration, write_instance,
    GenOptions, LowRankMdp, RewardNoise, DIVERGENCE_INSTANCE_VERSION,
};
use streamq::policy::{ActionTable, Policy};
use streamq::record::{parse_csv, ExperimentConfig, Manifest, RunRecord, Source, Summary};
use streamq::report::{aggregate, RunInput};
use streamq::s3q::{run_s3q, S3qOptions, Stop};
use streamq::s4q::{memory_bytes, phase_count_bound, run_s4q, S4qConfig};
use streamq::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_UNREADABLE: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "streamq", version, about = "Stabilized streaming Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an instance file.
    Gen(GenArgs),
    /// Run the streaming learner under a fixed controller.
    RunS3q(RunArgs),
    /// Run the exploration loop.
    RunS4q(RunArgs),
    /// Run first-order Q-learning without stabilization.
    RunBaseline(RunArgs),
    /// Check an instance, a short run, or the analysis inequalities.
    Verify(VerifyArgs),
    /// Aggregate finished run directories.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, short = 'S', default_value_t = 2)]
    states: usize,
    #[arg(long, short = 'A', default_value_t = 2)]
    actions: usize,
    #[arg(long, short = 'H', default_value_t = 2)]
    horizon: usize,
    /// Feature dimension; omitted means one-hot features.
    #[arg(long, short = 'd')]
    dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    value_cap: f64,
    #[arg(long)]
    noise: Option<f64>,
    /// Emit the fixed divergence instance instead.
    #[arg(long)]
    divergence: bool,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Controller {
    Uniform,
    /// Always the lowest action index.
    First,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "c-bonus")]
    c_bonus: Option<f64>,
    #[arg(long = "c-stop")]
    c_stop: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Controller of the streaming learner and behavior of the baseline.
    #[arg(long, value_enum)]
    controller: Option<Controller>,
    /// Write every regression sample of the streaming learner.
    #[arg(long)]
    log_samples: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Check {
    /// Instance shape, stochasticity and feature norms.
    Structure,
    /// Projection and epoch accounting of a streaming run.
    S3q,
    /// Regret sign and phase bound of an exploration run.
    S4q,
    /// Randomized inequality sweeps and concentration trials.
    Lemmas,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    check: Check,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories holding `run.csv` and `manifest.json`.
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

struct Fail {
    code: u8,
    msg: String,
}

impl Fail {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, msg: msg.into() }
    }

    fn invariant(msg: impl Into<String>) -> Self {
        Self { code: EXIT_INVARIANT, msg: msg.into() }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Contract(_) | Error::Degenerate(_) | Error::Convergence { .. } => EXIT_INVARIANT,
            Error::Io(_) | Error::Parse { .. } => EXIT_UNREADABLE,
            _ => EXIT_USAGE,
        };
        Self { code, msg: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, Fail>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(&a),
        Cmd::RunS3q(a) => cmd_run_s3q(&a),
        Cmd::RunS4q(a) => cmd_run_s4q(&a),
        Cmd::RunBaseline(a) => cmd_run_baseline(&a),
        Cmd::Verify(a) => cmd_verify(&a),
        Cmd::Report(a) => cmd_report(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("streamq: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn write(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Fail::usage(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Fail::usage(format!("{}: {e}", path.display())))
}

fn cmd_gen(a: &GenArgs) -> CliResult {
    let mdp = if a.divergence {
        gen_divergence_instance().0
    } else {
        let opts = GenOptions {
            noise: a.noise.map_or(RewardNoise::None, |w| RewardNoise::Bounded { half_width: w }),
            value_cap: a.value_cap,
            ..Default::default()
        };
        match a.dim {
            Some(d) if d != a.states * a.actions => gen_lowrank(a.states, a.actions, a.horizon, d, a.seed, &opts)?,
            _ => gen_tabular(a.states, a.actions, a.horizon, a.seed, &opts)?,
        }
    };
    write(&a.out, &write_instance(&mdp))?;
    println!("{} {}", mdp.instance_id(), a.out.display());
    Ok(())
}

/// Config file merged with flags.
struct Resolved {
    cfg: ExperimentConfig,
    mdp: LowRankMdp,
    episodes: u64,
    seed: u64,
    out: PathBuf,
}

fn resolve(a: &RunArgs, need_out: bool) -> CliResult<Resolved> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Fail::usage(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &a.instance {
        cfg.instance = Some(p.display().to_string());
    }
    cfg.episodes = a.episodes.or(cfg.episodes);
    cfg.seed = a.seed.or(cfg.seed);
    cfg.lambda = a.lambda.or(cfg.lambda);
    if let Some(v) = a.delta {
        cfg.delta = v;
    }
    if let Some(v) = a.c_bonus {
        cfg.c_bonus = v;
    }
    if let Some(v) = a.c_stop {
        cfg.c_stop = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(p) = &a.out {
        cfg.out = Some(p.display().to_string());
    }
    let path = cfg.instance.clone().ok_or_else(|| Fail::usage("--instance is required"))?;
    let seed = cfg.seed.ok_or_else(|| Fail::usage("--seed is required"))?;
    let episodes = cfg.episodes.ok_or_else(|| Fail::usage("--episodes is required"))?;
    let out = match &cfg.out {
        Some(o) => PathBuf::from(o),
        None if need_out => return Err(Fail::usage("--out is required")),
        None => PathBuf::new(),
    };
    let text = fs::read_to_string(&path).map_err(|e| Fail {
        code: EXIT_UNREADABLE,
        msg: format!("cannot read instance {path}: {e}"),
    })?;
    let mut mdp = parse_instance(&text).map_err(|e| Fail {
        code: EXIT_UNREADABLE,
        msg: format!("cannot parse instance {path}: {e}"),
    })?;
    if let Some(w) = cfg.noise_half_width {
        mdp = mdp.with_noise(RewardNoise::Bounded { half_width: w })?;
    }
    Ok(Resolved { cfg, mdp, episodes, seed, out })
}

fn controller(mdp: &LowRankMdp, c: Option<Controller>) -> Policy {
    match c.unwrap_or(Controller::Uniform) {
        Controller::Uniform => Policy::Uniform,
        Controller::First => Policy::Tabular(ActionTable::constant(mdp.horizon(), mdp.states(), 0)),
    }
}

fn v_star(mdp: &LowRankMdp) -> f64 {
    value_iteration(mdp).1.start_value(mdp)
}

/// Writes `run.csv`, `manifest.json` and `summary.txt` plus extra artifacts.
fn emit(
    r: &Resolved,
    command: &str,
    rec: &RunRecord,
    mut summary: Summary,
    resolved: BTreeMap<String, f64>,
    extra: &[(&str, String)],
) -> CliResult {
    let mut artifacts = vec!["run.csv".to_string(), "summary.txt".to_string()];
    write(&r.out.join("run.csv"), &rec.to_csv())?;
    for (name, text) in extra {
        write(&r.out.join(name), text)?;
        artifacts.push((*name).to_string());
    }
    summary.extra.extend(resolved.iter().map(|(k, v)| (format!("resolved.{k}"), *v)));
    let manifest = Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: r.cfg.hash(),
        instance_id: r.mdp.instance_id(),
        seed: Some(r.seed),
        config: r.cfg.clone(),
        resolved,
        summary: summary.clone(),
        artifacts,
    };
    write(&r.out.join("summary.txt"), &summary_table(&manifest))?;
    write(&r.out.join("manifest.json"), &manifest.to_json())?;
    Ok(())
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".into(), ToString::to_string)
}

fn summary_table(m: &Manifest) -> String {
    let s = &m.summary;
    let mut rows = vec![
        ("command", m.command.clone()),
        ("config_hash", m.config_hash.clone()),
        ("instance_id", m.instance_id.clone()),
        ("seed", opt(&m.seed)),
        ("episodes", s.episodes.to_string()),
        ("final_cum_regret", opt(&s.final_cum_regret)),
        ("ave_regret_k/4", opt(&s.ave_regret_quarter)),
        ("ave_regret_k/2", opt(&s.ave_regret_half)),
        ("ave_regret_k", opt(&s.ave_regret_final)),
        ("phases", opt(&s.phases)),
        ("completed_phases", opt(&s.completed_phases)),
        ("final_mem_entries", opt(&s.final_mem_entries)),
        ("final_mem_bytes", opt(&s.final_mem_bytes)),
        ("first_divergence_step", opt(&s.first_divergence_step)),
        ("max_param_norm", opt(&s.max_param_norm)),
    ];
    let extra: Vec<(String, String)> = s.extra.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
    let mut out = String::new();
    for (k, v) in rows.drain(..).map(|(k, v)| (k.to_string(), v)).chain(extra) {
        out.push_str(&format!("{k:<28}{v}\n"));
    }
    out
}

fn cmd_run_s3q(a: &RunArgs) -> CliResult {
    let r = resolve(a, true)?;
    let pi = controller(&r.mdp, a.controller);
    let lambda = r.cfg.lambda.unwrap_or(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    let out = run_s3q(&r.mdp, &pi, None, &Stop::budget(r.episodes), lambda, &mut rng, &S3qOptions { log_samples: a.log_samples })?;
    if out.stats.max_committed_norm > 1.0 + 1e-12 {
        return Err(Fail::invariant(format!(
            "committed target norm {} exceeds 1: {:?}",
            out.stats.max_committed_norm, out.stats
        )));
    }
    if !out.no_full_epoch && !out.stats.accounting_holds() {
        return Err(Fail::invariant(format!("epoch accounting violated: {:?}", out.stats)));
    }
    let (h, d) = (r.mdp.horizon(), r.mdp.dim());
    let vs = v_star(&r.mdp);
    let regret = vs - policy_value(&r.mdp, &pi)?;
    let mut rec = RunRecord { v_star: vs, lambda, ..Default::default() };
    for _ in 0..out.stats.trajectories {
        rec.push(0, Source::S3qSubroutine, regret, 0, memory_bytes(0, h, d));
    }
    let mut summary = Summary::from_record(&rec);
    summary.phases = None;
    summary.completed_phases = None;
    summary.max_param_norm = Some(out.stats.max_committed_norm);
    summary.extra.insert("epochs_completed".into(), f64::from(out.stats.epochs_completed));

    let mut diag = serde_json::Map::new();
    diag.insert("epochs_completed".into(), out.stats.epochs_completed.into());
    diag.insert("level_counts".into(), out.stats.level_counts.clone().into());
    diag.insert("max_committed_norm".into(), out.stats.max_committed_norm.into());
    if out.stats.epochs_completed > 0 && r.episodes >= 4 * h as u64 {
        let unc = UncertaintySpec::new(&r.mdp, &pi, r.episodes, r.cfg.delta, out.stats.epochs_completed, lambda, r.cfg.c_bonus)?;
        let br = error_bracket(&r.mdp, &pi, &out.qbest, None, &unc)?;
        let sw = value_sandwich(&r.mdp, &out.qbest, &unc, 0.0)?;
        diag.insert("bracket_min_constant".into(), br.min_constant.into());
        diag.insert("value_gap".into(), sw.gap.into());
        diag.insert("value_lower".into(), sw.lower.into());
        diag.insert("value_upper".into(), sw.upper.into());
        summary.extra.insert("bracket_min_constant".into(), br.min_constant);
    }
    let mut extra = vec![(
        "diagnostics.json",
        serde_json::to_string_pretty(&diag).expect("diagnostics serialize") + "\n",
    )];
    if a.log_samples {
        extra.push(("samples.jsonl", streamq::record::write_sample_log(&out.samples)));
    }
    let resolved = BTreeMap::from([("lambda".to_string(), lambda)]);
    emit(&r, "run-s3q", &rec, summary, resolved, &extra)
}

fn cmd_run_s4q(a: &RunArgs) -> CliResult {
    let r = resolve(a, true)?;
    let cfg = S4qConfig {
        delta: r.cfg.delta,
        lambda: r.cfg.lambda,
        c_bonus: r.cfg.c_bonus,
        c_stop: r.cfg.c_stop,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    let rec = run_s4q(&r.mdp, r.episodes, &cfg, &mut rng)?;
    check_s4q(&r, &rec, &cfg)?;
    let summary = Summary::from_record(&rec);
    let phases = serde_json::to_string_pretty(&rec.phases).expect("phases serialize") + "\n";
    let resolved = BTreeMap::from([
        ("lambda".to_string(), rec.lambda),
        ("v_star".to_string(), rec.v_star),
    ]);
    emit(&r, "run-s4q", &rec, summary, resolved, &[("phases.json", phases)])
}

fn check_s4q(r: &Resolved, rec: &RunRecord, cfg: &S4qConfig) -> CliResult {
    if let Some(row) = rec.rows.iter().find(|row| row.inst_regret < -1e-9) {
        return Err(Fail::invariant(format!("negative regret: {row:?}")));
    }
    let bound = phase_count_bound(r.mdp.horizon(), r.mdp.dim(), r.episodes, rec.lambda, cfg.delta);
    let entries = rec.rows.last().map_or(0, |row| row.mem_entries);
    if bound > 0.0 && entries as f64 > bound {
        return Err(Fail::invariant(format!("{entries} memory entries exceed the phase bound {bound:.3}")));
    }
    Ok(())
}

fn cmd_run_baseline(a: &RunArgs) -> CliResult {
    let r = resolve(a, true)?;
    let divergence = r.mdp.meta.generator == DIVERGENCE_INSTANCE_VERSION;
    let (behavior, tied, threshold) = if divergence {
        let setup = gen_divergence_instance().1;
        (setup.behavior, setup.tied_parameters, setup.norm_threshold)
    } else {
        (controller(&r.mdp, a.controller), false, 1e6)
    };
    let behavior = match a.controller {
        Some(c) => controller(&r.mdp, Some(c)),
        None => behavior,
    };
    let cfg = VanillaConfig {
        steps: r.episodes * r.mdp.horizon() as u64,
        lr: r.cfg.lr,
        tied,
        norm_threshold: threshold,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    let rep = run_vanilla(&r.mdp, &behavior, &cfg, &mut rng)?;
    let mut summary = Summary::from_record(&rep.record);
    summary.phases = None;
    summary.completed_phases = None;
    summary.first_divergence_step = rep.first_divergence_step;
    summary.max_param_norm = Some(rep.max_norm);
    summary.extra.insert("steps_run".into(), rep.steps_run as f64);
    let mut trace = String::from("step,max_param_norm\n");
    for (s, n) in &rep.norm_trace {
        trace.push_str(&format!("{s},{n:e}\n"));
    }
    let resolved = BTreeMap::from([
        ("lr".to_string(), cfg.lr),
        ("tied".to_string(), f64::from(u8::from(tied))),
        ("norm_threshold".to_string(), threshold),
    ]);
    emit(&r, "run-baseline", &rep.record, summary, resolved, &[("norms.csv", trace)])
}

fn cmd_verify(a: &VerifyArgs) -> CliResult {
    match a.check {
        Check::Structure => {
            let path = a.run.instance.as_ref().ok_or_else(|| Fail::usage("--instance is required"))?;
            let text = fs::read_to_string(path).map_err(|e| Fail {
                code: EXIT_UNREADABLE,
                msg: format!("cannot read instance {}: {e}", path.display()),
            })?;
            let mdp = parse_instance(&text).map_err(|e| Fail {
                code: EXIT_UNREADABLE,
                msg: format!("cannot parse instance {}: {e}", path.display()),
            })?;
            let rep = mdp.check_structure();
            if !rep.passes() {
                return Err(Fail::invariant(format!("structure check failed: {rep:?}")));
            }
            println!("structure ok {}", mdp.instance_id());
            Ok(())
        }
        Check::S3q => {
            let r = resolve(&a.run, false)?;
            let pi = controller(&r.mdp, a.run.controller);
            let lambda = r.cfg.lambda.unwrap_or(1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
            let out = run_s3q(&r.mdp, &pi, None, &Stop::budget(r.episodes), lambda, &mut rng, &S3qOptions::default())?;
            if out.stats.max_committed_norm > 1.0 + 1e-12 {
                return Err(Fail::invariant(format!("committed norm {}", out.stats.max_committed_norm)));
            }
            if !out.no_full_epoch && !out.stats.accounting_holds() {
                return Err(Fail::invariant(format!("epoch accounting violated: {:?}", out.stats)));
            }
            println!("s3q ok epochs={} max_norm={:e}", out.stats.epochs_completed, out.stats.max_committed_norm);
            Ok(())
        }
        Check::S4q => {
            let r = resolve(&a.run, false)?;
            let cfg = S4qConfig {
                delta: r.cfg.delta,
                lambda: r.cfg.lambda,
                c_bonus: r.cfg.c_bonus,
                c_stop: r.cfg.c_stop,
            };
            let rec = run_s4q(&r.mdp, r.episodes, &cfg, &mut ChaCha8Rng::seed_from_u64(r.seed))?;
            check_s4q(&r, &rec, &cfg)?;
            println!("s4q ok phases={} regret={:e}", rec.phases.len(), rec.rows.last().map_or(0.0, |x| x.cum_regret));
            Ok(())
        }
        Check::Lemmas => verify_lemmas(a.run.seed.unwrap_or(0)),
    }
}

fn verify_lemmas(seed: u64) -> CliResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sweeps = [
        ("info_gain", diagnostics::info_gain_sweep(1000, 8, 1e-10, &mut rng)),
        ("excess_loss", diagnostics::excess_loss_sweep(1000, 8, 1e-10, &mut rng)),
        ("excess_risk", diagnostics::excess_risk_sweep(1000, 8, 1e-10, &mut rng)),
    ];
    for (name, rep) in &sweeps {
        println!("{name:<14} instances={} violations={} worst={:e}", rep.instances, rep.violations, rep.worst);
        if rep.violations > 0 {
            return Err(Fail::invariant(format!(
                "{name} violated; first counterexample:\n{}",
                rep.first_counterexample.clone().unwrap_or_default()
            )));
        }
    }
    let law = FeatureLaw::random(4, 6, &mut rng);
    let trials = [
        (
            "matrix_chernoff",
            ConcentrationKind::MatrixChernoff { law: law.clone(), episodes: 200, delta: 0.1, lambda: None },
        ),
        (
            "proportional",
            ConcentrationKind::Proportional { values: vec![0.0, 0.5, 1.0], probs: vec![0.3, 0.4, 0.3], delta: 0.1, max_n: 100_000 },
        ),
        ("logdet", ConcentrationKind::LogDet { law, max_n: 200, delta: 0.1, lambda: (4.0f64 * 200.0 / 0.1).ln() }),
    ];
    for (name, kind) in &trials {
        let o = diagnostics::concentration_trial(kind, 500, &mut rng)?;
        println!("{name:<14} trials={} failures={} upper95={:.4}", o.trials, o.failures, o.upper_95);
        if !o.within(0.1) {
            return Err(Fail::invariant(format!("{name} failure rate {:?} exceeds 0.1", o)));
        }
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> CliResult {
    if a.runs.is_empty() {
        return Err(Fail::usage("report needs at least one run directory"));
    }
    let mut inputs = Vec::with_capacity(a.runs.len());
    for dir in &a.runs {
        let read = |name: &str| {
            fs::read_to_string(dir.join(name)).map_err(|e| Fail {
                code: EXIT_UNREADABLE,
                msg: format!("{}: {e}", dir.join(name).display()),
            })
        };
        let manifest = Manifest::from_json(&read("manifest.json")?).map_err(|e| Fail {
            code: EXIT_UNREADABLE,
            msg: format!("{}: {e}", dir.display()),
        })?;
        let rows = parse_csv(&read("run.csv")?).map_err(|e| Fail {
            code: EXIT_UNREADABLE,
            msg: format!("{}: {e}", dir.display()),
        })?;
        inputs.push(RunInput {
            label: format!("{}-seed{}", dir.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned()), opt(&manifest.seed)),
            instance_id: manifest.instance_id,
            rows,
        });
    }
    let rep = aggregate(&inputs).map_err(|e| Fail::usage(e.to_string()))?;
    write(&a.out.join("regret.csv"), &rep.regret_csv())?;
    write(&a.out.join("per_run.csv"), &rep.per_run_csv())?;
    write(&a.out.join("memory.csv"), &rep.memory_csv())?;
    write(&a.out.join("report.json"), &rep.summary_json())?;
    match &rep.slope {
        Some(s) => println!(
            "runs={} episodes={} slope={:.4} ci95=[{:.4}, {:.4}] over [{}, {}]",
            rep.labels.len(),
            rep.episodes,
            s.slope,
            s.lo,
            s.hi,
            s.first_episode,
            s.last_episode
        ),
        None => println!("runs={} episodes={} slope=unavailable", rep.labels.len(), rep.episodes),
    }
    Ok(())
}
