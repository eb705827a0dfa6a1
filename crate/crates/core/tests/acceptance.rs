//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamq::baselines::{run_vanilla, VanillaConfig};
use streamq::diagnostics::{
    self, error_bracket, excess_loss_sweep, excess_risk_sweep, info_gain_sweep, quantile, value_sandwich,
    ConcentrationKind, DiscreteLaw, FeatureLaw, UncertaintySpec,
};
use streamq::envs::{gen_divergence_instance, gen_lowrank, gen_tabular, GenOptions, LowRankMdp};
use streamq::linalg::{project_ball, quad};
use streamq::policy::{ActionTable, Policy};
use streamq::qfunc::Bonus;
use streamq::record::RunRecord;
use streamq::report::fit_slope;
use streamq::s3q::{run_s3q, S3qOptions, S3qStats, Stop};
use streamq::s4q::{memory_bytes, phase_count_bound, run_s4q, S4qConfig};
use streamq::streamls::{batch_ridge, batch_ridge_constrained, Sample, SlsState};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_feature(d: usize, r: &mut impl Rng) -> DVector<f64> {
    let v = DVector::from_fn(d, |_, _| r.random_range(-1.0f64..1.0));
    let n = v.norm();
    if n > 1.0 {
        v / n
    } else {
        v
    }
}

fn streaming_batch_equivalence() -> Outcome {
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = r.random_range(1..=16);
        let n = r.random_range(0..=500);
        let lambda = 10f64.powf(r.random_range(-1.0..1.0));
        let scale = r.random_range(0.1..2.0);
        let samples: Vec<Sample> = (0..n)
            .map(|_| Sample::new(random_feature(d, &mut r), r.random_range(-scale..scale)))
            .collect();
        let mut sls = SlsState::new(d, lambda).unwrap();
        for s in &samples {
            sls.step_sample(s).unwrap();
        }
        let free = (sls.theta() - batch_ridge(&samples, d, lambda).unwrap()).norm();
        let projected = (sls.finalize().unwrap() - batch_ridge_constrained(&samples, d, lambda).unwrap()).norm();
        worst = worst.max(free).max(projected);
    }
    outcome(worst <= 1e-8, format!("100 instances, max deviation {worst:.2e}"))
}

/// Brute-force minimizer of `‖θ − θ̂‖²_Σ` over a polar grid of the unit disk.
fn grid_projection(theta_hat: &DVector<f64>, sigma: &DMatrix<f64>) -> DVector<f64> {
    let (a, b, c) = (sigma[(0, 0)], sigma[(0, 1)], sigma[(1, 1)]);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let angles = (std::f64::consts::TAU / 1e-3).ceil() as usize;
    let dirs: Vec<(f64, f64)> = (0..angles).map(|j| (j as f64 * 1e-3).sin_cos()).collect();
    for i in 0..=1000 {
        let rad = i as f64 * 1e-3;
        for &(sn, cs) in &dirs {
            let (x, y) = (rad * cs, rad * sn);
            let (u, v) = (x - theta_hat[0], y - theta_hat[1]);
            let q = a * u * u + 2.0 * b * u * v + c * v * v;
            if q < best.0 {
                best = (q, x, y);
            }
        }
    }
    DVector::from_vec(vec![best.1, best.2])
}

fn random_spd(d: usize, lo: f64, hi: f64, r: &mut impl Rng) -> DMatrix<f64> {
    let q = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0f64..1.0)).qr().q();
    let ev = DVector::from_fn(d, |_, _| r.random_range(lo..hi));
    &q * DMatrix::from_diagonal(&ev) * q.transpose()
}

fn projection_correctness() -> Outcome {
    let mut r = rng(202);
    let mut grid_err: f64 = 0.0;
    for _ in 0..50 {
        let sigma = random_spd(2, 0.2, 5.0, &mut r);
        let theta_hat = DVector::from_fn(2, |_, _| r.random_range(-3.0f64..3.0));
        let got = project_ball(&theta_hat, &sigma).unwrap();
        grid_err = grid_err.max((got - grid_projection(&theta_hat, &sigma)).norm());
    }
    // Certificates: feasibility, and no sampled feasible point does better.
    let mut cert_fail = 0;
    for _ in 0..200 {
        let d = r.random_range(1..=16);
        let sigma = random_spd(d, 0.01, 10.0, &mut r);
        let theta_hat = DVector::from_fn(d, |_, _| r.random_range(-4.0f64..4.0));
        let got = project_ball(&theta_hat, &sigma).unwrap();
        let f = quad(&sigma, &(&got - &theta_hat));
        let mut ok = got.norm() <= 1.0;
        for _ in 0..200 {
            // Random directions around the answer, pulled back into the ball.
            let step = DVector::from_fn(d, |_, _| r.random_range(-1.0f64..1.0)) * 10f64.powf(r.random_range(-4.0..0.0));
            let mut z = &got + step;
            let n = z.norm();
            if n > 1.0 {
                z /= n;
            }
            if quad(&sigma, &(&z - &theta_hat)) < f - 1e-9 * (1.0 + f) {
                ok = false;
            }
        }
        cert_fail += usize::from(!ok);
    }
    outcome(
        grid_err <= 1e-3 && cert_fail == 0,
        format!("grid max error {grid_err:.2e} over 50 d=2 cases; certificate failures {cert_fail}/200"),
    )
}

fn deterministic_inequalities() -> Outcome {
    let mut r = rng(303);
    let a = info_gain_sweep(10_000, 8, 1e-10, &mut r);
    let b = excess_loss_sweep(10_000, 8, 1e-10, &mut r);
    let c = excess_risk_sweep(10_000, 8, 1e-10, &mut r);
    outcome(
        a.violations + b.violations + c.violations == 0 && a.instances + b.instances + c.instances >= 29_000,
        format!(
            "info gain {}/{} (worst {:.1e}), excess loss {}/{} (worst {:.1e}), regularized excess risk {}/{} (worst {:.1e})",
            a.violations, a.instances, a.worst, b.violations, b.instances, b.worst, c.violations, c.instances, c.worst
        ),
    )
}

fn concentration_harnesses() -> Outcome {
    let mut r = rng(404);
    let delta = 0.1;
    let law = FeatureLaw::random(4, 6, &mut r);
    let chernoff = diagnostics::concentration_trial(
        &ConcentrationKind::MatrixChernoff { law: law.clone(), episodes: 200, delta, lambda: None },
        2000,
        &mut r,
    )
    .unwrap();
    let proportional = diagnostics::concentration_trial(
        &ConcentrationKind::Proportional { values: vec![0.0, 0.3, 1.0], probs: vec![0.3, 0.4, 0.3], delta, max_n: 100_000 },
        2000,
        &mut r,
    )
    .unwrap();
    let logdet = diagnostics::concentration_trial(
        &ConcentrationKind::LogDet { law, max_n: 200, delta, lambda: (4.0f64 * 200.0 / delta).ln() },
        2000,
        &mut r,
    )
    .unwrap();
    // Fit c on one batch of trials, then test it on a fresh batch.
    let dl = DiscreteLaw::random(2, 5, &mut r);
    let calib = diagnostics::ls_convergence_ratios(&dl, 0.5, 500, delta, 1.0, 2000, &mut r).unwrap();
    let c = quantile(&calib, 1.0 - delta / 2.0);
    let ls = diagnostics::ls_population_convergence_trial(&dl, 0.5, 500, delta, 1.0, c, 2000, &mut r).unwrap();
    let all = [chernoff, proportional, logdet, ls];
    outcome(
        all.iter().all(|o| o.within(delta) && o.trials >= 2000),
        format!(
            "upper 95% failure bounds: covariance {:.4}, proportional {:.4}, log-det {:.4}, population LS {:.4} (fitted c = {c:.4})",
            chernoff.upper_95, proportional.upper_95, logdet.upper_95, ls.upper_95
        ),
    )
}

fn epoch_accounting() -> Outcome {
    let mut runs = 0;
    let mut bad = Vec::new();
    let instances = [
        gen_tabular(2, 2, 2, 0, &GenOptions::default()).unwrap(),
        gen_tabular(3, 2, 3, 1, &GenOptions::default()).unwrap(),
        gen_lowrank(4, 2, 4, 3, 2, &GenOptions::default()).unwrap(),
    ];
    for (i, mdp) in instances.iter().enumerate() {
        let h = mdp.horizon() as u64;
        for seed in 0..5u64 {
            let mut r = rng(seed);
            for _ in 0..8 {
                let k = r.random_range(2 * h..=3000);
                let out = run_s3q(mdp, &Policy::Uniform, None, &Stop::budget(k), 1.0, &mut rng(seed), &S3qOptions::default()).unwrap();
                runs += 1;
                let floor = k / (4 * h);
                if out.stats.trajectories != k || out.stats.level_counts.iter().any(|&n| n < floor) {
                    bad.push((i, seed, k, out.stats.level_counts.clone()));
                }
            }
        }
        // Exactly at epoch boundaries.
        for e in 1..8 {
            let k = S3qStats::full_epoch_trajectories(mdp.horizon(), e);
            let out = run_s3q(mdp, &Policy::Uniform, None, &Stop::budget(k), 1.0, &mut rng(e as u64), &S3qOptions::default()).unwrap();
            runs += 1;
            if out.stats.epochs_completed != e || !out.stats.accounting_holds() {
                bad.push((i, 0, k, out.stats.level_counts.clone()));
            }
        }
    }
    outcome(bad.is_empty(), format!("{runs} runs, {} violations {:?}", bad.len(), bad.first()))
}

fn error_brackets() -> Outcome {
    let mdp = gen_tabular(4, 2, 3, 0, &GenOptions::default()).unwrap();
    let (k, delta, lambda) = (1u64 << 14, 0.1, 1.0);
    let verified = mdp.meta.entries.get("verified").map(String::as_str) == Some("true");
    let pi = Policy::Uniform;
    let bonus = Bonus::isotropic(3, mdp.dim(), lambda, 0.05).unwrap();
    let (mut plain, mut lifted) = (Vec::new(), Vec::new());
    let mut sandwich_ok = 0;
    for seed in 0..50 {
        let out = run_s3q(&mdp, &pi, None, &Stop::budget(k), lambda, &mut rng(seed), &S3qOptions::default()).unwrap();
        let unc = UncertaintySpec::new(&mdp, &pi, k, delta, out.stats.epochs_completed, lambda, 1.0).unwrap();
        let rep = error_bracket(&mdp, &pi, &out.qbest, None, &unc).unwrap();
        plain.push(rep.min_constant);
        let mut scaled = unc.clone();
        scaled.c = rep.min_constant.max(1e-12);
        sandwich_ok += usize::from(value_sandwich(&mdp, &out.qbest, &scaled, 0.0).unwrap().holds(1e-12));

        let out = run_s3q(&mdp, &pi, Some(&bonus), &Stop::budget(k), lambda, &mut rng(1000 + seed), &S3qOptions::default()).unwrap();
        let unc = UncertaintySpec::new(&mdp, &pi, k, delta, out.stats.epochs_completed, lambda, 1.0).unwrap();
        lifted.push(error_bracket(&mdp, &pi, &out.qbest, Some(&bonus), &unc).unwrap().min_constant);
    }
    // Smallest c at which at least a (1 − δ) share of runs pass.
    let c_plain = quantile(&plain, 1.0 - delta);
    let c_lifted = quantile(&lifted, 1.0 - delta);
    let share = |v: &[f64], c: f64| v.iter().filter(|&&x| x <= c).count() as f64 / v.len() as f64;
    let pass = verified
        && share(&plain, c_plain) >= 1.0 - delta
        && share(&lifted, c_lifted) >= 1.0 - delta
        && c_plain <= 1.0
        && c_lifted <= 1.0
        && sandwich_ok == 50;
    outcome(
        pass,
        format!(
            "smallest passing c: {c_plain:.4} without bonus, {c_lifted:.4} with bonus (50 runs each); value sandwich at the per-run constant held in {sandwich_ok}/50"
        ),
    )
}

/// The regret instance: exact closure, S = A = H = 2.
fn regret_instance() -> LowRankMdp {
    gen_tabular(2, 2, 2, 0, &GenOptions { value_cap: 0.3, ..Default::default() }).unwrap()
}

fn regret_config() -> S4qConfig {
    S4qConfig { c_bonus: 0.1, lambda: Some(1.0), ..Default::default() }
}

const K: u64 = 50_000;

fn regret_runs(seeds: std::ops::Range<u64>) -> Vec<RunRecord> {
    let mdp = regret_instance();
    seeds.map(|s| run_s4q(&mdp, K, &regret_config(), &mut rng(s)).unwrap()).collect()
}

fn sublinear_regret(runs: &[RunRecord]) -> Outcome {
    let mean = |k: u64| runs.iter().map(|r| r.ave_regret_at(k).unwrap()).sum::<f64>() / runs.len() as f64;
    let (at_k, at_quarter) = (mean(K), mean(K / 4));
    let cum: Vec<Vec<f64>> = runs.iter().map(|r| r.rows.iter().map(|e| e.cum_regret).collect()).collect();
    let fit = fit_slope(&cum).expect("slope fit");
    let distinct = cum.iter().enumerate().filter(|(i, c)| !cum[..*i].contains(c)).count();
    outcome(
        at_k < at_quarter && fit.hi < 0.9,
        format!(
            "{} seeds ({} distinct curves): mean AveRegret(K) {at_k:.3e} vs AveRegret(K/4) {at_quarter:.3e}; final-decade slope {:.3} (95% CI [{:.3}, {:.3}])",
            runs.len(),
            distinct,
            fit.slope,
            fit.lo,
            fit.hi
        ),
    )
}

fn memory_growth(runs: &[RunRecord]) -> Outcome {
    let mdp = regret_instance();
    let cfg = regret_config();
    let bound = phase_count_bound(mdp.horizon(), mdp.dim(), K, cfg.lambda.unwrap(), cfg.delta);
    let mut max_entries = 0;
    let mut max_ratio: f64 = 0.0;
    for r in runs {
        let last = r.rows.last().unwrap();
        max_entries = max_entries.max(last.mem_entries);
        let tenth = &r.rows[(K / 10 - 1) as usize];
        max_ratio = max_ratio.max(last.mem_bytes as f64 / tenth.mem_bytes as f64);
        assert_eq!(last.mem_bytes, memory_bytes(last.mem_entries, mdp.horizon(), mdp.dim()));
    }
    outcome(
        max_entries as f64 <= bound && max_ratio <= 2.0,
        format!("max entries {max_entries} vs phase bound {bound:.2}; max bytes(K)/bytes(K/10) {max_ratio:.3}"),
    )
}

fn near_optimism(runs: &[RunRecord]) -> Outcome {
    let delta = regret_config().delta;
    let mut pairs = 0;
    let mut good = 0;
    for r in runs {
        for p in &r.phases {
            pairs += 1;
            good += usize::from(p.optimistic_value >= r.v_star - 1e-9);
        }
    }
    let share = good as f64 / pairs as f64;
    outcome(
        pairs >= 200 && share >= 1.0 - delta - 0.05,
        format!("{good}/{pairs} (phase, seed) pairs optimistic ({share:.3})"),
    )
}

fn stability_contrast() -> Outcome {
    let (mdp, setup) = gen_divergence_instance();
    let cfg = VanillaConfig { steps: 100_000, lr: setup.lr, tied: setup.tied_parameters, norm_threshold: 1e6 };
    let rep = run_vanilla(&mdp, &setup.behavior, &cfg, &mut rng(0)).unwrap();
    let mut max_norm: f64 = 0.0;
    for seed in 0..5 {
        for (m, pi) in [
            (&mdp, setup.behavior.clone()),
            (&mdp, Policy::Uniform),
            (&regret_instance(), Policy::Tabular(ActionTable::constant(2, 2, 1))),
        ] {
            let out = run_s3q(m, &pi, None, &Stop::budget(4000), 1.0, &mut rng(seed), &S3qOptions::default()).unwrap();
            max_norm = max_norm.max(out.stats.max_committed_norm).max(out.qbest.max_theta_norm());
        }
    }
    let step = rep.first_divergence_step;
    outcome(
        rep.max_norm > 1e6 && step.is_some_and(|s| s <= 100_000) && max_norm <= 1.0,
        format!("baseline crossed 1e6 at step {step:?}; max committed streaming target norm {max_norm:.6}"),
    )
}

fn determinism() -> Outcome {
    let mdp = regret_instance();
    let a = run_s4q(&mdp, 5000, &regret_config(), &mut rng(7)).unwrap().to_csv();
    let b = run_s4q(&mdp, 5000, &regret_config(), &mut rng(7)).unwrap().to_csv();
    let lr = gen_lowrank(5, 3, 3, 4, 11, &GenOptions::default()).unwrap();
    let c = run_s4q(&lr, 3000, &S4qConfig::default(), &mut rng(3)).unwrap().to_csv();
    let d = run_s4q(&lr, 3000, &S4qConfig::default(), &mut rng(3)).unwrap().to_csv();
    let (dv, setup) = gen_divergence_instance();
    let cfg = VanillaConfig { steps: 2000, lr: setup.lr, tied: true, norm_threshold: 1e6 };
    let e = run_vanilla(&dv, &setup.behavior, &cfg, &mut rng(1)).unwrap().record.to_csv();
    let f = run_vanilla(&dv, &setup.behavior, &cfg, &mut rng(1)).unwrap().record.to_csv();
    outcome(a == b && c == d && e == f, format!("CSV sizes {} / {} / {} bytes, each byte-identical on rerun", a.len(), c.len(), e.len()))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let took = t.elapsed();
        let pass = o.pass && took <= budget;
        failed += usize::from(!pass);
        println!(
            "criterion {id:>2} {:<4} {name}: {} [{:.1}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    };
    report(1, "streaming/batch equivalence", Duration::from_secs(10), &mut streaming_batch_equivalence);
    report(2, "projection correctness", Duration::from_secs(30), &mut projection_correctness);
    report(3, "deterministic inequalities", Duration::from_secs(60), &mut deterministic_inequalities);
    report(4, "concentration harnesses", Duration::from_secs(300), &mut concentration_harnesses);
    report(5, "epoch accounting", Duration::from_secs(60), &mut epoch_accounting);
    report(6, "error brackets", Duration::from_secs(600), &mut error_brackets);
    let t = Instant::now();
    let runs = regret_runs(0..20);
    let base = t.elapsed();
    report(7, "sublinear regret", Duration::from_secs(1800), &mut || {
        let t = Instant::now();
        let mut o = sublinear_regret(&runs);
        o.detail.push_str(&format!(" (runs took {:.1}s)", (base + t.elapsed()).as_secs_f64()));
        o
    });
    report(8, "memory log-growth", Duration::from_secs(60), &mut || memory_growth(&runs));
    report(9, "near-optimism", Duration::from_secs(600), &mut || {
        let mut all = runs.clone();
        all.extend(regret_runs(20..80));
        near_optimism(&all)
    });
    report(10, "stability contrast", Duration::from_secs(60), &mut stability_contrast);
    report(11, "determinism", Duration::from_secs(60), &mut determinism);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
