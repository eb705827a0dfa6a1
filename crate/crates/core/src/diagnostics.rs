//! Exact analysis quantities computed from DP tables, plus Monte-Carlo
//! harnesses for the concentration and inequality lemmas used by the
//! convergence analysis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::envs::{bellman_backup, evaluate_component, occupancy, value_iteration, LowRankMdp, ValueTable};
use crate::error::{Error, Result};
use crate::linalg::{self, ParamVector};
use crate::policy::{greedy_table, Component, Policy};
use crate::qfunc::{Bonus, TargetNetworks};
use crate::s4q::trig_threshold;
use crate::streamls::{batch_ridge_constrained, Sample};

/// Ridge used to select the minimal-norm minimizer off support.
pub const TIE_RIDGE: f64 = 1e-10;

/// `Q_h(s, a)` of a set of networks, flattened `s*A + a`. Zero at `h = H`.
pub fn tabulate(mdp: &LowRankMdp, q: &TargetNetworks, h: usize) -> Result<Vec<f64>> {
    let n = mdp.states() * mdp.actions();
    if h >= mdp.horizon() {
        return Ok(vec![0.0; n]);
    }
    let mut out = Vec::with_capacity(n);
    for s in 0..mdp.states() {
        for a in 0..mdp.actions() {
            out.push(q.eval(h, mdp.phi(h, s, a))?);
        }
    }
    Ok(out)
}

fn fitted(mdp: &LowRankMdp, h: usize, theta: &ParamVector) -> Vec<f64> {
    mdp.features(h).iter().map(|phi| phi.dot(theta)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestPredictor {
    pub theta: ParamVector,
    /// Population loss at `theta`.
    pub loss: f64,
    pub occupancy: Vec<f64>,
    /// The level carries no occupancy mass.
    pub unreachable: bool,
}

/// Weighted least squares over the unit ball with weights `w[sa]` and
/// targets `y[sa]`.
pub fn weighted_ball_fit(mdp: &LowRankMdp, h: usize, w: &[f64], y: &[f64]) -> Result<BestPredictor> {
    let d = mdp.dim();
    let mass: f64 = w.iter().sum();
    if mass <= 0.0 {
        return Ok(BestPredictor {
            theta: DVector::zeros(d),
            loss: 0.0,
            occupancy: w.to_vec(),
            unreachable: true,
        });
    }
    let mut g = DMatrix::identity(d, d) * TIE_RIDGE;
    let mut b = DVector::zeros(d);
    for (i, phi) in mdp.features(h).iter().enumerate() {
        if w[i] == 0.0 {
            continue;
        }
        linalg::add_outer(&mut g, phi, w[i]);
        b.axpy(w[i] * y[i], phi, 1.0);
    }
    let unconstrained = linalg::invert_spd(&g)? * b;
    let theta = linalg::project_ball(&unconstrained, &g)?;
    let pred = fitted(mdp, h, &theta);
    let loss = w.iter().zip(pred.iter().zip(y)).map(|(wi, (p, t))| wi * (p - t).powi(2)).sum();
    Ok(BestPredictor {
        theta,
        loss,
        occupancy: w.to_vec(),
        unreachable: false,
    })
}

/// Population minimizer of `E_{(s,a)∼π,h}(⟨φ, θ⟩ − (T_h Q')(s,a))²` over
/// `‖θ‖ ≤ 1`. `qnext` is `Q'` tabulated at level `h + 1`.
pub fn best_predictor(mdp: &LowRankMdp, pi: &Policy, qnext: &[f64], h: usize) -> Result<BestPredictor> {
    check_level(mdp, h)?;
    let occ = occupancy(mdp, pi)?;
    let target = bellman_backup(mdp, h, qnext);
    weighted_ball_fit(mdp, h, &occ[h], &target)
}

fn check_level(mdp: &LowRankMdp, h: usize) -> Result<()> {
    if h >= mdp.horizon() {
        return Err(Error::Contract(format!("level {h} out of range for horizon {}", mdp.horizon())));
    }
    Ok(())
}

/// `(T_h Q')(s,a) − ⟨φ_h(s,a), θ_best⟩` at every `(s,a)`.
pub fn comparator_error(mdp: &LowRankMdp, pi: &Policy, qnext: &[f64], h: usize) -> Result<Vec<f64>> {
    let bp = best_predictor(mdp, pi, qnext, h)?;
    let target = bellman_backup(mdp, h, qnext);
    Ok(target.iter().zip(fitted(mdp, h, &bp.theta)).map(|(t, f)| t - f).collect())
}

/// A next-level function candidate for the transfer error.
#[derive(Clone, Debug)]
pub enum QCandidate {
    Linear(TargetNetworks),
    /// Arbitrary tables `[h][s*A + a]` for `h ∈ 0..H`.
    Table(Vec<Vec<f64>>),
}

impl QCandidate {
    fn level(&self, mdp: &LowRankMdp, h: usize) -> Result<Vec<f64>> {
        match self {
            QCandidate::Linear(q) => tabulate(mdp, q, h),
            QCandidate::Table(t) => Ok(t.get(h).cloned().unwrap_or_else(|| vec![0.0; mdp.states() * mdp.actions()])),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferMode {
    Lin,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferEstimate {
    pub value: f64,
    /// Always true: the estimate maximizes over a finite candidate set.
    pub lower_bound: bool,
    pub mode: TransferMode,
    /// Indices of the maximizing `(π̄, Q')` pair.
    pub argmax: (usize, usize),
    pub candidates: (usize, usize),
}

/// `max_{π̄, Q'} |Σ_h E_{π̄}[Q_h − T_h Q'_{h+1}]|` with `Q_h` the best fit
/// under `pi`.
pub fn transfer_error_estimate(
    mdp: &LowRankMdp,
    pi: &Policy,
    pibars: &[Policy],
    qs: &[QCandidate],
    mode: TransferMode,
) -> Result<TransferEstimate> {
    if pibars.is_empty() || qs.is_empty() {
        return Err(Error::Config("transfer error needs nonempty candidate sets".into()));
    }
    let occ_pi = occupancy(mdp, pi)?;
    let occ_bars = pibars.iter().map(|p| occupancy(mdp, p)).collect::<Result<Vec<_>>>()?;
    let mut best = (f64::NEG_INFINITY, (0, 0));
    for (qi, q) in qs.iter().enumerate() {
        // diff[h][sa] = Q_h − T_h Q'_{h+1}
        let mut diff = Vec::with_capacity(mdp.horizon());
        for h in 0..mdp.horizon() {
            let qnext = q.level(mdp, h + 1)?;
            let target = bellman_backup(mdp, h, &qnext);
            let bp = weighted_ball_fit(mdp, h, &occ_pi[h], &target)?;
            diff.push(fitted(mdp, h, &bp.theta).into_iter().zip(&target).map(|(f, t)| f - t).collect::<Vec<_>>());
        }
        for (pj, occ) in occ_bars.iter().enumerate() {
            let total: f64 = (0..mdp.horizon()).map(|h| dot(&occ[h], &diff[h])).sum();
            if total.abs() > best.0 {
                best = (total.abs(), (pj, qi));
            }
        }
    }
    Ok(TransferEstimate {
        value: best.0,
        lower_bound: true,
        mode,
        argmax: best.1,
        candidates: (pibars.len(), qs.len()),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Uncertainty scale and expected covariances of a controller.
#[derive(Clone, Debug)]
pub struct UncertaintySpec {
    pub n_star: f64,
    pub delta_star: f64,
    pub lambda: f64,
    pub c: f64,
    /// `α̅` at `c = 1`.
    pub alpha_unit: f64,
    /// `n*(E_π φ_h φ_hᵀ + λI)` per level.
    pub sigma_bar: Vec<DMatrix<f64>>,
    sigma_bar_inv: Vec<DMatrix<f64>>,
}

impl UncertaintySpec {
    pub fn new(mdp: &LowRankMdp, pi: &Policy, episodes: u64, delta_master: f64, e_tot: u32, lambda: f64, c: f64) -> Result<Self> {
        let (h_n, d) = (mdp.horizon(), mdp.dim());
        let n_star = episodes as f64 / (4.0 * h_n as f64);
        if n_star < 1.0 {
            return Err(Error::Config(format!("n* = {n_star} must be at least 1")));
        }
        if !(delta_master > 0.0 && delta_master < 1.0) || e_tot == 0 || !(lambda > 0.0) || !(c >= 0.0) {
            return Err(Error::Config("uncertainty needs δ ∈ (0,1), e_tot ≥ 1, λ > 0, c ≥ 0".into()));
        }
        let delta_star = delta_master / (2.0 * h_n as f64 * f64::from(e_tot).powi(2) * d as f64);
        let arg = d as f64 * n_star * std::f64::consts::E * h_n as f64 / delta_star;
        let alpha_unit = (d as f64 * arg.ln()).sqrt() + lambda.sqrt();
        let occ = occupancy(mdp, pi)?;
        let mut sigma_bar = Vec::with_capacity(h_n);
        let mut sigma_bar_inv = Vec::with_capacity(h_n);
        for (h, occ_h) in occ.iter().enumerate() {
            let mut m = DMatrix::identity(d, d) * lambda;
            for (i, phi) in mdp.features(h).iter().enumerate() {
                linalg::add_outer(&mut m, phi, occ_h[i]);
            }
            m *= n_star;
            sigma_bar_inv.push(linalg::invert_spd(&m)?);
            sigma_bar.push(m);
        }
        Ok(Self {
            n_star,
            delta_star,
            lambda,
            c,
            alpha_unit,
            sigma_bar,
            sigma_bar_inv,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.c * self.alpha_unit
    }

    /// `‖φ‖_{Σ̄_h⁻¹}` times `α̅` at `c = 1`.
    pub fn eval_unit(&self, h: usize, phi: &DVector<f64>) -> f64 {
        self.alpha_unit * linalg::quad(&self.sigma_bar_inv[h], phi).max(0.0).sqrt()
    }

    pub fn eval(&self, h: usize, phi: &DVector<f64>) -> f64 {
        self.c * self.eval_unit(h, phi)
    }

    pub fn table(&self, mdp: &LowRankMdp, h: usize) -> Vec<f64> {
        mdp.features(h).iter().map(|phi| self.eval(h, phi)).collect()
    }
}

/// `ū_h(s, a)` for a controller run over `episodes` trajectories and
/// `e_tot` completed epochs.
#[allow(clippy::too_many_arguments)]
pub fn uncertainty_eval(
    mdp: &LowRankMdp,
    pi: &Policy,
    episodes: u64,
    delta_master: f64,
    e_tot: u32,
    lambda: f64,
    c: f64,
    h: usize,
    s: usize,
    a: usize,
) -> Result<f64> {
    check_level(mdp, h)?;
    let spec = UncertaintySpec::new(mdp, pi, episodes, delta_master, e_tot, lambda, c)?;
    Ok(spec.eval(h, mdp.phi(h, s, a)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDimension {
    pub lower: f64,
    pub upper: f64,
    /// The closed-form upper expression fell below `lower` and was replaced.
    pub formula_below_lower: bool,
}

/// `log det(I + (n/λ) E_π φφᵀ)` maximized over `policies`, against
/// `d log(n/(dλ))`.
pub fn effective_dimension(mdp: &LowRankMdp, policies: &[Policy], n: u64, lambda: f64, h: usize) -> Result<EffectiveDimension> {
    if policies.is_empty() {
        return Err(Error::Config("effective dimension needs at least one policy".into()));
    }
    check_level(mdp, h)?;
    let d = mdp.dim();
    let mut lower: f64 = 0.0;
    for pi in policies {
        let occ = occupancy(mdp, pi)?;
        let mut m = DMatrix::identity(d, d);
        for (i, phi) in mdp.features(h).iter().enumerate() {
            linalg::add_outer(&mut m, phi, n as f64 / lambda * occ[h][i]);
        }
        lower = lower.max(linalg::logdet(&m)?);
    }
    let formula = d as f64 * (n as f64 / (d as f64 * lambda)).ln();
    let flagged = !(formula >= lower);
    Ok(EffectiveDimension {
        lower,
        upper: if flagged { lower } else { formula },
        formula_below_lower: flagged,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfoGainReport {
    /// `log det(Σ + αC) / det Σ`.
    pub gain: f64,
    /// `α tr(Σ⁻¹C)`.
    pub upper: f64,
    /// `log(1 + α tr(Σ⁻¹C))`.
    pub lower: f64,
    /// `(α/L) tr(Σ⁻¹C)`, present when `α tr(Σ⁻¹C) ≤ L`.
    pub chain: Option<f64>,
}

/// Checks `lower ≤ gain ≤ upper` and, when applicable, `gain ≥ chain`,
/// each with absolute slack `slack`. A violation returns a dump.
pub fn info_gain_check(sigma: &DMatrix<f64>, cov: &DMatrix<f64>, alpha: f64, l: f64, slack: f64) -> Result<InfoGainReport> {
    if sigma.shape() != cov.shape() || !sigma.is_square() {
        return Err(Error::Dimension {
            expected: sigma.nrows(),
            got: cov.nrows(),
        });
    }
    let inv = linalg::invert_spd(sigma)?;
    let tr = (&inv * cov).trace();
    let gain = linalg::logdet(&(sigma + cov * alpha))? - linalg::logdet(sigma)?;
    let upper = alpha * tr;
    let lower = upper.ln_1p();
    let chain = (l >= std::f64::consts::E - 1.0 && upper <= l).then(|| upper / l);
    let report = InfoGainReport { gain, upper, lower, chain };
    let bad = gain > upper + slack || gain < lower - slack || chain.is_some_and(|c| gain < c - slack);
    if bad {
        return Err(Error::Contract(format!(
            "information gain bounds violated: {report:?}\nsigma = {sigma}\ncov = {cov}\nalpha = {alpha}, L = {l}"
        )));
    }
    Ok(report)
}

/// Outcome of a randomized sweep of a deterministic inequality.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub instances: usize,
    pub violations: usize,
    /// Largest amount by which an inequality was exceeded (0 when none).
    pub worst: f64,
    pub first_counterexample: Option<String>,
}

impl SweepReport {
    fn record(&mut self, excess: f64, slack: f64, dump: impl FnOnce() -> String) {
        self.instances += 1;
        if excess > slack {
            self.violations += 1;
            if self.first_counterexample.is_none() {
                self.first_counterexample = Some(dump());
            }
        }
        self.worst = self.worst.max(excess.max(0.0));
    }
}

fn random_matrix(d: usize, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0f64..1.0))
}

/// Random SPD matrix with condition number at most about `10^spread`.
pub fn random_spd(d: usize, spread: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let q = random_matrix(d, d, rng).qr().q();
    let evals = DVector::from_fn(d, |_, _| 10f64.powf(rng.random_range(-spread..spread)));
    &q * DMatrix::from_diagonal(&evals) * q.transpose()
}

/// Random PSD matrix of rank at most `rank`.
pub fn random_psd(d: usize, rank: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let b = random_matrix(d, rank, rng);
    &b * b.transpose() / rank.max(1) as f64
}

/// Random instances of the information-gain bounds with `d ≤ max_dim`.
pub fn info_gain_sweep(count: usize, max_dim: usize, slack: f64, rng: &mut impl Rng) -> SweepReport {
    let mut rep = SweepReport::default();
    for _ in 0..count {
        let d = rng.random_range(1..=max_dim);
        let sigma = random_spd(d, 1.5, rng);
        let cov = random_psd(d, rng.random_range(1..=d), rng);
        let alpha = 10f64.powf(rng.random_range(-2.0f64..2.0));
        let l = (std::f64::consts::E - 1.0) * 10f64.powf(rng.random_range(0.0..2.0));
        let excess = match info_gain_check(&sigma, &cov, alpha, l, 0.0) {
            Ok(_) => 0.0,
            Err(_) => {
                let inv = linalg::invert_spd(&sigma).unwrap_or_else(|_| DMatrix::zeros(d, d));
                let u = alpha * (&inv * &cov).trace();
                let g = linalg::logdet(&(&sigma + &cov * alpha)).unwrap_or(f64::NAN) - linalg::logdet(&sigma).unwrap_or(f64::NAN);
                let chain = if u <= l { u / l } else { f64::NEG_INFINITY };
                (g - u).max(u.ln_1p() - g).max(chain - g)
            }
        };
        rep.record(excess, slack, || format!("sigma = {sigma}\ncov = {cov}\nalpha = {alpha}, L = {l}"));
    }
    rep
}

/// A finite joint law of `(X, Y)`.
#[derive(Clone, Debug)]
pub struct DiscreteLaw {
    pub xs: Vec<DVector<f64>>,
    pub ys: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscreteLaw {
    pub fn random(d: usize, support: usize, rng: &mut impl Rng) -> Self {
        let raw: Vec<f64> = (0..support).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        Self {
            xs: (0..support).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0f64..1.0))).collect(),
            ys: (0..support).map(|_| rng.random_range(-1.0f64..1.0)).collect(),
            probs: raw.into_iter().map(|p| p / total).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn second_moment(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut g = DMatrix::zeros(d, d);
        for (x, p) in self.xs.iter().zip(&self.probs) {
            linalg::add_outer(&mut g, x, *p);
        }
        g
    }

    pub fn cross_moment(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.dim());
        for ((x, y), p) in self.xs.iter().zip(&self.ys).zip(&self.probs) {
            b.axpy(p * y, x, 1.0);
        }
        b
    }

    /// `E(⟨X, θ⟩ − Y)²`.
    pub fn loss(&self, theta: &DVector<f64>) -> f64 {
        self.xs.iter().zip(&self.ys).zip(&self.probs).map(|((x, y), p)| p * (x.dot(theta) - y).powi(2)).sum()
    }

    /// Minimizer of the loss over `‖θ‖ ≤ radius`, `None` radius meaning unconstrained.
    pub fn minimizer(&self, radius: Option<f64>) -> Result<DVector<f64>> {
        // The tie ridge is only needed when the second moment is singular.
        let mut g = self.second_moment();
        let inv = match linalg::invert_spd(&g) {
            Ok(inv) if inv.iter().all(|x| x.is_finite()) => inv,
            _ => {
                g += DMatrix::identity(self.dim(), self.dim()) * TIE_RIDGE;
                linalg::invert_spd(&g)?
            }
        };
        let free = inv * self.cross_moment();
        match radius {
            None => Ok(free),
            Some(r) => Ok(linalg::project_ball(&(free / r), &g)? * r),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

fn random_in_ball(d: usize, radius: f64, rng: &mut impl Rng) -> DVector<f64> {
    let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0f64..1.0));
    let n = v.norm().max(1e-300);
    v * (radius * rng.random::<f64>() / n)
}

/// `L(θ) − L(θ*) = ‖θ − θ*‖²_{E XXᵀ}` on random full-rank laws, relative slack.
pub fn excess_loss_sweep(count: usize, max_dim: usize, slack: f64, rng: &mut impl Rng) -> SweepReport {
    let mut rep = SweepReport::default();
    for _ in 0..count {
        let d = rng.random_range(1..=max_dim);
        let law = DiscreteLaw::random(d, d + rng.random_range(1..=d + 2), rng);
        let g = law.second_moment();
        let Ok(inv) = linalg::invert_spd(&g) else { continue };
        let star = inv * law.cross_moment();
        let theta = DVector::from_fn(d, |_, _| rng.random_range(-2.0f64..2.0));
        let lhs = law.loss(&theta) - law.loss(&star);
        let rhs = linalg::quad(&g, &(&theta - &star));
        let scale = 1.0 + law.loss(&theta).abs();
        rep.record((lhs - rhs).abs() / scale, slack, || format!("law = {law:?}\ntheta = {theta}"));
    }
    rep
}

/// `‖w − w*‖²_{M E XXᵀ + λI} ≤ 2M(L(w) − L(w*)) + λ‖w − w*‖²` with
/// `L = ½ E(⟨X,w⟩ − Y)²` and `w*` the minimizer over a ball.
pub fn excess_risk_sweep(count: usize, max_dim: usize, slack: f64, rng: &mut impl Rng) -> SweepReport {
    let mut rep = SweepReport::default();
    for _ in 0..count {
        let d = rng.random_range(1..=max_dim);
        let law = DiscreteLaw::random(d, rng.random_range(d..=2 * d + 1), rng);
        let b = 10f64.powf(rng.random_range(-1.0..0.5));
        let Ok(star) = law.minimizer(Some(b)) else { continue };
        // The projection lands on the sphere only to bisection tolerance;
        // the computed point is exactly optimal for its own radius.
        let radius = if star.norm() >= b * (1.0 - 1e-6) { star.norm() } else { b };
        let w = random_in_ball(d, radius, rng);
        let m = 10f64.powf(rng.random_range(-1.0..3.0));
        let lambda = 10f64.powf(rng.random_range(-2.0f64..2.0));
        let g = law.second_moment();
        let diff = &w - &star;
        let lhs = linalg::quad(&(&g * m + DMatrix::identity(d, d) * lambda), &diff);
        let rhs = 2.0 * m * 0.5 * (law.loss(&w) - law.loss(&star)) + lambda * diff.norm_squared();
        let scale = 1.0 + lhs.abs();
        rep.record((lhs - rhs) / scale, slack, || format!("law = {law:?}\nB = {b}, M = {m}, lambda = {lambda}\nw = {w}"));
    }
    rep
}

/// Failure count of a Monte-Carlo trial with a one-sided binomial bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trials: usize,
    pub failures: usize,
    pub rate: f64,
    /// Clopper–Pearson upper bound on the failure probability at 95%.
    pub upper_95: f64,
}

impl TrialOutcome {
    pub fn new(trials: usize, failures: usize) -> Self {
        Self {
            trials,
            failures,
            rate: if trials == 0 { 0.0 } else { failures as f64 / trials as f64 },
            upper_95: clopper_pearson_upper(failures, trials, 0.95),
        }
    }

    /// The failure probability is at most `delta` with 95% confidence.
    pub fn within(&self, delta: f64) -> bool {
        self.upper_95 <= delta
    }
}

/// One-sided exact binomial upper confidence bound.
pub fn clopper_pearson_upper(failures: usize, trials: usize, level: f64) -> f64 {
    if trials == 0 || failures >= trials {
        return 1.0;
    }
    Beta::new(failures as f64 + 1.0, (trials - failures) as f64)
        .map(|b| b.inverse_cdf(level))
        .unwrap_or(1.0)
}

/// A finite law of feature vectors with `‖x‖ ≤ 1`.
#[derive(Clone, Debug)]
pub struct FeatureLaw {
    pub xs: Vec<DVector<f64>>,
    pub probs: Vec<f64>,
}

impl FeatureLaw {
    pub fn random(d: usize, support: usize, rng: &mut impl Rng) -> Self {
        let law = DiscreteLaw::random(d, support, rng);
        Self {
            xs: law.xs.into_iter().map(|x| x.clone() / x.norm().max(1.0)).collect(),
            probs: law.probs,
        }
    }

    pub fn dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn second_moment(&self) -> DMatrix<f64> {
        DiscreteLaw {
            xs: self.xs.clone(),
            ys: vec![0.0; self.xs.len()],
            probs: self.probs.clone(),
        }
        .second_moment()
    }

    fn sample<'a>(&'a self, rng: &mut impl Rng) -> &'a DVector<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (x, p) in self.xs.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return x;
            }
        }
        self.xs.last().unwrap()
    }

    fn max_sq_norm(&self) -> f64 {
        self.xs.iter().map(|x| x.norm_squared()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub enum ConcentrationKind {
    /// `½(W + λI) ⪯ EW + λI ⪯ (3/2)(W + λI)` for `W = Σ_k x_k x_kᵀ`.
    /// `lambda = None` uses the smallest admissible value.
    MatrixChernoff { law: FeatureLaw, episodes: usize, delta: f64, lambda: Option<f64> },
    /// Draw `Z ∈ [0,1]` until the trigger fires, then test `½Ŝ ≤ EZ ≤ (3/2)Ŝ`.
    Proportional { values: Vec<f64>, probs: Vec<f64>, delta: f64, max_n: usize },
    /// Log-determinant sandwich for every `n ≤ max_n` with `G₁ = λI`.
    LogDet { law: FeatureLaw, max_n: usize, delta: f64, lambda: f64 },
}

/// `2 L_Z log(2d/δ) / log(36/35)`.
pub fn chernoff_lambda(d: usize, delta: f64, l_z: f64) -> f64 {
    2.0 * l_z * (2.0 * d as f64 / delta).ln() / (36.0f64 / 35.0).ln()
}

/// Extreme eigenvalues of `A^{-1/2} B A^{-1/2}`.
pub fn generalized_eig_range(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, f64)> {
    let chol = a.clone().cholesky().ok_or_else(|| Error::Degenerate("reference matrix not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular Cholesky factor".into()))?;
    let mut m = &l_inv * b * l_inv.transpose();
    linalg::symmetrize(&mut m);
    let ev = SymmetricEigen::new(m).eigenvalues;
    Ok((ev.min(), ev.max()))
}

pub fn concentration_trial(kind: &ConcentrationKind, trials: usize, rng: &mut impl Rng) -> Result<TrialOutcome> {
    let mut failures = 0;
    match kind {
        ConcentrationKind::MatrixChernoff { law, episodes, delta, lambda } => {
            let d = law.dim();
            let lambda = lambda.unwrap_or_else(|| chernoff_lambda(d, *delta, law.max_sq_norm()));
            let reg = DMatrix::identity(d, d) * lambda;
            let pop = law.second_moment() * *episodes as f64 + &reg;
            for _ in 0..trials {
                let mut w = reg.clone();
                for _ in 0..*episodes {
                    linalg::add_outer(&mut w, law.sample(rng), 1.0);
                }
                let (lo, hi) = generalized_eig_range(&w, &pop)?;
                if lo < 0.5 || hi > 1.5 {
                    failures += 1;
                }
            }
        }
        ConcentrationKind::Proportional { values, probs, delta, max_n } => {
            if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config("proportional trial values must lie in [0, 1]".into()));
            }
            let law = FeatureLaw {
                xs: values.iter().map(|&v| DVector::from_element(1, v)).collect(),
                probs: probs.clone(),
            };
            let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
            for _ in 0..trials {
                let mut sum = 0.0;
                for n in 1..=*max_n {
                    sum += law.sample(rng)[0];
                    if sum >= trig_threshold(*delta, n as u64, 1) {
                        let avg = sum / n as f64;
                        if mean < 0.5 * avg || mean > 1.5 * avg {
                            failures += 1;
                        }
                        break;
                    }
                }
            }
        }
        ConcentrationKind::LogDet { law, max_n, delta, lambda } => {
            let d = law.dim();
            let g1 = DMatrix::identity(d, d) * *lambda;
            let base = linalg::logdet(&g1)?;
            let e = law.second_moment();
            let pop: Vec<f64> = (1..=*max_n)
                .map(|n| Ok(linalg::logdet(&(&g1 + &e * n as f64))? - base))
                .collect::<Result<_>>()?;
            let c_lo = 8.0 * 2f64.sqrt() + 4.0;
            for _ in 0..trials {
                let mut g = g1.clone();
                for n in 1..=*max_n {
                    linalg::add_outer(&mut g, law.sample(rng), 1.0);
                    let emp = linalg::logdet(&g)? - base;
                    let log_term = (8.0 * (n * n) as f64 / delta).ln();
                    let p = pop[n - 1];
                    if emp < 0.25 * p - c_lo * log_term || emp > 8.0 * p + 8.0 * log_term {
                        failures += 1;
                        break;
                    }
                }
            }
        }
    }
    Ok(TrialOutcome::new(trials, failures))
}

/// Per-trial ratios `‖θ̂ − θ*‖_{nE xxᵀ + λI} / (√(d log(dn/δ)) + √λ)` for the
/// ridge-then-project estimator on `n` draws from `law`, with targets
/// `y ± noise` uniformly.
pub fn ls_convergence_ratios(
    law: &DiscreteLaw,
    noise: f64,
    n: usize,
    delta: f64,
    lambda: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let d = law.dim();
    let star = law.minimizer(Some(1.0))?;
    let metric = law.second_moment() * n as f64 + DMatrix::identity(d, d) * lambda;
    let scale = (d as f64 * (d as f64 * n.max(1) as f64 / delta).ln().max(0.0)).sqrt() + lambda.sqrt();
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let samples: Vec<Sample> = (0..n)
            .map(|_| {
                let i = law.sample(rng);
                let eps = if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
                Sample::new(law.xs[i].clone(), law.ys[i] + eps)
            })
            .collect();
        let est = batch_ridge_constrained(&samples, d, lambda)?;
        out.push(linalg::quad(&metric, &(est - &star)).max(0.0).sqrt() / scale);
    }
    Ok(out)
}

/// Empirical `q`-quantile (nearest rank).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

pub fn ls_population_convergence_trial(
    law: &DiscreteLaw,
    noise: f64,
    n: usize,
    delta: f64,
    lambda: f64,
    c: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<TrialOutcome> {
    let ratios = ls_convergence_ratios(law, noise, n, delta, lambda, trials, rng)?;
    Ok(TrialOutcome::new(trials, ratios.iter().filter(|&&r| r > c).count()))
}

/// Result of comparing `err_h + E^π_h` against the uncertainty function.
#[derive(Clone, Debug)]
pub struct BracketReport {
    /// `err_h + E^π_h` per level, flattened `s*A + a`.
    pub residual: Vec<Vec<f64>>,
    /// Smallest constant `c` for which every pointwise bracket holds.
    pub min_constant: f64,
}

impl BracketReport {
    pub fn holds(&self, c: f64) -> bool {
        self.min_constant <= c
    }
}

/// Pointwise bracket of the returned Q-function under controller `pi`.
///
/// Without a bonus the test is `|err + E| ≤ ū`; with one it is
/// `min{0, b − ū} ≤ err + E ≤ ū + b`. `qbest` must be the networks
/// returned by the run, which are also the targets of their final epoch.
pub fn error_bracket(
    mdp: &LowRankMdp,
    pi: &Policy,
    qbest: &TargetNetworks,
    bonus: Option<&Bonus>,
    unc: &UncertaintySpec,
) -> Result<BracketReport> {
    let occ = occupancy(mdp, pi)?;
    let mut residual = Vec::with_capacity(mdp.horizon());
    let mut need: f64 = 0.0;
    for h in 0..mdp.horizon() {
        let qnext = tabulate(mdp, qbest, h + 1)?;
        let qh = tabulate(mdp, qbest, h)?;
        let target = bellman_backup(mdp, h, &qnext);
        let bp = weighted_ball_fit(mdp, h, &occ[h], &target)?;
        let fit = fitted(mdp, h, &bp.theta);
        let mut row = Vec::with_capacity(qh.len());
        for (i, phi) in mdp.features(h).iter().enumerate() {
            // err + E = Q̂_h − T Q̂_{h+1} + T Q̂_{h+1} − ⟨φ, θ_best⟩
            let x = (qh[i] - target[i]) + (target[i] - fit[i]);
            let b = match bonus {
                Some(bn) => bn.eval(h, phi)?,
                None => 0.0,
            };
            let excess = match bonus {
                None => x.abs(),
                Some(_) if x > b => x - b,
                Some(_) if x < 0.0 => b - x,
                Some(_) => 0.0,
            };
            if excess > 1e-12 {
                let u = unc.eval_unit(h, phi);
                need = need.max(if u > 0.0 { excess / u } else { f64::INFINITY });
            }
            row.push(x);
        }
        residual.push(row);
    }
    Ok(BracketReport {
        residual,
        min_constant: need,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueSandwich {
    pub lower: f64,
    /// `E_ρ(V̂₁ − V*₁)` with `V̂₁ = max_a Q̂₁`.
    pub gap: f64,
    pub upper: f64,
}

impl ValueSandwich {
    pub fn holds(&self, slack: f64) -> bool {
        self.lower - slack <= self.gap && self.gap <= self.upper + slack
    }
}

/// `−E_{π*}Σ_h ū_h − terr ≤ E_ρ(V̂₁ − V*₁) ≤ E_{π̄}Σ_h ū_h + terr`, where
/// `π̄` is greedy with respect to `qbest`.
pub fn value_sandwich(mdp: &LowRankMdp, qbest: &TargetNetworks, unc: &UncertaintySpec, terr: f64) -> Result<ValueSandwich> {
    let (qstar, vstar) = value_iteration(mdp);
    let pi_star = Policy::Tabular(crate::envs::greedy_actions(mdp, &qstar));
    let pi_bar = Policy::Tabular(greedy_table(qbest, mdp)?);
    let along = |pi: &Policy| -> Result<f64> {
        let occ = occupancy(mdp, pi)?;
        Ok((0..mdp.horizon()).map(|h| dot(&occ[h], &unc.table(mdp, h))).sum())
    };
    let q1 = tabulate(mdp, qbest, 0)?;
    let a_n = mdp.actions();
    let vhat: f64 = mdp
        .start()
        .iter()
        .enumerate()
        .map(|(s, p)| p * q1[s * a_n..(s + 1) * a_n].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    Ok(ValueSandwich {
        lower: -along(&pi_star)? - terr,
        gap: vhat - vstar.start_value(mdp),
        upper: along(&pi_bar)? + terr,
    })
}

/// `V^π` tables of a policy's first component, for reporting.
pub fn component_values(mdp: &LowRankMdp, pi: &Policy) -> Result<Vec<(f64, ValueTable)>> {
    Ok(pi
        .resolve(mdp)?
        .iter()
        .map(|(w, c): &(f64, Component)| (*w, evaluate_component(mdp, c).1))
        .collect())
}
