//! Monte-Carlo harness: seed-parallel runs measured against the oracle.

mod audit;
mod plot;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::{step, LearnerOptions, LearnerState};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::oracle::{
    bias_from, fa_error_from, fixed_points_from_eval, gradient_from_eval, projected_bellman_residual,
    target_fixed_point, PolicyEval,
};
use crate::schedules::PowerSchedule;

pub use audit::{assumption_audit, AuditItem, AuditReport, AUDIT_THETA_SAMPLES};
pub use plot::loglog_svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CriticEval,
    FullActorCritic,
    RateSweep,
    AssumptionAudit,
}

fn one() -> u64 {
    1
}

fn default_epsilon() -> f64 {
    0.01
}

/// Everything that determines an experiment's output, the instance aside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub schedule: PowerSchedule,
    #[serde(default)]
    pub options: LearnerOptions,
    pub horizon: u64,
    /// Replicate `i` uses seed `seed + i`.
    pub seed: u64,
    pub n_seeds: usize,
    /// Steps between recorded metric rows.
    pub stride: u64,
    /// Steps between fresh `ω̄*(θ_t)` solves for the per-step tracking error.
    #[serde(default = "one")]
    pub oracle_stride: u64,
    /// Horizons at which running averages are read off.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    /// Start from `ω_0 = ω̄_0 = ω̄*(θ_0)`.
    #[serde(default)]
    pub warm_start: bool,
    /// Threshold of the stationarity crossing test.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, schedule: PowerSchedule, horizon: u64, n_seeds: usize) -> Self {
        ExperimentConfig {
            kind,
            schedule,
            options: LearnerOptions::default(),
            horizon,
            seed: 0,
            n_seeds,
            stride: (horizon / 100).max(1),
            oracle_stride: 1,
            checkpoints: Vec::new(),
            warm_start: false,
            epsilon: default_epsilon(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be ≥ 1".into()));
        }
        if self.stride == 0 || self.oracle_stride == 0 {
            return Err(Error::Config("stride and oracle_stride must be ≥ 1".into()));
        }
        if let Some(c) = self.checkpoints.iter().find(|c| **c == 0 || **c > self.horizon) {
            return Err(Error::Config(format!("checkpoint {c} outside 1..={}", self.horizon)));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("checkpoints must be strictly increasing".into()));
        }
        self.options.validate()?;
        self.schedule.validate(false)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.seed + i).collect()
    }
}

/// Exact metrics at one recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRow {
    pub t: u64,
    /// `‖ω_t − ω̄*(θ_t)‖²`.
    pub critic_sq: f64,
    /// `‖ω̄_t − ω̄*(θ_t)‖²`.
    pub target_sq: f64,
    pub grad_sq: f64,
    pub objective: f64,
    /// `‖Π_θ T_θ(Φω_t) − Φω_t‖`.
    pub pb_residual: f64,
    pub eps_fa: f64,
    /// `‖b(θ_t)‖`.
    pub bias_norm: f64,
}

impl MetricRow {
    pub const HEADER: [&'static str; 8] = [
        "t",
        "critic_sq_err",
        "target_sq_err",
        "grad_sq_norm",
        "objective",
        "pb_residual",
        "eps_fa",
        "bias_norm",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.critic_sq,
            self.target_sq,
            self.grad_sq,
            self.objective,
            self.pb_residual,
            self.eps_fa,
            self.bias_norm,
        ]
    }

    /// Fresh oracle evaluation at the state's θ.
    pub fn at(instance: &Instance, state: &LearnerState) -> Result<Self> {
        let mdp = &instance.mdp;
        let policy = instance.policy.policy(&state.theta)?;
        let pe = PolicyEval::new(mdp, &policy)?;
        let fp = fixed_points_from_eval(mdp, &pe, &instance.critic)?;
        let w = &fp.bar_omega_star;
        let grad = gradient_from_eval(mdp, &policy, &pe);
        let bias = bias_from(mdp, &policy, &pe, &instance.critic, w);
        Ok(MetricRow {
            t: state.t,
            critic_sq: (&state.omega - w).norm_squared(),
            target_sq: (&state.omega_bar - w).norm_squared(),
            grad_sq: grad.norm_squared(),
            objective: pe.objective(mdp),
            pb_residual: projected_bellman_residual(mdp, &pe, &instance.critic, &state.omega)?,
            eps_fa: fa_error_from(&pe, &instance.critic, w),
            bias_norm: bias.b.norm(),
        })
    }
}

/// One replicate's measurements.
#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    /// `(1/T) Σ_{t<T} ‖ω_t − ω̄*(θ_t)‖²` at each checkpoint `T`.
    pub avg_critic_sq: Vec<f64>,
    /// Same for the target variable.
    pub avg_target_sq: Vec<f64>,
    pub rows: Vec<MetricRow>,
    pub failure: Option<String>,
}

/// Runs one replicate, recording rows at `t = 0`, every `stride`, and `T`.
pub fn run_seed(instance: &Instance, cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let mut state = LearnerState::initial(instance, seed);
    if cfg.warm_start {
        let pol = instance.policy.policy(&state.theta)?;
        let w = target_fixed_point(&instance.mdp, &pol, &instance.critic)?;
        state = state.with_omega(w);
    }
    let frozen = cfg.schedule.actor_frozen();
    let mut out = SeedRun {
        seed,
        avg_critic_sq: Vec::with_capacity(cfg.checkpoints.len()),
        avg_target_sq: Vec::with_capacity(cfg.checkpoints.len()),
        rows: Vec::new(),
        failure: None,
    };
    let mut target: Option<DVector<f64>> = None;
    let (mut sum, mut sum_bar) = (0.0, 0.0);
    let mut next_cp = cfg.checkpoints.iter().peekable();
    let track = !cfg.checkpoints.is_empty();

    for t in 0..cfg.horizon {
        if track {
            let stale = target.is_none() || (!frozen && t % cfg.oracle_stride == 0);
            if stale {
                let pol = instance.policy.policy(&state.theta)?;
                target = Some(target_fixed_point(&instance.mdp, &pol, &instance.critic)?);
            }
            let w = target.as_ref().expect("refreshed above");
            sum += sq_dist(&state.omega, w);
            sum_bar += sq_dist(&state.omega_bar, w);
            if next_cp.peek() == Some(&&(t + 1)) {
                next_cp.next();
                out.avg_critic_sq.push(sum / (t + 1) as f64);
                out.avg_target_sq.push(sum_bar / (t + 1) as f64);
            }
        }
        if t % cfg.stride == 0 {
            out.rows.push(MetricRow::at(instance, &state)?);
        }
        if let Err(e) = step(instance, &cfg.schedule, &cfg.options, &mut state) {
            out.failure = Some(e.to_string());
            return Ok(out);
        }
    }
    out.rows.push(MetricRow::at(instance, &state)?);
    Ok(out)
}

fn sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Runs every replicate on a pool of `jobs` threads (0 = available
/// parallelism). Results come back sorted by seed.
pub fn run_seeds(instance: &Instance, cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Experiment(e.to_string()))?;
    let seeds = cfg.seeds();
    let mut runs = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_seed(instance, cfg, s))
            .collect::<Result<Vec<_>>>()
    })?;
    runs.sort_by_key(|r| r.seed);
    Ok(runs)
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Seed-mean curves of a critic-tracking experiment.
#[derive(Debug, Clone, Serialize)]
pub struct TrackingSummary {
    pub checkpoints: Vec<u64>,
    pub mean_avg_critic_sq: Vec<f64>,
    pub se_avg_critic_sq: Vec<f64>,
    pub mean_avg_target_sq: Vec<f64>,
    pub se_avg_target_sq: Vec<f64>,
    /// Recorded steps and seed-means of `‖ω_t − ω̄*(θ_t)‖`, `‖ω̄_t − ω̄*(θ_t)‖`.
    pub t: Vec<u64>,
    pub mean_critic_err: Vec<f64>,
    pub mean_target_err: Vec<f64>,
    pub n_seeds: usize,
    pub failed_seeds: usize,
}

impl TrackingSummary {
    pub fn terminal_critic_err(&self) -> f64 {
        self.mean_critic_err.last().copied().unwrap_or(f64::NAN)
    }
}

/// Seed-means over the completed replicates, reduced in seed order.
pub fn summarize_tracking(cfg: &ExperimentConfig, runs: &[SeedRun]) -> TrackingSummary {
    let mut ok: Vec<&SeedRun> = runs.iter().filter(|r| r.failure.is_none()).collect();
    ok.sort_by_key(|r| r.seed);
    let col = |f: &dyn Fn(&SeedRun) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
    let mut mc = Vec::new();
    let mut sc = Vec::new();
    let mut mt = Vec::new();
    let mut st = Vec::new();
    for k in 0..cfg.checkpoints.len() {
        let (m, s) = mean_se(&col(&|r| r.avg_critic_sq[k]));
        mc.push(m);
        sc.push(s);
        let (m, s) = mean_se(&col(&|r| r.avg_target_sq[k]));
        mt.push(m);
        st.push(s);
    }
    let n_rows = ok.first().map_or(0, |r| r.rows.len());
    let t = ok.first().map_or(Vec::new(), |r| r.rows.iter().map(|x| x.t).collect());
    let mean_critic_err = (0..n_rows)
        .map(|i| mean_se(&col(&|r| r.rows[i].critic_sq.sqrt())).0)
        .collect();
    let mean_target_err = (0..n_rows)
        .map(|i| mean_se(&col(&|r| r.rows[i].target_sq.sqrt())).0)
        .collect();
    TrackingSummary {
        checkpoints: cfg.checkpoints.clone(),
        mean_avg_critic_sq: mc,
        se_avg_critic_sq: sc,
        mean_avg_target_sq: mt,
        se_avg_target_sq: st,
        t,
        mean_critic_err,
        mean_target_err,
        n_seeds: runs.len(),
        failed_seeds: runs.len() - ok.len(),
    }
}

/// Critic and target tracking errors against `ω̄*(θ_t)`.
pub fn critic_tracking_experiment(
    instance: &Instance,
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<TrackingSummary> {
    let runs = run_seeds(instance, cfg, jobs)?;
    Ok(summarize_tracking(cfg, &runs))
}

/// Least-squares line through `(ln T, ln y)`.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub horizons: Vec<u64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    /// Exponents of the four bound terms for the configured schedule.
    pub term_exponents: [f64; 4],
    pub dominant_exponent: f64,
}

/// `(slope, slope standard error, intercept)` of `ln y` on `ln x`.
pub fn fit_log_log(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Experiment("a rate fit needs at least 3 points".into()));
    }
    if x.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Experiment("horizons must be strictly increasing".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Experiment("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_se = (ssr / (n - 2.0) / sxx).sqrt();
    Ok((slope, slope_se, intercept))
}

/// Sweeps the averaged critic error over `cfg.checkpoints` and fits its
/// log-log slope. Refuses when any point's standard error exceeds half its value.
pub fn rate_sweep(instance: &Instance, cfg: &ExperimentConfig, jobs: usize) -> Result<(RateFit, TrackingSummary)> {
    if cfg.checkpoints.len() < 3 {
        return Err(Error::Experiment("rate sweep needs at least 3 horizons".into()));
    }
    let first = cfg.checkpoints[0] as f64;
    let last = *cfg.checkpoints.last().expect("non-empty") as f64;
    if last / first < 100.0 {
        return Err(Error::Experiment("rate sweep horizons must span at least two decades".into()));
    }
    let summary = critic_tracking_experiment(instance, cfg, jobs)?;
    let fit = fit_tracking(cfg, &summary)?;
    Ok((fit, summary))
}

pub fn fit_tracking(cfg: &ExperimentConfig, summary: &TrackingSummary) -> Result<RateFit> {
    if summary.failed_seeds == summary.n_seeds {
        return Err(Error::Experiment("every replicate diverged".into()));
    }
    for (k, (m, s)) in summary
        .mean_avg_critic_sq
        .iter()
        .zip(&summary.se_avg_critic_sq)
        .enumerate()
    {
        if *s > 0.5 * m {
            return Err(Error::Experiment(format!(
                "horizon {} is noise-dominated (value {m:e}, standard error {s:e})",
                summary.checkpoints[k]
            )));
        }
    }
    let x: Vec<f64> = summary.checkpoints.iter().map(|t| *t as f64).collect();
    let (slope, slope_se, intercept) = fit_log_log(&x, &summary.mean_avg_critic_sq)?;
    Ok(RateFit {
        horizons: summary.checkpoints.clone(),
        values: summary.mean_avg_critic_sq.clone(),
        std_errors: summary.se_avg_critic_sq.clone(),
        slope,
        slope_se,
        intercept,
        term_exponents: cfg.schedule.critic_rate_exponents(),
        dominant_exponent: cfg.schedule.dominant_critic_exponent(),
    })
}

/// Seed-mean gradient and bias curves of a full actor-critic run.
#[derive(Debug, Clone, Serialize)]
pub struct ActorSummary {
    pub t: Vec<u64>,
    /// Seed-mean `‖∇J(θ_t)‖²`.
    pub mean_grad_sq: Vec<f64>,
    /// Running minimum of `mean_grad_sq`.
    pub running_min_grad_sq: Vec<f64>,
    /// Seed-mean `‖∇J(θ_t)‖ − ‖b(θ_t)‖`.
    pub mean_grad_minus_bias: Vec<f64>,
    /// Seed-mean `‖∇J(θ_t)‖² − ‖b(θ_t)‖²`.
    pub mean_grad_sq_minus_bias_sq: Vec<f64>,
    pub epsilon: f64,
    /// `min_t` of `mean_grad_sq_minus_bias_sq` is at most `epsilon`.
    pub crossed: bool,
    pub n_seeds: usize,
    pub failed_seeds: usize,
}

impl ActorSummary {
    pub fn min_grad_sq(&self) -> f64 {
        self.mean_grad_sq.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_grad_minus_bias(&self) -> f64 {
        self.mean_grad_minus_bias.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn summarize_actor(cfg: &ExperimentConfig, runs: &[SeedRun]) -> ActorSummary {
    let mut ok: Vec<&SeedRun> = runs.iter().filter(|r| r.failure.is_none()).collect();
    ok.sort_by_key(|r| r.seed);
    let n_rows = ok.first().map_or(0, |r| r.rows.len());
    let mean_of = |f: &dyn Fn(&MetricRow) -> f64| -> Vec<f64> {
        (0..n_rows)
            .map(|i| mean_se(&ok.iter().map(|r| f(&r.rows[i])).collect::<Vec<_>>()).0)
            .collect()
    };
    let mean_grad_sq = mean_of(&|m| m.grad_sq);
    let mean_grad_minus_bias = mean_of(&|m| m.grad_sq.sqrt() - m.bias_norm);
    let mean_grad_sq_minus_bias_sq = mean_of(&|m| m.grad_sq - m.bias_norm * m.bias_norm);
    let mut running = f64::INFINITY;
    let running_min_grad_sq = mean_grad_sq
        .iter()
        .map(|v| {
            running = running.min(*v);
            running
        })
        .collect();
    let crossed = mean_grad_sq_minus_bias_sq.iter().any(|v| *v <= cfg.epsilon);
    ActorSummary {
        t: ok.first().map_or(Vec::new(), |r| r.rows.iter().map(|x| x.t).collect()),
        mean_grad_sq,
        running_min_grad_sq,
        mean_grad_minus_bias,
        mean_grad_sq_minus_bias_sq,
        epsilon: cfg.epsilon,
        crossed,
        n_seeds: runs.len(),
        failed_seeds: runs.len() - ok.len(),
    }
}

/// Exact `‖∇J(θ_t)‖²` and bias along full actor-critic runs.
pub fn actor_stationarity_experiment(
    instance: &Instance,
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<ActorSummary> {
    let runs = run_seeds(instance, cfg, jobs)?;
    Ok(summarize_actor(cfg, &runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values_have_flat_slope() {
        let (slope, se, _) = fit_log_log(&[1e2, 1e3, 1e4], &[0.3, 0.3, 0.3]).unwrap();
        assert!(slope.abs() <= se + 1e-12);
    }

    #[test]
    fn exact_power_law_recovered() {
        let x = [10.0, 100.0, 1000.0, 10000.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 2.0 * v.powf(-0.4)).collect();
        let (slope, se, icpt) = fit_log_log(&x, &y).unwrap();
        assert!((slope + 0.4).abs() < 1e-12);
        assert!(se < 1e-12);
        assert!((icpt - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn fit_rejects_short_input() {
        assert!(fit_log_log(&[1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn mean_se_basic() {
        let (m, s) = mean_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
