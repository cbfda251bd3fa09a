use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use tbac::experiments::{
    assumption_audit, fit_tracking, loglog_svg, run_seeds, summarize_actor, summarize_tracking,
    ExperimentConfig, ExperimentKind, AUDIT_THETA_SAMPLES,
};
use tbac::instance::{DEFAULT_BRANCHING, DEFAULT_DISCOUNT, DEFAULT_GARNET_SEED};
use tbac::io::{
    self, config_hash, hash_inputs, read_run_config, HashedFile, InstanceSpec, RunManifest,
};
use tbac::mdp::garnet;
use tbac::oracle::OracleReport;
use tbac::policy::PolicyFeatures;
use tbac::schedules::{mixing_time_at, MixingConstants, PowerSchedule, MIXING_WINDOW};
use tbac::{features::CriticFeatures, Error};

pub enum Outcome {
    Ok,
    Failed(String),
    Usage(String),
}

impl From<Error> for Outcome {
    fn from(e: Error) -> Self {
        Outcome::Failed(format!("error: {e}"))
    }
}

#[derive(Parser)]
#[command(name = "tbac", version, about = "Target-based actor-critic laboratory on finite MDPs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an MDP file (and optional feature files) against every invariant.
    Validate(ValidateArgs),
    /// Print the closed-form oracle report at one or more θ.
    Oracle(OracleArgs),
    /// Run the learner over seeds and write per-seed metric rows.
    Run(RunArgs),
    /// Sweep horizons and fit the log-log slope of the averaged critic error.
    Sweep(SweepArgs),
    /// Audit the modelling assumptions over a sample of θ.
    Audit(AuditArgs),
    /// Report step-size conditions and the mixing time for a schedule.
    Check(CheckArgs),
    /// Write a Garnet MDP with tabular feature files.
    Generate(GenerateArgs),
}

#[derive(Args, Clone, Default)]
struct InstanceArgs {
    /// MDP file (TOML).
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// Policy-feature file; tabular one-hot when absent.
    #[arg(long, visible_alias = "policy")]
    policy_features: Option<PathBuf>,
    /// Critic-feature file; tabular identity when absent.
    #[arg(long, visible_alias = "features")]
    critic_features: Option<PathBuf>,
    /// Built-in instance used when no --mdp is given.
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    DefaultTabular,
    DefaultDeficient,
}

impl Builtin {
    fn name(self) -> &'static str {
        match self {
            Builtin::DefaultTabular => "default-tabular",
            Builtin::DefaultDeficient => "default-deficient",
        }
    }
}

impl InstanceArgs {
    fn any(&self) -> bool {
        self.mdp.is_some() || self.policy_features.is_some() || self.critic_features.is_some() || self.builtin.is_some()
    }

    /// Applies the flags on top of `base`.
    fn overlay(&self, mut base: InstanceSpec) -> InstanceSpec {
        if let Some(m) = &self.mdp {
            base.mdp = Some(m.clone());
            base.builtin = None;
        } else if let Some(b) = self.builtin {
            base.builtin = Some(b.name().into());
            base.mdp = None;
        }
        if let Some(p) = &self.policy_features {
            base.policy_features = Some(p.clone());
        }
        if let Some(p) = &self.critic_features {
            base.critic_features = Some(p.clone());
        }
        if base.mdp.is_none() && base.builtin.is_none() {
            base.builtin = Some(Builtin::DefaultTabular.name().into());
        }
        base
    }
}

#[derive(Args)]
struct ValidateArgs {
    /// MDP file to check.
    mdp: PathBuf,
    #[arg(long, visible_alias = "policy")]
    policy_features: Option<PathBuf>,
    #[arg(long, visible_alias = "features")]
    critic_features: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// `zeros`, a comma-separated vector, or `@file` holding one; repeatable.
    #[arg(long, default_value = "zeros")]
    theta: Vec<String>,
    /// Exit 1 if any identity or lemma-level check fails.
    #[arg(long)]
    check: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write one file per θ here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long, required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest after verifying its inputs.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    instance: InstanceArgs,
    /// First seed; replicate i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replicates.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Steps between recorded rows.
    #[arg(long)]
    stride: Option<u64>,
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated horizons overriding the configured checkpoints.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<u64>>,
    /// Also write an SVG log-log plot.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct AuditArgs {
    /// Take instance and schedule from a run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    instance: InstanceArgs,
    /// Random θ draws in addition to θ = 0.
    #[arg(long, default_value_t = AUDIT_THETA_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct CheckArgs {
    /// Take the schedule (and instance) from a run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    instance: InstanceArgs,
    /// Six numbers `c1,c2,c3,a_exp,xi_exp,b_exp`.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    /// Require `0 < b_exp < xi_exp < a_exp < 1`.
    #[arg(long)]
    finite_time: bool,
    /// Horizon for the mixing time.
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 5)]
    states: usize,
    #[arg(long, default_value_t = 3)]
    actions: usize,
    #[arg(long, default_value_t = DEFAULT_BRANCHING)]
    branching: usize,
    #[arg(long, default_value_t = DEFAULT_DISCOUNT)]
    discount: f64,
    #[arg(long, default_value_t = DEFAULT_GARNET_SEED)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

pub fn dispatch(cli: Cli) -> Outcome {
    let res = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Oracle(a) => oracle(a),
        Command::Run(a) => run(a, None, false),
        Command::Sweep(a) => run(a.run, Some(a.horizons), a.plot),
        Command::Audit(a) => audit(a),
        Command::Check(a) => check(a),
        Command::Generate(a) => generate(a),
    };
    res.unwrap_or_else(Outcome::from)
}

type Res = Result<Outcome, Error>;

fn validate(a: ValidateArgs) -> Res {
    let mdp = io::read_mdp_unchecked(&a.mdp)?;
    let mut problems: Vec<String> = mdp.validate().iter().map(|v| v.to_string()).collect();
    if let Some(p) = &a.policy_features {
        match io::read_policy_features(p) {
            Ok(pf) if pf.n_states != mdp.n_states || pf.n_actions != mdp.n_actions => {
                problems.push(format!("policy features are {}x{}, MDP is {}x{}", pf.n_states, pf.n_actions, mdp.n_states, mdp.n_actions))
            }
            Ok(_) => {}
            Err(e) => problems.push(e.to_string()),
        }
    }
    if let Some(p) = &a.critic_features {
        match io::read_critic_features(p) {
            Ok(cf) => {
                if cf.n_states() != mdp.n_states {
                    problems.push(format!("critic features have {} rows, MDP has {} states", cf.n_states(), mdp.n_states));
                }
                let r = cf.check_rank();
                if !r.full_column_rank {
                    problems.push(format!("critic features: rank {} < {} columns", r.rank, cf.dim()));
                }
                if r.norm_bound_ok == Some(false) {
                    problems.push("critic features: some ||phi(s)|| exceeds 1".into());
                }
            }
            Err(e) => problems.push(e.to_string()),
        }
    }
    if problems.is_empty() {
        println!("ok: {}", a.mdp.display());
        Ok(Outcome::Ok)
    } else {
        for p in &problems {
            println!("violation: {p}");
        }
        Ok(Outcome::Failed(format!("{} violation(s)", problems.len())))
    }
}

fn parse_theta(spec: &str, dim: usize) -> Result<Vec<f64>, String> {
    if spec == "zeros" {
        return Ok(vec![0.0; dim]);
    }
    let text = match spec.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?,
        None => spec.to_string(),
    };
    let v: Vec<f64> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("bad theta entry `{s}`: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != dim {
        return Err(format!("theta has {} entries, policy features have dimension {dim}", v.len()));
    }
    Ok(v)
}

fn oracle(a: OracleArgs) -> Res {
    let loaded = a.instance.overlay(InstanceSpec::default()).load()?;
    let inst = loaded.instance;
    let mut thetas = Vec::new();
    for spec in &a.theta {
        match parse_theta(spec, inst.policy.dim) {
            Ok(t) => thetas.push(t),
            Err(msg) => return Ok(Outcome::Usage(msg)),
        }
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
    }
    let mut failures = Vec::new();
    for (k, theta) in thetas.iter().enumerate() {
        let report = OracleReport::compute(&inst, &nalgebra_vec(theta))?;
        let doc = match a.format {
            Format::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
            Format::Csv => oracle_csv(&report),
        };
        match &a.out {
            Some(dir) => {
                let ext = if a.format == Format::Json { "json" } else { "csv" };
                fs::write(dir.join(format!("oracle_{k}.{ext}")), doc)?;
            }
            None => print!("{doc}"),
        }
        for w in &report.warnings {
            eprintln!("warning (theta {k}): {w}");
        }
        for f in report.checks.failures() {
            failures.push(format!("theta {k}: {f}"));
        }
    }
    if a.check && !failures.is_empty() {
        return Ok(Outcome::Failed(format!("failed checks: {}", failures.join(", "))));
    }
    Ok(Outcome::Ok)
}

fn nalgebra_vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn oracle_csv(r: &OracleReport) -> String {
    let mut out = String::from("quantity,i,j,value\n");
    let mut vec = |name: &str, v: &[f64]| {
        for (i, x) in v.iter().enumerate() {
            out += &format!("{name},{i},,{}\n", io::fmt_f64(*x));
        }
    };
    vec("theta", &r.theta);
    vec("r_theta", &r.r_theta);
    vec("d_rho_theta", &r.d_rho_theta);
    vec("mu_rho_theta", &r.mu_rho_theta);
    vec("h", &r.h);
    vec("bar_omega_star", &r.bar_omega_star);
    vec("v_pi", &r.v_pi);
    vec("q_pi", &r.q_pi);
    vec("grad_j", &r.grad_j);
    vec("bias", &r.bias);
    vec("q_hat", &r.q_hat);
    let mut mat = |name: &str, m: &[Vec<f64>]| {
        for (i, row) in m.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                out += &format!("{name},{i},{j},{}\n", io::fmt_f64(*x));
            }
        }
    };
    mat("p_theta", &r.p_theta);
    mat("g", &r.g);
    mat("g_bar", &r.g_bar);
    mat("pi_theta", &r.pi_theta);
    let s = &r.spectral;
    for (name, x) in [
        ("objective", r.objective),
        ("eps_fa", r.eps_fa),
        ("projected_bellman_residual", r.projected_bellman_residual),
        ("fixed_point_gap", r.fixed_point_gap),
        ("eps_min", s.eps_min),
        ("kappa_min", s.kappa_min),
        ("kappa_lower_bound", s.kappa_lower_bound),
        ("zeta_min", s.zeta_min),
        ("hurwitz_margin", s.hurwitz_margin),
        ("posdef2_min_slack", s.posdef2_min_slack),
    ] {
        out += &format!("{name},,,{}\n", io::fmt_f64(x));
    }
    out
}

struct Resolved {
    spec: InstanceSpec,
    config: ExperimentConfig,
}

fn resolve_run(a: &RunArgs, horizons: Option<&Vec<u64>>) -> Result<Result<Resolved, Outcome>, Error> {
    let (spec, mut config) = match (&a.config, &a.manifest) {
        (Some(path), _) => {
            let f = read_run_config(path)?;
            (f.instance, f.experiment)
        }
        (None, Some(path)) => {
            let m = RunManifest::read(path)?;
            let bad = m.verify()?;
            if !bad.is_empty() {
                return Ok(Err(Outcome::Failed(format!("manifest verification failed: {}", bad.join("; ")))));
            }
            (m.instance, m.config)
        }
        (None, None) => return Ok(Err(Outcome::Usage("--config or --manifest is required".into()))),
    };
    let spec = if a.instance.any() { a.instance.overlay(spec) } else { spec };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(n) = a.seeds {
        config.n_seeds = n;
    }
    if let Some(h) = a.horizon {
        config.horizon = h;
    }
    if let Some(s) = a.stride {
        config.stride = s;
    }
    if let Some(h) = horizons {
        config.checkpoints = h.clone();
        if a.horizon.is_none() {
            config.horizon = h.last().copied().unwrap_or(config.horizon);
        }
    }
    if let Err(e) = config.validate() {
        return Ok(Err(Outcome::Usage(e.to_string())));
    }
    Ok(Ok(Resolved { spec, config }))
}

fn write_output(dir: &Path, name: &str, text: &str, outputs: &mut Vec<HashedFile>) -> Result<(), Error> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    outputs.push(HashedFile {
        role: name.into(),
        path,
        sha256: io::content_hash(text.as_bytes()),
    });
    Ok(())
}

fn run(a: RunArgs, sweep: Option<Option<Vec<u64>>>, plot: bool) -> Res {
    let started_at = io::unix_now();
    let r = match resolve_run(&a, sweep.as_ref().and_then(|h| h.as_ref()))? {
        Ok(r) => r,
        Err(o) => return Ok(o),
    };
    let is_sweep = sweep.is_some();
    if is_sweep && r.config.checkpoints.len() < 3 {
        return Ok(Outcome::Usage("a sweep needs at least 3 horizons (checkpoints or --horizons)".into()));
    }
    let loaded = r.spec.load()?;
    let inst = &loaded.instance;
    let inputs = hash_inputs(&loaded.inputs)?;
    fs::create_dir_all(&a.out)?;

    let runs = run_seeds(inst, &r.config, a.jobs)?;
    let mut outputs = Vec::new();
    let mut verdict = Outcome::Ok;
    let failed = runs.iter().filter(|x| x.failure.is_some()).count();
    for run in runs.iter().filter(|x| x.failure.is_some()) {
        eprintln!("seed {} aborted: {}", run.seed, run.failure.as_deref().unwrap_or(""));
    }

    if is_sweep {
        let summary = summarize_tracking(&r.config, &runs);
        write_output(&a.out, "tracking.csv", &io::tracking_csv(&summary), &mut outputs)?;
        match fit_tracking(&r.config, &summary) {
            Ok(fit) => {
                write_output(&a.out, "rate_fit.json", &(io::rate_fit_json(&fit)? + "\n"), &mut outputs)?;
                if plot {
                    let svg = loglog_svg(&fit, "averaged critic tracking error", "(1/T) sum E||omega_t - omega_bar*||^2");
                    write_output(&a.out, "rate_fit.svg", &svg, &mut outputs)?;
                }
                println!(
                    "slope {:.4} ± {:.4}; term exponents {:?}; dominant {:.4}",
                    fit.slope, fit.slope_se, fit.term_exponents, fit.dominant_exponent
                );
            }
            Err(e) => verdict = Outcome::Failed(format!("fit refused: {e}")),
        }
    } else {
        let rows: Vec<(u64, &[tbac::experiments::MetricRow])> =
            runs.iter().map(|x| (x.seed, x.rows.as_slice())).collect();
        write_output(&a.out, "metrics.csv", &io::metric_rows_csv(&rows), &mut outputs)?;
        if !r.config.checkpoints.is_empty() {
            let summary = summarize_tracking(&r.config, &runs);
            write_output(&a.out, "tracking.csv", &io::tracking_csv(&summary), &mut outputs)?;
        }
        if r.config.kind == ExperimentKind::FullActorCritic {
            let summary = summarize_actor(&r.config, &runs);
            write_output(&a.out, "actor.csv", &io::actor_csv(&summary), &mut outputs)?;
            println!(
                "min seed-mean ||grad J||^2 = {:e} (t=0: {:e}); crossed epsilon {}: {}",
                summary.min_grad_sq(),
                summary.mean_grad_sq.first().copied().unwrap_or(f64::NAN),
                summary.epsilon,
                summary.crossed
            );
        }
    }
    if failed > 0 && matches!(verdict, Outcome::Ok) {
        verdict = Outcome::Failed(format!("{failed} of {} seeds aborted", runs.len()));
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: if is_sweep { "sweep" } else { "run" }.into(),
        config_hash: config_hash(&r.spec, &r.config)?,
        instance: r.spec,
        seeds: r.config.seeds(),
        config: r.config,
        inputs,
        outputs,
        started_at,
        finished_at: io::unix_now(),
    };
    manifest.write(&a.out.join("manifest.json"))?;
    println!("wrote {}", a.out.display());
    Ok(verdict)
}

fn schedule_and_instance(
    config: &Option<PathBuf>,
    flags: &InstanceArgs,
) -> Result<(Option<PowerSchedule>, InstanceSpec), Error> {
    match config {
        Some(p) => {
            let f = read_run_config(p)?;
            let spec = if flags.any() { flags.overlay(f.instance) } else { f.instance };
            Ok((Some(f.experiment.schedule), spec))
        }
        None => Ok((None, flags.overlay(InstanceSpec::default()))),
    }
}

fn audit(a: AuditArgs) -> Res {
    let (schedule, spec) = schedule_and_instance(&a.config, &a.instance)?;
    let schedule = schedule.unwrap_or_else(|| PowerSchedule::corollary(0.5, 0.5, 0.5));
    let inst = spec.load()?.instance;
    let report = assumption_audit(&inst, &schedule, a.samples, a.seed)?;
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
        Format::Csv => {
            println!("item,pass,margin,detail");
            for i in &report.items {
                let margin = i.margin.map(io::fmt_f64).unwrap_or_default();
                println!("{},{},{},\"{}\"", i.name, i.pass, margin, i.detail.replace('"', "'"));
            }
        }
    }
    if report.all_pass() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::Failed(format!("audit failed: {}", report.failures().join(", "))))
    }
}

fn check(a: CheckArgs) -> Res {
    let (from_cfg, spec) = schedule_and_instance(&a.config, &a.instance)?;
    let schedule = match (&a.schedule, from_cfg) {
        (Some(v), _) if v.len() != 6 => {
            return Ok(Outcome::Usage(format!("--schedule takes 6 numbers, got {}", v.len())))
        }
        (Some(v), _) => PowerSchedule { c1: v[0], c2: v[1], c3: v[2], a_exp: v[3], xi_exp: v[4], b_exp: v[5] },
        (None, Some(s)) => s,
        (None, None) => return Ok(Outcome::Usage("give --schedule or --config".into())),
    };
    if let Err(e) = schedule.validate(a.finite_time) {
        println!("invalid: {e}");
        return Ok(Outcome::Failed(String::new()));
    }
    let rep = schedule.check_assumption_3();
    for (name, ok) in rep.items() {
        println!("{:<22} {}", name, if ok { "pass" } else { "FAIL" });
    }
    println!("{:<22} {}", "asymptotic regime", rep.asymptotic_regime);
    println!("{:<22} {}", "finite-time regime", rep.finite_time_regime);
    println!("critic term exponents  {:?}", schedule.critic_rate_exponents());
    println!("dominant exponent      {}", schedule.dominant_critic_exponent());
    if let Some(t) = a.horizon {
        let inst = spec.load()?.instance;
        let theta = DVector::<f64>::zeros(inst.policy.dim);
        let pol = inst.policy.policy(&theta)?;
        let mc = MixingConstants::estimate(&inst.mdp, &pol, MIXING_WINDOW)?;
        println!("mixing c = {:e}, sigma = {:e}, bound holds: {}", mc.c, mc.sigma, mc.bound_holds);
        println!("tau_T at T = {t}: {}", mixing_time_at(&schedule, t, mc.c, mc.sigma)?);
    }
    if rep.serves_some_regime() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::Failed("schedule serves neither regime".into()))
    }
}

fn generate(a: GenerateArgs) -> Res {
    let mdp = match garnet(a.states, a.actions, a.branching, a.discount, a.seed) {
        Ok(m) => m,
        Err(e) => return Ok(Outcome::Usage(e.to_string())),
    };
    fs::create_dir_all(&a.out)?;
    io::write_mdp(&a.out.join("mdp.toml"), &mdp)?;
    io::write_policy_features(&a.out.join("policy.toml"), &PolicyFeatures::tabular(a.states, a.actions))?;
    io::write_critic_features(&a.out.join("critic.toml"), &CriticFeatures::tabular(a.states))?;
    println!("wrote mdp.toml, policy.toml, critic.toml to {}", a.out.display());
    Ok(Outcome::Ok)
}
