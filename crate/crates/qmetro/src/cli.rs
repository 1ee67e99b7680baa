//! Command-line driver: config parsing, dispatch, CSV and manifest output.
//!
//! Every option can also come from a flat `key = value` file passed with
//! `--config`; flags given on the command line win. A manifest written next
//! to the CSV is itself a valid config file, so re-running it reproduces the
//! CSV byte for byte.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use nalgebra::DMatrix;

use crate::bayes_mc::{self, FunctionWeights, McConfig, MseCurve};
use crate::bounds::{self, FidelityProfile};
use crate::estimation::{self, QuantumEstimator};
use crate::fockspace::{pauli, Axis, CMatrix, CVector, ModeSpace};
use crate::measurements::{catalog_pom, qubit_product_pom, LikelihoodModel, Pom, PomName};
use crate::networks;
use crate::priors::{self, FlatPrior};
use crate::probes::{self, Generator, ImagingKind, ProbeKind, ProbeState};
use crate::{Error, Result, C64};

/// Exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failed numerical checks.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Mse,
    Mse2d,
    SingleShot,
    PriorScan,
    Qcrb,
    Zzb,
    Wwb,
    MuTau,
    NetworkAsym,
    ImagingScaling,
    LossDemo,
    TimeDemo,
}

impl Command {
    fn is_monte_carlo(self) -> bool {
        matches!(self, Command::Mse | Command::Mse2d | Command::MuTau | Command::PriorScan)
    }
}

/// Bayesian quantum metrology batch driver.
///
/// Real-valued options accept arithmetic expressions such as `pi/2`; lists
/// are comma separated.
#[derive(Debug, Parser)]
#[command(name = "qmetro", version)]
pub struct Cli {
    pub command: Command,

    /// Flat key = value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV path; stdout when absent. The manifest goes to <out>.manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// coherent, noon, tsv, ses, tsc_optimal, tsc_intermediate, qubit_gamma,
    /// imaging_global, imaging_local or lossy.
    #[arg(long, default_value = "noon")]
    pub probe: String,
    /// Catalogue POM name, or `optimal` for the single-shot estimator basis.
    #[arg(long, default_value = "optimal")]
    pub pom: String,
    /// Mean photon number of optical and imaging probes.
    #[arg(long, default_value = "2")]
    pub nbar: String,
    /// γ of the qubit-network family.
    #[arg(long, default_value = "1")]
    pub gamma: String,
    /// Reference amplitude α of the global imaging probe.
    #[arg(long, default_value = "1")]
    pub alpha: String,
    /// Number of sensors or imaged phases; a list for sweeps.
    #[arg(long)]
    pub d: Option<String>,
    /// Photons per mode of the local imaging probe; a list for sweeps.
    #[arg(long)]
    pub n: Option<String>,
    /// Transmissivity for the lossy probe; a list for `loss-demo`.
    #[arg(long)]
    pub eta: Option<String>,
    /// Energy scale E of `time-demo` (ħ = 1).
    #[arg(long, default_value = "1")]
    pub energy: String,

    /// Prior means, one per parameter; probe-specific default.
    #[arg(long)]
    pub mean: Option<String>,
    /// Prior widths, one per parameter.
    #[arg(long, default_value = "pi/2")]
    pub width: String,
    /// Weight matrix diagonal W (single-shot, qcrb) or W_f (mse2d).
    #[arg(long)]
    pub weights: Option<String>,
    /// Linear functions for mse2d: vectors separated by `;`.
    #[arg(long)]
    pub functions: Option<String>,

    #[arg(long, default_value_t = 10)]
    pub mu_max: usize,
    /// Master seed; mandatory for Monte-Carlo commands.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated strings per true value.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Posterior grid points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Outer integration steps.
    #[arg(long)]
    pub outer: Option<usize>,
    /// Trial counts to evaluate (default all of 1..=mu-max).
    #[arg(long)]
    pub eval_mu: Option<String>,
    /// Worker threads for the Monte-Carlo engine.
    #[arg(long)]
    pub threads: Option<usize>,

    /// True parameter values for `prior-scan`.
    #[arg(long)]
    pub theta_true: Option<String>,
    /// Trial counts at which `prior-scan` stores the posterior.
    #[arg(long, default_value = "1,2,5,10")]
    pub mu_list: String,
    /// Relative tolerance ε_τ for `mu-tau`.
    #[arg(long, default_value = "0.05")]
    pub eps: String,
    /// Geometry values G for `network-asym`.
    #[arg(long)]
    pub geometry: Option<String>,
    /// Per-sensor variance v for `network-asym`.
    #[arg(long, default_value = "1")]
    pub v: String,
    /// Fidelity profile points for `zzb` and `wwb`.
    #[arg(long, default_value_t = bounds::DEFAULT_PROFILE_POINTS)]
    pub points: usize,
    /// Optional CSV of estimator projector columns (`single-shot`).
    #[arg(long)]
    pub projectors: Option<PathBuf>,
}

/// Result of one command: CSV text plus the MC stderr summary.
struct Output {
    csv: String,
    max_stderr: Option<f64>,
    summary: String,
}

/// Runs the driver on an argument list (program name first) and returns the
/// process exit status.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let args = match inject_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let start = Instant::now();
    let result = execute(&cli).and_then(|out| {
        write_artifacts(&cli, &args, &out, start.elapsed().as_secs_f64())?;
        Ok(out)
    });
    match result {
        Ok(out) => {
            if !out.summary.is_empty() {
                eprint!("{}", out.summary);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Maps a library error to the driver's exit status.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

fn config_key(key: &str) -> String {
    let k = key.trim().replace('_', "-");
    match k.as_str() {
        "grid-points" => "grid".into(),
        "mc-samples" => "samples".into(),
        "outer-steps" => "outer".into(),
        _ => k,
    }
}

/// Parses a flat `key = value` file; `#` starts a comment line.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("config line {}: expected key = value", i + 1)))?;
        pairs.push((config_key(k), v.trim().to_string()));
    }
    Ok(pairs)
}

fn has_flag(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Appends config-file entries whose flags are absent from `args`.
fn inject_config(mut args: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::InvalidInput(format!("cannot read config '{path}': {e}")))?;
    for (key, value) in parse_config(&text)? {
        if key == "command" {
            let has_command = args.get(1).is_some_and(|a| !a.starts_with('-'));
            if !has_command {
                args.insert(1.min(args.len()), value);
            }
            continue;
        }
        if key == "config" || has_flag(&args, &key) {
            continue;
        }
        args.push(format!("--{key}"));
        args.push(value);
    }
    Ok(args)
}

/// Evaluates one real expression such as `pi/2` or `3*pi/4`.
pub fn parse_real(s: &str) -> Result<f64> {
    let v = meval::eval_str(s.trim()).map_err(|e| Error::InvalidInput(format!("cannot evaluate '{s}': {e}")))?;
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!("'{s}' is not finite")));
    }
    Ok(v)
}

/// Evaluates a comma-separated list of real expressions.
pub fn parse_reals(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_real).collect()
}

fn parse_counts(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| Error::InvalidInput(format!("'{t}' is not a nonnegative integer"))))
        .collect()
}

fn single_count(s: Option<&str>, default: usize, what: &str) -> Result<usize> {
    match s {
        None => Ok(default),
        Some(s) => match parse_counts(s)?.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::InvalidInput(format!("--{what} takes a single value here"))),
        },
    }
}

/// `{:.5e}` gives six significant digits.
fn real(x: f64) -> String {
    format!("{x:.5e}")
}

fn broadcast(v: Vec<f64>, d: usize, what: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        n if n == d => Ok(v),
        n => Err(Error::InvalidInput(format!("{what}: expected {d} values, got {n}"))),
    }
}

/// Probe, generators and the default prior mean of a configuration.
struct Setup {
    probe: ProbeState,
    gen: Generator,
    mean: f64,
}

fn build_setup(cli: &Cli) -> Result<Setup> {
    let kind = ProbeKind::from_name(&cli.probe)?;
    let nbar = parse_real(&cli.nbar)?;
    let d = single_count(cli.d.as_deref(), 2, "d")?;
    match kind {
        ProbeKind::QubitGamma => {
            let probe = probes::make_qubit_network(parse_real(&cli.gamma)?, d)?;
            let gen = Generator::qubit_network(probe.space())?;
            Ok(Setup { probe, gen, mean: PI / 4.0 })
        }
        ProbeKind::ImagingGlobal | ProbeKind::ImagingLocal => {
            let ik = if kind == ProbeKind::ImagingGlobal {
                ImagingKind::GlobalGnoon { alpha: parse_real(&cli.alpha)? }
            } else {
                ImagingKind::LocalProduct { n: single_count(cli.n.as_deref(), 1, "n")? }
            };
            let probe = probes::make_imaging_probe(ik, d, nbar)?;
            let gen = Generator::imaging(probe.space())?;
            Ok(Setup { probe, gen, mean: 0.0 })
        }
        ProbeKind::Lossy => {
            let eta = match cli.eta.as_deref() {
                None => 0.9,
                Some(s) => match parse_reals(s)?.as_slice() {
                    [x] => *x,
                    _ => return Err(Error::InvalidInput("--eta takes a single value here".into())),
                },
            };
            let probe = probes::lossy_encode(&probes::lossy_optimal_input()?, eta, 0.0)?;
            let gen = Generator::numbers(probe.space(), &[0])?;
            Ok(Setup { probe, gen, mean: PI / 4.0 })
        }
        ProbeKind::Custom => Err(Error::InvalidInput("custom probes are not addressable by name".into())),
        _ => {
            let probe = probes::make_probe(kind, nbar)?;
            let gen = Generator::jz(probe.space())?;
            Ok(Setup { probe, gen, mean: 0.0 })
        }
    }
}

fn build_prior(cli: &Cli, dim: usize, default_mean: f64) -> Result<FlatPrior> {
    let means = match &cli.mean {
        Some(s) => broadcast(parse_reals(s)?, dim, "--mean")?,
        None => vec![default_mean; dim],
    };
    let widths = broadcast(parse_reals(&cli.width)?, dim, "--width")?;
    match cli.grid {
        Some(g) if cli.command == Command::PriorScan => FlatPrior::with_grid(means, widths, vec![g; dim]),
        _ => FlatPrior::new(means, widths),
    }
}

fn weight_vector(cli: &Cli, dim: usize) -> Result<Vec<f64>> {
    match &cli.weights {
        Some(s) => broadcast(parse_reals(s)?, dim, "--weights"),
        None => Ok(vec![1.0 / dim as f64; dim]),
    }
}

fn build_pom(cli: &Cli, setup: &Setup, prior: &FlatPrior) -> Result<Pom> {
    if cli.pom == "optimal" {
        let (_, est, _) = estimation::optimal_single_shot(&setup.probe, &setup.gen, prior)?;
        return if est.n_params() == 1 { est.pom(0) } else { est.joint_pom() };
    }
    catalog_pom(PomName::from_name(&cli.pom)?, setup.probe.space())
}

fn mc_config(cli: &Cli, two_d: bool) -> Result<McConfig> {
    let seed = cli
        .seed
        .ok_or_else(|| Error::InvalidInput("--seed is mandatory for Monte-Carlo commands".into()))?;
    let mut c = if two_d { McConfig::default_2d(seed, cli.mu_max) } else { McConfig::default_1d(seed, cli.mu_max) };
    if let Some(s) = cli.samples {
        c.mc_samples = s;
    }
    if let Some(g) = cli.grid {
        c.grid_points = g;
    }
    if let Some(o) = cli.outer {
        c.outer_steps = o;
    }
    if let Some(e) = &cli.eval_mu {
        c.eval_mu = Some(parse_counts(e)?);
    }
    c.threads = cli.threads;
    Ok(c)
}

fn fisher_matrix(setup: &Setup) -> Result<DMatrix<f64>> {
    if setup.probe.is_pure() {
        bounds::qfim(&setup.probe, &setup.gen)
    } else {
        Ok(DMatrix::from_element(1, 1, bounds::qfi_mixed(&setup.probe, &setup.gen)?))
    }
}

fn curve_csv(curve: &MseCurve) -> String {
    let mut s = String::from("mu,error,stderr\n");
    for ((mu, e), sd) in curve.mus.iter().zip(&curve.errors).zip(&curve.stderr) {
        let _ = writeln!(s, "{mu},{},{}", real(*e), real(*sd));
    }
    s
}

fn values_csv(values: &[f64]) -> String {
    let mut s = String::from("mu,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, real(*v));
    }
    s
}

fn max_stderr(curve: &MseCurve) -> Option<f64> {
    curve.stderr.iter().copied().reduce(f64::max)
}

fn execute(cli: &Cli) -> Result<Output> {
    if cli.command.is_monte_carlo() && cli.seed.is_none() {
        return Err(Error::InvalidInput("--seed is mandatory for Monte-Carlo commands".into()));
    }
    match cli.command {
        Command::Mse => cmd_mse(cli),
        Command::Mse2d => cmd_mse2d(cli),
        Command::SingleShot => cmd_single_shot(cli),
        Command::PriorScan => cmd_prior_scan(cli),
        Command::Qcrb => cmd_qcrb(cli),
        Command::Zzb | Command::Wwb => cmd_profile_bound(cli),
        Command::MuTau => cmd_mu_tau(cli),
        Command::NetworkAsym => cmd_network_asym(cli),
        Command::ImagingScaling => cmd_imaging_scaling(cli),
        Command::LossDemo => cmd_loss_demo(cli),
        Command::TimeDemo => cmd_time_demo(cli),
    }
}

fn cmd_mse(cli: &Cli) -> Result<Output> {
    let setup = build_setup(cli)?;
    if setup.gen.len() != 1 {
        return Err(Error::InvalidInput("mse is single-parameter; use mse2d".into()));
    }
    let prior = build_prior(cli, 1, setup.mean)?;
    let pom = build_pom(cli, &setup, &prior)?;
    let config = mc_config(cli, false)?;
    let curve = bayes_mc::mse_curve_1d(&setup.probe, &setup.gen, &pom, &prior, &config)?;
    Ok(Output { csv: curve_csv(&curve), max_stderr: max_stderr(&curve), summary: String::new() })
}

fn parse_functions(s: &str, d: usize) -> Result<DMatrix<f64>> {
    let cols: Vec<Vec<f64>> = s.split(';').map(parse_reals).collect::<Result<_>>()?;
    if cols.iter().any(|c| c.len() != d) {
        return Err(Error::InvalidInput(format!("each function needs {d} coefficients")));
    }
    Ok(DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]))
}

fn cmd_mse2d(cli: &Cli) -> Result<Output> {
    let setup = build_setup(cli)?;
    if setup.gen.len() != 2 {
        return Err(Error::InvalidInput(format!("mse2d needs two parameters, the probe has {}", setup.gen.len())));
    }
    let prior = build_prior(cli, 2, setup.mean)?;
    let pom = build_pom(cli, &setup, &prior)?;
    let weights = match &cli.functions {
        Some(f) => {
            let v = parse_functions(f, 2)?;
            let wf = weight_vector(cli, v.ncols())?;
            FunctionWeights::new(v, wf)?
        }
        None => FunctionWeights::new(DMatrix::identity(2, 2), weight_vector(cli, 2)?)?,
    };
    let config = mc_config(cli, true)?;
    let curve = bayes_mc::mse_curve_2d(&setup.probe, &setup.gen, &pom, &prior, &weights, &config)?;
    Ok(Output { csv: curve_csv(&curve), max_stderr: max_stderr(&curve), summary: String::new() })
}

fn projector_csv(est: &QuantumEstimator) -> String {
    let mut s = String::from("param,column,row,re,im\n");
    for k in 0..est.n_params() {
        let cols = est.projector_columns(k);
        for c in 0..cols.ncols() {
            for r in 0..cols.nrows() {
                let z = cols[(r, c)];
                let _ = writeln!(s, "{},{c},{r},{},{}", k + 1, real(z.re), real(z.im));
            }
        }
    }
    s
}

fn cmd_single_shot(cli: &Cli) -> Result<Output> {
    let setup = build_setup(cli)?;
    let dim = setup.gen.len();
    let prior = build_prior(cli, dim, setup.mean)?;
    let weights = weight_vector(cli, dim)?;
    let (moments, est, _) = estimation::optimal_single_shot(&setup.probe, &setup.gen, &prior)?;
    let bound = estimation::single_shot_bound(&moments, &est, &weights)?;
    let comm = estimation::commutation_check(&est)?;
    let mut csv = String::from("quantity,value\n");
    let _ = writeln!(csv, "bound,{}", real(bound));
    let _ = writeln!(csv, "commutator,{}", real(comm));
    for k in 0..dim {
        let mut e = est.estimates(k).to_vec();
        e.sort_by(f64::total_cmp);
        for (i, x) in e.iter().enumerate() {
            let _ = writeln!(csv, "s{}_eigenvalue_{},{}", k + 1, i + 1, real(*x));
        }
    }
    if let Some(p) = &cli.projectors {
        std::fs::write(p, projector_csv(&est))?;
    }
    let summary = format!("bound = {}\ncommutator = {}\n", real(bound), real(comm));
    Ok(Output { csv, max_stderr: None, summary })
}

fn cmd_prior_scan(cli: &Cli) -> Result<Output> {
    let setup = build_setup(cli)?;
    let dim = setup.gen.len();
    let prior = build_prior(cli, dim, setup.mean)?;
    let pom = build_pom(cli, &setup, &prior)?;
    let theta = match &cli.theta_true {
        Some(s) => broadcast(parse_reals(s)?, dim, "--theta-true")?,
        None => prior.means().to_vec(),
    };
    let mus = parse_counts(&cli.mu_list)?;
    let seed = cli.seed.unwrap_or_default();
    let scan = priors::prior_scan(&setup.probe, &setup.gen, &pom, &prior, &theta, &mus, seed)?;
    let mut csv = String::from(if dim == 1 { "mu,theta1,density\n" } else { "mu,theta1,theta2,density\n" });
    for (mu, post) in &scan.snapshots {
        if dim == 1 {
            for (t, p) in scan.axes[0].iter().zip(post) {
                let _ = writeln!(csv, "{mu},{},{}", real(*t), real(*p));
            }
        } else {
            let n2 = scan.axes[1].len();
            for (i, p) in post.iter().enumerate() {
                let _ = writeln!(csv, "{mu},{},{},{}", real(scan.axes[0][i / n2]), real(scan.axes[1][i % n2]), real(*p));
            }
        }
    }
    let mut summary = String::new();
    for (mu, count) in scan.maxima_counts() {
        let _ = writeln!(summary, "mu = {mu}: {count} maxima above half the peak");
    }
    Ok(Output { csv, max_stderr: None, summary })
}

fn cmd_qcrb(cli: &Cli) -> Result<Output> {
    let setup = build_setup(cli)?;
    let f = fisher_matrix(&setup)?;
    let w = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(weight_vector(cli, f.nrows())?));
    let values = bounds::qcrb_curve_matrix(&f, &w, cli.mu_max)?;
    Ok(Output { csv: values_csv(&values), max_stderr: None, summary: String::new() })
}

fn cmd_profile_bound(cli: &Cli) -> Result<Output> {
    let setup = build_setup(cli)?;
    let width = match parse_reals(&cli.width)?.as_slice() {
        [w] => *w,
        _ => return Err(Error::InvalidInput("profile bounds are single-parameter".into())),
    };
    let profile = FidelityProfile::new(&setup.probe, &setup.gen, width, cli.points)?;
    let values = if cli.command == Command::Zzb {
        bounds::qzzb(&profile, cli.mu_max)
    } else {
        bounds::qwwb(&profile, cli.mu_max)?
    };
    Ok(Output { csv: values_csv(&values), max_stderr: None, summary: String::new() })
}

fn cmd_mu_tau(cli: &Cli) -> Result<Output> {
    let setup = build_setup(cli)?;
    if setup.gen.len() != 1 {
        return Err(Error::InvalidInput("mu-tau is single-parameter".into()));
    }
    let prior = build_prior(cli, 1, setup.mean)?;
    let pom = build_pom(cli, &setup, &prior)?;
    let config = mc_config(cli, false)?;
    let curve = bayes_mc::mse_curve_1d(&setup.probe, &setup.gen, &pom, &prior, &config)?;
    let fq = fisher_matrix(&setup)?[(0, 0)];
    let crb = bounds::qcrb_curve(fq, cli.mu_max)?;
    let eps = parse_real(&cli.eps)?;
    let mut csv = String::from("mu,error,stderr,qcrb\n");
    for ((mu, e), sd) in curve.mus.iter().zip(&curve.errors).zip(&curve.stderr) {
        let _ = writeln!(csv, "{mu},{},{},{}", real(*e), real(*sd), real(crb[mu - 1]));
    }
    let summary = match bounds::saturation_mu(&curve, &crb, eps) {
        Some(m) => {
            let sd = curve.error_at(m).map_or(0.0, |(_, s)| s);
            format!("mu_tau = {m} (stderr at crossing {})\n", real(sd))
        }
        None => "mu_tau not reached\n".to_string(),
    };
    Ok(Output { csv, max_stderr: max_stderr(&curve), summary })
}

fn cmd_network_asym(cli: &Cli) -> Result<Output> {
    let ds = parse_counts(cli.d.as_deref().unwrap_or("2"))?;
    let gs = parse_reals(cli.geometry.as_deref().unwrap_or("0"))?;
    let v = parse_real(&cli.v)?;
    if !(v > 0.0) {
        return Err(Error::InvalidInput("--v must be positive".into()));
    }
    let mu = cli.mu_max.max(1) as f64;
    let mut csv = String::from("d,geometry,j_opt,h,error\n");
    for &d in &ds {
        for &g in &gs {
            let j = networks::j_opt(g, d)?;
            let h = networks::h_factor(j, g, d);
            // Unit-normalised functions, N = 1.
            let _ = writeln!(csv, "{d},{},{},{},{}", real(g), real(j), real(h), real(h / (4.0 * mu * v)));
        }
    }
    Ok(Output { csv, max_stderr: None, summary: String::new() })
}

fn cmd_imaging_scaling(cli: &Cli) -> Result<Output> {
    let ns = parse_counts(cli.n.as_deref().unwrap_or("1,2,3,4,5,6,7,8"))?;
    let ds = parse_counts(cli.d.as_deref().unwrap_or("2"))?;
    let nbar = parse_real(&cli.nbar)?;
    let mut csv = String::from("n,d,f,local_bound,global_bound\n");
    for &d in &ds {
        let global = networks::imaging_global_bound(nbar, d, None)?;
        for &n in &ns {
            let n32 = u32::try_from(n).map_err(|_| Error::InvalidInput(format!("N = {n} too large")))?;
            let (f, local) = networks::imaging_local_scaling(n32, nbar, d)?;
            let _ = writeln!(csv, "{n},{d},{},{},{}", real(f), real(local), real(global));
        }
    }
    Ok(Output { csv, max_stderr: None, summary: String::new() })
}

fn cmd_loss_demo(cli: &Cli) -> Result<Output> {
    let etas = parse_reals(cli.eta.as_deref().unwrap_or("0.5,0.6,0.7,0.8,0.9,1"))?;
    let input = probes::lossy_optimal_input()?;
    let mean = match &cli.mean {
        Some(s) => broadcast(parse_reals(s)?, 1, "--mean")?[0],
        None => PI / 4.0,
    };
    let width = broadcast(parse_reals(&cli.width)?, 1, "--width")?[0];
    let prior = FlatPrior::single(mean, width)?;
    let mut csv = String::from("eta,bound,qfi\n");
    for &eta in &etas {
        let probe = probes::lossy_encode(&input, eta, 0.0)?;
        let gen = Generator::numbers(probe.space(), &[0])?;
        let (_, _, bound) = estimation::optimal_single_shot(&probe, &gen, &prior)?;
        let fq = bounds::qfi_mixed(&probe, &gen)?;
        let _ = writeln!(csv, "{},{},{}", real(eta), real(bound), real(fq));
    }
    Ok(Output { csv, max_stderr: None, summary: String::new() })
}

/// Qubit clock: ρ₀ = |+⟩⟨+|, K = Eσ_z and a flat prior on t.
pub struct TimeDemo {
    pub bound: f64,
    pub estimator: CMatrix,
    /// (π/2E)(I − 2σ_y/π²).
    pub closed_form: CMatrix,
    /// Single-shot error of (I ± σ_y)/2 with optimal post-processing.
    pub pom_bound: f64,
}

pub fn time_demo(energy: f64, prior: &FlatPrior) -> Result<TimeDemo> {
    if !(energy > 0.0) {
        return Err(Error::InvalidInput("energy must be positive".into()));
    }
    let space = ModeSpace::qubits(1)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = CVector::from_vec(vec![C64::new(s, 0.0), C64::new(s, 0.0)]);
    let probe = ProbeState::from_vector(plus, space, ProbeKind::Custom)?;
    let gen = Generator::diagonal(space, vec![vec![energy, -energy]])?;
    let (_, est, bound) = estimation::optimal_single_shot(&probe, &gen, prior)?;
    let estimator = est.s_full(0)?;
    let scale = C64::new(PI / (2.0 * energy), 0.0);
    let closed_form = (CMatrix::identity(2, 2) - pauli(Axis::Y) * C64::new(2.0 / (PI * PI), 0.0)) * scale;
    // σ_y eigenbasis, eigenvalue −1 first.
    let basis = CMatrix::from_row_slice(2, 2, &[C64::new(s, 0.0), C64::new(s, 0.0), C64::new(0.0, -s), C64::new(0.0, s)]);
    let pom = qubit_product_pom(space, basis, [-1.0, 1.0])?;
    let model = LikelihoodModel::from_probe(&probe, &gen, &pom)?;
    let pom_bound =
        estimation::classical_single_shot_bound(&model, prior, &[1.0], estimation::DEFAULT_QUADRATURE_NODES)?;
    Ok(TimeDemo { bound, estimator, closed_form, pom_bound })
}

fn cmd_time_demo(cli: &Cli) -> Result<Output> {
    let energy = parse_real(&cli.energy)?;
    let mean = match &cli.mean {
        Some(s) => broadcast(parse_reals(s)?, 1, "--mean")?[0],
        None => PI / (2.0 * energy),
    };
    let width = match cli.width.as_str() {
        "pi/2" => PI / (2.0 * energy),
        w => parse_real(w)?,
    };
    let demo = time_demo(energy, &FlatPrior::single(mean, width)?)?;
    let dev = (&demo.estimator - &demo.closed_form).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let mut csv = String::from("quantity,value\n");
    let _ = writeln!(csv, "bound,{}", real(demo.bound));
    let _ = writeln!(csv, "pom_bound,{}", real(demo.pom_bound));
    let _ = writeln!(csv, "closed_form_deviation,{}", real(dev));
    for r in 0..2 {
        for c in 0..2 {
            let z = demo.estimator[(r, c)];
            let _ = writeln!(csv, "s_{r}{c}_re,{}", real(z.re));
            let _ = writeln!(csv, "s_{r}{c}_im,{}", real(z.im));
        }
    }
    Ok(Output { csv, max_stderr: None, summary: format!("bound = {}\n", real(demo.bound)) })
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Config echo as `key = value` lines, re-loadable with `--config`.
fn config_echo(cli: &Cli, args: &[String]) -> String {
    let mut s = String::new();
    let name = cli.command.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let _ = writeln!(s, "command = {name}");
    let mut it = args.iter().skip(1).peekable();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else { continue };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => (flag.to_string(), it.next_if(|n| !n.starts_with("--")).cloned().unwrap_or_default()),
        };
        if key != "config" {
            let _ = writeln!(s, "{} = {value}", key.replace('-', "_"));
        }
    }
    s
}

fn write_artifacts(cli: &Cli, args: &[String], out: &Output, wall: f64) -> Result<()> {
    let Some(path) = &cli.out else {
        print!("{}", out.csv);
        return Ok(());
    };
    std::fs::write(path, &out.csv)?;
    let mut m = config_echo(cli, args);
    let _ = writeln!(m, "# version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "# wall_time_s = {wall:.3}");
    match out.max_stderr {
        Some(sd) => {
            let _ = writeln!(m, "# max_mc_stderr = {}", real(sd));
        }
        None => {
            let _ = writeln!(m, "# max_mc_stderr = none (deterministic)");
        }
    }
    std::fs::write(manifest_path(path), m)?;
    Ok(())
}
