//! Monte-Carlo Bayesian mean-square-error engine.
//!
//! Three steps: (1) simulate an outcome string at a true value θ′ and
//! Bayes-update a gridded posterior, recording its variance after every
//! trial; (2) average over independent strings; (3) average over θ′ with the
//! prior. The outer θ′ average uses rectangles in one dimension and Simpson's
//! rule in two, as in the reference implementation.
//!
//! Every string owns a ChaCha8 stream keyed by (seed, θ′ index, sample
//! index) and sums are reduced in a fixed order, so results do not depend on
//! the number of worker threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::measurements::{LikelihoodModel, LikelihoodTable, Pom};
use crate::numeric::{linspace, simpson, KahanSum};
use crate::priors::{cumulative, sample_index, FlatPrior};
use crate::probes::{Generator, ProbeState};
use crate::{Error, Result};

const UNDERFLOW: f64 = 1e-16;

/// Grid and sampling parameters of a Monte-Carlo run.
#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    /// Posterior grid points per axis.
    pub grid_points: usize,
    /// 1D: number of outer rectangles; 2D: outer Simpson points per axis.
    pub outer_steps: usize,
    /// Simulated strings per true value θ′.
    pub mc_samples: usize,
    pub seed: u64,
    pub mu_max: usize,
    /// Trial counts at which the posterior moments are evaluated; all of
    /// 1..=mu_max when `None`.
    pub eval_mu: Option<Vec<usize>>,
    /// Worker threads; hardware count when `None`.
    pub threads: Option<usize>,
}

impl McConfig {
    pub fn default_1d(seed: u64, mu_max: usize) -> Self {
        Self { grid_points: 1250, outer_steps: 125, mc_samples: 1250, seed, mu_max, eval_mu: None, threads: None }
    }

    pub fn default_2d(seed: u64, mu_max: usize) -> Self {
        Self { grid_points: 100, outer_steps: 20, mc_samples: 200, seed, mu_max, eval_mu: None, threads: None }
    }

    pub fn mus(&self) -> Vec<usize> {
        match &self.eval_mu {
            Some(v) => {
                let mut v: Vec<usize> = v.iter().copied().filter(|&m| m >= 1 && m <= self.mu_max).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
            None => (1..=self.mu_max).collect(),
        }
    }

    fn validate_common(&self) -> Result<()> {
        if self.mu_max == 0 {
            return Err(Error::InvalidInput("mu_max must be at least 1".into()));
        }
        if self.mc_samples < 2 {
            return Err(Error::InvalidInput("need at least 2 Monte-Carlo samples".into()));
        }
        if self.mus().is_empty() {
            return Err(Error::InvalidInput("no trial counts to evaluate".into()));
        }
        Ok(())
    }

    pub fn validate_1d(&self) -> Result<()> {
        self.validate_common()?;
        if self.outer_steps < 3 {
            return Err(Error::InvalidInput("the outer integral needs at least three rectangles".into()));
        }
        if self.grid_points % self.outer_steps != 0 {
            return Err(Error::InvalidInput(format!(
                "grid_points ({}) must be divisible by outer_steps ({})",
                self.grid_points, self.outer_steps
            )));
        }
        if self.grid_points / self.outer_steps < 2 && self.outer_steps * 2 > self.grid_points {
            return Err(Error::InvalidInput("outer step must span at least one grid interval".into()));
        }
        Ok(())
    }

    pub fn validate_2d(&self) -> Result<()> {
        self.validate_common()?;
        if self.grid_points < 3 || self.outer_steps < 3 {
            return Err(Error::InvalidInput("2D grids need at least 3 points per axis".into()));
        }
        Ok(())
    }

    fn eval_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.mu_max + 1];
        for m in self.mus() {
            mask[m] = true;
        }
        mask
    }
}

/// Bayesian error ε̄(μ) with Monte-Carlo standard errors.
#[derive(Clone, Debug)]
pub struct MseCurve {
    pub mus: Vec<usize>,
    pub errors: Vec<f64>,
    pub stderr: Vec<f64>,
    pub config: McConfig,
}

impl MseCurve {
    pub fn error_at(&self, mu: usize) -> Option<(f64, f64)> {
        self.mus.iter().position(|&m| m == mu).map(|i| (self.errors[i], self.stderr[i]))
    }
}

/// Linear functions f_j = V_{·j}·θ with weights W_f and G = V W_f Vᵀ.
#[derive(Clone, Debug)]
pub struct FunctionWeights {
    v: DMatrix<f64>,
    wf: Vec<f64>,
    g: DMatrix<f64>,
}

impl FunctionWeights {
    pub fn new(v: DMatrix<f64>, wf: Vec<f64>) -> Result<Self> {
        if v.ncols() != wf.len() || wf.is_empty() {
            return Err(Error::DimensionMismatch { expected: v.ncols(), got: wf.len() });
        }
        if wf.iter().any(|w| *w < 0.0) || (wf.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("function weights must be nonnegative with unit trace".into()));
        }
        let wd = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(wf.clone()));
        let g = &v * wd * v.transpose();
        Ok(Self { v, wf, g })
    }

    /// Identity functions with equal weights.
    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d), vec![1.0 / d as f64; d]).expect("valid identity weights")
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn wf(&self) -> &[f64] {
        &self.wf
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }
}

fn trapz_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = 0.5 * (x[i] - x[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    w
}

/// post ← scale·post⊙row, returning the trapezoidal norm of the result.
/// Eight partial sums let the loop vectorise.
fn bayes_update(post: &mut [f64], row: &[f64], tw: &[f64], scale: f64) -> f64 {
    const L: usize = 8;
    let mut acc = [0.0; L];
    let split = post.len() / L * L;
    let (head, tail) = post.split_at_mut(split);
    for ((p, r), w) in head.chunks_exact_mut(L).zip(row.chunks_exact(L)).zip(tw.chunks_exact(L)) {
        for j in 0..L {
            let v = p[j] * r[j] * scale;
            p[j] = v;
            acc[j] += w[j] * v;
        }
    }
    let mut rest = 0.0;
    for (i, p) in tail.iter_mut().enumerate() {
        let v = *p * row[split + i] * scale;
        *p = v;
        rest += tw[split + i] * v;
    }
    acc.iter().sum::<f64>() + rest
}

fn string_rng(seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

/// Per-θ′ sums over strings at each evaluated μ.
#[derive(Clone, Debug)]
struct Accum {
    var: Vec<KahanSum>,
    var_sq: Vec<KahanSum>,
    m2: Vec<KahanSum>,
    m2_sq: Vec<KahanSum>,
    c4: Vec<KahanSum>,
    c4_sq: Vec<KahanSum>,
}

impl Accum {
    fn new(n: usize) -> Self {
        let z = vec![KahanSum::default(); n];
        Self { var: z.clone(), var_sq: z.clone(), m2: z.clone(), m2_sq: z.clone(), c4: z.clone(), c4_sq: z }
    }
}

fn mean_sd(sum: &KahanSum, sq: &KahanSum, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum.value() / nf;
    let var = ((sq.value() - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, var.sqrt())
}

fn run_tasks<T: Send>(threads: Option<usize>, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let work = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
        match threads {
            Some(t) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(t.max(1))
                    .build()
                    .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
                Ok(pool.install(work))
            }
            None => Ok(work()),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok((0..n).map(f).collect())
    }
}

struct Raw1d {
    mus: Vec<usize>,
    weights: Vec<f64>,
    accums: Vec<Accum>,
    samples: usize,
}

fn run_1d(model: &LikelihoodModel, prior: &FlatPrior, config: &McConfig) -> Result<Raw1d> {
    config.validate_1d()?;
    if prior.dim() != 1 || model.n_params() != 1 {
        return Err(Error::InvalidInput("one-parameter engine needs a one-parameter model and prior".into()));
    }
    let theta = linspace(prior.lower(0), prior.upper(0), config.grid_points);
    let points: Vec<Vec<f64>> = theta.iter().map(|&t| vec![t]).collect();
    let table = LikelihoodTable::build(model, &points)?;
    let tw = trapz_weights(&theta);
    let step = config.grid_points / config.outer_steps;
    let outer: Vec<usize> = (0..config.grid_points).step_by(step).collect();
    let density = prior.density();
    let w_outer = density * (theta[2 * step - 1] - theta[step - 1]);
    let mus = config.mus();
    let mask = config.eval_mask();
    let slot: Vec<usize> = {
        let mut s = vec![usize::MAX; config.mu_max + 1];
        for (i, &m) in mus.iter().enumerate() {
            s[m] = i;
        }
        s
    };
    let n = theta.len();
    let accums = run_tasks(config.threads, outer.len(), |oi| {
        let t = outer[oi];
        let cdf = cumulative(&table.column(t));
        let mut acc = Accum::new(mus.len());
        let mut post = vec![0.0; n];
        for s in 0..config.mc_samples {
            let mut rng = string_rng(config.seed, (oi * config.mc_samples + s) as u64);
            post.iter_mut().for_each(|p| *p = density);
            // The normalised posterior is scale·post.
            let mut scale = 1.0;
            let mut alive = true;
            for mu in 1..=config.mu_max {
                let k = sample_index(&cdf, rng.random::<f64>());
                if alive {
                    let norm = bayes_update(&mut post, table.row(k), &tw, scale);
                    if norm > UNDERFLOW {
                        scale = 1.0 / norm;
                    } else {
                        alive = false;
                    }
                }
                if mask[mu] {
                    let (mut m1, mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0, 0.0);
                    if alive {
                        for i in 0..n {
                            let wp = tw[i] * post[i];
                            let th = theta[i];
                            let t2 = th * th;
                            m1 += wp * th;
                            m2 += wp * t2;
                            m3 += wp * t2 * th;
                            m4 += wp * t2 * t2;
                        }
                    }
                    let (m1, m2, m3, m4) = (m1 * scale, m2 * scale, m3 * scale, m4 * scale);
                    let var = m2 - m1 * m1;
                    let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
                    let j = slot[mu];
                    acc.var[j].add(var);
                    acc.var_sq[j].add(var * var);
                    acc.m2[j].add(m2);
                    acc.m2_sq[j].add(m2 * m2);
                    acc.c4[j].add(c4);
                    acc.c4_sq[j].add(c4 * c4);
                }
            }
        }
        acc
    })?;
    Ok(Raw1d { mus, weights: vec![w_outer; outer.len()], accums, samples: config.mc_samples })
}

/// Weighted outer sum of per-θ′ means with propagated standard errors.
fn reduce(raw_weights: &[f64], accums: &[Accum], samples: usize, n_mu: usize, pick: impl Fn(&Accum) -> (&[KahanSum], &[KahanSum])) -> (Vec<f64>, Vec<f64>) {
    let mut out = Vec::with_capacity(n_mu);
    let mut err = Vec::with_capacity(n_mu);
    for j in 0..n_mu {
        let mut total = KahanSum::default();
        let mut var = KahanSum::default();
        for (w, a) in raw_weights.iter().zip(accums) {
            let (s, sq) = pick(a);
            let (mean, sd) = mean_sd(&s[j], &sq[j], samples);
            total.add(w * mean);
            var.add((w * sd).powi(2) / samples as f64);
        }
        out.push(total.value());
        err.push(var.value().sqrt());
    }
    (out, err)
}

/// ε̄(μ) for a one-parameter model.
pub fn mse_curve_1d_model(model: &LikelihoodModel, prior: &FlatPrior, config: &McConfig) -> Result<MseCurve> {
    let raw = run_1d(model, prior, config)?;
    let (errors, stderr) = reduce(&raw.weights, &raw.accums, raw.samples, raw.mus.len(), |a| (&a.var, &a.var_sq));
    Ok(MseCurve { mus: raw.mus, errors, stderr, config: config.clone() })
}

pub fn mse_curve_1d(probe: &ProbeState, gen: &Generator, pom: &Pom, prior: &FlatPrior, config: &McConfig) -> Result<MseCurve> {
    mse_curve_1d_model(&LikelihoodModel::from_probe(probe, gen, pom)?, prior, config)
}

/// Taylor error Δε̄(μ) = (1/12)∫p(θ,m)[g(m)−θ]⁴, from posterior fourth
/// central moments.
#[derive(Clone, Debug)]
pub struct TaylorCurve {
    pub mus: Vec<usize>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub fn taylor_error_curve(probe: &ProbeState, gen: &Generator, pom: &Pom, prior: &FlatPrior, config: &McConfig) -> Result<TaylorCurve> {
    let model = LikelihoodModel::from_probe(probe, gen, pom)?;
    let raw = run_1d(&model, prior, config)?;
    let (v, e) = reduce(&raw.weights, &raw.accums, raw.samples, raw.mus.len(), |a| (&a.c4, &a.c4_sq));
    Ok(TaylorCurve {
        mus: raw.mus,
        values: v.iter().map(|x| x / 12.0).collect(),
        stderr: e.iter().map(|x| x / 12.0).collect(),
    })
}

/// Relative gap between ∫p(θ)θ² and its nested Monte-Carlo evaluation.
#[derive(Clone, Debug)]
pub struct PrecisionCheck {
    pub mus: Vec<usize>,
    /// (nested − direct)/direct per μ.
    pub defects: Vec<f64>,
    /// Monte-Carlo standard error of each defect.
    pub stderr: Vec<f64>,
    pub direct: f64,
}

impl PrecisionCheck {
    pub fn max_abs_defect(&self) -> f64 {
        self.defects.iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}

pub fn precision_self_check(probe: &ProbeState, gen: &Generator, pom: &Pom, prior: &FlatPrior, config: &McConfig) -> Result<PrecisionCheck> {
    let model = LikelihoodModel::from_probe(probe, gen, pom)?;
    let raw = run_1d(&model, prior, config)?;
    let (nested, err) = reduce(&raw.weights, &raw.accums, raw.samples, raw.mus.len(), |a| (&a.m2, &a.m2_sq));
    let direct = prior.second_moment(0);
    Ok(PrecisionCheck {
        mus: raw.mus,
        defects: nested.iter().map(|x| (x - direct) / direct).collect(),
        stderr: err.iter().map(|e| e / direct).collect(),
        direct,
    })
}

/// ε̄(μ) = ∫p(θ′)⟨G₁₁Σ₁₁ + G₂₂Σ₂₂ + 2G₁₂Σ₁₂⟩ for a two-parameter model.
pub fn mse_curve_2d_model(model: &LikelihoodModel, prior: &FlatPrior, weights: &FunctionWeights, config: &McConfig) -> Result<MseCurve> {
    config.validate_2d()?;
    if prior.dim() != 2 || model.n_params() != 2 || weights.g().nrows() != 2 {
        return Err(Error::InvalidInput("two-parameter engine needs two-parameter model, prior and weights".into()));
    }
    let g = weights.g();
    let (g11, g22, g12) = (g[(0, 0)], g[(1, 1)], g[(0, 1)]);
    let ax1 = linspace(prior.lower(0), prior.upper(0), config.grid_points);
    let ax2 = linspace(prior.lower(1), prior.upper(1), config.grid_points);
    let n2 = ax2.len();
    let mut points = Vec::with_capacity(ax1.len() * n2);
    for &a in &ax1 {
        for &b in &ax2 {
            points.push(vec![a, b]);
        }
    }
    let table = LikelihoodTable::build(model, &points)?;
    let (tw1, tw2) = (trapz_weights(&ax1), trapz_weights(&ax2));
    let tw: Vec<f64> = tw1.iter().flat_map(|a| tw2.iter().map(move |b| a * b)).collect();
    let out1 = linspace(prior.lower(0), prior.upper(0), config.outer_steps);
    let out2 = linspace(prior.lower(1), prior.upper(1), config.outer_steps);
    // First grid index at or beyond each outer point.
    let snap = |axis: &[f64], x: f64| axis.iter().position(|&t| t >= x).unwrap_or(axis.len() - 1);
    let outer: Vec<(usize, usize)> = out1
        .iter()
        .flat_map(|&x| out2.iter().map(move |&y| (x, y)))
        .map(|(x, y)| (snap(&ax1, x), snap(&ax2, y)))
        .collect();
    let density = prior.density();
    let mus = config.mus();
    let mask = config.eval_mask();
    let mut slot = vec![usize::MAX; config.mu_max + 1];
    for (i, &m) in mus.iter().enumerate() {
        slot[m] = i;
    }
    let n = points.len();
    let accums = run_tasks(config.threads, outer.len(), |oi| {
        let (i1, i2) = outer[oi];
        let cdf = cumulative(&table.column(i1 * n2 + i2));
        let mut acc = Accum::new(mus.len());
        let mut post = vec![0.0; n];
        for s in 0..config.mc_samples {
            let mut rng = string_rng(config.seed, (oi * config.mc_samples + s) as u64);
            post.iter_mut().for_each(|p| *p = density);
            // The normalised posterior is scale·post.
            let mut scale = 1.0;
            let mut alive = true;
            for mu in 1..=config.mu_max {
                let k = sample_index(&cdf, rng.random::<f64>());
                if alive {
                    let norm = bayes_update(&mut post, table.row(k), &tw, scale);
                    if norm > UNDERFLOW {
                        scale = 1.0 / norm;
                    } else {
                        alive = false;
                    }
                }
                if mask[mu] {
                    let (mut a1, mut a11, mut a2, mut a22, mut a12) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    if alive {
                        for (r, &t1) in ax1.iter().enumerate() {
                            let base = r * n2;
                            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
                            for (c, &t2) in ax2.iter().enumerate() {
                                let wp = tw[base + c] * post[base + c];
                                b0 += wp;
                                b1 += wp * t2;
                                b2 += wp * t2 * t2;
                            }
                            a1 += b0 * t1;
                            a11 += b0 * t1 * t1;
                            a2 += b1;
                            a22 += b2;
                            a12 += b1 * t1;
                        }
                    }
                    let (a1, a11, a2, a22, a12) = (a1 * scale, a11 * scale, a2 * scale, a22 * scale, a12 * scale);
                    let e = g11 * (a11 - a1 * a1) + g22 * (a22 - a2 * a2) + 2.0 * g12 * (a12 - a1 * a2);
                    let j = slot[mu];
                    acc.var[j].add(e);
                    acc.var_sq[j].add(e * e);
                }
            }
        }
        acc
    })?;

    // Simpson over θ₁ then θ₂ of p(θ′)ε(θ′), errors propagated linearly.
    let simpson_weights = |x: &[f64]| -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut e = vec![0.0; x.len()];
                e[i] = 1.0;
                simpson(x, &e)
            })
            .collect()
    };
    let (sw1, sw2) = (simpson_weights(&out1), simpson_weights(&out2));
    let m2 = out2.len();
    let weights_outer: Vec<f64> = (0..outer.len()).map(|oi| density * sw1[oi / m2] * sw2[oi % m2]).collect();
    let (errors, stderr) = reduce(&weights_outer, &accums, config.mc_samples, mus.len(), |a| (&a.var, &a.var_sq));
    Ok(MseCurve { mus, errors, stderr, config: config.clone() })
}

pub fn mse_curve_2d(
    probe: &ProbeState,
    gen: &Generator,
    pom: &Pom,
    prior: &FlatPrior,
    weights: &FunctionWeights,
    config: &McConfig,
) -> Result<MseCurve> {
    mse_curve_2d_model(&LikelihoodModel::from_probe(probe, gen, pom)?, prior, weights, config)
}
