//! Flat priors, posterior-ambiguity scans and intrinsic-width helpers.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::measurements::{LikelihoodModel, LikelihoodTable, Pom};
use crate::numeric::{linspace, trapz};
use crate::probes::{Generator, ProbeState};
use crate::{Error, Result};

pub const DEFAULT_GRID_1D: usize = 1000;
pub const DEFAULT_GRID_2D: usize = 200;

/// Uniform density 1/ΠW_k on the box Π[θ̄_k − W_k/2, θ̄_k + W_k/2].
#[derive(Clone, Debug, PartialEq)]
pub struct FlatPrior {
    means: Vec<f64>,
    widths: Vec<f64>,
    grid_points: Vec<usize>,
}

impl FlatPrior {
    pub fn new(means: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        let n = if means.len() == 1 { DEFAULT_GRID_1D } else { DEFAULT_GRID_2D };
        let g = vec![n; means.len()];
        Self::with_grid(means, widths, g)
    }

    pub fn with_grid(means: Vec<f64>, widths: Vec<f64>, grid_points: Vec<usize>) -> Result<Self> {
        if means.is_empty() || means.len() != widths.len() || grid_points.len() != means.len() {
            return Err(Error::InvalidInput("prior means, widths and grid sizes must have equal nonzero length".into()));
        }
        if let Some(w) = widths.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!("prior widths must be positive, got {w}")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("prior means must be finite".into()));
        }
        if grid_points.iter().any(|&g| g < 3) {
            return Err(Error::InvalidInput("prior grids need at least 3 points".into()));
        }
        Ok(Self { means, widths, grid_points })
    }

    pub fn single(mean: f64, width: f64) -> Result<Self> {
        Self::new(vec![mean], vec![width])
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn grid_points(&self) -> &[usize] {
        &self.grid_points
    }

    pub fn lower(&self, k: usize) -> f64 {
        self.means[k] - 0.5 * self.widths[k]
    }

    pub fn upper(&self, k: usize) -> f64 {
        self.means[k] + 0.5 * self.widths[k]
    }

    pub fn density(&self) -> f64 {
        1.0 / self.widths.iter().product::<f64>()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().enumerate().all(|(k, t)| *t >= self.lower(k) && *t <= self.upper(k))
    }

    /// Δθ²_p = W²/12 for parameter k.
    pub fn variance(&self, k: usize) -> f64 {
        self.widths[k] * self.widths[k] / 12.0
    }

    /// ∫p(θ)θ_k² dθ = θ̄_k² + W_k²/12.
    pub fn second_moment(&self, k: usize) -> f64 {
        self.means[k] * self.means[k] + self.variance(k)
    }

    /// Square error is a faithful proxy for periodic phases only for W ≤ 2.
    pub fn square_error_valid(&self) -> bool {
        self.widths.iter().all(|&w| w <= 2.0)
    }

    pub fn grid(&self, k: usize) -> Vec<f64> {
        linspace(self.lower(k), self.upper(k), self.grid_points[k])
    }
}

/// 2(1 − (2/W)sin(W/2)): the prior sine error for a flat prior of width W.
pub fn prior_sine_error(width: f64) -> f64 {
    2.0 * (1.0 - (2.0 / width) * (width / 2.0).sin())
}

/// W_int of an N-photon NOON probe: π/N for even N, π/(2N) for odd N.
pub fn noon_intrinsic_width(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    let n = n as f64;
    Ok(if n as u64 % 2 == 0 { PI / n } else { PI / (2.0 * n) })
}

/// Lower bound 1/(Δθ²_p F_q) on the repetitions worth performing.
pub fn worthwhile_repetitions(prior_variance: f64, fq: f64) -> Result<f64> {
    if !(prior_variance > 0.0) || !(fq > 0.0) {
        return Err(Error::InvalidInput("prior variance and Fisher information must be positive".into()));
    }
    Ok(1.0 / (prior_variance * fq))
}

/// Posterior snapshots after μ simulated outcomes drawn at θ_true.
#[derive(Clone, Debug)]
pub struct PriorScan {
    /// Grid of each axis; 2D posteriors are row-major over (θ₁, θ₂).
    pub axes: Vec<Vec<f64>>,
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

impl PriorScan {
    /// Local maxima above half the global maximum, per snapshot.
    pub fn maxima_counts(&self) -> Vec<(usize, usize)> {
        self.snapshots.iter().map(|(mu, p)| (*mu, count_maxima(&self.axes, p))).collect()
    }
}

/// Runs one simulated outcome record and stores the grid posterior at each
/// requested μ. Deterministic given `seed`.
pub fn prior_scan(
    probe: &ProbeState,
    gen: &Generator,
    pom: &Pom,
    prior: &FlatPrior,
    theta_true: &[f64],
    mu_list: &[usize],
    seed: u64,
) -> Result<PriorScan> {
    if !prior.contains(theta_true) {
        return Err(Error::InvalidInput("true value lies outside the prior box".into()));
    }
    if prior.dim() > 2 {
        return Err(Error::InvalidInput("posterior scans support one or two parameters".into()));
    }
    let model = LikelihoodModel::from_probe(probe, gen, pom)?;
    if model.n_params() != prior.dim() {
        return Err(Error::DimensionMismatch { expected: model.n_params(), got: prior.dim() });
    }
    let axes: Vec<Vec<f64>> = (0..prior.dim()).map(|k| prior.grid(k)).collect();
    let points = grid_points(&axes);
    let table = LikelihoodTable::build(&model, &points)?;
    let p_true = model.probabilities(theta_true)?;
    let cdf = cumulative(&p_true);

    let mut post = vec![prior.density(); points.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut snapshots = Vec::new();
    let mu_max = mu_list.iter().copied().max().unwrap_or(0);
    for mu in 0..=mu_max {
        if mu > 0 {
            let k = sample_index(&cdf, rng.random::<f64>());
            for (p, l) in post.iter_mut().zip(table.row(k)) {
                *p *= l;
            }
            let norm = integrate_grid(&axes, &post);
            if !(norm > 1e-16) {
                return Err(Error::PosteriorUnderflow);
            }
            post.iter_mut().for_each(|p| *p /= norm);
        }
        if mu_list.contains(&mu) {
            snapshots.push((mu, post.clone()));
        }
    }
    snapshots.sort_by_key(|s| mu_list.iter().position(|m| *m == s.0));
    Ok(PriorScan { axes, snapshots })
}

pub(crate) fn grid_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match axes.len() {
        1 => axes[0].iter().map(|&t| vec![t]).collect(),
        _ => {
            let mut pts = Vec::with_capacity(axes[0].len() * axes[1].len());
            for &a in &axes[0] {
                for &b in &axes[1] {
                    pts.push(vec![a, b]);
                }
            }
            pts
        }
    }
}

/// Trapezoidal integral of a row-major grid function over 1 or 2 axes.
pub(crate) fn integrate_grid(axes: &[Vec<f64>], f: &[f64]) -> f64 {
    match axes.len() {
        1 => trapz(&axes[0], f),
        _ => {
            let n2 = axes[1].len();
            let inner: Vec<f64> = f.chunks(n2).map(|row| trapz(&axes[1], row)).collect();
            trapz(&axes[0], &inner)
        }
    }
}

pub(crate) fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// First index whose cumulative probability exceeds `u`.
pub(crate) fn sample_index(cdf: &[f64], u: f64) -> usize {
    let k = cdf.partition_point(|&c| c <= u);
    if k < cdf.len() {
        return k;
    }
    // Rounding left u above the total: fall back to the last outcome with mass.
    let mut last = cdf.len() - 1;
    while last > 0 && cdf[last] == cdf[last - 1] {
        last -= 1;
    }
    last
}

fn count_maxima(axes: &[Vec<f64>], p: &[f64]) -> usize {
    let gmax = p.iter().cloned().fold(f64::MIN, f64::max);
    if !(gmax > 0.0) {
        return 0;
    }
    let thr = 0.5 * gmax;
    let mut count = 0;
    if axes.len() == 1 {
        let n = p.len();
        let mut i = 0;
        while i < n {
            // Treat a run of equal values as one candidate.
            let mut j = i;
            while j + 1 < n && p[j + 1] == p[i] {
                j += 1;
            }
            let left_ok = i == 0 || p[i - 1] < p[i];
            let right_ok = j == n - 1 || p[j + 1] < p[i];
            if left_ok && right_ok && p[i] >= thr && !(i == 0 && j == n - 1) {
                count += 1;
            }
            i = j + 1;
        }
    } else {
        let (n1, n2) = (axes[0].len(), axes[1].len());
        for a in 0..n1 {
            for b in 0..n2 {
                let v = p[a * n2 + b];
                if v < thr {
                    continue;
                }
                let mut is_max = true;
                let mut strict = false;
                for da in -1i64..=1 {
                    for db in -1i64..=1 {
                        if da == 0 && db == 0 {
                            continue;
                        }
                        let (x, y) = (a as i64 + da, b as i64 + db);
                        if x < 0 || y < 0 || x >= n1 as i64 || y >= n2 as i64 {
                            continue;
                        }
                        let w = p[x as usize * n2 + y as usize];
                        if w > v {
                            is_max = false;
                        } else if w < v {
                            strict = true;
                        }
                    }
                }
                if is_max && strict {
                    count += 1;
                }
            }
        }
    }
    count
}
