//! Single-shot optimal quantum estimators.
//!
//! Prior moments ρ = ∫p(θ)ρ(θ)dθ and ρ̄_k = ∫p(θ)θ_kρ(θ)dθ are held in a
//! reduced orthonormal basis B spanning the phase groups of the encoding:
//! ρ(θ) = B [C₀ ∘ Φ(θ)] B† with Φ_ij(θ) = e^{−i(λ_i−λ_j)·θ}. For a pure
//! two-mode probe under J_z this is the (2·cutoff − 1)-dimensional span of
//! the J_z components, which keeps every estimator small.

use std::collections::BTreeMap;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DVector;

use crate::bounds;
use crate::fockspace::{self, hermitian_eig, CMatrix, CVector, ModeSpace};
use crate::measurements::{LikelihoodModel, Pom};
use crate::priors::FlatPrior;
use crate::probes::{Encoding, Generator, ProbeKind, ProbeState};
use crate::{Error, Result, C64};

pub const SUPPORT_THRESHOLD: f64 = 1e-12;
pub const DEFAULT_QUADRATURE_NODES: usize = 200;
const QUADRATURE_TOL: f64 = 1e-6;
const SPECTRUM_TOL: f64 = 1e-5;

/// ρ and ρ̄_k in a reduced basis, together with the prior they came from.
#[derive(Clone, Debug)]
pub struct PriorMoments {
    space: ModeSpace,
    basis: CMatrix,
    phases: Vec<Vec<f64>>,
    rho: CMatrix,
    rho_bar: Vec<CMatrix>,
    prior: FlatPrior,
}

impl PriorMoments {
    pub fn space(&self) -> ModeSpace {
        self.space
    }

    pub fn prior(&self) -> &FlatPrior {
        &self.prior
    }

    pub fn n_params(&self) -> usize {
        self.rho_bar.len()
    }

    /// Isometry from reduced coordinates to the full space.
    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    /// Eigenvalue tuple of each reduced basis vector.
    pub fn phases(&self) -> &[Vec<f64>] {
        &self.phases
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    pub fn rho_bar(&self, k: usize) -> &CMatrix {
        &self.rho_bar[k]
    }

    pub fn reduced_dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn full_rho(&self) -> Result<CMatrix> {
        self.to_full(&self.rho)
    }

    pub fn full_rho_bar(&self, k: usize) -> Result<CMatrix> {
        self.to_full(&self.rho_bar[k])
    }

    /// B·X·B† for a reduced-coordinate operator X.
    pub fn to_full(&self, x: &CMatrix) -> Result<CMatrix> {
        let n = self.basis.nrows();
        if n > fockspace::DENSE_MAX_DIM {
            return Err(Error::MemoryBudget { dim: n, limit: fockspace::DENSE_MAX_DIM });
        }
        Ok(&self.basis * x * self.basis.adjoint())
    }

    /// Checks trace, Hermiticity and first moments.
    pub fn validate(&self) -> Result<()> {
        let tr = self.rho.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(Error::Numerical(format!("Tr ρ = {tr}")));
        }
        let h = fockspace::hermiticity_defect(&self.rho);
        if h > 1e-10 {
            return Err(Error::NotHermitian(h));
        }
        for (k, rb) in self.rho_bar.iter().enumerate() {
            let h = fockspace::hermiticity_defect(rb);
            if h > 1e-10 {
                return Err(Error::NotHermitian(h));
            }
            let t = rb.trace();
            if (t.re - self.prior.means()[k]).abs() > 1e-8 || t.im.abs() > 1e-8 {
                return Err(Error::Numerical(format!("Tr ρ̄_{k} = {t}, prior mean {}", self.prior.means()[k])));
            }
        }
        Ok(())
    }
}

/// Orthonormal basis of the phase-group spans and C₀ = B†ρ₀B.
struct Reduction {
    basis: CMatrix,
    phases: Vec<Vec<f64>>,
    c0: CMatrix,
}

fn reduce(enc: &Encoding) -> Reduction {
    let n = enc.space().dim();
    let mut by_group: BTreeMap<usize, Vec<&CVector>> = BTreeMap::new();
    for branch in enc.branches() {
        for bg in branch {
            by_group.entry(bg.group).or_default().push(&bg.vector);
        }
    }
    let mut cols: Vec<CVector> = Vec::new();
    let mut phases = Vec::new();
    for (g, vs) in by_group {
        let scale = vs.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let start = cols.len();
        for v in vs {
            let mut w = v.clone();
            for _ in 0..2 {
                for c in &cols[start..] {
                    let a = c.dotc(&w);
                    w -= c * a;
                }
            }
            let nw = w.norm();
            if nw > 1e-10 * scale {
                cols.push(w.unscale(nw));
                phases.push(enc.phases()[g].clone());
            }
        }
    }
    let r = cols.len();
    let mut basis = CMatrix::zeros(n, r);
    for (j, c) in cols.iter().enumerate() {
        basis.set_column(j, c);
    }
    let mut c0 = CMatrix::zeros(r, r);
    for (branch, &w) in enc.branches().iter().zip(enc.weights()) {
        let mut psi = CVector::zeros(n);
        for bg in branch {
            psi += &bg.vector;
        }
        let c = basis.adjoint() * psi;
        c0 += &c * c.adjoint() * C64::new(w, 0.0);
    }
    Reduction { basis, phases, c0 }
}

/// (1/W)∫e^{−iΔθ}dθ and (1/W)∫θe^{−iΔθ}dθ over the prior interval, closed form.
fn kl_closed(delta: f64, mean: f64, width: f64) -> (C64, C64) {
    let h = 0.5 * width;
    let u = delta * h;
    let (sinc, g) = if u.abs() < 1e-4 {
        let u2 = u * u;
        (1.0 - u2 / 6.0 + u2 * u2 / 120.0, u / 3.0 - u * u2 / 30.0)
    } else {
        (u.sin() / u, (u.sin() - u * u.cos()) / (u * u))
    };
    let rot = C64::from_polar(1.0, -delta * mean);
    (rot * sinc, rot * C64::new(mean * sinc, -h * g))
}

/// The same two integrals by n-node Gauss-Legendre quadrature.
fn kl_quadrature(rule: &GaussLegendre, delta: f64, lo: f64, hi: f64) -> (C64, C64) {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut k = C64::new(0.0, 0.0);
    let mut l = C64::new(0.0, 0.0);
    for &(x, w) in rule.as_node_weight_pairs() {
        let t = mid + half * x;
        let e = C64::from_polar(w, -delta * t);
        k += e;
        l += e * t;
    }
    // Σw = 2 on [−1, 1]; the prior density is 1/(2·half).
    (k * 0.5, l * 0.5)
}

/// Builds moments given per-axis integral functions of Δ.
fn assemble(enc: &Encoding, prior: &FlatPrior, mut kl: impl FnMut(usize, f64) -> Result<(C64, C64)>) -> Result<PriorMoments> {
    let d = enc.n_params();
    if prior.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: prior.dim() });
    }
    let red = reduce(enc);
    let r = red.basis.ncols();
    let mut rho = CMatrix::zeros(r, r);
    let mut rho_bar = vec![CMatrix::zeros(r, r); d];
    let mut cache: Vec<BTreeMap<i64, (C64, C64)>> = vec![BTreeMap::new(); d];
    for i in 0..r {
        for j in 0..r {
            let c = red.c0[(i, j)];
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let mut ks = Vec::with_capacity(d);
            let mut ls = Vec::with_capacity(d);
            for a in 0..d {
                let delta = red.phases[i][a] - red.phases[j][a];
                let key = (delta * 1e9).round() as i64;
                let v = match cache[a].get(&key) {
                    Some(v) => *v,
                    None => {
                        let v = kl(a, delta)?;
                        cache[a].insert(key, v);
                        v
                    }
                };
                ks.push(v.0);
                ls.push(v.1);
            }
            let kprod: C64 = ks.iter().product();
            rho[(i, j)] = c * kprod;
            for a in 0..d {
                let mut f = ls[a];
                for (b, kb) in ks.iter().enumerate() {
                    if b != a {
                        f *= kb;
                    }
                }
                rho_bar[a][(i, j)] = c * f;
            }
        }
    }
    let m = PriorMoments { space: enc.space(), basis: red.basis, phases: red.phases, rho, rho_bar, prior: prior.clone() };
    m.validate()?;
    Ok(m)
}

/// Flat-box moments in closed form for any encoding with a box prior.
pub fn prior_moments_closed_form(enc: &Encoding, prior: &FlatPrior) -> Result<PriorMoments> {
    assemble(enc, prior, |a, delta| Ok(kl_closed(delta, prior.means()[a], prior.widths()[a])))
}

/// ρ = ρ₀∘K and ρ̄ = ρ₀∘L for a pure two-mode probe under J_z.
pub fn prior_moments_interferometer(probe: &ProbeState, prior: &FlatPrior) -> Result<PriorMoments> {
    if !probe.is_pure() || probe.space().modes() != 2 || probe.space().is_exact() {
        return Err(Error::InvalidInput("interferometer moments need a pure two-mode optical probe".into()));
    }
    if prior.dim() != 1 {
        return Err(Error::InvalidInput("interferometer moments need a one-parameter prior".into()));
    }
    let enc = Encoding::new(probe, &Generator::jz(probe.space())?)?;
    prior_moments_closed_form(&enc, prior)
}

/// Moments by Gauss-Legendre quadrature with a node-doubling check.
pub fn prior_moments_generic(probe: &ProbeState, gen: &Generator, prior: &FlatPrior) -> Result<PriorMoments> {
    prior_moments_quadrature(&Encoding::new(probe, gen)?, prior, DEFAULT_QUADRATURE_NODES)
}

pub fn prior_moments_quadrature(enc: &Encoding, prior: &FlatPrior, nodes: usize) -> Result<PriorMoments> {
    let coarse = GaussLegendre::new(nodes).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let fine = GaussLegendre::new(2 * nodes).map_err(|e| Error::InvalidInput(e.to_string()))?;
    assemble(enc, prior, |a, delta| {
        let (lo, hi) = (prior.lower(a), prior.upper(a));
        let c = kl_quadrature(&coarse, delta, lo, hi);
        let f = kl_quadrature(&fine, delta, lo, hi);
        let diff = (c.0 - f.0).norm().max((c.1 - f.1).norm());
        if diff > QUADRATURE_TOL {
            return Err(Error::QuadratureNotConverged(diff));
        }
        Ok(f)
    })
}

/// Optimal single-shot estimators S_k, restricted to the support of ρ.
#[derive(Clone, Debug)]
pub struct QuantumEstimator {
    basis: CMatrix,
    support: CMatrix,
    support_probs: Vec<f64>,
    s_support: Vec<CMatrix>,
    estimates: Vec<Vec<f64>>,
    eigvecs: Vec<CMatrix>,
    residual: f64,
    space: ModeSpace,
}

/// Solves S_kρ + ρS_k = 2ρ̄_k in the eigenbasis of ρ:
/// S_k = 2Σ_ij ⟨φ_i|ρ̄_k|φ_j⟩/(p_i+p_j)|φ_i⟩⟨φ_j| over p > threshold.
pub fn solve_estimator(moments: &PriorMoments, support_threshold: f64) -> Result<QuantumEstimator> {
    let (p, phi) = hermitian_eig(moments.rho())?;
    let keep: Vec<usize> = (0..p.len()).filter(|&i| p[i] > support_threshold).collect();
    if keep.is_empty() {
        return Err(Error::Numerical("ρ has empty support".into()));
    }
    let r = moments.reduced_dim();
    let q = keep.len();
    let mut support = CMatrix::zeros(r, q);
    for (c, &i) in keep.iter().enumerate() {
        support.set_column(c, &phi.column(i));
    }
    let probs: Vec<f64> = keep.iter().map(|&i| p[i]).collect();

    let mut s_support = Vec::with_capacity(moments.n_params());
    let mut estimates = Vec::with_capacity(moments.n_params());
    let mut eigvecs = Vec::with_capacity(moments.n_params());
    let mut residual: f64 = 0.0;
    let rho_s = CMatrix::from_diagonal(&CVector::from_iterator(q, probs.iter().map(|&x| C64::new(x, 0.0))));
    for k in 0..moments.n_params() {
        let m = support.adjoint() * moments.rho_bar(k) * &support;
        let s = CMatrix::from_fn(q, q, |i, j| m[(i, j)] * (2.0 / (probs[i] + probs[j])));
        let scale = fockspace::max_norm(&s).max(1.0);
        let asym = fockspace::hermiticity_defect(&s);
        if asym > SPECTRUM_TOL * scale {
            return Err(Error::ComplexSpectrum(asym));
        }
        let s = (&s + s.adjoint()) * C64::new(0.5, 0.0);
        let res = fockspace::max_norm(&(&s * &rho_s + &rho_s * &s - m * C64::new(2.0, 0.0)));
        residual = residual.max(res);
        let (vals, vecs) = hermitian_eig(&s)?;
        estimates.push(vals.iter().copied().collect());
        eigvecs.push(vecs);
        s_support.push(s);
    }
    Ok(QuantumEstimator {
        basis: moments.basis().clone(),
        support,
        support_probs: probs,
        s_support,
        estimates,
        eigvecs,
        residual,
        space: moments.space(),
    })
}

impl QuantumEstimator {
    pub fn n_params(&self) -> usize {
        self.s_support.len()
    }

    /// S_k in the eigenbasis of ρ restricted to its support.
    pub fn s_support(&self, k: usize) -> &CMatrix {
        &self.s_support[k]
    }

    /// Eigenvalues of ρ kept as its support.
    pub fn support_probs(&self) -> &[f64] {
        &self.support_probs
    }

    /// S_k in the reduced coordinates of the moments.
    pub fn s_reduced(&self, k: usize) -> CMatrix {
        &self.support * &self.s_support[k] * self.support.adjoint()
    }

    /// S_k on the full space.
    pub fn s_full(&self, k: usize) -> Result<CMatrix> {
        let n = self.basis.nrows();
        if n > fockspace::DENSE_MAX_DIM {
            return Err(Error::MemoryBudget { dim: n, limit: fockspace::DENSE_MAX_DIM });
        }
        let b = &self.basis * &self.support;
        Ok(&b * &self.s_support[k] * b.adjoint())
    }

    /// Orthonormal support vectors of ρ in the full space.
    pub fn support_basis(&self) -> CMatrix {
        &self.basis * &self.support
    }

    /// Bayes estimates: the spectrum of S_k, ascending.
    pub fn estimates(&self, k: usize) -> &[f64] {
        &self.estimates[k]
    }

    /// Eigenvectors |s⟩ of S_k as full-space columns.
    pub fn projector_columns(&self, k: usize) -> CMatrix {
        &self.basis * &self.support * &self.eigvecs[k]
    }

    /// max over k of ‖S_kρ + ρS_k − 2ρ̄_k‖_max on the support.
    pub fn sylvester_residual(&self) -> f64 {
        self.residual
    }

    /// Tr(ρS_k).
    pub fn mean(&self, k: usize) -> f64 {
        (0..self.support_probs.len()).map(|i| self.support_probs[i] * self.s_support[k][(i, i)].re).sum()
    }

    /// Tr(ρS_k²).
    pub fn second_moment(&self, k: usize) -> f64 {
        let s = &self.s_support[k];
        let s2 = s * s;
        (0..self.support_probs.len()).map(|i| self.support_probs[i] * s2[(i, i)].re).sum()
    }

    /// Projective POM from the eigenvectors of S_k, labelled by the
    /// estimates, plus the (never occurring) complement of the support.
    pub fn pom(&self, k: usize) -> Result<Pom> {
        let labels = self.estimates[k].iter().map(|&e| vec![e]).collect();
        Pom::from_columns(self.space, self.projector_columns(k), labels, true)
    }

    /// Joint eigenbasis POM for commuting estimators, labelled by the
    /// estimate tuples.
    pub fn joint_pom(&self) -> Result<Pom> {
        let c = commutation_check(self)?;
        if c > 1e-9 {
            return Err(Error::NonCommuting(c));
        }
        let q = self.support_probs.len();
        let mut comb = CMatrix::zeros(q, q);
        for (k, s) in self.s_support.iter().enumerate() {
            comb += s * C64::new(1.0 / (1.0 + 0.7548776662466927 * k as f64), 0.0);
        }
        let (_, vecs) = hermitian_eig(&comb)?;
        let labels = (0..q)
            .map(|c| {
                let v = vecs.column(c).into_owned();
                self.s_support.iter().map(|s| (v.adjoint() * s * &v)[(0, 0)].re).collect()
            })
            .collect();
        Pom::from_columns(self.space, &self.basis * &self.support * vecs, labels, true)
    }
}

/// max over pairs of ‖[S_i, S_j]‖_max, evaluated on the full space.
pub fn commutation_check(est: &QuantumEstimator) -> Result<f64> {
    let b = &est.basis * &est.support;
    let mut worst: f64 = 0.0;
    for i in 0..est.n_params() {
        for j in i + 1..est.n_params() {
            let (si, sj) = (&est.s_support[i], &est.s_support[j]);
            let c = si * sj - sj * si;
            let full = &b * c * b.adjoint();
            worst = worst.max(fockspace::max_norm(&full));
        }
    }
    Ok(worst)
}

/// Σ_k w_k [∫p(θ)θ_k²dθ − Tr(ρS_k²)].
pub fn single_shot_bound(moments: &PriorMoments, est: &QuantumEstimator, weights: &[f64]) -> Result<f64> {
    check_weights(weights, moments.n_params())?;
    let prior = moments.prior();
    let v: f64 = weights.iter().enumerate().map(|(k, w)| w * (prior.second_moment(k) - est.second_moment(k))).sum();
    if v < -1e-8 {
        return Err(Error::NegativeBound(v));
    }
    Ok(v)
}

pub(crate) fn check_weights(weights: &[f64], d: usize) -> Result<()> {
    if weights.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: weights.len() });
    }
    if weights.iter().any(|w| *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("weights must be nonnegative with unit trace".into()));
    }
    Ok(())
}

/// Convenience: moments, estimator and bound for a probe with equal weights.
pub fn optimal_single_shot(probe: &ProbeState, gen: &Generator, prior: &FlatPrior) -> Result<(PriorMoments, QuantumEstimator, f64)> {
    let m = if probe.is_pure() && probe.space().modes() == 2 && !probe.space().is_exact() && gen.len() == 1 && is_jz(gen) {
        prior_moments_interferometer(probe, prior)?
    } else {
        prior_moments_generic(probe, gen, prior)?
    };
    let est = solve_estimator(&m, SUPPORT_THRESHOLD)?;
    let d = m.n_params();
    let w = vec![1.0 / d as f64; d];
    let b = single_shot_bound(&m, &est, &w)?;
    Ok((m, est, b))
}

fn is_jz(gen: &Generator) -> bool {
    let space = gen.space();
    gen.diagonals().is_some_and(|d| {
        d[0].iter()
            .enumerate()
            .all(|(i, &x)| (x - 0.5 * (space.occupation(i, 0) as f64 - space.occupation(i, 1) as f64)).abs() < 1e-12)
    })
}

/// Best single-shot error of a fixed POM with classical post-processing:
/// Σ_k w_k [∫pθ_k² − Σ_m (∫p(θ)p(m|θ)θ_k)² / ∫p(θ)p(m|θ)], by quadrature.
pub fn classical_single_shot_bound(model: &LikelihoodModel, prior: &FlatPrior, weights: &[f64], nodes: usize) -> Result<f64> {
    let d = prior.dim();
    check_weights(weights, d)?;
    if model.n_params() != d || d > 2 {
        return Err(Error::InvalidInput("classical bound needs a matching one- or two-parameter model".into()));
    }
    let rule = GaussLegendre::new(nodes).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let axis = |a: usize| -> Vec<(f64, f64)> {
        let half = 0.5 * prior.widths()[a];
        rule.as_node_weight_pairs().iter().map(|&(x, w)| (prior.means()[a] + half * x, 0.5 * w)).collect()
    };
    let axes: Vec<Vec<(f64, f64)>> = (0..d).map(axis).collect();
    let mut pts: Vec<(Vec<f64>, f64)> = axes[0].iter().map(|&(t, w)| (vec![t], w)).collect();
    if d == 2 {
        pts = pts
            .into_iter()
            .flat_map(|(t, w)| axes[1].iter().map(move |&(t2, w2)| (vec![t[0], t2], w * w2)))
            .collect();
    }
    let m = model.n_outcomes();
    let mut z = vec![0.0; m];
    let mut first = vec![vec![0.0; m]; d];
    for (theta, w) in &pts {
        let p = model.probabilities(theta)?;
        for (k, pk) in p.iter().enumerate() {
            z[k] += w * pk;
            for a in 0..d {
                first[a][k] += w * pk * theta[a];
            }
        }
    }
    let mut total = 0.0;
    for a in 0..d {
        let gain: f64 = (0..m).filter(|&k| z[k] > 1e-300).map(|k| first[a][k] * first[a][k] / z[k]).sum();
        total += weights[a] * (prior.second_moment(a) - gain);
    }
    Ok(total)
}

/// Single-shot bound for a collective measurement on μ copies of an
/// n-photon NOON probe, each reduced to its two-dimensional span.
pub fn noon_collective_bound(mu: usize, n: u32, prior: &FlatPrior) -> Result<f64> {
    if mu == 0 || mu > 10 {
        return Err(Error::InvalidInput(format!("collective bound supports 1 ≤ μ ≤ 10, got {mu}")));
    }
    if prior.dim() != 1 {
        return Err(Error::InvalidInput("collective bound needs a one-parameter prior".into()));
    }
    let space = ModeSpace::qubits(mu)?;
    // Per copy: |N,0⟩ ↦ e^{−iNθ/2}, |0,N⟩ ↦ e^{iNθ/2}.
    let half_n = n as f64 / 2.0;
    let diag: Vec<f64> = (0..space.dim())
        .map(|i| (0..mu).map(|q| if space.occupation(i, q) == 0 { half_n } else { -half_n }).sum())
        .collect();
    let gen = Generator::diagonal(space, vec![diag])?;
    let psi = CVector::from_element(space.dim(), C64::new(1.0, 0.0));
    let probe = ProbeState::from_vector(psi, space, ProbeKind::Custom)?;
    let m = prior_moments_generic(&probe, &gen, prior)?;
    let est = solve_estimator(&m, SUPPORT_THRESHOLD)?;
    single_shot_bound(&m, &est, &[1.0])
}

/// Δθ²_p(1 − Δθ²_p F_q), valid when the prior is narrow.
pub fn high_prior_approx_bound(probe: &ProbeState, gen: &Generator, prior: &FlatPrior) -> Result<f64> {
    if prior.dim() != 1 {
        return Err(Error::InvalidInput("high-prior approximation is single-parameter".into()));
    }
    let fq = bounds::qfi(probe, gen)?;
    let v = prior.variance(0);
    Ok(v * (1.0 - v * fq))
}

/// Eigenvalues of ρ (reduced), for diagnostics.
pub fn rho_spectrum(moments: &PriorMoments) -> Result<DVector<f64>> {
    Ok(hermitian_eig(moments.rho())?.0)
}
