//! Fisher information, Cramér-Rao curves, the saturation threshold μ_τ and
//! the quantum Ziv-Zakai and Weiss-Weinstein bounds.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::bayes_mc::MseCurve;
use crate::fockspace::{hermitian_eig, CMatrix};
use crate::measurements::LikelihoodModel;
use crate::numeric::{linspace, trapz};
use crate::probes::{Encoding, Generator, ProbeState};
use crate::{Error, Result, C64};

/// Outcomes with smaller probability are dropped from Fisher sums.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
/// Points used for fidelity profiles by default.
pub const DEFAULT_PROFILE_POINTS: usize = 1000;

fn check_spaces(probe: &ProbeState, gen: &Generator) -> Result<()> {
    if probe.space() != gen.space() {
        return Err(Error::InvalidInput("generator and probe live on different spaces".into()));
    }
    Ok(())
}

/// F_q = 4ΔK² for a pure probe and a single generator.
pub fn qfi(probe: &ProbeState, gen: &Generator) -> Result<f64> {
    if gen.len() != 1 {
        return Err(Error::InvalidInput(format!("qfi takes one generator, got {}", gen.len())));
    }
    Ok(qfim(probe, gen)?[(0, 0)])
}

/// (F_q)_ij = 4(⟨K_iK_j⟩ − ⟨K_i⟩⟨K_j⟩) for a pure probe.
pub fn qfim(probe: &ProbeState, gen: &Generator) -> Result<DMatrix<f64>> {
    check_spaces(probe, gen)?;
    let psi = probe
        .vector()
        .ok_or_else(|| Error::InvalidInput("quantum Fisher information needs a pure probe; use qfi_mixed".into()))?;
    let c = gen.max_commutator();
    if c > 1e-9 {
        return Err(Error::NonCommuting(c));
    }
    let kpsi: Vec<_> = (0..gen.len()).map(|k| gen.apply(k, psi)).collect();
    let means: Vec<f64> = kpsi.iter().map(|v| psi.dotc(v).re).collect();
    let d = gen.len();
    let mut f = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = 4.0 * (kpsi[i].dotc(&kpsi[j]).re - means[i] * means[j]);
            f[(i, j)] = v;
            f[(j, i)] = v;
        }
    }
    Ok(f)
}

/// Single-parameter F_q of a possibly mixed probe from the spectral form
/// 2Σ(p_i − p_j)²/(p_i + p_j)|⟨i|K|j⟩|².
pub fn qfi_mixed(probe: &ProbeState, gen: &Generator) -> Result<f64> {
    check_spaces(probe, gen)?;
    if gen.len() != 1 {
        return Err(Error::InvalidInput(format!("qfi_mixed takes one generator, got {}", gen.len())));
    }
    let (p, vecs) = hermitian_eig(&probe.density())?;
    // A pair contributes only if one member has p > floor/2, so rows of
    // ⟨i|K|j⟩ = (K|i⟩)†|j⟩ are needed for the support alone; the term is
    // symmetric in i, j.
    let n = p.len();
    let support: Vec<usize> = (0..n).filter(|&i| p[i] > 0.5 * PROBABILITY_FLOOR).collect();
    let mut k_support = CMatrix::zeros(n, support.len());
    for (r, &i) in support.iter().enumerate() {
        k_support.set_column(r, &gen.apply(0, &vecs.column(i).into_owned()));
    }
    let kij: CMatrix = k_support.adjoint() * &vecs;
    let mut in_support = vec![false; n];
    for &i in &support {
        in_support[i] = true;
    }
    let mut total = 0.0;
    for (r, &i) in support.iter().enumerate() {
        for j in 0..n {
            let s = p[i] + p[j];
            if s > PROBABILITY_FLOOR {
                let term = (p[i] - p[j]).powi(2) / s * kij[(r, j)].norm_sqr();
                total += if in_support[j] { term } else { 2.0 * term };
            }
        }
    }
    Ok(2.0 * total)
}

fn fisher_at(model: &LikelihoodModel, theta: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let d = theta.len();
    let p0 = model.probabilities(theta)?;
    let mut derivs = Vec::with_capacity(d);
    for a in 0..d {
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[a] += h;
        tm[a] -= h;
        let (pp, pm) = (model.probabilities(&tp)?, model.probabilities(&tm)?);
        derivs.push(pp.iter().zip(&pm).map(|(x, y)| (x - y) / (2.0 * h)).collect::<Vec<f64>>());
    }
    let mut f = DMatrix::zeros(d, d);
    for (k, &p) in p0.iter().enumerate() {
        if p < PROBABILITY_FLOOR {
            continue;
        }
        for a in 0..d {
            for b in a..d {
                f[(a, b)] += derivs[a][k] * derivs[b][k] / p;
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            f[(a, b)] = f[(b, a)];
        }
    }
    Ok(f)
}

/// Classical Fisher matrix F(θ) at each point by central differences of the
/// likelihood with step h, checked against step h/2.
pub fn classical_fisher(model: &LikelihoodModel, points: &[Vec<f64>], step: f64) -> Result<Vec<DMatrix<f64>>> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput("finite-difference step must be positive".into()));
    }
    points
        .iter()
        .map(|theta| {
            if theta.len() != model.n_params() {
                return Err(Error::DimensionMismatch { expected: model.n_params(), got: theta.len() });
            }
            let coarse = fisher_at(model, theta, step)?;
            let fine = fisher_at(model, theta, step / 2.0)?;
            let scale = fine.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let change = (&coarse - &fine).iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if change > 0.01 * scale.max(1e-12) {
                return Err(Error::DerivativeUnstable(change / scale.max(1e-12)));
            }
            Ok(fine)
        })
        .collect()
}

/// 1/(μF_q) for μ = 1..=mu_max.
pub fn qcrb_curve(fq: f64, mu_max: usize) -> Result<Vec<f64>> {
    if !(fq > 0.0) || !fq.is_finite() {
        return Err(Error::SingularFisher);
    }
    Ok((1..=mu_max).map(|mu| 1.0 / (mu as f64 * fq)).collect())
}

/// Tr(W F_q⁻¹)/μ for μ = 1..=mu_max. A singular F_q means some parameter
/// combination cannot be estimated, which is reported rather than inverted.
pub fn qcrb_curve_matrix(fq: &DMatrix<f64>, weights: &DMatrix<f64>, mu_max: usize) -> Result<Vec<f64>> {
    if !fq.is_square() || fq.shape() != weights.shape() {
        return Err(Error::DimensionMismatch { expected: fq.nrows(), got: weights.nrows() });
    }
    let eig = SymmetricEigen::new(fq.clone());
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if eig.eigenvalues.iter().any(|&l| l <= 1e-10 * top.max(1e-300)) {
        return Err(Error::SingularFisher);
    }
    let inv = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
        * eig.eigenvectors.transpose();
    let tr = (weights * inv).trace();
    Ok((1..=mu_max).map(|mu| tr / mu as f64).collect())
}

/// Smallest evaluated μ from which |mse − crb|/mse ≤ eps holds at every
/// later evaluated μ. `crb[μ−1]` is the bound at μ.
pub fn saturation_mu(mse: &MseCurve, crb: &[f64], eps: f64) -> Option<usize> {
    let mut candidate = None;
    for (&mu, &e) in mse.mus.iter().zip(&mse.errors).rev() {
        let c = *crb.get(mu - 1)?;
        if e > 0.0 && ((e - c) / e).abs() <= eps {
            candidate = Some(mu);
        } else {
            break;
        }
    }
    candidate
}

/// f(θ) = ⟨ψ₀|ψ(θ)⟩ and |f|² on [0, W₀], with f(2θ) kept for the
/// Weiss-Weinstein bound.
#[derive(Clone, Debug)]
pub struct FidelityProfile {
    pub theta: Vec<f64>,
    pub values: Vec<f64>,
    pub amplitude: Vec<C64>,
    pub amplitude_double: Vec<C64>,
    pub width: f64,
}

impl FidelityProfile {
    pub fn new(probe: &ProbeState, gen: &Generator, width: f64, points: usize) -> Result<Self> {
        if !probe.is_pure() {
            return Err(Error::InvalidInput("fidelity profiles need a pure probe".into()));
        }
        if gen.len() != 1 {
            return Err(Error::InvalidInput("fidelity profiles are single-parameter".into()));
        }
        if !(width > 0.0) || points < 3 {
            return Err(Error::InvalidInput("profile needs a positive width and at least 3 points".into()));
        }
        let enc = Encoding::new(probe, gen)?;
        // Weight ‖v_g‖² and eigenvalue λ_g of each populated group.
        let terms: Vec<(f64, f64)> = enc.branches()[0]
            .iter()
            .map(|bg| (bg.vector.norm_squared(), enc.phases()[bg.group][0]))
            .collect();
        let f = |t: f64| terms.iter().map(|&(w, l)| C64::from_polar(w, -l * t)).sum::<C64>();
        let theta = linspace(0.0, width, points);
        let amplitude: Vec<C64> = theta.iter().map(|&t| f(t)).collect();
        let amplitude_double = theta.iter().map(|&t| f(2.0 * t)).collect();
        let values = amplitude.iter().map(|a| a.norm_sqr().min(1.0)).collect();
        Ok(Self { theta, values, amplitude, amplitude_double, width })
    }
}

/// ½∫₀^{W₀} θ(1 − θ/W₀)[1 − √(1 − |f|^{2μ})] dθ for μ = 1..=mu_max.
pub fn qzzb(profile: &FidelityProfile, mu_max: usize) -> Vec<f64> {
    let w = profile.width;
    (1..=mu_max)
        .map(|mu| {
            let y: Vec<f64> = profile
                .theta
                .iter()
                .zip(&profile.values)
                .map(|(&t, &f2)| t * (1.0 - t / w) * (1.0 - (1.0 - f2.powi(mu as i32)).max(0.0).sqrt()))
                .collect();
            0.5 * trapz(&profile.theta, &y)
        })
        .collect()
}

/// Grid supremum of θ²(1−θ/W₀)²|f|^{4μ} / (2|f|^{2μ} − 2(1−2θ/W₀)Re[(f(θ)²f(2θ)*)^μ]).
pub fn qwwb(profile: &FidelityProfile, mu_max: usize) -> Result<Vec<f64>> {
    let w = profile.width;
    (1..=mu_max)
        .map(|mu| {
            let m = mu as i32;
            let mut best: Option<f64> = None;
            for i in 0..profile.theta.len() {
                let t = profile.theta[i];
                let f = profile.amplitude[i];
                let f2m = profile.values[i].powi(m);
                let cross = (f * f * profile.amplitude_double[i].conj()).powi(m).re;
                let den = 2.0 * f2m - 2.0 * (1.0 - 2.0 * t / w) * cross;
                if den.abs() < 1e-12 {
                    continue;
                }
                let num = (t * (1.0 - t / w)).powi(2) * f2m * f2m;
                let v = num / den;
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
            best.ok_or_else(|| Error::Numerical(format!("every grid point was skipped for μ = {mu}")))
        })
        .collect()
}
