//! Closed forms for sensor-symmetric networks and phase imaging.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// d sensors with per-sensor variance v and pairwise correlation J.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkSpec {
    pub d: usize,
    pub v: f64,
    pub j: f64,
}

impl NetworkSpec {
    pub fn new(d: usize, v: f64, j: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidInput("a network needs at least two sensors".into()));
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput(format!("per-sensor variance must be positive, got {v}")));
        }
        let lo = 1.0 / (1.0 - d as f64);
        if !(j > lo && j < 1.0) {
            return Err(Error::InvalidInput(format!("J = {j} outside the open interval ({lo}, 1)")));
        }
        Ok(Self { d, v, j })
    }
}

/// F_q = 4v[(1−J)I + J𝟙𝟙ᵀ] and its closed-form inverse.
pub fn qfim_sensor_symmetric(spec: &NetworkSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = spec.d;
    let (v, j) = (spec.v, spec.j);
    let ones = DMatrix::from_element(d, d, 1.0);
    let id = DMatrix::<f64>::identity(d, d);
    let f = (&id * (1.0 - j) + &ones * j) * (4.0 * v);
    let a = 1.0 + (d as f64 - 1.0) * j;
    let inv = (&id * a - &ones * j) / (4.0 * v * (1.0 - j) * a);
    (f, inv)
}

/// Linear functions f_j (columns of V) with weights W_f.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFunctions {
    pub v: DMatrix<f64>,
    pub wf: Vec<f64>,
}

impl LinearFunctions {
    pub fn new(v: DMatrix<f64>, wf: Vec<f64>) -> Result<Self> {
        if v.ncols() == 0 || v.ncols() != wf.len() {
            return Err(Error::DimensionMismatch { expected: v.ncols(), got: wf.len() });
        }
        if v.column_iter().any(|c| c.norm() == 0.0) {
            return Err(Error::InvalidInput("function vectors must be nonzero".into()));
        }
        if wf.iter().any(|w| *w < 0.0) || (wf.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("weights must be nonnegative with unit trace".into()));
        }
        Ok(Self { v, wf })
    }

    pub fn d(&self) -> usize {
        self.v.nrows()
    }
}

/// Normalisation N = Σw_j|f_j|² and geometry G = Σw_j[(f_j·𝟙)² − |f_j|²]/N,
/// the latter being Σw_j|f_j|²[d cos²φ_j − 1]/N written without angles.
pub fn geometry(funcs: &LinearFunctions) -> Result<(f64, f64)> {
    let mut n = 0.0;
    let mut g = 0.0;
    for (col, &w) in funcs.v.column_iter().zip(&funcs.wf) {
        let norm2 = col.norm_squared();
        let along = col.sum();
        n += w * norm2;
        g += w * (along * along - norm2);
    }
    if !(n > 0.0) {
        return Err(Error::InvalidInput("all weighted functions vanish".into()));
    }
    Ok((n, g / n))
}

/// h(J, G, d) = [1 + (d−2−G)J]/((1−J)[1 + (d−1)J]).
pub fn h_factor(j: f64, g: f64, d: usize) -> f64 {
    let d = d as f64;
    (1.0 + (d - 2.0 - g) * j) / ((1.0 - j) * (1.0 + (d - 1.0) * j))
}

/// Asymptotic error (N/(4μv))·h(J, G, d).
pub fn asymptotic_error(spec: &NetworkSpec, funcs: &LinearFunctions, mu: usize) -> Result<f64> {
    if funcs.d() != spec.d {
        return Err(Error::DimensionMismatch { expected: spec.d, got: funcs.d() });
    }
    if mu == 0 {
        return Err(Error::InvalidInput("μ must be at least 1".into()));
    }
    let (n, g) = geometry(funcs)?;
    Ok(n / (4.0 * mu as f64 * spec.v) * h_factor(spec.j, g, spec.d))
}

fn check_geometry(g: f64, d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidInput("need at least two sensors".into()));
    }
    if !(g > -1.0 && g < d as f64 - 1.0) {
        return Err(Error::InvalidInput(format!("G = {g} outside (−1, {})", d - 1)));
    }
    Ok(())
}

/// Correlation minimising h for geometry G.
///
/// Rationalising the numerator of [1 − √x]/(G + 2 − d) with
/// x = (G+1)(d−1−G)/(d−1) gives G/((d−1)(1 + √x)), which is regular at
/// G = d − 2 and reproduces the limit (d−2)/(2(d−1)) there.
pub fn j_opt(g: f64, d: usize) -> Result<f64> {
    check_geometry(g, d)?;
    let dm1 = d as f64 - 1.0;
    let x = (g + 1.0) * (dm1 - g) / dm1;
    Ok(g / (dm1 * (1.0 + x.sqrt())))
}

/// Positive γ of the two-qubit family whose J(γ) = (1−γ²)/(1+γ²) equals
/// j_opt(G, 2).
pub fn gamma_opt(g: f64) -> Result<f64> {
    check_geometry(g, 2)?;
    let s = (1.0 - g * g).sqrt();
    Ok(((1.0 + s - g) / (1.0 + s + g)).sqrt())
}

/// J(γ) = (1 − γ²)/(1 + γ²) for the two-qubit family.
pub fn gamma_to_j(gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    (1.0 - g2) / (1.0 + g2)
}

/// Local imaging scaling f(N, n̄, d) and its bound (1/n̄²)[π²/3 − f].
pub fn imaging_local_scaling(n: u32, nbar: f64, d: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidInput("N must be positive".into()));
    }
    if !(nbar > 0.0) || d == 0 {
        return Err(Error::InvalidInput("n̄ and d must be positive".into()));
    }
    let nf = n as f64;
    let df = d as f64;
    let a = nf * PI / nbar;
    let bracket = nf * PI * a.cos() - nbar * a.sin();
    let f = 4.0 * nbar.powi(3) * ((1.0 + df) * nf - nbar) * bracket * bracket / (PI * PI * nf.powi(6) * (1.0 + df).powi(2));
    Ok((f, (PI * PI / 3.0 - f) / (nbar * nbar)))
}

/// β minimising the global imaging bound.
pub fn imaging_global_beta_opt(d: usize) -> f64 {
    let df = d as f64;
    1.0 / (df + df.sqrt()).sqrt()
}

/// Global imaging bound (1/n̄²)[π²/3 − 4β²(1−dβ²)/(1+β²(1−d))]; the
/// optimal β is used when none is given.
pub fn imaging_global_bound(nbar: f64, d: usize, beta: Option<f64>) -> Result<f64> {
    if !(nbar > 0.0) || d == 0 {
        return Err(Error::InvalidInput("n̄ and d must be positive".into()));
    }
    let df = d as f64;
    let b = beta.unwrap_or_else(|| imaging_global_beta_opt(d));
    if !(b > 0.0 && b < 1.0 / df.sqrt()) {
        return Err(Error::InvalidInput(format!("β = {b} outside (0, 1/√d)")));
    }
    let b2 = b * b;
    Ok((PI * PI / 3.0 - 4.0 * b2 * (1.0 - df * b2) / (1.0 + b2 * (1.0 - df))) / (nbar * nbar))
}

/// Single-shot bound of the two-qubit γ family with identity functions and a
/// flat prior of width π/2 per parameter.
pub fn qubit_network_bound(gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    let pi2 = PI * PI;
    pi2 / 48.0 - 2.0 * (4.0 - PI).powi(2) * (2.0 - (4.0 - pi2) * g2 + 2.0 * g2 * g2) / (pi2 * pi2 * (1.0 + g2).powi(2))
}

/// Single-shot bound of the two-parameter imaging probe with two photons and
/// α = 1 on a π/2 prior box.
pub fn imaging_d2_bound() -> f64 {
    let pi2 = PI * PI;
    pi2 / 48.0 - 2.0 * (4.0 + 3.0 * pi2 + pi2 * pi2) / (3.0 * pi2 * pi2 * (2.0 + pi2))
}
