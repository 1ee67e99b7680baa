//! Probe states, generators, lossy encoding and the phase-group
//! decomposition that the rest of the library evaluates ψ(θ) with.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::fockspace::{
    self, hermitian_eig, kron_vec, single_mode_creation, single_mode_displacement, single_mode_squeeze, Axis,
    BlockBeamSplitter, CMatrix, CVector, ModeSpace, MultiModeOperator,
};
use crate::{Error, Result, C64};

/// Truncation leakage accepted for canonical probes.
pub const LEAKAGE_TOL: f64 = 1e-5;

pub const TSC_OPTIMAL: (f64, f64) = (1.2145, 0.960149);
/// Printed (r, α) of the intermediate cat; the state itself is fixed by
/// n̄ = 2 and Q = [`TSC_INTERMEDIATE_Q`], see [`refine_twin_cat`].
pub const TSC_INTERMEDIATE: (f64, f64) = (1.103, 1.090);
pub const TSC_INTERMEDIATE_Q: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProbeKind {
    Coherent,
    Noon,
    Tsv,
    Ses,
    TscOptimal,
    TscIntermediate,
    QubitGamma,
    ImagingGlobal,
    ImagingLocal,
    Lossy,
    Custom,
}

impl ProbeKind {
    pub const OPTICAL: [ProbeKind; 6] = [
        ProbeKind::Coherent,
        ProbeKind::Noon,
        ProbeKind::Tsv,
        ProbeKind::Ses,
        ProbeKind::TscOptimal,
        ProbeKind::TscIntermediate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProbeKind::Coherent => "coherent",
            ProbeKind::Noon => "noon",
            ProbeKind::Tsv => "tsv",
            ProbeKind::Ses => "ses",
            ProbeKind::TscOptimal => "tsc_optimal",
            ProbeKind::TscIntermediate => "tsc_intermediate",
            ProbeKind::QubitGamma => "qubit_gamma",
            ProbeKind::ImagingGlobal => "imaging_global",
            ProbeKind::ImagingLocal => "imaging_local",
            ProbeKind::Lossy => "lossy",
            ProbeKind::Custom => "custom",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        let all = [
            ProbeKind::Coherent,
            ProbeKind::Noon,
            ProbeKind::Tsv,
            ProbeKind::Ses,
            ProbeKind::TscOptimal,
            ProbeKind::TscIntermediate,
            ProbeKind::QubitGamma,
            ProbeKind::ImagingGlobal,
            ProbeKind::ImagingLocal,
            ProbeKind::Lossy,
        ];
        all.into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown probe '{name}'")))
    }

    /// Per-mode Fock dimension used for the canonical optical probes.
    pub fn default_cutoff(&self, nbar: f64) -> Option<usize> {
        match self {
            ProbeKind::Coherent => Some(21),
            ProbeKind::Noon => Some(nbar.round() as usize + 1),
            ProbeKind::Tsv | ProbeKind::TscOptimal | ProbeKind::TscIntermediate => Some(51),
            ProbeKind::Ses => Some(61),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum StateData {
    Pure(CVector),
    Mixed(CMatrix),
}

/// Normalised probe state with its resource budget n̄ = ⟨Σ_j N_j⟩.
#[derive(Clone, Debug)]
pub struct ProbeState {
    data: StateData,
    space: ModeSpace,
    nbar: f64,
    kind: ProbeKind,
    leakage: f64,
}

impl ProbeState {
    /// Normalises `psi` once and records its mean quanta.
    pub fn from_vector(psi: CVector, space: ModeSpace, kind: ProbeKind) -> Result<Self> {
        if psi.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: psi.len() });
        }
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidInput("zero state vector".into()));
        }
        let psi = psi.unscale(norm);
        let mut s = Self { data: StateData::Pure(psi), space, nbar: 0.0, kind, leakage: 0.0 };
        s.nbar = s.expect_diagonal(&total_quanta_diagonal(space));
        Ok(s)
    }

    /// Checks trace, Hermiticity and positivity before wrapping `rho`.
    pub fn from_density(rho: CMatrix, space: ModeSpace, kind: ProbeKind) -> Result<Self> {
        if rho.nrows() != space.dim() || rho.ncols() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: rho.nrows() });
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Numerical(format!("density matrix trace {tr}")));
        }
        let (vals, _) = hermitian_eig(&rho)?;
        if vals[0] < -1e-10 {
            return Err(Error::Numerical(format!("density matrix not PSD (min eigenvalue {:e})", vals[0])));
        }
        let mut s = Self { data: StateData::Mixed(rho), space, nbar: 0.0, kind, leakage: 0.0 };
        s.nbar = s.expect_diagonal(&total_quanta_diagonal(space));
        Ok(s)
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn space(&self) -> ModeSpace {
        self.space
    }

    pub fn nbar(&self) -> f64 {
        self.nbar
    }

    pub fn kind(&self) -> ProbeKind {
        self.kind
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Pure(_))
    }

    pub fn vector(&self) -> Option<&CVector> {
        match &self.data {
            StateData::Pure(v) => Some(v),
            StateData::Mixed(_) => None,
        }
    }

    /// Dense density matrix (built on demand for pure states).
    pub fn density(&self) -> CMatrix {
        match &self.data {
            StateData::Pure(v) => v * v.adjoint(),
            StateData::Mixed(m) => m.clone(),
        }
    }

    pub fn purity(&self) -> f64 {
        match &self.data {
            StateData::Pure(_) => 1.0,
            StateData::Mixed(m) => (m * m).trace().re,
        }
    }

    /// Probability of each number-basis state.
    pub fn populations(&self) -> Vec<f64> {
        match &self.data {
            StateData::Pure(v) => v.iter().map(|z| z.norm_sqr()).collect(),
            StateData::Mixed(m) => (0..m.nrows()).map(|i| m[(i, i)].re).collect(),
        }
    }

    /// ⟨D⟩ for an operator diagonal in the number basis.
    pub fn expect_diagonal(&self, diag: &[f64]) -> f64 {
        self.populations().iter().zip(diag).map(|(p, d)| p * d).sum()
    }

    /// Probability mass above cutoff − 2 total quanta produced by truncated
    /// exponentials. Exact finite-support constructions report zero.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    fn with_leakage(mut self) -> Self {
        let c = self.space.cutoff();
        self.leakage = self
            .populations()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.space.total_quanta(*i) + 2 > c)
            .map(|(_, p)| p)
            .sum();
        self
    }
}

fn total_quanta_diagonal(space: ModeSpace) -> Vec<f64> {
    (0..space.dim()).map(|i| space.total_quanta(i) as f64).collect()
}

fn vacuum(c: usize) -> CVector {
    let mut v = CVector::zeros(c);
    v[0] = C64::new(1.0, 0.0);
    v
}

fn squeezed_cat(c: usize, r: f64, alpha: f64) -> CVector {
    let v = vacuum(c);
    let cat = single_mode_displacement(c, C64::new(alpha, 0.0)) * &v
        + single_mode_displacement(c, C64::new(-alpha, 0.0)) * &v;
    single_mode_squeeze(c, C64::new(r, 0.0)) * cat
}

/// Per-mode (⟨n⟩, ⟨n²⟩) of the normalised squeezed cat.
fn cat_moments(r: f64, alpha: f64) -> (f64, f64) {
    let v = squeezed_cat(MAX_AUTO_CUTOFF, r, alpha);
    let norm = v.norm_squared();
    let (mut m1, mut m2) = (0.0, 0.0);
    for (n, z) in v.iter().enumerate() {
        let p = z.norm_sqr() / norm;
        m1 += p * n as f64;
        m2 += p * (n * n) as f64;
    }
    (m1, m2)
}

/// Solves n̄(r, α) = `nbar` and Q(r, α) = `q` for the twin squeezed cat by
/// Newton iteration from `start`.
pub fn refine_twin_cat(start: (f64, f64), nbar: f64, q: f64) -> Result<(f64, f64)> {
    let resid = |r: f64, a: f64| {
        let (m1, m2) = cat_moments(r, a);
        let n = 2.0 * m1;
        // Q = (⟨n1²⟩ − ⟨n1⟩²)/⟨n1⟩ − 1 for each arm.
        (n - nbar, (m2 - m1 * m1) / m1 - 1.0 - q)
    };
    let (mut r, mut a) = start;
    for _ in 0..50 {
        let (f1, f2) = resid(r, a);
        if f1.abs() < 1e-12 && f2.abs() < 1e-10 {
            return Ok((r, a));
        }
        let h = 1e-6;
        let (r1, r2) = resid(r + h, a);
        let (a1, a2) = resid(r, a + h);
        let (j11, j12, j21, j22) = ((r1 - f1) / h, (a1 - f1) / h, (r2 - f2) / h, (a2 - f2) / h);
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-14 {
            break;
        }
        r -= (j22 * f1 - j12 * f2) / det;
        a -= (j11 * f2 - j21 * f1) / det;
    }
    Err(Error::Numerical(format!("twin cat parameters did not converge for n̄ = {nbar}, Q = {q}")))
}

/// Largest per-mode cutoff tried when escalating past the default.
pub const MAX_AUTO_CUTOFF: usize = 81;

/// Canonical optical probe. Starts from the default cutoff and raises it in
/// steps of two until the leakage gate passes.
pub fn make_probe(kind: ProbeKind, nbar: f64) -> Result<ProbeState> {
    let mut cutoff = kind
        .default_cutoff(nbar)
        .ok_or_else(|| Error::InvalidInput(format!("'{}' is not an optical probe", kind.name())))?;
    loop {
        match make_probe_with_cutoff(kind, nbar, cutoff) {
            Err(Error::CutoffTooSmall { .. }) if cutoff + 2 <= MAX_AUTO_CUTOFF => cutoff += 2,
            other => return other,
        }
    }
}

/// Optical probe at an explicit per-mode cutoff. Rejects cutoffs whose
/// truncation leakage exceeds [`LEAKAGE_TOL`].
pub fn make_probe_with_cutoff(kind: ProbeKind, nbar: f64, cutoff: usize) -> Result<ProbeState> {
    if !(nbar > 0.0) {
        return Err(Error::InvalidInput(format!("nbar must be positive, got {nbar}")));
    }
    let fixed_two = matches!(kind, ProbeKind::Tsv | ProbeKind::Ses | ProbeKind::TscOptimal | ProbeKind::TscIntermediate);
    if fixed_two && (nbar - 2.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("probe '{}' is only defined for nbar = 2", kind.name())));
    }
    let space = ModeSpace::new(cutoff, 2)?;
    let c = cutoff;
    let psi = match kind {
        ProbeKind::Coherent => {
            let d = single_mode_displacement(c, C64::new(nbar.sqrt(), 0.0)) * vacuum(c);
            let bs = BlockBeamSplitter::new(space, PI / 2.0)?;
            bs.apply(&kron_vec(&d, &vacuum(c)), false)
        }
        ProbeKind::Noon => {
            let n = nbar.round();
            if (n - nbar).abs() > 1e-12 || n < 1.0 {
                return Err(Error::InvalidInput(format!("NOON needs integer nbar, got {nbar}")));
            }
            let n = n as usize;
            if n >= c {
                return Err(Error::CutoffTooSmall { leakage: 1.0, tol: LEAKAGE_TOL });
            }
            let mut v = CVector::zeros(space.dim());
            v[space.index(&[n, 0])] = C64::new(1.0, 0.0);
            v[space.index(&[0, n])] += C64::new(1.0, 0.0);
            v
        }
        ProbeKind::Tsv => {
            let s = single_mode_squeeze(c, C64::new((nbar / 2.0).sqrt().asinh(), 0.0)) * vacuum(c);
            kron_vec(&s, &s)
        }
        ProbeKind::Ses => {
            let s = single_mode_squeeze(c, C64::new((2.0 + 3f64.sqrt()).ln(), 0.0)) * vacuum(c);
            kron_vec(&s, &vacuum(c)) + kron_vec(&vacuum(c), &s)
        }
        ProbeKind::TscOptimal | ProbeKind::TscIntermediate => {
            let (r, a) = if kind == ProbeKind::TscOptimal {
                TSC_OPTIMAL
            } else {
                refine_twin_cat(TSC_INTERMEDIATE, 2.0, TSC_INTERMEDIATE_Q)?
            };
            let s = squeezed_cat(c, r, a);
            kron_vec(&s, &s)
        }
        _ => return Err(Error::InvalidInput(format!("'{}' is not an optical probe", kind.name()))),
    };
    let exact = kind == ProbeKind::Noon;
    let probe = ProbeState::from_vector(psi, space, kind)?;
    let probe = if exact { probe } else { probe.with_leakage() };
    if probe.leakage > LEAKAGE_TOL {
        return Err(Error::CutoffTooSmall { leakage: probe.leakage, tol: LEAKAGE_TOL });
    }
    Ok(probe)
}

/// Twin squeezed cat [S(r)(|α⟩+|−α⟩)]^⊗2 at a chosen cutoff.
pub fn make_twin_squeezed_cat(r: f64, alpha: f64, cutoff: usize) -> Result<ProbeState> {
    let space = ModeSpace::new(cutoff, 2)?;
    let s = squeezed_cat(cutoff, r, alpha);
    Ok(ProbeState::from_vector(kron_vec(&s, &s), space, ProbeKind::Custom)?.with_leakage())
}

/// Mandel Q and inter-mode J of a path-symmetric two-mode probe.
///
/// Also verifies 4ΔJ_z² = n̄(1+Q)(1−J) to 1e-5 relative.
pub fn correlations(probe: &ProbeState) -> Result<(f64, f64)> {
    let space = probe.space();
    if space.modes() != 2 {
        return Err(Error::InvalidInput("correlations need a two-mode probe".into()));
    }
    let pops = probe.populations();
    let (mut n1, mut n2, mut n1sq, mut n2sq, mut n12) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, p) in pops.iter().enumerate() {
        let a = space.occupation(i, 0) as f64;
        let b = space.occupation(i, 1) as f64;
        n1 += p * a;
        n2 += p * b;
        n1sq += p * a * a;
        n2sq += p * b * b;
        n12 += p * a * b;
    }
    if (n1 - n2).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("probe is not path-symmetric (n1 = {n1}, n2 = {n2})")));
    }
    let nbar = n1 + n2;
    let q = (4.0 * n1sq - nbar * (nbar + 2.0)) / (2.0 * nbar);
    let var1 = n1sq - n1 * n1;
    let j = (n12 - n1 * n2) / var1;
    let four_var_jz = (n1sq + n2sq - 2.0 * n12) - (n1 - n2).powi(2);
    let rhs = nbar * (1.0 + q) * (1.0 - j);
    if (four_var_jz - rhs).abs() > 1e-5 * four_var_jz.abs().max(1e-12) {
        return Err(Error::Numerical(format!("4ΔJz² = {four_var_jz} but n̄(1+Q)(1−J) = {rhs}")));
    }
    Ok((q, j))
}

#[derive(Clone, Debug)]
enum GenRepr {
    Diagonal(Vec<Vec<f64>>),
    Dense(Vec<CMatrix>),
}

/// Commuting Hermitian generators K₁..K_d of U(θ) = exp(−iK·θ).
#[derive(Clone, Debug)]
pub struct Generator {
    space: ModeSpace,
    repr: GenRepr,
}

impl Generator {
    /// Generators diagonal in the number basis, given by their diagonals.
    pub fn diagonal(space: ModeSpace, diagonals: Vec<Vec<f64>>) -> Result<Self> {
        if diagonals.is_empty() {
            return Err(Error::InvalidInput("at least one generator is required".into()));
        }
        for d in &diagonals {
            if d.len() != space.dim() {
                return Err(Error::DimensionMismatch { expected: space.dim(), got: d.len() });
            }
        }
        Ok(Self { space, repr: GenRepr::Diagonal(diagonals) })
    }

    /// General commuting Hermitian generators.
    pub fn new(ops: Vec<MultiModeOperator>) -> Result<Self> {
        let space = ops.first().ok_or_else(|| Error::InvalidInput("at least one generator is required".into()))?.space();
        let mut mats = Vec::with_capacity(ops.len());
        for op in ops {
            if op.space() != space {
                return Err(Error::InvalidInput("generators live on different spaces".into()));
            }
            let d = fockspace::hermiticity_defect(op.matrix());
            if d > fockspace::HERMITIAN_TOL {
                return Err(Error::NotHermitian(d));
            }
            mats.push(op.into_matrix());
        }
        let g = Self { space, repr: GenRepr::Dense(mats) };
        let c = g.max_commutator();
        if c > 1e-9 {
            return Err(Error::NonCommuting(c));
        }
        Ok(g)
    }

    /// J_z = (N₁ − N₂)/2 on two modes.
    pub fn jz(space: ModeSpace) -> Result<Self> {
        if space.modes() != 2 {
            return Err(Error::InvalidInput("J_z needs two modes".into()));
        }
        let d = (0..space.dim())
            .map(|i| 0.5 * (space.occupation(i, 0) as f64 - space.occupation(i, 1) as f64))
            .collect();
        Self::diagonal(space, vec![d])
    }

    /// One number operator N_j per listed mode.
    pub fn numbers(space: ModeSpace, modes: &[usize]) -> Result<Self> {
        let diags = modes.iter().map(|&m| fockspace::number_diagonal(space, m)).collect::<Result<_>>()?;
        Self::diagonal(space, diags)
    }

    /// K_i = σ_{z,i}/2 on every qubit, σ_z = diag(1, −1).
    pub fn qubit_network(space: ModeSpace) -> Result<Self> {
        if space.cutoff() != 2 {
            return Err(Error::InvalidInput("qubit generators need a qubit space".into()));
        }
        let diags = (0..space.modes())
            .map(|q| (0..space.dim()).map(|i| 0.5 - space.occupation(i, q) as f64).collect())
            .collect();
        Self::diagonal(space, diags)
    }

    /// N₁..N_d for the phase-imaging modes (mode 0 is the reference).
    pub fn imaging(space: ModeSpace) -> Result<Self> {
        let modes: Vec<usize> = (1..space.modes()).collect();
        Self::numbers(space, &modes)
    }

    pub fn space(&self) -> ModeSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        match &self.repr {
            GenRepr::Diagonal(d) => d.len(),
            GenRepr::Dense(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn diagonals(&self) -> Option<&[Vec<f64>]> {
        match &self.repr {
            GenRepr::Diagonal(d) => Some(d),
            GenRepr::Dense(_) => None,
        }
    }

    /// Dense matrix of K_k.
    pub fn matrix(&self, k: usize) -> Result<CMatrix> {
        match &self.repr {
            GenRepr::Diagonal(d) => {
                if self.space.dim() > fockspace::DENSE_MAX_DIM {
                    return Err(Error::MemoryBudget { dim: self.space.dim(), limit: fockspace::DENSE_MAX_DIM });
                }
                Ok(CMatrix::from_diagonal(&CVector::from_iterator(
                    d[k].len(),
                    d[k].iter().map(|&x| C64::new(x, 0.0)),
                )))
            }
            GenRepr::Dense(m) => Ok(m[k].clone()),
        }
    }

    /// K_k·v without forming a dense matrix in the diagonal case.
    pub fn apply(&self, k: usize, v: &CVector) -> CVector {
        match &self.repr {
            GenRepr::Diagonal(d) => CVector::from_iterator(v.len(), v.iter().zip(&d[k]).map(|(z, &x)| z * x)),
            GenRepr::Dense(m) => &m[k] * v,
        }
    }

    pub fn max_commutator(&self) -> f64 {
        match &self.repr {
            GenRepr::Diagonal(_) => 0.0,
            GenRepr::Dense(m) => {
                let mut worst: f64 = 0.0;
                for i in 0..m.len() {
                    for j in i + 1..m.len() {
                        worst = worst.max(fockspace::max_norm(&(&m[i] * &m[j] - &m[j] * &m[i])));
                    }
                }
                worst
            }
        }
    }

    /// Joint eigenbasis: columns and their eigenvalue tuples.
    fn joint_eigenbasis(&self) -> Result<(Option<CMatrix>, Vec<Vec<f64>>)> {
        match &self.repr {
            GenRepr::Diagonal(d) => {
                let n = self.space.dim();
                Ok((None, (0..n).map(|i| d.iter().map(|dk| dk[i]).collect()).collect()))
            }
            GenRepr::Dense(m) => {
                // Generic real combination separates joint eigenspaces.
                let coeffs = [1.0, 0.618_033_988_749_895, 0.414_213_562_373_095, 0.302_775_637_731_995];
                let mut comb = CMatrix::zeros(m[0].nrows(), m[0].ncols());
                for (k, mk) in m.iter().enumerate() {
                    comb += mk * C64::new(coeffs[k % coeffs.len()] / (1 + k / coeffs.len()) as f64, 0.0);
                }
                let (_, vecs) = hermitian_eig(&comb)?;
                let tuples = (0..vecs.ncols())
                    .map(|c| {
                        let v = vecs.column(c).into_owned();
                        m.iter().map(|mk| (v.adjoint() * mk * &v)[(0, 0)].re).collect()
                    })
                    .collect();
                Ok((Some(vecs), tuples))
            }
        }
    }
}

/// Unitary image exp(−iK·θ) ρ₀ exp(iK·θ). Never renormalises.
pub fn encode(probe: &ProbeState, gen: &Generator, theta: &[f64]) -> Result<ProbeState> {
    if theta.len() != gen.len() {
        return Err(Error::DimensionMismatch { expected: gen.len(), got: theta.len() });
    }
    if gen.space() != probe.space() {
        return Err(Error::InvalidInput("generator and probe live on different spaces".into()));
    }
    let n = probe.space().dim();
    let data = match (gen.diagonals(), probe.data()) {
        (Some(d), data) => {
            let phase: Vec<f64> = (0..n).map(|i| d.iter().zip(theta).map(|(dk, t)| dk[i] * t).sum()).collect();
            match data {
                StateData::Pure(v) => {
                    StateData::Pure(CVector::from_iterator(n, (0..n).map(|i| v[i] * C64::from_polar(1.0, -phase[i]))))
                }
                StateData::Mixed(m) => {
                    StateData::Mixed(CMatrix::from_fn(n, n, |i, j| m[(i, j)] * C64::from_polar(1.0, phase[j] - phase[i])))
                }
            }
        }
        (None, data) => {
            let mut h = CMatrix::zeros(n, n);
            for (k, t) in theta.iter().enumerate() {
                h += gen.matrix(k)? * C64::new(*t, 0.0);
            }
            let u = fockspace::expm_hermitian(&h, 1.0)?;
            match data {
                StateData::Pure(v) => StateData::Pure(&u * v),
                StateData::Mixed(m) => StateData::Mixed(&u * m * u.adjoint()),
            }
        }
    };
    Ok(ProbeState { data, ..probe.clone() })
}

/// Photon loss on mode 0 through a beam splitter of transmissivity η,
/// followed by the phase e^{−iN₁φ}.
pub fn lossy_encode(probe: &ProbeState, eta: f64, phi: f64) -> Result<ProbeState> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidInput(format!("transmissivity must lie in (0, 1], got {eta}")));
    }
    let psi = probe
        .vector()
        .ok_or_else(|| Error::InvalidInput("lossy encoding needs a pure input".into()))?;
    let space = probe.space();
    if space.modes() != 2 {
        return Err(Error::InvalidInput("lossy encoding needs a two-mode probe".into()));
    }
    let c = space.cutoff();
    let a = single_mode_creation(c).adjoint();
    let eta_n = CMatrix::from_diagonal(&CVector::from_iterator(c, (0..c).map(|n| C64::new(eta.powf(n as f64 / 2.0), 0.0))));
    let n = space.dim();
    let mut rho = CMatrix::zeros(n, n);
    let mut al = CMatrix::identity(c, c);
    let mut fact = 1.0;
    for l in 0..c {
        if l > 0 {
            al = &a * &al;
            fact *= l as f64;
        }
        let k_single = &eta_n * &al * C64::new(((1.0 - eta).powi(l as i32) / fact).sqrt(), 0.0);
        let k = fockspace::embed(space, 0, &k_single)?;
        let v = &k * psi;
        rho += &v * v.adjoint();
    }
    let lossy = ProbeState::from_density(rho, space, ProbeKind::Lossy)?;
    let gen = Generator::numbers(space, &[0])?;
    encode(&lossy, &gen, &[phi])
}

/// The two-photon input Σ_k c_k|k, 2−k⟩ that is optimal for η = 0.9.
pub fn lossy_optimal_input() -> Result<ProbeState> {
    let space = ModeSpace::new(3, 2)?;
    let mut v = CVector::zeros(space.dim());
    v[space.index(&[0, 2])] = C64::new(3.0 / 19f64.sqrt(), 0.0);
    v[space.index(&[2, 0])] = C64::new((10.0 / 19.0f64).sqrt(), 0.0);
    ProbeState::from_vector(v, space, ProbeKind::Lossy)
}

/// γ-family state on d qubits:
/// [(1−γ)(|0…0⟩+|1…1⟩) + γ(|0⟩+|1⟩)^⊗d] / √(2[1+(2^{d−1}−1)γ²]).
pub fn make_qubit_network(gamma: f64, d: usize) -> Result<ProbeState> {
    if d < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 sensors, got {d}")));
    }
    let space = ModeSpace::qubits(d)?;
    let n = space.dim();
    let mut v = CVector::from_element(n, C64::new(gamma, 0.0));
    v[0] += C64::new(1.0 - gamma, 0.0);
    v[n - 1] += C64::new(1.0 - gamma, 0.0);
    ProbeState::from_vector(v, space, ProbeKind::QubitGamma)
}

/// Inter-sensor correlation J(γ) = (1−γ²)/(1+(2^{d−1}−1)γ²).
pub fn qubit_network_correlation(gamma: f64, d: usize) -> f64 {
    let g2 = gamma * gamma;
    (1.0 - g2) / (1.0 + ((1u64 << (d - 1)) as f64 - 1.0) * g2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ImagingKind {
    /// α|n̄,0,…,0⟩ + Σ_j |0,…,n̄_j,…,0⟩, mode 0 being the reference.
    GlobalGnoon { alpha: f64 },
    /// Product of √(1−p)|0⟩ + √p|N⟩ on every mode, p = n̄/(N(d+1)).
    LocalProduct { n: usize },
}

pub fn make_imaging_probe(kind: ImagingKind, d: usize, nbar: f64) -> Result<ProbeState> {
    if d == 0 {
        return Err(Error::InvalidInput("need at least one imaged phase".into()));
    }
    match kind {
        ImagingKind::GlobalGnoon { alpha } => {
            let nb = nbar.round();
            if (nb - nbar).abs() > 1e-12 || nb < 1.0 {
                return Err(Error::InvalidInput(format!("invalid nbar {nbar} for a NOON-type probe")));
            }
            let nb = nb as usize;
            let space = ModeSpace::new(nb + 1, d + 1)?;
            let mut v = CVector::zeros(space.dim());
            for m in 0..=d {
                let mut occ = vec![0; d + 1];
                occ[m] = nb;
                v[space.index(&occ)] = C64::new(if m == 0 { alpha } else { 1.0 }, 0.0);
            }
            ProbeState::from_vector(v, space, ProbeKind::ImagingGlobal)
        }
        ImagingKind::LocalProduct { n } => {
            if n == 0 {
                return Err(Error::InvalidInput("local strategy needs N ≥ 1".into()));
            }
            let p = nbar / (n as f64 * (d + 1) as f64);
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidInput(format!("invalid nbar {nbar} for N = {n}, d = {d}")));
            }
            let c = n + 1;
            let space = ModeSpace::new(c, d + 1)?;
            let mut single = CVector::zeros(c);
            single[0] = C64::new((1.0 - p).sqrt(), 0.0);
            single[n] = C64::new(p.sqrt(), 0.0);
            let mut v = single.clone();
            for _ in 0..d {
                v = kron_vec(&v, &single);
            }
            ProbeState::from_vector(v, space, ProbeKind::ImagingLocal)
        }
    }
}

/// One phase group of a pure branch: the component v_g = P_g ψ of ψ in the
/// joint eigenspace of the generators with eigenvalue tuple `phases[g]`.
#[derive(Clone, Debug)]
pub struct BranchGroup {
    pub group: usize,
    pub vector: CVector,
}

/// ρ₀ = Σ_r w_r|ψ_r⟩⟨ψ_r| with every ψ_r split into phase groups, so that
/// ψ_r(θ) = Σ_g e^{−iλ_g·θ} v_g^r.
#[derive(Clone, Debug)]
pub struct Encoding {
    space: ModeSpace,
    phases: Vec<Vec<f64>>,
    weights: Vec<f64>,
    branches: Vec<Vec<BranchGroup>>,
}

impl Encoding {
    pub fn new(probe: &ProbeState, gen: &Generator) -> Result<Self> {
        if gen.space() != probe.space() {
            return Err(Error::InvalidInput("generator and probe live on different spaces".into()));
        }
        let (vecs, tuples) = gen.joint_eigenbasis()?;
        // Group basis columns by eigenvalue tuple.
        let mut keyed: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for (i, t) in tuples.iter().enumerate() {
            let key = t.iter().map(|x| (x * 1e8).round() as i64).collect();
            keyed.entry(key).or_default().push(i);
        }
        let groups: Vec<Vec<usize>> = keyed.into_values().collect();
        let phases: Vec<Vec<f64>> = groups
            .iter()
            .map(|cols| {
                let k = tuples[cols[0]].len();
                (0..k).map(|j| cols.iter().map(|&c| tuples[c][j]).sum::<f64>() / cols.len() as f64).collect()
            })
            .collect();

        let (weights, states): (Vec<f64>, Vec<CVector>) = match probe.data() {
            StateData::Pure(v) => (vec![1.0], vec![v.clone()]),
            StateData::Mixed(m) => {
                let (vals, vecs) = hermitian_eig(m)?;
                let mut w = Vec::new();
                let mut s = Vec::new();
                for (i, &p) in vals.iter().enumerate().rev() {
                    if p > 1e-14 {
                        w.push(p);
                        s.push(vecs.column(i).into_owned());
                    }
                }
                (w, s)
            }
        };

        let n = probe.space().dim();
        let branches = states
            .iter()
            .map(|psi| {
                let mut out = Vec::new();
                for (g, cols) in groups.iter().enumerate() {
                    let v = match &vecs {
                        None => {
                            let mut v = CVector::zeros(n);
                            for &i in cols {
                                v[i] = psi[i];
                            }
                            v
                        }
                        Some(vm) => {
                            let mut v = CVector::zeros(n);
                            for &c in cols {
                                let col = vm.column(c);
                                let amp = col.dotc(psi);
                                v += col * amp;
                            }
                            v
                        }
                    };
                    if v.norm_squared() > 1e-30 {
                        out.push(BranchGroup { group: g, vector: v });
                    }
                }
                out
            })
            .collect();
        Ok(Self { space: probe.space(), phases, weights, branches })
    }

    pub fn space(&self) -> ModeSpace {
        self.space
    }

    pub fn n_params(&self) -> usize {
        self.phases.first().map_or(0, |p| p.len())
    }

    /// Eigenvalue tuple of each phase group.
    pub fn phases(&self) -> &[Vec<f64>] {
        &self.phases
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn branches(&self) -> &[Vec<BranchGroup>] {
        &self.branches
    }

    pub fn is_pure(&self) -> bool {
        self.weights.len() == 1
    }

    /// ψ_r(θ) for branch r.
    pub fn branch_state(&self, r: usize, theta: &[f64]) -> CVector {
        let mut out = CVector::zeros(self.space.dim());
        for bg in &self.branches[r] {
            let ph: f64 = self.phases[bg.group].iter().zip(theta).map(|(l, t)| l * t).sum();
            out += &bg.vector * C64::from_polar(1.0, -ph);
        }
        out
    }

    /// Number of distinct phase groups actually populated.
    pub fn populated_groups(&self) -> usize {
        let mut seen = vec![false; self.phases.len()];
        for b in &self.branches {
            for bg in b {
                seen[bg.group] = true;
            }
        }
        seen.iter().filter(|s| **s).count()
    }
}

/// Jordan-Schwinger J_z as a dense operator, convenient for tests.
pub fn jz_operator(space: ModeSpace) -> Result<MultiModeOperator> {
    fockspace::jordan_schwinger(space, Axis::Z)
}
