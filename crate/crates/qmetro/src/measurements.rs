//! Measurement catalogue and likelihood evaluation.
//!
//! Catalogue POMs are "rotate then count": a pre-measurement unitary R is
//! applied to the encoded state, followed by a projective measurement in a
//! fixed basis {|e_k⟩}. The effects are R†|e_k⟩⟨e_k|R.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::fockspace::{
    self, apply_single_mode, hermitian_eig, single_mode_creation, single_mode_displacement, BlockBeamSplitter, CMatrix,
    CVector, ModeSpace,
};
use crate::probes::{Encoding, Generator, ProbeState};
use crate::{Error, Result, C64};

pub const COMPLETENESS_TOL: f64 = 1e-7;
const NEGATIVE_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PomName {
    CountingEven,
    CountingOdd,
    QuadraturePi8,
    UndoCountCoherent,
    Parity,
    QubitLocal,
}

impl PomName {
    pub const ALL: [PomName; 6] = [
        PomName::CountingEven,
        PomName::CountingOdd,
        PomName::QuadraturePi8,
        PomName::UndoCountCoherent,
        PomName::Parity,
        PomName::QubitLocal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PomName::CountingEven => "counting_even",
            PomName::CountingOdd => "counting_odd",
            PomName::QuadraturePi8 => "quadrature_pi8",
            PomName::UndoCountCoherent => "undo_count_coherent",
            PomName::Parity => "parity",
            PomName::QubitLocal => "qubit_local",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown POM '{name}'")))
    }
}

#[derive(Clone, Debug)]
enum Stage {
    /// Multiplies each basis amplitude by a phase.
    Phase(Vec<C64>),
    BeamSplitter { bs: BlockBeamSplitter, adjoint: bool },
    SingleMode { mode: usize, matrix: CMatrix },
}

#[derive(Clone, Debug)]
enum Readout {
    Computational,
    /// Per-mode orthonormal bases; outcome k is the tensor product of columns.
    Product(Vec<CMatrix>),
}

#[derive(Clone, Debug)]
enum Effects {
    Rotated { stages: Vec<Stage>, readout: Readout },
    /// Rank-one effects |c_k⟩⟨c_k| with an optional remainder I − Σ|c_k⟩⟨c_k|.
    Columns { cols: CMatrix, complement: bool },
}

/// Ordered measurement effects with outcome labels.
#[derive(Clone, Debug)]
pub struct Pom {
    space: ModeSpace,
    labels: Vec<Vec<f64>>,
    effects: Effects,
}

fn phase_stage(space: ModeSpace, mode: usize, angle: f64) -> Stage {
    Stage::Phase(
        (0..space.dim())
            .map(|i| C64::from_polar(1.0, -angle * space.occupation(i, mode) as f64))
            .collect(),
    )
}

fn jz_phase_stage(space: ModeSpace, angle: f64) -> Stage {
    Stage::Phase(
        (0..space.dim())
            .map(|i| {
                let jz = 0.5 * (space.occupation(i, 0) as f64 - space.occupation(i, 1) as f64);
                C64::from_polar(1.0, -angle * jz)
            })
            .collect(),
    )
}

fn require_two_modes(space: ModeSpace, name: PomName) -> Result<()> {
    if space.modes() != 2 || space.is_exact() {
        return Err(Error::InvalidInput(format!("'{}' needs two optical modes", name.name())));
    }
    Ok(())
}

/// Eigenbasis of X = (e^{iπ/8}a† + e^{−iπ/8}a)/√2 on one truncated mode.
fn quadrature_basis(cutoff: usize) -> Result<(Vec<f64>, CMatrix)> {
    let ad = single_mode_creation(cutoff);
    let x = (&ad * C64::from_polar(1.0, PI / 8.0) + ad.adjoint() * C64::from_polar(1.0, -PI / 8.0))
        * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let (vals, vecs) = hermitian_eig(&x)?;
    Ok((vals.iter().copied().collect(), vecs))
}

/// Catalogue POM; `undo_count_coherent` assumes the n̄ = 2 coherent probe.
pub fn catalog_pom(name: PomName, space: ModeSpace) -> Result<Pom> {
    match name {
        PomName::UndoCountCoherent => undo_count_coherent(space, 2f64.sqrt()),
        _ => catalog_pom_inner(name, space),
    }
}

fn catalog_pom_inner(name: PomName, space: ModeSpace) -> Result<Pom> {
    let count_labels = |space: ModeSpace| -> Vec<Vec<f64>> {
        (0..space.dim())
            .map(|i| vec![(space.occupation(i, 0) * space.occupation(i, 1)) as f64])
            .collect()
    };
    match name {
        PomName::CountingEven | PomName::CountingOdd | PomName::Parity => {
            require_two_modes(space, name)?;
            let angle = if name == PomName::CountingOdd { PI / 2.0 } else { PI / 4.0 };
            let stages = vec![
                phase_stage(space, 1, angle),
                Stage::BeamSplitter { bs: BlockBeamSplitter::new(space, PI / 2.0)?, adjoint: false },
            ];
            let labels = if name == PomName::Parity {
                (0..space.dim())
                    .map(|i| vec![if space.total_quanta(i) % 2 == 0 { 1.0 } else { -1.0 }])
                    .collect()
            } else {
                count_labels(space)
            };
            Ok(Pom { space, labels, effects: Effects::Rotated { stages, readout: Readout::Computational } })
        }
        PomName::QuadraturePi8 => {
            require_two_modes(space, name)?;
            let (xs, basis) = quadrature_basis(space.cutoff())?;
            let stages = vec![
                phase_stage(space, 0, -PI / 4.0),
                Stage::BeamSplitter { bs: BlockBeamSplitter::new(space, PI / 2.0)?, adjoint: false },
            ];
            let labels = (0..space.dim())
                .map(|i| vec![xs[space.occupation(i, 0)] * xs[space.occupation(i, 1)]])
                .collect();
            Ok(Pom { space, labels, effects: Effects::Rotated { stages, readout: Readout::Product(vec![basis.clone(), basis]) } })
        }
        PomName::QubitLocal => {
            if space.cutoff() != 2 || !space.is_exact() {
                return Err(Error::InvalidInput("'qubit_local' needs a qubit register".into()));
            }
            let s = std::f64::consts::FRAC_1_SQRT_2;
            // Columns ordered by σ_x eigenvalue: −1 then +1.
            let b = CMatrix::from_row_slice(2, 2, &[C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0)]);
            let labels = (0..space.dim())
                .map(|i| (0..space.modes()).map(|q| if space.occupation(i, q) == 0 { -1.0 } else { 1.0 }).collect())
                .collect();
            Ok(Pom {
                space,
                labels,
                effects: Effects::Rotated { stages: Vec::new(), readout: Readout::Product(vec![b; space.modes()]) },
            })
        }
        PomName::UndoCountCoherent => unreachable!(),
    }
}

/// Undo the coherent preparation and count: R = D₁(α)·U_BS†·e^{−iπJ_z}.
pub fn undo_count_coherent(space: ModeSpace, alpha: f64) -> Result<Pom> {
    require_two_modes(space, PomName::UndoCountCoherent)?;
    let stages = vec![
        jz_phase_stage(space, PI),
        Stage::BeamSplitter { bs: BlockBeamSplitter::new(space, PI / 2.0)?, adjoint: true },
        Stage::SingleMode { mode: 0, matrix: single_mode_displacement(space.cutoff(), C64::new(alpha, 0.0)) },
    ];
    let labels = (0..space.dim())
        .map(|i| vec![(space.occupation(i, 0) * space.occupation(i, 1)) as f64])
        .collect();
    Ok(Pom { space, labels, effects: Effects::Rotated { stages, readout: Readout::Computational } })
}

/// Projective measurement of the same single-qubit basis on every qubit.
pub fn qubit_product_pom(space: ModeSpace, basis: CMatrix, eigenvalues: [f64; 2]) -> Result<Pom> {
    if space.cutoff() != 2 || basis.nrows() != 2 || basis.ncols() != 2 {
        return Err(Error::InvalidInput("qubit product POM needs a qubit register and a 2×2 basis".into()));
    }
    let labels = (0..space.dim())
        .map(|i| (0..space.modes()).map(|q| eigenvalues[space.occupation(i, q)]).collect())
        .collect();
    let pom = Pom { space, labels, effects: Effects::Rotated { stages: Vec::new(), readout: Readout::Product(vec![basis; space.modes()]) } };
    pom.check_completeness()?;
    Ok(pom)
}

impl Pom {
    /// Rank-one effects |c_k⟩⟨c_k| from the columns of `cols`. With
    /// `complement`, the remainder I − Σ|c_k⟩⟨c_k| is appended as a last
    /// outcome labelled NaN.
    pub fn from_columns(space: ModeSpace, cols: CMatrix, labels: Vec<Vec<f64>>, complement: bool) -> Result<Self> {
        if cols.nrows() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: cols.nrows() });
        }
        if labels.len() != cols.ncols() {
            return Err(Error::DimensionMismatch { expected: cols.ncols(), got: labels.len() });
        }
        let mut labels = labels;
        if complement {
            let width = labels.first().map_or(1, |l| l.len());
            labels.push(vec![f64::NAN; width]);
        }
        let pom = Self { space, labels, effects: Effects::Columns { cols, complement } };
        pom.check_completeness()?;
        Ok(pom)
    }

    pub fn space(&self) -> ModeSpace {
        self.space
    }

    pub fn n_outcomes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Vec<f64>] {
        &self.labels
    }

    /// Number of rank-one outcomes (excludes a complement effect).
    fn n_rank_one(&self) -> usize {
        match &self.effects {
            Effects::Rotated { .. } => self.space.dim(),
            Effects::Columns { cols, .. } => cols.ncols(),
        }
    }

    fn has_complement(&self) -> bool {
        matches!(self.effects, Effects::Columns { complement: true, .. })
    }

    /// max |Σ_k E_k − I|, evaluated through the structure of the effects.
    pub fn completeness_defect(&self) -> f64 {
        match &self.effects {
            Effects::Rotated { stages, readout } => {
                let mut worst: f64 = 0.0;
                for st in stages {
                    if let Stage::SingleMode { matrix, .. } = st {
                        worst = worst.max(unitary_defect(matrix));
                    }
                }
                if let Readout::Product(bases) = readout {
                    for b in bases {
                        worst = worst.max(unitary_defect(b));
                    }
                }
                worst
            }
            Effects::Columns { cols, complement } => {
                let gram = cols.adjoint() * cols;
                let d = gram.nrows();
                let gram_defect = fockspace::max_norm(&(gram - CMatrix::identity(d, d)));
                if *complement || d == cols.nrows() {
                    gram_defect
                } else {
                    let n = cols.nrows();
                    fockspace::max_norm(&(cols * cols.adjoint() - CMatrix::identity(n, n)))
                }
            }
        }
    }

    pub fn check_completeness(&self) -> Result<()> {
        let d = self.completeness_defect();
        if d > COMPLETENESS_TOL {
            return Err(Error::Completeness(d));
        }
        Ok(())
    }

    /// ⟨e_k|R|ψ⟩ (or ⟨c_k|ψ⟩) for every rank-one outcome.
    pub fn amplitudes(&self, psi: &CVector) -> Result<CVector> {
        if psi.len() != self.space.dim() {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), got: psi.len() });
        }
        match &self.effects {
            Effects::Rotated { stages, readout } => {
                let mut v = psi.clone();
                for st in stages {
                    v = match st {
                        Stage::Phase(ph) => CVector::from_iterator(v.len(), v.iter().zip(ph).map(|(a, p)| a * p)),
                        Stage::BeamSplitter { bs, adjoint } => bs.apply(&v, *adjoint),
                        Stage::SingleMode { mode, matrix } => apply_single_mode(self.space, *mode, matrix, &v)?,
                    };
                }
                if let Readout::Product(bases) = readout {
                    for (m, b) in bases.iter().enumerate() {
                        v = apply_single_mode(self.space, m, &b.adjoint(), &v)?;
                    }
                }
                Ok(v)
            }
            Effects::Columns { cols, .. } => Ok(cols.adjoint() * psi),
        }
    }

    /// Born-rule probabilities for a (pure or mixed) state.
    pub fn probabilities(&self, state: &ProbeState) -> Result<Vec<f64>> {
        if state.space() != self.space {
            return Err(Error::InvalidInput("state and POM live on different spaces".into()));
        }
        let mut p = vec![0.0; self.n_outcomes()];
        let mut add = |psi: &CVector, w: f64| -> Result<()> {
            let amps = self.amplitudes(psi)?;
            for (k, a) in amps.iter().enumerate() {
                p[k] += w * a.norm_sqr();
            }
            if self.has_complement() {
                let seen: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                p[self.n_rank_one()] += w * (psi.norm_squared() - seen);
            }
            Ok(())
        };
        match state.vector() {
            Some(v) => add(v, 1.0)?,
            None => {
                let (vals, vecs) = hermitian_eig(&state.density())?;
                for (i, &w) in vals.iter().enumerate() {
                    if w > 1e-15 {
                        add(&vecs.column(i).into_owned(), w)?;
                    }
                }
            }
        }
        clamp_probabilities(&mut p)?;
        Ok(p)
    }

    /// Dense effect matrices, for small spaces and tests.
    pub fn effect_matrices(&self) -> Result<Vec<CMatrix>> {
        let n = self.space.dim();
        if n > 1024 {
            return Err(Error::MemoryBudget { dim: n, limit: 1024 });
        }
        let mut out = Vec::with_capacity(self.n_outcomes());
        // Row k of the amplitude map is ⟨e_k|R, so E_k = R†|e_k⟩⟨e_k|R.
        let mut rows = CMatrix::zeros(self.n_rank_one(), n);
        for j in 0..n {
            let mut e = CVector::zeros(n);
            e[j] = C64::new(1.0, 0.0);
            rows.set_column(j, &self.amplitudes(&e)?);
        }
        for k in 0..self.n_rank_one() {
            let r = rows.row(k).adjoint();
            out.push(&r * r.adjoint());
        }
        if self.has_complement() {
            let sum = out.iter().fold(CMatrix::zeros(n, n), |acc, e| acc + e);
            out.push(CMatrix::identity(n, n) - sum);
        }
        Ok(out)
    }
}

fn unitary_defect(m: &CMatrix) -> f64 {
    let n = m.ncols();
    fockspace::max_norm(&(m.adjoint() * m - CMatrix::identity(n, n)))
}

fn clamp_probabilities(p: &mut [f64]) -> Result<()> {
    for x in p.iter_mut() {
        if *x < 0.0 {
            if *x < -NEGATIVE_CLAMP {
                return Err(Error::NegativeProbability(*x));
            }
            *x = 0.0;
        }
    }
    Ok(())
}

/// p(m|θ) for an encoded probe and a POM, evaluated through precomputed
/// overlaps O^r_{k,g} = ⟨e_k|R|v_g^r⟩:
/// p(k|θ) = Σ_r w_r |Σ_g O^r_{k,g} e^{−iλ_g·θ}|².
#[derive(Clone, Debug)]
pub struct LikelihoodModel {
    phases: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// Per branch: group ids and the overlap matrix (outcomes × groups).
    overlaps: Vec<(Vec<usize>, CMatrix)>,
    /// Outcomes with a nonzero overlap in some branch.
    active: Vec<usize>,
    n_outcomes: usize,
    complement: bool,
    labels: Vec<Vec<f64>>,
}

impl LikelihoodModel {
    pub fn new(encoding: &Encoding, pom: &Pom) -> Result<Self> {
        if encoding.space() != pom.space() {
            return Err(Error::InvalidInput("encoding and POM live on different spaces".into()));
        }
        pom.check_completeness()?;
        let k = pom.n_rank_one();
        let mut overlaps = Vec::with_capacity(encoding.branches().len());
        let mut used = vec![false; k];
        for branch in encoding.branches() {
            let mut o = CMatrix::zeros(k, branch.len());
            let mut ids = Vec::with_capacity(branch.len());
            for (c, bg) in branch.iter().enumerate() {
                let a = pom.amplitudes(&bg.vector)?;
                for (row, z) in a.iter().enumerate() {
                    if z.norm_sqr() > 1e-28 {
                        used[row] = true;
                        o[(row, c)] = *z;
                    }
                }
                ids.push(bg.group);
            }
            overlaps.push((ids, o));
        }
        let active = (0..k).filter(|&i| used[i]).collect::<Vec<_>>();
        // Compress to active rows.
        let overlaps = overlaps
            .into_iter()
            .map(|(ids, o)| {
                let mut c = CMatrix::zeros(active.len(), o.ncols());
                for (r, &row) in active.iter().enumerate() {
                    c.set_row(r, &o.row(row));
                }
                (ids, c)
            })
            .collect();
        Ok(Self {
            phases: encoding.phases().to_vec(),
            weights: encoding.weights().to_vec(),
            overlaps,
            active,
            n_outcomes: pom.n_outcomes(),
            complement: pom.has_complement(),
            labels: pom.labels().to_vec(),
        })
    }

    pub fn from_probe(probe: &ProbeState, gen: &Generator, pom: &Pom) -> Result<Self> {
        Self::new(&Encoding::new(probe, gen)?, pom)
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn n_params(&self) -> usize {
        self.phases.first().map_or(0, |p| p.len())
    }

    pub fn labels(&self) -> &[Vec<f64>] {
        &self.labels
    }

    /// Outcomes that can occur for some θ (others have p ≡ 0).
    pub fn active_outcomes(&self) -> Vec<usize> {
        let mut a = self.active.clone();
        if self.complement {
            a.push(self.n_outcomes - 1);
        }
        a
    }

    /// p(k|θ) for all outcomes, unclamped.
    pub fn raw(&self, theta: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_outcomes];
        for ((ids, o), &w) in self.overlaps.iter().zip(&self.weights) {
            let ph: Vec<C64> = ids
                .iter()
                .map(|&g| C64::from_polar(1.0, -self.phases[g].iter().zip(theta).map(|(l, t)| l * t).sum::<f64>()))
                .collect();
            for (r, &row) in self.active.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (c, z) in ph.iter().enumerate() {
                    acc += o[(r, c)] * z;
                }
                p[row] += w * acc.norm_sqr();
            }
        }
        if self.complement {
            let seen: f64 = p.iter().sum();
            p[self.n_outcomes - 1] = 1.0 - seen;
        }
        p
    }

    /// Clamped p(k|θ), failing on completeness or negativity violations.
    pub fn probabilities(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), got: theta.len() });
        }
        let mut p = self.raw(theta);
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > COMPLETENESS_TOL {
            return Err(Error::Completeness((total - 1.0).abs()));
        }
        clamp_probabilities(&mut p)?;
        Ok(p)
    }
}

/// Outcome-major table p(k|θ_t) over a list of grid points.
#[derive(Clone, Debug)]
pub struct LikelihoodTable {
    n_outcomes: usize,
    n_points: usize,
    data: Vec<f64>,
}

impl LikelihoodTable {
    pub fn build(model: &LikelihoodModel, points: &[Vec<f64>]) -> Result<Self> {
        let n_outcomes = model.n_outcomes();
        let n_points = points.len();
        let mut data = vec![0.0; n_outcomes * n_points];
        for (t, th) in points.iter().enumerate() {
            let p = model.probabilities(th)?;
            for (k, v) in p.into_iter().enumerate() {
                data[k * n_points + t] = v;
            }
        }
        Ok(Self { n_outcomes, n_points, data })
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// p(k|θ_t) over all grid points t.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_points..(k + 1) * self.n_points]
    }

    pub fn get(&self, k: usize, t: usize) -> f64 {
        self.data[k * self.n_points + t]
    }

    /// Distribution over outcomes at grid point t.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.n_outcomes).map(|k| self.get(k, t)).collect()
    }

    /// As a dense outcomes × points matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_outcomes, self.n_points, |k, t| self.get(k, t))
    }
}

/// p(m|θ) for a probe, generators and POM over a list of points.
pub fn likelihood_table(probe: &ProbeState, gen: &Generator, pom: &Pom, points: &[Vec<f64>]) -> Result<LikelihoodTable> {
    let model = LikelihoodModel::from_probe(probe, gen, pom)?;
    LikelihoodTable::build(&model, points)
}
