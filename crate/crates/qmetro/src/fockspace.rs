//! Truncated bosonic-mode and qubit operator algebra.
//!
//! Basis ordering is the Kronecker order: mode 0 is the most significant
//! digit, so `index(&[n0, n1]) = n0 * cutoff + n1`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result, C64};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest total dimension accepted for state vectors by default.
pub const DEFAULT_MAX_DIM: usize = 1 << 16;
/// Largest dimension for which dense operators are built.
pub const DENSE_MAX_DIM: usize = 4096;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-8;

/// Tensor product of `modes` identical truncated Fock spaces (or qubits).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeSpace {
    cutoff: usize,
    modes: usize,
    exact: bool,
}

impl ModeSpace {
    /// Truncated bosonic modes with per-mode dimension `cutoff`.
    pub fn new(cutoff: usize, modes: usize) -> Result<Self> {
        Self::with_budget(cutoff, modes, DEFAULT_MAX_DIM)
    }

    pub fn with_budget(cutoff: usize, modes: usize, max_dim: usize) -> Result<Self> {
        if cutoff < 2 {
            return Err(Error::InvalidInput(format!("cutoff must be at least 2, got {cutoff}")));
        }
        if modes == 0 {
            return Err(Error::InvalidInput("at least one mode is required".into()));
        }
        let dim = checked_pow(cutoff, modes).ok_or(Error::MemoryBudget { dim: usize::MAX, limit: max_dim })?;
        if dim > max_dim {
            return Err(Error::MemoryBudget { dim, limit: max_dim });
        }
        Ok(Self { cutoff, modes, exact: false })
    }

    /// `n` two-level systems. No truncation is involved.
    pub fn qubits(n: usize) -> Result<Self> {
        let mut s = Self::new(2, n)?;
        s.exact = true;
        Ok(s)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Whether the space is a qubit register (no Fock truncation).
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn dim(&self) -> usize {
        self.cutoff.pow(self.modes as u32)
    }

    pub fn index(&self, occupations: &[usize]) -> usize {
        occupations.iter().fold(0, |acc, &n| acc * self.cutoff + n)
    }

    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.modes];
        for slot in occ.iter_mut().rev() {
            *slot = index % self.cutoff;
            index /= self.cutoff;
        }
        occ
    }

    pub fn occupation(&self, index: usize, mode: usize) -> usize {
        (index / self.cutoff.pow((self.modes - 1 - mode) as u32)) % self.cutoff
    }

    pub fn total_quanta(&self, index: usize) -> usize {
        self.occupations(index).iter().sum()
    }

    /// Basis states unaffected by truncation artefacts of ladder operators.
    pub fn is_truncation_safe(&self, index: usize) -> bool {
        self.exact || self.total_quanta(index) + 3 <= self.cutoff
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.modes {
            return Err(Error::ModeOutOfRange { mode, modes: self.modes });
        }
        Ok(())
    }

    fn check_dense(&self) -> Result<()> {
        if self.dim() > DENSE_MAX_DIM {
            return Err(Error::MemoryBudget { dim: self.dim(), limit: DENSE_MAX_DIM });
        }
        Ok(())
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

/// Dense operator on a [`ModeSpace`].
#[derive(Clone, Debug)]
pub struct MultiModeOperator {
    matrix: CMatrix,
    space: ModeSpace,
    hermitian: bool,
}

impl MultiModeOperator {
    pub fn new(matrix: CMatrix, space: ModeSpace) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: matrix.nrows() });
        }
        Ok(Self { matrix, space, hermitian: false })
    }

    /// Wraps a matrix after checking Hermiticity to [`HERMITIAN_TOL`].
    pub fn hermitian(matrix: CMatrix, space: ModeSpace) -> Result<Self> {
        let mut op = Self::new(matrix, space)?;
        let defect = hermiticity_defect(&op.matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn space(&self) -> ModeSpace {
        self.space
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Diagonal entries when the operator is diagonal in the number basis.
    pub fn diagonal_if_diagonal(&self, tol: f64) -> Option<Vec<f64>> {
        let n = self.matrix.nrows();
        for j in 0..n {
            for i in 0..n {
                if i != j && self.matrix[(i, j)].norm() > tol {
                    return None;
                }
            }
        }
        Some((0..n).map(|i| self.matrix[(i, i)].re).collect())
    }

    /// max |U†U − I| over truncation-safe basis states.
    pub fn unitarity_defect(&self) -> f64 {
        let u = &self.matrix;
        let safe: Vec<usize> = (0..self.space.dim()).filter(|&i| self.space.is_truncation_safe(i)).collect();
        let mut worst: f64 = 0.0;
        for &j in &safe {
            for &i in &safe {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..u.nrows() {
                    acc += u[(k, i)].conj() * u[(k, j)];
                }
                if i == j {
                    acc -= C64::new(1.0, 0.0);
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..=j.min(m.nrows() - 1) {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn identity(space: ModeSpace) -> Result<MultiModeOperator> {
    space.check_dense()?;
    MultiModeOperator::hermitian(CMatrix::identity(space.dim(), space.dim()), space)
}

/// Single-mode a† of dimension `cutoff`.
pub fn single_mode_creation(cutoff: usize) -> CMatrix {
    let mut m = CMatrix::zeros(cutoff, cutoff);
    for n in 0..cutoff - 1 {
        m[(n + 1, n)] = C64::new(((n + 1) as f64).sqrt(), 0.0);
    }
    m
}

/// Embeds a single-mode matrix at `mode`, identity elsewhere.
pub fn embed(space: ModeSpace, mode: usize, single: &CMatrix) -> Result<CMatrix> {
    space.check_mode(mode)?;
    space.check_dense()?;
    let c = space.cutoff();
    if single.nrows() != c || single.ncols() != c {
        return Err(Error::DimensionMismatch { expected: c, got: single.nrows() });
    }
    let left = c.pow(mode as u32);
    let right = c.pow((space.modes() - mode - 1) as u32);
    let out = kron(&CMatrix::identity(left, left), single);
    Ok(kron(&out, &CMatrix::identity(right, right)))
}

pub fn creation(space: ModeSpace, mode: usize) -> Result<MultiModeOperator> {
    MultiModeOperator::new(embed(space, mode, &single_mode_creation(space.cutoff()))?, space)
}

pub fn annihilation(space: ModeSpace, mode: usize) -> Result<MultiModeOperator> {
    MultiModeOperator::new(embed(space, mode, &single_mode_creation(space.cutoff()).adjoint())?, space)
}

pub fn number(space: ModeSpace, mode: usize) -> Result<MultiModeOperator> {
    let diag = number_diagonal(space, mode)?;
    space.check_dense()?;
    let m = CMatrix::from_diagonal(&CVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0))));
    MultiModeOperator::hermitian(m, space)
}

/// Diagonal of N_mode in the number basis, without building a matrix.
pub fn number_diagonal(space: ModeSpace, mode: usize) -> Result<Vec<f64>> {
    space.check_mode(mode)?;
    Ok((0..space.dim()).map(|i| space.occupation(i, mode) as f64).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Two-mode angular momentum components J_x, J_y, J_z.
pub fn jordan_schwinger(space: ModeSpace, axis: Axis) -> Result<MultiModeOperator> {
    if space.modes() != 2 {
        return Err(Error::InvalidInput(format!("Jordan-Schwinger map needs 2 modes, got {}", space.modes())));
    }
    let a1d = creation(space, 0)?.into_matrix();
    let a2d = creation(space, 1)?.into_matrix();
    let a1 = a1d.adjoint();
    let a2 = a2d.adjoint();
    let half = C64::new(0.5, 0.0);
    let m = match axis {
        Axis::X => (&a1d * &a2 + &a1 * &a2d) * half,
        Axis::Y => (&a1 * &a2d - &a1d * &a2) * C64::new(0.0, 0.5),
        Axis::Z => (&a1d * &a1 - &a2d * &a2) * half,
    };
    MultiModeOperator::hermitian(m, space)
}

/// exp(−i·angle·J_x) applied block by block over fixed total photon number.
///
/// J_x conserves N₁+N₂ even after truncation, so each block exponential is
/// exact and the result equals the dense truncated exponential.
#[derive(Clone, Debug)]
pub struct BlockBeamSplitter {
    space: ModeSpace,
    blocks: Vec<(Vec<usize>, CMatrix)>,
}

impl BlockBeamSplitter {
    pub fn new(space: ModeSpace, angle: f64) -> Result<Self> {
        if space.modes() != 2 {
            return Err(Error::InvalidInput("beam splitter needs 2 modes".into()));
        }
        let c = space.cutoff();
        let mut blocks = Vec::with_capacity(2 * c - 1);
        for total in 0..(2 * c - 1) {
            let lo = total.saturating_sub(c - 1);
            let hi = total.min(c - 1);
            let n1s: Vec<usize> = (lo..=hi).collect();
            let k = n1s.len();
            let mut jx = DMatrix::<f64>::zeros(k, k);
            for p in 0..k.saturating_sub(1) {
                let n1 = n1s[p] as f64;
                let v = 0.5 * ((n1 + 1.0) * (total as f64 - n1)).sqrt();
                jx[(p + 1, p)] = v;
                jx[(p, p + 1)] = v;
            }
            let eig = SymmetricEigen::new(jx);
            let mut u = CMatrix::zeros(k, k);
            for (q, &lam) in eig.eigenvalues.iter().enumerate() {
                let ph = C64::from_polar(1.0, -angle * lam);
                for i in 0..k {
                    for j in 0..k {
                        u[(i, j)] += eig.eigenvectors[(i, q)] * eig.eigenvectors[(j, q)] * ph;
                    }
                }
            }
            let idx = n1s.iter().map(|&n1| space.index(&[n1, total - n1])).collect();
            blocks.push((idx, u));
        }
        Ok(Self { space, blocks })
    }

    pub fn space(&self) -> ModeSpace {
        self.space
    }

    /// U·v, or U†·v when `adjoint`.
    pub fn apply(&self, v: &CVector, adjoint: bool) -> CVector {
        let mut out = CVector::zeros(v.len());
        for (idx, u) in &self.blocks {
            for (r, &i) in idx.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (s, &j) in idx.iter().enumerate() {
                    let e = if adjoint { u[(s, r)].conj() } else { u[(r, s)] };
                    acc += e * v[j];
                }
                out[i] = acc;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        self.space.check_dense()?;
        let n = self.space.dim();
        let mut m = CMatrix::zeros(n, n);
        for (idx, u) in &self.blocks {
            for (r, &i) in idx.iter().enumerate() {
                for (s, &j) in idx.iter().enumerate() {
                    m[(i, j)] = u[(r, s)];
                }
            }
        }
        Ok(m)
    }
}

/// 50:50 beam splitter U_BS = exp(−i(π/2)J_x).
pub fn beam_splitter(space: ModeSpace) -> Result<MultiModeOperator> {
    let bs = BlockBeamSplitter::new(space, std::f64::consts::FRAC_PI_2)?;
    MultiModeOperator::new(bs.to_dense()?, space)
}

/// exp(−iJ_zθ), diagonal in the number basis.
pub fn phase_shift_diff(space: ModeSpace, theta: f64) -> Result<MultiModeOperator> {
    if space.modes() != 2 {
        return Err(Error::InvalidInput("phase_shift_diff needs 2 modes".into()));
    }
    space.check_dense()?;
    let n = space.dim();
    let d = CVector::from_iterator(
        n,
        (0..n).map(|i| {
            let jz = 0.5 * (space.occupation(i, 0) as f64 - space.occupation(i, 1) as f64);
            C64::from_polar(1.0, -jz * theta)
        }),
    );
    MultiModeOperator::new(CMatrix::from_diagonal(&d), space)
}

/// Single-mode D(α) = exp(α a† − α* a) of dimension `cutoff`.
pub fn single_mode_displacement(cutoff: usize, alpha: C64) -> CMatrix {
    let ad = single_mode_creation(cutoff);
    let a = ad.adjoint();
    expm(&(ad * alpha - a * alpha.conj()))
}

/// Single-mode S(ζ) = exp(½(ζ* a² − ζ a†²)) of dimension `cutoff`.
pub fn single_mode_squeeze(cutoff: usize, zeta: C64) -> CMatrix {
    let ad = single_mode_creation(cutoff);
    let a = ad.adjoint();
    let gen = (&a * &a) * zeta.conj() - (&ad * &ad) * zeta;
    expm(&(gen * C64::new(0.5, 0.0)))
}

pub fn displacement(space: ModeSpace, mode: usize, alpha: C64) -> Result<MultiModeOperator> {
    MultiModeOperator::new(embed(space, mode, &single_mode_displacement(space.cutoff(), alpha))?, space)
}

pub fn squeeze(space: ModeSpace, mode: usize, zeta: C64) -> Result<MultiModeOperator> {
    MultiModeOperator::new(embed(space, mode, &single_mode_squeeze(space.cutoff(), zeta))?, space)
}

/// 2×2 Pauli matrix with σ_z = diag(1, −1).
pub fn pauli(axis: Axis) -> CMatrix {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match axis {
        Axis::X => CMatrix::from_row_slice(2, 2, &[o, one, one, o]),
        Axis::Y => CMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
        Axis::Z => CMatrix::from_row_slice(2, 2, &[one, o, o, -one]),
    }
}

/// Pauli operator acting on one qubit of a register.
pub fn pauli_on(space: ModeSpace, qubit: usize, axis: Axis) -> Result<MultiModeOperator> {
    if space.cutoff() != 2 {
        return Err(Error::InvalidInput("Pauli operators need a qubit space".into()));
    }
    MultiModeOperator::hermitian(embed(space, qubit, &pauli(axis))?, space)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[i * b.len() + j] = a[i] * b[j];
        }
    }
    out
}

/// General matrix exponential (scaling and squaring with Padé).
pub fn expm(a: &CMatrix) -> CMatrix {
    a.clone().exp()
}

/// exp(−i·t·H) for Hermitian H through its eigendecomposition.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eig(h)?;
    let d = CVector::from_iterator(vals.len(), vals.iter().map(|&l| C64::from_polar(1.0, -t * l)));
    Ok(&vecs * CMatrix::from_diagonal(&d) * vecs.adjoint())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eig(a: &CMatrix) -> Result<(DVector<f64>, CMatrix)> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    let scale = a.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let defect = hermiticity_defect(a);
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian(defect));
    }
    // Rows that vanish identically (sectors a probe never populates) are
    // split off first: nalgebra's complex Householder step returns NaN on
    // them. Entries below scale·1e-150 count as zero.
    let floor = scale * 1e-150;
    let sym = ((a + a.adjoint()) * C64::new(0.5, 0.0)).map(|z| if z.norm() < floor { C64::new(0.0, 0.0) } else { z });
    let n = a.nrows();
    let live: Vec<usize> = (0..n).filter(|&i| sym.row(i).iter().any(|z| z.norm() > 0.0)).collect();
    let sub = sym.select_rows(&live).select_columns(&live);
    let eig = SymmetricEigen::new(sub);
    if eig.eigenvalues.iter().any(|x| !x.is_finite()) || eig.eigenvectors.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("Hermitian eigendecomposition produced non-finite values".into()));
    }
    // Eigenpairs as (value, Some(sub column)) or (0, None) for a dead row.
    let mut pairs: Vec<(f64, Option<usize>, usize)> = (0..live.len()).map(|k| (eig.eigenvalues[k], Some(k), 0)).collect();
    let mut is_live = vec![false; n];
    for &i in &live {
        is_live[i] = true;
    }
    pairs.extend((0..n).filter(|&i| !is_live[i]).map(|i| (0.0, None, i)));
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let vals = DVector::from_iterator(n, pairs.iter().map(|p| p.0));
    let mut vecs = CMatrix::zeros(n, n);
    for (k, &(_, col, dead)) in pairs.iter().enumerate() {
        match col {
            Some(c) => {
                for (r, &i) in live.iter().enumerate() {
                    vecs[(i, k)] = eig.eigenvectors[(r, c)];
                }
            }
            None => vecs[(dead, k)] = C64::new(1.0, 0.0),
        }
    }
    Ok((vals, vecs))
}

pub fn hermitian_eig_op(a: &MultiModeOperator) -> Result<(DVector<f64>, CMatrix)> {
    hermitian_eig(a.matrix())
}

/// Maximum-norm of a matrix.
pub fn max_norm(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Applies a single-mode matrix to `mode` of a state vector without
/// forming the embedded operator.
pub fn apply_single_mode(space: ModeSpace, mode: usize, m: &CMatrix, v: &CVector) -> Result<CVector> {
    space.check_mode(mode)?;
    let c = space.cutoff();
    if m.nrows() != c || m.ncols() != c {
        return Err(Error::DimensionMismatch { expected: c, got: m.nrows() });
    }
    if v.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: v.len() });
    }
    let stride = c.pow((space.modes() - 1 - mode) as u32);
    let block = stride * c;
    let mut out = CVector::zeros(v.len());
    for base in (0..v.len()).step_by(block) {
        for off in 0..stride {
            for r in 0..c {
                let mut acc = C64::new(0.0, 0.0);
                for s in 0..c {
                    acc += m[(r, s)] * v[base + off + s * stride];
                }
                out[base + off + r * stride] = acc;
            }
        }
    }
    Ok(out)
}
