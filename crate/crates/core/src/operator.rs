//! Dense operator algebra on composite Hilbert spaces.
//!
//! Tensor factors are ordered left to right and flattened row-major, so for a
//! space with factor dimensions `[d_0, d_1, ..., d_{k-1}]` the basis state
//! `|i_0 i_1 ... i_{k-1}>` sits at index `((i_0 d_1 + i_1) d_2 + ...)`. This is
//! the ordering produced by the Kronecker product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance for the Hermiticity check on construction.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Absolute tolerance on the trace of a density matrix.
pub const TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated in a density matrix.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Tolerance on `||U U^dagger - I||_F` for unitaries.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Default eigenvalue floor used when taking logarithms.
pub const LOG_FLOOR: f64 = 1e-14;

#[inline]
pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Ordered list of tensor factor dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompositeSpace {
    factor_dims: Vec<usize>,
}

impl CompositeSpace {
    pub fn new(factor_dims: Vec<usize>) -> Result<Self> {
        if factor_dims.is_empty() {
            return Err(Error::InvalidArgument(
                "composite space needs at least one factor".into(),
            ));
        }
        if let Some(pos) = factor_dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "factor {pos} has dimension 0"
            )));
        }
        Ok(Self { factor_dims })
    }

    /// A space with a single factor of dimension `dim`.
    pub fn single(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            factor_dims: vec![dim],
        }
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn num_factors(&self) -> usize {
        self.factor_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.factor_dims.iter().product()
    }

    /// The space `self ⊗ other`.
    pub fn tensor(&self, other: &CompositeSpace) -> CompositeSpace {
        let mut dims = self.factor_dims.clone();
        dims.extend_from_slice(&other.factor_dims);
        CompositeSpace { factor_dims: dims }
    }

    /// Flattened view with a single factor of the same total dimension.
    pub fn flattened(&self) -> CompositeSpace {
        CompositeSpace::single(self.total_dim())
    }
}

fn check_square(space: &CompositeSpace, entries: &CMatrix) -> Result<()> {
    let d = space.total_dim();
    if entries.nrows() != d || entries.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but space {:?} has total dimension {d}",
            entries.nrows(),
            entries.ncols(),
            space.factor_dims()
        )));
    }
    Ok(())
}

/// Locate the worst violation of `A = A^dagger`, relative to the largest entry.
fn hermiticity_violation(m: &CMatrix) -> Option<(usize, usize, f64)> {
    let scale = m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return None;
    }
    let n = m.nrows();
    let mut worst = (0, 0, 0.0);
    for i in 0..n {
        for j in i..n {
            let dev = (m[(i, j)] - m[(j, i)].conj()).norm() / scale;
            if dev > worst.2 {
                worst = (i, j, dev);
            }
        }
    }
    (worst.2 > HERMITICITY_TOL).then_some(worst)
}

fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

/// Dense Hermitian operator on a composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    space: CompositeSpace,
    entries: CMatrix,
}

impl HermitianOperator {
    /// Validates Hermiticity and stores the re-symmetrized matrix `(A + A^dagger)/2`.
    pub fn new(space: CompositeSpace, entries: CMatrix) -> Result<Self> {
        check_square(&space, &entries)?;
        if let Some((row, col, deviation)) = hermiticity_violation(&entries) {
            return Err(Error::NotHermitian {
                row,
                col,
                deviation,
            });
        }
        Ok(Self {
            entries: symmetrize(&entries),
            space,
        })
    }

    /// Builds from a matrix that is Hermitian by construction; only re-symmetrizes.
    pub(crate) fn from_trusted(space: CompositeSpace, entries: CMatrix) -> Self {
        debug_assert_eq!(entries.nrows(), space.total_dim());
        Self {
            entries: symmetrize(&entries),
            space,
        }
    }

    pub fn zeros(space: CompositeSpace) -> Self {
        let d = space.total_dim();
        Self {
            space,
            entries: CMatrix::zeros(d, d),
        }
    }

    pub fn identity(space: CompositeSpace) -> Self {
        let d = space.total_dim();
        Self {
            space,
            entries: CMatrix::identity(d, d),
        }
    }

    pub fn from_real_diagonal(space: CompositeSpace, diag: &[f64]) -> Result<Self> {
        if diag.len() != space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} diagonal entries for total dimension {}",
                diag.len(),
                space.total_dim()
            )));
        }
        let d = diag.len();
        let entries = CMatrix::from_fn(d, d, |i, j| if i == j { c(diag[i]) } else { C64::default() });
        Ok(Self { space, entries })
    }

    /// Real symmetric matrix given row-major.
    pub fn from_real_rows(space: CompositeSpace, rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("rows are not square".into()));
        }
        Self::new(space, CMatrix::from_fn(d, d, |i, j| c(rows[i][j])))
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        eig_hermitian(self)
            .eigenvalues
            .iter()
            .fold(0.0_f64, |m, e| m.max(e.abs()))
    }

    /// `Tr(rho H)`.
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<f64> {
        same_dim(self.dim(), rho.dim(), "expectation value")?;
        Ok(trace_of_product(rho.entries(), &self.entries))
    }

    fn same_space(&self, other: &Self, what: &str) -> Result<()> {
        if self.space.total_dim() != other.space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.space.factor_dims(),
                other.space.factor_dims()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_space(other, "operator sum")?;
        Ok(Self {
            space: self.space.clone(),
            entries: &self.entries + &other.entries,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_space(other, "operator difference")?;
        Ok(Self {
            space: self.space.clone(),
            entries: &self.entries - &other.entries,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            space: self.space.clone(),
            entries: &self.entries * c(s),
        }
    }

    /// `self + s * I`.
    pub fn shift(&self, s: f64) -> Self {
        let mut entries = self.entries.clone();
        for i in 0..entries.nrows() {
            entries[(i, i)] += c(s);
        }
        Self {
            space: self.space.clone(),
            entries,
        }
    }

    /// `self ⊗ other` on the concatenated space.
    pub fn kron(&self, other: &Self) -> Self {
        Self {
            space: self.space.tensor(&other.space),
            entries: self.entries.kronecker(&other.entries),
        }
    }

    /// Same matrix, relabelled onto another space of equal total dimension.
    pub fn with_space(&self, space: CompositeSpace) -> Result<Self> {
        check_square(&space, &self.entries)?;
        Ok(Self {
            space,
            entries: self.entries.clone(),
        })
    }

    /// Removes the trace part: `H - Tr(H)/d * I`.
    pub fn traceless_part(&self) -> Self {
        self.shift(-self.trace() / self.dim() as f64)
    }
}

fn same_dim(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// `Tr(A B)` without forming the product.
pub(crate) fn trace_of_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = C64::default();
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc.re
}

/// Positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    space: CompositeSpace,
    entries: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(space: CompositeSpace, entries: CMatrix) -> Result<Self> {
        check_square(&space, &entries)?;
        if let Some((row, col, deviation)) = hermiticity_violation(&entries) {
            return Err(Error::NotHermitian {
                row,
                col,
                deviation,
            });
        }
        let entries = symmetrize(&entries);
        let tr = entries.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min = eig_matrix(&entries).eigenvalues[0];
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "smallest eigenvalue {min:.3e} is negative"
            )));
        }
        Ok(Self { space, entries })
    }

    /// For matrices that are states by construction; only re-symmetrizes.
    pub(crate) fn from_trusted(space: CompositeSpace, entries: CMatrix) -> Self {
        debug_assert_eq!(entries.nrows(), space.total_dim());
        Self {
            entries: symmetrize(&entries),
            space,
        }
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn pure(space: CompositeSpace, psi: &CVector) -> Result<Self> {
        if psi.len() != space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "state vector of length {} for total dimension {}",
                psi.len(),
                space.total_dim()
            )));
        }
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = psi / c(norm);
        Ok(Self {
            entries: &v * v.adjoint(),
            space,
        })
    }

    pub fn basis_state(space: CompositeSpace, index: usize) -> Result<Self> {
        let d = space.total_dim();
        if index >= d {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dimension {d}"
            )));
        }
        let mut entries = CMatrix::zeros(d, d);
        entries[(index, index)] = c(1.0);
        Ok(Self { space, entries })
    }

    pub fn maximally_mixed(space: CompositeSpace) -> Self {
        let d = space.total_dim();
        Self {
            entries: CMatrix::identity(d, d) * c(1.0 / d as f64),
            space,
        }
    }

    /// Diagonal state with the given populations (must sum to one).
    pub fn from_populations(space: CompositeSpace, populations: &[f64]) -> Result<Self> {
        let d = populations.len();
        let entries =
            CMatrix::from_fn(d, d, |i, j| if i == j { c(populations[i]) } else { C64::default() });
        Self::new(space, entries)
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eig_matrix(&self.entries).eigenvalues
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            space: self.space.tensor(&other.space),
            entries: self.entries.kronecker(&other.entries),
        }
    }

    pub fn with_space(&self, space: CompositeSpace) -> Result<Self> {
        check_square(&space, &self.entries)?;
        Ok(Self {
            space,
            entries: self.entries.clone(),
        })
    }

    /// `U rho U^dagger`.
    pub fn conjugate_by(&self, u: &UnitaryOperator) -> Result<Self> {
        same_dim(self.dim(), u.entries().nrows(), "unitary conjugation")?;
        let m = u.entries() * &self.entries * u.entries().adjoint();
        Ok(Self::from_trusted(self.space.clone(), m))
    }

    /// Convex combination `(1 - t) self + t other`.
    pub fn mix(&self, other: &DensityMatrix, t: f64) -> Result<Self> {
        same_dim(self.dim(), other.dim(), "mixture")?;
        Ok(Self {
            space: self.space.clone(),
            entries: &self.entries * c(1.0 - t) + &other.entries * c(t),
        })
    }

    /// Viewed as a Hermitian operator (for functional calculus).
    pub fn as_operator(&self) -> HermitianOperator {
        HermitianOperator {
            space: self.space.clone(),
            entries: self.entries.clone(),
        }
    }
}

/// Eigenpairs with ascending real eigenvalues; eigenvectors are the columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    /// `U f(diag lambda) U^dagger` for a complex-valued `f`.
    pub fn map_complex(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let fj = f(lam);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map_complex(c)
    }

    pub fn eigenvector(&self, k: usize) -> CVector {
        self.eigenvectors.column(k).into_owned()
    }
}

pub(crate) fn eig_matrix(m: &CMatrix) -> SpectralDecomposition {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = order.len();
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Spectral decomposition of a Hermitian operator, eigenvalues ascending.
pub fn eig_hermitian(op: &HermitianOperator) -> SpectralDecomposition {
    eig_matrix(&op.entries)
}

/// Spectral decomposition of a raw matrix, rejecting non-Hermitian input.
pub fn eig_hermitian_matrix(m: &CMatrix) -> Result<SpectralDecomposition> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch("matrix is not square".into()));
    }
    if let Some((row, col, deviation)) = hermiticity_violation(m) {
        return Err(Error::NotHermitian {
            row,
            col,
            deviation,
        });
    }
    Ok(eig_matrix(&symmetrize(m)))
}

/// `f(H)` via the spectral decomposition. Fails if `f` is not finite on the spectrum.
pub fn hermitian_function(
    op: &HermitianOperator,
    f: impl Fn(f64) -> f64,
) -> Result<HermitianOperator> {
    let eig = eig_hermitian(op);
    if let Some((&eigenvalue, value)) = eig
        .eigenvalues
        .iter()
        .map(|l| (l, f(*l)))
        .find(|(_, v)| !v.is_finite())
    {
        return Err(Error::UndefinedOnSpectrum { eigenvalue, value });
    }
    Ok(HermitianOperator::from_trusted(
        op.space.clone(),
        eig.map_complex(|l| c(f(l))),
    ))
}

/// Natural logarithm with eigenvalues clamped to `floor` first (0 log 0 = 0 convention).
pub fn hermitian_log(op: &HermitianOperator, floor: f64) -> Result<HermitianOperator> {
    hermitian_function(op, |l| l.max(floor).ln())
}

/// `I_before ⊗ op ⊗ I_after` placing `op` at `factor_index` of `target`.
pub fn tensor_embed(
    op: &HermitianOperator,
    target: &CompositeSpace,
    factor_index: usize,
) -> Result<HermitianOperator> {
    let dims = target.factor_dims();
    let Some(&slot) = dims.get(factor_index) else {
        return Err(Error::DimensionMismatch(format!(
            "factor index {factor_index} out of range for space {dims:?}"
        )));
    };
    if op.dim() != slot {
        return Err(Error::DimensionMismatch(format!(
            "operator of dimension {} cannot occupy factor {factor_index} of dimension {slot}",
            op.dim()
        )));
    }
    let before: usize = dims[..factor_index].iter().product();
    let after: usize = dims[factor_index + 1..].iter().product();
    let entries = CMatrix::identity(before, before)
        .kronecker(&op.entries)
        .kronecker(&CMatrix::identity(after, after));
    Ok(HermitianOperator {
        space: target.clone(),
        entries,
    })
}

/// Partial trace of a raw square matrix over every factor not in `keep`.
pub(crate) fn partial_trace_matrix(m: &CMatrix, dims: &[usize], keep: &[usize]) -> CMatrix {
    let nf = dims.len();
    let mut strides = vec![1usize; nf];
    for f in (0..nf.saturating_sub(1)).rev() {
        strides[f] = strides[f + 1] * dims[f + 1];
    }
    // Offsets into the flat index for every configuration of a subset of factors.
    let offsets = |factors: &[usize]| -> Vec<usize> {
        let mut out = vec![0usize];
        for &f in factors {
            let mut next = Vec::with_capacity(out.len() * dims[f]);
            for &o in &out {
                for i in 0..dims[f] {
                    next.push(o + i * strides[f]);
                }
            }
            out = next;
        }
        out
    };
    let traced: Vec<usize> = (0..nf).filter(|f| !keep.contains(f)).collect();
    let kept_off = offsets(keep);
    let traced_off = offsets(&traced);
    let k = kept_off.len();
    CMatrix::from_fn(k, k, |a, b| {
        traced_off
            .iter()
            .map(|&t| m[(kept_off[a] + t, kept_off[b] + t)])
            .sum()
    })
}

/// Reduced state on the factors listed in `keep` (kept in ascending order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument(
            "partial trace needs a nonempty set of kept factors".into(),
        ));
    }
    let dims = rho.space.factor_dims();
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&bad) = keep.iter().find(|&&f| f >= dims.len()) {
        return Err(Error::InvalidArgument(format!(
            "factor {bad} out of range for space {dims:?}"
        )));
    }
    let reduced = partial_trace_matrix(&rho.entries, dims, &keep);
    let space = CompositeSpace::new(keep.iter().map(|&f| dims[f]).collect())?;
    Ok(DensityMatrix::from_trusted(space, reduced))
}

/// `(1/2) sum |lambda_i(a - b)|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    same_dim(a.dim(), b.dim(), "trace distance")?;
    Ok(trace_norm_hermitian(&(&a.entries - &b.entries)) / 2.0)
}

pub(crate) fn trace_norm_hermitian(m: &CMatrix) -> f64 {
    eig_matrix(&symmetrize(m))
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .sum()
}

/// Operator with `U U^dagger = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryOperator {
    space: CompositeSpace,
    entries: CMatrix,
}

impl UnitaryOperator {
    pub fn new(space: CompositeSpace, entries: CMatrix) -> Result<Self> {
        check_square(&space, &entries)?;
        let dev = unitarity_defect(&entries);
        if dev > UNITARITY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Self { space, entries })
    }

    pub(crate) fn from_trusted(space: CompositeSpace, entries: CMatrix) -> Self {
        Self { space, entries }
    }

    pub fn identity(space: CompositeSpace) -> Self {
        let d = space.total_dim();
        Self {
            space,
            entries: CMatrix::identity(d, d),
        }
    }

    /// `exp(-i H t)`.
    pub fn time_evolution(h: &HermitianOperator, t: f64) -> Self {
        let eig = eig_hermitian(h);
        Self {
            space: h.space.clone(),
            entries: eig.map_complex(|e| C64::from_polar(1.0, -e * t)),
        }
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            entries: self.entries.adjoint(),
        }
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.entries)
    }
}

pub(crate) fn unitarity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    (m * m.adjoint() - CMatrix::identity(n, n)).norm()
}
