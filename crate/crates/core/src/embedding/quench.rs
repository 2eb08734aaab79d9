use rand::Rng;

use super::battery::{BatteryLadder, FlatBatteryState};
use crate::error::{Error, Result};
use crate::operator::{
    c, eig_hermitian, partial_trace_matrix, trace_distance, CMatrix, CVector, CompositeSpace, DensityMatrix,
    HermitianOperator, SpectralDecomposition, UnitaryOperator, C64, UNITARITY_TOL,
};
use crate::random::seeded_rng;

/// Largest full `R ⊗ W ⊗ Q` dimension for which a dense unitary is materialised.
pub const DENSE_BUDGET: usize = 4096;
/// Tolerance on `[H_total, U]` restricted to guard-band columns.
pub const ENERGY_TOL: f64 = 1e-9;
/// Battery population allowed beyond the guard band before a quench is rejected.
pub const GUARD_LEAK_TOL: f64 = 1e-14;
/// Eigenvector overlaps at or below this size do not connect two levels.
pub const OVERLAP_CUTOFF: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct QuenchChecks {
    pub unitarity_defect: f64,
    pub max_energy_commutator: f64,
    pub commutes_with_translations: bool,
    pub translation_shifts_checked: Vec<i64>,
}

/// Energy-conserving, translation-invariant quench unitary on `R ⊗ W ⊗ Q`.
///
/// Stored as the forward block `F = Σ_m A_m ⊗ Γ(m δ)` mapping `|0>_Q` to `|1>_Q`; the
/// full operator is `F ⊗ |1><0| + F† ⊗ |0><1|`.
#[derive(Clone, Debug)]
pub struct QuenchUnitary {
    ladder: BatteryLadder,
    h_before: HermitianOperator,
    h_after: HermitianOperator,
    eig_before: SpectralDecomposition,
    eig_after: SpectralDecomposition,
    levels_before: Vec<i64>,
    levels_after: Vec<i64>,
    rounding_residual: f64,
    blocks: Vec<(i64, CMatrix)>,
    space: CompositeSpace,
    checks: QuenchChecks,
}

/// Sparse columns `(row, value)` of the full unitary.
type SparseColumns = Vec<Vec<(usize, C64)>>;

impl QuenchUnitary {
    pub fn ladder(&self) -> &BatteryLadder {
        &self.ladder
    }

    pub fn h_before(&self) -> &HermitianOperator {
        &self.h_before
    }

    pub fn h_after(&self) -> &HermitianOperator {
        &self.h_after
    }

    pub fn d_r(&self) -> usize {
        self.h_before.dim()
    }

    /// `[d_R, N_W, 2]`.
    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn rounding_residual(&self) -> f64 {
        self.rounding_residual
    }

    pub fn checks(&self) -> &QuenchChecks {
        &self.checks
    }

    /// Grid steps `m_ij` for the transition `i` (before) to `j` (after).
    pub fn shift(&self, i: usize, j: usize) -> i64 {
        self.levels_before[i] - self.levels_after[j]
    }

    /// Distinct shifts in increasing order.
    pub fn shifts(&self) -> Vec<i64> {
        self.blocks.iter().map(|(m, _)| *m).collect()
    }

    pub fn max_abs_shift(&self) -> i64 {
        self.blocks.iter().map(|(m, _)| m.abs()).max().unwrap_or(0)
    }

    fn shift_range(&self) -> (i64, i64) {
        let lo = self.blocks.first().map(|b| b.0).unwrap_or(0);
        let hi = self.blocks.last().map(|b| b.0).unwrap_or(0);
        (lo, hi)
    }

    /// Largest `|m_ij - m_i'j'|`, the spread entering the state-preservation condition.
    pub fn max_shift_spread(&self) -> i64 {
        let (lo, hi) = self.shift_range();
        hi - lo
    }

    /// Spread relative to a window of `window_levels` levels.
    pub fn epsilon(&self, window_levels: usize) -> f64 {
        self.max_shift_spread() as f64 / window_levels as f64
    }

    pub fn eig_before(&self) -> &SpectralDecomposition {
        &self.eig_before
    }

    pub fn eig_after(&self) -> &SpectralDecomposition {
        &self.eig_after
    }

    /// `|<j_after|i_before>|^2`.
    pub fn transition_probability(&self, i: usize, j: usize) -> f64 {
        (self.eig_after.eigenvector(j).adjoint() * self.eig_before.eigenvector(i))[(0, 0)].norm_sqr()
    }

    pub fn snapped_before(&self) -> HermitianOperator {
        snapped(&self.h_before, &self.eig_before, &self.levels_before, self.ladder.spacing())
    }

    pub fn snapped_after(&self) -> HermitianOperator {
        snapped(&self.h_after, &self.eig_after, &self.levels_after, self.ladder.spacing())
    }

    /// `F M` for `M` with rows indexed by `r * N_W + w`.
    pub fn forward_columns(&self, m: &CMatrix) -> CMatrix {
        let nw = self.ladder.n_levels();
        let d = self.d_r();
        let rows = d * nw;
        assert_eq!(m.nrows(), rows, "operand does not live on R ⊗ W");
        let mut out = CMatrix::zeros(rows, m.ncols());
        let src = m.as_slice();
        let dst = out.as_mut_slice();
        let targets: Vec<Vec<usize>> = self
            .blocks
            .iter()
            .map(|(s, _)| (0..nw).map(|w| self.ladder.shifted_index(w, *s)).collect())
            .collect();
        for col in 0..m.ncols() {
            let base = col * rows;
            for ((_, a), target) in self.blocks.iter().zip(&targets) {
                for r in 0..d {
                    for q in 0..d {
                        let coef = a[(r, q)];
                        if coef == c(0.0) {
                            continue;
                        }
                        for w in 0..nw {
                            let v = src[base + q * nw + w];
                            if v != c(0.0) {
                                dst[base + r * nw + target[w]] += coef * v;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward_vector(&self, psi: &CVector) -> CVector {
        let m = CMatrix::from_column_slice(psi.len(), 1, psi.as_slice());
        CVector::from_column_slice(self.forward_columns(&m).as_slice())
    }

    /// `F rho F†` for a Hermitian `rho` on `R ⊗ W`.
    pub fn forward_density(&self, rho: &CMatrix) -> CMatrix {
        let half = self.forward_columns(rho);
        let out = self.forward_columns(&half.adjoint());
        (&out + out.adjoint()) * c(0.5)
    }

    /// Index of `(r, w, q)` in the full space.
    fn index(&self, r: usize, w: usize, q: usize) -> usize {
        (r * self.ladder.n_levels() + w) * 2 + q
    }

    fn sparse_columns(&self) -> SparseColumns {
        let nw = self.ladder.n_levels();
        let d = self.d_r();
        let mut cols = vec![Vec::new(); d * nw * 2];
        for a in 0..d {
            for w in 0..nw {
                let c0 = self.index(a, w, 0);
                let c1 = self.index(a, w, 1);
                for (m, blk) in &self.blocks {
                    let up = self.ladder.shifted_index(w, *m);
                    let down = self.ladder.shifted_index(w, -*m);
                    for r in 0..d {
                        let f = blk[(r, a)];
                        if f != c(0.0) {
                            cols[c0].push((self.index(r, up, 1), f));
                        }
                        let b = blk[(a, r)].conj();
                        if b != c(0.0) {
                            cols[c1].push((self.index(r, down, 0), b));
                        }
                    }
                }
                cols[c0].sort_by_key(|e| e.0);
                cols[c1].sort_by_key(|e| e.0);
            }
        }
        cols
    }

    /// Dense `U` on `[d_R, N_W, 2]`; refused above `DENSE_BUDGET`.
    pub fn to_dense(&self) -> Result<UnitaryOperator> {
        let n = self.space.total_dim();
        if n > DENSE_BUDGET {
            return Err(Error::InvalidArgument(format!(
                "dense quench unitary of dimension {n} exceeds the budget {DENSE_BUDGET}"
            )));
        }
        let mut u = CMatrix::zeros(n, n);
        for (col, entries) in self.sparse_columns().iter().enumerate() {
            for &(row, v) in entries {
                u[(row, col)] = v;
            }
        }
        Ok(UnitaryOperator::from_trusted(self.space.clone(), u))
    }

    /// Whether `|r, w, q>` is mapped without crossing the seam.
    fn column_in_guard_band(&self, w: usize, q: usize) -> bool {
        let (lo, hi) = self.shift_range();
        let (lo, hi) = if q == 0 { (lo, hi) } else { (-hi, -lo) };
        let w = w as i64;
        w + lo >= 0 && w + hi < self.ladder.n_levels() as i64
    }

    /// Range of battery levels whose images under every shift stay off the seam.
    pub fn safe_levels(&self) -> (i64, i64) {
        let (lo, hi) = self.shift_range();
        (-lo, self.ladder.n_levels() as i64 - 1 - hi)
    }

    fn verify(&mut self) -> Result<()> {
        let cols = self.sparse_columns();
        let n = cols.len();
        let mut rows: SparseColumns = vec![Vec::new(); n];
        for (col, entries) in cols.iter().enumerate() {
            for &(row, v) in entries {
                rows[row].push((col, v));
            }
        }
        let mut scratch = vec![c(0.0); n];
        let mut touched = Vec::new();
        let mut defect2 = 0.0;
        for (col, entries) in cols.iter().enumerate() {
            for &(row, v) in entries {
                for &(k, u) in &rows[row] {
                    if scratch[k] == c(0.0) {
                        touched.push(k);
                    }
                    scratch[k] += u.conj() * v;
                }
            }
            if scratch[col] == c(0.0) {
                touched.push(col);
            }
            scratch[col] -= c(1.0);
            for &k in &touched {
                defect2 += scratch[k].norm_sqr();
                scratch[k] = c(0.0);
            }
            touched.clear();
        }
        let defect = defect2.sqrt();
        if defect > UNITARITY_TOL {
            return Err(Error::NotUnitary(defect));
        }

        let nw = self.ladder.n_levels();
        let d = self.d_r();
        let mut rng = seeded_rng(0x5eed ^ nw as u64);
        let shifts = vec![1, rng.random_range(2..nw as i64)];
        let mut commutes = true;
        for &e in &shifts {
            for a in 0..d {
                for w in 0..nw {
                    for q in 0..2 {
                        let moved = &cols[self.index(a, self.ladder.shifted_index(w, e), q)];
                        let mut shifted: Vec<(usize, C64)> = cols[self.index(a, w, q)]
                            .iter()
                            .map(|&(row, v)| {
                                let (rq, rest) = (row % 2, row / 2);
                                let (rr, rw) = (rest / nw, rest % nw);
                                (self.index(rr, self.ladder.shifted_index(rw, e), rq), v)
                            })
                            .collect();
                        shifted.sort_by_key(|x| x.0);
                        commutes &= *moved == shifted;
                    }
                }
            }
        }
        if !commutes {
            return Err(Error::InvalidArgument(
                "quench unitary does not commute with battery translations".into(),
            ));
        }

        let hs = [self.snapped_before(), self.snapped_after()];
        let apply_h = |v: &[(usize, C64)]| -> Vec<(usize, C64)> {
            let mut out = std::collections::BTreeMap::new();
            for &(row, x) in v {
                let (q, rest) = (row % 2, row / 2);
                let (a, w) = (rest / nw, rest % nw);
                *out.entry(row).or_insert(c(0.0)) += x * c(self.ladder.energy(w));
                for r in 0..d {
                    let h = hs[q].entries()[(r, a)];
                    if h != c(0.0) {
                        *out.entry(self.index(r, w, q)).or_insert(c(0.0)) += h * x;
                    }
                }
            }
            out.into_iter().collect()
        };
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for w in 0..nw {
                for q in 0..2 {
                    if !self.column_in_guard_band(w, q) {
                        continue;
                    }
                    let col = self.index(a, w, q);
                    let hu = apply_h(&cols[col]);
                    let mut diff = std::collections::BTreeMap::new();
                    for (row, v) in hu {
                        *diff.entry(row).or_insert(c(0.0)) += v;
                    }
                    for (k, x) in apply_h(&[(col, c(1.0))]) {
                        for &(row, u) in &cols[k] {
                            *diff.entry(row).or_insert(c(0.0)) -= u * x;
                        }
                    }
                    let norm = diff.values().map(|z: &C64| z.norm_sqr()).sum::<f64>().sqrt();
                    worst = worst.max(norm);
                }
            }
        }
        if worst > ENERGY_TOL {
            return Err(Error::InvalidArgument(format!(
                "quench unitary violates energy conservation on the guard band by {worst:.3e}"
            )));
        }
        self.checks = QuenchChecks {
            unitarity_defect: defect,
            max_energy_commutator: worst,
            commutes_with_translations: commutes,
            translation_shifts_checked: shifts,
        };
        Ok(())
    }
}

fn snapped(
    h: &HermitianOperator,
    eig: &SpectralDecomposition,
    levels: &[i64],
    spacing: f64,
) -> HermitianOperator {
    let snapped = SpectralDecomposition {
        eigenvalues: levels.iter().map(|&l| l as f64 * spacing).collect(),
        eigenvectors: eig.eigenvectors.clone(),
    };
    HermitianOperator::from_trusted(h.space().clone(), snapped.reconstruct())
}

/// Builds the unique energy-conserving, translation-invariant, control-flipping unitary
/// implementing the quench `H_before -> H_after` on the ladder.
pub fn build_quench_unitary(
    ladder: &BatteryLadder,
    h_before: &HermitianOperator,
    h_after: &HermitianOperator,
) -> Result<QuenchUnitary> {
    if h_before.dim() != h_after.dim() {
        return Err(Error::DimensionMismatch(format!(
            "quench between Hamiltonians of dimension {} and {}",
            h_before.dim(),
            h_after.dim()
        )));
    }
    let d = h_before.dim();
    let eig_before = eig_hermitian(h_before);
    let eig_after = eig_hermitian(h_after);
    let snap_all = |e: &[f64]| e.iter().map(|&x| ladder.snap(x).0).collect::<Vec<_>>();
    let levels_before = snap_all(&eig_before.eigenvalues);
    let levels_after = snap_all(&eig_after.eigenvalues);
    let delta = ladder.spacing();
    let overlaps = eig_after.eigenvectors.adjoint() * &eig_before.eigenvectors;
    let connected = |i: usize, j: usize| overlaps[(j, i)].norm() > OVERLAP_CUTOFF;
    let mut residual: f64 = 0.0;
    let mut max_abs = 0i64;
    for i in 0..d {
        for j in (0..d).filter(|&j| connected(i, j)) {
            let m = levels_before[i] - levels_after[j];
            let gap = eig_before.eigenvalues[i] - eig_after.eigenvalues[j];
            residual = residual.max((gap - m as f64 * delta).abs());
            max_abs = max_abs.max(m.abs());
        }
    }
    let required = 4 * max_abs as usize + 1;
    if ladder.n_levels() < required {
        return Err(Error::GuardBand {
            required_levels: required,
            available: ladder.n_levels(),
        });
    }
    let mut blocks: Vec<(i64, CMatrix)> = Vec::new();
    for i in 0..d {
        let vi = eig_before.eigenvector(i);
        for j in (0..d).filter(|&j| connected(i, j)) {
            let vj = eig_after.eigenvector(j);
            let m = levels_before[i] - levels_after[j];
            let term = &vj * overlaps[(j, i)] * vi.adjoint();
            match blocks.iter_mut().find(|(s, _)| *s == m) {
                Some((_, a)) => *a += term,
                None => blocks.push((m, term)),
            }
        }
    }
    blocks.sort_by_key(|b| b.0);
    let space = CompositeSpace::new(vec![d, ladder.n_levels(), 2])?;
    let mut u = QuenchUnitary {
        ladder: ladder.clone(),
        h_before: h_before.clone(),
        h_after: h_after.clone(),
        eig_before,
        eig_after,
        levels_before,
        levels_after,
        rounding_residual: residual,
        blocks,
        space,
        checks: QuenchChecks {
            unitarity_defect: f64::NAN,
            max_energy_commutator: f64::NAN,
            commutes_with_translations: false,
            translation_shifts_checked: Vec::new(),
        },
    };
    u.verify()?;
    Ok(u)
}

/// Battery level populations of a joint `R ⊗ W` matrix.
pub(crate) fn battery_populations(joint: &CMatrix, d_r: usize, n_w: usize) -> Vec<f64> {
    (0..n_w)
        .map(|w| (0..d_r).map(|r| joint[(r * n_w + w, r * n_w + w)].re).sum())
        .collect()
}

pub(crate) fn reduce_r(joint: &CMatrix, d_r: usize, n_w: usize) -> CMatrix {
    partial_trace_matrix(joint, &[d_r, n_w], &[0])
}

pub(crate) fn reduce_w(joint: &CMatrix, d_r: usize, n_w: usize) -> CMatrix {
    partial_trace_matrix(joint, &[d_r, n_w], &[1])
}

/// Applies the forward block to a joint state after checking that no battery weight
/// would cross the seam; returns the new joint state and the battery work.
pub fn quench_joint(u: &QuenchUnitary, joint: &CMatrix) -> Result<(CMatrix, f64)> {
    let nw = u.ladder.n_levels();
    let d = u.d_r();
    let pops = battery_populations(joint, d, nw);
    let (safe_lo, safe_hi) = u.safe_levels();
    let leak: f64 = pops
        .iter()
        .enumerate()
        .filter(|(w, _)| (*w as i64) < safe_lo || (*w as i64) > safe_hi)
        .map(|(_, p)| p.abs())
        .sum();
    if leak > GUARD_LEAK_TOL {
        let occupied: Vec<usize> = (0..nw).filter(|&w| pops[w].abs() > GUARD_LEAK_TOL).collect();
        let width = occupied.last().map(|l| l - occupied[0] + 1).unwrap_or(0);
        return Err(Error::GuardBand {
            required_levels: width + 2 * u.max_abs_shift() as usize,
            available: nw,
        });
    }
    let after = u.forward_density(joint);
    let pops_after = battery_populations(&after, d, nw);
    let work = u.ladder.mean_energy(&pops_after) - u.ladder.mean_energy(&pops);
    Ok((after, work))
}

/// Result of a quench on `rho_R ⊗ |Psi><Psi| ⊗ |0><0|`.
#[derive(Clone, Debug)]
pub struct QuenchOutcome {
    pub rho_r_after: DensityMatrix,
    pub rho_w_after: DensityMatrix,
    pub work: f64,
    pub epsilon: f64,
    /// Joint `R ⊗ W` state; the control qubit is in `|1>`.
    pub joint: CMatrix,
}

impl QuenchOutcome {
    /// Trace distance between the post-quench system state and `rho`.
    pub fn disturbance(&self, rho: &DensityMatrix) -> Result<f64> {
        trace_distance(&self.rho_r_after, &rho.with_space(self.rho_r_after.space().clone())?)
    }
}

fn outcome(u: &QuenchUnitary, joint: CMatrix, work: f64, epsilon: f64) -> QuenchOutcome {
    let (d, nw) = (u.d_r(), u.ladder.n_levels());
    let rho_r = reduce_r(&joint, d, nw);
    let rho_w = reduce_w(&joint, d, nw);
    QuenchOutcome {
        rho_r_after: DensityMatrix::from_trusted(u.h_before.space().clone(), rho_r),
        rho_w_after: DensityMatrix::from_trusted(u.ladder.space(), rho_w),
        work,
        epsilon,
        joint,
    }
}

fn check_system_state(u: &QuenchUnitary, rho_r: &DensityMatrix) -> Result<()> {
    if rho_r.dim() != u.d_r() {
        return Err(Error::DimensionMismatch(format!(
            "system state has dimension {}, quench acts on {}",
            rho_r.dim(),
            u.d_r()
        )));
    }
    Ok(())
}

/// Quench with a coherent flat battery.
pub fn apply_quench(u: &QuenchUnitary, rho_r: &DensityMatrix, battery: &FlatBatteryState) -> Result<QuenchOutcome> {
    check_system_state(u, rho_r)?;
    if battery.ladder != u.ladder {
        return Err(Error::InvalidArgument("battery state lives on a different ladder".into()));
    }
    let joint = rho_r.entries().kronecker(battery.density_matrix().entries());
    let (after, work) = quench_joint(u, &joint)?;
    Ok(outcome(u, after, work, u.epsilon(battery.window_levels)))
}

/// Quench with the battery in the energy eigenstate `|w_level>`.
pub fn classical_battery_quench(
    u: &QuenchUnitary,
    rho_r: &DensityMatrix,
    level_index: usize,
) -> Result<(DensityMatrix, f64)> {
    check_system_state(u, rho_r)?;
    let battery = DensityMatrix::basis_state(u.ladder.space(), level_index)?;
    let joint = rho_r.entries().kronecker(battery.entries());
    let (after, work) = quench_joint(u, &joint)?;
    let o = outcome(u, after, work, 0.0);
    Ok((o.rho_r_after, o.work))
}

/// Battery overlaps `K^{i i'}_{j j'} = <Psi| Γ(Δ_ij − Δ_i'j') |Psi>`.
#[derive(Clone, Debug, PartialEq)]
pub struct KMatrix {
    pub d_before: usize,
    pub d_after: usize,
    pub values: Vec<C64>,
    pub closed_form: Vec<f64>,
    /// `max |K - 1|`.
    pub epsilon: f64,
}

impl KMatrix {
    fn flat(&self, i: usize, ip: usize, j: usize, jp: usize) -> usize {
        ((i * self.d_before + ip) * self.d_after + j) * self.d_after + jp
    }

    pub fn get(&self, i: usize, ip: usize, j: usize, jp: usize) -> C64 {
        self.values[self.flat(i, ip, j, jp)]
    }

    pub fn closed(&self, i: usize, ip: usize, j: usize, jp: usize) -> f64 {
        self.closed_form[self.flat(i, ip, j, jp)]
    }

    pub fn max_closed_form_deviation(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.closed_form)
            .map(|(v, k)| (v - c(*k)).norm())
            .fold(0.0, f64::max)
    }
}

/// `<a| Γ(m) |a>` for a battery amplitude vector.
pub(crate) fn shifted_overlap(ladder: &BatteryLadder, amps: &CVector, m: i64) -> C64 {
    let raw: C64 = (0..ladder.n_levels())
        .map(|w| amps[ladder.shifted_index(w, m)].conj() * amps[w])
        .sum();
    let norm: f64 = amps.iter().map(|a| (a.conj() * a).re).sum();
    raw / c(norm)
}

pub fn k_matrix(
    battery: &FlatBatteryState,
    h_before: &HermitianOperator,
    h_after: &HermitianOperator,
) -> Result<KMatrix> {
    if h_before.dim() != h_after.dim() {
        return Err(Error::DimensionMismatch("K matrix needs Hamiltonians on the same space".into()));
    }
    let ladder = &battery.ladder;
    let lb: Vec<i64> = eig_hermitian(h_before).eigenvalues.iter().map(|&e| ladder.snap(e).0).collect();
    let la: Vec<i64> = eig_hermitian(h_after).eigenvalues.iter().map(|&e| ladder.snap(e).0).collect();
    let (db, da) = (lb.len(), la.len());
    let amps = battery.amplitudes();
    let mut values = Vec::with_capacity(db * db * da * da);
    let mut closed_form = Vec::with_capacity(values.capacity());
    for i in 0..db {
        for ip in 0..db {
            for j in 0..da {
                for jp in 0..da {
                    let m = (lb[i] - la[j]) - (lb[ip] - la[jp]);
                    values.push(shifted_overlap(ladder, &amps, m));
                    closed_form.push(battery.overlap_closed_form(m));
                }
            }
        }
    }
    let epsilon = values.iter().map(|v| (v - c(1.0)).norm()).fold(0.0, f64::max);
    Ok(KMatrix {
        d_before: db,
        d_after: da,
        values,
        closed_form,
        epsilon,
    })
}
