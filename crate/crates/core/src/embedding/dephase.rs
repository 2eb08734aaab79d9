use crate::error::{Error, Result};
use crate::operator::{c, eig_hermitian, CMatrix, CVector, CompositeSpace, DensityMatrix, HermitianOperator};

fn is_diagonal(m: &CMatrix) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == c(0.0)))
}

/// Eigenbasis columns; the computational basis when the operator is already diagonal.
fn basis(h: &HermitianOperator) -> (CMatrix, bool) {
    if is_diagonal(h.entries()) {
        (CMatrix::identity(h.dim(), h.dim()), true)
    } else {
        (eig_hermitian(h).eigenvectors, false)
    }
}

/// Populations `<k, w| rho |k, w>` in the product eigenbasis of `H_SB ⊗ I + I ⊗ H_W`.
pub(crate) fn product_populations(rho: &CMatrix, u_r: &CMatrix, u_w: &CMatrix, w_diagonal: bool) -> Vec<f64> {
    let (d, n) = (u_r.nrows(), u_w.nrows());
    let mut out = vec![0.0; d * n];
    if w_diagonal {
        for w in 0..n {
            let block = CMatrix::from_fn(d, d, |a, b| rho[(a * n + w, b * n + w)]);
            for k in 0..d {
                let v = u_r.column(k);
                out[k * n + w] = (v.adjoint() * &block * v)[(0, 0)].re;
            }
        }
    } else {
        for k in 0..d {
            for w in 0..n {
                let v: CVector = u_r.column(k).kronecker(&u_w.column(w));
                out[k * n + w] = (v.adjoint() * rho * &v)[(0, 0)].re;
            }
        }
    }
    out
}

pub(crate) fn assemble_dephased(pops: &[f64], u_r: &CMatrix, u_w: &CMatrix, w_diagonal: bool) -> CMatrix {
    let (d, n) = (u_r.nrows(), u_w.nrows());
    let mut out = CMatrix::zeros(d * n, d * n);
    if w_diagonal {
        for k in 0..d {
            let v = u_r.column(k);
            let proj = &v * v.adjoint();
            for w in 0..n {
                let p = pops[k * n + w];
                if p == 0.0 {
                    continue;
                }
                for a in 0..d {
                    for b in 0..d {
                        out[(a * n + w, b * n + w)] += proj[(a, b)] * c(p);
                    }
                }
            }
        }
    } else {
        for k in 0..d {
            for w in 0..n {
                let v: CVector = u_r.column(k).kronecker(&u_w.column(w));
                out += &v * v.adjoint() * c(pops[k * n + w]);
            }
        }
    }
    out
}

/// Removes every coherence in the product eigenbasis of `H_SB ⊗ I + I ⊗ H_W`.
///
/// Degenerate product levels are dephased too, in the computed eigenbasis.
pub fn dephase(rho: &DensityMatrix, h_sb: &HermitianOperator, h_w: &HermitianOperator) -> Result<DensityMatrix> {
    let (d, n) = (h_sb.dim(), h_w.dim());
    if rho.dim() != d * n {
        return Err(Error::DimensionMismatch(format!(
            "dephasing a state of dimension {} with H_SB ({d}) and H_W ({n})",
            rho.dim()
        )));
    }
    let (u_r, _) = basis(h_sb);
    let (u_w, w_diagonal) = basis(h_w);
    let pops = product_populations(rho.entries(), &u_r, &u_w, w_diagonal);
    let space = if rho.space().num_factors() == 2 {
        rho.space().clone()
    } else {
        CompositeSpace::new(vec![d, n])?
    };
    Ok(DensityMatrix::from_trusted(space, assemble_dephased(&pops, &u_r, &u_w, w_diagonal)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::battery::BatteryLadder;
    use crate::operator::trace_of_product;
    use crate::random::{random_density_matrix_on, random_hermitian, seeded_rng};

    fn space() -> CompositeSpace {
        CompositeSpace::new(vec![2, 3]).unwrap()
    }

    #[test]
    fn diagonal_input_is_a_fixed_point() {
        let h_sb = HermitianOperator::from_real_diagonal(CompositeSpace::single(2), &[0.0, 1.0]).unwrap();
        let h_w = BatteryLadder::new(0.5, 3).unwrap().hamiltonian();
        let rho = DensityMatrix::from_populations(space(), &[0.1, 0.2, 0.3, 0.15, 0.15, 0.1]).unwrap();
        let out = dephase(&rho, &h_sb, &h_w).unwrap();
        assert_eq!(out.entries(), rho.entries());
    }

    #[test]
    fn plus_state_becomes_maximally_mixed() {
        let h = HermitianOperator::from_real_diagonal(CompositeSpace::single(2), &[0.0, 1.0]).unwrap();
        let h_w = HermitianOperator::from_real_diagonal(CompositeSpace::single(1), &[0.0]).unwrap();
        let s = 0.5f64.sqrt();
        let plus = DensityMatrix::pure(CompositeSpace::new(vec![2, 1]).unwrap(), &CVector::from_vec(vec![c(s), c(s)])).unwrap();
        let out = dephase(&plus, &h, &h_w).unwrap();
        assert!((out.entries() - CMatrix::identity(2, 2) * c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn idempotent_and_moment_preserving() {
        let mut rng = seeded_rng(12);
        for generic_battery in [false, true] {
            let h_sb = random_hermitian(&mut rng, 2, 1.0);
            let h_w = if generic_battery {
                random_hermitian(&mut rng, 3, 1.0)
            } else {
                BatteryLadder::new(0.3, 3).unwrap().hamiltonian()
            };
            let total = h_sb.kron(&HermitianOperator::identity(CompositeSpace::single(3)))
                .add(&HermitianOperator::identity(CompositeSpace::single(2)).kron(&h_w))
                .unwrap();
            let rho = random_density_matrix_on(&mut rng, space());
            let once = dephase(&rho, &h_sb, &h_w).unwrap();
            let twice = dephase(&once, &h_sb, &h_w).unwrap();
            assert!((once.entries() - twice.entries()).norm() < 1e-12);
            assert!((once.entries().trace().re - 1.0).abs() < 1e-12);
            let h2 = total.entries() * total.entries();
            for h in [total.entries().clone(), h2] {
                assert!((trace_of_product(rho.entries(), &h) - trace_of_product(once.entries(), &h)).abs() < 1e-12);
            }
            let comm = once.entries() * total.entries() - total.entries() * once.entries();
            assert!(comm.norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let h = HermitianOperator::identity(CompositeSpace::single(2));
        let rho = DensityMatrix::maximally_mixed(CompositeSpace::single(5));
        assert!(dephase(&rho, &h, &h).is_err());
    }
}
