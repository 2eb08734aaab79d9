//! Seeded generators for random operators and states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::operator::{c, CMatrix, CVector, CompositeSpace, DensityMatrix, HermitianOperator, C64};

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed; used to give every sweep point its own stream.
pub fn child_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| gaussian_complex(rng))
}

/// GUE-type Hermitian matrix rescaled to spectral norm `scale`.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> HermitianOperator {
    random_hermitian_on(rng, CompositeSpace::single(d), scale)
}

pub fn random_hermitian_on<R: Rng + ?Sized>(
    rng: &mut R,
    space: CompositeSpace,
    scale: f64,
) -> HermitianOperator {
    let d = space.total_dim();
    let g = ginibre(rng, d);
    let h = HermitianOperator::from_trusted(space, (&g + g.adjoint()) * c(0.5));
    let norm = h.spectral_norm();
    if norm == 0.0 {
        h
    } else {
        h.scale(scale / norm)
    }
}

/// Full-rank random state `G G^dagger / Tr`.
pub fn random_density_matrix<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DensityMatrix {
    random_density_matrix_on(rng, CompositeSpace::single(d))
}

pub fn random_density_matrix_on<R: Rng + ?Sized>(rng: &mut R, space: CompositeSpace) -> DensityMatrix {
    let d = space.total_dim();
    let g = ginibre(rng, d);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::from_trusted(space, m * c(1.0 / tr))
}

pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R, space: CompositeSpace) -> DensityMatrix {
    let d = space.total_dim();
    let psi = CVector::from_fn(d, |_, _| gaussian_complex(rng));
    DensityMatrix::pure(space, &psi).expect("gaussian vector is nonzero")
}

/// Haar-distributed unitary via QR with phase correction.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    let qr = ginibre(rng, d).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        let diag = r[(j, j)];
        let phase = if diag.norm() == 0.0 { c(1.0) } else { diag / c(diag.norm()) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::unitarity_defect;

    #[test]
    fn same_seed_same_draws() {
        let a = random_hermitian(&mut seeded_rng(9), 3, 1.0);
        let b = random_hermitian(&mut seeded_rng(9), 3, 1.0);
        assert_eq!(a, b);
        assert_ne!(child_seed(1, 0), child_seed(1, 1));
    }

    #[test]
    fn generators_respect_invariants() {
        let mut rng = seeded_rng(4);
        let h = random_hermitian(&mut rng, 5, 2.5);
        assert!((h.spectral_norm() - 2.5).abs() < 1e-12);
        let rho = random_density_matrix(&mut rng, 5);
        assert!(DensityMatrix::new(rho.space().clone(), rho.entries().clone()).is_ok());
        assert!(unitarity_defect(&random_unitary(&mut rng, 6)) < 1e-12);
    }
}
