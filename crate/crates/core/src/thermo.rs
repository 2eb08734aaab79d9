//! Gibbs states, partition functions, entropies and free energies (nats).

use crate::error::{Error, Result};
use crate::operator::{
    c, eig_hermitian, eig_matrix, trace_of_product, DensityMatrix, HermitianOperator, LOG_FLOOR,
};

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct InverseTemperature(f64);

impl InverseTemperature {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "inverse temperature must be positive and finite, got {beta}"
            )));
        }
        Ok(Self(beta))
    }

    pub fn beta(self) -> f64 {
        self.0
    }

    pub fn temperature(self) -> f64 {
        1.0 / self.0
    }
}

/// Boltzmann weights relative to the ground energy, together with the spectrum.
fn shifted_weights(h: &HermitianOperator, beta: f64) -> (crate::operator::SpectralDecomposition, Vec<f64>) {
    let eig = eig_hermitian(h);
    let e0 = eig.eigenvalues[0];
    let w = eig.eigenvalues.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    (eig, w)
}

/// `exp(-beta H) / Tr exp(-beta H)`.
pub fn gibbs_state(h: &HermitianOperator, beta: InverseTemperature) -> DensityMatrix {
    let (eig, w) = shifted_weights(h, beta.0);
    let z: f64 = w.iter().sum();
    let e0 = eig.eigenvalues[0];
    let m = eig.map_complex(|e| c((-beta.0 * (e - e0)).exp() / z));
    DensityMatrix::from_trusted(h.space().clone(), m)
}

/// `ln Tr exp(-beta H)` with the ground energy factored out.
pub fn log_partition(h: &HermitianOperator, beta: InverseTemperature) -> f64 {
    let (eig, w) = shifted_weights(h, beta.0);
    -beta.0 * eig.eigenvalues[0] + w.iter().sum::<f64>().ln()
}

fn entropy_of_spectrum(eigenvalues: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .filter(|&&l| l > LOG_FLOOR)
        .map(|&l| -l * l.ln())
        .sum()
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_of_spectrum(&rho.eigenvalues()).max(0.0)
}

/// `Tr rho (ln rho - ln sigma)`; `InfiniteDivergence` if rho leaks outside the support of sigma.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "relative entropy: {} vs {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    let es = eig_matrix(sigma.entries());
    let mut leak = 0.0;
    let mut cross = 0.0;
    // Tr(rho ln sigma) = sum_k <s_k|rho|s_k> ln s_k
    for (k, &s) in es.eigenvalues.iter().enumerate() {
        let v = es.eigenvector(k);
        let weight = (v.adjoint() * rho.entries() * &v)[(0, 0)].re;
        if s <= LOG_FLOOR {
            leak += weight.max(0.0);
        } else {
            cross += weight * s.ln();
        }
    }
    if leak > 1e-10 {
        return Err(Error::InfiniteDivergence { leak });
    }
    let neg_entropy = -entropy_of_spectrum(&rho.eigenvalues());
    Ok((neg_entropy - cross).max(0.0))
}

/// `Tr(rho H) - S(rho) / beta`.
pub fn free_energy(rho: &DensityMatrix, h: &HermitianOperator, beta: InverseTemperature) -> Result<f64> {
    if rho.dim() != h.dim() {
        return Err(Error::DimensionMismatch(format!(
            "free energy: state {} vs Hamiltonian {}",
            rho.dim(),
            h.dim()
        )));
    }
    Ok(trace_of_product(rho.entries(), h.entries()) - von_neumann_entropy(rho) / beta.0)
}

/// Equilibrium free energy `-ln Z / beta`.
pub fn equilibrium_free_energy(h: &HermitianOperator, beta: InverseTemperature) -> f64 {
    -log_partition(h, beta) / beta.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{trace_distance, CompositeSpace, C64};
    use crate::random::{random_density_matrix, random_hermitian, seeded_rng};

    fn b(x: f64) -> InverseTemperature {
        InverseTemperature::new(x).unwrap()
    }

    #[test]
    fn rejects_nonpositive_beta() {
        assert!(InverseTemperature::new(0.0).is_err());
        assert!(InverseTemperature::new(-1.0).is_err());
        assert!(InverseTemperature::new(f64::NAN).is_err());
    }

    #[test]
    fn gibbs_high_temperature_limit() {
        let mut rng = seeded_rng(1);
        let h = random_hermitian(&mut rng, 4, 1.0);
        let w = gibbs_state(&h, b(1e-9));
        let mixed = DensityMatrix::maximally_mixed(CompositeSpace::single(4));
        assert!((w.entries() - mixed.entries()).norm() < 1e-8);
    }

    #[test]
    fn gibbs_qubit_populations() {
        let e = 2f64.ln();
        let h = HermitianOperator::from_real_diagonal(CompositeSpace::single(2), &[0.0, e]).unwrap();
        let w = gibbs_state(&h, b(1.0));
        assert!((w.entries()[(0, 0)].re - 2.0 / 3.0).abs() < 1e-14);
        assert!((w.entries()[(1, 1)].re - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn gibbs_commutes_with_hamiltonian() {
        let mut rng = seeded_rng(2);
        let h = random_hermitian(&mut rng, 6, 1.0);
        let w = gibbs_state(&h, b(1.3));
        assert!((w.entries().trace().re - 1.0).abs() < 1e-10);
        let comm = w.entries() * h.entries() - h.entries() * w.entries();
        assert!(comm.norm() < 1e-10);
    }

    #[test]
    fn gibbs_survives_large_energies() {
        let h = HermitianOperator::from_real_diagonal(CompositeSpace::single(2), &[1e4, 1e4 + 1.0])
            .unwrap();
        let w = gibbs_state(&h, b(50.0));
        assert!(w.entries().iter().all(|z| z.re.is_finite()));
        assert!((log_partition(&h, b(50.0)) + 5e5).abs() < 1e-6);
    }

    #[test]
    fn log_partition_examples() {
        let z = HermitianOperator::zeros(CompositeSpace::single(5));
        assert!((log_partition(&z, b(0.7)) - 5f64.ln()).abs() < 1e-14);
        let h = HermitianOperator::from_real_diagonal(CompositeSpace::single(2), &[0.0, 2f64.ln()])
            .unwrap();
        assert!((log_partition(&h, b(1.0)) - 1.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_free_energy_matches_log_partition() {
        let mut rng = seeded_rng(3);
        for _ in 0..10 {
            let h = random_hermitian(&mut rng, 4, 2.0);
            let beta = b(0.8);
            let w = gibbs_state(&h, beta);
            let f = free_energy(&w, &h, beta).unwrap();
            assert!((f + log_partition(&h, beta) / 0.8).abs() < 1e-10);
        }
    }

    #[test]
    fn entropy_examples() {
        let s2 = CompositeSpace::single(2);
        let pure = DensityMatrix::basis_state(s2.clone(), 1).unwrap();
        assert!(von_neumann_entropy(&pure).abs() < 1e-14);
        let mixed = DensityMatrix::maximally_mixed(CompositeSpace::single(6));
        assert!((von_neumann_entropy(&mixed) - 6f64.ln()).abs() < 1e-13);
        let r = DensityMatrix::from_populations(s2, &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let want = 3f64.ln() - 2.0 / 3.0 * 2f64.ln();
        assert!((von_neumann_entropy(&r) - want).abs() < 1e-14);
        assert!((want - 0.63651).abs() < 1e-5);
    }

    #[test]
    fn relative_entropy_examples() {
        let s2 = CompositeSpace::single(2);
        let half = DensityMatrix::maximally_mixed(s2.clone());
        let w = DensityMatrix::from_populations(s2.clone(), &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(relative_entropy(&w, &w).unwrap().abs() < 1e-14);
        let got = relative_entropy(&half, &w).unwrap();
        assert!((got - 0.5 * (9.0f64 / 8.0).ln()).abs() < 1e-14);
        assert!((got - 0.05889).abs() < 1e-5);
    }

    #[test]
    fn relative_entropy_support_violation_is_infinite() {
        let s2 = CompositeSpace::single(2);
        let p0 = DensityMatrix::basis_state(s2.clone(), 0).unwrap();
        let half = DensityMatrix::maximally_mixed(s2);
        assert!(matches!(
            relative_entropy(&half, &p0),
            Err(Error::InfiniteDivergence { .. })
        ));
        assert!(relative_entropy(&p0, &half).is_ok());
    }

    /// Sum over both eigenbases: sum_ij |<r_i|s_j>|^2 r_i (ln r_i - ln s_j).
    fn relative_entropy_oracle(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
        let er = eig_matrix(rho.entries());
        let es = eig_matrix(sigma.entries());
        let mut acc = 0.0;
        for (i, &r) in er.eigenvalues.iter().enumerate() {
            for (j, &s) in es.eigenvalues.iter().enumerate() {
                let ov: C64 = (er.eigenvector(i).adjoint() * es.eigenvector(j))[(0, 0)];
                acc += ov.norm_sqr() * r * (r.ln() - s.ln());
            }
        }
        acc
    }

    #[test]
    fn relative_entropy_matches_two_basis_oracle() {
        let mut rng = seeded_rng(7);
        let rho = random_density_matrix(&mut rng, 4);
        let sigma = random_density_matrix(&mut rng, 4);
        let got = relative_entropy(&rho, &sigma).unwrap();
        assert!((got - relative_entropy_oracle(&rho, &sigma)).abs() < 1e-10);
    }

    #[test]
    fn free_energy_of_ground_state_is_ground_energy() {
        let mut rng = seeded_rng(5);
        let h = random_hermitian(&mut rng, 3, 1.0);
        let eig = eig_hermitian(&h);
        let g = DensityMatrix::pure(CompositeSpace::single(3), &eig.eigenvector(0)).unwrap();
        assert!((free_energy(&g, &h, b(2.0)).unwrap() - eig.eigenvalues[0]).abs() < 1e-12);
    }

    #[test]
    fn gibbs_variational_principle() {
        let mut rng = seeded_rng(6);
        for _ in 0..50 {
            let h = random_hermitian(&mut rng, 3, 1.5);
            let rho = random_density_matrix(&mut rng, 3);
            let beta = b(1.1);
            let w = gibbs_state(&h, beta);
            let gap = free_energy(&rho, &h, beta).unwrap() - free_energy(&w, &h, beta).unwrap();
            assert!(gap >= 0.0);
            let rel = relative_entropy(&rho, &w).unwrap() / 1.1;
            assert!((gap - rel).abs() < 1e-10);
            assert!(trace_distance(&rho, &w).unwrap() > 1e-8);
        }
    }
}
