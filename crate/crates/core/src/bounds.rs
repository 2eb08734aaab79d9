//! Extractable-work bound, the minimization over auxiliary system Hamiltonians,
//! the near-reversible protocol that saturates the bound, and the weak-coupling form.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::machine::{assemble_h_sb, MachineSpec, Protocol, ProtocolStep};
use crate::operator::{
    c, eig_hermitian, hermitian_log, partial_trace, partial_trace_matrix, tensor_embed,
    trace_of_product, CMatrix, CompositeSpace, DensityMatrix, HermitianOperator, C64,
};
use crate::random::{child_seed, random_hermitian, seeded_rng};
use crate::thermo::{
    free_energy, gibbs_state, log_partition, von_neumann_entropy, InverseTemperature,
};

/// Orthonormal (trace inner product) Hermitian basis: `I/sqrt(d)` followed by
/// generalized Gell-Mann matrices divided by `sqrt(2)`.
#[derive(Clone, Debug)]
pub struct HermitianParametrization {
    pub basis: Vec<HermitianOperator>,
    pub coeffs: Vec<f64>,
}

impl HermitianParametrization {
    pub fn new(d: usize) -> Self {
        let space = CompositeSpace::single(d);
        let unit = |i: usize, j: usize, z: C64| {
            let mut m = CMatrix::zeros(d, d);
            m[(i, j)] = z;
            m
        };
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut basis = vec![HermitianOperator::identity(space.clone()).scale(1.0 / (d as f64).sqrt())];
        for j in 0..d {
            for k in j + 1..d {
                let sym = unit(j, k, c(s)) + unit(k, j, c(s));
                let asym = unit(j, k, C64::new(0.0, -s)) + unit(k, j, C64::new(0.0, s));
                basis.push(HermitianOperator::from_trusted(space.clone(), sym));
                basis.push(HermitianOperator::from_trusted(space.clone(), asym));
            }
        }
        for l in 1..d {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut diag = vec![0.0; d];
            diag[..l].iter_mut().for_each(|x| *x = norm);
            diag[l] = -(l as f64) * norm;
            basis.push(HermitianOperator::from_real_diagonal(space.clone(), &diag).unwrap());
        }
        let coeffs = vec![0.0; basis.len()];
        Self { basis, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.basis[0].dim()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Coefficients `Tr(B_k A)` of a Hermitian operator.
    pub fn coefficients_of(&self, op: &HermitianOperator) -> Vec<f64> {
        self.basis
            .iter()
            .map(|b| trace_of_product(b.entries(), op.entries()))
            .collect()
    }

    pub fn set_from(&mut self, op: &HermitianOperator) {
        self.coeffs = self.coefficients_of(op);
    }

    pub fn reconstruct_from(&self, coeffs: &[f64]) -> HermitianOperator {
        let d = self.dim();
        let mut m = CMatrix::zeros(d, d);
        for (b, &x) in self.basis.iter().zip(coeffs) {
            m += b.entries() * c(x);
        }
        HermitianOperator::from_trusted(self.basis[0].space().clone(), m)
    }

    pub fn reconstruct(&self) -> HermitianOperator {
        self.reconstruct_from(&self.coeffs)
    }
}

/// `(1 - lambda) start + lambda end` on system Hamiltonians.
#[derive(Clone, Debug)]
pub struct IsothermalPath {
    pub endpoint_start: HermitianOperator,
    pub endpoint_end: HermitianOperator,
    pub n_steps: usize,
}

impl IsothermalPath {
    pub fn new(start: HermitianOperator, end: HermitianOperator, n_steps: usize) -> Result<Self> {
        if start.dim() != end.dim() {
            return Err(Error::DimensionMismatch("path endpoints differ in dimension".into()));
        }
        Ok(Self {
            endpoint_start: start,
            endpoint_end: end,
            n_steps,
        })
    }

    pub fn at(&self, lambda: f64) -> HermitianOperator {
        if lambda == 0.0 {
            return self.endpoint_start.clone();
        }
        if lambda == 1.0 {
            return self.endpoint_end.clone();
        }
        let m = self.endpoint_start.entries() * c(1.0 - lambda) + self.endpoint_end.entries() * c(lambda);
        HermitianOperator::from_trusted(self.endpoint_start.space().clone(), m)
    }

    /// `dH_S / dlambda`.
    pub fn derivative(&self) -> HermitianOperator {
        self.endpoint_end.sub(&self.endpoint_start).expect("endpoints share a space")
    }

    /// The `n_steps` equally spaced points `path((i-1)/(n-1))`, `i = 1..n`.
    pub fn points(&self) -> Vec<HermitianOperator> {
        let n = self.n_steps;
        if n == 1 {
            return vec![self.endpoint_end.clone()];
        }
        (0..n).map(|i| self.at(i as f64 / (n - 1) as f64)).collect()
    }
}

/// Everything needed to evaluate the objective and its gradient quickly.
struct ObjectiveContext<'a> {
    spec: &'a MachineSpec,
    rho: &'a DensityMatrix,
    rho_s: CMatrix,
    entropy: f64,
    fixed_part: CMatrix,
    param: HermitianParametrization,
}

impl<'a> ObjectiveContext<'a> {
    fn new(spec: &'a MachineSpec, rho: &'a DensityMatrix) -> Result<Self> {
        if rho.dim() != spec.sb_space().total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "state has dimension {}, machine SB space has {}",
                rho.dim(),
                spec.sb_space().total_dim()
            )));
        }
        let fixed = spec.bath_part().add(&spec.v)?;
        Ok(Self {
            spec,
            rho,
            rho_s: partial_trace_matrix(rho.entries(), spec.sb_space().factor_dims(), &[0]),
            entropy: von_neumann_entropy(rho),
            fixed_part: fixed.into_entries(),
            param: HermitianParametrization::new(spec.d_s()),
        })
    }

    fn h_sb(&self, h_s: &CMatrix) -> CMatrix {
        let d_b = self.spec.d_b();
        h_s.kronecker(&CMatrix::identity(d_b, d_b)) + &self.fixed_part
    }

    /// Objective value and the reduced Gibbs state `Tr_B w(H_SB)`.
    fn evaluate_matrix(&self, h_s: &CMatrix) -> (f64, CMatrix) {
        let beta = self.spec.beta.beta();
        let h = HermitianOperator::from_trusted(self.spec.sb_space().clone(), self.h_sb(h_s));
        let eig = eig_hermitian(&h);
        let e0 = eig.eigenvalues[0];
        let w: Vec<f64> = eig.eigenvalues.iter().map(|e| (-beta * (e - e0)).exp()).collect();
        let z: f64 = w.iter().sum();
        let ln_z = -beta * e0 + z.ln();
        let omega = eig.map_complex(|e| c((-beta * (e - e0)).exp() / z));
        let value = trace_of_product(self.rho.entries(), h.entries()) - self.entropy / beta + ln_z / beta;
        let omega_s = partial_trace_matrix(&omega, self.spec.sb_space().factor_dims(), &[0]);
        (value, omega_s)
    }

    fn value_and_gradient(&self, coeffs: &[f64]) -> (f64, Vec<f64>) {
        let h_s = self.param.reconstruct_from(coeffs);
        let (value, omega_s) = self.evaluate_matrix(h_s.entries());
        let diff = &self.rho_s - omega_s;
        let grad = self
            .param
            .basis
            .iter()
            .map(|b| trace_of_product(&diff, b.entries()))
            .collect();
        (value, grad)
    }
}

/// `F(rho, H~_SB) - F(w(H~_SB), H~_SB)` with `H~_SB = H~_S + H_B + V`.
pub fn objective(spec: &MachineSpec, rho_tilde: &DensityMatrix, h_tilde_s: &HermitianOperator) -> Result<f64> {
    if h_tilde_s.dim() != spec.d_s() {
        return Err(Error::DimensionMismatch(format!(
            "auxiliary Hamiltonian has dimension {}, machine has d_S = {}",
            h_tilde_s.dim(),
            spec.d_s()
        )));
    }
    let ctx = ObjectiveContext::new(spec, rho_tilde)?;
    Ok(ctx.evaluate_matrix(h_tilde_s.entries()).0)
}

/// Gradient with respect to the coefficients of `parametrization`:
/// component `k` is `Tr((rho - w(H~_SB)) (B_k ⊗ I))`.
pub fn objective_gradient(
    spec: &MachineSpec,
    rho_tilde: &DensityMatrix,
    parametrization: &HermitianParametrization,
) -> Result<Vec<f64>> {
    if parametrization.dim() != spec.d_s() {
        return Err(Error::DimensionMismatch("parametrization does not match d_S".into()));
    }
    let ctx = ObjectiveContext::new(spec, rho_tilde)?;
    let h_s = parametrization.reconstruct();
    let (_, omega_s) = ctx.evaluate_matrix(h_s.entries());
    let diff = &ctx.rho_s - omega_s;
    Ok(parametrization
        .basis
        .iter()
        .map(|b| trace_of_product(&diff, b.entries()))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub random_starts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub armijo: f64,
    pub backtrack: f64,
    /// Spectral norm of the random starting Hamiltonians.
    pub start_scale: f64,
    /// Weight of `I/d` mixed into `Tr_B rho` before taking the logarithm for the informed start.
    pub regularization: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            random_starts: 8,
            max_iterations: 5000,
            gradient_tolerance: 1e-9,
            armijo: 1e-4,
            backtrack: 0.5,
            start_scale: 1.0,
            regularization: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StartReport {
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct Minimization {
    pub h_s_star: HermitianOperator,
    pub min_value: f64,
    pub converged: bool,
    pub starts: Vec<StartReport>,
    /// Objective per iteration of the winning start.
    pub trace: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Steepest descent with Barzilai-Borwein trial steps and Armijo backtracking.
/// The identity coefficient (index 0) is held at zero.
fn descend(ctx: &ObjectiveContext, x0: Vec<f64>, cfg: &OptimizerConfig) -> (Vec<f64>, StartReport, Vec<f64>) {
    let mut x = x0;
    x[0] = 0.0;
    let (mut f, mut g) = ctx.value_and_gradient(&x);
    g[0] = 0.0;
    let mut trace = vec![f];
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < cfg.max_iterations && inf_norm(&g) >= cfg.gradient_tolerance {
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let slack = 4.0 * f64::EPSILON * f.abs().max(1.0);
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - alpha * gi).collect();
            let (ft, mut gt) = ctx.value_and_gradient(&trial);
            gt[0] = 0.0;
            if ft.is_finite() && ft <= f - cfg.armijo * alpha * g2 + slack {
                accepted = Some((trial, ft, gt));
                break;
            }
            alpha *= cfg.backtrack;
        }
        let Some((xn, fnew, gn)) = accepted else {
            break;
        };
        let sy: f64 = xn.iter().zip(&x).zip(gn.iter().zip(&g)).map(|((a, b), (c, d))| (a - b) * (c - d)).sum();
        let ss: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
        step = if sy > 0.0 { ss / sy } else { alpha * 2.0 };
        x = xn;
        f = fnew;
        g = gn;
        trace.push(f);
        iterations += 1;
    }
    let gradient_norm = inf_norm(&g);
    let converged = gradient_norm < cfg.gradient_tolerance;
    (
        x,
        StartReport {
            value: f,
            gradient_norm,
            iterations,
            converged,
        },
        trace,
    )
}

/// `min over H~_S` of [`objective`], multi-start.
pub fn minimize_irreversibility(
    spec: &MachineSpec,
    rho_tilde: &DensityMatrix,
    cfg: &OptimizerConfig,
) -> Result<Minimization> {
    let ctx = ObjectiveContext::new(spec, rho_tilde)?;
    let d = spec.d_s();
    let beta = spec.beta.beta();
    let rho_s = partial_trace(rho_tilde, &[0])?;
    let mixed = DensityMatrix::maximally_mixed(CompositeSpace::single(d));
    let regular = rho_s.mix(&mixed, cfg.regularization)?;
    let informed = hermitian_log(&regular.as_operator(), crate::operator::LOG_FLOOR)?.scale(-1.0 / beta);
    let mut starts = vec![ctx.param.coefficients_of(&informed)];
    for k in 0..cfg.random_starts {
        let mut rng = seeded_rng(child_seed(cfg.seed, k as u64));
        let h = random_hermitian(&mut rng, d, cfg.start_scale);
        starts.push(ctx.param.coefficients_of(&h));
    }
    let runs: Vec<_> = starts
        .into_par_iter()
        .map(|x0| descend(&ctx, x0, cfg))
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.value.total_cmp(&b.1 .1.value).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one start");
    let (x, report, trace) = &runs[best];
    Ok(Minimization {
        h_s_star: ctx.param.reconstruct_from(x),
        min_value: report.value,
        converged: report.converged,
        starts: runs.iter().map(|r| r.1.clone()).collect(),
        trace: trace.clone(),
    })
}

/// Bound on the work any protocol can extract from `rho` at the machine Hamiltonian.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub delta_f_rev: f64,
    pub delta_f_irrev: f64,
    pub bound: f64,
    pub minimizer_h_s: HermitianOperator,
    pub optimizer_trace: Vec<f64>,
    pub converged: bool,
}

pub fn theorem1_bound(spec: &MachineSpec, rho_initial: &DensityMatrix, cfg: &OptimizerConfig) -> Result<BoundReport> {
    if !spec.coupling_on {
        return Err(Error::InvalidArgument(
            "the bound is defined for a coupled initial Hamiltonian".into(),
        ));
    }
    let rho = rho_initial.with_space(spec.sb_space().clone())?;
    let h0 = spec.initial_h_sb();
    let beta = spec.beta;
    let w0 = gibbs_state(&h0, beta);
    let delta_f_rev = -(free_energy(&rho, &h0, beta)? - free_energy(&w0, &h0, beta)?);
    let m = minimize_irreversibility(spec, &rho, cfg)?;
    if !m.converged {
        log::warn!(
            "minimization did not reach gradient tolerance (best value {:.6e})",
            m.min_value
        );
    }
    let delta_f_irrev = -m.min_value;
    Ok(BoundReport {
        delta_f_rev,
        delta_f_irrev,
        bound: -delta_f_rev + delta_f_irrev,
        minimizer_h_s: m.h_s_star,
        optimizer_trace: m.trace,
        converged: m.converged,
    })
}

/// Bounds for several bath extensions of the same reduced state.
pub fn compare_extensions(
    spec: &MachineSpec,
    extensions: &[DensityMatrix],
    cfg: &OptimizerConfig,
) -> Result<Vec<BoundReport>> {
    let Some(first) = extensions.first() else {
        return Ok(Vec::new());
    };
    let dims = spec.sb_space().factor_dims();
    let reduced = partial_trace_matrix(first.entries(), dims, &[0]);
    for (k, e) in extensions.iter().enumerate().skip(1) {
        let dev = (partial_trace_matrix(e.entries(), dims, &[0]) - &reduced).norm();
        if dev > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "extension {k} has a different system marginal (deviation {dev:.3e})"
            )));
        }
    }
    extensions.iter().map(|e| theorem1_bound(spec, e, cfg)).collect()
}

/// Quench to `h_s_star`, then `n - 1` rounds of thermalise and a small quench along
/// the straight line back to the machine's `H_S`.
pub fn build_optimal_protocol(
    spec: &MachineSpec,
    h_s_star: &HermitianOperator,
    n: usize,
    final_thermalise: bool,
) -> Result<Protocol> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2 Hamiltonians, got {n}")));
    }
    let path = IsothermalPath::new(h_s_star.clone(), spec.h_s.clone(), n)?;
    let points = path.points();
    let mut steps = Vec::with_capacity(2 * n);
    steps.push(ProtocolStep::quench(points[0].clone()));
    for h in points.into_iter().skip(1) {
        steps.push(ProtocolStep::Thermalise);
        steps.push(ProtocolStep::quench(h));
    }
    if final_thermalise {
        steps.push(ProtocolStep::Thermalise);
    }
    Protocol::new(spec.h_s.clone(), true, steps)
}

/// `F(rho_S, H_S) - F(w(H_S), H_S)`.
pub fn weak_coupling_bound(h_s: &HermitianOperator, rho_s: &DensityMatrix, beta: InverseTemperature) -> Result<f64> {
    let w = gibbs_state(h_s, beta);
    Ok(free_energy(rho_s, h_s, beta)? - free_energy(&w, h_s, beta)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WilcoxCheck {
    pub lambda: f64,
    /// Central difference of `ln Z(lambda)`.
    pub finite_difference: f64,
    /// `-beta Tr(dH/dlambda w(H(lambda)))`.
    pub analytic: f64,
}

impl WilcoxCheck {
    pub fn residual(&self) -> f64 {
        (self.finite_difference - self.analytic).abs()
    }
}

/// Compares the numerical derivative of `ln Z` along the path with its closed form.
pub fn wilcox_check(spec: &MachineSpec, path: &IsothermalPath, lambda: f64, step: f64) -> Result<WilcoxCheck> {
    let ln_z = |l: f64| -> Result<f64> {
        Ok(log_partition(&assemble_h_sb(spec, &path.at(l), true)?, spec.beta))
    };
    let finite_difference = (ln_z(lambda + step)? - ln_z(lambda - step)?) / (2.0 * step);
    let h = assemble_h_sb(spec, &path.at(lambda), true)?;
    let w = gibbs_state(&h, spec.beta);
    let dh = tensor_embed(&path.derivative(), spec.sb_space(), 0)?;
    let analytic = -spec.beta.beta() * dh.expectation(&w)?;
    Ok(WilcoxCheck {
        lambda,
        finite_difference,
        analytic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{run_protocol, thermalise};
    use crate::operator::{trace_distance, UnitaryOperator};
    use crate::random::{random_density_matrix_on, random_hermitian_on};
    use crate::thermo::relative_entropy;

    fn b(x: f64) -> InverseTemperature {
        InverseTemperature::new(x).unwrap()
    }

    fn machine(seed: u64, d_s: usize, d_b: usize, v: f64, beta: f64) -> MachineSpec {
        let mut rng = seeded_rng(seed);
        let h_s = random_hermitian(&mut rng, d_s, 1.0);
        let h_b = random_hermitian(&mut rng, d_b, 1.0);
        let v = random_hermitian_on(&mut rng, CompositeSpace::new(vec![d_s, d_b]).unwrap(), v);
        MachineSpec::new(h_s, h_b, v, b(beta)).unwrap()
    }

    fn gauge_distance(a: &HermitianOperator, b: &HermitianOperator) -> f64 {
        (a.traceless_part().entries() - b.traceless_part().entries()).norm()
    }

    #[test]
    fn basis_is_orthonormal() {
        for d in 1..=4 {
            let p = HermitianParametrization::new(d);
            assert_eq!(p.len(), d * d);
            for (i, a) in p.basis.iter().enumerate() {
                for (j, bb) in p.basis.iter().enumerate() {
                    let ip = trace_of_product(a.entries(), bb.entries());
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn parametrization_round_trip() {
        let mut rng = seeded_rng(1);
        let h = random_hermitian(&mut rng, 3, 2.0);
        let mut p = HermitianParametrization::new(3);
        p.set_from(&h);
        assert!((p.reconstruct().entries() - h.entries()).norm() < 1e-12);
    }

    #[test]
    fn path_endpoints_are_exact() {
        let mut rng = seeded_rng(2);
        let a = random_hermitian(&mut rng, 2, 1.0);
        let z = random_hermitian(&mut rng, 2, 1.0);
        let path = IsothermalPath::new(a.clone(), z.clone(), 5).unwrap();
        let pts = path.points();
        assert_eq!(pts[0], a);
        assert_eq!(pts[4], z);
    }

    #[test]
    fn objective_vanishes_at_gibbs_fixed_point() {
        let spec = machine(3, 2, 3, 0.8, 1.2);
        let mut rng = seeded_rng(3);
        let h = random_hermitian(&mut rng, 2, 1.0);
        let w = thermalise(&spec, &h, true).unwrap();
        assert!(objective(&spec, &w, &h).unwrap().abs() < 1e-12);
    }

    #[test]
    fn objective_equals_scaled_relative_entropy() {
        let spec = machine(4, 2, 3, 0.8, 0.7);
        let mut rng = seeded_rng(4);
        for _ in 0..5 {
            let rho = random_density_matrix_on(&mut rng, spec.sb_space().clone());
            let h = random_hermitian(&mut rng, 2, 1.5);
            let w = thermalise(&spec, &h, true).unwrap();
            let want = relative_entropy(&rho, &w).unwrap() / 0.7;
            assert!((objective(&spec, &rho, &h).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn objective_is_invariant_under_identity_shift() {
        let spec = machine(5, 2, 2, 0.5, 1.0);
        let mut rng = seeded_rng(5);
        let rho = random_density_matrix_on(&mut rng, spec.sb_space().clone());
        let h = random_hermitian(&mut rng, 2, 1.0);
        let a = objective(&spec, &rho, &h).unwrap();
        let shifted = objective(&spec, &rho, &h.shift(3.7)).unwrap();
        assert!((a - shifted).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_minimum_at_log_of_marginal() {
        let mut spec = machine(6, 2, 3, 0.0, 1.4);
        spec.v = HermitianOperator::zeros(spec.sb_space().clone());
        let mut rng = seeded_rng(6);
        let h_prime = random_hermitian(&mut rng, 2, 1.0);
        let rho = gibbs_state(&h_prime, spec.beta).tensor(&gibbs_state(&spec.h_b, spec.beta));
        assert!(objective(&spec, &rho, &h_prime).unwrap().abs() < 1e-12);
        let m = minimize_irreversibility(&spec, &rho, &OptimizerConfig::default()).unwrap();
        assert!(m.min_value.abs() < 1e-10);
        assert!(gauge_distance(&m.h_s_star, &h_prime) < 1e-6);
    }

    fn central_difference(spec: &MachineSpec, rho: &DensityMatrix, p: &HermitianParametrization, k: usize, h: f64) -> f64 {
        let mut plus = p.coeffs.clone();
        let mut minus = p.coeffs.clone();
        plus[k] += h;
        minus[k] -= h;
        let fp = objective(spec, rho, &p.reconstruct_from(&plus)).unwrap();
        let fm = objective(spec, rho, &p.reconstruct_from(&minus)).unwrap();
        (fp - fm) / (2.0 * h)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let spec = machine(7, 2, 4, 1.0, 0.9);
        let mut rng = seeded_rng(7);
        let rho = random_density_matrix_on(&mut rng, spec.sb_space().clone());
        let mut p = HermitianParametrization::new(2);
        p.set_from(&random_hermitian(&mut rng, 2, 1.0));
        let g = objective_gradient(&spec, &rho, &p).unwrap();
        assert!(g[0].abs() < 1e-14);
        for k in 0..p.len() {
            assert!((g[k] - central_difference(&spec, &rho, &p, k, 1e-5)).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_vanishes_at_planted_minimum() {
        let spec = machine(8, 2, 2, 1.0, 1.0);
        let mut rng = seeded_rng(8);
        let h = random_hermitian(&mut rng, 2, 1.0);
        let rho = thermalise(&spec, &h, true).unwrap();
        let mut p = HermitianParametrization::new(2);
        p.set_from(&h);
        let g = objective_gradient(&spec, &rho, &p).unwrap();
        assert!(inf_norm(&g) < 1e-8);
    }

    #[test]
    fn minimizer_recovers_own_hamiltonian() {
        let spec = machine(9, 2, 4, 1.0, 1.0);
        let rho = spec.initial_h_sb();
        let rho = gibbs_state(&rho, spec.beta);
        let m = minimize_irreversibility(&spec, &rho, &OptimizerConfig::default()).unwrap();
        assert!(m.converged);
        assert!(m.min_value.abs() < 1e-10);
        assert!(gauge_distance(&m.h_s_star, &spec.h_s) < 1e-6);
    }

    #[test]
    fn minimizer_recovers_planted_hamiltonian() {
        let spec = machine(10, 2, 4, 1.2, 1.5);
        let mut rng = seeded_rng(10);
        let planted = random_hermitian(&mut rng, 2, 1.3);
        let rho = thermalise(&spec, &planted, true).unwrap();
        let m = minimize_irreversibility(&spec, &rho, &OptimizerConfig::default()).unwrap();
        assert!(m.min_value < 1e-10 && m.min_value > -1e-10);
        assert!(gauge_distance(&m.h_s_star, &planted) < 1e-6);
        assert!(m.starts.iter().all(|s| s.converged));
    }

    #[test]
    fn one_parameter_family_matches_grid_scan() {
        let spec = machine(11, 2, 2, 0.9, 1.0);
        let mut rng = seeded_rng(11);
        let rho = random_density_matrix_on(&mut rng, spec.sb_space().clone());
        let sz = |t: f64| HermitianOperator::from_real_diagonal(CompositeSpace::single(2), &[t / 2.0, -t / 2.0]).unwrap();
        let grid: Vec<f64> = (0..401).map(|i| -10.0 + 20.0 * i as f64 / 400.0).collect();
        let (t_grid, f_grid) = grid
            .iter()
            .map(|&t| (t, objective(&spec, &rho, &sz(t)).unwrap()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        // descent restricted to the sigma_z coefficient
        let mut t = 0.0;
        let mut step = 1.0;
        for _ in 0..200 {
            let f = objective(&spec, &rho, &sz(t)).unwrap();
            let g = (objective(&spec, &rho, &sz(t + 1e-6)).unwrap() - objective(&spec, &rho, &sz(t - 1e-6)).unwrap()) / 2e-6;
            while objective(&spec, &rho, &sz(t - step * g)).unwrap() > f - 1e-4 * step * g * g && step > 1e-12 {
                step *= 0.5;
            }
            t -= step * g;
            step *= 2.0;
        }
        assert!((t - t_grid).abs() <= 0.05 + 1e-9);
        assert!(objective(&spec, &rho, &sz(t)).unwrap() <= f_grid + 1e-12);
    }

    #[test]
    fn bound_vanishes_for_equilibrium_state() {
        let spec = machine(12, 2, 2, 1.0, 1.0);
        let rho = gibbs_state(&spec.initial_h_sb(), spec.beta);
        let r = theorem1_bound(&spec, &rho, &OptimizerConfig::default()).unwrap();
        assert!(r.bound.abs() < 1e-10);
        assert!((r.bound - (-r.delta_f_rev + r.delta_f_irrev)).abs() < 1e-12);
    }

    #[test]
    fn planted_bound_is_reversible_free_energy() {
        let spec = machine(13, 2, 3, 1.0, 1.0);
        let mut rng = seeded_rng(13);
        let planted = random_hermitian(&mut rng, 2, 1.0);
        let rho = thermalise(&spec, &planted, true).unwrap();
        let r = theorem1_bound(&spec, &rho, &OptimizerConfig::default()).unwrap();
        let h0 = spec.initial_h_sb();
        let w0 = gibbs_state(&h0, spec.beta);
        let want = free_energy(&rho, &h0, spec.beta).unwrap() - free_energy(&w0, &h0, spec.beta).unwrap();
        assert!((r.bound - want).abs() < 1e-10);
        assert!(r.delta_f_irrev.abs() < 1e-10);
    }

    #[test]
    fn generic_state_has_strictly_negative_irreversible_part() {
        let spec = machine(14, 2, 2, 1.0, 1.0);
        let mut rng = seeded_rng(14);
        let rho = random_density_matrix_on(&mut rng, spec.sb_space().clone());
        let r = theorem1_bound(&spec, &rho, &OptimizerConfig::default()).unwrap();
        assert!(r.delta_f_irrev < -1e-6);
        assert!(r.bound < -r.delta_f_rev);
    }

    #[test]
    fn optimal_protocol_rejects_small_n_and_is_trivial_at_equilibrium() {
        let spec = machine(15, 2, 2, 1.0, 1.0);
        assert!(build_optimal_protocol(&spec, &spec.h_s, 1, false).is_err());
        let rho = gibbs_state(&spec.initial_h_sb(), spec.beta);
        let r = theorem1_bound(&spec, &rho, &OptimizerConfig::default()).unwrap();
        for n in [2, 8, 32] {
            let p = build_optimal_protocol(&spec, &r.minimizer_h_s, n, true).unwrap();
            let (ledger, _) = run_protocol(&spec, &p, &rho).unwrap();
            assert!(ledger.total_work.abs() < 1e-9);
        }
    }

    #[test]
    fn weak_coupling_examples() {
        let h = HermitianOperator::from_real_diagonal(CompositeSpace::single(2), &[0.0, 1.5]).unwrap();
        let beta = b(0.8);
        let w = gibbs_state(&h, beta);
        assert!(weak_coupling_bound(&h, &w, beta).unwrap().abs() < 1e-14);
        let excited = DensityMatrix::basis_state(CompositeSpace::single(2), 1).unwrap();
        let got = weak_coupling_bound(&h, &excited, beta).unwrap();
        // E + ln(1 + e^{-beta E}) / beta
        let scalar = 1.5 + (1.0 + (-0.8f64 * 1.5).exp()).ln() / 0.8;
        assert!((got - scalar).abs() < 1e-12);
        let via_rel = {
            let rel = relative_entropy(&excited, &w).unwrap();
            rel / 0.8
        };
        assert!((got - via_rel).abs() < 1e-12);
    }

    #[test]
    fn wilcox_identity_along_path() {
        let spec = machine(16, 2, 4, 1.0, 1.3);
        let mut rng = seeded_rng(16);
        let path = IsothermalPath::new(random_hermitian(&mut rng, 2, 1.0), spec.h_s.clone(), 2).unwrap();
        for i in 0..5 {
            let chk = wilcox_check(&spec, &path, 0.1 + 0.2 * i as f64, 1e-4).unwrap();
            assert!(chk.residual() < 1e-6);
        }
    }

    #[test]
    fn extensions_must_share_marginal() {
        let spec = machine(17, 2, 2, 1.0, 1.0);
        let mut rng = seeded_rng(17);
        let a = random_density_matrix_on(&mut rng, spec.sb_space().clone());
        let u = crate::random::random_unitary(&mut rng, 2);
        let u_b = CMatrix::identity(2, 2).kronecker(&u);
        let rotated = a
            .conjugate_by(&UnitaryOperator::new(spec.sb_space().clone(), u_b).unwrap())
            .unwrap();
        let reports = compare_extensions(&spec, &[a.clone(), rotated], &OptimizerConfig::default()).unwrap();
        assert_eq!(reports.len(), 2);
        let other = random_density_matrix_on(&mut rng, spec.sb_space().clone());
        assert!(trace_distance(&partial_trace(&a, &[0]).unwrap(), &partial_trace(&other, &[0]).unwrap()).unwrap() > 0.0);
        assert!(compare_extensions(&spec, &[a, other], &OptimizerConfig::default()).is_err());
    }
}
