use super::battery::FlatBatteryState;
use super::dephase::{assemble_dephased, product_populations};
use super::quench::{battery_populations, build_quench_unitary, quench_joint, reduce_r, reduce_w};
use crate::error::{Error, Result};
use crate::machine::{assemble_h_sb, run_protocol, thermalise, MachineSpec, Protocol, ProtocolStep, WorkLedger};
use crate::operator::{eig_hermitian, trace_of_product, CMatrix, DensityMatrix};

/// Constant multiplying `ε` times the spectral spread in the coherent-battery tolerance.
pub const COHERENT_WORK_CONSTANT: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct StepComparison {
    pub step: usize,
    pub is_quench: bool,
    pub physical: f64,
    pub abstract_work: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub rounding_residual: f64,
    pub epsilon: f64,
}

impl StepComparison {
    pub fn within_tolerance(&self) -> bool {
        self.difference <= self.tolerance
    }
}

#[derive(Clone, Debug)]
pub struct PhysicalRun {
    pub physical: WorkLedger,
    pub abstract_ledger: WorkLedger,
    pub steps: Vec<StepComparison>,
    pub max_rounding_residual: f64,
    pub final_battery_populations: Vec<f64>,
}

impl PhysicalRun {
    /// `|W_physical − W_abstract| / |W_abstract|`.
    pub fn relative_total_difference(&self) -> f64 {
        (self.physical.total_work - self.abstract_ledger.total_work).abs() / self.abstract_ledger.total_work.abs()
    }
}

fn spread(h: &crate::operator::HermitianOperator) -> f64 {
    let e = eig_hermitian(h).eigenvalues;
    e[e.len() - 1] - e[0]
}

/// Runs `protocol` on `S ⊗ B ⊗ W ⊗ Q` with an explicit battery.
///
/// The battery starts in `battery` and stays coherent until the first thermalisation;
/// every thermalisation is followed by dephasing in the product energy eigenbasis.
/// Spectra whose grid rounding exceeds `max_residual` are rejected.
pub fn physical_protocol_run(
    spec: &MachineSpec,
    protocol: &Protocol,
    rho_initial: &DensityMatrix,
    battery: &FlatBatteryState,
    max_residual: f64,
) -> Result<PhysicalRun> {
    let (abstract_ledger, _) = run_protocol(spec, protocol, rho_initial)?;
    let ladder = &battery.ladder;
    let (d, nw) = (spec.sb_space().total_dim(), ladder.n_levels());
    let mut joint: CMatrix = rho_initial.entries().kronecker(battery.density_matrix().entries());
    let mut coherent = true;
    let mut h_s = protocol.initial_h_s().clone();
    let mut coupling = protocol.initial_coupling();
    let mut h = assemble_h_sb(spec, &h_s, coupling)?;
    let mut ledger = WorkLedger::default();
    let mut steps = Vec::with_capacity(protocol.len());
    let mut max_res: f64 = 0.0;
    for (index, step) in protocol.steps().iter().enumerate() {
        let mut cmp = StepComparison {
            step: index,
            is_quench: false,
            physical: 0.0,
            abstract_work: abstract_ledger.per_step_work[index],
            difference: 0.0,
            tolerance: 0.0,
            rounding_residual: 0.0,
            epsilon: 0.0,
        };
        match step {
            ProtocolStep::Quench { new_h_s, coupling_on } => {
                let h_new = assemble_h_sb(spec, new_h_s, *coupling_on)?;
                let u = build_quench_unitary(ladder, &h, &h_new)?;
                let residual = u.rounding_residual();
                if residual > max_residual {
                    return Err(Error::Incommensurate {
                        residual,
                        tolerance: max_residual,
                    });
                }
                let (after, work) = quench_joint(&u, &joint)?;
                joint = after;
                max_res = max_res.max(residual);
                let epsilon = if coherent { u.epsilon(battery.window_levels) } else { 0.0 };
                cmp.is_quench = true;
                cmp.physical = work;
                cmp.rounding_residual = residual;
                cmp.epsilon = epsilon;
                cmp.tolerance = residual + COHERENT_WORK_CONSTANT * epsilon * spread(&h_new) + 1e-9;
                ledger.per_step_work.push(work);
                h_s = new_h_s.clone();
                coupling = *coupling_on;
                h = h_new;
            }
            ProtocolStep::Thermalise => {
                let rho_r = reduce_r(&joint, d, nw);
                let before = trace_of_product(&rho_r, h.entries());
                let omega = thermalise(spec, &h_s, coupling)?;
                let product = omega.entries().kronecker(&reduce_w(&joint, d, nw));
                let u_r = eig_hermitian(&h).eigenvectors;
                let u_w = CMatrix::identity(nw, nw);
                let pops = product_populations(&product, &u_r, &u_w, true);
                joint = assemble_dephased(&pops, &u_r, &u_w, true);
                coherent = false;
                ledger.heat += trace_of_product(omega.entries(), h.entries()) - before;
                ledger.per_step_work.push(0.0);
                cmp.tolerance = 1e-12;
            }
        }
        cmp.difference = (cmp.physical - cmp.abstract_work).abs();
        steps.push(cmp);
        ledger
            .per_step_energy_sb
            .push(trace_of_product(&reduce_r(&joint, d, nw), h.entries()));
    }
    ledger.total_work = ledger.per_step_work.iter().sum();
    Ok(PhysicalRun {
        physical: ledger,
        abstract_ledger,
        steps,
        max_rounding_residual: max_res,
        final_battery_populations: battery_populations(&joint, d, nw),
    })
}
