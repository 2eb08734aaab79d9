//! The abstract machine: quenches of the system Hamiltonian, thermalisations and
//! the bookkeeping of work, heat and energy.

use crate::error::{Error, Result};
use crate::operator::{
    tensor_embed, trace_of_product, CompositeSpace, DensityMatrix, HermitianOperator,
};
use crate::thermo::{
    free_energy, gibbs_state, relative_entropy, von_neumann_entropy, InverseTemperature,
};

/// Tolerance for the cyclicity check on protocols.
pub const CYCLE_TOL: f64 = 1e-12;

/// System Hamiltonian `H_S`, bath Hamiltonian `H_B` and the fixed coupling `V`.
#[derive(Clone, Debug)]
pub struct MachineSpec {
    pub h_s: HermitianOperator,
    pub h_b: HermitianOperator,
    pub v: HermitianOperator,
    pub beta: InverseTemperature,
    pub coupling_on: bool,
    sb_space: CompositeSpace,
    bath_part: HermitianOperator,
}

impl MachineSpec {
    pub fn new(
        h_s: HermitianOperator,
        h_b: HermitianOperator,
        v: HermitianOperator,
        beta: InverseTemperature,
    ) -> Result<Self> {
        let sb_space = CompositeSpace::new(vec![h_s.dim(), h_b.dim()])?;
        if v.dim() != sb_space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "coupling has dimension {} but d_S * d_B = {} * {}",
                v.dim(),
                h_s.dim(),
                h_b.dim()
            )));
        }
        let v = v.with_space(sb_space.clone())?;
        let h_s = h_s.with_space(CompositeSpace::single(sb_space.factor_dims()[0]))?;
        let h_b = h_b.with_space(CompositeSpace::single(sb_space.factor_dims()[1]))?;
        let bath_part = tensor_embed(&h_b, &sb_space, 1)?;
        Ok(Self {
            h_s,
            h_b,
            v,
            beta,
            coupling_on: true,
            sb_space,
            bath_part,
        })
    }

    pub fn with_coupling_flag(mut self, on: bool) -> Self {
        self.coupling_on = on;
        self
    }

    /// Same machine with `V` multiplied by `s`.
    pub fn with_scaled_coupling(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.v = self.v.scale(s);
        out
    }

    pub fn d_s(&self) -> usize {
        self.sb_space.factor_dims()[0]
    }

    pub fn d_b(&self) -> usize {
        self.sb_space.factor_dims()[1]
    }

    pub fn sb_space(&self) -> &CompositeSpace {
        &self.sb_space
    }

    pub fn system_space(&self) -> CompositeSpace {
        CompositeSpace::single(self.d_s())
    }

    /// `H_SB` for the machine's own `H_S` and coupling flag.
    pub fn initial_h_sb(&self) -> HermitianOperator {
        assemble_h_sb(self, &self.h_s, self.coupling_on).expect("machine dimensions are consistent")
    }

    pub(crate) fn bath_part(&self) -> &HermitianOperator {
        &self.bath_part
    }
}

/// `H_S ⊗ I + I ⊗ H_B (+ V)`.
pub fn assemble_h_sb(
    spec: &MachineSpec,
    h_s: &HermitianOperator,
    coupling_on: bool,
) -> Result<HermitianOperator> {
    if h_s.dim() != spec.d_s() {
        return Err(Error::DimensionMismatch(format!(
            "system Hamiltonian has dimension {}, machine has d_S = {}",
            h_s.dim(),
            spec.d_s()
        )));
    }
    let sys = CompositeSpace::single(spec.d_s());
    let mut h = tensor_embed(&h_s.with_space(sys)?, &spec.sb_space, 0)?.add(&spec.bath_part)?;
    if coupling_on {
        h = h.add(&spec.v)?;
    }
    Ok(h)
}

/// Replaces the SB state by the global Gibbs state of the interacting Hamiltonian.
pub fn thermalise(
    spec: &MachineSpec,
    h_s: &HermitianOperator,
    coupling_on: bool,
) -> Result<DensityMatrix> {
    if !coupling_on {
        return Err(Error::IllegalProtocol(
            "thermalisation requires system and bath to be coupled".into(),
        ));
    }
    Ok(gibbs_state(&assemble_h_sb(spec, h_s, true)?, spec.beta))
}

/// `Tr(rho (H_before - H_after))`, positive when the battery gains energy.
pub fn quench_work(
    rho_sb: &DensityMatrix,
    h_before: &HermitianOperator,
    h_after: &HermitianOperator,
) -> Result<f64> {
    if rho_sb.dim() != h_before.dim() || rho_sb.dim() != h_after.dim() {
        return Err(Error::DimensionMismatch(format!(
            "quench work: state {} vs Hamiltonians {} and {}",
            rho_sb.dim(),
            h_before.dim(),
            h_after.dim()
        )));
    }
    Ok(trace_of_product(rho_sb.entries(), h_before.entries())
        - trace_of_product(rho_sb.entries(), h_after.entries()))
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolStep {
    Quench {
        new_h_s: HermitianOperator,
        coupling_on: bool,
    },
    Thermalise,
}

impl ProtocolStep {
    pub fn quench(new_h_s: HermitianOperator) -> Self {
        ProtocolStep::Quench {
            new_h_s,
            coupling_on: true,
        }
    }

    pub fn is_thermalise(&self) -> bool {
        matches!(self, ProtocolStep::Thermalise)
    }
}

/// A cyclic list of quenches and thermalisations.
#[derive(Clone, Debug, PartialEq)]
pub struct Protocol {
    initial_h_s: HermitianOperator,
    initial_coupling: bool,
    steps: Vec<ProtocolStep>,
}

/// One constant-Hamiltonian stretch of a protocol and how often it thermalises.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub h_s: HermitianOperator,
    pub coupling_on: bool,
    pub thermalisations: usize,
}

impl Protocol {
    /// Rejects protocols that do not return to the initial Hamiltonian.
    pub fn new(
        initial_h_s: HermitianOperator,
        initial_coupling: bool,
        steps: Vec<ProtocolStep>,
    ) -> Result<Self> {
        let p = Self {
            initial_h_s,
            initial_coupling,
            steps,
        };
        p.check_cyclic()?;
        Ok(p)
    }

    pub fn empty(initial_h_s: HermitianOperator, initial_coupling: bool) -> Self {
        Self {
            initial_h_s,
            initial_coupling,
            steps: Vec::new(),
        }
    }

    pub fn initial_h_s(&self) -> &HermitianOperator {
        &self.initial_h_s
    }

    pub fn initial_coupling(&self) -> bool {
        self.initial_coupling
    }

    pub fn steps(&self) -> &[ProtocolStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn num_quenches(&self) -> usize {
        self.steps.len() - self.steps.iter().filter(|s| s.is_thermalise()).count()
    }

    fn final_hamiltonian(&self) -> (&HermitianOperator, bool) {
        self.steps
            .iter()
            .rev()
            .find_map(|s| match s {
                ProtocolStep::Quench {
                    new_h_s,
                    coupling_on,
                } => Some((new_h_s, *coupling_on)),
                ProtocolStep::Thermalise => None,
            })
            .unwrap_or((&self.initial_h_s, self.initial_coupling))
    }

    fn check_cyclic(&self) -> Result<()> {
        let (last, coupling) = self.final_hamiltonian();
        if last.dim() != self.initial_h_s.dim() {
            return Err(Error::IllegalProtocol(
                "final system Hamiltonian has the wrong dimension".into(),
            ));
        }
        let scale = self.initial_h_s.frobenius_norm().max(1.0);
        let dev = (last.entries() - self.initial_h_s.entries()).norm() / scale;
        if dev > CYCLE_TOL {
            return Err(Error::IllegalProtocol(format!(
                "protocol is not cyclic: final H_S differs from the initial one by {dev:.3e}"
            )));
        }
        if coupling != self.initial_coupling {
            return Err(Error::IllegalProtocol(
                "protocol is not cyclic: coupling flag differs at the end".into(),
            ));
        }
        Ok(())
    }

    /// Hamiltonian stretches in order, starting with the initial one.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = vec![Segment {
            h_s: self.initial_h_s.clone(),
            coupling_on: self.initial_coupling,
            thermalisations: 0,
        }];
        for step in &self.steps {
            match step {
                ProtocolStep::Thermalise => out.last_mut().unwrap().thermalisations += 1,
                ProtocolStep::Quench {
                    new_h_s,
                    coupling_on,
                } => out.push(Segment {
                    h_s: new_h_s.clone(),
                    coupling_on: *coupling_on,
                    thermalisations: 0,
                }),
            }
        }
        out
    }

    /// Inverse of [`Protocol::segments`].
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        let mut it = segments.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::IllegalProtocol("no segments".into()))?;
        let mut steps = vec![ProtocolStep::Thermalise; first.thermalisations];
        for seg in it {
            steps.push(ProtocolStep::Quench {
                new_h_s: seg.h_s,
                coupling_on: seg.coupling_on,
            });
            steps.extend(std::iter::repeat_n(ProtocolStep::Thermalise, seg.thermalisations));
        }
        Protocol::new(first.h_s, first.coupling_on, steps)
    }
}

/// Per-step work and energy record of a protocol run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkLedger {
    pub per_step_work: Vec<f64>,
    pub total_work: f64,
    /// `Tr(rho H_SB)` after each step.
    pub per_step_energy_sb: Vec<f64>,
    /// Energy drawn from the environment during thermalisations.
    pub heat: f64,
}

/// Runs the protocol from `rho_initial`, returning the ledger and the final SB state.
pub fn run_protocol(
    spec: &MachineSpec,
    protocol: &Protocol,
    rho_initial: &DensityMatrix,
) -> Result<(WorkLedger, DensityMatrix)> {
    protocol.check_cyclic()?;
    if rho_initial.dim() != spec.sb_space.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has dimension {}, machine SB space has {}",
            rho_initial.dim(),
            spec.sb_space.total_dim()
        )));
    }
    let mut rho = rho_initial.with_space(spec.sb_space.clone())?;
    let mut h_s = protocol.initial_h_s.clone();
    let mut coupling = protocol.initial_coupling;
    let mut h = assemble_h_sb(spec, &h_s, coupling)?;
    let mut ledger = WorkLedger::default();
    for step in &protocol.steps {
        match step {
            ProtocolStep::Quench {
                new_h_s,
                coupling_on,
            } => {
                let h_new = assemble_h_sb(spec, new_h_s, *coupling_on)?;
                ledger.per_step_work.push(quench_work(&rho, &h, &h_new)?);
                h_s = new_h_s.clone();
                coupling = *coupling_on;
                h = h_new;
            }
            ProtocolStep::Thermalise => {
                let before = trace_of_product(rho.entries(), h.entries());
                rho = thermalise(spec, &h_s, coupling)?;
                ledger.heat += trace_of_product(rho.entries(), h.entries()) - before;
                ledger.per_step_work.push(0.0);
            }
        }
        ledger
            .per_step_energy_sb
            .push(trace_of_product(rho.entries(), h.entries()));
    }
    ledger.total_work = ledger.per_step_work.iter().sum();
    Ok((ledger, rho))
}

/// Free-energy terms and dissipation whose combination equals the work of a proof-form protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkDecomposition {
    /// `[F(rho, H0), F(w(H0), H0), F(rho, H1), F(w(H1), H1)]`.
    pub free_energy_terms: [f64; 4],
    /// `S(w(H_i) || w(H_{i+1})) / beta` for consecutive thermalised Hamiltonians, ending at `H0`.
    pub relative_entropy_terms: Vec<f64>,
    pub dissipation_sum: f64,
}

impl WorkDecomposition {
    pub fn total(&self) -> f64 {
        let [a, b, c, d] = self.free_energy_terms;
        (a - b) - (c - d) - self.dissipation_sum
    }
}

/// Splits the work of a protocol of the form
/// `Quench(H1), Thermalise, Quench(H2), ..., Thermalise, Quench(H0) [, Thermalise]`.
pub fn exact_work_decomposition(
    spec: &MachineSpec,
    protocol: &Protocol,
    rho_initial: &DensityMatrix,
) -> Result<WorkDecomposition> {
    protocol.check_cyclic()?;
    let segs = protocol.segments();
    let reject = |why: &str| Err(Error::IllegalProtocol(format!("not in proof form: {why}")));
    if segs[0].thermalisations != 0 {
        return reject("the protocol must start with a quench");
    }
    if segs.len() < 3 {
        return reject("at least one thermalisation between two quenches is required");
    }
    let inner = &segs[1..segs.len() - 1];
    if inner.iter().any(|s| s.thermalisations != 1) {
        return reject("every quench but the last must be followed by exactly one thermalisation");
    }
    if segs[segs.len() - 1].thermalisations > 1 {
        return reject("at most one trailing thermalisation");
    }
    let beta = spec.beta;
    let rho = rho_initial.with_space(spec.sb_space.clone())?;
    let h0 = assemble_h_sb(spec, &segs[0].h_s, segs[0].coupling_on)?;
    let h1 = assemble_h_sb(spec, &inner[0].h_s, inner[0].coupling_on)?;
    let w0 = gibbs_state(&h0, beta);
    let w1 = gibbs_state(&h1, beta);
    let free_energy_terms = [
        free_energy(&rho, &h0, beta)?,
        free_energy(&w0, &h0, beta)?,
        free_energy(&rho, &h1, beta)?,
        free_energy(&w1, &h1, beta)?,
    ];
    let mut gibbs: Vec<DensityMatrix> = Vec::with_capacity(inner.len() + 1);
    for s in inner {
        gibbs.push(thermalise(spec, &s.h_s, s.coupling_on)?);
    }
    gibbs.push(w0);
    let relative_entropy_terms = gibbs
        .windows(2)
        .map(|w| relative_entropy(&w[0], &w[1]).map(|s| s / beta.beta()))
        .collect::<Result<Vec<_>>>()?;
    let dissipation_sum = relative_entropy_terms.iter().sum();
    Ok(WorkDecomposition {
        free_energy_terms,
        relative_entropy_terms,
        dissipation_sum,
    })
}

/// Energy, entropy and second-law bookkeeping between two SB configurations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatReport {
    pub delta_e_sb: f64,
    pub delta_s_sb: f64,
    /// Heat absorbed from the environment, `W + dE_SB`.
    pub heat: f64,
    /// `dS_SB / beta - heat`; nonnegative for any protocol.
    pub clausius_slack: f64,
}

pub fn heat_energy_ledger(
    spec: &MachineSpec,
    ledger: &WorkLedger,
    rho_initial: &DensityMatrix,
    rho_final: &DensityMatrix,
    h_initial: &HermitianOperator,
    h_final: &HermitianOperator,
) -> Result<HeatReport> {
    let e_i = h_initial.expectation(rho_initial)?;
    let e_f = h_final.expectation(rho_final)?;
    let delta_e_sb = e_f - e_i;
    let delta_s_sb = von_neumann_entropy(rho_final) - von_neumann_entropy(rho_initial);
    let heat = ledger.total_work + delta_e_sb;
    Ok(HeatReport {
        delta_e_sb,
        delta_s_sb,
        heat,
        clausius_slack: delta_s_sb / spec.beta.beta() - heat,
    })
}

/// Runs the protocol and evaluates its heat report against the cyclic Hamiltonian.
pub fn run_with_heat(
    spec: &MachineSpec,
    protocol: &Protocol,
    rho_initial: &DensityMatrix,
) -> Result<(WorkLedger, DensityMatrix, HeatReport)> {
    let (ledger, rho_final) = run_protocol(spec, protocol, rho_initial)?;
    let h = assemble_h_sb(spec, protocol.initial_h_s(), protocol.initial_coupling())?;
    let report = heat_energy_ledger(spec, &ledger, rho_initial, &rho_final, &h, &h)?;
    Ok((ledger, rho_final, report))
}

/// Visits the Hamiltonians in reverse order; the thermalisations held at the
/// `k`-th Hamiltonian of the original are held at the `(n-k)`-th of the reverse.
pub fn reverse_protocol(protocol: &Protocol) -> Protocol {
    let mut segs = protocol.segments();
    let n = segs.len() - 1;
    let counts: Vec<usize> = segs.iter().map(|s| s.thermalisations).collect();
    let hams: Vec<(HermitianOperator, bool)> =
        segs.iter().map(|s| (s.h_s.clone(), s.coupling_on)).collect();
    for (j, seg) in segs.iter_mut().enumerate() {
        let (h, c) = &hams[n - j];
        seg.h_s = h.clone();
        seg.coupling_on = *c;
        seg.thermalisations = counts[n - j];
    }
    // The endpoints coincide for a cyclic protocol; keep the original labels exactly.
    segs[0].h_s = protocol.initial_h_s.clone();
    segs[0].coupling_on = protocol.initial_coupling;
    segs[n].h_s = protocol.initial_h_s.clone();
    segs[n].coupling_on = protocol.initial_coupling;
    Protocol::from_segments(segs).expect("reversal of a cyclic protocol is cyclic")
}
