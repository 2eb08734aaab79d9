use serde::{Deserialize, Serialize};

use crate::bounds::{build_optimal_protocol, theorem1_bound, OptimizerConfig};
use crate::error::{Error, Result};
use crate::machine::{MachineSpec, Protocol, ProtocolStep};
use crate::operator::{c, eig_hermitian, partial_trace, CMatrix, CompositeSpace, DensityMatrix, HermitianOperator, C64};
use crate::random::{
    child_seed, random_density_matrix_on, random_hermitian, random_hermitian_on, random_pure_state, seeded_rng,
};
use crate::thermo::{gibbs_state, InverseTemperature};

/// Row-major complex matrix as `[re, im]` pairs.
pub type MatrixRows = Vec<Vec<[f64; 2]>>;

/// Stream identifiers handed to `child_seed`.
pub mod streams {
    pub const MACHINE: u64 = 1;
    pub const STATE: u64 = 2;
    pub const PROTOCOL: u64 = 3;
    pub const OPTIMIZER: u64 = 4;
    pub const TIMES: u64 = 5;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub machine: MachineConfig,
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub battery: BatteryConfig,
    #[serde(default)]
    pub experiments: Vec<ExperimentEntry>,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub beta: f64,
    #[serde(flatten)]
    pub generator: MachineGenerator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum MachineGenerator {
    /// Random Hermitian `H_S`, `H_B` of unit spectral norm and `V` of norm `coupling`.
    Random { d_s: usize, d_b: usize, coupling: f64 },
    /// Spin-1/2 system with a two-spin Heisenberg bath, coupled to the first bath spin.
    Heisenberg { field: f64, exchange: f64, coupling: f64 },
    Diagonal {
        system: Vec<f64>,
        bath: Vec<f64>,
        coupling: Vec<f64>,
    },
    Explicit {
        h_s: MatrixRows,
        h_b: MatrixRows,
        v: MatrixRows,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateConfig {
    #[default]
    Random,
    RandomPure,
    /// Gibbs state of the initial `H_SB`.
    Gibbs,
    /// `ω(H'_S + H_B + V)` for a random `H'_S` of spectral norm `scale`.
    Planted { scale: f64 },
    MaximallyMixed,
    /// Diagonal in the eigenbasis of the initial `H_SB` with populations `∝ exp(+β E)`.
    Inverted,
    /// Random system state times the bath Gibbs state.
    ProductWithBathGibbs,
    Explicit { rho: MatrixRows },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProtocolConfig {
    Optimal { n: usize, final_thermalise: bool },
    Random { max_steps: usize },
    Empty,
    Explicit { steps: Vec<StepConfig> },
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig::Optimal {
            n: 8,
            final_thermalise: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepConfig {
    Quench {
        h_s: MatrixRows,
        #[serde(default = "yes")]
        coupling: bool,
    },
    Thermalise,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub random_starts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            random_starts: d.random_starts,
            max_iterations: d.max_iterations,
            gradient_tolerance: d.gradient_tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    /// Ladder spacing; the smallest admissible spacing is searched when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    pub levels: usize,
    pub window: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            spacing: None,
            levels: 256,
            window: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub criteria: Vec<u32>,
    /// Negative control: amount subtracted from every bound in criterion 1.
    #[serde(default)]
    pub inject_bound_offset: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            criteria: (1..=12).collect(),
            inject_bound_offset: 0.0,
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn render_config(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn matrix_from_rows(rows: &MatrixRows) -> Result<CMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "matrix rows must form a nonempty square array, got {n} rows of lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

pub fn rows_from_matrix(m: &CMatrix) -> MatrixRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn hermitian(rows: &MatrixRows, what: &str) -> Result<HermitianOperator> {
    let m = matrix_from_rows(rows)?;
    HermitianOperator::new(CompositeSpace::single(m.nrows()), m).map_err(|e| match e {
        Error::NotHermitian { .. } | Error::DimensionMismatch(_) => Error::Config(format!("{what}: {e}")),
        other => other,
    })
}

fn pauli() -> [CMatrix; 3] {
    let z = c(0.0);
    let o = c(1.0);
    let i = C64::new(0.0, 1.0);
    [
        CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    ]
}

fn heisenberg(field: f64, exchange: f64, coupling: f64, beta: InverseTemperature) -> Result<MachineSpec> {
    let p = pauli();
    let id2 = CMatrix::identity(2, 2);
    let h_s = &p[2] * c(0.5 * field);
    let mut h_b = CMatrix::zeros(4, 4);
    let mut v = CMatrix::zeros(8, 8);
    for s in &p {
        h_b += s.kronecker(s) * c(exchange);
        v += s.kronecker(s).kronecker(&id2) * c(coupling);
    }
    MachineSpec::new(
        HermitianOperator::new(CompositeSpace::single(2), h_s)?,
        HermitianOperator::new(CompositeSpace::single(4), h_b)?,
        HermitianOperator::new(CompositeSpace::single(8), v)?,
        beta,
    )
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        InverseTemperature::new(self.machine.beta).map_err(|e| Error::Config(e.to_string()))?;
        if let MachineGenerator::Random { d_s, d_b, .. } = self.machine.generator {
            if d_s == 0 || d_b == 0 {
                return Err(Error::Config("machine dimensions must be positive".into()));
            }
        }
        if self.battery.window == 0 || self.battery.window > self.battery.levels {
            return Err(Error::Config(format!(
                "battery window {} does not fit {} levels",
                self.battery.window, self.battery.levels
            )));
        }
        for e in &self.experiments {
            if !super::experiments::EXPERIMENTS.iter().any(|(id, _)| *id == e.id) {
                return Err(Error::Config(format!("unknown experiment id '{}'", e.id)));
            }
        }
        for &k in &self.verify.criteria {
            if !(1..=12).contains(&k) {
                return Err(Error::Config(format!("unknown criterion {k}")));
            }
        }
        Ok(())
    }

    pub fn beta(&self) -> InverseTemperature {
        InverseTemperature::new(self.machine.beta).expect("validated")
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            random_starts: self.optimizer.random_starts,
            max_iterations: self.optimizer.max_iterations,
            gradient_tolerance: self.optimizer.gradient_tolerance,
            seed: child_seed(self.seed, streams::OPTIMIZER),
            ..OptimizerConfig::default()
        }
    }

    pub fn build_machine(&self) -> Result<MachineSpec> {
        let beta = self.beta();
        match &self.machine.generator {
            MachineGenerator::Random { d_s, d_b, coupling } => {
                random_machine(child_seed(self.seed, streams::MACHINE), *d_s, *d_b, *coupling, beta)
            }
            MachineGenerator::Heisenberg {
                field,
                exchange,
                coupling,
            } => heisenberg(*field, *exchange, *coupling, beta),
            MachineGenerator::Diagonal { system, bath, coupling } => {
                let diag = |v: &[f64]| HermitianOperator::from_real_diagonal(CompositeSpace::single(v.len()), v);
                MachineSpec::new(diag(system)?, diag(bath)?, diag(coupling)?, beta)
            }
            MachineGenerator::Explicit { h_s, h_b, v } => MachineSpec::new(
                hermitian(h_s, "machine.h_s")?,
                hermitian(h_b, "machine.h_b")?,
                hermitian(v, "machine.v")?,
                beta,
            ),
        }
    }

    pub fn build_state(&self, spec: &MachineSpec) -> Result<DensityMatrix> {
        build_state(&self.state, spec, child_seed(self.seed, streams::STATE))
    }

    pub fn build_protocol(&self, spec: &MachineSpec, rho: &DensityMatrix) -> Result<Protocol> {
        match &self.protocol {
            ProtocolConfig::Optimal { n, final_thermalise } => {
                let report = theorem1_bound(spec, rho, &self.optimizer())?;
                build_optimal_protocol(spec, &report.minimizer_h_s, *n, *final_thermalise)
            }
            ProtocolConfig::Random { max_steps } => {
                let mut rng = seeded_rng(child_seed(self.seed, streams::PROTOCOL));
                random_protocol(&mut rng, spec, *max_steps)
            }
            ProtocolConfig::Empty => Ok(Protocol::empty(spec.h_s.clone(), true)),
            ProtocolConfig::Explicit { steps } => {
                let steps = steps
                    .iter()
                    .enumerate()
                    .map(|(k, s)| match s {
                        StepConfig::Thermalise => Ok(ProtocolStep::Thermalise),
                        StepConfig::Quench { h_s, coupling } => Ok(ProtocolStep::Quench {
                            new_h_s: hermitian(h_s, &format!("protocol step {k}"))?,
                            coupling_on: *coupling,
                        }),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Protocol::new(spec.h_s.clone(), true, steps)
            }
        }
    }
}

pub fn random_machine(seed: u64, d_s: usize, d_b: usize, coupling: f64, beta: InverseTemperature) -> Result<MachineSpec> {
    let mut rng = seeded_rng(seed);
    let h_s = random_hermitian(&mut rng, d_s, 1.0);
    let h_b = random_hermitian(&mut rng, d_b, 1.0);
    let v = random_hermitian_on(&mut rng, CompositeSpace::new(vec![d_s, d_b])?, coupling);
    MachineSpec::new(h_s, h_b, v, beta)
}

pub fn build_state(kind: &StateConfig, spec: &MachineSpec, seed: u64) -> Result<DensityMatrix> {
    let mut rng = seeded_rng(seed);
    let space = spec.sb_space().clone();
    let h0 = spec.initial_h_sb();
    Ok(match kind {
        StateConfig::Random => random_density_matrix_on(&mut rng, space),
        StateConfig::RandomPure => random_pure_state(&mut rng, space),
        StateConfig::Gibbs => gibbs_state(&h0, spec.beta),
        StateConfig::Planted { scale } => {
            let h_planted = random_hermitian(&mut rng, spec.d_s(), *scale);
            gibbs_state(&crate::machine::assemble_h_sb(spec, &h_planted, true)?, spec.beta)
        }
        StateConfig::MaximallyMixed => DensityMatrix::maximally_mixed(space),
        StateConfig::Inverted => {
            let inverted = h0.scale(-1.0);
            gibbs_state(&inverted, spec.beta).with_space(space)?
        }
        StateConfig::ProductWithBathGibbs => {
            let rho_s = random_density_matrix_on(&mut rng, spec.system_space());
            rho_s.tensor(&gibbs_state(&spec.h_b, spec.beta)).with_space(space)?
        }
        StateConfig::Explicit { rho } => {
            let m = matrix_from_rows(rho)?;
            DensityMatrix::new(space, m)?
        }
    })
}

/// Cyclic protocol of at most `max_steps` steps: random quenches and thermalisations
/// closed by a quench back to the machine's own `H_S`.
pub fn random_protocol<R: rand::Rng + ?Sized>(rng: &mut R, spec: &MachineSpec, max_steps: usize) -> Result<Protocol> {
    let mut steps = Vec::new();
    if max_steps >= 1 {
        let len = rng.random_range(1..=max_steps);
        for _ in 0..len - 1 {
            if rng.random_bool(0.5) {
                steps.push(ProtocolStep::Thermalise);
            } else {
                let scale = rng.random_range(0.2..2.0);
                steps.push(ProtocolStep::quench(random_hermitian(rng, spec.d_s(), scale)));
            }
        }
        steps.push(ProtocolStep::quench(spec.h_s.clone()));
    }
    Protocol::new(spec.h_s.clone(), true, steps)
}

/// Reduced system state of an SB state.
pub fn system_marginal(rho: &DensityMatrix) -> Result<DensityMatrix> {
    partial_trace(rho, &[0])
}

/// Lowest energy of a Hamiltonian.
pub fn ground_energy(h: &HermitianOperator) -> f64 {
    eig_hermitian(h).eigenvalues[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7

[machine]
beta = 1.0
generator = "random"
d_s = 2
d_b = 2
coupling = 0.5

[state]
kind = "planted"
scale = 0.8

[protocol]
kind = "optimal"
n = 4
final_thermalise = true

[[experiments]]
id = "optimal-sweep"
sweep = { parameter = "n", values = [2.0, 4.0] }
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = parse_config(SAMPLE).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.battery, BatteryConfig::default());
        let again = parse_config(&render_config(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn explicit_matrices_round_trip_and_reject_non_hermitian_input() {
        let mut cfg = parse_config(SAMPLE).unwrap();
        let m = rows_from_matrix(&CMatrix::from_row_slice(2, 2, &[c(1.0), C64::new(0.0, 0.5), C64::new(0.0, -0.5), c(-1.0)]));
        cfg.machine.generator = MachineGenerator::Explicit {
            h_s: m.clone(),
            h_b: m.clone(),
            v: rows_from_matrix(&CMatrix::identity(4, 4)),
        };
        let again = parse_config(&render_config(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert!(again.build_machine().is_ok());
        let mut bad = m;
        bad[0][1] = [0.0, 0.7];
        cfg.machine.generator = MachineGenerator::Explicit {
            h_s: bad,
            h_b: rows_from_matrix(&CMatrix::identity(2, 2)),
            v: rows_from_matrix(&CMatrix::identity(4, 4)),
        };
        let err = cfg.build_machine().unwrap_err().to_string();
        assert!(err.contains("machine.h_s") && err.contains("(0, 1)"), "{err}");
    }

    #[test]
    fn rejects_unknown_ids_and_fields() {
        let bad = SAMPLE.replace("optimal-sweep", "no-such-thing");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
        let bad = SAMPLE.replace("seed = 7", "seed = 7\ncolour = 3");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
        let bad = SAMPLE.replace("beta = 1.0", "beta = -1.0");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn builders_are_deterministic() {
        let cfg = parse_config(SAMPLE).unwrap();
        let a = cfg.build_machine().unwrap();
        let b = cfg.build_machine().unwrap();
        assert_eq!(a.v, b.v);
        assert_eq!(cfg.build_state(&a).unwrap(), cfg.build_state(&b).unwrap());
    }

    #[test]
    fn generators_produce_valid_machines() {
        let beta = InverseTemperature::new(1.0).unwrap();
        let h = heisenberg(1.0, 0.5, 0.3, beta).unwrap();
        assert_eq!((h.d_s(), h.d_b()), (2, 4));
        let mut rng = seeded_rng(3);
        let spec = random_machine(4, 2, 2, 1.0, beta).unwrap();
        for _ in 0..20 {
            let p = random_protocol(&mut rng, &spec, 6).unwrap();
            assert!(p.len() <= 6 && !p.is_empty());
        }
        for kind in [StateConfig::Inverted, StateConfig::ProductWithBathGibbs, StateConfig::Gibbs] {
            let rho = build_state(&kind, &spec, 1).unwrap();
            assert!((rho.entries().trace().re - 1.0).abs() < 1e-12);
        }
    }
}
