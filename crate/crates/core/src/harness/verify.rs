use rand::Rng;
use rayon::prelude::*;

use super::config::{build_state, random_machine, random_protocol, ExperimentConfig, StateConfig};
use super::experiments::{
    coherence_rows, coherence_setup, grid_spacing_for, in_pool, loglog_slope, physical_rows, physical_run_auto,
    reversal_point, target_system_hamiltonian, unitary_point, unitary_rows, weak_point,
};
use super::output::{coordinate, rows_to_string, ResultRow};
use crate::bounds::{build_optimal_protocol, minimize_irreversibility, theorem1_bound, wilcox_check, IsothermalPath, OptimizerConfig};
use crate::embedding::physical::COHERENT_WORK_CONSTANT;
use crate::embedding::{apply_quench, build_quench_unitary, classical_battery_quench, sample_times, BatteryLadder, FlatBatteryState};
use crate::error::{Error, Result};
use crate::machine::{assemble_h_sb, exact_work_decomposition, quench_work, run_protocol, MachineSpec, Protocol, ProtocolStep};
use crate::operator::{c, trace_distance, CMatrix, CVector, CompositeSpace, DensityMatrix, HermitianOperator};
use crate::random::{child_seed, random_density_matrix_on, random_hermitian, random_unitary, seeded_rng};
use crate::thermo::{gibbs_state, InverseTemperature};

pub const CRITERIA: [(u32, &str); 12] = [
    (1, "bound inequality"),
    (2, "exact work decomposition"),
    (3, "saturation of the optimal protocol"),
    (4, "log-partition derivative identity"),
    (5, "weak-coupling limit"),
    (6, "planted reversibility"),
    (7, "reversed-protocol identity"),
    (8, "quench unitary conditions"),
    (9, "battery work accounting"),
    (10, "physical against abstract ledger"),
    (11, "coherence loss"),
    (12, "determinism"),
];

// Pinned tolerances and sizes.
const C1_TRIALS: usize = 500;
const C1_MAX_STEPS: usize = 6;
const C1_TOL: f64 = 1e-9;
const C2_TRIALS: usize = 100;
const C2_TOL: f64 = 1e-9;
const C3_NS: [usize; 9] = [2, 4, 8, 16, 32, 64, 128, 256, 512];
const C3_RATIO_NS: [usize; 3] = [32, 64, 128];
const C3_RATIO_RANGE: (f64, f64) = (1.7, 2.3);
const C3_FINAL_FRACTION: f64 = 0.02;
const C3_MONOTONE_TOL: f64 = 1e-12;
const C4_POINTS: usize = 20;
const C4_STEP: f64 = 1e-4;
const C4_TOL: f64 = 1e-6;
const C5_SCALES: [f64; 3] = [1e-1, 1e-2, 1e-3];
const C5_SLOPE_RANGE: (f64, f64) = (0.8, 1.2);
const C5_CONSTANT_SPREAD: f64 = 2.0;
const C6_INSTANCES: usize = 8;
const C6_MIN_TOL: f64 = 1e-6;
const C6_DISTANCE_TOL: f64 = 1e-4;
const C7_N: usize = 512;
const C7_TOL: f64 = 1e-8;
const SECOND_LAW_TOL: f64 = 1e-9;
const C8_WINDOWS: [usize; 7] = [8, 16, 32, 64, 128, 256, 512];
const C8_REFERENCE_WINDOW: usize = 256;
const C8_UNITARITY_TOL: f64 = 1e-10;
const C8_ENERGY_TOL: f64 = 1e-9;
const C8_EPSILON_FACTOR: f64 = 5.0;
const C8_SLOPE_RANGE: (f64, f64) = (-1.15, -0.85);
const C9_SPACING: f64 = 0.25;
const C9_CLASSICAL_TOL: f64 = 1e-12;
const C9_WINDOWS: [usize; 3] = [8, 32, 128];
const C9_STATES: usize = 5;
const C9_MIN_DISTURBANCE: f64 = 0.1;
const C10_N: usize = 8;
const C10_LEVELS: usize = 256;
const C10_WINDOW: usize = 4;
const C10_TOL: f64 = 0.01;
const C11_SAMPLES: usize = 200;
const C11_PERIODS: f64 = 100.0;
const C11_LEVELS: usize = 128;
const C11_WINDOW: usize = 64;
const C11_FRACTION: f64 = 0.9;
const C12_RUNS: usize = 2;

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    /// Worst measured value of the headline quantity.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
    pub rows: Vec<ResultRow>,
}

impl CriterionResult {
    fn new(id: u32, passed: bool, measured: f64, threshold: f64, detail: String, rows: Vec<ResultRow>) -> Self {
        Self {
            id,
            name: name_of(id),
            passed,
            measured,
            threshold,
            detail,
            rows,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} ({}): measured {:.6e}, threshold {:.6e}; {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub results: Vec<CriterionResult>,
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    /// Per-criterion summary rows followed by each criterion's own rows.
    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for r in &self.results {
            let id = format!("criterion-{}", r.id);
            rows.push(ResultRow::new(&id, "", "passed", f64::from(u8::from(r.passed))));
            rows.push(ResultRow::new(&id, "", "measured", r.measured).with_tolerance(r.threshold));
            rows.extend(r.rows.iter().cloned());
        }
        rows
    }
}

fn name_of(id: u32) -> &'static str {
    CRITERIA.iter().find(|(k, _)| *k == id).map(|(_, n)| *n).unwrap_or("unknown")
}

fn seed_for(cfg: &ExperimentConfig, id: u32) -> u64 {
    child_seed(cfg.seed, 1000 + u64::from(id))
}

fn optimizer(cfg: &ExperimentConfig, seed: u64) -> OptimizerConfig {
    OptimizerConfig { seed, ..cfg.optimizer() }
}

fn beta(x: f64) -> InverseTemperature {
    InverseTemperature::new(x).expect("positive")
}

pub fn verify_suite(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let mut report = VerifyReport::default();
    if cfg.verify.criteria.is_empty() {
        let msg = "no criteria selected; the suite passes vacuously".to_string();
        log::warn!("{msg}");
        report.warnings.push(msg);
        return Ok(report);
    }
    in_pool(cfg.workers, || -> Result<()> {
        for &id in &cfg.verify.criteria {
            log::info!("criterion {id}: {}", name_of(id));
            report.results.push(run_criterion(cfg, id)?);
        }
        Ok(())
    })??;
    Ok(report)
}

pub fn run_criterion(cfg: &ExperimentConfig, id: u32) -> Result<CriterionResult> {
    match id {
        1 => bound_inequality(cfg),
        2 => decomposition(cfg),
        3 => saturation(cfg),
        4 => log_partition_identity(cfg),
        5 => weak_coupling(cfg),
        6 => planted(cfg),
        7 => reversal(cfg),
        8 => unitary_conditions(cfg),
        9 => battery_accounting(cfg),
        10 => physical_agreement(cfg),
        11 => coherence_loss(cfg),
        12 => determinism(cfg),
        _ => Err(Error::Config(format!("unknown criterion {id}"))),
    }
}

const C1_STATES: [StateConfig; 5] = [
    StateConfig::Random,
    StateConfig::RandomPure,
    StateConfig::Planted { scale: 1.0 },
    StateConfig::ProductWithBathGibbs,
    StateConfig::Gibbs,
];

fn bound_inequality(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let base = seed_for(cfg, 1);
    let offset = cfg.verify.inject_bound_offset;
    let trials: Vec<(f64, f64)> = (0..C1_TRIALS)
        .into_par_iter()
        .map(|k| {
            let seed = child_seed(base, k as u64);
            let mut rng = seeded_rng(seed);
            let d_b = if k % 2 == 0 { 2 } else { 4 };
            let coupling = rng.random_range(0.1..2.0);
            let b = rng.random_range(0.3..3.0);
            let spec = random_machine(child_seed(seed, 1), 2, d_b, coupling, beta(b))?;
            let rho = build_state(&C1_STATES[k % C1_STATES.len()], &spec, child_seed(seed, 2))?;
            let p = random_protocol(&mut rng, &spec, C1_MAX_STEPS)?;
            let (ledger, _) = run_protocol(&spec, &p, &rho)?;
            let bound = theorem1_bound(&spec, &rho, &optimizer(cfg, child_seed(seed, 3)))?.bound - offset;
            Ok((ledger.total_work, bound))
        })
        .collect::<Result<_>>()?;
    let id = "criterion-1";
    let mut rows = Vec::with_capacity(trials.len());
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for (k, (w, b)) in trials.iter().enumerate() {
        let excess = w - b;
        worst = worst.max(excess);
        if excess > C1_TOL {
            violations += 1;
        }
        rows.push(ResultRow::new(id, &coordinate("trial", k as f64), "work_minus_bound", excess).with_tolerance(C1_TOL));
    }
    let detail = format!("{violations} of {} trials exceed the bound (offset {offset})", trials.len());
    Ok(CriterionResult::new(1, violations == 0, worst, C1_TOL, detail, rows))
}

fn proof_form_protocol<R: Rng + ?Sized>(rng: &mut R, spec: &MachineSpec) -> Result<Protocol> {
    let k = rng.random_range(1..=5);
    let mut steps = Vec::new();
    for _ in 0..k {
        let scale = rng.random_range(0.2..2.0);
        steps.push(ProtocolStep::quench(random_hermitian(rng, spec.d_s(), scale)));
        steps.push(ProtocolStep::Thermalise);
    }
    steps.push(ProtocolStep::quench(spec.h_s.clone()));
    if rng.random_bool(0.5) {
        steps.push(ProtocolStep::Thermalise);
    }
    Protocol::new(spec.h_s.clone(), true, steps)
}

fn decomposition(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let base = seed_for(cfg, 2);
    let residuals: Vec<f64> = (0..C2_TRIALS)
        .into_par_iter()
        .map(|k| {
            let seed = child_seed(base, k as u64);
            let mut rng = seeded_rng(seed);
            let d_b = if k % 2 == 0 { 2 } else { 4 };
            let coupling = rng.random_range(0.1..2.0);
            let b = rng.random_range(0.3..3.0);
            let spec = random_machine(child_seed(seed, 1), 2, d_b, coupling, beta(b))?;
            let rho = random_density_matrix_on(&mut rng, spec.sb_space().clone());
            let p = proof_form_protocol(&mut rng, &spec)?;
            let (ledger, _) = run_protocol(&spec, &p, &rho)?;
            let dec = exact_work_decomposition(&spec, &p, &rho)?;
            Ok((ledger.total_work - dec.total()).abs())
        })
        .collect::<Result<_>>()?;
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    let rows = residuals
        .iter()
        .enumerate()
        .map(|(k, r)| ResultRow::new("criterion-2", &coordinate("trial", k as f64), "residual", *r).with_tolerance(C2_TOL))
        .collect();
    let detail = format!("{} proof-form protocols", residuals.len());
    Ok(CriterionResult::new(2, worst <= C2_TOL, worst, C2_TOL, detail, rows))
}

fn saturation(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let seed = seed_for(cfg, 3);
    let spec = random_machine(child_seed(seed, 1), 2, 4, 1.0, beta(1.0))?;
    let rho = random_density_matrix_on(&mut seeded_rng(child_seed(seed, 2)), spec.sb_space().clone());
    let b = theorem1_bound(&spec, &rho, &optimizer(cfg, child_seed(seed, 3)))?;
    let works: Vec<f64> = C3_NS
        .par_iter()
        .map(|&n| {
            let p = build_optimal_protocol(&spec, &b.minimizer_h_s, n, false)?;
            Ok(run_protocol(&spec, &p, &rho)?.0.total_work)
        })
        .collect::<Result<_>>()?;
    let id = "criterion-3";
    let mut rows = vec![ResultRow::new(id, "", "bound", b.bound)];
    for (n, w) in C3_NS.iter().zip(&works) {
        let at = coordinate("n", *n as f64);
        rows.push(ResultRow::new(id, &at, "work", *w));
        rows.push(ResultRow::new(id, &at, "deficit", b.bound - w));
    }
    let monotone = works.windows(2).all(|w| w[1] >= w[0] - C3_MONOTONE_TOL);
    let last = b.bound - works[works.len() - 1];
    let final_ok = last <= C3_FINAL_FRACTION * b.bound.abs();
    let deficit = |n: usize| b.bound - works[C3_NS.iter().position(|&m| m == n).expect("listed n")];
    let mut ratios_ok = true;
    let mut worst_ratio_gap: f64 = 0.0;
    for &n in &C3_RATIO_NS {
        let ratio = deficit(n) / deficit(2 * n);
        rows.push(ResultRow::new(id, &coordinate("n", n as f64), "deficit_ratio", ratio));
        ratios_ok &= (C3_RATIO_RANGE.0..=C3_RATIO_RANGE.1).contains(&ratio);
        worst_ratio_gap = worst_ratio_gap.max((ratio - 2.0).abs());
    }
    let detail = format!(
        "monotone {monotone}; bound - work(512) = {last:.3e} against {:.3e}; ratios within [{}, {}]: {ratios_ok}",
        C3_FINAL_FRACTION * b.bound.abs(),
        C3_RATIO_RANGE.0,
        C3_RATIO_RANGE.1
    );
    Ok(CriterionResult::new(
        3,
        monotone && final_ok && ratios_ok,
        worst_ratio_gap,
        C3_RATIO_RANGE.1 - 2.0,
        detail,
        rows,
    ))
}

fn log_partition_identity(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let seed = seed_for(cfg, 4);
    let spec = random_machine(child_seed(seed, 1), 2, 4, 1.0, beta(1.3))?;
    let mut rng = seeded_rng(child_seed(seed, 2));
    let end = random_hermitian(&mut rng, 2, 1.5);
    let path = IsothermalPath::new(spec.h_s.clone(), end, C4_POINTS)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..C4_POINTS {
        let lambda = (k as f64 + 0.5) / C4_POINTS as f64;
        let r = wilcox_check(&spec, &path, lambda, C4_STEP)?.residual();
        worst = worst.max(r);
        rows.push(ResultRow::new("criterion-4", &coordinate("lambda", lambda), "residual", r).with_tolerance(C4_TOL));
    }
    let detail = format!("{C4_POINTS} points, central step {C4_STEP}");
    Ok(CriterionResult::new(4, worst <= C4_TOL, worst, C4_TOL, detail, rows))
}

fn weak_coupling(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let seed = seed_for(cfg, 5);
    let spec = random_machine(child_seed(seed, 1), 2, 2, 1.0, beta(1.0))?;
    let state_seed = child_seed(seed, 2);
    let mut local = cfg.clone();
    local.seed = child_seed(seed, 3);
    let points = C5_SCALES
        .par_iter()
        .map(|&s| {
            let scaled = spec.with_scaled_coupling(s);
            let rho = build_state(&StateConfig::ProductWithBathGibbs, &scaled, state_seed)?;
            weak_point(&scaled, &rho, &local)
        })
        .collect::<Result<Vec<_>>>()?;
    let id = "criterion-5";
    let mut rows = Vec::new();
    let diffs: Vec<f64> = points.iter().map(|p| p.difference()).collect();
    let constants: Vec<f64> = diffs.iter().zip(&C5_SCALES).map(|(d, s)| d / s).collect();
    for (k, p) in points.iter().enumerate() {
        let at = coordinate("s", C5_SCALES[k]);
        rows.push(ResultRow::new(id, &at, "difference", diffs[k]));
        rows.push(ResultRow::new(id, &at, "fitted_constant", constants[k]));
        rows.push(ResultRow::new(id, &at, "delta_f_irrev", p.delta_f_irrev));
    }
    let slope = loglog_slope(&C5_SCALES, &diffs);
    let irrev: Vec<f64> = points.iter().map(|p| p.delta_f_irrev.abs()).collect();
    let c_max = constants.iter().cloned().fold(0.0, f64::max);
    let c_min = constants.iter().cloned().fold(f64::INFINITY, f64::min);
    let irrev_slope = loglog_slope(&C5_SCALES, &irrev.iter().map(|x| x.max(1e-300)).collect::<Vec<_>>());
    rows.push(ResultRow::new(id, "", "difference_loglog_slope", slope));
    rows.push(ResultRow::new(id, "", "delta_f_irrev_loglog_slope", irrev_slope));
    let slope_ok = (C5_SLOPE_RANGE.0..=C5_SLOPE_RANGE.1).contains(&slope);
    let stable = c_max <= C5_CONSTANT_SPREAD * c_min;
    let irrev_ok = irrev.iter().zip(&C5_SCALES).all(|(x, s)| *x <= c_max * s) && irrev.windows(2).all(|w| w[1] <= w[0]);
    let detail = format!(
        "slope {slope:.3}; C in [{c_min:.4e}, {c_max:.4e}]; |dF_irrev| slope {irrev_slope:.3}, bounded by C s: {irrev_ok}"
    );
    Ok(CriterionResult::new(
        5,
        slope_ok && stable && irrev_ok,
        slope,
        C5_SLOPE_RANGE.1,
        detail,
        rows,
    ))
}

fn gauge_distance(a: &HermitianOperator, b: &HermitianOperator) -> f64 {
    (a.traceless_part().entries() - b.traceless_part().entries()).norm()
}

/// Planted system Hamiltonian and its Gibbs state for instance `k`.
fn planted_instance(seed: u64, k: usize) -> Result<(MachineSpec, HermitianOperator, DensityMatrix)> {
    let s = child_seed(seed, k as u64);
    let d_b = if k % 2 == 0 { 2 } else { 4 };
    let spec = random_machine(child_seed(s, 1), 2, d_b, 1.0, beta(1.0))?;
    let planted = random_hermitian(&mut seeded_rng(child_seed(s, 2)), 2, 1.0);
    let rho = gibbs_state(&assemble_h_sb(&spec, &planted, true)?, spec.beta);
    Ok((spec, planted, rho))
}

fn planted(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let seed = seed_for(cfg, 6);
    let found: Vec<(f64, f64)> = (0..C6_INSTANCES)
        .into_par_iter()
        .map(|k| {
            let (spec, h_planted, rho) = planted_instance(seed, k)?;
            let m = minimize_irreversibility(&spec, &rho, &optimizer(cfg, child_seed(seed, 100 + k as u64)))?;
            Ok((m.min_value, gauge_distance(&m.h_s_star, &h_planted)))
        })
        .collect::<Result<_>>()?;
    let id = "criterion-6";
    let mut rows = Vec::new();
    for (k, (v, d)) in found.iter().enumerate() {
        let at = coordinate("instance", k as f64);
        rows.push(ResultRow::new(id, &at, "min_value", *v).with_tolerance(C6_MIN_TOL));
        rows.push(ResultRow::new(id, &at, "gauge_distance", *d).with_tolerance(C6_DISTANCE_TOL));
    }
    let worst_min = found.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max);
    let worst_dist = found.iter().map(|f| f.1).fold(0.0, f64::max);
    let passed = worst_min <= C6_MIN_TOL && worst_dist <= C6_DISTANCE_TOL;
    let detail = format!("largest minimum {worst_min:.3e}, largest gauge-fixed distance {worst_dist:.3e}");
    Ok(CriterionResult::new(6, passed, worst_dist, C6_DISTANCE_TOL, detail, rows))
}

fn reversal(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let seed = seed_for(cfg, 7);
    let instances: Vec<(&str, usize)> = vec![("planted", 0), ("planted", 1), ("planted", 2), ("random", 0), ("random", 1), ("random", 2)];
    let points = instances
        .par_iter()
        .map(|&(kind, k)| {
            let (spec, rho) = if kind == "planted" {
                let (spec, _, rho) = planted_instance(seed, k)?;
                (spec, rho)
            } else {
                let s = child_seed(seed, 50 + k as u64);
                let spec = random_machine(child_seed(s, 1), 2, 2 + 2 * (k % 2), 1.0, beta(1.0))?;
                let rho = random_density_matrix_on(&mut seeded_rng(child_seed(s, 2)), spec.sb_space().clone());
                (spec, rho)
            };
            let b = theorem1_bound(&spec, &rho, &optimizer(cfg, child_seed(seed, 200 + k as u64)))?;
            reversal_point(&spec, &rho, &b, C7_N)
        })
        .collect::<Result<Vec<_>>>()?;
    let id = "criterion-7";
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut worst_slack = f64::INFINITY;
    for ((kind, k), p) in instances.iter().zip(&points) {
        let at = format!("{kind}={k}");
        rows.push(ResultRow::new(id, &at, "w_forward", p.w_forward));
        rows.push(ResultRow::new(id, &at, "w_reverse", p.w_reverse));
        rows.push(ResultRow::new(id, &at, "delta_f_irrev", p.delta_f_irrev));
        rows.push(ResultRow::new(id, &at, "identity_residual", p.identity_residual()).with_tolerance(C7_TOL));
        rows.push(ResultRow::new(id, &at, "clausius_slack_forward", p.slack_forward).with_tolerance(-SECOND_LAW_TOL));
        rows.push(ResultRow::new(id, &at, "clausius_slack_reverse", p.slack_reverse).with_tolerance(-SECOND_LAW_TOL));
        worst = worst.max(p.identity_residual());
        worst_slack = worst_slack.min(p.slack_forward.min(p.slack_reverse));
    }
    let slack_ok = worst_slack >= -SECOND_LAW_TOL;
    let detail = format!("n = {C7_N}; smallest Clausius slack {worst_slack:.3e} (ok: {slack_ok})");
    Ok(CriterionResult::new(7, worst <= C7_TOL && slack_ok, worst, C7_TOL, detail, rows))
}

fn unitary_conditions(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let seed = seed_for(cfg, 8);
    let spec = random_machine(child_seed(seed, 1), 2, 2, 1.0, beta(1.0))?;
    let rho = random_density_matrix_on(&mut seeded_rng(child_seed(seed, 2)), spec.sb_space().clone());
    let mut local = cfg.clone();
    local.seed = child_seed(seed, 3);
    let h0 = spec.initial_h_sb();
    let h1 = assemble_h_sb(&spec, &target_system_hamiltonian(&local, &spec), true)?;
    let spacing = grid_spacing_for(&[&h0, &h1]);
    let points = C8_WINDOWS
        .par_iter()
        .map(|&n| unitary_point(&h0, &h1, &rho, spacing, n))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = vec![ResultRow::new("criterion-8", "", "spacing", spacing)];
    rows.extend(unitary_rows("criterion-8", &points));
    let unitary = points.iter().all(|p| p.unitarity_defect <= C8_UNITARITY_TOL);
    let commutes = points.iter().all(|p| p.commutes_with_translations);
    let energy = points.iter().all(|p| p.max_energy_commutator <= C8_ENERGY_TOL);
    let reference = points.iter().find(|p| p.window == C8_REFERENCE_WINDOW).expect("listed window");
    let preserved = reference.disturbance <= C8_EPSILON_FACTOR * reference.epsilon;
    let xs: Vec<f64> = points.iter().map(|p| p.window as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.disturbance).collect();
    let slope = loglog_slope(&xs, &ys);
    let slope_ok = (C8_SLOPE_RANGE.0..=C8_SLOPE_RANGE.1).contains(&slope);
    let detail = format!(
        "unitary {unitary}, translations {commutes}, energy {energy}; TD(N=256) {:.3e} vs 5 eps {:.3e}; slope {slope:.3}",
        reference.disturbance,
        C8_EPSILON_FACTOR * reference.epsilon
    );
    Ok(CriterionResult::new(
        8,
        unitary && commutes && energy && preserved && slope_ok,
        reference.disturbance / reference.epsilon,
        C8_EPSILON_FACTOR,
        detail,
        rows,
    ))
}

fn rotated(eigs: &[f64], seed: u64) -> Result<HermitianOperator> {
    let u = random_unitary(&mut seeded_rng(seed), eigs.len());
    let d = CMatrix::from_diagonal(&CVector::from_iterator(eigs.len(), eigs.iter().map(|&x| c(x))));
    HermitianOperator::new(CompositeSpace::single(eigs.len()), &u * d * u.adjoint())
}

fn battery_accounting(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let seed = seed_for(cfg, 9);
    let h0 = rotated(&[0.0, 1.0], child_seed(seed, 1))?;
    let h1 = rotated(&[0.0, 0.5], child_seed(seed, 2))?;
    let norm = h0.sub(&h1)?.spectral_norm();
    let id = "criterion-9";
    let mut rows = Vec::new();
    let ladder = BatteryLadder::new(C9_SPACING, 48)?;
    let u = build_quench_unitary(&ladder, &h0, &h1)?;
    let mut rng = seeded_rng(child_seed(seed, 3));
    let mut classical_worst: f64 = 0.0;
    let eig0 = crate::operator::eig_hermitian(&h0);
    for k in 0..C9_STATES {
        let p: f64 = rng.random_range(0.0..1.0);
        let pops = CMatrix::from_diagonal(&CVector::from_vec(vec![c(p), c(1.0 - p)]));
        let v = &eig0.eigenvectors;
        let rho = DensityMatrix::new(CompositeSpace::single(2), v * pops * v.adjoint())?;
        let (_, w) = classical_battery_quench(&u, &rho, ladder.n_levels() / 2)?;
        let err = (w - quench_work(&rho, &h0, &h1)?).abs();
        classical_worst = classical_worst.max(err);
        rows.push(ResultRow::new(id, &coordinate("state", k as f64), "classical_error", err).with_tolerance(C9_CLASSICAL_TOL));
    }
    let mut coherent_ratio: f64 = 0.0;
    for &n in &C9_WINDOWS {
        let ladder = BatteryLadder::new(C9_SPACING, n + 16)?;
        let u = build_quench_unitary(&ladder, &h0, &h1)?;
        let battery = FlatBatteryState::centered(ladder, n)?;
        for k in 0..C9_STATES {
            let rho = random_density_matrix_on(&mut rng, CompositeSpace::single(2));
            let out = apply_quench(&u, &rho, &battery)?;
            let err = (out.work - quench_work(&rho, &h0, &h1)?).abs();
            let allowed = COHERENT_WORK_CONSTANT * out.epsilon * norm;
            coherent_ratio = coherent_ratio.max(err / allowed);
            let at = format!("{};{}", coordinate("N", n as f64), coordinate("state", k as f64));
            rows.push(ResultRow::new(id, &at, "coherent_error", err).with_tolerance(allowed));
        }
    }
    let diag = HermitianOperator::from_real_diagonal(CompositeSpace::single(2), &[0.0, 1.0])?;
    let half = HermitianOperator::from_real_diagonal(CompositeSpace::single(2), &[0.0, 0.5])?;
    let s = 0.5f64.sqrt();
    let plus = DensityMatrix::pure(CompositeSpace::single(2), &CVector::from_vec(vec![c(s), c(s)]))?;
    let u = build_quench_unitary(&ladder, &diag, &half)?;
    let (after, _) = classical_battery_quench(&u, &plus, ladder.n_levels() / 2)?;
    let disturbed = trace_distance(&after, &plus)?;
    rows.push(ResultRow::new(id, "", "plus_state_disturbance", disturbed));
    let passed = classical_worst <= C9_CLASSICAL_TOL && coherent_ratio <= 1.0 && disturbed >= C9_MIN_DISTURBANCE;
    let detail = format!(
        "classical error {classical_worst:.3e}; coherent error at most {coherent_ratio:.3} of c eps |dH| (c = {COHERENT_WORK_CONSTANT}); |+> disturbance {disturbed:.3}"
    );
    Ok(CriterionResult::new(9, passed, classical_worst, C9_CLASSICAL_TOL, detail, rows))
}

fn physical_agreement(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let seed = seed_for(cfg, 10);
    let spec = random_machine(child_seed(seed, 1), 2, 2, 1.0, beta(1.0))?;
    let rho = build_state(&StateConfig::Inverted, &spec, child_seed(seed, 2))?;
    let b = theorem1_bound(&spec, &rho, &optimizer(cfg, child_seed(seed, 3)))?;
    let p = build_optimal_protocol(&spec, &b.minimizer_h_s, C10_N, false)?;
    let (spacing, run) = physical_run_auto(&spec, &p, &rho, None, C10_LEVELS, C10_WINDOW)?;
    let rel = run.relative_total_difference();
    let detail = format!(
        "spacing {spacing:.4}; physical {:.6e}, abstract {:.6e}; largest rounding residual {:.3e}",
        run.physical.total_work, run.abstract_ledger.total_work, run.max_rounding_residual
    );
    let rows = physical_rows("criterion-10", spacing, &run);
    Ok(CriterionResult::new(10, rel <= C10_TOL, rel, C10_TOL, detail, rows))
}

fn coherence_loss(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let seed = seed_for(cfg, 11);
    let spec = random_machine(child_seed(seed, 1), 2, 2, 1.0, beta(1.0))?;
    let rho = random_density_matrix_on(&mut seeded_rng(child_seed(seed, 2)), spec.sb_space().clone());
    let mut local = cfg.clone();
    local.seed = child_seed(seed, 3);
    let h0 = spec.initial_h_sb();
    let h1 = assemble_h_sb(&spec, &target_system_hamiltonian(&local, &spec), true)?;
    let spacing = grid_spacing_for(&[&h0, &h1]);
    let setup = coherence_setup(&h0, &h1, &rho, spacing, C11_LEVELS, C11_WINDOW)?;
    let times = sample_times(child_seed(seed, 4), C11_SAMPLES, spacing, C11_PERIODS);
    let (rows, fraction) = coherence_rows("criterion-11", &setup, &times)?;
    let detail = format!(
        "{:.0} of {} times above the t = 0 disturbance {:.3e}",
        fraction * times.len() as f64,
        times.len(),
        setup.baseline
    );
    Ok(CriterionResult::new(11, fraction >= C11_FRACTION, fraction, C11_FRACTION, detail, rows))
}

/// Runs the other selected criteria repeatedly and compares the CSV bytes.
fn determinism(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let others: Vec<u32> = cfg.verify.criteria.iter().copied().filter(|&k| k != 12).collect();
    let mut local = cfg.clone();
    local.verify.criteria = others.clone();
    let mut outputs = Vec::with_capacity(C12_RUNS);
    for _ in 0..C12_RUNS {
        let mut report = VerifyReport::default();
        for &k in &others {
            report.results.push(run_criterion(&local, k)?);
        }
        outputs.push(rows_to_string(&report.rows())?);
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    let mismatched = outputs.windows(2).filter(|w| w[0] != w[1]).count();
    let detail = format!(
        "{C12_RUNS} runs of criteria {others:?}, {} bytes each; identical {identical}",
        outputs[0].len()
    );
    let rows = vec![ResultRow::new("criterion-12", "", "csv_bytes", outputs[0].len() as f64)];
    Ok(CriterionResult::new(12, identical, mismatched as f64, 0.0, detail, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn cfg(criteria: &[u32]) -> ExperimentConfig {
        let mut c = parse_config(
            r#"
seed = 5
[machine]
beta = 1.0
generator = "random"
d_s = 2
d_b = 2
coupling = 1.0
"#,
        )
        .unwrap();
        c.verify.criteria = criteria.to_vec();
        c
    }

    #[test]
    fn empty_selection_passes_with_a_warning() {
        let r = verify_suite(&cfg(&[])).unwrap();
        assert!(r.all_passed() && r.results.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn cheap_criteria_pass() {
        let r = verify_suite(&cfg(&[2, 4])).unwrap();
        assert!(r.all_passed(), "{:?}", r.results.iter().map(CriterionResult::line).collect::<Vec<_>>());
    }

    #[test]
    fn proof_form_generator_is_accepted_by_the_decomposition() {
        let spec = random_machine(1, 2, 2, 1.0, beta(1.0)).unwrap();
        let mut rng = seeded_rng(2);
        for _ in 0..20 {
            let p = proof_form_protocol(&mut rng, &spec).unwrap();
            let rho = DensityMatrix::maximally_mixed(spec.sb_space().clone());
            assert!(exact_work_decomposition(&spec, &p, &rho).is_ok());
        }
    }
}
