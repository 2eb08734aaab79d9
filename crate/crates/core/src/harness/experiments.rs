use rayon::prelude::*;

use super::config::{streams, ExperimentConfig, Sweep};
use super::output::{coordinate, ResultRow};
use crate::bounds::{build_optimal_protocol, theorem1_bound, weak_coupling_bound, BoundReport};
use crate::embedding::{
    apply_quench, build_quench_unitary, coherence_sweep, evolve_battery_and_diagnose, physical_protocol_run,
    sample_times, BatteryLadder, FlatBatteryState, PhysicalRun,
};
use crate::error::{Error, Result};
use crate::machine::{
    assemble_h_sb, exact_work_decomposition, reverse_protocol, run_protocol, run_with_heat, MachineSpec, Protocol,
};
use crate::operator::{eig_hermitian, partial_trace, DensityMatrix, HermitianOperator};
use crate::random::{child_seed, random_hermitian, seeded_rng};
use crate::thermo::gibbs_state;

pub type ExperimentFn = fn(&ExperimentConfig, Option<&Sweep>) -> Result<Vec<ResultRow>>;

pub const EXPERIMENTS: &[(&str, ExperimentFn)] = &[
    ("bound", bound),
    ("protocol", protocol),
    ("optimal-sweep", optimal_sweep),
    ("weak-coupling-sweep", weak_coupling_sweep),
    ("unitary-check", unitary_check),
    ("coherence-sweep", coherence),
    ("physical-vs-abstract", physical_vs_abstract),
    ("second-law", second_law),
];

/// One-line description per experiment, for `list-experiments`.
pub fn describe(id: &str) -> &'static str {
    match id {
        "bound" => "work bound and its reversible/irreversible parts for the configured state",
        "protocol" => "ledger of the configured protocol and, in proof form, its exact decomposition",
        "optimal-sweep" => "work of the optimal protocol against the bound, swept over n",
        "weak-coupling-sweep" => "bound against the weak-coupling free energy, swept over the coupling scale s",
        "unitary-check" => "quench unitary checks and state preservation, swept over the flat window N",
        "coherence-sweep" => "second-quench disturbance and battery overlaps after free evolution, swept over t",
        "physical-vs-abstract" => "explicit battery ledger of the configured protocol against the abstract one",
        "second-law" => "Clausius slack and the forward/reversed optimal protocol pair",
        _ => "",
    }
}

/// Candidate spacings `0.02 · 1.05^k` tried when the battery spacing is not configured.
pub const AUTO_SPACING_START: f64 = 0.02;
pub const AUTO_SPACING_RATIO: f64 = 1.05;
pub const AUTO_SPACING_TRIES: i32 = 160;
/// Grid levels per unit of spectral spread when a single quench fixes the spacing.
pub const AUTO_LEVELS_PER_SPREAD: f64 = 3.0;
pub const DEFAULT_COHERENCE_SAMPLES: usize = 200;
pub const COHERENCE_PERIODS: f64 = 100.0;

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn lookup(id: &str) -> Result<ExperimentFn> {
    EXPERIMENTS
        .iter()
        .find(|(name, _)| *name == id)
        .map(|(_, f)| *f)
        .ok_or_else(|| Error::Config(format!("unknown experiment id '{id}'")))
}

/// Runs every configured experiment in order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    in_pool(cfg.workers, || {
        let mut rows = Vec::new();
        for e in &cfg.experiments {
            log::info!("running experiment {}", e.id);
            rows.extend(lookup(&e.id)?(cfg, e.sweep.as_ref())?);
        }
        Ok(rows)
    })?
}

fn sweep_values(id: &str, sweep: Option<&Sweep>, parameter: Option<&str>, default: &[f64]) -> Result<Vec<f64>> {
    match (sweep, parameter) {
        (None, _) => Ok(default.to_vec()),
        (Some(s), Some(p)) if s.parameter == p => {
            if s.values.is_empty() {
                return Err(Error::Config(format!("{id}: empty sweep over '{p}'")));
            }
            Ok(s.values.clone())
        }
        (Some(s), Some(p)) => Err(Error::Config(format!(
            "{id} sweeps '{p}', not '{}'",
            s.parameter
        ))),
        (Some(s), None) => Err(Error::Config(format!("{id} takes no sweep (got '{}')", s.parameter))),
    }
}

fn positive_integer(id: &str, name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{id}: sweep value {name}={v} is not a positive integer")))
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn spectral_spread(h: &HermitianOperator) -> f64 {
    let e = eig_hermitian(h).eigenvalues;
    e[e.len() - 1] - e[0]
}

/// Largest grid shift `|a_i - b_j|` between the snapped spectra, over all pairs.
pub fn max_level_shift(h_before: &HermitianOperator, h_after: &HermitianOperator, spacing: f64) -> Result<i64> {
    let ladder = BatteryLadder::new(spacing, 2)?;
    let a: Vec<i64> = eig_hermitian(h_before).eigenvalues.iter().map(|&e| ladder.snap(e).0).collect();
    let b: Vec<i64> = eig_hermitian(h_after).eigenvalues.iter().map(|&e| ladder.snap(e).0).collect();
    Ok(a.iter()
        .flat_map(|x| b.iter().map(move |y| (x - y).abs()))
        .max()
        .unwrap_or(0))
}

pub fn grid_spacing_for(hs: &[&HermitianOperator]) -> f64 {
    let spread = hs.iter().map(|h| spectral_spread(h)).fold(0.0_f64, f64::max);
    if spread > 0.0 { spread / AUTO_LEVELS_PER_SPREAD } else { 1.0 }
}

/// System Hamiltonian the single-quench experiments switch to.
pub fn target_system_hamiltonian(cfg: &ExperimentConfig, spec: &MachineSpec) -> HermitianOperator {
    let mut rng = seeded_rng(child_seed(cfg.seed, streams::PROTOCOL ^ 0x51));
    random_hermitian(&mut rng, spec.d_s(), 1.0)
}

fn optimal_bound(cfg: &ExperimentConfig, spec: &MachineSpec, rho: &DensityMatrix) -> Result<BoundReport> {
    theorem1_bound(spec, rho, &cfg.optimizer())
}

fn bound(cfg: &ExperimentConfig, sweep: Option<&Sweep>) -> Result<Vec<ResultRow>> {
    sweep_values("bound", sweep, None, &[])?;
    let spec = cfg.build_machine()?;
    let rho = cfg.build_state(&spec)?;
    let r = optimal_bound(cfg, &spec, &rho)?;
    let row = |o: &str, v: f64| ResultRow::new("bound", "", o, v);
    Ok(vec![
        row("delta_f_rev", r.delta_f_rev),
        row("delta_f_irrev", r.delta_f_irrev),
        row("bound", r.bound),
        row("converged", f64::from(u8::from(r.converged))),
        row("optimizer_iterations", r.optimizer_trace.len().saturating_sub(1) as f64),
    ])
}

fn protocol(cfg: &ExperimentConfig, sweep: Option<&Sweep>) -> Result<Vec<ResultRow>> {
    sweep_values("protocol", sweep, None, &[])?;
    let spec = cfg.build_machine()?;
    let rho = cfg.build_state(&spec)?;
    let p = cfg.build_protocol(&spec, &rho)?;
    let (ledger, _) = run_protocol(&spec, &p, &rho)?;
    let mut rows: Vec<ResultRow> = ledger
        .per_step_work
        .iter()
        .enumerate()
        .map(|(k, w)| ResultRow::new("protocol", &coordinate("step", k as f64), "work", *w))
        .collect();
    rows.push(ResultRow::new("protocol", "", "total_work", ledger.total_work));
    rows.push(ResultRow::new("protocol", "", "heat", ledger.heat));
    match exact_work_decomposition(&spec, &p, &rho) {
        Ok(dec) => {
            rows.push(ResultRow::new("protocol", "", "decomposition_total", dec.total()));
            rows.push(ResultRow::new("protocol", "", "dissipation_sum", dec.dissipation_sum));
            rows.push(
                ResultRow::new("protocol", "", "decomposition_residual", (dec.total() - ledger.total_work).abs())
                    .with_tolerance(1e-9),
            );
        }
        Err(Error::IllegalProtocol(why)) => log::info!("no exact decomposition: {why}"),
        Err(e) => return Err(e),
    }
    Ok(rows)
}

fn optimal_sweep(cfg: &ExperimentConfig, sweep: Option<&Sweep>) -> Result<Vec<ResultRow>> {
    let id = "optimal-sweep";
    let ns = sweep_values(id, sweep, Some("n"), &[2.0, 4.0, 8.0, 16.0, 32.0, 64.0])?;
    let ns = ns.iter().map(|&v| positive_integer(id, "n", v)).collect::<Result<Vec<_>>>()?;
    let spec = cfg.build_machine()?;
    let rho = cfg.build_state(&spec)?;
    let b = optimal_bound(cfg, &spec, &rho)?;
    let final_thermalise = matches!(
        cfg.protocol,
        super::config::ProtocolConfig::Optimal { final_thermalise: true, .. }
    );
    let per_n: Vec<Vec<ResultRow>> = ns
        .par_iter()
        .map(|&n| {
            let p = build_optimal_protocol(&spec, &b.minimizer_h_s, n, final_thermalise)?;
            let (ledger, _) = run_protocol(&spec, &p, &rho)?;
            let at = coordinate("n", n as f64);
            Ok(vec![
                ResultRow::new(id, &at, "work", ledger.total_work),
                ResultRow::new(id, &at, "bound", b.bound),
                ResultRow::new(id, &at, "deficit", b.bound - ledger.total_work),
            ])
        })
        .collect::<Result<_>>()?;
    Ok(per_n.concat())
}

fn weak_coupling_sweep(cfg: &ExperimentConfig, sweep: Option<&Sweep>) -> Result<Vec<ResultRow>> {
    let id = "weak-coupling-sweep";
    let ss = sweep_values(id, sweep, Some("s"), &[1e-1, 1e-2, 1e-3])?;
    let spec = cfg.build_machine()?;
    let points: Vec<(f64, WeakPoint)> = ss
        .par_iter()
        .map(|&s| {
            let scaled = spec.with_scaled_coupling(s);
            let rho = cfg.build_state(&scaled)?;
            Ok((s, weak_point(&scaled, &rho, cfg)?))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (s, p) in &points {
        let at = coordinate("s", *s);
        rows.push(ResultRow::new(id, &at, "bound", p.bound));
        rows.push(ResultRow::new(id, &at, "weak_bound", p.weak));
        rows.push(ResultRow::new(id, &at, "difference", p.difference()));
        rows.push(ResultRow::new(id, &at, "delta_f_irrev", p.delta_f_irrev));
    }
    if points.len() >= 2 {
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1.difference()).collect();
        rows.push(ResultRow::new(id, "", "difference_loglog_slope", loglog_slope(&xs, &ys)));
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug)]
pub struct WeakPoint {
    pub bound: f64,
    pub weak: f64,
    pub delta_f_irrev: f64,
}

impl WeakPoint {
    pub fn difference(&self) -> f64 {
        (self.bound - self.weak).abs()
    }
}

pub fn weak_point(spec: &MachineSpec, rho: &DensityMatrix, cfg: &ExperimentConfig) -> Result<WeakPoint> {
    let b = optimal_bound(cfg, spec, rho)?;
    let rho_s = partial_trace(rho, &[0])?;
    Ok(WeakPoint {
        bound: b.bound,
        weak: weak_coupling_bound(&spec.h_s, &rho_s, spec.beta)?,
        delta_f_irrev: b.delta_f_irrev,
    })
}

/// Quench `H_before → H_after` on `rho` with a flat window of `window` levels.
#[derive(Clone, Debug)]
pub struct UnitaryPoint {
    pub window: usize,
    pub levels: usize,
    pub unitarity_defect: f64,
    pub commutes_with_translations: bool,
    pub max_energy_commutator: f64,
    pub epsilon: f64,
    pub disturbance: f64,
    pub rounding_residual: f64,
    pub work: f64,
    pub abstract_work: f64,
}

pub fn unitary_point(
    h_before: &HermitianOperator,
    h_after: &HermitianOperator,
    rho: &DensityMatrix,
    spacing: f64,
    window: usize,
) -> Result<UnitaryPoint> {
    let m = max_level_shift(h_before, h_after, spacing)? as usize;
    let levels = window + 4 * m + 2;
    let ladder = BatteryLadder::new(spacing, levels)?;
    let u = build_quench_unitary(&ladder, h_before, h_after)?;
    let battery = FlatBatteryState::centered(ladder, window)?;
    let out = apply_quench(&u, rho, &battery)?;
    let checks = u.checks();
    Ok(UnitaryPoint {
        window,
        levels,
        unitarity_defect: checks.unitarity_defect,
        commutes_with_translations: checks.commutes_with_translations,
        max_energy_commutator: checks.max_energy_commutator,
        epsilon: out.epsilon,
        disturbance: out.disturbance(rho)?,
        rounding_residual: u.rounding_residual(),
        work: out.work,
        abstract_work: crate::machine::quench_work(rho, h_before, h_after)?,
    })
}

pub fn unitary_rows(id: &str, points: &[UnitaryPoint]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for p in points {
        let at = coordinate("N", p.window as f64);
        rows.push(ResultRow::new(id, &at, "levels", p.levels as f64));
        rows.push(ResultRow::new(id, &at, "unitarity_defect", p.unitarity_defect).with_tolerance(1e-10));
        rows.push(ResultRow::new(id, &at, "commutes_with_translations", f64::from(u8::from(p.commutes_with_translations))));
        rows.push(ResultRow::new(id, &at, "max_energy_commutator", p.max_energy_commutator).with_tolerance(1e-9));
        rows.push(ResultRow::new(id, &at, "epsilon", p.epsilon));
        rows.push(ResultRow::new(id, &at, "disturbance", p.disturbance).with_tolerance(5.0 * p.epsilon));
        rows.push(ResultRow::new(id, &at, "rounding_residual", p.rounding_residual));
        rows.push(ResultRow::new(id, &at, "work", p.work));
        rows.push(ResultRow::new(id, &at, "abstract_work", p.abstract_work));
    }
    if points.len() >= 2 {
        let xs: Vec<f64> = points.iter().map(|p| p.window as f64).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.disturbance).collect();
        rows.push(ResultRow::new(id, "", "disturbance_loglog_slope", loglog_slope(&xs, &ys)));
    }
    rows
}

fn unitary_check(cfg: &ExperimentConfig, sweep: Option<&Sweep>) -> Result<Vec<ResultRow>> {
    let id = "unitary-check";
    let ns = sweep_values(id, sweep, Some("N"), &[8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0])?;
    let ns = ns.iter().map(|&v| positive_integer(id, "N", v)).collect::<Result<Vec<_>>>()?;
    let spec = cfg.build_machine()?;
    let rho = cfg.build_state(&spec)?;
    let h0 = spec.initial_h_sb();
    let h1 = assemble_h_sb(&spec, &target_system_hamiltonian(cfg, &spec), true)?;
    let spacing = cfg.battery.spacing.unwrap_or_else(|| grid_spacing_for(&[&h0, &h1]));
    let points: Vec<UnitaryPoint> = ns
        .par_iter()
        .map(|&n| unitary_point(&h0, &h1, &rho, spacing, n))
        .collect::<Result<_>>()?;
    let mut rows = vec![ResultRow::new(id, "", "spacing", spacing)];
    rows.extend(unitary_rows(id, &points));
    Ok(rows)
}

/// First quench `H0 → H1` with a flat battery, then free evolution and the return quench.
pub struct CoherenceSetup {
    pub battery: FlatBatteryState,
    pub post: crate::embedding::QuenchOutcome,
    pub second: crate::embedding::QuenchUnitary,
    pub baseline: f64,
}

pub fn coherence_setup(
    h0: &HermitianOperator,
    h1: &HermitianOperator,
    rho: &DensityMatrix,
    spacing: f64,
    levels: usize,
    window: usize,
) -> Result<CoherenceSetup> {
    let ladder = BatteryLadder::new(spacing, levels)?;
    let battery = FlatBatteryState::centered(ladder.clone(), window)?;
    let first = build_quench_unitary(&ladder, h0, h1)?;
    let post = apply_quench(&first, rho, &battery)?;
    let second = build_quench_unitary(&ladder, h1, h0)?;
    let baseline = evolve_battery_and_diagnose(&post, &second, &battery, 0.0)?.second_quench_disturbance;
    Ok(CoherenceSetup {
        battery,
        post,
        second,
        baseline,
    })
}

pub fn coherence_rows(id: &str, setup: &CoherenceSetup, times: &[f64]) -> Result<(Vec<ResultRow>, f64)> {
    let reports = coherence_sweep(&setup.post, &setup.second, &setup.battery, times)?;
    let mut rows = vec![ResultRow::new(id, "", "baseline_disturbance", setup.baseline)];
    let mut above = 0usize;
    for r in &reports {
        let at = coordinate("t", r.t);
        rows.push(ResultRow::new(id, &at, "disturbance", r.second_quench_disturbance));
        if r.second_quench_disturbance > setup.baseline {
            above += 1;
        }
        let mut seen = Vec::new();
        for k in r.overlaps.iter().filter(|k| k.shift != 0) {
            if seen.contains(&k.shift) {
                continue;
            }
            seen.push(k.shift);
            let at = format!("{at};{}", coordinate("shift", k.shift as f64));
            rows.push(ResultRow::new(id, &at, "k_modulus", k.value.norm()));
            rows.push(ResultRow::new(id, &at, "k_phase", k.value.arg()));
        }
    }
    let fraction = if reports.is_empty() { 0.0 } else { above as f64 / reports.len() as f64 };
    rows.push(ResultRow::new(id, "", "fraction_above_baseline", fraction));
    Ok((rows, fraction))
}

fn coherence(cfg: &ExperimentConfig, sweep: Option<&Sweep>) -> Result<Vec<ResultRow>> {
    let id = "coherence-sweep";
    let spec = cfg.build_machine()?;
    let rho = cfg.build_state(&spec)?;
    let h0 = spec.initial_h_sb();
    let h1 = assemble_h_sb(&spec, &target_system_hamiltonian(cfg, &spec), true)?;
    let spacing = cfg.battery.spacing.unwrap_or_else(|| grid_spacing_for(&[&h0, &h1]));
    let default = sample_times(
        child_seed(cfg.seed, streams::TIMES),
        DEFAULT_COHERENCE_SAMPLES,
        spacing,
        COHERENCE_PERIODS,
    );
    let times = sweep_values(id, sweep, Some("t"), &default)?;
    let setup = coherence_setup(&h0, &h1, &rho, spacing, cfg.battery.levels, cfg.battery.window)?;
    let mut rows = vec![ResultRow::new(id, "", "spacing", spacing)];
    rows.extend(coherence_rows(id, &setup, &times)?.0);
    Ok(rows)
}

/// Physical run with the configured spacing, or the smallest candidate spacing whose
/// guard band holds for the whole protocol.
pub fn physical_run_auto(
    spec: &MachineSpec,
    protocol: &Protocol,
    rho: &DensityMatrix,
    spacing: Option<f64>,
    levels: usize,
    window: usize,
) -> Result<(f64, PhysicalRun)> {
    let attempt = |delta: f64| -> Result<PhysicalRun> {
        let battery = FlatBatteryState::centered(BatteryLadder::new(delta, levels)?, window)?;
        physical_protocol_run(spec, protocol, rho, &battery, f64::INFINITY)
    };
    if let Some(delta) = spacing {
        return Ok((delta, attempt(delta)?));
    }
    let mut last = None;
    for k in 0..AUTO_SPACING_TRIES {
        let delta = AUTO_SPACING_START * AUTO_SPACING_RATIO.powi(k);
        match attempt(delta) {
            Ok(run) => return Ok((delta, run)),
            Err(e @ Error::GuardBand { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

pub fn physical_rows(id: &str, spacing: f64, run: &PhysicalRun) -> Vec<ResultRow> {
    let mut rows = vec![ResultRow::new(id, "", "spacing", spacing)];
    for s in &run.steps {
        let at = coordinate("step", s.step as f64);
        rows.push(ResultRow::new(id, &at, "physical_work", s.physical));
        rows.push(ResultRow::new(id, &at, "abstract_work", s.abstract_work));
        rows.push(ResultRow::new(id, &at, "difference", s.difference).with_tolerance(s.tolerance));
    }
    rows.push(ResultRow::new(id, "", "physical_total", run.physical.total_work));
    rows.push(ResultRow::new(id, "", "abstract_total", run.abstract_ledger.total_work));
    rows.push(ResultRow::new(id, "", "max_rounding_residual", run.max_rounding_residual));
    rows.push(ResultRow::new(id, "", "relative_total_difference", run.relative_total_difference()).with_tolerance(0.01));
    rows
}

fn physical_vs_abstract(cfg: &ExperimentConfig, sweep: Option<&Sweep>) -> Result<Vec<ResultRow>> {
    let id = "physical-vs-abstract";
    sweep_values(id, sweep, None, &[])?;
    let spec = cfg.build_machine()?;
    let rho = cfg.build_state(&spec)?;
    let p = cfg.build_protocol(&spec, &rho)?;
    let (spacing, run) = physical_run_auto(&spec, &p, &rho, cfg.battery.spacing, cfg.battery.levels, cfg.battery.window)?;
    Ok(physical_rows(id, spacing, &run))
}

/// Forward optimal protocol from `rho` and its reverse from the Gibbs state.
#[derive(Clone, Debug)]
pub struct ReversalPoint {
    pub w_forward: f64,
    pub w_reverse: f64,
    pub delta_f_irrev: f64,
    pub slack_forward: f64,
    pub slack_reverse: f64,
}

impl ReversalPoint {
    /// `|(W(P*) - W(P*^-1)) - ΔF_irrev|`.
    pub fn identity_residual(&self) -> f64 {
        ((self.w_forward - self.w_reverse) - self.delta_f_irrev).abs()
    }
}

pub fn reversal_point(spec: &MachineSpec, rho: &DensityMatrix, b: &BoundReport, n: usize) -> Result<ReversalPoint> {
    let forward = build_optimal_protocol(spec, &b.minimizer_h_s, n, false)?;
    let (lf, _, hf) = run_with_heat(spec, &forward, rho)?;
    let omega = gibbs_state(&spec.initial_h_sb(), spec.beta);
    let (lr, _, hr) = run_with_heat(spec, &reverse_protocol(&forward), &omega)?;
    Ok(ReversalPoint {
        w_forward: lf.total_work,
        w_reverse: lr.total_work,
        delta_f_irrev: b.delta_f_irrev,
        slack_forward: hf.clausius_slack,
        slack_reverse: hr.clausius_slack,
    })
}

fn second_law(cfg: &ExperimentConfig, sweep: Option<&Sweep>) -> Result<Vec<ResultRow>> {
    let id = "second-law";
    sweep_values(id, sweep, None, &[])?;
    let spec = cfg.build_machine()?;
    let rho = cfg.build_state(&spec)?;
    let p = cfg.build_protocol(&spec, &rho)?;
    let (ledger, _, heat) = run_with_heat(&spec, &p, &rho)?;
    let b = optimal_bound(cfg, &spec, &rho)?;
    let n = match cfg.protocol {
        super::config::ProtocolConfig::Optimal { n, .. } => n,
        _ => 8,
    };
    let r = reversal_point(&spec, &rho, &b, n)?;
    let row = |o: &str, v: f64| ResultRow::new(id, "", o, v);
    Ok(vec![
        row("total_work", ledger.total_work),
        row("heat", heat.heat),
        row("delta_e_sb", heat.delta_e_sb),
        row("delta_s_sb", heat.delta_s_sb),
        row("clausius_slack", heat.clausius_slack).with_tolerance(-1e-9),
        row("w_forward", r.w_forward),
        row("w_reverse", r.w_reverse),
        row("delta_f_irrev", r.delta_f_irrev),
        row("reversal_identity_residual", r.identity_residual()).with_tolerance(1e-8),
        row("clausius_slack_forward", r.slack_forward).with_tolerance(-1e-9),
        row("clausius_slack_reverse", r.slack_reverse).with_tolerance(-1e-9),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{parse_config, ExperimentEntry, ProtocolConfig, StateConfig};
    use crate::harness::output::rows_to_string;

    fn base() -> ExperimentConfig {
        parse_config(
            r#"
seed = 11
[machine]
beta = 1.0
generator = "random"
d_s = 2
d_b = 2
coupling = 0.5
[optimizer]
random_starts = 2
max_iterations = 2000
gradient_tolerance = 1e-9
[battery]
levels = 96
window = 32
"#,
        )
        .unwrap()
    }

    fn value(rows: &[ResultRow], obs: &str) -> f64 {
        rows.iter().find(|r| r.observable == obs).unwrap().value
    }

    #[test]
    fn empty_protocol_yields_zero_work() {
        let mut cfg = base();
        cfg.protocol = ProtocolConfig::Empty;
        let rows = protocol(&cfg, None).unwrap();
        assert_eq!(value(&rows, "total_work"), 0.0);
    }

    #[test]
    fn planted_bound_has_vanishing_irreversible_part() {
        let mut cfg = base();
        cfg.state = StateConfig::Planted { scale: 0.7 };
        let rows = bound(&cfg, None).unwrap();
        assert!(value(&rows, "delta_f_irrev").abs() < 1e-8);
    }

    #[test]
    fn proof_form_protocol_reports_decomposition() {
        let mut cfg = base();
        cfg.protocol = ProtocolConfig::Optimal {
            n: 4,
            final_thermalise: true,
        };
        let rows = protocol(&cfg, None).unwrap();
        assert!(value(&rows, "decomposition_residual") < 1e-9);
    }

    #[test]
    fn sweeps_keep_order_and_reject_wrong_parameter() {
        let cfg = base();
        let s = Sweep {
            parameter: "n".into(),
            values: vec![8.0, 2.0, 4.0],
        };
        let rows = optimal_sweep(&cfg, Some(&s)).unwrap();
        let ns: Vec<&str> = rows.iter().step_by(3).map(|r| r.coordinates.as_str()).collect();
        assert_eq!(ns, vec![coordinate("n", 8.0), coordinate("n", 2.0), coordinate("n", 4.0)]);
        let bad = Sweep {
            parameter: "s".into(),
            values: vec![0.1],
        };
        assert!(matches!(optimal_sweep(&cfg, Some(&bad)), Err(Error::Config(_))));
        assert!(matches!(bound(&cfg, Some(&bad)), Err(Error::Config(_))));
        let frac = Sweep {
            parameter: "n".into(),
            values: vec![2.5],
        };
        assert!(optimal_sweep(&cfg, Some(&frac)).is_err());
    }

    #[test]
    fn identical_configs_give_identical_bytes_across_worker_counts() {
        let mut cfg = base();
        cfg.experiments = vec![
            ExperimentEntry {
                id: "optimal-sweep".into(),
                sweep: Some(Sweep {
                    parameter: "n".into(),
                    values: vec![2.0, 4.0, 8.0],
                }),
            },
            ExperimentEntry {
                id: "unitary-check".into(),
                sweep: Some(Sweep {
                    parameter: "N".into(),
                    values: vec![8.0, 16.0],
                }),
            },
        ];
        cfg.workers = Some(1);
        let a = rows_to_string(&run_experiment(&cfg).unwrap()).unwrap();
        cfg.workers = Some(3);
        let b = rows_to_string(&run_experiment(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn slope_of_a_power_law() {
        let xs = [1.0, 10.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((loglog_slope(&xs, &ys) + 1.5).abs() < 1e-12);
    }
}
