use rand::Rng;
use rayon::prelude::*;

use super::battery::FlatBatteryState;
use super::quench::{quench_joint, reduce_r, shifted_overlap, QuenchOutcome, QuenchUnitary};
use crate::error::{Error, Result};
use crate::operator::{c, trace_distance, CMatrix, CVector, DensityMatrix, UnitaryOperator, C64};
use crate::random::seeded_rng;

/// `<Psi(t)| Γ(m δ) |Psi(t)>` for one index tuple `(j, j', k, k')` of the second quench.
#[derive(Clone, Debug, PartialEq)]
pub struct KOverlap {
    pub indices: [usize; 4],
    pub shift: i64,
    pub value: C64,
}

#[derive(Clone, Debug)]
pub struct CoherenceReport {
    pub t: f64,
    pub overlaps: Vec<KOverlap>,
    pub rho_r_evolved: DensityMatrix,
    pub second_quench_disturbance: f64,
}

/// `(U_R ⊗ diag(phases)) M` on `R ⊗ W`.
fn left_apply(m: &CMatrix, u_r: &CMatrix, phases: &[C64]) -> CMatrix {
    let (d, n) = (u_r.nrows(), phases.len());
    let rows = d * n;
    let mut out = CMatrix::zeros(rows, m.ncols());
    let src = m.as_slice();
    let dst = out.as_mut_slice();
    for col in 0..m.ncols() {
        let base = col * rows;
        for r in 0..d {
            for a in 0..d {
                let u = u_r[(r, a)];
                if u == c(0.0) {
                    continue;
                }
                for w in 0..n {
                    dst[base + r * n + w] += u * phases[w] * src[base + a * n + w];
                }
            }
        }
    }
    out
}

/// Evolves a joint `R ⊗ W` state under `H_R ⊗ I + I ⊗ H_W` for time `t`.
pub fn evolve_joint(joint: &CMatrix, u_r: &UnitaryOperator, battery_phases: &[C64]) -> CMatrix {
    let half = left_apply(joint, u_r.entries(), battery_phases);
    let full = left_apply(&half.adjoint(), u_r.entries(), battery_phases);
    (&full + full.adjoint()) * c(0.5)
}

/// Lets the post-quench state evolve for time `t` under the new system Hamiltonian and
/// the battery Hamiltonian, then applies `second` with the same battery.
pub fn evolve_battery_and_diagnose(
    post: &QuenchOutcome,
    second: &QuenchUnitary,
    battery: &FlatBatteryState,
    t: f64,
) -> Result<CoherenceReport> {
    let ladder = second.ladder();
    if *ladder != battery.ladder {
        return Err(Error::InvalidArgument("second quench uses a different ladder".into()));
    }
    let d = second.d_r();
    let nw = ladder.n_levels();
    if post.joint.nrows() != d * nw {
        return Err(Error::DimensionMismatch(format!(
            "post-quench state has dimension {}, second quench acts on {}",
            post.joint.nrows(),
            d * nw
        )));
    }
    let h1 = second.h_before();
    let u_r = UnitaryOperator::time_evolution(h1, t);
    let w0 = ladder.energy(0);
    let phases: Vec<C64> = (0..nw)
        .map(|k| C64::from_polar(1.0, -(ladder.energy(k) - w0) * t))
        .collect();
    let evolved = evolve_joint(&post.joint, &u_r, &phases);
    let rho_r_evolved = DensityMatrix::from_trusted(h1.space().clone(), reduce_r(&evolved, d, nw));
    let (after, _) = quench_joint(second, &evolved)?;
    let rho_r_after = DensityMatrix::from_trusted(h1.space().clone(), reduce_r(&after, d, nw));
    let disturbance = trace_distance(&rho_r_after, &rho_r_evolved)?;

    let amps0 = battery.amplitudes();
    let amps = CVector::from_fn(nw, |k, _| amps0[k] * phases[k]);
    let mut overlaps = Vec::with_capacity(d.pow(4));
    for j in 0..d {
        for jp in 0..d {
            for k in 0..d {
                for kp in 0..d {
                    let shift = second.shift(j, k) - second.shift(jp, kp);
                    overlaps.push(KOverlap {
                        indices: [j, jp, k, kp],
                        shift,
                        value: shifted_overlap(ladder, &amps, shift),
                    });
                }
            }
        }
    }
    Ok(CoherenceReport {
        t,
        overlaps,
        rho_r_evolved,
        second_quench_disturbance: disturbance,
    })
}

/// Uniform sample times on `[0, periods · 2π/δ]`.
pub fn sample_times(seed: u64, samples: usize, spacing: f64, periods: f64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    let t_max = periods * 2.0 * std::f64::consts::PI / spacing;
    (0..samples).map(|_| rng.random_range(0.0..t_max)).collect()
}

/// Diagnoses every time in `times` in parallel; output follows the input order.
pub fn coherence_sweep(
    post: &QuenchOutcome,
    second: &QuenchUnitary,
    battery: &FlatBatteryState,
    times: &[f64],
) -> Result<Vec<CoherenceReport>> {
    times
        .par_iter()
        .map(|&t| evolve_battery_and_diagnose(post, second, battery, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::battery::BatteryLadder;
    use crate::embedding::quench::{apply_quench, build_quench_unitary};
    use crate::operator::{CompositeSpace, HermitianOperator};
    use crate::random::{random_pure_state, random_unitary};

    fn rotated(v: &[f64], seed: u64) -> HermitianOperator {
        let u = random_unitary(&mut seeded_rng(seed), v.len());
        let d = CMatrix::from_diagonal(&CVector::from_iterator(v.len(), v.iter().map(|&x| c(x))));
        HermitianOperator::new(CompositeSpace::single(v.len()), &u * d * u.adjoint()).unwrap()
    }

    struct Setup {
        battery: FlatBatteryState,
        rho: DensityMatrix,
        h1: HermitianOperator,
        post: QuenchOutcome,
        second: QuenchUnitary,
    }

    fn setup() -> Setup {
        let ladder = BatteryLadder::new(0.25, 96).unwrap();
        let h0 = rotated(&[0.0, 1.0], 21);
        let h1 = rotated(&[0.0, 0.5], 22);
        let h2 = rotated(&[0.0, 1.25], 23);
        let battery = FlatBatteryState::centered(ladder.clone(), 64).unwrap();
        let rho = random_pure_state(&mut seeded_rng(24), CompositeSpace::single(2));
        let first = build_quench_unitary(&ladder, &h0, &h1).unwrap();
        let post = apply_quench(&first, &rho, &battery).unwrap();
        let second = build_quench_unitary(&ladder, &h1, &h2).unwrap();
        Setup { battery, rho, h1, post, second }
    }

    #[test]
    fn zero_time_matches_a_direct_second_quench() {
        let s = setup();
        let r = evolve_battery_and_diagnose(&s.post, &s.second, &s.battery, 0.0).unwrap();
        assert!((r.rho_r_evolved.entries() - s.post.rho_r_after.entries()).norm() < 1e-14);
        let (after, _) = quench_joint(&s.second, &s.post.joint).unwrap();
        let direct = DensityMatrix::from_trusted(CompositeSpace::single(2), reduce_r(&after, 2, 96));
        let want = trace_distance(&direct, &s.post.rho_r_after).unwrap();
        assert!((r.second_quench_disturbance - want).abs() < 1e-14);
        assert!(r.second_quench_disturbance < 5.0 * (s.post.epsilon + s.second.epsilon(64)));
        assert!(s.post.disturbance(&s.rho).unwrap() < 5.0 * s.post.epsilon);
    }

    #[test]
    fn system_marginal_follows_its_own_propagator() {
        let s = setup();
        for t in [0.7, 13.0, 250.0] {
            let r = evolve_battery_and_diagnose(&s.post, &s.second, &s.battery, t).unwrap();
            let u = UnitaryOperator::time_evolution(&s.h1, t);
            let want = s.post.rho_r_after.conjugate_by(&u).unwrap();
            assert!((r.rho_r_evolved.entries() - want.entries()).norm() < 1e-11);
        }
    }

    #[test]
    fn overlap_modulus_is_time_independent() {
        let s = setup();
        let a = evolve_battery_and_diagnose(&s.post, &s.second, &s.battery, 0.0).unwrap();
        let b = evolve_battery_and_diagnose(&s.post, &s.second, &s.battery, 3.3).unwrap();
        for (x, y) in a.overlaps.iter().zip(&b.overlaps) {
            assert_eq!(x.shift, y.shift);
            assert!((x.value.norm() - y.value.norm()).abs() < 1e-12);
            assert!((x.value.norm() - s.battery.overlap_closed_form(x.shift)).abs() < 1e-12);
        }
    }

    #[test]
    fn disturbance_grows_for_most_times() {
        let s = setup();
        let base = evolve_battery_and_diagnose(&s.post, &s.second, &s.battery, 0.0)
            .unwrap()
            .second_quench_disturbance;
        let times = sample_times(5, 40, 0.25, 100.0);
        let reports = coherence_sweep(&s.post, &s.second, &s.battery, &times).unwrap();
        let above = reports.iter().filter(|r| r.second_quench_disturbance > base).count();
        assert!(above >= 36, "{above} of 40");
    }

    #[test]
    fn sample_times_are_seeded_and_in_range() {
        let a = sample_times(3, 10, 0.5, 100.0);
        assert_eq!(a, sample_times(3, 10, 0.5, 100.0));
        let t_max = 100.0 * 2.0 * std::f64::consts::PI / 0.5;
        assert!(a.iter().all(|&t| (0.0..t_max).contains(&t)));
    }
}
