use crate::error::{Error, Result};
use crate::operator::{c, CMatrix, CVector, CompositeSpace, DensityMatrix, HermitianOperator, UnitaryOperator};

/// Equally spaced battery spectrum `w_k = w_0 + k * spacing` with cyclic translations.
#[derive(Clone, Debug, PartialEq)]
pub struct BatteryLadder {
    spacing: f64,
    n_levels: usize,
    ground: f64,
}

impl BatteryLadder {
    pub fn new(spacing: f64, n_levels: usize) -> Result<Self> {
        Self::with_ground(spacing, n_levels, 0.0)
    }

    pub fn with_ground(spacing: f64, n_levels: usize, ground: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidArgument(format!("ladder spacing must be positive, got {spacing}")));
        }
        if n_levels < 2 {
            return Err(Error::InvalidArgument("ladder needs at least two levels".into()));
        }
        Ok(Self {
            spacing,
            n_levels,
            ground,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.ground + k as f64 * self.spacing
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.n_levels).map(|k| self.energy(k)).collect()
    }

    pub fn space(&self) -> CompositeSpace {
        CompositeSpace::single(self.n_levels)
    }

    pub fn hamiltonian(&self) -> HermitianOperator {
        HermitianOperator::from_real_diagonal(self.space(), &self.energies()).expect("sizes agree")
    }

    /// Nearest number of grid steps and the rounding residual.
    pub fn snap(&self, energy: f64) -> (i64, f64) {
        let m = (energy / self.spacing).round();
        (m as i64, (energy - m * self.spacing).abs())
    }

    /// Index reached from `k` after `m` steps, wrapping at the seam.
    pub fn shifted_index(&self, k: usize, m: i64) -> usize {
        (k as i64 + m).rem_euclid(self.n_levels as i64) as usize
    }

    /// `Tr(H_W rho_W)` for a battery state given by its level populations.
    pub fn mean_energy(&self, populations: &[f64]) -> f64 {
        populations.iter().enumerate().map(|(k, p)| p * self.energy(k)).sum()
    }
}

/// Cyclic `m`-step shift `|w_k> -> |w_{k+m}>` for the nearest grid multiple of `shift_energy`.
pub fn translation_operator(ladder: &BatteryLadder, shift_energy: f64) -> (UnitaryOperator, f64) {
    let (m, residual) = ladder.snap(shift_energy);
    (translation_by_levels(ladder, m), residual)
}

pub fn translation_by_levels(ladder: &BatteryLadder, m: i64) -> UnitaryOperator {
    let n = ladder.n_levels;
    let mut p = CMatrix::zeros(n, n);
    for k in 0..n {
        p[(ladder.shifted_index(k, m), k)] = c(1.0);
    }
    UnitaryOperator::new(ladder.space(), p).expect("permutations are unitary")
}

/// Uniform superposition over `window_levels` consecutive ladder levels.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatBatteryState {
    pub ladder: BatteryLadder,
    pub window_start: usize,
    pub window_levels: usize,
}

impl FlatBatteryState {
    pub fn new(ladder: BatteryLadder, window_start: usize, window_levels: usize) -> Result<Self> {
        if window_levels == 0 || window_start + window_levels > ladder.n_levels {
            return Err(Error::InvalidArgument(format!(
                "window [{window_start}, {}) does not fit a ladder of {} levels",
                window_start + window_levels,
                ladder.n_levels
            )));
        }
        Ok(Self {
            ladder,
            window_start,
            window_levels,
        })
    }

    /// Window placed in the middle of the ladder.
    pub fn centered(ladder: BatteryLadder, window_levels: usize) -> Result<Self> {
        let start = ladder.n_levels.saturating_sub(window_levels) / 2;
        Self::new(ladder, start, window_levels)
    }

    /// Width of the window in energy units.
    pub fn width(&self) -> f64 {
        self.window_levels as f64 * self.ladder.spacing
    }

    pub fn window_end(&self) -> usize {
        self.window_start + self.window_levels
    }

    pub fn amplitudes(&self) -> CVector {
        let a = c(1.0 / (self.window_levels as f64).sqrt());
        CVector::from_fn(self.ladder.n_levels, |k, _| {
            if (self.window_start..self.window_end()).contains(&k) {
                a
            } else {
                c(0.0)
            }
        })
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix::pure(self.ladder.space(), &self.amplitudes()).expect("window is nonempty")
    }

    /// Closed form `<Psi| Gamma(m delta) |Psi>` for a window away from the seam.
    pub fn overlap_closed_form(&self, m: i64) -> f64 {
        let n = self.window_levels as i64;
        if m.abs() >= n {
            0.0
        } else {
            (n - m.abs()) as f64 / n as f64
        }
    }
}
