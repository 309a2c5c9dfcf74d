//! Quasi-Ohmic phonon bath and the single-spin flip rates it induces.

use std::io::Write;

use crate::model::{MagnetizationGrid, ModelParams, Sector};

/// Prefactor of the golden-rule flip rate `w = RATE_SCALE · γ · K̃(ω)`.
///
/// A flip is driven by both transverse couplings `σ_x B_x` and `σ_y B_y`,
/// each contributing `γ K̃`. With this factor the linearized drift of `m`
/// is `γ((J − T) m + g s)`.
pub const RATE_SCALE: f64 = 2.0;

/// Evaluator of the bath spectrum `K̃(ω) = ω e^{−|ω|/Γ} / (4 (e^{ω/T} − 1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathKernel {
    pub temperature: f64,
    pub cutoff: f64,
}

impl BathKernel {
    pub fn new(temperature: f64, cutoff: f64) -> Self {
        assert!(temperature > 0.0 && cutoff > 0.0);
        BathKernel { temperature, cutoff }
    }

    pub fn from_params(params: &ModelParams) -> Self {
        Self::new(params.temperature, params.cutoff)
    }

    /// `K̃(ω)`, with the removable singularity at `ω = 0` equal to `T/4`.
    pub fn spectrum(&self, omega: f64) -> f64 {
        if omega == 0.0 {
            return 0.25 * self.temperature;
        }
        let x = omega / self.temperature;
        let damping = (-omega.abs() / self.cutoff).exp();
        if x > 700.0 {
            // e^x overflows; go through the log form
            return self.ln_spectrum(omega).exp();
        }
        0.25 * omega * damping / x.exp_m1()
    }

    /// `ln K̃(ω)`, finite for every finite `ω`.
    pub fn ln_spectrum(&self, omega: f64) -> f64 {
        if omega == 0.0 {
            return (0.25 * self.temperature).ln();
        }
        let x = omega / self.temperature;
        // ln|e^x − 1|
        let ln_denominator = if x > 30.0 {
            x + (-(-x).exp()).ln_1p()
        } else if x > 0.0 {
            x.exp_m1().ln()
        } else {
            (-x.exp()).ln_1p()
        };
        (0.25 * omega.abs()).ln() - omega.abs() / self.cutoff - ln_denominator
    }
}

/// Per-spin flip rates `(w₊, w₋)` in an effective field `h`: a down spin
/// flips up by absorbing `2h` from the bath, `w₊ = c γ K̃(−2h)`, and
/// `w₋ = c γ K̃(2h)`.
pub fn single_spin_rates(params: &ModelParams, field: f64) -> (f64, f64) {
    let kernel = BathKernel::from_params(params);
    let c = RATE_SCALE * params.gamma;
    (c * kernel.spectrum(-2.0 * field), c * kernel.spectrum(2.0 * field))
}

/// Mean-field drift `(1 − m) w₊(h) − (1 + m) w₋(h)` with `h = J m + g s`.
pub fn mean_field_drift(params: &ModelParams, m: f64, sector_sign: f64) -> f64 {
    let (up, down) = single_spin_rates(params, params.field(m, sector_sign));
    (1.0 - m) * up - (1.0 + m) * down
}

/// Total transition rates of the collective birth-death process on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipRates {
    pub m: Vec<f64>,
    /// Rate `m → m + 2/N`.
    pub up_rates: Vec<f64>,
    /// Rate `m → m − 2/N`.
    pub down_rates: Vec<f64>,
    pub sector_sign: f64,
}

/// Builds grid flip rates for a sector. `sector_sign` is `±1` for the
/// tested-spin sectors and `0` for the uncoupled magnet.
///
/// The bath frequency of the transition `k → k+1` is the exact energy
/// change `E(m_{k+1}) − E(m_k) = −2 h(m_k + 1/N)`, so the field is evaluated
/// at the bond midpoint. This makes the sector Gibbs measure (with shell
/// degeneracies) exactly stationary on the finite grid.
pub fn build_flip_rates_signed(params: &ModelParams, sector_sign: f64) -> FlipRates {
    let n = params.n_spins;
    let nf = n as f64;
    let kernel = BathKernel::from_params(params);
    let c = RATE_SCALE * params.gamma;
    let grid_m = |k: usize| (2 * k as i64 - n as i64) as f64 / nf;

    let mut up_rates = vec![0.0; n + 1];
    let mut down_rates = vec![0.0; n + 1];
    for k in 0..n {
        let bond_m = (2 * k as i64 + 1 - n as i64) as f64 / nf;
        let h = params.field(bond_m, sector_sign);
        up_rates[k] = (n - k) as f64 * c * kernel.spectrum(-2.0 * h);
        down_rates[k + 1] = (k + 1) as f64 * c * kernel.spectrum(2.0 * h);
    }
    FlipRates {
        m: (0..=n).map(grid_m).collect(),
        up_rates,
        down_rates,
        sector_sign,
    }
}

pub fn build_flip_rates(params: &ModelParams, sector: Sector) -> FlipRates {
    build_flip_rates_signed(params, sector.sign())
}

impl FlipRates {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Largest total escape rate over the grid.
    pub fn max_total_rate(&self) -> f64 {
        self.up_rates
            .iter()
            .zip(&self.down_rates)
            .map(|(u, d)| u + d)
            .fold(0.0, f64::max)
    }

    /// `dP/dt` of the master equation.
    pub fn generator_apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|k| {
                let gain_from_below = if k > 0 { self.up_rates[k - 1] * p[k - 1] } else { 0.0 };
                let gain_from_above = if k + 1 < n {
                    self.down_rates[k + 1] * p[k + 1]
                } else {
                    0.0
                };
                gain_from_below + gain_from_above - (self.up_rates[k] + self.down_rates[k]) * p[k]
            })
            .collect()
    }

    /// Drift of `m` at each grid point, `(2/N)(up − down)`.
    pub fn drift(&self) -> Vec<f64> {
        let step = 2.0 / (self.len() - 1) as f64;
        self.up_rates
            .iter()
            .zip(&self.down_rates)
            .map(|(u, d)| step * (u - d))
            .collect()
    }

    /// CSV with columns `m,up_rate,down_rate`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "m,up_rate,down_rate")?;
        for ((m, u), d) in self.m.iter().zip(&self.up_rates).zip(&self.down_rates) {
            writeln!(w, "{m:.17e},{u:.17e},{d:.17e}")?;
        }
        Ok(())
    }
}

/// Sector Gibbs distribution `∝ C(N,k) exp(−E_s(m)/T)` on the grid.
pub fn sector_gibbs(params: &ModelParams, grid: &MagnetizationGrid, sector_sign: f64) -> Vec<f64> {
    grid.distribution_from_log_weights(|m| -params.sector_energy(m, sector_sign) / params.temperature)
}
