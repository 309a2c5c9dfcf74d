//! Brute-force references at small `N`: explicit enumeration of all `2^N`
//! z-basis configurations of the magnet.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bath::{build_flip_rates_signed, sector_gibbs};
use crate::dephasing::{closed_form_amplitude, dephasing_amplitude};
use crate::error::{Error, Result};
use crate::measurement::{InitialSpinState, SpinMatrix};
use crate::model::{MagnetizationGrid, ModelParams, Sector};
use crate::numerics::fold_phase;

pub const ORACLE_MAX_SPINS: usize = 14;

/// All `2^N` configurations with uniform weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpinConfigurationEnsemble {
    n_spins: usize,
}

impl SpinConfigurationEnsemble {
    pub fn new(n_spins: usize) -> Result<Self> {
        if n_spins > ORACLE_MAX_SPINS {
            return Err(Error::OracleTooLarge {
                n: n_spins,
                cap: ORACLE_MAX_SPINS,
            });
        }
        if n_spins == 0 {
            return Err(Error::invalid("n_spins", "must be >= 1"));
        }
        Ok(SpinConfigurationEnsemble { n_spins })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    /// Bit `i` set means spin `i` points up.
    pub fn configurations(&self) -> impl Iterator<Item = u32> {
        0..(1u32 << self.n_spins)
    }

    /// `Σ σ_z` of a configuration.
    pub fn total_spin(&self, config: u32) -> i64 {
        2 * config.count_ones() as i64 - self.n_spins as i64
    }

    /// `μ(c) = (1/N) Σ σ_z`.
    pub fn magnetization(&self, config: u32) -> f64 {
        self.total_spin(config) as f64 / self.n_spins as f64
    }

    /// Number of configurations in each shell `k` (number of up spins).
    pub fn shell_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_spins + 1];
        for c in self.configurations() {
            counts[c.count_ones() as usize] += 1;
        }
        counts
    }

    /// Energy of the tested-spin sector `s`: `−J (Σσ)²/(2N) − g s Σσ`.
    fn sector_energy(&self, config: u32, coupling_j: f64, coupling_g: f64, s: f64) -> f64 {
        let total = self.total_spin(config) as f64;
        -0.5 * coupling_j * total * total / self.n_spins as f64 - coupling_g * s * total
    }
}

/// `ρ_↑↓(t)/ρ_↑↓(0)` of the tested spin for a maximally mixed magnet,
/// evolving each configuration under the full Hamiltonian of the `↑` and
/// `↓` sectors separately. The Ising term is kept and must cancel.
pub fn exact_dephasing(n: usize, coupling_g: f64, t: f64) -> Result<Complex64> {
    let ensemble = SpinConfigurationEnsemble::new(n)?;
    let weight = 1.0 / (1u64 << n) as f64;
    let j = 1.0;
    let mut acc = Complex64::new(0.0, 0.0);
    for c in ensemble.configurations() {
        let e_up = ensemble.sector_energy(c, j, coupling_g, 1.0);
        let e_down = ensemble.sector_energy(c, j, coupling_g, -1.0);
        // ⟨↑,c| e^{−iHt} ρ e^{iHt} |↓,c⟩
        let phase_up = Complex64::from_polar(1.0, fold_phase(-e_up * t));
        let phase_down = Complex64::from_polar(1.0, fold_phase(e_down * t));
        acc += weight * phase_up * phase_down;
    }
    Ok(acc)
}

/// Reduced spin state at time `t` with the bath off, from enumeration.
pub fn exact_spin_marginal(spin: &InitialSpinState, n: usize, coupling_g: f64, t: f64) -> Result<SpinMatrix> {
    let a = exact_dephasing(n, coupling_g, t)?;
    Ok(SpinMatrix::from_elements(spin.r_uu(), spin.r_dd(), spin.r_ud() * a))
}

/// Gibbs weights `∝ exp(−E/T)` over every configuration, aggregated by shell.
pub fn exact_gibbs(params: &ModelParams, sector: Option<Sector>) -> Result<Vec<f64>> {
    let ensemble = SpinConfigurationEnsemble::new(params.n_spins)?;
    let s = sector.map_or(0.0, Sector::sign);
    let energies: Vec<(usize, f64)> = ensemble
        .configurations()
        .map(|c| {
            (
                c.count_ones() as usize,
                ensemble.sector_energy(c, params.coupling_j, params.coupling_g, s),
            )
        })
        .collect();
    let e_min = energies.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let mut shells = vec![0.0; params.n_spins + 1];
    for (k, e) in energies {
        shells[k] += (-(e - e_min) / params.temperature).exp();
    }
    let z: f64 = shells.iter().sum();
    Ok(shells.into_iter().map(|w| w / z).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<48} {:>12} {:>10}  result\n", "check", "max error", "tolerance");
        for c in &self.checks {
            out.push_str(&format!(
                "{:<48} {:>12.3e} {:>10.1e}  {}\n",
                c.name,
                c.max_error,
                c.tolerance,
                if c.passed { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

fn check(name: impl Into<String>, max_error: f64, tolerance: f64) -> OracleCheck {
    OracleCheck {
        name: name.into(),
        max_error,
        tolerance,
        passed: max_error <= tolerance,
    }
}

/// `n_pairs` reproducible `(g, t)` pairs with `g ∈ [0.01, 1]`, `t ∈ [0, 50]`.
pub fn dephasing_test_pairs(n_pairs: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_pairs)
        .map(|_| (rng.gen_range(0.01..1.0), rng.gen_range(0.0..50.0)))
        .collect()
}

/// Every enumeration-versus-collective comparison, as a pass/fail table.
pub fn agreement_suite() -> Result<OracleReport> {
    let mut checks = Vec::new();
    let pairs = dephasing_test_pairs(50, 7);

    let mut err_sum = 0.0_f64;
    let mut err_closed = 0.0_f64;
    for n in 1..=10 {
        let params = ModelParams::reference().with_n_spins(n);
        for &(g, t) in &pairs {
            let exact = exact_dephasing(n, g, t)?;
            let collective = dephasing_amplitude(&params.with_coupling_g(g), t);
            err_sum = err_sum.max((exact - collective.summed).norm());
            err_closed = err_closed.max((exact - Complex64::new(closed_form_amplitude(n, g, t), 0.0)).norm());
        }
    }
    checks.push(check("dephasing: enumeration vs shell sum (N<=10)", err_sum, 1e-12));
    checks.push(check("dephasing: enumeration vs cos^N (N<=10)", err_closed, 1e-12));

    let mut count_err = 0.0_f64;
    for n in 1..=ORACLE_MAX_SPINS {
        let counts = SpinConfigurationEnsemble::new(n)?.shell_counts();
        let grid = MagnetizationGrid::new(n);
        for (c, ld) in counts.iter().zip(grid.log_degeneracy()) {
            count_err = count_err.max((*c as f64 - ld.exp()).abs() / *c as f64);
        }
    }
    checks.push(check("shell counts vs C(N,k) (N<=14)", count_err, 1e-12));

    let mut gibbs_err = 0.0_f64;
    let mut stationarity = 0.0_f64;
    for (n, j, t, g) in [
        (4, 1.0, 0.8, 0.0),
        (7, 1.0, 0.6, 0.1),
        (10, 1.3, 0.9, 0.25),
        (12, 1.0, 2.0, 0.05),
    ] {
        let params = ModelParams {
            n_spins: n,
            coupling_j: j,
            coupling_g: g,
            temperature: t,
            ..ModelParams::reference()
        };
        let grid = MagnetizationGrid::new(n);
        for sector in [Sector::Up, Sector::Down] {
            let exact = exact_gibbs(&params, Some(sector))?;
            let collective = sector_gibbs(&params, &grid, sector.sign());
            for (a, b) in exact.iter().zip(&collective) {
                gibbs_err = gibbs_err.max((a - b).abs());
            }
            let rates = build_flip_rates_signed(&params, sector.sign());
            let dp = rates.generator_apply(&exact);
            let scale = rates.max_total_rate();
            stationarity = stationarity.max(dp.iter().map(|x| x.abs()).fold(0.0, f64::max) / scale);
        }
    }
    checks.push(check("Gibbs: enumeration vs grid (N<=12)", gibbs_err, 1e-12));
    checks.push(check("Gibbs: stationarity under flip rates", stationarity, 1e-12));

    Ok(OracleReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_spin_is_cosine() {
        for &(g, t) in &[(0.1, 0.0), (0.3, 1.7), (1.0, 12.0)] {
            let a = exact_dephasing(1, g, t).unwrap();
            assert!((a - Complex64::new((2.0 * g * t).cos(), 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn eight_spins_match_closed_form() {
        let a = exact_dephasing(8, 0.3, 1.7).unwrap();
        let p = ModelParams::reference().with_n_spins(8).with_coupling_g(0.3);
        let d = dephasing_amplitude(&p, 1.7);
        assert!((a - d.summed).norm() <= 1e-12);
        assert!((a.re - d.closed_form).abs() <= 1e-12);
    }

    #[test]
    fn unit_at_time_zero() {
        for n in 1..=14 {
            assert!((exact_dephasing(n, 0.2, 0.0).unwrap() - 1.0).norm() < 1e-14);
        }
    }

    #[test]
    fn size_cap() {
        assert!(matches!(
            exact_dephasing(15, 0.1, 1.0),
            Err(Error::OracleTooLarge { n: 15, .. })
        ));
        let p = ModelParams::reference().with_n_spins(20);
        assert!(exact_gibbs(&p, None).is_err());
    }

    #[test]
    fn shell_counts_are_binomial() {
        let counts = SpinConfigurationEnsemble::new(14).unwrap().shell_counts();
        assert_eq!(counts[7], 3432);
        assert_eq!(counts.iter().sum::<u64>(), 1 << 14);
        let e = SpinConfigurationEnsemble::new(6).unwrap();
        let grid = MagnetizationGrid::new(6);
        for c in e.configurations() {
            assert_eq!(e.magnetization(c), grid.values()[c.count_ones() as usize]);
        }
    }

    #[test]
    fn gibbs_small_n_matches_grid() {
        let p = ModelParams {
            n_spins: 4,
            coupling_g: 0.0,
            ..ModelParams::reference()
        };
        let exact = exact_gibbs(&p, None).unwrap();
        let grid = sector_gibbs(&p, &MagnetizationGrid::new(4), 0.0);
        for (a, b) in exact.iter().zip(&grid) {
            assert!((a - b).abs() < 1e-12);
        }
        for k in 0..=4 {
            assert_relative_eq!(exact[k], exact[4 - k], max_relative = 1e-14);
        }
    }

    #[test]
    fn gibbs_infinite_temperature_is_binomial() {
        let p = ModelParams {
            n_spins: 6,
            temperature: 1e12,
            ..ModelParams::reference()
        };
        let exact = exact_gibbs(&p, Some(Sector::Up)).unwrap();
        let binom = [1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0];
        for (a, b) in exact.iter().zip(binom) {
            assert_relative_eq!(*a, b / 64.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn spin_marginal_keeps_diagonal() {
        let spin = InitialSpinState::new(0.64, Complex64::new(0.48, 0.0)).unwrap();
        let m = exact_spin_marginal(&spin, 9, 0.2, 3.0).unwrap();
        assert_eq!(m.diagonal(), (0.64, 0.36));
        assert!(m.off_diagonal().norm() <= 0.48);
    }

    #[test]
    fn suite_passes() {
        let report = agreement_suite().unwrap();
        assert!(report.all_passed(), "{}", report.table());
    }
}
