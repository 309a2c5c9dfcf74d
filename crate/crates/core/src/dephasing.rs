//! Evolution of the off-diagonal ("Schrödinger cat") blocks.
//!
//! With `H_SA = −N g s_z m`, the `↑↓` block picks up the phase
//! `e^{2iNgmt}` in each magnetization shell. Traced over the magnet it gives
//! the amplitude `A(t) = Σ_k P₀(m_k) e^{2iNg m_k t}`, which for the
//! infinite-temperature paramagnet is exactly `cos(2gt)^N`. The bath adds a
//! multiplicative suppression on the scale of `τ_irrev`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{tau_irreversibility, tau_recurrence, tau_reduction, MagnetizationGrid, ModelParams};
use crate::numerics::fold_phase;

/// Initial magnet distribution over the grid: the infinite-temperature
/// paramagnet `P₀(m_k) = C(N,k)/2^N`.
pub fn initial_magnet_distribution(params: &ModelParams) -> Vec<f64> {
    let grid = MagnetizationGrid::new(params.n_spins);
    grid.distribution_from_log_weights(|_| 0.0)
}

/// Paramagnet prepared at a finite temperature `t0` (above the Curie point
/// `J`): `P₀ ∝ C(N,k) exp(N J m²/(2 t0))`.
pub fn paramagnet_at_temperature(params: &ModelParams, t0: f64) -> Result<Vec<f64>> {
    if !(t0 > params.coupling_j) {
        return Err(Error::invalid(
            "initial_temperature",
            format!("must exceed the Curie temperature J = {}", params.coupling_j),
        ));
    }
    let grid = MagnetizationGrid::new(params.n_spins);
    let n = params.n_spins as f64;
    Ok(grid.distribution_from_log_weights(|m| 0.5 * n * params.coupling_j * m * m / t0))
}

/// Phase `2 N g m_k t` of shell `k`, reduced mod 2π. `N m_k = 2k − N` is an
/// integer, so the reduction is done on `2gt` first.
fn shell_phase(n_spins: usize, k: usize, coupling_g: f64, t: f64) -> f64 {
    let base = fold_phase(2.0 * coupling_g * t);
    let integer = 2 * k as i64 - n_spins as i64;
    fold_phase(integer as f64 * base)
}

/// `A(t) = Σ_k P(m_k) e^{2iNg m_k t}` for an arbitrary shell distribution.
pub fn amplitude_from_distribution(p: &[f64], coupling_g: f64, t: f64) -> Complex64 {
    let n = p.len() - 1;
    let mut re = 0.0;
    let mut im = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        let (s, c) = shell_phase(n, k, coupling_g, t).sin_cos();
        re += pk * c;
        im += pk * s;
    }
    Complex64::new(re, im)
}

/// Closed form `cos(2gt)^N`.
pub fn closed_form_amplitude(n_spins: usize, coupling_g: f64, t: f64) -> f64 {
    let c = fold_phase(2.0 * coupling_g * t).cos();
    match i32::try_from(n_spins) {
        Ok(n) => c.powi(n),
        Err(_) => c.abs().powf(n_spins as f64) * if c < 0.0 && n_spins % 2 == 1 { -1.0 } else { 1.0 },
    }
}

/// Both routes to the traced dephasing amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DephasingAmplitude {
    /// Shell sum over the binomial distribution.
    pub summed: Complex64,
    /// `cos(2gt)^N`.
    pub closed_form: f64,
}

impl DephasingAmplitude {
    pub fn discrepancy(&self) -> f64 {
        (self.summed - Complex64::new(self.closed_form, 0.0)).norm()
    }
}

pub fn dephasing_amplitude(params: &ModelParams, t: f64) -> DephasingAmplitude {
    let p0 = initial_magnet_distribution(params);
    DephasingAmplitude {
        summed: amplitude_from_distribution(&p0, params.coupling_g, t),
        closed_form: closed_form_amplitude(params.n_spins, params.coupling_g, t),
    }
}

/// `exp(−(t/τ_irrev)⁴)`; identically 1 when the bath or the coupling is off.
pub fn bath_suppression_envelope(params: &ModelParams, t: f64) -> f64 {
    match tau_irreversibility(params) {
        Ok(tau) => (-(t / tau).powi(4)).exp(),
        Err(_) => 1.0,
    }
}

/// Gaussian short-time form `exp(−(t/τ_red)²)` of `|A(t)|`.
pub fn gaussian_envelope(params: &ModelParams, t: f64) -> Result<f64> {
    let tau = tau_reduction(params)?;
    Ok((-(t / tau).powi(2)).exp())
}

/// m-resolved `↑↓` block normalized to `r_↑↓(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffDiagonalBlock {
    /// `P₀(m_k) e^{2iNg m_k t}` times the bath envelope.
    pub amplitudes: Vec<Complex64>,
    /// `Σ_k amplitudes[k]`, the factor multiplying `r_↑↓(0)` after tracing.
    pub scalar_amplitude: Complex64,
    pub time: f64,
}

impl OffDiagonalBlock {
    pub fn initial(p0: &[f64]) -> Self {
        let amplitudes: Vec<Complex64> = p0.iter().map(|&p| Complex64::new(p, 0.0)).collect();
        let scalar_amplitude = amplitudes.iter().sum();
        OffDiagonalBlock {
            amplitudes,
            scalar_amplitude,
            time: 0.0,
        }
    }

    /// Exact evolution from the magnet distribution `p0` to time `t`.
    /// Diagonal blocks are untouched by this map.
    pub fn evolve(params: &ModelParams, p0: &[f64], t: f64) -> Self {
        let n = params.n_spins;
        let env = bath_suppression_envelope(params, t);
        let amplitudes: Vec<Complex64> = p0
            .iter()
            .enumerate()
            .map(|(k, &p)| Complex64::from_polar(p * env, shell_phase(n, k, params.coupling_g, t)))
            .collect();
        let scalar_amplitude = amplitudes.iter().sum();
        OffDiagonalBlock {
            amplitudes,
            scalar_amplitude,
            time: t,
        }
    }

    /// The `↓↑` block.
    pub fn conjugate(&self) -> Self {
        OffDiagonalBlock {
            amplitudes: self.amplitudes.iter().map(|a| a.conj()).collect(),
            scalar_amplitude: self.scalar_amplitude.conj(),
            time: self.time,
        }
    }
}

/// Value of the suppressed amplitude at the first recurrence `π/(2g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceCheck {
    pub time: f64,
    pub value: f64,
    pub threshold: f64,
    pub survives: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DephasingTrajectory {
    pub times: Vec<f64>,
    pub abs_amplitude: Vec<f64>,
    pub envelope: Vec<f64>,
    pub product: Vec<f64>,
    pub first_recurrence: Option<RecurrenceCheck>,
}

impl DephasingTrajectory {
    /// CSV with columns `t,abs_amplitude,envelope,product`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,abs_amplitude,envelope,product")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                self.times[i], self.abs_amplitude[i], self.envelope[i], self.product[i]
            )?;
        }
        Ok(())
    }
}

pub(crate) fn check_sorted(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::EmptyTimeGrid);
    }
    for (i, w) in times.windows(2).enumerate() {
        if !(w[1] >= w[0]) {
            return Err(Error::UnsortedTimes { index: i + 1 });
        }
    }
    Ok(())
}

/// `|A(t)| · envelope(t)` on a sorted time grid. Each point is independent,
/// so the grid is evaluated in parallel.
pub fn offdiagonal_trajectory(
    params: &ModelParams,
    times: &[f64],
    recurrence_threshold: f64,
) -> Result<DephasingTrajectory> {
    check_sorted(times)?;
    let p0 = initial_magnet_distribution(params);
    let rows: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let a = amplitude_from_distribution(&p0, params.coupling_g, t).norm();
            (a, bath_suppression_envelope(params, t))
        })
        .collect();
    let first_recurrence = tau_recurrence(params).ok().map(|t| {
        let value =
            amplitude_from_distribution(&p0, params.coupling_g, t).norm() * bath_suppression_envelope(params, t);
        RecurrenceCheck {
            time: t,
            value,
            threshold: recurrence_threshold,
            survives: value >= recurrence_threshold,
        }
    });
    Ok(DephasingTrajectory {
        times: times.to_vec(),
        abs_amplitude: rows.iter().map(|r| r.0).collect(),
        envelope: rows.iter().map(|r| r.1).collect(),
        product: rows.iter().map(|r| r.0 * r.1).collect(),
        first_recurrence,
    })
}

/// First time at which `|A(t)|` (bath off) falls to `level`, located by
/// bisection on the shell sum. `|A|` decreases monotonically on `[0, π/(4g)]`.
pub fn amplitude_crossing_time(params: &ModelParams, level: f64) -> Result<f64> {
    if params.coupling_g <= 0.0 {
        return Err(Error::InfiniteReductionTime);
    }
    assert!(level > 0.0 && level < 1.0);
    let p0 = initial_magnet_distribution(params);
    let g = params.coupling_g;
    let abs_a = |t: f64| amplitude_from_distribution(&p0, g, t).norm();
    let mut lo = 0.0;
    let mut hi = std::f64::consts::FRAC_PI_4 / g;
    if abs_a(hi) > level {
        return Err(Error::invalid(
            "n_spins",
            "amplitude does not decay to the requested level before the first node",
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if abs_a(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn binomial_for_two_spins() {
        let p = initial_magnet_distribution(&ModelParams::reference().with_n_spins(2));
        assert_relative_eq!(p[0], 0.25, max_relative = 1e-15);
        assert_relative_eq!(p[1], 0.5, max_relative = 1e-15);
        assert_relative_eq!(p[2], 0.25, max_relative = 1e-15);
    }

    #[test]
    fn binomial_moments() {
        for n in [1usize, 5, 64, 1000] {
            let grid = MagnetizationGrid::new(n);
            let p = initial_magnet_distribution(&ModelParams::reference().with_n_spins(n));
            assert_eq!(grid.mean(&p), 0.0);
            assert_relative_eq!(grid.variance(&p), 1.0 / n as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn normalization_at_large_n() {
        let p = initial_magnet_distribution(&ModelParams::reference());
        let s = crate::numerics::compensated_sum(p.iter().copied());
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn finite_temperature_paramagnet_is_broader() {
        let params = ModelParams::reference();
        let grid = MagnetizationGrid::new(params.n_spins);
        let p = paramagnet_at_temperature(&params, 2.0).unwrap();
        // Gaussian estimate of the variance: 1/(N(1 − J/T0))
        assert_relative_eq!(grid.variance(&p), 2.0 / 1000.0, max_relative = 0.01);
        assert!(paramagnet_at_temperature(&params, 0.9).is_err());
    }

    #[test]
    fn amplitude_at_zero_and_recurrence() {
        let p = ModelParams::reference();
        let a0 = dephasing_amplitude(&p, 0.0);
        assert!((a0.summed - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(a0.closed_form, 1.0);

        let odd = p.with_n_spins(999);
        let t = PI / (2.0 * p.coupling_g);
        let a = dephasing_amplitude(&odd, t);
        assert_relative_eq!(a.closed_form, -1.0, max_relative = 1e-12);
        assert!((a.summed.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sum_equals_closed_form() {
        for n in [2usize, 10, 100, 1000] {
            let p = ModelParams::reference().with_n_spins(n);
            for &t in &[0.0, 0.3, 1.7, 12.5, 31.0, 1e3, 2.5e5] {
                let a = dephasing_amplitude(&p, t);
                assert!(a.discrepancy() <= 1e-12, "n={n} t={t} err={}", a.discrepancy());
            }
        }
    }

    #[test]
    fn decay_at_reduction_time() {
        let p = ModelParams::reference();
        let tau = tau_reduction(&p).unwrap();
        let a = dephasing_amplitude(&p, tau).summed.norm();
        assert_relative_eq!(a, (-1.0_f64).exp(), max_relative = 1e-3);
    }

    #[test]
    fn envelope_calibration() {
        let p = ModelParams::reference();
        let tau = tau_irreversibility(&p).unwrap();
        assert_eq!(bath_suppression_envelope(&p, 0.0), 1.0);
        assert_relative_eq!(
            bath_suppression_envelope(&p, tau),
            (-1.0_f64).exp(),
            max_relative = 1e-14
        );
        let mut prev = 1.0;
        for i in 1..100 {
            let e = bath_suppression_envelope(&p, 0.05 * i as f64);
            assert!(e < prev);
            prev = e;
        }
        assert_eq!(bath_suppression_envelope(&p.with_gamma(0.0), 1e6), 1.0);
    }

    #[test]
    fn recurrence_survives_without_bath_and_dies_with_it() {
        let t = [0.0, 1.0, 10.0];
        let free = offdiagonal_trajectory(&ModelParams::reference().with_gamma(0.0), &t, 1e-3).unwrap();
        let rec = free.first_recurrence.unwrap();
        assert!((rec.value - 1.0).abs() < 1e-12);
        assert!(rec.survives);

        let damped = offdiagonal_trajectory(&ModelParams::reference(), &t, 1e-3).unwrap();
        assert!(damped.first_recurrence.unwrap().value < 1e-3);
        assert!(!damped.first_recurrence.unwrap().survives);
    }

    #[test]
    fn trajectory_rejects_bad_grids() {
        let p = ModelParams::reference();
        assert!(matches!(
            offdiagonal_trajectory(&p, &[], 1e-3),
            Err(Error::EmptyTimeGrid)
        ));
        assert!(matches!(
            offdiagonal_trajectory(&p, &[0.0, 2.0, 1.0], 1e-3),
            Err(Error::UnsortedTimes { index: 2 })
        ));
    }

    #[test]
    fn off_diagonal_block_is_hermitian_pair() {
        let p = ModelParams::reference().with_n_spins(50);
        let p0 = initial_magnet_distribution(&p);
        let b = OffDiagonalBlock::evolve(&p, &p0, 3.3);
        let c = b.conjugate();
        for (x, y) in b.amplitudes.iter().zip(&c.amplitudes) {
            assert_eq!(*x, y.conj());
        }
        let direct = dephasing_amplitude(&p, 3.3).summed * bath_suppression_envelope(&p, 3.3);
        assert!((b.scalar_amplitude - direct).norm() < 1e-13);
        assert!(b.scalar_amplitude.norm() <= 1.0);
    }

    #[test]
    fn crossing_time_close_to_reduction_time() {
        let p = ModelParams::reference();
        let t = amplitude_crossing_time(&p, (-1.0_f64).exp()).unwrap();
        let exact = ((-1.0 / 1000.0_f64).exp()).acos() / (2.0 * p.coupling_g);
        assert_relative_eq!(t, exact, max_relative = 1e-10);
        assert_relative_eq!(t, tau_reduction(&p).unwrap(), max_relative = 0.01);
    }
}
