//! Registration: relaxation of the diagonal blocks `P_↑(m,t)`, `P_↓(m,t)`
//! from the metastable paramagnet into the ferromagnetic well selected by
//! the tested spin.
//!
//! Each block follows the birth-death master equation on the magnetization
//! grid with the detailed-balance rates of [`crate::bath`].

use std::f64::consts::E;

use serde::Serialize;

use crate::bath::{build_flip_rates, build_flip_rates_signed, FlipRates};
use crate::dephasing::{check_sorted, initial_magnet_distribution};
use crate::error::{Error, Result};
use crate::model::{MagnetizationGrid, ModelParams, Sector};
use crate::numerics::{compensated_sum, linear_fit, local_maxima};

/// Relative floor below which local maxima are ignored when counting peaks.
pub const PEAK_FLOOR: f64 = 1e-6;

/// Default fraction of `m_ferro` whose first crossing defines the measured
/// registration time.
pub const DEFAULT_THRESHOLD_FRACTION: f64 = 1.0 - 1.0 / E;

/// Default step-size safety factor: `dt ≤ safety / max total rate`.
pub const DEFAULT_STEP_SAFETY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Root {
    pub m: f64,
    pub stable: bool,
}

/// Roots of the mean-field self-consistency `m = tanh((J m + g s)/T)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoints {
    pub sector_sign: f64,
    /// All roots in ascending order.
    pub roots: Vec<Root>,
    /// Largest stable positive root.
    pub m_ferro_plus: Option<f64>,
    /// Smallest stable negative root.
    pub m_ferro_minus: Option<f64>,
    /// The unstable root between the wells (0 when `g = 0`), or the unique
    /// root above the Curie temperature.
    pub m_paramagnetic: f64,
}

impl FixedPoints {
    /// Stable root on the side selected by `sector`.
    pub fn ferro_for(&self, sector: Sector) -> Option<f64> {
        match sector {
            Sector::Up => self.m_ferro_plus,
            Sector::Down => self.m_ferro_minus,
        }
    }
}

fn self_consistency(params: &ModelParams, s: f64, m: f64) -> f64 {
    (params.field(m, s) / params.temperature).tanh() - m
}

/// Finds every real root on `[−1, 1]` by scanning for sign changes and
/// bisecting each bracket. `sector = None` means the uncoupled magnet.
pub fn solve_fixed_points(params: &ModelParams, sector: Option<Sector>) -> FixedPoints {
    let s = sector.map_or(0.0, Sector::sign);
    let f = |m: f64| self_consistency(params, s, m);
    // an even scan count puts m = 0 on a node, where the g = 0 root is exact
    const SCAN: usize = 4000;
    let node = |i: usize| -1.0 + 2.0 * i as f64 / SCAN as f64;

    let mut roots = Vec::new();
    let mut prev_m = node(0);
    let mut prev_f = f(prev_m);
    if prev_f == 0.0 {
        roots.push(prev_m);
    }
    for i in 1..=SCAN {
        let m = node(i);
        let fm = f(m);
        if fm == 0.0 {
            roots.push(m);
        } else if prev_f != 0.0 && prev_f.signum() != fm.signum() {
            let (mut lo, mut hi) = (prev_m, m);
            let flo = prev_f;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fmid = f(mid);
                if fmid == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fmid.signum() == flo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= f64::EPSILON * 0.5 * hi.abs().max(1e-300) {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_m = m;
        prev_f = fm;
    }

    let t = params.temperature;
    let j = params.coupling_j;
    let roots: Vec<Root> = roots
        .into_iter()
        .map(|m| {
            let x = params.field(m, s) / t;
            let sech2 = 1.0 - x.tanh().powi(2);
            Root {
                m,
                stable: j / t * sech2 - 1.0 < 0.0,
            }
        })
        .collect();

    let m_ferro_plus = roots
        .iter()
        .filter(|r| r.stable && r.m > 0.0)
        .map(|r| r.m)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))));
    let m_ferro_minus = roots
        .iter()
        .filter(|r| r.stable && r.m < 0.0)
        .map(|r| r.m)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))));
    let m_paramagnetic = roots
        .iter()
        .find(|r| !r.stable)
        .or_else(|| if roots.len() == 1 { roots.first() } else { None })
        .map_or(0.0, |r| r.m);
    // above T_C with g = 0 the single root m = 0 is stable and is not a ferromagnet
    let (m_ferro_plus, m_ferro_minus) = if roots.len() == 1 && s == 0.0 {
        (None, None)
    } else {
        (m_ferro_plus, m_ferro_minus)
    };

    FixedPoints {
        sector_sign: s,
        roots,
        m_ferro_plus,
        m_ferro_minus,
        m_paramagnetic,
    }
}

/// Probability distribution of the magnet within one tested-spin sector.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalBlock {
    /// Normalized to 1; the Born weight is factored out.
    pub probabilities: Vec<f64>,
    pub weight: f64,
}

impl DiagonalBlock {
    pub fn paramagnet(params: &ModelParams, weight: f64) -> Self {
        DiagonalBlock {
            probabilities: initial_magnet_distribution(params),
            weight,
        }
    }

    pub fn norm(&self) -> f64 {
        compensated_sum(self.probabilities.iter().copied())
    }
}

/// Precomputed coefficients of one explicit step
/// `P'_k = (1 − dt·out_k) P_k + dt·up_{k−1} P_{k−1} + dt·down_{k+1} P_{k+1}`.
///
/// Every term is non-negative whenever `dt · out_k ≤ 1`, so positivity holds
/// in floating point and the update conserves probability exactly in exact
/// arithmetic.
struct StepCoefficients {
    stay: Vec<f64>,
    up: Vec<f64>,
    down: Vec<f64>,
}

impl StepCoefficients {
    fn new(rates: &FlipRates, dt: f64) -> Result<Self> {
        let bound = dt * rates.max_total_rate();
        if !(bound <= 1.0) || !(dt > 0.0) {
            return Err(Error::StepTooLarge { dt, bound });
        }
        Ok(StepCoefficients {
            stay: rates
                .up_rates
                .iter()
                .zip(&rates.down_rates)
                .map(|(u, d)| 1.0 - dt * (u + d))
                .collect(),
            up: rates.up_rates.iter().map(|u| dt * u).collect(),
            down: rates.down_rates.iter().map(|d| dt * d).collect(),
        })
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        let n = p.len();
        if n == 1 {
            out[0] = p[0];
            return;
        }
        out[0] = self.stay[0] * p[0] + self.down[1] * p[1];
        for k in 1..n - 1 {
            // gains summed first so the update commutes with m -> -m exactly
            out[k] = self.stay[k] * p[k] + (self.up[k - 1] * p[k - 1] + self.down[k + 1] * p[k + 1]);
        }
        out[n - 1] = self.stay[n - 1] * p[n - 1] + self.up[n - 2] * p[n - 2];
    }
}

/// Advances a block by one explicit step of length `dt`.
///
/// Fails with [`Error::StepTooLarge`] if `dt × max total rate > 1`, the
/// bound beyond which the update could produce negative probabilities.
pub fn step_master_equation(block: &DiagonalBlock, rates: &FlipRates, dt: f64) -> Result<DiagonalBlock> {
    let coeffs = StepCoefficients::new(rates, dt)?;
    let mut out = vec![0.0; block.probabilities.len()];
    coeffs.apply(&block.probabilities, &mut out);
    Ok(DiagonalBlock {
        probabilities: out,
        weight: block.weight,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockSample {
    pub t: f64,
    pub mean_m: f64,
    pub var_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationSchedule {
    pub t_max: f64,
    /// Times at which `(⟨m⟩, Var m)` are recorded.
    pub sample_times: Vec<f64>,
    /// Times at which the full distribution is recorded.
    pub snapshot_times: Vec<f64>,
    /// Time at which `g` is switched off; the block then keeps relaxing
    /// under the uncoupled magnet rates.
    pub coupling_off_at: Option<f64>,
    pub threshold_fraction: f64,
    pub step_safety: f64,
}

impl RegistrationSchedule {
    /// `n_samples + 1` evenly spaced sample times on `[0, t_max]`.
    pub fn uniform(t_max: f64, n_samples: usize) -> Self {
        let n = n_samples.max(1);
        RegistrationSchedule {
            t_max,
            sample_times: (0..=n).map(|i| t_max * i as f64 / n as f64).collect(),
            snapshot_times: Vec::new(),
            coupling_off_at: None,
            threshold_fraction: DEFAULT_THRESHOLD_FRACTION,
            step_safety: DEFAULT_STEP_SAFETY,
        }
    }

    pub fn with_coupling_off_at(mut self, t: f64) -> Self {
        self.coupling_off_at = Some(t);
        self
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) {
            return Err(Error::invalid("t_max", "must be > 0"));
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return Err(Error::invalid("step_safety", "must lie in (0, 1]"));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return Err(Error::invalid("threshold_fraction", "must lie in (0, 1)"));
        }
        if !self.sample_times.is_empty() {
            check_sorted(&self.sample_times)?;
        }
        if !self.snapshot_times.is_empty() {
            check_sorted(&self.snapshot_times)?;
        }
        Ok(())
    }
}

/// Integration audit: conservation and positivity over every accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservationAudit {
    pub steps: usize,
    pub max_norm_error: f64,
    pub min_probability: f64,
}

impl Default for ConservationAudit {
    fn default() -> Self {
        ConservationAudit {
            steps: 0,
            max_norm_error: 0.0,
            min_probability: f64::INFINITY,
        }
    }
}

impl ConservationAudit {
    pub fn merge(&self, other: &Self) -> Self {
        ConservationAudit {
            steps: self.steps + other.steps,
            max_norm_error: self.max_norm_error.max(other.max_norm_error),
            min_probability: self.min_probability.min(other.min_probability),
        }
    }
}

/// Drives the explicit stepper over `[0, t_max]`, landing exactly on every
/// event time. `on_step` sees `(t, p)` after each accepted step and
/// `on_event` sees `(t, p)` at each sample/snapshot time (including 0).
fn integrate(
    params: &ModelParams,
    sector_sign: f64,
    initial: Vec<f64>,
    schedule: &RegistrationSchedule,
    mut on_step: impl FnMut(f64, f64, &[f64]),
    mut on_event: impl FnMut(f64, &[f64]),
) -> Result<(Vec<f64>, ConservationAudit)> {
    if params.gamma <= 0.0 {
        return Err(Error::invalid("gamma", "registration needs a bath (gamma > 0)"));
    }
    let mut events: Vec<f64> = schedule
        .sample_times
        .iter()
        .chain(&schedule.snapshot_times)
        .copied()
        .filter(|&t| t <= schedule.t_max)
        .chain(std::iter::once(schedule.t_max))
        .chain(schedule.coupling_off_at.filter(|&t| t < schedule.t_max))
        .collect();
    events.sort_by(f64::total_cmp);
    events.dedup();

    let coupled = build_flip_rates_signed(params, sector_sign);
    let uncoupled = params.with_coupling_g(0.0);
    let mut rates = coupled;
    let mut dt_full = schedule.step_safety / rates.max_total_rate();
    let mut full = StepCoefficients::new(&rates, dt_full)?;

    let mut p = initial;
    let mut next = vec![0.0; p.len()];
    let mut audit = ConservationAudit::default();
    let mut t = 0.0;
    let mut switched = false;

    let mut ev = events.iter().copied().peekable();
    while let Some(&e) = ev.peek() {
        if e > 0.0 {
            break;
        }
        on_event(0.0, &p);
        ev.next();
    }

    for target in ev {
        while t < target {
            if let Some(off) = schedule.coupling_off_at {
                if !switched && t >= off {
                    rates = build_flip_rates_signed(&uncoupled, 0.0);
                    dt_full = schedule.step_safety / rates.max_total_rate();
                    full = StepCoefficients::new(&rates, dt_full)?;
                    switched = true;
                }
            }
            let remaining = target - t;
            let h;
            if remaining > dt_full {
                full.apply(&p, &mut next);
                h = dt_full;
                t += h;
            } else {
                StepCoefficients::new(&rates, remaining)?.apply(&p, &mut next);
                h = remaining;
                t = target;
            }
            std::mem::swap(&mut p, &mut next);

            let mut sum = 0.0;
            let mut carry = 0.0;
            let mut min_p = f64::INFINITY;
            for &v in &p {
                let s = sum + v;
                carry += if sum.abs() >= v.abs() {
                    (sum - s) + v
                } else {
                    (v - s) + sum
                };
                sum = s;
                min_p = min_p.min(v);
            }
            audit.steps += 1;
            audit.max_norm_error = audit.max_norm_error.max((sum + carry - 1.0).abs());
            audit.min_probability = audit.min_probability.min(min_p);
            if min_p < 0.0 {
                return Err(Error::StepTooLarge {
                    dt: h,
                    bound: h * rates.max_total_rate(),
                });
            }
            on_step(t, h, &p);
        }
        on_event(t, &p);
    }
    Ok((p, audit))
}

/// Result of a registration run for one sector.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub sector: Sector,
    pub samples: Vec<BlockSample>,
    pub snapshots: Vec<Snapshot>,
    /// Stable root in the sector's well with `g` on.
    pub m_ferro: f64,
    /// Absolute threshold on `s ⟨m⟩`.
    pub threshold: f64,
    pub measured_registration_time: Option<f64>,
    pub final_block: DiagonalBlock,
    pub final_mean: f64,
    pub final_std: f64,
    /// Mean and spread of the final block conditioned on `s m > 0`.
    pub well_mean: f64,
    pub well_std: f64,
    pub final_peaks: usize,
    /// Unimodal, on the sector's side, and within `5/√N` of the stable root
    /// of the final coupling.
    pub in_correct_well: bool,
    /// Mass on the wrong side (`s m < 0`).
    pub wrong_well_mass: f64,
    pub audit: ConservationAudit,
}

impl Registration {
    pub fn registered(&self) -> bool {
        self.measured_registration_time.is_some()
    }

    pub fn require_registered(&self, t_max: f64) -> Result<f64> {
        self.measured_registration_time.ok_or(Error::NonRegistration {
            sector: self.sector,
            t_max,
        })
    }
}

/// Evolves the paramagnet under the sector's rates with `g` on from `t = 0`.
pub fn register(params: &ModelParams, sector: Sector, schedule: &RegistrationSchedule) -> Result<Registration> {
    register_from(params, sector, DiagonalBlock::paramagnet(params, 1.0), schedule)
}

pub fn register_from(
    params: &ModelParams,
    sector: Sector,
    initial: DiagonalBlock,
    schedule: &RegistrationSchedule,
) -> Result<Registration> {
    params.validate()?;
    schedule.validate()?;
    if initial.probabilities.len() != params.n_spins + 1 {
        return Err(Error::invalid("initial", "block length must be n_spins + 1"));
    }
    let s = sector.sign();
    let grid = MagnetizationGrid::new(params.n_spins);
    let no_phase = || Error::NoBrokenSymmetry {
        temperature: params.temperature,
        coupling_j: params.coupling_j,
    };
    if params.temperature >= params.coupling_j {
        return Err(no_phase());
    }
    let m_ferro = solve_fixed_points(params, Some(sector))
        .ferro_for(sector)
        .ok_or_else(no_phase)?;
    let threshold = schedule.threshold_fraction * m_ferro.abs();

    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut crossing = None;
    let mut prev = (0.0, s * grid.mean(&initial.probabilities));
    if prev.1 >= threshold {
        crossing = Some(0.0);
    }

    let (final_p, audit) = integrate(
        params,
        s,
        initial.probabilities,
        schedule,
        |t, _h, p| {
            if crossing.is_none() {
                let v = s * grid.mean(p);
                if v >= threshold {
                    let (t0, v0) = prev;
                    crossing = Some(t0 + (threshold - v0) * (t - t0) / (v - v0));
                }
                prev = (t, v);
            }
        },
        |t, p| {
            if schedule.sample_times.contains(&t) {
                samples.push(BlockSample {
                    t,
                    mean_m: grid.mean(p),
                    var_m: grid.variance(p),
                });
            }
            if schedule.snapshot_times.contains(&t) {
                snapshots.push(Snapshot {
                    t,
                    probabilities: p.to_vec(),
                });
            }
        },
    )?;

    let final_params = if schedule.coupling_off_at.is_some_and(|off| off < schedule.t_max) {
        params.with_coupling_g(0.0)
    } else {
        *params
    };
    let target = solve_fixed_points(&final_params, Some(sector))
        .ferro_for(sector)
        .ok_or_else(no_phase)?;
    let final_mean = grid.mean(&final_p);
    let final_std = grid.variance(&final_p).sqrt();
    let (well_mean, well_std) = conditional_moments(&grid, &final_p, s);
    let peaks = local_maxima(&final_p, PEAK_FLOOR);
    let n = params.n_spins as f64;
    let in_correct_well = peaks.len() == 1 && s * final_mean > 0.0 && (final_mean - target).abs() <= 5.0 / n.sqrt();
    let wrong_well_mass = grid.mass_where(&final_p, |m| s * m < 0.0);

    Ok(Registration {
        sector,
        samples,
        snapshots,
        m_ferro,
        threshold,
        measured_registration_time: crossing,
        final_block: DiagonalBlock {
            probabilities: final_p,
            weight: initial.weight,
        },
        final_mean,
        final_std,
        well_mean,
        well_std,
        final_peaks: peaks.len(),
        in_correct_well,
        wrong_well_mass,
        audit,
    })
}

/// Mean and standard deviation of `p` restricted to `s m > 0`.
pub fn conditional_moments(grid: &MagnetizationGrid, p: &[f64], s: f64) -> (f64, f64) {
    let masked: Vec<f64> = grid
        .values()
        .iter()
        .zip(p)
        .map(|(&m, &x)| if s * m > 0.0 { x } else { 0.0 })
        .collect();
    let z = compensated_sum(masked.iter().copied());
    if z <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let q: Vec<f64> = masked.iter().map(|x| x / z).collect();
    (grid.mean(&q), grid.variance(&q).sqrt())
}

/// Least-squares growth rate of `ln(s⟨m⟩ + shift)` over samples taken
/// before `s⟨m⟩` first exceeds `hi`, restricted to `lo ≤ s⟨m⟩`.
///
/// With `shift = g/(J − T)` this is the exponent of the linearized
/// dynamics `d⟨m⟩/dt = γ((J − T)⟨m⟩ + g s)`.
pub fn fit_growth_rate(samples: &[BlockSample], sector: Sector, shift: f64, lo: f64, hi: f64) -> Option<f64> {
    let s = sector.sign();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for sample in samples {
        let v = s * sample.mean_m;
        if v > hi {
            break;
        }
        if v >= lo && v + shift > 0.0 {
            xs.push(sample.t);
            ys.push((v + shift).ln());
        }
    }
    linear_fit(&xs, &ys).map(|(slope, _)| slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LifetimeSample {
    pub t: f64,
    pub mean_m: f64,
    pub var_m: f64,
    pub peaks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamagnetProbe {
    pub samples: Vec<LifetimeSample>,
    /// First sample time at which the distribution has two peaks.
    pub bimodal_onset: Option<f64>,
    pub max_abs_mean: f64,
    pub audit: ConservationAudit,
}

impl ParamagnetProbe {
    /// Peak count at the sample closest to `t`.
    pub fn peaks_near(&self, t: f64) -> Option<usize> {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .map(|s| s.peaks)
    }
}

/// Follows the uncoupled (`g = 0`) paramagnet as it destabilizes: variance
/// growth, the onset of bimodality, and the symmetry `⟨m⟩ = 0`.
pub fn paramagnet_lifetime_probe(params: &ModelParams, t_max: f64, sample_times: &[f64]) -> Result<ParamagnetProbe> {
    params.validate()?;
    if params.coupling_g != 0.0 {
        return Err(Error::invalid("coupling_g", "the lifetime probe runs with g = 0"));
    }
    let grid = MagnetizationGrid::new(params.n_spins);
    let schedule = RegistrationSchedule {
        t_max,
        sample_times: sample_times.to_vec(),
        snapshot_times: Vec::new(),
        coupling_off_at: None,
        threshold_fraction: DEFAULT_THRESHOLD_FRACTION,
        step_safety: DEFAULT_STEP_SAFETY,
    };
    schedule.validate()?;
    let mut samples = Vec::new();
    let mut max_abs_mean: f64 = 0.0;
    let (_, audit) = integrate(
        params,
        0.0,
        initial_magnet_distribution(params),
        &schedule,
        |_, _, p| max_abs_mean = max_abs_mean.max(grid.mean(p).abs()),
        |t, p| {
            if sample_times.contains(&t) {
                samples.push(LifetimeSample {
                    t,
                    mean_m: grid.mean(p),
                    var_m: grid.variance(p),
                    peaks: local_maxima(p, PEAK_FLOOR).len(),
                });
            }
        },
    )?;
    let bimodal_onset = samples.iter().find(|s| s.peaks >= 2).map(|s| s.t);
    Ok(ParamagnetProbe {
        samples,
        bimodal_onset,
        max_abs_mean,
        audit,
    })
}

/// Sector rates as used by [`register`]; exposed for inspection.
pub fn sector_rates(params: &ModelParams, sector: Sector) -> FlipRates {
    build_flip_rates(params, sector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::sector_gibbs;
    use approx::assert_relative_eq;

    /// Plain fixed-point iteration from m = 1; converges to the largest
    /// stable root for T < J.
    fn iterate_root(j: f64, t: f64, g: f64) -> f64 {
        let mut m = 1.0_f64;
        for _ in 0..100_000 {
            m = ((j * m + g) / t).tanh();
        }
        m
    }

    #[test]
    fn zero_field_roots_below_curie() {
        let p = ModelParams::reference().with_coupling_g(0.0);
        let fp = solve_fixed_points(&p, None);
        assert_eq!(fp.roots.len(), 3);
        let mf = fp.m_ferro_plus.unwrap();
        assert_relative_eq!(mf, iterate_root(1.0, 0.8, 0.0), max_relative = 1e-12);
        assert!((mf - 0.710).abs() < 1e-3);
        assert_relative_eq!(fp.m_ferro_minus.unwrap(), -mf, max_relative = 1e-14);
        assert_eq!(fp.m_paramagnetic, 0.0);
        assert!(!fp.roots[1].stable);
        for r in &fp.roots {
            assert!((r.m - (r.m / 0.8).tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_root_above_curie() {
        for t in [1.0, 1.5] {
            let p = ModelParams::reference().with_coupling_g(0.0).with_temperature(t);
            let fp = solve_fixed_points(&p, None);
            assert_eq!(fp.roots.len(), 1);
            assert!(fp.roots[0].m.abs() < 1e-12);
            assert!(fp.m_ferro_plus.is_none());
        }
    }

    #[test]
    fn field_shifts_roots() {
        let p = ModelParams::reference();
        let zero = solve_fixed_points(&p.with_coupling_g(0.0), None);
        let up = solve_fixed_points(&p, Some(Sector::Up));
        assert!(up.m_ferro_plus.unwrap() > zero.m_ferro_plus.unwrap());
        assert_relative_eq!(
            up.m_ferro_plus.unwrap(),
            iterate_root(1.0, 0.8, 0.05),
            max_relative = 1e-12
        );
        // the unstable root moves to the opposite side, away from the favored well
        assert!(up.m_paramagnetic < 0.0);
        for r in &up.roots {
            assert!((r.m - ((r.m + 0.05) / 0.8).tanh()).abs() < 1e-12);
        }
        let down = solve_fixed_points(&p, Some(Sector::Down));
        assert_relative_eq!(
            down.m_ferro_minus.unwrap(),
            -up.m_ferro_plus.unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gibbs_input_is_stationary_per_step() {
        let p = ModelParams::reference();
        let grid = MagnetizationGrid::new(p.n_spins);
        let gibbs = sector_gibbs(&p, &grid, 1.0);
        let rates = build_flip_rates(&p, Sector::Up);
        let dt = 0.1 / rates.max_total_rate();
        let block = DiagonalBlock {
            probabilities: gibbs.clone(),
            weight: 1.0,
        };
        let out = step_master_equation(&block, &rates, dt).unwrap();
        for (a, b) in out.probabilities.iter().zip(&gibbs) {
            assert!((a - b).abs() <= 1e-10 * b.max(1e-300) || (a - b).abs() < 1e-300);
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let p = ModelParams::reference().with_n_spins(100);
        let rates = build_flip_rates(&p, Sector::Up);
        let dt = 1.5 / rates.max_total_rate();
        let block = DiagonalBlock::paramagnet(&p, 1.0);
        assert!(matches!(
            step_master_equation(&block, &rates, dt),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn point_mass_at_top_stays_put() {
        let p = ModelParams::reference().with_n_spins(200);
        let rates = build_flip_rates(&p, Sector::Up);
        let mut probabilities = vec![0.0; 201];
        probabilities[200] = 1.0;
        let block = DiagonalBlock {
            probabilities,
            weight: 1.0,
        };
        let dt = 0.1 / rates.max_total_rate();
        let out = step_master_equation(&block, &rates, dt).unwrap();
        // single-step flux audit: only the one-flip loss to m = 1 − 2/N
        let loss = dt * rates.down_rates[200];
        assert_relative_eq!(out.probabilities[199], loss, max_relative = 1e-14);
        assert_relative_eq!(out.probabilities[200], 1.0 - loss, max_relative = 1e-14);
        assert!(out.probabilities[..199].iter().all(|&x| x == 0.0));

        // and over a long run the mass stays in the upper well near m_F
        let reg = register_from(&p, Sector::Up, block, &RegistrationSchedule::uniform(2e4, 4)).unwrap();
        let grid = MagnetizationGrid::new(200);
        let upper = grid.mass_where(&reg.final_block.probabilities, |m| m > 0.2);
        assert!(
            upper > 1.0 - 1e-5,
            "upper mass {upper}, mean {}, steps {}",
            reg.final_mean,
            reg.audit.steps
        );
        assert!(reg.in_correct_well);
    }

    #[test]
    fn long_run_conservation() {
        let p = ModelParams::reference().with_n_spins(40);
        let rates = build_flip_rates(&p, Sector::Up);
        let dt = 0.1 / rates.max_total_rate();
        let mut block = DiagonalBlock::paramagnet(&p, 1.0);
        let coeffs = StepCoefficients::new(&rates, dt).unwrap();
        let mut next = vec![0.0; 41];
        for _ in 0..1_000_000 {
            coeffs.apply(&block.probabilities, &mut next);
            std::mem::swap(&mut block.probabilities, &mut next);
        }
        assert!((block.norm() - 1.0).abs() <= 1e-9);
        assert!(block.probabilities.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn zero_coupling_keeps_mean_exactly_zero() {
        let p = ModelParams::reference().with_n_spins(300).with_coupling_g(0.0);
        let reg = register(&p, Sector::Up, &RegistrationSchedule::uniform(5000.0, 50)).unwrap();
        for s in &reg.samples {
            assert_eq!(s.mean_m, 0.0);
        }
        assert!(!reg.registered());
        assert!(reg.require_registered(5000.0).is_err());
    }

    #[test]
    fn sectors_are_mirror_images() {
        let p = ModelParams::reference().with_n_spins(200);
        let sched = RegistrationSchedule::uniform(8000.0, 40);
        let up = register(&p, Sector::Up, &sched).unwrap();
        let down = register(&p, Sector::Down, &sched).unwrap();
        for (a, b) in up.samples.iter().zip(&down.samples) {
            assert!((a.mean_m + b.mean_m).abs() <= 1e-10);
            assert!((a.var_m - b.var_m).abs() <= 1e-10);
        }
        let pu = &up.final_block.probabilities;
        let pd = &down.final_block.probabilities;
        for k in 0..=200 {
            assert!((pu[k] - pd[200 - k]).abs() <= 1e-10);
        }
        assert_relative_eq!(
            up.measured_registration_time.unwrap(),
            down.measured_registration_time.unwrap(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn growth_fit_recovers_pure_exponential() {
        let rate = 2e-4;
        let shift = 0.25;
        let samples: Vec<BlockSample> = (0..100)
            .map(|i| {
                let t = 50.0 * i as f64;
                BlockSample {
                    t,
                    mean_m: shift * ((rate * t).exp() - 1.0),
                    var_m: 0.0,
                }
            })
            .collect();
        let fit = fit_growth_rate(&samples, Sector::Up, shift, 0.0, 0.1).unwrap();
        assert_relative_eq!(fit, rate, max_relative = 1e-10);
    }

    #[test]
    fn schedule_validation() {
        let p = ModelParams::reference().with_n_spins(20);
        let mut sched = RegistrationSchedule::uniform(10.0, 5);
        sched.sample_times = vec![0.0, 5.0, 2.0];
        assert!(register(&p, Sector::Up, &sched).is_err());
        let hot = p.with_temperature(1.2);
        assert!(matches!(
            register(&hot, Sector::Up, &RegistrationSchedule::uniform(10.0, 5)),
            Err(Error::NoBrokenSymmetry { .. })
        ));
    }
}
