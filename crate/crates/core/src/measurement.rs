//! Full measurement: tested spin plus apparatus, from preparation to
//! readout.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dephasing::{bath_suppression_envelope, initial_magnet_distribution, OffDiagonalBlock};
use crate::error::{Error, Result};
use crate::model::{
    tau_irreversibility, tau_reduction, validate_regime, MagnetizationGrid, ModelParams, RegimeReport, Sector,
    Timescales,
};
use crate::numerics::{compensated_sum, local_maxima};
use crate::registration::{
    conditional_moments, register_from, ConservationAudit, DiagonalBlock, Registration, RegistrationSchedule,
    DEFAULT_STEP_SAFETY, DEFAULT_THRESHOLD_FRACTION, PEAK_FLOOR,
};

const STATE_TOL: f64 = 1e-12;

/// Spin density matrix in the `{↑, ↓}` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinMatrix {
    r_uu: f64,
    r_dd: f64,
    r_ud: Complex64,
}

impl SpinMatrix {
    pub fn from_elements(r_uu: f64, r_dd: f64, r_ud: Complex64) -> Self {
        SpinMatrix { r_uu, r_dd, r_ud }
    }

    pub fn diagonal(&self) -> (f64, f64) {
        (self.r_uu, self.r_dd)
    }

    pub fn off_diagonal(&self) -> Complex64 {
        self.r_ud
    }

    pub fn trace(&self) -> f64 {
        self.r_uu + self.r_dd
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = 0.5 * (self.r_uu + self.r_dd);
        let half = 0.5 * (self.r_uu - self.r_dd);
        let r = (half * half + self.r_ud.norm_sqr()).sqrt();
        (mid + r, mid - r)
    }

    /// Von Neumann entropy in nats.
    pub fn entropy(&self) -> f64 {
        let (a, b) = self.eigenvalues();
        xlnx(a) + xlnx(b)
    }

    pub fn expect_sx(&self) -> f64 {
        2.0 * self.r_ud.re
    }

    pub fn expect_sy(&self) -> f64 {
        -2.0 * self.r_ud.im
    }

    pub fn expect_sz(&self) -> f64 {
        self.r_uu - self.r_dd
    }
}

fn xlnx(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// Validated initial state of the tested spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSpinState {
    matrix: SpinMatrix,
}

impl InitialSpinState {
    /// `r_↓↓ = 1 − r_↑↑`. Rejects states that are not positive within 1e-12.
    pub fn new(r_uu: f64, r_ud: Complex64) -> Result<Self> {
        Self::from_elements(r_uu, 1.0 - r_uu, r_ud)
    }

    pub fn from_elements(r_uu: f64, r_dd: f64, r_ud: Complex64) -> Result<Self> {
        if !(r_uu.is_finite() && r_dd.is_finite() && r_ud.re.is_finite() && r_ud.im.is_finite()) {
            return Err(Error::InvalidSpinState("non-finite element".into()));
        }
        if (r_uu + r_dd - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidSpinState(format!("trace {} != 1", r_uu + r_dd)));
        }
        if r_uu < -STATE_TOL || r_dd < -STATE_TOL {
            return Err(Error::InvalidSpinState("negative population".into()));
        }
        if r_ud.norm_sqr() > r_uu * r_dd + STATE_TOL {
            return Err(Error::InvalidSpinState(format!(
                "|r_ud|^2 = {} exceeds r_uu r_dd = {}",
                r_ud.norm_sqr(),
                r_uu * r_dd
            )));
        }
        Ok(InitialSpinState {
            matrix: SpinMatrix::from_elements(r_uu.max(0.0), r_dd.max(0.0), r_ud),
        })
    }

    /// `a|↑⟩ + b|↓⟩`, normalized here.
    pub fn pure(a: Complex64, b: Complex64) -> Result<Self> {
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidSpinState("zero amplitude vector".into()));
        }
        let (a, b) = (a / norm, b / norm);
        Self::from_elements(a.norm_sqr(), b.norm_sqr(), a * b.conj())
    }

    pub fn up() -> Self {
        InitialSpinState {
            matrix: SpinMatrix::from_elements(1.0, 0.0, Complex64::new(0.0, 0.0)),
        }
    }

    pub fn down() -> Self {
        InitialSpinState {
            matrix: SpinMatrix::from_elements(0.0, 1.0, Complex64::new(0.0, 0.0)),
        }
    }

    pub fn maximally_mixed() -> Self {
        InitialSpinState {
            matrix: SpinMatrix::from_elements(0.5, 0.5, Complex64::new(0.0, 0.0)),
        }
    }

    pub fn r_uu(&self) -> f64 {
        self.matrix.r_uu
    }

    pub fn r_dd(&self) -> f64 {
        self.matrix.r_dd
    }

    pub fn r_ud(&self) -> Complex64 {
        self.matrix.r_ud
    }

    pub fn matrix(&self) -> SpinMatrix {
        self.matrix
    }

    pub fn weight(&self, sector: Sector) -> f64 {
        match sector {
            Sector::Up => self.matrix.r_uu,
            Sector::Down => self.matrix.r_dd,
        }
    }
}

/// Joint state of spin and magnet. Diagonal blocks carry normalized
/// distributions and the spin populations as weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundState {
    pub block_uu: DiagonalBlock,
    pub block_dd: DiagonalBlock,
    /// Initial coherence `r_↑↓(0)`.
    pub coherence: Complex64,
    /// Normalized to `r_↑↓(0) = 1`.
    pub block_ud: OffDiagonalBlock,
    pub time: f64,
}

impl CompoundState {
    pub fn initial(spin: &InitialSpinState, params: &ModelParams) -> Self {
        let p0 = initial_magnet_distribution(params);
        CompoundState {
            block_uu: DiagonalBlock {
                probabilities: p0.clone(),
                weight: spin.r_uu(),
            },
            block_dd: DiagonalBlock {
                probabilities: p0.clone(),
                weight: spin.r_dd(),
            },
            coherence: spin.r_ud(),
            block_ud: OffDiagonalBlock::initial(&p0),
            time: 0.0,
        }
    }

    pub fn trace(&self) -> f64 {
        self.block_uu.weight * self.block_uu.norm() + self.block_dd.weight * self.block_dd.norm()
    }

    pub fn block(&self, sector: Sector) -> &DiagonalBlock {
        match sector {
            Sector::Up => &self.block_uu,
            Sector::Down => &self.block_dd,
        }
    }

    /// The `↓↑` block, the Hermitian conjugate of `block_ud`.
    pub fn block_du(&self) -> OffDiagonalBlock {
        self.block_ud.conjugate()
    }

    /// `|tr_M R_↑↓|`.
    pub fn offdiag_residual(&self) -> f64 {
        (self.coherence * self.block_ud.scalar_amplitude).norm()
    }

    /// Spin marginal `tr_A D`.
    pub fn spin_marginal(&self) -> SpinMatrix {
        SpinMatrix::from_elements(
            self.block_uu.weight * self.block_uu.norm(),
            self.block_dd.weight * self.block_dd.norm(),
            self.coherence * self.block_ud.scalar_amplitude,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSchedule {
    pub t_final: f64,
    pub n_samples: usize,
    pub threshold_fraction: f64,
    pub step_safety: f64,
}

impl MeasurementSchedule {
    pub fn new(t_final: f64, n_samples: usize) -> Self {
        MeasurementSchedule {
            t_final,
            n_samples,
            threshold_fraction: DEFAULT_THRESHOLD_FRACTION,
            step_safety: DEFAULT_STEP_SAFETY,
        }
    }

    /// Three registration times, from the closed-form estimate.
    pub fn for_params(params: &ModelParams) -> Result<Self> {
        let ts = Timescales::compute(params)?;
        Ok(Self::new(3.0 * ts.tau_reg, 600))
    }

    fn registration_schedule(&self) -> RegistrationSchedule {
        let mut r = RegistrationSchedule::uniform(self.t_final, self.n_samples);
        r.threshold_fraction = self.threshold_fraction;
        r.step_safety = self.step_safety;
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOptions {
    pub margin: f64,
    pub force: bool,
    /// Largest `|tr R_↑↓| / |r_↑↓(0)|` for which the run counts as complete.
    pub residual_threshold: f64,
}

impl Default for MeasurementOptions {
    fn default() -> Self {
        MeasurementOptions {
            margin: 10.0,
            force: false,
            residual_threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSummary {
    pub location: f64,
    pub spread: f64,
    pub peaks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSample {
    pub t: f64,
    pub mean_up: f64,
    pub var_up: f64,
    pub mean_down: f64,
    pub var_down: f64,
    pub abs_offdiag: f64,
    pub trace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub samples: Vec<RunSample>,
    pub registration_time_up: Option<f64>,
    pub registration_time_down: Option<f64>,
    pub audit: ConservationAudit,
    pub regime: RegimeReport,
}

impl RunRecord {
    pub const CSV_HEADER: &'static str = "t,mean_m_up,var_m_up,mean_m_down,var_m_down,abs_offdiag,trace";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for s in &self.samples {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                s.t, s.mean_up, s.var_up, s.mean_down, s.var_down, s.abs_offdiag, s.trace
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBalance {
    pub spin_initial: f64,
    pub apparatus_initial: f64,
    /// `S_S[r(0)] + S_A[R(0)]`.
    pub initial: f64,
    /// Mixing entropy of the pointer weights.
    pub spin_final: f64,
    /// `Σ p_i S_M[R_i]`, magnet only.
    pub magnet_final: f64,
    /// `Σ p_i ΔS_B,i`, heat released into the bath over `T`.
    pub bath_final: f64,
    pub apparatus_final: f64,
    /// `S_S + Σ p_i S_A[R_i]`.
    pub final_total: f64,
    /// Same with each `R_i` replaced by the Gibbs state restricted to its well.
    pub equilibrium_final: f64,
    /// `|tr R_↑↓|` at evaluation; the final decomposition ignores it.
    pub offdiag_residual: f64,
}

impl EntropyBalance {
    pub fn gap(&self) -> f64 {
        self.final_total - self.initial
    }

    pub fn equilibrium_gap(&self) -> f64 {
        self.equilibrium_final - self.initial
    }

    /// Whether the block-diagonal decomposition holds to `tol`.
    pub fn decomposition_exact(&self, tol: f64) -> bool {
        self.offdiag_residual <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalStateReport {
    /// Pointer probabilities `(p_↑, p_↓)` from the sign of `m`.
    pub pointer_weights: (f64, f64),
    /// Traces of the two diagonal blocks.
    pub block_weights: (f64, f64),
    pub peak_up: PeakSummary,
    pub peak_down: PeakSummary,
    pub offdiag_residual: f64,
    /// Absolute bound on `offdiag_residual`, `threshold·|r_↑↓(0)|`.
    pub residual_threshold: f64,
    pub post_spin_state: SpinMatrix,
    pub entropy: EntropyBalance,
    /// Every weighted block ended unimodal in its own well.
    pub correlation_check: bool,
    pub wrong_well_mass: (f64, f64),
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRun {
    pub state: CompoundState,
    pub report: FinalStateReport,
    pub record: RunRecord,
    pub registration_up: Registration,
    pub registration_down: Registration,
}

/// Marginal pointer distribution `P(m) = r_↑↑ P_↑(m) + r_↓↓ P_↓(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerDistribution {
    pub m: Vec<f64>,
    pub p: Vec<f64>,
    pub offdiag_residual: f64,
}

impl PointerDistribution {
    /// `(P(m > 0), P(m < 0))` with the mass at `m = 0` split evenly.
    pub fn sign_weights(&self) -> (f64, f64) {
        sign_weights(&self.m, &self.p)
    }
}

fn sign_weights(m: &[f64], p: &[f64]) -> (f64, f64) {
    let up = compensated_sum(m.iter().zip(p).map(|(&m, &p)| {
        if m > 0.0 {
            p
        } else if m == 0.0 {
            0.5 * p
        } else {
            0.0
        }
    }));
    let down = compensated_sum(m.iter().zip(p).map(|(&m, &p)| {
        if m < 0.0 {
            p
        } else if m == 0.0 {
            0.5 * p
        } else {
            0.0
        }
    }));
    (up, down)
}

pub fn pointer_distribution(state: &CompoundState) -> PointerDistribution {
    let n = state.block_uu.probabilities.len() - 1;
    let grid = MagnetizationGrid::new(n);
    let (wu, wd) = (state.block_uu.weight, state.block_dd.weight);
    let p = state
        .block_uu
        .probabilities
        .iter()
        .zip(&state.block_dd.probabilities)
        .map(|(a, b)| wu * a + wd * b)
        .collect();
    PointerDistribution {
        m: grid.values().to_vec(),
        p,
        offdiag_residual: state.offdiag_residual(),
    }
}

/// Reduced spin state after the measurement, read off the compound state.
pub fn post_measurement_spin_state(state: &CompoundState) -> SpinMatrix {
    state.spin_marginal()
}

fn magnet_entropy(grid: &MagnetizationGrid, p: &[f64]) -> f64 {
    compensated_sum(
        p.iter()
            .zip(grid.log_degeneracy())
            .map(|(&p, &ld)| if p > 0.0 { p * (ld - p.ln()) } else { 0.0 }),
    )
}

fn magnet_energy(params: &ModelParams, grid: &MagnetizationGrid, p: &[f64]) -> f64 {
    -0.5 * params.n_spins as f64 * params.coupling_j * grid.second_moment(p)
}

/// Entropy bookkeeping of the spin plus apparatus, with the initial bath
/// entropy taken as the zero.
pub fn entropy_balance(spin: &InitialSpinState, params: &ModelParams, state: &CompoundState) -> EntropyBalance {
    let grid = MagnetizationGrid::new(params.n_spins);
    let p0 = initial_magnet_distribution(params);
    let e0 = magnet_energy(params, &grid, &p0);
    let apparatus_initial = magnet_entropy(&grid, &p0);
    let spin_initial = spin.matrix().entropy();

    let zero = params.with_coupling_g(0.0);
    let gibbs = crate::bath::sector_gibbs(&zero, &grid, 0.0);

    let mut spin_final = 0.0;
    let mut magnet_final = 0.0;
    let mut bath_final = 0.0;
    let mut equilibrium_apparatus = 0.0;
    for sector in [Sector::Up, Sector::Down] {
        let block = state.block(sector);
        let w = block.weight * block.norm();
        if w <= 0.0 {
            continue;
        }
        spin_final += xlnx(w);
        let p: Vec<f64> = block.probabilities.iter().map(|x| x / block.norm()).collect();
        magnet_final += w * magnet_entropy(&grid, &p);
        bath_final += w * (e0 - magnet_energy(params, &grid, &p)) / params.temperature;

        let s = sector.sign();
        let mut well: Vec<f64> = gibbs
            .iter()
            .zip(grid.values())
            .map(|(&g, &m)| if s * m > 0.0 { g } else { 0.0 })
            .collect();
        let z = compensated_sum(well.iter().copied());
        well.iter_mut().for_each(|x| *x /= z);
        equilibrium_apparatus +=
            w * (magnet_entropy(&grid, &well) + (e0 - magnet_energy(params, &grid, &well)) / params.temperature);
    }
    let apparatus_final = magnet_final + bath_final;
    EntropyBalance {
        spin_initial,
        apparatus_initial,
        initial: spin_initial + apparatus_initial,
        spin_final,
        magnet_final,
        bath_final,
        apparatus_final,
        final_total: spin_final + apparatus_final,
        equilibrium_final: spin_final + equilibrium_apparatus,
        offdiag_residual: state.offdiag_residual(),
    }
}

/// Location and spread of the block's own well; the peak count covers the
/// whole block.
fn peak_summary(grid: &MagnetizationGrid, p: &[f64], sector: Sector) -> PeakSummary {
    let (location, spread) = conditional_moments(grid, p, sector.sign());
    PeakSummary {
        location,
        spread,
        peaks: local_maxima(p, PEAK_FLOOR).len(),
    }
}

/// Runs both diagonal blocks through registration and the off-diagonal
/// block through dephasing, then summarizes the final state.
pub fn run_measurement(
    spin: &InitialSpinState,
    params: &ModelParams,
    schedule: &MeasurementSchedule,
    options: &MeasurementOptions,
) -> Result<MeasurementRun> {
    params.validate()?;
    let regime = validate_regime(params, options.margin);
    if !regime.overall && !options.force {
        return Err(Error::RegimeViolation {
            failed: regime.failed().map(|c| c.key).collect::<Vec<_>>().join(", "),
        });
    }
    let initial = CompoundState::initial(spin, params);
    let reg_schedule = schedule.registration_schedule();
    let (up, down) = rayon::join(
        || register_from(params, Sector::Up, initial.block_uu.clone(), &reg_schedule),
        || register_from(params, Sector::Down, initial.block_dd.clone(), &reg_schedule),
    );
    let (up, down) = (up?, down?);
    for reg in [&up, &down] {
        if spin.weight(reg.sector) > 0.0 {
            reg.require_registered(schedule.t_final)?;
        }
    }

    let p0 = &initial.block_uu.probabilities;
    let samples: Vec<RunSample> = up
        .samples
        .iter()
        .zip(&down.samples)
        .map(|(a, b)| {
            let od = OffDiagonalBlock::evolve(params, p0, a.t);
            RunSample {
                t: a.t,
                mean_up: a.mean_m,
                var_up: a.var_m,
                mean_down: b.mean_m,
                var_down: b.var_m,
                abs_offdiag: (spin.r_ud() * od.scalar_amplitude).norm(),
                trace: spin.r_uu() + spin.r_dd(),
            }
        })
        .collect();

    let state = CompoundState {
        block_uu: up.final_block.clone(),
        block_dd: down.final_block.clone(),
        coherence: spin.r_ud(),
        block_ud: OffDiagonalBlock::evolve(params, p0, schedule.t_final),
        time: schedule.t_final,
    };
    let grid = MagnetizationGrid::new(params.n_spins);
    let pointer = pointer_distribution(&state);
    let residual = state.offdiag_residual();
    let residual_bound = options.residual_threshold * spin.r_ud().norm();
    let correlation_check = [&up, &down]
        .iter()
        .all(|r| spin.weight(r.sector) == 0.0 || r.in_correct_well);
    let entropy = entropy_balance(spin, params, &state);
    let report = FinalStateReport {
        pointer_weights: pointer.sign_weights(),
        block_weights: (
            state.block_uu.weight * state.block_uu.norm(),
            state.block_dd.weight * state.block_dd.norm(),
        ),
        peak_up: peak_summary(&grid, &up.final_block.probabilities, Sector::Up),
        peak_down: peak_summary(&grid, &down.final_block.probabilities, Sector::Down),
        offdiag_residual: residual,
        residual_threshold: residual_bound,
        post_spin_state: post_measurement_spin_state(&state),
        entropy,
        correlation_check,
        wrong_well_mass: (up.wrong_well_mass, down.wrong_well_mass),
        complete: correlation_check && residual <= residual_bound,
    };
    let record = RunRecord {
        samples,
        registration_time_up: up.measured_registration_time,
        registration_time_down: down.measured_registration_time,
        audit: up.audit.merge(&down.audit),
        regime,
    };
    Ok(MeasurementRun {
        state,
        report,
        record,
        registration_up: up,
        registration_down: down,
    })
}

/// Individual outcomes drawn from the pointer distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutSample {
    pub seed: u64,
    /// `+1` for `m > 0`, `−1` for `m < 0`.
    pub outcomes: Vec<i8>,
}

impl ReadoutSample {
    pub fn frequencies(&self) -> (f64, f64) {
        let n = self.outcomes.len().max(1) as f64;
        let up = self.outcomes.iter().filter(|&&o| o > 0).count() as f64;
        (up / n, (self.outcomes.len() as f64 - up) / n)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,outcome")?;
        for (i, o) in self.outcomes.iter().enumerate() {
            writeln!(w, "{i},{o}")?;
        }
        Ok(())
    }
}

/// Draws `n` readings. Draws landing on `m = 0` are redrawn, which is the
/// same as sampling the distribution conditioned on `m ≠ 0`.
pub fn sample_readout(dist: &PointerDistribution, n: usize, seed: u64, max_residual: f64) -> Result<ReadoutSample> {
    if dist.offdiag_residual > max_residual {
        return Err(Error::MeasurementIncomplete {
            residual: dist.offdiag_residual,
            threshold: max_residual,
        });
    }
    let mut cumulative = Vec::with_capacity(dist.p.len());
    let mut acc = 0.0;
    for (&m, &p) in dist.m.iter().zip(&dist.p) {
        if m != 0.0 {
            acc += p.max(0.0);
        }
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::invalid("pointer distribution", "no mass away from m = 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcomes = (0..n)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            let k = cumulative.partition_point(|&c| c <= u).min(dist.m.len() - 1);
            if dist.m[k] > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    Ok(ReadoutSample { seed, outcomes })
}

/// Compound state after reduction only, with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionStop {
    pub state: CompoundState,
    pub spin_state: SpinMatrix,
    /// `|A(t)|` without the bath.
    pub dephasing_factor: f64,
    pub envelope: f64,
    pub apparatus_mean: f64,
    pub apparatus_var: f64,
    pub apparatus_unimodal: bool,
    /// `S_S(t) − S_S(0)`.
    pub spin_entropy_gap: f64,
    pub window: (f64, f64),
}

/// State at `t_stop` with population transfer neglected, so diagonal
/// blocks keep the initial distribution. No window check.
pub fn reduction_snapshot(
    spin: &InitialSpinState,
    params: &ModelParams,
    t_stop: f64,
    margin: f64,
) -> Result<ReductionStop> {
    params.validate()?;
    let lower = margin * tau_reduction(params)?;
    let upper = tau_irreversibility(params).map_or(f64::INFINITY, |t| t / margin);
    let mut state = CompoundState::initial(spin, params);
    let p0 = state.block_uu.probabilities.clone();
    state.block_ud = OffDiagonalBlock::evolve(params, &p0, t_stop);
    state.time = t_stop;
    let envelope = bath_suppression_envelope(params, t_stop);
    let grid = MagnetizationGrid::new(params.n_spins);
    let spin_state = state.spin_marginal();
    Ok(ReductionStop {
        dephasing_factor: state.block_ud.scalar_amplitude.norm() / envelope.max(f64::MIN_POSITIVE),
        envelope,
        apparatus_mean: grid.mean(&p0),
        apparatus_var: grid.variance(&p0),
        apparatus_unimodal: local_maxima(&p0, PEAK_FLOOR).len() == 1,
        spin_entropy_gap: spin_state.entropy() - spin.matrix().entropy(),
        spin_state,
        state,
        window: (lower, upper),
    })
}

/// Stops inside `margin·τ_red ≤ t ≤ τ_irrev/margin`.
pub fn stop_after_reduction(
    spin: &InitialSpinState,
    params: &ModelParams,
    t_stop: f64,
    margin: f64,
) -> Result<ReductionStop> {
    let snap = reduction_snapshot(spin, params, t_stop, margin)?;
    let (lower, upper) = snap.window;
    if !(t_stop >= lower && t_stop <= upper) {
        return Err(Error::OutsideReductionWindow { t_stop, lower, upper });
    }
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn spin_state_validation() {
        assert!(InitialSpinState::new(0.5, c(0.5, 0.0)).is_ok());
        assert!(InitialSpinState::new(0.5, c(0.6, 0.0)).is_err());
        assert!(InitialSpinState::from_elements(0.5, 0.6, c(0.0, 0.0)).is_err());
        assert!(InitialSpinState::new(-0.1, c(0.0, 0.0)).is_err());
        assert!(InitialSpinState::pure(c(0.0, 0.0), c(0.0, 0.0)).is_err());
    }

    #[test]
    fn pure_state_has_zero_entropy() {
        let s = InitialSpinState::pure(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        assert!(s.matrix().entropy().abs() < 1e-12);
        assert_relative_eq!(s.r_uu(), 0.36, epsilon = 1e-15);
        assert_relative_eq!(InitialSpinState::maximally_mixed().matrix().entropy(), 2f64.ln());
        let plus = InitialSpinState::pure(c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        assert_relative_eq!(plus.matrix().expect_sx(), 1.0, epsilon = 1e-15);
        let plus_y = InitialSpinState::pure(c(1.0, 0.0), c(0.0, 1.0)).unwrap();
        assert_relative_eq!(plus_y.matrix().expect_sy(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn initial_apparatus_entropy_is_n_ln2() {
        let params = ModelParams::reference().with_n_spins(200);
        let spin = InitialSpinState::up();
        let state = CompoundState::initial(&spin, &params);
        let e = entropy_balance(&spin, &params, &state);
        assert_relative_eq!(e.apparatus_initial, 200.0 * 2f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(e.final_total, e.initial, max_relative = 1e-12);
    }

    #[test]
    fn readout_is_reproducible_and_splits_zero() {
        let dist = PointerDistribution {
            m: vec![-1.0, 0.0, 1.0],
            p: vec![0.25, 0.5, 0.25],
            offdiag_residual: 0.0,
        };
        assert_eq!(dist.sign_weights(), (0.5, 0.5));
        let a = sample_readout(&dist, 1000, 3, 1e-3).unwrap();
        let b = sample_readout(&dist, 1000, 3, 1e-3).unwrap();
        assert_eq!(a, b);
        let (f_up, _) = a.frequencies();
        assert!((f_up - 0.5).abs() < 0.06);
        let bad = PointerDistribution {
            offdiag_residual: 0.1,
            ..dist
        };
        assert!(matches!(
            sample_readout(&bad, 10, 1, 1e-3),
            Err(Error::MeasurementIncomplete { .. })
        ));
    }

    #[test]
    fn reduction_window_enforced() {
        let params = ModelParams::reference();
        let spin = InitialSpinState::pure(c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        let err = stop_after_reduction(&spin, &params, 0.5, 10.0).unwrap_err();
        assert!(matches!(err, Error::OutsideReductionWindow { .. }));
        let snap = reduction_snapshot(&spin, &params, 0.5, 10.0).unwrap();
        assert_relative_eq!(snap.spin_state.diagonal().0, 0.5, epsilon = 1e-12);
        assert!(snap.apparatus_unimodal);
        assert!(snap.apparatus_mean.abs() < 1e-15);
    }

    #[test]
    fn reduction_stop_in_wide_window() {
        let params = ModelParams {
            n_spins: 20000,
            gamma: 2e-9,
            ..ModelParams::reference()
        };
        let spin = InitialSpinState::pure(c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        let t = 11.0 * tau_reduction(&params).unwrap();
        let snap = stop_after_reduction(&spin, &params, t, 10.0).unwrap();
        assert!(snap.state.offdiag_residual() < 1e-10);
        assert!(snap.envelope > 0.99);
        assert_relative_eq!(snap.spin_entropy_gap, 2f64.ln(), max_relative = 1e-9);
    }

    #[test]
    fn small_measurement_run() {
        let params = ModelParams {
            n_spins: 1000,
            coupling_g: 0.15,
            gamma: 0.01,
            ..ModelParams::reference()
        };
        let spin = InitialSpinState::pure(c(0.8, 0.0), c(0.6, 0.0)).unwrap();
        let schedule = MeasurementSchedule::new(3000.0, 60);
        let opts = MeasurementOptions {
            force: true,
            ..Default::default()
        };
        let run = run_measurement(&spin, &params, &schedule, &opts).unwrap();
        assert!(
            run.report.correlation_check,
            "{:?} {:?} {:?}",
            run.report.peak_up, run.report.peak_down, run.report.wrong_well_mass
        );
        let (pu, pd) = run.report.pointer_weights;
        assert_relative_eq!(pu, 0.64, epsilon = 1e-6);
        assert_relative_eq!(pd, 0.36, epsilon = 1e-6);
        assert!(run.report.offdiag_residual < 1e-3);
        assert!((run.state.trace() - 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        run.record.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,mean_m_up"));
    }

    #[test]
    fn regime_gate() {
        let params = ModelParams {
            n_spins: 200,
            gamma: 0.01,
            ..ModelParams::reference()
        };
        let err = run_measurement(
            &InitialSpinState::up(),
            &params,
            &MeasurementSchedule::new(10.0, 2),
            &MeasurementOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::RegimeViolation { .. }));
    }
}
