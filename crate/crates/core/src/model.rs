//! Model parameters, the collective magnetization grid, the parameter-regime
//! report and the closed-form timescales.
//!
//! Reduced units throughout: `ħ = k_B = 1`, energies are naturally measured
//! in units of the Ising coupling `J`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{compensated_sum, log_sum_exp};
use crate::registration::solve_fixed_points;

/// Eigenvalue sector of the tested spin `s_z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sector {
    Up,
    Down,
}

impl Sector {
    pub fn sign(self) -> f64 {
        match self {
            Sector::Up => 1.0,
            Sector::Down => -1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Sector::Up => Sector::Down,
            Sector::Down => Sector::Up,
        }
    }
}

/// Physical constants of the model.
///
/// `gamma = 0` is accepted and means "bath switched off"; it makes the
/// regime report fail and disables registration, but dephasing is still
/// well defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of magnet spins `N`.
    pub n_spins: usize,
    /// Ferromagnetic Ising coupling `J`.
    pub coupling_j: f64,
    /// Tested-spin / magnet coupling `g`.
    pub coupling_g: f64,
    /// Dimensionless magnet-bath coupling `γ`.
    pub gamma: f64,
    /// Bath temperature `T`.
    pub temperature: f64,
    /// Debye cutoff `Γ` of the bath spectrum.
    pub cutoff: f64,
}

impl ModelParams {
    pub fn new(
        n_spins: usize,
        coupling_j: f64,
        coupling_g: f64,
        gamma: f64,
        temperature: f64,
        cutoff: f64,
    ) -> Result<Self> {
        let p = ModelParams {
            n_spins,
            coupling_j,
            coupling_g,
            gamma,
            temperature,
            cutoff,
        };
        p.validate()?;
        Ok(p)
    }

    /// N = 1000, J = 1, g = 0.05, γ = 1e-3, T = 0.8, Γ = 50.
    pub fn reference() -> Self {
        ModelParams {
            n_spins: 1000,
            coupling_j: 1.0,
            coupling_g: 0.05,
            gamma: 1e-3,
            temperature: 0.8,
            cutoff: 50.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn finite(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite, got {v}")))
            }
        }
        if self.n_spins < 1 {
            return Err(Error::invalid("n_spins", "must be >= 1"));
        }
        finite("coupling_j", self.coupling_j)?;
        finite("coupling_g", self.coupling_g)?;
        finite("gamma", self.gamma)?;
        finite("temperature", self.temperature)?;
        finite("cutoff", self.cutoff)?;
        if self.coupling_j <= 0.0 {
            return Err(Error::invalid("coupling_j", "must be > 0"));
        }
        if self.coupling_g < 0.0 {
            return Err(Error::invalid("coupling_g", "must be >= 0"));
        }
        if self.gamma < 0.0 {
            return Err(Error::invalid("gamma", "must be >= 0"));
        }
        if self.temperature <= 0.0 {
            return Err(Error::invalid("temperature", "must be > 0"));
        }
        if self.cutoff <= 0.0 {
            return Err(Error::invalid("cutoff", "must be > 0"));
        }
        Ok(())
    }

    pub fn with_coupling_g(mut self, g: f64) -> Self {
        self.coupling_g = g;
        self
    }

    pub fn with_n_spins(mut self, n: usize) -> Self {
        self.n_spins = n;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    /// Effective field on a magnet spin in sector `s`: `J m + g s`.
    pub fn field(&self, m: f64, sector_sign: f64) -> f64 {
        self.coupling_j * m + self.coupling_g * sector_sign
    }

    /// Energy of the magnet plus coupling, `−N J m²/2 − N g s m`.
    pub fn sector_energy(&self, m: f64, sector_sign: f64) -> f64 {
        let n = self.n_spins as f64;
        -0.5 * n * self.coupling_j * m * m - n * self.coupling_g * sector_sign * m
    }
}

/// The `N + 1` collective magnetization values with their shell
/// degeneracies, kept in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetizationGrid {
    n_spins: usize,
    values: Vec<f64>,
    log_degeneracy: Vec<f64>,
}

impl MagnetizationGrid {
    pub fn new(n_spins: usize) -> Self {
        assert!(n_spins >= 1, "grid needs at least one spin");
        let n = n_spins as f64;
        // (2k − N)/N keeps m_{N−k} = −m_k bit for bit
        let values = (0..=n_spins)
            .map(|k| (2 * k as i64 - n_spins as i64) as f64 / n)
            .collect::<Vec<_>>();

        // ln C(N, k) by a compensated running sum of ln((N-k)/(k+1)),
        // built up to the middle and mirrored so the symmetry is exact.
        let mut log_degeneracy = vec![0.0; n_spins + 1];
        let mut sum = 0.0_f64;
        let mut carry = 0.0_f64;
        for k in 0..n_spins / 2 {
            let term = ((n_spins - k) as f64 / (k + 1) as f64).ln();
            let t = sum + term;
            if sum.abs() >= term.abs() {
                carry += (sum - t) + term;
            } else {
                carry += (term - t) + sum;
            }
            sum = t;
            log_degeneracy[k + 1] = sum + carry;
        }
        for k in 0..=n_spins / 2 {
            log_degeneracy[n_spins - k] = log_degeneracy[k];
        }
        MagnetizationGrid {
            n_spins,
            values,
            log_degeneracy,
        }
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn log_degeneracy(&self) -> &[f64] {
        &self.log_degeneracy
    }

    /// Grid spacing `2/N`.
    pub fn spacing(&self) -> f64 {
        2.0 / self.n_spins as f64
    }

    /// `ln Σ_k C(N,k)`; equals `N ln 2`.
    pub fn log_total_states(&self) -> f64 {
        log_sum_exp(&self.log_degeneracy)
    }

    /// Normalized distribution `∝ C(N,k) exp(log_weight(m_k))`.
    pub fn distribution_from_log_weights(&self, log_weight: impl Fn(f64) -> f64) -> Vec<f64> {
        let logs: Vec<f64> = self
            .values
            .iter()
            .zip(&self.log_degeneracy)
            .map(|(&m, &lc)| lc + log_weight(m))
            .collect();
        let norm = log_sum_exp(&logs);
        logs.into_iter().map(|l| (l - norm).exp()).collect()
    }

    /// `Σ p_k m_k`, summed pairwise over mirror points so a symmetric `p`
    /// gives exactly zero.
    pub fn mean(&self, p: &[f64]) -> f64 {
        let n = self.n_spins;
        let mut acc = 0.0;
        for k in 0..n.div_ceil(2) {
            acc += (p[k] - p[n - k]) * self.values[k];
        }
        acc
    }

    pub fn second_moment(&self, p: &[f64]) -> f64 {
        compensated_sum(p.iter().zip(&self.values).map(|(pk, m)| pk * m * m))
    }

    pub fn variance(&self, p: &[f64]) -> f64 {
        let mean = self.mean(p);
        compensated_sum(p.iter().zip(&self.values).map(|(pk, m)| pk * (m - mean) * (m - mean)))
    }

    /// Probability mass where `pred(m)` holds.
    pub fn mass_where(&self, p: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
        compensated_sum(p.iter().zip(&self.values).filter(|(_, &m)| pred(m)).map(|(pk, _)| *pk))
    }
}

/// One inequality of the parameter regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeCheck {
    pub key: &'static str,
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `true` for a strict `>`; otherwise the check is `lhs >= margin * rhs`.
    pub strict: bool,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub margin: f64,
    pub checks: Vec<RegimeCheck>,
    pub overall: bool,
}

impl RegimeReport {
    pub fn failed(&self) -> impl Iterator<Item = &RegimeCheck> {
        self.checks.iter().filter(|c| !c.satisfied)
    }

    /// Flat `key = value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = format!("regime.margin = {:e}\nregime.overall = {}\n", self.margin, self.overall);
        for c in &self.checks {
            out.push_str(&format!(
                "regime.{k}.lhs = {:e}\nregime.{k}.rhs = {:e}\nregime.{k}.satisfied = {}\n",
                c.lhs,
                c.rhs,
                c.satisfied,
                k = c.key
            ));
        }
        out
    }
}

impl fmt::Display for RegimeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "parameter regime (\">>\" means at least {}x):", self.margin)?;
        for c in &self.checks {
            let rel = if c.strict { ">" } else { ">>" };
            writeln!(
                f,
                "  [{}] {:<34} {:>12.4e} {rel} {:<12.4e}",
                if c.satisfied { "ok" } else { "FAIL" },
                c.name,
                c.lhs,
                c.rhs,
            )?;
        }
        write!(f, "  overall: {}", if self.overall { "valid" } else { "violated" })
    }
}

/// Evaluates the chain of inequalities defining the regime in which the
/// measurement dynamics is solved, plus the window on `γ` that orders the
/// reduction, irreversibility and recurrence times.
pub fn validate_regime(params: &ModelParams, margin: f64) -> RegimeReport {
    assert!(margin >= 1.0, "margin must be >= 1");
    let n = params.n_spins as f64;
    let j = params.coupling_j;
    let g = params.coupling_g;
    let gamma = params.gamma;
    let t = params.temperature;
    let cutoff = params.cutoff;

    let much = |key, name, lhs: f64, rhs: f64| RegimeCheck {
        key,
        name,
        lhs,
        rhs,
        strict: false,
        satisfied: lhs >= margin * rhs,
    };
    let gamma_window = gamma * cutoff * cutoff / (8.0 * PI * g * g);

    let checks = vec![
        much("large_n", "N >> 1", n, 1.0),
        much("cutoff_over_t", "Gamma >> T", cutoff, t),
        much("t_over_gamma_j", "T >> gamma J", t, gamma * j),
        much(
            "gamma_j_over_dephasing",
            "gamma J >> (J/N)(g/Gamma)^2",
            gamma * j,
            (j / n) * (g / cutoff).powi(2),
        ),
        much("cutoff_over_j", "Gamma >> J", cutoff, j),
        RegimeCheck {
            key: "j_over_g",
            name: "J > g",
            lhs: j,
            rhs: g,
            strict: true,
            satisfied: j > g,
        },
        much("n_over_gamma_window", "N >> gamma Gamma^2/(8 pi g^2)", n, gamma_window),
        much(
            "gamma_window_over_recurrence",
            "gamma Gamma^2/(8 pi g^2) >> 4/(N pi^4)",
            gamma_window,
            4.0 / (n * PI.powi(4)),
        ),
    ];
    let overall = checks.iter().all(|c| c.satisfied);
    RegimeReport {
        margin,
        checks,
        overall,
    }
}

/// Time over which the off-diagonal blocks dephase: `1/(√(2N) g)`.
pub fn tau_reduction(params: &ModelParams) -> Result<f64> {
    if params.coupling_g <= 0.0 {
        return Err(Error::InfiniteReductionTime);
    }
    Ok(1.0 / ((2.0 * params.n_spins as f64).sqrt() * params.coupling_g))
}

/// Time at which the bath starts suppressing recurrences:
/// `[2π / (N γ g² Γ²)]^{1/4}`.
pub fn tau_irreversibility(params: &ModelParams) -> Result<f64> {
    if params.gamma <= 0.0 {
        return Err(Error::InfiniteIrreversibilityTime("gamma"));
    }
    if params.coupling_g <= 0.0 {
        return Err(Error::InfiniteIrreversibilityTime("coupling_g"));
    }
    let n = params.n_spins as f64;
    let denom = n * params.gamma * params.coupling_g.powi(2) * params.cutoff.powi(2);
    Ok((2.0 * PI / denom).powf(0.25))
}

/// Registration time `ln(3 m_F (J − T)/g) / (γ (J − T))`.
pub fn tau_registration(params: &ModelParams, m_f: f64) -> Result<f64> {
    let gap = params.coupling_j - params.temperature;
    if gap <= 0.0 {
        return Err(Error::NoBrokenSymmetry {
            temperature: params.temperature,
            coupling_j: params.coupling_j,
        });
    }
    if params.gamma <= 0.0 {
        return Err(Error::invalid("gamma", "registration needs a bath (gamma > 0)"));
    }
    let argument = 3.0 * m_f * gap / params.coupling_g;
    if !(argument > 1.0) || !argument.is_finite() {
        return Err(Error::RegistrationFormulaInvalid { argument });
    }
    Ok(argument.ln() / (params.gamma * gap))
}

/// First exact revival of the bare dephasing amplitude, `π/(2g)`.
pub fn tau_recurrence(params: &ModelParams) -> Result<f64> {
    if params.coupling_g <= 0.0 {
        return Err(Error::InfiniteReductionTime);
    }
    Ok(PI / (2.0 * params.coupling_g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timescales {
    pub tau_red: f64,
    pub tau_irrev: f64,
    pub tau_reg: f64,
    pub tau_recur_estimate: f64,
    /// Zero-field ferromagnetic magnetization used in `tau_reg`.
    pub m_f: f64,
}

impl Timescales {
    pub fn compute(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let m_f = solve_fixed_points(params, None)
            .m_ferro_plus
            .ok_or(Error::NoBrokenSymmetry {
                temperature: params.temperature,
                coupling_j: params.coupling_j,
            })?;
        Ok(Timescales {
            tau_red: tau_reduction(params)?,
            tau_irrev: tau_irreversibility(params)?,
            tau_reg: tau_registration(params, m_f)?,
            tau_recur_estimate: tau_recurrence(params)?,
            m_f,
        })
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "tau_red = {:e}\ntau_irrev = {:e}\ntau_reg = {:e}\ntau_recur_estimate = {:e}\nm_f = {:e}\n",
            self.tau_red, self.tau_irrev, self.tau_reg, self.tau_recur_estimate, self.m_f
        )
    }
}
