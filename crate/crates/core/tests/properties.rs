use num_complex::Complex64;
use proptest::prelude::*;
use qmeasure::bath::{build_flip_rates_signed, sector_gibbs, BathKernel};
use qmeasure::dephasing::{dephasing_amplitude, offdiagonal_trajectory};
use qmeasure::measurement::{
    pointer_distribution, run_measurement, sample_readout, InitialSpinState, MeasurementOptions, MeasurementSchedule,
};
use qmeasure::model::{validate_regime, MagnetizationGrid, ModelParams, Sector, Timescales};
use qmeasure::oracle::{exact_dephasing, exact_gibbs};
use qmeasure::registration::{paramagnet_lifetime_probe, register, RegistrationSchedule};

fn fast_params(n: usize) -> ModelParams {
    ModelParams {
        n_spins: n,
        gamma: 0.01,
        ..ModelParams::reference()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kms_relation_on_log_grid(
        log_omega in -4.0f64..3.0,
        temperature in 0.05f64..5.0,
        cutoff in 10.0f64..200.0,
    ) {
        let omega = 10f64.powf(log_omega);
        prop_assume!(omega / temperature < 1000.0);
        let k = BathKernel::new(temperature, cutoff);
        let lhs = k.ln_spectrum(-omega) - k.ln_spectrum(omega);
        prop_assert!((lhs - omega / temperature).abs() <= 1e-12 * (1.0 + omega / temperature));
    }

    #[test]
    fn timescales_ordered_in_regime(
        n in 500usize..100_000,
        g in 0.005f64..0.2,
        log_gamma in -6.0f64..-2.0,
        temperature in 0.3f64..0.95,
    ) {
        let p = ModelParams {
            n_spins: n,
            coupling_g: g,
            gamma: 10f64.powf(log_gamma),
            temperature,
            ..ModelParams::reference()
        };
        prop_assume!(validate_regime(&p, 10.0).overall);
        // The registration estimate needs 3 m_F (J - T) > g.
        let ts = Timescales::compute(&p);
        prop_assume!(ts.is_ok());
        let ts = ts.unwrap();
        prop_assert!(ts.tau_red < ts.tau_irrev);
        prop_assert!(ts.tau_irrev < ts.tau_recur_estimate);
        prop_assert!(ts.tau_irrev < ts.tau_reg);
    }

    #[test]
    fn oracle_agrees_with_shell_sum(n in 1usize..=12, g in 0.001f64..2.0, t in 0.0f64..200.0) {
        let exact = exact_dephasing(n, g, t).unwrap();
        let collective = dephasing_amplitude(&ModelParams::reference().with_n_spins(n).with_coupling_g(g), t);
        prop_assert!((exact - collective.summed).norm() <= 1e-12);
        prop_assert!((exact.re - collective.closed_form).abs() <= 1e-12);
    }

    #[test]
    fn grid_gibbs_matches_enumeration(n in 2usize..=12, t in 0.2f64..3.0, g in 0.0f64..0.5, up in any::<bool>()) {
        let sector = if up { Sector::Up } else { Sector::Down };
        let p = ModelParams { n_spins: n, temperature: t, coupling_g: g, ..ModelParams::reference() };
        let exact = exact_gibbs(&p, Some(sector)).unwrap();
        let grid = sector_gibbs(&p, &MagnetizationGrid::new(n), sector.sign());
        for (a, b) in exact.iter().zip(&grid) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn gibbs_is_stationary(
        n in 10usize..3000,
        j in 0.5f64..2.0,
        t_frac in 0.1f64..0.95,
        g_frac in 0.0f64..0.3,
        log_gamma in -4.0f64..-1.0,
        cutoff_frac in 5.0f64..100.0,
        s in prop_oneof![Just(1.0f64), Just(-1.0f64)],
    ) {
        let p = ModelParams {
            n_spins: n,
            coupling_j: j,
            coupling_g: g_frac * j,
            gamma: 10f64.powf(log_gamma),
            temperature: t_frac * j,
            cutoff: cutoff_frac * j,
        };
        let gibbs = sector_gibbs(&p, &MagnetizationGrid::new(n), s);
        let rates = build_flip_rates_signed(&p, s);
        let dp = rates.generator_apply(&gibbs);
        let scale = gibbs
            .iter()
            .enumerate()
            .map(|(k, q)| q * (rates.up_rates[k] + rates.down_rates[k]))
            .fold(0.0f64, f64::max);
        let worst = dp.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        prop_assert!(worst <= 1e-10 * scale, "{worst:e} vs {scale:e}");
    }
}

#[test]
fn registered_peak_width_scales_as_inverse_sqrt_n() {
    // Small magnets shed their wrong-well mass slowly, so each size runs
    // until the leak has drained.
    let cases = [(250usize, 30_000.0), (1000, 3000.0), (4000, 3000.0)];
    let scaled: Vec<f64> = cases
        .iter()
        .map(|&(n, t_max)| {
            let reg = register(&fast_params(n), Sector::Up, &RegistrationSchedule::uniform(t_max, 4)).unwrap();
            reg.well_std * (n as f64).sqrt()
        })
        .collect();
    let hi = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let lo = scaled.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi / lo <= 1.10, "sigma sqrt(N) = {scaled:?}");
}

#[test]
fn paramagnet_lifetime_grows_with_n() {
    let times: Vec<f64> = (0..=300).map(|i| 10.0 * i as f64).collect();
    let onset = |n: usize| {
        let p = fast_params(n).with_coupling_g(0.0);
        let probe = paramagnet_lifetime_probe(&p, 3000.0, &times).unwrap();
        assert!(probe.max_abs_mean <= 1e-12);
        assert!(probe.samples.iter().all(|s| s.mean_m.abs() <= 1e-12));
        probe.bimodal_onset.expect("bimodal within the window")
    };
    let (small, large) = (onset(250), onset(4000));
    assert!(large > small, "onset {small} (N=250) vs {large} (N=4000)");
}

#[test]
fn paramagnet_unimodal_through_reduction_and_irreversibility() {
    let p = ModelParams::reference().with_coupling_g(0.0);
    let ts = Timescales::compute(&ModelParams::reference()).unwrap();
    let probe = paramagnet_lifetime_probe(&p, 2.0 * ts.tau_irrev, &[ts.tau_red, ts.tau_irrev]).unwrap();
    assert_eq!(probe.samples.len(), 2);
    for s in &probe.samples {
        assert_eq!(s.peaks, 1, "at t = {}", s.t);
        assert_eq!(s.mean_m, 0.0);
    }
}

#[test]
fn sectors_are_mirror_images() {
    let p = fast_params(600);
    let schedule = RegistrationSchedule::uniform(3000.0, 60);
    let up = register(&p, Sector::Up, &schedule).unwrap();
    let down = register(&p, Sector::Down, &schedule).unwrap();
    for (a, b) in up.samples.iter().zip(&down.samples) {
        assert!((a.mean_m + b.mean_m).abs() <= 1e-10);
        assert!((a.var_m - b.var_m).abs() <= 1e-10);
    }
    for (a, b) in up
        .final_block
        .probabilities
        .iter()
        .zip(down.final_block.probabilities.iter().rev())
    {
        assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn switch_off_settles_on_zero_field_root() {
    let p = fast_params(1000);
    let schedule = RegistrationSchedule::uniform(3000.0, 10).with_coupling_off_at(1500.0);
    let reg = register(&p, Sector::Down, &schedule).unwrap();
    let m_f = Timescales::compute(&p).unwrap().m_f;
    assert!(
        (reg.final_mean + m_f).abs() <= 10.0 / 1000.0,
        "{} vs {}",
        reg.final_mean,
        -m_f
    );
}

#[test]
fn pure_up_spin_registers_only_up() {
    let p = fast_params(400);
    let opts = MeasurementOptions {
        force: true,
        ..Default::default()
    };
    let run = run_measurement(
        &InitialSpinState::up(),
        &p,
        &MeasurementSchedule::new(3000.0, 10),
        &opts,
    )
    .unwrap();
    assert_eq!(run.state.block_dd.weight, 0.0);
    assert!(run.report.pointer_weights.0 > 0.99);
    assert!(run.report.peak_up.location > 0.7);
    let dist = pointer_distribution(&run.state);
    let sample = sample_readout(&dist, 5000, 1, 0.0).unwrap();
    let minus = sample.outcomes.iter().filter(|&&o| o < 0).count();
    // Only wrong-well leakage of the single block can produce -1.
    assert!(minus as f64 <= 5000.0 * 0.01);
}

#[test]
fn exactly_up_pointer_reads_up() {
    let p = ModelParams {
        n_spins: 1000,
        gamma: 0.01,
        coupling_g: 0.15,
        ..ModelParams::reference()
    };
    let opts = MeasurementOptions {
        force: true,
        ..Default::default()
    };
    let run = run_measurement(
        &InitialSpinState::up(),
        &p,
        &MeasurementSchedule::new(3000.0, 10),
        &opts,
    )
    .unwrap();
    let sample = sample_readout(&pointer_distribution(&run.state), 10_000, 9, 0.0).unwrap();
    assert!(sample.outcomes.iter().all(|&o| o == 1));
}

#[test]
fn maximally_mixed_spin_gives_symmetric_report() {
    let p = fast_params(500);
    let opts = MeasurementOptions {
        force: true,
        ..Default::default()
    };
    let run = run_measurement(
        &InitialSpinState::maximally_mixed(),
        &p,
        &MeasurementSchedule::new(3000.0, 10),
        &opts,
    )
    .unwrap();
    let r = &run.report;
    assert!((r.pointer_weights.0 - r.pointer_weights.1).abs() <= 1e-12);
    assert!((r.peak_up.location + r.peak_down.location).abs() <= 1e-10);
    assert!(r.entropy.gap() > 0.0);
    assert_eq!(r.offdiag_residual, 0.0);
}

#[test]
fn trajectory_independent_of_evaluation_order() {
    let p = ModelParams::reference();
    let times: Vec<f64> = (0..500).map(|i| 0.07 * i as f64).collect();
    let whole = offdiagonal_trajectory(&p, &times, 1e-3).unwrap();
    for (i, &t) in times.iter().enumerate().rev().step_by(37) {
        let single = offdiagonal_trajectory(&p, &[t], 1e-3).unwrap();
        assert_eq!(single.product[0], whole.product[i]);
    }
}

#[test]
fn readout_frequencies_converge_at_binomial_rate() {
    let p = fast_params(300).with_coupling_g(0.15);
    let spin = InitialSpinState::new(0.2, Complex64::new(0.0, 0.0)).unwrap();
    let opts = MeasurementOptions {
        force: true,
        ..Default::default()
    };
    let run = run_measurement(&spin, &p, &MeasurementSchedule::new(3000.0, 10), &opts).unwrap();
    let dist = pointer_distribution(&run.state);
    let (p_up, _) = dist.sign_weights();
    for (n, seed) in [(1_000usize, 1u64), (30_000, 2), (1_000_000, 3)] {
        let (f_up, _) = sample_readout(&dist, n, seed, 0.0).unwrap().frequencies();
        let sigma = (p_up * (1.0 - p_up) / n as f64).sqrt();
        assert!((f_up - p_up).abs() <= 3.0 * sigma, "n = {n}: {f_up} vs {p_up}");
    }
}
