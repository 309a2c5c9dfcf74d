//! Stopping after the cat terms are gone but before the bath has acted.
//! The reference parameters leave no room between 10 τ_red and
//! τ_irrev/10, so a larger, weaker-damped magnet is used.

use num_complex::Complex64;
use qmeasure::measurement::{reduction_snapshot, stop_after_reduction, InitialSpinState};
use qmeasure::model::{tau_irreversibility, tau_reduction, validate_regime, ModelParams};

fn main() -> qmeasure::Result<()> {
    let spin = InitialSpinState::pure(Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0))?;

    let reference = ModelParams::reference();
    let t = 10.0 * tau_reduction(&reference)?;
    if let Err(e) = stop_after_reduction(&spin, &reference, t, 10.0) {
        println!("reference: {e}");
    }
    let snap = reduction_snapshot(&spin, &reference, t, 10.0)?;
    println!(
        "reference at 10 tau_red: dephasing {:.2e}, envelope {:.2e}",
        snap.dephasing_factor, snap.envelope
    );

    let params = ModelParams {
        n_spins: 20_000,
        gamma: 2e-9,
        ..reference
    };
    println!("regime at margin 10: {}", validate_regime(&params, 10.0).overall);
    let (tr, ti) = (tau_reduction(&params)?, tau_irreversibility(&params)?);
    println!("tau_red {tr:.4}, tau_irrev {ti:.4}");
    let stop = stop_after_reduction(&spin, &params, 10.0 * tr, 10.0)?;
    println!(
        "|r_ud(t)| / |r_ud(0)| = {:.3e}",
        stop.spin_state.off_diagonal().norm() / spin.r_ud().norm()
    );
    println!("envelope {:.6}", stop.envelope);
    println!(
        "apparatus <m> = {:e}, var = {:.4e} (1/N = {:.4e}), unimodal {}",
        stop.apparatus_mean,
        stop.apparatus_var,
        1.0 / 20_000.0,
        stop.apparatus_unimodal
    );
    println!(
        "spin entropy gap {:.6} (ln 2 = {:.6})",
        stop.spin_entropy_gap,
        2f64.ln()
    );
    println!(
        "<sx> = {:.2e}, <sy> = {:.2e}",
        stop.spin_state.expect_sx(),
        stop.spin_state.expect_sy()
    );
    Ok(())
}
