//! End-to-end measurement of a spin prepared in 0.8|↑⟩ + 0.6|↓⟩ at the
//! reference parameters.

use num_complex::Complex64;
use qmeasure::measurement::{run_measurement, InitialSpinState, MeasurementOptions, MeasurementSchedule};
use qmeasure::model::ModelParams;

fn main() -> qmeasure::Result<()> {
    let params = ModelParams::reference();
    let spin = InitialSpinState::pure(Complex64::new(0.8, 0.0), Complex64::new(0.6, 0.0))?;
    let schedule = MeasurementSchedule::new(3.0e4, 300);
    let start = std::time::Instant::now();
    let run = run_measurement(&spin, &params, &schedule, &MeasurementOptions::default())?;
    let r = &run.report;

    println!("integrated to t = {} in {:.1?}", schedule.t_final, start.elapsed());
    println!(
        "pointer weights      {:.9} {:.9}",
        r.pointer_weights.0, r.pointer_weights.1
    );
    println!(
        "peaks                {:+.5} ± {:.5}   {:+.5} ± {:.5}",
        r.peak_up.location, r.peak_up.spread, r.peak_down.location, r.peak_down.spread
    );
    println!(
        "registration times   {:?} {:?}",
        run.record.registration_time_up, run.record.registration_time_down
    );
    println!(
        "off-diagonal         {:.3e} (bound {:.3e})",
        r.offdiag_residual, r.residual_threshold
    );
    println!(
        "wrong-well mass      {:.3e} {:.3e}",
        r.wrong_well_mass.0, r.wrong_well_mass.1
    );
    let e = &r.entropy;
    println!("entropy initial      {:.4}", e.initial);
    println!(
        "entropy final        {:.4} (magnet {:.4}, bath {:.4}, spin {:.4})",
        e.final_total, e.magnet_final, e.bath_final, e.spin_final
    );
    println!("entropy, Gibbs wells {:.4}", e.equilibrium_final);
    let post = r.post_spin_state;
    println!(
        "post-measurement     diag {:?}  <sx> {:.2e}  <sy> {:.2e}",
        post.diagonal(),
        post.expect_sx(),
        post.expect_sy()
    );
    println!("audit                {:?}", run.record.audit);
    println!("complete             {}", r.complete);
    Ok(())
}
