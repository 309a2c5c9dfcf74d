//! Decay of the off-diagonal amplitude, its Gaussian short-time form, and
//! the recurrence at π/(2g) with and without the bath.

use qmeasure::dephasing::{amplitude_crossing_time, dephasing_amplitude, gaussian_envelope, offdiagonal_trajectory};
use qmeasure::model::{tau_reduction, ModelParams};

fn main() -> qmeasure::Result<()> {
    let params = ModelParams::reference();
    let tau = tau_reduction(&params)?;
    println!(
        "tau_red = {tau:.6}, e^-1 crossing = {:.6}",
        amplitude_crossing_time(&params, (-1.0f64).exp())?
    );

    println!("{:>8} {:>14} {:>14} {:>14}", "t/tau", "|A| summed", "cos^N", "gaussian");
    for i in 0..=8 {
        let t = 0.25 * i as f64 * tau;
        let a = dephasing_amplitude(&params, t);
        println!(
            "{:>8.2} {:>14.6e} {:>14.6e} {:>14.6e}",
            t / tau,
            a.summed.norm(),
            a.closed_form.abs(),
            gaussian_envelope(&params, t)?
        );
    }

    for p in [params.with_gamma(0.0), params] {
        let traj = offdiagonal_trajectory(&p, &[0.0, tau, 2.0 * tau], 1e-3)?;
        let r = traj.first_recurrence.expect("g > 0");
        println!(
            "gamma = {:e}: |A|·envelope at t = {:.4} is {:.3e} ({})",
            p.gamma,
            r.time,
            r.value,
            if r.survives {
                "recurrence survives"
            } else {
                "suppressed"
            }
        );
    }
    Ok(())
}
