//! Registration of the `↑` block at the reference parameters, with the
//! coupling switched off halfway.

use qmeasure::model::{ModelParams, Sector, Timescales};
use qmeasure::registration::{fit_growth_rate, register, solve_fixed_points, RegistrationSchedule};

fn main() -> qmeasure::Result<()> {
    let params = ModelParams::reference();
    let fp = solve_fixed_points(&params, Some(Sector::Up));
    for r in &fp.roots {
        println!(
            "root m = {:+.6} ({})",
            r.m,
            if r.stable { "stable" } else { "unstable" }
        );
    }

    let closed = Timescales::compute(&params)?.tau_reg;
    let schedule = RegistrationSchedule::uniform(3.0 * closed, 300).with_coupling_off_at(1.5 * closed);
    let reg = register(&params, Sector::Up, &schedule)?;
    let measured = reg.require_registered(schedule.t_max)?;
    println!(
        "measured crossing {measured:.1}, closed form {closed:.1}, ratio {:.3}",
        measured / closed
    );

    let rate = (params.coupling_j - params.temperature) * params.gamma;
    let shift = params.coupling_g / (params.coupling_j - params.temperature);
    if let Some(fit) = fit_growth_rate(&reg.samples, Sector::Up, shift, 0.0, 0.1) {
        println!("growth rate {fit:.4e} = {:.4} gamma(J - T)", fit / rate);
    }
    println!(
        "final <m> = {:.5} ± {:.5}, peaks {}, wrong-well mass {:.2e}",
        reg.final_mean, reg.final_std, reg.final_peaks, reg.wrong_well_mass
    );
    println!(
        "steps {}, max norm error {:.1e}",
        reg.audit.steps, reg.audit.max_norm_error
    );
    for s in reg.samples.iter().step_by(30) {
        println!("{:>10.1} {:+.5} {:.3e}", s.t, s.mean_m, s.var_m);
    }
    Ok(())
}
