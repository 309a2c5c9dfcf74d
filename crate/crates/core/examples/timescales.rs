//! Regime checks and the timescale hierarchy for the reference parameters
//! and a few neighbours.

use qmeasure::model::{validate_regime, ModelParams, Timescales};

fn main() -> qmeasure::Result<()> {
    let reference = ModelParams::reference();
    println!("{}", validate_regime(&reference, 10.0));

    println!(
        "{:>8} {:>8} {:>12} {:>12} {:>12} {:>12}",
        "N", "g", "tau_red", "tau_irrev", "tau_reg", "tau_recur"
    );
    for (n, g) in [(1000, 0.05), (4000, 0.05), (1000, 0.02), (100_000, 0.01)] {
        let p = reference.with_n_spins(n).with_coupling_g(g);
        let ts = Timescales::compute(&p)?;
        println!(
            "{n:>8} {g:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            ts.tau_red, ts.tau_irrev, ts.tau_reg, ts.tau_recur_estimate
        );
    }
    Ok(())
}
