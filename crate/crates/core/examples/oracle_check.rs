//! Brute-force enumeration against the collective description.

use num_complex::Complex64;
use qmeasure::dephasing::dephasing_amplitude;
use qmeasure::measurement::InitialSpinState;
use qmeasure::model::ModelParams;
use qmeasure::oracle::{agreement_suite, exact_dephasing, exact_spin_marginal};

fn main() -> qmeasure::Result<()> {
    print!("{}", agreement_suite()?.table());

    let exact = exact_dephasing(12, 0.3, 1.7)?;
    let collective = dephasing_amplitude(&ModelParams::reference().with_n_spins(12).with_coupling_g(0.3), 1.7);
    println!(
        "N = 12, g = 0.3, t = 1.7: exact {exact:.15}, shells {:.15}",
        collective.summed
    );

    let spin = InitialSpinState::pure(Complex64::new(0.8, 0.0), Complex64::new(0.6, 0.0))?;
    let m = exact_spin_marginal(&spin, 12, 0.3, 1.7)?;
    println!("spin marginal: diag {:?}, r_ud {:.6}", m.diagonal(), m.off_diagonal());
    Ok(())
}
