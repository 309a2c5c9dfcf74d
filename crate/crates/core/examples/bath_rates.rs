//! Bath spectrum, detailed balance, and the collective flip rates written
//! as CSV to stdout.

use qmeasure::bath::{build_flip_rates, mean_field_drift, sector_gibbs, BathKernel};
use qmeasure::model::{MagnetizationGrid, ModelParams, Sector};

fn main() -> std::io::Result<()> {
    let params = ModelParams::reference().with_n_spins(40);
    let kernel = BathKernel::from_params(&params);
    eprintln!("{:>8} {:>14} {:>14}", "omega", "K(omega)", "K(-w)/K(w)e^-w/T");
    for omega in [0.01, 0.1, 1.0, 5.0, 20.0] {
        let ratio = (kernel.ln_spectrum(-omega) - kernel.ln_spectrum(omega) - omega / params.temperature).exp();
        eprintln!("{omega:>8} {:>14.6e} {:>14.12}", kernel.spectrum(omega), ratio);
    }

    let rates = build_flip_rates(&params, Sector::Up);
    let grid = MagnetizationGrid::new(params.n_spins);
    let gibbs = sector_gibbs(&params, &grid, 1.0);
    let residual = rates.generator_apply(&gibbs).iter().fold(0.0f64, |a, x| a.max(x.abs()));
    eprintln!("max |dP/dt| on the sector Gibbs state: {residual:.2e}");
    eprintln!("mean-field drift at m = 0: {:.6e}", mean_field_drift(&params, 0.0, 1.0));

    rates.write_csv(std::io::stdout().lock())
}
