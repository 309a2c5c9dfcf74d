//! Repeated readings of the pointer after a measurement; frequencies
//! against the 3σ binomial band.

use num_complex::Complex64;
use qmeasure::measurement::{
    pointer_distribution, run_measurement, sample_readout, InitialSpinState, MeasurementOptions, MeasurementSchedule,
};
use qmeasure::model::ModelParams;

fn main() -> qmeasure::Result<()> {
    let params = ModelParams {
        n_spins: 400,
        gamma: 0.01,
        coupling_g: 0.1,
        ..ModelParams::reference()
    };
    let spin = InitialSpinState::new(0.3, Complex64::new(0.0, 0.2))?;
    let options = MeasurementOptions {
        force: true,
        ..Default::default()
    };
    let run = run_measurement(&spin, &params, &MeasurementSchedule::for_params(&params)?, &options)?;
    let dist = pointer_distribution(&run.state);
    println!("pointer weights {:?}", run.report.pointer_weights);

    for n in [100, 10_000, 1_000_000] {
        let sample = sample_readout(&dist, n, 2024, run.report.residual_threshold)?;
        let (f_up, _) = sample.frequencies();
        let sigma = (0.3 * 0.7 / n as f64).sqrt();
        println!("n = {n:>8}: f_up = {f_up:.5}, {:+.2} sigma", (f_up - 0.3) / sigma);
    }
    Ok(())
}
