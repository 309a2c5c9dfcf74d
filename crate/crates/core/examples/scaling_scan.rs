//! Reduction time against N, and the width of the registered peak
//! against N, both on log-log axes.

use qmeasure::dephasing::amplitude_crossing_time;
use qmeasure::model::{tau_reduction, ModelParams, Sector};
use qmeasure::numerics::linear_fit;
use qmeasure::registration::{register, RegistrationSchedule};
use rayon::prelude::*;

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).map_or(f64::NAN, |f| f.0)
}

fn main() -> qmeasure::Result<()> {
    let base = ModelParams::reference();
    let ns = [100usize, 400, 1600, 6400];
    let crossings: Vec<f64> = ns
        .par_iter()
        .map(|&n| amplitude_crossing_time(&base.with_n_spins(n), (-1.0f64).exp()))
        .collect::<qmeasure::Result<_>>()?;
    for (n, c) in ns.iter().zip(&crossings) {
        println!(
            "N = {n:>5}: crossing {c:.6}, tau_red {:.6}",
            tau_reduction(&base.with_n_spins(*n))?
        );
    }
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    println!("slope {:.4}", slope(&x, &crossings));

    let ns = [250usize, 1000, 4000];
    let fast = base.with_gamma(0.01);
    let spreads: Vec<f64> = ns
        .par_iter()
        .map(|&n| {
            register(
                &fast.with_n_spins(n),
                Sector::Up,
                &RegistrationSchedule::uniform(3000.0, 10),
            )
            .map(|r| r.well_std)
        })
        .collect::<qmeasure::Result<_>>()?;
    for (n, s) in ns.iter().zip(&spreads) {
        println!("N = {n:>5}: well std {s:.5}, std·sqrt(N) {:.4}", s * (*n as f64).sqrt());
    }
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    println!("slope {:.4}", slope(&x, &spreads));
    Ok(())
}
