//! Powell's direction-set method with Brent line searches on a few classic
//! test functions.

use trus_track::optimizer::{powell_minimize, OptimizerConfig};

fn main() {
    let config = OptimizerConfig {
        param_tolerance: 1e-8,
        value_tolerance: 1e-12,
        max_iterations: 200,
        ..Default::default()
    };
    let rosenbrock = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let r = powell_minimize(rosenbrock, &[-1.2, 1.0], &config);
    println!("rosenbrock  x = {:.6?}  f = {:.3e}  sweeps {}  evaluations {}", r.x, r.f, r.iterations, r.evaluations);

    let bowl = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - i as f64).powi(2)).sum::<f64>();
    let r = powell_minimize(bowl, &[0.0; 6], &config);
    println!("6-d bowl    x = {:.6?}  f = {:.3e}  sweeps {}", r.x, r.f, r.iterations);

    // undefined regions are +inf; the search stays in the feasible part
    let fenced = |x: &[f64]| if x[0] < 0.5 { f64::INFINITY } else { (x[0] - 0.2).powi(2) + x[1] * x[1] };
    let r = powell_minimize(fenced, &[2.0, 1.0], &config);
    println!("fenced      x = {:.6?}  f = {:.3e}  converged {}", r.x, r.f, r.converged);
}
