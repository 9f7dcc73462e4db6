use qfilter::bench::*;
use std::time::Instant;

fn main() {
    for (a, b) in [(0.5f64, 0.8660254037844386f64), (0.7, 0.7141428428542851), (0.9, 0.43588989435406736)] {
        for lag in [1usize, 2] {
            let t0 = Instant::now();
            let text = format!(
                "model.kind = linear\nmodel.a = {a}\nmodel.b = {b}\n\
                 model.A = 1.0\nmodel.B = 1.0\ntrajectory.length = 5000\nseeds = 1..20\n\
                 filters = kalman,optimal-eq\nkernel.lag = {lag}\n"
            );
            let config = ScenarioConfig::from_str_with_overrides(&text, &[]).unwrap();
            let report = run_scenario(&config).unwrap();
            let kalman = report.mean_risk("kalman").unwrap();
            let kernel = report.mean_risk("optimal-eq-kernel").unwrap();
            println!(
                "a={a} lag {lag}: kalman {kalman:.5}, kernel {kernel:.5}, ratio {:.4}, t={:?}",
                kernel / kalman,
                t0.elapsed()
            );
        }
    }
}
