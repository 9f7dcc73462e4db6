use qfilter::bench::*;
use std::time::Instant;

fn main() {
    for s0 in ["prior", "0.5"] {
        let t0 = Instant::now();
        let text = format!(
            "model.kind = qubit-block\nmodel.c = 0.1\nmodel.N = 100\nmodel.s0 = {s0}\n\
             trajectory.length = 500\nseeds = 1..200\nfilters = kalman,grid\n"
        );
        let config = ScenarioConfig::from_str_with_overrides(&text, &[]).unwrap();
        let report = run_scenario(&config).unwrap();
        let kalman = report.mean_risk("kalman").unwrap();
        let grid = report.mean_risk("grid").unwrap();
        println!("s0={s0}: ekf {kalman:.6}, grid {grid:.6}, t={:?}", t0.elapsed());
        for cmp in &report.comparisons {
            println!(
                "   {} <= {}: mean diff {:.4e}, rel {:.3}, boot05 {:.4e}, pass {}",
                cmp.filter_low, cmp.filter_high, cmp.mean_diff, cmp.relative_diff,
                cmp.bootstrap_lower_05, cmp.passes_one_sided_95
            );
        }
    }
}
