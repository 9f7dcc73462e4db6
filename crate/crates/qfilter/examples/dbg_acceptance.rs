use qfilter::bench::*;
use qfilter::models::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    // Criterion 4: micro vs block drift, c = 0.01, N = 100, 1e4 blocks.
    for s0 in [0.5, 0.0] {
        let t0 = Instant::now();
        let c = 0.01;
        let model = QubitChainModel::new(c, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let traj = simulate_microstep_chain(&model, 10_000, s0, 404, &mut rng).unwrap();
        let mut prev = s0;
        let mut sum_resid = 0.0;
        let mut sum_abs = 0.0;
        let mut max_abs: f64 = 0.0;
        for (s, x) in traj.hidden.iter().zip(&traj.observed) {
            let predicted = prev + x * c * (1.0 - prev * prev);
            let r = s - predicted;
            sum_resid += r;
            sum_abs += r.abs();
            max_abs = max_abs.max(r.abs());
            prev = *s;
        }
        let n = traj.len() as f64;
        println!(
            "c4 s0={s0}: mean resid {:.3e}, mean |resid| {:.3e}, max {:.3e}, bound 10c^2 = {:.1e}, final s {:.6}, t={:?}",
            sum_resid / n, sum_abs / n, max_abs, 10.0 * c * c, traj.hidden.last().unwrap(), t0.elapsed()
        );
    }

    // Criterion 6: kernel Eq-D risk vs Kalman risk, 20 seeds, n = 5000.
    let t0 = Instant::now();
    let text = "model.kind = linear\nmodel.a = 0.9\nmodel.b = 0.43588989435406736\n\
                model.A = 1.0\nmodel.B = 1.0\ntrajectory.length = 5000\nseeds = 1..20\n\
                filters = kalman,optimal-eq\nkernel.lag = 1\n";
    let config = ScenarioConfig::from_str_with_overrides(text, &[]).unwrap();
    let report = run_scenario(&config).unwrap();
    let kalman = report.mean_risk("kalman").unwrap();
    let kernel = report.mean_risk("optimal-eq-kernel").unwrap();
    println!(
        "c6: kalman {kalman:.5}, kernel Eq-D {kernel:.5}, ratio {:.4}, t={:?}",
        kernel / kalman,
        t0.elapsed()
    );
    for row in report.rows.iter().filter(|r| r.filter == "optimal-eq-kernel").take(5) {
        println!("   seed {} risk {:.4} sat {} skipped {}", row.seed, row.risk, row.saturation, row.skipped);
    }

    // Criterion 7: qubit block model, grid vs linearized Kalman, 200 seeds.
    let t0 = Instant::now();
    let text = "model.kind = qubit-block\nmodel.c = 0.1\nmodel.N = 100\nmodel.s0 = prior\n\
                trajectory.length = 500\nseeds = 1..200\nfilters = kalman,grid\n";
    let config = ScenarioConfig::from_str_with_overrides(text, &[]).unwrap();
    let report = run_scenario(&config).unwrap();
    let kalman = report.mean_risk("kalman").unwrap();
    let grid = report.mean_risk("grid").unwrap();
    println!("c7: ekf {kalman:.6}, grid {grid:.6}, t={:?}", t0.elapsed());
    for cmp in &report.comparisons {
        println!(
            "   {} <= {}: mean diff {:.3e}, rel {:.3}, boot05 {:.3e}, pass {}",
            cmp.filter_low, cmp.filter_high, cmp.mean_diff, cmp.relative_diff,
            cmp.bootstrap_lower_05, cmp.passes_one_sided_95
        );
    }
}
