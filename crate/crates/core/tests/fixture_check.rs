//! Smoke checks on the packaged fixtures.

use gridplan_core::*;

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

#[test]
fn nordic5_loads_validates_and_solves() {
    let loaded = io::load_system(&fixture("nordic5_synth.toml")).unwrap();
    assert_eq!(loaded.system.nodes.len(), 5);
    assert_eq!(loaded.system.lines.len(), 10);
    assert_eq!(loaded.system.num_scenarios(), 3);
    assert_eq!(loaded.system.num_periods(), 4);
    assert!(loaded.warnings.is_empty(), "{:?}", loaded.warnings);
    let effective = model::apply_policy(&loaded.system, &loaded.policy);
    let t0 = std::time::Instant::now();
    let central = equilibrium::solve_central(&loaded.system, &effective, &solver::SolverSettings::default()).unwrap();
    println!("central solve: {:?} iterations {} polished {} welfare {:.6e}",
        t0.elapsed(), central.outcome.stats.iterations, central.outcome.stats.polished, central.objective_value);
    let t1 = std::time::Instant::now();
    let market = equilibrium::solve_market(&loaded.system, &effective, &central.plan, &solver::SolverSettings::default()).unwrap();
    println!("market solve: {:?} iterations {}", t1.elapsed(), market.stats.iterations);
    let factors = equilibrium::output_factors(&loaded.system, &effective, &central.plan, &market);
    println!("welfare {:.6e} vre_share {:.4} generation {:.4e}", factors.welfare, factors.vre_share, factors.total_generation);
    let report = equilibrium::kkt_residuals(&loaded.system, &effective, &central.plan, &market);
    println!("kkt worst {:.3e}", report.worst());
    assert!(report.passes(1e-6), "{report:#?}");
    let rel = (factors.welfare - central.objective_value).abs() / central.objective_value.abs();
    assert!(rel < 1e-5, "equivalence gap {rel}");
}

#[test]
fn nordic5_hourly_csv_loads() {
    let series = io::load_hourly_csv(&fixture("nordic5_hourly.csv")).unwrap();
    assert_eq!(series.len(), 15);
    let caps = io::load_capacities_csv(&fixture("nordic5_capacities.csv")).unwrap();
    assert_eq!(caps.len(), 10);
}
