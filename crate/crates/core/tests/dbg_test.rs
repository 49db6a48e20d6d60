#[test]
fn nordic_warm_candidates() {
    use gridplan_core::*;
    let loaded = io::load_system(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/nordic5_synth.toml"))).unwrap();
    let effective = model::apply_policy(&loaded.system, &loaded.policy);
    let grid = bilevel::PlanGrid::uniform(&loaded.system, vec![0.0, 9000.0]).unwrap();
    let mut st = bilevel::EnumSettings::default();
    st.workers = 4;
    st.index_range = Some((0, 32));   // 32 candidates to estimate per-candidate cost
    let t = std::time::Instant::now();
    let sol = bilevel::solve_bilevel_enum(&loaded.system, &effective, &grid, &st).unwrap();
    println!("32 candidates in {:?} -> est for 1024: {:?}; best welfare {:.8e} solved {} failed {}",
        t.elapsed(), t.elapsed() * 32, sol.factors.welfare, sol.candidates_solved, sol.candidates_failed);
}
