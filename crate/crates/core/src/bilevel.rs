//! Upper-level transmission expansion: exact solution through the
//! centralized-equivalence route, and grid enumeration over candidate plans
//! with budget pruning, fixed-base warm starts, checkpointing and a
//! deterministic reduction.
//!
//! Determinism: every candidate is warm-started from the zero-plan base
//! solution with the penalty reset, so its result does not depend on which
//! worker evaluates it or in what order; the best-plan reduction scans
//! records in index order with welfare ties (1e-9 relative) broken by the
//! lexicographically smallest plan, which in index order is the smallest
//! index.

use crate::builder::{self, BuildOptions, RowId};
use crate::equilibrium::{
    self, output_factors, ExpansionPlan, MarketError, MarketOutcome, OutputFactors,
};
use crate::model::{EffectiveParameters, EnergySystem};
use crate::solver::{SolveStatus, SolverSettings, Workspace};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

/// Candidate expansion levels per line (MW); ascending, starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanGrid {
    pub levels: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("grid covers {found} lines, system has {expected}")]
    WrongLineCount { expected: usize, found: usize },
    #[error("line {line}: levels must start at 0")]
    MissingZero { line: usize },
    #[error("line {line}: levels must be nonnegative and strictly increasing")]
    NotIncreasing { line: usize },
    #[error("line {line}: at least one level required")]
    Empty { line: usize },
}

impl PlanGrid {
    /// The same level list on every line.
    pub fn uniform(system: &EnergySystem, levels: Vec<f64>) -> Result<PlanGrid, GridError> {
        let grid = PlanGrid {
            levels: vec![levels; system.lines.len()],
        };
        grid.validate(system)?;
        Ok(grid)
    }

    pub fn validate(&self, system: &EnergySystem) -> Result<(), GridError> {
        if self.levels.len() != system.lines.len() {
            return Err(GridError::WrongLineCount {
                expected: system.lines.len(),
                found: self.levels.len(),
            });
        }
        for (line, levels) in self.levels.iter().enumerate() {
            if levels.is_empty() {
                return Err(GridError::Empty { line });
            }
            if levels[0] != 0.0 {
                return Err(GridError::MissingZero { line });
            }
            for pair in levels.windows(2) {
                if !(pair[1] > pair[0]) {
                    return Err(GridError::NotIncreasing { line });
                }
            }
        }
        Ok(())
    }

    /// Cartesian product size, before any pruning.
    pub fn total_candidates(&self) -> u128 {
        self.levels.iter().map(|l| l.len() as u128).product()
    }

    /// Decodes a lexicographic index (line 0 most significant) into per-line
    /// additions.
    pub fn additions_for_index(&self, index: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.levels.len()];
        let mut rem = index as u128;
        for line in (0..self.levels.len()).rev() {
            let len = self.levels[line].len() as u128;
            out[line] = self.levels[line][(rem % len) as usize];
            rem /= len;
        }
        out
    }
}

/// Streams the budget-feasible candidate plans in lexicographic order,
/// counting generated (pre-pruning) and pruned plans as it goes.
pub struct CandidatePlans<'a> {
    system: &'a EnergySystem,
    grid: &'a PlanGrid,
    teb: f64,
    next_index: u64,
    total: u128,
    pub generated: u64,
    pub pruned: u64,
}

pub fn candidate_plans<'a>(
    system: &'a EnergySystem,
    grid: &'a PlanGrid,
    teb: f64,
) -> CandidatePlans<'a> {
    CandidatePlans {
        system,
        grid,
        teb,
        next_index: 0,
        total: grid.total_candidates(),
        generated: 0,
        pruned: 0,
    }
}

impl Iterator for CandidatePlans<'_> {
    type Item = (u64, ExpansionPlan);

    fn next(&mut self) -> Option<(u64, ExpansionPlan)> {
        while (self.next_index as u128) < self.total {
            let index = self.next_index;
            self.next_index += 1;
            self.generated += 1;
            let additions = self.grid.additions_for_index(index);
            let plan = ExpansionPlan::new(self.system, additions).expect("grid plan");
            if plan.budget_charge(self.system) <= self.teb {
                return Some((index, plan));
            }
            self.pruned += 1;
        }
        None
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: u64,
    pub additions: Vec<f64>,
    pub welfare: f64,
    pub vre_share: f64,
    pub generation: f64,
    pub solved: bool,
}

#[derive(Debug, Clone)]
pub struct EnumSettings {
    pub solver: SolverSettings,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    /// Refuse to enumerate more than this many candidates (shard instead).
    pub max_candidates: u64,
    /// Restrict to candidate indices in `[start, end)` for sharding.
    pub index_range: Option<(u64, u64)>,
    /// Append evaluated candidates to this file and resume from it.
    pub checkpoint: Option<PathBuf>,
    /// Flush the checkpoint after this many records.
    pub checkpoint_every: usize,
    /// Cooperative stop flag; a run stopped early exits with a valid
    /// checkpoint.
    pub stop: Option<Arc<AtomicBool>>,
    /// Stop after evaluating this many candidates (deterministic
    /// interruption for resume tests).
    pub stop_after: Option<u64>,
    /// Keep the per-candidate log in the returned solution.
    pub keep_log: bool,
}

impl Default for EnumSettings {
    fn default() -> Self {
        EnumSettings {
            solver: SolverSettings::default(),
            workers: 0,
            max_candidates: 1 << 20,
            index_range: None,
            checkpoint: None,
            checkpoint_every: 64,
            stop: None,
            stop_after: None,
            keep_log: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BilevelSolution {
    pub best_plan: ExpansionPlan,
    pub outcome: MarketOutcome,
    pub factors: OutputFactors,
    /// Grid points visited (pre-pruning, within the index range).
    pub candidates_generated: u64,
    pub candidates_pruned: u64,
    pub candidates_solved: u64,
    pub candidates_failed: u64,
    pub log: Option<Vec<CandidateRecord>>,
}

#[derive(Debug, thiserror::Error)]
pub enum BilevelError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("{total} candidates exceed the configured cap {cap}; raise it or shard by index range")]
    TooManyCandidates { total: u128, cap: u64 },
    #[error("every candidate solve failed")]
    AllFailed,
    #[error("no budget-feasible candidate exists")]
    NoFeasibleCandidate,
    #[error("stopped after {evaluated} candidates; the checkpoint is valid for resuming")]
    Interrupted { evaluated: u64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(
        "centralized/market equivalence failed: centralized {centralized}, re-derived {rederived}"
    )]
    EquivalenceFailed { centralized: f64, rederived: f64 },
}

/// Exhaustively evaluates the budget-feasible plans on the grid and returns
/// the welfare-maximizing one.
pub fn solve_bilevel_enum(
    system: &EnergySystem,
    effective: &EffectiveParameters,
    grid: &PlanGrid,
    settings: &EnumSettings,
) -> Result<BilevelSolution, BilevelError> {
    grid.validate(system)?;
    let total = grid.total_candidates();
    let (range_start, range_end) = match settings.index_range {
        Some((a, b)) => (a.min(total as u64), (b as u128).min(total) as u64),
        None => (0, total.min(u64::MAX as u128) as u64),
    };
    if (range_end.saturating_sub(range_start)) as u128 > settings.max_candidates as u128 {
        return Err(BilevelError::TooManyCandidates {
            total: (range_end - range_start) as u128,
            cap: settings.max_candidates,
        });
    }

    // resume state
    let mut done: Vec<CandidateRecord> = Vec::new();
    if let Some(path) = &settings.checkpoint {
        if path.exists() {
            done = read_checkpoint(path, system, grid)?;
        }
    }
    let done_indices: HashSet<u64> = done.iter().map(|r| r.index).collect();

    // enumerate, prune, skip already-done
    let mut generated = 0u64;
    let mut pruned = 0u64;
    let mut todo: Vec<(u64, ExpansionPlan)> = Vec::new();
    for index in range_start..range_end {
        generated += 1;
        let additions = grid.additions_for_index(index);
        let plan = ExpansionPlan::new(system, additions).expect("grid plan");
        if plan.budget_charge(system) > effective.teb {
            pruned += 1;
            continue;
        }
        if !done_indices.contains(&index) {
            todo.push((index, plan));
        }
    }
    if todo.is_empty() && done.is_empty() {
        return Err(BilevelError::NoFeasibleCandidate);
    }

    // base problem and solution for deterministic warm starts
    let zero_plan = ExpansionPlan::zero(system);
    let (base_qp, base_map) =
        builder::build_lower_level(system, effective, &zero_plan, &BuildOptions::default())
            .map_err(MarketError::from)?;
    let base_solution = {
        let mut ws =
            Workspace::new(&base_qp, settings.solver.clone()).map_err(MarketError::from)?;
        ws.solve(None)
    };

    // flow-bound rows to rewrite per candidate: (row, hours, line)
    let mut flow_rows: Vec<(usize, f64, usize)> = Vec::new();
    for s in 0..system.num_scenarios() {
        for t in 0..system.num_periods() {
            let hours = system.periods[t].hours;
            for line in 0..system.lines.len() {
                for row_id in [
                    RowId::FlowUpper { s, t, line },
                    RowId::FlowLower { s, t, line },
                ] {
                    let r = base_map.row_index_of(row_id).unwrap();
                    flow_rows.push((r, hours, line));
                }
            }
        }
    }

    let checkpoint_writer = match &settings.checkpoint {
        Some(path) => Some(Mutex::new(open_checkpoint(
            path,
            system,
            grid,
            !done.is_empty(),
            settings.checkpoint_every,
        )?)),
        None => None,
    };
    let evaluated = AtomicU64::new(0);
    let stopped = AtomicBool::new(false);
    let workers = if settings.workers == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        settings.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");

    let chunk_size = todo.len().div_ceil(workers.max(1)).max(1);
    let results: Vec<Vec<CandidateRecord>> = pool.install(|| {
        use rayon::prelude::*;
        todo.par_chunks(chunk_size)
            .map(|chunk| {
                let mut ws = match Workspace::new(&base_qp, settings.solver.clone()) {
                    Ok(ws) => ws,
                    Err(_) => return Vec::new(),
                };
                let row_lower = base_qp.row_lower.clone();
                let mut row_upper = base_qp.row_upper.clone();
                let mut out = Vec::with_capacity(chunk.len());
                for (index, plan) in chunk {
                    if stopped.load(Ordering::Relaxed)
                        || settings
                            .stop
                            .as_ref()
                            .is_some_and(|s| s.load(Ordering::Relaxed))
                    {
                        stopped.store(true, Ordering::Relaxed);
                        break;
                    }
                    for &(r, hours, line) in &flow_rows {
                        row_upper[r] =
                            hours * (system.lines[line].capacity + plan.additions[line]);
                    }
                    ws.set_row_bounds(&row_lower, &row_upper).expect("bounds");
                    ws.reset_penalty();
                    let solution = ws.solve(Some(&base_solution));
                    let record = if solution.status == SolveStatus::Optimal {
                        let outcome =
                            equilibrium::outcome_from_solution(system, &base_map, &solution);
                        let factors = output_factors(system, effective, plan, &outcome);
                        CandidateRecord {
                            index: *index,
                            additions: plan.additions.clone(),
                            welfare: factors.welfare,
                            vre_share: factors.vre_share,
                            generation: factors.total_generation,
                            solved: true,
                        }
                    } else {
                        CandidateRecord {
                            index: *index,
                            additions: plan.additions.clone(),
                            welfare: f64::NAN,
                            vre_share: f64::NAN,
                            generation: f64::NAN,
                            solved: false,
                        }
                    };
                    if let Some(writer) = &checkpoint_writer {
                        writer.lock().unwrap().write(&record);
                    }
                    let n = evaluated.fetch_add(1, Ordering::Relaxed) + 1;
                    if let Some(limit) = settings.stop_after {
                        if n >= limit {
                            stopped.store(true, Ordering::Relaxed);
                        }
                    }
                    out.push(record);
                }
                out
            })
            .collect()
    });

    let mut records = done;
    for chunk in results {
        records.extend(chunk);
    }
    if let Some(writer) = checkpoint_writer {
        writer.into_inner().unwrap().flush();
    }
    if stopped.load(Ordering::Relaxed) {
        return Err(BilevelError::Interrupted {
            evaluated: evaluated.load(Ordering::Relaxed),
        });
    }

    finish_enum(system, effective, settings, records, generated, pruned)
}

/// Deterministic reduction and final re-solve of the winning plan.
fn finish_enum(
    system: &EnergySystem,
    effective: &EffectiveParameters,
    settings: &EnumSettings,
    mut records: Vec<CandidateRecord>,
    generated: u64,
    pruned: u64,
) -> Result<BilevelSolution, BilevelError> {
    records.sort_by_key(|r| r.index);
    let solved = records.iter().filter(|r| r.solved).count() as u64;
    let failed = records.len() as u64 - solved;
    let mut best: Option<&CandidateRecord> = None;
    for record in records.iter().filter(|r| r.solved) {
        best = Some(match best {
            None => record,
            Some(incumbent) => {
                let tie = (record.welfare - incumbent.welfare).abs()
                    <= 1e-9 * incumbent.welfare.abs().max(record.welfare.abs()).max(1.0);
                if !tie && record.welfare > incumbent.welfare {
                    record
                } else {
                    incumbent
                }
            }
        });
    }
    let best = best.ok_or(BilevelError::AllFailed)?;
    let best_plan = ExpansionPlan::new(system, best.additions.clone()).expect("best plan");
    let outcome = equilibrium::solve_market(system, effective, &best_plan, &settings.solver)?;
    let factors = output_factors(system, effective, &best_plan, &outcome);
    Ok(BilevelSolution {
        best_plan,
        outcome,
        factors,
        candidates_generated: generated,
        candidates_pruned: pruned,
        candidates_solved: solved,
        candidates_failed: failed,
        log: settings.keep_log.then_some(records),
    })
}

/// Solves the upper level exactly via the centralized program, then
/// re-derives the market outcome at the optimal plan and asserts the
/// equivalence (1e-5 relative).
pub fn solve_bilevel_exact(
    system: &EnergySystem,
    effective: &EffectiveParameters,
    settings: &SolverSettings,
) -> Result<BilevelSolution, BilevelError> {
    let central = equilibrium::solve_central(system, effective, settings)?;
    let outcome = equilibrium::solve_market(system, effective, &central.plan, settings)?;
    let factors = output_factors(system, effective, &central.plan, &outcome);
    let scale = central.objective_value.abs().max(1.0);
    if (factors.welfare - central.objective_value).abs() > 1e-5 * scale {
        return Err(BilevelError::EquivalenceFailed {
            centralized: central.objective_value,
            rederived: factors.welfare,
        });
    }
    Ok(BilevelSolution {
        best_plan: central.plan,
        outcome,
        factors,
        candidates_generated: 0,
        candidates_pruned: 0,
        candidates_solved: 1,
        candidates_failed: 0,
        log: None,
    })
}

// ---------------------------------------------------------------------------
// checkpoint file: header lines with '#', then one comma-separated record
// per evaluated candidate: index, welfare, vre_share, generation, status,
// additions... Floats carry 17 significant digits so resumed runs reproduce
// the uninterrupted result bit for bit.
// ---------------------------------------------------------------------------

struct CheckpointWriter {
    file: std::io::BufWriter<std::fs::File>,
    since_flush: usize,
    every: usize,
}

impl CheckpointWriter {
    fn write(&mut self, record: &CandidateRecord) {
        let mut line = format!(
            "{},{},{},{},{}",
            record.index,
            fmt17(record.welfare),
            fmt17(record.vre_share),
            fmt17(record.generation),
            if record.solved { "ok" } else { "failed" }
        );
        for a in &record.additions {
            line.push(',');
            line.push_str(&fmt17(*a));
        }
        let _ = writeln!(self.file, "{line}");
        self.since_flush += 1;
        if self.since_flush >= self.every {
            let _ = self.file.flush();
            self.since_flush = 0;
        }
    }

    fn flush(mut self) {
        let _ = self.file.flush();
    }
}

fn fmt17(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn checkpoint_header(system: &EnergySystem, grid: &PlanGrid) -> String {
    let mut grid_text = String::new();
    for (i, levels) in grid.levels.iter().enumerate() {
        if i > 0 {
            grid_text.push(';');
        }
        grid_text.push_str(
            &levels
                .iter()
                .map(|v| fmt17(*v))
                .collect::<Vec<_>>()
                .join(","),
        );
    }
    format!(
        "# gridplan-enum-checkpoint 1\n# lines {}\n# grid {}\n",
        system.lines.len(),
        grid_text
    )
}

fn open_checkpoint(
    path: &PathBuf,
    system: &EnergySystem,
    grid: &PlanGrid,
    resuming: bool,
    every: usize,
) -> Result<CheckpointWriter, BilevelError> {
    let file = if resuming {
        std::fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| BilevelError::Checkpoint(format!("{}: {e}", path.display())))?
    } else {
        let mut f = std::fs::File::create(path)
            .map_err(|e| BilevelError::Checkpoint(format!("{}: {e}", path.display())))?;
        f.write_all(checkpoint_header(system, grid).as_bytes())
            .map_err(|e| BilevelError::Checkpoint(format!("{}: {e}", path.display())))?;
        f
    };
    Ok(CheckpointWriter {
        file: std::io::BufWriter::new(file),
        since_flush: 0,
        every: every.max(1),
    })
}

fn read_checkpoint(
    path: &PathBuf,
    system: &EnergySystem,
    grid: &PlanGrid,
) -> Result<Vec<CandidateRecord>, BilevelError> {
    let file = std::fs::File::open(path)
        .map_err(|e| BilevelError::Checkpoint(format!("{}: {e}", path.display())))?;
    let reader = std::io::BufReader::new(file);
    let expected_header = checkpoint_header(system, grid);
    let mut expected_lines = expected_header.lines();
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| BilevelError::Checkpoint(format!("{}: {e}", path.display())))?;
        if line.starts_with('#') {
            match expected_lines.next() {
                Some(expect) if expect == line => continue,
                _ => {
                    return Err(BilevelError::Checkpoint(format!(
                        "{}:{}: header does not match this system and grid",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 + system.lines.len() {
            return Err(BilevelError::Checkpoint(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                lineno + 1,
                5 + system.lines.len(),
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, BilevelError> {
            if s == "nan" {
                return Ok(f64::NAN);
            }
            s.parse::<f64>().map_err(|_| {
                BilevelError::Checkpoint(format!(
                    "{}:{}: bad number {s}",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        let index: u64 = fields[0].parse().map_err(|_| {
            BilevelError::Checkpoint(format!("{}:{}: bad index", path.display(), lineno + 1))
        })?;
        let mut additions = Vec::with_capacity(system.lines.len());
        for f in &fields[5..] {
            additions.push(parse(f)?);
        }
        records.push(CandidateRecord {
            index,
            additions,
            welfare: parse(fields[1])?,
            vre_share: parse(fields[2])?,
            generation: parse(fields[3])?,
            solved: fields[4] == "ok",
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::apply_policy;
    use crate::testing::{three_node_policy, three_node_system};

    fn enum_settings() -> EnumSettings {
        EnumSettings {
            keep_log: true,
            ..EnumSettings::default()
        }
    }

    #[test]
    fn singleton_grid_yields_one_plan() {
        let system = three_node_system();
        let grid = PlanGrid::uniform(&system, vec![0.0]).unwrap();
        let plans: Vec<_> = candidate_plans(&system, &grid, f64::INFINITY).collect();
        assert_eq!(plans.len(), 1);
        assert!(plans[0].1.additions.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn budget_prunes_candidates() {
        // 2 lines, levels {0, 100}, unit cost 1, budget 150:
        // (0,0), (0,100), (100,0) survive
        let mut system = three_node_system();
        system.lines.pop();
        for l in system.lines.iter_mut() {
            l.investment_cost = 1.0;
        }
        let grid = PlanGrid::uniform(&system, vec![0.0, 100.0]).unwrap();
        let mut it = candidate_plans(&system, &grid, 150.0);
        let kept: Vec<_> = it.by_ref().map(|(i, _)| i).collect();
        assert_eq!(kept, vec![0, 1, 2]);
        assert_eq!(it.generated, 4);
        assert_eq!(it.pruned, 1);
    }

    #[test]
    fn ten_lines_four_levels_is_1048576() {
        let levels: Vec<Vec<f64>> = vec![vec![0.0, 3000.0, 6000.0, 9000.0]; 10];
        let grid = PlanGrid { levels };
        assert_eq!(grid.total_candidates(), 1_048_576);
    }

    #[test]
    fn grid_validation_rejects_bad_levels() {
        let system = three_node_system();
        assert!(matches!(
            PlanGrid::uniform(&system, vec![100.0, 200.0]),
            Err(GridError::MissingZero { .. })
        ));
        assert!(matches!(
            PlanGrid::uniform(&system, vec![0.0, 200.0, 200.0]),
            Err(GridError::NotIncreasing { .. })
        ));
        assert!(matches!(
            PlanGrid::uniform(&system, vec![]),
            Err(GridError::Empty { .. })
        ));
    }

    #[test]
    fn enum_matches_brute_force_on_small_grid() {
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let grid = PlanGrid::uniform(&system, vec![0.0, 500.0]).unwrap();
        let solution = solve_bilevel_enum(&system, &effective, &grid, &enum_settings()).unwrap();
        // brute force: sequential evaluation of all 8 candidates
        let mut best_welfare = f64::NEG_INFINITY;
        let mut best_index = 0u64;
        for (index, plan) in candidate_plans(&system, &grid, effective.teb) {
            let outcome =
                equilibrium::solve_market(&system, &effective, &plan, &SolverSettings::default())
                    .unwrap();
            let factors = output_factors(&system, &effective, &plan, &outcome);
            if factors.welfare > best_welfare + 1e-9 * best_welfare.abs().max(1.0) {
                best_welfare = factors.welfare;
                best_index = index;
            }
        }
        let expect = grid.additions_for_index(best_index);
        assert_eq!(solution.best_plan.additions, expect);
        assert!((solution.factors.welfare - best_welfare).abs() <= 1e-6 * best_welfare.abs());
        assert_eq!(solution.candidates_generated, 8);
    }

    #[test]
    fn zero_budget_forces_zero_plan() {
        let system = three_node_system();
        let mut policy = three_node_policy();
        policy.teb = 0.0;
        let effective = apply_policy(&system, &policy);
        let grid = PlanGrid::uniform(&system, vec![0.0, 1000.0]).unwrap();
        let solution = solve_bilevel_enum(&system, &effective, &grid, &enum_settings()).unwrap();
        assert!(solution.best_plan.additions.iter().all(|&a| a == 0.0));
        assert_eq!(solution.candidates_pruned, 7);
        // welfare equals the fixed-zero-plan market welfare
        let plan = ExpansionPlan::zero(&system);
        let outcome =
            equilibrium::solve_market(&system, &effective, &plan, &SolverSettings::default())
                .unwrap();
        let factors = output_factors(&system, &effective, &plan, &outcome);
        assert!((solution.factors.welfare - factors.welfare).abs() <= 1e-6);
    }

    #[test]
    fn exact_dominates_enum() {
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let exact = solve_bilevel_exact(&system, &effective, &SolverSettings::default()).unwrap();
        let grid = PlanGrid::uniform(&system, vec![0.0, 250.0, 500.0]).unwrap();
        let enumerated = solve_bilevel_enum(&system, &effective, &grid, &enum_settings()).unwrap();
        assert!(
            exact.factors.welfare
                >= enumerated.factors.welfare - 1e-6 * enumerated.factors.welfare.abs()
        );
    }

    #[test]
    fn grid_refinement_never_hurts() {
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let coarse = PlanGrid::uniform(&system, vec![0.0, 600.0]).unwrap();
        let fine = PlanGrid::uniform(&system, vec![0.0, 300.0, 600.0]).unwrap();
        let a = solve_bilevel_enum(&system, &effective, &coarse, &enum_settings()).unwrap();
        let b = solve_bilevel_enum(&system, &effective, &fine, &enum_settings()).unwrap();
        assert!(b.factors.welfare >= a.factors.welfare - 1e-9 * a.factors.welfare.abs());
    }

    #[test]
    fn workers_do_not_change_the_result() {
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let grid = PlanGrid::uniform(&system, vec![0.0, 400.0]).unwrap();
        let mut one = enum_settings();
        one.workers = 1;
        let mut four = enum_settings();
        four.workers = 4;
        let a = solve_bilevel_enum(&system, &effective, &grid, &one).unwrap();
        let b = solve_bilevel_enum(&system, &effective, &grid, &four).unwrap();
        assert_eq!(a.best_plan.additions, b.best_plan.additions);
        assert_eq!(a.factors.welfare.to_bits(), b.factors.welfare.to_bits());
        let la = a.log.unwrap();
        let lb = b.log.unwrap();
        assert_eq!(la.len(), lb.len());
        for (ra, rb) in la.iter().zip(&lb) {
            assert_eq!(ra.index, rb.index);
            assert_eq!(ra.welfare.to_bits(), rb.welfare.to_bits());
        }
    }

    #[test]
    fn checkpoint_interrupt_and_resume_reproduce_the_run() {
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let grid = PlanGrid::uniform(&system, vec![0.0, 400.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("enum.ckpt");

        let mut uninterrupted = enum_settings();
        uninterrupted.workers = 1;
        let reference = solve_bilevel_enum(&system, &effective, &grid, &uninterrupted).unwrap();

        let mut first = enum_settings();
        first.workers = 1;
        first.checkpoint = Some(ckpt.clone());
        first.stop_after = Some(3);
        let err = solve_bilevel_enum(&system, &effective, &grid, &first).unwrap_err();
        assert!(matches!(err, BilevelError::Interrupted { evaluated: 3 }));

        let mut second = enum_settings();
        second.workers = 1;
        second.checkpoint = Some(ckpt);
        let resumed = solve_bilevel_enum(&system, &effective, &grid, &second).unwrap();
        assert_eq!(resumed.best_plan.additions, reference.best_plan.additions);
        assert_eq!(
            resumed.factors.welfare.to_bits(),
            reference.factors.welfare.to_bits()
        );
    }
}
