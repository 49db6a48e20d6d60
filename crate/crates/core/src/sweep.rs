//! Policy sensitivity experiments: univariate sweeps and full-factorial
//! low/high designs over the transmission budget, generation budgets,
//! carbon-tax vectors and VRE incentive, with baseline deltas.
//!
//! Delta conventions: VRE-share deltas are percentage points (the share
//! difference times 100); welfare and generation deltas are percent of the
//! baseline value. Output headers carry both units.

use crate::bilevel::{self, BilevelError, EnumSettings, PlanGrid};
use crate::equilibrium::{self, output_factors, OutputFactors};
use crate::model::{apply_policy, validate_policy, EnergySystem, PolicySet};
use crate::solver::SolverSettings;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// One axis varies; every other axis must hold exactly one value.
    Univariate { axis: String },
    FullFactorial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSolverChoice {
    Centralized,
    BilevelExact,
    /// Grid enumeration with these levels on every line.
    BilevelEnum { grid: Vec<f64> },
}

/// Axis values for the four policy instruments. Vector-valued axes carry
/// one full vector per level (budgets per producer, taxes per conventional
/// kind, incentives per node).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDesign {
    pub mode: SweepMode,
    pub solver: SweepSolverChoice,
    pub teb: Vec<f64>,
    pub geb: Vec<Vec<f64>>,
    pub carbon_tax: Vec<Vec<f64>>,
    pub incentive: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid design: {0}")]
    BadDesign(String),
    #[error("baseline solve failed: {0}")]
    BaselineFailed(String),
    #[error("policy at point {point} is invalid: {report}")]
    BadPolicy { point: usize, report: String },
    #[error("report has no baseline")]
    MissingBaseline,
}

impl SweepDesign {
    pub fn axis_names() -> [&'static str; 4] {
        ["teb", "geb", "carbon_tax", "incentive"]
    }

    fn axis_len(&self, name: &str) -> usize {
        match name {
            "teb" => self.teb.len(),
            "geb" => self.geb.len(),
            "carbon_tax" => self.carbon_tax.len(),
            "incentive" => self.incentive.len(),
            _ => 0,
        }
    }

    pub fn validate(&self, system: &EnergySystem) -> Result<(), SweepError> {
        for name in Self::axis_names() {
            if self.axis_len(name) == 0 {
                return Err(SweepError::BadDesign(format!("axis {name} is empty")));
            }
        }
        if let SweepMode::Univariate { axis } = &self.mode {
            if !Self::axis_names().contains(&axis.as_str()) {
                return Err(SweepError::BadDesign(format!("unknown axis {axis}")));
            }
            for name in Self::axis_names() {
                if name != axis && self.axis_len(name) != 1 {
                    return Err(SweepError::BadDesign(format!(
                        "univariate sweep over {axis}: axis {name} must hold exactly one value"
                    )));
                }
            }
        }
        for (i, g) in self.geb.iter().enumerate() {
            if g.len() != system.producers.len() {
                return Err(SweepError::BadDesign(format!(
                    "geb[{i}] holds {} budgets for {} producers",
                    g.len(),
                    system.producers.len()
                )));
            }
        }
        for (i, t) in self.carbon_tax.iter().enumerate() {
            if t.len() != system.conv_kinds.len() {
                return Err(SweepError::BadDesign(format!(
                    "carbon_tax[{i}] holds {} taxes for {} conventional kinds",
                    t.len(),
                    system.conv_kinds.len()
                )));
            }
        }
        for (i, v) in self.incentive.iter().enumerate() {
            if v.len() != system.num_nodes() {
                return Err(SweepError::BadDesign(format!(
                    "incentive[{i}] holds {} values for {} nodes",
                    v.len(),
                    system.num_nodes()
                )));
            }
        }
        Ok(())
    }

    /// Design points in deterministic order: the swept axis in order for
    /// univariate mode, the lexicographic product (teb, geb, tax,
    /// incentive) for full factorial.
    pub fn points(&self) -> Vec<(usize, usize, usize, usize)> {
        match &self.mode {
            SweepMode::Univariate { axis } => {
                let n = self.axis_len(axis);
                (0..n)
                    .map(|i| match axis.as_str() {
                        "teb" => (i, 0, 0, 0),
                        "geb" => (0, i, 0, 0),
                        "carbon_tax" => (0, 0, i, 0),
                        _ => (0, 0, 0, i),
                    })
                    .collect()
            }
            SweepMode::FullFactorial => {
                let mut out = Vec::new();
                for a in 0..self.teb.len() {
                    for b in 0..self.geb.len() {
                        for c in 0..self.carbon_tax.len() {
                            for d in 0..self.incentive.len() {
                                out.push((a, b, c, d));
                            }
                        }
                    }
                }
                out
            }
        }
    }

    pub fn policy_at(&self, point: (usize, usize, usize, usize)) -> PolicySet {
        PolicySet {
            teb: self.teb[point.0],
            geb: self.geb[point.1].clone(),
            carbon_tax: self.carbon_tax[point.2].clone(),
            vre_incentive: self.incentive[point.3].clone(),
        }
    }
}

/// Baseline-relative differences; `None` marks an undefined ratio (zero
/// baseline).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineDeltas {
    /// Percentage points of VRE share.
    pub vre_share_pp: f64,
    /// Percent of baseline welfare.
    pub welfare_pct: Option<f64>,
    /// Percent of baseline generation.
    pub generation_pct: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub id: usize,
    pub teb: f64,
    pub geb: Vec<f64>,
    pub carbon_tax: Vec<f64>,
    pub incentive: Vec<f64>,
    pub factors: Option<OutputFactors>,
    /// Line additions of the solved plan.
    pub plan: Option<Vec<f64>>,
    pub solver_iterations: usize,
    pub error: Option<String>,
    pub delta: Option<BaselineDeltas>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub design: SweepDesign,
    pub baseline: SweepRecord,
    pub records: Vec<SweepRecord>,
    /// False when any point failed to solve.
    pub complete: bool,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub solver: SolverSettings,
    pub workers: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            solver: SolverSettings::default(),
            workers: 0,
        }
    }
}

fn solve_point(
    system: &EnergySystem,
    policy: &PolicySet,
    choice: &SweepSolverChoice,
    solver: &SolverSettings,
) -> Result<(OutputFactors, Vec<f64>, usize), String> {
    let effective = apply_policy(system, policy);
    match choice {
        SweepSolverChoice::Centralized => {
            let central = equilibrium::solve_central(system, &effective, solver)
                .map_err(|e| e.to_string())?;
            let factors =
                output_factors(system, &effective, &central.plan, &central.outcome);
            Ok((
                factors,
                central.plan.additions.clone(),
                central.outcome.stats.iterations,
            ))
        }
        SweepSolverChoice::BilevelExact => {
            let solution = bilevel::solve_bilevel_exact(system, &effective, solver)
                .map_err(|e| e.to_string())?;
            Ok((
                solution.factors,
                solution.best_plan.additions.clone(),
                solution.outcome.stats.iterations,
            ))
        }
        SweepSolverChoice::BilevelEnum { grid } => {
            let grid = PlanGrid::uniform(system, grid.clone()).map_err(BilevelError::from)
                .map_err(|e| e.to_string())?;
            let settings = EnumSettings {
                solver: solver.clone(),
                ..EnumSettings::default()
            };
            let solution = bilevel::solve_bilevel_enum(system, &effective, &grid, &settings)
                .map_err(|e| e.to_string())?;
            Ok((
                solution.factors,
                solution.best_plan.additions.clone(),
                solution.outcome.stats.iterations,
            ))
        }
    }
}

fn deltas_against(baseline: &OutputFactors, point: &OutputFactors) -> BaselineDeltas {
    BaselineDeltas {
        vre_share_pp: (point.vre_share - baseline.vre_share) * 100.0,
        welfare_pct: if baseline.welfare.abs() > 1e-12 {
            Some((point.welfare - baseline.welfare) / baseline.welfare.abs() * 100.0)
        } else {
            None
        },
        generation_pct: if baseline.total_generation > 1e-9 {
            Some(
                (point.total_generation - baseline.total_generation) / baseline.total_generation
                    * 100.0,
            )
        } else {
            None
        },
    }
}

/// Runs every design point plus the all-zero baseline with identical solver
/// settings. Point failures are recorded, not fatal; a baseline failure is.
pub fn run_sweep(
    system: &EnergySystem,
    design: &SweepDesign,
    settings: &SweepSettings,
) -> Result<SweepReport, SweepError> {
    design.validate(system)?;
    let points = design.points();
    for (id, point) in points.iter().enumerate() {
        let policy = design.policy_at(*point);
        let report = validate_policy(system, &policy);
        if !report.passed() {
            return Err(SweepError::BadPolicy {
                point: id,
                report: report.to_string(),
            });
        }
    }

    let baseline_policy = PolicySet::zero(system);
    let baseline = solve_point(system, &baseline_policy, &design.solver, &settings.solver)
        .map_err(SweepError::BaselineFailed)?;
    let baseline_record = SweepRecord {
        id: usize::MAX,
        teb: 0.0,
        geb: baseline_policy.geb.clone(),
        carbon_tax: baseline_policy.carbon_tax.clone(),
        incentive: baseline_policy.vre_incentive.clone(),
        factors: Some(baseline.0),
        plan: Some(baseline.1),
        solver_iterations: baseline.2,
        error: None,
        delta: Some(BaselineDeltas {
            vre_share_pp: 0.0,
            welfare_pct: Some(0.0),
            generation_pct: Some(0.0),
        }),
    };

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
    let baseline_factors = baseline.0;
    let records: Vec<SweepRecord> = pool.install(|| {
        use rayon::prelude::*;
        points
            .par_iter()
            .enumerate()
            .map(|(id, point)| {
                let policy = design.policy_at(*point);
                match solve_point(system, &policy, &design.solver, &settings.solver) {
                    Ok((factors, plan, iterations)) => SweepRecord {
                        id,
                        teb: policy.teb,
                        geb: policy.geb,
                        carbon_tax: policy.carbon_tax,
                        incentive: policy.vre_incentive,
                        delta: Some(deltas_against(&baseline_factors, &factors)),
                        factors: Some(factors),
                        plan: Some(plan),
                        solver_iterations: iterations,
                        error: None,
                    },
                    Err(message) => SweepRecord {
                        id,
                        teb: policy.teb,
                        geb: policy.geb,
                        carbon_tax: policy.carbon_tax,
                        incentive: policy.vre_incentive,
                        factors: None,
                        plan: None,
                        solver_iterations: 0,
                        error: Some(message),
                        delta: None,
                    },
                }
            })
            .collect()
    });

    let complete = records.iter().all(|r| r.error.is_none());
    Ok(SweepReport {
        design: design.clone(),
        baseline: baseline_record,
        records,
        complete,
    })
}

/// Recomputes every record's deltas from the stored absolute factors.
/// Fed the published absolutes, this reproduces the published differences.
pub fn compare_to_baseline(report: &SweepReport) -> Result<Vec<BaselineDeltas>, SweepError> {
    let baseline = report
        .baseline
        .factors
        .as_ref()
        .ok_or(SweepError::MissingBaseline)?;
    Ok(report
        .records
        .iter()
        .map(|r| match &r.factors {
            Some(f) => deltas_against(baseline, f),
            None => BaselineDeltas {
                vre_share_pp: f64::NAN,
                welfare_pct: None,
                generation_pct: None,
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::three_node_system;

    fn record_with(id: usize, factors: OutputFactors) -> SweepRecord {
        SweepRecord {
            id,
            teb: 0.0,
            geb: vec![],
            carbon_tax: vec![],
            incentive: vec![],
            factors: Some(factors),
            plan: None,
            solver_iterations: 0,
            error: None,
            delta: None,
        }
    }

    fn factors(welfare: f64, vre_share: f64, generation: f64) -> OutputFactors {
        OutputFactors {
            welfare,
            vre_share,
            total_generation: generation,
            degenerate_share: false,
        }
    }

    #[test]
    fn published_delta_arithmetic_reproduced() {
        // baseline share 35.84%; the four published comparisons
        let baseline = factors(1.0e9, 0.3584, 2.0e8);
        let design = SweepDesign {
            mode: SweepMode::FullFactorial,
            solver: SweepSolverChoice::Centralized,
            teb: vec![0.0],
            geb: vec![vec![]],
            carbon_tax: vec![vec![]],
            incentive: vec![vec![]],
        };
        let report = SweepReport {
            design,
            baseline: record_with(usize::MAX, baseline),
            records: vec![
                record_with(0, factors(1.6675e9, 0.8916, 2.0e8 * 2.0541)),
                record_with(1, factors(1.5869e9, 0.6384, 2.0e8 * 1.9994)),
            ],
            complete: true,
        };
        let deltas = compare_to_baseline(&report).unwrap();
        // 89.16 - 35.84 = 53.32 percentage points
        assert!((deltas[0].vre_share_pp - 53.32).abs() < 1e-9);
        // 63.84 - 35.84 = 28.00 percentage points
        assert!((deltas[1].vre_share_pp - 28.00).abs() < 1e-9);
        // welfare deltas 66.75% and 58.69%; their difference is 8.06
        let w0 = deltas[0].welfare_pct.unwrap();
        let w1 = deltas[1].welfare_pct.unwrap();
        assert!((w0 - 66.75).abs() < 1e-9);
        assert!((w1 - 58.69).abs() < 1e-9);
        assert!((w0 - w1 - 8.06).abs() < 1e-9);
        // generation delta 105.41%
        assert!((deltas[0].generation_pct.unwrap() - 105.41).abs() < 1e-9);
    }

    #[test]
    fn point_equal_to_baseline_has_zero_deltas() {
        let baseline = factors(5.0e8, 0.4, 1.0e8);
        let design = SweepDesign {
            mode: SweepMode::FullFactorial,
            solver: SweepSolverChoice::Centralized,
            teb: vec![0.0],
            geb: vec![vec![]],
            carbon_tax: vec![vec![]],
            incentive: vec![vec![]],
        };
        let report = SweepReport {
            design,
            baseline: record_with(usize::MAX, baseline),
            records: vec![record_with(0, baseline)],
            complete: true,
        };
        let deltas = compare_to_baseline(&report).unwrap();
        assert_eq!(deltas[0].vre_share_pp, 0.0);
        assert_eq!(deltas[0].welfare_pct, Some(0.0));
        assert_eq!(deltas[0].generation_pct, Some(0.0));
    }

    #[test]
    fn zero_baseline_generation_flags_undefined_delta() {
        let baseline = factors(1.0, 0.0, 0.0);
        let design = SweepDesign {
            mode: SweepMode::FullFactorial,
            solver: SweepSolverChoice::Centralized,
            teb: vec![0.0],
            geb: vec![vec![]],
            carbon_tax: vec![vec![]],
            incentive: vec![vec![]],
        };
        let report = SweepReport {
            design,
            baseline: record_with(usize::MAX, baseline),
            records: vec![record_with(0, factors(2.0, 0.5, 100.0))],
            complete: true,
        };
        let deltas = compare_to_baseline(&report).unwrap();
        assert!(deltas[0].generation_pct.is_none());
    }

    #[test]
    fn full_factorial_two_levels_each_gives_sixteen_points() {
        let system = three_node_system();
        let design = SweepDesign {
            mode: SweepMode::FullFactorial,
            solver: SweepSolverChoice::Centralized,
            teb: vec![625.0e6 / 365.0, 1.25e9 / 365.0],
            geb: vec![vec![3.0e9, 3.0e9], vec![6.0e9, 6.0e9]],
            carbon_tax: vec![vec![8.0], vec![70.0]],
            incentive: vec![vec![0.05; 3], vec![0.20; 3]],
        };
        design.validate(&system).unwrap();
        assert_eq!(design.points().len(), 16);
    }

    #[test]
    fn univariate_mode_requires_fixed_other_axes() {
        let system = three_node_system();
        let design = SweepDesign {
            mode: SweepMode::Univariate {
                axis: "teb".into(),
            },
            solver: SweepSolverChoice::Centralized,
            teb: vec![1.0e5, 1.0e6],
            geb: vec![vec![1.0e6, 1.0e6], vec![2.0e6, 2.0e6]],
            carbon_tax: vec![vec![0.0]],
            incentive: vec![vec![0.0; 3]],
        };
        assert!(matches!(
            design.validate(&system),
            Err(SweepError::BadDesign(_))
        ));
    }
}
