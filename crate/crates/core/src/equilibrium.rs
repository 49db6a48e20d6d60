//! Perfect-competition market equilibrium for a fixed transmission plan:
//! primal dispatch and expansion decisions, dual prices, output factors and
//! an independent residual check of the first-order optimality system.
//!
//! Sign conventions. The nodal price dual satisfies
//! `theta_{s,t,n} = P_s (D_int - D_slp q / T_t)` wherever consumption is
//! interior; `nodal_price` stores `theta / P_s` so it reads as EUR/MWh.
//! Every inequality dual is nonnegative. The flow-elimination dual of the
//! paper's directed-pair constraint is structurally absorbed by building one
//! flow variable per line and is reported as zero.

use crate::builder::{self, BuildError, BuildOptions, Decision, DecisionIndexMap, RowId};
use crate::model::{EffectiveParameters, EnergySystem};
use crate::solver::{self, QpSolution, SolveStatus, SolverError, SolverSettings};
use serde::{Deserialize, Serialize};

/// Capacity added per undirected line (MW) and its investment cost, charged
/// once per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub additions: Vec<f64>,
    pub investment_cost: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("plan covers {found} lines, system has {expected}")]
    WrongLineCount { expected: usize, found: usize },
    #[error("negative addition {value} on line {line}")]
    Negative { line: usize, value: f64 },
}

impl ExpansionPlan {
    pub fn zero(system: &EnergySystem) -> ExpansionPlan {
        ExpansionPlan {
            additions: vec![0.0; system.lines.len()],
            investment_cost: 0.0,
        }
    }

    pub fn new(system: &EnergySystem, additions: Vec<f64>) -> Result<ExpansionPlan, PlanError> {
        if additions.len() != system.lines.len() {
            return Err(PlanError::WrongLineCount {
                expected: system.lines.len(),
                found: additions.len(),
            });
        }
        for (line, &v) in additions.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(PlanError::Negative { line, value: v });
            }
        }
        let investment_cost = additions
            .iter()
            .zip(&system.lines)
            .map(|(add, l)| add * l.investment_cost)
            .sum();
        Ok(ExpansionPlan {
            additions,
            investment_cost,
        })
    }

    /// Cost charged against the transmission budget; doubles when the system
    /// uses the literal directed-sum reading.
    pub fn budget_charge(&self, system: &EnergySystem) -> f64 {
        if system.budget_double_count {
            2.0 * self.investment_cost
        } else {
            self.investment_cost
        }
    }

    /// Maintenance on installed plus added line capacity, plus the
    /// investment cost: the transmission terms of the welfare objective.
    pub fn transmission_cost(&self, system: &EnergySystem) -> f64 {
        let maintenance: f64 = system
            .lines
            .iter()
            .zip(&self.additions)
            .map(|(l, add)| l.maintenance_cost * (l.capacity + add))
            .sum();
        maintenance + self.investment_cost
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveStats {
    pub status: SolveStatus,
    pub iterations: usize,
    pub polished: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
}

/// Primal decisions and dual multipliers of one market solve.
///
/// Block layouts: `[s][t][n]` for nodal quantities, `[s][t][unit]` for
/// per-unit quantities, `[s][t][line]` for flows, all flattened row-major.
/// Ramp duals exist from the second period on; first-period slots are zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub consumption: Vec<f64>,
    pub conv_generation: Vec<f64>,
    pub vre_generation: Vec<f64>,
    pub flows: Vec<f64>,
    /// Zero for non-expandable units.
    pub conv_expansion: Vec<f64>,
    pub vre_expansion: Vec<f64>,
    /// Balance dual, scenario-probability scaled.
    pub theta: Vec<f64>,
    /// theta / P_s (EUR/MWh).
    pub nodal_price: Vec<f64>,
    pub beta_vre: Vec<f64>,
    pub beta_conv: Vec<f64>,
    pub beta_ramp_up: Vec<f64>,
    pub beta_ramp_down: Vec<f64>,
    pub beta_flow_upper: Vec<f64>,
    pub beta_flow_lower: Vec<f64>,
    /// Directed-pair elimination dual; structurally absorbed, always zero.
    pub lambda_flow: Vec<f64>,
    pub beta_geb: Vec<f64>,
    pub lambda_conv: Vec<f64>,
    pub lambda_vre: Vec<f64>,
    pub lambda_conv_expansion: Vec<f64>,
    pub lambda_vre_expansion: Vec<f64>,
    /// Transmission budget dual; present on centralized-derived outcomes.
    pub teb_dual: Option<f64>,
    /// Market objective value (profit terms plus generation maintenance
    /// constants; no transmission terms).
    pub objective_value: f64,
    pub stats: SolveStats,
}

/// The three reported output factors.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OutputFactors {
    /// Welfare: market objective minus all transmission costs of the plan
    /// (maintenance on installed plus added capacity, plus investment).
    pub welfare: f64,
    /// Probability-weighted VRE share of total generation, in [0, 1].
    pub vre_share: f64,
    /// Probability-weighted total generation (MWh).
    pub total_generation: f64,
    /// Set when total generation is zero and the share is reported as 0.
    pub degenerate_share: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum MarketError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solve ended {status:?} (primal {primal:.3e}, dual {dual:.3e}); the market problem is always feasible, so this is a numerical failure")]
    NotOptimal {
        status: SolveStatus,
        primal: f64,
        dual: f64,
    },
}

/// Solves the market problem for a fixed plan and extracts the outcome.
pub fn solve_market(
    system: &EnergySystem,
    effective: &EffectiveParameters,
    plan: &ExpansionPlan,
    settings: &SolverSettings,
) -> Result<MarketOutcome, MarketError> {
    let (qp, map) = builder::build_lower_level(system, effective, plan, &BuildOptions::default())?;
    let solution = solver::solve_qp(&qp, settings)?;
    if solution.status != SolveStatus::Optimal {
        return Err(MarketError::NotOptimal {
            status: solution.status,
            primal: solution.residuals.primal,
            dual: solution.residuals.dual,
        });
    }
    Ok(outcome_from_solution(system, &map, &solution))
}

/// Centralized solution: jointly optimal plan plus the market-shaped
/// decisions and duals at that plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralSolution {
    pub plan: ExpansionPlan,
    pub outcome: MarketOutcome,
    /// Optimal value of the centralized objective (equals welfare).
    pub objective_value: f64,
}

/// Solves the centralized planning problem. The returned outcome carries the
/// transmission budget dual; its `objective_value` is normalized to the
/// market objective at the optimal plan (centralized value plus the plan's
/// transmission costs).
pub fn solve_central(
    system: &EnergySystem,
    effective: &EffectiveParameters,
    settings: &SolverSettings,
) -> Result<CentralSolution, MarketError> {
    let (qp, map) = builder::build_centralized(system, effective, &BuildOptions::default())?;
    let solution = solver::solve_qp(&qp, settings)?;
    if solution.status != SolveStatus::Optimal {
        return Err(MarketError::NotOptimal {
            status: solution.status,
            primal: solution.residuals.primal,
            dual: solution.residuals.dual,
        });
    }
    let mut additions = vec![0.0; system.lines.len()];
    for line in 0..system.lines.len() {
        let idx = map.index_of(Decision::LineExpansion { line }).unwrap();
        additions[line] = solution.primal[idx].max(0.0);
    }
    let plan = ExpansionPlan::new(system, additions).expect("plan from solution");
    let mut outcome = outcome_from_solution(system, &map, &solution);
    outcome.teb_dual = map
        .row_index_of(RowId::TransmissionBudget)
        .map(|r| solution.row_duals[r]);
    // centralized objective includes the transmission terms; the market
    // objective does not
    outcome.objective_value = solution.objective + plan.transmission_cost(system);
    Ok(CentralSolution {
        plan,
        outcome,
        objective_value: solution.objective,
    })
}

/// Reads a solved QP back into a [`MarketOutcome`] through the index map.
/// Nonnegative primal blocks are clamped at zero (the polish step can leave
/// residue at the 1e-12 level).
pub fn outcome_from_solution(
    system: &EnergySystem,
    map: &DecisionIndexMap,
    solution: &QpSolution,
) -> MarketOutcome {
    let s_count = system.num_scenarios();
    let t_count = system.num_periods();
    let n_count = system.num_nodes();
    let conv_count = system.conventional.len();
    let vre_count = system.renewables.len();
    let line_count = system.lines.len();

    let stn = s_count * t_count * n_count;
    let stu_c = s_count * t_count * conv_count;
    let stu_v = s_count * t_count * vre_count;
    let stl = s_count * t_count * line_count;
    let idx_stn = |s: usize, t: usize, n: usize| (s * t_count + t) * n_count + n;
    let idx_stc = |s: usize, t: usize, u: usize| (s * t_count + t) * conv_count + u;
    let idx_stv = |s: usize, t: usize, u: usize| (s * t_count + t) * vre_count + u;
    let idx_stl = |s: usize, t: usize, l: usize| (s * t_count + t) * line_count + l;

    let mut out = MarketOutcome {
        consumption: vec![0.0; stn],
        conv_generation: vec![0.0; stu_c],
        vre_generation: vec![0.0; stu_v],
        flows: vec![0.0; stl],
        conv_expansion: vec![0.0; conv_count],
        vre_expansion: vec![0.0; vre_count],
        theta: vec![0.0; stn],
        nodal_price: vec![0.0; stn],
        beta_vre: vec![0.0; stu_v],
        beta_conv: vec![0.0; stu_c],
        beta_ramp_up: vec![0.0; stu_c],
        beta_ramp_down: vec![0.0; stu_c],
        beta_flow_upper: vec![0.0; stl],
        beta_flow_lower: vec![0.0; stl],
        lambda_flow: vec![0.0; stl],
        beta_geb: vec![0.0; system.producers.len()],
        lambda_conv: vec![0.0; stu_c],
        lambda_vre: vec![0.0; stu_v],
        lambda_conv_expansion: vec![0.0; conv_count],
        lambda_vre_expansion: vec![0.0; vre_count],
        teb_dual: None,
        objective_value: solution.objective,
        stats: SolveStats {
            status: solution.status,
            iterations: solution.iterations,
            polished: solution.polished,
            primal_residual: solution.residuals.primal,
            dual_residual: solution.residuals.dual,
            duality_gap: solution.residuals.gap,
        },
    };

    for s in 0..s_count {
        let prob = system.scenarios[s].probability;
        for t in 0..t_count {
            for n in 0..n_count {
                let v = map.index_of(Decision::Consumption { s, t, n }).unwrap();
                out.consumption[idx_stn(s, t, n)] = solution.primal[v].max(0.0);
                let r = map.row_index_of(RowId::Balance { s, t, n }).unwrap();
                let theta = solution.row_duals[r];
                out.theta[idx_stn(s, t, n)] = theta;
                out.nodal_price[idx_stn(s, t, n)] = theta / prob;
            }
            for unit in 0..conv_count {
                let v = map
                    .index_of(Decision::ConvGeneration { s, t, unit })
                    .unwrap();
                out.conv_generation[idx_stc(s, t, unit)] = solution.primal[v].max(0.0);
                out.lambda_conv[idx_stc(s, t, unit)] = (-solution.bound_duals[v]).max(0.0);
                let r = map.row_index_of(RowId::ConvCapacity { s, t, unit }).unwrap();
                out.beta_conv[idx_stc(s, t, unit)] = solution.row_duals[r];
                if let Some(r) = map.row_index_of(RowId::RampUp { s, t, unit }) {
                    out.beta_ramp_up[idx_stc(s, t, unit)] = solution.row_duals[r];
                }
                if let Some(r) = map.row_index_of(RowId::RampDown { s, t, unit }) {
                    out.beta_ramp_down[idx_stc(s, t, unit)] = solution.row_duals[r];
                }
            }
            for unit in 0..vre_count {
                let v = map.index_of(Decision::VreGeneration { s, t, unit }).unwrap();
                out.vre_generation[idx_stv(s, t, unit)] = solution.primal[v].max(0.0);
                out.lambda_vre[idx_stv(s, t, unit)] = (-solution.bound_duals[v]).max(0.0);
                let r = map.row_index_of(RowId::VreCapacity { s, t, unit }).unwrap();
                out.beta_vre[idx_stv(s, t, unit)] = solution.row_duals[r];
            }
            for line in 0..line_count {
                let v = map.index_of(Decision::Flow { s, t, line }).unwrap();
                out.flows[idx_stl(s, t, line)] = solution.primal[v];
                let r = map.row_index_of(RowId::FlowUpper { s, t, line }).unwrap();
                out.beta_flow_upper[idx_stl(s, t, line)] = solution.row_duals[r];
                let r = map.row_index_of(RowId::FlowLower { s, t, line }).unwrap();
                out.beta_flow_lower[idx_stl(s, t, line)] = solution.row_duals[r];
            }
        }
    }
    for unit in 0..conv_count {
        if let Some(v) = map.index_of(Decision::ConvExpansion { unit }) {
            out.conv_expansion[unit] = solution.primal[v].max(0.0);
            out.lambda_conv_expansion[unit] = (-solution.bound_duals[v]).max(0.0);
        }
    }
    for unit in 0..vre_count {
        let v = map.index_of(Decision::VreExpansion { unit }).unwrap();
        out.vre_expansion[unit] = solution.primal[v].max(0.0);
        out.lambda_vre_expansion[unit] = (-solution.bound_duals[v]).max(0.0);
    }
    for producer in 0..system.producers.len() {
        if let Some(r) = map.row_index_of(RowId::GenerationBudget { producer }) {
            out.beta_geb[producer] = solution.row_duals[r];
        }
    }
    out
}

/// Computes the three output factors from a solved outcome.
pub fn output_factors(
    system: &EnergySystem,
    _effective: &EffectiveParameters,
    plan: &ExpansionPlan,
    outcome: &MarketOutcome,
) -> OutputFactors {
    let s_count = system.num_scenarios();
    let t_count = system.num_periods();
    let conv_count = system.conventional.len();
    let vre_count = system.renewables.len();
    let mut conv_total = 0.0;
    let mut vre_total = 0.0;
    for s in 0..s_count {
        let prob = system.scenarios[s].probability;
        for t in 0..t_count {
            for u in 0..conv_count {
                conv_total += prob * outcome.conv_generation[(s * t_count + t) * conv_count + u];
            }
            for u in 0..vre_count {
                vre_total += prob * outcome.vre_generation[(s * t_count + t) * vre_count + u];
            }
        }
    }
    // anything below 1e-9 MWh is numerical residue, not generation
    let total = conv_total + vre_total;
    let (share, degenerate) = if total > 1e-9 {
        ((vre_total / total).clamp(0.0, 1.0), false)
    } else {
        (0.0, true)
    };
    OutputFactors {
        welfare: outcome.objective_value - plan.transmission_cost(system),
        vre_share: share,
        total_generation: total,
        degenerate_share: degenerate,
    }
}

/// Per-condition maximum residuals of the first-order optimality system,
/// re-derived from raw data independently of the solver.
///
/// Stationarity residuals are raw absolute values. Complementarity residuals
/// are `|dual * slack| / (1 + |bound|)`. Primal residuals are violations
/// normalized by `1 + |bound|` (balance rows by one plus the largest term).
/// `dual_sign` is the worst negative inequality dual, as a positive number.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity_consumption: f64,
    pub stationarity_conv: f64,
    pub stationarity_vre: f64,
    pub stationarity_conv_expansion: f64,
    pub stationarity_vre_expansion: f64,
    pub stationarity_flow: f64,
    pub complementarity_teb: Option<f64>,
    pub complementarity_geb: f64,
    pub complementarity_vre_cap: f64,
    pub complementarity_conv_cap: f64,
    pub complementarity_ramp_up: f64,
    pub complementarity_ramp_down: f64,
    pub complementarity_flow_upper: f64,
    pub complementarity_flow_lower: f64,
    pub complementarity_nonneg: f64,
    pub primal_balance: f64,
    pub primal_inequalities: f64,
    pub dual_sign: f64,
}

impl KktReport {
    pub fn worst(&self) -> f64 {
        let mut w = self
            .stationarity_consumption
            .max(self.stationarity_conv)
            .max(self.stationarity_vre)
            .max(self.stationarity_conv_expansion)
            .max(self.stationarity_vre_expansion)
            .max(self.stationarity_flow)
            .max(self.complementarity_geb)
            .max(self.complementarity_vre_cap)
            .max(self.complementarity_conv_cap)
            .max(self.complementarity_ramp_up)
            .max(self.complementarity_ramp_down)
            .max(self.complementarity_flow_upper)
            .max(self.complementarity_flow_lower)
            .max(self.complementarity_nonneg)
            .max(self.primal_balance)
            .max(self.primal_inequalities)
            .max(self.dual_sign);
        if let Some(teb) = self.complementarity_teb {
            w = w.max(teb);
        }
        w
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.worst() <= tolerance
    }
}

/// Evaluates every stationarity equation and complementarity product of the
/// market optimality system at the given outcome. Pure; never touches the
/// QP builder or the solver.
pub fn kkt_residuals(
    system: &EnergySystem,
    effective: &EffectiveParameters,
    plan: &ExpansionPlan,
    outcome: &MarketOutcome,
) -> KktReport {
    let s_count = system.num_scenarios();
    let t_count = system.num_periods();
    let n_count = system.num_nodes();
    let conv_count = system.conventional.len();
    let vre_count = system.renewables.len();
    let line_count = system.lines.len();
    let idx_stn = |s: usize, t: usize, n: usize| (s * t_count + t) * n_count + n;
    let idx_stc = |s: usize, t: usize, u: usize| (s * t_count + t) * conv_count + u;
    let idx_stv = |s: usize, t: usize, u: usize| (s * t_count + t) * vre_count + u;
    let idx_stl = |s: usize, t: usize, l: usize| (s * t_count + t) * line_count + l;

    let mut report = KktReport {
        stationarity_consumption: 0.0,
        stationarity_conv: 0.0,
        stationarity_vre: 0.0,
        stationarity_conv_expansion: 0.0,
        stationarity_vre_expansion: 0.0,
        stationarity_flow: 0.0,
        complementarity_teb: None,
        complementarity_geb: 0.0,
        complementarity_vre_cap: 0.0,
        complementarity_conv_cap: 0.0,
        complementarity_ramp_up: 0.0,
        complementarity_ramp_down: 0.0,
        complementarity_flow_upper: 0.0,
        complementarity_flow_lower: 0.0,
        complementarity_nonneg: 0.0,
        primal_balance: 0.0,
        primal_inequalities: 0.0,
        dual_sign: 0.0,
    };
    let mut worst_negative_dual: f64 = 0.0;
    let mut track_sign = |d: f64| {
        if -d > worst_negative_dual {
            worst_negative_dual = -d;
        }
    };

    for s in 0..s_count {
        let prob = system.scenarios[s].probability;
        for t in 0..t_count {
            let hours = system.periods[t].hours;
            for n in 0..n_count {
                let i = idx_stn(s, t, n);
                let q = outcome.consumption[i];
                let curve = system.demand_at(s, t, n);
                // stationarity in q (the model has no multiplier on q >= 0)
                let res = prob * (curve.intercept - curve.slope * q / hours) - outcome.theta[i];
                report.stationarity_consumption = report.stationarity_consumption.max(res.abs());

                // balance
                let mut bal = q;
                let mut scale = 1.0 + q.abs();
                for (u, unit) in system.conventional.iter().enumerate() {
                    if unit.node == n {
                        let g = outcome.conv_generation[idx_stc(s, t, u)];
                        bal -= g;
                        scale += g.abs();
                    }
                }
                for (u, unit) in system.renewables.iter().enumerate() {
                    if unit.node == n {
                        let g = outcome.vre_generation[idx_stv(s, t, u)];
                        bal -= g;
                        scale += g.abs();
                    }
                }
                for (l, line) in system.lines.iter().enumerate() {
                    if line.a == n {
                        let f = outcome.flows[idx_stl(s, t, l)];
                        bal += f;
                        scale += f.abs();
                    } else if line.b == n {
                        let f = outcome.flows[idx_stl(s, t, l)];
                        bal -= f;
                        scale += f.abs();
                    }
                }
                report.primal_balance = report.primal_balance.max(bal.abs() / scale);
            }

            for (u, unit) in system.conventional.iter().enumerate() {
                let i = idx_stc(s, t, u);
                let g = outcome.conv_generation[i];
                let theta = outcome.theta[idx_stn(s, t, unit.node)];
                let mut res = -prob * effective.conv_marginal_cost[u] + theta
                    - outcome.beta_conv[i]
                    + outcome.lambda_conv[i];
                if t >= 1 {
                    res -= outcome.beta_ramp_up[i];
                    res += outcome.beta_ramp_down[i];
                }
                if t + 1 < t_count {
                    let next = idx_stc(s, t + 1, u);
                    res += outcome.beta_ramp_up[next];
                    res -= outcome.beta_ramp_down[next];
                }
                report.stationarity_conv = report.stationarity_conv.max(res.abs());

                // capacity complementarity and primal feasibility
                let cap = hours * (unit.installed + outcome.conv_expansion[u]);
                let slack = cap - g;
                let bound = hours * unit.installed;
                report.complementarity_conv_cap = report
                    .complementarity_conv_cap
                    .max((outcome.beta_conv[i] * slack).abs() / (1.0 + bound.abs()));
                report.primal_inequalities = report
                    .primal_inequalities
                    .max((-slack).max(0.0) / (1.0 + bound.abs()))
                    .max((-g).max(0.0));
                track_sign(outcome.beta_conv[i]);
                track_sign(outcome.lambda_conv[i]);
                report.complementarity_nonneg = report
                    .complementarity_nonneg
                    .max((outcome.lambda_conv[i] * g).abs() / (1.0 + g.abs()));

                if t >= 1 {
                    let prev = outcome.conv_generation[idx_stc(s, t - 1, u)];
                    let up_bound = hours * unit.ramp_up * (unit.installed + outcome.conv_expansion[u]);
                    let up_slack = up_bound - (g - prev);
                    report.complementarity_ramp_up = report.complementarity_ramp_up.max(
                        (outcome.beta_ramp_up[i] * up_slack).abs()
                            / (1.0 + (hours * unit.ramp_up * unit.installed).abs()),
                    );
                    let dn_bound =
                        hours * unit.ramp_down * (unit.installed + outcome.conv_expansion[u]);
                    let dn_slack = dn_bound - (prev - g);
                    report.complementarity_ramp_down = report.complementarity_ramp_down.max(
                        (outcome.beta_ramp_down[i] * dn_slack).abs()
                            / (1.0 + (hours * unit.ramp_down * unit.installed).abs()),
                    );
                    report.primal_inequalities = report
                        .primal_inequalities
                        .max((-up_slack).max(0.0) / (1.0 + up_bound.abs()))
                        .max((-dn_slack).max(0.0) / (1.0 + dn_bound.abs()));
                    track_sign(outcome.beta_ramp_up[i]);
                    track_sign(outcome.beta_ramp_down[i]);
                }
            }

            for (u, unit) in system.renewables.iter().enumerate() {
                let i = idx_stv(s, t, u);
                let g = outcome.vre_generation[i];
                let theta = outcome.theta[idx_stn(s, t, unit.node)];
                let res = theta - outcome.beta_vre[i] + outcome.lambda_vre[i];
                report.stationarity_vre = report.stationarity_vre.max(res.abs());

                let avail = system.availability_for(unit, s, t);
                let cap = hours * avail * (unit.installed + outcome.vre_expansion[u]);
                let slack = cap - g;
                let bound = hours * avail * unit.installed;
                report.complementarity_vre_cap = report
                    .complementarity_vre_cap
                    .max((outcome.beta_vre[i] * slack).abs() / (1.0 + bound.abs()));
                report.primal_inequalities = report
                    .primal_inequalities
                    .max((-slack).max(0.0) / (1.0 + bound.abs()))
                    .max((-g).max(0.0));
                track_sign(outcome.beta_vre[i]);
                track_sign(outcome.lambda_vre[i]);
                report.complementarity_nonneg = report
                    .complementarity_nonneg
                    .max((outcome.lambda_vre[i] * g).abs() / (1.0 + g.abs()));
            }

            for (l, line) in system.lines.iter().enumerate() {
                let i = idx_stl(s, t, l);
                let f = outcome.flows[i];
                let theta_a = outcome.theta[idx_stn(s, t, line.a)];
                let theta_b = outcome.theta[idx_stn(s, t, line.b)];
                let res =
                    theta_b - theta_a - outcome.beta_flow_upper[i] + outcome.beta_flow_lower[i];
                report.stationarity_flow = report.stationarity_flow.max(res.abs());

                let cap = hours * (line.capacity + plan.additions[l]);
                let up_slack = cap - f;
                let lo_slack = cap + f;
                report.complementarity_flow_upper = report
                    .complementarity_flow_upper
                    .max((outcome.beta_flow_upper[i] * up_slack).abs() / (1.0 + cap.abs()));
                report.complementarity_flow_lower = report
                    .complementarity_flow_lower
                    .max((outcome.beta_flow_lower[i] * lo_slack).abs() / (1.0 + cap.abs()));
                report.primal_inequalities = report
                    .primal_inequalities
                    .max((-up_slack).max(0.0) / (1.0 + cap.abs()))
                    .max((-lo_slack).max(0.0) / (1.0 + cap.abs()));
                track_sign(outcome.beta_flow_upper[i]);
                track_sign(outcome.beta_flow_lower[i]);
            }
        }
    }

    // expansion stationarity and budget complementarity
    let mut spend = vec![0.0; system.producers.len()];
    for (u, unit) in system.conventional.iter().enumerate() {
        if !unit.expandable {
            continue;
        }
        spend[unit.producer] += unit.investment_cost * outcome.conv_expansion[u];
        let mut res = -(unit.maintenance_cost + unit.investment_cost)
            - outcome.beta_geb[unit.producer] * unit.investment_cost
            + outcome.lambda_conv_expansion[u];
        for s in 0..s_count {
            for t in 0..t_count {
                let hours = system.periods[t].hours;
                res += outcome.beta_conv[idx_stc(s, t, u)] * hours;
                if t >= 1 {
                    res += outcome.beta_ramp_up[idx_stc(s, t, u)] * hours * unit.ramp_up;
                    res += outcome.beta_ramp_down[idx_stc(s, t, u)] * hours * unit.ramp_down;
                }
            }
        }
        report.stationarity_conv_expansion = report.stationarity_conv_expansion.max(res.abs());
        track_sign(outcome.lambda_conv_expansion[u]);
        let e = outcome.conv_expansion[u];
        report.complementarity_nonneg = report
            .complementarity_nonneg
            .max((outcome.lambda_conv_expansion[u] * e).abs() / (1.0 + e.abs()));
        report.primal_inequalities = report.primal_inequalities.max((-e).max(0.0));
    }
    for (u, unit) in system.renewables.iter().enumerate() {
        spend[unit.producer] += effective.vre_investment_cost[u] * outcome.vre_expansion[u];
        let mut res = -(unit.maintenance_cost + effective.vre_investment_cost[u])
            - outcome.beta_geb[unit.producer] * effective.vre_investment_cost[u]
            + outcome.lambda_vre_expansion[u];
        for s in 0..s_count {
            for t in 0..t_count {
                let hours = system.periods[t].hours;
                let avail = system.availability_for(unit, s, t);
                res += outcome.beta_vre[idx_stv(s, t, u)] * hours * avail;
            }
        }
        report.stationarity_vre_expansion = report.stationarity_vre_expansion.max(res.abs());
        track_sign(outcome.lambda_vre_expansion[u]);
        let e = outcome.vre_expansion[u];
        report.complementarity_nonneg = report
            .complementarity_nonneg
            .max((outcome.lambda_vre_expansion[u] * e).abs() / (1.0 + e.abs()));
        report.primal_inequalities = report.primal_inequalities.max((-e).max(0.0));
    }
    for producer in 0..system.producers.len() {
        let slack = effective.geb[producer] - spend[producer];
        report.complementarity_geb = report
            .complementarity_geb
            .max((outcome.beta_geb[producer] * slack).abs() / (1.0 + effective.geb[producer].abs()));
        report.primal_inequalities = report
            .primal_inequalities
            .max((-slack).max(0.0) / (1.0 + effective.geb[producer].abs()));
        track_sign(outcome.beta_geb[producer]);
    }
    if let Some(teb_dual) = outcome.teb_dual {
        let slack = effective.teb - plan.budget_charge(system);
        report.complementarity_teb =
            Some((teb_dual * slack).abs() / (1.0 + effective.teb.abs()));
        report.primal_inequalities = report
            .primal_inequalities
            .max((-slack).max(0.0) / (1.0 + effective.teb.abs()));
        track_sign(teb_dual);
    }

    report.dual_sign = worst_negative_dual.max(0.0);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{apply_policy, PolicySet};
    use crate::testing::{single_node_system, three_node_policy, three_node_system};

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn scalar_market_matches_hand_kkt() {
        // cap 1 MW, C = 10, D_int = 260, D_slp = 0.04, T = 1, P = 1:
        // q = g = 1, theta = 259.96, beta = 249.96
        let system = single_node_system();
        let mut policy = PolicySet::zero(&system);
        policy.geb = vec![0.0];
        let effective = apply_policy(&system, &policy);
        let plan = ExpansionPlan::zero(&system);
        let outcome = solve_market(&system, &effective, &plan, &settings()).unwrap();
        assert!((outcome.consumption[0] - 1.0).abs() < 1e-7, "{outcome:?}");
        assert!((outcome.conv_generation[0] - 1.0).abs() < 1e-7);
        assert!((outcome.theta[0] - 259.96).abs() < 1e-6);
        assert!((outcome.beta_conv[0] - 249.96).abs() < 1e-6);
        let report = kkt_residuals(&system, &effective, &plan, &outcome);
        assert!(report.passes(1e-6), "{report:#?}");
    }

    #[test]
    fn zero_capacity_zero_budget_has_no_supply() {
        let mut system = three_node_system();
        for u in system.conventional.iter_mut() {
            u.installed = 0.0;
        }
        for u in system.renewables.iter_mut() {
            u.installed = 0.0;
        }
        let policy = PolicySet::zero(&system); // budgets zero too
        let effective = apply_policy(&system, &policy);
        let plan = ExpansionPlan::zero(&system);
        let outcome = solve_market(&system, &effective, &plan, &settings()).unwrap();
        assert!(outcome.consumption.iter().all(|q| q.abs() < 1e-6));
        assert!(outcome.conv_generation.iter().all(|g| g.abs() < 1e-6));
        // welfare = -(maintenance constants): generation constants are zero
        // with nothing installed, line maintenance on 3 x 1 MW remains
        let factors = output_factors(&system, &effective, &plan, &outcome);
        let line_maintenance = 3.0 * 2000.0;
        assert!(
            (factors.welfare + line_maintenance).abs() < 1e-6,
            "welfare {}",
            factors.welfare
        );
        assert!(factors.total_generation.abs() < 1e-9);
        assert!(factors.degenerate_share);
        assert_eq!(factors.vre_share, 0.0);
    }

    #[test]
    fn market_at_zero_plan_matches_centralized_with_zero_lines() {
        // with the transmission budget unable to fund anything, the
        // centralized solution fixes l+ = 0 and must equal the market value
        let system = three_node_system();
        let mut policy = three_node_policy();
        policy.teb = 0.0;
        let effective = apply_policy(&system, &policy);
        let central = solve_central(&system, &effective, &settings()).unwrap();
        assert!(central.plan.additions.iter().all(|&a| a < 1e-7));
        let plan = ExpansionPlan::zero(&system);
        let market = solve_market(&system, &effective, &plan, &settings()).unwrap();
        let market_welfare =
            output_factors(&system, &effective, &plan, &market).welfare;
        let rel = (central.objective_value - market_welfare).abs()
            / central.objective_value.abs().max(1.0);
        assert!(rel < 1e-6, "central {} market {}", central.objective_value, market_welfare);
    }

    #[test]
    fn nesting_identity_on_three_node_fixture() {
        // lower-level optimum at the centralized plan, plus transmission
        // costs of the plan, equals the centralized optimum
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let central = solve_central(&system, &effective, &settings()).unwrap();
        let market = solve_market(&system, &effective, &central.plan, &settings()).unwrap();
        let welfare = market.objective_value - central.plan.transmission_cost(&system);
        let rel = (welfare - central.objective_value).abs()
            / central.objective_value.abs().max(1.0);
        assert!(
            rel < 1e-6,
            "market-derived welfare {welfare} vs centralized {}",
            central.objective_value
        );
    }

    #[test]
    fn solver_outcome_passes_kkt_at_1e6() {
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let plan = ExpansionPlan::zero(&system);
        let outcome = solve_market(&system, &effective, &plan, &settings()).unwrap();
        let report = kkt_residuals(&system, &effective, &plan, &outcome);
        assert!(report.passes(1e-6), "{report:#?}");
    }

    #[test]
    fn price_consistency_where_consumption_positive() {
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let plan = ExpansionPlan::zero(&system);
        let outcome = solve_market(&system, &effective, &plan, &settings()).unwrap();
        for s in 0..1 {
            for t in 0..2 {
                for n in 0..3 {
                    let i = (s * 2 + t) * 3 + n;
                    let q = outcome.consumption[i];
                    if q > 1e-6 {
                        let curve = system.demand_at(s, t, n);
                        let expect =
                            curve.intercept - curve.slope * q / system.periods[t].hours;
                        assert!(
                            (outcome.nodal_price[i] - expect).abs() < 1e-6,
                            "node {n}: price {} vs inverse demand {expect}",
                            outcome.nodal_price[i]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn perturbed_theta_shows_unit_residual() {
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let plan = ExpansionPlan::zero(&system);
        let mut outcome = solve_market(&system, &effective, &plan, &settings()).unwrap();
        let base = kkt_residuals(&system, &effective, &plan, &outcome);
        outcome.theta[2] += 1.0;
        let report = kkt_residuals(&system, &effective, &plan, &outcome);
        assert!((report.stationarity_consumption - 1.0).abs() < 1e-6 + base.stationarity_consumption);
        assert!(!report.passes(1e-6));
    }

    #[test]
    fn forced_zero_capacity_dual_breaks_stationarity_only() {
        // binding VRE row with its dual forced to zero: complementarity
        // still holds (product ~ 0) but VRE stationarity must fail unless
        // marginal revenue happens to be zero
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let plan = ExpansionPlan::zero(&system);
        let mut outcome = solve_market(&system, &effective, &plan, &settings()).unwrap();
        // find a binding VRE row with a positive dual
        let i = outcome
            .beta_vre
            .iter()
            .position(|&b| b > 1e-3)
            .expect("some VRE capacity binds in the fixture");
        outcome.beta_vre[i] = 0.0;
        let report = kkt_residuals(&system, &effective, &plan, &outcome);
        assert!(report.complementarity_vre_cap < 1e-6);
        assert!(report.stationarity_vre > 1e-3, "{report:#?}");
    }

    #[test]
    fn budget_monotonicity_in_geb() {
        let system = three_node_system();
        let mut lo_policy = three_node_policy();
        lo_policy.geb = vec![1.0e6, 1.0e6];
        let mut hi_policy = three_node_policy();
        hi_policy.geb = vec![5.0e6, 5.0e6];
        let plan = ExpansionPlan::zero(&system);
        let lo = solve_market(&system, &apply_policy(&system, &lo_policy), &plan, &settings())
            .unwrap();
        let hi = solve_market(&system, &apply_policy(&system, &hi_policy), &plan, &settings())
            .unwrap();
        assert!(hi.objective_value >= lo.objective_value - 1e-6 * lo.objective_value.abs());
    }
}
