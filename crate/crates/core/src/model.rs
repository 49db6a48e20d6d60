//! Domain model: nodes, lines, producers, generation units, scenarios,
//! periods, demand curves and policy parameters.
//!
//! All types are immutable after construction and safe to share across
//! threads. Validation is data, not failure: [`validate_system`] returns a
//! report listing every violated invariant.

use serde::{Deserialize, Serialize};

/// Undirected transmission corridor between two nodes (`a < b`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub a: usize,
    pub b: usize,
    /// Installed capacity (MW).
    pub capacity: f64,
    /// Maintenance cost (EUR/MW per planning horizon).
    pub maintenance_cost: f64,
    /// Capacity expansion investment cost (EUR/MW).
    pub investment_cost: f64,
}

/// A conventional generation unit owned by one producer at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvUnit {
    pub node: usize,
    pub producer: usize,
    /// Index into [`EnergySystem::conv_kinds`]; carbon taxes key off this.
    pub kind: usize,
    /// Installed capacity (MW).
    pub installed: f64,
    /// Operational cost (EUR/MWh).
    pub op_cost: f64,
    /// Maintenance cost (EUR/MW per horizon), charged on installed plus
    /// expanded capacity.
    pub maintenance_cost: f64,
    /// Expansion investment cost (EUR/MW).
    pub investment_cost: f64,
    /// Max per-period ramp up/down as a fraction of capacity (1/h).
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Non-expandable units (e.g. hydro) get no expansion variable; their
    /// investment cost never enters budgets or objectives.
    pub expandable: bool,
}

/// A variable-renewable generation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VreUnit {
    pub node: usize,
    pub producer: usize,
    /// Index into [`EnergySystem::vre_kinds`]; availability keys off this.
    pub kind: usize,
    pub installed: f64,
    pub maintenance_cost: f64,
    pub investment_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub name: String,
    /// Duration in hours.
    pub hours: f64,
}

/// Linear inverse demand: price = intercept - slope * q / T_t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandCurve {
    /// EUR/MWh at zero consumption.
    pub intercept: f64,
    /// EUR/MWh^2; must be strictly positive (strict concavity).
    pub slope: f64,
}

/// Immutable description of the planning instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySystem {
    pub nodes: Vec<String>,
    pub producers: Vec<String>,
    pub conv_kinds: Vec<String>,
    pub vre_kinds: Vec<String>,
    pub lines: Vec<Line>,
    pub conventional: Vec<ConvUnit>,
    pub renewables: Vec<VreUnit>,
    pub scenarios: Vec<Scenario>,
    pub periods: Vec<Period>,
    /// Demand curves indexed `[s][t][n]`, flattened.
    pub demand: Vec<DemandCurve>,
    /// Availability factors indexed `[vre kind][s][t][n]`, flattened.
    pub availability: Vec<f64>,
    /// When true, the transmission budget prices both directed copies of each
    /// line (the literal reading of the budget sum); default charges each
    /// undirected line once, consistent with the objective.
    pub budget_double_count: bool,
}

impl EnergySystem {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    pub fn num_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn demand_index(&self, s: usize, t: usize, n: usize) -> usize {
        (s * self.num_periods() + t) * self.num_nodes() + n
    }

    pub fn demand_at(&self, s: usize, t: usize, n: usize) -> DemandCurve {
        self.demand[self.demand_index(s, t, n)]
    }

    pub fn availability_index(&self, kind: usize, s: usize, t: usize, n: usize) -> usize {
        ((kind * self.num_scenarios() + s) * self.num_periods() + t) * self.num_nodes() + n
    }

    /// Availability factor for a VRE unit at (s, t), looked up by its kind
    /// and node.
    pub fn availability_for(&self, unit: &VreUnit, s: usize, t: usize) -> f64 {
        self.availability[self.availability_index(unit.kind, s, t, unit.node)]
    }

    /// Cost charged against the transmission expansion budget for one MW on
    /// `line`. Honors `budget_double_count`.
    pub fn teb_unit_charge(&self, line: &Line) -> f64 {
        if self.budget_double_count {
            2.0 * line.investment_cost
        } else {
            line.investment_cost
        }
    }
}

/// Policy instrument levels applied on top of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    /// Carbon tax (EUR/MWh) per conventional kind.
    pub carbon_tax: Vec<f64>,
    /// Fraction of VRE investment cost subsidized, per node, in [0, 1].
    pub vre_incentive: Vec<f64>,
    /// Transmission expansion budget (EUR).
    pub teb: f64,
    /// Generation expansion budget (EUR) per producer.
    pub geb: Vec<f64>,
}

impl PolicySet {
    /// The all-zero policy for a system (baseline).
    pub fn zero(system: &EnergySystem) -> Self {
        PolicySet {
            carbon_tax: vec![0.0; system.conv_kinds.len()],
            vre_incentive: vec![0.0; system.num_nodes()],
            teb: 0.0,
            geb: vec![0.0; system.producers.len()],
        }
    }
}

/// Parameters after policy application: effective conventional marginal
/// costs (operational + carbon tax) and effective VRE investment costs
/// ((1 - incentive) * investment), plus the budgets passed through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParameters {
    /// Per conventional unit: op_cost + carbon_tax[kind].
    pub conv_marginal_cost: Vec<f64>,
    /// Per VRE unit: (1 - incentive[node]) * investment_cost.
    pub vre_investment_cost: Vec<f64>,
    pub teb: f64,
    pub geb: Vec<f64>,
}

/// One violated invariant with enough location context to fix the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

/// Outcome of [`validate_system`]; violations are data, not failures.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn add(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            location: location.into(),
            message: message.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            write!(f, "valid")
        } else {
            for v in &self.violations {
                writeln!(f, "{}: {}", v.location, v.message)?;
            }
            Ok(())
        }
    }
}

/// Checks every structural invariant of a system. A passing system is
/// accepted by every builder.
pub fn validate_system(system: &EnergySystem) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = system.num_nodes();
    let s_count = system.num_scenarios();
    let t_count = system.num_periods();

    if n == 0 {
        report.add("nodes", "at least one node is required");
    }
    if t_count == 0 {
        report.add("periods", "at least one period is required");
    }
    if s_count == 0 {
        report.add("scenarios", "at least one scenario is required");
    }

    let mut prob_sum = 0.0;
    for (i, sc) in system.scenarios.iter().enumerate() {
        if sc.probability <= 0.0 {
            report.add(
                format!("scenarios[{i}]"),
                format!("probability {} must be strictly positive", sc.probability),
            );
        }
        prob_sum += sc.probability;
    }
    if !system.scenarios.is_empty() && (prob_sum - 1.0).abs() > 1e-12 {
        report.add(
            "scenarios",
            format!("probabilities sum to {prob_sum}, expected 1 within 1e-12"),
        );
    }

    for (i, p) in system.periods.iter().enumerate() {
        if !(p.hours > 0.0) {
            report.add(
                format!("periods[{i}]"),
                format!("duration {} must be strictly positive", p.hours),
            );
        }
    }

    let mut seen_pairs = std::collections::HashSet::new();
    for (i, line) in system.lines.iter().enumerate() {
        let loc = format!("lines[{i}]");
        if line.a >= n || line.b >= n {
            report.add(&loc, "line references a nonexistent node");
            continue;
        }
        if line.a == line.b {
            report.add(&loc, "self-loop lines are not allowed");
        }
        if line.a > line.b {
            report.add(&loc, "line endpoints must be stored with a < b");
        }
        if !seen_pairs.insert((line.a.min(line.b), line.a.max(line.b))) {
            report.add(&loc, "duplicate line for this node pair");
        }
        check_nonneg(&mut report, &loc, "capacity", line.capacity);
        check_nonneg(&mut report, &loc, "maintenance_cost", line.maintenance_cost);
        check_nonneg(&mut report, &loc, "investment_cost", line.investment_cost);
    }

    for (i, u) in system.conventional.iter().enumerate() {
        let loc = format!("conventional[{i}]");
        if u.node >= n {
            report.add(&loc, "unit references a nonexistent node");
        }
        if u.producer >= system.producers.len() {
            report.add(&loc, "unit references a nonexistent producer");
        }
        if u.kind >= system.conv_kinds.len() {
            report.add(&loc, "unit references a nonexistent conventional kind");
        }
        check_nonneg(&mut report, &loc, "installed", u.installed);
        check_nonneg(&mut report, &loc, "op_cost", u.op_cost);
        check_nonneg(&mut report, &loc, "maintenance_cost", u.maintenance_cost);
        check_nonneg(&mut report, &loc, "investment_cost", u.investment_cost);
        check_unit_interval(&mut report, &loc, "ramp_up", u.ramp_up);
        check_unit_interval(&mut report, &loc, "ramp_down", u.ramp_down);
    }

    for (i, u) in system.renewables.iter().enumerate() {
        let loc = format!("renewables[{i}]");
        if u.node >= n {
            report.add(&loc, "unit references a nonexistent node");
        }
        if u.producer >= system.producers.len() {
            report.add(&loc, "unit references a nonexistent producer");
        }
        if u.kind >= system.vre_kinds.len() {
            report.add(&loc, "unit references a nonexistent VRE kind");
        }
        check_nonneg(&mut report, &loc, "installed", u.installed);
        check_nonneg(&mut report, &loc, "maintenance_cost", u.maintenance_cost);
        check_nonneg(&mut report, &loc, "investment_cost", u.investment_cost);
    }

    let expected = s_count * t_count * n;
    if system.demand.len() != expected {
        report.add(
            "demand",
            format!(
                "expected {} demand curves (scenarios x periods x nodes), found {}",
                expected,
                system.demand.len()
            ),
        );
    } else {
        for s in 0..s_count {
            for t in 0..t_count {
                for node in 0..n {
                    let d = system.demand_at(s, t, node);
                    let loc = format!(
                        "demand[{},{},{}]",
                        system.scenarios[s].name, system.periods[t].name, system.nodes[node]
                    );
                    if !(d.slope > 0.0) {
                        report.add(
                            &loc,
                            format!("slope {} must be strictly positive", d.slope),
                        );
                    }
                    if !(d.intercept > 0.0) {
                        report.add(
                            &loc,
                            format!("intercept {} must be strictly positive", d.intercept),
                        );
                    }
                }
            }
        }
    }

    let expected_avail = system.vre_kinds.len() * s_count * t_count * n;
    if system.availability.len() != expected_avail {
        report.add(
            "availability",
            format!(
                "expected {} availability factors (kinds x scenarios x periods x nodes), found {}",
                expected_avail,
                system.availability.len()
            ),
        );
    } else {
        for (i, &a) in system.availability.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                report.add(
                    format!("availability[{i}]"),
                    format!("factor {a} outside [0, 1]"),
                );
            }
        }
    }

    report
}

/// Checks a policy against the system it will be applied to.
pub fn validate_policy(system: &EnergySystem, policy: &PolicySet) -> ValidationReport {
    let mut report = ValidationReport::default();
    if policy.carbon_tax.len() != system.conv_kinds.len() {
        report.add(
            "policy.carbon_tax",
            format!(
                "expected one tax per conventional kind ({}), found {}",
                system.conv_kinds.len(),
                policy.carbon_tax.len()
            ),
        );
    }
    for (i, &tax) in policy.carbon_tax.iter().enumerate() {
        if tax < 0.0 {
            report.add(format!("policy.carbon_tax[{i}]"), "tax must be >= 0");
        }
    }
    if policy.vre_incentive.len() != system.num_nodes() {
        report.add(
            "policy.vre_incentive",
            format!(
                "expected one incentive per node ({}), found {}",
                system.num_nodes(),
                policy.vre_incentive.len()
            ),
        );
    }
    for (i, &sigma) in policy.vre_incentive.iter().enumerate() {
        if !(0.0..=1.0).contains(&sigma) {
            report.add(
                format!("policy.vre_incentive[{i}]"),
                format!("incentive {sigma} outside [0, 1]"),
            );
        }
    }
    if policy.teb < 0.0 {
        report.add("policy.teb", "budget must be >= 0");
    }
    if policy.geb.len() != system.producers.len() {
        report.add(
            "policy.geb",
            format!(
                "expected one budget per producer ({}), found {}",
                system.producers.len(),
                policy.geb.len()
            ),
        );
    }
    for (i, &b) in policy.geb.iter().enumerate() {
        if b < 0.0 {
            report.add(format!("policy.geb[{i}]"), "budget must be >= 0");
        }
    }
    report
}

/// Applies carbon taxes and VRE incentives, yielding effective parameters.
/// Pure and deterministic; inputs must have passed validation.
pub fn apply_policy(system: &EnergySystem, policy: &PolicySet) -> EffectiveParameters {
    let conv_marginal_cost = system
        .conventional
        .iter()
        .map(|u| u.op_cost + policy.carbon_tax[u.kind])
        .collect();
    let vre_investment_cost = system
        .renewables
        .iter()
        .map(|u| (1.0 - policy.vre_incentive[u.node]) * u.investment_cost)
        .collect();
    EffectiveParameters {
        conv_marginal_cost,
        vre_investment_cost,
        teb: policy.teb,
        geb: policy.geb.clone(),
    }
}

fn check_nonneg(report: &mut ValidationReport, loc: &str, field: &str, value: f64) {
    if !(value >= 0.0) {
        report.add(loc, format!("{field} {value} must be >= 0"));
    }
}

fn check_unit_interval(report: &mut ValidationReport, loc: &str, field: &str, value: f64) {
    if !(0.0..=1.0).contains(&value) {
        report.add(loc, format!("{field} {value} outside [0, 1]"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::three_node_system;

    #[test]
    fn three_node_fixture_validates() {
        let system = three_node_system();
        let report = validate_system(&system);
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn probability_sum_violation_detected() {
        let mut system = three_node_system();
        system.scenarios = vec![
            Scenario {
                name: "a".into(),
                probability: 0.5,
            },
            Scenario {
                name: "b".into(),
                probability: 0.4,
            },
        ];
        // duplicate demand/availability blocks for the second scenario
        let d = system.demand.clone();
        system.demand.extend(d);
        let a = system.availability.clone();
        system.availability = a
            .chunks(system.num_periods() * system.num_nodes())
            .flat_map(|block| {
                let mut twice = block.to_vec();
                twice.extend_from_slice(block);
                twice
            })
            .collect();
        let report = validate_system(&system);
        assert!(!report.passed());
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("probabilities sum to 0.9")));
    }

    #[test]
    fn zero_slope_violation_detected() {
        let mut system = three_node_system();
        let idx = system.demand_index(0, 0, 1);
        system.demand[idx].slope = 0.0;
        let report = validate_system(&system);
        assert!(!report.passed());
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("slope 0 must be strictly positive")));
    }

    #[test]
    fn zero_policy_is_identity() {
        let system = three_node_system();
        let eff = apply_policy(&system, &PolicySet::zero(&system));
        for (u, &c) in system.conventional.iter().zip(&eff.conv_marginal_cost) {
            assert_eq!(c, u.op_cost);
        }
        for (u, &c) in system.renewables.iter().zip(&eff.vre_investment_cost) {
            assert_eq!(c, u.investment_cost);
        }
    }

    #[test]
    fn full_subsidy_zeroes_vre_investment() {
        let system = three_node_system();
        let mut policy = PolicySet::zero(&system);
        policy.vre_incentive[1] = 1.0;
        let eff = apply_policy(&system, &policy);
        for (u, &c) in system.renewables.iter().zip(&eff.vre_investment_cost) {
            if u.node == 1 {
                assert_eq!(c, 0.0);
            } else {
                assert_eq!(c, u.investment_cost);
            }
        }
    }

    #[test]
    fn carbon_tax_adds_to_marginal_cost() {
        let system = three_node_system();
        let mut policy = PolicySet::zero(&system);
        policy.carbon_tax[0] = 70.0;
        let eff = apply_policy(&system, &policy);
        for (u, &c) in system.conventional.iter().zip(&eff.conv_marginal_cost) {
            assert_eq!(c, u.op_cost + 70.0);
        }
    }

    #[test]
    fn policy_application_is_monotone() {
        let system = three_node_system();
        let mut lo = PolicySet::zero(&system);
        let mut hi = PolicySet::zero(&system);
        lo.carbon_tax[0] = 10.0;
        hi.carbon_tax[0] = 30.0;
        lo.vre_incentive[2] = 0.2;
        hi.vre_incentive[2] = 0.9;
        let eff_lo = apply_policy(&system, &lo);
        let eff_hi = apply_policy(&system, &hi);
        for (a, b) in eff_lo
            .conv_marginal_cost
            .iter()
            .zip(&eff_hi.conv_marginal_cost)
        {
            assert!(b >= a);
        }
        for (a, b) in eff_lo
            .vre_investment_cost
            .iter()
            .zip(&eff_hi.vre_investment_cost)
        {
            assert!(b <= a);
        }
    }
}
